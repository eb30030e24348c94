//! Pinned Poisson sampler: sequential inversion below mean 10, Hörmann's
//! transformed rejection (PTRS) at and above.

use rand::Rng;

const LOG_FACTORIAL_TABLE: [f64; 10] = [
    0.0,
    0.0,
    0.693_147_180_559_945_3,
    1.791_759_469_228_055,
    3.178_053_830_347_945_6,
    4.787_491_742_782_046,
    6.579_251_212_010_101,
    8.525_161_361_065_415,
    10.604_602_902_745_25,
    12.801_827_480_081_469,
];

/// `ln(k!)`: table below 10, Stirling series above.
pub fn log_factorial(k: u64) -> f64 {
    if (k as usize) < LOG_FACTORIAL_TABLE.len() {
        return LOG_FACTORIAL_TABLE[k as usize];
    }
    let x = k as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Draw from Poisson(`mean`). `mean` must be finite and nonnegative.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 10.0 {
        inversion(mean, rng)
    } else {
        ptrs(mean, rng)
    }
}

fn inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.gen();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

fn ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - log_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_factorial_matches_direct_sum() {
        for k in 0..200u64 {
            let direct: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
            assert!((log_factorial(k) - direct).abs() < 1e-10 * direct.max(1.0), "k = {k}");
        }
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| sample_poisson(0.0, &mut rng) == 0));
    }

    #[test]
    fn moments_on_both_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &mean in &[0.3, 4.0, 9.99, 10.0, 37.5, 400.0] {
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| sample_poisson(mean, &mut rng) as f64).collect();
            let m = draws.iter().sum::<f64>() / n as f64;
            let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "mean {mean}: got {m}");
            assert!((v / mean - 1.0).abs() < 0.05, "mean {mean}: variance {v}");
        }
    }

    #[test]
    fn pmf_matches_at_small_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mean = 2.5;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            let k = sample_poisson(mean, &mut rng) as usize;
            if k < counts.len() {
                counts[k] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = (-mean + k as f64 * f64::ln(mean) - log_factorial(k as u64)).exp();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 5.0 * se + 1e-4, "k = {k}");
        }
    }
}
