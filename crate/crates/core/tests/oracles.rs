//! Independent reference computations for the kernel and linear-algebra
//! layer: brute-force gradient covariance, finite differences, inertia-based
//! eigenvalues and a Gauss-Jordan inverse.

use lgkdr_core::gkdr::GradientOperator;
use lgkdr_core::linalg::{
    gaussian_kernel, gram_matrix, kernel_gradient, regularized_solve, sym_eig, sym_eig_top_d, KernelParams,
    SymmetricMatrix,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Gradient covariance at anchor `i`, written as the explicit double sum
/// `Σ_ab ∂k(s_a, s_i) C_ab ∂k(s_b, s_i)ᵀ` with scalar loops throughout.
fn brute_force_local(points: &[Vec<f64>], responses: &[Vec<f64>], kp: &KernelParams, i: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let m = points[0].len();
    let k = |a: &[f64], b: &[f64], sigma: f64| -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (-d2 / (sigma * sigma)).exp()
    };
    let mut reg = vec![vec![0.0; n]; n];
    let mut gt = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            reg[a][b] = k(&points[a], &points[b], kp.sigma_s) + if a == b { n as f64 * kp.eps_n } else { 0.0 };
            gt[a][b] = k(&responses[a], &responses[b], kp.sigma_theta);
        }
    }
    let inv = gauss_jordan_inverse(&reg);
    let mut core = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let mut v = 0.0;
            for c in 0..n {
                for d in 0..n {
                    v += inv[a][c] * gt[c][d] * inv[d][b];
                }
            }
            core[a][b] = v;
        }
    }
    let s2 = kp.sigma_s * kp.sigma_s;
    let grad: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let kv = k(&points[a], &points[i], kp.sigma_s);
            (0..m).map(|c| 2.0 / s2 * (points[a][c] - points[i][c]) * kv).collect()
        })
        .collect();
    let mut out = vec![vec![0.0; m]; m];
    for (p, row) in out.iter_mut().enumerate() {
        for (q, v) in row.iter_mut().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    *v += grad[a][p] * core[a][b] * grad[b][q];
                }
            }
        }
    }
    out
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

#[test]
fn local_gradient_matrix_matches_brute_force_on_five_points() {
    let points: Vec<Vec<f64>> = [-1.3, -0.2, 0.4, 0.9, 2.1].iter().map(|v| vec![*v]).collect();
    let responses: Vec<Vec<f64>> = [0.5, -0.1, 0.8, 1.7, -0.9].iter().map(|v| vec![*v]).collect();
    let kp = KernelParams::new(1.1, 0.8, 0.05).unwrap();
    let op = GradientOperator::new(&to_matrix(&points), &to_matrix(&responses), &kp).unwrap();
    for i in 0..5 {
        let expected = brute_force_local(&points, &responses, &kp, i)[0][0];
        let got = op.local_gradient_matrix(i).unwrap().get(0, 0);
        assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1.0), "anchor {i}: {got} vs {expected}");
    }
}

#[test]
fn local_gradient_matrix_matches_brute_force_in_three_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let points: Vec<Vec<f64>> = (0..7).map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let responses: Vec<Vec<f64>> = (0..7).map(|_| (0..2).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let kp = KernelParams::new(1.7, 1.2, 0.01).unwrap();
    let op = GradientOperator::new(&to_matrix(&points), &to_matrix(&responses), &kp).unwrap();
    for i in [0, 3, 6] {
        let expected = brute_force_local(&points, &responses, &kp, i);
        let got = op.local_gradient_matrix(i).unwrap();
        let scale = expected.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        for p in 0..3 {
            for q in 0..3 {
                assert!((got.get(p, q) - expected[p][q]).abs() <= 1e-10 * scale);
            }
        }
    }
}

#[test]
fn kernel_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..200 {
        let n = rng.gen_range(2..8);
        let m = rng.gen_range(1..5);
        let sigma = rng.gen_range(0.5..3.0);
        let pts = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let i = rng.gen_range(0..n);
        let grad = kernel_gradient(&pts, i, sigma).unwrap();
        let h = 1e-5;
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        for j in 0..n {
            let pj: Vec<f64> = pts.row(j).iter().copied().collect();
            for c in 0..m {
                let mut up: Vec<f64> = pts.row(i).iter().copied().collect();
                let mut down = up.clone();
                up[c] += h;
                down[c] -= h;
                let fd = (gaussian_kernel(&pj, &up, sigma).unwrap() - gaussian_kernel(&pj, &down, sigma).unwrap()) / (2.0 * h);
                err = err.max((fd - grad[(j, c)]).abs());
                norm = norm.max(grad[(j, c)].abs());
            }
        }
        assert!(err <= 1e-6 * norm.max(1e-3), "case {case}: error {err}, scale {norm}");
    }
}

/// Number of eigenvalues of `a` below `x`, from the signs of the pivots of
/// `a - xI` (Sylvester's law of inertia).
fn count_below(a: &DMatrix<f64>, x: f64) -> usize {
    let n = a.nrows();
    let mut m = a.clone();
    for k in 0..n {
        m[(k, k)] -= x;
    }
    let mut negatives = 0;
    for k in 0..n {
        let mut p = m[(k, k)];
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            negatives += 1;
        }
        for r in k + 1..n {
            let f = m[(r, k)] / p;
            for c in k + 1..n {
                m[(r, c)] -= f * m[(k, c)];
            }
        }
    }
    negatives
}

fn bisection_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let bound = a.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // k-th smallest eigenvalue: smallest x with count_below(x) > k.
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(a, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out.reverse();
    out
}

#[test]
fn eigenvalues_match_inertia_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for dim in 1..=5 {
        for _ in 0..20 {
            let r = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a = &r + r.transpose();
            let (values, vectors) = sym_eig(&a).unwrap();
            let oracle = bisection_eigenvalues(&a);
            for (v, o) in values.iter().zip(&oracle) {
                assert!((v - o).abs() < 1e-9, "dim {dim}: {v} vs {o}");
            }
            for (k, lambda) in values.iter().enumerate() {
                let v = vectors.column(k);
                assert!((&a * v - v * *lambda).amax() < 1e-10);
                let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
                assert!(lead > 0.0);
            }
            assert!((vectors.transpose() * &vectors - DMatrix::identity(dim, dim)).amax() < 1e-12);
        }
    }
}

#[test]
fn top_d_eigenpairs_of_known_matrix() {
    // diag(4, 1, 9) rotated: eigenvalues known exactly.
    let q = {
        let (c, s) = (0.6, 0.8);
        DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    };
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 9.0]));
    let a = &q * d * q.transpose();
    let sym = SymmetricMatrix::from_dense_symmetrized(&a).unwrap();
    let (values, vectors) = sym_eig_top_d(&sym, 2).unwrap();
    assert!((values[0] - 9.0).abs() < 1e-12 && (values[1] - 4.0).abs() < 1e-12);
    assert!((vectors.column(0) - nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-12);
    assert!((vectors.column(1) - nalgebra::DVector::from_vec(vec![0.6, 0.8, 0.0])).amax() < 1e-12);
}

#[test]
fn regularized_solve_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for &n in &[1usize, 5, 40, 97, 150] {
        let pts = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = gram_matrix(&pts, 1.5).unwrap();
        let ridge = n as f64 * 1e-3;
        let rhs = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = regularized_solve(&g, ridge, &rhs).unwrap();
        let dense: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| g.get(i, j) + if i == j { ridge } else { 0.0 }).collect())
            .collect();
        let inv = to_matrix(&gauss_jordan_inverse(&dense));
        let expected = inv * &rhs;
        let scale = expected.amax().max(1.0);
        assert!((x - expected).amax() <= 1e-8 * scale, "n = {n}");
    }
}

#[test]
fn gram_matrix_entries_are_kernel_values() {
    let pts = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
    let g = gram_matrix(&pts, 2.0).unwrap();
    assert_eq!(g.get(0, 0), 1.0);
    assert!((g.get(1, 0) - (-0.25f64).exp()).abs() < 1e-15);
    assert!((g.get(2, 0) - (-1.0f64).exp()).abs() < 1e-15);
    assert!((g.get(2, 1) - (-5.0f64 / 4.0).exp()).abs() < 1e-15);
    assert_eq!(g.get(0, 2), g.get(2, 0));
}
