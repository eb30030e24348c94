//! Numerical core: Gaussian kernels, Gram matrices and their gradients,
//! regularized symmetric solves, symmetric eigendecomposition and feature
//! standardization.
//!
//! Kernel convention: `k(a, b) = exp(-‖a - b‖² / σ²)`. The denominator is σ²,
//! not 2σ². Bandwidths quoted elsewhere under the 2σ² convention differ by a
//! factor of √2.
//!
//! Point sets are passed as `DMatrix<f64>` with one point per row.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters of the kernel gradient estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Bandwidth of the summary-space kernel.
    pub sigma_s: f64,
    /// Bandwidth of the parameter-space kernel.
    pub sigma_theta: f64,
    /// Regularization coefficient; the ridge added to the Gram matrix is `n * eps_n`.
    pub eps_n: f64,
}

impl KernelParams {
    pub fn new(sigma_s: f64, sigma_theta: f64, eps_n: f64) -> Result<Self> {
        let kp = KernelParams {
            sigma_s,
            sigma_theta,
            eps_n,
        };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_s", self.sigma_s),
            ("sigma_theta", self.sigma_theta),
            ("eps_n", self.eps_n),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-coordinate affine standardization fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Fit means and population standard deviations column by column.
    /// Zero-variance columns get scale 1 so they map to 0.
    pub fn fit(points: &DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        if n < 2 {
            return Err(Error::invalid("standardizer needs at least two points"));
        }
        let nf = n as f64;
        let mut means = Vec::with_capacity(points.ncols());
        let mut scales = Vec::with_capacity(points.ncols());
        for col in points.column_iter() {
            let mean = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
            let sd = var.sqrt();
            let degenerate = !(sd > f64::EPSILON * mean.abs().max(1.0)) || !sd.is_finite();
            means.push(mean);
            scales.push(if degenerate { 1.0 } else { sd });
        }
        Ok(Standardizer { means, scales })
    }

    /// Identity transform on `dim` coordinates.
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            means: vec![0.0; dim],
            scales: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim() {
            return Err(Error::invalid(format!(
                "standardizer expects dimension {}, got {}",
                self.dim(),
                point.len()
            )));
        }
        Ok(point
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    /// Standardize every row of `points`.
    pub fn apply_rows(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if points.ncols() != self.dim() {
            return Err(Error::invalid(format!(
                "standardizer expects dimension {}, got {}",
                self.dim(),
                points.ncols()
            )));
        }
        let mut out = points.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.scales[j]);
            col.iter_mut().for_each(|x| *x = (*x - m) / s);
        }
        Ok(out)
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

/// Real symmetric matrix in packed lower-triangular storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    lower: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymmetricMatrix {
            dim,
            lower: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    /// Build from a dense matrix by averaging it with its transpose.
    pub fn from_dense_symmetrized(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("symmetric matrix must be square"));
        }
        let dim = m.nrows();
        let mut out = SymmetricMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                out.set(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn offset(i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        r * (r + 1) / 2 + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[Self::offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.lower[Self::offset(i, j)] = v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Largest absolute eigenvalue bound, ‖M‖_F.
    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let v = self.get(i, j);
                acc += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        acc.sqrt()
    }

    /// True when the smallest eigenvalue is at least `-1e-8` times the largest.
    pub fn is_psd(&self) -> bool {
        if self.dim == 0 {
            return true;
        }
        let eig = SymmetricEigen::new(self.to_dense());
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        min >= -1e-8 * max.abs().max(f64::MIN_POSITIVE)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
    }
    Ok(())
}

#[inline]
fn sq_dist(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-‖a - b‖² / σ²)`.
pub fn gaussian_kernel(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "kernel arguments differ in dimension: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok((-sq_dist(a.iter().copied(), b.iter().copied()) / (sigma * sigma)).exp())
}

/// Dense Gram matrix of the rows of `points`, with exact unit diagonal.
pub fn gram_dense(points: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let n = points.nrows();
    if n == 0 {
        return Err(Error::invalid("gram matrix of an empty point set"));
    }
    // Row-major copy so each pair reads two contiguous rows.
    let m = points.ncols();
    let rows: Vec<f64> = points.transpose().as_slice().to_vec();
    let s2 = sigma * sigma;
    let mut g = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let rj = &rows[j * m..(j + 1) * m];
        g[(j, j)] = 1.0;
        for i in (j + 1)..n {
            let ri = &rows[i * m..(i + 1) * m];
            let v = (-sq_dist(ri.iter().copied(), rj.iter().copied()) / s2).exp();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Gram matrix `G[i, j] = k(p_i, p_j)` in packed symmetric storage.
pub fn gram_matrix(points: &DMatrix<f64>, sigma: f64) -> Result<SymmetricMatrix> {
    let dense = gram_dense(points, sigma)?;
    let n = dense.nrows();
    let mut out = SymmetricMatrix::zeros(n);
    for j in 0..n {
        for i in j..n {
            out.set(i, j, dense[(i, j)]);
        }
    }
    Ok(out)
}

/// Gradient of the kernel with respect to its second argument at the query
/// point: row `j` is `(2/σ²)(p_j - p_i) k(p_j, p_i)`.
pub fn kernel_gradient(points: &DMatrix<f64>, query_index: usize, sigma: f64) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let (n, m) = points.shape();
    if query_index >= n {
        return Err(Error::invalid(format!(
            "query index {query_index} out of range for {n} points"
        )));
    }
    let s2 = sigma * sigma;
    let mut grad = DMatrix::<f64>::zeros(n, m);
    for j in 0..n {
        let mut d2 = 0.0;
        for c in 0..m {
            let d = points[(j, c)] - points[(query_index, c)];
            d2 += d * d;
        }
        let scale = 2.0 / s2 * (-d2 / s2).exp();
        for c in 0..m {
            grad[(j, c)] = scale * (points[(j, c)] - points[(query_index, c)]);
        }
    }
    Ok(grad)
}

/// Cholesky factor of `G + ridge * I`.
#[derive(Debug, Clone)]
pub struct RegularizedCholesky {
    /// Lower-triangular factor; the strict upper triangle is zero.
    lower: DMatrix<f64>,
}

const CHOLESKY_BLOCK: usize = 96;

impl RegularizedCholesky {
    /// Factor `G + ridge * I`. Only the lower triangle of `g` is read.
    pub fn factor(g: &DMatrix<f64>, ridge: f64) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::invalid("regularized solve needs a square matrix"));
        }
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge must be positive, got {ridge}")));
        }
        let n = g.nrows();
        let mut a = g.clone();
        for i in 0..n {
            a[(i, i)] += ridge;
        }
        let mut k0 = 0;
        while k0 < n {
            let kb = CHOLESKY_BLOCK.min(n - k0);
            factor_diagonal_block(&mut a, k0, kb)?;
            let rem = n - k0 - kb;
            if rem > 0 {
                // Panel: L21 = A21 L11^{-T}, one column at a time.
                for c in 0..kb {
                    let col = k0 + c;
                    for t in 0..c {
                        let lct = a[(col, k0 + t)];
                        if lct != 0.0 {
                            for r in (k0 + kb)..n {
                                let v = a[(r, k0 + t)];
                                a[(r, col)] -= lct * v;
                            }
                        }
                    }
                    let d = a[(col, col)];
                    for r in (k0 + kb)..n {
                        a[(r, col)] /= d;
                    }
                }
                // Trailing update: A22 -= L21 L21^T.
                let l21 = a.view((k0 + kb, k0), (rem, kb)).clone_owned();
                let l21t = l21.transpose();
                let mut a22 = a.view_mut((k0 + kb, k0 + kb), (rem, rem));
                a22.gemm(-1.0, &l21, &l21t, 1.0);
            }
            k0 += kb;
        }
        for j in 1..n {
            for i in 0..j {
                a[(i, j)] = 0.0;
            }
        }
        Ok(RegularizedCholesky { lower: a })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Solve `(G + ridge I) X = rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if rhs.nrows() != n {
            return Err(Error::invalid(format!(
                "right-hand side has {} rows, expected {n}",
                rhs.nrows()
            )));
        }
        let l = &self.lower;
        let mut x = rhs.clone();
        for mut col in x.column_iter_mut() {
            // Forward substitution L y = b.
            for k in 0..n {
                let yk = col[k] / l[(k, k)];
                col[k] = yk;
                if yk != 0.0 {
                    for r in (k + 1)..n {
                        col[r] -= yk * l[(r, k)];
                    }
                }
            }
            // Back substitution L^T x = y.
            for k in (0..n).rev() {
                let mut acc = col[k];
                for r in (k + 1)..n {
                    acc -= l[(r, k)] * col[r];
                }
                col[k] = acc / l[(k, k)];
            }
        }
        Ok(x)
    }

    /// Explicit inverse `(G + ridge I)^{-1}`, computed as `L^{-T} L^{-1}`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let linv = lower_triangular_inverse(&self.lower);
        linv.transpose() * &linv
    }
}

fn factor_diagonal_block(a: &mut DMatrix<f64>, k0: usize, kb: usize) -> Result<()> {
    for j in k0..k0 + kb {
        for t in k0..j {
            let ljt = a[(j, t)];
            if ljt != 0.0 {
                for r in j..k0 + kb {
                    let v = a[(r, t)];
                    a[(r, j)] -= ljt * v;
                }
            }
        }
        let d = a[(j, j)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical {
                message: format!("matrix is not positive definite (pivot value {d:e})"),
                pivot: Some(j),
            });
        }
        let ljj = d.sqrt();
        a[(j, j)] = ljj;
        for r in (j + 1)..k0 + kb {
            a[(r, j)] /= ljj;
        }
    }
    Ok(())
}

/// Inverse of a lower-triangular matrix with nonzero diagonal, by blocks.
fn lower_triangular_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    let nb = CHOLESKY_BLOCK;
    let mut k0 = 0;
    while k0 < n {
        let kb = nb.min(n - k0);
        // Invert the diagonal block by column-wise forward substitution.
        for c in 0..kb {
            let col = k0 + c;
            inv[(col, col)] = 1.0 / l[(col, col)];
            for r in (c + 1)..kb {
                let row = k0 + r;
                let mut acc = 0.0;
                for t in c..r {
                    acc += l[(row, k0 + t)] * inv[(k0 + t, col)];
                }
                inv[(row, col)] = -acc / l[(row, row)];
            }
        }
        k0 += kb;
    }
    // Off-diagonal blocks: X_ij = -L_ii^{-1} (sum_{j<=t<i} L_it X_tj).
    let starts: Vec<usize> = (0..n).step_by(nb).collect();
    for (bj, &j0) in starts.iter().enumerate() {
        let jb = nb.min(n - j0);
        for &i0 in starts.iter().skip(bj + 1) {
            let ib = nb.min(n - i0);
            let lrow = l.view((i0, j0), (ib, i0 - j0)).clone_owned();
            let xcol = inv.view((j0, j0), (i0 - j0, jb)).clone_owned();
            let acc = lrow * xcol;
            let dinv = inv.view((i0, i0), (ib, ib)).clone_owned();
            let block = -(dinv * acc);
            inv.view_mut((i0, j0), (ib, jb)).copy_from(&block);
        }
    }
    inv
}

/// Solve `(G + ridge I) X = rhs` through a Cholesky factorization.
pub fn regularized_solve(g: &SymmetricMatrix, ridge: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    RegularizedCholesky::factor(&g.to_dense(), ridge)?.solve(rhs)
}

/// Full symmetric eigendecomposition, eigenvalues descending, each
/// eigenvector signed so its largest-magnitude component is positive.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !m.is_square() {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("eigendecomposition of a non-finite matrix"));
    }
    let dim = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        let mut lead = 0;
        for r in 1..dim {
            if v[r].abs() > v[lead].abs() {
                lead = r;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..dim {
            vectors[(r, dst)] = sign * v[r];
        }
    }
    Ok((values, vectors))
}

/// Top-`d` eigenpairs of a symmetric matrix.
pub fn sym_eig_top_d(m: &SymmetricMatrix, d: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = m.dim();
    if d == 0 || d > dim {
        return Err(Error::invalid(format!("requested {d} eigenvectors of a {dim}x{dim} matrix")));
    }
    let (values, vectors) = sym_eig(&m.to_dense())?;
    Ok((values[..d].to_vec(), vectors.columns(0, d).clone_owned()))
}
