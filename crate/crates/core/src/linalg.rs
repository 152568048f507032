//! Small dense linear algebra: complex matrices, a cyclic Jacobi Hermitian
//! eigensolver, and the singular-value quantities built on top of it
//! (pseudo-inverse, condition number, spectral norm).
//!
//! Singular values come from one-sided Jacobi on `A` itself rather than the
//! eigenvalues of `A*A`: the Gram route loses everything below
//! `sqrt(eps) * sigma_max`, which would hide rank deficiency.

use std::fmt;
use std::ops::{Index, IndexMut};

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Off-diagonal stopping threshold, relative to `||A||_F`.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// `sigma_min <= RANK_TOL * sigma_max` counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real(a: ArrayView2<f64>) -> Self {
        Self::from_fn(a.nrows(), a.ncols(), |r, c| Complex64::new(a[(r, c)], 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let brow = other.row(k);
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A* A`, built from the upper triangle so the result is exactly Hermitian.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..self.rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                if i == j {
                    acc.im = 0.0;
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(r) {
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigResult {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: ComplexMatrix,
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Each rotation first removes the phase of `a_pq` and then applies the real
/// 2x2 rotation that annihilates it. Sweeps stop once the off-diagonal
/// Frobenius mass drops below `JACOBI_TOL * ||A||_F`.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<EigResult> {
    if !a.is_square() {
        return Err(Error::Domain(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let norm = a.frobenius_norm();
    let asym = a.sub(&a.adjoint()).frobenius_norm();
    if asym > HERMITIAN_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Domain(format!(
            "matrix is not Hermitian (||A - A*||_F = {asym:e}, ||A||_F = {norm:e})"
        )));
    }

    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)].im = 0.0;
    }
    let mut v = ComplexMatrix::identity(n);
    let threshold = JACOBI_TOL * norm;

    let off = |m: &ComplexMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = norm == 0.0 || off(&m) <= threshold;
    let mut sweep = 0;
    while !converged {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence(format!(
                "Jacobi eigensolver: off-diagonal norm {:e} after {JACOBI_MAX_SWEEPS} sweeps",
                off(&m)
            )));
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
        converged = off(&m) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
    let eigenvalues = order.iter().map(|&i| m[(i, i)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(EigResult {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let phase = apq / mag; // e^{i phi}
    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // U = diag(1, e^{-i phi}) * [[c, s], [-s, c]]
    let pc = phase.conj();
    let u00 = Complex64::new(c, 0.0);
    let u01 = Complex64::new(s, 0.0);
    let u10 = -pc * s;
    let u11 = pc * c;
    let n = m.rows;
    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp * u00 + akq * u10;
        m[(k, q)] = akp * u01 + akq * u11;
    }
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = u00.conj() * apk + u10.conj() * aqk;
        m[(q, k)] = u01.conj() * apk + u11.conj() * aqk;
    }
    m[(p, q)] = Complex64::new(0.0, 0.0);
    m[(q, p)] = Complex64::new(0.0, 0.0);
    m[(p, p)].im = 0.0;
    m[(q, q)].im = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u00 + vkq * u10;
        v[(k, q)] = vkp * u01 + vkq * u11;
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi, for `rows >= cols`.
///
/// Column pairs of a working copy of `A` are rotated until they are
/// mutually orthogonal; the column norms are then the singular values. This
/// never forms `A*A`, so small singular values keep full relative accuracy.
struct Hestenes {
    /// Orthogonalized columns `U Sigma`, column-major (`cols` vectors of length `rows`).
    w: Vec<Vec<Complex64>>,
    /// Accumulated right rotations, columns.
    v: Vec<Vec<Complex64>>,
    sigma: Vec<f64>,
}

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn hestenes(a: &ComplexMatrix) -> Result<Hestenes> {
    debug_assert!(a.rows >= a.cols);
    let n = a.cols;
    let mut w: Vec<Vec<Complex64>> = (0..n).map(|c| (0..a.rows).map(|r| a[(r, c)]).collect()).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|c| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[c] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();
    let rotate = |cols: &mut [Vec<Complex64>], p: usize, q: usize, phase: Complex64, c: f64, s: f64| {
        let (lo, hi) = cols.split_at_mut(q);
        let (cp, cq) = (&mut lo[p], &mut hi[0]);
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let yq = *y * phase;
            let xp = *x;
            *x = xp * c - yq * s;
            *y = xp * s + yq * c;
        }
    };
    // Columns already at roundoff level carry no direction worth orthogonalizing.
    let negligible = (f64::EPSILON * a.frobenius_norm()).powi(2) * a.rows as f64;
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = w[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma = dot_conj(&w[p], &w[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= JACOBI_TOL * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, phase, c, s);
                rotate(&mut v, p, q, phase, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "one-sided Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }
    let sigma = w.iter().map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    Ok(Hestenes { w, v, sigma })
}

/// Singular values of `a`, descending; `min(rows, cols)` of them.
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    if a.rows == 0 || a.cols == 0 {
        return Ok(Vec::new());
    }
    let h = if a.cols <= a.rows { hestenes(a)? } else { hestenes(&a.adjoint())? };
    let mut sv = h.sigma;
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Moore-Penrose pseudo-inverse of a full-column-rank matrix, `V Sigma^{-1} U*`.
pub fn pseudo_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols > a.rows {
        return Err(Error::SingularOperator {
            sigma_min: 0.0,
            sigma_max: singular_values(a)?.first().copied().unwrap_or(0.0),
        });
    }
    let h = hestenes(a)?;
    let smax = h.sigma.iter().copied().fold(0.0, f64::max);
    let smin = h.sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin <= RANK_TOL * smax {
        return Err(Error::SingularOperator {
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    // A^+ = sum_k v_k (w_k / sigma_k^2)^*, with w_k = sigma_k u_k.
    let inv2: Vec<f64> = h.sigma.iter().map(|s| 1.0 / (s * s)).collect();
    Ok(ComplexMatrix::from_fn(a.cols, a.rows, |i, j| {
        (0..a.cols)
            .map(|k| h.v[k][i] * h.w[k][j].conj() * inv2[k])
            .sum()
    }))
}

/// `sigma_max / sigma_min` of `a` itself (the Gram matrix would give the square).
///
/// Returns `f64::INFINITY` when `sigma_min <= RANK_TOL * sigma_max`.
pub fn condition_number(a: &ComplexMatrix) -> Result<f64> {
    let sv = singular_values(a)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smax == 0.0 || smin <= RANK_TOL * smax {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Largest singular value of a real matrix by power iteration on `W^T W`.
pub fn spectral_norm_real(w: ArrayView2<f64>) -> f64 {
    let (rows, cols) = w.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    // Iterate on the smaller Gram side.
    let (mat, dim) = if cols <= rows {
        (w.to_owned(), cols)
    } else {
        (w.t().to_owned(), rows)
    };
    let fro = mat.iter().map(|x| x * x).sum::<f64>().sqrt();
    if fro == 0.0 {
        return 0.0;
    }
    // Deterministic start vector with no special alignment.
    let mut x: Array1<f64> = (0..dim)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    x /= x.dot(&x).sqrt();
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let y = mat.dot(&x);
        let z = mat.t().dot(&y);
        let next = x.dot(&z);
        let zn = z.dot(&z).sqrt();
        if zn == 0.0 {
            return 0.0;
        }
        x = z / zn;
        if (next - lambda).abs() <= 1e-15 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient of the final vector.
    let y = mat.dot(&x);
    y.dot(&y).sqrt().max(lambda.max(0.0).sqrt()).min(fro)
}

pub fn frobenius_norm_real(w: ArrayView2<f64>) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!(
            "solve_spd: {}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NoConvergence(format!(
                "Cholesky: non-positive pivot {d:e} at {j}"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}
