//! Sample sets, the DFT frame / nonuniform sampling operator, coefficient
//! reconstruction, and the MANOVA conditioning bounds for random sampling.

use std::f64::consts::{PI, TAU};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandlimited::wrap_angle;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{self, ComplexMatrix};
use crate::map::RealMap;
use crate::textio::{fmt_f64, parse_f64};

/// Minimum per-axis separation between random points.
pub const MIN_SEPARATION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    UniformGrid,
    OversampledUniform,
    RandomIid,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::UniformGrid => "uniform-grid",
            Scheme::OversampledUniform => "oversampled-uniform",
            Scheme::RandomIid => "random-iid",
        }
    }

    pub fn is_uniform(&self) -> bool {
        !matches!(self, Scheme::RandomIid)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform-grid" | "uniform" => Ok(Scheme::UniformGrid),
            "oversampled-uniform" | "oversampled" => Ok(Scheme::OversampledUniform),
            "random-iid" | "random" => Ok(Scheme::RandomIid),
            other => Err(Error::Parse(format!("unknown sampling scheme `{other}`"))),
        }
    }
}

/// Training pairs `(x_i, y_i)` with `x_i` in `[-pi, pi)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    /// `n x d`, one point per row.
    pub points: Array2<f64>,
    pub values: Vec<f64>,
    pub scheme: Scheme,
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn new(points: Array2<f64>, values: Vec<f64>, scheme: Scheme, seed: Option<u64>) -> Result<Self> {
        if points.nrows() != values.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} values",
                points.nrows(),
                values.len()
            )));
        }
        if points.iter().any(|&x| !(-PI..PI).contains(&x)) {
            return Err(Error::Domain("sample coordinates must lie in [-pi, pi)".into()));
        }
        Ok(Self {
            dim: points.ncols(),
            points,
            values,
            scheme,
            seed,
        })
    }

    /// Samples `f` at `points`.
    pub fn from_map(f: &impl RealMap, points: Array2<f64>, scheme: Scheme, seed: Option<u64>) -> Result<Self> {
        if points.ncols() != f.input_dim() {
            return Err(Error::Dimension(format!(
                "points have dimension {}, map expects {}",
                points.ncols(),
                f.input_dim()
            )));
        }
        let values = f.eval_many(points.view()).to_vec();
        Self::new(points, values, scheme, seed)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "dim,scheme,seed").unwrap();
        let seed = self.seed.map(|v| v.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{}", self.dim, self.scheme, seed).unwrap();
        let cols: Vec<String> = (0..self.dim).map(|a| format!("x_{a}")).collect();
        writeln!(s, "{},y", cols.join(",")).unwrap();
        for (row, y) in self.points.rows().into_iter().zip(&self.values) {
            for x in row {
                write!(s, "{},", fmt_f64(*x)).unwrap();
            }
            writeln!(s, "{}", fmt_f64(*y)).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty sample file".into()))?;
        if header.trim() != "dim,scheme,seed" {
            return Err(Error::Parse(format!("unexpected header `{header}`")));
        }
        let meta = lines.next().ok_or_else(|| Error::Parse("missing metadata row".into()))?;
        let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("bad metadata row `{meta}`")));
        }
        let dim: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad dim `{}`", fields[0])))?;
        let scheme: Scheme = fields[1].parse()?;
        let seed = if fields[2].is_empty() {
            None
        } else {
            Some(
                fields[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed `{}`", fields[2])))?,
            )
        };
        lines.next().ok_or_else(|| Error::Parse("missing column header".into()))?;
        let mut flat = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let row: Vec<&str> = line.split(',').collect();
            if row.len() != dim + 1 {
                return Err(Error::Parse(format!("expected {} columns in `{line}`", dim + 1)));
            }
            for v in &row[..dim] {
                flat.push(parse_f64(v)?);
            }
            values.push(parse_f64(row[dim])?);
        }
        let points = Array2::from_shape_vec((values.len(), dim), flat)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(points, values, scheme, seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Equispaced grid with `per_axis` points per axis: coordinates
/// `2 pi i / per_axis` wrapped into `[-pi, pi)`, rows in column-stack order.
pub fn equispaced_grid(dim: usize, per_axis: usize) -> Array2<f64> {
    let n = per_axis.pow(dim as u32);
    let coord: Vec<f64> = (0..per_axis)
        .map(|i| wrap_angle(TAU * i as f64 / per_axis as f64))
        .collect();
    Array2::from_shape_fn((n, dim), |(r, a)| {
        let i = (r / per_axis.pow(a as u32)) % per_axis;
        coord[i]
    })
}

/// The critical grid for bandwidth `K`: `(2K+1)^d` points.
pub fn uniform_grid(dim: usize, bandwidth: usize) -> Array2<f64> {
    equispaced_grid(dim, 2 * bandwidth + 1)
}

/// I.i.d. uniform points on `[-pi, pi)^d`; points within `MIN_SEPARATION`
/// (max-norm) of an earlier point are redrawn.
pub fn random_points(dim: usize, n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 || dim == 0 {
        return Err(Error::Domain("need n >= 1 and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    while pts.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-PI..PI)).collect();
        let clash = pts.iter().any(|q| {
            q.iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                < MIN_SEPARATION
        });
        if !clash {
            pts.push(p);
        }
    }
    Ok(Array2::from_shape_fn((n, dim), |(r, a)| pts[r][a]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    DftFrame,
    Nonuniform,
}

/// The `n x N~` matrix with entries `e^{j k.x_i}`.
#[derive(Debug, Clone)]
pub struct SamplingOperator {
    pub matrix: ComplexMatrix,
    pub lattice: Lattice,
    pub kind: OperatorKind,
}

impl SamplingOperator {
    pub fn n_samples(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.lattice.len()
    }

    pub fn frequencies(&self) -> Vec<Vec<i64>> {
        self.lattice.frequencies().collect()
    }

    /// `n / N~`.
    pub fn redundancy(&self) -> f64 {
        self.n_samples() as f64 / self.n_coeffs() as f64
    }

    pub fn condition_number(&self) -> Result<f64> {
        linalg::condition_number(&self.matrix)
    }

    /// Synthesizes samples `D c`.
    pub fn apply(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        self.matrix.matvec(coeffs)
    }
}

/// Builds `D` for the given points and analysis bandwidth `K~`.
pub fn build_operator(points: ArrayView2<f64>, bandwidth: usize) -> Result<SamplingOperator> {
    let dim = points.ncols();
    let lattice = Lattice::new(dim, bandwidth);
    let n = points.nrows();
    if lattice.len() > n {
        return Err(Error::Dimension(format!(
            "{} coefficients need at least that many samples, got {n}",
            lattice.len()
        )));
    }
    let freqs: Vec<Vec<i64>> = lattice.frequencies().collect();
    let matrix = ComplexMatrix::from_fn(n, lattice.len(), |i, c| {
        let phase: f64 = freqs[c]
            .iter()
            .zip(points.row(i))
            .map(|(k, x)| *k as f64 * x)
            .sum();
        Complex64::from_polar(1.0, phase)
    });
    let kind = match grid_side(points) {
        Some(_) => OperatorKind::DftFrame,
        None => OperatorKind::Nonuniform,
    };
    Ok(SamplingOperator { matrix, lattice, kind })
}

/// Side length if `points` is exactly the canonical equispaced grid.
/// Points per axis if `points` is exactly [`equispaced_grid`] (same order).
pub fn grid_side(points: ArrayView2<f64>) -> Option<usize> {
    let dim = points.ncols();
    let n = points.nrows();
    let side = (n as f64).powf(1.0 / dim as f64).round() as usize;
    if side == 0 || side.pow(dim as u32) != n {
        return None;
    }
    (equispaced_grid(dim, side).view() == points).then_some(side)
}

/// `c = (1/n) F y` for samples on the equispaced grid (critical or oversampled).
pub fn reconstruct_uniform(values: &[f64], dim: usize, bandwidth: usize) -> Result<Vec<Complex64>> {
    let n = values.len();
    let side = (n as f64).powf(1.0 / dim as f64).round() as usize;
    if dim == 0 || side.pow(dim as u32) != n {
        return Err(Error::Dimension(format!(
            "{n} values do not form a {dim}-dimensional grid"
        )));
    }
    let lattice = Lattice::new(dim, bandwidth);
    if lattice.side() > side {
        return Err(Error::Dimension(format!(
            "grid with {side} points per axis cannot resolve bandwidth {bandwidth}"
        )));
    }
    // Separable transform: one axis at a time over the grid tensor.
    // Twiddles e^{-j k 2 pi i / side}.
    let k = bandwidth as i64;
    let tw: Vec<Vec<Complex64>> = (-k..=k)
        .map(|f| {
            (0..side)
                .map(|i| Complex64::from_polar(1.0, -TAU * (f * i as i64) as f64 / side as f64))
                .collect()
        })
        .collect();
    let mut cur: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    // shape: [axis-0 extent, axis-1 extent, ...] with axis 0 fastest
    let mut extents = vec![side; dim];
    for axis in 0..dim {
        let inner: usize = extents[..axis].iter().product();
        let outer: usize = extents[axis + 1..].iter().product();
        let len_in = extents[axis];
        let len_out = lattice.side();
        let mut next = vec![Complex64::new(0.0, 0.0); inner * len_out * outer];
        for o in 0..outer {
            for f in 0..len_out {
                for i in 0..inner {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for s in 0..len_in {
                        acc += tw[f][s] * cur[i + inner * (s + len_in * o)];
                    }
                    next[i + inner * (f + len_out * o)] = acc;
                }
            }
        }
        extents[axis] = len_out;
        cur = next;
    }
    let scale = 1.0 / n as f64;
    Ok(cur.into_iter().map(|z| z * scale).collect())
}

/// Least-squares coefficients `D^+ y`.
pub fn reconstruct_nonuniform(op: &SamplingOperator, values: &[f64]) -> Result<Vec<Complex64>> {
    if values.len() != op.n_samples() {
        return Err(Error::Dimension(format!(
            "operator has {} rows, got {} values",
            op.n_samples(),
            values.len()
        )));
    }
    let pinv = linalg::pseudo_inverse(&op.matrix)?;
    let y: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(pinv.matvec(&y))
}

/// Cell-centered grid on `[-pi, pi]` used by the cosine path:
/// `x_i = -pi + 2 pi (i + 1/2) / n`.
pub fn dct_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -PI + TAU * (i as f64 + 0.5) / n as f64).collect()
}

/// Cosine-series coefficients of the even (mirrored) extension of `f`
/// about the endpoints of `[-pi, pi]`.
///
/// Basis function `m` is `cos(m (x + pi) / 2)`, i.e. frequency `m / 2` in
/// the units of `e^{j k x}`; `cos(x)` therefore lands on `m = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineSeries {
    pub coeffs: Vec<f64>,
}

impl CosineSeries {
    /// Frequency of coefficient `m`, in units of `e^{j k x}`.
    pub fn frequency(m: usize) -> f64 {
        m as f64 / 2.0
    }

    pub fn synthesize(&self, x: f64) -> f64 {
        let t = (x + PI) / 2.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(m, a)| a * (m as f64 * t).cos())
            .sum()
    }
}

/// DCT-II of samples on [`dct_grid`], keeping the `2K~ + 1` lowest cosine
/// terms (frequencies `0, 1/2, ..., K~`). With `n = 2K~ + 1` the synthesis
/// reproduces every sample.
pub fn reconstruct_dct_symmetric(values: &[f64], dim: usize, bandwidth: usize) -> Result<CosineSeries> {
    if dim != 1 {
        return Err(Error::Unsupported(format!(
            "symmetric-extension cosine path is univariate only, got d = {dim}"
        )));
    }
    let n = values.len();
    let terms = 2 * bandwidth + 1;
    if n < terms {
        return Err(Error::Dimension(format!(
            "{terms} cosine terms need at least {terms} samples, got {n}"
        )));
    }
    let coeffs = (0..terms)
        .map(|m| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(i, y)| y * (PI * m as f64 * (i as f64 + 0.5) / n as f64).cos())
                .sum();
            if m == 0 {
                s / n as f64
            } else {
                2.0 * s / n as f64
            }
        })
        .collect();
    Ok(CosineSeries { coeffs })
}

/// Support `[r_-, r_+]` of the MANOVA law, `(sqrt(beta (1 - gamma)) +- sqrt(1 - beta gamma))^2`.
pub fn manova_support(beta: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(beta >= 1.0 && (0.0..1.0).contains(&gamma) && beta * gamma <= 1.0) {
        return Err(Error::Domain(format!(
            "manova support needs beta >= 1, 0 <= gamma < 1, beta*gamma <= 1 (beta = {beta}, gamma = {gamma})"
        )));
    }
    let a = (beta * (1.0 - gamma)).sqrt();
    let b = (1.0 - beta * gamma).sqrt();
    Ok(((a - b).powi(2), (a + b).powi(2)))
}

/// `(sqrt(beta) + 1)^2 / (sqrt(beta) - 1)^2`, the conjectured bound on `kappa`
/// for random sampling with redundancy `beta`.
pub fn kappa_bound(beta: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::Domain(format!("kappa bound diverges for beta <= 1 (beta = {beta})")));
    }
    let s = beta.sqrt();
    Ok((s + 1.0).powi(2) / (s - 1.0).powi(2))
}
