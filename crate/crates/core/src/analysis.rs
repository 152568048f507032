//! Measurements on a trained map: the Fourier spectrum of its periodic
//! (or mirrored) extension, power-law decay fits, L2 error against a
//! band-limited target, total variation of the derivative, and
//! Jacobian-bound audits.
//!
//! Spectra come from the trapezoid rule on the closed grid
//! `-pi + 2 pi i / M`, `i = 0..=M` per axis. A map that is not periodic
//! (any network, in general) has a jump across the seam `x_a = +-pi`, which
//! on its own would leave `O(1/M)` errors in every coefficient. So before
//! transforming, each axis's jump `J_a` is removed with the sawtooth
//! `J_a x_a / (2 pi)`, whose coefficients `j (-1)^k J_a / (2 pi k)` are added
//! back exactly; the remainder is continuous and its grid coefficients are
//! accurate to `O(1/M^2)`. The sawtooth energy beyond the grid's bins is
//! summed analytically (plus, for `d > 1`, the overlap of different axes'
//! sawtooth terms), which keeps coefficient-space L2 errors consistent
//! with quadrature.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::bandlimited::BandlimitedFn;
use crate::error::{Error, Result};
use crate::lattice::{norm_1, Lattice};
use crate::map::RealMap;
use crate::network::Mlp;
use crate::textio::fmt_f64;

/// `|zeta_k|` at or below this is numerical noise and excluded from fits.
pub const SPECTRUM_FLOOR: f64 = 1e-13;
/// Fewest above-floor points a decay fit accepts.
pub const MIN_FIT_POINTS: usize = 8;
/// Cap on `M^d` grid evaluations.
pub const EVAL_BUDGET: usize = 1 << 24;
/// Minimum grid for univariate L2 errors.
pub const MIN_L2_GRID_1D: usize = 4096;
/// Minimum grid for the derivative total variation.
pub const MIN_TV_GRID: usize = 1 << 14;
/// Slack on each inequality of the Jacobian audit.
pub const AUDIT_SLACK: f64 = 1e-9;

fn check_budget(dim: usize, m: usize) -> Result<()> {
    let total = (m as f64).powi(dim as i32);
    if total > EVAL_BUDGET as f64 {
        return Err(Error::Resource(format!(
            "grid of {m}^{dim} points exceeds the evaluation budget of {EVAL_BUDGET}"
        )));
    }
    Ok(())
}

/// Closed grid `(M+1)^d`, axis 0 fastest.
fn closed_grid(dim: usize, m: usize) -> Array2<f64> {
    let side = m + 1;
    let n = side.pow(dim as u32);
    Array2::from_shape_fn((n, dim), |(r, a)| {
        let i = (r / side.pow(a as u32)) % side;
        -PI + TAU * i as f64 / m as f64
    })
}

/// Trapezoid weights on the closed grid, `1/2` per boundary axis.
fn closed_weights(dim: usize, m: usize) -> Vec<f64> {
    let side = m + 1;
    (0..side.pow(dim as u32))
        .map(|idx| {
            let mut rest = idx;
            let mut w = 1.0;
            for _ in 0..dim {
                let i = rest % side;
                rest /= side;
                if i == 0 || i == m {
                    w *= 0.5;
                }
            }
            w
        })
        .collect()
}

/// Averages index `M` of every axis into index 0: `(M+1)^d -> M^d`.
fn fold(values: &[f64], dim: usize, m: usize) -> Vec<f64> {
    let mut cur = values.to_vec();
    let mut extents = vec![m + 1; dim];
    for axis in 0..dim {
        let inner: usize = extents[..axis].iter().product();
        let outer: usize = extents[axis + 1..].iter().product();
        let len = extents[axis];
        let mut next = vec![0.0; inner * m * outer];
        for o in 0..outer {
            for i in 0..inner {
                let at = |s: usize| cur[i + inner * (s + len * o)];
                next[i + inner * (m * o)] = 0.5 * (at(0) + at(m));
                for s in 1..m {
                    next[i + inner * (s + m * o)] = at(s);
                }
            }
        }
        extents[axis] = m;
        cur = next;
    }
    cur
}

/// In-place unnormalized forward DFT along every axis of an `M^d` tensor.
fn fft_nd(data: &mut [Complex64], dim: usize, m: usize) {
    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    let total = data.len();
    for axis in 0..dim {
        let stride = m.pow(axis as u32);
        for base in 0..total {
            // Visit each line once, from its element with axis index 0.
            if !(base / stride).is_multiple_of(m) {
                continue;
            }
            for (s, v) in line.iter_mut().enumerate() {
                *v = data[base + s * stride];
            }
            fft.process(&mut line);
            for (s, v) in line.iter().enumerate() {
                data[base + s * stride] = *v;
            }
        }
    }
}

/// `sum_{k > k0} 1 / k^2`.
fn tail_inverse_squares(k0: usize) -> f64 {
    let mut sum = 0.0;
    let mut k = k0 + 1;
    while k < 16 {
        sum += 1.0 / (k * k) as f64;
        k += 1;
    }
    // Asymptotic series of the trigamma function at x >= 16.
    let x = k as f64;
    let x2 = x * x;
    let x5 = x2 * x2 * x;
    sum + 1.0 / x + 1.0 / (2.0 * x2) + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x5) + 1.0 / (42.0 * x5 * x2)
        - 1.0 / (30.0 * x5 * x2 * x2)
        + 5.0 / (66.0 * x5 * x5 * x)
}

/// Seam-corrected grid spectrum: `zeta_k` for the `M^d` frequencies
/// `k_a in (-M/2, M/2]`.
struct DenseSpectrum {
    dim: usize,
    m: usize,
    bins: Vec<Complex64>,
    /// Energy `sum |zeta_k|^2` of the seam sawtooth terms outside the bins.
    outside: f64,
}

impl DenseSpectrum {
    /// `values` on the closed `(M+1)^d` grid, axis 0 fastest.
    fn from_closed_values(values: &[f64], dim: usize, m: usize) -> Self {
        if dim == 0 {
            return Self {
                dim,
                m,
                bins: vec![Complex64::new(values[0], 0.0)],
                outside: 0.0,
            };
        }
        let side = m + 1;
        let mut v = values.to_vec();
        let mut jumps = Vec::with_capacity(dim);
        // Sawtooth term of each axis on the closed grid, for the cross terms.
        let mut ramps: Vec<Option<Vec<f64>>> = Vec::with_capacity(dim);
        for axis in 0..dim {
            let stride = side.pow(axis as u32);
            let mut jump = Vec::with_capacity(v.len() / side);
            let mut ramp = vec![0.0; v.len()];
            for base in 0..v.len() {
                if !(base / stride).is_multiple_of(side) {
                    continue;
                }
                let d = v[base + m * stride] - v[base];
                for s in 0..=m {
                    let r = d * (s as f64 / m as f64 - 0.5);
                    v[base + s * stride] -= r;
                    ramp[base + s * stride] = r;
                }
                jump.push(d);
            }
            let nonzero = jump.iter().any(|&j| j != 0.0);
            ramps.push((dim > 1 && nonzero).then_some(ramp));
            jumps.push(jump);
        }

        let folded = fold(&v, dim, m);
        let mut bins: Vec<Complex64> = folded.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut bins, dim, m);
        let scale = 1.0 / (m as f64).powi(dim as i32);
        // Grid starts at -pi: shift each axis by e^{j k pi} = (-1)^k.
        for (idx, z) in bins.iter_mut().enumerate() {
            let parity: usize = (0..dim).map(|a| (idx / m.pow(a as u32)) % m).sum();
            let sign = if parity.is_multiple_of(2) { scale } else { -scale };
            *z *= sign;
        }
        let mut out = Self { dim, m, bins, outside: 0.0 };

        let k_pos = m / 2;
        let beyond = tail_inverse_squares(k_pos) + tail_inverse_squares(m - 1 - k_pos);
        let within = PI * PI / 3.0 - beyond;
        let mut saws: Vec<Option<Vec<Complex64>>> = Vec::with_capacity(dim);
        for (axis, jump) in jumps.iter().enumerate() {
            if jump.iter().all(|&j| j == 0.0) {
                saws.push(None);
                continue;
            }
            let sub = Self::from_closed_values(jump, dim - 1, m);
            let sub_energy: f64 = sub.bins.iter().map(|z| z.norm_sqr()).sum::<f64>() + sub.outside;
            out.outside += (beyond * sub_energy + within * sub.outside) / (TAU * TAU);
            let mut saw = vec![Complex64::new(0.0, 0.0); out.bins.len()];
            for (idx, z) in saw.iter_mut().enumerate() {
                let mut k = out.bin_frequency(idx);
                let ka = k.remove(axis);
                if ka == 0 {
                    continue;
                }
                let sgn = if ka % 2 == 0 { 1.0 } else { -1.0 };
                *z = Complex64::new(0.0, sgn / (TAU * ka as f64)) * sub.at(&k);
            }
            for (b, z) in out.bins.iter_mut().zip(&saw) {
                *b += z;
            }
            saws.push(Some(saw));
        }

        // Two axes' sawtooth terms overlap beyond the bins too. Their full
        // inner product is a smooth integral (trapezoid), minus the part
        // already inside the bins.
        let weights = closed_weights(dim, m);
        for a in 0..dim {
            for b in a + 1..dim {
                let (Some(ra), Some(rb), Some(sa), Some(sb)) = (&ramps[a], &ramps[b], &saws[a], &saws[b]) else {
                    continue;
                };
                let full: f64 =
                    ra.iter().zip(rb).zip(&weights).map(|((x, y), w)| w * x * y).sum::<f64>() / (m as f64).powi(dim as i32);
                let inside: f64 = sa.iter().zip(sb).map(|(x, y)| (x * y.conj()).re).sum();
                out.outside += 2.0 * (full - inside);
            }
        }
        out
    }

    fn bin_frequency(&self, mut idx: usize) -> Vec<i64> {
        let m = self.m as i64;
        (0..self.dim)
            .map(|_| {
                let b = (idx % self.m) as i64;
                idx /= self.m;
                if b <= m / 2 {
                    b
                } else {
                    b - m
                }
            })
            .collect()
    }

    fn at(&self, k: &[i64]) -> Complex64 {
        let m = self.m as i64;
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &f in k {
            idx += f.rem_euclid(m) as usize * stride;
            stride *= self.m;
        }
        self.bins[idx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub k_lo: usize,
    pub k_hi: usize,
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

/// How a map on `[-pi, pi]^d` is extended before taking its spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extension {
    /// Period `2 pi`. A network generally jumps across the seam, which
    /// caps the decay of its coefficients at `O(1/|k|)`.
    #[default]
    Periodic,
    /// Univariate even reflection about `x = -pi` (period `4 pi`), the
    /// extension behind the cosine transform. It is continuous at the seam,
    /// so only the map's own kinks limit the decay. Index `m` is the cosine
    /// index, frequency `m / 2` in `x`; see [`mirrored_spectrum`].
    Mirrored,
}

impl Extension {
    pub fn as_str(self) -> &'static str {
        match self {
            Extension::Periodic => "periodic",
            Extension::Mirrored => "mirrored",
        }
    }
}

impl std::str::FromStr for Extension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "periodic" => Ok(Extension::Periodic),
            "mirrored" | "symmetric" => Ok(Extension::Mirrored),
            other => Err(Error::Parse(format!("unknown extension `{other}`"))),
        }
    }
}

/// `zeta_k` of the extended map on `||k||_inf <= kmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub extension: Extension,
    pub dim: usize,
    pub kmax: usize,
    pub grid: usize,
    /// Lattice order (see [`Lattice`]).
    pub zeta: Vec<Complex64>,
    /// `sum |zeta|^2` outside the analyzed band.
    pub tail_energy: f64,
    /// Fit over the default window `[max(8, 2K), M/8]`, when it has enough data.
    pub fit: Option<DecayFit>,
}

impl SpectrumReport {
    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.dim, self.kmax)
    }

    pub fn zeta_at(&self, k: &[i64]) -> Option<Complex64> {
        self.lattice().index_of(k).map(|i| self.zeta[i])
    }

    /// Largest `|zeta_k - conj(zeta_{-k})|`.
    pub fn symmetry_defect(&self) -> f64 {
        let lat = self.lattice();
        (0..self.zeta.len())
            .map(|i| (self.zeta[i] - self.zeta[lat.mirror(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let cols: Vec<String> = match self.extension {
            Extension::Periodic => (0..self.dim).map(|a| format!("k_{a}")).collect(),
            Extension::Mirrored => vec!["m".to_string()],
        };
        writeln!(s, "{},abs_zeta,re,im", cols.join(",")).unwrap();
        for (k, z) in self.lattice().frequencies().zip(&self.zeta) {
            let ks: Vec<String> = k.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{},{},{},{}", ks.join(","), fmt_f64(z.norm()), fmt_f64(z.re), fmt_f64(z.im)).unwrap();
        }
        s
    }
}

/// Default decay window `[max(8, 2K), M/8]` for a target of bandwidth `K`.
pub fn default_window(target_bandwidth: usize, grid: usize) -> (usize, usize) {
    ((2 * target_bandwidth).max(8), grid / 8)
}

/// Fourier coefficients of the periodic extension of `map` restricted to
/// `[-pi, pi]^d`, on `||k||_inf <= kmax`, from a grid of `m` points per axis.
///
/// `target_bandwidth` only positions the default fit window.
pub fn network_spectrum(
    map: &impl RealMap,
    dim: usize,
    kmax: usize,
    m: usize,
    target_bandwidth: usize,
) -> Result<SpectrumReport> {
    if map.input_dim() != dim {
        return Err(Error::Dimension(format!(
            "map is {}-dimensional, asked for d = {dim}",
            map.input_dim()
        )));
    }
    if m < 8 * (2 * kmax + 1) {
        return Err(Error::Domain(format!(
            "grid M = {m} is below the anti-aliasing margin 8 (2 Kmax + 1) = {}",
            8 * (2 * kmax + 1)
        )));
    }
    check_budget(dim, m)?;
    let values = map.eval_many(closed_grid(dim, m).view());
    let dense = DenseSpectrum::from_closed_values(values.as_slice().expect("contiguous"), dim, m);
    Ok(report_from_dense(&dense, kmax, target_bandwidth, Extension::Periodic))
}

/// Coefficients of the mirrored extension of a univariate `map`: the
/// `2 pi`-periodic even function `psi(u) = map(2|u| - pi)`, whose index-`m`
/// coefficient multiplies `cos(m (x + pi) / 2)` and so sits at frequency
/// `m / 2` in `x`. `kmax` and the grid `m` count in `u`, i.e. in cosine
/// indices; to cover `x`-frequencies up to `k`, ask for `kmax = 2k`.
/// The default fit window is placed for `x`-bandwidth `target_bandwidth`.
pub fn mirrored_spectrum(
    map: &impl RealMap,
    kmax: usize,
    m: usize,
    target_bandwidth: usize,
) -> Result<SpectrumReport> {
    if map.input_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "mirrored extension is univariate, map has d = {}",
            map.input_dim()
        )));
    }
    if m < 8 * (2 * kmax + 1) || !m.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "grid M = {m} must be even and at least 8 (2 Kmax + 1) = {}",
            8 * (2 * kmax + 1)
        )));
    }
    check_budget(1, m)?;
    // u_i = -pi + 2 pi i / M maps to x = 2|u_i| - pi, which for i <= M/2 is
    // the closed (M/2)-grid read backwards; the other half mirrors it.
    let half = m / 2;
    let base = map.eval_many(closed_grid(1, half).view());
    let values: Vec<f64> = (0..=m).map(|i| base[i.abs_diff(half)]).collect();
    let dense = DenseSpectrum::from_closed_values(&values, 1, m);
    Ok(report_from_dense(&dense, kmax, 2 * target_bandwidth, Extension::Mirrored))
}

fn report_from_dense(
    dense: &DenseSpectrum,
    kmax: usize,
    target_bandwidth: usize,
    extension: Extension,
) -> SpectrumReport {
    let lattice = Lattice::new(dense.dim, kmax);
    let zeta: Vec<Complex64> = lattice.frequencies().map(|k| dense.at(&k)).collect();
    let total: f64 = dense.bins.iter().map(|z| z.norm_sqr()).sum();
    let band: f64 = zeta.iter().map(|z| z.norm_sqr()).sum();
    let mut report = SpectrumReport {
        extension,
        dim: dense.dim,
        kmax,
        grid: dense.m,
        zeta,
        tail_energy: (total - band).max(0.0) + dense.outside,
        fit: None,
    };
    let (lo, hi) = default_window(target_bandwidth, dense.m);
    report.fit = decay_fit(&report, lo, hi.min(kmax)).ok();
    report
}

/// Least-squares slope of `log |zeta|` against `log ||k||` on `[k_lo, k_hi]`.
///
/// For `d = 1` each positive frequency is a point. For `d > 1` the energy
/// `|zeta_k|^2` is averaged over each shell `||k||_1 = t` and the fit uses
/// the shell RMS amplitude; only complete shells (`t <= kmax`) are used.
pub fn decay_fit(report: &SpectrumReport, k_lo: usize, k_hi: usize) -> Result<DecayFit> {
    let k_lo = k_lo.max(1);
    let k_hi = k_hi.min(report.kmax);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    if report.dim == 1 {
        for k in k_lo..=k_hi {
            let a = report.zeta_at(&[k as i64]).expect("inside band").norm();
            if a > SPECTRUM_FLOOR {
                pts.push(((k as f64).ln(), a.ln()));
            }
        }
    } else {
        let mut sum = vec![0.0; k_hi + 1];
        let mut count = vec![0usize; k_hi + 1];
        for (k, z) in report.lattice().frequencies().zip(&report.zeta) {
            let t = norm_1(&k) as usize;
            if t >= k_lo && t <= k_hi {
                sum[t] += z.norm_sqr();
                count[t] += 1;
            }
        }
        for t in k_lo..=k_hi {
            if count[t] > 0 {
                let a = (sum[t] / count[t] as f64).sqrt();
                if a > SPECTRUM_FLOOR {
                    pts.push(((t as f64).ln(), a.ln()));
                }
            }
        }
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "window [{k_lo}, {k_hi}] has {} coefficients above {SPECTRUM_FLOOR:e}, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let (slope, intercept, residual) = least_squares_line(&pts);
    Ok(DecayFit {
        k_lo,
        k_hi,
        slope,
        intercept,
        residual,
        points: pts.len(),
    })
}

/// Ordinary least squares `y = slope x + intercept`; returns the RMS residual too.
pub(crate) fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    (slope, intercept, (ss / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Trapezoid quadrature of `(f - phi)^2` over `[-pi, pi]^d`.
    pub l2_sq_error: f64,
    /// `(2 pi)^d sum_k |c_k - zeta_k|^2`, band plus tail.
    pub coefficient_error: f64,
    /// Part of `coefficient_error` from `||k||_inf <= K`.
    pub in_band: f64,
    /// Part from frequencies the target does not have.
    pub tail: f64,
    pub grid: usize,
    pub max_train_residual: Option<f64>,
    pub n: Option<usize>,
    pub kappa: Option<f64>,
}

impl ErrorReport {
    pub fn with_training(mut self, n: usize, max_train_residual: f64, kappa: f64) -> Self {
        self.n = Some(n);
        self.max_train_residual = Some(max_train_residual);
        self.kappa = Some(kappa);
        self
    }

    /// Whether quadrature and coefficient-space values agree within
    /// `max(1e-6, 1e-3 * value)`.
    pub fn parseval_consistent(&self) -> bool {
        let tol = 1e-6_f64.max(1e-3 * self.l2_sq_error.abs());
        (self.l2_sq_error - self.coefficient_error).abs() <= tol
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "l2_sq_error,coefficient_error,in_band,tail,grid,n,max_train_residual,kappa\n{},{},{},{},{},{},{},{}\n",
            fmt_f64(self.l2_sq_error),
            fmt_f64(self.coefficient_error),
            fmt_f64(self.in_band),
            fmt_f64(self.tail),
            self.grid,
            self.n.map(|v| v.to_string()).unwrap_or_default(),
            opt(self.max_train_residual),
            opt(self.kappa),
        )
    }
}

/// Squared L2 distance between `map` and the target `f` on `[-pi, pi]^d`.
pub fn l2_error(map: &impl RealMap, f: &BandlimitedFn, m: usize) -> Result<ErrorReport> {
    l2_error_with_spectrum(map, f, m, None).map(|(e, _)| e)
}

/// [`l2_error`] that also returns the spectrum on `||k||_inf <= kmax` from
/// the same grid evaluation.
pub fn l2_error_with_spectrum(
    map: &impl RealMap,
    f: &BandlimitedFn,
    m: usize,
    spectrum_kmax: Option<usize>,
) -> Result<(ErrorReport, Option<SpectrumReport>)> {
    let dim = f.dim();
    if map.input_dim() != dim {
        return Err(Error::Dimension(format!(
            "map is {}-dimensional, target is {dim}-dimensional",
            map.input_dim()
        )));
    }
    if dim == 1 && m < MIN_L2_GRID_1D {
        return Err(Error::Domain(format!("univariate L2 error needs M >= {MIN_L2_GRID_1D}, got {m}")));
    }
    if 2 * f.bandwidth() >= m {
        return Err(Error::Domain(format!("grid M = {m} cannot resolve bandwidth {}", f.bandwidth())));
    }
    if let Some(k) = spectrum_kmax {
        if m < 8 * (2 * k + 1) {
            return Err(Error::Domain(format!(
                "grid M = {m} is below the anti-aliasing margin for Kmax = {k}"
            )));
        }
    }
    check_budget(dim, m)?;
    let grid = closed_grid(dim, m);
    let phi = map.eval_many(grid.view());
    let target = f.eval_many(grid.view());

    let h = TAU / m as f64;
    let mut quad: f64 = closed_weights(dim, m)
        .iter()
        .zip(phi.iter().zip(target.iter()))
        .map(|(w, (p, t))| w * (p - t).powi(2))
        .sum();
    quad *= h.powi(dim as i32);

    let dense = DenseSpectrum::from_closed_values(phi.as_slice().expect("contiguous"), dim, m);
    let vol = TAU.powi(dim as i32);
    let mut in_band = 0.0;
    let mut tail = 0.0;
    for (idx, z) in dense.bins.iter().enumerate() {
        let k = dense.bin_frequency(idx);
        match f.lattice().index_of(&k) {
            Some(i) => in_band += (z - f.coeffs()[i]).norm_sqr(),
            None => tail += z.norm_sqr(),
        }
    }
    tail += dense.outside;
    let report = ErrorReport {
        l2_sq_error: quad,
        coefficient_error: vol * (in_band + tail),
        in_band: vol * in_band,
        tail: vol * tail,
        grid: m,
        max_train_residual: None,
        n: None,
        kappa: None,
    };
    let spectrum = spectrum_kmax.map(|k| report_from_dense(&dense, k, f.bandwidth(), Extension::Periodic));
    Ok((report, spectrum))
}

/// `sum_i |phi'(x_{i+1}) - phi'(x_i)|` over `M + 1` equispaced points on
/// `[-pi, pi]`, with analytic derivatives. Exact for a ReLU network once the
/// grid separates its kinks.
pub fn total_variation_first_derivative(net: &Mlp, m: usize) -> Result<f64> {
    if net.input_size() != 1 {
        return Err(Error::Unsupported(format!(
            "derivative total variation is univariate, network has d = {}",
            net.input_size()
        )));
    }
    if m < MIN_TV_GRID {
        return Err(Error::Domain(format!("total variation needs M >= {MIN_TV_GRID}, got {m}")));
    }
    let x = closed_grid(1, m);
    let g = net.input_gradients(x.view());
    let d = g.column(0);
    Ok(d.iter().zip(d.iter().skip(1)).map(|(a, b)| (b - a).abs()).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianAudit {
    pub points: usize,
    /// Largest Euclidean norm of `dphi/dx` over the sampled points.
    pub max_jacobian_norm: f64,
    pub spectral_product: f64,
    pub frobenius_product: f64,
    /// Points that sat exactly on a kink.
    pub kink_points: usize,
}

impl JacobianAudit {
    /// `max ||J|| <= prod ||W||_2 <= prod ||W||_F`, each with `AUDIT_SLACK`.
    pub fn holds(&self) -> bool {
        self.max_jacobian_norm <= self.spectral_product + AUDIT_SLACK
            && self.spectral_product <= self.frobenius_product + AUDIT_SLACK
    }
}

/// Samples `num_points` uniform points of `[-pi, pi)^d` and compares the
/// largest Jacobian norm with the weight-norm products.
pub fn jacobian_bound_audit(net: &Mlp, num_points: usize, seed: u64) -> Result<JacobianAudit> {
    if num_points == 0 {
        return Err(Error::Domain("audit needs at least one point".into()));
    }
    let d = net.input_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_norm: f64 = 0.0;
    let mut kinks = 0;
    for _ in 0..num_points {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-PI..PI)).collect();
        let (j, at_kink) = net.jacobian(&x);
        kinks += usize::from(at_kink);
        max_norm = max_norm.max(j.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let norms = net.weight_norms();
    Ok(JacobianAudit {
        points: num_points,
        max_jacobian_norm: max_norm,
        spectral_product: norms.spectral_product,
        frobenius_product: norms.frobenius_product,
        kink_points: kinks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandlimited::{random_bandlimited, SpectrumProfile};
    use crate::map::{FnMap, Zero};
    use crate::network::{Activation, InitScheme, Layer};
    use ndarray::array;

    #[test]
    fn recovers_bandlimited_coefficients() {
        let f = random_bandlimited(1, 5, SpectrumProfile::flat(3)).unwrap();
        let rep = network_spectrum(&f, 1, 20, 512, 5).unwrap();
        for (k, z) in rep.lattice().frequencies().zip(&rep.zeta) {
            let expect = f.coeff(&k);
            assert!((z - expect).norm() < 1e-9, "k = {k:?}");
        }
        assert!(rep.tail_energy < 1e-18);
    }

    #[test]
    fn recovers_2d_coefficients() {
        let f = random_bandlimited(2, 2, SpectrumProfile::flat(5)).unwrap();
        let rep = network_spectrum(&f, 2, 3, 64, 2).unwrap();
        for (k, z) in rep.lattice().frequencies().zip(&rep.zeta) {
            assert!((z - f.coeff(&k)).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_map_has_zero_spectrum() {
        let rep = network_spectrum(&Zero(1), 1, 10, 256, 1).unwrap();
        assert!(rep.zeta.iter().all(|z| z.norm() == 0.0));
        assert!(rep.fit.is_none());
    }

    #[test]
    fn grid_margin_enforced() {
        assert!(matches!(
            network_spectrum(&Zero(1), 1, 10, 100, 1),
            Err(Error::Domain(_))
        ));
    }

    /// Fourier series of the 2 pi-periodic extension of max(0, x) on [-pi, pi):
    /// c_0 = pi/4, c_k = ((-1)^k - 1) / (2 pi k^2) + j (-1)^k / (2k).
    fn relu_coeff(k: i64) -> Complex64 {
        if k == 0 {
            return Complex64::new(PI / 4.0, 0.0);
        }
        let kf = k as f64;
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new((sgn - 1.0) / (TAU * kf * kf), sgn / (2.0 * kf))
    }

    #[test]
    fn periodized_relu_matches_analytic_series() {
        // Cross-check the closed form against direct numerical integration.
        for k in [1i64, 2, 5] {
            let steps = 200_000;
            let h = PI / steps as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..steps {
                let x = (i as f64 + 0.5) * h;
                acc += Complex64::from_polar(x, -(k as f64) * x);
            }
            let c = acc * h / TAU;
            assert!((c - relu_coeff(k)).norm() < 1e-8);
        }
        let relu = FnMap::new(1, |x: &[f64]| x[0].max(0.0));
        let rep = network_spectrum(&relu, 1, 20, 8192, 1).unwrap();
        for k in -20..=20i64 {
            let z = rep.zeta_at(&[k]).unwrap();
            assert!((z.norm() - relu_coeff(k).norm()).abs() < 1e-6, "k = {k}");
            assert!((z - relu_coeff(k)).norm() < 1e-7, "k = {k}");
        }
    }

    fn saw(k: i64) -> Complex64 {
        if k == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new(0.0, sgn / k as f64)
    }

    #[test]
    fn sawtooth_is_exact() {
        // Periodized x: c_k = j (-1)^k / k, energy pi^2 / 3.
        let x = FnMap::new(1, |x: &[f64]| x[0]);
        let rep = network_spectrum(&x, 1, 30, 1024, 1).unwrap();
        for k in -30..=30i64 {
            assert!((rep.zeta_at(&[k]).unwrap() - saw(k)).norm() < 1e-12, "k = {k}");
        }
        let band: f64 = rep.zeta.iter().map(|z| z.norm_sqr()).sum();
        assert!((band + rep.tail_energy - PI * PI / 3.0).abs() < 1e-12);
        assert!(rep.symmetry_defect() < 1e-12);
        // Slow decay is the seam, not an artifact.
        assert!((rep.fit.unwrap().slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bivariate_seams_are_exact() {
        let g = FnMap::new(2, |x: &[f64]| x[0] * x[1] + x[1]);
        let rep = network_spectrum(&g, 2, 4, 128, 1).unwrap();
        for (k, z) in rep.lattice().frequencies().zip(&rep.zeta) {
            let mut expect = saw(k[0]) * saw(k[1]);
            if k[0] == 0 {
                expect += saw(k[1]);
            }
            assert!((z - expect).norm() < 1e-12, "k = {k:?}");
        }
    }

    #[test]
    fn inverse_square_tails() {
        assert!((tail_inverse_squares(0) - PI * PI / 6.0).abs() < 1e-14);
        let direct: f64 = (101..2_000_000u64).map(|k| 1.0 / (k * k) as f64).sum::<f64>() + 1.0 / 2_000_000.0;
        assert!((tail_inverse_squares(100) - direct).abs() < 1e-12);
    }

    #[test]
    fn mirrored_triangle_wave() {
        // x mirrored about -pi is the triangle wave 2|u| - pi:
        // zeta_m = 2 ((-1)^m - 1) / (pi m^2), zeta_0 = 0.
        let x = FnMap::new(1, |x: &[f64]| x[0]);
        let rep = mirrored_spectrum(&x, 40, 4096, 1).unwrap();
        assert_eq!(rep.extension, Extension::Mirrored);
        for m in -40..=40i64 {
            let expect = if m % 2 == 0 { 0.0 } else { -4.0 / (PI * (m * m) as f64) };
            let z = rep.zeta_at(&[m]).unwrap();
            assert!((z.re - expect).abs() < 1e-6 && z.im.abs() < 1e-12, "m = {m}");
        }
        assert!(rep.to_csv().starts_with("m,abs_zeta,re,im\n"));
        assert!(matches!(mirrored_spectrum(&Zero(2), 4, 1024, 1), Err(Error::Unsupported(_))));
        assert!(matches!(mirrored_spectrum(&x, 4, 73, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn mirrored_cosine_series_round_trip() {
        // cos(m (x + pi) / 2) for m = 3 sits at cosine index +-3 with weight 1/2.
        let c = FnMap::new(1, |x: &[f64]| (1.5 * (x[0] + PI)).cos());
        let rep = mirrored_spectrum(&c, 10, 1024, 1).unwrap();
        for m in -10..=10i64 {
            let expect = if m.abs() == 3 { 0.5 } else { 0.0 };
            assert!((rep.zeta_at(&[m]).unwrap() - expect).norm() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn parseval_gap_is_second_order() {
        let f = random_bandlimited(1, 3, SpectrumProfile::flat(4)).unwrap();
        let net = Mlp::init_with(&[1, 16, 16, 1], 3, InitScheme::SpreadKinks).unwrap();
        let gap = |m| {
            let e = l2_error(&net, &f, m).unwrap();
            (e.l2_sq_error - e.coefficient_error).abs()
        };
        let (a, b) = (gap(4096), gap(8192));
        assert!(b < a / 3.0 || b < 1e-12, "{a:e} -> {b:e}");
    }

    #[test]
    fn grid_doubling_agrees_in_band() {
        let net = Mlp::init_with(&[1, 32, 32, 1], 4, InitScheme::SpreadKinks).unwrap();
        let a = network_spectrum(&net, 1, 10, 4096, 1).unwrap();
        let b = network_spectrum(&net, 1, 10, 8192, 1).unwrap();
        let scale = a.zeta.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (x, y) in a.zeta.iter().zip(&b.zeta) {
            assert!((x - y).norm() <= 1e-6 * scale);
        }
        assert!(a.symmetry_defect() < 1e-8);
    }

    fn synthetic(dim: usize, kmax: usize, amp: impl Fn(f64) -> f64) -> SpectrumReport {
        let lat = Lattice::new(dim, kmax);
        let zeta = lat
            .frequencies()
            .map(|k| {
                let t = if dim == 1 { k[0].unsigned_abs() } else { norm_1(&k) } as f64;
                Complex64::new(if t == 0.0 { 1.0 } else { amp(t) }, 0.0)
            })
            .collect();
        SpectrumReport {
            extension: Extension::Periodic,
            dim,
            kmax,
            grid: 8 * (2 * kmax + 1),
            zeta,
            tail_energy: 0.0,
            fit: None,
        }
    }

    #[test]
    fn exact_power_laws() {
        for p in [2.0, 3.0] {
            let rep = synthetic(1, 300, |k| k.powf(-p));
            let fit = decay_fit(&rep, 8, 256).unwrap();
            assert!((fit.slope + p).abs() < 1e-9);
            assert!(fit.residual < 1e-9);
            assert_eq!(fit.points, 249);
        }
        let rep2 = synthetic(2, 30, |t| t.powf(-3.0));
        let fit = decay_fit(&rep2, 4, 30).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-9);
    }

    #[test]
    fn decay_fit_needs_enough_points() {
        let rep = synthetic(1, 40, |k| if k < 12.0 { k.powi(-2) } else { 0.0 });
        assert!(matches!(decay_fit(&rep, 8, 40), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn error_of_identical_and_zero_maps() {
        let f = random_bandlimited(1, 5, SpectrumProfile::flat(7)).unwrap();
        let same = l2_error(&f, &f, 4096).unwrap();
        assert!(same.l2_sq_error <= 1e-12 && same.coefficient_error <= 1e-12);
        let zero = l2_error(&Zero(1), &f, 4096).unwrap();
        let expect = TAU * f.energy();
        assert!((zero.l2_sq_error - expect).abs() <= 1e-6 * expect);
        assert!((zero.coefficient_error - expect).abs() <= 1e-6 * expect);
        assert!(zero.parseval_consistent());
        assert!(matches!(l2_error(&f, &f, 1024), Err(Error::Domain(_))));
    }

    #[test]
    fn error_budget_enforced() {
        let f = random_bandlimited(2, 1, SpectrumProfile::flat(1)).unwrap();
        assert!(matches!(l2_error(&f, &f, 8192), Err(Error::Resource(_))));
    }

    #[test]
    fn parseval_for_a_network() {
        let f = random_bandlimited(1, 5, SpectrumProfile::flat(2)).unwrap();
        let net = Mlp::init_with(&[1, 64, 64, 1], 2, InitScheme::SpreadKinks).unwrap();
        let (e, spec) = l2_error_with_spectrum(&net, &f, 8192, Some(64)).unwrap();
        assert!(e.parseval_consistent(), "{e:?}");
        assert_eq!(spec.unwrap().kmax, 64);
    }

    #[test]
    fn seam_cross_terms_between_axes() {
        // Jumps across both seams whose profiles are not constant: the two
        // sawtooth terms overlap beyond the bins. Without that overlap the
        // coefficient side is off by O(1/M).
        let zero = crate::bandlimited::BandlimitedFn::zero(2, 1);
        let cases: [fn(&[f64]) -> f64; 3] = [
            |x| x[1] * (x[0] - 0.5).max(0.0),
            |x| x[0] * (x[1] - 0.5).max(0.0),
            |x| (x[0] + x[1] - 1.0).max(0.0),
        ];
        for f in cases {
            let e = l2_error(&FnMap::new(2, f), &zero, 256).unwrap();
            let rel = (e.coefficient_error - e.l2_sq_error).abs() / e.l2_sq_error;
            assert!(rel <= 1e-4, "{e:?}");
        }
    }

    fn unit(w: f64, b: f64) -> Mlp {
        Mlp::from_layers(vec![
            Layer {
                w: array![[w]],
                b: array![b],
                act: Activation::Relu,
            },
            Layer {
                w: array![[1.0]],
                b: array![0.0],
                act: Activation::Identity,
            },
        ])
        .unwrap()
    }

    #[test]
    fn total_variation_cases() {
        let affine = Mlp::from_layers(vec![Layer {
            w: array![[2.0]],
            b: array![1.0],
            act: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(total_variation_first_derivative(&affine, 1 << 14).unwrap(), 0.0);
        let tv = total_variation_first_derivative(&unit(-1.7, 0.0), 1 << 14).unwrap();
        assert!((tv - 1.7).abs() < 1e-12);
        assert!(total_variation_first_derivative(&affine, 100).is_err());
    }

    #[test]
    fn audit_cases() {
        let zero = Mlp::from_layers(vec![Layer {
            w: array![[0.0]],
            b: array![0.0],
            act: Activation::Identity,
        }])
        .unwrap();
        let a = jacobian_bound_audit(&zero, 10, 0).unwrap();
        assert_eq!((a.max_jacobian_norm, a.spectral_product, a.frobenius_product), (0.0, 0.0, 0.0));
        assert!(a.holds());
        let lin = Mlp::from_layers(vec![Layer {
            w: array![[-1.25]],
            b: array![0.3],
            act: Activation::Identity,
        }])
        .unwrap();
        let a = jacobian_bound_audit(&lin, 10, 0).unwrap();
        assert_eq!(a.max_jacobian_norm, 1.25);
        assert!((a.spectral_product - 1.25).abs() < 1e-15);
        assert_eq!(a.frobenius_product, 1.25);
        assert!(jacobian_bound_audit(&lin, 0, 0).is_err());
    }

    #[test]
    fn csv_headers() {
        let rep = synthetic(2, 1, |t| 1.0 / t);
        let csv = rep.to_csv();
        assert!(csv.starts_with("k_0,k_1,abs_zeta,re,im\n"));
        assert_eq!(csv.lines().count(), 10);
    }
}
