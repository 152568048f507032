//! Band-limited targets: real trigonometric polynomials on `[-pi, pi)^d`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{norm_1, norm_inf, Lattice};
use crate::map::RealMap;
use crate::textio::{fmt_f64, parse_f64};

const SYMMETRY_TOL: f64 = 1e-12;

/// Wraps a coordinate into `[-pi, pi)`; `pi` itself maps to `-pi`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x - TAU * ((x + PI) / TAU).floor();
    if y >= PI {
        y -= TAU;
    }
    if y < -PI {
        y = -PI;
    }
    y
}

/// `f(x) = sum_k c_k e^{j k.x}` over `||k||_inf <= K`, with `c_{-k} = conj(c_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandlimitedFn {
    lattice: Lattice,
    coeffs: Vec<Complex64>,
}

impl BandlimitedFn {
    /// Checks length and conjugate symmetry, then stores the coefficients with
    /// the symmetry made exact.
    pub fn new(dim: usize, bandwidth: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let lattice = Lattice::new(dim, bandwidth);
        if coeffs.len() != lattice.len() {
            return Err(Error::Dimension(format!(
                "expected {} coefficients for d={dim}, K={bandwidth}, got {}",
                lattice.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("coefficients must be finite".into()));
        }
        let scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for (i, c) in coeffs.iter().enumerate() {
            let mirror = coeffs[lattice.mirror(i)].conj();
            if (c - mirror).norm() > SYMMETRY_TOL * scale {
                return Err(Error::Domain(format!(
                    "coefficients are not conjugate symmetric at k = {:?}",
                    lattice.frequency(i)
                )));
            }
        }
        Ok(Self::from_half_exact(lattice, coeffs))
    }

    fn from_half_exact(lattice: Lattice, mut coeffs: Vec<Complex64>) -> Self {
        let center = lattice.center();
        for i in 0..center {
            coeffs[lattice.mirror(i)] = coeffs[i].conj();
        }
        coeffs[center].im = 0.0;
        Self { lattice, coeffs }
    }

    pub fn zero(dim: usize, bandwidth: usize) -> Self {
        let lattice = Lattice::new(dim, bandwidth);
        Self {
            lattice,
            coeffs: vec![Complex64::new(0.0, 0.0); lattice.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.lattice.bandwidth
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.lattice
            .index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// `sum |c_k|^2`, i.e. the mean square of `f` over the torus.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Complex sum before dropping the imaginary residue.
    pub fn evaluate_complex(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.dim(), "point dimension");
        let k = self.bandwidth() as i64;
        let side = self.lattice.side();
        // Per-axis tables e^{j m x_a}, m = -K..K.
        let tables: Vec<Vec<Complex64>> = x
            .iter()
            .map(|&xa| {
                let xa = wrap_angle(xa);
                (-k..=k)
                    .map(|m| Complex64::from_polar(1.0, m as f64 * xa))
                    .collect()
            })
            .collect();
        let mut sum = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coeffs.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut rest = idx;
            let mut term = *c;
            for table in &tables {
                term *= table[rest % side];
                rest /= side;
            }
            sum += term;
        }
        sum
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_complex(x).re
    }

    /// `sum_{||k||_inf > k0} |c_k|^2`.
    pub fn fourier_tail_energy(&self, k0: usize) -> f64 {
        self.lattice
            .frequencies()
            .zip(&self.coeffs)
            .filter(|(k, _)| norm_inf(k) > k0 as u64)
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# band-limited trigonometric polynomial").unwrap();
        writeln!(s, "d = {}", self.dim()).unwrap();
        writeln!(s, "K = {}", self.bandwidth()).unwrap();
        writeln!(s, "coeffs = {}", self.coeffs.len()).unwrap();
        for c in &self.coeffs {
            writeln!(s, "{} {}", fmt_f64(c.re), fmt_f64(c.im)).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<usize> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing `{key}` line")))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected `{key} = ...`, got `{line}`")))?;
            if k.trim() != key {
                return Err(Error::Parse(format!("expected `{key}`, got `{}`", k.trim())));
            }
            v.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad value for `{key}`: `{}`", v.trim())))
        };
        let d = header("d")?;
        let k = header("K")?;
        let count = header("coeffs")?;
        let mut coeffs = Vec::with_capacity(count);
        for line in lines {
            let mut parts = line.split_whitespace();
            let re = parse_f64(parts.next().unwrap_or(""))?;
            let im = parse_f64(parts.next().unwrap_or(""))?;
            coeffs.push(Complex64::new(re, im));
        }
        if coeffs.len() != count {
            return Err(Error::Parse(format!(
                "declared {count} coefficients, found {}",
                coeffs.len()
            )));
        }
        Self::new(d, k, coeffs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

impl RealMap for BandlimitedFn {
    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumKind {
    /// Random magnitudes in `[0.5, 1]` with random phases, rescaled so that
    /// `sum |c_k|^2 = amplitude^2`. Every coefficient is nonzero.
    Flat,
    /// `|c_k| = amplitude * ||k||_1^{-p}` with random phases; `c_0 = amplitude`.
    Decaying { exponent: f64 },
    /// A single cosine at frequency `(K, 0, ..., 0)` with RMS `amplitude`.
    SingleTone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumProfile {
    pub kind: SpectrumKind,
    pub seed: u64,
    pub amplitude: f64,
}

impl SpectrumProfile {
    pub fn flat(seed: u64) -> Self {
        Self {
            kind: SpectrumKind::Flat,
            seed,
            amplitude: 1.0,
        }
    }

    pub fn decaying(exponent: f64, seed: u64) -> Self {
        Self {
            kind: SpectrumKind::Decaying { exponent },
            seed,
            amplitude: 1.0,
        }
    }

    pub fn single_tone(seed: u64) -> Self {
        Self {
            kind: SpectrumKind::SingleTone,
            seed,
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }
}

/// Draws a random real trigonometric polynomial. Deterministic in the seed.
///
/// Coefficients are drawn on the half lattice below the center and mirrored,
/// so conjugate symmetry holds exactly.
pub fn random_bandlimited(dim: usize, bandwidth: usize, profile: SpectrumProfile) -> Result<BandlimitedFn> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if !(profile.amplitude.is_finite() && profile.amplitude >= 0.0) {
        return Err(Error::Domain("amplitude must be finite and nonnegative".into()));
    }
    let lattice = Lattice::new(dim, bandwidth);
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); lattice.len()];
    let center = lattice.center();
    match profile.kind {
        SpectrumKind::Flat => {
            for c in coeffs.iter_mut().take(center) {
                let mag = rng.random_range(0.5..=1.0);
                let phase = rng.random_range(0.0..TAU);
                *c = Complex64::from_polar(mag, phase);
            }
            let mag: f64 = rng.random_range(0.5..=1.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            coeffs[center] = Complex64::new(sign * mag, 0.0);
            let f = BandlimitedFn::from_half_exact(lattice, coeffs);
            let scale = profile.amplitude / f.energy().sqrt();
            let coeffs = f.coeffs.iter().map(|c| c * scale).collect();
            Ok(BandlimitedFn::from_half_exact(lattice, coeffs))
        }
        SpectrumKind::Decaying { exponent } => {
            if !(exponent > 0.0) {
                return Err(Error::Domain(format!("decay exponent must be positive, got {exponent}")));
            }
            for (i, c) in coeffs.iter_mut().enumerate().take(center) {
                let k1 = norm_1(&lattice.frequency(i)) as f64;
                let phase = rng.random_range(0.0..TAU);
                *c = Complex64::from_polar(profile.amplitude * k1.powf(-exponent), phase);
            }
            coeffs[center] = Complex64::new(profile.amplitude, 0.0);
            Ok(BandlimitedFn::from_half_exact(lattice, coeffs))
        }
        SpectrumKind::SingleTone => {
            if bandwidth == 0 {
                coeffs[center] = Complex64::new(profile.amplitude, 0.0);
            } else {
                let mut k = vec![0i64; dim];
                k[0] = -(bandwidth as i64);
                let idx = lattice.index_of(&k).expect("on lattice");
                let phase = rng.random_range(0.0..TAU);
                coeffs[idx] = Complex64::from_polar(profile.amplitude / 2f64.sqrt(), phase);
            }
            Ok(BandlimitedFn::from_half_exact(lattice, coeffs))
        }
    }
}

/// Approximately band-limited target: `|c_k| = ||k||_1^{-p}` up to `Kmax`.
pub fn random_fast_decay(dim: usize, kmax: usize, exponent: f64, seed: u64) -> Result<BandlimitedFn> {
    if exponent < 1.0 {
        return Err(Error::Domain(format!("exponent must be >= 1, got {exponent}")));
    }
    if kmax < 1 {
        return Err(Error::Domain("Kmax must be >= 1".into()));
    }
    random_bandlimited(dim, kmax, SpectrumProfile::decaying(exponent, seed))
}
