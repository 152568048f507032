//! End-to-end studies: error against sample count for interpolating
//! networks (uniform and random sampling, univariate and gridded
//! multivariate), and the conditioning of random sampling operators.
//!
//! Every run is a cell `(scheme, n, seed)`. Cells are independent and run
//! in parallel on a pool capped by `BANDLAB_THREADS`; results are sorted
//! into canonical order afterwards, so outputs do not depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::{self, decay_fit, l2_error, least_squares_line, mirrored_spectrum, network_spectrum};
use crate::bandlimited::{random_bandlimited, BandlimitedFn, SpectrumProfile};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::network::{train_to_interpolation, InitScheme, Mlp, TrainConfig};
use crate::sampling::{build_operator, equispaced_grid, kappa_bound, random_points, SampleSet, Scheme};
use crate::textio::fmt_f64;

pub const RESULTS_HEADER: &str = "kind,scheme,seed,d,K,n,l2_sq_error,kappa,epochs,final_residual,interpolated";
pub const SLOPES_HEADER: &str = "scheme,slope,intercept,residual,fit_n_min,fit_n_max";
pub const MANOVA_HEADER: &str = "beta,n,seed,kappa,kappa_bound";
pub const DIAGNOSTICS_HEADER: &str =
    "kind,scheme,seed,n,coefficient_error,parseval_consistent,refine_steps,decay_slope";
/// Fewest seeds the MANOVA study accepts.
pub const MIN_MANOVA_SEEDS: usize = 20;
pub const THREADS_ENV: &str = "BANDLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    ErrorScaling,
    ManovaStudy,
    MultivariateScaling,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ErrorScaling => "error-scaling",
            ExperimentKind::ManovaStudy => "manova-study",
            ExperimentKind::MultivariateScaling => "multivariate-scaling",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "error-scaling" => Ok(ExperimentKind::ErrorScaling),
            "manova-study" | "manova" => Ok(ExperimentKind::ManovaStudy),
            "multivariate-scaling" | "multivariate" => Ok(ExperimentKind::MultivariateScaling),
            other => Err(Error::Parse(format!("unknown experiment kind `{other}`"))),
        }
    }
}

/// Target spectrum family, parsed from `target.kind`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetKind {
    Flat,
    Decaying(f64),
    SingleTone,
    Zero,
}

impl TargetKind {
    /// Reads `target.kind` (default `flat`) and, for `decaying`,
    /// `target.exponent`.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(match cfg.get("target.kind").unwrap_or("flat") {
            "flat" => TargetKind::Flat,
            "decaying" => TargetKind::Decaying(cfg.require("target.exponent")?),
            "single-tone" => TargetKind::SingleTone,
            "zero" => TargetKind::Zero,
            other => return Err(Error::Parse(format!("unknown target kind `{other}`"))),
        })
    }

    pub fn to_config(self, c: &mut Config) {
        match self {
            TargetKind::Flat => c.set("target.kind", "flat"),
            TargetKind::Decaying(p) => {
                c.set("target.kind", "decaying");
                c.set("target.exponent", p);
            }
            TargetKind::SingleTone => c.set("target.kind", "single-tone"),
            TargetKind::Zero => c.set("target.kind", "zero"),
        }
    }

    pub fn draw(self, dim: usize, bandwidth: usize, amplitude: f64, seed: u64) -> Result<BandlimitedFn> {
        let profile = match self {
            TargetKind::Zero => return Ok(BandlimitedFn::zero(dim, bandwidth)),
            TargetKind::Flat => SpectrumProfile::flat(seed),
            TargetKind::Decaying(p) => SpectrumProfile::decaying(p, seed),
            TargetKind::SingleTone => SpectrumProfile::single_tone(seed),
        };
        random_bandlimited(dim, bandwidth, profile.with_amplitude(amplitude))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dim: usize,
    /// Target bandwidth `K`; also the operator bandwidth for `kappa`.
    pub bandwidth: usize,
    /// Sample counts for error scaling.
    pub n_values: Vec<usize>,
    /// Grid bandwidths for multivariate scaling, `n = (2K+1)^d` each.
    pub grid_bandwidths: Vec<usize>,
    /// Redundancies `n / (2K+1)` for the MANOVA study.
    pub betas: Vec<f64>,
    /// Sampling families; uniform runs use equispaced points (the
    /// oversampled case when `n > (2K+1)^d`).
    pub schemes: Vec<Scheme>,
    /// Run seeds, one cell per seed.
    pub seeds: Vec<u64>,
    /// Master seed: draws the target and salts every per-run seed.
    pub seed: u64,
    pub target: TargetKind,
    pub target_amplitude: f64,
    pub hidden: Vec<usize>,
    pub init: InitScheme,
    /// Start from a zero output layer, so the untrained net is identically
    /// zero (a zero target is then fitted exactly).
    pub zero_output: bool,
    pub train: TrainConfig,
    /// Dense analysis grid `M` per axis.
    pub grid: usize,
    /// Decay-fit window in `x`-frequencies; `None` skips spectra.
    pub decay_window: Option<(usize, usize)>,
    /// Largest `n` entering slope fits (plateau cutoff).
    pub fit_max_n: Option<usize>,
}

pub const K5_N_VALUES: [usize; 8] = [11, 16, 24, 32, 40, 48, 56, 64];
pub const K4_N_VALUES: [usize; 8] = [9, 16, 24, 32, 40, 48, 56, 64];

const KNOWN_KEYS: &[&str] = &[
    "experiment.kind",
    "experiment.dim",
    "experiment.seed",
    "experiment.seeds",
    "experiment.n",
    "experiment.grid_k",
    "experiment.beta",
    "experiment.schemes",
    "experiment.fit_max_n",
    "target.bandwidth",
    "target.kind",
    "target.exponent",
    "target.amplitude",
    "net.hidden",
    "net.init",
    "net.zero_output",
    "train.learning_rate",
    "train.momentum",
    "train.weight_decay",
    "train.max_epochs",
    "train.tolerance",
    "train.refine_steps",
    "analysis.grid",
    "analysis.decay_window",
];

impl ExperimentConfig {
    /// Defaults for `kind`: the univariate K = 5 study on the n grid
    /// 11..64, the MANOVA grid beta in {1.5, 2, 4, 8} with 20 seeds, or
    /// the d = 2 grid study with K in {1, 2, 3, 4}.
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            dim: 1,
            bandwidth: 5,
            n_values: K5_N_VALUES.to_vec(),
            grid_bandwidths: Vec::new(),
            betas: Vec::new(),
            schemes: vec![Scheme::UniformGrid, Scheme::RandomIid],
            seeds: vec![0, 1, 2],
            seed: 1,
            target: TargetKind::Flat,
            target_amplitude: 1.0,
            hidden: vec![1000, 1000],
            init: InitScheme::ZeroBias,
            zero_output: false,
            train: TrainConfig::default(),
            grid: 8192,
            decay_window: None,
            fit_max_n: None,
        };
        match kind {
            ExperimentKind::ErrorScaling => base,
            ExperimentKind::ManovaStudy => Self {
                n_values: Vec::new(),
                betas: vec![1.5, 2.0, 4.0, 8.0],
                schemes: vec![Scheme::RandomIid],
                seeds: (0..MIN_MANOVA_SEEDS as u64).collect(),
                ..base
            },
            ExperimentKind::MultivariateScaling => Self {
                dim: 2,
                bandwidth: 1,
                n_values: Vec::new(),
                grid_bandwidths: vec![1, 2, 3, 4],
                schemes: vec![Scheme::UniformGrid],
                grid: 512,
                ..base
            },
        }
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(KNOWN_KEYS)?;
        let kind: ExperimentKind = cfg.require("experiment.kind")?;
        let mut out = Self::preset(kind);
        out.dim = cfg.get_or("experiment.dim", out.dim)?;
        out.seed = cfg.get_or("experiment.seed", out.seed)?;
        if let Some(v) = cfg.list("experiment.seeds")? {
            out.seeds = v;
        }
        if let Some(v) = cfg.list("experiment.n")? {
            out.n_values = v;
        }
        if let Some(v) = cfg.list("experiment.grid_k")? {
            out.grid_bandwidths = v;
        }
        if let Some(v) = cfg.list("experiment.beta")? {
            out.betas = v;
        }
        if let Some(v) = cfg.list("experiment.schemes")? {
            out.schemes = v;
        }
        out.fit_max_n = cfg.parse_value("experiment.fit_max_n")?;
        out.bandwidth = cfg.get_or("target.bandwidth", out.bandwidth)?;
        out.target = TargetKind::from_config(cfg)?;
        out.target_amplitude = cfg.get_or("target.amplitude", out.target_amplitude)?;
        if let Some(v) = cfg.list("net.hidden")? {
            out.hidden = v;
        }
        out.init = cfg.get_or("net.init", out.init)?;
        out.zero_output = cfg.get_or("net.zero_output", out.zero_output)?;
        let t = &mut out.train;
        t.learning_rate = cfg.get_or("train.learning_rate", t.learning_rate)?;
        t.momentum = cfg.get_or("train.momentum", t.momentum)?;
        t.weight_decay = cfg.get_or("train.weight_decay", t.weight_decay)?;
        t.max_epochs = cfg.get_or("train.max_epochs", t.max_epochs)?;
        t.tolerance = cfg.get_or("train.tolerance", t.tolerance)?;
        t.refine_steps = cfg.get_or("train.refine_steps", t.refine_steps)?;
        out.grid = cfg.get_or("analysis.grid", out.grid)?;
        out.decay_window = match cfg.list::<usize>("analysis.decay_window")? {
            None => None,
            Some(v) if v.len() == 2 && v[0] < v[1] => Some((v[0], v[1])),
            Some(_) => return Err(Error::Parse("`analysis.decay_window` needs `lo, hi` with lo < hi".into())),
        };
        out.validate()?;
        Ok(out)
    }

    /// Inverse of [`from_config`](Self::from_config), every key spelled out.
    pub fn to_config(&self) -> Config {
        let join = |v: Vec<String>| v.join(", ");
        let mut c = Config::new();
        c.set("experiment.kind", self.kind.as_str());
        c.set("experiment.dim", self.dim);
        c.set("experiment.seed", self.seed);
        c.set("experiment.seeds", join(self.seeds.iter().map(u64::to_string).collect()));
        if !self.n_values.is_empty() {
            c.set("experiment.n", join(self.n_values.iter().map(usize::to_string).collect()));
        }
        if !self.grid_bandwidths.is_empty() {
            c.set("experiment.grid_k", join(self.grid_bandwidths.iter().map(usize::to_string).collect()));
        }
        if !self.betas.is_empty() {
            c.set("experiment.beta", join(self.betas.iter().map(f64::to_string).collect()));
        }
        c.set("experiment.schemes", join(self.schemes.iter().map(|s| s.as_str().to_string()).collect()));
        if let Some(n) = self.fit_max_n {
            c.set("experiment.fit_max_n", n);
        }
        c.set("target.bandwidth", self.bandwidth);
        self.target.to_config(&mut c);
        c.set("target.amplitude", self.target_amplitude);
        c.set("net.hidden", join(self.hidden.iter().map(usize::to_string).collect()));
        c.set("net.init", self.init);
        c.set("net.zero_output", self.zero_output);
        c.set("train.learning_rate", self.train.learning_rate);
        c.set("train.momentum", self.train.momentum);
        c.set("train.weight_decay", self.train.weight_decay);
        c.set("train.max_epochs", self.train.max_epochs);
        c.set("train.tolerance", self.train.tolerance);
        c.set("train.refine_steps", self.train.refine_steps);
        c.set("analysis.grid", self.grid);
        if let Some((lo, hi)) = self.decay_window {
            c.set("analysis.decay_window", format!("{lo}, {hi}"));
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.schemes.is_empty() {
            return bad("scheme list is empty".into());
        }
        if self.schemes.contains(&Scheme::OversampledUniform) {
            return bad("use `uniform-grid` for equispaced sampling; oversampling follows from n".into());
        }
        let critical = (2 * self.bandwidth + 1).pow(self.dim as u32);
        match self.kind {
            ExperimentKind::ErrorScaling => {
                if self.dim != 1 {
                    return bad(format!("error scaling is univariate, got d = {}", self.dim));
                }
                if self.n_values.is_empty() {
                    return bad("n list is empty".into());
                }
                if let Some(&n) = self.n_values.iter().find(|&&n| n < critical) {
                    return bad(format!("n = {n} is below 2K+1 = {critical}"));
                }
            }
            ExperimentKind::ManovaStudy => {
                if self.dim != 1 {
                    return bad(format!("the MANOVA study is univariate, got d = {}", self.dim));
                }
                if self.seeds.len() < MIN_MANOVA_SEEDS {
                    return bad(format!("the MANOVA study needs at least {MIN_MANOVA_SEEDS} seeds"));
                }
                if self.betas.is_empty() || self.betas.iter().any(|&b| !(b >= 1.0 && b.is_finite())) {
                    return bad("beta grid must be nonempty with every beta >= 1".into());
                }
            }
            ExperimentKind::MultivariateScaling => {
                if !(2..=3).contains(&self.dim) {
                    return bad(format!("multivariate scaling needs d in {{2, 3}}, got {}", self.dim));
                }
                if self.schemes != [Scheme::UniformGrid] {
                    return bad("multivariate scaling samples on the uniform grid only".into());
                }
                if self.grid_bandwidths.is_empty() {
                    return bad("grid bandwidth list is empty".into());
                }
                if let Some(&k) = self.grid_bandwidths.iter().find(|&&k| k < self.bandwidth) {
                    return bad(format!("grid K = {k} is below the target bandwidth {}", self.bandwidth));
                }
            }
        }
        if self.kind != ExperimentKind::ManovaStudy {
            if self.hidden.is_empty() || self.hidden.contains(&0) {
                return bad("hidden layer sizes must be nonempty and positive".into());
            }
            self.train.validate()?;
            if 2 * self.bandwidth >= self.grid {
                return bad(format!("analysis grid {} cannot resolve bandwidth {}", self.grid, self.bandwidth));
            }
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.dim];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    /// The experiment's target, drawn once from the master seed.
    pub fn target_fn(&self) -> Result<BandlimitedFn> {
        let seed = derive_seed(self.seed, Tag::Target, 0, 0);
        self.target.draw(self.dim, self.bandwidth, self.target_amplitude, seed)
    }
}

#[derive(Debug, Clone, Copy)]
enum Tag {
    Target = 1,
    Points = 2,
    Init = 3,
}

/// Per-purpose seed from the master seed (SplitMix64 finalizer over the
/// mixed words), so that no two streams of one experiment coincide.
fn derive_seed(master: u64, tag: Tag, run: u64, n: u64) -> u64 {
    let mut z = master;
    for w in [tag as u64, run, n] {
        z = z.wrapping_add(w).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub kind: ExperimentKind,
    /// Sampling family (`uniform-grid` or `random-iid`).
    pub scheme: Scheme,
    pub seed: u64,
    pub dim: usize,
    /// Operator bandwidth: the target's for univariate studies, the grid's
    /// for the multivariate one.
    pub bandwidth: usize,
    pub n: usize,
    pub l2_sq_error: Option<f64>,
    /// `+inf` when the operator is rank deficient.
    pub kappa: f64,
    pub epochs: usize,
    pub final_residual: Option<f64>,
    pub interpolated: bool,
    pub coefficient_error: Option<f64>,
    pub parseval_consistent: Option<bool>,
    pub refine_steps: usize,
    pub decay_slope: Option<f64>,
    pub beta: Option<f64>,
    pub kappa_bound: Option<f64>,
}

impl ExperimentRow {
    fn sort_key(&self) -> (Scheme, usize, u64) {
        (self.scheme, self.n, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub scheme: Scheme,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub fit_n_min: usize,
    pub fit_n_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub dim: usize,
    pub rows: Vec<ExperimentRow>,
    pub slopes: Vec<SlopeFit>,
}

impl ExperimentResult {
    pub fn empty(kind: ExperimentKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            rows: Vec::new(),
            slopes: Vec::new(),
        }
    }

    pub fn slope(&self, scheme: Scheme) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.scheme == scheme)
    }

    /// `(n, median error)` over interpolated rows of `scheme`, ascending `n`.
    pub fn median_errors(&self, scheme: Scheme) -> Vec<(usize, f64)> {
        let mut ns: Vec<usize> = self.rows.iter().filter(|r| r.scheme == scheme).map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.into_iter()
            .filter_map(|n| {
                let errs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.scheme == scheme && r.n == n && r.interpolated)
                    .filter_map(|r| r.l2_sq_error)
                    .collect();
                median(errs).map(|m| (n, m))
            })
            .collect()
    }

    /// `(beta, median kappa, bound)` per beta, in config order.
    pub fn median_kappa_by_beta(&self) -> Vec<(f64, f64, Option<f64>)> {
        let mut betas: Vec<f64> = Vec::new();
        for r in &self.rows {
            if let Some(b) = r.beta {
                if !betas.contains(&b) {
                    betas.push(b);
                }
            }
        }
        betas
            .into_iter()
            .map(|b| {
                let rows: Vec<&ExperimentRow> = self.rows.iter().filter(|r| r.beta == Some(b)).collect();
                let m = median(rows.iter().map(|r| r.kappa).collect()).unwrap_or(f64::NAN);
                (b, m, rows[0].kappa_bound)
            })
            .collect()
    }
}

/// Median; the mean of the middle pair for even counts. `None` if empty.
pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Ordinary least squares of `log error` on `log n`: `(slope, intercept,
/// RMS residual)`.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!("slope fit needs 3 points, got {}", pairs.len())));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::Domain(format!("log-log fit needs positive finite values, got {p:?}")));
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(n, e)| (n.ln(), e.ln())).collect();
    Ok(least_squares_line(&logs))
}

/// Runs `jobs` on a pool of `BANDLAB_THREADS` threads (default: all cores).
fn in_pool<T: Send>(op: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Domain(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    Ok(pool.install(op))
}

/// Points for one cell and the label its sample set carries; `run_cell`
/// samples exactly these, so a row's `kappa` can be recomputed from them.
pub fn cell_points(cfg: &ExperimentConfig, scheme: Scheme, n: usize, seed: u64) -> Result<(ndarray::Array2<f64>, Scheme)> {
    let critical = (2 * cfg.bandwidth + 1).pow(cfg.dim as u32);
    match scheme {
        Scheme::RandomIid => Ok((
            random_points(cfg.dim, n, derive_seed(cfg.seed, Tag::Points, seed, n as u64))?,
            Scheme::RandomIid,
        )),
        _ => {
            let per_axis = (n as f64).powf(1.0 / cfg.dim as f64).round() as usize;
            if per_axis.pow(cfg.dim as u32) != n {
                return Err(Error::Domain(format!("n = {n} is not a full {}-dimensional grid", cfg.dim)));
            }
            let label = if n == critical { Scheme::UniformGrid } else { Scheme::OversampledUniform };
            Ok((equispaced_grid(cfg.dim, per_axis), label))
        }
    }
}

/// Trains and measures one cell. The row's `bandwidth` is `cfg.bandwidth`;
/// the multivariate runner overrides it. Divergence is recorded as a failed
/// row, not an error.
pub fn run_cell(
    cfg: &ExperimentConfig,
    target: &BandlimitedFn,
    scheme: Scheme,
    n: usize,
    seed: u64,
) -> Result<(ExperimentRow, Mlp)> {
    let (points, label) = cell_points(cfg, scheme, n, seed)?;
    let kappa = build_operator(points.view(), cfg.bandwidth)?.condition_number()?;
    let samples = SampleSet::from_map(target, points, label, Some(seed))?;
    let mut init = Mlp::init_with(&cfg.layer_sizes(), derive_seed(cfg.seed, Tag::Init, seed, 0), cfg.init)?;
    if cfg.zero_output {
        let last = init.layers.last_mut().expect("nets have an output layer");
        last.w.fill(0.0);
        last.b.fill(0.0);
    }
    let train = TrainConfig { seed, ..cfg.train };
    let mut row = ExperimentRow {
        kind: cfg.kind,
        scheme,
        seed,
        dim: cfg.dim,
        bandwidth: cfg.bandwidth,
        n,
        l2_sq_error: None,
        kappa,
        epochs: 0,
        final_residual: None,
        interpolated: false,
        coefficient_error: None,
        parseval_consistent: None,
        refine_steps: 0,
        decay_slope: None,
        beta: None,
        kappa_bound: None,
    };
    let net = match train_to_interpolation(&init, &samples, &train) {
        Ok((net, report)) => {
            row.epochs = report.epochs;
            row.refine_steps = report.refine_steps;
            row.final_residual = Some(report.final_max_residual);
            row.interpolated = report.interpolated;
            net
        }
        Err(Error::Divergence { epoch, .. }) => {
            row.epochs = epoch;
            row.final_residual = Some(f64::INFINITY);
            return Ok((row, init));
        }
        Err(e) => return Err(e),
    };
    let err = l2_error(&net, target, cfg.grid)?;
    row.l2_sq_error = Some(err.l2_sq_error);
    row.coefficient_error = Some(err.coefficient_error);
    row.parseval_consistent = Some(err.parseval_consistent());
    if let Some((lo, hi)) = cfg.decay_window {
        row.decay_slope = Some(decay_slope(&net, cfg, lo, hi)?);
    }
    Ok((row, net))
}

/// Decay slope on `x`-frequencies `[lo, hi]`: mirrored extension for
/// `d = 1` (cosine indices `[2 lo, 2 hi]`), periodic shells otherwise.
fn decay_slope(net: &Mlp, cfg: &ExperimentConfig, lo: usize, hi: usize) -> Result<f64> {
    let fit = if cfg.dim == 1 {
        let kmax = 2 * hi;
        let m = (8 * (2 * kmax + 1)).next_power_of_two();
        decay_fit(&mirrored_spectrum(net, kmax, m, cfg.bandwidth)?, 2 * lo, kmax)?
    } else {
        let m = (8 * (2 * hi + 1)).next_power_of_two();
        decay_fit(&network_spectrum(net, cfg.dim, hi, m, cfg.bandwidth)?, lo, hi)?
    };
    Ok(fit.slope)
}

/// One fit per scheme over per-`n` medians of interpolated rows.
fn fit_slopes(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<Vec<SlopeFit>> {
    let tol_sq = cfg.train.tolerance.powi(2);
    let mut out = Vec::new();
    for &scheme in &cfg.schemes {
        let meds: Vec<(usize, f64)> = result
            .median_errors(scheme)
            .into_iter()
            .filter(|&(n, _)| cfg.fit_max_n.is_none_or(|cap| n <= cap))
            .collect();
        if meds.iter().all(|&(_, e)| e <= tol_sq) {
            // Degenerate target: nothing to fit.
            continue;
        }
        let pairs: Vec<(f64, f64)> = meds.iter().map(|&(n, e)| (n as f64, e)).collect();
        let (slope, intercept, residual) = fit_loglog_slope(&pairs)?;
        out.push(SlopeFit {
            scheme,
            slope,
            intercept,
            residual,
            fit_n_min: meds[0].0,
            fit_n_max: meds[meds.len() - 1].0,
        });
    }
    Ok(out)
}

/// Errors naming the first `(scheme, n)` where no seed interpolated.
fn require_some_interpolation(rows: &[ExperimentRow]) -> Result<()> {
    for r in rows {
        let all_failed = rows
            .iter()
            .filter(|o| o.scheme == r.scheme && o.n == r.n)
            .all(|o| !o.interpolated);
        if all_failed {
            return Err(Error::Experiment(format!(
                "no seed interpolated at n = {} ({})",
                r.n, r.scheme
            )));
        }
    }
    Ok(())
}

fn run_cells(cfg: &ExperimentConfig, cells: Vec<(Scheme, usize, usize, u64)>) -> Result<Vec<ExperimentRow>> {
    let target = cfg.target_fn()?;
    let mut rows = in_pool(|| {
        cells
            .into_par_iter()
            .map(|(scheme, n, k, seed)| {
                let (mut row, _) = run_cell(cfg, &target, scheme, n, seed)?;
                row.bandwidth = k;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    rows.sort_by_key(ExperimentRow::sort_key);
    Ok(rows)
}

/// Error against `n` for each sampling family, one fixed target.
pub fn run_error_scaling(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.kind != ExperimentKind::ErrorScaling {
        return Err(Error::Domain(format!("expected an error-scaling config, got {}", cfg.kind.as_str())));
    }
    cfg.validate()?;
    let mut cells = Vec::new();
    for &scheme in &cfg.schemes {
        for &n in &cfg.n_values {
            for &seed in &cfg.seeds {
                cells.push((scheme, n, cfg.bandwidth, seed));
            }
        }
    }
    let rows = run_cells(cfg, cells)?;
    require_some_interpolation(&rows)?;
    let mut result = ExperimentResult {
        kind: cfg.kind,
        dim: cfg.dim,
        rows,
        slopes: Vec::new(),
    };
    result.slopes = fit_slopes(cfg, &result)?;
    Ok(result)
}

/// Uniform grids `n = (2K+1)^d` for each grid bandwidth `K`.
///
/// The operator behind `kappa` is built at the grid bandwidth, so every row
/// reports the DFT's `kappa = 1`.
pub fn run_multivariate_scaling(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.kind != ExperimentKind::MultivariateScaling {
        return Err(Error::Domain(format!(
            "expected a multivariate-scaling config, got {}",
            cfg.kind.as_str()
        )));
    }
    cfg.validate()?;
    let evals = (cfg.grid as f64).powi(cfg.dim as i32);
    if evals > analysis::EVAL_BUDGET as f64 {
        return Err(Error::Resource(format!(
            "analysis grid {}^{} exceeds the evaluation budget of {}",
            cfg.grid,
            cfg.dim,
            analysis::EVAL_BUDGET
        )));
    }
    let mut cells = Vec::new();
    for &k in &cfg.grid_bandwidths {
        let n = (2 * k + 1).pow(cfg.dim as u32);
        for &seed in &cfg.seeds {
            cells.push((Scheme::UniformGrid, n, k, seed));
        }
    }
    // Each cell samples at its own grid bandwidth.
    let target = cfg.target_fn()?;
    let mut rows = in_pool(|| {
        cells
            .into_par_iter()
            .map(|(scheme, n, k, seed)| {
                let cell_cfg = ExperimentConfig {
                    bandwidth: k,
                    ..cfg.clone()
                };
                let (mut row, _) = run_cell(&cell_cfg, &target, scheme, n, seed)?;
                row.bandwidth = k;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    rows.sort_by_key(ExperimentRow::sort_key);
    require_some_interpolation(&rows)?;
    let mut result = ExperimentResult {
        kind: cfg.kind,
        dim: cfg.dim,
        rows,
        slopes: Vec::new(),
    };
    result.slopes = fit_slopes(cfg, &result)?;
    Ok(result)
}

/// Empirical `kappa` of random operators against the conjectured bound,
/// `n = round(beta (2K+1))`. Report only: nothing is checked against the
/// bound.
pub fn run_manova_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.kind != ExperimentKind::ManovaStudy {
        return Err(Error::Domain(format!("expected a manova-study config, got {}", cfg.kind.as_str())));
    }
    cfg.validate()?;
    let n_coeffs = 2 * cfg.bandwidth + 1;
    let mut cells = Vec::new();
    for &beta in &cfg.betas {
        let n = (beta * n_coeffs as f64).round() as usize;
        for &seed in &cfg.seeds {
            cells.push((beta, n, seed));
        }
    }
    let mut rows = in_pool(|| {
        cells
            .into_par_iter()
            .map(|(beta, n, seed)| {
                let pts = random_points(1, n, derive_seed(cfg.seed, Tag::Points, seed, n as u64))?;
                let kappa = build_operator(pts.view(), cfg.bandwidth)?.condition_number()?;
                Ok(ExperimentRow {
                    kind: cfg.kind,
                    scheme: Scheme::RandomIid,
                    seed,
                    dim: 1,
                    bandwidth: cfg.bandwidth,
                    n,
                    l2_sq_error: None,
                    kappa,
                    epochs: 0,
                    final_residual: None,
                    interpolated: false,
                    coefficient_error: None,
                    parseval_consistent: None,
                    refine_steps: 0,
                    decay_slope: None,
                    beta: Some(beta),
                    kappa_bound: kappa_bound(beta).ok(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    rows.sort_by_key(ExperimentRow::sort_key);
    Ok(ExperimentResult {
        kind: cfg.kind,
        dim: 1,
        rows,
        slopes: Vec::new(),
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match cfg.kind {
        ExperimentKind::ErrorScaling => run_error_scaling(cfg),
        ExperimentKind::ManovaStudy => run_manova_study(cfg),
        ExperimentKind::MultivariateScaling => run_multivariate_scaling(cfg),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn results_csv(result: &ExperimentResult) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in &result.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.kind.as_str(),
            r.scheme,
            r.seed,
            r.dim,
            r.bandwidth,
            r.n,
            opt(r.l2_sq_error),
            fmt_f64(r.kappa),
            r.epochs,
            opt(r.final_residual),
            r.interpolated
        )
        .unwrap();
    }
    s
}

pub fn slopes_csv(result: &ExperimentResult) -> String {
    let mut s = format!("{SLOPES_HEADER}\n");
    for f in &result.slopes {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            f.scheme,
            fmt_f64(f.slope),
            fmt_f64(f.intercept),
            fmt_f64(f.residual),
            f.fit_n_min,
            f.fit_n_max
        )
        .unwrap();
    }
    s
}

pub fn manova_csv(result: &ExperimentResult) -> String {
    let mut s = format!("{MANOVA_HEADER}\n");
    for r in result.rows.iter().filter(|r| r.beta.is_some()) {
        writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(r.beta.unwrap()),
            r.n,
            r.seed,
            fmt_f64(r.kappa),
            r.kappa_bound.map(fmt_f64).unwrap_or_else(|| "inf".into())
        )
        .unwrap();
    }
    s
}

pub fn diagnostics_csv(result: &ExperimentResult) -> String {
    let mut s = format!("{DIAGNOSTICS_HEADER}\n");
    for r in &result.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.kind.as_str(),
            r.scheme,
            r.seed,
            r.n,
            opt(r.coefficient_error),
            r.parseval_consistent.map(|b| b.to_string()).unwrap_or_default(),
            r.refine_steps,
            opt(r.decay_slope)
        )
        .unwrap();
    }
    s
}

/// Reference slope drawn in the chart: `-3` univariate, `-(d+2)/d` on grids.
pub fn reference_slope(kind: ExperimentKind, dim: usize) -> f64 {
    match kind {
        ExperimentKind::MultivariateScaling => -((dim + 2) as f64) / dim as f64,
        _ => -3.0,
    }
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 600.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Log-log chart of median error against `n`, one polyline per scheme,
/// plus a dashed reference line. `None` when there is nothing to draw.
pub fn error_chart_svg(result: &ExperimentResult) -> Option<String> {
    let mut schemes: Vec<Scheme> = result.rows.iter().map(|r| r.scheme).collect();
    schemes.sort();
    schemes.dedup();
    let series: Vec<(Scheme, Vec<(f64, f64)>)> = schemes
        .into_iter()
        .map(|s| {
            let pts = result
                .median_errors(s)
                .into_iter()
                .filter(|&(_, e)| e > 0.0)
                .map(|(n, e)| ((n as f64).log10(), e.log10()))
                .collect();
            (s, pts)
        })
        .filter(|(_, p): &(Scheme, Vec<(f64, f64)>)| !p.is_empty())
        .collect();
    if series.is_empty() {
        return None;
    }
    let all = series.iter().flat_map(|(_, p)| p.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = (x0 - 0.05, x1 + 0.05);
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let (left, right, top, bottom) = (90.0, 30.0, 50.0, 70.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (SVG_W - left - right);
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * (SVG_H - top - bottom);

    let mut s = String::new();
    writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="28" text-anchor="middle" font-family="sans-serif" font-size="16">{} (d = {})</text>"#,
        SVG_W / 2.0,
        result.kind.as_str(),
        result.dim
    )
    .unwrap();
    // Axes, decade grid lines and labels.
    writeln!(
        s,
        r#"<g stroke="black" fill="none"><line x1="{left}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{b}"/></g>"#,
        b = SVG_H - bottom,
        r = SVG_W - right
    )
    .unwrap();
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(e as f64);
        writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#dddddd"/><text x="{tx}" y="{ty:.2}" text-anchor="end" font-family="sans-serif" font-size="12">1e{e}</text>"##,
            r = SVG_W - right,
            tx = left - 8.0,
            ty = y + 4.0
        )
        .unwrap();
    }
    let mut ns: Vec<usize> = result.rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    for n in ns {
        let x = px((n as f64).log10());
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{y}" text-anchor="middle" font-family="sans-serif" font-size="12">{n}</text>"#,
            y = SVG_H - bottom + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14">n (samples)</text>
<text x="22" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14" transform="rotate(-90 22 {})">squared L2 error (median over seeds)</text>"#,
        (left + SVG_W - right) / 2.0,
        SVG_H - 20.0,
        (top + SVG_H - bottom) / 2.0,
        (top + SVG_H - bottom) / 2.0
    )
    .unwrap();

    for (i, (scheme, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(
            s,
            r#"<polyline class="series" data-scheme="{scheme}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        )
        .unwrap();
        for p in &path {
            let (cx, cy) = p.split_once(',').unwrap();
            writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#).unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{scheme}</text>"#,
            SVG_W - right - 170.0,
            top + 20.0 + 18.0 * i as f64
        )
        .unwrap();
    }
    // Reference line through the first point of the first series.
    let slope = reference_slope(result.kind, result.dim);
    let (ax, ay) = series[0].1[0];
    let clip = |x: f64| ay + slope * (x - ax);
    writeln!(
        s,
        r##"<line class="reference" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555555" stroke-dasharray="6 4"/>
<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#555555">slope {slope}</text>"##,
        px(ax),
        py(clip(ax)),
        px(x1),
        py(clip(x1).max(y0)),
        SVG_W - right - 170.0,
        top + 20.0 + 18.0 * series.len() as f64
    )
    .unwrap();
    s.push_str("</svg>\n");
    Some(s)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv`, `slopes.csv`, `diagnostics.csv`, `manova.csv` for
/// the MANOVA study, and `error_vs_n.svg` when there are errors to plot.
/// Returns the files written.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    output_files(result)
        .into_iter()
        .map(|(name, text)| write(dir, name, &text))
        .collect()
}

/// The files [`emit_outputs`] writes, as `(name, contents)`.
pub fn output_files(result: &ExperimentResult) -> Vec<(&'static str, String)> {
    let mut files = vec![
        ("results.csv", results_csv(result)),
        ("slopes.csv", slopes_csv(result)),
        ("diagnostics.csv", diagnostics_csv(result)),
    ];
    if result.kind == ExperimentKind::ManovaStudy {
        files.push(("manova.csv", manova_csv(result)));
    }
    if let Some(svg) = error_chart_svg(result) {
        files.push(("error_vs_n.svg", svg));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(kind);
        c.hidden = vec![64, 64];
        c.init = InitScheme::SpreadKinks;
        c.train.max_epochs = 300;
        c.grid = if c.dim == 1 { 4096 } else { 64 };
        c
    }

    #[test]
    fn exact_power_laws_fit_exactly() {
        let cubic: Vec<(f64, f64)> = [11.0, 16.0, 24.0, 64.0].iter().map(|&n: &f64| (n, 7.0 / n.powi(3))).collect();
        let (s, i, r) = fit_loglog_slope(&cubic).unwrap();
        assert!((s + 3.0).abs() < 1e-12 && (i - 7f64.ln()).abs() < 1e-10 && r < 1e-12);
        let flat = [(2.0, 5.0), (3.0, 5.0), (9.0, 5.0)];
        assert!(fit_loglog_slope(&flat).unwrap().0.abs() < 1e-12);
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(Error::Domain(_))));
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 1.0)]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn noisy_inverse_square_fits_near_minus_two() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let pairs: Vec<(f64, f64)> = K5_N_VALUES
                .iter()
                .map(|&n| {
                    let n = n as f64;
                    (n, 3.0 / (n * n) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
                })
                .collect();
            assert!((fit_loglog_slope(&pairs).unwrap().0 + 2.0).abs() < 0.1);
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![]), None);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0]), Some(2.5));
    }

    #[test]
    fn seeds_are_distinct_per_purpose() {
        let a = derive_seed(1, Tag::Points, 0, 11);
        assert_ne!(a, derive_seed(1, Tag::Init, 0, 11));
        assert_ne!(a, derive_seed(1, Tag::Points, 1, 11));
        assert_ne!(a, derive_seed(1, Tag::Points, 0, 16));
        assert_ne!(a, derive_seed(2, Tag::Points, 0, 11));
        assert_eq!(a, derive_seed(1, Tag::Points, 0, 11));
    }

    #[test]
    fn config_round_trip_and_validation() {
        for kind in [
            ExperimentKind::ErrorScaling,
            ExperimentKind::ManovaStudy,
            ExperimentKind::MultivariateScaling,
        ] {
            let c = ExperimentConfig::preset(kind);
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_config(&c.to_config()).unwrap(), c);
        }
        let mut c = ExperimentConfig::preset(ExperimentKind::ErrorScaling);
        c.n_values = vec![10, 16];
        assert!(matches!(c.validate(), Err(Error::Domain(_))));
        c.n_values = vec![16];
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut m = ExperimentConfig::preset(ExperimentKind::ManovaStudy);
        m.seeds.truncate(5);
        assert!(m.validate().is_err());
        let mut g = ExperimentConfig::preset(ExperimentKind::MultivariateScaling);
        g.schemes = vec![Scheme::RandomIid];
        assert!(g.validate().is_err());
        let mut cfg = ExperimentConfig::preset(ExperimentKind::ErrorScaling).to_config();
        cfg.set("train.momentun", 0.5);
        assert!(matches!(ExperimentConfig::from_config(&cfg), Err(Error::Parse(_))));
    }

    #[test]
    fn manova_study_reports_bounds() {
        let mut c = ExperimentConfig::preset(ExperimentKind::ManovaStudy);
        c.betas = vec![1.0, 4.0, 9.0];
        let r = run_manova_study(&c).unwrap();
        assert_eq!(r.rows.len(), 3 * MIN_MANOVA_SEEDS);
        let by = r.median_kappa_by_beta();
        assert_eq!(by[0].2, None);
        assert_eq!(by[1].2, Some(9.0));
        assert_eq!(by[2].2, Some(4.0));
        assert!(r.rows.iter().all(|x| x.kappa >= 1.0));
        assert!(by[0].1 > by[2].1);
        assert!(error_chart_svg(&r).is_none());
        assert!(manova_csv(&r).lines().nth(1).unwrap().ends_with(",inf"));
    }

    #[test]
    fn zero_target_skips_the_fit() {
        let mut c = quick(ExperimentKind::ErrorScaling);
        c.target = TargetKind::Zero;
        c.zero_output = true;
        c.n_values = vec![11, 16, 24];
        c.seeds = vec![0];
        c.schemes = vec![Scheme::UniformGrid];
        let r = run_error_scaling(&c).unwrap();
        assert!(r.rows.iter().all(|x| x.interpolated));
        assert!(r.rows.iter().all(|x| x.l2_sq_error.unwrap() <= c.train.tolerance.powi(2)));
        assert!(r.slopes.is_empty());

        let mut g = quick(ExperimentKind::MultivariateScaling);
        g.target = TargetKind::Zero;
        g.zero_output = true;
        g.grid_bandwidths = vec![1, 2, 3];
        g.seeds = vec![0];
        let r = run_multivariate_scaling(&g).unwrap();
        assert!(r.rows.iter().all(|x| x.l2_sq_error.unwrap() <= g.train.tolerance.powi(2)));
        assert!(r.slopes.is_empty());
    }

    #[test]
    fn small_scaling_run_is_deterministic_and_ordered() {
        let mut c = quick(ExperimentKind::ErrorScaling);
        c.n_values = vec![11, 16, 24];
        c.seeds = vec![1, 0];
        let a = run_error_scaling(&c).unwrap();
        let b = run_error_scaling(&c).unwrap();
        assert_eq!(results_csv(&a), results_csv(&b));
        let keys: Vec<_> = a.rows.iter().map(|r| r.sort_key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(a.rows.len(), 2 * 3 * 2);
        // kappa of the uniform rows is the DFT's.
        for r in a.rows.iter().filter(|r| r.scheme == Scheme::UniformGrid) {
            assert!((r.kappa - 1.0).abs() < 1e-9);
        }
        assert_eq!(a.slopes.len(), 2);
        let svg = error_chart_svg(&a).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("class=\"reference\"").count(), 1);
    }

    #[test]
    fn empty_result_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let r = ExperimentResult::empty(ExperimentKind::ErrorScaling, 1);
        let files = emit_outputs(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let res = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(res, format!("{RESULTS_HEADER}\n"));
        assert!(!dir.path().join("error_vs_n.svg").exists());
    }
}
