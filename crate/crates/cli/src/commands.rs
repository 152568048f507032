//! One function per subcommand. Each reads its keys from the config and
//! returns the files to write plus the lines to print; nothing touches the
//! output directory here.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bandlab::analysis::{
    decay_fit, jacobian_bound_audit, l2_error, mirrored_spectrum, network_spectrum, total_variation_first_derivative,
    Extension, SpectrumReport, MIN_TV_GRID,
};
use bandlab::config::Config;
use bandlab::experiments::{self, ExperimentConfig, TargetKind};
use bandlab::network::{train_to_interpolation, InitScheme, Mlp, TrainConfig};
use bandlab::sampling::{
    build_operator, dct_grid, equispaced_grid, grid_side, random_points, reconstruct_dct_symmetric,
    reconstruct_nonuniform, reconstruct_uniform,
};
use bandlab::textio::fmt_f64;
use bandlab::{BandlimitedFn, Error, Result, SampleSet, Scheme};

pub struct Context {
    pub cfg: Config,
    /// Directory of the config file; relative paths in it resolve here.
    pub base: PathBuf,
}

impl Context {
    fn path(&self, key: &str) -> Result<PathBuf> {
        let raw: String = self.cfg.require(key)?;
        Ok(self.resolve(&raw))
    }

    fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.cfg.get(key).map(|raw| self.resolve(raw))
    }

    fn resolve(&self, raw: &str) -> PathBuf {
        let p = Path::new(raw);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub messages: Vec<String>,
}

impl Outcome {
    fn file(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text));
    }

    fn say(&mut self, line: String) {
        self.messages.push(line);
    }
}

const GENERATE_KEYS: &[&str] = &[
    "seed",
    "target.dim",
    "target.bandwidth",
    "target.kind",
    "target.exponent",
    "target.amplitude",
];

/// `target.txt`: a random band-limited function.
pub fn generate(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    cfg.check_keys(GENERATE_KEYS)?;
    let dim = cfg.get_or("target.dim", 1usize)?;
    let k: usize = cfg.require("target.bandwidth")?;
    let kind = TargetKind::from_config(cfg)?;
    let amplitude = cfg.get_or("target.amplitude", 1.0)?;
    let f = kind.draw(dim, k, amplitude, cfg.get_or("seed", 0u64)?)?;
    let mut out = Outcome::default();
    out.say(format!("target: d = {dim}, K = {k}, energy = {}", fmt_f64(f.energy())));
    out.file("target.txt", f.to_text());
    Ok(out)
}

const SAMPLE_KEYS: &[&str] = &["seed", "sample.target", "sample.scheme", "sample.n"];

/// `samples.csv`: the target at `sample.n` points. Uniform schemes need a
/// full grid (`n = m^d`); the label records whether it is critical.
pub fn sample(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    cfg.check_keys(SAMPLE_KEYS)?;
    let f = BandlimitedFn::load(&ctx.path("sample.target")?)?;
    let scheme: Scheme = cfg.get_or("sample.scheme", Scheme::UniformGrid)?;
    let d = f.dim();
    let critical = f.lattice().len();
    let n: usize = cfg.get_or("sample.n", critical)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let (points, label, seed) = if scheme.is_uniform() {
        let side = (n as f64).powf(1.0 / d as f64).round() as usize;
        if side.pow(d as u32) != n {
            return Err(Error::Domain(format!("n = {n} is not a full {d}-dimensional grid")));
        }
        let label = if n == critical { Scheme::UniformGrid } else { Scheme::OversampledUniform };
        (equispaced_grid(d, side), label, None)
    } else {
        (random_points(d, n, seed)?, Scheme::RandomIid, Some(seed))
    };
    if n < critical {
        return Err(Error::Domain(format!("n = {n} is below (2K+1)^d = {critical}")));
    }
    let set = SampleSet::from_map(&f, points, label, seed)?;
    let mut out = Outcome::default();
    out.say(format!("{n} samples, scheme {label}"));
    out.file("samples.csv", set.to_csv());
    Ok(out)
}

const RECONSTRUCT_KEYS: &[&str] = &[
    "reconstruct.samples",
    "reconstruct.bandwidth",
    "reconstruct.method",
    "reconstruct.target",
];

/// `coefficients.txt` (or `cosine.csv` for the cosine path) and
/// `reconstruction.csv`. With `reconstruct.target` set, also reports the
/// largest coefficient error against it.
pub fn reconstruct(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    cfg.check_keys(RECONSTRUCT_KEYS)?;
    let set = SampleSet::load(&ctx.path("reconstruct.samples")?)?;
    let k: usize = cfg.require("reconstruct.bandwidth")?;
    let d = set.dim;
    let method = cfg.get("reconstruct.method").unwrap_or("auto");
    let on_grid = grid_side(set.points.view()).is_some();
    let method = match method {
        "auto" if on_grid => "uniform",
        "auto" => "pseudo-inverse",
        "uniform" | "pseudo-inverse" | "cosine" => method,
        other => return Err(Error::Parse(format!("unknown reconstruction method `{other}`"))),
    };
    let mut out = Outcome::default();
    let mut summary = String::from("method,d,K,n,kappa,max_coefficient_error\n");
    if method == "cosine" {
        if d != 1 || set.points.column(0).iter().zip(dct_grid(set.len())).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::Domain("the cosine path needs samples on the cell-centered grid".into()));
        }
        let series = reconstruct_dct_symmetric(&set.values, d, k)?;
        let mut csv = String::from("m,frequency,a\n");
        for (m, a) in series.coeffs.iter().enumerate() {
            writeln!(csv, "{m},{},{}", fmt_f64(bandlab::sampling::CosineSeries::frequency(m)), fmt_f64(*a)).unwrap();
        }
        writeln!(summary, "cosine,{d},{k},{},,", set.len()).unwrap();
        out.say(format!("{} cosine coefficients", series.coeffs.len()));
        out.file("cosine.csv", csv);
        out.file("reconstruction.csv", summary);
        return Ok(out);
    }
    let op = build_operator(set.points.view(), k)?;
    let kappa = op.condition_number()?;
    let coeffs = if method == "uniform" {
        if !on_grid {
            return Err(Error::Domain("uniform reconstruction needs samples on the equispaced grid".into()));
        }
        reconstruct_uniform(&set.values, d, k)?
    } else {
        reconstruct_nonuniform(&op, &set.values)?
    };
    let rec = BandlimitedFn::new(d, k, coeffs)?;
    let mut err_col = String::new();
    if let Some(path) = ctx.optional_path("reconstruct.target") {
        let f = BandlimitedFn::load(&path)?;
        if f.dim() != d {
            return Err(Error::Dimension(format!("target is {}-dimensional, samples are {d}", f.dim())));
        }
        let inside = rec
            .lattice()
            .frequencies()
            .map(|kv| (rec.coeff(&kv) - f.coeff(&kv)).norm())
            .fold(0.0, f64::max);
        // Target terms beyond the reconstructed band count in full.
        let outside = f
            .lattice()
            .frequencies()
            .filter(|kv| rec.lattice().index_of(kv).is_none())
            .map(|kv| f.coeff(&kv).norm())
            .fold(0.0, f64::max);
        let err = inside.max(outside);
        err_col = fmt_f64(err);
        out.say(format!("max coefficient error = {err:e}"));
    }
    writeln!(summary, "{method},{d},{k},{},{},{err_col}", set.len(), fmt_f64(kappa)).unwrap();
    out.say(format!("{method} reconstruction, n = {}, K = {k}, kappa = {kappa:.6}", set.len()));
    out.file("coefficients.txt", rec.to_text());
    out.file("reconstruction.csv", summary);
    Ok(out)
}

const TRAIN_KEYS: &[&str] = &[
    "seed",
    "train.samples",
    "net.hidden",
    "net.init",
    "train.learning_rate",
    "train.momentum",
    "train.weight_decay",
    "train.max_epochs",
    "train.tolerance",
    "train.refine_steps",
];

/// `network.txt`, `training.csv` and `weight_norms.csv`. A run that misses
/// the tolerance still succeeds; `training.csv` flags it.
pub fn train(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    cfg.check_keys(TRAIN_KEYS)?;
    let set = SampleSet::load(&ctx.path("train.samples")?)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let hidden: Vec<usize> = cfg.list("net.hidden")?.unwrap_or_else(|| vec![1000, 1000]);
    let init: InitScheme = cfg.get_or("net.init", InitScheme::ZeroBias)?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        learning_rate: cfg.get_or("train.learning_rate", d.learning_rate)?,
        momentum: cfg.get_or("train.momentum", d.momentum)?,
        weight_decay: cfg.get_or("train.weight_decay", d.weight_decay)?,
        max_epochs: cfg.get_or("train.max_epochs", d.max_epochs)?,
        tolerance: cfg.get_or("train.tolerance", d.tolerance)?,
        refine_steps: cfg.get_or("train.refine_steps", d.refine_steps)?,
        seed,
    };
    let mut sizes = vec![set.dim];
    sizes.extend(hidden);
    sizes.push(1);
    let net = Mlp::init_with(&sizes, seed, init)?;
    let (net, report) = train_to_interpolation(&net, &set, &tc)?;
    let mut out = Outcome::default();
    out.say(format!(
        "{} epochs + {} refinement steps, max residual {:e}, interpolated = {}",
        report.epochs, report.refine_steps, report.final_max_residual, report.interpolated
    ));
    if !report.interpolated {
        eprintln!("warning: training stopped above the tolerance {}", tc.tolerance);
    }
    out.file(
        "training.csv",
        format!(
            "n,epochs,refine_steps,final_max_residual,interpolated\n{},{},{},{},{}\n",
            set.len(),
            report.epochs,
            report.refine_steps,
            fmt_f64(report.final_max_residual),
            report.interpolated
        ),
    );
    let mut trace = String::from("epoch,frobenius_product\n");
    for (e, v) in &report.weight_norm_trace {
        writeln!(trace, "{e},{}", fmt_f64(*v)).unwrap();
    }
    out.file("weight_norms.csv", trace);
    out.file("network.txt", net.to_text());
    Ok(out)
}

const ANALYZE_KEYS: &[&str] = &[
    "seed",
    "analyze.network",
    "analyze.target",
    "analyze.extension",
    "analyze.kmax",
    "analyze.grid",
    "analyze.window",
    "analyze.audit_points",
];

/// `spectrum.csv`, `decay.csv` (when a fit is possible), `audit.csv`, and
/// `error.csv` when `analyze.target` is given.
pub fn analyze(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    cfg.check_keys(ANALYZE_KEYS)?;
    let net = Mlp::load(&ctx.path("analyze.network")?)?;
    let d = net.input_size();
    let target = ctx.optional_path("analyze.target").map(|p| BandlimitedFn::load(&p)).transpose()?;
    let tb = target.as_ref().map_or(0, |f| f.bandwidth());
    let extension: Extension = cfg.get_or("analyze.extension", Extension::Periodic)?;
    // Mirrored spectra count cosine indices, i.e. half x-frequencies.
    let default_kmax = match (d, extension) {
        (1, Extension::Mirrored) => 512,
        (1, Extension::Periodic) => 256,
        _ => 16,
    };
    let kmax: usize = cfg.get_or("analyze.kmax", default_kmax)?;
    let grid: usize = cfg.get_or("analyze.grid", (8 * (2 * kmax + 1)).next_power_of_two())?;
    let mut out = Outcome::default();

    let report: SpectrumReport = match extension {
        Extension::Periodic => network_spectrum(&net, d, kmax, grid, tb)?,
        Extension::Mirrored => mirrored_spectrum(&net, kmax, grid, tb)?,
    };
    let fit = match cfg.list::<usize>("analyze.window")? {
        Some(w) if w.len() == 2 => Some(decay_fit(&report, w[0], w[1])?),
        Some(_) => return Err(Error::Parse("`analyze.window` needs `lo, hi`".into())),
        None => report.fit.clone(),
    };
    if let Some(f) = &fit {
        out.say(format!(
            "{} spectrum decay slope {:.4} on [{}, {}]",
            extension.as_str(),
            f.slope,
            f.k_lo,
            f.k_hi
        ));
        out.file(
            "decay.csv",
            format!(
                "extension,k_lo,k_hi,slope,intercept,residual,points\n{},{},{},{},{},{},{}\n",
                extension.as_str(),
                f.k_lo,
                f.k_hi,
                fmt_f64(f.slope),
                fmt_f64(f.intercept),
                fmt_f64(f.residual),
                f.points
            ),
        );
    }
    out.file("spectrum.csv", report.to_csv());

    let points: usize = cfg.get_or("analyze.audit_points", 100)?;
    let audit = jacobian_bound_audit(&net, points, cfg.get_or("seed", 0)?)?;
    let tv = if d == 1 {
        fmt_f64(total_variation_first_derivative(&net, MIN_TV_GRID.max(grid))?)
    } else {
        String::new()
    };
    out.say(format!(
        "max |dphi/dx| = {:.6} <= prod ||W||_2 = {:.6} <= prod ||W||_F = {:.6}: {}",
        audit.max_jacobian_norm,
        audit.spectral_product,
        audit.frobenius_product,
        audit.holds()
    ));
    out.file(
        "audit.csv",
        format!(
            "points,max_jacobian_norm,spectral_product,frobenius_product,holds,derivative_total_variation\n{},{},{},{},{},{tv}\n",
            audit.points,
            fmt_f64(audit.max_jacobian_norm),
            fmt_f64(audit.spectral_product),
            fmt_f64(audit.frobenius_product),
            audit.holds()
        ),
    );

    if let Some(f) = &target {
        let m = if d == 1 { grid.max(4096) } else { grid };
        let err = l2_error(&net, f, m)?;
        out.say(format!(
            "squared L2 error {:e} (coefficient space {:e})",
            err.l2_sq_error, err.coefficient_error
        ));
        out.file("error.csv", err.to_csv());
    }
    Ok(out)
}

/// The experiment's CSVs and chart, plus `config.cfg` holding every
/// setting the run used.
pub fn experiment(ctx: &Context) -> Result<Outcome> {
    let cfg = ExperimentConfig::from_config(&ctx.cfg)?;
    let result = experiments::run(&cfg)?;
    let mut out = Outcome::default();
    for s in &result.slopes {
        out.say(format!(
            "{}: slope {:.4} over n in [{}, {}]",
            s.scheme, s.slope, s.fit_n_min, s.fit_n_max
        ));
    }
    for (beta, kappa, bound) in result.median_kappa_by_beta() {
        let bound = bound.map_or("inf".to_string(), |b| format!("{b:.4}"));
        out.say(format!("beta {beta}: median kappa {kappa:.4}, bound {bound}"));
    }
    let failed = result.rows.iter().filter(|r| !r.interpolated && r.beta.is_none()).count();
    if failed > 0 {
        out.say(format!("{failed} run(s) missed the tolerance and were left out of the fits"));
    }
    for (name, text) in experiments::output_files(&result) {
        out.file(name, text);
    }
    out.file("config.cfg", cfg.to_config().to_text());
    Ok(out)
}
