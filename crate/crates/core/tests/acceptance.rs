//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.
//!
//! Network width comes from `BANDLAB_ACCEPT_WIDTH` (default 256; the shipped
//! presets use 1000). The experiment criteria read the presets shipped with
//! the CLI, so what passes here is what those files reproduce.

mod common;

use std::path::Path;
use std::time::Instant;

use bandlab::analysis::{decay_fit, jacobian_bound_audit, l2_error, mirrored_spectrum, network_spectrum};
use bandlab::config::Config;
use bandlab::experiments::{
    median, results_csv, run, run_cell, ExperimentConfig, ExperimentResult, K5_N_VALUES, K4_N_VALUES,
};
use bandlab::linalg;
use bandlab::network::Mlp;
use bandlab::sampling::{
    build_operator, equispaced_grid, kappa_bound, random_points, reconstruct_nonuniform, reconstruct_uniform,
};
use bandlab::{random_bandlimited, Scheme, SpectrumProfile};

const DEFAULT_WIDTH: usize = 256;

// Tolerances.
const UNIFORM_COEFF_TOL: f64 = 1e-10;
const NONUNIFORM_COEFF_TOL: f64 = 1e-6;
const RANK_RATIO: f64 = 1e-10;
const GRAD_REL_TOL_SHARE: f64 = 0.99;
const DECAY_SLOPE_MAX: f64 = -1.5;
const RATE_1D: (f64, f64) = (-4.0, -2.0);
const RATE_2D: (f64, f64) = (-3.0, -1.0);

struct Tally {
    failed: Vec<String>,
}

impl Tally {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        println!("criterion {id:>2} [{}] {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }
}

fn max_err(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn preset(name: &str, width: usize) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/configs").join(name);
    let cfg = Config::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    let mut c = ExperimentConfig::from_config(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    // The tangent kernel scales with width: keep lr times width fixed so the
    // narrower proxy trains like the preset.
    if let Some(&w0) = c.hidden.first() {
        c.train.learning_rate *= w0 as f64 / width as f64;
    }
    c.hidden = vec![width; c.hidden.len()];
    c
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

fn slope_of(r: &ExperimentResult, s: Scheme) -> f64 {
    r.slope(s).map_or(f64::NAN, |f| f.slope)
}

fn failures(r: &ExperimentResult) -> usize {
    r.rows.iter().filter(|x| !x.interpolated).count()
}

fn monotone(r: &ExperimentResult, s: Scheme) -> bool {
    r.median_errors(s).windows(2).all(|w| w[1].1 <= w[0].1)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn main() {
    let width = std::env::var("BANDLAB_ACCEPT_WIDTH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_WIDTH);
    println!("acceptance run, hidden width {width} (learning rate scaled by 1000 / width)");
    let mut t = Tally { failed: Vec::new() };
    let mut parseval_checked = 0usize;
    let mut parseval_bad: Vec<String> = Vec::new();

    // 1. Uniform reconstruction, critical and oversampled grids.
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let f = random_bandlimited(1, 5, SpectrumProfile::flat(seed)).unwrap();
        for n in [11, 16] {
            let y: Vec<f64> = equispaced_grid(1, n).rows().into_iter().map(|x| f.evaluate(&[x[0]])).collect();
            worst = worst.max(max_err(&reconstruct_uniform(&y, 1, 5).unwrap(), f.coeffs()));
        }
    }
    t.record(
        "1",
        worst <= UNIFORM_COEFF_TOL,
        format!("uniform recovery, 50 K=5 targets, n in {{11, 16}}: max coefficient error {worst:.2e} (want <= {UNIFORM_COEFF_TOL:e})"),
    );

    // 2. Nonuniform recovery through the pseudo-inverse.
    let (mut worst, mut used) = (0.0f64, 0usize);
    for seed in 0..50 {
        let f = random_bandlimited(1, 2, SpectrumProfile::flat(seed)).unwrap();
        let pts = random_points(1, 8, 1000 + seed).unwrap();
        let op = build_operator(pts.view(), 2).unwrap();
        let sv = linalg::singular_values(&op.matrix).unwrap();
        if sv[sv.len() - 1] <= RANK_RATIO * sv[0] {
            continue;
        }
        used += 1;
        let y: Vec<f64> = pts.rows().into_iter().map(|x| f.evaluate(&[x[0]])).collect();
        worst = worst.max(max_err(&reconstruct_nonuniform(&op, &y).unwrap(), f.coeffs()));
    }
    t.record(
        "2",
        used > 0 && worst <= NONUNIFORM_COEFF_TOL,
        format!("pseudo-inverse recovery, K=2, n=8 random: {used}/50 full rank, max coefficient error {worst:.2e} (want <= {NONUNIFORM_COEFF_TOL:e})"),
    );

    // 3. Jacobian bounded by the weight-norm products.
    let mut holds = 0;
    for seed in 0..100 {
        let net = Mlp::init(&[1, 100, 100, 1], seed).unwrap();
        if jacobian_bound_audit(&net, 100, seed).unwrap().holds() {
            holds += 1;
        }
    }
    t.record(
        "3",
        holds == 100,
        format!("|dphi/dx| <= prod ||W||_2 <= prod ||W||_F on 100 nets x 100 points: {holds}/100 hold"),
    );

    // 4. Backprop against central differences.
    let shares: Vec<f64> = (0..50)
        .map(|seed| {
            let (net, x, y) = common::gradient_case(seed);
            common::gradient_agreement(&net, &x, &y)
        })
        .collect();
    let worst = shares.iter().copied().fold(1.0, f64::min);
    t.record(
        "4",
        worst >= GRAD_REL_TOL_SHARE,
        format!("gradients on 50 nets: worst share within 1e-5 relative {:.4} (want >= {GRAD_REL_TOL_SHARE})", worst),
    );

    // 5. Spectral decay of trained K=5, n=16 networks.
    let k5 = preset("fig2_fig3_k5.cfg", width);
    let target = k5.target_fn().unwrap();
    let ((mirrored, periodic), secs) = timed(|| {
        let mut mirrored = Vec::new();
        let mut periodic = Vec::new();
        for seed in 0..3 {
            let (row, net) = run_cell(&k5, &target, Scheme::UniformGrid, 16, seed).unwrap();
            assert!(row.interpolated, "decay run {seed} did not interpolate");
            let m = mirrored_spectrum(&net, 512, 16384, 5).unwrap();
            mirrored.push(decay_fit(&m, 16, 512).unwrap().slope);
            let p = network_spectrum(&net, 1, 256, 8192, 5).unwrap();
            periodic.push(decay_fit(&p, 8, 256).unwrap().slope);
            let err = l2_error(&net, &target, k5.grid).unwrap();
            parseval_checked += 1;
            if !err.parseval_consistent() {
                parseval_bad.push(format!("decay seed {seed}"));
            }
        }
        (mirrored, periodic)
    });
    let med = median(mirrored.clone()).unwrap();
    t.record(
        "5",
        med <= DECAY_SLOPE_MAX,
        format!(
            "decay over x-frequencies [8, 256], median of 3 seeds: mirrored extension {med:.3} {mirrored:.3?} (want <= {DECAY_SLOPE_MAX}); periodic extension {:.3} {periodic:.3?}, not asserted [{secs:.0}s]",
            median(periodic.clone()).unwrap()
        ),
    );

    let mut check_parseval = |label: &str, r: &ExperimentResult| {
        for row in &r.rows {
            if let Some(ok) = row.parseval_consistent {
                parseval_checked += 1;
                if !ok {
                    parseval_bad.push(format!("{label} {} n={} seed={}", row.scheme, row.n, row.seed));
                }
            }
        }
    };

    // 6. Uniform K=5 error scaling.
    let mut uni = k5.clone();
    uni.schemes = vec![Scheme::UniformGrid];
    assert_eq!(uni.n_values, K5_N_VALUES);
    let (r6, secs) = timed(|| run(&uni).unwrap());
    let s6 = slope_of(&r6, Scheme::UniformGrid);
    t.record(
        "6",
        in_range(s6, RATE_1D),
        format!(
            "K=5 uniform, n = {K5_N_VALUES:?}: slope {s6:.3} (want in [{}, {}]), {} failed runs [{secs:.0}s]",
            RATE_1D.0,
            RATE_1D.1,
            failures(&r6)
        ),
    );
    check_parseval("K=5", &r6);

    // 7. Random K=5 error scaling, worse than uniform at the critical n.
    let mut rnd = k5.clone();
    rnd.schemes = vec![Scheme::RandomIid];
    let (r7, secs) = timed(|| run(&rnd).unwrap());
    let s7 = slope_of(&r7, Scheme::RandomIid);
    let at = |r: &ExperimentResult, s: Scheme| r.median_errors(s).first().map_or(f64::NAN, |p| p.1);
    let (e_rnd, e_uni) = (at(&r7, Scheme::RandomIid), at(&r6, Scheme::UniformGrid));
    t.record(
        "7",
        in_range(s7, RATE_1D) && e_rnd > e_uni,
        format!(
            "K=5 random: slope {s7:.3} (want in [{}, {}]); median error at n=11 random {e_rnd:.3e} vs uniform {e_uni:.3e} (want random > uniform), {} failed runs [{secs:.0}s]",
            RATE_1D.0,
            RATE_1D.1,
            failures(&r7)
        ),
    );
    check_parseval("K=5", &r7);

    // 8. K=4 replication, both schemes.
    let k4 = preset("fig4_fig5_k4.cfg", width);
    assert_eq!(k4.n_values, K4_N_VALUES);
    let (r8, secs) = timed(|| run(&k4).unwrap());
    let (s8u, s8r) = (slope_of(&r8, Scheme::UniformGrid), slope_of(&r8, Scheme::RandomIid));
    t.record(
        "8",
        in_range(s8u, RATE_1D) && in_range(s8r, RATE_1D),
        format!(
            "K=4, n = {K4_N_VALUES:?}: slope uniform {s8u:.3}, random {s8r:.3} (want in [{}, {}]), plateau cutoff {:?}, {} failed runs [{secs:.0}s]",
            RATE_1D.0,
            RATE_1D.1,
            k4.fit_max_n,
            failures(&r8)
        ),
    );
    check_parseval("K=4", &r8);

    // 9. Bivariate grids.
    let bivariate = preset("thm3_d2.cfg", width);
    let (r9, secs) = timed(|| run(&bivariate).unwrap());
    let s9 = slope_of(&r9, Scheme::UniformGrid);
    t.record(
        "9",
        in_range(s9, RATE_2D),
        format!(
            "d=2 grids K = {:?}: slope {s9:.3} (want in [{}, {}], theory -2), {} failed runs [{secs:.0}s]",
            bivariate.grid_bandwidths,
            RATE_2D.0,
            RATE_2D.1,
            failures(&r9)
        ),
    );
    check_parseval("d=2", &r9);

    // 10. MANOVA study: exact bound values, medians non-increasing in beta.
    let mut manova = preset("manova.cfg", width);
    manova.betas = vec![1.5, 2.0, 4.0, 8.0];
    let r10 = run(&manova).unwrap();
    let meds = r10.median_kappa_by_beta();
    let non_increasing = meds.windows(2).all(|w| w[1].1 <= w[0].1);
    let exact = kappa_bound(4.0).unwrap() == 9.0 && kappa_bound(9.0).unwrap() == 4.0;
    let summary: Vec<String> = meds.iter().map(|(b, k, _)| format!("{b}: {k:.3}")).collect();
    t.record(
        "10",
        exact && non_increasing && manova.seeds.len() >= 20,
        format!(
            "kappa_bound(4) = {}, kappa_bound(9) = {}; median kappa over {} seeds by beta {{{}}} non-increasing: {non_increasing}",
            kappa_bound(4.0).unwrap(),
            kappa_bound(9.0).unwrap(),
            manova.seeds.len(),
            summary.join(", ")
        ),
    );

    // 11. Parseval consistency on everything analyzed above.
    t.record(
        "11",
        parseval_bad.is_empty(),
        format!(
            "quadrature vs coefficient error within max(1e-6, 1e-3 value): {}/{parseval_checked} consistent{}",
            parseval_checked - parseval_bad.len(),
            if parseval_bad.is_empty() { String::new() } else { format!(", failing: {parseval_bad:?}") }
        ),
    );

    // 12. Determinism.
    let (again, secs) = timed(|| run(&uni).unwrap());
    let same = results_csv(&again) == results_csv(&r6);
    t.record("12", same, format!("criterion 6 rerun gives byte-identical results.csv: {same} [{secs:.0}s]"));

    // Uniform medians should fall with n on every run (up to a plateau).
    let trend = [("K=5", &r6), ("K=4", &r8), ("d=2", &r9)]
        .iter()
        .map(|(l, r)| format!("{l}: {}", monotone(r, Scheme::UniformGrid)))
        .collect::<Vec<_>>();
    println!("note: uniform median error non-increasing in n: {}", trend.join(", "));

    if t.failed.is_empty() {
        println!("acceptance: all 12 criteria pass");
    } else {
        println!("acceptance: failing criteria {:?}", t.failed);
        std::process::exit(1);
    }
}
