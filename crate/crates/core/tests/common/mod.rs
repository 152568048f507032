//! Helpers shared by integration targets.

use bandlab::network::{InitScheme, Mlp};
use bandlab::sampling::random_points;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random net with random biases in every layer, seven points and
/// random targets.
pub fn gradient_case(seed: u64) -> (Mlp, Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=3);
    let sizes = [d, rng.random_range(2..12), rng.random_range(2..12), 1];
    let mut net = Mlp::init_with(&sizes, seed, InitScheme::SpreadKinks).unwrap();
    for layer in net.layers.iter_mut().skip(1) {
        layer.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let x = random_points(d, 7, seed).unwrap();
    let y = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    (net, x, y)
}

pub fn loss(net: &Mlp, x: &Array2<f64>, y: &[f64]) -> f64 {
    let out = net.forward_batch(x.view());
    0.5 * out.iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / y.len() as f64
}

/// Central differences over every parameter; returns the fraction whose
/// relative error is within `1e-5`.
pub fn gradient_agreement(net: &Mlp, x: &Array2<f64>, y: &[f64]) -> f64 {
    let g = net.grad(x.view(), y).unwrap();
    // The loss is piecewise quadratic in each parameter, so central
    // differences are exact away from kinks. The step trades roundoff on
    // tiny gradients against the odds of a kink inside the stencil.
    let h = 1e-5;
    let (mut ok, mut total) = (0usize, 0usize);
    let mut probe = net.clone();
    let mut check = |analytic: f64, plus: f64, minus: f64| {
        let fd = (plus - minus) / (2.0 * h);
        let scale = analytic.abs().max(fd.abs()).max(1e-8);
        total += 1;
        if (analytic - fd).abs() / scale <= 1e-5 {
            ok += 1;
        } else {
            // A kink crossed inside the stencil.
            eprintln!("gradient mismatch: analytic {analytic:e}, finite difference {fd:e}");
        }
    };
    for l in 0..net.layers.len() {
        for idx in 0..net.layers[l].w.len() {
            let (r, c) = (idx / net.layers[l].w.ncols(), idx % net.layers[l].w.ncols());
            let w0 = net.layers[l].w[(r, c)];
            probe.layers[l].w[(r, c)] = w0 + h;
            let plus = loss(&probe, x, y);
            probe.layers[l].w[(r, c)] = w0 - h;
            let minus = loss(&probe, x, y);
            probe.layers[l].w[(r, c)] = w0;
            check(g.w[l][(r, c)], plus, minus);
        }
        for i in 0..net.layers[l].b.len() {
            let b0 = net.layers[l].b[i];
            probe.layers[l].b[i] = b0 + h;
            let plus = loss(&probe, x, y);
            probe.layers[l].b[i] = b0 - h;
            let minus = loss(&probe, x, y);
            probe.layers[l].b[i] = b0;
            check(g.b[l][i], plus, minus);
        }
    }
    ok as f64 / total as f64
}
