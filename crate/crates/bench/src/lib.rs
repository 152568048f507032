//! Shared fixtures for the kernel benchmarks.

use bandlab::network::{InitScheme, Mlp};
use bandlab::sampling::{equispaced_grid, random_points};
use bandlab::{random_bandlimited, BandlimitedFn, SampleSet, Scheme, SpectrumProfile};

pub fn target(dim: usize, bandwidth: usize) -> BandlimitedFn {
    random_bandlimited(dim, bandwidth, SpectrumProfile::flat(7)).expect("valid target")
}

pub fn network(width: usize) -> Mlp {
    Mlp::init_with(&[1, width, width, 1], 7, InitScheme::SpreadKinks).expect("valid sizes")
}

/// `n` samples of `f`, equispaced or random.
pub fn samples(f: &BandlimitedFn, n: usize, uniform: bool) -> SampleSet {
    if uniform {
        SampleSet::from_map(f, equispaced_grid(1, n), Scheme::OversampledUniform, None).expect("valid samples")
    } else {
        let pts = random_points(1, n, 7).expect("valid points");
        SampleSet::from_map(f, pts, Scheme::RandomIid, Some(7)).expect("valid samples")
    }
}
