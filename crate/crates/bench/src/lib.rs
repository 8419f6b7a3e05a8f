//! Shared fixtures for the kernel benchmarks.

use rand::Rng as _;
use safer_core::builder::synth::{synth_generate, SynthConfig};
use safer_core::builder::{BuildConfig, Corpus};
use safer_core::{rng, CommunityGraph, Tensor};

pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut r = rng::derive(seed, "bench-tensor");
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Community graph of the named synthetic preset, built with default settings.
pub fn preset_graph(preset: &str, seed: u64) -> CommunityGraph {
    let synth = SynthConfig::preset(preset).unwrap();
    let data = synth_generate(&synth, seed).unwrap().dataset;
    let build = BuildConfig::default();
    let corpus = Corpus::prepare(&data, &build, seed, None).unwrap();
    corpus.build(&build).unwrap().graph
}
