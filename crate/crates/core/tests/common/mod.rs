#![allow(dead_code)]

pub mod oracle;
pub mod synthetic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relnet::corpus::Example;
use relnet::model::{HyperParams, ParamGroup, Parameters};

/// Parameters with masks and slopes moved off their initial constants, so
/// every group influences the output.
pub fn perturbed_params(h: &HyperParams, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Parameters::init(h, &mut rng).unwrap();
    for g in [
        ParamGroup::EntityMask,
        ParamGroup::RelationMask,
        ParamGroup::QuestionMask,
    ] {
        for v in p[g].data_mut() {
            *v = rng.random_range(0.5..1.5);
        }
    }
    for g in [
        ParamGroup::EntitySlope,
        ParamGroup::RelationSlope,
        ParamGroup::OutputSlope,
    ] {
        p[g].data_mut()[0] = rng.random_range(0.2..0.8);
    }
    for v in p[ParamGroup::C].data_mut() {
        *v += rng.random_range(-0.1..0.1);
    }
    for g in [ParamGroup::Embedding, ParamGroup::Keys] {
        for v in p[g].data_mut() {
            *v *= 5.0;
        }
    }
    p
}

/// A random story of `t` sentences of 1..=L non-PAD tokens, with a random
/// question and answer.
pub fn random_example(h: &HyperParams, t: usize, rng: &mut impl Rng) -> Example {
    fn sentence(h: &HyperParams, rng: &mut impl Rng) -> Vec<usize> {
        let n = rng.random_range(1..=h.max_len);
        (0..n).map(|_| rng.random_range(1..h.vocab_size)).collect()
    }
    let sentences: Vec<Vec<usize>> = (0..t).map(|_| sentence(h, rng)).collect();
    let question = sentence(h, rng);
    Example {
        lines: (1..=t).collect(),
        sentences,
        question,
        answer: rng.random_range(1..h.vocab_size),
        support: vec![],
    }
}

pub fn micro_hyper(k: usize, d: usize, l: usize, v: usize) -> HyperParams {
    HyperParams::new(k, d, l, v)
}

/// Directory holding real bAbI data, if any: `RELNET_BABI_DIR` or
/// `<workspace>/data`.
pub fn babi_dir() -> Option<std::path::PathBuf> {
    let candidates = std::env::var_os("RELNET_BABI_DIR")
        .map(std::path::PathBuf::from)
        .into_iter()
        .chain([std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")]);
    candidates
        .into_iter()
        .find(|d| relnet::corpus::locate_task_files(d, 1).is_ok())
}
