//! The relational memory network.
//!
//! Each example is read sentence by sentence into `D` entity slots (one
//! `K`-vector per slot, seeded from trainable keys) and `D²` relational
//! slots, one per ordered slot pair. After the story, a question attends
//! over all pairs `[m_i; m_j; r_ij]` and produces vocabulary logits.
//!
//! Layout conventions: the entity memory is a `[D, K]` matrix, the
//! relational memory is `[D*D, K]` with pair `(i, j)` at row `i*D + j`.

mod checkpoint;
mod rollout;
mod trace;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use rollout::{forward, loss_and_gradients, MemoryState, Rollout};
pub use trace::{ForwardTrace, TraceStep};

use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

pub const DEFAULT_DIM: usize = 100;
pub const DEFAULT_SLOTS: usize = 20;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    TokenOutOfVocab { id: usize, vocab: usize },
    #[error("sequence of {len} tokens exceeds the maximum length {max}")]
    SentenceTooLong { len: usize, max: usize },
    #[error("key {slot} has norm {norm:e}, too small to normalize")]
    DegenerateKey { slot: usize, norm: f64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("parameter {group}: expected shape {expected:?}, found {found:?}")]
    ParamShape {
        group: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Embedding and memory width `K`.
    pub dim: usize,
    /// Number of entity slots `D`.
    pub slots: usize,
    /// Longest sentence or question `L`.
    pub max_len: usize,
    pub vocab_size: usize,
    pub normalize_relations: bool,
    pub prelu_slope_init: f64,
    pub init_std: f64,
}

impl HyperParams {
    pub fn new(dim: usize, slots: usize, max_len: usize, vocab_size: usize) -> Self {
        Self {
            dim,
            slots,
            max_len,
            vocab_size,
            normalize_relations: false,
            prelu_slope_init: 1.0,
            init_std: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidHyper(msg.to_string()));
        if self.dim < 1 {
            return bad("dim must be >= 1");
        }
        if self.slots < 1 {
            return bad("slots must be >= 1");
        }
        if self.max_len < 1 {
            return bad("max_len must be >= 1");
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be >= 2");
        }
        if !self.prelu_slope_init.is_finite()
            || self.init_std.is_nan()
            || self.init_std < 0.0
            || !self.init_std.is_finite()
        {
            return bad("initialization constants must be finite");
        }
        Ok(())
    }
}

/// Named trainable arrays, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Embedding,
    EntityMask,
    RelationMask,
    QuestionMask,
    Keys,
    U,
    V,
    W,
    A,
    B,
    C,
    H,
    Z,
    EntitySlope,
    RelationSlope,
    OutputSlope,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 16] = [
        ParamGroup::Embedding,
        ParamGroup::EntityMask,
        ParamGroup::RelationMask,
        ParamGroup::QuestionMask,
        ParamGroup::Keys,
        ParamGroup::U,
        ParamGroup::V,
        ParamGroup::W,
        ParamGroup::A,
        ParamGroup::B,
        ParamGroup::C,
        ParamGroup::H,
        ParamGroup::Z,
        ParamGroup::EntitySlope,
        ParamGroup::RelationSlope,
        ParamGroup::OutputSlope,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Embedding => "E",
            ParamGroup::EntityMask => "f_ent",
            ParamGroup::RelationMask => "f_rel",
            ParamGroup::QuestionMask => "f_q",
            ParamGroup::Keys => "keys",
            ParamGroup::U => "U",
            ParamGroup::V => "V",
            ParamGroup::W => "W",
            ParamGroup::A => "A",
            ParamGroup::B => "B",
            ParamGroup::C => "C",
            ParamGroup::H => "H",
            ParamGroup::Z => "Z",
            ParamGroup::EntitySlope => "prelu_ent",
            ParamGroup::RelationSlope => "prelu_rel",
            ParamGroup::OutputSlope => "prelu_out",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    pub fn shape(self, h: &HyperParams) -> Vec<usize> {
        let k = h.dim;
        match self {
            ParamGroup::Embedding => vec![h.vocab_size, k],
            ParamGroup::EntityMask | ParamGroup::RelationMask | ParamGroup::QuestionMask => {
                vec![h.max_len, k]
            }
            ParamGroup::Keys => vec![h.slots, k],
            ParamGroup::U
            | ParamGroup::V
            | ParamGroup::W
            | ParamGroup::A
            | ParamGroup::B
            | ParamGroup::H => vec![k, k],
            ParamGroup::C => vec![k, 3 * k],
            ParamGroup::Z => vec![h.vocab_size, k],
            ParamGroup::EntitySlope | ParamGroup::RelationSlope | ParamGroup::OutputSlope => {
                vec![1]
            }
        }
    }
}

/// All trainable arrays, indexed by [`ParamGroup`].
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    tensors: Vec<Tensor>,
}

impl Index<ParamGroup> for Parameters {
    type Output = Tensor;

    fn index(&self, g: ParamGroup) -> &Tensor {
        &self.tensors[g.index()]
    }
}

impl IndexMut<ParamGroup> for Parameters {
    fn index_mut(&mut self, g: ParamGroup) -> &mut Tensor {
        &mut self.tensors[g.index()]
    }
}

impl Parameters {
    /// Masks start at one, slopes at `prelu_slope_init`, the first `K`
    /// columns of `C` at the identity, and everything else from
    /// `N(0, init_std²)`.
    pub fn init<R: Rng + ?Sized>(h: &HyperParams, rng: &mut R) -> Result<Self, ModelError> {
        h.validate()?;
        let normal =
            Normal::new(0.0, h.init_std).map_err(|e| ModelError::InvalidHyper(e.to_string()))?;
        let mut tensors = Vec::with_capacity(ParamGroup::ALL.len());
        for g in ParamGroup::ALL {
            let shape = g.shape(h);
            let t = match g {
                ParamGroup::EntityMask | ParamGroup::RelationMask | ParamGroup::QuestionMask => {
                    Tensor::filled(&shape, 1.0)
                }
                ParamGroup::EntitySlope | ParamGroup::RelationSlope | ParamGroup::OutputSlope => {
                    Tensor::scalar(h.prelu_slope_init)
                }
                _ => {
                    let mut t = Tensor::zeros(&shape);
                    for v in t.data_mut() {
                        *v = normal.sample(rng);
                    }
                    if g == ParamGroup::C {
                        let cols = 3 * h.dim;
                        for r in 0..h.dim {
                            for c in 0..h.dim {
                                t.data_mut()[r * cols + c] = if r == c { 1.0 } else { 0.0 };
                            }
                        }
                    }
                    t
                }
            };
            tensors.push(t);
        }
        Ok(Self { tensors })
    }

    pub fn from_tensors(h: &HyperParams, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        if tensors.len() != ParamGroup::ALL.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                ParamGroup::ALL.len(),
                tensors.len()
            )));
        }
        for (g, t) in ParamGroup::ALL.iter().zip(&tensors) {
            let expected = g.shape(h);
            if t.shape() != expected.as_slice() {
                return Err(ModelError::ParamShape {
                    group: g.name(),
                    expected,
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(Self { tensors })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_and_constants() {
        let h = HyperParams::new(4, 3, 5, 9);
        let p = Parameters::init(&h, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for g in ParamGroup::ALL {
            assert_eq!(p[g].shape(), g.shape(&h).as_slice(), "{}", g.name());
        }
        assert!(p[ParamGroup::EntityMask].data().iter().all(|&v| v == 1.0));
        assert_eq!(p[ParamGroup::OutputSlope].item(), 1.0);
        let c = &p[ParamGroup::C];
        assert_eq!(c.row(2)[2], 1.0);
        assert_eq!(c.row(2)[1], 0.0);
        assert_eq!(
            ParamGroup::from_name("prelu_rel"),
            Some(ParamGroup::RelationSlope)
        );
    }

    #[test]
    fn init_is_seed_deterministic() {
        let h = HyperParams::new(4, 3, 5, 9);
        let a = Parameters::init(&h, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Parameters::init(&h, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hyper_validation() {
        assert!(HyperParams::new(0, 1, 1, 2).validate().is_err());
        assert!(HyperParams::new(1, 1, 1, 1).validate().is_err());
        assert!(HyperParams::new(1, 1, 1, 2).validate().is_ok());
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let h = HyperParams::new(2, 2, 2, 3);
        let p = Parameters::init(&h, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut ts = p.clone().into_tensors();
        assert_eq!(Parameters::from_tensors(&h, ts.clone()).unwrap(), p);
        ts[ParamGroup::H.index()] = Tensor::zeros(&[3, 2]);
        assert!(matches!(
            Parameters::from_tensors(&h, ts),
            Err(ModelError::ParamShape { group: "H", .. })
        ));
    }
}
