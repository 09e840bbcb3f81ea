use crate::corpus::{Example, PAD};
use crate::tensor::{Tape, Tensor, Var};

use super::{ForwardTrace, HyperParams, ModelError, ParamGroup, Parameters, TraceStep};

use crate::tensor::DEFAULT_NORMALIZE_EPS as NORMALIZE_EPS;

/// Memory of one example, as nodes on the rollout's tape.
#[derive(Debug, Clone, Copy)]
pub struct MemoryState {
    /// `[D, K]`
    pub entities: Var,
    /// `[D*D, K]`, pair `(i, j)` at row `i*D + j`.
    pub relations: Var,
}

/// One example's unrolled computation over shared parameters.
///
/// Parameters are copied onto a private tape, so any number of rollouts can
/// run concurrently over the same `&Parameters`.
pub struct Rollout<'h> {
    tape: Tape,
    hyper: &'h HyperParams,
    params: Vec<Var>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl<'h> Rollout<'h> {
    /// Parameters are trainable leaves; use [`Rollout::backward`] afterwards.
    pub fn new(params: &Parameters, hyper: &'h HyperParams) -> Self {
        Self::build(params, hyper, true)
    }

    /// Inference only: parameters are constants and no gradients are tracked.
    pub fn inference(params: &Parameters, hyper: &'h HyperParams) -> Self {
        Self::build(params, hyper, false)
    }

    fn build(params: &Parameters, hyper: &'h HyperParams, trainable: bool) -> Self {
        let mut tape = Tape::new();
        let vars = params
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        let d = hyper.slots;
        let left = (0..d * d).map(|p| p / d).collect();
        let right = (0..d * d).map(|p| p % d).collect();
        Self {
            tape,
            hyper,
            params: vars,
            left,
            right,
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn value(&self, var: Var) -> &Tensor {
        self.tape.value(var)
    }

    pub fn param(&self, group: ParamGroup) -> Var {
        self.params[group.index()]
    }

    /// Masked bag of embeddings: `sum_i mask[i] * E[token_i]` over non-PAD positions.
    pub fn encode_sentence(
        &mut self,
        tokens: &[usize],
        mask: ParamGroup,
    ) -> Result<Var, ModelError> {
        debug_assert!(matches!(
            mask,
            ParamGroup::EntityMask | ParamGroup::RelationMask | ParamGroup::QuestionMask
        ));
        if tokens.len() > self.hyper.max_len {
            return Err(ModelError::SentenceTooLong {
                len: tokens.len(),
                max: self.hyper.max_len,
            });
        }
        let mut ids = Vec::with_capacity(tokens.len());
        let mut positions = Vec::with_capacity(tokens.len());
        for (pos, &id) in tokens.iter().enumerate() {
            if id >= self.hyper.vocab_size {
                return Err(ModelError::TokenOutOfVocab {
                    id,
                    vocab: self.hyper.vocab_size,
                });
            }
            if id != PAD {
                ids.push(id);
                positions.push(pos);
            }
        }
        if ids.is_empty() {
            return Ok(self.tape.constant(Tensor::zeros(&[self.hyper.dim])));
        }
        let words = self.tape.gather(self.param(ParamGroup::Embedding), ids)?;
        let weights = self.tape.gather(self.param(mask), positions)?;
        let masked = self.tape.mul(words, weights)?;
        Ok(self.tape.sum(masked)?)
    }

    /// Entity slots start at their unit-normalized keys; relations at zero.
    pub fn init_state(&mut self) -> Result<MemoryState, ModelError> {
        let keys_var = self.param(ParamGroup::Keys);
        let keys = self.tape.value(keys_var);
        for slot in 0..keys.rows() {
            let norm = keys.row(slot).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < NORMALIZE_EPS {
                return Err(ModelError::DegenerateKey { slot, norm });
            }
        }
        let entities = self.tape.l2_normalize(keys_var, NORMALIZE_EPS)?;
        let d = self.hyper.slots;
        let relations = self.tape.constant(Tensor::zeros(&[d * d, self.hyper.dim]));
        Ok(MemoryState {
            entities,
            relations,
        })
    }

    /// `g_i = sigmoid(<s, m_i + k_i>)`, shape `[D]`.
    pub fn entity_gates(&mut self, sentence: Var, state: &MemoryState) -> Result<Var, ModelError> {
        let keyed = self
            .tape
            .add(state.entities, self.param(ParamGroup::Keys))?;
        let scores = self.tape.inner(keyed, sentence)?;
        Ok(self.tape.sigmoid(scores)?)
    }

    /// `m_j <- normalize(m_j + g_j * prelu(U m_j + V k_j + W s))`.
    pub fn update_entities(
        &mut self,
        sentence: Var,
        gates: Var,
        state: &MemoryState,
    ) -> Result<MemoryState, ModelError> {
        let t = &mut self.tape;
        let um = t.matvec(self.params[ParamGroup::U.index()], state.entities)?;
        let vk = t.matvec(
            self.params[ParamGroup::V.index()],
            self.params[ParamGroup::Keys.index()],
        )?;
        let ws = t.matvec(self.params[ParamGroup::W.index()], sentence)?;
        let pre = t.add(um, vk)?;
        let pre = t.add(pre, ws)?;
        let candidate = t.prelu(pre, self.params[ParamGroup::EntitySlope.index()])?;
        let gated = t.scale(candidate, gates)?;
        let updated = t.add(state.entities, gated)?;
        let entities = t.l2_normalize(updated, NORMALIZE_EPS)?;
        Ok(MemoryState {
            entities,
            relations: state.relations,
        })
    }

    /// `g_ij = g_i * g_j * sigmoid(<s_rel, r_ij>)`, shape `[D*D]`.
    pub fn relation_gates(
        &mut self,
        sentence_rel: Var,
        entity_gates: Var,
        state: &MemoryState,
    ) -> Result<Var, ModelError> {
        let t = &mut self.tape;
        let gi = t.gather(entity_gates, self.left.clone())?;
        let gj = t.gather(entity_gates, self.right.clone())?;
        let scores = t.inner(state.relations, sentence_rel)?;
        let affinity = t.sigmoid(scores)?;
        let pair = t.mul(gi, gj)?;
        Ok(t.mul(pair, affinity)?)
    }

    /// `r_ij <- r_ij + g_ij * prelu(A r_ij + B s_rel)`, optionally normalized.
    pub fn update_relations(
        &mut self,
        sentence_rel: Var,
        gates: Var,
        state: &MemoryState,
    ) -> Result<MemoryState, ModelError> {
        let t = &mut self.tape;
        let ar = t.matvec(self.params[ParamGroup::A.index()], state.relations)?;
        let bs = t.matvec(self.params[ParamGroup::B.index()], sentence_rel)?;
        let pre = t.add(ar, bs)?;
        let candidate = t.prelu(pre, self.params[ParamGroup::RelationSlope.index()])?;
        let gated = t.scale(candidate, gates)?;
        let mut relations = t.add(state.relations, gated)?;
        if self.hyper.normalize_relations {
            relations = t.l2_normalize(relations, NORMALIZE_EPS)?;
        }
        Ok(MemoryState {
            entities: state.entities,
            relations,
        })
    }

    /// Reads the story in order. Sentences made only of `PAD` are batch
    /// padding and are skipped.
    pub fn read_document(
        &mut self,
        sentences: &[Vec<usize>],
    ) -> Result<(MemoryState, ForwardTrace), ModelError> {
        let mut state = self.init_state()?;
        let mut trace = ForwardTrace::default();
        let d = self.hyper.slots;
        for tokens in sentences {
            if tokens.iter().all(|&t| t == PAD) {
                continue;
            }
            let s = self.encode_sentence(tokens, ParamGroup::EntityMask)?;
            let s_rel = self.encode_sentence(tokens, ParamGroup::RelationMask)?;
            let gm = self.entity_gates(s, &state)?;
            state = self.update_entities(s, gm, &state)?;
            let gr = self.relation_gates(s_rel, gm, &state)?;
            state = self.update_relations(s_rel, gr, &state)?;
            trace.steps.push(TraceStep {
                g_m: self.value(gm).data().to_vec(),
                g_r: self
                    .value(gr)
                    .data()
                    .chunks(d)
                    .map(<[f64]>::to_vec)
                    .collect(),
            });
        }
        Ok((state, trace))
    }

    /// Attention over `C [m_i; m_j; r_ij]` for all pairs, then
    /// `Z prelu(q + H u)`. Returns the logits and the `[D][D]` attention.
    pub fn answer(
        &mut self,
        question: &[usize],
        state: &MemoryState,
    ) -> Result<(Var, Vec<Vec<f64>>), ModelError> {
        let q = self.encode_sentence(question, ParamGroup::QuestionMask)?;
        let t = &mut self.tape;
        let mi = t.gather(state.entities, self.left.clone())?;
        let mj = t.gather(state.entities, self.right.clone())?;
        let joined = t.concat(&[mi, mj, state.relations])?;
        let projected = t.matvec(self.params[ParamGroup::C.index()], joined)?;
        let scores = t.inner(projected, q)?;
        let attention = t.softmax(scores)?;
        let weighted = t.scale(projected, attention)?;
        let u = t.sum(weighted)?;
        let hu = t.matvec(self.params[ParamGroup::H.index()], u)?;
        let pre = t.add(q, hu)?;
        let o = t.prelu(pre, self.params[ParamGroup::OutputSlope.index()])?;
        let logits = t.matvec(self.params[ParamGroup::Z.index()], o)?;
        let d = self.hyper.slots;
        let p = t
            .value(attention)
            .data()
            .chunks(d)
            .map(<[f64]>::to_vec)
            .collect();
        Ok((logits, p))
    }

    pub fn forward(
        &mut self,
        sentences: &[Vec<usize>],
        question: &[usize],
    ) -> Result<(Var, ForwardTrace), ModelError> {
        let (state, mut trace) = self.read_document(sentences)?;
        let (logits, attention) = self.answer(question, &state)?;
        trace.attention = attention;
        Ok((logits, trace))
    }

    /// Gradients of `loss` for every parameter group, in canonical order.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>, ModelError> {
        let mut grads = self.tape.backward(loss)?;
        Ok(self
            .params
            .iter()
            .map(|&v| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(self.tape.shape(v)))
            })
            .collect())
    }
}

/// Logits and trace for one example, without gradient tracking.
pub fn forward(
    params: &Parameters,
    hyper: &HyperParams,
    example: &Example,
) -> Result<(Tensor, ForwardTrace), ModelError> {
    let mut r = Rollout::inference(params, hyper);
    let (logits, trace) = r.forward(&example.sentences, &example.question)?;
    Ok((r.value(logits).clone(), trace))
}

/// Cross-entropy loss, per-group gradients, and logits for one example.
pub fn loss_and_gradients(
    params: &Parameters,
    hyper: &HyperParams,
    sentences: &[Vec<usize>],
    question: &[usize],
    answer: usize,
) -> Result<(f64, Vec<Tensor>, Tensor), ModelError> {
    let mut r = Rollout::new(params, hyper);
    let (logits, _) = r.forward(sentences, question)?;
    let loss = r.tape.cross_entropy(logits, answer)?;
    let grads = r.backward(loss)?;
    Ok((r.value(loss).item(), grads, r.value(logits).clone()))
}
