mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relnet::corpus::{
    batchify, build_vocab, parse_task_file, to_babi_text, truncate, Batch, Example, TextExample,
    TextSentence, PAD,
};
use relnet::model::{forward, HyperParams, ParamGroup, Parameters, Rollout};
use relnet::tensor::{Tape, Tensor};
use relnet::train::{clip_global_norm, global_norm};

#[derive(Debug, Clone)]
struct Case {
    h: HyperParams,
    params: Parameters,
    example: Example,
}

fn case() -> impl Strategy<Value = Case> {
    (
        1usize..6,
        1usize..5,
        1usize..5,
        3usize..12,
        0usize..5,
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(|(k, d, l, v, t, seed, norm_rel)| {
            let mut h = common::micro_hyper(k, d, l, v);
            h.normalize_relations = norm_rel;
            let params = common::perturbed_params(&h, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
            let example = common::random_example(&h, t, &mut rng);
            Case { h, params, example }
        })
}

fn logits(c: &Case, p: &Parameters, ex: &Example) -> Vec<f64> {
    forward(p, &c.h, ex).unwrap().0.into_data()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gates_are_bounded_and_relational_gates_are_dominated(c in case()) {
        let (_, trace) = forward(&c.params, &c.h, &c.example).unwrap();
        for step in &trace.steps {
            for &g in &step.g_m {
                prop_assert!((0.0..=1.0).contains(&g));
            }
            for (i, row) in step.g_r.iter().enumerate() {
                for (j, &g) in row.iter().enumerate() {
                    prop_assert!((0.0..=1.0).contains(&g));
                    prop_assert!(g <= step.g_m[i] * step.g_m[j] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn entity_slots_stay_unit_norm_after_every_update(c in case()) {
        let mut r = Rollout::inference(&c.params, &c.h);
        let mut state = r.init_state().unwrap();
        for s in &c.example.sentences {
            let enc = r.encode_sentence(s, ParamGroup::EntityMask).unwrap();
            let enc_rel = r.encode_sentence(s, ParamGroup::RelationMask).unwrap();
            let g = r.entity_gates(enc, &state).unwrap();
            state = r.update_entities(enc, g, &state).unwrap();
            let m = r.value(state.entities).clone();
            for i in 0..m.rows() {
                let n = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() <= 1e-5, "row {} norm {}", i, n);
            }
            let gr = r.relation_gates(enc_rel, g, &state).unwrap();
            state = r.update_relations(enc_rel, gr, &state).unwrap();
        }
    }

    #[test]
    fn attention_is_a_distribution(c in case()) {
        let (_, trace) = forward(&c.params, &c.h, &c.example).unwrap();
        let flat: Vec<f64> = trace.attention.concat();
        prop_assert_eq!(flat.len(), c.h.slots * c.h.slots);
        prop_assert!(flat.iter().all(|&p| p >= 0.0));
        prop_assert!((flat.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn logits_are_invariant_to_slot_permutation(c in case(), seed in any::<u64>()) {
        let d = c.h.slots;
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut permuted = c.params.clone();
        let keys = c.params[ParamGroup::Keys].clone();
        let k = c.h.dim;
        for (dst, &src) in perm.iter().enumerate() {
            permuted[ParamGroup::Keys].data_mut()[dst * k..(dst + 1) * k].copy_from_slice(keys.row(src));
        }
        let a = logits(&c, &c.params, &c.example);
        let b = logits(&c, &permuted, &c.example);
        prop_assert!(max_diff(&a, &b) <= 1e-10);
    }

    #[test]
    fn padding_is_neutral(c in case(), extra in 0usize..3) {
        let base = logits(&c, &c.params, &c.example);

        let mut padded = c.example.clone();
        for s in &mut padded.sentences {
            s.resize(c.h.max_len, PAD);
        }
        padded.question.resize(c.h.max_len, PAD);
        for _ in 0..extra {
            padded.sentences.push(vec![PAD; c.h.max_len]);
        }
        prop_assert!(max_diff(&base, &logits(&c, &c.params, &padded)) <= 1e-10);

        let other = common::random_example(&c.h, 4, &mut ChaCha8Rng::seed_from_u64(1));
        let batch = Batch::from_examples(&[&c.example, &other]);
        let in_batch = Example {
            sentences: batch.stories[0].clone(),
            lines: vec![],
            question: batch.questions[0].clone(),
            answer: batch.answers[0],
            support: vec![],
        };
        prop_assert!(max_diff(&base, &logits(&c, &c.params, &in_batch)) <= 1e-10);
    }

    #[test]
    fn fixed_seed_is_deterministic(c in case(), seed in any::<u64>()) {
        let a = Parameters::init(&c.h, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = Parameters::init(&c.h, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        let x = logits(&c, &a, &c.example);
        let y = logits(&c, &b, &c.example);
        prop_assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));

        let examples: Vec<Example> = (0..7).map(|i| common::random_example(&c.h, 1 + i % 3, &mut ChaCha8Rng::seed_from_u64(i as u64))).collect();
        prop_assert_eq!(batchify(&examples, 3, seed), batchify(&examples, 3, seed));
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..4, vals in prop::collection::vec(-30.0f64..30.0, 1..12)) {
        let n = vals.len();
        let data: Vec<f64> = (0..rows).flat_map(|r| vals.iter().map(move |v| v + r as f64)).collect();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![rows, n], data).unwrap());
        let y = tape.softmax(x).unwrap();
        for r in tape.value(y).to_rows() {
            prop_assert!(r.iter().all(|&p| p >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn l2_normalize_gives_unit_rows(vals in prop::collection::vec(-1.0f64..1.0, 1..10), exp in -7i32..4) {
        let scale = 10f64.powi(exp);
        let x: Vec<f64> = vals.iter().map(|v| v * scale).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-8);
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::vector(x));
        let y = tape.l2_normalize(v, 1e-8).unwrap();
        prop_assert!((tape.value(y).norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn clipped_norm_never_exceeds_limit(vals in prop::collection::vec(-50.0f64..50.0, 1..40), split in 1usize..5) {
        let chunks: Vec<Tensor> = vals.chunks(split).map(|c| Tensor::vector(c.to_vec())).collect();
        let before = global_norm(&chunks);
        let mut clipped = chunks.clone();
        clip_global_norm(&mut clipped, 2.0).unwrap();
        prop_assert!(global_norm(&clipped) <= 2.0 + 1e-9);
        if before <= 2.0 {
            prop_assert_eq!(clipped, chunks);
        }
    }

    #[test]
    fn truncation_keeps_most_recent(t in 1usize..200, limit in 1usize..140) {
        let ex = Example {
            sentences: (0..t).map(|i| vec![i + 1]).collect(),
            lines: (1..=t).collect(),
            question: vec![1],
            answer: 1,
            support: vec![],
        };
        let cut = truncate(&ex, limit);
        let keep = t.min(limit);
        prop_assert_eq!(cut.sentences.len(), keep);
        prop_assert_eq!(&cut.sentences[..], &ex.sentences[t - keep..]);
        prop_assert_eq!(&cut.lines[..], &ex.lines[t - keep..]);
    }

    #[test]
    fn parse_serialize_round_trip(stories in prop::collection::vec((1usize..6, 1usize..4), 1..6), seed in any::<u64>()) {
        use rand::Rng;
        let words = ["mary", "went", "to", "the", "garden", "john", "took", "apple", "n,s"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut examples = Vec::new();
        for (statements, len) in stories {
            let sentences: Vec<TextSentence> = (0..statements)
                .map(|i| TextSentence {
                    line: i + 1,
                    tokens: (0..len).map(|_| words[rng.random_range(0..8)].to_string()).collect(),
                })
                .collect();
            examples.push(TextExample {
                support: vec![rng.random_range(1..=statements)],
                sentences,
                question: vec!["where".into(), "is".into(), "mary".into()],
                question_line: statements + 1,
                answer: words[rng.random_range(0..9)].to_string(),
            });
        }
        let text = to_babi_text(&examples);
        let back = parse_task_file(&text).unwrap();
        prop_assert_eq!(&back, &examples);
        let vocab = build_vocab(examples.iter());
        for e in &examples {
            let enc = vocab.encode(e).unwrap();
            prop_assert!(enc.answer < vocab.len());
            prop_assert_eq!(vocab.token(enc.answer).unwrap(), e.answer.as_str());
        }
        for (i, tok) in vocab.tokens().iter().enumerate() {
            prop_assert_eq!(vocab.id(tok), Some(i));
        }
    }
}
