//! Loop-based scalar forward pass, written against plain nested vectors and
//! sharing no code with the tape.

use relnet::corpus::Example;
use relnet::model::{HyperParams, ParamGroup, Parameters};

type Mat = Vec<Vec<f64>>;

pub struct OracleOutput {
    pub logits: Vec<f64>,
    /// Per step: entity gates `[D]` and relational gates `[D][D]`.
    pub gates: Vec<(Vec<f64>, Mat)>,
    pub attention: Mat,
    pub entities: Mat,
}

fn mat(p: &Parameters, g: ParamGroup) -> Mat {
    let t = &p[g];
    let cols = t.shape()[1];
    t.data().chunks(cols).map(|r| r.to_vec()).collect()
}

fn scalar(p: &Parameters, g: ParamGroup) -> f64 {
    p[g].data()[0]
}

fn mv(m: &Mat, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| {
            let mut acc = 0.0;
            for c in 0..x.len() {
                acc += row[c] * x[c];
            }
            acc
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn prelu(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        a * x
    }
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let n = dot(x, x).sqrt().max(1e-8);
    x.iter().map(|v| v / n).collect()
}

fn encode(tokens: &[usize], emb: &Mat, mask: &Mat, k: usize) -> Vec<f64> {
    let mut s = vec![0.0; k];
    for (pos, &tok) in tokens.iter().enumerate() {
        if tok == 0 {
            continue;
        }
        for c in 0..k {
            s[c] += mask[pos][c] * emb[tok][c];
        }
    }
    s
}

pub fn forward(p: &Parameters, h: &HyperParams, ex: &Example) -> OracleOutput {
    let (k, d) = (h.dim, h.slots);
    let emb = mat(p, ParamGroup::Embedding);
    let f_ent = mat(p, ParamGroup::EntityMask);
    let f_rel = mat(p, ParamGroup::RelationMask);
    let f_q = mat(p, ParamGroup::QuestionMask);
    let keys = mat(p, ParamGroup::Keys);
    let (u, v, w) = (
        mat(p, ParamGroup::U),
        mat(p, ParamGroup::V),
        mat(p, ParamGroup::W),
    );
    let (a, b) = (mat(p, ParamGroup::A), mat(p, ParamGroup::B));
    let (c, hm, z) = (
        mat(p, ParamGroup::C),
        mat(p, ParamGroup::H),
        mat(p, ParamGroup::Z),
    );
    let (a_ent, a_rel, a_out) = (
        scalar(p, ParamGroup::EntitySlope),
        scalar(p, ParamGroup::RelationSlope),
        scalar(p, ParamGroup::OutputSlope),
    );

    let mut m: Mat = keys.iter().map(|row| normalize(row)).collect();
    let mut r: Vec<Mat> = vec![vec![vec![0.0; k]; d]; d];
    let mut gates = Vec::new();

    for sent in &ex.sentences {
        if sent.iter().all(|&t| t == 0) {
            continue;
        }
        let s = encode(sent, &emb, &f_ent, k);
        let s_rel = encode(sent, &emb, &f_rel, k);

        let mut gm = vec![0.0; d];
        for i in 0..d {
            let mk: Vec<f64> = (0..k).map(|c| m[i][c] + keys[i][c]).collect();
            gm[i] = sigmoid(dot(&s, &mk));
        }

        let ws = mv(&w, &s);
        let mut new_m = m.clone();
        for j in 0..d {
            let um = mv(&u, &m[j]);
            let vk = mv(&v, &keys[j]);
            let mut cand = vec![0.0; k];
            for cc in 0..k {
                cand[cc] = m[j][cc] + gm[j] * prelu(um[cc] + vk[cc] + ws[cc], a_ent);
            }
            new_m[j] = normalize(&cand);
        }
        m = new_m;

        let bs = mv(&b, &s_rel);
        let mut gr = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                gr[i][j] = gm[i] * gm[j] * sigmoid(dot(&s_rel, &r[i][j]));
            }
        }
        for i in 0..d {
            for j in 0..d {
                let ar = mv(&a, &r[i][j]);
                let mut next = vec![0.0; k];
                for cc in 0..k {
                    next[cc] = r[i][j][cc] + gr[i][j] * prelu(ar[cc] + bs[cc], a_rel);
                }
                r[i][j] = if h.normalize_relations {
                    normalize(&next)
                } else {
                    next
                };
            }
        }
        gates.push((gm, gr));
    }

    let q = encode(&ex.question, &emb, &f_q, k);
    let mut mf = vec![vec![vec![0.0; k]; d]; d];
    let mut scores = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut cat = Vec::with_capacity(3 * k);
            cat.extend_from_slice(&m[i]);
            cat.extend_from_slice(&m[j]);
            cat.extend_from_slice(&r[i][j]);
            mf[i][j] = mv(&c, &cat);
            scores[i][j] = dot(&q, &mf[i][j]);
        }
    }
    let max = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for row in &scores {
        for &sc in row {
            total += (sc - max).exp();
        }
    }
    let attention: Mat = scores
        .iter()
        .map(|row| row.iter().map(|&sc| (sc - max).exp() / total).collect())
        .collect();
    let mut uvec = vec![0.0; k];
    for i in 0..d {
        for j in 0..d {
            for cc in 0..k {
                uvec[cc] += attention[i][j] * mf[i][j][cc];
            }
        }
    }
    let hu = mv(&hm, &uvec);
    let o: Vec<f64> = (0..k).map(|cc| prelu(q[cc] + hu[cc], a_out)).collect();
    OracleOutput {
        logits: mv(&z, &o),
        gates,
        attention,
        entities: m,
    }
}
