//! Shared fixtures and straight-from-the-formula reference implementations.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use saros::corpus::{Interaction, Label, SplitCorpus};
use saros::model::{Embeddings, ModelParams};

pub fn interaction(user: u32, item: u32, timestamp: i64, positive: bool) -> Interaction {
    Interaction {
        user,
        item,
        timestamp,
        label: if positive {
            Label::Positive
        } else {
            Label::Negative
        },
    }
}

/// Train streams given as `(item, positive)` per user; empty test split.
pub fn train_only(streams: &[Vec<(u32, bool)>], n_items: usize) -> SplitCorpus {
    let train: Vec<Vec<Interaction>> = streams
        .iter()
        .enumerate()
        .map(|(u, s)| {
            s.iter()
                .enumerate()
                .map(|(t, &(i, p))| interaction(u as u32, i, t as i64, p))
                .collect()
        })
        .collect();
    SplitCorpus {
        n_users: train.len(),
        n_items,
        test: vec![Vec::new(); train.len()],
        active: train.iter().map(|t| !t.is_empty()).collect(),
        train,
    }
}

pub fn random_params(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize, k: usize) -> ModelParams {
    let mut draw = |rows: usize| {
        let data = (0..rows * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        Embeddings::from_vec(rows, k, data).unwrap()
    };
    let users = draw(n_users);
    let items = draw(n_items);
    ModelParams {
        users,
        items,
        seed: 0,
    }
}

/// Blocks as read off the training pseudo-code: collect negatives and
/// positives (each item once per open block) until both are non-empty.
pub fn reference_blocks(stream: &[(u32, bool)]) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut out = Vec::new();
    let (mut neg, mut pos): (Vec<u32>, Vec<u32>) = (vec![], vec![]);
    for &(item, p) in stream {
        if neg.contains(&item) || pos.contains(&item) {
            continue;
        }
        if p {
            pos.push(item);
        } else {
            neg.push(item);
        }
        if !neg.is_empty() && !pos.is_empty() {
            out.push((std::mem::take(&mut neg), std::mem::take(&mut pos)));
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dense gradient of the block objective: mean over pairs of
/// `log(1 + exp(-U.(V_i - V_j))) + lambda (|U|^2 + |V_i|^2 + |V_j|^2)`.
/// Returned as `(user grads, item grads)`, row-major.
pub fn reference_block_gradient(
    p: &ModelParams,
    lambda: f64,
    u: usize,
    neg: &[u32],
    pos: &[u32],
) -> (Vec<f64>, Vec<f64>) {
    let k = p.dim();
    let mut gu = vec![0.0; p.n_users() * k];
    let mut gv = vec![0.0; p.n_items() * k];
    let pairs = (neg.len() * pos.len()) as f64;
    let uu = p.users.row(u);
    for &i in pos {
        for &j in neg {
            let (vi, vj) = (p.items.row(i as usize), p.items.row(j as usize));
            let diff: Vec<f64> = vi.iter().zip(vj).map(|(a, b)| a - b).collect();
            let w = logistic(-dot(uu, &diff));
            for c in 0..k {
                gu[u * k + c] += (-w * diff[c] + 2.0 * lambda * uu[c]) / pairs;
                gv[i as usize * k + c] += (-w * uu[c] + 2.0 * lambda * vi[c]) / pairs;
                gv[j as usize * k + c] += (w * uu[c] + 2.0 * lambda * vj[c]) / pairs;
            }
        }
    }
    (gu, gv)
}

/// Mean pair loss of a block, evaluated pair by pair.
pub fn reference_block_loss(p: &ModelParams, lambda: f64, u: usize, neg: &[u32], pos: &[u32]) -> f64 {
    let uu = p.users.row(u);
    let mut total = 0.0;
    for &i in pos {
        for &j in neg {
            let (vi, vj) = (p.items.row(i as usize), p.items.row(j as usize));
            let m = dot(uu, vi) - dot(uu, vj);
            total += (1.0 + (-m).exp()).ln() + lambda * (dot(uu, uu) + dot(vi, vi) + dot(vj, vj));
        }
    }
    total / (neg.len() * pos.len()) as f64
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn flat(p: &ModelParams) -> Vec<f64> {
    p.users
        .as_slice()
        .iter()
        .chain(p.items.as_slice())
        .copied()
        .collect()
}

/// `(1/K) sum_{k=1..K} r_k * (relevant among top k) / k`.
pub fn brute_ap(rel: &[bool], k: usize) -> f64 {
    let mut sum = 0.0;
    for rank in 1..=k.min(rel.len()) {
        let r = if rel[rank - 1] { 1.0 } else { 0.0 };
        let hits = rel[..rank].iter().filter(|&&x| x).count();
        sum += r * (hits as f64 / rank as f64);
    }
    sum / k as f64
}

fn dcg(rel: &[bool], k: usize) -> f64 {
    let mut s = 0.0;
    for i in 1..=k.min(rel.len()) {
        let gain = if rel[i - 1] { 1.0 } else { 0.0 };
        if gain > 0.0 {
            s += gain / ((1 + i) as f64).log2();
        }
    }
    s
}

/// DCG over the ideal (relevant-first) reordering in the denominator.
pub fn brute_ndcg(rel: &[bool], k: usize) -> Option<f64> {
    let mut ideal = rel.to_vec();
    ideal.sort_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    (idcg > 0.0).then(|| dcg(rel, k) / idcg)
}

pub fn brute_rr(rel: &[bool], k: usize) -> f64 {
    for i in 1..=k.min(rel.len()) {
        if rel[i - 1] {
            return 1.0 / i as f64;
        }
    }
    0.0
}

/// All relevance patterns of length `1..=max_len`.
pub fn all_patterns(max_len: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    for len in 1..=max_len {
        for bits in 0u32..(1 << len) {
            out.push((0..len).map(|i| bits >> i & 1 == 1).collect());
        }
    }
    out
}

fn apply_dense(p: &mut ModelParams, gu: &[f64], gv: &[f64], step: f64) {
    for (w, g) in p.users.as_mut_slice().iter_mut().zip(gu) {
        *w -= step * g;
    }
    for (w, g) in p.items.as_mut_slice().iter_mut().zip(gv) {
        *w -= step * g;
    }
}

fn stream_pairs(stream: &[Interaction]) -> Vec<(u32, bool)> {
    stream.iter().map(|x| (x.item, x.label.is_positive())).collect()
}

/// One epoch of the gated sequential algorithm with dense arithmetic: users
/// in index order, at most `b_max` block steps each, undone when fewer than
/// `b_min` blocks were taken.
pub fn reference_saros_epoch(
    p: &ModelParams,
    split: &SplitCorpus,
    lambda: f64,
    eta: f64,
    b_min: usize,
    b_max: usize,
) -> ModelParams {
    let mut w = p.clone();
    for u in 0..split.n_users {
        let blocks = reference_blocks(&stream_pairs(&split.train[u]));
        let taken = &blocks[..blocks.len().min(b_max)];
        if taken.len() < b_min {
            continue;
        }
        for (neg, pos) in taken {
            let (gu, gv) = reference_block_gradient(&w, lambda, u, neg, pos);
            apply_dense(&mut w, &gu, &gv, eta);
        }
    }
    w
}

fn distinct(stream: &[(u32, bool)], label: bool) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::new();
    for &(i, l) in stream {
        if l == label && !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// One full-gradient step on the mean over users of each user's mean pair
/// loss over all distinct (positive, negative) train items.
pub fn reference_batch_epoch(p: &ModelParams, split: &SplitCorpus, lambda: f64, eta: f64) -> ModelParams {
    let k = p.dim();
    let mut gu = vec![0.0; p.n_users() * k];
    let mut gv = vec![0.0; p.n_items() * k];
    let mut n = 0usize;
    for u in 0..split.n_users {
        let s = stream_pairs(&split.train[u]);
        let (pos, neg) = (distinct(&s, true), distinct(&s, false));
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let (a, b) = reference_block_gradient(p, lambda, u, &neg, &pos);
        gu.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
        gv.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        n += 1;
    }
    let mut w = p.clone();
    apply_dense(&mut w, &gu, &gv, eta / n as f64);
    w
}

/// Sequential momentum over the same blocks with dense velocity:
/// `v = mu v + (1 - mu) g`, `w -= alpha v`, no gating.
pub fn reference_momentum(
    p: &ModelParams,
    split: &SplitCorpus,
    lambda: f64,
    mu: f64,
    alpha: f64,
    epochs: usize,
) -> ModelParams {
    let mut w = p.clone();
    let k = p.dim();
    let mut vu = vec![0.0; p.n_users() * k];
    let mut vv = vec![0.0; p.n_items() * k];
    for _ in 0..epochs {
        for u in 0..split.n_users {
            for (neg, pos) in reference_blocks(&stream_pairs(&split.train[u])) {
                let (gu, gv) = reference_block_gradient(&w, lambda, u, &neg, &pos);
                vu.iter_mut().zip(&gu).for_each(|(v, g)| *v = mu * *v + (1.0 - mu) * g);
                vv.iter_mut().zip(&gv).for_each(|(v, g)| *v = mu * *v + (1.0 - mu) * g);
                apply_dense(&mut w, &vu, &vv, alpha);
            }
        }
    }
    w
}
