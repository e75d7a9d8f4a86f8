//! Ranking metrics over the test split.
//!
//! Relevance is binary: an item is relevant for a user when it carries a
//! positive label in that user's test stream. Users without any relevant
//! item are left out of every aggregate and counted separately.

use std::fmt;
use std::io::{BufWriter, Write};

use rayon::prelude::*;

use crate::corpus::{item_sets, SplitCorpus};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Which items are ranked for a user.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Candidates {
    /// Items the user interacted with in test, either label.
    #[default]
    Test,
    /// The whole catalogue.
    All,
}

impl std::str::FromStr for Candidates {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Candidates::Test),
            "all" => Ok(Candidates::All),
            other => Err(Error::config(format!(
                "unknown candidate policy {other:?} (expected `test` or `all`)"
            ))),
        }
    }
}

/// Items of one user sorted by descending score, ties by ascending item.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub user: u32,
    pub items: Vec<u32>,
    pub scores: Vec<f64>,
    pub relevance: Vec<bool>,
}

impl RankedList {
    pub fn n_relevant(&self) -> usize {
        self.relevance.iter().filter(|&&r| r).count()
    }
}

pub fn rank_items(
    params: &ModelParams,
    user: u32,
    candidates: &[u32],
    is_relevant: impl Fn(u32) -> bool,
) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(Error::Data(format!("user {user} has no candidates")));
    }
    if user as usize >= params.n_users() {
        return Err(Error::OutOfBounds {
            kind: "user",
            index: user as usize,
            size: params.n_users(),
        });
    }
    if let Some(&bad) = candidates.iter().find(|&&i| i as usize >= params.n_items()) {
        return Err(Error::OutOfBounds {
            kind: "item",
            index: bad as usize,
            size: params.n_items(),
        });
    }
    let mut scored: Vec<(u32, f64)> = candidates
        .iter()
        .map(|&i| (i, params.score_unchecked(user as usize, i as usize)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RankedList {
        user,
        relevance: scored.iter().map(|&(i, _)| is_relevant(i)).collect(),
        items: scored.iter().map(|&(i, _)| i).collect(),
        scores: scored.into_iter().map(|(_, s)| s).collect(),
    })
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::config("cutoff K must be at least 1"));
    }
    Ok(())
}

/// `(1/K) * sum_{k <= K} r_k * Prec@k`.
///
/// The sum is divided by `K` itself, not by the number of relevant items, so
/// a user with fewer than `K` relevant items cannot reach 1.
pub fn average_precision_at_k(relevance: &[bool], k: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &rel) in relevance.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / k as f64
}

/// Binary-relevance NDCG@K; `None` when the list holds no relevant item.
pub fn ndcg_at_k(relevance: &[bool], k: usize) -> Option<f64> {
    let n_rel = relevance.iter().filter(|&&r| r).count();
    if n_rel == 0 {
        return None;
    }
    let discount = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    let dcg: f64 = relevance
        .iter()
        .take(k)
        .enumerate()
        .filter(|&(_, &r)| r)
        .map(|(rank, _)| discount(rank))
        .sum();
    let idcg: f64 = (0..k.min(n_rel)).map(discount).sum();
    Some(dcg / idcg)
}

/// `1 / rank` of the first relevant item within the top `K`, else 0.
pub fn reciprocal_rank_at_k(relevance: &[bool], k: usize) -> f64 {
    relevance
        .iter()
        .take(k)
        .position(|&r| r)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

pub fn mrr_at_k(lists: &[RankedList], k: usize) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    lists
        .iter()
        .map(|l| reciprocal_rank_at_k(&l.relevance, k))
        .sum::<f64>()
        / lists.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserMetrics {
    pub user: u32,
    /// One entry per cutoff, aligned with `EvalReport::ks`.
    pub ap: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub rr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub per_user: Vec<UserMetrics>,
    pub map: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub mrr: Vec<f64>,
    pub n_users_evaluated: usize,
    /// Active users with test interactions but no relevant item.
    pub n_users_skipped: usize,
}

impl EvalReport {
    fn index_of(&self, k: usize) -> Option<usize> {
        self.ks.iter().position(|&x| x == k)
    }

    pub fn map_at(&self, k: usize) -> Option<f64> {
        self.index_of(k).map(|i| self.map[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.index_of(k).map(|i| self.ndcg[i])
    }

    pub fn mrr_at(&self, k: usize) -> Option<f64> {
        self.index_of(k).map(|i| self.mrr[i])
    }

    pub fn write_per_user_tsv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "user\tk\tap\tndcg\trr")?;
        for m in &self.per_user {
            for (j, k) in self.ks.iter().enumerate() {
                writeln!(
                    w,
                    "{}\t{k}\t{:?}\t{:?}\t{:?}",
                    m.user, m.ap[j], m.ndcg[j], m.rr[j]
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_tsv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "k\tmap\tndcg\tmrr\tn_users")?;
        for (j, k) in self.ks.iter().enumerate() {
            writeln!(
                w,
                "{k}\t{:?}\t{:?}\t{:?}\t{}",
                self.map[j], self.ndcg[j], self.mrr[j], self.n_users_evaluated
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6}  {:>8}  {:>8}  {:>8}", "K", "MAP", "NDCG", "MRR")?;
        for (j, k) in self.ks.iter().enumerate() {
            writeln!(
                f,
                "{k:>6}  {:>8.4}  {:>8.4}  {:>8.4}",
                self.map[j], self.ndcg[j], self.mrr[j]
            )?;
        }
        write!(
            f,
            "users evaluated: {} (skipped without relevant items: {})",
            self.n_users_evaluated, self.n_users_skipped
        )
    }
}

/// Ranks each active user's candidates and aggregates MAP, NDCG and MRR for
/// every cutoff in `ks`.
pub fn evaluate(
    params: &ModelParams,
    split: &SplitCorpus,
    ks: &[usize],
    candidates: Candidates,
) -> Result<EvalReport> {
    params.check_shape(split.n_users, split.n_items)?;
    if ks.is_empty() {
        return Err(Error::config("at least one cutoff K is required"));
    }
    for &k in ks {
        check_k(k)?;
    }
    let all_items: Vec<u32> = (0..split.n_items as u32).collect();

    let outcomes: Vec<Option<UserMetrics>> = (0..split.n_users)
        .into_par_iter()
        .filter(|&u| split.active[u] && !split.test[u].is_empty())
        .map(|u| -> Result<Option<UserMetrics>> {
            let (positives, negatives) = item_sets(&split.test[u]);
            if positives.is_empty() {
                return Ok(None);
            }
            let pool: Vec<u32> = match candidates {
                Candidates::Test => {
                    let mut c = positives.clone();
                    c.extend(negatives.iter().filter(|i| !positives.contains(i)));
                    c
                }
                Candidates::All => all_items.clone(),
            };
            let ranked = rank_items(params, u as u32, &pool, |i| positives.contains(&i))?;
            let rel = &ranked.relevance;
            Ok(Some(UserMetrics {
                user: u as u32,
                ap: ks.iter().map(|&k| average_precision_at_k(rel, k)).collect(),
                ndcg: ks
                    .iter()
                    .map(|&k| ndcg_at_k(rel, k).expect("has a relevant item"))
                    .collect(),
                rr: ks.iter().map(|&k| reciprocal_rank_at_k(rel, k)).collect(),
            }))
        })
        .collect::<Result<_>>()?;

    let n_skipped = outcomes.iter().filter(|o| o.is_none()).count();
    let per_user: Vec<UserMetrics> = outcomes.into_iter().flatten().collect();
    if per_user.is_empty() {
        return Err(Error::UndefinedMetric(
            "no user has a relevant test item".into(),
        ));
    }
    let n = per_user.len() as f64;
    let mean = |pick: &dyn Fn(&UserMetrics) -> f64| per_user.iter().map(pick).sum::<f64>() / n;
    let map = (0..ks.len()).map(|j| mean(&|m| m.ap[j])).collect();
    let ndcg = (0..ks.len()).map(|j| mean(&|m| m.ndcg[j])).collect();
    let mrr = (0..ks.len()).map(|j| mean(&|m| m.rr[j])).collect();

    Ok(EvalReport {
        ks: ks.to_vec(),
        n_users_evaluated: per_user.len(),
        n_users_skipped: n_skipped,
        per_user,
        map,
        ndcg,
        mrr,
    })
}
