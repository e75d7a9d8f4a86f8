//! Planted-structure implicit-feedback corpora.
//!
//! True user and item factors are drawn with entry variance `1/sqrt(k_true)`
//! so that true scores have roughly unit variance. Each user sees a random
//! subset of items in time order; an item is labelled positive when its true
//! score plus Gaussian noise exceeds a per-user threshold chosen so that the
//! user's positive rate matches the target. A share of users are drifting:
//! their factor vector takes a Gaussian random-walk step after every
//! interaction.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::corpus::{Corpus, Label, RawRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub k_true: usize,
    pub interactions_per_user: usize,
    /// Target share of positive labels per user, in (0, 1).
    pub positive_rate: f64,
    /// Share of users whose preferences random-walk.
    pub drift_fraction: f64,
    /// Random-walk step, in units of the per-entry factor standard deviation.
    pub drift_step: f64,
    /// Standard deviation of the label noise added to the true score.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_users: 200,
            n_items: 200,
            k_true: 8,
            interactions_per_user: 150,
            positive_rate: 0.5,
            drift_fraction: 0.0,
            drift_step: 0.5,
            noise_level: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.k_true == 0 {
            return Err(Error::config("users, items and k_true must be positive"));
        }
        if self.interactions_per_user < 2 {
            return Err(Error::config("need at least 2 interactions per user"));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::config(format!(
                "positive rate must lie strictly between 0 and 1, got {}",
                self.positive_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.drift_fraction) {
            return Err(Error::config("drift fraction must lie in [0, 1]"));
        }
        if !(self.noise_level >= 0.0) || !(self.drift_step >= 0.0) {
            return Err(Error::config("noise level and drift step must be >= 0"));
        }
        Ok(())
    }

    fn factor_std(&self) -> f64 {
        (1.0 / (self.k_true as f64).sqrt()).sqrt()
    }
}

/// Planted factors, keyed by the raw identifiers written to the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub k_true: usize,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Factor each user starts from.
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
    pub drifting: Vec<bool>,
    /// Per-user label threshold on the noisy score.
    pub thresholds: Vec<f64>,
}

impl GroundTruth {
    pub fn true_score(&self, user: usize, item: usize) -> f64 {
        crate::model::dot(&self.user_factors[user], &self.item_factors[item])
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "# saros-truth v1")?;
        writeln!(w, "k_true {}", self.k_true)?;
        writeln!(w, "users {}", self.user_ids.len())?;
        writeln!(w, "items {}", self.item_ids.len())?;
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join("\t")
        };
        for u in 0..self.user_ids.len() {
            writeln!(
                w,
                "U\t{}\t{}\t{:?}\t{}",
                self.user_ids[u],
                u8::from(self.drifting[u]),
                self.thresholds[u],
                join(&self.user_factors[u])
            )?;
        }
        for i in 0..self.item_ids.len() {
            writeln!(w, "V\t{}\t{}", self.item_ids[i], join(&self.item_factors[i]))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut truth = GroundTruth {
            k_true: 0,
            user_ids: Vec::new(),
            item_ids: Vec::new(),
            user_factors: Vec::new(),
            item_factors: Vec::new(),
            drifting: Vec::new(),
            thresholds: Vec::new(),
        };
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line_no = n as u64 + 1;
            let bad = |m: &str| Error::Parse {
                line: line_no,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            let floats = |fields: &[&str]| -> Result<Vec<f64>> {
                fields
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| bad("invalid number")))
                    .collect()
            };
            match f[0] {
                "# saros-truth v1" => {}
                s if s.starts_with("k_true ") => {
                    truth.k_true = s[7..].parse().map_err(|_| bad("invalid k_true"))?
                }
                s if s.starts_with("users ") || s.starts_with("items ") => {}
                "U" if f.len() >= 4 => {
                    truth.user_ids.push(f[1].to_string());
                    truth.drifting.push(f[2] == "1");
                    truth.thresholds.push(floats(&f[3..4])?[0]);
                    truth.user_factors.push(floats(&f[4..])?);
                }
                "V" if f.len() >= 2 => {
                    truth.item_ids.push(f[1].to_string());
                    truth.item_factors.push(floats(&f[2..])?);
                }
                _ => return Err(bad("unrecognised ground-truth row")),
            }
        }
        let k = truth.k_true;
        if truth
            .user_factors
            .iter()
            .chain(&truth.item_factors)
            .any(|v| v.len() != k)
        {
            return Err(Error::Data("factor length differs from k_true".into()));
        }
        Ok(truth)
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect()
}

/// Threshold such that exactly `n_pos` scores lie strictly above it, found
/// by bisection on the score range.
fn calibrate_threshold(scores: &[f64], n_pos: usize) -> f64 {
    let above = |t: f64| scores.iter().filter(|&&s| s > t).count();
    let mut lo = scores.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // above(lo) = n, above(hi) = 0; keep above(lo) >= n_pos > above(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) >= n_pos {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

struct UserStream {
    records: Vec<RawRecord>,
    threshold: f64,
}

/// Draws the corpus and its ground truth. Global factors come from stream 0
/// of the seeded generator, user `u` from stream `u + 1`, so output does not
/// depend on the number of threads.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let std = spec.factor_std();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let user_factors: Vec<Vec<f64>> = (0..spec.n_users)
        .map(|_| gaussian_vec(&mut rng, spec.k_true, std))
        .collect();
    let item_factors: Vec<Vec<f64>> = (0..spec.n_items)
        .map(|_| gaussian_vec(&mut rng, spec.k_true, std))
        .collect();
    let n_drifting = (spec.drift_fraction * spec.n_users as f64).round() as usize;
    let mut drifting = vec![false; spec.n_users];
    for u in sample(&mut rng, spec.n_users, n_drifting) {
        drifting[u] = true;
    }

    let user_ids: Vec<String> = (0..spec.n_users).map(|u| format!("u{u}")).collect();
    let item_ids: Vec<String> = (0..spec.n_items).map(|i| format!("i{i}")).collect();
    let n = spec.interactions_per_user;
    let n_pos = ((spec.positive_rate * n as f64).round() as usize).clamp(1, n - 1);
    let step = Normal::new(0.0, spec.drift_step * std).expect("finite std");

    let streams: Vec<UserStream> = (0..spec.n_users)
        .into_par_iter()
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(u as u64 + 1);
            let items: Vec<usize> = if n <= spec.n_items {
                sample(&mut rng, spec.n_items, n).into_vec()
            } else {
                (0..n).map(|_| rng.random_range(0..spec.n_items)).collect()
            };
            let mut pref = user_factors[u].clone();
            let mut scores = Vec::with_capacity(n);
            for &i in &items {
                let noise: f64 = StandardNormal.sample(&mut rng);
                scores.push(
                    crate::model::dot(&pref, &item_factors[i]) + spec.noise_level * noise,
                );
                if drifting[u] {
                    for x in pref.iter_mut() {
                        *x += step.sample(&mut rng);
                    }
                }
            }
            let threshold = calibrate_threshold(&scores, n_pos);
            let mut ts: i64 = rng.random_range(0..1_000_000);
            let records = items
                .iter()
                .zip(&scores)
                .map(|(&i, &s)| {
                    ts += rng.random_range(1..=3600);
                    RawRecord {
                        user: user_ids[u].clone(),
                        item: item_ids[i].clone(),
                        timestamp: ts,
                        label: if s > threshold {
                            Label::Positive
                        } else {
                            Label::Negative
                        },
                    }
                })
                .collect();
            UserStream { records, threshold }
        })
        .collect();

    let thresholds = streams.iter().map(|s| s.threshold).collect();
    let records: Vec<RawRecord> = streams.into_iter().flat_map(|s| s.records).collect();
    let corpus = Corpus::from_records(records)?;
    Ok(SynthData {
        corpus,
        truth: GroundTruth {
            k_true: spec.k_true,
            user_ids,
            item_ids,
            user_factors,
            item_factors,
            drifting,
            thresholds,
        },
    })
}

/// Projects the ground truth onto a corpus's dense indices, giving a model
/// that scores with the true factors.
pub fn oracle_params(truth: &GroundTruth, corpus: &Corpus) -> Result<crate::model::ModelParams> {
    let mut params =
        crate::model::ModelParams::zeros(corpus.n_users(), corpus.n_items(), truth.k_true);
    for (u, raw) in truth.user_ids.iter().enumerate() {
        if let Some(idx) = corpus.users.index_of(raw) {
            params
                .users
                .row_mut(idx as usize)
                .copy_from_slice(&truth.user_factors[u]);
        }
    }
    for (i, raw) in truth.item_ids.iter().enumerate() {
        if let Some(idx) = corpus.items.index_of(raw) {
            params
                .items
                .row_mut(idx as usize)
                .copy_from_slice(&truth.item_factors[i]);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infeasible_rates_rejected() {
        for rate in [0.0, 1.0, -0.1, 1.5] {
            let spec = SynthSpec {
                positive_rate: rate,
                ..Default::default()
            };
            assert!(matches!(generate(&spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn threshold_calibration_hits_count() {
        let scores = [0.3, -1.0, 2.0, 0.3, 0.7, -0.2];
        for n_pos in 1..scores.len() {
            let t = calibrate_threshold(&scores, n_pos);
            let above = scores.iter().filter(|&&s| s > t).count();
            // Ties at 0.3 make exactly 3 unreachable.
            if n_pos != 3 {
                assert_eq!(above, n_pos, "n_pos={n_pos}");
            }
        }
    }

    #[test]
    fn noiseless_static_labels_are_separable() {
        let spec = SynthSpec {
            n_users: 20,
            n_items: 50,
            interactions_per_user: 30,
            noise_level: 0.0,
            drift_fraction: 0.0,
            seed: 3,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        let truth = &data.truth;
        for stream in data.corpus.user_streams() {
            let u = truth
                .user_ids
                .iter()
                .position(|r| r == data.corpus.users.raw(stream[0].user).unwrap())
                .unwrap();
            let score = |x: &crate::Interaction| {
                let raw = data.corpus.items.raw(x.item).unwrap();
                let i = truth.item_ids.iter().position(|r| r == raw).unwrap();
                truth.true_score(u, i)
            };
            let min_pos = stream
                .iter()
                .filter(|x| x.label.is_positive())
                .map(score)
                .fold(f64::INFINITY, f64::min);
            let max_neg = stream
                .iter()
                .filter(|x| !x.label.is_positive())
                .map(score)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(min_pos > max_neg);
        }
    }

    #[test]
    fn drift_share_is_planted() {
        let spec = SynthSpec {
            n_users: 40,
            drift_fraction: 0.25,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        assert_eq!(data.truth.drifting.iter().filter(|&&d| d).count(), 10);
    }
}
