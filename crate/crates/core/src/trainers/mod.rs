//! Training strategies over a split corpus.
//!
//! * [`train_saros_b`]: sequential block updates, gated per user by a minimum
//!   and maximum block count.
//! * [`train_saros_m`]: sequential block updates with momentum, ungated.
//! * [`train_bpr`]: uniformly sampled (user, item, item) triplets.
//! * [`train_bpr_batch`]: full-gradient descent on the global ranking loss.
//!
//! All trainers are single-threaded and fully determined by their inputs and
//! `TrainConfig::seed`.

mod bpr;
mod saros;

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::time::{Duration, Instant};

pub use bpr::{train_bpr, train_bpr_batch, BprOutcome};
pub use saros::{train_saros_b, train_saros_m, SarosOutcome, Trajectories};

use crate::corpus::{item_sets, Block, SplitCorpus};
use crate::error::{Error, Result};
use crate::model::{block_loss_unchecked, LossConfig, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainerKind {
    SarosB,
    SarosM,
    Bpr,
    BprBatch,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::SarosB => "saros-b",
            TrainerKind::SarosM => "saros-m",
            TrainerKind::Bpr => "bpr",
            TrainerKind::BprBatch => "bpr-batch",
        }
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saros-b" => Ok(TrainerKind::SarosB),
            "saros-m" => Ok(TrainerKind::SarosM),
            "bpr" => Ok(TrainerKind::Bpr),
            "bpr-batch" => Ok(TrainerKind::BprBatch),
            other => Err(Error::config(format!("unknown trainer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Step size for SAROS_b and both BPR variants.
    pub eta: f64,
    /// Users with fewer blocks than this have their updates rolled back.
    pub b_min: usize,
    /// Per-epoch cap on a user's block updates. `None` uses the average block
    /// count of the train split.
    pub b_max: Option<usize>,
    pub epochs: usize,
    pub momentum_mu: f64,
    pub momentum_alpha: f64,
    pub seed: u64,
    /// Stop after this much wall-clock time, even if epochs remain.
    pub time_budget: Option<Duration>,
    /// Record every n-th update in the trace; 0 disables the trace.
    pub trace_every: u64,
    /// Record `U_u` after each block update (SAROS_b only).
    pub record_trajectory: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.05,
            b_min: 1,
            b_max: None,
            epochs: 20,
            momentum_mu: 0.9,
            momentum_alpha: 0.05,
            seed: 42,
            time_budget: None,
            trace_every: 1,
            record_trajectory: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if let Some(b_max) = self.b_max {
            if b_max < self.b_min {
                return Err(Error::config(format!(
                    "b_min ({}) exceeds b_max ({b_max})",
                    self.b_min
                )));
            }
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum_mu) {
            return Err(Error::config(format!(
                "momentum mu must lie in [0, 1), got {}",
                self.momentum_mu
            )));
        }
        if !(self.momentum_alpha > 0.0) || !self.momentum_alpha.is_finite() {
            return Err(Error::config(format!(
                "momentum alpha must be > 0, got {}",
                self.momentum_alpha
            )));
        }
        Ok(())
    }

    /// The effective block cap for this corpus.
    pub fn resolve_b_max(&self, split: &SplitCorpus) -> Result<usize> {
        let b_max = self.b_max.unwrap_or_else(|| split.average_block_count());
        if b_max < self.b_min {
            return Err(Error::config(format!(
                "b_min ({}) exceeds resolved b_max ({b_max})",
                self.b_min
            )));
        }
        Ok(b_max)
    }
}

fn check_dims(params: &ModelParams, split: &SplitCorpus) -> Result<()> {
    if params.n_users() != split.n_users || params.n_items() != split.n_items {
        return Err(Error::config(format!(
            "parameters are {}x{} (users x items) but the corpus is {}x{}",
            params.n_users(),
            params.n_items(),
            split.n_users,
            split.n_items
        )));
    }
    Ok(())
}

/// One recorded update: the loss just before it was applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub wall_ms: f64,
    pub epoch: u32,
    /// `None` for full-batch updates.
    pub user: Option<u32>,
    /// Block index within the user, sample index (BPR) or epoch (batch).
    pub block: u64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

const TRACE_HEADER: &str = "wall_clock_ms\tepoch\tuser\tblock\tloss";

impl TrainTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn write_tsv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            let user = r.user.map_or_else(|| "-".to_string(), |u| u.to_string());
            writeln!(
                w,
                "{:.6}\t{}\t{}\t{}\t{:?}",
                r.wall_ms, r.epoch, user, r.block, r.loss
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: Read>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line_no = n as u64 + 1;
            if line_no == 1 && line.trim() == TRACE_HEADER {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse {
                line: line_no,
                message: format!("invalid {what} in trace row {line:?}"),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad("column count"));
            }
            records.push(TraceRecord {
                wall_ms: f[0].parse().map_err(|_| bad("wall clock"))?,
                epoch: f[1].parse().map_err(|_| bad("epoch"))?,
                user: match f[2] {
                    "-" => None,
                    s => Some(s.parse().map_err(|_| bad("user"))?),
                },
                block: f[3].parse().map_err(|_| bad("block"))?,
                loss: f[4].parse().map_err(|_| bad("loss"))?,
            });
        }
        Ok(TrainTrace { records })
    }
}

/// Builds a trace with strictly increasing timestamps.
pub(crate) struct TraceRecorder {
    start: Instant,
    last_ns: u128,
    every: u64,
    seen: u64,
    trace: TrainTrace,
}

impl TraceRecorder {
    pub(crate) fn new(every: u64) -> Self {
        TraceRecorder {
            start: Instant::now(),
            last_ns: 0,
            every,
            seen: 0,
            trace: TrainTrace::default(),
        }
    }

    /// Whether the next update will be recorded; lets callers skip computing
    /// a loss nobody reads.
    pub(crate) fn wants_next(&self) -> bool {
        self.every > 0 && self.seen.is_multiple_of(self.every)
    }

    pub(crate) fn push(&mut self, epoch: usize, user: Option<u32>, block: u64, loss: f64) {
        let take = self.wants_next();
        self.seen += 1;
        if !take {
            return;
        }
        let now = self.start.elapsed().as_nanos().max(self.last_ns + 1);
        self.last_ns = now;
        self.trace.records.push(TraceRecord {
            wall_ms: now as f64 / 1e6,
            epoch: epoch as u32,
            user,
            block,
            loss,
        });
    }

    pub(crate) fn finish(self) -> TrainTrace {
        self.trace
    }
}

pub(crate) struct Deadline(Option<Instant>);

impl Deadline {
    pub(crate) fn new(budget: Option<Duration>) -> Self {
        Deadline(budget.map(|b| Instant::now() + b))
    }

    pub(crate) fn passed(&self) -> bool {
        self.0.is_some_and(|d| Instant::now() >= d)
    }
}

/// Whole-history block of one user: all distinct positives against all
/// distinct negatives. `None` if a side is empty.
pub(crate) fn full_block(user: usize, stream: &[crate::Interaction]) -> Option<Block> {
    let (positives, negatives) = item_sets(stream);
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    Some(Block {
        user: user as u32,
        index: 0,
        negatives,
        positives,
    })
}

/// Global pairwise loss on the train split: each user's mean pair loss,
/// averaged over users that have both labels.
pub fn train_pair_loss(params: &ModelParams, cfg: &LossConfig, split: &SplitCorpus) -> Result<f64> {
    check_dims(params, split)?;
    mean_user_loss(params, cfg, &split.train)
        .ok_or_else(|| Error::UndefinedMetric("no train user has both labels".into()))
}

/// Unregularized pairwise loss over each test user's positives x negatives,
/// averaged over test users that have both labels.
pub fn test_pair_loss(params: &ModelParams, split: &SplitCorpus) -> Result<f64> {
    check_dims(params, split)?;
    let cfg = LossConfig { lambda: 0.0 };
    mean_user_loss(params, &cfg, &split.test)
        .ok_or_else(|| Error::UndefinedMetric("no test user has both labels".into()))
}

fn mean_user_loss(
    params: &ModelParams,
    cfg: &LossConfig,
    streams: &[Vec<crate::Interaction>],
) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (u, stream) in streams.iter().enumerate() {
        if let Some(block) = full_block(u, stream) {
            total += block_loss_unchecked(params, cfg, &block);
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}
