use crate::corpus::{stream_blocks, Block, SplitCorpus};
use crate::error::Result;
use crate::model::{axpy, block_loss_and_gradient, Embeddings, LossConfig, ModelParams};

use super::{check_dims, Deadline, TraceRecorder, TrainConfig, TrainTrace};

/// `U_u` snapshots taken after each of a user's block updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectories {
    pub k: usize,
    /// Indexed by user; one point per block update, in update order.
    pub per_user: Vec<Vec<TrajectoryPoint>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub epoch: u32,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SarosOutcome {
    pub params: ModelParams,
    /// Running average of the weights each user started from (SAROS_b only).
    pub averaged: Option<ModelParams>,
    pub trace: TrainTrace,
    pub trajectories: Option<Trajectories>,
    /// The block cap actually used (SAROS_b only).
    pub b_max: Option<usize>,
    pub epochs_run: usize,
}

/// Lazily maintained mean of parameter checkpoints.
///
/// For each row, `sum + (count - synced) * current` equals the sum of that
/// row over all checkpoints, so only rows about to change need touching.
struct RunningAverage {
    users: Embeddings,
    items: Embeddings,
    users_synced: Vec<u64>,
    items_synced: Vec<u64>,
    count: u64,
}

impl RunningAverage {
    fn new(params: &ModelParams) -> Self {
        RunningAverage {
            users: Embeddings::zeros(params.n_users(), params.dim()),
            items: Embeddings::zeros(params.n_items(), params.dim()),
            users_synced: vec![0; params.n_users()],
            items_synced: vec![0; params.n_items()],
            count: 0,
        }
    }

    fn checkpoint(&mut self) {
        self.count += 1;
    }

    fn sync_user(&mut self, params: &ModelParams, u: usize) {
        let pending = (self.count - self.users_synced[u]) as f64;
        if pending > 0.0 {
            axpy(pending, params.users.row(u), self.users.row_mut(u));
            self.users_synced[u] = self.count;
        }
    }

    fn sync_item(&mut self, params: &ModelParams, i: usize) {
        let pending = (self.count - self.items_synced[i]) as f64;
        if pending > 0.0 {
            axpy(pending, params.items.row(i), self.items.row_mut(i));
            self.items_synced[i] = self.count;
        }
    }

    fn finish(mut self, params: &ModelParams) -> ModelParams {
        let mut out = params.clone();
        if self.count == 0 {
            return out;
        }
        for u in 0..params.n_users() {
            self.sync_user(params, u);
        }
        for i in 0..params.n_items() {
            self.sync_item(params, i);
        }
        let inv = 1.0 / self.count as f64;
        for (o, s) in out.users.as_mut_slice().iter_mut().zip(self.users.as_slice()) {
            *o = s * inv;
        }
        for (o, s) in out.items.as_mut_slice().iter_mut().zip(self.items.as_slice()) {
            *o = s * inv;
        }
        out
    }
}

/// Copies of the rows a user is about to touch.
struct RowSnapshot {
    user: (usize, Vec<f64>),
    items: Vec<(usize, Vec<f64>)>,
}

impl RowSnapshot {
    fn take(params: &ModelParams, user: usize, blocks: &[Block]) -> Self {
        let mut items: Vec<(usize, Vec<f64>)> = Vec::new();
        for b in blocks {
            for &i in b.positives.iter().chain(&b.negatives) {
                let i = i as usize;
                if !items.iter().any(|(j, _)| *j == i) {
                    items.push((i, params.items.row(i).to_vec()));
                }
            }
        }
        RowSnapshot {
            user: (user, params.users.row(user).to_vec()),
            items,
        }
    }

    fn restore(self, params: &mut ModelParams) {
        params.users.row_mut(self.user.0).copy_from_slice(&self.user.1);
        for (i, row) in self.items {
            params.items.row_mut(i).copy_from_slice(&row);
        }
    }
}

/// Per-user block lists, each truncated to `cap` blocks (all when `None`).
fn user_blocks(split: &SplitCorpus, cap: Option<usize>) -> Vec<Vec<Block>> {
    (0..split.n_users)
        .map(|u| {
            if !split.trainable(u) {
                return Vec::new();
            }
            let blocks = stream_blocks(&split.train[u]);
            match cap {
                Some(c) => blocks.take(c).collect(),
                None => blocks.collect(),
            }
        })
        .collect()
}

/// Sequential block updates with per-user gating.
///
/// Users are visited in stream order every epoch. Each of a user's first
/// `b_max` blocks triggers one gradient step of size `eta` on that block's
/// mean pair loss. If the user produced fewer than `b_min` blocks, every row
/// they touched is restored to its value before the user, so the next user
/// starts from the same weights as this one did.
pub fn train_saros_b(
    split: &SplitCorpus,
    mut params: ModelParams,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<SarosOutcome> {
    cfg.validate()?;
    check_dims(&params, split)?;
    let b_max = cfg.resolve_b_max(split)?;
    let blocks = user_blocks(split, Some(b_max));

    let mut recorder = TraceRecorder::new(cfg.trace_every);
    let mut average = RunningAverage::new(&params);
    let mut trajectories = cfg.record_trajectory.then(|| Trajectories {
        k: params.dim(),
        per_user: vec![Vec::new(); split.n_users],
    });
    let deadline = Deadline::new(cfg.time_budget);
    let mut epochs_run = 0;

    'epochs: for epoch in 0..cfg.epochs {
        for (u, user_blocks) in blocks.iter().enumerate() {
            if deadline.passed() {
                break 'epochs;
            }
            average.checkpoint();
            if user_blocks.is_empty() {
                continue;
            }
            let rollback =
                (user_blocks.len() < cfg.b_min).then(|| RowSnapshot::take(&params, u, user_blocks));

            for block in user_blocks {
                average.sync_user(&params, u);
                for &i in block.positives.iter().chain(&block.negatives) {
                    average.sync_item(&params, i as usize);
                }
                let (loss, grad) = block_loss_and_gradient(&params, loss_cfg, block);
                grad.apply(&mut params, cfg.eta);
                recorder.push(epoch, Some(u as u32), block.index as u64, loss);
                if let Some(t) = trajectories.as_mut() {
                    t.per_user[u].push(TrajectoryPoint {
                        epoch: epoch as u32,
                        values: params.users.row(u).to_vec(),
                    });
                }
            }

            if let Some(snapshot) = rollback {
                snapshot.restore(&mut params);
            }
        }
        epochs_run = epoch + 1;
    }

    let averaged = average.finish(&params);
    Ok(SarosOutcome {
        params,
        averaged: Some(averaged),
        trace: recorder.finish(),
        trajectories,
        b_max: Some(b_max),
        epochs_run,
    })
}

/// Momentum buffers for touched rows with lazily applied decay.
///
/// A row last brought up to date at step `s0` and untouched since then is
/// caught up at step `s` by replaying the `s - 1 - s0` momentum-only steps
/// in closed form: the buffer decays by `mu^e` and the weights move by
/// `alpha * v * mu (1 - mu^e) / (1 - mu)`.
struct LazyMomentum {
    mu: f64,
    alpha: f64,
    v_users: Embeddings,
    v_items: Embeddings,
    users_at: Vec<u64>,
    items_at: Vec<u64>,
    step: u64,
}

impl LazyMomentum {
    fn new(params: &ModelParams, mu: f64, alpha: f64) -> Self {
        LazyMomentum {
            mu,
            alpha,
            v_users: Embeddings::zeros(params.n_users(), params.dim()),
            v_items: Embeddings::zeros(params.n_items(), params.dim()),
            users_at: vec![0; params.n_users()],
            items_at: vec![0; params.n_items()],
            step: 0,
        }
    }

    fn catch_up_row(mu: f64, alpha: f64, elapsed: u64, v: &mut [f64], w: &mut [f64]) {
        if elapsed == 0 || mu == 0.0 || v.iter().all(|&x| x == 0.0) {
            return;
        }
        let decay = mu.powf(elapsed as f64);
        let travel = alpha * mu * (1.0 - decay) / (1.0 - mu);
        for (wi, vi) in w.iter_mut().zip(v.iter_mut()) {
            *wi -= travel * *vi;
            *vi *= decay;
        }
    }

    /// Brings a row up to the state just before step `self.step + 1`.
    fn sync_user(&mut self, params: &mut ModelParams, u: usize) {
        let elapsed = self.step - self.users_at[u];
        Self::catch_up_row(
            self.mu,
            self.alpha,
            elapsed,
            self.v_users.row_mut(u),
            params.users.row_mut(u),
        );
        self.users_at[u] = self.step;
    }

    fn sync_item(&mut self, params: &mut ModelParams, i: usize) {
        let elapsed = self.step - self.items_at[i];
        Self::catch_up_row(
            self.mu,
            self.alpha,
            elapsed,
            self.v_items.row_mut(i),
            params.items.row_mut(i),
        );
        self.items_at[i] = self.step;
    }

    fn flush(&mut self, params: &mut ModelParams) {
        for u in 0..params.n_users() {
            self.sync_user(params, u);
        }
        for i in 0..params.n_items() {
            self.sync_item(params, i);
        }
    }
}

/// Sequential block updates with momentum:
/// `v <- mu v + (1 - mu) grad`, `w <- w - alpha v`.
///
/// Every block of every trainable user is used; there is no gating. The
/// momentum buffer carries over between users and epochs. Rows outside the
/// current block keep moving along their buffer; that motion is applied when
/// the row is next touched and once more at the end, which yields the same
/// weights as a dense update.
pub fn train_saros_m(
    split: &SplitCorpus,
    mut params: ModelParams,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<SarosOutcome> {
    cfg.validate()?;
    check_dims(&params, split)?;
    let blocks = user_blocks(split, None);
    let mut momentum = LazyMomentum::new(&params, cfg.momentum_mu, cfg.momentum_alpha);
    let mut recorder = TraceRecorder::new(cfg.trace_every);
    let deadline = Deadline::new(cfg.time_budget);
    let (mu, alpha) = (cfg.momentum_mu, cfg.momentum_alpha);
    let mut epochs_run = 0;

    'epochs: for epoch in 0..cfg.epochs {
        for (u, user_blocks) in blocks.iter().enumerate() {
            if deadline.passed() {
                break 'epochs;
            }
            for block in user_blocks {
                momentum.sync_user(&mut params, u);
                for &i in block.positives.iter().chain(&block.negatives) {
                    momentum.sync_item(&mut params, i as usize);
                }
                let (loss, grad) = block_loss_and_gradient(&params, loss_cfg, block);
                momentum.step += 1;
                let step = momentum.step;

                let vu = momentum.v_users.row_mut(u);
                momentum_update(vu, &grad.user_grad, mu);
                axpy(-alpha, vu, params.users.row_mut(u));
                momentum.users_at[u] = step;
                for (i, g) in &grad.items {
                    let i = *i as usize;
                    let vi = momentum.v_items.row_mut(i);
                    momentum_update(vi, g, mu);
                    axpy(-alpha, vi, params.items.row_mut(i));
                    momentum.items_at[i] = step;
                }
                recorder.push(epoch, Some(u as u32), block.index as u64, loss);
            }
        }
        epochs_run = epoch + 1;
    }
    momentum.flush(&mut params);

    Ok(SarosOutcome {
        params,
        averaged: None,
        trace: recorder.finish(),
        trajectories: None,
        b_max: None,
        epochs_run,
    })
}

#[inline]
fn momentum_update(v: &mut [f64], g: &[f64], mu: f64) {
    for (vi, gi) in v.iter_mut().zip(g) {
        *vi = mu * *vi + (1.0 - mu) * gi;
    }
}
