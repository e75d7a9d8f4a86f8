use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Block, SplitCorpus};
use crate::error::{Error, Result};
use crate::model::{axpy, block_loss_and_gradient, pair_step, Embeddings, LossConfig, ModelParams};

use super::{check_dims, full_block, Deadline, TraceRecorder, TrainConfig, TrainTrace};

#[derive(Clone, Debug)]
pub struct BprOutcome {
    pub params: ModelParams,
    pub trace: TrainTrace,
    /// Stochastic variant: draws where both items carried the same label.
    pub rejected: u64,
    /// Stochastic variant: draws that produced an update.
    pub accepted: u64,
    pub epochs_run: usize,
}

/// Stochastic triplet sampling.
///
/// Each epoch performs `n_samples` draws: a user uniformly among users with
/// train interactions, then two interactions uniformly (with replacement)
/// from that user's train stream. When exactly one of the two is positive,
/// one SGD step of size `eta` is taken on that pair; otherwise the draw is
/// rejected.
pub fn train_bpr(
    split: &SplitCorpus,
    mut params: ModelParams,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    n_samples: u64,
) -> Result<BprOutcome> {
    cfg.validate()?;
    check_dims(&params, split)?;
    let pool: Vec<usize> = (0..split.n_users)
        .filter(|&u| !split.train[u].is_empty())
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyCorpus("no user has train interactions".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut recorder = TraceRecorder::new(cfg.trace_every);
    let deadline = Deadline::new(cfg.time_budget);
    let (mut accepted, mut rejected) = (0u64, 0u64);
    let mut epochs_run = 0;

    'epochs: for epoch in 0..cfg.epochs {
        for s in 0..n_samples {
            if s % 256 == 0 && deadline.passed() {
                break 'epochs;
            }
            let u = pool[rng.random_range(0..pool.len())];
            let stream = &split.train[u];
            let a = &stream[rng.random_range(0..stream.len())];
            let b = &stream[rng.random_range(0..stream.len())];
            let (pos, neg) = match (a.label.is_positive(), b.label.is_positive()) {
                (true, false) => (a.item, b.item),
                (false, true) => (b.item, a.item),
                _ => {
                    rejected += 1;
                    continue;
                }
            };
            let loss = pair_step(
                &mut params,
                loss_cfg,
                u,
                pos as usize,
                neg as usize,
                cfg.eta,
            );
            accepted += 1;
            recorder.push(epoch, Some(u as u32), s, loss);
        }
        epochs_run = epoch + 1;
    }

    Ok(BprOutcome {
        params,
        trace: recorder.finish(),
        rejected,
        accepted,
        epochs_run,
    })
}

/// Full-gradient descent on the global ranking loss.
///
/// The objective is the mean over users (with both labels in train) of each
/// user's mean pair loss over distinct positives x distinct negatives. One
/// step of size `eta` per epoch; the trace holds the objective before each
/// step.
pub fn train_bpr_batch(
    split: &SplitCorpus,
    mut params: ModelParams,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<BprOutcome> {
    cfg.validate()?;
    check_dims(&params, split)?;
    let blocks: Vec<Block> = (0..split.n_users)
        .filter_map(|u| full_block(u, &split.train[u]))
        .collect();
    if blocks.is_empty() {
        return Err(Error::EmptyCorpus("no train user has both labels".into()));
    }
    let inv_users = 1.0 / blocks.len() as f64;

    let mut recorder = TraceRecorder::new(cfg.trace_every);
    let deadline = Deadline::new(cfg.time_budget);
    let mut grad_users = Embeddings::zeros(params.n_users(), params.dim());
    let mut grad_items = Embeddings::zeros(params.n_items(), params.dim());
    let mut epochs_run = 0;

    for epoch in 0..cfg.epochs {
        if deadline.passed() {
            break;
        }
        grad_users.as_mut_slice().fill(0.0);
        grad_items.as_mut_slice().fill(0.0);
        let mut objective = 0.0;
        for block in &blocks {
            let (loss, g) = block_loss_and_gradient(&params, loss_cfg, block);
            objective += loss * inv_users;
            axpy(inv_users, &g.user_grad, grad_users.row_mut(g.user as usize));
            for (i, gi) in &g.items {
                axpy(inv_users, gi, grad_items.row_mut(*i as usize));
            }
        }
        axpy(-cfg.eta, grad_users.as_slice(), params.users.as_mut_slice());
        axpy(-cfg.eta, grad_items.as_slice(), params.items.as_mut_slice());
        recorder.push(epoch, None, epoch as u64, objective);
        epochs_run = epoch + 1;
    }

    Ok(BprOutcome {
        params,
        trace: recorder.finish(),
        rejected: 0,
        accepted: 0,
        epochs_run,
    })
}
