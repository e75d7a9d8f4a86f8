//! Latent factor model: user/item embeddings, dot-product scores and the
//! regularized pairwise logistic loss with its analytic gradient.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Block, Label};
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 16;

/// Row-major dense matrix, one embedding per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Embeddings {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Data(format!(
                "expected {} values for a {rows}x{dim} matrix, got {}",
                rows * dim,
                data.len()
            )));
        }
        Ok(Embeddings { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// User and item embeddings in a shared `k`-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub users: Embeddings,
    pub items: Embeddings,
    /// Seed the parameters were initialised from; carried into checkpoints.
    pub seed: u64,
}

impl ModelParams {
    pub fn zeros(n_users: usize, n_items: usize, k: usize) -> Self {
        ModelParams {
            users: Embeddings::zeros(n_users, k),
            items: Embeddings::zeros(n_items, k),
            seed: 0,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.rows()
    }

    pub fn n_items(&self) -> usize {
        self.items.rows()
    }

    pub fn dim(&self) -> usize {
        self.users.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.users.as_slice().iter().all(|v| v.is_finite())
            && self.items.as_slice().iter().all(|v| v.is_finite())
    }

    /// Fails unless the parameter shapes match a corpus with the given sizes.
    pub fn check_shape(&self, n_users: usize, n_items: usize) -> Result<()> {
        if self.n_users() != n_users || self.n_items() != n_items {
            return Err(Error::DimensionMismatch {
                checkpoint: format!(
                    "{} users x {} items (k={})",
                    self.n_users(),
                    self.n_items(),
                    self.dim()
                ),
                corpus: format!("{n_users} users x {n_items} items"),
            });
        }
        Ok(())
    }

    fn check_user(&self, u: usize) -> Result<()> {
        if u >= self.n_users() {
            return Err(Error::OutOfBounds {
                kind: "user",
                index: u,
                size: self.n_users(),
            });
        }
        Ok(())
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i >= self.n_items() {
            return Err(Error::OutOfBounds {
                kind: "item",
                index: i,
                size: self.n_items(),
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, u: usize, i: usize) -> f64 {
        dot(self.users.row(u), self.items.row(i))
    }

    /// Writes the versioned text checkpoint. Floats use the shortest decimal
    /// form that parses back to the same bits.
    pub fn write_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "# saros-checkpoint v1")?;
        writeln!(w, "n_users {}", self.n_users())?;
        writeln!(w, "n_items {}", self.n_items())?;
        writeln!(w, "k {}", self.dim())?;
        writeln!(w, "seed {}", self.seed)?;
        for (tag, m) in [("U", &self.users), ("V", &self.items)] {
            writeln!(w, "{tag}")?;
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
                writeln!(w, "{}", row.join("\t"))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let mut next = |what: &str| -> Result<(u64, String)> {
            match lines.next() {
                Some((n, line)) => Ok((n as u64 + 1, line?)),
                None => Err(Error::Parse {
                    line: 0,
                    message: format!("unexpected end of checkpoint, expected {what}"),
                }),
            }
        };

        let (line, magic) = next("header")?;
        if magic.trim() != "# saros-checkpoint v1" {
            return Err(Error::Parse {
                line,
                message: format!("unsupported checkpoint header {magic:?}"),
            });
        }
        let mut header = |key: &str| -> Result<u64> {
            let (line, text) = next(key)?;
            text.strip_prefix(key)
                .and_then(|rest| rest.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("expected `{key} <int>`, got {text:?}"),
                })
        };
        let n_users = header("n_users")? as usize;
        let n_items = header("n_items")? as usize;
        let k = header("k")? as usize;
        let seed = header("seed")?;

        let mut read_matrix = |tag: &str, rows: usize| -> Result<Embeddings> {
            let (line, text) = next(tag)?;
            if text.trim() != tag {
                return Err(Error::Parse {
                    line,
                    message: format!("expected matrix tag {tag}"),
                });
            }
            let mut data = Vec::with_capacity(rows * k);
            for _ in 0..rows {
                let (line, text) = next("matrix row")?;
                let before = data.len();
                for field in text.split('\t').filter(|f| !f.is_empty()) {
                    let v: f64 = field.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("invalid number {field:?}"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            line,
                            message: "non-finite parameter".into(),
                        });
                    }
                    data.push(v);
                }
                if data.len() - before != k {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected {k} values, got {}", data.len() - before),
                    });
                }
            }
            Embeddings::from_vec(rows, k, data)
        };
        let users = read_matrix("U", n_users)?;
        let items = read_matrix("V", n_items)?;
        Ok(ModelParams { users, items, seed })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the squared-norm penalty attached to every pair.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 1e-4 }
    }
}

impl LossConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::config(format!(
                "regularization weight must be a finite non-negative number, got {lambda}"
            )));
        }
        Ok(LossConfig { lambda })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^{-x})`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn score(params: &ModelParams, user: usize, item: usize) -> Result<f64> {
    params.check_user(user)?;
    params.check_item(item)?;
    Ok(params.score_unchecked(user, item))
}

/// `U_u . (V_i - V_j)`.
#[inline]
pub(crate) fn margin(params: &ModelParams, u: usize, i: usize, j: usize) -> f64 {
    let pu = params.users.row(u);
    let vi = params.items.row(i);
    let vj = params.items.row(j);
    pu.iter()
        .zip(vi.iter().zip(vj))
        .map(|(p, (a, b))| p * (a - b))
        .sum()
}

/// Logistic loss of ranking `item` against `other` for `user`, plus the
/// squared norms of the three embeddings weighted by `lambda`.
pub fn pair_loss(
    params: &ModelParams,
    cfg: &LossConfig,
    user: usize,
    item: usize,
    other: usize,
    y: Label,
) -> Result<f64> {
    params.check_user(user)?;
    params.check_item(item)?;
    params.check_item(other)?;
    let m = margin(params, user, item, other);
    let reg = sq_norm(params.users.row(user))
        + sq_norm(params.items.row(item))
        + sq_norm(params.items.row(other));
    Ok(softplus(-y.sign() * m) + cfg.lambda * reg)
}

fn check_block(params: &ModelParams, block: &Block) -> Result<()> {
    if block.negatives.is_empty() || block.positives.is_empty() {
        return Err(Error::Data(format!(
            "block {} of user {} has an empty side",
            block.index, block.user
        )));
    }
    params.check_user(block.user as usize)?;
    for &i in block.positives.iter().chain(&block.negatives) {
        params.check_item(i as usize)?;
    }
    Ok(())
}

/// Mean pair loss over `positives x negatives` of the block.
pub fn block_loss(params: &ModelParams, cfg: &LossConfig, block: &Block) -> Result<f64> {
    check_block(params, block)?;
    Ok(block_loss_unchecked(params, cfg, block))
}

pub(crate) fn block_loss_unchecked(params: &ModelParams, cfg: &LossConfig, block: &Block) -> f64 {
    let u = block.user as usize;
    let n_pairs = block.n_pairs() as f64;
    let mut logistic = 0.0;
    for &i in &block.positives {
        for &j in &block.negatives {
            logistic += softplus(-margin(params, u, i as usize, j as usize));
        }
    }
    // Each pair carries ||U||^2 + ||V_i||^2 + ||V_j||^2; averaging over pairs
    // weights a positive row by 1/|P| and a negative row by 1/|N|.
    let pos_norms: f64 = block
        .positives
        .iter()
        .map(|&i| sq_norm(params.items.row(i as usize)))
        .sum();
    let neg_norms: f64 = block
        .negatives
        .iter()
        .map(|&j| sq_norm(params.items.row(j as usize)))
        .sum();
    let reg = sq_norm(params.users.row(u))
        + pos_norms / block.positives.len() as f64
        + neg_norms / block.negatives.len() as f64;
    logistic / n_pairs + cfg.lambda * reg
}

/// Gradient restricted to one user row and a handful of item rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGradient {
    pub user: u32,
    pub user_grad: Vec<f64>,
    /// Distinct item rows with their gradients.
    pub items: Vec<(u32, Vec<f64>)>,
}

impl SparseGradient {
    fn new(user: u32, k: usize) -> Self {
        SparseGradient {
            user,
            user_grad: vec![0.0; k],
            items: Vec::new(),
        }
    }

    fn item_mut(&mut self, item: u32, k: usize) -> &mut [f64] {
        let pos = match self.items.iter().position(|(i, _)| *i == item) {
            Some(p) => p,
            None => {
                self.items.push((item, vec![0.0; k]));
                self.items.len() - 1
            }
        };
        &mut self.items[pos].1
    }

    /// `params -= step * gradient` on the touched rows only.
    pub fn apply(&self, params: &mut ModelParams, step: f64) {
        axpy(-step, &self.user_grad, params.users.row_mut(self.user as usize));
        for (i, g) in &self.items {
            axpy(-step, g, params.items.row_mut(*i as usize));
        }
    }

    pub fn sq_norm(&self) -> f64 {
        sq_norm(&self.user_grad) + self.items.iter().map(|(_, g)| sq_norm(g)).sum::<f64>()
    }
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Exact gradient of [`block_loss`] with respect to `U_u` and every item row
/// in the block.
pub fn block_gradient(
    params: &ModelParams,
    cfg: &LossConfig,
    block: &Block,
) -> Result<SparseGradient> {
    check_block(params, block)?;
    Ok(block_gradient_unchecked(params, cfg, block))
}

pub(crate) fn block_gradient_unchecked(
    params: &ModelParams,
    cfg: &LossConfig,
    block: &Block,
) -> SparseGradient {
    block_loss_and_gradient(params, cfg, block).1
}

/// Block loss and its gradient from a single pass over the pair margins.
pub(crate) fn block_loss_and_gradient(
    params: &ModelParams,
    cfg: &LossConfig,
    block: &Block,
) -> (f64, SparseGradient) {
    let k = params.dim();
    let u = block.user as usize;
    let n_pos = block.positives.len();
    let n_neg = block.negatives.len();
    let inv_pairs = 1.0 / (n_pos * n_neg) as f64;
    let pu = params.users.row(u);

    let mut grad = SparseGradient::new(block.user, k);
    let mut logistic = 0.0;
    // Row weights: sum over partners of sigma(-margin) / (|P||N|).
    let mut pos_weight = vec![0.0; n_pos];
    let mut neg_weight = vec![0.0; n_neg];
    for (pi, &i) in block.positives.iter().enumerate() {
        for (ni, &j) in block.negatives.iter().enumerate() {
            let m = margin(params, u, i as usize, j as usize);
            logistic += softplus(-m);
            let w = sigmoid(-m) * inv_pairs;
            pos_weight[pi] += w;
            neg_weight[ni] += w;
        }
    }

    // dU = -sum w (V_i - V_j) + 2 lambda U
    for (pi, &i) in block.positives.iter().enumerate() {
        axpy(-pos_weight[pi], params.items.row(i as usize), &mut grad.user_grad);
    }
    for (ni, &j) in block.negatives.iter().enumerate() {
        axpy(neg_weight[ni], params.items.row(j as usize), &mut grad.user_grad);
    }
    axpy(2.0 * cfg.lambda, pu, &mut grad.user_grad);

    let pos_reg = 2.0 * cfg.lambda / n_pos as f64;
    let neg_reg = 2.0 * cfg.lambda / n_neg as f64;
    let mut pos_norms = 0.0;
    let mut neg_norms = 0.0;
    for (pi, &i) in block.positives.iter().enumerate() {
        let vi = params.items.row(i as usize);
        pos_norms += sq_norm(vi);
        let g = grad.item_mut(i, k);
        axpy(-pos_weight[pi], pu, g);
        axpy(pos_reg, vi, g);
    }
    for (ni, &j) in block.negatives.iter().enumerate() {
        let vj = params.items.row(j as usize);
        neg_norms += sq_norm(vj);
        let g = grad.item_mut(j, k);
        axpy(neg_weight[ni], pu, g);
        axpy(neg_reg, vj, g);
    }
    let reg = sq_norm(pu) + pos_norms / n_pos as f64 + neg_norms / n_neg as f64;
    (logistic * inv_pairs + cfg.lambda * reg, grad)
}

/// One SGD step on a single (preferred, non-preferred) pair, returning the
/// pair loss before the step. Allocation-free.
pub(crate) fn pair_step(
    params: &mut ModelParams,
    cfg: &LossConfig,
    u: usize,
    pos: usize,
    neg: usize,
    eta: f64,
) -> f64 {
    let k = params.dim();
    let m = margin(params, u, pos, neg);
    let loss = softplus(-m)
        + cfg.lambda
            * (sq_norm(params.users.row(u))
                + sq_norm(params.items.row(pos))
                + sq_norm(params.items.row(neg)));
    let w = sigmoid(-m);
    let two_l = 2.0 * cfg.lambda;
    if pos == neg {
        // Logistic terms cancel; only the penalty (counted twice) remains.
        let pu = params.users.row_mut(u);
        for x in pu.iter_mut() {
            *x -= eta * two_l * *x;
        }
        let v = params.items.row_mut(pos);
        for x in v.iter_mut() {
            *x -= eta * 2.0 * two_l * *x;
        }
        return loss;
    }
    for c in 0..k {
        let pu = params.users.row(u)[c];
        let vi = params.items.row(pos)[c];
        let vj = params.items.row(neg)[c];
        let gu = -w * (vi - vj) + two_l * pu;
        let gi = -w * pu + two_l * vi;
        let gj = w * pu + two_l * vj;
        params.users.row_mut(u)[c] = pu - eta * gu;
        params.items.row_mut(pos)[c] = vi - eta * gi;
        params.items.row_mut(neg)[c] = vj - eta * gj;
    }
    loss
}

/// Default initialisation half-width, `1 / sqrt(k)`.
pub fn default_init_scale(k: usize) -> f64 {
    1.0 / (k as f64).sqrt()
}

/// Entries i.i.d. uniform on `[-scale, scale]`, users first, then items.
pub fn init_params(
    n_users: usize,
    n_items: usize,
    k: usize,
    seed: u64,
    scale: Option<f64>,
) -> Result<ModelParams> {
    if k == 0 {
        return Err(Error::config("latent dimension must be at least 1"));
    }
    let scale = scale.unwrap_or_else(|| default_init_scale(k));
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::config(format!(
            "init scale must be finite and non-negative, got {scale}"
        )));
    }
    let mut params = ModelParams::zeros(n_users, n_items, k);
    params.seed = seed;
    if scale == 0.0 {
        return Ok(params);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in params
        .users
        .as_mut_slice()
        .iter_mut()
        .chain(params.items.as_mut_slice().iter_mut())
    {
        *v = rng.random_range(-scale..=scale);
    }
    Ok(params)
}
