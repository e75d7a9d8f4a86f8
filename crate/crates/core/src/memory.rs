//! Long-memory analysis of user series and the memory-aware
//! filter-and-retrain pipeline.
//!
//! A series with spectral density `f(l) ~ l^{-2d}` near zero has memory
//! parameter `d`; `d >= 1/2` is read as non-stationary. `d` is estimated by
//! log-periodogram regression (the GPH estimator) on the first `m` Fourier
//! frequencies.

use std::f64::consts::PI;
use std::io::{BufWriter, Write};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::SplitCorpus;
use crate::error::{Error, Result};
use crate::model::{init_params, LossConfig, ModelParams};
use crate::trainers::{train_saros_b, SarosOutcome, TrainConfig, Trajectories};

/// Series shorter than this get a `TooShort` verdict.
pub const DEFAULT_MIN_SERIES_LEN: usize = 8;
pub const DEFAULT_KEEP_THRESHOLD: usize = 4;
pub const NON_STATIONARY_D: f64 = 0.5;

fn check_series(series: &[f64]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::Data(format!(
            "periodogram needs at least 2 points, got {}",
            series.len()
        )));
    }
    if let Some(pos) = series.iter().position(|x| !x.is_finite()) {
        return Err(Error::Data(format!("non-finite value at position {pos}")));
    }
    Ok(())
}

/// `I(l_k) = |sum_t x_t e^{i t l_k}|^2 / N` at every `l_k = 2 pi k / N`,
/// `k = 0..N`.
pub fn periodogram_full(series: &[f64]) -> Result<Vec<f64>> {
    check_series(series)?;
    let n = series.len();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    // The forward FFT uses e^{-i...} and t from 0; both differ from the
    // e^{+i t l}, t = 1..N convention by a unit-modulus factor.
    Ok(buf.iter().map(|c| c.norm_sqr() / n as f64).collect())
}

/// Periodogram at the Fourier frequencies `k = 1..=N/2`; element `j` holds
/// frequency `k = j + 1`.
pub fn periodogram(series: &[f64]) -> Result<Vec<f64>> {
    let mut full = periodogram_full(series)?;
    let half = series.len() / 2;
    full.truncate(half + 1);
    full.remove(0);
    Ok(full)
}

pub fn fourier_frequency(k: usize, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

/// `-2 log |1 - e^{i l}| = -log(2 - 2 cos l)`.
pub fn gph_regressor(lambda: f64) -> f64 {
    -(2.0 - 2.0 * lambda.cos()).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GphEstimate {
    pub d: f64,
    /// Frequencies that entered the regression (zero ordinates dropped).
    pub m_used: usize,
}

/// Regresses `log I(l_k)` on `Y_k` for `k = 1..=m`, given periodogram
/// ordinates starting at `k = 1` of a length-`n` series.
pub fn gph_from_periodogram(ordinates: &[f64], n: usize, m: usize) -> Result<GphEstimate> {
    if m > ordinates.len() || m > n / 2 {
        return Err(Error::Estimation(format!(
            "m = {m} exceeds the {} available frequencies",
            ordinates.len().min(n / 2)
        )));
    }
    let points: Vec<(f64, f64)> = ordinates[..m]
        .iter()
        .enumerate()
        .filter(|(_, &i)| i > 0.0)
        .map(|(j, &i)| (gph_regressor(fourier_frequency(j + 1, n)), i.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::Estimation(format!(
            "{} usable periodogram ordinates among the first {m}",
            points.len()
        )));
    }
    let y_bar = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(y, log_i)| {
        let c = y - y_bar;
        (num + c * log_i, den + c * c)
    });
    if den <= 0.0 {
        return Err(Error::Estimation("degenerate regressor".into()));
    }
    Ok(GphEstimate {
        d: num / den,
        m_used: points.len(),
    })
}

pub fn gph_estimate(series: &[f64], m: usize) -> Result<GphEstimate> {
    let ordinates = periodogram(series)?;
    gph_from_periodogram(&ordinates, series.len(), m)
}

/// How many frequencies to use for a series of length `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MRule {
    /// `floor(N^p)`.
    Power(f64),
    Fixed(usize),
}

impl Default for MRule {
    fn default() -> Self {
        MRule::Power(0.5)
    }
}

impl MRule {
    pub fn frequencies(&self, n: usize) -> usize {
        let m = match *self {
            MRule::Power(p) => (n as f64).powf(p).floor() as usize,
            MRule::Fixed(m) => m,
        };
        m.min(n / 2)
    }
}

impl std::str::FromStr for MRule {
    type Err = Error;

    /// `sqrt`, `pow:<p>` or a fixed integer.
    fn from_str(s: &str) -> Result<Self> {
        if s == "sqrt" {
            return Ok(MRule::Power(0.5));
        }
        if let Some(p) = s.strip_prefix("pow:") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::config(format!("invalid m-rule exponent {p:?}")))?;
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config("m-rule exponent must lie in (0, 1)"));
            }
            return Ok(MRule::Power(p));
        }
        s.parse::<usize>()
            .map(MRule::Fixed)
            .map_err(|_| Error::config(format!("invalid m-rule {s:?}")))
    }
}

impl std::fmt::Display for MRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MRule::Power(p) if *p == 0.5 => write!(f, "sqrt"),
            MRule::Power(p) => write!(f, "pow:{p}"),
            MRule::Fixed(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Stationary,
    NonStationary,
    TooShort,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stationary => "stationary",
            Verdict::NonStationary => "non_stationary",
            Verdict::TooShort => "too_short",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub d_hat: Option<f64>,
    pub m_used: usize,
}

pub fn classify(series: &[f64], m_rule: MRule, min_len: usize) -> Classification {
    let too_short = Classification {
        verdict: Verdict::TooShort,
        d_hat: None,
        m_used: 0,
    };
    if series.len() < min_len.max(2) {
        return too_short;
    }
    let m = m_rule.frequencies(series.len());
    match gph_estimate(series, m) {
        Ok(est) => Classification {
            verdict: if est.d >= NON_STATIONARY_D {
                Verdict::NonStationary
            } else {
                Verdict::Stationary
            },
            d_hat: Some(est.d),
            m_used: est.m_used,
        },
        Err(_) => too_short,
    }
}

/// What is measured for each user.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeriesSource {
    /// One series per latent component of `U_u`, sampled after each of the
    /// user's block updates in the last training epoch.
    #[default]
    EmbeddingTrajectory,
    /// The user's train labels as `+1` / `-1`.
    FeedbackSequence,
}

impl std::str::FromStr for SeriesSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" | "embedding-trajectory" => Ok(SeriesSource::EmbeddingTrajectory),
            "feedback" | "feedback-sequence" => Ok(SeriesSource::FeedbackSequence),
            other => Err(Error::config(format!("unknown memory source {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSample {
    pub user: u32,
    /// Latent component, or `None` for the feedback sequence.
    pub component: Option<usize>,
    pub values: Vec<f64>,
}

/// Extracts the series analysed for one user.
pub fn build_user_series(
    split: &SplitCorpus,
    trajectories: Option<&Trajectories>,
    source: SeriesSource,
    user: usize,
) -> Result<Vec<SeriesSample>> {
    if user >= split.n_users {
        return Err(Error::Lookup(format!(
            "user {user} not in corpus ({} users)",
            split.n_users
        )));
    }
    match source {
        SeriesSource::FeedbackSequence => Ok(vec![SeriesSample {
            user: user as u32,
            component: None,
            values: split.train[user].iter().map(|x| x.label.sign()).collect(),
        }]),
        SeriesSource::EmbeddingTrajectory => {
            let traj = trajectories.ok_or_else(|| {
                Error::Lookup(
                    "no embedding trajectories: training ran without record_trajectory".into(),
                )
            })?;
            let points = traj.per_user.get(user).ok_or_else(|| {
                Error::Lookup(format!("user {user} absent from trajectory log"))
            })?;
            let last_epoch = points.iter().map(|p| p.epoch).max();
            let window: Vec<&[f64]> = points
                .iter()
                .filter(|p| Some(p.epoch) == last_epoch)
                .map(|p| p.values.as_slice())
                .collect();
            Ok((0..traj.k)
                .map(|c| SeriesSample {
                    user: user as u32,
                    component: Some(c),
                    values: window.iter().map(|v| v[c]).collect(),
                })
                .collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryConfig {
    pub source: SeriesSource,
    pub keep_threshold: usize,
    pub m_rule: MRule,
    pub min_series_len: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            source: SeriesSource::default(),
            keep_threshold: DEFAULT_KEEP_THRESHOLD,
            m_rule: MRule::default(),
            min_series_len: DEFAULT_MIN_SERIES_LEN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRecord {
    pub user: u32,
    pub component: Option<usize>,
    pub len: usize,
    pub m_used: usize,
    pub d_hat: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserMemory {
    pub user: u32,
    pub n_series: usize,
    pub n_stationary: usize,
    pub keep: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryReport {
    pub keep_threshold: usize,
    pub series: Vec<SeriesRecord>,
    pub users: Vec<UserMemory>,
}

impl MemoryReport {
    pub fn keep_mask(&self, n_users: usize) -> Vec<bool> {
        let mut mask = vec![false; n_users];
        for u in &self.users {
            mask[u.user as usize] = u.keep;
        }
        mask
    }

    pub fn n_kept(&self) -> usize {
        self.users.iter().filter(|u| u.keep).count()
    }

    /// One row per series: `user, component, N, m, d_hat, verdict, keep`.
    pub fn write_tsv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "user\tcomponent\tN\tm\td_hat\tverdict\tkeep")?;
        let mut users = self.users.iter().peekable();
        for s in &self.series {
            let keep = loop {
                match users.peek() {
                    Some(u) if u.user < s.user => {
                        users.next();
                    }
                    Some(u) if u.user == s.user => break u.keep,
                    _ => break false,
                }
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.user,
                s.component
                    .map_or_else(|| "feedback".to_string(), |c| c.to_string()),
                s.len,
                s.m_used,
                s.d_hat.map_or_else(|| "NA".to_string(), |d| format!("{d:?}")),
                s.verdict.as_str(),
                u8::from(keep)
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Classifies every series of every user and applies the keep rule:
/// a user is kept when at least `keep_threshold` of their series are
/// stationary.
pub fn analyse_users(
    split: &SplitCorpus,
    trajectories: Option<&Trajectories>,
    cfg: &MemoryConfig,
) -> Result<MemoryReport> {
    let per_user: Vec<(Vec<SeriesRecord>, UserMemory)> = (0..split.n_users)
        .into_par_iter()
        .map(|u| {
            let series = build_user_series(split, trajectories, cfg.source, u)?;
            let records: Vec<SeriesRecord> = series
                .iter()
                .map(|s| {
                    let c = classify(&s.values, cfg.m_rule, cfg.min_series_len);
                    SeriesRecord {
                        user: s.user,
                        component: s.component,
                        len: s.values.len(),
                        m_used: c.m_used,
                        d_hat: c.d_hat,
                        verdict: c.verdict,
                    }
                })
                .collect();
            let n_stationary = records
                .iter()
                .filter(|r| r.verdict == Verdict::Stationary)
                .count();
            let summary = UserMemory {
                user: u as u32,
                n_series: records.len(),
                n_stationary,
                keep: n_stationary >= cfg.keep_threshold,
            };
            Ok((records, summary))
        })
        .collect::<Result<_>>()?;

    let mut report = MemoryReport {
        keep_threshold: cfg.keep_threshold,
        series: Vec::new(),
        users: Vec::with_capacity(per_user.len()),
    };
    for (records, summary) in per_user {
        report.series.extend(records);
        report.users.push(summary);
    }
    Ok(report)
}

/// Embedding size, seed and scale for a fresh initialisation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub k: usize,
    pub seed: u64,
    pub scale: Option<f64>,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            k: crate::model::DEFAULT_DIM,
            seed: 42,
            scale: None,
        }
    }
}

impl InitSpec {
    pub fn params(&self, n_users: usize, n_items: usize) -> Result<ModelParams> {
        init_params(n_users, n_items, self.k, self.seed, self.scale)
    }
}

#[derive(Clone, Debug)]
pub struct MosaicOutcome {
    pub filtered: SplitCorpus,
    pub report: MemoryReport,
    pub first_pass: SarosOutcome,
    pub second_pass: SarosOutcome,
}

impl MosaicOutcome {
    pub fn params(&self) -> &ModelParams {
        &self.second_pass.params
    }
}

/// Train, drop users whose series look non-stationary, retrain.
///
/// Pass 1 runs SAROS_b on the full split while recording embedding
/// trajectories. Users failing the keep rule lose both their train and test
/// rows. Pass 2 runs SAROS_b again from the same seeded initialisation on
/// what is left.
pub fn mosaic(
    split: &SplitCorpus,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
    init: &InitSpec,
    mem_cfg: &MemoryConfig,
) -> Result<MosaicOutcome> {
    let first_cfg = TrainConfig {
        record_trajectory: mem_cfg.source == SeriesSource::EmbeddingTrajectory,
        ..train_cfg.clone()
    };
    let first_pass = train_saros_b(
        split,
        init.params(split.n_users, split.n_items)?,
        loss_cfg,
        &first_cfg,
    )?;
    let report = analyse_users(split, first_pass.trajectories.as_ref(), mem_cfg)?;

    let keep = report.keep_mask(split.n_users);
    let filtered = split.retain_users(&keep);
    if filtered.trainable_users().next().is_none() {
        return Err(Error::FilteredEmpty {
            report: Box::new(report),
        });
    }

    let second_cfg = TrainConfig {
        record_trajectory: false,
        ..train_cfg.clone()
    };
    let second_pass = train_saros_b(
        &filtered,
        init.params(split.n_users, split.n_items)?,
        loss_cfg,
        &second_cfg,
    )?;
    Ok(MosaicOutcome {
        filtered,
        report,
        first_pass,
        second_pass,
    })
}
