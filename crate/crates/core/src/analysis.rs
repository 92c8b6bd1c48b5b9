//! Exact Gaussian rates, leakage, pre-log fits, the statistical-equivalence
//! check and transmit-power accounting.
//!
//! Everything is computed in closed form from the linear Gaussian model of
//! a block: with the channel gains known, the stacked observations of any
//! receiver set are `y = G s + n` with independent Gaussian sources `s`, so
//! mutual informations are differences of Hermitian log-determinants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{log_det_hermitian_pd, Cholesky, ComplexMatrix, LinalgError, C64};
use crate::precoding::StreamPowers;
use crate::scheme::{BlockSignal, GainTable, SchemeVariant};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid power: {0}")]
    InvalidPower(String),
    #[error("need at least 4 points spanning 40 dB, got {points} spanning {span_db:.1} dB")]
    InsufficientPoints { points: usize, span_db: f64 },
    #[error("invalid secrecy pair: {0}")]
    InvalidPair(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `log2(1 + p |g|^2 / (interference + noise))`, bits per channel use.
pub fn user_rate(gain: C64, p_stream: f64, interference_plus_noise: f64) -> Result<f64, AnalysisError> {
    if !(p_stream >= 0.0 && p_stream.is_finite()) {
        return Err(AnalysisError::InvalidPower(format!("stream power {p_stream}")));
    }
    if !(interference_plus_noise > 0.0 && interference_plus_noise.is_finite()) {
        return Err(AnalysisError::InvalidPower(format!("interference-plus-noise power {interference_plus_noise}")));
    }
    Ok((p_stream * gain.norm_sqr() / interference_plus_noise).ln_1p() / std::f64::consts::LN_2)
}

/// A confidentiality constraint: `target`'s message against the pooled
/// outputs of `observers`. Receivers are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SecrecyPair {
    pub target: usize,
    pub observers: Vec<usize>,
}

impl SecrecyPair {
    /// `(k; {1..k-1})` in 1-based terms.
    pub fn against_earlier(target: usize) -> Self {
        Self { target, observers: (0..target).collect() }
    }

    /// Every pair the scheme must protect: targets `2..K` in 1-based terms.
    pub fn all(users: usize) -> Vec<Self> {
        (1..users).map(Self::against_earlier).collect()
    }

    /// Bit `j` set when receiver `j` (0-based) observes.
    pub fn observer_mask(&self) -> u64 {
        self.observers.iter().fold(0, |m, &j| m | (1 << j))
    }

    /// `"{k}_{mask}"`, with `k` 1-based: `leakage_pair_3_3` is `W_3`
    /// against receivers 1 and 2.
    pub fn label(&self) -> String {
        format!("{}_{}", self.target + 1, self.observer_mask())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRecord {
    pub pair: SecrecyPair,
    /// Bits per block.
    pub bits: f64,
}

/// Rates and leakage at one transmit power, averaged over `trials` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub power: f64,
    /// Bits per channel use.
    pub per_user_rate: Vec<f64>,
    pub sum_rate: f64,
    pub leakage: Vec<LeakageRecord>,
    pub trials: usize,
}

impl RatePoint {
    /// Element-wise mean of points that share power and pair layout.
    pub fn mean(points: &[RatePoint]) -> Option<RatePoint> {
        let first = points.first()?;
        let n = points.len() as f64;
        let mut per_user_rate = vec![0.0; first.per_user_rate.len()];
        let mut leakage: Vec<LeakageRecord> =
            first.leakage.iter().map(|r| LeakageRecord { pair: r.pair.clone(), bits: 0.0 }).collect();
        for p in points {
            for (acc, r) in per_user_rate.iter_mut().zip(&p.per_user_rate) {
                *acc += r;
            }
            for (acc, r) in leakage.iter_mut().zip(&p.leakage) {
                debug_assert_eq!(acc.pair, r.pair);
                acc.bits += r.bits;
            }
        }
        per_user_rate.iter_mut().for_each(|r| *r /= n);
        leakage.iter_mut().for_each(|r| r.bits /= n);
        Some(RatePoint {
            power: first.power,
            sum_rate: per_user_rate.iter().sum(),
            per_user_rate,
            leakage,
            trials: points.iter().map(|p| p.trials).sum(),
        })
    }

    pub fn leakage_for(&self, pair: &SecrecyPair) -> Option<f64> {
        self.leakage.iter().find(|r| &r.pair == pair).map(|r| r.bits)
    }
}

/// Achievable rates of one block, normalized per channel use.
///
/// The first receiver decodes only in the P slot; every other receiver
/// decodes in both. Interference in each denominator comes from the actual
/// gain table, so residual leakage of imperfect nulling is counted.
pub fn block_rates(gains: &GainTable, powers: &StreamPowers, variant: SchemeVariant) -> Result<RatePoint, AnalysisError> {
    let users = gains.users();
    let powers = variant.powers(powers);
    let d_powers = powers.d_slot_by_direction();
    let slot_rate = |table: &ComplexMatrix, stream_powers: &[f64], j: usize| {
        let interference: f64 = (0..users)
            .filter(|&k| k != j)
            .map(|k| stream_powers[k] * table[(j, k)].norm_sqr())
            .sum();
        user_rate(table[(j, j)], stream_powers[j], interference + 1.0)
    };
    let mut per_user_rate = Vec::with_capacity(users);
    for j in 0..users {
        let mut r = slot_rate(&gains.p, &powers.p_data, j)?;
        if j > 0 {
            r += slot_rate(&gains.d, &d_powers, j)?;
        }
        per_user_rate.push(r / 2.0);
    }
    Ok(RatePoint {
        power: powers.p_slot_total(),
        sum_rate: per_user_rate.iter().sum(),
        per_user_rate,
        leakage: Vec::new(),
        trials: 1,
    })
}

/// Source ordering of a block: `a_1..a_K`, `b_2..b_K`, `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceLayout {
    pub users: usize,
}

impl SourceLayout {
    pub fn len(&self) -> usize {
        2 * self.users
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a(&self, user: usize) -> usize {
        user
    }

    /// `user >= 1` (0-based).
    pub fn b(&self, user: usize) -> usize {
        self.users + user - 1
    }

    pub fn u(&self) -> usize {
        2 * self.users - 1
    }

    /// Observation row of receiver `j` in the P (`false`) or D (`true`) slot.
    pub fn row(&self, receiver: usize, d_slot: bool) -> usize {
        2 * receiver + usize::from(d_slot)
    }
}

/// `y = G s + n` for all receivers and both slots of one block, with
/// `Cov(s)` diagonal and `Cov(n) = I`.
///
/// Rows are tagged with the receiver that observes them and sources with
/// the user whose message they carry (`None` for artificial noise).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBlockModel {
    pub observation_map: ComplexMatrix,
    pub source_variances: Vec<f64>,
    pub row_receiver: Vec<usize>,
    pub source_user: Vec<Option<usize>>,
}

impl GaussianBlockModel {
    pub fn new(
        observation_map: ComplexMatrix,
        source_variances: Vec<f64>,
        row_receiver: Vec<usize>,
        source_user: Vec<Option<usize>>,
    ) -> Result<Self, AnalysisError> {
        if observation_map.cols() != source_variances.len()
            || source_user.len() != source_variances.len()
            || row_receiver.len() != observation_map.rows()
        {
            return Err(LinalgError::Dimension("model tags do not match the observation map".into()).into());
        }
        if source_variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(AnalysisError::InvalidPower("source variances must be finite and >= 0".into()));
        }
        Ok(Self { observation_map, source_variances, row_receiver, source_user })
    }

    /// Block model built from a gain table: row `2j` is receiver `j` at
    /// `t_P`, row `2j + 1` at `t_D`.
    pub fn from_gains(gains: &GainTable, powers: &StreamPowers, variant: SchemeVariant) -> Self {
        let users = gains.users();
        let layout = SourceLayout { users };
        let powers = variant.powers(powers);
        let mut g = ComplexMatrix::zeros(2 * users, layout.len());
        for j in 0..users {
            for k in 0..users {
                g[(layout.row(j, false), layout.a(k))] = gains.p[(j, k)];
            }
            g[(layout.row(j, true), layout.u())] = gains.d[(j, 0)];
            for k in 1..users {
                g[(layout.row(j, true), layout.b(k))] = gains.d[(j, k)];
            }
        }
        let mut variances = vec![0.0; layout.len()];
        let mut source_user = vec![None; layout.len()];
        for k in 0..users {
            variances[layout.a(k)] = powers.p_data[k];
            source_user[layout.a(k)] = Some(k);
        }
        for k in 1..users {
            variances[layout.b(k)] = powers.d_data[k - 1];
            source_user[layout.b(k)] = Some(k);
        }
        variances[layout.u()] = powers.d_noise;
        Self {
            observation_map: g,
            source_variances: variances,
            row_receiver: (0..2 * users).map(|r| r / 2).collect(),
            source_user,
        }
    }

    pub fn rows_of(&self, receivers: &[usize]) -> Vec<usize> {
        (0..self.row_receiver.len()).filter(|r| receivers.contains(&self.row_receiver[*r])).collect()
    }

    pub fn sources_of(&self, user: usize) -> Vec<usize> {
        (0..self.source_user.len()).filter(|&s| self.source_user[s] == Some(user)).collect()
    }

    /// `G_R diag(c) G_R^H + I` over `rows`, with the listed sources'
    /// variances set to zero. Built from the upper triangle, so exactly
    /// Hermitian.
    pub fn covariance(&self, rows: &[usize], zeroed_sources: &[usize]) -> ComplexMatrix {
        let n = rows.len();
        let var: Vec<f64> = self
            .source_variances
            .iter()
            .enumerate()
            .map(|(s, &v)| if zeroed_sources.contains(&s) { 0.0 } else { v })
            .collect();
        let g = &self.observation_map;
        let mut cov = ComplexMatrix::zeros(n, n);
        for (a, &ra) in rows.iter().enumerate() {
            for (b, &rb) in rows.iter().enumerate().skip(a) {
                let mut s: C64 = (0..var.len()).map(|k| g[(ra, k)] * g[(rb, k)].conj() * var[k]).sum();
                if a == b {
                    s = C64::new(s.re + 1.0, 0.0);
                }
                cov[(a, b)] = s;
                cov[(b, a)] = s.conj();
            }
        }
        cov
    }
}

/// `I(W_target; {y_j : j in observers})` in bits per block.
pub fn leakage_mi(model: &GaussianBlockModel, target: usize, observers: &[usize]) -> Result<f64, AnalysisError> {
    if observers.is_empty() || observers.contains(&target) {
        return Err(AnalysisError::InvalidPair(format!(
            "observers {observers:?} must be non-empty and exclude target {target}"
        )));
    }
    let rows = model.rows_of(observers);
    if rows.is_empty() {
        return Err(AnalysisError::InvalidPair(format!("no observation rows for receivers {observers:?}")));
    }
    let target_sources = model.sources_of(target);
    let full = log_det_hermitian_pd(&model.covariance(&rows, &[]), 2.0)?;
    let conditional = log_det_hermitian_pd(&model.covariance(&rows, &target_sources), 2.0)?;
    Ok(full - conditional)
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Some(LineFit { slope, intercept, r_squared })
}

/// Pre-log estimate: slope of mean sum rate against `log2 P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdofFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

pub const MIN_FIT_POINTS: usize = 4;
pub const MIN_FIT_SPAN_DB: f64 = 40.0;

fn check_grid(points: &[RatePoint]) -> Result<(), AnalysisError> {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.power), hi.max(p.power)));
    let span_db = if points.is_empty() { 0.0 } else { 10.0 * (hi / lo).log10() };
    // 1e-9 dB slack absorbs the dB -> linear -> dB round trip
    if points.len() < MIN_FIT_POINTS || span_db < MIN_FIT_SPAN_DB - 1e-9 {
        return Err(AnalysisError::InsufficientPoints { points: points.len(), span_db });
    }
    Ok(())
}

pub fn fit_sdof(points: &[RatePoint]) -> Result<SdofFit, AnalysisError> {
    check_grid(points)?;
    let xs: Vec<f64> = points.iter().map(|p| p.power.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.sum_rate).collect();
    let fit = fit_line(&xs, &ys).ok_or(AnalysisError::InsufficientPoints { points: points.len(), span_db: 0.0 })?;
    Ok(SdofFit { slope: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared, points_used: points.len() })
}

/// Slope of a pair's mean leakage against `log2 P`.
pub fn leakage_slope(points: &[RatePoint], pair: &SecrecyPair) -> Result<LineFit, AnalysisError> {
    check_grid(points)?;
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for p in points {
        let bits = p
            .leakage_for(pair)
            .ok_or_else(|| AnalysisError::InvalidPair(format!("no leakage recorded for {}", pair.label())))?;
        xs.push(p.power.log2());
        ys.push(bits);
    }
    fit_line(&xs, &ys).ok_or(AnalysisError::InsufficientPoints { points: points.len(), span_db: 0.0 })
}

/// What the first receiver's D-slot output is conditioned on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SepConditioning {
    /// Source indices (see [`SourceLayout`]) treated as known.
    pub known_sources: Vec<usize>,
    /// Condition on the first receiver's own output at `t_P`.
    pub past_output: bool,
    /// Condition on the D-slot outputs of receivers `2..K`.
    pub other_receivers: bool,
}

/// `Var(y_1(t_D) | conditioning)` when the first receiver's D-slot row is
/// `first_row` and every other gain comes from `gains`.
pub fn first_receiver_conditional_variance(
    gains: &GainTable,
    powers: &StreamPowers,
    variant: SchemeVariant,
    d_beams: &[Vec<C64>],
    first_row: &[C64],
    cond: &SepConditioning,
) -> Result<f64, AnalysisError> {
    let users = gains.users();
    let mut gains = gains.clone();
    for (k, v) in d_beams.iter().enumerate() {
        gains.d[(0, k)] = crate::linalg::dot(first_row, v);
    }
    let model = GaussianBlockModel::from_gains(&gains, powers, variant);
    let layout = SourceLayout { users };
    let target = layout.row(0, true);
    let mut given = Vec::new();
    if cond.past_output {
        given.push(layout.row(0, false));
    }
    if cond.other_receivers {
        given.extend((1..users).map(|j| layout.row(j, true)));
    }
    let mut rows = vec![target];
    rows.extend(&given);
    let cov = model.covariance(&rows, &cond.known_sources);
    let var_y = cov[(0, 0)].re;
    if given.is_empty() {
        return Ok(var_y);
    }
    let n = given.len();
    let mut sigma_zz = ComplexMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            sigma_zz[(a, b)] = cov[(a + 1, b + 1)];
        }
    }
    let sigma_zy: Vec<C64> = (0..n).map(|a| cov[(a + 1, 0)]).collect();
    let x = Cholesky::factor(&sigma_zz)?.solve(&sigma_zy);
    let explained: f64 = sigma_zy.iter().zip(&x).map(|(s, xi)| (s.conj() * xi).re).sum();
    Ok(var_y - explained)
}

/// Fixed part of a statistical-equivalence experiment: everything except
/// the first receiver's D-slot row, which the transmitter never sees.
#[derive(Debug, Clone)]
pub struct SepSetup {
    pub gains: GainTable,
    pub d_beams: Vec<Vec<C64>>,
    pub powers: StreamPowers,
    pub variant: SchemeVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SepReport {
    pub draws: usize,
    pub mean_actual: f64,
    pub mean_virtual: f64,
    /// Mean of the per-draw differences `actual - virtual`.
    pub deviation: f64,
    pub standard_error: f64,
    pub max_abs_per_draw: f64,
    /// `|deviation| <= 3 standard errors`.
    pub equivalent: bool,
}

/// Compares the conditional output variance of the actual first receiver
/// with that of a virtual receiver whose row is an independent copy.
///
/// Equality is a statement about distributions: only the averages over the
/// `(h_1, h~_1)` draws are compared, never individual draws.
pub fn sep_covariance_check(
    setup: &SepSetup,
    draws: &[(Vec<C64>, Vec<C64>)],
    cond: &SepConditioning,
) -> Result<SepReport, AnalysisError> {
    let var = |row: &[C64]| {
        first_receiver_conditional_variance(&setup.gains, &setup.powers, setup.variant, &setup.d_beams, row, cond)
    };
    let mut actual = Vec::with_capacity(draws.len());
    let mut virt = Vec::with_capacity(draws.len());
    for (h, h_tilde) in draws {
        actual.push(var(h)?);
        virt.push(var(h_tilde)?);
    }
    let n = draws.len().max(1) as f64;
    let diffs: Vec<f64> = actual.iter().zip(&virt).map(|(a, b)| a - b).collect();
    let deviation = diffs.iter().sum::<f64>() / n;
    let sd = if diffs.len() > 1 {
        (diffs.iter().map(|d| (d - deviation).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let standard_error = sd / n.sqrt();
    Ok(SepReport {
        draws: draws.len(),
        mean_actual: actual.iter().sum::<f64>() / n,
        mean_virtual: virt.iter().sum::<f64>() / n,
        deviation,
        standard_error,
        max_abs_per_draw: diffs.iter().fold(0.0, |m, d| m.max(d.abs())),
        equivalent: deviation.abs() <= 3.0 * standard_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAudit {
    pub slots: usize,
    pub mean_power: f64,
    pub standard_error: f64,
    pub budget: f64,
    /// Mean above the budget by more than 3 standard errors.
    pub exceeds_budget: bool,
}

impl PowerAudit {
    pub fn within_three_sigma(&self) -> bool {
        (self.mean_power - self.budget).abs() <= 3.0 * self.standard_error
    }
}

/// Empirical per-slot `||X||^2` over both slots of every block.
pub fn power_audit(blocks: &[BlockSignal], budget: f64) -> PowerAudit {
    let energy = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let samples: Vec<f64> = blocks.iter().flat_map(|b| [energy(&b.x_p), energy(&b.x_d)]).collect();
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = if samples.len() > 1 {
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let standard_error = sd / n.sqrt();
    PowerAudit {
        slots: samples.len(),
        mean_power: mean,
        standard_error,
        budget,
        exceeds_budget: mean > budget + 3.0 * standard_error,
    }
}
