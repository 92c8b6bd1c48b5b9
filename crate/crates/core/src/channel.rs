//! Fading channels, receiver noise and the alternating CSIT pattern.
//!
//! A [`ChannelRealization`] stores `H(t)` with row `k` equal to `h_k^H(t)`,
//! so the noiseless output of receiver `k` is `H.row(k) . x`. Receivers are
//! 0-based in code; receiver 0 is the one whose CSI is delayed in
//! [`CsitState::DFirst`] slots.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{ComplexMatrix, LinalgError, C64};
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("user count must be at least 2, got {0}")]
    InvalidUserCount(usize),
    #[error("receiver {0} is not visible in this transmitter view")]
    RowNotVisible(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One circularly-symmetric CN(0, 1) draw.
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub slot: u64,
    pub h: ComplexMatrix,
}

impl ChannelRealization {
    pub fn new(slot: u64, h: ComplexMatrix) -> Result<Self, ChannelError> {
        if h.rows() < 2 || !h.is_square() {
            return Err(ChannelError::InvalidUserCount(h.rows()));
        }
        Ok(Self { slot, h })
    }

    pub fn users(&self) -> usize {
        self.h.rows()
    }

    /// `h_k^H(t)`.
    pub fn row(&self, k: usize) -> &[C64] {
        self.h.row(k)
    }

    /// Same realization with receiver `k`'s row replaced.
    pub fn with_row(&self, k: usize, row: &[C64]) -> Self {
        let mut h = self.h.clone();
        for (j, z) in row.iter().enumerate() {
            h[(k, j)] = *z;
        }
        Self { slot: self.slot, h }
    }
}

/// `K x K` matrix of i.i.d. CN(0, 1) gains, a pure function of
/// `(users, seed, slot)`.
pub fn sample_channel(users: usize, seed: u64, slot: u64) -> Result<ChannelRealization, ChannelError> {
    if users < 2 {
        return Err(ChannelError::InvalidUserCount(users));
    }
    let mut rng = stream_rng(seed, slot);
    let data = (0..users * users).map(|_| sample_cn(&mut rng)).collect();
    ChannelRealization::new(slot, ComplexMatrix::new(users, users, data)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub slot: u64,
    pub n: Vec<C64>,
}

impl NoiseRealization {
    pub fn zero(users: usize, slot: u64) -> Self {
        Self { slot, n: vec![C64::new(0.0, 0.0); users] }
    }
}

/// Unit-power receiver noise for every receiver in `slot`.
pub fn sample_noise(users: usize, seed: u64, slot: u64) -> NoiseRealization {
    let mut rng = stream_rng(seed, slot);
    NoiseRealization { slot, n: (0..users).map(|_| sample_cn(&mut rng)).collect() }
}

/// CSIT state of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsitState {
    /// Perfect CSIT for every receiver.
    PAll,
    /// Delayed CSIT for the first receiver, perfect for the rest.
    DFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleLayout {
    /// `P, D, P, D, ...`; block `i` owns slots `2i` and `2i + 1`.
    #[default]
    Interleaved,
    /// All P slots first, then all D slots; block `i` owns `i` and `B + i`.
    Contiguous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsitSchedule {
    block_count: usize,
    layout: ScheduleLayout,
    pattern: Vec<CsitState>,
}

pub fn make_schedule(block_count: usize) -> CsitSchedule {
    make_schedule_with_layout(block_count, ScheduleLayout::Interleaved)
}

pub fn make_schedule_with_layout(block_count: usize, layout: ScheduleLayout) -> CsitSchedule {
    let pattern = match layout {
        ScheduleLayout::Interleaved => {
            (0..block_count).flat_map(|_| [CsitState::PAll, CsitState::DFirst]).collect()
        }
        ScheduleLayout::Contiguous => std::iter::repeat_n(CsitState::PAll, block_count)
            .chain(std::iter::repeat_n(CsitState::DFirst, block_count))
            .collect(),
    };
    CsitSchedule { block_count, layout, pattern }
}

impl CsitSchedule {
    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn layout(&self) -> ScheduleLayout {
        self.layout
    }

    pub fn pattern(&self) -> &[CsitState] {
        &self.pattern
    }

    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }

    /// `(t_P, t_D)` slot indices of block `i`.
    pub fn block_slots(&self, i: usize) -> (u64, u64) {
        assert!(i < self.block_count, "block {i} out of range");
        match self.layout {
            ScheduleLayout::Interleaved => (2 * i as u64, 2 * i as u64 + 1),
            ScheduleLayout::Contiguous => (i as u64, (self.block_count + i) as u64),
        }
    }
}

/// What the transmitter knows when it forms the signal of one slot.
///
/// In a [`CsitState::DFirst`] slot the first receiver's current row is not
/// stored at all, so nothing built from a view can depend on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TxView {
    pub slot: u64,
    pub state: CsitState,
    users: usize,
    current: Vec<Option<Vec<C64>>>,
    history: Vec<ChannelRealization>,
}

pub fn tx_view(realization: &ChannelRealization, state: CsitState, history: &[ChannelRealization]) -> TxView {
    let users = realization.users();
    let current = (0..users)
        .map(|k| match (state, k) {
            (CsitState::DFirst, 0) => None,
            _ => Some(realization.row(k).to_vec()),
        })
        .collect();
    let history = history.iter().filter(|r| r.slot < realization.slot).cloned().collect();
    TxView { slot: realization.slot, state, users, current, history }
}

impl TxView {
    pub fn users(&self) -> usize {
        self.users
    }

    /// Current-slot row of receiver `k`, if the transmitter knows it.
    pub fn row(&self, k: usize) -> Option<&[C64]> {
        self.current.get(k).and_then(|r| r.as_deref())
    }

    /// Receivers whose current row is visible.
    pub fn known_receivers(&self) -> Vec<usize> {
        (0..self.users).filter(|&k| self.current[k].is_some()).collect()
    }

    /// Fully known earlier slots (delayed CSI).
    pub fn history(&self) -> &[ChannelRealization] {
        &self.history
    }

    /// Matrix of the listed current rows, in order. Fails if any is masked.
    pub fn rows_matrix(&self, receivers: &[usize]) -> Result<ComplexMatrix, ChannelError> {
        let mut data = Vec::with_capacity(receivers.len() * self.users);
        for &k in receivers {
            data.extend_from_slice(self.row(k).ok_or(ChannelError::RowNotVisible(k))?);
        }
        Ok(ComplexMatrix::new(receivers.len(), self.users, data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::numerical_rank;

    #[test]
    fn sampling_is_deterministic_per_slot() {
        let a = sample_channel(3, 42, 0).unwrap();
        assert_eq!(a, sample_channel(3, 42, 0).unwrap());
        assert_ne!(a.h, sample_channel(3, 42, 1).unwrap().h);
        assert_ne!(a.h, sample_channel(3, 43, 0).unwrap().h);
    }

    #[test]
    fn invalid_user_count() {
        assert_eq!(sample_channel(1, 0, 0).unwrap_err(), ChannelError::InvalidUserCount(1));
        assert_eq!(sample_channel(0, 0, 0).unwrap_err(), ChannelError::InvalidUserCount(0));
    }

    #[test]
    fn sampled_channels_are_full_rank() {
        for k in [2, 3, 4, 6] {
            for slot in 0..200 {
                assert_eq!(numerical_rank(&sample_channel(k, 9, slot).unwrap().h), k);
            }
        }
    }

    // |H_11|^2 ~ Exp(1): variance 1, so the mean of 1e4 draws has
    // sigma = 0.01 and the [0.94, 1.06] window is far wider than 3 sigma.
    #[test]
    fn second_moment_is_unit() {
        let n = 10_000;
        let mean = (0..n).map(|t| sample_channel(2, 17, t).unwrap().h[(0, 0)].norm_sqr()).sum::<f64>() / n as f64;
        assert!((0.97..=1.03).contains(&mean), "{mean}");
    }

    #[test]
    fn noise_variance_is_unit() {
        let n = 10_000u64;
        let samples: Vec<f64> = (0..n).flat_map(|t| sample_noise(3, 5, t).n).map(|z| z.norm_sqr()).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let sigma = 1.0 / (samples.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn schedules() {
        use CsitState::*;
        assert_eq!(make_schedule(1).pattern(), &[PAll, DFirst]);
        assert_eq!(make_schedule(2).pattern(), &[PAll, DFirst, PAll, DFirst]);
        for b in 1..20 {
            for layout in [ScheduleLayout::Interleaved, ScheduleLayout::Contiguous] {
                let s = make_schedule_with_layout(b, layout);
                assert_eq!(s.len(), 2 * b);
                let p = s.pattern().iter().filter(|&&x| x == PAll).count();
                assert_eq!(p, b);
                for i in 0..b {
                    let (tp, td) = s.block_slots(i);
                    assert_eq!(s.pattern()[tp as usize], PAll);
                    assert_eq!(s.pattern()[td as usize], DFirst);
                }
            }
        }
        let c = make_schedule_with_layout(2, ScheduleLayout::Contiguous);
        assert_eq!(c.pattern(), &[PAll, PAll, DFirst, DFirst]);
        assert_eq!(c.block_slots(1), (1, 3));
    }

    #[test]
    fn p_state_view_sees_every_row() {
        let h = sample_channel(4, 1, 0).unwrap();
        let v = tx_view(&h, CsitState::PAll, &[]);
        assert_eq!(v.known_receivers(), vec![0, 1, 2, 3]);
        assert_eq!(v.rows_matrix(&[0, 1, 2, 3]).unwrap(), h.h);
    }

    #[test]
    fn d_state_view_hides_first_row_but_keeps_history() {
        let past = sample_channel(3, 1, 0).unwrap();
        let h = sample_channel(3, 1, 1).unwrap();
        let v = tx_view(&h, CsitState::DFirst, std::slice::from_ref(&past));
        assert_eq!(v.known_receivers(), vec![1, 2]);
        assert!(v.row(0).is_none());
        assert_eq!(v.rows_matrix(&[0]).unwrap_err(), ChannelError::RowNotVisible(0));
        assert_eq!(v.history(), std::slice::from_ref(&past));
    }

    #[test]
    fn later_slots_never_enter_history() {
        let h = sample_channel(3, 1, 1).unwrap();
        let future = sample_channel(3, 1, 2).unwrap();
        let v = tx_view(&h, CsitState::DFirst, &[future]);
        assert!(v.history().is_empty());
    }

    #[test]
    fn masked_row_does_not_reach_the_view() {
        let h = sample_channel(3, 8, 1).unwrap();
        let other = h.with_row(0, sample_channel(3, 99, 1).unwrap().row(0));
        assert_ne!(h, other);
        assert_eq!(tx_view(&h, CsitState::DFirst, &[]), tx_view(&other, CsitState::DFirst, &[]));
    }
}
