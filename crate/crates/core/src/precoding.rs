//! Zero-forcing beamformers for both CSIT states and the per-stream power
//! split.
//!
//! P slot: `v_k` is the null vector of the channel with receiver `k`'s row
//! removed, so stream `a_k` reaches only receiver `k`.
//!
//! D slot: the first receiver's row is unknown. `v_1` nulls every other
//! receiver and carries the artificial noise `u`. For `k >= 2`, `v_k` nulls
//! receivers `{2..K} \ {k}`; that null space is two-dimensional for
//! `K >= 3` and the first vector of the deterministic basis is used. The
//! leftover component of `v_k` along `h_1` is what folds `b_k` into the
//! first receiver's noisy linear combination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, CsitState, TxView};
use crate::linalg::{dot, null_space_unit_vector, LinalgError, UnitVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrecodingError {
    #[error("total power must be positive and finite, got {0}")]
    InvalidPower(f64),
    #[error("user count must be at least 2, got {0}")]
    InvalidUserCount(usize),
    #[error("precoder for {expected:?} slots built from a {found:?} view")]
    WrongState { expected: CsitState, found: CsitState },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolTag {
    A,
    B,
}

/// What a beamforming direction carries. Users are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamRole {
    Data { user: usize, tag: SymbolTag },
    ArtificialNoise,
}

impl StreamRole {
    /// Roles of the P-slot directions, index-aligned with `v_k(t_P)`.
    pub fn p_slot(users: usize) -> Vec<StreamRole> {
        (0..users).map(|user| StreamRole::Data { user, tag: SymbolTag::A }).collect()
    }

    /// Roles of the D-slot directions: noise on `v_1`, `b_k` on `v_k`.
    pub fn d_slot(users: usize) -> Vec<StreamRole> {
        std::iter::once(StreamRole::ArtificialNoise)
            .chain((1..users).map(|user| StreamRole::Data { user, tag: SymbolTag::B }))
            .collect()
    }
}

/// Zero-forcing directions for a `P_ALL` slot.
pub fn build_p_state_precoder(view: &TxView) -> Result<Vec<UnitVector>, PrecodingError> {
    if view.state != CsitState::PAll {
        return Err(PrecodingError::WrongState { expected: CsitState::PAll, found: view.state });
    }
    let users = view.users();
    (0..users)
        .map(|k| {
            let others: Vec<usize> = (0..users).filter(|&j| j != k).collect();
            Ok(null_space_unit_vector(&view.rows_matrix(&others)?)?)
        })
        .collect()
}

/// Directions for a `D_FIRST` slot. Only rows `2..K` are ever read; the
/// view does not even hold row 1.
pub fn build_d_state_precoder(view: &TxView) -> Result<Vec<UnitVector>, PrecodingError> {
    if view.state != CsitState::DFirst {
        return Err(PrecodingError::WrongState { expected: CsitState::DFirst, found: view.state });
    }
    let users = view.users();
    let rest: Vec<usize> = (1..users).collect();
    let mut vectors = Vec::with_capacity(users);
    vectors.push(null_space_unit_vector(&view.rows_matrix(&rest)?)?);
    for k in 1..users {
        let others: Vec<usize> = rest.iter().copied().filter(|&j| j != k).collect();
        vectors.push(null_space_unit_vector(&view.rows_matrix(&others)?)?);
    }
    Ok(vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerPolicy {
    /// P slot: `P/K` per stream. D slot: `P/2` to the noise, the other half
    /// split over the `K - 1` data streams.
    #[default]
    HalfToNoise,
    /// Every stream of a slot (noise included) gets the same share.
    EqualPerStream,
}

/// Transmit power per stream, linear units. `d_data[i]` belongs to user
/// `i + 1` (0-based), i.e. to `b_{i+2}` in 1-based numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPowers {
    pub p_data: Vec<f64>,
    pub d_noise: f64,
    pub d_data: Vec<f64>,
}

pub fn allocate_powers(users: usize, total: f64, policy: PowerPolicy) -> Result<StreamPowers, PrecodingError> {
    if users < 2 {
        return Err(PrecodingError::InvalidUserCount(users));
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(PrecodingError::InvalidPower(total));
    }
    let k = users as f64;
    let p_data = vec![total / k; users];
    let (d_noise, per_data) = match policy {
        PowerPolicy::HalfToNoise => (total / 2.0, total / 2.0 / (k - 1.0)),
        PowerPolicy::EqualPerStream => (total / k, total / k),
    };
    Ok(StreamPowers { p_data, d_noise, d_data: vec![per_data; users - 1] })
}

impl StreamPowers {
    pub fn users(&self) -> usize {
        self.p_data.len()
    }

    pub fn p_slot_total(&self) -> f64 {
        self.p_data.iter().sum()
    }

    pub fn d_slot_total(&self) -> f64 {
        self.d_noise + self.d_data.iter().sum::<f64>()
    }

    /// Noise power moved, in equal parts, onto the D-slot data streams.
    pub fn without_noise(&self) -> StreamPowers {
        let extra = self.d_noise / self.d_data.len() as f64;
        StreamPowers {
            p_data: self.p_data.clone(),
            d_noise: 0.0,
            d_data: self.d_data.iter().map(|p| p + extra).collect(),
        }
    }

    /// Power of each D-slot direction, aligned with [`StreamRole::d_slot`].
    pub fn d_slot_by_direction(&self) -> Vec<f64> {
        std::iter::once(self.d_noise).chain(self.d_data.iter().copied()).collect()
    }

    /// Every stream power multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> StreamPowers {
        StreamPowers {
            p_data: self.p_data.iter().map(|p| p * factor).collect(),
            d_noise: self.d_noise * factor,
            d_data: self.d_data.iter().map(|p| p * factor).collect(),
        }
    }
}

/// Beamformers for one `(t_P, t_D)` block plus the stream powers.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrecoder {
    pub p_slot: Vec<UnitVector>,
    pub d_slot: Vec<UnitVector>,
    pub powers: StreamPowers,
}

impl BlockPrecoder {
    pub fn build(p_view: &TxView, d_view: &TxView, powers: StreamPowers) -> Result<Self, PrecodingError> {
        Ok(Self {
            p_slot: build_p_state_precoder(p_view)?,
            d_slot: build_d_state_precoder(d_view)?,
            powers,
        })
    }

    pub fn users(&self) -> usize {
        self.p_slot.len()
    }

    pub fn d_roles(&self) -> Vec<StreamRole> {
        StreamRole::d_slot(self.users())
    }
}

/// Largest `|<h_j, v_k>| / ||h_j||` over every pair the scheme must null,
/// in both slots of a block. `h_p` and `h_d` hold rows `h_j^H`.
pub fn max_nulling_residual(
    precoder: &BlockPrecoder,
    h_p: &crate::linalg::ComplexMatrix,
    h_d: &crate::linalg::ComplexMatrix,
) -> f64 {
    let users = precoder.users();
    let rel = |row: &[crate::linalg::C64], v: &[crate::linalg::C64]| dot(row, v).norm() / crate::linalg::norm(row);
    let mut worst: f64 = 0.0;
    for k in 0..users {
        for j in (0..users).filter(|&j| j != k) {
            worst = worst.max(rel(h_p.row(j), &precoder.p_slot[k]));
        }
    }
    for j in 1..users {
        worst = worst.max(rel(h_d.row(j), &precoder.d_slot[0]));
    }
    for k in 1..users {
        for j in (1..users).filter(|&j| j != k) {
            worst = worst.max(rel(h_d.row(j), &precoder.d_slot[k]));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, tx_view, ChannelRealization};
    use crate::linalg::{norm, ComplexMatrix, C64};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn realization(rows: &[Vec<C64>]) -> ChannelRealization {
        ChannelRealization::new(0, ComplexMatrix::from_rows(rows).unwrap()).unwrap()
    }

    fn close(a: &[C64], b: &[C64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-14)
    }

    #[test]
    fn identity_channel_gives_canonical_p_slot_beams() {
        let h = ChannelRealization::new(0, ComplexMatrix::identity(3)).unwrap();
        let v = build_p_state_precoder(&tx_view(&h, CsitState::PAll, &[])).unwrap();
        for (k, vk) in v.iter().enumerate() {
            assert!(close(vk, &UnitVector::basis(3, k)), "{k}: {vk:?}");
        }
    }

    #[test]
    fn two_user_p_slot_by_hand() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = realization(&[vec![c(1.0), c(0.0)], vec![c(s), c(s)]]);
        let v = build_p_state_precoder(&tx_view(&h, CsitState::PAll, &[])).unwrap();
        assert!(close(&v[0], &[c(s), c(-s)]));
        assert!(close(&v[1], &[c(0.0), c(1.0)]));
    }

    #[test]
    fn two_user_d_slot_uses_canonical_anchor_for_data() {
        let h = sample_channel(2, 3, 1).unwrap();
        let v = build_d_state_precoder(&tx_view(&h, CsitState::DFirst, &[])).unwrap();
        assert!(dot(h.row(1), &v[0]).norm() < 1e-15);
        assert_eq!(v[1], UnitVector::basis(2, 0));
    }

    #[test]
    fn three_user_d_slot_noise_beam_on_canonical_rows() {
        let z = c(0.0);
        let h = realization(&[
            vec![c(0.3), c(0.7), c(-1.1)],
            vec![z, c(1.0), z],
            vec![z, z, c(1.0)],
        ]);
        let v = build_d_state_precoder(&tx_view(&h, CsitState::DFirst, &[])).unwrap();
        assert!(close(&v[0], &UnitVector::basis(3, 0)));
    }

    #[test]
    fn wrong_state_is_rejected() {
        let h = sample_channel(3, 3, 0).unwrap();
        assert!(matches!(
            build_p_state_precoder(&tx_view(&h, CsitState::DFirst, &[])),
            Err(PrecodingError::WrongState { .. })
        ));
        assert!(matches!(
            build_d_state_precoder(&tx_view(&h, CsitState::PAll, &[])),
            Err(PrecodingError::WrongState { .. })
        ));
    }

    #[test]
    fn degenerate_channel_is_reported() {
        let row = vec![c(1.0), c(2.0), c(3.0)];
        let h = realization(&[row.clone(), row.clone(), vec![c(0.0), c(1.0), c(0.0)]]);
        assert!(matches!(
            build_p_state_precoder(&tx_view(&h, CsitState::PAll, &[])),
            Err(PrecodingError::Linalg(LinalgError::RankDeficient { .. }))
        ));
    }

    #[test]
    fn random_channels_meet_nulling_invariants() {
        for users in [2, 3, 4, 6] {
            for t in 0..200 {
                let hp = sample_channel(users, 77, 2 * t).unwrap();
                let hd = sample_channel(users, 77, 2 * t + 1).unwrap();
                let powers = allocate_powers(users, 10.0, PowerPolicy::default()).unwrap();
                let pre = BlockPrecoder::build(
                    &tx_view(&hp, CsitState::PAll, &[]),
                    &tx_view(&hd, CsitState::DFirst, std::slice::from_ref(&hp)),
                    powers,
                )
                .unwrap();
                assert!(max_nulling_residual(&pre, &hp.h, &hd.h) < 1e-10);
                for v in pre.p_slot.iter().chain(&pre.d_slot) {
                    assert!((norm(v) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn directions_ignore_positive_row_scaling() {
        let hp = sample_channel(4, 5, 0).unwrap();
        let mut scaled = hp.clone();
        for (k, s) in [0.5, 3.0, 1e3, 2.0].iter().enumerate() {
            let row: Vec<C64> = hp.row(k).iter().map(|z| z * *s).collect();
            scaled = scaled.with_row(k, &row);
        }
        let a = build_p_state_precoder(&tx_view(&hp, CsitState::PAll, &[])).unwrap();
        let b = build_p_state_precoder(&tx_view(&scaled, CsitState::PAll, &[])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.iter().zip(y.iter()).all(|(p, q)| (p - q).norm() < 1e-12));
        }
    }

    #[test]
    fn power_policy_arithmetic() {
        let p = allocate_powers(3, 30.0, PowerPolicy::HalfToNoise).unwrap();
        assert_eq!(p.p_data, vec![10.0, 10.0, 10.0]);
        assert_eq!(p.d_noise, 15.0);
        assert_eq!(p.d_data, vec![7.5, 7.5]);
        let p = allocate_powers(2, 4.0, PowerPolicy::HalfToNoise).unwrap();
        assert_eq!(p.p_data, vec![2.0, 2.0]);
        assert_eq!((p.d_noise, p.d_data.clone()), (2.0, vec![2.0]));
        assert_eq!(allocate_powers(3, 0.0, PowerPolicy::HalfToNoise), Err(PrecodingError::InvalidPower(0.0)));
        assert_eq!(allocate_powers(3, -1.0, PowerPolicy::HalfToNoise), Err(PrecodingError::InvalidPower(-1.0)));
    }

    #[test]
    fn baseline_reallocation_keeps_the_budget() {
        let p = allocate_powers(3, 30.0, PowerPolicy::HalfToNoise).unwrap().without_noise();
        assert_eq!(p.d_noise, 0.0);
        assert_eq!(p.d_data, vec![15.0, 15.0]);
        assert_eq!(p.d_slot_total(), 30.0);
    }

    proptest::proptest! {
        #[test]
        fn slot_totals_equal_budget(users in 2usize..12, total in 1e-6f64..1e15, equal in proptest::bool::ANY) {
            let policy = if equal { PowerPolicy::EqualPerStream } else { PowerPolicy::HalfToNoise };
            let p = allocate_powers(users, total, policy).unwrap();
            proptest::prop_assert!((p.p_slot_total() - total).abs() <= 1e-12 * total);
            proptest::prop_assert!((p.d_slot_total() - total).abs() <= 1e-12 * total);
            proptest::prop_assert!((p.without_noise().d_slot_total() - total).abs() <= 1e-12 * total);
        }
    }
}
