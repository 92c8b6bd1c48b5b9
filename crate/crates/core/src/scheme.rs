//! Block signals and receiver observations.
//!
//! One block is a `(t_P, t_D)` slot pair:
//!
//! ```text
//! X(t_P) = sum_k a_k v_k(t_P)
//! X(t_D) = u v_1(t_D) + sum_{k>=2} b_k v_k(t_D)
//! ```
//!
//! and receiver `k` sees `y_k(t) = <h_k(t), X(t)> + n_k(t)` with the
//! convention `<h, v> = h^H v`. That is `2K - 1` data symbols per block:
//! one for the first receiver and two for each of the others.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{sample_cn, ChannelRealization, NoiseRealization};
use crate::linalg::{dot, ComplexMatrix, C64};
use crate::precoding::{BlockPrecoder, StreamPowers, StreamRole, SymbolTag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("dimension error: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemeVariant {
    #[default]
    SecureAlternating,
    /// Same beams, `u = 0`, noise power spread over the D-slot data streams.
    NoNoiseBaseline,
}

impl SchemeVariant {
    /// Stream powers this variant actually transmits with.
    pub fn powers(self, base: &StreamPowers) -> StreamPowers {
        match self {
            SchemeVariant::SecureAlternating => base.clone(),
            SchemeVariant::NoNoiseBaseline => base.without_noise(),
        }
    }
}

/// Source symbols of one block. `b[i]` is user `i + 1`'s second symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    pub u: C64,
}

impl SymbolBlock {
    pub fn zeros(users: usize) -> Self {
        Self { a: vec![C64::new(0.0, 0.0); users], b: vec![C64::new(0.0, 0.0); users - 1], u: C64::new(0.0, 0.0) }
    }

    /// Independent Gaussian symbols with the given per-stream powers.
    pub fn sample<R: Rng + ?Sized>(powers: &StreamPowers, rng: &mut R) -> Self {
        let draw = |p: f64, rng: &mut R| sample_cn(rng) * p.sqrt();
        let a = powers.p_data.iter().map(|&p| draw(p, rng)).collect();
        let b = powers.d_data.iter().map(|&p| draw(p, rng)).collect();
        let u = draw(powers.d_noise, rng);
        Self { a, b, u }
    }

    pub fn users(&self) -> usize {
        self.a.len()
    }

    /// Symbol carried by `role`.
    pub fn symbol(&self, role: StreamRole) -> C64 {
        match role {
            StreamRole::Data { user, tag: SymbolTag::A } => self.a[user],
            StreamRole::Data { user, tag: SymbolTag::B } => self.b[user - 1],
            StreamRole::ArtificialNoise => self.u,
        }
    }
}

/// One precoded stream: its role, symbol and unit direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub role: StreamRole,
    pub symbol: C64,
    pub direction: Vec<C64>,
}

/// Transmitted vectors of one block, with the streams that built them.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSignal {
    pub x_p: Vec<C64>,
    pub x_d: Vec<C64>,
    pub p_streams: Vec<Stream>,
    pub d_streams: Vec<Stream>,
}

fn superpose(users: usize, streams: &[Stream]) -> Vec<C64> {
    let mut x = vec![C64::new(0.0, 0.0); users];
    for s in streams {
        for (xi, vi) in x.iter_mut().zip(&s.direction) {
            *xi += s.symbol * vi;
        }
    }
    x
}

pub fn transmit_block(
    precoder: &BlockPrecoder,
    symbols: &SymbolBlock,
    variant: SchemeVariant,
) -> Result<BlockSignal, SchemeError> {
    let users = precoder.users();
    if symbols.a.len() != users || symbols.b.len() + 1 != users || precoder.d_slot.len() != users {
        return Err(SchemeError::Dimension(format!(
            "{users}-user precoder with {} a-symbols and {} b-symbols",
            symbols.a.len(),
            symbols.b.len()
        )));
    }
    let p_streams: Vec<Stream> = StreamRole::p_slot(users)
        .into_iter()
        .zip(&precoder.p_slot)
        .map(|(role, v)| Stream { role, symbol: symbols.symbol(role), direction: v.to_vec() })
        .collect();
    let d_streams: Vec<Stream> = StreamRole::d_slot(users)
        .into_iter()
        .zip(&precoder.d_slot)
        .map(|(role, v)| {
            let symbol = match (role, variant) {
                (StreamRole::ArtificialNoise, SchemeVariant::NoNoiseBaseline) => C64::new(0.0, 0.0),
                _ => symbols.symbol(role),
            };
            Stream { role, symbol, direction: v.to_vec() }
        })
        .collect();
    Ok(BlockSignal {
        x_p: superpose(users, &p_streams),
        x_d: superpose(users, &d_streams),
        p_streams,
        d_streams,
    })
}

/// One receiver output and its per-stream decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub y: C64,
    pub intended: Option<StreamRole>,
    pub terms: Vec<(StreamRole, C64)>,
    pub noise: C64,
}

impl OutputRecord {
    pub fn signal(&self) -> C64 {
        self.terms.iter().filter(|(r, _)| Some(*r) == self.intended).map(|(_, z)| z).sum()
    }

    pub fn interference(&self) -> C64 {
        self.terms.iter().filter(|(r, _)| Some(*r) != self.intended).map(|(_, z)| z).sum()
    }

    pub fn reconstruct(&self) -> C64 {
        self.terms.iter().map(|(_, z)| z).sum::<C64>() + self.noise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockObservation {
    pub p: Vec<OutputRecord>,
    pub d: Vec<OutputRecord>,
}

impl BlockObservation {
    pub fn y_p(&self) -> Vec<C64> {
        self.p.iter().map(|r| r.y).collect()
    }

    pub fn y_d(&self) -> Vec<C64> {
        self.d.iter().map(|r| r.y).collect()
    }
}

fn observe(h: &ChannelRealization, x: &[C64], streams: &[Stream], noise: &[C64], d_slot: bool) -> Vec<OutputRecord> {
    (0..h.users())
        .map(|j| {
            let row = h.row(j);
            let intended = match (d_slot, j) {
                (true, 0) => None,
                (true, _) => Some(StreamRole::Data { user: j, tag: SymbolTag::B }),
                (false, _) => Some(StreamRole::Data { user: j, tag: SymbolTag::A }),
            };
            OutputRecord {
                y: dot(row, x) + noise[j],
                intended,
                terms: streams.iter().map(|s| (s.role, dot(row, &s.direction) * s.symbol)).collect(),
                noise: noise[j],
            }
        })
        .collect()
}

pub fn receive_block(
    h_p: &ChannelRealization,
    h_d: &ChannelRealization,
    signal: &BlockSignal,
    noise_p: &NoiseRealization,
    noise_d: &NoiseRealization,
) -> Result<BlockObservation, SchemeError> {
    let users = h_p.users();
    let ok = h_d.users() == users
        && signal.x_p.len() == users
        && signal.x_d.len() == users
        && noise_p.n.len() == users
        && noise_d.n.len() == users;
    if !ok {
        return Err(SchemeError::Dimension("channel, signal and noise sizes disagree".into()));
    }
    Ok(BlockObservation {
        p: observe(h_p, &signal.x_p, &signal.p_streams, &noise_p.n, false),
        d: observe(h_d, &signal.x_d, &signal.d_streams, &noise_d.n, true),
    })
}

/// `<h_j(t), v_k(t)>` for both slots of a block.
///
/// `p[(j, k)]` pairs receiver `j` with `v_k(t_P)`; `d[(j, k)]` with
/// `v_k(t_D)`, where column 0 is the artificial-noise direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub p: ComplexMatrix,
    pub d: ComplexMatrix,
}

impl GainTable {
    pub fn users(&self) -> usize {
        self.p.rows()
    }
}

pub fn effective_gains(precoder: &BlockPrecoder, h_p: &ChannelRealization, h_d: &ChannelRealization) -> GainTable {
    let users = precoder.users();
    let table = |h: &ChannelRealization, beams: &[crate::linalg::UnitVector]| {
        let mut m = ComplexMatrix::zeros(users, users);
        for j in 0..users {
            for (k, v) in beams.iter().enumerate() {
                m[(j, k)] = dot(h.row(j), v);
            }
        }
        m
    };
    GainTable { p: table(h_p, &precoder.p_slot), d: table(h_d, &precoder.d_slot) }
}
