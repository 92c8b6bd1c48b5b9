//! Test-only oracles. None of these call into the library's numerical
//! routines; they work from raw channels and beams.

#![allow(dead_code)]

use num_complex::Complex64 as C64;

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn herm(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Orthonormalizes the conjugated rows, then sweeps `e_1, e_2, ...`
/// against them (twice, for stability) and keeps the survivors.
pub fn gram_schmidt_complement(rows: &[Vec<C64>], dim: usize) -> Vec<Vec<C64>> {
    let mut basis: Vec<Vec<C64>> = Vec::new();
    let mut complement = Vec::new();
    let orth = |mut v: Vec<C64>, basis: &Vec<Vec<C64>>| {
        for _ in 0..2 {
            for b in basis {
                let p = herm(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= bi * p;
                }
            }
        }
        v
    };
    for r in rows {
        let v = orth(r.iter().map(|z| z.conj()).collect(), &basis);
        let n = norm(&v);
        basis.push(v.into_iter().map(|z| z / n).collect());
    }
    for j in 0..dim {
        let mut e = vec![C64::new(0.0, 0.0); dim];
        e[j] = C64::new(1.0, 0.0);
        let v = orth(e, &basis);
        let n = norm(&v);
        if n > 1e-6 {
            let v: Vec<C64> = v.into_iter().map(|z| z / n).collect();
            basis.push(v.clone());
            complement.push(v);
        }
    }
    complement
}

/// First entry above 1e-12 in magnitude made real positive.
pub fn phase_normalize(mut v: Vec<C64>) -> Vec<C64> {
    if let Some(a) = v.iter().copied().find(|z| z.norm() > 1e-12) {
        let rot = a.conj() / a.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
    v
}

/// `log2 |det M|` via Gaussian elimination with partial pivoting.
pub fn lu_log2_det(mut m: Vec<Vec<C64>>) -> f64 {
    let n = m.len();
    let mut acc = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm())).unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        acc += d.norm().log2();
        for r in (col + 1)..n {
            let f = m[r][col] / d;
            for c in col..n {
                let t = m[col][c];
                m[r][c] -= f * t;
            }
        }
    }
    acc
}

/// One transmitted stream as the oracle sees it.
pub struct OracleStream {
    pub slot_d: bool,
    pub power: f64,
    pub owner: Option<usize>,
    pub beam: Vec<C64>,
}

/// `I(W_target; observers' outputs)` from raw channel rows and beams.
///
/// The covariance is accumulated as `I + sum_s p_s c_s c_s^H`, one rank-one
/// term per stream, where `c_s` stacks `h_j^H v_s` over observer slots.
pub fn dense_leakage(
    h_p: &[Vec<C64>],
    h_d: &[Vec<C64>],
    streams: &[OracleStream],
    target: usize,
    observers: &[usize],
) -> f64 {
    let rows: Vec<(usize, bool)> = observers.iter().flat_map(|&j| [(j, false), (j, true)]).collect();
    let n = rows.len();
    let cov = |skip_target: bool| {
        let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = C64::new(1.0, 0.0);
        }
        for s in streams {
            if skip_target && s.owner == Some(target) {
                continue;
            }
            let c: Vec<C64> = rows
                .iter()
                .map(|&(j, d)| {
                    if d != s.slot_d {
                        return C64::new(0.0, 0.0);
                    }
                    let h = if d { &h_d[j] } else { &h_p[j] };
                    h.iter().zip(&s.beam).map(|(a, b)| a * b).sum()
                })
                .collect();
            for a in 0..n {
                for b in 0..n {
                    m[a][b] += c[a] * c[b].conj() * s.power;
                }
            }
        }
        m
    };
    lu_log2_det(cov(false)) - lu_log2_det(cov(true))
}
