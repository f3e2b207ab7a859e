//! Periodized orthogonal fast wavelet transform.
//!
//! One analysis stage maps fine coefficients `v` to
//! `coarse_n = sum_l h_l v_{(2n+l) mod N}` and
//! `detail_n = sum_l g_l v_{(2n+l) mod N}`; synthesis is its transpose.

use crate::error::{Error, Result};
use crate::filters::FilterPair;

/// Scale-tagged coefficient vector on a periodic lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    pub scale: i32,
    entries: Vec<f64>,
}

impl CoeffVector {
    pub fn new(scale: i32, entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() || !entries.len().is_power_of_two() {
            return Err(Error::Shape(format!(
                "length {} is not a power of two",
                entries.len()
            )));
        }
        Ok(Self { scale, entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }
}

fn check_length(len: usize, fp: &FilterPair) -> Result<()> {
    if !len.is_power_of_two() || len < fp.len() {
        return Err(Error::Shape(format!(
            "length {len} must be a power of two and at least {}",
            fp.len()
        )));
    }
    Ok(())
}

/// One analysis stage: `(coarse, detail)` at scale `v.scale - 1`.
pub fn analysis_step(v: &CoeffVector, fp: &FilterPair) -> Result<(CoeffVector, CoeffVector)> {
    let n = v.len();
    check_length(n, fp)?;
    let (coarse, detail) = analysis_raw(&v.entries, fp);
    Ok((
        CoeffVector {
            scale: v.scale - 1,
            entries: coarse,
        },
        CoeffVector {
            scale: v.scale - 1,
            entries: detail,
        },
    ))
}

fn analysis_raw(v: &[f64], fp: &FilterPair) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let half = n / 2;
    let mut coarse = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for m in 0..half {
        let (mut c, mut d) = (0.0, 0.0);
        for (l, (&hl, &gl)) in fp.h().iter().zip(fp.g()).enumerate() {
            let x = v[(2 * m + l) % n];
            c += hl * x;
            d += gl * x;
        }
        coarse[m] = c;
        detail[m] = d;
    }
    (coarse, detail)
}

/// Inverse of [`analysis_step`].
pub fn synthesis_step(
    coarse: &CoeffVector,
    detail: &CoeffVector,
    fp: &FilterPair,
) -> Result<CoeffVector> {
    if coarse.len() != detail.len() {
        return Err(Error::Shape(format!(
            "coarse length {} != detail length {}",
            coarse.len(),
            detail.len()
        )));
    }
    if coarse.scale != detail.scale {
        return Err(Error::Shape(format!(
            "coarse scale {} != detail scale {}",
            coarse.scale, detail.scale
        )));
    }
    let entries = synthesis_raw(&coarse.entries, &detail.entries, fp);
    Ok(CoeffVector {
        scale: coarse.scale + 1,
        entries,
    })
}

fn synthesis_raw(coarse: &[f64], detail: &[f64], fp: &FilterPair) -> Vec<f64> {
    let n = 2 * coarse.len();
    let mut v = vec![0.0; n];
    for m in 0..coarse.len() {
        for (l, (&hl, &gl)) in fp.h().iter().zip(fp.g()).enumerate() {
            v[(2 * m + l) % n] += hl * coarse[m] + gl * detail[m];
        }
    }
    v
}

/// Multilevel decomposition. `details[0]` is the finest detail band, the last
/// entry the coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    /// Scale of the input vector.
    pub scale: i32,
    pub coarse: Vec<f64>,
    pub details: Vec<Vec<f64>>,
}

impl Pyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Coarse band followed by the detail bands in storage order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.coarse.clone();
        for d in &self.details {
            out.extend_from_slice(d);
        }
        out
    }

    pub fn norm_squared(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum()
    }
}

/// Largest number of analysis stages that keep every stage input at least
/// `2K` long.
pub fn max_levels(len: usize, fp: &FilterPair) -> usize {
    let mut levels = 0;
    let mut n = len;
    while n >= fp.len() && n >= 2 {
        levels += 1;
        n /= 2;
    }
    levels
}

pub fn forward(v: &CoeffVector, fp: &FilterPair, levels: usize) -> Result<Pyramid> {
    check_length(v.len(), fp)?;
    let max = max_levels(v.len(), fp);
    if levels > max {
        return Err(Error::Depth {
            requested: levels,
            max,
        });
    }
    let mut coarse = v.entries.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (c, d) = analysis_raw(&coarse, fp);
        details.push(d);
        coarse = c;
    }
    Ok(Pyramid {
        scale: v.scale,
        coarse,
        details,
    })
}

pub fn inverse(p: &Pyramid, fp: &FilterPair) -> Result<CoeffVector> {
    let mut v = p.coarse.clone();
    for d in p.details.iter().rev() {
        if d.len() != v.len() {
            return Err(Error::Shape(format!(
                "detail band of length {} cannot pair with coarse band of length {}",
                d.len(),
                v.len()
            )));
        }
        v = synthesis_raw(&v, d, fp);
    }
    CoeffVector::new(p.scale, v)
}

/// Direction for [`multilevel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Forward: `v` is the signal, returns the flattened pyramid. Inverse: `v`
/// is a flattened pyramid of `levels` stages, returns the signal.
pub fn multilevel(
    v: &CoeffVector,
    fp: &FilterPair,
    levels: usize,
    direction: Direction,
) -> Result<CoeffVector> {
    match direction {
        Direction::Forward => {
            let p = forward(v, fp, levels)?;
            CoeffVector::new(v.scale - levels as i32, p.flatten())
        }
        Direction::Inverse => {
            let p = unflatten(v.entries(), levels, v.scale + levels as i32)?;
            if levels > max_levels(v.len(), fp) {
                return Err(Error::Depth {
                    requested: levels,
                    max: max_levels(v.len(), fp),
                });
            }
            inverse(&p, fp)
        }
    }
}

/// Split a flattened pyramid back into bands.
pub fn unflatten(flat: &[f64], levels: usize, scale: i32) -> Result<Pyramid> {
    let n = flat.len();
    if !n.is_power_of_two() || levels >= usize::BITS as usize || n >> levels == 0 {
        return Err(Error::Shape(format!(
            "cannot split {n} values into {levels} levels"
        )));
    }
    let coarse_len = n >> levels;
    let coarse = flat[..coarse_len].to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut offset = coarse_len;
    // stored finest-first: band i has length n / 2^{i+1}
    for i in 0..levels {
        let len = n >> (i + 1);
        details.push(flat[offset..offset + len].to_vec());
        offset += len;
    }
    Ok(Pyramid {
        scale,
        coarse,
        details,
    })
}

/// Dense `N x N` matrix of one analysis stage: coarse rows first.
pub fn analysis_matrix(fp: &FilterPair, n: usize) -> nalgebra::DMatrix<f64> {
    let half = n / 2;
    let mut w = nalgebra::DMatrix::zeros(n, n);
    for m in 0..half {
        for (l, (&hl, &gl)) in fp.h().iter().zip(fp.g()).enumerate() {
            let col = (2 * m + l) % n;
            w[(m, col)] += hl;
            w[(half + m, col)] += gl;
        }
    }
    w
}
