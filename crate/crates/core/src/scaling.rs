//! Scaling functions and wavelets sampled on dyadic grids.
//!
//! Values on the integers come from the refinement matrix
//! `M_ij = sqrt(2) h_{2i-j}` (eigenvalue 1 for `s`, eigenvalue 1/2 for `s'`);
//! finer grids follow from the refinement equation
//! `s(x) = sqrt(2) sum_l h_l s(2x - l)`, one halving of the grid spacing at a
//! time. Every sample is therefore an exact consequence of the filter.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::FilterPair;
use crate::linalg::{eigenvector_with_normalization, FixedPointError};

/// Samples of `s` (or `s'`) at the points `i / 2^level` of `[0, 2K-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicSamples {
    order: usize,
    level: u32,
    derivative_order: u8,
    values: Vec<f64>,
}

impl DyadicSamples {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn derivative_order(&self) -> u8 {
        self.derivative_order
    }

    /// Values indexed from the left edge of the support.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of grid intervals per unit length.
    pub fn resolution(&self) -> i64 {
        1i64 << self.level
    }

    /// `f(index / 2^level)`, zero outside the support.
    #[inline]
    pub fn at(&self, index: i64) -> f64 {
        if index < 0 {
            return 0.0;
        }
        self.values.get(index as usize).copied().unwrap_or(0.0)
    }

    /// `(x, f(x))` pairs over the support.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let step = 1.0 / self.resolution() as f64;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (i as f64 * step, v))
    }
}

/// Which family a basis element belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Scaling,
    Wavelet,
}

/// `s^k_n` or `w^k_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub kind: BasisKind,
    pub scale: i32,
    pub translation: i64,
}

impl BasisIndex {
    pub fn scaling(scale: i32, translation: i64) -> Self {
        Self {
            kind: BasisKind::Scaling,
            scale,
            translation,
        }
    }

    pub fn wavelet(scale: i32, translation: i64) -> Self {
        Self {
            kind: BasisKind::Wavelet,
            scale,
            translation,
        }
    }
}

/// A dyadic rational `numerator / 2^log2_denominator` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dyadic {
    numerator: i64,
    log2_denominator: u32,
}

impl Dyadic {
    pub fn new(numerator: i64, log2_denominator: u32) -> Self {
        let mut d = Self {
            numerator,
            log2_denominator,
        };
        while d.log2_denominator > 0 && d.numerator % 2 == 0 {
            d.numerator /= 2;
            d.log2_denominator -= 1;
        }
        d
    }

    pub fn integer(n: i64) -> Self {
        Self::new(n, 0)
    }

    pub fn numerator(&self) -> i64 {
        self.numerator
    }

    pub fn log2_denominator(&self) -> u32 {
        self.log2_denominator
    }

    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / (1u64 << self.log2_denominator) as f64
    }

    /// `2^k self - n`.
    fn affine(self, k: i32, n: i64) -> Self {
        if k >= 0 {
            let num = (self.numerator << k) - (n << self.log2_denominator);
            Self::new(num, self.log2_denominator)
        } else {
            let d = self.log2_denominator + k.unsigned_abs();
            Self::new(self.numerator - (n << d), d)
        }
    }

    /// Grid index of this point on a level-`level` grid, if it lies on it.
    fn index_at(self, level: u32) -> Option<i64> {
        (self.log2_denominator <= level).then(|| self.numerator << (level - self.log2_denominator))
    }
}

fn refinement_matrix(fp: &FilterPair) -> DMatrix<f64> {
    let interior = 2 * fp.order() - 2;
    let h = fp.h();
    DMatrix::from_fn(interior, interior, |r, c| {
        let (i, j) = (r as i64 + 1, c as i64 + 1);
        let idx = 2 * i - j;
        if (0..h.len() as i64).contains(&idx) {
            std::f64::consts::SQRT_2 * h[idx as usize]
        } else {
            0.0
        }
    })
}

/// `s(n)` for `n = 0..=2K-1`, normalized by `sum_n s(n) = 1`.
///
/// For `K = 1` the Haar function is taken right-open, `s(0) = 1, s(1) = 0`.
pub fn integer_values(fp: &FilterPair) -> Result<DyadicSamples> {
    let order = fp.order();
    let support = fp.support();
    let values = if order == 1 {
        vec![1.0, 0.0]
    } else {
        let m = refinement_matrix(fp);
        let normal = DVector::from_element(m.nrows(), 1.0);
        let interior = eigenvector_with_normalization(&m, 1.0, &normal, 1.0)
            .map_err(|e| refinement_error(e, 1.0))?;
        let mut v = vec![0.0; support + 1];
        v[1..support].copy_from_slice(interior.as_slice());
        v
    };
    Ok(DyadicSamples {
        order,
        level: 0,
        derivative_order: 0,
        values,
    })
}

/// `s'(n)` on the integers, normalized by `sum_n n s'(n) = -1`.
pub fn derivative_values(fp: &FilterPair) -> Result<DyadicSamples> {
    let order = fp.order();
    if order < 3 {
        return Err(Error::NonDifferentiableOrder { order });
    }
    let support = fp.support();
    let m = refinement_matrix(fp);
    let normal = DVector::from_fn(m.nrows(), |i, _| (i + 1) as f64);
    let interior = eigenvector_with_normalization(&m, 0.5, &normal, -1.0)
        .map_err(|e| refinement_error(e, 0.5))?;
    let mut values = vec![0.0; support + 1];
    values[1..support].copy_from_slice(interior.as_slice());
    Ok(DyadicSamples {
        order,
        level: 0,
        derivative_order: 1,
        values,
    })
}

fn refinement_error(e: FixedPointError, eigenvalue: f64) -> Error {
    match e {
        FixedPointError::Multiplicity(multiplicity) => Error::DegenerateRefinement {
            eigenvalue,
            multiplicity,
        },
        FixedPointError::Unnormalizable | FixedPointError::Residual(_) => {
            Error::DegenerateRefinement {
                eigenvalue,
                multiplicity: 0,
            }
        }
    }
}

/// Fill in the grid down to spacing `2^-target_level`. Samples already known
/// are copied unchanged.
pub fn refine(fp: &FilterPair, samples: &DyadicSamples, target_level: u32) -> DyadicSamples {
    assert_eq!(fp.order(), samples.order, "filter/sample order mismatch");
    assert!(
        target_level >= samples.level,
        "refinement cannot coarsen the grid"
    );
    let support = fp.support();
    let gain = std::f64::consts::SQRT_2
        * if samples.derivative_order == 1 {
            2.0
        } else {
            1.0
        };
    let h = fp.h();
    let mut current = samples.values.clone();
    for level in samples.level..target_level {
        let stride = 1i64 << level;
        let len = support * (1usize << (level + 1)) + 1;
        let mut next = vec![0.0; len];
        for (i, slot) in next.iter_mut().enumerate() {
            if i % 2 == 0 {
                *slot = current[i / 2];
            } else {
                // s(i / 2^{level+1}) = gain * sum_l h_l s(i / 2^level - l)
                let mut acc = 0.0;
                for (l, &hl) in h.iter().enumerate() {
                    let j = i as i64 - l as i64 * stride;
                    if j >= 0 && (j as usize) < current.len() {
                        acc += hl * current[j as usize];
                    }
                }
                *slot = gain * acc;
            }
        }
        current = next;
    }
    DyadicSamples {
        order: samples.order,
        level: target_level,
        derivative_order: samples.derivative_order,
        values: current,
    }
}

/// `s` on the level-`level` grid.
pub fn scaling_samples(fp: &FilterPair, level: u32) -> Result<DyadicSamples> {
    Ok(refine(fp, &integer_values(fp)?, level))
}

/// `s'` on the level-`level` grid.
pub fn derivative_samples(fp: &FilterPair, level: u32) -> Result<DyadicSamples> {
    Ok(refine(fp, &derivative_values(fp)?, level))
}

/// Evaluate `s^k_n(x) = 2^{k/2} s(2^k x - n)` or `w^k_n(x)` (or their first
/// derivatives when `samples` holds `s'`).
///
/// The mother wavelet `w(y) = sqrt(2) sum_l g_l s(2y - l)` is assembled from
/// the samples, so wavelet evaluation needs one level more resolution.
pub fn evaluate_basis(
    fp: &FilterPair,
    idx: BasisIndex,
    samples: &DyadicSamples,
    x: Dyadic,
) -> Result<f64> {
    let y = x.affine(idx.scale, idx.translation);
    let amplitude = 2f64.powf(idx.scale as f64 / 2.0)
        * if samples.derivative_order == 1 {
            2f64.powi(idx.scale)
        } else {
            1.0
        };
    let unresolved = || Error::InsufficientResolution {
        numerator: x.numerator,
        log2_denominator: x.log2_denominator,
        level: samples.level,
    };
    match idx.kind {
        BasisKind::Scaling => {
            let i = y.index_at(samples.level).ok_or_else(unresolved)?;
            Ok(amplitude * samples.at(i))
        }
        BasisKind::Wavelet => {
            let two_y = Dyadic::new(2 * y.numerator, y.log2_denominator);
            let i = two_y.index_at(samples.level).ok_or_else(unresolved)?;
            let stride = samples.resolution();
            let gain = std::f64::consts::SQRT_2
                * if samples.derivative_order == 1 {
                    2.0
                } else {
                    1.0
                };
            let w: f64 = fp
                .g()
                .iter()
                .enumerate()
                .map(|(l, &gl)| gl * samples.at(i - l as i64 * stride))
                .sum();
            Ok(amplitude * gain * w)
        }
    }
}

/// `<x^m> = int x^m s(x) dx`, from the exact moment recursion of the
/// refinement equation.
pub fn moments(fp: &FilterPair, m: usize) -> f64 {
    moment_table(fp, m)[m]
}

/// `<x^p>` for `p = 0..=m`.
pub fn moment_table(fp: &FilterPair, m: usize) -> Vec<f64> {
    let h = fp.h();
    // filter moments H_q = sum_l l^q h_l
    let hq: Vec<f64> = (0..=m)
        .map(|q| {
            h.iter()
                .enumerate()
                .map(|(l, &hl)| (l as f64).powi(q as i32) * hl)
                .sum()
        })
        .collect();
    let mut mom = vec![0.0; m + 1];
    mom[0] = 1.0;
    for order in 1..=m {
        // <x^m> = sqrt(2)/2^{m+1} sum_{p<=m} C(m,p) H_{m-p} <x^p>; the p = m
        // term is <x^m>/2^m (H_0 = sqrt 2), moved to the left.
        let pref = std::f64::consts::SQRT_2 / 2f64.powi(order as i32 + 1);
        let rhs: f64 = (0..order)
            .map(|p| binomial(order, p) * hq[order - p] * mom[p])
            .sum();
        mom[order] = pref * rhs / (1.0 - 2f64.powi(-(order as i32)));
    }
    mom
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `c_n(m) = int x^m s(x - n) dx` for `n` in `translations`, so that
/// `sum_n c_n(m) s(x - n) = x^m` for `m < K`.
pub fn reproduction_coeffs(
    fp: &FilterPair,
    m: usize,
    translations: Range<i64>,
) -> Result<Vec<f64>> {
    if m >= fp.order() {
        return Err(Error::InsufficientVanishingMoments {
            degree: m,
            order: fp.order(),
        });
    }
    let mom = moment_table(fp, m);
    Ok(translations
        .map(|n| {
            (0..=m)
                .map(|p| binomial(m, p) * (n as f64).powi((m - p) as i32) * mom[p])
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::make_filters;

    const SQRT3: f64 = 1.732_050_807_568_877_2;

    #[test]
    fn order_two_integer_values() {
        let fp = make_filters(2).unwrap();
        let s = integer_values(&fp).unwrap();
        assert_eq!(s.values().len(), 4);
        assert_eq!(s.at(0), 0.0);
        assert_eq!(s.at(3), 0.0);
        assert!((s.at(1) - (1.0 + SQRT3) / 2.0).abs() < 1e-12);
        assert!((s.at(2) - (1.0 - SQRT3) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_three_integer_sum() {
        let fp = make_filters(3).unwrap();
        let s = integer_values(&fp).unwrap();
        assert!((s.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_haar_is_degenerate() {
        let r = 1.0 / std::f64::consts::SQRT_2;
        let fp = FilterPair::from_lowpass(vec![0.0, r, r, 0.0]).unwrap();
        assert!(matches!(
            integer_values(&fp),
            Err(Error::DegenerateRefinement { .. })
        ));
    }

    #[test]
    fn first_refinement_step() {
        let fp = make_filters(2).unwrap();
        let s1 = scaling_samples(&fp, 1).unwrap();
        assert!((s1.at(1) - (2.0 + SQRT3) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn haar_is_indicator() {
        let fp = make_filters(1).unwrap();
        let s = scaling_samples(&fp, 6).unwrap();
        let n = s.values().len();
        assert!(s.values()[..n - 1].iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(s.values()[n - 1], 0.0);
    }

    #[test]
    fn refinement_keeps_coarse_values() {
        let fp = make_filters(4).unwrap();
        let coarse = scaling_samples(&fp, 3).unwrap();
        let fine = refine(&fp, &coarse, 6);
        for (i, &v) in coarse.values().iter().enumerate() {
            assert_eq!(fine.at(i as i64 * 8).to_bits(), v.to_bits());
        }
        assert_eq!(refine(&fp, &fine, 6), fine);
    }

    #[test]
    fn derivative_normalization() {
        let fp = make_filters(3).unwrap();
        let d = derivative_values(&fp).unwrap();
        let first: f64 = d.points().map(|(x, v)| x * v).sum();
        assert!((first + 1.0).abs() < 1e-12);
        assert!(d.values().iter().sum::<f64>().abs() < 1e-10);
        assert!(matches!(
            derivative_values(&make_filters(2).unwrap()),
            Err(Error::NonDifferentiableOrder { order: 2 })
        ));
    }

    #[test]
    fn basis_evaluation() {
        let fp = make_filters(2).unwrap();
        let s0 = integer_values(&fp).unwrap();
        let v = evaluate_basis(&fp, BasisIndex::scaling(0, 5), &s0, Dyadic::integer(6)).unwrap();
        assert!((v - (1.0 + SQRT3) / 2.0).abs() < 1e-12);
        let v = evaluate_basis(&fp, BasisIndex::scaling(3, 0), &s0, Dyadic::new(1, 3)).unwrap();
        assert!((v - 2f64.powf(1.5) * (1.0 + SQRT3) / 2.0).abs() < 1e-12);
        assert!((v - 3.863_703_3).abs() < 1e-7);
        assert!(matches!(
            evaluate_basis(&fp, BasisIndex::scaling(0, 0), &s0, Dyadic::new(1, 1)),
            Err(Error::InsufficientResolution { .. })
        ));
    }

    #[test]
    fn haar_wavelet_values() {
        let fp = make_filters(1).unwrap();
        let s = scaling_samples(&fp, 1).unwrap();
        let w = |x| evaluate_basis(&fp, BasisIndex::wavelet(0, 0), &s, x).unwrap();
        assert!((w(Dyadic::new(1, 2)) - 1.0).abs() < 1e-15);
        assert!((w(Dyadic::new(3, 2)) + 1.0).abs() < 1e-15);
        assert_eq!(w(Dyadic::integer(2)), 0.0);
    }

    #[test]
    fn moment_values() {
        assert_eq!(moments(&make_filters(5).unwrap(), 0), 1.0);
        assert!((moments(&make_filters(1).unwrap(), 1) - 0.5).abs() < 1e-15);
        assert!((moments(&make_filters(2).unwrap(), 1) - (3.0 - SQRT3) / 2.0).abs() < 1e-14);
        // Haar: <x^2> = 1/3
        assert!((moments(&make_filters(1).unwrap(), 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn reproduction_coefficient_rules() {
        let fp = make_filters(3).unwrap();
        let c0 = reproduction_coeffs(&fp, 0, -3..4).unwrap();
        assert!(c0.iter().all(|&c| c == 1.0));
        let mu = moments(&fp, 1);
        let c1 = reproduction_coeffs(&fp, 1, -3..4).unwrap();
        for (n, c) in (-3..4).zip(c1) {
            assert!((c - (n as f64 + mu)).abs() < 1e-13);
        }
        assert!(matches!(
            reproduction_coeffs(&fp, 3, 0..1),
            Err(Error::InsufficientVanishingMoments { .. })
        ));
    }
}
