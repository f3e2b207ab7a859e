//! Daubechies filter coefficients.
//!
//! The low-pass filter `h` of order `K` has `2K` taps and satisfies
//!
//! ```text
//! sum_n h_n = sqrt(2)
//! sum_n h_n h_{n-2m} = delta_{m0}
//! sum_n n^m (-1)^n h_{2K-1-n} = 0      for 0 <= m < K
//! ```
//!
//! The extremal-phase solution is obtained by spectral factorization of the
//! half-band polynomial `P(y) = sum_{j<K} C(K-1+j, j) y^j`, `y = sin^2(w/2)`,
//! keeping the roots inside the unit disk, followed by one Gauss-Newton
//! correction on the constraint system above.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported order.
pub const MAX_ORDER: usize = 14;

/// Low-pass / high-pass filter pair of a Daubechies-K basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    order: usize,
    h: Vec<f64>,
    g: Vec<f64>,
}

impl FilterPair {
    /// Wrap externally supplied low-pass taps. The high-pass filter is
    /// derived from them; no constraint checking is done here, see
    /// [`constraint_residuals`].
    pub fn from_lowpass(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() || !h.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "low-pass filter needs an even, non-zero number of taps, got {}",
                h.len()
            )));
        }
        let order = h.len() / 2;
        let g = alternating_flip(&h);
        Ok(Self { order, h, g })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of taps, `2K`.
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Support of the scaling function, `2K - 1`.
    pub fn support(&self) -> usize {
        2 * self.order - 1
    }
}

/// Extremal-phase Daubechies filters of order `order`.
pub fn make_filters(order: usize) -> Result<FilterPair> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            order,
            max: MAX_ORDER,
        });
    }
    let mut h = spectral_factor(order);
    gauss_newton_polish(&mut h);
    FilterPair::from_lowpass(h)
}

/// `g_l = (-1)^l h_{2K-1-l}`.
pub fn wavelet_filter(fp: &FilterPair) -> Vec<f64> {
    alternating_flip(&fp.h)
}

fn alternating_flip(h: &[f64]) -> Vec<f64> {
    let last = h.len() - 1;
    (0..h.len())
        .map(|l| {
            if l % 2 == 0 {
                h[last - l]
            } else {
                -h[last - l]
            }
        })
        .collect()
}

/// Residuals of the three constraint families, each reduced to a max-abs value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResiduals {
    pub sum: f64,
    pub orthonormality: f64,
    /// Evaluated in the abscissa `t = 2n/(2K-1) - 1`.
    pub vanishing_moments: f64,
}

pub fn constraint_residuals(fp: &FilterPair) -> ConstraintResiduals {
    let h = &fp.h;
    let k = fp.order;
    let sum = (h.iter().sum::<f64>() - SQRT_2).abs();
    let orthonormality = (0..k)
        .map(|m| (double_shift(h, h, m) - if m == 0 { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    // moments of g against t^m, t = 2n/(2K-1) - 1 in [-1, 1]; same polynomial
    // space as n^m without the (2K)^m growth of the raw terms
    let g = alternating_flip(h);
    let span = (h.len() - 1).max(1) as f64;
    let vanishing_moments = (0..k)
        .map(|m| {
            g.iter()
                .enumerate()
                .map(|(n, &gn)| (2.0 * n as f64 / span - 1.0).powi(m as i32) * gn)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max);
    ConstraintResiduals {
        sum,
        orthonormality,
        vanishing_moments,
    }
}

/// `sum_n a_n b_{n-2m}`.
pub fn double_shift(a: &[f64], b: &[f64], m: usize) -> f64 {
    (2 * m..a.len()).map(|n| a[n] * b[n - 2 * m]).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn spectral_factor(order: usize) -> Vec<f64> {
    // P(y), ascending coefficients.
    let p: Vec<f64> = (0..order).map(|j| binomial(order - 1 + j, j)).collect();
    let y_roots = polynomial_roots(&p);

    // H(z) = (1 + z)^K prod_i (z - z_i), |z_i| < 1, ascending powers of z.
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for _ in 0..order {
        poly = poly_mul(&poly, &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
    }
    for y in y_roots {
        // z + 1/z = 2 - 4y
        let b = Complex64::new(2.0, 0.0) - 4.0 * y;
        let disc = (b * b - 4.0).sqrt();
        let z1 = (b + disc) / 2.0;
        let z2 = (b - disc) / 2.0;
        let z = if z1.norm() < z2.norm() { z1 } else { z2 };
        poly = poly_mul(&poly, &[-z, Complex64::new(1.0, 0.0)]);
    }
    let mut h: Vec<f64> = poly.iter().rev().map(|c| c.re).collect();
    let scale = SQRT_2 / h.iter().sum::<f64>();
    h.iter_mut().for_each(|v| *v *= scale);
    h
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All complex roots of a real polynomial (ascending coefficients) by the
/// Aberth-Ehrlich iteration, each polished with Newton steps.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[degree];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    // Cauchy bound for the initial circle.
    let radius = 1.0 + monic[..degree].iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let mut roots: Vec<Complex64> = (0..degree)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / degree as f64 + 0.4;
            Complex64::from_polar(radius * 0.5, theta)
        })
        .collect();

    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..degree {
            let (p, dp) = poly_eval(&monic, roots[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..degree)
                .filter(|&j| j != i)
                .map(|j| 1.0 / (roots[i] - roots[j]))
                .sum();
            let step = ratio / (1.0 - ratio * repulsion);
            roots[i] -= step;
            max_step = max_step.max(step.norm() / roots[i].norm().max(1.0));
        }
        if max_step < 1e-16 {
            break;
        }
    }
    for root in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = poly_eval(&monic, *root);
            if dp.norm() == 0.0 {
                break;
            }
            *root -= p / dp;
        }
    }
    roots
}

/// One least-squares Newton step on the full constraint system. Moment rows
/// use the rescaled abscissa `x_n = 2n/(2K-1) - 1`, which spans the same
/// polynomial space as `n^m` but keeps the Jacobian well conditioned.
fn gauss_newton_polish(h: &mut [f64]) {
    let taps = h.len();
    let order = taps / 2;
    let rows = 1 + order + order;
    let xs: Vec<f64> = (0..taps)
        .map(|n| {
            if taps == 2 {
                n as f64 - 0.5
            } else {
                2.0 * n as f64 / (taps - 1) as f64 - 1.0
            }
        })
        .collect();

    let mut residual = DVector::<f64>::zeros(rows);
    let mut jac = DMatrix::<f64>::zeros(rows, taps);

    residual[0] = h.iter().sum::<f64>() - SQRT_2;
    for j in 0..taps {
        jac[(0, j)] = 1.0;
    }
    for m in 0..order {
        let row = 1 + m;
        residual[row] = double_shift(h, h, m) - if m == 0 { 1.0 } else { 0.0 };
        for n in 2 * m..taps {
            jac[(row, n)] += h[n - 2 * m];
            jac[(row, n - 2 * m)] += h[n];
        }
    }
    // g_n = (-1)^n h_{taps-1-n}; d/dh_j picks n = taps-1-j.
    for m in 0..order {
        let row = 1 + order + m;
        let mut r = 0.0;
        for n in 0..taps {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let w = xs[n].powi(m as i32) * sign;
            r += w * h[taps - 1 - n];
            jac[(row, taps - 1 - n)] = w;
        }
        residual[row] = r;
    }

    let svd = jac.svd(true, true);
    if let Ok(step) = svd.solve(&residual, 1e-13) {
        for (v, s) in h.iter_mut().zip(step.iter()) {
            *v -= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar() {
        let fp = make_filters(1).unwrap();
        let r = 1.0 / SQRT_2;
        assert_eq!(fp.len(), 2);
        assert!((fp.h()[0] - r).abs() < 1e-15 && (fp.h()[1] - r).abs() < 1e-15);
        assert!((fp.g()[0] - r).abs() < 1e-15 && (fp.g()[1] + r).abs() < 1e-15);
    }

    #[test]
    fn order_two_closed_form() {
        let fp = make_filters(2).unwrap();
        let s3 = 3f64.sqrt();
        let d = 4.0 * SQRT_2;
        let expect = [
            (1.0 + s3) / d,
            (3.0 + s3) / d,
            (3.0 - s3) / d,
            (1.0 - s3) / d,
        ];
        for (a, b) in fp.h().iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        let h = fp.h();
        assert_eq!(fp.g(), &[h[3], -h[2], h[1], -h[0]]);
    }

    #[test]
    fn order_three_matches_tabulated_values() {
        let fp = make_filters(3).unwrap();
        let table = [
            0.332_670_552_950_082_6,
            0.806_891_509_311_092_5,
            0.459_877_502_118_491_5,
            -0.135_011_020_010_254_5,
            -0.085_441_273_882_026_7,
            0.035_226_291_885_709_5,
        ];
        for (a, b) in fp.h().iter().zip(table) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        let r = constraint_residuals(&fp);
        assert!(r.sum < 1e-12 && r.orthonormality < 1e-12 && r.vanishing_moments < 1e-12);
    }

    #[test]
    fn unsupported_orders() {
        assert!(matches!(
            make_filters(0),
            Err(Error::UnsupportedOrder { .. })
        ));
        assert!(matches!(
            make_filters(MAX_ORDER + 1),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn wavelet_filter_is_alternating_flip() {
        let fp = make_filters(4).unwrap();
        let g = wavelet_filter(&fp);
        let h = fp.h();
        for l in 0..8 {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(g[l].to_bits(), (sign * h[7 - l]).to_bits());
        }
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn from_lowpass_rejects_odd_length() {
        assert!(FilterPair::from_lowpass(vec![1.0, 2.0, 3.0]).is_err());
    }
}
