//! Kernel-level checks: partition of unity, the projector onto the scale-k
//! resolution space, and the truncated equal-time commutator pairing.
//!
//! All functions work on the grid `x_i = i / 2^j` over a window `[0, W]` in
//! scale-0 units. Scaling functions are sampled exactly at level `j - k`, so
//! `s^k_n(x_i) = 2^{k/2} s((i - n 2^{j-k}) / 2^{j-k})` needs no interpolation.
//! Smearing integrals `c_n = ∫ s^k_n f` use the level-`j` Riemann sum, which
//! coincides with the trapezoid rule because `s` vanishes at both ends of its
//! support for `K >= 2`. Its error falls geometrically with `j`.

use crate::error::{Error, Result};
use crate::filters::FilterPair;
use crate::scaling::{scaling_samples, DyadicSamples};

/// Largest grid refinement `j - k` accepted by a probe.
pub const MAX_RELATIVE_LEVEL: u32 = 18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `x^d`.
    Poly(u32),
    /// `exp(-(x - center)² / (2 width²))`, both in scale-0 units.
    Gauss { center: f64, width: f64 },
    /// The scale-k wavelet translate whose support starts nearest the window
    /// centre.
    Wavelet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelProbe {
    fp: FilterPair,
    scale: i32,
    level: u32,
    window: u32,
    samples: DyadicSamples,
    wavelet: Vec<f64>,
}

impl KernelProbe {
    /// `scale = k >= 0`, grid level `j >= k + 4`, window `[0, window]`.
    pub fn new(fp: &FilterPair, scale: i32, level: u32, window: u32) -> Result<Self> {
        if scale < 0 {
            return Err(Error::InvalidParameter(format!(
                "scale {scale} must be >= 0"
            )));
        }
        let rel = level as i64 - scale as i64;
        if rel < 4 || rel > MAX_RELATIVE_LEVEL as i64 {
            return Err(Error::InvalidParameter(format!(
                "grid level {level} must lie in [k+4, k+{MAX_RELATIVE_LEVEL}] for k = {scale}"
            )));
        }
        let support = fp.support() as f64 / 2f64.powi(scale);
        if (window as f64) < 4.0 * support {
            return Err(Error::InvalidParameter(format!(
                "window {window} is too small for support {support}"
            )));
        }
        let samples = scaling_samples(fp, rel as u32)?;
        let r = 1i64 << rel;
        let wavelet = (0..samples.values().len() as i64)
            .map(|i| {
                std::f64::consts::SQRT_2
                    * fp.g()
                        .iter()
                        .enumerate()
                        .map(|(l, &gl)| gl * samples.at(2 * i - l as i64 * r))
                        .sum::<f64>()
            })
            .collect();
        Ok(Self {
            fp: fp.clone(),
            scale,
            level,
            window,
            samples,
            wavelet,
        })
    }

    pub fn order(&self) -> usize {
        self.fp.order()
    }

    pub fn scale(&self) -> i32 {
        self.scale
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    /// Grid points per scale-k lattice unit.
    fn ratio(&self) -> i64 {
        1i64 << (self.level as i64 - self.scale as i64)
    }

    fn amplitude(&self) -> f64 {
        2f64.powf(self.scale as f64 / 2.0)
    }

    fn dx(&self) -> f64 {
        1.0 / 2f64.powi(self.level as i32)
    }

    /// Support length of `s^k_n` in grid steps.
    fn support_steps(&self) -> i64 {
        self.fp.support() as i64 * self.ratio()
    }

    /// Last grid index of the window.
    fn last(&self) -> i64 {
        self.window as i64 * (1i64 << self.level)
    }

    /// Margin kept clear at each window edge, `2(2K-1)` lattice units.
    fn margin_steps(&self) -> i64 {
        2 * self.support_steps()
    }

    /// `s^k_n(x_i)`.
    pub fn basis_at(&self, n: i64, i: i64) -> f64 {
        self.amplitude() * self.samples.at(i - n * self.ratio())
    }

    /// `K^k(x_i, x_l) = Σ_n s^k_n(x_i) s^k_n(x_l)`.
    pub fn kernel(&self, i: i64, l: i64) -> f64 {
        let (lo, hi) = self.translations_at(i);
        (lo..=hi)
            .map(|n| self.basis_at(n, i) * self.basis_at(n, l))
            .sum()
    }

    /// Translations whose support contains `x_i`.
    fn translations_at(&self, i: i64) -> (i64, i64) {
        let r = self.ratio();
        let hi = i.div_euclid(r);
        let lo = (i - self.support_steps()).div_euclid(r) + 1;
        (lo, hi)
    }

    /// Translations whose support meets the window.
    fn translation_range(&self) -> (i64, i64) {
        (1 - self.fp.support() as i64, self.last() / self.ratio())
    }

    fn wavelet_translation(&self) -> i64 {
        (self.last() / 2) / self.ratio()
    }

    fn eval(&self, f: &TestFunction, i: i64) -> f64 {
        let x = i as f64 * self.dx();
        match *f {
            TestFunction::Poly(d) => x.powi(d as i32),
            TestFunction::Gauss { center, width } => {
                let u = (x - center) / width;
                (-0.5 * u * u).exp()
            }
            TestFunction::Wavelet => {
                let j = i - self.wavelet_translation() * self.ratio();
                if j < 0 {
                    0.0
                } else {
                    self.amplitude() * self.wavelet.get(j as usize).copied().unwrap_or(0.0)
                }
            }
        }
    }

    /// Reject decaying test functions that are not negligible in the edge
    /// margins.
    fn check_window(&self, f: &TestFunction) -> Result<()> {
        if let TestFunction::Poly(_) = f {
            return Ok(());
        }
        let m = self.margin_steps();
        if 2 * m >= self.last() {
            return Err(Error::Windowing(format!(
                "window {} leaves no interior for margin {}",
                self.window,
                m as f64 * self.dx()
            )));
        }
        let peak = (0..=self.last())
            .map(|i| self.eval(f, i).abs())
            .fold(0.0, f64::max);
        let edge = (0..=m)
            .chain(self.last() - m..=self.last())
            .map(|i| self.eval(f, i).abs())
            .fold(0.0, f64::max);
        if edge > 1e-12 * peak {
            return Err(Error::Windowing(format!(
                "|f| reaches {edge:e} within {} of the window edge (peak {peak:e})",
                m as f64 * self.dx()
            )));
        }
        Ok(())
    }

    /// `c_n = ∫ s^k_n f` for every translation meeting the window.
    /// Polynomials are integrated over the full support; decaying functions
    /// are taken as zero outside the window.
    fn coefficients(&self, f: &TestFunction) -> Vec<f64> {
        let (lo, hi) = self.translation_range();
        let r = self.ratio();
        let dx = self.dx();
        let global = matches!(f, TestFunction::Poly(_));
        (lo..=hi)
            .map(|n| {
                let start = n * r;
                let end = start + self.support_steps();
                let (a, b) = if global {
                    (start, end)
                } else {
                    (start.max(0), end.min(self.last()))
                };
                (a..=b)
                    .map(|i| self.basis_at(n, i) * self.eval(f, i))
                    .sum::<f64>()
                    * dx
            })
            .collect()
    }

    fn synthesize(&self, coeffs: &[f64], i: i64) -> f64 {
        let (lo, _) = self.translation_range();
        let (a, b) = self.translations_at(i);
        (a..=b)
            .map(|n| {
                let c = coeffs.get((n - lo) as usize).copied().unwrap_or(0.0);
                c * self.basis_at(n, i)
            })
            .sum()
    }

    fn interior(&self) -> std::ops::RangeInclusive<i64> {
        self.margin_steps()..=self.last() - self.margin_steps()
    }
}

/// `max |2^{-k/2} Σ_n s^k_n(x) - 1|` over one period of the grid.
pub fn partition_check(probe: &KernelProbe) -> f64 {
    let r = probe.ratio();
    (0..r)
        .map(|i| {
            let (lo, hi) = probe.translations_at(i);
            let sum: f64 = (lo..=hi).map(|n| probe.samples.at(i - n * r)).sum();
            (sum - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Discrete `L²` norm of `P_k f - f` over the window interior.
pub fn kernel_projection_error(probe: &KernelProbe, f: &TestFunction) -> Result<f64> {
    probe.check_window(f)?;
    let c = probe.coefficients(f);
    let sum: f64 = probe
        .interior()
        .map(|i| {
            let d = probe.synthesize(&c, i) - probe.eval(f, i);
            d * d
        })
        .sum();
    Ok((sum * probe.dx()).sqrt())
}

/// `|P_k(P_k f) - P_k f|` over the window interior, for decaying `f`.
pub fn idempotence_error(probe: &KernelProbe, f: &TestFunction) -> Result<f64> {
    if let TestFunction::Poly(_) = f {
        return Err(Error::InvalidParameter(
            "idempotence needs a decaying test function".into(),
        ));
    }
    probe.check_window(f)?;
    let c = probe.coefficients(f);
    let pf: Vec<f64> = (0..=probe.last())
        .map(|i| probe.synthesize(&c, i))
        .collect();
    let (lo, hi) = probe.translation_range();
    let r = probe.ratio();
    let c2: Vec<f64> = (lo..=hi)
        .map(|n| {
            let a = (n * r).max(0);
            let b = (n * r + probe.support_steps()).min(probe.last());
            (a..=b)
                .map(|i| probe.basis_at(n, i) * pf[i as usize])
                .sum::<f64>()
                * probe.dx()
        })
        .collect();
    let sum: f64 = probe
        .interior()
        .map(|i| {
            let d = probe.synthesize(&c2, i) - pf[i as usize];
            d * d
        })
        .sum();
    Ok((sum * probe.dx()).sqrt())
}

/// `|∫∫ f(x) K^k(x, y) g(y) - ∫ f g|` with `f` restricted to the window and
/// `g` on the whole line, i.e. `|∫_W f (P_k g - g)|`.
pub fn commutator_residual(probe: &KernelProbe, f: &TestFunction, g: &TestFunction) -> Result<f64> {
    probe.check_window(f)?;
    probe.check_window(g)?;
    let c = probe.coefficients(g);
    let sum: f64 = (0..=probe.last())
        .map(|i| probe.eval(f, i) * (probe.synthesize(&c, i) - probe.eval(g, i)))
        .sum();
    Ok((sum * probe.dx()).abs())
}

/// `(x_i, f(x_i), P_k f(x_i))` at every `stride`-th grid point of the window.
pub fn projection_samples(
    probe: &KernelProbe,
    f: &TestFunction,
    stride: usize,
) -> Result<Vec<[f64; 3]>> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    probe.check_window(f)?;
    let c = probe.coefficients(f);
    Ok((0..=probe.last())
        .step_by(stride)
        .map(|i| {
            [
                i as f64 * probe.dx(),
                probe.eval(f, i),
                probe.synthesize(&c, i),
            ]
        })
        .collect())
}

/// `max_n |∫ s^k_n f|`; zero up to quadrature error for the wavelet probe.
pub fn max_coefficient(probe: &KernelProbe, f: &TestFunction) -> Result<f64> {
    probe.check_window(f)?;
    Ok(probe
        .coefficients(f)
        .iter()
        .fold(0.0, |a, c| a.max(c.abs())))
}

/// `∫_W f²` at grid accuracy.
pub fn norm_squared(probe: &KernelProbe, f: &TestFunction) -> f64 {
    (0..=probe.last())
        .map(|i| probe.eval(f, i).powi(2))
        .sum::<f64>()
        * probe.dx()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::make_filters;

    fn probe(order: usize, k: i32, j: u32, w: u32) -> KernelProbe {
        KernelProbe::new(&make_filters(order).unwrap(), k, j, w).unwrap()
    }

    #[test]
    fn partition_of_unity() {
        assert!(partition_check(&probe(2, 0, 10, 16)) < 1e-10);
        assert!(partition_check(&probe(3, 2, 10, 16)) < 1e-10);
        // Haar tiles exactly; refined samples carry one rounding of sqrt(2) * h
        for k in 0..3 {
            assert!(partition_check(&probe(1, k, 8, 16)) <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn probe_validation() {
        let fp = make_filters(2).unwrap();
        assert!(KernelProbe::new(&fp, 2, 5, 32).is_err());
        assert!(KernelProbe::new(&fp, 0, 10, 2).is_err());
        assert!(KernelProbe::new(&fp, -1, 10, 16).is_err());
    }

    #[test]
    fn low_degree_polynomials_are_reproduced() {
        let p = probe(3, 0, 14, 24);
        let e = kernel_projection_error(&p, &TestFunction::Poly(2)).unwrap();
        assert!(e < 1e-8, "{e}");
        let p = probe(2, 0, 14, 24);
        let e = kernel_projection_error(&p, &TestFunction::Poly(2)).unwrap();
        assert!(e > 1e-3, "{e}");
    }

    #[test]
    fn kernel_is_symmetric() {
        let p = probe(3, 1, 8, 16);
        for (i, l) in [(300, 310), (512, 700), (17, 40)] {
            assert_eq!(p.kernel(i, l), p.kernel(l, i));
        }
    }

    #[test]
    fn windowing_is_enforced() {
        let p = probe(2, 0, 8, 32);
        let wide = TestFunction::Gauss {
            center: 16.0,
            width: 8.0,
        };
        assert!(matches!(
            kernel_projection_error(&p, &wide),
            Err(Error::Windowing(_))
        ));
        let off_centre = TestFunction::Gauss {
            center: 2.0,
            width: 1.0,
        };
        assert!(matches!(
            commutator_residual(&p, &off_centre, &off_centre),
            Err(Error::Windowing(_))
        ));
    }

    #[test]
    fn wavelet_is_annihilated() {
        let p = probe(3, 1, 15, 32);
        let w = TestFunction::Wavelet;
        assert!(max_coefficient(&p, &w).unwrap() < 1e-8);
        let r = commutator_residual(&p, &w, &w).unwrap();
        assert!((r - norm_squared(&p, &w)).abs() < 1e-8);
        assert!((norm_squared(&p, &w) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_projection_is_idempotent() {
        let p = probe(3, 1, 12, 64);
        let g = TestFunction::Gauss {
            center: 32.0,
            width: 3.0,
        };
        assert!(idempotence_error(&p, &g).unwrap() < 1e-8);
    }

    #[test]
    fn projection_samples_track_the_gaussian() {
        let p = probe(3, 2, 10, 32);
        let f = TestFunction::Gauss {
            center: 16.0,
            width: 1.5,
        };
        let pts = projection_samples(&p, &f, 64).unwrap();
        assert_eq!(pts.len(), 32 * 1024 / 64 + 1);
        assert_eq!(pts[0][0], 0.0);
        let worst = pts.iter().fold(0.0f64, |a, q| a.max((q[1] - q[2]).abs()));
        assert!(worst < 1e-3, "{worst}");
        assert!(projection_samples(&p, &f, 0).is_err());
    }
}
