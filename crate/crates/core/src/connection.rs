//! Overlap integrals of scaling functions and their derivatives.
//!
//! ```text
//! D^k_{mn}            = int d/dx s^k_m(x) d/dx s^k_n(x) dx
//! Gamma^k_{n1 ... nm} = int s^k_{n1}(x) ... s^k_{nm}(x) dx
//! ```
//!
//! Both depend only on index differences, so a tensor is stored as a map from
//! offset tuples `(n2 - n1, ..., nm - n1)` to values.
//!
//! # Fixed-point systems
//!
//! Substituting `s(x - n) = sqrt(2) sum_l h_l s(2x - 2n - l)` into every
//! factor and changing variables `u = 2x - l1` gives
//!
//! ```text
//! Gamma^0_{0,n2..nm} = 2^{(m-2)/2} sum_{l1..lm} h_l1 ... h_lm
//!                      Gamma^0_{0, 2n2+l2-l1, ..., 2nm+lm-l1}
//! D^0_{0,n}          = 4 sum_{l1,l2} h_l1 h_l2 D^0_{0, 2n+l2-l1}
//! ```
//!
//! (the derivative picks up `2 sqrt 2` per factor from `s'(x) = 2 sqrt(2)
//! sum_l h_l s'(2x - l)`, and `1/2` from `dx`). Each is a homogeneous system
//! with eigenvalue 1. Because the integrands are symmetric under permuting the
//! factors, the unknowns are reduced to multisets of translations anchored at
//! 0, which keeps the systems at a few hundred unknowns for K <= 5.
//!
//! Normalizations follow from the partition of unity applied to all but one
//! factor (`sum over offsets of Gamma = 1`) and, for `D`, from differentiating
//! the reproduction `x^2 = sum_n c_n(2) s(x - n)` twice, multiplying by `s(x)`
//! and integrating by parts: `sum_n n^2 D^0_{0n} = -2`.
//!
//! # Scaling
//!
//! `s^k_n(x) = 2^{k/2} s(2^k x - n)` gives `Gamma^k = 2^{k(m-2)/2} Gamma^0`
//! and, with one extra `2^k` per derivative, `D^k = 4^k D^0`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::FilterPair;
use crate::linalg::{eigenvector_with_normalization, FixedPointError};
use crate::scaling::{derivative_samples, scaling_samples, DyadicSamples};

/// Version written into and required from coefficient files.
pub const FORMAT_VERSION: u32 = 1;

/// Power of two gained by `D` per unit of scale, `D^k = 2^{exponent k} D^0`.
pub const DERIVATIVE_SCALE_EXPONENT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TensorKind {
    /// `D_{mn}`, overlaps of first derivatives.
    Derivative,
    /// `Gamma` with the given number of factors (2, 3 or 4).
    Gamma(u8),
}

impl TensorKind {
    /// Number of factors in the integrand.
    pub fn points(self) -> usize {
        match self {
            TensorKind::Derivative => 2,
            TensorKind::Gamma(m) => m as usize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TensorKind::Derivative => "d",
            TensorKind::Gamma(2) => "gamma2",
            TensorKind::Gamma(3) => "gamma3",
            TensorKind::Gamma(4) => "gamma4",
            TensorKind::Gamma(_) => "gamma",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "d" | "derivative" => Ok(TensorKind::Derivative),
            "gamma2" => Ok(TensorKind::Gamma(2)),
            "gamma3" => Ok(TensorKind::Gamma(3)),
            "gamma4" => Ok(TensorKind::Gamma(4)),
            other => Err(Error::Parse(format!("unknown tensor kind '{other}'"))),
        }
    }

    /// Exponent `e` with `T^k = 2^{e k / 2} T^0`.
    fn half_scale_exponent(self) -> i32 {
        match self {
            TensorKind::Derivative => 2 * DERIVATIVE_SCALE_EXPONENT,
            TensorKind::Gamma(m) => m as i32 - 2,
        }
    }
}

/// Offsets of the second and later indices relative to the first.
pub type Offsets = Vec<i32>;

/// Scale-tagged, translation-invariant overlap tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTensor {
    kind: TensorKind,
    order: usize,
    scale: i32,
    entries: BTreeMap<Offsets, f64>,
}

impl CoeffTensor {
    /// Build from raw entries and check every invariant.
    pub fn from_entries(
        kind: TensorKind,
        order: usize,
        scale: i32,
        entries: BTreeMap<Offsets, f64>,
    ) -> Result<Self> {
        let t = Self {
            kind,
            order,
            scale,
            entries,
        };
        t.check_shape().map_err(Error::Parse)?;
        t.validate().map_err(Error::CorruptTable)?;
        Ok(t)
    }

    pub fn kind(&self) -> TensorKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn scale(&self) -> i32 {
        self.scale
    }

    pub fn support_radius(&self) -> i32 {
        2 * self.order as i32 - 2
    }

    pub fn entries(&self) -> &BTreeMap<Offsets, f64> {
        &self.entries
    }

    /// Value at the given offsets, zero when absent.
    pub fn get(&self, offsets: &[i32]) -> f64 {
        self.entries.get(offsets).copied().unwrap_or(0.0)
    }

    /// Value for absolute indices `(n1, ..., nm)`.
    pub fn at(&self, indices: &[i64]) -> f64 {
        let first = indices[0];
        let offsets: Offsets = indices[1..].iter().map(|&n| (n - first) as i32).collect();
        self.get(&offsets)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Entries periodized on an `n`-site ring: for the two-index kinds,
    /// `P(d) = sum_t T(d + t n)` for `d = 0..n`.
    pub fn periodized_row(&self, n: usize) -> Vec<f64> {
        assert_eq!(
            self.kind.points(),
            2,
            "periodized_row needs a two-index tensor"
        );
        let mut row = vec![0.0; n];
        for (off, v) in &self.entries {
            row[off[0].rem_euclid(n as i32) as usize] += v;
        }
        row
    }

    /// Dense circulant matrix of a two-index tensor on an `n`-site ring.
    pub fn periodized_matrix(&self, n: usize) -> DMatrix<f64> {
        let row = self.periodized_row(n);
        DMatrix::from_fn(n, n, |i, j| row[(j + n - i) % n])
    }

    /// Four-index tensor periodized on an `n`-site ring, as a dense `n^4`
    /// array indexed `((a n + b) n + c) n + d`.
    pub fn periodized_dense4(&self, n: usize) -> Vec<f64> {
        assert_eq!(
            self.kind.points(),
            4,
            "periodized_dense4 needs a four-index tensor"
        );
        let mut out = vec![0.0; n * n * n * n];
        for (off, v) in &self.entries {
            let wrap = |o: i32| o.rem_euclid(n as i32) as usize;
            let (b, c, d) = (wrap(off[0]), wrap(off[1]), wrap(off[2]));
            for a in 0..n {
                let idx = ((a * n + (a + b) % n) * n + (a + c) % n) * n + (a + d) % n;
                out[idx] += v;
            }
        }
        out
    }

    fn check_shape(&self) -> std::result::Result<(), String> {
        let arity = self.kind.points() - 1;
        if let TensorKind::Gamma(m) = self.kind {
            if !(2..=4).contains(&m) {
                return Err(format!("unsupported gamma arity {m}"));
            }
        }
        let r = self.support_radius();
        for off in self.entries.keys() {
            if off.len() != arity {
                return Err(format!(
                    "offset {off:?} has {} indices, expected {arity}",
                    off.len()
                ));
            }
            let hi = off.iter().copied().fold(0, i32::max);
            let lo = off.iter().copied().fold(0, i32::min);
            if hi - lo > r {
                return Err(format!("offset {off:?} exceeds support radius {r}"));
            }
        }
        Ok(())
    }

    /// Check symmetry and sum rules.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let scale_factor =
            2f64.powf(self.kind.half_scale_exponent() as f64 * self.scale as f64 / 2.0);
        let mag = self.max_abs().max(scale_factor).max(1.0);
        for (off, &v) in &self.entries {
            if !v.is_finite() {
                return Err(format!("non-finite entry at {off:?}"));
            }
            let mut points = vec![0i32];
            points.extend_from_slice(off);
            for perm in permutations(points.len()) {
                let base = points[perm[0]];
                let key: Offsets = perm[1..].iter().map(|&i| points[i] - base).collect();
                let w = self.get(&key);
                if (w - v).abs() > 1e-12 * mag {
                    return Err(format!(
                        "entry {off:?} = {v:e} but permuted entry {key:?} = {w:e}"
                    ));
                }
            }
        }
        match self.kind {
            TensorKind::Derivative => {
                let total: f64 = self.entries.values().sum();
                if total.abs() > 1e-10 * mag {
                    return Err(format!("sum_n D_0n = {total:e}, expected 0"));
                }
                let n = 4 * (self.support_radius() as usize + 1);
                let row = self.periodized_row(n);
                for j in 0..n {
                    let lam: f64 = row
                        .iter()
                        .enumerate()
                        .map(|(d, v)| {
                            v * (2.0 * std::f64::consts::PI * (j * d) as f64 / n as f64).cos()
                        })
                        .sum();
                    if lam < -1e-10 * mag {
                        return Err(format!("circulant eigenvalue {lam:e} < 0"));
                    }
                }
            }
            TensorKind::Gamma(2) => {
                for (off, &v) in &self.entries {
                    let expect = if off[0] == 0 { 1.0 } else { 0.0 };
                    if (v - expect).abs() > 1e-10 {
                        return Err(format!("Gamma2 entry at {off:?} = {v:e}"));
                    }
                }
            }
            TensorKind::Gamma(_) => {
                // Partition of unity on all factors but the first two.
                let mut sums: BTreeMap<i32, f64> = BTreeMap::new();
                for (off, v) in &self.entries {
                    *sums.entry(off[0]).or_default() += v;
                }
                for n2 in -self.support_radius()..=self.support_radius() {
                    let s = sums.get(&n2).copied().unwrap_or(0.0);
                    let expect = if n2 == 0 { scale_factor } else { 0.0 };
                    if (s - expect).abs() > 1e-10 * mag {
                        return Err(format!("sum rule at n2 = {n2}: {s:e}, expected {expect:e}"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Canonical class of an anchored point set: sorted, re-based to its
/// minimum, leading zero dropped. `None` when the span exceeds `radius`.
fn canonical(offsets: &[i32], radius: i32) -> Option<Offsets> {
    let mut points = Vec::with_capacity(offsets.len() + 1);
    points.push(0);
    points.extend_from_slice(offsets);
    points.sort_unstable();
    let lo = points[0];
    if points[points.len() - 1] - lo > radius {
        return None;
    }
    Some(points[1..].iter().map(|p| p - lo).collect())
}

/// All offset tuples in `[-r, r]^arity` with span at most `r`, in
/// lexicographic order.
fn full_offsets(arity: usize, r: i32) -> Vec<Offsets> {
    let mut out = Vec::new();
    let mut cur = vec![-r; arity];
    loop {
        if canonical(&cur, r).is_some() {
            out.push(cur.clone());
        }
        let mut i = arity;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < r {
                cur[i] += 1;
                for c in cur.iter_mut().skip(i + 1) {
                    *c = -r;
                }
                break;
            }
        }
    }
}

struct ReducedSystem {
    classes: Vec<Offsets>,
    full: Vec<(Offsets, usize)>,
    matrix: DMatrix<f64>,
}

/// Assemble the fixed-point map on permutation classes.
fn reduced_system(fp: &FilterPair, points: usize, prefactor: f64) -> ReducedSystem {
    let r = 2 * fp.order() as i32 - 2;
    let arity = points - 1;
    let full: Vec<Offsets> = full_offsets(arity, r);
    let mut classes: Vec<Offsets> = full
        .iter()
        .filter_map(|o| canonical(o, r))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    classes.sort();
    let index: HashMap<Offsets, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    let full: Vec<(Offsets, usize)> = full
        .into_iter()
        .map(|o| {
            let c = index[&canonical(&o, r).expect("filtered")];
            (o, c)
        })
        .collect();

    let h = fp.h();
    let taps = h.len();
    let n_classes = classes.len();
    let mut matrix = DMatrix::<f64>::zeros(n_classes, n_classes);
    let mut ls = vec![0usize; points];
    let mut target = vec![0i32; arity];
    for (row, class) in classes.iter().enumerate() {
        ls.iter_mut().for_each(|l| *l = 0);
        'outer: loop {
            let weight: f64 = prefactor * ls.iter().map(|&l| h[l]).product::<f64>();
            if weight != 0.0 {
                let l1 = ls[0] as i32;
                for i in 0..arity {
                    target[i] = 2 * class[i] + ls[i + 1] as i32 - l1;
                }
                if let Some(c) = canonical(&target, r) {
                    matrix[(row, index[&c])] += weight;
                }
            }
            let mut i = points;
            loop {
                if i == 0 {
                    break 'outer;
                }
                i -= 1;
                ls[i] += 1;
                if ls[i] < taps {
                    break;
                }
                ls[i] = 0;
            }
        }
    }
    ReducedSystem {
        classes,
        full,
        matrix,
    }
}

fn fixed_point_error(e: FixedPointError) -> Error {
    match e {
        FixedPointError::Multiplicity(m) => {
            Error::DegenerateFixedPoint(format!("eigenvalue-1 null space has dimension {m}"))
        }
        FixedPointError::Unnormalizable => {
            Error::DegenerateFixedPoint("normalization vanishes on the fixed point".into())
        }
        FixedPointError::Residual(r) => {
            Error::DegenerateFixedPoint(format!("fixed-point residual {r:e} too large"))
        }
    }
}

/// Scale-0 `Gamma` tensor with `m` factors.
pub fn gamma_tensor(fp: &FilterPair, m: usize) -> Result<CoeffTensor> {
    if !(2..=4).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "gamma tensors have 2, 3 or 4 factors, got {m}"
        )));
    }
    let kind = TensorKind::Gamma(m as u8);
    if m == 2 {
        let mut entries = BTreeMap::new();
        for d in -(2 * fp.order() as i32 - 2)..=(2 * fp.order() as i32 - 2) {
            entries.insert(vec![d], if d == 0 { 1.0 } else { 0.0 });
        }
        return Ok(CoeffTensor {
            kind,
            order: fp.order(),
            scale: 0,
            entries,
        });
    }
    let prefactor = 2f64.powf((m as f64 - 2.0) / 2.0);
    let sys = reduced_system(fp, m, prefactor);
    // sum over all offsets of Gamma^0 = 1
    let mut normal = DVector::<f64>::zeros(sys.classes.len());
    for (_, c) in &sys.full {
        normal[*c] += 1.0;
    }
    let sol = eigenvector_with_normalization(&sys.matrix, 1.0, &normal, 1.0)
        .map_err(fixed_point_error)?;
    let entries = sys.full.iter().map(|(o, c)| (o.clone(), sol[*c])).collect();
    Ok(CoeffTensor {
        kind,
        order: fp.order(),
        scale: 0,
        entries,
    })
}

/// Scale-0 derivative overlaps `D^0_{0n}`.
pub fn derivative_overlaps(fp: &FilterPair) -> Result<CoeffTensor> {
    if fp.order() < 3 {
        return Err(Error::NonDifferentiableOrder { order: fp.order() });
    }
    let sys = reduced_system(fp, 2, 4.0);
    // sum_n n^2 D_0n = -2
    let mut normal = DVector::<f64>::zeros(sys.classes.len());
    for (o, c) in &sys.full {
        normal[*c] += (o[0] as f64).powi(2);
    }
    let sol = eigenvector_with_normalization(&sys.matrix, 1.0, &normal, -2.0)
        .map_err(fixed_point_error)?;
    let entries = sys.full.iter().map(|(o, c)| (o.clone(), sol[*c])).collect();
    Ok(CoeffTensor {
        kind: TensorKind::Derivative,
        order: fp.order(),
        scale: 0,
        entries,
    })
}

/// Apply the full (unreduced) recursion map once and return the largest
/// deviation from the input tensor. Only meaningful at scale 0.
pub fn fixed_point_residual(t: &CoeffTensor, fp: &FilterPair) -> f64 {
    let points = t.kind.points();
    let prefactor = match t.kind {
        TensorKind::Derivative => 4.0,
        TensorKind::Gamma(m) => 2f64.powf((m as f64 - 2.0) / 2.0),
    };
    let h = fp.h();
    let taps = h.len();
    let mut worst = 0.0f64;
    let mut ls = vec![0usize; points];
    let mut target = vec![0i32; points - 1];
    for (off, &value) in &t.entries {
        ls.iter_mut().for_each(|l| *l = 0);
        let mut acc = 0.0;
        'outer: loop {
            let l1 = ls[0] as i32;
            for i in 0..points - 1 {
                target[i] = 2 * off[i] + ls[i + 1] as i32 - l1;
            }
            let v = t.get(&target);
            if v != 0.0 {
                acc += ls.iter().map(|&l| h[l]).product::<f64>() * v;
            }
            let mut i = points;
            loop {
                if i == 0 {
                    break 'outer;
                }
                i -= 1;
                ls[i] += 1;
                if ls[i] < taps {
                    break;
                }
                ls[i] = 0;
            }
        }
        worst = worst.max((prefactor * acc - value).abs());
    }
    worst
}

/// Scale-0 tensor to scale `k`.
pub fn rescale_tensor(t: &CoeffTensor, k: i32) -> Result<CoeffTensor> {
    if t.scale != 0 {
        return Err(Error::AlreadyScaled { scale: t.scale });
    }
    let factor = 2f64.powf(t.kind.half_scale_exponent() as f64 * k as f64 / 2.0);
    Ok(CoeffTensor {
        kind: t.kind,
        order: t.order,
        scale: k,
        entries: t
            .entries
            .iter()
            .map(|(o, v)| (o.clone(), v * factor))
            .collect(),
    })
}

/// One factor of a quadrature integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factor {
    pub translation: i64,
    pub derivative: bool,
}

impl Factor {
    pub fn value(translation: i64) -> Self {
        Self {
            translation,
            derivative: false,
        }
    }

    pub fn derivative(translation: i64) -> Self {
        Self {
            translation,
            derivative: true,
        }
    }
}

/// `int x^power prod_i f_i(x) dx` where each `f_i` is `s^k_{n_i}` or its
/// derivative at a common scale `k >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrand {
    pub scale: i32,
    pub factors: Vec<Factor>,
    pub power: u32,
}

impl Integrand {
    pub fn new(scale: i32, factors: Vec<Factor>) -> Self {
        Self {
            scale,
            factors,
            power: 0,
        }
    }

    pub fn with_power(mut self, power: u32) -> Self {
        self.power = power;
        self
    }
}

/// Maximum refinement level accepted by the oracle.
pub const MAX_ORACLE_LEVEL: u32 = 16;

/// Independent quadrature of overlap integrals on refined samples.
///
/// The integral is evaluated on the grid `x_i = i / 2^{level+k}`, where every
/// factor `s(2^k x - n)` lands exactly on a level-`level` sample. Integrands
/// vanish at both ends of their common support, so the trapezoid rule
/// reduces to a plain sum (for Haar this also matches the right-open
/// convention). The error decays like `2^{-level alpha}`, with `alpha` set by
/// the Hoelder regularity of the factors.
pub struct QuadratureOracle {
    order: usize,
    level: u32,
    values: DyadicSamples,
    derivatives: Option<DyadicSamples>,
}

impl QuadratureOracle {
    pub fn new(fp: &FilterPair, level: u32, with_derivatives: bool) -> Result<Self> {
        if level > MAX_ORACLE_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "oracle level {level} exceeds {MAX_ORACLE_LEVEL}"
            )));
        }
        let derivatives = if with_derivatives {
            Some(derivative_samples(fp, level)?)
        } else {
            None
        };
        Ok(Self {
            order: fp.order(),
            level,
            values: scaling_samples(fp, level)?,
            derivatives,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Quadrature at `self.level()` with the leading geometric error term
    /// removed: the plain sums `S_L` converge like `S + C rho^L` (the sums obey
    /// the same refinement recursion as the integrals), so one Aitken step over
    /// levels `L-2, L-1, L` is applied. Falls back to `S_L` when the sequence
    /// has already converged or is not monotone geometric.
    pub fn integrate(&self, integrand: &Integrand) -> Result<f64> {
        let top = self.integrate_raw(integrand, self.level)?;
        if self.level < 2 {
            return Ok(top);
        }
        let mid = self.integrate_raw(integrand, self.level - 1)?;
        let low = self.integrate_raw(integrand, self.level - 2)?;
        let d1 = mid - low;
        let d2 = top - mid;
        let curvature = d2 - d1;
        let scale = top.abs().max(1.0);
        if d2.abs() < 1e-15 * scale || curvature == 0.0 {
            return Ok(top);
        }
        let ratio = d2 / d1;
        if !(0.0..0.95).contains(&ratio) {
            return Ok(top);
        }
        Ok(top - d2 * d2 / curvature)
    }

    /// Plain trapezoid sum on the level-`level` grid (`level <= self.level()`).
    pub fn integrate_raw(&self, integrand: &Integrand, level: u32) -> Result<f64> {
        if level > self.level {
            return Err(Error::InvalidParameter(format!(
                "oracle holds samples up to level {}, asked for {level}",
                self.level
            )));
        }
        if integrand.factors.is_empty() || integrand.factors.len() > 4 {
            return Err(Error::InvalidParameter(format!(
                "integrand needs 1 to 4 factors, got {}",
                integrand.factors.len()
            )));
        }
        if integrand.scale < 0 {
            return Err(Error::InvalidParameter("oracle scale must be >= 0".into()));
        }
        let k = integrand.scale as u32;
        let needs_derivative = integrand.factors.iter().any(|f| f.derivative);
        let derivatives = match (&self.derivatives, needs_derivative) {
            (_, false) => None,
            (Some(d), true) => Some(d),
            (None, true) => {
                return Err(if self.order < 3 {
                    Error::NonDifferentiableOrder { order: self.order }
                } else {
                    Error::InvalidParameter("oracle built without derivative samples".into())
                })
            }
        };
        let support = 2 * self.order as i64 - 1;
        let lo_n = integrand
            .factors
            .iter()
            .map(|f| f.translation)
            .max()
            .unwrap();
        let hi_n = integrand
            .factors
            .iter()
            .map(|f| f.translation)
            .min()
            .unwrap()
            + support;
        if hi_n <= lo_n {
            return Ok(0.0);
        }
        let res = 1i64 << level;
        let stride = 1i64 << (self.level - level);
        let amplitude: f64 = integrand
            .factors
            .iter()
            .map(|f| {
                2f64.powf(k as f64 / 2.0)
                    * if f.derivative {
                        2f64.powi(k as i32)
                    } else {
                        1.0
                    }
            })
            .product();
        let dx = 1.0 / ((res as f64) * 2f64.powi(k as i32));
        let mut acc = 0.0;
        // i indexes the level-`level` grid of the scaled variable 2^k x
        for i in lo_n * res..hi_n * res {
            let mut prod = 1.0;
            for f in &integrand.factors {
                let idx = (i - f.translation * res) * stride;
                let v = if f.derivative {
                    derivatives.expect("checked").at(idx)
                } else {
                    self.values.at(idx)
                };
                prod *= v;
                if prod == 0.0 {
                    break;
                }
            }
            if prod != 0.0 && integrand.power > 0 {
                prod *= (i as f64 * dx).powi(integrand.power as i32);
            }
            acc += prod;
        }
        Ok(acc * amplitude * dx)
    }

    /// Oracle value of a tensor entry given by its offsets, at the tensor's
    /// scale.
    pub fn tensor_entry(&self, kind: TensorKind, scale: i32, offsets: &[i32]) -> Result<f64> {
        let derivative = kind == TensorKind::Derivative;
        let mut factors = vec![Factor {
            translation: 0,
            derivative,
        }];
        factors.extend(offsets.iter().map(|&o| Factor {
            translation: o as i64,
            derivative,
        }));
        self.integrate(&Integrand::new(scale, factors))
    }

    /// Largest deviation between a tensor and the oracle over all of its
    /// distinct entries.
    pub fn max_deviation(&self, t: &CoeffTensor) -> Result<f64> {
        let r = t.support_radius();
        let mut seen = std::collections::BTreeSet::new();
        let mut worst = 0.0f64;
        for (off, &v) in t.entries() {
            let class = canonical(off, r).unwrap_or_else(|| off.clone());
            if !seen.insert(class) {
                continue;
            }
            let q = self.tensor_entry(t.kind(), t.scale(), off)?;
            worst = worst.max((q - v).abs());
        }
        Ok(worst)
    }
}

/// One-shot convenience wrapper around [`QuadratureOracle`].
pub fn quadrature_oracle(fp: &FilterPair, integrand: &Integrand, level: u32) -> Result<f64> {
    let needs_derivative = integrand.factors.iter().any(|f| f.derivative);
    if needs_derivative && fp.order() < 3 {
        return Err(Error::NonDifferentiableOrder { order: fp.order() });
    }
    QuadratureOracle::new(fp, level, needs_derivative)?.integrate(integrand)
}

/// Measure the per-scale exponent of `D` directly: `log2(D^1_00 / D^0_00)`
/// with both sides from the oracle.
pub fn measured_derivative_exponent(fp: &FilterPair, level: u32) -> Result<f64> {
    let oracle = QuadratureOracle::new(fp, level, true)?;
    let d0 = oracle.tensor_entry(TensorKind::Derivative, 0, &[0])?;
    let d1 = oracle.tensor_entry(TensorKind::Derivative, 1, &[0])?;
    Ok((d1 / d0).log2())
}

/// Serialize in the versioned text format.
pub fn format_tensor(t: &CoeffTensor) -> String {
    let mut s = String::new();
    writeln!(s, "wavefield-coefficients").unwrap();
    writeln!(s, "format-version {FORMAT_VERSION}").unwrap();
    writeln!(s, "kind {}", t.kind.name()).unwrap();
    writeln!(s, "order {}", t.order).unwrap();
    writeln!(s, "scale {}", t.scale).unwrap();
    writeln!(s, "support_radius {}", t.support_radius()).unwrap();
    writeln!(s, "entries {}", t.entries.len()).unwrap();
    for (off, v) in &t.entries {
        let key: Vec<String> = off.iter().map(|o| o.to_string()).collect();
        writeln!(s, "{} {:.16e}", key.join(","), v).unwrap();
    }
    s
}

/// Parse and re-validate a tensor file's contents.
pub fn parse_tensor(text: &str) -> Result<CoeffTensor> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut next = |what: &str| -> Result<&str> {
        lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {what}")))
    };
    if next("magic")?.trim() != "wavefield-coefficients" {
        return Err(Error::Parse("not a wavefield coefficient file".into()));
    }
    fn field<'a>(line: &'a str, name: &str) -> Result<&'a str> {
        let mut it = line.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(k), Some(v), None) if k == name => Ok(v),
            _ => Err(Error::Parse(format!(
                "expected '{name} <value>', got '{line}'"
            ))),
        }
    }
    fn num<T: std::str::FromStr>(v: &str, name: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::Parse(format!("bad {name} value '{v}'")))
    }
    let version: u32 = num(
        field(next("format-version")?, "format-version")?,
        "format-version",
    )?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported format version {version}"
        )));
    }
    let kind = TensorKind::parse(field(next("kind")?, "kind")?)?;
    let order: usize = num(field(next("order")?, "order")?, "order")?;
    let scale: i32 = num(field(next("scale")?, "scale")?, "scale")?;
    let radius: i32 = num(
        field(next("support_radius")?, "support_radius")?,
        "support_radius",
    )?;
    let count: usize = num(field(next("entries")?, "entries")?, "entries")?;
    if order == 0 || radius != 2 * order as i32 - 2 {
        return Err(Error::Parse(format!(
            "support radius {radius} inconsistent with order {order}"
        )));
    }
    let mut entries = BTreeMap::new();
    for line in lines {
        let mut it = line.split_whitespace();
        let (key, value) = match (it.next(), it.next(), it.next()) {
            (Some(k), Some(v), None) => (k, v),
            _ => return Err(Error::Parse(format!("malformed record '{line}'"))),
        };
        let off: Offsets = key
            .split(',')
            .map(|p| num::<i32>(p, "offset"))
            .collect::<Result<_>>()?;
        let value: f64 = num(value, "entry")?;
        if entries.insert(off, value).is_some() {
            return Err(Error::Parse(format!("duplicate record '{key}'")));
        }
    }
    if entries.len() != count {
        return Err(Error::Parse(format!(
            "header announces {count} entries, found {}",
            entries.len()
        )));
    }
    CoeffTensor::from_entries(kind, order, scale, entries)
}

/// Write atomically: the table goes to a temporary file in the target
/// directory and is renamed into place.
pub fn save_tensor(t: &CoeffTensor, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(format_tensor(t).as_bytes())
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<CoeffTensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tensor(&text)
}

/// File name used by the coefficient cache for `(kind, K, scale)`.
pub fn cache_file_name(kind: TensorKind, order: usize, scale: i32) -> String {
    format!("{}-K{order}-s{scale}-v{FORMAT_VERSION}.coef", kind.name())
}

/// Load `(kind, K, scale)` from `dir`, computing and storing it on a miss.
pub fn cached_tensor(
    dir: &Path,
    fp: &FilterPair,
    kind: TensorKind,
    scale: i32,
) -> Result<CoeffTensor> {
    let path = dir.join(cache_file_name(kind, fp.order(), scale));
    if path.exists() {
        if let Ok(t) = load_tensor(&path) {
            if t.kind == kind && t.order == fp.order() && t.scale == scale {
                return Ok(t);
            }
        }
    }
    let base = compute_tensor(fp, kind)?;
    let t = if scale == 0 {
        base
    } else {
        rescale_tensor(&base, scale)?
    };
    save_tensor(&t, &path)?;
    Ok(t)
}

/// Scale-0 tensor of the given kind.
pub fn compute_tensor(fp: &FilterPair, kind: TensorKind) -> Result<CoeffTensor> {
    match kind {
        TensorKind::Derivative => derivative_overlaps(fp),
        TensorKind::Gamma(m) => gamma_tensor(fp, m as usize),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::make_filters;

    #[test]
    fn haar_gamma4() {
        let fp = make_filters(1).unwrap();
        let t = gamma_tensor(&fp, 4).unwrap();
        assert_eq!(t.entries().len(), 1);
        assert!((t.get(&[0, 0, 0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gamma2_is_delta() {
        for k in 1..=4 {
            let t = gamma_tensor(&make_filters(k).unwrap(), 2).unwrap();
            for (off, v) in t.entries() {
                assert_eq!(*v, if off[0] == 0 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn gamma3_sum_rule_order_two() {
        let fp = make_filters(2).unwrap();
        let t = gamma_tensor(&fp, 3).unwrap();
        for n2 in -2..=2 {
            let s: f64 = (-4..=4).map(|n3| t.get(&[n2, n3])).sum();
            let expect = if n2 == 0 { 1.0 } else { 0.0 };
            assert!((s - expect).abs() < 1e-10, "n2={n2}: {s}");
        }
        assert!(fixed_point_residual(&t, &fp) < 1e-12);
    }

    #[test]
    fn derivative_rules_order_three() {
        let fp = make_filters(3).unwrap();
        let d = derivative_overlaps(&fp).unwrap();
        for n in 1..=4 {
            assert_eq!(d.get(&[n]), d.get(&[-n]));
        }
        let total: f64 = d.entries().values().sum();
        assert!(total.abs() < 1e-10);
        let second: f64 = d
            .entries()
            .iter()
            .map(|(o, v)| (o[0] as f64).powi(2) * v)
            .sum();
        assert!((second + 2.0).abs() < 1e-12);
        assert!(fixed_point_residual(&d, &fp) < 1e-12);
        assert!(matches!(
            derivative_overlaps(&make_filters(2).unwrap()),
            Err(Error::NonDifferentiableOrder { order: 2 })
        ));
    }

    #[test]
    fn rescaling() {
        let fp = make_filters(2).unwrap();
        let g4 = gamma_tensor(&fp, 4).unwrap();
        let g4k = rescale_tensor(&g4, 1).unwrap();
        for (o, v) in g4.entries() {
            assert_eq!(g4k.get(o), 2.0 * v);
        }
        let g2 = gamma_tensor(&fp, 2).unwrap();
        assert_eq!(rescale_tensor(&g2, 3).unwrap().entries(), g2.entries());
        assert!(matches!(
            rescale_tensor(&g4k, 1),
            Err(Error::AlreadyScaled { scale: 1 })
        ));
    }

    #[test]
    fn oracle_simple_integrals() {
        let haar = make_filters(1).unwrap();
        let one =
            quadrature_oracle(&haar, &Integrand::new(0, vec![Factor::value(0); 2]), 10).unwrap();
        assert!((one - 1.0).abs() < 1e-12);

        let fp = make_filters(2).unwrap();
        let overlap = quadrature_oracle(
            &fp,
            &Integrand::new(0, vec![Factor::value(0), Factor::value(1)]),
            12,
        )
        .unwrap();
        assert!(overlap.abs() < 1e-4);
        let first = quadrature_oracle(
            &fp,
            &Integrand::new(0, vec![Factor::value(0)]).with_power(1),
            12,
        )
        .unwrap();
        assert!((first - (3.0 - 3f64.sqrt()) / 2.0).abs() < 1e-6);
        assert!(matches!(
            quadrature_oracle(&fp, &Integrand::new(0, vec![Factor::derivative(0)]), 8),
            Err(Error::NonDifferentiableOrder { .. })
        ));
    }

    #[test]
    fn format_round_trip_is_bit_exact() {
        let fp = make_filters(2).unwrap();
        let t = gamma_tensor(&fp, 3).unwrap();
        let back = parse_tensor(&format_tensor(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn broken_symmetry_is_corrupt() {
        let fp = make_filters(2).unwrap();
        let t = gamma_tensor(&fp, 3).unwrap();
        let text = format_tensor(&t);
        let line = text.lines().find(|l| l.starts_with("0,1 ")).unwrap();
        let edited = text.replace(line, "0,1 1.0000000000000000e-1");
        assert!(matches!(parse_tensor(&edited), Err(Error::CorruptTable(_))));
    }

    #[test]
    fn wrong_order_is_parse_error() {
        let fp = make_filters(2).unwrap();
        let text = format_tensor(&gamma_tensor(&fp, 3).unwrap()).replace("order 2", "order 3");
        assert!(matches!(parse_tensor(&text), Err(Error::Parse(_))));
        assert!(matches!(parse_tensor("garbage"), Err(Error::Parse(_))));
    }

    #[test]
    fn periodized_derivative_row_sums_to_zero() {
        let fp = make_filters(3).unwrap();
        let d = derivative_overlaps(&fp).unwrap();
        let one = d.periodized_row(1);
        assert!(one[0].abs() < 1e-10);
        let m = d.periodized_matrix(8);
        assert!((m.clone() - m.transpose()).amax() == 0.0);
    }
}
