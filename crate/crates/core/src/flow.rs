//! Scale splitting of coefficient tensors and the SRG matrix flow.
//!
//! One wavelet stage `W` maps fine scaling coefficients at scale `k+1` to
//! coarse scaling and detail coefficients at scale `k`. Conjugating the
//! periodized overlap tensors by `W` gives the `H_s + H_w + H_sw` block
//! structure. The flow `dH/dλ = [H, [H, G]]` then drives the blocks apart.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::connection::{CoeffTensor, TensorKind};
use crate::error::{Error, Result};
use crate::filters::FilterPair;
use crate::linalg::symmetric_eigenvalues;
use crate::transform::analysis_matrix;

/// Largest matrix accepted by [`srg_flow`].
pub const MAX_FLOW_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrix {
    pub fine_dim: usize,
    /// Coarse (`h`) rows first, then detail (`g`) rows.
    pub matrix: DMatrix<f64>,
}

impl StageMatrix {
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.fine_dim;
        (&self.matrix * self.matrix.transpose() - DMatrix::identity(n, n)).amax()
    }
}

pub fn stage_matrix(fp: &FilterPair, n: usize) -> Result<StageMatrix> {
    if !n.is_multiple_of(2) || n < fp.len() {
        return Err(Error::Shape(format!(
            "stage matrix needs an even size >= {}, got {n}",
            fp.len()
        )));
    }
    Ok(StageMatrix {
        fine_dim: n,
        matrix: analysis_matrix(fp, n),
    })
}

/// Index pattern of a quartic entry by number of detail indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QuarticBlock {
    Ssss,
    Sssw,
    Ssww,
    Swww,
    Wwww,
}

impl QuarticBlock {
    pub const ALL: [QuarticBlock; 5] = [
        QuarticBlock::Ssss,
        QuarticBlock::Sssw,
        QuarticBlock::Ssww,
        QuarticBlock::Swww,
        QuarticBlock::Wwww,
    ];

    pub fn from_detail_count(count: usize) -> Self {
        Self::ALL[count]
    }

    pub fn name(self) -> &'static str {
        match self {
            QuarticBlock::Ssss => "ssss",
            QuarticBlock::Sssw => "sssw",
            QuarticBlock::Ssww => "ssww",
            QuarticBlock::Swww => "swww",
            QuarticBlock::Wwww => "wwww",
        }
    }
}

/// Transformed tensors. Indices `0..N/2` are coarse, `N/2..N` detail.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTensors {
    pub half: usize,
    pub ss: DMatrix<f64>,
    pub sw: DMatrix<f64>,
    pub ws: DMatrix<f64>,
    pub ww: DMatrix<f64>,
    /// Nonzero quartic entries per block, keyed by combined indices.
    pub quartic: BTreeMap<QuarticBlock, BTreeMap<[usize; 4], f64>>,
}

impl SplitTensors {
    /// The full transformed quadratic matrix.
    pub fn quadratic(&self) -> DMatrix<f64> {
        let h = self.half;
        let mut m = DMatrix::zeros(2 * h, 2 * h);
        m.view_mut((0, 0), (h, h)).copy_from(&self.ss);
        m.view_mut((0, h), (h, h)).copy_from(&self.sw);
        m.view_mut((h, 0), (h, h)).copy_from(&self.ws);
        m.view_mut((h, h), (h, h)).copy_from(&self.ww);
        m
    }

    /// The ssss block as a dense `(N/2)^4` array in the layout of
    /// [`CoeffTensor::periodized_dense4`].
    pub fn ssss_dense(&self) -> Vec<f64> {
        let h = self.half;
        let mut out = vec![0.0; h * h * h * h];
        if let Some(block) = self.quartic.get(&QuarticBlock::Ssss) {
            for (&[a, b, c, d], &v) in block {
                out[((a * h + b) * h + c) * h + d] = v;
            }
        }
        out
    }

    /// Kernel `½ (W (D + μ²) Wᵀ)` of the free field energy in the split
    /// basis; partition at `N/2`.
    pub fn two_scale_matrix(&self, mass_squared: f64) -> DMatrix<f64> {
        let n = 2 * self.half;
        (self.quadratic() + DMatrix::identity(n, n) * mass_squared) * 0.5
    }
}

/// Contract index `axis` of a dense `n^4` tensor with the rows of `w`.
fn contract_axis(t: &[f64], w: &DMatrix<f64>, n: usize, axis: usize) -> Vec<f64> {
    let stride = n.pow(3 - axis as u32);
    let mut out = vec![0.0; t.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let i = (idx / stride) % n;
        let base = idx - i * stride;
        *o = (0..n).map(|j| w[(i, j)] * t[base + j * stride]).sum();
    }
    out
}

pub fn split_tensors(
    d_fine: &CoeffTensor,
    g4_fine: &CoeffTensor,
    fp: &FilterPair,
    n: usize,
) -> Result<SplitTensors> {
    if d_fine.kind() != TensorKind::Derivative || g4_fine.kind() != TensorKind::Gamma(4) {
        return Err(Error::InvalidParameter(
            "split_tensors needs a d tensor and a gamma4 tensor".into(),
        ));
    }
    for t in [d_fine, g4_fine] {
        if t.order() != fp.order() {
            return Err(Error::OrderMismatch {
                tensor: t.order(),
                config: fp.order(),
            });
        }
    }
    if d_fine.scale() != g4_fine.scale() {
        return Err(Error::ScaleMismatch {
            tensor: g4_fine.scale(),
            config: d_fine.scale(),
        });
    }
    let w = stage_matrix(fp, n)?.matrix;
    let half = n / 2;

    let t = &w * d_fine.periodized_matrix(n) * w.transpose();
    let ss = t.view((0, 0), (half, half)).into_owned();
    let sw = t.view((0, half), (half, half)).into_owned();
    let ws = sw.transpose();
    let ww = t.view((half, half), (half, half)).into_owned();

    let mut g = g4_fine.periodized_dense4(n);
    for axis in 0..4 {
        g = contract_axis(&g, &w, n, axis);
    }
    let mut quartic: BTreeMap<QuarticBlock, BTreeMap<[usize; 4], f64>> = QuarticBlock::ALL
        .iter()
        .map(|&b| (b, BTreeMap::new()))
        .collect();
    for (idx, &v) in g.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let key = [
            idx / (n * n * n),
            (idx / (n * n)) % n,
            (idx / n) % n,
            idx % n,
        ];
        let details = key.iter().filter(|&&i| i >= half).count();
        quartic
            .get_mut(&QuarticBlock::from_detail_count(details))
            .unwrap()
            .insert(key, v);
    }
    Ok(SplitTensors {
        half,
        ss,
        sw,
        ws,
        ww,
        quartic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `G = diag(H)`.
    WegnerDiagonal,
    /// `G` = block-diagonal part of `H` for blocks `[0, p)` and `[p, n)`.
    WegnerBlock { partition: usize },
}

impl Generator {
    fn generator(self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let n = h.nrows();
        DMatrix::from_fn(n, n, |i, j| {
            if self.same_block(i, j) {
                h[(i, j)]
            } else {
                0.0
            }
        })
    }

    fn same_block(self, i: usize, j: usize) -> bool {
        match self {
            Generator::WegnerDiagonal => i == j,
            Generator::WegnerBlock { partition } => (i < partition) == (j < partition),
        }
    }

    /// Frobenius norm of the part of `h` the flow removes.
    pub fn off_norm(self, h: &DMatrix<f64>) -> f64 {
        let n = h.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if !self.same_block(i, j) {
                    s += h[(i, j)] * h[(i, j)];
                }
            }
        }
        s.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub lambda: f64,
    pub h: DMatrix<f64>,
    pub generator: Generator,
}

impl FlowState {
    pub fn new(h: DMatrix<f64>, generator: Generator) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::Shape(format!("flow matrix is {}x{}", n, h.ncols())));
        }
        if n > MAX_FLOW_DIM {
            return Err(Error::Shape(format!(
                "flow matrix size {n} exceeds {MAX_FLOW_DIM}"
            )));
        }
        if let Generator::WegnerBlock { partition } = generator {
            if partition > n {
                return Err(Error::Shape(format!(
                    "partition {partition} exceeds size {n}"
                )));
            }
        }
        let scale = h.amax().max(1.0);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter(
                "flow matrix is not symmetric".into(),
            ));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "flow matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            lambda: 0.0,
            h,
            generator,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub lambda: f64,
    pub offdiag_frobenius: f64,
    /// Largest change of a sorted eigenvalue, relative to the largest
    /// initial eigenvalue magnitude.
    pub max_eigen_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// First trial step; `None` picks `0.1 / |H|_F²`.
    pub initial_step: Option<f64>,
    /// Accepted local error per step, relative to `|H|_F`.
    pub tol: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            initial_step: None,
            tol: 1e-14,
            min_step: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub state: FlowState,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Set when the displayed nesting increased the off-diagonal norm at the
    /// start and the integrator reversed the sign of the right-hand side.
    pub sign_flipped: bool,
}

fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

fn rhs(h: &DMatrix<f64>, g: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    commutator(h, &commutator(h, g)) * sign
}

fn rk4(h: &DMatrix<f64>, g: &DMatrix<f64>, sign: f64, dl: f64) -> DMatrix<f64> {
    let k1 = rhs(h, g, sign);
    let k2 = rhs(&(h + &k1 * (dl / 2.0)), g, sign);
    let k3 = rhs(&(h + &k2 * (dl / 2.0)), g, sign);
    let k4 = rhs(&(h + &k3 * dl), g, sign);
    let mut out = h + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dl / 6.0);
    let t = out.transpose();
    out = (out + t) * 0.5;
    out
}

/// Integrate `dH/dλ = [H, [H, G]]` from `state.lambda` to `lambda_end`.
///
/// Classical RK4 with step doubling. `G` is rebuilt from `H` at the start of
/// each step and held fixed within it. A step is accepted only if its error
/// estimate is within tolerance and the off-diagonal norm did not grow.
pub fn srg_flow(state: &FlowState, lambda_end: f64, control: &StepControl) -> Result<FlowResult> {
    if lambda_end.is_nan() || lambda_end < state.lambda {
        return Err(Error::InvalidParameter(format!(
            "lambda_end {lambda_end} < lambda {}",
            state.lambda
        )));
    }
    let gen = state.generator;
    let initial = symmetric_eigenvalues(&state.h);
    let spectral_scale = initial
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let drift = |h: &DMatrix<f64>| {
        symmetric_eigenvalues(h)
            .iter()
            .zip(&initial)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
            / spectral_scale
    };

    let mut h = state.h.clone();
    let mut lambda = state.lambda;
    let mut off = gen.off_norm(&h);
    let mut trajectory = vec![TrajectoryPoint {
        lambda,
        offdiag_frobenius: off,
        max_eigen_drift: 0.0,
    }];

    // d|H_off|²/dλ = 2 <H_off, F_off> decides the direction
    let g0 = gen.generator(&h);
    let f0 = rhs(&h, &g0, 1.0);
    let n = h.nrows();
    let mut slope = 0.0;
    for i in 0..n {
        for j in 0..n {
            if !gen.same_block(i, j) {
                slope += h[(i, j)] * f0[(i, j)];
            }
        }
    }
    let sign_flipped = slope > 0.0;
    let sign = if sign_flipped { -1.0 } else { 1.0 };

    let norm = h.norm().max(f64::MIN_POSITIVE);
    let mut dl = control.initial_step.unwrap_or(0.1 / (norm * norm));
    let roundoff = 64.0 * f64::EPSILON * norm;
    let mut steps = 0;
    while lambda < lambda_end {
        if steps >= control.max_steps {
            return Err(Error::Stiffness { lambda, trajectory });
        }
        let step = dl.min(lambda_end - lambda);
        let g = gen.generator(&h);
        let full = rk4(&h, &g, sign, step);
        let half = rk4(&rk4(&h, &g, sign, step / 2.0), &g, sign, step / 2.0);
        let err = (&half - &full).norm() / 15.0;
        let new_off = gen.off_norm(&half);
        let ok = err <= control.tol * norm && new_off <= off + roundoff;
        if ok {
            h = half;
            lambda = if step == lambda_end - lambda {
                lambda_end
            } else {
                lambda + step
            };
            off = new_off;
            steps += 1;
            trajectory.push(TrajectoryPoint {
                lambda,
                offdiag_frobenius: off,
                max_eigen_drift: drift(&h),
            });
        }
        let factor = if err == 0.0 {
            2.0
        } else {
            (0.9 * (control.tol * norm / err).powf(0.2)).clamp(0.2, 2.0)
        };
        dl = if ok {
            step * factor
        } else {
            step * factor.min(0.5)
        };
        if dl < control.min_step && lambda < lambda_end {
            return Err(Error::Stiffness { lambda, trajectory });
        }
    }
    Ok(FlowResult {
        state: FlowState {
            lambda,
            h,
            generator: gen,
        },
        trajectory,
        sign_flipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::{derivative_overlaps, gamma_tensor, rescale_tensor};
    use crate::filters::make_filters;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn haar_stage_matrix() {
        let w = stage_matrix(&make_filters(1).unwrap(), 4).unwrap().matrix;
        let r = FRAC_1_SQRT_2;
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                r, r, 0.0, 0.0, 0.0, 0.0, r, r, r, -r, 0.0, 0.0, 0.0, 0.0, r, -r,
            ],
        );
        assert!((w - expect).amax() < 1e-15);
    }

    #[test]
    fn stage_matrix_orthogonal_with_unit_determinant() {
        for k in 1..=5 {
            let s = stage_matrix(&make_filters(k).unwrap(), 16).unwrap();
            assert!(s.orthogonality_error() < 1e-12);
            assert!((s.matrix.determinant().abs() - 1.0).abs() < 1e-10);
        }
        assert!(matches!(
            stage_matrix(&make_filters(3).unwrap(), 4),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            stage_matrix(&make_filters(1).unwrap(), 5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn split_reproduces_coarse_tensors() {
        let fp = make_filters(3).unwrap();
        let d1 = rescale_tensor(&derivative_overlaps(&fp).unwrap(), 1).unwrap();
        let g1 = rescale_tensor(&gamma_tensor(&fp, 4).unwrap(), 1).unwrap();
        let s = split_tensors(&d1, &g1, &fp, 16).unwrap();
        let d0 = derivative_overlaps(&fp).unwrap().periodized_matrix(8);
        assert!((&s.ss - d0).amax() < 1e-10);
        assert_eq!(s.ws, s.sw.transpose());
        assert!((s.quadratic().norm() - d1.periodized_matrix(16).norm()).abs() < 1e-12);
        let g0 = gamma_tensor(&fp, 4).unwrap().periodized_dense4(8);
        let diff = s
            .ssss_dense()
            .iter()
            .zip(&g0)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn haar_quartic_split_has_every_class() {
        let fp = make_filters(1).unwrap();
        let g1 = rescale_tensor(&gamma_tensor(&fp, 4).unwrap(), 1).unwrap();
        // no d tensor exists for Haar; any d-kind tensor of order 1 will do
        let d = CoeffTensor::from_entries(TensorKind::Derivative, 1, 1, [(vec![0], 0.0)].into())
            .unwrap();
        let s = split_tensors(&d, &g1, &fp, 8).unwrap();
        assert!(s.sw.iter().all(|&v| v == 0.0));
        // local overlap of four Haar functions: only the even-detail patterns survive
        assert!(!s.quartic[&QuarticBlock::Ssss].is_empty());
        assert!(!s.quartic[&QuarticBlock::Ssww].is_empty());
        let odd_max = s.quartic[&QuarticBlock::Sssw]
            .values()
            .chain(s.quartic[&QuarticBlock::Swww].values())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(odd_max < 1e-15, "{odd_max}");
    }

    #[test]
    fn diagonal_is_a_fixed_point() {
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 0.5]));
        for gen in [
            Generator::WegnerDiagonal,
            Generator::WegnerBlock { partition: 1 },
        ] {
            let state = FlowState::new(h.clone(), gen).unwrap();
            let out = srg_flow(&state, 10.0, &StepControl::default()).unwrap();
            assert_eq!(out.state.h, h);
            assert!(!out.sign_flipped);
        }
    }

    #[test]
    fn two_level_flow() {
        let eps = 0.1;
        let h = DMatrix::from_row_slice(2, 2, &[1.0, eps, eps, -1.0]);
        let state = FlowState::new(h, Generator::WegnerDiagonal).unwrap();
        let out = srg_flow(&state, 20.0, &StepControl::default()).unwrap();
        let hf = &out.state.h;
        assert!(hf[(0, 1)].abs() < 1e-8, "{}", hf[(0, 1)]);
        let e = (1.0 + eps * eps).sqrt();
        assert!((hf[(0, 0)] - e).abs() < 1e-9 && (hf[(1, 1)] + e).abs() < 1e-9);
        assert!(!out.sign_flipped);
    }

    #[test]
    fn random_flows_are_isospectral() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(16, 16, |_, _| rng.gen_range(-1.0..1.0));
        let h = (&a + a.transpose()) * 0.5;
        for gen in [
            Generator::WegnerDiagonal,
            Generator::WegnerBlock { partition: 8 },
        ] {
            let state = FlowState::new(h.clone(), gen).unwrap();
            let out = srg_flow(&state, 2.0, &StepControl::default()).unwrap();
            let last = out.trajectory.last().unwrap();
            assert!(last.max_eigen_drift < 1e-8);
            assert!((out.state.h.trace() - h.trace()).abs() < 1e-10);
            assert!(
                (out.state.h.norm() - h.norm()).abs() < 1e-10,
                "{} {} steps {}",
                out.state.h.norm(),
                h.norm(),
                out.trajectory.len()
            );
            assert!(out
                .trajectory
                .windows(2)
                .all(|w| w[1].offdiag_frobenius <= w[0].offdiag_frobenius + 1e-12));
            assert!(last.offdiag_frobenius < out.trajectory[0].offdiag_frobenius);
        }
    }

    #[test]
    fn rejects_bad_states() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(FlowState::new(h, Generator::WegnerDiagonal).is_err());
        let big = DMatrix::<f64>::zeros(MAX_FLOW_DIM + 1, MAX_FLOW_DIM + 1);
        assert!(matches!(
            FlowState::new(big, Generator::WegnerDiagonal),
            Err(Error::Shape(_))
        ));
        let ok = FlowState::new(DMatrix::identity(2, 2), Generator::WegnerDiagonal).unwrap();
        assert!(srg_flow(&ok, -1.0, &StepControl::default()).is_err());
    }

    #[test]
    fn tiny_step_floor_reports_stiffness() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -1.0]);
        let state = FlowState::new(h, Generator::WegnerDiagonal).unwrap();
        let control = StepControl {
            tol: 1e-30,
            ..Default::default()
        };
        match srg_flow(&state, 1.0, &control) {
            Err(Error::Stiffness { trajectory, .. }) => assert!(!trajectory.is_empty()),
            other => panic!("{other:?}"),
        }
    }
}
