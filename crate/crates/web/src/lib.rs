//! Browser bindings for the wavefield demo page. Every export returns a flat
//! `Float64Array` of fixed-width records.

use wasm_bindgen::prelude::*;

use wavefield_core::connection::{derivative_overlaps, gamma_tensor, rescale_tensor};
use wavefield_core::diagnostics::{projection_samples, KernelProbe, TestFunction};
use wavefield_core::filters::make_filters;
use wavefield_core::flow::{split_tensors, srg_flow, FlowState, Generator, StepControl};
use wavefield_core::scaling::{evaluate_basis, scaling_samples, BasisIndex, Dyadic};
use wavefield_core::Result;

/// Largest grid level offered by the page.
pub const MAX_LEVEL: u32 = 12;
/// Window of the projection demo, in scale-0 units.
pub const PROJECTION_WINDOW: u32 = 32;
/// Points per projection curve.
const PROJECTION_POINTS: u32 = 1024;

/// `(x, s(x))` or `(x, w(x))` pairs on the level-`level` grid.
pub fn basis_points(order: usize, level: u32, wavelet: bool) -> Result<Vec<f64>> {
    let level = level.min(MAX_LEVEL);
    let fp = make_filters(order)?;
    let samples = scaling_samples(&fp, level + 1)?;
    let idx = if wavelet {
        BasisIndex::wavelet(0, 0)
    } else {
        BasisIndex::scaling(0, 0)
    };
    let last = fp.support() as i64 * (1i64 << level);
    let mut out = Vec::with_capacity(2 * last as usize + 2);
    for i in 0..=last {
        let x = Dyadic::new(i, level);
        out.push(x.to_f64());
        out.push(evaluate_basis(&fp, idx, &samples, x)?);
    }
    Ok(out)
}

/// `(x, f(x), P_k f(x))` triples for a gaussian on a fixed window.
pub fn projection_points(order: usize, scale: i32, center: f64, width: f64) -> Result<Vec<f64>> {
    let fp = make_filters(order)?;
    let level = scale.max(0) as u32 + 8;
    let probe = KernelProbe::new(&fp, scale, level, PROJECTION_WINDOW)?;
    let stride = ((PROJECTION_WINDOW << level) / PROJECTION_POINTS).max(1) as usize;
    let pts = projection_samples(&probe, &TestFunction::Gauss { center, width }, stride)?;
    Ok(pts.into_iter().flatten().collect())
}

/// `(lambda, sw-norm, eigenvalue drift)` along the two-scale flow of the free
/// field kernel on `modes` fine sites.
pub fn two_scale_trajectory(
    order: usize,
    modes: usize,
    mass2: f64,
    lambda_end: f64,
) -> Result<Vec<f64>> {
    let fp = make_filters(order)?;
    let split = split_tensors(
        &rescale_tensor(&derivative_overlaps(&fp)?, 1)?,
        &rescale_tensor(&gamma_tensor(&fp, 4)?, 1)?,
        &fp,
        modes,
    )?;
    let generator = Generator::WegnerBlock {
        partition: split.half,
    };
    let state = FlowState::new(split.two_scale_matrix(mass2), generator)?;
    let out = srg_flow(&state, lambda_end, &StepControl::default())?;
    Ok(out
        .trajectory
        .iter()
        .flat_map(|p| [p.lambda, p.offdiag_frobenius, p.max_eigen_drift])
        .collect())
}

fn js(r: Result<Vec<f64>>) -> std::result::Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&format!("{}: {e}", e.name())))
}

#[wasm_bindgen(js_name = basisCurve)]
pub fn basis_curve(
    order: usize,
    level: u32,
    wavelet: bool,
) -> std::result::Result<Vec<f64>, JsError> {
    js(basis_points(order, level, wavelet))
}

#[wasm_bindgen(js_name = projectionCurve)]
pub fn projection_curve(
    order: usize,
    scale: i32,
    center: f64,
    width: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    js(projection_points(order, scale, center, width))
}

#[wasm_bindgen(js_name = flowTrajectory)]
pub fn flow_trajectory(
    order: usize,
    modes: usize,
    mass2: f64,
    lambda_end: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    js(two_scale_trajectory(order, modes, mass2, lambda_end))
}
