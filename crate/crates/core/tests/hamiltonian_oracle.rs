//! The sparse Hamiltonian against a dense construction from Kronecker
//! products of truncated ladder matrices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wavefield_core::connection::{derivative_overlaps, gamma_tensor, rescale_tensor};
use wavefield_core::filters::make_filters;
use wavefield_core::fock::{build_phi4_hamiltonian, FockBasis, LatticeConfig, ModelParams};

fn ladder(cutoff: usize) -> DMatrix<f64> {
    DMatrix::from_fn(cutoff + 1, cutoff + 1, |i, j| {
        if j == i + 1 {
            (j as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// `a_mode` on `modes` sites, mode 0 fastest.
fn site_annihilator(modes: usize, cutoff: usize, mode: usize) -> DMatrix<f64> {
    let id = DMatrix::<f64>::identity(cutoff + 1, cutoff + 1);
    let a = ladder(cutoff);
    let mut out = DMatrix::<f64>::identity(1, 1);
    for m in (0..modes).rev() {
        out = out.kronecker(if m == mode { &a } else { &id });
    }
    out
}

fn dense_hamiltonian(
    modes: usize,
    cutoff: usize,
    p: &ModelParams,
    d: &DMatrix<f64>,
    g4: &[f64],
) -> DMatrix<f64> {
    let a: Vec<DMatrix<f64>> = (0..modes)
        .map(|m| site_annihilator(modes, cutoff, m))
        .collect();
    let ad: Vec<DMatrix<f64>> = a.iter().map(|x| x.transpose()).collect();
    let dim = a[0].nrows();
    let g = p.gamma;
    let alpha2 = 1.0 / (2.0 * g);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for n in 0..modes {
        // :Π²: = -(γ/2)(a†a† - 2a†a + aa)
        h -= (&ad[n] * &ad[n] - 2.0 * &ad[n] * &a[n] + &a[n] * &a[n]) * (0.25 * g);
        for m in 0..modes {
            let q = d[(n, m)] + if n == m { p.mass_squared } else { 0.0 };
            let phiphi = &a[n] * &a[m] + &ad[n] * &ad[m] + &ad[n] * &a[m] + &ad[m] * &a[n];
            h += phiphi * (0.5 * q * alpha2);
        }
    }
    let n = modes;
    for (idx, &v) in g4.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let ix = [
            idx / (n * n * n),
            (idx / (n * n)) % n,
            (idx / n) % n,
            idx % n,
        ];
        for choice in 0..16 {
            let mut creators = DMatrix::<f64>::identity(dim, dim);
            let mut annihilators = DMatrix::<f64>::identity(dim, dim);
            for (f, &mode) in ix.iter().enumerate() {
                if choice >> f & 1 == 1 {
                    creators *= &ad[mode];
                } else {
                    annihilators *= &a[mode];
                }
            }
            h += (creators * annihilators) * (p.coupling * v * alpha2 * alpha2);
        }
    }
    h
}

#[test]
fn sparse_assembly_matches_dense_construction() {
    let fp = make_filters(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (modes, cutoff, scale) in [(2, 3, 0), (3, 2, 1), (1, 4, 0)] {
        let d = rescale_tensor(&derivative_overlaps(&fp).unwrap(), scale).unwrap();
        let g4 = rescale_tensor(&gamma_tensor(&fp, 4).unwrap(), scale).unwrap();
        let cfg = LatticeConfig {
            order: 3,
            scale,
            modes,
        };
        let p = ModelParams::new(
            rng.gen_range(-0.5..2.0),
            rng.gen_range(0.0..1.0),
            Some(rng.gen_range(0.5..3.0)),
        )
        .unwrap();
        let basis = FockBasis::new(modes, cutoff).unwrap();
        let sparse = build_phi4_hamiltonian(&cfg, &p, &d, &g4, &basis).unwrap();
        let dense = dense_hamiltonian(
            modes,
            cutoff,
            &p,
            &d.periodized_matrix(modes),
            &g4.periodized_dense4(modes),
        );
        let scale_ref = dense.amax().max(1.0);
        let err = (sparse.matrix.to_dense() - &dense).amax();
        assert!(err < 1e-12 * scale_ref, "N={modes} nmax={cutoff}: {err}");
    }
}
