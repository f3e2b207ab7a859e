//! Truncated φ⁴ Hamiltonian on a cutoff boson Fock space.
//!
//! Each lattice mode `n` carries ladder operators with
//! `Φ_n = (a_n + a_n†)/√(2γ)` and `Π_n = i√(γ/2)(a_n† − a_n)`. The Hamiltonian
//!
//! ```text
//! H = ½ Σ :Π_n²: + ½ Σ D_mn :Φ_m Φ_n: + ½ μ² Σ :Φ_n²: + λ Σ Γ_n1n2n3n4 :Φ_n1 Φ_n2 Φ_n3 Φ_n4:
//! ```
//!
//! is normal ordered with respect to the γ-vacuum: products are expanded in
//! ladder operators, creators moved to the left, and no contraction terms
//! are kept. Translation indices wrap modulo `N`; tensor offsets longer than
//! the ring are summed over all images.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::connection::{CoeffTensor, TensorKind};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeConfig {
    pub order: usize,
    /// Lattice spacing `2^-scale` in scale-0 units.
    pub scale: i32,
    pub modes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub mass_squared: f64,
    pub coupling: f64,
    pub gamma: f64,
}

impl ModelParams {
    /// `gamma` defaults to `√μ²`, which needs `μ² > 0`.
    pub fn new(mass_squared: f64, coupling: f64, gamma: Option<f64>) -> Result<Self> {
        let gamma = match gamma {
            Some(g) => g,
            None if mass_squared > 0.0 => mass_squared.sqrt(),
            None => {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be given explicitly when mass2 = {mass_squared} <= 0"
                )))
            }
        };
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} must be positive"
            )));
        }
        if !mass_squared.is_finite() || !coupling.is_finite() {
            return Err(Error::InvalidParameter("non-finite mass2 or lambda".into()));
        }
        Ok(Self {
            mass_squared,
            coupling,
            gamma,
        })
    }
}

/// Occupation-number basis, lexicographic with mode 0 fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    modes: usize,
    cutoff: usize,
    dim: usize,
}

impl FockBasis {
    pub fn new(modes: usize, cutoff: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter(
                "at least one mode is required".into(),
            ));
        }
        let dim = (cutoff + 1)
            .checked_pow(modes as u32)
            .filter(|&d| d <= u32::MAX as usize)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("({cutoff}+1)^{modes} basis states is too many"))
            })?;
        Ok(Self { modes, cutoff, dim })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index distance between neighbouring occupations of `mode`.
    pub fn stride(&self, mode: usize) -> usize {
        (self.cutoff + 1).pow(mode as u32)
    }

    pub fn occupations(&self, index: usize) -> Vec<usize> {
        let base = self.cutoff + 1;
        let mut rest = index;
        (0..self.modes)
            .map(|_| {
                let n = rest % base;
                rest /= base;
                n
            })
            .collect()
    }

    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes {
            return Err(Error::Shape(format!(
                "{} occupations for {} modes",
                occupations.len(),
                self.modes
            )));
        }
        let mut index = 0;
        for &n in occupations.iter().rev() {
            if n > self.cutoff {
                return Err(Error::Index {
                    index: n,
                    size: self.cutoff + 1,
                });
            }
            index = index * (self.cutoff + 1) + n;
        }
        Ok(index)
    }
}

/// Sparse operator on a [`FockBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub basis: FockBasis,
    pub matrix: CsrMatrix,
}

impl FockOperator {
    /// Number of stored entries connecting states of different total
    /// occupation parity.
    pub fn parity_violations(&self) -> usize {
        let parity = |i| self.basis.occupations(i).iter().sum::<usize>() % 2;
        self.matrix
            .triplets()
            .filter(|&(i, j, v)| v != 0.0 && parity(i) != parity(j))
            .count()
    }

    /// Entries larger than `tol` in magnitude that change the total
    /// occupation, split into those touching a state with some mode at the
    /// cutoff and the rest.
    pub fn number_changing_entries(&self, tol: f64) -> (usize, usize) {
        let total = |i| self.basis.occupations(i).iter().sum::<usize>();
        let at_edge = |i| self.basis.occupations(i).contains(&self.basis.cutoff);
        let mut edge = 0;
        let mut interior = 0;
        for (i, j, v) in self.matrix.triplets() {
            if v.abs() > tol && total(i) != total(j) {
                if at_edge(i) || at_edge(j) {
                    edge += 1;
                } else {
                    interior += 1;
                }
            }
        }
        (edge, interior)
    }

    pub fn expectation(&self, v: &[f64]) -> f64 {
        let mut hv = vec![0.0; v.len()];
        self.matrix.matvec(v, &mut hv);
        v.iter().zip(&hv).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeOperator {
    Annihilate,
    Create,
    Phi,
    /// The real matrix `Π/i`.
    PiOverI,
}

/// Normal-ordered ladder monomial `(creators)(annihilators)` with sorted mode
/// lists.
type Monomial = (Vec<u16>, Vec<u16>);

/// One linear factor: `(mode, is_creator, coefficient)` terms.
type LinearForm = [(u16, bool, f64); 2];

fn phi_form(mode: u16, gamma: f64) -> LinearForm {
    let a = 1.0 / (2.0 * gamma).sqrt();
    [(mode, false, a), (mode, true, a)]
}

fn pi_over_i_form(mode: u16, gamma: f64) -> LinearForm {
    let b = (gamma / 2.0).sqrt();
    [(mode, false, -b), (mode, true, b)]
}

/// Add `coeff * :F_1 ... F_r:` to `terms`.
fn add_normal_ordered(terms: &mut BTreeMap<Monomial, f64>, coeff: f64, factors: &[LinearForm]) {
    if coeff == 0.0 {
        return;
    }
    let r = factors.len();
    for choice in 0..(1usize << r) {
        let mut c = coeff;
        let mut create = Vec::with_capacity(r);
        let mut annihilate = Vec::with_capacity(r);
        for (f, form) in factors.iter().enumerate() {
            let (mode, is_create, v) = form[(choice >> f) & 1];
            c *= v;
            if is_create {
                create.push(mode);
            } else {
                annihilate.push(mode);
            }
        }
        create.sort_unstable();
        annihilate.sort_unstable();
        *terms.entry((create, annihilate)).or_insert(0.0) += c;
    }
}

/// Matrix of a real combination of ladder monomials. With `symmetric`, only
/// the upper triangle is computed and then mirrored.
fn assemble(basis: &FockBasis, terms: &BTreeMap<Monomial, f64>, symmetric: bool) -> CsrMatrix {
    let terms: Vec<(&Monomial, f64)> = terms
        .iter()
        .filter(|(_, &c)| c != 0.0)
        .map(|(m, &c)| (m, c))
        .collect();
    let strides: Vec<usize> = (0..basis.modes()).map(|m| basis.stride(m)).collect();
    let cutoff = basis.cutoff();
    let sqrt: Vec<f64> = (0..=cutoff + 1).map(|n| (n as f64).sqrt()).collect();

    let columns: Vec<Vec<(usize, f64)>> = (0..basis.dim())
        .into_par_iter()
        .map(|col| {
            let occ = basis.occupations(col);
            let mut out: Vec<(usize, f64)> = Vec::new();
            let mut work = occ.clone();
            'term: for ((create, annihilate), c) in &terms {
                work.copy_from_slice(&occ);
                let mut amp = *c;
                let mut row = col;
                for &m in annihilate {
                    let m = m as usize;
                    if work[m] == 0 {
                        continue 'term;
                    }
                    amp *= sqrt[work[m]];
                    work[m] -= 1;
                    row -= strides[m];
                }
                for &m in create {
                    let m = m as usize;
                    if work[m] == cutoff {
                        continue 'term;
                    }
                    work[m] += 1;
                    amp *= sqrt[work[m]];
                    row += strides[m];
                }
                if !symmetric || row <= col {
                    out.push((row, amp));
                }
            }
            out.sort_by_key(|e| e.0);
            out.dedup_by(|later, earlier| {
                if later.0 == earlier.0 {
                    earlier.1 += later.1;
                    true
                } else {
                    false
                }
            });
            out.retain(|e| e.1 != 0.0);
            out
        })
        .collect();

    let mut triplets = Vec::new();
    for (col, entries) in columns.into_iter().enumerate() {
        for (row, v) in entries {
            triplets.push((row, col, v));
            if symmetric && row != col {
                triplets.push((col, row, v));
            }
        }
    }
    CsrMatrix::from_triplets(basis.dim(), triplets)
}

pub fn mode_operator(
    basis: &FockBasis,
    mode: usize,
    which: ModeOperator,
    gamma: f64,
) -> Result<FockOperator> {
    if mode >= basis.modes() {
        return Err(Error::Index {
            index: mode,
            size: basis.modes(),
        });
    }
    let m = mode as u16;
    let mut terms = BTreeMap::new();
    match which {
        ModeOperator::Annihilate => {
            terms.insert((vec![], vec![m]), 1.0);
        }
        ModeOperator::Create => {
            terms.insert((vec![m], vec![]), 1.0);
        }
        ModeOperator::Phi => add_normal_ordered(&mut terms, 1.0, &[phi_form(m, gamma)]),
        ModeOperator::PiOverI => add_normal_ordered(&mut terms, 1.0, &[pi_over_i_form(m, gamma)]),
    }
    Ok(FockOperator {
        basis: *basis,
        matrix: assemble(basis, &terms, false),
    })
}

fn check_tensor(t: &CoeffTensor, kind: TensorKind, cfg: &LatticeConfig) -> Result<()> {
    if t.kind() != kind {
        return Err(Error::InvalidParameter(format!(
            "expected a {} tensor, got {}",
            kind.name(),
            t.kind().name()
        )));
    }
    if t.order() != cfg.order {
        return Err(Error::OrderMismatch {
            tensor: t.order(),
            config: cfg.order,
        });
    }
    if t.scale() != cfg.scale {
        return Err(Error::ScaleMismatch {
            tensor: t.scale(),
            config: cfg.scale,
        });
    }
    Ok(())
}

fn check_basis(cfg: &LatticeConfig, basis: &FockBasis) -> Result<()> {
    if basis.modes() != cfg.modes {
        return Err(Error::Shape(format!(
            "basis has {} modes, lattice has {}",
            basis.modes(),
            cfg.modes
        )));
    }
    Ok(())
}

fn quadratic_terms(
    cfg: &LatticeConfig,
    p: &ModelParams,
    d: &CoeffTensor,
) -> BTreeMap<Monomial, f64> {
    let n = cfg.modes;
    let dp = d.periodized_matrix(n);
    let mut terms = BTreeMap::new();
    for a in 0..n {
        let pa = pi_over_i_form(a as u16, p.gamma);
        // Π² = -(Π/i)²
        add_normal_ordered(&mut terms, -0.5, &[pa, pa]);
        for b in 0..n {
            let q = dp[(a, b)] + if a == b { p.mass_squared } else { 0.0 };
            add_normal_ordered(
                &mut terms,
                0.5 * q,
                &[phi_form(a as u16, p.gamma), phi_form(b as u16, p.gamma)],
            );
        }
    }
    terms
}

fn quartic_terms(cfg: &LatticeConfig, gamma: f64, g4: &CoeffTensor) -> BTreeMap<Monomial, f64> {
    let n = cfg.modes;
    let dense = g4.periodized_dense4(n);
    let mut terms = BTreeMap::new();
    for (idx, &v) in dense.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let modes = [
            idx / (n * n * n),
            (idx / (n * n)) % n,
            (idx / n) % n,
            idx % n,
        ];
        let forms = modes.map(|m| phi_form(m as u16, gamma));
        add_normal_ordered(&mut terms, v, &forms);
    }
    terms
}

/// Assemble `H`. The matrix is built from its upper triangle and mirrored,
/// so it is exactly symmetric.
pub fn build_phi4_hamiltonian(
    cfg: &LatticeConfig,
    p: &ModelParams,
    d: &CoeffTensor,
    g4: &CoeffTensor,
    basis: &FockBasis,
) -> Result<FockOperator> {
    check_tensor(d, TensorKind::Derivative, cfg)?;
    check_tensor(g4, TensorKind::Gamma(4), cfg)?;
    check_basis(cfg, basis)?;
    let mut terms = quadratic_terms(cfg, p, d);
    if p.coupling != 0.0 {
        for (m, c) in quartic_terms(cfg, p.gamma, g4) {
            *terms.entry(m).or_insert(0.0) += p.coupling * c;
        }
    }
    Ok(FockOperator {
        basis: *basis,
        matrix: assemble(basis, &terms, true),
    })
}

/// The quartic operator `V = Σ Γ :ΦΦΦΦ:`, so that `H(λ) = H(0) + λ V`.
pub fn build_interaction(
    cfg: &LatticeConfig,
    gamma: f64,
    g4: &CoeffTensor,
    basis: &FockBasis,
) -> Result<FockOperator> {
    check_tensor(g4, TensorKind::Gamma(4), cfg)?;
    check_basis(cfg, basis)?;
    Ok(FockOperator {
        basis: *basis,
        matrix: assemble(basis, &quartic_terms(cfg, gamma, g4), true),
    })
}

/// Closed-form spectrum of the quadratic part.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeSpectrum {
    /// Normal-mode frequencies, ascending.
    pub frequencies: Vec<f64>,
    pub ground_energy: f64,
}

impl FreeSpectrum {
    /// Lowest `count` levels `E₀ + Σ n_j ω_j` with at most `max_quanta`
    /// quanta in total (untruncated Fock space).
    pub fn levels(&self, max_quanta: usize, count: usize) -> Vec<f64> {
        let mut out = vec![self.ground_energy];
        let mut frontier = vec![(self.ground_energy, 0usize)];
        for _ in 0..max_quanta {
            let mut next = Vec::new();
            for &(e, last) in &frontier {
                // nondecreasing mode index avoids double counting
                for (j, w) in self.frequencies.iter().enumerate().skip(last) {
                    next.push((e + w, j));
                }
            }
            out.extend(next.iter().map(|x| x.0));
            frontier = next;
        }
        out.sort_by(f64::total_cmp);
        out.truncate(count);
        out
    }
}

/// Exact λ = 0 reference: `Ω² = D + μ² I` on the ring, `ω_j = √eig`, and
/// `E₀ = Σ_j [ω_j/2 − (γ + ω_j²/γ)/4]`. The quartic coupling is ignored.
pub fn free_reference_spectrum(
    cfg: &LatticeConfig,
    p: &ModelParams,
    d: &CoeffTensor,
) -> Result<FreeSpectrum> {
    check_tensor(d, TensorKind::Derivative, cfg)?;
    let mut omega2 = d.periodized_matrix(cfg.modes);
    for i in 0..cfg.modes {
        omega2[(i, i)] += p.mass_squared;
    }
    let ev = crate::linalg::symmetric_eigenvalues(&omega2);
    if ev[0] < -1e-10 {
        return Err(Error::Tachyonic(ev[0]));
    }
    let frequencies: Vec<f64> = ev.iter().map(|&e| e.max(0.0).sqrt()).collect();
    let g = p.gamma;
    let ground_energy = frequencies
        .iter()
        .map(|w| w / 2.0 - (g + w * w / g) / 4.0)
        .sum();
    Ok(FreeSpectrum {
        frequencies,
        ground_energy,
    })
}
