//! Brute-force references for small systems: exact propagation by full
//! diagonalization and Schmidt values from a dense SVD of the amplitudes.

use faer::{c64, Mat};

use crate::fock::{FockBasis, SparseMatrix};
use crate::linalg::{hermitian_eigen, singular_values};
use crate::mps::SchmidtSpectrum;
use crate::{Error, Result};

/// Largest Hilbert space the dense eigensolver path accepts by default.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

/// A state vector on a Fock basis.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub basis: FockBasis,
    pub amplitudes: Vec<c64>,
}

impl DenseState {
    /// Normalizes `amplitudes`.
    pub fn new(basis: FockBasis, mut amplitudes: Vec<c64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch);
        }
        let norm = crate::linalg::norm(&amplitudes);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("state has no finite norm".into()));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { basis, amplitudes })
    }

    /// The basis state `occupation`.
    pub fn basis_state(basis: FockBasis, occupation: &[u8]) -> Result<Self> {
        let index = basis.index_of(occupation).ok_or_else(|| {
            Error::InvalidParameter(format!("{occupation:?} is not in the basis"))
        })?;
        let mut amplitudes = vec![c64::new(0.0, 0.0); basis.dim()];
        amplitudes[index] = c64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.amplitudes)
    }

    /// `<psi|H|psi>`.
    pub fn expectation(&self, op: &SparseMatrix) -> c64 {
        crate::linalg::inner(&self.amplitudes, &op.matvec(&self.amplitudes))
    }
}

/// `exp(-iHt)|psi>` through the eigendecomposition of `H`.
pub fn exact_evolve(state: &DenseState, hamiltonian: &SparseMatrix, t: f64) -> Result<DenseState> {
    exact_evolve_capped(state, hamiltonian, t, DEFAULT_DENSE_CAP)
}

pub fn exact_evolve_capped(
    state: &DenseState,
    hamiltonian: &SparseMatrix,
    t: f64,
    cap: usize,
) -> Result<DenseState> {
    let dim = state.basis.dim();
    if dim > cap {
        return Err(Error::SizeCap { size: dim, cap });
    }
    if hamiltonian.dim() != dim {
        return Err(Error::BasisMismatch);
    }
    let (energies, vectors) = hermitian_eigen(hamiltonian.to_dense().as_ref())?;
    let psi = Mat::from_fn(dim, 1, |i, _| state.amplitudes[i]);
    let mut coeffs = vectors.adjoint() * &psi;
    for (k, e) in energies.iter().enumerate() {
        coeffs[(k, 0)] *= c64::cis(-e * t);
    }
    let out = &vectors * &coeffs;
    Ok(DenseState {
        basis: state.basis.clone(),
        amplitudes: (0..dim).map(|i| out[(i, 0)]).collect(),
    })
}

/// Schmidt values across the cut after the first `cut_site` sites (bond
/// `cut_site - 1`). The coefficient matrix is block diagonal in the number of
/// particles on the left, so each block is decomposed separately.
pub fn exact_schmidt(state: &DenseState, cut_site: usize) -> Result<SchmidtSpectrum> {
    let basis = &state.basis;
    if cut_site == 0 || cut_site >= basis.n_sites() {
        return Err(Error::InvalidParameter(format!(
            "cut {cut_site} must split {} sites",
            basis.n_sites()
        )));
    }
    use std::collections::HashMap;
    // per left particle number: row index of each left part, column index of each right part
    let n = basis.n_particles();
    let mut rows: Vec<HashMap<&[u8], usize>> = vec![HashMap::new(); n + 1];
    let mut cols: Vec<HashMap<&[u8], usize>> = vec![HashMap::new(); n + 1];
    let mut entries: Vec<Vec<(usize, usize, c64)>> = vec![Vec::new(); n + 1];
    for (occ, &amp) in basis.states().zip(&state.amplitudes) {
        let (left, right) = occ.split_at(cut_site);
        let q: usize = left.iter().map(|&x| x as usize).sum();
        let next = rows[q].len();
        let r = *rows[q].entry(left).or_insert(next);
        let next = cols[q].len();
        let c = *cols[q].entry(right).or_insert(next);
        entries[q].push((r, c, amp));
    }
    let mut values = Vec::new();
    for q in 0..=n {
        if entries[q].is_empty() {
            continue;
        }
        let mut block = Mat::<c64>::zeros(rows[q].len(), cols[q].len());
        for &(r, c, a) in &entries[q] {
            block[(r, c)] = a;
        }
        values.extend(singular_values(block.as_ref())?);
    }
    values.retain(|&v| v > crate::mps::ZERO_CUTOFF);
    Ok(SchmidtSpectrum::new(cut_site - 1, values))
}

/// `|<a|b>|^2`.
pub fn fidelity(a: &DenseState, b: &DenseState) -> Result<f64> {
    if a.basis != b.basis {
        return Err(Error::BasisMismatch);
    }
    Ok(crate::linalg::inner(&a.amplitudes, &b.amplitudes).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_hamiltonian, Boundary, ModelParams};

    #[test]
    fn zero_time_is_identity() {
        let basis = FockBasis::new(2, 3, 2).unwrap();
        let h = build_hamiltonian(&basis, &ModelParams::new(1.0, 2.0, 0.5), Boundary::Open);
        let psi = DenseState::basis_state(basis, &[1, 0, 1]).unwrap();
        let out = exact_evolve(&psi, &h, 0.0).unwrap();
        assert!((fidelity(&psi, &out).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_hamiltonian_gives_phases() {
        let basis = FockBasis::new(2, 2, 2).unwrap();
        let params = ModelParams { j: 1e-300, u: 1.0, f: 0.3 };
        let h = build_hamiltonian(&basis, &params, Boundary::Open);
        let amps = vec![c64::new(1.0, 0.0); 3];
        let psi = DenseState::new(basis, amps).unwrap();
        let out = exact_evolve(&psi, &h, 2.0).unwrap();
        for k in 0..3 {
            let e = h.get(k, k).re;
            let expected = psi.amplitudes[k] * c64::cis(-2.0 * e);
            assert!((out.amplitudes[k] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn bell_pair_and_product() {
        let basis = FockBasis::new(1, 2, 1).unwrap();
        let bell = DenseState::new(basis.clone(), vec![c64::new(1.0, 0.0); 2]).unwrap();
        let spec = exact_schmidt(&bell, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(spec.values.iter().all(|v| (v - h).abs() < 1e-14));
        let product = DenseState::basis_state(basis, &[1, 0]).unwrap();
        assert_eq!(exact_schmidt(&product, 1).unwrap().values, vec![1.0]);
    }

    #[test]
    fn fidelity_basics() {
        let basis = FockBasis::new(1, 2, 1).unwrap();
        let a = DenseState::basis_state(basis.clone(), &[1, 0]).unwrap();
        let b = DenseState::basis_state(basis.clone(), &[0, 1]).unwrap();
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
        let mut phased = a.clone();
        phased.amplitudes.iter_mut().for_each(|z| *z *= c64::cis(0.7));
        assert!((fidelity(&a, &phased).unwrap() - 1.0).abs() < 1e-15);
        let other = DenseState::basis_state(FockBasis::new(1, 3, 1).unwrap(), &[1, 0, 0]).unwrap();
        assert_eq!(fidelity(&a, &other), Err(Error::BasisMismatch));
    }

    #[test]
    fn size_cap() {
        let basis = FockBasis::new(2, 3, 2).unwrap();
        let h = build_hamiltonian(&basis, &ModelParams::new(1.0, 1.0, 1.0), Boundary::Open);
        let psi = DenseState::basis_state(basis, &[2, 0, 0]).unwrap();
        assert!(matches!(exact_evolve_capped(&psi, &h, 1.0, 3), Err(Error::SizeCap { .. })));
    }
}
