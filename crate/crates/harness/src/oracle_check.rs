//! Cross-validation of the MPS code against dense brute force on small
//! systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbh_core::c64;
use tbh_core::fock::{build_hamiltonian, Boundary, FockBasis, ModelParams};
use tbh_core::mps::MpsState;
use tbh_core::oracle::{exact_evolve, exact_schmidt, fidelity, DenseState};
use tbh_core::tebd::{build_gates, trotter_steps};

use crate::Result;

/// Outcome of one TEBD-versus-exact comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionCheck {
    pub n_particles: usize,
    pub n_sites: usize,
    pub u: f64,
    pub f: f64,
    /// Finest step used.
    pub dt: f64,
    /// `1 - |<tebd(dt)|tebd(dt/2)>|^2` at the final refinement.
    pub self_infidelity: f64,
    pub fidelity: f64,
}

/// Halving stops once two successive step sizes agree this well.
pub const SELF_CONVERGENCE: f64 = 1e-8;
const DT_START: f64 = 0.05;
const DT_MIN: f64 = 1e-4;

fn tebd_state(
    occupation: &[u8],
    params: &ModelParams,
    basis: &FockBasis,
    t: f64,
    dt: f64,
) -> Result<DenseState> {
    let steps = (t / dt).round() as usize;
    let mut state = MpsState::from_product_state(occupation, basis.n_max(), basis.dim())?;
    let gates = build_gates(params, t / steps as f64, basis.n_max(), basis.n_sites())?;
    trotter_steps(&mut state, &gates, steps, false)?;
    Ok(DenseState::new(basis.clone(), state.to_fock_amplitudes(basis)?)?)
}

/// Evolves `occupation` to time `t` by full-rank TEBD, halving the step until
/// successive results agree to [`SELF_CONVERGENCE`], and compares the finer
/// result with exact propagation.
pub fn check_evolution(occupation: &[u8], u: f64, f: f64, t: f64) -> Result<EvolutionCheck> {
    let n_particles: usize = occupation.iter().map(|&n| n as usize).sum();
    let n_sites = occupation.len();
    let basis = FockBasis::new(n_particles, n_sites, n_particles)?;
    let params = ModelParams::new(1.0, u, f);
    let h = build_hamiltonian(&basis, &params, Boundary::Open);
    let exact = exact_evolve(&DenseState::basis_state(basis.clone(), occupation)?, &h, t)?;

    let mut dt = DT_START;
    let mut coarse = tebd_state(occupation, &params, &basis, t, dt)?;
    loop {
        let fine = tebd_state(occupation, &params, &basis, t, dt / 2.0)?;
        let self_infidelity = 1.0 - fidelity(&coarse, &fine)?;
        dt /= 2.0;
        if self_infidelity < SELF_CONVERGENCE || dt / 2.0 < DT_MIN {
            return Ok(EvolutionCheck {
                n_particles,
                n_sites,
                u,
                f,
                dt,
                self_infidelity,
                fidelity: fidelity(&exact, &fine)?,
            });
        }
        coarse = fine;
    }
}

/// Initial states of the standard evolution checks.
pub const EVOLUTION_CASES: [&[u8]; 2] = [&[1, 0, 2, 0], &[0, 2, 1, 0, 1]];
/// `(U/J, F/J)` of the standard evolution checks.
pub const EVOLUTION_POINTS: [(f64, f64); 3] = [(1.0, 1.0), (10.0, 1.0), (1.0, 2.0)];

pub fn evolution_suite(t: f64) -> Result<Vec<EvolutionCheck>> {
    let mut out = Vec::new();
    for occ in EVOLUTION_CASES {
        for (u, f) in EVOLUTION_POINTS {
            out.push(check_evolution(occ, u, f, t)?);
        }
    }
    Ok(out)
}

/// Largest disagreement between MPS and dense Schmidt data over one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SchmidtCheck {
    pub max_value_error: f64,
    pub max_entropy_error: f64,
}

/// A random normalized state with uniformly drawn real and imaginary parts.
pub fn random_state(basis: &FockBasis, rng: &mut ChaCha8Rng) -> Result<DenseState> {
    let amps = (0..basis.dim())
        .map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    Ok(DenseState::new(basis.clone(), amps)?)
}

/// Compares every bond of `state`, padding the shorter spectrum with zeros.
pub fn compare_schmidt(state: &DenseState) -> Result<SchmidtCheck> {
    let basis = &state.basis;
    let mut mps = MpsState::from_fock_amplitudes(basis, &state.amplitudes, basis.dim())?;
    let mut check = SchmidtCheck::default();
    for bond in 0..basis.n_sites() - 1 {
        let ours = mps.schmidt_spectrum(bond)?;
        let exact = exact_schmidt(state, bond + 1)?;
        let len = ours.values.len().max(exact.values.len());
        for a in 0..len {
            let x = ours.values.get(a).copied().unwrap_or(0.0);
            let y = exact.values.get(a).copied().unwrap_or(0.0);
            check.max_value_error = check.max_value_error.max((x - y).abs());
        }
        check.max_entropy_error = check.max_entropy_error.max((ours.entropy() - exact.entropy()).abs());
    }
    Ok(check)
}

/// `count` random states on random small lattices (1-4 particles, 2-6 sites,
/// random cutoff), reduced to the worst errors.
pub fn schmidt_suite(count: usize, seed: u64) -> Result<SchmidtCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = SchmidtCheck::default();
    for _ in 0..count {
        let n = rng.random_range(1..=4usize);
        let m = rng.random_range(2..=6usize);
        let n_max = rng.random_range(n.div_ceil(m).max(1)..=n);
        let basis = FockBasis::new(n, m, n_max)?;
        let state = random_state(&basis, &mut rng)?;
        let c = compare_schmidt(&state)?;
        worst.max_value_error = worst.max_value_error.max(c.max_value_error);
        worst.max_entropy_error = worst.max_entropy_error.max(c.max_entropy_error);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_evolution_matches() {
        let c = check_evolution(&[1, 1, 0], 2.0, 0.5, 0.5).unwrap();
        assert!(c.fidelity > 1.0 - 1e-7, "{c:?}");
    }

    #[test]
    fn few_random_states() {
        let c = schmidt_suite(5, 1).unwrap();
        assert!(c.max_value_error < 1e-10 && c.max_entropy_error < 1e-10, "{c:?}");
    }
}
