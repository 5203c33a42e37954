//! Second-order Trotter evolution of an MPS under the static open-chain
//! Hamiltonian, with observables recorded along the way.
//!
//! The Hamiltonian is split into bond terms
//! `h_{l,l+1} = -J/2 (a+_{l+1} a_l + h.c.) + w_l e_l + w_{l+1} e_{l+1}` with
//! on-site energy `e_l = U/2 n(n-1) + F l n` (sites counted from 1) and weight
//! `w = 1/2`, except that the two end sites have a single bond and get `w = 1`.
//! One step is `A(dt/2) B(dt) A(dt/2)` with `A` the bonds starting at odd sites
//! (first, third, ...) and `B` the rest; consecutive half steps are fused.

use std::io;

use faer::{c64, Mat};

use crate::fock::ModelParams;
use crate::linalg::hermitian_exp;
use crate::mps::{count_above_threshold, MpsState, SchmidtSpectrum, TwoSiteGate};
use crate::{Error, Result};

/// Largest `|1 - <psi|psi>|` tolerated at an observation.
pub const NORM_DRIFT_TOLERANCE: f64 = 0.01;

/// Bond Hamiltonian between sites `bond` and `bond + 1` (0-based) of an
/// `n_sites` chain, as one Hermitian block per total occupation.
pub fn bond_hamiltonian(params: &ModelParams, n_max: usize, n_sites: usize, bond: usize) -> Vec<Mat<c64>> {
    assert!(bond + 1 < n_sites, "bond {bond} outside a chain of {n_sites} sites");
    let onsite = |site: usize, n: usize| {
        let n = n as f64;
        0.5 * params.u * n * (n - 1.0) + params.f * (site + 1) as f64 * n
    };
    let left_weight = if bond == 0 { 1.0 } else { 0.5 };
    let right_weight = if bond + 2 == n_sites { 1.0 } else { 0.5 };
    (0..=2 * n_max)
        .map(|total| {
            let pairs = TwoSiteGate::pairs(n_max, total);
            let mut h = Mat::<c64>::zeros(pairs.len(), pairs.len());
            for (a, &(s1, s2)) in pairs.iter().enumerate() {
                h[(a, a)] = c64::new(
                    left_weight * onsite(bond, s1) + right_weight * onsite(bond + 1, s2),
                    0.0,
                );
                // a+_{right} a_{left}: (s1, s2) -> (s1 - 1, s2 + 1), the next pair
                if s1 > 0 && s2 < n_max {
                    let amp = -0.5 * params.j * ((s1 * (s2 + 1)) as f64).sqrt();
                    h[(a + 1, a)] = c64::new(amp, 0.0);
                    h[(a, a + 1)] = c64::new(amp, 0.0);
                }
            }
            h
        })
        .collect()
}

/// `exp(-i h tau)` per block; exactly the identity at `tau = 0`.
fn exponentiate(blocks: &[Mat<c64>], n_max: usize, tau: f64) -> Result<TwoSiteGate> {
    if tau == 0.0 {
        return Ok(TwoSiteGate::identity(n_max));
    }
    let gates = blocks
        .iter()
        .map(|h| hermitian_exp(h.as_ref(), tau))
        .collect::<Result<Vec<_>>>()?;
    TwoSiteGate::from_blocks(n_max, gates)
}

/// Full- and half-step gates for every bond.
#[derive(Debug, Clone)]
pub struct GateSet {
    pub dt: f64,
    pub params: ModelParams,
    pub n_max: usize,
    pub n_sites: usize,
    pub full: Vec<TwoSiteGate>,
    pub half: Vec<TwoSiteGate>,
}

/// Gates `exp(-i h dt)` and `exp(-i h dt/2)`. Any finite `dt` is accepted;
/// negative steps run backwards in time.
pub fn build_gates(params: &ModelParams, dt: f64, n_max: usize, n_sites: usize) -> Result<GateSet> {
    params.validate()?;
    if !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be finite, got {dt}")));
    }
    if n_sites < 2 {
        return Err(Error::InvalidParameter("TEBD needs at least two sites".into()));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let mut full = Vec::with_capacity(n_sites - 1);
    let mut half = Vec::with_capacity(n_sites - 1);
    for bond in 0..n_sites - 1 {
        let h = bond_hamiltonian(params, n_max, n_sites, bond);
        full.push(exponentiate(&h, n_max, dt)?);
        half.push(exponentiate(&h, n_max, 0.5 * dt)?);
    }
    Ok(GateSet {
        dt,
        params: *params,
        n_max,
        n_sites,
        full,
        half,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layer {
    /// Bonds 0, 2, 4, ...
    A,
    /// Bonds 1, 3, 5, ...
    B,
}

fn apply_layer(state: &mut MpsState, gates: &[TwoSiteGate], layer: Layer, renormalize: bool) -> Result<f64> {
    let start = match layer {
        Layer::A => 0,
        Layer::B => 1,
    };
    let mut discarded = 0.0;
    for bond in (start..gates.len()).step_by(2) {
        discarded += state.apply_two_site(bond, &gates[bond], renormalize)?;
    }
    Ok(discarded)
}

fn check_gates(state: &MpsState, gates: &GateSet) -> Result<()> {
    if state.n_sites() != gates.n_sites || state.n_max() != gates.n_max {
        return Err(Error::InvalidParameter(format!(
            "gates for {} sites / n_max {} applied to a state with {} sites / n_max {}",
            gates.n_sites,
            gates.n_max,
            state.n_sites(),
            state.n_max()
        )));
    }
    Ok(())
}

/// One symmetric step `A(dt/2) B(dt) A(dt/2)`; returns the discarded weight.
pub fn trotter_step(state: &mut MpsState, gates: &GateSet, renormalize: bool) -> Result<f64> {
    check_gates(state, gates)?;
    let mut discarded = apply_layer(state, &gates.half, Layer::A, renormalize)?;
    discarded += apply_layer(state, &gates.full, Layer::B, renormalize)?;
    discarded += apply_layer(state, &gates.half, Layer::A, renormalize)?;
    Ok(discarded)
}

/// `steps` Trotter steps with the inner half steps fused into full ones.
pub fn trotter_steps(state: &mut MpsState, gates: &GateSet, steps: usize, renormalize: bool) -> Result<f64> {
    check_gates(state, gates)?;
    if steps == 0 {
        return Ok(0.0);
    }
    let mut discarded = apply_layer(state, &gates.half, Layer::A, renormalize)?;
    for k in 0..steps {
        discarded += apply_layer(state, &gates.full, Layer::B, renormalize)?;
        let closing = if k + 1 == steps { &gates.half } else { &gates.full };
        discarded += apply_layer(state, closing, Layer::A, renormalize)?;
    }
    Ok(discarded)
}

/// Settings of [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    pub chi_max: usize,
    /// Observation cadence in steps; the final step is always observed.
    pub observe_every: usize,
    /// Threshold of the recorded coefficient count.
    pub epsilon: f64,
    pub renormalize: bool,
}

/// Observables at one time, taken at the bond of largest entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub entropy: f64,
    pub bond: usize,
    pub spectrum: SchmidtSpectrum,
    pub densities: Vec<f64>,
    /// Discarded weight accumulated since the start.
    pub discarded_weight: f64,
    pub n_above_eps: usize,
    /// `<psi|psi>` before the observation renormalized the state.
    pub norm_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub epsilon: f64,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory has its initial snapshot")
    }

    /// Snapshot nearest to `time`.
    pub fn at(&self, time: f64) -> &Snapshot {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.time - time).abs().total_cmp(&(b.time - time).abs()))
            .expect("a trajectory has its initial snapshot")
    }

    /// `time,S_max,bond,discarded_weight,n_above_eps,n_1..n_m`.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        let m = self.snapshots.first().map_or(0, |s| s.densities.len());
        write!(out, "time,S_max,bond,discarded_weight,n_above_eps")?;
        for l in 1..=m {
            write!(out, ",n_{l}")?;
        }
        writeln!(out)?;
        for s in &self.snapshots {
            write!(
                out,
                "{},{},{},{},{}",
                s.time, s.entropy, s.bond, s.discarded_weight, s.n_above_eps
            )?;
            for n in &s.densities {
                write!(out, ",{n}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// `time,bond,alpha,lambda`, `alpha` counted from 1.
    pub fn write_spectra_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,bond,alpha,lambda")?;
        for s in &self.snapshots {
            for (a, l) in s.spectrum.values.iter().enumerate() {
                writeln!(out, "{},{},{},{}", s.time, s.bond, a + 1, l)?;
            }
        }
        Ok(())
    }
}

fn observe(state: &mut MpsState, time: f64, discarded: f64, epsilon: f64) -> Result<Snapshot> {
    let norm_squared = state.norm_squared();
    let drift = (1.0 - norm_squared).abs();
    if drift > NORM_DRIFT_TOLERANCE || !drift.is_finite() {
        return Err(Error::NormDrift {
            time,
            drift,
            tolerance: NORM_DRIFT_TOLERANCE,
        });
    }
    state.canonicalize()?;
    let (bond, entropy) = state.max_entropy_bond()?;
    let spectrum = state.schmidt_spectrum(bond)?;
    Ok(Snapshot {
        time,
        entropy,
        bond,
        n_above_eps: count_above_threshold(&spectrum, epsilon),
        spectrum,
        densities: state.densities()?,
        discarded_weight: discarded,
        norm_squared,
    })
}

/// Evolves `state` to `t_final`, observing at `t = 0`, every
/// `observe_every` steps and at the end. `dt` must divide `t_final`.
pub fn evolve(state: &mut MpsState, params: &ModelParams, options: &EvolveOptions) -> Result<Trajectory> {
    let EvolveOptions {
        dt,
        t_final,
        chi_max,
        observe_every,
        epsilon,
        renormalize,
    } = *options;
    if !(t_final > 0.0 && t_final.is_finite()) || !(dt > 0.0) || observe_every == 0 || chi_max == 0 {
        return Err(Error::InvalidParameter(format!(
            "need t_final > 0, dt > 0, observe_every >= 1, chi_max >= 1 (got {t_final}, {dt}, {observe_every}, {chi_max})"
        )));
    }
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::StepMismatch {
            dt,
            interval: t_final,
        });
    }
    let steps = steps as usize;
    let gates = build_gates(params, dt, state.n_max(), state.n_sites())?;
    state.set_chi_max(chi_max);

    let mut discarded = 0.0;
    let mut snapshots = vec![observe(state, 0.0, discarded, epsilon)?];
    let mut done = 0;
    while done < steps {
        let chunk = observe_every.min(steps - done);
        discarded += trotter_steps(state, &gates, chunk, renormalize)?;
        done += chunk;
        let time = if done == steps { t_final } else { done as f64 * dt };
        snapshots.push(observe(state, time, discarded, epsilon)?);
    }
    Ok(Trajectory { epsilon, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_hamiltonian, Boundary, FockBasis};
    use crate::linalg::{identity, max_abs_diff};

    #[test]
    fn zero_step_gates_are_identities() {
        let gates = build_gates(&ModelParams::new(1.0, 2.0, 1.0), 0.0, 2, 4).unwrap();
        for g in gates.full.iter().chain(&gates.half) {
            assert_eq!(max_abs_diff(g.to_dense().as_ref(), identity(9).as_ref()), 0.0);
        }
    }

    #[test]
    fn gates_are_unitary() {
        let gates = build_gates(&ModelParams::new(1.0, 10.0, 2.0), 0.3, 3, 5).unwrap();
        for g in &gates.full {
            assert!(g.unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn frozen_hopping_gives_diagonal_gates() {
        let params = ModelParams { j: 1e-300, u: 1.0, f: 1.0 };
        let gates = build_gates(&params, 0.4, 2, 3).unwrap();
        let dense = gates.full[0].to_dense();
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    assert!(dense[(i, j)].norm() < 1e-14);
                }
            }
        }
    }

    /// Embeds the bond terms into the many-body basis and sums them.
    #[test]
    fn bond_terms_sum_to_hamiltonian() {
        let params = ModelParams::new(0.7, 1.9, 1.3);
        let basis = FockBasis::new(3, 3, 3).unwrap();
        let h = build_hamiltonian(&basis, &params, Boundary::Open).to_dense();
        let mut sum = Mat::<c64>::zeros(basis.dim(), basis.dim());
        for bond in 0..2 {
            let blocks = bond_hamiltonian(&params, 3, 3, bond);
            for (col, occ) in basis.states().enumerate() {
                let (s1, s2) = (occ[bond] as usize, occ[bond + 1] as usize);
                let pairs = TwoSiteGate::pairs(3, s1 + s2);
                let b = pairs.iter().position(|&p| p == (s1, s2)).unwrap();
                for (a, &(t1, t2)) in pairs.iter().enumerate() {
                    let mut target = occ.to_vec();
                    target[bond] = t1 as u8;
                    target[bond + 1] = t2 as u8;
                    let row = basis.index_of(&target).unwrap();
                    sum[(row, col)] += blocks[s1 + s2][(a, b)];
                }
            }
        }
        assert!(max_abs_diff(sum.as_ref(), h.as_ref()) < 1e-12);
    }

    #[test]
    fn two_sites_have_no_trotter_error() {
        let params = ModelParams::new(1.0, 1.5, 0.8);
        let basis = FockBasis::new(2, 2, 2).unwrap();
        let h = build_hamiltonian(&basis, &params, Boundary::Open).to_dense();
        let exact = hermitian_exp(h.as_ref(), 0.37).unwrap();
        let gates = build_gates(&params, 0.37, 2, 2).unwrap();
        let mut state = MpsState::from_product_state(&[2, 0], 2, 10).unwrap();
        trotter_step(&mut state, &gates, true).unwrap();
        let got = state.to_fock_amplitudes(&basis).unwrap();
        let start = basis.index_of(&[2, 0]).unwrap();
        for i in 0..basis.dim() {
            assert!((got[i] - exact[(i, start)]).norm() < 1e-12);
        }
    }

    #[test]
    fn frozen_product_state_stays_product() {
        let params = ModelParams { j: 1e-300, u: 3.0, f: 1.0 };
        let mut state = MpsState::from_product_state(&[1, 2, 0, 1], 2, 10).unwrap();
        let options = EvolveOptions {
            dt: 0.1,
            t_final: 1.0,
            chi_max: 10,
            observe_every: 5,
            epsilon: 0.01,
            renormalize: true,
        };
        let traj = evolve(&mut state, &params, &options).unwrap();
        assert_eq!(traj.times(), vec![0.0, 0.5, 1.0]);
        assert!(traj.snapshots.iter().all(|s| s.entropy.abs() < 1e-12 && s.n_above_eps == 1));
    }

    #[test]
    fn step_must_divide_interval() {
        let params = ModelParams::new(1.0, 1.0, 1.0);
        let mut state = MpsState::from_product_state(&[1, 0], 1, 4).unwrap();
        let options = EvolveOptions {
            dt: 0.3,
            t_final: 1.0,
            chi_max: 4,
            observe_every: 1,
            epsilon: 0.01,
            renormalize: true,
        };
        assert!(matches!(evolve(&mut state, &params, &options), Err(Error::StepMismatch { .. })));
    }

    #[test]
    fn csv_headers() {
        let params = ModelParams::new(1.0, 1.0, 1.0);
        let mut state = MpsState::from_product_state(&[1, 0, 0], 1, 4).unwrap();
        let options = EvolveOptions {
            dt: 0.5,
            t_final: 1.0,
            chi_max: 4,
            observe_every: 2,
            epsilon: 0.01,
            renormalize: true,
        };
        let traj = evolve(&mut state, &params, &options).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,S_max,bond,discarded_weight,n_above_eps,n_1,n_2,n_3\n0,0,0,0,1,1,0,0\n"));
        let mut buf = Vec::new();
        traj.write_spectra_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("time,bond,alpha,lambda\n0,0,1,1\n"));
    }
}
