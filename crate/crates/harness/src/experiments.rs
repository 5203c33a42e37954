//! The four experiments. The MPS experiments share one ensemble runner:
//! every `(U/J, F/J)` point evolves the same seeded initial states, and the
//! observables are averaged over them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use tbh_core::floquet::{propagate_converged, SectorHamiltonian};
use tbh_core::fock::FockBasis;
use tbh_core::mps::{average_spectra, MpsState};
use tbh_core::spectral::{cdf_table, spacings_from_phases, Deviations, Grid};
use tbh_core::tebd::{evolve, EvolveOptions, Trajectory};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{num, write_csv, Metadata, VERSION};
use crate::sampling::initial_states;
use crate::Result;

/// All runs at one parameter point, in initial-state order.
#[derive(Debug, Clone)]
pub struct PointEnsemble {
    pub u: f64,
    pub f: f64,
    pub bloch_period: f64,
    pub runs: Vec<Trajectory>,
}

impl PointEnsemble {
    /// Index-wise mean of the final max-entropy-bond spectra, padded to `chi`.
    pub fn mean_spectrum(&self, chi: usize) -> Vec<f64> {
        let spectra: Vec<_> = self.runs.iter().map(|r| r.last().spectrum.clone()).collect();
        average_spectra(&spectra, chi)
    }

    pub fn final_entropies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.last().entropy).collect()
    }

    pub fn final_counts(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.last().n_above_eps as f64).collect()
    }

    /// `(t / T_B, mean S)` over the shared observation times.
    pub fn entropy_trace(&self) -> Vec<(f64, f64)> {
        let first = &self.runs[0].snapshots;
        (0..first.len())
            .map(|k| {
                let s = self.runs.iter().map(|r| r.snapshots[k].entropy).sum::<f64>();
                (first[k].time / self.bloch_period, s / self.runs.len() as f64)
            })
            .collect()
    }

    /// Mean entropy growth per Bloch period between `a` and `b` Bloch
    /// periods: the ensemble-mean entropy difference over the elapsed time,
    /// using the snapshots nearest to the two ends. Divide by the period for
    /// a rate per unit `1/J`.
    pub fn mean_growth_rate(&self, a: f64, b: f64) -> f64 {
        let trace = self.entropy_trace();
        let nearest = |x: f64| {
            *trace
                .iter()
                .min_by(|p, q| (p.0 - x).abs().total_cmp(&(q.0 - x).abs()))
                .expect("trace is nonempty")
        };
        let (ta, sa) = nearest(a);
        let (tb, sb) = nearest(b);
        (sb - sa) / (tb - ta)
    }
}

/// The ensemble of every point of `config`.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub initial_states: Vec<Vec<u8>>,
    pub points: Vec<PointEnsemble>,
}

impl EnsembleResult {
    pub fn point(&self, u: f64, f: f64) -> Option<&PointEnsemble> {
        self.points.iter().find(|p| p.u == u && p.f == f)
    }
}

/// The configured initial occupations.
pub fn ensemble_states(config: &ExperimentConfig) -> Result<Vec<Vec<u8>>> {
    let ens = config.ensemble()?;
    let l = &config.lattice;
    initial_states(
        ens.n_initial_states,
        l.n_particles,
        l.window(),
        l.n_max(),
        l.n_sites,
        ens.constrained,
        ens.seed,
    )
}

/// One TEBD run from `occupations` at `(u, f)`.
pub fn run_single(config: &ExperimentConfig, occupations: &[u8], u: f64, f: f64) -> Result<Trajectory> {
    let evo = config.evolution()?;
    let params = config.params(u, f);
    let period = params.bloch_period()?;
    let mut state = MpsState::from_product_state(occupations, config.lattice.n_max(), evo.chi_max)?;
    let options = EvolveOptions {
        dt: evo.dt * period,
        t_final: evo.steps() as f64 * evo.dt * period,
        chi_max: evo.chi_max,
        observe_every: evo.observe_every,
        epsilon: evo.epsilon,
        renormalize: evo.renormalize,
    };
    Ok(evolve(&mut state, &params, &options)?)
}

/// Runs every `(point, initial state)` pair. Jobs run in parallel but are
/// collected in a fixed order, so results do not depend on scheduling.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<EnsembleResult> {
    let states = ensemble_states(config)?;
    let points = config.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..states.len()).map(move |s| (p, s)))
        .collect();
    let runs: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(p, s)| run_single(config, &states[s], points[p].0, points[p].1))
        .collect::<Result<_>>()?;
    let mut runs = runs.into_iter();
    let mut out = Vec::with_capacity(points.len());
    for &(u, f) in &points {
        out.push(PointEnsemble {
            u,
            f,
            bloch_period: config.params(u, f).bloch_period()?,
            runs: runs.by_ref().take(states.len()).collect(),
        });
    }
    Ok(EnsembleResult {
        initial_states: states,
        points: out,
    })
}

/// Converged Floquet spectrum statistics at one point.
#[derive(Debug, Clone)]
pub struct SpectralPoint {
    pub u: f64,
    pub f: f64,
    pub dim: usize,
    pub n_steps: usize,
    pub last_shift: f64,
    pub deviations: Deviations,
    pub cdf: Vec<[f64; 4]>,
}

pub fn spectral_point(config: &ExperimentConfig, u: f64, f: f64) -> Result<SpectralPoint> {
    let l = &config.lattice;
    let basis = FockBasis::new(l.n_particles, l.n_sites, l.n_max())?;
    let h = SectorHamiltonian::new(&basis, &config.params(u, f), l.kappa)?;
    let spectrum = propagate_converged(&h, &config.floquet.options())?;
    let sample = spacings_from_phases(spectrum.phases.phases())?;
    Ok(SpectralPoint {
        u,
        f,
        dim: h.dim(),
        n_steps: spectrum.unitary.n_steps,
        last_shift: spectrum.last_shift,
        deviations: Deviations::of(&sample),
        cdf: cdf_table(&sample, &Grid::default()),
    })
}

pub fn run_spectral_scan(config: &ExperimentConfig) -> Result<Vec<SpectralPoint>> {
    config.points()
        .par_iter()
        .map(|&(u, f)| spectral_point(config, u, f))
        .collect()
}

/// First `F/J` at which `Delta^2_P - Delta^2_WD` changes sign from positive
/// (Wigner-Dyson preferred) to nonpositive, linearly interpolated between the
/// two bracketing scan points. Points must share one `U/J` and be sorted by
/// `F/J`.
pub fn crossover(points: &[SpectralPoint]) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let d0 = w[0].deviations.poisson - w[0].deviations.wigner_dyson;
        let d1 = w[1].deviations.poisson - w[1].deviations.wigner_dyson;
        (d0 > 0.0 && d1 <= 0.0).then(|| w[0].f + (w[1].f - w[0].f) * d0 / (d0 - d1))
    })
}

fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn schmidt_distribution_csv(result: &EnsembleResult, chi: usize) -> String {
    let mut s = String::from("u,f,alpha,lambda_mean\n");
    for p in &result.points {
        for (a, l) in p.mean_spectrum(chi).iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", num(p.u), num(p.f), a + 1, num(*l));
        }
    }
    s
}

pub fn entropy_scan_csv(result: &EnsembleResult) -> String {
    let mut s = String::from("u,f,S_mean,S_stderr\n");
    for p in &result.points {
        let (m, e) = mean_and_error(&p.final_entropies());
        let _ = writeln!(s, "{},{},{},{}", num(p.u), num(p.f), num(m), num(e));
    }
    s
}

pub fn entropy_traces_csv(result: &EnsembleResult) -> String {
    let mut s = String::from("u,f,t_over_tb,S_mean\n");
    for p in &result.points {
        for (t, e) in p.entropy_trace() {
            let _ = writeln!(s, "{},{},{},{}", num(p.u), num(p.f), num(t), num(e));
        }
    }
    s
}

pub fn threshold_scan_csv(result: &EnsembleResult, epsilon: f64) -> String {
    let mut s = String::from("u,f,epsilon,count_mean,count_stderr\n");
    for p in &result.points {
        let (m, e) = mean_and_error(&p.final_counts());
        let _ = writeln!(s, "{},{},{},{},{}", num(p.u), num(p.f), num(epsilon), num(m), num(e));
    }
    s
}

/// Per-run final observables.
pub fn runs_csv(result: &EnsembleResult) -> String {
    let mut s = String::from("u,f,run,occupations,S,bond,count,discarded_weight\n");
    for p in &result.points {
        for (k, r) in p.runs.iter().enumerate() {
            let occ: Vec<String> = result.initial_states[k].iter().map(|n| n.to_string()).collect();
            let last = r.last();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                num(p.u),
                num(p.f),
                k,
                occ.join(" "),
                num(last.entropy),
                last.bond,
                last.n_above_eps,
                num(last.discarded_weight)
            );
        }
    }
    s
}

pub fn spectral_scan_csv(points: &[SpectralPoint]) -> String {
    let mut s = String::from("u,f,dim,n_steps,last_shift,delta2_poisson,delta2_wd\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(p.u),
            num(p.f),
            p.dim,
            p.n_steps,
            num(p.last_shift),
            num(p.deviations.poisson),
            num(p.deviations.wigner_dyson)
        );
    }
    s
}

pub fn spacing_cdf_csv(points: &[SpectralPoint]) -> String {
    let mut s = String::from("u,f,s,f_empirical,I_poisson,I_wigner\n");
    for p in points {
        for row in &p.cdf {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                num(p.u),
                num(p.f),
                num(row[0]),
                num(row[1]),
                num(row[2]),
                num(row[3])
            );
        }
    }
    s
}

/// Runs `kind` and writes its CSV files into `out`. Wall time goes to a
/// separate `run_record.txt`, leaving the CSV bytes reproducible.
pub fn run_experiment(config: &ExperimentConfig, kind: ExperimentKind, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate_for(kind)?;
    let started = Instant::now();
    let hash = config.hash();
    let meta = Metadata {
        config_hash: hash.clone(),
        seed: config.ensemble.as_ref().map(|e| e.seed),
        kind: kind.name().to_string(),
    };
    // refuse before spending hours on a run whose outputs cannot be written
    for name in output_names(kind) {
        crate::output::check_overwrite(&out.join(name), &hash)?;
    }
    let mut files = Vec::new();
    match kind {
        ExperimentKind::SpectralScan => {
            let points = run_spectral_scan(config)?;
            files.push(write_csv(out, "spectral_scan.csv", &meta, &spectral_scan_csv(&points))?);
            files.push(write_csv(out, "spacing_cdf.csv", &meta, &spacing_cdf_csv(&points))?);
        }
        _ => {
            let evo = config.evolution()?;
            let result = run_ensemble(config)?;
            let body = match kind {
                ExperimentKind::SchmidtDistribution => schmidt_distribution_csv(&result, evo.chi_max),
                ExperimentKind::EntropyScan => entropy_scan_csv(&result),
                _ => threshold_scan_csv(&result, evo.epsilon),
            };
            files.push(write_csv(out, &format!("{}.csv", kind.name().replace('-', "_")), &meta, &body)?);
            if kind == ExperimentKind::EntropyScan {
                files.push(write_csv(out, "entropy_traces.csv", &meta, &entropy_traces_csv(&result))?);
            }
            files.push(write_csv(out, "runs.csv", &meta, &runs_csv(&result))?);
        }
    }
    let record = format!(
        "version {VERSION}\nconfig_hash {hash}\nkind {kind}\nwall_time_s {:.3}\n",
        started.elapsed().as_secs_f64()
    );
    let path = out.join("run_record.txt");
    std::fs::write(&path, record)?;
    files.push(path);
    Ok(files)
}

fn output_names(kind: ExperimentKind) -> Vec<String> {
    match kind {
        ExperimentKind::SpectralScan => vec!["spectral_scan.csv".into(), "spacing_cdf.csv".into()],
        ExperimentKind::EntropyScan => vec![
            "entropy_scan.csv".into(),
            "entropy_traces.csv".into(),
            "runs.csv".into(),
        ],
        k => vec![format!("{}.csv", k.name().replace('-', "_")), "runs.csv".into()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tbh_core::spectral::Deviations;

    fn spectral(f: f64, p: f64, w: f64) -> SpectralPoint {
        SpectralPoint {
            u: 1.0,
            f,
            dim: 0,
            n_steps: 0,
            last_shift: 0.0,
            deviations: Deviations {
                poisson: p,
                wigner_dyson: w,
            },
            cdf: Vec::new(),
        }
    }

    #[test]
    fn crossover_interpolates() {
        let pts = [spectral(1.0, 0.3, 0.1), spectral(1.5, 0.2, 0.2), spectral(2.0, 0.1, 0.3)];
        assert_eq!(crossover(&pts), Some(1.5));
        let pts = [spectral(1.0, 0.3, 0.1), spectral(2.0, 0.1, 0.2)];
        let x = crossover(&pts).unwrap();
        assert!((x - (1.0 + 0.2 / 0.3)).abs() < 1e-12);
        assert_eq!(crossover(&[spectral(1.0, 0.1, 0.3)]), None);
    }

    #[test]
    fn stderr() {
        assert_eq!(mean_and_error(&[2.0]), (2.0, 0.0));
        let (m, e) = mean_and_error(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((e - 1.0).abs() < 1e-15);
    }
}
