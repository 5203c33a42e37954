use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tbh_core::floquet::{propagate_converged, propagate_period, eigenphases, ConvergenceOptions, FloquetSpectrum, SectorHamiltonian};
use tbh_core::fock::{FockBasis, ModelParams};
use tbh_core::mps::MpsState;
use tbh_core::spectral::{cdf_table, spacings_from_phases, Deviations, Grid};
use tbh_core::tebd::{evolve, EvolveOptions};
use tbh_harness::config::{ExperimentConfig, ExperimentKind, SchemeName};
use tbh_harness::experiments::run_experiment;
use tbh_harness::oracle_check::{evolution_suite, schmidt_suite};
use tbh_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "tbh", version, about = "Tilted Bose-Hubbard chain: Floquet level statistics and TEBD entanglement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Floquet-Bloch spectrum of a periodic chain and its spacing statistics.
    Spectrum {
        #[arg(long, default_value_t = 8)]
        n_particles: usize,
        #[arg(long, default_value_t = 9)]
        n_sites: usize,
        /// U/J
        #[arg(long)]
        u: f64,
        /// F/J
        #[arg(long)]
        f: f64,
        #[arg(long, default_value_t = 0)]
        kappa: usize,
        /// Fixed step count instead of step doubling.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, value_enum, default_value = "magnus4")]
        scheme: SchemeArg,
        /// Write the propagator as `row col re im` lines.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Write the spacing CDF table as CSV.
        #[arg(long)]
        cdf: Option<PathBuf>,
    },
    /// One TEBD run from a product state on an open chain.
    Evolve {
        /// Comma-separated site occupations, e.g. `0,2,1,0`.
        #[arg(long, value_delimiter = ',', required = true)]
        occupations: Vec<u8>,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        f: f64,
        /// Local cutoff; defaults to the particle number.
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 100)]
        chi: usize,
        /// Time step in Bloch periods.
        #[arg(long, default_value_t = 0.001)]
        dt: f64,
        /// Final time in Bloch periods.
        #[arg(long, default_value_t = 4.776)]
        t_final: f64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 100)]
        observe_every: usize,
        /// Trajectory CSV; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Schmidt spectra CSV.
        #[arg(long)]
        spectra: Option<PathBuf>,
        /// Binary checkpoint of the final state.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Runs a configured experiment and writes its CSV files.
    Experiment {
        kind: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-checks TEBD and the MPS Schmidt data against dense brute force.
    OracleCheck {
        /// Evolution time in units of 1/J.
        #[arg(long, default_value_t = 5.0)]
        t: f64,
        #[arg(long, default_value_t = 200)]
        states: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SchemeArg {
    Midpoint,
    Magnus4,
}

impl From<SchemeArg> for SchemeName {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Midpoint => SchemeName::Midpoint,
            SchemeArg::Magnus4 => SchemeName::Magnus4,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Spectrum {
            n_particles,
            n_sites,
            u,
            f,
            kappa,
            steps,
            tolerance,
            scheme,
            dump,
            cdf,
        } => {
            let basis = FockBasis::new(n_particles, n_sites, n_particles)?;
            let h = SectorHamiltonian::new(&basis, &ModelParams::new(1.0, u, f), kappa)?;
            let scheme = SchemeName::from(scheme).into();
            let spectrum = match steps {
                Some(n) => {
                    let unitary = propagate_period(&h, scheme, n)?;
                    let phases = eigenphases(unitary.matrix.as_ref())?;
                    FloquetSpectrum {
                        unitary,
                        phases,
                        last_shift: f64::NAN,
                    }
                }
                None => propagate_converged(
                    &h,
                    &ConvergenceOptions {
                        scheme,
                        tolerance,
                        ..Default::default()
                    },
                )?,
            };
            let sample = spacings_from_phases(spectrum.phases.phases())?;
            let d = Deviations::of(&sample);
            println!("dim {}", h.dim());
            println!("n_steps {}", spectrum.unitary.n_steps);
            println!("last_shift {:e}", spectrum.last_shift);
            println!("delta2_poisson {}", d.poisson);
            println!("delta2_wd {}", d.wigner_dyson);
            println!("closer_to {}", if d.prefers_poisson() { "poisson" } else { "wigner-dyson" });
            if let Some(path) = dump {
                spectrum.unitary.write_entries(BufWriter::new(File::create(path)?))?;
            }
            if let Some(path) = cdf {
                let mut text = String::from("s,f_empirical,I_poisson,I_wigner\n");
                for r in cdf_table(&sample, &Grid::default()) {
                    text.push_str(&format!("{},{},{},{}\n", r[0], r[1], r[2], r[3]));
                }
                std::fs::write(path, text)?;
            }
            Ok(true)
        }
        Command::Evolve {
            occupations,
            u,
            f,
            n_max,
            chi,
            dt,
            t_final,
            epsilon,
            observe_every,
            out,
            spectra,
            checkpoint,
        } => {
            let params = ModelParams::new(1.0, u, f);
            let period = params.bloch_period()?;
            let n: usize = occupations.iter().map(|&x| x as usize).sum();
            let mut state = MpsState::from_product_state(&occupations, n_max.unwrap_or(n.max(1)), chi)?;
            let options = EvolveOptions {
                dt: dt * period,
                t_final: (t_final / dt).round() * dt * period,
                chi_max: chi,
                observe_every,
                epsilon,
                renormalize: true,
            };
            let trajectory = evolve(&mut state, &params, &options)?;
            match out {
                Some(path) => trajectory.write_csv(BufWriter::new(File::create(path)?))?,
                None => trajectory.write_csv(std::io::stdout().lock())?,
            }
            if let Some(path) = spectra {
                trajectory.write_spectra_csv(BufWriter::new(File::create(path)?))?;
            }
            if let Some(path) = checkpoint {
                std::fs::write(path, state.to_bytes())?;
            }
            Ok(true)
        }
        Command::Experiment { kind, config, out } => {
            let kind: ExperimentKind = kind.parse()?;
            let config = ExperimentConfig::load(&config)?;
            if let Some(k) = config.kind {
                if k != kind {
                    return Err(HarnessError::Config(format!("config is for {k}, not {kind}")));
                }
            }
            for path in run_experiment(&config, kind, &out)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::OracleCheck { t, states, seed } => {
            let mut ok = true;
            for c in evolution_suite(t)? {
                let pass = c.fidelity >= 1.0 - 1e-6;
                ok &= pass;
                println!(
                    "{} tebd-vs-exact N={} m={} U={} F={} dt={} fidelity={:.12}",
                    if pass { "PASS" } else { "FAIL" },
                    c.n_particles,
                    c.n_sites,
                    c.u,
                    c.f,
                    c.dt,
                    c.fidelity
                );
            }
            let s = schmidt_suite(states, seed)?;
            let pass = s.max_value_error < 1e-9 && s.max_entropy_error < 1e-9;
            ok &= pass;
            println!(
                "{} schmidt-vs-svd states={states} max_value_error={:e} max_entropy_error={:e}",
                if pass { "PASS" } else { "FAIL" },
                s.max_value_error,
                s.max_entropy_error
            );
            Ok(ok)
        }
    }
}
