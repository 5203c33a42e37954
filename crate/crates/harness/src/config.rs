//! Experiment configuration: a TOML file with `[model]`, `[lattice]`,
//! `[evolution]`, `[ensemble]` and `[floquet]` sections.
//!
//! Times in `[evolution]` are in Bloch periods, so one file describes every
//! tilt of a scan with the same resolution.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tbh_core::floquet::{ConvergenceOptions, Scheme};
use tbh_core::fock::{Boundary, ModelParams};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SchmidtDistribution,
    SpectralScan,
    EntropyScan,
    ThresholdScan,
}

impl ExperimentKind {
    pub const ALL: [Self; 4] = [
        Self::SchmidtDistribution,
        Self::SpectralScan,
        Self::EntropyScan,
        Self::ThresholdScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SchmidtDistribution => "schmidt-distribution",
            Self::SpectralScan => "spectral-scan",
            Self::EntropyScan => "entropy-scan",
            Self::ThresholdScan => "threshold-scan",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "one")]
    pub j: f64,
    /// `U/J` values.
    pub u: Vec<f64>,
    /// `F/J` values.
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryName {
    Open,
    Periodic,
}

impl From<BoundaryName> for Boundary {
    fn from(b: BoundaryName) -> Self {
        match b {
            BoundaryName::Open => Boundary::Open,
            BoundaryName::Periodic => Boundary::Periodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub n_sites: usize,
    pub n_particles: usize,
    /// Number of initially occupied sites, centered in the chain.
    #[serde(default)]
    pub window: Option<usize>,
    /// Per-site cutoff; defaults to `n_particles` (no truncation).
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default = "open")]
    pub boundary: BoundaryName,
    /// Quasimomentum sector of the Floquet operator.
    #[serde(default)]
    pub kappa: usize,
}

impl LatticeSection {
    pub fn n_max(&self) -> usize {
        self.n_max.unwrap_or(self.n_particles)
    }

    pub fn window(&self) -> usize {
        self.window.unwrap_or(self.n_particles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    /// Time step in Bloch periods.
    pub dt: f64,
    /// Final time in Bloch periods.
    pub t_final: f64,
    pub chi_max: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Steps between recorded snapshots.
    #[serde(default = "default_observe_every")]
    pub observe_every: usize,
    #[serde(default = "yes")]
    pub renormalize: bool,
}

impl EvolutionSection {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_initial_states: usize,
    /// Required; there are no unseeded runs. TOML integers stop at 2^63 - 1.
    pub seed: u64,
    /// Forbid empty sites inside the initial window.
    #[serde(default)]
    pub constrained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Midpoint,
    Magnus4,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Midpoint => Scheme::Midpoint,
            SchemeName::Magnus4 => Scheme::Magnus4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetSection {
    #[serde(default = "default_scheme")]
    pub scheme: SchemeName,
    #[serde(default = "default_initial_steps")]
    pub initial_steps: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for FloquetSection {
    fn default() -> Self {
        let d = ConvergenceOptions::default();
        Self {
            scheme: default_scheme(),
            initial_steps: d.initial_steps,
            max_steps: d.max_steps,
            tolerance: d.tolerance,
        }
    }
}

impl FloquetSection {
    pub fn options(&self) -> ConvergenceOptions {
        ConvergenceOptions {
            scheme: self.scheme.into(),
            initial_steps: self.initial_steps,
            max_steps: self.max_steps,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    pub model: ModelSection,
    pub lattice: LatticeSection,
    /// Needed by the MPS experiments only.
    #[serde(default)]
    pub evolution: Option<EvolutionSection>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub floquet: FloquetSection,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn open() -> BoundaryName {
    BoundaryName::Open
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_observe_every() -> usize {
    100
}
fn default_scheme() -> SchemeName {
    SchemeName::Magnus4
}
fn default_initial_steps() -> usize {
    ConvergenceOptions::default().initial_steps
}
fn default_max_steps() -> usize {
    ConvergenceOptions::default().max_steps
}
fn default_tolerance() -> f64 {
    ConvergenceOptions::default().tolerance
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Canonical text form: the parsed values re-serialized with defaults
    /// filled in, so formatting and comments do not change the hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// `sha256:<hex>` of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }

    /// `(U/J, F/J)` pairs in file order, `U` outermost.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.model.u.len() * self.model.f.len());
        for &u in &self.model.u {
            for &f in &self.model.f {
                out.push((u, f));
            }
        }
        out
    }

    /// Parameters in units where `J` is the configured hopping.
    pub fn params(&self, u: f64, f: f64) -> ModelParams {
        let j = self.model.j;
        ModelParams::new(j, u * j, f * j)
    }

    pub fn evolution(&self) -> Result<&EvolutionSection> {
        self.evolution
            .as_ref()
            .ok_or_else(|| invalid("this experiment needs an [evolution] section"))
    }

    pub fn ensemble(&self) -> Result<&EnsembleSection> {
        self.ensemble
            .as_ref()
            .ok_or_else(|| invalid("this experiment needs an [ensemble] section with a seed"))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.u.is_empty() || m.f.is_empty() {
            return Err(invalid("model.u and model.f must be nonempty"));
        }
        if !(m.j.is_finite() && m.j > 0.0) {
            return Err(invalid("model.j must be positive"));
        }
        for &(u, f) in &self.points() {
            self.params(u, f).validate()?;
            if f == 0.0 {
                return Err(invalid("F/J = 0 has no Bloch period"));
            }
        }
        let l = &self.lattice;
        if l.n_sites < 2 || l.n_particles == 0 {
            return Err(invalid("need at least two sites and one particle"));
        }
        if l.n_max() == 0 || l.n_max() > u8::MAX as usize {
            return Err(invalid("n_max must lie in 1..=255"));
        }
        if l.window() == 0 || l.window() > l.n_sites {
            return Err(invalid(format!(
                "window {} must lie in 1..={}",
                l.window(),
                l.n_sites
            )));
        }
        if l.kappa >= l.n_sites {
            return Err(invalid("kappa must be below n_sites"));
        }
        if let Some(e) = &self.evolution {
            if !(e.t_final > 0.0 && e.t_final.is_finite()) {
                return Err(invalid("evolution.t_final must be positive"));
            }
            if !(e.dt > 0.0 && e.dt <= e.t_final) {
                return Err(invalid("evolution.dt must lie in (0, t_final]"));
            }
            if ((e.steps() as f64) * e.dt - e.t_final).abs() > 1e-9 * e.t_final {
                return Err(invalid("evolution.dt must divide t_final"));
            }
            if e.chi_max == 0 || e.observe_every == 0 {
                return Err(invalid("chi_max and observe_every must be positive"));
            }
            if !(e.epsilon >= 0.0 && e.epsilon < 1.0) {
                return Err(invalid("epsilon must lie in [0, 1)"));
            }
        }
        if let Some(e) = &self.ensemble {
            if e.n_initial_states == 0 {
                return Err(invalid("ensemble.n_initial_states must be positive"));
            }
        }
        let fl = &self.floquet;
        if fl.initial_steps == 0 || fl.max_steps < fl.initial_steps || !(fl.tolerance > 0.0) {
            return Err(invalid("invalid [floquet] step range or tolerance"));
        }
        Ok(())
    }

    /// Checks the sections `kind` depends on.
    pub fn validate_for(&self, kind: ExperimentKind) -> Result<()> {
        match kind {
            ExperimentKind::SpectralScan => {
                if self.lattice.boundary != BoundaryName::Periodic {
                    return Err(invalid("spectral-scan needs a periodic lattice"));
                }
                if self.lattice.n_max() < self.lattice.n_particles {
                    return Err(invalid("spectral-scan needs n_max >= n_particles"));
                }
            }
            _ => {
                self.evolution()?;
                self.ensemble()?;
                if self.lattice.boundary != BoundaryName::Open {
                    return Err(invalid("MPS experiments need an open lattice"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
kind = "threshold-scan"

[model]
u = [1.0, 10.0]
f = [1.0, 2.0]

[lattice]
n_sites = 12
n_particles = 3
window = 3
n_max = 3

[evolution]
dt = 0.01
t_final = 0.5
chi_max = 16

[ensemble]
n_initial_states = 2
seed = 7
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.kind, Some(ExperimentKind::ThresholdScan));
        assert_eq!(c.points(), vec![(1.0, 1.0), (1.0, 2.0), (10.0, 1.0), (10.0, 2.0)]);
        assert_eq!(c.evolution().unwrap().steps(), 50);
        assert_eq!(c.floquet.initial_steps, 256);
        assert_eq!(c.lattice.boundary, BoundaryName::Open);
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::parse(SAMPLE).unwrap();
        let b = ExperimentConfig::parse(&SAMPLE.replace("seed = 7", "seed = 7 # fixed")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse(&SAMPLE.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(ExperimentConfig::parse(&a.canonical()).unwrap(), a);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse(&SAMPLE.replace("u = [1.0, 10.0]", "u = []")).is_err());
        assert!(ExperimentConfig::parse(&SAMPLE.replace("t_final = 0.5", "t_final = 0.0")).is_err());
        assert!(ExperimentConfig::parse(&SAMPLE.replace("dt = 0.01", "dt = 0.03")).is_err());
        assert!(ExperimentConfig::parse(&SAMPLE.replace("seed = 7\n", "")).is_err());
        assert!(ExperimentConfig::parse(&SAMPLE.replace("window = 3", "window = 13")).is_err());
        assert!(ExperimentConfig::parse(&SAMPLE.replace("kind = \"threshold-scan\"", "kind = \"x\"")).is_err());
    }

    #[test]
    fn kind_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
    }
}
