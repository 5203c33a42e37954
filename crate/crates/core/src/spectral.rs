//! Nearest-neighbour spacing statistics of eigenphases on the unit circle and
//! the mean square deviation `Delta^2` from the integrated Poisson and
//! Wigner-Dyson laws.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Upper end of the `Delta^2` integration window.
pub const DEFAULT_S_MAX: f64 = 5.0;
/// Number of trapezoid intervals on `[0, s_max]`.
pub const DEFAULT_INTERVALS: usize = 1000;

/// Unfolded spacings with unit mean. The eigenphase density of a Floquet
/// operator is uniform, so a linear rescaling is the whole unfolding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingSample {
    spacings: Vec<f64>,
}

impl SpacingSample {
    /// Rescales nonnegative raw spacings to unit mean.
    pub fn from_spacings(raw: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut spacings: Vec<f64> = raw.into_iter().collect();
        if spacings.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter(
                "spacings must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = spacings.iter().sum();
        if spacings.is_empty() || total <= 0.0 {
            return Err(Error::InvalidParameter(
                "spacing sample needs a positive total".into(),
            ));
        }
        let scale = spacings.len() as f64 / total;
        for s in &mut spacings {
            *s *= scale;
        }
        Ok(Self { spacings })
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn len(&self) -> usize {
        self.spacings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spacings.is_empty()
    }
}

/// Gaps between consecutive sorted phases in `[0, 2 pi)` plus the wraparound
/// gap, scaled by `dim / 2 pi`. Degenerate phases give zero spacings, which
/// are kept.
pub fn spacings_from_phases(phases: &[f64]) -> Result<SpacingSample> {
    let n = phases.len();
    if n < 2 {
        return Err(Error::TooFewPhases(n));
    }
    let two_pi = 2.0 * PI;
    if phases.iter().any(|p| !(0.0..two_pi).contains(p)) || phases.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter(
            "phases must be sorted and lie in [0, 2pi)".into(),
        ));
    }
    let scale = n as f64 / two_pi;
    let mut spacings: Vec<f64> = phases.windows(2).map(|w| (w[1] - w[0]) * scale).collect();
    spacings.push((two_pi - phases[n - 1] + phases[0]) * scale);
    // the gaps telescope to 2 pi; remove the residual rounding of the sum
    let total: f64 = spacings.iter().sum();
    let fix = n as f64 / total;
    for s in &mut spacings {
        *s *= fix;
    }
    Ok(SpacingSample { spacings })
}

/// `I_P(s) = 1 - e^{-s}`.
pub fn integrated_poisson(s: f64) -> f64 {
    -(-s).exp_m1()
}

/// `I_W(s) = 1 - e^{-pi s^2 / 4}`.
pub fn integrated_wigner(s: f64) -> f64 {
    -(-PI * s * s / 4.0).exp_m1()
}

/// Integrated reference spacing law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReferenceCdf {
    Poisson,
    WignerDyson,
}

impl ReferenceCdf {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Self::Poisson => integrated_poisson(s),
            Self::WignerDyson => integrated_wigner(s),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Poisson => "poisson",
            Self::WignerDyson => "wigner-dyson",
        }
    }
}

/// Right-continuous empirical CDF `f(s) = #{spacings <= s} / count`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn eval(&self, s: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= s) as f64 / self.sorted.len() as f64
    }
}

pub fn empirical_cdf(sample: &SpacingSample) -> EmpiricalCdf {
    let mut sorted = sample.spacings.clone();
    sorted.sort_by(f64::total_cmp);
    EmpiricalCdf { sorted }
}

/// Uniform trapezoid grid on `[0, s_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub s_max: f64,
    pub intervals: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            s_max: DEFAULT_S_MAX,
            intervals: DEFAULT_INTERVALS,
        }
    }
}

impl Grid {
    pub fn point(&self, i: usize) -> f64 {
        self.s_max * i as f64 / self.intervals as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(|i| self.point(i))
    }
}

/// `Delta^2` on the default grid.
pub fn mean_square_deviation(sample: &SpacingSample, reference: ReferenceCdf) -> f64 {
    mean_square_deviation_on(sample, reference, &Grid::default())
}

/// `Delta^2 = (1/s_max) int_0^{s_max} (f(s) - I(s))^2 ds` by the trapezoid rule.
pub fn mean_square_deviation_on(sample: &SpacingSample, reference: ReferenceCdf, grid: &Grid) -> f64 {
    let cdf = empirical_cdf(sample);
    let h = grid.s_max / grid.intervals as f64;
    let mut total = 0.0;
    for (i, s) in grid.points().enumerate() {
        let weight = if i == 0 || i == grid.intervals { 0.5 } else { 1.0 };
        let d = cdf.eval(s) - reference.eval(s);
        total += weight * d * d;
    }
    total * h / grid.s_max
}

/// Rows `(s, f(s), I_P(s), I_W(s))` on the grid.
pub fn cdf_table(sample: &SpacingSample, grid: &Grid) -> Vec<[f64; 4]> {
    let cdf = empirical_cdf(sample);
    grid.points()
        .map(|s| [s, cdf.eval(s), integrated_poisson(s), integrated_wigner(s)])
        .collect()
}

/// Both deviations of one spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviations {
    pub poisson: f64,
    pub wigner_dyson: f64,
}

impl Deviations {
    pub fn of(sample: &SpacingSample) -> Self {
        Self {
            poisson: mean_square_deviation(sample, ReferenceCdf::Poisson),
            wigner_dyson: mean_square_deviation(sample, ReferenceCdf::WignerDyson),
        }
    }

    pub fn prefers_poisson(&self) -> bool {
        self.poisson < self.wigner_dyson
    }
}
