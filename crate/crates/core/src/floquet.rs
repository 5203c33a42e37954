//! One-period Floquet-Bloch propagator of the gauge-transformed chain within a
//! quasimomentum sector, and its eigenphases.
//!
//! Inside a sector the Hamiltonian is `H(t) = D + c(t) K + conj(c(t)) K^dagger`
//! with `c(t) = -J/2 e^{iFt}`. On an untruncated local space `K` and
//! `K^dagger` commute (both are diagonal in single-particle quasimomentum), so
//! the only commutators appearing in the Magnus expansion are `[D, K]` and
//! `[D, K^dagger]`, which share the sparsity pattern of the hopping. Every
//! time step is therefore a sparse Hermitian generator, exponentiated against
//! the running propagator with a Chebyshev series.
//!
//! Steps are ordered earliest first (rightmost), and each factor is unitary up
//! to the series truncation (`~1e-15`), so norm errors do not accumulate with
//! the step count.

use std::f64::consts::PI;

use faer::{c64, Mat, MatRef};

use crate::fock::{FockBasis, GaugeParts, ModelParams, SectorBasis};
use crate::{linalg, Error, Result};

/// Unitarity defect tolerated on a finished propagator.
pub const UNITARITY_TOLERANCE: f64 = 1e-9;
/// Eigenvector residual tolerated by [`eigenphases`].
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Magnus integrator for one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// `exp(-i dt H(t_mid))`, second order.
    Midpoint,
    /// Two-point Gauss-Legendre Magnus expansion with its commutator term,
    /// fourth order.
    Magnus4,
}

/// Gauge Hamiltonian restricted to one quasimomentum sector.
#[derive(Debug, Clone)]
pub struct SectorHamiltonian {
    params: ModelParams,
    kappa: usize,
    diagonal: Vec<f64>,
    /// `(row, col, K_row_col)` of the projected forward hopping.
    forward: Vec<(usize, usize, c64)>,
}

impl SectorHamiltonian {
    /// Projects the gauge Hamiltonian of `basis` onto quasimomentum `kappa`.
    ///
    /// The local cutoff must not truncate (`n_max >= N`); otherwise `K` and
    /// `K^dagger` stop commuting and the step generators above are wrong.
    pub fn new(basis: &FockBasis, params: &ModelParams, kappa: usize) -> Result<Self> {
        params.validate()?;
        params.bloch_period()?;
        if basis.n_max() < basis.n_particles() {
            return Err(Error::InvalidParameter(format!(
                "Floquet sectors need an untruncated local space (n_max {} < N {})",
                basis.n_max(),
                basis.n_particles()
            )));
        }
        let sector = SectorBasis::new(basis, kappa)?;
        let parts = GaugeParts::new(basis, params);
        Self::from_parts(&sector, &parts)
    }

    pub fn from_parts(sector: &SectorBasis, parts: &GaugeParts) -> Result<Self> {
        let forward = sector.project_sparse(&parts.forward)?;
        let diagonal = sector
            .representatives()
            .iter()
            .map(|&r| parts.diagonal[r])
            .collect();
        Ok(Self {
            params: parts.params,
            kappa: sector.kappa(),
            diagonal,
            forward: forward.entries().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn coupling(&self, t: f64) -> c64 {
        c64::cis(self.params.f * t) * (-0.5 * self.params.j)
    }

    /// Dense `H(t)` in the sector basis.
    pub fn dense_at(&self, t: f64) -> Mat<c64> {
        let c = self.coupling(t);
        let mut h = Mat::zeros(self.dim(), self.dim());
        for (a, &d) in self.diagonal.iter().enumerate() {
            h[(a, a)] += c64::new(d, 0.0);
        }
        for &(a, b, k) in &self.forward {
            h[(a, b)] += c * k;
            h[(b, a)] += (c * k).conj();
        }
        h
    }

    /// Coupling mean and commutator weight of the step generator on
    /// `[t0, t0 + dt]`; its off-diagonal entries are
    /// `K_ab (mean + skew (D_a - D_b))` and their conjugates.
    fn step_coefficients(&self, scheme: Scheme, t0: f64, dt: f64) -> (c64, c64) {
        match scheme {
            Scheme::Midpoint => (self.coupling(t0 + 0.5 * dt), c64::new(0.0, 0.0)),
            Scheme::Magnus4 => {
                let offset = 3f64.sqrt() / 6.0;
                let c1 = self.coupling(t0 + (0.5 - offset) * dt);
                let c2 = self.coupling(t0 + (0.5 + offset) * dt);
                // -i (sqrt3 dt / 12) [H2, H1] = X + X^dagger with
                // X = -i (sqrt3 dt / 12) (c1 - c2) [D, K].
                let s = 3f64.sqrt() * dt / 12.0;
                ((c1 + c2) * 0.5, c64::new(0.0, -s) * (c1 - c2))
            }
        }
    }

    /// Whether `K` is real in the sector basis, so that `H(T - t) = conj(H(t))`.
    pub fn is_real(&self) -> bool {
        self.forward
            .iter()
            .all(|&(_, _, k)| k.im.abs() <= 1e-14 * k.norm().max(1.0))
    }
}

#[derive(Debug, Clone, Copy)]
enum Entry {
    Diagonal(f64),
    Forward { k: c64, gap: f64 },
    Backward { k: c64, gap: f64 },
}

/// Fixed sparsity pattern shared by every step generator of a sector.
#[derive(Debug, Clone)]
struct Pattern {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    entries: Vec<Entry>,
}

impl Pattern {
    fn new(h: &SectorHamiltonian) -> Self {
        let n = h.dim();
        let mut rows: Vec<Vec<(u32, Entry)>> = vec![Vec::new(); n];
        for (a, &d) in h.diagonal.iter().enumerate() {
            rows[a].push((a as u32, Entry::Diagonal(d)));
        }
        for &(a, b, k) in &h.forward {
            let gap = h.diagonal[a] - h.diagonal[b];
            rows[a].push((b as u32, Entry::Forward { k, gap }));
            rows[b].push((a as u32, Entry::Backward { k, gap }));
        }
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut entries = Vec::new();
        for row in rows {
            for (c, e) in row {
                cols.push(c);
                entries.push(e);
            }
            offsets.push(cols.len());
        }
        Self {
            offsets,
            cols,
            entries,
        }
    }

    fn fill(&self, mean: c64, skew: c64, values: &mut Vec<c64>) {
        values.clear();
        values.extend(self.entries.iter().map(|e| match *e {
            Entry::Diagonal(d) => c64::new(d, 0.0),
            Entry::Forward { k, gap } => k * (mean + skew * gap),
            Entry::Backward { k, gap } => (k * (mean + skew * gap)).conj(),
        }));
    }
}

/// Borrowed compressed-row Hermitian matrix.
#[derive(Debug, Clone, Copy)]
struct Csr<'a> {
    offsets: &'a [usize],
    cols: &'a [u32],
    values: &'a [c64],
}

impl Csr<'_> {
    fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Gershgorin enclosure of the (real) spectrum.
    fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dim() {
            let mut centre = 0.0;
            let mut radius = 0.0;
            for k in self.offsets[i]..self.offsets[i + 1] {
                if self.cols[k] as usize == i {
                    centre += self.values[k].re;
                } else {
                    radius += self.values[k].norm();
                }
            }
            lo = lo.min(centre - radius);
            hi = hi.max(centre + radius);
        }
        (lo, hi)
    }
}

const TILE: usize = 16;

/// One row of a column tile, split into real and imaginary parts.
#[derive(Debug, Clone, Copy)]
#[repr(C, align(64))]
struct Lane {
    re: [f64; TILE],
    im: [f64; TILE],
}

const ZERO_LANE: Lane = Lane {
    re: [0.0; TILE],
    im: [0.0; TILE],
};

/// Square complex matrix held as tiles of `TILE` columns, row-major inside a
/// tile, so one tile of the Chebyshev recurrence stays cache resident.
#[derive(Debug, Clone)]
struct Tiles {
    n: usize,
    tiles: Vec<Vec<Lane>>,
}

impl Tiles {
    fn identity(n: usize) -> Self {
        let mut tiles = vec![vec![ZERO_LANE; n]; n.div_ceil(TILE)];
        for i in 0..n {
            tiles[i / TILE][i].re[i % TILE] = 1.0;
        }
        Self { n, tiles }
    }

    fn to_mat(&self) -> Mat<c64> {
        Mat::from_fn(self.n, self.n, |i, j| {
            let lane = &self.tiles[j / TILE][i];
            c64::new(lane.re[j % TILE], lane.im[j % TILE])
        })
    }
}

#[derive(Debug, Clone)]
struct Workspace {
    prev: Vec<Lane>,
    curr: Vec<Lane>,
    next: Vec<Lane>,
    acc: Vec<Lane>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            prev: vec![ZERO_LANE; n],
            curr: vec![ZERO_LANE; n],
            next: vec![ZERO_LANE; n],
            acc: vec![ZERO_LANE; n],
        }
    }
}

#[inline(always)]
fn madd<const FMA: bool>(a: f64, b: f64, c: f64) -> f64 {
    if FMA {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

/// `out += (hr + i hi) x`.
#[inline(always)]
fn lane_axpy<const FMA: bool>(hr: f64, hi: f64, x: &Lane, out: &mut Lane) {
    for c in 0..TILE {
        out.re[c] = madd::<FMA>(hr, x.re[c], madd::<FMA>(-hi, x.im[c], out.re[c]));
        out.im[c] = madd::<FMA>(hr, x.im[c], madd::<FMA>(hi, x.re[c], out.im[c]));
    }
}

/// Row `i` of `alpha (A - shift) x + beta prev`.
#[inline(always)]
fn recurrence_row<const FMA: bool>(
    a: Csr<'_>,
    i: usize,
    shift: f64,
    alpha: f64,
    x: &[Lane],
    beta: f64,
    prev: &[Lane],
) -> Lane {
    let mut out = ZERO_LANE;
    if beta != 0.0 {
        lane_axpy::<FMA>(beta, 0.0, &prev[i], &mut out);
    }
    lane_axpy::<FMA>(-alpha * shift, 0.0, &x[i], &mut out);
    for k in a.offsets[i]..a.offsets[i + 1] {
        let v = a.values[k];
        lane_axpy::<FMA>(alpha * v.re, alpha * v.im, &x[a.cols[k] as usize], &mut out);
    }
    out
}

/// `x <- sum_k coeffs[k] T_k((A - shift) inv) x` for one tile.
#[inline(always)]
fn chebyshev_tile<const FMA: bool>(
    a: Csr<'_>,
    shift: f64,
    inv: f64,
    coeffs: &[c64],
    x: &mut [Lane],
    work: &mut Workspace,
) {
    let Workspace {
        prev,
        curr,
        next,
        acc,
    } = work;
    let c0 = coeffs[0];
    for (out, row) in acc.iter_mut().zip(x.iter()) {
        *out = ZERO_LANE;
        lane_axpy::<FMA>(c0.re, c0.im, row, out);
    }
    if coeffs.len() > 1 {
        prev.copy_from_slice(x);
        let c1 = coeffs[1];
        for i in 0..x.len() {
            curr[i] = recurrence_row::<FMA>(a, i, shift, inv, prev, 0.0, prev);
            lane_axpy::<FMA>(c1.re, c1.im, &curr[i], &mut acc[i]);
        }
        for &ck in &coeffs[2..] {
            for i in 0..x.len() {
                next[i] = recurrence_row::<FMA>(a, i, shift, 2.0 * inv, curr, -1.0, prev);
                lane_axpy::<FMA>(ck.re, ck.im, &next[i], &mut acc[i]);
            }
            std::mem::swap(prev, curr);
            std::mem::swap(curr, next);
        }
    }
    x.copy_from_slice(acc);
}

#[inline(always)]
fn apply_tiles<const FMA: bool>(
    a: Csr<'_>,
    shift: f64,
    inv: f64,
    coeffs: &[c64],
    state: &mut Tiles,
    work: &mut Workspace,
) {
    for tile in &mut state.tiles {
        chebyshev_tile::<FMA>(a, shift, inv, coeffs, tile, work);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn apply_tiles_avx2(
    a: Csr<'_>,
    shift: f64,
    inv: f64,
    coeffs: &[c64],
    state: &mut Tiles,
    work: &mut Workspace,
) {
    apply_tiles::<true>(a, shift, inv, coeffs, state, work)
}

/// Bessel functions `J_0(z) .. J_{k}(z)` for `z >= 0`, by Miller's backward
/// recurrence normalised with `J_0 + 2 sum J_{2k} = 1`, trimmed where the
/// tail drops below `1e-17`.
pub fn bessel_j_sequence(z: f64) -> Vec<f64> {
    assert!(z >= 0.0 && z.is_finite());
    if z == 0.0 {
        return vec![1.0];
    }
    let top = (1.5 * z + 40.0 + 4.0 * z.cbrt()).ceil() as usize;
    let mut values = vec![0.0f64; top + 2];
    values[top] = 1e-300;
    for k in (1..=top).rev() {
        values[k - 1] = 2.0 * k as f64 / z * values[k] - values[k + 1];
        if values[k - 1].abs() > 1e250 {
            for v in &mut values[k - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let norm = values[0] + 2.0 * values.iter().skip(2).step_by(2).sum::<f64>();
    for v in &mut values {
        *v /= norm;
    }
    let mut len = values.len();
    while len > 1 && (len as f64) > z && values[len - 1].abs() < 1e-17 {
        len -= 1;
    }
    values.truncate(len);
    values
}

/// `state <- exp(-i tau A) state` with a Chebyshev expansion on the
/// Gershgorin interval of `A`.
fn chebyshev_exp_apply(a: Csr<'_>, tau: f64, state: &mut Tiles, work: &mut Workspace) {
    let (lo, hi) = a.spectral_bounds();
    let centre = 0.5 * (lo + hi);
    // a wider interval is always safe; a degenerate one breaks the recurrence
    let half_width = (0.5 * (hi - lo)).max(1e-3);
    let bessel = bessel_j_sequence(tau.abs() * half_width);
    let global = c64::cis(-tau * centre);
    // exp(-i s z y) = J_0(z) + 2 sum_k (-i s)^k J_k(z) T_k(y), s = sign(tau)
    let step = if tau >= 0.0 {
        c64::new(0.0, -1.0)
    } else {
        c64::new(0.0, 1.0)
    };
    let mut power = global;
    let coeffs: Vec<c64> = bessel
        .iter()
        .enumerate()
        .map(|(k, &jk)| {
            let c = power * if k == 0 { jk } else { 2.0 * jk };
            power *= step;
            c
        })
        .collect();
    let inv = 1.0 / half_width;
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required target features were detected at runtime.
            unsafe { apply_tiles_avx2(a, centre, inv, &coeffs, state, work) };
            return;
        }
    }
    apply_tiles::<false>(a, centre, inv, &coeffs, state, work);
}

/// A one-period propagator with the settings that produced it.
#[derive(Debug, Clone)]
pub struct UnitaryMatrix {
    pub matrix: Mat<c64>,
    pub params: ModelParams,
    pub kappa: usize,
    pub n_steps: usize,
    pub scheme: Scheme,
}

impl UnitaryMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Plain-text dump, one `row col re im` line per entry.
    pub fn write_entries<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                let z = self.matrix[(r, c)];
                writeln!(out, "{r} {c} {} {}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// `U(T_B)` from `n_steps` Magnus steps of the given scheme.
///
/// For a real sector (`kappa = 0`, or `2 kappa = m`) and an even step count the
/// second half period is the transpose of the first, `U(T_B) = V^T V` with
/// `V = U(T_B / 2, 0)`; both integrators are time symmetric, so this equals the
/// full product step for step.
pub fn propagate_period(
    hamiltonian: &SectorHamiltonian,
    scheme: Scheme,
    n_steps: usize,
) -> Result<UnitaryMatrix> {
    let period = hamiltonian.params.bloch_period()?;
    let matrix = if hamiltonian.is_real() && n_steps % 2 == 0 {
        let half = propagate_interval(hamiltonian, scheme, 0.0, 0.5 * period, n_steps / 2)?;
        half.transpose() * &half
    } else {
        propagate_interval(hamiltonian, scheme, 0.0, period, n_steps)?
    };
    let defect = linalg::unitarity_defect(matrix.as_ref());
    if defect > UNITARITY_TOLERANCE {
        return Err(Error::UnitarityDefect {
            defect,
            tolerance: UNITARITY_TOLERANCE,
        });
    }
    Ok(UnitaryMatrix {
        matrix,
        params: hamiltonian.params,
        kappa: hamiltonian.kappa,
        n_steps,
        scheme,
    })
}

/// Time-ordered propagator from `t_start` to `t_end` in `n_steps` steps.
pub fn propagate_interval(
    hamiltonian: &SectorHamiltonian,
    scheme: Scheme,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
) -> Result<Mat<c64>> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    let n = hamiltonian.dim();
    let dt = (t_end - t_start) / n_steps as f64;
    let pattern = Pattern::new(hamiltonian);
    let mut values = Vec::with_capacity(pattern.entries.len());
    let mut state = Tiles::identity(n);
    let mut work = Workspace::new(n);
    for k in 0..n_steps {
        let (mean, skew) = hamiltonian.step_coefficients(scheme, t_start + k as f64 * dt, dt);
        pattern.fill(mean, skew, &mut values);
        let a = Csr {
            offsets: &pattern.offsets,
            cols: &pattern.cols,
            values: &values,
        };
        chebyshev_exp_apply(a, dt, &mut state, &mut work);
    }
    Ok(state.to_mat())
}

/// Sorted eigenphases in `[0, 2 pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenphaseSet {
    phases: Vec<f64>,
}

impl EigenphaseSet {
    /// Wraps phases into `[0, 2 pi)` and sorts them.
    pub fn from_phases(phases: impl IntoIterator<Item = f64>) -> Self {
        let mut phases: Vec<f64> = phases.into_iter().map(wrap_phase).collect();
        phases.sort_by(f64::total_cmp);
        Self { phases }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }
}

/// Maps an angle into `[0, 2 pi)`, sending `2 pi` itself to `0`.
pub fn wrap_phase(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = theta.rem_euclid(two_pi);
    if w >= two_pi {
        w = 0.0;
    }
    w
}

/// Eigenphases `arg(lambda)` of a unitary matrix, checked against the
/// eigenvector residual `|U v - lambda v| < 1e-8`.
pub fn eigenphases(u: MatRef<'_, c64>) -> Result<EigenphaseSet> {
    let n = u.nrows();
    if n == 0 {
        return Ok(EigenphaseSet { phases: Vec::new() });
    }
    let evd = u.eigen().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let vectors = evd.U();
    let values = evd.S().column_vector();
    let image = u * vectors;
    let mut residual = 0.0f64;
    for k in 0..n {
        let mut col_norm = 0.0;
        let mut diff = 0.0;
        for i in 0..n {
            col_norm += vectors[(i, k)].norm_sqr();
            diff += (image[(i, k)] - values[k] * vectors[(i, k)]).norm_sqr();
        }
        residual = residual.max((diff / col_norm).sqrt());
    }
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::EigenResidual {
            residual,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    Ok(EigenphaseSet::from_phases(values.iter().map(|z| z.arg())))
}

/// `max_ij |(U^dagger U - 1)_ij|`.
pub fn unitarity_defect(u: MatRef<'_, c64>) -> f64 {
    linalg::unitarity_defect(u)
}

/// Largest displacement between two sorted eigenphase sets on the circle,
/// minimised over a one-slot cyclic relabelling (a phase crossing `0`).
pub fn max_phase_shift(a: &EigenphaseSet, b: &EigenphaseSet) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let n = a.dim();
    if n == 0 {
        return 0.0;
    }
    let circular = |x: f64, y: f64| {
        let d = (x - y).abs();
        d.min(2.0 * PI - d)
    };
    [0isize, 1, -1]
        .iter()
        .map(|&s| {
            (0..n)
                .map(|i| {
                    let j = (i as isize + s).rem_euclid(n as isize) as usize;
                    circular(a.phases[i], b.phases[j])
                })
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Step-doubling control for [`propagate_converged`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOptions {
    pub scheme: Scheme,
    pub initial_steps: usize,
    pub max_steps: usize,
    /// Largest eigenphase shift accepted between successive refinements.
    pub tolerance: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Magnus4,
            initial_steps: 256,
            max_steps: 16384,
            tolerance: 1e-6,
        }
    }
}

/// Converged propagator and its spectrum.
#[derive(Debug, Clone)]
pub struct FloquetSpectrum {
    pub unitary: UnitaryMatrix,
    pub phases: EigenphaseSet,
    /// Eigenphase shift against the propagator with half as many steps.
    pub last_shift: f64,
}

/// Doubles the step count until the eigenphases move by less than
/// `options.tolerance`, returning the finer of the last two propagators.
pub fn propagate_converged(
    hamiltonian: &SectorHamiltonian,
    options: &ConvergenceOptions,
) -> Result<FloquetSpectrum> {
    if options.initial_steps == 0 || options.max_steps < options.initial_steps {
        return Err(Error::InvalidParameter(format!(
            "invalid step range {}..={}",
            options.initial_steps, options.max_steps
        )));
    }
    let mut steps = options.initial_steps;
    let coarse = propagate_period(hamiltonian, options.scheme, steps)?;
    let mut coarse_phases = eigenphases(coarse.matrix.as_ref())?;
    let mut previous_shift = f64::NAN;
    loop {
        let fine = propagate_period(hamiltonian, options.scheme, 2 * steps)?;
        let fine_phases = eigenphases(fine.matrix.as_ref())?;
        let shift = max_phase_shift(&coarse_phases, &fine_phases);
        if shift < options.tolerance {
            return Ok(FloquetSpectrum {
                unitary: fine,
                phases: fine_phases,
                last_shift: shift,
            });
        }
        if 2 * steps >= options.max_steps {
            return Err(Error::NotConverged {
                previous_steps: steps / 2,
                previous_shift,
                last_steps: steps,
                last_shift: shift,
            });
        }
        previous_shift = shift;
        steps *= 2;
        coarse_phases = fine_phases;
    }
}
