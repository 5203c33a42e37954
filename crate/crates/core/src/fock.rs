//! Occupation-number bases and the operators of the tilted Bose-Hubbard chain.
//!
//! Sites are numbered from 1 in the tilt term `F l n_l`; everywhere else
//! (slices, bond indices) they are 0-based. The static chain uses
//!
//! ```text
//! H = -J/2 sum_l (a+_{l+1} a_l + h.c.) + U/2 sum_l n_l (n_l - 1) + F sum_l l n_l
//! ```
//!
//! and the gauge-transformed, periodic chain replaces the tilt by a phase
//! `e^{iFt}` on every forward hop, which makes it invariant under cyclic
//! translations and periodic in time with the Bloch period `2 pi / F`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io;

use faer::{c64, Mat};

use crate::{Error, Result};

/// Model energies, all in one unit. The harness fixes `j = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub j: f64,
    pub u: f64,
    pub f: f64,
}

impl ModelParams {
    pub fn new(j: f64, u: f64, f: f64) -> Self {
        Self { j, u, f }
    }

    /// Checks `J > 0`, `U >= 0` and finiteness of all three energies.
    pub fn validate(&self) -> Result<()> {
        if !(self.j.is_finite() && self.u.is_finite() && self.f.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameters {self:?}")));
        }
        if self.j <= 0.0 {
            return Err(Error::InvalidParameter(format!("J must be positive, got {}", self.j)));
        }
        if self.u < 0.0 {
            return Err(Error::InvalidParameter(format!("U must be nonnegative, got {}", self.u)));
        }
        Ok(())
    }

    /// Bloch period `2 pi / F`; requires `F > 0`.
    pub fn bloch_period(&self) -> Result<f64> {
        if self.f > 0.0 && self.f.is_finite() {
            Ok(2.0 * PI / self.f)
        } else {
            Err(Error::InvalidParameter(format!(
                "the Bloch period needs F > 0, got {}",
                self.f
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Hopping on bonds `(l, l+1)` for `l = 1..m-1`.
    Open,
    /// Adds the bond `(m, 1)`.
    Periodic,
}

/// All occupation vectors of `n_particles` bosons on `n_sites` sites with at
/// most `n_max` per site, in descending lexicographic order (`|20>, |11>, |02>`).
#[derive(Debug, Clone)]
pub struct FockBasis {
    n_particles: usize,
    n_sites: usize,
    n_max: usize,
    occupations: Vec<u8>,
    index: HashMap<Box<[u8]>, usize>,
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n_particles == other.n_particles
            && self.n_sites == other.n_sites
            && self.n_max == other.n_max
    }
}

impl FockBasis {
    /// Enumerates the basis. A zero-particle basis holds the vacuum only.
    pub fn new(n_particles: usize, n_sites: usize, n_max: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidParameter("a lattice needs at least one site".into()));
        }
        if n_max == 0 || n_max > u8::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "occupation cutoff must lie in 1..=255, got {n_max}"
            )));
        }
        if n_max * n_sites < n_particles {
            return Err(Error::EmptyBasis {
                n_particles,
                n_sites,
                n_max,
            });
        }

        let mut occupations = Vec::new();
        let mut current = vec![0u8; n_sites];
        fill(&mut current, 0, n_particles, n_max, &mut occupations);

        let index = occupations
            .chunks_exact(n_sites)
            .enumerate()
            .map(|(i, occ)| (Box::<[u8]>::from(occ), i))
            .collect();

        Ok(Self {
            n_particles,
            n_sites,
            n_max,
            occupations,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.occupations.len() / self.n_sites
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn local_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.occupations[i * self.n_sites..(i + 1) * self.n_sites]
    }

    pub fn index_of(&self, occupation: &[u8]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.occupations.chunks_exact(self.n_sites)
    }
}

fn fill(current: &mut [u8], site: usize, remaining: usize, n_max: usize, out: &mut Vec<u8>) {
    let sites_left = current.len() - site;
    if sites_left == 1 {
        current[site] = remaining as u8;
        out.extend_from_slice(current);
        return;
    }
    let capacity_after = (sites_left - 1) * n_max;
    let hi = remaining.min(n_max);
    let lo = remaining.saturating_sub(capacity_after);
    for n in (lo..=hi).rev() {
        current[site] = n as u8;
        fill(current, site + 1, remaining - n, n_max, out);
    }
}

/// Square complex matrix in coordinate form with entries sorted by
/// `(row, col)` and no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    entries: Vec<(usize, usize, c64)>,
}

impl SparseMatrix {
    /// Sorts the triplets and sums duplicates; exact zeros are dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, c64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut entries: Vec<(usize, usize, c64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside a {dim}x{dim} matrix");
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != c64::new(0.0, 0.0));
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, c64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize, col: usize) -> c64 {
        match self.entries.binary_search_by_key(&(row, col), |&(r, c, _)| (r, c)) {
            Ok(k) => self.entries[k].2,
            Err(_) => c64::new(0.0, 0.0),
        }
    }

    pub fn adjoint(&self) -> Self {
        let triplets = self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, triplets)
    }

    pub fn scaled(&self, factor: c64) -> Self {
        let triplets = self.entries.iter().map(|&(r, c, v)| (r, c, v * factor)).collect();
        Self::from_triplets(self.dim, triplets)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let triplets = self.entries.iter().chain(&other.entries).copied().collect();
        Self::from_triplets(self.dim, triplets)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let rows = other.row_ranges();
        let mut triplets = Vec::new();
        for &(r, k, a) in &self.entries {
            for &(_, c, b) in &other.entries[rows[k]..rows[k + 1]] {
                triplets.push((r, c, a * b));
            }
        }
        Self::from_triplets(self.dim, triplets)
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other)
            .add(&other.matmul(self).scaled(c64::new(-1.0, 0.0)))
    }

    pub fn matvec(&self, x: &[c64]) -> Vec<c64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![c64::new(0.0, 0.0); self.dim];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// `max_ij |A_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    /// `max_ij |(A - A^dagger)_ij|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> c64 {
        self.entries
            .iter()
            .filter(|e| e.0 == e.1)
            .map(|e| e.2)
            .sum()
    }

    /// Offsets of each row's first entry; length `dim + 1`.
    pub fn row_ranges(&self) -> Vec<usize> {
        let mut offsets = vec![0usize; self.dim + 1];
        for &(r, _, _) in &self.entries {
            offsets[r + 1] += 1;
        }
        for r in 0..self.dim {
            offsets[r + 1] += offsets[r];
        }
        offsets
    }

    /// Debug dump: one `row col re im` line per stored entry, row-major.
    pub fn write_entries<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        for &(r, c, v) in &self.entries {
            writeln!(out, "{r} {c} {} {}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// A [`SparseMatrix`] built to be Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian(SparseMatrix);

impl SparseHermitian {
    pub fn as_matrix(&self) -> &SparseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> SparseMatrix {
        self.0
    }
}

impl std::ops::Deref for SparseHermitian {
    type Target = SparseMatrix;

    fn deref(&self) -> &SparseMatrix {
        &self.0
    }
}

/// `U/2 sum_l n_l (n_l - 1)`, plus `F sum_l l n_l` when `tilt` is set.
pub fn diagonal_energy(occupation: &[u8], params: &ModelParams, tilt: bool) -> f64 {
    occupation
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let n = n as f64;
            let interaction = 0.5 * params.u * n * (n - 1.0);
            if tilt {
                interaction + params.f * (l + 1) as f64 * n
            } else {
                interaction
            }
        })
        .sum()
}

fn bonds(n_sites: usize, boundary: Boundary) -> impl Iterator<Item = (usize, usize)> {
    let periodic = matches!(boundary, Boundary::Periodic);
    let count = if periodic { n_sites } else { n_sites - 1 };
    (0..count).map(move |l| (l, (l + 1) % n_sites))
}

/// Forward hopping `K = sum_l a+_{l+1} a_l` over the bonds of `boundary`.
///
/// On a single periodic site the bond closes on itself and `K = n_1`.
pub fn forward_hopping(basis: &FockBasis, boundary: Boundary) -> SparseMatrix {
    let n_max = basis.n_max() as u8;
    let mut triplets = Vec::new();
    let mut scratch = vec![0u8; basis.n_sites()];
    for (col, occ) in basis.states().enumerate() {
        for (from, to) in bonds(basis.n_sites(), boundary) {
            if from == to {
                triplets.push((col, col, c64::new(occ[from] as f64, 0.0)));
                continue;
            }
            if occ[from] == 0 || occ[to] >= n_max {
                continue;
            }
            let amplitude = ((occ[from] as f64) * (occ[to] as f64 + 1.0)).sqrt();
            scratch.copy_from_slice(occ);
            scratch[from] -= 1;
            scratch[to] += 1;
            let row = basis
                .index_of(&scratch)
                .expect("hopping preserves particle number and cutoff");
            triplets.push((row, col, c64::new(amplitude, 0.0)));
        }
    }
    SparseMatrix::from_triplets(basis.dim(), triplets)
}

/// Static Hamiltonian of the tilted chain.
pub fn build_hamiltonian(
    basis: &FockBasis,
    params: &ModelParams,
    boundary: Boundary,
) -> SparseHermitian {
    let forward = forward_hopping(basis, boundary);
    let hopping = forward.add(&forward.adjoint()).scaled(c64::new(-0.5 * params.j, 0.0));
    let diagonal = basis
        .states()
        .enumerate()
        .map(|(i, occ)| (i, i, c64::new(diagonal_energy(occ, params, true), 0.0)))
        .collect();
    SparseHermitian(hopping.add(&SparseMatrix::from_triplets(basis.dim(), diagonal)))
}

/// Gauge-transformed periodic Hamiltonian at time `t`: every forward hop
/// carries `e^{iFt}` and the tilt term is absent.
pub fn build_gauge_hamiltonian(basis: &FockBasis, params: &ModelParams, t: f64) -> SparseHermitian {
    let parts = GaugeParts::new(basis, params);
    parts.at(t)
}

/// Time-independent pieces of the gauge Hamiltonian,
/// `H(t) = D + c(t) K + conj(c(t)) K^dagger` with `c(t) = -J/2 e^{iFt}`.
#[derive(Debug, Clone)]
pub struct GaugeParts {
    pub params: ModelParams,
    /// `D`, the interaction energy of each basis state.
    pub diagonal: Vec<f64>,
    /// `K`, forward hopping on the periodic ring.
    pub forward: SparseMatrix,
}

impl GaugeParts {
    pub fn new(basis: &FockBasis, params: &ModelParams) -> Self {
        let diagonal = basis
            .states()
            .map(|occ| diagonal_energy(occ, params, false))
            .collect();
        Self {
            params: *params,
            diagonal,
            forward: forward_hopping(basis, Boundary::Periodic),
        }
    }

    /// Hopping coefficient `c(t) = -J/2 e^{iFt}`.
    pub fn coupling(&self, t: f64) -> c64 {
        c64::cis(self.params.f * t) * (-0.5 * self.params.j)
    }

    pub fn at(&self, t: f64) -> SparseHermitian {
        let c = self.coupling(t);
        let forward = self.forward.scaled(c);
        let diagonal = self
            .diagonal
            .iter()
            .enumerate()
            .map(|(i, &d)| (i, i, c64::new(d, 0.0)))
            .collect();
        SparseHermitian(
            forward
                .add(&forward.adjoint())
                .add(&SparseMatrix::from_triplets(self.diagonal.len(), diagonal)),
        )
    }
}

/// `sum_l n_l` as a diagonal operator.
pub fn total_number(basis: &FockBasis) -> SparseHermitian {
    let triplets = basis
        .states()
        .enumerate()
        .map(|(i, occ)| {
            let n: usize = occ.iter().map(|&x| x as usize).sum();
            (i, i, c64::new(n as f64, 0.0))
        })
        .collect();
    SparseHermitian(SparseMatrix::from_triplets(basis.dim(), triplets))
}

/// Index permutation of the cyclic shift `(n_1..n_m) -> (n_m, n_1..n_{m-1})`:
/// `T |state_i> = |state_{perm[i]}>`.
pub fn translation(basis: &FockBasis) -> Vec<usize> {
    let m = basis.n_sites();
    let mut shifted = vec![0u8; m];
    basis
        .states()
        .map(|occ| {
            shifted[0] = occ[m - 1];
            shifted[1..].copy_from_slice(&occ[..m - 1]);
            basis.index_of(&shifted).expect("translation preserves the basis")
        })
        .collect()
}

/// `max |[T, A]_ij|` for the translation permutation `perm`.
pub fn translation_commutator_defect(op: &SparseMatrix, perm: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for &(r, c, v) in op.entries() {
        worst = worst.max((v - op.get(perm[r], perm[c])).norm());
    }
    worst
}

/// Symmetry-adapted basis of one quasimomentum sector of a periodic chain.
///
/// Each compatible translation orbit with representative `r` and size `p`
/// contributes `|r~> = p^{-1/2} sum_{j<p} e^{-2 pi i kappa j / m} T^j |r>`,
/// which satisfies `T |r~> = e^{2 pi i kappa / m} |r~>`.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    n_sites: usize,
    kappa: usize,
    parent_dim: usize,
    representatives: Vec<usize>,
    orbit_sizes: Vec<usize>,
    /// parent index -> (sector index, shift j) with `parent = T^j rep`.
    membership: Vec<Option<(u32, u32)>>,
    translation: Vec<usize>,
}

impl SectorBasis {
    /// Orbits whose size `p` violates `kappa p = 0 (mod m)` are skipped.
    pub fn new(basis: &FockBasis, kappa: usize) -> Result<Self> {
        let m = basis.n_sites();
        if kappa >= m {
            return Err(Error::InvalidParameter(format!(
                "quasimomentum index {kappa} outside 0..{m}"
            )));
        }
        let translation = translation(basis);
        let mut seen = vec![false; basis.dim()];
        let mut membership = vec![None; basis.dim()];
        let mut representatives = Vec::new();
        let mut orbit_sizes = Vec::new();
        let mut orbit = Vec::with_capacity(m);
        for start in 0..basis.dim() {
            if seen[start] {
                continue;
            }
            orbit.clear();
            let mut cursor = start;
            loop {
                seen[cursor] = true;
                orbit.push(cursor);
                cursor = translation[cursor];
                if cursor == start {
                    break;
                }
            }
            let p = orbit.len();
            if (kappa * p) % m != 0 {
                continue;
            }
            let sector_index = representatives.len() as u32;
            for (j, &member) in orbit.iter().enumerate() {
                membership[member] = Some((sector_index, j as u32));
            }
            representatives.push(start);
            orbit_sizes.push(p);
        }
        Ok(Self {
            n_sites: m,
            kappa,
            parent_dim: basis.dim(),
            representatives,
            orbit_sizes,
            membership,
            translation,
        })
    }

    pub fn dim(&self) -> usize {
        self.representatives.len()
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn parent_dim(&self) -> usize {
        self.parent_dim
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    pub fn orbit_sizes(&self) -> &[usize] {
        &self.orbit_sizes
    }

    pub fn translation(&self) -> &[usize] {
        &self.translation
    }

    /// Amplitude of `T^shift |rep_a>` in `|a~>`.
    pub fn coefficient(&self, a: usize, shift: usize) -> c64 {
        let p = self.orbit_sizes[a] as f64;
        let angle = -2.0 * PI * (self.kappa * shift) as f64 / self.n_sites as f64;
        c64::cis(angle) / p.sqrt()
    }

    /// Parent-space components of the `a`-th sector basis vector.
    pub fn vector(&self, a: usize) -> Vec<(usize, c64)> {
        let mut out = Vec::with_capacity(self.orbit_sizes[a]);
        let mut cursor = self.representatives[a];
        for j in 0..self.orbit_sizes[a] {
            out.push((cursor, self.coefficient(a, j)));
            cursor = self.translation[cursor];
        }
        out
    }

    /// Lifts sector amplitudes into the parent basis.
    pub fn embed(&self, amplitudes: &[c64]) -> Vec<c64> {
        assert_eq!(amplitudes.len(), self.dim());
        let mut out = vec![c64::new(0.0, 0.0); self.parent_dim];
        for (a, &amp) in amplitudes.iter().enumerate() {
            for (i, c) in self.vector(a) {
                out[i] += c * amp;
            }
        }
        out
    }

    /// Matrix of a translation-invariant operator within this sector, sparse.
    ///
    /// Fails when `op` does not commute with translations.
    pub fn project_sparse(&self, op: &SparseMatrix) -> Result<SparseMatrix> {
        assert_eq!(op.dim(), self.parent_dim);
        let scale = op.max_abs().max(1.0);
        let defect = translation_commutator_defect(op, &self.translation);
        if defect > 1e-12 * scale {
            return Err(Error::NotTranslationInvariant { defect });
        }

        let mut by_column: Vec<Vec<(usize, c64)>> = vec![Vec::new(); self.parent_dim];
        for &(r, c, v) in op.entries() {
            by_column[c].push((r, v));
        }

        let mut triplets = Vec::new();
        for b in 0..self.dim() {
            for (col, cb) in self.vector(b) {
                for &(row, v) in &by_column[col] {
                    if let Some((a, shift)) = self.membership[row] {
                        let ca = self.coefficient(a as usize, shift as usize);
                        triplets.push((a as usize, b, ca.conj() * cb * v));
                    }
                }
            }
        }
        let mut projected = SparseMatrix::from_triplets(self.dim(), triplets);
        let floor = 1e-14 * scale;
        projected.entries.retain(|e| e.2.norm() > floor);
        Ok(projected)
    }

    /// Dense matrix of a translation-invariant operator within this sector.
    pub fn project(&self, op: &SparseMatrix) -> Result<Mat<c64>> {
        Ok(self.project_sparse(op)?.to_dense())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(basis: &FockBasis) -> Vec<Vec<u8>> {
        basis.states().map(|s| s.to_vec()).collect()
    }

    fn binomial(n: usize, k: usize) -> usize {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn two_bosons_two_sites() {
        let basis = FockBasis::new(2, 2, 2).unwrap();
        assert_eq!(occ(&basis), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn paper_size_dimension() {
        let basis = FockBasis::new(8, 9, 8).unwrap();
        assert_eq!(basis.dim(), 12870);
        assert_eq!(basis.dim(), binomial(16, 8));
    }

    #[test]
    fn cutoff_forces_unit_filling() {
        let basis = FockBasis::new(3, 3, 1).unwrap();
        assert_eq!(occ(&basis), vec![vec![1, 1, 1]]);
    }

    #[test]
    fn impossible_filling_is_an_error() {
        assert!(matches!(
            FockBasis::new(5, 2, 2),
            Err(Error::EmptyBasis { .. })
        ));
    }

    #[test]
    fn lookup_inverts_enumeration() {
        let basis = FockBasis::new(4, 5, 2).unwrap();
        for (i, s) in basis.states().enumerate() {
            assert_eq!(basis.index_of(s), Some(i));
            assert_eq!(s.iter().map(|&x| x as usize).sum::<usize>(), 4);
            assert!(s.iter().all(|&x| x <= 2));
        }
    }

    #[test]
    fn uncut_dimension_is_binomial() {
        for n in 1..5 {
            for m in 1..6 {
                let basis = FockBasis::new(n, m, n).unwrap();
                assert_eq!(basis.dim(), binomial(n + m - 1, m - 1), "N={n} m={m}");
            }
        }
    }

    #[test]
    fn interaction_on_single_site() {
        let basis = FockBasis::new(2, 1, 2).unwrap();
        let h = build_hamiltonian(&basis, &ModelParams::new(0.0, 3.0, 0.0), Boundary::Open);
        assert_eq!(h.to_dense()[(0, 0)], c64::new(3.0, 0.0));
    }

    #[test]
    fn single_particle_on_two_sites() {
        let basis = FockBasis::new(1, 2, 1).unwrap();
        let h = build_hamiltonian(&basis, &ModelParams::new(1.0, 0.0, 2.0), Boundary::Open);
        let dense = h.to_dense();
        // |10> has tilt 2 * 1, |01> has 2 * 2
        assert_eq!(dense[(0, 0)], c64::new(2.0, 0.0));
        assert_eq!(dense[(1, 1)], c64::new(4.0, 0.0));
        assert_eq!(dense[(0, 1)], c64::new(-0.5, 0.0));
        assert_eq!(dense[(1, 0)], c64::new(-0.5, 0.0));
    }

    #[test]
    fn bosonic_enhancement() {
        let basis = FockBasis::new(2, 2, 2).unwrap();
        let h = build_hamiltonian(&basis, &ModelParams::new(1.0, 0.0, 0.0), Boundary::Open);
        let i20 = basis.index_of(&[2, 0]).unwrap();
        let i11 = basis.index_of(&[1, 1]).unwrap();
        assert!((h.get(i20, i11).re + 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauge_hamiltonian_limits() {
        let basis = FockBasis::new(3, 4, 3).unwrap();
        let params = ModelParams::new(1.0, 2.5, 1.7);
        let period = params.bloch_period().unwrap();
        let h0 = build_gauge_hamiltonian(&basis, &params, 0.0);
        let untilted = build_hamiltonian(
            &basis,
            &ModelParams { f: 0.0, ..params },
            Boundary::Periodic,
        );
        assert!(crate::linalg::max_abs_diff(h0.to_dense().as_ref(), untilted.to_dense().as_ref()) < 1e-15);
        let ht = build_gauge_hamiltonian(&basis, &params, period);
        assert!(crate::linalg::max_abs_diff(h0.to_dense().as_ref(), ht.to_dense().as_ref()) < 1e-14);

        let frozen = build_gauge_hamiltonian(&basis, &ModelParams { j: 0.0, ..params }, 0.37);
        assert!(frozen.entries().iter().all(|e| e.0 == e.1));
    }

    #[test]
    fn translation_shifts_cyclically() {
        let basis = FockBasis::new(3, 3, 3).unwrap();
        let perm = translation(&basis);
        let from = basis.index_of(&[2, 0, 1]).unwrap();
        assert_eq!(basis.state(perm[from]), &[1, 2, 0]);

        let mut cursor: Vec<usize> = (0..basis.dim()).collect();
        for _ in 0..3 {
            cursor = cursor.iter().map(|&i| perm[i]).collect();
        }
        assert_eq!(cursor, (0..basis.dim()).collect::<Vec<_>>());
    }

    #[test]
    fn single_particle_sector_is_uniform() {
        let basis = FockBasis::new(1, 5, 1).unwrap();
        let sector = SectorBasis::new(&basis, 0).unwrap();
        assert_eq!(sector.dim(), 1);
        for (_, c) in sector.vector(0) {
            assert!((c - c64::new(1.0 / 5f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn tilted_operator_cannot_be_projected() {
        let basis = FockBasis::new(2, 3, 2).unwrap();
        let h = build_hamiltonian(&basis, &ModelParams::new(1.0, 1.0, 0.5), Boundary::Periodic);
        let sector = SectorBasis::new(&basis, 0).unwrap();
        assert!(matches!(
            sector.project(&h),
            Err(Error::NotTranslationInvariant { .. })
        ));
    }

    #[test]
    fn sector_dimensions_add_up() {
        for (n, m) in [(8, 9), (4, 4), (3, 6), (2, 2)] {
            let basis = FockBasis::new(n, m, n).unwrap();
            let total: usize = (0..m).map(|k| SectorBasis::new(&basis, k).unwrap().dim()).sum();
            assert_eq!(total, basis.dim(), "N={n} m={m}");
        }
    }

    #[test]
    fn dump_format() {
        let basis = FockBasis::new(1, 2, 1).unwrap();
        let h = build_hamiltonian(&basis, &ModelParams::new(1.0, 0.0, 2.0), Boundary::Open);
        let mut buf = Vec::new();
        h.write_entries(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "0 0 2 0\n0 1 -0.5 0\n1 0 -0.5 0\n1 1 4 0\n"
        );
    }
}
