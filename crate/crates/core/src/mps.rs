//! Particle-number conserving matrix product states.
//!
//! Every bond carries a U(1) label, the number of bosons to its left, and the
//! site tensors are stored as dense blocks between labelled sectors. The
//! state is kept in right-canonical form `S_0 B_0 B_1 ... B_{m-1}` together
//! with the Schmidt values at every cut, so a two-site update never needs a
//! sweep and a bond's spectrum can be read off directly.
//!
//! Cuts are numbered `0..=m` (cut `c` sits left of site `c`); the public
//! `bond` index `b` is the cut between sites `b` and `b + 1`, i.e. cut `b + 1`.

use faer::{c64, Mat};

use crate::fock::FockBasis;
use crate::linalg::thin_svd;
use crate::{Error, Result};

/// Singular values at or below this are treated as exact zeros.
pub const ZERO_CUTOFF: f64 = 1e-14;
/// Default amplitude cap of [`MpsState::to_state_vector`].
pub const DEFAULT_VECTOR_CAP: usize = 2_000_000;

const MAGIC: &[u8; 8] = b"TBHMPS\0\0";
const FORMAT_VERSION: u32 = 1;

/// Schmidt coefficients across one bond, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtSpectrum {
    pub bond: usize,
    pub values: Vec<f64>,
    /// Squared weight removed by the truncation that produced `values`.
    pub discarded_weight: f64,
}

impl SchmidtSpectrum {
    /// Sorts `values` descending; no discarded weight.
    pub fn new(bond: usize, mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self {
            bond,
            values,
            discarded_weight: 0.0,
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|l| l * l).sum()
    }

    /// Keeps the `chi` largest values without rescaling them, so that
    /// `sum(values^2) + discarded_weight` still equals the original norm.
    pub fn truncated(&self, chi: usize) -> Self {
        let keep = chi.min(self.values.len());
        Self {
            bond: self.bond,
            values: self.values[..keep].to_vec(),
            discarded_weight: self.discarded_weight
                + self.values[keep..].iter().map(|l| l * l).sum::<f64>(),
        }
    }

    pub fn entropy(&self) -> f64 {
        von_neumann_entropy(self)
    }
}

/// `S = -sum lambda^2 log2 lambda^2`, in bits.
pub fn von_neumann_entropy(spectrum: &SchmidtSpectrum) -> f64 {
    let s: f64 = spectrum
        .values
        .iter()
        .map(|&l| l * l)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    // a lone unit coefficient gives -0
    s + 0.0
}

/// `#{alpha : lambda_alpha > epsilon}`.
pub fn count_above_threshold(spectrum: &SchmidtSpectrum, epsilon: f64) -> usize {
    spectrum.values.iter().filter(|&&l| l > epsilon).count()
}

/// Index-wise mean of descending spectra, each zero-padded (or cut) to `chi`.
pub fn average_spectra(spectra: &[SchmidtSpectrum], chi: usize) -> Vec<f64> {
    let mut mean = vec![0.0; chi];
    if spectra.is_empty() {
        return mean;
    }
    for s in spectra {
        for (m, &l) in mean.iter_mut().zip(&s.values) {
            *m += l;
        }
    }
    let n = spectra.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Number-conserving two-site operator, one dense block per total occupation.
#[derive(Debug, Clone)]
pub struct TwoSiteGate {
    n_max: usize,
    /// `blocks[n]` acts on [`TwoSiteGate::pairs`]`(n_max, n)`.
    blocks: Vec<Mat<c64>>,
}

impl TwoSiteGate {
    /// Occupation pairs `(s1, s2)` with `s1 + s2 = total`, `s1` descending.
    pub fn pairs(n_max: usize, total: usize) -> Vec<(usize, usize)> {
        let lo = total.saturating_sub(n_max);
        let hi = total.min(n_max);
        if lo > hi {
            return Vec::new();
        }
        (lo..=hi).rev().map(|s1| (s1, total - s1)).collect()
    }

    pub fn from_blocks(n_max: usize, blocks: Vec<Mat<c64>>) -> Result<Self> {
        if blocks.len() != 2 * n_max + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} gate blocks, got {}",
                2 * n_max + 1,
                blocks.len()
            )));
        }
        for (total, b) in blocks.iter().enumerate() {
            let p = Self::pairs(n_max, total).len();
            if b.nrows() != p || b.ncols() != p {
                return Err(Error::InvalidParameter(format!(
                    "gate block {total} must be {p}x{p}"
                )));
            }
        }
        Ok(Self { n_max, blocks })
    }

    pub fn identity(n_max: usize) -> Self {
        let blocks = (0..=2 * n_max)
            .map(|t| crate::linalg::identity(Self::pairs(n_max, t).len()))
            .collect();
        Self { n_max, blocks }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn block(&self, total: usize) -> &Mat<c64> {
        &self.blocks[total]
    }

    /// Dense `d^2 x d^2` matrix on `|s1 s2>` with index `s1 * d + s2`.
    pub fn to_dense(&self) -> Mat<c64> {
        let d = self.n_max + 1;
        let mut out = Mat::zeros(d * d, d * d);
        for (total, block) in self.blocks.iter().enumerate() {
            let pairs = Self::pairs(self.n_max, total);
            for (a, &(t1, t2)) in pairs.iter().enumerate() {
                for (b, &(s1, s2)) in pairs.iter().enumerate() {
                    out[(t1 * d + t2, s1 * d + s2)] = block[(a, b)];
                }
            }
        }
        out
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| crate::linalg::unitarity_defect(b.as_ref()))
            .fold(0.0, f64::max)
    }
}

/// Matrix product state with a fixed particle number.
#[derive(Debug, Clone)]
pub struct MpsState {
    n_sites: usize,
    n_max: usize,
    n_particles: usize,
    chi_max: usize,
    /// `dims[cut][charge]`.
    dims: Vec<Vec<usize>>,
    /// `tensors[site][ql * d + s]`, shape `dims[site][ql] x dims[site + 1][ql + s]`.
    tensors: Vec<Vec<Mat<c64>>>,
    /// `schmidt[cut][charge]`, descending.
    schmidt: Vec<Vec<Vec<f64>>>,
    canonical: bool,
}

impl MpsState {
    /// `|n_1> (x) |n_2> (x) ...`, bond dimension one everywhere.
    pub fn from_product_state(occupations: &[u8], n_max: usize, chi_max: usize) -> Result<Self> {
        let m = occupations.len();
        if m == 0 || chi_max == 0 || !(1..=255).contains(&n_max) {
            return Err(Error::InvalidParameter(format!(
                "need sites, chi_max >= 1 and 1 <= n_max <= 255 (m={m}, chi_max={chi_max}, n_max={n_max})"
            )));
        }
        if let Some((site, &occupation)) = occupations
            .iter()
            .enumerate()
            .find(|(_, &n)| n as usize > n_max)
        {
            return Err(Error::OccupationAboveCutoff {
                site,
                occupation: occupation as usize,
                n_max,
            });
        }
        let n_particles: usize = occupations.iter().map(|&n| n as usize).sum();
        let mut state = Self::empty(m, n_max, n_particles, chi_max);
        let mut q = 0;
        for (i, &n) in occupations.iter().enumerate() {
            state.dims[i][q] = 1;
            state.schmidt[i][q] = vec![1.0];
            q += n as usize;
        }
        state.dims[m][q] = 1;
        state.schmidt[m][q] = vec![1.0];
        state.resize_blocks();
        let mut q = 0;
        for (i, &n) in occupations.iter().enumerate() {
            let idx = state.block_index(q, n as usize);
            state.tensors[i][idx] = Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0));
            q += n as usize;
        }
        state.canonical = true;
        Ok(state)
    }

    /// Exact MPS of a state given by its amplitudes on a Fock basis, built from
    /// prefix tensors and compressed by a canonicalization sweep. Bonds wider
    /// than `chi_max` are then truncated left to right.
    pub fn from_fock_amplitudes(basis: &FockBasis, amplitudes: &[c64], chi_max: usize) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch);
        }
        if chi_max == 0 {
            return Err(Error::InvalidParameter("chi_max must be at least 1".into()));
        }
        let m = basis.n_sites();
        let n_max = basis.n_max();
        let n = basis.n_particles();
        let d = n_max + 1;
        let mut state = Self::empty(m, n_max, n, chi_max);
        // index of every distinct prefix within its charge sector, per cut
        let mut prefix_index: Vec<std::collections::HashMap<&[u8], usize>> =
            vec![Default::default(); m];
        for occ in basis.states() {
            let mut q = 0;
            for c in 0..m {
                let key = &occ[..c];
                if !prefix_index[c].contains_key(key) {
                    let next = state.dims[c][q];
                    prefix_index[c].insert(key, next);
                    state.dims[c][q] += 1;
                }
                q += occ[c] as usize;
            }
        }
        state.dims[m][n] = 1;
        state.resize_blocks();
        for (occ, &amp) in basis.states().zip(amplitudes) {
            let mut q = 0;
            for c in 0..m {
                let row = prefix_index[c][&occ[..c]];
                let s = occ[c] as usize;
                let (col, value) = if c + 1 < m {
                    (prefix_index[c + 1][&occ[..=c]], c64::new(1.0, 0.0))
                } else {
                    (0, amp)
                };
                state.tensors[c][q * d + s][(row, col)] = value;
                q += s;
            }
        }
        state.canonicalize()?;
        for bond in 0..m.saturating_sub(1) {
            if state.bond_dim(bond) > chi_max {
                state.truncate_bond(bond, chi_max)?;
            }
        }
        Ok(state)
    }

    /// Exact MPS of a tensor-product amplitude vector (site 0 slowest). The
    /// vector must have a definite particle number.
    pub fn from_state_vector(vector: &[c64], n_sites: usize, n_max: usize, chi_max: usize) -> Result<Self> {
        let d = n_max + 1;
        let expected = d
            .checked_pow(n_sites as u32)
            .ok_or(Error::SizeCap { size: usize::MAX, cap: DEFAULT_VECTOR_CAP })?;
        if vector.len() != expected {
            return Err(Error::BasisMismatch);
        }
        let digits = |mut index: usize| {
            let mut occ = vec![0u8; n_sites];
            for slot in occ.iter_mut().rev() {
                *slot = (index % d) as u8;
                index /= d;
            }
            occ
        };
        let (peak, _) = vector
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .ok_or(Error::BasisMismatch)?;
        let n: usize = digits(peak).iter().map(|&x| x as usize).sum();
        let total: f64 = vector.iter().map(|z| z.norm_sqr()).sum();
        let outside: f64 = vector
            .iter()
            .enumerate()
            .filter(|(i, _)| digits(*i).iter().map(|&x| x as usize).sum::<usize>() != n)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        if outside > 1e-20 * total {
            return Err(Error::InvalidParameter(
                "state vector mixes particle numbers".into(),
            ));
        }
        let basis = FockBasis::new(n, n_sites, n_max)?;
        let amplitudes: Vec<c64> = basis
            .states()
            .map(|occ| vector[occ.iter().fold(0, |acc, &x| acc * d + x as usize)])
            .collect();
        Self::from_fock_amplitudes(&basis, &amplitudes, chi_max)
    }

    fn empty(m: usize, n_max: usize, n_particles: usize, chi_max: usize) -> Self {
        Self {
            n_sites: m,
            n_max,
            n_particles,
            chi_max,
            dims: vec![vec![0; n_particles + 1]; m + 1],
            tensors: vec![Vec::new(); m],
            schmidt: vec![vec![Vec::new(); n_particles + 1]; m + 1],
            canonical: false,
        }
    }

    /// Re-allocates every block as zeros matching `dims`.
    fn resize_blocks(&mut self) {
        let d = self.local_dim();
        for i in 0..self.n_sites {
            self.tensors[i] = (0..(self.n_particles + 1) * d)
                .map(|idx| {
                    let (ql, s) = (idx / d, idx % d);
                    let qr = ql + s;
                    let cols = if qr <= self.n_particles {
                        self.dims[i + 1][qr]
                    } else {
                        0
                    };
                    let rows = if qr <= self.n_particles { self.dims[i][ql] } else { 0 };
                    Mat::zeros(rows, cols)
                })
                .collect();
        }
    }

    fn block_index(&self, ql: usize, s: usize) -> usize {
        ql * self.local_dim() + s
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

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn chi_max(&self) -> usize {
        self.chi_max
    }

    pub fn set_chi_max(&mut self, chi_max: usize) {
        self.chi_max = chi_max.max(1);
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    fn check_bond(&self, bond: usize) -> Result<()> {
        if bond + 1 >= self.n_sites {
            return Err(Error::InvalidParameter(format!(
                "bond {bond} out of range for {} sites",
                self.n_sites
            )));
        }
        Ok(())
    }

    pub fn bond_dim(&self, bond: usize) -> usize {
        self.dims[bond + 1].iter().sum()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        (0..self.n_sites.saturating_sub(1)).map(|b| self.bond_dim(b)).collect()
    }

    /// `<psi|psi>` by transfer matrices; valid in any gauge.
    pub fn norm_squared(&self) -> f64 {
        let d = self.local_dim();
        let n = self.n_particles;
        let mut env: Vec<Mat<c64>> = (0..=n)
            .map(|q| Mat::zeros(self.dims[0][q], self.dims[0][q]))
            .collect();
        env[0] = Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0));
        for i in 0..self.n_sites {
            let mut next: Vec<Mat<c64>> = (0..=n)
                .map(|q| Mat::zeros(self.dims[i + 1][q], self.dims[i + 1][q]))
                .collect();
            for ql in 0..=n {
                if self.dims[i][ql] == 0 {
                    continue;
                }
                for s in 0..d {
                    let qr = ql + s;
                    if qr > n || self.dims[i + 1][qr] == 0 {
                        continue;
                    }
                    let b = &self.tensors[i][ql * d + s];
                    next[qr] += b.adjoint() * &env[ql] * b;
                }
            }
            env = next;
        }
        if self.dims[self.n_sites][n] == 0 {
            return 0.0;
        }
        env[n][(0, 0)].re
    }

    /// Restores exact right-canonical form and Schmidt values with a left
    /// sweep followed by a right sweep, normalizing the state. Returns the norm
    /// it had before.
    pub fn canonicalize(&mut self) -> Result<f64> {
        let m = self.n_sites;
        let n = self.n_particles;
        let d = self.local_dim();

        // left sweep: A_i left-canonical, carry = diag(s) V^dagger per charge
        let mut carry: Vec<Mat<c64>> = (0..=n)
            .map(|q| crate::linalg::identity(self.dims[0][q]))
            .collect();
        let mut left_dims = vec![vec![0usize; n + 1]; m + 1];
        left_dims[0] = self.dims[0].clone();
        for i in 0..m {
            let mut svds = Vec::with_capacity(n + 1);
            let mut weight = 0.0;
            for qr in 0..=n {
                let cols = self.dims[i + 1][qr];
                let members: Vec<(usize, usize)> = (0..d)
                    .filter(|&s| s <= qr && left_dims[i][qr - s] > 0)
                    .map(|s| (qr - s, s))
                    .collect();
                let rows: usize = members.iter().map(|&(ql, _)| left_dims[i][ql]).sum();
                if cols == 0 || rows == 0 {
                    svds.push(None);
                    continue;
                }
                let mut stacked = Mat::<c64>::zeros(rows, cols);
                let mut r0 = 0;
                for &(ql, s) in &members {
                    let part = &carry[ql] * &self.tensors[i][ql * d + s];
                    stacked
                        .submatrix_mut(r0, 0, part.nrows(), cols)
                        .copy_from(&part);
                    r0 += part.nrows();
                }
                let svd = thin_svd(stacked.as_ref())?;
                weight += svd.s.iter().map(|x| x * x).sum::<f64>();
                svds.push(Some((members, svd)));
            }
            let cutoff = ZERO_CUTOFF * weight.sqrt();
            let mut new_blocks: Vec<Mat<c64>> = Vec::with_capacity((n + 1) * d);
            let mut kept = vec![0usize; n + 1];
            let mut new_carry: Vec<Mat<c64>> = Vec::with_capacity(n + 1);
            for (qr, entry) in svds.iter().enumerate() {
                match entry {
                    Some((_, svd)) => {
                        let k = svd.s.iter().take_while(|&&x| x > cutoff).count();
                        kept[qr] = k;
                        let vt = svd.v.as_ref().submatrix(0, 0, svd.v.nrows(), k).adjoint().to_owned();
                        new_carry.push(Mat::from_fn(k, vt.ncols(), |a, b| vt[(a, b)] * svd.s[a]));
                    }
                    None => new_carry.push(Mat::zeros(0, self.dims[i + 1][qr])),
                }
            }
            for idx in 0..(n + 1) * d {
                let (ql, s) = (idx / d, idx % d);
                let qr = ql + s;
                if qr > n {
                    new_blocks.push(Mat::zeros(0, 0));
                    continue;
                }
                new_blocks.push(Mat::zeros(left_dims[i][ql], kept[qr]));
            }
            for (qr, entry) in svds.into_iter().enumerate() {
                if let Some((members, svd)) = entry {
                    let k = kept[qr];
                    let mut r0 = 0;
                    for (ql, s) in members {
                        let rows = left_dims[i][ql];
                        new_blocks[ql * d + s] = svd.u.as_ref().submatrix(r0, 0, rows, k).to_owned();
                        r0 += rows;
                    }
                }
            }
            self.tensors[i] = new_blocks;
            left_dims[i + 1] = kept;
            carry = new_carry;
        }
        // the final carry is the 1x1 norm-and-phase of the state
        let total = if left_dims[m][n] == 1 {
            carry[n][(0, 0)]
        } else {
            c64::new(0.0, 0.0)
        };
        let norm = total.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("cannot canonicalize a zero state".into()));
        }
        self.dims = left_dims;

        // right sweep: B_i = V^dagger, Schmidt values at every cut
        let mut right: Vec<Mat<c64>> = (0..=n).map(|q| Mat::zeros(0, self.dims[m][q])).collect();
        right[n] = Mat::from_fn(1, 1, |_, _| total / norm);
        let mut right_dims = vec![vec![0usize; n + 1]; m + 1];
        right_dims[m] = self.dims[m].clone();
        for i in (0..m).rev() {
            let mut new_blocks: Vec<Mat<c64>> = vec![Mat::zeros(0, 0); (n + 1) * d];
            let mut new_right: Vec<Mat<c64>> = Vec::with_capacity(n + 1);
            let mut kept = vec![0usize; n + 1];
            let mut values = vec![Vec::new(); n + 1];
            let mut pending = Vec::new();
            for ql in 0..=n {
                let rows = self.dims[i][ql];
                let members: Vec<(usize, usize)> = (0..d)
                    .filter(|&s| ql + s <= n && right_dims[i + 1][ql + s] > 0)
                    .map(|s| (s, ql + s))
                    .collect();
                let cols: usize = members.iter().map(|&(_, qr)| right_dims[i + 1][qr]).sum();
                if rows == 0 || cols == 0 {
                    new_right.push(Mat::zeros(rows, 0));
                    pending.push(None);
                    continue;
                }
                let mut joined = Mat::<c64>::zeros(rows, cols);
                let mut c0 = 0;
                for &(s, qr) in &members {
                    let part = &self.tensors[i][ql * d + s] * &right[qr];
                    joined.submatrix_mut(0, c0, rows, part.ncols()).copy_from(&part);
                    c0 += part.ncols();
                }
                let svd = thin_svd(joined.as_ref())?;
                let k = svd.s.iter().take_while(|&&x| x > ZERO_CUTOFF).count();
                kept[ql] = k;
                values[ql] = svd.s[..k].to_vec();
                new_right.push(Mat::from_fn(rows, k, |a, b| svd.u[(a, b)] * svd.s[b]));
                pending.push(Some((members, svd)));
            }
            for (ql, entry) in pending.into_iter().enumerate() {
                if let Some((members, svd)) = entry {
                    let k = kept[ql];
                    let mut c0 = 0;
                    for (s, qr) in members {
                        let cols = right_dims[i + 1][qr];
                        new_blocks[ql * d + s] = svd
                            .v
                            .as_ref()
                            .submatrix(c0, 0, cols, k)
                            .adjoint()
                            .to_owned();
                        c0 += cols;
                    }
                }
            }
            for idx in 0..(n + 1) * d {
                let (ql, s) = (idx / d, idx % d);
                if ql + s <= n {
                    let shape = (kept[ql], right_dims[i + 1][ql + s]);
                    if (new_blocks[idx].nrows(), new_blocks[idx].ncols()) != shape {
                        new_blocks[idx] = Mat::zeros(shape.0, shape.1);
                    }
                }
            }
            self.tensors[i] = new_blocks;
            right_dims[i] = kept;
            self.schmidt[i] = values;
            right = new_right;
        }
        // remaining carry at cut 0 is a unit phase; fold it into site 0
        let phase = right[0][(0, 0)];
        let phase = phase / phase.norm();
        for s in 0..d {
            let b = &mut self.tensors[0][s];
            for c in 0..b.ncols() {
                for r in 0..b.nrows() {
                    b[(r, c)] *= phase;
                }
            }
        }
        self.dims = right_dims;
        self.schmidt[0] = vec![Vec::new(); n + 1];
        self.schmidt[0][0] = vec![1.0];
        self.schmidt[m] = vec![Vec::new(); n + 1];
        self.schmidt[m][n] = vec![1.0];
        self.canonical = true;
        Ok(norm)
    }

    fn ensure_canonical(&mut self) -> Result<()> {
        if !self.canonical {
            self.canonicalize()?;
        }
        Ok(())
    }

    /// Schmidt values at `bond`, canonicalizing first if needed.
    pub fn schmidt_spectrum(&mut self, bond: usize) -> Result<SchmidtSpectrum> {
        self.check_bond(bond)?;
        self.ensure_canonical()?;
        Ok(self.stored_spectrum(bond))
    }

    fn stored_spectrum(&self, bond: usize) -> SchmidtSpectrum {
        SchmidtSpectrum::new(bond, self.schmidt[bond + 1].concat())
    }

    pub fn schmidt_spectra(&mut self) -> Result<Vec<SchmidtSpectrum>> {
        self.ensure_canonical()?;
        Ok((0..self.n_sites - 1).map(|b| self.stored_spectrum(b)).collect())
    }

    pub fn entropies(&mut self) -> Result<Vec<f64>> {
        Ok(self.schmidt_spectra()?.iter().map(von_neumann_entropy).collect())
    }

    /// Bond with the largest entropy; ties go to the smallest index.
    pub fn max_entropy_bond(&mut self) -> Result<(usize, f64)> {
        if self.n_sites < 2 {
            return Err(Error::InvalidParameter("a single site has no bond".into()));
        }
        let entropies = self.entropies()?;
        let mut best = (0, entropies[0]);
        for (b, &s) in entropies.iter().enumerate().skip(1) {
            if s > best.1 {
                best = (b, s);
            }
        }
        Ok(best)
    }

    /// `<n_l>` for every site.
    pub fn densities(&mut self) -> Result<Vec<f64>> {
        self.ensure_canonical()?;
        let d = self.local_dim();
        let n = self.n_particles;
        Ok((0..self.n_sites)
            .map(|i| {
                let mut total = 0.0;
                for ql in 0..=n {
                    for (r, &lambda) in self.schmidt[i][ql].iter().enumerate() {
                        for s in 1..d.min(n - ql + 1) {
                            let b = &self.tensors[i][ql * d + s];
                            let row: f64 = (0..b.ncols()).map(|c| b[(r, c)].norm_sqr()).sum();
                            total += s as f64 * lambda * lambda * row;
                        }
                    }
                }
                total
            })
            .collect())
    }

    /// Keeps the `chi` largest Schmidt values at `bond` and renormalizes.
    /// Returns the discarded weight. Spectra at other bonds change, so the
    /// state is no longer marked canonical when anything was dropped.
    pub fn truncate_bond(&mut self, bond: usize, chi: usize) -> Result<f64> {
        self.check_bond(bond)?;
        self.ensure_canonical()?;
        let cut = bond + 1;
        let kept = keep_largest(&self.schmidt[cut], chi.max(1));
        let discarded: f64 = self.schmidt[cut]
            .iter()
            .zip(&kept)
            .flat_map(|(v, &k)| v[k..].iter())
            .map(|l| l * l)
            .sum();
        if discarded == 0.0 && kept.iter().zip(&self.schmidt[cut]).all(|(&k, v)| k == v.len()) {
            return Ok(0.0);
        }
        let scale = 1.0 / (1.0 - discarded).sqrt();
        let d = self.local_dim();
        let n = self.n_particles;
        for q in 0..=n {
            let k = kept[q];
            self.schmidt[cut][q].truncate(k);
            self.schmidt[cut][q].iter_mut().for_each(|l| *l *= scale);
            self.dims[cut][q] = k;
            for s in 0..d {
                if s <= q {
                    let b = &mut self.tensors[bond][(q - s) * d + s];
                    *b = Mat::from_fn(b.nrows(), k, |r, c| b[(r, c)] * scale);
                }
                if q + s <= n {
                    let b = &mut self.tensors[bond + 1][q * d + s];
                    *b = b.as_ref().submatrix(0, 0, k, b.ncols()).to_owned();
                }
            }
        }
        self.canonical = false;
        Ok(discarded)
    }

    /// Applies `gate` to sites `(site, site + 1)`, splits with an SVD per
    /// middle charge, and keeps at most `chi_max` values above
    /// [`ZERO_CUTOFF`]. Returns the discarded weight.
    pub fn apply_two_site(&mut self, site: usize, gate: &TwoSiteGate, renormalize: bool) -> Result<f64> {
        self.check_bond(site)?;
        if gate.n_max != self.n_max {
            return Err(Error::InvalidParameter(format!(
                "gate cutoff {} does not match state cutoff {}",
                gate.n_max, self.n_max
            )));
        }
        let d = self.local_dim();
        let n = self.n_particles;
        let i = site;
        let (dl, dm, dr) = (&self.dims[i], &self.dims[i + 1], &self.dims[i + 2]);

        // theta[(ql, t1, t2)] = sum G (B_i B_{i+1}), shape dl[ql] x dr[ql + t1 + t2]
        let key = |ql: usize, t1: usize, t2: usize| (ql * d + t1) * d + t2;
        let mut theta: Vec<Option<Mat<c64>>> = vec![None; (n + 1) * d * d];
        for ql in 0..=n {
            if dl[ql] == 0 {
                continue;
            }
            for total in 0..=(2 * self.n_max).min(n - ql) {
                let qr = ql + total;
                if dr[qr] == 0 {
                    continue;
                }
                let pairs = TwoSiteGate::pairs(self.n_max, total);
                let products: Vec<Option<Mat<c64>>> = pairs
                    .iter()
                    .map(|&(s1, s2)| {
                        let qm = ql + s1;
                        (dm[qm] > 0).then(|| &self.tensors[i][ql * d + s1] * &self.tensors[i + 1][qm * d + s2])
                    })
                    .collect();
                if products.iter().all(Option::is_none) {
                    continue;
                }
                let g = gate.block(total);
                for (a, &(t1, t2)) in pairs.iter().enumerate() {
                    let mut out = Mat::<c64>::zeros(dl[ql], dr[qr]);
                    for (b, p) in products.iter().enumerate() {
                        if let Some(p) = p {
                            let w = g[(a, b)];
                            if w != c64::new(0.0, 0.0) {
                                out += Mat::from_fn(p.nrows(), p.ncols(), |r, c| w * p[(r, c)]);
                            }
                        }
                    }
                    theta[key(ql, t1, t2)] = Some(out);
                }
            }
        }

        // SVD of S_i theta per middle charge
        struct Split {
            rows: Vec<(usize, usize)>,
            cols: Vec<(usize, usize)>,
            svd: crate::linalg::Svd,
        }
        let mut splits: Vec<Option<Split>> = Vec::with_capacity(n + 1);
        for qm in 0..=n {
            let rows: Vec<(usize, usize)> = (0..d)
                .filter(|&t1| t1 <= qm && dl[qm - t1] > 0)
                .map(|t1| (qm - t1, t1))
                .collect();
            let cols: Vec<(usize, usize)> = (0..d)
                .filter(|&t2| qm + t2 <= n && dr[qm + t2] > 0)
                .map(|t2| (t2, qm + t2))
                .collect();
            let nr: usize = rows.iter().map(|&(ql, _)| dl[ql]).sum();
            let nc: usize = cols.iter().map(|&(_, qr)| dr[qr]).sum();
            if nr == 0 || nc == 0 {
                splits.push(None);
                continue;
            }
            let mut block = Mat::<c64>::zeros(nr, nc);
            let mut any = false;
            let mut r0 = 0;
            for &(ql, t1) in &rows {
                let lambda = &self.schmidt[i][ql];
                let mut c0 = 0;
                for &(t2, qr) in &cols {
                    if let Some(t) = &theta[key(ql, t1, t2)] {
                        any = true;
                        for c in 0..dr[qr] {
                            for r in 0..dl[ql] {
                                block[(r0 + r, c0 + c)] = t[(r, c)] * lambda[r];
                            }
                        }
                    }
                    c0 += dr[qr];
                }
                r0 += dl[ql];
            }
            if !any {
                splits.push(None);
                continue;
            }
            let svd = thin_svd(block.as_ref())?;
            splits.push(Some(Split { rows, cols, svd }));
        }

        let spectra: Vec<Vec<f64>> = splits
            .iter()
            .map(|s| s.as_ref().map(|s| s.svd.s.clone()).unwrap_or_default())
            .collect();
        let kept = keep_largest(&spectra, self.chi_max);
        let mut discarded = 0.0;
        let mut truncated = false;
        let mut kept_weight = 0.0;
        for (values, &k) in spectra.iter().zip(&kept) {
            let dropped = &values[k..];
            discarded += dropped.iter().map(|x| x * x).sum::<f64>();
            truncated |= dropped.iter().any(|&x| x > ZERO_CUTOFF);
            kept_weight += values[..k].iter().map(|x| x * x).sum::<f64>();
        }
        let renorm = if renormalize { kept_weight.sqrt() } else { 1.0 };

        let mut left_blocks: Vec<Mat<c64>> = (0..(n + 1) * d)
            .map(|idx| {
                let (ql, t1) = (idx / d, idx % d);
                let qm = ql + t1;
                if qm > n {
                    Mat::zeros(0, 0)
                } else {
                    Mat::zeros(dl[ql], kept[qm])
                }
            })
            .collect();
        let mut right_blocks: Vec<Mat<c64>> = (0..(n + 1) * d)
            .map(|idx| {
                let (qm, t2) = (idx / d, idx % d);
                let qr = qm + t2;
                if qr > n {
                    Mat::zeros(0, 0)
                } else {
                    Mat::zeros(kept[qm], dr[qr])
                }
            })
            .collect();
        let mut middle = vec![Vec::new(); n + 1];
        for (qm, split) in splits.into_iter().enumerate() {
            let Some(Split { rows, cols, svd }) = split else {
                continue;
            };
            let k = kept[qm];
            if k == 0 {
                continue;
            }
            middle[qm] = svd.s[..k].iter().map(|x| x / renorm).collect();
            let v_kept = svd.v.as_ref().submatrix(0, 0, svd.v.nrows(), k);
            let mut c0 = 0;
            for &(t2, qr) in &cols {
                right_blocks[qm * d + t2] = v_kept.submatrix(c0, 0, dr[qr], k).adjoint().to_owned();
                c0 += dr[qr];
            }
            // Hastings: B_i = theta V without the left Schmidt values
            for &(ql, t1) in &rows {
                let mut acc = Mat::<c64>::zeros(dl[ql], k);
                let mut c0 = 0;
                for &(t2, qr) in &cols {
                    if let Some(t) = &theta[key(ql, t1, t2)] {
                        acc += t * v_kept.submatrix(c0, 0, dr[qr], k);
                    }
                    c0 += dr[qr];
                }
                if renorm != 1.0 {
                    acc = Mat::from_fn(acc.nrows(), k, |r, c| acc[(r, c)] / renorm);
                }
                left_blocks[ql * d + t1] = acc;
            }
        }
        self.tensors[i] = left_blocks;
        self.tensors[i + 1] = right_blocks;
        self.dims[i + 1] = kept;
        self.schmidt[i + 1] = middle;
        if truncated {
            self.canonical = false;
        }
        Ok(discarded)
    }

    /// Amplitudes on the sites of `basis`, which must match the state.
    pub fn to_fock_amplitudes(&self, basis: &FockBasis) -> Result<Vec<c64>> {
        if basis.n_sites() != self.n_sites
            || basis.n_particles() != self.n_particles
            || basis.n_max() != self.n_max
        {
            return Err(Error::BasisMismatch);
        }
        let d = self.local_dim();
        Ok(basis
            .states()
            .map(|occ| {
                let mut row = Mat::<c64>::from_fn(1, 1, |_, _| c64::new(1.0, 0.0));
                let mut q = 0;
                for (i, &s) in occ.iter().enumerate() {
                    let s = s as usize;
                    row = &row * &self.tensors[i][q * d + s];
                    q += s;
                    if row.ncols() == 0 {
                        return c64::new(0.0, 0.0);
                    }
                }
                row[(0, 0)]
            })
            .collect())
    }

    /// Tensor-product amplitudes (site 0 slowest) under the default cap.
    pub fn to_state_vector(&self) -> Result<Vec<c64>> {
        self.to_state_vector_capped(DEFAULT_VECTOR_CAP)
    }

    pub fn to_state_vector_capped(&self, cap: usize) -> Result<Vec<c64>> {
        let d = self.local_dim();
        let size = d
            .checked_pow(self.n_sites as u32)
            .filter(|&s| s <= cap)
            .ok_or(Error::SizeCap {
                size: (d as f64).powi(self.n_sites as i32).min(usize::MAX as f64) as usize,
                cap,
            })?;
        let basis = FockBasis::new(self.n_particles, self.n_sites, self.n_max)?;
        let amplitudes = self.to_fock_amplitudes(&basis)?;
        let mut out = vec![c64::new(0.0, 0.0); size];
        for (occ, amp) in basis.states().zip(amplitudes) {
            out[occ.iter().fold(0, |acc, &x| acc * d + x as usize)] = amp;
        }
        Ok(out)
    }

    /// Versioned little-endian binary checkpoint; round-trips bit-exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [self.n_sites, self.n_max, self.n_particles, self.chi_max] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.push(self.canonical as u8);
        for cut in &self.dims {
            for &dim in cut {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
        }
        for site in &self.tensors {
            for b in site {
                out.extend_from_slice(&(b.nrows() as u64).to_le_bytes());
                out.extend_from_slice(&(b.ncols() as u64).to_le_bytes());
                for r in 0..b.nrows() {
                    for c in 0..b.ncols() {
                        out.extend_from_slice(&b[(r, c)].re.to_bits().to_le_bytes());
                        out.extend_from_slice(&b[(r, c)].im.to_bits().to_le_bytes());
                    }
                }
            }
        }
        for cut in &self.schmidt {
            for values in cut {
                out.extend_from_slice(&(values.len() as u64).to_le_bytes());
                for v in values {
                    out.extend_from_slice(&v.to_bits().to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n_sites = r.usize()?;
        let n_max = r.usize()?;
        let n_particles = r.usize()?;
        let chi_max = r.usize()?;
        if n_sites == 0 || n_sites > 1 << 20 || !(1..=255).contains(&n_max) || n_particles > 1 << 20 {
            return Err(Error::Checkpoint("implausible header".into()));
        }
        let canonical = r.take(1)?[0] != 0;
        let mut state = Self::empty(n_sites, n_max, n_particles, chi_max);
        state.canonical = canonical;
        for cut in 0..=n_sites {
            for q in 0..=n_particles {
                state.dims[cut][q] = r.usize()?;
            }
        }
        let d = n_max + 1;
        for site in 0..n_sites {
            let mut blocks = Vec::with_capacity((n_particles + 1) * d);
            for _ in 0..(n_particles + 1) * d {
                let (rows, cols) = (r.usize()?, r.usize()?);
                if rows.saturating_mul(cols) > bytes.len() {
                    return Err(Error::Checkpoint("block larger than file".into()));
                }
                let mut b = Mat::<c64>::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        b[(i, j)] = c64::new(r.f64()?, r.f64()?);
                    }
                }
                blocks.push(b);
            }
            state.tensors[site] = blocks;
        }
        for cut in 0..=n_sites {
            for q in 0..=n_particles {
                let len = r.usize()?;
                if len > bytes.len() {
                    return Err(Error::Checkpoint("spectrum larger than file".into()));
                }
                state.schmidt[cut][q] = (0..len).map(|_| r.f64()).collect::<Result<_>>()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(state)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

/// Per-sector counts of the globally largest `chi` values above
/// [`ZERO_CUTOFF`]; each sector's values must be descending.
fn keep_largest(sectors: &[Vec<f64>], chi: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = sectors
        .iter()
        .enumerate()
        .flat_map(|(q, v)| v.iter().map(move |&x| (x, q)))
        .filter(|&(x, _)| x > ZERO_CUTOFF)
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut kept = vec![0; sectors.len()];
    for &(_, q) in all.iter().take(chi) {
        kept[q] += 1;
    }
    kept
}
