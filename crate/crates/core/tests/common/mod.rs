#![allow(dead_code)]

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tbh_core::c64;
use tbh_core::fock::FockBasis;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> c64 {
    c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Normalized Gaussian amplitudes.
pub fn random_amplitudes(dim: usize, rng: &mut ChaCha8Rng) -> Vec<c64> {
    let mut v: Vec<c64> = (0..dim).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    v
}

/// Small basis: 1-3 particles, 2-5 sites, any admissible cutoff.
pub fn random_basis(rng: &mut ChaCha8Rng) -> FockBasis {
    let n = rng.random_range(1..=3usize);
    let m = rng.random_range(2..=5usize);
    let n_max = rng.random_range(n.div_ceil(m)..=n);
    FockBasis::new(n, m, n_max).unwrap()
}

pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Mat<c64> {
    let a = Mat::from_fn(n, n, |_, _| gaussian(rng));
    Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> Mat<c64> {
    tbh_core::linalg::hermitian_exp(random_hermitian(n, rng).as_ref(), 1.0).unwrap()
}

/// Random product occupation of `n` particles on `m` sites with cap `n_max`.
pub fn random_occupation(n: usize, m: usize, n_max: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut occ = vec![0u8; m];
    let mut left = n;
    while left > 0 {
        let l = rng.random_range(0..m);
        if (occ[l] as usize) < n_max {
            occ[l] += 1;
            left -= 1;
        }
    }
    occ
}
