//! Random separable initial states.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{HarnessError, Result};

/// Rejection attempts before a cap is declared practically impossible.
const MAX_REJECTIONS: usize = 1_000_000;

/// Uniform weak composition of `n_particles` into `window` parts (zeros
/// allowed) with every part at most `n_max`, drawn by stars and bars: the
/// `window - 1` bar positions are a uniform subset of `n_particles + window - 1`
/// slots, and draws violating the cap are rejected.
pub fn random_composition(
    n_particles: usize,
    window: usize,
    n_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u8>> {
    check(n_particles, window, n_max, false)?;
    draw(rng, n_particles + window - 1, window, n_max, |slots, bars| {
        stars_and_bars(slots, bars, 0)
    })
}

/// Composition with every part at least one: bars fall in the
/// `n_particles - 1` gaps between particles.
pub fn random_positive_composition(
    n_particles: usize,
    window: usize,
    n_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u8>> {
    check(n_particles, window, n_max, true)?;
    draw(rng, n_particles - 1, window, n_max, |slots, bars| {
        stars_and_bars(slots, bars, 1)
    })
}

fn check(n_particles: usize, window: usize, n_max: usize, positive: bool) -> Result<()> {
    if window == 0 {
        return Err(HarnessError::Sampling("window must be at least one site".into()));
    }
    if n_max > u8::MAX as usize || n_particles > window * n_max {
        return Err(HarnessError::Sampling(format!(
            "{n_particles} particles do not fit {window} sites with cap {n_max}"
        )));
    }
    if positive && (n_particles < window || n_max == 0) {
        return Err(HarnessError::Sampling(format!(
            "{n_particles} particles cannot occupy all {window} sites"
        )));
    }
    Ok(())
}

fn draw(
    rng: &mut ChaCha8Rng,
    slots: usize,
    window: usize,
    n_max: usize,
    build: impl Fn(usize, &[usize]) -> Vec<u8>,
) -> Result<Vec<u8>> {
    for _ in 0..MAX_REJECTIONS {
        let mut bars = sample(rng, slots, window - 1).into_vec();
        bars.sort_unstable();
        let parts = build(slots, &bars);
        if parts.iter().all(|&p| p as usize <= n_max) {
            return Ok(parts);
        }
    }
    Err(HarnessError::Sampling(format!(
        "no composition under cap {n_max} after {MAX_REJECTIONS} draws"
    )))
}

/// Part sizes from sorted bar positions among `slots` slots. With `base = 0`
/// the slots hold stars and bars alike; with `base = 1` they are the gaps
/// between consecutive stars, each part owning one star up front.
fn stars_and_bars(slots: usize, bars: &[usize], base: usize) -> Vec<u8> {
    let mut parts = Vec::with_capacity(bars.len() + 1);
    let mut prev: isize = -1;
    for &b in bars {
        let gap = if base == 0 { b as isize - prev - 1 } else { b as isize - prev };
        parts.push(gap as u8);
        prev = b as isize;
    }
    let tail = if base == 0 {
        slots as isize - prev - 1
    } else {
        slots as isize - prev
    };
    parts.push(tail as u8);
    parts
}

/// Places `window` occupations in the middle of an `n_sites` chain.
pub fn centered(window: &[u8], n_sites: usize) -> Result<Vec<u8>> {
    if window.len() > n_sites {
        return Err(HarnessError::Sampling(format!(
            "window of {} does not fit {n_sites} sites",
            window.len()
        )));
    }
    let offset = (n_sites - window.len()) / 2;
    let mut occ = vec![0u8; n_sites];
    occ[offset..offset + window.len()].copy_from_slice(window);
    Ok(occ)
}

/// `n_states` full-chain occupation vectors from one seeded stream.
pub fn initial_states(
    n_states: usize,
    n_particles: usize,
    window: usize,
    n_max: usize,
    n_sites: usize,
    constrained: bool,
    seed: u64,
) -> Result<Vec<Vec<u8>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_states)
        .map(|_| {
            let w = if constrained {
                random_positive_composition(n_particles, window, n_max, &mut rng)?
            } else {
                random_composition(n_particles, window, n_max, &mut rng)?
            };
            centered(&w, n_sites)
        })
        .collect()
}

/// One draw from a fresh stream seeded with `seed`.
pub fn random_initial_occupations(
    n_particles: usize,
    window: usize,
    n_max: usize,
    seed: u64,
) -> Result<Vec<u8>> {
    random_composition(n_particles, window, n_max, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_single_site() {
        for seed in 0..5 {
            assert_eq!(random_initial_occupations(8, 1, 8, seed).unwrap(), vec![8]);
        }
    }

    #[test]
    fn impossible_cap() {
        assert!(random_initial_occupations(5, 2, 2, 0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_positive_composition(2, 3, 2, &mut rng).is_err());
    }

    #[test]
    fn positive_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = random_positive_composition(8, 6, 8, &mut rng).unwrap();
            assert_eq!(p.iter().map(|&x| x as usize).sum::<usize>(), 8);
            assert!(p.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn centering() {
        assert_eq!(centered(&[1, 2], 6).unwrap(), vec![0, 0, 1, 2, 0, 0]);
        assert_eq!(centered(&[1, 2], 5).unwrap(), vec![0, 1, 2, 0, 0]);
        assert!(centered(&[1, 2, 3], 2).is_err());
    }

    #[test]
    fn deterministic_streams() {
        let a = initial_states(10, 6, 6, 6, 32, false, 11).unwrap();
        let b = initial_states(10, 6, 6, 6, 32, false, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|o| o.iter().map(|&x| x as usize).sum::<usize>() == 6));
    }
}
