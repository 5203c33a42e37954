use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use tbh_core::mps::{average_spectra, SchmidtSpectrum};
use tbh_harness::config::{ExperimentConfig, ExperimentKind};
use tbh_harness::experiments::{run_ensemble, run_experiment};
use tbh_harness::sampling::{initial_states, random_initial_occupations};
use tbh_harness::HarnessError;

const TINY: &str = r#"
[model]
u = [1.0, 10.0]
f = [1.5]

[lattice]
n_sites = 8
n_particles = 3
window = 3
n_max = 3

[evolution]
dt = 0.01
t_final = 0.3
chi_max = 8
observe_every = 10

[ensemble]
n_initial_states = 3
seed = 5
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tbh-it-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn presets_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    for (name, kind) in [
        ("fig1.cfg", ExperimentKind::SchmidtDistribution),
        ("fig2.cfg", ExperimentKind::SpectralScan),
        ("fig3.cfg", ExperimentKind::EntropyScan),
        ("fig4.cfg", ExperimentKind::ThresholdScan),
    ] {
        let c = ExperimentConfig::load(&root.join(name)).unwrap();
        assert_eq!(c.kind, Some(kind), "{name}");
        c.validate_for(kind).unwrap();
    }
    let reduced = ExperimentConfig::load(&root.join("reduced.cfg")).unwrap();
    for kind in [ExperimentKind::SchmidtDistribution, ExperimentKind::EntropyScan, ExperimentKind::ThresholdScan] {
        reduced.validate_for(kind).unwrap();
    }
}

#[test]
fn identical_runs_give_identical_bytes() {
    let config = ExperimentConfig::parse(TINY).unwrap();
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for kind in [ExperimentKind::EntropyScan, ExperimentKind::ThresholdScan, ExperimentKind::SchmidtDistribution] {
        run_experiment(&config, kind, &a).unwrap();
        run_experiment(&config, kind, &b).unwrap();
    }
    let (fa, fb) = (read_all(&a), read_all(&b));
    assert_eq!(fa.len(), 5);
    assert_eq!(fa, fb);
    for (_, bytes) in &fa {
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains(&format!("# config_hash {}\n", config.hash())));
        assert!(text.contains("# seed 5\n"));
    }
    fs::remove_dir_all(a).unwrap();
    fs::remove_dir_all(b).unwrap();
}

#[test]
fn refuses_to_mix_configs() {
    let dir = scratch("mix");
    let config = ExperimentConfig::parse(TINY).unwrap();
    run_experiment(&config, ExperimentKind::ThresholdScan, &dir).unwrap();
    let other = ExperimentConfig::parse(&TINY.replace("seed = 5", "seed = 6")).unwrap();
    let err = run_experiment(&other, ExperimentKind::ThresholdScan, &dir).unwrap_err();
    assert!(matches!(err, HarnessError::HashMismatch { .. }), "{err}");
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn initial_snapshots_are_product_states() {
    let config = ExperimentConfig::parse(TINY).unwrap();
    let result = run_ensemble(&config).unwrap();
    for p in &result.points {
        let spectra: Vec<SchmidtSpectrum> = p.runs.iter().map(|r| r.snapshots[0].spectrum.clone()).collect();
        let mean = average_spectra(&spectra, 8);
        assert_eq!(mean[0], 1.0);
        assert!(mean[1..].iter().all(|&x| x == 0.0));
        for r in &p.runs {
            assert_eq!(r.snapshots[0].entropy, 0.0);
            assert_eq!(r.snapshots[0].n_above_eps, 1);
        }
    }
}

/// Weak compositions of 2 into 2 parts are equally likely: chi-square over
/// 10^4 draws against the uniform law, at the 3-sigma level of its 2 degrees of
/// freedom (mean 2, sd 2).
#[test]
fn two_into_two_is_uniform() {
    let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
    let draws = 10_000;
    for seed in 0..draws {
        *counts.entry(random_initial_occupations(2, 2, 2, seed).unwrap()).or_default() += 1;
    }
    assert_eq!(counts.len(), 3);
    let expected = draws as f64 / 3.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 2.0 + 3.0 * 2.0, "chi2 {chi2} counts {counts:?}");
}

/// Same test against the full enumeration for a capped case.
#[test]
fn capped_compositions_are_uniform() {
    let draws = 12_000;
    let states = initial_states(draws, 4, 3, 2, 3, false, 9).unwrap();
    let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
    for s in states {
        *counts.entry(s).or_default() += 1;
    }
    // (2,2,0) and permutations (3) plus (2,1,1) and permutations (3)
    assert_eq!(counts.len(), 6);
    let expected = draws as f64 / 6.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 5 degrees of freedom: mean 5, sd sqrt(10)
    assert!(chi2 < 5.0 + 3.0 * 10f64.sqrt(), "chi2 {chi2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn compositions_conserve_particles(n in 1usize..20, window in 1usize..10, seed: u64) {
        let cap = n.div_ceil(window).max(1) + (seed % 3) as usize;
        let occ = random_initial_occupations(n, window, cap, seed).unwrap();
        prop_assert_eq!(occ.len(), window);
        prop_assert_eq!(occ.iter().map(|&x| x as usize).sum::<usize>(), n);
        prop_assert!(occ.iter().all(|&x| x as usize <= cap));
        prop_assert_eq!(random_initial_occupations(n, window, cap, seed).unwrap(), occ);
    }

    #[test]
    fn averaged_spectra_descend(runs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 0..30), 1..12), chi in 1usize..40) {
        let spectra: Vec<_> = runs.into_iter().map(|v| SchmidtSpectrum::new(0, v)).collect();
        let mean = average_spectra(&spectra, chi);
        prop_assert_eq!(mean.len(), chi);
        prop_assert!(mean.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn config_hash_is_stable(seed in 0..=i64::MAX as u64, chi in 1usize..200) {
        let text = TINY.replace("seed = 5", &format!("seed = {seed}")).replace("chi_max = 8", &format!("chi_max = {chi}"));
        let a = ExperimentConfig::parse(&text).unwrap();
        let b = ExperimentConfig::parse(&a.canonical()).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
    }
}
