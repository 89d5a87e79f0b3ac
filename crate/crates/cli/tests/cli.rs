use std::path::Path;
use std::process::Command as Process;

use amplitude_cli::config::{ExperimentConfig, ModelConfig, SpectralModel};
use amplitude_cli::manifest::{sha256_hex, Manifest};
use amplitude_cli::{cmd_derive, run, CliError, Command, RunConfig};
use amplitude_core::experiments::Case;
use amplitude_core::sim::SimConfig;
use proptest::prelude::*;

fn sim() -> SimConfig {
    SimConfig {
        epsilon: 0.1,
        t0: 0.1,
        dt_slow: 0.01,
        dt_fast_factor: 2.0,
        seed: 5,
        kappa: 0.01,
        n_paths: 3,
    }
}

fn burgers(case: Case, nu: f64, alphas: [f64; 3], dir: &Path) -> RunConfig {
    RunConfig {
        output_dir: dir.to_path_buf(),
        case,
        model: ModelConfig::Burgers {
            nu,
            alphas,
            n_modes: 8,
        },
        sim: sim(),
        experiment: ExperimentConfig {
            kernel0: vec![0.3],
            ..ExperimentConfig::default()
        },
    }
}

const SAMPLE: &str = r#"
output_dir = "out"
case = "II"

[model]
kind = "burgers"
nu = 0.3
alphas = [0.0, 0.0, 1.0]
n_modes = 8

[sim]
epsilon = 0.1
t0 = 1.0
dt_slow = 0.01
dt_fast_factor = 2.0
seed = 7
kappa = 0.01
n_paths = 4

[experiment]
eps_grid = [0.2, 0.1]
"#;

#[test]
fn config_round_trip() {
    let a = RunConfig::parse(SAMPLE).unwrap();
    let b = RunConfig::parse(&a.to_toml().unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_keys_are_rejected() {
    for bad in [
        SAMPLE.replace("seed = 7", "seed = 7\nsneaky = 1"),
        SAMPLE.replace("n_modes = 8", "n_modes = 8\nviscosity = 1.0"),
        SAMPLE.replace("[experiment]", "[experiment]\nfoo = 2"),
        format!("{SAMPLE}\n[extra]\nx = 1\n"),
    ] {
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config(_))), "{bad}");
    }
}

#[test]
fn physical_parameters_checked_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let write = |text: &str| {
        let p = dir.path().join("run.toml");
        std::fs::write(&p, text).unwrap();
        RunConfig::load(&p)
    };
    assert!(write(SAMPLE).is_ok());
    for bad in [
        SAMPLE.replace("epsilon = 0.1", "epsilon = 0.7"),
        SAMPLE.replace("n_modes = 8", "n_modes = 3"),
        SAMPLE.replace("eps_grid = [0.2, 0.1]", "eps_grid = [0.1, 0.2]"),
        SAMPLE.replace("alphas = [0.0, 0.0, 1.0]", "alphas = [1.0, 0.0, 1.0]"),
    ] {
        let err = write(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{bad}: {err}");
    }
}

fn spectral_strategy() -> impl Strategy<Value = RunConfig> {
    (
        -1.0..1.0f64,
        prop::collection::vec(-1.0..1.0f64, 3),
        0.01..0.5f64,
        0..i64::MAX as u64,
        1usize..500,
    )
        .prop_map(|(l, a, eps, seed, n_paths)| RunConfig {
            output_dir: "o".into(),
            case: Case::I,
            model: ModelConfig::Spectral(SpectralModel {
                n_kernel: 1,
                lambdas: vec![0.0, 3.0, 8.0],
                linear: vec![vec![l, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
                bilinear: vec![(1, 2, 3, a[0]), (1, 1, 2, a[1])],
                alphas: vec![a[2], 0.0],
                gprime: vec![vec![vec![a[0]; 3]; 3], vec![vec![0.0; 3]; 3]],
                alpha_exp: 0.25,
            }),
            sim: SimConfig {
                epsilon: eps,
                n_paths,
                seed,
                ..sim()
            },
            experiment: ExperimentConfig {
                nu_grid: vec![a[0], a[0] + 1.0],
                ..ExperimentConfig::default()
            },
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn spectral_config_round_trip(cfg in spectral_strategy()) {
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert!(back.model().is_ok());
    }
}

#[test]
fn derive_case1_cubic_in_sin_coordinates() {
    let cfg = burgers(Case::I, 0.5, [1.0, 0.0, 1.0], Path::new("unused"));
    let doc = cmd_derive(&cfg).unwrap();
    let sin = doc.sin_x.unwrap();
    assert!((sin.cubic(0, 0, 0, 0) + 1.0 / 12.0).abs() < 1e-14);
    assert!((sin.drift_lin[0][0] - 0.5).abs() < 1e-15);
    assert_eq!(doc.published_deviation.unwrap().len(), 5);
}

#[test]
fn derive_without_noise_is_deterministic() {
    let doc = cmd_derive(&burgers(Case::I, 0.5, [0.0; 3], Path::new("unused"))).unwrap();
    let sde = doc.amplitude_sde;
    assert!(sde.diff_add.iter().flatten().all(|v| *v == 0.0));
    assert!(sde.diff_mult.iter().flatten().flatten().all(|v| *v == 0.0));
}

#[test]
fn derive_case2_reports_sigmas_and_deviation() {
    let doc = cmd_derive(&burgers(Case::II, 0.5, [0.0, 0.0, 1.0], Path::new("unused"))).unwrap();
    assert!(doc.case2.as_ref().unwrap().sigmas.is_some());
    let dev = doc.published_deviation.unwrap();
    let names: Vec<&str> = dev.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(names, ["sigma1", "sigma2", "sigma3", "sigma4"]);
    let sigma3 = &dev[2];
    assert!(sigma3.agrees, "{sigma3:?}");
}

#[test]
fn generic_model_derives() {
    let cfg = RunConfig {
        model: ModelConfig::Spectral(SpectralModel {
            n_kernel: 1,
            lambdas: vec![0.0, 3.0, 8.0],
            linear: vec![vec![0.1, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
            bilinear: vec![(1, 2, 3, 0.5), (1, 1, 2, 0.7), (1, 2, 1, -0.7)],
            alphas: vec![],
            gprime: vec![],
            alpha_exp: 0.25,
        }),
        ..burgers(Case::I, 0.0, [0.0; 3], Path::new("unused"))
    };
    let doc = cmd_derive(&cfg).unwrap();
    assert!(doc.sin_x.is_none() && doc.published_deviation.is_none());
    // F(e₁) = −B₁₂₁ · (−1/λ₂) · B₁₁₂ on a one-mode kernel
    let f = -(-0.7) * (-1.0 / 3.0) * 0.7;
    assert!((doc.amplitude_sde.cubic(0, 0, 0, 0) - 2.0 * f).abs() < 1e-15);
}

#[test]
fn manifest_lists_hashes_and_reruns_are_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let cfg = burgers(Case::I, 0.2, [0.2, 0.0, 0.3], dir);
        run(Command::Simulate, &cfg).unwrap();
        run(Command::Derive, &cfg).unwrap();
    }
    let ma = Manifest::load_or_new(a.path()).unwrap();
    assert!(ma.verify(a.path()).is_empty());
    let sim_files = &ma.runs["simulate"].files;
    assert_eq!(sim_files.len(), 6);
    for f in sim_files.iter().chain(&ma.runs["derive"].files) {
        let bytes_a = std::fs::read(a.path().join(&f.path)).unwrap();
        let bytes_b = std::fs::read(b.path().join(&f.path)).unwrap();
        assert_eq!(sha256_hex(&bytes_a), f.sha256);
        assert_eq!(bytes_a, bytes_b, "{}", f.path);
    }
    let mb = Manifest::load_or_new(b.path()).unwrap();
    assert_eq!(ma.runs["simulate"].config_sha256, mb.runs["simulate"].config_sha256);
}

#[test]
fn report_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = burgers(Case::I, 0.2, [0.2, 0.0, 0.3], dir.path());
    cfg.experiment.ou.n_samples = 1000;
    run(Command::Derive, &cfg).unwrap();
    run(Command::Report, &cfg).unwrap();
    std::fs::write(dir.path().join("derive.json"), "{}").unwrap();
    let err = run(Command::Report, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_amplitude"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, SAMPLE).unwrap();
    let status = binary().arg("derive").arg(&good).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.path().join("out/derive.json").exists());
    assert!(dir.path().join("out/manifest.json").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SAMPLE.replace("kappa = 0.01", "kappa = 0.5")).unwrap();
    assert_eq!(binary().arg("derive").arg(&bad).status().unwrap().code(), Some(2));

    let missing = dir.path().join("missing.toml");
    assert_eq!(binary().arg("derive").arg(&missing).status().unwrap().code(), Some(4));

    // a file where the output directory should be
    let blocked = dir.path().join("blocked.toml");
    std::fs::write(dir.path().join("out_file"), "").unwrap();
    std::fs::write(&blocked, SAMPLE.replace("output_dir = \"out\"", "output_dir = \"out_file\"")).unwrap();
    assert_eq!(binary().arg("derive").arg(&blocked).status().unwrap().code(), Some(4));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["burgers_case1.toml", "burgers_case2.toml", "burgers_stability.toml"] {
        RunConfig::load(&root.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
