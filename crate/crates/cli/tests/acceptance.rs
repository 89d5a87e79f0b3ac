//! Acceptance run: every criterion at its stated tolerance and budget, one
//! PASS/FAIL line each. `ACCEPTANCE_ONLY=1,4` restricts the run.

#[path = "../../core/tests/support/properties.rs"]
mod properties;
#[path = "../../core/tests/support/quadrature.rs"]
mod quadrature;

use std::time::{Duration, Instant};

use amplitude_cli::config::{ExperimentConfig, ModelConfig};
use amplitude_cli::reference::{case1_reference, stability_threshold};
use amplitude_cli::{cmd_derive, run, Command, RunConfig};
use amplitude_core::burgers::{build_burgers_model, sin_x_scale, BurgersParams};
use amplitude_core::derive::{derive_case1, AmplitudeSDE};
use amplitude_core::experiments::{
    ou_variance_test, run_error_scaling, stability_scan, CampaignSetup, Case, LyapunovConfig, OuTestConfig,
};
use amplitude_core::sim::SimConfig;
use amplitude_core::spectral::{KernelVector, ModelSpec, NoiseScaling};

/// Criteria that cannot be met as stated, with the reason. They still run
/// and print FAIL; only an unexpected failure fails the target.
const KNOWN_RED: &[(u8, &str)] = &[(
    1,
    "the additive coefficient in sin x coordinates is sqrt(2/pi)*alpha_1, not alpha_1",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn burgers(nu: f64, alphas: [f64; 3], n_modes: usize, case: NoiseScaling) -> ModelSpec {
    build_burgers_model(&BurgersParams {
        nu,
        alphas,
        n_modes,
        case,
    })
    .expect("Burgers model")
}

fn sin_coefficients(sde: &AmplitudeSDE) -> [f64; 5] {
    let t = sde.rescale(sin_x_scale()).expect("rescale");
    [
        t.drift_lin[0][0],
        t.cubic(0, 0, 0, 0),
        t.diff_add[0][0],
        t.diff_mult[0][0][0],
        t.diff_mult[2][0][0],
    ]
}

fn coefficient_reproduction() -> Outcome {
    let (nu, alphas) = (0.5, [1.0, 0.0, 1.0]);
    let closed = sin_coefficients(&derive_case1(&burgers(nu, alphas, 32, NoiseScaling::AdditiveEps2)).unwrap());
    let oracle = sin_coefficients(
        &derive_case1(&quadrature::oracle_burgers_model(nu, alphas, 32, NoiseScaling::AdditiveEps2)).unwrap(),
    );
    let reference = case1_reference(nu, alphas);
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (name, r)) in reference.iter().enumerate() {
        let dc = (closed[k] - r).abs();
        let dq = (oracle[k] - r).abs();
        let ok = dc <= 1e-10 && dq <= 1e-8;
        pass &= ok;
        parts.push(format!(
            "{name} {} (closed {:.3e}, quadrature {:.3e})",
            if ok { "ok" } else { "MISMATCH" },
            dc,
            dq
        ));
    }
    let cross = closed.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    parts.push(format!("closed vs quadrature max {cross:.1e}"));
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn f_value() -> Outcome {
    let m = burgers(0.0, [0.0; 3], 32, NoiseScaling::AdditiveEps2);
    let e = KernelVector::unit(1, 0);
    // sin x = e₁ / s and the e₁ component of a field is s times its sin x one
    let s = sin_x_scale();
    let v = m.eval_f(&e, &e, &e).unwrap().coeffs()[0] / (s * s);
    let d = (v + 1.0 / 24.0).abs();
    Outcome {
        pass: d <= 1e-12,
        detail: format!("<F(sin x, sin x, sin x), sin x> coefficient {v:.15} (|dev| {d:.1e})"),
    }
}

fn ou_statistics() -> Outcome {
    let m = burgers(0.0, [0.0, 0.0, 1.0], 8, NoiseScaling::AdditiveEps1);
    let r = ou_variance_test(
        &m,
        &OuTestConfig {
            eps_values: vec![0.1, 0.05],
            n_samples: 100_000,
            dt: 0.01,
            seed: 11,
            band: 3.0,
        },
    )
    .unwrap();
    let mode3: Vec<_> = r.estimates.iter().filter(|e| e.mode == 3).collect();
    let expected_ok = mode3.iter().all(|e| e.expected == 1.0 / 16.0);
    let detail = mode3
        .iter()
        .map(|e| format!("eps {}: var {:.5} (se {:.1e})", e.eps, e.sample_variance, e.se))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        pass: expected_ok && r.all_pass(),
        detail: format!("target 0.0625; {detail}"),
    }
}

fn sim_config(seed: u64, n_paths: usize) -> SimConfig {
    SimConfig {
        epsilon: 0.1,
        t0: 1.0,
        dt_slow: 0.01,
        dt_fast_factor: 2.0,
        seed,
        kappa: 0.01,
        n_paths,
    }
}

fn case1_scaling() -> Outcome {
    let m = burgers(0.2, [0.2, 0.0, 0.3], 32, NoiseScaling::AdditiveEps2);
    let setup = CampaignSetup {
        kernel0: vec![0.25],
        stable0: vec![],
        bootstrap_resamples: 200,
        reference_paths: 0,
        amplitude_substeps: 1,
    };
    let r = run_error_scaling(&m, Case::I, &sim_config(1, 200), &[0.1, 0.05, 0.025], &setup).unwrap();
    let stops = r
        .per_eps
        .iter()
        .map(|s| format!("{}/{}", s.stopped.count, s.n_paths))
        .collect::<Vec<_>>()
        .join(" ");
    Outcome {
        pass: r.slope_lower >= 1.6,
        detail: format!(
            "slope {:.3}, bootstrap se {:.3}, slope - 2se {:.3} (need >= 1.6); stopped {stops}",
            r.fitted_slope, r.slope_se, r.slope_lower
        ),
    }
}

fn case2_scaling() -> Outcome {
    let n_modes = 16;
    let m = burgers(0.3, [0.0, 0.0, 0.1], n_modes, NoiseScaling::AdditiveEps1);
    let mut stable0 = vec![0.0; n_modes];
    stable0[1] = 0.6;
    let setup = CampaignSetup {
        kernel0: vec![0.5],
        stable0,
        bootstrap_resamples: 200,
        reference_paths: 4000,
        amplitude_substeps: 10,
    };
    let r = run_error_scaling(&m, Case::II, &sim_config(7, 400), &[0.2, 0.1, 0.05], &setup).unwrap();
    let dist = r.distribution.as_ref().expect("Case II distribution report");
    let ks = dist
        .per_eps
        .iter()
        .map(|s| format!("{:.3}", s.ks_max))
        .collect::<Vec<_>>()
        .join(" > ");
    Outcome {
        pass: dist.ks_strictly_decreasing && r.fitted_slope >= 0.8,
        detail: format!(
            "KS {ks} (strictly decreasing: {}); residual slope {:.3} (se {:.3}, need >= 0.8)",
            dist.ks_strictly_decreasing, r.fitted_slope, r.slope_se
        ),
    }
}

fn stability_threshold_check() -> Outcome {
    let alpha3 = 1.0;
    let analytic = stability_threshold(alpha3);
    let r = stability_scan(
        |nu| derive_case1(&burgers(nu, [0.0, 0.0, alpha3], 8, NoiseScaling::AdditiveEps2)),
        &[0.004, 0.0065, 0.009, 0.0115, 0.014],
        &LyapunovConfig {
            t_end: 400.0,
            dt: 0.01,
            n_paths: 800,
            seed: 3,
            bootstrap_resamples: 400,
        },
    )
    .unwrap();
    let rel = (r.threshold_estimate - analytic) / analytic;
    let worst_z = r.points.iter().map(|p| p.z_score).fold(0.0, f64::max);
    Outcome {
        pass: rel.abs() <= 0.15 && r.points.iter().all(|p| p.z_score <= 2.0),
        detail: format!(
            "crossing {:.6} (se {:.6}) vs {:.6}, rel dev {:+.3}; max |MC - closed form|/se {:.2}",
            r.threshold_estimate, r.threshold_se, analytic, rel, worst_z
        ),
    }
}

fn property_suites() -> Outcome {
    let mut failed = Vec::new();
    for (name, check) in properties::SUITE {
        if let Err(e) = check(properties::CASES) {
            failed.push(format!("{name}: {e}"));
        }
    }
    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{} suites x {} cases", properties::SUITE.len(), properties::CASES)
        } else {
            failed.join("; ")
        },
    }
}

fn deviation_ledger() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        case: Case::II,
        model: ModelConfig::Burgers {
            nu: 0.5,
            alphas: [0.0, 0.0, 1.0],
            n_modes: 32,
        },
        sim: sim_config(1, 1),
        experiment: ExperimentConfig::default(),
    };
    let doc = cmd_derive(&cfg).unwrap();
    let summary = run(Command::Derive, &cfg).unwrap();
    let written: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("derive.json")).unwrap()).unwrap();
    let emitted = written["published_deviation"].as_array().map_or(0, Vec::len) == 4
        && summary.files.iter().any(|f| f.path == "derive.json");
    let dev = doc.published_deviation.unwrap_or_default();
    let finite = dev.iter().all(|d| d.derived.is_finite() && d.abs_deviation.is_finite());
    let detail = dev
        .iter()
        .map(|d| {
            format!(
                "{} {:.6e} vs {:.6e} ({})",
                d.name,
                d.derived,
                d.reference,
                if d.agrees { "agrees" } else { "differs" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome {
        pass: emitted && finite,
        detail: format!("ledger emitted; {detail}"),
    }
}

type Criterion = (u8, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "Case I coefficients", Duration::from_secs(1), coefficient_reproduction),
        (2, "F value", Duration::from_secs(1), f_value),
        (3, "OU stationary variance", Duration::from_secs(10), ou_statistics),
        (4, "Case I error scaling", Duration::from_secs(15 * 60), case1_scaling),
        (5, "Case II error scaling", Duration::from_secs(20 * 60), case2_scaling),
        (6, "stability threshold", Duration::from_secs(5 * 60), stability_threshold_check),
        (7, "property suites", Duration::from_secs(60), property_suites),
        (8, "deviation ledger", Duration::from_secs(60), deviation_ledger),
    ];
    let only: Option<Vec<u8>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    for (id, name, budget, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= budget;
        let pass = outcome.pass && in_budget;
        println!(
            "criterion {id} {} [{:.2}s / {}s] {name}: {}{}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            outcome.detail,
            if in_budget { "" } else { "; over runtime budget" }
        );
        let known = KNOWN_RED.iter().find(|(k, _)| *k == id);
        match (pass, known) {
            (false, Some((_, why))) => println!("  known red: {why}"),
            (false, None) => unexpected.push(id),
            (true, Some(_)) => println!("  listed as known red but passed; update KNOWN_RED"),
            (true, None) => {}
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
