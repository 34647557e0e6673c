//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use nalgebra::DMatrix;
use powerjsr::jsr::{
    brute_force_bounds, certificate_from_upper, certify, gripenberg_estimate, instability_witness, scale_set,
    DEFAULT_PRODUCT_BUDGET,
};
use powerjsr::power::{build_a, build_update_set, dpc_step, dpc_step_from_sinr, sinr};
use powerjsr::rng::PortableRng;
use powerjsr::switching::{
    default_burn_in, default_ensemble, fit_decay_rate, run_ensemble, run_trajectory, verdict, Thresholds,
};
use powerjsr::{CSchedule, GainMatrix, Matrix, NormKind, PowerVector, Scheme, Sinr, SwitchingPolicy, UpdateSet, VerdictKind};
use powerjsr_cli::commands::{cmd_check, cmd_simulate, replay_csv};
use powerjsr_cli::scenario::{JsrSettings, Scenario, ScenarioConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use std::path::Path;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const ONE: CSchedule = CSchedule::Constant { c0: 1.0 };

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn eig_radius(a: &Matrix) -> f64 {
    let m = a.dim();
    DMatrix::from_row_slice(m, m, a.as_slice()).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_matrix(rng: &mut PortableRng, m: usize) -> Matrix {
    Matrix::from_row_major(m, (0..m * m).map(|_| rng.unit()).collect()).unwrap()
}

fn random_gain(rng: &mut PortableRng, m: usize, off: f64) -> GainMatrix {
    let data = (0..m * m).map(|k| if k % (m + 1) == 0 { 1.0 } else { off * rng.unit() }).collect();
    GainMatrix::new(Matrix::from_row_major(m, data).unwrap()).unwrap()
}

fn golden() -> UpdateSet {
    UpdateSet::new(vec![
        Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap(),
        Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap(),
    ])
    .unwrap()
}

fn scenarios() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn singleton_reduction() -> Outcome {
    let mut rng = PortableRng::new(2024);
    let mut worst_gap = 0.0_f64;
    for case in 0..100 {
        let m = random_matrix(&mut rng, 4);
        let rho = eig_radius(&m);
        let set = UpdateSet::new(vec![m]).unwrap();
        let e = gripenberg_estimate(&set, 1e-6, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET).map_err(|e| e.to_string())?;
        let slack = 1e-12 * rho;
        ensure(e.lower <= rho + slack && rho <= e.upper + slack, || {
            format!("case {case}: rho {rho} outside [{}, {}]", e.lower, e.upper)
        })?;
        ensure(e.gap() <= 1e-6, || format!("case {case}: gap {}", e.gap()))?;
        worst_gap = worst_gap.max(e.gap());
    }
    Ok(format!("100 matrices, widest gap {worst_gap:.3e}"))
}

fn golden_pair_oracle() -> Outcome {
    let set = golden();
    let b = brute_force_bounds(&set, 12, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET).map_err(|e| e.to_string())?;
    ensure(b.lower >= 1.617, || format!("depth-12 lower {}", b.lower))?;
    let g = gripenberg_estimate(&set, 0.01, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET).map_err(|e| e.to_string())?;
    ensure(g.gap() <= 0.01, || format!("width {}", g.gap()))?;
    ensure(g.lower <= b.lower && b.lower <= g.upper, || format!("[{}, {}] misses {}", g.lower, g.upper, b.lower))?;
    Ok(format!("brute lower {:.12}, bracket [{:.12}, {:.12}]", b.lower, g.lower, g.upper))
}

fn dpc_certified_end_to_end() -> Outcome {
    let s = Scenario::load(&scenarios().join("three_mobile_dpc.toml"), &Default::default()).map_err(|e| e.to_string())?;
    let gains = s.gains.clone().expect("gain scenario");
    let base = build_update_set(&gains, &ONE, Scheme::Dpc).map_err(|e| e.to_string())?;
    let first = certify(&base, NormKind::Infinity, 12, DEFAULT_PRODUCT_BUDGET)
        .map_err(|e| e.to_string())?
        .ok_or("base set does not contract")?;
    let set = scale_set(&base, 0.9 / first.gamma).map_err(|e| e.to_string())?;
    let cert = certificate_from_upper(&set, 0.9, first.depth, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET)
        .map_err(|e| e.to_string())?;
    ensure(cert.gamma == 0.9, || format!("certificate gamma {}", cert.gamma))?;

    let est = gripenberg_estimate(&set, 1e-4, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET)
        .and_then(|g| g.combine(&brute_force_bounds(&set, 12, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET)?))
        .map_err(|e| e.to_string())?;
    let policies = default_ensemble(s.config.seed, NormKind::Infinity, Some(&est.witness));
    ensure(policies.len() == 10, || format!("{} policies", policies.len()))?;
    let trajs = run_ensemble(&set, &ONE, &policies, &s.p0, 200, Some(&gains), Thresholds::default())
        .map_err(|e| e.to_string())?;
    let v = verdict(&set, &ONE, &est, &trajs, 1e6).map_err(|e| e.to_string())?;
    ensure(v.kind == VerdictKind::CertifiedBounded, || format!("verdict {}", v.kind))?;

    let kappa = cert.norm_used.infinity_equivalence(set.dim());
    let p0 = s.p0.norm_inf();
    let mut worst_rate = 0.0_f64;
    for (k, t) in trajs.iter().enumerate() {
        for (n, &x) in t.norms.iter().enumerate() {
            let bound = cert.constant * 0.9f64.powi(n as i32) * kappa * p0;
            ensure(x <= bound, || format!("trajectory {k} step {n}: {x} > {bound}"))?;
        }
        let rate = fit_decay_rate(t, default_burn_in(t.norms.len())).map_err(|e| e.to_string())?;
        ensure(rate <= 0.91, || format!("trajectory {k} rate {rate}"))?;
        worst_rate = worst_rate.max(rate);
    }
    Ok(format!("C={:.6} gamma=0.9 depth={}, slowest fitted rate {worst_rate:.4}", cert.constant, cert.depth))
}

fn dba_config(gains: &[GainMatrix], c0: f64) -> ScenarioConfig {
    ScenarioConfig {
        version: 1,
        name: Some("dba-accept".into()),
        scheme: Scheme::Dba,
        gains: Some(gains.iter().map(|g| g.matrix().to_rows()).collect()),
        matrices: None,
        p0: None,
        steps: 200,
        seed: 11,
        c_schedule: CSchedule::Constant { c0 },
        switching: Default::default(),
        jsr: JsrSettings { delta: 1e-3, norm: NormKind::Infinity, depth: 8, budget: 50_000 },
        thresholds: Default::default(),
    }
}

fn dba_floor() -> Outcome {
    let mut rng = PortableRng::new(77);
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for case in 0..4 {
        let m = 2 + case % 2;
        let gains: Vec<GainMatrix> = (0..2).map(|_| random_gain(&mut rng, m, 0.4)).collect();
        for c0 in [1.0, 1.25] {
            let s = Scenario::from_config(dba_config(&gains, c0), "dba").map_err(|e| e.to_string())?;
            let r = cmd_check(&s, None).map_err(|e| e.to_string())?;
            ensure(r.jsr_estimate.lower >= 1.0, || format!("case {case} c={c0}: lower {}", r.jsr_estimate.lower))?;
            ensure(r.exit_code != 0 && r.certificate.is_none() && r.conclusion != "Theorem applies: bounded", || {
                format!("case {case} c={c0}: check certified ({})", r.conclusion)
            })?;
        }
        let z = build_update_set(&gains, &ONE, Scheme::Dba).map_err(|e| e.to_string())?;
        let upper = gripenberg_estimate(&z, 1e-3, NormKind::Infinity, 50_000).map_err(|e| e.to_string())?.upper;
        let c0 = 0.95 / upper;
        let s = Scenario::from_config(dba_config(&gains, c0), "dba").map_err(|e| e.to_string())?;
        let r = cmd_simulate(&s, out.path()).map_err(|e| e.to_string())?;
        let kind = r.verdict.as_ref().map(|v| v.kind);
        ensure(kind == Some(VerdictKind::CertifiedBounded), || format!("case {case} c={c0}: verdict {kind:?}"))?;
        for t in &r.trajectories {
            let rate = t.decay_rate.ok_or_else(|| format!("case {case}: no rate for {}", t.label))?;
            ensure(rate < 1.0 && t.final_norm < s.p0.norm_inf(), || {
                format!("case {case}: trajectory {} rate {rate} final {}", t.label, t.final_norm)
            })?;
        }
        notes.push(format!("c={c0:.4}"));
    }
    Ok(format!("4 gain sets refused at c in {{1, 1.25}}; certified and decaying at {}", notes.join(", ")))
}

fn sufficiency_gap_honesty() -> Outcome {
    let set = UpdateSet::new(vec![
        Matrix::from_rows(&[[0.0, 2.0], [0.0, 0.0]]).unwrap(),
        Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap(),
    ])
    .unwrap();
    let est = brute_force_bounds(&set, 6, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET).map_err(|e| e.to_string())?;
    ensure(est.lower > 1.0, || format!("lower {}", est.lower))?;
    let p0 = PowerVector::new(vec![1.0, 1.0]).unwrap();
    let policies: Vec<SwitchingPolicy> = (0..8).map(|seed| SwitchingPolicy::IidUniform { seed }).collect();
    let trajs = run_ensemble(&set, &ONE, &policies, &p0, 200, None, Thresholds::default()).map_err(|e| e.to_string())?;
    ensure(trajs.iter().all(|t| t.crossing_step(1e6).is_none()), || "a random seed crossed".into())?;
    let v = verdict(&set, &ONE, &est, &trajs, 1e6).map_err(|e| e.to_string())?;
    ensure(matches!(v.kind, VerdictKind::EmpiricallyBounded | VerdictKind::Inconclusive), || {
        format!("verdict {}", v.kind)
    })?;

    let g = golden();
    let w = instability_witness(&g, 4, DEFAULT_PRODUCT_BUDGET).map_err(|e| e.to_string())?.word.ok_or("no witness")?;
    let t = run_trajectory(&g, &ONE, &SwitchingPolicy::Cyclic { word: w.clone() }, &p0, 40, None, Thresholds::default())
        .map_err(|e| e.to_string())?;
    let step = t.crossing_step(1e6).ok_or("golden witness replay never crossed")?;
    ensure(step <= 40, || format!("crossed at {step}"))?;
    Ok(format!("lower {:.3}, verdict {}; golden witness {w} crosses 1e6 at step {step}", est.lower, v.kind))
}

fn gain_strategy() -> impl Strategy<Value = GainMatrix> {
    (2..=6usize).prop_flat_map(|m| {
        let entry = prop_oneof![1 => Just(0.0), 4 => 0.0..1.0f64];
        (prop::collection::vec(entry, m * m), prop::collection::vec(0.1..2.0f64, m)).prop_map(move |(mut v, d)| {
            for i in 0..m {
                v[i * m + i] = d[i];
            }
            GainMatrix::new(Matrix::from_row_major(m, v).unwrap()).unwrap()
        })
    })
}

fn gain_and_power() -> impl Strategy<Value = (GainMatrix, PowerVector)> {
    gain_strategy().prop_flat_map(|g| {
        let m = g.dim();
        (Just(g), prop::collection::vec(0.01..10.0f64, m).prop_map(|p| PowerVector::new(p).unwrap()))
    })
}

fn nonneg_set() -> impl Strategy<Value = UpdateSet> {
    (2..=4usize, 2..=3usize).prop_flat_map(|(m, k)| {
        prop::collection::vec(prop::collection::vec(0.0..1.0f64, m * m), k).prop_map(move |ms| {
            UpdateSet::new(ms.into_iter().map(|v| Matrix::from_row_major(m, v).unwrap()).collect()).unwrap()
        })
    })
}

fn seeded_runner(tag: u8) -> TestRunner {
    let config = Config { cases: 100, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[tag; 32]))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn invariance_suite() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut failures = Vec::new();

    let r = seeded_runner(1).run(&(gain_and_power(), 1e-3..1e3f64), |((g, p), k)| {
        let scaled = PowerVector::new(p.values().iter().map(|x| k * x).collect()).unwrap();
        let (a, b) = (sinr(&p, &g).unwrap(), sinr(&scaled, &g).unwrap());
        for (x, y) in a.0.iter().zip(&b.0) {
            let same = match (x, y) {
                (Sinr::Finite(x), Sinr::Finite(y)) => rel_close(*x, *y, TOL),
                (Sinr::Unbounded, Sinr::Unbounded) => true,
                _ => false,
            };
            check(same, || format!("{x:?} vs {y:?}"))?;
        }
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("sinr scale: {e}"));
    }

    let rows = gain_strategy().prop_flat_map(|g| {
        let m = g.dim();
        (Just(g), prop::collection::vec(1e-3..1e3f64, m))
    });
    let r = seeded_runner(2).run(&rows, |(g, d)| {
        let m = g.dim();
        let data = (0..m * m).map(|k| d[k / m] * g.matrix().as_slice()[k]).collect();
        let h = GainMatrix::new(Matrix::from_row_major(m, data).unwrap()).unwrap();
        let (a, b) = (build_a(&g), build_a(&h));
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            check(rel_close(*x, *y, TOL), || format!("{x} vs {y}"))?;
        }
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("row scaling: {e}"));
    }

    let r = seeded_runner(3).run(&(nonneg_set(), 0.05..20.0f64), |(set, c)| {
        let scaled = scale_set(&set, c).unwrap();
        let a = brute_force_bounds(&set, 6, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET).unwrap();
        let b = brute_force_bounds(&scaled, 6, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET).unwrap();
        check(rel_close(c * a.upper, b.upper, TOL), || format!("upper {} vs {}", c * a.upper, b.upper))?;
        check(rel_close(c * a.lower, b.lower, TOL), || format!("lower {} vs {}", c * a.lower, b.lower))?;
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("homogeneity: {e}"));
    }

    let r = seeded_runner(4).run(&(gain_and_power(), 0.1..5.0f64), |((g, p), c)| {
        let a = dpc_step(&p, &build_a(&g), c).unwrap();
        let b = dpc_step_from_sinr(&p, &sinr(&p, &g).unwrap(), c);
        for (x, y) in a.values().iter().zip(b.values()) {
            check(rel_close(*x, *y, TOL), || format!("{x} vs {y}"))?;
        }
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("dpc equivalence: {e}"));
    }

    if failures.is_empty() {
        Ok("4 properties x 100 seeded cases at 1e-12".into())
    } else {
        Err(failures.join("; "))
    }
}

fn determinism_and_replay() -> Outcome {
    let s = Scenario::load(&scenarios().join("three_mobile_dpc.toml"), &Default::default()).map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let r = cmd_simulate(&s, a.path()).map_err(|e| e.to_string())?;
    cmd_simulate(&s, b.path()).map_err(|e| e.to_string())?;
    let mut files = 0;
    for entry in std::fs::read_dir(a.path()).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let (x, y) = (std::fs::read(a.path().join(&name)), std::fs::read(b.path().join(&name)));
        ensure(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), || format!("{name:?} differs"))?;
        files += 1;
    }
    for t in &r.trajectories {
        let file = t.file.as_ref().ok_or("trajectory without file")?;
        let bytes = std::fs::read(a.path().join(file)).map_err(|e| e.to_string())?;
        replay_csv(&s, &bytes).map_err(|e| format!("{file}: {e}"))?;
    }
    Ok(format!("{files} files byte-identical, {} CSVs replayed", r.trajectories.len()))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("singleton reduction", singleton_reduction),
        ("golden-ratio pair oracle", golden_pair_oracle),
        ("DPC certified end to end", dpc_certified_end_to_end),
        ("DBA spectral floor", dba_floor),
        ("sufficiency-gap honesty", sufficiency_gap_honesty),
        ("invariance suite", invariance_suite),
        ("determinism and replay", determinism_and_replay),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
