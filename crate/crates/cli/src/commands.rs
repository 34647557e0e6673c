//! `estimate`, `simulate` and `check`.

use crate::error::{exit, CliError};
use crate::output::{fmt_num, plot_summary, read_trajectory_csv, to_json, trajectory_csv, write_atomic};
use crate::scenario::Scenario;
use powerjsr::jsr::{brute_force_bounds, certify, gripenberg_estimate};
use powerjsr::power::{c_product_verdict, CProductVerdict};
use powerjsr::switching::{default_burn_in, default_ensemble, fit_decay_rate, replay, run_ensemble, verdict, Termination};
use powerjsr::{BoundednessVerdict, JsrEstimate, StabilityCertificate, SwitchingPolicy, UpdateSet, VerdictKind};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Estimate,
    Simulate,
    Check,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Estimate => "estimate",
            CommandKind::Simulate => "simulate",
            CommandKind::Check => "check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub label: String,
    pub policy: String,
    pub file: Option<String>,
    pub steps: usize,
    pub termination: Termination,
    pub final_norm: f64,
    pub decay_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: CommandKind,
    pub scenario: String,
    pub seed: u64,
    pub steps: usize,
    /// Scale applied to the alphabet before estimation.
    pub c_sup: f64,
    pub jsr_estimate: JsrEstimate,
    pub witness: String,
    pub certificate: Option<StabilityCertificate>,
    pub c_verdict: CProductVerdict,
    /// Whether `upper < 1`.
    pub spectral_condition: bool,
    pub conclusion: String,
    pub verdict: Option<BoundednessVerdict>,
    pub trajectories: Vec<TrajectorySummary>,
    #[serde(skip)]
    pub trajectory_refs: Vec<PathBuf>,
    /// Seconds per phase. Kept out of the report file so outputs stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub wall_times: Vec<(String, f64)>,
    pub exit_code: i32,
}

struct Timer(Vec<(String, f64)>);

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((phase.to_owned(), start.elapsed().as_secs_f64()));
        out
    }
}

struct Analysis {
    set: UpdateSet,
    estimate: JsrEstimate,
    certificate: Option<StabilityCertificate>,
    c_verdict: CProductVerdict,
}

fn analyze(s: &Scenario, timer: &mut Timer) -> Result<Analysis, CliError> {
    let set = s.estimation_set()?;
    let j = s.config.jsr;
    let estimate = timer.time("estimate", || -> Result<_, CliError> {
        let g = gripenberg_estimate(&set, j.delta, j.norm, j.budget)?;
        let b = brute_force_bounds(&set, j.depth, j.norm, j.budget)?;
        Ok(g.combine(&b)?)
    })?;
    let certificate = if estimate.upper < 1.0 {
        timer.time("certify", || certify(&set, j.norm, j.depth, j.budget))?
    } else {
        None
    };
    let c_verdict = c_product_verdict(&s.config.c_schedule, s.config.steps);
    Ok(Analysis { set, estimate, certificate, c_verdict })
}

fn conclusion(a: &Analysis) -> String {
    if a.c_verdict != CProductVerdict::Bounded {
        format!("c-product {}, conclusion withheld", a.c_verdict)
    } else if a.estimate.upper < 1.0 {
        "Theorem applies: bounded".to_owned()
    } else if a.estimate.lower > 1.0 {
        "Theorem silent (sufficiency only); instability witness available".to_owned()
    } else {
        "Theorem silent (sufficiency only); spectral condition not established".to_owned()
    }
}

fn base_report(kind: CommandKind, s: &Scenario, a: &Analysis, timer: Timer) -> RunReport {
    let certified = a.estimate.upper < 1.0 && a.c_verdict == CProductVerdict::Bounded;
    RunReport {
        command: kind,
        scenario: s.name.clone(),
        seed: s.config.seed,
        steps: s.config.steps,
        c_sup: s.c_sup(),
        jsr_estimate: a.estimate.clone(),
        witness: a.set.describe_word(&a.estimate.witness),
        certificate: a.certificate,
        c_verdict: a.c_verdict,
        spectral_condition: a.estimate.upper < 1.0,
        conclusion: conclusion(a),
        verdict: None,
        trajectories: Vec::new(),
        trajectory_refs: Vec::new(),
        wall_times: timer.0,
        exit_code: if certified { exit::BOUNDED } else { exit::INCONCLUSIVE },
    }
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn write_report(report: &RunReport, out: &Path) -> Result<PathBuf, CliError> {
    prepare_out(out)?;
    let path = out.join(format!("{}-{}.json", report.scenario, report.command.as_str()));
    write_atomic(&path, to_json(report)?.as_bytes())?;
    Ok(path)
}

/// Bracket, witness and certificate for the scenario's update set.
pub fn cmd_estimate(s: &Scenario, out: Option<&Path>) -> Result<RunReport, CliError> {
    let mut timer = Timer(Vec::new());
    let a = analyze(s, &mut timer)?;
    let report = base_report(CommandKind::Estimate, s, &a, timer);
    if let Some(out) = out {
        write_report(&report, out)?;
    }
    Ok(report)
}

/// Both hypotheses and the implied conclusion; never simulates.
pub fn cmd_check(s: &Scenario, out: Option<&Path>) -> Result<RunReport, CliError> {
    let mut timer = Timer(Vec::new());
    let a = analyze(s, &mut timer)?;
    let report = base_report(CommandKind::Check, s, &a, timer);
    if let Some(out) = out {
        write_report(&report, out)?;
    }
    Ok(report)
}

/// Ensemble policies with their output labels.
fn ensemble(s: &Scenario, a: &Analysis) -> Vec<(String, SwitchingPolicy)> {
    let greedy_norm = match s.policy {
        SwitchingPolicy::GreedyAdversarial { norm } => norm,
        _ => s.config.jsr.norm,
    };
    let mut out: Vec<(String, SwitchingPolicy)> = default_ensemble(s.config.seed, greedy_norm, Some(&a.estimate.witness))
        .into_iter()
        .map(|p| {
            let label = match &p {
                SwitchingPolicy::IidUniform { seed } => seed.to_string(),
                SwitchingPolicy::GreedyAdversarial { .. } => "greedy".to_owned(),
                SwitchingPolicy::Cyclic { .. } => "witness".to_owned(),
            };
            (label, p)
        })
        .collect();
    if let SwitchingPolicy::Cyclic { .. } = &s.policy {
        out.push(("cyclic".to_owned(), s.policy.clone()));
    }
    out
}

/// Estimate, then roll out the default ensemble and write one CSV per trajectory.
pub fn cmd_simulate(s: &Scenario, out: &Path) -> Result<RunReport, CliError> {
    let mut timer = Timer(Vec::new());
    let a = analyze(s, &mut timer)?;
    let runs = ensemble(s, &a);
    let policies: Vec<SwitchingPolicy> = runs.iter().map(|r| r.1.clone()).collect();
    let trajectories = timer.time("simulate", || {
        run_ensemble(&s.alphabet, &s.config.c_schedule, &policies, &s.p0, s.config.steps, s.gains.as_deref(), s.thresholds())
    })?;
    let v = verdict(&a.set, &s.config.c_schedule, &a.estimate, &trajectories, s.config.thresholds.crossing)?;

    let mut report = base_report(CommandKind::Simulate, s, &a, Timer(Vec::new()));
    report.wall_times = timer.0;
    let start = Instant::now();
    prepare_out(out)?;
    for ((label, policy), t) in runs.iter().zip(&trajectories) {
        let file = format!("{}-{label}.csv", s.name);
        let path = out.join(&file);
        write_atomic(&path, &trajectory_csv(t)?)?;
        report.trajectory_refs.push(path);
        report.trajectories.push(TrajectorySummary {
            label: label.clone(),
            policy: policy.to_string(),
            file: Some(file),
            steps: t.steps,
            termination: t.termination,
            final_norm: *t.norms.last().expect("nonempty"),
            decay_rate: fit_decay_rate(t, default_burn_in(t.norms.len())).ok(),
        });
    }
    let plot = plot_summary(runs.iter().map(|r| r.0.as_str()).zip(&trajectories))?;
    let plot_path = out.join(format!("{}-plot.csv", s.name));
    write_atomic(&plot_path, &plot)?;
    report.trajectory_refs.push(plot_path);
    report.exit_code = match v.kind {
        VerdictKind::CertifiedBounded | VerdictKind::EmpiricallyBounded => exit::BOUNDED,
        VerdictKind::Diverged => exit::DIVERGED,
        VerdictKind::Inconclusive => exit::INCONCLUSIVE,
    };
    report.verdict = Some(v);
    let path = write_report(&report, out)?;
    report.trajectory_refs.push(path);
    report.wall_times.push(("write".to_owned(), start.elapsed().as_secs_f64()));
    Ok(report)
}

/// Re-simulates a trajectory CSV from its recorded switch indices, with
/// `P(0)` and `c(n)` taken from the scenario, and checks that the `c` and
/// `norm_inf` columns come out identical.
pub fn replay_csv(s: &Scenario, bytes: &[u8]) -> Result<(), CliError> {
    let csv = read_trajectory_csv(bytes)?;
    if csv.dim != s.alphabet.dim() {
        return Err(CliError::Replay(format!("CSV has {} mobiles, scenario has {}", csv.dim, s.alphabet.dim())));
    }
    let c: Vec<f64> = (0..csv.switch_indices.len()).map(|n| s.config.c_schedule.value(n)).collect();
    if let Some(n) = c.iter().zip(&csv.c_column).position(|(x, col)| fmt_num(*x) != *col) {
        return Err(CliError::Replay(format!("c differs at n = {n}")));
    }
    let powers = replay(&s.alphabet, &s.p0, &csv.switch_indices, &c)?;
    let norms: Vec<String> = powers.iter().map(|p| fmt_num(p.norm_inf())).collect();
    if norms.len() != csv.norm_column.len() {
        return Err(CliError::Replay(format!("{} rows replayed, CSV has {}", norms.len(), csv.norm_column.len())));
    }
    if let Some(n) = norms.iter().zip(&csv.norm_column).position(|(a, b)| a != b) {
        return Err(CliError::Replay(format!("norm_inf differs at n = {n}: {} vs {}", norms[n], csv.norm_column[n])));
    }
    Ok(())
}

impl RunReport {
    /// Human-readable summary printed on stdout.
    pub fn render(&self) -> String {
        let e = &self.jsr_estimate;
        let mut lines = vec![
            format!("scenario: {}", self.scenario),
            format!(
                "lower={} upper={} gap={} norm={} depth={} products={}{}",
                fmt_num(e.lower),
                fmt_num(e.upper),
                fmt_num(e.gap()),
                e.norm_used,
                e.depth_explored,
                e.products_evaluated,
                if e.conclusive { "" } else { " (budget exhausted)" }
            ),
            format!("witness: {} = {}", e.witness, self.witness),
        ];
        if self.c_sup != 1.0 {
            lines.push(format!("c_sup: {}", fmt_num(self.c_sup)));
        }
        if let Some(c) = &self.certificate {
            lines.push(format!(
                "certificate: C={} gamma={} depth={} norm={}",
                fmt_num(c.constant),
                fmt_num(c.gamma),
                c.depth,
                c.norm_used
            ));
        }
        if self.command == CommandKind::Check || self.command == CommandKind::Simulate {
            lines.push(format!("c-product: {}", self.c_verdict));
            lines.push(format!(
                "spectral condition: upper {} 1 ({})",
                if self.spectral_condition { "<" } else { ">=" },
                if self.spectral_condition { "holds" } else { "fails" }
            ));
        }
        lines.push(format!("conclusion: {}", self.conclusion));
        for t in &self.trajectories {
            let end = match t.termination {
                Termination::Completed => "completed".to_owned(),
                Termination::Diverged { step } => format!("diverged at {step}"),
                Termination::Absorbed { step } => format!("absorbed at {step}"),
            };
            let rate = t.decay_rate.map_or("-".to_owned(), fmt_num);
            lines.push(format!(
                "trajectory {}: {} steps={} {end} final_norm={} rate={rate}",
                t.label,
                t.policy,
                t.steps,
                fmt_num(t.final_norm)
            ));
        }
        if let Some(v) = &self.verdict {
            let mut line = format!("verdict: {}", v.kind);
            if let Some(c) = v.evidence.crossing {
                line += &format!(" (trajectory {} crossed at step {})", self.trajectories[c.trajectory].label, c.step);
            }
            if let Some(r) = v.evidence.decay_rate {
                line += &format!(" rate={}", fmt_num(r));
            }
            lines.push(line);
        }
        for p in &self.trajectory_refs {
            lines.push(format!("wrote {}", p.display()));
        }
        lines.join("\n") + "\n"
    }
}
