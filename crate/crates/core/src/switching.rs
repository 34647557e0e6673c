//! Trajectory rollouts of the switched power iteration, decay-rate fitting,
//! and the boundedness verdict combining estimator output with simulation.

use crate::jsr::{JsrEstimate, ProductWord, StabilityCertificate, UpdateSet};
use crate::matrix::{Matrix, NormKind};
use crate::power::{c_product_verdict, sinr, CProductVerdict, CSchedule, GainMatrix, PowerError, PowerVector, SinrVector};
use crate::rng::PortableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Divergence threshold, relative to `‖P(0)‖∞`.
pub const DEFAULT_DIVERGE: f64 = 1e9;
/// Absorption threshold, relative to `‖P(0)‖∞`.
pub const DEFAULT_ABSORB: f64 = 1e-12;
/// Number of i.i.d. seeds in the default verdict ensemble.
pub const ENSEMBLE_SEEDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("initial power vector must be nonzero")]
    ZeroInitialPower,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("{gains} gain matrices given for {members} update matrices")]
    GainCount { gains: usize, members: usize },
    #[error("switching word is empty or uses an index outside 0..{len}")]
    BadWord { len: usize },
    #[error("update matrix {0} has negative entries; powers would leave the nonnegative orthant")]
    NegativeEntries(usize),
    #[error("need at least 2 nonzero norm samples after burn-in, have {0}")]
    InsufficientSamples(usize),
    #[error("trajectory reached zero power at step {0}; decay rate undefined")]
    ZeroNorm(usize),
    #[error("estimate was computed for a different update set")]
    FingerprintMismatch,
    #[error("threshold must be > 0, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Power(#[from] PowerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchingPolicy {
    IidUniform { seed: u64 },
    Cyclic { word: ProductWord },
    GreedyAdversarial { norm: NormKind },
}

impl fmt::Display for SwitchingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SwitchingPolicy::IidUniform { seed } => write!(f, "iid_uniform(seed={seed})"),
            SwitchingPolicy::Cyclic { word } => write!(f, "cyclic{word}"),
            SwitchingPolicy::GreedyAdversarial { norm } => write!(f, "greedy_adversarial({norm})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub diverge: f64,
    pub absorb: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { diverge: DEFAULT_DIVERGE, absorb: DEFAULT_ABSORB }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Diverged { step: usize },
    Absorbed { step: usize },
}

/// Recorded rollout. `powers[n + 1] = c_values[n] · M(switch_indices[n]) · powers[n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Number of transitions recorded.
    pub steps: usize,
    pub powers: Vec<PowerVector>,
    /// SINR at each transition under the gain state in use; `None` without
    /// gains or when some component is 0/0.
    pub sinrs: Vec<Option<SinrVector>>,
    pub switch_indices: Vec<usize>,
    pub c_values: Vec<f64>,
    /// `‖P(n)‖∞` for every recorded power vector.
    pub norms: Vec<f64>,
    pub termination: Termination,
}

fn advance(member: &Matrix, c: f64, p: &[f64]) -> Vec<f64> {
    member.apply(p).expect("dimension checked").into_iter().map(|x| c * x).collect()
}

/// Member maximizing `‖B·p‖`; ties go to the lowest index.
pub fn greedy_adversarial_choice(set: &UpdateSet, p: &PowerVector, norm: NormKind) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, m) in set.members().iter().enumerate() {
        let v = norm.vector_norm(&m.apply(p.values()).expect("dimension checked"));
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn validate_inputs(
    set: &UpdateSet,
    policy: &SwitchingPolicy,
    p0: &PowerVector,
    gains: Option<&[GainMatrix]>,
) -> Result<(), SimError> {
    if p0.len() != set.dim() {
        return Err(SimError::DimMismatch { left: set.dim(), right: p0.len() });
    }
    if p0.is_zero() {
        return Err(SimError::ZeroInitialPower);
    }
    if let Some(i) = set.members().iter().position(|m| !m.is_nonnegative()) {
        return Err(SimError::NegativeEntries(i));
    }
    if let Some(g) = gains {
        if g.len() != set.len() {
            return Err(SimError::GainCount { gains: g.len(), members: set.len() });
        }
        if let Some(bad) = g.iter().find(|g| g.dim() != set.dim()) {
            return Err(SimError::DimMismatch { left: set.dim(), right: bad.dim() });
        }
    }
    if let SwitchingPolicy::Cyclic { word } = policy {
        if word.is_empty() || set.check_word(word).is_err() {
            return Err(SimError::BadWord { len: set.len() });
        }
    }
    Ok(())
}

/// Rolls out `steps` transitions under `policy`.
///
/// The rollout stops early once `‖P(n)‖∞` exceeds `thresholds.diverge`
/// or drops below `thresholds.absorb`, both relative to `‖P(0)‖∞`.
pub fn run_trajectory(
    set: &UpdateSet,
    schedule: &CSchedule,
    policy: &SwitchingPolicy,
    p0: &PowerVector,
    steps: usize,
    gains: Option<&[GainMatrix]>,
    thresholds: Thresholds,
) -> Result<Trajectory, SimError> {
    validate_inputs(set, policy, p0, gains)?;
    schedule.validate()?;
    let norm0 = p0.norm_inf();
    let mut rng = match policy {
        SwitchingPolicy::IidUniform { seed } => Some(PortableRng::new(*seed)),
        _ => None,
    };
    let mut traj = Trajectory {
        steps: 0,
        powers: vec![p0.clone()],
        sinrs: Vec::with_capacity(steps),
        switch_indices: Vec::with_capacity(steps),
        c_values: Vec::with_capacity(steps),
        norms: vec![norm0],
        termination: Termination::Completed,
    };
    for n in 0..steps {
        let p = traj.powers.last().expect("nonempty");
        let idx = match policy {
            SwitchingPolicy::IidUniform { .. } => rng.as_mut().expect("seeded").index(set.len()),
            SwitchingPolicy::Cyclic { word } => word.index_at_step(n),
            SwitchingPolicy::GreedyAdversarial { norm } => greedy_adversarial_choice(set, p, *norm),
        };
        let c = schedule.value(n);
        let gamma = gains.and_then(|g| sinr(p, &g[idx]).ok());
        let next = advance(set.member(idx), c, p.values());
        traj.sinrs.push(gamma);
        traj.switch_indices.push(idx);
        traj.c_values.push(c);
        traj.steps += 1;

        let Ok(next) = PowerVector::new(next) else {
            traj.termination = Termination::Diverged { step: n + 1 };
            break;
        };
        let norm = next.norm_inf();
        traj.powers.push(next);
        traj.norms.push(norm);
        if norm > thresholds.diverge * norm0 {
            traj.termination = Termination::Diverged { step: n + 1 };
            break;
        }
        if norm < thresholds.absorb * norm0 {
            traj.termination = Termination::Absorbed { step: n + 1 };
            break;
        }
    }
    Ok(traj)
}

/// Recomputes the power sequence from recorded switch indices and constants.
pub fn replay(
    set: &UpdateSet,
    p0: &PowerVector,
    switch_indices: &[usize],
    c_values: &[f64],
) -> Result<Vec<PowerVector>, SimError> {
    if p0.len() != set.dim() {
        return Err(SimError::DimMismatch { left: set.dim(), right: p0.len() });
    }
    if switch_indices.iter().any(|&i| i >= set.len()) {
        return Err(SimError::BadWord { len: set.len() });
    }
    let mut out = vec![p0.clone()];
    for (&idx, &c) in switch_indices.iter().zip(c_values) {
        let next = advance(set.member(idx), c, out.last().expect("nonempty").values());
        match PowerVector::new(next) {
            Ok(p) => out.push(p),
            Err(_) => break,
        }
    }
    Ok(out)
}

impl Trajectory {
    /// True when replaying the recorded indices reproduces every power bit for bit.
    pub fn replays_exactly(&self, set: &UpdateSet) -> bool {
        match replay(set, &self.powers[0], &self.switch_indices, &self.c_values) {
            Ok(p) => p == self.powers,
            Err(_) => false,
        }
    }

    /// First step at which `‖P(n)‖∞ > threshold · ‖P(0)‖∞`.
    pub fn crossing_step(&self, threshold: f64) -> Option<usize> {
        let limit = threshold * self.norms[0];
        self.norms.iter().position(|&x| x > limit).or(match self.termination {
            Termination::Diverged { step } if step >= self.norms.len() => Some(step),
            _ => None,
        })
    }

    /// Whether `‖P(n)‖∞ ≤ C·γⁿ·κ·‖P(0)‖∞` at every recorded step.
    pub fn within_certificate(&self, cert: &StabilityCertificate) -> bool {
        let dim = self.powers[0].len();
        let kappa = cert.norm_used.infinity_equivalence(dim);
        self.norms
            .iter()
            .enumerate()
            .all(|(n, &x)| x <= cert.bound(n) * kappa * self.norms[0] * (1.0 + 1e-12))
    }
}

/// Burn-in: the first quarter of the samples, at least 5, leaving at least 2.
pub fn default_burn_in(samples: usize) -> usize {
    (samples / 4).max(5).min(samples.saturating_sub(2))
}

/// `exp` of the least-squares slope of `ln ‖P(n)‖∞` over `n ≥ burn_in`.
pub fn fit_decay_rate(traj: &Trajectory, burn_in: usize) -> Result<f64, SimError> {
    let samples: Vec<(f64, f64)> = traj
        .norms
        .iter()
        .enumerate()
        .skip(burn_in)
        .map(|(n, &x)| if x > 0.0 { Ok((n as f64, x.ln())) } else { Err(SimError::ZeroNorm(n)) })
        .collect::<Result<_, _>>()?;
    if samples.len() < 2 {
        return Err(SimError::InsufficientSamples(samples.len()));
    }
    let k = samples.len() as f64;
    let mean_n = samples.iter().map(|s| s.0).sum::<f64>() / k;
    let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / k;
    let (sxy, sxx) = samples.iter().fold((0.0, 0.0), |(sxy, sxx), &(n, y)| {
        (sxy + (n - mean_n) * (y - mean_y), sxx + (n - mean_n) * (n - mean_n))
    });
    Ok((sxy / sxx).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    CertifiedBounded,
    EmpiricallyBounded,
    Diverged,
    Inconclusive,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::CertifiedBounded => "certified_bounded",
            VerdictKind::EmpiricallyBounded => "empirically_bounded",
            VerdictKind::Diverged => "diverged",
            VerdictKind::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub trajectory: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub jsr_upper: f64,
    pub jsr_lower: f64,
    pub c_product: CProductVerdict,
    /// Largest fitted decay rate over trajectories that admit a fit.
    pub decay_rate: Option<f64>,
    pub crossing: Option<Crossing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessVerdict {
    pub kind: VerdictKind,
    pub evidence: Evidence,
}

/// Combines the estimator bracket, the c-product condition, and the
/// trajectories into one verdict.
///
/// * `certified_bounded` when `estimate.upper < 1` and the c-product is bounded;
/// * otherwise `diverged` when some trajectory crossed `threshold · ‖P(0)‖∞`;
/// * otherwise `empirically_bounded` when at least one trajectory exists;
/// * otherwise `inconclusive`.
///
/// A lower bound above one alone never yields `diverged`.
pub fn verdict(
    set: &UpdateSet,
    schedule: &CSchedule,
    estimate: &JsrEstimate,
    trajectories: &[Trajectory],
    threshold: f64,
) -> Result<BoundednessVerdict, SimError> {
    if estimate.fingerprint != set.fingerprint() {
        return Err(SimError::FingerprintMismatch);
    }
    if !(threshold > 0.0) {
        return Err(SimError::BadThreshold(threshold));
    }
    let horizon = trajectories.iter().map(|t| t.steps).max().unwrap_or(1).max(1);
    let c_product = c_product_verdict(schedule, horizon);
    let crossing = trajectories
        .iter()
        .enumerate()
        .find_map(|(i, t)| t.crossing_step(threshold).map(|step| Crossing { trajectory: i, step }));
    let decay_rate = trajectories
        .iter()
        .filter(|t| !matches!(t.termination, Termination::Diverged { .. }))
        .filter_map(|t| fit_decay_rate(t, default_burn_in(t.norms.len())).ok())
        .reduce(f64::max);
    let kind = if estimate.upper < 1.0 && c_product == CProductVerdict::Bounded {
        VerdictKind::CertifiedBounded
    } else if crossing.is_some() {
        VerdictKind::Diverged
    } else if !trajectories.is_empty() {
        VerdictKind::EmpiricallyBounded
    } else {
        VerdictKind::Inconclusive
    };
    Ok(BoundednessVerdict {
        kind,
        evidence: Evidence { jsr_upper: estimate.upper, jsr_lower: estimate.lower, c_product, decay_rate, crossing },
    })
}

/// Policies of the default verdict ensemble: i.i.d. seeds `seed, seed+1, …`,
/// one greedy adversary, and the cyclic replay of `witness` when given.
pub fn default_ensemble(seed: u64, norm: NormKind, witness: Option<&ProductWord>) -> Vec<SwitchingPolicy> {
    let mut policies: Vec<SwitchingPolicy> = (0..ENSEMBLE_SEEDS as u64)
        .map(|k| SwitchingPolicy::IidUniform { seed: seed.wrapping_add(k) })
        .collect();
    policies.push(SwitchingPolicy::GreedyAdversarial { norm });
    if let Some(w) = witness.filter(|w| !w.is_empty()) {
        policies.push(SwitchingPolicy::Cyclic { word: w.clone() });
    }
    policies
}

/// Runs each policy independently; output order matches `policies`.
pub fn run_ensemble(
    set: &UpdateSet,
    schedule: &CSchedule,
    policies: &[SwitchingPolicy],
    p0: &PowerVector,
    steps: usize,
    gains: Option<&[GainMatrix]>,
    thresholds: Thresholds,
) -> Result<Vec<Trajectory>, SimError> {
    policies
        .par_iter()
        .map(|policy| run_trajectory(set, schedule, policy, p0, steps, gains, thresholds))
        .collect()
}
