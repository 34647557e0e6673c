//! Scenario documents (TOML, schema version 1).
//!
//! ```toml
//! version = 1
//! name = "three-mobile"
//! scheme = "dpc"            # or "dba"; ignored with `matrices`
//! gains = [[[1.0, 0.1], [0.2, 1.0]], [[1.0, 0.3], [0.1, 1.0]]]
//! # matrices = [...]        # raw update matrices instead of gains
//! p0 = [1.0, 1.0]           # default: all ones
//! steps = 200
//! seed = 0
//!
//! [c_schedule]              # default: constant 1
//! kind = "constant"         # "geometric" (c0, ratio) or "explicit" (values)
//! c0 = 1.0
//!
//! [switching]               # default: iid_uniform
//! policy = "cyclic"         # "iid_uniform" | "cyclic" (word) | "greedy_adversarial" (norm)
//! word = [0, 1]
//!
//! [jsr]
//! delta = 1e-4
//! norm = "inf"              # one | inf | two | fro
//! depth = 16
//! budget = 2000000
//!
//! [thresholds]              # all relative to the inf-norm of p0
//! diverge = 1e9
//! absorb = 1e-12
//! crossing = 1e6
//! ```

use crate::error::CliError;
use powerjsr::jsr::{scale_set, DEFAULT_DEPTH, DEFAULT_PRODUCT_BUDGET};
use powerjsr::switching::{Thresholds, DEFAULT_ABSORB, DEFAULT_DIVERGE};
use powerjsr::{CSchedule, GainMatrix, Matrix, NormKind, PowerVector, ProductWord, Scheme, SwitchingPolicy, UpdateSet};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_CROSSING: f64 = 1e6;

pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<MatrixRows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<MatrixRows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_schedule")]
    pub c_schedule: CSchedule,
    #[serde(default)]
    pub switching: SwitchingSpec,
    #[serde(default)]
    pub jsr: JsrSettings,
    #[serde(default)]
    pub thresholds: ThresholdSettings,
}

fn default_scheme() -> Scheme {
    Scheme::Dpc
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

fn default_schedule() -> CSchedule {
    CSchedule::Constant { c0: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchingSpec {
    #[default]
    IidUniform,
    Cyclic {
        word: Vec<usize>,
    },
    GreedyAdversarial {
        #[serde(default)]
        norm: NormKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JsrSettings {
    pub delta: f64,
    pub norm: NormKind,
    pub depth: usize,
    pub budget: u64,
}

impl Default for JsrSettings {
    fn default() -> Self {
        JsrSettings { delta: DEFAULT_DELTA, norm: NormKind::Infinity, depth: DEFAULT_DEPTH, budget: DEFAULT_PRODUCT_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSettings {
    pub diverge: f64,
    pub absorb: f64,
    /// Growth factor over `‖P(0)‖∞` that counts as a divergence in the verdict.
    pub crossing: f64,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        ThresholdSettings { diverge: DEFAULT_DIVERGE, absorb: DEFAULT_ABSORB, crossing: DEFAULT_CROSSING }
    }
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub delta: Option<f64>,
    pub norm: Option<NormKind>,
    pub depth: Option<usize>,
    pub budget: Option<u64>,
}

impl ScenarioConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.steps {
            self.steps = v;
        }
        if let Some(v) = o.delta {
            self.jsr.delta = v;
        }
        if let Some(v) = o.norm {
            self.jsr.norm = v;
        }
        if let Some(v) = o.depth {
            self.jsr.depth = v;
        }
        if let Some(v) = o.budget {
            self.jsr.budget = v;
        }
    }
}

/// Reads a document without checking value invariants.
pub fn parse_document(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Schema(e.to_string().trim_end().to_owned()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let inner = inner.trim_end();
        if path == "." {
            CliError::Schema(inner.to_owned())
        } else {
            CliError::Schema(format!("at `{path}`: {inner}"))
        }
    })
}

/// Reads and validates a document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, CliError> {
    let config = parse_document(text)?;
    Scenario::from_config(config.clone(), "scenario")?;
    Ok(config)
}

pub fn emit_scenario(config: &ScenarioConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Internal(format!("cannot serialize scenario: {e}")))
}

/// Validated scenario with its typed objects built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub name: String,
    /// Unscaled alphabet the trajectories switch over.
    pub alphabet: UpdateSet,
    pub gains: Option<Vec<GainMatrix>>,
    pub p0: PowerVector,
    pub policy: SwitchingPolicy,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn matrices(field: &str, list: &[MatrixRows]) -> Result<Vec<Matrix>, CliError> {
    if list.is_empty() {
        return Err(invalid(format!("{field} must contain at least one matrix")));
    }
    let ms = list
        .iter()
        .enumerate()
        .map(|(k, rows)| Matrix::from_rows(rows).map_err(|e| invalid(format!("{field}[{k}]: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(k) = ms.iter().position(|m| m.dim() != ms[0].dim()) {
        return Err(invalid(format!("{field}[{k}] is {0}x{0}, {field}[0] is {1}x{1}", ms[k].dim(), ms[0].dim())));
    }
    Ok(ms)
}

impl Scenario {
    /// Validates `config`. `fallback_name` names outputs when the document has no `name`.
    pub fn from_config(config: ScenarioConfig, fallback_name: &str) -> Result<Scenario, CliError> {
        if config.version != SCHEMA_VERSION {
            return Err(invalid(format!("unsupported version {} (expected {SCHEMA_VERSION})", config.version)));
        }
        let name = config.name.clone().unwrap_or_else(|| fallback_name.to_owned());
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(invalid(format!("name `{name}` must be nonempty and contain no path separators")));
        }
        let (alphabet, gains) = match (&config.gains, &config.matrices) {
            (Some(g), None) => {
                let gains = matrices("gains", g)?
                    .into_iter()
                    .enumerate()
                    .map(|(k, m)| GainMatrix::new(m).map_err(|e| invalid(format!("gains[{k}]: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let set = powerjsr::power::build_update_set(&gains, &CSchedule::Constant { c0: 1.0 }, config.scheme)?;
                (set, Some(gains))
            }
            (None, Some(m)) => (UpdateSet::new(matrices("matrices", m)?)?, None),
            _ => return Err(invalid("exactly one of `gains` and `matrices` must be given")),
        };
        let dim = alphabet.dim();
        let p0 = match &config.p0 {
            Some(v) if v.len() != dim => return Err(invalid(format!("p0 has {} entries, matrices are {dim}x{dim}", v.len()))),
            Some(v) => PowerVector::new(v.clone()).map_err(|e| invalid(format!("p0: {e}")))?,
            None => PowerVector::new(vec![1.0; dim]).expect("ones"),
        };
        if p0.is_zero() {
            return Err(invalid("p0 must have a nonzero entry"));
        }
        if config.steps == 0 {
            return Err(invalid("steps must be >= 1"));
        }
        config.c_schedule.validate().map_err(|e| invalid(format!("c_schedule: {e}")))?;
        let jsr = &config.jsr;
        if !(jsr.delta > 0.0 && jsr.delta.is_finite()) {
            return Err(invalid(format!("jsr.delta must be > 0, got {}", jsr.delta)));
        }
        if jsr.depth == 0 {
            return Err(invalid("jsr.depth must be >= 1"));
        }
        if (jsr.budget as usize) < alphabet.len() {
            return Err(invalid(format!("jsr.budget must be at least the number of matrices ({})", alphabet.len())));
        }
        let th = &config.thresholds;
        if !(th.diverge > 1.0 && th.diverge.is_finite()) {
            return Err(invalid(format!("thresholds.diverge must be finite and > 1, got {}", th.diverge)));
        }
        if !(th.absorb > 0.0 && th.absorb < 1.0) {
            return Err(invalid(format!("thresholds.absorb must lie in (0, 1), got {}", th.absorb)));
        }
        if !(th.crossing > 0.0 && th.crossing.is_finite()) {
            return Err(invalid(format!("thresholds.crossing must be finite and > 0, got {}", th.crossing)));
        }
        let policy = match &config.switching {
            SwitchingSpec::IidUniform => SwitchingPolicy::IidUniform { seed: config.seed },
            SwitchingSpec::GreedyAdversarial { norm } => SwitchingPolicy::GreedyAdversarial { norm: *norm },
            SwitchingSpec::Cyclic { word } => {
                if word.is_empty() {
                    return Err(invalid("switching.word must be nonempty"));
                }
                if let Some(i) = word.iter().position(|&i| i >= alphabet.len()) {
                    return Err(invalid(format!(
                        "switching.word[{i}] = {} is out of range for {} matrices",
                        word[i],
                        alphabet.len()
                    )));
                }
                SwitchingPolicy::Cyclic { word: ProductWord(word.clone()) }
            }
        };
        Ok(Scenario { config, name, alphabet, gains, p0, policy })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = parse_document(&text)?;
        config.apply(overrides);
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Scenario::from_config(config, stem)
    }

    /// Largest `c(n)` over the simulated horizon.
    pub fn c_sup(&self) -> f64 {
        self.config.c_schedule.sup(self.config.steps)
    }

    /// Alphabet scaled by [`Scenario::c_sup`]: every step of every trajectory
    /// is dominated by a member of this set.
    pub fn estimation_set(&self) -> Result<UpdateSet, CliError> {
        Ok(scale_set(&self.alphabet, self.c_sup())?)
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds { diverge: self.config.thresholds.diverge, absorb: self.config.thresholds.absorb }
    }

    pub fn is_raw(&self) -> bool {
        self.gains.is_none()
    }
}
