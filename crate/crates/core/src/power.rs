//! Uplink power control: link gains, SINR, and the DPC/DBA update steps.
//!
//! Updates are evaluated in matrix form, `P(n) = c·A·P(n-1)` for DPC and
//! `P(n) = c·(A + I)·P(n-1)` for DBA. The matrix form is defined even for
//! mobiles that see no interference, where the division form `c·P_i/γ_i`
//! would divide by an unbounded SINR.

use crate::jsr::{JsrError, UpdateSet};
use crate::matrix::{Matrix, MatrixError};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("gain[{row}][{col}] must be >= 0, got {value}")]
    NegativeGain { row: usize, col: usize, value: f64 },
    #[error("gain[{index}][{index}] must be > 0, got {value}")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("power[{index}] must be finite and >= 0, got {value}")]
    InvalidPower { index: usize, value: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("all transmit powers are zero")]
    AllZeroPower,
    #[error("SINR of mobile {index} is 0/0")]
    IndeterminateSinr { index: usize },
    #[error("scale constant must be finite and > 0, got {0}")]
    InvalidConstant(f64),
    #[error("invalid c schedule: {0}")]
    InvalidSchedule(String),
    #[error("at least one gain matrix is required")]
    NoGains,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Jsr(#[from] JsrError),
}

/// Link gains `G_ij ≥ 0` with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(Matrix);

impl GainMatrix {
    pub fn new(m: Matrix) -> Result<Self, PowerError> {
        let n = m.dim();
        for i in 0..n {
            for j in 0..n {
                let g = m.get(i, j);
                if i == j && !(g > 0.0) {
                    return Err(PowerError::NonPositiveDiagonal { index: i, value: g });
                }
                if g < 0.0 {
                    return Err(PowerError::NegativeGain { row: i, col: j, value: g });
                }
            }
        }
        Ok(GainMatrix(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, PowerError> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Normalized interference matrix: `A_ij = G_ij / G_ii` off the
    /// diagonal, zero on it.
    pub fn interference_matrix(&self) -> Matrix {
        let n = self.dim();
        let data = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i == j {
                    0.0
                } else {
                    self.0.get(i, j) / self.0.get(i, i)
                }
            })
            .collect();
        Matrix::from_row_major(n, data).expect("ratios of finite gains with positive diagonal")
    }
}

pub fn build_a(g: &GainMatrix) -> Matrix {
    g.interference_matrix()
}

/// Nonnegative transmit powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(values: Vec<f64>) -> Result<Self, PowerError> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(PowerError::InvalidPower { index, value });
        }
        Ok(PowerVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, &x| m.max(x))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

/// SINR of one mobile. `Unbounded` marks zero interference with a positive
/// received signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sinr {
    Finite(f64),
    Unbounded,
}

impl fmt::Display for Sinr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sinr::Finite(x) => write!(f, "{x}"),
            Sinr::Unbounded => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SinrVector(pub Vec<Sinr>);

/// `γ_i = P_i G_ii / Σ_{j≠i} P_j G_ij`, without a noise term.
pub fn sinr(p: &PowerVector, g: &GainMatrix) -> Result<SinrVector, PowerError> {
    let n = g.dim();
    if p.len() != n {
        return Err(PowerError::DimMismatch { left: n, right: p.len() });
    }
    if p.is_zero() {
        return Err(PowerError::AllZeroPower);
    }
    let gm = g.matrix();
    (0..n)
        .map(|i| {
            let signal = p.0[i] * gm.get(i, i);
            let interference: f64 = (0..n).filter(|&j| j != i).map(|j| p.0[j] * gm.get(i, j)).sum();
            if interference > 0.0 {
                Ok(Sinr::Finite(signal / interference))
            } else if signal > 0.0 {
                Ok(Sinr::Unbounded)
            } else {
                Err(PowerError::IndeterminateSinr { index: i })
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(SinrVector)
}

fn check_step(p: &PowerVector, a: &Matrix, c: f64) -> Result<(), PowerError> {
    if p.len() != a.dim() {
        return Err(PowerError::DimMismatch { left: a.dim(), right: p.len() });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(PowerError::InvalidConstant(c));
    }
    Ok(())
}

/// `c·A·p`.
pub fn dpc_step(p: &PowerVector, a: &Matrix, c: f64) -> Result<PowerVector, PowerError> {
    check_step(p, a, c)?;
    let next = a.apply(&p.0)?.into_iter().map(|x| c * x).collect();
    PowerVector::new(next)
}

/// `c·(A + I)·p`, evaluated as `c·(p + A·p)`.
pub fn dba_step(p: &PowerVector, a: &Matrix, c: f64) -> Result<PowerVector, PowerError> {
    check_step(p, a, c)?;
    let next = a.apply(&p.0)?.into_iter().zip(&p.0).map(|(ap, pi)| c * (pi + ap)).collect();
    PowerVector::new(next)
}

/// Per-mobile DPC update `c·P_i/γ_i`; mobiles with unbounded SINR get zero.
pub fn dpc_step_from_sinr(p: &PowerVector, gamma: &SinrVector, c: f64) -> PowerVector {
    PowerVector(
        p.0.iter()
            .zip(&gamma.0)
            .map(|(&pi, g)| match g {
                Sinr::Finite(g) => c * pi / g,
                Sinr::Unbounded => 0.0,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Dpc,
    Dba,
}

impl Scheme {
    /// Update matrix for one gain state: `A` for DPC, `A + I` for DBA.
    pub fn update_matrix(self, g: &GainMatrix) -> Matrix {
        let a = g.interference_matrix();
        match self {
            Scheme::Dpc => a,
            Scheme::Dba => a.add(&Matrix::identity(a.dim())).expect("same dimension"),
        }
    }

    pub fn step(self, p: &PowerVector, a: &Matrix, c: f64) -> Result<PowerVector, PowerError> {
        match self {
            Scheme::Dpc => dpc_step(p, a, c),
            Scheme::Dba => dba_step(p, a, c),
        }
    }

    fn label_prefix(self) -> &'static str {
        match self {
            Scheme::Dpc => "A",
            Scheme::Dba => "Z",
        }
    }
}

/// Sequence of positive scale constants `c(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CSchedule {
    Constant { c0: f64 },
    Geometric { c0: f64, ratio: f64 },
    /// Repeated cyclically past its end.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CProductVerdict {
    Bounded,
    Unbounded,
    Inconclusive,
}

impl fmt::Display for CProductVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CProductVerdict::Bounded => "bounded",
            CProductVerdict::Unbounded => "unbounded",
            CProductVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// Tolerance on `ln ∏ c` below which a period product counts as one.
const UNIT_PRODUCT_TOL: f64 = 1e-12;

impl CSchedule {
    pub fn validate(&self) -> Result<(), PowerError> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        match self {
            CSchedule::Constant { c0 } if ok(*c0) => Ok(()),
            CSchedule::Geometric { c0, ratio } if ok(*c0) && ok(*ratio) => Ok(()),
            CSchedule::Explicit { values } if !values.is_empty() && values.iter().all(|&v| ok(v)) => Ok(()),
            CSchedule::Explicit { values } if values.is_empty() => {
                Err(PowerError::InvalidSchedule("explicit schedule needs at least one value".into()))
            }
            _ => Err(PowerError::InvalidSchedule("every c must be finite and > 0".into())),
        }
    }

    pub fn value(&self, n: usize) -> f64 {
        match self {
            CSchedule::Constant { c0 } => *c0,
            CSchedule::Geometric { c0, ratio } => c0 * ratio.powi(n as i32),
            CSchedule::Explicit { values } => values[n % values.len()],
        }
    }

    /// Largest `c(n)` for `n < horizon`.
    pub fn sup(&self, horizon: usize) -> f64 {
        let horizon = horizon.max(1);
        match self {
            CSchedule::Constant { c0 } => *c0,
            CSchedule::Geometric { c0, ratio } if *ratio <= 1.0 => *c0,
            CSchedule::Geometric { .. } => self.value(horizon - 1),
            CSchedule::Explicit { values } => values.iter().take(horizon).fold(0.0, |m, &v| m.max(v)),
        }
    }
}

/// Whether the running product `∏ c(i)` stays bounded.
pub fn c_product_verdict(schedule: &CSchedule, horizon: usize) -> CProductVerdict {
    let by_log = |ln: f64| {
        if ln <= UNIT_PRODUCT_TOL {
            CProductVerdict::Bounded
        } else {
            CProductVerdict::Unbounded
        }
    };
    match schedule {
        CSchedule::Constant { c0 } => by_log(c0.ln()),
        CSchedule::Geometric { ratio, .. } if *ratio < 1.0 => CProductVerdict::Bounded,
        CSchedule::Geometric { ratio, .. } if *ratio > 1.0 => CProductVerdict::Unbounded,
        CSchedule::Geometric { c0, .. } => by_log(c0.ln()),
        CSchedule::Explicit { values } if values.len() <= horizon.max(1) => {
            by_log(values.iter().map(|v| v.ln()).sum())
        }
        CSchedule::Explicit { values } => {
            // Period longer than the horizon: judge from the partial products seen.
            let logs: Vec<f64> = values[..horizon.max(1)]
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v.ln();
                    Some(*acc)
                })
                .collect();
            let half = logs.len() / 2;
            let early = logs[..half.max(1)].iter().fold(0.0_f64, |m, &x| m.max(x));
            let late = logs[half..].iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            if late <= early + UNIT_PRODUCT_TOL {
                CProductVerdict::Bounded
            } else {
                CProductVerdict::Inconclusive
            }
        }
    }
}

/// Update set `{c(i)·A(i)}` (DPC) or `{c(i)·(A(i) + I)}` (DBA), pairing the
/// `i`-th gain matrix with `c(i)`. A constant schedule broadcasts.
pub fn build_update_set(gains: &[GainMatrix], schedule: &CSchedule, scheme: Scheme) -> Result<UpdateSet, PowerError> {
    schedule.validate()?;
    let first = gains.first().ok_or(PowerError::NoGains)?;
    if let Some(g) = gains.iter().find(|g| g.dim() != first.dim()) {
        return Err(PowerError::DimMismatch { left: first.dim(), right: g.dim() });
    }
    let members = gains
        .iter()
        .enumerate()
        .map(|(i, g)| scheme.update_matrix(g).scale(schedule.value(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = (0..gains.len()).map(|i| format!("{}{i}", scheme.label_prefix())).collect();
    Ok(UpdateSet::with_labels(members, labels)?)
}
