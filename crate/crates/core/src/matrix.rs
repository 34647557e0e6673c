//! Dense small-matrix arithmetic, induced norms and spectral radius.
//!
//! Spectral radii are computed as certified brackets rather than point
//! estimates. Upper bounds come from Gelfand's formula evaluated at
//! `k = 2^j` by repeated squaring, lower bounds from traces of the same
//! powers and, for nonnegative matrices, from Collatz–Wielandt ratios of an
//! approximate Perron vector. Every squaring is rescaled by a power of two
//! so the mantissas of products are never touched by the normalization.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Largest supported dimension.
pub const MAX_DIM: usize = 64;

/// Default absolute tolerance for [`spectral_radius`].
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-9;

/// Hard cap on the number of squarings. Beyond `2^62` the Gelfand
/// estimate no longer changes in double precision.
const MAX_SQUARINGS: usize = 62;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix must have at least one row")]
    Empty,
    #[error("row {row} has {len} entries, expected {dim}")]
    NotSquare { row: usize, len: usize, dim: usize },
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    TooLarge(usize),
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("result overflowed to a non-finite value")]
    Overflow,
    #[error("spectral radius did not converge; bracket [{lower}, {upper}]")]
    NoConvergence { lower: f64, upper: f64 },
}

/// Matrix norms. All four are submultiplicative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Induced 1-norm, the largest absolute column sum.
    One,
    /// Induced ∞-norm, the largest absolute row sum.
    #[default]
    #[serde(rename = "inf")]
    Infinity,
    /// Spectral norm, the largest singular value.
    Two,
    #[serde(rename = "fro")]
    Frobenius,
}

impl NormKind {
    pub const ALL: [NormKind; 4] = [
        NormKind::One,
        NormKind::Infinity,
        NormKind::Two,
        NormKind::Frobenius,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::One => "one",
            NormKind::Infinity => "inf",
            NormKind::Two => "two",
            NormKind::Frobenius => "fro",
        }
    }

    /// Vector norm compatible with this matrix norm.
    pub fn vector_norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::One => v.iter().map(|x| x.abs()).sum(),
            NormKind::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::Two | NormKind::Frobenius => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Smallest `κ` with `‖M‖∞ ≤ κ·‖M‖` for every `dim × dim` matrix.
    pub fn infinity_equivalence(self, dim: usize) -> f64 {
        match self {
            NormKind::Infinity => 1.0,
            NormKind::One => dim as f64,
            NormKind::Two | NormKind::Frobenius => (dim as f64).sqrt(),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one" | "1" => Ok(NormKind::One),
            "inf" | "infinity" => Ok(NormKind::Infinity),
            "two" | "2" => Ok(NormKind::Two),
            "fro" | "frobenius" => Ok(NormKind::Frobenius),
            other => Err(format!("unknown norm `{other}` (expected one|inf|two|fro)")),
        }
    }
}

/// Dense square matrix with finite entries, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim)).finish()
    }
}

fn check_dim(dim: usize) -> Result<(), MatrixError> {
    if dim == 0 {
        Err(MatrixError::Empty)
    } else if dim > MAX_DIM {
        Err(MatrixError::TooLarge(dim))
    } else {
        Ok(())
    }
}

impl Matrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let dim = rows.len();
        check_dim(dim)?;
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(MatrixError::NotSquare { row: i, len: row.len(), dim });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(MatrixError::NotSquare { row: data.len() / dim, len: data.len() % dim, dim });
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(MatrixError::NonFinite { row: k / dim, col: k % dim });
        }
        Ok(Matrix { dim, data })
    }

    /// # Panics
    /// If `dim` is zero or above [`MAX_DIM`].
    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// # Panics
    /// If `dim` is zero or above [`MAX_DIM`].
    pub fn zeros(dim: usize) -> Self {
        check_dim(dim).expect("invalid matrix dimension");
        Matrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self, MatrixError> {
        check_dim(values.len())?;
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        Self::from_row_major(m.dim, m.data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.data[i * n + j];
            }
        }
        Matrix { dim: n, data: out }
    }

    pub fn multiply(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_dim(other)?;
        let out = mul_raw(self, other);
        finite_or_overflow(out)
    }

    pub fn scale(&self, c: f64) -> Result<Matrix, MatrixError> {
        finite_or_overflow(self.map(|x| x * c))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        finite_or_overflow(Matrix { dim: self.dim, data })
    }

    /// Matrix–vector product.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, MatrixError> {
        if v.len() != self.dim {
            return Err(MatrixError::DimMismatch { left: self.dim, right: v.len() });
        }
        Ok(self.apply_raw(v))
    }

    pub(crate) fn apply_raw(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        let n = self.dim;
        match kind {
            NormKind::One => (0..n)
                .map(|j| (0..n).map(|i| self.data[i * n + j].abs()).sum::<f64>())
                .fold(0.0, f64::max),
            NormKind::Infinity => self
                .data
                .chunks(n)
                .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            NormKind::Frobenius => frobenius(&self.data),
            NormKind::Two => two_norm(self),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { dim: self.dim, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    fn same_dim(&self, other: &Matrix) -> Result<(), MatrixError> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(MatrixError::DimMismatch { left: self.dim, right: other.dim })
        }
    }

    fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Multiplies in place by `2^-exp`. Exact unless entries become subnormal.
    fn scale_pow2(&mut self, exp: i32) {
        let f = pow2(-exp);
        for x in &mut self.data {
            *x *= f;
        }
    }
}

fn finite_or_overflow(m: Matrix) -> Result<Matrix, MatrixError> {
    if m.data.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(MatrixError::Overflow)
    }
}

fn mul_raw(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.dim;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a.data[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in row.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Matrix { dim: n, data: out }
}

fn frobenius(data: &[f64]) -> f64 {
    // Scaled to avoid overflow for entries near f64::MAX.
    let big = data.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if big == 0.0 {
        return 0.0;
    }
    big * data.iter().map(|x| (x / big) * (x / big)).sum::<f64>().sqrt()
}

fn pow2(e: i32) -> f64 {
    f64::powi(2.0, e)
}

/// Exponent `e` such that `x / 2^e` lies in `[0.7, 1.5)`.
fn pow2_exponent(x: f64) -> i32 {
    x.log2().round() as i32
}

/// 2-norm as the square root of the spectral radius of `AᵀA`, computed on
/// the Frobenius-normalized matrix so `AᵀA` cannot overflow.
fn two_norm(a: &Matrix) -> f64 {
    let f = a.norm(NormKind::Frobenius);
    if f == 0.0 {
        return 0.0;
    }
    let mut s = a.clone();
    s.scale_pow2(pow2_exponent(f));
    let gram = mul_raw(&s.transpose(), &s);
    let br = spectral_bracket_with_budget(&gram, 1e-14, MAX_SQUARINGS);
    let scale = pow2(pow2_exponent(f));
    (br.upper.sqrt() * scale).min(f)
}

/// A matrix carried as `mat · 2^exp2`, so long products neither overflow
/// nor underflow.
#[derive(Clone, Debug)]
pub struct ScaledMatrix {
    mat: Matrix,
    exp2: i64,
}

/// Renormalize once the Frobenius norm leaves `[2^-64, 2^64]`.
const RESCALE_LIMIT: f64 = 18446744073709551616.0;

impl ScaledMatrix {
    pub fn new(m: Matrix) -> Self {
        let mut s = ScaledMatrix { mat: m, exp2: 0 };
        s.normalize();
        s
    }

    pub fn identity(dim: usize) -> Self {
        ScaledMatrix { mat: Matrix::identity(dim), exp2: 0 }
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &ScaledMatrix) -> ScaledMatrix {
        let mut out = ScaledMatrix { mat: mul_raw(&self.mat, &rhs.mat), exp2: self.exp2 + rhs.exp2 };
        out.maybe_rescale();
        out
    }

    pub fn mantissa(&self) -> &Matrix {
        &self.mat
    }

    pub fn exp2(&self) -> i64 {
        self.exp2
    }

    pub fn is_zero(&self) -> bool {
        self.mat.is_zero()
    }

    /// Natural log of the norm; `-∞` for the zero matrix.
    pub fn ln_norm(&self, kind: NormKind) -> f64 {
        let n = self.mat.norm(kind);
        if n == 0.0 {
            f64::NEG_INFINITY
        } else {
            n.ln() + self.exp2 as f64 * std::f64::consts::LN_2
        }
    }

    /// `‖self‖^(1/len)`.
    pub fn averaged_norm(&self, kind: NormKind, len: usize) -> f64 {
        (self.ln_norm(kind) / len as f64).exp()
    }

    /// Converts back to linear scale.
    pub fn to_matrix(&self) -> Result<Matrix, MatrixError> {
        let e = i32::try_from(self.exp2).map_err(|_| MatrixError::Overflow)?;
        let mut m = self.mat.clone();
        m.scale_pow2(-e);
        finite_or_overflow(m)
    }

    /// Certified bracket on `ρ(self)^(1/len)`.
    pub fn averaged_spectral_bracket(&self, tol: f64, len: usize) -> SpectralBracket {
        let br = spectral_bracket(&self.mat, tol);
        let shift = self.exp2 as f64 * std::f64::consts::LN_2;
        let root = |x: f64| if x <= 0.0 { 0.0 } else { ((x.ln() + shift) / len as f64).exp() };
        SpectralBracket { lower: root(br.lower), upper: root(br.upper), converged: br.converged }
    }

    fn normalize(&mut self) {
        let f = self.mat.norm(NormKind::Frobenius);
        if f > 0.0 {
            let e = pow2_exponent(f);
            self.mat.scale_pow2(e);
            self.exp2 += e as i64;
        }
    }

    fn maybe_rescale(&mut self) {
        let f = self.mat.norm(NormKind::Frobenius);
        if f > 0.0 && !(1.0 / RESCALE_LIMIT..=RESCALE_LIMIT).contains(&f) {
            self.normalize();
        }
    }
}

/// Certified enclosure `lower ≤ ρ ≤ upper` of a spectral radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBracket {
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
}

impl SpectralBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Iteration budget `10·m·⌈ln(1/tol)⌉`, capped at the useful squaring depth.
fn default_budget(dim: usize, tol: f64) -> usize {
    let logs = (1.0 / tol).ln().ceil().max(1.0) as usize;
    (10 * dim * logs).min(MAX_SQUARINGS)
}

pub fn spectral_bracket(a: &Matrix, tol: f64) -> SpectralBracket {
    spectral_bracket_with_budget(a, tol, default_budget(a.dim, tol))
}

fn spectral_bracket_with_budget(a: &Matrix, tol: f64, budget: usize) -> SpectralBracket {
    let n = a.dim;
    let fro = a.norm(NormKind::Frobenius);
    if fro == 0.0 {
        return SpectralBracket { lower: 0.0, upper: 0.0, converged: true };
    }
    if n == 1 {
        let r = a.data[0].abs();
        return SpectralBracket { lower: r, upper: r, converged: true };
    }
    let e0 = pow2_exponent(fro);
    let scale = pow2(e0);
    let mut s = a.clone();
    s.scale_pow2(e0);
    let base = s.clone();
    let nonneg = a.is_nonnegative();

    // s_j = A^(2^j) / exp(log_scale), tracked relative to the normalized base.
    let mut log_scale = 0.0_f64;
    let mut k = 1.0_f64;
    let mut lower = 0.0_f64;
    let mut upper = base.norm(NormKind::Infinity).min(base.norm(NormKind::One));

    // Shifted copy for Perron-vector extraction: ρ(A + I) = ρ(A) + 1 when A ≥ 0,
    // and A + I is primitive whenever A is irreducible.
    let mut shifted = if nonneg {
        let mut b = base.clone();
        for i in 0..n {
            b.data[i * n + i] += 1.0;
        }
        Some(b)
    } else {
        None
    };

    let mut row_sums = vec![0.0; n];
    let abs_tol = |up: f64| (tol / scale).max(64.0 * f64::EPSILON * up * n as f64);

    for _ in 0..=budget {
        let f = s.norm(NormKind::Frobenius);
        if f == 0.0 {
            return SpectralBracket { lower: 0.0, upper: 0.0, converged: true };
        }
        upper = upper.min(((log_scale + f.ln()) / k).exp());
        let tr = s.trace().abs();
        if tr > 0.0 {
            lower = lower.max(((log_scale + (tr / n as f64).ln()) / k).exp());
        }
        if let Some(b) = &shifted {
            for (i, xi) in row_sums.iter_mut().enumerate() {
                *xi = b.row(i).iter().sum();
            }
            let (lo, hi) = collatz_wielandt(&base, &row_sums);
            lower = lower.max(lo);
            upper = upper.min(hi);
        }
        if upper - lower <= abs_tol(upper) {
            return SpectralBracket { lower: lower * scale, upper: upper * scale, converged: true };
        }

        let mut next = mul_raw(&s, &s);
        let nf = next.norm(NormKind::Frobenius);
        if nf == 0.0 {
            return SpectralBracket { lower: 0.0, upper: 0.0, converged: true };
        }
        let e = pow2_exponent(nf);
        next.scale_pow2(e);
        log_scale = 2.0 * log_scale + e as f64 * std::f64::consts::LN_2;
        s = next;
        k *= 2.0;

        if let Some(b) = shifted.as_mut() {
            let mut nb = mul_raw(b, b);
            let e = pow2_exponent(nb.norm(NormKind::Frobenius));
            nb.scale_pow2(e);
            *b = nb;
        }
    }
    let lower = lower.min(upper);
    SpectralBracket { lower: lower * scale, upper: upper * scale, converged: false }
}

/// Collatz–Wielandt bounds for nonnegative `a` from a nonnegative test vector.
///
/// The lower bound restricts to the principal submatrix on the dominant
/// support of `x`, which stays valid (ρ of a principal submatrix never
/// exceeds ρ(a)) and stays tight for reducible matrices. The upper bound
/// needs `x > 0` componentwise.
fn collatz_wielandt(a: &Matrix, x: &[f64]) -> (f64, f64) {
    let n = a.dim;
    let xmax = x.iter().fold(0.0_f64, |m, &v| m.max(v));
    if !(xmax > 0.0) || !xmax.is_finite() {
        return (0.0, f64::INFINITY);
    }
    let mut lower = 0.0_f64;
    let mut support = Vec::with_capacity(n);
    let mut last_len = usize::MAX;
    for &theta in &[0.0, 1e-12, 1e-8, 1e-4, 1e-2] {
        let cut = theta * xmax;
        support.clear();
        support.extend((0..n).filter(|&i| x[i] > cut));
        // Supports shrink as the cut rises, so an unchanged size means an unchanged set.
        if support.len() == last_len {
            continue;
        }
        last_len = support.len();
        let lo = support
            .iter()
            .map(|&i| {
                let row = a.row(i);
                support.iter().map(|&j| row[j] * x[j]).sum::<f64>() / x[i]
            })
            .fold(f64::INFINITY, f64::min);
        if lo.is_finite() {
            lower = lower.max(lo);
        }
    }
    let upper = if x.iter().all(|&v| v > 0.0) {
        (0..n)
            .map(|i| a.row(i).iter().zip(x).map(|(r, v)| r * v).sum::<f64>() / x[i])
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    (lower, upper)
}

/// Spectral radius within absolute tolerance `tol`.
pub fn spectral_radius(a: &Matrix, tol: f64) -> Result<f64, MatrixError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let br = spectral_bracket(a, tol);
    if br.converged {
        Ok(br.midpoint())
    } else {
        Err(MatrixError::NoConvergence { lower: br.lower, upper: br.upper })
    }
}

/// Perron root and a strictly positive right eigenvector (∞-normalized) of a
/// nonnegative matrix. Returns `None` for matrices with negative entries or
/// when the dominant eigenvector has zero components.
pub fn perron_vector(a: &Matrix, tol: f64) -> Option<(f64, Vec<f64>)> {
    if !a.is_nonnegative() {
        return None;
    }
    let n = a.dim;
    let fro = a.norm(NormKind::Frobenius);
    if fro == 0.0 {
        return None;
    }
    let e0 = pow2_exponent(fro);
    let mut base = a.clone();
    base.scale_pow2(e0);
    let mut b = base.clone();
    for i in 0..n {
        b.data[i * n + i] += 1.0;
    }
    let tol = tol / pow2(e0);
    for _ in 0..MAX_SQUARINGS {
        let x = b.apply_raw(&vec![1.0; n]);
        let (lo, hi) = collatz_wielandt(&base, &x);
        if hi.is_finite() && hi - lo <= tol {
            let xmax = x.iter().fold(0.0_f64, |m, &v| m.max(v));
            let v: Vec<f64> = x.iter().map(|&xi| xi / xmax).collect();
            return Some((0.5 * (lo + hi) * pow2(e0), v));
        }
        let mut nb = mul_raw(&b, &b);
        let e = pow2_exponent(nb.norm(NormKind::Frobenius));
        nb.scale_pow2(e);
        b = nb;
    }
    None
}

/// `‖a^k‖^(1/k)`, with `a^k` formed by left-to-right binary exponentiation
/// so that `a^(2k)` is exactly the square of the computed `a^k`.
pub fn matrix_power_norm(a: &Matrix, k: u64, kind: NormKind) -> f64 {
    assert!(k >= 1, "power must be positive");
    let base = ScaledMatrix::new(a.clone());
    let mut acc = ScaledMatrix::identity(a.dim);
    for bit in (0..64 - k.leading_zeros()).rev() {
        acc = acc.mul(&acc);
        if (k >> bit) & 1 == 1 {
            acc = acc.mul(&base);
        }
        if acc.is_zero() {
            return 0.0;
        }
    }
    (acc.ln_norm(kind) / k as f64).exp()
}
