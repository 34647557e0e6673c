//! Joint spectral radius brackets.
//!
//! Two estimators share the same output type:
//!
//! * [`brute_force_bounds`] enumerates every product up to a fixed length.
//!   The lower bound is the best averaged spectral radius seen, the upper
//!   bound the largest averaged norm at the final length.
//! * [`gripenberg_estimate`] runs a best-first branch and bound over the
//!   product tree and stops once the bracket is narrower than a requested
//!   gap. A subtree is dropped as soon as its averaged norm is within the
//!   gap of the current lower bound. Every infinite product factors into
//!   such dropped nodes or still-open nodes, so the largest value over
//!   both sets bounds the joint spectral radius from above even when the
//!   budget runs out.
//!
//! Lower bounds are always taken from the lower end of a certified
//! spectral bracket, never from a point estimate.

use crate::matrix::{perron_vector, Matrix, MatrixError, NormKind, ScaledMatrix};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::BinaryHeap;
use std::fmt;
use std::hash::{Hash, Hasher};
use thiserror::Error;

pub const DEFAULT_PRODUCT_BUDGET: u64 = 2_000_000;
pub const DEFAULT_DEPTH: usize = 16;

/// Spectral tolerance for candidate products inside the search.
pub const SEARCH_TOL: f64 = 1e-7;
/// Spectral tolerance for re-verifying the reported witness; below the
/// rounding floor, so the bracket runs until it stops improving.
pub const WITNESS_TOL: f64 = 1e-15;

/// Relative gap under which two candidate values count as tied.
const TIE_REL: f64 = 4.0 * SEARCH_TOL;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JsrError {
    #[error("update set must contain at least one matrix")]
    Empty,
    #[error("member {index} has dimension {found}, expected {expected}")]
    DimMismatch { index: usize, found: usize, expected: usize },
    #[error("{labels} labels given for {members} members")]
    LabelCount { labels: usize, members: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("product budget {budget} cannot cover the {needed} products of length 1")]
    BudgetTooSmall { budget: u64, needed: u64 },
    #[error("upper bound {0} must lie in (0, 1) to issue a certificate")]
    UpperOutOfRange(f64),
    #[error("length-{depth} products reach averaged norm {achieved}, above the claimed bound {claimed}")]
    UpperNotAttained { depth: usize, achieved: f64, claimed: f64 },
    #[error("estimate was computed for a different update set")]
    FingerprintMismatch,
    #[error("index {index} out of range for a set of {len} matrices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Finite alphabet of update matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSet {
    members: Vec<Matrix>,
    labels: Vec<String>,
}

impl UpdateSet {
    pub fn new(members: Vec<Matrix>) -> Result<Self, JsrError> {
        let labels = (0..members.len()).map(|i| format!("B{i}")).collect();
        Self::with_labels(members, labels)
    }

    pub fn with_labels(members: Vec<Matrix>, labels: Vec<String>) -> Result<Self, JsrError> {
        let first = members.first().ok_or(JsrError::Empty)?;
        let dim = first.dim();
        if let Some((index, m)) = members.iter().enumerate().find(|(_, m)| m.dim() != dim) {
            return Err(JsrError::DimMismatch { index, found: m.dim(), expected: dim });
        }
        if labels.len() != members.len() {
            return Err(JsrError::LabelCount { labels: labels.len(), members: members.len() });
        }
        Ok(UpdateSet { members, labels })
    }

    pub fn members(&self) -> &[Matrix] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Matrix {
        &self.members[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.members.iter().all(Matrix::is_nonnegative)
    }

    /// Content hash of the matrices (labels excluded).
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.members.len().hash(&mut h);
        for m in &self.members {
            m.dim().hash(&mut h);
            for x in m.as_slice() {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn check_word(&self, word: &ProductWord) -> Result<(), JsrError> {
        match word.0.iter().find(|&&i| i >= self.len()) {
            Some(&index) => Err(JsrError::IndexOutOfRange { index, len: self.len() }),
            None => Ok(()),
        }
    }

    /// `M(w[0]) · M(w[1]) ⋯ M(w[t-1])`.
    pub fn product(&self, word: &ProductWord) -> Result<Matrix, JsrError> {
        self.check_word(word)?;
        Ok(self.scaled_product(word.indices()).to_matrix()?)
    }

    fn scaled_product(&self, word: &[usize]) -> ScaledMatrix {
        word.iter()
            .fold(ScaledMatrix::identity(self.dim()), |acc, &i| {
                acc.mul(&ScaledMatrix::new(self.members[i].clone()))
            })
    }

    pub fn describe_word(&self, word: &ProductWord) -> String {
        word.0
            .iter()
            .map(|&i| self.labels.get(i).map_or("?", String::as_str))
            .collect::<Vec<_>>()
            .join("·")
    }
}

/// Every member multiplied by `c > 0`.
pub fn scale_set(set: &UpdateSet, c: f64) -> Result<UpdateSet, JsrError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(JsrError::InvalidParameter(format!("scale factor must be positive, got {c}")));
    }
    let members = set.members.iter().map(|m| m.scale(c)).collect::<Result<_, _>>()?;
    UpdateSet::with_labels(members, set.labels.clone())
}

/// Indices into an [`UpdateSet`], most recent factor first: the word
/// `(i_{t-1}, …, i_0)` denotes `M(i_{t-1}) ⋯ M(i_0)`, so `M(i_0)` is applied
/// first when the product acts on a vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductWord(pub Vec<usize>);

impl ProductWord {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Alphabet index applied at time step `n` when the word is repeated.
    pub fn index_at_step(&self, n: usize) -> usize {
        self.0[self.0.len() - 1 - n % self.0.len()]
    }
}

impl fmt::Display for ProductWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Certified bracket `lower ≤ ρ(set) ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsrEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Product attaining `lower` as its averaged spectral radius.
    pub witness: ProductWord,
    pub depth_explored: usize,
    pub products_evaluated: u64,
    pub norm_used: NormKind,
    /// False when a budget cut the search short; the bracket is still valid.
    pub conclusive: bool,
    pub fingerprint: u64,
}

impl JsrEstimate {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        self.lower - slack <= x && x <= self.upper + slack
    }

    /// Intersection of two brackets for the same set; conclusive only if both are.
    pub fn combine(&self, other: &JsrEstimate) -> Result<JsrEstimate, JsrError> {
        if self.fingerprint != other.fingerprint {
            return Err(JsrError::FingerprintMismatch);
        }
        let lower_src = match self.lower.total_cmp(&other.lower) {
            Ordering::Less => other,
            Ordering::Greater => self,
            Ordering::Equal => {
                if (self.witness.len(), &self.witness) <= (other.witness.len(), &other.witness) {
                    self
                } else {
                    other
                }
            }
        };
        let upper_src = if self.upper <= other.upper { self } else { other };
        Ok(JsrEstimate {
            lower: lower_src.lower,
            upper: upper_src.upper,
            witness: lower_src.witness.clone(),
            depth_explored: self.depth_explored.max(other.depth_explored),
            products_evaluated: self.products_evaluated + other.products_evaluated,
            norm_used: upper_src.norm_used,
            conclusive: self.conclusive && other.conclusive,
            fingerprint: self.fingerprint,
        })
    }
}

/// Constants with `‖M(t-1)⋯M(0)‖ ≤ C·γ^t` for every product of length `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    #[serde(rename = "C")]
    pub constant: f64,
    pub gamma: f64,
    /// Block length the bound was verified at.
    pub depth: usize,
    pub norm_used: NormKind,
}

impl StabilityCertificate {
    pub fn bound(&self, t: usize) -> f64 {
        self.constant * self.gamma.powi(t as i32)
    }
}

/// Relative gap under which two re-verified candidates count as tied.
const FINE_TIE_REL: f64 = 1e-9;

/// Running best candidate, ordered by value, then shorter word, then
/// lexicographically smaller word. Near-ties at search precision are
/// re-decided at witness precision.
struct Best {
    value: f64,
    word: Vec<usize>,
    product: Option<ScaledMatrix>,
    refined: bool,
}

impl Best {
    fn new() -> Self {
        Best { value: f64::NEG_INFINITY, word: Vec::new(), product: None, refined: false }
    }

    fn set(&mut self, value: f64, word: &[usize], product: &ScaledMatrix, refined: bool) {
        self.value = value;
        self.word = word.to_vec();
        self.product = Some(product.clone());
        self.refined = refined;
    }

    fn offer(&mut self, coarse: f64, word: &[usize], product: &ScaledMatrix) {
        if self.word.is_empty() || coarse > self.value * (1.0 + TIE_REL) {
            self.set(coarse, word, product, false);
            return;
        }
        if coarse < self.value * (1.0 - TIE_REL) {
            return;
        }
        if !self.refined {
            if let Some(p) = &self.product {
                let fine = p.averaged_spectral_bracket(WITNESS_TOL, self.word.len()).lower;
                self.value = self.value.max(fine);
            }
            self.refined = true;
        }
        let fine = product.averaged_spectral_bracket(WITNESS_TOL, word.len()).lower.max(coarse);
        let preferred = (word.len(), word) < (self.word.len(), self.word.as_slice());
        let replace = if preferred {
            fine >= self.value * (1.0 - FINE_TIE_REL)
        } else {
            fine > self.value * (1.0 + FINE_TIE_REL)
        };
        if replace {
            self.set(fine, word, product, true);
        }
    }

    /// Whether a product with averaged norm `bound` could still win.
    fn could_improve(&self, bound: f64) -> bool {
        self.word.is_empty() || bound >= self.value * (1.0 - TIE_REL)
    }
}

fn level_count(n: u64, depth: usize) -> u64 {
    (1..=depth).fold(0u64, |acc, t| acc.saturating_add(n.saturating_pow(t as u32)))
}

/// Largest depth `≤ depth` whose full enumeration fits in `budget`.
fn affordable_depth(n: usize, depth: usize, budget: u64) -> Result<usize, JsrError> {
    let n = n as u64;
    if n > budget {
        return Err(JsrError::BudgetTooSmall { budget, needed: n });
    }
    Ok((1..=depth).take_while(|&d| level_count(n, d) <= budget).last().unwrap_or(1))
}

fn check_common(depth: usize) -> Result<(), JsrError> {
    if depth == 0 {
        return Err(JsrError::InvalidParameter("depth must be at least 1".into()));
    }
    Ok(())
}

/// Depth-first enumeration of all words up to `depth`, in lexicographic
/// order, calling `visit(word, product)` at every node.
fn enumerate(factors: &[ScaledMatrix], depth: usize, visit: &mut dyn FnMut(&[usize], &ScaledMatrix)) {
    fn go(
        factors: &[ScaledMatrix],
        depth: usize,
        word: &mut Vec<usize>,
        prefix: &ScaledMatrix,
        visit: &mut dyn FnMut(&[usize], &ScaledMatrix),
    ) {
        for (i, f) in factors.iter().enumerate() {
            let prod = prefix.mul(f);
            word.push(i);
            visit(word, &prod);
            if word.len() < depth {
                go(factors, depth, word, &prod, visit);
            }
            word.pop();
        }
    }
    let dim = factors[0].mantissa().dim();
    go(factors, depth, &mut Vec::with_capacity(depth), &ScaledMatrix::identity(dim), visit);
}

fn scaled_members(set: &UpdateSet) -> Vec<ScaledMatrix> {
    set.members.iter().cloned().map(ScaledMatrix::new).collect()
}

/// Re-verifies the witness at [`WITNESS_TOL`] and returns the certified
/// averaged lower bound.
fn verified_lower(set: &UpdateSet, word: &[usize], search_lower: f64) -> f64 {
    let prod = set.scaled_product(word);
    let br = prod.averaged_spectral_bracket(WITNESS_TOL, word.len());
    br.lower.max(search_lower).max(0.0)
}

/// Exhaustive bracket from all products of length `≤ depth`.
///
/// When `budget` cannot cover the full enumeration the largest affordable
/// depth is used instead and the result is flagged inconclusive.
pub fn brute_force_bounds(
    set: &UpdateSet,
    depth: usize,
    norm: NormKind,
    budget: u64,
) -> Result<JsrEstimate, JsrError> {
    check_common(depth)?;
    let d = affordable_depth(set.len(), depth, budget)?;
    let factors = scaled_members(set);
    let mut best = Best::new();
    let mut level_max = vec![f64::NEG_INFINITY; d + 1];
    let mut evaluated = 0u64;
    enumerate(&factors, d, &mut |word, prod| {
        evaluated += 1;
        let t = word.len();
        let ln = prod.ln_norm(norm);
        level_max[t] = level_max[t].max(ln);
        if best.could_improve((ln / t as f64).exp()) {
            let br = prod.averaged_spectral_bracket(SEARCH_TOL, t);
            best.offer(br.lower, word, prod);
        }
    });
    let upper = (level_max[d] / d as f64).exp();
    let lower = verified_lower(set, &best.word, best.value).min(upper);
    Ok(JsrEstimate {
        lower,
        upper,
        witness: ProductWord(best.word),
        depth_explored: d,
        products_evaluated: evaluated,
        norm_used: norm,
        conclusive: d == depth,
        fingerprint: set.fingerprint(),
    })
}

struct Node {
    value: f64,
    word: Vec<usize>,
    product: ScaledMatrix,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: larger value first, then shorter word, then
    /// lexicographically smaller word.
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.word.len().cmp(&self.word.len()))
            .then_with(|| other.word.cmp(&self.word))
    }
}

/// Diagonal similarity `D⁻¹·M·D` that makes `norm` nearly extremal for the
/// sum of a nonnegative set. The joint spectral radius is invariant under
/// it, so bounds computed on the balanced set hold for the original one.
fn balancing_diagonal(set: &UpdateSet, norm: NormKind) -> Option<Vec<f64>> {
    if !set.is_nonnegative() {
        return None;
    }
    let sum = set.members[1..]
        .iter()
        .try_fold(set.members[0].clone(), |acc, m| acc.add(m))
        .ok()?;
    let scale = sum.norm(NormKind::Frobenius);
    let perron = |m: &Matrix| {
        [1e-13, 1e-10, 1e-7].iter().find_map(|&rel| perron_vector(m, rel * scale)).map(|(_, v)| v)
    };
    let right = || perron(&sum);
    let left = || perron(&sum.transpose());
    let d: Vec<f64> = match norm {
        NormKind::Infinity => right()?,
        NormKind::One => left()?.iter().map(|y| 1.0 / y).collect(),
        NormKind::Two | NormKind::Frobenius => {
            let (x, y) = (right()?, left()?);
            x.iter().zip(&y).map(|(a, b)| (a / b).sqrt()).collect()
        }
    };
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (lo > 0.0 && hi.is_finite() && lo / hi > 1e-8).then_some(d)
}

fn balance(m: &Matrix, d: &[f64]) -> Matrix {
    let n = m.dim();
    let data = (0..n * n).map(|k| m.as_slice()[k] * d[k % n] / d[k / n]).collect();
    Matrix::from_row_major(n, data).unwrap_or_else(|_| m.clone())
}

/// Best-first branch and bound for a bracket of width at most `delta`.
///
/// `budget` caps the number of products evaluated. On exhaustion the
/// returned bracket is still valid but wider than `delta`, and
/// `conclusive` is false.
pub fn gripenberg_estimate(
    set: &UpdateSet,
    delta: f64,
    norm: NormKind,
    budget: u64,
) -> Result<JsrEstimate, JsrError> {
    if !(delta > 0.0) {
        return Err(JsrError::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let n = set.len();
    if (n as u64) > budget {
        return Err(JsrError::BudgetTooSmall { budget, needed: n as u64 });
    }
    let factors: Vec<ScaledMatrix> = match balancing_diagonal(set, norm) {
        Some(d) => set.members.iter().map(|m| ScaledMatrix::new(balance(m, &d))).collect(),
        None => scaled_members(set),
    };
    let depth_one_bound = scaled_members(set).iter().map(|m| m.averaged_norm(norm, 1)).fold(0.0, f64::max);

    let mut search = TreeSearch {
        norm,
        delta,
        best: Best::new(),
        heap: BinaryHeap::new(),
        max_pruned: f64::NEG_INFINITY,
        evaluated: 0,
    };
    for (i, f) in factors.iter().enumerate() {
        search.visit(vec![i], f.clone());
    }
    let mut depth_explored = 1;
    let (upper, exhausted) = loop {
        let Some(top) = search.heap.peek() else {
            break (search.max_pruned, false);
        };
        if top.value <= search.best.value + delta {
            break (search.max_pruned.max(top.value), false);
        }
        if search.evaluated + n as u64 > budget {
            break (search.max_pruned.max(top.value), true);
        }
        let node = search.heap.pop().expect("peeked");
        depth_explored = depth_explored.max(node.word.len() + 1);
        for (i, f) in factors.iter().enumerate() {
            let mut word = node.word.clone();
            word.push(i);
            search.visit(word, node.product.mul(f));
        }
    };

    let upper = upper.min(depth_one_bound).max(0.0);
    let lower = verified_lower(set, &search.best.word, search.best.value).min(upper);
    Ok(JsrEstimate {
        lower,
        upper,
        witness: ProductWord(search.best.word),
        depth_explored,
        products_evaluated: search.evaluated,
        norm_used: norm,
        conclusive: !exhausted || upper - lower <= delta,
        fingerprint: set.fingerprint(),
    })
}

struct TreeSearch {
    norm: NormKind,
    delta: f64,
    best: Best,
    heap: BinaryHeap<Node>,
    /// Largest value among dropped nodes.
    max_pruned: f64,
    evaluated: u64,
}

impl TreeSearch {
    fn visit(&mut self, word: Vec<usize>, product: ScaledMatrix) {
        self.evaluated += 1;
        let t = word.len();
        let value = product.averaged_norm(self.norm, t);
        if self.best.could_improve(value) {
            let br = product.averaged_spectral_bracket(SEARCH_TOL, t);
            self.best.offer(br.lower, &word, &product);
        }
        if value <= self.best.value + self.delta {
            self.max_pruned = self.max_pruned.max(value);
        } else {
            self.heap.push(Node { value, word, product });
        }
    }
}

/// Largest `ln‖Π‖` over products of each length `1..=depth` (index 0 unused).
fn level_log_norm_maxima(
    set: &UpdateSet,
    depth: usize,
    norm: NormKind,
    budget: u64,
) -> Result<Vec<f64>, JsrError> {
    check_common(depth)?;
    let d = affordable_depth(set.len(), depth, budget)?;
    if d < depth {
        return Err(JsrError::InvalidParameter(format!(
            "depth {depth} needs {} products, budget is {budget}",
            level_count(set.len() as u64, depth)
        )));
    }
    let mut level_max = vec![f64::NEG_INFINITY; depth + 1];
    level_max[0] = 0.0;
    enumerate(&scaled_members(set), depth, &mut |word, prod| {
        let t = word.len();
        level_max[t] = level_max[t].max(prod.ln_norm(norm));
    });
    Ok(level_max)
}

/// Relative slack for rounding in the verified norms.
const CERT_SLACK: f64 = 1e-9;

fn certificate_at(level_max: &[f64], depth: usize, gamma: f64, norm: NormKind) -> StabilityCertificate {
    let ln_gamma = gamma.ln();
    let worst = (1..depth)
        .map(|r| level_max[r] - r as f64 * ln_gamma)
        .fold(0.0_f64, f64::max);
    StabilityCertificate { constant: worst.exp() * (1.0 + CERT_SLACK), gamma, depth, norm_used: norm }
}

/// Turns an upper bound verified at block length `depth` into constants
/// `(C, γ)` with `‖Π‖ ≤ C·γ^t` for all products.
///
/// A product of length `t = q·depth + r` splits into `q` blocks of length
/// `depth`, each of norm at most `γ^depth`, and a remainder of length
/// `r < depth` whose norm is at most `C·γ^r` by the choice of `C`.
pub fn certificate_from_upper(
    set: &UpdateSet,
    upper: f64,
    depth: usize,
    norm: NormKind,
    budget: u64,
) -> Result<StabilityCertificate, JsrError> {
    if !(upper > 0.0 && upper < 1.0) {
        return Err(JsrError::UpperOutOfRange(upper));
    }
    let level_max = level_log_norm_maxima(set, depth, norm, budget)?;
    let achieved = (level_max[depth] / depth as f64).exp();
    if achieved > upper * (1.0 + CERT_SLACK) {
        return Err(JsrError::UpperNotAttained { depth, achieved, claimed: upper });
    }
    let gamma = upper.max(achieved);
    if gamma >= 1.0 {
        return Err(JsrError::UpperOutOfRange(gamma));
    }
    Ok(certificate_at(&level_max, depth, gamma, norm))
}

/// Searches block lengths `1..=max_depth` for the smallest `γ < 1` and
/// issues the matching certificate. `None` when no block length contracts.
pub fn certify(
    set: &UpdateSet,
    norm: NormKind,
    max_depth: usize,
    budget: u64,
) -> Result<Option<StabilityCertificate>, JsrError> {
    let depth = affordable_depth(set.len(), max_depth, budget)?;
    let level_max = level_log_norm_maxima(set, depth, norm, budget)?;
    let best = (1..=depth)
        .map(|d| (d, (level_max[d] / d as f64).exp()))
        .filter(|&(_, g)| g < 1.0)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(best.map(|(d, gamma)| certificate_at(&level_max, d, gamma.max(f64::MIN_POSITIVE), norm)))
}

/// Margin above one that a certified growth rate must clear, absorbing the
/// rounding of the log-domain rescaling.
const GROWTH_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSearch {
    pub word: Option<ProductWord>,
    /// Averaged spectral radius of `word`, certified from below.
    pub growth: Option<f64>,
    pub budget_exhausted: bool,
}

/// Shortest (then lexicographically least) word whose averaged spectral
/// radius is certifiably above one. An empty result does not certify
/// stability.
pub fn instability_witness(set: &UpdateSet, depth: usize, budget: u64) -> Result<WitnessSearch, JsrError> {
    check_common(depth)?;
    let factors = scaled_members(set);
    let mut evaluated = 0u64;
    for t in 1..=depth {
        let mut found: Option<(Vec<usize>, f64)> = None;
        let mut exhausted = false;
        let mut stack: Vec<(Vec<usize>, ScaledMatrix)> = Vec::new();
        stack.push((Vec::new(), ScaledMatrix::identity(set.dim())));
        // Iterative DFS; children pushed in reverse so index 0 is explored first.
        while let Some((word, prod)) = stack.pop() {
            if word.len() == t {
                if prod.ln_norm(NormKind::Infinity) > 0.0 {
                    let br = prod.averaged_spectral_bracket(SEARCH_TOL, t);
                    if br.upper > 1.0 {
                        let fine = prod.averaged_spectral_bracket(WITNESS_TOL, t);
                        if fine.lower > 1.0 + GROWTH_MARGIN {
                            found = Some((word, fine.lower));
                            break;
                        }
                    }
                }
                continue;
            }
            for i in (0..factors.len()).rev() {
                if evaluated >= budget {
                    exhausted = true;
                    break;
                }
                evaluated += 1;
                let mut w = word.clone();
                w.push(i);
                stack.push((w, prod.mul(&factors[i])));
            }
            if exhausted {
                break;
            }
        }
        if let Some((word, growth)) = found {
            return Ok(WitnessSearch { word: Some(ProductWord(word)), growth: Some(growth), budget_exhausted: false });
        }
        if exhausted {
            return Ok(WitnessSearch { word: None, growth: None, budget_exhausted: true });
        }
    }
    Ok(WitnessSearch { word: None, growth: None, budget_exhausted: false })
}
