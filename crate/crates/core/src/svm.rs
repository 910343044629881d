//! Soft-margin kernel SVM trained with sequential minimal optimization, and a
//! one-vs-rest multiclass ensemble on top of it.
//!
//! The solver follows Platt's outer loop: alternate full sweeps with sweeps
//! over the non-bound multipliers, pick the partner of a KKT violator by the
//! largest error gap, and fall back to randomized scans when that step fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::dot;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data must contain both labels")]
    InsufficientClasses,
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("labels must be +1 or -1, found {0}")]
    InvalidLabel(i8),
    #[error("{0} inputs but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// `1 / (dims × mean per-feature variance)` of the training inputs.
    Auto,
    Value(f64),
}

/// Kernel as requested by the caller; `Gamma::Auto` is resolved at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: Gamma },
    Polynomial { degree: u32, coef0: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf { gamma: Gamma::Auto }
    }
}

/// Fully resolved kernel stored in trained models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Polynomial { degree: u32, coef0: f64 },
}

impl Kernel {
    /// Caller guarantees equal lengths.
    pub fn apply(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(u, v),
            Kernel::Rbf { gamma } => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Polynomial { degree, coef0 } => (dot(u, v) + coef0).powi(degree as i32),
        }
    }
}

pub fn kernel_eval(kernel: &Kernel, u: &[f64], v: &[f64]) -> Result<f64, SvmError> {
    if u.len() != v.len() {
        return Err(SvmError::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    Ok(kernel.apply(u, v))
}

impl KernelSpec {
    pub fn resolve(&self, inputs: &[Vec<f64>]) -> Result<Kernel, SvmError> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Polynomial { degree, coef0 } => {
                if degree == 0 {
                    return Err(SvmError::InvalidParameter("polynomial degree must be at least 1".into()));
                }
                Ok(Kernel::Polynomial { degree, coef0 })
            }
            KernelSpec::Rbf { gamma: Gamma::Value(g) } => {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(SvmError::InvalidParameter(format!("gamma must be positive, got {g}")));
                }
                Ok(Kernel::Rbf { gamma: g })
            }
            KernelSpec::Rbf { gamma: Gamma::Auto } => Ok(Kernel::Rbf { gamma: auto_gamma(inputs) }),
        }
    }
}

/// `1 / (dims × mean per-feature population variance)`; 1 when that is degenerate.
pub fn auto_gamma(inputs: &[Vec<f64>]) -> f64 {
    let Some(first) = inputs.first() else {
        return 1.0;
    };
    let dims = first.len();
    let n = inputs.len() as f64;
    if dims == 0 {
        return 1.0;
    }
    let mut total_var = 0.0;
    for j in 0..dims {
        let mean = inputs.iter().map(|x| x[j]).sum::<f64>() / n;
        total_var += inputs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
    }
    let mean_var = total_var / dims as f64;
    if mean_var > 0.0 && mean_var.is_finite() {
        1.0 / (dims as f64 * mean_var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoParams {
    pub c: f64,
    /// KKT tolerance.
    pub tol: f64,
    /// Cap on full sweeps over the training set.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams { c: 1.0, tol: 1e-3, max_passes: 200, seed: 42 }
    }
}

impl SmoParams {
    fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SvmError::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_passes == 0 {
            return Err(SvmError::InvalidParameter("max_passes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLabels {
    pub negative: String,
    pub positive: String,
}

impl Default for BinaryLabels {
    fn default() -> Self {
        BinaryLabels { negative: "-1".into(), positive: "+1".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i y_i` per support vector.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
    pub labels: BinaryLabels,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    /// `Σ_i coeff_i K(sv_i, v) + bias`.
    pub fn decision(&self, v: &[f64]) -> Result<f64, SvmError> {
        if v.len() != self.dim() {
            return Err(SvmError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, a)| a * self.kernel.apply(sv, v))
            .sum::<f64>()
            + self.bias)
    }

    /// +1 when the decision value is ≥ 0, else −1.
    pub fn predict(&self, v: &[f64]) -> Result<i8, SvmError> {
        Ok(if self.decision(v)? >= 0.0 { 1 } else { -1 })
    }

    /// Recovered multipliers `α_i = |coeff_i|`.
    pub fn alphas(&self) -> Vec<f64> {
        self.dual_coeffs.iter().map(|a| a.abs()).collect()
    }
}

/// Result of a traced fit: the model, sweeps used, and the dual objective
/// after every sweep.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub model: SvmModel,
    pub passes: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

const ALPHA_EPS: f64 = 1e-12;
const STEP_EPS: f64 = 1e-7;

fn validate_matrix(inputs: &[Vec<f64>]) -> Result<(), SvmError> {
    let dim = inputs.first().map_or(0, Vec::len);
    for x in inputs {
        if x.len() != dim {
            return Err(SvmError::DimensionMismatch { expected: dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFiniteInput);
        }
    }
    Ok(())
}

fn validate_inputs(inputs: &[Vec<f64>], labels: &[i8]) -> Result<(), SvmError> {
    if inputs.len() != labels.len() {
        return Err(SvmError::LengthMismatch(inputs.len(), labels.len()));
    }
    validate_matrix(inputs)?;
    for &y in labels {
        if y != 1 && y != -1 {
            return Err(SvmError::InvalidLabel(y));
        }
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(SvmError::InsufficientClasses);
    }
    Ok(())
}

fn gram(inputs: &[Vec<f64>], kernel: &Kernel) -> Vec<f64> {
    let n = inputs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.apply(&inputs[i], &inputs[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

pub fn train_binary(inputs: &[Vec<f64>], labels: &[i8], kernel: &KernelSpec, params: &SmoParams) -> Result<SvmModel, SvmError> {
    Ok(fit_binary(inputs, labels, kernel, params, false)?.model)
}

/// Like [`train_binary`] but records the dual objective after each sweep.
pub fn train_binary_traced(
    inputs: &[Vec<f64>],
    labels: &[i8],
    kernel: &KernelSpec,
    params: &SmoParams,
) -> Result<BinaryFit, SvmError> {
    fit_binary(inputs, labels, kernel, params, true)
}

fn fit_binary(
    inputs: &[Vec<f64>],
    labels: &[i8],
    kernel: &KernelSpec,
    params: &SmoParams,
    trace: bool,
) -> Result<BinaryFit, SvmError> {
    params.validate()?;
    validate_inputs(inputs, labels)?;
    let kernel = kernel.resolve(inputs)?;
    let k = gram(inputs, &kernel);
    Ok(solve(inputs, labels, &k, kernel, params, trace, BinaryLabels::default()))
}

struct Smo<'a> {
    n: usize,
    k: &'a [f64],
    y: Vec<f64>,
    alpha: Vec<f64>,
    /// `E_i = f(x_i) − y_i` with `f = Σ α_j y_j K_ij + b`.
    err: Vec<f64>,
    b: f64,
    c: f64,
    tol: f64,
    rng: ChaCha8Rng,
}

impl Smo<'_> {
    fn kk(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn objective(&self) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.n {
            if self.alpha[i] == 0.0 {
                continue;
            }
            for j in 0..self.n {
                quad += self.alpha[i] * self.alpha[j] * self.y[i] * self.y[j] * self.kk(i, j);
            }
        }
        self.alpha.iter().sum::<f64>() - 0.5 * quad
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.err[i1], self.err[i2]);
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), (c + a2 - a1).min(c))
        } else {
            ((a1 + a2 - c).max(0.0), (a1 + a2).min(c))
        };
        if hi - lo <= ALPHA_EPS * c {
            return false;
        }
        let (k11, k12, k22) = (self.kk(i1, i1), self.kk(i1, i2), self.kk(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;

        let mut a2n = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // objective (to minimize) at both ends of the feasible segment
            let f1 = y1 * (e1 - self.b) - a1 * k11 - s * a2 * k12;
            let f2 = y2 * (e2 - self.b) - s * a1 * k12 - a2 * k22;
            let at = |a2x: f64| {
                let a1x = a1 + s * (a2 - a2x);
                a1x * f1 + a2x * f2 + 0.5 * a1x * a1x * k11 + 0.5 * a2x * a2x * k22 + s * a2x * a1x * k12
            };
            let (lobj, hobj) = (at(lo), at(hi));
            if lobj < hobj - STEP_EPS {
                lo
            } else if lobj > hobj + STEP_EPS {
                hi
            } else {
                a2
            }
        };
        if a2n < ALPHA_EPS * c {
            a2n = 0.0;
        } else if a2n > c * (1.0 - ALPHA_EPS) {
            a2n = c;
        }
        if (a2n - a2).abs() < STEP_EPS * (a2n + a2 + STEP_EPS) {
            return false;
        }
        let mut a1n = a1 + s * (a2 - a2n);
        if a1n < ALPHA_EPS * c {
            a1n = 0.0;
        } else if a1n > c * (1.0 - ALPHA_EPS) {
            a1n = c;
        }

        let (d1, d2) = (y1 * (a1n - a1), y2 * (a2n - a2));
        let b1 = self.b - e1 - d1 * k11 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2 * k22;
        let bn = if a1n > 0.0 && a1n < c {
            b1
        } else if a2n > 0.0 && a2n < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = bn - self.b;
        for i in 0..self.n {
            self.err[i] += d1 * self.kk(i1, i) + d2 * self.kk(i2, i) + db;
        }
        self.alpha[i1] = a1n;
        self.alpha[i2] = a2n;
        self.b = bn;
        true
    }

    fn violates_kkt(&self, i: usize) -> bool {
        let r = self.err[i] * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates_kkt(i2) {
            return false;
        }
        let e2 = self.err[i2];
        let non_bound: Vec<usize> = (0..self.n).filter(|&i| self.non_bound(i)).collect();

        // partner with the largest |E1 − E2|, drawn from non-bound multipliers when any exist
        let pool: Vec<usize> = if non_bound.len() > 1 { non_bound.clone() } else { (0..self.n).collect() };
        let mut best_gap = -1.0;
        let mut best: Vec<usize> = Vec::new();
        for &i in &pool {
            if i == i2 {
                continue;
            }
            let gap = (self.err[i] - e2).abs();
            if gap > best_gap {
                best_gap = gap;
                best.clear();
                best.push(i);
            } else if gap == best_gap {
                best.push(i);
            }
        }
        if !best.is_empty() {
            let i1 = best[self.rng.random_range(0..best.len())];
            if self.take_step(i1, i2) {
                return true;
            }
        }

        if !non_bound.is_empty() {
            let start = self.rng.random_range(0..non_bound.len());
            for off in 0..non_bound.len() {
                let i1 = non_bound[(start + off) % non_bound.len()];
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        let start = self.rng.random_range(0..self.n);
        for off in 0..self.n {
            if self.take_step((start + off) % self.n, i2) {
                return true;
            }
        }
        false
    }

    /// Bias averaged over free support vectors, falling back to all support vectors.
    fn final_bias(&self) -> f64 {
        let margin = |i: usize| -> f64 {
            let u: f64 = (0..self.n).map(|j| self.alpha[j] * self.y[j] * self.kk(i, j)).sum();
            self.y[i] - u
        };
        let free: Vec<usize> = (0..self.n)
            .filter(|&i| self.alpha[i] > ALPHA_EPS && self.alpha[i] < self.c * (1.0 - ALPHA_EPS))
            .collect();
        let chosen = if free.is_empty() {
            (0..self.n).filter(|&i| self.alpha[i] > ALPHA_EPS).collect()
        } else {
            free
        };
        if chosen.is_empty() {
            return self.b;
        }
        chosen.iter().map(|&i| margin(i)).sum::<f64>() / chosen.len() as f64
    }
}

fn solve(
    inputs: &[Vec<f64>],
    labels: &[i8],
    k: &[f64],
    kernel: Kernel,
    params: &SmoParams,
    trace: bool,
    names: BinaryLabels,
) -> BinaryFit {
    let n = inputs.len();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut smo = Smo {
        n,
        k,
        err: y.iter().map(|v| -v).collect(),
        y,
        alpha: vec![0.0; n],
        b: 0.0,
        c: params.c,
        tol: params.tol,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
    };

    let mut objective_trace = Vec::new();
    let mut passes = 0;
    let mut converged = false;
    let mut examine_all = true;
    let mut non_bound_sweeps = 0;
    loop {
        let mut changed = 0;
        if examine_all {
            if passes == params.max_passes {
                break;
            }
            passes += 1;
            non_bound_sweeps = 0;
            for i in 0..n {
                changed += usize::from(smo.examine(i));
            }
        } else {
            non_bound_sweeps += 1;
            for i in 0..n {
                if smo.non_bound(i) {
                    changed += usize::from(smo.examine(i));
                }
            }
        }
        if trace {
            let w = smo.objective();
            log::debug!("smo sweep {} (full: {examine_all}): {changed} updates, dual objective {w}", objective_trace.len() + 1);
            objective_trace.push(w);
        }
        if examine_all {
            if changed == 0 {
                converged = true;
                break;
            }
            examine_all = false;
        } else if changed == 0 || non_bound_sweeps >= n.max(100) {
            examine_all = true;
        }
    }

    let bias = smo.final_bias();
    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for i in 0..n {
        if smo.alpha[i] > ALPHA_EPS {
            support_vectors.push(inputs[i].clone());
            dual_coeffs.push(smo.alpha[i] * smo.y[i]);
        }
    }
    BinaryFit {
        model: SvmModel { support_vectors, dual_coeffs, bias, kernel, c: params.c, labels: names },
        passes,
        converged,
        objective_trace,
    }
}

// ---------------------------------------------------------------------------
// One-vs-rest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSvmModel<L> {
    pub classes: Vec<L>,
    /// `models[k]` separates `classes[k]` (+1) from the rest (−1).
    pub models: Vec<SvmModel>,
}

/// Seed of the class at position `k`, derived from the master seed.
pub fn class_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains one binary model per distinct label, in ascending label order.
pub fn train_multiclass<L>(
    inputs: &[Vec<f64>],
    labels: &[L],
    kernel: &KernelSpec,
    params: &SmoParams,
) -> Result<MulticlassSvmModel<L>, SvmError>
where
    L: Clone + Ord + ToString + Send + Sync,
{
    use rayon::prelude::*;

    params.validate()?;
    if inputs.len() != labels.len() {
        return Err(SvmError::LengthMismatch(inputs.len(), labels.len()));
    }
    let mut classes: Vec<L> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SvmError::InsufficientClasses);
    }
    validate_matrix(inputs)?;
    let kernel = kernel.resolve(inputs)?;
    let k = gram(inputs, &kernel);

    let models = classes
        .par_iter()
        .enumerate()
        .map(|(idx, class)| {
            let y: Vec<i8> = labels.iter().map(|l| if l == class { 1 } else { -1 }).collect();
            let p = SmoParams { seed: class_seed(params.seed, idx), ..*params };
            let names = BinaryLabels { negative: "rest".into(), positive: class.to_string() };
            solve(inputs, &y, &k, kernel, &p, false, names).model
        })
        .collect();
    Ok(MulticlassSvmModel { classes, models })
}

impl<L: Clone> MulticlassSvmModel<L> {
    pub fn decision_values(&self, v: &[f64]) -> Result<Vec<f64>, SvmError> {
        self.models.iter().map(|m| m.decision(v)).collect()
    }

    /// Argmax of the per-class decisions; ties go to the earliest class.
    pub fn predict(&self, v: &[f64]) -> Result<L, SvmError> {
        let scores = self.decision_values(v)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok(self.classes[best].clone())
    }
}
