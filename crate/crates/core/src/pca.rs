//! z-score standardization followed by projection onto the leading
//! eigenvectors of the covariance matrix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, jacobi_eigen, LinalgError, Matrix};

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least 2 vectors to fit, got {0}")]
    TooFewSamples(usize),
    #[error("invalid retention: {0}")]
    InvalidRetention(String),
    #[error("non-finite input value")]
    NonFinite,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Retain {
    /// Smallest count whose cumulative explained variance reaches the fraction.
    VarianceFraction(f64),
    ComponentCount(usize),
}

impl Default for Retain {
    fn default() -> Self {
        Retain::VarianceFraction(0.95)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Center and divide by the per-feature sample standard deviation.
    #[default]
    Standardize,
    CenterOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `l × d`, one orthonormal eigenvector per row.
    pub components: Vec<Vec<f64>>,
    /// Retained eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Trace of the (scaled) covariance matrix.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn explained_variance_fraction(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.eigenvalues.iter().sum::<f64>() / self.total_variance
        } else {
            1.0
        }
    }

    fn check_dim(&self, got: usize) -> Result<(), PcaError> {
        if got != self.input_dim() {
            return Err(PcaError::DimensionMismatch { expected: self.input_dim(), got });
        }
        Ok(())
    }

    /// Standardized coordinates `(v − mean) / scale`.
    pub fn standardize(&self, v: &[f64]) -> Result<Vec<f64>, PcaError> {
        self.check_dim(v.len())?;
        Ok(v.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect())
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, PcaError> {
        let z = self.standardize(v)?;
        Ok(self.components.iter().map(|c| dot(c, &z)).collect())
    }

    pub fn project_all<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<Vec<Vec<f64>>, PcaError> {
        vectors.iter().map(|v| self.project(v.as_ref())).collect()
    }

    /// `mean + scale ⊙ (Cᵀ · reduced)`.
    pub fn reconstruct(&self, reduced: &[f64]) -> Result<Vec<f64>, PcaError> {
        if reduced.len() != self.output_dim() {
            return Err(PcaError::DimensionMismatch { expected: self.output_dim(), got: reduced.len() });
        }
        let d = self.input_dim();
        let mut z = vec![0.0; d];
        for (coef, comp) in reduced.iter().zip(&self.components) {
            for (zi, ci) in z.iter_mut().zip(comp) {
                *zi += coef * ci;
            }
        }
        Ok(z.iter().zip(&self.mean).zip(&self.scale).map(|((zi, m), s)| m + s * zi).collect())
    }
}

pub fn fit_pca<V: AsRef<[f64]>>(vectors: &[V], retain: Retain) -> Result<PcaModel, PcaError> {
    fit_pca_with(vectors, retain, Scaling::Standardize)
}

pub fn fit_pca_with<V: AsRef<[f64]>>(vectors: &[V], retain: Retain, scaling: Scaling) -> Result<PcaModel, PcaError> {
    let n = vectors.len();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    let d = vectors[0].as_ref().len();
    for v in vectors {
        let v = v.as_ref();
        if v.len() != d {
            return Err(PcaError::DimensionMismatch { expected: d, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PcaError::NonFinite);
        }
    }
    match retain {
        Retain::VarianceFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(PcaError::InvalidRetention(format!("variance fraction must lie in (0, 1], got {f}")));
        }
        Retain::ComponentCount(l) if l == 0 || l > d => {
            return Err(PcaError::InvalidRetention(format!("component count must lie in [1, {d}], got {l}")));
        }
        _ => {}
    }

    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let dof = (n - 1) as f64;
    let scale: Vec<f64> = match scaling {
        Scaling::CenterOnly => vec![1.0; d],
        Scaling::Standardize => (0..d)
            .map(|j| {
                let first = vectors[0].as_ref()[j];
                if vectors.iter().all(|v| v.as_ref()[j] == first) {
                    return 1.0;
                }
                let ss: f64 = vectors.iter().map(|v| (v.as_ref()[j] - mean[j]).powi(2)).sum();
                let sd = (ss / dof).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect(),
    };

    let mut cov: Matrix = vec![vec![0.0; d]; d];
    let mut z = vec![0.0; d];
    for v in vectors {
        for (j, x) in v.as_ref().iter().enumerate() {
            z[j] = (x - mean[j]) / scale[j];
        }
        for i in 0..d {
            for j in i..d {
                cov[i][j] += z[i] * z[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= dof;
            cov[j][i] = cov[i][j];
        }
    }
    let total_variance = crate::linalg::trace(&cov);

    let eig = jacobi_eigen(&cov)?;
    let values: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();

    let l = match retain {
        Retain::ComponentCount(l) => l,
        Retain::VarianceFraction(f) => retained_count(&values, total_variance, f),
    };

    let components = eig.vectors.into_iter().take(l).map(orient).collect();
    Ok(PcaModel {
        mean,
        scale,
        components,
        eigenvalues: values[..l].to_vec(),
        total_variance,
    })
}

/// Smallest `l` with cumulative explained fraction ≥ `fraction`.
fn retained_count(values: &[f64], total: f64, fraction: f64) -> usize {
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        // a relative slack keeps fraction = 1.0 reachable despite rounding
        if acc / total >= fraction - 1e-12 {
            return i + 1;
        }
    }
    values.len()
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
fn orient(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}
