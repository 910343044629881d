#![allow(dead_code)]

//! Shared test helpers. The feature oracles below are transcribed directly
//! from the textbook definitions and share no code with the library.

use emgds::data::{synth_corpus, SynthConfig};
use emgds::features::{extract_all, FeatureConfig, FeatureVector};
use emgds::svm::SvmModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `|a − b| ≤ tol · max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// Feature oracles

pub fn oracle_mav(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += if *v < 0.0 { -*v } else { *v };
    }
    s / x.len() as f64
}

pub fn oracle_mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += *v;
    }
    s / x.len() as f64
}

pub fn oracle_std(x: &[f64]) -> f64 {
    let m = oracle_mean(x);
    let mut s = 0.0;
    for v in x {
        s += (v - m) * (v - m);
    }
    (s / (x.len() - 1) as f64).sqrt()
}

pub fn oracle_rms(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v * v;
    }
    (s / x.len() as f64).sqrt()
}

pub fn oracle_ssc(x: &[f64]) -> usize {
    let mut count = 0;
    for k in 1..x.len() - 1 {
        let peak = x[k] > x[k - 1] && x[k] > x[k + 1];
        let trough = x[k] < x[k - 1] && x[k] < x[k + 1];
        if peak || trough {
            count += 1;
        }
    }
    count
}

pub fn oracle_wl(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 1..x.len() {
        s += (x[k] - x[k - 1]).abs();
    }
    s
}

fn central_moment(x: &[f64], j: i32) -> f64 {
    let m = oracle_mean(x);
    let mut s = 0.0;
    for v in x {
        s += (v - m).powi(j);
    }
    s / x.len() as f64
}

pub fn oracle_skew(x: &[f64]) -> f64 {
    central_moment(x, 3) / central_moment(x, 2).powf(1.5)
}

pub fn oracle_kurt(x: &[f64]) -> f64 {
    let m2 = central_moment(x, 2);
    central_moment(x, 4) / (m2 * m2)
}

/// Yule–Walker: solve the Toeplitz system `R a = r` by Gaussian elimination
/// with partial pivoting, where `r_k = (1/n) Σ x_i x_{i+k}`.
pub fn oracle_ar(x: &[f64], p: usize) -> Vec<f64> {
    let n = x.len();
    let r: Vec<f64> = (0..=p)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..n - k {
                s += x[i] * x[i + k];
            }
            s / n as f64
        })
        .collect();
    let mut a: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row: Vec<f64> = (0..p).map(|j| r[i.abs_diff(j)]).collect();
            row.push(r[i + 1]);
            row
        })
        .collect();
    solve_augmented(&mut a)
}

/// Gaussian elimination on an augmented `m × (m+1)` system.
pub fn solve_augmented(a: &mut [Vec<f64>]) -> Vec<f64> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in (col + 1)..m {
            let f = a[row][col] / a[col][col];
            for k in col..=m {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut out = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = a[i][m];
        for k in (i + 1)..m {
            s -= a[i][k] * out[k];
        }
        out[i] = s / a[i][i];
    }
    out
}

/// Ordinary least squares of `x_n` on `x_{n-1} .. x_{n-p}`.
pub fn least_squares_ar(x: &[f64], p: usize) -> Vec<f64> {
    let mut a = vec![vec![0.0; p + 1]; p];
    for n in p..x.len() {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += x[n - 1 - i] * x[n - 1 - j];
            }
            a[i][p] += x[n - 1 - i] * x[n];
        }
    }
    solve_augmented(&mut a)
}

/// Samples of `x_n = Σ a_k x_{n−k} + ε_n` after a burn-in.
pub fn ar_process(rng: &mut ChaCha8Rng, coeffs: &[f64], n: usize) -> Vec<f64> {
    let burn = 500;
    let mut x = vec![0.0; n + burn];
    for t in 0..x.len() {
        let mut v = gaussian(rng);
        for (k, a) in coeffs.iter().enumerate() {
            if t > k {
                v += a * x[t - 1 - k];
            }
        }
        x[t] = v;
    }
    x.split_off(burn)
}

/// Random segment with a mix of shapes: Gaussian, offset, heavy tails,
/// repeated values and integer grids, so plateaus occur.
pub fn random_segment(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let kind = rng.random_range(0..4);
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let offset = rng.random_range(-5.0..5.0);
    (0..len)
        .map(|_| match kind {
            0 => scale * gaussian(rng),
            1 => offset + scale * gaussian(rng),
            2 => scale * gaussian(rng).powi(3),
            _ => f64::from(rng.random_range(-3..=3)),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// SVM checks

/// Box and equality constraints of the dual: `0 ≤ α ≤ C + 1e-9`, `|Σ αy| < 1e-6`.
pub fn kkt_feasible(m: &SvmModel) -> Result<(), String> {
    for a in m.alphas() {
        if !(a >= 0.0 && a <= m.c + 1e-9) {
            return Err(format!("alpha {a} outside [0, {}]", m.c));
        }
    }
    let sum: f64 = m.dual_coeffs.iter().sum();
    if sum.abs() >= 1e-6 {
        return Err(format!("sum alpha*y = {sum:e}"));
    }
    if m.support_vectors.is_empty() {
        return Err("no support vectors".into());
    }
    Ok(())
}

/// Gaussian blobs around `centers`, `per` points each, labeled by center index.
pub fn blobs(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], sd: f64, per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..per {
            xs.push(c.iter().map(|v| v + sd * gaussian(rng)).collect());
            ys.push(k);
        }
    }
    (xs, ys)
}

// ---------------------------------------------------------------------------
// Corpora

/// Short synthetic corpus, quick enough for property tests.
pub fn small_config(subjects: usize, reps: usize, seed: u64) -> SynthConfig {
    SynthConfig { subjects, reps_per_activity: reps, duration_s: 2.0, seed, ..SynthConfig::default() }
}

pub fn features_for(cfg: &SynthConfig) -> Vec<FeatureVector> {
    let corpus = synth_corpus(cfg).unwrap();
    extract_all(corpus.recordings(), &FeatureConfig::default(), emgds::data::Window::Full).unwrap()
}
