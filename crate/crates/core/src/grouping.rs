//! Class separation under the pooled within-class covariance, and
//! agglomerative clustering of the class means into a dendrogram.

use std::fmt::{self, Display, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, cholesky_solve, trace, LinalgError, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("pooled covariance is singular even after regularization")]
    SingularCovariance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),
}

/// Ridge added to the pooled covariance diagonal, relative to `trace(S)/l`.
pub const REGULARIZATION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSeparation<L> {
    pub class_order: Vec<L>,
    pub means: Vec<Vec<f64>>,
    pub pooled_covariance: Matrix,
    /// Pairwise Mahalanobis distances between class means.
    pub distances: Matrix,
    /// Whether the ridge was needed to factor the covariance.
    pub regularized: bool,
}

/// Factors `s`, retrying once with the diagonal ridge.
fn factor(s: &Matrix) -> Result<(Matrix, bool), GroupingError> {
    match cholesky(s) {
        Ok(l) => Ok((l, false)),
        Err(LinalgError::NotPositiveDefinite) => {
            let d = s.len();
            let mut ridge = REGULARIZATION * trace(s) / d as f64;
            if !(ridge > 0.0) {
                ridge = REGULARIZATION;
            }
            let mut r = s.clone();
            for (i, row) in r.iter_mut().enumerate() {
                row[i] += ridge;
            }
            cholesky(&r).map(|l| (l, true)).map_err(|_| GroupingError::SingularCovariance)
        }
        Err(_) => Err(GroupingError::SingularCovariance),
    }
}

fn mahalanobis_factored(l: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let x = cholesky_solve(l, &diff);
    crate::linalg::dot(&diff, &x).max(0.0).sqrt()
}

/// `√((a − b)ᵀ S⁻¹ (a − b))`.
pub fn mahalanobis(a: &[f64], b: &[f64], covariance: &Matrix) -> Result<f64, GroupingError> {
    let d = covariance.len();
    for len in [a.len(), b.len()] {
        if len != d {
            return Err(GroupingError::DimensionMismatch { expected: d, got: len });
        }
    }
    let (l, _) = factor(covariance)?;
    Ok(mahalanobis_factored(&l, a, b))
}

/// Class means, pooled covariance `Σ (x − μ_k)(x − μ_k)ᵀ / (N − K)`, and the
/// Mahalanobis distance between every pair of means. Classes appear in
/// ascending label order.
pub fn class_separation<L, V>(labels: &[L], vectors: &[V]) -> Result<ClassSeparation<L>, GroupingError>
where
    L: Clone + Ord,
    V: AsRef<[f64]>,
{
    if labels.len() != vectors.len() {
        return Err(GroupingError::DimensionMismatch { expected: labels.len(), got: vectors.len() });
    }
    let n = vectors.len();
    if n == 0 {
        return Err(GroupingError::TooFewSamples("no vectors".into()));
    }
    let dim = vectors[0].as_ref().len();
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(GroupingError::DimensionMismatch { expected: dim, got: v.as_ref().len() });
    }

    let mut classes: Vec<L> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let k = classes.len();
    if k < 2 {
        return Err(GroupingError::TooFewSamples("need at least 2 classes".into()));
    }
    let member = |l: &L| classes.binary_search(l).expect("label collected above");

    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; dim]; k];
    for (l, v) in labels.iter().zip(vectors) {
        let c = member(l);
        counts[c] += 1;
        for (m, x) in means[c].iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    if let Some(c) = counts.iter().position(|&c| c < 2) {
        return Err(GroupingError::TooFewSamples(format!("class #{} has {} vector(s), need 2", c + 1, counts[c])));
    }
    if n <= dim + k {
        return Err(GroupingError::TooFewSamples(format!("{n} vectors for dimension {dim} and {k} classes")));
    }
    for (m, c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|x| *x /= *c as f64);
    }

    let mut s = vec![vec![0.0; dim]; dim];
    for (l, v) in labels.iter().zip(vectors) {
        let mu = &means[member(l)];
        let r: Vec<f64> = v.as_ref().iter().zip(mu).map(|(x, m)| x - m).collect();
        for i in 0..dim {
            for j in i..dim {
                s[i][j] += r[i] * r[j];
            }
        }
    }
    let dof = (n - k) as f64;
    for i in 0..dim {
        for j in i..dim {
            s[i][j] /= dof;
            s[j][i] = s[i][j];
        }
    }

    let (factor_l, regularized) = factor(&s)?;
    let mut distances = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = mahalanobis_factored(&factor_l, &means[i], &means[j]);
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    Ok(ClassSeparation { class_order: classes, means, pooled_covariance: s, distances, regularized })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Single,
    Complete,
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(format!("unknown linkage `{other}` (expected single, complete or average)")),
        }
    }
}

/// Binary merge tree. Serializes as nested `{left, right, height}` / `{leaf}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dendrogram<L> {
    Leaf { leaf: L },
    Merge { left: Box<Dendrogram<L>>, right: Box<Dendrogram<L>>, height: f64 },
}

impl<L: Clone> Dendrogram<L> {
    pub fn height(&self) -> f64 {
        match self {
            Dendrogram::Leaf { .. } => 0.0,
            Dendrogram::Merge { height, .. } => *height,
        }
    }

    /// Leaves, left to right.
    pub fn leaves(&self) -> Vec<L> {
        let mut out = Vec::new();
        self.walk_leaves(&mut out);
        out
    }

    fn walk_leaves(&self, out: &mut Vec<L>) {
        match self {
            Dendrogram::Leaf { leaf } => out.push(leaf.clone()),
            Dendrogram::Merge { left, right, .. } => {
                left.walk_leaves(out);
                right.walk_leaves(out);
            }
        }
    }

    /// Heights of every merge node, in post-order.
    pub fn merge_heights(&self) -> Vec<f64> {
        match self {
            Dendrogram::Leaf { .. } => Vec::new(),
            Dendrogram::Merge { left, right, height } => {
                let mut h = left.merge_heights();
                h.extend(right.merge_heights());
                h.push(*height);
                h
            }
        }
    }

    /// Every merge is at least as high as its children.
    pub fn is_monotone(&self) -> bool {
        match self {
            Dendrogram::Leaf { .. } => true,
            Dendrogram::Merge { left, right, height } => {
                *height >= left.height() && *height >= right.height() && left.is_monotone() && right.is_monotone()
            }
        }
    }

    /// Leaf sets of the root's two children.
    pub fn root_split(&self) -> Option<(Vec<L>, Vec<L>)> {
        match self {
            Dendrogram::Leaf { .. } => None,
            Dendrogram::Merge { left, right, .. } => Some((left.leaves(), right.leaves())),
        }
    }

    /// Root height over the highest merge beneath it. Infinite when the
    /// children are both leaves or merge at height 0.
    pub fn root_height_ratio(&self) -> Option<f64> {
        match self {
            Dendrogram::Leaf { .. } => None,
            Dendrogram::Merge { left, right, height } => {
                let below = left.height().max(right.height());
                Some(if below > 0.0 { height / below } else { f64::INFINITY })
            }
        }
    }
}

/// Agglomerative clustering over a symmetric distance matrix.
///
/// Clusters are kept ordered by their lowest leaf index; among equal
/// distances the lexicographically first pair merges, and the merged cluster
/// takes the left position.
pub fn linkage_matrix<L: Clone>(distances: &Matrix, labels: &[L], method: Linkage) -> Result<Dendrogram<L>, GroupingError> {
    let n = labels.len();
    if n == 0 {
        return Err(GroupingError::InvalidDistances("no items".into()));
    }
    if distances.len() != n || distances.iter().any(|r| r.len() != n) {
        return Err(GroupingError::InvalidDistances(format!("expected {n}×{n}")));
    }
    for i in 0..n {
        for j in 0..n {
            let d = distances[i][j];
            if !d.is_finite() || d < 0.0 || d != distances[j][i] || (i == j && d != 0.0) {
                return Err(GroupingError::InvalidDistances(format!("entry ({i}, {j}) = {d}")));
            }
        }
    }

    let mut nodes: Vec<Dendrogram<L>> = labels.iter().map(|l| Dendrogram::Leaf { leaf: l.clone() }).collect();
    let mut sizes = vec![1usize; n];
    let mut d = distances.clone();

    while nodes.len() > 1 {
        let m = nodes.len();
        let (mut bi, mut bj) = (0, 1);
        for i in 0..m {
            for j in (i + 1)..m {
                if d[i][j] < d[bi][bj] {
                    (bi, bj) = (i, j);
                }
            }
        }
        let height = d[bi][bj];
        let (si, sj) = (sizes[bi] as f64, sizes[bj] as f64);
        for k in 0..m {
            if k == bi || k == bj {
                continue;
            }
            let (a, b) = (d[bi][k], d[bj][k]);
            let merged = match method {
                Linkage::Single => a.min(b),
                Linkage::Complete => a.max(b),
                Linkage::Average => (si * a + sj * b) / (si + sj),
            };
            d[bi][k] = merged;
            d[k][bi] = merged;
        }
        d.remove(bj);
        for row in d.iter_mut() {
            row.remove(bj);
        }
        let right = nodes.remove(bj);
        let left = std::mem::replace(&mut nodes[bi], Dendrogram::Leaf { leaf: labels[0].clone() });
        nodes[bi] = Dendrogram::Merge { left: Box::new(left), right: Box::new(right), height };
        sizes[bi] += sizes.remove(bj);
    }
    Ok(nodes.pop().expect("one cluster remains"))
}

pub fn linkage<L: Clone>(sep: &ClassSeparation<L>, method: Linkage) -> Result<Dendrogram<L>, GroupingError> {
    linkage_matrix(&sep.distances, &sep.class_order, method)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DendrogramFormat {
    Json,
    Dot,
    Newick,
}

pub fn export_dendrogram<L>(root: &Dendrogram<L>, format: DendrogramFormat) -> String
where
    L: Clone + Display + Serialize,
{
    match format {
        DendrogramFormat::Json => {
            let mut s = serde_json::to_string_pretty(root).expect("dendrograms always serialize");
            s.push('\n');
            s
        }
        DendrogramFormat::Dot => to_dot(root),
        DendrogramFormat::Newick => {
            let mut s = String::new();
            newick(root, None, &mut s);
            s.push_str(";\n");
            s
        }
    }
}

/// Writes `node` with its branch length; the root has none.
fn newick<L: Clone + Display>(node: &Dendrogram<L>, parent_height: Option<f64>, out: &mut String) {
    match node {
        Dendrogram::Leaf { leaf } => {
            let _ = write!(out, "{leaf}");
        }
        Dendrogram::Merge { left, right, height } => {
            out.push('(');
            newick(left, Some(*height), out);
            out.push(',');
            newick(right, Some(*height), out);
            out.push(')');
        }
    }
    if let Some(p) = parent_height {
        let _ = write!(out, ":{}", p - node.height());
    }
}

fn to_dot<L: Clone + Display>(root: &Dendrogram<L>) -> String {
    struct Dot {
        out: String,
        next: usize,
    }
    impl Dot {
        fn node<L: Display>(&mut self, n: &Dendrogram<L>) -> String {
            let id = self.next;
            self.next += 1;
            match n {
                Dendrogram::Leaf { leaf } => {
                    let name = format!("leaf{id}");
                    let _ = writeln!(self.out, "  {name} [label=\"{}\", shape=box];", escape(leaf));
                    name
                }
                Dendrogram::Merge { left, right, height } => {
                    let name = format!("merge{id}");
                    let _ = writeln!(self.out, "  {name} [label=\"{height:.6}\", shape=ellipse];");
                    let l = self.node(left);
                    let r = self.node(right);
                    let _ = writeln!(self.out, "  {name} -> {l};");
                    let _ = writeln!(self.out, "  {name} -> {r};");
                    name
                }
            }
        }
    }
    fn escape(v: &impl Display) -> String {
        v.to_string().replace('\\', "\\\\").replace('"', "\\\"")
    }

    let mut dot = Dot { out: String::from("digraph dendrogram {\n  rankdir=TB;\n"), next: 0 };
    dot.node(root);
    dot.out.push_str("}\n");
    dot.out
}

impl<L: Clone + Display> Display for Dendrogram<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        newick(self, None, &mut s);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ActivityClass::{self, *};

    fn leaf(c: ActivityClass) -> Dendrogram<ActivityClass> {
        Dendrogram::Leaf { leaf: c }
    }

    #[test]
    fn euclidean_and_scaling_cases() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((mahalanobis(&[0.0, 0.0], &[3.0, 4.0], &eye).unwrap() - 5.0).abs() < 1e-12);
        let four = vec![vec![4.0, 0.0], vec![0.0, 4.0]];
        assert!((mahalanobis(&[0.0, 0.0], &[3.0, 4.0], &four).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn identical_classes_have_zero_distance() {
        let pts = [vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0], vec![0.5, 1.5]];
        let mut vectors = pts.to_vec();
        vectors.extend(pts.iter().cloned());
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let sep = class_separation(&labels, &vectors).unwrap();
        assert_eq!(sep.distances[0][1], 0.0);
        assert!(!sep.regularized);
    }

    #[test]
    fn singleton_class_is_rejected() {
        let labels = [0, 0, 0, 1];
        let vectors = [vec![0.0], vec![1.0], vec![2.0], vec![5.0]];
        assert!(matches!(class_separation(&labels, &vectors), Err(GroupingError::TooFewSamples(_))));
    }

    #[test]
    fn degenerate_direction_is_regularized() {
        // second coordinate is constant within every class
        let labels = [0, 0, 0, 1, 1, 1];
        let vectors = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]];
        let sep = class_separation(&labels, &vectors).unwrap();
        assert!(sep.regularized);
        assert!(sep.distances[0][1] > 1e3);
    }

    fn triads() -> (Matrix, Vec<ActivityClass>) {
        let order = ActivityClass::ALL.to_vec();
        let d = order
            .iter()
            .map(|a| order.iter().map(|b| if a == b { 0.0 } else if a.group() == b.group() { 1.0 } else { 10.0 }).collect())
            .collect();
        (d, order)
    }

    #[test]
    fn triad_block_structure() {
        let (d, order) = triads();
        for method in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            let t = linkage_matrix(&d, &order, method).unwrap();
            assert_eq!(t.height(), 10.0);
            let (l, r) = t.root_split().unwrap();
            assert_eq!(l, vec![Palmar, Lateral, Tip]);
            assert_eq!(r, vec![Hook, Spherical, Cylindrical]);
            assert_eq!(t.root_height_ratio(), Some(10.0));
            assert!(t.is_monotone());
        }
    }

    #[test]
    fn ties_merge_lowest_pair_first() {
        let (d, order) = triads();
        let t = linkage_matrix(&d, &order, Linkage::Single).unwrap();
        let Dendrogram::Merge { left, .. } = &t else { panic!() };
        let Dendrogram::Merge { left: inner, right, .. } = left.as_ref() else { panic!() };
        assert_eq!(inner.leaves(), vec![Palmar, Lateral]);
        assert_eq!(right.leaves(), vec![Tip]);
    }

    #[test]
    fn newick_single_merge() {
        let t = Dendrogram::Merge { left: Box::new(leaf(Palmar)), right: Box::new(leaf(Lateral)), height: 2.5 };
        assert_eq!(export_dendrogram(&t, DendrogramFormat::Newick), "(P:2.5,L:2.5);\n");
    }

    #[test]
    fn json_round_trip() {
        let (d, order) = triads();
        let t = linkage_matrix(&d, &order, Linkage::Average).unwrap();
        let text = export_dendrogram(&t, DendrogramFormat::Json);
        let back: Dendrogram<ActivityClass> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn dot_labels_heights() {
        let t = Dendrogram::Merge { left: Box::new(leaf(Palmar)), right: Box::new(leaf(Lateral)), height: 2.5 };
        let dot = export_dendrogram(&t, DendrogramFormat::Dot);
        assert!(dot.starts_with("digraph dendrogram {"));
        assert!(dot.contains("label=\"2.500000\""));
        assert!(dot.contains("label=\"P\""));
        assert_eq!(dot.matches("->").count(), 2);
    }

    #[test]
    fn rejects_asymmetric_distances() {
        let d = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(linkage_matrix(&d, &[0, 1], Linkage::Single).is_err());
    }
}
