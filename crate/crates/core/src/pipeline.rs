//! Single-stage and dual-stage (power/precision, then grasp) classifiers,
//! evaluation, and model persistence.
//!
//! The single-stage path fits one PCA and a six-class one-vs-rest SVM. The
//! dual-stage path fits three independent PCA + SVM pairs: a binary
//! power-vs-precision model, and one three-class model per group trained on
//! that group's true members.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::BTreeSet;

use crate::data::{split_keys, ActivityClass, DataError, GroupLabel, RecordingKey, SplitProtocol};
use crate::features::{FeatureConfig, FeatureError, FeatureVector};
use crate::pca::{fit_pca, PcaError, PcaModel, Retain};
use crate::svm::{
    class_seed, train_binary, train_multiclass, BinaryLabels, KernelSpec, MulticlassSvmModel, SmoParams, SvmError,
    SvmModel,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("training data has no examples of class {0}")]
    MissingClass(ActivityClass),
    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("vector without a class label")]
    Unlabeled,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("no feature rows for subject `{0}`")]
    UnknownSubject(String),
    #[error("feature vector has no recording origin")]
    MissingOrigin,
    #[error("fold {0} does not exist")]
    NoSuchFold(usize),
    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("model schema error: {0}")]
    SchemaError(String),
    #[error("{stage}: {source}")]
    Pca {
        stage: &'static str,
        #[source]
        source: PcaError,
    },
    #[error("{stage}: {source}")]
    Svm {
        stage: &'static str,
        #[source]
        source: SvmError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Power (1) for C, H, S; precision (0) for L, T, P.
pub fn group_of(a: ActivityClass) -> GroupLabel {
    a.group()
}

/// Hyperparameters shared by both architectures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub retain: Retain,
    pub kernel: KernelSpec,
    pub smo: SmoParams,
}

/// A PCA reduction followed by a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage<M> {
    pub pca: PcaModel,
    pub svm: M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStageModel {
    pub feature_config: FeatureConfig,
    pub pca: PcaModel,
    pub svm: MulticlassSvmModel<ActivityClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualStageModel {
    pub feature_config: FeatureConfig,
    /// Positive label = power.
    pub stage1: Stage<SvmModel>,
    pub stage2_power: Stage<MulticlassSvmModel<ActivityClass>>,
    pub stage2_precision: Stage<MulticlassSvmModel<ActivityClass>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TrainedModel {
    Single(SingleStageModel),
    Dual(DualStageModel),
}

impl TrainedModel {
    pub fn mode(&self) -> &'static str {
        match self {
            TrainedModel::Single(_) => "single",
            TrainedModel::Dual(_) => "dual",
        }
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        match self {
            TrainedModel::Single(m) => &m.feature_config,
            TrainedModel::Dual(m) => &m.feature_config,
        }
    }

    pub fn predict(&self, v: &FeatureVector) -> Result<ActivityClass, PipelineError> {
        match self {
            TrainedModel::Single(m) => predict_single(m, v),
            TrainedModel::Dual(m) => predict_dual(m, v).map(|(c, _)| c),
        }
    }
}

// ---------------------------------------------------------------------------
// Training

struct Labeled<'a> {
    config: FeatureConfig,
    inputs: Vec<&'a [f64]>,
    labels: Vec<ActivityClass>,
}

fn check_layout(cfg: &FeatureConfig, layout: &Arc<[String]>) -> Result<(), PipelineError> {
    let expected = cfg.layout();
    if expected.len() != layout.len() || expected.iter().zip(layout.iter()).any(|(a, b)| a != b) {
        return Err(PipelineError::LayoutMismatch(format!(
            "model expects {} features ({}), vector has {}",
            expected.len(),
            expected.join(","),
            layout.len()
        )));
    }
    Ok(())
}

fn labeled(train: &[FeatureVector]) -> Result<Labeled<'_>, PipelineError> {
    let first = train.first().ok_or(PipelineError::MissingClass(ActivityClass::ALL[0]))?;
    let config = FeatureConfig::from_layout(&first.layout)?;
    let mut inputs = Vec::with_capacity(train.len());
    let mut labels = Vec::with_capacity(train.len());
    for v in train {
        check_layout(&config, &v.layout)?;
        if v.values.len() != v.layout.len() {
            return Err(PipelineError::LayoutMismatch("value count differs from layout".into()));
        }
        inputs.push(v.values.as_slice());
        labels.push(v.label.ok_or(PipelineError::Unlabeled)?);
    }
    for class in ActivityClass::ALL {
        if !labels.contains(&class) {
            return Err(PipelineError::MissingClass(class));
        }
    }
    Ok(Labeled { config, inputs, labels })
}

fn fit_stage_pca(stage: &'static str, inputs: &[&[f64]], retain: Retain) -> Result<(PcaModel, Vec<Vec<f64>>), PipelineError> {
    let pca = fit_pca(inputs, retain).map_err(|source| PipelineError::Pca { stage, source })?;
    let reduced = pca.project_all(inputs).map_err(|source| PipelineError::Pca { stage, source })?;
    Ok((pca, reduced))
}

fn train_group_stage(
    stage: &'static str,
    data: &Labeled<'_>,
    group: GroupLabel,
    hyper: &Hyper,
    seed: u64,
) -> Result<Stage<MulticlassSvmModel<ActivityClass>>, PipelineError> {
    let (inputs, labels): (Vec<&[f64]>, Vec<ActivityClass>) = data
        .inputs
        .iter()
        .zip(&data.labels)
        .filter(|(_, l)| group_of(**l) == group)
        .map(|(x, l)| (*x, *l))
        .unzip();
    let (pca, reduced) = fit_stage_pca(stage, &inputs, hyper.retain)?;
    let smo = SmoParams { seed, ..hyper.smo };
    let svm = train_multiclass(&reduced, &labels, &hyper.kernel, &smo).map_err(|source| PipelineError::Svm { stage, source })?;
    Ok(Stage { pca, svm })
}

pub fn train_single(train: &[FeatureVector], hyper: &Hyper) -> Result<SingleStageModel, PipelineError> {
    let data = labeled(train)?;
    let (pca, reduced) = fit_stage_pca("single-stage PCA", &data.inputs, hyper.retain)?;
    let svm = train_multiclass(&reduced, &data.labels, &hyper.kernel, &hyper.smo)
        .map_err(|source| PipelineError::Svm { stage: "single-stage SVM", source })?;
    Ok(SingleStageModel { feature_config: data.config, pca, svm })
}

pub fn train_dual(train: &[FeatureVector], hyper: &Hyper) -> Result<DualStageModel, PipelineError> {
    let data = labeled(train)?;
    let seed = hyper.smo.seed;

    let stage1 = || -> Result<Stage<SvmModel>, PipelineError> {
        let stage = "stage 1";
        let (pca, reduced) = fit_stage_pca(stage, &data.inputs, hyper.retain)?;
        let y: Vec<i8> = data
            .labels
            .iter()
            .map(|l| if group_of(*l) == GroupLabel::Power { 1 } else { -1 })
            .collect();
        let mut svm = train_binary(&reduced, &y, &hyper.kernel, &hyper.smo).map_err(|source| PipelineError::Svm { stage, source })?;
        svm.labels = BinaryLabels {
            negative: GroupLabel::Precision.to_string(),
            positive: GroupLabel::Power.to_string(),
        };
        Ok(Stage { pca, svm })
    };
    let power = || train_group_stage("stage 2 (power)", &data, GroupLabel::Power, hyper, class_seed(seed, 100));
    let precision = || train_group_stage("stage 2 (precision)", &data, GroupLabel::Precision, hyper, class_seed(seed, 200));

    let (stage1, (power, precision)) = rayon::join(stage1, || rayon::join(power, precision));
    Ok(DualStageModel {
        feature_config: data.config,
        stage1: stage1?,
        stage2_power: power?,
        stage2_precision: precision?,
    })
}

// ---------------------------------------------------------------------------
// Prediction

fn reduce(pca: &PcaModel, v: &[f64]) -> Result<Vec<f64>, PipelineError> {
    pca.project(v).map_err(|e| PipelineError::LayoutMismatch(e.to_string()))
}

fn svm_failure(stage: &'static str) -> impl Fn(SvmError) -> PipelineError {
    move |source| PipelineError::Svm { stage, source }
}

pub fn predict_single(model: &SingleStageModel, v: &FeatureVector) -> Result<ActivityClass, PipelineError> {
    check_layout(&model.feature_config, &v.layout)?;
    let z = reduce(&model.pca, &v.values)?;
    model.svm.predict(&z).map_err(svm_failure("single-stage SVM"))
}

/// Routes through stage 1, then through the selected group's stage-2 model.
pub fn predict_dual(model: &DualStageModel, v: &FeatureVector) -> Result<(ActivityClass, GroupLabel), PipelineError> {
    check_layout(&model.feature_config, &v.layout)?;
    let group = predict_group(model, &v.values)?;
    let stage = match group {
        GroupLabel::Power => &model.stage2_power,
        GroupLabel::Precision => &model.stage2_precision,
    };
    let z = reduce(&stage.pca, &v.values)?;
    let class = stage.svm.predict(&z).map_err(svm_failure("stage 2 SVM"))?;
    Ok((class, group))
}

/// Stage-1 group decision on raw feature values.
pub fn predict_group(model: &DualStageModel, values: &[f64]) -> Result<GroupLabel, PipelineError> {
    let z = reduce(&model.stage1.pca, values)?;
    let sign = model.stage1.svm.predict(&z).map_err(svm_failure("stage 1 SVM"))?;
    Ok(if sign > 0 { GroupLabel::Power } else { GroupLabel::Precision })
}

// ---------------------------------------------------------------------------
// Evaluation

/// How the evaluated test set was selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDescriptor {
    pub protocol: SplitProtocol,
    /// Held-out fold for k-fold protocols.
    pub fold: Option<usize>,
    /// Subject filter applied before splitting.
    pub subject: Option<String>,
}

/// Train and test vectors under `split`. The split runs over distinct
/// recordings, so every window of a recording lands on the same side.
pub fn split_vectors(
    vectors: &[FeatureVector],
    split: &SplitDescriptor,
) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>), PipelineError> {
    let keys: Vec<&RecordingKey> = vectors
        .iter()
        .map(|v| v.origin.as_ref().map(|o| &o.key).ok_or(PipelineError::MissingOrigin))
        .collect::<Result<_, _>>()?;
    let selected: Vec<usize> = (0..keys.len())
        .filter(|&i| split.subject.as_ref().is_none_or(|s| &keys[i].subject == s))
        .collect();
    if selected.is_empty() {
        return Err(PipelineError::UnknownSubject(split.subject.clone().unwrap_or_default()));
    }
    let distinct: Vec<RecordingKey> =
        selected.iter().map(|&i| keys[i].clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let fold = split.fold.unwrap_or(0);
    let holdout = split_keys(&distinct, split.protocol)?.holdout(fold).ok_or(PipelineError::NoSuchFold(fold))?;
    let train_keys: BTreeSet<&RecordingKey> = holdout.train.iter().map(|&i| &distinct[i]).collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for i in selected {
        if train_keys.contains(keys[i]) {
            train.push(vectors[i].clone());
        } else {
            test.push(vectors[i].clone());
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAccuracies {
    pub stage1_accuracy: f64,
    /// Stage-2 accuracy over power test vectors routed to the power group.
    pub power_routed_accuracy: Option<f64>,
    pub precision_routed_accuracy: Option<f64>,
    /// Final accuracy over every test vector of the true group.
    pub power_group_accuracy: Option<f64>,
    pub precision_group_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub mode: String,
    pub class_order: Vec<ActivityClass>,
    /// Rows are true classes, columns predicted classes, both in `class_order`.
    pub confusion: Vec<Vec<u64>>,
    pub test_size: u64,
    pub accuracy: f64,
    pub stages: Option<StageAccuracies>,
    pub split: Option<SplitDescriptor>,
    pub seed: Option<u64>,
    pub timestamp: Option<String>,
}

impl EvalReport {
    pub fn trace(&self) -> u64 {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion matrix over `(true, predicted)` pairs.
pub fn confusion_matrix(pairs: &[(ActivityClass, ActivityClass)]) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; 6]; 6];
    for (t, p) in pairs {
        m[t.index()][p.index()] += 1;
    }
    m
}

pub fn evaluate(model: &TrainedModel, test: &[FeatureVector]) -> Result<EvalReport, PipelineError> {
    use rayon::prelude::*;
    if test.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    let truths: Vec<ActivityClass> = test.iter().map(|v| v.label.ok_or(PipelineError::Unlabeled)).collect::<Result<_, _>>()?;

    let (pairs, stages) = match model {
        TrainedModel::Single(m) => {
            let preds: Vec<ActivityClass> = test.par_iter().map(|v| predict_single(m, v)).collect::<Result<_, _>>()?;
            (truths.iter().copied().zip(preds).collect::<Vec<_>>(), None)
        }
        TrainedModel::Dual(m) => {
            let preds: Vec<(ActivityClass, GroupLabel)> = test.par_iter().map(|v| predict_dual(m, v)).collect::<Result<_, _>>()?;
            let mut stage1_correct = 0;
            // [group] -> (routed correctly, finally correct, group size)
            let mut counts = [(0u64, 0u64, 0u64); 2];
            for (t, (p, g)) in truths.iter().zip(&preds) {
                let tg = group_of(*t);
                let c = &mut counts[tg.value() as usize];
                c.2 += 1;
                if *g == tg {
                    stage1_correct += 1;
                    c.0 += 1;
                }
                if p == t {
                    c.1 += 1;
                }
            }
            let (prec, pow) = (counts[0], counts[1]);
            let stages = StageAccuracies {
                stage1_accuracy: stage1_correct as f64 / test.len() as f64,
                power_routed_accuracy: ratio(pow.1, pow.0),
                precision_routed_accuracy: ratio(prec.1, prec.0),
                power_group_accuracy: ratio(pow.1, pow.2),
                precision_group_accuracy: ratio(prec.1, prec.2),
            };
            (truths.iter().copied().zip(preds.into_iter().map(|(p, _)| p)).collect(), Some(stages))
        }
    };

    let confusion = confusion_matrix(&pairs);
    let mut report = EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        mode: model.mode().to_string(),
        class_order: ActivityClass::ALL.to_vec(),
        confusion,
        test_size: test.len() as u64,
        accuracy: 0.0,
        stages,
        split: None,
        seed: None,
        timestamp: None,
    };
    report.accuracy = report.trace() as f64 / report.total() as f64;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Persistence

/// On-disk model: the trained model plus the context needed to re-evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: TrainedModel,
    pub class_order: Vec<ActivityClass>,
    pub hyper: Option<Hyper>,
    pub split: Option<SplitDescriptor>,
}

impl ModelDocument {
    pub fn new(model: TrainedModel) -> Self {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model,
            class_order: ActivityClass::ALL.to_vec(),
            hyper: None,
            split: None,
        }
    }

    /// Structural consistency checks beyond what the JSON schema enforces.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::SchemaError(m));
        if self.class_order != ActivityClass::ALL {
            return bad("class_order must be P,L,T,H,S,C".into());
        }
        let d = self.model.feature_config().dimension();
        self.model.feature_config().validate()?;
        match &self.model {
            TrainedModel::Single(m) => {
                check_pca("pca", &m.pca, d)?;
                check_multiclass("svm", &m.svm, m.pca.output_dim(), &ActivityClass::ALL)?;
            }
            TrainedModel::Dual(m) => {
                check_pca("stage1.pca", &m.stage1.pca, d)?;
                check_binary("stage1.svm", &m.stage1.svm, m.stage1.pca.output_dim())?;
                check_pca("stage2_power.pca", &m.stage2_power.pca, d)?;
                check_multiclass(
                    "stage2_power.svm",
                    &m.stage2_power.svm,
                    m.stage2_power.pca.output_dim(),
                    &GroupLabel::Power.members(),
                )?;
                check_pca("stage2_precision.pca", &m.stage2_precision.pca, d)?;
                check_multiclass(
                    "stage2_precision.svm",
                    &m.stage2_precision.svm,
                    m.stage2_precision.pca.output_dim(),
                    &GroupLabel::Precision.members(),
                )?;
            }
        }
        Ok(())
    }
}

fn check_pca(name: &str, pca: &PcaModel, d: usize) -> Result<(), PipelineError> {
    let l = pca.output_dim();
    let ok = pca.mean.len() == d
        && pca.scale.len() == d
        && l >= 1
        && l <= d
        && pca.eigenvalues.len() == l
        && pca.components.iter().all(|c| c.len() == d)
        && pca.scale.iter().all(|s| *s > 0.0);
    if ok {
        Ok(())
    } else {
        Err(PipelineError::SchemaError(format!("{name}: inconsistent dimensions")))
    }
}

fn check_binary(name: &str, svm: &SvmModel, l: usize) -> Result<(), PipelineError> {
    let ok = !svm.support_vectors.is_empty()
        && svm.support_vectors.len() == svm.dual_coeffs.len()
        && svm.support_vectors.iter().all(|sv| sv.len() == l)
        && svm.alphas().iter().all(|a| *a <= svm.c + 1e-9);
    if ok {
        Ok(())
    } else {
        Err(PipelineError::SchemaError(format!("{name}: inconsistent support vectors")))
    }
}

fn check_multiclass(
    name: &str,
    svm: &MulticlassSvmModel<ActivityClass>,
    l: usize,
    allowed: &[ActivityClass],
) -> Result<(), PipelineError> {
    if svm.classes.len() < 2 || svm.classes.len() != svm.models.len() || svm.classes.iter().any(|c| !allowed.contains(c)) {
        return Err(PipelineError::SchemaError(format!("{name}: invalid class set")));
    }
    svm.models.iter().try_for_each(|m| check_binary(name, m, l))
}

pub fn model_to_json(doc: &ModelDocument) -> String {
    serde_json::to_string_pretty(doc).expect("model documents always serialize")
}

pub fn model_from_json(text: &str) -> Result<ModelDocument, PipelineError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PipelineError::SchemaError(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| PipelineError::SchemaError("missing format_version".into()))?;
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(PipelineError::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
    }
    let doc: ModelDocument = serde_json::from_value(value).map_err(|e| PipelineError::SchemaError(e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

pub fn save_model(doc: &ModelDocument, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let mut text = model_to_json(doc);
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelDocument, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(values: Vec<f64>, label: ActivityClass) -> FeatureVector {
        let cfg = FeatureConfig::new(1, vec![crate::features::FeatureFamily::Rms]).unwrap();
        FeatureVector { values, layout: cfg.layout().into(), label: Some(label), origin: None }
    }

    /// Two well separated blobs per class on a 2-D grid.
    fn toy_set() -> Vec<FeatureVector> {
        let mut out = Vec::new();
        for (i, c) in ActivityClass::ALL.iter().enumerate() {
            let (cx, cy) = ((i % 3) as f64 * 10.0, if group_of(*c) == GroupLabel::Power { 30.0 } else { 0.0 });
            for k in 0..6 {
                let dx = (k as f64 * 0.7).sin() * 0.5;
                let dy = (k as f64 * 1.3).cos() * 0.5;
                out.push(vector(vec![cx + dx, cy + dy], *c));
            }
        }
        out
    }

    fn hyper() -> Hyper {
        Hyper { retain: Retain::ComponentCount(2), ..Default::default() }
    }

    #[test]
    fn group_map() {
        assert_eq!(group_of(ActivityClass::Cylindrical).value(), 1);
        assert_eq!(group_of(ActivityClass::Lateral).value(), 0);
        let power: Vec<_> = ActivityClass::ALL.into_iter().filter(|c| group_of(*c) == GroupLabel::Power).collect();
        assert_eq!(power, vec![ActivityClass::Hook, ActivityClass::Spherical, ActivityClass::Cylindrical]);
    }

    #[test]
    fn missing_class_is_reported() {
        let set: Vec<_> = toy_set().into_iter().filter(|v| v.label != Some(ActivityClass::Tip)).collect();
        assert!(matches!(train_single(&set, &hyper()), Err(PipelineError::MissingClass(ActivityClass::Tip))));
        assert!(matches!(train_dual(&set, &hyper()), Err(PipelineError::MissingClass(ActivityClass::Tip))));
    }

    #[test]
    fn toy_models_fit_training_data() {
        let set = toy_set();
        let single = TrainedModel::Single(train_single(&set, &hyper()).unwrap());
        let dual = TrainedModel::Dual(train_dual(&set, &hyper()).unwrap());
        for m in [&single, &dual] {
            let r = evaluate(m, &set).unwrap();
            assert_eq!(r.accuracy, 1.0, "{}", m.mode());
            assert_eq!(r.total(), set.len() as u64);
        }
        let TrainedModel::Dual(d) = &dual else { unreachable!() };
        assert!(!d.stage2_power.svm.classes.contains(&ActivityClass::Lateral));
        assert_eq!(d.stage2_precision.svm.classes, GroupLabel::Precision.members().to_vec());
    }

    #[test]
    fn layout_mismatch() {
        let set = toy_set();
        let m = train_single(&set, &hyper()).unwrap();
        let mut v = set[0].clone();
        v.values.push(0.0);
        v.layout = FeatureConfig::default().layout().into();
        assert!(matches!(predict_single(&m, &v), Err(PipelineError::LayoutMismatch(_))));
    }

    #[test]
    fn evaluation_all_wrong_fills_one_column() {
        let pairs: Vec<_> = ActivityClass::ALL
            .iter()
            .filter(|c| **c != ActivityClass::Hook)
            .map(|c| (*c, ActivityClass::Hook))
            .collect();
        let m = confusion_matrix(&pairs);
        for (r, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let expect = u64::from(c == ActivityClass::Hook.index() && r != ActivityClass::Hook.index());
                assert_eq!(*v, expect);
            }
        }
    }

    #[test]
    fn empty_test_set() {
        let set = toy_set();
        let m = TrainedModel::Single(train_single(&set, &hyper()).unwrap());
        assert!(matches!(evaluate(&m, &[]), Err(PipelineError::EmptyTestSet)));
    }

    #[test]
    fn version_and_schema_errors() {
        let set = toy_set();
        let doc = ModelDocument::new(TrainedModel::Dual(train_dual(&set, &hyper()).unwrap()));
        let text = model_to_json(&doc);
        assert_eq!(model_from_json(&text).unwrap(), doc);

        let v99 = text.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
        assert!(matches!(model_from_json(&v99), Err(PipelineError::VersionMismatch { found: 99, .. })));
        assert!(matches!(model_from_json(&text[..text.len() / 2]), Err(PipelineError::SchemaError(_))));
        let no_mode = text.replacen("\"mode\": \"dual\"", "\"mode\": \"triple\"", 1);
        assert!(matches!(model_from_json(&no_mode), Err(PipelineError::SchemaError(_))));
    }
}
