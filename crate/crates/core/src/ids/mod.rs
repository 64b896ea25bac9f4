//! Black-box intrusion detectors.
//!
//! Seven classifiers share one interface: [`fit`] trains on encoded vectors
//! with binary labels, [`ClassifierModel::predict`] labels a batch. The GAN
//! only ever sees a detector through [`Detector`], i.e. as a label oracle.

mod bayes;
mod knn;
mod linear;
mod mlp;
mod tree;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nslkdd::{FeatureSchema, FeatureVector, NUM_FEATURES};
use crate::numcore::{ByteReader, ByteWriter, NumError};

pub use bayes::GaussianNb;
pub use knn::KnnModel;
pub use linear::LinearModel;
pub use mlp::MlpModel;
pub use tree::{DecisionTree, RandomForest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdsError {
    #[error("training data is empty")]
    EmptyTraining,
    #[error("training data holds only one class")]
    SingleClassData,
    #[error("{features} feature vectors but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("model trained on schema {model}, data encoded with {data}")]
    SchemaMismatch { model: String, data: String },
    #[error("unknown IDS algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("model blob: {0}")]
    Blob(String),
    #[error(transparent)]
    Numeric(#[from] NumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Attack,
}

impl Label {
    pub fn is_attack(self) -> bool {
        self == Label::Attack
    }

    pub(crate) fn from_votes(normal: usize, attack: usize) -> Label {
        // ties count as detections
        if attack >= normal {
            Label::Attack
        } else {
            Label::Normal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Svm,
    Nb,
    Mlp,
    Lr,
    Dt,
    Rf,
    Knn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Svm,
        Algorithm::Nb,
        Algorithm::Mlp,
        Algorithm::Lr,
        Algorithm::Dt,
        Algorithm::Rf,
        Algorithm::Knn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Svm => "SVM",
            Algorithm::Nb => "NB",
            Algorithm::Mlp => "MLP",
            Algorithm::Lr => "LR",
            Algorithm::Dt => "DT",
            Algorithm::Rf => "RF",
            Algorithm::Knn => "KNN",
        }
    }

    pub fn parse(s: &str) -> Result<Self, IdsError> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| IdsError::UnknownAlgorithm(s.to_string()))
    }

    fn tag(self) -> u32 {
        Algorithm::ALL.iter().position(|a| *a == self).unwrap() as u32
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step of the `eta0 / (1 + lambda*eta0*t)` schedule.
    pub eta0: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 10,
            eta0: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbParams {
    pub var_floor: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams { var_floor: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![64, 32],
            lr: 1e-3,
            epochs: 20,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegParams {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            lr: 0.1,
            epochs: 50,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// 0 means unlimited.
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 30,
            max_depth: 12,
            min_leaf: 1,
            max_features: (NUM_FEATURES as f64).sqrt() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
    /// Reference points kept after seeded subsampling; 0 keeps all.
    pub max_reference: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: 5,
            max_reference: 20_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdsHyperparams {
    pub svm: SvmParams,
    pub nb: NbParams,
    pub mlp: MlpParams,
    pub lr: LogRegParams,
    pub dt: TreeParams,
    pub rf: ForestParams,
    pub knn: KnnParams,
}

impl IdsHyperparams {
    /// The parameter block relevant to one algorithm, as JSON.
    pub fn for_algorithm(&self, algorithm: Algorithm) -> serde_json::Value {
        let v = match algorithm {
            Algorithm::Svm => serde_json::to_value(&self.svm),
            Algorithm::Nb => serde_json::to_value(&self.nb),
            Algorithm::Mlp => serde_json::to_value(&self.mlp),
            Algorithm::Lr => serde_json::to_value(&self.lr),
            Algorithm::Dt => serde_json::to_value(&self.dt),
            Algorithm::Rf => serde_json::to_value(&self.rf),
            Algorithm::Knn => serde_json::to_value(&self.knn),
        };
        v.expect("hyperparameters serialize")
    }
}

/// Anything that can label traffic. The GAN treats it as a black box.
pub trait Detector: Sync {
    fn predict(&self, batch: &[FeatureVector]) -> Vec<Label>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Svm(LinearModel),
    Nb(GaussianNb),
    Mlp(MlpModel),
    Lr(LinearModel),
    Dt(DecisionTree),
    Rf(RandomForest),
    Knn(KnnModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub algorithm: Algorithm,
    pub schema_fingerprint: String,
    pub params: ModelParams,
}

pub struct TrainingSet<'a> {
    pub features: &'a [FeatureVector],
    pub labels: &'a [Label],
}

impl<'a> TrainingSet<'a> {
    pub fn new(features: &'a [FeatureVector], labels: &'a [Label]) -> Result<Self, IdsError> {
        if features.len() != labels.len() {
            return Err(IdsError::LabelCount {
                features: features.len(),
                labels: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(IdsError::EmptyTraining);
        }
        let attacks = labels.iter().filter(|l| l.is_attack()).count();
        if attacks == 0 || attacks == labels.len() {
            return Err(IdsError::SingleClassData);
        }
        Ok(TrainingSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// +1 for attack, -1 for normal.
    pub(crate) fn sign(&self, i: usize) -> f64 {
        if self.labels[i].is_attack() {
            1.0
        } else {
            -1.0
        }
    }
}

/// Trains `algorithm` on `data`. Deterministic for a fixed `seed`.
pub fn fit(
    algorithm: Algorithm,
    data: &TrainingSet<'_>,
    hyper: &IdsHyperparams,
    seed: u64,
    schema_fingerprint: &str,
) -> Result<ClassifierModel, IdsError> {
    let params = match algorithm {
        Algorithm::Svm => ModelParams::Svm(linear::fit_svm(data, &hyper.svm, seed)?),
        Algorithm::Nb => ModelParams::Nb(GaussianNb::fit(data, &hyper.nb)?),
        Algorithm::Mlp => ModelParams::Mlp(MlpModel::fit(data, &hyper.mlp, seed)?),
        Algorithm::Lr => ModelParams::Lr(linear::fit_logistic(data, &hyper.lr, seed)?),
        Algorithm::Dt => ModelParams::Dt(DecisionTree::fit(data, &hyper.dt)?),
        Algorithm::Rf => ModelParams::Rf(RandomForest::fit(data, &hyper.rf, seed)?),
        Algorithm::Knn => ModelParams::Knn(KnnModel::fit(data, &hyper.knn, seed)?),
    };
    Ok(ClassifierModel {
        algorithm,
        schema_fingerprint: schema_fingerprint.to_string(),
        params,
    })
}

impl ClassifierModel {
    pub fn predict_one(&self, x: &FeatureVector) -> Label {
        match &self.params {
            ModelParams::Svm(m) | ModelParams::Lr(m) => m.predict(x),
            ModelParams::Nb(m) => m.predict(x),
            ModelParams::Mlp(m) => m.predict(x),
            ModelParams::Dt(m) => m.predict(x),
            ModelParams::Rf(m) => m.predict(x),
            ModelParams::Knn(m) => m.predict(x),
        }
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), IdsError> {
        let data = schema.fingerprint();
        if data != self.schema_fingerprint {
            return Err(IdsError::SchemaMismatch {
                model: self.schema_fingerprint.clone(),
                data,
            });
        }
        Ok(())
    }

    /// Labels a batch after checking it was encoded with the model's schema.
    pub fn predict_checked(
        &self,
        batch: &[FeatureVector],
        schema: &FeatureSchema,
    ) -> Result<Vec<Label>, IdsError> {
        self.check_schema(schema)?;
        Ok(Detector::predict(self, batch))
    }

    const MAGIC: &'static [u8; 6] = b"IDSMD\0";
    const VERSION: u32 = 1;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.raw(Self::MAGIC);
        w.u32(Self::VERSION);
        w.u32(self.algorithm.tag());
        w.str(&self.schema_fingerprint);
        match &self.params {
            ModelParams::Svm(m) | ModelParams::Lr(m) => m.write(&mut w),
            ModelParams::Nb(m) => m.write(&mut w),
            ModelParams::Mlp(m) => m.write(&mut w),
            ModelParams::Dt(m) => m.write(&mut w),
            ModelParams::Rf(m) => m.write(&mut w),
            ModelParams::Knn(m) => m.write(&mut w),
        }
        w.bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IdsError> {
        let mut r = ByteReader::new(bytes);
        if r.take(Self::MAGIC.len())? != Self::MAGIC {
            return Err(IdsError::Blob("bad magic".into()));
        }
        let version = r.u32()?;
        if version != Self::VERSION {
            return Err(IdsError::Blob(format!("unsupported version {version}")));
        }
        let tag = r.u32()? as usize;
        let algorithm = *Algorithm::ALL
            .get(tag)
            .ok_or_else(|| IdsError::Blob(format!("unknown algorithm tag {tag}")))?;
        let schema_fingerprint = r.str()?;
        let params = match algorithm {
            Algorithm::Svm => ModelParams::Svm(LinearModel::read(&mut r)?),
            Algorithm::Lr => ModelParams::Lr(LinearModel::read(&mut r)?),
            Algorithm::Nb => ModelParams::Nb(GaussianNb::read(&mut r)?),
            Algorithm::Mlp => ModelParams::Mlp(MlpModel::read(&mut r)?),
            Algorithm::Dt => ModelParams::Dt(DecisionTree::read(&mut r)?),
            Algorithm::Rf => ModelParams::Rf(RandomForest::read(&mut r)?),
            Algorithm::Knn => ModelParams::Knn(KnnModel::read(&mut r)?),
        };
        if !r.is_empty() {
            return Err(IdsError::Blob("trailing bytes".into()));
        }
        Ok(ClassifierModel {
            algorithm,
            schema_fingerprint,
            params,
        })
    }
}

impl Detector for ClassifierModel {
    fn predict(&self, batch: &[FeatureVector]) -> Vec<Label> {
        batch.par_iter().map(|x| self.predict_one(x)).collect()
    }
}

/// Sidecar written next to each model blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub schema_fingerprint: String,
    pub hyperparams: serde_json::Value,
    pub training_records: usize,
}

impl ModelManifest {
    pub fn new(
        model: &ClassifierModel,
        hyper: &IdsHyperparams,
        seed: u64,
        training_records: usize,
    ) -> Self {
        ModelManifest {
            format_version: ClassifierModel::VERSION,
            algorithm: model.algorithm,
            seed,
            schema_fingerprint: model.schema_fingerprint.clone(),
            hyperparams: hyper.for_algorithm(model.algorithm),
            training_records,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
pub(crate) mod testdata {
    use super::*;
    use rand::Rng;

    /// Two noisy Gaussian blobs; attacks sit higher on the first 10 features.
    pub fn blobs(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<Label>) {
        let mut rng = crate::numcore::seeded_rng(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let attack = i % 2 == 0;
            let mut x = [0.0; NUM_FEATURES];
            for (j, v) in x.iter_mut().enumerate() {
                let centre = if attack && j < 10 { 0.7 } else { 0.3 };
                *v = (centre + rng.gen_range(-0.25..0.25f64)).clamp(0.0, 1.0);
            }
            xs.push(x);
            ys.push(if attack { Label::Attack } else { Label::Normal });
        }
        (xs, ys)
    }

    pub fn accuracy(model: &ClassifierModel, xs: &[FeatureVector], ys: &[Label]) -> f64 {
        let pred = Detector::predict(model, xs);
        pred.iter().zip(ys).filter(|(a, b)| a == b).count() as f64 / ys.len() as f64
    }
}
