//! Detection rate, evasion increase rate and the experiment grid.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraints::{mask_for, ConstraintError, FeatureMask, MaskSetting};
use crate::gan::{self, Critic, GanData, GanError, Generator, TrainConfig, TrainReport};
use crate::ids::{
    self, Algorithm, ClassifierModel, Detector, IdsError, IdsHyperparams, Label, TrainingSet,
};
use crate::nslkdd::{AttackCategory, DataError, EncodedVector, FeatureSchema, FeatureVector};
use crate::numcore::NoiseStream;

/// Below this original DR the EIR is reported but flagged.
pub const LOW_CONFIDENCE_DR: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no attack records to evaluate")]
    EmptyEvaluationSet,
    #[error("EIR is undefined when the original detection rate is 0")]
    UndefinedEIR,
    #[error("{detected} detected out of {total}")]
    CountMismatch { detected: usize, total: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ids(#[from] IdsError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        source: Box<EvalError>,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl EvalError {
    /// Innermost error, skipping cell context.
    pub fn root(&self) -> &EvalError {
        match self {
            EvalError::Cell { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Fraction of `total` ground-truth attacks flagged as attacks.
pub fn detection_rate(detected: usize, total: usize) -> Result<f64, EvalError> {
    if total == 0 {
        return Err(EvalError::EmptyEvaluationSet);
    }
    if detected > total {
        return Err(EvalError::CountMismatch { detected, total });
    }
    Ok(detected as f64 / total as f64)
}

pub fn count_detected(predictions: &[Label]) -> usize {
    predictions.iter().filter(|l| l.is_attack()).count()
}

/// `1 - adversarial / original`.
pub fn evasion_increase_rate(original_dr: f64, adversarial_dr: f64) -> Result<f64, EvalError> {
    if original_dr <= 0.0 {
        return Err(EvalError::UndefinedEIR);
    }
    Ok(1.0 - adversarial_dr / original_dr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackGroup {
    DoS,
    U2rR2l,
    Probe,
}

impl AttackGroup {
    pub const ALL: [AttackGroup; 3] = [AttackGroup::DoS, AttackGroup::U2rR2l, AttackGroup::Probe];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackGroup::DoS => "DoS",
            AttackGroup::U2rR2l => "U2R&R2L",
            AttackGroup::Probe => "Probe",
        }
    }

    /// Short token used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            AttackGroup::DoS => "dos",
            AttackGroup::U2rR2l => "u2r_r2l",
            AttackGroup::Probe => "probe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dos" => Some(AttackGroup::DoS),
            "u2r_r2l" | "u2r&r2l" | "u2r-r2l" | "u2r" | "r2l" => Some(AttackGroup::U2rR2l),
            "probe" => Some(AttackGroup::Probe),
            _ => None,
        }
    }

    pub fn contains(self, c: AttackCategory) -> bool {
        match self {
            AttackGroup::DoS => c == AttackCategory::DoS,
            AttackGroup::U2rR2l => matches!(c, AttackCategory::U2R | AttackCategory::R2L),
            AttackGroup::Probe => c == AttackCategory::Probe,
        }
    }

    /// Category whose mask the group uses.
    pub fn mask_category(self) -> AttackCategory {
        match self {
            AttackGroup::DoS => AttackCategory::DoS,
            AttackGroup::U2rR2l => AttackCategory::U2R,
            AttackGroup::Probe => AttackCategory::Probe,
        }
    }

    pub fn mask(
        self,
        setting: MaskSetting,
        schema: &FeatureSchema,
    ) -> Result<FeatureMask, ConstraintError> {
        mask_for(self.mask_category(), setting, schema)
    }
}

impl fmt::Display for AttackGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    pub attack: AttackGroup,
    pub setting: MaskSetting,
    pub seed: u64,
    pub total: usize,
    pub original_detected: usize,
    pub adversarial_detected: usize,
    pub original_dr: f64,
    pub adversarial_dr: f64,
    /// `None` when the original DR is 0.
    pub eir: Option<f64>,
    pub low_confidence: bool,
}

impl ReportRow {
    pub fn from_counts(
        algorithm: Algorithm,
        attack: AttackGroup,
        setting: MaskSetting,
        seed: u64,
        total: usize,
        original_detected: usize,
        adversarial_detected: usize,
    ) -> Result<Self, EvalError> {
        let original_dr = detection_rate(original_detected, total)?;
        let adversarial_dr = detection_rate(adversarial_detected, total)?;
        Ok(ReportRow {
            algorithm,
            attack,
            setting,
            seed,
            total,
            original_detected,
            adversarial_detected,
            original_dr,
            adversarial_dr,
            eir: evasion_increase_rate(original_dr, adversarial_dr).ok(),
            low_confidence: original_dr < LOW_CONFIDENCE_DR,
        })
    }

    pub fn cell_name(&self) -> String {
        cell_name(self.algorithm, self.attack, self.setting)
    }
}

pub fn cell_name(algorithm: Algorithm, attack: AttackGroup, setting: MaskSetting) -> String {
    format!(
        "{}_{}_{}",
        algorithm.as_str().to_ascii_lowercase(),
        attack.key(),
        setting
    )
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "ids,attack,setting,seed,total,original_detected,original_undetected,\
adversarial_detected,adversarial_undetected,original_dr,adversarial_dr,eir,\
original_dr_pct,adversarial_dr_pct,eir_pct,low_confidence";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (eir, eir_pct) = match r.eir {
                Some(e) => (format!("{e:?}"), pct(e)),
                None => ("undefined".into(), "undefined".into()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{:?},{:?},{},{},{},{},{}\n",
                r.algorithm,
                r.attack,
                r.setting,
                r.seed,
                r.total,
                r.original_detected,
                r.total - r.original_detected,
                r.adversarial_detected,
                r.total - r.adversarial_detected,
                r.original_dr,
                r.adversarial_dr,
                eir,
                pct(r.original_dr),
                pct(r.adversarial_dr),
                eir_pct,
                r.low_confidence
            ));
        }
        out
    }

    /// `{algorithm: {attack: {setting: row}}}`.
    pub fn to_json(&self) -> String {
        let mut nested: BTreeMap<String, BTreeMap<String, BTreeMap<String, serde_json::Value>>> =
            BTreeMap::new();
        for r in &self.rows {
            let row = serde_json::json!({
                "seed": r.seed,
                "total": r.total,
                "original_detected": r.original_detected,
                "adversarial_detected": r.adversarial_detected,
                "original_dr": r.original_dr,
                "adversarial_dr": r.adversarial_dr,
                "eir": r.eir,
                "low_confidence": r.low_confidence,
            });
            nested
                .entry(r.algorithm.to_string())
                .or_default()
                .entry(r.attack.to_string())
                .or_default()
                .insert(r.setting.to_string(), row);
        }
        let mut s = serde_json::to_string_pretty(&nested).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn find(
        &self,
        algorithm: Algorithm,
        attack: AttackGroup,
        setting: MaskSetting,
    ) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.attack == attack && r.setting == setting)
    }
}

/// `u64` from the first 8 bytes of sha256 over the joined parts.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update([0u8]);
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

pub fn ids_seed(master: u64, algorithm: Algorithm) -> u64 {
    derive_seed(master, &["ids", algorithm.as_str()])
}

pub fn cell_seed(
    master: u64,
    algorithm: Algorithm,
    attack: AttackGroup,
    setting: MaskSetting,
) -> u64 {
    derive_seed(
        master,
        &["cell", algorithm.as_str(), attack.key(), setting.as_str()],
    )
}

/// Encoded inputs for the whole grid.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub schema: FeatureSchema,
    pub ids_half: Vec<EncodedVector>,
    pub gan_half: Vec<EncodedVector>,
    pub test: Vec<EncodedVector>,
}

impl ExperimentData {
    pub fn ids_training(&self) -> (Vec<FeatureVector>, Vec<Label>) {
        let xs = self.ids_half.iter().map(|e| e.values).collect();
        let ys = self
            .ids_half
            .iter()
            .map(|e| {
                if e.category.is_attack() {
                    Label::Attack
                } else {
                    Label::Normal
                }
            })
            .collect();
        (xs, ys)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub attacks: Vec<AttackGroup>,
    pub settings: Vec<MaskSetting>,
    pub ids: IdsHyperparams,
    pub gan: TrainConfig,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            algorithms: Algorithm::ALL.to_vec(),
            attacks: vec![AttackGroup::DoS, AttackGroup::U2rR2l],
            settings: vec![MaskSetting::FunctionalOnly, MaskSetting::Ablation],
            ids: IdsHyperparams::default(),
            gan: TrainConfig::default(),
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    /// Grid cells in report order. Probe has no ablation and is skipped there.
    pub fn cells(&self) -> Vec<(Algorithm, AttackGroup, MaskSetting)> {
        let mut algorithms = self.algorithms.clone();
        algorithms.sort();
        algorithms.dedup();
        let mut attacks = self.attacks.clone();
        attacks.sort();
        attacks.dedup();
        let mut settings = self.settings.clone();
        settings.sort();
        settings.dedup();
        let mut out = Vec::new();
        for &a in &algorithms {
            for &g in &attacks {
                for &s in &settings {
                    if g == AttackGroup::Probe && s == MaskSetting::Ablation {
                        continue;
                    }
                    out.push((a, g, s));
                }
            }
        }
        out
    }
}

pub fn train_ids(
    data: &ExperimentData,
    algorithm: Algorithm,
    cfg: &ExperimentConfig,
) -> Result<ClassifierModel, EvalError> {
    let (xs, ys) = data.ids_training();
    let set = TrainingSet::new(&xs, &ys)?;
    Ok(ids::fit(
        algorithm,
        &set,
        &cfg.ids,
        ids_seed(cfg.seed, algorithm),
        &data.schema.fingerprint(),
    )?)
}

/// One finished cell, networks included.
pub struct CellOutcome {
    pub row: ReportRow,
    pub trace: TrainReport,
    pub generator: Generator,
    pub critic: Critic,
}

const STREAM_TEST_NOISE: &str = "test-noise";

pub fn run_cell(
    data: &ExperimentData,
    model: &ClassifierModel,
    attack: AttackGroup,
    setting: MaskSetting,
    cfg: &ExperimentConfig,
) -> Result<CellOutcome, EvalError> {
    let algorithm = model.algorithm;
    let wrap = |e: EvalError| EvalError::Cell {
        cell: cell_name(algorithm, attack, setting),
        source: Box::new(e),
    };
    run_cell_inner(data, model, attack, setting, cfg).map_err(wrap)
}

fn run_cell_inner(
    data: &ExperimentData,
    model: &ClassifierModel,
    attack: AttackGroup,
    setting: MaskSetting,
    cfg: &ExperimentConfig,
) -> Result<CellOutcome, EvalError> {
    model.check_schema(&data.schema)?;
    let seed = cell_seed(cfg.seed, model.algorithm, attack, setting);
    let mask = attack.mask(setting, &data.schema)?;

    let test: Vec<EncodedVector> = data
        .test
        .iter()
        .filter(|e| attack.contains(e.category))
        .cloned()
        .collect();
    if test.is_empty() {
        return Err(EvalError::EmptyEvaluationSet);
    }
    let test_vecs: Vec<FeatureVector> = test.iter().map(|e| e.values).collect();
    let original_detected = count_detected(&model.predict(&test_vecs));

    let gan_attack: Vec<EncodedVector> = data
        .gan_half
        .iter()
        .filter(|e| attack.contains(e.category))
        .cloned()
        .collect();
    let gan_normal: Vec<EncodedVector> = data
        .gan_half
        .iter()
        .filter(|e| !e.category.is_attack())
        .cloned()
        .collect();
    let gan_cfg = TrainConfig {
        seed,
        ..cfg.gan.clone()
    };
    let (generator, critic, trace) = gan::train(
        &gan_cfg,
        &mask,
        &data.schema,
        &GanData {
            normal: &gan_normal,
            attack: &gan_attack,
        },
        model,
    )?;

    let mut noise = NoiseStream::new(derive_seed(seed, &[STREAM_TEST_NOISE]));
    let adv = gan::generate_all(&generator, &test, &mask, &data.schema, &mut noise)?;
    let adversarial_detected = count_detected(&model.predict(&adv.discrete));

    let row = ReportRow::from_counts(
        model.algorithm,
        attack,
        setting,
        seed,
        test.len(),
        original_detected,
        adversarial_detected,
    )?;
    Ok(CellOutcome {
        row,
        trace,
        generator,
        critic,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub report: EvalReport,
    /// Per-epoch traces keyed by [`cell_name`], in report order.
    pub traces: Vec<(String, TrainReport)>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, EvalError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))
}

/// Trains one model per requested algorithm. Models already supplied are reused.
pub fn train_models(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    existing: &BTreeMap<Algorithm, ClassifierModel>,
) -> Result<BTreeMap<Algorithm, ClassifierModel>, EvalError> {
    let mut wanted: Vec<Algorithm> = cfg.algorithms.clone();
    wanted.sort();
    wanted.dedup();
    let trained: Vec<(Algorithm, ClassifierModel)> = pool(cfg.jobs)?.install(|| {
        wanted
            .par_iter()
            .map(|&a| match existing.get(&a) {
                Some(m) => Ok((a, m.clone())),
                None => train_ids(data, a, cfg).map(|m| (a, m)),
            })
            .collect::<Result<_, EvalError>>()
    })?;
    Ok(trained.into_iter().collect())
}

/// Runs every grid cell with the given models; rows come back in grid order.
pub fn run_grid(
    data: &ExperimentData,
    models: &BTreeMap<Algorithm, ClassifierModel>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput, EvalError> {
    let cells = cfg.cells();
    let outcomes: Vec<CellOutcome> = pool(cfg.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(a, g, s)| {
                let model = models.get(&a).ok_or_else(|| EvalError::Cell {
                    cell: cell_name(a, g, s),
                    source: Box::new(EvalError::Ids(IdsError::UnknownAlgorithm(a.to_string()))),
                })?;
                run_cell(data, model, g, s, cfg)
            })
            .collect::<Result<_, EvalError>>()
    })?;
    let mut out = ExperimentOutput::default();
    for o in outcomes {
        out.traces.push((o.row.cell_name(), o.trace));
        out.report.rows.push(o.row);
    }
    Ok(out)
}

pub fn run_experiment(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput, EvalError> {
    let models = train_models(data, cfg, &BTreeMap::new())?;
    run_grid(data, &models, cfg)
}
