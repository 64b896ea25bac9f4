//! Python bindings: record parsing, schema encoding, masks, detectors,
//! metrics and the experiment grid.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use idsgan::constraints::{self, MaskSetting};
use idsgan::eval::{self, AttackGroup, ExperimentConfig, ExperimentData};
use idsgan::ids::{
    self, Algorithm, ClassifierModel, Detector as _, IdsHyperparams, Label, TrainingSet,
};
use idsgan::nslkdd::{self, AttackCategory, FeatureSchema, FeatureVector, NUM_FEATURES};
use idsgan::synth::{self, SynthConfig};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn category(name: &str) -> PyResult<AttackCategory> {
    AttackCategory::ALL
        .into_iter()
        .find(|c| c.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| err(format!("unknown category `{name}`")))
}

fn setting(name: &str) -> PyResult<MaskSetting> {
    MaskSetting::parse(name).ok_or_else(|| err(format!("unknown setting `{name}`")))
}

fn vector(v: &[f64]) -> PyResult<FeatureVector> {
    v.try_into()
        .map_err(|_| err(format!("expected {NUM_FEATURES} values, got {}", v.len())))
}

/// Category name (`Normal`, `DoS`, `Probe`, `U2R`, `R2L`) for an attack label.
#[pyfunction]
fn map_attack(name: &str) -> PyResult<&'static str> {
    nslkdd::map_attack(name).map(|c| c.name()).map_err(err)
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    nslkdd::FEATURE_LAYOUT.iter().map(|f| f.0).collect()
}

/// Parses one record line into a dict.
#[pyfunction]
fn parse_record<'py>(py: Python<'py>, line: &str) -> PyResult<Bound<'py, PyDict>> {
    let r = nslkdd::parse_record(line).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("category", r.category().map_err(err)?.name())?;
    d.set_item("features", r.features)?;
    d.set_item("attack_name", r.attack_name)?;
    d.set_item("difficulty", r.difficulty)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (records, seed=0))]
fn synthetic_lines(records: usize, seed: u64) -> Vec<String> {
    synth::generate_lines(&SynthConfig {
        records,
        seed,
        ..SynthConfig::default()
    })
}

#[pyfunction]
fn detection_rate(detected: usize, total: usize) -> PyResult<f64> {
    eval::detection_rate(detected, total).map_err(err)
}

#[pyfunction]
fn evasion_increase_rate(original_dr: f64, adversarial_dr: f64) -> PyResult<f64> {
    eval::evasion_increase_rate(original_dr, adversarial_dr).map_err(err)
}

fn parse_lines(lines: &[String], source: &str) -> PyResult<Vec<nslkdd::RawRecord>> {
    nslkdd::parse_records(&lines.join("\n"), source).map_err(err)
}

/// Min-max feature schema fitted on training lines.
#[pyclass(name = "Schema", module = "pyidsgan")]
struct PySchema {
    inner: FeatureSchema,
}

#[pymethods]
impl PySchema {
    #[staticmethod]
    fn fit(lines: Vec<String>) -> PyResult<Self> {
        let records = parse_lines(&lines, "<lines>")?;
        Ok(PySchema {
            inner: nslkdd::build_schema(&records).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PySchema {
            inner: FeatureSchema::from_text(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    #[getter]
    fn clamp_unseen(&self) -> bool {
        self.inner.clamp_unseen
    }

    #[setter]
    fn set_clamp_unseen(&mut self, v: bool) {
        self.inner.clamp_unseen = v;
    }

    /// Encodes one line; returns `(values, category)`.
    fn encode(&self, line: &str) -> PyResult<(Vec<f64>, &'static str)> {
        let r = nslkdd::parse_record(line).map_err(err)?;
        let e = self.inner.encode(&r).map_err(err)?;
        Ok((e.values.to_vec(), e.category.name()))
    }

    fn encode_many(&self, lines: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
        let records = parse_lines(&lines, "<lines>")?;
        let enc = self.inner.encode_all(&records).map_err(err)?;
        Ok(enc.into_iter().map(|e| e.values.to_vec()).collect())
    }

    fn denormalize(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let e = nslkdd::EncodedVector {
            values: vector(&values)?,
            category: AttackCategory::Normal,
        };
        Ok(e.denormalize(&self.inner).to_vec())
    }

    /// `True` for each feature the generator may modify.
    #[pyo3(signature = (category, setting="functional_only"))]
    fn mask(&self, category: &str, setting: &str) -> PyResult<Vec<bool>> {
        let m = constraints::mask_for(
            self::category(category)?,
            self::setting(setting)?,
            &self.inner,
        )
        .map_err(err)?;
        Ok(m.modifiable.to_vec())
    }

    /// Clamps to [0, 1] and thresholds binary features.
    fn postprocess(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(constraints::postprocess(&vector(&values)?, &self.inner).to_vec())
    }
}

/// A trained black-box detector.
#[pyclass(name = "Detector", module = "pyidsgan")]
struct PyDetector {
    inner: ClassifierModel,
}

#[pymethods]
impl PyDetector {
    /// `labels[i]` is true for attack records.
    #[staticmethod]
    #[pyo3(signature = (algorithm, features, labels, seed=0, schema_fingerprint=""))]
    fn fit(
        algorithm: &str,
        features: Vec<Vec<f64>>,
        labels: Vec<bool>,
        seed: u64,
        schema_fingerprint: &str,
    ) -> PyResult<Self> {
        let algorithm = Algorithm::parse(algorithm).map_err(err)?;
        let xs = features
            .iter()
            .map(|v| vector(v))
            .collect::<PyResult<Vec<_>>>()?;
        let ys: Vec<Label> = labels
            .iter()
            .map(|&a| if a { Label::Attack } else { Label::Normal })
            .collect();
        let set = TrainingSet::new(&xs, &ys).map_err(err)?;
        let inner = ids::fit(
            algorithm,
            &set,
            &IdsHyperparams::default(),
            seed,
            schema_fingerprint,
        )
        .map_err(err)?;
        Ok(PyDetector { inner })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(PyDetector {
            inner: ClassifierModel::from_bytes(data).map_err(err)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm.as_str()
    }

    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<bool>> {
        let xs = features
            .iter()
            .map(|v| vector(v))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(self
            .inner
            .predict(&xs)
            .into_iter()
            .map(Label::is_attack)
            .collect())
    }
}

/// Runs the grid on in-memory record lines and returns the report CSV.
#[pyfunction]
#[pyo3(signature = (train_lines, test_lines, algorithms=None, attacks=None, settings=None, seed=0, epochs=100, jobs=1))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    train_lines: Vec<String>,
    test_lines: Vec<String>,
    algorithms: Option<Vec<String>>,
    attacks: Option<Vec<String>>,
    settings: Option<Vec<String>>,
    seed: u64,
    epochs: usize,
    jobs: usize,
) -> PyResult<String> {
    let train = parse_lines(&train_lines, "train")?;
    let test = parse_lines(&test_lines, "test")?;
    let schema = nslkdd::build_schema(&train).map_err(err)?;
    let (ids_half, gan_half) = nslkdd::split_train(&train, seed).map_err(err)?;
    let data = ExperimentData {
        ids_half: schema.encode_all(&ids_half).map_err(err)?,
        gan_half: schema.encode_all(&gan_half).map_err(err)?,
        test: schema.encode_all(&test).map_err(err)?,
        schema,
    };
    let mut cfg = ExperimentConfig {
        seed,
        jobs: jobs.max(1),
        ..ExperimentConfig::default()
    };
    cfg.gan.epochs = epochs;
    if let Some(a) = algorithms {
        cfg.algorithms = a
            .iter()
            .map(|s| Algorithm::parse(s).map_err(err))
            .collect::<PyResult<_>>()?;
    }
    if let Some(a) = attacks {
        cfg.attacks = a
            .iter()
            .map(|s| {
                AttackGroup::parse(s).ok_or_else(|| err(format!("unknown attack group `{s}`")))
            })
            .collect::<PyResult<_>>()?;
    }
    if let Some(s) = settings {
        cfg.settings = s.iter().map(|s| setting(s)).collect::<PyResult<_>>()?;
    }
    let out = py
        .detach(|| eval::run_experiment(&data, &cfg))
        .map_err(err)?;
    Ok(out.report.to_csv())
}

#[pymodule]
fn pyidsgan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NUM_FEATURES", NUM_FEATURES)?;
    m.add_function(wrap_pyfunction!(map_attack, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(parse_record, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_lines, m)?)?;
    m.add_function(wrap_pyfunction!(detection_rate, m)?)?;
    m.add_function(wrap_pyfunction!(evasion_increase_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PySchema>()?;
    m.add_class::<PyDetector>()?;
    Ok(())
}
