//! Command-line front end.
//!
//! Every stage reads and writes artifacts under the output directory:
//!
//! ```text
//! effective_config.toml
//! schema.txt  split/ids_half.txt  split/gan_half.txt  summary.json
//! models/<alg>.bin  models/<alg>.json
//! masks/<attack>_<setting>.txt
//! gan/<cell>/generator.bin  gan/<cell>/critic.bin  gan/<cell>/metrics.csv
//! report.csv  report.json  traces/<cell>.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::constraints::MaskSetting;
use crate::eval::{
    self, cell_name, AttackGroup, EvalError, ExperimentConfig, ExperimentData, ExperimentOutput,
};
use crate::gan::GanError;
use crate::ids::{Algorithm, ClassifierModel, IdsError, ModelManifest};
use crate::nslkdd::{
    build_schema, load_records, split_indices, AttackCategory, DataError, FeatureSchema, RawRecord,
};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "idsgan",
    version,
    about = "Constrained WGAN evasion attacks against NSL-KDD detectors"
)]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct GlobalOpts {
    /// TOML file with dotted keys, e.g. `gan.epochs = 100`
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated IDS algorithms (svm,nb,mlp,lr,dt,rf,knn)
    #[arg(long, global = true, value_delimiter = ',')]
    pub ids: Option<Vec<String>>,
    /// Comma-separated attack groups (dos,u2r_r2l,probe)
    #[arg(long, global = true, value_delimiter = ',')]
    pub attack: Option<Vec<String>>,
    /// Comma-separated settings (functional_only,ablation)
    #[arg(long, global = true, value_delimiter = ',')]
    pub setting: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Path to KDDTrain+.txt
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    /// Path to KDDTest+.txt
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Override gan.epochs
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Subcommand, Clone)]
pub enum Command {
    /// Build the feature schema and the seeded train split
    Prepare,
    /// Train the detectors on the IDS half
    TrainIds,
    /// Train one generator per grid cell and checkpoint it
    TrainGan,
    /// Run the grid and write the report; trains missing detectors
    Evaluate,
    /// Prepare, then evaluate
    Run,
    /// Write a synthetic corpus in the NSL-KDD format
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 4000)]
        train_records: usize,
        #[arg(long, default_value_t = 1500)]
        test_records: usize,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("missing artifact {artifact} (run `{stage}` first)")]
    Dependency {
        artifact: PathBuf,
        stage: &'static str,
    },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

impl From<IdsError> for CliError {
    fn from(e: IdsError) -> Self {
        CliError::Eval(EvalError::Ids(e))
    }
}

impl CliError {
    /// 2 config, 3 data, 4 divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Dependency { .. } | CliError::Artifact { .. } => 3,
            CliError::Eval(e) => match e.root() {
                EvalError::Gan(GanError::TrainingDiverged { .. }) => 4,
                EvalError::Gan(GanError::InvalidConfig(_))
                | EvalError::Ids(IdsError::Hyperparameter(_)) => 2,
                EvalError::Gan(GanError::ConstraintViolated { .. }) | EvalError::Pool(_) => 1,
                _ => 3,
            },
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read_required(path: &Path, stage: &'static str) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(CliError::Dependency {
            artifact: path.to_path_buf(),
            stage,
        });
    }
    std::fs::read(path).map_err(|e| io_err(path, e))
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(opts: &GlobalOpts) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(v) = &opts.ids {
        cfg.grid.ids = v.clone();
    }
    if let Some(v) = &opts.attack {
        cfg.grid.attacks = v.clone();
    }
    if let Some(v) = &opts.setting {
        cfg.grid.settings = v.clone();
    }
    if let Some(j) = opts.jobs {
        cfg.grid.jobs = j;
    }
    if let Some(o) = &opts.out {
        cfg.out = o.clone();
    }
    if let Some(p) = &opts.train {
        cfg.data.train = p.clone();
    }
    if let Some(p) = &opts.test {
        cfg.data.test = p.clone();
    }
    if let Some(e) = opts.epochs {
        cfg.gan.epochs = e;
    }
    Ok(cfg)
}

pub struct Paths {
    pub out: PathBuf,
}

impl Paths {
    pub fn schema(&self) -> PathBuf {
        self.out.join("schema.txt")
    }
    pub fn split(&self, half: &str) -> PathBuf {
        self.out.join("split").join(format!("{half}.txt"))
    }
    pub fn model(&self, a: Algorithm, ext: &str) -> PathBuf {
        self.out
            .join("models")
            .join(format!("{}.{ext}", a.as_str().to_ascii_lowercase()))
    }
    pub fn mask(&self, g: AttackGroup, s: MaskSetting) -> PathBuf {
        self.out
            .join("masks")
            .join(format!("{}_{}.txt", g.key(), s))
    }
}

fn category_counts(records: &[RawRecord]) -> Result<BTreeMap<String, usize>, DataError> {
    let mut m: BTreeMap<String, usize> = AttackCategory::ALL
        .iter()
        .map(|c| (c.name().to_string(), 0))
        .collect();
    for r in records {
        *m.get_mut(r.category()?.name())
            .expect("all categories present") += 1;
    }
    Ok(m)
}

fn manifest_text(name: &str, seed: u64, idx: &[usize]) -> String {
    let mut s = format!(
        "# {name} record indices (0-based) seed={seed} count={}\n",
        idx.len()
    );
    for i in idx {
        s.push_str(&i.to_string());
        s.push('\n');
    }
    s
}

fn parse_manifest(path: &Path, text: &str, n_records: usize) -> Result<Vec<usize>, CliError> {
    let bad = |m: String| CliError::Artifact {
        path: path.to_path_buf(),
        message: m,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let idx: usize = line
            .parse()
            .map_err(|_| bad(format!("line {}: bad index `{line}`", i + 1)))?;
        if idx >= n_records {
            return Err(bad(format!("line {}: index {idx} out of range", i + 1)));
        }
        out.push(idx);
    }
    Ok(out)
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<(), CliError> {
    let paths = Paths {
        out: cfg.out.clone(),
    };
    let train = load_records(&cfg.data.train)?;
    let test = load_records(&cfg.data.test)?;
    let mut schema = build_schema(&train)?;
    schema.clamp_unseen = cfg.data.clamp_unseen;
    schema.encode_all(&test)?;

    let categories = train
        .iter()
        .map(RawRecord::category)
        .collect::<Result<Vec<_>, _>>()?;
    let (ids_half, gan_half) = split_indices(&categories, cfg.seed);
    write(&paths.schema(), schema.to_text())?;
    write(
        &paths.split("ids_half"),
        manifest_text("ids_half", cfg.seed, &ids_half),
    )?;
    write(
        &paths.split("gan_half"),
        manifest_text("gan_half", cfg.seed, &gan_half),
    )?;

    let pick = |idx: &[usize]| idx.iter().map(|&i| train[i].clone()).collect::<Vec<_>>();
    let summary = serde_json::json!({
        "schema_fingerprint": schema.fingerprint(),
        "train": category_counts(&train)?,
        "ids_half": category_counts(&pick(&ids_half))?,
        "gan_half": category_counts(&pick(&gan_half))?,
        "test": category_counts(&test)?,
    });
    write(
        &paths.out.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("json") + "\n",
    )?;
    info!(
        "prepared {} train / {} test records, split {} + {}",
        train.len(),
        test.len(),
        ids_half.len(),
        gan_half.len()
    );
    Ok(())
}

/// Reloads the corpus through the artifacts written by `prepare`.
pub fn load_prepared(cfg: &RunConfig) -> Result<ExperimentData, CliError> {
    let paths = Paths {
        out: cfg.out.clone(),
    };
    let schema_path = paths.schema();
    let schema_text =
        String::from_utf8_lossy(&read_required(&schema_path, "prepare")?).into_owned();
    let schema = FeatureSchema::from_text(&schema_text)?;
    let ids_path = paths.split("ids_half");
    let gan_path = paths.split("gan_half");
    let ids_text = String::from_utf8_lossy(&read_required(&ids_path, "prepare")?).into_owned();
    let gan_text = String::from_utf8_lossy(&read_required(&gan_path, "prepare")?).into_owned();

    let train = load_records(&cfg.data.train)?;
    let test = load_records(&cfg.data.test)?;
    let ids_idx = parse_manifest(&ids_path, &ids_text, train.len())?;
    let gan_idx = parse_manifest(&gan_path, &gan_text, train.len())?;
    if ids_idx.len() + gan_idx.len() != train.len() {
        return Err(CliError::Artifact {
            path: ids_path,
            message: format!(
                "split covers {} records, training file has {}",
                ids_idx.len() + gan_idx.len(),
                train.len()
            ),
        });
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| train[i].clone()).collect::<Vec<_>>();
    Ok(ExperimentData {
        ids_half: schema.encode_all(&pick(&ids_idx))?,
        gan_half: schema.encode_all(&pick(&gan_idx))?,
        test: schema.encode_all(&test)?,
        schema,
    })
}

fn load_model(
    paths: &Paths,
    a: Algorithm,
    schema: &FeatureSchema,
) -> Result<Option<ClassifierModel>, CliError> {
    let path = paths.model(a, "bin");
    if !path.exists() {
        return Ok(None);
    }
    let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
    let model = ClassifierModel::from_bytes(&bytes).map_err(|e| CliError::Artifact {
        path: path.clone(),
        message: e.to_string(),
    })?;
    model.check_schema(schema)?;
    Ok(Some(model))
}

fn save_models(
    paths: &Paths,
    models: &BTreeMap<Algorithm, ClassifierModel>,
    cfg: &ExperimentConfig,
    training_records: usize,
) -> Result<(), CliError> {
    for (a, m) in models {
        write(&paths.model(*a, "bin"), m.to_bytes())?;
        let manifest =
            ModelManifest::new(m, &cfg.ids, eval::ids_seed(cfg.seed, *a), training_records);
        write(
            &paths.model(*a, "json"),
            serde_json::to_string_pretty(&manifest).expect("json") + "\n",
        )?;
    }
    Ok(())
}

fn write_masks(
    paths: &Paths,
    exp: &ExperimentConfig,
    schema: &FeatureSchema,
) -> Result<(), CliError> {
    let mut done = std::collections::BTreeSet::new();
    for (_, g, s) in exp.cells() {
        if done.insert((g, s)) {
            let mask = g.mask(s, schema).map_err(EvalError::from)?;
            write(&paths.mask(g, s), mask.to_text(schema))?;
        }
    }
    Ok(())
}

pub fn cmd_train_ids(cfg: &RunConfig) -> Result<BTreeMap<Algorithm, ClassifierModel>, CliError> {
    let exp = cfg.validate()?;
    let paths = Paths {
        out: cfg.out.clone(),
    };
    let data = load_prepared(cfg)?;
    let models = eval::train_models(&data, &exp, &BTreeMap::new())?;
    save_models(&paths, &models, &exp, data.ids_half.len())?;
    info!("trained {} detectors", models.len());
    Ok(models)
}

fn require_models(
    paths: &Paths,
    exp: &ExperimentConfig,
    schema: &FeatureSchema,
) -> Result<BTreeMap<Algorithm, ClassifierModel>, CliError> {
    let mut models = BTreeMap::new();
    for &a in &exp.algorithms {
        match load_model(paths, a, schema)? {
            Some(m) => {
                models.insert(a, m);
            }
            None => {
                return Err(CliError::Dependency {
                    artifact: paths.model(a, "bin"),
                    stage: "train-ids",
                })
            }
        }
    }
    Ok(models)
}

pub fn cmd_train_gan(cfg: &RunConfig) -> Result<(), CliError> {
    let exp = cfg.validate()?;
    let paths = Paths {
        out: cfg.out.clone(),
    };
    let data = load_prepared(cfg)?;
    let models = require_models(&paths, &exp, &data.schema)?;
    write_masks(&paths, &exp, &data.schema)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.jobs)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let outcomes: Vec<eval::CellOutcome> = pool.install(|| {
        use rayon::prelude::*;
        exp.cells()
            .par_iter()
            .map(|&(a, g, s)| eval::run_cell(&data, &models[&a], g, s, &exp))
            .collect::<Result<_, EvalError>>()
    })?;
    for o in outcomes {
        let dir = paths.out.join("gan").join(o.row.cell_name());
        write(&dir.join("generator.bin"), o.generator.net.to_bytes())?;
        write(&dir.join("critic.bin"), o.critic.net.to_bytes())?;
        write(&dir.join("metrics.csv"), o.trace.to_csv())?;
    }
    Ok(())
}

pub fn write_report(out: &Path, result: &ExperimentOutput) -> Result<(), CliError> {
    write(&out.join("report.csv"), result.report.to_csv())?;
    write(&out.join("report.json"), result.report.to_json())?;
    for (cell, trace) in &result.traces {
        write(
            &out.join("traces").join(format!("{cell}.csv")),
            trace.to_csv(),
        )?;
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<ExperimentOutput, CliError> {
    let exp = cfg.validate()?;
    let paths = Paths {
        out: cfg.out.clone(),
    };
    let data = load_prepared(cfg)?;
    let mut existing = BTreeMap::new();
    for &a in &exp.algorithms {
        if let Some(m) = load_model(&paths, a, &data.schema)? {
            existing.insert(a, m);
        }
    }
    let models = eval::train_models(&data, &exp, &existing)?;
    let fresh: BTreeMap<Algorithm, ClassifierModel> = models
        .iter()
        .filter(|(a, _)| !existing.contains_key(*a))
        .map(|(a, m)| (*a, m.clone()))
        .collect();
    save_models(&paths, &fresh, &exp, data.ids_half.len())?;
    write_masks(&paths, &exp, &data.schema)?;
    let result = eval::run_grid(&data, &models, &exp)?;
    write_report(&paths.out, &result)?;
    for r in &result.report.rows {
        info!(
            "{}: original DR {:.4}, adversarial DR {:.4}",
            cell_name(r.algorithm, r.attack, r.setting),
            r.original_dr,
            r.adversarial_dr
        );
    }
    Ok(result)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Synth {
        dir,
        train_records,
        test_records,
    } = &cli.command
    {
        let seed = cli.opts.seed.unwrap_or(0);
        let train = SynthConfig {
            records: *train_records,
            seed,
            ..SynthConfig::default()
        };
        let test = SynthConfig {
            records: *test_records,
            seed: seed.wrapping_add(1),
            unseen_services: true,
            ..SynthConfig::default()
        };
        synth::write_corpus(dir, &train, &test)?;
        return Ok(());
    }
    let cfg = resolve_config(&cli.opts)?;
    cfg.validate()?;
    write(&cfg.out.join("effective_config.toml"), cfg.to_flat_toml())?;
    match cli.command {
        Command::Prepare => cmd_prepare(&cfg),
        Command::TrainIds => cmd_train_ids(&cfg).map(|_| ()),
        Command::TrainGan => cmd_train_gan(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg).map(|_| ()),
        Command::Run => {
            cmd_prepare(&cfg)?;
            cmd_evaluate(&cfg).map(|_| ())
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
}
