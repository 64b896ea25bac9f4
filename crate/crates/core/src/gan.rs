//! Generator, critic and the Wasserstein training loop driven by black-box
//! detector labels.
//!
//! The generator reads an encoded attack record concatenated with uniform
//! noise and proposes a full 41-feature vector. Its output is clamped to
//! [0, 1] and merged with the original record through the attack's mask, so
//! frozen features never change. The critic scores the continuous merged
//! vector; the detector only ever sees the binarized variant.

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    apply_mask, binarize, clamp_unit, violations, ConstraintError, ConstraintViolations,
    FeatureMask,
};
use crate::ids::{Detector, Label};
use crate::nslkdd::{EncodedVector, FeatureSchema, FeatureVector, NUM_FEATURES};
use crate::numcore::{
    seeded_rng, Matrix, Network, NoiseStream, NumError, RmsPropConfig, RmsPropState, SeededRng,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GanError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error("critic batch has no records predicted {0:?}")]
    EmptyPartition(Label),
    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    TrainingDiverged { epoch: usize, what: &'static str },
    #[error("GAN training needs at least one {0} record")]
    MissingRecords(&'static str),
    #[error("adversarial output violated constraints at epoch {epoch}: {violations:?}")]
    ConstraintViolated {
        epoch: usize,
        violations: ConstraintViolations,
    },
    #[error("invalid GAN configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub clip: f64,
    pub noise_dim: usize,
    pub g_steps: usize,
    pub d_steps: usize,
    pub rms_rho: f64,
    pub rms_eps: f64,
    /// Hidden widths of the generator; always four entries for five layers.
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Training attack records monitored after every epoch.
    pub probe_size: usize,
    /// Set per experiment cell, never read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 100,
            lr_g: 1e-4,
            lr_d: 1e-4,
            clip: 0.01,
            noise_dim: 9,
            g_steps: 1,
            d_steps: 1,
            rms_rho: 0.99,
            rms_eps: 1e-8,
            generator_hidden: vec![64, 96, 96, 64],
            critic_hidden: vec![64, 32],
            probe_size: 512,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.noise_dim == 0 || self.g_steps == 0 || self.d_steps == 0 {
            return bad("batch_size, noise_dim, g_steps and d_steps must be positive");
        }
        if self.lr_g <= 0.0 || self.lr_d <= 0.0 || self.clip <= 0.0 {
            return bad("learning rates and clip must be positive");
        }
        if self.generator_hidden.len() != 4 {
            return bad("generator_hidden must list 4 widths (5 linear layers)");
        }
        if self.generator_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    fn rms(&self, lr: f64) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: lr,
            rho: self.rms_rho,
            epsilon: self.rms_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: Network,
    pub noise_dim: usize,
}

impl Generator {
    pub fn new<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Self {
        let mut widths = vec![NUM_FEATURES + cfg.noise_dim];
        widths.extend(&cfg.generator_hidden);
        widths.push(NUM_FEATURES);
        Generator {
            net: Network::new(&widths, rng),
            noise_dim: cfg.noise_dim,
        }
    }

    pub fn from_network(net: Network) -> Result<Self, GanError> {
        if net.out_dim() != NUM_FEATURES || net.in_dim() <= NUM_FEATURES {
            return Err(GanError::InvalidConfig(format!(
                "generator network maps {} -> {}",
                net.in_dim(),
                net.out_dim()
            )));
        }
        Ok(Generator {
            noise_dim: net.in_dim() - NUM_FEATURES,
            net,
        })
    }

    /// Rows of `[M, N]`: each original followed by fresh uniform noise.
    fn input(&self, originals: &[EncodedVector], noise: &mut NoiseStream) -> Matrix {
        let width = NUM_FEATURES + self.noise_dim;
        let mut m = Matrix::zeros(originals.len(), width);
        for (r, o) in originals.iter().enumerate() {
            let row = m.row_mut(r);
            row[..NUM_FEATURES].copy_from_slice(&o.values);
            noise.fill(&mut row[NUM_FEATURES..]);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Network,
}

impl Critic {
    pub fn new<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Self {
        let mut widths = vec![NUM_FEATURES];
        widths.extend(&cfg.critic_hidden);
        widths.push(1);
        Critic {
            net: Network::new(&widths, rng),
        }
    }

    pub fn from_network(net: Network) -> Result<Self, GanError> {
        if net.in_dim() != NUM_FEATURES || net.out_dim() != 1 {
            return Err(GanError::InvalidConfig("critic must map 41 -> 1".into()));
        }
        Ok(Critic { net })
    }

    pub fn scores(&self, batch: &[FeatureVector]) -> Result<Vec<f64>, GanError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.net.infer(&Matrix::from_rows(batch)?)?.data().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBatch {
    /// Clamped and masked, binary features left continuous. Critic input.
    pub continuous: Vec<FeatureVector>,
    /// Same as `continuous` with binary features thresholded. Detector input.
    pub discrete: Vec<FeatureVector>,
}

fn check_categories(originals: &[EncodedVector], mask: &FeatureMask) -> Result<(), GanError> {
    if let Some(o) = originals.iter().find(|o| !mask.accepts(o.category)) {
        return Err(ConstraintError::CategoryMismatch {
            mask: mask.category,
            record: o.category,
        }
        .into());
    }
    Ok(())
}

fn finish_batch(
    raw: &Matrix,
    originals: &[EncodedVector],
    mask: &FeatureMask,
    schema: &FeatureSchema,
) -> Result<GeneratedBatch, GanError> {
    let mut continuous = Vec::with_capacity(originals.len());
    let mut discrete = Vec::with_capacity(originals.len());
    for (r, o) in originals.iter().enumerate() {
        let mut v: FeatureVector = raw.row(r).try_into().expect("generator emits 41 units");
        clamp_unit(&mut v);
        let c = apply_mask(o, &v, mask)?;
        binarize(&mut v, schema);
        let d = apply_mask(o, &v, mask)?;
        continuous.push(c.values);
        discrete.push(d.values);
    }
    Ok(GeneratedBatch {
        continuous,
        discrete,
    })
}

/// Transforms original attack records into adversarial ones.
pub fn generate(
    gen: &Generator,
    originals: &[EncodedVector],
    mask: &FeatureMask,
    schema: &FeatureSchema,
    noise: &mut NoiseStream,
) -> Result<GeneratedBatch, GanError> {
    check_categories(originals, mask)?;
    if originals.is_empty() {
        return Ok(GeneratedBatch {
            continuous: Vec::new(),
            discrete: Vec::new(),
        });
    }
    let raw = gen.net.infer(&gen.input(originals, noise))?;
    finish_batch(&raw, originals, mask, schema)
}

/// Generates in chunks so large test sets do not build one huge matrix.
pub fn generate_all(
    gen: &Generator,
    originals: &[EncodedVector],
    mask: &FeatureMask,
    schema: &FeatureSchema,
    noise: &mut NoiseStream,
) -> Result<GeneratedBatch, GanError> {
    let mut out = GeneratedBatch {
        continuous: Vec::with_capacity(originals.len()),
        discrete: Vec::with_capacity(originals.len()),
    };
    for chunk in originals.chunks(1024) {
        let b = generate(gen, chunk, mask, schema, noise)?;
        out.continuous.extend(b.continuous);
        out.discrete.extend(b.discrete);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `mean D(s | predicted normal) - mean D(s | predicted attack)`.
pub fn critic_loss(
    critic: &Critic,
    pred_normal: &[FeatureVector],
    pred_attack: &[FeatureVector],
) -> Result<f64, GanError> {
    if pred_normal.is_empty() {
        return Err(GanError::EmptyPartition(Label::Normal));
    }
    if pred_attack.is_empty() {
        return Err(GanError::EmptyPartition(Label::Attack));
    }
    Ok(mean(&critic.scores(pred_normal)?) - mean(&critic.scores(pred_attack)?))
}

/// Mean critic score of the adversarial batch.
pub fn generator_loss(
    critic: &Critic,
    adversarial_continuous: &[FeatureVector],
) -> Result<f64, GanError> {
    if adversarial_continuous.is_empty() {
        return Err(GanError::MissingRecords("adversarial"));
    }
    Ok(mean(&critic.scores(adversarial_continuous)?))
}

/// Generator loss and its gradient w.r.t. the raw generator output.
///
/// The gradient is zero on frozen features and on elements the clamp
/// saturated. Critic parameter gradients are left zeroed.
pub fn generator_loss_gradient(
    critic: &mut Critic,
    raw: &Matrix,
    originals: &[EncodedVector],
    mask: &FeatureMask,
) -> Result<(f64, Matrix), GanError> {
    let n = originals.len();
    if n == 0 {
        return Err(GanError::MissingRecords("adversarial"));
    }
    let mut merged = Matrix::zeros(n, NUM_FEATURES);
    let mut pass = vec![false; n * NUM_FEATURES];
    for (r, o) in originals.iter().enumerate() {
        let row = raw.row(r);
        let out = merged.row_mut(r);
        for k in 0..NUM_FEATURES {
            if mask.modifiable[k] {
                out[k] = row[k].clamp(0.0, 1.0);
                pass[r * NUM_FEATURES + k] = (0.0..=1.0).contains(&row[k]);
            } else {
                out[k] = o.values[k];
            }
        }
    }
    let scores = critic.net.forward(&merged)?;
    let loss = mean(scores.data());
    let upstream = Matrix::from_vec(n, 1, vec![1.0 / n as f64; n])?;
    let mut grad = critic.net.backward(&upstream)?;
    critic.net.zero_grad();
    for (g, p) in grad.data_mut().iter_mut().zip(&pass) {
        if !p {
            *g = 0.0;
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_g: f64,
    pub loss_d: f64,
    pub probe_adv_dr: f64,
    pub skipped_d_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    /// `epoch,loss_g,loss_d,probe_adv_dr` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss_g,loss_d,probe_adv_dr\n");
        for m in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                m.epoch, m.loss_g, m.loss_d, m.probe_adv_dr
            ));
        }
        out
    }
}

/// Endless reshuffled index stream over a record set.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new(n: usize, rng: &mut SeededRng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        BatchCursor { order, pos: 0 }
    }

    fn next_batch(&mut self, size: usize, rng: &mut SeededRng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

pub struct GanData<'a> {
    pub normal: &'a [EncodedVector],
    pub attack: &'a [EncodedVector],
}

/// Everything one training run owns.
pub struct GanTrainer<'a> {
    pub generator: Generator,
    pub critic: Critic,
    gen_opt: RmsPropState,
    critic_opt: RmsPropState,
    cfg: TrainConfig,
    mask: &'a FeatureMask,
    schema: &'a FeatureSchema,
    noise: NoiseStream,
    batch_rng: SeededRng,
}

const STREAM_INIT: u64 = 0x1000;
const STREAM_NOISE: u64 = 0x2000;
const STREAM_BATCH: u64 = 0x3000;
const STREAM_PROBE: u64 = 0x4000;

fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream
}

impl<'a> GanTrainer<'a> {
    pub fn new(
        cfg: &TrainConfig,
        mask: &'a FeatureMask,
        schema: &'a FeatureSchema,
    ) -> Result<Self, GanError> {
        cfg.validate()?;
        let mut init = seeded_rng(stream_seed(cfg.seed, STREAM_INIT));
        let generator = Generator::new(cfg, &mut init);
        let critic = Critic::new(cfg, &mut init);
        Ok(GanTrainer {
            gen_opt: RmsPropState::new(&generator.net, cfg.rms(cfg.lr_g)),
            critic_opt: RmsPropState::new(&critic.net, cfg.rms(cfg.lr_d)),
            generator,
            critic,
            cfg: cfg.clone(),
            mask,
            schema,
            noise: NoiseStream::new(stream_seed(cfg.seed, STREAM_NOISE)),
            batch_rng: seeded_rng(stream_seed(cfg.seed, STREAM_BATCH)),
        })
    }

    /// One generator update; returns its loss.
    pub fn generator_step(&mut self, batch: &[EncodedVector]) -> Result<f64, GanError> {
        let input = self.generator.input(batch, &mut self.noise);
        let raw = self.generator.net.forward(&input)?;
        let (loss, grad) = generator_loss_gradient(&mut self.critic, &raw, batch, self.mask)?;
        self.generator.net.backward(&grad)?;
        self.gen_opt.step(&mut self.generator.net)?;
        Ok(loss)
    }

    /// One critic update on normal records plus fresh adversarial records,
    /// partitioned by the detector's labels. `Ok(None)` when a partition is
    /// empty and the update is skipped.
    pub fn critic_step(
        &mut self,
        normal: &[EncodedVector],
        attack: &[EncodedVector],
        ids: &dyn Detector,
    ) -> Result<Option<f64>, GanError> {
        let adv = generate(
            &self.generator,
            attack,
            self.mask,
            self.schema,
            &mut self.noise,
        )?;
        let normal_vecs: Vec<FeatureVector> = normal.iter().map(|e| e.values).collect();
        let mut labels = ids.predict(&normal_vecs);
        labels.extend(ids.predict(&adv.discrete));
        let mut rows = normal_vecs;
        rows.extend(adv.continuous);

        let n_normal = labels.iter().filter(|l| !l.is_attack()).count();
        let n_attack = labels.len() - n_normal;
        if n_normal == 0 || n_attack == 0 {
            debug!("critic step skipped: {n_normal} predicted normal, {n_attack} predicted attack");
            return Ok(None);
        }
        let weights: Vec<f64> = labels
            .iter()
            .map(|l| {
                if l.is_attack() {
                    -1.0 / n_attack as f64
                } else {
                    1.0 / n_normal as f64
                }
            })
            .collect();
        let scores = self.critic.net.forward(&Matrix::from_rows(&rows)?)?;
        let loss: f64 = scores.data().iter().zip(&weights).map(|(s, w)| s * w).sum();
        self.critic
            .net
            .backward(&Matrix::from_vec(rows.len(), 1, weights)?)?;
        self.critic_opt.step(&mut self.critic.net)?;
        self.critic.net.clip(self.cfg.clip)?;
        Ok(Some(loss))
    }

    /// Runs the full schedule, returning per-epoch metrics.
    pub fn train(
        &mut self,
        data: &GanData<'_>,
        ids: &dyn Detector,
    ) -> Result<TrainReport, GanError> {
        if data.attack.is_empty() {
            return Err(GanError::MissingRecords("attack"));
        }
        if data.normal.is_empty() {
            return Err(GanError::MissingRecords("normal"));
        }
        check_categories(data.attack, self.mask)?;
        let bs = self.cfg.batch_size;
        let iterations = data.attack.len().div_ceil(bs);
        let mut attack_cursor = BatchCursor::new(data.attack.len(), &mut self.batch_rng);
        let mut normal_cursor = BatchCursor::new(data.normal.len(), &mut self.batch_rng);
        let probe = &data.attack[..self.cfg.probe_size.min(data.attack.len())];
        let mut report = TrainReport::default();

        for epoch in 0..self.cfg.epochs {
            let (mut g_sum, mut g_n, mut d_sum, mut d_n, mut skipped) =
                (0.0, 0usize, 0.0, 0usize, 0usize);
            for _ in 0..iterations {
                for _ in 0..self.cfg.g_steps {
                    let idx = attack_cursor.next_batch(bs, &mut self.batch_rng);
                    let batch: Vec<EncodedVector> =
                        idx.iter().map(|&i| data.attack[i].clone()).collect();
                    g_sum += self.generator_step(&batch)?;
                    g_n += 1;
                }
                for _ in 0..self.cfg.d_steps {
                    let ai = attack_cursor.next_batch(bs, &mut self.batch_rng);
                    let ni = normal_cursor.next_batch(bs, &mut self.batch_rng);
                    let attack: Vec<EncodedVector> =
                        ai.iter().map(|&i| data.attack[i].clone()).collect();
                    let normal: Vec<EncodedVector> =
                        ni.iter().map(|&i| data.normal[i].clone()).collect();
                    match self.critic_step(&normal, &attack, ids)? {
                        Some(l) => {
                            d_sum += l;
                            d_n += 1;
                        }
                        None => skipped += 1,
                    }
                }
            }
            let loss_g = g_sum / g_n.max(1) as f64;
            let loss_d = if d_n > 0 { d_sum / d_n as f64 } else { 0.0 };
            if !loss_g.is_finite() || !self.generator.net.params_finite() {
                return Err(GanError::TrainingDiverged {
                    epoch,
                    what: "generator",
                });
            }
            if !loss_d.is_finite() || !self.critic.net.params_finite() {
                return Err(GanError::TrainingDiverged {
                    epoch,
                    what: "critic",
                });
            }
            let probe_adv_dr = self.probe(probe, ids, epoch)?;
            report.epochs.push(EpochMetrics {
                epoch,
                loss_g,
                loss_d,
                probe_adv_dr,
                skipped_d_steps: skipped,
            });
        }
        Ok(report)
    }

    /// Adversarial detection rate on the probe slice; also audits the mask.
    fn probe(
        &self,
        probe: &[EncodedVector],
        ids: &dyn Detector,
        epoch: usize,
    ) -> Result<f64, GanError> {
        let mut noise = NoiseStream::new(stream_seed(self.cfg.seed, STREAM_PROBE));
        let adv = generate_all(&self.generator, probe, self.mask, self.schema, &mut noise)?;
        let mut v = ConstraintViolations::default();
        for (o, (c, d)) in probe.iter().zip(adv.continuous.iter().zip(&adv.discrete)) {
            v.add(violations(o, c, self.mask, self.schema, false));
            v.add(violations(o, d, self.mask, self.schema, true));
        }
        if v.total() > 0 {
            return Err(GanError::ConstraintViolated {
                epoch,
                violations: v,
            });
        }
        let detected = ids
            .predict(&adv.discrete)
            .iter()
            .filter(|l| l.is_attack())
            .count();
        Ok(detected as f64 / probe.len() as f64)
    }
}

/// Convenience wrapper: build, train, and hand back the networks.
pub fn train(
    cfg: &TrainConfig,
    mask: &FeatureMask,
    schema: &FeatureSchema,
    data: &GanData<'_>,
    ids: &dyn Detector,
) -> Result<(Generator, Critic, TrainReport), GanError> {
    let mut trainer = GanTrainer::new(cfg, mask, schema)?;
    let report = trainer.train(data, ids)?;
    Ok((trainer.generator, trainer.critic, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::functional_mask;
    use crate::nslkdd::AttackCategory;
    use crate::numcore::testutil::gradient_check;
    use crate::synth;

    /// Flags a record as attack when its mean over the host-based block is high.
    struct HostRule;

    impl Detector for HostRule {
        fn predict(&self, batch: &[FeatureVector]) -> Vec<Label> {
            batch
                .iter()
                .map(|x| {
                    let m = x[31..].iter().sum::<f64>() / 10.0;
                    if m > 0.4 {
                        Label::Attack
                    } else {
                        Label::Normal
                    }
                })
                .collect()
        }
    }

    fn records(n: usize, category: AttackCategory, level: f64, seed: u64) -> Vec<EncodedVector> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                let mut values: FeatureVector = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
                for v in &mut values[31..] {
                    *v = (level + rng.gen_range(-0.1..0.1f64)).clamp(0.0, 1.0);
                }
                for i in [6, 11, 13, 14, 20, 21] {
                    values[i] = rng.gen_range(0..2) as f64;
                }
                EncodedVector { values, category }
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            generator_hidden: vec![16, 16, 16, 16],
            critic_hidden: vec![16, 8],
            probe_size: 32,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_config_matches_stated_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.epochs, c.noise_dim), (64, 100, 9));
        assert_eq!((c.lr_g, c.lr_d, c.clip), (1e-4, 1e-4, 0.01));
        let g = Generator::new(&c, &mut seeded_rng(0));
        assert_eq!(g.net.layers.len(), 5);
        assert_eq!(g.net.in_dim(), 50);
        assert_eq!(g.net.out_dim(), 41);
        let d = Critic::new(&c, &mut seeded_rng(0));
        assert_eq!(d.net.widths(), vec![41, 64, 32, 1]);
    }

    #[test]
    fn generate_respects_mask_and_binarizes() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let cfg = TrainConfig::default();
        let gen = Generator::new(&cfg, &mut seeded_rng(1));
        let originals = records(40, AttackCategory::DoS, 0.8, 2);
        let out = generate(&gen, &originals, &mask, &schema, &mut NoiseStream::new(3)).unwrap();
        for (o, (c, d)) in originals
            .iter()
            .zip(out.continuous.iter().zip(&out.discrete))
        {
            assert_eq!(violations(o, c, &mask, &schema, false).total(), 0);
            assert_eq!(violations(o, d, &mask, &schema, true).total(), 0);
        }
        let again = generate(&gen, &originals, &mask, &schema, &mut NoiseStream::new(3)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn generate_rejects_foreign_category() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let gen = Generator::new(&TrainConfig::default(), &mut seeded_rng(1));
        let originals = records(2, AttackCategory::Probe, 0.8, 2);
        assert!(matches!(
            generate(&gen, &originals, &mask, &schema, &mut NoiseStream::new(3)),
            Err(GanError::Constraint(
                ConstraintError::CategoryMismatch { .. }
            ))
        ));
    }

    fn constant_critic(c: f64) -> Critic {
        let mut critic = Critic::new(&TrainConfig::default(), &mut seeded_rng(0));
        for l in &mut critic.net.layers {
            l.weights.data_mut().fill(0.0);
            l.bias.fill(0.0);
        }
        critic.net.layers.last_mut().unwrap().bias[0] = c;
        critic
    }

    #[test]
    fn critic_loss_cases() {
        let a: Vec<FeatureVector> = records(5, AttackCategory::DoS, 0.8, 1)
            .iter()
            .map(|e| e.values)
            .collect();
        let b: Vec<FeatureVector> = records(7, AttackCategory::DoS, 0.2, 2)
            .iter()
            .map(|e| e.values)
            .collect();
        let flat = constant_critic(0.3);
        assert_eq!(critic_loss(&flat, &a, &b).unwrap(), 0.0);
        assert_eq!(generator_loss(&flat, &a).unwrap(), 0.3);
        // D(x) = 2 x[0] - 1 routed through the first unit of each layer
        let mut lin = constant_critic(-1.0);
        let n = lin.net.layers.len();
        for l in &mut lin.net.layers[..n - 1] {
            l.weights.set(0, 0, 1.0);
        }
        lin.net.layers[n - 1].weights.set(0, 0, 2.0);
        let at = |v: f64| {
            let mut x = [0.5; NUM_FEATURES];
            x[0] = v;
            x
        };
        let normal = vec![at(0.0); 3];
        let attack = vec![at(1.0); 4];
        assert_eq!(lin.scores(&normal).unwrap(), vec![-1.0; 3]);
        assert_eq!(lin.scores(&attack).unwrap(), vec![1.0; 4]);
        assert_eq!(critic_loss(&lin, &normal, &attack).unwrap(), -2.0);
        assert_eq!(
            critic_loss(&flat, &[], &b),
            Err(GanError::EmptyPartition(Label::Normal))
        );
        assert_eq!(
            critic_loss(&flat, &a, &[]),
            Err(GanError::EmptyPartition(Label::Attack))
        );
    }

    #[test]
    fn losses_match_mean_oracles() {
        let mut rng = seeded_rng(5);
        let critic = Critic::new(&TrainConfig::default(), &mut rng);
        let a: Vec<FeatureVector> = records(13, AttackCategory::DoS, 0.5, 6)
            .iter()
            .map(|e| e.values)
            .collect();
        let b: Vec<FeatureVector> = records(9, AttackCategory::DoS, 0.5, 7)
            .iter()
            .map(|e| e.values)
            .collect();
        let score_one = |x: &FeatureVector| {
            critic
                .net
                .infer(&Matrix::from_rows(&[x]).unwrap())
                .unwrap()
                .get(0, 0)
        };
        let ma = a.iter().map(score_one).sum::<f64>() / a.len() as f64;
        let mb = b.iter().map(score_one).sum::<f64>() / b.len() as f64;
        assert!((critic_loss(&critic, &a, &b).unwrap() - (ma - mb)).abs() <= 1e-12);
        assert!((generator_loss(&critic, &a).unwrap() - ma).abs() <= 1e-12);
    }

    #[test]
    fn constant_critic_gives_zero_generator_gradient() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let originals = records(6, AttackCategory::DoS, 0.8, 2);
        let raw =
            Matrix::from_rows(&originals.iter().map(|o| o.values).collect::<Vec<_>>()).unwrap();
        let mut critic = constant_critic(0.7);
        let (loss, grad) = generator_loss_gradient(&mut critic, &raw, &originals, &mask).unwrap();
        assert!((loss - 0.7).abs() < 1e-15);
        assert!(grad.data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn frozen_and_saturated_positions_get_no_gradient() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let originals = records(6, AttackCategory::DoS, 0.8, 2);
        let mut raw =
            Matrix::from_rows(&originals.iter().map(|o| o.values).collect::<Vec<_>>()).unwrap();
        raw.set(0, 12, 1.7);
        raw.set(1, 35, -0.4);
        let mut critic = Critic::new(&TrainConfig::default(), &mut seeded_rng(4));
        let (_, grad) = generator_loss_gradient(&mut critic, &raw, &originals, &mask).unwrap();
        for r in 0..originals.len() {
            for k in 0..NUM_FEATURES {
                if !mask.modifiable[k] {
                    assert_eq!(grad.get(r, k), 0.0);
                }
            }
        }
        assert_eq!(grad.get(0, 12), 0.0);
        assert_eq!(grad.get(1, 35), 0.0);
        assert!(grad.data().iter().any(|g| *g != 0.0));
        assert!(critic
            .net
            .layers
            .iter()
            .all(|l| l.grad_bias.iter().all(|g| *g == 0.0)));
    }

    #[test]
    fn generator_gradient_matches_finite_difference() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::U2R, &schema).unwrap();
        let originals = records(4, AttackCategory::U2R, 0.5, 3);
        let raw =
            Matrix::from_rows(&originals.iter().map(|o| o.values).collect::<Vec<_>>()).unwrap();
        let mut critic = Critic::new(&TrainConfig::default(), &mut seeded_rng(8));
        let (_, grad) = generator_loss_gradient(&mut critic, &raw, &originals, &mask).unwrap();
        let h = 1e-6;
        for r in 0..originals.len() {
            for k in 0..NUM_FEATURES {
                let v = raw.get(r, k);
                if !mask.modifiable[k] || v < 2.0 * h || v > 1.0 - 2.0 * h {
                    continue;
                }
                let mut up = raw.clone();
                up.set(r, k, v + h);
                let mut down = raw.clone();
                down.set(r, k, v - h);
                let lu = generator_loss_gradient(&mut critic, &up, &originals, &mask)
                    .unwrap()
                    .0;
                let ld = generator_loss_gradient(&mut critic, &down, &originals, &mask)
                    .unwrap()
                    .0;
                let fd = (lu - ld) / (2.0 * h);
                let a = grad.get(r, k);
                assert!(
                    (fd - a).abs() <= 1e-4 * fd.abs().max(a.abs()).max(1e-6),
                    "{fd} vs {a}"
                );
            }
        }
    }

    #[test]
    fn generator_and_critic_networks_pass_gradient_check() {
        let cfg = TrainConfig::default();
        let mut rng = seeded_rng(12);
        let mut gen = Generator::new(&cfg, &mut rng);
        let x =
            Matrix::from_vec(3, 50, (0..150).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        assert!(gradient_check(&mut gen.net, &x, 1) <= 1e-4);
        let mut critic = Critic::new(&cfg, &mut rng);
        let x =
            Matrix::from_vec(3, 41, (0..123).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        assert!(gradient_check(&mut critic.net, &x, 2) <= 1e-4);
    }

    #[test]
    fn zero_epochs_leave_networks_untouched() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        let normal = records(30, AttackCategory::Normal, 0.2, 1);
        let attack = records(30, AttackCategory::DoS, 0.8, 2);
        let fresh = GanTrainer::new(&cfg, &mask, &schema).unwrap();
        let (g, c, report) = train(
            &cfg,
            &mask,
            &schema,
            &GanData {
                normal: &normal,
                attack: &attack,
            },
            &HostRule,
        )
        .unwrap();
        assert_eq!(g, fresh.generator);
        assert_eq!(c, fresh.critic);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn training_clips_critic_and_is_deterministic() {
        let schema = synth::toy_schema();
        // host block frozen for probes, so adversarial rows stay detected
        let mask = functional_mask(AttackCategory::Probe, &schema).unwrap();
        let cfg = small_cfg();
        let normal = records(64, AttackCategory::Normal, 0.2, 1);
        let attack = records(64, AttackCategory::Probe, 0.8, 2);
        let data = GanData {
            normal: &normal,
            attack: &attack,
        };
        let mut trainer = GanTrainer::new(&cfg, &mask, &schema).unwrap();
        let mut updates = 0;
        for _ in 0..10 {
            if trainer
                .critic_step(&normal[..16], &attack[..16], &HostRule)
                .unwrap()
                .is_some()
            {
                updates += 1;
                assert!(trainer.critic.net.max_abs_param() <= 0.01);
            }
        }
        assert!(updates > 0);
        let (g1, c1, r1) = train(&cfg, &mask, &schema, &data, &HostRule).unwrap();
        let (g2, c2, r2) = train(&cfg, &mask, &schema, &data, &HostRule).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(g1.net.to_bytes(), g2.net.to_bytes());
        assert_eq!(c1.net.to_bytes(), c2.net.to_bytes());
        assert!(c1.net.max_abs_param() <= 0.01);
        assert_eq!(r1.epochs.len(), 3);
        assert!(r1
            .to_csv()
            .starts_with("epoch,loss_g,loss_d,probe_adv_dr\n"));
    }

    #[test]
    fn critic_loss_decreases_on_fixed_batches() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let cfg = TrainConfig {
            lr_d: 1e-3,
            ..small_cfg()
        };
        let normal = records(32, AttackCategory::Normal, 0.2, 1);
        let attack = records(32, AttackCategory::DoS, 0.8, 2);
        let nv: Vec<FeatureVector> = normal.iter().map(|e| e.values).collect();
        let av: Vec<FeatureVector> = attack.iter().map(|e| e.values).collect();
        let mut trainer = GanTrainer::new(&cfg, &mask, &schema).unwrap();
        // zero the generator's output layer so adversarial rows keep the attack's host block
        let gl = trainer.generator.net.layers.last_mut().unwrap();
        gl.weights.data_mut().fill(0.0);
        gl.bias.fill(0.0);
        for k in 31..NUM_FEATURES {
            gl.bias[k] = 0.8;
        }
        let mut gaps = Vec::new();
        for _ in 0..40 {
            gaps.push(critic_loss(&trainer.critic, &nv, &av).unwrap());
            trainer
                .critic_step(&normal, &attack, &HostRule)
                .unwrap()
                .unwrap();
        }
        gaps.push(critic_loss(&trainer.critic, &nv, &av).unwrap());
        // the first update also clips, so compare from there on
        assert!(
            gaps[gaps.len() - 1] < gaps[1],
            "loss did not decrease: {gaps:?}"
        );
    }

    #[test]
    fn training_requires_both_record_sets() {
        let schema = synth::toy_schema();
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let attack = records(8, AttackCategory::DoS, 0.8, 2);
        let r = train(
            &small_cfg(),
            &mask,
            &schema,
            &GanData {
                normal: &[],
                attack: &attack,
            },
            &HostRule,
        );
        assert_eq!(r.err(), Some(GanError::MissingRecords("normal")));
    }
}
