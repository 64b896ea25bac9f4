//! Gaussian naive Bayes.

use std::f64::consts::PI;

use super::{IdsError, Label, NbParams, TrainingSet};
use crate::nslkdd::{FeatureVector, NUM_FEATURES};
use crate::numcore::{ByteReader, ByteWriter};

/// Class index 0 is normal, 1 is attack.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl GaussianNb {
    pub(crate) fn fit(data: &TrainingSet<'_>, p: &NbParams) -> Result<Self, IdsError> {
        if p.var_floor.is_nan() || p.var_floor < 0.0 {
            return Err(IdsError::Hyperparameter("nb.var_floor must be >= 0".into()));
        }
        let mut count = [0usize; 2];
        let mut sum = [vec![0.0; NUM_FEATURES], vec![0.0; NUM_FEATURES]];
        for (x, y) in data.features.iter().zip(data.labels) {
            let c = y.is_attack() as usize;
            count[c] += 1;
            for (s, v) in sum[c].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mean = [0, 1].map(|c| {
            sum[c]
                .iter()
                .map(|s| s / count[c] as f64)
                .collect::<Vec<_>>()
        });
        let mut sq = [vec![0.0; NUM_FEATURES], vec![0.0; NUM_FEATURES]];
        for (x, y) in data.features.iter().zip(data.labels) {
            let c = y.is_attack() as usize;
            for k in 0..NUM_FEATURES {
                let d = x[k] - mean[c][k];
                sq[c][k] += d * d;
            }
        }
        let var = [0, 1].map(|c| {
            sq[c]
                .iter()
                .map(|s| (s / count[c] as f64).max(p.var_floor))
                .collect::<Vec<_>>()
        });
        let n = data.len() as f64;
        Ok(GaussianNb {
            log_prior: [0, 1].map(|c| (count[c] as f64 / n).ln()),
            mean,
            var,
        })
    }

    /// Unnormalized log joint `log P(c) + sum_k log N(x_k; mu_ck, var_ck)`.
    pub fn log_joint(&self, x: &FeatureVector) -> [f64; 2] {
        [0, 1].map(|c| {
            let mut acc = self.log_prior[c];
            for k in 0..NUM_FEATURES {
                let v = self.var[c][k];
                let d = x[k] - self.mean[c][k];
                acc -= 0.5 * ((2.0 * PI * v).ln() + d * d / v);
            }
            acc
        })
    }

    /// Posterior `[P(normal|x), P(attack|x)]` via log-sum-exp.
    pub fn posterior(&self, x: &FeatureVector) -> [f64; 2] {
        let lj = self.log_joint(x);
        let m = lj[0].max(lj[1]);
        let z = m + ((lj[0] - m).exp() + (lj[1] - m).exp()).ln();
        [(lj[0] - z).exp(), (lj[1] - z).exp()]
    }

    pub fn predict(&self, x: &FeatureVector) -> Label {
        let lj = self.log_joint(x);
        if lj[1] >= lj[0] {
            Label::Attack
        } else {
            Label::Normal
        }
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        for c in 0..2 {
            w.f64(self.log_prior[c]);
            w.f64s(&self.mean[c]);
            w.f64s(&self.var[c]);
        }
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self, IdsError> {
        let mut log_prior = [0.0; 2];
        let mut mean = [Vec::new(), Vec::new()];
        let mut var = [Vec::new(), Vec::new()];
        for c in 0..2 {
            log_prior[c] = r.f64()?;
            mean[c] = r.f64_vec()?;
            var[c] = r.f64_vec()?;
            if mean[c].len() != NUM_FEATURES || var[c].len() != NUM_FEATURES {
                return Err(IdsError::Blob("naive Bayes shape".into()));
            }
        }
        Ok(GaussianNb {
            log_prior,
            mean,
            var,
        })
    }
}
