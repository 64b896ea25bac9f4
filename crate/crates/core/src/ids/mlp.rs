//! Multilayer perceptron detector with softmax cross-entropy.

use rand::seq::SliceRandom;

use super::{IdsError, Label, MlpParams, TrainingSet};
use crate::nslkdd::{FeatureVector, NUM_FEATURES};
use crate::numcore::{
    seeded_rng, ByteReader, ByteWriter, Matrix, Network, RmsPropConfig, RmsPropState,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: Network,
}

/// Row-wise softmax cross-entropy. Returns mean loss and dL/dlogits.
fn softmax_xent(logits: &Matrix, targets: &[usize]) -> (f64, Matrix) {
    let n = logits.rows();
    let mut grad = Matrix::zeros(n, logits.cols());
    let mut loss = 0.0;
    for r in 0..n {
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let g = grad.row_mut(r);
        for (c, v) in row.iter().enumerate() {
            let p = (v - m).exp() / z;
            g[c] = (p - if c == targets[r] { 1.0 } else { 0.0 }) / n as f64;
        }
        loss -= row[targets[r]] - m - z.ln();
    }
    (loss / n as f64, grad)
}

impl MlpModel {
    pub(crate) fn fit(data: &TrainingSet<'_>, p: &MlpParams, seed: u64) -> Result<Self, IdsError> {
        if p.batch_size == 0 || p.lr <= 0.0 || p.hidden.contains(&0) {
            return Err(IdsError::Hyperparameter(
                "mlp widths, lr and batch_size must be positive".into(),
            ));
        }
        let mut rng = seeded_rng(seed);
        let mut widths = vec![NUM_FEATURES];
        widths.extend(&p.hidden);
        widths.push(2);
        let mut net = Network::new(&widths, &mut rng);
        let mut opt = RmsPropState::new(
            &net,
            RmsPropConfig {
                learning_rate: p.lr,
                ..RmsPropConfig::default()
            },
        );
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch_size) {
                let x = Matrix::from_rows(
                    &batch.iter().map(|&i| data.features[i]).collect::<Vec<_>>(),
                )?;
                let targets: Vec<usize> = batch
                    .iter()
                    .map(|&i| data.labels[i].is_attack() as usize)
                    .collect();
                let logits = net.forward(&x)?;
                let (_, grad) = softmax_xent(&logits, &targets);
                net.backward(&grad)?;
                opt.step(&mut net)?;
            }
        }
        Ok(MlpModel { net })
    }

    pub fn logits(&self, x: &FeatureVector) -> [f64; 2] {
        let out = self
            .net
            .infer(&Matrix::from_rows(&[x]).expect("one row"))
            .expect("input width fixed at fit time");
        [out.get(0, 0), out.get(0, 1)]
    }

    pub fn predict(&self, x: &FeatureVector) -> Label {
        let l = self.logits(x);
        if l[1] >= l[0] {
            Label::Attack
        } else {
            Label::Normal
        }
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        let blob = self.net.to_bytes();
        w.u64(blob.len() as u64);
        w.raw(&blob);
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self, IdsError> {
        let n = r.u64()? as usize;
        let net = Network::from_bytes(r.take(n)?)?;
        if net.in_dim() != NUM_FEATURES || net.out_dim() != 2 {
            return Err(IdsError::Blob("MLP shape".into()));
        }
        Ok(MlpModel { net })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_gradient_matches_finite_difference() {
        let logits = Matrix::from_rows(&[[0.3, -1.2], [2.0, 0.5], [-0.1, -0.4]]).unwrap();
        let targets = [1, 0, 1];
        let (_, grad) = softmax_xent(&logits, &targets);
        let h = 1e-6;
        for k in 0..logits.data().len() {
            let mut up = logits.clone();
            up.data_mut()[k] += h;
            let mut down = logits.clone();
            down.data_mut()[k] -= h;
            let fd = (softmax_xent(&up, &targets).0 - softmax_xent(&down, &targets).0) / (2.0 * h);
            assert!((fd - grad.data()[k]).abs() < 1e-8);
        }
    }
}
