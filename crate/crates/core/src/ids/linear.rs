//! Affine detectors: linear SVM (hinge loss) and logistic regression.

use rand::seq::SliceRandom;

use super::{dot, IdsError, Label, LogRegParams, SvmParams, TrainingSet};
use crate::nslkdd::{FeatureVector, NUM_FEATURES};
use crate::numcore::{seeded_rng, ByteReader, ByteWriter};

/// `score(x) = w.x + b`; predicts attack when the score is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn score(&self, x: &FeatureVector) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict(&self, x: &FeatureVector) -> Label {
        if self.score(x) >= 0.0 {
            Label::Attack
        } else {
            Label::Normal
        }
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.f64s(&self.weights);
        w.f64(self.bias);
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self, IdsError> {
        let weights = r.f64_vec()?;
        if weights.len() != NUM_FEATURES {
            return Err(IdsError::Blob(format!("{} linear weights", weights.len())));
        }
        Ok(LinearModel {
            weights,
            bias: r.f64()?,
        })
    }
}

/// Stochastic subgradient descent on `lambda/2 |w|^2 + mean(max(0, 1 - y s(x)))`.
pub(crate) fn fit_svm(
    data: &TrainingSet<'_>,
    p: &SvmParams,
    seed: u64,
) -> Result<LinearModel, IdsError> {
    if p.lambda <= 0.0 || p.eta0 <= 0.0 {
        return Err(IdsError::Hyperparameter(
            "svm.lambda and svm.eta0 must be positive".into(),
        ));
    }
    let mut rng = seeded_rng(seed);
    let mut model = LinearModel {
        weights: vec![0.0; NUM_FEATURES],
        bias: 0.0,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0.0;
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = p.eta0 / (1.0 + p.lambda * p.eta0 * t);
            t += 1.0;
            let y = data.sign(i);
            let x = &data.features[i];
            let margin = y * model.score(x);
            let shrink = 1.0 - eta * p.lambda;
            model.weights.iter_mut().for_each(|w| *w *= shrink);
            if margin < 1.0 {
                for (w, xv) in model.weights.iter_mut().zip(x) {
                    *w += eta * y * xv;
                }
                model.bias += eta * y;
            }
        }
    }
    Ok(model)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mini-batch gradient descent on mean log-loss, reshuffled every epoch.
pub(crate) fn fit_logistic(
    data: &TrainingSet<'_>,
    p: &LogRegParams,
    seed: u64,
) -> Result<LinearModel, IdsError> {
    if p.batch_size == 0 || p.lr <= 0.0 {
        return Err(IdsError::Hyperparameter(
            "lr.batch_size and lr.lr must be positive".into(),
        ));
    }
    let mut rng = seeded_rng(seed);
    let mut model = LinearModel {
        weights: vec![0.0; NUM_FEATURES],
        bias: 0.0,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; NUM_FEATURES];
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(p.batch_size) {
            grad.fill(0.0);
            let mut grad_b = 0.0;
            for &i in batch {
                let x = &data.features[i];
                let y = if data.labels[i].is_attack() { 1.0 } else { 0.0 };
                let err = sigmoid(model.score(x)) - y;
                for (g, xv) in grad.iter_mut().zip(x) {
                    *g += err * xv;
                }
                grad_b += err;
            }
            let scale = p.lr / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= scale * g;
            }
            model.bias -= scale * grad_b;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(v: f64) -> FeatureVector {
        let mut x = [0.0; NUM_FEATURES];
        x[0] = v;
        x
    }

    #[test]
    fn logistic_separates_two_points() {
        let xs = [point(0.0), point(1.0)];
        let ys = [Label::Normal, Label::Attack];
        let data = TrainingSet::new(&xs, &ys).unwrap();
        let m = fit_logistic(&data, &LogRegParams::default(), 0).unwrap();
        assert_eq!(m.predict(&xs[0]), Label::Normal);
        assert_eq!(m.predict(&xs[1]), Label::Attack);
    }

    #[test]
    fn svm_separates_two_points() {
        let xs = [point(0.0), point(1.0)];
        let ys = [Label::Normal, Label::Attack];
        let data = TrainingSet::new(&xs, &ys).unwrap();
        let m = fit_svm(&data, &SvmParams::default(), 0).unwrap();
        assert_eq!(m.predict(&xs[0]), Label::Normal);
        assert_eq!(m.predict(&xs[1]), Label::Attack);
    }

    #[test]
    fn decision_is_sign_of_independent_dot_product() {
        let (xs, ys) = super::super::testdata::blobs(200, 9);
        let data = TrainingSet::new(&xs, &ys).unwrap();
        for m in [
            fit_svm(&data, &SvmParams::default(), 1).unwrap(),
            fit_logistic(&data, &LogRegParams::default(), 1).unwrap(),
        ] {
            for x in &xs {
                let mut s = m.bias;
                for k in 0..NUM_FEATURES {
                    s += m.weights[k] * x[k];
                }
                assert!((s - m.score(x)).abs() <= 1e-12);
                assert_eq!(m.predict(x).is_attack(), s >= 0.0);
            }
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!(sigmoid(1000.0) <= 1.0);
    }
}
