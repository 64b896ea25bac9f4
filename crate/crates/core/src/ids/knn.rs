//! Brute-force k-nearest-neighbour detector (Euclidean).

use rand::seq::index::sample;

use super::{IdsError, KnnParams, Label, TrainingSet};
use crate::nslkdd::{FeatureVector, NUM_FEATURES};
use crate::numcore::{seeded_rng, ByteReader, ByteWriter};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub reference: Vec<FeatureVector>,
    pub labels: Vec<Label>,
}

fn squared_distance(a: &FeatureVector, b: &FeatureVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnModel {
    pub(crate) fn fit(data: &TrainingSet<'_>, p: &KnnParams, seed: u64) -> Result<Self, IdsError> {
        if p.k == 0 {
            return Err(IdsError::Hyperparameter("knn.k must be positive".into()));
        }
        let keep: Vec<usize> = if p.max_reference > 0 && data.len() > p.max_reference {
            let mut idx = sample(&mut seeded_rng(seed), data.len(), p.max_reference).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..data.len()).collect()
        };
        Ok(KnnModel {
            k: p.k,
            reference: keep.iter().map(|&i| data.features[i]).collect(),
            labels: keep.iter().map(|&i| data.labels[i]).collect(),
        })
    }

    /// Indices of the k nearest reference points, ordered by (distance, index).
    pub fn neighbours(&self, x: &FeatureVector) -> Vec<usize> {
        let k = self.k.min(self.reference.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, r) in self.reference.iter().enumerate() {
            let d = squared_distance(x, r);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, bi)| bd < d || (bd == d && bi < i));
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &FeatureVector) -> Label {
        let nn = self.neighbours(x);
        let attack = nn.iter().filter(|&&i| self.labels[i].is_attack()).count();
        Label::from_votes(nn.len() - attack, attack)
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.u64(self.k as u64);
        w.u64(self.reference.len() as u64);
        for (x, y) in self.reference.iter().zip(&self.labels) {
            x.iter().for_each(|v| w.f64(*v));
            w.u32(y.is_attack() as u32);
        }
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self, IdsError> {
        let k = r.u64()? as usize;
        let n = r.u64()? as usize;
        let mut reference = Vec::with_capacity(n.min(1 << 20));
        let mut labels = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let v = r.f64s(NUM_FEATURES)?;
            reference.push(v.try_into().expect("length checked"));
            labels.push(match r.u32()? {
                0 => Label::Normal,
                1 => Label::Attack,
                t => return Err(IdsError::Blob(format!("label {t}"))),
            });
        }
        if k == 0 || n == 0 {
            return Err(IdsError::Blob("empty KNN model".into()));
        }
        Ok(KnnModel {
            k,
            reference,
            labels,
        })
    }
}
