//! CART decision trees (Gini impurity) and bagged random forests.

use rand::seq::index::sample;
use rand::Rng;

use super::{ForestParams, IdsError, Label, TrainingSet, TreeParams};
use crate::nslkdd::{FeatureVector, NUM_FEATURES};
use crate::numcore::{seeded_rng, ByteReader, ByteWriter, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        normal: u32,
        attack: u32,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// Nodes are stored in an arena; node 0 is the root. `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn gini(normal: usize, attack: usize) -> f64 {
    let n = (normal + attack) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = attack as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Builder<'a, 'd> {
    data: &'a TrainingSet<'d>,
    max_depth: usize,
    min_leaf: usize,
    max_features: usize,
    rng: Option<SeededRng>,
    nodes: Vec<Node>,
}

impl Builder<'_, '_> {
    fn counts(&self, idx: &[usize]) -> (usize, usize) {
        let attack = idx
            .iter()
            .filter(|&&i| self.data.labels[i].is_attack())
            .count();
        (idx.len() - attack, attack)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.rng.as_mut() {
            Some(rng) if self.max_features < NUM_FEATURES => {
                let mut f = sample(rng, NUM_FEATURES, self.max_features).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..NUM_FEATURES).collect(),
        }
    }

    /// Best `(feature, threshold, impurity)` or `None` if no split is admissible.
    fn best_split(&mut self, idx: &mut [usize]) -> Option<(usize, f64, f64)> {
        let (n0, n1) = self.counts(idx);
        let n = idx.len();
        let mut best: Option<(usize, f64, f64)> = None;
        let parent = gini(n0, n1);
        for f in self.candidate_features() {
            let feats = self.data.features;
            idx.sort_by(|&a, &b| feats[a][f].total_cmp(&feats[b][f]).then(a.cmp(&b)));
            let (mut l0, mut l1) = (0usize, 0usize);
            for pos in 0..n - 1 {
                if self.data.labels[idx[pos]].is_attack() {
                    l1 += 1;
                } else {
                    l0 += 1;
                }
                let left_n = pos + 1;
                if left_n < self.min_leaf || n - left_n < self.min_leaf {
                    continue;
                }
                let (a, b) = (feats[idx[pos]][f], feats[idx[pos + 1]][f]);
                if a == b {
                    continue;
                }
                let impurity = (left_n as f64 * gini(l0, l1)
                    + (n - left_n) as f64 * gini(n0 - l0, n1 - l1))
                    / n as f64;
                if impurity < parent - 1e-12 && best.is_none_or(|(_, _, bi)| impurity < bi) {
                    best = Some((f, a + (b - a) / 2.0, impurity));
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let (n0, n1) = self.counts(idx);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf {
            normal: n0 as u32,
            attack: n1 as u32,
        });
        let depth_ok = self.max_depth == 0 || depth < self.max_depth;
        if n0 == 0 || n1 == 0 || !depth_ok || idx.len() < 2 * self.min_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold, _)) = self.best_split(idx) else {
            return id;
        };
        let feats = self.data.features;
        let mut left: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| feats[i][feature] <= threshold)
            .collect();
        let mut right: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| feats[i][feature] > threshold)
            .collect();
        let l = self.build(&mut left, depth + 1);
        let r = self.build(&mut right, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: feature as u32,
            threshold,
            left: l,
            right: r,
        };
        id
    }
}

impl DecisionTree {
    pub(crate) fn fit(data: &TrainingSet<'_>, p: &TreeParams) -> Result<Self, IdsError> {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        Ok(Self::grow(
            data,
            &mut idx,
            p.max_depth,
            p.min_leaf,
            NUM_FEATURES,
            None,
        ))
    }

    fn grow(
        data: &TrainingSet<'_>,
        idx: &mut [usize],
        max_depth: usize,
        min_leaf: usize,
        max_features: usize,
        rng: Option<SeededRng>,
    ) -> Self {
        let mut b = Builder {
            data,
            max_depth,
            min_leaf: min_leaf.max(1),
            max_features,
            rng,
            nodes: Vec::new(),
        };
        b.build(idx, 0);
        DecisionTree { nodes: b.nodes }
    }

    pub fn predict(&self, x: &FeatureVector) -> Label {
        let mut id = 0usize;
        loop {
            match self.nodes[id] {
                Node::Leaf { normal, attack } => {
                    return Label::from_votes(normal as usize, attack as usize)
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[feature as usize] <= threshold {
                        left
                    } else {
                        right
                    } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.u64(self.nodes.len() as u64);
        for n in &self.nodes {
            match *n {
                Node::Leaf { normal, attack } => {
                    w.u32(0);
                    w.u32(normal);
                    w.u32(attack);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    w.u32(1);
                    w.u32(feature);
                    w.f64(threshold);
                    w.u32(left);
                    w.u32(right);
                }
            }
        }
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self, IdsError> {
        let n = r.u64()? as usize;
        let mut nodes = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            nodes.push(match r.u32()? {
                0 => Node::Leaf {
                    normal: r.u32()?,
                    attack: r.u32()?,
                },
                1 => Node::Split {
                    feature: r.u32()?,
                    threshold: r.f64()?,
                    left: r.u32()?,
                    right: r.u32()?,
                },
                t => return Err(IdsError::Blob(format!("node tag {t}"))),
            });
        }
        let valid = !nodes.is_empty()
            && nodes.iter().enumerate().all(|(i, node)| match *node {
                Node::Leaf { .. } => true,
                Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } => {
                    (feature as usize) < NUM_FEATURES
                        && (left as usize) > i
                        && (right as usize) > i
                        && (left as usize) < nodes.len()
                        && (right as usize) < nodes.len()
                }
            });
        if !valid {
            return Err(IdsError::Blob("inconsistent tree".into()));
        }
        Ok(DecisionTree { nodes })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub(crate) fn fit(
        data: &TrainingSet<'_>,
        p: &ForestParams,
        seed: u64,
    ) -> Result<Self, IdsError> {
        if p.trees == 0 || p.max_features == 0 || p.max_features > NUM_FEATURES {
            return Err(IdsError::Hyperparameter(
                "rf.trees must be positive and rf.max_features within 1..=41".into(),
            ));
        }
        let mut rng = seeded_rng(seed);
        let mut trees = Vec::with_capacity(p.trees);
        for _ in 0..p.trees {
            let tree_seed: u64 = rng.gen();
            let mut boot = seeded_rng(tree_seed);
            let n = data.len();
            let mut idx: Vec<usize> = (0..n).map(|_| boot.gen_range(0..n)).collect();
            trees.push(DecisionTree::grow(
                data,
                &mut idx,
                p.max_depth,
                p.min_leaf,
                p.max_features,
                Some(boot),
            ));
        }
        Ok(RandomForest { trees })
    }

    pub fn votes(&self, x: &FeatureVector) -> (usize, usize) {
        let attack = self
            .trees
            .iter()
            .filter(|t| t.predict(x).is_attack())
            .count();
        (self.trees.len() - attack, attack)
    }

    pub fn predict(&self, x: &FeatureVector) -> Label {
        let (normal, attack) = self.votes(x);
        Label::from_votes(normal, attack)
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.u64(self.trees.len() as u64);
        self.trees.iter().for_each(|t| t.write(w));
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self, IdsError> {
        let n = r.u64()? as usize;
        let trees = (0..n)
            .map(|_| DecisionTree::read(r))
            .collect::<Result<Vec<_>, _>>()?;
        if trees.is_empty() {
            return Err(IdsError::Blob("empty forest".into()));
        }
        Ok(RandomForest { trees })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::testdata::blobs;

    #[test]
    fn unlimited_tree_fits_consistent_data() {
        let (xs, ys) = blobs(300, 5);
        let data = TrainingSet::new(&xs, &ys).unwrap();
        let tree = DecisionTree::fit(
            &data,
            &TreeParams {
                max_depth: 0,
                min_leaf: 1,
            },
        )
        .unwrap();
        assert!(xs.iter().zip(&ys).all(|(x, y)| tree.predict(x) == *y));
    }

    #[test]
    fn depth_limit_is_respected() {
        let (xs, ys) = blobs(300, 5);
        let data = TrainingSet::new(&xs, &ys).unwrap();
        let tree = DecisionTree::fit(
            &data,
            &TreeParams {
                max_depth: 3,
                min_leaf: 5,
            },
        )
        .unwrap();
        assert!(tree.depth() <= 3);
        for node in &tree.nodes {
            if let Node::Leaf { normal, attack } = node {
                assert!(normal + attack >= 5);
            }
        }
    }

    #[test]
    fn forest_vote_is_mode_of_trees() {
        let (xs, ys) = blobs(200, 6);
        let data = TrainingSet::new(&xs, &ys).unwrap();
        let forest = RandomForest::fit(
            &data,
            &ForestParams {
                trees: 10,
                ..ForestParams::default()
            },
            3,
        )
        .unwrap();
        for x in xs.iter().take(50) {
            let preds: Vec<Label> = forest.trees.iter().map(|t| t.predict(x)).collect();
            let attack = preds.iter().filter(|p| p.is_attack()).count();
            let mode = if attack * 2 >= preds.len() {
                Label::Attack
            } else {
                Label::Normal
            };
            assert_eq!(forest.predict(x), mode);
        }
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(5, 0), 0.0);
        assert_eq!(gini(5, 5), 0.5);
        assert_eq!(gini(0, 0), 0.0);
    }
}
