use super::logistic::sigmoid;
use super::{Dataset, ModelError, TrainConfig};
use crate::features::FeatureVector;

/// Node of a regression tree. Children are indices into the owning tree's
/// node list; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `value < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Log-odds contribution, already scaled by the learning rate.
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn stump(feature: usize, threshold: f64, left_value: f64, right_value: f64) -> Self {
        Self {
            nodes: vec![
                TreeNode::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                TreeNode::Leaf { value: left_value },
                TreeNode::Leaf { value: right_value },
            ],
        }
    }

    /// Every child index points forward, which rules out cycles.
    pub fn validate(&self, n_features: usize) -> Result<(), ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::CorruptModel("empty tree".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features {
                        return Err(ModelError::CorruptModel(format!("node {i} references unknown feature")));
                    }
                    if !threshold.is_finite() {
                        return Err(ModelError::CorruptModel(format!("node {i} has a non-finite threshold")));
                    }
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(ModelError::CorruptModel(format!("node {i} has invalid children")));
                    }
                }
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(ModelError::CorruptModel(format!("node {i} has a non-finite leaf")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn predict(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if value_of(feature) < threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsembleModel {
    pub features: Vec<String>,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub learning_rate_applied: bool,
}

impl TreeEnsembleModel {
    pub fn new(features: Vec<String>, base_score: f64, trees: Vec<Tree>) -> Result<Self, ModelError> {
        if !base_score.is_finite() {
            return Err(ModelError::CorruptModel("base score must be finite".into()));
        }
        for t in &trees {
            t.validate(features.len())?;
        }
        Ok(Self {
            features,
            base_score,
            trees,
            learning_rate_applied: true,
        })
    }

    /// The first `rounds` trees only.
    pub fn prefix(&self, rounds: usize) -> Self {
        Self {
            trees: self.trees[..rounds.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    fn margin(&self, values: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(|f| values[f])).sum::<f64>()
    }

    /// Values in model feature order. Features absent from `names` read as 0;
    /// names the model does not know are a schema mismatch.
    fn column_map(&self, names: &[String]) -> Result<Vec<Option<usize>>, ModelError> {
        let mut map = vec![None; self.features.len()];
        for (col, name) in names.iter().enumerate() {
            match self.features.iter().position(|f| f == name) {
                Some(j) => map[j] = Some(col),
                None => {
                    return Err(ModelError::SchemaMismatch(format!("feature {name:?} is unknown to the model")));
                }
            }
        }
        Ok(map)
    }

    pub fn score(&self, vector: &FeatureVector) -> Result<f64, ModelError> {
        let map = self.column_map(vector.names())?;
        let values: Vec<f64> = map.iter().map(|c| c.map_or(0.0, |c| vector.values()[c])).collect();
        Ok(sigmoid(self.margin(&values)))
    }

    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<f64>, ModelError> {
        let map = self.column_map(&data.schema.names)?;
        let mut values = vec![0.0; self.features.len()];
        Ok(data
            .rows()
            .map(|row| {
                for (v, c) in values.iter_mut().zip(&map) {
                    *v = c.map_or(0.0, |c| row[c]);
                }
                sigmoid(self.margin(&values))
            })
            .collect())
    }
}

/// Mean negative log-likelihood of a model on a dataset.
pub fn training_log_loss(model: &TreeEnsembleModel, data: &Dataset) -> Result<f64, ModelError> {
    let probs = model.score_dataset(data)?;
    let total: f64 = probs
        .iter()
        .zip(data.labels())
        .map(|(&p, &y)| -if y { p.ln() } else { (1.0 - p).ln() })
        .sum();
    Ok(total / data.len() as f64)
}

/// Per-feature ranks of each row's value among the feature's distinct values.
struct Binned {
    n_features: usize,
    codes: Vec<u32>,
    values: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

impl Binned {
    fn new(data: &Dataset) -> Self {
        let p = data.n_features();
        let mut values = Vec::with_capacity(p);
        let mut columns = vec![Vec::with_capacity(data.len()); p];
        for row in data.rows() {
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        for mut col in columns {
            col.sort_by(f64::total_cmp);
            col.dedup();
            values.push(col);
        }
        let mut codes = Vec::with_capacity(data.len() * p);
        for row in data.rows() {
            for (f, &v) in row.iter().enumerate() {
                let code = values[f].binary_search_by(|x| x.total_cmp(&v)).expect("value present");
                codes.push(code as u32);
            }
        }
        let mut offsets = Vec::with_capacity(p + 1);
        offsets.push(0);
        for v in &values {
            offsets.push(offsets.last().unwrap() + v.len());
        }
        Self {
            n_features: p,
            codes,
            values,
            offsets,
        }
    }

    fn code(&self, row: u32, feature: usize) -> u32 {
        self.codes[row as usize * self.n_features + feature]
    }
}

#[derive(Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    count: u32,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    /// Highest value rank that goes left.
    left_max_code: u32,
    threshold: f64,
}

struct Grower<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a TrainConfig,
    nodes: Vec<TreeNode>,
    hist: Vec<Bin>,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.config.l2_lambda;
        if denom > 0.0 {
            -self.config.learning_rate * g / denom
        } else {
            0.0
        }
    }

    fn score_term(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.config.l2_lambda;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn best_split(&mut self, rows: &[u32], g: f64, h: f64) -> Option<BestSplit> {
        let b = self.binned;
        self.hist.iter_mut().for_each(|bin| *bin = Bin::default());
        for &r in rows {
            let (gr, hr) = (self.grad[r as usize], self.hess[r as usize]);
            let codes = &b.codes[r as usize * b.n_features..(r as usize + 1) * b.n_features];
            for (f, &c) in codes.iter().enumerate() {
                let bin = &mut self.hist[b.offsets[f] + c as usize];
                bin.g += gr;
                bin.h += hr;
                bin.count += 1;
            }
        }

        let parent = self.score_term(g, h);
        let min_h = self.config.min_child_hessian;
        let mut best: Option<BestSplit> = None;
        for f in 0..b.n_features {
            let bins = &self.hist[b.offsets[f]..b.offsets[f + 1]];
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<usize> = None;
            for (code, bin) in bins.iter().enumerate() {
                if bin.count == 0 {
                    continue;
                }
                if let Some(p) = prev {
                    let (gr, hr) = (g - gl, h - hl);
                    if hl >= min_h && hr >= min_h {
                        let gain =
                            0.5 * (self.score_term(gl, hl) + self.score_term(gr, hr) - parent) - self.config.gamma_min_gain;
                        if best.as_ref().map_or(true, |bs| gain > bs.gain) {
                            let (lo, hi) = (b.values[f][p], b.values[f][code]);
                            let mut threshold = lo + (hi - lo) / 2.0;
                            if threshold <= lo {
                                threshold = hi;
                            }
                            best = Some(BestSplit {
                                gain,
                                feature: f,
                                left_max_code: p as u32,
                                threshold,
                            });
                        }
                    }
                }
                gl += bin.g;
                hl += bin.h;
                prev = Some(code);
            }
        }
        best.filter(|bs| bs.gain > 0.0)
    }

    /// Grows the subtree for `rows` and returns its node index. Leaf values
    /// are added to `margins` as leaves are created.
    fn grow(&mut self, rows: Vec<u32>, depth: usize, margins: &mut [f64]) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();
        let index = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });

        let split = if depth < self.config.max_depth && rows.len() > 1 {
            self.best_split(&rows, g, h)
        } else {
            None
        };
        match split {
            None => {
                let value = self.leaf_value(g, h);
                for &r in &rows {
                    margins[r as usize] += value;
                }
                self.nodes[index] = TreeNode::Leaf { value };
            }
            Some(s) => {
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                    .into_iter()
                    .partition(|&r| self.binned.code(r, s.feature) <= s.left_max_code);
                let left = self.grow(left_rows, depth + 1, margins);
                let right = self.grow(right_rows, depth + 1, margins);
                self.nodes[index] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        index
    }
}

/// Newton boosting on logistic loss with exact greedy splits.
///
/// Candidate thresholds are midpoints between consecutive distinct values
/// present in the node. Equal gains keep the lowest feature index, then the
/// lowest threshold.
pub fn train_boosted_trees(data: &Dataset, config: &TrainConfig) -> Result<TreeEnsembleModel, ModelError> {
    config.validate()?;
    data.require_two_classes()?;
    let n = data.len();
    let prevalence = data.positives() as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();

    let binned = Binned::new(data);
    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.rounds);
    let all_rows: Vec<u32> = (0..n as u32).collect();

    for _ in 0..config.rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - data.labels()[i] as u8 as f64;
            hess[i] = p * (1.0 - p);
        }
        let mut grower = Grower {
            binned: &binned,
            grad: &grad,
            hess: &hess,
            config,
            nodes: Vec::new(),
            hist: vec![Bin::default(); *binned.offsets.last().unwrap()],
        };
        grower.grow(all_rows.clone(), 0, &mut margins);
        trees.push(Tree { nodes: grower.nodes });
    }
    TreeEnsembleModel::new(data.schema.names.clone(), base_score, trees)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSchema;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(names: &[&str], rows: &[(Vec<f64>, bool)]) -> Dataset {
        let schema = FeatureSchema::new("t", names.iter().map(|s| s.to_string()).collect()).unwrap();
        let mut d = Dataset::new(schema.clone());
        for (x, y) in rows {
            d.push(&FeatureVector::new(schema.clone(), x.clone()).unwrap(), *y).unwrap();
        }
        d
    }

    fn stump_config() -> TrainConfig {
        TrainConfig {
            rounds: 1,
            max_depth: 1,
            min_child_hessian: 0.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_rounds_is_prevalence() {
        let rows: Vec<_> = (0..10).map(|i| (vec![i as f64], i < 3)).collect();
        let d = dataset(&["x"], &rows);
        let m = train_boosted_trees(&d, &TrainConfig { rounds: 0, ..TrainConfig::default() }).unwrap();
        assert!(m.trees.is_empty());
        for p in m.score_dataset(&d).unwrap() {
            assert!((p - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_stump() {
        let rows: Vec<_> = [1.0, 2.0, 2.0, 3.0, 7.0, 8.0, 9.0]
            .iter()
            .map(|&x| (vec![x], x > 5.0))
            .collect();
        let d = dataset(&["x"], &rows);
        let m = train_boosted_trees(&d, &stump_config()).unwrap();
        let TreeNode::Split { feature, threshold, .. } = m.trees[0].nodes[0] else {
            panic!("expected a split");
        };
        assert_eq!(feature, 0);
        assert_eq!(threshold, 5.0);
        let p = m.score_dataset(&d).unwrap();
        let max_neg = p.iter().zip(d.labels()).filter(|(_, y)| !**y).map(|(p, _)| *p).fold(0.0, f64::max);
        let min_pos = p.iter().zip(d.labels()).filter(|(_, y)| **y).map(|(p, _)| *p).fold(1.0, f64::min);
        assert!(max_neg < min_pos);
    }

    #[test]
    fn ties_prefer_lowest_feature_then_threshold() {
        // two identical columns: the first must win
        let rows: Vec<_> = (0..8).map(|i| (vec![i as f64, i as f64], i >= 4)).collect();
        let m = train_boosted_trees(&dataset(&["a", "b"], &rows), &stump_config()).unwrap();
        assert!(matches!(m.trees[0].nodes[0], TreeNode::Split { feature: 0, .. }));

        // symmetric labels: splits at 0.5 and 2.5 have equal gain
        let rows: Vec<_> = [(0.0, true), (1.0, false), (2.0, false), (3.0, true)]
            .iter()
            .map(|&(x, y)| (vec![x], y))
            .collect();
        let m = train_boosted_trees(&dataset(&["x"], &rows), &stump_config()).unwrap();
        if let TreeNode::Split { threshold, .. } = m.trees[0].nodes[0] {
            assert_eq!(threshold, 0.5);
        }
    }

    #[test]
    fn constant_features_give_a_single_leaf() {
        let rows: Vec<_> = (0..6).map(|i| (vec![1.0], i % 2 == 0)).collect();
        let m = train_boosted_trees(&dataset(&["x"], &rows), &stump_config()).unwrap();
        assert_eq!(m.trees[0].nodes.len(), 1);
    }

    #[test]
    fn min_child_hessian_blocks_small_children() {
        let rows: Vec<_> = (0..10).map(|i| (vec![i as f64], i == 9)).collect();
        let cfg = TrainConfig {
            min_child_hessian: 100.0,
            ..stump_config()
        };
        let m = train_boosted_trees(&dataset(&["x"], &rows), &cfg).unwrap();
        assert_eq!(m.trees[0].leaves(), 1);
    }

    #[test]
    fn depth_limits_tree_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<_> = (0..400)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
                let y = rng.gen_bool(if x[0] + x[1] > 1.0 { 0.8 } else { 0.2 });
                (x, y)
            })
            .collect();
        let d = dataset(&["a", "b", "c"], &rows);
        let cfg = TrainConfig {
            rounds: 5,
            max_depth: 2,
            ..TrainConfig::default()
        };
        let m = train_boosted_trees(&d, &cfg).unwrap();
        assert!(m.trees.iter().all(|t| t.leaves() <= 4));
    }

    #[test]
    fn rejects_degenerate_and_bad_config() {
        let rows: Vec<_> = (0..4).map(|i| (vec![i as f64], true)).collect();
        assert!(matches!(
            train_boosted_trees(&dataset(&["x"], &rows), &TrainConfig::default()),
            Err(ModelError::DegenerateData(_))
        ));
        let rows: Vec<_> = (0..4).map(|i| (vec![i as f64], i < 2)).collect();
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train_boosted_trees(&dataset(&["x"], &rows), &bad), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn missing_features_read_as_zero_and_order_is_irrelevant() {
        let m = TreeEnsembleModel::new(
            vec!["a".into(), "b".into()],
            -1.0,
            vec![Tree::stump(0, 0.5, -0.25, 0.75), Tree::stump(1, 2.0, 0.5, -0.5)],
        )
        .unwrap();
        let ab = FeatureVector::from_pairs("t", [("a", 1.0), ("b", 3.0)]).unwrap();
        let ba = FeatureVector::from_pairs("t", [("b", 3.0), ("a", 1.0)]).unwrap();
        assert_eq!(m.score(&ab).unwrap(), m.score(&ba).unwrap());
        let only_b = FeatureVector::from_pairs("t", [("b", 3.0)]).unwrap();
        assert_eq!(m.score(&only_b).unwrap(), sigmoid(-1.0 - 0.25 - 0.5));
        let unknown = FeatureVector::from_pairs("t", [("z", 3.0)]).unwrap();
        assert!(matches!(m.score(&unknown), Err(ModelError::SchemaMismatch(_))));
    }

    #[test]
    fn validate_rejects_cycles_and_unknown_features() {
        let cyclic = Tree {
            nodes: vec![
                TreeNode::Split {
                    feature: 0,
                    threshold: 1.0,
                    left: 0,
                    right: 1,
                },
                TreeNode::Leaf { value: 0.0 },
            ],
        };
        assert!(cyclic.validate(1).is_err());
        assert!(Tree::stump(3, 1.0, 0.0, 0.0).validate(2).is_err());
        assert!(Tree { nodes: vec![] }.validate(1).is_err());
    }
}
