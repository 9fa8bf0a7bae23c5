//! Bagged regression forest and its flat-file form.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{Builder, Node, Tree, TreeConfig};
use super::LtrError;
use crate::tsv::{self, ReadError};

const FORMAT_HEADER: &str = "archive-rank-forest v1";

/// Number of candidate features per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mtry {
    Sqrt,
    Third,
    Fixed(usize),
}

impl Mtry {
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features.max(1);
        let k = match self {
            Mtry::Sqrt => (n as f64).sqrt().ceil() as usize,
            Mtry::Third => n.div_ceil(3),
            Mtry::Fixed(k) => k,
        };
        k.clamp(1, n)
    }
}

impl fmt::Display for Mtry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mtry::Sqrt => f.write_str("sqrt"),
            Mtry::Third => f.write_str("third"),
            Mtry::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Mtry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqrt" => Ok(Mtry::Sqrt),
            "third" => Ok(Mtry::Third),
            _ => s
                .parse()
                .ok()
                .filter(|k| *k > 0)
                .map(Mtry::Fixed)
                .ok_or_else(|| format!("bad features_per_split {s:?} (sqrt, third or a positive count)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub num_trees: usize,
    pub bootstrap_fraction: f64,
    pub features_per_split: Mtry,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            num_trees: 300,
            bootstrap_fraction: 1.0,
            features_per_split: Mtry::Sqrt,
            min_leaf: 1,
            max_depth: None,
            seed: 0,
        }
    }
}

impl fmt::Display for ForestParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let depth = self.max_depth.map_or("none".to_string(), |d| d.to_string());
        write!(
            f,
            "num_trees={} bootstrap_fraction={} features_per_split={} min_leaf={} max_depth={} seed={}",
            self.num_trees, self.bootstrap_fraction, self.features_per_split, self.min_leaf, depth, self.seed
        )
    }
}

impl FromStr for ForestParams {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = ForestParams::default();
        for kv in s.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad parameter {kv:?}"))?;
            let bad = || format!("bad value for {k}: {v:?}");
            match k {
                "num_trees" => p.num_trees = v.parse().map_err(|_| bad())?,
                "bootstrap_fraction" => p.bootstrap_fraction = v.parse().map_err(|_| bad())?,
                "features_per_split" => p.features_per_split = v.parse()?,
                "min_leaf" => p.min_leaf = v.parse().map_err(|_| bad())?,
                "max_depth" => p.max_depth = if v == "none" { None } else { Some(v.parse().map_err(|_| bad())?) },
                "seed" => p.seed = v.parse().map_err(|_| bad())?,
                _ => return Err(format!("unknown parameter {k}")),
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Impurity decrease per feature, normalized to sum to 1 (all zeros
    /// when no tree split).
    pub importance: Vec<f64>,
}

/// Fits one tree per index on its own bootstrap sample. Tree `i` draws from
/// stream `i` of the master seed, so the result does not depend on how the
/// trees are scheduled.
pub fn train_forest(
    rows: &[Vec<f64>],
    labels: &[f64],
    feature_names: &[String],
    params: &ForestParams,
) -> Result<Forest, LtrError> {
    if rows.is_empty() {
        return Err(LtrError::NoExamples);
    }
    if rows.len() != labels.len() {
        return Err(LtrError::LabelCount(rows.len(), labels.len()));
    }
    let n_features = feature_names.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
        return Err(LtrError::Dimension {
            expected: n_features,
            got: bad.len(),
        });
    }
    if params.num_trees == 0 || params.min_leaf == 0 || !(params.bootstrap_fraction > 0.0) {
        return Err(LtrError::BadParams(params.to_string()));
    }
    let cfg = TreeConfig {
        mtry: params.features_per_split.resolve(n_features),
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
    };
    let draws = ((rows.len() as f64 * params.bootstrap_fraction).round() as usize).max(1);

    let fitted: Vec<(Tree, Vec<f64>)> = (0..params.num_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let samples: Vec<usize> = (0..draws).map(|_| rng.gen_range(0..rows.len())).collect();
            Builder::new(rows, labels, &cfg, &mut rng).build(samples)
        })
        .collect();

    let mut importance = vec![0.0; n_features];
    let mut trees = Vec::with_capacity(fitted.len());
    for (tree, imp) in fitted {
        importance.iter_mut().zip(&imp).for_each(|(a, b)| *a += b);
        trees.push(tree);
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    Ok(Forest {
        params: *params,
        feature_names: feature_names.to_vec(),
        trees,
        importance,
    })
}

impl Forest {
    pub fn predict(&self, row: &[f64]) -> Result<f64, LtrError> {
        if row.len() != self.feature_names.len() {
            return Err(LtrError::Dimension {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Features by descending importance, ties in declared order.
    pub fn ranked_importance(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(usize, f64)> = self.importance.iter().copied().enumerate().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter().map(|(i, s)| (self.feature_names[i].as_str(), s)).collect()
    }
}

pub fn write_forest(w: &mut dyn Write, forest: &Forest) -> io::Result<()> {
    writeln!(w, "{FORMAT_HEADER}")?;
    writeln!(w, "params {}", forest.params)?;
    writeln!(w, "features {} {}", forest.feature_names.len(), forest.feature_names.join(" "))?;
    let imp: Vec<String> = forest.importance.iter().map(|v| v.to_string()).collect();
    writeln!(w, "importance {}", imp.join(" "))?;
    for (t, tree) in forest.trees.iter().enumerate() {
        writeln!(w, "tree {t} {}", tree.nodes.len())?;
        for (id, n) in tree.nodes.iter().enumerate() {
            match n.feature {
                Some(f) => writeln!(w, "{id} {f} {} {} {} {}", n.threshold, n.left, n.right, n.value)?,
                None => writeln!(w, "{id} -1 0 -1 -1 {}", n.value)?,
            }
        }
    }
    Ok(())
}

pub fn read_forest(path: &Path) -> Result<Forest, ReadError> {
    let lines = tsv::read_lines(path)?;
    let err = |no: usize, reason: &str| ReadError::malformed(path, no, reason);
    let mut it = lines.iter();
    let mut next = |what: &str| it.next().ok_or_else(|| err(0, &format!("missing {what}")));

    let (no, header) = next("header")?;
    if header != FORMAT_HEADER {
        return Err(err(*no, "unsupported forest format"));
    }
    let (no, line) = next("params")?;
    let params: ForestParams = line
        .strip_prefix("params ")
        .ok_or_else(|| err(*no, "expected params line"))?
        .parse()
        .map_err(|e: String| err(*no, &e))?;
    let (no, line) = next("features")?;
    let mut f = line
        .strip_prefix("features ")
        .ok_or_else(|| err(*no, "expected features line"))?
        .split(' ');
    let count: usize = f.next().and_then(|c| c.parse().ok()).ok_or_else(|| err(*no, "bad feature count"))?;
    let feature_names: Vec<String> = f.map(String::from).collect();
    if feature_names.len() != count {
        return Err(err(*no, "feature count disagrees with names"));
    }
    let (no, line) = next("importance")?;
    let importance = line
        .strip_prefix("importance")
        .ok_or_else(|| err(*no, "expected importance line"))?
        .split_whitespace()
        .map(|v| v.parse::<f64>().map_err(|_| err(*no, "bad importance value")))
        .collect::<Result<Vec<_>, _>>()?;
    if importance.len() != count {
        return Err(err(*no, "importance length disagrees with features"));
    }

    let mut trees = Vec::new();
    while let Ok((no, line)) = next("tree") {
        let parts: Vec<&str> = line.split(' ').collect();
        let n_nodes: usize = match parts.as_slice() {
            ["tree", idx, n] if idx.parse() == Ok(trees.len()) => n.parse().map_err(|_| err(*no, "bad node count"))?,
            _ => return Err(err(*no, "expected tree header")),
        };
        let mut nodes = Vec::with_capacity(n_nodes);
        for id in 0..n_nodes {
            let (no, line) = next("node")?;
            let p: Vec<&str> = line.split(' ').collect();
            if p.len() != 6 || p[0].parse() != Ok(id) {
                return Err(err(*no, "bad node line"));
            }
            let feature: i64 = p[1].parse().map_err(|_| err(*no, "bad feature index"))?;
            let value: f64 = p[5].parse().map_err(|_| err(*no, "bad leaf value"))?;
            if feature < 0 {
                nodes.push(Node { feature: None, threshold: 0.0, left: 0, right: 0, value });
                continue;
            }
            let feature = feature as usize;
            let threshold: f64 = p[2].parse().map_err(|_| err(*no, "bad threshold"))?;
            let (Ok(left), Ok(right)) = (p[3].parse::<usize>(), p[4].parse::<usize>()) else {
                return Err(err(*no, "bad child index"));
            };
            if feature >= count || left >= n_nodes || right >= n_nodes || left <= id || right <= id {
                return Err(err(*no, "node refers outside the tree"));
            }
            nodes.push(Node { feature: Some(feature), threshold, left, right, value });
        }
        trees.push(Tree { nodes });
    }
    if trees.len() != params.num_trees {
        return Err(err(0, "tree count disagrees with params"));
    }
    Ok(Forest {
        params,
        feature_names,
        trees,
        importance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn params(trees: usize, seed: u64) -> ForestParams {
        ForestParams {
            num_trees: trees,
            seed,
            ..ForestParams::default()
        }
    }

    /// x in 0..=10, ten copies each; label 1 iff x > 5.
    fn step_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..110).map(|i| vec![(i % 11) as f64]).collect();
        let y = x.iter().map(|r| if r[0] > 5.0 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn constant_labels_predict_constant() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let f = train_forest(&x, &[0.7; 10], &names(2), &params(10, 1)).unwrap();
        for r in &x {
            assert!((f.predict(r).unwrap() - 0.7).abs() < 1e-12);
            assert!(f.trees.iter().all(|t| t.predict(r) == 0.7));
        }
    }

    #[test]
    fn threshold_data_is_learned() {
        let (x, y) = step_data();
        let f = train_forest(&x, &y, &names(1), &params(50, 3)).unwrap();
        // an exhaustive single-threshold stump separates the data perfectly
        let xs: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let stump = (0..=10)
            .map(f64::from)
            .min_by_key(|&t| xs.iter().zip(&y).filter(|(v, l)| (**v > t) != (**l > 0.5)).count())
            .unwrap();
        assert_eq!(stump, 5.0);
        for (r, l) in x.iter().zip(&y) {
            assert!((f.predict(r).unwrap() - l).abs() < 0.05, "{r:?}");
        }
    }

    #[test]
    fn predictions_average_trees() {
        let (x, y) = step_data();
        let mut f = train_forest(&x, &y, &names(1), &params(2, 0)).unwrap();
        f.trees[0].nodes = vec![Node { feature: None, threshold: 0.0, left: 0, right: 0, value: 0.0 }];
        f.trees[1].nodes = vec![Node { feature: None, threshold: 0.0, left: 0, right: 0, value: 1.0 }];
        assert_eq!(f.predict(&[3.0]).unwrap(), 0.5);
        f.trees.truncate(1);
        assert_eq!(f.predict(&[3.0]).unwrap(), 0.0);
        assert!(matches!(f.predict(&[1.0, 2.0]), Err(LtrError::Dimension { expected: 1, got: 2 })));
    }

    #[test]
    fn tree_order_does_not_matter() {
        let (x, y) = step_data();
        let f = train_forest(&x, &y, &names(1), &params(20, 9)).unwrap();
        let mut g = f.clone();
        g.trees.reverse();
        for r in &x {
            assert!((f.predict(r).unwrap() - g.predict(r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic_across_pools() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i * 13 % 11) as f64, i as f64]).collect();
        let y: Vec<f64> = (0..60).map(|i| ((i % 5) as f64) / 4.0).collect();
        let a = train_forest(&x, &y, &names(3), &params(16, 5)).unwrap();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = serial.install(|| train_forest(&x, &y, &names(3), &params(16, 5)).unwrap());
        assert_eq!(a, b);
        let c = train_forest(&x, &y, &names(3), &params(16, 6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(matches!(train_forest(&[], &[], &names(1), &params(1, 0)), Err(LtrError::NoExamples)));
    }

    #[test]
    fn mse_does_not_grow_with_more_trees() {
        // averaged over seeds, more trees fit the training set at least as well
        let x: Vec<Vec<f64>> = (0..80).map(|i| vec![(i % 9) as f64, ((i * 7) % 13) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] * 0.3 + r[1] * 0.1).sin()).collect();
        let mse = |trees: usize| -> f64 {
            (0..20)
                .map(|seed| {
                    let p = ForestParams { num_trees: trees, min_leaf: 5, seed, ..ForestParams::default() };
                    let f = train_forest(&x, &y, &names(2), &p).unwrap();
                    x.iter().zip(&y).map(|(r, l)| (f.predict(r).unwrap() - l).powi(2)).sum::<f64>() / x.len() as f64
                })
                .sum::<f64>()
                / 20.0
        };
        let (m1, m10, m40) = (mse(1), mse(10), mse(40));
        assert!(m10 <= m1 && m40 <= m10 * 1.02, "{m1} {m10} {m40}");
    }

    #[test]
    fn file_round_trip_is_exact() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sqrt(), (i % 4) as f64 / 3.0]).collect();
        let y: Vec<f64> = (0..30).map(|i| 1.0 / (1 + i % 6) as f64).collect();
        let f = train_forest(&x, &y, &names(2), &ForestParams { num_trees: 7, max_depth: Some(4), ..params(7, 2) }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.txt");
        tsv::write_atomic(&path, |w| write_forest(w, &f)).unwrap();
        assert_eq!(read_forest(&path).unwrap(), f);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("tree 6", "tree 9")).unwrap();
        assert!(read_forest(&path).is_err());
    }

    #[test]
    fn mtry_rules() {
        assert_eq!(Mtry::Sqrt.resolve(33), 6);
        assert_eq!(Mtry::Third.resolve(33), 11);
        assert_eq!(Mtry::Fixed(50).resolve(33), 33);
        assert_eq!("third".parse::<Mtry>().unwrap(), Mtry::Third);
        assert!("0".parse::<Mtry>().is_err());
    }
}
