//! CART regression trees with variance-reduction splits.

use rand::seq::SliceRandom;
use rand::Rng;

/// Flat node; leaves have `feature == None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Node {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }
}

/// Nodes in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return n.value,
                Some(f) => i = if row[f] <= n.threshold { n.left } else { n.right },
            }
        }
    }
}

pub(crate) struct TreeConfig {
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    /// Number of samples going left once sorted by the feature.
    left_len: usize,
}

pub(crate) struct Builder<'a, R: Rng> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub cfg: &'a TreeConfig,
    pub rng: &'a mut R,
    /// Summed impurity decrease per feature.
    pub importance: Vec<f64>,
    nodes: Vec<Node>,
}

impl<'a, R: Rng> Builder<'a, R> {
    pub fn new(x: &'a [Vec<f64>], y: &'a [f64], cfg: &'a TreeConfig, rng: &'a mut R) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        Builder {
            x,
            y,
            cfg,
            rng,
            importance: vec![0.0; n_features],
            nodes: Vec::new(),
        }
    }

    pub fn build(mut self, mut samples: Vec<usize>) -> (Tree, Vec<f64>) {
        self.grow(&mut samples, 0);
        (Tree { nodes: self.nodes }, self.importance)
    }

    fn grow(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let n = samples.len() as f64;
        let sum: f64 = samples.iter().map(|&i| self.y[i]).sum();
        self.nodes.push(Node::leaf(sum / n));

        let first = self.y[samples[0]];
        if samples.iter().all(|&i| self.y[i] == first) {
            self.nodes[id].value = first;
            return id;
        }
        let depth_ok = self.cfg.max_depth.map_or(true, |d| depth < d);
        if !depth_ok || samples.len() < 2 * self.cfg.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(samples, sum) else {
            return id;
        };
        self.importance[split.feature] += split.gain;
        let f = split.feature;
        samples.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
        let (l, r) = samples.split_at_mut(split.left_len);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = Some(f);
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        id
    }

    /// Visits features in random order until `mtry` non-constant ones have
    /// been evaluated, keeping the split with the largest SSE reduction.
    fn best_split(&mut self, samples: &[usize], sum: f64) -> Option<Split> {
        let n_features = self.importance.len();
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(self.rng);
        let n = samples.len();
        let parent = sum * sum / n as f64;
        let mut best: Option<Split> = None;
        let mut evaluated = 0;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in order {
            if evaluated >= self.cfg.mtry {
                break;
            }
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            evaluated += 1;
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += pairs[k].1;
                let left_len = k + 1;
                if pairs[k].0 == pairs[k + 1].0 || left_len < self.cfg.min_leaf || n - left_len < self.cfg.min_leaf {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / left_len as f64
                    + right_sum * right_sum / (n - left_len) as f64
                    - parent;
                if best.as_ref().map_or(true, |b| gain > b.gain) {
                    let mut threshold = pairs[k].0 + (pairs[k + 1].0 - pairs[k].0) / 2.0;
                    // guard against midpoint rounding up to the right value
                    if threshold >= pairs[k + 1].0 {
                        threshold = pairs[k].0;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                        left_len,
                    });
                }
            }
        }
        best.filter(|s| s.gain > 1e-12 * (1.0 + parent.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fit(x: &[Vec<f64>], y: &[f64], min_leaf: usize, max_depth: Option<usize>) -> Tree {
        let cfg = TreeConfig {
            mtry: x[0].len(),
            min_leaf,
            max_depth,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Builder::new(x, y, &cfg, &mut rng).build((0..x.len()).collect()).0
    }

    /// Best single threshold on one feature by exhaustive search.
    fn stump_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for &t in x {
            let (l, r): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&i| x[i] <= t);
            if l.is_empty() || r.is_empty() {
                continue;
            }
            let sse = |idx: &[usize]| {
                let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
                idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
            };
            let s = sse(&l) + sse(&r);
            if s < best.0 {
                best = (s, t);
            }
        }
        best
    }

    #[test]
    fn stump_matches_exhaustive_search() {
        let xs: Vec<f64> = vec![3.0, 1.0, 7.0, 9.0, 4.0, 6.0, 2.0, 8.0];
        let y: Vec<f64> = vec![0.1, 0.0, 1.0, 0.9, 0.2, 0.8, 0.1, 1.0];
        let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let t = fit(&x, &y, 1, Some(1));
        let (_, cut) = stump_oracle(&xs, &y);
        let root = &t.nodes[0];
        assert_eq!(root.feature, Some(0));
        // the oracle's cut is the largest left value; ours is the midpoint
        assert!(root.threshold >= cut && root.threshold < 6.0);
        assert_eq!(t.nodes.len(), 3);
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| (i % 3) as f64).collect();
        let t = fit(&x, &y, 5, None);
        for n in t.nodes.iter().filter(|n| n.feature.is_none()) {
            let count = x.iter().filter(|r| {
                let mut i = 0;
                while let Some(f) = t.nodes[i].feature {
                    i = if r[f] <= t.nodes[i].threshold { t.nodes[i].left } else { t.nodes[i].right };
                }
                std::ptr::eq(&t.nodes[i], n)
            }).count();
            assert!(count >= 5);
        }
    }

    #[test]
    fn constant_features_make_a_leaf() {
        let x = vec![vec![1.0, 2.0]; 6];
        let y = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let t = fit(&x, &y, 1, None);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].value, 0.5);
    }
}
