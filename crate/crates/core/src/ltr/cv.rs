//! Query-grouped k-fold cross-validation with NDCG@10 model selection.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forest::{train_forest, Forest, ForestParams, Mtry};
use super::{Dataset, LtrError};
use crate::metrics::RankedRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub min_leaf: usize,
    pub features_per_split: Mtry,
}

impl GridPoint {
    fn apply(&self, base: &ForestParams) -> ForestParams {
        ForestParams {
            min_leaf: self.min_leaf,
            features_per_split: self.features_per_split,
            ..*base
        }
    }
}

/// `{min_leaf 1, 5} x {sqrt, third}`, in that order.
pub fn default_grid() -> Vec<GridPoint> {
    let mut g = Vec::new();
    for min_leaf in [1, 5] {
        for features_per_split in [Mtry::Sqrt, Mtry::Third] {
            g.push(GridPoint {
                min_leaf,
                features_per_split,
            });
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Query ids of each fold.
    pub folds: Vec<Vec<u32>>,
    pub grid: Vec<GridPoint>,
    /// `fold_ndcg[p][f]`: mean held-out NDCG@10 of grid point `p` on fold `f`.
    pub fold_ndcg: Vec<Vec<f64>>,
    pub mean_ndcg: Vec<f64>,
    pub selected: usize,
    pub selected_params: ForestParams,
    /// Held-out prediction of every row under the selected grid point.
    pub heldout: Vec<f64>,
}

/// Shuffles the distinct query ids with the seed and deals them round-robin.
pub fn assign_folds(query_ids: &[u32], k: usize, seed: u64) -> HashMap<u32, usize> {
    let mut ids: Vec<u32> = query_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.into_iter().enumerate().map(|(i, q)| (q, i % k)).collect()
}

fn mean_ndcg(data: &Dataset, groups: &BTreeMap<u32, Vec<usize>>, queries: &[u32], pred: &[f64]) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let total: f64 = queries
        .iter()
        .map(|q| {
            let rows = &groups[q];
            let scored = rows.iter().map(|&i| (data.doc_ids[i].clone(), pred[i])).collect();
            let labels = rows.iter().map(|&i| (data.doc_ids[i].clone(), data.labels[i])).collect();
            RankedRun::new(*q, scored, labels).ndcg_at_k(10)
        })
        .sum();
    total / queries.len() as f64
}

/// Evaluates every grid point on `k` query folds, selects the best mean
/// held-out NDCG@10 (ties go to the earlier point) and retrains it on all rows.
pub fn cross_validate(
    data: &Dataset,
    grid: &[GridPoint],
    base: &ForestParams,
    k: usize,
    seed: u64,
) -> Result<(CvReport, Forest), LtrError> {
    if grid.is_empty() {
        return Err(LtrError::EmptyGrid);
    }
    let groups = data.query_groups();
    if groups.len() < k || k < 2 {
        return Err(LtrError::TooFewQueries {
            folds: k,
            queries: groups.len(),
        });
    }
    let qids: Vec<u32> = groups.keys().copied().collect();
    let fold_of = assign_folds(&qids, k, seed);
    let mut folds: Vec<Vec<u32>> = vec![Vec::new(); k];
    for q in &qids {
        folds[fold_of[q]].push(*q);
    }

    let mut fold_ndcg = Vec::with_capacity(grid.len());
    let mut predictions = Vec::with_capacity(grid.len());
    for point in grid {
        let params = point.apply(base);
        let mut pred = vec![0.0; data.len()];
        let mut per_fold = Vec::with_capacity(k);
        for (f, fold_queries) in folds.iter().enumerate() {
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| fold_of[&data.query_ids[i]] != f);
            let rows: Vec<Vec<f64>> = train.iter().map(|&i| data.rows[i].clone()).collect();
            let labels: Vec<f64> = train.iter().map(|&i| data.labels[i]).collect();
            let forest = train_forest(&rows, &labels, &data.feature_names, &params)?;
            for &i in &test {
                pred[i] = forest.predict(&data.rows[i])?;
            }
            per_fold.push(mean_ndcg(data, &groups, fold_queries, &pred));
        }
        fold_ndcg.push(per_fold);
        predictions.push(pred);
    }
    let mean: Vec<f64> = fold_ndcg.iter().map(|f| f.iter().sum::<f64>() / k as f64).collect();
    let mut selected = 0;
    for (i, m) in mean.iter().enumerate() {
        if *m > mean[selected] {
            selected = i;
        }
    }
    let selected_params = grid[selected].apply(base);
    let forest = train_forest(&data.rows, &data.labels, &data.feature_names, &selected_params)?;
    let report = CvReport {
        folds,
        grid: grid.to_vec(),
        fold_ndcg,
        mean_ndcg: mean,
        selected,
        selected_params,
        heldout: predictions.swap_remove(selected),
    };
    Ok((report, forest))
}

/// Tab-separated: grid point, its parameters, NDCG@10 per fold, mean, selected flag.
pub fn write_cv_report(w: &mut dyn Write, report: &CvReport) -> io::Result<()> {
    let folds: Vec<String> = (0..report.folds.len()).map(|f| format!("fold{f}")).collect();
    writeln!(w, "point\tmin_leaf\tfeatures_per_split\t{}\tmean_ndcg10\tselected", folds.join("\t"))?;
    for (p, point) in report.grid.iter().enumerate() {
        let per_fold: Vec<String> = report.fold_ndcg[p].iter().map(|v| format!("{v:.6}")).collect();
        writeln!(
            w,
            "{p}\t{}\t{}\t{}\t{:.6}\t{}",
            point.min_leaf,
            point.features_per_split,
            per_fold.join("\t"),
            report.mean_ndcg[p],
            u8::from(p == report.selected)
        )?;
    }
    for (f, qs) in report.folds.iter().enumerate() {
        let ids: Vec<String> = qs.iter().map(u32::to_string).collect();
        writeln!(w, "# fold{f} queries {}", ids.join(","))?;
    }
    Ok(())
}
