//! Ranked-retrieval metrics and paired significance tests.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired observations, got {0}")]
    TooFewPairs(usize),
}

/// One query's ranking with graded labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRun {
    pub query_id: u32,
    /// Descending score, ties by ascending doc id.
    pub docs: Vec<(String, f64)>,
    pub labels: HashMap<String, f64>,
}

impl RankedRun {
    pub fn new(query_id: u32, mut scored: Vec<(String, f64)>, labels: HashMap<String, f64>) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        RankedRun {
            query_id,
            docs: scored,
            labels,
        }
    }

    /// Labels in run order; unlabeled documents count as 0.
    pub fn ranked_labels(&self) -> Vec<f64> {
        self.docs
            .iter()
            .map(|(d, _)| self.labels.get(d).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn precision_at_k(&self, k: usize) -> f64 {
        precision_at_k(&self.ranked_labels(), k)
    }

    pub fn ndcg_at_k(&self, k: usize) -> f64 {
        let all: Vec<f64> = self.labels.values().copied().collect();
        ndcg_at_k(&self.ranked_labels(), &all, k)
    }

    pub fn average_precision(&self) -> f64 {
        average_precision(&self.ranked_labels())
    }
}

/// Relevant documents among the top `k`, over `k`; missing slots are non-relevant.
pub fn precision_at_k(ranked_labels: &[f64], k: usize) -> f64 {
    assert!(k >= 1, "precision cut-off must be at least 1");
    ranked_labels.iter().take(k).filter(|&&l| l > 0.0).count() as f64 / k as f64
}

fn dcg(labels: impl Iterator<Item = f64>) -> f64 {
    labels
        .enumerate()
        .map(|(i, rel)| (2f64.powf(rel) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG with gain `2^rel - 1`; the ideal ordering sorts `all_labels`
/// descending. 0 when the ideal DCG is 0.
pub fn ndcg_at_k(ranked_labels: &[f64], all_labels: &[f64], k: usize) -> f64 {
    assert!(k >= 1, "NDCG cut-off must be at least 1");
    let mut ideal = all_labels.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg <= 0.0 {
        return 0.0;
    }
    dcg(ranked_labels.iter().copied().take(k)) / idcg
}

/// Mean of precision at each relevant rank; 0 without relevant documents.
pub fn average_precision(ranked_labels: &[f64]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &l) in ranked_labels.iter().enumerate() {
        if l > 0.0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn mean_average_precision(runs: &[RankedRun]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().map(RankedRun::average_precision).sum::<f64>() / runs.len() as f64
}

/// Per-query values of the reported metrics, in run order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerQueryMetrics {
    pub query_ids: Vec<u32>,
    pub p1: Vec<f64>,
    pub p10: Vec<f64>,
    pub ndcg10: Vec<f64>,
    pub ap: Vec<f64>,
}

impl PerQueryMetrics {
    pub fn of(runs: &[RankedRun]) -> Self {
        let mut m = PerQueryMetrics::default();
        for r in runs {
            m.query_ids.push(r.query_id);
            m.p1.push(r.precision_at_k(1));
            m.p10.push(r.precision_at_k(10));
            m.ndcg10.push(r.ndcg_at_k(10));
            m.ap.push(r.average_precision());
        }
        m
    }

    /// `(P@1, P@10, NDCG@10, MAP)` averaged over queries.
    pub fn means(&self) -> [f64; 4] {
        [mean(&self.p1), mean(&self.p10), mean(&self.ndcg10), mean(&self.ap)]
    }

    pub fn by_name(&self, metric: &str) -> Option<&[f64]> {
        match metric {
            "P@1" => Some(&self.p1),
            "P@10" => Some(&self.p10),
            "NDCG@10" => Some(&self.ndcg10),
            "MAP" => Some(&self.ap),
            _ => None,
        }
    }
}

pub const REPORTED_METRICS: [&str; 4] = ["P@1", "P@10", "NDCG@10", "MAP"];

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Significance {
    pub t: f64,
    pub p: f64,
    /// Differences had zero variance but a nonzero mean.
    pub degenerate: bool,
}

fn check_pairs(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooFewPairs(a.len()));
    }
    Ok(())
}

/// Two-sided paired t-test on `a - b` with `n - 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<Significance, MetricError> {
    check_pairs(a, b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if m == 0.0 {
            Significance { t: 0.0, p: 1.0, degenerate: false }
        } else {
            Significance {
                t: m.signum() * f64::INFINITY,
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = m / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("degrees of freedom are positive");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(Significance { t, p, degenerate: false })
}

/// Two-sided sign-flip permutation test on the mean paired difference.
pub fn permutation_test(a: &[f64], b: &[f64], draws: usize, seed: u64) -> Result<f64, MetricError> {
    check_pairs(a, b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = d.iter().sum::<f64>().abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extreme = (0..draws)
        .filter(|_| {
            let s: f64 = d.iter().map(|x| if rng.gen::<bool>() { *x } else { -*x }).sum();
            s.abs() >= observed - 1e-12
        })
        .count();
    Ok((extreme + 1) as f64 / (draws + 1) as f64)
}

/// `system,P@1,P@10,NDCG@10,MAP`
pub fn write_eval_csv(w: &mut dyn Write, systems: &[(String, PerQueryMetrics)]) -> io::Result<()> {
    writeln!(w, "system,{}", REPORTED_METRICS.join(","))?;
    for (name, m) in systems {
        let [p1, p10, ndcg, map] = m.means();
        writeln!(w, "{name},{p1:.4},{p10:.4},{ndcg:.4},{map:.4}")?;
    }
    Ok(())
}

/// One row per (system, baseline, metric) with the paired t-test.
#[derive(Debug, Clone, PartialEq)]
pub struct SigRow {
    pub system: String,
    pub baseline: String,
    pub metric: String,
    pub sig: Significance,
}

pub fn write_sig_csv(w: &mut dyn Write, rows: &[SigRow]) -> io::Result<()> {
    writeln!(w, "system,baseline,metric,t,p_value")?;
    for r in rows {
        writeln!(w, "{},{},{},{:.6},{:.6e}", r.system, r.baseline, r.metric, r.sig.t, r.sig.p)?;
    }
    Ok(())
}
