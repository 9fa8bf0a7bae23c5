use super::FeatureError;

/// Mean, median and quartiles of one kind of evidence over a result set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceSummary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Quantile with linear interpolation between order statistics at
/// position `p * (n - 1)`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn evidence_summary(values: &[f64]) -> Result<EvidenceSummary, FeatureError> {
    if values.is_empty() {
        return Err(FeatureError::EmptyResultSet);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EvidenceSummary {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
    })
}
