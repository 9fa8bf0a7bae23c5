//! Information gain of discretized features against binarized labels.

const BINS: usize = 10;

fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Cut points of `bins` equal-frequency bins, duplicates merged.
pub fn equal_frequency_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..bins)
        .map(|i| (i * n).div_ceil(bins))
        .filter(|&idx| idx < n)
        .map(|idx| sorted[idx])
        .collect();
    cuts.dedup();
    cuts
}

/// `H(Y) - H(Y | bin(x))` in bits with `Y = label > 0`.
pub fn information_gain(values: &[f64], labels: &[f64]) -> f64 {
    let cuts = equal_frequency_cuts(values, BINS);
    let mut table = vec![[0usize; 2]; cuts.len() + 1];
    let mut overall = [0usize; 2];
    for (&x, &y) in values.iter().zip(labels) {
        let bin = cuts.partition_point(|&c| c <= x);
        let cls = usize::from(y > 0.0);
        table[bin][cls] += 1;
        overall[cls] += 1;
    }
    let n = values.len() as f64;
    let conditional: f64 = table
        .iter()
        .map(|c| (c[0] + c[1]) as f64 / n * entropy(c))
        .sum();
    (entropy(&overall) - conditional).max(0.0)
}

/// Features by descending information gain; ties keep declared order.
pub fn information_gain_ranking(names: &[String], rows: &[Vec<f64>], labels: &[f64]) -> Vec<(String, f64)> {
    let mut ranked: Vec<(usize, f64)> = (0..names.len())
        .map(|f| {
            let column: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            (f, information_gain(&column, labels))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(f, ig)| (names[f].clone(), ig)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let labels: Vec<f64> = (0..20).map(|i| f64::from(i % 2 == 0)).collect();
        assert_eq!(information_gain(&[3.0; 20], &labels), 0.0);
        assert!((information_gain(&labels, &labels) - 1.0).abs() < 1e-12);
        let names = vec!["const".to_string(), "same".to_string()];
        let rows: Vec<Vec<f64>> = labels.iter().map(|&l| vec![1.0, l]).collect();
        let r = information_gain_ranking(&names, &rows, &labels);
        assert_eq!(r[0].0, "same");
    }

    #[test]
    fn cuts_are_equal_frequency() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(equal_frequency_cuts(&v, 10), [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0]);
        assert_eq!(equal_frequency_cuts(&[0.0, 0.0, 0.0, 1.0], 10), [0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn bounded_by_label_entropy(rows in proptest::collection::vec((0.0f64..5.0, 0u8..3), 2..60)) {
            let (x, y): (Vec<f64>, Vec<f64>) = rows.into_iter().map(|(x, y)| (x, y as f64)).unzip();
            let pos = y.iter().filter(|&&l| l > 0.0).count();
            let h = entropy(&[pos, y.len() - pos]);
            let ig = information_gain(&x, &y);
            prop_assert!(ig >= 0.0 && ig <= h + 1e-12);
        }
    }
}
