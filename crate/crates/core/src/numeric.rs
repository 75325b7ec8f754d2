//! Summation and formatting helpers shared by the scoring modules.
//!
//! Every sum that feeds a reported number goes through [`stable_sum`], which
//! sorts its terms before a Neumaier-compensated accumulation. Sorting makes
//! the result independent of input order, so prompt groups processed on
//! different threads, or records read in a different order, produce
//! bit-identical scores.

use std::cmp::Ordering;

/// Neumaier-compensated sum in the order given.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut compensation = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Order-independent compensated sum.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut terms: Vec<f64> = values.into_iter().collect();
    terms.sort_by(f64::total_cmp);
    neumaier_sum(terms)
}

/// Weighted mean `Σ w·x / Σ w`, or `None` when the total weight is not positive.
///
/// Terms are reordered by `(x, w)` before summation so the result does not
/// depend on the order of `pairs`.
pub fn weighted_mean(pairs: &[(f64, f64)]) -> Option<f64> {
    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| match a.1.total_cmp(&b.1) {
        Ordering::Equal => a.0.total_cmp(&b.0),
        other => other,
    });
    let total = neumaier_sum(sorted.iter().map(|&(w, _)| w));
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let weighted = neumaier_sum(sorted.iter().map(|&(w, x)| w * x));
    Some(weighted / total)
}

/// Index of the largest value; ties go to the earliest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Six fractional digits, ties rounded half-to-even, negative zero printed as zero.
pub fn format_fixed6(value: f64) -> String {
    let s = format!("{value:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_exact(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    format!("{value}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let values = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(values), 2.0);
    }

    #[test]
    fn stable_sum_ignores_order() {
        let a = [0.1, 0.2, 0.3, 1e-17, 0.7];
        let b = [0.7, 1e-17, 0.3, 0.1, 0.2];
        assert_eq!(stable_sum(a).to_bits(), stable_sum(b).to_bits());
    }

    #[test]
    fn weighted_mean_basic() {
        assert_eq!(weighted_mean(&[(1.0, 0.8), (3.0, 0.9)]), Some((0.8 + 2.7) / 4.0));
        assert_eq!(weighted_mean(&[(0.0, 0.8)]), None);
        assert_eq!(weighted_mean(&[]), None);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), Some(1));
        assert_eq!(argmax(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn fixed6_rounds_ties_to_even() {
        // 1/128 and 3/128 are exact binary ties at the sixth decimal.
        assert_eq!(format_fixed6(0.0078125), "0.007812");
        assert_eq!(format_fixed6(0.0234375), "0.023438");
        assert_eq!(format_fixed6(0.875848), "0.875848");
        assert_eq!(format_fixed6(-0.0), "0.000000");
        assert_eq!(format_fixed6(-1e-9), "0.000000");
    }

    #[test]
    fn exact_format_round_trips() {
        for v in [70067.0, 0.1, 1.0 / 3.0, 1e-12] {
            let s = format_exact(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
