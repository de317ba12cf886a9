//! Growth function: exact dichotomy counts and Sauer's bound.

use std::collections::BTreeSet;

use super::InfoError;

/// `ln` of Sauer's bound: `n ln 2` for `n <= d`, else `d ln(e n / d)`.
pub fn sauer_log_growth_bound(n: u64, vc_dim: u64) -> Result<f64, InfoError> {
    if vc_dim == 0 {
        return Err(InfoError::InvalidArgument("VC dimension must be at least 1".into()));
    }
    let (n, d) = (n as f64, vc_dim as f64);
    Ok(if n <= d {
        n * std::f64::consts::LN_2
    } else {
        d * (1.0 + (n / d).ln())
    })
}

/// `2^n` for `n <= d`, `(e n / d)^d` otherwise; may be `inf` for huge inputs.
pub fn sauer_growth_bound(n: u64, vc_dim: u64) -> Result<f64, InfoError> {
    if vc_dim == 0 {
        return Err(InfoError::InvalidArgument("VC dimension must be at least 1".into()));
    }
    if n <= vc_dim {
        return Ok(2f64.powi(n.min(i32::MAX as u64) as i32));
    }
    let d = vc_dim as f64;
    Ok((std::f64::consts::E * n as f64 / d).powf(d))
}

/// Number of distinct labelings of `points` realized by `class`.
pub fn exact_dichotomy_count<P, H, F>(points: &[P], class: &[H], predict: F) -> usize
where
    F: Fn(&H, &P) -> bool,
{
    class
        .iter()
        .map(|h| points.iter().map(|p| predict(h, p)).collect::<Vec<bool>>())
        .collect::<BTreeSet<_>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sauer_examples() {
        assert_eq!(sauer_growth_bound(2, 3).unwrap(), 4.0);
        assert_eq!(sauer_growth_bound(3, 3).unwrap(), 8.0);
        assert!((sauer_growth_bound(10, 3).unwrap() - 743.908_774_932_876_6).abs() < 1e-9);
        assert!((sauer_log_growth_bound(10, 3).unwrap() - 743.908_774_932_876_6f64.ln()).abs() < 1e-12);
        assert!(sauer_growth_bound(4, 0).is_err());
    }

    #[test]
    fn dichotomy_examples() {
        let both = [false, true];
        assert_eq!(exact_dichotomy_count(&[0.0], &both, |h, _| *h), 2);
        // thresholds x >= t on three points realize 4 monotone patterns
        let points = [1.0, 2.0, 3.0];
        let thresholds = [0.5, 1.5, 2.5, 3.5, 10.0, -4.0];
        assert_eq!(exact_dichotomy_count(&points, &thresholds, |t, x| x >= t), 4);
    }

    proptest! {
        #[test]
        fn intervals_obey_sauer(points in proptest::collection::vec(-10i32..10, 1..9)) {
            // intervals [a, b] on the line have VC dimension 2
            let grid: Vec<(i32, i32)> = (-11..=11).flat_map(|a| (a..=11).map(move |b| (a, b))).collect();
            let mut class = grid;
            class.push((1, 0)); // empty interval
            let count = exact_dichotomy_count(&points, &class, |&(a, b), &x| a <= x && x <= b);
            prop_assert!(count as f64 <= sauer_growth_bound(points.len() as u64, 2).unwrap());
        }
    }
}
