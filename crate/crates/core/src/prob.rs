//! Small helpers for probability vectors.

use crate::error::{Result, RscError};

/// Rows whose mass is within this distance of one are rescaled; anything
/// further off is rejected.
pub const RENORMALIZE_TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Validates `row` as a probability vector, rescaling it in place when the
/// total mass is off by at most [`RENORMALIZE_TOL`].
pub fn normalize_distribution(row: &mut [f64], what: &str) -> Result<()> {
    if row.is_empty() {
        return Err(RscError::Invalid(format!("{what}: empty distribution")));
    }
    for &p in row.iter() {
        if !p.is_finite() {
            return Err(RscError::NonFinite(format!("{what}: entry {p}")));
        }
        if p < 0.0 {
            return Err(RscError::Invalid(format!("{what}: negative entry {p}")));
        }
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(RscError::Invalid(format!("{what}: mass {total} is not 1")));
    }
    if total != 1.0 {
        row.iter_mut().for_each(|p| *p /= total);
    }
    Ok(())
}

/// Checks without modifying; used where inputs are borrowed.
pub fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    let mut copy = row.to_vec();
    normalize_distribution(&mut copy, what)
}

/// Total-variation distance ½‖p − q‖₁.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescales_small_drift() {
        let mut row = vec![0.5, 0.5 + 1e-10];
        normalize_distribution(&mut row, "row").unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_large_drift_and_negatives() {
        assert!(normalize_distribution(&mut [0.5, 0.6], "row").is_err());
        assert!(normalize_distribution(&mut [1.5, -0.5], "row").is_err());
        assert!(normalize_distribution(&mut [], "row").is_err());
        assert!(normalize_distribution(&mut [f64::NAN, 1.0], "row").is_err());
    }

    #[test]
    fn ties_break_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmin(&[2.0, 0.0, 0.0]), 1);
    }
}
