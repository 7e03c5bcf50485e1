//! Hard-threshold (cut-off) rules for autocovariance entries.

use crate::error::{Error, Result};

/// Threshold rule c(j): a sample autocovariance entry survives only if
/// its magnitude strictly exceeds c(j).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CutRule {
    /// ||j||_2^alpha / prod(n) - delta, with 0^0 taken as 0 so the zero
    /// lag always gets threshold -delta.
    PowerL2 { alpha: f64, delta: f64 },
    /// (max_k |j_k|)^alpha / prod(n) - delta, same zero-lag convention.
    PowerMax { alpha: f64, delta: f64 },
    /// Fixed threshold for every lag.
    Constant { c: f64 },
    /// Never cuts (threshold -inf).
    None,
}

pub const DEFAULT_DELTA: f64 = 0.0001;

impl CutRule {
    pub fn power_l2(alpha: f64) -> Self {
        CutRule::PowerL2 {
            alpha,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CutRule::PowerL2 { alpha, delta } | CutRule::PowerMax { alpha, delta } => {
                if alpha < 0.0 {
                    return Err(Error::invalid("cut exponent alpha must be nonnegative"));
                }
                if delta <= 0.0 {
                    return Err(Error::invalid("cut offset delta must be positive"));
                }
            }
            CutRule::Constant { c } => {
                if !c.is_finite() {
                    return Err(Error::invalid("constant cut threshold must be finite"));
                }
            }
            CutRule::None => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            CutRule::PowerL2 { .. } => "power_l2",
            CutRule::PowerMax { .. } => "power_max",
            CutRule::Constant { .. } => "constant",
            CutRule::None => "none",
        }
    }
}

/// 0^0 = 0 here so the zero lag is never cut at any exponent.
fn pow_zero_aware(base: f64, alpha: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        base.powf(alpha)
    }
}

/// Threshold value for a lag on a grid of the given shape.
pub fn cut_threshold(rule: CutRule, lag: &[i64], shape: &[usize]) -> f64 {
    let sites: f64 = shape.iter().map(|&n| n as f64).product();
    match rule {
        CutRule::PowerL2 { alpha, delta } => {
            let norm = lag
                .iter()
                .map(|&j| (j * j) as f64)
                .sum::<f64>()
                .sqrt();
            pow_zero_aware(norm, alpha) / sites - delta
        }
        CutRule::PowerMax { alpha, delta } => {
            let norm = lag.iter().map(|&j| j.abs()).max().unwrap_or(0) as f64;
            pow_zero_aware(norm, alpha) / sites - delta
        }
        CutRule::Constant { c } => c,
        CutRule::None => f64::NEG_INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_values() {
        let r = CutRule::power_l2(5.8);
        assert_eq!(cut_threshold(r, &[0, 0], &[30, 40]), -0.0001);
        // Independent high-precision evaluation of sqrt(8)^5.8/1200 - 1e-4.
        let v = cut_threshold(r, &[2, 2], &[30, 40]);
        assert!((v - 0.3464610224453272).abs() < 1e-15);
        assert_eq!(cut_threshold(CutRule::None, &[5, 5], &[10, 10]), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_lag_never_cut_at_any_alpha() {
        for &alpha in &[0.0, 0.5, 3.0, 9.4] {
            let r = CutRule::power_l2(alpha);
            assert_eq!(cut_threshold(r, &[0, 0, 0], &[4, 5, 6]), -0.0001);
            let rm = CutRule::PowerMax {
                alpha,
                delta: DEFAULT_DELTA,
            };
            assert_eq!(cut_threshold(rm, &[0, 0, 0], &[4, 5, 6]), -0.0001);
        }
    }

    #[test]
    fn validation() {
        assert!(CutRule::power_l2(-1.0).validate().is_err());
        assert!(CutRule::PowerL2 { alpha: 1.0, delta: 0.0 }.validate().is_err());
        assert!(CutRule::Constant { c: f64::INFINITY }.validate().is_err());
        assert!(CutRule::None.validate().is_ok());
    }
}
