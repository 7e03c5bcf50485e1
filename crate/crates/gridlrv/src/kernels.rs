//! Lag-weight sequences.
//!
//! Every kernel satisfies: the weight at fixed lag tends to 1 as the
//! truncation grows, and weights are uniformly bounded. Product form
//! across axes extends the one-dimensional sequences to q dimensions.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Weight-sequence choice; `bandwidth_bw` applies only to the
/// quadratic spectral kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    Constant,
    Bartlett,
    TukeyHanning,
    QuadraticSpectral { bandwidth_bw: f64 },
}

impl KernelSpec {
    /// Parses the CLI/config names.
    pub fn from_name(name: &str, bandwidth_bw: f64) -> Result<Self> {
        match name {
            "constant" => Ok(KernelSpec::Constant),
            "bartlett" => Ok(KernelSpec::Bartlett),
            "tukey" => Ok(KernelSpec::TukeyHanning),
            "qs" => {
                if bandwidth_bw < 0.0 {
                    return Err(Error::invalid("qs_bandwidth must be nonnegative"));
                }
                Ok(KernelSpec::QuadraticSpectral { bandwidth_bw })
            }
            other => Err(Error::invalid(format!(
                "unknown kernel '{other}' (expected constant|bartlett|tukey|qs)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Constant => "constant",
            KernelSpec::Bartlett => "bartlett",
            KernelSpec::TukeyHanning => "tukey",
            KernelSpec::QuadraticSpectral { .. } => "qs",
        }
    }
}

/// Removable singularity at x = 0; below this the limit value 1 is
/// returned directly.
const QS_ZERO_BRANCH: f64 = 1e-8;

/// The closed form subtracts two terms that both approach 1, so for
/// small arguments it is evaluated through its power series in a^2
/// (full double precision for |a| <= 0.5; eight terms suffice).
fn qs_weight(x: f64) -> f64 {
    if x.abs() < QS_ZERO_BRANCH {
        return 1.0;
    }
    let a = 6.0 * PI * x / 5.0;
    if a.abs() <= 0.5 {
        // w = sum_t (-1)^t a^(2t) * 6(t+1)/(2t+3)!, with the term ratio
        // c_t/c_{t-1} = -(t+1) / (t (2t+3)(2t+2)).
        let u = a * a;
        let mut term = 1.0;
        let mut sum = 1.0;
        for t in 1..8u64 {
            let tf = t as f64;
            term *= -u * (tf + 1.0) / (tf * (2.0 * tf + 3.0) * (2.0 * tf + 2.0));
            sum += term;
        }
        return sum;
    }
    25.0 / (12.0 * PI * PI * x * x) * (a.sin() / a - a.cos())
}

/// One-dimensional weight at lag j under truncation m (m >= 1).
pub fn weight_1d(spec: KernelSpec, j: i64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("weight_1d requires m >= 1"));
    }
    let aj = j.unsigned_abs() as f64;
    let m = m as f64;
    Ok(match spec {
        KernelSpec::Constant => 1.0,
        KernelSpec::Bartlett => (1.0 - aj / m).max(0.0),
        KernelSpec::TukeyHanning => {
            if aj <= m {
                (1.0 + (PI * aj / m).cos()) / 2.0
            } else {
                0.0
            }
        }
        KernelSpec::QuadraticSpectral { bandwidth_bw } => qs_weight(aj / (m + bandwidth_bw)),
    })
}

/// Product weight over coordinates. Axes with m_k = 0 admit only
/// j_k = 0 and contribute the exact factor 1.
pub fn weight(spec: KernelSpec, lag: &[i64], m: &[usize]) -> Result<f64> {
    if lag.len() != m.len() {
        return Err(Error::ShapeMismatch(format!(
            "lag rank {} != m rank {}",
            lag.len(),
            m.len()
        )));
    }
    let mut w = 1.0;
    for (&j, &mk) in lag.iter().zip(m) {
        if j.unsigned_abs() as usize > mk {
            return Err(Error::invalid(format!(
                "lag {lag:?} outside the box |j| <= {m:?}"
            )));
        }
        if mk == 0 {
            continue;
        }
        w *= weight_1d(spec, j, mk)?;
    }
    Ok(w)
}
