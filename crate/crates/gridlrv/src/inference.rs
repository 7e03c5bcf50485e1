//! Partial-sum significance test for image data.
//!
//! The scaled partial sum |n|^{-1/2}|S_n| is asymptotically normal with
//! standard deviation sigma, so comparing it against sigma_hat times a
//! normal quantile gives an asymptotic level test. sigma_hat comes from
//! the threshold estimator applied to the reference-centered field.

// The PPND16 coefficients below keep their published digits verbatim,
// past f64 resolution.
#![allow(clippy::excessive_precision)]

use rayon::prelude::*;

use crate::cut::CutRule;
use crate::error::{Error, Result};
use crate::estimators::threshold_lrv;
use crate::field::{Field, Reference};
use crate::kernels::KernelSpec;
use crate::mc::{lrv_from_table, LagTable};
use crate::models::{simulate, ModelSpec, SeedSpec};

// Rational minimax coefficients of PPND16 (Wichura, Algorithm AS 241).
// Ascending powers; the three pairs cover the central region and two
// tail regimes split at |q| = 0.425 and r = 5. The published digits
// are kept verbatim even past f64 resolution.
const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_608e0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const MIDTAIL_NUM: [f64; 8] = [
    1.423_437_110_749_683_577_34e0,
    4.630_337_846_156_545_295_9e0,
    5.769_497_221_460_691_405_5e0,
    3.647_848_324_763_204_605_04e0,
    1.270_458_252_452_368_382_58e0,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const MIDTAIL_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87e0,
    1.676_384_830_183_803_849_4e0,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const FARTAIL_NUM: [f64; 8] = [
    6.657_904_643_501_103_777_2e0,
    5.463_784_911_164_114_369_9e0,
    1.784_826_539_917_291_335_8e0,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const FARTAIL_DEN: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn horner(r: f64, coeffs: &[f64; 8]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

/// Inverse of the standard normal distribution function, accurate to
/// well below 1e-9 absolute error everywhere in (0, 1).
pub fn inv_normal_cdf(pr: f64) -> Result<f64> {
    if !(pr > 0.0 && pr < 1.0) {
        return Err(Error::invalid(format!(
            "inv_normal_cdf: probability must lie strictly inside (0,1), got {pr}"
        )));
    }
    let q = pr - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * horner(r, &CENTRAL_NUM) / horner(r, &CENTRAL_DEN));
    }
    let tail = if q < 0.0 { pr } else { 1.0 - pr };
    let r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        let s = r - 1.6;
        horner(s, &MIDTAIL_NUM) / horner(s, &MIDTAIL_DEN)
    } else {
        let s = r - 5.0;
        horner(s, &FARTAIL_NUM) / horner(s, &FARTAIL_DEN)
    };
    Ok(if q < 0.0 { -x } else { x })
}

/// Exact sum of deviations S_n = sum_i (x_i - reference_i) for a
/// scalar field. The reference is a constant or a same-shaped field.
pub fn partial_sum(field: &Field, reference: &Reference) -> Result<f64> {
    if field.p() != 1 {
        return Err(Error::invalid(
            "partial_sum expects a scalar field (p = 1)",
        ));
    }
    let data = field.data();
    let mut s = 0.0;
    match reference {
        Reference::Scalar(c) => {
            for &v in data {
                s += v - c;
            }
        }
        Reference::Field(r) => {
            if r.shape() != field.shape() || r.p() != 1 {
                return Err(Error::ShapeMismatch(
                    "reference field dimensions differ from the observed field".into(),
                ));
            }
            for (&v, &rv) in data.iter().zip(r.data()) {
                s += v - rv;
            }
        }
    }
    Ok(s)
}

/// Outcome of the partial-sum test. `reject` is exactly
/// `statistic > sigma_hat * critical`.
#[derive(Clone, Debug)]
pub struct TestResult {
    /// |n|^{-1/2} |S_n|.
    pub statistic: f64,
    /// Square root of the threshold variance estimate.
    pub sigma_hat: f64,
    /// Standard normal quantile at 1 - level/2.
    pub critical: f64,
    pub reject: bool,
    pub level: f64,
}

/// Two-sided test of the hypothesis that the field's mean surface
/// equals `reference`. The field is centered at the reference first;
/// both the partial sum and the variance estimate use the deviations.
///
/// A negative variance estimate (possible with the constant kernel)
/// aborts with a typed error instead of silently taking an absolute
/// value, because it signals that the kernel/cut configuration is
/// unsuited to the data.
pub fn image_test(
    field: &Field,
    reference: &Reference,
    level: f64,
    m: &[usize],
    kernel: KernelSpec,
    cut: CutRule,
) -> Result<TestResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "test level must lie strictly inside (0,1), got {level}"
        )));
    }
    let centered = field.centered_at(reference)?;
    let s_n = partial_sum(&centered, &Reference::Scalar(0.0))?;
    let statistic = s_n.abs() / (centered.num_sites() as f64).sqrt();
    let est = threshold_lrv(&centered, m, kernel, cut)?;
    let sig2 = est.sigma2.scalar();
    if sig2 < 0.0 {
        return Err(Error::NegativeVarianceEstimate(sig2));
    }
    let sigma_hat = sig2.sqrt();
    let critical = inv_normal_cdf(1.0 - level / 2.0)?;
    Ok(TestResult {
        statistic,
        sigma_hat,
        critical,
        reject: statistic > sigma_hat * critical,
        level,
    })
}

/// Fraction of simulated replications the test rejects when the null
/// holds (reference = 0, matching the models' zero mean). Replications
/// run concurrently; the rejection count is an integer sum, so the
/// result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn type1_error_experiment(
    spec: &ModelSpec,
    shape: &[usize],
    m: &[usize],
    kernel: KernelSpec,
    cut: CutRule,
    level: f64,
    reps: usize,
    master_seed: u64,
) -> Result<f64> {
    if reps < 1 {
        return Err(Error::invalid("type1_error_experiment needs reps >= 1"));
    }
    let rejected = (0..reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<u64> {
            let field = simulate(spec, shape, SeedSpec::new(master_seed, rep))?;
            let t = image_test(&field, &Reference::Scalar(0.0), level, m, kernel, cut)?;
            Ok(t.reject as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(rejected as f64 / reps as f64)
}

/// Rejection rates under the null for a grid of threshold exponents,
/// sharing one autocovariance table per replication across the whole grid.
/// Each returned rate equals [`type1_error_experiment`] run with the
/// power-of-Euclidean-norm rule at that exponent. Only univariate models
/// are supported.
#[allow(clippy::too_many_arguments)]
pub fn type1_error_sweep(
    spec: &ModelSpec,
    shape: &[usize],
    m: &[usize],
    kernel: KernelSpec,
    alphas: &[f64],
    delta: f64,
    level: f64,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    if reps < 1 {
        return Err(Error::invalid("type1_error_sweep needs reps >= 1"));
    }
    if alphas.is_empty() {
        return Err(Error::invalid("type1_error_sweep needs at least one exponent"));
    }
    if spec.p() != 1 {
        return Err(Error::invalid(
            "the exponent sweep is defined for univariate models",
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "test level must lie strictly inside (0,1), got {level}"
        )));
    }
    for &alpha in alphas {
        (CutRule::PowerL2 { alpha, delta }).validate()?;
    }
    let critical = inv_normal_cdf(1.0 - level / 2.0)?;

    let counts = (0..reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<u64>> {
            let field = simulate(spec, shape, SeedSpec::new(master_seed, rep))?;
            let centered = field.centered_at(&Reference::Scalar(0.0))?;
            let s_n = partial_sum(&centered, &Reference::Scalar(0.0))?;
            let statistic = s_n.abs() / (centered.num_sites() as f64).sqrt();
            let table = LagTable::build(&centered, m)?;
            let mut rej = vec![0u64; alphas.len()];
            for (slot, &alpha) in alphas.iter().enumerate() {
                let cut = CutRule::PowerL2 { alpha, delta };
                let sig2 = lrv_from_table(&table, shape, m, kernel, cut)?;
                if sig2 < 0.0 {
                    return Err(Error::NegativeVarianceEstimate(sig2));
                }
                rej[slot] = (statistic > sig2.sqrt() * critical) as u64;
            }
            Ok(rej)
        })
        .try_reduce(
            || vec![0u64; alphas.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    Ok(counts.iter().map(|&c| c as f64 / reps as f64).collect())
}
