//! Monte Carlo experiment harness: repeated simulation, estimation at
//! several truncation boxes, and summary statistics against the
//! model's analytic variance.
//!
//! All truncation boxes share one autocovariance table per replication
//! (computed up to the componentwise maximum box), which keeps sweeps
//! over many m values at the cost of the largest one.

use rayon::prelude::*;

use crate::cut::{cut_threshold, CutRule};
use crate::error::{Error, Result};
use crate::field::{lag_box, site_strides, Field};
use crate::kernels::{weight, KernelSpec};
use crate::models::{simulate, ModelSpec, SeedSpec};

/// Summary for one truncation box.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub m: Vec<usize>,
    pub mean: f64,
    pub rmse: f64,
    pub bias: f64,
    pub variance: f64,
}

/// Full record of a Monte Carlo sweep; serializes to CSV with the
/// configuration in comment lines so a run is reproducible from its
/// output alone.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub model: String,
    pub shape: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub kernel: KernelSpec,
    pub cut: CutRule,
    /// The analytic long-run variance the rows are judged against.
    pub target: f64,
    pub rows: Vec<ReportRow>,
}

pub(crate) fn format_m(m: &[usize]) -> String {
    m.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub(crate) fn describe_cut(cut: &CutRule) -> String {
    match *cut {
        CutRule::PowerL2 { alpha, delta } => format!("power_l2(alpha={alpha},delta={delta})"),
        CutRule::PowerMax { alpha, delta } => format!("power_max(alpha={alpha},delta={delta})"),
        CutRule::Constant { c } => format!("constant(c={c})"),
        CutRule::None => "none".into(),
    }
}

pub(crate) fn describe_kernel(kernel: &KernelSpec) -> String {
    match *kernel {
        KernelSpec::QuadraticSpectral { bandwidth_bw } => format!("qs(bw={bandwidth_bw})"),
        other => other.name().into(),
    }
}

impl ExperimentReport {
    /// CSV rendering: `#`-prefixed configuration lines, then one row
    /// per truncation box with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# model: {}\n", self.model));
        out.push_str(&format!("# shape: {}\n", format_m(&self.shape)));
        out.push_str(&format!("# reps: {}\n", self.reps));
        out.push_str(&format!("# master_seed: {}\n", self.master_seed));
        out.push_str(&format!("# kernel: {}\n", describe_kernel(&self.kernel)));
        out.push_str(&format!("# cut: {}\n", describe_cut(&self.cut)));
        out.push_str(&format!("# target_sigma2: {:.16e}\n", self.target));
        out.push_str("m,mean,rmse,bias,variance\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                format_m(&row.m),
                row.mean,
                row.rmse,
                row.bias,
                row.variance
            ));
        }
        out
    }
}

/// True when the first nonzero lag component is positive (or the lag
/// is zero): the half of the lag box that is measured directly.
fn lex_nonneg(lag: &[i64]) -> bool {
    for &v in lag {
        if v > 0 {
            return true;
        }
        if v < 0 {
            return false;
        }
    }
    true
}

/// Scalar sample autocovariances for every lex-nonnegative lag in the
/// box |j| <= cap, stored flat over the full box for O(1) lookup.
pub(crate) struct LagTable {
    cap: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl LagTable {
    pub(crate) fn build(field: &Field, cap: &[usize]) -> Result<LagTable> {
        let extents: Vec<usize> = cap.iter().map(|&c| 2 * c + 1).collect();
        let strides = site_strides(&extents);
        let mut values = vec![f64::NAN; extents.iter().product()];
        for lag in lag_box(cap) {
            if !lex_nonneg(&lag) {
                continue;
            }
            let g = crate::estimators::sample_autocov(field, &lag)?.scalar();
            let mut idx = 0usize;
            for k in 0..lag.len() {
                idx += (lag[k] + cap[k] as i64) as usize * strides[k];
            }
            values[idx] = g;
        }
        Ok(LagTable {
            cap: cap.to_vec(),
            strides,
            values,
        })
    }

    fn get(&self, lag: &[i64]) -> f64 {
        let mut idx = 0usize;
        for ((&l, &c), &s) in lag.iter().zip(&self.cap).zip(&self.strides) {
            idx += (l + c as i64) as usize * s;
        }
        self.values[idx]
    }
}

/// Threshold estimate assembled from the precomputed table. Follows
/// the direct estimator's accumulation order exactly, so the result is
/// bit-identical to calling it on the field.
pub(crate) fn lrv_from_table(
    table: &LagTable,
    shape: &[usize],
    m: &[usize],
    kernel: KernelSpec,
    cut: CutRule,
) -> Result<f64> {
    let mut acc = 0.0f64;
    for lag in lag_box(m) {
        if !lex_nonneg(&lag) {
            continue;
        }
        let w = weight(kernel, &lag, m)?;
        let g = table.get(&lag);
        let c = cut_threshold(cut, &lag, shape);
        if g.abs() > c {
            let zero = lag.iter().all(|&v| v == 0);
            acc += w * g;
            if !zero {
                acc += w * g;
            }
        }
    }
    Ok(acc)
}

/// Runs `reps` simulations of a scalar model and reports the Monte
/// Carlo mean, RMSE (against the analytic variance), bias, and spread
/// of the variance estimate for every truncation box in `m_list`.
///
/// Replications run concurrently but are reduced in replication order,
/// so the report is identical regardless of scheduling.
pub fn mc_experiment(
    spec: &ModelSpec,
    shape: &[usize],
    m_list: &[Vec<usize>],
    kernel: KernelSpec,
    cut: CutRule,
    reps: usize,
    master_seed: u64,
) -> Result<ExperimentReport> {
    if reps < 2 {
        return Err(Error::invalid("mc_experiment needs reps >= 2"));
    }
    if m_list.is_empty() {
        return Err(Error::invalid("mc_experiment needs at least one m"));
    }
    if spec.p() != 1 {
        return Err(Error::invalid(
            "mc_experiment summarizes scalar models; vector mixes have no scalar target",
        ));
    }
    cut.validate()?;
    let q = spec.q();
    let mut cap = vec![0usize; q];
    for m in m_list {
        if m.len() != q {
            return Err(Error::ShapeMismatch(format!(
                "m {:?} does not match the model's grid dimension {q}",
                m
            )));
        }
        for k in 0..q {
            if m[k] >= shape[k] {
                return Err(Error::invalid(format!(
                    "m {:?} must stay below the grid shape {:?}",
                    m, shape
                )));
            }
            cap[k] = cap[k].max(m[k]);
        }
    }
    let target = spec.analytic_sigma2()?;

    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let field = simulate(spec, shape, SeedSpec::new(master_seed, rep))?;
            let table = LagTable::build(&field, &cap)?;
            m_list
                .iter()
                .map(|m| lrv_from_table(&table, shape, m, kernel, cut))
                .collect()
        })
        .collect::<Result<_>>()?;

    let inv = 1.0 / reps as f64;
    let rows = m_list
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut sum_dev_sq = 0.0;
            for rep_vals in &per_rep {
                let v = rep_vals[mi];
                sum += v;
                sum_sq += v * v;
                let d = v - target;
                sum_dev_sq += d * d;
            }
            let mean = sum * inv;
            let variance = (sum_sq * inv - mean * mean).max(0.0);
            ReportRow {
                m: m.clone(),
                mean,
                rmse: (sum_dev_sq * inv).sqrt(),
                bias: mean - target,
                variance,
            }
        })
        .collect();

    Ok(ExperimentReport {
        model: format!("{spec:?}"),
        shape: shape.to_vec(),
        reps,
        master_seed,
        kernel,
        cut,
        target,
        rows,
    })
}
