//! Block subsampling: empirical sampling distributions, quantiles,
//! subsampled RMSE/mean approximations, ring statistics with confidence
//! intervals, sequential bandwidth selection, and threshold-exponent tuning.
//!
//! Blocks are congruent sub-grids of shape `b` placed on a stride-`h`
//! lattice. A statistic evaluated on every block yields an empirical
//! sampling distribution; scaled by `tau_b = sqrt(prod b)` and centered at
//! the full-sample statistic it approximates the statistic's sampling law.
//!
//! The numeric work for the built-in block statistics runs on per-lag
//! summed-area tables, so evaluating all blocks costs little more than one
//! pass over the field per lag.

use crate::cut::{cut_threshold, CutRule, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::estimators::lrv_estimate;
use crate::field::{lag_box, ring_lags, Field, Lag};
use crate::kernels::KernelSpec;

/// Placement of subsampling blocks: block shape `b`, stride `h`, and the
/// derived per-axis block counts `N_k = floor((n_k - b_k)/h_k) + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsampleGrid {
    shape: Vec<usize>,
    b: Vec<usize>,
    h: Vec<usize>,
    counts: Vec<usize>,
}

impl SubsampleGrid {
    pub fn new(shape: &[usize], b: Vec<usize>, h: Vec<usize>) -> Result<Self> {
        let q = shape.len();
        if b.len() != q || h.len() != q {
            return Err(Error::ShapeMismatch(format!(
                "block shape {b:?} and stride {h:?} must have {q} entries"
            )));
        }
        for k in 0..q {
            if b[k] == 0 || b[k] > shape[k] {
                return Err(Error::invalid(format!(
                    "block extent b[{k}]={} must lie in 1..={}",
                    b[k], shape[k]
                )));
            }
            if h[k] == 0 {
                return Err(Error::invalid("stride entries must be at least 1"));
            }
        }
        let counts = (0..q).map(|k| (shape[k] - b[k]) / h[k] + 1).collect();
        Ok(SubsampleGrid {
            shape: shape.to_vec(),
            b,
            h,
            counts,
        })
    }

    /// Default placement: `b_k = floor(n_k^gamma)` (nudged by 1e-9 to absorb
    /// `powf` rounding on exact powers) and stride 1 on every axis.
    pub fn with_gamma(shape: &[usize], gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!(
                "block exponent gamma must lie in (0, 1], got {gamma}"
            )));
        }
        let b = shape
            .iter()
            .map(|&n| (((n as f64).powf(gamma) + 1e-9).floor() as usize).max(1))
            .collect();
        SubsampleGrid::new(shape, b, vec![1; shape.len()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    pub fn h(&self) -> &[usize] {
        &self.h
    }

    /// Per-axis block counts `N`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_blocks(&self) -> usize {
        self.counts.iter().product()
    }

    /// Scaling rate of a block statistic: sqrt of the block site count.
    pub fn tau_b(&self) -> f64 {
        self.b.iter().map(|&v| v as f64).product::<f64>().sqrt()
    }

    fn check_field(&self, field: &Field) -> Result<()> {
        if field.shape() != self.shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "subsampling grid was built for shape {:?}, field has {:?}",
                self.shape,
                field.shape()
            )));
        }
        Ok(())
    }
}

/// Block origins in lexicographic order; every block lies inside the grid.
pub fn enumerate_blocks(shape: &[usize], grid: &SubsampleGrid) -> Result<Vec<Vec<usize>>> {
    if shape != grid.shape() {
        return Err(Error::ShapeMismatch(format!(
            "grid built for shape {:?}, asked to enumerate on {shape:?}",
            grid.shape()
        )));
    }
    let q = shape.len();
    let mut out = Vec::with_capacity(grid.num_blocks());
    let mut idx = vec![0usize; q];
    loop {
        out.push((0..q).map(|k| idx[k] * grid.h[k]).collect());
        let mut axis = q;
        while axis > 0 {
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < grid.counts[axis] {
                break;
            }
            idx[axis] = 0;
            if axis == 0 {
                return Ok(out);
            }
        }
    }
}

/// Evaluate a scalar statistic on every block, in block order. Statistic
/// failures are wrapped with the offending block's index.
pub fn subsample_values<F>(field: &Field, grid: &SubsampleGrid, statistic: F) -> Result<Vec<f64>>
where
    F: Fn(&Field) -> Result<f64>,
{
    grid.check_field(field)?;
    let origins = enumerate_blocks(field.shape(), grid)?;
    let mut out = Vec::with_capacity(origins.len());
    for (index, origin) in origins.iter().enumerate() {
        let block = field.block(origin, grid.b())?;
        let v = statistic(&block).map_err(|e| Error::Block {
            index,
            source: Box::new(e),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Empirical law of the centered, `tau_b`-scaled block values.
#[derive(Clone, Debug)]
pub struct SamplingDistribution {
    values: Vec<f64>,
    center: f64,
    tau_b: f64,
}

impl SamplingDistribution {
    /// Sorted scaled values `tau_b * (v_i - center)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn tau_b(&self) -> f64 {
        self.tau_b
    }

    /// Fraction of scaled values `<= x`; right-continuous and nondecreasing.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= x);
        k as f64 / self.values.len() as f64
    }
}

pub fn empirical_distribution(
    values: &[f64],
    center: f64,
    tau_b: f64,
) -> Result<SamplingDistribution> {
    if values.is_empty() {
        return Err(Error::invalid("empirical distribution needs at least one value"));
    }
    if !(tau_b.is_finite() && tau_b > 0.0) || !center.is_finite() {
        return Err(Error::invalid("center must be finite and tau_b positive"));
    }
    let mut scaled: Vec<f64> = values.iter().map(|v| tau_b * (v - center)).collect();
    scaled.sort_by(f64::total_cmp);
    Ok(SamplingDistribution {
        values: scaled,
        center,
        tau_b,
    })
}

/// gamma-quantile of the scaled values: the ceil(gamma * N)-th order
/// statistic (1e-9 guard against upward rounding of exact products).
pub fn subsample_quantile(dist: &SamplingDistribution, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "quantile level must lie in (0, 1), got {gamma}"
        )));
    }
    let n = dist.values.len();
    let k = ((gamma * n as f64) - 1e-9).ceil() as usize;
    let k = k.clamp(1, n);
    Ok(dist.values[k - 1])
}

/// Per-lag block sample-autocovariance tables for a univariate field.
///
/// For every lexicographically nonnegative lag `j` in the box `|j| <= j_max`
/// this stores the sample autocovariance of every block (and of the full
/// field), computed from one summed-area table per lag. The negative-lex
/// mirror of a lag shares its value.
pub(crate) struct BlockTables {
    b: Vec<usize>,
    num_blocks: usize,
    j_max: Vec<usize>,
    half_lags: Vec<Lag>,
    /// Full signed-box offset -> slot in `half_lags` (after mirroring).
    slot_of: Vec<Option<usize>>,
    /// `values[slot * num_blocks + block]` = block autocovariance.
    values: Vec<f64>,
    /// Full-field autocovariance per slot.
    full: Vec<f64>,
}

fn lex_nonneg(lag: &[i64]) -> bool {
    for &v in lag {
        if v != 0 {
            return v > 0;
        }
    }
    true
}

impl BlockTables {
    pub(crate) fn build(field: &Field, grid: &SubsampleGrid, j_max: &[usize]) -> Result<Self> {
        grid.check_field(field)?;
        if field.p() != 1 {
            return Err(Error::invalid(
                "block autocovariance tables are defined for univariate fields",
            ));
        }
        let q = field.q();
        if j_max.len() != q {
            return Err(Error::ShapeMismatch(format!(
                "lag bound {j_max:?} must have {q} entries"
            )));
        }
        for (k, (&j, &b)) in j_max.iter().zip(&grid.b).enumerate() {
            if j >= b {
                return Err(Error::invalid(format!(
                    "lag bound {j} on axis {k} must be below the block extent {b}"
                )));
            }
        }
        let shape = field.shape().to_vec();
        let x = field.data();
        let origins = enumerate_blocks(&shape, grid)?;
        let num_blocks = origins.len();
        let fstrides = field.site_strides();

        let box_dims: Vec<usize> = j_max.iter().map(|&j| 2 * j + 1).collect();
        let box_size: usize = box_dims.iter().product();
        let mut slot_of = vec![None; box_size];
        let mut half_lags = Vec::new();
        for lag in lag_box(j_max) {
            if lex_nonneg(&lag) {
                let slot = half_lags.len();
                slot_of[box_offset(&lag, j_max, &box_dims)] = Some(slot);
                half_lags.push(lag);
            }
        }
        for lag in lag_box(j_max) {
            if !lex_nonneg(&lag) {
                let mirror: Lag = lag.iter().map(|v| -v).collect();
                slot_of[box_offset(&lag, j_max, &box_dims)] =
                    slot_of[box_offset(&mirror, j_max, &box_dims)];
            }
        }

        let mut values = vec![0.0; half_lags.len() * num_blocks];
        let mut full = vec![0.0; half_lags.len()];
        let mut prefix: Vec<f64> = Vec::new();
        for (slot, lag) in half_lags.iter().enumerate() {
            // Overlap region of the full grid for this lag, in coordinates
            // starting at max(0, -j_k) per axis.
            let rdims: Vec<usize> = (0..q).map(|k| shape[k] - lag[k].unsigned_abs() as usize).collect();
            let start: Vec<usize> = (0..q).map(|k| (-lag[k]).max(0) as usize).collect();
            let joff: i64 = (0..q).map(|k| lag[k] * fstrides[k] as i64).sum();

            let pdims: Vec<usize> = rdims.iter().map(|&r| r + 1).collect();
            let pstrides = row_major_strides(&pdims);
            prefix.clear();
            prefix.resize(pdims.iter().product(), 0.0);

            // Fill the padded table with x[i] * x[i+j] over the region.
            let inner = rdims[q - 1];
            let mut u = vec![0usize; q];
            'fill: loop {
                let mut site = 0usize;
                let mut pidx = 0usize;
                for k in 0..q {
                    site += (start[k] + u[k]) * fstrides[k];
                    pidx += (u[k] + 1) * pstrides[k];
                }
                let shifted = (site as i64 + joff) as usize;
                for t in 0..inner {
                    prefix[pidx + t] = x[site + t] * x[shifted + t];
                }
                let mut axis = q - 1;
                loop {
                    if axis == 0 {
                        break 'fill;
                    }
                    axis -= 1;
                    u[axis] += 1;
                    if u[axis] < rdims[axis] {
                        break;
                    }
                    u[axis] = 0;
                }
            }
            cumsum_in_place(&mut prefix, &pdims, &pstrides);

            let denom_full: f64 = rdims.iter().map(|&r| r as f64).product();
            full[slot] = prefix[prefix.len() - 1] / denom_full;

            let denom_block: f64 = (0..q)
                .map(|k| (grid.b[k] - lag[k].unsigned_abs() as usize) as f64)
                .product();
            for (i, origin) in origins.iter().enumerate() {
                // Block overlap in region coordinates is [o_k, o_k + b_k - |j_k|).
                let s = box_query(&prefix, &pstrides, q, |k| origin[k], |k| {
                    origin[k] + grid.b[k] - lag[k].unsigned_abs() as usize
                });
                values[slot * num_blocks + i] = s / denom_block;
            }
        }
        Ok(BlockTables {
            b: grid.b.clone(),
            num_blocks,
            j_max: j_max.to_vec(),
            half_lags,
            slot_of,
            values,
            full,
        })
    }

    fn slot(&self, lag: &[i64]) -> Option<usize> {
        let box_dims: Vec<usize> = self.j_max.iter().map(|&j| 2 * j + 1).collect();
        for (&l, &j) in lag.iter().zip(&self.j_max) {
            if l.unsigned_abs() as usize > j {
                return None;
            }
        }
        self.slot_of[box_offset(lag, &self.j_max, &box_dims)]
    }

    pub(crate) fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    fn block_gamma(&self, slot: usize, block: usize) -> f64 {
        self.values[slot * self.num_blocks + block]
    }

    /// Constant-weight variance estimate of one block over the lag box
    /// `|j| <= m`, thresholding entries against `cut` at the block shape.
    pub(crate) fn block_lrv(&self, block: usize, m: &[usize], cut: CutRule) -> f64 {
        let mut acc = 0.0;
        for (slot, lag) in self.half_lags.iter().enumerate() {
            if lag
                .iter()
                .zip(m)
                .any(|(&j, &mk)| j.unsigned_abs() as usize > mk)
            {
                continue;
            }
            let gam = self.block_gamma(slot, block);
            if gam.abs() > cut_threshold(cut, lag, &self.b) {
                let mult = if lag.iter().all(|&j| j == 0) { 1.0 } else { 2.0 };
                acc += mult * gam;
            }
        }
        acc
    }

    /// Full-field constant-weight estimate over `|j| <= m` (no cut).
    #[cfg(test)]
    pub(crate) fn full_lrv(&self, m: &[usize]) -> f64 {
        let mut acc = 0.0;
        for (slot, lag) in self.half_lags.iter().enumerate() {
            if lag
                .iter()
                .zip(m)
                .any(|(&j, &mk)| j.unsigned_abs() as usize > mk)
            {
                continue;
            }
            let mult = if lag.iter().all(|&j| j == 0) { 1.0 } else { 2.0 };
            acc += mult * self.full[slot];
        }
        acc
    }

    fn block_ring(&self, block: usize, k: usize) -> f64 {
        let q = self.j_max.len();
        ring_lags(k, q)
            .iter()
            .map(|lag| self.block_gamma(self.slot(lag).expect("ring within table"), block))
            .sum()
    }

    fn full_ring(&self, k: usize) -> f64 {
        let q = self.j_max.len();
        ring_lags(k, q)
            .iter()
            .map(|lag| self.full[self.slot(lag).expect("ring within table")])
            .sum()
    }
}

fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn box_offset(lag: &[i64], j_max: &[usize], box_dims: &[usize]) -> usize {
    let mut off = 0usize;
    for k in 0..lag.len() {
        off = off * box_dims[k] + (lag[k] + j_max[k] as i64) as usize;
    }
    off
}

/// In-place prefix sums along every axis of a padded row-major array
/// (first hyperplane per axis already zero).
fn cumsum_in_place(p: &mut [f64], dims: &[usize], strides: &[usize]) {
    let q = dims.len();
    for axis in 0..q {
        let stride = strides[axis];
        let mut idx = vec![0usize; q];
        // Iterate over all positions with idx[axis] = 0, then sweep the axis.
        'outer: loop {
            let base: usize = idx
                .iter()
                .zip(strides)
                .map(|(&i, &s)| i * s)
                .sum();
            for t in 1..dims[axis] {
                p[base + t * stride] += p[base + (t - 1) * stride];
            }
            let mut k = q;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                if k == axis {
                    continue;
                }
                idx[k] += 1;
                if idx[k] < dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Sum of the padded prefix table over the half-open box
/// `[lo_k, hi_k)` per axis, by inclusion-exclusion over the 2^q corners.
fn box_query(
    p: &[f64],
    strides: &[usize],
    q: usize,
    lo: impl Fn(usize) -> usize,
    hi: impl Fn(usize) -> usize,
) -> f64 {
    let mut acc = 0.0;
    for mask in 0..(1usize << q) {
        let mut idx = 0usize;
        let mut ones = 0u32;
        for (k, &s) in strides[..q].iter().enumerate() {
            if mask & (1 << k) != 0 {
                idx += hi(k) * s;
                ones += 1;
            } else {
                idx += lo(k) * s;
            }
        }
        let sign = if (q as u32 - ones).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        acc += sign * p[idx];
    }
    acc
}

fn check_m_below_blocks(m: &[usize], grid: &SubsampleGrid) -> Result<()> {
    if m.len() != grid.b.len() {
        return Err(Error::ShapeMismatch(format!(
            "m {m:?} must have {} entries",
            grid.b.len()
        )));
    }
    for (k, (&mk, &b)) in m.iter().zip(&grid.b).enumerate() {
        if mk >= b {
            return Err(Error::invalid(format!(
                "m[{k}]={mk} must be below the block extent {b}"
            )));
        }
    }
    Ok(())
}

/// Average over blocks of the constant-weight variance estimate at `m`.
pub fn subsample_mean(field: &Field, grid: &SubsampleGrid, m: &[usize]) -> Result<f64> {
    check_m_below_blocks(m, grid)?;
    let tables = BlockTables::build(field, grid, m)?;
    let n = tables.num_blocks();
    let sum: f64 = (0..n)
        .map(|i| tables.block_lrv(i, m, CutRule::None))
        .sum();
    Ok(sum / n as f64)
}

/// Subsampled root-mean-square deviation of the per-block constant-weight
/// estimates at `stat_m` (entries thresholded by `cut` at the block shape)
/// from an explicit centering value.
pub fn subsample_rmse_centered(
    field: &Field,
    grid: &SubsampleGrid,
    stat_m: &[usize],
    cut: CutRule,
    center: f64,
) -> Result<f64> {
    check_m_below_blocks(stat_m, grid)?;
    cut.validate()?;
    if !center.is_finite() {
        return Err(Error::invalid("centering value must be finite"));
    }
    let tables = BlockTables::build(field, grid, stat_m)?;
    let n = tables.num_blocks();
    let mut acc = 0.0;
    for i in 0..n {
        let d = tables.block_lrv(i, stat_m, cut) - center;
        acc += d * d;
    }
    Ok((acc / n as f64).sqrt())
}

/// Subsampled RMSE approximation centered at the full-field constant-weight
/// estimate at `m_opt`.
pub fn subsample_rmse(field: &Field, grid: &SubsampleGrid, m_opt: &[usize], cut: CutRule) -> Result<f64> {
    let center = lrv_estimate(field, m_opt, KernelSpec::Constant)?
        .sigma2
        .scalar();
    subsample_rmse_centered(field, grid, m_opt, cut, center)
}

/// Block-mean and centered root-mean-square deviation of the per-block
/// estimates for several truncation boxes at once. One block-table build
/// (at the componentwise maximum box) serves every entry of `m_list`;
/// the means match [`subsample_mean`] bit for bit when `cut` is `None`,
/// and the deviations match [`subsample_rmse_centered`] bit for bit.
pub fn subsample_mean_rmse(
    field: &Field,
    grid: &SubsampleGrid,
    m_list: &[Vec<usize>],
    cut: CutRule,
    center: f64,
) -> Result<Vec<(f64, f64)>> {
    if m_list.is_empty() {
        return Err(Error::invalid("m_list must be nonempty"));
    }
    let q = field.q();
    let mut j_max = vec![0usize; q];
    for m in m_list {
        if m.len() != q {
            return Err(Error::ShapeMismatch(format!(
                "truncation box {m:?} must have {q} entries"
            )));
        }
        for k in 0..q {
            j_max[k] = j_max[k].max(m[k]);
        }
    }
    check_m_below_blocks(&j_max, grid)?;
    cut.validate()?;
    if !center.is_finite() {
        return Err(Error::invalid("centering value must be finite"));
    }
    let tables = BlockTables::build(field, grid, &j_max)?;
    let n = tables.num_blocks();
    let mut out = Vec::with_capacity(m_list.len());
    for m in m_list {
        let mut sum = 0.0;
        let mut acc = 0.0;
        for i in 0..n {
            let v = tables.block_lrv(i, m, cut);
            sum += v;
            let d = v - center;
            acc += d * d;
        }
        out.push((sum / n as f64, (acc / n as f64).sqrt()));
    }
    Ok(out)
}

/// Sum of sample autocovariances over the max-norm shell of radius `k`.
pub fn ring_statistic(field: &Field, k: usize) -> Result<f64> {
    if field.p() != 1 {
        return Err(Error::invalid(
            "ring statistic is defined for univariate fields",
        ));
    }
    let min_n = field.shape().iter().copied().min().unwrap_or(0);
    if k >= min_n {
        return Err(Error::invalid(format!(
            "ring radius {k} must be below the smallest grid extent {min_n}"
        )));
    }
    let mut acc = 0.0;
    for lag in ring_lags(k, field.q()) {
        acc += crate::estimators::sample_autocov(field, &lag)?.scalar();
    }
    Ok(acc)
}

fn ring_ci_from_tables(
    tables: &BlockTables,
    grid: &SubsampleGrid,
    shape: &[usize],
    k: usize,
    confidence: f64,
) -> Result<(f64, f64)> {
    let rn = tables.full_ring(k);
    let vals: Vec<f64> = (0..tables.num_blocks())
        .map(|i| tables.block_ring(i, k))
        .collect();
    let dist = empirical_distribution(&vals, rn, grid.tau_b())?;
    let q_lo = subsample_quantile(&dist, (1.0 - confidence) / 2.0)?;
    let q_hi = subsample_quantile(&dist, (1.0 + confidence) / 2.0)?;
    let tau_n = shape.iter().map(|&n| n as f64).product::<f64>().sqrt();
    Ok((rn - q_hi / tau_n, rn - q_lo / tau_n))
}

/// Equal-tailed subsampling confidence interval for the ring-`k`
/// autocovariance sum: quantiles of the centered, `tau_b`-scaled block
/// values give the half-widths at the full-sample rate.
pub fn ring_confidence_interval(
    field: &Field,
    grid: &SubsampleGrid,
    k: usize,
    confidence: f64,
) -> Result<(f64, f64)> {
    if field.p() != 1 {
        return Err(Error::invalid(
            "ring statistic is defined for univariate fields",
        ));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence must lie in (0, 1)"));
    }
    let tables = BlockTables::build(field, grid, &vec![k; field.q()])?;
    ring_ci_from_tables(&tables, grid, field.shape(), k, confidence)
}

/// Sequential bandwidth selection. For k = 1, 2, ... the ring-k sum is
/// tested against zero via its subsampling confidence interval; the scan
/// stops at the first k whose interval contains zero (that ring, and by
/// the sequential logic all later ones, is taken as noise) and returns
/// (k-1) on every axis. If every ring up to `m_max` rejects, returns
/// `m_max` on every axis.
pub fn select_m(
    field: &Field,
    grid: &SubsampleGrid,
    confidence: f64,
    m_max: usize,
) -> Result<Vec<usize>> {
    grid.check_field(field)?;
    if field.p() != 1 {
        return Err(Error::invalid(
            "bandwidth selection is defined for univariate fields",
        ));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence must lie in (0, 1)"));
    }
    let min_b = grid.b.iter().copied().min().unwrap_or(0);
    if m_max >= min_b {
        return Err(Error::invalid(format!(
            "m_max {m_max} must be below the smallest block extent {min_b}"
        )));
    }
    let q = field.q();
    if m_max == 0 {
        return Ok(vec![0; q]);
    }
    let tables = BlockTables::build(field, grid, &vec![m_max; q])?;
    for k in 1..=m_max {
        let (lo, hi) = ring_ci_from_tables(&tables, grid, field.shape(), k, confidence)?;
        if lo <= 0.0 && 0.0 <= hi {
            return Ok(vec![k - 1; q]);
        }
    }
    Ok(vec![m_max; q])
}

/// Candidate boxes scanned by the tuning envelope: the diagonal boxes
/// k·(1,..,1) for k up to min(b)-1 (capped at 29), plus a fixed ladder of
/// anisotropic two-dimensional boxes where they fit the blocks.
fn probe_ladder(grid: &SubsampleGrid) -> Vec<Vec<usize>> {
    let q = grid.b.len();
    let k_max = (grid.b.iter().copied().min().unwrap() - 1).min(29);
    let mut out: Vec<Vec<usize>> = (0..=k_max).map(|k| vec![k; q]).collect();
    if q == 2 {
        for (m1, m2) in [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (10, 13), (15, 20)] {
            if m1 < grid.b[0] && m2 < grid.b[1] {
                out.push(vec![m1, m2]);
            }
        }
    }
    out
}

/// Result of [`tune_alpha_report`]: the chosen exponent, the plug-in
/// bandwidth used for centering, and the envelope RMSE curve.
#[derive(Clone, Debug)]
pub struct TuneReport {
    pub alpha: f64,
    pub m_opt: Vec<usize>,
    pub curve: Vec<(f64, f64)>,
}

/// Data-adaptive choice of the threshold exponent.
///
/// The block estimates use the power-of-Euclidean-norm threshold rule with
/// the default offset, evaluated at the block shape. For each exponent in
/// `alpha_grid` the subsampled RMSE (centered at the full-field estimate at
/// the plug-in bandwidth from [`select_m`]) is minimized over the candidate
/// boxes of [`probe_ladder`]; the chosen exponent is the largest grid point
/// whose minimized RMSE stays within `(1 + tolerance)` of the value at
/// exponent zero.
// The negated comparisons in the validations deliberately catch NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn tune_alpha_report(
    field: &Field,
    grid: &SubsampleGrid,
    alpha_grid: &[f64],
    tolerance: f64,
) -> Result<TuneReport> {
    grid.check_field(field)?;
    if field.p() != 1 {
        return Err(Error::invalid("tuning is defined for univariate fields"));
    }
    if alpha_grid.is_empty() {
        return Err(Error::invalid("alpha grid must be nonempty"));
    }
    if alpha_grid[0] != 0.0 {
        return Err(Error::invalid("alpha grid must start at 0"));
    }
    if alpha_grid.windows(2).any(|w| !(w[1] > w[0])) || alpha_grid.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("alpha grid must be finite and strictly ascending"));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("tolerance must be nonnegative"));
    }

    let q = field.q();
    let m_max = grid.b.iter().copied().min().unwrap() - 1;
    let m_opt = if m_max >= 1 {
        select_m(field, grid, 0.90, m_max)?
    } else {
        vec![0; q]
    };
    let center = lrv_estimate(field, &m_opt, KernelSpec::Constant)?
        .sigma2
        .scalar();

    let ladder = probe_ladder(grid);
    let mut j_bound = vec![0usize; q];
    for m in &ladder {
        for k in 0..q {
            j_bound[k] = j_bound[k].max(m[k]);
        }
    }
    let tables = BlockTables::build(field, grid, &j_bound)?;
    let blocks = tables.num_blocks();
    let prod_b: f64 = grid.b.iter().map(|&v| v as f64).product();
    let g_len = alpha_grid.len();

    let mut curve = vec![f64::INFINITY; g_len];
    let mut v = vec![0.0f64; blocks];
    let mut buckets: Vec<Vec<(u32, f64)>> = vec![Vec::new(); g_len];
    for m in &ladder {
        v.iter_mut().for_each(|x| *x = 0.0);
        buckets.iter_mut().for_each(Vec::clear);
        for (slot, lag) in tables.half_lags.iter().enumerate() {
            if lag
                .iter()
                .zip(m)
                .any(|(&j, &mk)| j.unsigned_abs() as usize > mk)
            {
                continue;
            }
            let mult = if lag.iter().all(|&j| j == 0) { 1.0 } else { 2.0 };
            let l2 = lag.iter().map(|&j| (j * j) as f64).sum::<f64>().sqrt();
            let row = &tables.values[slot * blocks..(slot + 1) * blocks];
            if l2 == 0.0 {
                // Zero lag: threshold is -delta, never cuts.
                for (vi, &gam) in v.iter_mut().zip(row) {
                    *vi += mult * gam;
                }
            } else if l2 == 1.0 {
                // Unit lags: the threshold does not depend on the exponent.
                let c = 1.0 / prod_b - DEFAULT_DELTA;
                for (vi, &gam) in v.iter_mut().zip(row) {
                    if gam.abs() > c {
                        *vi += mult * gam;
                    }
                }
            } else {
                // An entry survives exponent a iff a < a*, with
                // a* = ln(prod_b (|gamma| + delta)) / ln ||j||_2; bucket the
                // removal at the first grid point reaching a*.
                let log_norm = l2.ln();
                for (i, (vi, &gam)) in v.iter_mut().zip(row).enumerate() {
                    let a_star = ((gam.abs() + DEFAULT_DELTA) * prod_b).ln() / log_norm;
                    let g_star = alpha_grid.partition_point(|&a| a < a_star);
                    if g_star > 0 {
                        *vi += mult * gam;
                        if g_star < g_len {
                            buckets[g_star].push((i as u32, mult * gam));
                        }
                    }
                }
            }
        }
        for g in 0..g_len {
            for &(i, t) in &buckets[g] {
                v[i as usize] -= t;
            }
            let mut acc = 0.0;
            for &x in &v {
                let d = x - center;
                acc += d * d;
            }
            let rmse = (acc / blocks as f64).sqrt();
            if rmse < curve[g] {
                curve[g] = rmse;
            }
        }
    }

    let budget = curve[0] * (1.0 + tolerance);
    let mut alpha = alpha_grid[0];
    for g in 0..g_len {
        if curve[g] <= budget {
            alpha = alpha_grid[g];
        }
    }
    Ok(TuneReport {
        alpha,
        m_opt,
        curve: alpha_grid.iter().copied().zip(curve).collect(),
    })
}

/// See [`tune_alpha_report`]; returns just the chosen exponent.
pub fn tune_alpha(
    field: &Field,
    grid: &SubsampleGrid,
    alpha_grid: &[f64],
    tolerance: f64,
) -> Result<f64> {
    Ok(tune_alpha_report(field, grid, alpha_grid, tolerance)?.alpha)
}
