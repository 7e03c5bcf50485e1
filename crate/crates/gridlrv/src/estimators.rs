//! Sample autocovariances and the kernel-weighted variance estimators.
//!
//! The field is assumed centered (zero mean); no mean subtraction
//! happens here. `Field::centered_at` or the CLI's global-mean option
//! cover practical data.

use crate::cut::{cut_threshold, CutRule};
use crate::error::{Error, Result};
use crate::field::{advance, lag_box, overlap_count, CovMatrix, Field};
use crate::kernels::{weight, KernelSpec};

/// A variance estimate with the configuration that produced it.
#[derive(Clone, Debug)]
pub struct VarianceEstimate {
    pub sigma2: CovMatrix,
    pub m_used: Vec<usize>,
    pub kernel: KernelSpec,
    pub cut: CutRule,
    /// Lags where at least one entry survived the threshold.
    pub kept_lags: usize,
    /// Set when (max m)^3 >= min n, outside the consistency rate regime.
    pub rate_warning: bool,
}

/// Per-axis base-site ranges of the overlap region and the flat site
/// offset of the lag, or None when the overlap is empty.
fn overlap_geometry(shape: &[usize], lag: &[i64]) -> Option<(Vec<std::ops::Range<usize>>, i64)> {
    let strides = crate::field::site_strides(shape);
    let mut ranges = Vec::with_capacity(shape.len());
    let mut offset: i64 = 0;
    for k in 0..shape.len() {
        let n = shape[k] as i64;
        let j = lag[k];
        let lo = (-j).max(0);
        let hi = n - j.max(0);
        if lo >= hi {
            return None;
        }
        ranges.push(lo as usize..hi as usize);
        offset += j * strides[k] as i64;
    }
    Some((ranges, offset))
}

/// Neumaier-compensated accumulator; engaged for very large overlap
/// sets where plain summation loses digits.
#[derive(Clone, Copy, Default)]
struct Compensated {
    s: f64,
    c: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

const COMPENSATION_CUTOFF: u64 = 1_000_000;

/// Raw product sums over the overlap region: out[r][c] = sum of
/// x_i[r] * x_{i+j}[c]. Caller divides by the overlap count.
fn product_sums(field: &Field, lag: &[i64]) -> Result<CovMatrix> {
    let shape = field.shape();
    let count = overlap_count(shape, lag);
    if count == 0 {
        return Err(Error::ZeroOverlap {
            shape: shape.to_vec(),
            lag: lag.to_vec(),
        });
    }
    let (ranges, offset) = overlap_geometry(shape, lag).expect("count > 0");
    let p = field.p();
    let data = field.data();
    let strides = field.site_strides();
    let q = field.q();

    let inner = ranges[q - 1].clone();
    let inner_len = inner.end - inner.start;
    let outer_extents: Vec<usize> = ranges[..q - 1].iter().map(|r| r.end - r.start).collect();
    let mut idx = vec![0usize; q.saturating_sub(1)];

    if p == 1 && count <= COMPENSATION_CUTOFF {
        let mut acc = 0.0f64;
        loop {
            let mut base: usize = inner.start;
            for k in 0..q - 1 {
                base += (ranges[k].start + idx[k]) * strides[k];
            }
            let other = (base as i64 + offset) as usize;
            let a = &data[base..base + inner_len];
            let b = &data[other..other + inner_len];
            acc += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            if !advance(&mut idx, &outer_extents) {
                break;
            }
        }
        return CovMatrix::from_vec(1, vec![acc]);
    }

    let mut acc = vec![Compensated::default(); p * p];
    loop {
        let mut base: usize = inner.start;
        for k in 0..q - 1 {
            base += (ranges[k].start + idx[k]) * strides[k];
        }
        for t in 0..inner_len {
            let i = (base + t) * p;
            let o = ((base + t) as i64 + offset) as usize * p;
            for r in 0..p {
                let xr = data[i + r];
                for c in 0..p {
                    acc[r * p + c].add(xr * data[o + c]);
                }
            }
        }
        if !advance(&mut idx, &outer_extents) {
            break;
        }
    }
    CovMatrix::from_vec(p, acc.iter().map(|a| a.value()).collect())
}

/// Sample autocovariance at a lag: the product sums normalized by the
/// overlap count. Satisfies sample_autocov(f, -j) = transpose of
/// sample_autocov(f, j).
pub fn sample_autocov(field: &Field, lag: &[i64]) -> Result<CovMatrix> {
    if lag.len() != field.q() {
        return Err(Error::ShapeMismatch(format!(
            "lag rank {} != field rank {}",
            lag.len(),
            field.q()
        )));
    }
    let count = overlap_count(field.shape(), lag);
    let mut sums = product_sums(field, lag)?;
    let inv = 1.0 / count as f64;
    let p = field.p();
    for r in 0..p {
        for c in 0..p {
            sums.set(r, c, sums.get(r, c) * inv);
        }
    }
    Ok(sums)
}

fn validate_box(field: &Field, m: &[usize]) -> Result<()> {
    if m.len() != field.q() {
        return Err(Error::ShapeMismatch(format!(
            "m rank {} != field rank {}",
            m.len(),
            field.q()
        )));
    }
    for k in 0..m.len() {
        if m[k] >= field.shape()[k] {
            return Err(Error::invalid(format!(
                "m {m:?} must be componentwise smaller than the grid {:?}",
                field.shape()
            )));
        }
    }
    Ok(())
}

fn rate_warning(shape: &[usize], m: &[usize]) -> bool {
    let m_star = m.iter().copied().max().unwrap_or(0) as f64;
    let n_floor = shape.iter().copied().min().unwrap_or(1) as f64;
    m_star.powi(3) >= n_floor
}

/// Sign of the first nonzero component; 0 for the zero lag.
fn lex_sign(lag: &[i64]) -> i32 {
    for &v in lag {
        if v > 0 {
            return 1;
        }
        if v < 0 {
            return -1;
        }
    }
    0
}

/// Shared accumulation for the plain and thresholded estimators. Only
/// lex-positive lags are measured; the mirror lag enters through the
/// transpose, which is exact because weights and thresholds are even
/// in the lag.
fn lrv_core(
    field: &Field,
    m: &[usize],
    kernel: KernelSpec,
    rule: CutRule,
) -> Result<VarianceEstimate> {
    validate_box(field, m)?;
    rule.validate()?;
    let p = field.p();
    let shape = field.shape();
    let mut sigma2 = CovMatrix::zeros(p);
    let mut kept = 0usize;
    for lag in lag_box(m) {
        if lex_sign(&lag) < 0 {
            continue;
        }
        let w = weight(kernel, &lag, m)?;
        let g = sample_autocov(field, &lag)?;
        let c = cut_threshold(rule, &lag, shape);
        let mut t = CovMatrix::zeros(p);
        let mut kept_any = false;
        for r in 0..p {
            for col in 0..p {
                let v = g.get(r, col);
                if v.abs() > c {
                    t.set(r, col, v);
                    kept_any = true;
                }
            }
        }
        if lex_sign(&lag) == 0 {
            sigma2.scaled_add(w, &t);
            kept += kept_any as usize;
        } else {
            sigma2.scaled_add(w, &t);
            sigma2.scaled_add(w, &t.transpose());
            kept += 2 * kept_any as usize;
        }
    }
    Ok(VarianceEstimate {
        sigma2,
        m_used: m.to_vec(),
        kernel,
        cut: rule,
        kept_lags: kept,
        rate_warning: rate_warning(shape, m),
    })
}

/// Kernel-weighted sum of sample autocovariances over the lag box
/// |j| <= m.
pub fn lrv_estimate(field: &Field, m: &[usize], kernel: KernelSpec) -> Result<VarianceEstimate> {
    lrv_core(field, m, kernel, CutRule::None)
}

/// Cut-off variant: each autocovariance entry is kept only when its
/// magnitude strictly exceeds the rule's threshold for that lag (one
/// scalar threshold per lag, applied entrywise when p > 1). With
/// `CutRule::None` the result is bit-identical to `lrv_estimate`.
pub fn threshold_lrv(
    field: &Field,
    m: &[usize],
    kernel: KernelSpec,
    rule: CutRule,
) -> Result<VarianceEstimate> {
    lrv_core(field, m, kernel, rule)
}

/// Temporal means per spatial site: axis 0 is time, the remaining axes
/// are space. Returns p values per spatial site, spatial-lexicographic.
fn temporal_means(field: &Field) -> Vec<f64> {
    let t_extent = field.shape()[0];
    let spatial_sites: usize = field.shape()[1..].iter().product();
    let p = field.p();
    let data = field.data();
    let mut tm = vec![0.0f64; spatial_sites * p];
    for i0 in 0..t_extent {
        let base = i0 * spatial_sites;
        for s in 0..spatial_sites {
            for ch in 0..p {
                tm[s * p + ch] += data[(base + s) * p + ch];
            }
        }
    }
    let inv = 1.0 / t_extent as f64;
    for v in &mut tm {
        *v *= inv;
    }
    tm
}

/// Centered autocovariance at one lag: both factors are deviations
/// from the temporal mean at the base site's spatial location.
fn centered_autocov(field: &Field, tm: &[f64], lag: &[i64]) -> Result<CovMatrix> {
    let shape = field.shape();
    let count = overlap_count(shape, lag);
    if count == 0 {
        return Err(Error::ZeroOverlap {
            shape: shape.to_vec(),
            lag: lag.to_vec(),
        });
    }
    let (ranges, offset) = overlap_geometry(shape, lag).expect("count > 0");
    let p = field.p();
    let q = field.q();
    let data = field.data();
    let strides = field.site_strides();
    let spatial_sites: usize = shape[1..].iter().product();

    let extents: Vec<usize> = ranges.iter().map(|r| r.end - r.start).collect();
    let mut idx = vec![0usize; q];
    let mut acc = vec![0.0f64; p * p];
    loop {
        let mut base: usize = 0;
        for k in 0..q {
            base += (ranges[k].start + idx[k]) * strides[k];
        }
        let other = (base as i64 + offset) as usize;
        let sb = base % spatial_sites;
        for r in 0..p {
            let a = data[base * p + r] - tm[sb * p + r];
            for c in 0..p {
                let b = data[other * p + c] - tm[sb * p + c];
                acc[r * p + c] += a * b;
            }
        }
        if !advance(&mut idx, &extents) {
            break;
        }
    }
    let inv = 1.0 / count as f64;
    for v in &mut acc {
        *v *= inv;
    }
    CovMatrix::from_vec(p, acc)
}

/// Variant of the variance estimator for fields with a distinguished
/// time axis (axis 0): every factor is centered at its base site's
/// temporal average before the products are summed. Mirror lags are
/// computed directly because the centering breaks the transpose
/// symmetry.
pub fn lrv_estimate_centered(
    field: &Field,
    m: &[usize],
    kernel: KernelSpec,
) -> Result<VarianceEstimate> {
    if field.q() < 2 {
        return Err(Error::invalid(
            "temporally centered estimator needs a time axis plus at least one spatial axis",
        ));
    }
    if field.shape()[0] < 2 {
        return Err(Error::invalid("time extent must be at least 2"));
    }
    validate_box(field, m)?;
    let p = field.p();
    let tm = temporal_means(field);
    let mut sigma2 = CovMatrix::zeros(p);
    let mut kept = 0usize;
    for lag in lag_box(m) {
        let w = weight(kernel, &lag, m)?;
        let g = centered_autocov(field, &tm, &lag)?;
        sigma2.scaled_add(w, &g);
        kept += 1;
    }
    Ok(VarianceEstimate {
        sigma2,
        m_used: m.to_vec(),
        kernel,
        cut: CutRule::None,
        kept_lags: kept,
        rate_warning: rate_warning(field.shape(), m),
    })
}

/// Grand mean per channel; subtracting it is the practical-data option
/// for fields that are not already centered.
pub fn grand_mean(field: &Field) -> Vec<f64> {
    let p = field.p();
    let mut mean = vec![0.0f64; p];
    for row in field.data().chunks(p) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / field.num_sites() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::lag_box;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_field(shape: &[usize], p: usize, seed: u64) -> Field {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let sites: usize = shape.iter().product();
        let data: Vec<f64> = (0..sites * p)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Field::from_parts(shape.to_vec(), p, data).unwrap()
    }

    /// Definition-level oracle: loop over every site pair.
    fn naive_autocov(field: &Field, lag: &[i64]) -> CovMatrix {
        let shape = field.shape();
        let q = field.q();
        let p = field.p();
        let strides = field.site_strides();
        let mut acc = vec![0.0f64; p * p];
        let mut count = 0u64;
        let mut idx = vec![0usize; q];
        'outer: loop {
            let mut ok = true;
            let mut other = 0usize;
            for k in 0..q {
                let t = idx[k] as i64 + lag[k];
                if t < 0 || t >= shape[k] as i64 {
                    ok = false;
                    break;
                }
                other += t as usize * strides[k];
            }
            if ok {
                let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
                for r in 0..p {
                    for c in 0..p {
                        acc[r * p + c] +=
                            field.data()[base * p + r] * field.data()[other * p + c];
                    }
                }
                count += 1;
            }
            if !advance(&mut idx, shape) {
                break 'outer;
            }
        }
        let inv = 1.0 / count as f64;
        for v in &mut acc {
            *v *= inv;
        }
        CovMatrix::from_vec(p, acc).unwrap()
    }

    fn naive_lrv(field: &Field, m: &[usize], kernel: KernelSpec) -> CovMatrix {
        let p = field.p();
        let mut out = CovMatrix::zeros(p);
        for lag in lag_box(m) {
            let w = weight(kernel, &lag, m).unwrap();
            out.scaled_add(w, &naive_autocov(field, &lag));
        }
        out
    }

    #[test]
    fn three_point_example() {
        let f = Field::from_parts(vec![3], 1, vec![1.0, 2.0, 3.0]).unwrap();
        let g = sample_autocov(&f, &[1]).unwrap();
        assert_eq!(g.scalar(), (1.0 * 2.0 + 2.0 * 3.0) / 2.0);
    }

    #[test]
    fn zero_field_gives_zero_matrix() {
        let f = Field::zeros(vec![4, 5], 2).unwrap();
        let g = sample_autocov(&f, &[1, -2]).unwrap();
        assert_eq!(g.max_norm(), 0.0);
    }

    #[test]
    fn matches_naive_on_small_fields() {
        for (shape, p, seed) in [
            (vec![8usize], 1usize, 1u64),
            (vec![4, 6], 1, 2),
            (vec![4, 6], 2, 3),
            (vec![3, 4, 5], 1, 4),
            (vec![2, 3, 2, 2], 2, 5),
        ] {
            let f = random_field(&shape, p, seed);
            let maxlag: Vec<usize> = shape.iter().map(|&n| (n - 1).min(2)).collect();
            for lag in lag_box(&maxlag) {
                let fast = sample_autocov(&f, &lag).unwrap();
                let slow = naive_autocov(&f, &lag);
                for r in 0..p {
                    for c in 0..p {
                        assert!(
                            (fast.get(r, c) - slow.get(r, c)).abs() < 1e-12,
                            "shape {shape:?} lag {lag:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lrv_matches_naive_with_kernels() {
        for kernel in [
            KernelSpec::Constant,
            KernelSpec::Bartlett,
            KernelSpec::TukeyHanning,
            KernelSpec::QuadraticSpectral { bandwidth_bw: 6.4 },
        ] {
            for (shape, p, seed) in [(vec![5usize, 6], 1usize, 7u64), (vec![4, 4], 2, 8)] {
                let f = random_field(&shape, p, seed);
                let est = lrv_estimate(&f, &[2, 2], kernel).unwrap();
                let naive = naive_lrv(&f, &[2, 2], kernel);
                for r in 0..p {
                    for c in 0..p {
                        assert!(
                            (est.sigma2.get(r, c) - naive.get(r, c)).abs() < 1e-10,
                            "{kernel:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn transpose_symmetry() {
        let f = random_field(&[5, 7], 2, 11);
        for lag in lag_box(&[3, 3]) {
            let neg: Vec<i64> = lag.iter().map(|v| -v).collect();
            let a = sample_autocov(&f, &lag).unwrap();
            let b = sample_autocov(&f, &neg).unwrap().transpose();
            let scale = a.max_norm().max(1.0);
            for r in 0..2 {
                for c in 0..2 {
                    assert!((a.get(r, c) - b.get(r, c)).abs() < 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn zero_overlap_is_an_error() {
        let f = random_field(&[5, 5], 1, 12);
        assert!(matches!(
            sample_autocov(&f, &[5, 0]),
            Err(Error::ZeroOverlap { .. })
        ));
    }

    #[test]
    fn m_at_or_beyond_shape_rejected_and_rate_warns() {
        let f = random_field(&[5, 5], 1, 13);
        assert!(lrv_estimate(&f, &[5, 0], KernelSpec::Constant).is_err());
        let est = lrv_estimate(&f, &[2, 2], KernelSpec::Constant).unwrap();
        assert!(est.rate_warning, "8 >= 5");
        let est = lrv_estimate(&f, &[1, 1], KernelSpec::Constant).unwrap();
        assert!(!est.rate_warning);
    }

    #[test]
    fn scaling_covariance_and_threshold_witness() {
        let f = random_field(&[6, 6], 1, 14);
        let scaled = Field::from_parts(
            vec![6, 6],
            1,
            f.data().iter().map(|v| 3.0 * v).collect(),
        )
        .unwrap();
        let a = lrv_estimate(&f, &[2, 2], KernelSpec::Bartlett).unwrap();
        let b = lrv_estimate(&scaled, &[2, 2], KernelSpec::Bartlett).unwrap();
        let rel = (b.sigma2.scalar() - 9.0 * a.sigma2.scalar()).abs()
            / a.sigma2.scalar().abs().max(1e-300);
        assert!(rel < 1e-12);

        // Absolute thresholds do not scale with the data: pick a cut
        // between the original and scaled magnitudes of some entry.
        let g = sample_autocov(&f, &[2, 2]).unwrap().scalar().abs();
        let rule = CutRule::Constant { c: 2.0 * g };
        let ka = threshold_lrv(&f, &[2, 2], KernelSpec::Constant, rule)
            .unwrap()
            .kept_lags;
        let kb = threshold_lrv(&scaled, &[2, 2], KernelSpec::Constant, rule)
            .unwrap()
            .kept_lags;
        assert_ne!(ka, kb);
    }

    #[test]
    fn rule_none_is_bit_identical() {
        let f = random_field(&[7, 5], 2, 15);
        let plain = lrv_estimate(&f, &[2, 1], KernelSpec::TukeyHanning).unwrap();
        let cut = threshold_lrv(&f, &[2, 1], KernelSpec::TukeyHanning, CutRule::None).unwrap();
        assert_eq!(plain.sigma2.as_slice(), cut.sigma2.as_slice());
        assert_eq!(plain.kept_lags, cut.kept_lags);
    }

    #[test]
    fn huge_constant_cut_zeroes_everything() {
        let f = random_field(&[6, 6], 1, 16);
        let rule = CutRule::Constant { c: 1e300 };
        let est = threshold_lrv(&f, &[2, 2], KernelSpec::Constant, rule).unwrap();
        assert_eq!(est.sigma2.scalar(), 0.0);
        assert_eq!(est.kept_lags, 0);
    }

    #[test]
    fn m_zero_equals_lag_zero_autocov() {
        let f = random_field(&[6, 7], 1, 17);
        let est = lrv_estimate(&f, &[0, 0], KernelSpec::Constant).unwrap();
        let g = sample_autocov(&f, &[0, 0]).unwrap();
        assert_eq!(est.sigma2.scalar(), g.scalar());
    }

    #[test]
    fn centered_annihilates_time_constant_fields() {
        // Constant in time at each spatial site.
        let shape = vec![4usize, 3, 2];
        let spatial: usize = 6;
        let mut data = Vec::new();
        for _t in 0..4 {
            for s in 0..spatial {
                data.push(s as f64 * 1.7 - 2.0);
            }
        }
        let f = Field::from_parts(shape, 1, data).unwrap();
        let est = lrv_estimate_centered(&f, &[1, 1, 1], KernelSpec::Constant).unwrap();
        assert!(est.sigma2.max_norm() < 1e-14);
    }

    #[test]
    fn centered_matches_direct_formula_on_toy_field() {
        // 2x2x1 grid: time extent 2, spatial 2x1.
        let f = Field::from_parts(vec![2, 2, 1], 1, vec![1.0, 2.0, 5.0, 3.0]).unwrap();
        // Temporal means per spatial site: (3.0, 2.5).
        let tm = [3.0, 2.5];
        let dev = [1.0 - 3.0, 2.0 - 2.5, 5.0 - 3.0, 3.0 - 2.5];
        // gamma-check at lag 0 and lag (1,0,0), base-site centering.
        let g0: f64 = dev.iter().map(|d| d * d).sum::<f64>() / 4.0;
        let g100 = (dev[0] * (f.data()[2] - tm[0]) + dev[1] * (f.data()[3] - tm[1])) / 2.0;
        let gm100 = ((f.data()[2] - tm[0]) * (f.data()[0] - tm[0])
            + (f.data()[3] - tm[1]) * (f.data()[1] - tm[1]))
            / 2.0;
        let est = lrv_estimate_centered(&f, &[1, 0, 0], KernelSpec::Constant).unwrap();
        assert!((est.sigma2.scalar() - (g0 + g100 + gm100)).abs() < 1e-14);
    }

    #[test]
    fn centered_rejects_short_time_axis() {
        let f = random_field(&[1, 5], 1, 18);
        assert!(lrv_estimate_centered(&f, &[0, 1], KernelSpec::Constant).is_err());
        let g = random_field(&[8], 1, 19);
        assert!(lrv_estimate_centered(&g, &[1], KernelSpec::Constant).is_err());
    }

    #[test]
    fn compensated_summation_keeps_digits() {
        let mut acc = Compensated::default();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 10.0);
    }
}
