//! Seeded simulation models with closed-form variance oracles.
//!
//! Every model here is built from i.i.d. standard normal innovations, so the
//! long-run variance and the autocovariances have exact expressions that the
//! estimators can be checked against. Moving-average fields are generated on a
//! grid enlarged by the stencil order on every side, which makes the returned
//! sample exactly stationary (no edge effects). Autoregressive components are
//! started from their stationary law rather than burned in.

use crate::error::{Error, Result};
use crate::field::{CovMatrix, Field, Lag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Deterministic seed for one replication of an experiment.
///
/// The generator seed actually used is `mix64(master_seed, replication_index)`
/// where `mix64` is the SplitMix64 finalizer applied to
/// `master_seed + (index + 1) * 0x9e3779b97f4a7c15`. Distinct
/// `(master_seed, replication_index)` pairs therefore map to well-separated
/// generator states, so replications can run concurrently with no shared RNG.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replication_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        SeedSpec {
            master_seed,
            replication_index,
        }
    }

    /// The derived 64-bit seed for this replication's generator.
    pub fn stream_seed(&self) -> u64 {
        mix64(self.master_seed, self.replication_index)
    }
}

/// SplitMix64 finalizer over `master + (index+1)·gamma`.
fn mix64(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A simulatable random-field model.
///
/// Scalar models (everything except `VectorMix`) produce univariate fields.
/// The two-dimensional moving-average family is
/// `xi[i] = sum_j c[j] eps[i+j]` for a finite stencil `c`; `M4` and
/// `Multiplicative` are three-dimensional with axis 0 playing the role of
/// time.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    /// 3x3 moving average. `a` is the stencil row-major over offsets
    /// (-1..=1, -1..=1), so `a[4]` is the centre coefficient.
    M1 { a: [f64; 9] },
    /// 7x7 moving average with concentric max-norm rings: centre weight 1,
    /// rings 1..3 weighted `a1`, `a2`, `a3`.
    M2 { a1: f64, a2: f64, a3: f64 },
    /// General two-dimensional moving average of order `d`. `theta` is the
    /// full (2d+1)x(2d+1) coefficient table, row-major over offsets
    /// (-d..=d, -d..=d); no implicit centre term is added.
    Sma2d { d: usize, theta: Vec<f64> },
    /// Time-space mixture on a 3-d grid: each spatial site carries its own
    /// AR(1) series in time (coefficient `rho`, unit innovations, stationary
    /// start), plus an independent 3x3 moving-average field per time slice
    /// with stencil `a` (layout as in `M1`). The two parts are independent.
    M4 { rho: f64, a: [f64; 9] },
    /// Isotropic moving average of order `d` with coefficients
    /// `rho^sqrt(j1^2+j2^2)` on (-d..=d)^2 plus a bare innovation, so the
    /// effective centre coefficient is 2.
    M5 { rho: f64, d: usize },
    /// Product field on a 3-d grid: `xi[(t, s)] = T[t] * S[s]` where `T` is a
    /// stationary AR(1) series with coefficient `rho_t` and `S` is an
    /// independent two-dimensional moving-average field. The spatial factor
    /// must be one of the 2-d moving-average variants.
    Multiplicative { rho_t: f64, spatial: Box<ModelSpec> },
    /// p-variate field obtained by mixing independent scalar base fields
    /// through a loading matrix: `xi[i][r] = sum_c loading[r][c] base_c[i]`.
    /// All base specs must share the same grid dimension.
    VectorMix {
        loading: Vec<Vec<f64>>,
        base: Vec<ModelSpec>,
    },
}

/// Stencil coefficients of a two-dimensional moving-average model, stored
/// row-major over offsets (-d..=d, -d..=d).
struct Stencil {
    d: usize,
    w: Vec<f64>,
}

impl Stencil {
    fn side(&self) -> usize {
        2 * self.d + 1
    }

    fn coeff(&self, j1: i64, j2: i64) -> f64 {
        let d = self.d as i64;
        if j1.abs() > d || j2.abs() > d {
            return 0.0;
        }
        self.w[((j1 + d) as usize) * self.side() + (j2 + d) as usize]
    }

    fn sum(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Autocovariance of the driven field at lag `(h1, h2)`: the correlation
    /// of the coefficient table with itself under that shift.
    fn autocov(&self, h1: i64, h2: i64) -> f64 {
        let d = self.d as i64;
        let mut acc = 0.0;
        for j1 in -d..=d {
            for j2 in -d..=d {
                acc += self.coeff(j1, j2) * self.coeff(j1 + h1, j2 + h2);
            }
        }
        acc
    }
}

impl ModelSpec {
    /// The 3x3 moving average with centre coefficient 1 and all eight
    /// neighbours weighted 0.3.
    pub fn m1_default() -> Self {
        let mut a = [0.3; 9];
        a[4] = 1.0;
        ModelSpec::M1 { a }
    }

    /// The 7x7 ring model with weights (0.5, 0.3, 0.1).
    pub fn m2_default() -> Self {
        ModelSpec::M2 {
            a1: 0.5,
            a2: 0.3,
            a3: 0.1,
        }
    }

    /// Grid dimension the model generates (length of `shape`).
    pub fn q(&self) -> usize {
        match self {
            ModelSpec::M1 { .. }
            | ModelSpec::M2 { .. }
            | ModelSpec::Sma2d { .. }
            | ModelSpec::M5 { .. } => 2,
            ModelSpec::M4 { .. } | ModelSpec::Multiplicative { .. } => 3,
            ModelSpec::VectorMix { base, .. } => base.first().map_or(2, |b| b.q()),
        }
    }

    /// Number of components per site the model generates.
    pub fn p(&self) -> usize {
        match self {
            ModelSpec::VectorMix { loading, .. } => loading.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64], what: &str| -> Result<()> {
            if xs.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{what} must be finite")));
            }
            Ok(())
        };
        let ar_ok = |rho: f64, what: &str| -> Result<()> {
            if !(rho.is_finite() && rho.abs() < 1.0) {
                return Err(Error::invalid(format!(
                    "{what} must satisfy |rho| < 1, got {rho}"
                )));
            }
            Ok(())
        };
        match self {
            ModelSpec::M1 { a } => finite(a, "M1 coefficients"),
            ModelSpec::M2 { a1, a2, a3 } => finite(&[*a1, *a2, *a3], "M2 ring weights"),
            ModelSpec::Sma2d { d, theta } => {
                let side = 2 * d + 1;
                if theta.len() != side * side {
                    return Err(Error::invalid(format!(
                        "SMA2D order {d} needs {} coefficients, got {}",
                        side * side,
                        theta.len()
                    )));
                }
                finite(theta, "SMA2D coefficients")
            }
            ModelSpec::M4 { rho, a } => {
                ar_ok(*rho, "M4 rho")?;
                finite(a, "M4 spatial coefficients")
            }
            ModelSpec::M5 { rho, .. } => ar_ok(*rho, "M5 rho"),
            ModelSpec::Multiplicative { rho_t, spatial } => {
                ar_ok(*rho_t, "temporal rho")?;
                spatial.validate()?;
                if spatial.as_ref().ma_stencil().is_none() {
                    return Err(Error::invalid(
                        "multiplicative spatial factor must be a 2-d moving-average model",
                    ));
                }
                Ok(())
            }
            ModelSpec::VectorMix { loading, base } => {
                if base.is_empty() || loading.is_empty() {
                    return Err(Error::invalid("VectorMix needs at least one base model"));
                }
                for row in loading {
                    if row.len() != base.len() {
                        return Err(Error::invalid(format!(
                            "loading rows must have {} entries, got {}",
                            base.len(),
                            row.len()
                        )));
                    }
                    finite(row, "loading entries")?;
                }
                let q0 = base[0].q();
                for b in base {
                    if matches!(b, ModelSpec::VectorMix { .. }) {
                        return Err(Error::invalid("VectorMix base models must be scalar"));
                    }
                    b.validate()?;
                    if b.q() != q0 {
                        return Err(Error::invalid(
                            "VectorMix base models must share one grid dimension",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// The moving-average stencil for the 2-d MA variants, including any bare
    /// innovation term folded into the centre coefficient.
    fn ma_stencil(&self) -> Option<Stencil> {
        match self {
            ModelSpec::M1 { a } => Some(Stencil { d: 1, w: a.to_vec() }),
            ModelSpec::M2 { a1, a2, a3 } => {
                let ring = [1.0, *a1, *a2, *a3];
                let d = 3i64;
                let side = (2 * d + 1) as usize;
                let mut w = vec![0.0; side * side];
                for j1 in -d..=d {
                    for j2 in -d..=d {
                        let r = j1.abs().max(j2.abs()) as usize;
                        w[((j1 + d) as usize) * side + (j2 + d) as usize] = ring[r];
                    }
                }
                Some(Stencil { d: d as usize, w })
            }
            ModelSpec::Sma2d { d, theta } => Some(Stencil {
                d: *d,
                w: theta.clone(),
            }),
            ModelSpec::M5 { rho, d } => {
                let di = *d as i64;
                let side = 2 * d + 1;
                let mut w = vec![0.0; side * side];
                for j1 in -di..=di {
                    for j2 in -di..=di {
                        let dist = ((j1 * j1 + j2 * j2) as f64).sqrt();
                        let mut c = rho.powf(dist);
                        if j1 == 0 && j2 == 0 {
                            c += 1.0;
                        }
                        w[((j1 + di) as usize) * side + (j2 + di) as usize] = c;
                    }
                }
                Some(Stencil { d: *d, w })
            }
            _ => None,
        }
    }

    /// Long-run variance of a scalar model. `VectorMix` is matrix-valued;
    /// use [`analytic_sigma2_matrix`] for it.
    pub fn analytic_sigma2(&self) -> Result<f64> {
        self.validate()?;
        match self {
            ModelSpec::M4 { rho, a } => {
                let s: f64 = a.iter().sum();
                Ok((1.0 - rho).powi(2).recip() + s * s)
            }
            ModelSpec::Multiplicative { rho_t, spatial } => {
                let st = (1.0 - rho_t).powi(2).recip();
                Ok(st * spatial.analytic_sigma2()?)
            }
            ModelSpec::VectorMix { .. } => Err(Error::invalid(
                "VectorMix has a matrix-valued long-run variance; use the matrix oracle",
            )),
            _ => {
                let s = self.ma_stencil().expect("MA variant").sum();
                Ok(s * s)
            }
        }
    }

    /// Long-run variance as a p x p matrix; scalar models give a 1x1 matrix.
    pub fn analytic_sigma2_matrix(&self) -> Result<CovMatrix> {
        match self {
            ModelSpec::VectorMix { loading, base } => {
                self.validate()?;
                let p = loading.len();
                let sig: Vec<f64> = base
                    .iter()
                    .map(|b| b.analytic_sigma2())
                    .collect::<Result<_>>()?;
                let mut out = CovMatrix::zeros(p);
                for r in 0..p {
                    for c in 0..p {
                        let v = (0..base.len())
                            .map(|k| loading[r][k] * sig[k] * loading[c][k])
                            .sum();
                        out.set(r, c, v);
                    }
                }
                Ok(out)
            }
            _ => CovMatrix::from_vec(1, vec![self.analytic_sigma2()?]),
        }
    }

    /// Autocovariance at one lag, for models where it has a closed form
    /// (the 2-d moving-average variants and `M4`).
    pub fn analytic_autocov(&self, lag: &Lag) -> Result<f64> {
        self.validate()?;
        let want_q = self.q();
        if lag.len() != want_q {
            return Err(Error::invalid(format!(
                "lag has {} entries, model is {}-dimensional",
                lag.len(),
                want_q
            )));
        }
        match self {
            ModelSpec::M4 { rho, a } => {
                let spatial = Stencil { d: 1, w: a.to_vec() };
                let mut acc = 0.0;
                if lag[1] == 0 && lag[2] == 0 {
                    acc += rho.powi(lag[0].unsigned_abs() as i32) / (1.0 - rho * rho);
                }
                if lag[0] == 0 {
                    acc += spatial.autocov(lag[1], lag[2]);
                }
                Ok(acc)
            }
            _ => match self.ma_stencil() {
                Some(st) => Ok(st.autocov(lag[0], lag[1])),
                None => Err(Error::invalid(
                    "autocovariance oracle covers the moving-average models and M4 only",
                )),
            },
        }
    }
}

/// Draw a field from `spec` on the given grid. Deterministic in `seed`; the
/// innovations of every component are consumed in a fixed documented order.
pub fn simulate(spec: &ModelSpec, shape: &[usize], seed: SeedSpec) -> Result<Field> {
    spec.validate()?;
    if shape.len() != spec.q() {
        return Err(Error::ShapeMismatch(format!(
            "model needs a {}-dimensional shape, got {:?}",
            spec.q(),
            shape
        )));
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!(
            "shape extents must be positive, got {shape:?}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed.stream_seed());
    match spec {
        ModelSpec::VectorMix { loading, base } => {
            let p = loading.len();
            let sites: usize = shape.iter().product();
            let parts: Vec<Vec<f64>> = base
                .iter()
                .map(|b| simulate_scalar(b, shape, &mut rng))
                .collect();
            let mut data = vec![0.0; sites * p];
            for (site, chunk) in data.chunks_exact_mut(p).enumerate() {
                for (r, slot) in chunk.iter_mut().enumerate() {
                    *slot = loading[r]
                        .iter()
                        .zip(&parts)
                        .map(|(l, part)| l * part[site])
                        .sum();
                }
            }
            Field::from_parts(shape.to_vec(), p, data)
        }
        _ => {
            let data = simulate_scalar(spec, shape, &mut rng);
            Field::from_parts(shape.to_vec(), 1, data)
        }
    }
}

/// Scalar-model simulation drawing from a caller-owned generator, so compound
/// models can consume disjoint segments of one stream.
fn simulate_scalar(spec: &ModelSpec, shape: &[usize], rng: &mut ChaCha12Rng) -> Vec<f64> {
    match spec {
        ModelSpec::M4 { rho, a } => {
            let spatial = Stencil { d: 1, w: a.to_vec() };
            let (nt, n1, n2) = (shape[0], shape[1], shape[2]);
            let sites = n1 * n2;
            let mut out = vec![0.0; nt * sites];
            // Per-site AR(1) in time, started from the stationary law.
            let init_scale = (1.0 - rho * rho).sqrt().recip();
            for slot in out[..sites].iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *slot = z * init_scale;
            }
            for t in 1..nt {
                let (prev, cur) = out.split_at_mut(t * sites);
                let prev = &prev[(t - 1) * sites..];
                for (slot, &x) in cur[..sites].iter_mut().zip(prev) {
                    let z: f64 = rng.sample(StandardNormal);
                    *slot = rho * x + z;
                }
            }
            // Independent spatial moving-average field per time slice.
            for t in 0..nt {
                let slice = simulate_ma2d(&spatial, n1, n2, rng);
                for (slot, v) in out[t * sites..(t + 1) * sites].iter_mut().zip(slice) {
                    *slot += v;
                }
            }
            out
        }
        ModelSpec::Multiplicative { rho_t, spatial } => {
            let stencil = spatial.ma_stencil().expect("validated spatial factor");
            let (nt, n1, n2) = (shape[0], shape[1], shape[2]);
            let mut temporal = vec![0.0; nt];
            let z: f64 = rng.sample(StandardNormal);
            temporal[0] = z * (1.0 - rho_t * rho_t).sqrt().recip();
            for t in 1..nt {
                let z: f64 = rng.sample(StandardNormal);
                temporal[t] = rho_t * temporal[t - 1] + z;
            }
            let space = simulate_ma2d(&stencil, n1, n2, rng);
            let mut out = Vec::with_capacity(nt * n1 * n2);
            for &tv in &temporal {
                out.extend(space.iter().map(|&sv| tv * sv));
            }
            out
        }
        _ => {
            let stencil = spec.ma_stencil().expect("scalar MA variant");
            simulate_ma2d(&stencil, shape[0], shape[1], rng)
        }
    }
}

/// Stencils up to this many taps convolve directly; larger ones go through
/// the FFT path.
const DIRECT_TAP_LIMIT: usize = 169;

/// Simulate a 2-d moving average on an `n1 x n2` grid: draw innovations on
/// the grid enlarged by the order on every side (row-major), then convolve.
fn simulate_ma2d(stencil: &Stencil, n1: usize, n2: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let d = stencil.d;
    let (e1, e2) = (n1 + 2 * d, n2 + 2 * d);
    let eps: Vec<f64> = (0..e1 * e2).map(|_| rng.sample(StandardNormal)).collect();
    if stencil.side() * stencil.side() <= DIRECT_TAP_LIMIT {
        convolve_direct(stencil, n1, n2, &eps)
    } else {
        convolve_fft(stencil, n1, n2, &eps)
    }
}

/// `out[i] = sum_k w[k] eps[i + k]` with `k` ranging over the stencil box.
fn convolve_direct(stencil: &Stencil, n1: usize, n2: usize, eps: &[f64]) -> Vec<f64> {
    let side = stencil.side();
    let e2 = n2 + side - 1;
    let mut out = vec![0.0; n1 * n2];
    for k1 in 0..side {
        for k2 in 0..side {
            let w = stencil.w[k1 * side + k2];
            if w == 0.0 {
                continue;
            }
            for i1 in 0..n1 {
                let src = &eps[(i1 + k1) * e2 + k2..][..n2];
                let dst = &mut out[i1 * n2..][..n2];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
    out
}

/// Same contraction as [`convolve_direct`] via zero-padded FFT convolution.
fn convolve_fft(stencil: &Stencil, n1: usize, n2: usize, eps: &[f64]) -> Vec<f64> {
    let side = stencil.side();
    let d = stencil.d;
    let (e1, e2) = (n1 + 2 * d, n2 + 2 * d);
    let p1 = good_fft_size(e1 + 2 * d);
    let p2 = good_fft_size(e2 + 2 * d);
    let mut planner = FftPlanner::<f64>::new();

    let mut a = vec![Complex::default(); p1 * p2];
    for r in 0..e1 {
        for c in 0..e2 {
            a[r * p2 + c].re = eps[r * e2 + c];
        }
    }
    // Flipped stencil turns the convolution theorem's sum into the desired
    // cross-correlation; the result we want sits at offset (2d, 2d).
    let mut g = vec![Complex::default(); p1 * p2];
    for k1 in 0..side {
        for k2 in 0..side {
            g[k1 * p2 + k2].re = stencil.w[(side - 1 - k1) * side + (side - 1 - k2)];
        }
    }
    fft2(&mut a, p1, p2, &mut planner, false);
    fft2(&mut g, p1, p2, &mut planner, false);
    for (av, gv) in a.iter_mut().zip(&g) {
        *av *= gv;
    }
    fft2(&mut a, p1, p2, &mut planner, true);
    let scale = ((p1 * p2) as f64).recip();
    let mut out = vec![0.0; n1 * n2];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            out[i1 * n2 + i2] = a[(i1 + 2 * d) * p2 + (i2 + 2 * d)].re * scale;
        }
    }
    out
}

/// In-place 2-d FFT of a `rows x cols` row-major complex grid.
fn fft2(
    data: &mut [Complex<f64>],
    rows: usize,
    cols: usize,
    planner: &mut FftPlanner<f64>,
    inverse: bool,
) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    row_fft.process(data);
    let mut t = vec![Complex::default(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = data[r * cols + c];
        }
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(rows)
    } else {
        planner.plan_fft_forward(rows)
    };
    col_fft.process(&mut t);
    for r in 0..rows {
        for c in 0..cols {
            data[r * cols + c] = t[c * rows + r];
        }
    }
}

/// Smallest integer >= `n` whose prime factors are all in {2, 3, 5}.
fn good_fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for f in [2, 3, 5] {
            while r.is_multiple_of(f) {
                r /= f;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
