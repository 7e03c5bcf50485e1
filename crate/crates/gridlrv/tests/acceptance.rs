//! End-to-end acceptance checks. Each test prints one pass/fail line with
//! the measured quantities; tolerances reflect Monte Carlo standard error
//! at the replication counts used.

use gridlrv::cut::CutRule;
use gridlrv::estimators::{lrv_estimate, sample_autocov, threshold_lrv};
use gridlrv::field::{lag_box, overlap_count, ring_lags, CovMatrix, Field};
use gridlrv::inference::type1_error_experiment;
use gridlrv::kernels::{weight, weight_1d, KernelSpec};
use gridlrv::mc::mc_experiment;
use gridlrv::models::{simulate, ModelSpec, SeedSpec};
use gridlrv::subsample::{
    empirical_distribution, ring_confidence_interval, subsample_mean, subsample_quantile,
    subsample_rmse_centered, tune_alpha, SubsampleGrid,
};

fn report(num: u32, slug: &str, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {num:02} [{slug}]: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {num} [{slug}] failed: {detail}");
}

fn m1_defaults() -> (ModelSpec, [f64; 9]) {
    let spec = ModelSpec::m1_default();
    let ModelSpec::M1 { a } = spec.clone() else {
        unreachable!()
    };
    (spec, a)
}

#[test]
fn criterion_01_analytic_oracles() {
    let t0 = std::time::Instant::now();
    let (m1, a) = m1_defaults();
    let v1 = m1.analytic_sigma2().unwrap();
    let v4 = ModelSpec::M4 { rho: 0.2, a }.analytic_sigma2().unwrap();

    let mut worst_gap = 0.0f64;
    for (spec, d) in [
        (m1.clone(), 1i64),
        (ModelSpec::m2_default(), 3),
        (ModelSpec::M5 { rho: 0.3, d: 5 }, 5),
    ] {
        let mut total = 0.0;
        for h1 in -2 * d..=2 * d {
            for h2 in -2 * d..=2 * d {
                total += spec.analytic_autocov(&vec![h1, h2]).unwrap();
            }
        }
        worst_gap = worst_gap.max((total - spec.analytic_sigma2().unwrap()).abs());
    }
    let elapsed = t0.elapsed();

    let pass = (v1 - 11.56).abs() < 1e-12
        && (v4 - 13.1225).abs() < 1e-12
        && worst_gap < 1e-10
        && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        "analytic-oracles",
        pass,
        &format!(
            "sigma2(M1)={v1}, sigma2(M4,rho=0.2)={v4}, worst autocov-sum gap={worst_gap:.3e}, \
             elapsed={elapsed:?}"
        ),
    );
}

#[test]
fn criteria_02_03_tables_1_and_2() {
    let (m1, _) = m1_defaults();
    let shape = [30usize, 40];
    let reps = 2000;
    let seed = 101;
    let m_list: Vec<Vec<usize>> = (0..=9).map(|k| vec![k, k]).collect();

    let constant = mc_experiment(
        &m1,
        &shape,
        &m_list,
        KernelSpec::Constant,
        CutRule::None,
        reps,
        seed,
    )
    .unwrap();
    // Same master seed, so the QS sweep sees the exact same fields.
    let qs = mc_experiment(
        &m1,
        &shape,
        &[vec![2, 2]],
        KernelSpec::QuadraticSpectral { bandwidth_bw: 6.4 },
        CutRule::None,
        reps,
        seed,
    )
    .unwrap();

    let mean_22 = constant.rows[2].mean;
    let rmse_22 = constant.rows[2].rmse;
    let rmse_99 = constant.rows[9].rmse;
    let monotone = constant.rows[2..]
        .windows(2)
        .all(|w| w[0].rmse < w[1].rmse);

    let pass2 = (mean_22 - 11.5924).abs() <= 0.15
        && (rmse_22 - 1.8478).abs() <= 0.07 * 1.8478
        && (rmse_99 - 9.5736).abs() <= 0.10 * 9.5736
        && monotone;
    report(
        2,
        "table1-constant-kernel",
        pass2,
        &format!(
            "Mean(2,2)={mean_22:.4} (want 11.5924 +- 0.15), RMSE(2,2)={rmse_22:.4} \
             (want 1.8478 +- 7%), RMSE(9,9)={rmse_99:.4} (want 9.5736 +- 10%), \
             RMSE monotone beyond (2,2): {monotone}"
        ),
    );

    let qs_rmse_22 = qs.rows[0].rmse;
    let pass3 = (qs_rmse_22 - 1.7793).abs() <= 0.07 * 1.7793 && qs_rmse_22 < rmse_22;
    report(
        3,
        "table2-qs-kernel",
        pass3,
        &format!(
            "QS(bw=6.4) RMSE(2,2)={qs_rmse_22:.4} (want 1.7793 +- 7%), \
             beats constant {rmse_22:.4} on the same replications: {}",
            qs_rmse_22 < rmse_22
        ),
    );
}

#[test]
fn criterion_04_table3_cut_stabilization() {
    let (m1, _) = m1_defaults();
    let report_row = mc_experiment(
        &m1,
        &[30, 40],
        &[vec![2, 2], vec![3, 3], vec![4, 4]],
        KernelSpec::Constant,
        CutRule::power_l2(5.8),
        2000,
        303,
    )
    .unwrap();
    let rmses: Vec<f64> = report_row.rows.iter().map(|r| r.rmse).collect();
    let lo = rmses.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rmses.iter().cloned().fold(0.0f64, f64::max);

    let pass = rmses
        .iter()
        .all(|r| (r - 1.7597).abs() <= 0.07 * 1.7597)
        && hi / lo - 1.0 <= 0.02;
    report(
        4,
        "table3-cut-stabilization",
        pass,
        &format!(
            "cut alpha=5.8 RMSE at (2,2)/(3,3)/(4,4) = {:.4}/{:.4}/{:.4} \
             (want all 1.7597 +- 7%, spread {:.2}% <= 2%)",
            rmses[0],
            rmses[1],
            rmses[2],
            (hi / lo - 1.0) * 100.0
        ),
    );
}

#[test]
fn criterion_05_table6_m4() {
    let (_, a) = m1_defaults();
    let m4 = ModelSpec::M4 { rho: 0.2, a };
    let shape = [20usize, 30, 40];
    let reps = 1000;
    let seed = 404;
    let m_list: Vec<Vec<usize>> = vec![
        vec![0, 0, 0],
        vec![1, 1, 1],
        vec![1, 2, 2],
        vec![2, 2, 2],
        vec![3, 3, 3],
        vec![4, 4, 4],
    ];

    let plain = mc_experiment(
        &m4,
        &shape,
        &m_list,
        KernelSpec::Constant,
        CutRule::None,
        reps,
        seed,
    )
    .unwrap();
    let cut = mc_experiment(
        &m4,
        &shape,
        &[vec![2, 2, 2]],
        KernelSpec::Constant,
        CutRule::power_l2(9.4),
        reps,
        seed,
    )
    .unwrap();

    let argmin = plain
        .rows
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.rmse.total_cmp(&y.1.rmse))
        .unwrap()
        .0;
    let best_rmse = plain.rows[2].rmse;
    let cut_rmse = cut.rows[0].rmse;

    let pass = argmin == 2
        && (best_rmse - 0.8432).abs() <= 0.10 * 0.8432
        && (cut_rmse - 0.7169).abs() <= 0.10 * 0.7169
        && cut_rmse < best_rmse;
    report(
        5,
        "table6-anisotropic-m4",
        pass,
        &format!(
            "RMSE min over tested set at m={:?} (want (1,2,2)), value {best_rmse:.4} \
             (want 0.8432 +- 10%); cut alpha=9.4 at (2,2,2): {cut_rmse:.4} \
             (want 0.7169 +- 10%), improves on plain: {}",
            plain.rows[argmin].m,
            cut_rmse < best_rmse
        ),
    );
}

#[test]
fn criterion_06_table8_subsampling() {
    let (m1, _) = m1_defaults();
    let shape = [30usize, 40];
    let grid = SubsampleGrid::with_gamma(&shape, 0.9).unwrap();
    let reps = 2000u64;

    let mut mean_sub_11 = 0.0;
    let mut rmse_sub_33 = 0.0;
    for rep in 0..reps {
        let field = simulate(&m1, &shape, SeedSpec::new(20_080, rep)).unwrap();
        mean_sub_11 += subsample_mean(&field, &grid, &[1, 1]).unwrap();
        // Table rows center at the full-field estimate at the plug-in
        // bandwidth (2,2), the modal choice of the sequential selection.
        let center = lrv_estimate(&field, &[2, 2], KernelSpec::Constant)
            .unwrap()
            .sigma2
            .scalar();
        rmse_sub_33 +=
            subsample_rmse_centered(&field, &grid, &[3, 3], CutRule::None, center).unwrap();
    }
    mean_sub_11 /= reps as f64;
    rmse_sub_33 /= reps as f64;

    let pass = (mean_sub_11 - 8.7021).abs() <= 0.15
        && (rmse_sub_33 - 2.9771).abs() <= 0.10 * 2.9771;
    report(
        6,
        "table8-subsampled-mean-rmse",
        pass,
        &format!(
            "Mean_Sub(1,1)={mean_sub_11:.4} (want 8.7021 +- 0.15), \
             RMSE_Sub(3,3)={rmse_sub_33:.4} (want 2.9771 +- 10%)"
        ),
    );
}

#[test]
fn criterion_07_alpha_tuning() {
    let (m1, _) = m1_defaults();
    let alpha_grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();

    let run = |shape: [usize; 2], tol: f64, reps: u64, seed: u64| -> f64 {
        let grid = SubsampleGrid::with_gamma(&shape, 0.9).unwrap();
        let mut acc = 0.0;
        for rep in 0..reps {
            let field = simulate(&m1, &shape, SeedSpec::new(seed, rep)).unwrap();
            acc += tune_alpha(&field, &grid, &alpha_grid, tol).unwrap();
        }
        acc / reps as f64
    };

    let small = run([30, 40], 0.01, 500, 515);
    let large = run([45, 60], 0.03, 300, 616);

    let pass = (5.0..=5.8).contains(&small) && (5.7..=6.5).contains(&large);
    report(
        7,
        "alpha-tuning",
        pass,
        &format!(
            "mean tuned alpha: (30,40) tol 1% -> {small:.3} (want [5.0, 5.8]); \
             (45,60) tol 3% -> {large:.3} (want [5.7, 6.5])"
        ),
    );
}

#[test]
fn criterion_11_subsampling_ci_coverage() {
    let (m1, _) = m1_defaults();
    let shape = [60usize, 80];
    // Coverage needs blocks small relative to the grid; exponent 0.6
    // gives b=(11,13) here.
    let grid = SubsampleGrid::with_gamma(&shape, 0.6).unwrap();
    assert_eq!(grid.b(), &[11, 13]);

    let target: f64 = ring_lags(1, 2)
        .iter()
        .map(|lag| m1.analytic_autocov(lag).unwrap())
        .sum();
    assert!((target - 6.96).abs() < 1e-12);

    let reps = 1500u64;
    let mut covered = 0u64;
    for rep in 0..reps {
        let field = simulate(&m1, &shape, SeedSpec::new(909, rep)).unwrap();
        let (lo, hi) = ring_confidence_interval(&field, &grid, 1, 0.90).unwrap();
        if lo <= target && target <= hi {
            covered += 1;
        }
    }
    let coverage = covered as f64 / reps as f64;

    let pass = (0.85..=0.95).contains(&coverage);
    report(
        11,
        "ring-ci-coverage",
        pass,
        &format!("90% CI coverage of r((1,1)) over {reps} reps = {coverage:.4} (want [0.85, 0.95])"),
    );
}

#[test]
fn criterion_08_type1_error() {
    let level = 0.05;
    let reps = 2000;
    let alpha = 3.6;

    // An order-3 stencil has autocovariances out to lag 6, so the test
    // truncates at the full support (6,6); anything smaller discards
    // real variance (22% at (3,3)) and inflates the rejection rate.
    let m2 = type1_error_experiment(
        &ModelSpec::m2_default(),
        &[100, 100],
        &[6, 6],
        KernelSpec::Constant,
        CutRule::power_l2(alpha),
        level,
        reps,
        808,
    )
    .unwrap();

    // The isotropic model's correlations reach much further (order 40);
    // (5,5) keeps 98.2% of sigma2 at rho=0.3, which is what the
    // near-nominal reported rates require, at tractable cost.
    let m5 = type1_error_experiment(
        &ModelSpec::M5 { rho: 0.3, d: 40 },
        &[250, 250],
        &[5, 5],
        KernelSpec::Constant,
        CutRule::power_l2(alpha),
        level,
        reps,
        809,
    )
    .unwrap();

    let iid = type1_error_experiment(
        &ModelSpec::Sma2d {
            d: 0,
            theta: vec![1.0],
        },
        &[100, 100],
        &[0, 0],
        KernelSpec::Constant,
        CutRule::None,
        level,
        reps,
        810,
    )
    .unwrap();

    let pass = (m2 - 0.0518).abs() <= 0.015
        && (m5 - 0.0572).abs() <= 0.015
        && (iid - 0.05).abs() <= 0.015;
    report(
        8,
        "type1-error-rates",
        pass,
        &format!(
            "level 5%, alpha=3.6: M2 n=100 -> {m2:.4} (want 0.0518 +- 0.015); \
             M5 rho=0.3 n=250 -> {m5:.4} (want 0.0572 +- 0.015); \
             iid sanity -> {iid:.4} (want 0.05 +- 0.015)"
        ),
    );
}

/// Deterministic pseudo-random field for oracle batteries: splitmix64
/// stream mapped to [-1, 1).
fn synth_field(shape: &[usize], p: usize, seed: u64) -> Field {
    let mut state = seed;
    let sites: usize = shape.iter().product();
    let data: Vec<f64> = (0..sites * p)
        .map(|_| {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect();
    Field::from_parts(shape.to_vec(), p, data).unwrap()
}

/// Literal definition of the estimator: full lag box (both half
/// spaces), naive per-lag autocovariance sums, no shortcuts shared
/// with the library path.
fn oracle_lrv(field: &Field, m: &[usize], kernel: KernelSpec) -> CovMatrix {
    let shape = field.shape();
    let p = field.p();
    let data = field.data();
    let strides = field.site_strides();
    let mut sigma = CovMatrix::zeros(p);
    for lag in lag_box(m) {
        let pairs = overlap_count(shape, &lag);
        if pairs == 0 {
            continue;
        }
        let mut gamma = vec![0.0f64; p * p];
        let mut idx = vec![0usize; shape.len()];
        'sites: loop {
            let mut ok = true;
            let mut base = 0usize;
            let mut other = 0i64;
            for k in 0..shape.len() {
                let t = idx[k] as i64 + lag[k];
                if t < 0 || t >= shape[k] as i64 {
                    ok = false;
                }
                base += idx[k] * strides[k];
                other += t * strides[k] as i64;
            }
            if ok {
                let o = other as usize;
                for r in 0..p {
                    for c in 0..p {
                        gamma[r * p + c] += data[base * p + r] * data[o * p + c];
                    }
                }
            }
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    continue 'sites;
                }
                idx[k] = 0;
            }
            break;
        }
        let w = weight(kernel, &lag, m).unwrap() / pairs as f64;
        let g = CovMatrix::from_vec(p, gamma).unwrap();
        sigma.scaled_add(w, &g);
    }
    sigma
}

#[test]
fn criterion_09_property_battery() {
    let t0 = std::time::Instant::now();
    let mut checks: Vec<(String, bool)> = Vec::new();

    // Brute-force equivalence of the estimator with its definition on
    // small grids (site counts up to 64), p in {1, 2}, mixed ranks.
    let battery: &[(&[usize], usize)] = &[
        (&[2, 3], 1),
        (&[4, 4], 2),
        (&[8, 8], 1),
        (&[3, 3, 2], 2),
        (&[64], 1),
        (&[1, 7], 1),
        (&[5, 5], 2),
    ];
    let mut worst = 0.0f64;
    for (ci, &(shape, p)) in battery.iter().enumerate() {
        let field = synth_field(shape, p, 900 + ci as u64);
        let m: Vec<usize> = shape.iter().map(|&n| (n - 1).min(2)).collect();
        for kernel in [
            KernelSpec::Constant,
            KernelSpec::Bartlett,
            KernelSpec::QuadraticSpectral { bandwidth_bw: 1.5 },
        ] {
            let est = lrv_estimate(&field, &m, kernel).unwrap().sigma2;
            let want = oracle_lrv(&field, &m, kernel);
            for r in 0..p {
                for c in 0..p {
                    let denom = want.get(r, c).abs().max(1e-6);
                    worst = worst.max((est.get(r, c) - want.get(r, c)).abs() / denom);
                }
            }
        }
    }
    checks.push((format!("definition oracle (worst rel {worst:.2e})"), worst < 1e-10));

    // Transpose symmetry and quadratic scaling.
    let field = synth_field(&[6, 7], 2, 1234);
    let mut sym_ok = true;
    for lag in [[1i64, 2], [2, -1], [0, 3]] {
        let fwd = sample_autocov(&field, &lag).unwrap();
        let back = sample_autocov(&field, &[-lag[0], -lag[1]])
            .unwrap()
            .transpose();
        for r in 0..2 {
            for c in 0..2 {
                sym_ok &= (fwd.get(r, c) - back.get(r, c)).abs() < 1e-12;
            }
        }
    }
    checks.push(("transpose symmetry".into(), sym_ok));

    let scaled = Field::from_parts(
        vec![6, 7],
        2,
        field.data().iter().map(|v| 2.5 * v).collect(),
    )
    .unwrap();
    let base = lrv_estimate(&field, &[2, 2], KernelSpec::Bartlett)
        .unwrap()
        .sigma2;
    let big = lrv_estimate(&scaled, &[2, 2], KernelSpec::Bartlett)
        .unwrap()
        .sigma2;
    let mut scale_ok = true;
    for r in 0..2 {
        for c in 0..2 {
            scale_ok &=
                (big.get(r, c) - 6.25 * base.get(r, c)).abs() <= 1e-12 * base.get(r, c).abs().max(1.0);
        }
    }
    checks.push(("quadratic scaling".into(), scale_ok));

    // Kernel contracts: pointwise convergence to 1 and uniform bound.
    let kernels = [
        KernelSpec::Constant,
        KernelSpec::Bartlett,
        KernelSpec::TukeyHanning,
        KernelSpec::QuadraticSpectral { bandwidth_bw: 6.4 },
    ];
    let mut kern_ok = true;
    for spec in kernels {
        let far = weight_1d(spec, 3, 10_000).unwrap();
        let near = weight_1d(spec, 3, 10).unwrap();
        kern_ok &= (far - 1.0).abs() < 1e-3 && (far - 1.0).abs() <= (near - 1.0).abs() + 1e-12;
        for m in [1usize, 4, 9] {
            for j in 0..=m as i64 {
                kern_ok &= weight_1d(spec, j, m).unwrap().abs() <= 1.0 + 1e-12;
            }
        }
    }
    checks.push(("kernel limits and bounds".into(), kern_ok));

    // CutRule::None must be bit-identical to the plain estimator.
    let f1 = synth_field(&[9, 9], 1, 77);
    let plain = lrv_estimate(&f1, &[3, 3], KernelSpec::Constant).unwrap();
    let cut = threshold_lrv(&f1, &[3, 3], KernelSpec::Constant, CutRule::None).unwrap();
    checks.push((
        "cut=none bit equality".into(),
        plain.sigma2.as_slice() == cut.sigma2.as_slice(),
    ));

    // Subsampling quantile = order statistic.
    let values: Vec<f64> = (0..140).map(|i| ((i * 67) % 140) as f64 * 0.5).collect();
    let dist = empirical_distribution(&values, 0.0, 1.0).unwrap();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let q_ok = subsample_quantile(&dist, 0.9).unwrap() == sorted[125]
        && subsample_quantile(&dist, 0.05).unwrap() == sorted[6]
        && subsample_quantile(&dist, 0.5).unwrap() == sorted[69];
    checks.push(("quantile order statistic".into(), q_ok));

    // RMSE decomposition and byte-level determinism of reports.
    let rep = mc_experiment(
        &ModelSpec::m1_default(),
        &[12, 14],
        &[vec![1, 1], vec![2, 2]],
        KernelSpec::Constant,
        CutRule::None,
        10,
        55,
    )
    .unwrap();
    let ident_ok = rep.rows.iter().all(|r| {
        let lhs = r.rmse * r.rmse;
        (lhs - (r.variance + r.bias * r.bias)).abs() <= 1e-9 * lhs.max(1.0)
    });
    checks.push(("rmse^2 = var + bias^2".into(), ident_ok));

    let again = mc_experiment(
        &ModelSpec::m1_default(),
        &[12, 14],
        &[vec![1, 1], vec![2, 2]],
        KernelSpec::Constant,
        CutRule::None,
        10,
        55,
    )
    .unwrap();
    let sim_a = simulate(&ModelSpec::m2_default(), &[10, 11], SeedSpec::new(8, 3)).unwrap();
    let sim_b = simulate(&ModelSpec::m2_default(), &[10, 11], SeedSpec::new(8, 3)).unwrap();
    checks.push((
        "determinism".into(),
        rep.to_csv() == again.to_csv() && sim_a.data() == sim_b.data(),
    ));

    let elapsed = t0.elapsed();
    let pass = checks.iter().all(|(_, ok)| *ok) && elapsed.as_secs_f64() < 10.0;
    let detail = checks
        .iter()
        .map(|(name, ok)| format!("{name}: {}", if *ok { "ok" } else { "FAIL" }))
        .collect::<Vec<_>>()
        .join("; ");
    report(
        9,
        "property-battery",
        pass,
        &format!("{detail}; elapsed={elapsed:?} (full randomized suite runs in the property tests)"),
    );
}

#[test]
fn criterion_10_multivariate_consistency() {
    let loading = vec![vec![1.0, 0.0], vec![0.6, 0.8]];
    let spec = ModelSpec::VectorMix {
        loading: loading.clone(),
        base: vec![ModelSpec::m1_default(), ModelSpec::m1_default()],
    };
    let target = spec.analytic_sigma2_matrix().unwrap();
    // L diag(11.56, 11.56) L^T with this loading.
    let frozen = [[11.56, 6.936], [6.936, 11.56]];
    for (r, row) in frozen.iter().enumerate() {
        for (c, &want) in row.iter().enumerate() {
            assert!((target.get(r, c) - want).abs() < 1e-12);
        }
    }

    let reps = 500u64;
    let mut norms = Vec::new();
    for (si, shape) in [[30usize, 40], [60, 80], [120, 160]].iter().enumerate() {
        let mut acc = 0.0;
        for rep in 0..reps {
            let field = simulate(&spec, shape, SeedSpec::new(1010 + si as u64, rep)).unwrap();
            let est = lrv_estimate(&field, &[2, 2], KernelSpec::Constant)
                .unwrap()
                .sigma2;
            let mut err = 0.0f64;
            for r in 0..2 {
                for c in 0..2 {
                    err = err.max((est.get(r, c) - target.get(r, c)).abs());
                }
            }
            acc += err;
        }
        norms.push(acc / reps as f64);
    }

    let pass = norms[0] > norms[1] && norms[1] > norms[2];
    report(
        10,
        "multivariate-consistency",
        pass,
        &format!(
            "mean max-norm error of the 2x2 estimate vs L diag(11.56,11.56) L^T over {reps} reps: \
             (30,40) {:.4} > (60,80) {:.4} > (120,160) {:.4}",
            norms[0], norms[1], norms[2]
        ),
    );
}
