mod common;

use common::*;
use exderiv::bench::{aggregate, run_raw, BenchEstimator, BenchSpec, Replication};
use exderiv::estimators::sign_pattern;
use exderiv::kernel::weight_matrix;
use exderiv::localgeom::{
    eigendecompose_sym, pinv, projection_matrices, threshold, threshold_vector, weighted_gram,
};
use exderiv::simdata::{build_f, generate, generate_linear, generate_nonlinear, true_exterior_derivative, GroundTruthSpec, ModelKind};
use exderiv::solvers::{coordinate_descent_wl1, QuadraticProblem, CD_MAX_ITER, CD_TOL};
use exderiv::{fit, load_csv, DataSet, EstimatorConfig, EstimatorKind, Kernel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn assert_gram_matches(data: &DataSet, x0: &DVector<f64>, h: f64, kernel: Kernel, tol: f64) {
    let w = weight_matrix(data, x0, h, kernel).unwrap();
    let gram = weighted_gram(data, &w).unwrap();
    let (c, r) = gram_loop(
        &rows_of(data.x()),
        data.y().as_slice(),
        w.w.as_slice(),
        x0.as_slice(),
    );
    for j in 0..c.len() {
        assert!((gram.r[j] - r[j]).abs() < tol, "R[{j}]");
        for k in 0..c.len() {
            assert!((gram.c[(j, k)] - c[j][k]).abs() < tol, "C[{j},{k}]");
        }
    }
}

#[test]
fn weighted_gram_matches_loop_in_one_dimension() {
    let data = DataSet::new(
        DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]),
        DVector::from_vec(vec![0.0, 1.0, 2.0]),
    )
    .unwrap();
    assert_gram_matches(&data, &DVector::zeros(1), 1.0, Kernel::Gaussian, 1e-14);
}

#[test]
fn weighted_gram_matches_loop_on_random_data() {
    let mut g = rng(11);
    for kernel in [Kernel::Gaussian, Kernel::Epanechnikov, Kernel::Biweight] {
        let x = gaussian_matrix(&mut g, 40, 3);
        let y = gaussian_vector(&mut g, 40);
        let data = DataSet::new(x, y).unwrap();
        let x0 = gaussian_vector(&mut g, 3) * 0.3;
        assert_gram_matches(&data, &x0, 1.7, kernel, 1e-12);
    }
}

#[test]
fn weighted_gram_is_translation_consistent() {
    let mut g = rng(12);
    let x = gaussian_matrix(&mut g, 30, 4);
    let y = gaussian_vector(&mut g, 30);
    let shift = gaussian_vector(&mut g, 4) * 5.0;
    let x0 = gaussian_vector(&mut g, 4) * 0.2;
    let a = DataSet::new(x.clone(), y.clone()).unwrap();
    let shifted = DMatrix::from_fn(30, 4, |i, j| x[(i, j)] + shift[j]);
    let b = DataSet::new(shifted, y).unwrap();
    let ga = weighted_gram(&a, &weight_matrix(&a, &x0, 1.3, Kernel::Gaussian).unwrap()).unwrap();
    let x0b = &x0 + &shift;
    let wb = weight_matrix(&b, &x0b, 1.3, Kernel::Gaussian).unwrap();
    let gb = weighted_gram(&b, &wb).unwrap();
    assert!((ga.c - gb.c).amax() < 1e-12);
    assert!((ga.r - gb.r).amax() < 1e-12);
}

#[test]
fn f_matches_the_piecewise_rule() {
    for p in 2..=32 {
        let f = build_f(p).unwrap();
        for i in 1..=p {
            for j in 1..=p {
                assert_eq!(f[(i - 1, j - 1)], f_entry(p, i, j), "p = {p}, entry ({i}, {j})");
            }
        }
    }
}

#[test]
fn exterior_derivative_matches_gram_schmidt_oracle() {
    let f = build_f(4).unwrap();
    let w = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    let oracle = project_onto(&gram_schmidt(&f, 1e-10), &w);
    assert!((true_exterior_derivative(&f, &w) - oracle).amax() < 1e-10);

    for p in [5, 8, 12, 16, 21] {
        let truth = GroundTruthSpec::new(p).unwrap();
        let beta = truth.exterior_derivative();
        let range = gram_schmidt(&truth.f, 1e-10);
        assert!((project_onto(&range, &truth.w) - &beta).amax() < 1e-10, "p = {p}");
        // Re-projection is idempotent.
        assert!((true_exterior_derivative(&truth.f, &beta) - &beta).amax() < 1e-12);
        // Orthogonal to the null space of F^T (complement of the range).
        let mut cols: Vec<DVector<f64>> = range.clone();
        for i in 0..p {
            let mut e = DVector::zeros(p);
            e[i] = 1.0;
            cols.push(e);
        }
        let full = gram_schmidt(&DMatrix::from_columns(&cols), 1e-8);
        for v in &full[range.len()..] {
            assert!((truth.f.transpose() * v).amax() < 1e-10);
            assert!(v.dot(&beta).abs() < 1e-10);
        }
    }
}

#[test]
fn p8_truth_is_sparse() {
    let truth = GroundTruthSpec::new(8).unwrap();
    let beta = truth.exterior_derivative();
    assert_eq!(
        sign_pattern(beta.as_slice(), 1e-10),
        vec![1, 0, 1, 0, 0, 0, 0, 0]
    );
}

#[test]
fn pinv_satisfies_penrose_conditions() {
    let mut g = rng(13);
    for _ in 0..10 {
        let m = gaussian_matrix(&mut g, 4, 2) * gaussian_matrix(&mut g, 2, 4);
        let x = pinv(&m, 1e-10);
        for r in penrose_residuals(&m, &x) {
            assert!(r < 1e-9, "{r}");
        }
    }
}

#[test]
fn ols_mp_is_the_minimum_norm_solution() {
    let mut g = rng(14);
    let z = gaussian_matrix(&mut g, 60, 2);
    let a = gaussian_matrix(&mut g, 2, 4);
    let x = &z * &a;
    let y = gaussian_vector(&mut g, 60);
    let data = DataSet::new(x, y).unwrap();
    let est = fit(&data, &EstimatorConfig::new(EstimatorKind::OlsMp), None).unwrap();
    let beta = est.beta();
    // Null directions of the centered design come from the null space of A.
    let mut cols: Vec<DVector<f64>> = gram_schmidt(&a.transpose(), 1e-10);
    let k = cols.len();
    for i in 0..4 {
        let mut e = DVector::zeros(4);
        e[i] = 1.0;
        cols.push(e);
    }
    let null: Vec<DVector<f64>> = gram_schmidt(&DMatrix::from_columns(&cols), 1e-8)[k..].to_vec();
    assert_eq!(null.len(), 2);
    for _ in 0..50 {
        let mut perturbed = beta.clone();
        for v in &null {
            let c: f64 = g.random_range(-1.0..1.0);
            for j in 0..4 {
                perturbed[j + 1] += c * v[j];
            }
        }
        assert!(perturbed.norm() >= beta.norm() - 1e-10);
    }
    // The perturbations leave the fitted values unchanged.
    for v in &null {
        assert!((data.x() * v).amax() < 1e-10);
    }
}

fn random_cd_instance(g: &mut rand_chacha::ChaCha8Rng) -> (QuadraticProblem, Vec<f64>) {
    loop {
        let m = gaussian_matrix(g, 2, 2);
        let a = &m * m.transpose() + DMatrix::identity(2, 2) * 0.1;
        let b = gaussian_vector(g, 2);
        let pw = vec![g.random_range(0.0..2.0), g.random_range(0.5..2.0)];
        let mu = g.random_range(0.0..2.0);
        let problem = QuadraticProblem::new(a, b, DVector::from_vec(pw.clone()), mu).unwrap();
        let report = coordinate_descent_wl1(&problem, None, CD_TOL, CD_MAX_ITER).unwrap();
        if report.beta.iter().all(|v| v.abs() < 2.9) {
            return (problem, report.beta);
        }
    }
}

#[test]
fn coordinate_descent_matches_grid_search() {
    let mut g = rng(15);
    for _ in 0..5 {
        let (problem, beta) = random_cd_instance(&mut g);
        let (a, b, pw, mu) = (&problem.a, &problem.b, problem.penalty_weights.as_slice(), problem.mu);
        let (_, best) = grid_search_2d(|u, v| quad_l1_objective(a, b, pw, mu, &[u, v]));
        let ours = quad_l1_objective(a, b, pw, mu, &beta);
        assert!((ours - best).abs() < 1e-6, "ours {ours} oracle {best}");
    }
}

#[test]
fn naledep_matches_nested_ternary_oracle() {
    let mut g = rng(16);
    let x = gaussian_matrix(&mut g, 80, 3);
    let coef = DVector::from_vec(vec![1.0, 0.0, -0.5]);
    let y = (&x * &coef).add_scalar(2.0) + gaussian_vector(&mut g, 80) * 0.3;
    let data = DataSet::new(x, y).unwrap();
    let x0 = DVector::from_vec(vec![0.1, -0.1, 0.0]);
    let cfg = EstimatorConfig::new(EstimatorKind::Naledep)
        .with_h(2.5)
        .with_lambda(0.5)
        .with_d(2)
        .with_t(0.05)
        .with_mu(0.05);
    let est = fit(&data, &cfg, Some(&x0)).unwrap();

    // Oracle: thresholded moments in bandwidth-scaled coordinates, NEDEP
    // pilot by a dense solve, then direct minimization of the objective.
    let w = weight_matrix(&data, &x0, 2.5, Kernel::Biweight).unwrap();
    let gram = weighted_gram(&data, &w).unwrap();
    let (cs, rs) = gram.scaled();
    let tc = threshold(&cs, 0.05).unwrap();
    let tr = threshold_vector(&rs, 0.05).unwrap();
    let c22 = tc.view((1, 1), (3, 3)).into_owned();
    let pair = projection_matrices(&eigendecompose_sym(&c22).unwrap(), 2).unwrap();
    let m = &tc + &pair.p_hat * 0.5;
    let pilot = m.clone().lu().solve(&tr).unwrap();
    // Zero pilot coordinates carry an infinite weight and stay at zero; the
    // oracle searches over the remaining coordinates only.
    let free: Vec<usize> = (0..4).filter(|&j| j == 0 || pilot[j] != 0.0).collect();
    let objective = |sub: &[f64]| {
        let mut bv = DVector::zeros(4);
        for (k, &j) in free.iter().enumerate() {
            bv[j] = sub[k];
        }
        let resid = &m * &bv - &tr;
        resid.norm_squared() + (1..4).filter(|&j| bv[j] != 0.0).map(|j| 0.05 * bv[j].abs() / pilot[j].abs()).sum::<f64>()
    };
    let ours = gram.scale_coefficients(&est.beta());
    for j in 0..4 {
        if !free.contains(&j) {
            assert_eq!(ours[j], 0.0);
        }
    }
    let start: Vec<f64> = free.iter().map(|&j| ours[j]).collect();
    let (oracle, _) = nested_ternary(&objective, &start, 0.5, 40);
    for (k, &j) in free.iter().enumerate() {
        assert!((ours[j] - oracle[k]).abs() < 1e-5, "coordinate {j}: {} vs {}", ours[j], oracle[k]);
    }
}

#[test]
fn covariance_converges_to_f_f_transpose() {
    let inst = generate_linear(4, 10_000, 0.0, 1.0, 2024).unwrap();
    let x = inst.data.x();
    let n = x.nrows() as f64;
    let means: Vec<f64> = (0..4).map(|j| x.column(j).sum() / n).collect();
    let f = build_f(4).unwrap();
    let target = &f * f.transpose();
    for j in 0..4 {
        for k in 0..4 {
            let cov: f64 = (0..x.nrows())
                .map(|i| (x[(i, j)] - means[j]) * (x[(i, k)] - means[k]))
                .sum::<f64>()
                / n;
            assert!((cov - target[(j, k)]).abs() < 0.1, "({j},{k}): {cov} vs {}", target[(j, k)]);
        }
    }
}

#[test]
fn nonlinear_truth_matches_finite_differences() {
    for p in [4, 8] {
        let truth = GroundTruthSpec::new(p).unwrap();
        let inst = generate_nonlinear(p, 5, 0.0, 0.0, 1).unwrap();
        let f = |xi: &[f64]| truth.nonlinear_response(xi);
        let grad = DVector::from_vec(fd_gradient(&f, &vec![0.0; p], 1e-5));
        let tangent = project_onto(&gram_schmidt(&truth.f, 1e-10), &grad);
        let beta = inst.beta_true.rows(1, p);
        assert!((tangent - beta).amax() < 1e-4, "p = {p}");
        assert_eq!(inst.beta_true[0], 1.0);
    }
}

#[test]
fn csv_round_trip_of_simulated_instance() {
    let inst = generate(ModelKind::Nonlinear, 6, 50, 0.01, 0.25, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    inst.data.save_csv(&path, "y").unwrap();
    let back = load_csv(&path, "y").unwrap();
    assert!((back.x() - inst.data.x()).amax() < 1e-12);
    assert!((back.y() - inst.data.y()).amax() < 1e-12);
}

#[test]
fn aggregation_matches_streaming_pass() {
    let mut spec = BenchSpec::new(vec![
        BenchEstimator::Fixed(EstimatorConfig::new(EstimatorKind::Ridge).with_lambda(0.1)),
        BenchEstimator::Fixed(EstimatorConfig::new(EstimatorKind::Ede).with_d(6)),
    ]);
    spec.n = 60;
    spec.replications = 7;
    let reps = run_raw(&spec).unwrap();
    let table = aggregate(&spec, &reps);
    for (j, row) in table.rows.iter().enumerate() {
        let errs: Vec<f64> = reps.iter().map(|r| r.errors[j].unwrap()).collect();
        let (m, s) = welford(&errs);
        assert!((row.mean_err.unwrap() - m).abs() < 1e-12);
        assert!((row.sd_err.unwrap() - s).abs() < 1e-12);
    }
}

#[test]
fn two_replication_arithmetic() {
    // Noiseless full-rank data: exact recovery. Ridge with a large penalty
    // gives a known nonzero error.
    let inst = generate_linear(4, 200, 0.0, 0.0, 5).unwrap();
    let exact = fit(&inst.data, &EstimatorConfig::new(EstimatorKind::Ede).with_lambda(0.0).with_d(4), None).unwrap();
    let e1 = (exact.beta_at(&inst.x0) - &inst.beta_true).norm_squared();
    let biased = fit(&inst.data, &EstimatorConfig::new(EstimatorKind::Ede).with_d(0).with_lambda(5.0), None).unwrap();
    let e2 = (biased.beta_at(&inst.x0) - &inst.beta_true).norm_squared();
    assert!(e1 < 1e-20 && e2 > 1e-3);

    let spec = BenchSpec::new(vec![BenchEstimator::Fixed(EstimatorConfig::new(EstimatorKind::Ede))]);
    let reps = vec![
        Replication { seed: 1, errors: vec![Some(e1)], times_s: vec![Some(0.0)] },
        Replication { seed: 2, errors: vec![Some(e2)], times_s: vec![Some(0.0)] },
    ];
    let row = &aggregate(&spec, &reps).rows[0];
    assert!((row.mean_err.unwrap() - (e1 + e2) / 2.0).abs() < 1e-15);
    assert!((row.sd_err.unwrap() - (e1 - e2).abs() / 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn ede_on_singular_design_stays_tangent() {
    let mut g = rng(17);
    let z = gaussian_matrix(&mut g, 100, 2);
    let a = gaussian_matrix(&mut g, 2, 5);
    let x = &z * &a;
    let y = gaussian_vector(&mut g, 100);
    let data = DataSet::new(x, y).unwrap();
    let cfg = EstimatorConfig::new(EstimatorKind::Ede).with_lambda(1.0).with_d(2);
    let est = fit(&data, &cfg, None).unwrap();
    let tangent = gram_schmidt(&a.transpose(), 1e-10);
    let normal_part = &est.dxf_hat - project_onto(&tangent, &est.dxf_hat);
    assert!(normal_part.norm() < 1e-6, "{}", normal_part.norm());
}

#[test]
fn nalede_recovers_sparse_signs_on_orthonormal_design() {
    let coef = DVector::from_vec(vec![1.5, 0.0, -2.0, 0.0, 0.0]);
    let truth_signs = sign_pattern(coef.as_slice(), 0.0);
    let mut hits = 0;
    for seed in 0..20 {
        let mut g = rng(100 + seed);
        let n = 60;
        // Columns orthogonal to each other and to the intercept.
        let mut cols = vec![DVector::from_element(n, 1.0)];
        cols.extend(gaussian_matrix(&mut g, n, 5).column_iter().map(|c| c.into_owned()));
        let q = gram_schmidt(&DMatrix::from_columns(&cols), 1e-8);
        let x = DMatrix::from_columns(&q[1..]) * (n as f64).sqrt();
        let y = (&x * &coef).add_scalar(1.0);
        let data = DataSet::new(x, y).unwrap();
        let cfg = EstimatorConfig::new(EstimatorKind::Nalede)
            .with_h(1e6)
            .with_kernel(Kernel::Gaussian)
            .with_d(5)
            .with_mu(0.1);
        let est = fit(&data, &cfg, Some(&DVector::zeros(5))).unwrap();
        if sign_pattern(est.dxf_hat.as_slice(), 0.0) == truth_signs {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20");
}
