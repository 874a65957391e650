use msaccel::baselines::*;
use msaccel::data::synthetic_gaussian;
use msaccel::linalg::{distance, norm, top_eigenvalue_psd};
use msaccel::objectives::{make_logistic, make_quadratic, make_worst_case, Objective};
use msaccel::{Budget, Error, Reference};
use ndarray::{array, Array1, Array2};

fn spd_quadratic() -> (msaccel::objectives::Quadratic, Array1<f64>) {
    let q = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 0.2]];
    let xs = array![1.0, -2.0, 0.5];
    let b = q.dot(&xs);
    (make_quadratic(q, b).unwrap(), xs)
}

#[test]
fn newton_solves_quadratic_in_one_step() {
    let (f, xs) = spd_quadratic();
    let reference = Reference { x: xs.clone() };
    let trace = baseline_run(
        &f,
        &array![10.0, 10.0, 10.0],
        &Method::Newton,
        Budget::calls(1),
        Some(&reference),
    )
    .unwrap();
    assert_eq!(trace.records.len(), 2);
    assert!(trace.final_gap().unwrap() < 1e-10);
    // the floor regularization perturbs the step by about λ·‖Q⁻¹‖·‖x₀ − x★‖
    assert!(distance(&trace.final_x, &xs) < 1e-7);
}

#[test]
fn gd_contracts_on_identity() {
    let f = make_quadratic(Array2::eye(2), Array1::zeros(2)).unwrap();
    let x0 = array![1.0, -3.0];
    for eta in [0.3, 1.0, 1.5] {
        let trace = baseline_run(&f, &x0, &Method::Gd { eta }, Budget::calls(7), None).unwrap();
        for r in &trace.records {
            let scale = (1.0f64 - eta).powi(r.t as i32);
            let expected = 0.5 * scale * scale * x0.dot(&x0);
            assert!(
                (r.f - expected).abs() <= 1e-14 * (1.0 + expected),
                "eta {eta} t {}",
                r.t
            );
        }
    }
}

#[test]
fn song_schedule_plug_in() {
    assert_eq!(song_schedule(3, 1.0, 0.5), 1.0);
    assert_eq!(song_schedule(0, 1.0, 0.5), 0.0);
    assert!((song_schedule(6, 2.0, 1.0) - 2f64.powf(3.5) / 4.0).abs() < 1e-15);
}

#[test]
fn iterate_amsn_fo_on_quadratic_halves_lambda() {
    let (f, xs) = spd_quadratic();
    let reference = Reference { x: xs };
    let lambda1 = 0.1;
    let trace = iterate_oracle_run(
        &f,
        &array![2.0, 2.0, 2.0],
        IterateOracle::AmsnFo,
        lambda1,
        0.5,
        Budget::calls(6),
        Some(&reference),
    )
    .unwrap();
    for r in &trace.records[1..] {
        let expected = lambda1 * 2f64.powi(1 - r.t as i32);
        assert_eq!(r.lambda, Some(expected));
    }
    for c in &trace.calls {
        assert_eq!(c.lambda, c.lambda_query);
    }
}

#[test]
fn stationary_start_exits_immediately() {
    let (f, xs) = spd_quadratic();
    let reference = Reference { x: xs.clone() };
    for which in [IterateOracle::Amsn, IterateOracle::AmsnFo] {
        let trace = iterate_oracle_run(
            &f,
            &xs,
            which,
            0.1,
            0.5,
            Budget::calls(20),
            Some(&reference),
        )
        .unwrap();
        assert_eq!(trace.calls.len(), 1);
        assert_eq!(trace.final_gap(), Some(0.0));
    }
}

#[test]
fn iterate_amsn_descends_on_chain() {
    let f = make_worst_case(50).unwrap();
    let sigma = 0.5;
    let reference = Reference { x: f.minimizer() };
    let trace = iterate_oracle_run(
        &f,
        &Array1::zeros(50),
        IterateOracle::Amsn,
        0.1,
        sigma,
        Budget::calls(30),
        Some(&reference),
    )
    .unwrap();
    assert_eq!(trace.records.len(), 31);
    // replay the iterates to get step lengths
    let mut x = Array1::<f64>::zeros(50);
    let mut query = 0.1;
    for r in &trace.records[1..] {
        let res = msaccel::oracles::amsn(&f, &x, query, sigma, false).unwrap();
        let lam = res.lambda;
        assert_eq!(Some(lam), r.lambda);
        let prev_f = f.value(&x).unwrap();
        let slack = 0.5 * lam * (1.0 - sigma * sigma) * distance(&res.x, &x).powi(2);
        assert!(
            r.f <= prev_f - slack + 1e-9,
            "t {}: {} vs {}",
            r.t,
            r.f,
            prev_f - slack
        );
        x = res.x;
        query = 0.5 * lam;
    }
}

#[test]
fn cr_with_true_constant_descends_on_chain() {
    // the chain Hessian is 6-Lipschitz per difference; 48 bounds it in ℓ2
    let f = make_worst_case(30).unwrap();
    let trace = baseline_run(
        &f,
        &Array1::zeros(30),
        &Method::Cr { m: 96.0 },
        Budget::calls(40),
        None,
    )
    .unwrap();
    for pair in trace.records.windows(2) {
        assert!(pair[1].f <= pair[0].f, "t {}", pair[1].t);
    }
}

#[test]
fn agd_beats_classical_envelope() {
    let (f, xs) = spd_quadratic();
    let reference = Reference { x: xs.clone() };
    let lmax = top_eigenvalue_psd(f.matrix(), 1e-14, 10_000);
    let eta = 1.0 / lmax;
    let x0 = array![5.0, -5.0, 5.0];
    let trace = baseline_run(
        &f,
        &x0,
        &Method::Agd { eta },
        Budget::calls(100),
        Some(&reference),
    )
    .unwrap();
    let r0 = distance(&x0, &xs).powi(2);
    for r in &trace.records[1..] {
        let envelope = 2.0 * r0 / (eta * (r.t as f64 + 1.0).powi(2));
        assert!(r.gap.unwrap() <= envelope, "t {}", r.t);
    }
}

#[test]
fn acr_and_song_make_progress_on_logistic() {
    let data = synthetic_gaussian(100, 10, 9).unwrap();
    let f = make_logistic(&data).unwrap();
    let x0 = Array1::zeros(10);
    let star = newton_minimize(&f, &x0, 1e-13, 100).unwrap();
    assert!(star.grad_norm <= 1e-13);
    let reference = Reference { x: star.x };
    let h = 1.0;
    let r = newton_distance_estimate(&f, &x0, SONG_DISTANCE_STEPS).unwrap();
    for m in [
        Method::Acr { h },
        Method::Song { h, r },
        Method::Cr { m: 2.0 * h },
    ] {
        let trace = baseline_run(&f, &x0, &m, Budget::calls(40), Some(&reference)).unwrap();
        assert!(
            trace.final_gap().unwrap() < 0.1 * trace.records[0].gap.unwrap(),
            "{}",
            m.tag()
        );
    }
}

#[test]
fn song_rows_carry_potential_fields() {
    let f = make_worst_case(10).unwrap();
    let trace = baseline_run(
        &f,
        &Array1::zeros(10),
        &Method::Song { h: 24.0, r: 3.0 },
        Budget::calls(5),
        Some(&Reference { x: f.minimizer() }),
    )
    .unwrap();
    for r in &trace.records {
        assert!(r.a.is_some() && r.d.is_some() && r.e.is_some());
    }
    assert!((trace.records[3].a.unwrap() - song_schedule(3, 24.0, 3.0)).abs() < 1e-15);
}

#[test]
fn divergence_keeps_finite_prefix() {
    let f = make_quadratic(Array2::eye(2), Array1::zeros(2)).unwrap();
    let err = baseline_run(
        &f,
        &array![1.0, 1.0],
        &Method::Gd { eta: 1e200 },
        Budget::calls(10),
        None,
    )
    .unwrap_err();
    assert!(matches!(err.error, Error::Divergence { .. }));
    assert!(err.trace.records.iter().all(|r| r.f.is_finite()));
    assert!(!err.trace.records.is_empty());
}

#[test]
fn invalid_methods_are_rejected() {
    let f = make_quadratic(Array2::eye(2), Array1::zeros(2)).unwrap();
    for m in [
        Method::Gd { eta: 0.0 },
        Method::Cr { m: -1.0 },
        Method::Song { h: 1.0, r: 0.0 },
    ] {
        let err = baseline_run(&f, &array![1.0, 1.0], &m, Budget::calls(3), None).unwrap_err();
        assert!(matches!(err.error, Error::InvalidInput(_)), "{}", m.tag());
    }
}

#[test]
fn tuning_picks_interior_step() {
    let (f, xs) = spd_quadratic();
    let reference = Reference { x: xs };
    // scale the grid so that the stable range sits inside it
    let grid: Vec<f64> = STEP_SIZE_GRID.iter().map(|g| g / 3000.0).collect();
    let tuned = tune_step_size(
        &f,
        &array![1.0, 1.0, 1.0],
        true,
        &grid,
        Budget::calls(30),
        Some(&reference),
    )
    .unwrap();
    let best = tuned
        .scores
        .iter()
        .map(|s| s.1)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(tuned.trace.final_gap(), Some(best));
    assert!(tuned
        .scores
        .iter()
        .any(|&(eta, s)| eta == tuned.eta && s == best));
    assert!(norm(&tuned.trace.final_x).is_finite());
}
