//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (visible with `--nocapture`). Every tolerance is pinned in the assertions.
//!
//! Run with: `cargo test -p qweak-core --test acceptance -- --nocapture`

mod common;

use common::*;
use ndarray::array;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use qweak_core::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn report(name: &str, pass: bool, detail: &str) {
    println!(
        "{}: criterion {name} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {name} failed: {detail}");
}

/// 1. QND reduction: the generalized weak value of c = X/2 equals the AAV
/// weak value of X on 200 random qubit/qutrit (psi, phi, X) triples,
/// to 1e-12.
#[test]
fn criterion_1_qnd_reduction() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let dim = if k % 2 == 0 { 2 } else { 3 };
        let space = HilbertSpace::single(dim).unwrap();
        let pp = loop {
            let psi = random_ket(&mut rng, dim);
            let phi = random_ket(&mut rng, dim);
            if let Ok(pp) = PurePrePost::new(psi, phi) {
                break pp;
            }
        };
        let x = random_hermitian(&mut rng, &space);
        let lhs = generalized_weak_value(&pp, &(&x * 0.5)).unwrap();
        let rhs = aav_weak_value(&pp, &x).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    report(
        "1 (QND reduction)",
        worst < 1e-12,
        &format!("max |generalized(X/2) - aav(X)| = {worst:.3e} over 200 triples (tol 1e-12)"),
    );
}

/// 2. Anomalous weak value regression: the pinned qubit pair gives
/// -(1 + sqrt(2)) (outside sigma_z's spectrum) while the strong postselected
/// value stays inside [-1, 1].
#[test]
fn criterion_2_anomalous_weak_value() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let th = 5.0 * std::f64::consts::PI / 8.0;
    let psi = array![c(s, 0.0), c(s, 0.0)];
    let phi = array![c(th.cos(), 0.0), c(th.sin(), 0.0)];
    let pp = PurePrePost::new(psi, phi).unwrap();

    // Independent oracle: the same ratio in raw arithmetic.
    let oracle_aav =
        (th.cos() * s - th.sin() * s) / (th.cos() * s + th.sin() * s);
    let pinned = -(1.0 + 2f64.sqrt());

    let weak = aav_weak_value(&pp, &sigma_z()).unwrap();
    let strong = strong_postselected(&pp, &sigma_z()).unwrap();

    let pass = (weak - pinned).abs() < 1e-9
        && (weak - oracle_aav).abs() < 1e-12
        && weak < -1.0
        && (-1.0..=1.0).contains(&strong);
    report(
        "2 (anomalous weak value)",
        pass,
        &format!("aav = {weak:.9} (pin {pinned:.9}), strong = {strong:.9} inside [-1, 1]"),
    );
}

/// 3. Retrodiction adjointness: Tr[E_retro A] = Tr[E e^(L tau) A] on 20
/// random (effect, operator) pairs of a two-qubit model at tau = 1, to 1e-8.
#[test]
fn criterion_3_retrodiction_adjointness() {
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let model = random_two_qubit_model(&mut rng);
    let (tau, dt) = (1.0, 1e-3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let e = random_effect(&mut rng, model.space());
        let a = random_matrix(&mut rng, model.space());
        let e_retro = retropropagate(&model, &e, tau, dt).unwrap();
        let lhs = e_retro.op().matmul(&a).trace();
        let rhs = e
            .op()
            .matmul(&propagate(&model, &a, tau, dt).unwrap())
            .trace();
        worst = worst.max((lhs - rhs).norm());
    }
    report(
        "3 (retrodiction adjointness)",
        worst < 1e-8,
        &format!("max |Tr[E_retro A] - Tr[E e^(Lt) A]| = {worst:.3e} over 20 pairs (tol 1e-8)"),
    );
}

/// 4. Path equivalence: the predictive general form and the retrodictive
/// rewrite agree to 1e-8 across the resonance-fluorescence battery.
#[test]
fn criterion_4_path_equivalence() {
    let dt = 1e-4;
    let space = HilbertSpace::qubit();
    let mut worst = 0.0f64;
    for cfg in rf_battery() {
        let model = rf_model(&cfg);
        let rho0 = State::basis(&space, 0).unwrap();
        let e_t = Effect::projector(&space, &basis_ket(&space, 1).unwrap()).unwrap();

        let predictive = general_weak_value(&model, &rho0, &e_t, cfg.t, cfg.big_t, dt)
            .unwrap()
            .value;
        let e_retro = retropropagate(&model, &e_t, cfg.big_t - cfg.t, dt).unwrap();
        let rho_t = State::new(propagate(&model, rho0.op(), cfg.t, dt).unwrap()).unwrap();
        let retro = retro_weak_value(&e_retro, &rho_t, model.homodyne_op().unwrap()).unwrap();
        worst = worst.max((predictive - retro).abs());
    }
    report(
        "4 (path equivalence)",
        worst < 1e-8,
        &format!("max |predictive - retrodictive| = {worst:.3e} over the battery (tol 1e-8)"),
    );
}

/// 5. Monte Carlo convergence: the trajectory estimator agrees with the
/// closed form within 3 stderr at n_traj = 2e5, dt = 1e-3, and the stderr
/// itself is below 0.05 |value| + 0.02.
#[test]
fn criterion_5_monte_carlo_convergence() {
    let (dt, window, n_traj) = (1e-3, 0.175, 200_000);
    let space = HilbertSpace::qubit();
    let mut detail = String::new();
    let mut pass = true;
    for (k, cfg) in rf_battery().iter().enumerate() {
        let model = rf_model(cfg);
        let rho0 = State::basis(&space, 0).unwrap();
        let e_t = Effect::projector(&space, &basis_ket(&space, 1).unwrap()).unwrap();
        let exact = general_weak_value(&model, &rho0, &e_t, cfg.t, cfg.big_t, 1e-4)
            .unwrap()
            .value;
        let est = monte_carlo_weak_value(
            &model,
            &rho0,
            cfg.t,
            cfg.big_t,
            dt,
            window,
            n_traj,
            40_000 + k as u64,
        )
        .unwrap();
        let sigma_off = (est.value - exact).abs() / est.stderr;
        let stderr_bound = 0.05 * exact.abs() + 0.02;
        pass &= sigma_off < 3.0 && est.stderr < stderr_bound;
        detail.push_str(&format!(
            "[cfg {k}: {:.4}±{:.4} vs {:.4}, {:.2}σ, n_sel {}] ",
            est.value, est.stderr, exact, sigma_off, est.n_selected
        ));
    }
    report("5 (Monte Carlo convergence)", pass, detail.trim());
}

/// 6. Completeness order: the Gauss-Hermite quadrature of
/// int dx M_x^dag M_x deviates from the identity by O(dt^2) — halving dt
/// shrinks the deviation by 4x (within 20%).
#[test]
fn criterion_6_completeness_order() {
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut j = ndarray::Array2::<Complex64>::zeros((n, n));
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            j[[k - 1, k]] = c(b, 0.0);
            j[[k, k - 1]] = c(b, 0.0);
        }
        let (vals, vecs) = j.eigh(UPLO::Lower).unwrap();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        (
            vals.to_vec(),
            (0..n).map(|k| sqrt_pi * vecs[[0, k]].norm_sqr()).collect(),
        )
    }
    let deviation = |cop: &Operator, delta_t: f64| -> f64 {
        let (nodes, weights) = gauss_hermite(24);
        let scale = (2.0 / delta_t).sqrt();
        let mut acc = Operator::zeros(cop.space().clone());
        for (u, w) in nodes.iter().zip(weights.iter()) {
            let x = u * scale;
            let m = weak_meas_operator(cop, x, delta_t).unwrap();
            acc = &acc + &(&m.dagger().matmul(&m) * (scale * (u * u).exp() * w));
        }
        (&acc - &Operator::identity(cop.space().clone())).max_abs()
    };

    let mut rng = ChaCha12Rng::seed_from_u64(606);
    let random_c = &random_matrix(&mut rng, &HilbertSpace::qubit()) * 0.8;
    let mut pass = true;
    let mut detail = String::new();
    for (name, cop) in [
        ("sigma", sigma_lower()),
        ("cavity", annihilation(2).unwrap()),
        ("random", random_c),
    ] {
        let d1 = deviation(&cop, 0.02);
        let d2 = deviation(&cop, 0.01);
        let ratio = d1 / d2;
        pass &= (3.2..=4.8).contains(&ratio);
        detail.push_str(&format!("[{name}: dev({:.0e})/dev({:.0e}) = {ratio:.2}] ", 0.02, 0.01));
    }
    report("6 (completeness order dt^2)", pass, detail.trim());
}

/// 7. Stony-Brook tier agreement at desk parameters: full-ME vs effective-H
/// h(tau) within 10 (eps/kappa)^2 pointwise on tau in [0, 6/eta]; fitted
/// decay rate (kappa + gamma_perp)/2 within 5%; fit residual below
/// 10 (eps/kappa)^2.
#[test]
fn criterion_7_stonybrook_tier_agreement() {
    let p = StonyBrookParams::desk();
    let dt = 1e-3;
    let eta = p.decay_rate_eta();
    let n_pts = 600;
    let taus: Vec<f64> = (0..=n_pts)
        .map(|k| 6.0 / eta * k as f64 / n_pts as f64)
        .collect();
    let full = h_positive_curve(&p, &taus, dt, CurveMethod::FullMe).unwrap();
    let eff = h_positive_curve(&p, &taus, dt, CurveMethod::EffectiveH).unwrap();

    let bound = 10.0 * (p.epsilon / p.kappa) * (p.epsilon / p.kappa);
    let max_diff = full
        .values()
        .iter()
        .zip(eff.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    let fit = fit_zeta_omega(&full).unwrap();
    let eta_ok = (fit.eta - eta).abs() < 0.05 * eta;
    let pass = max_diff < bound && eta_ok && fit.max_residual < bound;
    report(
        "7 (Stony-Brook tier agreement)",
        pass,
        &format!(
            "max tier diff = {max_diff:.3e} (tol {bound:.1e}), eta_fit = {:.5} vs {eta} (tol 5%), \
             fit residual = {:.3e} (tol {bound:.1e}), zeta = {:.5}, Omega = {:.5}",
            fit.eta, fit.max_residual, fit.zeta, fit.omega
        ),
    );
}

/// 8. Symmetry: max_tau |h(-tau) - h(tau)| stays below 10 (eps/kappa) |zeta|
/// at desk parameters, the bound also holds at eps/2, and the bound itself
/// tightens linearly (ratio 0.5 +- 0.15; |zeta| is eps-stable).
#[test]
fn criterion_8_symmetry() {
    let dt = 1e-3;
    let asym_and_zeta = |eps: f64| {
        let mut p = StonyBrookParams::desk();
        p.epsilon = eps;
        let eta = p.decay_rate_eta();
        let n_pts = 600;
        let taus: Vec<f64> = (0..=n_pts)
            .map(|k| 6.0 / eta * k as f64 / n_pts as f64)
            .collect();
        let pos = h_positive_curve(&p, &taus, dt, CurveMethod::FullMe).unwrap();
        let neg = h_negative_curve(&p, &taus, dt).unwrap();
        let asym = pos
            .values()
            .iter()
            .zip(neg.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let fit = fit_zeta_omega(&pos).unwrap();
        (asym, fit.zeta.abs(), 10.0 * (eps / p.kappa) * fit.zeta.abs())
    };

    let eps = StonyBrookParams::desk().epsilon;
    let (asym1, _zeta1, bound1) = asym_and_zeta(eps);
    let (asym2, _zeta2, bound2) = asym_and_zeta(eps / 2.0);
    let ratio = bound2 / bound1;
    let pass = asym1 < bound1 && asym2 < bound2 && (0.35..=0.65).contains(&ratio);
    report(
        "8 (h(tau) symmetry)",
        pass,
        &format!(
            "asym(eps) = {asym1:.3e} < {bound1:.3e}; asym(eps/2) = {asym2:.3e} < {bound2:.3e}; \
             bound ratio = {ratio:.4} in [0.35, 0.65]"
        ),
    );
}

/// 9. Engine hygiene across the model battery: trace preservation to 1e-8,
/// positivity to -1e-8, and the semigroup property to 1e-7.
#[test]
fn criterion_9_engine_hygiene() {
    let mut rng = ChaCha12Rng::seed_from_u64(909);
    let mut models: Vec<(String, LindbladModel, State)> = Vec::new();

    let a = annihilation(2).unwrap();
    let decaying = LindbladModel::new(Operator::zeros(a.space().clone()), vec![&a * 2f64.sqrt()])
        .unwrap();
    let one = State::basis(decaying.space(), 1).unwrap();
    models.push(("decaying cavity".into(), decaying, one));

    let a3 = annihilation(3).unwrap();
    let h_drive = &(&a3.dagger() - &a3) * Complex64::new(0.0, 0.4);
    let driven = LindbladModel::new(h_drive, vec![&a3 * 2f64.sqrt()]).unwrap();
    let vac = State::basis(driven.space(), 0).unwrap();
    models.push(("driven cavity".into(), driven, vac));

    for cfg in rf_battery() {
        let model = rf_model(&cfg);
        let rho0 = State::basis(model.space(), 0).unwrap();
        models.push((format!("rf phi={:.2}", cfg.phi), model, rho0));
    }

    let two_qubit = random_two_qubit_model(&mut rng);
    let rho0 = random_density(&mut rng, two_qubit.space());
    models.push(("random 2-qubit".into(), two_qubit, rho0));

    let p = StonyBrookParams::desk();
    let stony = build_stonybrook(&p).unwrap();
    let rho0 = steady_state(&stony).unwrap();
    models.push(("stony-brook desk".into(), stony, rho0));

    let dt = 1e-3;
    let mut pass = true;
    let mut detail = String::new();
    for (name, model, rho0) in &models {
        let out = propagate(model, rho0.op(), 5.0, dt).unwrap();
        let trace_drift = (out.trace().re - 1.0).abs();
        let min_eig = out.eigvalsh().unwrap()[0];

        let one_shot = propagate(model, rho0.op(), 1.7, dt).unwrap();
        let first = propagate(model, rho0.op(), 1.0, dt).unwrap();
        let two_step = propagate(model, &first, 0.7, dt).unwrap();
        let semigroup = (&one_shot - &two_step).max_abs();

        let ok = trace_drift < 1e-8 && min_eig > -1e-8 && semigroup < 1e-7;
        pass &= ok;
        if !ok {
            detail.push_str(&format!(
                "[{name}: trace {trace_drift:.1e}, eig {min_eig:.1e}, semigroup {semigroup:.1e}] "
            ));
        }
    }
    if detail.is_empty() {
        detail = format!(
            "{} models: trace drift < 1e-8, min eigenvalue > -1e-8, semigroup < 1e-7",
            models.len()
        );
    }
    report("9 (engine hygiene)", pass, &detail);
}
