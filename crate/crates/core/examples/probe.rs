// Dev scratch for deriving frozen test constants. Not part of the artifact.
use ndarray::Array2;
use num_complex::Complex64;
use qweak_core::*;
use std::time::Instant;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn sigma_x() -> Operator {
    let mut m = Array2::zeros((2, 2));
    m[[0, 1]] = c(1.0, 0.0);
    m[[1, 0]] = c(1.0, 0.0);
    Operator::new(HilbertSpace::qubit(), m).unwrap()
}

fn rf_model(omega: f64, gamma: f64, eta_h: f64, eta_c: f64) -> LindbladModel {
    let h = &sigma_x() * (omega / 2.0);
    let s = sigma_lower();
    let mut cols = vec![&s * (gamma * eta_h).sqrt(), &s * (gamma * eta_c).sqrt()];
    let rest = 1.0 - eta_h - eta_c;
    if rest > 1e-12 {
        cols.push(&s * (gamma * rest).sqrt());
    }
    LindbladModel::new(h, cols)
        .unwrap()
        .with_homodyne(0)
        .unwrap()
        .with_counting(1)
        .unwrap()
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "desk".into());
    match which.as_str() {
        "desk" => desk(),
        "battery" => battery(),
        "mc" => mc(),
        "stonymc" => stonymc(),
        _ => eprintln!("unknown probe {which}"),
    }
}

fn desk() {
    let p = StonyBrookParams::desk();
    let dt = 1e-3;
    let taus: Vec<f64> = (0..=600).map(|k| 0.01 * k as f64).collect();
    let t0 = Instant::now();
    let full = h_positive_curve(&p, &taus, dt, CurveMethod::FullMe).unwrap();
    println!("full curve: {:?}", t0.elapsed());
    let eff = h_positive_curve(&p, &taus, dt, CurveMethod::EffectiveH).unwrap();
    let neg = h_negative_curve(&p, &taus, dt).unwrap();

    let fit = fit_zeta_omega(&full).unwrap();
    println!(
        "fit: zeta = {:.10}, Omega = {:.10}, eta = {:.10}, max_resid = {:.3e}",
        fit.zeta, fit.omega, fit.eta, fit.max_residual
    );
    println!("h(0) full = {:.10}", full.values()[0]);
    println!("h(0) eff  = {:.10}", eff.values()[0]);
    println!("h(0) neg  = {:.10}", neg.values()[0]);
    println!("h at tau=1.0 full = {:.10}", full.values()[100]);
    println!("h at tau=2.0 full = {:.10}", full.values()[200]);
    println!("h at tau=3.0 full = {:.10}", full.values()[300]);
    let max_tier: f64 = full
        .values()
        .iter()
        .zip(eff.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max tier diff = {:.3e} (bound {:.3e})", max_tier, 10.0 * 1e-4);
    let max_asym: f64 = full
        .values()
        .iter()
        .zip(neg.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "max asym = {:.3e} (bound {:.3e})",
        max_asym,
        10.0 * (p.epsilon / p.kappa) * fit.zeta.abs()
    );

    // epsilon sweep for the symmetry ratio and eta drift
    for eps in [0.005, 0.02] {
        let mut p2 = p.clone();
        p2.epsilon = eps;
        let full2 = h_positive_curve(&p2, &taus, dt, CurveMethod::FullMe).unwrap();
        let neg2 = h_negative_curve(&p2, &taus, dt).unwrap();
        let fit2 = fit_zeta_omega(&full2).unwrap();
        let asym2: f64 = full2
            .values()
            .iter()
            .zip(neg2.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "eps = {eps}: asym = {:.4e}, ratio vs desk = {:.4}, zeta = {:.6}, eta = {:.6}, resid = {:.2e}",
            asym2,
            asym2 / max_asym,
            fit2.zeta,
            fit2.eta,
            fit2.max_residual
        );
    }

    // purity / fidelity diagnostics
    let st = stationary_pure_state(&p).unwrap();
    println!("fidelity = {:?}, warning = {}", st.fidelity, st.regime_warning);
    let model = build_stonybrook(&p).unwrap();
    let rho = steady_state(&model).unwrap();
    println!("purity = {:.12}", rho.purity());
    let a = p.field_op().unwrap();
    let n = a.dagger().matmul(&a);
    println!("<n>_ss = {:.6e}", expectation(&n, &rho).unwrap().re);
}

fn rf_model_phase(omega: f64, delta: f64, gamma: f64, eta_h: f64, eta_c: f64, phi: f64) -> LindbladModel {
    let mut hz = Array2::zeros((2, 2));
    hz[[0, 0]] = c(delta / 2.0, 0.0);
    hz[[1, 1]] = c(-delta / 2.0, 0.0);
    let h = &(&sigma_x() * (omega / 2.0)) + &Operator::new(HilbertSpace::qubit(), hz).unwrap();
    let s = sigma_lower();
    let phase = Complex64::from_polar(1.0, -phi);
    let mut cols = vec![
        &(&s * (gamma * eta_h).sqrt()) * phase,
        &s * (gamma * eta_c).sqrt(),
    ];
    let rest = 1.0 - eta_h - eta_c;
    if rest > 1e-12 {
        cols.push(&s * (gamma * rest).sqrt());
    }
    LindbladModel::new(h, cols)
        .unwrap()
        .with_homodyne(0)
        .unwrap()
        .with_counting(1)
        .unwrap()
}

fn battery() {
    let space = HilbertSpace::qubit();
    let configs: [(f64, f64, f64, f64, f64, f64, f64, f64); 3] = [
        (1.0, 0.0, 1.0, 0.4, 0.6, 0.0, 1.0, 2.0),
        (1.0, 0.0, 1.0, 0.4, 0.6, std::f64::consts::FRAC_PI_2, 1.0, 2.0),
        (2.0, 0.7, 1.0, 0.5, 0.5, std::f64::consts::FRAC_PI_4, 0.8, 1.6),
    ];
    for (omega, delta, gamma, eta_h, eta_c, phi, t, big_t) in configs {
        let model = rf_model_phase(omega, delta, gamma, eta_h, eta_c, phi);
        let rho0 = State::basis(&space, 0).unwrap();
        let e_t = Effect::projector(&space, &basis_ket(&space, 1).unwrap()).unwrap();
        let wv = general_weak_value(&model, &rho0, &e_t, t, big_t, 1e-4).unwrap();
        println!(
            "omega={omega} delta={delta} phi={phi:.3} t={t} T={big_t}: value = {:.10} (den {:.3e})",
            wv.value, wv.denominator.re
        );
    }
}

fn mc() {
    let space = HilbertSpace::qubit();
    for (phi, w, n) in [
        (0.0, 0.175, 200_000usize),
        (std::f64::consts::FRAC_PI_2, 0.175, 200_000),
    ] {
        let model = rf_model_phase(1.0, 0.0, 1.0, 0.4, 0.6, phi, );
        let rho0 = State::basis(&space, 0).unwrap();
        let e_t = Effect::projector(&space, &basis_ket(&space, 1).unwrap()).unwrap();
        let (t, big_t, dt) = (1.0, 2.0, 1e-3);
        let exact = general_weak_value(&model, &rho0, &e_t, t, big_t, 1e-4)
            .unwrap()
            .value;
        let t0 = Instant::now();
        let est = monte_carlo_weak_value(&model, &rho0, t, big_t, dt, w, n, 12345).unwrap();
        println!(
            "phi={phi:.3} n={n} w={w}: est = {:.5} +- {:.5} (exact {:.5}, diff/sigma = {:.2}), n_sel = {}, took {:?}",
            est.value,
            est.stderr,
            exact,
            (est.value - exact) / est.stderr,
            est.n_selected,
            t0.elapsed()
        );
    }
}

fn stonymc() {
    let mut p = StonyBrookParams::desk();
    p.epsilon = 0.1;
    let dt = 1e-3;
    let full = h_positive_tau(&p, 0.0, dt, CurveMethod::FullMe).unwrap();
    println!("h(0) full at eps=0.1: {:.6}", full);
    let t0 = Instant::now();
    let est = h_monte_carlo(&p, 0.0, dt, 0.25, 30_000, 777).unwrap();
    println!(
        "mc h(0): {:.4} +- {:.4} (n_sel {}), diff/sigma = {:.2}, took {:?}",
        est.value,
        est.stderr,
        est.n_selected,
        (est.value - full) / est.stderr,
        t0.elapsed()
    );
}
