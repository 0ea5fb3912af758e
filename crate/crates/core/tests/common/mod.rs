//! Shared builders for the integration suites.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use qweak_core::*;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn sigma_x() -> Operator {
    let mut m = Array2::zeros((2, 2));
    m[[0, 1]] = c(1.0, 0.0);
    m[[1, 0]] = c(1.0, 0.0);
    Operator::new(HilbertSpace::qubit(), m).unwrap()
}

pub fn sigma_z() -> Operator {
    let mut m = Array2::zeros((2, 2));
    m[[0, 0]] = c(1.0, 0.0);
    m[[1, 1]] = c(-1.0, 0.0);
    Operator::new(HilbertSpace::qubit(), m).unwrap()
}

/// One resonance-fluorescence battery entry.
#[derive(Clone, Copy, Debug)]
pub struct RfConfig {
    pub omega: f64,
    /// Detuning term `(delta/2) sigma_z` added to the Hamiltonian.
    pub delta: f64,
    pub gamma: f64,
    pub eta_h: f64,
    pub eta_c: f64,
    /// Homodyne local-oscillator phase: the monitored channel is
    /// `e^{-i phi} sqrt(gamma eta_h) sigma`, measuring the rotated
    /// quadrature.
    pub phi: f64,
    pub t: f64,
    pub big_t: f64,
}

/// The postselected-weak-value battery: the plain resonance-fluorescence
/// configuration (whose x-quadrature weak value vanishes by symmetry — the
/// dynamics stays in the y-z Bloch plane), the same setup read out in the
/// y-quadrature, and a detuned variant at an intermediate phase.
pub fn rf_battery() -> Vec<RfConfig> {
    vec![
        RfConfig {
            omega: 1.0,
            delta: 0.0,
            gamma: 1.0,
            eta_h: 0.4,
            eta_c: 0.6,
            phi: 0.0,
            t: 1.0,
            big_t: 2.0,
        },
        RfConfig {
            omega: 1.0,
            delta: 0.0,
            gamma: 1.0,
            eta_h: 0.4,
            eta_c: 0.6,
            phi: std::f64::consts::FRAC_PI_2,
            t: 1.0,
            big_t: 2.0,
        },
        RfConfig {
            omega: 2.0,
            delta: 0.7,
            gamma: 1.0,
            eta_h: 0.5,
            eta_c: 0.5,
            phi: std::f64::consts::FRAC_PI_4,
            t: 0.8,
            big_t: 1.6,
        },
    ]
}

pub fn rf_model(cfg: &RfConfig) -> LindbladModel {
    let h = &(&sigma_x() * (cfg.omega / 2.0)) + &(&sigma_z() * (cfg.delta / 2.0));
    let s = sigma_lower();
    let phase = Complex64::from_polar(1.0, -cfg.phi);
    let mut cols = vec![
        &(&s * (cfg.gamma * cfg.eta_h).sqrt()) * phase,
        &s * (cfg.gamma * cfg.eta_c).sqrt(),
    ];
    let rest = 1.0 - cfg.eta_h - cfg.eta_c;
    if rest > 1e-12 {
        cols.push(&s * (cfg.gamma * rest).sqrt());
    }
    LindbladModel::new(h, cols)
        .unwrap()
        .with_homodyne(0)
        .unwrap()
        .with_counting(1)
        .unwrap()
}

pub fn random_matrix(rng: &mut ChaCha12Rng, space: &HilbertSpace) -> Operator {
    let d = space.total_dim();
    let entries = Array2::from_shape_fn((d, d), |_| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    Operator::new(space.clone(), entries).unwrap()
}

pub fn random_hermitian(rng: &mut ChaCha12Rng, space: &HilbertSpace) -> Operator {
    random_matrix(rng, space).hermitize()
}

pub fn random_ket(rng: &mut ChaCha12Rng, dim: usize) -> Array1<Complex64> {
    loop {
        let v: Array1<Complex64> = Array1::from_shape_fn(dim, |_| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.mapv(|z| z / n);
        }
    }
}

pub fn random_density(rng: &mut ChaCha12Rng, space: &HilbertSpace) -> State {
    let g = random_matrix(rng, space);
    let rho = g.matmul(&g.dagger());
    let tr = rho.trace().re;
    State::new(&rho * (1.0 / tr)).unwrap()
}

/// Random effect with spectrum squashed into [0, 1].
pub fn random_effect(rng: &mut ChaCha12Rng, space: &HilbertSpace) -> Effect {
    let herm = random_hermitian(rng, space);
    let evals = herm.eigvalsh().unwrap();
    let lo = evals[0];
    let hi = evals[evals.len() - 1];
    let scale = 1.0 / (hi - lo).max(1e-6);
    let shifted = &(&herm - &(&Operator::identity(space.clone()) * lo)) * scale;
    Effect::new(shifted).unwrap()
}

/// Random two-qubit model with two random collapse channels.
pub fn random_two_qubit_model(rng: &mut ChaCha12Rng) -> LindbladModel {
    let space = HilbertSpace::new(vec![2, 2]).unwrap();
    let h = random_hermitian(rng, &space);
    let c1 = &random_matrix(rng, &space) * 0.7;
    let c2 = &random_matrix(rng, &space) * 0.5;
    LindbladModel::new(h, vec![c1, c2]).unwrap()
}
