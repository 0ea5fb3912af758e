//! Stochastic unraveling of monitored models: discrete weak-measurement
//! operators, continuous homodyne conditioning, a photon-counting jump
//! channel, and the Monte Carlo postselected-weak-value estimator that must
//! reproduce the closed-form answers.
//!
//! Noise is Ito throughout; the stepper is explicit Euler-Maruyama with a
//! Hermitize-and-renormalize guard each step. Every trajectory draws from a
//! single seeded stream in a fixed order (dW first, then the uniform jump
//! draw, both drawn every step whether or not the corresponding channel is
//! designated), so a record is fully reproducible from
//! `(model, rho0, seed, dt)`.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{liouvillian_apply, LindbladModel};
use crate::linalg::vectorize;
use crate::operator::{dsuper, hsuper, kron, Operator, State};

/// A monitored channel: the collapse operator together with its cached
/// quadrature `X = c + c^dag` (Hermitian by construction).
#[derive(Clone, Debug)]
pub struct MonitoredChannel {
    c: Operator,
    x: Operator,
}

impl MonitoredChannel {
    pub fn new(c: Operator) -> Self {
        let x = &c + &c.dagger();
        Self { c, x }
    }

    /// The model's designated homodyne channel.
    pub fn from_model(model: &LindbladModel) -> Result<Self> {
        let c = model.homodyne_op().ok_or_else(|| {
            Error::InvalidModel("model has no designated homodyne channel".into())
        })?;
        Ok(Self::new(c.clone()))
    }

    pub fn c(&self) -> &Operator {
        &self.c
    }

    /// `X = c + c^dag`.
    pub fn x(&self) -> &Operator {
        &self.x
    }
}

/// One stochastic realization of a monitored run.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    /// Grid `t_k = k dt`.
    pub times: Vec<f64>,
    /// Homodyne samples `X_w(t_k)`.
    pub xw: Vec<f64>,
    /// Times of counting jumps (a subset of the grid points).
    pub jumps: Vec<f64>,
    /// Set when a jump landed inside the requested postselection window.
    pub postselected: bool,
    /// RNG seed the record was generated from.
    pub seed: u64,
}

/// Postselection window around the nominal detection time `T`.
#[derive(Clone, Copy, Debug)]
pub struct PostselectionWindow {
    pub center: f64,
    pub half_width: f64,
}

impl PostselectionWindow {
    pub fn contains(&self, t: f64) -> bool {
        (t - self.center).abs() <= self.half_width + 1e-12
    }
}

/// Monte Carlo estimate of a postselected weak value.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate {
    pub value: f64,
    /// `sample_std / sqrt(n_selected)`; infinite when only one trajectory
    /// survived postselection.
    pub stderr: f64,
    pub n_selected: usize,
    pub n_total: usize,
    /// Half-width used both for jump selection around `T` and for the boxcar
    /// smoothing of `X_w` around `t`.
    pub window: f64,
}

/// Weak measurement (Kraus) operator for result `x` over a slice `delta_t`:
///
/// `M_x = (2 pi / dt)^{-1/4} exp(-x^2 dt / 4) [1 + dt (x c - c^dag c / 2)]`.
///
/// The Gaussian in the amplitude carries half the exponent of the outcome
/// density, so `M_x^dag M_x` integrates over x to the identity up to
/// O(dt^2) and the outcome distribution has variance 1/dt, matching the
/// homodyne current `X_w = Tr[X rho] + dW/dt`.
pub fn weak_meas_operator(c: &Operator, x: f64, delta_t: f64) -> Result<Operator> {
    if !(delta_t > 0.0) {
        return Err(Error::InvalidInput(format!(
            "delta_t = {delta_t} must be > 0"
        )));
    }
    let space = c.space().clone();
    let prefactor = (2.0 * std::f64::consts::PI / delta_t).powf(-0.25)
        * (-x * x * delta_t / 4.0).exp();
    let cdc = c.dagger().matmul(c);
    let linear = &(c * x) - &(&cdc * 0.5);
    let inner = &Operator::identity(space) + &(&linear * delta_t);
    Ok(&inner * prefactor)
}

fn validate_step_state(op: Operator) -> Result<State> {
    if !op.is_finite() {
        return Err(Error::StepSizeError {
            violation: f64::INFINITY,
        });
    }
    let state = State::renormalized_unchecked(op);
    let mut worst: f64 = 0.0;
    let entries = state.op().entries();
    for i in 0..state.op().dim() {
        let d = entries[[i, i]].re;
        if d < 0.0 {
            worst = worst.max(-d);
        }
    }
    if worst > 1e-6 {
        return Err(Error::StepSizeError { violation: worst });
    }
    Ok(state)
}

/// One homodyne conditioning step with caller-supplied noise increment `dw`:
///
/// `x_w = Tr[rho X] + dw/dt`,
/// `rho' = rho + dt L rho + dw H[c] rho`, then Hermitized and
/// trace-renormalized. The deterministic drift uses the full Liouvillian.
pub fn homodyne_step(
    model: &LindbladModel,
    rho: &State,
    dt: f64,
    dw: f64,
) -> Result<(State, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be > 0")));
    }
    let channel = MonitoredChannel::from_model(model)?;
    let xw = channel.x.matmul(rho.op()).trace().re + dw / dt;

    let drift = liouvillian_apply(model, rho.op())?;
    let kick = hsuper(&channel.c, rho.op())?;
    let next = &(rho.op() + &(&drift * dt)) + &(&kick * dw);
    Ok((validate_step_state(next)?, xw))
}

/// One photon-counting step with caller-supplied uniform draw `u`:
/// jump with probability `p1 = dt Tr[c^dag c rho]` (then `rho' ∝ c rho c^dag`),
/// otherwise the no-jump update `rho - dt/2 {c^dag c, rho}` combined with the
/// remaining channels' deterministic evolution.
pub fn counting_step(
    model: &LindbladModel,
    rho: &State,
    dt: f64,
    u: f64,
) -> Result<(State, bool)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be > 0")));
    }
    let cnt_idx = model.counting_channel().ok_or_else(|| {
        Error::InvalidModel("model has no designated counting channel".into())
    })?;
    let c_cnt = &model.collapse_ops()[cnt_idx];
    let cdc = c_cnt.dagger().matmul(c_cnt);
    let p1 = dt * cdc.matmul(rho.op()).trace().re;
    if p1 > 0.1 {
        return Err(Error::DtTooCoarse { p1 });
    }
    if u < p1 {
        let jumped = c_cnt.matmul(rho.op()).matmul(&c_cnt.dagger());
        return Ok((validate_step_state(jumped)?, true));
    }
    // No jump: everything but the counting channel evolves deterministically;
    // the counting channel contributes only its anticommutator part.
    let h = model.hamiltonian();
    let comm = &h.matmul(rho.op()) - &rho.op().matmul(h);
    let mut drift = &comm * Complex64::new(0.0, -1.0);
    for (idx, c) in model.collapse_ops().iter().enumerate() {
        if idx == cnt_idx {
            continue;
        }
        drift = &drift + &dsuper(c, rho.op())?;
    }
    let anti = &cdc.matmul(rho.op()) + &rho.op().matmul(&cdc);
    drift = &drift - &(&anti * 0.5);
    let next = rho.op() + &(&drift * dt);
    Ok((validate_step_state(next)?, false))
}

/// Precomputed vectorized superoperators for the trajectory hot loop.
///
/// Works on column-major `vec(rho)` of length `d^2`. The no-jump update is
/// the measurement-operator (Kraus) form of the Ito homodyne step,
///
/// `rho' ∝ M rho M^dag + dt sum_unmonitored c_mu rho c_mu^dag`,
/// `M = 1 + dt (-iH - (1/2) sum_mu c_mu^dag c_mu) + c_h dY`,
/// `dY = x_w dt = 2 Re<c_h> dt + dW`,
///
/// which has the same drift and diffusion terms as the plain Euler-Maruyama
/// update (the per-step difference is the zero-mean martingale
/// `(dW^2 - dt) c rho c^dag` plus O(dt^{3/2}) corrections) but is a
/// completely positive map, so conditioned states stay exactly positive at
/// the working step size (plain Euler dips to eigenvalues ~ -dt per step).
/// The counting channel's sandwich is excluded from the no-jump map and
/// realized by stochastic jumps; renormalization supplies the
/// `+Tr[c^dag c rho] rho` counterterm, so the unconditional average
/// reproduces the master equation to O(dt^2).
pub(crate) struct TrajectoryEngine {
    d: usize,
    dsq: usize,
    dt: f64,
    /// Row-major (d^2 x d^2): `B rho B^dag + dt sum_unmonitored c rho c^dag`
    /// with `B = 1 + dt A`.
    s0: Vec<Complex64>,
    /// Row-major: `B rho c_h^dag + c_h rho B^dag` (the dY coefficient).
    s1: Vec<Complex64>,
    /// Row-major: `c_h rho c_h^dag` (the dY^2 coefficient).
    s2: Vec<Complex64>,
    /// Row-major superoperator of `rho -> c_c rho c_c^dag`, if counting.
    j_cnt: Option<Vec<Complex64>>,
    /// Functional: `tr(c_h rho) = sum_k t_hom[k] vec(rho)[k]`.
    t_hom: Vec<Complex64>,
    /// Functional for `tr(c_c^dag c_c rho)`, if counting.
    t_cnt: Option<Vec<Complex64>>,
}

fn flatten_row_major(a: &Array2<Complex64>) -> Vec<Complex64> {
    let (r, c) = a.dim();
    let mut v = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            v.push(a[[i, j]]);
        }
    }
    v
}

/// Functional vector with `tr(op . rho) = sum_k f[k] vec(rho)[k]` in the
/// column-major convention: `f[r*d + k] = op[r, k]`.
fn trace_functional(op: &Operator) -> Vec<Complex64> {
    let d = op.dim();
    let mut f = vec![Complex64::new(0.0, 0.0); d * d];
    for r in 0..d {
        for k in 0..d {
            f[r * d + k] = op.entries()[[r, k]];
        }
    }
    f
}

pub(crate) struct StepScratch {
    next: Vec<Complex64>,
}

impl TrajectoryEngine {
    pub(crate) fn new(model: &LindbladModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt = {dt} must be > 0")));
        }
        let c_hom = model
            .homodyne_op()
            .ok_or_else(|| {
                Error::InvalidModel("trajectory simulation needs a homodyne channel".into())
            })?
            .clone();
        let d = model.space().total_dim();
        let space = model.space().clone();

        // B = 1 + dt (-iH - (1/2) sum_mu c_mu^dag c_mu).
        let mut a_gen = &model.hamiltonian().clone() * Complex64::new(0.0, -1.0);
        for c in model.collapse_ops() {
            a_gen = &a_gen - &(&c.dagger().matmul(c) * 0.5);
        }
        let b = &Operator::identity(space) + &(&a_gen * dt);
        let be = b.entries();
        let ce = c_hom.entries();
        let b_conj = be.mapv(|z| z.conj());
        let c_conj = ce.mapv(|z| z.conj());

        // vec(B rho B^dag) = (conj(B) kron B) vec(rho), and sandwiches for
        // the unmonitored channels enter with a dt prefactor.
        let mut s0 = kron(&b_conj, be);
        for (idx, c) in model.collapse_ops().iter().enumerate() {
            if Some(idx) == model.homodyne_channel() || Some(idx) == model.counting_channel() {
                continue;
            }
            let m = c.entries();
            s0 = s0 + kron(&m.mapv(|z| z.conj()), m).mapv(|z| z * dt);
        }
        let s1 = kron(&c_conj, be) + kron(&b_conj, ce);
        let s2 = kron(&c_conj, ce);

        let (j_cnt, t_cnt) = if let Some(c_cnt) = model.counting_op() {
            let m = c_cnt.entries();
            let jump = kron(&m.mapv(|z| z.conj()), m);
            let cdc = c_cnt.dagger().matmul(c_cnt);
            (Some(flatten_row_major(&jump)), Some(trace_functional(&cdc)))
        } else {
            (None, None)
        };

        Ok(Self {
            d,
            dsq: d * d,
            dt,
            s0: flatten_row_major(&s0),
            s1: flatten_row_major(&s1),
            s2: flatten_row_major(&s2),
            j_cnt,
            t_hom: trace_functional(&c_hom),
            t_cnt,
        })
    }

    pub(crate) fn scratch(&self) -> StepScratch {
        StepScratch {
            next: vec![Complex64::new(0.0, 0.0); self.dsq],
        }
    }

    pub(crate) fn vectorize_state(&self, rho: &State) -> Vec<Complex64> {
        vectorize(rho.op().entries())
    }

    /// One conditioning step in place. Returns `(xw, jumped)`.
    pub(crate) fn step(
        &self,
        v: &mut Vec<Complex64>,
        scratch: &mut StepScratch,
        dw: f64,
        u: f64,
    ) -> Result<(f64, bool)> {
        let n = self.dsq;
        let dt = self.dt;
        let mut m = Complex64::new(0.0, 0.0);
        for k in 0..n {
            m += self.t_hom[k] * v[k];
        }
        let two_re_m = 2.0 * m.re;
        let xw = two_re_m + dw / dt;
        let dy = two_re_m * dt + dw;

        let mut jumped = false;
        if let (Some(j), Some(tc)) = (&self.j_cnt, &self.t_cnt) {
            let mut p = Complex64::new(0.0, 0.0);
            for k in 0..n {
                p += tc[k] * v[k];
            }
            let p1 = dt * p.re;
            if p1 > 0.1 {
                return Err(Error::DtTooCoarse { p1 });
            }
            if u < p1 {
                for (r, out) in scratch.next.iter_mut().enumerate() {
                    let row = &j[r * n..(r + 1) * n];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        acc += row[k] * v[k];
                    }
                    *out = acc;
                }
                std::mem::swap(v, &mut scratch.next);
                jumped = true;
            }
        }

        if !jumped {
            let dy2 = dy * dy;
            for (r, out) in scratch.next.iter_mut().enumerate() {
                let row_0 = &self.s0[r * n..(r + 1) * n];
                let row_1 = &self.s1[r * n..(r + 1) * n];
                let row_2 = &self.s2[r * n..(r + 1) * n];
                let mut acc_0 = Complex64::new(0.0, 0.0);
                let mut acc_1 = Complex64::new(0.0, 0.0);
                let mut acc_2 = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc_0 += row_0[k] * v[k];
                    acc_1 += row_1[k] * v[k];
                    acc_2 += row_2[k] * v[k];
                }
                *out = acc_0 + acc_1 * dy + acc_2 * dy2;
            }
            std::mem::swap(v, &mut scratch.next);
        }

        // Hermitize, renormalize, and guard.
        let d = self.d;
        for r in 0..d {
            for c in (r + 1)..d {
                let a = v[c * d + r];
                let b = v[r * d + c];
                let avg = (a + b.conj()) * 0.5;
                v[c * d + r] = avg;
                v[r * d + c] = avg.conj();
            }
            v[r * d + r] = Complex64::new(v[r * d + r].re, 0.0);
        }
        let mut tr = 0.0;
        for i in 0..d {
            tr += v[i * d + i].re;
        }
        if !tr.is_finite() || tr.abs() < 1e-300 {
            return Err(Error::StepSizeError {
                violation: f64::INFINITY,
            });
        }
        let inv = 1.0 / tr;
        let mut worst: f64 = 0.0;
        for x in v.iter_mut() {
            *x *= inv;
            if !x.re.is_finite() || !x.im.is_finite() {
                return Err(Error::StepSizeError {
                    violation: f64::INFINITY,
                });
            }
        }
        for i in 0..d {
            let diag = v[i * d + i].re;
            if diag < 0.0 {
                worst = worst.max(-diag);
            }
        }
        if worst > 1e-6 {
            return Err(Error::StepSizeError { violation: worst });
        }
        Ok((xw, jumped))
    }
}

/// Standalone Wiener-increment stream with the same generator the
/// trajectories use: `dW ~ N(0, dt)` from a ChaCha stream seeded with `seed`.
pub fn wiener_increments(seed: u64, dt: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    (0..n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g * sqrt_dt
        })
        .collect()
}

fn run_trajectory(
    engine: &TrajectoryEngine,
    rho0: &State,
    n_steps: usize,
    seed: u64,
    mut on_sample: impl FnMut(usize, f64, bool),
) -> Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sqrt_dt = engine.dt.sqrt();
    let mut v = engine.vectorize_state(rho0);
    let mut scratch = engine.scratch();
    for k in 0..n_steps {
        let g: f64 = rng.sample(StandardNormal);
        let dw = g * sqrt_dt;
        let u: f64 = rng.random();
        let (xw, jumped) = engine.step(&mut v, &mut scratch, dw, u)?;
        on_sample(k, xw, jumped);
    }
    Ok(())
}

/// Simulate one trajectory, interleaving homodyne and counting conditioning
/// each step. Draw order per step: `dW` first, then the uniform `u` (both are
/// always drawn, whether or not a counting channel is designated).
pub fn simulate_trajectory(
    model: &LindbladModel,
    rho0: &State,
    t_end: f64,
    dt: f64,
    seed: u64,
    postselect: Option<&PostselectionWindow>,
) -> Result<TrajectoryRecord> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need t_end > 0 and dt > 0 (got t_end = {t_end}, dt = {dt})"
        )));
    }
    let engine = TrajectoryEngine::new(model, dt)?;
    let n_steps = (t_end / dt).ceil() as usize;
    let mut times = Vec::with_capacity(n_steps);
    let mut xw = Vec::with_capacity(n_steps);
    let mut jumps = Vec::new();
    let mut postselected = false;
    run_trajectory(&engine, rho0, n_steps, seed, |k, sample, jumped| {
        let t = k as f64 * dt;
        times.push(t);
        xw.push(sample);
        if jumped {
            jumps.push(t);
            if let Some(w) = postselect {
                if w.contains(t) {
                    postselected = true;
                }
            }
        }
    })?;
    Ok(TrajectoryRecord {
        times,
        xw,
        jumps,
        postselected,
        seed,
    })
}

/// Monte Carlo postselected weak value: simulate `n_traj` trajectories with
/// the deterministic seed schedule `seed_i = seed + i`, keep those with a
/// counting jump inside `[T - window, T + window]`, and average the boxcar
/// smoothing of `X_w` over `[t - window, t + window]`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_weak_value(
    model: &LindbladModel,
    rho0: &State,
    t: f64,
    big_t: f64,
    dt: f64,
    window: f64,
    n_traj: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(t < big_t) {
        return Err(Error::InvalidInput(format!(
            "need t < T, got t = {t}, T = {big_t}"
        )));
    }
    if window < dt {
        return Err(Error::InvalidInput(format!(
            "window = {window} must be at least dt = {dt}"
        )));
    }
    if model.counting_op().is_none() {
        return Err(Error::InvalidModel(
            "monte_carlo_weak_value needs a counting channel for postselection".into(),
        ));
    }
    let engine = TrajectoryEngine::new(model, dt)?;
    let t_end = big_t + window;
    let n_steps = (t_end / dt).ceil() as usize;
    let select = PostselectionWindow {
        center: big_t,
        half_width: window,
    };
    let smooth_lo = t - window - 1e-12;
    let smooth_hi = t + window + 1e-12;

    let per_traj: Vec<Result<Option<f64>>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut boxcar_sum = 0.0;
            let mut boxcar_n = 0usize;
            let mut selected = false;
            run_trajectory(
                &engine,
                rho0,
                n_steps,
                seed.wrapping_add(i as u64),
                |k, sample, jumped| {
                    let tk = k as f64 * dt;
                    if tk >= smooth_lo && tk <= smooth_hi {
                        boxcar_sum += sample;
                        boxcar_n += 1;
                    }
                    if jumped && select.contains(tk) {
                        selected = true;
                    }
                },
            )?;
            if selected && boxcar_n > 0 {
                Ok(Some(boxcar_sum / boxcar_n as f64))
            } else {
                Ok(None)
            }
        })
        .collect();

    // Ordered accumulation keeps the reduction independent of scheduling.
    let mut values = Vec::new();
    for r in per_traj {
        if let Some(v) = r? {
            values.push(v);
        }
    }
    let n_selected = values.len();
    if n_selected == 0 {
        return Err(Error::NoPostselectionEvents { n_total: n_traj });
    }
    let mean = values.iter().sum::<f64>() / n_selected as f64;
    let stderr = if n_selected > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (n_selected - 1) as f64;
        (var / n_selected as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(McEstimate {
        value: mean,
        stderr,
        n_selected,
        n_total: n_traj,
        window,
    })
}
