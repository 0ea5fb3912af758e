//! Deterministic evolution of Markovian open systems: the Liouvillian
//! `L rho = -i[H, rho] + sum_mu D[c_mu] rho`, forward propagation, steady
//! states from the vectorized generator, and retrodictive propagation of
//! effects by the adjoint generator.
//!
//! Propagation uses a fixed-step fourth-order (RK4) integrator rather than
//! matrix exponentiation, so one code path serves states, effects, and
//! non-normalized operators such as `c rho + rho c^dag`. The vectorized
//! Liouvillian matrix exists only for steady-state and spectral work.
//!
//! In finite dimension every operator is bounded, so the usual boundedness
//! caveat on Lindblad generators needs no special handling here.

use ndarray::Array2;
use ndarray_linalg::Eig;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{expm, unvectorize};
use crate::operator::{dsuper, kron, Effect, HilbertSpace, Operator, State};

/// Largest total dimension for which the dense vectorized Liouvillian
/// (`total_dim^2` square) is built.
pub const LIOUVILLIAN_DIM_GUARD: usize = 64;

/// A Markovian model: Hamiltonian, collapse operators, and the designated
/// monitored channels.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    space: HilbertSpace,
    h: Operator,
    collapse: Vec<Operator>,
    homodyne_channel: Option<usize>,
    counting_channel: Option<usize>,
}

impl LindbladModel {
    pub fn new(h: Operator, collapse: Vec<Operator>) -> Result<Self> {
        if !h.is_hermitian(crate::operator::HERMITICITY_TOL) {
            return Err(Error::InvalidModel(
                "Hamiltonian is not Hermitian to 1e-10".into(),
            ));
        }
        let space = h.space().clone();
        for (i, c) in collapse.iter().enumerate() {
            if c.space() != &space {
                return Err(Error::InvalidModel(format!(
                    "collapse operator {i} lives on {:?}, Hamiltonian on {:?}",
                    c.space().dims(),
                    space.dims()
                )));
            }
        }
        Ok(Self {
            space,
            h,
            collapse,
            homodyne_channel: None,
            counting_channel: None,
        })
    }

    pub fn with_homodyne(mut self, index: usize) -> Result<Self> {
        if index >= self.collapse.len() {
            return Err(Error::InvalidModel(format!(
                "homodyne channel {index} out of range ({} collapse ops)",
                self.collapse.len()
            )));
        }
        if self.counting_channel == Some(index) {
            return Err(Error::InvalidModel(
                "homodyne and counting channels must be distinct".into(),
            ));
        }
        self.homodyne_channel = Some(index);
        Ok(self)
    }

    pub fn with_counting(mut self, index: usize) -> Result<Self> {
        if index >= self.collapse.len() {
            return Err(Error::InvalidModel(format!(
                "counting channel {index} out of range ({} collapse ops)",
                self.collapse.len()
            )));
        }
        if self.homodyne_channel == Some(index) {
            return Err(Error::InvalidModel(
                "homodyne and counting channels must be distinct".into(),
            ));
        }
        self.counting_channel = Some(index);
        Ok(self)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn collapse_ops(&self) -> &[Operator] {
        &self.collapse
    }

    pub fn homodyne_channel(&self) -> Option<usize> {
        self.homodyne_channel
    }

    pub fn counting_channel(&self) -> Option<usize> {
        self.counting_channel
    }

    /// The monitored homodyne collapse operator, if designated.
    pub fn homodyne_op(&self) -> Option<&Operator> {
        self.homodyne_channel.map(|i| &self.collapse[i])
    }

    /// The photon-counting collapse operator, if designated.
    pub fn counting_op(&self) -> Option<&Operator> {
        self.counting_channel.map(|i| &self.collapse[i])
    }

    /// Largest rate scale in the model: `max(|H|_max, max_mu |c^dag c|_max)`.
    pub fn max_rate(&self) -> f64 {
        let mut rate = self.h.max_abs();
        for c in &self.collapse {
            rate = rate.max(c.dagger().matmul(c).max_abs());
        }
        rate
    }
}

/// Fixed-step fourth-order propagation settings.
#[derive(Clone, Copy, Debug)]
pub struct Propagation {
    pub dt: f64,
}

impl Propagation {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt = {dt} must be > 0")));
        }
        Ok(Self { dt })
    }

    /// Default step: `min(1e-3, 0.01 / max_rate)`.
    pub fn default_for(model: &LindbladModel) -> Self {
        let rate = model.max_rate();
        let dt = if rate > 0.0 {
            (1e-3f64).min(0.01 / rate)
        } else {
            1e-3
        };
        Self { dt }
    }
}

/// `L rho = -i[H, rho] + sum_mu D[c_mu] rho`.
///
/// `rho` need not be a valid state; the engine also propagates
/// non-normalized operators such as `c rho + rho c^dag`.
pub fn liouvillian_apply(model: &LindbladModel, rho: &Operator) -> Result<Operator> {
    if rho.space() != &model.space {
        return Err(Error::SpaceMismatch {
            left: model.space.dims().to_vec(),
            right: rho.space().dims().to_vec(),
        });
    }
    let hr = model.h.matmul(rho);
    let rh = rho.matmul(&model.h);
    let mut out = &(&hr - &rh) * Complex64::new(0.0, -1.0);
    for c in &model.collapse {
        out = &out + &dsuper(c, rho)?;
    }
    Ok(out)
}

/// Adjoint generator: `L^dag E = +i[H, E] + sum_mu (c^dag E c - (1/2){c^dag c, E})`.
fn adjoint_apply(model: &LindbladModel, e: &Operator) -> Operator {
    let he = model.h.matmul(e);
    let eh = e.matmul(&model.h);
    let mut out = &(&he - &eh) * Complex64::new(0.0, 1.0);
    for c in &model.collapse {
        let cdag = c.dagger();
        let cdc = cdag.matmul(c);
        let sandwich = cdag.matmul(e).matmul(c);
        let anti = &cdc.matmul(e) + &e.matmul(&cdc);
        out = &out + &(&sandwich - &(&anti * 0.5));
    }
    out
}

fn rk4_run(
    rhs: impl Fn(&Operator) -> Operator,
    y0: &Operator,
    t: f64,
    dt: f64,
) -> Result<Operator> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("duration t = {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(y0.clone());
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be > 0")));
    }
    let n_steps = (t / dt).ceil() as usize;
    let h = t / n_steps as f64;
    let mut y = y0.clone();
    for step in 0..n_steps {
        let k1 = rhs(&y);
        let k2 = rhs(&(&y + &(&k1 * (h / 2.0))));
        let k3 = rhs(&(&y + &(&k2 * (h / 2.0))));
        let k4 = rhs(&(&y + &(&k3 * h)));
        let incr = &(&k1 + &(&k2 * 2.0)) + &(&(&k3 * 2.0) + &k4);
        y = &y + &(&incr * (h / 6.0));
        if !y.is_finite() {
            return Err(Error::IntegrationFailure {
                step,
                time: (step + 1) as f64 * h,
            });
        }
    }
    Ok(y)
}

/// Propagate an operator forward: `e^{L t} rho` by fixed-step RK4.
///
/// For valid input states the output keeps the state invariants (trace drift
/// below 1e-8 over the runs exercised in the test suite).
pub fn propagate(model: &LindbladModel, rho: &Operator, t: f64, dt: f64) -> Result<Operator> {
    if rho.space() != &model.space {
        return Err(Error::SpaceMismatch {
            left: model.space.dims().to_vec(),
            right: rho.space().dims().to_vec(),
        });
    }
    rk4_run(|y| liouvillian_apply(model, y).expect("space checked"), rho, t, dt)
}

/// Propagate an effect by the retrodictive master equation
/// `dE/dt = +i[H, E] + sum_mu (c^dag E c - (1/2){c^dag c, E})`,
/// the adjoint of the forward generator: `Tr[E(tau) A] = Tr[E(T) e^{L tau} A]`.
///
/// The norm of the effect is not preserved (it cancels between the numerator
/// and denominator of any weak-value ratio); positivity is checked to 1e-8.
pub fn retropropagate(model: &LindbladModel, e: &Effect, tau: f64, dt: f64) -> Result<Effect> {
    if e.space() != &model.space {
        return Err(Error::SpaceMismatch {
            left: model.space.dims().to_vec(),
            right: e.space().dims().to_vec(),
        });
    }
    let out = rk4_run(|y| adjoint_apply(model, y), e.op(), tau, dt)?;
    Effect::from_propagated(out, 1e-8)
}

/// Unitary propagator `U(t) = exp(-i H t)` for the dissipation-free path.
pub fn unitary_propagator(h: &Operator, t: f64) -> Result<Operator> {
    let gen = h.entries().mapv(|z| z * Complex64::new(0.0, -t));
    let u = expm(&gen)?;
    Operator::new(h.space().clone(), u)
}

/// Dense matrix `M` with `M vec(rho) = vec(L rho)` in the column-major
/// vectorization convention (`vec(rho)[c*d + r] = rho[r, c]`, so
/// `vec(A rho B) = (B^T kron A) vec(rho)`).
pub fn liouvillian_matrix(model: &LindbladModel) -> Result<Array2<Complex64>> {
    let d = model.space.total_dim();
    if d > LIOUVILLIAN_DIM_GUARD {
        return Err(Error::DimensionGuard {
            total_dim: d,
            max: LIOUVILLIAN_DIM_GUARD,
        });
    }
    let eye = Array2::<Complex64>::eye(d);
    let h = model.h.entries();
    let ht = h.t().to_owned();
    // -i (I kron H - H^T kron I)
    let mut m = (kron(&eye, h) - kron(&ht, &eye)).mapv(|z| z * Complex64::new(0.0, -1.0));
    for c in &model.collapse {
        let ce = c.entries();
        let c_conj = ce.mapv(|z| z.conj());
        let cdc = c.dagger().matmul(c);
        let cdc_t = cdc.entries().t().to_owned();
        let half = Complex64::new(0.5, 0.0);
        m = m + kron(&c_conj, ce)
            - kron(&eye, cdc.entries()).mapv(|z| z * half)
            - kron(&cdc_t, &eye).mapv(|z| z * half);
    }
    Ok(m)
}

/// Unique steady state from the nullspace of the vectorized Liouvillian.
///
/// Errors if the nullspace is degenerate (second-smallest eigenvalue modulus
/// below 1e-10) or the residual `|L rho_ss|_max` exceeds 1e-8.
pub fn steady_state(model: &LindbladModel) -> Result<State> {
    let m = liouvillian_matrix(model)?;
    let d = model.space.total_dim();
    let (eigvals, eigvecs) = m.eig()?;

    let mut order: Vec<usize> = (0..eigvals.len()).collect();
    order.sort_by(|&i, &j| {
        eigvals[i]
            .norm()
            .partial_cmp(&eigvals[j].norm())
            .expect("finite eigenvalues")
    });
    let zero_idx = order[0];
    if order.len() > 1 {
        let second = eigvals[order[1]].norm();
        if second < 1e-10 {
            return Err(Error::DegenerateSteadyState { second });
        }
    }

    let vec: Vec<Complex64> = eigvecs.column(zero_idx).to_vec();
    let raw = unvectorize(&vec, d);
    let op = Operator::new(model.space.clone(), raw)?.hermitize();
    let tr = op.trace();
    if tr.norm() < 1e-12 {
        return Err(Error::Numerical(
            "steady-state candidate has vanishing trace".into(),
        ));
    }
    let rho = &op * (Complex64::new(1.0, 0.0) / tr);

    let residual = liouvillian_apply(model, &rho)?.max_abs();
    if residual > 1e-8 {
        return Err(Error::Numerical(format!(
            "steady-state residual |L rho|_max = {residual:.3e} exceeds 1e-8"
        )));
    }
    State::new(rho)
}
