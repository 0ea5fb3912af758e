//! The driven cavity-QED application: a weakly driven damped cavity coupled
//! to N resonant atoms, whose output is split between homodyne detection and
//! photon counting. Computes the intensity-field correlation h(tau) three
//! ways — the full master-equation weak-value/retrodictive route for
//! tau > 0, predictive collapse for tau < 0, and the effective-Hamiltonian
//! pure-state approximation — plus the damped-oscillation fit
//! `h = 1 + zeta e^{-eta tau}[cos(Omega tau) + (eta/Omega) sin(Omega tau)]`
//! with `eta = (kappa + gamma_perp)/2`.
//!
//! The closed forms for `zeta` and `Omega` in terms of the rates are not
//! assumed; they are extracted numerically by [`fit_zeta_omega`].

use ndarray::Array1;
use ndarray_linalg::Eig;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lindblad::{propagate, retropropagate, steady_state, LindbladModel};
use crate::linalg::expm;
use crate::operator::{annihilation, embed, sigma_lower, Effect, HilbertSpace, Operator, State};
use crate::trajectory::{monte_carlo_weak_value, McEstimate};
use crate::weakvalue::TRACE_FLOOR;

/// Which atom-field coupling to use.
///
/// The source equations print the coupling with a raised atom index
/// (`a^dag sigma^dag`), which does not give a Hermitian generator; the
/// physical Jaynes-Cummings form is `a^dag sigma`. Both are available so the
/// discrepancy stays visible rather than silently resolved: under `Printed`
/// the full master-equation model cannot be built (its Hamiltonian would not
/// be Hermitian) and the effective-Hamiltonian tier runs the printed form
/// as-is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingConvention {
    JaynesCummings,
    Printed,
}

/// Parameters of the cavity-QED model.
#[derive(Clone, Debug)]
pub struct StonyBrookParams {
    /// Drive amplitude.
    pub epsilon: f64,
    /// Cavity half-linewidth (field decay `2 kappa D[a]`).
    pub kappa: f64,
    /// Atomic transverse decay rate (`2 gamma_perp D[sigma_j]`).
    pub gamma_perp: f64,
    /// Per-atom coupling coefficients; the length sets the atom number N.
    pub g: Vec<f64>,
    /// Fock cutoff (field dimension `n_max + 1`).
    pub n_max: usize,
    /// Homodyne detection efficiency in (0, 1].
    pub eta_h: f64,
    /// Photon-counting efficiency in (0, 1]; `eta_h + eta_c <= 1` (the
    /// output splitter is absorbed into the two channel rates, any remainder
    /// becomes an unmonitored loss channel).
    pub eta_c: f64,
    pub coupling: CouplingConvention,
}

impl StonyBrookParams {
    /// Desk-scale defaults: one atom, `g = kappa = gamma_perp = 1`,
    /// `epsilon = 0.01`, `n_max = 2` — the smallest system showing the
    /// vacuum-Rabi oscillation of h(tau) at total dimension 6.
    pub fn desk() -> Self {
        Self {
            epsilon: 0.01,
            kappa: 1.0,
            gamma_perp: 1.0,
            g: vec![1.0],
            n_max: 2,
            eta_h: 0.5,
            eta_c: 0.5,
            coupling: CouplingConvention::JaynesCummings,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.g.len()
    }

    pub fn space(&self) -> Result<HilbertSpace> {
        let mut dims = vec![self.n_max + 1];
        dims.extend(std::iter::repeat(2).take(self.n_atoms()));
        HilbertSpace::new(dims)
    }

    pub fn total_dim(&self) -> usize {
        (self.n_max + 1) * (1usize << self.n_atoms())
    }

    /// `eta = (kappa + gamma_perp)/2`, the decay rate of the h(tau)
    /// oscillation envelope.
    pub fn decay_rate_eta(&self) -> f64 {
        (self.kappa + self.gamma_perp) / 2.0
    }

    /// The approximations of the effective tier are only claimed for
    /// `epsilon < 0.1 min(kappa, gamma_perp)`.
    pub fn weak_drive(&self) -> bool {
        self.epsilon < 0.1 * self.kappa.min(self.gamma_perp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !(self.gamma_perp > 0.0) {
            return Err(Error::InvalidInput(
                "kappa and gamma_perp must be positive".into(),
            ));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidInput("epsilon must be >= 0".into()));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidInput("n_max must be >= 1".into()));
        }
        if !(self.eta_h > 0.0 && self.eta_h <= 1.0) || !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return Err(Error::InvalidInput(
                "efficiencies must lie in (0, 1]".into(),
            ));
        }
        if self.eta_h + self.eta_c > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "eta_h + eta_c = {} exceeds 1; the split rates would exceed the cavity linewidth",
                self.eta_h + self.eta_c
            )));
        }
        if self.g.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("non-finite coupling".into()));
        }
        Ok(())
    }

    /// Field annihilation operator embedded in the full space.
    pub fn field_op(&self) -> Result<Operator> {
        let space = self.space()?;
        embed(&annihilation(self.n_max)?, 0, &space)
    }

    /// Lowering operator of atom `j` (0-based) embedded in the full space.
    pub fn atom_op(&self, j: usize) -> Result<Operator> {
        let space = self.space()?;
        embed(&sigma_lower(), 1 + j, &space)
    }
}

/// Build the full master-equation model: drive `i eps (a^dag - a)`, coupling
/// `i g_j (a^dag sigma_j - sigma_j^dag a)`, collapse operators `sqrt(2k) a`
/// split into homodyne / counting / loss shares and `sqrt(2 gamma) sigma_j`.
pub fn build_stonybrook(p: &StonyBrookParams) -> Result<LindbladModel> {
    p.validate()?;
    let d = p.total_dim();
    if d > crate::lindblad::LIOUVILLIAN_DIM_GUARD {
        return Err(Error::DimensionGuard {
            total_dim: d,
            max: crate::lindblad::LIOUVILLIAN_DIM_GUARD,
        });
    }
    if p.coupling == CouplingConvention::Printed && p.g.iter().any(|&g| g != 0.0) {
        return Err(Error::InvalidModel(
            "the printed coupling a^dag sigma^dag does not give a Hermitian Hamiltonian; \
             use CouplingConvention::JaynesCummings for master-equation work"
                .into(),
        ));
    }

    let a = p.field_op()?;
    let mut h = &(&a.dagger() - &a) * Complex64::new(0.0, p.epsilon);
    for (j, &gj) in p.g.iter().enumerate() {
        let s = p.atom_op(j)?;
        let coupling = &a.dagger().matmul(&s) - &s.dagger().matmul(&a);
        h = &h + &(&coupling * Complex64::new(0.0, gj));
    }

    let mut collapse = vec![
        &a * (2.0 * p.kappa * p.eta_h).sqrt(),
        &a * (2.0 * p.kappa * p.eta_c).sqrt(),
    ];
    let rest = 1.0 - p.eta_h - p.eta_c;
    if rest > 1e-12 {
        collapse.push(&a * (2.0 * p.kappa * rest).sqrt());
    }
    for j in 0..p.n_atoms() {
        collapse.push(&p.atom_op(j)? * (2.0 * p.gamma_perp).sqrt());
    }

    LindbladModel::new(h, collapse)?
        .with_homodyne(0)?
        .with_counting(1)
}

/// The non-Hermitian effective Hamiltonian, defined through
/// `-i H_eff = eps (a^dag - a) - kappa a^dag a
///             + sum_j [ g_j (a^dag s_j - sigma_j^dag a) - gamma_perp sigma_j^dag sigma_j ]`
/// where `s_j` follows the coupling convention (`sigma_j` for
/// Jaynes-Cummings, `sigma_j^dag` as printed).
pub fn effective_hamiltonian(p: &StonyBrookParams) -> Result<Operator> {
    p.validate()?;
    let m = minus_i_h_eff(p)?;
    Ok(&m * Complex64::new(0.0, 1.0))
}

/// `-i H_eff`, the generator of the no-jump evolution.
fn minus_i_h_eff(p: &StonyBrookParams) -> Result<Operator> {
    let a = p.field_op()?;
    let ada = a.dagger().matmul(&a);
    let mut m = &(&(&a.dagger() - &a) * p.epsilon) - &(&ada * p.kappa);
    for (j, &gj) in p.g.iter().enumerate() {
        let s = p.atom_op(j)?;
        let raise_or_lower = match p.coupling {
            CouplingConvention::JaynesCummings => s.clone(),
            CouplingConvention::Printed => s.dagger(),
        };
        let coupling = &a.dagger().matmul(&raise_or_lower) - &s.dagger().matmul(&a);
        m = &m + &(&coupling * gj);
        m = &m - &(&s.dagger().matmul(&s) * p.gamma_perp);
    }
    Ok(m)
}

/// `N(t) = exp(-i H_eff t)`, the (norm-decreasing for eps = 0) no-jump
/// propagator, by scaling-and-squaring matrix exponential.
pub fn nonunitary_propagator(p: &StonyBrookParams, t: f64) -> Result<Operator> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("t = {t} must be >= 0")));
    }
    let m = minus_i_h_eff(p)?;
    let scaled = m.entries().mapv(|z| z * t);
    Ok(Operator::new(m.space().clone(), expm(&scaled)?)?)
}

/// The quasi-stationary pure state: eigenvector of `-i H_eff` whose
/// eigenvalue has the largest real part.
#[derive(Clone, Debug)]
pub struct StationaryPureState {
    /// Normalized, with `<vacuum|psi>` real and positive.
    pub ket: Array1<Complex64>,
    /// `<psi|rho_ss|psi>` against the full master-equation steady state;
    /// `None` under the printed convention, which has no valid full model.
    pub fidelity: Option<f64>,
    /// Set when the parameters are outside the weak-drive regime or the
    /// fidelity check failed (or could not be run).
    pub regime_warning: bool,
}

pub fn stationary_pure_state(p: &StonyBrookParams) -> Result<StationaryPureState> {
    p.validate()?;
    let m = minus_i_h_eff(p)?;
    let (vals, vecs) = m.entries().eig()?;
    let mut best = 0;
    for k in 1..vals.len() {
        if vals[k].re > vals[best].re {
            best = k;
        }
    }
    let mut ket = vecs.column(best).to_owned();
    let norm: f64 = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-14 {
        return Err(Error::Numerical("eigensolve returned a null vector".into()));
    }
    ket.mapv_inplace(|z| z / norm);
    let vac_amp = ket[0];
    if vac_amp.norm() < 1e-6 {
        return Err(Error::UnsupportedRegime(
            "stationary eigenvector has no vacuum component; parameters are far outside \
             the weak-drive regime"
                .into(),
        ));
    }
    let phase = vac_amp / vac_amp.norm();
    ket.mapv_inplace(|z| z / phase);

    let (fidelity, fidelity_ok) = match p.coupling {
        CouplingConvention::JaynesCummings => {
            let model = build_stonybrook(p)?;
            let rho_ss = steady_state(&model)?;
            let mut fid = Complex64::new(0.0, 0.0);
            let d = ket.len();
            for i in 0..d {
                for j in 0..d {
                    fid += ket[i].conj() * rho_ss.op().entries()[[i, j]] * ket[j];
                }
            }
            let f = fid.re;
            let tol = 10.0 * (p.epsilon / p.kappa) * (p.epsilon / p.kappa);
            (Some(f), f > 1.0 - tol)
        }
        CouplingConvention::Printed => (None, false),
    };
    let regime_warning = !p.weak_drive() || !fidelity_ok;
    Ok(StationaryPureState {
        ket,
        fidelity,
        regime_warning,
    })
}

/// Which route computed an h(tau) value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveMethod {
    FullMe,
    EffectiveH,
    Analytic,
    MonteCarlo,
}

impl CurveMethod {
    pub fn label(&self) -> &'static str {
        match self {
            CurveMethod::FullMe => "full-me",
            CurveMethod::EffectiveH => "effective-h",
            CurveMethod::Analytic => "analytic",
            CurveMethod::MonteCarlo => "monte-carlo",
        }
    }
}

/// A normalized h(tau) curve with a method tag per point.
#[derive(Clone, Debug)]
pub struct HTauCurve {
    taus: Vec<f64>,
    values: Vec<f64>,
    methods: Vec<CurveMethod>,
}

impl HTauCurve {
    pub fn new(taus: Vec<f64>, values: Vec<f64>, methods: Vec<CurveMethod>) -> Result<Self> {
        if taus.len() != values.len() || taus.len() != methods.len() {
            return Err(Error::InvalidInput(
                "taus, values and methods must have equal length".into(),
            ));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "tau grid must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            taus,
            values,
            methods,
        })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn methods(&self) -> &[CurveMethod] {
        &self.methods
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// Reusable pieces of the full-ME h(tau) computation.
struct FullMeContext {
    model: LindbladModel,
    rho_ss: State,
    a: Operator,
    /// `Tr[(a + a^dag) rho_ss]`, the full-ME baseline.
    baseline: f64,
}

impl FullMeContext {
    fn new(p: &StonyBrookParams) -> Result<Self> {
        let model = build_stonybrook(p)?;
        let rho_ss = steady_state(&model)?;
        let a = p.field_op()?;
        let x = &a + &a.dagger();
        let baseline = x.matmul(rho_ss.op()).trace().re;
        if baseline.abs() < TRACE_FLOOR {
            return Err(Error::PostselectionImpossible {
                denominator: baseline.abs(),
                floor: TRACE_FLOOR,
            });
        }
        Ok(Self {
            model,
            rho_ss,
            a,
            baseline,
        })
    }

    /// The photon-counting effect `a^dag a / n_max`; the physical prefactor
    /// `eta_c kappa dt` cancels in the weak-value ratio, so the effect is
    /// scaled only to satisfy `E <= 1` at creation.
    fn counting_effect(&self, p: &StonyBrookParams) -> Result<Effect> {
        let n = self.a.dagger().matmul(&self.a);
        Effect::new(&n * (1.0 / p.n_max as f64))
    }

    fn value_from_effect(&self, e: &Effect) -> Result<f64> {
        let den = e.op().matmul(self.rho_ss.op()).trace();
        if den.norm() <= TRACE_FLOOR {
            return Err(Error::PostselectionImpossible {
                denominator: den.norm(),
                floor: TRACE_FLOOR,
            });
        }
        let num = e.op().matmul(&self.a.matmul(self.rho_ss.op())).trace();
        Ok(2.0 * (num / den).re / self.baseline)
    }
}

/// Effective-tier pieces: `N(tau)`, `|psi_ss>`, `|1> = |n=1, g...g>`.
struct EffectiveContext {
    p: StonyBrookParams,
    psi_ss: Array1<Complex64>,
    one_index: usize,
    a: Operator,
    /// `<psi_ss| (a + a^dag) |psi_ss>`, the effective-tier baseline.
    baseline: f64,
}

impl EffectiveContext {
    fn new(p: &StonyBrookParams) -> Result<Self> {
        let st = stationary_pure_state(p)?;
        let a = p.field_op()?;
        let x = &a + &a.dagger();
        let xpsi = x.apply(&st.ket)?;
        let baseline: f64 = st
            .ket
            .iter()
            .zip(xpsi.iter())
            .map(|(b, c)| (b.conj() * c).re)
            .sum();
        if baseline.abs() < TRACE_FLOOR {
            return Err(Error::PostselectionImpossible {
                denominator: baseline.abs(),
                floor: TRACE_FLOOR,
            });
        }
        Ok(Self {
            p: p.clone(),
            psi_ss: st.ket,
            one_index: 1usize << p.n_atoms(),
            a,
            baseline,
        })
    }

    fn value_at(&self, tau: f64) -> Result<f64> {
        let n_tau = nonunitary_propagator(&self.p, tau)?;
        let evolved = n_tau.apply(&self.psi_ss)?;
        let a_psi = self.a.apply(&self.psi_ss)?;
        let evolved_a = n_tau.apply(&a_psi)?;
        let den = evolved[self.one_index];
        if den.norm() <= TRACE_FLOOR {
            return Err(Error::PostselectionImpossible {
                denominator: den.norm(),
                floor: TRACE_FLOOR,
            });
        }
        let num = evolved_a[self.one_index];
        Ok(2.0 * (num / den).re / self.baseline)
    }
}

/// Normalized h(tau) for `tau >= 0`.
///
/// `FullMe`: `2 Re Tr[E1(tau) a rho_ss] / Tr[E1(tau) rho_ss]` with
/// `E1(tau)` the retrodicted counting effect, then divided by
/// `Tr[X rho_ss]`.
///
/// `EffectiveH`: `2 Re [<1| N(tau) a |psi_ss> / <1| N(tau) |psi_ss>]`
/// divided by `<psi_ss|X|psi_ss>` (postselection on a photodetection is
/// projection onto `|1>` in this tier).
pub fn h_positive_tau(p: &StonyBrookParams, tau: f64, dt: f64, method: CurveMethod) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!("tau = {tau} must be >= 0")));
    }
    match method {
        CurveMethod::FullMe => {
            let ctx = FullMeContext::new(p)?;
            let e0 = ctx.counting_effect(p)?;
            let e_tau = retropropagate(&ctx.model, &e0, tau, dt)?;
            ctx.value_from_effect(&e_tau)
        }
        CurveMethod::EffectiveH => {
            let ctx = EffectiveContext::new(p)?;
            ctx.value_at(tau)
        }
        other => Err(Error::InvalidInput(format!(
            "h_positive_tau computes full-me or effective-h, not {}",
            other.label()
        ))),
    }
}

/// Full curve over a tau grid (all `tau >= 0`), walking the retrodicted
/// effect once across the grid for the full-ME method.
pub fn h_positive_curve(
    p: &StonyBrookParams,
    taus: &[f64],
    dt: f64,
    method: CurveMethod,
) -> Result<HTauCurve> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("empty tau grid".into()));
    }
    if taus.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidInput("positive-branch grid has tau < 0".into()));
    }
    let mut values = Vec::with_capacity(taus.len());
    match method {
        CurveMethod::FullMe => {
            let ctx = FullMeContext::new(p)?;
            let mut effect = ctx.counting_effect(p)?;
            let mut reached = 0.0;
            for &tau in taus {
                let step = tau - reached;
                if step > 0.0 {
                    effect = retropropagate(&ctx.model, &effect, step, dt)?;
                    reached = tau;
                }
                values.push(ctx.value_from_effect(&effect)?);
            }
        }
        CurveMethod::EffectiveH => {
            let ctx = EffectiveContext::new(p)?;
            for &tau in taus {
                values.push(ctx.value_at(tau)?);
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "h_positive_curve computes full-me or effective-h, not {}",
                other.label()
            )))
        }
    }
    let methods = vec![method; taus.len()];
    HTauCurve::new(taus.to_vec(), values, methods)
}

/// Normalized h(-tau) by predictive collapse: apply the jump to the steady
/// state, propagate forward `|tau|`, and read off `Tr[X rho] / Tr[X rho_ss]`.
pub fn h_negative_tau(p: &StonyBrookParams, tau_abs: f64, dt: f64) -> Result<f64> {
    let curve = h_negative_curve(p, &[tau_abs], dt)?;
    Ok(curve.values()[0])
}

/// h(-tau) over a grid of `|tau|` values (strictly increasing), propagating
/// the collapsed state once across the grid.
pub fn h_negative_curve(p: &StonyBrookParams, taus_abs: &[f64], dt: f64) -> Result<HTauCurve> {
    if taus_abs.is_empty() {
        return Err(Error::InvalidInput("empty tau grid".into()));
    }
    if taus_abs.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidInput("negative-branch grid needs |tau| >= 0".into()));
    }
    let ctx = FullMeContext::new(p)?;
    let collapsed_raw = ctx.a.matmul(ctx.rho_ss.op()).matmul(&ctx.a.dagger());
    let flux = collapsed_raw.trace().re;
    if flux < 1e-14 {
        return Err(Error::NoPhotonFlux { flux });
    }
    let x = &ctx.a + &ctx.a.dagger();
    let mut rho = &collapsed_raw * (1.0 / flux);
    let mut reached = 0.0;
    let mut values = Vec::with_capacity(taus_abs.len());
    for &tau in taus_abs {
        let step = tau - reached;
        if step > 0.0 {
            rho = propagate(&ctx.model, &rho, step, dt)?;
            reached = tau;
        }
        values.push(x.matmul(&rho).trace().re / ctx.baseline);
    }
    let methods = vec![CurveMethod::FullMe; taus_abs.len()];
    HTauCurve::new(taus_abs.to_vec(), values, methods)
}

/// The leading-order analytic form
/// `1 + zeta e^{-eta |tau|} [cos(Omega tau) + (eta/Omega) sin(Omega |tau|)]`
/// with `eta = (kappa + gamma_perp)/2` computed from the parameters.
/// Only the oscillatory regime (`Omega > 0`) is printed in the source; the
/// overdamped case is rejected.
pub fn analytic_h(p: &StonyBrookParams, tau: f64, zeta: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::UnsupportedRegime(format!(
            "Omega = {omega} <= 0: only the oscillatory form is available"
        )));
    }
    let eta = p.decay_rate_eta();
    let t = tau.abs();
    Ok(1.0 + zeta * (-eta * t).exp() * ((omega * t).cos() + (eta / omega) * (omega * t).sin()))
}

/// Result of fitting the analytic form to a curve.
#[derive(Clone, Copy, Debug)]
pub struct HTauFit {
    pub zeta: f64,
    pub omega: f64,
    pub eta: f64,
    /// Max absolute residual over the fitted points.
    pub max_residual: f64,
}

fn fit_model(tau: f64, zeta: f64, omega: f64, eta: f64) -> f64 {
    1.0 + zeta * (-eta * tau).exp() * ((omega * tau).cos() + (eta / omega) * (omega * tau).sin())
}

/// Least-squares fit of `1 + zeta e^{-eta tau}[cos Omega tau +
/// (eta/Omega) sin Omega tau]` to a (positive-branch) curve. A coarse
/// profile grid over `(eta, Omega)` (with the linear `zeta` solved in closed
/// form) seeds a Levenberg-Marquardt polish of all three parameters.
pub fn fit_zeta_omega(curve: &HTauCurve) -> Result<HTauFit> {
    let n = curve.len();
    if n < 50 {
        return Err(Error::InvalidInput(format!(
            "fit needs at least 50 points, got {n}"
        )));
    }
    let taus = curve.taus();
    let ys: Vec<f64> = curve.values().iter().map(|v| v - 1.0).collect();
    let span = taus[n - 1] - taus[0];
    if span <= 0.0 {
        return Err(Error::InvalidInput("degenerate tau span".into()));
    }

    // Profile search: for fixed (eta, Omega) the model is linear in zeta.
    let mut best = (f64::INFINITY, 0.0, 1.0, 1.0); // (sse, zeta, omega, eta)
    let n_grid = 40;
    for ei in 0..n_grid {
        let eta = 0.2 / span * (250.0f64 / 0.2).powf(ei as f64 / (n_grid - 1) as f64);
        for oi in 0..n_grid {
            let omega =
                0.5 / span * (400.0f64 / 0.5).powf(oi as f64 / (n_grid - 1) as f64);
            let mut bb = 0.0;
            let mut by = 0.0;
            for (t, y) in taus.iter().zip(ys.iter()) {
                let b = (-eta * t).exp() * ((omega * t).cos() + (eta / omega) * (omega * t).sin());
                bb += b * b;
                by += b * y;
            }
            if bb < 1e-30 {
                continue;
            }
            let zeta = by / bb;
            let mut sse = 0.0;
            for (t, y) in taus.iter().zip(ys.iter()) {
                let b = (-eta * t).exp() * ((omega * t).cos() + (eta / omega) * (omega * t).sin());
                let r = zeta * b - y;
                sse += r * r;
            }
            if sse < best.0 {
                best = (sse, zeta, omega, eta);
            }
        }
    }

    // Levenberg-Marquardt polish with a numerical Jacobian.
    let mut params = [best.1, best.2, best.3]; // zeta, omega, eta
    let mut lambda = 1e-3;
    let sse_of = |p: &[f64; 3]| -> f64 {
        taus.iter()
            .zip(ys.iter())
            .map(|(t, y)| {
                let r = fit_model(*t, p[0], p[1], p[2]) - 1.0 - y;
                r * r
            })
            .sum()
    };
    let mut current_sse = sse_of(&params);
    for _ in 0..200 {
        // Jacobian and residuals.
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for (t, y) in taus.iter().zip(ys.iter()) {
            let f0 = fit_model(*t, params[0], params[1], params[2]) - 1.0;
            let r = f0 - y;
            let mut grad = [0.0f64; 3];
            for k in 0..3 {
                let h = 1e-7 * params[k].abs().max(1e-7);
                let mut pp = params;
                pp[k] += h;
                let f1 = fit_model(*t, pp[0], pp[1], pp[2]) - 1.0;
                grad[k] = (f1 - f0) / h;
            }
            for (i, gi) in grad.iter().enumerate() {
                for (j, gj) in grad.iter().enumerate() {
                    jtj[i][j] += gi * gj;
                }
                jtr[i] += gi * r;
            }
        }
        // Solve (JtJ + lambda diag) step = -Jtr by 3x3 Gaussian elimination.
        let mut a = jtj;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] *= 1.0 + lambda;
        }
        let mut b = [-jtr[0], -jtr[1], -jtr[2]];
        let step = solve3(&mut a, &mut b);
        let Some(step) = step else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        };
        let trial = [
            params[0] + step[0],
            params[1] + step[1],
            params[2] + step[2],
        ];
        if !(trial[1] > 0.0) || !(trial[2] > 0.0) || trial.iter().any(|v| !v.is_finite()) {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        }
        let trial_sse = sse_of(&trial);
        if trial_sse < current_sse {
            let rel = (current_sse - trial_sse) / current_sse.max(1e-300);
            params = trial;
            current_sse = trial_sse;
            lambda = (lambda * 0.3).max(1e-12);
            if rel < 1e-14 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let mut max_residual = 0.0f64;
    for (t, h) in taus.iter().zip(curve.values().iter()) {
        let r = (fit_model(*t, params[0], params[1], params[2]) - h).abs();
        max_residual = max_residual.max(r);
    }
    if !max_residual.is_finite() {
        return Err(Error::FitFailure {
            residual: max_residual,
        });
    }
    Ok(HTauFit {
        zeta: params[0],
        omega: params[1],
        eta: params[2],
        max_residual,
    })
}

fn solve3(a: &mut [[f64; 3]; 3], b: &mut [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let mut pivot = col;
        for row in (col + 1)..3 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in (row + 1)..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Monte Carlo h(tau) for `tau >= 0`: trajectories start in the steady
/// state, the weak value is read at `t = 2 window` and the photodetection
/// selected at `T = t + tau`, then normalized by the homodyne channel's
/// stationary quadrature mean.
#[allow(clippy::too_many_arguments)]
pub fn h_monte_carlo(
    p: &StonyBrookParams,
    tau: f64,
    dt: f64,
    window: f64,
    n_traj: usize,
    seed: u64,
) -> Result<McEstimate> {
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!("tau = {tau} must be >= 0")));
    }
    let model = build_stonybrook(p)?;
    let rho_ss = steady_state(&model)?;
    let c_hom = model.homodyne_op().expect("builder designates homodyne");
    let x_hom = &c_hom.clone() + &c_hom.dagger();
    let baseline = x_hom.matmul(rho_ss.op()).trace().re;
    if baseline.abs() < TRACE_FLOOR {
        return Err(Error::PostselectionImpossible {
            denominator: baseline.abs(),
            floor: TRACE_FLOOR,
        });
    }
    let t = 2.0 * window;
    let big_t = t + tau.max(dt);
    let est = monte_carlo_weak_value(&model, &rho_ss, t, big_t, dt, window, n_traj, seed)?;
    Ok(McEstimate {
        value: est.value / baseline,
        stderr: est.stderr / baseline.abs(),
        ..est
    })
}
