//! Closed-form weak-value calculators: strong postselected values, the AAV
//! formula, the non-QND form `2 Re <phi|c|psi>/<phi|psi>`, the explicit
//! unitary-sandwich form, and the fully general mixed/nonunitary/
//! non-projective form together with its retrodictive rewrite.
//!
//! Near-orthogonal postselection makes these ratios blow up; rather than
//! returning huge floats silently, constructors and operations reject
//! overlaps below [`OVERLAP_FLOOR`] and trace denominators below
//! [`TRACE_FLOOR`] with typed errors.

use ndarray::Array1;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lindblad::{propagate, unitary_propagator, LindbladModel};
use crate::operator::{Effect, Operator, State};

/// Floor on `|<phi|psi>|` below which postselection is treated as impossible.
pub const OVERLAP_FLOOR: f64 = 1e-8;
/// Floor on trace denominators in the general (mixed/effect) forms.
pub const TRACE_FLOOR: f64 = 1e-12;
/// Eigenvalues closer than this are treated as one degenerate branch when
/// grouping eigenbranch probabilities in [`strong_postselected`].
const EIGENVALUE_GROUP_TOL: f64 = 1e-9;

/// A normalized pre-/postselection pair of pure states.
#[derive(Clone, Debug)]
pub struct PurePrePost {
    psi: Array1<Complex64>,
    phi: Array1<Complex64>,
}

fn norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &Array1<Complex64>, b: &Array1<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

impl PurePrePost {
    pub fn new(psi: Array1<Complex64>, phi: Array1<Complex64>) -> Result<Self> {
        if psi.len() != phi.len() {
            return Err(Error::InvalidInput(format!(
                "psi has dim {}, phi has dim {}",
                psi.len(),
                phi.len()
            )));
        }
        let npsi = norm(&psi);
        let nphi = norm(&phi);
        if (npsi - 1.0).abs() > 1e-10 || (nphi - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "states must be normalized to 1e-10 (|psi| = {npsi}, |phi| = {nphi})"
            )));
        }
        let overlap = inner(&phi, &psi).norm();
        if overlap <= OVERLAP_FLOOR {
            return Err(Error::NearOrthogonal {
                overlap,
                floor: OVERLAP_FLOOR,
            });
        }
        Ok(Self { psi, phi })
    }

    pub fn psi(&self) -> &Array1<Complex64> {
        &self.psi
    }

    pub fn phi(&self) -> &Array1<Complex64> {
        &self.phi
    }

    /// `<phi|psi>`.
    pub fn overlap(&self) -> Complex64 {
        inner(&self.phi, &self.psi)
    }
}

/// A weak value with its raw numerator and denominator retained so callers
/// can diagnose near-singular postselection.
#[derive(Clone, Copy, Debug)]
pub struct WeakValueResult {
    /// `Re(numerator / denominator)`.
    pub value: f64,
    /// `Tr[E e^{L tau} (c rho + rho c^dag)]` — the Hermitian pair already
    /// carries both conjugate terms, so no extra factor of 2 applies.
    pub numerator: Complex64,
    pub denominator: Complex64,
}

fn check_dim(op: &Operator, len: usize) -> Result<()> {
    if op.dim() != len {
        return Err(Error::InvalidInput(format!(
            "operator dim {} does not match state dim {len}",
            op.dim()
        )));
    }
    Ok(())
}

/// Postselected average of a strong (projective) measurement of `X`:
/// `sum_x |<phi|x>|^2 x |<x|psi>|^2 / sum_y |<phi|y>|^2 |<y|psi>|^2`.
///
/// Always lies inside the spectrum of `X`. Degenerate eigenvalues are grouped
/// within 1e-9 and their eigenbranch probabilities summed; inside a
/// degenerate subspace the value depends on the eigenbasis the solver
/// returns, which is inherent to the per-eigenstate form.
pub fn strong_postselected(pp: &PurePrePost, x: &Operator) -> Result<f64> {
    check_dim(x, pp.psi.len())?;
    if !x.is_hermitian(1e-10) {
        return Err(Error::InvalidInput(
            "strong_postselected requires a Hermitian observable".into(),
        ));
    }
    let (evals, evecs) = x.entries().eigh(UPLO::Lower)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut branch_value = evals[0];
    let mut branch_prob = 0.0;
    for (k, &xk) in evals.iter().enumerate() {
        let ket = evecs.column(k).to_owned();
        let p = inner(&pp.phi, &ket).norm_sqr() * inner(&ket, &pp.psi).norm_sqr();
        if (xk - branch_value).abs() <= EIGENVALUE_GROUP_TOL {
            branch_prob += p;
        } else {
            num += branch_value * branch_prob;
            den += branch_prob;
            branch_value = xk;
            branch_prob = p;
        }
    }
    num += branch_value * branch_prob;
    den += branch_prob;

    if den <= 1e-14 {
        return Err(Error::PostselectionImpossible {
            denominator: den,
            floor: 1e-14,
        });
    }
    Ok(num / den)
}

/// AAV weak value `Re <phi|X|psi> / <phi|psi>`.
///
/// May lie outside the spectrum of `X`.
pub fn aav_weak_value(pp: &PurePrePost, x: &Operator) -> Result<f64> {
    check_dim(x, pp.psi.len())?;
    let ov = pp.overlap();
    if ov.norm() <= OVERLAP_FLOOR {
        return Err(Error::NearOrthogonal {
            overlap: ov.norm(),
            floor: OVERLAP_FLOOR,
        });
    }
    let xpsi = x.apply(&pp.psi)?;
    Ok((inner(&pp.phi, &xpsi) / ov).re)
}

/// Generalized (non-QND) weak value `2 Re <phi|c|psi> / <phi|psi>`.
///
/// For `c = X/2` this reduces exactly to [`aav_weak_value`].
pub fn generalized_weak_value(pp: &PurePrePost, c: &Operator) -> Result<f64> {
    check_dim(c, pp.psi.len())?;
    let ov = pp.overlap();
    if ov.norm() <= OVERLAP_FLOOR {
        return Err(Error::NearOrthogonal {
            overlap: ov.norm(),
            floor: OVERLAP_FLOOR,
        });
    }
    let cpsi = c.apply(&pp.psi)?;
    Ok(2.0 * (inner(&pp.phi, &cpsi) / ov).re)
}

/// Weak value with the unitary evolution written out:
/// `2 Re [ <phi(T)| U(T-t) c U(t) |psi(0)> / <phi(T)| U(T) |psi(0)> ]`
/// with `U(s) = exp(-i H s)` from the engine's unitary path.
pub fn weak_value_unitary(
    psi0: &Array1<Complex64>,
    phi_t: &Array1<Complex64>,
    c: &Operator,
    h: &Operator,
    t: f64,
    big_t: f64,
) -> Result<f64> {
    if !(0.0 <= t && t <= big_t) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= t <= T, got t = {t}, T = {big_t}"
        )));
    }
    check_dim(c, psi0.len())?;
    check_dim(h, psi0.len())?;
    if !h.is_hermitian(1e-10) {
        return Err(Error::InvalidInput(
            "unitary evolution requires a Hermitian generator".into(),
        ));
    }
    let u_t = unitary_propagator(h, t)?;
    let u_tau = unitary_propagator(h, big_t - t)?;

    let psi_t = u_t.apply(psi0)?;
    let den = inner(phi_t, &u_tau.apply(&psi_t)?);
    if den.norm() <= OVERLAP_FLOOR {
        return Err(Error::NearOrthogonal {
            overlap: den.norm(),
            floor: OVERLAP_FLOOR,
        });
    }
    let num = inner(phi_t, &u_tau.apply(&c.apply(&psi_t)?)?);
    Ok(2.0 * (num / den).re)
}

/// The general postselected weak value
/// `2 Re Tr[E(T) e^{L (T-t)} (c e^{L t} rho(0))] / Tr[E(T) e^{L T} rho(0)]`
/// for a mixed initial state, arbitrary Markovian evolution, and a
/// non-projective final effect. The weak-measured channel is the model's
/// designated homodyne channel.
pub fn general_weak_value(
    model: &LindbladModel,
    rho0: &State,
    e_t: &Effect,
    t: f64,
    big_t: f64,
    dt: f64,
) -> Result<WeakValueResult> {
    let c = model
        .homodyne_op()
        .ok_or_else(|| {
            Error::InvalidModel("general_weak_value needs a designated homodyne channel".into())
        })?
        .clone();
    general_weak_value_with_channel(model, &c, rho0, e_t, t, big_t, dt)
}

/// [`general_weak_value`] with the weak-measured operator given explicitly.
///
/// The measured `c` need not be one of the model's collapse operators (it is
/// merely natural for it to be); in particular this covers weak measurements
/// on dissipation-free models, where the evolution is purely unitary.
pub fn general_weak_value_with_channel(
    model: &LindbladModel,
    c: &Operator,
    rho0: &State,
    e_t: &Effect,
    t: f64,
    big_t: f64,
    dt: f64,
) -> Result<WeakValueResult> {
    if !(0.0 <= t && t <= big_t) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= t <= T, got t = {t}, T = {big_t}"
        )));
    }
    let tau = big_t - t;

    let rho_t = propagate(model, rho0.op(), t, dt)?;
    // c rho + rho c^dag propagates to the Hermitian pair whose trace against
    // E is already 2 Re Tr[E e^{L tau} c rho].
    let pair = &c.matmul(&rho_t) + &rho_t.matmul(&c.dagger());
    let pair_t = propagate(model, &pair, tau, dt)?;
    let numerator = e_t.op().matmul(&pair_t).trace();

    let rho_big_t = propagate(model, &rho_t, tau, dt)?;
    let denominator = e_t.op().matmul(&rho_big_t).trace();
    if denominator.norm() <= TRACE_FLOOR {
        return Err(Error::PostselectionImpossible {
            denominator: denominator.norm(),
            floor: TRACE_FLOOR,
        });
    }
    Ok(WeakValueResult {
        value: (numerator / denominator).re,
        numerator,
        denominator,
    })
}

/// Retrodictive form `2 Re Tr[E c rho] / Tr[E rho]`, where `E` is the final
/// effect propagated back to the measurement time and `rho` the initial state
/// propagated forward. Equals [`general_weak_value`] when those two
/// propagations come from the same model.
pub fn retro_weak_value(e_retro: &Effect, rho_t: &State, c: &Operator) -> Result<f64> {
    if e_retro.space() != rho_t.space() {
        return Err(Error::SpaceMismatch {
            left: e_retro.space().dims().to_vec(),
            right: rho_t.space().dims().to_vec(),
        });
    }
    let den = e_retro.op().matmul(rho_t.op()).trace();
    if den.norm() <= TRACE_FLOOR {
        return Err(Error::PostselectionImpossible {
            denominator: den.norm(),
            floor: TRACE_FLOOR,
        });
    }
    let num = e_retro.op().matmul(&c.matmul(rho_t.op())).trace();
    Ok(2.0 * (num / den).re)
}

/// Unconditioned mean `Tr[X rho(t)]` with `X = c + c^dag` of the model's
/// homodyne channel — what [`general_weak_value`] collapses to for
/// `E(T) = 1`.
pub fn unconditioned_mean(model: &LindbladModel, rho0: &State, t: f64, dt: f64) -> Result<f64> {
    let c = model.homodyne_op().ok_or_else(|| {
        Error::InvalidModel("unconditioned_mean needs a designated homodyne channel".into())
    })?;
    let x = &c.clone() + &c.dagger();
    let rho_t = propagate(model, rho0.op(), t, dt)?;
    Ok(x.matmul(&rho_t).trace().re)
}
