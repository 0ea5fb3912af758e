//! Dense complex operator algebra on tensor-product Hilbert spaces.
//!
//! Conventions, fixed throughout the crate:
//! - Fock basis ascending `|0>, ..., |n_max>`; atom basis `(g, e)`.
//! - Tensor order: field first, then atoms 1..N. Subsystem 0 is the leftmost
//!   Kronecker factor.
//! - Tolerances: Hermiticity and positivity are checked to 1e-10 absolute on
//!   matrix elements / eigenvalues (double precision accumulated over up to
//!   ~1e4 integrator steps).

use ndarray::{Array1, Array2};
use ndarray_linalg::{EighInto, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Absolute tolerance for Hermiticity and trace checks at construction time.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Absolute tolerance on eigenvalues for positivity checks at construction time.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// An ordered list of subsystem dimensions defining a tensor-product space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace("no subsystems given".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidSpace("every dimension must be >= 1".into()));
        }
        Ok(Self { dims })
    }

    /// Single-subsystem space of the given dimension.
    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    /// Two-level (qubit) space.
    pub fn qubit() -> Self {
        Self { dims: vec![2] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }
}

/// A dense complex matrix tagged with its Hilbert space.
///
/// States, Hamiltonians, effects and propagators are all `Operator`s with
/// extra invariants layered on top.
#[derive(Clone, Debug)]
pub struct Operator {
    space: HilbertSpace,
    entries: Array2<Complex64>,
}

impl Operator {
    pub fn new(space: HilbertSpace, entries: Array2<Complex64>) -> Result<Self> {
        let d = space.total_dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::InvalidOperator(format!(
                "matrix is {}x{} but space has total_dim {}",
                entries.nrows(),
                entries.ncols(),
                d
            )));
        }
        Ok(Self { space, entries })
    }

    pub fn zeros(space: HilbertSpace) -> Self {
        let d = space.total_dim();
        Self {
            space,
            entries: Array2::zeros((d, d)),
        }
    }

    pub fn identity(space: HilbertSpace) -> Self {
        let d = space.total_dim();
        Self {
            space,
            entries: Array2::eye(d),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<Complex64> {
        self.entries
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let entries = self.entries.t().mapv(|z| z.conj());
        Self {
            space: self.space.clone(),
            entries,
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.diag().sum()
    }

    /// Matrix product; panics on space mismatch (programmer error — the
    /// checked entry points validate spaces before arithmetic starts).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.space, other.space, "operator space mismatch");
        Self {
            space: self.space.clone(),
            entries: self.entries.dot(&other.entries),
        }
    }

    /// `(A + A^dag) / 2`.
    pub fn hermitize(&self) -> Self {
        let herm = (&self.entries + &self.entries.t().mapv(|z| z.conj())) * Complex64::new(0.5, 0.0);
        Self {
            space: self.space.clone(),
            entries: herm,
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dim();
        for i in 0..d {
            for j in i..d {
                if (self.entries[[i, j]] - self.entries[[j, i]].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn eigvalsh(&self) -> Result<Vec<f64>> {
        let (vals, _) = self.entries.clone().eigh_into(UPLO::Lower)?;
        Ok(vals.to_vec())
    }

    /// Apply to a ket, returning `A |v>`.
    pub fn apply(&self, ket: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        if ket.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "ket length {} does not match operator dim {}",
                ket.len(),
                self.dim()
            )));
        }
        Ok(self.entries.dot(ket))
    }

    fn check_space(&self, other: &Self) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space.dims().to_vec(),
                right: other.space.dims().to_vec(),
            });
        }
        Ok(())
    }
}

impl std::ops::Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator {
            space: self.space.clone(),
            entries: &self.entries + &rhs.entries,
        }
    }
}

impl std::ops::Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator {
            space: self.space.clone(),
            entries: &self.entries - &rhs.entries,
        }
    }
}

impl std::ops::Mul<Complex64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: Complex64) -> Operator {
        Operator {
            space: self.space.clone(),
            entries: self.entries.mapv(|z| z * rhs),
        }
    }
}

impl std::ops::Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self * Complex64::new(rhs, 0.0)
    }
}

/// Annihilation operator on a Fock space truncated at `n_max` photons
/// (dimension `n_max + 1`): `a |n> = sqrt(n) |n-1>`.
///
/// The truncation leaves `[a, a^dag] = 1` valid only below the top level.
pub fn annihilation(n_max: usize) -> Result<Operator> {
    if n_max == 0 {
        return Err(Error::InvalidInput(
            "n_max = 0 leaves no dynamics; need n_max >= 1".into(),
        ));
    }
    let space = HilbertSpace::single(n_max + 1)?;
    let mut entries = Array2::zeros((n_max + 1, n_max + 1));
    for n in 1..=n_max {
        entries[[n - 1, n]] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    Operator::new(space, entries)
}

/// Atomic lowering operator `sigma = |g><e|` on a qubit with basis order (g, e).
pub fn sigma_lower() -> Operator {
    let mut entries = Array2::zeros((2, 2));
    entries[[0, 1]] = Complex64::new(1.0, 0.0);
    Operator {
        space: HilbertSpace::qubit(),
        entries,
    }
}

/// Basis ket `|index>` on the given space.
pub fn basis_ket(space: &HilbertSpace, index: usize) -> Result<Array1<Complex64>> {
    let d = space.total_dim();
    if index >= d {
        return Err(Error::InvalidInput(format!(
            "basis index {index} out of range for dim {d}"
        )));
    }
    let mut v = Array1::zeros(d);
    v[index] = Complex64::new(1.0, 0.0);
    Ok(v)
}

/// Kronecker product of two matrices (first factor's indices are major).
pub fn kron(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[[i * rb + k, j * cb + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Embed a single-subsystem operator at `index` into `space`:
/// `1 x ... x op x ... x 1` with the leftmost factor being subsystem 0.
pub fn embed(op: &Operator, index: usize, space: &HilbertSpace) -> Result<Operator> {
    if index >= space.n_subsystems() {
        return Err(Error::SubsystemOutOfRange {
            index,
            n_subsystems: space.n_subsystems(),
        });
    }
    if op.space.dims() != [space.dims()[index]] {
        return Err(Error::InvalidOperator(format!(
            "operator acts on dims {:?} but subsystem {} has dim {}",
            op.space.dims(),
            index,
            space.dims()[index]
        )));
    }
    let mut entries = Array2::eye(1);
    for (k, &d) in space.dims().iter().enumerate() {
        if k == index {
            entries = kron(&entries, op.entries());
        } else {
            entries = kron(&entries, &Array2::eye(d));
        }
    }
    Operator::new(space.clone(), entries)
}

/// Dissipation superoperator `D[A]B = A B A^dag - (1/2){A^dag A, B}`.
pub fn dsuper(a: &Operator, b: &Operator) -> Result<Operator> {
    a.check_space(b)?;
    let adag = a.dagger();
    let ada = adag.matmul(a);
    let sandwich = a.matmul(b).matmul(&adag);
    let anti = &ada.matmul(b) + &b.matmul(&ada);
    Ok(&sandwich - &(&anti * 0.5))
}

/// Conditioning superoperator `H[A]B = (A - Tr[AB])B + B(A^dag - Tr[AB]^*)`.
pub fn hsuper(a: &Operator, b: &Operator) -> Result<Operator> {
    a.check_space(b)?;
    let m = a.matmul(b).trace();
    let ab = a.matmul(b);
    let ba_dag = b.matmul(&a.dagger());
    // (A - m)B + B(A^dag - m*) = AB + BA^dag - (m + m*) B
    let shift = &(b * (m + m.conj()));
    Ok(&(&ab + &ba_dag) - shift)
}

/// `Tr[A rho]`. Real to 1e-10 when `A` is Hermitian.
pub fn expectation(a: &Operator, rho: &State) -> Result<Complex64> {
    a.check_space(rho.op())?;
    Ok(a.matmul(rho.op()).trace())
}

/// A density matrix: Hermitian, unit trace, positive semidefinite
/// (all to the crate tolerances).
#[derive(Clone, Debug)]
pub struct State {
    op: Operator,
}

impl State {
    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_hermitian(HERMITICITY_TOL) {
            return Err(Error::InvalidState(format!(
                "not Hermitian to {HERMITICITY_TOL:.0e}"
            )));
        }
        let tr = op.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("trace = {tr} is not 1")));
        }
        let evals = op.eigvalsh()?;
        if let Some(&min) = evals.first() {
            if min < -POSITIVITY_TOL {
                return Err(Error::InvalidState(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self { op })
    }

    /// Pure state `|psi><psi|` from a ket (normalized internally).
    pub fn pure(space: &HilbertSpace, ket: &Array1<Complex64>) -> Result<Self> {
        if ket.len() != space.total_dim() {
            return Err(Error::InvalidState(format!(
                "ket length {} does not match space dim {}",
                ket.len(),
                space.total_dim()
            )));
        }
        let norm: f64 = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-14 {
            return Err(Error::InvalidState("zero ket".into()));
        }
        let d = ket.len();
        let mut entries = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                entries[[i, j]] = ket[i] * ket[j].conj() / (norm * norm);
            }
        }
        Ok(Self {
            op: Operator::new(space.clone(), entries)?,
        })
    }

    /// Basis state `|index><index|`.
    pub fn basis(space: &HilbertSpace, index: usize) -> Result<Self> {
        let ket = basis_ket(space, index)?;
        Self::pure(space, &ket)
    }

    /// Hermitize and renormalize without the eigenvalue check. For use by
    /// steppers that keep their own cheaper positivity guards.
    pub(crate) fn renormalized_unchecked(op: Operator) -> Self {
        let herm = op.hermitize();
        let tr = herm.trace().re;
        Self {
            op: &herm * (1.0 / tr),
        }
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn space(&self) -> &HilbertSpace {
        self.op.space()
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    /// `Tr[rho^2]`.
    pub fn purity(&self) -> f64 {
        self.op.matmul(&self.op).trace().re
    }
}

/// A POVM element: Hermitian and positive. At creation time `E <= 1` is also
/// required; retrodictive propagation is allowed to grow the norm, so effects
/// produced by the engine only guarantee positivity.
#[derive(Clone, Debug)]
pub struct Effect {
    op: Operator,
}

impl Effect {
    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_hermitian(HERMITICITY_TOL) {
            return Err(Error::InvalidEffect(format!(
                "not Hermitian to {HERMITICITY_TOL:.0e}"
            )));
        }
        let evals = op.eigvalsh()?;
        if let Some(&min) = evals.first() {
            if min < -POSITIVITY_TOL {
                return Err(Error::InvalidEffect(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        if let Some(&max) = evals.last() {
            if max > 1.0 + POSITIVITY_TOL {
                return Err(Error::InvalidEffect(format!(
                    "eigenvalue {max:.6} exceeds 1; not an effect at creation time"
                )));
            }
        }
        Ok(Self { op })
    }

    pub fn identity(space: HilbertSpace) -> Self {
        Self {
            op: Operator::identity(space),
        }
    }

    /// Rank-1 projector `|phi><phi|`.
    pub fn projector(space: &HilbertSpace, ket: &Array1<Complex64>) -> Result<Self> {
        let state = State::pure(space, ket)?;
        Ok(Self {
            op: state.into_operator(),
        })
    }

    /// Construct without the `E <= 1` bound (retrodicted effects need not
    /// preserve norm). Positivity is still required, to the given tolerance.
    pub(crate) fn from_propagated(op: Operator, tol: f64) -> Result<Self> {
        let herm = op.hermitize();
        let evals = herm.eigvalsh()?;
        if let Some(&min) = evals.first() {
            if min < -tol {
                return Err(Error::InvalidEffect(format!(
                    "retrodicted effect lost positivity: eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self { op: herm })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn space(&self) -> &HilbertSpace {
        self.op.space()
    }

    /// Rescaled so the largest eigenvalue is 1. Display convenience only;
    /// weak-value ratios must use the unscaled effect (the scale cancels).
    pub fn renormalized_for_display(&self) -> Result<Effect> {
        let evals = self.op.eigvalsh()?;
        let max = evals.last().copied().unwrap_or(1.0);
        if max <= 0.0 {
            return Err(Error::InvalidEffect("effect has no positive part".into()));
        }
        Ok(Effect {
            op: &self.op * (1.0 / max),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha12Rng, space: &HilbertSpace) -> Operator {
        let d = space.total_dim();
        let entries = Array2::from_shape_fn((d, d), |_| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        Operator::new(space.clone(), entries).unwrap()
    }

    fn random_hermitian(rng: &mut ChaCha12Rng, space: &HilbertSpace) -> Operator {
        random_matrix(rng, space).hermitize()
    }

    fn random_density(rng: &mut ChaCha12Rng, space: &HilbertSpace) -> State {
        let g = random_matrix(rng, space);
        let rho = g.matmul(&g.dagger());
        let tr = rho.trace().re;
        State::new(&rho * (1.0 / tr)).unwrap()
    }

    #[test]
    fn annihilation_matrix_elements() {
        let a = annihilation(2).unwrap();
        assert_eq!(a.dim(), 3);
        assert_abs_diff_eq!(a.entries()[[0, 1]].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.entries()[[1, 2]].re, 2f64.sqrt(), epsilon = 1e-15);
        let nonzero: usize = a.entries().iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn annihilation_kills_vacuum() {
        let a = annihilation(2).unwrap();
        let vac = basis_ket(a.space(), 0).unwrap();
        let out = a.apply(&vac).unwrap();
        assert!(out.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn number_operator_eigenvalue_on_one_photon() {
        let a = annihilation(2).unwrap();
        let n = a.dagger().matmul(&a);
        let one = basis_ket(a.space(), 1).unwrap();
        let nv = n.apply(&one).unwrap();
        assert_abs_diff_eq!(nv[1].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn annihilation_rejects_zero_cutoff() {
        assert!(annihilation(0).is_err());
    }

    #[test]
    fn sigma_lowers_excited_and_kills_ground() {
        let s = sigma_lower();
        let e = basis_ket(s.space(), 1).unwrap();
        let g = basis_ket(s.space(), 0).unwrap();
        let se = s.apply(&e).unwrap();
        assert_abs_diff_eq!(se[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(se[1].norm(), 0.0, epsilon = 1e-15);
        let sg = s.apply(&g).unwrap();
        assert!(sg.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn sigma_dagger_sigma_projects_excited() {
        let s = sigma_lower();
        let proj = s.dagger().matmul(&s);
        assert_abs_diff_eq!(proj.entries()[[1, 1]].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(proj.entries()[[0, 0]].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(proj.entries()[[0, 1]].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn embed_acts_only_on_target_subsystem() {
        // sigma on subsystem 1 of [3, 2]: |n=1, e> -> |n=1, g>
        let space = HilbertSpace::new(vec![3, 2]).unwrap();
        let s = embed(&sigma_lower(), 1, &space).unwrap();
        // |n=1, e> has index 1*2 + 1 = 3; |n=1, g> index 2.
        let ket = basis_ket(&space, 3).unwrap();
        let out = s.apply(&ket).unwrap();
        assert_abs_diff_eq!(out[2].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            out.iter().map(|z| z.norm_sqr()).sum::<f64>(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn embed_identity_is_identity() {
        let space = HilbertSpace::new(vec![3, 2]).unwrap();
        let id2 = Operator::identity(HilbertSpace::qubit());
        let emb = embed(&id2, 1, &space).unwrap();
        let diff = &emb - &Operator::identity(space);
        assert!(diff.max_abs() < 1e-15);
    }

    #[test]
    fn embed_number_operator_trace() {
        // Independent oracle: build the Kronecker matrix by an explicit loop
        // and trace it directly. Expected Tr = 2 * (0 + 1 + 2) = 6.
        let space = HilbertSpace::new(vec![3, 2]).unwrap();
        let a = annihilation(2).unwrap();
        let n = a.dagger().matmul(&a);
        let emb = embed(&n, 0, &space).unwrap();

        let mut oracle = Array2::<Complex64>::zeros((6, 6));
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..2 {
                    oracle[[i * 2 + k, j * 2 + k]] = n.entries()[[i, j]];
                }
            }
        }
        let tr_oracle: Complex64 = oracle.diag().sum();
        assert_abs_diff_eq!(tr_oracle.re, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(emb.trace().re, tr_oracle.re, epsilon = 1e-12);
        assert!((emb.entries() - &oracle).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn embed_errors() {
        let space = HilbertSpace::new(vec![3, 2]).unwrap();
        assert!(embed(&sigma_lower(), 2, &space).is_err());
        assert!(embed(&sigma_lower(), 0, &space).is_err()); // dim mismatch
    }

    #[test]
    fn dsuper_on_one_photon() {
        let a = annihilation(2).unwrap();
        let one = State::basis(a.space(), 1).unwrap();
        let d = dsuper(&a, one.op()).unwrap();
        // |0><0| - |1><1|
        assert_abs_diff_eq!(d.entries()[[0, 0]].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.entries()[[1, 1]].re, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.trace().norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn dsuper_vacuum_is_dark() {
        let a = annihilation(2).unwrap();
        let vac = State::basis(a.space(), 0).unwrap();
        let d = dsuper(&a, vac.op()).unwrap();
        assert!(d.max_abs() < 1e-15);
    }

    #[test]
    fn dsuper_traceless_sweep() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for dim in 2..=6 {
            let space = HilbertSpace::single(dim).unwrap();
            for _ in 0..20 {
                let a = random_matrix(&mut rng, &space);
                let b = random_hermitian(&mut rng, &space);
                let d = dsuper(&a, &b).unwrap();
                assert!(d.trace().norm() < 1e-10, "dim {dim}");
            }
        }
    }

    #[test]
    fn hsuper_vacuum_vanishes() {
        let a = annihilation(2).unwrap();
        let vac = State::basis(a.space(), 0).unwrap();
        let h = hsuper(&a, vac.op()).unwrap();
        assert!(h.max_abs() < 1e-15);
    }

    #[test]
    fn hsuper_traceless_sweep() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for dim in 2..=6 {
            let space = HilbertSpace::single(dim).unwrap();
            for _ in 0..20 {
                let a = random_matrix(&mut rng, &space);
                let rho = random_density(&mut rng, &space);
                let h = hsuper(&a, rho.op()).unwrap();
                assert!(h.trace().norm() < 1e-10, "dim {dim}");
            }
        }
    }

    #[test]
    fn hsuper_plus_state_expansion_oracle() {
        // |psi> = (|0> + |1>)/sqrt(2) on the truncated Fock space; expand the
        // definition by hand: (a - m) rho + rho (a^dag - m*), m = Tr[a rho].
        let a = annihilation(1).unwrap();
        let space = a.space().clone();
        let ket = array![c(1.0 / 2f64.sqrt(), 0.0), c(1.0 / 2f64.sqrt(), 0.0)];
        let rho = State::pure(&space, &ket).unwrap();

        let m: Complex64 = a.entries().dot(rho.op().entries()).diag().sum();
        let lhs = a.entries().dot(rho.op().entries())
            - rho.op().entries().mapv(|z| z * m);
        let rhs = rho.op().entries().dot(&a.entries().t().mapv(|z| z.conj()))
            - rho.op().entries().mapv(|z| z * m.conj());
        let oracle = lhs + rhs;

        let h = hsuper(&a, rho.op()).unwrap();
        assert!((h.entries() - &oracle).iter().all(|z| z.norm() < 1e-14));
        assert_abs_diff_eq!(h.trace().norm(), 0.0, epsilon = 1e-14);
        // For this state the result is diag(1/2, -1/2).
        assert_abs_diff_eq!(h.entries()[[0, 0]].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(h.entries()[[1, 1]].re, -0.5, epsilon = 1e-14);
    }

    #[test]
    fn expectation_examples() {
        let a = annihilation(2).unwrap();
        let n = a.dagger().matmul(&a);
        let vac = State::basis(a.space(), 0).unwrap();
        assert_abs_diff_eq!(
            expectation(&n, &vac).unwrap().re,
            0.0,
            epsilon = 1e-14
        );

        // sigma_x on the maximally mixed qubit.
        let sx = {
            let mut m = Array2::zeros((2, 2));
            m[[0, 1]] = c(1.0, 0.0);
            m[[1, 0]] = c(1.0, 0.0);
            Operator::new(HilbertSpace::qubit(), m).unwrap()
        };
        let mixed = State::new(&Operator::identity(HilbertSpace::qubit()) * 0.5).unwrap();
        assert_abs_diff_eq!(expectation(&sx, &mixed).unwrap().re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expectation_matches_bruteforce_trace() {
        // Coherent-like truncated state vs an independent double-loop trace.
        let a = annihilation(3).unwrap();
        let space = a.space().clone();
        let alpha = c(0.6, 0.2);
        let mut ket = Array1::zeros(4);
        let mut amp = c(1.0, 0.0);
        for n in 0..4usize {
            if n > 0 {
                amp = amp * alpha / c((n as f64).sqrt(), 0.0);
            }
            ket[n] = amp;
        }
        let rho = State::pure(&space, &ket).unwrap();
        let x = &a + &a.dagger();

        let mut oracle = c(0.0, 0.0);
        for i in 0..4 {
            for k in 0..4 {
                oracle += x.entries()[[i, k]] * rho.op().entries()[[k, i]];
            }
        }
        let got = expectation(&x, &rho).unwrap();
        assert_abs_diff_eq!(got.re, oracle.re, epsilon = 1e-12);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn embed_is_homomorphism() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let space = HilbertSpace::new(vec![3, 2]).unwrap();
        let sub = HilbertSpace::qubit();
        for _ in 0..20 {
            let a = random_matrix(&mut rng, &sub);
            let b = random_matrix(&mut rng, &sub);
            let ab = a.matmul(&b);
            let lhs = embed(&ab, 1, &space).unwrap();
            let rhs = embed(&a, 1, &space)
                .unwrap()
                .matmul(&embed(&b, 1, &space).unwrap());
            assert!((&lhs - &rhs).max_abs() < 1e-12);
        }
    }

    #[test]
    fn commutator_below_cutoff() {
        let n_max = 5;
        let a = annihilation(n_max).unwrap();
        let comm = &a.matmul(&a.dagger()) - &a.dagger().matmul(&a);
        for i in 0..n_max {
            for j in 0..n_max {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(comm.entries()[[i, j]].re, expected, epsilon = 1e-14);
                assert_abs_diff_eq!(comm.entries()[[i, j]].im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn constructors_match_declared_space() {
        let a = annihilation(4).unwrap();
        assert_eq!(a.dim(), a.space().total_dim());
        let s = sigma_lower();
        assert_eq!(s.dim(), s.space().total_dim());
        let space = HilbertSpace::new(vec![3, 2, 2]).unwrap();
        let emb = embed(&sigma_lower(), 2, &space).unwrap();
        assert_eq!(emb.dim(), 12);
    }

    #[test]
    fn state_validation_rejects_bad_input() {
        let space = HilbertSpace::qubit();
        // Non-Hermitian.
        let mut m = Array2::zeros((2, 2));
        m[[0, 0]] = c(1.0, 0.0);
        m[[0, 1]] = c(0.5, 0.0);
        assert!(State::new(Operator::new(space.clone(), m).unwrap()).is_err());
        // Wrong trace.
        let m2 = Array2::eye(2);
        assert!(State::new(Operator::new(space.clone(), m2).unwrap()).is_err());
        // Negative eigenvalue.
        let mut m3 = Array2::zeros((2, 2));
        m3[[0, 0]] = c(1.5, 0.0);
        m3[[1, 1]] = c(-0.5, 0.0);
        assert!(State::new(Operator::new(space, m3).unwrap()).is_err());
    }

    #[test]
    fn effect_validation() {
        let space = HilbertSpace::qubit();
        // Valid: a projector.
        let ket = array![c(1.0, 0.0), c(0.0, 0.0)];
        assert!(Effect::projector(&space, &ket).is_ok());
        // Eigenvalue above 1 rejected at creation.
        let m = Array2::eye(2).mapv(|z: Complex64| z * 2.0);
        assert!(Effect::new(Operator::new(space.clone(), m).unwrap()).is_err());
        // from_propagated allows norms above 1 but not negativity.
        let m2 = Array2::eye(2).mapv(|z: Complex64| z * 2.0);
        assert!(Effect::from_propagated(Operator::new(space.clone(), m2).unwrap(), 1e-8).is_ok());
        let mut m3 = Array2::<Complex64>::eye(2);
        m3[[1, 1]] = c(-1.0, 0.0);
        assert!(Effect::from_propagated(Operator::new(space, m3).unwrap(), 1e-8).is_err());
    }

    #[test]
    fn hilbert_space_validation() {
        assert!(HilbertSpace::new(vec![]).is_err());
        assert!(HilbertSpace::new(vec![2, 0]).is_err());
        assert_eq!(HilbertSpace::new(vec![3, 2, 2]).unwrap().total_dim(), 12);
    }
}
