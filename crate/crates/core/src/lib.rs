//! Postselected weak values of continuously monitored open quantum systems,
//! computed three independent ways: closed-form pre/postselected formulas,
//! deterministic predictive/retrodictive master-equation evolution, and
//! Monte Carlo stochastic quantum trajectories. Includes the driven
//! cavity-QED model whose intensity-field correlation h(tau) ties the three
//! routes together.

pub mod error;
pub mod linalg;
pub mod lindblad;
pub mod operator;
pub mod stonybrook;
pub mod trajectory;
pub mod weakvalue;

pub use error::{Error, Result};
pub use lindblad::{
    liouvillian_apply, liouvillian_matrix, propagate, retropropagate, steady_state,
    unitary_propagator, LindbladModel, Propagation,
};
pub use operator::{
    annihilation, basis_ket, dsuper, embed, expectation, hsuper, kron, sigma_lower, Effect,
    HilbertSpace, Operator, State,
};
pub use stonybrook::{
    analytic_h, build_stonybrook, effective_hamiltonian, fit_zeta_omega, h_monte_carlo,
    h_negative_curve, h_negative_tau, h_positive_curve, h_positive_tau, nonunitary_propagator,
    stationary_pure_state, CouplingConvention, CurveMethod, HTauCurve, HTauFit,
    StationaryPureState, StonyBrookParams,
};
pub use trajectory::{
    counting_step, homodyne_step, monte_carlo_weak_value, simulate_trajectory, weak_meas_operator,
    wiener_increments, McEstimate, MonitoredChannel, PostselectionWindow, TrajectoryRecord,
};
pub use weakvalue::{
    aav_weak_value, general_weak_value, general_weak_value_with_channel, generalized_weak_value,
    retro_weak_value, strong_postselected, unconditioned_mean, weak_value_unitary, PurePrePost,
    WeakValueResult,
};
