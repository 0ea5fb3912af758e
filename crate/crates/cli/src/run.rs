//! Command implementations: each returns its internal checks and the files
//! it wrote.

use serde_json::json;
use std::path::{Path, PathBuf};

use qweak_core::{
    aav_weak_value, analytic_h, fit_zeta_omega, general_weak_value, h_monte_carlo,
    h_negative_curve, h_positive_curve, monte_carlo_weak_value, propagate, simulate_trajectory,
    steady_state, strong_postselected, CurveMethod, HTauCurve, PostselectionWindow, PurePrePost,
    StonyBrookParams,
};

use crate::config::{Command, Plan};
use crate::error::{CliError, CliResult};
use crate::output::{
    complex_json, operator_json, write_curve_csv, write_json, write_trajectory_csv, Check,
};

pub struct RunOutput {
    pub checks: Vec<Check>,
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

pub fn execute(plan: &Plan) -> CliResult<RunOutput> {
    let dir = Path::new(&plan.out_dir);
    std::fs::create_dir_all(dir)?;
    match plan.command {
        Command::Steady => run_steady(plan, dir),
        Command::Evolve => run_evolve(plan, dir),
        Command::WeakValueAav => run_aav(plan, dir),
        Command::WeakValueGeneral => run_general(plan, dir),
        Command::WeakValueMc => run_mc(plan, dir),
        Command::StonybrookH => run_stonybrook_h(plan, dir),
        Command::Fit => run_fit(plan, dir),
    }
}

fn require<T: Clone>(v: &Option<T>, what: &str) -> CliResult<T> {
    v.clone()
        .ok_or_else(|| CliError::Config(format!("missing required input: {what}")))
}

fn run_steady(plan: &Plan, dir: &Path) -> CliResult<RunOutput> {
    let model = plan.model.as_ref().expect("validated");
    let rho = steady_state(model)?;
    let residual = qweak_core::liouvillian_apply(model, rho.op())?.max_abs();
    let purity = rho.purity();

    let checks = vec![
        Check::new(
            "steady-state-residual",
            residual < 1e-8,
            format!("|L rho_ss|_max = {residual:.3e} (tol 1e-8)"),
        ),
        Check::new(
            "purity-bounded",
            purity <= 1.0 + 1e-8,
            format!("Tr[rho_ss^2] = {purity:.12}"),
        ),
    ];
    let value = json!({
        "command": "steady",
        "rho_ss": operator_json(rho.op()),
        "purity": purity,
        "residual": residual,
    });
    let path = write_json(dir, "steady_state.json", &value)?;
    Ok(RunOutput {
        checks,
        outputs: vec![path],
        summary: format!("steady state written (purity {purity:.6})"),
    })
}

fn run_evolve(plan: &Plan, dir: &Path) -> CliResult<RunOutput> {
    let model = plan.model.as_ref().expect("validated");
    let rho0 = require(&plan.initial, "[state] initial state")?;
    let t = require(&plan.t, "numerics.t (duration)")?;
    if t < 0.0 {
        return Err(CliError::Config(format!("duration t = {t} must be >= 0")));
    }
    let out = propagate(model, rho0.op(), t, plan.dt)?;
    let trace_drift = (out.trace().re - 1.0).abs();
    let min_eig = out.eigvalsh()?[0];

    let checks = vec![
        Check::new(
            "trace-preserved",
            trace_drift < 1e-8,
            format!("|Tr rho - 1| = {trace_drift:.3e} (tol 1e-8)"),
        ),
        Check::new(
            "positivity",
            min_eig > -1e-8,
            format!("min eigenvalue = {min_eig:.3e} (tol -1e-8)"),
        ),
    ];
    let value = json!({
        "command": "evolve",
        "t": t,
        "dt": plan.dt,
        "rho": operator_json(&out),
        "trace_drift": trace_drift,
        "min_eigenvalue": min_eig,
    });
    let path = write_json(dir, "evolved_state.json", &value)?;
    Ok(RunOutput {
        checks,
        outputs: vec![path],
        summary: format!("evolved to t = {t}"),
    })
}

fn run_aav(plan: &Plan, dir: &Path) -> CliResult<RunOutput> {
    let psi = require(&plan.psi, "state.psi")?;
    let phi = require(&plan.phi, "postselect.phi")?;
    let x = require(&plan.observable, "observable.x")?;
    let pp = PurePrePost::new(psi, phi)?;
    let weak = aav_weak_value(&pp, &x)?;
    let strong = strong_postselected(&pp, &x)?;
    let evals = x.eigvalsh()?;
    let (lo, hi) = (evals[0], evals[evals.len() - 1]);

    let checks = vec![Check::new(
        "strong-value-in-spectrum",
        (lo - 1e-9..=hi + 1e-9).contains(&strong),
        format!("strong = {strong:.9} within [{lo:.6}, {hi:.6}]"),
    )];
    let value = json!({
        "command": "weakvalue-aav",
        "weak_value": weak,
        "strong_value": strong,
        "overlap": complex_json(pp.overlap()),
        "spectrum": [lo, hi],
        "anomalous": weak < lo || weak > hi,
    });
    let path = write_json(dir, "weak_value.json", &value)?;
    Ok(RunOutput {
        checks,
        outputs: vec![path],
        summary: format!("weak value = {weak:.8} (strong = {strong:.8})"),
    })
}

fn run_general(plan: &Plan, dir: &Path) -> CliResult<RunOutput> {
    let model = plan.model.as_ref().expect("validated");
    let rho0 = require(&plan.initial, "[state] initial state")?;
    let e_t = require(&plan.effect, "[postselect] effect or phi")?;
    let t = require(&plan.t, "numerics.t")?;
    let big_t = require(&plan.big_t, "numerics.T")?;
    let wv = general_weak_value(model, &rho0, &e_t, t, big_t, plan.dt)?;

    // The propagated pair c rho + rho c^dag is Hermitian, so the numerator
    // should be real up to integration error.
    let imag = wv.numerator.im.abs() / wv.numerator.norm().max(1.0);
    let checks = vec![
        Check::new(
            "numerator-real",
            imag < 1e-8,
            format!("relative imaginary part = {imag:.3e} (tol 1e-8)"),
        ),
        Check::new(
            "denominator-positive",
            wv.denominator.re > 0.0 && wv.denominator.im.abs() < 1e-8,
            format!("denominator = {:.6e} + {:.2e}i", wv.denominator.re, wv.denominator.im),
        ),
    ];
    let value = json!({
        "command": "weakvalue-general",
        "value": wv.value,
        "numerator": complex_json(wv.numerator),
        "denominator": complex_json(wv.denominator),
        "t": t,
        "T": big_t,
        "dt": plan.dt,
    });
    let path = write_json(dir, "weak_value.json", &value)?;
    Ok(RunOutput {
        checks,
        outputs: vec![path],
        summary: format!("weak value = {:.8}", wv.value),
    })
}

fn run_mc(plan: &Plan, dir: &Path) -> CliResult<RunOutput> {
    let model = plan.model.as_ref().expect("validated");
    let rho0 = require(&plan.initial, "[state] initial state")?;
    let t = require(&plan.t, "numerics.t")?;
    let big_t = require(&plan.big_t, "numerics.T")?;
    let n_traj = require(&plan.n_traj, "numerics.n_traj")?;
    let seed = plan.seed.expect("validated");
    let window = plan.window.unwrap_or(10.0 * plan.dt);

    let est = monte_carlo_weak_value(model, &rho0, t, big_t, plan.dt, window, n_traj, seed)?;

    let checks = vec![
        Check::new(
            "postselection-populated",
            est.n_selected >= 2,
            format!("{} of {} trajectories selected", est.n_selected, est.n_total),
        ),
        Check::new(
            "stderr-finite",
            est.stderr.is_finite(),
            format!("stderr = {:.4e}", est.stderr),
        ),
    ];
    let value = json!({
        "command": "weakvalue-mc",
        "value": est.value,
        "stderr": est.stderr,
        "n_selected": est.n_selected,
        "n_total": est.n_total,
        "window": est.window,
        "t": t,
        "T": big_t,
        "dt": plan.dt,
        "seed": seed,
    });
    let mut outputs = vec![write_json(dir, "mc_estimate.json", &value)?];

    // Optional trajectory dumps (columns t, xw, jump).
    let select = PostselectionWindow {
        center: big_t,
        half_width: window,
    };
    for k in 0..plan.dump_trajectories {
        let rec = simulate_trajectory(
            model,
            &rho0,
            big_t + window,
            plan.dt,
            seed.wrapping_add(k as u64),
            Some(&select),
        )?;
        outputs.push(write_trajectory_csv(dir, &format!("trajectory_{k}.csv"), &rec)?);
    }
    Ok(RunOutput {
        checks,
        outputs,
        summary: format!(
            "mc estimate = {:.6} +- {:.6} ({} selected)",
            est.value, est.stderr, est.n_selected
        ),
    })
}

/// Split a mixed grid into the negative branch (as |tau|, ascending) and the
/// non-negative branch.
fn split_grid(taus: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let neg: Vec<f64> = taus
        .iter()
        .filter(|&&t| t < -1e-12)
        .map(|t| -t)
        .rev()
        .collect();
    let pos: Vec<f64> = taus.iter().filter(|&&t| t >= -1e-12).map(|t| t.max(0.0)).collect();
    (neg, pos)
}

fn run_stonybrook_h(plan: &Plan, dir: &Path) -> CliResult<RunOutput> {
    let p = plan.stonybrook.as_ref().expect("validated");
    let taus = &plan.taus;
    let (neg_abs, pos) = split_grid(taus);
    let n_neg = neg_abs.len();
    let want = |m: &str| plan.methods.iter().any(|x| x == m);

    // Full master-equation branch: weak-value/retrodictive for tau >= 0,
    // predictive collapse for tau < 0. The fit always runs on the positive
    // full-ME curve when requested (or when the symmetry check needs zeta).
    let need_full = want("full-me") || want("analytic-fit");
    let mut full_col: Vec<Option<f64>> = vec![None; taus.len()];
    let mut pos_curve: Option<HTauCurve> = None;
    if need_full {
        if !pos.is_empty() {
            let curve = h_positive_curve(p, &pos, plan.dt, CurveMethod::FullMe)?;
            for (k, v) in curve.values().iter().enumerate() {
                full_col[n_neg + k] = Some(*v);
            }
            pos_curve = Some(curve);
        }
        if !neg_abs.is_empty() {
            let curve = h_negative_curve(p, &neg_abs, plan.dt)?;
            for (k, v) in curve.values().iter().enumerate() {
                // neg_abs is ascending |tau|; column index runs backwards.
                full_col[n_neg - 1 - k] = Some(*v);
            }
        }
    }

    let mut eff_col: Vec<Option<f64>> = vec![None; taus.len()];
    if want("effective-h") && !pos.is_empty() {
        let curve = h_positive_curve(p, &pos, plan.dt, CurveMethod::EffectiveH)?;
        for (k, v) in curve.values().iter().enumerate() {
            eff_col[n_neg + k] = Some(*v);
        }
    }

    // Fit of the damped-oscillation form to the positive full-ME branch.
    let fit = match &pos_curve {
        Some(curve) if curve.len() >= 50 => Some(fit_zeta_omega(curve)?),
        _ => None,
    };
    let mut fit_col: Vec<Option<f64>> = vec![None; taus.len()];
    if want("analytic-fit") {
        let f = fit.as_ref().ok_or_else(|| {
            CliError::Config(
                "analytic-fit needs at least 50 non-negative tau points".into(),
            )
        })?;
        for (k, &tau) in taus.iter().enumerate() {
            fit_col[k] = Some(analytic_h(p, tau, f.zeta, f.omega)?);
        }
    }

    let mut mc_col: Vec<Option<f64>> = vec![None; taus.len()];
    let mut mc_stderr: Vec<Option<f64>> = vec![None; taus.len()];
    if want("monte-carlo") {
        let n_traj = require(&plan.n_traj, "numerics.n_traj (for monte-carlo)")?;
        let seed = plan.seed.expect("validated");
        let window = plan.window.unwrap_or(10.0 * plan.dt);
        for (k, &tau) in taus.iter().enumerate() {
            if tau < -1e-12 {
                continue;
            }
            let base = seed.wrapping_add((k as u64).wrapping_mul(n_traj as u64));
            let est = h_monte_carlo(p, tau.max(0.0), plan.dt, window, n_traj, base)?;
            mc_col[k] = Some(est.value);
            mc_stderr[k] = Some(est.stderr);
        }
    }

    // Internal checks.
    let mut checks = Vec::new();
    if let Some(f) = &fit {
        let eta_expect = p.decay_rate_eta();
        if p.weak_drive() {
            checks.push(Check::new(
                "fitted-decay-rate",
                (f.eta - eta_expect).abs() < 0.05 * eta_expect,
                format!("eta_fit = {:.5} vs (kappa+gamma_perp)/2 = {eta_expect} (tol 5%)", f.eta),
            ));
            let bound = 10.0 * (p.epsilon / p.kappa) * (p.epsilon / p.kappa);
            checks.push(Check::new(
                "fit-residual",
                f.max_residual < bound,
                format!("max residual = {:.3e} (tol {bound:.1e})", f.max_residual),
            ));
        }
        // Symmetry of the two branches on matching |tau| (when both exist).
        if n_neg > 0 {
            let mut max_asym = 0.0f64;
            let mut compared = 0usize;
            for (k, &tau) in taus.iter().enumerate() {
                if tau >= -1e-12 {
                    continue;
                }
                // find the matching positive grid point, if any
                if let Some(j) = taus.iter().position(|&tp| (tp + tau).abs() < 1e-9) {
                    if let (Some(a), Some(b)) = (full_col[k], full_col[j]) {
                        max_asym = max_asym.max((a - b).abs());
                        compared += 1;
                    }
                }
            }
            if compared > 0 {
                let bound = 10.0 * (p.epsilon / p.kappa) * f.zeta.abs();
                checks.push(Check::new(
                    "branch-symmetry",
                    max_asym < bound,
                    format!(
                        "max |h(-tau) - h(tau)| = {max_asym:.3e} over {compared} pairs (tol {bound:.3e})"
                    ),
                ));
            }
        }
    }
    if want("full-me") && want("effective-h") && p.weak_drive() {
        let bound = 10.0 * (p.epsilon / p.kappa) * (p.epsilon / p.kappa);
        let mut max_diff = 0.0f64;
        for k in 0..taus.len() {
            if let (Some(a), Some(b)) = (full_col[k], eff_col[k]) {
                max_diff = max_diff.max((a - b).abs());
            }
        }
        checks.push(Check::new(
            "tier-agreement",
            max_diff < bound,
            format!("max |full - effective| = {max_diff:.3e} (tol {bound:.1e})"),
        ));
    }

    // Assemble outputs.
    let mut columns: Vec<(&str, Vec<Option<f64>>)> = Vec::new();
    if want("full-me") {
        columns.push(("h_full", full_col.clone()));
    }
    if want("effective-h") {
        columns.push(("h_eff", eff_col.clone()));
    }
    if want("analytic-fit") {
        columns.push(("h_analytic_fit", fit_col.clone()));
    }
    if want("monte-carlo") {
        columns.push(("h_mc", mc_col.clone()));
    }

    let mut outputs = Vec::new();
    if plan.format == "csv" || plan.format == "both" {
        outputs.push(write_curve_csv(dir, "h_curve.csv", taus, &columns)?);
    }
    let summary_value = json!({
        "command": "stonybrook-h",
        "params": stony_json(p),
        "dt": plan.dt,
        "methods": plan.methods,
        "fit": fit.as_ref().map(|f| json!({
            "zeta": f.zeta,
            "omega": f.omega,
            "eta": f.eta,
            "max_residual": f.max_residual,
        })),
        "mc_stderr": mc_stderr,
        "curve": if plan.format == "json" || plan.format == "both" {
            Some(json!({
                "taus": taus,
                "columns": columns.iter().map(|(n, col)| json!({
                    "method": n,
                    "values": col,
                })).collect::<Vec<_>>(),
            }))
        } else {
            None
        },
    });
    outputs.push(write_json(dir, "h_summary.json", &summary_value)?);

    let summary = match &fit {
        Some(f) => format!(
            "h(tau) over {} points; fit: zeta = {:.5}, Omega = {:.5}, eta = {:.5}",
            taus.len(),
            f.zeta,
            f.omega,
            f.eta
        ),
        None => format!("h(tau) over {} points", taus.len()),
    };
    Ok(RunOutput {
        checks,
        outputs,
        summary,
    })
}

fn stony_json(p: &StonyBrookParams) -> serde_json::Value {
    json!({
        "epsilon": p.epsilon,
        "kappa": p.kappa,
        "gamma_perp": p.gamma_perp,
        "g": p.g,
        "n_max": p.n_max,
        "eta_h": p.eta_h,
        "eta_c": p.eta_c,
        "coupling": match p.coupling {
            qweak_core::CouplingConvention::JaynesCummings => "jaynes-cummings",
            qweak_core::CouplingConvention::Printed => "printed",
        },
        "weak_drive_regime": p.weak_drive(),
    })
}

fn run_fit(plan: &Plan, dir: &Path) -> CliResult<RunOutput> {
    let p = plan.stonybrook.as_ref().expect("validated");
    let curve = h_positive_curve(p, &plan.taus, plan.dt, CurveMethod::FullMe)?;
    let fit = fit_zeta_omega(&curve)?;

    let mut checks = Vec::new();
    if p.weak_drive() {
        let eta_expect = p.decay_rate_eta();
        checks.push(Check::new(
            "fitted-decay-rate",
            (fit.eta - eta_expect).abs() < 0.05 * eta_expect,
            format!("eta_fit = {:.5} vs (kappa+gamma_perp)/2 = {eta_expect} (tol 5%)", fit.eta),
        ));
    }

    let columns = vec![(
        "h_full",
        curve.values().iter().map(|v| Some(*v)).collect::<Vec<_>>(),
    )];
    let mut outputs = Vec::new();
    if plan.format == "csv" || plan.format == "both" {
        outputs.push(write_curve_csv(dir, "h_curve.csv", curve.taus(), &columns)?);
    }
    let value = json!({
        "command": "fit",
        "params": stony_json(p),
        "zeta": fit.zeta,
        "omega": fit.omega,
        "eta_fit": fit.eta,
        "max_residual": fit.max_residual,
        "n_points": curve.len(),
    });
    outputs.push(write_json(dir, "fit.json", &value)?);
    Ok(RunOutput {
        checks,
        outputs,
        summary: format!(
            "fit: zeta = {:.6}, Omega = {:.6}, eta = {:.6}, residual = {:.2e}",
            fit.zeta, fit.omega, fit.eta, fit.max_residual
        ),
    })
}
