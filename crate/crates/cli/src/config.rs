//! Sectioned key-value run configuration (TOML). Unknown keys are hard
//! errors; the schema is documented in `docs/config-schema.md`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::Deserialize;

use qweak_core::{
    CouplingConvention, Effect, HilbertSpace, LindbladModel, Operator, Propagation, State,
    StonyBrookParams,
};

use crate::error::{CliError, CliResult};

/// Complex scalar as a `[re, im]` pair; matrices are row-major lists of rows.
pub type Cx = [f64; 2];
pub type Ket = Vec<Cx>;
pub type Matrix = Vec<Vec<Cx>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Steady,
    Evolve,
    WeakValueAav,
    WeakValueGeneral,
    WeakValueMc,
    StonybrookH,
    Fit,
}

impl Command {
    pub fn parse(name: &str) -> CliResult<Self> {
        Ok(match name {
            "steady" => Command::Steady,
            "evolve" => Command::Evolve,
            "weakvalue-aav" => Command::WeakValueAav,
            "weakvalue-general" => Command::WeakValueGeneral,
            "weakvalue-mc" => Command::WeakValueMc,
            "stonybrook-h" => Command::StonybrookH,
            "fit" => Command::Fit,
            other => {
                return Err(CliError::Config(format!(
                    "unknown command {other:?}; expected one of steady, evolve, weakvalue-aav, \
                     weakvalue-general, weakvalue-mc, stonybrook-h, fit"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Evolve => "evolve",
            Command::WeakValueAav => "weakvalue-aav",
            Command::WeakValueGeneral => "weakvalue-general",
            Command::WeakValueMc => "weakvalue-mc",
            Command::StonybrookH => "stonybrook-h",
            Command::Fit => "fit",
        }
    }

    /// Stochastic commands require an explicit seed.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Command::WeakValueMc)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    /// Methods for `stonybrook-h`: any of "full-me", "effective-h",
    /// "analytic-fit", "monte-carlo".
    pub methods: Option<Vec<String>>,
    pub model: Option<ModelSection>,
    pub state: Option<StateSection>,
    pub postselect: Option<PostselectSection>,
    pub observable: Option<ObservableSection>,
    pub numerics: Option<NumericsSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "stonybrook" or "explicit".
    pub kind: String,

    // stonybrook fields (defaults: the desk-scale model).
    pub epsilon: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma_perp: Option<f64>,
    pub g: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub eta_h: Option<f64>,
    pub eta_c: Option<f64>,
    /// "jaynes-cummings" (default) or "printed".
    pub coupling: Option<String>,

    // explicit fields.
    pub dims: Option<Vec<usize>>,
    pub h: Option<Matrix>,
    pub collapse: Option<Vec<Matrix>>,
    pub homodyne_channel: Option<usize>,
    pub counting_channel: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// Pure initial state as a ket.
    pub psi: Option<Ket>,
    /// Mixed initial state as a density matrix.
    pub rho: Option<Matrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostselectSection {
    /// Projective postselection onto a ket.
    pub phi: Option<Ket>,
    /// General postselection effect.
    pub effect: Option<Matrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSection {
    /// Hermitian observable for `weakvalue-aav`.
    pub x: Matrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub dt: Option<f64>,
    /// Weak-measurement time (or evolution duration for `evolve`).
    pub t: Option<f64>,
    /// Final-measurement time.
    #[serde(rename = "T")]
    pub big_t: Option<f64>,
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub window: Option<f64>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_step: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    /// "csv" (default), "json", or "both" — how curve payloads are written.
    pub format: Option<String>,
    /// For `weakvalue-mc`: additionally dump this many trajectory records
    /// as CSV (columns t, xw, jump).
    pub dump_trajectories: Option<usize>,
}

/// Parse and structurally validate a config. Unknown keys and malformed
/// values are hard errors with the parser's line/column in the message.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    Command::parse(&cfg.command)?;
    Ok(cfg)
}

fn cx(v: Cx) -> Complex64 {
    Complex64::new(v[0], v[1])
}

pub fn ket_to_array(ket: &Ket) -> Array1<Complex64> {
    Array1::from_iter(ket.iter().map(|&v| cx(v)))
}

pub fn matrix_to_operator(m: &Matrix, space: &HilbertSpace) -> CliResult<Operator> {
    let d = space.total_dim();
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(CliError::Config(format!(
            "matrix must be {d}x{d} for the declared space"
        )));
    }
    let entries = Array2::from_shape_fn((d, d), |(i, j)| cx(m[i][j]));
    Ok(Operator::new(space.clone(), entries)?)
}

/// Everything a command needs, with defaults resolved.
pub struct Plan {
    pub command: Command,
    pub model: Option<LindbladModel>,
    pub stonybrook: Option<StonyBrookParams>,
    pub initial: Option<State>,
    pub effect: Option<Effect>,
    pub phi: Option<Array1<Complex64>>,
    pub psi: Option<Array1<Complex64>>,
    pub observable: Option<Operator>,
    pub dt: f64,
    pub t: Option<f64>,
    pub big_t: Option<f64>,
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub window: Option<f64>,
    pub taus: Vec<f64>,
    pub methods: Vec<String>,
    pub out_dir: String,
    pub format: String,
    pub dump_trajectories: usize,
}

fn build_stony_params(m: &ModelSection) -> CliResult<StonyBrookParams> {
    for (key, present) in [
        ("dims", m.dims.is_some()),
        ("h", m.h.is_some()),
        ("collapse", m.collapse.is_some()),
        ("homodyne_channel", m.homodyne_channel.is_some()),
        ("counting_channel", m.counting_channel.is_some()),
    ] {
        if present {
            return Err(CliError::Config(format!(
                "key {key:?} is not allowed for model.kind = \"stonybrook\""
            )));
        }
    }
    let desk = StonyBrookParams::desk();
    let coupling = match m.coupling.as_deref() {
        None | Some("jaynes-cummings") => CouplingConvention::JaynesCummings,
        Some("printed") => CouplingConvention::Printed,
        Some(other) => {
            return Err(CliError::Config(format!(
                "coupling must be \"jaynes-cummings\" or \"printed\", got {other:?}"
            )))
        }
    };
    let p = StonyBrookParams {
        epsilon: m.epsilon.unwrap_or(desk.epsilon),
        kappa: m.kappa.unwrap_or(desk.kappa),
        gamma_perp: m.gamma_perp.unwrap_or(desk.gamma_perp),
        g: m.g.clone().unwrap_or_else(|| desk.g.clone()),
        n_max: m.n_max.unwrap_or(desk.n_max),
        eta_h: m.eta_h.unwrap_or(desk.eta_h),
        eta_c: m.eta_c.unwrap_or(desk.eta_c),
        coupling,
    };
    p.validate()?;
    Ok(p)
}

fn build_explicit_model(m: &ModelSection) -> CliResult<LindbladModel> {
    for (key, present) in [
        ("epsilon", m.epsilon.is_some()),
        ("kappa", m.kappa.is_some()),
        ("gamma_perp", m.gamma_perp.is_some()),
        ("g", m.g.is_some()),
        ("n_max", m.n_max.is_some()),
        ("eta_h", m.eta_h.is_some()),
        ("eta_c", m.eta_c.is_some()),
        ("coupling", m.coupling.is_some()),
    ] {
        if present {
            return Err(CliError::Config(format!(
                "key {key:?} is not allowed for model.kind = \"explicit\""
            )));
        }
    }
    let dims = m
        .dims
        .clone()
        .ok_or_else(|| CliError::Config("explicit model needs \"dims\"".into()))?;
    let space = HilbertSpace::new(dims)?;
    let h = m
        .h
        .as_ref()
        .ok_or_else(|| CliError::Config("explicit model needs \"h\"".into()))?;
    let h_op = matrix_to_operator(h, &space)?;
    let mut collapse = Vec::new();
    for c in m.collapse.as_deref().unwrap_or(&[]) {
        collapse.push(matrix_to_operator(c, &space)?);
    }
    let mut model = LindbladModel::new(h_op, collapse)?;
    if let Some(i) = m.homodyne_channel {
        model = model.with_homodyne(i)?;
    }
    if let Some(i) = m.counting_channel {
        model = model.with_counting(i)?;
    }
    Ok(model)
}

impl RunConfig {
    /// Resolve sections, apply documented defaults, and build core objects.
    /// `cli_command` is the subcommand given on the command line; it must
    /// match the `command` key in the file.
    pub fn into_plan(self, cli_command: Command, out_override: Option<&str>) -> CliResult<Plan> {
        let command = Command::parse(&self.command)?;
        if command != cli_command {
            return Err(CliError::Config(format!(
                "config has command = {:?} but the CLI invoked {:?}",
                command.name(),
                cli_command.name()
            )));
        }

        let (model, stonybrook) = match &self.model {
            None => (None, None),
            Some(m) => match m.kind.as_str() {
                "stonybrook" => {
                    let p = build_stony_params(m)?;
                    let model = qweak_core::build_stonybrook(&p)?;
                    (Some(model), Some(p))
                }
                "explicit" => (Some(build_explicit_model(m)?), None),
                other => {
                    return Err(CliError::Config(format!(
                        "model.kind must be \"stonybrook\" or \"explicit\", got {other:?}"
                    )))
                }
            },
        };

        let needs_model = !matches!(command, Command::WeakValueAav);
        if needs_model && model.is_none() {
            return Err(CliError::Config(format!(
                "command {:?} requires a [model] section",
                command.name()
            )));
        }
        if matches!(command, Command::StonybrookH | Command::Fit) && stonybrook.is_none() {
            return Err(CliError::Config(format!(
                "command {:?} requires model.kind = \"stonybrook\"",
                command.name()
            )));
        }

        let num = self.numerics.as_ref();
        let dt = match num.and_then(|n| n.dt) {
            Some(dt) if dt > 0.0 => dt,
            Some(dt) => return Err(CliError::Config(format!("dt = {dt} must be > 0"))),
            None => model
                .as_ref()
                .map(|m| Propagation::default_for(m).dt)
                .unwrap_or(1e-3),
        };
        let seed = num.and_then(|n| n.seed);
        let needs_seed = command.is_stochastic()
            || (command == Command::StonybrookH
                && self
                    .methods
                    .as_deref()
                    .unwrap_or(&[])
                    .iter()
                    .any(|m| m == "monte-carlo"));
        if needs_seed && seed.is_none() {
            return Err(CliError::Config(
                "a seed is mandatory for stochastic commands (set numerics.seed)".into(),
            ));
        }

        // Initial state.
        let space = model.as_ref().map(|m| m.space().clone());
        let initial = match (&self.state, &space) {
            (Some(s), Some(space)) => match (&s.psi, &s.rho) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "give either state.psi or state.rho, not both".into(),
                    ))
                }
                (Some(psi), None) => Some(State::pure(space, &ket_to_array(psi))?),
                (None, Some(rho)) => Some(State::new(matrix_to_operator(rho, space)?)?),
                (None, None) => None,
            },
            (Some(_), None) => None,
            _ => None,
        };

        // Postselection.
        let (effect, phi) = match (&self.postselect, &space) {
            (Some(p), Some(space)) => match (&p.phi, &p.effect) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "give either postselect.phi or postselect.effect, not both".into(),
                    ))
                }
                (Some(phi), None) => {
                    let arr = ket_to_array(phi);
                    (Some(Effect::projector(space, &arr)?), Some(arr))
                }
                (None, Some(e)) => (Some(Effect::new(matrix_to_operator(e, space)?)?), None),
                (None, None) => (None, None),
            },
            (Some(p), None) => (None, p.phi.as_ref().map(ket_to_array)),
            _ => (None, None),
        };

        // Pure pre-state for weakvalue-aav (modelless).
        let psi = self.state.as_ref().and_then(|s| s.psi.as_ref()).map(ket_to_array);

        let observable = match &self.observable {
            None => None,
            Some(o) => {
                let d = o.x.len();
                let space = HilbertSpace::single(d)?;
                Some(matrix_to_operator(&o.x, &space)?)
            }
        };

        // Tau grid.
        let (tau_min_default, tau_max_default) = match command {
            Command::Fit => (0.0, 6.0),
            _ => (-5.0, 5.0),
        };
        let tau_min = num.and_then(|n| n.tau_min).unwrap_or(tau_min_default);
        let tau_max = num.and_then(|n| n.tau_max).unwrap_or(tau_max_default);
        let tau_step = num.and_then(|n| n.tau_step).unwrap_or(0.05);
        if !(tau_step > 0.0) || tau_max < tau_min {
            return Err(CliError::Config(format!(
                "bad tau grid: min {tau_min}, max {tau_max}, step {tau_step}"
            )));
        }
        let mut taus = Vec::new();
        let mut k = 0usize;
        loop {
            let tau = tau_min + k as f64 * tau_step;
            if tau > tau_max + 1e-12 {
                break;
            }
            taus.push(tau);
            k += 1;
        }
        if command == Command::Fit && taus.first().is_some_and(|&t| t < 0.0) {
            return Err(CliError::Config("fit needs a non-negative tau grid".into()));
        }

        let methods = match command {
            Command::StonybrookH => {
                let requested = self.methods.clone().unwrap_or_else(|| {
                    vec![
                        "full-me".to_string(),
                        "effective-h".to_string(),
                        "analytic-fit".to_string(),
                    ]
                });
                for m in &requested {
                    if !["full-me", "effective-h", "analytic-fit", "monte-carlo"]
                        .contains(&m.as_str())
                    {
                        return Err(CliError::Config(format!("unknown method {m:?}")));
                    }
                }
                if requested.is_empty() {
                    return Err(CliError::Config("methods must not be empty".into()));
                }
                requested
            }
            _ => {
                if self.methods.is_some() {
                    return Err(CliError::Config(
                        "the \"methods\" key applies only to stonybrook-h".into(),
                    ));
                }
                Vec::new()
            }
        };

        let out = self.output.as_ref();
        let out_dir = out_override
            .map(str::to_string)
            .or_else(|| out.and_then(|o| o.dir.clone()))
            .unwrap_or_else(|| "qweak-out".to_string());
        let format = out
            .and_then(|o| o.format.clone())
            .unwrap_or_else(|| "csv".to_string());
        if !["csv", "json", "both"].contains(&format.as_str()) {
            return Err(CliError::Config(format!(
                "output.format must be csv, json or both, got {format:?}"
            )));
        }

        Ok(Plan {
            command,
            model,
            stonybrook,
            initial,
            effect,
            phi,
            psi,
            observable,
            dt,
            t: num.and_then(|n| n.t),
            big_t: num.and_then(|n| n.big_t),
            seed,
            n_traj: num.and_then(|n| n.n_traj),
            window: num.and_then(|n| n.window),
            taus,
            methods,
            out_dir,
            format,
            dump_trajectories: out.and_then(|o| o.dump_trajectories).unwrap_or(0),
        })
    }
}
