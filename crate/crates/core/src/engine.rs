//! Fixed-step time integration of the closed loop over a topology schedule.
//!
//! Two integrators are available:
//!
//! - [`Integrator::ExplicitEuler`]: `x' = x + dt·u` (single) or
//!   `x' = x + dt·v, v' = v + dt·u` (double).
//! - [`Integrator::SemiImplicitEuler`] (default): the coupling is frozen into
//!   weights `w_ij = q_ij / max(‖d_ij‖, eps_norm)` at the start of the step
//!   and applied implicitly, i.e. `(I + c·dt·L_w) y' = y + dt·(explicit part)`
//!   with `y = x, c = 1` (single) or `y = v̄, c = 2/p` (double). Gradients and
//!   damping stay explicit. Inside the `eps_norm` ball the coupling is a
//!   linear consensus with gain `q/eps_norm`, far too stiff for explicit Euler
//!   once the gains have grown.
//!
//! Gains always advance by forward Euler from the start-of-step state, and
//! the topology is looked up once per step at the step's start time.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::ExecPolicy;
use crate::graph::{Topology, TopologySchedule, TopologySource};
use crate::monitor::{MonitorSample, RunDiagnostics};
use crate::objective::TeamObjective;
use crate::points::{dist, Points};
use crate::protocol::{self, step_gains, GainMatrix, Mode, ProtocolParams, ProtocolState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    ExplicitEuler,
    #[default]
    SemiImplicitEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Explicit {
        x: Points,
        v: Option<Points>,
    },
    /// Positions uniform in `[-half_width, half_width]^m`, velocities zero.
    /// Falls back to [`SimConfig::seed`] when `seed` is `None`.
    UniformBox {
        half_width: f64,
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record every this many steps (the final state is always recorded).
    pub sample_every: usize,
    pub seed: u64,
    pub initial: InitialCondition,
    pub params: ProtocolParams,
    pub team: TeamObjective,
    pub schedule: TopologySchedule,
    pub integrator: Integrator,
    #[serde(skip)]
    pub exec: ExecPolicy,
}

impl SimConfig {
    /// Defaults: `dt = 1e-3`, `t_end = 30`, `sample_every = 10`, box of half-width 5.
    pub fn new(team: TeamObjective, schedule: TopologySchedule, params: ProtocolParams) -> Self {
        SimConfig {
            dt: 1e-3,
            t_end: 30.0,
            sample_every: 10,
            seed: 0,
            initial: InitialCondition::UniformBox { half_width: 5.0, seed: None },
            params,
            team,
            schedule,
            integrator: Integrator::default(),
            exec: ExecPolicy::default(),
        }
    }

    /// Number of steps to reach `t_end`, rounding up unless `t_end/dt` is an
    /// integer up to floating-point noise.
    pub fn steps(&self) -> usize {
        let r = self.t_end / self.dt;
        let nearest = r.round();
        if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            r.ceil() as usize
        }
    }

    pub fn time_of_step(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Plain config problems (schedule and objective checks are separate).
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.params.problems();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            out.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            out.push(format!("t_end must be at least dt, got {}", self.t_end));
        }
        if self.sample_every == 0 {
            out.push("sample_every must be at least 1".into());
        }
        if self.dt > self.schedule.dwell_min / 10.0 {
            out.push(format!("dt = {} exceeds a tenth of the dwell time {}", self.dt, self.schedule.dwell_min));
        }
        let n = self.team.len();
        if self.schedule.agent_count() != n {
            out.push(format!("schedule has {} agents but there are {n} objectives", self.schedule.agent_count()));
        }
        match &self.initial {
            InitialCondition::UniformBox { half_width, .. } => {
                if !(*half_width >= 0.0) || !half_width.is_finite() {
                    out.push(format!("initial box half-width must be nonnegative, got {half_width}"));
                }
            }
            InitialCondition::Explicit { x, v } => {
                let m = self.team.dimension();
                if x.len() != n || x.dim() != m {
                    out.push(format!("initial positions are {}x{}, expected {n}x{m}", x.len(), x.dim()));
                }
                if let Some(v) = v {
                    if v.len() != n || v.dim() != m {
                        out.push(format!("initial velocities are {}x{}, expected {n}x{m}", v.len(), v.dim()));
                    }
                    if self.params.mode == Mode::Single {
                        out.push("initial velocities given in single-integrator mode".into());
                    }
                }
                if !x.is_finite() || v.as_ref().is_some_and(|v| !v.is_finite()) {
                    out.push("initial state has non-finite entries".into());
                }
            }
        }
        out
    }

    /// Full pre-run validation: schedule, then bounded minimizer sets, then the rest.
    pub fn validate(&self) -> Result<()> {
        let violations = self.schedule.validate();
        if !violations.is_empty() {
            return Err(Error::Schedule(violations));
        }
        self.team.check_bounded_minimizers()?;
        let problems = self.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<ProtocolState> {
        let (n, m) = (self.team.len(), self.team.dimension());
        let mode = self.params.mode;
        match &self.initial {
            InitialCondition::Explicit { x, v } => {
                let mut s = ProtocolState::at_rest(x.clone(), mode);
                if mode == Mode::Double {
                    if let Some(v) = v {
                        s.v = Some(v.clone());
                    }
                }
                Ok(s)
            }
            InitialCondition::UniformBox { half_width, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.seed));
                let flat = (0..n * m)
                    .map(|_| if *half_width > 0.0 { rng.random_range(-half_width..=*half_width) } else { 0.0 })
                    .collect();
                Ok(ProtocolState::at_rest(Points::from_flat(n, m, flat)?, mode))
            }
        }
    }
}

/// Sampled trajectory of one run plus its config echo. `monitors` and
/// `diagnostics` are filled by [`crate::monitor::annotate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: SimConfig,
    pub times: Vec<f64>,
    pub states: Vec<ProtocolState>,
    pub monitors: Vec<MonitorSample>,
    pub diagnostics: Option<RunDiagnostics>,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&ProtocolState> {
        self.states.last()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    /// Config, schedule or objective checks failed; nothing was simulated.
    #[error("run refused: {0}")]
    Refused(Error),
    /// The state stopped being finite; `partial` holds every sample up to
    /// the last finite state.
    #[error("run diverged: {error}")]
    Diverged { partial: Box<RunRecord>, error: Error },
}

/// Advances one step from time `t`, looking the topology up in the config's schedule.
pub fn step(state: &ProtocolState, t: f64, cfg: &SimConfig) -> Result<ProtocolState> {
    let g = cfg.schedule.active_at(t)?;
    step_on(state, g, t, cfg)
}

/// Advances one step from time `t` under topology `g`.
pub fn step_on(state: &ProtocolState, g: &Topology, t: f64, cfg: &SimConfig) -> Result<ProtocolState> {
    let params = &cfg.params;
    let dt = cfg.dt;
    let (n, m) = (state.agent_count(), state.dim());
    let policy = cfg.exec.for_len(n);
    let q = step_gains(state, g, dt, params);

    let (x, v) = match (params.mode, cfg.integrator) {
        (Mode::Single, Integrator::ExplicitEuler) => {
            let u = policy.try_map_range(n, |i| protocol::control_single(i, state, g, &cfg.team, params))?;
            let flat = (0..n).flat_map(|i| state.x.row(i).iter().zip(&u[i]).map(|(a, b)| a + dt * b)).collect();
            (Points::from_flat(n, m, flat)?, None)
        }
        (Mode::Double, Integrator::ExplicitEuler) => {
            let v = state.v.as_ref().ok_or_else(|| Error::Domain("double mode state without velocities".into()))?;
            let vbar = protocol::vbar_points(&state.x, v, params.p);
            let u = policy
                .try_map_range(n, |i| protocol::control_double_with_vbar(i, state, &vbar, g, &cfg.team, params))?;
            let x = euler(&state.x, v, dt);
            let flat = (0..n).flat_map(|i| v.row(i).iter().zip(&u[i]).map(|(a, b)| a + dt * b)).collect();
            (x, Some(Points::from_flat(n, m, flat)?))
        }
        (Mode::Single, Integrator::SemiImplicitEuler) => {
            let grads = gradients(&state.x, &cfg.team, policy);
            let flat = (0..n).flat_map(|i| state.x.row(i).iter().zip(&grads[i]).map(|(a, b)| a - dt * b)).collect();
            let rhs = Points::from_flat(n, m, flat)?;
            let x = implicit_coupling(&state.x, &rhs, &state.q, g, params.eps_norm, dt, policy)?;
            (x, None)
        }
        (Mode::Double, Integrator::SemiImplicitEuler) => {
            let v = state.v.as_ref().ok_or_else(|| Error::Domain("double mode state without velocities".into()))?;
            let p = params.p;
            let vbar = protocol::vbar_points(&state.x, v, p);
            let grads = gradients(&vbar, &cfg.team, policy);
            // v̄ + dt·(-(p/2)(v̄ - x) - (2/p)∇f(v̄)), and (p/2)(v̄ - x) = v
            let flat = (0..n)
                .flat_map(|i| {
                    let (b, vi, gi) = (vbar.row(i), v.row(i), &grads[i]);
                    (0..m).map(move |k| b[k] - dt * vi[k] - dt * (2.0 / p) * gi[k])
                })
                .collect();
            let rhs = Points::from_flat(n, m, flat)?;
            let vbar_next = implicit_coupling(&vbar, &rhs, &state.q, g, params.eps_norm, dt * 2.0 / p, policy)?;
            let x = euler(&state.x, v, dt);
            let flat = (0..n).flat_map(|i| protocol::velocity_from_vbar(x.row(i), vbar_next.row(i), p)).collect();
            (x, Some(Points::from_flat(n, m, flat)?))
        }
    };

    let next = ProtocolState { x, v, q };
    check_finite(&next, t + dt)?;
    Ok(next)
}

fn euler(x: &Points, rate: &Points, dt: f64) -> Points {
    let flat = x.as_flat().iter().zip(rate.as_flat()).map(|(a, b)| a + dt * b).collect();
    Points::from_flat(x.len(), x.dim(), flat).expect("same shape")
}

fn gradients(at: &Points, team: &TeamObjective, policy: ExecPolicy) -> Vec<Vec<f64>> {
    policy.map_range(at.len(), |i| {
        let mut g = vec![0.0; at.dim()];
        team.member(i).add_grad(at.row(i), &mut g);
        g
    })
}

fn check_finite(s: &ProtocolState, t: f64) -> Result<()> {
    for i in 0..s.agent_count() {
        let bad_x = s.x.row(i).iter().any(|v| !v.is_finite());
        let bad_v = s.v.as_ref().is_some_and(|v| v.row(i).iter().any(|c| !c.is_finite()));
        if bad_x || bad_v {
            return Err(Error::NonFinite { t, agent: i });
        }
    }
    Ok(())
}

/// Solves `(I + c·L_w) y' = rhs`, where `L_w` is the Laplacian of the
/// weights `w_ij = q_ij / max(‖y_j - y_i‖, eps_norm)` on the edges of `g`.
/// At `y` the coupling `-L_w y` equals the ramp interaction exactly.
fn implicit_coupling(
    y: &Points,
    rhs: &Points,
    q: &GainMatrix,
    g: &Topology,
    eps_norm: f64,
    c: f64,
    policy: ExecPolicy,
) -> Result<Points> {
    let (n, m) = (y.len(), y.dim());
    let rows: Vec<Vec<(usize, f64)>> = policy.map_range(n, |i| {
        g.neighbors(i)
            .filter_map(|(j, _)| {
                let qij = q.get(i, j);
                (qij > 0.0).then(|| (j, qij / protocol::ramp_denominator(dist(y.row(j), y.row(i)), eps_norm)))
            })
            .collect()
    });
    if rows.iter().all(|r| r.is_empty()) {
        return Ok(rhs.clone());
    }
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            a[(i, j)] -= c * w;
            a[(i, i)] += c * w;
        }
    }
    let b = DMatrix::from_row_slice(n, m, rhs.as_flat());
    let chol = a.cholesky().ok_or_else(|| Error::Domain("implicit coupling matrix is not positive definite".into()))?;
    let sol = chol.solve(&b);
    let flat = (0..n).flat_map(|i| (0..m).map(move |k| (i, k))).map(|(i, k)| sol[(i, k)]).collect();
    Points::from_flat(n, m, flat)
}

pub fn run(cfg: &SimConfig) -> std::result::Result<RunRecord, RunError> {
    run_with_source(cfg, &cfg.schedule)
}

/// [`run`] with the topology lookups routed through `source`.
pub fn run_with_source(cfg: &SimConfig, source: &dyn TopologySource) -> std::result::Result<RunRecord, RunError> {
    cfg.validate().map_err(RunError::Refused)?;
    let mut state = cfg.initial_state().map_err(RunError::Refused)?;
    let steps = cfg.steps();
    let capacity = steps / cfg.sample_every + 2;
    let mut record = RunRecord {
        config: cfg.clone(),
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        monitors: Vec::new(),
        diagnostics: None,
    };
    record.times.push(0.0);
    record.states.push(state.clone());

    for k in 0..steps {
        let t = cfg.time_of_step(k);
        let next = source.topology_at(t).and_then(|g| step_on(&state, g, t, cfg));
        state = match next {
            Ok(s) => s,
            Err(error) => return Err(RunError::Diverged { partial: Box::new(record), error }),
        };
        let done = k + 1;
        if done % cfg.sample_every == 0 || done == steps {
            record.times.push(cfg.time_of_step(done));
            record.states.push(state.clone());
        }
    }
    Ok(record)
}

/// State of the closed loop in `(x, v̄)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub x: Points,
    pub vbar: Points,
    pub q: GainMatrix,
}

impl TransformedState {
    pub fn from_state(s: &ProtocolState, p: f64) -> Result<Self> {
        let v = s.v.as_ref().ok_or_else(|| Error::Domain("transformed state needs velocities".into()))?;
        Ok(TransformedState { x: s.x.clone(), vbar: protocol::vbar_points(&s.x, v, p), q: s.q.clone() })
    }
}

/// One step of the double-integrator loop integrated directly in `(x, v̄)`
/// coordinates, using the same integrator family as [`step_on`].
pub fn step_transformed(s: &TransformedState, g: &Topology, cfg: &SimConfig) -> Result<TransformedState> {
    let params = &cfg.params;
    let (dt, p) = (cfg.dt, params.p);
    let (n, m) = (s.x.len(), s.x.dim());
    let policy = cfg.exec.for_len(n);

    // gain growth reads positions (or v̄) exactly as in the (x, v) form
    let v = Points::from_flat(
        n,
        m,
        (0..n).flat_map(|i| protocol::velocity_from_vbar(s.x.row(i), s.vbar.row(i), p)).collect(),
    )?;
    let proxy = ProtocolState { x: s.x.clone(), v: Some(v), q: s.q.clone() };
    let q = step_gains(&proxy, g, dt, params);

    let (xdot, vbar_dot) = protocol::transformed_rates(&s.x, &s.vbar, &s.q, g, &cfg.team, params);
    let x = euler(&s.x, &xdot, dt);
    let vbar = match cfg.integrator {
        Integrator::ExplicitEuler => euler(&s.vbar, &vbar_dot, dt),
        Integrator::SemiImplicitEuler => {
            let grads = gradients(&s.vbar, &cfg.team, policy);
            let flat = (0..n)
                .flat_map(|i| {
                    let (b, xi, gi) = (s.vbar.row(i), s.x.row(i), &grads[i]);
                    (0..m).map(move |k| b[k] + dt * (-0.5 * p * (b[k] - xi[k]) - 2.0 / p * gi[k]))
                })
                .collect();
            let rhs = Points::from_flat(n, m, flat)?;
            implicit_coupling(&s.vbar, &rhs, &s.q, g, params.eps_norm, dt * 2.0 / p, policy)?
        }
    };
    Ok(TransformedState { x, vbar, q })
}
