//! Runtime diagnostics built from the convergence certificates of the
//! protocols: Lyapunov candidates `V` and `V₁`, interaction dissipation,
//! consensus diameter, gain boundedness and velocity decay.

use serde::{Deserialize, Serialize};

use crate::engine::RunRecord;
use crate::graph::Topology;
use crate::objective::TeamObjective;
use crate::points::{dist, dot, norm, sub, Points};
use crate::protocol::{self, Mode, ProtocolParams, ProtocolState};
use crate::{Error, Result};

/// Rounding slack for the dissipation sign check.
pub const DISSIPATION_SLACK: f64 = 1e-12;
/// Allowed relative growth of the max gain over the last quarter of a run.
pub const PLATEAU_FRACTION: f64 = 0.01;
/// `V₁` level below which the mean counts as optimal.
pub const V1_THRESHOLD: f64 = 1e-3;
pub const FINAL_SPEED_LIMIT: f64 = 1e-2;
pub const FINAL_GRAD_SUM_LIMIT: f64 = 0.1;
/// Tolerance passed to the team-minimizer search.
pub const MINIMIZER_TOL: f64 = 1e-10;

/// Monitor values for one recorded sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub v: f64,
    pub v1: f64,
    pub diameter: f64,
    /// `Σ f_i(x_i)` at the agents' own positions.
    pub team_value: f64,
    /// `Σ f_i(x̄)` at the mean position.
    pub team_value_at_mean: f64,
    /// `‖Σ ∇f_i(x̄)‖` at the mean position.
    pub grad_sum_norm: f64,
    pub max_gain: f64,
    /// `max ‖v_i‖`; zero in single mode.
    pub max_speed: f64,
    pub interaction_dissipation: f64,
}

impl MonitorSample {
    /// Column names of the value fields, in CSV order (time excluded).
    pub const FIELDS: [&'static str; 9] = [
        "V",
        "V1",
        "diameter",
        "team_value",
        "team_value_at_mean",
        "grad_sum_norm",
        "max_gain",
        "max_speed",
        "interaction_dissipation",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.v,
            self.v1,
            self.diameter,
            self.team_value,
            self.team_value_at_mean,
            self.grad_sum_norm,
            self.max_gain,
            self.max_speed,
            self.interaction_dissipation,
        ]
    }

    pub fn from_values(t: f64, v: [f64; 9]) -> Self {
        MonitorSample {
            t,
            v: v[0],
            v1: v[1],
            diameter: v[2],
            team_value: v[3],
            team_value_at_mean: v[4],
            grad_sum_norm: v[5],
            max_gain: v[6],
            max_speed: v[7],
            interaction_dissipation: v[8],
        }
    }
}

/// Run-level quantities standing in for the existential constants of the
/// convergence proofs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub minimizer: Vec<f64>,
    pub consensus_threshold: f64,
    /// First sample time with diameter below `consensus_threshold`, staying below afterwards.
    pub first_passage: Option<f64>,
    pub max_gain_final: f64,
    /// `(max_gain(t_end) - max_gain(0.75·t_end)) / max_gain(t_end)`.
    pub gain_growth_final_quarter: f64,
    /// Observed max over samples of `Σ_i ‖u_i‖`.
    pub max_control_sum: f64,
    /// Observed max over samples of `max_i ‖x_i‖`.
    pub max_position_norm: f64,
    pub initial_radius: f64,
}

/// `½ Σ ‖x_i - z‖²`, plus `½ Σ ‖v̄_i - z‖²` in double mode.
pub fn lyapunov_v(s: &ProtocolState, z: &[f64], params: &ProtocolParams) -> f64 {
    let half_sq = |p: &[f64]| {
        let d = dist(p, z);
        0.5 * d * d
    };
    let mut v: f64 = s.x.rows().map(half_sq).sum();
    if let (Mode::Double, Some(vel)) = (params.mode, &s.v) {
        v += protocol::vbar_points(&s.x, vel, params.p).rows().map(half_sq).sum::<f64>();
    }
    v
}

/// `½ ‖x̄ - P_X(x̄)‖²` with `P_X` the computed team minimizer.
pub fn lyapunov_v1(s: &ProtocolState, team: &TeamObjective) -> Result<f64> {
    Ok(lyapunov_v1_at(s, &team.minimizer_team(MINIMIZER_TOL)?))
}

pub fn lyapunov_v1_at(s: &ProtocolState, minimizer: &[f64]) -> f64 {
    let d = dist(&s.x.mean(), minimizer);
    0.5 * d * d
}

/// Largest pairwise distance between positions.
pub fn consensus_diameter(s: &ProtocolState) -> f64 {
    points_diameter(&s.x)
}

pub(crate) fn points_diameter(x: &Points) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d = d.max(dist(x.row(i), x.row(j)));
        }
    }
    d
}

/// `Σ_i (y_i - z)ᵀ Σ_{j∈N_i} q_ij norm_dir(y_j - y_i)` with `y = x` (single)
/// or `y = v̄` (double). Non-positive for every `z` on an undirected graph.
pub fn interaction_dissipation(s: &ProtocolState, g: &Topology, z: &[f64], params: &ProtocolParams) -> f64 {
    let y = s.coupled(params);
    (0..y.len())
        .map(|i| {
            let drive = protocol::interaction_term(i, &y, &s.q, g, params.eps_norm);
            dot(&sub(y.row(i), z), &drive)
        })
        .sum()
}

/// Same quantity as [`interaction_dissipation`] in the telescoped pairwise
/// form `-Σ_{i<j} q_ij ‖d_ij‖² / max(‖d_ij‖, eps_norm)`.
pub fn interaction_dissipation_pairwise(s: &ProtocolState, g: &Topology, params: &ProtocolParams) -> f64 {
    let y = s.coupled(params);
    g.edges()
        .iter()
        .map(|&(i, j, _)| {
            let d = dist(y.row(i), y.row(j));
            -s.q.get(i, j) * d * d / d.max(params.eps_norm)
        })
        .sum()
}

/// Monitor values for one state. `minimizer` is the team minimizer used as `z`.
pub fn sample(
    s: &ProtocolState,
    t: f64,
    g: &Topology,
    team: &TeamObjective,
    minimizer: &[f64],
    params: &ProtocolParams,
) -> Result<MonitorSample> {
    let mean = s.x.mean();
    let team_value = s.x.rows().enumerate().map(|(i, x)| team.member(i).eval(x)).sum::<Result<f64>>()?;
    Ok(MonitorSample {
        t,
        v: lyapunov_v(s, minimizer, params),
        v1: lyapunov_v1_at(s, minimizer),
        diameter: consensus_diameter(s),
        team_value,
        team_value_at_mean: team.team_eval(&mean)?,
        grad_sum_norm: norm(&team.team_grad(&mean)?),
        max_gain: s.q.max(),
        max_speed: s.v.as_ref().map_or(0.0, |v| v.rows().map(norm).fold(0.0, f64::max)),
        interaction_dissipation: interaction_dissipation(s, g, minimizer, params),
    })
}

/// Fills `record.monitors` and `record.diagnostics`. `threshold` defaults
/// to `10 · eps_norm`.
pub fn annotate(record: &mut RunRecord, threshold: Option<f64>) -> Result<()> {
    if record.is_empty() {
        return Err(Error::Domain("cannot annotate an empty record".into()));
    }
    let cfg = &record.config;
    let params = cfg.params;
    let minimizer = cfg.team.minimizer_team(MINIMIZER_TOL)?;
    let policy = cfg.exec.for_len(record.len());

    let per_sample = policy.try_map_range(record.len(), |k| {
        let (t, s) = (record.times[k], &record.states[k]);
        let g = cfg.schedule.active_at(t)?;
        let m = sample(s, t, g, &cfg.team, &minimizer, &params)?;
        let control_sum = (0..s.agent_count())
            .map(|i| protocol::control(i, s, g, &cfg.team, &params).map(|u| norm(&u)))
            .sum::<Result<f64>>()?;
        let max_pos = s.x.rows().map(norm).fold(0.0, f64::max);
        Ok::<_, Error>((m, control_sum, max_pos))
    })?;

    let monitors: Vec<MonitorSample> = per_sample.iter().map(|p| p.0).collect();
    let threshold = threshold.unwrap_or(10.0 * params.eps_norm);
    let first_passage = monitors
        .iter()
        .rposition(|m| m.diameter >= threshold)
        .map_or(Some(0), |k| (k + 1 < monitors.len()).then_some(k + 1))
        .map(|k| monitors[k].t);
    let gains: Vec<f64> = monitors.iter().map(|m| m.max_gain).collect();
    let final_gain = *gains.last().unwrap();
    let quarter = gains[(3 * (gains.len() - 1)) / 4];
    let growth = if final_gain > 0.0 { (final_gain - quarter) / final_gain } else { 0.0 };

    record.diagnostics = Some(RunDiagnostics {
        minimizer,
        consensus_threshold: threshold,
        first_passage,
        max_gain_final: final_gain,
        gain_growth_final_quarter: growth,
        max_control_sum: per_sample.iter().map(|p| p.1).fold(0.0, f64::max),
        max_position_norm: per_sample.iter().map(|p| p.2).fold(0.0, f64::max),
        initial_radius: record.states[0].x.rows().map(norm).fold(0.0, f64::max),
    });
    record.monitors = monitors;
    Ok(())
}

/// One certificate check on an annotated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

/// Evaluates every certificate on an annotated record.
pub fn certify(record: &RunRecord) -> Result<Vec<Check>> {
    let diag = record
        .diagnostics
        .as_ref()
        .ok_or_else(|| Error::Domain("record must be annotated before certification".into()))?;
    let mon = &record.monitors;
    let last = mon.last().expect("annotated records are non-empty");
    let cfg = &record.config;
    let mut checks = Vec::new();

    let worst = mon.iter().map(|m| m.interaction_dissipation).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new(
        "interaction_dissipation",
        worst <= DISSIPATION_SLACK,
        format!("max over samples {worst:e} (limit {DISSIPATION_SLACK:e})"),
    ));

    let bad_gain = record
        .states
        .iter()
        .enumerate()
        .find(|(k, s)| !s.q.is_well_formed() || (*k > 0 && !s.q.dominates(&record.states[k - 1].q)));
    checks.push(Check::new(
        "gains_symmetric_nondecreasing",
        bad_gain.is_none(),
        bad_gain.map_or("all samples".into(), |(k, _)| format!("breach at t = {}", record.times[k])),
    ));

    checks.push(Check::new(
        "gain_plateau",
        diag.gain_growth_final_quarter < PLATEAU_FRACTION,
        format!(
            "max gain {:.6} grew {:.4}% over the final quarter (limit {}%)",
            diag.max_gain_final,
            100.0 * diag.gain_growth_final_quarter,
            100.0 * PLATEAU_FRACTION
        ),
    ));

    checks.push(Check::new(
        "consensus",
        last.diameter < diag.consensus_threshold,
        format!("final diameter {:e} (threshold {:e})", last.diameter, diag.consensus_threshold),
    ));

    checks.push(Check::new(
        "mean_optimal",
        last.v1 < V1_THRESHOLD,
        format!("final V1 {:e} (limit {V1_THRESHOLD:e})", last.v1),
    ));

    checks.push(Check::new(
        "team_gradient",
        last.grad_sum_norm < FINAL_GRAD_SUM_LIMIT,
        format!("final |sum grad f_i(mean)| {:e} (limit {FINAL_GRAD_SUM_LIMIT})", last.grad_sum_norm),
    ));

    // V may rise while agents sit between their own minimizers and X; only
    // increases beyond the quadrature slack count, and only while V1 is large.
    let slack = 10.0 * cfg.dt * diag.max_control_sum;
    let rise = mon.windows(2).filter(|w| w[0].v1 >= V1_THRESHOLD).map(|w| w[1].v - w[0].v).fold(0.0, f64::max);
    checks.push(Check::new(
        "lyapunov_v_nonincreasing",
        rise <= slack,
        format!("largest rise {rise:e} (slack {slack:e})"),
    ));

    let bound = 10.0 * diag.initial_radius + norm(&diag.minimizer);
    checks.push(Check::new(
        "state_bounded",
        diag.max_position_norm <= bound,
        format!("max |x_i| {:.6} (bound {bound:.6})", diag.max_position_norm),
    ));

    if cfg.params.mode == Mode::Double {
        checks.push(Check::new(
            "velocity_decay",
            last.max_speed < FINAL_SPEED_LIMIT,
            format!("final max |v_i| {:e} (limit {FINAL_SPEED_LIMIT:e})", last.max_speed),
        ));
    }
    Ok(checks)
}
