//! TOML experiment configs.
//!
//! A config is parsed strictly (unknown keys are errors) into a [`RawConfig`]
//! of optional fields, laid over its preset if it names one, and then
//! resolved into an [`ExperimentConfig`]. Resolution reports every semantic
//! problem at once rather than stopping at the first.

use std::path::PathBuf;

use adaptopt::engine::{InitialCondition, Integrator, SimConfig};
use adaptopt::graph::{Segment, Topology, TopologySchedule};
use adaptopt::objective::{ObjectiveSpec, TeamObjective, Term};
use adaptopt::points::Points;
use adaptopt::protocol::{GainArgument, Mode, ProtocolParams, DEFAULT_EPS_NORM};
use adaptopt::Error;
use serde::{Deserialize, Serialize};

use crate::presets;
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub sim: RawSim,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<RawInitial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objectives: Option<RawObjectives>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<RawSchedule>,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSim {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_norm: Option<f64>,
    /// Defaults to `eps_norm / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_sign: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_argument: Option<GainArgument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    /// Diameter below which the team counts as in consensus; defaults to `10 * eps_norm`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_threshold: Option<f64>,
}

/// Either a seeded uniform box or explicit per-agent rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_half_width: Option<f64>,
    /// Box seed; defaults to `sim.seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<Vec<f64>>>,
}

/// One term is `[coefficient, coordinate, shift, power]`.
pub type RawTerm = (f64, usize, f64, u32);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObjectives {
    pub dimension: usize,
    /// One list of terms per agent.
    pub agents: Vec<Vec<RawTerm>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    /// `"random_connected_subgraphs"` (default) or `"explicit"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Base graph as a cycle on this many agents...
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ring: Option<usize>,
    /// ...or as `[i, j]` / `[i, j, weight]` rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_edges: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dwell: Option<f64>,
    /// Subgraph sampler seed; defaults to `sim.seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dwell_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<RawSegment>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSegment {
    pub start: f64,
    pub edges: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plots: Option<bool>,
}

const RANDOM_KIND: &str = "random_connected_subgraphs";
const EXPLICIT_KIND: &str = "explicit";

impl RawConfig {
    /// Strict parse; errors carry the line and the offending key.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    /// `self` over `base`: `sim` and `output` merge key by key, the other
    /// sections are replaced whole when `self` has them.
    pub fn overlay(self, base: RawConfig) -> RawConfig {
        let (s, b) = (self.sim, base.sim);
        RawConfig {
            preset: self.preset.or(base.preset),
            sim: RawSim {
                mode: s.mode.or(b.mode),
                dt: s.dt.or(b.dt),
                t_end: s.t_end.or(b.t_end),
                sample_every: s.sample_every.or(b.sample_every),
                seed: s.seed.or(b.seed),
                p: s.p.or(b.p),
                eps_norm: s.eps_norm.or(b.eps_norm),
                eps_sign: s.eps_sign.or(b.eps_sign),
                gain_argument: s.gain_argument.or(b.gain_argument),
                integrator: s.integrator.or(b.integrator),
                consensus_threshold: s.consensus_threshold.or(b.consensus_threshold),
            },
            initial: self.initial.or(base.initial),
            objectives: self.objectives.or(base.objectives),
            schedule: self.schedule.or(base.schedule),
            output: RawOutput {
                dir: self.output.dir.or(base.output.dir),
                plots: self.output.plots.or(base.output.plots),
            },
        }
    }

    /// Lays the document over its preset, if it names one.
    pub fn with_preset(self) -> Result<Self, CliError> {
        match &self.preset {
            None => Ok(self),
            Some(name) => {
                let base = presets::raw(name)?;
                Ok(self.overlay(base))
            }
        }
    }

    /// Sets one scalar parameter by name, as used by `--sweep` and the
    /// command-line overrides.
    pub fn set_param(&mut self, name: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::Config(vec![format!("{name}: expected {what}, got {value:?}")]);
        let float = || value.parse::<f64>().map_err(|_| bad("a number"));
        let int = || value.parse::<u64>().map_err(|_| bad("a nonnegative integer"));
        match name {
            "dt" => self.sim.dt = Some(float()?),
            "t_end" => self.sim.t_end = Some(float()?),
            "p" => self.sim.p = Some(float()?),
            "eps_norm" => self.sim.eps_norm = Some(float()?),
            "eps_sign" => self.sim.eps_sign = Some(float()?),
            "consensus_threshold" => self.sim.consensus_threshold = Some(float()?),
            "sample_every" => self.sim.sample_every = Some(int()? as usize),
            "seed" => self.sim.seed = Some(int()?),
            "dwell" => self.schedule.get_or_insert_with(Default::default).dwell = Some(float()?),
            _ => {
                return Err(CliError::Config(vec![format!(
                    "unknown parameter {name:?}; expected one of dt, t_end, p, eps_norm, eps_sign, \
                     consensus_threshold, sample_every, seed, dwell"
                )]))
            }
        }
        Ok(())
    }
}

/// A fully resolved experiment: the simulation plus where its artifacts go.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub consensus_threshold: Option<f64>,
    pub out_dir: PathBuf,
    pub plots: bool,
    pub preset: Option<String>,
    /// The document with every default written out; saved next to the results.
    pub resolved: RawConfig,
}

/// Parses, applies the preset and resolves in one go.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    resolve(RawConfig::parse(text)?.with_preset()?)
}

pub fn resolve(raw: RawConfig) -> Result<ExperimentConfig, CliError> {
    let mut errors = Vec::new();
    let s = &raw.sim;
    let mode = s.mode.unwrap_or(Mode::Single);
    let seed = s.seed.unwrap_or(0);
    let eps_norm = s.eps_norm.unwrap_or(DEFAULT_EPS_NORM);
    let params = ProtocolParams {
        mode,
        p: s.p.unwrap_or(1.0),
        eps_norm,
        eps_sign: s.eps_sign.unwrap_or(eps_norm / 2.0),
        gain_argument: s.gain_argument.unwrap_or_default(),
    };
    if s.p.is_some() && mode == Mode::Single {
        errors.push("sim.p only applies in double mode".to_string());
    }
    let dt = s.dt.unwrap_or(1e-3);
    let t_end = s.t_end.unwrap_or(30.0);

    let team = match &raw.objectives {
        None => {
            errors.push("missing [objectives] section".to_string());
            None
        }
        Some(o) => resolve_team(o, &mut errors),
    };
    let n = team.as_ref().map(TeamObjective::len);
    let m = raw.objectives.as_ref().map_or(0, |o| o.dimension);

    let schedule = match &raw.schedule {
        None => {
            errors.push("missing [schedule] section".to_string());
            None
        }
        Some(sch) => resolve_schedule(sch, n, seed, t_end, &mut errors),
    };

    let initial = resolve_initial(raw.initial.as_ref(), n, m, &mut errors);
    if let Some(t) = s.consensus_threshold {
        if !(t > 0.0) {
            errors.push(format!("sim.consensus_threshold must be positive, got {t}"));
        }
    }

    let (Some(team), Some(schedule), Some(initial)) = (team, schedule, initial) else {
        // no SimConfig to validate; still report the scalar problems
        errors.extend(params.problems());
        if !(dt > 0.0) || !dt.is_finite() {
            errors.push(format!("dt must be positive, got {dt}"));
        }
        if !(t_end >= dt) || !t_end.is_finite() {
            errors.push(format!("t_end must be at least dt, got {t_end}"));
        }
        if s.sample_every == Some(0) {
            errors.push("sample_every must be at least 1".into());
        }
        return Err(CliError::Config(errors));
    };
    let mut sim = SimConfig::new(team, schedule, params);
    sim.dt = dt;
    sim.t_end = t_end;
    sim.sample_every = s.sample_every.unwrap_or(10);
    sim.seed = seed;
    sim.initial = initial;
    sim.integrator = s.integrator.unwrap_or_default();
    if let Err(e) = sim.validate() {
        errors.extend(flatten(e));
    }
    // validate() stops at the first failing group; pick up the plain problems too
    for p in sim.problems() {
        if !errors.contains(&p) {
            errors.push(p);
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }

    let preset = raw.preset.clone();
    let out_dir = raw.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let plots = raw.output.plots.unwrap_or(true);
    // every section is written out, so re-applying the preset is a no-op
    let resolved = RawConfig {
        preset: preset.clone(),
        sim: RawSim {
            mode: Some(mode),
            dt: Some(dt),
            t_end: Some(t_end),
            sample_every: Some(sim.sample_every),
            seed: Some(seed),
            p: (mode == Mode::Double).then_some(params.p),
            eps_norm: Some(params.eps_norm),
            eps_sign: Some(params.eps_sign),
            gain_argument: Some(params.gain_argument),
            integrator: Some(sim.integrator),
            consensus_threshold: s.consensus_threshold,
        },
        output: RawOutput { dir: Some(out_dir.clone()), plots: Some(plots) },
        ..raw
    };
    Ok(ExperimentConfig { sim, consensus_threshold: s.consensus_threshold, out_dir, plots, preset, resolved })
}

pub(crate) fn flatten(e: Error) -> Vec<String> {
    match e {
        Error::Config(list) => list,
        Error::Schedule(violations) => violations.iter().map(|v| format!("schedule: {v}")).collect(),
        other => vec![other.to_string()],
    }
}

fn resolve_team(o: &RawObjectives, errors: &mut Vec<String>) -> Option<TeamObjective> {
    if o.agents.is_empty() {
        errors.push("objectives.agents is empty".to_string());
        return None;
    }
    let mut members = Vec::with_capacity(o.agents.len());
    for (i, terms) in o.agents.iter().enumerate() {
        let terms = terms.iter().map(|&(c, k, s, p)| Term::new(c, k, s, p)).collect();
        match ObjectiveSpec::new(o.dimension, terms) {
            Ok(f) => members.push(f),
            Err(e) => errors.push(format!("objectives.agents[{i}]: {e}")),
        }
    }
    if members.len() != o.agents.len() {
        return None;
    }
    TeamObjective::new(members).map_err(|e| errors.push(format!("objectives: {e}"))).ok()
}

fn resolve_edges(rows: &[Vec<f64>], n: usize, at: &str, errors: &mut Vec<String>) -> Option<Topology> {
    let mut edges = Vec::with_capacity(rows.len());
    let index = |v: f64| (v >= 0.0 && v.fract() == 0.0 && v < n as f64).then_some(v as usize);
    for (r, row) in rows.iter().enumerate() {
        let parsed = match row.as_slice() {
            [i, j] => index(*i).zip(index(*j)).map(|(i, j)| (i, j, 1.0)),
            [i, j, w] => index(*i).zip(index(*j)).map(|(i, j)| (i, j, *w)),
            _ => None,
        };
        match parsed {
            Some(e) => edges.push(e),
            None => errors.push(format!("{at}[{r}]: expected [i, j] or [i, j, weight] with agent indices below {n}")),
        }
    }
    if edges.len() != rows.len() {
        return None;
    }
    Topology::from_edges(n, &edges).map_err(|e| errors.push(format!("{at}: {e}"))).ok()
}

fn resolve_schedule(
    s: &RawSchedule,
    n: Option<usize>,
    seed: u64,
    t_end: f64,
    errors: &mut Vec<String>,
) -> Option<TopologySchedule> {
    let kind = s.kind.as_deref().unwrap_or(RANDOM_KIND);
    if kind != RANDOM_KIND && kind != EXPLICIT_KIND {
        errors.push(format!("schedule.kind {kind:?} is not one of {RANDOM_KIND:?}, {EXPLICIT_KIND:?}"));
        return None;
    }
    let base_n = n.or(s.ring)?;
    let stray = |field: &str, present: bool, errors: &mut Vec<String>| {
        if present {
            errors.push(format!("schedule.{field} does not apply to kind {kind:?}"));
        }
    };
    match kind {
        RANDOM_KIND => {
            stray("dwell_min", s.dwell_min.is_some(), errors);
            stray("segments", s.segments.is_some(), errors);
            let base = match (s.ring, &s.base_edges) {
                (Some(r), None) => {
                    if r != base_n {
                        errors.push(format!("schedule.ring = {r} but there are {base_n} agents"));
                        return None;
                    }
                    Some(Topology::ring(r))
                }
                (None, Some(rows)) => resolve_edges(rows, base_n, "schedule.base_edges", errors),
                _ => {
                    errors.push("schedule: give exactly one of ring or base_edges".to_string());
                    None
                }
            }?;
            let Some(dwell) = s.dwell else {
                errors.push("schedule.dwell is required".to_string());
                return None;
            };
            TopologySchedule::random_connected_subgraphs(&base, dwell, s.seed.unwrap_or(seed), t_end)
                .map_err(|e| errors.push(format!("schedule: {e}")))
                .ok()
        }
        EXPLICIT_KIND => {
            for (field, present) in [
                ("ring", s.ring.is_some()),
                ("base_edges", s.base_edges.is_some()),
                ("dwell", s.dwell.is_some()),
                ("seed", s.seed.is_some()),
            ] {
                stray(field, present, errors);
            }
            let Some(segments) = &s.segments else {
                errors.push("schedule.segments is required for kind \"explicit\"".to_string());
                return None;
            };
            let Some(dwell_min) = s.dwell_min else {
                errors.push("schedule.dwell_min is required for kind \"explicit\"".to_string());
                return None;
            };
            let resolved: Vec<_> = segments
                .iter()
                .enumerate()
                .map(|(k, seg)| {
                    resolve_edges(&seg.edges, base_n, &format!("schedule.segments[{k}].edges"), errors)
                        .map(|topology| Segment { start: seg.start, topology })
                })
                .collect();
            let resolved: Option<Vec<_>> = resolved.into_iter().collect();
            resolved.map(|segs| TopologySchedule::new(segs, dwell_min))
        }
        _ => unreachable!("kind checked above"),
    }
}

fn resolve_initial(
    raw: Option<&RawInitial>,
    n: Option<usize>,
    m: usize,
    errors: &mut Vec<String>,
) -> Option<InitialCondition> {
    let default = RawInitial::default();
    let raw = raw.unwrap_or(&default);
    let rows = |name: &str, rows: &Vec<Vec<f64>>, errors: &mut Vec<String>| {
        let expected = n?;
        if rows.len() != expected || rows.iter().any(|r| r.len() != m) {
            errors.push(format!("initial.{name} must be {expected} rows of {m} numbers"));
            return None;
        }
        Points::from_rows(rows).ok()
    };
    match (&raw.positions, raw.box_half_width) {
        (Some(_), Some(_)) => {
            errors.push("initial: give either positions or box_half_width, not both".to_string());
            None
        }
        (Some(x), None) => {
            if raw.seed.is_some() {
                errors.push("initial.seed only applies to a box".to_string());
            }
            let x = rows("positions", x, errors);
            let v = match &raw.velocities {
                None => None,
                Some(v) => Some(rows("velocities", v, errors)?),
            };
            Some(InitialCondition::Explicit { x: x?, v })
        }
        (None, half_width) => {
            if raw.velocities.is_some() {
                errors.push("initial.velocities needs explicit positions".to_string());
            }
            Some(InitialCondition::UniformBox { half_width: half_width.unwrap_or(5.0), seed: raw.seed })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[objectives]
dimension = 1
agents = [[[1.0, 0, 0.0, 2]], [[1.0, 0, 1.0, 2]]]

[schedule]
ring = 2
dwell = 0.5
"#;

    fn errors_of(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(CliError::Config(e)) => e,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.sim.dt, 1e-3);
        assert_eq!(cfg.sim.params.eps_sign, 5e-4);
        assert_eq!(cfg.sim.team.len(), 2);
        assert!(cfg.plots);
        assert_eq!(cfg.resolved.sim.mode, Some(Mode::Single));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = errors_of("[sim]\nvelocty = 3\n");
        assert!(e[0].contains("velocty"), "{e:?}");
        assert!(e[0].contains("line 2"), "{e:?}");
    }

    #[test]
    fn zero_dt_is_a_semantic_error() {
        let e = errors_of(&format!("[sim]\ndt = 0.0\n{MINIMAL}"));
        assert!(e.iter().any(|m| m.contains("dt must be positive")), "{e:?}");
    }

    #[test]
    fn semantic_errors_are_collected() {
        let text = r#"
[sim]
dt = -1.0
consensus_threshold = 0.0
p = 2.0

[objectives]
dimension = 2
agents = [[[1.0, 5, 0.0, 2]]]

[schedule]
kind = "spiral"
"#;
        let e = errors_of(text);
        assert!(e.len() >= 5, "{e:?}");
        assert!(e.iter().any(|m| m.contains("dt must be positive")));
        assert!(e.iter().any(|m| m.contains("spiral")));
        assert!(e.iter().any(|m| m.contains("agents[0]")));
        assert!(e.iter().any(|m| m.contains("sim.p")));
        assert!(e.iter().any(|m| m.contains("consensus_threshold")));
    }

    #[test]
    fn preset_overlay_keeps_preset_sections() {
        let cfg = parse_config("preset = \"paper_single\"\n[sim]\nt_end = 2.0\n").unwrap();
        assert_eq!(cfg.sim.t_end, 2.0);
        assert_eq!(cfg.sim.team, TeamObjective::reference_instance());
        assert_eq!(cfg.sim.dt, 1e-3);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        let e = errors_of("preset = \"nope\"\n");
        assert!(e[0].contains("nope"));
    }

    #[test]
    fn explicit_schedule_and_positions() {
        let text = r#"
[sim]
mode = "double"
p = 2.0
t_end = 1.0

[initial]
positions = [[0.0], [1.0]]
velocities = [[0.5], [0.0]]

[objectives]
dimension = 1
agents = [[[1.0, 0, 0.0, 2]], [[1.0, 0, 1.0, 2]]]

[schedule]
kind = "explicit"
dwell_min = 0.25
segments = [{ start = 0.0, edges = [[0, 1]] }, { start = 0.5, edges = [[0, 1, 2.0]] }]
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.sim.schedule.segments.len(), 2);
        assert_eq!(cfg.sim.schedule.segments[1].topology.weight(0, 1), 2.0);
        assert!(matches!(cfg.sim.initial, InitialCondition::Explicit { v: Some(_), .. }));
    }

    #[test]
    fn bad_edges_and_shapes_are_reported() {
        let text = r#"
[initial]
positions = [[0.0, 1.0]]

[objectives]
dimension = 1
agents = [[[1.0, 0, 0.0, 2]], [[1.0, 0, 1.0, 2]]]

[schedule]
kind = "explicit"
dwell_min = 0.25
segments = [{ start = 0.0, edges = [[0, 7]] }]
"#;
        let e = errors_of(text);
        assert!(e.iter().any(|m| m.contains("initial.positions")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("segments[0].edges[0]")), "{e:?}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        let text = toml::to_string(&cfg.resolved).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(again.sim, cfg.sim);
    }

    #[test]
    fn set_param_validates() {
        let mut raw = RawConfig::parse(MINIMAL).unwrap();
        raw.set_param("dt", "0.002").unwrap();
        raw.set_param("seed", "4").unwrap();
        assert_eq!(raw.sim.dt, Some(0.002));
        assert!(raw.set_param("seed", "-1").is_err());
        assert!(raw.set_param("colour", "1").is_err());
    }
}
