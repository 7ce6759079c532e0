use std::fmt;

use adaptopt::engine::RunRecord;
use adaptopt::monitor::Check;
use adaptopt::protocol::Mode;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// What a finished run amounts to. Built only from the annotated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub preset: Option<String>,
    pub mode: Mode,
    pub agents: usize,
    pub samples: usize,
    pub final_time: f64,
    /// Mean of the final positions.
    pub final_consensus_point: Vec<f64>,
    pub minimizer: Vec<f64>,
    /// Largest distance from any agent's final position to the minimizer.
    pub distance_to_minimizer: f64,
    /// Team objective evaluated at the final consensus point.
    pub final_team_value: f64,
    pub final_diameter: f64,
    pub consensus_threshold: f64,
    pub first_passage_time: Option<f64>,
    pub max_gain: f64,
    pub gain_growth_final_quarter: f64,
    /// Largest final velocity norm; zero in single mode.
    pub max_speed_final: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Summary {
    pub fn from_record(record: &RunRecord, preset: Option<String>) -> Result<Summary, CliError> {
        let not_annotated = || CliError::Runtime("record must be annotated before summarizing".into());
        let diag = record.diagnostics.as_ref().ok_or_else(not_annotated)?;
        let last = record.last_state().ok_or_else(not_annotated)?;
        let mon = record.monitors.last().ok_or_else(not_annotated)?;
        let checks = adaptopt::monitor::certify(record).map_err(|e| CliError::Runtime(e.to_string()))?;
        let distance = last
            .x
            .rows()
            .map(|x| x.iter().zip(&diag.minimizer).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Summary {
            preset,
            mode: record.config.params.mode,
            agents: last.agent_count(),
            samples: record.len(),
            final_time: *record.times.last().expect("non-empty"),
            final_consensus_point: last.x.mean(),
            minimizer: diag.minimizer.clone(),
            distance_to_minimizer: distance,
            final_team_value: mon.team_value_at_mean,
            final_diameter: mon.diameter,
            consensus_threshold: diag.consensus_threshold,
            first_passage_time: diag.first_passage,
            max_gain: diag.max_gain_final,
            gain_growth_final_quarter: diag.gain_growth_final_quarter,
            max_speed_final: mon.max_speed,
            passed: checks.iter().all(|c| c.passed),
            checks,
        })
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Single => "single",
            Mode::Double => "double",
        };
        writeln!(
            f,
            "run: {} ({mode}-integrator, {} agents, {} samples to t = {})",
            self.preset.as_deref().unwrap_or("config"),
            self.agents,
            self.samples,
            self.final_time
        )?;
        writeln!(f, "  final consensus point   {:?}", self.final_consensus_point)?;
        writeln!(f, "  minimizer               {:?}", self.minimizer)?;
        writeln!(f, "  distance to minimizer   {:.3e} (worst agent)", self.distance_to_minimizer)?;
        writeln!(f, "  final team value        {:.9}", self.final_team_value)?;
        writeln!(f, "  final diameter          {:.3e}", self.final_diameter)?;
        match self.first_passage_time {
            Some(t) => writeln!(f, "  first passage           t = {t} (diameter < {:e})", self.consensus_threshold)?,
            None => writeln!(f, "  first passage           never (diameter < {:e})", self.consensus_threshold)?,
        }
        writeln!(
            f,
            "  max gain                {:.6} (growth {:.3}% over final quarter)",
            self.max_gain,
            100.0 * self.gain_growth_final_quarter
        )?;
        if self.mode == Mode::Double {
            writeln!(f, "  max final speed         {:.3e}", self.max_speed_final)?;
        }
        for c in &self.checks {
            writeln!(f, "  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        write!(f, "{}", if self.passed { "all checks passed" } else { "some checks FAILED" })
    }
}
