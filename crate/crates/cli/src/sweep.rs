//! `--sweep name=values`: one run per value, each in its own subdirectory.

use std::path::PathBuf;

use crate::config::{resolve, ExperimentConfig, RawConfig};
use crate::experiment::run_experiment;
use crate::summary::Summary;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<String>,
}

/// Accepts `name=a,b,c`, `name=a..b` (end exclusive) and `name=a..=b`
/// (integers only for ranges).
pub fn parse_sweep(spec: &str) -> Result<Sweep, CliError> {
    let bad = |msg: &str| CliError::Config(vec![format!("--sweep {spec:?}: {msg}")]);
    let (param, values) = spec.split_once('=').ok_or_else(|| bad("expected name=values"))?;
    let param = param.trim();
    if param.is_empty() {
        return Err(bad("missing parameter name"));
    }
    let values: Vec<String> = if let Some((a, b)) = values.split_once("..") {
        let (b, inclusive) = match b.strip_prefix('=') {
            Some(b) => (b, true),
            None => (b, false),
        };
        let a: i64 = a.trim().parse().map_err(|_| bad("range bounds must be integers"))?;
        let b: i64 = b.trim().parse().map_err(|_| bad("range bounds must be integers"))?;
        let end = if inclusive { b + 1 } else { b };
        (a..end).map(|v| v.to_string()).collect()
    } else {
        values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok(Sweep { param: param.to_string(), values })
}

/// Resolves every point of the sweep up front, so one bad value stops the
/// whole sweep before anything runs.
pub fn plan(base: &RawConfig, sweep: &Sweep, root: &std::path::Path) -> Result<Vec<ExperimentConfig>, CliError> {
    let mut errors = Vec::new();
    let mut out = Vec::new();
    for value in &sweep.values {
        let mut raw = base.clone();
        let resolved = raw.set_param(&sweep.param, value).and_then(|_| {
            raw.output.dir = Some(subdir(root, &sweep.param, value));
            resolve(raw)
        });
        match resolved {
            Ok(cfg) => out.push(cfg),
            Err(CliError::Config(list)) => {
                errors.extend(list.into_iter().map(|e| format!("{}={value}: {e}", sweep.param)))
            }
            Err(other) => return Err(other),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Config(errors))
    }
}

pub fn subdir(root: &std::path::Path, param: &str, value: &str) -> PathBuf {
    root.join(format!("{param}={value}"))
}

/// Runs the planned experiments, in parallel when the feature is on.
/// Results are in plan order.
pub fn run_all(plan: &[ExperimentConfig]) -> Vec<Result<Summary, CliError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        plan.par_iter().map(run_experiment).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        plan.iter().map(run_experiment).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_and_ranges() {
        assert_eq!(parse_sweep("seed=1,2, 5").unwrap().values, ["1", "2", "5"]);
        assert_eq!(parse_sweep("seed=3..6").unwrap().values, ["3", "4", "5"]);
        assert_eq!(parse_sweep("seed=3..=4").unwrap().values, ["3", "4"]);
        assert_eq!(parse_sweep("dt=0.001,0.0005").unwrap().param, "dt");
        assert!(parse_sweep("seed").is_err());
        assert!(parse_sweep("seed=0.5..2").is_err());
        assert!(parse_sweep("seed=4..4").is_err());
    }

    #[test]
    fn bad_values_are_reported_together() {
        let base = crate::presets::raw("single_agent_quadratic").unwrap();
        let sweep = parse_sweep("dt=0.001,-1,0").unwrap();
        match plan(&base, &sweep, std::path::Path::new("unused")) {
            Err(CliError::Config(e)) => {
                assert!(e.iter().any(|m| m.starts_with("dt=-1")), "{e:?}");
                assert!(e.iter().any(|m| m.starts_with("dt=0")), "{e:?}");
            }
            other => panic!("{other:?}"),
        }
    }
}
