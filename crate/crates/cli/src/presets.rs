//! Built-in experiments, shipped as TOML next to the crate.

use crate::config::RawConfig;
use crate::CliError;

pub const PRESETS: [(&str, &str); 3] = [
    ("paper_single", include_str!("../presets/paper_single.toml")),
    ("paper_double", include_str!("../presets/paper_double.toml")),
    ("single_agent_quadratic", include_str!("../presets/single_agent_quadratic.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn text(name: &str) -> Result<&'static str, CliError> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        CliError::Config(vec![format!(
            "unknown preset {name:?}; available: {}",
            names().collect::<Vec<_>>().join(", ")
        )])
    })
}

/// The preset document, with `preset` set to its own name.
pub fn raw(name: &str) -> Result<RawConfig, CliError> {
    let mut raw = RawConfig::parse(text(name)?)?;
    raw.preset = Some(name.to_string());
    Ok(raw)
}
