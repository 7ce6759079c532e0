use std::path::PathBuf;
use std::process::ExitCode;

use adaptopt_cli::config::{resolve, RawConfig};
use adaptopt_cli::sweep::{self, parse_sweep};
use adaptopt_cli::{presets, run_experiment, CliError, EXIT_PASS};
use clap::{Args, Parser, Subcommand};

/// Distributed adaptive gradient optimization over switching networks.
#[derive(Parser)]
#[command(name = "adaptopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config or a built-in preset.
    Run(RunArgs),
    /// List the built-in presets, or print one.
    Presets {
        /// Print this preset's TOML.
        name: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Skip the SVG plots.
    #[arg(long)]
    no_plots: bool,
    /// `param=a,b,c` or `param=a..b`; one run per value in `<out>/<param>=<value>/`.
    #[arg(long)]
    sweep: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => match run(args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Presets { name: None } => {
            presets::names().for_each(|n| println!("{n}"));
            EXIT_PASS
        }
        Command::Presets { name: Some(name) } => match presets::text(&name) {
            Ok(text) => {
                print!("{text}");
                EXIT_PASS
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}

fn load(args: &RunArgs) -> Result<RawConfig, CliError> {
    let mut raw = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
            RawConfig::parse(&text)
                .map_err(|e| match e {
                    CliError::Config(list) => {
                        CliError::Config(list.into_iter().map(|m| format!("{}: {m}", path.display())).collect())
                    }
                    other => other,
                })?
                .with_preset()?
        }
        (None, Some(name)) => presets::raw(name)?,
        (None, None) => unreachable!("clap requires a config or a preset"),
    };
    if let Some(seed) = args.seed {
        raw.set_param("seed", &seed.to_string())?;
    }
    if let Some(dt) = args.dt {
        raw.set_param("dt", &dt.to_string())?;
    }
    if let Some(t_end) = args.t_end {
        raw.set_param("t_end", &t_end.to_string())?;
    }
    if let Some(out) = &args.out {
        raw.output.dir = Some(out.clone());
    }
    if args.no_plots {
        raw.output.plots = Some(false);
    }
    Ok(raw)
}

fn run(args: RunArgs) -> Result<i32, CliError> {
    let raw = load(&args)?;
    let Some(spec) = &args.sweep else {
        let cfg = resolve(raw)?;
        let summary = run_experiment(&cfg)?;
        println!("{summary}");
        println!("artifacts in {}", cfg.out_dir.display());
        return Ok(summary.exit_code());
    };

    let sweep = parse_sweep(spec)?;
    let root = raw.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let plan = sweep::plan(&raw, &sweep, &root)?;
    let results = sweep::run_all(&plan);
    let mut code = EXIT_PASS;
    for (value, result) in sweep.values.iter().zip(&results) {
        let (status, this) = match result {
            Ok(s) => (
                format!(
                    "{} distance {:.3e}, diameter {:.3e}, max gain {:.4}",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.distance_to_minimizer,
                    s.final_diameter,
                    s.max_gain
                ),
                s.exit_code(),
            ),
            Err(e) => (format!("ERROR {e}"), e.exit_code()),
        };
        println!("{}={value}: {status}", sweep.param);
        code = code.max(this);
    }
    println!("artifacts in {}/<{}>=<value>/", root.display(), sweep.param);
    Ok(code)
}
