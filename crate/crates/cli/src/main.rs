use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use nearfar::codebook_io::{sidecar_path, write_learned, CodebookMeta};
use nearfar::experiments::harness::deployable_codebook;
use nearfar::experiments::{csv_comments, preset, run_scenario, train_regression_codebook, PresetName, ScenarioConfig};
use nearfar::Error;

#[derive(Parser)]
#[command(name = "nearfar", version, about = "Near/far-field codebook and precoding simulator")]
struct Cli {
    /// Scenario file (`key = value` lines). Applied on top of `--preset`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its result table as CSV.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the regression codebook and save it with a `.meta` sidecar.
    TrainCodebook {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved scenario configuration.
    Info {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// One of fig2_nmse, fig4a_sweep, fig4b_hybrid, fig5a_near, fig5b_far.
    #[arg(long)]
    preset: Option<String>,
    /// Scale down to the 8×8 desk configuration.
    #[arg(long)]
    desk: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("either --preset or --config is required")]
    NoScenario,
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::ReadConfig { .. } | CliError::NoScenario => 2,
            CliError::Write { .. } => 1,
            CliError::Core(e) if e.is_config_error() => 2,
            CliError::Core(Error::Io(_)) => 1,
            CliError::Core(_) => 3,
        }
    }
}

fn resolve(config: Option<&Path>, args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let name = args.preset.as_deref().map(str::parse::<PresetName>).transpose()?;
    let Some(path) = config else {
        let name = name.ok_or(CliError::NoScenario)?;
        let cfg = preset(name);
        return Ok(if args.desk { cfg.desk() } else { cfg });
    };
    let body = fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.to_owned(), source })?;
    // Flag-derived lines go first so the file's line numbers stay meaningful
    // after subtracting the prefix.
    let mut prefix = String::new();
    if let Some(n) = name {
        prefix.push_str(&format!("preset = {n}\n"));
    }
    if args.desk {
        prefix.push_str("desk = true\n");
    }
    let offset = prefix.lines().count();
    ScenarioConfig::parse(&(prefix + &body)).map_err(|e| match e {
        Error::Config { line, reason } if line > offset => Error::Config { line: line - offset, reason }.into(),
        other => other.into(),
    })
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Write { path: p.to_owned(), source }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Write { path: PathBuf::from("<stdout>"), source }),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Run { scenario, seed, trials, workers, out } => {
            let mut cfg = resolve(config, &scenario)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            info!("running {} ({} trials)", cfg.name, cfg.trials);
            let table = run_scenario(&cfg)?;
            write_output(out.as_deref(), &table.to_csv(&csv_comments(&cfg)))?;
        }
        Command::TrainCodebook { scenario, seed, out } => {
            let mut cfg = resolve(config, &scenario)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let learned = train_regression_codebook(&cfg)?;
            let dict = deployable_codebook(&cfg, &learned)?;
            let meta = CodebookMeta::from_learned(&learned, cfg.projection);
            write_learned(&out, &dict, &meta).map_err(|e| match e {
                Error::Io(source) => CliError::Write { path: out.clone(), source },
                other => other.into(),
            })?;
            info!("wrote {} and {}", out.display(), sidecar_path(&out).display());
        }
        Command::Info { scenario } => {
            let cfg = resolve(config, &scenario)?;
            cfg.validate()?;
            let geom = cfg.geometry()?;
            let mut text = format!(
                "# antennas {}, aperture {:.4} m, rayleigh distance {:.4} m\n# pilots {}, omp max atoms {}, n_rf {}, ksvd atoms {}\n",
                geom.num_elements(),
                geom.aperture(),
                geom.rayleigh_distance(),
                cfg.resolved_pilots(),
                cfg.resolved_omp_max_atoms(),
                cfg.resolved_n_rf(),
                cfg.resolved_ksvd_atoms(),
            );
            text.push_str(&cfg.to_text());
            write_output(None, &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::NoScenario.exit_code(), 2);
        assert_eq!(CliError::Core(Error::UnknownPreset("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(Error::Config { line: 3, reason: "bad".into() }).exit_code(), 2);
        assert_eq!(CliError::Core(Error::SingularChannel { ratio: 0.0 }).exit_code(), 3);
        let nested = Error::Trial { trial: 7, source: Box::new(Error::RankDeficientEffectiveChannel { ratio: 1e-12 }) };
        assert_eq!(CliError::Core(nested).exit_code(), 3);
    }

    #[test]
    fn config_line_numbers_ignore_flag_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.cfg");
        fs::write(&path, "trials = 3\nnope = 1\n").unwrap();
        let args = ScenarioArgs { preset: Some("fig2_nmse".into()), desk: true };
        match resolve(Some(&path), &args) {
            Err(CliError::Core(Error::Config { line, .. })) => assert_eq!(line, 2),
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn config_file_overrides_preset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.cfg");
        fs::write(&path, "trials = 3\n").unwrap();
        let args = ScenarioArgs { preset: Some("fig5a_near".into()), desk: true };
        let cfg = resolve(Some(&path), &args).unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!((cfg.rows, cfg.near_ues, cfg.far_ues), (8, 4, 0));
    }
}
