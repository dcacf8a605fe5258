use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nullprobe::toynet::TaskKind;
use nullprobe_cli::commands::{save_probe, save_test};
use nullprobe_cli::report::to_json;
use nullprobe_cli::{cmd_gen, cmd_probe, cmd_report, cmd_scm, cmd_test, CliError, Input, RunConfig, ScmInput};

#[derive(Parser)]
#[command(name = "nullprobe", version, about = "Null-model tests for interpretability findings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate toy-model traces into a directory.
    Gen {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated probe metric per layer.
    Probe {
        #[command(flatten)]
        run: RunArgs,
        /// Analyse an existing trace directory instead of the toy model.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Print the report JSON instead of the written paths.
        #[arg(long)]
        json: bool,
    },
    /// Layer sweep with chance and null-model tests.
    Test {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Identifiability check on a canonical or user-supplied SCM.
    Scm {
        #[arg(long, conflicts_with = "file", required_unless_present_any = ["file", "list"])]
        example: Option<String>,
        /// JSON file with `scm`, `task` and optional `epsilon`.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Add the example's withheld query to the query distribution with this weight.
        #[arg(long, requires = "example")]
        enrich: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// List the canonical examples.
        #[arg(long)]
        list: bool,
    },
    /// Render Markdown and CSV summaries for a run directory.
    Report { run_dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    TokenSentiment,
    TokenTag,
    TokenCoords,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Layers as a range `0-4` or a list `0,2,3`.
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    b_null: Option<usize>,
    #[arg(long)]
    b_chance: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Run null replicates on this many threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_layers(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse layers `{s}`"));
    if let Some((a, b)) = s.split_once('-') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.task {
            cfg.task = match t {
                TaskArg::TokenSentiment => TaskKind::sentiment(),
                TaskArg::TokenTag => TaskKind::tag(),
                TaskArg::TokenCoords => TaskKind::coords(),
            };
        }
        if let Some(n) = self.n_samples {
            cfg.n_samples = n;
        }
        if let Some(l) = &self.layers {
            cfg.layers = Some(parse_layers(l)?);
        }
        if let Some(b) = self.b_null {
            cfg.b_null = b;
        }
        if let Some(b) = self.b_chance {
            cfg.b_chance = b;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        Ok(cfg)
    }
}

fn input(traces: Option<PathBuf>) -> Input {
    traces.map(Input::Traces).unwrap_or(Input::Config)
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { run, out } => {
            let cfg = run.resolve()?;
            let manifest = cmd_gen(&cfg, &out)?;
            println!("{}", manifest.display());
        }
        Command::Probe { run, traces, out, json } => {
            let cfg = run.resolve()?;
            let report = cmd_probe(&cfg, &input(traces))?;
            let paths = save_probe(&report, &out)?;
            if json {
                print!("{}", to_json(&report)?);
            } else {
                print_paths(&paths);
            }
        }
        Command::Test { run, traces, out, json } => {
            let cfg = run.resolve()?;
            let report = cmd_test(&cfg, &input(traces))?;
            let paths = save_test(&report, &out)?;
            if json {
                print!("{}", to_json(&report)?);
            } else {
                print_paths(&paths);
            }
        }
        Command::Scm {
            example,
            file,
            enrich,
            epsilon,
            list,
        } => {
            if list {
                for name in nullprobe::scm::CANONICAL_NAMES {
                    println!("{name}");
                }
                return Ok(());
            }
            let input = match (example, file) {
                (Some(name), _) => ScmInput::Example { name, enrich },
                (None, Some(path)) => ScmInput::Json(
                    std::fs::read_to_string(&path).map_err(|e| CliError::Io { path, source: e })?,
                ),
                (None, None) => return Err(CliError::Usage("pass --example or --file".into()).into()),
            };
            let outcome = cmd_scm(&input, epsilon)?;
            print!("{}", to_json(&outcome)?);
        }
        Command::Report { run_dir } => print_paths(&cmd_report(&run_dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map(CliError::exit_code).unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
