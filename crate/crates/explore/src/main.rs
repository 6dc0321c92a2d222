use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use max_explore::config::{AgentKind, EnvSpec, RunConfig};
use max_explore::output::run_to_dir;
use max_explore::sweep::{SweepResult, SweepSpec};
use max_explore::{check, HarnessError};

#[derive(Parser)]
#[command(name = "max-explore", version, about = "Model-based active exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds, counted up from --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Explore the randomized Chain.
    Chain {
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        trap: bool,
        #[arg(long)]
        agent: Option<AgentKind>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Stop a run once every transition has been seen.
        #[arg(long)]
        stop_when_explored: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Explore Continuous Mountain Car without external reward.
    Mcar {
        #[arg(long)]
        agent: Option<AgentKind>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a sweep described by a configuration file with a [sweep] table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the divergence, gradient and planner oracle checks.
    Check,
}

fn load(path: &Option<PathBuf>, kind: &str) -> Result<RunConfig, HarnessError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let cfg = RunConfig::from_toml_str(&text)?;
            let matches = match cfg.env {
                EnvSpec::Chain(_) => kind == "chain",
                EnvSpec::MountainCar(_) => kind == "mountain-car",
            };
            if !matches {
                return Err(HarnessError::Config(format!("{} does not describe a {kind} run", p.display())));
            }
            Ok(cfg)
        }
        None => RunConfig::preset(kind),
    }
}

fn seeded(base: &RunConfig, common: &Common) -> Vec<RunConfig> {
    let first = common.seed.unwrap_or(base.seed);
    (0..common.seeds.max(1))
        .map(|k| RunConfig {
            seed: first + k,
            ..base.clone()
        })
        .collect()
}

fn report(result: &SweepResult) -> bool {
    for (cfg, outcome) in result.configs.iter().zip(&result.outcomes) {
        match outcome {
            Ok(r) => println!(
                "seed {:>4}  agent {:<6}  episodes {:>4}  steps {:>6}  explored {:.3}  full-at {}{}",
                cfg.seed,
                r.summary.agent,
                r.summary.episodes,
                r.summary.total_steps,
                r.summary.final_fraction,
                r.summary.episodes_to_full.map_or("-".to_string(), |e| e.to_string()),
                r.summary.max_position.map_or(String::new(), |p| format!("  max-position {p:.3}")),
            ),
            Err(e) => eprintln!("{}", e.to_json()),
        }
    }
    for a in &result.aggregates {
        if let Some(last) = a.rows.last() {
            println!(
                "{}: {} runs, final median {:.3} (p25 {:.3}, p75 {:.3}){}",
                a.group,
                last.runs,
                last.median,
                last.p25,
                last.p75,
                if a.failed > 0 { format!(", {} failed", a.failed) } else { String::new() }
            );
        }
    }
    result.outcomes.iter().all(Result::is_ok)
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    let (base, cfgs, parallelism, out) = match cli.command {
        Command::Check => {
            let results = check::run_all();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            return Ok(results.iter().all(|r| r.passed));
        }
        Command::Chain {
            length,
            trap,
            agent,
            episodes,
            stop_when_explored,
            common,
        } => {
            let mut base = load(&common.config, "chain")?;
            if let EnvSpec::Chain(c) = &mut base.env {
                if let Some(l) = length {
                    c.length = l;
                }
                c.trap |= trap;
            }
            if let Some(a) = agent {
                base.agent = a;
            }
            if let Some(e) = episodes {
                base.episodes = e;
            }
            base.stop_when_explored |= stop_when_explored;
            base.validate()?;
            let cfgs = seeded(&base, &common);
            (base, cfgs, common.parallelism, common.out)
        }
        Command::Mcar {
            agent,
            steps,
            noise_std,
            lambda,
            common,
        } => {
            let mut base = load(&common.config, "mountain-car")?;
            if let Some(a) = agent {
                base.agent = a;
            }
            if let Some(s) = steps {
                base.steps = s;
            }
            if let (Some(n), EnvSpec::MountainCar(m)) = (noise_std, &mut base.env) {
                m.noise_std = n;
            }
            if let Some(l) = lambda {
                base.lambda = l;
            }
            base.validate()?;
            let cfgs = seeded(&base, &common);
            (base, cfgs, common.parallelism, common.out)
        }
        Command::Sweep {
            config,
            parallelism,
            out,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut table: toml::Table = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
            let sweep = table
                .remove("sweep")
                .ok_or_else(|| HarnessError::Config("sweep file needs a [sweep] table".into()))?;
            let spec: SweepSpec = sweep.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
            let kind = table
                .get("env")
                .and_then(|e| e.get("kind"))
                .and_then(|k| k.as_str())
                .unwrap_or("chain")
                .to_string();
            let base = RunConfig::preset(&kind)?.overlay(table)?;
            let cfgs = spec.expand(&base)?;
            for c in &cfgs {
                c.validate()?;
            }
            (base, cfgs, parallelism.unwrap_or(spec.parallelism), out)
        }
    };
    let result = run_to_dir(&base, &cfgs, parallelism, &out)?;
    Ok(report(&result))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(if matches!(e, HarnessError::Config(_)) { 2 } else { 1 })
        }
    }
}
