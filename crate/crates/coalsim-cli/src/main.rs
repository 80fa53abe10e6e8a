use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coalsim::experiments::{run_scenario, summarize, to_csv, Scenario, ScenarioConfig};
use coalsim::kingman::marginal_table_csv;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "coalsim", about = "Lattice coalescent experiment runner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meeting probability of two walks started a power-law distance apart
    ErdosTaylor(RunArgs),
    /// Poisson initial field: block counts against the pure-death limit
    Theorem1(RunArgs),
    /// Thinned dense initial field: block counts against the entrance law
    Theorem2(RunArgs),
    /// Bernoulli initial field: block counts against the pure-death limit
    Theorem3(RunArgs),
    /// Spatially restricted counts against the windowed rebirth limit
    Theorem4(RunArgs),
    /// Checkpoint-survival counts against the merging-copies limit
    Theorem5(RunArgs),
    /// Block-count decay across a grid of observation exponents
    MomentBound(RunArgs),
    /// Distribution of counts under a permutation of the starting sites
    Exchangeability(RunArgs),
    /// Death-chain marginals recomputed through the sparse ODE recursion
    SparseRecursion(RunArgs),
    /// Graphical-construction readout against the event-driven engine
    LookdownCheck(RunArgs),
    /// Entrance-law samples against the dominating Poisson rate
    PoissonDomination(RunArgs),
    /// Check a config file without running anything
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Regenerate or verify the golden oracle tables
    Goldens {
        #[arg(long)]
        dir: PathBuf,
        /// Rewrite the tables instead of diffing against them
        #[arg(long)]
        write: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; command-line flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation-region buffer multiplier
    #[arg(long)]
    buffer: Option<f64>,
    /// Thread cap for the replicate pool
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv = one row per recorded statistic; json = aggregate summary
    #[arg(long, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Errors that should exit with status 2 (bad configuration, not a crash).
#[derive(Debug)]
struct BadConfig(String);

impl std::fmt::Display for BadConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl std::error::Error for BadConfig {}

fn load_config(scenario: Scenario, path: Option<&Path>) -> Result<ScenarioConfig> {
    let mut value = match path {
        None => serde_json::json!({}),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| BadConfig(format!("config parse error: {e}")))?
        }
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| BadConfig("config must be a JSON object".into()))?;
    let name = serde_json::json!(scenario.name());
    match obj.get("scenario") {
        None => {
            obj.insert("scenario".into(), name);
        }
        Some(s) if *s == name => {}
        Some(s) => {
            return Err(BadConfig(format!(
                "config scenario {s} does not match subcommand {}",
                scenario.name()
            ))
            .into())
        }
    }
    let cfg: ScenarioConfig = serde_json::from_value(value)
        .map_err(|e| BadConfig(format!("config parse error: {e}")))?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ScenarioConfig, a: &RunArgs) {
    if let Some(v) = a.t {
        cfg.t = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if let Some(v) = a.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = a.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.buffer {
        cfg.region_buffer = v;
    }
    if let Some(v) = a.threads {
        cfg.threads = Some(v);
    }
}

/// Writes via a temp file in the target directory plus rename, so readers
/// never observe a partial file.
fn atomic_write(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp.{}",
            path.file_name().unwrap_or_default().to_string_lossy(),
            std::process::id()
        )),
        None => PathBuf::from(format!(".coalsim.tmp.{}", std::process::id())),
    };
    std::fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn run(scenario: Scenario, args: &RunArgs) -> Result<()> {
    let mut cfg = load_config(scenario, args.config.as_deref())?;
    apply_overrides(&mut cfg, args);
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(BadConfig("threads must be positive".into()).into());
        }
        // ignore failure: the global pool may already exist in-process
        let _ = coalsim::par::configure_threads(n);
    }
    let records = run_scenario(&cfg).map_err(|e| BadConfig(e.to_string()))?;
    let output = match args.format {
        Format::Csv => to_csv(&records),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&summarize(&records))?;
            s.push('\n');
            s
        }
    };
    match &args.out {
        Some(path) => atomic_write(path, &output)?,
        None => print!("{output}"),
    }
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| BadConfig(format!("config parse error: {e}")))?;
    cfg.validate().map_err(|e| BadConfig(e.to_string()))?;
    println!("ok: {}", cfg.scenario.name());
    Ok(())
}

const GOLDEN_TOL: f64 = 1e-9;

fn kingman_golden() -> Result<String> {
    let ss = [0.25, std::f64::consts::LN_2, 1.0, 2.0f64.ln() * 2.0];
    marginal_table_csv(&[2, 3, 5, 10, 20], &ss).map_err(|e| anyhow::anyhow!(e.to_string()))
}

/// Three-state chain for two walks on a 3-site ring: together / apart /
/// merged, started together. Together leaves at rate 2 (either walk jumps)
/// plus γ to merged; apart returns at rate 1.
fn tiny_torus_golden() -> String {
    let mut out = String::from("gamma,t,p_together,p_apart,p_merged\n");
    for &gamma in &[0.5, 1.0, 2.0] {
        let q = vec![
            vec![-(2.0 + gamma), 2.0, gamma],
            vec![1.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ];
        for &t in &[0.5, 1.0, 2.0] {
            let p = coalsim::ctmc::transient_distribution(&q, &[1.0, 0.0, 0.0], t);
            out.push_str(&format!(
                "{gamma},{t},{:.15e},{:.15e},{:.15e}\n",
                p[0], p[1], p[2]
            ));
        }
    }
    out
}

fn csv_close(a: &str, b: &str, tol: f64) -> bool {
    let (mut la, mut lb) = (a.lines(), b.lines());
    loop {
        match (la.next(), lb.next()) {
            (None, None) => return true,
            (Some(x), Some(y)) => {
                let (mut fx, mut fy) = (x.split(','), y.split(','));
                loop {
                    match (fx.next(), fy.next()) {
                        (None, None) => break,
                        (Some(u), Some(v)) => {
                            if u == v {
                                continue;
                            }
                            match (u.parse::<f64>(), v.parse::<f64>()) {
                                (Ok(nu), Ok(nv)) if (nu - nv).abs() <= tol => continue,
                                _ => return false,
                            }
                        }
                        _ => return false,
                    }
                }
            }
            _ => return false,
        }
    }
}

fn goldens(dir: &Path, write: bool) -> Result<()> {
    let tables: Vec<(&str, String)> = vec![
        ("kingman_marginals.csv", kingman_golden()?),
        ("tiny_torus_ctmc.csv", tiny_torus_golden()),
    ];
    if write {
        std::fs::create_dir_all(dir)?;
    }
    for (name, fresh) in &tables {
        let path = dir.join(name);
        if write {
            atomic_write(&path, fresh)?;
            println!("wrote {}", path.display());
        } else {
            let stored = std::fs::read_to_string(&path)
                .with_context(|| format!("reading golden {}", path.display()))?;
            if !csv_close(&stored, fresh, GOLDEN_TOL) {
                bail!("golden mismatch: {}", path.display());
            }
            println!("golden ok: {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ErdosTaylor(a) => run(Scenario::ErdosTaylor, a),
        Command::Theorem1(a) => run(Scenario::Theorem1, a),
        Command::Theorem2(a) => run(Scenario::Theorem2, a),
        Command::Theorem3(a) => run(Scenario::Theorem3, a),
        Command::Theorem4(a) => run(Scenario::Theorem4, a),
        Command::Theorem5(a) => run(Scenario::Theorem5, a),
        Command::MomentBound(a) => run(Scenario::MomentBound, a),
        Command::Exchangeability(a) => run(Scenario::Exchangeability, a),
        Command::SparseRecursion(a) => run(Scenario::SparseRecursion, a),
        Command::LookdownCheck(a) => run(Scenario::LookdownCheck, a),
        Command::PoissonDomination(a) => run(Scenario::PoissonDomination, a),
        Command::Validate { config } => validate(config),
        Command::Goldens { dir, write } => goldens(dir, *write),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<BadConfig>().is_some() {
                eprintln!("invalid configuration: {e}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        }
    }
}
