use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use shopbench::bench::{
    load_file, render_report, run_experiment, run_single, verify_trace, write_report, BenchError, EnvSetup,
    EpisodeConfig, ExperimentConfig, InstanceSource, ReportFormat, RunReport,
};
use shopbench::instance::{generate_instance, to_orlib, validate_instance, Instance, Shape};
use shopbench::mdp::{make_env, serve, ActionSpec, BreakdownKind, Shaping};
use shopbench::notation::{parse_triplet, validate_text, ProblemTriplet};

/// Bad arguments or unreadable inputs; exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "shopbench", version, about = "Scheduling environments, baselines and experiment reports")]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and check α|β|γ triplets.
    #[command(subcommand)]
    Notation(NotationCmd),
    /// Generate, check and convert instances.
    #[command(subcommand)]
    Instance(InstanceCmd),
    /// Run one episode with one agent.
    Run(RunArgs),
    /// Serve an environment over NDJSON on stdin/stdout.
    Serve(ServeArgs),
    /// Run a multi-seed experiment and write reports.
    Bench(BenchArgs),
    /// Check a trace file against its config by replaying the action log.
    Replay(ReplayArgs),
    /// Render a saved JSON report.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum NotationCmd {
    Parse { text: String },
    Validate { text: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum InstanceFormat {
    Json,
    Orlib,
}

#[derive(Subcommand)]
enum InstanceCmd {
    Gen {
        #[arg(long)]
        triplet: String,
        #[arg(long)]
        jobs: usize,
        #[arg(long, default_value_t = 1)]
        work_centers: usize,
        #[arg(long, default_value_t = 1)]
        machines_per_wc: usize,
        #[arg(long, default_value_t = 1)]
        min_duration: u32,
        #[arg(long, default_value_t = 9)]
        max_duration: u32,
        #[arg(long, default_value_t = 1.5)]
        due_tightness: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Validate {
        file: PathBuf,
    },
    Convert {
        file: PathBuf,
        #[arg(long, value_enum)]
        to: InstanceFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ActionArg {
    Direct,
    Rules,
    Params,
}

/// Environment flags; each overrides the matching config field.
#[derive(clap::Args)]
struct EnvArgs {
    /// Config file (.toml or .json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file (native JSON or OR-Library).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Breakdown name, e.g. operation_sequencing.
    #[arg(long)]
    breakdown: Option<String>,
    #[arg(long, value_enum)]
    action: Option<ActionArg>,
    /// terminal_objective, dense_delta or queue_length_proxy.
    #[arg(long)]
    shaping: Option<String>,
    /// γ field, e.g. sum_T_j.
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Agent selector such as rule:SPT, random, static:EDD or ql.
    #[arg(long)]
    agent: Option<String>,
    /// Saved q-table for ql/sarsa agents.
    #[arg(long)]
    qtable: Option<PathBuf>,
    /// Directory for trace.jsonl and run.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[command(flatten)]
    env: EnvArgs,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    config: PathBuf,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// A report.json written by `bench`.
    #[arg(long)]
    input: PathBuf,
    /// csv, json or md.
    #[arg(long, default_value = "md")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Write to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) {
    let mut out = io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != io::ErrorKind::BrokenPipe {
            eprintln!("error: writing output: {e}");
            std::process::exit(1);
        }
        std::process::exit(0);
    }
}

macro_rules! say {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

fn print_json(v: &impl Serialize) -> Result<()> {
    say!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            emit(text);
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn notation(cmd: NotationCmd, json: bool) -> Result<u8> {
    match cmd {
        NotationCmd::Parse { text } => match parse_triplet(&text) {
            Ok(t) => {
                if json {
                    print_json(&serde_json::json!({
                        "canonical": t.to_string(),
                        "alpha": t.alpha.kind.token(),
                        "count": t.alpha.count,
                        "beta": t.beta.iter().map(|b| b.token()).collect::<Vec<_>>(),
                        "gamma": t.gamma.to_string(),
                    }))?;
                } else {
                    say!("{t}");
                }
                Ok(0)
            }
            Err(e) => {
                report_violations(json, &[format!("[syntax] {e}")])?;
                Ok(1)
            }
        },
        NotationCmd::Validate { text } => {
            let violations = match validate_text(&text) {
                Ok(v) => v,
                Err(e) => {
                    report_violations(json, &[format!("[syntax] {e}")])?;
                    return Ok(1);
                }
            };
            if json {
                print_json(&violations)?;
            } else if violations.is_empty() {
                say!("ok");
            } else {
                for v in &violations {
                    say!("{v}");
                }
            }
            Ok(u8::from(!violations.is_empty()))
        }
    }
}

fn report_violations(json: bool, lines: &[String]) -> Result<()> {
    if json {
        print_json(&lines)
    } else {
        for l in lines {
            say!("{l}");
        }
        Ok(())
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::load(&read_text(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn instance(cmd: InstanceCmd, json: bool) -> Result<u8> {
    match cmd {
        InstanceCmd::Gen {
            triplet,
            jobs,
            work_centers,
            machines_per_wc,
            min_duration,
            max_duration,
            due_tightness,
            seed,
            out,
        } => {
            let t: ProblemTriplet = triplet.parse().map_err(|e| usage(format!("{e}")))?;
            let mut shape = Shape::new(jobs, work_centers, machines_per_wc, min_duration, max_duration);
            shape.due_tightness = due_tightness;
            let inst = generate_instance(&t, &shape, seed).map_err(|e| usage(e.to_string()))?;
            write_or_print(out.as_deref(), &(inst.to_json() + "\n"))?;
            Ok(0)
        }
        InstanceCmd::Validate { file } => {
            let inst = load_instance(&file)?;
            let violations = validate_instance(&inst);
            if json {
                print_json(&violations)?;
            } else if violations.is_empty() {
                say!("ok: {} jobs, {} machines, {}", inst.n_jobs(), inst.n_machines(), inst.triplet);
            } else {
                for v in &violations {
                    say!("{v}");
                }
            }
            Ok(u8::from(!violations.is_empty()))
        }
        InstanceCmd::Convert { file, to, out } => {
            let inst = load_instance(&file)?;
            let text = match to {
                InstanceFormat::Json => inst.to_json() + "\n",
                InstanceFormat::Orlib => to_orlib(&inst)
                    .ok_or_else(|| anyhow!("the OR-Library format cannot express this instance"))?,
            };
            write_or_print(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn parse_named<T: serde::de::DeserializeOwned>(what: &str, value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|_| usage(format!("unknown {what} {value}")))
}

/// Apply flag overrides to `setup`, or build it from flags alone.
fn env_setup(args: &EnvArgs, base: Option<EnvSetup>) -> Result<EnvSetup> {
    let mut setup = match (base, &args.instance) {
        (Some(mut s), Some(path)) => {
            s.instance = InstanceSource::File { path: path.clone() };
            s
        }
        (Some(s), None) => s,
        (None, Some(path)) => EnvSetup::new(
            InstanceSource::File { path: path.clone() },
            BreakdownKind::OperationSequencing,
        ),
        (None, None) => return Err(usage("either --config or --instance is required")),
    };
    if let Some(b) = &args.breakdown {
        setup.breakdown = parse_named("breakdown", serde_json::json!({ "kind": b }))?;
    }
    if let Some(a) = args.action {
        setup.action = match a {
            ActionArg::Direct => ActionSpec::Direct,
            ActionArg::Rules => ActionSpec::all_rules(),
            ActionArg::Params => ActionSpec::SolverParams,
        };
    }
    if let Some(s) = &args.shaping {
        setup.shaping = parse_named::<Shaping>("shaping", serde_json::json!(s))?;
    }
    if let Some(o) = &args.objective {
        setup.objective = Some(o.clone());
    }
    if args.horizon.is_some() {
        setup.horizon = args.horizon;
    }
    Ok(setup)
}

#[derive(serde::Deserialize)]
struct ServeFile {
    #[serde(flatten)]
    env: EnvSetup,
    seed: Option<u64>,
}

fn run(args: RunArgs, json: bool) -> Result<u8> {
    let mut cfg = match &args.env.config {
        Some(p) => Some(EpisodeConfig::load(p)?),
        None => None,
    };
    let env = env_setup(&args.env, cfg.as_ref().map(|c| c.env.clone()))?;
    let agent = match (&args.agent, &cfg) {
        (Some(a), _) => a.parse().map_err(|e| usage(format!("{e}")))?,
        (None, Some(c)) => c.agent.clone(),
        (None, None) => return Err(usage("--agent is required")),
    };
    let seed = match (args.env.seed, &cfg) {
        (Some(s), _) => s,
        (None, Some(c)) => c.seed,
        (None, None) => return Err(usage("--seed is required")),
    };
    let qtable = args.qtable.clone().or_else(|| cfg.as_ref().and_then(|c| c.qtable.clone()));
    let cfg = cfg.insert(EpisodeConfig {
        env,
        agent,
        seed,
        qtable,
    });
    let result = run_single(cfg)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trace.jsonl"), &result.trace)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&*cfg)? + "\n")?;
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&result)? + "\n")?;
    }
    if json {
        print_json(&result)?;
    } else {
        say!(
            "{} seed {}: objective {} in {} decisions, trace {}",
            result.agent, result.seed, result.objective, result.steps, result.trace_hash
        );
    }
    Ok(0)
}

fn serve_cmd(args: ServeArgs) -> Result<u8> {
    let file: Option<ServeFile> = match &args.env.config {
        Some(p) => {
            let mut f: ServeFile = load_file(p)?;
            if let Some(dir) = p.parent() {
                f.env.instance.rebase(dir);
            }
            Some(f)
        }
        None => None,
    };
    let seed = args
        .env
        .seed
        .or(file.as_ref().and_then(|f| f.seed))
        .ok_or_else(|| usage("--seed is required"))?;
    let setup = env_setup(&args.env, file.map(|f| f.env))?;
    let inst = setup.instance.load()?;
    let mut env = make_env(&inst, setup.env_config(&inst)?, seed)?;
    serve(&mut env, io::stdin().lock(), io::stdout().lock())?;
    Ok(0)
}

fn threads_cap() -> Result<Option<usize>> {
    match std::env::var("SHOPBENCH_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("SHOPBENCH_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn bench(args: BenchArgs, json: bool) -> Result<u8> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(cap) = threads_cap()? {
        cfg.threads = Some(cfg.threads.map_or(cap, |t| t.min(cap)));
    }
    let rep = run_experiment(&cfg)?;
    let files = write_report(&rep, &args.out)?;
    if json {
        print_json(&serde_json::json!({
            "files": files,
            "rows": rep.rows.len(),
            "failed": rep.failed_cells(),
            "summaries": rep.summaries,
        }))?;
    } else {
        print!("{}", render_report(&rep, ReportFormat::Markdown));
        for f in &files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(u8::from(rep.failed_cells() > 0))
}

fn replay(args: ReplayArgs, json: bool) -> Result<u8> {
    let cfg = EpisodeConfig::load(&args.config)?;
    let trace = read_text(&args.trace)?;
    let check = verify_trace(&cfg, &trace)?;
    if json {
        print_json(&check)?;
    } else if check.matches {
        say!("ok: {} actions, trace {}", check.actions, check.replay_hash);
    } else {
        say!("mismatch: file {} != replay {}", check.file_hash, check.replay_hash);
    }
    Ok(u8::from(!check.matches))
}

fn report(args: ReportArgs) -> Result<u8> {
    let format: ReportFormat = args.format.parse().map_err(usage)?;
    let rep = RunReport::from_json(&read_text(&args.input)?)
        .map_err(|e| usage(format!("{}: {e}", args.input.display())))?;
    write_or_print(args.out.as_deref(), &render_report(&rep, format))?;
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Notation(c) => notation(c, cli.json),
        Cmd::Instance(c) => instance(c, cli.json),
        Cmd::Run(a) => run(a, cli.json),
        Cmd::Serve(a) => serve_cmd(a),
        Cmd::Bench(a) => bench(a, cli.json),
        Cmd::Replay(a) => replay(a, cli.json),
        Cmd::Report(a) => report(a),
    }
}

fn exit_status(e: &anyhow::Error) -> u8 {
    if e.is::<Usage>() {
        return 2;
    }
    match e.downcast_ref::<BenchError>() {
        Some(BenchError::Io { .. } | BenchError::Parse { .. } | BenchError::Version { .. } | BenchError::Invalid(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
