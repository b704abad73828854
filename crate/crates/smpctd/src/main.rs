//! Command-line entry point: protocol runs, the plan auditor, the plaintext
//! oracle, data and triple generation, and the scaling benchmark.

use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use smpctd::bench;
use smpctd::data;
use smpctd::dealer::{self, DealerClient, FileLink, RecordingLink};
use smpctd::runner::{self, run_local, run_party, Mode, Model, PartyRun, RunSpec, Task};
use smpctd::transport::{connect_mesh, SessionParams, TcpConfig};
use smpctd_core::linalg::Matrix;
use smpctd_core::oracle;
use smpctd_core::pipeline::{self, FaModel, PcaModel, SvdModel};
use smpctd_core::plan::{self, TaskPlan};
use smpctd_core::triple::{RemoteTripleSource, SeededTripleSource, TripleSource};

#[derive(Parser)]
#[command(name = "smpctd", about = "Decomposed secure multi-party analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol participant (a party or the dealer).
    Run(RunArgs),
    /// Audit a task plan against the disclosure bound.
    Audit(AuditArgs),
    /// Print one of the built-in task plans as JSON.
    Plan(PlanArgs),
    /// Plaintext reference model for a pooled dataset.
    Oracle(OracleArgs),
    /// Generate seeded synthetic rows as CSV.
    GenData(GenDataArgs),
    /// Pre-generate per-party triple files for one run shape.
    GenTriples(GenTriplesArgs),
    /// Scaling benchmark across row counts and modes.
    Bench(BenchArgs),
    /// Project plaintext rows onto a revealed model.
    Project(ProjectArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value = "decomposed")]
    mode: Mode,
    /// "party" or "dealer".
    #[arg(long, default_value = "party")]
    role: String,
    #[arg(long, default_value_t = 0)]
    party_id: usize,
    #[arg(long, default_value_t = 2)]
    parties: usize,
    /// This party's input rows (CSV).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = data::DEFAULT_CHUNK_ROWS)]
    chunk_rows: usize,
    /// Power iteration rounds per eigenpair.
    #[arg(long, default_value_t = 50)]
    iters: u32,
    /// Shift power iteration rounds per eigenpair (factor analysis).
    #[arg(long, default_value_t = 300)]
    shift_iters: u32,
    #[arg(long, default_value_t = 20)]
    frac_bits: u32,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Reveal log destination (JSON lines).
    #[arg(long)]
    reveal_log: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    max_abs: f64,
    /// Public cap on the pooled row count.
    #[arg(long, default_value_t = 2048)]
    max_rows: u64,
    #[arg(long)]
    header: bool,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Party i listens on base_port + i.
    #[arg(long, default_value_t = 7400)]
    base_port: u16,
    /// Dealer address (host:port); omitted means seed-derived local triples.
    #[arg(long)]
    dealer: Option<String>,
    /// Pre-generated triple file for this party.
    #[arg(long)]
    triples_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    session_id: u64,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    /// Run every party in this process; --data is split evenly.
    #[arg(long)]
    local: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Task plan JSON.
    plan: PathBuf,
    #[arg(long)]
    parties: usize,
    /// Parameters (raw statistics) per party.
    #[arg(long)]
    params: u64,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 2)]
    parties: usize,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    max_abs: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenTriplesArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value = "decomposed")]
    mode: Mode,
    #[arg(long, default_value_t = 2)]
    parties: usize,
    /// Rows per party in the run the files will serve.
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    frac_bits: u32,
    #[arg(long, default_value_t = data::DEFAULT_CHUNK_ROWS)]
    chunk_rows: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated tasks, or "all".
    #[arg(long, default_value = "pca")]
    task: String,
    /// Comma-separated modes.
    #[arg(long, default_value = "decomposed,traditional")]
    modes: String,
    /// Rows per party as start:end:step.
    #[arg(long, default_value = "100:800:100")]
    n: String,
    #[arg(long, default_value_t = 2)]
    parties: usize,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    /// "pca" or "svd".
    #[arg(long)]
    task: Task,
    /// Model JSON produced by `run` or `oracle`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    header: bool,
    /// Number of leading components.
    #[arg(long, default_value_t = 2)]
    components: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::GenData(args) => cmd_gen_data(args),
        Command::GenTriples(args) => cmd_gen_triples(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Project(args) => cmd_project(args),
    }
}

fn build_spec(args: &RunArgs) -> RunSpec {
    let mut spec = RunSpec::new(args.task, args.mode);
    spec.chunk_rows = args.chunk_rows.max(1);
    spec.frac_bits = args.frac_bits;
    spec.seed = args.seed;
    spec.cfg.power_iterations = args.iters;
    spec.cfg.shift_iterations = args.shift_iters;
    spec.cfg.max_abs = args.max_abs;
    spec.cfg.max_total_rows = args.max_rows;
    spec
}

fn write_outputs(args: &RunArgs, run: &PartyRun) -> Result<()> {
    let model_json = serde_json::to_string_pretty(&run.model)?;
    match &args.model_out {
        Some(path) => std::fs::write(path, model_json)?,
        None => println!("{model_json}"),
    }
    if let Some(path) = &args.metrics_out {
        std::fs::write(path, serde_json::to_string_pretty(&run.metrics)?)?;
    }
    if let Some(path) = &args.reveal_log {
        let mut lines = String::new();
        for record in &run.reveals {
            lines.push_str(&serde_json::to_string(record)?);
            lines.push('\n');
        }
        std::fs::write(path, lines)?;
    }
    Ok(())
}

fn split_rows(full: &Matrix, parts: usize) -> Vec<Matrix> {
    let base = full.rows / parts;
    let extra = full.rows % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let rows = base + usize::from(p < extra);
        out.push(Matrix::from_vec(
            rows,
            full.cols,
            full.data[start * full.cols..(start + rows) * full.cols].to_vec(),
        ));
        start += rows;
    }
    out
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let session = SessionParams {
        session_id: args.session_id,
        parties: args.parties,
        frac_bits: args.frac_bits,
    };
    if args.role == "dealer" {
        // The dealer listens one port past the last party.
        let addr = format!("{}:{}", args.host, args.base_port + args.parties as u16);
        let listener = TcpListener::bind(&addr).with_context(|| format!("bind {addr}"))?;
        eprintln!("dealer listening on {addr}");
        dealer::serve(listener, &session, args.seed ^ 0x7472_6970).map_err(|e| anyhow!("{e}"))?;
        return Ok(());
    }
    if args.role != "party" {
        bail!("--role must be party or dealer");
    }
    let data_path = args
        .data
        .as_ref()
        .ok_or_else(|| anyhow!("--data is required for parties"))?;
    let spec = build_spec(&args);
    if args.local {
        let full = data::read_matrix(data_path, args.header)?;
        let runs = run_local(&spec, &split_rows(&full, args.parties))?;
        return write_outputs(&args, &runs[0]);
    }
    let rows = data::read_matrix(data_path, args.header)?;
    let cfg = TcpConfig {
        host: args.host.clone(),
        base_port: args.base_port,
        party_id: args.party_id,
        session: session.clone(),
        timeout: Duration::from_secs(args.timeout_secs),
    };
    let channel = connect_mesh(&cfg).map_err(|e| anyhow!("{e}"))?;
    let counters = channel.counters();
    let triples: Box<dyn TripleSource> = if let Some(path) = &args.triples_file {
        let link = FileLink::open(path, args.frac_bits as u8, args.parties as u8)?;
        Box::new(RemoteTripleSource::new(link))
    } else if let Some(addr) = &args.dealer {
        let link = DealerClient::connect(
            addr,
            &session,
            args.party_id,
            Duration::from_secs(args.timeout_secs),
        )
        .map_err(|e| anyhow!("{e}"))?;
        Box::new(RemoteTripleSource::new(link))
    } else {
        Box::new(SeededTripleSource::new(
            args.seed ^ 0x7472_6970,
            args.parties,
            args.party_id,
        ))
    };
    let run = run_party(channel, triples, counters, &spec, &rows)?;
    write_outputs(&args, &run)
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.plan)
        .with_context(|| format!("read {}", args.plan.display()))?;
    let plan: TaskPlan = serde_json::from_str(&text)?;
    let report = plan::audit(&plan, args.parties, args.params).map_err(|e| anyhow!("{e}"))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.verdict {
        std::process::exit(1);
    }
    Ok(())
}

fn builtin_plan(task: Task, parties: usize, dim: usize) -> TaskPlan {
    match task {
        Task::Pca => plan::pca_plan(parties, dim),
        Task::Svd => plan::svd_plan(parties, dim),
        Task::Fa => plan::fa_plan(parties, dim),
    }
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    let plan = builtin_plan(args.task, args.parties, args.dim);
    let json = serde_json::to_string_pretty(&plan)?;
    match args.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn reference_model(task: Task, pooled: &Matrix) -> Result<Model> {
    Ok(match task {
        Task::Pca => {
            let r = oracle::pca_reference(pooled).map_err(|e| anyhow!("{e}"))?;
            Model::Pca(PcaModel {
                total_avg: r.mean.clone().unwrap(),
                eigenvalue_array: r.values,
                eigenvector_matrix: r.vectors,
            })
        }
        Task::Svd => {
            let r = oracle::svd_reference(pooled).map_err(|e| anyhow!("{e}"))?;
            Model::Svd(SvdModel {
                singular_value: r.values,
                right_singular_matrix: r.vectors,
            })
        }
        Task::Fa => {
            let r = oracle::fa_reference(pooled).map_err(|e| anyhow!("{e}"))?;
            Model::Fa(FaModel {
                principal_factors: r.values,
                factor_loading_matrix: r.loadings.unwrap(),
            })
        }
    })
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let pooled = data::read_matrix(&args.data, args.header)?;
    let model = reference_model(args.task, &pooled)?;
    let json = serde_json::to_string_pretty(&model)?;
    match args.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let rows = data::synthetic_rows(args.seed, args.rows, args.dim, args.max_abs);
    data::write_matrix(&args.out, &rows)
}

fn cmd_gen_triples(args: GenTriplesArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let mut spec = RunSpec::new(args.task, args.mode);
    spec.seed = args.seed;
    spec.frac_bits = args.frac_bits;
    spec.chunk_rows = args.chunk_rows;
    spec.cfg.max_total_rows = ((args.rows * args.parties).next_power_of_two()).max(2) as u64;
    // The request trace depends only on the run shape, never on the values,
    // so a dry run over placeholder rows of the right size records exactly
    // the triples the real run will consume.
    let m = args.parties;
    let mesh = smpctd::transport::loopback_mesh(m);
    let mut handles = Vec::new();
    for (party, channel) in mesh.into_iter().enumerate() {
        let spec = spec.clone();
        let rows = data::synthetic_rows(party as u64, args.rows, args.dim, spec.cfg.max_abs);
        let counters = channel.counters();
        let link = RecordingLink::new(args.seed ^ 0x7472_6970, m, party);
        let records = link.records();
        handles.push(std::thread::spawn(move || {
            run_party(channel, RemoteTripleSource::new(link), counters, &spec, &rows)
                .map(|_| records)
        }));
    }
    for (party, handle) in handles.into_iter().enumerate() {
        let records = handle
            .join()
            .map_err(|_| anyhow!("dry-run party panicked"))??;
        let path = args.out_dir.join(format!("party-{party}.smtd"));
        let records = records.lock().unwrap();
        dealer::write_triple_file(&path, args.frac_bits as u8, m as u8, &records)?;
        eprintln!("wrote {} ({} records)", path.display(), records.len());
    }
    Ok(())
}

fn parse_tasks(s: &str) -> Result<Vec<Task>> {
    if s == "all" {
        return Ok(vec![Task::Pca, Task::Svd, Task::Fa]);
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let tasks = parse_tasks(&args.task)?;
    let modes: Vec<runner::Mode> = args
        .modes
        .split(',')
        .map(|m| m.trim().parse())
        .collect::<Result<_>>()?;
    let ns = bench::parse_range(&args.n)?;
    let rows = bench::run_grid(&tasks, &modes, &ns, args.dim, args.parties, args.seed)?;
    bench::write_csv(&args.out, &rows)?;
    print!("{}", bench::summarize(&rows));
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_project(args: ProjectArgs) -> Result<()> {
    let rows = data::read_matrix(&args.data, args.header)?;
    let text = std::fs::read_to_string(&args.model)?;
    let projected = match args.task {
        Task::Pca => {
            let model: PcaModel = serde_json::from_str(&text)?;
            pipeline::project_pca(&model, &rows, args.components)
        }
        Task::Svd => {
            let model: SvdModel = serde_json::from_str(&text)?;
            pipeline::project_svd(&model, &rows, args.components)
        }
        Task::Fa => bail!("projection applies to pca and svd models"),
    };
    data::write_matrix(&args.out, &projected)
}
