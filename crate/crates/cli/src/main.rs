use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use equistream_bench::protocol::{
    LATENCY_ITERS, LATENCY_WARMUP, THROUGHPUT_ITERS, THROUGHPUT_WARMUP,
};
use equistream_bench::system::{DEFAULT_CUTOFF, DEFAULT_LATTICE};
use equistream_bench::{
    gen_fcc_system, linear_fit, run_attention_bench, run_tp_bench, write_attention_csv,
    write_tp_csv, BenchConfig, BenchError, Precision, RowStatus, TpBenchConfig, Variant,
};
use equistream_cli::verify::{self, Suite, VerifyOptions};
use equistream_core::fixture::Fixture;
use equistream_core::L_MAX;

#[derive(Parser)]
#[command(name = "equistream", version, about = "Equivariant attention kernels: verification and benchmarks")]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true, env = "EQUISTREAM_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run property suites and report the worst residual of each property.
    Verify(VerifyArgs),
    /// Time the attention aggregation variants over a sweep of system sizes.
    BenchAttn(BenchAttnArgs),
    /// Time dense against aligned-sparse tensor products.
    BenchTp(BenchTpArgs),
    /// Write a synthetic FCC system as a JSON fixture.
    GenSystem(GenSystemArgs),
    /// Print the basis and normalization conventions as key=value lines.
    DumpConventions(OutArg),
    /// Print translation weights and recoupling tables, or re-indexing rules.
    DumpPaths(DumpPathsArgs),
}

#[derive(Args)]
struct OutArg {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    /// Tolerance override, as PROPERTY=VALUE. Repeatable.
    #[arg(long = "tol", value_parser = parse_tol)]
    tolerances: Vec<(String, f64)>,
}

#[derive(Args)]
struct BenchAttnArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 512, 2048, 8192, 32768])]
    sweep_n: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    heads: usize,
    /// Value channels per head.
    #[arg(long, default_value_t = 8)]
    channels: usize,
    /// Query/key width per head.
    #[arg(long, default_value_t = 8)]
    dk: usize,
    #[arg(long, default_value_t = 2)]
    lmax: usize,
    #[arg(long, value_parser = parse_precision, default_value = "f64")]
    precision: Precision,
    #[arg(long, default_value_t = LATENCY_WARMUP)]
    warmup: usize,
    #[arg(long, default_value_t = LATENCY_ITERS)]
    iters: usize,
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_variant,
        default_value = "edge-materializing,masked-dense,streaming"
    )]
    variants: Vec<Variant>,
    /// Also run the data-parallel streaming path.
    #[arg(long)]
    parallel: bool,
    /// Element budget before a variant is reported as OOM.
    #[arg(long, default_value_t = 256 << 20)]
    memory_budget: usize,
    #[arg(long, default_value_t = 8192)]
    masked_dense_max_n: usize,
    #[arg(long, default_value_t = DEFAULT_LATTICE)]
    a: f64,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    r_cut: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchTpArgs {
    #[arg(long, default_value_t = 2)]
    lmax: usize,
    #[arg(long, default_value_t = 128)]
    channels: usize,
    /// Products per timed call.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 16, 256])]
    counts: Vec<usize>,
    #[arg(long, default_value_t = THROUGHPUT_WARMUP)]
    warmup: usize,
    #[arg(long, default_value_t = THROUGHPUT_ITERS)]
    iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSystemArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_LATTICE)]
    a: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpPathsArgs {
    #[arg(long, default_value_t = L_MAX)]
    lmax: usize,
    /// Dump the aligned-frame re-indexing rules instead.
    #[arg(long)]
    rules: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected PROPERTY=VALUE")?;
    let v: f64 = v.parse().map_err(|e| format!("{v:?}: {e}"))?;
    if !(v >= 0.0) {
        return Err("tolerance must be non-negative".into());
    }
    Ok((k.to_string(), v))
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

/// Failure categories mapped onto exit codes.
enum Failure {
    Usage(String),
    Check(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(m) => Failure::Usage(m),
            other => Failure::Check(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Check(e.to_string())
    }
}

impl From<equistream_core::Error> for Failure {
    fn from(e: equistream_core::Error) -> Self {
        Failure::Check(e.to_string())
    }
}

fn sink(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_verify(args: VerifyArgs, seed: u64) -> Result<(), Failure> {
    for (k, _) in &args.tolerances {
        if !verify::PROPERTIES.contains(&k.as_str()) {
            return Err(Failure::Usage(format!("unknown property {k:?} in --tol")));
        }
    }
    let opts = VerifyOptions {
        seed,
        tolerances: args.tolerances.into_iter().collect(),
    };
    let results = verify::run(args.suite, &opts);
    let mut stdout = io::stdout().lock();
    let mut failed = Vec::new();
    for p in &results {
        writeln!(stdout, "{p}")?;
        if !p.passed() {
            failed.push(p);
        }
    }
    let passed = results.len() - failed.len();
    writeln!(stdout, "{passed}/{} properties passed", results.len())?;
    if failed.is_empty() {
        return Ok(());
    }
    for p in &failed {
        eprintln!(
            "replay: equistream verify --suite {} --seed {seed}  ({} instance {})",
            p.suite.name(),
            p.name,
            p.failing_instance.unwrap_or(0)
        );
    }
    Err(Failure::Check(format!("{} properties failed", failed.len())))
}

fn cmd_bench_attn(args: BenchAttnArgs, seed: u64, variants_given: bool) -> Result<(), Failure> {
    if args.parallel && variants_given {
        return Err(Failure::Usage(
            "--parallel conflicts with --variants; list streaming-parallel instead".into(),
        ));
    }
    if args.sweep_n.is_empty() {
        return Err(Failure::Usage("--sweep-n is empty".into()));
    }
    let mut variants = args.variants;
    if args.parallel {
        variants.push(Variant::StreamingParallel);
    }
    let mut seen = Vec::new();
    for v in &variants {
        if seen.contains(v) {
            return Err(Failure::Usage(format!("variant {v} listed twice")));
        }
        seen.push(*v);
    }
    let mut rows = Vec::new();
    for &n in &args.sweep_n {
        let cfg = BenchConfig {
            n,
            k: args.k,
            heads: args.heads,
            channels: args.channels,
            dk: args.dk,
            lmax: args.lmax,
            precision: args.precision,
            warmup: args.warmup,
            iters: args.iters,
            seed,
            variants: variants.clone(),
            lattice_constant: args.a,
            r_cut: args.r_cut,
            memory_budget: args.memory_budget,
            masked_dense_max_n: args.masked_dense_max_n,
        };
        let report = run_attention_bench(&cfg).map_err(|e| match e {
            BenchError::GateFailed { .. } => Failure::Check(format!(
                "{e}\nreplay: equistream bench-attn --sweep-n {n} --k {} --heads {} --channels {} \
                 --precision {} --seed {seed}",
                args.k,
                args.heads,
                args.channels,
                args.precision.name()
            )),
            other => other.into(),
        })?;
        let worst = report.gate.deviations.iter().map(|d| d.1).fold(0.0, f64::max);
        eprintln!(
            "N={n}: gate passed against {} reference ({} rows, worst {worst:.2e}), mean neighbors {:.1}",
            report.gate.reference, report.gate.checked_rows, report.mean_neighbors
        );
        rows.extend(report.rows);
    }
    write_attention_csv(&rows, sink(args.out.as_deref())?)?;
    for v in &variants {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.variant == *v && r.status == RowStatus::Ok)
            .map(|r| (r.n as f64, r.peak_elems as f64))
            .collect();
        if let Some(fit) = linear_fit(&pts) {
            eprintln!("{v}: peak elements vs N, R^2 = {:.6}", fit.r_squared);
        }
    }
    Ok(())
}

fn cmd_bench_tp(args: BenchTpArgs, seed: u64) -> Result<(), Failure> {
    let rows = run_tp_bench(&TpBenchConfig {
        lmax: args.lmax,
        channels: args.channels,
        counts: args.counts,
        warmup: args.warmup,
        iters: args.iters,
        seed,
    })?;
    write_tp_csv(&rows, sink(args.out.as_deref())?)?;
    let (dense, sparse) = rows
        .iter()
        .fold((0.0, 0.0), |(d, s), r| (d + r.dense_time_s * r.count as f64, s + r.eaas_time_s * r.count as f64));
    eprintln!("total wall time ratio dense/sparse: {:.2}", dense / sparse);
    Ok(())
}

fn cmd_gen_system(args: GenSystemArgs, seed: u64) -> Result<(), Failure> {
    if args.n == 0 || !(args.a > 0.0) {
        return Err(Failure::Usage("--n and --a must be positive".into()));
    }
    let sys = gen_fcc_system(args.n, args.a, seed);
    let json = Fixture::System(sys.to_fixture()).to_json()?;
    let mut w = sink(args.out.as_deref())?;
    writeln!(w, "{json}")?;
    Ok(())
}

fn cmd_dump_paths(args: DumpPathsArgs) -> Result<(), Failure> {
    if args.lmax > L_MAX {
        return Err(Failure::Usage(format!("--lmax must be at most {L_MAX}")));
    }
    let text = if args.rules {
        equistream_core::eaas::dump_rules(args.lmax)?
    } else {
        equistream_core::factorized::dump_paths(args.lmax)?
    };
    sink(args.out.as_deref())?.write_all(text.as_bytes())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().get_matches();
    let variants_given = matches
        .subcommand_matches("bench-attn")
        .is_some_and(|m| m.value_source("variants") == Some(clap::parser::ValueSource::CommandLine));
    let cli = match <Cli as clap::FromArgMatches>::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let seed = cli.seed;
    let result = match cli.command {
        Command::Verify(a) => cmd_verify(a, seed),
        Command::BenchAttn(a) => cmd_bench_attn(a, seed, variants_given),
        Command::BenchTp(a) => cmd_bench_tp(a, seed),
        Command::GenSystem(a) => cmd_gen_system(a, seed),
        Command::DumpConventions(a) => sink(a.out.as_deref())
            .and_then(|mut w| w.write_all(equistream_core::conventions::manifest().as_bytes()))
            .map_err(Failure::from),
        Command::DumpPaths(a) => cmd_dump_paths(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
