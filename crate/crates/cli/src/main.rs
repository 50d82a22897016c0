//! `klee`: generate instances, estimate union volumes, run sweeps.

use clap::{Args, Parser, Subcommand, ValueEnum};
use klee_core::estimate::{
    exact_report, BoostOptions, EstimateOptions, EstimateReport, PreparedInstance, DEFAULT_REPETITIONS,
};
use klee_core::exact::DEFAULT_CELL_CAP;
use klee_core::experiment::{
    bench_csv, klm_on_boxes, lowerbound_csv, run_bench, run_lowerbound, BenchSpec, EpsilonRule, LowerBoundAlgo,
    LowerBoundSpec,
};
use klee_core::lowerbound::ell_for_epsilon;
use klee_core::{generate, parse_instance, write_instance, Algorithm, InstanceKind, RandomStream};
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_IO: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_ESTIMATOR: u8 = 3;

#[derive(Parser)]
#[command(name = "klee", version, about = "Volume of a union of axis-aligned boxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance file.
    Generate(GenerateArgs),
    /// Estimate the union volume of an instance file.
    Estimate(EstimateArgs),
    /// Sweep n and algorithms over generated instances; CSV out.
    Bench(BenchArgs),
    /// Run query-model algorithms on hard hidden instances; CSV out.
    Lowerbound(LowerboundArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    Cubes,
    DissimilarClasses,
    Lattice,
}

impl From<Kind> for InstanceKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Uniform => InstanceKind::Uniform,
            Kind::Cubes => InstanceKind::Cubes,
            Kind::DissimilarClasses => InstanceKind::DissimilarClasses,
            Kind::Lattice => InstanceKind::Lattice,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Main,
    Boosted,
    Crude,
    Klm,
    Exact,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Main => Algorithm::Main,
            Algo::Boosted => Algorithm::Boosted,
            Algo::Crude => Algorithm::Crude,
            Algo::Klm => Algorithm::Klm,
            Algo::Exact => Algorithm::Exact,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum LbAlgo {
    Klm,
    ExhaustiveContains,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(short, long)]
    n: usize,
    #[arg(short, long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Instance file, `-` for stdin.
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "main")]
    algo: Algo,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Runs for `--algo boosted`; must be odd.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    /// Work budget (main, boosted) or query budget (klm).
    #[arg(long)]
    budget: Option<u64>,
    /// Cell cap for `--algo exact`.
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cap: u128,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Omit wall-clock time so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance sizes; none gives a header-only table.
    #[arg(short, long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(short, long, default_value_t = 2)]
    d: usize,
    #[arg(long, value_enum, default_value = "cubes")]
    kind: Kind,
    /// Fixed ε; overrides `--eps-power`.
    #[arg(long)]
    eps: Option<f64>,
    /// Use ε = n^(-power).
    #[arg(long, default_value_t = 0.5)]
    eps_power: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "main,klm")]
    algo: Vec<Algo>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seed: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cap: u128,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(short, long)]
    n: usize,
    /// Block count; derived from `--eps` when absent.
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value = "klm")]
    algo: LbAlgo,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl ToString) -> Failure {
    Failure { code, msg: msg.to_string() }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| fail(EXIT_IO, e)),
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let boxes = generate(a.kind.into(), a.n, a.d, a.seed).map_err(|e| fail(EXIT_INPUT, e))?;
    emit(&a.out, &write_instance(&boxes))
}

const REPORT_CSV_HEADER: &str = "schema,algorithm,estimate,epsilon,seed,n,d,dropped,classes,crude_estimate,density,repetitions,completed,aborted,crude_samples,candidates,points_sampled,kept,appears_queries,in_class_queries,node_visits,vol_queries,sample_queries,contains_queries,work,elapsed_ms";

fn report_csv(r: &EstimateReport) -> String {
    fn o<T: std::fmt::Debug>(v: Option<T>) -> String {
        v.map(|x| format!("{x:?}")).unwrap_or_default()
    }
    let c = &r.counters;
    format!(
        "{REPORT_CSV_HEADER}\n{},{},{:?},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        r.schema,
        r.algorithm.name(),
        r.estimate,
        o(r.epsilon),
        r.seed,
        r.n,
        r.d,
        r.dropped,
        o(r.classes),
        o(r.crude_estimate),
        o(r.density),
        o(r.repetitions),
        o(r.completed),
        r.aborted as u8,
        c.crude_samples,
        c.candidates,
        c.points_sampled,
        c.kept,
        c.appears_queries,
        c.in_class_queries,
        c.node_visits,
        c.vol_queries,
        c.sample_queries,
        c.contains_queries,
        c.work(),
        o(r.elapsed_ms),
    )
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Failure> {
    let text = if a.instance.as_os_str() == "-" {
        io::read_to_string(io::stdin()).map_err(|e| fail(EXIT_INPUT, e))?
    } else {
        fs::read_to_string(&a.instance).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", a.instance.display())))?
    };
    let boxes = parse_instance(&text).map_err(|e| fail(EXIT_INPUT, e))?;
    let mut stream = RandomStream::new(a.seed, 0);
    let est = |e: klee_core::EstimateError| fail(EXIT_ESTIMATOR, e);
    let mut report = match a.algo {
        Algo::Exact => exact_report(&boxes, a.cap).map_err(est)?,
        Algo::Klm => klm_on_boxes(&boxes, a.eps, &mut stream, a.budget).map_err(est)?,
        algo => {
            let prepared = PreparedInstance::new(&boxes).map_err(est)?;
            match algo {
                Algo::Main => prepared
                    .estimate(a.eps, &mut stream, EstimateOptions { work_budget: a.budget })
                    .map_err(est)?,
                Algo::Boosted => prepared
                    .boosted(a.eps, &mut stream, a.reps, BoostOptions { budget_override: a.budget })
                    .map_err(est)?,
                _ => prepared.crude(&mut stream).map_err(est)?,
            }
        }
    };
    if a.no_timing {
        report.elapsed_ms = None;
    }
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        Format::Csv => report_csv(&report),
    };
    emit(&a.out, &text)
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let spec = BenchSpec {
        ns: a.n,
        d: a.d,
        kind: a.kind.into(),
        eps: a.eps.map_or(EpsilonRule::Power(a.eps_power), EpsilonRule::Fixed),
        algos: a.algo.into_iter().map(Algorithm::from).collect(),
        seeds: a.seed,
        repetitions: a.reps,
        exact_cap: a.cap,
        timing: !a.no_timing,
    };
    let rows = run_bench(&spec).map_err(|e| fail(EXIT_ESTIMATOR, e))?;
    emit(&a.out, &bench_csv(&rows))
}

fn cmd_lowerbound(a: LowerboundArgs) -> Result<(), Failure> {
    let ell = match (a.ell, a.eps) {
        (Some(ell), _) => ell,
        (None, Some(eps)) => ell_for_epsilon(eps).map_err(|e| fail(EXIT_INPUT, e))?,
        (None, None) => return Err(fail(EXIT_INPUT, "one of --ell or --eps is required")),
    };
    let spec = LowerBoundSpec {
        n: a.n,
        ell,
        algo: match a.algo {
            LbAlgo::Klm => LowerBoundAlgo::Klm,
            LbAlgo::ExhaustiveContains => LowerBoundAlgo::ExhaustiveContains,
        },
        trials: a.trials,
        seed: a.seed,
    };
    let rows = run_lowerbound(&spec).map_err(|e| fail(EXIT_ESTIMATOR, e))?;
    emit(&a.out, &lowerbound_csv(&rows))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Lowerbound(a) => cmd_lowerbound(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("klee: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
