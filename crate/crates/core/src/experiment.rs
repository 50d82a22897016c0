//! Benchmark sweeps and lower-bound trials, emitted as CSV.
//!
//! Column orders are fixed by [`BENCH_HEADER`] and [`LOWERBOUND_HEADER`].
//! Empty optional fields are written as empty strings.

use crate::estimate::{
    exact_report, klm_baseline, Algorithm, BoostOptions, EstimateError, EstimateOptions, EstimateReport,
    PreparedInstance, DEFAULT_REPETITIONS,
};
use crate::exact::{compressed_cell_count, DEFAULT_CELL_CAP};
use crate::geometry::{AlignedBox, Point};
use crate::instance::{generate, GenerateError, InstanceKind};
use crate::lowerbound::{
    epsilon_for_ell, recover_inner_product, GapSign, HiddenInstance, LowerBoundError,
};
use crate::querymodel::{wrap_box, QuerySession};
use crate::sampling::RandomStream;
use std::collections::HashSet;
use std::fmt::Write as _;
use thiserror::Error;

pub const BENCH_HEADER: &str = "n,d,eps,algo,seed,estimate,exact,rel_error,work,queries,points_sampled,appears_queries,in_class_queries,node_visits,time_ms";

pub const LOWERBOUND_HEADER: &str =
    "n,ell,algo,trial,seed,inner_product,queries,bit_accesses,distinct_bits,estimate,recovered,sign_correct";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    LowerBound(#[from] LowerBoundError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonRule {
    Fixed(f64),
    /// `ε = n^(-power)`.
    Power(f64),
}

impl EpsilonRule {
    pub fn for_n(self, n: usize) -> f64 {
        match self {
            EpsilonRule::Fixed(e) => e,
            EpsilonRule::Power(a) => (n as f64).powf(-a),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub ns: Vec<usize>,
    pub d: usize,
    pub kind: InstanceKind,
    pub eps: EpsilonRule,
    pub algos: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub repetitions: usize,
    /// Exact values are computed only below this many compressed cells.
    pub exact_cap: u128,
    pub timing: bool,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            ns: Vec::new(),
            d: 2,
            kind: InstanceKind::Cubes,
            eps: EpsilonRule::Power(0.5),
            algos: vec![Algorithm::Main, Algorithm::Klm],
            seeds: vec![1],
            repetitions: DEFAULT_REPETITIONS,
            exact_cap: DEFAULT_CELL_CAP,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub algo: Algorithm,
    pub seed: u64,
    pub estimate: f64,
    pub exact: Option<f64>,
    pub work: u64,
    pub queries: u64,
    pub points_sampled: u64,
    pub appears_queries: u64,
    pub in_class_queries: u64,
    pub node_visits: u64,
    pub time_ms: Option<f64>,
}

impl BenchRow {
    pub fn rel_error(&self) -> Option<f64> {
        self.exact.filter(|&v| v > 0.0).map(|v| (self.estimate - v).abs() / v)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:?},{},{},{:?},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.d,
            self.eps,
            self.algo.name(),
            self.seed,
            self.estimate,
            opt(self.exact),
            opt(self.rel_error()),
            self.work,
            self.queries,
            self.points_sampled,
            self.appears_queries,
            self.in_class_queries,
            self.node_visits,
            opt(self.time_ms),
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Runs one algorithm on one instance. `prepared` is reused when given and
/// built on demand otherwise.
pub fn run_algorithm(
    algo: Algorithm,
    boxes: &[AlignedBox],
    prepared: Option<&PreparedInstance>,
    epsilon: f64,
    repetitions: usize,
    stream: &mut RandomStream,
) -> Result<EstimateReport, EstimateError> {
    let owned;
    let prepared = match (algo, prepared) {
        (Algorithm::Klm, _) => return klm_on_boxes(boxes, epsilon, stream, None),
        (Algorithm::Exact, _) => return exact_report(boxes, DEFAULT_CELL_CAP),
        (_, Some(p)) => p,
        (_, None) => {
            owned = PreparedInstance::new(boxes)?;
            &owned
        }
    };
    match algo {
        Algorithm::Main => prepared.estimate(epsilon, stream, EstimateOptions::default()),
        Algorithm::Boosted => prepared.boosted(epsilon, stream, repetitions, BoostOptions::default()),
        _ => prepared.crude(stream),
    }
}

/// The coverage baseline with boxes as query-model objects.
pub fn klm_on_boxes(
    boxes: &[AlignedBox],
    epsilon: f64,
    stream: &mut RandomStream,
    budget: Option<u64>,
) -> Result<EstimateReport, EstimateError> {
    let objects: Vec<_> = boxes.iter().filter(|b| !b.is_degenerate()).cloned().map(wrap_box).collect();
    let mut session = QuerySession::new(&objects);
    klm_baseline(&mut session, epsilon, stream, budget)
}

pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &n in &spec.ns {
        for &seed in &spec.seeds {
            let boxes = generate(spec.kind, n, spec.d, seed)?;
            let exact = if compressed_cell_count(&boxes) <= spec.exact_cap {
                Some(exact_report(&boxes, spec.exact_cap)?.estimate)
            } else {
                None
            };
            let needs_prep = spec
                .algos
                .iter()
                .any(|a| matches!(a, Algorithm::Main | Algorithm::Boosted | Algorithm::Crude));
            let prepared = if needs_prep { Some(PreparedInstance::new(&boxes)?) } else { None };
            let eps = spec.eps.for_n(n);
            for &algo in &spec.algos {
                let report = if algo == Algorithm::Exact {
                    exact_report(&boxes, spec.exact_cap)?
                } else {
                    let mut stream = RandomStream::new(seed, 0);
                    run_algorithm(algo, &boxes, prepared.as_ref(), eps, spec.repetitions, &mut stream)?
                };
                let c = &report.counters;
                rows.push(BenchRow {
                    n,
                    d: spec.d,
                    eps,
                    algo,
                    seed,
                    estimate: report.estimate,
                    exact,
                    work: c.work(),
                    queries: c.model_queries(),
                    points_sampled: c.points_sampled,
                    appears_queries: c.appears_queries,
                    in_class_queries: c.in_class_queries,
                    node_visits: c.node_visits,
                    time_ms: report.elapsed_ms.filter(|_| spec.timing),
                });
            }
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerBoundAlgo {
    /// The coverage baseline at `ε = 1 / (6 √ℓ)`.
    Klm,
    /// Asks every object about every candidate lattice point.
    ExhaustiveContains,
}

impl LowerBoundAlgo {
    pub fn name(self) -> &'static str {
        match self {
            LowerBoundAlgo::Klm => "klm",
            LowerBoundAlgo::ExhaustiveContains => "exhaustive-contains",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LowerBoundSpec {
    pub n: usize,
    pub ell: usize,
    pub algo: LowerBoundAlgo,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundRow {
    pub n: usize,
    pub ell: usize,
    pub algo: LowerBoundAlgo,
    pub trial: usize,
    pub seed: u64,
    pub inner_product: i64,
    pub queries: u64,
    pub bit_accesses: u64,
    pub distinct_bits: u64,
    pub estimate: f64,
    pub recovered: f64,
    pub sign_correct: bool,
}

impl LowerBoundRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:?},{:?},{}",
            self.n,
            self.ell,
            self.algo.name(),
            self.trial,
            self.seed,
            self.inner_product,
            self.queries,
            self.bit_accesses,
            self.distinct_bits,
            self.estimate,
            self.recovered,
            self.sign_correct as u8,
        )
    }
}

/// One trial: builds a gap instance (positive on even trials, negative on
/// odd ones), runs the algorithm and recovers the sign.
pub fn lowerbound_trial(spec: &LowerBoundSpec, trial: usize) -> Result<LowerBoundRow, ExperimentError> {
    let mut stream = RandomStream::new(spec.seed, 0x1b00_0000 + trial as u64);
    let sign = if trial.is_multiple_of(2) { GapSign::Positive } else { GapSign::Negative };
    let inst = HiddenInstance::build(spec.n, spec.ell, sign, &mut stream)?;
    let objects = inst.objects();
    let mut session = QuerySession::new(&objects);
    let estimate = match spec.algo {
        LowerBoundAlgo::Klm => klm_baseline(&mut session, epsilon_for_ell(spec.ell), &mut stream, None)?.estimate,
        LowerBoundAlgo::ExhaustiveContains => {
            let n = spec.n as i64;
            let mut union = HashSet::new();
            for (o, _) in objects.iter().enumerate() {
                for a in n + 1..=n * spec.ell as i64 + n {
                    for b in -1..=1i64 {
                        let p = Point(vec![a as f64, b as f64]);
                        if session.contains(o, &p) {
                            union.insert((a, b));
                        }
                    }
                }
            }
            union.len() as f64
        }
    };
    let totals = session.snapshot();
    let recovered = recover_inner_product(estimate, spec.n, spec.ell);
    let inner = inst.inner_product();
    debug_assert_eq!(totals.bit_accesses, inst.bit_accesses());
    Ok(LowerBoundRow {
        n: spec.n,
        ell: spec.ell,
        algo: spec.algo,
        trial,
        seed: spec.seed,
        inner_product: inner,
        queries: totals.total,
        bit_accesses: totals.bit_accesses,
        distinct_bits: totals.distinct_bits,
        estimate,
        recovered,
        sign_correct: (recovered > 0.0) == (inner > 0),
    })
}

pub fn run_lowerbound(spec: &LowerBoundSpec) -> Result<Vec<LowerBoundRow>, ExperimentError> {
    (0..spec.trials).map(|t| lowerbound_trial(spec, t)).collect()
}

pub fn lowerbound_csv(rows: &[LowerBoundRow]) -> String {
    let mut out = String::from(LOWERBOUND_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{}", r.to_csv()).unwrap();
    }
    out
}
