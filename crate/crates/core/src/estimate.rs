//! Union-volume estimators: the crude 2-approximation, the class-sampling
//! (1 + ε) estimator with median boosting, and the query-model coverage
//! baseline.

use crate::classify::{ClassPartition, ClassifyError};
use crate::exact::{exact_volume_with_cap, ExactError};
use crate::geometry::{AlignedBox, Point};
use crate::querymodel::{QueryObject, QuerySession};
use crate::range_index::{AppearsIndex, ClassIndex, IndexError};
use crate::sampling::{poisson, ClassCells, RandomStream, SamplingError};
use serde::Serialize;
use thiserror::Error;

pub const REPORT_SCHEMA: &str = "klee-report/1";

/// Crude-estimate rounds per box.
pub const CRUDE_ROUNDS_PER_BOX: usize = 40;

/// Default median-of-runs count for [`PreparedInstance::boosted`].
pub const DEFAULT_REPETITIONS: usize = 9;

/// Work budget multiplier applied to the median completed run.
pub const BUDGET_FACTOR: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("repetitions must be odd and positive, got {0}")]
    InvalidRepetitions(usize),
    #[error("total box volume is zero")]
    ZeroTotalVolume,
    #[error("crude estimate was zero twice")]
    CrudeEstimateZero,
    #[error("all {0} repetitions exceeded their work budget")]
    AllAborted(usize),
    #[error("no trial completed within the budget of {0} queries")]
    NoCompletedTrials(u64),
    #[error("no objects to estimate")]
    NoObjects,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Main,
    Boosted,
    Crude,
    Klm,
    Exact,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Main => "main",
            Algorithm::Boosted => "boosted",
            Algorithm::Crude => "crude",
            Algorithm::Klm => "klm",
            Algorithm::Exact => "exact",
        }
    }
}

/// Deterministic work counters. Fields an algorithm does not use stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    /// Points drawn by the crude estimator.
    pub crude_samples: u64,
    /// Points drawn from the touched grid cells.
    pub candidates: u64,
    /// Points of the per-class p-samples `S_t`.
    pub points_sampled: u64,
    /// Points surviving the later-class filter, `sum_t |S'_t|`.
    pub kept: u64,
    pub appears_queries: u64,
    pub in_class_queries: u64,
    pub node_visits: u64,
    pub vol_queries: u64,
    pub sample_queries: u64,
    pub contains_queries: u64,
}

impl Counters {
    pub fn index_queries(&self) -> u64 {
        self.appears_queries + self.in_class_queries
    }

    pub fn model_queries(&self) -> u64 {
        self.vol_queries + self.sample_queries + self.contains_queries
    }

    /// Sampled points plus queries of either kind.
    pub fn work(&self) -> u64 {
        self.crude_samples + self.candidates + self.index_queries() + self.model_queries()
    }

    fn absorb(&mut self, o: &Counters) {
        self.crude_samples += o.crude_samples;
        self.candidates += o.candidates;
        self.points_sampled += o.points_sampled;
        self.kept += o.kept;
        self.appears_queries += o.appears_queries;
        self.in_class_queries += o.in_class_queries;
        self.node_visits += o.node_visits;
        self.vol_queries += o.vol_queries;
        self.sample_queries += o.sample_queries;
        self.contains_queries += o.contains_queries;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub schema: &'static str,
    pub algorithm: Algorithm,
    pub estimate: f64,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub stream: u64,
    pub n: usize,
    pub d: usize,
    pub dropped: usize,
    pub classes: Option<usize>,
    pub crude_estimate: Option<f64>,
    pub density: Option<f64>,
    pub counters: Counters,
    pub repetitions: Option<usize>,
    pub completed: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub run_estimates: Vec<f64>,
    pub aborted: bool,
    pub elapsed_ms: Option<f64>,
}

impl EstimateReport {
    fn blank(algorithm: Algorithm, stream: &RandomStream, n: usize, d: usize) -> Self {
        EstimateReport {
            schema: REPORT_SCHEMA,
            algorithm,
            estimate: 0.0,
            epsilon: None,
            seed: stream.seed(),
            stream: stream.stream_id(),
            n,
            d,
            dropped: 0,
            classes: None,
            crude_estimate: None,
            density: None,
            counters: Counters::default(),
            repetitions: None,
            completed: None,
            run_estimates: Vec::new(),
            aborted: false,
            elapsed_ms: None,
        }
    }
}

/// Wall clock where the platform has one.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn elapsed_ms(&self) -> Option<f64> {
        #[cfg(not(target_arch = "wasm32"))]
        {
            Some(self.0.elapsed().as_secs_f64() * 1e3)
        }
        #[cfg(target_arch = "wasm32")]
        {
            None
        }
    }
}

/// `S_j = Vol(O_1) + ... + Vol(O_j)` for `j = 0..=n`.
#[derive(Debug, Clone)]
pub struct PrefixVolumes(Vec<f64>);

impl PrefixVolumes {
    pub fn new<I: IntoIterator<Item = f64>>(volumes: I) -> Self {
        let mut sums = vec![0.0];
        let mut acc = 0.0;
        for v in volumes {
            acc += v;
            sums.push(acc);
        }
        PrefixVolumes(sums)
    }

    pub fn of_boxes(boxes: &[AlignedBox]) -> Self {
        Self::new(boxes.iter().map(AlignedBox::volume))
    }

    pub fn sums(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        *self.0.last().unwrap()
    }

    /// Smallest label `i >= 1` with `u <= S_i / S_n`, for `u` in `(0, 1]`.
    pub fn pick(&self, u: f64) -> usize {
        let target = u * self.total();
        let n = self.0.len() - 1;
        let i = self.0[1..].partition_point(|&s| s < target) + 1;
        i.min(n)
    }
}

fn check_epsilon(eps: f64) -> Result<(), EstimateError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(EstimateError::InvalidEpsilon(eps))
    }
}

fn over_budget(counters: &Counters, budget: Option<u64>) -> bool {
    budget.is_some_and(|b| counters.work() > b)
}

/// One pass of the crude estimator; `None` when the budget ran out.
fn crude_pass(
    boxes: &[AlignedBox],
    prefix: &PrefixVolumes,
    appears: &AppearsIndex,
    stream: &mut RandomStream,
    counters: &mut Counters,
    budget: Option<u64>,
) -> Result<Option<f64>, EstimateError> {
    let total = prefix.total();
    if total <= 0.0 {
        return Err(EstimateError::ZeroTotalVolume);
    }
    let rounds = CRUDE_ROUNDS_PER_BOX * boxes.len();
    let mut hits = 0u64;
    for _ in 0..rounds {
        let i = prefix.pick(stream.uniform_open_closed());
        let b = &boxes[i - 1];
        let x = stream.point_in_box(b.lo(), b.hi());
        counters.crude_samples += 1;
        counters.appears_queries += 1;
        if !appears.appears_counted(&x, i + 1, &mut counters.node_visits)? {
            hits += 1;
        }
        if over_budget(counters, budget) {
            return Ok(None);
        }
    }
    Ok(Some(hits as f64 / rounds as f64 * total))
}

/// Crude 2-approximation over boxes labeled in slice order; `appears` must
/// be built over the same slice.
pub fn crude_estimate(
    boxes: &[AlignedBox],
    appears: &AppearsIndex,
    stream: &mut RandomStream,
) -> Result<f64, EstimateError> {
    let prefix = PrefixVolumes::of_boxes(boxes);
    let mut counters = Counters::default();
    Ok(crude_pass(boxes, &prefix, appears, stream, &mut counters, None)?.expect("no budget"))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EstimateOptions {
    /// Abort once [`Counters::work`] exceeds this.
    pub work_budget: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BoostOptions {
    /// Fixed per-run budget replacing ten times the running median.
    pub budget_override: Option<u64>,
}

/// A point of the final p-sample together with the class that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct KeptPoint {
    pub class_id: usize,
    pub point: Point,
}

/// Classes, both indexes and the class cell sets, built once and shared by
/// any number of estimator runs.
pub struct PreparedInstance {
    partition: ClassPartition,
    prefix: PrefixVolumes,
    appears: AppearsIndex,
    classes: ClassIndex,
    cells: Vec<ClassCells>,
}

impl PreparedInstance {
    pub fn new(boxes: &[AlignedBox]) -> Result<Self, EstimateError> {
        let partition = ClassPartition::new(boxes)?;
        let appears = AppearsIndex::build(partition.boxes())?;
        let classes = ClassIndex::build(&partition)?;
        let cells = (0..partition.num_classes())
            .map(|t| ClassCells::build(&partition, t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PreparedInstance {
            prefix: PrefixVolumes::of_boxes(partition.boxes()),
            partition,
            appears,
            classes,
            cells,
        })
    }

    pub fn partition(&self) -> &ClassPartition {
        &self.partition
    }

    pub fn appears_index(&self) -> &AppearsIndex {
        &self.appears
    }

    pub fn class_index(&self) -> &ClassIndex {
        &self.classes
    }

    pub fn class_cells(&self, t: usize) -> &ClassCells {
        &self.cells[t]
    }

    fn blank(&self, algorithm: Algorithm, stream: &RandomStream) -> EstimateReport {
        let mut r = EstimateReport::blank(algorithm, stream, self.partition.len(), self.partition.dim());
        r.dropped = self.partition.dropped().len();
        r.classes = Some(self.partition.num_classes());
        r
    }

    /// The crude estimator as a standalone algorithm.
    pub fn crude(&self, stream: &mut RandomStream) -> Result<EstimateReport, EstimateError> {
        let clock = Stopwatch::start();
        let mut report = self.blank(Algorithm::Crude, stream);
        let v = crude_pass(
            self.partition.boxes(),
            &self.prefix,
            &self.appears,
            stream,
            &mut report.counters,
            None,
        )?
        .expect("no budget");
        report.estimate = v;
        report.crude_estimate = Some(v);
        report.elapsed_ms = clock.elapsed_ms();
        Ok(report)
    }

    /// One run of the (1 + ε) estimator.
    pub fn estimate(
        &self,
        epsilon: f64,
        stream: &mut RandomStream,
        opts: EstimateOptions,
    ) -> Result<EstimateReport, EstimateError> {
        self.run(epsilon, stream, opts, None)
    }

    /// As [`estimate`](Self::estimate), also returning the final p-sample.
    pub fn estimate_with_points(
        &self,
        epsilon: f64,
        stream: &mut RandomStream,
        opts: EstimateOptions,
    ) -> Result<(EstimateReport, Vec<KeptPoint>), EstimateError> {
        let mut kept = Vec::new();
        let report = self.run(epsilon, stream, opts, Some(&mut kept))?;
        Ok((report, kept))
    }

    fn run(
        &self,
        epsilon: f64,
        stream: &mut RandomStream,
        opts: EstimateOptions,
        mut sink: Option<&mut Vec<KeptPoint>>,
    ) -> Result<EstimateReport, EstimateError> {
        check_epsilon(epsilon)?;
        let clock = Stopwatch::start();
        let mut report = self.blank(Algorithm::Main, stream);
        report.epsilon = Some(epsilon);
        let budget = opts.work_budget;
        let boxes = self.partition.boxes();
        let c = &mut report.counters;

        let mut crude = crude_pass(boxes, &self.prefix, &self.appears, stream, c, budget)?;
        if crude == Some(0.0) {
            // Unreachable for positive volumes: the last box always counts.
            let mut retry = stream.derive(0x5eed);
            crude = crude_pass(boxes, &self.prefix, &self.appears, &mut retry, c, budget)?;
            if crude == Some(0.0) {
                return Err(EstimateError::CrudeEstimateZero);
            }
        }
        let Some(crude) = crude else {
            report.aborted = true;
            report.elapsed_ms = clock.elapsed_ms();
            return Ok(report);
        };
        report.crude_estimate = Some(crude);
        let p = 8.0 / (epsilon * epsilon * crude);
        report.density = Some(p);

        for (t, cells) in self.cells.iter().enumerate() {
            let next_label = self.partition.last_label(t) + 1;
            let k = poisson(stream, p * cells.volume())?;
            for _ in 0..k {
                let x = cells.draw(stream);
                c.candidates += 1;
                c.in_class_queries += 1;
                let inside = self.classes.in_class_counted(&x, t, &mut c.node_visits)?;
                if inside {
                    c.points_sampled += 1;
                    c.appears_queries += 1;
                    let later = self.appears.appears_counted(&x, next_label, &mut c.node_visits)?;
                    if !later {
                        c.kept += 1;
                        if let Some(sink) = sink.as_deref_mut() {
                            sink.push(KeptPoint {
                                class_id: t,
                                point: Point(x),
                            });
                        }
                    }
                }
                if over_budget(c, budget) {
                    report.aborted = true;
                    report.elapsed_ms = clock.elapsed_ms();
                    return Ok(report);
                }
            }
        }
        report.estimate = report.counters.kept as f64 / p;
        report.elapsed_ms = clock.elapsed_ms();
        Ok(report)
    }

    /// Median of `repetitions` runs. Run 0 uses `stream`; run `r` uses
    /// `stream.derive(r)`. Unless overridden, each run after the first is
    /// aborted once its work exceeds ten times the median work of the runs
    /// completed so far.
    pub fn boosted(
        &self,
        epsilon: f64,
        stream: &mut RandomStream,
        repetitions: usize,
        opts: BoostOptions,
    ) -> Result<EstimateReport, EstimateError> {
        check_epsilon(epsilon)?;
        if repetitions == 0 || repetitions.is_multiple_of(2) {
            return Err(EstimateError::InvalidRepetitions(repetitions));
        }
        let clock = Stopwatch::start();
        let mut report = self.blank(Algorithm::Boosted, stream);
        report.epsilon = Some(epsilon);
        report.repetitions = Some(repetitions);
        let mut works: Vec<u64> = Vec::new();
        let mut estimates: Vec<f64> = Vec::new();
        for r in 0..repetitions {
            let work_budget = opts
                .budget_override
                .or_else(|| lower_median(&works).map(|m| BUDGET_FACTOR * m));
            let run_opts = EstimateOptions { work_budget };
            let run = if r == 0 {
                self.estimate(epsilon, stream, run_opts)?
            } else {
                self.estimate(epsilon, &mut stream.derive(r as u64), run_opts)?
            };
            report.counters.absorb(&run.counters);
            if !run.aborted {
                works.push(run.counters.work());
                estimates.push(run.estimate);
                if report.crude_estimate.is_none() {
                    report.crude_estimate = run.crude_estimate;
                    report.density = run.density;
                }
            }
        }
        if estimates.is_empty() {
            return Err(EstimateError::AllAborted(repetitions));
        }
        report.estimate = median(&estimates);
        report.completed = Some(estimates.len());
        report.run_estimates = estimates;
        report.elapsed_ms = clock.elapsed_ms();
        Ok(report)
    }
}

fn lower_median(xs: &[u64]) -> Option<u64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// One run of the (1 + ε) estimator on raw boxes.
pub fn main_estimate(
    boxes: &[AlignedBox],
    epsilon: f64,
    stream: &mut RandomStream,
    opts: EstimateOptions,
) -> Result<EstimateReport, EstimateError> {
    PreparedInstance::new(boxes)?.estimate(epsilon, stream, opts)
}

pub fn boosted_estimate(
    boxes: &[AlignedBox],
    epsilon: f64,
    stream: &mut RandomStream,
    repetitions: usize,
    opts: BoostOptions,
) -> Result<EstimateReport, EstimateError> {
    PreparedInstance::new(boxes)?.boosted(epsilon, stream, repetitions, opts)
}

/// Exact union volume wrapped in a report.
pub fn exact_report(boxes: &[AlignedBox], cap: u128) -> Result<EstimateReport, EstimateError> {
    let clock = Stopwatch::start();
    let d = boxes.first().map_or(0, AlignedBox::dim);
    let mut report = EstimateReport::blank(Algorithm::Exact, &RandomStream::new(0, 0), boxes.len(), d);
    report.dropped = boxes.iter().filter(|b| b.is_degenerate()).count();
    report.n -= report.dropped;
    report.estimate = exact_volume_with_cap(boxes, cap)?;
    report.elapsed_ms = clock.elapsed_ms();
    Ok(report)
}

/// Query-model coverage estimator with geometric stopping.
///
/// Each trial draws an object `i` with probability `Vol(O_i) / S_n`, a point
/// `x` uniform in it, then uniformly random objects until one contains `x`;
/// with `D` draws the trial yields `S_n D / n`, an unbiased estimate of the
/// union volume. Trials repeat until the query budget (default
/// `ceil(8 n / ε^2)`, counting the initial volume queries) is spent; an
/// unfinished trial is discarded.
pub fn klm_baseline<O: QueryObject>(
    session: &mut QuerySession<'_, O>,
    epsilon: f64,
    stream: &mut RandomStream,
    budget: Option<u64>,
) -> Result<EstimateReport, EstimateError> {
    check_epsilon(epsilon)?;
    let n = session.len();
    if n == 0 {
        return Err(EstimateError::NoObjects);
    }
    let clock = Stopwatch::start();
    let budget = budget.unwrap_or_else(|| (8.0 * n as f64 / (epsilon * epsilon)).ceil() as u64);
    let mut report = EstimateReport::blank(Algorithm::Klm, stream, n, session.dim());
    report.epsilon = Some(epsilon);

    let start = session.snapshot().total;
    let mut used = 0u64;
    let mut vols = Vec::with_capacity(n);
    for i in 0..n {
        if used >= budget {
            return Err(EstimateError::NoCompletedTrials(budget));
        }
        vols.push(session.vol(i));
        used += 1;
    }
    let prefix = PrefixVolumes::new(vols);
    let total = prefix.total();
    if total <= 0.0 {
        return Err(EstimateError::ZeroTotalVolume);
    }

    let mut trials = 0u64;
    let mut draws = 0u64;
    'trials: while used < budget {
        let i = prefix.pick(stream.uniform_open_closed()) - 1;
        let x = session.sample(i, stream);
        used += 1;
        let mut d = 0u64;
        loop {
            if used >= budget {
                break 'trials;
            }
            let j = stream.index(n);
            used += 1;
            d += 1;
            if session.contains(j, &x) {
                break;
            }
        }
        trials += 1;
        draws += d;
    }
    if trials == 0 {
        return Err(EstimateError::NoCompletedTrials(budget));
    }
    let totals = session.snapshot();
    debug_assert_eq!(totals.total - start, used);
    report.counters.vol_queries = totals.vol;
    report.counters.sample_queries = totals.sample;
    report.counters.contains_queries = totals.contains;
    report.estimate = total * (draws as f64 / trials as f64) / n as f64;
    report.completed = Some(trials as usize);
    report.elapsed_ms = clock.elapsed_ms();
    Ok(report)
}
