//! Hard instances for query-model union estimation.
//!
//! Two hidden sign vectors `x, y ∈ {-1, +1}^ℓ` are spread over `2n` lattice
//! point sets
//!
//! ```text
//! X_i = R ∪ {(jn + π_j(i), x_j) : j ∈ [ℓ]}
//! Y_i = R ∪ {(jn + τ_j(i), y_j) : j ∈ [ℓ]}
//! R   = {(n + 1, 0), ..., (nℓ + n, 0)}
//! ```
//!
//! whose union has `5nℓ/2 - n⟨x, y⟩/2` points. The oracle below answers
//! volume, sample and containment queries on them while logging every read
//! of a hidden bit, so experiments can compare query counts against bit
//! accesses.
//!
//! Two deliberate departures from a literal transcription of the answering
//! procedure:
//! - containment compares the queried height against `x_j` (the bit of the
//!   block the point falls in), not `x_i`;
//! - the block of abscissa `a` is `⌊(a - 1) / n⌋`, so shifts run over
//!   `1..=n`. With `⌊a / n⌋` a point whose shift is `n` would land in the
//!   next block with shift 0 and be reported absent.

use crate::geometry::{AlignedBox, Point};
use crate::querymodel::{BitAccess, HiddenVector, QueryObject};
use crate::sampling::RandomStream;
use serde::Serialize;
use std::cell::RefCell;
use std::collections::HashSet;
use thiserror::Error;

/// Closed-form union sizes are refused above this `n ℓ`.
pub const MAX_BLOCK_POINTS: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LowerBoundError {
    #[error("need n >= 1 and ℓ >= 1, got n = {n}, ℓ = {ell}")]
    InvalidSize { n: usize, ell: usize },
    #[error("ε = {0} gives an empty block count")]
    EpsilonTooLarge(f64),
    #[error("hidden vectors must have equal length with entries ±1")]
    InvalidVectors,
    #[error("object index {0} outside 1..=n")]
    ObjectOutOfRange(usize),
    #[error("query point {0:?} is not a lattice point of Z^2")]
    MalformedPoint(Vec<f64>),
    #[error("n ℓ = {0} exceeds the overflow guard")]
    Overflow(u64),
    #[error("probe ({i}, {s}) outside [n] x [n]")]
    MalformedProbe { i: usize, s: usize },
    #[error("game length {m} exceeds n = {n}")]
    TooManyRounds { m: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GapSign {
    Positive,
    Negative,
}

/// `ℓ = ⌊1 / (36 ε²)⌋`.
pub fn ell_for_epsilon(epsilon: f64) -> Result<usize, LowerBoundError> {
    let ell = (1.0 / (36.0 * epsilon * epsilon)).floor();
    if ell < 1.0 || !ell.is_finite() {
        return Err(LowerBoundError::EpsilonTooLarge(epsilon));
    }
    Ok(ell as usize)
}

/// The ε an ℓ-block instance is built for: `1 / (6 √ℓ)`.
pub fn epsilon_for_ell(ell: usize) -> f64 {
    1.0 / (6.0 * (ell as f64).sqrt())
}

/// Inner product of the requested sign with the smallest magnitude that is
/// at least `⌈√ℓ⌉` and has the parity of `ℓ`.
pub fn gap_target(ell: usize, sign: GapSign) -> i64 {
    let mut v = (ell as f64).sqrt().ceil() as i64;
    while v * v < ell as i64 {
        v += 1;
    }
    while (v - 1) * (v - 1) >= ell as i64 && v > 1 {
        v -= 1;
    }
    if (v - ell as i64) % 2 != 0 {
        v += 1;
    }
    match sign {
        GapSign::Positive => v,
        GapSign::Negative => -v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Vol,
    Sample,
    Contains(i64, i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Vol(u64),
    Point(i64, i64),
    Contains(bool),
}

#[derive(Debug)]
pub struct HiddenInstance {
    n: usize,
    ell: usize,
    x: Vec<i8>,
    y: Vec<i8>,
    // pi[j - 1][i - 1] = π_j(i), values in 1..=n.
    pi: Vec<Vec<u32>>,
    tau: Vec<Vec<u32>>,
    log: RefCell<Vec<BitAccess>>,
    total_accesses: RefCell<u64>,
}

fn random_permutation(n: usize, stream: &mut RandomStream) -> Vec<u32> {
    let mut p: Vec<u32> = (1..=n as u32).collect();
    stream.shuffle(&mut p);
    p
}

impl HiddenInstance {
    /// Vectors at the edge of the gap: `⟨x, y⟩ = gap_target(ℓ, sign)`.
    pub fn build(n: usize, ell: usize, sign: GapSign, stream: &mut RandomStream) -> Result<Self, LowerBoundError> {
        if n == 0 || ell == 0 {
            return Err(LowerBoundError::InvalidSize { n, ell });
        }
        let target = gap_target(ell, sign);
        let x: Vec<i8> = (0..ell).map(|_| if stream.coin(0.5) { 1 } else { -1 }).collect();
        let flips = ((ell as i64 - target) / 2) as usize;
        let mut order: Vec<usize> = (0..ell).collect();
        stream.shuffle(&mut order);
        let mut y = x.clone();
        for &j in &order[..flips] {
            y[j] = -y[j];
        }
        Self::from_vectors(n, x, y, stream)
    }

    /// Independent uniform vectors, no gap promise.
    pub fn random(n: usize, ell: usize, stream: &mut RandomStream) -> Result<Self, LowerBoundError> {
        if n == 0 || ell == 0 {
            return Err(LowerBoundError::InvalidSize { n, ell });
        }
        let draw = |s: &mut RandomStream| (0..ell).map(|_| if s.coin(0.5) { 1 } else { -1 }).collect::<Vec<i8>>();
        let x = draw(stream);
        let y = draw(stream);
        Self::from_vectors(n, x, y, stream)
    }

    /// Given vectors, fresh uniform permutations.
    pub fn from_vectors(n: usize, x: Vec<i8>, y: Vec<i8>, stream: &mut RandomStream) -> Result<Self, LowerBoundError> {
        let ell = x.len();
        if n == 0 || ell == 0 {
            return Err(LowerBoundError::InvalidSize { n, ell });
        }
        if y.len() != ell || x.iter().chain(&y).any(|&b| b != 1 && b != -1) {
            return Err(LowerBoundError::InvalidVectors);
        }
        let pi = (0..ell).map(|_| random_permutation(n, stream)).collect();
        let tau = (0..ell).map(|_| random_permutation(n, stream)).collect();
        Ok(HiddenInstance {
            n,
            ell,
            x,
            y,
            pi,
            tau,
            log: RefCell::new(Vec::new()),
            total_accesses: RefCell::new(0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn inner_product(&self) -> i64 {
        self.x.iter().zip(&self.y).map(|(&a, &b)| (a * b) as i64).sum()
    }

    /// Hidden-bit reads so far, including ones already drained.
    pub fn bit_accesses(&self) -> u64 {
        *self.total_accesses.borrow()
    }

    fn read_bit(&self, side: Side, j: usize) -> i8 {
        let (vector, bits) = match side {
            Side::X => (HiddenVector::X, &self.x),
            Side::Y => (HiddenVector::Y, &self.y),
        };
        self.log.borrow_mut().push(BitAccess { vector, index: j });
        *self.total_accesses.borrow_mut() += 1;
        bits[j - 1]
    }

    fn perm(&self, side: Side, j: usize, i: usize) -> i64 {
        let p = match side {
            Side::X => &self.pi,
            Side::Y => &self.tau,
        };
        p[j - 1][i - 1] as i64
    }

    fn in_r(&self, a: i64, b: i64) -> bool {
        let n = self.n as i64;
        b == 0 && n < a && a <= n * self.ell as i64 + n
    }

    /// Answers one query on `X_i` or `Y_i` (`i` is 1-based).
    pub fn answer(&self, side: Side, i: usize, q: Query, stream: &mut RandomStream) -> Result<Answer, LowerBoundError> {
        if i == 0 || i > self.n {
            return Err(LowerBoundError::ObjectOutOfRange(i));
        }
        let n = self.n as i64;
        Ok(match q {
            Query::Vol => Answer::Vol(((self.n + 1) * self.ell) as u64),
            Query::Sample => {
                let j = 1 + stream.index(self.ell);
                let s = 1 + stream.index(self.n) as i64;
                if !stream.coin(1.0 / (self.n as f64 + 1.0)) {
                    Answer::Point(j as i64 * n + s, 0)
                } else {
                    let bit = self.read_bit(side, j);
                    Answer::Point(j as i64 * n + self.perm(side, j, i), bit as i64)
                }
            }
            Query::Contains(a, b) => {
                if self.in_r(a, b) {
                    return Ok(Answer::Contains(true));
                }
                let j = (a - 1).div_euclid(n);
                let s = a - j * n;
                if j < 1 || j > self.ell as i64 || self.perm(side, j as usize, i) != s {
                    return Ok(Answer::Contains(false));
                }
                Answer::Contains(self.read_bit(side, j as usize) as i64 == b)
            }
        })
    }

    /// Containment for an arbitrary point; non-lattice points are an error.
    pub fn contains_point(&self, side: Side, i: usize, p: &Point) -> Result<bool, LowerBoundError> {
        let c = p.coords();
        let lattice = c.len() == 2 && c.iter().all(|v| v.fract() == 0.0 && v.abs() < 9.0e15);
        if !lattice {
            return Err(LowerBoundError::MalformedPoint(c.to_vec()));
        }
        match self.answer(side, i, Query::Contains(c[0] as i64, c[1] as i64), &mut RandomStream::new(0, 0))? {
            Answer::Contains(hit) => Ok(hit),
            _ => unreachable!(),
        }
    }

    /// All points of `X_i` or `Y_i`, read without logging.
    pub fn object_points(&self, side: Side, i: usize) -> Vec<(i64, i64)> {
        let n = self.n as i64;
        let bits = match side {
            Side::X => &self.x,
            Side::Y => &self.y,
        };
        let mut pts: Vec<(i64, i64)> = (n + 1..=n * self.ell as i64 + n).map(|a| (a, 0)).collect();
        for j in 1..=self.ell {
            pts.push((j as i64 * n + self.perm(side, j, i), bits[j - 1] as i64));
        }
        pts
    }

    /// `5nℓ/2 - n⟨x, y⟩/2`.
    pub fn union_cardinality(&self) -> Result<u64, LowerBoundError> {
        let nl = (self.n as u64).saturating_mul(self.ell as u64);
        if nl > MAX_BLOCK_POINTS {
            return Err(LowerBoundError::Overflow(nl));
        }
        let n = self.n as i64;
        let twice = 5 * n * self.ell as i64 - n * self.inner_product();
        debug_assert_eq!(twice % 2, 0);
        Ok((twice / 2) as u64)
    }

    /// Union size by building the point set.
    pub fn materialized_union_cardinality(&self) -> usize {
        let mut all = HashSet::new();
        for side in [Side::X, Side::Y] {
            for i in 1..=self.n {
                all.extend(self.object_points(side, i));
            }
        }
        all.len()
    }

    /// The `2n` objects `X_1..X_n, Y_1..Y_n` as query-model handles.
    pub fn objects(&self) -> Vec<HiddenObject<'_>> {
        [Side::X, Side::Y]
            .into_iter()
            .flat_map(|side| (1..=self.n).map(move |i| HiddenObject { inst: self, side, i }))
            .collect()
    }
}

/// `X_i` or `Y_i` of a [`HiddenInstance`].
#[derive(Debug, Clone, Copy)]
pub struct HiddenObject<'a> {
    inst: &'a HiddenInstance,
    side: Side,
    i: usize,
}

impl QueryObject for HiddenObject<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn vol(&self) -> f64 {
        ((self.inst.n + 1) * self.inst.ell) as f64
    }

    fn sample(&self, stream: &mut RandomStream) -> Point {
        match self.inst.answer(self.side, self.i, Query::Sample, stream) {
            Ok(Answer::Point(a, b)) => Point(vec![a as f64, b as f64]),
            _ => unreachable!("index validated at construction"),
        }
    }

    fn contains(&self, x: &Point) -> bool {
        self.inst.contains_point(self.side, self.i, x).unwrap_or(false)
    }

    fn drain_bit_accesses(&self, out: &mut Vec<BitAccess>) {
        out.append(&mut self.inst.log.borrow_mut());
    }
}

/// `(5nℓ/2 - ρ) 2/n`: the inner product implied by an estimate `ρ` of the
/// union size. Within `±6εℓ` of the truth whenever `ρ` is a
/// (1 + ε)-approximation.
pub fn recover_inner_product(rho: f64, n: usize, ell: usize) -> f64 {
    (2.5 * n as f64 * ell as f64 - rho) * 2.0 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Random,
    /// `Probe(i, s)`: is `π(i) = s`? Both 1-based.
    Probe(usize, usize),
}

/// Chooses the next request from the round number and the transcript.
pub trait GameStrategy {
    fn next(&mut self, round: usize, transcript: &[(Request, bool)]) -> Request;
}

impl<F: FnMut(usize, &[(Request, bool)]) -> Request> GameStrategy for F {
    fn next(&mut self, round: usize, transcript: &[(Request, bool)]) -> Request {
        self(round, transcript)
    }
}

pub struct AllRandom;

impl GameStrategy for AllRandom {
    fn next(&mut self, _: usize, _: &[(Request, bool)]) -> Request {
        Request::Random
    }
}

/// Plays `m` rounds against a secret uniform permutation of `[n]`. Returns
/// whether any answer was "yes".
pub fn mini_game(
    n: usize,
    m: usize,
    strategy: &mut dyn GameStrategy,
    stream: &mut RandomStream,
) -> Result<bool, LowerBoundError> {
    if m > n {
        return Err(LowerBoundError::TooManyRounds { m, n });
    }
    if m == 0 {
        return Ok(false);
    }
    let pi = random_permutation(n, stream);
    let mut transcript = Vec::with_capacity(m);
    for round in 0..m {
        let req = strategy.next(round, &transcript);
        let yes = match req {
            Request::Random => stream.coin(1.0 / (n as f64 + 1.0)),
            Request::Probe(i, s) => {
                if i == 0 || i > n || s == 0 || s > n {
                    return Err(LowerBoundError::MalformedProbe { i, s });
                }
                pi[i - 1] as usize == s
            }
        };
        if yes {
            return Ok(true);
        }
        transcript.push((req, yes));
    }
    Ok(false)
}

/// Unit cube `[x_k, x_k + 1]` per lattice point.
pub fn embed_discrete(points: &[Vec<i64>]) -> Vec<AlignedBox> {
    points
        .iter()
        .map(|p| {
            let lo: Vec<f64> = p.iter().map(|&c| c as f64).collect();
            let hi = lo.iter().map(|c| c + 1.0).collect();
            AlignedBox::new(lo, hi).expect("unit cube")
        })
        .collect()
}
