//! Instance files and random instance generators.
//!
//! File format: a header line `d n`, then `n` lines of `2d` numbers
//! `a_1 b_1 ... a_d b_d` giving the interval `[a_k, b_k]` per axis. Blank
//! lines and lines starting with `#` are ignored. Numbers are written in
//! shortest round-trip form, so a written file parses back to the same bits.

use crate::classify::log2_clamped;
use crate::geometry::{AlignedBox, GeometryError};
use crate::lowerbound::embed_discrete;
use crate::sampling::RandomStream;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty instance file")]
    Empty,
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Geometry { line: usize, source: GeometryError },
    #[error("header declares {expected} boxes, found {found}")]
    CountMismatch { expected: usize, found: usize },
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

pub fn parse_instance(text: &str) -> Result<Vec<AlignedBox>, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(ParseError::Empty)?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(syntax(hline, "header must be `d n`"));
    }
    let d = usize::from_str(head[0]).map_err(|e| syntax(hline, format!("bad dimension: {e}")))?;
    let n = usize::from_str(head[1]).map_err(|e| syntax(hline, format!("bad box count: {e}")))?;
    if d == 0 {
        return Err(syntax(hline, "dimension must be positive"));
    }
    let mut boxes = Vec::with_capacity(n.min(1 << 20));
    for (line, body) in lines {
        let nums = body
            .split_whitespace()
            .map(|t| f64::from_str(t).map_err(|_| syntax(line, format!("not a number: {t:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if nums.len() != 2 * d {
            return Err(syntax(line, format!("expected {} numbers, found {}", 2 * d, nums.len())));
        }
        let pairs: Vec<(f64, f64)> = nums.chunks(2).map(|c| (c[0], c[1])).collect();
        let b = AlignedBox::from_intervals(&pairs).map_err(|source| ParseError::Geometry { line, source })?;
        boxes.push(b);
    }
    if boxes.len() != n {
        return Err(ParseError::CountMismatch { expected: n, found: boxes.len() });
    }
    Ok(boxes)
}

/// Writes boxes in the instance format. All boxes must share one dimension.
pub fn write_instance(boxes: &[AlignedBox]) -> String {
    let d = boxes.first().map_or(1, |b| b.dim());
    let mut out = format!("{d} {}\n", boxes.len());
    for b in boxes {
        let mut first = true;
        for k in 0..b.dim() {
            for v in [b.lo()[k], b.hi()[k]] {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v:?}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Corners uniform in `[0, 1)^d`, sides uniform in `(0, 1/2]`.
    Uniform,
    /// Cubes with side `2^u`, `u` uniform in `[-4, 0]`.
    Cubes,
    /// Boxes spread over classes whose axis-0 exponents are at least
    /// `4 log₂ n + 1` apart, so no two classes are similar.
    DissimilarClasses,
    /// Unit cubes on random lattice points.
    Lattice,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 4] = [
        InstanceKind::Uniform,
        InstanceKind::Cubes,
        InstanceKind::DissimilarClasses,
        InstanceKind::Lattice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::Uniform => "uniform",
            InstanceKind::Cubes => "cubes",
            InstanceKind::DissimilarClasses => "dissimilar-classes",
            InstanceKind::Lattice => "lattice",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("unknown instance kind {0:?}")]
    UnknownKind(String),
    #[error("need n >= 1 and d >= 1, got n = {n}, d = {d}")]
    InvalidSize { n: usize, d: usize },
}

impl FromStr for InstanceKind {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InstanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GenerateError::UnknownKind(s.to_string()))
    }
}

/// Number of classes used by [`InstanceKind::DissimilarClasses`].
pub const DISSIMILAR_CLASSES: usize = 3;

pub fn generate(kind: InstanceKind, n: usize, d: usize, seed: u64) -> Result<Vec<AlignedBox>, GenerateError> {
    if n == 0 || d == 0 {
        return Err(GenerateError::InvalidSize { n, d });
    }
    let mut s = RandomStream::new(seed, 0x1a57_a9ce);
    let boxes = match kind {
        InstanceKind::Uniform => (0..n)
            .map(|_| {
                let lo: Vec<f64> = (0..d).map(|_| s.uniform()).collect();
                let hi = lo.iter().map(|&a| a + 0.5 * s.uniform_open_closed()).collect();
                AlignedBox::new(lo, hi).expect("positive sides")
            })
            .collect(),
        InstanceKind::Cubes => (0..n)
            .map(|_| {
                let side = (-4.0 * s.uniform()).exp2();
                let lo: Vec<f64> = (0..d).map(|_| s.uniform()).collect();
                let hi = lo.iter().map(|&a| a + side).collect();
                AlignedBox::new(lo, hi).expect("positive sides")
            })
            .collect(),
        InstanceKind::DissimilarClasses => {
            let gap = (4.0 * log2_clamped(n)).floor() as i32 + 1;
            let classes = DISSIMILAR_CLASSES.min(n);
            (0..n)
                .map(|i| {
                    // Axis 0 uses few mantissa bits so `hi - lo` keeps its exponent.
                    let unit = (-((i % classes) as i32 * gap) as f64).exp2();
                    let w0 = unit * (1.0 + s.index(1024) as f64 / 1024.0);
                    let mut lo: Vec<f64> = (0..d).map(|_| s.uniform()).collect();
                    lo[0] = unit * s.index(n) as f64;
                    let hi = lo
                        .iter()
                        .enumerate()
                        .map(|(k, &a)| if k == 0 { a + w0 } else { a + 0.25 + 0.25 * s.uniform() })
                        .collect();
                    AlignedBox::new(lo, hi).expect("positive sides")
                })
                .collect()
        }
        InstanceKind::Lattice => {
            let m = ((2 * n) as f64).powf(1.0 / d as f64).ceil().max(2.0) as usize;
            let pts: Vec<Vec<i64>> = (0..n).map(|_| (0..d).map(|_| s.index(m) as i64).collect()).collect();
            embed_discrete(&pts)
        }
    };
    Ok(boxes)
}
