//! Points, closed axis-aligned boxes and the dyadic grid cells used by the
//! class sampler.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("box must have at least one dimension")]
    ZeroDimension,
    #[error("non-finite coordinate in dimension {0}")]
    NonFinite(usize),
    #[error("inverted interval in dimension {dim}: lo = {lo} > hi = {hi}")]
    Inverted { dim: usize, lo: f64, hi: f64 },
    #[error("side {side} in dimension {dim} is outside [2^{exponent}, 2^{})", exponent + 1)]
    OutsideDyadicWindow { dim: usize, side: f64, exponent: i32 },
    #[error("cell index overflow in dimension {0}")]
    CellOverflow(usize),
}

/// A point in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite(k));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Closed box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AlignedBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        for k in 0..lo.len() {
            if !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(GeometryError::NonFinite(k));
            }
            if lo[k] > hi[k] {
                return Err(GeometryError::Inverted {
                    dim: k,
                    lo: lo[k],
                    hi: hi[k],
                });
            }
        }
        Ok(AlignedBox { lo, hi })
    }

    /// Builds a box from `(lo, hi)` pairs, one per dimension.
    pub fn from_intervals(intervals: &[(f64, f64)]) -> Result<Self, GeometryError> {
        let (lo, hi) = intervals.iter().copied().unzip();
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    pub fn volume(&self) -> f64 {
        box_volume(self)
    }

    pub fn is_degenerate(&self) -> bool {
        (0..self.dim()).any(|k| self.side(k) <= 0.0)
    }

    pub fn contains(&self, x: &Point) -> Result<bool, GeometryError> {
        box_contains(self, x)
    }

    /// Containment without the dimension check; callers guarantee `x.len() == dim`.
    #[inline]
    pub fn contains_coords(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(x)
            .all(|((&lo, &hi), &c)| lo <= c && c <= hi)
    }
}

pub fn box_volume(b: &AlignedBox) -> f64 {
    (0..b.dim()).map(|k| b.side(k)).product()
}

/// Closed-box containment: boundary points are inside.
pub fn box_contains(b: &AlignedBox, x: &Point) -> Result<bool, GeometryError> {
    if b.dim() != x.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: b.dim(),
            got: x.dim(),
        });
    }
    Ok(b.contains_coords(x.coords()))
}

pub fn box_intersection_volume(a: &AlignedBox, b: &AlignedBox) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let mut vol = 1.0;
    for k in 0..a.dim() {
        let lo = a.lo[k].max(b.lo[k]);
        let hi = a.hi[k].min(b.hi[k]);
        if hi <= lo {
            return 0.0;
        }
        vol *= hi - lo;
    }
    vol
}

/// A half-open cell `[i_k 2^L_k, (i_k + 1) 2^L_k)` of the dyadic grid with
/// the given exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub index: Vec<i64>,
    pub exponents: Vec<i32>,
}

impl GridCell {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        pow2(self.exponents[k])
    }

    pub fn lower(&self, k: usize) -> f64 {
        self.index[k] as f64 * self.width(k)
    }

    pub fn upper(&self, k: usize) -> f64 {
        (self.index[k] + 1) as f64 * self.width(k)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| self.lower(k) <= x[k] && x[k] < self.upper(k))
    }
}

/// Exact `2^e` for the exponent range of finite doubles.
pub fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Returns the cells of the grid with the given exponents whose closure
/// meets `b` in a set with nonempty interior. Cells are half-open, so a box
/// ending exactly on a cell boundary does not reach the next cell.
///
/// Every side of `b` must lie in `[2^L_k, 2^(L_k + 1))`; the result then has
/// at most `3^d` cells.
pub fn cells_touching(b: &AlignedBox, exponents: &[i32]) -> Result<Vec<GridCell>, GeometryError> {
    let d = b.dim();
    if exponents.len() != d {
        return Err(GeometryError::DimensionMismatch {
            expected: d,
            got: exponents.len(),
        });
    }
    let mut ranges = Vec::with_capacity(d);
    for (k, &e) in exponents.iter().enumerate() {
        let side = b.side(k);
        if !(pow2(e) <= side && side < pow2(e + 1)) {
            return Err(GeometryError::OutsideDyadicWindow {
                dim: k,
                side,
                exponent: e,
            });
        }
        // Division by a power of two is exact barring underflow.
        let first = (b.lo[k] / pow2(e)).floor();
        let last = (b.hi[k] / pow2(e)).ceil() - 1.0;
        if first.abs() >= 9.0e15 || last.abs() >= 9.0e15 {
            return Err(GeometryError::CellOverflow(k));
        }
        ranges.push((first as i64, last as i64));
    }
    let mut cells = Vec::new();
    let mut index: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        cells.push(GridCell {
            index: index.clone(),
            exponents: exponents.to_vec(),
        });
        // Odometer over the per-dimension ranges.
        let mut k = 0;
        loop {
            if k == d {
                return Ok(cells);
            }
            if index[k] < ranges[k].1 {
                index[k] += 1;
                break;
            }
            index[k] = ranges[k].0;
            k += 1;
        }
    }
}
