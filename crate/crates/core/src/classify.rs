//! Shape classes: boxes whose side length in every dimension `k` falls in
//! the same dyadic window `[2^L_k, 2^(L_k + 1))`.

use crate::exact::{exact_class_volume, ExactError};
use crate::geometry::AlignedBox;
use serde::Serialize;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("side {side} in dimension {dim} is not positive")]
    DegenerateSide { dim: usize, side: f64 },
    #[error("no box with positive volume")]
    AllDegenerate,
    #[error("boxes have mixed dimensions")]
    MixedDimensions,
}

/// Exponent vector `(L_1, ..., L_d)`; ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ShapeType(pub Vec<i32>);

impl ShapeType {
    pub fn exponents(&self) -> &[i32] {
        &self.0
    }
}

/// `floor(log2(x))` for finite `x > 0`, read off the IEEE-754 exponent so
/// exact powers of two never round to the wrong window.
pub fn floor_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // Subnormal: value is mantissa * 2^-1074.
        let mantissa = bits & ((1u64 << 52) - 1);
        63 - mantissa.leading_zeros() as i32 - 1074
    } else {
        biased - 1023
    }
}

pub fn shape_type_of(b: &AlignedBox) -> Result<ShapeType, ClassifyError> {
    (0..b.dim())
        .map(|k| {
            let side = b.side(k);
            if side > 0.0 {
                Ok(floor_log2(side))
            } else {
                Err(ClassifyError::DegenerateSide { dim: k, side })
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(ShapeType)
}

/// Boxes relabeled so each class occupies a contiguous run, classes in
/// lexicographic order of their exponent vectors.
///
/// Box labels are 1-based (`1..=n`) to match `appears(x, i)`; class ids are
/// 0-based. Class `t` owns labels `boundaries[t] + 1 ..= boundaries[t + 1]`.
#[derive(Debug, Clone)]
pub struct ClassPartition {
    boxes: Vec<AlignedBox>,
    original_ids: Vec<usize>,
    class_of: Vec<u32>,
    types: Vec<ShapeType>,
    boundaries: Vec<usize>,
    dropped: Vec<usize>,
    dim: usize,
}

impl ClassPartition {
    pub fn new(input: &[AlignedBox]) -> Result<Self, ClassifyError> {
        let dim = input.first().map_or(0, AlignedBox::dim);
        if input.iter().any(|b| b.dim() != dim) {
            return Err(ClassifyError::MixedDimensions);
        }
        let mut keyed = Vec::with_capacity(input.len());
        let mut dropped = Vec::new();
        for (id, b) in input.iter().enumerate() {
            match shape_type_of(b) {
                Ok(ty) => keyed.push((ty, id)),
                Err(_) => dropped.push(id),
            }
        }
        if !dropped.is_empty() {
            log::warn!("dropping {} degenerate boxes of zero volume", dropped.len());
        }
        if keyed.is_empty() {
            return Err(ClassifyError::AllDegenerate);
        }
        // Stable: input order survives inside a class.
        keyed.sort_by(|a, b| a.0.cmp(&b.0));

        let mut types: Vec<ShapeType> = Vec::new();
        let mut boundaries = vec![0];
        let mut class_of = Vec::with_capacity(keyed.len());
        for (pos, (ty, _)) in keyed.iter().enumerate() {
            if types.last() != Some(ty) {
                if pos > 0 {
                    boundaries.push(pos);
                }
                types.push(ty.clone());
            }
            class_of.push((types.len() - 1) as u32);
        }
        boundaries.push(keyed.len());

        Ok(ClassPartition {
            boxes: keyed.iter().map(|&(_, id)| input[id].clone()).collect(),
            original_ids: keyed.iter().map(|&(_, id)| id).collect(),
            class_of,
            types,
            boundaries,
            dropped,
            dim,
        })
    }

    /// Relabeled boxes; label `i` is `boxes()[i - 1]`.
    pub fn boxes(&self) -> &[AlignedBox] {
        &self.boxes
    }

    /// Number of non-degenerate boxes.
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.types.len()
    }

    pub fn class_type(&self, t: usize) -> &ShapeType {
        &self.types[t]
    }

    pub fn types(&self) -> &[ShapeType] {
        &self.types
    }

    /// `0 = i_0 < i_1 < ... < i_m = n`.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Zero-based positions in `boxes()` belonging to class `t`.
    pub fn class_range(&self, t: usize) -> Range<usize> {
        self.boundaries[t]..self.boundaries[t + 1]
    }

    pub fn class_boxes(&self, t: usize) -> &[AlignedBox] {
        &self.boxes[self.class_range(t)]
    }

    /// Largest label in class `t`, i.e. `i_t`.
    pub fn last_label(&self, t: usize) -> usize {
        self.boundaries[t + 1]
    }

    /// Class id of each relabeled box.
    pub fn class_ids(&self) -> &[u32] {
        &self.class_of
    }

    /// Input position of each relabeled box.
    pub fn original_ids(&self) -> &[usize] {
        &self.original_ids
    }

    /// Input positions of boxes dropped for zero volume.
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }
}

pub fn partition(boxes: &[AlignedBox]) -> Result<ClassPartition, ClassifyError> {
    ClassPartition::new(boxes)
}

/// `2^|L_k - L'_k| < n^4` in every dimension, in exact integer arithmetic.
pub fn similar(a: &ShapeType, b: &ShapeType, n: usize) -> bool {
    debug_assert_eq!(a.0.len(), b.0.len());
    let n4 = (n as u128).checked_pow(4);
    a.0.iter().zip(&b.0).all(|(&x, &y)| {
        let gap = (x as i64 - y as i64).unsigned_abs();
        match n4 {
            Some(n4) => gap < 128 && (1u128 << gap) < n4,
            // n^4 >= 2^128.
            None => gap < 128,
        }
    })
}

/// `log2(n)` clamped below at 1 so the polylog bounds stay meaningful for
/// single-box inputs.
pub fn log2_clamped(n: usize) -> f64 {
    (n as f64).log2().max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlapAudit {
    /// `sum_t Vol(U_t)`.
    pub class_volume_sum: f64,
    pub union_volume: f64,
    /// `2^(3d+1) log2^d(n) V`.
    pub bound: f64,
    /// `bound / class_volume_sum`; at least 1 when the audit passes.
    pub margin: f64,
    pub pass: bool,
}

pub fn class_overlap_audit(p: &ClassPartition, exact_volume: f64) -> Result<OverlapAudit, ExactError> {
    let mut sum = 0.0;
    for t in 0..p.num_classes() {
        sum += exact_class_volume(p, t)?;
    }
    let d = p.dim() as i32;
    let bound = 2f64.powi(3 * d + 1) * log2_clamped(p.len()).powi(d) * exact_volume;
    // Relative slack for floating rounding in the per-class sums.
    let pass = sum <= bound * (1.0 + 1e-12);
    Ok(OverlapAudit {
        class_volume_sum: sum,
        union_volume: exact_volume,
        bound,
        margin: if sum > 0.0 { bound / sum } else { f64::INFINITY },
        pass,
    })
}

/// For each class, how many classes of the partition (itself included) are
/// similar to it.
pub fn similar_class_counts(p: &ClassPartition) -> Vec<usize> {
    let n = p.len();
    p.types()
        .iter()
        .map(|a| p.types().iter().filter(|b| similar(a, b, n)).count())
        .collect()
}

/// `8^d log2^d(n)`.
pub fn similar_class_bound(d: usize, n: usize) -> f64 {
    (8.0 * log2_clamped(n)).powi(d as i32)
}
