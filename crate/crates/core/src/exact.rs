//! Exact union volume for small instances. Two independent routes: a
//! coordinate-compressed cell grid (any dimension) and a plane sweep with a
//! covered-length segment tree (d = 2 only). Every statistical test in the
//! crate leans on these, so they share no code beyond the box type.

use crate::classify::ClassPartition;
use crate::geometry::AlignedBox;
use thiserror::Error;

/// Largest number of elementary cells the grid route will visit.
pub const DEFAULT_CELL_CAP: u128 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("compressed grid has {cells} cells, above the cap of {cap}")]
    CapExceeded { cells: u128, cap: u128 },
    #[error("boxes have mixed dimensions")]
    MixedDimensions,
    #[error("sweep line needs d = 2, got d = {0}")]
    UnsupportedDimension(usize),
    #[error("class {0} does not exist")]
    UnknownClass(usize),
}

fn check_dims(boxes: &[AlignedBox]) -> Result<usize, ExactError> {
    let d = boxes.first().map_or(1, AlignedBox::dim);
    if boxes.iter().any(|b| b.dim() != d) {
        return Err(ExactError::MixedDimensions);
    }
    Ok(d)
}

pub fn exact_volume(boxes: &[AlignedBox]) -> Result<f64, ExactError> {
    exact_volume_with_cap(boxes, DEFAULT_CELL_CAP)
}

/// Number of elementary cells of the compressed grid over `boxes`.
pub fn compressed_cell_count(boxes: &[AlignedBox]) -> u128 {
    let Some(first) = boxes.first() else { return 0 };
    (0..first.dim())
        .map(|k| axis_coords(boxes, k).len().saturating_sub(1) as u128)
        .product()
}

fn axis_coords(boxes: &[AlignedBox], k: usize) -> Vec<f64> {
    let mut c: Vec<f64> = boxes.iter().flat_map(|b| [b.lo()[k], b.hi()[k]]).collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Compressed-grid route. Slabs along the first axis are swept one at a
/// time; inside a slab the remaining axes carry a difference array of cover
/// counts, so memory stays at one slab of cells.
pub fn exact_volume_with_cap(boxes: &[AlignedBox], cap: u128) -> Result<f64, ExactError> {
    let d = check_dims(boxes)?;
    let boxes: Vec<&AlignedBox> = boxes.iter().filter(|b| !b.is_degenerate()).collect();
    if boxes.is_empty() {
        return Ok(0.0);
    }
    let owned: Vec<AlignedBox> = boxes.iter().map(|&b| b.clone()).collect();
    let coords: Vec<Vec<f64>> = (0..d).map(|k| axis_coords(&owned, k)).collect();
    let cells: u128 = coords.iter().map(|c| (c.len() - 1) as u128).product();
    if cells > cap {
        return Err(ExactError::CapExceeded { cells, cap });
    }

    // Per-box half-open cell ranges on every axis.
    let ranges: Vec<Vec<(usize, usize)>> = owned
        .iter()
        .map(|b| {
            (0..d)
                .map(|k| {
                    let a = coords[k].partition_point(|&c| c < b.lo()[k]);
                    let z = coords[k].partition_point(|&c| c < b.hi()[k]);
                    (a, z)
                })
                .collect()
        })
        .collect();

    let widths: Vec<Vec<f64>> = coords
        .iter()
        .map(|c| c.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    let rest_shape: Vec<usize> = (1..d).map(|k| widths[k].len()).collect();
    // Difference array has one extra slot per axis for range ends.
    let diff_shape: Vec<usize> = rest_shape.iter().map(|m| m + 1).collect();
    let diff_len: usize = diff_shape.iter().product();
    let mut strides = vec![1usize; d.saturating_sub(1)];
    for k in (0..rest_shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * diff_shape[k + 1];
    }

    let mut total = 0.0;
    let mut diff = vec![0i32; diff_len];
    for (slab, &slab_width) in widths[0].iter().enumerate() {
        let active: Vec<&Vec<(usize, usize)>> = ranges
            .iter()
            .filter(|r| r[0].0 <= slab && slab < r[0].1)
            .collect();
        if active.is_empty() {
            continue;
        }
        if d == 1 {
            total += slab_width;
            continue;
        }
        diff.iter_mut().for_each(|v| *v = 0);
        let corners = 1usize << (d - 1);
        for r in &active {
            for mask in 0..corners {
                let mut offset = 0;
                let mut sign = 1;
                for k in 0..d - 1 {
                    let (a, z) = r[k + 1];
                    if mask >> k & 1 == 1 {
                        offset += z * strides[k];
                        sign = -sign;
                    } else {
                        offset += a * strides[k];
                    }
                }
                diff[offset] += sign;
            }
        }
        // Prefix sums along each remaining axis turn differences into counts.
        for k in 0..d - 1 {
            let stride = strides[k];
            let len = diff_shape[k];
            for base in 0..diff_len {
                let pos = (base / stride) % len;
                if pos > 0 {
                    diff[base] += diff[base - stride];
                }
            }
        }
        total += slab_width * covered_measure(&diff, &diff_shape, &strides, &widths[1..]);
    }
    Ok(total)
}

/// Sum of cell volumes over cells with a positive count, reducing one axis at
/// a time from the last.
fn covered_measure(counts: &[i32], shape: &[usize], strides: &[usize], widths: &[Vec<f64>]) -> f64 {
    let axes = shape.len();
    // Only indices below shape - 1 are real cells.
    let last = axes - 1;
    let rows: usize = shape[..last].iter().product();
    let mut acc: Vec<f64> = Vec::with_capacity(rows);
    for row in 0..rows {
        let base = row * shape[last];
        let mut s = 0.0;
        for (j, w) in widths[last].iter().enumerate() {
            if counts[base + j * strides[last]] > 0 {
                s += w;
            }
        }
        acc.push(s);
    }
    let mut cur_shape: Vec<usize> = shape[..last].to_vec();
    for axis in (0..last).rev() {
        let inner: usize = cur_shape[axis + 1..].iter().product();
        let outer: usize = cur_shape[..axis].iter().product();
        let len = cur_shape[axis];
        let mut next = vec![0.0; outer * inner];
        for o in 0..outer {
            for (j, w) in widths[axis].iter().enumerate() {
                for i in 0..inner {
                    next[o * inner + i] += w * acc[(o * len + j) * inner + i];
                }
            }
        }
        acc = next;
        cur_shape.truncate(axis);
    }
    acc.iter().sum()
}

/// Plane sweep over x with a segment tree storing cover counts and covered
/// length over compressed y.
pub fn sweep_area_2d(boxes: &[AlignedBox]) -> Result<f64, ExactError> {
    let d = check_dims(boxes)?;
    if boxes.is_empty() {
        return Ok(0.0);
    }
    if d != 2 {
        return Err(ExactError::UnsupportedDimension(d));
    }
    let mut ys: Vec<f64> = boxes.iter().flat_map(|b| [b.lo()[1], b.hi()[1]]).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    if ys.len() < 2 {
        return Ok(0.0);
    }
    let mut events: Vec<(f64, i32, usize, usize)> = Vec::with_capacity(2 * boxes.len());
    for b in boxes {
        if b.side(0) <= 0.0 || b.side(1) <= 0.0 {
            continue;
        }
        let y0 = ys.partition_point(|&y| y < b.lo()[1]);
        let y1 = ys.partition_point(|&y| y < b.hi()[1]);
        events.push((b.lo()[0], 1, y0, y1));
        events.push((b.hi()[0], -1, y0, y1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut tree = CoverTree::new(&ys);
    let mut area = 0.0;
    let mut prev_x = events.first().map_or(0.0, |e| e.0);
    for (x, delta, y0, y1) in events {
        area += tree.covered() * (x - prev_x);
        prev_x = x;
        tree.update(1, 0, ys.len() - 1, y0, y1, delta);
    }
    Ok(area)
}

struct CoverTree<'a> {
    ys: &'a [f64],
    count: Vec<i32>,
    len: Vec<f64>,
}

impl<'a> CoverTree<'a> {
    fn new(ys: &'a [f64]) -> Self {
        let segs = ys.len() - 1;
        CoverTree {
            ys,
            count: vec![0; 4 * segs],
            len: vec![0.0; 4 * segs],
        }
    }

    fn covered(&self) -> f64 {
        self.len[1]
    }

    // Node covers elementary segments [lo, hi); update covers [a, b).
    fn update(&mut self, node: usize, lo: usize, hi: usize, a: usize, b: usize, delta: i32) {
        if b <= lo || hi <= a {
            return;
        }
        if a <= lo && hi <= b {
            self.count[node] += delta;
        } else {
            let mid = (lo + hi) / 2;
            self.update(2 * node, lo, mid, a, b, delta);
            self.update(2 * node + 1, mid, hi, a, b, delta);
        }
        self.len[node] = if self.count[node] > 0 {
            self.ys[hi] - self.ys[lo]
        } else if hi - lo == 1 {
            0.0
        } else {
            self.len[2 * node] + self.len[2 * node + 1]
        };
    }
}

/// Exact volume of the union `U_t` of one class.
pub fn exact_class_volume(partition: &ClassPartition, t: usize) -> Result<f64, ExactError> {
    if t >= partition.num_classes() {
        return Err(ExactError::UnknownClass(t));
    }
    exact_volume(partition.class_boxes(t))
}
