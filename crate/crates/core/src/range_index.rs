//! Static stabbing indexes over closed boxes.
//!
//! Both indexes are multi-level segment trees: one level per spatial
//! dimension, each canonical node of level `k` owning a tree over the boxes
//! stored there on level `k + 1`. The extra "label" coordinate of the lifted
//! boxes (`O_j x (-inf, j]` for `appears`, `O_i x {t}` for `inClass`) is not
//! a separate tree level; canonical nodes of the last spatial level carry a
//! payload that resolves it directly (the maximum label, or the sorted set of
//! class ids).
//!
//! Coordinates are compressed per tree. With sorted distinct endpoints
//! `e_0 < ... < e_{M-1}`, slot `2j` is the point `e_j` and slot `2j + 1` the
//! open gap `(e_j, e_{j+1})`, so a closed interval `[e_a, e_b]` is exactly
//! slots `2a ..= 2b` and boundary hits are inclusive.

use crate::classify::ClassPartition;
use crate::geometry::AlignedBox;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("cannot build an index over zero boxes")]
    Empty,
    #[error("label {i} outside 1..={max}")]
    LabelOutOfRange { i: usize, max: usize },
    #[error("class {t} does not exist ({m} classes)")]
    UnknownClass { t: usize, m: usize },
    #[error("query point has dimension {got}, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Payload table held by the last-level trees.
trait Payload {
    type Table;
    fn build(lists: &[Vec<u32>], labels: &[u32]) -> Self::Table;
    fn hit(table: &Self::Table, node: usize, key: u32) -> bool;
}

/// Maximum box label per node; 0 marks an empty node.
struct MaxLabel;

impl Payload for MaxLabel {
    type Table = Vec<u32>;

    fn build(lists: &[Vec<u32>], labels: &[u32]) -> Vec<u32> {
        lists
            .iter()
            .map(|ids| ids.iter().map(|&id| labels[id as usize]).max().unwrap_or(0))
            .collect()
    }

    #[inline]
    fn hit(table: &Vec<u32>, node: usize, key: u32) -> bool {
        table[node] >= key
    }
}

/// Sorted distinct class ids per node, flattened.
struct ClassSet;

struct ClassTable {
    offsets: Vec<u32>,
    ids: Vec<u32>,
}

impl Payload for ClassSet {
    type Table = ClassTable;

    fn build(lists: &[Vec<u32>], labels: &[u32]) -> ClassTable {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut ids = Vec::new();
        offsets.push(0);
        for list in lists {
            let start = ids.len();
            ids.extend(list.iter().map(|&id| labels[id as usize]));
            ids[start..].sort_unstable();
            let mut w = start;
            for r in start..ids.len() {
                if r == start || ids[r] != ids[w - 1] {
                    ids[w] = ids[r];
                    w += 1;
                }
            }
            ids.truncate(w);
            offsets.push(ids.len() as u32);
        }
        ClassTable { offsets, ids }
    }

    #[inline]
    fn hit(table: &ClassTable, node: usize, key: u32) -> bool {
        let s = table.offsets[node] as usize;
        let e = table.offsets[node + 1] as usize;
        table.ids[s..e].binary_search(&key).is_ok()
    }
}

enum Assoc<P: Payload> {
    Inner(Vec<Option<Box<Level<P>>>>),
    Last(P::Table),
}

struct Level<P: Payload> {
    dim: usize,
    coords: Vec<f64>,
    slots: usize,
    assoc: Assoc<P>,
}

impl<P: Payload> Level<P> {
    fn build(boxes: &[AlignedBox], ids: &[u32], labels: &[u32], dim: usize, work: &mut u64) -> Self {
        let mut coords: Vec<f64> = ids
            .iter()
            .flat_map(|&id| {
                let b = &boxes[id as usize];
                [b.lo()[dim], b.hi()[dim]]
            })
            .collect();
        coords.sort_by(f64::total_cmp);
        coords.dedup();
        let slots = 2 * coords.len() - 1;
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); 2 * slots];
        for &id in ids {
            let b = &boxes[id as usize];
            let a = coords.partition_point(|&c| c < b.lo()[dim]);
            let z = coords.partition_point(|&c| c < b.hi()[dim]);
            // Bottom-up canonical decomposition of slots [2a, 2z].
            let (mut l, mut r) = (2 * a + slots, 2 * z + 1 + slots);
            while l < r {
                if l & 1 == 1 {
                    lists[l].push(id);
                    l += 1;
                }
                if r & 1 == 1 {
                    r -= 1;
                    lists[r].push(id);
                }
                l >>= 1;
                r >>= 1;
                *work += 1;
            }
        }
        let last = dim + 1 == boxes[ids[0] as usize].dim();
        let assoc = if last {
            *work += lists.len() as u64;
            Assoc::Last(P::build(&lists, labels))
        } else {
            Assoc::Inner(
                lists
                    .iter()
                    .map(|list| {
                        (!list.is_empty()).then(|| Box::new(Level::build(boxes, list, labels, dim + 1, work)))
                    })
                    .collect(),
            )
        };
        Level {
            dim,
            coords,
            slots,
            assoc,
        }
    }

    #[inline]
    fn slot_of(&self, v: f64) -> Option<usize> {
        let first = *self.coords.first()?;
        let last = *self.coords.last()?;
        if !(first <= v && v <= last) {
            return None;
        }
        let j = self.coords.partition_point(|&c| c < v);
        Some(if self.coords[j] == v { 2 * j } else { 2 * j - 1 })
    }

    fn stab(&self, x: &[f64], key: u32, visits: &mut u64) -> bool {
        let Some(slot) = self.slot_of(x[self.dim]) else {
            *visits += 1;
            return false;
        };
        let mut node = slot + self.slots;
        while node >= 1 {
            *visits += 1;
            let hit = match &self.assoc {
                Assoc::Last(table) => P::hit(table, node, key),
                Assoc::Inner(children) => children[node]
                    .as_ref()
                    .is_some_and(|child| child.stab(x, key, visits)),
            };
            if hit {
                return true;
            }
            node >>= 1;
        }
        false
    }
}

fn all_ids(n: usize) -> Vec<u32> {
    (0..n as u32).collect()
}

/// Answers `appears(x, i)`: is `x` in `O_i ∪ ... ∪ O_n`?
pub struct AppearsIndex {
    root: Level<MaxLabel>,
    n: usize,
    dim: usize,
    build_work: u64,
}

impl AppearsIndex {
    /// Builds over boxes labeled `1..=n` in slice order.
    pub fn build(boxes: &[AlignedBox]) -> Result<Self, IndexError> {
        if boxes.is_empty() {
            return Err(IndexError::Empty);
        }
        let labels: Vec<u32> = (1..=boxes.len() as u32).collect();
        let mut work = 0;
        let root = Level::build(boxes, &all_ids(boxes.len()), &labels, 0, &mut work);
        Ok(AppearsIndex {
            root,
            n: boxes.len(),
            dim: boxes[0].dim(),
            build_work: work,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Node insertions and payload slots touched while building.
    pub fn build_work(&self) -> u64 {
        self.build_work
    }

    pub fn appears(&self, x: &[f64], i: usize) -> Result<bool, IndexError> {
        let mut visits = 0;
        self.appears_counted(x, i, &mut visits)
    }

    /// As [`appears`](Self::appears), adding the number of tree nodes visited
    /// to `visits`.
    pub fn appears_counted(&self, x: &[f64], i: usize, visits: &mut u64) -> Result<bool, IndexError> {
        if x.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if i == 0 || i > self.n + 1 {
            return Err(IndexError::LabelOutOfRange { i, max: self.n + 1 });
        }
        if i == self.n + 1 {
            return Ok(false);
        }
        Ok(self.root.stab(x, i as u32, visits))
    }
}

/// Answers `inClass(x, t)`: is `x` in the union of class `t`?
pub struct ClassIndex {
    root: Level<ClassSet>,
    classes: usize,
    dim: usize,
    build_work: u64,
}

impl ClassIndex {
    pub fn build(partition: &ClassPartition) -> Result<Self, IndexError> {
        let boxes = partition.boxes();
        if boxes.is_empty() {
            return Err(IndexError::Empty);
        }
        let mut work = 0;
        let root = Level::build(boxes, &all_ids(boxes.len()), partition.class_ids(), 0, &mut work);
        Ok(ClassIndex {
            root,
            classes: partition.num_classes(),
            dim: partition.dim(),
            build_work: work,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn build_work(&self) -> u64 {
        self.build_work
    }

    pub fn in_class(&self, x: &[f64], t: usize) -> Result<bool, IndexError> {
        let mut visits = 0;
        self.in_class_counted(x, t, &mut visits)
    }

    pub fn in_class_counted(&self, x: &[f64], t: usize, visits: &mut u64) -> Result<bool, IndexError> {
        if x.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if t >= self.classes {
            return Err(IndexError::UnknownClass { t, m: self.classes });
        }
        Ok(self.root.stab(x, t as u32, visits))
    }
}

pub fn build_appears(boxes: &[AlignedBox]) -> Result<AppearsIndex, IndexError> {
    AppearsIndex::build(boxes)
}

pub fn build_class_index(partition: &ClassPartition) -> Result<ClassIndex, IndexError> {
    ClassIndex::build(partition)
}

/// Linear-scan reference for `appears`; labels are 1-based.
pub fn naive_appears(boxes: &[AlignedBox], x: &[f64], i: usize) -> bool {
    i >= 1 && boxes.iter().skip(i - 1).any(|b| b.contains_coords(x))
}

/// Linear-scan reference for `inClass`.
pub fn naive_in_class(partition: &ClassPartition, x: &[f64], t: usize) -> bool {
    partition.class_boxes(t).iter().any(|b| b.contains_coords(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::partition;
    use proptest::prelude::*;

    fn bx(iv: &[(f64, f64)]) -> AlignedBox {
        AlignedBox::from_intervals(iv).unwrap()
    }

    #[test]
    fn single_box() {
        let b = bx(&[(0.0, 1.0), (0.0, 1.0)]);
        let idx = build_appears(std::slice::from_ref(&b)).unwrap();
        for x in [[0.5, 0.5], [1.0, 1.0], [0.0, 0.3], [1.5, 0.5], [-0.1, 0.0]] {
            assert_eq!(idx.appears(&x, 1).unwrap(), b.contains_coords(&x));
            assert!(!idx.appears(&x, 2).unwrap());
        }
    }

    #[test]
    fn two_separated_squares() {
        let boxes = [bx(&[(0.0, 1.0), (0.0, 1.0)]), bx(&[(2.0, 3.0), (2.0, 3.0)])];
        let idx = build_appears(&boxes).unwrap();
        assert!(idx.appears(&[2.5, 2.5], 2).unwrap());
        assert!(!idx.appears(&[0.5, 0.5], 2).unwrap());
        assert!(idx.appears(&[0.5, 0.5], 1).unwrap());
        assert!(!idx.appears(&[9.0, 9.0], 1).unwrap());
        assert!(!idx.appears(&[1.5, 1.5], 1).unwrap());
        assert!(!idx.appears(&[2.5, 2.5], 3).unwrap());
    }

    #[test]
    fn disjoint_boxes_by_label() {
        let boxes: Vec<_> = (0..20).map(|j| bx(&[(2.0 * j as f64, 2.0 * j as f64 + 1.0)])).collect();
        let idx = build_appears(&boxes).unwrap();
        for j in 1..=20 {
            let center = [2.0 * (j - 1) as f64 + 0.5];
            for i in 1..=21 {
                assert_eq!(idx.appears(&center, i).unwrap(), j >= i, "j={j} i={i}");
            }
        }
    }

    #[test]
    fn argument_errors() {
        let boxes = [bx(&[(0.0, 1.0), (0.0, 1.0)])];
        let idx = build_appears(&boxes).unwrap();
        assert_eq!(idx.appears(&[0.5, 0.5], 0), Err(IndexError::LabelOutOfRange { i: 0, max: 2 }));
        assert!(idx.appears(&[0.5, 0.5], 3).is_err());
        assert!(matches!(idx.appears(&[0.5], 1), Err(IndexError::DimensionMismatch { .. })));
        assert!(matches!(build_appears(&[]), Err(IndexError::Empty)));

        let p = partition(&boxes).unwrap();
        let ci = build_class_index(&p).unwrap();
        assert_eq!(ci.in_class(&[0.5, 0.5], 1), Err(IndexError::UnknownClass { t: 1, m: 1 }));
    }

    #[test]
    fn class_queries() {
        let boxes = [bx(&[(0.0, 1.0), (0.0, 1.0)]), bx(&[(5.0, 9.0), (5.0, 9.0)])];
        let p = partition(&boxes).unwrap();
        let ci = build_class_index(&p).unwrap();
        assert!(ci.in_class(&[0.5, 0.5], 0).unwrap());
        assert!(!ci.in_class(&[0.5, 0.5], 1).unwrap());
        assert!(ci.in_class(&[9.0, 5.0], 1).unwrap());
        assert!(!ci.in_class(&[6.0, 6.0], 0).unwrap());
    }

    fn arb_boxes(d: usize) -> impl Strategy<Value = Vec<AlignedBox>> {
        // Coarse lattice coordinates make shared endpoints and exact
        // boundary hits common.
        prop::collection::vec(
            prop::collection::vec((0u8..16, 0u8..6, 0u8..4), d).prop_map(|dims| {
                let (lo, hi) = dims
                    .iter()
                    .map(|&(a, w, e)| {
                        let s = (1u32 << e) as f64 * 0.25;
                        (a as f64 * 0.25, a as f64 * 0.25 + (w as f64 + 1.0) * s)
                    })
                    .unzip();
                AlignedBox::new(lo, hi).unwrap()
            }),
            1..40,
        )
    }

    proptest! {
        #[test]
        fn agrees_with_scan((boxes, qs) in (1usize..=3).prop_flat_map(|d| (
            arb_boxes(d),
            prop::collection::vec((prop::collection::vec(0u8..80, d), 0usize..50), 60),
        ))) {
            let p = partition(&boxes).unwrap();
            let idx = build_appears(p.boxes()).unwrap();
            let ci = build_class_index(&p).unwrap();
            let n = p.len();
            for (coords, i) in qs {
                let x: Vec<f64> = coords.iter().map(|&c| c as f64 * 0.125).collect();
                let i = 1 + i % (n + 1);
                prop_assert_eq!(idx.appears(&x, i).unwrap(), naive_appears(p.boxes(), &x, i));
                let t = i % p.num_classes();
                prop_assert_eq!(ci.in_class(&x, t).unwrap(), naive_in_class(&p, &x, t));
            }
        }
    }
}
