//! The three-query access model: volume, uniform sample, containment.
//! Algorithms that live in this model see objects only through a
//! [`QuerySession`], which counts every query.

use crate::geometry::{AlignedBox, Point};
use crate::sampling::RandomStream;
use serde::Serialize;
use std::collections::BTreeSet;

/// Which hidden vector a bit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum HiddenVector {
    X,
    Y,
}

/// One read of a hidden bit; `index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BitAccess {
    pub vector: HiddenVector,
    pub index: usize,
}

pub trait QueryObject {
    fn dim(&self) -> usize;
    fn vol(&self) -> f64;
    /// A point uniform over the object.
    fn sample(&self, stream: &mut RandomStream) -> Point;
    fn contains(&self, x: &Point) -> bool;
    /// Moves hidden-bit reads made by the last query into `out`.
    fn drain_bit_accesses(&self, _out: &mut Vec<BitAccess>) {}
}

/// A box seen through the query model.
#[derive(Debug, Clone)]
pub struct BoxObject(AlignedBox);

pub fn wrap_box(b: AlignedBox) -> BoxObject {
    BoxObject(b)
}

impl BoxObject {
    pub fn inner(&self) -> &AlignedBox {
        &self.0
    }
}

impl QueryObject for BoxObject {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn vol(&self) -> f64 {
        self.0.volume()
    }

    fn sample(&self, stream: &mut RandomStream) -> Point {
        Point(stream.point_in_box(self.0.lo(), self.0.hi()))
    }

    fn contains(&self, x: &Point) -> bool {
        x.dim() == self.0.dim() && self.0.contains_coords(x.coords())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Vol,
    Sample,
    Contains,
}

/// Per-object query counts and the hidden-bit access log of one run.
#[derive(Debug, Clone, Default)]
pub struct QueryLedger {
    vol: Vec<u64>,
    sample: Vec<u64>,
    contains: Vec<u64>,
    bits: Vec<BitAccess>,
}

impl QueryLedger {
    pub fn new(objects: usize) -> Self {
        QueryLedger {
            vol: vec![0; objects],
            sample: vec![0; objects],
            contains: vec![0; objects],
            bits: Vec::new(),
        }
    }

    fn record(&mut self, kind: QueryKind, i: usize) {
        let row = match kind {
            QueryKind::Vol => &mut self.vol,
            QueryKind::Sample => &mut self.sample,
            QueryKind::Contains => &mut self.contains,
        };
        row[i] += 1;
    }

    pub fn count(&self, kind: QueryKind, i: usize) -> u64 {
        match kind {
            QueryKind::Vol => self.vol[i],
            QueryKind::Sample => self.sample[i],
            QueryKind::Contains => self.contains[i],
        }
    }

    pub fn total(&self) -> u64 {
        self.vol.iter().chain(&self.sample).chain(&self.contains).sum()
    }

    pub fn bit_accesses(&self) -> &[BitAccess] {
        &self.bits
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LedgerTotals {
    pub vol: u64,
    pub sample: u64,
    pub contains: u64,
    pub total: u64,
    pub bit_accesses: u64,
    pub distinct_bits: u64,
}

pub fn ledger_snapshot(ledger: &QueryLedger) -> LedgerTotals {
    let vol = ledger.vol.iter().sum();
    let sample = ledger.sample.iter().sum();
    let contains = ledger.contains.iter().sum();
    LedgerTotals {
        vol,
        sample,
        contains,
        total: vol + sample + contains,
        bit_accesses: ledger.bits.len() as u64,
        distinct_bits: ledger.bits.iter().collect::<BTreeSet<_>>().len() as u64,
    }
}

/// Counting front end over a family of objects.
pub struct QuerySession<'a, O: QueryObject> {
    objects: &'a [O],
    ledger: QueryLedger,
}

impl<'a, O: QueryObject> QuerySession<'a, O> {
    pub fn new(objects: &'a [O]) -> Self {
        QuerySession {
            objects,
            ledger: QueryLedger::new(objects.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.objects.first().map_or(0, QueryObject::dim)
    }

    pub fn vol(&mut self, i: usize) -> f64 {
        self.ledger.record(QueryKind::Vol, i);
        let v = self.objects[i].vol();
        self.objects[i].drain_bit_accesses(&mut self.ledger.bits);
        v
    }

    pub fn sample(&mut self, i: usize, stream: &mut RandomStream) -> Point {
        self.ledger.record(QueryKind::Sample, i);
        let x = self.objects[i].sample(stream);
        self.objects[i].drain_bit_accesses(&mut self.ledger.bits);
        x
    }

    pub fn contains(&mut self, i: usize, x: &Point) -> bool {
        self.ledger.record(QueryKind::Contains, i);
        let hit = self.objects[i].contains(x);
        self.objects[i].drain_bit_accesses(&mut self.ledger.bits);
        hit
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn snapshot(&self) -> LedgerTotals {
        ledger_snapshot(&self.ledger)
    }

    pub fn into_ledger(self) -> QueryLedger {
        self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> BoxObject {
        wrap_box(AlignedBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())
    }

    #[test]
    fn box_queries() {
        let b = wrap_box(AlignedBox::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap());
        assert_eq!(b.vol(), 6.0);
        assert!(b.contains(&Point(vec![2.0, 3.0])));
        assert!(!b.contains(&Point(vec![2.0])));
    }

    #[test]
    fn sample_means() {
        let b = unit_square();
        let mut s = RandomStream::new(4, 0);
        let mut sum = [0.0; 2];
        for _ in 0..100_000 {
            let x = b.sample(&mut s);
            assert!(b.contains(&x));
            sum[0] += x.0[0];
            sum[1] += x.0[1];
        }
        for v in sum {
            assert!((v / 1e5 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn ks_uniform_per_axis() {
        let b = unit_square();
        let mut s = RandomStream::new(8, 0);
        let n = 100_000;
        let draws: Vec<Point> = (0..n).map(|_| b.sample(&mut s)).collect();
        for k in 0..2 {
            let mut xs: Vec<f64> = draws.iter().map(|p| p.0[k]).collect();
            xs.sort_by(f64::total_cmp);
            let dn = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
                .fold(0.0, f64::max);
            // Asymptotic Kolmogorov critical value at alpha = 0.001.
            assert!(dn < 1.9495 / (n as f64).sqrt(), "axis {k}: D = {dn}");
        }
    }

    #[test]
    fn fresh_ledger_is_zero() {
        let objs = [unit_square(), unit_square()];
        let session = QuerySession::new(&objs);
        assert_eq!(session.snapshot(), LedgerTotals::default());
    }

    #[test]
    fn separate_ledgers_do_not_mix() {
        let objs = [unit_square()];
        let mut a = QuerySession::new(&objs);
        let mut b = QuerySession::new(&objs);
        let p = Point(vec![0.5, 0.5]);
        for _ in 0..3 {
            a.contains(0, &p);
        }
        b.vol(0);
        assert_eq!(a.snapshot().contains, 3);
        assert_eq!(a.snapshot().vol, 0);
        assert_eq!(b.snapshot().total, 1);
    }

    proptest! {
        #[test]
        fn counters_replay_exactly(calls in prop::collection::vec((0u8..3, 0usize..4), 0..200)) {
            let objs: Vec<BoxObject> = (0..4).map(|_| unit_square()).collect();
            let mut session = QuerySession::new(&objs);
            let mut s = RandomStream::new(1, 1);
            let mut want = [[0u64; 4]; 3];
            for &(kind, i) in &calls {
                match kind {
                    0 => { session.vol(i); }
                    1 => { session.sample(i, &mut s); }
                    _ => { session.contains(i, &Point(vec![0.1, 0.1])); }
                }
                want[kind as usize][i] += 1;
            }
            let kinds = [QueryKind::Vol, QueryKind::Sample, QueryKind::Contains];
            for (k, kind) in kinds.iter().enumerate() {
                for i in 0..4 {
                    prop_assert_eq!(session.ledger().count(*kind, i), want[k][i]);
                }
            }
            prop_assert_eq!(session.snapshot().total, calls.len() as u64);
        }
    }
}
