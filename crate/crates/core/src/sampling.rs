//! Seeded random streams, Poisson variates and the class p-sampler.
//!
//! A p-sample of `U_t` is drawn by rejection from the dyadic cells the class
//! touches: all cells of one class share a shape, so picking a cell uniformly
//! by count is the same as picking by volume.

use crate::classify::ClassPartition;
use crate::geometry::{cells_touching, GeometryError, GridCell, Point};
use crate::range_index::{ClassIndex, IndexError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("Poisson mean must be finite and non-negative, got {0}")]
    InvalidMean(f64),
    #[error("density must be finite and non-negative, got {0}")]
    InvalidDensity(f64),
    #[error("class {t} does not exist ({m} classes)")]
    UnknownClass { t: usize, m: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// A ChaCha8 stream identified by `(seed, stream id)`. Equal identifiers give
/// equal sequences on every platform.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A fresh stream with the same seed and a stream id derived from this
    /// one and `tag`.
    pub fn derive(&self, tag: u64) -> RandomStream {
        RandomStream::new(self.seed, splitmix64(self.stream ^ splitmix64(tag)))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `(0, 1]`.
    #[inline]
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform index in `0..n`; `n` must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Uniform point in the closed box `[lo, hi]`.
    pub fn point_in_box(&mut self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        lo.iter()
            .zip(hi)
            .map(|(&a, &b)| (a + self.uniform() * (b - a)).min(b))
            .collect()
    }
}

/// Exponential-gap counting below this mean, transformed rejection above.
const PTRS_THRESHOLD: f64 = 30.0;

pub fn poisson(stream: &mut RandomStream, lambda: f64) -> Result<u64, SamplingError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(SamplingError::InvalidMean(lambda));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    if lambda < PTRS_THRESHOLD {
        // Count unit-rate arrivals in [0, lambda].
        let mut k = 0;
        let mut t = -stream.uniform_open_closed().ln();
        while t <= lambda {
            k += 1;
            t -= stream.uniform_open_closed().ln();
        }
        return Ok(k);
    }
    Ok(poisson_ptrs(stream, lambda))
}

/// Hörmann's PTRS transformed rejection with squeeze.
fn poisson_ptrs(stream: &mut RandomStream, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = stream.uniform() - 0.5;
        let v = stream.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln(k!)`: exact product for small `k`, Stirling series otherwise.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Uniform point in a half-open grid cell.
pub fn uniform_in_cell(stream: &mut RandomStream, cell: &GridCell) -> Point {
    Point(uniform_in_cell_coords(stream, &cell.index, &cell.exponents))
}

fn uniform_in_cell_coords(stream: &mut RandomStream, index: &[i64], exponents: &[i32]) -> Vec<f64> {
    index
        .iter()
        .zip(exponents)
        .map(|(&i, &e)| {
            let w = crate::geometry::pow2(e);
            let lower = i as f64 * w;
            let upper = (i + 1) as f64 * w;
            loop {
                // (i + u) w can round up to the excluded upper face.
                let v = (i as f64 + stream.uniform()) * w;
                if lower <= v && v < upper {
                    break v;
                }
            }
        })
        .collect()
}

/// The deduplicated cells `G` touched by one class, in sorted index order.
#[derive(Debug, Clone)]
pub struct ClassCells {
    class_id: usize,
    exponents: Vec<i32>,
    cells: Vec<Vec<i64>>,
    cell_volume: f64,
}

impl ClassCells {
    pub fn build(partition: &ClassPartition, t: usize) -> Result<Self, SamplingError> {
        if t >= partition.num_classes() {
            return Err(SamplingError::UnknownClass {
                t,
                m: partition.num_classes(),
            });
        }
        let exponents = partition.class_type(t).exponents().to_vec();
        let mut cells = Vec::new();
        for b in partition.class_boxes(t) {
            for c in cells_touching(b, &exponents)? {
                assert_eq!(c.exponents, exponents, "cells of one class share a shape");
                cells.push(c.index);
            }
        }
        cells.sort_unstable();
        cells.dedup();
        let cell_volume = exponents.iter().map(|&e| crate::geometry::pow2(e)).product();
        Ok(ClassCells {
            class_id: t,
            exponents,
            cells,
            cell_volume,
        })
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        self.cells.iter().map(|index| GridCell {
            index: index.clone(),
            exponents: self.exponents.clone(),
        })
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// `Vol(∪G)`.
    pub fn volume(&self) -> f64 {
        self.cell_volume * self.cells.len() as f64
    }

    /// One uniform point of `∪G`.
    pub fn draw(&self, stream: &mut RandomStream) -> Vec<f64> {
        let c = &self.cells[stream.index(self.cells.len())];
        uniform_in_cell_coords(stream, c, &self.exponents)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSample {
    pub points: Vec<Point>,
    pub class_id: usize,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SampleStats {
    /// Points drawn from `∪G` before filtering.
    pub candidates: u64,
    pub in_class_queries: u64,
    pub node_visits: u64,
}

/// Draws a p-sample of `U_t`: a Poisson number of uniform points of the
/// touched cells, filtered by `inClass(x, t)`.
pub fn p_sample_class(
    stream: &mut RandomStream,
    t: usize,
    p: f64,
    partition: &ClassPartition,
    index: &ClassIndex,
) -> Result<(PointSample, SampleStats), SamplingError> {
    if !p.is_finite() || p < 0.0 {
        return Err(SamplingError::InvalidDensity(p));
    }
    let cells = ClassCells::build(partition, t)?;
    p_sample_cells(stream, &cells, p, index)
}

/// As [`p_sample_class`] with the cell set already built.
pub fn p_sample_cells(
    stream: &mut RandomStream,
    cells: &ClassCells,
    p: f64,
    index: &ClassIndex,
) -> Result<(PointSample, SampleStats), SamplingError> {
    if !p.is_finite() || p < 0.0 {
        return Err(SamplingError::InvalidDensity(p));
    }
    let t = cells.class_id();
    let k = poisson(stream, p * cells.volume())?;
    let mut stats = SampleStats::default();
    let mut points = Vec::new();
    for _ in 0..k {
        let x = cells.draw(stream);
        stats.candidates += 1;
        stats.in_class_queries += 1;
        if index.in_class_counted(&x, t, &mut stats.node_visits)? {
            points.push(Point(x));
        }
    }
    Ok((
        PointSample {
            points,
            class_id: t,
            density: p,
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::partition;
    use crate::geometry::AlignedBox;
    use crate::range_index::build_class_index;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RandomStream::new(7, 3);
        let mut b = RandomStream::new(7, 3);
        let mut c = RandomStream::new(7, 4);
        let xa: Vec<f64> = (0..16).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..16).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..16).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_eq!(a.derive(5).stream_id(), RandomStream::new(7, 3).derive(5).stream_id());
        assert_ne!(a.derive(5).stream_id(), a.derive(6).stream_id());
    }

    #[test]
    fn poisson_zero_and_errors() {
        let mut s = RandomStream::new(1, 0);
        for _ in 0..100 {
            assert_eq!(poisson(&mut s, 0.0).unwrap(), 0);
        }
        assert_eq!(poisson(&mut s, -1.0), Err(SamplingError::InvalidMean(-1.0)));
        assert!(poisson(&mut s, f64::INFINITY).is_err());
        assert!(poisson(&mut s, f64::NAN).is_err());
    }

    #[test]
    fn poisson_moments_large_mean() {
        // sd of the sample mean is sqrt(50 / 1e5) = 0.0224, so 0.7 is far
        // outside noise; sd of the sample variance is about
        // sqrt((2 * 50^2 + 50) / 1e5) = 0.225, so 3 likewise.
        let mut s = RandomStream::new(11, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| poisson(&mut s, 50.0).unwrap() as f64).collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 50.0).abs() < 0.7, "mean {m}");
        assert!((v - 50.0).abs() < 3.0, "variance {v}");
    }

    #[test]
    fn poisson_zero_mass_small_mean() {
        let mut s = RandomStream::new(12, 0);
        let zeros = (0..100_000).filter(|_| poisson(&mut s, 0.5).unwrap() == 0).count();
        let freq = zeros as f64 / 1e5;
        assert!((freq - (-0.5f64).exp()).abs() < 0.01, "{freq}");
    }

    #[test]
    fn poisson_moments_across_threshold() {
        for &lambda in &[1.0f64, 7.5, 29.9, 30.0, 31.0, 200.0, 12345.6] {
            let mut s = RandomStream::new(13, lambda.to_bits());
            let xs: Vec<f64> = (0..40_000).map(|_| poisson(&mut s, lambda).unwrap() as f64).collect();
            let (m, v) = mean_var(&xs);
            let se_mean = (lambda / 4e4).sqrt();
            let se_var = ((2.0 * lambda * lambda + lambda) / 4e4).sqrt();
            assert!((m - lambda).abs() < 5.0 * se_mean, "lambda {lambda}: mean {m}");
            assert!((v - lambda).abs() < 5.0 * se_var, "lambda {lambda}: var {v}");
        }
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        for k in 0..200u64 {
            let direct: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            assert!((ln_factorial(k) - direct).abs() < 1e-9 * direct.max(1.0), "k = {k}");
        }
    }

    #[test]
    fn cell_points_stay_inside() {
        let mut s = RandomStream::new(3, 0);
        let cell = GridCell {
            index: vec![0, 0],
            exponents: vec![1, 1],
        };
        let mut sum = [0.0; 2];
        for _ in 0..100_000 {
            let p = uniform_in_cell(&mut s, &cell);
            assert!(cell.contains(p.coords()));
            sum[0] += p.0[0];
            sum[1] += p.0[1];
        }
        for v in sum {
            assert!((v / 1e5 - 1.0).abs() < 0.02);
        }
        let far = GridCell {
            index: vec![-(1i64 << 50), 1 << 52],
            exponents: vec![0, -3],
        };
        for _ in 0..1000 {
            assert!(far.contains(uniform_in_cell(&mut s, &far).coords()));
        }
    }

    #[test]
    fn unit_cube_sample_counts() {
        let boxes = [AlignedBox::new(vec![0.0; 3], vec![1.0; 3]).unwrap()];
        let p = partition(&boxes).unwrap();
        let ci = build_class_index(&p).unwrap();
        let mut s = RandomStream::new(21, 0);
        let counts: Vec<f64> = (0..100)
            .map(|_| p_sample_class(&mut s, 0, 1000.0, &p, &ci).unwrap().0.points.len() as f64)
            .collect();
        let (m, _) = mean_var(&counts);
        // sd of the mean of 100 Pois(1000) draws is sqrt(10).
        assert!((m - 1000.0).abs() < 5.0 * 10f64.sqrt(), "{m}");
    }

    #[test]
    fn zero_density_is_empty() {
        let boxes = [AlignedBox::new(vec![0.0; 2], vec![1.5; 2]).unwrap()];
        let p = partition(&boxes).unwrap();
        let ci = build_class_index(&p).unwrap();
        let mut s = RandomStream::new(2, 0);
        let (sample, stats) = p_sample_class(&mut s, 0, 0.0, &p, &ci).unwrap();
        assert!(sample.points.is_empty());
        assert_eq!(stats.candidates, 0);
        assert!(matches!(
            p_sample_class(&mut s, 0, -1.0, &p, &ci),
            Err(SamplingError::InvalidDensity(_))
        ));
        assert!(matches!(
            p_sample_class(&mut s, 3, 1.0, &p, &ci),
            Err(SamplingError::UnknownClass { .. })
        ));
    }

    #[test]
    fn disjoint_squares_have_independent_counts() {
        let boxes = [
            AlignedBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            AlignedBox::new(vec![3.0, 0.0], vec![4.0, 1.0]).unwrap(),
        ];
        let p = partition(&boxes).unwrap();
        let ci = build_class_index(&p).unwrap();
        let mut s = RandomStream::new(5, 0);
        let runs = 2000;
        let mut a = Vec::with_capacity(runs);
        let mut b = Vec::with_capacity(runs);
        for _ in 0..runs {
            let (sample, _) = p_sample_class(&mut s, 0, 500.0, &p, &ci).unwrap();
            let left = sample.points.iter().filter(|x| x.0[0] <= 1.0).count();
            a.push(left as f64);
            b.push((sample.points.len() - left) as f64);
        }
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let se = (500.0 / runs as f64).sqrt();
        assert!((ma - 500.0).abs() < 5.0 * se && (mb - 500.0).abs() < 5.0 * se);
        // Var of a sample variance of Pois(500) over 2000 runs: sd ~ 500 * sqrt(2 / 2000).
        assert!((va - 500.0).abs() < 5.0 * 500.0 * (2.0 / runs as f64).sqrt());
        assert!((vb - 500.0).abs() < 5.0 * 500.0 * (2.0 / runs as f64).sqrt());
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (runs as f64 - 1.0);
        let corr = cov / (va * vb).sqrt();
        // Null sd of the sample correlation is 1 / sqrt(2000) = 0.022.
        assert!(corr.abs() < 5.0 / (runs as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn same_seed_same_sample() {
        let boxes = [
            AlignedBox::new(vec![0.1, 0.2], vec![1.3, 1.1]).unwrap(),
            AlignedBox::new(vec![0.7, 0.9], vec![1.9, 1.8]).unwrap(),
        ];
        let p = partition(&boxes).unwrap();
        let ci = build_class_index(&p).unwrap();
        let run = || {
            let mut s = RandomStream::new(99, 1);
            p_sample_class(&mut s, 0, 300.0, &p, &ci).unwrap().0.points
        };
        let (x, y) = (run(), run());
        assert_eq!(x.len(), y.len());
        for (a, b) in x.iter().zip(&y) {
            for (u, v) in a.0.iter().zip(&b.0) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}
