use klee_core::estimate::{klm_baseline, BoostOptions, EstimateOptions, PreparedInstance};
use klee_core::exact::exact_volume;
use klee_core::experiment::klm_on_boxes;
use klee_core::instance::{generate, InstanceKind};
use klee_core::lowerbound::{epsilon_for_ell, recover_inner_product, GapSign, HiddenInstance};
use klee_core::querymodel::QuerySession;
use klee_core::range_index::{naive_appears, naive_in_class};
use klee_core::{AlignedBox, RandomStream};

fn b(lo: &[f64], hi: &[f64]) -> AlignedBox {
    AlignedBox::new(lo.to_vec(), hi.to_vec()).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn three_boxes() -> Vec<AlignedBox> {
    vec![b(&[0.0, 0.0], &[4.0, 4.0]), b(&[2.0, 2.0], &[6.0, 6.0]), b(&[10.0, 10.0], &[11.0, 11.0])]
}

fn hit_rate(prepared: &PreparedInstance, eps: f64, v: f64, runs: u64, seed: u64) -> f64 {
    (0..runs)
        .filter(|&r| {
            let e = prepared.estimate(eps, &mut RandomStream::new(seed, r), EstimateOptions::default()).unwrap();
            (e.estimate - v).abs() <= eps * v
        })
        .count() as f64
        / runs as f64
}

#[test]
fn crude_is_unbiased_on_disjoint_boxes() {
    let boxes = vec![b(&[0.0, 0.0], &[1.0, 1.0]), b(&[3.0, 0.0], &[4.0, 1.0])];
    let prepared = PreparedInstance::new(&boxes).unwrap();
    let xs: Vec<f64> = (0..500).map(|r| prepared.crude(&mut RandomStream::new(1, r)).unwrap().estimate).collect();
    let (m, se) = mean_se(&xs);
    // Disjoint boxes: every draw counts, so the estimate is exact.
    assert!((m - 2.0).abs() <= 4.0 * se.max(1e-12), "mean {m}");
}

#[test]
fn crude_is_unbiased_on_overlapping_boxes() {
    for (seed, kind) in [(2, InstanceKind::Uniform), (3, InstanceKind::Cubes)] {
        let boxes = generate(kind, 40, 2, seed).unwrap();
        let v = exact_volume(&boxes).unwrap();
        let prepared = PreparedInstance::new(&boxes).unwrap();
        let xs: Vec<f64> =
            (0..500).map(|r| prepared.crude(&mut RandomStream::new(seed, r)).unwrap().estimate).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - v).abs() <= 4.0 * se, "{kind:?}: mean {m} vs {v} (se {se})");
    }
}

#[test]
fn main_on_unit_cube_and_three_boxes() {
    let cube = PreparedInstance::new(&[b(&[0.0; 3], &[1.0; 3])]).unwrap();
    assert!(hit_rate(&cube, 0.1, 1.0, 200, 10) >= 0.70);
    let three = PreparedInstance::new(&three_boxes()).unwrap();
    assert_eq!(exact_volume(&three_boxes()).unwrap(), 29.0);
    assert!(hit_rate(&three, 0.05, 29.0, 200, 11) >= 0.70);
}

#[test]
fn main_is_unbiased_and_kept_count_is_poisson() {
    let boxes = generate(InstanceKind::Uniform, 60, 2, 12).unwrap();
    let v = exact_volume(&boxes).unwrap();
    let prepared = PreparedInstance::new(&boxes).unwrap();
    let mut ests = Vec::new();
    let mut z = Vec::new();
    for r in 0..500 {
        let rep = prepared.estimate(0.3, &mut RandomStream::new(12, r), EstimateOptions::default()).unwrap();
        let p = rep.density.unwrap();
        ests.push(rep.estimate);
        z.push((rep.counters.kept as f64 - p * v) / (p * v).sqrt());
    }
    let (m, se) = mean_se(&ests);
    assert!((m - v).abs() <= 4.0 * se, "mean {m} vs {v}");
    // Given p, N ~ Pois(pV): standardized counts have mean 0 and variance 1.
    let (zm, zse) = mean_se(&z);
    assert!(zm.abs() <= 4.0 * zse, "z mean {zm}");
    let zv = z.iter().map(|x| (x - zm).powi(2)).sum::<f64>() / (z.len() as f64 - 1.0);
    assert!((zv - 1.0).abs() <= 4.0 * (2.0 / (z.len() as f64 - 1.0)).sqrt(), "z var {zv}");
}

#[test]
fn accurate_when_crude_succeeds() {
    let boxes = generate(InstanceKind::Cubes, 80, 3, 13).unwrap();
    let v = exact_volume(&boxes).unwrap();
    let prepared = PreparedInstance::new(&boxes).unwrap();
    let (mut good, mut hits) = (0, 0);
    for r in 0..200 {
        let rep = prepared.estimate(0.15, &mut RandomStream::new(13, r), EstimateOptions::default()).unwrap();
        let c = rep.crude_estimate.unwrap();
        if c >= v / 2.0 && c <= 2.0 * v {
            good += 1;
            hits += ((rep.estimate - v).abs() <= 0.15 * v) as u32;
        }
    }
    assert!(good > 0 && hits as f64 / good as f64 >= 0.70);
}

#[test]
fn kept_points_lie_in_their_class_region() {
    let boxes = generate(InstanceKind::Uniform, 50, 2, 14).unwrap();
    let prepared = PreparedInstance::new(&boxes).unwrap();
    let part = prepared.partition();
    for r in 0..20 {
        let (rep, kept) = prepared
            .estimate_with_points(0.2, &mut RandomStream::new(14, r), EstimateOptions::default())
            .unwrap();
        assert_eq!(kept.len() as u64, rep.counters.kept);
        for k in &kept {
            let x = k.point.coords();
            assert!(naive_in_class(part, x, k.class_id));
            assert!(!naive_appears(part.boxes(), x, part.last_label(k.class_id) + 1));
        }
    }
}

#[test]
fn counters_match_instrumented_totals() {
    let boxes = generate(InstanceKind::Cubes, 70, 2, 15).unwrap();
    let prepared = PreparedInstance::new(&boxes).unwrap();
    let rep = prepared.estimate(0.2, &mut RandomStream::new(15, 0), EstimateOptions::default()).unwrap();
    let c = rep.counters;
    assert_eq!(c.crude_samples, 40 * 70);
    assert_eq!(c.in_class_queries, c.candidates);
    assert_eq!(c.appears_queries, c.crude_samples + c.points_sampled);
    assert!(c.kept <= c.points_sampled && c.points_sampled <= c.candidates);
    assert_eq!(c.work(), c.crude_samples + c.candidates + c.appears_queries + c.in_class_queries);

    let k = klm_on_boxes(&boxes, 0.2, &mut RandomStream::new(15, 1), None).unwrap();
    assert_eq!(k.counters.model_queries(), (8.0 * 70.0 / 0.04f64).ceil() as u64);
    assert_eq!(k.counters.vol_queries, 70);
}

#[test]
fn sampled_points_respect_the_lemma_bound_at_half_epsilon() {
    for (seed, d) in [(16u64, 1usize), (17, 2), (18, 3)] {
        let boxes = generate(InstanceKind::Uniform, 100, d, seed).unwrap();
        let prepared = PreparedInstance::new(&boxes).unwrap();
        let bound = 2f64.powi(3 * d as i32 + 5) * (100f64).log2().powi(d as i32) / 0.25;
        for r in 0..50 {
            let rep = prepared.estimate(0.5, &mut RandomStream::new(seed, r), EstimateOptions::default()).unwrap();
            assert!((rep.counters.points_sampled as f64) <= bound + 5.0 * bound.sqrt());
        }
    }
}

#[test]
fn boosted_on_unit_cube() {
    let cube = PreparedInstance::new(&[b(&[0.0; 2], &[1.0; 2])]).unwrap();
    let hits = (0..100)
        .filter(|&r| {
            let e = cube.boosted(0.1, &mut RandomStream::new(19, r), 9, BoostOptions::default()).unwrap();
            (e.estimate - 1.0).abs() <= 0.1
        })
        .count();
    assert!(hits >= 85);
    let starved = cube.estimate(0.1, &mut RandomStream::new(19, 0), EstimateOptions { work_budget: Some(0) });
    assert!(starved.unwrap().aborted);
    assert!(cube
        .boosted(0.1, &mut RandomStream::new(19, 0), 9, BoostOptions { budget_override: Some(0) })
        .is_err());
}

#[test]
fn klm_is_unbiased_on_disjoint_objects() {
    let boxes = vec![b(&[0.0, 0.0], &[2.0, 1.0]), b(&[5.0, 5.0], &[6.0, 7.0])];
    let xs: Vec<f64> = (0..500)
        .map(|r| klm_on_boxes(&boxes, 0.3, &mut RandomStream::new(20, r), None).unwrap().estimate)
        .collect();
    let (m, se) = mean_se(&xs);
    assert!((m - 4.0).abs() <= 4.0 * se, "mean {m} (se {se})");
}

#[test]
fn klm_on_fifty_squares() {
    let mut s = RandomStream::new(21, 0);
    let boxes: Vec<AlignedBox> = (0..50)
        .map(|_| {
            let x = 10.0 * s.uniform();
            let y = 10.0 * s.uniform();
            b(&[x, y], &[x + 1.0, y + 1.0])
        })
        .collect();
    let v = exact_volume(&boxes).unwrap();
    let good = (0..100)
        .filter(|&r| {
            let e = klm_on_boxes(&boxes, 0.2, &mut RandomStream::new(22, r), None).unwrap().estimate;
            (e - v).abs() <= 0.2 * v
        })
        .count();
    assert!(good >= 67, "{good}");
}

#[test]
fn klm_on_hidden_instances_recovers_the_sign() {
    let (n, ell) = (4usize, 9usize);
    let eps = epsilon_for_ell(ell);
    let mut recovered_ok = 0;
    for trial in 0..40u64 {
        let sign = if trial % 2 == 0 { GapSign::Positive } else { GapSign::Negative };
        let inst = HiddenInstance::build(n, ell, sign, &mut RandomStream::new(23, trial)).unwrap();
        let truth = inst.union_cardinality().unwrap() as f64;
        let objs = inst.objects();
        let mut session = QuerySession::new(&objs);
        let rep = klm_baseline(&mut session, eps, &mut RandomStream::new(24, trial), None).unwrap();
        let t = session.snapshot();
        assert!(t.bit_accesses <= t.sample + t.contains);
        if (rep.estimate - truth).abs() <= eps * truth {
            let rec = recover_inner_product(rep.estimate, n, ell);
            assert!((rec - inst.inner_product() as f64).abs() <= 6.0 * eps * ell as f64);
            recovered_ok += 1;
        }
    }
    assert!(recovered_ok > 20);
}
