//! Browser bindings. Every export takes plain values and returns a JSON
//! string for the page script to draw.

use klee_core::estimate::{EstimateOptions, PreparedInstance};
use klee_core::exact::{exact_volume_with_cap, DEFAULT_CELL_CAP};
use klee_core::lowerbound::{epsilon_for_ell, recover_inner_product, GapSign, HiddenInstance, Side};
use klee_core::querymodel::QuerySession;
use klee_core::{generate, klm_baseline, parse_instance, write_instance, AlignedBox, InstanceKind, RandomStream};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Exact volumes are skipped above this many compressed cells to keep the
/// page responsive.
const DEMO_CELL_CAP: u128 = 4_000_000;

#[derive(Serialize)]
struct BoxView {
    lo: Vec<f64>,
    hi: Vec<f64>,
    class_id: u32,
}

fn load(text: &str) -> Result<(Vec<AlignedBox>, PreparedInstance), String> {
    let boxes = parse_instance(text).map_err(|e| e.to_string())?;
    let prepared = PreparedInstance::new(&boxes).map_err(|e| e.to_string())?;
    Ok((boxes, prepared))
}

fn box_views(prepared: &PreparedInstance) -> Vec<BoxView> {
    let p = prepared.partition();
    p.boxes()
        .iter()
        .zip(p.class_ids())
        .map(|(b, &c)| BoxView { lo: b.lo().to_vec(), hi: b.hi().to_vec(), class_id: c })
        .collect()
}

pub fn generate_text(kind: &str, n: usize, d: usize, seed: u64) -> Result<String, String> {
    let kind: InstanceKind = kind.parse().map_err(|e: klee_core::instance::GenerateError| e.to_string())?;
    let boxes = generate(kind, n, d, seed).map_err(|e| e.to_string())?;
    Ok(write_instance(&boxes))
}

/// One run of the main estimator with its kept points, plus the crude
/// estimate and, when cheap enough, the exact volume.
pub fn estimate_json(text: &str, epsilon: f64, seed: u64) -> Result<String, String> {
    let (boxes, prepared) = load(text)?;
    let (report, kept) = prepared
        .estimate_with_points(epsilon, &mut RandomStream::new(seed, 0), EstimateOptions::default())
        .map_err(|e| e.to_string())?;
    let exact = exact_volume_with_cap(&boxes, DEMO_CELL_CAP.min(DEFAULT_CELL_CAP)).ok();
    Ok(json!({
        "boxes": box_views(&prepared),
        "classes": prepared.partition().num_classes(),
        "report": report,
        "kept": kept,
        "exact": exact,
    })
    .to_string())
}

/// The grid cells touched by class `t` and the class's boxes.
pub fn class_cells_json(text: &str, t: usize) -> Result<String, String> {
    let (_, prepared) = load(text)?;
    let p = prepared.partition();
    if t >= p.num_classes() {
        return Err(format!("class {t} out of range, instance has {}", p.num_classes()));
    }
    let cells = prepared.class_cells(t);
    let cell_views: Vec<_> = cells
        .cells()
        .map(|c| {
            let d = c.index.len();
            json!({
                "lo": (0..d).map(|k| c.lower(k)).collect::<Vec<_>>(),
                "hi": (0..d).map(|k| c.upper(k)).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({
        "boxes": box_views(&prepared),
        "classes": p.num_classes(),
        "class": t,
        "exponents": p.class_type(t).exponents(),
        "cells": cell_views,
        "cell_volume": cells.volume(),
    })
    .to_string())
}

/// Builds a hidden instance at the gap edge, runs the coverage baseline on
/// it and reports the recovered inner product and the bits it read.
pub fn lowerbound_json(n: usize, ell: usize, positive: bool, seed: u64) -> Result<String, String> {
    let mut stream = RandomStream::new(seed, 0);
    let sign = if positive { GapSign::Positive } else { GapSign::Negative };
    let inst = HiddenInstance::build(n, ell, sign, &mut stream).map_err(|e| e.to_string())?;
    let union = inst.union_cardinality().map_err(|e| e.to_string())?;
    let points: Vec<Vec<(i64, i64)>> = [Side::X, Side::Y]
        .into_iter()
        .flat_map(|side| (1..=n).map(move |i| (side, i)))
        .map(|(side, i)| inst.object_points(side, i))
        .collect();
    let objects = inst.objects();
    let mut session = QuerySession::new(&objects);
    let eps = epsilon_for_ell(ell);
    let report = klm_baseline(&mut session, eps, &mut stream, None).map_err(|e| e.to_string())?;
    let totals = session.snapshot();
    let recovered = recover_inner_product(report.estimate, n, ell);
    Ok(json!({
        "n": n,
        "ell": ell,
        "epsilon": eps,
        "inner_product": inst.inner_product(),
        "union": union,
        "estimate": report.estimate,
        "recovered": recovered,
        "sign_correct": (recovered > 0.0) == (inst.inner_product() > 0),
        "queries": totals.total,
        "bit_accesses": totals.bit_accesses,
        "distinct_bits": totals.distinct_bits,
        "objects": points,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn generate_instance(kind: &str, n: usize, d: usize, seed: u32) -> Result<String, JsValue> {
    generate_text(kind, n, d, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn estimate(text: &str, epsilon: f64, seed: u32) -> Result<String, JsValue> {
    estimate_json(text, epsilon, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn class_cells(text: &str, t: usize) -> Result<String, JsValue> {
    class_cells_json(text, t).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn lowerbound(n: usize, ell: usize, positive: bool, seed: u32) -> Result<String, JsValue> {
    lowerbound_json(n, ell, positive, seed as u64).map_err(|e| JsValue::from_str(&e))
}
