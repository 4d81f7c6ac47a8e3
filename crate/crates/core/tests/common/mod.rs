#![allow(dead_code)]

use floquet::model::{build_model, derived_constants, CoefficientModel, ModelConfig, ModelConstants, SamplingPlan};
use floquet::semiflow::TruncatedBox;
use serde_json::{json, Value};

pub fn confined_params() -> Value {
    json!({"kappa": 1.0, "c": 0.5, "a0": 1.0, "a2": 1.0, "beta": 2.0, "sigma": 0.2})
}

pub fn rank_one_params() -> Value {
    json!({"a0": -0.5, "beta": 2.0})
}

pub fn config(family: &str, params: Value, n: usize, dimension: usize) -> ModelConfig {
    serde_json::from_value(json!({
        "family": family, "period": 1.0, "dimension": dimension, "params": params,
        "box": {"half_width": 6.0, "cells_per_dim": n}
    }))
    .unwrap()
}

pub fn build(family: &str, params: Value, n: usize) -> (CoefficientModel, TruncatedBox) {
    let cfg = config(family, params, n, 1);
    (build_model(&cfg).unwrap(), cfg.truncated_box().unwrap())
}

pub fn build_with_constants(family: &str, params: Value, n: usize) -> (CoefficientModel, TruncatedBox, ModelConstants) {
    let (m, g) = build(family, params, n);
    let c = derived_constants(&m, &g, &SamplingPlan::default());
    (m, g, c)
}

pub fn confined(n: usize) -> (CoefficientModel, TruncatedBox) {
    build("gaussian_confined", confined_params(), n)
}

pub fn rank_one(n: usize) -> (CoefficientModel, TruncatedBox) {
    build("rank_one", rank_one_params(), n)
}

/// Path of a file under the repository's `configs/` directory.
pub fn repo_config(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// `report.json` with the `timings` object removed.
pub fn report_without_timings(path: &std::path::Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}
