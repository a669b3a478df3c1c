//! The downstream consumer: assemble training data from shared and private
//! performance records and fit a baseline runtime model.
//!
//! The model is a deliberately small 4-term scale-out basis over the node
//! count n: (1, 1/n, log2 n, n). It captures fixed costs, perfectly
//! parallelizable work, coordination overhead and linear per-node cost well
//! enough to demonstrate the collaborative loop end to end; anything richer
//! plugs in behind the same shapes.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cid::Cid;
use crate::data_stores::PerformanceRecord;
use crate::engine::{Engine, QueryRow, ValidityPolicy};

pub const BASIS_SIZE: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("need at least {BASIS_SIZE} matching rows, got {0}")]
    InsufficientData(usize),
    #[error("design matrix is rank deficient (rank {0})")]
    RankDeficient(usize),
}

/// Where a training row came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    LocalPrivate,
    Shared { cid: Cid },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub record: PerformanceRecord,
    pub provenance: Provenance,
}

/// Rows assembled for model training, with per-row provenance and a report
/// of anything that could not be included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub rows: Vec<TrainingRow>,
    /// Data cids of contributions whose payload is not available locally.
    pub missing: Vec<Cid>,
    /// Data cids whose payload failed record invariants and was dropped.
    pub dropped: Vec<Cid>,
    pub filter: BTreeMap<String, String>,
    pub validity: String,
}

impl TrainingSet {
    /// CSV export; one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "workload,framework,framework_version,machine_type,node_count,input_size_bytes,runtime_ms,provenance\n",
        );
        for row in &self.rows {
            let r = &row.record;
            let provenance = match &row.provenance {
                Provenance::LocalPrivate => "local_private".to_string(),
                Provenance::Shared { cid } => format!("shared:{cid}"),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.workload,
                r.framework,
                r.framework_version,
                r.machine_type,
                r.node_count,
                r.input_size_bytes,
                r.runtime_ms,
                provenance
            ));
        }
        out
    }
}

/// Assemble the training set from the engine's local state: shared
/// contributions passing the filter and validity policy, merged with private
/// records, deduplicated by data cid. Pure over the current snapshot; the
/// caller fetches missing blocks first if it wants them included.
pub fn assemble_training_set(
    engine: &mut Engine,
    filter: &BTreeMap<String, String>,
    validity: ValidityPolicy,
) -> TrainingSet {
    let rows: Vec<QueryRow> = engine.query(filter, validity);
    let mut seen: BTreeMap<Cid, ()> = BTreeMap::new();
    let mut out = TrainingSet {
        rows: Vec::new(),
        missing: Vec::new(),
        dropped: Vec::new(),
        filter: filter.clone(),
        validity: format!("{validity:?}"),
    };
    for row in rows {
        let cid = row.contribution.data_cid;
        if seen.contains_key(&cid) {
            continue;
        }
        if !row.available_locally {
            out.missing.push(cid);
            continue;
        }
        let Ok(bytes) = engine.store_mut().get_block(&cid) else {
            out.missing.push(cid);
            continue;
        };
        match PerformanceRecord::parse(&bytes) {
            Ok(record) if record.validate().is_ok() => {
                seen.insert(cid, ());
                out.rows.push(TrainingRow { record, provenance: Provenance::Shared { cid } });
            }
            _ => {
                seen.insert(cid, ());
                out.dropped.push(cid);
            }
        }
    }
    for (cid, record) in engine.private_records() {
        if seen.contains_key(&cid) {
            continue;
        }
        if record.validate().is_ok() {
            seen.insert(cid, ());
            out.rows.push(TrainingRow { record, provenance: Provenance::LocalPrivate });
        } else {
            out.dropped.push(cid);
        }
    }
    out
}

/// Fitted runtime model: weights over the scale-out basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel {
    pub workload: String,
    pub framework: String,
    /// Weights for (1, 1/n, log2 n, n).
    pub weights: [f64; BASIS_SIZE],
    pub training_rows: usize,
    pub rmse: f64,
    pub max_abs_residual: f64,
}

fn basis(node_count: f64) -> [f64; BASIS_SIZE] {
    [1.0, 1.0 / node_count, node_count.log2(), node_count]
}

/// Ordinary least squares of runtime over the 4-term basis in node count,
/// restricted to rows matching (workload, framework).
pub fn fit_runtime_model(
    ts: &TrainingSet,
    workload: &str,
    framework: &str,
) -> Result<RuntimeModel, ModelError> {
    let rows: Vec<&PerformanceRecord> = ts
        .rows
        .iter()
        .map(|r| &r.record)
        .filter(|r| r.workload == workload && r.framework == framework)
        .collect();
    if rows.len() < BASIS_SIZE {
        return Err(ModelError::InsufficientData(rows.len()));
    }

    let design = DMatrix::from_fn(rows.len(), BASIS_SIZE, |i, j| basis(rows[i].node_count as f64)[j]);
    let target = DVector::from_fn(rows.len(), |i, _| rows[i].runtime_ms as f64);

    let svd = design.clone().svd(true, true);
    let max_singular = svd.singular_values.max();
    let tolerance = max_singular * (rows.len().max(BASIS_SIZE) as f64) * f64::EPSILON * 16.0;
    let rank = svd.singular_values.iter().filter(|s| **s > tolerance).count();
    if rank < BASIS_SIZE {
        return Err(ModelError::RankDeficient(rank));
    }
    let solution = svd.solve(&target, tolerance).expect("svd computed with u and v");

    let residuals = &design * &solution - &target;
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / rows.len() as f64).sqrt();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));

    Ok(RuntimeModel {
        workload: workload.to_string(),
        framework: framework.to_string(),
        weights: [solution[0], solution[1], solution[2], solution[3]],
        training_rows: rows.len(),
        rmse,
        max_abs_residual,
    })
}

/// A prediction; negative raw values are clamped to zero and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub runtime_ms: f64,
    pub clamped: bool,
}

pub fn predict_runtime(model: &RuntimeModel, node_count: u32) -> Prediction {
    assert!(node_count >= 1, "node_count must be >= 1");
    let b = basis(node_count as f64);
    let raw: f64 = model.weights.iter().zip(b.iter()).map(|(w, x)| w * x).sum();
    if raw < 0.0 {
        log::warn!("prediction clamped to zero for node_count={node_count} (raw {raw})");
        Prediction { runtime_ms: 0.0, clamped: true }
    } else {
        Prediction { runtime_ms: raw, clamped: false }
    }
}

/// A record whose runtime follows `w0 + w1/n + w2*log2(n) + w3*n` exactly.
/// Used by tests and the trace generator; the weights and node counts must
/// combine to an integer runtime.
pub fn record_from_weights(
    workload: &str,
    framework: &str,
    weights: [f64; BASIS_SIZE],
    node_count: u32,
) -> PerformanceRecord {
    let b = basis(node_count as f64);
    let runtime: f64 = weights.iter().zip(b.iter()).map(|(w, x)| w * x).sum();
    assert!(
        (runtime - runtime.round()).abs() < 1e-9 && runtime >= 1.0,
        "weights {weights:?} at n={node_count} give non-integral runtime {runtime}"
    );
    PerformanceRecord {
        workload: workload.to_string(),
        framework: framework.to_string(),
        framework_version: "3.1".to_string(),
        machine_type: "e2-standard-2".to_string(),
        node_count,
        input_size_bytes: 256 * 1024 * 1024,
        runtime_ms: runtime.round() as u64,
        extra_metrics: BTreeMap::new(),
    }
}

/// Convenience for tests and the simulator: a plausible synthetic record.
pub fn synthetic_record(workload: &str, framework: &str, node_count: u32, runtime_ms: u64) -> PerformanceRecord {
    PerformanceRecord {
        workload: workload.to_string(),
        framework: framework.to_string(),
        framework_version: "3.1".to_string(),
        machine_type: "e2-standard-2".to_string(),
        node_count,
        input_size_bytes: 128 * 1024 * 1024,
        runtime_ms,
        extra_metrics: BTreeMap::new(),
    }
}

/// The required contribution attributes, filled in.
pub fn default_attributes(platform: &str, region: &str) -> BTreeMap<String, String> {
    [
        ("platform", platform),
        ("framework", "spark"),
        ("workload", "sort"),
        ("submitter_region", region),
        ("schema_version", "1"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn training_set_from(records: Vec<PerformanceRecord>) -> TrainingSet {
        TrainingSet {
            rows: records
                .into_iter()
                .map(|record| TrainingRow { record, provenance: Provenance::LocalPrivate })
                .collect(),
            missing: Vec::new(),
            dropped: Vec::new(),
            filter: BTreeMap::new(),
            validity: "Any".to_string(),
        }
    }

    // Exact-interpolation oracle: rows generated from known weights at node
    // counts where the basis terms combine to integers, so the integral
    // runtime_ms field loses nothing and the fit must recover the weights.
    // (1000, 5000, 200, 10) at n in {1, 2, 4, 8}: runtimes 6010, 3720,
    // 2690, 2305 — verified integral by hand.
    #[test]
    fn fit_recovers_generating_weights_exactly() {
        let weights = [1000.0, 5000.0, 200.0, 10.0];
        let records: Vec<PerformanceRecord> = [1u32, 2, 4, 8]
            .iter()
            .map(|n| record_from_weights("sort", "spark", weights, *n))
            .collect();
        assert_eq!(
            records.iter().map(|r| r.runtime_ms).collect::<Vec<_>>(),
            vec![6010, 3720, 2690, 2305]
        );
        let model = fit_runtime_model(&training_set_from(records), "sort", "spark").unwrap();
        for (got, want) in model.weights.iter().zip(weights.iter()) {
            assert!((got - want).abs() / want.abs() < 1e-6, "weights {:?}", model.weights);
        }
        assert!(model.rmse < 1e-6);
    }

    // Overdetermined variant: five node counts, weights chosen so every
    // basis combination stays integral (3200/16 = 200, 3200/32 = 100).
    #[test]
    fn overdetermined_fit_recovers_weights() {
        let weights = [1000.0, 3200.0, 200.0, 10.0];
        let records: Vec<PerformanceRecord> = [2u32, 4, 8, 16, 32]
            .iter()
            .map(|n| record_from_weights("sort", "spark", weights, *n))
            .collect();
        let model = fit_runtime_model(&training_set_from(records), "sort", "spark").unwrap();
        for (got, want) in model.weights.iter().zip(weights.iter()) {
            assert!((got - want).abs() / want.abs() < 1e-6, "weights {:?}", model.weights);
        }
    }

    #[test]
    fn prediction_matches_generator_between_training_points() {
        let weights = [1000.0, 5000.0, 200.0, 10.0];
        let records: Vec<PerformanceRecord> =
            [1u32, 2, 4, 8].iter().map(|n| record_from_weights("sort", "spark", weights, *n)).collect();
        let model = fit_runtime_model(&training_set_from(records), "sort", "spark").unwrap();
        let predicted = predict_runtime(&model, 8).runtime_ms;
        assert!((predicted - 2305.0).abs() / 2305.0 < 1e-6);
    }

    #[test]
    fn three_rows_is_insufficient() {
        let weights = [1000.0, 5000.0, 200.0, 10.0];
        let records: Vec<PerformanceRecord> =
            [1u32, 2, 4].iter().map(|n| record_from_weights("sort", "spark", weights, *n)).collect();
        assert_eq!(
            fit_runtime_model(&training_set_from(records), "sort", "spark"),
            Err(ModelError::InsufficientData(3))
        );
    }

    #[test]
    fn collinear_rows_are_rank_deficient() {
        let records: Vec<PerformanceRecord> =
            (0..5).map(|i| synthetic_record("sort", "spark", 4, 1000 + i)).collect();
        match fit_runtime_model(&training_set_from(records), "sort", "spark") {
            Err(ModelError::RankDeficient(rank)) => assert!(rank < BASIS_SIZE),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn rows_for_other_workloads_are_ignored() {
        let weights = [1000.0, 5000.0, 200.0, 10.0];
        let mut records: Vec<PerformanceRecord> =
            [1u32, 2, 4, 8].iter().map(|n| record_from_weights("sort", "spark", weights, *n)).collect();
        records.push(synthetic_record("join", "spark", 16, 99_999));
        let model = fit_runtime_model(&training_set_from(records), "sort", "spark").unwrap();
        assert_eq!(model.training_rows, 4);
    }

    #[test]
    fn zero_weights_predict_zero() {
        let model = RuntimeModel {
            workload: "sort".into(),
            framework: "spark".into(),
            weights: [0.0; 4],
            training_rows: 4,
            rmse: 0.0,
            max_abs_residual: 0.0,
        };
        let p = predict_runtime(&model, 16);
        assert_eq!(p.runtime_ms, 0.0);
        assert!(!p.clamped);
    }

    #[test]
    fn node_count_one_drops_log_term() {
        let model = RuntimeModel {
            workload: "sort".into(),
            framework: "spark".into(),
            weights: [7.0, 11.0, 1000.0, 3.0],
            training_rows: 4,
            rmse: 0.0,
            max_abs_residual: 0.0,
        };
        // log2(1) = 0, so the prediction is w0 + w1 + w3.
        assert_eq!(predict_runtime(&model, 1).runtime_ms, 7.0 + 11.0 + 3.0);
    }

    #[test]
    fn negative_prediction_clamps_to_zero_with_flag() {
        let model = RuntimeModel {
            workload: "sort".into(),
            framework: "spark".into(),
            weights: [-5000.0, 0.0, 0.0, 1.0],
            training_rows: 4,
            rmse: 0.0,
            max_abs_residual: 0.0,
        };
        let p = predict_runtime(&model, 2);
        assert_eq!(p.runtime_ms, 0.0);
        assert!(p.clamped);
    }

    /// Independent optimality oracle: solve the normal equations
    /// (X'X) w = X'y by brute-force Gaussian elimination and compare.
    fn normal_equations_oracle(rows: &[(u32, f64)]) -> [f64; BASIS_SIZE] {
        let n = rows.len();
        let mut xtx = [[0.0f64; BASIS_SIZE]; BASIS_SIZE];
        let mut xty = [0.0f64; BASIS_SIZE];
        for (node_count, y) in rows.iter().take(n) {
            let b = basis(*node_count as f64);
            for i in 0..BASIS_SIZE {
                for j in 0..BASIS_SIZE {
                    xtx[i][j] += b[i] * b[j];
                }
                xty[i] += b[i] * y;
            }
        }
        // Gaussian elimination with partial pivoting.
        let mut a = xtx;
        let mut rhs = xty;
        for col in 0..BASIS_SIZE {
            let pivot = (col..BASIS_SIZE)
                .max_by(|x, y| a[*x][col].abs().partial_cmp(&a[*y][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            rhs.swap(col, pivot);
            for row in (col + 1)..BASIS_SIZE {
                let factor = a[row][col] / a[col][col];
                for k in col..BASIS_SIZE {
                    a[row][k] -= factor * a[col][k];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
        let mut w = [0.0f64; BASIS_SIZE];
        for row in (0..BASIS_SIZE).rev() {
            let mut acc = rhs[row];
            for k in (row + 1)..BASIS_SIZE {
                acc -= a[row][k] * w[k];
            }
            w[row] = acc / a[row][row];
        }
        w
    }

    #[test]
    fn fit_agrees_with_normal_equations_oracle() {
        // Noisy (non-interpolating) instances up to 8 rows.
        let instances: Vec<Vec<(u32, f64)>> = vec![
            vec![(1, 6000.0), (2, 3800.0), (4, 2700.0), (8, 2300.0), (16, 2400.0)],
            vec![(2, 900.0), (3, 800.0), (5, 700.0), (7, 720.0), (11, 800.0), (13, 850.0)],
            vec![
                (1, 100.0),
                (2, 90.0),
                (4, 85.0),
                (8, 95.0),
                (16, 130.0),
                (32, 210.0),
                (64, 380.0),
                (128, 700.0),
            ],
        ];
        for rows in instances {
            let records: Vec<PerformanceRecord> = rows
                .iter()
                .map(|(n, y)| synthetic_record("sort", "spark", *n, *y as u64))
                .collect();
            let model = fit_runtime_model(&training_set_from(records), "sort", "spark").unwrap();
            let oracle = normal_equations_oracle(
                &rows.iter().map(|(n, y)| (*n, y.round())).collect::<Vec<_>>(),
            );
            for (got, want) in model.weights.iter().zip(oracle.iter()) {
                assert!(
                    (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                    "fit {:?} vs oracle {:?}",
                    model.weights,
                    oracle
                );
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let weights = [1000.0, 5000.0, 200.0, 10.0];
        let records: Vec<PerformanceRecord> =
            [1u32, 2, 4, 8].iter().map(|n| record_from_weights("sort", "spark", weights, *n)).collect();
        let ts = training_set_from(records);
        let a = fit_runtime_model(&ts, "sort", "spark").unwrap();
        let b = fit_runtime_model(&ts, "sort", "spark").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let ts = training_set_from(vec![synthetic_record("sort", "spark", 4, 1000)]);
        let csv = ts.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("workload,framework"));
        assert!(lines[1].contains("sort,spark"));
    }
}
