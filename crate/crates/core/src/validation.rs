//! Deterministic data validation, opportunistic vote consolidation, and the
//! cost models the simulator uses to study validation scaling.
//!
//! Validators must be deterministic: the same input bytes always produce the
//! same verdict, otherwise peers could never rely on each other's results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cid::Cid;
use crate::data_stores::{PerformanceRecord, ValidationRecord, Verdict};

/// Default range rule: one week.
pub const DEFAULT_MAX_RUNTIME_MS: u64 = 7 * 24 * 60 * 60 * 1000;
/// Default range rule: largest plausible cluster.
pub const DEFAULT_MAX_NODE_COUNT: u32 = 10_000;
/// Default range rule: 1 PiB input.
pub const DEFAULT_MAX_INPUT_SIZE_BYTES: u64 = 1 << 50;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("bytes do not hash to {0}")]
    IntegrityFailure(Cid),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("responses reference different subject cids")]
    MixedSubjects,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostModelError {
    #[error("cost model parameter out of range: {0}")]
    BadParameter(&'static str),
}

/// Which validation pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorKind {
    /// Parse as a performance record, check invariants and range rules.
    BuiltinSchemaRange,
    /// Fixed-verdict stub used in simulations where only cost matters.
    CostModelStub,
}

/// A validator's identity and configuration. `code_cid` is reserved:
/// pipelines are addressable as blocks but are not executed in this version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorSpec {
    pub validator_id: String,
    pub version: String,
    pub kind: ValidatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_cid: Option<Cid>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl Default for ValidatorSpec {
    fn default() -> Self {
        ValidatorSpec {
            validator_id: "builtin-schema-range".to_string(),
            version: "1".to_string(),
            kind: ValidatorKind::BuiltinSchemaRange,
            code_cid: None,
            params: BTreeMap::new(),
        }
    }
}

/// Plausibility bounds applied by the builtin validator; gross corruption is
/// rejected without excluding real traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeRules {
    pub max_runtime_ms: u64,
    pub max_node_count: u32,
    pub max_input_size_bytes: u64,
}

impl Default for RangeRules {
    fn default() -> Self {
        RangeRules {
            max_runtime_ms: DEFAULT_MAX_RUNTIME_MS,
            max_node_count: DEFAULT_MAX_NODE_COUNT,
            max_input_size_bytes: DEFAULT_MAX_INPUT_SIZE_BYTES,
        }
    }
}

/// Run a validator over payload bytes. Deterministic by construction: the
/// verdict is a pure function of (bytes, spec, rules).
pub fn validate_local(
    subject_cid: Cid,
    bytes: &[u8],
    spec: &ValidatorSpec,
    rules: &RangeRules,
    now_ms: u64,
) -> Result<ValidationRecord, ValidationError> {
    if !subject_cid.matches(bytes) {
        return Err(ValidationError::IntegrityFailure(subject_cid));
    }
    let (verdict, detail) = match spec.kind {
        ValidatorKind::BuiltinSchemaRange => schema_range_verdict(bytes, rules),
        ValidatorKind::CostModelStub => {
            let verdict = match spec.params.get("verdict").map(String::as_str) {
                Some("invalid") => Verdict::Invalid,
                Some("inconclusive") => Verdict::Inconclusive,
                _ => Verdict::Valid,
            };
            (verdict, "cost model stub".to_string())
        }
    };
    Ok(ValidationRecord {
        subject_cid,
        verdict,
        validator_id: spec.validator_id.clone(),
        validator_version: spec.version.clone(),
        produced_at: now_ms,
        detail,
    })
}

fn schema_range_verdict(bytes: &[u8], rules: &RangeRules) -> (Verdict, String) {
    let record = match PerformanceRecord::parse(bytes) {
        Ok(r) => r,
        Err(e) => return (Verdict::Invalid, format!("parse: {e}")),
    };
    if let Err(e) = record.validate() {
        // Detail names the first failed rule.
        return (Verdict::Invalid, format!("invariant: {}", e.fields()[0]));
    }
    if record.runtime_ms > rules.max_runtime_ms {
        return (Verdict::Invalid, format!("range: runtime_ms > {}", rules.max_runtime_ms));
    }
    if record.node_count > rules.max_node_count {
        return (Verdict::Invalid, format!("range: node_count > {}", rules.max_node_count));
    }
    if record.input_size_bytes > rules.max_input_size_bytes {
        return (
            Verdict::Invalid,
            format!("range: input_size_bytes > {}", rules.max_input_size_bytes),
        );
    }
    (Verdict::Valid, "ok".to_string())
}

/// Acceptance threshold as an exact rational in (1/2, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threshold {
    pub num: u32,
    pub den: u32,
}

impl Threshold {
    pub const TWO_THIRDS: Threshold = Threshold { num: 2, den: 3 };

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.den == 0 || self.num > self.den || 2 * (self.num as u64) <= self.den as u64 {
            return Err("threshold must be a rational in (1/2, 1]");
        }
        Ok(())
    }

    /// True iff count/total >= num/den, in exact integer arithmetic.
    fn reached(&self, count: usize, total: usize) -> bool {
        (count as u64) * (self.den as u64) >= (total as u64) * (self.num as u64)
    }
}

/// How many responses suffice to decide, how long to wait, and the
/// acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotePolicy {
    pub k_required: u32,
    pub response_timeout_ms: u64,
    pub accept_threshold: Threshold,
}

impl Default for VotePolicy {
    fn default() -> Self {
        VotePolicy {
            k_required: 5,
            response_timeout_ms: 2000,
            accept_threshold: Threshold::TWO_THIRDS,
        }
    }
}

impl VotePolicy {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.k_required == 0 {
            return Err("k_required must be positive");
        }
        if self.response_timeout_ms == 0 {
            return Err("response_timeout_ms must be positive");
        }
        self.accept_threshold.validate()
    }
}

/// Why the caller must validate independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteAdvisory {
    /// Fewer than `k_required` responses arrived.
    InsufficientResponses,
    /// Neither verdict reached the threshold.
    Inconclusive,
    /// The network's majority verdict is invalid. That counts as an
    /// undesired outcome, so the caller still validates independently and
    /// its own result takes precedence locally.
    NetworkInvalid,
}

/// The outcome of consolidating peer votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum VoteOutcome {
    /// The network agrees the data is valid; use that decision.
    NetworkValid,
    /// Validate independently; `advisory` says why.
    MustValidateIndependently { advisory: VoteAdvisory },
}

/// Consolidate vote responses for one subject under `policy`.
pub fn consolidate_votes(
    responses: &[ValidationRecord],
    policy: &VotePolicy,
) -> Result<VoteOutcome, VoteError> {
    if let Some(first) = responses.first() {
        if responses.iter().any(|r| r.subject_cid != first.subject_cid) {
            return Err(VoteError::MixedSubjects);
        }
    }
    if responses.len() < policy.k_required as usize {
        return Ok(VoteOutcome::MustValidateIndependently {
            advisory: VoteAdvisory::InsufficientResponses,
        });
    }
    let total = responses.len();
    let valid = responses.iter().filter(|r| r.verdict == Verdict::Valid).count();
    let invalid = responses.iter().filter(|r| r.verdict == Verdict::Invalid).count();
    if policy.accept_threshold.reached(valid, total) {
        return Ok(VoteOutcome::NetworkValid);
    }
    if policy.accept_threshold.reached(invalid, total) {
        return Ok(VoteOutcome::MustValidateIndependently { advisory: VoteAdvisory::NetworkInvalid });
    }
    Ok(VoteOutcome::MustValidateIndependently { advisory: VoteAdvisory::Inconclusive })
}

/// Scaling shape of a validation procedure's cost in the number of data
/// points, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum CostShape {
    Constant { c0: f64 },
    Linear { c0: f64, c1: f64 },
    Polynomial { c0: f64, c1: f64, power: f64 },
    /// `c0 * base^n`, capped at `cap_ms` so simulated time stays finite.
    Exponential { c0: f64, base: f64, cap_ms: f64 },
    Logarithmic { c0: f64, c1: f64 },
}

/// Cost model for a validation pipeline: a scaling shape plus the fixed
/// per-invocation overhead (setup, dispatch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(flatten)]
    pub shape: CostShape,
    pub batch_overhead_ms: u64,
}

impl CostModel {
    pub fn validate(&self) -> Result<(), CostModelError> {
        let ok = match self.shape {
            CostShape::Constant { c0 } => c0 >= 0.0,
            CostShape::Linear { c0, c1 } => c0 >= 0.0 && c1 >= 0.0,
            CostShape::Polynomial { c0, c1, power } => c0 >= 0.0 && c1 >= 0.0 && power >= 0.0,
            CostShape::Exponential { c0, base, cap_ms } => {
                c0 >= 0.0 && base >= 1.0 && cap_ms >= 0.0
            }
            CostShape::Logarithmic { c0, c1 } => c0 >= 0.0 && c1 >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CostModelError::BadParameter("coefficients must keep cost >= 0 and non-decreasing"))
        }
    }

    /// Cost of validating `n` points in one invocation, in milliseconds.
    pub fn cost(&self, n: u64) -> f64 {
        let n = n as f64;
        match self.shape {
            CostShape::Constant { c0 } => c0,
            CostShape::Linear { c0, c1 } => c0 + c1 * n,
            CostShape::Polynomial { c0, c1, power } => c0 + c1 * n.powf(power),
            CostShape::Exponential { c0, base, cap_ms } => {
                if c0 == 0.0 {
                    return 0.0;
                }
                let raw = c0 * base.powf(n);
                if raw.is_finite() {
                    raw.min(cap_ms)
                } else {
                    cap_ms
                }
            }
            CostShape::Logarithmic { c0, c1 } => c0 + c1 * (1.0 + n).log2(),
        }
    }
}

/// Simulated wall time to validate `n_points`, either one invocation per
/// point (unbatched) or a single batched invocation.
pub fn validation_cost(model: &CostModel, n_points: u64, batched: bool) -> f64 {
    let overhead = model.batch_overhead_ms as f64;
    if batched {
        model.cost(n_points) + overhead
    } else {
        (n_points as f64) * model.cost(1) + (n_points as f64) * overhead
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sample_record_bytes() -> Vec<u8> {
        PerformanceRecord {
            workload: "sort".into(),
            framework: "spark".into(),
            framework_version: "3.1".into(),
            machine_type: "e2-standard-2".into(),
            node_count: 4,
            input_size_bytes: 1024,
            runtime_ms: 212_000,
            extra_metrics: BTreeMap::new(),
        }
        .canonical_bytes()
    }

    fn run_builtin(bytes: &[u8]) -> ValidationRecord {
        let cid = Cid::for_bytes(bytes);
        validate_local(cid, bytes, &ValidatorSpec::default(), &RangeRules::default(), 5).unwrap()
    }

    #[test]
    fn well_formed_record_is_valid() {
        assert_eq!(run_builtin(&sample_record_bytes()).verdict, Verdict::Valid);
    }

    #[test]
    fn zero_runtime_is_invalid_and_detail_names_field() {
        let mut record = PerformanceRecord::parse(&sample_record_bytes()).unwrap();
        record.runtime_ms = 0;
        let outcome = run_builtin(&record.canonical_bytes());
        assert_eq!(outcome.verdict, Verdict::Invalid);
        assert!(outcome.detail.contains("runtime_ms"), "detail: {}", outcome.detail);
    }

    #[test]
    fn unparsable_bytes_are_invalid_with_parse_detail() {
        let outcome = run_builtin(b"definitely not a record");
        assert_eq!(outcome.verdict, Verdict::Invalid);
        assert!(outcome.detail.contains("parse"), "detail: {}", outcome.detail);
    }

    #[test]
    fn range_rules_apply_after_invariants() {
        let mut record = PerformanceRecord::parse(&sample_record_bytes()).unwrap();
        record.runtime_ms = DEFAULT_MAX_RUNTIME_MS + 1;
        let outcome = run_builtin(&record.canonical_bytes());
        assert_eq!(outcome.verdict, Verdict::Invalid);
        assert!(outcome.detail.contains("runtime_ms"));
    }

    #[test]
    fn cid_mismatch_is_integrity_failure() {
        let bytes = sample_record_bytes();
        let wrong = Cid::for_bytes(b"other");
        assert_eq!(
            validate_local(wrong, &bytes, &ValidatorSpec::default(), &RangeRules::default(), 0),
            Err(ValidationError::IntegrityFailure(wrong))
        );
    }

    #[test]
    fn repeated_validation_is_deterministic() {
        let bytes = sample_record_bytes();
        let first = run_builtin(&bytes);
        for _ in 0..10 {
            let again = run_builtin(&bytes);
            assert_eq!(again.verdict, first.verdict);
            assert_eq!(again.detail, first.detail);
        }
    }

    fn vote(subject: Cid, verdict: Verdict) -> ValidationRecord {
        ValidationRecord {
            subject_cid: subject,
            verdict,
            validator_id: "peer".into(),
            validator_version: "1".into(),
            produced_at: 0,
            detail: String::new(),
        }
    }

    fn votes(v: usize, i: usize, c: usize) -> Vec<ValidationRecord> {
        let subject = Cid::for_bytes(b"subject");
        let mut out = Vec::new();
        out.extend(std::iter::repeat_with(|| vote(subject, Verdict::Valid)).take(v));
        out.extend(std::iter::repeat_with(|| vote(subject, Verdict::Invalid)).take(i));
        out.extend(std::iter::repeat_with(|| vote(subject, Verdict::Inconclusive)).take(c));
        out
    }

    fn policy(k: u32) -> VotePolicy {
        VotePolicy { k_required: k, ..VotePolicy::default() }
    }

    #[test]
    fn unanimous_valid_reaches_network_valid() {
        assert_eq!(consolidate_votes(&votes(5, 0, 0), &policy(5)), Ok(VoteOutcome::NetworkValid));
    }

    #[test]
    fn symmetric_tie_is_inconclusive() {
        assert_eq!(
            consolidate_votes(&votes(2, 2, 0), &policy(4)),
            Ok(VoteOutcome::MustValidateIndependently { advisory: VoteAdvisory::Inconclusive })
        );
    }

    #[test]
    fn invalid_majority_is_advisory_network_invalid() {
        assert_eq!(
            consolidate_votes(&votes(1, 4, 0), &policy(5)),
            Ok(VoteOutcome::MustValidateIndependently { advisory: VoteAdvisory::NetworkInvalid })
        );
    }

    #[test]
    fn too_few_responses_forces_independent_validation() {
        assert_eq!(
            consolidate_votes(&votes(3, 0, 0), &policy(5)),
            Ok(VoteOutcome::MustValidateIndependently {
                advisory: VoteAdvisory::InsufficientResponses
            })
        );
    }

    #[test]
    fn mixed_subjects_rejected() {
        let mut responses = votes(2, 0, 0);
        responses.push(vote(Cid::for_bytes(b"other"), Verdict::Valid));
        assert_eq!(consolidate_votes(&responses, &policy(1)), Err(VoteError::MixedSubjects));
    }

    /// Independent brute-force oracle: the consolidation rule restated from
    /// first principles with plain integer arithmetic.
    fn oracle(v: usize, i: usize, c: usize, k: u32) -> VoteOutcome {
        let total = v + i + c;
        if total < k as usize {
            return VoteOutcome::MustValidateIndependently {
                advisory: VoteAdvisory::InsufficientResponses,
            };
        }
        // threshold 2/3: fraction >= 2/3 <=> 3 * count >= 2 * total
        if 3 * v >= 2 * total {
            VoteOutcome::NetworkValid
        } else if 3 * i >= 2 * total {
            VoteOutcome::MustValidateIndependently { advisory: VoteAdvisory::NetworkInvalid }
        } else {
            VoteOutcome::MustValidateIndependently { advisory: VoteAdvisory::Inconclusive }
        }
    }

    // Exhaustive decision table for every response multiset of size <= 10
    // and every k <= 5; also demonstrates consolidate_votes is total there.
    #[test]
    fn decision_table_matches_brute_force_oracle() {
        for k in 1..=5u32 {
            for v in 0..=10usize {
                for i in 0..=(10 - v) {
                    for c in 0..=(10 - v - i) {
                        let got = consolidate_votes(&votes(v, i, c), &policy(k)).unwrap();
                        assert_eq!(got, oracle(v, i, c, k), "k={k} v={v} i={i} c={c}");
                    }
                }
            }
        }
    }

    // Adding valid votes never moves the outcome away from network_valid.
    #[test]
    fn valid_votes_are_monotone_toward_acceptance() {
        for k in 1..=5u32 {
            for v in 0..=9usize {
                for i in 0..=(9 - v) {
                    for c in 0..=(9 - v - i) {
                        let before = consolidate_votes(&votes(v, i, c), &policy(k)).unwrap();
                        let after = consolidate_votes(&votes(v + 1, i, c), &policy(k)).unwrap();
                        if before == VoteOutcome::NetworkValid {
                            assert_eq!(after, VoteOutcome::NetworkValid, "k={k} v={v} i={i} c={c}");
                        }
                    }
                }
            }
        }
    }

    fn linear(c0: f64, c1: f64, overhead: u64) -> CostModel {
        CostModel { shape: CostShape::Linear { c0, c1 }, batch_overhead_ms: overhead }
    }

    // Hand-evaluated: unbatched = 10 * (0 + 10*1) + 10 * 5 = 150;
    // batched = (0 + 10*10) + 5 = 105.
    #[test]
    fn linear_cost_hand_evaluated() {
        let model = linear(0.0, 10.0, 5);
        assert_eq!(validation_cost(&model, 10, false), 150.0);
        assert_eq!(validation_cost(&model, 10, true), 105.0);
    }

    // Hand-evaluated: unbatched = 100 * 7 = 700; batched = 7.
    #[test]
    fn constant_cost_hand_evaluated() {
        let model = CostModel { shape: CostShape::Constant { c0: 7.0 }, batch_overhead_ms: 0 };
        assert_eq!(validation_cost(&model, 100, false), 700.0);
        assert_eq!(validation_cost(&model, 100, true), 7.0);
    }

    #[test]
    fn empty_batch_costs() {
        let model = linear(3.0, 2.0, 4);
        assert_eq!(validation_cost(&model, 0, false), 0.0);
        assert_eq!(validation_cost(&model, 0, true), 3.0 + 4.0);
    }

    #[test]
    fn exponential_cost_is_capped() {
        let model = CostModel {
            shape: CostShape::Exponential { c0: 1.0, base: 2.0, cap_ms: 1e9 },
            batch_overhead_ms: 0,
        };
        assert_eq!(validation_cost(&model, 10, true), 1024.0);
        assert_eq!(validation_cost(&model, 1000, true), 1e9);
    }

    #[test]
    fn batching_strictly_cheaper_for_linear_and_constant_with_overhead() {
        let models = [
            linear(1.0, 5.0, 3),
            CostModel { shape: CostShape::Constant { c0: 9.0 }, batch_overhead_ms: 2 },
        ];
        for model in models {
            for n in 2..=64u64 {
                assert!(
                    validation_cost(&model, n, true) < validation_cost(&model, n, false),
                    "batching not cheaper for {model:?} at n={n}"
                );
            }
        }
    }

    #[test]
    fn cost_is_monotone_non_decreasing_for_all_shapes() {
        let models = [
            CostModel { shape: CostShape::Constant { c0: 5.0 }, batch_overhead_ms: 0 },
            linear(1.0, 2.0, 0),
            CostModel {
                shape: CostShape::Polynomial { c0: 1.0, c1: 0.5, power: 2.0 },
                batch_overhead_ms: 0,
            },
            CostModel {
                shape: CostShape::Exponential { c0: 0.5, base: 1.5, cap_ms: 1e12 },
                batch_overhead_ms: 0,
            },
            CostModel { shape: CostShape::Logarithmic { c0: 1.0, c1: 3.0 }, batch_overhead_ms: 0 },
        ];
        for model in models {
            model.validate().unwrap();
            let mut prev = model.cost(0);
            assert!(prev >= 0.0);
            for n in 1..=200u64 {
                let cur = model.cost(n);
                assert!(cur + 1e-12 >= prev, "{model:?} decreased at n={n}");
                prev = cur;
            }
        }
    }

    #[test]
    fn cost_model_validation_rejects_bad_parameters() {
        let bad = CostModel {
            shape: CostShape::Exponential { c0: 1.0, base: 0.5, cap_ms: 1e6 },
            batch_overhead_ms: 0,
        };
        assert!(bad.validate().is_err());
        let negative = CostModel { shape: CostShape::Linear { c0: -1.0, c1: 1.0 }, batch_overhead_ms: 0 };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn vote_policy_validation() {
        assert!(VotePolicy::default().validate().is_ok());
        assert!(policy(0).validate().is_err());
        let half = VotePolicy {
            accept_threshold: Threshold { num: 1, den: 2 },
            ..VotePolicy::default()
        };
        assert!(half.validate().is_err());
    }
}
