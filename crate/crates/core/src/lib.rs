//! Continuous assurance engine for safety cases over ML components.
//!
//! A case is a GSN argument whose leaves are bound to checkable evidence:
//! formulas over parameters and sampled traces, thresholds on tool
//! metrics, or manual attestations. Change requests are matched to the
//! leaves they touch, re-evaluated under the proposed parameters, and
//! classified into one of three incorporation stages.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod change;
pub mod digest;
pub mod evidence;
pub mod formula;
pub mod gsn;
pub mod kinematics;
pub mod store;

pub use change::{
    apply_change, classify, impact, open_change, AppliedChange, ChangeError, ChangeRequest, ChangeSource, ChangeState,
    ImpactReport, LeafOutcome, Stage,
};
pub use evidence::{
    Attestation, AttestationLog, AttestedStatus, BindingKind, Comparator, EvidenceBinding, EvidenceStatus, Remediation,
    RemediationAction,
};
pub use formula::{evaluate, parse_formula, Formula, FormulaError, ParameterEnv, Trace, TriBool};
pub use gsn::{EdgeKind, GsnEdge, GsnError, GsnNode, GsnTree, NodeId, NodeKind, StatusMap, Tag, Validity};
pub use kinematics::{min_safe_rear_gap, simulate_fp_braking, stopping_distance, AgentParams, FpScenario};
pub use store::{Case, CaseStore, ChangeSet, QueryMode, Snapshot, StoreError, TagQuery};
