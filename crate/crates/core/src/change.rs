//! Change requests, impact analysis and the three incorporation stages.
//!
//! `impact` is a what-if: it evaluates every leaf under the current
//! parameters, re-evaluates the leaves a change touches (tag hits plus
//! leaves whose bindings depend on an updated parameter) under the
//! candidate parameters, propagates, and classifies. `apply_change` commits
//! a stage-1 change after checking the report is still current.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;
use crate::evidence::{self, Artifacts, AttestationLog, EvidenceStatus, Remediation};
use crate::formula::ParameterEnv;
use crate::gsn::{NodeId, StatusMap, Tag, Validity};
use crate::store::{self, Case, CaseStore, Snapshot, StoreError, TagQuery};

#[derive(Debug, Error)]
pub enum ChangeError {
    #[error("change request carries neither tags nor parameter updates")]
    EmptyChange,
    #[error("update names unknown parameter {0}")]
    UnknownParam(String),
    #[error("update for {0} is not finite")]
    NonFiniteUpdate(String),
    #[error("change {0} is closed")]
    ChangeClosed(String),
    #[error("report is for change {report}, not {change}")]
    ReportMismatch { report: String, change: String },
    #[error("only stage-1 changes can be applied directly (report says stage {0})")]
    StageNotOne(Stage),
    #[error("case changed since the impact report was computed")]
    StaleReport { expected: String, found: String },
    #[error("change document: {0}")]
    InvalidChange(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeSource {
    IncidentReport,
    ContextEvolution,
    MonitoringEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeRequest {
    pub id: String,
    pub source: ChangeSource,
    #[serde(default)]
    pub payload: String,
    #[serde(default)]
    pub tags: BTreeSet<Tag>,
    #[serde(default)]
    pub param_updates: BTreeMap<String, f64>,
    #[serde(default)]
    pub structural: bool,
    pub created_at: DateTime<Utc>,
    pub state: ChangeState,
}

/// A change as proposed, before it gets an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeDraft {
    pub source: ChangeSource,
    #[serde(default)]
    pub payload: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub param_updates: BTreeMap<String, f64>,
    #[serde(default)]
    pub structural: bool,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

impl ChangeDraft {
    /// Open the draft; `now` stamps it when it carries no timestamp.
    pub fn open(self, now: DateTime<Utc>) -> Result<ChangeRequest, ChangeError> {
        let tags = self
            .tags
            .iter()
            .map(|t| Tag::new(t))
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| ChangeError::InvalidChange(e.to_string()))?;
        open_change(
            self.source,
            &self.payload,
            tags,
            self.param_updates,
            self.structural,
            self.created_at.unwrap_or(now),
        )
    }
}

fn change_id(
    source: ChangeSource,
    payload: &str,
    tags: &BTreeSet<Tag>,
    updates: &BTreeMap<String, f64>,
    structural: bool,
    created_at: DateTime<Utc>,
) -> String {
    let body = serde_json::json!({
        "source": source,
        "payload": payload,
        "tags": tags,
        "param_updates": updates,
        "structural": structural,
        "created_at": created_at,
    });
    let hex = digest::sha256_hex(body.to_string().as_bytes());
    format!("cr-{}", &hex[..12])
}

pub fn open_change(
    source: ChangeSource,
    payload: &str,
    tags: BTreeSet<Tag>,
    param_updates: BTreeMap<String, f64>,
    structural: bool,
    created_at: DateTime<Utc>,
) -> Result<ChangeRequest, ChangeError> {
    if tags.is_empty() && param_updates.is_empty() {
        return Err(ChangeError::EmptyChange);
    }
    if let Some((name, _)) = param_updates.iter().find(|(_, v)| !v.is_finite()) {
        return Err(ChangeError::NonFiniteUpdate(name.clone()));
    }
    Ok(ChangeRequest {
        id: change_id(source, payload, &tags, &param_updates, structural, created_at),
        source,
        payload: payload.to_string(),
        tags,
        param_updates,
        structural,
        created_at,
        state: ChangeState::Open,
    })
}

/// Read a change file: either a draft or a previously opened request.
pub fn parse_change_document(text: &str, now: DateTime<Utc>) -> Result<ChangeRequest, ChangeError> {
    let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| ChangeError::InvalidChange(e.to_string()))?;
    if value.get("id").is_some() {
        let cr: ChangeRequest = serde_yaml::from_value(value).map_err(|e| ChangeError::InvalidChange(e.to_string()))?;
        let expected = change_id(cr.source, &cr.payload, &cr.tags, &cr.param_updates, cr.structural, cr.created_at);
        if cr.id != expected {
            return Err(ChangeError::InvalidChange(format!("id {} does not match content ({expected})", cr.id)));
        }
        if cr.tags.is_empty() && cr.param_updates.is_empty() {
            return Err(ChangeError::EmptyChange);
        }
        Ok(cr)
    } else {
        let draft: ChangeDraft = serde_yaml::from_value(value).map_err(|e| ChangeError::InvalidChange(e.to_string()))?;
        draft.open(now)
    }
}

/// Incorporation stage: 1 parameter update only, 2 evidence restorable by
/// declared remediation, 3 argument structure must change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    ParameterUpdate,
    Remediable,
    Restructure,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::ParameterUpdate => 1,
            Stage::Remediable => 2,
            Stage::Restructure => 3,
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl TryFrom<u8> for Stage {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        match n {
            1 => Ok(Stage::ParameterUpdate),
            2 => Ok(Stage::Remediable),
            3 => Ok(Stage::Restructure),
            _ => Err(format!("stage must be 1, 2 or 3, not {n}")),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafOutcome {
    pub status: Validity,
    pub has_remediation: bool,
}

pub fn classify(structural: bool, leaves: &[LeafOutcome]) -> Stage {
    if structural || leaves.iter().any(|l| l.status != Validity::Valid && !l.has_remediation) {
        Stage::Restructure
    } else if leaves.iter().all(|l| l.status == Validity::Valid) {
        Stage::ParameterUpdate
    } else {
        Stage::Remediable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reevaluation {
    pub before: EvidenceStatus,
    pub after: EvidenceStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactReport {
    pub change_id: String,
    /// Fingerprint of the case and attestations the report was computed on.
    pub base_digest: String,
    pub matched_nodes: Vec<NodeId>,
    pub reevaluated: BTreeMap<NodeId, Reevaluation>,
    pub status_map: StatusMap,
    pub stage: Stage,
    /// Declared remediation for every leaf that is not Valid.
    #[serde(default)]
    pub remediations: BTreeMap<NodeId, Remediation>,
    pub rationale: String,
}

/// Fingerprint used to detect that a report no longer matches the case.
pub fn case_fingerprint(c: &Case, attestations: &AttestationLog) -> String {
    let att = serde_json::to_vec(attestations.entries()).expect("attestations serialize");
    digest::sha256_parts([c.digest().as_bytes(), att.as_slice()])
}

/// Status of one leaf under `env`. Evaluation failures become Unknown with
/// the error as the reason; a leaf without a binding is Unknown.
pub fn evaluate_leaf(
    c: &Case,
    id: &NodeId,
    env: &ParameterEnv,
    artifacts: &Artifacts,
    attestations: &AttestationLog,
    at: DateTime<Utc>,
) -> EvidenceStatus {
    match c.bindings.get(id) {
        None => EvidenceStatus {
            value: Validity::Unknown,
            reason: "no evidence bound".into(),
            evaluated_at: at,
            inputs_hash: digest::sha256_parts([b"unbound".as_slice(), id.as_str().as_bytes()]),
        },
        Some(b) => evidence::evaluate_evidence(id, b, env, artifacts, attestations.entries(), at).unwrap_or_else(|e| {
            EvidenceStatus {
                value: Validity::Unknown,
                reason: format!("cannot evaluate: {e}"),
                evaluated_at: at,
                inputs_hash: digest::sha256_parts([b"error".as_slice(), e.to_string().as_bytes()]),
            }
        }),
    }
}

pub fn evaluate_leaves(
    c: &Case,
    env: &ParameterEnv,
    artifacts: &Artifacts,
    attestations: &AttestationLog,
    at: DateTime<Utc>,
) -> BTreeMap<NodeId, EvidenceStatus> {
    c.tree
        .leaves()
        .into_iter()
        .map(|id| {
            let s = evaluate_leaf(c, &id, env, artifacts, attestations, at);
            (id, s)
        })
        .collect()
}

pub fn propagate(c: &Case, statuses: &BTreeMap<NodeId, EvidenceStatus>) -> StatusMap {
    let leaf: BTreeMap<NodeId, Validity> = statuses.iter().map(|(k, v)| (k.clone(), v.value)).collect();
    c.tree.propagate_status(&leaf).expect("statuses are keyed by leaves")
}

/// Leaf statuses and the propagated map for the case as it stands.
pub fn assess(
    c: &Case,
    artifacts: &Artifacts,
    attestations: &AttestationLog,
    at: DateTime<Utc>,
) -> (BTreeMap<NodeId, EvidenceStatus>, StatusMap) {
    let statuses = evaluate_leaves(c, &c.env, artifacts, attestations, at);
    let map = propagate(c, &statuses);
    (statuses, map)
}

/// Updates that actually change a value.
fn effective_updates<'a>(c: &Case, cr: &'a ChangeRequest) -> Result<BTreeMap<&'a str, f64>, ChangeError> {
    let mut out = BTreeMap::new();
    for (name, v) in &cr.param_updates {
        let Some(current) = c.env.get(name) else {
            return Err(ChangeError::UnknownParam(name.clone()));
        };
        if !v.is_finite() {
            return Err(ChangeError::NonFiniteUpdate(name.clone()));
        }
        if current != *v {
            out.insert(name.as_str(), *v);
        }
    }
    Ok(out)
}

fn candidate_env(c: &Case, updates: &BTreeMap<&str, f64>) -> ParameterEnv {
    let mut env = c.env.clone();
    for (name, v) in updates {
        env.set_value(name, *v).expect("update names were checked");
    }
    env
}

/// What-if impact of `cr` on `c`. Evaluation time is the change's
/// timestamp, so identical inputs give identical reports.
pub fn impact(
    c: &Case,
    cr: &ChangeRequest,
    artifacts: &Artifacts,
    attestations: &AttestationLog,
) -> Result<ImpactReport, ChangeError> {
    if cr.state != ChangeState::Open {
        return Err(ChangeError::ChangeClosed(cr.id.clone()));
    }
    let updates = effective_updates(c, cr)?;
    let env = candidate_env(c, &updates);
    let at = cr.created_at;

    let matched_nodes = if cr.tags.is_empty() {
        Vec::new()
    } else {
        let q = TagQuery {
            mode: store::QueryMode::Any,
            tags: cr.tags.clone(),
        };
        store::query_tags(c, &q)
    };
    let matched: BTreeSet<&NodeId> = matched_nodes.iter().collect();

    let before = evaluate_leaves(c, &c.env, artifacts, attestations, at);
    let mut after = before.clone();
    let mut reevaluated = BTreeMap::new();
    for id in c.tree.leaves() {
        let deps = match c.bindings.get(&id) {
            Some(b) => b.dependencies(artifacts).unwrap_or_default(),
            None => BTreeSet::new(),
        };
        let touched = matched.contains(&id) || deps.iter().any(|d| updates.contains_key(d.as_str()));
        if !touched {
            continue;
        }
        let new = evaluate_leaf(c, &id, &env, artifacts, attestations, at);
        after.insert(id.clone(), new.clone());
        reevaluated.insert(
            id.clone(),
            Reevaluation {
                before: before[&id].clone(),
                after: new,
            },
        );
    }

    let status_map = propagate(c, &after);
    let remediations: BTreeMap<NodeId, Remediation> = after
        .iter()
        .filter(|(_, s)| s.value != Validity::Valid)
        .filter_map(|(id, _)| {
            let r = c.bindings.get(id)?.remediation.clone()?;
            Some((id.clone(), r))
        })
        .collect();
    let outcomes: Vec<LeafOutcome> = after
        .iter()
        .map(|(id, s)| LeafOutcome {
            status: s.value,
            has_remediation: remediations.contains_key(id),
        })
        .collect();
    let stage = classify(cr.structural, &outcomes);
    let rationale = rationale(cr, stage, &after, &remediations);

    Ok(ImpactReport {
        change_id: cr.id.clone(),
        base_digest: case_fingerprint(c, attestations),
        matched_nodes,
        reevaluated,
        status_map,
        stage,
        remediations,
        rationale,
    })
}

fn rationale(
    cr: &ChangeRequest,
    stage: Stage,
    after: &BTreeMap<NodeId, EvidenceStatus>,
    remediations: &BTreeMap<NodeId, Remediation>,
) -> String {
    let failing: Vec<String> = after
        .iter()
        .filter(|(_, s)| s.value != Validity::Valid)
        .map(|(id, s)| {
            let fix = match remediations.get(id) {
                Some(r) => format!("remediation {}: {}", r.action, r.description),
                None => "no remediation declared".into(),
            };
            format!("{id} {:?} ({}; {fix})", s.value, s.reason)
        })
        .collect();
    match stage {
        Stage::ParameterUpdate => "all evidence remains valid; the parameter update can be applied directly".into(),
        Stage::Remediable => format!("evidence restorable by declared remediation: {}", failing.join("; ")),
        Stage::Restructure if cr.structural => "proposer marked the change as structural; the argument must be reworked".into(),
        Stage::Restructure => format!("argument must be reworked by hand: {}", failing.join("; ")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedChange {
    pub case: Case,
    pub statuses: BTreeMap<NodeId, EvidenceStatus>,
    pub status_map: StatusMap,
    pub change: ChangeRequest,
    /// The case as it was before the change.
    pub snapshot: Snapshot,
}

/// Commit a stage-1 change.
pub fn apply_change(
    c: &Case,
    cr: &ChangeRequest,
    report: &ImpactReport,
    artifacts: &Artifacts,
    attestations: &AttestationLog,
    at: DateTime<Utc>,
) -> Result<AppliedChange, ChangeError> {
    if cr.state != ChangeState::Open {
        return Err(ChangeError::ChangeClosed(cr.id.clone()));
    }
    if report.change_id != cr.id {
        return Err(ChangeError::ReportMismatch {
            report: report.change_id.clone(),
            change: cr.id.clone(),
        });
    }
    if report.stage != Stage::ParameterUpdate {
        return Err(ChangeError::StageNotOne(report.stage));
    }
    let found = case_fingerprint(c, attestations);
    if found != report.base_digest {
        return Err(ChangeError::StaleReport {
            expected: report.base_digest.clone(),
            found,
        });
    }
    let updates = effective_updates(c, cr)?;
    let snapshot = store::snapshot(c, &format!("before {}", cr.id), at);
    let mut case = c.clone();
    case.env = candidate_env(c, &updates);
    let (statuses, status_map) = assess(&case, artifacts, attestations, at);
    let mut change = cr.clone();
    change.state = ChangeState::Closed;
    Ok(AppliedChange {
        case,
        statuses,
        status_map,
        change,
        snapshot,
    })
}

pub fn change_path(id: &str) -> String {
    format!("changes/{id}.yaml")
}

pub fn report_path(id: &str) -> String {
    format!("changes/{id}.impact.yaml")
}

pub fn save_change(s: &CaseStore, cr: &ChangeRequest) -> Result<(), ChangeError> {
    s.write_document(&change_path(&cr.id), cr)?;
    Ok(())
}

pub fn load_change(s: &CaseStore, id: &str) -> Result<ChangeRequest, ChangeError> {
    valid_doc_id(id)?;
    Ok(s.read_document(&change_path(id))?)
}

pub fn load_report(s: &CaseStore, id: &str) -> Result<ImpactReport, ChangeError> {
    valid_doc_id(id)?;
    Ok(s.read_document(&report_path(id))?)
}

fn valid_doc_id(id: &str) -> Result<(), ChangeError> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(ChangeError::InvalidChange(format!("bad change id {id:?}")));
    }
    Ok(())
}

/// Run impact against the store's case and keep the report beside the change.
pub fn impact_in_store(s: &CaseStore, cr: &ChangeRequest) -> Result<ImpactReport, ChangeError> {
    let c = s.load_case()?;
    let artifacts = s.load_artifacts(&c)?;
    let att = s.load_attestations()?;
    let report = impact(&c, cr, &artifacts, &att)?;
    save_change(s, cr)?;
    s.write_document(&report_path(&cr.id), &report)?;
    Ok(report)
}

/// Apply under the writer lock: snapshot the old case, write the new one,
/// close the change.
pub fn apply_in_store(
    s: &CaseStore,
    cr: &ChangeRequest,
    report: &ImpactReport,
    at: DateTime<Utc>,
) -> Result<AppliedChange, ChangeError> {
    let _lock = s.lock()?;
    let c = s.load_case()?;
    let artifacts = s.load_artifacts(&c)?;
    let att = s.load_attestations()?;
    let applied = apply_change(&c, cr, report, &artifacts, &att, at)?;
    s.save_snapshot(&applied.snapshot)?;
    s.save_case(&applied.case)?;
    save_change(s, &applied.change)?;
    Ok(applied)
}
