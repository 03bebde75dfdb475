//! Evidence bindings and their evaluation into a leaf status.
//!
//! A binding connects a solution or assumption to something checkable: a
//! formula over parameters (and optionally a trace), a threshold on a metric
//! from an external tool report, or a manual attestation by someone holding
//! a required role.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;
use crate::formula::{self, FormulaError, ParameterEnv, Trace, TriBool};
use crate::gsn::{NodeId, Validity};
use crate::kinematics::{self, KinematicsError, ScenarioSpec};

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("stored formula does not parse: {0}")]
    ParseFailure(FormulaError),
    #[error("formula evaluation failed: {0}")]
    Evaluation(FormulaError),
    #[error("scenario {artifact}: {source}")]
    Scenario {
        artifact: String,
        source: KinematicsError,
    },
    #[error("artifact {name} is a {found}, expected {expected}")]
    WrongArtifactKind {
        name: String,
        found: &'static str,
        expected: &'static str,
    },
    #[error("malformed metric report: {0}")]
    MalformedReport(String),
    #[error("metric {0} is not finite")]
    NonFiniteValue(String),
    #[error("evidence {0} is not bound to a manual attestation")]
    WrongBindingKind(NodeId),
    #[error("attestation role {found:?} does not match required role {required:?}")]
    RoleMismatch { required: String, found: String },
    #[error("attestation is for {found}, not {expected}")]
    EvidenceMismatch { expected: NodeId, found: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "==")]
    Eq,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => value >= threshold,
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
            Comparator::Lt => value < threshold,
            Comparator::Eq => value == threshold,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
            Comparator::Eq => "==",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BindingKind {
    Formula {
        formula: String,
        /// Trace or scenario artifact the formula quantifies over.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace: Option<String>,
    },
    Metric {
        metric: String,
        comparator: Comparator,
        threshold: f64,
        report: String,
    },
    Manual {
        required_role: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemediationAction {
    CollectData,
    Retest,
    RerunTool,
}

impl fmt::Display for RemediationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemediationAction::CollectData => "collect_data",
            RemediationAction::Retest => "retest",
            RemediationAction::RerunTool => "rerun_tool",
        })
    }
}

/// Declared improvement that can restore an evidence item without changing
/// the argument structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Remediation {
    pub action: RemediationAction,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceBinding {
    pub evidence: BindingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remediation: Option<Remediation>,
}

impl EvidenceBinding {
    pub fn formula(text: impl Into<String>, trace: Option<&str>) -> Self {
        Self {
            evidence: BindingKind::Formula {
                formula: text.into(),
                trace: trace.map(str::to_string),
            },
            remediation: None,
        }
    }

    pub fn metric(metric: &str, comparator: Comparator, threshold: f64, report: &str) -> Self {
        Self {
            evidence: BindingKind::Metric {
                metric: metric.into(),
                comparator,
                threshold,
                report: report.into(),
            },
            remediation: None,
        }
    }

    pub fn manual(role: &str) -> Self {
        Self {
            evidence: BindingKind::Manual {
                required_role: role.into(),
            },
            remediation: None,
        }
    }

    pub fn with_remediation(mut self, action: RemediationAction, description: &str) -> Self {
        self.remediation = Some(Remediation {
            action,
            description: description.into(),
        });
        self
    }

    /// Artifact this binding reads, if any.
    pub fn artifact_ref(&self) -> Option<&str> {
        match &self.evidence {
            BindingKind::Formula { trace, .. } => trace.as_deref(),
            BindingKind::Metric { report, .. } => Some(report),
            BindingKind::Manual { .. } => None,
        }
    }

    /// Check the binding is internally consistent: formulas parse and
    /// thresholds are finite.
    pub fn validate(&self) -> Result<(), EvidenceError> {
        match &self.evidence {
            BindingKind::Formula { formula, .. } => {
                formula::parse_formula(formula).map_err(EvidenceError::ParseFailure)?;
            }
            BindingKind::Metric { threshold, metric, .. } if !threshold.is_finite() => {
                return Err(EvidenceError::NonFiniteValue(format!("threshold of {metric}")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Parameters whose values can change this binding's status: formula
    /// parameters plus parameters the referenced scenario is linked to.
    pub fn dependencies(&self, artifacts: &Artifacts) -> Result<BTreeSet<String>, EvidenceError> {
        let BindingKind::Formula { formula, trace } = &self.evidence else {
            return Ok(BTreeSet::new());
        };
        let f = formula::parse_formula(formula).map_err(EvidenceError::ParseFailure)?;
        let mut deps = f.free_symbols().params;
        if let Some(Artifact::Scenario(spec)) = trace.as_ref().and_then(|t| artifacts.get(t)).map(|a| &a.content) {
            deps.extend(spec.linked_params());
        }
        Ok(deps)
    }
}

/// External tool output: named metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tool: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub produced_at: Option<DateTime<Utc>>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
    /// Fields outside the schema, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Parse a metric report document (YAML or JSON).
pub fn ingest_metric_report(doc: &[u8]) -> Result<MetricReport, EvidenceError> {
    use serde_yaml::Value;
    let malformed = |m: &str| EvidenceError::MalformedReport(m.to_string());
    let value: Value = serde_yaml::from_slice(doc).map_err(|e| EvidenceError::MalformedReport(e.to_string()))?;
    let Value::Mapping(map) = value else {
        return Err(malformed("report must be a mapping"));
    };
    let mut tool = None;
    let mut produced_at = None;
    let mut metrics = None;
    let mut provenance = String::new();
    let mut extra = BTreeMap::new();
    for (k, v) in map {
        let Value::String(key) = k else {
            return Err(malformed("report keys must be strings"));
        };
        match key.as_str() {
            "tool" => match v {
                Value::String(s) if !s.is_empty() => tool = Some(s),
                _ => return Err(malformed("tool must be a non-empty string")),
            },
            "produced_at" => {
                let Value::String(s) = v else {
                    return Err(malformed("produced_at must be an RFC 3339 timestamp"));
                };
                let t = DateTime::parse_from_rfc3339(&s)
                    .map_err(|e| EvidenceError::MalformedReport(format!("produced_at: {e}")))?;
                produced_at = Some(t.with_timezone(&Utc));
            }
            "provenance" => match v {
                Value::String(s) => provenance = s,
                _ => return Err(malformed("provenance must be a string")),
            },
            "metrics" => {
                let Value::Mapping(m) = v else {
                    return Err(malformed("metrics must be a mapping"));
                };
                let mut out = BTreeMap::new();
                for (name, val) in m {
                    let Value::String(name) = name else {
                        return Err(malformed("metric names must be strings"));
                    };
                    let x = match &val {
                        Value::Number(n) => n.as_f64().ok_or_else(|| malformed("bad number"))?,
                        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                            "nan" | ".nan" | "inf" | "+inf" | "-inf" | "infinity" | "-infinity" => f64::NAN,
                            _ => return Err(EvidenceError::MalformedReport(format!("metric {name} is not a number"))),
                        },
                        _ => return Err(EvidenceError::MalformedReport(format!("metric {name} is not a number"))),
                    };
                    if !x.is_finite() {
                        return Err(EvidenceError::NonFiniteValue(name));
                    }
                    if out.insert(name.clone(), x).is_some() {
                        return Err(EvidenceError::MalformedReport(format!("duplicate metric {name}")));
                    }
                }
                metrics = Some(out);
            }
            _ => {
                let json = serde_json::to_value(&v).map_err(|e| EvidenceError::MalformedReport(e.to_string()))?;
                extra.insert(key, json);
            }
        }
    }
    Ok(MetricReport {
        tool: tool.ok_or_else(|| malformed("missing tool"))?,
        produced_at,
        metrics: metrics.ok_or_else(|| malformed("missing metrics"))?,
        provenance,
        extra,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Trace(Trace),
    Report(MetricReport),
    Scenario(ScenarioSpec),
}

impl Artifact {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Artifact::Trace(_) => "trace",
            Artifact::Report(_) => "metric report",
            Artifact::Scenario(_) => "scenario",
        }
    }
}

/// Artifact content together with the digest of the bytes it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedArtifact {
    pub content: Artifact,
    pub digest: String,
}

pub type Artifacts = BTreeMap<String, LoadedArtifact>;

/// Manual status decision for one evidence item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attestation {
    pub evidence_id: NodeId,
    pub status: AttestedStatus,
    pub by: String,
    pub role: String,
    pub at: DateTime<Utc>,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttestedStatus {
    Valid,
    Invalid,
}

impl From<AttestedStatus> for Validity {
    fn from(s: AttestedStatus) -> Self {
        match s {
            AttestedStatus::Valid => Validity::Valid,
            AttestedStatus::Invalid => Validity::Invalid,
        }
    }
}

/// Append-only attestation history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttestationLog {
    entries: Vec<Attestation>,
}

impl AttestationLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<Attestation>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[Attestation] {
        &self.entries
    }

    pub fn for_evidence(&self, id: &NodeId) -> Vec<Attestation> {
        self.entries.iter().filter(|a| &a.evidence_id == id).cloned().collect()
    }

    fn push(&mut self, a: Attestation) {
        self.entries.push(a);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceStatus {
    pub value: Validity,
    pub reason: String,
    pub evaluated_at: DateTime<Utc>,
    pub inputs_hash: String,
}

fn inputs_hash(
    binding: &EvidenceBinding,
    env: &ParameterEnv,
    deps: &BTreeSet<String>,
    artifact: Option<(&str, Option<&LoadedArtifact>)>,
    attestations: &[&Attestation],
) -> String {
    let binding_json = serde_json::to_vec(binding).expect("binding serializes");
    let env_part: BTreeMap<&str, Option<f64>> = deps.iter().map(|d| (d.as_str(), env.get(d))).collect();
    let env_json = serde_json::to_vec(&env_part).expect("env serializes");
    let artifact_part = match artifact {
        Some((name, Some(a))) => format!("{name}:{}", a.digest),
        Some((name, None)) => format!("{name}:missing"),
        None => String::new(),
    };
    let att_json = serde_json::to_vec(attestations).expect("attestations serialize");
    digest::sha256_parts([
        binding_json.as_slice(),
        env_json.as_slice(),
        artifact_part.as_bytes(),
        att_json.as_slice(),
    ])
}

/// Turn a binding into a status under `env`.
///
/// Missing artifacts, metrics, parameters or signals yield Unknown with the
/// missing names in the reason. `at` stamps the result.
pub fn evaluate_evidence(
    evidence_id: &NodeId,
    binding: &EvidenceBinding,
    env: &ParameterEnv,
    artifacts: &Artifacts,
    attestations: &[Attestation],
    at: DateTime<Utc>,
) -> Result<EvidenceStatus, EvidenceError> {
    let relevant: Vec<&Attestation> = match &binding.evidence {
        BindingKind::Manual { required_role } => attestations
            .iter()
            .filter(|a| &a.evidence_id == evidence_id && &a.role == required_role)
            .collect(),
        _ => Vec::new(),
    };
    let deps = binding.dependencies(artifacts)?;
    let art_name = binding.artifact_ref();
    let art = art_name.map(|n| (n, artifacts.get(n)));
    let hash = inputs_hash(binding, env, &deps, art, &relevant);
    let status = |value: Validity, reason: String| EvidenceStatus {
        value,
        reason,
        evaluated_at: at,
        inputs_hash: hash.clone(),
    };

    match &binding.evidence {
        BindingKind::Formula { formula: text, trace } => {
            let f = formula::parse_formula(text).map_err(EvidenceError::ParseFailure)?;
            let trace_owned;
            let trace_ref: Option<&Trace> = match trace {
                None => None,
                Some(name) => match artifacts.get(name).map(|a| &a.content) {
                    None => return Ok(status(Validity::Unknown, format!("missing artifact {name}"))),
                    Some(Artifact::Trace(t)) => Some(t),
                    Some(Artifact::Scenario(spec)) => match spec.resolve(env) {
                        Ok(s) => {
                            trace_owned = kinematics::simulate_fp_braking(&s).map_err(|source| {
                                EvidenceError::Scenario { artifact: name.clone(), source }
                            })?;
                            Some(&trace_owned)
                        }
                        Err(KinematicsError::UnboundParam { param, .. }) => {
                            return Ok(status(Validity::Unknown, format!("missing parameter {param} for scenario {name}")))
                        }
                        Err(source) => return Err(EvidenceError::Scenario { artifact: name.clone(), source }),
                    },
                    Some(other) => {
                        return Err(EvidenceError::WrongArtifactKind {
                            name: name.clone(),
                            found: other.kind_name(),
                            expected: "trace or scenario",
                        })
                    }
                },
            };
            if trace_ref.is_none() && f.uses_trace() {
                return Ok(status(Validity::Unknown, "formula needs a trace but none is bound".into()));
            }
            let ev = formula::evaluate_detailed(&f, env, trace_ref).map_err(EvidenceError::Evaluation)?;
            Ok(match ev.value {
                TriBool::True => status(Validity::Valid, "formula holds".into()),
                TriBool::False => {
                    let reason = if ev.witness.is_empty() {
                        "formula violated".to_string()
                    } else {
                        let w: Vec<String> = ev.witness.iter().map(|(v, t)| format!("{v}={t}")).collect();
                        format!("formula violated at {}", w.join(", "))
                    };
                    status(Validity::Invalid, reason)
                }
                TriBool::Unknown => {
                    let syms = f.free_symbols();
                    let mut missing: Vec<String> =
                        syms.params.iter().filter(|p| !env.contains(p)).map(|p| format!("parameter {p}")).collect();
                    if let Some(tr) = trace_ref {
                        missing.extend(
                            syms.signals.iter().filter(|s| tr.column(s).is_none()).map(|s| format!("signal {s}")),
                        );
                    }
                    status(Validity::Unknown, format!("missing {}", missing.join(", ")))
                }
            })
        }
        BindingKind::Metric { metric, comparator, threshold, report } => {
            let rep = match artifacts.get(report).map(|a| &a.content) {
                None => return Ok(status(Validity::Unknown, format!("missing report {report}"))),
                Some(Artifact::Report(r)) => r,
                Some(other) => {
                    return Err(EvidenceError::WrongArtifactKind {
                        name: report.clone(),
                        found: other.kind_name(),
                        expected: "metric report",
                    })
                }
            };
            let Some(value) = rep.metrics.get(metric) else {
                return Ok(status(Validity::Unknown, format!("missing metric {metric} in report {report}")));
            };
            let ok = comparator.holds(*value, *threshold);
            let verdict = if ok { Validity::Valid } else { Validity::Invalid };
            Ok(status(verdict, format!("{metric} = {value} {} {comparator} {threshold}", if ok { "satisfies" } else { "fails" })))
        }
        BindingKind::Manual { .. } => {
            // Latest timestamp wins; among equal timestamps the later entry.
            let latest = relevant
                .iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| a.at.cmp(&b.at).then(i.cmp(j)))
                .map(|(_, a)| *a);
            Ok(match latest {
                None => status(Validity::Unknown, "no attestation".into()),
                Some(a) => status(a.status.into(), format!("attested by {} ({}) at {}", a.by, a.role, a.at.to_rfc3339())),
            })
        }
    }
}

/// Record a manual attestation and return the resulting status.
pub fn attest(
    evidence_id: &NodeId,
    a: Attestation,
    binding: &EvidenceBinding,
    log: &mut AttestationLog,
) -> Result<EvidenceStatus, EvidenceError> {
    let BindingKind::Manual { required_role } = &binding.evidence else {
        return Err(EvidenceError::WrongBindingKind(evidence_id.clone()));
    };
    if &a.evidence_id != evidence_id {
        return Err(EvidenceError::EvidenceMismatch {
            expected: evidence_id.clone(),
            found: a.evidence_id,
        });
    }
    if &a.role != required_role {
        return Err(EvidenceError::RoleMismatch {
            required: required_role.clone(),
            found: a.role,
        });
    }
    let at = a.at;
    log.push(a);
    evaluate_evidence(
        evidence_id,
        binding,
        &ParameterEnv::new(),
        &Artifacts::new(),
        &log.for_evidence(evidence_id),
        at,
    )
}
