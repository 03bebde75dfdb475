//! Case persistence, tag queries and content-addressed snapshots.
//!
//! A case lives in one directory:
//!
//! ```text
//! case.yaml            case document (schema_version, metadata, tree, parameters, bindings, artifacts)
//! artifacts/...        traces (CSV), metric reports, scenarios; referenced by relative path + SHA-256
//! attestations.jsonl   append-only attestation log, one JSON object per line
//! snapshots/<id>.yaml  frozen case documents
//! changes/<id>.yaml    change requests; <id>.impact.yaml holds the latest impact report
//! .lock                writer lock
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;
use crate::evidence::{self, Artifact, Artifacts, Attestation, AttestationLog, EvidenceBinding, LoadedArtifact};
use crate::formula::{ParameterEnv, Trace};
use crate::gsn::{GsnEdge, GsnError, GsnNode, GsnTree, NodeId, Tag};
use crate::kinematics::ScenarioSpec;

pub const SCHEMA_VERSION: u32 = 1;
pub const CASE_FILE: &str = "case.yaml";
const ATTESTATION_FILE: &str = "attestations.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("schema version {found} not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("artifact {name}: digest {found} does not match recorded {expected}")]
    IntegrityError {
        name: String,
        expected: String,
        found: String,
    },
    #[error("malformed case: {0}")]
    MalformedCase(String),
    #[error("malformed case: {0}")]
    Structure(#[from] GsnError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("empty tag query")]
    EmptyQuery,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseMetadata {
    pub name: String,
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub description: String,
    /// Optional controlled vocabulary; when present every node tag must be in it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_tags: Option<BTreeSet<Tag>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Trace,
    Report,
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactRef {
    pub kind: ArtifactKind,
    /// Relative to the case directory.
    pub path: String,
    pub digest: String,
}

/// A safety case: argument tree, parameters, evidence bindings and the
/// artifacts the bindings read.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub metadata: CaseMetadata,
    pub tree: GsnTree,
    pub env: ParameterEnv,
    pub bindings: BTreeMap<NodeId, EvidenceBinding>,
    pub artifacts: BTreeMap<String, ArtifactRef>,
}

impl Case {
    pub fn new(
        metadata: CaseMetadata,
        tree: GsnTree,
        env: ParameterEnv,
        bindings: BTreeMap<NodeId, EvidenceBinding>,
        artifacts: BTreeMap<String, ArtifactRef>,
    ) -> Result<Self, StoreError> {
        let case = Self {
            metadata,
            tree,
            env,
            bindings,
            artifacts,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        for (id, binding) in &self.bindings {
            if !self.tree.is_leaf(id) {
                return Err(StoreError::MalformedCase(format!(
                    "binding on {id}, which is not a solution or assumption"
                )));
            }
            if let Some(name) = binding.artifact_ref() {
                if !self.artifacts.contains_key(name) {
                    return Err(StoreError::MalformedCase(format!(
                        "binding on {id} references unknown artifact {name}"
                    )));
                }
            }
            binding
                .validate()
                .map_err(|e| StoreError::MalformedCase(format!("binding on {id}: {e}")))?;
        }
        if let Some(allowed) = &self.metadata.allowed_tags {
            for node in self.tree.nodes() {
                if let Some(tag) = node.tags.iter().find(|t| !allowed.contains(*t)) {
                    return Err(StoreError::MalformedCase(format!(
                        "node {} uses tag {tag:?} outside the allowed vocabulary",
                        node.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> CaseDocument {
        CaseDocument {
            schema_version: SCHEMA_VERSION,
            metadata: self.metadata.clone(),
            root: self.tree.root().clone(),
            nodes: self.tree.nodes().cloned().collect(),
            edges: self.tree.edges().to_vec(),
            parameters: self.env.clone(),
            bindings: self.bindings.clone(),
            artifacts: self.artifacts.clone(),
        }
    }

    pub fn from_document(doc: CaseDocument) -> Result<Self, StoreError> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersionMismatch {
                found: doc.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let tree = GsnTree::build(doc.nodes, doc.edges, doc.root)?;
        Self::new(doc.metadata, tree, doc.parameters, doc.bindings, doc.artifacts)
    }

    /// Content digest of the case, covering every field and, through the
    /// artifact references, every artifact's bytes.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.to_document()).expect("case serializes");
        digest::sha256_hex(&json)
    }
}

/// On-disk form of a [`Case`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDocument {
    pub schema_version: u32,
    pub metadata: CaseMetadata,
    pub root: NodeId,
    pub nodes: Vec<GsnNode>,
    #[serde(default)]
    pub edges: Vec<GsnEdge>,
    #[serde(default)]
    pub parameters: ParameterEnv,
    #[serde(default)]
    pub bindings: BTreeMap<NodeId, EvidenceBinding>,
    #[serde(default)]
    pub artifacts: BTreeMap<String, ArtifactRef>,
}

pub fn parse_case(text: &str) -> Result<Case, StoreError> {
    #[derive(Deserialize)]
    struct VersionProbe {
        schema_version: Option<u32>,
    }
    // Check the version first so a future document reports a version
    // mismatch rather than an unknown field.
    let probe: VersionProbe = serde_yaml::from_str(text).map_err(|e| StoreError::MalformedCase(e.to_string()))?;
    match probe.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(found) => {
            return Err(StoreError::SchemaVersionMismatch {
                found,
                expected: SCHEMA_VERSION,
            })
        }
        None => return Err(StoreError::MalformedCase("missing schema_version".into())),
    }
    let doc: CaseDocument = serde_yaml::from_str(text).map_err(|e| StoreError::MalformedCase(e.to_string()))?;
    Case::from_document(doc)
}

pub fn render_case(c: &Case) -> String {
    serde_yaml::to_string(&c.to_document()).expect("case serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Any,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTagQuery")]
pub struct TagQuery {
    pub mode: QueryMode,
    pub tags: BTreeSet<Tag>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTagQuery {
    #[serde(default = "any_mode")]
    mode: QueryMode,
    tags: Vec<String>,
}

fn any_mode() -> QueryMode {
    QueryMode::Any
}

impl TryFrom<RawTagQuery> for TagQuery {
    type Error = StoreError;

    fn try_from(raw: RawTagQuery) -> Result<Self, Self::Error> {
        TagQuery::new(raw.mode, raw.tags.iter().map(String::as_str))
    }
}

impl TagQuery {
    pub fn new<'a>(mode: QueryMode, tags: impl IntoIterator<Item = &'a str>) -> Result<Self, StoreError> {
        let tags = tags
            .into_iter()
            .map(Tag::new)
            .collect::<Result<BTreeSet<_>, _>>()?;
        if tags.is_empty() {
            return Err(StoreError::EmptyQuery);
        }
        Ok(Self { mode, tags })
    }

    pub fn any<'a>(tags: impl IntoIterator<Item = &'a str>) -> Result<Self, StoreError> {
        Self::new(QueryMode::Any, tags)
    }

    pub fn all<'a>(tags: impl IntoIterator<Item = &'a str>) -> Result<Self, StoreError> {
        Self::new(QueryMode::All, tags)
    }

    pub fn matches(&self, node: &GsnNode) -> bool {
        match self.mode {
            QueryMode::Any => self.tags.iter().any(|t| node.tags.contains(t)),
            QueryMode::All => self.tags.iter().all(|t| node.tags.contains(t)),
        }
    }
}

/// Node ids whose tags match the query, sorted.
pub fn query_tags(c: &Case, q: &TagQuery) -> Vec<NodeId> {
    c.tree.nodes().filter(|n| q.matches(n)).map(|n| n.id.clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub id: String,
    pub label: String,
    pub created_at: DateTime<Utc>,
    pub case: Case,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotDocument {
    pub id: String,
    pub label: String,
    pub created_at: DateTime<Utc>,
    pub case: CaseDocument,
}

impl Snapshot {
    pub fn to_document(&self) -> SnapshotDocument {
        SnapshotDocument {
            id: self.id.clone(),
            label: self.label.clone(),
            created_at: self.created_at,
            case: self.case.to_document(),
        }
    }

    pub fn from_document(doc: SnapshotDocument) -> Result<Self, StoreError> {
        let case = Case::from_document(doc.case)?;
        let id = case.digest();
        if id != doc.id {
            return Err(StoreError::IntegrityError {
                name: format!("snapshot {}", doc.id),
                expected: doc.id,
                found: id,
            });
        }
        Ok(Self {
            id,
            label: doc.label,
            created_at: doc.created_at,
            case,
        })
    }
}

/// Freeze a case. The id depends on content only, not on label or time.
pub fn snapshot(c: &Case, label: &str, created_at: DateTime<Utc>) -> Snapshot {
    Snapshot {
        id: c.digest(),
        label: label.to_string(),
        created_at,
        case: c.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta<K> {
    pub added: Vec<K>,
    pub removed: Vec<K>,
    pub modified: Vec<K>,
}

impl<K> Default for Delta<K> {
    fn default() -> Self {
        Self {
            added: Vec::new(),
            removed: Vec::new(),
            modified: Vec::new(),
        }
    }
}

impl<K> Delta<K> {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }

    pub fn len(&self) -> usize {
        self.added.len() + self.removed.len() + self.modified.len()
    }
}

fn diff_maps<K: Ord + Clone, V: PartialEq>(a: &BTreeMap<K, V>, b: &BTreeMap<K, V>) -> Delta<K> {
    let mut d = Delta::default();
    for (k, va) in a {
        match b.get(k) {
            None => d.removed.push(k.clone()),
            Some(vb) if vb != va => d.modified.push(k.clone()),
            Some(_) => {}
        }
    }
    d.added = b.keys().filter(|k| !a.contains_key(k)).cloned().collect();
    d
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub nodes: Delta<NodeId>,
    pub edges: Delta<GsnEdge>,
    pub env: Delta<String>,
    pub bindings: Delta<NodeId>,
    pub artifacts: Delta<String>,
    pub metadata_changed: bool,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
            && self.edges.is_empty()
            && self.env.is_empty()
            && self.bindings.is_empty()
            && self.artifacts.is_empty()
            && !self.metadata_changed
    }
}

pub fn diff_cases(a: &Case, b: &Case) -> ChangeSet {
    let nodes_a: BTreeMap<_, _> = a.tree.nodes().map(|n| (n.id.clone(), n)).collect();
    let nodes_b: BTreeMap<_, _> = b.tree.nodes().map(|n| (n.id.clone(), n)).collect();
    let edges_a: BTreeSet<_> = a.tree.edges().iter().cloned().collect();
    let edges_b: BTreeSet<_> = b.tree.edges().iter().cloned().collect();
    let env_a: BTreeMap<_, _> = a.env.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let env_b: BTreeMap<_, _> = b.env.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    ChangeSet {
        nodes: diff_maps(&nodes_a, &nodes_b),
        edges: Delta {
            added: edges_b.difference(&edges_a).cloned().collect(),
            removed: edges_a.difference(&edges_b).cloned().collect(),
            modified: Vec::new(),
        },
        env: diff_maps(&env_a, &env_b),
        bindings: diff_maps(&a.bindings, &b.bindings),
        artifacts: diff_maps(&a.artifacts, &b.artifacts),
        metadata_changed: a.metadata != b.metadata || a.tree.root() != b.tree.root(),
    }
}

pub fn diff_snapshots(a: &Snapshot, b: &Snapshot) -> ChangeSet {
    diff_cases(&a.case, &b.case)
}

/// Exclusive writer lock on a case directory, released on drop.
#[derive(Debug)]
pub struct CaseLock {
    _file: File,
}

/// A case directory on disk.
#[derive(Debug, Clone)]
pub struct CaseStore {
    dir: PathBuf,
}

impl CaseStore {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn case_path(&self) -> PathBuf {
        self.dir.join(CASE_FILE)
    }

    pub fn lock(&self) -> Result<CaseLock, StoreError> {
        let path = self.dir.join(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.lock().map_err(io_err(&path))?;
        Ok(CaseLock { _file: file })
    }

    /// Load and validate the case, checking every artifact digest.
    pub fn load_case(&self) -> Result<Case, StoreError> {
        let path = self.case_path();
        if !path.exists() {
            return Err(StoreError::NotFound(format!("case document {}", path.display())));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let case = parse_case(&text)?;
        for (name, r) in &case.artifacts {
            let bytes = self.read_artifact_bytes(name, r)?;
            let found = digest::sha256_hex(&bytes);
            if found != r.digest {
                return Err(StoreError::IntegrityError {
                    name: name.clone(),
                    expected: r.digest.clone(),
                    found,
                });
            }
        }
        Ok(case)
    }

    pub fn save_case(&self, c: &Case) -> Result<(), StoreError> {
        c.validate()?;
        write_atomic(&self.case_path(), render_case(c).as_bytes())
    }

    fn read_artifact_bytes(&self, name: &str, r: &ArtifactRef) -> Result<Vec<u8>, StoreError> {
        let rel = Path::new(&r.path);
        if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(StoreError::MalformedCase(format!(
                "artifact {name} path {} must stay inside the case directory",
                r.path
            )));
        }
        let path = self.dir.join(rel);
        fs::read(&path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(format!("artifact {name} at {}", path.display())),
            _ => StoreError::Io { path, source },
        })
    }

    /// Write artifact bytes beside the case and return a reference to them.
    pub fn put_artifact(&self, rel_path: &str, kind: ArtifactKind, bytes: &[u8]) -> Result<ArtifactRef, StoreError> {
        let path = self.dir.join(rel_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        write_atomic(&path, bytes)?;
        Ok(ArtifactRef {
            kind,
            path: rel_path.to_string(),
            digest: digest::sha256_hex(bytes),
        })
    }

    /// Parse every artifact the case references.
    pub fn load_artifacts(&self, c: &Case) -> Result<Artifacts, StoreError> {
        let mut out = Artifacts::new();
        for (name, r) in &c.artifacts {
            let bytes = self.read_artifact_bytes(name, r)?;
            let digest = digest::sha256_hex(&bytes);
            if digest != r.digest {
                return Err(StoreError::IntegrityError {
                    name: name.clone(),
                    expected: r.digest.clone(),
                    found: digest,
                });
            }
            let parse_err = |message: String| StoreError::Parse {
                path: self.dir.join(&r.path),
                message,
            };
            let content = match r.kind {
                ArtifactKind::Trace => {
                    let text = String::from_utf8(bytes).map_err(|e| parse_err(e.to_string()))?;
                    Artifact::Trace(Trace::from_csv(&text).map_err(|e| parse_err(e.to_string()))?)
                }
                ArtifactKind::Report => {
                    Artifact::Report(evidence::ingest_metric_report(&bytes).map_err(|e| parse_err(e.to_string()))?)
                }
                ArtifactKind::Scenario => {
                    let spec: ScenarioSpec = serde_yaml::from_slice(&bytes).map_err(|e| parse_err(e.to_string()))?;
                    Artifact::Scenario(spec)
                }
            };
            out.insert(name.clone(), LoadedArtifact { content, digest });
        }
        Ok(out)
    }

    pub fn load_attestations(&self) -> Result<AttestationLog, StoreError> {
        let path = self.dir.join(ATTESTATION_FILE);
        if !path.exists() {
            return Ok(AttestationLog::new());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let a: Attestation = serde_json::from_str(line).map_err(|e| StoreError::Parse {
                path: path.clone(),
                message: format!("line {}: {e}", i + 1),
            })?;
            entries.push(a);
        }
        Ok(AttestationLog::from_entries(entries))
    }

    pub fn append_attestation(&self, a: &Attestation) -> Result<(), StoreError> {
        let path = self.dir.join(ATTESTATION_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut line = serde_json::to_string(a).expect("attestation serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io_err(&path))
    }

    /// Latest time recorded in the store (attestations, snapshots), or the
    /// Unix epoch for a fresh case. Status reports are stamped with it so
    /// they depend on stored content only.
    pub fn as_of(&self) -> Result<DateTime<Utc>, StoreError> {
        let att = self.load_attestations()?;
        let snaps = self.list_snapshots()?;
        Ok(att
            .entries()
            .iter()
            .map(|a| a.at)
            .chain(snaps.iter().map(|s| s.created_at))
            .max()
            .unwrap_or(DateTime::UNIX_EPOCH))
    }

    pub fn save_snapshot(&self, s: &Snapshot) -> Result<PathBuf, StoreError> {
        let dir = self.dir.join("snapshots");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(format!("{}.yaml", s.id));
        let text = serde_yaml::to_string(&s.to_document()).expect("snapshot serializes");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn list_snapshots(&self) -> Result<Vec<Snapshot>, StoreError> {
        let dir = self.dir.join("snapshots");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().is_some_and(|e| e == "yaml") {
                out.push(read_snapshot(&path)?);
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        Ok(out)
    }

    /// Load a snapshot by full id or unique id prefix.
    pub fn load_snapshot(&self, id_or_prefix: &str) -> Result<Snapshot, StoreError> {
        let matches: Vec<Snapshot> = self
            .list_snapshots()?
            .into_iter()
            .filter(|s| s.id.starts_with(id_or_prefix))
            .collect();
        match matches.len() {
            1 => Ok(matches.into_iter().next().expect("one match")),
            0 => Err(StoreError::NotFound(format!("snapshot {id_or_prefix}"))),
            n => Err(StoreError::MalformedCase(format!("snapshot prefix {id_or_prefix} is ambiguous ({n} matches)"))),
        }
    }

    pub fn write_document<T: Serialize>(&self, rel_path: &str, doc: &T) -> Result<PathBuf, StoreError> {
        let path = self.dir.join(rel_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let text = serde_yaml::to_string(doc).expect("document serializes");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn read_document<T: for<'de> Deserialize<'de>>(&self, rel_path: &str) -> Result<T, StoreError> {
        let path = self.dir.join(rel_path);
        if !path.exists() {
            return Err(StoreError::NotFound(rel_path.to_string()));
        }
        read_yaml(&path)
    }
}

pub fn read_yaml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_yaml::from_str(&text).map_err(|e| StoreError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_snapshot(path: &Path) -> Result<Snapshot, StoreError> {
    Snapshot::from_document(read_yaml(path)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Save `c` as the case document in `dir`.
pub fn save_case(c: &Case, dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    CaseStore::open(dir).save_case(c)
}

/// Load the case document in `dir`.
pub fn load_case(dir: &Path) -> Result<Case, StoreError> {
    CaseStore::open(dir).load_case()
}
