//! Random valid cases for property tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use safecase::evidence::{Comparator, EvidenceBinding, RemediationAction};
use safecase::store::{ArtifactKind, ArtifactRef, Case, CaseMetadata, CaseStore};
use safecase::{GsnEdge, GsnNode, GsnTree, NodeId, NodeKind, ParameterEnv};

pub const TAGS: &[&str] = &["agv", "rear-agent", "braking distance", "detection", "fusion", "camera", "floor"];
pub const REPORT: &str = "tool: gen\nmetrics:\n  m0: 0.5\n  m1: 2.0\n  m2: -1.0\n";

pub fn report_ref() -> ArtifactRef {
    ArtifactRef {
        kind: ArtifactKind::Report,
        path: "artifacts/report.yaml".into(),
        digest: safecase::digest::sha256_hex(REPORT.as_bytes()),
    }
}

pub fn write_report(store: &CaseStore) {
    store.put_artifact("artifacts/report.yaml", ArtifactKind::Report, REPORT.as_bytes()).unwrap();
}

fn id(s: String) -> NodeId {
    NodeId::new(s).unwrap()
}

pub fn random_formula(rng: &mut ChaCha8Rng, params: &[String]) -> String {
    let p = |rng: &mut ChaCha8Rng| params.choose(rng).unwrap().clone();
    let ops = [">=", "<=", ">", "<"];
    match rng.gen_range(0..3) {
        0 => format!("{} {} {}", p(rng), ops.choose(rng).unwrap(), rng.gen_range(-5..5)),
        1 => format!("{} + {} {} {}", p(rng), p(rng), ops.choose(rng).unwrap(), rng.gen_range(-5..5)),
        _ => format!("{} * 2 {} {} or {} < 0", p(rng), ops.choose(rng).unwrap(), p(rng), p(rng)),
    }
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.gen_range(1..16);
    let mut nodes = vec![GsnNode::new(id("G0".into()), NodeKind::Goal, "root")];
    let mut edges = Vec::new();
    for i in 1..n {
        let parents: Vec<usize> = (0..nodes.len())
            .filter(|&j| matches!(nodes[j].kind, NodeKind::Goal | NodeKind::Strategy))
            .collect();
        let parent = nodes[*parents.choose(rng).unwrap()].id.clone();
        let kind = *[
            NodeKind::Goal,
            NodeKind::Strategy,
            NodeKind::Solution,
            NodeKind::Solution,
            NodeKind::Assumption,
            NodeKind::Context,
            NodeKind::Justification,
        ]
        .choose(rng)
        .unwrap();
        let prefix = match kind {
            NodeKind::Goal => "G",
            NodeKind::Strategy => "S",
            NodeKind::Solution => "Sn",
            NodeKind::Assumption => "A",
            NodeKind::Context => "C",
            NodeKind::Justification => "J",
        };
        let nid = id(format!("{prefix}{i}"));
        let k = rng.gen_range(0..3);
        let tags: Vec<&str> = TAGS.choose_multiple(rng, k).cloned().collect();
        nodes.push(GsnNode::new(nid.clone(), kind, format!("node {i} text")).with_tags(tags).unwrap());
        edges.push(match kind {
            NodeKind::Assumption | NodeKind::Context | NodeKind::Justification => GsnEdge::in_context_of(&parent, &nid),
            _ => GsnEdge::supported_by(&parent, &nid),
        });
    }
    for node in nodes.iter_mut() {
        let supported = edges
            .iter()
            .any(|e| e.from == node.id && e.kind == safecase::EdgeKind::SupportedBy);
        if matches!(node.kind, NodeKind::Goal | NodeKind::Strategy) && !supported {
            node.undeveloped = true;
        }
    }
    let root = nodes[0].id.clone();
    let tree = GsnTree::build(nodes, edges, root).unwrap();

    let params: Vec<String> = (0..rng.gen_range(1..5)).map(|i| format!("p{i}")).collect();
    let mut env = ParameterEnv::new();
    for p in &params {
        env.insert(p.clone(), rng.gen_range(-4.0..4.0), "u").unwrap();
    }
    let mut bindings = BTreeMap::new();
    let mut artifacts = BTreeMap::new();
    for leaf in tree.leaves() {
        let b = match rng.gen_range(0..5) {
            0 => continue,
            1 => {
                artifacts.insert("report".to_string(), report_ref());
                let cmp = *[Comparator::Ge, Comparator::Le, Comparator::Gt].choose(rng).unwrap();
                EvidenceBinding::metric(&format!("m{}", rng.gen_range(0..4)), cmp, rng.gen_range(-1.0..1.0), "report")
            }
            2 => EvidenceBinding::manual("safety_engineer"),
            _ => EvidenceBinding::formula(random_formula(rng, &params), None),
        };
        let b = if rng.gen_bool(0.5) {
            b.with_remediation(RemediationAction::CollectData, "more data")
        } else {
            b
        };
        bindings.insert(leaf, b);
    }
    let metadata = CaseMetadata {
        name: format!("case-{}", rng.gen_range(0..1000)),
        version: "1".into(),
        description: "generated".into(),
        allowed_tags: None,
    };
    Case::new(metadata, tree, env, bindings, artifacts).unwrap()
}
