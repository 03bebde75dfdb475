//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;
use std::path::PathBuf;

use safecase::evidence::Artifacts;
use safecase::{
    AgentParams, AttestationLog, Case, CaseStore, EvidenceBinding, FpScenario, GsnEdge, GsnNode, GsnTree, NodeId,
    NodeKind, ParameterEnv,
};
use safecase::kinematics::FusionMode;
use safecase::store::CaseMetadata;

pub fn sample_case_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../sample-case")
}

pub fn sample_change_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../sample-changes").join(name)
}

/// The shipped case with its artifacts and attestations.
pub fn load_sample() -> (Case, Artifacts, AttestationLog) {
    let store = CaseStore::open(sample_case_dir());
    let case = store.load_case().expect("shipped case loads");
    let arts = store.load_artifacts(&case).expect("shipped artifacts load");
    let att = store.load_attestations().expect("shipped attestations load");
    (case, arts, att)
}

/// The shipped false-positive stop, at step `dt`.
pub fn scenario(dt: f64) -> FpScenario {
    let mut s = FpScenario {
        agv: AgentParams::new(2.0, 2.0, 0.0).unwrap(),
        rear: AgentParams::new(2.0, 1.0, 0.5).unwrap(),
        gap0: 2.5,
        frame_rate: 10.0,
        t_proc: 0.1,
        t_fp: 1.0,
        dt,
        horizon: 0.0,
        fusion: FusionMode::MirrorFp,
    };
    s.horizon = s.t_fp + s.braking_window().unwrap() + 1.0;
    s
}

/// A goal with `width` strategies, each supported by `width` formula
/// solutions over parameters `k0..k{width}`.
pub fn wide_case(width: usize) -> Case {
    let root = NodeId::new("G0").unwrap();
    let mut nodes = vec![GsnNode::new(root.clone(), NodeKind::Goal, "top")];
    let mut edges = Vec::new();
    let mut bindings = BTreeMap::new();
    let mut env = ParameterEnv::new();
    for i in 0..width {
        env.insert(format!("k{i}"), i as f64, "m").unwrap();
        let s = NodeId::new(format!("S{i}")).unwrap();
        nodes.push(GsnNode::new(s.clone(), NodeKind::Strategy, format!("branch {i}")));
        edges.push(GsnEdge::supported_by(&root, &s));
        for j in 0..width {
            let sn = NodeId::new(format!("Sn{i}_{j}")).unwrap();
            let tag = format!("t{}", (i + j) % 8);
            nodes.push(GsnNode::new(sn.clone(), NodeKind::Solution, "check").with_tags([tag.as_str()]).unwrap());
            edges.push(GsnEdge::supported_by(&s, &sn));
            bindings.insert(sn, EvidenceBinding::formula(format!("k{j} * 2 >= k{i}"), None));
        }
    }
    let tree = GsnTree::build(nodes, edges, root).unwrap();
    let meta = CaseMetadata {
        name: format!("wide-{width}"),
        version: "1".into(),
        description: String::new(),
        allowed_tags: None,
    };
    Case::new(meta, tree, env, bindings, BTreeMap::new()).unwrap()
}
