//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Run with `cargo test -p safecase-cli --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safecase::change::{classify, LeafOutcome};
use safecase::evidence::{Comparator, EvidenceBinding, RemediationAction};
use safecase::formula::{
    self, check_monotone, parse_formula, parse_term, ArithOp, CmpOp, Column, Direction, Domain, Formula, Monotonicity,
    ParameterEnv, Quantifier, Term, Trace, TriBool,
};
use safecase::kinematics::{self, min_safe_rear_gap, simulate_fp_braking, stopping_distance, AgentParams, FpScenario, FusionMode};
use safecase::store::{self, snapshot, ArtifactKind, Case, CaseMetadata, CaseStore};
use safecase::{GsnEdge, GsnNode, GsnTree, NodeId, NodeKind, Tag, TagQuery, Validity};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("rear-gap formula soundness on randomized false-positive scenarios", rear_gap_soundness),
        ("closed-form stopping distance vs numeric integration", braking_integration),
        ("frame-rate monotonicity of the stopping distance", frame_rate_monotone),
        ("predicate tags on the shipped case", predicate_tags),
        ("three-stage classifier truth table and CLI end-to-end", classifier),
        ("quantifier semantics vs explicit finite expansion", quantifier_semantics),
        ("persistence round-trip and snapshot content addressing", persistence),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let res = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS  {name}  [{detail}; {secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}  [{detail}; {secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond as bool) {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- kinematics

/// Speed of an agent that cruises at `v0` and brakes at `a` from `t_brake`.
fn speed(v0: f64, t_brake: f64, a: f64, t: f64) -> f64 {
    if t <= t_brake {
        v0
    } else {
        (v0 - a * (t - t_brake)).max(0.0)
    }
}

/// Independent position-based run of the false-positive stop. Returns the
/// smallest gap over the sampled run.
fn oracle_min_gap(s: &FpScenario) -> f64 {
    let rt = 1.0 / s.frame_rate + s.t_proc;
    let agv_brake = s.t_fp + rt;
    let rear_brake = agv_brake + s.rear.t_react;
    let (mut xa, mut xr) = (s.gap0, 0.0);
    let mut min = s.gap0;
    let n = (s.horizon / s.dt).floor() as usize;
    for k in 0..n {
        let (t0, t1) = (k as f64 * s.dt, (k + 1) as f64 * s.dt);
        // trapezoid with an extra node at each braking onset
        let step = |x: &mut f64, v0: f64, tb: f64, a: f64| {
            let mut nodes = vec![t0, t1];
            if tb > t0 && tb < t1 {
                nodes.insert(1, tb);
            }
            let stop = tb + v0 / a;
            if stop > t0 && stop < t1 {
                nodes.push(stop);
                nodes.sort_by(f64::total_cmp);
            }
            for w in nodes.windows(2) {
                *x += 0.5 * (speed(v0, tb, a, w[0]) + speed(v0, tb, a, w[1])) * (w[1] - w[0]);
            }
        };
        step(&mut xa, s.agv.v0, agv_brake, s.agv.decel);
        step(&mut xr, s.rear.v0, rear_brake, s.rear.decel);
        min = min.min(xa - xr);
    }
    min
}

fn random_fp_scenario(rng: &mut ChaCha8Rng) -> FpScenario {
    // Equal cruise speeds and a rear agent that brakes no harder than the
    // AGV: the gap is constant until braking and smallest at the final stop.
    let v = rng.gen_range(0.5..4.0);
    let a_agv = rng.gen_range(1.0..4.0);
    let mut s = FpScenario {
        agv: AgentParams::new(v, a_agv, 0.0).unwrap(),
        rear: AgentParams::new(v, rng.gen_range(0.5..a_agv), rng.gen_range(0.2..1.0)).unwrap(),
        gap0: 0.0,
        frame_rate: rng.gen_range(5.0..30.0),
        t_proc: rng.gen_range(0.0..0.2),
        t_fp: rng.gen_range(0.0..2.0),
        dt: 0.01,
        horizon: 0.0,
        fusion: FusionMode::MirrorFp,
    };
    s.horizon = s.t_fp + s.braking_window().unwrap() + 0.5;
    s
}

fn rear_gap_on(s: &FpScenario) -> Result<TriBool, String> {
    let f = parse_formula(formula::REAR_GAP_FORMULA).map_err(|e| e.to_string())?;
    let env = ParameterEnv::new()
        .with("d_b_rear", s.gap0, "m")
        .with("t_b_agv", s.braking_window().unwrap(), "s");
    let trace = simulate_fp_braking(s).map_err(|e| e.to_string())?;
    formula::evaluate(&f, &env, Some(&trace)).map_err(|e| e.to_string())
}

fn rear_gap_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut safe, mut unsafe_) = (0, 0);
    for i in 0..50 {
        let mut s = random_fp_scenario(&mut rng);
        let boundary = min_safe_rear_gap(&s.rear, &s.agv);

        s.gap0 = boundary + 0.5;
        let oracle = oracle_min_gap(&s) > 0.0;
        let got = rear_gap_on(&s)?;
        ensure!(oracle && got == TriBool::True, "scenario {i} safe gap: oracle {oracle}, formula {got}");
        safe += 1;

        if boundary > 0.5 {
            s.gap0 = (boundary - 0.5).max(0.1);
            let oracle = oracle_min_gap(&s) > 0.0;
            let got = rear_gap_on(&s)?;
            ensure!(!oracle && got == TriBool::False, "scenario {i} short gap: oracle {oracle}, formula {got}");
            unsafe_ += 1;
        }
    }
    Ok(format!("{safe} safe and {unsafe_} short-gap traces agree with the oracle"))
}

/// Step v' = -a after the reaction time, splitting steps at phase changes.
fn integrate_stop(v0: f64, tr: f64, a: f64, dt: f64) -> f64 {
    let (mut x, mut v, mut t) = (0.0, v0, 0.0);
    while v > 0.0 {
        let mut h = dt;
        if t < tr && t + h > tr {
            h = tr - t;
        }
        let acc = if t < tr { 0.0 } else { -a };
        let mut v1 = v + acc * h;
        if v1 < 0.0 {
            h = v / a;
            v1 = 0.0;
        }
        x += 0.5 * (v + v1) * h;
        v = v1;
        t += h;
    }
    x
}

fn braking_integration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v0 = rng.gen_range(0.0..=5.0);
        let a = rng.gen_range(0.5..=5.0);
        let tr = rng.gen_range(0.0..=1.0);
        let closed = stopping_distance(v0, tr, a).map_err(|e| e.to_string())?;
        let err = (closed - integrate_stop(v0, tr, a, 1e-4)).abs();
        worst = worst.max(err);
        ensure!(err < 1e-3, "v0={v0} decel={a} t_react={tr}: error {err}");
    }
    Ok(format!("200 draws, worst error {worst:.2e} m"))
}

fn frame_rate_monotone() -> Outcome {
    let term = parse_term("v0 * (1 / frame_rate + t_proc) + v0 * v0 / (2 * decel)").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    for i in 0..100 {
        let (v0, tp, a) = (rng.gen_range(0.05..5.0), rng.gen_range(0.0..0.5), rng.gen_range(0.5..5.0));
        let env = ParameterEnv::new()
            .with("v0", v0, "m/s")
            .with("t_proc", tp, "s")
            .with("decel", a, "m/s^2")
            .with("frame_rate", 10.0, "Hz");
        // the term is the closed-form stopping distance at every frame rate
        for f in [1.0, 7.5, 100.0] {
            let mut e = env.clone();
            e.set_value("frame_rate", f).unwrap();
            let via_term = formula::evaluate_term(&term, &e).map_err(|e| e.to_string())?.unwrap();
            let direct = stopping_distance(v0, kinematics::reaction_time(f, tp).unwrap(), a).unwrap();
            ensure!((via_term - direct).abs() < 1e-9, "draw {i}: term {via_term} vs closed form {direct}");
        }
        let r = check_monotone(&term, "frame_rate", 1.0, 100.0, 100, Direction::Decreasing, &env).map_err(|e| e.to_string())?;
        ensure!(r.outcome == Monotonicity::Holds, "draw {i} (v0={v0}, t_proc={tp}, decel={a}): {:?}", r.outcome);
    }
    Ok("100 draws, decreasing at all 100 sampled frame rates".into())
}

// ------------------------------------------------------------------ the case

fn predicate_tags() -> Outcome {
    let c = store::load_case(&common::workspace().join("sample-case")).map_err(|e| e.to_string())?;
    // predicate or constant, node housing it, its tags
    let rows: [(&str, &str, &[&str]); 5] = [
        ("d_agv_rear", "A1", &["distance", "AGV", "rear-agent"]),
        ("d_b_rear", "A2", &["rear-agent", "braking distance"]),
        ("fp_ml", "A3", &["false positive", "detection"]),
        ("detected_fusion", "A4", &["fusion", "detection"]),
        ("t_b_agv", "A5", &["AGV", "braking time"]),
    ];
    let mut expected: BTreeMap<Tag, BTreeSet<NodeId>> = BTreeMap::new();
    for (_, node, tags) in rows {
        for t in tags {
            expected.entry(Tag::new(t).unwrap()).or_default().insert(NodeId::new(node).unwrap());
        }
    }
    for (tag, nodes) in &expected {
        let got: BTreeSet<NodeId> = store::query_tags(&c, &TagQuery::any([tag.as_str()]).unwrap()).into_iter().collect();
        ensure!(&got == nodes, "tag {tag:?}: expected {nodes:?}, got {got:?}");
    }
    for (symbol, node, _) in rows {
        let id = NodeId::new(node).unwrap();
        let b = c.bindings.get(&id).ok_or(format!("{node} has no binding"))?;
        if let safecase::BindingKind::Formula { formula: text, .. } = &b.evidence {
            let syms = parse_formula(text).unwrap().free_symbols();
            ensure!(syms.params.contains(symbol) || syms.signals.contains(symbol), "{node} does not mention {symbol}");
        }
    }
    Ok(format!("{} tags over 5 rows match exactly", expected.len()))
}

/// The three cases written out directly.
fn expected_stage(structural: bool, leaves: &[LeafOutcome]) -> u8 {
    let failing: Vec<&LeafOutcome> = leaves.iter().filter(|l| l.status != Validity::Valid).collect();
    if !structural && failing.is_empty() {
        1
    } else if !structural && failing.iter().all(|l| l.has_remediation) {
        2
    } else {
        3
    }
}

fn classifier() -> Outcome {
    let statuses = [Validity::Valid, Validity::Invalid, Validity::Unknown];
    let mut rows = 0;
    for n in 0..=4usize {
        // each leaf: 3 statuses x 2 remediation flags
        let combos = 6usize.pow(n as u32);
        for code in 0..combos {
            let mut leaves = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                leaves.push(LeafOutcome {
                    status: statuses[c % 3],
                    has_remediation: (c / 3) % 2 == 1,
                });
                c /= 6;
            }
            for structural in [false, true] {
                let got = classify(structural, &leaves).number();
                ensure!(got == expected_stage(structural, &leaves), "structural={structural} leaves={leaves:?}: got {got}");
                rows += 1;
            }
        }
    }

    let dir = common::scratch_case();
    for (file, code, stage) in [("frame-rate.yaml", 0, 1u64), ("speed-change.yaml", 1, 2), ("structural.yaml", 1, 3)] {
        let out = Command::new(env!("CARGO_BIN_EXE_safecase"))
            .arg("impact")
            .arg(dir.path())
            .arg(common::sample_change(file))
            .env_remove("SAFECASE_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.code() == Some(code), "{file}: exit {:?}, expected {code}", out.status.code());
        let report: serde_yaml::Value = serde_yaml::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        ensure!(report["stage"].as_u64() == Some(stage), "{file}: stage {:?}, expected {stage}", report["stage"]);
    }
    Ok(format!("{rows} truth-table rows; CLI stages 1/2/3 with exit codes 0/1/1"))
}

// ---------------------------------------------------------------- formulas

const PARAMS: &[&str] = &["p", "q", "r"];

fn gen_term(rng: &mut ChaCha8Rng, vars: &[String], depth: u32) -> Term {
    let choice = rng.gen_range(0..if depth == 0 { 4 } else { 6 });
    match choice {
        0 => Term::Num(rng.gen_range(-12..=12) as f64 / 4.0),
        1 => Term::Param(PARAMS.choose(rng).unwrap().to_string()),
        2 if !vars.is_empty() => Term::Var(vars.choose(rng).unwrap().clone()),
        3 if !vars.is_empty() => gen_signal(rng, vars),
        2 | 3 => Term::Num(rng.gen_range(0..8) as f64 / 2.0),
        _ => {
            let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div].choose(rng).unwrap();
            Term::Arith(op, Box::new(gen_term(rng, vars, depth - 1)), Box::new(gen_term(rng, vars, depth - 1)))
        }
    }
}

/// Signal read at a bound variable, sometimes shifted off the sample grid.
fn gen_signal(rng: &mut ChaCha8Rng, vars: &[String]) -> Term {
    let v = Term::Var(vars.choose(rng).unwrap().clone());
    let name = ["x", "x", "y", "z"].choose(rng).unwrap().to_string();
    let arg = if rng.gen_bool(0.5) {
        v
    } else {
        let shift = rng.gen_range(-4..8) as f64 * 0.15;
        Term::Arith(ArithOp::Add, Box::new(v), Box::new(Term::Num(shift)))
    };
    Term::Signal(name, Box::new(arg))
}

fn gen_formula(rng: &mut ChaCha8Rng, vars: &mut Vec<String>, depth: u32, quants: u32) -> Formula {
    let top = if depth == 0 { 3 } else { 10 };
    match rng.gen_range(0..top) {
        0 => Formula::Literal(rng.gen()),
        1 | 2 => {
            if !vars.is_empty() && rng.gen_bool(0.4) {
                let name = ["b", "c"].choose(rng).unwrap().to_string();
                Formula::BoolSignal(name, Term::Var(vars.choose(rng).unwrap().clone()))
            } else {
                let op = *[CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne].choose(rng).unwrap();
                let lhs = if !vars.is_empty() && rng.gen_bool(0.7) { gen_signal(rng, vars) } else { gen_term(rng, vars, 2) };
                Formula::Compare(op, lhs, gen_term(rng, vars, 2))
            }
        }
        3 => Formula::Not(Box::new(gen_formula(rng, vars, depth - 1, quants))),
        4 => Formula::And(
            Box::new(gen_formula(rng, vars, depth - 1, quants)),
            Box::new(gen_formula(rng, vars, depth - 1, quants)),
        ),
        5 => Formula::Or(
            Box::new(gen_formula(rng, vars, depth - 1, quants)),
            Box::new(gen_formula(rng, vars, depth - 1, quants)),
        ),
        6 => Formula::Implies(
            Box::new(gen_formula(rng, vars, depth - 1, quants)),
            Box::new(gen_formula(rng, vars, depth - 1, quants)),
        ),
        _ if quants == 0 => Formula::Literal(rng.gen()),
        _ => {
            let var = format!("t{}", vars.len());
            let domain = if vars.is_empty() || rng.gen_bool(0.4) {
                Domain::Trace
            } else {
                let lo = gen_term(rng, vars, 1);
                let hi = if rng.gen_bool(0.8) {
                    Term::Arith(ArithOp::Add, Box::new(lo.clone()), Box::new(Term::Num(rng.gen_range(0..8) as f64 / 4.0)))
                } else {
                    gen_term(rng, vars, 1)
                };
                Domain::Interval(lo, hi)
            };
            vars.push(var.clone());
            let body = gen_formula(rng, vars, depth - 1, quants - 1);
            vars.pop();
            let q = if rng.gen() { Quantifier::Forall } else { Quantifier::Exists };
            Formula::Quant { q, var, domain, body: Box::new(body) }
        }
    }
}

fn gen_trace(rng: &mut ChaCha8Rng) -> Trace {
    let n = rng.gen_range(1..=20);
    let dt = *[0.25, 0.5, 1.0].choose(rng).unwrap();
    let t0 = *[0.0, -1.0, 0.5].choose(rng).unwrap();
    let num = |rng: &mut ChaCha8Rng| Column::Num((0..n).map(|_| rng.gen_range(-8..=8) as f64 / 4.0).collect());
    let mut cols = BTreeMap::from([("x".to_string(), num(rng)), ("b".to_string(), Column::Bool((0..n).map(|_| rng.gen()).collect()))]);
    if rng.gen_bool(0.7) {
        cols.insert("y".into(), num(rng));
    }
    Trace::new(t0, dt, cols).unwrap()
}

fn gen_env(rng: &mut ChaCha8Rng) -> ParameterEnv {
    let mut env = ParameterEnv::new();
    for p in PARAMS {
        if rng.gen_bool(0.75) {
            env.insert(*p, rng.gen_range(-8..=8) as f64 / 4.0, "").unwrap();
        }
    }
    env
}

/// Quantifier-free formula after substituting every instance.
#[derive(Debug, Clone)]
enum Expanded {
    Const(TriBool),
    Not(Box<Expanded>),
    And(Vec<Expanded>),
    Or(Vec<Expanded>),
    Implies(Box<Expanded>, Box<Expanded>),
    Compare(CmpOp, Term, Term),
    BoolSignal(String, Term),
    /// Evaluation of this piece fails (bad interval, bad lookup, ...).
    Error,
}

const EPS: f64 = 1e-9;

fn sample_times(tr: &Trace) -> Vec<f64> {
    (0..tr.len()).map(|k| tr.t0() + k as f64 * tr.dt()).collect()
}

/// Latest sample at or before `t`; `None` outside the span.
fn oracle_lookup(tr: &Trace, t: f64) -> Option<usize> {
    let times = sample_times(tr);
    if !t.is_finite() || t < times[0] - EPS * tr.dt() || t > times[times.len() - 1] + EPS * tr.dt() {
        return None;
    }
    times.iter().rposition(|s| *s <= t + EPS * tr.dt())
}

/// Numeric value of a closed term; Err for failure, Ok(None) for missing.
fn oracle_term(t: &Term, env: &ParameterEnv, tr: &Trace) -> Result<Option<f64>, ()> {
    Ok(match t {
        Term::Num(v) => Some(*v),
        Term::Var(_) => return Err(()),
        Term::Param(p) => env.get(p),
        Term::Signal(name, arg) => {
            let Some(at) = oracle_term(arg, env, tr)? else { return Ok(None) };
            match tr.column(name) {
                None => None,
                Some(Column::Num(v)) => Some(v[oracle_lookup(tr, at).ok_or(())?]),
                Some(Column::Bool(_)) => return Err(()),
            }
        }
        Term::Arith(op, l, r) => {
            let a = oracle_term(l, env, tr)?;
            let b = oracle_term(r, env, tr)?;
            let (Some(a), Some(b)) = (a, b) else { return Ok(None) };
            let v = match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div if b == 0.0 => return Err(()),
                ArithOp::Div => a / b,
            };
            if v.is_nan() {
                return Err(());
            }
            Some(v)
        }
    })
}

fn subst_term(t: &Term, var: &str, val: f64) -> Term {
    match t {
        Term::Var(v) if v == var => Term::Num(val),
        Term::Signal(n, a) => Term::Signal(n.clone(), Box::new(subst_term(a, var, val))),
        Term::Arith(op, l, r) => Term::Arith(*op, Box::new(subst_term(l, var, val)), Box::new(subst_term(r, var, val))),
        other => other.clone(),
    }
}

fn subst(f: &Formula, var: &str, val: f64) -> Formula {
    match f {
        Formula::Literal(b) => Formula::Literal(*b),
        Formula::Not(a) => Formula::Not(Box::new(subst(a, var, val))),
        Formula::And(a, b) => Formula::And(Box::new(subst(a, var, val)), Box::new(subst(b, var, val))),
        Formula::Or(a, b) => Formula::Or(Box::new(subst(a, var, val)), Box::new(subst(b, var, val))),
        Formula::Implies(a, b) => Formula::Implies(Box::new(subst(a, var, val)), Box::new(subst(b, var, val))),
        Formula::Compare(op, l, r) => Formula::Compare(*op, subst_term(l, var, val), subst_term(r, var, val)),
        Formula::BoolSignal(n, a) => Formula::BoolSignal(n.clone(), subst_term(a, var, val)),
        Formula::Quant { q, var: v, domain, body } => {
            let domain = match domain {
                Domain::Trace => Domain::Trace,
                Domain::Interval(lo, hi) => Domain::Interval(subst_term(lo, var, val), subst_term(hi, var, val)),
            };
            // inner binder of the same name shadows
            let body = if v == var { (**body).clone() } else { subst(body, var, val) };
            Formula::Quant { q: *q, var: v.clone(), domain, body: Box::new(body) }
        }
    }
}

fn expand(f: &Formula, env: &ParameterEnv, tr: &Trace) -> Expanded {
    match f {
        Formula::Literal(b) => Expanded::Const((*b).into()),
        Formula::Not(a) => Expanded::Not(Box::new(expand(a, env, tr))),
        Formula::And(a, b) => Expanded::And(vec![expand(a, env, tr), expand(b, env, tr)]),
        Formula::Or(a, b) => Expanded::Or(vec![expand(a, env, tr), expand(b, env, tr)]),
        Formula::Implies(a, b) => Expanded::Implies(Box::new(expand(a, env, tr)), Box::new(expand(b, env, tr))),
        Formula::Compare(op, l, r) => Expanded::Compare(*op, l.clone(), r.clone()),
        Formula::BoolSignal(n, a) => Expanded::BoolSignal(n.clone(), a.clone()),
        Formula::Quant { q, var, domain, body } => {
            let times: Vec<f64> = match domain {
                Domain::Trace => sample_times(tr),
                Domain::Interval(lo, hi) => {
                    let (lo, hi) = match (oracle_term(lo, env, tr), oracle_term(hi, env, tr)) {
                        (Ok(Some(lo)), Ok(Some(hi))) => (lo, hi),
                        (Err(_), _) | (_, Err(_)) => return Expanded::Error,
                        _ => return Expanded::Const(TriBool::Unknown),
                    };
                    if lo > hi {
                        return Expanded::Error;
                    }
                    let all = sample_times(tr);
                    let (first, last) = (all[0], all[all.len() - 1]);
                    let (lo, hi) = (lo.clamp(first, last), hi.clamp(first, last));
                    all.into_iter()
                        .filter(|s| *s >= lo - EPS * tr.dt() && *s <= hi + EPS * tr.dt())
                        .collect()
                }
            };
            let instances: Vec<Expanded> = times.iter().map(|t| expand(&subst(body, var, *t), env, tr)).collect();
            match q {
                Quantifier::Forall => Expanded::And(instances),
                Quantifier::Exists => Expanded::Or(instances),
            }
        }
    }
}

/// Strong Kleene evaluation of the expansion; Err if any piece fails.
fn eval_expanded(e: &Expanded, env: &ParameterEnv, tr: &Trace) -> Result<TriBool, ()> {
    use TriBool::*;
    let kleene_not = |v: TriBool| match v {
        True => False,
        False => True,
        Unknown => Unknown,
    };
    Ok(match e {
        Expanded::Error => return Err(()),
        Expanded::Const(v) => *v,
        Expanded::Not(a) => kleene_not(eval_expanded(a, env, tr)?),
        Expanded::And(xs) => {
            let vals = xs.iter().map(|x| eval_expanded(x, env, tr)).collect::<Result<Vec<_>, _>>()?;
            if vals.contains(&False) {
                False
            } else if vals.contains(&Unknown) {
                Unknown
            } else {
                True
            }
        }
        Expanded::Or(xs) => {
            let vals = xs.iter().map(|x| eval_expanded(x, env, tr)).collect::<Result<Vec<_>, _>>()?;
            if vals.contains(&True) {
                True
            } else if vals.contains(&Unknown) {
                Unknown
            } else {
                False
            }
        }
        Expanded::Implies(a, b) => {
            let a = eval_expanded(a, env, tr)?;
            let b = eval_expanded(b, env, tr)?;
            match (a, b) {
                (False, _) | (_, True) => True,
                (True, False) => False,
                _ => Unknown,
            }
        }
        Expanded::Compare(op, l, r) => {
            let a = oracle_term(l, env, tr)?;
            let b = oracle_term(r, env, tr)?;
            match (a, b) {
                (Some(a), Some(b)) => {
                    let holds = match op {
                        CmpOp::Lt => a < b,
                        CmpOp::Le => a <= b,
                        CmpOp::Gt => a > b,
                        CmpOp::Ge => a >= b,
                        CmpOp::Eq => a == b,
                        CmpOp::Ne => a != b,
                    };
                    holds.into()
                }
                _ => Unknown,
            }
        }
        Expanded::BoolSignal(name, arg) => {
            let Some(at) = oracle_term(arg, env, tr)? else { return Ok(Unknown) };
            match tr.column(name) {
                None => Unknown,
                Some(Column::Bool(v)) => v[oracle_lookup(tr, at).ok_or(())?].into(),
                Some(Column::Num(_)) => return Err(()),
            }
        }
    })
}

fn quantifier_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..500 {
        let f = gen_formula(&mut rng, &mut Vec::new(), 5, 3);
        let env = gen_env(&mut rng);
        let tr = gen_trace(&mut rng);
        let got = formula::evaluate(&f, &env, Some(&tr)).ok();
        let want = eval_expanded(&expand(&f, &env, &tr), &env, &tr).ok();
        ensure!(got == want, "formula {i} `{f}`: evaluate {got:?}, expansion {want:?}");
        *tally
            .entry(match want {
                Some(TriBool::True) => "true",
                Some(TriBool::False) => "false",
                Some(TriBool::Unknown) => "unknown",
                None => "error",
            })
            .or_default() += 1;

        // three-valued duality on a quantified body
        let mut vars = vec!["t0".to_string()];
        let body = gen_formula(&mut rng, &mut vars, 3, 1);
        let forall = Formula::Quant { q: Quantifier::Forall, var: "t0".into(), domain: Domain::Trace, body: Box::new(body.clone()) };
        let dual = Formula::Not(Box::new(Formula::Quant {
            q: Quantifier::Exists,
            var: "t0".into(),
            domain: Domain::Trace,
            body: Box::new(Formula::Not(Box::new(body))),
        }));
        let a = formula::evaluate(&forall, &env, Some(&tr)).ok();
        let b = formula::evaluate(&dual, &env, Some(&tr)).ok();
        ensure!(a == b, "duality {i} `{forall}`: {a:?} vs {b:?}");
    }
    let quantified = 500;
    Ok(format!("{quantified} formulas agree ({tally:?}); duality holds"))
}

// -------------------------------------------------------------- persistence

const TAG_POOL: &[&str] = &["agv", "rear-agent", "braking distance", "detection", "fusion", "camera", "floor", "lidar"];

struct Generated {
    dir: tempfile::TempDir,
    case: Case,
}

fn generate_case(rng: &mut ChaCha8Rng) -> Generated {
    let dir = tempfile::tempdir().unwrap();
    let s = CaseStore::open(dir.path());
    let n = rng.gen_range(1..20);
    let mut nodes = vec![GsnNode::new(NodeId::new("G0").unwrap(), NodeKind::Goal, "top-level claim")];
    let mut edges = Vec::new();
    for i in 1..n {
        let parents: Vec<NodeId> = nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Goal | NodeKind::Strategy))
            .map(|n| n.id.clone())
            .collect();
        let parent = parents.choose(rng).unwrap().clone();
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
        let id = NodeId::new(format!("N{i}")).unwrap();
        let k = rng.gen_range(0..4);
        let tags: Vec<&str> = TAG_POOL.choose_multiple(rng, k).cloned().collect();
        let text = format!("claim {} with \"quotes\", colons: and unicode \u{2264} {}", i, rng.gen::<u16>());
        nodes.push(GsnNode::new(id.clone(), kind, text).with_tags(tags).unwrap());
        edges.push(match kind {
            NodeKind::Assumption | NodeKind::Context | NodeKind::Justification => GsnEdge::in_context_of(&parent, &id),
            _ => GsnEdge::supported_by(&parent, &id),
        });
    }
    for node in nodes.iter_mut() {
        let supported = edges.iter().any(|e| e.from == node.id && e.kind == safecase::EdgeKind::SupportedBy);
        if matches!(node.kind, NodeKind::Goal | NodeKind::Strategy) && !supported {
            node.undeveloped = true;
        }
    }
    let tree = GsnTree::build(nodes, edges, NodeId::new("G0").unwrap()).unwrap();

    let mut env = ParameterEnv::new();
    let params: Vec<String> = (0..rng.gen_range(1..6)).map(|i| format!("k{i}")).collect();
    for p in &params {
        env.insert(p.clone(), rng.gen_range(-100.0..100.0), *["m", "s", "m/s", ""].choose(rng).unwrap()).unwrap();
    }

    let mut artifacts = BTreeMap::new();
    let report = format!("tool: gen\nmetrics:\n  m0: {}\n  m1: {}\n", rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    artifacts.insert("rep".to_string(), s.put_artifact("artifacts/rep.yaml", ArtifactKind::Report, report.as_bytes()).unwrap());
    let vals: Vec<String> = (0..rng.gen_range(1..6)).map(|_| format!("{}", rng.gen_range(-5..5))).collect();
    let csv: String = std::iter::once("t,x\n".to_string())
        .chain(vals.iter().enumerate().map(|(k, v)| format!("{},{v}\n", k as f64 * 0.5)))
        .collect();
    artifacts.insert("tr".to_string(), s.put_artifact("artifacts/tr.csv", ArtifactKind::Trace, csv.as_bytes()).unwrap());

    let mut bindings = BTreeMap::new();
    for leaf in tree.leaves() {
        let p = params.choose(rng).unwrap();
        let b = match rng.gen_range(0..5) {
            0 => continue,
            1 => EvidenceBinding::metric(&format!("m{}", rng.gen_range(0..2)), Comparator::Le, rng.gen_range(0.0..1.0), "rep"),
            2 => EvidenceBinding::manual("safety_engineer"),
            3 => EvidenceBinding::formula(format!("forall t in trace: x(t) < {p}"), Some("tr")),
            _ => EvidenceBinding::formula(format!("{p} * 2 >= {}", rng.gen_range(-3.0..3.0)), None),
        };
        let b = match rng.gen_range(0..4) {
            0 => b.with_remediation(RemediationAction::CollectData, "collect"),
            1 => b.with_remediation(RemediationAction::RerunTool, ""),
            _ => b,
        };
        bindings.insert(leaf, b);
    }
    let allowed_tags = rng.gen_bool(0.3).then(|| TAG_POOL.iter().map(|t| Tag::new(t).unwrap()).collect());
    let metadata = CaseMetadata {
        name: format!("generated-{}", rng.gen::<u32>()),
        version: format!("{}.{}", rng.gen_range(0..5), rng.gen_range(0..10)),
        description: if rng.gen() { String::new() } else { "multi\nline\ndescription".into() },
        allowed_tags,
    };
    let case = Case::new(metadata, tree, env, bindings, artifacts).unwrap();
    Generated { dir, case }
}

fn flip_first_hex(d: &str) -> String {
    let mut chars: Vec<char> = d.chars().collect();
    let i = chars.iter().position(|c| c.is_ascii_hexdigit()).unwrap();
    chars[i] = if chars[i] == '0' { '1' } else { '0' };
    chars.into_iter().collect()
}

/// Copies of `c` that each differ in one field.
fn mutations(c: &Case) -> Vec<(String, Case)> {
    let mut out = Vec::new();
    let mut push = |what: String, m: Case| out.push((what, m));
    let mut m = c.clone();
    m.metadata.name.push('x');
    push("metadata.name".into(), m);
    let mut m = c.clone();
    m.metadata.version.push('1');
    push("metadata.version".into(), m);
    let mut m = c.clone();
    m.metadata.description.push(' ');
    push("metadata.description".into(), m);
    for (name, p) in c.env.iter() {
        let mut m = c.clone();
        m.env.set_value(name, p.value + 1e-9).unwrap();
        push(format!("env.{name}.value"), m);
        let mut m = c.clone();
        m.env.insert(name.clone(), p.value, format!("{}x", p.unit)).unwrap();
        push(format!("env.{name}.unit"), m);
    }
    let doc = c.to_document();
    for i in 0..doc.nodes.len() {
        let mut d = doc.clone();
        d.nodes[i].text.push('.');
        push(format!("node {} text", d.nodes[i].id), Case::from_document(d).unwrap());
        let mut d = doc.clone();
        if let Some(t) = d.nodes[i].tags.iter().next().cloned() {
            d.nodes[i].tags.remove(&t);
            push(format!("node {} tag", d.nodes[i].id), Case::from_document(d).unwrap());
        }
    }
    for (leaf, b) in &c.bindings {
        let mut m = c.clone();
        let changed = match &b.remediation {
            None => b.clone().with_remediation(RemediationAction::Retest, "retest"),
            Some(_) => EvidenceBinding { remediation: None, ..b.clone() },
        };
        m.bindings.insert(leaf.clone(), changed);
        push(format!("binding {leaf} remediation"), m);
    }
    for (name, r) in &c.artifacts {
        let mut m = c.clone();
        let mut r = r.clone();
        r.digest = flip_first_hex(&r.digest);
        m.artifacts.insert(name.clone(), r);
        push(format!("artifact {name} digest"), m);
    }
    out
}

fn persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let at: chrono::DateTime<chrono::Utc> = "2026-06-01T00:00:00Z".parse().unwrap();
    let mut total_mutations = 0;
    for i in 0..100 {
        let g = generate_case(&mut rng);
        store::save_case(&g.case, g.dir.path()).map_err(|e| format!("case {i}: save: {e}"))?;
        let back = store::load_case(g.dir.path()).map_err(|e| format!("case {i}: load: {e}"))?;
        ensure!(back == g.case, "case {i} did not round-trip");
        // second save is byte-stable
        let first = std::fs::read(g.dir.path().join("case.yaml")).unwrap();
        store::save_case(&back, g.dir.path()).unwrap();
        ensure!(first == std::fs::read(g.dir.path().join("case.yaml")).unwrap(), "case {i}: re-save changed bytes");

        let id = snapshot(&g.case, "a", at).id;
        ensure!(snapshot(&back, "b", at + chrono::Duration::days(1)).id == id, "case {i}: snapshot id not deterministic");
        let mut seen = BTreeMap::from([(id, "original".to_string())]);
        for (what, m) in mutations(&g.case) {
            let mid = snapshot(&m, "a", at).id;
            if let Some(prev) = seen.insert(mid, what.clone()) {
                return Err(format!("case {i}: mutation {what} collides with {prev}"));
            }
            total_mutations += 1;
        }
    }
    Ok(format!("100 cases round-trip; {total_mutations} single-field mutations all get distinct ids"))
}
