//! `safecase` command line and HTTP service.
//!
//! Exit codes: 0 success, 1 the case (or a change against it) has a
//! problem, 2 usage or input error.

pub mod server;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Parser, Subcommand};

use safecase::change::{self, parse_change_document, ChangeError};
use safecase::formula::ParameterEnv;
use safecase::kinematics::{self, ScenarioSpec};
use safecase::store::{self, read_yaml, QueryMode, StoreError};
use safecase::{CaseStore, ImpactReport, NodeKind, Stage, TagQuery, Validity};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDING: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "safecase", version, about = "Continuous assurance for ML safety cases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check structure, bindings and artifact digests.
    Validate {
        #[arg(env = "SAFECASE_DIR")]
        case: PathBuf,
    },
    /// Evaluate every leaf and print the propagated status.
    Status {
        #[arg(env = "SAFECASE_DIR")]
        case: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// List nodes carrying the given tags.
    Query {
        #[arg(env = "SAFECASE_DIR")]
        case: PathBuf,
        /// Comma-separated tags.
        #[arg(long, value_delimiter = ',', required = true)]
        tags: Vec<String>,
        /// Require every tag instead of any.
        #[arg(long)]
        all: bool,
    },
    /// What-if impact of a change file; the report is written beside the case.
    Impact {
        case: PathBuf,
        change: PathBuf,
    },
    /// Apply a stage-1 change using its impact report.
    Apply {
        case: PathBuf,
        change: PathBuf,
        report: PathBuf,
    },
    /// Freeze the current case.
    Snapshot {
        #[arg(env = "SAFECASE_DIR")]
        case: PathBuf,
        #[arg(long)]
        label: String,
    },
    /// Compare two snapshots (ids, unique prefixes, or `current`).
    Diff {
        case: PathBuf,
        a: String,
        b: String,
    },
    /// Run a braking scenario and write the trace as CSV.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Resolve linked parameters from this case.
        #[arg(long)]
        case: Option<PathBuf>,
        /// Parameter overrides, name=value.
        #[arg(long = "set", value_parser = parse_assignment)]
        set: Vec<(String, f64)>,
    },
    /// Serve the HTTP/JSON API for one case directory.
    Serve {
        #[arg(env = "SAFECASE_DIR")]
        case: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Failure of a command, carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn finding(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FINDING,
            message: message.into(),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::MalformedCase(_)
            | StoreError::Structure(_)
            | StoreError::IntegrityError { .. }
            | StoreError::SchemaVersionMismatch { .. } => Failure::finding(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<ChangeError> for Failure {
    fn from(e: ChangeError) -> Self {
        match e {
            ChangeError::Store(s) => s.into(),
            ChangeError::StageNotOne(_)
            | ChangeError::StaleReport { .. }
            | ChangeError::ChangeClosed(_)
            | ChangeError::ReportMismatch { .. } => Failure::finding(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Run with process-style arguments (first element is the program name).
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Validate { case } => validate(&case, out),
        Command::Status { case, json } => status(&case, json, out),
        Command::Query { case, tags, all } => query(&case, &tags, all, out),
        Command::Impact { case, change } => impact(&case, &change, out, err),
        Command::Apply { case, change, report } => apply(&case, &change, &report, out),
        Command::Snapshot { case, label } => {
            let s = CaseStore::open(&case);
            let c = s.load_case()?;
            let snap = store::snapshot(&c, &label, Utc::now());
            s.save_snapshot(&snap)?;
            w(out, format_args!("{}\n", snap.id))?;
            Ok(EXIT_OK)
        }
        Command::Diff { case, a, b } => diff(&case, &a, &b, out),
        Command::Simulate { scenario, output, case, set } => simulate(&scenario, &output, case.as_deref(), &set, out),
        Command::Serve { case, port, host } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::usage(e.to_string()))?;
            rt.block_on(server::serve(CaseStore::open(case), &host, port))
                .map_err(|e| Failure::usage(e.to_string()))?;
            Ok(EXIT_OK)
        }
    }
}

fn w(out: &mut dyn Write, args: std::fmt::Arguments<'_>) -> Result<(), Failure> {
    out.write_fmt(args).map_err(|e| Failure::usage(e.to_string()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn validate(dir: &Path, out: &mut dyn Write) -> CmdResult {
    let s = CaseStore::open(dir);
    let c = s.load_case()?;
    s.load_artifacts(&c)?;
    s.load_attestations()?;
    w(
        out,
        format_args!(
            "ok: {} nodes, {} leaves, {} bindings, {} artifacts\n",
            c.tree.len(),
            c.tree.leaves().len(),
            c.bindings.len(),
            c.artifacts.len()
        ),
    )?;
    let unbound: Vec<String> = c.tree.leaves().into_iter().filter(|l| !c.bindings.contains_key(l)).map(|l| l.to_string()).collect();
    if !unbound.is_empty() {
        w(out, format_args!("warning: leaves without evidence: {}\n", unbound.join(", ")))?;
    }
    Ok(EXIT_OK)
}

fn status(dir: &Path, json: bool, out: &mut dyn Write) -> CmdResult {
    let s = CaseStore::open(dir);
    let c = s.load_case()?;
    let arts = s.load_artifacts(&c)?;
    let att = s.load_attestations()?;
    let (leaves, map) = change::assess(&c, &arts, &att, s.as_of()?);
    if json {
        let v = serde_json::json!({ "evidence": leaves, "status_map": map });
        w(out, format_args!("{}\n", serde_json::to_string_pretty(&v).expect("serializes")))?;
    } else {
        w(out, format_args!("{:<8} {:<14} {:<8} {}\n", "NODE", "KIND", "STATUS", "REASON"))?;
        for n in c.tree.nodes() {
            let st = map.get(&n.id).map(|v| format!("{v:?}")).unwrap_or_else(|| "-".into());
            let reason = leaves.get(&n.id).map(|e| e.reason.as_str()).unwrap_or("");
            w(out, format_args!("{:<8} {:<14} {:<8} {}\n", n.id.as_str(), format!("{:?}", n.kind), st, reason))?;
        }
        w(out, format_args!("root {}: {:?}\n", c.tree.root(), map[c.tree.root()]))?;
    }
    Ok(if map.values().any(|v| *v == Validity::Invalid) { EXIT_FINDING } else { EXIT_OK })
}

fn query(dir: &Path, tags: &[String], all: bool, out: &mut dyn Write) -> CmdResult {
    let c = store::load_case(dir)?;
    let mode = if all { QueryMode::All } else { QueryMode::Any };
    let q = TagQuery::new(mode, tags.iter().map(String::as_str))?;
    for id in store::query_tags(&c, &q) {
        let n = c.tree.node(&id).expect("query returns tree nodes");
        w(out, format_args!("{}\t{}\n", id, kind_label(n.kind)))?;
    }
    Ok(EXIT_OK)
}

fn kind_label(k: NodeKind) -> &'static str {
    match k {
        NodeKind::Goal => "goal",
        NodeKind::Strategy => "strategy",
        NodeKind::Solution => "solution",
        NodeKind::Assumption => "assumption",
        NodeKind::Context => "context",
        NodeKind::Justification => "justification",
    }
}

fn impact(dir: &Path, change_file: &Path, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let s = CaseStore::open(dir);
    let cr = parse_change_document(&read_text(change_file)?, Utc::now())?;
    let report = change::impact_in_store(&s, &cr)?;
    w(out, format_args!("{}", serde_yaml::to_string(&report).expect("report serializes")))?;
    w(err, format_args!("report written to {}\n", dir.join(change::report_path(&cr.id)).display()))?;
    Ok(if report.stage == Stage::ParameterUpdate { EXIT_OK } else { EXIT_FINDING })
}

fn apply(dir: &Path, change_file: &Path, report_file: &Path, out: &mut dyn Write) -> CmdResult {
    let s = CaseStore::open(dir);
    let cr = parse_change_document(&read_text(change_file)?, Utc::now())?;
    // an earlier apply may have closed it
    let cr = match change::load_change(&s, &cr.id) {
        Ok(stored) => stored,
        Err(_) => cr,
    };
    let report: ImpactReport = read_yaml(report_file)?;
    let applied = change::apply_in_store(&s, &cr, &report, Utc::now())?;
    w(
        out,
        format_args!(
            "applied {}; previous case kept as snapshot {}\nroot {}: {:?}\n",
            applied.change.id,
            applied.snapshot.id,
            applied.case.tree.root(),
            applied.status_map[applied.case.tree.root()]
        ),
    )?;
    Ok(EXIT_OK)
}

fn diff(dir: &Path, a: &str, b: &str, out: &mut dyn Write) -> CmdResult {
    let s = CaseStore::open(dir);
    let pick = |id: &str| -> Result<safecase::store::Case, Failure> {
        if id == "current" {
            Ok(s.load_case()?)
        } else {
            Ok(s.load_snapshot(id)?.case)
        }
    };
    let d = store::diff_cases(&pick(a)?, &pick(b)?);
    w(out, format_args!("{}", serde_yaml::to_string(&d).expect("diff serializes")))?;
    Ok(EXIT_OK)
}

fn simulate(scenario: &Path, output: &Path, case: Option<&Path>, set: &[(String, f64)], out: &mut dyn Write) -> CmdResult {
    let spec: ScenarioSpec = serde_yaml::from_str(&read_text(scenario)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", scenario.display())))?;
    let mut env = match case {
        Some(dir) => store::load_case(dir)?.env,
        None => ParameterEnv::new(),
    };
    for (k, v) in set {
        env.insert(k.clone(), *v, "").map_err(|e| Failure::usage(e.to_string()))?;
    }
    let s = spec.resolve(&env).map_err(|e| Failure::usage(e.to_string()))?;
    let trace = kinematics::simulate_fp_braking(&s).map_err(|e| Failure::usage(e.to_string()))?;
    fs::write(output, trace.to_csv()).map_err(|e| Failure::usage(format!("{}: {e}", output.display())))?;
    let gap = trace.num("d_agv_rear").expect("simulation emits the gap");
    let min = gap.iter().cloned().fold(f64::INFINITY, f64::min);
    w(
        out,
        format_args!(
            "{} samples written to {}; minimum gap {min:.3} m{}\n",
            trace.len(),
            output.display(),
            if min <= 0.0 { " (collision)" } else { "" }
        ),
    )?;
    Ok(if min <= 0.0 { EXIT_FINDING } else { EXIT_OK })
}
