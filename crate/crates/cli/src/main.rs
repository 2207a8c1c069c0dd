//! kwf: command-line front end for the knowware lifecycle.
//!
//! One subcommand per stage: pump a document, ingest elements into magma,
//! crystallize, package, verify/inspect, view, query, bind a mixware
//! program, serve a warehouse, register service parties.
//!
//! Exit codes: 0 success, 1 usage, 2 domain error. Results go to stdout in
//! line-oriented form; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kwf_core::binder::{bind, parse_plan_file, parse_program_file, BindMode};
use kwf_core::crystal::{
    crystallize, load_elements, query_define, query_name, Crystal, Magma, Requirement,
    SubjectFilter,
};
use kwf_core::keystructure::parse_key_structure_file;
use kwf_core::knowware::{package, verify, KnowwarePackage, PackageMeta, Verdict};
use kwf_core::middleware::{apply_view, parse_view_file, KnowledgeSource, ViewSpec};
use kwf_core::pnlu::render_elements;
use kwf_core::pump::{bold_runs, pump, PumpSpec};
use kwf_core::server::{serve, Request, Server};

#[derive(Parser)]
#[command(name = "kwf", version, about = "knowware lifecycle toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan tagged regions of a document and extract knowledge elements
    Pump(PumpArgs),
    /// Append extracted elements to a magma store
    Ingest(IngestArgs),
    /// Form a crystal from a magma store under a requirement
    Crystallize(CrystallizeArgs),
    /// Package a crystal as a knowware container
    Package(PackageArgs),
    /// Verify a knowware container against its manifest
    Verify(VerifyArgs),
    /// Print the knowledge interface of a container
    Inspect(InspectArgs),
    /// Apply a filtering view to a crystal or container
    View(ViewArgs),
    /// Query a crystal (define <concept> | name <condition> <father>)
    Query(QueryArgs),
    /// Bind a mixware program against a plan and dispatch methods
    Bind(BindArgs),
    /// Serve a warehouse over TCP
    Serve(ServeArgs),
    /// Register a provider, requester, middleware, protocol or source
    Register(RegisterArgs),
}

#[derive(Args)]
struct PumpArgs {
    /// Document to scan
    #[arg(long)]
    doc: PathBuf,
    /// Region tag name (uppercase-normalized)
    #[arg(long)]
    tag: String,
    /// Key-structure file; defaults to `default_ks` from the config
    #[arg(long)]
    ks: Option<PathBuf>,
    /// Output directory for marked.txt, elements.kel, hierarchy.txt
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Magma log file (created when absent)
    #[arg(long)]
    magma: PathBuf,
    /// Element-line file to append
    #[arg(long)]
    elements: PathBuf,
    /// Reliability rank stamped on the ingested elements
    #[arg(long, default_value_t = 0)]
    reliability: i32,
    /// Logical timestamp stamped on the ingested elements
    #[arg(long, default_value_t = 0)]
    timestamp: u64,
}

#[derive(Args)]
struct CrystallizeArgs {
    #[arg(long)]
    magma: PathBuf,
    #[arg(long)]
    domain: String,
    /// Comma-separated pragmatics tags (full tags or bases)
    #[arg(long)]
    pragmatics: Option<String>,
    /// Subject must equal this text
    #[arg(long)]
    subject_exact: Vec<String>,
    /// Subject must start with this text
    #[arg(long)]
    subject_prefix: Vec<String>,
    /// Element must come from this document id
    #[arg(long)]
    source: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PackageArgs {
    #[arg(long)]
    crystal: PathBuf,
    #[arg(long)]
    name: String,
    #[arg(long)]
    version: String,
    #[arg(long, default_value = "")]
    license: String,
    #[arg(long)]
    application: Vec<String>,
    #[arg(long)]
    middleware: Vec<String>,
    #[arg(long)]
    auth: Option<String>,
    #[arg(long, default_value = "")]
    functions: String,
    #[arg(long = "use", default_value = "")]
    use_doc: String,
    #[arg(long, default_value = "")]
    maintenance: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    package: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// Print a container's knowledge interface
    #[arg(long, conflicts_with = "crystal")]
    package: Option<PathBuf>,
    /// Print a crystal's content summary
    #[arg(long)]
    crystal: Option<PathBuf>,
}

#[derive(Args)]
struct ViewArgs {
    #[arg(long, conflicts_with = "package")]
    crystal: Option<PathBuf>,
    #[arg(long)]
    package: Option<PathBuf>,
    /// View-spec file (`view prag ...` lines); alternative to the flags
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    pragmatics: Option<String>,
    /// Comma-separated roles to keep
    #[arg(long)]
    roles: Option<String>,
    #[arg(long)]
    subject_exact: Option<String>,
    #[arg(long)]
    subject_prefix: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// `define <concept>` or `name <condition> <father>`
    #[arg(required = true, num_args = 1..)]
    terms: Vec<String>,
    #[arg(long)]
    crystal: PathBuf,
}

#[derive(Args)]
struct BindArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Dispatch `<object>.<method>` after binding; repeatable
    #[arg(long)]
    call: Vec<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: u16,
    /// Warehouse root; defaults to $KWF_DATA_DIR, then ./kwf-data
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct RegisterArgs {
    /// provider | requester | middleware | protocol | source
    #[arg(long)]
    kind: String,
    #[arg(long)]
    id: String,
    /// Free-text metadata (provider, requester)
    #[arg(long, default_value = "")]
    meta: String,
    /// Middleware category (extraction, transformation, ...)
    #[arg(long)]
    category: Option<String>,
    /// Protocol source format
    #[arg(long)]
    from: Option<String>,
    /// Protocol target format
    #[arg(long)]
    to: Option<String>,
    /// Source locator
    #[arg(long)]
    locator: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("kwf: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Pump(args) => cmd_pump(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Crystallize(args) => cmd_crystallize(args),
        Command::Package(args) => cmd_package(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Inspect(args) => cmd_inspect(args),
        Command::View(args) => cmd_view(args),
        Command::Query(args) => cmd_query(args),
        Command::Bind(args) => cmd_bind(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Register(args) => cmd_register(args),
    }
}

fn data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("KWF_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("kwf-data"))
}

/// Optional config at `$KWF_DATA_DIR/config`: `key = value` lines.
fn config() -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let path = data_dir(None).join("config");
    let Ok(text) = fs::read_to_string(path) else {
        return out;
    };
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    out
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "doc".to_string())
}

fn load_ks(path: &Path) -> Result<kwf_core::KeyStructure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading key structure {}", path.display()))?;
    parse_key_structure_file(&file_stem(path), &text)
        .map_err(|e| anyhow!("parsing {}: {e}", path.display()))
}

fn cmd_pump(args: PumpArgs) -> Result<i32> {
    let ks_path = match args.ks {
        Some(p) => p,
        None => config()
            .get("default_ks")
            .map(PathBuf::from)
            .ok_or_else(|| anyhow!("--ks not given and no default_ks configured"))?,
    };
    let ks = load_ks(&ks_path)?;
    let doc = fs::read_to_string(&args.doc)
        .with_context(|| format!("reading {}", args.doc.display()))?;
    let spec = PumpSpec::new(&args.tag, ks).map_err(|e| anyhow!("{e}"))?;
    let result = pump(&doc, &spec, &file_stem(&args.doc)).map_err(|e| anyhow!("{e}"))?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("marked.txt"), &result.marked_text)?;
    fs::write(args.out.join("elements.kel"), render_elements(&result.elements))?;
    fs::write(args.out.join("hierarchy.txt"), result.hierarchy.render())?;
    println!(
        "pump elements={} groups={} runs={} discarded={}",
        result.elements.len(),
        result.hierarchy.groups.len(),
        bold_runs(&result.marked_text).len(),
        result.discarded_spans.len()
    );
    Ok(0)
}

fn cmd_ingest(args: IngestArgs) -> Result<i32> {
    let mut magma = if args.magma.exists() {
        Magma::load(&args.magma).map_err(|e| anyhow!("{e}"))?
    } else {
        Magma::new()
    };
    let mut elements = load_elements(&args.elements).map_err(|e| anyhow!("{e}"))?;
    for e in &mut elements {
        e.reliability = args.reliability;
        e.timestamp = args.timestamp;
    }
    let stats = magma.ingest(elements).map_err(|e| anyhow!("{e}"))?;
    magma.save(&args.magma).map_err(|e| anyhow!("{e}"))?;
    println!("ingest added={} merged={} total={}", stats.added, stats.merged, magma.len());
    Ok(0)
}

fn cmd_crystallize(args: CrystallizeArgs) -> Result<i32> {
    let magma = Magma::load(&args.magma).map_err(|e| anyhow!("{e}"))?;
    let pragmatics: Vec<String> = args
        .pragmatics
        .map(|p| p.split(',').map(|t| t.trim().to_string()).collect())
        .unwrap_or_default();
    let mut subjects: Vec<SubjectFilter> =
        args.subject_exact.into_iter().map(SubjectFilter::Exact).collect();
    subjects.extend(args.subject_prefix.into_iter().map(SubjectFilter::Prefix));
    let requirement =
        Requirement::new(pragmatics, subjects, args.source).map_err(|e| anyhow!("{e}"))?;
    let crystal =
        crystallize(&magma, requirement, &args.domain).map_err(|e| anyhow!("{e}"))?;
    crystal.save(&args.out).map_err(|e| anyhow!("{e}"))?;
    println!(
        "crystal domain={} version={} elements={}",
        crystal.domain,
        crystal.version,
        crystal.elements.len()
    );
    Ok(0)
}

fn cmd_package(args: PackageArgs) -> Result<i32> {
    let crystal = Crystal::load(&args.crystal).map_err(|e| anyhow!("{e}"))?;
    let meta = PackageMeta {
        name: args.name,
        version: args.version,
        applications: args.application,
        license: args.license,
        middleware_compat: args.middleware,
        authentication: args.auth,
        docs_functions: args.functions,
        docs_use: args.use_doc,
        docs_maintenance: args.maintenance,
    };
    let pkg = package(&crystal, meta).map_err(|e| anyhow!("{e}"))?;
    pkg.save(&args.out).map_err(|e| anyhow!("{e}"))?;
    println!(
        "package name={} version={} bytes={} watermark={}",
        pkg.manifest().name,
        pkg.manifest().version,
        pkg.to_bytes().len(),
        pkg.manifest().watermark
    );
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let pkg = KnowwarePackage::load(&args.package).map_err(|e| anyhow!("{e}"))?;
    match verify(&pkg) {
        Verdict::Pass => {
            println!("pass");
            Ok(0)
        }
        Verdict::Fail(reason) => {
            println!("fail {reason}");
            Ok(2)
        }
    }
}

fn cmd_inspect(args: InspectArgs) -> Result<i32> {
    match (&args.package, &args.crystal) {
        (Some(path), None) => {
            let pkg = KnowwarePackage::load(path).map_err(|e| anyhow!("{e}"))?;
            print!("{}", pkg.manifest().render());
            Ok(0)
        }
        (None, Some(path)) => {
            let crystal = Crystal::load(path).map_err(|e| anyhow!("{e}"))?;
            print!("{}", kwf_core::summarize(&crystal).render());
            Ok(0)
        }
        _ => bail!("give exactly one of --package or --crystal"),
    }
}

fn cmd_view(args: ViewArgs) -> Result<i32> {
    let spec = if let Some(path) = &args.spec {
        let text = fs::read_to_string(path)?;
        parse_view_file(&text).map_err(|e| anyhow!("{e}"))?
    } else {
        let pragmatics: Vec<String> = args
            .pragmatics
            .as_deref()
            .map(|p| p.split(',').map(|t| t.trim().to_string()).collect())
            .unwrap_or_default();
        let roles = args
            .roles
            .as_deref()
            .map(|r| r.split(',').map(|x| x.trim().to_string()).collect());
        let subject = match (&args.subject_exact, &args.subject_prefix) {
            (Some(s), _) => Some(SubjectFilter::Exact(s.clone())),
            (None, Some(s)) => Some(SubjectFilter::Prefix(s.clone())),
            (None, None) => None,
        };
        ViewSpec::new(pragmatics, roles, subject).map_err(|e| anyhow!("{e}"))?
    };
    let filtered = match (&args.crystal, &args.package) {
        (Some(path), None) => {
            let crystal = Crystal::load(path).map_err(|e| anyhow!("{e}"))?;
            apply_view(KnowledgeSource::Crystal(&crystal), &spec).map_err(|e| anyhow!("{e}"))?
        }
        (None, Some(path)) => {
            let pkg = KnowwarePackage::load(path).map_err(|e| anyhow!("{e}"))?;
            apply_view(KnowledgeSource::Package(&pkg), &spec).map_err(|e| anyhow!("{e}"))?
        }
        _ => bail!("give exactly one of --crystal or --package"),
    };
    filtered.save(&args.out).map_err(|e| anyhow!("{e}"))?;
    println!("view elements={}", filtered.elements.len());
    Ok(0)
}

fn cmd_query(args: QueryArgs) -> Result<i32> {
    let crystal = Crystal::load(&args.crystal).map_err(|e| anyhow!("{e}"))?;
    let terms: Vec<&str> = args.terms.iter().map(|s| s.as_str()).collect();
    match terms.as_slice() {
        ["define", concept] => {
            for e in query_define(&crystal, concept) {
                println!("{}", e.render_line());
            }
            Ok(0)
        }
        ["name", condition, father] => {
            for concept in query_name(&crystal, condition, father) {
                println!("{concept}");
            }
            Ok(0)
        }
        _ => bail!("usage: query define <concept> | query name <condition> <father>"),
    }
}

fn cmd_bind(args: BindArgs) -> Result<i32> {
    let program = parse_program_file(&fs::read_to_string(&args.program)?)
        .map_err(|e| anyhow!("{}: {e}", args.program.display()))?;
    let plan = parse_plan_file(&fs::read_to_string(&args.plan)?)
        .map_err(|e| anyhow!("{}: {e}", args.plan.display()))?;
    let bound = bind(&program, &plan).map_err(|e| anyhow!("{e}"))?;
    let mode = match plan.mode {
        BindMode::Static => "static",
        BindMode::Dynamic => "dynamic",
    };
    let objects = bound.object_ids();
    println!(
        "bound mode={} objects={} renames={}",
        mode,
        objects.len(),
        bound.rename_log().len()
    );
    for call in &args.call {
        let (object, method) = call
            .split_once('.')
            .ok_or_else(|| anyhow!("--call wants <object>.<method>, got {call:?}"))?;
        let value = bound.dispatch(object, method).map_err(|e| anyhow!("{e}"))?;
        println!("{object}.{method} = {value}");
    }
    Ok(0)
}

fn cmd_serve(args: ServeArgs) -> Result<i32> {
    let dir = data_dir(args.data);
    let server = Server::open(&dir).with_context(|| format!("opening {}", dir.display()))?;
    let listener = TcpListener::bind(("127.0.0.1", args.port))?;
    println!("serving 127.0.0.1:{} data={}", args.port, dir.display());
    serve(server, listener)?;
    Ok(0)
}

fn cmd_register(args: RegisterArgs) -> Result<i32> {
    let dir = data_dir(args.data);
    let mut server = Server::open(&dir).with_context(|| format!("opening {}", dir.display()))?;
    let quote = kwf_core::text::quote_span;
    let line = match args.kind.as_str() {
        "provider" => format!("REGISTER PROVIDER {} {}", args.id, quote(&args.meta)),
        "requester" => format!("REGISTER REQUESTER {} {}", args.id, quote(&args.meta)),
        "middleware" => {
            let category = args.category.ok_or_else(|| anyhow!("--category required"))?;
            format!("REGISTER MIDDLEWARE {} {}", args.id, category)
        }
        "protocol" => {
            let from = args.from.ok_or_else(|| anyhow!("--from required"))?;
            let to = args.to.ok_or_else(|| anyhow!("--to required"))?;
            format!("REGISTER PROTOCOL {} {} {}", args.id, from, to)
        }
        "source" => {
            let locator = args.locator.ok_or_else(|| anyhow!("--locator required"))?;
            format!("REGISTER SOURCE {} {}", args.id, quote(&locator))
        }
        other => bail!("unknown kind {other:?}"),
    };
    let response = server.handle(&Request::line(&line));
    println!("{}", response.head);
    if response.is_ok() {
        Ok(0)
    } else {
        Ok(2)
    }
}
