//! The knowledge server: a four-layer warehouse (ore, magma, crystal,
//! knowware), promotion between layers, provider/requester/middleware/
//! protocol/source registration, and a line-oriented request protocol.
//!
//! State changes flow through an append-only journal; replaying the journal
//! reconstructs the warehouse byte-for-byte. Requests are UTF-8 lines;
//! uploads carry a length announced on the request line, downloads a length
//! announced on the `OK` line.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use crate::crystal::{crystallize, Crystal, Magma, Requirement, SubjectFilter};
use crate::crystal::{query_define, query_name};
use crate::keystructure::{parse_key_structure_file, KeyStructure};
use crate::knowware::{self, package, PackageMeta, Verdict};
use crate::pump::{pump, PumpSpec};
use crate::text::{quote_span, tokenize};

/// Table-3 middleware classes accepted by `REGISTER MIDDLEWARE`.
pub const MIDDLEWARE_CATEGORIES: [&str; 7] = [
    "extraction",
    "transformation",
    "crystallization",
    "production",
    "operating",
    "combination",
    "service",
];

/// A stored knowware entry: local container bytes, or a locator pointing at
/// an external body (exempt from verification).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KnowwareEntry {
    Local(Vec<u8>),
    External(String),
}

/// The four fabrication layers plus registered external sources.
#[derive(Debug, Default)]
pub struct Warehouse {
    pub ore: BTreeMap<String, String>,
    pub magma: Magma,
    pub crystals: BTreeMap<(String, u64), Crystal>,
    pub knowware: BTreeMap<(String, String), KnowwareEntry>,
    pub sources: BTreeMap<String, String>,
}

impl Warehouse {
    /// Which layer an id is currently known under, for layer diagnostics.
    fn layer_of(&self, id: &str) -> Option<&'static str> {
        if self.ore.contains_key(id) {
            return Some("ore");
        }
        if self.crystals.keys().any(|(d, _)| d == id) {
            return Some("crystal");
        }
        if self.knowware.keys().any(|(n, _)| n == id) {
            return Some("knowware");
        }
        None
    }
}

/// Provider/requester/middleware/protocol registrations.
#[derive(Debug, Default)]
pub struct Registry {
    pub providers: BTreeMap<String, String>,
    pub requesters: BTreeMap<String, String>,
    pub middleware: BTreeMap<String, String>,
    pub protocols: BTreeMap<String, (String, String)>,
}

/// One protocol request: the command line plus an optional binary body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub line: String,
    pub body: Option<Vec<u8>>,
}

impl Request {
    pub fn line(line: &str) -> Request {
        Request { line: line.to_string(), body: None }
    }

    pub fn with_body(line: &str, body: &[u8]) -> Request {
        Request { line: line.to_string(), body: Some(body.to_vec()) }
    }
}

/// One protocol response: status line, listing lines, optional binary body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub head: String,
    pub lines: Vec<String>,
    pub body: Option<Vec<u8>>,
}

impl Response {
    fn ok() -> Response {
        Response { head: "OK".to_string(), lines: Vec::new(), body: None }
    }

    fn ok_msg(msg: impl Into<String>) -> Response {
        Response { head: format!("OK {}", msg.into()), lines: Vec::new(), body: None }
    }

    fn listing(lines: Vec<String>) -> Response {
        Response { head: format!("OK {}", lines.len()), lines, body: None }
    }

    fn bytes(body: Vec<u8>) -> Response {
        Response { head: format!("OK {}", body.len()), lines: Vec::new(), body: Some(body) }
    }

    fn err(code: u16, msg: impl Into<String>) -> Response {
        Response { head: format!("ERR {code} {}", msg.into()), lines: Vec::new(), body: None }
    }

    pub fn is_ok(&self) -> bool {
        self.head.starts_with("OK")
    }

    /// Wire form: status line, listing lines, then the body followed by a
    /// newline when present.
    pub fn render(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(self.head.as_bytes());
        out.push(b'\n');
        for line in &self.lines {
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
        if let Some(body) = &self.body {
            out.extend_from_slice(body);
            out.push(b'\n');
        }
        out
    }
}

const JOURNAL_HEADER: &str = "#kwf-journal 1";

/// The knowledge server: warehouse, registry, key-structure store and the
/// journal that persists every accepted mutation.
pub struct Server {
    pub warehouse: Warehouse,
    pub registry: Registry,
    /// Key structures available to `PROMOTE MAGMA`, stored as source text
    /// plus parsed form.
    pub key_structures: BTreeMap<String, (String, KeyStructure)>,
    journal: Option<File>,
    seq: u64,
}

/// Commands that change state and therefore enter the journal.
pub fn is_mutation(line: &str) -> bool {
    let head = line.split_whitespace().next().unwrap_or("");
    matches!(head, "PUT" | "PROMOTE" | "REGISTER")
}

impl Server {
    /// A server without persistence, for tests and embedding.
    pub fn in_memory() -> Server {
        Server {
            warehouse: Warehouse::default(),
            registry: Registry::default(),
            key_structures: BTreeMap::new(),
            journal: None,
            seq: 0,
        }
    }

    /// Open (or create) a warehouse rooted at `data_dir`, replaying its
    /// journal.
    pub fn open(data_dir: &Path) -> io::Result<Server> {
        fs::create_dir_all(data_dir)?;
        let journal_path = Self::journal_path(data_dir);
        let mut server = Server::in_memory();
        if journal_path.exists() {
            for request in read_journal(&journal_path)? {
                let response = server.apply(&request);
                if !response.is_ok() {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("journal entry {:?} failed on replay: {}", request.line, response.head),
                    ));
                }
            }
        } else {
            fs::write(&journal_path, format!("{JOURNAL_HEADER}\n"))?;
        }
        server.journal = Some(OpenOptions::new().append(true).open(&journal_path)?);
        Ok(server)
    }

    pub fn journal_path(data_dir: &Path) -> PathBuf {
        data_dir.join("journal.kwf")
    }

    /// Handle one request: parse, apply, journal accepted mutations.
    pub fn handle(&mut self, request: &Request) -> Response {
        let response = self.apply(request);
        if response.is_ok() && is_mutation(&request.line) {
            if let Some(journal) = &mut self.journal {
                if let Err(e) = append_journal(journal, request) {
                    return Response::err(500, format!("journal write failed: {e}"));
                }
            }
        }
        response
    }

    /// Convenience for body-less commands.
    pub fn handle_line(&mut self, line: &str) -> Response {
        self.handle(&Request::line(line))
    }

    /// Read-only commands may be served under a shared lock.
    pub fn handle_readonly(&self, request: &Request) -> Option<Response> {
        if is_mutation(&request.line) {
            return None;
        }
        // read-only commands never touch &mut state; route through a shim
        Some(self.dispatch_readonly(request))
    }

    fn apply(&mut self, request: &Request) -> Response {
        let Some(tokens) = tokenize(&request.line) else {
            return Response::err(400, "unterminated quote");
        };
        let toks: Vec<&str> = tokens.iter().map(|s| s.as_str()).collect();
        match toks.split_first() {
            Some((&"LIST", rest)) => self.cmd_list(rest),
            Some((&"GET", rest)) => self.cmd_get(rest),
            Some((&"QUERY", rest)) => self.cmd_query(rest),
            Some((&"VERIFY", rest)) => self.cmd_verify(rest),
            Some((&"PUT", rest)) => {
                let body = request.body.as_deref();
                self.seq += 1;
                let r = self.cmd_put(rest, body);
                if !r.is_ok() {
                    self.seq -= 1;
                }
                r
            }
            Some((&"PROMOTE", rest)) => {
                self.seq += 1;
                let r = self.cmd_promote(rest);
                if !r.is_ok() {
                    self.seq -= 1;
                }
                r
            }
            Some((&"REGISTER", rest)) => {
                self.seq += 1;
                let r = self.cmd_register(rest);
                if !r.is_ok() {
                    self.seq -= 1;
                }
                r
            }
            Some((cmd, _)) => Response::err(400, format!("unknown command {cmd}")),
            None => Response::err(400, "empty request"),
        }
    }

    fn dispatch_readonly(&self, request: &Request) -> Response {
        let Some(tokens) = tokenize(&request.line) else {
            return Response::err(400, "unterminated quote");
        };
        let toks: Vec<&str> = tokens.iter().map(|s| s.as_str()).collect();
        match toks.split_first() {
            Some((&"LIST", rest)) => self.cmd_list(rest),
            Some((&"GET", rest)) => self.cmd_get(rest),
            Some((&"QUERY", rest)) => self.cmd_query(rest),
            Some((&"VERIFY", rest)) => self.cmd_verify(rest),
            Some((cmd, _)) => Response::err(400, format!("unknown command {cmd}")),
            None => Response::err(400, "empty request"),
        }
    }

    fn cmd_list(&self, args: &[&str]) -> Response {
        match args {
            ["ORE"] => Response::listing(self.warehouse.ore.keys().cloned().collect()),
            ["MAGMA"] => Response::listing(
                self.warehouse.magma.elements().map(|e| e.id.clone()).collect(),
            ),
            ["CRYSTALS"] => Response::listing(
                self.warehouse
                    .crystals
                    .iter()
                    .map(|((domain, version), c)| {
                        format!("{domain} {version} {}", c.elements.len())
                    })
                    .collect(),
            ),
            ["KNOWWARE"] => Response::listing(
                self.warehouse
                    .knowware
                    .iter()
                    .map(|((name, version), entry)| match entry {
                        KnowwareEntry::Local(bytes) => {
                            format!("{name} {version} local {}", bytes.len())
                        }
                        KnowwareEntry::External(uri) => {
                            format!("{name} {version} external {uri}")
                        }
                    })
                    .collect(),
            ),
            ["KS"] => Response::listing(self.key_structures.keys().cloned().collect()),
            ["SOURCES"] => Response::listing(
                self.warehouse
                    .sources
                    .iter()
                    .map(|(id, locator)| format!("{id} {}", quote_span(locator)))
                    .collect(),
            ),
            ["PROVIDERS"] => Response::listing(
                self.registry
                    .providers
                    .iter()
                    .map(|(id, meta)| format!("{id} {}", quote_span(meta)))
                    .collect(),
            ),
            ["REQUESTERS"] => Response::listing(
                self.registry
                    .requesters
                    .iter()
                    .map(|(id, meta)| format!("{id} {}", quote_span(meta)))
                    .collect(),
            ),
            ["MIDDLEWARE"] => Response::listing(
                self.registry
                    .middleware
                    .iter()
                    .map(|(id, category)| format!("{id} {category}"))
                    .collect(),
            ),
            ["PROTOCOLS"] => Response::listing(
                self.registry
                    .protocols
                    .iter()
                    .map(|(id, (from, to))| format!("{id} {from} {to}"))
                    .collect(),
            ),
            _ => Response::err(400, "usage: LIST ORE|MAGMA|CRYSTALS|KNOWWARE|KS|SOURCES|PROVIDERS|REQUESTERS|MIDDLEWARE|PROTOCOLS"),
        }
    }

    fn cmd_get(&self, args: &[&str]) -> Response {
        match args {
            ["ORE", id] => match self.warehouse.ore.get(*id) {
                Some(doc) => Response::bytes(doc.clone().into_bytes()),
                None => Response::err(404, format!("no ore {id}")),
            },
            ["KS", id] => match self.key_structures.get(*id) {
                Some((text, _)) => Response::bytes(text.clone().into_bytes()),
                None => Response::err(404, format!("no key structure {id}")),
            },
            ["CRYSTAL", domain, version] => {
                let Ok(version) = version.parse::<u64>() else {
                    return Response::err(400, "bad crystal version");
                };
                match self.warehouse.crystals.get(&(domain.to_string(), version)) {
                    Some(c) => Response::bytes(c.to_text().into_bytes()),
                    None => Response::err(404, format!("no crystal {domain} {version}")),
                }
            }
            ["KNOWWARE", name, version] => {
                match self.warehouse.knowware.get(&(name.to_string(), version.to_string())) {
                    Some(KnowwareEntry::Local(bytes)) => Response::bytes(bytes.clone()),
                    Some(KnowwareEntry::External(uri)) => {
                        Response::ok_msg(format!("external {uri}"))
                    }
                    None => Response::err(404, format!("no knowware {name} {version}")),
                }
            }
            _ => Response::err(400, "usage: GET ORE|KS|CRYSTAL|KNOWWARE ..."),
        }
    }

    fn cmd_verify(&self, args: &[&str]) -> Response {
        let [name, version] = args else {
            return Response::err(400, "usage: VERIFY <name> <version>");
        };
        match self.warehouse.knowware.get(&(name.to_string(), version.to_string())) {
            Some(KnowwareEntry::External(_)) => Response::ok_msg("external"),
            Some(KnowwareEntry::Local(bytes)) => match knowware::open(bytes) {
                Ok(pkg) => match knowware::verify(&pkg) {
                    Verdict::Pass => Response::ok_msg("pass"),
                    Verdict::Fail(reason) => Response::err(422, reason.to_string()),
                },
                Err(e) => Response::err(422, format!("container: {e}")),
            },
            None => Response::err(404, format!("no knowware {name} {version}")),
        }
    }

    fn cmd_query(&self, args: &[&str]) -> Response {
        let crystal = |domain: &str, version: &str| -> Result<&Crystal, Response> {
            let version: u64 = version
                .parse()
                .map_err(|_| Response::err(400, "bad crystal version"))?;
            self.warehouse
                .crystals
                .get(&(domain.to_string(), version))
                .ok_or_else(|| Response::err(404, format!("no crystal {domain} {version}")))
        };
        match args {
            ["DEFINE", domain, version, concept] => match crystal(domain, version) {
                Ok(c) => {
                    let hits = query_define(c, concept);
                    Response {
                        head: format!("OK {}", hits.len()),
                        lines: hits.iter().map(|e| e.render_line()).collect(),
                        body: None,
                    }
                }
                Err(r) => r,
            },
            ["NAME", domain, version, condition, father] => match crystal(domain, version) {
                Ok(c) => {
                    let names = query_name(c, condition, father);
                    Response {
                        head: format!("OK {}", names.len()),
                        lines: names,
                        body: None,
                    }
                }
                Err(r) => r,
            },
            _ => Response::err(400, "usage: QUERY DEFINE <domain> <ver> «concept» | QUERY NAME <domain> <ver> «condition» «father»"),
        }
    }

    fn cmd_put(&mut self, args: &[&str], body: Option<&[u8]>) -> Response {
        match args {
            ["ORE", id, len] => {
                let Some(body) = body_of(len, body) else {
                    return Response::err(400, "body length mismatch");
                };
                let Ok(text) = String::from_utf8(body.to_vec()) else {
                    return Response::err(400, "ore must be UTF-8");
                };
                if self.warehouse.ore.contains_key(*id) {
                    return Response::err(409, format!("duplicate ore {id}"));
                }
                self.warehouse.ore.insert(id.to_string(), text);
                Response::ok()
            }
            ["KS", id, len] => {
                let Some(body) = body_of(len, body) else {
                    return Response::err(400, "body length mismatch");
                };
                let Ok(text) = String::from_utf8(body.to_vec()) else {
                    return Response::err(400, "key structure must be UTF-8");
                };
                if self.key_structures.contains_key(*id) {
                    return Response::err(409, format!("duplicate key structure {id}"));
                }
                match parse_key_structure_file(id, &text) {
                    Ok(ks) => {
                        self.key_structures.insert(id.to_string(), (text, ks));
                        Response::ok()
                    }
                    Err(e) => Response::err(422, e.to_string()),
                }
            }
            ["KNOWWARE", name, version, locator] => {
                let Some(uri) = locator.strip_prefix("external:") else {
                    return Response::err(
                        409,
                        "knowware bodies enter through PROMOTE; only external:<uri> may be PUT",
                    );
                };
                let key = (name.to_string(), version.to_string());
                if self.warehouse.knowware.contains_key(&key) {
                    return Response::err(409, format!("duplicate knowware {name} {version}"));
                }
                self.warehouse
                    .knowware
                    .insert(key, KnowwareEntry::External(uri.to_string()));
                Response::ok()
            }
            _ => Response::err(400, "usage: PUT ORE|KS <id> <len> or PUT KNOWWARE <name> <version> external:<uri>"),
        }
    }

    fn cmd_promote(&mut self, args: &[&str]) -> Response {
        match args.split_first() {
            Some((&"MAGMA", [ore_id, tag, ks_id])) => {
                let Some(doc) = self.warehouse.ore.get(*ore_id) else {
                    if let Some(layer) = self.warehouse.layer_of(ore_id) {
                        if layer != "ore" {
                            return Response::err(409, format!("layer: {ore_id} is {layer}, not ore"));
                        }
                    }
                    return Response::err(404, format!("no ore {ore_id}"));
                };
                let Some((_, ks)) = self.key_structures.get(*ks_id) else {
                    return Response::err(404, format!("no key structure {ks_id}"));
                };
                let spec = match PumpSpec::new(tag, ks.clone()) {
                    Ok(s) => s,
                    Err(e) => return Response::err(422, e.to_string()),
                };
                let result = match pump(doc, &spec, ore_id) {
                    Ok(r) => r,
                    Err(e) => return Response::err(422, e.to_string()),
                };
                let stamp = self.seq;
                let elements = result
                    .elements
                    .into_iter()
                    .map(|mut e| {
                        e.timestamp = stamp;
                        e
                    })
                    .collect();
                match self.warehouse.magma.ingest(elements) {
                    Ok(stats) => Response::ok_msg(format!("{}", stats.added)),
                    Err(e) => Response::err(422, e.to_string()),
                }
            }
            Some((&"CRYSTAL", [domain, tags, filters @ ..])) => {
                let pragmatics: Vec<String> =
                    tags.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
                let mut subjects = Vec::new();
                let mut sources = Vec::new();
                for f in filters {
                    if let Some(v) = f.strip_prefix("subject=") {
                        match SubjectFilter::parse(&normalize_filter(v)) {
                            Some(s) => subjects.push(s),
                            None => return Response::err(400, format!("bad subject filter {f}")),
                        }
                    } else if let Some(v) = f.strip_prefix("source=") {
                        sources.push(v.to_string());
                    } else {
                        return Response::err(400, format!("unknown filter {f}"));
                    }
                }
                let requirement = match Requirement::new(pragmatics, subjects, sources) {
                    Ok(r) => r,
                    Err(e) => return Response::err(422, e.to_string()),
                };
                let mut crystal = match crystallize(&self.warehouse.magma, requirement, domain) {
                    Ok(c) => c,
                    Err(e) => return Response::err(422, e.to_string()),
                };
                let version = self
                    .warehouse
                    .crystals
                    .keys()
                    .filter(|(d, _)| d == domain)
                    .map(|(_, v)| *v)
                    .max()
                    .unwrap_or(0)
                    + 1;
                crystal.version = version;
                let count = crystal.elements.len();
                self.warehouse.crystals.insert((domain.to_string(), version), crystal);
                Response::ok_msg(format!("{count} {version}"))
            }
            Some((&"KNOWWARE", [domain, cver, name, kwver, meta @ ..])) => {
                let Ok(cver) = cver.parse::<u64>() else {
                    return Response::err(400, "bad crystal version");
                };
                let Some(crystal) = self.warehouse.crystals.get(&(domain.to_string(), cver))
                else {
                    if let Some(layer) = self.warehouse.layer_of(domain) {
                        if layer != "crystal" {
                            return Response::err(
                                409,
                                format!("layer: {domain} is {layer}, not crystal"),
                            );
                        }
                    }
                    return Response::err(404, format!("no crystal {domain} {cver}"));
                };
                let key = (name.to_string(), kwver.to_string());
                if self.warehouse.knowware.contains_key(&key) {
                    return Response::err(409, format!("duplicate knowware {name} {kwver}"));
                }
                let mut pm = PackageMeta {
                    name: name.to_string(),
                    version: kwver.to_string(),
                    ..PackageMeta::default()
                };
                for m in meta {
                    let Some((k, v)) = m.split_once('=') else {
                        return Response::err(400, format!("bad meta {m}"));
                    };
                    match k {
                        "license" => pm.license = v.to_string(),
                        "auth" => pm.authentication = Some(v.to_string()),
                        "functions" => pm.docs_functions = v.to_string(),
                        "use" => pm.docs_use = v.to_string(),
                        "maintenance" => pm.docs_maintenance = v.to_string(),
                        "application" => pm.applications.push(v.to_string()),
                        "middleware" => pm.middleware_compat.push(v.to_string()),
                        _ => return Response::err(400, format!("unknown meta key {k}")),
                    }
                }
                let pkg = match package(crystal, pm) {
                    Ok(p) => p,
                    Err(e) => return Response::err(422, e.to_string()),
                };
                let bytes = pkg.to_bytes();
                let len = bytes.len();
                self.warehouse.knowware.insert(key, KnowwareEntry::Local(bytes));
                Response::ok_msg(format!("{len}"))
            }
            _ => Response::err(
                400,
                "usage: PROMOTE MAGMA <ore> <tag> <ks> | PROMOTE CRYSTAL <domain> <tags> [filters] | PROMOTE KNOWWARE <domain> <cver> <name> <kwver> [meta]",
            ),
        }
    }

    fn cmd_register(&mut self, args: &[&str]) -> Response {
        match args {
            ["PROVIDER", id, meta] => {
                insert_fresh(&mut self.registry.providers, id, meta.to_string())
            }
            ["REQUESTER", id, meta] => {
                insert_fresh(&mut self.registry.requesters, id, meta.to_string())
            }
            ["MIDDLEWARE", id, category] => {
                if !MIDDLEWARE_CATEGORIES.contains(category) {
                    return Response::err(
                        400,
                        format!("category must be one of {}", MIDDLEWARE_CATEGORIES.join("|")),
                    );
                }
                insert_fresh(&mut self.registry.middleware, id, category.to_string())
            }
            ["PROTOCOL", id, from, to] => {
                insert_fresh(&mut self.registry.protocols, id, (from.to_string(), to.to_string()))
            }
            ["SOURCE", id, locator] => {
                insert_fresh(&mut self.warehouse.sources, id, locator.to_string())
            }
            _ => Response::err(
                400,
                "usage: REGISTER PROVIDER|REQUESTER <id> «meta» | MIDDLEWARE <id> <category> | PROTOCOL <id> <from> <to> | SOURCE <id> «locator»",
            ),
        }
    }
}

/// `subject=` filters arrive as `exact:text` / `prefix:text` with unquoted
/// text (the tokenizer already stripped any «»); requote for the parser.
fn normalize_filter(v: &str) -> String {
    match v.split_once(':') {
        Some((kind, text)) if !text.starts_with('«') => {
            format!("{kind}:{}", quote_span(text))
        }
        _ => v.to_string(),
    }
}

fn insert_fresh<V>(map: &mut BTreeMap<String, V>, id: &str, value: V) -> Response {
    if map.contains_key(id) {
        return Response::err(409, format!("duplicate id {id}"));
    }
    map.insert(id.to_string(), value);
    Response::ok()
}

fn body_of<'a>(len: &str, body: Option<&'a [u8]>) -> Option<&'a [u8]> {
    let len: usize = len.parse().ok()?;
    body.filter(|b| b.len() == len)
}

fn append_journal(journal: &mut File, request: &Request) -> io::Result<()> {
    let body = request.body.as_deref().unwrap_or(&[]);
    writeln!(journal, "@ {} {}", request.line.len(), body.len())?;
    journal.write_all(request.line.as_bytes())?;
    journal.write_all(b"\n")?;
    if !body.is_empty() {
        journal.write_all(body)?;
        journal.write_all(b"\n")?;
    }
    journal.flush()
}

/// Read every journaled request back, in order.
pub fn read_journal(path: &Path) -> io::Result<Vec<Request>> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let bytes = fs::read(path)?;
    let mut requests = Vec::new();
    let mut pos = 0usize;
    let read_line = |pos: &mut usize| -> io::Result<String> {
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos] != b'\n' {
            *pos += 1;
        }
        if *pos >= bytes.len() {
            return Err(bad("journal truncated"));
        }
        let line = String::from_utf8(bytes[start..*pos].to_vec())
            .map_err(|_| bad("journal line is not UTF-8"))?;
        *pos += 1;
        Ok(line)
    };
    let header = read_line(&mut pos)?;
    if header != JOURNAL_HEADER {
        return Err(bad("bad journal header"));
    }
    while pos < bytes.len() {
        let entry = read_line(&mut pos)?;
        let parts: Vec<&str> = entry.split_whitespace().collect();
        let ["@", line_len, body_len] = parts.as_slice() else {
            return Err(bad("bad journal entry header"));
        };
        let line_len: usize = line_len.parse().map_err(|_| bad("bad line length"))?;
        let body_len: usize = body_len.parse().map_err(|_| bad("bad body length"))?;
        let take = |pos: &mut usize, len: usize| -> io::Result<Vec<u8>> {
            let end = pos
                .checked_add(len)
                .filter(|&end| end < bytes.len())
                .ok_or_else(|| bad("journal truncated"))?;
            let chunk = bytes[*pos..end].to_vec();
            *pos = end + 1; // past the trailing newline
            Ok(chunk)
        };
        let line = String::from_utf8(take(&mut pos, line_len)?)
            .map_err(|_| bad("journal line is not UTF-8"))?;
        let body = if body_len > 0 { Some(take(&mut pos, body_len)?) } else { None };
        requests.push(Request { line, body });
    }
    Ok(requests)
}

/// Serve the warehouse over TCP. One thread per connection; mutations take
/// the write lock (and thus the journal) exclusively, reads share.
pub fn serve(server: Server, listener: TcpListener) -> io::Result<()> {
    let shared = Arc::new(RwLock::new(server));
    for stream in listener.incoming() {
        let stream = stream?;
        let shared = Arc::clone(&shared);
        std::thread::spawn(move || {
            let _ = serve_connection(stream, &shared);
        });
    }
    Ok(())
}

fn serve_connection(stream: TcpStream, shared: &RwLock<Server>) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let line = line.trim_end_matches(['\r', '\n']).to_string();
        if line.is_empty() {
            continue;
        }
        let body = match announced_body_len(&line) {
            Some(len) => {
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body)?;
                let mut newline = [0u8; 1];
                reader.read_exact(&mut newline)?;
                Some(body)
            }
            None => None,
        };
        let request = Request { line, body };
        let response = if is_mutation(&request.line) {
            shared.write().unwrap().handle(&request)
        } else {
            shared
                .read()
                .unwrap()
                .handle_readonly(&request)
                .unwrap_or_else(|| Response::err(400, "not a read-only command"))
        };
        writer.write_all(&response.render())?;
        writer.flush()?;
    }
}

/// `PUT ORE|KS <id> <len>` announce an upload body of `len` bytes followed
/// by a newline.
pub fn announced_body_len(line: &str) -> Option<usize> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    match toks.as_slice() {
        ["PUT", "ORE" | "KS", _, len] => len.parse().ok(),
        _ => None,
    }
}
