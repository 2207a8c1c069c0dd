//! Read-only, versioned, verifiable knowware packages.
//!
//! A package is a crystal serialized into an opaque payload plus a manifest
//! (the knowledge interface): content list, representation format, possible
//! applications, license declaration, compatible middleware, version,
//! watermark and an optional validation token. Packages carry no control
//! mechanism; once opened they expose no mutating operation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crystal::{detect_conflicts_in, Crystal, MagmaError};

/// Representation format of v1 payloads: crystal text made of element lines.
pub const FORMAT_KEL1: &str = "kel-1";

const MAGIC: &str = "KWPKG1";

#[derive(Debug, Error)]
pub enum PackageError {
    #[error("manifest field {0} is required")]
    IncompleteMeta(&'static str),
    #[error("manifest field {0} must not contain newlines")]
    InvalidMeta(String),
    #[error("crystal has unresolved conflicts; refusing to package")]
    ConflictedCrystal,
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error(transparent)]
    Crystal(#[from] MagmaError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The knowledge interface attached to a package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub representation_format: String,
    /// Pragmatics base tag → element count in the payload.
    pub content_list: BTreeMap<String, usize>,
    pub applications: Vec<String>,
    pub license: String,
    pub middleware_compat: Vec<String>,
    /// Hex SHA-256 of the payload bytes.
    pub watermark: String,
    /// Opaque validation-center token; only its presence is checked.
    pub authentication: Option<String>,
    pub docs_functions: String,
    pub docs_use: String,
    pub docs_maintenance: String,
    /// Unknown keys, preserved for forward compatibility.
    pub extra: Vec<(String, String)>,
}

/// Caller-supplied manifest fields for [`package`].
#[derive(Debug, Clone, Default)]
pub struct PackageMeta {
    pub name: String,
    pub version: String,
    pub applications: Vec<String>,
    pub license: String,
    pub middleware_compat: Vec<String>,
    pub authentication: Option<String>,
    pub docs_functions: String,
    pub docs_use: String,
    pub docs_maintenance: String,
}

/// A read-only knowware module: manifest plus opaque payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowwarePackage {
    manifest: Manifest,
    payload: Vec<u8>,
}

/// Verification verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(FailReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    Watermark,
    ContentList,
    Payload,
    Authentication,
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FailReason::Watermark => "watermark",
            FailReason::ContentList => "content-list",
            FailReason::Payload => "payload",
            FailReason::Authentication => "authentication",
        };
        write!(f, "{name}")
    }
}

/// Hex SHA-256 digest used as the content watermark.
pub fn watermark_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn check_meta_value(key: &str, value: &str) -> Result<(), PackageError> {
    if value.contains('\n') {
        return Err(PackageError::InvalidMeta(key.to_string()));
    }
    Ok(())
}

/// Package a conflict-free crystal under the given manifest fields.
pub fn package(crystal: &Crystal, meta: PackageMeta) -> Result<KnowwarePackage, PackageError> {
    if meta.name.trim().is_empty() {
        return Err(PackageError::IncompleteMeta("name"));
    }
    if meta.version.trim().is_empty() {
        return Err(PackageError::IncompleteMeta("version"));
    }
    if !detect_conflicts_in(crystal.elements.iter()).is_empty() {
        return Err(PackageError::ConflictedCrystal);
    }
    for (key, value) in [
        ("name", &meta.name),
        ("version", &meta.version),
        ("license", &meta.license),
        ("doc.functions", &meta.docs_functions),
        ("doc.use", &meta.docs_use),
        ("doc.maintenance", &meta.docs_maintenance),
    ] {
        check_meta_value(key, value)?;
    }
    for v in meta.applications.iter().chain(meta.middleware_compat.iter()) {
        check_meta_value("list item", v)?;
    }
    if let Some(token) = &meta.authentication {
        check_meta_value("auth", token)?;
    }
    let payload = crystal.to_text().into_bytes();
    let manifest = Manifest {
        name: meta.name,
        version: meta.version,
        representation_format: FORMAT_KEL1.to_string(),
        content_list: crystal.content_counts(),
        applications: meta.applications,
        license: meta.license,
        middleware_compat: meta.middleware_compat,
        watermark: watermark_hex(&payload),
        authentication: meta.authentication,
        docs_functions: meta.docs_functions,
        docs_use: meta.docs_use,
        docs_maintenance: meta.docs_maintenance,
        extra: Vec::new(),
    };
    Ok(KnowwarePackage { manifest, payload })
}

impl Manifest {
    /// Canonical `key = value` text: known keys in fixed order, then
    /// preserved unknown keys.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut push = |key: &str, value: &str| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(value);
            out.push('\n');
        };
        push("name", &self.name);
        push("version", &self.version);
        push("format", &self.representation_format);
        push("watermark", &self.watermark);
        push("license", &self.license);
        if let Some(token) = &self.authentication {
            push("auth", token);
        }
        for (tag, count) in &self.content_list {
            push("content", &format!("{tag} {count}"));
        }
        for app in &self.applications {
            push("application", app);
        }
        for mw in &self.middleware_compat {
            push("middleware", mw);
        }
        push("doc.functions", &self.docs_functions);
        push("doc.use", &self.docs_use);
        push("doc.maintenance", &self.docs_maintenance);
        for (key, value) in &self.extra {
            push(key, value);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Manifest, PackageError> {
        let mut manifest = Manifest {
            name: String::new(),
            version: String::new(),
            representation_format: String::new(),
            content_list: BTreeMap::new(),
            applications: Vec::new(),
            license: String::new(),
            middleware_compat: Vec::new(),
            watermark: String::new(),
            authentication: None,
            docs_functions: String::new(),
            docs_use: String::new(),
            docs_maintenance: String::new(),
            extra: Vec::new(),
        };
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| PackageError::MalformedContainer(format!("bad manifest line {line:?}")))?;
            match key {
                "name" => manifest.name = value.to_string(),
                "version" => manifest.version = value.to_string(),
                "format" => manifest.representation_format = value.to_string(),
                "watermark" => manifest.watermark = value.to_string(),
                "license" => manifest.license = value.to_string(),
                "auth" => manifest.authentication = Some(value.to_string()),
                "content" => {
                    let (tag, count) = value.rsplit_once(' ').ok_or_else(|| {
                        PackageError::MalformedContainer(format!("bad content entry {value:?}"))
                    })?;
                    let count = count.parse().map_err(|_| {
                        PackageError::MalformedContainer(format!("bad content count {value:?}"))
                    })?;
                    manifest.content_list.insert(tag.to_string(), count);
                }
                "application" => manifest.applications.push(value.to_string()),
                "middleware" => manifest.middleware_compat.push(value.to_string()),
                "doc.functions" => manifest.docs_functions = value.to_string(),
                "doc.use" => manifest.docs_use = value.to_string(),
                "doc.maintenance" => manifest.docs_maintenance = value.to_string(),
                _ => manifest.extra.push((key.to_string(), value.to_string())),
            }
        }
        if manifest.name.is_empty() {
            return Err(PackageError::MalformedContainer("missing name".into()));
        }
        if manifest.version.is_empty() {
            return Err(PackageError::MalformedContainer("missing version".into()));
        }
        Ok(manifest)
    }
}

impl KnowwarePackage {
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Parse the payload back into a crystal.
    pub fn payload_crystal(&self) -> Result<Crystal, PackageError> {
        let text = std::str::from_utf8(&self.payload)
            .map_err(|_| PackageError::MalformedContainer("payload is not UTF-8".into()))?;
        Ok(Crystal::parse_text(text)?)
    }

    /// Serialize to the `.kw` container: length-prefixed MANIFEST and
    /// PAYLOAD sections.
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = self.manifest.render().into_bytes();
        let mut out = Vec::with_capacity(manifest.len() + self.payload.len() + 64);
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(format!("MANIFEST {}\n", manifest.len()).as_bytes());
        out.extend_from_slice(&manifest);
        out.push(b'\n');
        out.extend_from_slice(format!("PAYLOAD {}\n", self.payload.len()).as_bytes());
        out.extend_from_slice(&self.payload);
        out.push(b'\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PackageError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<KnowwarePackage, PackageError> {
        open(&fs::read(path)?)
    }
}

fn read_section<'a>(bytes: &'a [u8], header: &str) -> Result<(&'a [u8], &'a [u8]), PackageError> {
    let malformed = |what: &str| PackageError::MalformedContainer(what.to_string());
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| malformed("missing section header"))?;
    let line = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| malformed("section header is not UTF-8"))?;
    let len: usize = line
        .strip_prefix(header)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| malformed(&format!("expected `{header} <len>`, got {line:?}")))?;
    let body_start = newline + 1;
    let body_end = body_start
        .checked_add(len)
        .filter(|&end| end < bytes.len())
        .ok_or_else(|| malformed("truncated section"))?;
    if bytes[body_end] != b'\n' {
        return Err(malformed("section body not newline-terminated"));
    }
    Ok((&bytes[body_start..body_end], &bytes[body_end + 1..]))
}

/// Parse container bytes into a package. The payload is not verified here.
pub fn open(bytes: &[u8]) -> Result<KnowwarePackage, PackageError> {
    let malformed = |what: &str| PackageError::MalformedContainer(what.to_string());
    let rest = bytes
        .strip_prefix(MAGIC.as_bytes())
        .and_then(|r| r.strip_prefix(b"\n"))
        .ok_or_else(|| malformed("bad magic"))?;
    let (manifest_bytes, rest) = read_section(rest, "MANIFEST")?;
    let (payload, rest) = read_section(rest, "PAYLOAD")?;
    if !rest.is_empty() {
        return Err(malformed("trailing bytes after payload section"));
    }
    let manifest_text =
        std::str::from_utf8(manifest_bytes).map_err(|_| malformed("manifest is not UTF-8"))?;
    let manifest = Manifest::parse(manifest_text)?;
    Ok(KnowwarePackage { manifest, payload: payload.to_vec() })
}

/// Check a package against its own manifest.
///
/// Pass requires: the payload digest equals the watermark, the content list
/// matches a recount of the payload, and the validation token (when the key
/// is present) is nonempty. No cryptographic authentication is performed.
pub fn verify(pkg: &KnowwarePackage) -> Verdict {
    if watermark_hex(&pkg.payload) != pkg.manifest.watermark {
        return Verdict::Fail(FailReason::Watermark);
    }
    let crystal = match pkg.payload_crystal() {
        Ok(c) => c,
        Err(_) => return Verdict::Fail(FailReason::Payload),
    };
    if crystal.content_counts() != pkg.manifest.content_list {
        return Verdict::Fail(FailReason::ContentList);
    }
    if pkg.manifest.authentication.as_deref().is_some_and(|t| t.trim().is_empty()) {
        return Verdict::Fail(FailReason::Authentication);
    }
    Verdict::Pass
}

/// The knowledge interface of a package: a manifest copy.
pub fn interface_of(pkg: &KnowwarePackage) -> Manifest {
    pkg.manifest().clone()
}
