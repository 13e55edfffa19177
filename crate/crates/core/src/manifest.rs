//! Vulnerability manifest: entry schema, validation and workspace
//! materialization.
//!
//! A manifest is one JSON array of [`VulnEntry`] objects. Source trees are
//! referenced either as plain directories or as git revisions; relative
//! paths are resolved against the manifest's own directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::focal::{self, FocalError};
use crate::harness::MarkerConfig;

pub const TEST_CLASS_PLACEHOLDER: &str = "{test_class}";
pub const NOT_MAPPING: &str = "Not Mapping";
pub const DEFAULT_TIMEOUT_SECS: u64 = 600;

/// Marker left in every materialized tree; its presence lets a later
/// `materialize` call reset the directory.
pub const SOURCE_MARKER: &str = ".witgen-source";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Version {
    Before,
    After,
}

impl Version {
    pub const BOTH: [Version; 2] = [Version::Before, Version::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Version::Before => "before",
            Version::After => "after",
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodLocator {
    pub class_name: String,
    pub method_name: String,
    /// `None` matches by name only; overloads then make the locator ambiguous.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_types: Option<Vec<String>>,
}

impl fmt::Display for MethodLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.class_name, self.method_name)?;
        if let Some(params) = &self.parameter_types {
            write!(f, "({})", params.join(", "))?;
        }
        Ok(())
    }
}

impl MethodLocator {
    pub fn simple_class_name(&self) -> &str {
        self.class_name.rsplit('.').next().unwrap_or(&self.class_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GitRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub rev: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceRef {
    Dir(PathBuf),
    Git(GitRef),
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceRef::Dir(p) => write!(f, "dir:{}", p.display()),
            SourceRef::Git(g) => {
                let repo = g
                    .url
                    .clone()
                    .or_else(|| g.path.as_ref().map(|p| p.display().to_string()))
                    .unwrap_or_default();
                write!(f, "git:{repo}@{}", g.rev)
            }
        }
    }
}

fn default_workdir() -> PathBuf {
    PathBuf::from(".")
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSpec {
    /// argv template; exactly one element contains `{test_class}`.
    pub compile_and_test_command: Vec<String>,
    #[serde(default)]
    pub environment: BTreeMap<String, String>,
    /// Relative to the tree root.
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container_image: Option<String>,
    /// Overrides the default Maven marker set used by log classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_markers: Option<MarkerConfig>,
}

impl BuildSpec {
    pub fn placeholder_count(&self) -> usize {
        self.compile_and_test_command
            .iter()
            .map(|a| a.matches(TEST_CLASS_PLACEHOLDER).count())
            .sum()
    }

    pub fn command_for(&self, class_name: &str) -> Vec<String> {
        self.compile_and_test_command
            .iter()
            .map(|a| a.replace(TEST_CLASS_PLACEHOLDER, class_name))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnEntry {
    pub id: String,
    #[serde(default)]
    pub cve_id: Option<String>,
    #[serde(default)]
    pub cwe_id: Option<String>,
    pub before_ref: SourceRef,
    pub after_ref: SourceRef,
    pub focal_file: PathBuf,
    pub method_locator: MethodLocator,
    pub patched_method_text: String,
    pub test_target_dir: PathBuf,
    pub build_spec: BuildSpec,
}

impl VulnEntry {
    /// CWE identifier, or `"Not Mapping"` when the entry has none.
    pub fn cwe_group(&self) -> &str {
        cwe_group(self.cwe_id.as_deref())
    }

    pub fn source_ref(&self, version: Version) -> &SourceRef {
        match version {
            Version::Before => &self.before_ref,
            Version::After => &self.after_ref,
        }
    }

    pub fn expected_test_class(&self) -> String {
        format!("{}Test", self.method_locator.simple_class_name())
    }
}

pub fn cwe_group(cwe: Option<&str>) -> &str {
    match cwe.map(str::trim) {
        None | Some("") => NOT_MAPPING,
        Some(c) if c.eq_ignore_ascii_case(NOT_MAPPING) => NOT_MAPPING,
        Some(c) => c,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("entry `{entry}`, field `{field}`: {message}")]
    Validation {
        entry: String,
        field: String,
        message: String,
    },
    #[error("cannot resolve {reference}: {message}")]
    Resolve { reference: String, message: String },
    #[error("workspace {0} is not empty and was not created by materialize")]
    WorkspaceNotEmpty(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub field: String,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entry_id: String,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    /// Valid when no finding is an error; warnings (e.g. a multi-class fix)
    /// do not block a run.
    pub fn is_valid(&self) -> bool {
        self.first_error().is_none()
    }

    pub fn first_error(&self) -> Option<&Finding> {
        self.findings.iter().find(|f| f.severity == Severity::Error)
    }

    fn push(&mut self, field: &str, severity: Severity, message: impl Into<String>) {
        self.findings.push(Finding {
            field: field.to_string(),
            severity,
            message: message.into(),
        });
    }
}

/// Parses a manifest and checks everything that needs no source tree: ids,
/// duplicates, build command shape. Relative paths become absolute.
pub fn parse_manifest(path: &Path) -> Result<Vec<VulnEntry>, ManifestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut entries: Vec<VulnEntry> = serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = HashSet::new();
    for entry in &mut entries {
        let fail = |field: &str, message: String| ManifestError::Validation {
            entry: entry.id.clone(),
            field: field.to_string(),
            message,
        };
        if entry.id.trim().is_empty() {
            return Err(fail("id", "id must not be empty".into()));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(fail("id", format!("duplicate id `{}`", entry.id)));
        }
        if let Some(f) = static_findings(entry).into_iter().find(|f| f.severity == Severity::Error) {
            return Err(fail(&f.field, f.message));
        }
        resolve_relative(&mut entry.before_ref, &base);
        resolve_relative(&mut entry.after_ref, &base);
    }
    Ok(entries)
}

/// Parses the manifest and validates every entry against its source trees.
/// Warnings are logged, errors abort naming the entry and field.
pub fn load_manifest(path: &Path) -> Result<Vec<VulnEntry>, ManifestError> {
    let entries = parse_manifest(path)?;
    for entry in &entries {
        let report = validate_entry(entry);
        for w in report.findings.iter().filter(|f| f.severity == Severity::Warning) {
            log::warn!("{}: {}: {}", entry.id, w.field, w.message);
        }
        if let Some(err) = report.first_error() {
            return Err(ManifestError::Validation {
                entry: entry.id.clone(),
                field: err.field.clone(),
                message: err.message.clone(),
            });
        }
    }
    Ok(entries)
}

fn resolve_relative(source: &mut SourceRef, base: &Path) {
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    match source {
        SourceRef::Dir(p) => fix(p),
        SourceRef::Git(GitRef { path: Some(p), .. }) => fix(p),
        SourceRef::Git(_) => {}
    }
}

fn is_contained(p: &Path) -> bool {
    p.is_relative() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn static_findings(entry: &VulnEntry) -> Vec<Finding> {
    let mut r = ValidationReport::default();
    let spec = &entry.build_spec;
    if spec.compile_and_test_command.is_empty() {
        r.push("build_spec.compile_and_test_command", Severity::Error, "command is empty");
    }
    let placeholders = spec.placeholder_count();
    if placeholders != 1 {
        r.push(
            "build_spec.compile_and_test_command",
            Severity::Error,
            format!("expected exactly one `{TEST_CLASS_PLACEHOLDER}` placeholder, found {placeholders}"),
        );
    }
    if spec.timeout == 0 {
        r.push("build_spec.timeout", Severity::Error, "timeout must be positive");
    }
    if !is_contained(&spec.workdir) {
        r.push("build_spec.workdir", Severity::Error, "workdir must be a relative path inside the tree");
    }
    if !is_contained(&entry.focal_file) {
        r.push("focal_file", Severity::Error, "focal_file must be a relative path inside the tree");
    }
    if !is_contained(&entry.test_target_dir) {
        r.push("test_target_dir", Severity::Error, "test_target_dir must be a relative path inside the tree");
    }
    if entry.method_locator.class_name.trim().is_empty() || entry.method_locator.method_name.trim().is_empty() {
        r.push("method_locator", Severity::Error, "class_name and method_name are required");
    }
    if entry.patched_method_text.trim().is_empty() {
        r.push("patched_method_text", Severity::Error, "patched method text is empty");
    }
    r.findings
}

/// A resolved source tree; git checkouts live in a temporary directory that
/// is removed on drop.
pub struct ResolvedTree {
    pub root: PathBuf,
    _scratch: Option<tempfile::TempDir>,
}

pub fn resolve_tree(source: &SourceRef) -> Result<ResolvedTree, ManifestError> {
    match source {
        SourceRef::Dir(p) => {
            if p.is_dir() {
                Ok(ResolvedTree {
                    root: p.clone(),
                    _scratch: None,
                })
            } else {
                Err(ManifestError::Resolve {
                    reference: source.to_string(),
                    message: "directory does not exist".into(),
                })
            }
        }
        SourceRef::Git(g) => {
            let scratch = tempfile::tempdir().map_err(io_err(Path::new("<tempdir>")))?;
            let root = scratch.path().join("tree");
            git_checkout(source, g, &root)?;
            Ok(ResolvedTree {
                root,
                _scratch: Some(scratch),
            })
        }
    }
}

fn git_checkout(source: &SourceRef, g: &GitRef, dest: &Path) -> Result<(), ManifestError> {
    let repo = match (&g.url, &g.path) {
        (Some(url), _) => url.clone(),
        (None, Some(path)) => path.display().to_string(),
        (None, None) => {
            return Err(ManifestError::Resolve {
                reference: source.to_string(),
                message: "git reference needs `url` or `path`".into(),
            })
        }
    };
    let run = |args: &[&str]| -> Result<(), ManifestError> {
        let out = Command::new("git").args(args).output().map_err(|e| ManifestError::Resolve {
            reference: source.to_string(),
            message: format!("cannot run git: {e}"),
        })?;
        if out.status.success() {
            Ok(())
        } else {
            Err(ManifestError::Resolve {
                reference: source.to_string(),
                message: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            })
        }
    };
    let dest_s = dest.display().to_string();
    run(&["clone", "--quiet", "--no-checkout", &repo, &dest_s])?;
    run(&["-C", &dest_s, "-c", "advice.detachedHead=false", "checkout", "--quiet", "--detach", &g.rev])?;
    fs::remove_dir_all(dest.join(".git")).map_err(io_err(dest))
}

fn skip_entry(name: &std::ffi::OsStr) -> bool {
    name == ".git" || name == SOURCE_MARKER || name == crate::harness::PLACED_MARKER
}

/// Relative paths of all files under `root`, sorted.
pub fn list_files(root: &Path) -> Result<Vec<PathBuf>, ManifestError> {
    let mut files = Vec::new();
    let walker = walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !skip_entry(e.file_name()));
    for e in walker {
        let e = e.map_err(|e| ManifestError::Io {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if e.file_type().is_file() {
            files.push(e.path().strip_prefix(root).unwrap_or(e.path()).to_path_buf());
        }
    }
    Ok(files)
}

/// Files that differ between two trees (added, removed or changed).
pub fn changed_files(a: &Path, b: &Path) -> Result<Vec<PathBuf>, ManifestError> {
    let fa: BTreeSet<PathBuf> = list_files(a)?.into_iter().collect();
    let fb: BTreeSet<PathBuf> = list_files(b)?.into_iter().collect();
    let mut changed = Vec::new();
    for p in fa.union(&fb) {
        let same = match (fs::read(a.join(p)), fs::read(b.join(p))) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
        if !same {
            changed.push(p.clone());
        }
    }
    Ok(changed)
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn target_dir_usable(root: &Path, dir: &Path) -> bool {
    let mut p = root.to_path_buf();
    for c in dir.components() {
        p.push(c);
        if p.exists() && !p.is_dir() {
            return false;
        }
    }
    true
}

/// Checks every invariant of `entry`. Findings are data: an empty report
/// means the entry is fully valid.
pub fn validate_entry(entry: &VulnEntry) -> ValidationReport {
    let mut report = ValidationReport {
        entry_id: entry.id.clone(),
        findings: static_findings(entry),
    };
    let before = resolve_tree(&entry.before_ref);
    let after = resolve_tree(&entry.after_ref);
    let (before, after) = match (before, after) {
        (Ok(b), Ok(a)) => (b, a),
        (b, a) => {
            if let Err(e) = b {
                report.push("before_ref", Severity::Error, e.to_string());
            }
            if let Err(e) = a {
                report.push("after_ref", Severity::Error, e.to_string());
            }
            return report;
        }
    };

    let before_focal = fs::read_to_string(before.root.join(&entry.focal_file));
    let after_focal = fs::read_to_string(after.root.join(&entry.focal_file));
    match &before_focal {
        Err(e) => report.push("focal_file", Severity::Error, format!("before tree: {e}")),
        Ok(src) => match focal::count_matches(src, &entry.method_locator) {
            Ok(1) => {}
            Ok(0) => report.push(
                "method_locator",
                Severity::Error,
                format!("`{}` does not resolve in the before version", entry.method_locator),
            ),
            Ok(n) => report.push(
                "method_locator",
                Severity::Error,
                format!("`{}` is ambiguous: {n} declarations match", entry.method_locator),
            ),
            Err(FocalError::ClassNotFound(c)) => {
                report.push("method_locator", Severity::Error, format!("class `{c}` not found in focal_file"))
            }
            Err(e) => report.push("focal_file", Severity::Error, e.to_string()),
        },
    }
    match &after_focal {
        Err(e) => report.push("focal_file", Severity::Error, format!("after tree: {e}")),
        Ok(src) => {
            if !normalize_whitespace(src).contains(&normalize_whitespace(&entry.patched_method_text)) {
                report.push(
                    "patched_method_text",
                    Severity::Warning,
                    "patched method text not found in the after-version focal file",
                );
            }
        }
    }

    for (root, which) in [(&before.root, "before"), (&after.root, "after")] {
        if !target_dir_usable(root, &entry.test_target_dir) {
            report.push(
                "test_target_dir",
                Severity::Error,
                format!("{} is not a directory in the {which} tree", entry.test_target_dir.display()),
            );
        }
    }

    match changed_files(&before.root, &after.root) {
        Err(e) => report.push("after_ref", Severity::Error, e.to_string()),
        Ok(changed) => {
            if !changed.iter().any(|p| p == &entry.focal_file) {
                report.push("focal_file", Severity::Error, "focal_file is identical in the before and after trees");
            }
            let ext = entry.focal_file.extension();
            let classes: Vec<String> = changed
                .iter()
                .filter(|p| p.extension() == ext)
                .map(|p| p.display().to_string())
                .collect();
            if classes.len() > 1 {
                report.push(
                    "focal_file",
                    Severity::Warning,
                    format!("fix is not confined to one class; changed: {}", classes.join(", ")),
                );
            }
        }
    }
    report
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), ManifestError> {
    let walker = walkdir::WalkDir::new(from)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !skip_entry(e.file_name()));
    for e in walker {
        let e = e.map_err(|e| ManifestError::Io {
            path: from.to_path_buf(),
            source: e.into(),
        })?;
        let rel = e.path().strip_prefix(from).unwrap_or(e.path());
        let dest = to.join(rel);
        if e.file_type().is_dir() {
            fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        } else if e.file_type().is_file() {
            fs::copy(e.path(), &dest).map_err(io_err(&dest))?;
        }
    }
    Ok(())
}

/// Checks out one version of `entry` into `workspace` and returns the tree
/// root. Calling it again on a workspace it produced resets the tree, so
/// repeated calls yield identical contents.
pub fn materialize(entry: &VulnEntry, version: Version, workspace: &Path) -> Result<PathBuf, ManifestError> {
    if workspace.exists() {
        let non_empty = fs::read_dir(workspace).map_err(io_err(workspace))?.next().is_some();
        if non_empty {
            if !workspace.join(SOURCE_MARKER).exists() {
                return Err(ManifestError::WorkspaceNotEmpty(workspace.to_path_buf()));
            }
            fs::remove_dir_all(workspace).map_err(io_err(workspace))?;
        }
    }
    fs::create_dir_all(workspace).map_err(io_err(workspace))?;
    let source = entry.source_ref(version);
    let tree = resolve_tree(source)?;
    copy_tree(&tree.root, workspace)?;
    if !workspace.join(&entry.focal_file).is_file() {
        return Err(ManifestError::Resolve {
            reference: source.to_string(),
            message: format!("focal file {} missing", entry.focal_file.display()),
        });
    }
    fs::write(workspace.join(SOURCE_MARKER), format!("{} {}\n", entry.id, version)).map_err(io_err(workspace))?;
    Ok(workspace.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn write(root: &Path, rel: &str, text: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }

    const BEFORE: &str = "package a;\npublic class Foo {\n    int f(int x) {\n        return x;\n    }\n}\n";
    const AFTER: &str = "package a;\npublic class Foo {\n    int f(int x) {\n        return Math.max(0, x);\n    }\n}\n";

    fn fixture(dir: &Path) -> VulnEntry {
        write(&dir.join("before"), "src/main/java/a/Foo.java", BEFORE);
        write(&dir.join("after"), "src/main/java/a/Foo.java", AFTER);
        fs::create_dir_all(dir.join("before/src/test/java/a")).unwrap();
        serde_json::from_value(serde_json::json!({
            "id": "VUL4J-03",
            "cwe_id": "CWE-20",
            "before_ref": {"dir": dir.join("before")},
            "after_ref": {"dir": dir.join("after")},
            "focal_file": "src/main/java/a/Foo.java",
            "method_locator": {"class_name": "Foo", "method_name": "f", "parameter_types": ["int"]},
            "patched_method_text": "int f(int x) {\n  return Math.max(0, x);\n}",
            "test_target_dir": "src/test/java/a",
            "build_spec": {"compile_and_test_command": ["mvn", "test", "-Dtest={test_class}"]}
        }))
        .unwrap()
    }

    #[test]
    fn well_formed_entry_has_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let entry = fixture(dir.path());
        let report = validate_entry(&entry);
        assert!(report.is_empty(), "{report:?}");
        assert_eq!(entry.build_spec.timeout, DEFAULT_TIMEOUT_SECS);
        assert_eq!(entry.build_spec.command_for("FooTest"), ["mvn", "test", "-Dtest=FooTest"]);
    }

    #[test]
    fn ambiguous_locator_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut entry = fixture(dir.path());
        let overloaded = "package a;\npublic class Foo {\n    int f(int x) { return x; }\n    int f(long x) { return 0; }\n}\n";
        write(&dir.path().join("before"), "src/main/java/a/Foo.java", overloaded);
        entry.method_locator.parameter_types = None;
        let report = validate_entry(&entry);
        let f = report.first_error().unwrap();
        assert_eq!(f.field, "method_locator");
        assert!(f.message.contains("ambiguous"), "{f:?}");
    }

    #[test]
    fn multi_file_fix_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        let entry = fixture(dir.path());
        write(&dir.path().join("before"), "src/main/java/a/Bar.java", "class Bar {}");
        write(&dir.path().join("after"), "src/main/java/a/Bar.java", "class Bar { int y; }");
        let report = validate_entry(&entry);
        assert!(report.is_valid());
        let w = &report.findings[0];
        assert_eq!(w.severity, Severity::Warning);
        assert!(w.message.contains("not confined to one class"));
        assert!(w.message.contains("Bar.java") && w.message.contains("Foo.java"));
    }

    #[test]
    fn unchanged_focal_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut entry = fixture(dir.path());
        write(&dir.path().join("after"), "src/main/java/a/Foo.java", BEFORE);
        entry.patched_method_text = "return x;".into();
        let report = validate_entry(&entry);
        assert_eq!(report.first_error().unwrap().field, "focal_file");
    }

    #[test]
    fn missing_tree_and_bad_target_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut entry = fixture(dir.path());
        write(&dir.path().join("before"), "src/test/java/b", "a file, not a directory");
        entry.test_target_dir = "src/test/java/b".into();
        let report = validate_entry(&entry);
        assert_eq!(report.first_error().unwrap().field, "test_target_dir");

        entry.after_ref = SourceRef::Dir(dir.path().join("nope"));
        let report = validate_entry(&entry);
        assert_eq!(report.first_error().unwrap().field, "after_ref");
    }

    #[test]
    fn manifest_parse_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let entry = fixture(dir.path());
        let path = dir.path().join("manifest.json");
        fs::write(&path, serde_json::to_string(&vec![entry.clone()]).unwrap()).unwrap();
        assert_eq!(load_manifest(&path).unwrap().len(), 1);

        fs::write(&path, serde_json::to_string(&vec![entry.clone(), entry]).unwrap()).unwrap();
        match load_manifest(&path) {
            Err(ManifestError::Validation { entry, field, message }) => {
                assert_eq!(entry, "VUL4J-03");
                assert_eq!(field, "id");
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }

        fs::write(&path, "[{\"id\": 1").unwrap();
        assert!(matches!(load_manifest(&path), Err(ManifestError::Parse { .. })));
    }

    #[test]
    fn relative_refs_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut entry = fixture(dir.path());
        entry.before_ref = SourceRef::Dir("before".into());
        entry.after_ref = SourceRef::Dir("after".into());
        let path = dir.path().join("manifest.json");
        fs::write(&path, serde_json::to_string(&vec![entry]).unwrap()).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded[0].before_ref, SourceRef::Dir(dir.path().join("before")));
    }

    #[test]
    fn placeholder_rules() {
        let dir = tempfile::tempdir().unwrap();
        let mut entry = fixture(dir.path());
        entry.build_spec.compile_and_test_command = vec!["mvn".into(), "test".into()];
        entry.build_spec.timeout = 0;
        let fields: Vec<_> = static_findings(&entry).into_iter().map(|f| f.field).collect();
        assert_eq!(fields, ["build_spec.compile_and_test_command", "build_spec.timeout"]);
    }

    #[test]
    fn materialize_is_idempotent_and_guards_foreign_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let entry = fixture(dir.path());
        let ws = dir.path().join("ws");
        let root = materialize(&entry, Version::After, &ws).unwrap();
        let text = fs::read_to_string(root.join(&entry.focal_file)).unwrap();
        assert!(normalize_whitespace(&text).contains(&normalize_whitespace(&entry.patched_method_text)));
        let first = list_files(&ws).unwrap();
        write(&ws, "junk.txt", "left over");
        materialize(&entry, Version::After, &ws).unwrap();
        assert_eq!(list_files(&ws).unwrap(), first);

        let foreign = dir.path().join("foreign");
        write(&foreign, "keep.txt", "mine");
        assert!(matches!(
            materialize(&entry, Version::Before, &foreign),
            Err(ManifestError::WorkspaceNotEmpty(_))
        ));
    }

    #[test]
    fn cwe_group_defaults() {
        assert_eq!(cwe_group(None), NOT_MAPPING);
        assert_eq!(cwe_group(Some("not mapping")), NOT_MAPPING);
        assert_eq!(cwe_group(Some("CWE-79")), "CWE-79");
    }
}
