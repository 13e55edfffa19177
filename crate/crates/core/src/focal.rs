//! Focal-context slicing.
//!
//! The declarations of the class holding the vulnerable method are sorted
//! into bins, and the bins are recombined into four increasingly large
//! context levels:
//!
//! * `L0`: package, class header, vulnerable method
//! * `L1`: `L0` plus constructor headers
//! * `L2`: `L1` plus the headers of the other methods (and nested types)
//! * `L3`: `L2` plus field declarations
//!
//! Header-only members end in `{ /* ... */ }` so every level is a
//! syntactically complete class skeleton. Imports are never part of a level
//! unless [`AssembleOptions::include_imports`] is set.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::java::{self, normalize_type, CompilationUnit, Member, MemberKind, SyntaxError, TypeDecl};
use crate::manifest::MethodLocator;

pub const ELISION: &str = "{ /* ... */ }";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L0,
    L1,
    L2,
    L3,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::L0, Level::L1, Level::L2, Level::L3];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::L0 => "L0",
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L0" | "0" => Ok(Level::L0),
            "L1" | "1" => Ok(Level::L1),
            "L2" | "2" => Ok(Level::L2),
            "L3" | "3" => Ok(Level::L3),
            _ => Err(format!("unknown context level `{s}` (expected L0..L3)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FocalError {
    #[error("parse error at {0}")]
    Parse(#[from] SyntaxError),
    #[error("class `{0}` not found among top-level declarations")]
    ClassNotFound(String),
    #[error("method `{0}` not found")]
    MethodNotFound(String),
    #[error("locator `{locator}` is ambiguous: {count} declarations match")]
    AmbiguousLocator { locator: String, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FragmentId {
    Package,
    ClassHeader,
    EnumConstants,
    Field(usize),
    Constructor(usize),
    Method(usize),
    NestedType(usize),
    VulnerableMethod,
}

impl fmt::Display for FragmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FragmentId::Package => f.write_str("package"),
            FragmentId::ClassHeader => f.write_str("class_header"),
            FragmentId::EnumConstants => f.write_str("enum_constants"),
            FragmentId::Field(i) => write!(f, "field:{i}"),
            FragmentId::Constructor(i) => write!(f, "constructor:{i}"),
            FragmentId::Method(i) => write!(f, "method:{i}"),
            FragmentId::NestedType(i) => write!(f, "nested:{i}"),
            FragmentId::VulnerableMethod => f.write_str("vulnerable_method"),
        }
    }
}

/// Declarations of the focal class, binned by role. Every list keeps source
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FragmentBins {
    pub package_decl: String,
    pub imports: Vec<String>,
    pub class_decl_header: String,
    /// Constant list of an enum, with its terminating `;`. Shown with the
    /// fields; below that level a bare `;` keeps the enum body well formed.
    pub enum_constants: Option<String>,
    pub vulnerable_method: String,
    pub constructor_headers: Vec<String>,
    pub method_headers: Vec<String>,
    pub nested_type_headers: Vec<String>,
    pub field_decls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FocalContext {
    pub level: Level,
    pub snippet: String,
    pub fragments_used: BTreeSet<FragmentId>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AssembleOptions {
    pub include_imports: bool,
}

fn elided(src: &str, member_signature: java::Span) -> String {
    format!("{} {ELISION}", java::indented(src, member_signature))
}

fn locate<'u>(unit: &'u CompilationUnit, locator: &MethodLocator) -> Result<(&'u TypeDecl, usize), FocalError> {
    let class = unit
        .find_type(&locator.class_name)
        .ok_or_else(|| FocalError::ClassNotFound(locator.class_name.clone()))?;
    let wants_ctor = locator.method_name == class.name || locator.method_name == "<init>";
    let wanted = |m: &Member| match m.kind {
        MemberKind::Method => !wants_ctor && m.name == locator.method_name,
        MemberKind::Constructor => wants_ctor,
        _ => false,
    };
    let by_name: Vec<usize> = (0..class.members.len()).filter(|&i| wanted(&class.members[i])).collect();
    if by_name.is_empty() {
        return Err(FocalError::MethodNotFound(locator.to_string()));
    }
    let matches: Vec<usize> = match &locator.parameter_types {
        None => by_name,
        Some(types) => {
            let want: Vec<String> = types.iter().map(|t| normalize_type(t)).collect();
            by_name
                .into_iter()
                .filter(|&i| {
                    let have: Vec<String> = class.members[i].param_types.iter().map(|t| normalize_type(t)).collect();
                    have == want
                })
                .collect()
        }
    };
    match matches.as_slice() {
        [] => Err(FocalError::MethodNotFound(locator.to_string())),
        [one] => Ok((class, *one)),
        many => Err(FocalError::AmbiguousLocator {
            locator: locator.to_string(),
            count: many.len(),
        }),
    }
}

/// Number of declarations `locator` resolves to in `source` (0, 1, or more).
pub fn count_matches(source: &str, locator: &MethodLocator) -> Result<usize, FocalError> {
    let unit = java::parse(source)?;
    match locate(&unit, locator) {
        Ok(_) => Ok(1),
        Err(FocalError::AmbiguousLocator { count, .. }) => Ok(count),
        Err(FocalError::MethodNotFound(_)) => Ok(0),
        Err(e) => Err(e),
    }
}

pub fn extract_fragments(source: &str, locator: &MethodLocator) -> Result<FragmentBins, FocalError> {
    let unit = java::parse(source)?;
    let (class, vulnerable) = locate(&unit, locator)?;

    let mut bins = FragmentBins {
        package_decl: unit.package.map(|s| s.text(source).to_string()).unwrap_or_default(),
        imports: unit.imports.iter().map(|s| s.text(source).to_string()).collect(),
        class_decl_header: java::Span::new(class.full.start, class.header.end).text(source).to_string(),
        ..FragmentBins::default()
    };
    bins.enum_constants = class.enum_constants.map(|c| format!("{};", java::indented(source, c)));
    for (i, member) in class.members.iter().enumerate() {
        if i == vulnerable {
            bins.vulnerable_method = java::indented(source, member.full);
            continue;
        }
        match member.kind {
            MemberKind::Field => bins.field_decls.push(java::indented(source, member.full)),
            MemberKind::Constructor => bins.constructor_headers.push(elided(source, member.signature)),
            MemberKind::Method => bins.method_headers.push(elided(source, member.signature)),
            MemberKind::NestedType(_) => bins.nested_type_headers.push(elided(source, member.signature)),
            MemberKind::Initializer => {}
        }
    }
    Ok(bins)
}

pub fn assemble_context(bins: &FragmentBins, level: Level) -> FocalContext {
    assemble_with(bins, level, AssembleOptions::default())
}

pub fn assemble_with(bins: &FragmentBins, level: Level, options: AssembleOptions) -> FocalContext {
    let mut used = BTreeSet::new();
    let mut members: Vec<&str> = Vec::new();

    if let Some(constants) = &bins.enum_constants {
        if level >= Level::L3 {
            used.insert(FragmentId::EnumConstants);
            members.push(constants);
        } else {
            members.push("    ;");
        }
    }
    if level >= Level::L3 {
        for (i, f) in bins.field_decls.iter().enumerate() {
            used.insert(FragmentId::Field(i));
            members.push(f);
        }
    }
    if level >= Level::L1 {
        for (i, c) in bins.constructor_headers.iter().enumerate() {
            used.insert(FragmentId::Constructor(i));
            members.push(c);
        }
    }
    if level >= Level::L2 {
        for (i, m) in bins.method_headers.iter().enumerate() {
            used.insert(FragmentId::Method(i));
            members.push(m);
        }
        for (i, n) in bins.nested_type_headers.iter().enumerate() {
            used.insert(FragmentId::NestedType(i));
            members.push(n);
        }
    }
    used.insert(FragmentId::VulnerableMethod);
    members.push(&bins.vulnerable_method);

    let mut snippet = String::new();
    if !bins.package_decl.is_empty() {
        used.insert(FragmentId::Package);
        snippet.push_str(&bins.package_decl);
        snippet.push_str("\n\n");
    }
    if options.include_imports && !bins.imports.is_empty() {
        snippet.push_str(&bins.imports.join("\n"));
        snippet.push_str("\n\n");
    }
    used.insert(FragmentId::ClassHeader);
    snippet.push_str(&bins.class_decl_header);
    snippet.push_str(" {\n");
    snippet.push_str(&members.join("\n\n"));
    snippet.push_str("\n}");

    FocalContext {
        level,
        snippet,
        fragments_used: used,
    }
}

/// Slices `source` at every level.
pub fn slice_all(source: &str, locator: &MethodLocator) -> Result<[FocalContext; 4], FocalError> {
    let bins = extract_fragments(source, locator)?;
    Ok(Level::ALL.map(|level| assemble_context(&bins, level)))
}
