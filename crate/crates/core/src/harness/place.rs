use std::fs;
use std::path::{Path, PathBuf};

use super::{io_err, HarnessError};
use crate::java;
use crate::manifest::VulnEntry;

/// Records, relative to the tree root, the test file placed last.
pub const PLACED_MARKER: &str = ".witgen-placed";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestClassName {
    pub name: String,
    /// The declared name is not `<FocalClass>Test`.
    pub deviation: bool,
}

pub fn derive_test_class_name(code: &str, entry: &VulnEntry) -> Result<TestClassName, HarnessError> {
    let name = java::top_level_class_name(code).ok_or(HarnessError::NoClassDeclaration)?;
    let deviation = name != entry.expected_test_class();
    Ok(TestClassName { name, deviation })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedTest {
    pub path: PathBuf,
    pub class: TestClassName,
}

/// Writes `code` to `<test_target_dir>/<DeclaredName>.<ext>`, first removing
/// whatever test the previous call placed in this workspace.
pub fn place_test(code: &str, workspace: &Path, entry: &VulnEntry) -> Result<PlacedTest, HarnessError> {
    let class = derive_test_class_name(code, entry)?;
    let marker = workspace.join(PLACED_MARKER);
    if let Ok(previous) = fs::read_to_string(&marker) {
        let previous = workspace.join(previous.trim());
        match fs::remove_file(&previous) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&previous)(e)),
        }
    }
    let ext = entry.focal_file.extension().and_then(|e| e.to_str()).unwrap_or("java");
    let rel = entry.test_target_dir.join(format!("{}.{ext}", class.name));
    let dir = workspace.join(&entry.test_target_dir);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = workspace.join(&rel);
    fs::write(&path, code).map_err(io_err(&path))?;
    fs::write(&marker, rel.to_string_lossy().as_bytes()).map_err(io_err(&marker))?;
    Ok(PlacedTest { path, class })
}
