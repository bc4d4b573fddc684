use std::collections::HashSet;
use std::path::{Path, PathBuf};

use roxmltree::Document;

use super::SceneError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectedAssets {
    /// Every referenced file, deduplicated, in document order.
    pub files: Vec<PathBuf>,
    /// The subset of `files` that does not exist on disk.
    pub missing: Vec<PathBuf>,
}

/// Gather every `file=` attribute of an MJCF document, resolved against
/// `base_dir`.
pub fn collect_assets(xml: &str, base_dir: &Path) -> Result<CollectedAssets, SceneError> {
    let doc = Document::parse(xml).map_err(|e| SceneError::MalformedXml(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = CollectedAssets::default();
    for file in doc.descendants().filter_map(|n| n.attribute("file")) {
        if !seen.insert(file) {
            continue;
        }
        let path = base_dir.join(file);
        if !path.exists() {
            out.missing.push(path.clone());
        }
        out.files.push(path);
    }
    Ok(out)
}
