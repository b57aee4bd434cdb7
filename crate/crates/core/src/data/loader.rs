use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{read_image, ImageRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub class_names: Vec<String>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn load_images(&self) -> Result<Vec<ImageRecord>> {
        self.records.iter().map(|r| read_image(&r.path, &r.id, r.label)).collect()
    }
}

/// Reads `root/labels.csv` (`id,label`) and resolves each id to
/// `root/images/<id>.img8` or `root/images/<id>.png`.
///
/// With `root/classes.txt` (one name per line) labels may be class names or
/// indices into that list; without it labels must be non-negative integers
/// and classes are named by index.
pub fn load_isic_layout(root: &Path) -> Result<DatasetManifest> {
    let csv_path = root.join("labels.csv");
    let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let classes_path = root.join("classes.txt");
    let named: Option<Vec<String>> = if classes_path.exists() {
        let t = fs::read_to_string(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
        Some(t.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
    } else {
        None
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "id,label" => {}
        _ => return Err(Error::format(&csv_path, "expected header \"id,label\"")),
    }
    let mut rows = BTreeMap::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::format(&csv_path, format!("line {}: {msg}", lineno + 1));
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("malformed row {line:?}")))?;
        let (id, label) = (id.trim(), label.trim());
        if id.is_empty() || label.contains(',') {
            return Err(bad(format!("malformed row {line:?}")));
        }
        let index = match (&named, label.parse::<usize>()) {
            (Some(names), _) if names.iter().any(|n| n == label) => names.iter().position(|n| n == label).unwrap(),
            (Some(names), Ok(i)) if i < names.len() => i,
            (None, Ok(i)) => i,
            _ => return Err(bad(format!("unknown label {label:?}"))),
        };
        if rows.insert(id.to_string(), index).is_some() {
            return Err(bad(format!("duplicate id {id:?}")));
        }
    }

    let images = root.join("images");
    let mut records = Vec::with_capacity(rows.len());
    for (id, label) in rows {
        let candidates = [images.join(format!("{id}.img8")), images.join(format!("{id}.png"))];
        let path = candidates.iter().find(|p| p.is_file()).cloned().ok_or_else(|| {
            Error::io(
                &candidates[0],
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("no image for id {id:?}")),
            )
        })?;
        records.push(ManifestRecord { id, path, label });
    }
    let class_names = named.unwrap_or_else(|| {
        let k = records.iter().map(|r| r.label + 1).max().unwrap_or(0);
        (0..k).map(|i| i.to_string()).collect()
    });
    Ok(DatasetManifest { records, class_names })
}
