//! Dataset manifests: CSV `path,subject`, one face per line. Relative paths
//! resolve against the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imgcore::{read_pgm, ImagePlane};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Parses manifest text. An optional `path,subject` header is skipped.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line == "path,subject") {
                continue;
            }
            let (path, subject) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::format(format!("manifest line {}: expected path,subject", n + 1)))?;
            let subject = subject.trim();
            if subject.is_empty() {
                return Err(Error::format(format!("manifest line {}: empty subject id", n + 1)));
            }
            let path = Path::new(path.trim());
            entries.push(ManifestEntry {
                path: if path.is_absolute() { path.to_path_buf() } else { base.join(path) },
                subject: subject.to_string(),
            });
        }
        if entries.len() < 2 {
            return Err(Error::format("manifest needs at least two faces"));
        }
        Ok(DatasetManifest { entries })
    }

    /// Reads a manifest file and checks that every listed image exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Self::parse(&text, base)?;
        if let Some(e) = m.entries.iter().find(|e| !e.path.is_file()) {
            return Err(Error::format(format!("manifest image {} does not exist", e.path.display())));
        }
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,subject\n");
        for e in &self.entries {
            s.push_str(&format!("{},{}\n", e.path.display(), e.subject));
        }
        s
    }

    /// Face count `N`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `K = N (N - 1) / 2`; pairs are never materialised.
    pub fn pair_count(&self) -> u64 {
        crate::pairs::pair_count(self.len())
    }

    /// Dense subject ids, numbered by sorted subject name.
    pub fn subject_ids(&self) -> Vec<u32> {
        let names: BTreeSet<&str> = self.entries.iter().map(|e| e.subject.as_str()).collect();
        let order: BTreeMap<&str, u32> = names.into_iter().zip(0..).collect();
        self.entries.iter().map(|e| order[e.subject.as_str()]).collect()
    }

    /// Face names (file stems) for score dumps.
    pub fn names(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                e.path
                    .file_stem()
                    .map_or_else(|| e.path.display().to_string(), |s| s.to_string_lossy().into_owned())
            })
            .collect()
    }

    /// Loads every face as a PGM raster.
    pub fn load_faces(&self) -> Result<Vec<ImagePlane>> {
        self.entries
            .iter()
            .map(|e| {
                let f = fs::File::open(&e.path)?;
                read_pgm(BufReader::new(f))
                    .map_err(|err| Error::format(format!("{}: {err}", e.path.display())))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_count() {
        let m = DatasetManifest::parse("path,subject\na.pgm,bob\nb.pgm,amy\nc.pgm,bob\n", Path::new("/d")).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.pair_count(), 3);
        assert_eq!(m.subject_ids(), vec![1, 0, 1]);
        assert_eq!(m.entries[0].path, PathBuf::from("/d/a.pgm"));
        assert_eq!(m.names(), vec!["a", "b", "c"]);
    }

    #[test]
    fn rejects_empty_subject() {
        assert!(DatasetManifest::parse("a.pgm,\nb.pgm,x\n", Path::new(".")).is_err());
        assert!(DatasetManifest::parse("a.pgm\n", Path::new(".")).is_err());
    }

    #[test]
    fn load_checks_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "x.pgm,1\ny.pgm,2\n").unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }
}
