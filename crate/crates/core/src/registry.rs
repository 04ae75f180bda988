//! Named datasets with their network and surrogate sizes.
//!
//! The registry is a small INI-like text file (`[name]` sections of
//! `key = value` lines). Iris, Cancer and Ionosphere are compiled into the
//! library; the larger sets are read from a data directory populated by
//! `scripts/fetch_datasets.sh`.

use std::path::{Path, PathBuf};

use crate::data::{self, CsvSchema, Dataset};
use crate::error::{Error, Result};
use crate::model::NetworkTopology;

const REGISTRY_TEXT: &str = include_str!("../data/registry.txt");

const BUNDLED: &[(&str, &str)] = &[
    ("iris.csv", include_str!("../data/iris.csv")),
    ("cancer.csv", include_str!("../data/cancer.csv")),
    ("ionosphere.csv", include_str!("../data/ionosphere.csv")),
];

/// Environment variable naming the directory that holds fetched datasets.
pub const DATA_DIR_ENV: &str = "SAPT_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub name: String,
    pub attribute_count: usize,
    pub class_count: usize,
    /// Hidden units of the Bayesian network.
    pub hidden_units: usize,
    /// Hidden layer widths of the surrogate.
    pub surrogate_hidden: (usize, usize),
    pub file: String,
    pub bundled: bool,
}

impl RegistryEntry {
    pub fn topology(&self) -> Result<NetworkTopology> {
        NetworkTopology::new(self.attribute_count, self.hidden_units, self.class_count)
    }

    fn schema(&self) -> CsvSchema {
        CsvSchema {
            feature_count: Some(self.attribute_count),
            class_count: Some(self.class_count),
            has_header: false,
        }
    }

    /// Loads the full (unsplit, unscaled) dataset.
    pub fn load(&self, data_dir: Option<&Path>) -> Result<Dataset> {
        if self.bundled {
            let text = BUNDLED
                .iter()
                .find(|(f, _)| *f == self.file)
                .map(|(_, t)| *t)
                .ok_or_else(|| Error::config(format!("no bundled file '{}'", self.file)))?;
            let origin = PathBuf::from(format!("<bundled>/{}", self.file));
            return data::parse_csv(text, &self.name, &origin, &self.schema());
        }
        let dir = match data_dir {
            Some(d) => d.to_path_buf(),
            None => std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
        };
        let path = dir.join(&self.file);
        if !path.exists() {
            return Err(Error::config(format!(
                "dataset '{}' is not bundled and {} does not exist; run scripts/fetch_datasets.sh or pass a data directory",
                self.name,
                path.display()
            )));
        }
        let mut ds = data::load_csv(&path, &self.schema())?;
        ds.rename(&self.name);
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn builtin() -> Self {
        Self::parse(REGISTRY_TEXT, Path::new("<bundled>/registry.txt")).expect("bundled registry parses")
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        // (line, name, [(line, key, value)])
        type Section = (usize, String, Vec<(usize, String, String)>);
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                sections.push((n, name.trim().to_string(), Vec::new()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(n, format!("expected 'key = value', found '{line}'")))?;
            let section = sections
                .last_mut()
                .ok_or_else(|| bad(n, "key outside of a [dataset] section".into()))?;
            section.2.push((n, key.trim().to_string(), value.trim().to_string()));
        }

        let mut entries = Vec::with_capacity(sections.len());
        for (start, name, fields) in sections {
            let get = |key: &str| -> Result<(usize, &str)> {
                fields
                    .iter()
                    .find(|(_, k, _)| k == key)
                    .map(|(n, _, v)| (*n, v.as_str()))
                    .ok_or_else(|| bad(start, format!("[{name}] is missing '{key}'")))
            };
            let count = |key: &str| -> Result<usize> {
                let (n, v) = get(key)?;
                v.parse::<usize>()
                    .ok()
                    .filter(|&c| c > 0)
                    .ok_or_else(|| bad(n, format!("'{key}' must be a positive integer, got '{v}'")))
            };
            let (n, sh) = get("surrogate_hidden")?;
            let widths: Vec<usize> = sh
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(n, format!("bad surrogate_hidden '{sh}'")))?;
            let [h1, h2] = widths[..] else {
                return Err(bad(n, format!("surrogate_hidden needs two widths, got '{sh}'")));
            };
            let (n, bundled) = get("bundled")?;
            let bundled = match bundled {
                "true" => true,
                "false" => false,
                other => return Err(bad(n, format!("bundled must be true or false, got '{other}'"))),
            };
            entries.push(RegistryEntry {
                attribute_count: count("attributes")?,
                class_count: count("classes")?,
                hidden_units: count("hidden")?,
                surrogate_hidden: (h1, h2),
                file: get("file")?.1.to_string(),
                bundled,
                name,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.name.eq_ignore_ascii_case(name))
    }
}

/// Loads a registered dataset and splits it into scaled train and test sets.
pub fn load_split(name: &str, train_fraction: f64, seed: u64, data_dir: Option<&Path>) -> Result<(RegistryEntry, Dataset, Dataset)> {
    let registry = Registry::builtin();
    let entry = registry
        .get(name)
        .ok_or_else(|| Error::config(format!("unknown dataset '{name}'")))?
        .clone();
    let full = entry.load(data_dir)?;
    let (train, test) = data::split(&full, train_fraction, seed)?;
    Ok((entry, train, test))
}
