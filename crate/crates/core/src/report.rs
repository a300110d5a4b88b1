//! Experiment report files.
//!
//! A report is `<experiment>-<hash>.report.csv`, where `hash` is the first 16 hex
//! digits of the SHA-256 of the resolved config text. The file starts with
//! `# key=value` header lines (including one `# config.<key>=<value>` line per
//! config entry), followed by named sections:
//!
//! ```text
//! [section]
//! col_a,col_b
//! 1,2
//! ```
//!
//! A sibling `<experiment>-<hash>.meta.json` holds the header and a summary map.
//! No wall-clock data is written, so identical runs give identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::KeyValues;
use crate::error::Result;
use crate::numeric::fmt_f64;

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    UInt(u64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::UInt(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

macro_rules! cell_from {
    ($($t:ty => $v:ident as $c:ty),*) => {
        $(impl From<$t> for Cell {
            fn from(x: $t) -> Self {
                Cell::$v(x as $c)
            }
        })*
    };
}
cell_from!(i32 => Int as i64, i64 => Int as i64, u32 => UInt as u64, u64 => UInt as u64, usize => UInt as u64, f64 => Float as f64);

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Section {
    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in section {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    experiment: String,
    config: KeyValues,
    header: Vec<(String, String)>,
    sections: Vec<Section>,
    summary: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct Meta<'a> {
    experiment: &'a str,
    tool_version: &'a str,
    format_version: u32,
    config_hash: String,
    config: BTreeMap<&'a str, &'a str>,
    header: BTreeMap<&'a str, &'a str>,
    summary: &'a BTreeMap<String, serde_json::Value>,
}

/// Paths of a written report.
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenReport {
    pub csv: PathBuf,
    pub meta: PathBuf,
}

impl Report {
    pub fn new(experiment: &str, config: &KeyValues) -> Self {
        Report {
            experiment: experiment.to_string(),
            config: config.clone(),
            header: Vec::new(),
            sections: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn experiment(&self) -> &str {
        &self.experiment
    }

    pub fn config(&self) -> &KeyValues {
        &self.config
    }

    pub fn header(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    /// Adds a summary entry, also shown as a `[summary]` section row.
    pub fn summary(&mut self, key: &str, value: impl Into<Cell>) {
        let cell = value.into();
        let json = match &cell {
            Cell::Int(v) => serde_json::json!(v),
            Cell::UInt(v) => serde_json::json!(v),
            Cell::Float(v) if v.is_finite() => serde_json::json!(v),
            Cell::Float(v) => serde_json::json!(v.to_string()),
            Cell::Text(s) => serde_json::json!(s),
            Cell::Bool(b) => serde_json::json!(b),
        };
        self.summary.insert(key.to_string(), json);
        if self.sections.first().is_none_or(|s| s.name != "summary") {
            self.sections.insert(
                0,
                Section {
                    name: "summary".into(),
                    columns: vec!["key".into(), "value".into()],
                    rows: Vec::new(),
                },
            );
        }
        self.sections[0].rows.push(vec![Cell::Text(key.to_string()), cell]);
    }

    pub fn summary_value(&self, key: &str) -> Option<&serde_json::Value> {
        self.summary.get(key)
    }

    pub fn section(&mut self, name: &str, columns: &[&str]) -> &mut Section {
        self.sections.push(Section {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        });
        self.sections.last_mut().expect("just pushed")
    }

    pub fn get_section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.experiment.as_bytes());
        hasher.update(b"\n");
        hasher.update(self.config.to_text().as_bytes());
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn file_stem(&self) -> String {
        format!("{}-{}", self.experiment, self.config_hash())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# lowertail report");
        let _ = writeln!(s, "# format_version={FORMAT_VERSION}");
        let _ = writeln!(s, "# tool_version={TOOL_VERSION}");
        let _ = writeln!(s, "# experiment={}", self.experiment);
        let _ = writeln!(s, "# config_hash={}", self.config_hash());
        for (k, v) in self.config.iter() {
            let _ = writeln!(s, "# config.{k}={v}");
        }
        for (k, v) in &self.header {
            let _ = writeln!(s, "# {k}={v}");
        }
        for sec in &self.sections {
            let _ = writeln!(s, "[{}]", sec.name);
            let _ = writeln!(s, "{}", sec.columns.join(","));
            for row in &sec.rows {
                let cells: Vec<String> = row.iter().map(Cell::render).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
            s.push('\n');
        }
        s
    }

    pub fn meta_json(&self) -> String {
        let meta = Meta {
            experiment: &self.experiment,
            tool_version: TOOL_VERSION,
            format_version: FORMAT_VERSION,
            config_hash: self.config_hash(),
            config: self.config.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            header: self.header.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            summary: &self.summary,
        };
        let mut s = serde_json::to_string_pretty(&meta).expect("serializable");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<WrittenReport> {
        std::fs::create_dir_all(dir)?;
        let stem = self.file_stem();
        let csv = dir.join(format!("{stem}.report.csv"));
        let meta = dir.join(format!("{stem}.meta.json"));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&meta, self.meta_json())?;
        Ok(WrittenReport { csv, meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut kv = KeyValues::new();
        kv.set("n", 5);
        kv.set("eta", 0.5);
        let mut r = Report::new("demo", &kv);
        r.header("seed", 3);
        r.summary("mean", 0.25);
        let sec = r.section("rows", &["slot", "value"]);
        sec.push(vec![0usize.into(), 0.125.into()]);
        sec.push(vec![1usize.into(), (1.0 / 3.0).into()]);
        r
    }

    #[test]
    fn layout() {
        let text = sample().to_csv();
        assert!(text.starts_with("# lowertail report\n"));
        assert!(text.contains("# config.eta=0.5\n# config.n=5\n"));
        assert!(text.contains("[summary]\nkey,value\nmean,2.5000000000000000e-1\n"));
        assert!(text.contains("[rows]\nslot,value\n0,1.2500000000000000e-1\n"));
    }

    #[test]
    fn hash_depends_on_config_only() {
        let a = sample();
        let mut b = sample();
        b.summary("other", 1u64);
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
        let mut kv = a.config().clone();
        kv.set("n", 6);
        assert_ne!(Report::new("demo", &kv).config_hash(), a.config_hash());
    }

    #[test]
    fn echo_round_trips_as_config() {
        let r = sample();
        let kv = KeyValues::parse_text(&r.to_csv()).unwrap();
        assert_eq!(&kv, r.config());
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let w = sample().write(dir.path()).unwrap();
        assert!(w.csv.file_name().unwrap().to_str().unwrap().ends_with(".report.csv"));
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&w.meta).unwrap()).unwrap();
        assert_eq!(meta["experiment"], "demo");
        assert_eq!(meta["summary"]["mean"], 0.25);
    }
}
