use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{parse_sequence, sequence_to_string, AminoAcid};
use crate::{Error, Result};

/// Location of a planted motif inside a record, for localization checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifSite {
    pub start: usize,
    pub len: usize,
}

impl MotifSite {
    pub fn contains(&self, position: usize) -> bool {
        (self.start..self.start + self.len).contains(&position)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProteinRecord {
    pub id: String,
    pub sequence: Vec<AminoAcid>,
    /// Biological number of the first residue. Not used for model positions.
    pub residue_start: i64,
    pub label: usize,
    pub motif: Option<MotifSite>,
}

impl ProteinRecord {
    pub fn new(id: impl Into<String>, sequence: Vec<AminoAcid>, label: usize) -> Self {
        Self {
            id: id.into(),
            sequence,
            residue_start: 1,
            label,
            motif: None,
        }
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<ProteinRecord>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn new(records: Vec<ProteinRecord>, class_names: Vec<String>, split: Split) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Invalid("dataset has no records".into()));
        }
        if let Some(r) = records.iter().find(|r| r.label >= class_names.len()) {
            return Err(Error::Invalid(format!(
                "record {} has label {} but only {} classes",
                r.id,
                r.label,
                class_names.len()
            )));
        }
        Ok(Self {
            records,
            class_names,
            split,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn max_len(&self) -> usize {
        self.records.iter().map(|r| r.len()).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Fasta,
}

impl DatasetFormat {
    /// Guesses from the file extension; anything not FASTA-like is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("fa" | "fasta" | "faa" | "fas") => DatasetFormat::Fasta,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(DatasetFormat::Jsonl),
            "fasta" | "fa" => Ok(DatasetFormat::Fasta),
            other => Err(Error::Invalid(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    sequence: String,
    #[serde(default = "default_start")]
    residue_start: i64,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motif_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motif_len: Option<usize>,
}

fn default_start() -> i64 {
    1
}

/// Maps label strings to indices, either against a fixed manifest or by
/// accumulating names in first-seen order.
struct LabelMap {
    names: Vec<String>,
    fixed: bool,
}

impl LabelMap {
    fn new(manifest: Option<&[String]>) -> Self {
        match manifest {
            Some(names) => Self {
                names: names.to_vec(),
                fixed: true,
            },
            None => Self {
                names: Vec::new(),
                fixed: false,
            },
        }
    }

    fn resolve(&mut self, label: &str) -> Result<usize> {
        if let Some(i) = self.names.iter().position(|n| n == label) {
            return Ok(i);
        }
        if self.fixed {
            return Err(Error::UnknownLabel {
                label: label.to_string(),
            });
        }
        self.names.push(label.to_string());
        Ok(self.names.len() - 1)
    }
}

/// One class name per non-blank line.
pub fn read_manifest(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn load_dataset(path: &Path, format: DatasetFormat, manifest: Option<&[String]>) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut labels = LabelMap::new(manifest);
    let records = match format {
        DatasetFormat::Jsonl => read_jsonl(path, reader, &mut labels)?,
        DatasetFormat::Fasta => read_fasta(path, reader, &mut labels)?,
    };
    if records.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no records".into(),
        });
    }
    Dataset::new(records, labels.names, Split::Train)
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_jsonl(path: &Path, reader: impl BufRead, labels: &mut LabelMap) -> Result<Vec<ProteinRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonRecord = serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let sequence = parse_sequence(&raw.sequence).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let label = match labels.resolve(&raw.label) {
            Err(Error::UnknownLabel { label }) => {
                return Err(parse_err(path, lineno, format!("unknown label {label:?}")))
            }
            other => other?,
        };
        let motif = match (raw.motif_start, raw.motif_len) {
            (Some(start), Some(len)) if start + len <= sequence.len() => Some(MotifSite { start, len }),
            (None, None) => None,
            _ => return Err(parse_err(path, lineno, "inconsistent motif_start/motif_len")),
        };
        records.push(ProteinRecord {
            id: raw.id,
            sequence,
            residue_start: raw.residue_start,
            label,
            motif,
        });
    }
    Ok(records)
}

fn read_fasta(path: &Path, reader: impl BufRead, labels: &mut LabelMap) -> Result<Vec<ProteinRecord>> {
    struct Pending {
        line: usize,
        id: String,
        label: usize,
        residue_start: i64,
        seq: String,
    }

    let finish = |p: Pending| -> Result<ProteinRecord> {
        let sequence = parse_sequence(&p.seq).map_err(|e| parse_err(path, p.line, format!("{}: {e}", p.id)))?;
        Ok(ProteinRecord {
            id: p.id,
            sequence,
            residue_start: p.residue_start,
            label: p.label,
            motif: None,
        })
    };

    let mut records = Vec::new();
    let mut current: Option<Pending> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            if let Some(p) = current.take() {
                records.push(finish(p)?);
            }
            let fields: Vec<&str> = header.split('|').map(str::trim).collect();
            let [id, label, start] = fields[..] else {
                return Err(parse_err(path, lineno, "header must be >id|label|residue_start"));
            };
            let residue_start = start
                .parse::<i64>()
                .map_err(|e| parse_err(path, lineno, format!("residue_start {start:?}: {e}")))?;
            let label = match labels.resolve(label) {
                Err(Error::UnknownLabel { label }) => {
                    return Err(parse_err(path, lineno, format!("unknown label {label:?}")))
                }
                other => other?,
            };
            current = Some(Pending {
                line: lineno,
                id: id.to_string(),
                label,
                residue_start,
                seq: String::new(),
            });
        } else {
            match current.as_mut() {
                Some(p) => p.seq.push_str(line),
                None => return Err(parse_err(path, lineno, "sequence data before first header")),
            }
        }
    }
    if let Some(p) = current.take() {
        records.push(finish(p)?);
    }
    Ok(records)
}

pub fn write_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &ds.records {
        let raw = JsonRecord {
            id: r.id.clone(),
            sequence: sequence_to_string(&r.sequence),
            residue_start: r.residue_start,
            label: ds.class_names[r.label].clone(),
            motif_start: r.motif.map(|m| m.start),
            motif_len: r.motif.map(|m| m.len),
        };
        serde_json::to_writer(&mut w, &raw)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_fasta(ds: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &ds.records {
        let seq = sequence_to_string(&r.sequence);
        writeln!(w, ">{}|{}|{}", r.id, ds.class_names[r.label], r.residue_start).map_err(|e| Error::io(path, e))?;
        for chunk in seq.as_bytes().chunks(60) {
            w.write_all(chunk).and_then(|_| writeln!(w)).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_manifest(class_names: &[String], path: &Path) -> Result<()> {
    let mut text = class_names.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-class record counts in `class_names` order.
pub fn class_histogram(ds: &Dataset) -> Vec<(String, usize)> {
    let mut counts = vec![0usize; ds.num_classes()];
    for r in &ds.records {
        counts[r.label] += 1;
    }
    ds.class_names.iter().cloned().zip(counts).collect()
}
