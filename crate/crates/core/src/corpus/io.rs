use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::{Document, Domain, LabelMap, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Ok(DataFormat::Jsonl),
            Some("csv") => Ok(DataFormat::Csv),
            _ => Err(Error::Config(format!(
                "cannot infer data format of {}",
                path.display()
            ))),
        }
    }
}

/// Path of the label-map sidecar written next to a data file.
pub fn label_sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.labels.json"))
}

struct RawRecord {
    line: usize,
    text: String,
    label: Option<String>,
    numeric: bool,
}

/// Loads a dataset in file order.
///
/// Labels are resolved through `labels` when given, else through a
/// `<stem>.labels.json` sidecar when one exists, else from the labels seen in
/// the file (numeric labels keep their value as id).
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    domain: Domain,
    labels: Option<&LabelMap>,
) -> Result<LabeledDataset> {
    let records = match format {
        DataFormat::Jsonl => read_jsonl(path)?,
        DataFormat::Csv => read_csv(path)?,
    };

    let sidecar = label_sidecar_path(path);
    let label_map = match labels {
        Some(map) => map.clone(),
        None if sidecar.exists() => read_label_sidecar(&sidecar)?,
        None => infer_label_map(&records)?,
    };

    let mut docs = Vec::with_capacity(records.len());
    for rec in records {
        let label = match &rec.label {
            None => None,
            Some(name) => Some(label_map.id(name).ok_or_else(|| {
                Error::Schema(format!(
                    "{}:{}: unknown label `{name}`",
                    path.display(),
                    rec.line
                ))
            })?),
        };
        let doc = Document::new(rec.text, label, domain).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: rec.line,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    LabeledDataset::new(docs, label_map, domain)
}

fn infer_label_map(records: &[RawRecord]) -> Result<LabelMap> {
    let labeled: Vec<&RawRecord> = records.iter().filter(|r| r.label.is_some()).collect();
    if labeled.is_empty() {
        // Unlabeled data; the class count is unknown, assume binary.
        return Ok(LabelMap::numeric(2));
    }
    if labeled.iter().all(|r| r.numeric) {
        let max = labeled
            .iter()
            .filter_map(|r| r.label.as_deref()?.parse::<usize>().ok())
            .max()
            .unwrap_or(0);
        return Ok(LabelMap::numeric((max + 1).max(2)));
    }
    let mut names: Vec<String> = labeled.iter().filter_map(|r| r.label.clone()).collect();
    names.sort();
    names.dedup();
    LabelMap::new(names)
}

fn read_label_sidecar(path: &Path) -> Result<LabelMap> {
    let map: BTreeMap<String, usize> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let mut names = vec![None; map.len()];
    for (name, id) in map {
        match names.get_mut(id) {
            Some(slot @ None) => *slot = Some(name),
            _ => {
                return Err(Error::Schema(format!(
                    "{}: label ids must be 0..n without gaps",
                    path.display()
                )))
            }
        }
    }
    LabelMap::new(names.into_iter().map(Option::unwrap).collect())
}

fn read_jsonl(path: &Path) -> Result<Vec<RawRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("record is not a JSON object".into()))?;
        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err("missing string field `text`".into()))?
            .to_string();
        let (label, numeric) = match obj.get("label") {
            None | Some(Value::Null) => (None, false),
            Some(Value::String(s)) => (Some(s.clone()), false),
            Some(Value::Number(n)) => match n.as_u64() {
                Some(v) => (Some(v.to_string()), true),
                None => return Err(parse_err(format!("label {n} is not a class id"))),
            },
            Some(other) => return Err(parse_err(format!("unsupported label {other}"))),
        };
        out.push(RawRecord {
            line: line_no,
            text,
            label,
            numeric,
        });
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let text_col = headers.iter().position(|h| h == "text").ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "header has no `text` column".into(),
    })?;
    let label_col = headers.iter().position(|h| h == "label");

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let text = record
            .get(text_col)
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "missing `text`".into(),
            })?
            .to_string();
        let label = label_col
            .and_then(|c| record.get(c))
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string);
        let numeric = label.as_deref().is_some_and(|l| l.parse::<usize>().is_ok());
        out.push(RawRecord {
            line,
            text,
            label,
            numeric,
        });
    }
    Ok(out)
}

/// Writes a dataset as JSONL plus its label-map sidecar.
pub fn write_jsonl(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for doc in dataset.documents() {
        let mut rec = serde_json::Map::new();
        rec.insert("text".into(), Value::String(doc.text.clone()));
        if let Some(l) = doc.label() {
            let name = dataset.label_map().name(l).unwrap_or_default();
            rec.insert("label".into(), Value::String(name.to_string()));
        }
        serde_json::to_writer(&mut w, &Value::Object(rec))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let sidecar = File::create(label_sidecar_path(path))?;
    serde_json::to_writer_pretty(sidecar, &dataset.label_map().to_json_map())?;
    Ok(())
}
