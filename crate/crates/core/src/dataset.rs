//! Dataset ingestion (JSONL / CSV) and head/torso/tail partitioning.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{Bucket, QARecord};

pub const DEFAULT_ALIAS_DELIMITER: &str = "||";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    /// Guesses from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(DatasetFormat::Jsonl),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

fn split_aliases(cell: &str, delimiter: &str) -> Vec<String> {
    cell.split(delimiter)
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_json_line(line: &str, delimiter: &str) -> std::result::Result<QARecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("line is not a JSON object")?;
    let text = |field: &str| -> std::result::Result<String, String> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(format!("field {field:?} must be a string")),
            None => Err(format!("missing required field {field:?}")),
        }
    };
    let answers = match obj.get("answers") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| "answers must contain strings".to_string())
            })
            .collect::<std::result::Result<Vec<_>, _>>()?,
        Some(Value::String(s)) => split_aliases(s, delimiter),
        Some(_) => return Err("field \"answers\" must be an array or string".into()),
        None => return Err("missing required field \"answers\"".into()),
    };
    let popularity = match obj.get("popularity") {
        Some(Value::Number(n)) => n.as_f64().ok_or("popularity is not representable")?,
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("popularity {s:?}: {e}"))?,
        Some(_) => return Err("field \"popularity\" must be a number".into()),
        None => return Err("missing required field \"popularity\"".into()),
    };
    let bucket = match obj.get("bucket") {
        None | Some(Value::Null) => Bucket::Unassigned,
        Some(Value::String(s)) => Bucket::from_str(s).map_err(|e| e.to_string())?,
        Some(_) => return Err("field \"bucket\" must be a string".into()),
    };
    Ok(QARecord {
        record_id: text("record_id")?,
        question: text("question")?,
        prompt: text("prompt")?,
        answers,
        entity_id: text("entity_id")?,
        popularity,
        bucket,
    })
}

/// Loads and validates a dataset. Blank JSONL lines are skipped.
pub fn load_dataset(path: &Path, format: DatasetFormat, alias_delimiter: &str) -> Result<Vec<QARecord>> {
    let parsed = match format {
        DatasetFormat::Jsonl => load_jsonl(path, alias_delimiter)?,
        DatasetFormat::Csv => load_csv(path, alias_delimiter)?,
    };
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::with_capacity(parsed.len());
    for (line, record) in parsed {
        record.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if let Some(&first_line) = seen.get(&record.record_id) {
            return Err(Error::DuplicateRecord {
                path: path.to_path_buf(),
                record_id: record.record_id,
                first_line,
                second_line: line,
            });
        }
        seen.insert(record.record_id.clone(), line);
        records.push(record);
    }
    Ok(records)
}

fn load_jsonl(path: &Path, delimiter: &str) -> Result<Vec<(usize, QARecord)>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_json_line(&line, delimiter).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

fn load_csv(path: &Path, delimiter: &str) -> Result<Vec<(usize, QARecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = ["record_id", "question", "prompt", "answers", "entity_id", "popularity"];
    let mut idx = HashMap::new();
    for name in required {
        let col = column(name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing required column {name:?}"),
        })?;
        idx.insert(name, col);
    }
    let bucket_col = column("bucket");

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let cell = |name: &str| row.get(idx[name]).unwrap_or("");
        let popularity_cell = cell("popularity").trim();
        if popularity_cell.is_empty() {
            return Err(err("missing required field \"popularity\"".into()));
        }
        let popularity = popularity_cell
            .parse::<f64>()
            .map_err(|e| err(format!("popularity {popularity_cell:?}: {e}")))?;
        let bucket = match bucket_col.and_then(|c| row.get(c)) {
            Some(b) => Bucket::from_str(b).map_err(|e| err(e.to_string()))?,
            None => Bucket::Unassigned,
        };
        out.push((
            line,
            QARecord {
                record_id: cell("record_id").to_string(),
                question: cell("question").to_string(),
                prompt: cell("prompt").to_string(),
                answers: split_aliases(cell("answers"), delimiter),
                entity_id: cell("entity_id").to_string(),
                popularity,
                bucket,
            },
        ));
    }
    Ok(out)
}

/// `ceil(fraction * n)`, snapping products within 1e-9 of an integer so that
/// e.g. 0.1 * 30 yields 3 rather than 4.
fn bucket_size(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let nearest = raw.round();
    let size = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (size.max(0.0) as usize).min(n)
}

/// Assigns head/torso/tail by ranking entities (not records) by popularity.
///
/// Entities sort by popularity descending, then entity id ascending. The top
/// `ceil(head_fraction * E)` are head, the next `ceil(torso_fraction * E)`
/// torso, the rest tail. An entity's popularity is the maximum over its records.
pub fn partition_by_popularity(
    records: &[QARecord],
    head_fraction: f64,
    torso_fraction: f64,
) -> Result<Vec<QARecord>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if !(head_fraction > 0.0 && head_fraction <= 1.0)
        || !(0.0..1.0).contains(&torso_fraction)
        || head_fraction + torso_fraction > 1.0 + 1e-12
    {
        return Err(Error::Config(format!(
            "invalid bucket fractions head={head_fraction} torso={torso_fraction}"
        )));
    }
    let mut popularity: BTreeMap<&str, f64> = BTreeMap::new();
    for r in records {
        if !r.popularity.is_finite() || r.popularity < 0.0 {
            return Err(Error::InvalidRecord {
                record_id: r.record_id.clone(),
                message: "popularity must be a finite non-negative number".into(),
            });
        }
        let p = popularity.entry(r.entity_id.as_str()).or_insert(r.popularity);
        *p = p.max(r.popularity);
    }
    let mut entities: Vec<(&str, f64)> = popularity.into_iter().collect();
    entities.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let total = entities.len();
    let head = bucket_size(head_fraction, total);
    let torso = bucket_size(torso_fraction, total).min(total - head);
    let assignment: HashMap<&str, Bucket> = entities
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let bucket = if i < head {
                Bucket::Head
            } else if i < head + torso {
                Bucket::Torso
            } else {
                Bucket::Tail
            };
            (*id, bucket)
        })
        .collect();

    Ok(records
        .iter()
        .map(|r| QARecord {
            bucket: assignment[r.entity_id.as_str()],
            ..r.clone()
        })
        .collect())
}

/// Writes records as JSONL in the given order, `bucket` included.
pub fn write_dataset_jsonl(path: &Path, records: &[QARecord]) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Entity counts per bucket.
pub fn entity_bucket_counts(records: &[QARecord]) -> BTreeMap<Bucket, usize> {
    let entities: BTreeMap<&str, Bucket> = records
        .iter()
        .map(|r| (r.entity_id.as_str(), r.bucket))
        .collect();
    let mut counts = BTreeMap::new();
    for b in entities.values() {
        *counts.entry(*b).or_insert(0) += 1;
    }
    counts
}
