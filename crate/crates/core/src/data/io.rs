//! JSON-Lines rollout files, one rollout per line. Paths ending in `.gz`
//! are gzip-compressed.
//!
//! ```text
//! {"id":..,"suite":..,"task":..,"label":0|1,"split":"train"|"test"?,
//!  "actions":[[7 reals]; T],"entropy":[[7 reals]; T],"logits":[[[256 reals]; 7]; T]?, ...}
//! ```
//!
//! `label` is 1 for success and 0 for failure. Unknown fields are kept as
//! rollout metadata and written back on save.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rollout::{Logits, Outcome, Rollout, Row, BINS, DOF};

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    suite: String,
    task: String,
    label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    actions: Vec<Row<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entropy: Option<Vec<Row<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logits: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

const REQUIRED: [&str; 5] = ["id", "suite", "task", "label", "actions"];

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Reads a dataset file; `.gz` paths are decompressed.
pub fn load(path: impl AsRef<Path>) -> Result<Dataset<f64>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_gzip(path) {
        read_jsonl(BufReader::new(GzDecoder::new(file)))
    } else {
        read_jsonl(BufReader::new(file))
    }
}

/// Writes a dataset file; `.gz` paths are compressed with a fixed header so
/// output bytes depend only on the dataset.
pub fn save(dataset: &Dataset<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path)?;
    if is_gzip(path) {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        write_jsonl(dataset, &mut enc)?;
        enc.finish()?.flush()?;
    } else {
        let mut w = BufWriter::new(file);
        write_jsonl(dataset, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn read_jsonl<R: Read>(reader: BufReader<R>) -> Result<Dataset<f64>> {
    let mut rollouts = Vec::new();
    let mut splits = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (rollout, split) = parse_line(&line, line_no)?;
        if let Some(s) = split {
            splits.insert(rollout.id().to_string(), s);
        }
        rollouts.push(rollout);
    }
    let ds = Dataset::new(rollouts)?;
    ds.with_splits(splits)
}

fn schema(line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { line, field: field.into(), message: message.into() }
}

fn parse_line(line: &str, line_no: usize) -> Result<(Rollout<f64>, Option<Split>)> {
    let value: Value = serde_json::from_str(line).map_err(|e| schema(line_no, "<line>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| schema(line_no, "<line>", "expected a JSON object"))?;
    for field in REQUIRED {
        if !obj.contains_key(field) {
            return Err(schema(line_no, field, "missing required field"));
        }
    }
    if !obj.contains_key("entropy") && !obj.contains_key("logits") {
        return Err(schema(line_no, "entropy", "missing required field (and no logits to derive it from)"));
    }
    let record: Record = serde_path_to_error::deserialize(value)
        .map_err(|e| schema(line_no, e.path().to_string(), e.inner().to_string()))?;

    let label = Outcome::from_label(record.label)
        .ok_or_else(|| schema(line_no, "label", format!("expected 0 or 1, got {}", record.label)))?;
    let logits = record
        .logits
        .map(|l| flatten_logits(l, line_no))
        .transpose()?;

    let as_schema = |field: &'static str| move |e: Error| schema(line_no, field, e.to_string());
    let rollout = match (record.entropy, logits) {
        (Some(entropy), None) => {
            Rollout::new(record.id, record.suite, record.task, label, record.actions, entropy).map_err(as_schema("entropy"))?
        }
        (Some(entropy), Some(logits)) => Rollout::new(record.id, record.suite, record.task, label, record.actions, entropy)
            .and_then(|r| r.with_logits(logits))
            .map_err(as_schema("entropy"))?,
        (None, Some(logits)) => Rollout::from_logits(record.id, record.suite, record.task, label, record.actions, logits)
            .map_err(as_schema("logits"))?,
        (None, None) => unreachable!("checked above"),
    };
    Ok((rollout.with_metadata(record.extra), record.split))
}

fn flatten_logits(nested: Vec<Vec<Vec<f64>>>, line_no: usize) -> Result<Logits<f64>> {
    let steps = nested.len();
    let mut flat = Vec::with_capacity(steps * DOF * BINS);
    for (t, row) in nested.into_iter().enumerate() {
        if row.len() != DOF {
            return Err(schema(line_no, format!("logits[{t}]"), format!("expected {DOF} channels, got {}", row.len())));
        }
        for (d, slice) in row.into_iter().enumerate() {
            if slice.len() != BINS {
                return Err(schema(line_no, format!("logits[{t}][{d}]"), format!("expected {BINS} bins, got {}", slice.len())));
            }
            flat.extend(slice);
        }
    }
    Logits::new(steps, flat).map_err(|e| schema(line_no, "logits", e.to_string()))
}

fn to_record(r: &Rollout<f64>, split: Option<Split>) -> Record {
    Record {
        id: r.id().to_string(),
        suite: r.suite().to_string(),
        task: r.task().to_string(),
        label: r.label().label(),
        split,
        actions: r.actions().to_vec(),
        entropy: Some(r.entropy().to_vec()),
        logits: r.logits().map(|l| {
            l.as_flat()
                .chunks(DOF * BINS)
                .map(|step| step.chunks(BINS).map(<[f64]>::to_vec).collect())
                .collect()
        }),
        extra: r.metadata().clone(),
    }
}

pub fn write_jsonl<W: Write>(dataset: &Dataset<f64>, out: &mut W) -> Result<()> {
    for r in dataset.rollouts() {
        serde_json::to_writer(&mut *out, &to_record(r, dataset.split_of(r.id())))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset<f64> {
        let entropy = vec![[0.123_456_789_012_345_6, 1.0 / 3.0, 0.0, 5.5, 2.0, 1e-300, 0.7]; 3];
        let actions = vec![[-0.1, 0.2, 0.0, -0.0, 1.0, -1.0, 1.0]; 3];
        let mut meta = Map::new();
        meta.insert("episode_seed".into(), Value::from(17));
        meta.insert("notes".into(), Value::from("kept"));
        let a = Rollout::new("a", "suite-x", "task-1", Outcome::Success, actions.clone(), entropy.clone())
            .unwrap()
            .with_metadata(meta);
        let b = Rollout::new("b", "suite-x", "task-1", Outcome::Failure, actions, entropy).unwrap();
        Dataset::new(vec![a, b]).unwrap().split(5).unwrap()
    }

    fn to_string(ds: &Dataset<f64>) -> String {
        let mut buf = Vec::new();
        write_jsonl(ds, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn parse(s: &str) -> Result<Dataset<f64>> {
        read_jsonl(BufReader::new(s.as_bytes()))
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ds = sample();
        let text = to_string(&ds);
        let back = parse(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(to_string(&back), text);
        assert_eq!(back.rollouts()[0].metadata()["notes"], "kept");
    }

    #[test]
    fn missing_label_reports_line() {
        let text = to_string(&sample());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = lines[1].replace("\"label\":0,", "");
        let err = parse(&lines.join("\n")).unwrap_err();
        match err {
            Error::Schema { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "label");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn nested_type_errors_carry_a_path() {
        let line = r#"{"id":"x","suite":"s","task":"t","label":1,"actions":[[0,0,0,0,0,0,"up"]],"entropy":[[0,0,0,0,0,0,0]]}"#;
        match parse(line).unwrap_err() {
            Error::Schema { field, .. } => assert!(field.starts_with("actions[0]"), "{field}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn entropy_out_of_range_names_coordinates() {
        let line = r#"{"id":"x","suite":"s","task":"t","label":1,"actions":[[0,0,0,0,0,0,0],[0,0,0,0,0,0,0]],"entropy":[[0,0,0,0,0,0,0],[0,0,0,9,0,0,0]]}"#;
        let err = parse(line).unwrap_err().to_string();
        assert!(err.contains("`x`") && err.contains("t=1, d=3"), "{err}");
    }

    #[test]
    fn logits_are_cross_checked() {
        let mut slice = vec![0.0; BINS];
        slice[0] = 1.0;
        let logits: Vec<Vec<Vec<f64>>> = vec![vec![slice.clone(); DOF]];
        let h = crate::rollout::softmax_entropy(&slice);
        let base = |entropy: f64| {
            serde_json::json!({
                "id": "x", "suite": "s", "task": "t", "label": 1,
                "actions": vec![[0.0; DOF]], "entropy": vec![[entropy; DOF]], "logits": logits,
            })
            .to_string()
        };
        let ds = parse(&base(h)).unwrap();
        assert!(ds.rollouts()[0].logits().is_some());
        assert!(parse(&base(h + 1e-3)).is_err());

        // entropy may be omitted when logits are present
        let derived = serde_json::json!({
            "id": "y", "suite": "s", "task": "t", "label": 0, "actions": vec![[0.0; DOF]], "logits": logits,
        })
        .to_string();
        let ds = parse(&derived).unwrap();
        assert!((ds.rollouts()[0].entropy()[0][0] - h).abs() < 1e-15);
        // and written back with the entropy filled in
        assert!(to_string(&ds).contains("\"entropy\""));
    }

    #[test]
    fn gzip_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("d.jsonl");
        let gz = dir.path().join("d.jsonl.gz");
        let ds = sample();
        save(&ds, &plain).unwrap();
        save(&ds, &gz).unwrap();
        assert_eq!(load(&plain).unwrap(), ds);
        assert_eq!(load(&gz).unwrap(), ds);
        assert_ne!(std::fs::read(&plain).unwrap(), std::fs::read(&gz).unwrap());
    }

    #[test]
    fn generated_values_survive_bit_for_bit() {
        let cfg = crate::data::SyntheticConfig { n_success: 3, n_failure: 3, ..Default::default() };
        let ds = crate::data::generate(&cfg).unwrap().split(1).unwrap();
        let back = parse(&to_string(&ds)).unwrap();
        for (a, b) in ds.rollouts().iter().zip(back.rollouts()) {
            for (x, y) in a.entropy().iter().flatten().zip(b.entropy().iter().flatten()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.actions().iter().flatten().zip(b.actions().iter().flatten()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
