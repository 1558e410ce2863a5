use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// First record of every file the pipeline writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config_hash: String,
}

impl Header {
    pub fn new(kind: &str, config_hash: &str) -> Self {
        Header {
            tool: "luq".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: kind.into(),
            config_hash: config_hash.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_line<T: Serialize>(w: &mut BufWriter<File>, path: &Path, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *w, value).map_err(|e| CliError::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: &Header, records: &[T]) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_line(&mut w, path, &HeaderLine { header: header.clone() })?;
    for r in records {
        write_line(&mut w, path, r)?;
    }
    finish(w, path)
}

/// Reads a JSONL file written by [`write_jsonl`], returning its header and records.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Option<Header>, Vec<T>), CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut header = None;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if n == 0 {
            if let Ok(h) = serde_json::from_str::<HeaderLine>(&line) {
                header = Some(h.header);
                continue;
            }
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), n + 1)))?;
        records.push(rec);
    }
    Ok((header, records))
}

#[derive(Serialize)]
struct WithHeader<'a, T> {
    header: &'a Header,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON object whose first key is `header`.
pub fn write_json<T: Serialize>(path: &Path, header: &Header, body: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &WithHeader { header, body }).map_err(|e| CliError::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

/// CSV with a leading `# luq <kind> config_hash=<hash>` comment line.
pub fn write_csv<T: Serialize>(path: &Path, header: &Header, rows: &[T]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "# {} {} config_hash={}", header.tool, header.kind, header.config_hash)
        .map_err(|e| CliError::io(path, e))?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        for r in rows {
            c.serialize(r).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        }
        c.flush().map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let h = Header::new("rows", "abc");
        let rows = vec![Row { a: 1, b: 0.1 }, Row { a: 2, b: 1e-17 }];
        write_jsonl(&p, &h, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("{\"header\":{\"tool\":\"luq\""));
        let (got_h, got): (_, Vec<Row>) = read_jsonl(&p).unwrap();
        assert_eq!(got_h, Some(h));
        assert_eq!(got, rows);
    }

    #[test]
    fn headers_on_json_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let h = Header::new("report", "f00");
        let j = dir.path().join("r.json");
        write_json(&j, &h, &serde_json::json!({"z": 1})).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&j).unwrap()).unwrap();
        assert_eq!(v["header"]["config_hash"], "f00");
        assert!(std::fs::read_to_string(&j).unwrap().trim_start().starts_with("{\n  \"header\""));
        let c = dir.path().join("r.csv");
        write_csv(&c, &h, &[Row { a: 3, b: 0.5 }]).unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap(), "# luq report config_hash=f00\na,b\n3,0.5\n");
    }
}
