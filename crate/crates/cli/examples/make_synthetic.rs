//! Writes a synthetic dataset and matching factuality labels.
//!
//! cargo run -p luq-cli --example make_synthetic -- <out-dir> [questions] [world-seed] [models...]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use luq_cli::records::DatasetRow;
use luq_core::synthetic::SyntheticWorld;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let count: usize = args.next().map_or(20, |s| s.parse().expect("question count"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("world seed"));
    let mut models: Vec<String> = args.collect();
    if models.is_empty() {
        models = vec!["synth-alpha".into(), "synth-beta".into(), "synth-gamma".into()];
    }

    let world = SyntheticWorld::new(seed);
    let queries = world.queries(count);
    std::fs::create_dir_all(&out)?;

    let mut w = BufWriter::new(File::create(out.join("queries.jsonl"))?);
    for q in &queries {
        let row = DatasetRow {
            id: q.id.clone(),
            entity: q.entity.clone(),
            prompt: None,
            frequency_label: q.frequency_label,
        };
        writeln!(w, "{}", serde_json::to_string(&row)?)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(out.join("factuality.jsonl"))?);
    for m in &models {
        for rec in world.factuality_records(m, &queries) {
            writeln!(w, "{}", serde_json::to_string(&rec)?)?;
        }
    }
    w.flush()
}
