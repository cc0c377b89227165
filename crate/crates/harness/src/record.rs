use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use tvl_core::datagen::{describe, CorpusRecord, Scenario};
use tvl_core::tvl::{parse_tvl, VisType};

use crate::HarnessError;

/// One dataset line: a question and its gold TVL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(default)]
    pub question: String,
    pub tvl: String,
    pub vis_type: VisType,
    #[serde(default = "normal")]
    pub scenario: Scenario,
}

fn normal() -> Scenario {
    Scenario::Normal
}

impl DatasetRecord {
    /// The TVL id shared by all questions about one statement: the part of
    /// the record id before `#`.
    pub fn tvl_id(&self) -> &str {
        self.id.split('#').next().unwrap_or(&self.id)
    }
}

/// Reads line-delimited JSON, skipping blank lines. Corpus lines without
/// `question`/`scenario` load with an empty question and `normal`.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::BadRecord { line: i + 1, reason: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| HarnessError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Turns a corpus into question records, one per applicable scenario, with
/// ids `<tvl id>#1`, `#2`, ...
pub fn questions_for(corpus: &[CorpusRecord]) -> Result<Vec<DatasetRecord>, HarnessError> {
    let mut out = Vec::new();
    for (i, rec) in corpus.iter().enumerate() {
        let q = parse_tvl(&rec.tvl).map_err(|e| HarnessError::BadRecord { line: i + 1, reason: e.to_string() })?;
        for (j, scenario) in Scenario::applicable(&q).into_iter().enumerate() {
            out.push(DatasetRecord {
                id: format!("{}#{}", rec.id, j + 1),
                question: describe(&q, scenario, i + j),
                tvl: rec.tvl.clone(),
                vis_type: rec.vis_type,
                scenario,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_lines_load_with_defaults() {
        let line = r#"{"id":"tvl-00001","vis_type":"map","tvl":"VISUALIZE map AREA \"A\" SQL SELECT latitude FROM traj_data"}"#;
        let recs = read_jsonl(line.as_bytes()).unwrap();
        assert_eq!(recs[0].scenario, Scenario::Normal);
        assert_eq!(recs[0].tvl_id(), "tvl-00001");
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn questions_per_scenario() {
        let corpus = vec![CorpusRecord {
            id: "tvl-00007".into(),
            vis_type: VisType::Map,
            tvl: "VISUALIZE map AREA \"Miyun District, Beijing\" TIME \"2010-01-01 00:00:00\" TO \"2010-02-01 00:00:00\" SQL SELECT latitude FROM traj_data".into(),
        }];
        let qs = questions_for(&corpus).unwrap();
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[2].id, "tvl-00007#3");
        assert_eq!(qs[2].scenario, Scenario::Time);
        assert!(qs.iter().all(|r| r.tvl_id() == "tvl-00007" && !r.question.is_empty()));
    }

    #[test]
    fn bad_line_reports_position() {
        let err = read_jsonl("\n{\"id\": 1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, HarnessError::BadRecord { line: 2, .. }));
    }
}
