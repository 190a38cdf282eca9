//! Response-file ingestion: CSV and JSONL readers for binary responses.
//!
//! Both formats carry the same four fields per response —
//! `responder_id,item_id,dataset_id,correct` with `correct` in `{0, 1}` —
//! and feed [`ResponseMatrix::from_records`], which enforces completeness,
//! duplicate rejection, and one-dataset-per-item. Responders and items keep
//! first-appearance order, so the same file always yields the same matrix.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use headroom_core::{ResponseMatrix, ResponseRecord};
use serde::Deserialize;

use crate::errors::CliError;

/// Input file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Comma-separated with header `responder_id,item_id,dataset_id,correct`.
    Csv,
    /// One JSON object per line with those same four keys.
    Jsonl,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

/// Expected CSV header, in order.
pub const CSV_HEADER: [&str; 4] = ["responder_id", "item_id", "dataset_id", "correct"];

/// Reads and validates a response file into a complete matrix.
pub fn parse_responses(path: &Path, format: Format) -> Result<ResponseMatrix, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let records = match format {
        Format::Csv => csv_records(file)?,
        Format::Jsonl => jsonl_records(BufReader::new(file))?,
    };
    ResponseMatrix::from_records(records).map_err(|e| CliError::input(e.to_string()))
}

fn parse_correct(raw: &str, line: u64) -> Result<bool, CliError> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CliError::input(format!(
            "line {line}: correct must be 0 or 1, got \"{other}\""
        ))),
    }
}

fn csv_records(reader: impl Read) -> Result<Vec<ResponseRecord>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::input(format!("unreadable CSV header: {e}")))?;
    if headers.iter().ne(CSV_HEADER) {
        return Err(CliError::input(format!(
            "expected CSV header \"{}\", got \"{}\"",
            CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::input(format!("bad CSV record: {e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != CSV_HEADER.len() {
            return Err(CliError::input(format!(
                "line {line}: expected {} fields, got {}",
                CSV_HEADER.len(),
                row.len()
            )));
        }
        records.push(ResponseRecord {
            responder: row[0].to_string(),
            item: row[1].to_string(),
            dataset: row[2].to_string(),
            correct: parse_correct(&row[3], line)?,
        });
    }
    Ok(records)
}

/// One JSONL row; unknown keys are rejected so typos do not pass silently.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRow {
    responder_id: String,
    item_id: String,
    dataset_id: String,
    correct: i64,
}

fn jsonl_records(reader: impl BufRead) -> Result<Vec<ResponseRecord>, CliError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = (idx + 1) as u64;
        let text = line.map_err(|e| CliError::input(format!("line {line_no}: unreadable: {e}")))?;
        if text.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("line {line_no}: {e}")))?;
        if row.correct != 0 && row.correct != 1 {
            return Err(CliError::input(format!(
                "line {line_no}: correct must be 0 or 1, got {}",
                row.correct
            )));
        }
        records.push(ResponseRecord {
            responder: row.responder_id,
            item: row.item_id,
            dataset: row.dataset_id,
            correct: row.correct == 1,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_csv(text: &str) -> Result<Vec<ResponseRecord>, CliError> {
        csv_records(text.as_bytes())
    }

    fn parse_jsonl(text: &str) -> Result<Vec<ResponseRecord>, CliError> {
        jsonl_records(text.as_bytes())
    }

    #[test]
    fn minimal_csv_matrix_parses() {
        let text = "responder_id,item_id,dataset_id,correct\n\
                    r1,a,X,1\nr1,b,X,0\nr2,a,X,0\nr2,b,X,1\n";
        let records = parse_csv(text).unwrap();
        assert_eq!(records.len(), 4);
        let matrix = ResponseMatrix::from_records(records).unwrap();
        assert_eq!(matrix.n_responders(), 2);
        assert_eq!(matrix.n_items(), 2);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let err = parse_csv("responder,item,dataset,correct\nr1,a,X,1\n").unwrap_err();
        assert!(err.to_string().contains("expected CSV header"), "{err}");
    }

    #[test]
    fn bad_correct_value_reports_line_number() {
        let text = "responder_id,item_id,dataset_id,correct\nr1,a,X,1\nr2,a,X,2\n";
        let err = parse_csv(text).unwrap_err();
        assert_eq!(
            err.to_string(),
            "error[input]: line 3: correct must be 0 or 1, got \"2\""
        );
    }

    #[test]
    fn short_row_reports_line_number() {
        let text = "responder_id,item_id,dataset_id,correct\nr1,a,X\n";
        let err = parse_csv(text).unwrap_err();
        // The csv crate itself flags unequal row lengths; the line must appear.
        assert!(err.to_string().contains("3"), "{err}");
    }

    #[test]
    fn jsonl_roundtrips_and_validates_correct() {
        let good = "{\"responder_id\":\"r1\",\"item_id\":\"a\",\"dataset_id\":\"X\",\"correct\":1}\n\
                    {\"responder_id\":\"r2\",\"item_id\":\"a\",\"dataset_id\":\"X\",\"correct\":0}\n";
        let records = parse_jsonl(good).unwrap();
        assert!(records[0].correct);
        assert!(!records[1].correct);

        let bad =
            "{\"responder_id\":\"r1\",\"item_id\":\"a\",\"dataset_id\":\"X\",\"correct\":5}\n";
        let err = parse_jsonl(bad).unwrap_err();
        assert_eq!(
            err.to_string(),
            "error[input]: line 1: correct must be 0 or 1, got 5"
        );
    }

    #[test]
    fn jsonl_unknown_key_is_rejected_with_line() {
        let text = "{\"responder_id\":\"r1\",\"item_id\":\"a\",\"dataset_id\":\"X\",\"correct\":1,\"extra\":2}\n";
        let err = parse_jsonl(text).unwrap_err();
        assert!(
            err.to_string().starts_with("error[input]: line 1:"),
            "{err}"
        );
    }

    #[test]
    fn shuffled_rows_give_first_appearance_order() {
        let a = "responder_id,item_id,dataset_id,correct\n\
                 r2,b,X,1\nr1,a,X,1\nr1,b,X,0\nr2,a,X,0\n";
        let matrix = ResponseMatrix::from_records(parse_csv(a).unwrap()).unwrap();
        assert_eq!(matrix.responder_ids(), ["r2", "r1"]);
        assert_eq!(matrix.item_ids(), ["b", "a"]);
    }
}
