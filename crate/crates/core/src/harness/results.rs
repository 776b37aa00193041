//! Result files: a fixed CSV schema and a JSON mirror of [`TrialBatchResult`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_error, Error, Result};
use crate::solvers::SolverKind;

use super::TrialBatchResult;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "n,K,k,solver,trials,successes,success_rate,mean_rel_error,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "json" => Ok(ResultFormat::Json),
            _ => Err(Error::InvalidArgument(format!("unknown format `{s}` (csv or json)"))),
        }
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    #[serde(rename = "K")]
    pub big_k: usize,
    pub k: usize,
    pub solver: SolverKind,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_rel_error: Option<f64>,
    pub seed: u64,
}

impl From<&TrialBatchResult> for ResultRow {
    fn from(r: &TrialBatchResult) -> Self {
        Self {
            n: r.n,
            big_k: r.big_k,
            k: r.k,
            solver: r.solver,
            trials: r.trials,
            successes: r.successes,
            success_rate: r.success_rate,
            mean_rel_error: r.mean_rel_error,
            seed: r.seed,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonFile {
    schema_version: u32,
    results: Vec<TrialBatchResult>,
}

fn format_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Writes `results` in order. CSV files start with a `# schema_version=`
/// comment, then the header row, even when `results` is empty.
pub fn write_results(results: &[TrialBatchResult], path: &Path, format: ResultFormat) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    match format {
        ResultFormat::Csv => {
            writeln!(out, "# schema_version={SCHEMA_VERSION}").map_err(io_error(path))?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
            w.write_record(CSV_HEADER.split(',')).map_err(|e| format_error(path, e))?;
            for r in results {
                w.serialize(ResultRow::from(r)).map_err(|e| format_error(path, e))?;
            }
            w.flush().map_err(io_error(path))?;
        }
        ResultFormat::Json => {
            let doc = JsonFile {
                schema_version: SCHEMA_VERSION,
                results: results.to_vec(),
            };
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| format_error(path, e))?;
            writeln!(out).map_err(io_error(path))?;
        }
    }
    out.flush().map_err(io_error(path))
}

/// Reads the CSV columns back (from either format).
pub fn read_results(path: &Path, format: ResultFormat) -> Result<Vec<ResultRow>> {
    match format {
        ResultFormat::Json => Ok(read_json_results(path)?.iter().map(ResultRow::from).collect()),
        ResultFormat::Csv => {
            let file = File::open(path).map_err(io_error(path))?;
            let mut reader = BufReader::new(file);
            let mut first = String::new();
            reader.read_line(&mut first).map_err(io_error(path))?;
            let version = first
                .trim()
                .strip_prefix("# schema_version=")
                .and_then(|v| v.parse::<u32>().ok())
                .ok_or_else(|| format_error(path, "missing schema version comment"))?;
            if version != SCHEMA_VERSION {
                return Err(format_error(path, format!("unsupported schema version {version}")));
            }
            let mut r = csv::Reader::from_reader(reader);
            let header: Vec<String> = r
                .headers()
                .map_err(|e| format_error(path, e))?
                .iter()
                .map(str::to_owned)
                .collect();
            if header.join(",") != CSV_HEADER {
                return Err(format_error(path, format!("unexpected header `{}`", header.join(","))));
            }
            r.deserialize().map(|row| row.map_err(|e| format_error(path, e))).collect()
        }
    }
}

/// Reads full batch records from a JSON result file.
pub fn read_json_results(path: &Path) -> Result<Vec<TrialBatchResult>> {
    let file = File::open(path).map_err(io_error(path))?;
    let doc: JsonFile = serde_json::from_reader(BufReader::new(file)).map_err(|e| format_error(path, e))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(format_error(path, format!("unsupported schema version {}", doc.schema_version)));
    }
    Ok(doc.results)
}
