//! On-disk layout of a finished run.
//!
//! ```text
//! <dir>/config.json
//! <dir>/generations/gen_001.jsonl   one audit line per individual
//! <dir>/pool.jsonl                  pre-selection pool (surrogate_ps only)
//! <dir>/result.json                 complete RunResult
//! <dir>/summary.json                deterministic summary, no timing
//! <dir>/timing.json
//! <dir>/champion.genotype
//! <dir>/champion.checkpoint.json    real evaluator only
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::{RunOutput, RunResult};
use crate::error::{Error, Result};
use crate::management::AuditLine;
use crate::nn::checkpoint;
use crate::report::Summary;

pub const SUMMARY_FILE: &str = "summary.json";
pub const RESULT_FILE: &str = "result.json";
pub const CHECKPOINT_FILE: &str = "champion.checkpoint.json";

fn file_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| file_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| file_error(path, e))
}

fn jsonl<T: serde::Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn summary_json(result: &RunResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Summary::of(result))? + "\n")
}

pub fn generation_log_path(dir: &Path, generation: usize) -> PathBuf {
    dir.join("generations").join(format!("gen_{generation:03}.jsonl"))
}

pub fn write_run_dir(dir: &Path, output: &RunOutput) -> Result<()> {
    let result = &output.result;
    fs::create_dir_all(dir.join("generations")).map_err(|e| file_error(dir, e))?;
    write_atomic(
        &dir.join("config.json"),
        (serde_json::to_string_pretty(&result.config)? + "\n").as_bytes(),
    )?;
    for g in &result.generations {
        let lines = jsonl(g.individuals.iter().map(AuditLine::from))?;
        write_atomic(&generation_log_path(dir, g.generation), lines.as_bytes())?;
    }
    if !result.pool.is_empty() {
        write_atomic(&dir.join("pool.jsonl"), jsonl(&result.pool)?.as_bytes())?;
    }
    write_atomic(&dir.join(RESULT_FILE), serde_json::to_string(result)?.as_bytes())?;
    write_atomic(&dir.join(SUMMARY_FILE), summary_json(result)?.as_bytes())?;
    write_atomic(
        &dir.join("timing.json"),
        (serde_json::to_string_pretty(&result.timing)? + "\n").as_bytes(),
    )?;
    if let Some(c) = &result.champion {
        write_atomic(&dir.join("champion.genotype"), c.genotype.serialize().as_bytes())?;
    }
    if let Some(trained) = &output.checkpoint {
        write_atomic(&dir.join(CHECKPOINT_FILE), checkpoint::to_json(trained).as_bytes())?;
    }
    Ok(())
}

/// Reads `result.json`; errors name the offending file.
pub fn read_run_dir(dir: &Path) -> Result<RunResult> {
    let path = dir.join(RESULT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| file_error(&path, e))?;
    let result: RunResult = serde_json::from_str(&text).map_err(|e| file_error(&path, e))?;
    let expected_logs = result.generations.len();
    for g in 1..=expected_logs {
        let log = generation_log_path(dir, g);
        if !log.is_file() {
            return Err(file_error(&log, "missing generation log"));
        }
    }
    Ok(result)
}
