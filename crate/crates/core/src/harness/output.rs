use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ScenarioConfig;
use super::montecarlo::PointResult;
use crate::error::config_err;
use crate::Result;

pub const CSV_HEADER: [&str; 11] =
    ["scenario", "ebn0_db", "phn_var", "em_iter", "ber", "fer", "ci95", "frames", "bit_errors", "frame_errors", "seed"];

/// Six significant digits, stable across runs.
fn fmt6(v: f64) -> String {
    format!("{v:.5e}")
}

/// One row per (point, receiver iteration).
pub fn write_csv<W: Write>(results: &[PointResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        for (i, s) in r.per_iter.iter().enumerate() {
            w.write_record([
                r.scenario.name().to_string(),
                fmt6(r.ebn0_db),
                fmt6(r.phn_var),
                (i + 1).to_string(),
                fmt6(s.ber),
                fmt6(s.fer),
                fmt6(s.ci95_ber),
                s.frames_counted.to_string(),
                s.bit_errors.to_string(),
                s.frame_errors.to_string(),
                r.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_name: &'static str,
    crate_version: &'static str,
    config: &'a ScenarioConfig,
    code_block_len: usize,
    code_info_len: usize,
    frame_len: usize,
    points: usize,
}

/// Writes `<stem>.csv` and `<stem>.manifest.json` next to each other and
/// returns both paths.
pub fn emit_results(results: &[PointResult], cfg: &ScenarioConfig, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if results.is_empty() {
        return Err(config_err("no results to emit"));
    }
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let csv_path = stem.with_extension("csv");
    write_csv(results, std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    let link = cfg.build_link()?;
    let manifest = Manifest {
        crate_name: env!("CARGO_PKG_NAME"),
        crate_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        code_block_len: link.code.block_len(),
        code_info_len: link.code.info_len(),
        frame_len: link.layout.frame_len,
        points: results.len(),
    };
    let manifest_path = stem.with_extension("manifest.json");
    let mut f = std::fs::File::create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok((csv_path, manifest_path))
}
