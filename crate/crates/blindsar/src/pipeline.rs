//! Batch orchestration: raw data in, images and diagnostics out.
//!
//! 1-D input runs coarse + fine PRI estimation and is mapped to 2-D; 2-D
//! input skips that. PCM estimates the reference echo, matched filtering
//! forms the uncorrected image, and the range-varying FM-rate correction
//! produces the corrected one. If the correction cannot be estimated the
//! pipeline logs a warning and emits the uncorrected image in its place.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::azfocus::{self, SarImage};
use crate::dsp::ComplexMatrix;
use crate::error::{Error, Result};
use crate::pcm::{self, BlockGrid};
use crate::pgm;
use crate::pri::{self, PriEstimate};
use crate::raw::{Payload, RawDataset};

/// Everything the CLI exposes, one field per flag.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub block_rows: usize,
    pub block_cols: usize,
    /// Default: no overlap (stride = block).
    pub stride_rows: Option<usize>,
    pub stride_cols: Option<usize>,
    /// Principal-component dimension D.
    pub rank: usize,
    /// Frobenius normalization of blocks before scoring.
    pub normalize: bool,
    /// Coarse-search band; default [64, len/8].
    pub pri_band: Option<(f64, f64)>,
    pub pri_schedule: Vec<(f64, f64)>,
    /// Samples of the stream used for the fine search.
    pub pri_subset: usize,
    /// Range blocks for the FM-rate profile.
    pub m_blk: usize,
    /// Multilook factors; None picks them from the measured resolutions.
    pub looks: Option<(usize, usize)>,
    pub dynamic_range_db: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            block_rows: 500,
            block_cols: 500,
            stride_rows: None,
            stride_cols: None,
            rank: 1,
            normalize: true,
            pri_band: None,
            pri_schedule: pri::default_schedule(),
            pri_subset: pri::DEFAULT_SUBSET_LEN,
            m_blk: 8,
            looks: None,
            dynamic_range_db: 40.0,
        }
    }
}

/// Summary of one pipeline run plus the paths of everything written.
#[derive(Debug, serde::Serialize)]
pub struct PipelineReport {
    pub pri: Option<PriEstimate>,
    pub reference_block: (usize, usize),
    pub reference_origin: (usize, usize),
    pub reference_score: f64,
    pub correction_applied: bool,
    pub looks: (usize, usize),
    pub uncorrected_image: PathBuf,
    pub corrected_image: PathBuf,
    pub score_map_csv: PathBuf,
    pub fm_profile_csv: Option<PathBuf>,
    pub pri_trace_json: Option<PathBuf>,
    pub pri_curve_csvs: Vec<PathBuf>,
}

fn write_pri_outputs(
    estimate: &PriEstimate,
    out_dir: &Path,
) -> Result<(PathBuf, Vec<PathBuf>)> {
    let trace_path = out_dir.join("pri_trace.json");
    std::fs::write(&trace_path, serde_json::to_string_pretty(estimate)?)?;
    let mut curves = Vec::new();
    for (q, stage) in estimate.stage_curves.iter().enumerate() {
        let path = out_dir.join(format!("pri_stage_{}.csv", q + 1));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "p,objective")?;
        for (p, obj) in stage.candidates.iter().zip(stage.objectives.iter()) {
            writeln!(w, "{p:.6},{obj:.12e}")?;
        }
        curves.push(path);
    }
    Ok((trace_path, curves))
}

/// Multilook factors that make image pixels roughly square, from the
/// measured -3 dB widths of the strongest response: the broader axis gets
/// averaged down toward the finer one.
fn auto_looks(img: &SarImage) -> (usize, usize) {
    let mag = &img.magnitude;
    let mut peak = (0usize, 0usize);
    let mut best = 0.0f64;
    for ((i, j), &v) in mag.indexed_iter() {
        if v > best {
            best = v;
            peak = (i, j);
        }
    }
    if best <= 0.0 {
        return (1, 1);
    }
    let col: Vec<f64> = mag.column(peak.1).to_vec();
    let row: Vec<f64> = mag.row(peak.0).to_vec();
    let w_az = azfocus::half_power_width(&col).unwrap_or(1.0).max(1.0);
    let w_rg = azfocus::half_power_width(&row).unwrap_or(1.0).max(1.0);
    let ratio = w_az / w_rg;
    if ratio >= 1.0 {
        ((ratio.round() as usize).clamp(1, 8), 1)
    } else {
        (1, ((1.0 / ratio).round() as usize).clamp(1, 8))
    }
}

/// Run the full blind pipeline and write all artifacts into `out_dir`.
pub fn run_pipeline(
    dataset: &RawDataset,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<PipelineReport> {
    std::fs::create_dir_all(out_dir)?;

    // 1-D input: estimate the sample PRI and rebuild the 2-D matrix
    let (matrix, pri_estimate): (ComplexMatrix, Option<PriEstimate>) = match &dataset.payload {
        Payload::Matrix(m) => (m.clone(), None),
        Payload::Stream(y) => {
            let (p_min, p_max) = config
                .pri_band
                .unwrap_or((64.0, (y.len() as f64 / 8.0).max(65.0)));
            let coarse = pri::coarse_pri(y, p_min, p_max)?;
            log::info!("coarse sample PRI: {coarse:.3}");
            let subset_len = config.pri_subset.min(y.len());
            let subset = y.slice(ndarray::s![..subset_len]).to_owned();
            let estimate = pri::fine_pri(&subset, coarse, &config.pri_schedule)?;
            log::info!("fine sample PRI: {:.4}", estimate.final_pri);
            let matrix = pri::map_1d_to_2d(y, estimate.final_pri)?;
            (matrix, Some(estimate))
        }
    };

    let (pri_trace_json, pri_curve_csvs) = match &pri_estimate {
        Some(est) => {
            let (t, c) = write_pri_outputs(est, out_dir)?;
            (Some(t), c)
        }
        None => (None, Vec::new()),
    };

    // reference echo via PCM; block sizes clamp to the data
    let block_rows = config.block_rows.min(matrix.nrows());
    let block_cols = config.block_cols.min(matrix.ncols());
    if block_rows < config.block_rows || block_cols < config.block_cols {
        log::info!("block size clamped to {}x{} for this dataset", block_rows, block_cols);
    }
    let grid = BlockGrid::new(
        block_rows,
        block_cols,
        config.stride_rows.unwrap_or(block_rows).min(block_rows),
        config.stride_cols.unwrap_or(block_cols).min(block_cols),
    )?;
    let (reference, scores) = pcm::estimate_reference_echo(&matrix, &grid, config.rank, config.normalize)?;
    log::info!(
        "reference echo from block {:?} at {:?}, g = {:.4e}",
        reference.source.index,
        reference.block_origin,
        reference.source.g
    );
    let score_map_csv = out_dir.join("score_map.csv");
    scores.to_csv(BufWriter::new(File::create(&score_map_csv)?))?;

    // both focus paths
    let uncorrected = azfocus::form_image(&matrix, &reference)?;
    let (corrected, profile, correction_applied) =
        match azfocus::focus_corrected(&matrix, &reference, config.m_blk) {
            Ok((img, profile)) => (img, Some(profile), true),
            Err(e @ (Error::InsufficientBlocks { .. } | Error::NoSignal | Error::NonConvergence { .. })) => {
                log::warn!("azimuth correction failed ({e}); emitting the uncorrected image instead");
                (uncorrected.clone(), None, false)
            }
            Err(e) => return Err(e),
        };
    let fm_profile_csv = match &profile {
        Some(p) => {
            let path = out_dir.join("fm_profile.csv");
            p.to_csv(BufWriter::new(File::create(&path)?))?;
            Some(path)
        }
        None => None,
    };

    let looks = config.looks.unwrap_or_else(|| auto_looks(&uncorrected));
    let uncorrected_looked = azfocus::multilook(&uncorrected, looks.0, looks.1)?;
    let corrected_looked = azfocus::multilook(&corrected, looks.0, looks.1)?;

    let uncorrected_image = out_dir.join("uncorrected.pgm");
    let corrected_image = out_dir.join("corrected.pgm");
    pgm::write_image(&uncorrected_looked, &uncorrected_image, config.dynamic_range_db)?;
    pgm::write_image(&corrected_looked, &corrected_image, config.dynamic_range_db)?;

    Ok(PipelineReport {
        pri: pri_estimate,
        reference_block: reference.source.index,
        reference_origin: reference.block_origin,
        reference_score: reference.source.g,
        correction_applied,
        looks,
        uncorrected_image,
        corrected_image,
        score_map_csv,
        fm_profile_csv,
        pri_trace_json,
        pri_curve_csvs,
    })
}
