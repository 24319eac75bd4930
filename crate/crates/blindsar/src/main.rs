//! Command-line front end for the blind SAR toolkit.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use blindsar::error::{Error, Result};
use blindsar::pipeline::{run_pipeline, PipelineConfig};
use blindsar::raw::{self, Payload};
use blindsar::{lowrank, pri, scene_file, sim};

#[derive(Parser)]
#[command(
    name = "blindsar",
    about = "Blind SAR image formation: focused images from raw echo data without system parameters",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Raw cf32 data file.
    #[arg(long)]
    data: PathBuf,
    /// JSON sidecar header.
    #[arg(long)]
    header: PathBuf,
}

#[derive(clap::Args)]
struct PcmArgs {
    /// Block rows for PCM segmentation.
    #[arg(long, default_value_t = 500)]
    block_rows: usize,
    /// Block columns for PCM segmentation.
    #[arg(long, default_value_t = 500)]
    block_cols: usize,
    /// Row stride (default: block rows, no overlap).
    #[arg(long)]
    stride_rows: Option<usize>,
    /// Column stride (default: block columns, no overlap).
    #[arg(long)]
    stride_cols: Option<usize>,
    /// Principal-component dimension D.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Disable Frobenius block normalization.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(clap::Args)]
struct FocusArgs {
    /// Range blocks for the FM-rate profile.
    #[arg(long, default_value_t = 8)]
    m_blk: usize,
    /// Multilook factors, "AZxRG" (e.g. 2x2) or "auto".
    #[arg(long, default_value = "auto")]
    looks: String,
    /// Output dynamic range in dB.
    #[arg(long, default_value_t = 40.0)]
    dynamic_range_db: f64,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize raw data from a plain-text scene description.
    Simulate {
        /// Scene description file.
        #[arg(long)]
        scene: PathBuf,
        /// Output raw data path.
        #[arg(long)]
        out_data: PathBuf,
        /// Output header path.
        #[arg(long)]
        out_header: PathBuf,
        /// Emit the 1-D sample stream instead of the 2-D matrix.
        #[arg(long)]
        stream: bool,
    },
    /// Estimate the sample PRI of a 1-D stream (coarse + fine).
    EstimatePri {
        #[command(flatten)]
        data: DataArgs,
        /// Minimum sample PRI of the coarse search band.
        #[arg(long)]
        p_min: Option<f64>,
        /// Maximum sample PRI of the coarse search band.
        #[arg(long)]
        p_max: Option<f64>,
        /// Fine-search schedule, "WINDOW:SPACING,..." per stage.
        #[arg(long)]
        schedule: Option<String>,
        /// Stream samples used for the fine search.
        #[arg(long, default_value_t = pri::DEFAULT_SUBSET_LEN)]
        subset: usize,
        /// Where to write the JSON trace (stdout when omitted).
        #[arg(long)]
        out_trace: Option<PathBuf>,
        /// Directory for per-stage objective CSV curves.
        #[arg(long)]
        out_curves: Option<PathBuf>,
    },
    /// Focus an already-2-D dataset (PCM + both focus paths).
    Focus {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pcm: PcmArgs,
        #[command(flatten)]
        focus: FocusArgs,
    },
    /// Eigenvalue spectrum of a 2-D dataset (CSV to stdout or a file).
    Spectrum {
        #[command(flatten)]
        data: DataArgs,
        /// Number of leading eigenvalues.
        #[arg(long, default_value_t = 100)]
        top_k: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full blind pipeline: (PRI ->) PCM -> both focus paths.
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pcm: PcmArgs,
        #[command(flatten)]
        focus: FocusArgs,
        /// Minimum sample PRI of the coarse search band.
        #[arg(long)]
        p_min: Option<f64>,
        /// Maximum sample PRI of the coarse search band.
        #[arg(long)]
        p_max: Option<f64>,
        /// Fine-search schedule, "WINDOW:SPACING,..." per stage.
        #[arg(long)]
        schedule: Option<String>,
        /// Stream samples used for the fine search.
        #[arg(long, default_value_t = pri::DEFAULT_SUBSET_LEN)]
        subset: usize,
    },
}

fn parse_schedule(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|stage| {
            let (w, dp) = stage
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("bad schedule stage '{stage}'")))?;
            let w = w.trim().parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("bad schedule window '{w}'"))
            })?;
            let dp = dp.trim().parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("bad schedule spacing '{dp}'"))
            })?;
            Ok((w, dp))
        })
        .collect()
}

fn parse_looks(text: &str) -> Result<Option<(usize, usize)>> {
    if text == "auto" {
        return Ok(None);
    }
    let (a, r) = text
        .split_once('x')
        .ok_or_else(|| Error::InvalidArgument(format!("bad looks '{text}', expected AZxRG or auto")))?;
    let a = a.parse().map_err(|_| Error::InvalidArgument(format!("bad looks '{text}'")))?;
    let r = r.parse().map_err(|_| Error::InvalidArgument(format!("bad looks '{text}'")))?;
    Ok(Some((a, r)))
}

fn build_config(
    pcm: &PcmArgs,
    focus: &FocusArgs,
    p_min: Option<f64>,
    p_max: Option<f64>,
    schedule: &Option<String>,
    subset: usize,
) -> Result<PipelineConfig> {
    let mut config = PipelineConfig {
        block_rows: pcm.block_rows,
        block_cols: pcm.block_cols,
        stride_rows: pcm.stride_rows,
        stride_cols: pcm.stride_cols,
        rank: pcm.rank,
        normalize: !pcm.no_normalize,
        m_blk: focus.m_blk,
        looks: parse_looks(&focus.looks)?,
        dynamic_range_db: focus.dynamic_range_db,
        pri_subset: subset,
        ..PipelineConfig::default()
    };
    if let (Some(lo), Some(hi)) = (p_min, p_max) {
        config.pri_band = Some((lo, hi));
    }
    if let Some(text) = schedule {
        config.pri_schedule = parse_schedule(text)?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scene, out_data, out_header, stream } => {
            let text = std::fs::read_to_string(&scene)?;
            let scene = scene_file::parse_scene(&text)?;
            let y = sim::simulate_scene(&scene)?;
            let truth = scene_file::ground_truth_json(&scene);
            if stream {
                let p = scene.geometry.sample_pri();
                let s = sim::flatten_to_stream(&y, p)?;
                raw::write_raw_stream(&s, &out_data, &out_header, Some(truth))?;
                log::info!("wrote {} stream samples (P = {p:.3})", s.len());
            } else {
                raw::write_raw_matrix(&y, &out_data, &out_header, Some(truth))?;
                log::info!("wrote {}x{} matrix", y.nrows(), y.ncols());
            }
            Ok(())
        }
        Command::EstimatePri { data, p_min, p_max, schedule, subset, out_trace, out_curves } => {
            let dataset = raw::read_raw(&data.data, &data.header)?;
            let y = match dataset.payload {
                Payload::Stream(y) => y,
                Payload::Matrix(_) => {
                    return Err(Error::InvalidArgument(
                        "estimate-pri expects a 1-D stream; this dataset is 2-D".into(),
                    ))
                }
            };
            let band_lo = p_min.unwrap_or(64.0);
            let band_hi = p_max.unwrap_or((y.len() as f64 / 8.0).max(65.0));
            let coarse = pri::coarse_pri(&y, band_lo, band_hi)?;
            let sched = match &schedule {
                Some(t) => parse_schedule(t)?,
                None => pri::default_schedule(),
            };
            let subset_len = subset.min(y.len());
            let sub = y.slice(ndarray::s![..subset_len]).to_owned();
            let estimate = pri::fine_pri(&sub, coarse, &sched)?;
            let json = serde_json::to_string_pretty(&estimate)?;
            match out_trace {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            if let Some(dir) = out_curves {
                std::fs::create_dir_all(&dir)?;
                for (q, stage) in estimate.stage_curves.iter().enumerate() {
                    let mut body = String::from("p,objective\n");
                    for (p, obj) in stage.candidates.iter().zip(stage.objectives.iter()) {
                        body.push_str(&format!("{p:.6},{obj:.12e}\n"));
                    }
                    std::fs::write(dir.join(format!("pri_stage_{}.csv", q + 1)), body)?;
                }
            }
            log::info!("final sample PRI: {:.4}", estimate.final_pri);
            Ok(())
        }
        Command::Focus { data, pcm, focus } => {
            let dataset = raw::read_raw(&data.data, &data.header)?;
            if matches!(dataset.payload, Payload::Stream(_)) {
                return Err(Error::InvalidArgument(
                    "focus expects a 2-D dataset; run `pipeline` for 1-D streams".into(),
                ));
            }
            let config = build_config(&pcm, &focus, None, None, &None, pri::DEFAULT_SUBSET_LEN)?;
            let report = run_pipeline(&dataset, &config, &focus.out_dir)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Spectrum { data, top_k, out } => {
            let dataset = raw::read_raw(&data.data, &data.header)?;
            let m = match dataset.payload {
                Payload::Matrix(m) => m,
                Payload::Stream(_) => {
                    return Err(Error::InvalidArgument(
                        "spectrum expects a 2-D dataset".into(),
                    ))
                }
            };
            let k = top_k.min(m.nrows().min(m.ncols()));
            let spec = lowrank::eigenspectrum(&m.view(), k)?;
            let mut body = String::from("index,eigenvalue\n");
            for (i, v) in spec.values.iter().enumerate() {
                body.push_str(&format!("{},{v:.12e}\n", i + 1));
            }
            match out {
                Some(path) => std::fs::write(path, body)?,
                None => print!("{body}"),
            }
            Ok(())
        }
        Command::Pipeline { data, pcm, focus, p_min, p_max, schedule, subset } => {
            let dataset = raw::read_raw(&data.data, &data.header)?;
            let config = build_config(&pcm, &focus, p_min, p_max, &schedule, subset)?;
            let report = run_pipeline(&dataset, &config, &focus.out_dir)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(workers) = std::env::var("BLINDSAR_WORKERS") {
        match workers.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not set worker count: {e}");
                }
            }
            _ => log::warn!("ignoring invalid BLINDSAR_WORKERS value '{workers}'"),
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
