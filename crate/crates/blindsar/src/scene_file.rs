//! Plain-text scene descriptions for the simulator.
//!
//! One `key = value` pair per line, `#` comments. Repeated `target` /
//! `target_cell` lines add point scatterers. Example:
//!
//! ```text
//! pulses = 512
//! samples = 512
//! speed = 150.0
//! wavelength = 0.055517
//! center_range = 12000.0
//! sample_rate = 60.0e6
//! prf = 120.0
//! chirp_rate = 1.0e13
//! pulse_duration = 5.0e-6
//! antenna_length = 6.0
//! noise_power = 0.01
//! seed = 7
//! clutter = flat 0.05
//! target_cell = 256, 256, 1.0, 0.0
//! ```
//!
//! `target = x, r, re, im` places a scatterer at azimuth position x (m) and
//! closest slant range r (m); `target_cell = row, col, re, im` pins it to a
//! grid cell. `clutter` is `none`, `flat P`, or `step LEFT RIGHT [FRACTION]`
//! (two power levels split along fast time at the given column fraction,
//! default 0.5). `eta_start`/`tau_start` override the default centered
//! window.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{ClutterField, Geometry, PointTarget, SceneGrid, SimulatedScene};

#[derive(Default)]
struct Builder {
    pulses: Option<usize>,
    samples: Option<usize>,
    speed: Option<f64>,
    propagation_speed: Option<f64>,
    wavelength: Option<f64>,
    center_range: Option<f64>,
    sample_rate: Option<f64>,
    prf: Option<f64>,
    chirp_rate: Option<f64>,
    pulse_duration: Option<f64>,
    antenna_length: Option<f64>,
    eta_start: Option<f64>,
    tau_start: Option<f64>,
    noise_power: Option<f64>,
    seed: Option<u64>,
    clutter: Option<ClutterSpec>,
    targets: Vec<TargetSpec>,
}

enum ClutterSpec {
    None,
    Flat(f64),
    Step(f64, f64, f64),
}

enum TargetSpec {
    Physical { x: f64, r: f64, amp: Complex64 },
    Cell { row: usize, col: usize, amp: Complex64 },
}

fn bad(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("scene file line {line_no}: {msg}"))
}

fn parse_f64(line_no: usize, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| bad(line_no, format!("bad number '{}'", s.trim())))
}

fn split_numbers(line_no: usize, s: &str, n: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| parse_f64(line_no, p))
        .collect::<Result<_>>()?;
    if parts.len() != n {
        return Err(bad(line_no, format!("expected {n} comma-separated values")));
    }
    Ok(parts)
}

/// Parse a scene description into a [`SimulatedScene`].
pub fn parse_scene(text: &str) -> Result<SimulatedScene> {
    let mut b = Builder::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line_no, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "pulses" => b.pulses = Some(parse_f64(line_no, value)? as usize),
            "samples" => b.samples = Some(parse_f64(line_no, value)? as usize),
            "speed" => b.speed = Some(parse_f64(line_no, value)?),
            "propagation_speed" => b.propagation_speed = Some(parse_f64(line_no, value)?),
            "wavelength" => b.wavelength = Some(parse_f64(line_no, value)?),
            "center_range" => b.center_range = Some(parse_f64(line_no, value)?),
            "sample_rate" => b.sample_rate = Some(parse_f64(line_no, value)?),
            "prf" => b.prf = Some(parse_f64(line_no, value)?),
            "chirp_rate" => b.chirp_rate = Some(parse_f64(line_no, value)?),
            "pulse_duration" => b.pulse_duration = Some(parse_f64(line_no, value)?),
            "antenna_length" => b.antenna_length = Some(parse_f64(line_no, value)?),
            "eta_start" => b.eta_start = Some(parse_f64(line_no, value)?),
            "tau_start" => b.tau_start = Some(parse_f64(line_no, value)?),
            "noise_power" => b.noise_power = Some(parse_f64(line_no, value)?),
            "seed" => {
                b.seed =
                    Some(value.parse::<u64>().map_err(|_| bad(line_no, "bad seed"))?)
            }
            "clutter" => {
                let mut it = value.split_whitespace();
                let kind = it.next().unwrap_or("");
                b.clutter = Some(match kind {
                    "none" => ClutterSpec::None,
                    "flat" => {
                        let p = parse_f64(line_no, it.next().ok_or_else(|| bad(line_no, "flat needs a power"))?)?;
                        ClutterSpec::Flat(p)
                    }
                    "step" => {
                        let l = parse_f64(line_no, it.next().ok_or_else(|| bad(line_no, "step needs two powers"))?)?;
                        let r = parse_f64(line_no, it.next().ok_or_else(|| bad(line_no, "step needs two powers"))?)?;
                        let frac = match it.next() {
                            Some(f) => parse_f64(line_no, f)?,
                            None => 0.5,
                        };
                        if !(0.0..=1.0).contains(&frac) {
                            return Err(bad(line_no, "step fraction must be in [0, 1]"));
                        }
                        ClutterSpec::Step(l, r, frac)
                    }
                    other => return Err(bad(line_no, format!("unknown clutter kind '{other}'"))),
                });
            }
            "target" => {
                let v = split_numbers(line_no, value, 4)?;
                b.targets.push(TargetSpec::Physical {
                    x: v[0],
                    r: v[1],
                    amp: Complex64::new(v[2], v[3]),
                });
            }
            "target_cell" => {
                let v = split_numbers(line_no, value, 4)?;
                if v[0] < 0.0 || v[1] < 0.0 {
                    return Err(bad(line_no, "target_cell indices must be non-negative"));
                }
                b.targets.push(TargetSpec::Cell {
                    row: v[0] as usize,
                    col: v[1] as usize,
                    amp: Complex64::new(v[2], v[3]),
                });
            }
            other => return Err(bad(line_no, format!("unknown key '{other}'"))),
        }
    }

    let require = |name: &str, v: Option<f64>| -> Result<f64> {
        v.ok_or_else(|| Error::InvalidArgument(format!("scene file: missing '{name}'")))
    };
    let geometry = Geometry {
        v: require("speed", b.speed)?,
        c: b.propagation_speed.unwrap_or(299_792_458.0),
        lambda: require("wavelength", b.wavelength)?,
        r0_scene: require("center_range", b.center_range)?,
        fs: require("sample_rate", b.sample_rate)?,
        prf: require("prf", b.prf)?,
        kr: require("chirp_rate", b.chirp_rate)?,
        tp: require("pulse_duration", b.pulse_duration)?,
        la: require("antenna_length", b.antenna_length)?,
    };
    geometry.validate()?;
    let pulses = b
        .pulses
        .ok_or_else(|| Error::InvalidArgument("scene file: missing 'pulses'".into()))?;
    let samples = b
        .samples
        .ok_or_else(|| Error::InvalidArgument("scene file: missing 'samples'".into()))?;
    let mut grid = SceneGrid::centered(&geometry, pulses, samples);
    if let Some(e) = b.eta_start {
        grid.eta_start = e;
    }
    if let Some(t) = b.tau_start {
        grid.tau_start = t;
    }

    let targets: Vec<PointTarget> = b
        .targets
        .iter()
        .map(|spec| match *spec {
            TargetSpec::Physical { x, r, amp } => PointTarget { x, r, amplitude: amp },
            TargetSpec::Cell { row, col, amp } => grid.target_at(&geometry, row, col, amp),
        })
        .collect();

    let clutter = match b.clutter {
        None | Some(ClutterSpec::None) => None,
        Some(ClutterSpec::Flat(p)) => Some(ClutterField::flat(p, pulses, samples)?),
        Some(ClutterSpec::Step(l, r, frac)) => Some(ClutterField::step_cols(
            l,
            r,
            (frac * samples as f64).round() as usize,
            pulses,
            samples,
        )?),
    };

    Ok(SimulatedScene {
        geometry,
        targets,
        clutter,
        noise_power: b.noise_power.unwrap_or(0.0),
        grid,
        seed: b.seed.unwrap_or(0),
    })
}

/// Ground-truth JSON stored alongside simulated data.
pub fn ground_truth_json(scene: &SimulatedScene) -> serde_json::Value {
    serde_json::json!({
        "geometry": scene.geometry,
        "grid": scene.grid,
        "targets": scene.targets,
        "noise_power": scene.noise_power,
        "seed": scene.seed,
        "sample_pri": scene.geometry.sample_pri(),
    })
}
