//! Sample-PRI estimation and 1-D to 2-D raw-data recovery.
//!
//! The stream is first mapped coarsely using the periodicity of its
//! amplitude (spectral peak of |y|), then refined by maximizing the largest
//! eigenvalue of the mapped matrix over shrinking search windows: the 2-D
//! matrix snaps into alignment, and the reference echo becomes rank-1,
//! exactly when the trial PRI hits the true one.

use ndarray::parallel::prelude::*;
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use serde::Serialize;

use crate::dsp::{self, ComplexMatrix, ComplexVector};
use crate::error::{Error, Result};
use crate::lowrank;

/// Subset length used for the fine search by default.
pub const DEFAULT_SUBSET_LEN: usize = 100_000;

/// Parametric 1-D -> 2-D mapping configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MappingConfig {
    /// Sample PRI (samples per pulse interval, possibly fractional).
    pub sample_pri: f64,
    /// Optional cap on the number of rows formed.
    pub row_cap: Option<usize>,
}

impl MappingConfig {
    pub fn apply(&self, y: &ComplexVector) -> Result<ComplexMatrix> {
        map_with_cap(y, self.sample_pri, self.row_cap)
    }
}

pub(crate) fn row_start(l: usize, p: f64) -> usize {
    (l as f64 * p).floor() as usize
}

/// Rearrange the 1-D stream into a 2-D matrix for a given sample PRI: row l
/// starts at sample int(l*P), holds floor(P) samples, and is re-aligned by a
/// fractional shift of dec(l*P) samples so every row starts exactly on its
/// pulse interval.
pub fn map_1d_to_2d(y: &ComplexVector, p: f64) -> Result<ComplexMatrix> {
    map_with_cap(y, p, None)
}

fn map_with_cap(y: &ComplexVector, p: f64, cap: Option<usize>) -> Result<ComplexMatrix> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidArgument(format!("map_1d_to_2d: bad sample PRI {p}")));
    }
    let p_int = p.floor() as usize;
    let len = y.len();
    if len < p_int {
        return Err(Error::InsufficientData(format!(
            "stream of {len} samples is shorter than one pulse interval ({p_int})"
        )));
    }
    let mut rows = ((len - p_int) as f64 / p).floor() as usize + 1;
    if let Some(cap) = cap {
        rows = rows.min(cap);
    }
    if rows < 2 {
        return Err(Error::InsufficientData(format!(
            "stream of {len} samples holds fewer than 2 complete pulse intervals of {p:.3}"
        )));
    }
    let mut out: ComplexMatrix = Array2::default((rows, p_int));
    let result: std::result::Result<Vec<()>, Error> = out
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(l, mut row)| {
            let n_int = row_start(l, p);
            let n_dec = l as f64 * p - n_int as f64;
            let slice = y.slice(ndarray::s![n_int..n_int + p_int]);
            if n_dec == 0.0 {
                row.assign(&slice);
            } else {
                let shifted = dsp::fractional_shift(&slice.to_owned(), -n_dec)?;
                row.assign(&shifted);
            }
            Ok(())
        })
        .collect();
    result?;
    Ok(out)
}

/// Coarse sample-PRI estimate from the periodicity of the stream amplitude:
/// remove the mean of |y|, take the magnitude spectrum (4x zero-padded for
/// a finer peak neighborhood), restrict to [1/p_max, 1/p_min], locate the
/// peak, and refine it by parabolic interpolation.
pub fn coarse_pri(y: &ComplexVector, p_min: f64, p_max: f64) -> Result<f64> {
    let len = y.len();
    if !(p_min >= 2.0) {
        return Err(Error::InvalidArgument(format!("coarse_pri: p_min {p_min} < 2")));
    }
    if !(p_max > p_min) || p_max > len as f64 / 4.0 {
        return Err(Error::InvalidArgument(format!(
            "coarse_pri: p_max {p_max} outside (p_min, len/4 = {}]",
            len as f64 / 4.0
        )));
    }
    let mean = y.iter().map(|z| z.norm()).sum::<f64>() / len as f64;
    let nfft = dsp::good_fft_size(4 * len);
    let mut buf = vec![Complex64::default(); nfft];
    for (b, v) in buf.iter_mut().zip(y.iter()) {
        *b = Complex64::new(v.norm() - mean, 0.0);
    }
    dsp::fft_forward(&mut buf);
    let mags: Vec<f64> = buf.iter().take(nfft / 2).map(|z| z.norm()).collect();

    let lo = ((nfft as f64 / p_max).ceil() as usize).max(1);
    let hi = ((nfft as f64 / p_min).floor() as usize).min(mags.len() - 1);
    if lo >= hi {
        return Err(Error::InvalidArgument("coarse_pri: empty search band".into()));
    }
    let band = &mags[lo..=hi];
    let (peak_off, &peak) = band
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty band");
    let mut sorted: Vec<f64> = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    // 6 dB above the in-band median, or there is no periodic line to trust;
    // the absolute floor rejects the rounding dust a constant |y| leaves
    let floor = 1e-10 * mean * len as f64;
    if !(peak > floor) || peak < median * 10f64.powf(6.0 / 20.0) {
        return Err(Error::NoPeriodicity);
    }
    let bin = lo + peak_off;
    let delta = if bin > 0 && bin + 1 < mags.len() {
        let (a, b, c) = (mags[bin - 1], mags[bin], mags[bin + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(nfft as f64 / (bin as f64 + delta))
}

/// One fine-search stage: the window half-width and grid spacing used, the
/// objective curve over the candidate grid, and whether the maximum sat on
/// a window endpoint (a too-small-window warning).
#[derive(Debug, Clone, Serialize)]
pub struct StageCurve {
    pub window: f64,
    pub spacing: f64,
    pub candidates: Vec<f64>,
    pub objectives: Vec<f64>,
    pub best: f64,
    pub endpoint_max: bool,
}

/// Full PRI estimation trace.
#[derive(Debug, Clone, Serialize)]
pub struct PriEstimate {
    /// Coarse estimate the fine search started from.
    pub coarse: f64,
    /// Best candidate of each stage.
    pub stage_estimates: Vec<f64>,
    /// Final estimate (last stage's best).
    #[serde(rename = "final")]
    pub final_pri: f64,
    /// (window, spacing) actually used per stage.
    pub stage_windows: Vec<(f64, f64)>,
    /// Objective curves for diagnostics.
    pub stage_curves: Vec<StageCurve>,
}

/// Default three-stage schedule: windows 3, 0.3, 0.03 samples with grid
/// spacings 0.1, 0.01, 0.001.
pub fn default_schedule() -> Vec<(f64, f64)> {
    vec![(3.0, 0.1), (0.3, 0.01), (0.03, 0.001)]
}

/// Staged grid search for the sample PRI: each stage scans
/// `center +/- window` with its spacing, scoring each candidate by the
/// largest squared singular value of the mean-removed mapped matrix
/// (rank-1 principal component). The argmax becomes the next stage center;
/// ties break toward the lower candidate.
pub fn fine_pri(y_sub: &ComplexVector, p0: f64, schedule: &[(f64, f64)]) -> Result<PriEstimate> {
    if !(p0.is_finite() && p0 > 1.0) {
        return Err(Error::InvalidArgument(format!("fine_pri: bad initial PRI {p0}")));
    }
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("fine_pri: empty schedule".into()));
    }
    for (i, &(w, dp)) in schedule.iter().enumerate() {
        if !(dp > 0.0 && dp < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fine_pri: stage {i} grid spacing {dp} must be in (0, 1)"
            )));
        }
        if !(w >= dp) {
            return Err(Error::InvalidArgument(format!(
                "fine_pri: stage {i} window {w} smaller than its spacing {dp}"
            )));
        }
        if i > 0 && w >= schedule[i - 1].0 {
            return Err(Error::InvalidArgument(
                "fine_pri: stage windows must shrink strictly".into(),
            ));
        }
    }

    let mut center = p0;
    let mut stage_curves = Vec::with_capacity(schedule.len());
    let mut stage_estimates = Vec::with_capacity(schedule.len());
    for &(w, dp) in schedule {
        let m = (w / dp).round() as isize;
        let candidates: Vec<f64> =
            (-m..=m).map(|i| center + i as f64 * dp).filter(|&p| p > 1.0).collect();
        if candidates.is_empty() {
            return Err(Error::InsufficientData("fine_pri: no valid candidates".into()));
        }
        // shared row cap so every candidate scores a matrix of equal height
        let p_hi = candidates.last().copied().unwrap();
        let cap_rows = {
            let p_int = p_hi.floor() as usize;
            if y_sub.len() < p_int {
                0
            } else {
                ((y_sub.len() - p_int) as f64 / p_hi).floor() as usize + 1
            }
        };
        let objectives: Vec<f64> = candidates
            .par_iter()
            .map(|&p| match map_with_cap(y_sub, p, Some(cap_rows)) {
                Ok(mut mat) => {
                    let mean = mat.iter().sum::<Complex64>() / mat.len() as f64;
                    mat.mapv_inplace(|z| z - mean);
                    lowrank::dominant_sigma_sq(&mat.view()).unwrap_or(f64::NAN)
                }
                Err(_) => f64::NAN,
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, &obj) in objectives.iter().enumerate() {
            if obj.is_nan() {
                continue;
            }
            match best {
                Some((_, b)) if obj <= b => {}
                _ => best = Some((i, obj)),
            }
        }
        let (best_i, _) = best.ok_or_else(|| {
            Error::InsufficientData("fine_pri: mapping failed at every grid point".into())
        })?;
        let endpoint_max = best_i == 0 || best_i + 1 == candidates.len();
        if endpoint_max {
            log::warn!(
                "fine_pri: objective peaked at a window endpoint (P = {:.4}); window may be too small",
                candidates[best_i]
            );
        }
        center = candidates[best_i];
        stage_estimates.push(center);
        stage_curves.push(StageCurve {
            window: w,
            spacing: dp,
            candidates,
            objectives,
            best: center,
            endpoint_max,
        });
    }
    Ok(PriEstimate {
        coarse: p0,
        final_pri: center,
        stage_estimates,
        stage_windows: schedule.to_vec(),
        stage_curves,
    })
}
