//! Image formation with the estimated reference echo, plus range-varying
//! azimuth FM-rate estimation and quadratic-phase-error correction.
//!
//! Nothing here reads the simulator's geometry: focusing sees only the data
//! matrix and the estimated [`ReferenceEcho`]. Rates are expressed in
//! normalized units of cycles/sample^2 (the physical rate divided by the
//! squared PRF).

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::Write;

use crate::dsp::{self, ComplexMatrix};
use crate::error::{Error, Result};
use crate::pcm::ReferenceEcho;

/// Rate estimates below this confidence are excluded from profile fitting.
pub const CONFIDENCE_THRESHOLD: f64 = 0.2;

/// Lines used per block for rate estimation; the strongest columns carry
/// the estimate, the rest only add cost.
const MAX_RATE_LINES: usize = 64;

/// Candidate grid size for the self-rate probe and per-block searches.
const RATE_GRID_POINTS: usize = 201;

/// A focused image: complex pixels, display magnitude, and the multilook
/// factors applied to the magnitude. `complex` always stays at full
/// resolution; `magnitude` is |complex| until [`multilook`] replaces it
/// with the incoherently averaged version.
#[derive(Debug, Clone)]
pub struct SarImage {
    pub complex: ComplexMatrix,
    pub magnitude: Array2<f64>,
    pub looks: (usize, usize),
}

impl SarImage {
    fn from_complex(complex: ComplexMatrix) -> Self {
        let magnitude = complex.mapv(|z| z.norm());
        SarImage { complex, magnitude, looks: (1, 1) }
    }
}

/// Per-range-block normalized azimuth FM rates and the fitted polynomial
/// model over range cells (affine by default).
#[derive(Debug, Clone, serde::Serialize)]
pub struct FmRateProfile {
    /// Range-cell centers of the estimation blocks.
    pub centers: Vec<f64>,
    /// Estimated normalized rates (cycles/sample^2) per block.
    pub rates: Vec<f64>,
    /// Per-block quality metric in [0, 1].
    pub confidences: Vec<f64>,
    /// Fit coefficients, lowest order first: K(m) = fit[0] + fit[1] m + ...
    pub fit: Vec<f64>,
    /// Weighted RMS residual of the accepted blocks against the fit.
    pub residual: f64,
}

impl FmRateProfile {
    pub fn evaluate(&self, m: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.fit.iter().rev() {
            acc = acc * m + c;
        }
        acc
    }

    /// CSV rows of (center, rate, confidence, fitted).
    pub fn to_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "center,rate,confidence,fitted")?;
        for i in 0..self.centers.len() {
            writeln!(
                out,
                "{},{:.9e},{:.4},{:.9e}",
                self.centers[i],
                self.rates[i],
                self.confidences[i],
                self.evaluate(self.centers[i])
            )?;
        }
        Ok(())
    }
}

/// Predicted azimuth defocus for a scatterer `dr` meters from the
/// reference range.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DefocusPrediction {
    /// Smearing time span (s).
    pub time_span: f64,
    /// Number of azimuth resolution elements the response spreads over.
    pub resolution_elements: f64,
    /// Azimuth bandwidth (Hz).
    pub azimuth_bandwidth: f64,
    /// Residual azimuth FM rate (Hz/s); infinite at dr = 0.
    pub residual_rate: f64,
}

/// Matched-filter image: correlate the data with the reference echo. The
/// correlation is anchored on the reference echo's envelope center, so the
/// reference scatterer (and, by shift invariance, everything else) maps
/// onto its own data cell.
pub fn form_image(y: &ComplexMatrix, reference: &ReferenceEcho) -> Result<SarImage> {
    let complex = dsp::xcorr2_anchored(y, &reference.matrix, reference.anchor)?;
    Ok(SarImage::from_complex(complex))
}

/// Estimate the normalized azimuth FM rate shared by a set of azimuth
/// lines: grid-search candidate rates, dechirp every line, and score by the
/// summed peak spectral energy; the argmax is refined by parabolic
/// interpolation. Returns (rate, confidence).
pub fn estimate_fm_rate_block(
    lines: &ArrayView2<Complex64>,
    k_range: (f64, f64),
    grid_points: usize,
) -> Result<(f64, f64)> {
    let (k_lo, k_hi) = k_range;
    if !(k_lo < k_hi) || !k_lo.is_finite() || !k_hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "estimate_fm_rate_block: bad rate range ({k_lo}, {k_hi})"
        )));
    }
    if grid_points < 3 {
        return Err(Error::InvalidArgument("estimate_fm_rate_block: need >= 3 grid points".into()));
    }
    let n = lines.nrows();
    if n < 8 || lines.ncols() == 0 {
        return Err(Error::InvalidArgument("estimate_fm_rate_block: too few samples".into()));
    }
    if lines.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::NoSignal);
    }
    let eval_grid = |lo: f64, step: f64| -> Vec<f64> {
        let center = (n as f64 - 1.0) / 2.0;
        let nfft = dsp::good_fft_size(2 * n);
        (0..grid_points)
            .into_par_iter()
            .map(|i| {
                let k = lo + i as f64 * step;
                // common dechirp ramp for every line
                let ramp: Vec<Complex64> = (0..n)
                    .map(|nn| {
                        let t = nn as f64 - center;
                        Complex64::from_polar(1.0, -PI * k * t * t)
                    })
                    .collect();
                let mut score = 0.0f64;
                let mut buf = vec![Complex64::default(); nfft];
                for col in lines.columns() {
                    buf.iter_mut().for_each(|z| *z = Complex64::default());
                    for ((b, v), r) in buf.iter_mut().zip(col.iter()).zip(ramp.iter()) {
                        *b = v * r;
                    }
                    dsp::fft_forward(&mut buf);
                    let peak = buf.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
                    score += peak;
                }
                score
            })
            .collect()
    };

    let mut lo = k_lo;
    let mut step = (k_hi - k_lo) / (grid_points - 1) as f64;
    let mut scores = eval_grid(lo, step);
    let mut best_i = argmax(&scores);

    // confidence comes from the wide first pass: contrast of the peak over
    // the in-band median
    let confidence = {
        let peak = scores[best_i];
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        if peak > 0.0 {
            ((peak - median) / peak).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };

    // the score peak is ~2/n^2 wide; zoom deterministically until the grid
    // resolves it, then refine with a parabola
    let width = 2.0 / (n * n) as f64;
    for _ in 0..6 {
        if step <= width / 10.0 {
            break;
        }
        let center = lo + best_i as f64 * step;
        let half = 2.0 * step;
        lo = center - half;
        step = 2.0 * half / (grid_points - 1) as f64;
        scores = eval_grid(lo, step);
        best_i = argmax(&scores);
    }

    let delta = if best_i > 0 && best_i + 1 < grid_points {
        let (a, b, c) = (scores[best_i - 1], scores[best_i], scores[best_i + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok((lo + (best_i as f64 + delta) * step, confidence))
}

fn argmax(scores: &[f64]) -> usize {
    scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

/// Confidence-weighted affine fit of per-block rates over range cells.
pub fn fit_fm_rate_profile(centers: &[f64], rates: &[f64], confidences: &[f64]) -> Result<FmRateProfile> {
    fit_fm_rate_profile_with_order(centers, rates, confidences, 1)
}

/// Same as [`fit_fm_rate_profile`] with a configurable polynomial order
/// (1 to 3). Blocks below [`CONFIDENCE_THRESHOLD`] are excluded.
pub fn fit_fm_rate_profile_with_order(
    centers: &[f64],
    rates: &[f64],
    confidences: &[f64],
    order: usize,
) -> Result<FmRateProfile> {
    if centers.len() != rates.len() || centers.len() != confidences.len() {
        return Err(Error::InvalidArgument("fit_fm_rate_profile: length mismatch".into()));
    }
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("fit_fm_rate_profile: order {order} not in 1..=3")));
    }
    let accepted: Vec<usize> = (0..centers.len())
        .filter(|&i| confidences[i] >= CONFIDENCE_THRESHOLD && rates[i].is_finite())
        .collect();
    if accepted.len() < 2 || accepted.len() < order + 1 {
        return Err(Error::InsufficientBlocks { accepted: accepted.len() });
    }

    // scaled abscissa for conditioning; coefficients mapped back afterwards
    let m0 = accepted.iter().map(|&i| centers[i]).sum::<f64>() / accepted.len() as f64;
    let spread = accepted
        .iter()
        .map(|&i| (centers[i] - m0).abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let dim = order + 1;
    let mut ata = vec![vec![0.0f64; dim]; dim];
    let mut atb = vec![0.0f64; dim];
    for &i in &accepted {
        let w = confidences[i];
        let x = (centers[i] - m0) / spread;
        let mut pow = vec![1.0f64; dim];
        for p in 1..dim {
            pow[p] = pow[p - 1] * x;
        }
        for a in 0..dim {
            for b in 0..dim {
                ata[a][b] += w * pow[a] * pow[b];
            }
            atb[a] += w * pow[a] * rates[i];
        }
    }
    let scaled = solve_dense(&mut ata, &mut atb)?;

    // expand K(x) with x = (m - m0)/s into raw powers of m
    let mut fit = vec![0.0f64; dim];
    for (p, &cp) in scaled.iter().enumerate() {
        // cp * ((m - m0)/s)^p
        let sp = spread.powi(p as i32);
        for q in 0..=p {
            let binom = binomial(p, q);
            fit[q] += cp / sp * binom * (-m0).powi((p - q) as i32);
        }
    }

    let mut num = 0.0;
    let mut den = 0.0;
    let eval = |coeffs: &[f64], m: f64| coeffs.iter().rev().fold(0.0, |acc, &c| acc * m + c);
    for &i in &accepted {
        let w = confidences[i];
        let r = eval(&fit, centers[i]) - rates[i];
        num += w * r * r;
        den += w;
    }
    Ok(FmRateProfile {
        centers: centers.to_vec(),
        rates: rates.to_vec(),
        confidences: confidences.to_vec(),
        fit,
        residual: (num / den).sqrt(),
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidArgument("fit_fm_rate_profile: singular normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Contiguous region around the peak of |u1| above 10% of its maximum,
/// forced to odd length so the kernel anchor is its exact center.
fn support_window(u: &Array1<Complex64>) -> (usize, usize) {
    let mags: Vec<f64> = u.iter().map(|z| z.norm()).collect();
    let (peak, max) =
        mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, &m)| (i, m)).unwrap();
    let thr = 0.1 * max;
    let mut lo = peak;
    while lo > 0 && mags[lo - 1] >= thr {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < mags.len() && mags[hi + 1] >= thr {
        hi += 1;
    }
    if (hi - lo) % 2 != 0 {
        if hi + 1 < mags.len() {
            hi += 1;
        } else if lo > 0 {
            lo -= 1;
        }
    }
    (lo, hi)
}

/// Three-step corrected focusing: (1) range-compress with the reference's
/// fast-time factor, (2) estimate the normalized azimuth FM rate per range
/// block and fit the range-varying profile, (3) azimuth-compress every
/// range cell with its own quadratic reference, anchored like the 2-D path.
///
/// Errors from the rate fit (fewer than 2 confident blocks) propagate; the
/// caller may fall back to [`form_image`].
pub fn focus_corrected(
    y: &ComplexMatrix,
    reference: &ReferenceEcho,
    m_blk: usize,
) -> Result<(SarImage, FmRateProfile)> {
    if m_blk < 2 {
        return Err(Error::InvalidArgument("focus_corrected: need at least 2 range blocks".into()));
    }
    let triplet = reference
        .triplets
        .first()
        .ok_or_else(|| Error::InvalidArgument("focus_corrected: reference has no triplets".into()))?;

    // 1: range compression with the reference's fast-time factor
    let yr = dsp::xcorr_rows_anchored(y, &triplet.v, reference.anchor.1)?;
    let cols = yr.ncols();
    if cols < m_blk {
        return Err(Error::InvalidArgument("focus_corrected: more blocks than range cells".into()));
    }

    // azimuth support and self rate of the reference
    let (sup_lo, sup_hi) = support_window(&triplet.u);
    let n_sup = sup_hi - sup_lo + 1;
    if n_sup < 8 || n_sup > yr.nrows() {
        return Err(Error::NoSignal);
    }
    let k_nyq = 1.0 / n_sup as f64;
    let self_lines = triplet
        .u
        .slice(ndarray::s![sup_lo..=sup_hi])
        .to_owned()
        .insert_axis(Axis(1));
    let (k_self, self_conf) =
        estimate_fm_rate_block(&self_lines.view(), (-k_nyq, k_nyq), RATE_GRID_POINTS)?;

    // search band: a factor of three around the reference's own rate when
    // that sweep is meaningful, the full unaliased band otherwise
    let sweep_cells = k_self.abs() * (n_sup * n_sup) as f64;
    let k_range = if self_conf >= CONFIDENCE_THRESHOLD && sweep_cells >= 2.0 {
        let (a, b) = (k_self / 3.0, k_self * 3.0);
        (a.min(b), a.max(b))
    } else {
        (-k_nyq, k_nyq)
    };

    // 2: per-block rate estimation on the strongest azimuth lines
    let bounds: Vec<(usize, usize)> =
        (0..m_blk).map(|i| (i * cols / m_blk, ((i + 1) * cols / m_blk).min(cols))).collect();
    let mut centers = Vec::with_capacity(m_blk);
    let mut rates = Vec::with_capacity(m_blk);
    let mut confidences = Vec::with_capacity(m_blk);
    for &(c0, c1) in &bounds {
        let block = yr.slice(ndarray::s![.., c0..c1]);
        let mut energies: Vec<(usize, f64)> = block
            .columns()
            .into_iter()
            .enumerate()
            .map(|(i, col)| (i, col.iter().map(|z| z.norm_sqr()).sum()))
            .collect();
        energies.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut keep: Vec<usize> =
            energies.iter().take(MAX_RATE_LINES).filter(|(_, e)| *e > 0.0).map(|&(i, _)| i).collect();
        keep.sort_unstable();
        centers.push((c0 + c1 - 1) as f64 / 2.0);
        if keep.is_empty() {
            rates.push(f64::NAN);
            confidences.push(0.0);
            continue;
        }
        let mut sel: ComplexMatrix = Array2::default((yr.nrows(), keep.len()));
        for (j, &src) in keep.iter().enumerate() {
            sel.column_mut(j).assign(&block.column(src));
        }
        match estimate_fm_rate_block(&sel.view(), k_range, RATE_GRID_POINTS) {
            Ok((k, conf)) => {
                rates.push(k);
                confidences.push(conf);
            }
            Err(Error::NoSignal) => {
                rates.push(f64::NAN);
                confidences.push(0.0);
            }
            Err(e) => return Err(e),
        }
    }

    // 3: fit and azimuth-compress per range cell
    let profile = fit_fm_rate_profile(&centers, &rates, &confidences)?;
    let anchor = (n_sup - 1) / 2;
    let mut out: ComplexMatrix = Array2::default(yr.dim());
    let columns_result: std::result::Result<Vec<()>, Error> = out
        .axis_iter_mut(Axis(1))
        .into_par_iter()
        .enumerate()
        .map(|(m, mut ocol)| {
            let k = profile.evaluate(m as f64);
            // below one resolution cell of quadratic sweep there is nothing
            // to compress; the matched filter degenerates to identity
            if !k.is_finite() || k.abs() * ((n_sup * n_sup) as f64) < 1.0 {
                ocol.assign(&yr.column(m));
                return Ok(());
            }
            let kernel: Array1<Complex64> = Array1::from_iter((0..n_sup).map(|i| {
                let t = i as f64 - anchor as f64;
                Complex64::from_polar(1.0, PI * k * t * t)
            }));
            let col = yr.column(m);
            let compressed = dsp::xcorr1_anchored(&col, &kernel.view(), anchor)?;
            ocol.assign(&compressed);
            Ok(())
        })
        .collect();
    columns_result?;
    Ok((SarImage::from_complex(out), profile))
}

/// -3 dB width of a magnitude profile around its peak, in samples, with
/// linear interpolation at the crossings. Returns None when the profile
/// never drops below half power on either side.
pub fn half_power_width(profile: &[f64]) -> Option<f64> {
    let (peak_i, &peak) =
        profile.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if peak <= 0.0 {
        return None;
    }
    let half = peak / 2f64.sqrt();
    let mut left = None;
    for i in (0..peak_i).rev() {
        if profile[i] < half {
            let frac = (half - profile[i]) / (profile[i + 1] - profile[i]);
            left = Some(i as f64 + frac);
            break;
        }
    }
    let mut right = None;
    for i in peak_i + 1..profile.len() {
        if profile[i] < half {
            let frac = (profile[i - 1] - half) / (profile[i - 1] - profile[i]);
            right = Some((i - 1) as f64 + frac);
            break;
        }
    }
    Some(right? - left?)
}

/// Azimuth defocus prediction for a scatterer `dr` meters off the
/// reference range.
pub fn predict_defocus(lambda: f64, v: f64, la: f64, dr: f64) -> DefocusPrediction {
    assert!(lambda > 0.0 && v > 0.0 && la > 0.0 && dr >= 0.0, "predict_defocus: bad arguments");
    let s = dsp::sinc(lambda / (2.0 * la));
    let b_a = 2.0 * v / la * s;
    let residual_rate = if dr > 0.0 { 2.0 * v * v / (lambda * dr) } else { f64::INFINITY };
    let time_span = if dr > 0.0 { b_a / residual_rate + 1.0 / b_a } else { 1.0 / b_a };
    let resolution_elements = 2.0 * lambda * dr / (la * la) * s * s + 1.0;
    DefocusPrediction { time_span, resolution_elements, azimuth_bandwidth: b_a, residual_rate }
}

/// Incoherent multilooking: non-overlapping box average of the squared
/// magnitude, then square root. The complex image stays full-resolution.
pub fn multilook(img: &SarImage, looks_az: usize, looks_rg: usize) -> Result<SarImage> {
    if looks_az == 0 || looks_rg == 0 {
        return Err(Error::InvalidArgument("multilook: zero look factor".into()));
    }
    let (rows, cols) = img.magnitude.dim();
    if looks_az > rows || looks_rg > cols {
        return Err(Error::InvalidArgument(format!(
            "multilook: {looks_az}x{looks_rg} looks exceed {rows}x{cols} image"
        )));
    }
    if (looks_az, looks_rg) == (1, 1) {
        return Ok(img.clone());
    }
    let out_rows = rows / looks_az;
    let out_cols = cols / looks_rg;
    let mut magnitude = Array2::zeros((out_rows, out_cols));
    for i in 0..out_rows {
        for j in 0..out_cols {
            let mut acc = 0.0;
            for a in 0..looks_az {
                for b in 0..looks_rg {
                    acc += img.magnitude[[i * looks_az + a, j * looks_rg + b]].powi(2);
                }
            }
            magnitude[[i, j]] = (acc / (looks_az * looks_rg) as f64).sqrt();
        }
    }
    Ok(SarImage {
        complex: img.complex.clone(),
        magnitude,
        looks: (img.looks.0 * looks_az, img.looks.1 * looks_rg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcm::{estimate_reference_echo, BlockGrid};
    use crate::sim::{Geometry, SceneGrid, SimulatedScene};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn reference_from_point_echo() -> (ReferenceEcho, Geometry, SceneGrid) {
        let geom = Geometry::c_band_stripmap();
        let grid = SceneGrid::centered(&geom, 384, 640);
        let target = grid.target_at(&geom, 192, 320, Complex64::new(1.0, 0.0));
        let scene = SimulatedScene {
            geometry: geom.clone(),
            targets: vec![target],
            clutter: None,
            noise_power: 1e-6,
            grid,
            seed: 3,
        };
        let y = crate::sim::simulate_scene(&scene).unwrap();
        let bg = BlockGrid::new(384, 640, 384, 640).unwrap();
        let (echo, _) = estimate_reference_echo(&y, &bg, 1, true).unwrap();
        (echo, geom, grid)
    }

    #[test]
    fn form_image_peaks_at_embedding_offset() {
        let (echo, _, _) = reference_from_point_echo();
        let (mr, mc) = echo.matrix.dim();
        let mut y: ComplexMatrix = Array2::default((mr + 100, mc + 160));
        let (r, c) = (40, 90);
        y.slice_mut(ndarray::s![r..r + mr, c..c + mc]).assign(&echo.matrix);
        let img = form_image(&y, &echo).unwrap();
        let mut peak = ((0, 0), 0.0f64);
        for (idx, &m) in img.magnitude.indexed_iter() {
            if m > peak.1 {
                peak = (idx, m);
            }
        }
        assert_eq!(peak.0, (r + echo.anchor.0, c + echo.anchor.1));
    }

    #[test]
    fn form_image_is_linear() {
        let (echo, _, grid) = reference_from_point_echo();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = Array2::from_shape_fn((grid.pulses, grid.samples), |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let a = form_image(&y, &echo).unwrap();
        let b = form_image(&y.mapv(|z| z * 2.0), &echo).unwrap();
        for (x, y) in a.complex.iter().zip(b.complex.iter()) {
            assert!((y - x * 2.0).norm() <= 1e-12 * x.norm().max(1e-12));
        }
    }

    #[test]
    fn rate_estimator_recovers_pure_lfm() {
        let n = 2048;
        let k_true = -3.0e-4;
        let center = (n as f64 - 1.0) / 2.0;
        let line = Array2::from_shape_fn((n, 1), |(i, _)| {
            let t = i as f64 - center;
            Complex64::from_polar(1.0, PI * k_true * t * t)
        });
        let (k, conf) = estimate_fm_rate_block(&line.view(), (-9.0e-4, -1.0e-4), 201).unwrap();
        assert!((k - k_true).abs() / k_true.abs() < 0.01, "estimate {k:.3e}");
        assert!(conf > 0.5, "confidence {conf}");
    }

    #[test]
    fn rate_estimator_handles_pure_tone() {
        let n = 1024;
        let line = Array2::from_shape_fn((n, 1), |(i, _)| {
            Complex64::from_polar(1.0, 2.0 * PI * 0.11 * i as f64)
        });
        let span = 2.0 / n as f64;
        let (k, conf) = estimate_fm_rate_block(&line.view(), (-span, span), 101).unwrap();
        let step = 2.0 * span / 100.0;
        assert!(k.abs() <= step, "rate {k:.3e}");
        assert!(conf > 0.5, "confidence {conf}");
    }

    #[test]
    fn rate_estimator_flags_noise() {
        let mut high = 0usize;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lines = Array2::from_shape_fn((512, 16), |_| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let (_, conf) = estimate_fm_rate_block(&lines.view(), (-4e-3, 4e-3), 101).unwrap();
            if conf >= CONFIDENCE_THRESHOLD {
                high += 1;
            }
        }
        assert!(high <= 5, "{high} of 100 noise draws exceeded the confidence threshold");
    }

    #[test]
    fn rate_estimator_rejects_all_zero() {
        let lines: ComplexMatrix = Array2::default((128, 4));
        assert!(matches!(
            estimate_fm_rate_block(&lines.view(), (-1e-3, 1e-3), 11),
            Err(Error::NoSignal)
        ));
    }

    #[test]
    fn fit_recovers_exact_affine() {
        let centers: Vec<f64> = (0..8).map(|i| 100.0 + 50.0 * i as f64).collect();
        let rates: Vec<f64> = centers.iter().map(|&m| -2.5e-3 + 4.0e-7 * m).collect();
        let conf = vec![1.0; 8];
        let p = fit_fm_rate_profile(&centers, &rates, &conf).unwrap();
        assert_relative_eq!(p.fit[0], -2.5e-3, epsilon = 1e-12);
        assert_relative_eq!(p.fit[1], 4.0e-7, epsilon = 1e-15);
        assert!(p.residual < 1e-12);
    }

    #[test]
    fn fit_ignores_zero_confidence_outlier() {
        let centers: Vec<f64> = (0..6).map(|i| 10.0 * i as f64).collect();
        let mut rates: Vec<f64> = centers.iter().map(|&m| 1.0e-3 - 2.0e-6 * m).collect();
        let mut conf = vec![0.9; 6];
        rates[3] = 5.0; // gross outlier
        conf[3] = 0.0;
        let p = fit_fm_rate_profile(&centers, &rates, &conf).unwrap();
        assert_relative_eq!(p.fit[0], 1.0e-3, epsilon = 1e-12);
        assert_relative_eq!(p.fit[1], -2.0e-6, epsilon = 1e-12);
    }

    #[test]
    fn fit_requires_two_accepted_blocks() {
        let r = fit_fm_rate_profile(&[1.0, 2.0], &[0.1, 0.2], &[0.1, 0.9]);
        assert!(matches!(r, Err(Error::InsufficientBlocks { accepted: 1 })));
    }

    #[test]
    fn affine_fit_tracks_physical_rate_law() {
        // K(m) = -2 v^2 / (lambda R(m)) over a 10% swath is near-affine
        let geom = Geometry::c_band_stripmap();
        let r0 = geom.r0_scene;
        let centers: Vec<f64> = (0..16).map(|i| i as f64 * 40.0).collect();
        let range_of = |m: f64| r0 * (0.95 + 0.10 * m / 600.0);
        let rates: Vec<f64> =
            centers.iter().map(|&m| geom.azimuth_fm_rate(range_of(m)) / geom.prf.powi(2)).collect();
        let conf = vec![1.0; centers.len()];
        let p = fit_fm_rate_profile(&centers, &rates, &conf).unwrap();
        for &m in &centers {
            let truth = geom.azimuth_fm_rate(range_of(m)) / geom.prf.powi(2);
            assert!(
                (p.evaluate(m) - truth).abs() < 0.01 * truth.abs(),
                "deviation at {m}: fit {} truth {}",
                p.evaluate(m),
                truth
            );
        }
    }

    #[test]
    fn predict_defocus_formulas() {
        let p0 = predict_defocus(0.056, 150.0, 10.0, 0.0);
        assert_relative_eq!(p0.resolution_elements, 1.0, epsilon = 1e-12);
        assert!(p0.residual_rate.is_infinite());

        let p1 = predict_defocus(0.056, 150.0, 10.0, 2500.0);
        let p2 = predict_defocus(0.056, 150.0, 10.0, 5000.0);
        assert_relative_eq!(
            p2.resolution_elements - 1.0,
            2.0 * (p1.resolution_elements - 1.0),
            max_relative = 1e-12
        );
        // direct evaluation at the spec'd operating point
        let s = crate::dsp::sinc(0.056 / 20.0);
        let expect = 2.0 * 0.056 * 5000.0 / 100.0 * s * s + 1.0;
        assert_relative_eq!(p2.resolution_elements, expect, max_relative = 1e-12);
        // span * bandwidth counts the same elements
        assert_relative_eq!(p2.time_span * p2.azimuth_bandwidth, p2.resolution_elements, max_relative = 1e-9);
    }

    #[test]
    fn multilook_identity_and_mean_preservation() {
        let mag = Array2::from_elem((8, 8), 3.0);
        let img = SarImage {
            complex: Array2::from_elem((8, 8), Complex64::new(3.0, 0.0)),
            magnitude: mag,
            looks: (1, 1),
        };
        let same = multilook(&img, 1, 1).unwrap();
        assert_eq!(same.magnitude, img.magnitude);
        let looked = multilook(&img, 2, 2).unwrap();
        assert_eq!(looked.magnitude.dim(), (4, 4));
        for &v in looked.magnitude.iter() {
            assert_relative_eq!(v, 3.0, epsilon = 1e-12);
        }
        assert_eq!(looked.looks, (2, 2));
        assert!(multilook(&img, 9, 1).is_err());
    }

    #[test]
    fn multilook_reduces_speckle_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 256;
        let complex = Array2::from_shape_fn((n, n), |_| {
            let g1: f64 = rng.sample(rand_distr::StandardNormal);
            let g2: f64 = rng.sample(rand_distr::StandardNormal);
            Complex64::new(g1, g2) / 2f64.sqrt()
        });
        let img = SarImage::from_complex(complex);
        let looked = multilook(&img, 2, 2).unwrap();
        let var = |m: &Array2<f64>| {
            let ints: Vec<f64> = m.iter().map(|&x| x * x).collect();
            let mean = ints.iter().sum::<f64>() / ints.len() as f64;
            ints.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / ints.len() as f64
        };
        let ratio = var(&img.magnitude) / var(&looked.magnitude);
        assert!((ratio - 4.0).abs() < 0.6, "variance ratio {ratio:.2}");
    }

    #[test]
    fn corrected_focus_estimates_rates_within_two_percent() {
        // a 2 us pulse keeps each target's raw extent inside its own range
        // block, so no block sees the skirts of a neighbor's uncompressed
        // pulse; one dominant scatterer per block, the strongest being the
        // reference
        let geom = Geometry { tp: 2.0e-6, ..Geometry::c_band_stripmap() };
        let grid = SceneGrid::centered(&geom, 384, 1024);
        let targets = vec![
            grid.target_at(&geom, 192, 640, Complex64::new(2.0, 0.0)),
            grid.target_at(&geom, 100, 128, Complex64::new(1.0, 0.0)),
            grid.target_at(&geom, 280, 384, Complex64::new(1.0, 0.0)),
            grid.target_at(&geom, 140, 896, Complex64::new(1.0, 0.0)),
        ];
        let scene = SimulatedScene {
            geometry: geom.clone(),
            targets,
            clutter: None,
            noise_power: 1e-6,
            grid,
            seed: 21,
        };
        let y = crate::sim::simulate_scene(&scene).unwrap();
        let bg = BlockGrid::new(384, 1024, 384, 1024).unwrap();
        let (echo, _) = estimate_reference_echo(&y, &bg, 1, true).unwrap();
        let (img, profile) = focus_corrected(&y, &echo, 4).unwrap();
        assert_eq!(img.complex.dim(), y.dim());
        for (i, (&center, &rate)) in profile.centers.iter().zip(profile.rates.iter()).enumerate() {
            if profile.confidences[i] < CONFIDENCE_THRESHOLD {
                continue;
            }
            let r = 0.5 * geom.c * grid.tau(&geom, center);
            let truth = geom.azimuth_fm_rate(r) / geom.prf.powi(2);
            assert!(
                (rate - truth).abs() <= 0.02 * truth.abs(),
                "block {i}: rate {rate:.4e}, truth {truth:.4e}"
            );
        }
    }

    #[test]
    fn corrected_focus_needs_confident_blocks() {
        let (echo, _, grid) = reference_from_point_echo();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let noise = Array2::from_shape_fn((grid.pulses, grid.samples), |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        match focus_corrected(&noise, &echo, 4) {
            Err(Error::InsufficientBlocks { .. }) => {}
            Ok((_, profile)) => {
                // if any fit emerged, its inputs must have been confident
                assert!(profile.confidences.iter().filter(|&&c| c >= CONFIDENCE_THRESHOLD).count() >= 2);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
