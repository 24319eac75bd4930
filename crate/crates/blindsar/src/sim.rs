//! Ground-truth raw-data synthesis and an exact time-domain focusing oracle.
//!
//! This is the only module that sees system parameters. Point echoes carry
//! the exact hyperbolic range history; clutter is one scatterer per grid
//! cell with locally stationary, globally non-stationary power; noise is
//! circular complex white Gaussian. All randomness flows from a single
//! 64-bit seed through per-pulse ChaCha streams, so output is independent
//! of the parallel schedule.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::dsp::{self, ComplexMatrix, ComplexVector};
use crate::error::{Error, Result};

const CLUTTER_STREAM_BASE: u64 = 1 << 32;
const NOISE_STREAM_BASE: u64 = 2 << 32;

/// Radar system description. The blind pipeline never reads this; it exists
/// for synthesis and for test oracles only.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Geometry {
    /// Platform speed (m/s).
    pub v: f64,
    /// Propagation speed (m/s).
    pub c: f64,
    /// Wavelength (m).
    pub lambda: f64,
    /// Scene-center slant range (m).
    pub r0_scene: f64,
    /// Fast-time sampling rate (Hz).
    pub fs: f64,
    /// Pulse repetition frequency (Hz).
    pub prf: f64,
    /// Chirp FM rate (Hz/s).
    pub kr: f64,
    /// Pulse duration (s).
    pub tp: f64,
    /// Antenna azimuth length (m).
    pub la: f64,
}

impl Geometry {
    /// Desk-scale C-band stripmap parameter set used by the bundled example
    /// scenes and the test suites.
    pub fn c_band_stripmap() -> Self {
        Geometry {
            v: 150.0,
            c: 299_792_458.0,
            lambda: 0.055517,
            r0_scene: 12_000.0,
            fs: 60.0e6,
            prf: 120.0,
            kr: 1.0e13,
            tp: 5.0e-6,
            la: 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v", self.v),
            ("c", self.c),
            ("lambda", self.lambda),
            ("r0_scene", self.r0_scene),
            ("fs", self.fs),
            ("prf", self.prf),
            ("kr", self.kr),
            ("tp", self.tp),
            ("la", self.la),
        ];
        for (name, val) in fields {
            if !(val > 0.0) || !val.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "geometry: {name} must be strictly positive, got {val}"
                )));
            }
        }
        if self.kr * self.tp >= self.fs {
            return Err(Error::InvalidArgument(format!(
                "geometry: signal bandwidth {:.3e} exceeds sampling rate {:.3e}",
                self.kr * self.tp,
                self.fs
            )));
        }
        if self.lambda >= 1e-2 * self.r0_scene {
            return Err(Error::InvalidArgument(
                "geometry: wavelength must be far smaller than the scene range".into(),
            ));
        }
        Ok(())
    }

    /// Sample PRI P = fs / prf (samples per pulse interval, fractional).
    pub fn sample_pri(&self) -> f64 {
        self.fs / self.prf
    }

    /// Two-way azimuth bandwidth for a fixed broadside beam.
    pub fn azimuth_bandwidth(&self) -> f64 {
        2.0 * self.v / self.la * dsp::sinc(self.lambda / (2.0 * self.la))
    }

    /// Azimuth FM rate at slant range r (Hz/s, negative).
    pub fn azimuth_fm_rate(&self, r: f64) -> f64 {
        -2.0 * self.v * self.v / (self.lambda * r)
    }

    /// Half-extent of the two-way pattern's main lobe in slow time (s) at
    /// slant range r, truncated at the first null.
    fn aperture_half_time(&self, r: f64) -> f64 {
        let s = self.lambda / self.la;
        if s >= 1.0 {
            f64::INFINITY
        } else {
            r * s / (1.0 - s * s).sqrt() / self.v
        }
    }
}

/// Slow/fast-time extents of a raw-data grid plus its window origin, so
/// pixel-to-position mapping is unambiguous.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SceneGrid {
    pub pulses: usize,
    pub samples: usize,
    /// Slow time of pulse 0 (s).
    pub eta_start: f64,
    /// Fast-time window start (two-way delay of column 0, s).
    pub tau_start: f64,
}

impl SceneGrid {
    /// Grid centered on the scene: slow time 0 and the scene-center delay
    /// both map to the middle pixel.
    pub fn centered(geom: &Geometry, pulses: usize, samples: usize) -> Self {
        SceneGrid {
            pulses,
            samples,
            eta_start: -(pulses as f64 / 2.0) / geom.prf,
            tau_start: 2.0 * geom.r0_scene / geom.c - (samples as f64 / 2.0) / geom.fs,
        }
    }

    /// Slow time of a (possibly fractional) pulse index.
    pub fn eta(&self, geom: &Geometry, pulse: f64) -> f64 {
        eta_at(self, geom, pulse)
    }

    /// Two-way delay of a (possibly fractional) column index.
    pub fn tau(&self, geom: &Geometry, col: f64) -> f64 {
        tau_at(self, geom, col)
    }

    /// Target sitting exactly on grid cell (pulse, col).
    pub fn target_at(&self, geom: &Geometry, pulse: usize, col: usize, amplitude: Complex64) -> PointTarget {
        PointTarget {
            x: geom.v * eta_at(self, geom, pulse as f64),
            r: 0.5 * geom.c * tau_at(self, geom, col as f64),
            amplitude,
        }
    }
}

fn eta_at(grid: &SceneGrid, geom: &Geometry, pulse: f64) -> f64 {
    grid.eta_start + pulse / geom.prf
}

fn tau_at(grid: &SceneGrid, geom: &Geometry, col: f64) -> f64 {
    grid.tau_start + col / geom.fs
}

/// One point scatterer at azimuth position x (m) and closest slant range
/// r (m), with complex reflectivity.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PointTarget {
    pub x: f64,
    pub r: f64,
    pub amplitude: Complex64,
}

/// Distributed background: one scatterer per grid cell with mean power
/// taken from `power_profile` (same dimensions as the data grid). Cell
/// phases are i.i.d. uniform by construction of the circular Gaussian draw.
#[derive(Debug, Clone)]
pub struct ClutterField {
    pub power_profile: Array2<f64>,
}

impl ClutterField {
    pub fn from_profile(power_profile: Array2<f64>) -> Result<Self> {
        if power_profile.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "clutter power profile must be finite and non-negative".into(),
            ));
        }
        Ok(ClutterField { power_profile })
    }

    pub fn flat(power: f64, pulses: usize, samples: usize) -> Result<Self> {
        Self::from_profile(Array2::from_elem((pulses, samples), power))
    }

    /// Two-level profile split along fast time: columns < boundary get
    /// `left`, the rest `right` (land/sea style scenes).
    pub fn step_cols(left: f64, right: f64, boundary: usize, pulses: usize, samples: usize) -> Result<Self> {
        Self::from_profile(Array2::from_shape_fn((pulses, samples), |(_, j)| {
            if j < boundary {
                left
            } else {
                right
            }
        }))
    }

    /// Draw the per-cell complex reflectivities for a given seed. Row l uses
    /// its own counter-mode stream, so the draw is schedule-independent.
    pub fn materialize_cells(&self, seed: u64) -> Array2<Complex64> {
        let (rows, cols) = self.power_profile.dim();
        let mut cells = Array2::default((rows, cols));
        cells
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(l, mut row)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(CLUTTER_STREAM_BASE + l as u64);
                for (j, cell) in row.iter_mut().enumerate() {
                    let g1: f64 = StandardNormal.sample(&mut rng);
                    let g2: f64 = StandardNormal.sample(&mut rng);
                    let amp = (self.power_profile[[l, j]] / 2.0).sqrt();
                    *cell = Complex64::new(amp * g1, amp * g2);
                }
            });
        cells
    }
}

/// Full scene description handed to [`simulate_scene`].
#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub geometry: Geometry,
    pub targets: Vec<PointTarget>,
    pub clutter: Option<ClutterField>,
    pub noise_power: f64,
    pub grid: SceneGrid,
    pub seed: u64,
}

/// Support window of one point echo: top-left grid offset plus the dense
/// window values. Zero outside the two-way pattern's first null and the
/// pulse extent.
struct EchoWindow {
    row0: usize,
    col0: usize,
    data: ComplexMatrix,
}

fn echo_window(geom: &Geometry, target: &PointTarget, grid: &SceneGrid) -> Result<EchoWindow> {
    if target.r <= 0.0 {
        return Err(Error::InvalidArgument("target slant range must be positive".into()));
    }
    let eta0 = target.x / geom.v;
    let tau0 = 2.0 * target.r / geom.c;
    let n0 = (eta0 - grid.eta_start) * geom.prf;
    let k0 = (tau0 - grid.tau_start) * geom.fs;
    if n0 < 0.0 || n0 >= grid.pulses as f64 || k0 < 0.0 || k0 >= grid.samples as f64 {
        return Err(Error::InvalidArgument(format!(
            "target at pulse {n0:.1}, column {k0:.1} falls outside the {}x{} grid",
            grid.pulses, grid.samples
        )));
    }

    let half_eta = geom.aperture_half_time(target.r);
    let n_lo = if half_eta.is_finite() {
        ((n0 - half_eta * geom.prf).floor().max(0.0)) as usize
    } else {
        0
    };
    let n_hi = if half_eta.is_finite() {
        ((n0 + half_eta * geom.prf).ceil() as usize + 1).min(grid.pulses)
    } else {
        grid.pulses
    };

    // widest range over the kept aperture (clamped to the grid rows)
    let max_du = (eta_at(grid, geom, n_lo as f64) - eta0)
        .abs()
        .max((eta_at(grid, geom, (n_hi.max(1) - 1) as f64) - eta0).abs());
    let r_max = (geom.v * max_du).hypot(target.r);
    let k_lo = ((tau0 - geom.tp / 2.0 - grid.tau_start) * geom.fs).floor().max(0.0) as usize;
    let k_hi = (((2.0 * r_max / geom.c + geom.tp / 2.0 - grid.tau_start) * geom.fs).ceil() as usize + 1)
        .min(grid.samples);
    if n_lo >= n_hi || k_lo >= k_hi {
        return Ok(EchoWindow { row0: n_lo, col0: k_lo, data: Array2::default((0, 0)) });
    }

    let mut data: ComplexMatrix = Array2::default((n_hi - n_lo, k_hi - k_lo));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let n = n_lo + i;
            let du = eta_at(grid, geom, n as f64) - eta0;
            let dx = geom.v * du;
            let r = dx.hypot(target.r);
            let arg = geom.la * (dx / r) / geom.lambda;
            if arg.abs() >= 1.0 {
                return;
            }
            let w = dsp::sinc(arg);
            let wa = w * w;
            let delay = 2.0 * r / geom.c;
            let phase0 = -4.0 * PI * r / geom.lambda;
            for (jj, out) in row.iter_mut().enumerate() {
                let u = tau_at(grid, geom, (k_lo + jj) as f64) - delay;
                if u.abs() <= geom.tp / 2.0 {
                    let ph = PI * geom.kr * u * u + phase0;
                    *out = target.amplitude * wa * Complex64::from_polar(1.0, ph);
                }
            }
        });
    Ok(EchoWindow { row0: n_lo, col0: k_lo, data })
}

/// Raw 2-D echo of a single point target on the given grid.
pub fn simulate_point_echo(
    geom: &Geometry,
    target: &PointTarget,
    grid: &SceneGrid,
) -> Result<ComplexMatrix> {
    geom.validate()?;
    let w = echo_window(geom, target, grid)?;
    let mut out: ComplexMatrix = Array2::default((grid.pulses, grid.samples));
    if w.data.nrows() > 0 {
        let mut slice = out.slice_mut(ndarray::s![
            w.row0..w.row0 + w.data.nrows(),
            w.col0..w.col0 + w.data.ncols()
        ]);
        slice += &w.data;
    }
    Ok(out)
}

// Per-range-column clutter template profile: two-way pattern weight and
// delay offset per pulse offset, shared by every fast-time column of the
// template.
struct TemplateProfile {
    /// two-way amplitude squared (sinc^2), zero beyond the first null
    w2: Vec<f64>,
    /// delay relative to the cell's own delay (s), per pulse offset
    ddelay: Vec<f64>,
    /// carrier phase term -4 pi R / lambda, per pulse offset
    phase: Vec<f64>,
    /// Frobenius norm of the full template (for power calibration)
    norm: f64,
    /// fast-time extent of the template in columns
    dk_lo: isize,
    dk_hi: isize,
}

fn template_profile(geom: &Geometry, r_cell: f64, a_max: usize) -> TemplateProfile {
    let rows = 2 * a_max + 1;
    let mut w2 = vec![0.0; rows];
    let mut ddelay = vec![0.0; rows];
    let mut phase = vec![0.0; rows];
    let t_pri = 1.0 / geom.prf;
    let mut max_dd = 0.0f64;
    for (i, dn) in (-(a_max as isize)..=a_max as isize).enumerate() {
        let dx = geom.v * dn as f64 * t_pri;
        let r = dx.hypot(r_cell);
        let arg = geom.la * (dx / r) / geom.lambda;
        if arg.abs() >= 1.0 {
            continue;
        }
        let w = dsp::sinc(arg);
        w2[i] = w * w;
        ddelay[i] = 2.0 * (r - r_cell) / geom.c;
        phase[i] = -4.0 * PI * r / geom.lambda;
        max_dd = max_dd.max(ddelay[i]);
    }
    let dk_lo = (-(geom.tp / 2.0) * geom.fs).floor() as isize - 1;
    let dk_hi = ((max_dd + geom.tp / 2.0) * geom.fs).ceil() as isize + 1;

    // ||T||^2 = sum_dn w2^2 * (number of in-pulse columns at that delay)
    let mut e = 0.0;
    for i in 0..rows {
        if w2[i] == 0.0 {
            continue;
        }
        let lo = ((ddelay[i] - geom.tp / 2.0) * geom.fs).ceil() as isize;
        let hi = ((ddelay[i] + geom.tp / 2.0) * geom.fs).floor() as isize;
        let count = (hi - lo + 1).max(0) as f64;
        e += w2[i] * w2[i] * count;
    }
    TemplateProfile { w2, ddelay, phase, norm: e.sqrt().max(f64::MIN_POSITIVE), dk_lo, dk_hi }
}

/// Composite scene: point echoes + clutter echo + circular white noise.
pub fn simulate_scene(scene: &SimulatedScene) -> Result<ComplexMatrix> {
    scene.geometry.validate()?;
    if !(scene.noise_power >= 0.0) {
        return Err(Error::InvalidArgument("noise power must be >= 0".into()));
    }
    let geom = &scene.geometry;
    let grid = &scene.grid;
    let mut out: ComplexMatrix = Array2::default((grid.pulses, grid.samples));

    for target in &scene.targets {
        let w = echo_window(geom, target, grid)?;
        if w.data.nrows() > 0 {
            let mut slice = out.slice_mut(ndarray::s![
                w.row0..w.row0 + w.data.nrows(),
                w.col0..w.col0 + w.data.ncols()
            ]);
            slice += &w.data;
        }
    }

    if let Some(clutter) = &scene.clutter {
        if clutter.power_profile.dim() != (grid.pulses, grid.samples) {
            return Err(Error::InvalidArgument(
                "clutter power profile dimensions must match the scene grid".into(),
            ));
        }
        add_clutter(geom, grid, clutter, scene.seed, &mut out)?;
    }

    if scene.noise_power > 0.0 {
        let sd = (scene.noise_power / 2.0).sqrt();
        out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(l, mut row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
            rng.set_stream(NOISE_STREAM_BASE + l as u64);
            for v in row.iter_mut() {
                let g1: f64 = StandardNormal.sample(&mut rng);
                let g2: f64 = StandardNormal.sample(&mut rng);
                *v += Complex64::new(sd * g1, sd * g2);
            }
        });
    }
    Ok(out)
}

/// Clutter echo: every grid cell is a scatterer; a cell at range column m
/// has exactly the same echo as any other cell of that column, shifted in
/// azimuth, so the synthesis is an azimuth convolution per range column,
/// run in the frequency domain. Templates are unit-energy so the raw
/// clutter power equals the power profile away from the grid edges.
fn add_clutter(
    geom: &Geometry,
    grid: &SceneGrid,
    clutter: &ClutterField,
    seed: u64,
    out: &mut ComplexMatrix,
) -> Result<()> {
    let pulses = grid.pulses;
    let samples = grid.samples;
    let cells = clutter.materialize_cells(seed);

    // common azimuth half-extent so every column shares one convolution grid
    let r_far = 0.5 * geom.c * tau_at(grid, geom, (samples - 1) as f64);
    let a_max_time = geom.aperture_half_time(r_far.max(1.0));
    let a_max = if a_max_time.is_finite() {
        ((a_max_time * geom.prf).ceil() as usize).min(pulses)
    } else {
        pulses
    };
    let nfft = dsp::good_fft_size(pulses + 2 * a_max);

    // per-column reflectivity spectra
    let mut cell_spectra: Vec<Vec<Complex64>> = vec![Vec::new(); samples];
    cell_spectra.par_iter_mut().enumerate().for_each(|(m, spec)| {
        let mut buf = vec![Complex64::default(); nfft];
        for (i, v) in cells.column(m).iter().enumerate() {
            buf[i] = *v;
        }
        dsp::fft_forward(&mut buf);
        *spec = buf;
    });

    // per-column template profiles
    let profiles: Vec<TemplateProfile> = (0..samples)
        .into_par_iter()
        .map(|m| template_profile(geom, 0.5 * geom.c * tau_at(grid, geom, m as f64), a_max))
        .collect();
    let dk_lo_min = profiles.iter().map(|p| p.dk_lo).min().unwrap();
    let dk_hi_max = profiles.iter().map(|p| p.dk_hi).max().unwrap();

    let tp_half = geom.tp / 2.0;
    out.axis_iter_mut(Axis(1)).into_par_iter().enumerate().for_each(|(k, mut col)| {
        let mut acc = vec![Complex64::default(); nfft];
        let mut tcol = vec![Complex64::default(); nfft];
        let m_lo = (k as isize - dk_hi_max).max(0) as usize;
        let m_hi = ((k as isize - dk_lo_min) as usize).min(samples - 1);
        let mut any = false;
        for m in m_lo..=m_hi {
            let prof = &profiles[m];
            let dk = k as isize - m as isize;
            if dk < prof.dk_lo || dk > prof.dk_hi {
                continue;
            }
            // template column at fast-time offset dk
            tcol.iter_mut().for_each(|z| *z = Complex64::default());
            let mut nonzero = false;
            for (i, &w2) in prof.w2.iter().enumerate() {
                if w2 == 0.0 {
                    continue;
                }
                let u = dk as f64 / geom.fs - prof.ddelay[i];
                if u.abs() <= tp_half {
                    let ph = PI * geom.kr * u * u + prof.phase[i];
                    tcol[i] = Complex64::from_polar(w2 / prof.norm, ph);
                    nonzero = true;
                }
            }
            if !nonzero {
                continue;
            }
            dsp::fft_forward(&mut tcol);
            for (a, (&s, &t)) in acc.iter_mut().zip(cell_spectra[m].iter().zip(tcol.iter())) {
                *a += s * t;
            }
            any = true;
        }
        if !any {
            return;
        }
        dsp::fft_inverse(&mut acc);
        // conv(cells, template)[n + a_max] is the contribution to pulse n
        for (n, v) in col.iter_mut().enumerate() {
            *v += acc[n + a_max];
        }
    });
    Ok(())
}

/// Serialize a 2-D matrix into the 1-D sample stream a receiver would have
/// recorded with sample PRI `p`: row l starts at continuous time l*p, with
/// fractional starts realized by [`dsp::fractional_shift`]; receiver dead
/// time between pulses is zero-filled.
pub fn flatten_to_stream(y: &ComplexMatrix, p: f64) -> Result<ComplexVector> {
    let (rows, cols) = (y.nrows(), y.ncols());
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("flatten_to_stream: empty matrix".into()));
    }
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidArgument(format!("flatten_to_stream: bad sample PRI {p}")));
    }
    if p < cols as f64 {
        return Err(Error::InvalidArgument(format!(
            "flatten_to_stream: sample PRI {p} shorter than row length {cols}; pulses would overlap"
        )));
    }
    let p_int = p.floor() as usize;
    let len = ((rows - 1) as f64 * p).ceil() as usize + cols;
    let mut stream: ComplexVector = Array1::default(len);
    let mut buf: ComplexVector = Array1::default(p_int);
    for l in 0..rows {
        let start = l as f64 * p;
        let n_int = start.floor() as usize;
        let n_dec = start - start.floor();
        buf.fill(Complex64::default());
        buf.slice_mut(ndarray::s![..cols]).assign(&y.row(l));
        let shifted = if n_dec != 0.0 { dsp::fractional_shift(&buf, n_dec)? } else { buf.clone() };
        for (j, v) in shifted.iter().enumerate() {
            if n_int + j < len {
                stream[n_int + j] += v;
            }
        }
    }
    Ok(stream)
}

/// Exact time-domain matched filter with true parameters: for every pixel in
/// the requested window, the magnitude of the inner product between the data
/// and the exact simulated echo of that pixel, normalized so an isolated
/// unit-amplitude target peaks at 1.
pub fn exact_focus_oracle(
    y: &ComplexMatrix,
    geom: &Geometry,
    grid: &SceneGrid,
    pixel_rows: std::ops::Range<usize>,
    pixel_cols: std::ops::Range<usize>,
) -> Array2<f64> {
    let nr = pixel_rows.len();
    let nc = pixel_cols.len();
    let mut out = Array2::zeros((nr, nc));
    let row0 = pixel_rows.start;
    let col0 = pixel_cols.start;
    out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut orow)| {
        let n0 = row0 + i;
        for (j, o) in orow.iter_mut().enumerate() {
            let k0 = col0 + j;
            let target = PointTarget {
                x: geom.v * eta_at(grid, geom, n0 as f64),
                r: 0.5 * geom.c * tau_at(grid, geom, k0 as f64),
                amplitude: Complex64::new(1.0, 0.0),
            };
            let w = match echo_window(geom, &target, grid) {
                Ok(w) => w,
                Err(_) => continue,
            };
            if w.data.is_empty() {
                continue;
            }
            let sub = y.slice(ndarray::s![
                w.row0..w.row0 + w.data.nrows(),
                w.col0..w.col0 + w.data.ncols()
            ]);
            let mut inner = Complex64::default();
            let mut energy = 0.0f64;
            for (a, b) in sub.iter().zip(w.data.iter()) {
                inner += a * b.conj();
                energy += b.norm_sqr();
            }
            if energy > 0.0 {
                *o = inner.norm() / energy;
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn desk() -> Geometry {
        Geometry::c_band_stripmap()
    }

    fn centered_target(geom: &Geometry, grid: &SceneGrid, pulse: usize, col: usize, amp: Complex64) -> PointTarget {
        PointTarget {
            x: geom.v * eta_at(grid, geom, pulse as f64),
            r: 0.5 * geom.c * tau_at(grid, geom, col as f64),
            amplitude: amp,
        }
    }

    #[test]
    fn phase_at_closest_approach() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 256, 512);
        let t = centered_target(&geom, &grid, 128, 256, Complex64::new(1.0, 0.0));
        let echo = simulate_point_echo(&geom, &t, &grid).unwrap();
        let want = Complex64::from_polar(1.0, -4.0 * PI * t.r / geom.lambda);
        let ratio = echo[[128, 256]] / want;
        assert!(ratio.norm() > 0.5, "no echo at the target cell");
        assert!(ratio.arg().abs() < 1e-6, "phase error {:.3e} rad", ratio.arg());
    }

    #[test]
    fn envelope_peak_at_target_cell() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 512, 512);
        let t = centered_target(&geom, &grid, 200, 300, Complex64::new(1.0, 0.0));
        let echo = simulate_point_echo(&geom, &t, &grid).unwrap();
        // azimuth envelope peaks at the closest-approach pulse
        let col = echo.column(300);
        let n_peak = col.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        assert_eq!(n_peak, 200);
        // rect pulse: the support along fast time is centered on the delay
        let row = echo.row(200);
        let nz: Vec<usize> = row.iter().enumerate().filter(|(_, v)| v.norm() > 0.0).map(|(k, _)| k).collect();
        let center = (nz[0] + nz[nz.len() - 1]) as f64 / 2.0;
        assert!((center - 300.0).abs() <= 1.0, "support center {center}");
    }

    #[test]
    fn range_history_quadratic_deviation_bound() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 512, 512);
        let r0 = geom.r0_scene;
        let half = geom.aperture_half_time(r0);
        let mut worst = 0.0f64;
        let mut max_off = 0.0f64;
        for n in 0..grid.pulses {
            let du = eta_at(&grid, &geom, n as f64);
            if du.abs() > half {
                continue;
            }
            let dx = geom.v * du;
            let hyper = dx.hypot(r0);
            let quad = r0 + dx * dx / (2.0 * r0);
            worst = worst.max((hyper - quad).abs());
            max_off = max_off.max(dx.abs());
        }
        let bound = max_off.powi(4) / (8.0 * r0.powi(3));
        assert!(worst <= bound, "deviation {worst:.3e} above bound {bound:.3e}");
    }

    #[test]
    fn target_outside_grid_is_rejected() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 64, 64);
        let t = PointTarget {
            x: geom.v * eta_at(&grid, &geom, 1000.0),
            r: geom.r0_scene,
            amplitude: Complex64::new(1.0, 0.0),
        };
        assert!(matches!(simulate_point_echo(&geom, &t, &grid), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scene_without_clutter_and_noise_is_superposition() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 256, 400);
        let t1 = centered_target(&geom, &grid, 100, 150, Complex64::new(1.0, 0.3));
        let t2 = centered_target(&geom, &grid, 170, 260, Complex64::new(-0.5, 0.8));
        let scene = SimulatedScene {
            geometry: geom.clone(),
            targets: vec![t1, t2],
            clutter: None,
            noise_power: 0.0,
            grid,
            seed: 1,
        };
        let combined = simulate_scene(&scene).unwrap();
        let e1 = simulate_point_echo(&geom, &t1, &grid).unwrap();
        let e2 = simulate_point_echo(&geom, &t2, &grid).unwrap();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for ((a, b), c) in combined.iter().zip(e1.iter()).zip(e2.iter()) {
            err = err.max((a - (b + c)).norm());
            scale = scale.max(a.norm());
        }
        assert!(err <= 1e-12 * scale.max(1.0), "superposition error {err:.3e}");
    }

    #[test]
    fn scene_superposition_with_fixed_clutter_and_noise() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 192, 320);
        let t1 = centered_target(&geom, &grid, 96, 160, Complex64::new(2.0, 0.0));
        let base = SimulatedScene {
            geometry: geom.clone(),
            targets: vec![],
            clutter: Some(ClutterField::flat(0.5, 192, 320).unwrap()),
            noise_power: 0.1,
            grid,
            seed: 7,
        };
        let with_target = SimulatedScene { targets: vec![t1], ..base.clone() };
        let y_base = simulate_scene(&base).unwrap();
        let y_full = simulate_scene(&with_target).unwrap();
        let echo = simulate_point_echo(&geom, &t1, &grid).unwrap();
        let mut err = 0.0f64;
        for ((a, b), c) in y_full.iter().zip(y_base.iter()).zip(echo.iter()) {
            err = err.max((a - b - c).norm());
        }
        assert!(err < 1e-12, "clutter/noise must be seed-stable: {err:.3e}");
    }

    #[test]
    fn energy_scales_quadratically_with_amplitude() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 256, 400);
        let t1 = centered_target(&geom, &grid, 128, 200, Complex64::new(1.0, 0.0));
        let t2 = PointTarget { amplitude: Complex64::new(2.0, 0.0), ..t1 };
        let e1: f64 = simulate_point_echo(&geom, &t1, &grid).unwrap().iter().map(|z| z.norm_sqr()).sum();
        let e2: f64 = simulate_point_echo(&geom, &t2, &grid).unwrap().iter().map(|z| z.norm_sqr()).sum();
        assert_relative_eq!(e2, 4.0 * e1, max_relative = 1e-12);
    }

    fn block_power(y: &ComplexMatrix, r0: usize, c0: usize, size: usize) -> f64 {
        let b = y.slice(ndarray::s![r0..r0 + size, c0..c0 + size]);
        b.iter().map(|z| z.norm_sqr()).sum::<f64>() / (size * size) as f64
    }

    #[test]
    fn flat_clutter_power_calibrated() {
        let geom = desk();
        let pulses = 384;
        let samples = 512;
        let grid = SceneGrid::centered(&geom, pulses, samples);
        let scene = SimulatedScene {
            geometry: geom.clone(),
            targets: vec![],
            clutter: Some(ClutterField::flat(1.0, pulses, samples).unwrap()),
            noise_power: 0.0,
            grid,
            seed: 11,
        };
        let y = simulate_scene(&scene).unwrap();
        // interior blocks: away from azimuth aperture edges and pulse extent
        for (r0, c0) in [(120, 170), (120, 270), (170, 170), (170, 270)] {
            let p = block_power(&y, r0, c0, 100);
            assert!((p - 1.0).abs() < 0.05, "block power {p:.3} at ({r0},{c0})");
        }
    }

    #[test]
    fn step_clutter_power_ratio() {
        let geom = desk();
        let pulses = 384;
        let samples = 640;
        let grid = SceneGrid::centered(&geom, pulses, samples);
        let scene = SimulatedScene {
            geometry: geom.clone(),
            targets: vec![],
            clutter: Some(ClutterField::step_cols(10.0, 1.0, 320, pulses, samples).unwrap()),
            noise_power: 0.0,
            grid,
            seed: 13,
        };
        let y = simulate_scene(&scene).unwrap();
        let left = block_power(&y, 140, 180, 100);
        let right = block_power(&y, 140, 480, 100);
        let ratio = left / right;
        assert!((ratio - 10.0).abs() < 1.0, "measured ratio {ratio:.2}");
    }

    #[test]
    fn clutter_block_power_error_shrinks_with_block_size() {
        let geom = desk();
        let pulses = 384;
        let samples = 512;
        let grid = SceneGrid::centered(&geom, pulses, samples);
        let scene = SimulatedScene {
            geometry: geom.clone(),
            targets: vec![],
            clutter: Some(ClutterField::flat(1.0, pulses, samples).unwrap()),
            noise_power: 0.0,
            grid,
            seed: 17,
        };
        let y = simulate_scene(&scene).unwrap();
        let err = |size: usize| -> f64 {
            let mut count = 0.0;
            let mut acc = 0.0;
            for r0 in (120..220).step_by(size) {
                for c0 in (170..320).step_by(size) {
                    acc += (block_power(&y, r0, c0, size) - 1.0).abs();
                    count += 1.0;
                }
            }
            acc / count
        };
        assert!(err(100) < err(25), "err100 {} err25 {}", err(100), err(25));
    }

    #[test]
    fn flatten_integer_pri_is_concatenation() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 8, 16);
        let t = centered_target(&geom, &grid, 4, 8, Complex64::new(1.0, 0.0));
        let y = simulate_point_echo(&geom, &t, &grid).unwrap();
        let s = flatten_to_stream(&y, 16.0).unwrap();
        assert_eq!(s.len(), 8 * 16);
        for l in 0..8 {
            for k in 0..16 {
                assert_eq!(s[l * 16 + k], y[[l, k]]);
            }
        }
    }

    #[test]
    fn flatten_integer_pri_with_gap_places_zeros() {
        let mut y: ComplexMatrix = Array2::default((3, 4));
        for (i, v) in y.iter_mut().enumerate() {
            *v = Complex64::new(i as f64 + 1.0, 0.0);
        }
        let s = flatten_to_stream(&y, 10.0).unwrap();
        assert_eq!(s.len(), 2 * 10 + 4);
        for l in 0..3 {
            for j in 0..10usize {
                let idx = l * 10 + j;
                if idx >= s.len() {
                    continue;
                }
                if j < 4 {
                    assert_eq!(s[idx], y[[l, j]]);
                } else {
                    assert_eq!(s[idx], Complex64::default());
                }
            }
        }
    }

    #[test]
    fn flatten_rejects_overlapping_pulses() {
        let y: ComplexMatrix = Array2::default((3, 10));
        assert!(flatten_to_stream(&y, 8.0).is_err());
    }

    #[test]
    fn oracle_unit_target_peaks_at_one() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 384, 512);
        let t = centered_target(&geom, &grid, 192, 256, Complex64::new(1.0, 0.0));
        let y = simulate_point_echo(&geom, &t, &grid).unwrap();
        let img = exact_focus_oracle(&y, &geom, &grid, 184..200, 248..264);
        let mut best = (0usize, 0usize, 0.0f64);
        for ((i, j), &v) in img.indexed_iter() {
            if v > best.2 {
                best = (i, j, v);
            }
        }
        assert_eq!((best.0 + 184, best.1 + 248), (192, 256));
        assert!((best.2 - 1.0).abs() < 1e-3, "peak {}", best.2);
    }

    #[test]
    fn oracle_peak_ratio_tracks_amplitudes() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 384, 512);
        let t1 = centered_target(&geom, &grid, 150, 200, Complex64::new(1.0, 0.0));
        let t2 = centered_target(&geom, &grid, 240, 330, Complex64::new(0.5, 0.0));
        let scene = SimulatedScene {
            geometry: geom.clone(),
            targets: vec![t1, t2],
            clutter: None,
            noise_power: 0.0,
            grid,
            seed: 23,
        };
        let y = simulate_scene(&scene).unwrap();
        let p1 = exact_focus_oracle(&y, &geom, &grid, 146..155, 196..205);
        let p2 = exact_focus_oracle(&y, &geom, &grid, 236..245, 326..335);
        let m1 = p1.iter().cloned().fold(0.0, f64::max);
        let m2 = p2.iter().cloned().fold(0.0, f64::max);
        assert!((m1 / m2 - 2.0).abs() < 0.1, "ratio {}", m1 / m2);
    }

    #[test]
    fn oracle_on_noise_stays_flat() {
        let geom = desk();
        let grid = SceneGrid::centered(&geom, 128, 256);
        let mut failures = 0;
        for seed in 0..100u64 {
            let scene = SimulatedScene {
                geometry: geom.clone(),
                targets: vec![],
                clutter: None,
                noise_power: 1.0,
                grid,
                seed,
            };
            let y = simulate_scene(&scene).unwrap();
            let img = exact_focus_oracle(&y, &geom, &grid, 58..70, 122..134);
            let max = img.iter().cloned().fold(0.0, f64::max);
            let mean = img.iter().sum::<f64>() / img.len() as f64;
            if max >= 5.0 * mean {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 100 seeds exceeded 5x mean");
    }
}
