//! Ground permittivity and antenna gain from the large-scale power trend.
//!
//! Far from the scatterers the boundary power follows the two-ray model
//! (direct plus ground bounce). Fitting that model in dB over the whole
//! boundary gives `ε_r` and `G`, which in turn give `α_Tx` and `α_g` at any
//! point.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::channel_sim::{two_ray_terms, RouteMeasurements, SimError};
use crate::geometry::{ArrayWindow, Point2};

/// Fewest boundary samples accepted by the fit.
pub const MIN_FIT_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {MIN_FIT_SAMPLES} samples, got {0}")]
    InsufficientSamples(usize),
    #[error("all samples are at the same distance from the transmitter")]
    DegenerateGeometry,
    #[error("non-positive or non-finite power sample at index {0}")]
    BadSample(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundFitOptions {
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_step: f64,
    /// Gain search spans `G0 / 10^decades ..= G0 * 10^decades`.
    pub gain_decades: f64,
    pub eps_resolution: f64,
    /// Fit a moving average of the linear power instead of raw samples.
    pub smooth: bool,
    pub smooth_window_m: f64,
}

impl Default for GroundFitOptions {
    fn default() -> Self {
        Self {
            eps_min: 1.0,
            eps_max: 30.0,
            eps_step: 0.25,
            gain_decades: 2.0,
            eps_resolution: 0.01,
            smooth: false,
            smooth_window_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundFitResult {
    pub eps_r_hat: f64,
    pub g_hat: f64,
    /// Mean squared dB residual at the optimum.
    pub residual_mse_db2: f64,
    /// Final search step in `ε_r`.
    pub eps_step: f64,
}

/// Two-ray mean power at `rx`.
pub fn theoretical_mean_power(
    rx: Point2,
    permittivity: f64,
    gain: f64,
    tx: Point2,
    antenna_height: f64,
    wavelength: f64,
) -> Result<f64, FitError> {
    Ok(two_ray_terms(tx, rx, wavelength, gain, permittivity, antenna_height)?.mean_power(wavelength))
}

/// `(α_Tx, α_g)` at `rx` under the fitted parameters; `α_g` is signed.
pub fn path_amplitudes_at(
    rx: Point2,
    fit: &GroundFitResult,
    tx: Point2,
    antenna_height: f64,
    wavelength: f64,
) -> Result<(f64, f64), FitError> {
    let t = two_ray_terms(tx, rx, wavelength, fit.g_hat, fit.eps_r_hat, antenna_height)?;
    Ok((t.alpha_direct, t.alpha_ground))
}

/// Ground-path frequency at the window's reference point and its upper
/// bound over all transmitter directions: `ψ_g = cos φ_Tx (1 − cos θ)` and
/// `1 − cos θ` with `θ = atan(2h / l_Tx)`.
pub fn ground_psi_bound(tx: Point2, window: &ArrayWindow, antenna_height: f64) -> (f64, f64) {
    let r = window.reference_point();
    let to_tx = tx - r;
    let l = to_tx.norm();
    let theta = (2.0 * antenna_height / l).atan();
    let bound = 1.0 - theta.cos();
    let cos_phi = to_tx.dot(window.direction) / l;
    (cos_phi * bound, bound)
}

fn smoothed_db(measurements: &RouteMeasurements, width: f64) -> Vec<f64> {
    let s = &measurements.samples;
    let half = 0.5 * width;
    let mut out = Vec::with_capacity(s.len());
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut acc = 0.0;
    for i in 0..s.len() {
        let centre = s[i].arclen;
        while hi < s.len() && s[hi].arclen <= centre + half {
            acc += s[hi].power;
            hi += 1;
        }
        while s[lo].arclen < centre - half {
            acc -= s[lo].power;
            lo += 1;
        }
        out.push(10.0 * (acc / (hi - lo) as f64).log10());
    }
    out
}

struct Problem {
    /// Per-sample (l_Tx, measured dB).
    samples: Vec<(f64, f64)>,
    height: f64,
    wavelength: f64,
}

impl Problem {
    /// Model in dB for unit gain, per sample.
    fn unit_model_db(&self, eps: f64) -> Vec<f64> {
        let k = 2.0 * PI / self.wavelength;
        self.samples
            .iter()
            .map(|&(l, _)| {
                // Same expressions as `two_ray_terms`, on distances only.
                let lg = 2.0 * ((0.5 * l).powi(2) + self.height.powi(2)).sqrt();
                let theta = (2.0 * self.height / l).atan();
                let (s, c) = theta.sin_cos();
                let z = (eps - c * c).max(0.0).sqrt() / eps;
                let gamma = (s - z) / (s + z);
                let scale = self.wavelength / (4.0 * PI);
                let a = scale / l;
                let g = scale * gamma / lg;
                let p = a * a + g * g + 2.0 * a * g * (k * (l - lg)).cos();
                10.0 * p.max(f64::MIN_POSITIVE).log10()
            })
            .collect()
    }

    /// Residual moments for `ε`: mean and variance of `measured − model`.
    fn moments(&self, eps: f64) -> (f64, f64) {
        let model = self.unit_model_db(eps);
        let n = model.len() as f64;
        let r: Vec<f64> = self.samples.iter().zip(&model).map(|(s, m)| s.1 - m).collect();
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }
}

/// Minimizes the mean squared dB error against the two-ray mean over
/// `(ε_r, G)`: a grid over `ε_r` with the gain solved exactly per cell, then
/// step-halving refinement of `ε_r`. Grid ties resolve to the lowest `ε_r`.
pub fn fit_ground_params(
    boundary: &RouteMeasurements,
    tx: Point2,
    antenna_height: f64,
    wavelength: f64,
    options: &GroundFitOptions,
) -> Result<GroundFitResult, FitError> {
    let n = boundary.len();
    if n < MIN_FIT_SAMPLES {
        return Err(FitError::InsufficientSamples(n));
    }
    for (i, s) in boundary.samples.iter().enumerate() {
        if !(s.power > 0.0 && s.power.is_finite()) {
            return Err(FitError::BadSample(i));
        }
    }
    let distances: Vec<f64> = boundary.samples.iter().map(|s| tx.distance(s.position)).collect();
    let (lmin, lmax) = distances
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
    if lmin < 1e-9 || lmax - lmin < 1e-6 {
        return Err(FitError::DegenerateGeometry);
    }
    let measured: Vec<f64> = if options.smooth {
        smoothed_db(boundary, options.smooth_window_m)
    } else {
        boundary.samples.iter().map(|s| s.power_db).collect()
    };
    let problem = Problem {
        samples: distances.into_iter().zip(measured).collect(),
        height: antenna_height,
        wavelength,
    };

    // Gain anchor from the strongest sample, assuming the direct path alone.
    let (l0, p0) = boundary
        .samples
        .iter()
        .zip(&problem.samples)
        .map(|(s, &(l, _))| (l, s.power))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let g0_db = 20.0 * (4.0 * PI * l0 * p0.sqrt() / wavelength).log10();
    let span_db = 20.0 * options.gain_decades;
    let eps_count = ((options.eps_max - options.eps_min) / options.eps_step).round() as usize + 1;

    let (g_lo, g_hi) = (g0_db - span_db, g0_db + span_db);
    // For fixed ε the dB objective is quadratic in 20·log10 G, so the best
    // gain is the mean residual, clamped to the search range.
    let profile = |eps: f64| {
        let (mean, var) = problem.moments(eps);
        let g = mean.clamp(g_lo, g_hi);
        (var + (mean - g).powi(2), g)
    };
    let grid: Vec<(f64, f64, f64)> = (0..eps_count)
        .into_par_iter()
        .map(|i| {
            let eps = options.eps_min + i as f64 * options.eps_step;
            let (f, g) = profile(eps);
            (f, eps, g)
        })
        .collect();
    let mut best = grid[0];
    for &cell in &grid[1..] {
        if cell.0 < best.0 {
            best = cell;
        }
    }

    let (mut f, mut eps, mut g_db) = best;
    let mut de = options.eps_step;
    while de > options.eps_resolution {
        de *= 0.5;
        let mut moved = true;
        while moved {
            moved = false;
            for cand in [eps - de, eps + de] {
                if cand < options.eps_min || cand > options.eps_max {
                    continue;
                }
                let (fc, gc) = profile(cand);
                if fc < f {
                    (f, eps, g_db, moved) = (fc, cand, gc, true);
                    break;
                }
            }
        }
    }
    Ok(GroundFitResult {
        eps_r_hat: eps,
        g_hat: 10f64.powf(g_db / 20.0),
        residual_mse_db2: f,
        eps_step: de,
    })
}
