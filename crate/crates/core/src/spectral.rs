//! Magnitude-only angle estimation on a virtual array.
//!
//! The received power along a straight stretch of route contains, for each
//! scattered path, a cross term with the direct path that oscillates at the
//! λ-normalized spatial frequency `ψ = cos φ_Tx − cos φ_n`. The windowed
//! spectrum of the power therefore has a pair of conjugate peaks at `±ψ`
//! whose magnitude is `α_Tx α_n` times the taper's coherent gain and whose
//! phase is `±(2π/λ)(l_Tx − l_n)`.
//!
//! Sign convention: the spectrum is evaluated as
//! `C(ψ) = Σ_k x_k exp(+j 2π ψ (d_k − d_ref) / λ)`, so the peak at the signed
//! frequency `ψ_n` carries phase `+(2π/λ)(l_Tx − l_n)` referenced to the
//! window's reference point. [`Peak::phase`] stores the phase of the
//! positive-frequency peak; [`Peak::phase_at_signed`] returns the phase for
//! either sign.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::geometry::ArrayWindow;

/// Default zero-padding factor.
pub const DEFAULT_ZERO_PAD: usize = 16;
/// Default relative peak threshold.
pub const DEFAULT_BETA_TH: f64 = 0.15;
/// Fewest samples accepted in one window.
pub const MIN_WINDOW_SAMPLES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("window has {got} samples, need at least {MIN_WINDOW_SAMPLES}")]
    WindowTooShort { got: usize },
    #[error("sample spacing {spacing} m exceeds λ/4 = {limit} m")]
    UndersampledWindow { spacing: f64, limit: f64 },
    #[error("expected {expected} samples for the window, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("spectrum has no bins in the retained band")]
    EmptySpectrum,
    #[error("β_th must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("direct-path amplitude must be positive, got {0}")]
    ZeroDirectPath(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Taper {
    Rectangular,
    #[default]
    Hann,
}

impl Taper {
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Rectangular => vec![1.0; n],
            Taper::Hann => {
                let denom = (n.max(2) - 1) as f64;
                (0..n)
                    .map(|k| 0.5 - 0.5 * (TAU * k as f64 / denom).cos())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    pub zero_pad: usize,
    pub taper: Taper,
    /// Largest possible ground-path frequency at this window; the excluded
    /// low band is at least twice this.
    pub ground_bound: f64,
    /// Width of the excluded low band in natural bins.
    pub low_cut_bins: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            zero_pad: DEFAULT_ZERO_PAD,
            taper: Taper::Hann,
            ground_bound: 0.0,
            low_cut_bins: 1.0,
        }
    }
}

/// Windowed spectrum of mean-removed power over one virtual array.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Signed λ-normalized frequencies, ascending, within [−2, 2].
    pub psi: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Bins with `|ψ| <= psi_min` are excluded from peak search.
    pub psi_min: f64,
    /// Natural resolution `λ / L` of the window.
    pub resolution: f64,
    /// Median magnitude over the band above |ψ| = 2, where no path can
    /// appear; zero when the sampling leaves no such band.
    pub noise_floor: f64,
    /// Coherent gain of the taper (sum of weights).
    pub weight_sum: f64,
    /// Mean of the input samples before removal.
    pub level: f64,
    pub window: ArrayWindow,
    wavelength: f64,
    centered: Vec<f64>,
    weights: Vec<f64>,
    tapered: Vec<f64>,
}

impl Spectrum {
    pub fn is_retained(&self, psi: f64) -> bool {
        psi.abs() > self.psi_min && psi.abs() <= 2.0
    }

    /// Exact DTFT of the tapered samples at signed frequency `psi`.
    pub fn evaluate(&self, psi: f64) -> Complex64 {
        let k = TAU / self.wavelength;
        let rot = Complex64::from_polar(1.0, k * psi * self.window.spacing);
        let mut z = Complex64::from_polar(1.0, k * psi * self.window.offset(0));
        let mut acc = Complex64::new(0.0, 0.0);
        for &x in &self.tapered {
            acc += z * x;
            z *= rot;
        }
        acc
    }

    /// Largest magnitude over the retained band.
    pub fn retained_max(&self) -> f64 {
        self.psi
            .iter()
            .zip(&self.values)
            .filter(|(p, _)| self.is_retained(**p))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }
}

thread_local! {
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

/// Spectrum of one window of power samples (linear units).
pub fn window_spectrum(
    samples: &[f64],
    window: &ArrayWindow,
    wavelength: f64,
    options: &SpectrumOptions,
) -> Result<Spectrum, SpectralError> {
    let n = window.sample_count;
    if samples.len() != n {
        return Err(SpectralError::LengthMismatch {
            expected: n,
            got: samples.len(),
        });
    }
    if n < MIN_WINDOW_SAMPLES {
        return Err(SpectralError::WindowTooShort { got: n });
    }
    let limit = wavelength / 4.0;
    if window.spacing > limit * (1.0 + 1e-9) {
        return Err(SpectralError::UndersampledWindow {
            spacing: window.spacing,
            limit,
        });
    }

    let mean = samples.iter().sum::<f64>() / n as f64;
    let weights = options.taper.weights(n);
    let weight_sum: f64 = weights.iter().sum();
    let centered: Vec<f64> = samples.iter().map(|&x| x - mean).collect();
    let tapered: Vec<f64> = centered.iter().zip(&weights).map(|(&x, &w)| x * w).collect();

    let m = n * options.zero_pad.max(1);
    let mut buf: Vec<Complex64> = tapered
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(m)
        .collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(m).process(&mut buf));

    let k = TAU / wavelength;
    let bin_psi = wavelength / (m as f64 * window.spacing);
    let mut psi = Vec::new();
    let mut values = Vec::new();
    let mut out_of_band = Vec::new();
    // Ascending signed frequency: bins −(m−1)/2 ..= m/2.
    let lo = -(((m - 1) / 2) as i64);
    let hi = (m / 2) as i64;
    let rot = Complex64::from_polar(1.0, -k * bin_psi * window.reference);
    let mut shift = Complex64::from_polar(1.0, -k * lo as f64 * bin_psi * window.reference);
    for b in lo..=hi {
        let f = b as f64 * bin_psi;
        let idx = b.rem_euclid(m as i64) as usize;
        // Real input: C(ψ) = conj(X[b]) rotated to the reference point.
        let v = buf[idx].conj() * shift;
        shift *= rot;
        if f.abs() <= 2.0 {
            psi.push(f);
            values.push(v);
        } else if f > 2.0 + wavelength / window.length() {
            out_of_band.push(v.norm());
        }
    }
    let noise_floor = median(&mut out_of_band);
    let resolution = wavelength / window.length();
    let psi_min = (2.0 * options.ground_bound).max(options.low_cut_bins * resolution);
    Ok(Spectrum {
        psi,
        values,
        psi_min,
        resolution,
        noise_floor,
        weight_sum,
        level: mean,
        window: *window,
        wavelength,
        centered,
        weights,
        tapered,
    })
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// One spectral peak on the positive-frequency side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub psi_abs: f64,
    pub magnitude: f64,
    /// Phase of the spectrum at `+psi_abs`.
    pub phase: f64,
}

impl Peak {
    /// Phase of the peak at signed frequency `±psi_abs`.
    pub fn phase_at_signed(&self, signed_psi: f64) -> f64 {
        if signed_psi >= 0.0 {
            self.phase
        } else {
            -self.phase
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    pub beta_th: f64,
    /// Peaks must also exceed this multiple of the spectrum's noise floor.
    pub noise_factor: f64,
    /// Absolute magnitude floor.
    pub min_magnitude: f64,
    /// Floor relative to `|level| · W`: a path whose amplitude is this
    /// fraction of the direct path's would produce a peak of that size.
    pub min_relative: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            beta_th: DEFAULT_BETA_TH,
            noise_factor: 5.0,
            min_magnitude: 0.0,
            min_relative: 0.02,
        }
    }
}

/// Peaks detected in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakTable {
    pub peaks: Vec<Peak>,
    pub beta_th: f64,
    pub threshold: f64,
    pub psi_min: f64,
    pub resolution: f64,
    pub weight_sum: f64,
    pub window: ArrayWindow,
}

impl PeakTable {
    /// The peak closest to `psi_abs`, if any lies within `tolerance`.
    pub fn nearest(&self, psi_abs: f64, tolerance: f64) -> Option<(usize, &Peak)> {
        self.peaks
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p, (p.psi_abs - psi_abs).abs()))
            .filter(|(_, _, d)| *d <= tolerance)
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .map(|(i, p, _)| (i, p))
    }
}

/// Local maxima of `|C|` over the retained positive band that clear the
/// relative threshold `β_th · max`, the noise floor and the absolute floor.
/// Locations are refined by parabolic interpolation; magnitude and phase are
/// then read from the exact DTFT at the refined location. Peaks closer than
/// one natural bin are merged, keeping the larger.
pub fn detect_peaks(spectrum: &Spectrum, options: &PeakOptions) -> Result<PeakTable, SpectralError> {
    if !(options.beta_th > 0.0 && options.beta_th < 1.0) {
        return Err(SpectralError::InvalidThreshold(options.beta_th));
    }
    let band: Vec<usize> = (0..spectrum.psi.len())
        .filter(|&i| spectrum.psi[i] > 0.0 && spectrum.is_retained(spectrum.psi[i]))
        .collect();
    if band.is_empty() {
        return Err(SpectralError::EmptySpectrum);
    }
    let mags: Vec<f64> = spectrum.values.iter().map(|v| v.norm()).collect();
    let max = band.iter().map(|&i| mags[i]).fold(0.0, f64::max);
    let threshold = (options.beta_th * max)
        .max(options.noise_factor * spectrum.noise_floor)
        .max(options.min_magnitude)
        .max(options.min_relative * spectrum.level.abs() * spectrum.weight_sum);

    let first = band[0];
    let last = *band.last().expect("non-empty");
    let bin = spectrum.psi.get(1).map_or(0.0, |p| p - spectrum.psi[0]);
    let mut found: Vec<Peak> = Vec::new();
    for i in (first + 1)..last {
        let (a, b, c) = (mags[i - 1], mags[i], mags[i + 1]);
        if !(b > a && b >= c && b >= threshold && b > 0.0) {
            continue;
        }
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        let guess = spectrum.psi[i] + delta.clamp(-0.5, 0.5) * bin;
        let psi = refine_peak(spectrum, guess, bin);
        let value = spectrum.evaluate(psi);
        found.push(Peak {
            psi_abs: psi,
            magnitude: value.norm().max(b),
            phase: value.arg(),
        });
    }

    found.sort_by(|x, y| y.magnitude.total_cmp(&x.magnitude));
    let mut kept: Vec<Peak> = Vec::new();
    for p in found {
        if kept
            .iter()
            .all(|k| (k.psi_abs - p.psi_abs).abs() >= spectrum.resolution)
        {
            kept.push(p);
        }
    }
    kept.sort_by(|x, y| x.psi_abs.total_cmp(&y.psi_abs));
    Ok(PeakTable {
        peaks: kept,
        beta_th: options.beta_th,
        threshold,
        psi_min: spectrum.psi_min,
        resolution: spectrum.resolution,
        weight_sum: spectrum.weight_sum,
        window: spectrum.window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Most sinusoids fitted in one window.
    pub max_components: usize,
    pub max_iterations: usize,
    /// Components closer than this fraction of the natural resolution are
    /// merged.
    pub merge_fraction: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_components: 12,
            max_iterations: 60,
            merge_fraction: 0.35,
        }
    }
}

/// Sum of real sinusoids `b + Σ 2 Re(A_i e^{-j k ψ_i d})` fitted to one
/// window.
#[derive(Debug, Clone, PartialEq)]
struct SinusoidFit {
    psi: Vec<f64>,
    amps: Vec<Complex64>,
    offset: f64,
    cost: f64,
}

struct WindowModel<'a> {
    d: Vec<f64>,
    x: &'a [f64],
    w: &'a [f64],
    k: f64,
}

impl WindowModel<'_> {
    /// `e^{jkψd_i}` for every sample; the offsets are uniformly spaced.
    fn phasors(&self, psi: f64) -> Vec<Complex64> {
        let n = self.d.len();
        let step = if n > 1 { self.d[1] - self.d[0] } else { 0.0 };
        let rot = Complex64::from_polar(1.0, self.k * psi * step);
        let mut z = Complex64::from_polar(1.0, self.k * psi * self.d[0]);
        (0..n)
            .map(|_| {
                let out = z;
                z *= rot;
                out
            })
            .collect()
    }

    fn all_phasors(&self, psi: &[f64]) -> Vec<Vec<Complex64>> {
        psi.iter().map(|&p| self.phasors(p)).collect()
    }

    fn evaluate_all(&self, fit: &SinusoidFit, ph: &[Vec<Complex64>]) -> Vec<f64> {
        (0..self.d.len())
            .map(|i| {
                fit.offset
                    + fit
                        .amps
                        .iter()
                        .zip(ph)
                        .map(|(a, z)| 2.0 * (a.re * z[i].re + a.im * z[i].im))
                        .sum::<f64>()
            })
            .collect()
    }

    fn cost(&self, fit: &SinusoidFit) -> f64 {
        let ph = self.all_phasors(&fit.psi);
        self.evaluate_all(fit, &ph)
            .iter()
            .enumerate()
            .map(|(i, m)| self.w[i] * (self.x[i] - m).powi(2))
            .sum()
    }

    /// Weighted linear least squares for the amplitudes at fixed frequencies.
    fn amplitudes(&self, psi: &[f64]) -> Option<SinusoidFit> {
        let n = self.d.len();
        let m = 2 * psi.len() + 1;
        let ph = self.all_phasors(psi);
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, m);
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        for i in 0..n {
            let sw = self.w[i].sqrt();
            a[(i, 0)] = sw;
            for (j, z) in ph.iter().enumerate() {
                a[(i, 1 + 2 * j)] = sw * 2.0 * z[i].re;
                a[(i, 2 + 2 * j)] = sw * 2.0 * z[i].im;
            }
            b[i] = sw * self.x[i];
        }
        let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
        let mut fit = SinusoidFit {
            psi: psi.to_vec(),
            amps: (0..psi.len())
                .map(|j| Complex64::new(sol[1 + 2 * j], sol[2 + 2 * j]))
                .collect(),
            offset: sol[0],
            cost: 0.0,
        };
        fit.cost = self.cost(&fit);
        Some(fit)
    }

    /// Levenberg-Marquardt over all frequencies and amplitudes jointly.
    fn refine(&self, start: SinusoidFit, iterations: usize) -> SinusoidFit {
        let n = self.d.len();
        let m = start.psi.len();
        let p = 3 * m + 1;
        let mut fit = start;
        let mut damping = 1e-3;
        for _ in 0..iterations {
            let mut jac = nalgebra::DMatrix::<f64>::zeros(n, p);
            let mut res = nalgebra::DVector::<f64>::zeros(n);
            let ph = self.all_phasors(&fit.psi);
            let model = self.evaluate_all(&fit, &ph);
            for i in 0..n {
                let sw = self.w[i].sqrt();
                let d = self.d[i];
                res[i] = sw * (self.x[i] - model[i]);
                jac[(i, 0)] = sw;
                for j in 0..m {
                    let (s, c) = (ph[j][i].im, ph[j][i].re);
                    let a = fit.amps[j];
                    jac[(i, 1 + 3 * j)] = sw * 2.0 * c;
                    jac[(i, 2 + 3 * j)] = sw * 2.0 * s;
                    jac[(i, 3 + 3 * j)] = sw * 2.0 * self.k * d * (a.im * c - a.re * s);
                }
            }
            let jt = jac.transpose();
            let h = &jt * &jac;
            let g = &jt * &res;
            let mut improved = false;
            for _ in 0..8 {
                let mut lhs = h.clone();
                for q in 0..p {
                    lhs[(q, q)] += damping * h[(q, q)].max(1e-30);
                }
                let Some(step) = lhs.lu().solve(&g) else {
                    damping *= 10.0;
                    continue;
                };
                let mut trial = fit.clone();
                trial.offset += step[0];
                for j in 0..m {
                    trial.amps[j] += Complex64::new(step[1 + 3 * j], step[2 + 3 * j]);
                    trial.psi[j] = (trial.psi[j] + step[3 + 3 * j]).clamp(1e-6, 2.5);
                }
                trial.cost = self.cost(&trial);
                if trial.cost < fit.cost {
                    let gain = (fit.cost - trial.cost) / fit.cost.max(f64::MIN_POSITIVE);
                    fit = trial;
                    damping = (damping / 3.0).max(1e-12);
                    improved = gain > 1e-8;
                    break;
                }
                damping *= 4.0;
            }
            if !improved {
                break;
            }
        }
        fit
    }
}

/// Refines a peak table by fitting all components of the window jointly.
///
/// Starting from the detected peaks, a sum of real sinusoids is fitted to
/// the mean-removed window samples by weighted least squares (taper
/// weights), then the strongest peak of the residual spectrum is added as a
/// new component until nothing above the table's threshold remains.
/// Components below the excluded low band are fitted but not reported. This
/// separates paths closer in frequency than the taper's main lobe and
/// removes sidelobe leakage between peaks.
pub fn refine_peaks(spectrum: &Spectrum, table: &PeakTable, options: &RefineOptions) -> PeakTable {
    let model = WindowModel {
        d: (0..spectrum.centered.len()).map(|i| spectrum.window.offset(i)).collect(),
        x: &spectrum.centered,
        w: &spectrum.weights,
        k: TAU / spectrum.wavelength,
    };
    let w_sum = spectrum.weight_sum;
    let merge = options.merge_fraction * spectrum.resolution;
    let floor = 0.5 * spectrum.resolution;

    let fit_at = |psi: &[f64]| -> Option<SinusoidFit> {
        let mut psi = psi.to_vec();
        loop {
            let start = model.amplitudes(&psi)?;
            let fit = model.refine(start, options.max_iterations);
            // Merge components that converged onto each other or the floor.
            let mut order: Vec<usize> = (0..fit.psi.len()).collect();
            order.sort_by(|&a, &b| fit.amps[b].norm().total_cmp(&fit.amps[a].norm()));
            let mut keep: Vec<usize> = Vec::new();
            for &i in &order {
                if fit.psi[i] > 0.5 * floor
                    && keep.iter().all(|&j| (fit.psi[i] - fit.psi[j]).abs() >= merge)
                {
                    keep.push(i);
                }
            }
            if keep.len() == fit.psi.len() {
                return Some(fit);
            }
            psi = keep.iter().map(|&i| fit.psi[i]).collect();
        }
    };

    let mut psi: Vec<f64> = table.peaks.iter().map(|p| p.psi_abs).collect();
    let mut fit = match fit_at(&psi) {
        Some(f) => f,
        None => return table.clone(),
    };
    while psi.len() < options.max_components {
        // Strongest remaining component in the residual.
        let fitted = model.evaluate_all(&fit, &model.all_phasors(&fit.psi));
        let residual: Vec<f64> = (0..model.d.len())
            .map(|i| (model.x[i] - fitted[i]) * model.w[i])
            .collect();
        let value = |f: f64| -> f64 {
            residual
                .iter()
                .zip(model.phasors(f))
                .map(|(&r, z)| z * r)
                .sum::<Complex64>()
                .norm()
        };
        let step = spectrum.resolution / 16.0;
        let count = ((2.0 - floor) / step).floor() as usize;
        let (best_psi, best) = (0..=count)
            .map(|i| floor + i as f64 * step)
            .map(|f| (f, value(f)))
            .fold((0.0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if best < table.threshold {
            break;
        }
        psi = fit.psi.clone();
        psi.push(best_psi);
        match fit_at(&psi) {
            Some(f) if f.cost < fit.cost => fit = f,
            _ => break,
        }
        psi = fit.psi.clone();
    }

    let mut peaks: Vec<Peak> = fit
        .psi
        .iter()
        .zip(&fit.amps)
        .filter(|(&p, a)| p > spectrum.psi_min && p <= 2.0 && a.norm() * w_sum >= table.threshold)
        .map(|(&p, a)| Peak {
            psi_abs: p,
            magnitude: a.norm() * w_sum,
            phase: a.arg(),
        })
        .collect();
    peaks.sort_by(|x, y| x.psi_abs.total_cmp(&y.psi_abs));
    PeakTable {
        peaks,
        ..table.clone()
    }
}

/// Golden-section search for the maximum of the exact DTFT magnitude within
/// one padded bin of `guess`.
fn refine_peak(spectrum: &Spectrum, guess: f64, bin: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| spectrum.evaluate(x).norm();
    let (mut a, mut b) = (guess - bin, guess + bin);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let best = 0.5 * (a + b);
    if f(best) >= f(guess) {
        best
    } else {
        guess
    }
}

/// Path amplitude estimate for a single peak.
pub fn path_gain(peak: &Peak, weight_sum: f64, alpha_direct: f64) -> Result<f64, SpectralError> {
    if !(alpha_direct > 0.0) {
        return Err(SpectralError::ZeroDirectPath(alpha_direct));
    }
    Ok(peak.magnitude / (alpha_direct * weight_sum))
}

/// `α_n = |peak| / (α_Tx · W)` for every peak, with `W` the taper's coherent
/// gain.
pub fn estimate_path_gains(table: &PeakTable, alpha_direct: f64) -> Result<Vec<f64>, SpectralError> {
    if !(alpha_direct > 0.0) {
        return Err(SpectralError::ZeroDirectPath(alpha_direct));
    }
    table
        .peaks
        .iter()
        .map(|p| path_gain(p, table.weight_sum, alpha_direct))
        .collect()
}
