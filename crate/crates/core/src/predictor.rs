//! Ray makeup prediction at unvisited points.
//!
//! Every line through a prediction point crosses the boundary twice. A path
//! travelling along that line shows up in the power spectrum of the boundary
//! windows at both crossings, at a frequency fixed by the line's direction.
//! Scanning directions and keeping only those confirmed by both windows
//! yields the object rays at the point; their amplitudes and phases are
//! carried in from the boundary estimates.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel_sim::{
    to_db, two_ray_terms, DirectPath, GroundPath, ObjectRay, RayMakeup, RouteMeasurements, SimError,
};
use crate::geometry::{
    aoa_relative_to_array, angle_difference, distance_to_segment, enclosure_intersections,
    normalize_angle, ArrayWindow, Enclosure, GeometryError, Point2, RayLine,
};
use crate::ground_fit::{fit_ground_params, ground_psi_bound, FitError, GroundFitOptions, GroundFitResult};
use crate::spectral::{
    detect_peaks, refine_peaks, window_spectrum, Peak, PeakOptions, PeakTable, RefineOptions, SpectralError, Spectrum, SpectrumOptions, Taper,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("point ({x}, {y}) is {distance} m from the boundary, need at least {required} m")]
    InsufficientClearance {
        x: f64,
        y: f64,
        distance: f64,
        required: f64,
    },
    #[error("edge {edge} is not covered by measurements: {reason}")]
    NoBoundaryCoverage { edge: usize, reason: String },
    #[error("path amplitudes must be positive")]
    ZeroAmplitude,
    #[error("point is {distance} m off the ray segment")]
    PointOffRay { distance: f64 },
    #[error("scan step must lie in (0, 1°], got {0} rad")]
    InvalidScanStep(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorOptions {
    pub window_m: f64,
    pub beta_th: f64,
    pub taper: Taper,
    pub zero_pad: usize,
    /// Largest |ψ| mismatch between a candidate and a matched peak.
    pub tol_psi: f64,
    pub scan_step: f64,
    /// Peaks must exceed this multiple of the window's noise floor.
    pub noise_factor: f64,
    /// Weakest path considered, as a fraction of the direct-path amplitude.
    pub min_path_ratio: f64,
    /// Reject candidates whose amplitude grows from the upstream to the
    /// downstream crossing, which would put the ray's source downstream.
    pub require_decay: bool,
    /// Reject candidates whose phases at the two crossings disagree by more
    /// than this, radians.
    pub max_phase_mismatch: Option<f64>,
    /// Reject candidates whose summed frequency residual over both crossings
    /// exceeds this.
    pub max_residual: Option<f64>,
    /// Joint sinusoid fit of each window after FFT peak picking.
    pub refine: Option<RefineOptions>,
    pub fit: GroundFitOptions,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        Self {
            window_m: 1.0,
            beta_th: crate::spectral::DEFAULT_BETA_TH,
            taper: Taper::Hann,
            zero_pad: crate::spectral::DEFAULT_ZERO_PAD,
            tol_psi: 0.06,
            scan_step: 0.5f64.to_radians(),
            noise_factor: 5.0,
            min_path_ratio: 0.02,
            require_decay: true,
            max_phase_mismatch: Some(1.5),
            max_residual: Some(0.04),
            refine: Some(RefineOptions::default()),
            fit: GroundFitOptions::default(),
        }
    }
}

/// One boundary window with its peaks and the fitted two-ray field at its
/// reference point.
#[derive(Debug, Clone)]
pub struct BoundaryWindow {
    pub edge: usize,
    pub window: ArrayWindow,
    pub table: PeakTable,
    /// Direct plus ground complex signal at the reference point.
    pub two_ray: Complex64,
    /// Cosine of the direct-path angle of arrival at the window centre.
    pub cos_tx: f64,
}

#[derive(Debug, Clone)]
struct EdgeSamples {
    /// Offsets along the edge, ascending.
    offsets: Vec<f64>,
    windows: Vec<BoundaryWindow>,
    /// Measured minus fitted mean power, one value per offset.
    residual: Vec<f64>,
    /// Index of each window's first sample.
    starts: Vec<usize>,
}

/// Boundary measurements with the ground fit and per-sample peak tables.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub enclosure: Enclosure,
    pub measurements: RouteMeasurements,
    pub tx: Point2,
    pub wavelength: f64,
    pub antenna_height: f64,
    pub ground_fit: GroundFitResult,
    pub options: PredictorOptions,
    edges: Vec<EdgeSamples>,
}

const ON_EDGE_TOLERANCE: f64 = 1e-6;

impl BoundaryData {
    /// Fits the ground model, then forms a window around every sample of
    /// every edge. Windows stay on their edge: near a vertex the window is
    /// shifted inward and its reference point stays at the sample.
    pub fn build(
        enclosure: Enclosure,
        measurements: RouteMeasurements,
        tx: Point2,
        antenna_height: f64,
        wavelength: f64,
        options: PredictorOptions,
    ) -> Result<Self, PredictError> {
        let fit = fit_ground_params(&measurements, tx, antenna_height, wavelength, &options.fit)?;
        Self::with_fit(enclosure, measurements, tx, antenna_height, wavelength, options, fit)
    }

    /// As [`BoundaryData::build`] with a given ground fit.
    pub fn with_fit(
        enclosure: Enclosure,
        measurements: RouteMeasurements,
        tx: Point2,
        antenna_height: f64,
        wavelength: f64,
        options: PredictorOptions,
        ground_fit: GroundFitResult,
    ) -> Result<Self, PredictError> {
        let mut per_edge: Vec<Vec<(f64, usize)>> = vec![Vec::new(); enclosure.edge_count()];
        for (i, s) in measurements.samples.iter().enumerate() {
            for e in enclosure.edges() {
                if distance_to_segment(s.position, e.start, e.end) < ON_EDGE_TOLERANCE {
                    let offset = (s.position - e.start).dot(e.direction());
                    per_edge[e.index].push((offset, i));
                }
            }
        }

        let mut edges = Vec::with_capacity(per_edge.len());
        for (index, mut list) in per_edge.into_iter().enumerate() {
            list.sort_by(|a, b| a.0.total_cmp(&b.0));
            list.dedup_by(|a, b| (a.0 - b.0).abs() < ON_EDGE_TOLERANCE);
            edges.push(Self::edge_windows(
                &enclosure,
                &measurements,
                index,
                &list,
                tx,
                antenna_height,
                wavelength,
                &options,
                &ground_fit,
            )?);
        }
        Ok(Self {
            enclosure,
            measurements,
            tx,
            wavelength,
            antenna_height,
            ground_fit,
            options,
            edges,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn edge_windows(
        enclosure: &Enclosure,
        measurements: &RouteMeasurements,
        index: usize,
        list: &[(f64, usize)],
        tx: Point2,
        antenna_height: f64,
        wavelength: f64,
        options: &PredictorOptions,
        fit: &GroundFitResult,
    ) -> Result<EdgeSamples, PredictError> {
        let edge = enclosure.edge(index);
        let gap = |reason: String| PredictError::NoBoundaryCoverage { edge: index, reason };
        if list.len() < 2 {
            return Err(gap(format!("{} samples", list.len())));
        }
        let limit = wavelength / 4.0;
        let first = list[0].0;
        let last = list[list.len() - 1].0;
        if first > limit || edge.length() - last > limit {
            return Err(gap(format!("samples span {first:.3}..{last:.3} of {:.3} m", edge.length())));
        }
        let step = (last - first) / (list.len() - 1) as f64;
        for pair in list.windows(2) {
            let d = pair[1].0 - pair[0].0;
            if d > limit * (1.0 + 1e-9) {
                return Err(gap(format!("gap of {d:.4} m at offset {:.3}", pair[0].0)));
            }
            if (d - step).abs() > 1e-3 * step {
                return Err(gap(format!("non-uniform spacing {d:.5} m vs {step:.5} m")));
            }
        }
        let n = (options.window_m / step).round() as usize + 1;
        if n > list.len() {
            return Err(gap(format!("edge shorter than the {} m window", options.window_m)));
        }

        let samples = &measurements.samples;
        let direction = edge.direction();
        let baseline: Vec<f64> = list
            .iter()
            .map(|&(_, i)| {
                two_ray_terms(tx, samples[i].position, wavelength, fit.g_hat, fit.eps_r_hat, antenna_height)
                    .map(|t| t.mean_power(wavelength))
            })
            .collect::<Result<_, _>>()?;
        let residual: Vec<f64> = list
            .iter()
            .zip(&baseline)
            .map(|(&(_, i), b)| samples[i].power - b)
            .collect();

        let windows = (0..list.len())
            .into_par_iter()
            .map(|j| {
                let start = j.saturating_sub(n / 2).min(list.len() - n);
                let mut window = ArrayWindow::new(samples[list[start].1].position, direction, step, n);
                window.reference = list[j].0 - list[start].0;
                let r = window.reference_point();
                let spectrum = residual_spectrum(&residual[start..start + n], &window, tx, antenna_height, wavelength, options)?;
                let terms = two_ray_terms(tx, r, wavelength, fit.g_hat, fit.eps_r_hat, antenna_height)?;
                let two_ray = terms.signal(wavelength);
                let peak_opts = PeakOptions {
                    beta_th: options.beta_th,
                    noise_factor: options.noise_factor,
                    min_magnitude: options.min_path_ratio * two_ray.norm_sqr() * spectrum.weight_sum,
                    min_relative: 0.0,
                };
                let mut table = detect_peaks(&spectrum, &peak_opts)?;
                if let Some(refine) = &options.refine {
                    table = refine_peaks(&spectrum, &table, refine);
                }
                let to_tx = (tx - window.center()).normalized().ok_or(PredictError::ZeroAmplitude)?;
                Ok(BoundaryWindow {
                    edge: index,
                    window,
                    table,
                    two_ray,
                    cos_tx: to_tx.dot(direction),
                })
            })
            .collect::<Result<Vec<_>, PredictError>>()?;
        Ok(EdgeSamples {
            offsets: list.iter().map(|x| x.0).collect(),
            windows,
            starts: (0..list.len()).map(|j| j.saturating_sub(n / 2).min(list.len() - n)).collect(),
            residual,
        })
    }

    /// Spectrum of the `index`-th window on `edge`, as used for its peak
    /// table. Returns `None` past the end of the edge.
    pub fn window_spectrum(&self, edge: usize, index: usize) -> Option<Result<Spectrum, PredictError>> {
        let e = self.edges.get(edge)?;
        let w = e.windows.get(index)?;
        let start = e.starts[index];
        let n = w.window.sample_count;
        Some(residual_spectrum(
            &e.residual[start..start + n],
            &w.window,
            self.tx,
            self.antenna_height,
            self.wavelength,
            &self.options,
        ))
    }

    /// Number of windows on each edge.
    pub fn windows_per_edge(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.windows.len()).collect()
    }

    /// Edge offset of each window's reference sample on `edge`.
    pub fn window_offsets(&self, edge: usize) -> &[f64] {
        &self.edges[edge].offsets
    }

    /// The window whose reference sample is closest to `offset` on `edge`.
    pub fn window_at(&self, edge: usize, offset: f64) -> &BoundaryWindow {
        let e = &self.edges[edge];
        let j = e.offsets.partition_point(|&o| o < offset);
        let pick = match (j.checked_sub(1), e.offsets.get(j)) {
            (Some(i), Some(&next)) if offset - e.offsets[i] <= next - offset => i,
            (Some(i), None) => i,
            _ => j,
        };
        &e.windows[pick]
    }

    /// All windows, edge by edge in route order.
    pub fn windows(&self) -> impl Iterator<Item = &BoundaryWindow> {
        self.edges.iter().flat_map(|e| e.windows.iter())
    }

    /// Fitted direct plus ground signal at `r`.
    pub fn two_ray_at(&self, r: Point2) -> Result<(Complex64, f64, f64), PredictError> {
        let t = two_ray_terms(
            self.tx,
            r,
            self.wavelength,
            self.ground_fit.g_hat,
            self.ground_fit.eps_r_hat,
            self.antenna_height,
        )?;
        Ok((t.signal(self.wavelength), t.alpha_direct, t.alpha_ground))
    }

    fn check_point(&self, p: Point2) -> Result<(), PredictError> {
        let required = 0.5 * self.options.window_m;
        let distance = if self.enclosure.contains(p) {
            self.enclosure.distance_to_boundary(p)
        } else {
            0.0
        };
        if distance < required {
            return Err(PredictError::InsufficientClearance {
                x: p.x,
                y: p.y,
                distance,
                required,
            });
        }
        Ok(())
    }
}

fn residual_spectrum(
    residual: &[f64],
    window: &ArrayWindow,
    tx: Point2,
    antenna_height: f64,
    wavelength: f64,
    options: &PredictorOptions,
) -> Result<Spectrum, PredictError> {
    let (_, bound) = ground_psi_bound(tx, window, antenna_height);
    let spec_opts = SpectrumOptions {
        zero_pad: options.zero_pad,
        taper: options.taper,
        ground_bound: bound,
        ..SpectrumOptions::default()
    };
    Ok(window_spectrum(residual, window, wavelength, &spec_opts)?)
}

/// Match of a candidate direction against one boundary window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMatch {
    pub crossing: Point2,
    pub edge: usize,
    /// Expected signed frequency `cos φ_Tx − cos φ_c` at the window.
    pub psi_signed: f64,
    pub peak: Peak,
    /// Complex object-ray signal at the crossing point.
    pub signal: Complex64,
}

impl WindowMatch {
    pub fn residual(&self) -> f64 {
        (self.peak.psi_abs - self.psi_signed.abs()).abs()
    }
}

/// A direction through the prediction point confirmed at both crossings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRay {
    /// World-frame direction the ray arrives from, radians in [0, 2π).
    pub arrival: f64,
    /// Upstream crossing (the ray passes it before the point).
    pub upstream: WindowMatch,
    pub downstream: WindowMatch,
}

impl CandidateRay {
    pub fn residual(&self) -> f64 {
        self.upstream.residual() + self.downstream.residual()
    }

    /// Phase disagreement between the downstream estimate and the upstream
    /// estimate carried along the ray, radians in [0, π].
    pub fn phase_mismatch(&self, wavelength: f64) -> f64 {
        let k = TAU / wavelength;
        let carried = self.upstream.signal.arg() + k * self.upstream.crossing.distance(self.downstream.crossing);
        angle_difference(carried, self.downstream.signal.arg())
    }

    fn strength(&self) -> f64 {
        self.upstream.peak.magnitude + self.downstream.peak.magnitude
    }
}

fn match_window(
    data: &BoundaryData,
    hit: &crate::geometry::BoundaryHit,
    arrival: Point2,
    source: Option<Point2>,
) -> Option<WindowMatch> {
    let w = data.window_at(hit.edge, hit.edge_offset);
    // Frequencies are compared at the window centre, which differs from the
    // crossing for windows pushed inward at a vertex.
    let centre = w.window.center();
    let towards = source.and_then(|s| (s - centre).normalized()).unwrap_or(arrival);
    let psi_signed = w.cos_tx - towards.dot(w.window.direction);
    let psi = psi_signed.abs();
    if psi <= w.table.psi_min || psi > 2.0 {
        return None;
    }
    let (_, peak) = w.table.nearest(psi, data.options.tol_psi)?;
    // Peak at +ψ is W·c0·conj(a); the conjugate pair carries the other sign.
    let value = Complex64::from_polar(peak.magnitude, peak.phase_at_signed(psi_signed));
    let at_ref = (value.conj() * w.two_ray) / (w.table.weight_sum * w.two_ray.norm_sqr());
    // Move from the window reference to the crossing along the ray.
    let k = TAU / data.wavelength;
    let travel = -arrival;
    let shift = travel.dot(hit.point - w.window.reference_point());
    Some(WindowMatch {
        crossing: hit.point,
        edge: hit.edge,
        psi_signed,
        peak: *peak,
        signal: at_ref * Complex64::from_polar(1.0, k * shift),
    })
}

/// Validates one arrival direction at `p`; `None` when either window lacks a
/// matching peak or the line grazes a vertex or an edge.
pub fn validate_direction(
    p: Point2,
    data: &BoundaryData,
    arrival: f64,
) -> Result<Option<CandidateRay>, PredictError> {
    let ray = RayLine::new(p, arrival + PI);
    let crossing = match enclosure_intersections(&ray, &data.enclosure) {
        Ok(c) => c,
        Err(GeometryError::DegenerateRay { .. } | GeometryError::VertexHit { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let dir = ray.arrival_direction();
    let matched = |source: Option<Point2>| {
        Some((
            match_window(data, &crossing.r1, dir, source)?,
            match_window(data, &crossing.r2, dir, source)?,
        ))
    };
    let Some((mut upstream, mut downstream)) = matched(None) else {
        return Ok(None);
    };
    // With decay between the crossings, place the virtual source where
    // inverse-distance decay puts it and match again from there.
    let (a1, a2) = (upstream.signal.norm(), downstream.signal.norm());
    if a1 > a2 {
        let span = crossing.r1.point.distance(crossing.r2.point);
        let source = crossing.r1.point + dir * (span * a2 / (a1 - a2));
        match matched(Some(source)) {
            Some(m) => (upstream, downstream) = m,
            None => return Ok(None),
        }
    }
    let candidate = CandidateRay {
        arrival: normalize_angle(arrival),
        upstream,
        downstream,
    };
    if data.options.require_decay && downstream.signal.norm() > upstream.signal.norm() {
        return Ok(None);
    }
    if let Some(limit) = data.options.max_residual {
        if candidate.residual() > limit {
            return Ok(None);
        }
    }
    if let Some(limit) = data.options.max_phase_mismatch {
        if candidate.phase_mismatch(data.wavelength) > limit {
            return Ok(None);
        }
    }
    Ok(Some(candidate))
}

/// Scans arrival directions over the full circle at `scan_step` and returns
/// one ray per cluster of adjacent validated directions, the one with the
/// smallest combined frequency residual, refined on a finer local grid.
/// `reverse` scans the circle in the opposite order; the result is the same.
pub fn scan_candidate_rays(
    p: Point2,
    data: &BoundaryData,
    scan_step: f64,
    reverse: bool,
) -> Result<Vec<CandidateRay>, PredictError> {
    if !(scan_step > 0.0 && scan_step <= 1f64.to_radians() + 1e-12) {
        return Err(PredictError::InvalidScanStep(scan_step));
    }
    data.check_point(p)?;
    let count = (TAU / scan_step).round() as usize;
    let step = TAU / count as f64;
    let mut order: Vec<usize> = (0..count).collect();
    if reverse {
        order.reverse();
    }
    let mut valid: Vec<Option<CandidateRay>> = vec![None; count];
    for &i in &order {
        valid[i] = validate_direction(p, data, i as f64 * step)?;
    }

    // Clusters of consecutive indices, wrapping around the circle.
    let Some(gap) = (0..count).find(|&i| valid[i].is_none()) else {
        // Every direction validated: nothing meaningful to report.
        return Ok(Vec::new());
    };
    let mut clusters: Vec<Vec<CandidateRay>> = Vec::new();
    let mut current: Vec<CandidateRay> = Vec::new();
    for offset in 1..=count {
        match valid[(gap + offset) % count] {
            Some(c) => current.push(c),
            None if !current.is_empty() => clusters.push(std::mem::take(&mut current)),
            None => {}
        }
    }

    let mut out = Vec::with_capacity(clusters.len());
    for cluster in clusters {
        let best = *cluster
            .iter()
            .min_by(|a, b| {
                a.residual()
                    .total_cmp(&b.residual())
                    .then(b.strength().total_cmp(&a.strength()))
            })
            .expect("non-empty cluster");
        let mut refined = best;
        const FINE: usize = 20;
        for j in 0..=2 * FINE {
            let a = best.arrival + (j as f64 - FINE as f64) * step / FINE as f64;
            if let Some(c) = validate_direction(p, data, a)? {
                if c.residual() < refined.residual() {
                    refined = c;
                }
            }
        }
        out.push(refined);
    }
    out.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    Ok(out)
}

/// Path amplitude at `r_p` between two boundary estimates, from
/// inverse-distance decay about an unknown virtual source upstream of `r_1`:
/// `α_p = α_1 α_2 ‖r_1 − r_2‖ / (α_1 ‖r_1 − r_p‖ + α_2 ‖r_2 − r_p‖)`.
pub fn predict_amplitude(
    alpha_1: f64,
    alpha_2: f64,
    r_1: Point2,
    r_2: Point2,
    r_p: Point2,
) -> Result<f64, PredictError> {
    if !(alpha_1 > 0.0 && alpha_2 > 0.0) {
        return Err(PredictError::ZeroAmplitude);
    }
    let off = distance_to_segment(r_p, r_1, r_2);
    if off > 1e-6 {
        return Err(PredictError::PointOffRay { distance: off });
    }
    let d1 = r_1.distance(r_p);
    let d2 = r_2.distance(r_p);
    Ok(alpha_1 * alpha_2 * r_1.distance(r_2) / (alpha_1 * d1 + alpha_2 * d2))
}

/// `e^{j 2π l_p / λ}` for a path whose peak phase at `r_1` is
/// `μ = (2π/λ)(l_Tx,1 − l_1)`, continued from `r_1` to `r_p` along the ray.
pub fn predict_phase(mu: f64, l_tx_1: f64, r_1: Point2, r_p: Point2, wavelength: f64) -> Complex64 {
    let k = TAU / wavelength;
    Complex64::from_polar(1.0, -mu) * Complex64::from_polar(1.0, k * l_tx_1) * Complex64::from_polar(1.0, k * r_1.distance(r_p))
}

/// Per-ray record of how a predicted object ray was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayDiagnostic {
    pub arrival: f64,
    pub alpha: f64,
    pub phase: f64,
    pub psi_1: f64,
    pub psi_2: f64,
    pub residual: f64,
    pub alpha_1: f64,
    pub alpha_2: f64,
    pub edge_1: usize,
    pub edge_2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub point: Point2,
    pub predicted_power_db: f64,
    pub makeup: RayMakeup,
    pub diagnostics: Vec<RayDiagnostic>,
}

/// Direct and ground paths from the fit, one object ray per validated
/// candidate, and the power of their complex sum.
pub fn predict_channel(p: Point2, data: &BoundaryData, scan_step: f64) -> Result<PredictionResult, PredictError> {
    let rays = scan_candidate_rays(p, data, scan_step, false)?;
    let axis = Point2::new(1.0, 0.0);
    let terms = two_ray_terms(
        data.tx,
        p,
        data.wavelength,
        data.ground_fit.g_hat,
        data.ground_fit.eps_r_hat,
        data.antenna_height,
    )?;
    let to_tx = (data.tx - p) * (1.0 / terms.l_direct);
    let direct = DirectPath {
        alpha: terms.alpha_direct,
        length: terms.l_direct,
        arrival: to_tx.angle(),
        aoa: aoa_relative_to_array(to_tx, axis)?,
    };
    let ground = GroundPath {
        alpha: terms.alpha_ground,
        length: terms.l_ground,
        grazing: terms.grazing,
    };
    let k = TAU / data.wavelength;
    let mut objects = Vec::with_capacity(rays.len());
    let mut diagnostics = Vec::with_capacity(rays.len());
    for ray in &rays {
        let (u, d) = (&ray.upstream, &ray.downstream);
        let alpha = predict_amplitude(u.signal.norm(), d.signal.norm(), u.crossing, d.crossing, p)?;
        let phase = Complex64::from_polar(1.0, u.signal.arg() + k * u.crossing.distance(p));
        let arrival_dir = Point2::from_angle(ray.arrival);
        objects.push(ObjectRay {
            alpha,
            arrival: ray.arrival,
            aoa: aoa_relative_to_array(arrival_dir, axis)?,
            phase,
            length: None,
        });
        diagnostics.push(RayDiagnostic {
            arrival: ray.arrival,
            alpha,
            phase: phase.arg(),
            psi_1: u.psi_signed.abs(),
            psi_2: d.psi_signed.abs(),
            residual: ray.residual(),
            alpha_1: u.signal.norm(),
            alpha_2: d.signal.norm(),
            edge_1: u.edge,
            edge_2: d.edge,
        });
    }
    let makeup = RayMakeup {
        point: p,
        array_direction: axis,
        direct,
        ground,
        objects,
    };
    let predicted_power_db = to_db(makeup.power(data.wavelength));
    Ok(PredictionResult {
        point: p,
        predicted_power_db,
        makeup,
        diagnostics,
    })
}

/// Grid points inside the enclosure at least `clearance` from its boundary.
pub fn interior_grid(enclosure: &Enclosure, step: f64, clearance: f64) -> Vec<Point2> {
    let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for v in enclosure.vertices() {
        lo = Point2::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Point2::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    let nx = ((hi.x - lo.x) / step).floor() as usize;
    let ny = ((hi.y - lo.y) / step).floor() as usize;
    let mut out = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let p = Point2::new(lo.x + i as f64 * step, lo.y + j as f64 * step);
            if enclosure.contains(p) && enclosure.distance_to_boundary(p) >= clearance - 1e-12 {
                out.push(p);
            }
        }
    }
    out
}

/// Predictions for many points, evaluated in parallel; order is preserved.
pub fn predict_points(
    points: &[Point2],
    data: &BoundaryData,
    scan_step: f64,
) -> Vec<Result<PredictionResult, PredictError>> {
    points.par_iter().map(|&p| predict_channel(p, data, scan_step)).collect()
}

/// Axis for [`power_per_angle_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileAxis {
    /// World-frame arrival angle in degrees, [0, 360).
    AngleDeg,
    /// `|cos φ_Tx − cos φ|` relative to the local route direction.
    PsiAbs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub arclen: f64,
    pub coordinate: f64,
    /// Ray power `α²` divided by the largest over the whole route.
    pub normalized_power: f64,
}

/// Ray power per arrival angle (or per |ψ|) along a route of prediction
/// points.
pub fn power_per_angle_profile(
    route: &[(Point2, f64)],
    data: &BoundaryData,
    axis: ProfileAxis,
) -> Result<Vec<ProfileRow>, PredictError> {
    let points: Vec<Point2> = route.iter().map(|r| r.0).collect();
    let results = predict_points(&points, data, data.options.scan_step)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (i, res) in results.iter().enumerate() {
        let dir = route_direction(route, i);
        let cos_tx = Point2::from_angle(res.makeup.direct.arrival).dot(dir);
        for o in &res.makeup.objects {
            let coordinate = match axis {
                ProfileAxis::AngleDeg => o.arrival.to_degrees(),
                ProfileAxis::PsiAbs => (cos_tx - Point2::from_angle(o.arrival).dot(dir)).abs(),
            };
            rows.push(ProfileRow {
                arclen: route[i].1,
                coordinate,
                normalized_power: o.alpha * o.alpha,
            });
        }
    }
    let max = rows.iter().map(|r| r.normalized_power).fold(0.0, f64::max);
    if max > 0.0 {
        for r in &mut rows {
            r.normalized_power /= max;
        }
    }
    Ok(rows)
}

fn route_direction(route: &[(Point2, f64)], i: usize) -> Point2 {
    let (a, b) = if i + 1 < route.len() {
        (route[i].0, route[i + 1].0)
    } else if i > 0 {
        (route[i - 1].0, route[i].0)
    } else {
        return Point2::new(1.0, 0.0);
    };
    (b - a).normalized().unwrap_or(Point2::new(1.0, 0.0))
}

/// Smallest angular distance from `angle` to any of `targets`, radians.
pub fn nearest_angle_error(angle: f64, targets: &[f64]) -> Option<f64> {
    targets
        .iter()
        .map(|&t| angle_difference(angle, t))
        .min_by(|a, b| a.total_cmp(b))
}
