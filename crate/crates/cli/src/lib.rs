//! Command implementations behind the `raymap` binary.
//!
//! Each `run_*` function reads its inputs, writes its outputs into the
//! output directory and returns a short text report. Given the same config
//! and seed every file written is byte-identical across runs.

pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use raymap_core::channel_sim::{boundary_route, clean_signal, oracle_ray_makeup, polyline_route, simulate_route_power, to_db, SimError};
use raymap_core::config::{ConfigError, RunConfig};
use raymap_core::formats::{
    self, heatmap_rows, oracle_ray_rows, peak_rows, ray_rows, FormatError, GridRow, OracleGridRow, OracleRayRow, RayRow,
};
use raymap_core::ground_fit::{fit_ground_params, FitError, GroundFitResult};
use raymap_core::metrics::{self, aoa_errors, oracle_profile_rows, power_errors, profile_correlation, MetricsError};
use raymap_core::predictor::{
    interior_grid, power_per_angle_profile, predict_points, BoundaryData, PredictError, PredictorOptions, ProfileAxis,
};
use raymap_core::{Point2, RouteMeasurements};

pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const ORACLE_GRID_FILE: &str = "oracle_grid.csv";
pub const ORACLE_RAYS_FILE: &str = "oracle_rays.csv";
pub const GROUND_FIT_FILE: &str = "ground_fit.txt";
pub const PEAKS_FILE: &str = "peaks.csv";
pub const HEATMAP_FILE: &str = "spectrum_heatmap.csv";
pub const PREDICTION_FILE: &str = "prediction_grid.csv";
pub const RAYS_FILE: &str = "rays.csv";
pub const PROFILE_FILE: &str = "profile.csv";
pub const ORACLE_PROFILE_FILE: &str = "oracle_profile.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const METRICS_FILE: &str = "metrics.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for unreadable or invalid inputs, 3 when valid inputs do not meet a
    /// precondition (coverage, clearance, matching grids).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Format(FormatError::Csv { .. } | FormatError::Parse { .. }) => 2,
            CliError::Format(FormatError::Io { .. }) | CliError::Io { .. } => 2,
            _ => 3,
        }
    }
}

/// Command-line settings that replace the config file's values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_db: Option<f64>,
    pub beta_th: Option<f64>,
    pub window_m: Option<f64>,
    pub scan_step_deg: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(seed) = self.seed {
            config.scenario.seed = seed;
        }
        if let Some(snr) = self.snr_db {
            config.scenario.snr_db = Some(snr);
        }
        if let Some(b) = self.beta_th {
            config.beta_th = b;
        }
        if let Some(w) = self.window_m {
            config.window_m = w;
            config.clearance = config.clearance.max(0.5 * w);
        }
        if let Some(s) = self.scan_step_deg {
            config.scan_step = s.to_radians();
        }
        config.validate()
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::from_path(path)?;
    overrides.apply(&mut config)?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn grid(config: &RunConfig) -> Vec<Point2> {
    interior_grid(&config.enclosure, config.grid_step, config.clearance)
}

/// Boundary measurements along the perimeter, plus true power and ray
/// makeup on the prediction grid.
pub fn run_simulate(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    create_dir(out)?;
    let route = boundary_route(&config.enclosure, config.spacing);
    let measurements = simulate_route_power(&config.scenario, &route)?;
    formats::write_boundary(&out.join(BOUNDARY_FILE), &measurements)?;

    let points = grid(config);
    let mut oracle = Vec::with_capacity(points.len());
    let mut rays: Vec<OracleRayRow> = Vec::new();
    for &p in &points {
        let power = clean_signal(&config.scenario, p)?.norm_sqr();
        let makeup = oracle_ray_makeup(&config.scenario, p, Point2::new(1.0, 0.0))?;
        oracle.push(OracleGridRow {
            x_m: p.x,
            y_m: p.y,
            oracle_power_db: to_db(power),
            n_rays: makeup.objects.len(),
        });
        rays.extend(oracle_ray_rows(&makeup));
    }
    formats::write_rows(&out.join(ORACLE_GRID_FILE), &oracle)?;
    formats::write_rows(&out.join(ORACLE_RAYS_FILE), &rays)?;
    Ok(format!(
        "boundary samples: {}\noracle grid points: {}\n",
        measurements.len(),
        oracle.len()
    ))
}

fn predictor_options(config: &RunConfig, smooth: bool) -> PredictorOptions {
    let mut options = config.predictor_options();
    options.fit.smooth = smooth;
    options
}

fn fit_report(fit: &GroundFitResult) -> String {
    format!(
        "eps_r_hat = {:.4}\ng_hat = {:.6}\nresidual_mse_db2 = {:.4e}\n",
        fit.eps_r_hat, fit.g_hat, fit.residual_mse_db2
    )
}

pub fn run_fit_ground(config: &RunConfig, boundary: &Path, smooth: bool, out: &Path) -> Result<String, CliError> {
    create_dir(out)?;
    let measurements = formats::read_boundary(boundary)?;
    let options = predictor_options(config, smooth);
    let s = &config.scenario;
    let fit = fit_ground_params(&measurements, s.tx, s.antenna_height, s.wavelength, &options.fit)?;
    formats::write_ground_fit(&out.join(GROUND_FIT_FILE), &fit)?;
    Ok(fit_report(&fit))
}

fn boundary_data(config: &RunConfig, measurements: RouteMeasurements, smooth: bool) -> Result<BoundaryData, CliError> {
    let s = &config.scenario;
    Ok(BoundaryData::build(
        config.enclosure.clone(),
        measurements,
        s.tx,
        s.antenna_height,
        s.wavelength,
        predictor_options(config, smooth),
    )?)
}

/// Peak tables of every boundary window and a spectrum heatmap along the
/// perimeter.
pub fn run_estimate(config: &RunConfig, boundary: &Path, smooth: bool, svg: bool, out: &Path) -> Result<String, CliError> {
    create_dir(out)?;
    let data = boundary_data(config, formats::read_boundary(boundary)?, smooth)?;
    let peaks = peak_rows(&data);
    formats::write_rows(&out.join(PEAKS_FILE), &peaks)?;
    // About one spectrum every 5 cm keeps the heatmap readable.
    let stride = ((0.05 / config.spacing).round() as usize).max(1);
    let bin_stride = (data.options.zero_pad / 4).max(1);
    let heatmap = heatmap_rows(&data, stride, bin_stride)?;
    formats::write_rows(&out.join(HEATMAP_FILE), &heatmap)?;
    if svg {
        let cells: Vec<(f64, f64, f64)> = heatmap.iter().map(|r| (r.arclen_m, r.psi, r.normalized_power)).collect();
        let doc = svg::heatmap(&cells, "arc length (m)", "psi", "boundary spectrum");
        write_text(&out.join("spectrum_heatmap.svg"), &doc)?;
    }
    let windows = data.windows().count();
    let mut report = fit_report(&data.ground_fit);
    let _ = writeln!(report, "windows: {windows}\npeaks: {}", peaks.len());
    Ok(report)
}

/// Ray makeup and power on the interior grid, and the route profile when a
/// route is configured.
pub fn run_predict(config: &RunConfig, boundary: &Path, smooth: bool, svg: bool, out: &Path) -> Result<String, CliError> {
    create_dir(out)?;
    let data = boundary_data(config, formats::read_boundary(boundary)?, smooth)?;
    let points = grid(config);
    let results = predict_points(&points, &data, config.scan_step)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<GridRow> = results.iter().map(GridRow::from).collect();
    let rays: Vec<RayRow> = results.iter().flat_map(ray_rows).collect();
    formats::write_rows(&out.join(PREDICTION_FILE), &rows)?;
    formats::write_rows(&out.join(RAYS_FILE), &rays)?;
    if svg {
        let cells: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.x_m, r.y_m, r.predicted_power_db)).collect();
        write_text(&out.join("prediction_grid.svg"), &svg::heatmap(&cells, "x (m)", "y (m)", "predicted power (dB)"))?;
    }

    let mut report = fit_report(&data.ground_fit);
    let with_rays = rows.iter().filter(|r| r.n_rays > 0).count();
    let _ = writeln!(report, "grid points: {}", rows.len());
    let _ = writeln!(report, "object rays: {}", rays.len());
    let _ = writeln!(report, "points with object rays: {with_rays}");
    if let Some(max) = rows.iter().map(|r| r.n_rays).max() {
        let _ = writeln!(report, "most rays at one point: {max}");
    }
    if config.route.len() >= 2 {
        let route = polyline_route(&config.route, config.route_spacing);
        let profile = power_per_angle_profile(&route, &data, ProfileAxis::AngleDeg)?;
        formats::write_profile(&out.join(PROFILE_FILE), &profile, ProfileAxis::AngleDeg)?;
        let _ = writeln!(report, "profile rows: {}", profile.len());
    }
    write_text(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// Predicted and true power-per-angle (or per |ψ|) along the configured
/// route.
pub fn run_profile(
    config: &RunConfig,
    boundary: &Path,
    by_psi: bool,
    smooth: bool,
    svg: bool,
    out: &Path,
) -> Result<String, CliError> {
    if config.route.len() < 2 {
        return Err(ConfigError::MissingKey {
            section: "prediction".into(),
            key: "route".into(),
        }
        .into());
    }
    create_dir(out)?;
    let axis = if by_psi { ProfileAxis::PsiAbs } else { ProfileAxis::AngleDeg };
    let data = boundary_data(config, formats::read_boundary(boundary)?, smooth)?;
    let route = polyline_route(&config.route, config.route_spacing);
    let predicted = power_per_angle_profile(&route, &data, axis)?;
    let truth = oracle_profile_rows(&config.scenario, &route, axis)?;
    formats::write_profile(&out.join(PROFILE_FILE), &predicted, axis)?;
    formats::write_profile(&out.join(ORACLE_PROFILE_FILE), &truth, axis)?;
    let (label, bin) = match axis {
        ProfileAxis::AngleDeg => ("angle (deg)", 2.0),
        ProfileAxis::PsiAbs => ("|psi|", 0.02),
    };
    if svg {
        let cells: Vec<(f64, f64, f64)> = predicted.iter().map(|r| (r.arclen, r.coordinate, r.normalized_power)).collect();
        write_text(&out.join("profile.svg"), &svg::heatmap(&cells, "route position (m)", label, "normalized power"))?;
    }
    let mut report = format!("route samples: {}\nprofile rows: {}\n", route.len(), predicted.len());
    match profile_correlation(&predicted, &truth, config.route_spacing, bin) {
        Some(c) => {
            let _ = writeln!(report, "correlation with oracle profile: {c:.4}");
        }
        None => report.push_str("correlation with oracle profile: undefined\n"),
    }
    Ok(report)
}

/// Input files for [`run_evaluate`]. Ray files are optional; without them
/// the angle statistics are skipped.
#[derive(Debug, Clone)]
pub struct EvaluateInputs {
    pub predicted: PathBuf,
    pub oracle: PathBuf,
    pub rays: Option<PathBuf>,
    pub oracle_rays: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub oracle_profile: Option<PathBuf>,
}

impl EvaluateInputs {
    /// The files the other commands write into `dir`; optional ones are
    /// used when present.
    pub fn in_dir(dir: &Path) -> Self {
        let existing = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            predicted: dir.join(PREDICTION_FILE),
            oracle: dir.join(ORACLE_GRID_FILE),
            rays: existing(RAYS_FILE),
            oracle_rays: existing(ORACLE_RAYS_FILE),
            profile: existing(PROFILE_FILE),
            oracle_profile: existing(ORACLE_PROFILE_FILE),
        }
    }
}

fn stats_line(name: &str, s: &metrics::ErrorStats, unit: &str) -> String {
    format!(
        "{name}: n = {}, median = {:.3} {unit}, mean = {:.3} {unit}, p90 = {:.3} {unit}, max = {:.3} {unit}\n",
        s.count, s.median, s.mean, s.p90, s.max
    )
}

pub fn run_evaluate(inputs: &EvaluateInputs, out: &Path) -> Result<String, CliError> {
    let predicted: Vec<GridRow> = formats::read_rows(&inputs.predicted)?;
    let oracle: Vec<OracleGridRow> = formats::read_rows(&inputs.oracle)?;
    let power = power_errors(&predicted, &oracle)?;
    let mut report = stats_line("|power error|", &power.all, "dB");
    match &power.excluding_fades {
        Some(s) => report.push_str(&stats_line(
            &format!("|power error| without fades below {:.1} dB", power.fade_threshold_db),
            s,
            "dB",
        )),
        None => report.push_str("every point is a deep fade\n"),
    }
    if let (Some(r), Some(o)) = (&inputs.rays, &inputs.oracle_rays) {
        let rays: Vec<RayRow> = formats::read_rows(r)?;
        let truth: Vec<OracleRayRow> = formats::read_rows(o)?;
        let aoa = aoa_errors(&rays, &truth);
        let _ = writeln!(
            report,
            "rays: {} predicted, {} true, {} at points without true rays",
            aoa.predicted_rays, aoa.oracle_rays, aoa.unmatched
        );
        if let Some(s) = &aoa.errors {
            report.push_str(&stats_line("angle error", s, "deg"));
        }
    }
    if let (Some(p), Some(o)) = (&inputs.profile, &inputs.oracle_profile) {
        let (axis, a) = formats::read_profile(p)?;
        let (_, b) = formats::read_profile(o)?;
        let bin = if axis == ProfileAxis::AngleDeg { 2.0 } else { 0.02 };
        let spacing = arclen_spacing(&a).or_else(|| arclen_spacing(&b)).unwrap_or(0.1);
        match profile_correlation(&a, &b, spacing, bin) {
            Some(c) => {
                let _ = writeln!(report, "profile correlation: {c:.4}");
            }
            None => report.push_str("profile correlation: undefined\n"),
        }
    }
    create_dir(out)?;
    write_text(&out.join(METRICS_FILE), &report)?;
    Ok(report)
}

/// Smallest positive gap between distinct route positions.
fn arclen_spacing(rows: &[raymap_core::predictor::ProfileRow]) -> Option<f64> {
    let mut s: Vec<f64> = rows.iter().map(|r| r.arclen).collect();
    s.sort_by(f64::total_cmp);
    s.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 1e-9).min_by(f64::total_cmp)
}
