//! CSV and text files exchanged between commands.
//!
//! Every table has a header row, comma separators and `.` decimals. Floats
//! are written in shortest round-trip form, so reading a file back yields the
//! same values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_sim::{RayMakeup, RouteMeasurements, RouteSample};
use crate::geometry::Point2;
use crate::ground_fit::GroundFitResult;
use crate::predictor::{BoundaryData, PredictError, PredictionResult, ProfileAxis, ProfileRow};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Predict(#[from] PredictError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> FormatError + '_ {
    move |source| FormatError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `rows` with a header taken from the row type's field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub x_m: f64,
    pub y_m: f64,
    pub arclen_m: f64,
    pub power_db: f64,
}

pub fn write_boundary(path: &Path, m: &RouteMeasurements) -> Result<(), FormatError> {
    let rows: Vec<BoundaryRow> = m
        .samples
        .iter()
        .map(|s| BoundaryRow {
            x_m: s.position.x,
            y_m: s.position.y,
            arclen_m: s.arclen,
            power_db: s.power_db,
        })
        .collect();
    write_rows(path, &rows)
}

pub fn read_boundary(path: &Path) -> Result<RouteMeasurements, FormatError> {
    let rows: Vec<BoundaryRow> = read_rows(path)?;
    Ok(RouteMeasurements {
        samples: rows
            .into_iter()
            .map(|r| RouteSample::from_db(Point2::new(r.x_m, r.y_m), r.arclen_m, r.power_db))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub window_center_x_m: f64,
    pub window_center_y_m: f64,
    pub psi_abs: f64,
    pub magnitude: f64,
    pub phase_rad: f64,
}

/// One row per peak of every boundary window.
pub fn peak_rows(data: &BoundaryData) -> Vec<PeakRow> {
    let mut rows = Vec::new();
    for w in data.windows() {
        let c = w.window.center();
        for p in &w.table.peaks {
            rows.push(PeakRow {
                window_center_x_m: c.x,
                window_center_y_m: c.y,
                psi_abs: p.psi_abs,
                magnitude: p.magnitude,
                phase_rad: p.phase,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub arclen_m: f64,
    pub psi: f64,
    pub normalized_power: f64,
}

/// Spectrum magnitude squared over `0 <= ψ <= 2` for every `stride`-th
/// window and every `bin_stride`-th frequency bin, normalized by the largest
/// value in the table. `arclen_m` is the perimeter position of the window's
/// reference sample.
pub fn heatmap_rows(data: &BoundaryData, stride: usize, bin_stride: usize) -> Result<Vec<HeatmapRow>, FormatError> {
    let stride = stride.max(1);
    let bin_stride = bin_stride.max(1);
    let mut rows = Vec::new();
    for (edge, &count) in data.windows_per_edge().iter().enumerate() {
        let base = data.enclosure.edge_start_arclen(edge);
        let offsets = data.window_offsets(edge);
        for j in (0..count).step_by(stride) {
            let Some(spectrum) = data.window_spectrum(edge, j) else { break };
            let spectrum = spectrum?;
            for (psi, v) in spectrum.psi.iter().zip(&spectrum.values).step_by(bin_stride) {
                if (0.0..=2.0).contains(psi) {
                    rows.push(HeatmapRow {
                        arclen_m: base + offsets[j],
                        psi: *psi,
                        normalized_power: v.norm_sqr(),
                    });
                }
            }
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x_m: f64,
    pub y_m: f64,
    pub predicted_power_db: f64,
    pub n_rays: usize,
}

impl From<&PredictionResult> for GridRow {
    fn from(r: &PredictionResult) -> Self {
        Self {
            x_m: r.point.x,
            y_m: r.point.y,
            predicted_power_db: r.predicted_power_db,
            n_rays: r.makeup.objects.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGridRow {
    pub x_m: f64,
    pub y_m: f64,
    pub oracle_power_db: f64,
    pub n_rays: usize,
}

/// Diagnostics for one predicted object ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayRow {
    pub x_m: f64,
    pub y_m: f64,
    pub angle_deg: f64,
    pub alpha: f64,
    pub phase_rad: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub residual: f64,
}

pub fn ray_rows(r: &PredictionResult) -> Vec<RayRow> {
    r.diagnostics
        .iter()
        .map(|d| RayRow {
            x_m: r.point.x,
            y_m: r.point.y,
            angle_deg: d.arrival.to_degrees(),
            alpha: d.alpha,
            phase_rad: d.phase,
            psi1: d.psi_1,
            psi2: d.psi_2,
            residual: d.residual,
        })
        .collect()
}

/// One true object ray at an oracle grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRayRow {
    pub x_m: f64,
    pub y_m: f64,
    pub angle_deg: f64,
    pub alpha: f64,
    pub phase_rad: f64,
}

pub fn oracle_ray_rows(m: &RayMakeup) -> Vec<OracleRayRow> {
    m.objects
        .iter()
        .map(|o| OracleRayRow {
            x_m: m.point.x,
            y_m: m.point.y,
            angle_deg: o.arrival.to_degrees(),
            alpha: o.alpha,
            phase_rad: o.phase.arg(),
        })
        .collect()
}

fn axis_column(axis: ProfileAxis) -> &'static str {
    match axis {
        ProfileAxis::AngleDeg => "angle_deg",
        ProfileAxis::PsiAbs => "psi_abs",
    }
}

/// Profile table `arclen_m, angle_deg|psi_abs, normalized_power`.
pub fn write_profile(path: &Path, rows: &[ProfileRow], axis: ProfileAxis) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = csv_err(path);
    w.write_record(["arclen_m", axis_column(axis), "normalized_power"]).map_err(&err)?;
    for r in rows {
        w.write_record([r.arclen.to_string(), r.coordinate.to_string(), r.normalized_power.to_string()])
            .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_profile(path: &Path) -> Result<(ProfileAxis, Vec<ProfileRow>), FormatError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let parse_err = |line: usize, message: String| FormatError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let headers = r.headers().map_err(csv_err(path))?.clone();
    let axis = match headers.get(1) {
        Some("angle_deg") => ProfileAxis::AngleDeg,
        Some("psi_abs") => ProfileAxis::PsiAbs,
        other => return Err(parse_err(1, format!("unexpected profile axis column {other:?}"))),
    };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |k: usize| -> Result<f64, FormatError> {
            rec.get(k)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| parse_err(i + 2, format!("column {} is not a number", k + 1)))
        };
        rows.push(ProfileRow {
            arclen: field(0)?,
            coordinate: field(1)?,
            normalized_power: field(2)?,
        });
    }
    Ok((axis, rows))
}

/// Ground fit as `key = value` lines.
pub fn write_ground_fit(path: &Path, fit: &GroundFitResult) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "eps_r_hat = {}", fit.eps_r_hat)
        .and_then(|_| writeln!(w, "g_hat = {}", fit.g_hat))
        .and_then(|_| writeln!(w, "residual_mse_db2 = {}", fit.residual_mse_db2))
        .and_then(|_| writeln!(w, "eps_step = {}", fit.eps_step))
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

pub fn read_ground_fit(path: &Path) -> Result<GroundFitResult, FormatError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let parse_err = |line: usize, message: String| FormatError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut values: [Option<f64>; 4] = [None; 4];
    const KEYS: [&str; 4] = ["eps_r_hat", "g_hat", "residual_mse_db2", "eps_step"];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(i + 1, format!("expected `key = value`, got `{line}`")))?;
        let slot = KEYS
            .iter()
            .position(|&key| key == k.trim())
            .ok_or_else(|| parse_err(i + 1, format!("unknown key `{}`", k.trim())))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("`{}` is not a number", v.trim())))?;
        values[slot] = Some(v);
    }
    let get = |i: usize| values[i].ok_or_else(|| parse_err(0, format!("missing `{}`", KEYS[i])));
    Ok(GroundFitResult {
        eps_r_hat: get(0)?,
        g_hat: get(1)?,
        residual_mse_db2: get(2)?,
        eps_step: get(3)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let m = RouteMeasurements {
            samples: vec![
                RouteSample::from_db(Point2::new(0.1, 1.0 / 3.0), 0.0, -41.123456789012345),
                RouteSample::from_db(Point2::new(1e-17, -2.5), 0.015625, 3.0e-5),
            ],
        };
        write_boundary(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x_m,y_m,arclen_m,power_db\n"));
        assert_eq!(read_boundary(&path).unwrap(), m);
    }

    #[test]
    fn profile_round_trip_keeps_axis() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let rows = vec![
            ProfileRow { arclen: 0.0, coordinate: 123.456, normalized_power: 1.0 },
            ProfileRow { arclen: 0.1, coordinate: 7.0 / 3.0, normalized_power: 0.25 },
        ];
        for axis in [ProfileAxis::AngleDeg, ProfileAxis::PsiAbs] {
            write_profile(&path, &rows, axis).unwrap();
            let (a, back) = read_profile(&path).unwrap();
            assert_eq!(a, axis);
            assert_eq!(back, rows);
        }
    }

    #[test]
    fn ground_fit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let fit = GroundFitResult {
            eps_r_hat: 4.01,
            g_hat: 0.1 + 0.2,
            residual_mse_db2: 1e-30,
            eps_step: 0.001,
        };
        write_ground_fit(&path, &fit).unwrap();
        assert_eq!(read_ground_fit(&path).unwrap(), fit);
        std::fs::write(&path, "eps_r_hat = 4\n").unwrap();
        assert!(matches!(read_ground_fit(&path), Err(FormatError::Parse { .. })));
    }

    #[test]
    fn wrong_columns_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        std::fs::write(&path, "x_m,y_m,oracle_power_db,n_rays\n1,2,-40,0\n").unwrap();
        assert!(read_rows::<OracleGridRow>(&path).is_ok());
        assert!(matches!(read_rows::<GridRow>(&path), Err(FormatError::Csv { .. })));
    }
}
