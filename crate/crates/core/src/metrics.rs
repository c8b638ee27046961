//! Comparison of predictions against the simulator's ground truth.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::channel_sim::{oracle_ray_makeup, Scenario, SimError};
use crate::formats::{GridRow, OracleGridRow, OracleRayRow, RayRow};
use crate::geometry::{angle_difference, Point2};
use crate::predictor::{ProfileAxis, ProfileRow};

/// Points whose oracle power is this far below the grid maximum are deep
/// fades.
pub const DEEP_FADE_DB: f64 = 30.0;

const POSITION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction has {predicted} points, oracle has {oracle}")]
    GridMismatch { predicted: usize, oracle: usize },
    #[error("row {row}: predicted point ({px}, {py}) does not match oracle point ({ox}, {oy})")]
    PointMismatch {
        row: usize,
        px: f64,
        py: f64,
        ox: f64,
        oy: f64,
    },
    #[error("nothing to compare")]
    Empty,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Summary of a sample of non-negative errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub p90: f64,
    pub max: f64,
}

/// Linearly interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            } else {
                sorted[n - 1]
            }
        }
    }
}

impl ErrorStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            median: percentile(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p90: percentile(&v, 0.9),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerErrorReport {
    pub all: ErrorStats,
    /// Stats without deep fades; `None` if every point is one.
    pub excluding_fades: Option<ErrorStats>,
    pub fade_threshold_db: f64,
}

/// `|predicted − oracle|` in dB over a grid. Rows must come in the same
/// order at the same points.
pub fn power_errors(predicted: &[GridRow], oracle: &[OracleGridRow]) -> Result<PowerErrorReport, MetricsError> {
    if predicted.len() != oracle.len() {
        return Err(MetricsError::GridMismatch {
            predicted: predicted.len(),
            oracle: oracle.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (row, (p, o)) in predicted.iter().zip(oracle).enumerate() {
        if (p.x_m - o.x_m).abs() > POSITION_TOLERANCE || (p.y_m - o.y_m).abs() > POSITION_TOLERANCE {
            return Err(MetricsError::PointMismatch {
                row,
                px: p.x_m,
                py: p.y_m,
                ox: o.x_m,
                oy: o.y_m,
            });
        }
    }
    let max = oracle.iter().map(|o| o.oracle_power_db).fold(f64::NEG_INFINITY, f64::max);
    let threshold = max - DEEP_FADE_DB;
    let errors: Vec<f64> = predicted
        .iter()
        .zip(oracle)
        .map(|(p, o)| (p.predicted_power_db - o.oracle_power_db).abs())
        .collect();
    let kept: Vec<f64> = errors
        .iter()
        .zip(oracle)
        .filter(|(_, o)| o.oracle_power_db >= threshold)
        .map(|(e, _)| *e)
        .collect();
    Ok(PowerErrorReport {
        all: ErrorStats::from_values(&errors).ok_or(MetricsError::Empty)?,
        excluding_fades: ErrorStats::from_values(&kept),
        fade_threshold_db: threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaReport {
    /// Degrees, each predicted ray against the nearest true ray at its point.
    pub errors: Option<ErrorStats>,
    /// Predicted rays at points without any true object ray.
    pub unmatched: usize,
    pub predicted_rays: usize,
    pub oracle_rays: usize,
}

fn point_key(x: f64, y: f64) -> (i64, i64) {
    ((x / POSITION_TOLERANCE).round() as i64, (y / POSITION_TOLERANCE).round() as i64)
}

pub fn aoa_errors(predicted: &[RayRow], oracle: &[OracleRayRow]) -> AoaReport {
    let mut truth: BTreeMap<(i64, i64), Vec<f64>> = BTreeMap::new();
    for o in oracle {
        truth.entry(point_key(o.x_m, o.y_m)).or_default().push(o.angle_deg.to_radians());
    }
    let mut errors = Vec::new();
    let mut unmatched = 0;
    for p in predicted {
        let nearest = truth.get(&point_key(p.x_m, p.y_m)).and_then(|angles| {
            angles
                .iter()
                .map(|&t| angle_difference(p.angle_deg.to_radians(), t))
                .min_by(f64::total_cmp)
        });
        match nearest {
            Some(e) => errors.push(e.to_degrees()),
            None => unmatched += 1,
        }
    }
    AoaReport {
        errors: ErrorStats::from_values(&errors),
        unmatched,
        predicted_rays: predicted.len(),
        oracle_rays: oracle.len(),
    }
}

/// True object-ray profile along a route, on the same axis and
/// normalization as the predicted one.
pub fn oracle_profile_rows(
    scenario: &Scenario,
    route: &[(Point2, f64)],
    axis: ProfileAxis,
) -> Result<Vec<ProfileRow>, MetricsError> {
    let mut rows = Vec::new();
    for i in 0..route.len() {
        let (p, arclen) = route[i];
        let next = if i + 1 < route.len() { route[i + 1].0 - p } else if i > 0 { p - route[i - 1].0 } else { Point2::new(1.0, 0.0) };
        let dir = next.normalized().unwrap_or(Point2::new(1.0, 0.0));
        let m = oracle_ray_makeup(scenario, p, dir)?;
        let cos_tx = Point2::from_angle(m.direct.arrival).dot(dir);
        for o in &m.objects {
            let coordinate = match axis {
                ProfileAxis::AngleDeg => o.arrival.to_degrees(),
                ProfileAxis::PsiAbs => (cos_tx - Point2::from_angle(o.arrival).dot(dir)).abs(),
            };
            rows.push(ProfileRow {
                arclen,
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

/// Pearson correlation of two profiles rasterized on shared cells of
/// `arclen_bin` by `coordinate_bin`; power landing in the same cell is summed.
/// Returns `None` when either raster is constant.
pub fn profile_correlation(a: &[ProfileRow], b: &[ProfileRow], arclen_bin: f64, coordinate_bin: f64) -> Option<f64> {
    let cell = |r: &ProfileRow| {
        (
            (r.arclen / arclen_bin).round() as i64,
            (r.coordinate / coordinate_bin).floor() as i64,
        )
    };
    let mut grid: BTreeMap<(i64, i64), (f64, f64)> = BTreeMap::new();
    for r in a {
        grid.entry(cell(r)).or_default().0 += r.normalized_power;
    }
    for r in b {
        grid.entry(cell(r)).or_default().1 += r.normalized_power;
    }
    // Cells empty in both profiles: every route position times every
    // coordinate bin seen in either.
    let rows: std::collections::BTreeSet<i64> = grid.keys().map(|k| k.0).collect();
    let cols: std::collections::BTreeSet<i64> = grid.keys().map(|k| k.1).collect();
    let total = (rows.len() * cols.len()) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (x, y) in grid.values() {
        sa += x;
        sb += y;
    }
    let (ma, mb) = (sa / total, sb / total);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in grid.values() {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    let empty = total - grid.len() as f64;
    cov += empty * ma * mb;
    va += empty * ma * ma;
    vb += empty * mb * mb;
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grids(offset: f64) -> (Vec<GridRow>, Vec<OracleGridRow>) {
        let oracle: Vec<OracleGridRow> = (0..20)
            .map(|i| OracleGridRow {
                x_m: 0.1 * i as f64,
                y_m: 1.0,
                oracle_power_db: -40.0 - i as f64,
                n_rays: 1,
            })
            .collect();
        let predicted = oracle
            .iter()
            .map(|o| GridRow {
                x_m: o.x_m,
                y_m: o.y_m,
                predicted_power_db: o.oracle_power_db + offset,
                n_rays: 1,
            })
            .collect();
        (predicted, oracle)
    }

    #[test]
    fn identical_grids_have_zero_error() {
        let (p, o) = grids(0.0);
        let r = power_errors(&p, &o).unwrap();
        assert_eq!(r.all.median, 0.0);
        assert_eq!(r.all.p90, 0.0);
        assert_eq!(r.all.mean, 0.0);
    }

    #[test]
    fn constant_offset_gives_its_size() {
        let (p, o) = grids(3.0);
        let r = power_errors(&p, &o).unwrap();
        assert_relative_eq!(r.all.median, 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.all.p90, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn deep_fades_are_excluded() {
        let (mut p, mut o) = grids(0.0);
        o[5].oracle_power_db = -100.0;
        p[5].predicted_power_db = -60.0;
        let r = power_errors(&p, &o).unwrap();
        assert_eq!(r.all.max, 40.0);
        let kept = r.excluding_fades.unwrap();
        assert_eq!(kept.count, 19);
        assert_eq!(kept.max, 0.0);
        assert_eq!(r.fade_threshold_db, -70.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let (p, o) = grids(0.0);
        assert!(matches!(power_errors(&p[..3], &o), Err(MetricsError::GridMismatch { .. })));
        let mut shifted = p.clone();
        shifted[2].x_m += 0.05;
        assert!(matches!(power_errors(&shifted, &o), Err(MetricsError::PointMismatch { row: 2, .. })));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert_relative_eq!(percentile(&v, 0.9), 3.6);
        assert_eq!(percentile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn aoa_errors_use_nearest_true_ray_at_the_point() {
        let ray = |x: f64, a: f64| RayRow {
            x_m: x,
            y_m: 0.0,
            angle_deg: a,
            alpha: 1.0,
            phase_rad: 0.0,
            psi1: 0.0,
            psi2: 0.0,
            residual: 0.0,
        };
        let truth = |x: f64, a: f64| OracleRayRow { x_m: x, y_m: 0.0, angle_deg: a, alpha: 1.0, phase_rad: 0.0 };
        let r = aoa_errors(
            &[ray(1.0, 359.5), ray(1.0, 91.0), ray(2.0, 10.0)],
            &[truth(1.0, 0.5), truth(1.0, 90.0)],
        );
        let e = r.errors.unwrap();
        assert_eq!(e.count, 2);
        assert_relative_eq!(e.max, 1.0, epsilon = 1e-9);
        assert_eq!(r.unmatched, 1);
    }

    #[test]
    fn profile_correlation_bounds() {
        let rows: Vec<ProfileRow> = (0..10)
            .map(|i| ProfileRow {
                arclen: 0.1 * i as f64,
                coordinate: 30.0 + i as f64,
                normalized_power: 1.0,
            })
            .collect();
        assert_relative_eq!(profile_correlation(&rows, &rows, 0.1, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        let elsewhere: Vec<ProfileRow> = rows.iter().map(|r| ProfileRow { coordinate: r.coordinate + 100.0, ..*r }).collect();
        assert!(profile_correlation(&rows, &elsewhere, 0.1, 1.0).unwrap() < 0.0);
        assert_eq!(profile_correlation(&rows, &[], 0.1, 1.0), None);
    }
}
