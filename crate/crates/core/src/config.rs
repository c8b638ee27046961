//! Scenario and run configuration files.
//!
//! The format is line based. Blank lines and text after `#` are ignored.
//! A `[section]` line opens a section; every other line is `key = value`.
//!
//! ```text
//! [tx]
//! x = -6            # metres
//! y = 5
//! wavelength = 0.125
//! antenna_height = 0.5
//! gain = 1          # P_t G_t G_r
//!
//! [ground]
//! permittivity = 4
//!
//! [reflector]       # repeat once per scatterer
//! x = 8
//! y = -6
//! gamma = 1         # or: attenuation = 0.15
//!
//! [enclosure]
//! vertex = 0, 0     # counter-clockwise or clockwise, at least 3
//! vertex = 5, 0
//! vertex = 5, 2
//! vertex = 0, 2
//!
//! [sampling]
//! spacing = 0.015625   # boundary sample spacing, default λ/8
//!
//! [noise]
//! snr_db = 30       # omit for noiseless runs
//! seed = 1
//!
//! [prediction]
//! window_m = 1
//! beta_th = 0.15
//! scan_step_deg = 0.5
//! grid_step = 0.1
//! clearance = 0.5   # default window_m / 2
//! route = 0.5, 1    # profile route vertices, repeatable
//! route = 4.5, 1
//! route_spacing = 0.1
//! ```
//!
//! Angles are given in degrees; everything else is SI.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::channel_sim::{Reflector, Scenario, DEFAULT_WAVELENGTH};
use crate::geometry::{Enclosure, GeometryError, Point2};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("[{section}] is missing `{key}`")]
    MissingKey { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
    #[error("enclosure: {0}")]
    Enclosure(#[from] GeometryError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Everything a run needs: the world, the boundary sampling and the
/// prediction settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub enclosure: Enclosure,
    /// Boundary sample spacing, metres.
    pub spacing: f64,
    pub window_m: f64,
    pub beta_th: f64,
    /// Radians.
    pub scan_step: f64,
    pub grid_step: f64,
    pub clearance: f64,
    pub route: Vec<Point2>,
    pub route_spacing: f64,
}

#[derive(Debug, Default)]
struct Section {
    name: String,
    line: usize,
    values: HashMap<String, (usize, String)>,
    /// Keys that may repeat, in order.
    lists: Vec<(usize, String, String)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.values.remove(key)
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<f64>().map(Some).map_err(|_| ConfigError::Parse {
                line,
                message: format!("`{key}` expects a number, got `{v}`"),
            }),
        }
    }

    fn required(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.number(key)?.ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    fn points(&self, key: &str) -> Result<Vec<Point2>, ConfigError> {
        self.lists
            .iter()
            .filter(|(_, k, _)| k == key)
            .map(|(line, _, v)| parse_point(v, *line))
            .collect()
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.values.into_iter().min_by_key(|(_, (line, _))| *line) {
            Some((key, (line, _))) => Err(ConfigError::Parse {
                line,
                message: format!("unknown key `{key}` in [{}]", self.name),
            }),
            None => Ok(()),
        }
    }
}

fn parse_point(v: &str, line: usize) -> Result<Point2, ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let bad = || ConfigError::Parse {
        line,
        message: format!("expected `x, y`, got `{v}`"),
    };
    if parts.len() != 2 {
        return Err(bad());
    }
    let x = parts[0].parse::<f64>().map_err(|_| bad())?;
    let y = parts[1].parse::<f64>().map_err(|_| bad())?;
    Ok(Point2::new(x, y))
}

const LIST_KEYS: [&str; 2] = ["vertex", "route"];
const SECTIONS: [&str; 7] = ["tx", "ground", "reflector", "enclosure", "sampling", "noise", "prediction"];

fn split_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            if name != "reflector" && sections.iter().any(|s| s.name == name) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("section [{name}] appears twice"),
                });
            }
            sections.push(Section {
                name,
                line,
                ..Section::default()
            });
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let Some(section) = sections.last_mut() else {
            return Err(ConfigError::Parse {
                line,
                message: "key outside any section".into(),
            });
        };
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if LIST_KEYS.contains(&key.as_str()) {
            section.lists.push((line, key, value));
        } else if section.values.insert(key.clone(), (line, value)).is_some() {
            return Err(ConfigError::Parse {
                line,
                message: format!("`{key}` set twice in [{}]", section.name),
            });
        }
    }
    Ok(sections)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections = split_sections(text)?;
        let mut named = |name: &str| -> Section {
            match sections.iter().position(|s| s.name == name) {
                Some(i) => sections.remove(i),
                None => Section {
                    name: name.to_string(),
                    ..Section::default()
                },
            }
        };

        let mut tx = named("tx");
        let mut ground = named("ground");
        let enclosure = named("enclosure");
        let mut sampling = named("sampling");
        let mut noise = named("noise");
        let mut prediction = named("prediction");
        // Only [reflector] sections remain.
        let reflector_sections = std::mem::take(&mut sections);

        let defaults = Scenario::default();
        let wavelength = tx.number("wavelength")?.unwrap_or(DEFAULT_WAVELENGTH);
        let mut scenario = Scenario {
            tx: Point2::new(tx.required("x")?, tx.required("y")?),
            wavelength,
            antenna_height: tx.number("antenna_height")?.unwrap_or(defaults.antenna_height),
            gain: tx.number("gain")?.unwrap_or(defaults.gain),
            permittivity: ground.number("permittivity")?.unwrap_or(defaults.permittivity),
            snr_db: noise.number("snr_db")?,
            seed: 0,
            reflectors: Vec::new(),
        };
        if let Some(seed) = noise.number("seed")? {
            if seed < 0.0 || seed.fract() != 0.0 {
                return Err(ConfigError::Invalid(format!("seed must be a non-negative integer, got {seed}")));
            }
            scenario.seed = seed as u64;
        }
        for mut r in reflector_sections {
            let position = Point2::new(r.required("x")?, r.required("y")?);
            let gamma = r.number("gamma")?;
            let attenuation = r.number("attenuation")?;
            let reflector = match (gamma, attenuation) {
                (Some(_), Some(_)) => {
                    return Err(ConfigError::Parse {
                        line: r.line,
                        message: "give either `gamma` or `attenuation`, not both".into(),
                    })
                }
                (_, Some(a)) => Reflector::with_attenuation(position, a),
                (g, None) => Reflector::new(position, g.unwrap_or(1.0)),
            };
            scenario.reflectors.push(reflector);
            r.finish()?;
        }

        let vertices = enclosure.points("vertex")?;
        if vertices.is_empty() {
            return Err(ConfigError::MissingKey {
                section: "enclosure".into(),
                key: "vertex".into(),
            });
        }
        let region = Enclosure::new(vertices)?;

        let window_m = prediction.number("window_m")?.unwrap_or(1.0);
        let config = RunConfig {
            spacing: sampling.number("spacing")?.unwrap_or(wavelength / 8.0),
            window_m,
            beta_th: prediction.number("beta_th")?.unwrap_or(crate::spectral::DEFAULT_BETA_TH),
            scan_step: prediction.number("scan_step_deg")?.unwrap_or(0.5).to_radians(),
            grid_step: prediction.number("grid_step")?.unwrap_or(0.1),
            clearance: prediction.number("clearance")?.unwrap_or(0.5 * window_m),
            route: prediction.points("route")?,
            route_spacing: prediction.number("route_spacing")?.unwrap_or(0.1),
            scenario,
            enclosure: region,
        };
        for s in [tx, ground, enclosure, sampling, noise, prediction] {
            s.finish()?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scenario
            .validate_against(&self.enclosure)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let lambda = self.scenario.wavelength;
        if !(self.spacing > 0.0 && self.spacing <= lambda / 4.0 * (1.0 + 1e-9)) {
            return bad(format!("spacing {} m must lie in (0, λ/4 = {} m]", self.spacing, lambda / 4.0));
        }
        if !(self.beta_th > 0.0 && self.beta_th < 1.0) {
            return bad(format!("beta_th must lie in (0, 1), got {}", self.beta_th));
        }
        if !(self.window_m > 0.0) {
            return bad(format!("window_m must be positive, got {}", self.window_m));
        }
        if !(self.scan_step > 0.0 && self.scan_step <= 1f64.to_radians() + 1e-12) {
            return bad(format!(
                "scan_step_deg must lie in (0, 1], got {}",
                self.scan_step.to_degrees()
            ));
        }
        if !(self.grid_step > 0.0 && self.route_spacing > 0.0) {
            return bad("grid_step and route_spacing must be positive".into());
        }
        if !(self.clearance >= 0.0) {
            return bad(format!("clearance must be non-negative, got {}", self.clearance));
        }
        if self.route.len() == 1 {
            return bad("a route needs at least two vertices".into());
        }
        Ok(())
    }

    /// Predictor settings implied by this configuration.
    pub fn predictor_options(&self) -> crate::predictor::PredictorOptions {
        crate::predictor::PredictorOptions {
            window_m: self.window_m,
            beta_th: self.beta_th,
            scan_step: self.scan_step,
            ..Default::default()
        }
    }
}
