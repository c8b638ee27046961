//! Exact multipath simulator used as ground truth.
//!
//! The received complex baseband at a point is the direct path, one ground
//! bounce (two-ray model with a Fresnel-type coefficient), one single-bounce
//! path per reflector, and optional circular Gaussian noise. Route power is
//! the squared magnitude of that exact sum; the truncated power expansion
//! that the estimator relies on lives in [`power_approximation`] and is never
//! used to generate data.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{aoa_relative_to_array, Enclosure, GeometryError, Point2};

/// 2.4 GHz WiFi, first sub-channel.
pub const DEFAULT_WAVELENGTH: f64 = 0.125;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("receiver coincides with the transmitter")]
    CoincidentTxRx,
    #[error("path length must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("grazing angle {0} rad outside (0, π/2]")]
    InvalidAngle(f64),
    #[error("route spacing {spacing} m between samples {index} and {next} exceeds λ/4 = {limit} m", next = index + 1)]
    UndersampledRoute {
        index: usize,
        spacing: f64,
        limit: f64,
    },
    #[error("receiver coincides with a scatterer or the transmitter")]
    CoincidentPoints,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A point scatterer. Its path attenuation up to the scatterer is either the
/// single-bounce value `γ / (4π‖r_Tx − r_n‖)` or an explicit override, which
/// stands in for multi-bounce histories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflector {
    pub position: Point2,
    pub gamma: f64,
    pub attenuation: Option<f64>,
}

impl Reflector {
    pub fn new(position: Point2, gamma: f64) -> Self {
        Self {
            position,
            gamma,
            attenuation: None,
        }
    }

    pub fn with_attenuation(position: Point2, attenuation: f64) -> Self {
        Self {
            position,
            gamma: 1.0,
            attenuation: Some(attenuation),
        }
    }

    /// Attenuation `R_n` accumulated from the transmitter to the scatterer.
    pub fn attenuation_from(&self, tx: Point2) -> f64 {
        self.attenuation
            .unwrap_or_else(|| self.gamma / (4.0 * PI * tx.distance(self.position)))
    }
}

/// Full ground-truth world description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tx: Point2,
    pub wavelength: f64,
    /// Height of both antennas above the ground plane.
    pub antenna_height: f64,
    pub permittivity: f64,
    /// `P_t G_t G_r` as one factor.
    pub gain: f64,
    pub reflectors: Vec<Reflector>,
    /// `None` disables noise.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            tx: Point2::new(0.0, 0.0),
            wavelength: DEFAULT_WAVELENGTH,
            antenna_height: 0.5,
            permittivity: 4.0,
            gain: 1.0,
            reflectors: Vec::new(),
            snr_db: None,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return bad("wavelength must be positive");
        }
        if !(self.antenna_height >= 0.0 && self.antenna_height.is_finite()) {
            return bad("antenna height must be non-negative");
        }
        if !(self.permittivity >= 1.0 && self.permittivity.is_finite()) {
            return bad("ground permittivity must be >= 1");
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return bad("gain product must be positive");
        }
        if !self.tx.is_finite() {
            return bad("transmitter position must be finite");
        }
        for r in &self.reflectors {
            if !r.position.is_finite() {
                return bad("reflector position must be finite");
            }
            if r.attenuation.is_none() && !(r.gamma > 0.0 && r.gamma <= 1.0) {
                return bad("reflection coefficient must lie in (0, 1]");
            }
            if let Some(a) = r.attenuation {
                if !(a >= 0.0 && a.is_finite()) {
                    return bad("attenuation override must be non-negative");
                }
            }
            if r.position.distance(self.tx) < 1e-9 {
                return bad("reflector coincides with the transmitter");
            }
        }
        Ok(())
    }

    /// Every reflector must lie outside the prediction enclosure.
    pub fn validate_against(&self, enclosure: &Enclosure) -> Result<(), SimError> {
        self.validate()?;
        for (i, r) in self.reflectors.iter().enumerate() {
            if enclosure.contains(r.position) {
                return Err(SimError::InvalidScenario(format!(
                    "reflector {i} at {} lies inside the enclosure",
                    r.position
                )));
            }
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }
}

/// Length of the ground-bounce path for equal antenna heights (image source).
pub fn ground_path_length(l_tx: f64, antenna_height: f64) -> Result<f64, SimError> {
    if !(l_tx > 0.0) {
        return Err(SimError::NonPositiveDistance(l_tx));
    }
    Ok(2.0 * ((0.5 * l_tx).powi(2) + antenna_height.powi(2)).sqrt())
}

/// Angle between the ground plane and the bounced ray.
pub fn grazing_angle(l_tx: f64, antenna_height: f64) -> f64 {
    (2.0 * antenna_height / l_tx).atan()
}

/// `γ_g = (sin θ − Z)/(sin θ + Z)` with `Z = √(ε_r − cos²θ)/ε_r`.
pub fn ground_reflection_coeff(theta: f64, permittivity: f64) -> Result<f64, SimError> {
    if !(theta > 0.0 && theta <= FRAC_PI_2 + 1e-15) {
        return Err(SimError::InvalidAngle(theta));
    }
    Ok(reflection_coeff_unchecked(theta, permittivity))
}

fn reflection_coeff_unchecked(theta: f64, permittivity: f64) -> f64 {
    if theta <= 0.0 {
        return -1.0;
    }
    let (s, c) = theta.sin_cos();
    let z = (permittivity - c * c).max(0.0).sqrt() / permittivity;
    (s - z) / (s + z)
}

/// Direct and ground path parameters between two points at equal height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRayTerms {
    pub alpha_direct: f64,
    pub l_direct: f64,
    /// Signed: carries the sign of the (real) ground reflection coefficient.
    pub alpha_ground: f64,
    pub l_ground: f64,
    pub grazing: f64,
    pub gamma_ground: f64,
}

pub fn two_ray_terms(
    tx: Point2,
    rx: Point2,
    wavelength: f64,
    gain: f64,
    permittivity: f64,
    antenna_height: f64,
) -> Result<TwoRayTerms, SimError> {
    let l_direct = tx.distance(rx);
    if l_direct < 1e-12 {
        return Err(SimError::CoincidentTxRx);
    }
    let l_ground = ground_path_length(l_direct, antenna_height)?;
    let grazing = grazing_angle(l_direct, antenna_height);
    let gamma_ground = reflection_coeff_unchecked(grazing, permittivity);
    let scale = wavelength * gain / (4.0 * PI);
    Ok(TwoRayTerms {
        alpha_direct: scale / l_direct,
        l_direct,
        alpha_ground: scale * gamma_ground / l_ground,
        l_ground,
        grazing,
        gamma_ground,
    })
}

impl TwoRayTerms {
    pub fn signal(&self, wavelength: f64) -> Complex64 {
        let k = TAU / wavelength;
        Complex64::from_polar(self.alpha_direct, k * self.l_direct)
            + Complex64::from_polar(1.0, k * self.l_ground) * self.alpha_ground
    }

    /// `α_Tx² + α_g² + 2 α_Tx α_g cos(k (l_Tx − l_g))`.
    pub fn mean_power(&self, wavelength: f64) -> f64 {
        let k = TAU / wavelength;
        self.alpha_direct.powi(2)
            + self.alpha_ground.powi(2)
            + 2.0 * self.alpha_direct * self.alpha_ground * (k * (self.l_direct - self.l_ground)).cos()
    }
}

/// Seeded counter-based noise: sample `i` depends only on `(seed, i)`, so
/// route samples can be computed in any order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSource {
    /// Standard deviation of the complex noise, `E|η|² = sigma²`.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSource {
    /// Noise whose power sits `snr_db` below `reference_amplitude²`.
    pub fn calibrated(reference_amplitude: f64, snr_db: f64, seed: u64) -> Self {
        Self {
            sigma: reference_amplitude * 10f64.powf(-snr_db / 20.0),
            seed,
        }
    }

    pub fn sample(&self, counter: u64) -> Complex64 {
        if self.sigma == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(counter);
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im) * (self.sigma / std::f64::consts::SQRT_2)
    }
}

/// Amplitude and length of the single-bounce path through `reflector`.
pub fn object_path(scenario: &Scenario, reflector: &Reflector, rx: Point2) -> Result<(f64, f64), SimError> {
    let to_rx = reflector.position.distance(rx);
    if to_rx < 1e-12 {
        return Err(SimError::CoincidentPoints);
    }
    let length = scenario.tx.distance(reflector.position) + to_rx;
    let alpha = scenario.wavelength * scenario.gain * reflector.attenuation_from(scenario.tx)
        / (4.0 * PI * to_rx);
    Ok((alpha, length))
}

/// Noise-free complex baseband at `rx`.
pub fn clean_signal(scenario: &Scenario, rx: Point2) -> Result<Complex64, SimError> {
    let terms = two_ray_terms(
        scenario.tx,
        rx,
        scenario.wavelength,
        scenario.gain,
        scenario.permittivity,
        scenario.antenna_height,
    )?;
    let k = scenario.wavenumber();
    let mut c = terms.signal(scenario.wavelength);
    for r in &scenario.reflectors {
        let (alpha, length) = object_path(scenario, r, rx)?;
        c += Complex64::from_polar(alpha, k * length);
    }
    Ok(c)
}

/// Complex baseband at `rx`, including noise calibrated to the direct-path
/// power at `rx` (counter 0) when the scenario enables it.
pub fn simulate_point_signal(scenario: &Scenario, rx: Point2) -> Result<Complex64, SimError> {
    let c = clean_signal(scenario, rx)?;
    Ok(match scenario.snr_db {
        Some(snr) => {
            let alpha = scenario.wavelength * scenario.gain / (4.0 * PI * scenario.tx.distance(rx));
            c + NoiseSource::calibrated(alpha, snr, scenario.seed).sample(0)
        }
        None => c,
    })
}

/// One power sample along a route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSample {
    pub position: Point2,
    pub arclen: f64,
    pub power: f64,
    pub power_db: f64,
}

impl RouteSample {
    pub fn from_db(position: Point2, arclen: f64, power_db: f64) -> Self {
        Self {
            position,
            arclen,
            power: 10f64.powf(power_db / 10.0),
            power_db,
        }
    }
}

/// Ordered power-only measurements along a route.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RouteMeasurements {
    pub samples: Vec<RouteSample>,
}

impl RouteMeasurements {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn to_db(power: f64) -> f64 {
    10.0 * power.log10()
}

/// Samples a closed boundary counter-clockwise at uniform arc-length spacing
/// no larger than `max_spacing`, starting and ending at vertex 0.
pub fn boundary_route(enclosure: &Enclosure, max_spacing: f64) -> Vec<(Point2, f64)> {
    let perimeter = enclosure.perimeter();
    let n = (perimeter / max_spacing - 1e-9).ceil().max(1.0) as usize;
    let step = perimeter / n as f64;
    (0..=n)
        .map(|i| {
            let s = if i == n { perimeter } else { i as f64 * step };
            (enclosure.point_at_arclen(s).0, s)
        })
        .collect()
}

/// Uniformly resampled polyline with cumulative arc length.
pub fn polyline_route(vertices: &[Point2], max_spacing: f64) -> Vec<(Point2, f64)> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for (i, pair) in vertices.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let len = a.distance(b);
        if len == 0.0 {
            continue;
        }
        let n = (len / max_spacing - 1e-9).ceil().max(1.0) as usize;
        let start = if i == 0 || out.is_empty() { 0 } else { 1 };
        for j in start..=n {
            let t = j as f64 / n as f64;
            out.push((a + (b - a) * t, acc + t * len));
        }
        acc += len;
    }
    out
}

/// Exact received power along `route`. Noise, when enabled, is calibrated to
/// the direct-path power at the first sample.
pub fn simulate_route_power(
    scenario: &Scenario,
    route: &[(Point2, f64)],
) -> Result<RouteMeasurements, SimError> {
    scenario.validate()?;
    let limit = scenario.wavelength / 4.0;
    for (i, pair) in route.windows(2).enumerate() {
        let spacing = pair[0].0.distance(pair[1].0);
        if spacing > limit * (1.0 + 1e-9) {
            return Err(SimError::UndersampledRoute {
                index: i,
                spacing,
                limit,
            });
        }
    }
    let noise = match (scenario.snr_db, route.first()) {
        (Some(snr), Some(&(first, _))) => {
            let d = scenario.tx.distance(first);
            if d < 1e-12 {
                return Err(SimError::CoincidentTxRx);
            }
            let alpha = scenario.wavelength * scenario.gain / (4.0 * PI * d);
            Some(NoiseSource::calibrated(alpha, snr, scenario.seed))
        }
        _ => None,
    };
    let samples = route
        .par_iter()
        .enumerate()
        .map(|(i, &(position, arclen))| {
            let mut c = clean_signal(scenario, position)?;
            if let Some(n) = &noise {
                c += n.sample(i as u64);
            }
            let power = c.norm_sqr();
            Ok(RouteSample {
                position,
                arclen,
                power,
                power_db: to_db(power),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(RouteMeasurements { samples })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectPath {
    pub alpha: f64,
    pub length: f64,
    /// World-frame direction toward the transmitter, radians.
    pub arrival: f64,
    /// Angle of arrival relative to the makeup's array direction.
    pub aoa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPath {
    /// Signed amplitude (sign of the real reflection coefficient).
    pub alpha: f64,
    pub length: f64,
    /// Elevation of the bounced ray above the ground plane.
    pub grazing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectRay {
    pub alpha: f64,
    /// World-frame direction the ray arrives from, radians in [0, 2π).
    pub arrival: f64,
    /// Angle of arrival relative to the makeup's array direction.
    pub aoa: f64,
    /// `e^{j 2π l_n / λ}`.
    pub phase: Complex64,
    /// True path length, known only to the simulator.
    pub length: Option<f64>,
}

/// Every path arriving at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct RayMakeup {
    pub point: Point2,
    pub array_direction: Point2,
    pub direct: DirectPath,
    pub ground: GroundPath,
    pub objects: Vec<ObjectRay>,
}

impl RayMakeup {
    /// Complex baseband reconstructed from the makeup (noise excluded).
    pub fn signal(&self, wavelength: f64) -> Complex64 {
        let k = TAU / wavelength;
        let mut c = Complex64::from_polar(self.direct.alpha, k * self.direct.length)
            + Complex64::from_polar(1.0, k * self.ground.length) * self.ground.alpha;
        for o in &self.objects {
            c += o.phase * o.alpha;
        }
        c
    }

    pub fn power(&self, wavelength: f64) -> f64 {
        self.signal(wavelength).norm_sqr()
    }

    /// Plane-wave complex baseband at distance `d` along `array_direction`
    /// from the makeup's point, with the ground path length varying as
    /// `l_g(d) = l_g − d cos θ_arr`.
    pub fn array_signal(&self, d: f64, array_direction: Point2, wavelength: f64) -> Complex64 {
        let k = TAU / wavelength;
        let cos_tx = Point2::from_angle(self.direct.arrival).dot(array_direction);
        let cos_ground = cos_tx * self.ground.grazing.cos();
        let mut c = Complex64::from_polar(self.direct.alpha, k * (self.direct.length - d * cos_tx))
            + Complex64::from_polar(1.0, k * (self.ground.length - d * cos_ground)) * self.ground.alpha;
        for o in &self.objects {
            let cos_n = Point2::from_angle(o.arrival).dot(array_direction);
            c += o.phase * Complex64::from_polar(o.alpha, -k * d * cos_n);
        }
        c
    }
}

/// Truncated power expansion along an array: squared magnitudes, the
/// direct/ground cross term and direct/object cross terms only.
pub fn power_approximation(makeup: &RayMakeup, d: f64, array_direction: Point2, wavelength: f64) -> f64 {
    let k = TAU / wavelength;
    let a_tx = makeup.direct.alpha;
    let a_g = makeup.ground.alpha;
    let cos_tx = Point2::from_angle(makeup.direct.arrival).dot(array_direction);
    let cos_ground = cos_tx * makeup.ground.grazing.cos();
    let l_tx = makeup.direct.length - d * cos_tx;
    let l_g = makeup.ground.length - d * cos_ground;

    let mut p = a_tx * a_tx + a_g * a_g + 2.0 * a_tx * a_g * (k * (l_tx - l_g)).cos();
    let direct = Complex64::from_polar(1.0, k * l_tx);
    for o in &makeup.objects {
        let cos_n = Point2::from_angle(o.arrival).dot(array_direction);
        let obj = o.phase * Complex64::from_polar(1.0, -k * d * cos_n);
        p += o.alpha * o.alpha + 2.0 * a_tx * o.alpha * (direct * obj.conj()).re;
    }
    p
}

/// Magnitude bound on everything [`power_approximation`] drops.
pub fn neglected_cross_term_bound(makeup: &RayMakeup) -> f64 {
    let alphas: Vec<f64> = makeup.objects.iter().map(|o| o.alpha).collect();
    let mut pairs = 0.0;
    for i in 0..alphas.len() {
        for j in (i + 1)..alphas.len() {
            pairs += alphas[i] * alphas[j];
        }
    }
    2.0 * pairs + 2.0 * makeup.ground.alpha.abs() * alphas.iter().sum::<f64>()
}

/// True ray makeup at `rx`, with angles relative to `array_direction`.
/// Evaluation only; the predictor never sees this.
pub fn oracle_ray_makeup(
    scenario: &Scenario,
    rx: Point2,
    array_direction: Point2,
) -> Result<RayMakeup, SimError> {
    let terms = two_ray_terms(
        scenario.tx,
        rx,
        scenario.wavelength,
        scenario.gain,
        scenario.permittivity,
        scenario.antenna_height,
    )?;
    let k = scenario.wavenumber();
    let incoming = (scenario.tx - rx).normalized().ok_or(SimError::CoincidentPoints)?;
    let direct = DirectPath {
        alpha: terms.alpha_direct,
        length: terms.l_direct,
        arrival: incoming.angle(),
        aoa: aoa_relative_to_array(incoming, array_direction)?,
    };
    let ground = GroundPath {
        alpha: terms.alpha_ground,
        length: terms.l_ground,
        grazing: terms.grazing,
    };
    let objects = scenario
        .reflectors
        .iter()
        .map(|r| {
            let (alpha, length) = object_path(scenario, r, rx)?;
            let dir = (r.position - rx).normalized().ok_or(SimError::CoincidentPoints)?;
            Ok(ObjectRay {
                alpha,
                arrival: dir.angle(),
                aoa: aoa_relative_to_array(dir, array_direction)?,
                phase: Complex64::from_polar(1.0, k * length),
                length: Some(length),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(RayMakeup {
        point: rx,
        array_direction,
        direct,
        ground,
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::Rng;

    fn scene(reflectors: Vec<Reflector>) -> Scenario {
        Scenario {
            tx: Point2::new(-3.0, 4.0),
            reflectors,
            ..Scenario::default()
        }
    }

    #[test]
    fn ground_path_examples() {
        assert_abs_diff_eq!(ground_path_length(4.0, 1.5).unwrap(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ground_path_length(7.0, 0.0).unwrap(), 7.0, epsilon = 1e-12);
        // Image source: Rx mirrored 2h below the Tx plane.
        let image = (5.0f64.powi(2) + (2.0 * 0.5f64).powi(2)).sqrt();
        assert_abs_diff_eq!(ground_path_length(5.0, 0.5).unwrap(), image, epsilon = 1e-12);
        assert_abs_diff_eq!(image, 26f64.sqrt(), epsilon = 1e-12);
        assert!(matches!(ground_path_length(0.0, 1.0), Err(SimError::NonPositiveDistance(_))));
    }

    #[test]
    fn reflection_coefficient_examples() {
        assert_abs_diff_eq!(ground_reflection_coeff(FRAC_PI_2, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert!(ground_reflection_coeff(1e-9, 4.0).unwrap() < -0.99999);
        let fresnel = (4f64.sqrt() - 1.0) / (4f64.sqrt() + 1.0);
        assert_abs_diff_eq!(ground_reflection_coeff(FRAC_PI_2, 4.0).unwrap(), fresnel, epsilon = 1e-12);
        assert!(ground_reflection_coeff(0.0, 4.0).is_err());
        assert!(ground_reflection_coeff(2.0, 4.0).is_err());
    }

    #[test]
    fn free_space_only() {
        // ε_r = 1 gives Z = sin θ, so γ_g vanishes at every grazing angle.
        let s = Scenario {
            tx: Point2::new(0.0, 0.0),
            permittivity: 1.0,
            ..Scenario::default()
        };
        let rx = Point2::new(3.0, 4.0);
        let c = clean_signal(&s, rx).unwrap();
        let expected = s.wavelength * s.gain / (4.0 * PI * 5.0);
        assert_relative_eq!(c.norm(), expected, max_relative = 1e-12);
    }

    #[test]
    fn one_reflector_matches_hand_sum() {
        let r = Reflector::new(Point2::new(2.0, -5.0), 0.7);
        let s = scene(vec![r]);
        let rx = Point2::new(1.0, 1.0);
        let k = TAU / s.wavelength;
        let l_tx = ((1.0f64 + 3.0).powi(2) + (1.0f64 - 4.0).powi(2)).sqrt();
        let l_g = (l_tx * l_tx + 4.0 * 0.25f64).sqrt();
        let theta = (1.0f64 / l_tx).atan();
        let z = (4.0 - theta.cos().powi(2)).sqrt() / 4.0;
        let gamma_g = (theta.sin() - z) / (theta.sin() + z);
        let d1 = ((2.0f64 + 3.0).powi(2) + (-5.0f64 - 4.0).powi(2)).sqrt();
        let d2 = ((2.0f64 - 1.0).powi(2) + (-5.0f64 - 1.0).powi(2)).sqrt();
        let scale = s.wavelength / (4.0 * PI);
        let mut re = 0.0;
        let mut im = 0.0;
        for (a, l) in [
            (scale / l_tx, l_tx),
            (scale * gamma_g / l_g, l_g),
            (scale * (0.7 / (4.0 * PI * d1)) / d2, d1 + d2),
        ] {
            re += a * (k * l).cos();
            im += a * (k * l).sin();
        }
        let c = clean_signal(&s, rx).unwrap();
        assert_abs_diff_eq!(c.re, re, epsilon = 1e-15);
        assert_abs_diff_eq!(c.im, im, epsilon = 1e-15);
    }

    #[test]
    fn mirror_symmetric_receivers() {
        // Tx and reflector on the x axis: mirror images across it see the
        // same magnitude.
        let s = Scenario {
            tx: Point2::new(0.0, 0.0),
            reflectors: vec![Reflector::new(Point2::new(6.0, 0.0), 0.9)],
            ..Scenario::default()
        };
        let a = clean_signal(&s, Point2::new(2.5, 1.3)).unwrap().norm();
        let b = clean_signal(&s, Point2::new(2.5, -1.3)).unwrap().norm();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert_eq!(clean_signal(&s, s.tx), Err(SimError::CoincidentTxRx));
    }

    #[test]
    fn route_checks_spacing_and_is_deterministic() {
        let s = scene(vec![Reflector::with_attenuation(Point2::new(4.0, -6.0), 0.2)]);
        let route = polyline_route(&[Point2::new(1.0, 0.0), Point2::new(4.0, 0.0)], s.wavelength / 8.0);
        let a = simulate_route_power(&s, &route).unwrap();
        let b = simulate_route_power(&s, &route).unwrap();
        assert_eq!(a, b);
        for smp in &a.samples {
            assert_abs_diff_eq!(smp.power_db, 10.0 * smp.power.log10(), epsilon = 1e-12);
        }
        let sparse = polyline_route(&[Point2::new(1.0, 0.0), Point2::new(4.0, 0.0)], s.wavelength / 2.0);
        assert!(matches!(
            simulate_route_power(&s, &sparse),
            Err(SimError::UndersampledRoute { .. })
        ));

        let noisy = Scenario { snr_db: Some(20.0), seed: 11, ..s.clone() };
        let n1 = simulate_route_power(&noisy, &route).unwrap();
        let n2 = simulate_route_power(&noisy, &route).unwrap();
        assert_eq!(n1, n2);
        assert_ne!(n1, a);
        let other_seed = simulate_route_power(&Scenario { seed: 12, ..noisy }, &route).unwrap();
        assert_ne!(other_seed, n1);
    }

    #[test]
    fn two_ray_trace_decays_on_average() {
        let s = Scenario { tx: Point2::new(0.0, 0.0), ..Scenario::default() };
        let route = polyline_route(&[Point2::new(2.0, 0.0), Point2::new(20.0, 0.0)], s.wavelength / 8.0);
        let m = simulate_route_power(&s, &route).unwrap();
        // Mean dB over consecutive 3 m blocks decreases.
        let block = (3.0 / (s.wavelength / 8.0)) as usize;
        let means: Vec<f64> = m
            .samples
            .chunks(block)
            .map(|c| c.iter().map(|x| x.power_db).sum::<f64>() / c.len() as f64)
            .collect();
        for w in means.windows(2) {
            assert!(w[1] < w[0], "{means:?}");
        }
    }

    #[test]
    fn single_reflector_ripple_frequency() {
        // Far-field setup: Tx and reflector far away so angles are constant
        // over a short route; the dominant ripple sits at |ψ|/λ cycles/m.
        let s = Scenario {
            tx: Point2::new(-400.0, 300.0),
            permittivity: 1.0,
            reflectors: vec![Reflector::with_attenuation(Point2::new(300.0, -400.0), 0.5)],
            ..Scenario::default()
        };
        let route = polyline_route(&[Point2::new(0.0, 0.0), Point2::new(4.0, 0.0)], s.wavelength / 8.0);
        let m = simulate_route_power(&s, &route).unwrap();
        let cos_tx = Point2::new(-0.8, 0.6).dot(Point2::new(1.0, 0.0));
        let cos_n = Point2::new(0.6, -0.8).dot(Point2::new(1.0, 0.0));
        let psi = (cos_tx - cos_n).abs();
        let mean = m.samples.iter().map(|x| x.power).sum::<f64>() / m.len() as f64;
        let best = (1..1600)
            .map(|i| i as f64 * 0.01)
            .max_by(|&a, &b| {
                let amp = |f: f64| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for x in &m.samples {
                        let ph = TAU * f * x.arclen;
                        re += (x.power - mean) * ph.cos();
                        im += (x.power - mean) * ph.sin();
                    }
                    re.hypot(im)
                };
                amp(a).total_cmp(&amp(b))
            })
            .unwrap();
        assert_abs_diff_eq!(best, psi / s.wavelength, epsilon = 0.1);
    }

    #[test]
    fn oracle_makeup_angles_and_linearity() {
        let r = Reflector::new(Point2::new(4.0, -3.0), 0.4);
        let s = scene(vec![r]);
        let rx = Point2::new(1.0, 1.0);
        let m = oracle_ray_makeup(&s, rx, Point2::new(1.0, 0.0)).unwrap();
        // Direction (3, −4)/5 from rx to the reflector.
        assert_abs_diff_eq!(m.objects[0].aoa, 0.6f64.acos(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.objects[0].phase.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.power(s.wavelength), clean_signal(&s, rx).unwrap().norm_sqr(), max_relative = 1e-12);

        let doubled = scene(vec![Reflector::new(r.position, 0.8)]);
        let m2 = oracle_ray_makeup(&doubled, rx, Point2::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(m2.objects[0].alpha, 2.0 * m.objects[0].alpha, max_relative = 1e-12);

        let empty = oracle_ray_makeup(&scene(vec![]), rx, Point2::new(1.0, 0.0)).unwrap();
        assert!(empty.objects.is_empty());
    }

    #[test]
    fn approximation_reduces_to_two_ray() {
        let s = scene(vec![]);
        let dir = Point2::new(1.0, 0.0);
        let m = oracle_ray_makeup(&s, Point2::new(2.0, 0.5), dir).unwrap();
        let k = TAU / s.wavelength;
        let cos_tx = m.direct.aoa.cos();
        for i in 0..20 {
            let d = i as f64 * 0.05;
            let l_g = m.ground.length - d * cos_tx * m.ground.grazing.cos();
            let expected = m.direct.alpha.powi(2)
                + m.ground.alpha.powi(2)
                + 2.0 * m.direct.alpha * m.ground.alpha * (k * (m.direct.length - d * cos_tx - l_g)).cos();
            assert_abs_diff_eq!(power_approximation(&m, d, dir, s.wavelength), expected, epsilon = 1e-15);
        }
        // A zero-strength object changes nothing.
        let mut with_zero = m.clone();
        with_zero.objects.push(ObjectRay {
            alpha: 0.0,
            arrival: 1.0,
            aoa: 1.0,
            phase: Complex64::new(1.0, 0.0),
            length: None,
        });
        assert_eq!(
            power_approximation(&with_zero, 0.3, dir, s.wavelength),
            power_approximation(&m, 0.3, dir, s.wavelength)
        );
    }

    fn random_makeup(rng: &mut impl Rng, n_objects: usize) -> RayMakeup {
        let a_tx = rng.random_range(0.1..1.0);
        RayMakeup {
            point: Point2::default(),
            array_direction: Point2::new(1.0, 0.0),
            direct: DirectPath {
                alpha: a_tx,
                length: rng.random_range(2.0..20.0),
                arrival: rng.random_range(0.0..TAU),
                aoa: 0.0,
            },
            ground: GroundPath {
                alpha: -a_tx * rng.random_range(0.0..0.9),
                length: rng.random_range(2.0..20.0),
                grazing: rng.random_range(0.0..0.5),
            },
            objects: (0..n_objects)
                .map(|_| ObjectRay {
                    alpha: a_tx * rng.random_range(0.0..0.6),
                    arrival: rng.random_range(0.0..TAU),
                    aoa: 0.0,
                    phase: Complex64::from_polar(1.0, rng.random_range(0.0..TAU)),
                    length: None,
                })
                .collect(),
        }
    }

    #[test]
    fn approximation_error_bound_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..1000 {
            let n = trial % 6;
            let m = random_makeup(&mut rng, n);
            let dir = Point2::from_angle(rng.random_range(0.0..TAU));
            let bound = neglected_cross_term_bound(&m);
            for i in 0..16 {
                let d = i as f64 * 0.0625;
                let full = m.array_signal(d, dir, 0.125).norm_sqr();
                let approx = power_approximation(&m, d, dir, 0.125);
                assert!((full - approx).abs() <= bound + 1e-12, "trial {trial}");
            }
        }
    }

    proptest! {
        #[test]
        fn psi_within_two(tx in (-30.0f64..30.0, -30.0f64..30.0), refl in (-30.0f64..30.0, -30.0f64..30.0), rx in (-3.0f64..3.0, -3.0f64..3.0), dir in 0.0f64..TAU) {
            let s = Scenario {
                tx: Point2::new(tx.0, tx.1),
                reflectors: vec![Reflector::new(Point2::new(refl.0, refl.1), 0.5)],
                ..Scenario::default()
            };
            let rx = Point2::new(rx.0, rx.1);
            prop_assume!(rx.distance(s.tx) > 0.1 && rx.distance(s.reflectors[0].position) > 0.1);
            let m = oracle_ray_makeup(&s, rx, Point2::from_angle(dir)).unwrap();
            let psi = m.direct.aoa.cos() - m.objects[0].aoa.cos();
            prop_assert!(psi.abs() <= 2.0 + 1e-12);
        }

        #[test]
        fn free_space_decay_product_constant(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let s = scene(vec![]);
            let rx = Point2::new(x, y);
            prop_assume!(rx.distance(s.tx) > 0.1);
            let m = oracle_ray_makeup(&s, rx, Point2::new(1.0, 0.0)).unwrap();
            let reference = s.wavelength * s.gain / (4.0 * PI);
            prop_assert!((m.direct.alpha * m.direct.length - reference).abs() < 1e-12);
        }
    }
}
