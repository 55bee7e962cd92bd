//! Uniform planar phased array: element layout, steering phases and
//! array-factor gain.
//!
//! Elements sit in the local y-z plane, centered on the origin, with the
//! boresight along +x. Element `n = row * cols + col`; columns run along +y
//! and rows along +z. All gains use a common amplitude `1/sqrt(N)` per
//! element so total radiated power is independent of array size.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Direction, Vec3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Floor reported for a perfect null instead of negative infinity.
pub const GAIN_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element pitch in wavelengths.
    pub spacing: f64,
    /// Hz.
    pub carrier_frequency: f64,
    /// Optional cos^q element pattern around boresight; `None` is isotropic.
    pub element_exponent: Option<f64>,
}

impl ArrayGeometry {
    /// Half-wavelength array at 60 GHz with isotropic elements.
    pub fn new(rows: usize, cols: usize) -> Self {
        ArrayGeometry {
            rows,
            cols,
            spacing: 0.5,
            carrier_frequency: 60e9,
            element_exponent: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidInput("array needs at least one element".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidInput("element spacing must be positive".into()));
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::InvalidInput("carrier frequency must be positive".into()));
        }
        Ok(())
    }

    pub fn element_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// y offset of a column, in wavelengths.
    pub fn col_offset(&self, col: usize) -> f64 {
        (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.spacing
    }

    /// z offset of a row, in wavelengths.
    pub fn row_offset(&self, row: usize) -> f64 {
        (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.spacing
    }

    /// Element position in meters (local frame).
    pub fn element_position(&self, n: usize) -> Vec3 {
        let lambda = self.wavelength();
        let (r, c) = (n / self.cols, n % self.cols);
        [0.0, self.col_offset(c) * lambda, self.row_offset(r) * lambda]
    }

    /// Path-length phase 2π (p·u)/λ of element (row, col) for unit vector `u`.
    pub fn path_phase(&self, row: usize, col: usize, u: Vec3) -> f64 {
        2.0 * PI * (self.col_offset(col) * u[1] + self.row_offset(row) * u[2])
    }

    fn element_amplitude_factor(&self, u: Vec3) -> f64 {
        match self.element_exponent {
            None => 1.0,
            Some(q) => {
                if u[0] <= 0.0 {
                    0.0
                } else {
                    u[0].powf(q)
                }
            }
        }
    }
}

/// Antenna weight vector: one phase per element, common amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Awv {
    pub phases: Vec<f64>,
}

impl Awv {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::InvalidInput("AWV needs at least one phase".into()));
        }
        if let Some(i) = phases.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("AWV phase {i} is not finite")));
        }
        Ok(Awv { phases })
    }

    pub fn zeros(n: usize) -> Self {
        Awv {
            phases: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn amplitude(&self) -> f64 {
        1.0 / (self.phases.len() as f64).sqrt()
    }

    pub fn check_geometry(&self, geometry: &ArrayGeometry) -> Result<()> {
        if self.phases.len() != geometry.element_count() {
            return Err(Error::Structure(format!(
                "AWV has {} phases but the {}x{} array has {} elements",
                self.phases.len(),
                geometry.rows,
                geometry.cols,
                geometry.element_count()
            )));
        }
        Ok(())
    }
}

/// Phases that make every element add coherently towards `direction`.
pub fn steering_phases(geometry: &ArrayGeometry, direction: Direction) -> Awv {
    steering_phases_unit(geometry, direction.to_unit_vector())
}

pub fn steering_phases_unit(geometry: &ArrayGeometry, u: Vec3) -> Awv {
    let mut phases = Vec::with_capacity(geometry.element_count());
    for r in 0..geometry.rows {
        for c in 0..geometry.cols {
            phases.push(-geometry.path_phase(r, c, u));
        }
    }
    Awv { phases }
}

fn power_to_db(field_magnitude: f64) -> f64 {
    if field_magnitude > 0.0 {
        (20.0 * field_magnitude.log10()).max(GAIN_FLOOR_DB)
    } else {
        GAIN_FLOOR_DB
    }
}

/// Precomputed complex weights for repeated pattern evaluation.
///
/// The array factor is separable in the column and row phase terms, so a
/// field evaluation costs `rows + cols` complex exponentials plus one
/// multiply-add per element.
#[derive(Debug, Clone)]
pub struct ArrayResponse {
    geometry: ArrayGeometry,
    weights: Vec<Complex64>,
}

impl ArrayResponse {
    pub fn new(geometry: &ArrayGeometry, awv: &Awv) -> Result<Self> {
        awv.check_geometry(geometry)?;
        let a = awv.amplitude();
        let weights = awv
            .phases
            .iter()
            .map(|&p| Complex64::from_polar(a, p))
            .collect();
        Ok(ArrayResponse {
            geometry: geometry.clone(),
            weights,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    /// Complex far field for unit vector `u` (local frame).
    pub fn field(&self, u: Vec3) -> Complex64 {
        let g = &self.geometry;
        let col_terms: Vec<Complex64> = (0..g.cols)
            .map(|c| Complex64::cis(2.0 * PI * g.col_offset(c) * u[1]))
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        for (r, row_weights) in self.weights.chunks_exact(g.cols).enumerate() {
            let row_sum: Complex64 = row_weights
                .iter()
                .zip(&col_terms)
                .map(|(w, e)| w * e)
                .sum();
            total += row_sum * Complex64::cis(2.0 * PI * g.row_offset(r) * u[2]);
        }
        total * g.element_amplitude_factor(u)
    }

    pub fn gain_db_unit(&self, u: Vec3) -> f64 {
        power_to_db(self.field(u).norm())
    }

    pub fn gain_db(&self, direction: Direction) -> f64 {
        self.gain_db_unit(direction.to_unit_vector())
    }
}

/// Array gain in dB relative to a single isotropic element.
pub fn gain_db(geometry: &ArrayGeometry, awv: &Awv, direction: Direction) -> Result<f64> {
    Ok(ArrayResponse::new(geometry, awv)?.gain_db(direction))
}

/// Gain for each direction, in input order.
pub fn gain_map(
    geometry: &ArrayGeometry,
    awv: &Awv,
    directions: &[Direction],
) -> Result<Vec<f64>> {
    let response = ArrayResponse::new(geometry, awv)?;
    Ok(directions.iter().map(|d| response.gain_db(*d)).collect())
}

/// Random directions for pattern sampling.
///
/// With `sphere_uniform`, elevation is the arcsine of a uniform variate so
/// samples are uniform over the sphere; otherwise elevation is uniform in
/// degrees.
pub fn sample_directions(n: usize, seed: u64, sphere_uniform: bool) -> Vec<Direction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let az: f64 = 180.0 - rng.gen::<f64>() * 360.0;
            let el = if sphere_uniform {
                (2.0 * rng.gen::<f64>() - 1.0).asin().to_degrees()
            } else {
                rng.gen::<f64>() * 180.0 - 90.0
            };
            Direction::new(az, el)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent direct summation over element positions in meters.
    fn brute_force_gain(geometry: &ArrayGeometry, awv: &Awv, d: Direction) -> f64 {
        let u = d.to_unit_vector();
        let lambda = geometry.wavelength();
        let a = 1.0 / (awv.phases.len() as f64).sqrt();
        let (mut re, mut im) = (0.0, 0.0);
        for (n, phase) in awv.phases.iter().enumerate() {
            let p = geometry.element_position(n);
            let arg = phase + 2.0 * PI * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / lambda;
            re += a * arg.cos();
            im += a * arg.sin();
        }
        20.0 * re.hypot(im).log10()
    }

    #[test]
    fn broadside_steering_is_all_zero() {
        for (r, c) in [(1, 1), (8, 8), (3, 5)] {
            let awv = steering_phases(&ArrayGeometry::new(r, c), Direction::new(0.0, 0.0));
            assert!(awv.phases.iter().all(|p| p.abs() < 1e-15));
        }
    }

    #[test]
    fn steered_gain_is_coherent_sum() {
        let g = ArrayGeometry::new(8, 8);
        let d = Direction::new(23.0, -17.0);
        let awv = steering_phases(&g, d);
        // 64 unit phasors add to 64 (36.12 dB); amplitude 1/8 leaves 18.06 dB
        assert_abs_diff_eq!(gain_db(&g, &awv, d).unwrap(), 20.0 * 8f64.log10(), epsilon = 1e-9);
        let unnormalized = gain_db(&g, &awv, d).unwrap() + 20.0 * 8f64.log10();
        assert_abs_diff_eq!(unnormalized, 36.123_599_9, epsilon = 1e-6);
    }

    #[test]
    fn two_element_endfire_phase_difference_is_pi() {
        let g = ArrayGeometry::new(1, 2);
        let awv = steering_phases(&g, Direction::new(90.0, 0.0));
        // element offsets are ±0.25 λ along y
        assert_abs_diff_eq!((awv.phases[0] - awv.phases[1]).abs(), PI, epsilon = 1e-12);
    }

    #[test]
    fn single_element_is_zero_db() {
        let g = ArrayGeometry::new(1, 1);
        for phase in [0.0, 1.0, -2.5] {
            let awv = Awv::new(vec![phase]).unwrap();
            for d in sample_directions(20, 3, true) {
                assert_abs_diff_eq!(gain_db(&g, &awv, d).unwrap(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn uniform_phase_gain_matches_direct_summation() {
        let g = ArrayGeometry::new(8, 8);
        let awv = Awv::zeros(64);
        // u_y = 0.5 gives a π/2 progression over 8 columns: an exact null
        let d = Direction::new(30.0, 0.0);
        assert!(brute_force_gain(&g, &awv, d) < -200.0);
        assert!(gain_db(&g, &awv, d).unwrap() < -200.0);
        // frozen from an independent numpy summation
        for (d, frozen) in [
            (Direction::new(20.0, 0.0), 5.050_178_930_765_687),
            (Direction::new(20.0, 10.0), -3.506_912_868_594_736),
        ] {
            let expected = brute_force_gain(&g, &awv, d);
            assert_abs_diff_eq!(expected, frozen, epsilon = 1e-9);
            assert_abs_diff_eq!(gain_db(&g, &awv, d).unwrap(), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn fast_evaluation_agrees_with_direct_summation() {
        let g = ArrayGeometry::new(4, 6);
        let awv = Awv::new((0..24).map(|i| (i as f64 * 0.77).sin() * 3.0).collect()).unwrap();
        for d in sample_directions(50, 9, true) {
            assert_abs_diff_eq!(
                gain_db(&g, &awv, d).unwrap(),
                brute_force_gain(&g, &awv, d),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn perfect_null_reports_floor() {
        let g = ArrayGeometry::new(1, 2);
        let awv = Awv::new(vec![0.0, PI]).unwrap();
        assert_eq!(gain_db(&g, &awv, Direction::new(0.0, 0.0)).unwrap(), GAIN_FLOOR_DB);
    }

    #[test]
    fn gain_map_edge_cases() {
        let g = ArrayGeometry::new(8, 8);
        let awv = steering_phases(&g, Direction::new(10.0, 10.0));
        assert!(gain_map(&g, &awv, &[]).unwrap().is_empty());
        let d = Direction::new(-40.0, 5.0);
        assert_eq!(
            gain_map(&g, &awv, &[d]).unwrap(),
            vec![gain_db(&g, &awv, d).unwrap()]
        );
        let twice = gain_map(&g, &awv, &[d, d]).unwrap();
        assert_eq!(twice[0], twice[1]);
    }

    #[test]
    fn steered_peak_dominates_random_samples() {
        let g = ArrayGeometry::new(8, 8);
        let steer = Direction::new(35.0, -20.0);
        let awv = steering_phases(&g, steer);
        let mut dirs = sample_directions(1000, 11, true);
        dirs.push(steer);
        let gains = gain_map(&g, &awv, &dirs).unwrap();
        let max = gains.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - gain_db(&g, &awv, steer).unwrap()).abs() <= 0.5);
    }

    #[test]
    fn mismatched_awv_is_rejected() {
        let g = ArrayGeometry::new(8, 8);
        assert!(ArrayResponse::new(&g, &Awv::zeros(63)).is_err());
        assert!(Awv::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn element_pattern_suppresses_back_hemisphere() {
        let mut g = ArrayGeometry::new(2, 2);
        g.element_exponent = Some(1.0);
        let awv = Awv::zeros(4);
        assert_eq!(gain_db(&g, &awv, Direction::new(180.0, 0.0)).unwrap(), GAIN_FLOOR_DB);
        assert_abs_diff_eq!(
            gain_db(&g, &awv, Direction::new(0.0, 0.0)).unwrap(),
            20.0 * 2f64.log10(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn sphere_uniform_sampling_is_deterministic() {
        assert_eq!(sample_directions(10, 5, true), sample_directions(10, 5, true));
        assert_ne!(sample_directions(10, 5, true), sample_directions(10, 6, true));
        for d in sample_directions(500, 1, false) {
            assert!(d.azimuth > -180.0 && d.azimuth <= 180.0);
            assert!(d.elevation.abs() <= 90.0);
        }
    }
}
