//! Browser bindings: gain cuts of CoVRage and quasi-omni patterns, and a
//! short end-to-end run returning its latency CDF.

use wasm_bindgen::prelude::*;

use mmxr::array::{steering_phases, ArrayGeometry, ArrayResponse, Awv};
use mmxr::codebook::{synthesize_quasi_omni_report, QuasiOmniParams};
use mmxr::covrage::{plan_subarrays_with, synthesize_awv, AxisPolicy, CovrageParams, StripAxis, Trajectory};
use mmxr::geometry::{Direction, Quaternion};
use mmxr::metrics::format_summary;
use mmxr::scenario::{parse_config, simulate, AssetCache};

/// Largest array the page lets through, per side.
pub const MAX_SIDE: usize = 64;
/// Quasi-omni synthesis is slow in the browser beyond this many elements.
pub const MAX_QUASI_OMNI_ELEMENTS: usize = 256;

/// Horizontal gain cut, azimuth -90° to 90°, elevation 0.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Cut {
    azimuth: Vec<f64>,
    primary: Vec<f64>,
    reference: Vec<f64>,
    detail: String,
}

#[wasm_bindgen]
impl Cut {
    /// Degrees.
    pub fn azimuth(&self) -> Vec<f64> {
        self.azimuth.clone()
    }

    /// Gain of the synthesized pattern, dB.
    pub fn primary(&self) -> Vec<f64> {
        self.primary.clone()
    }

    /// Gain of the comparison pattern, dB.
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }

    pub fn detail(&self) -> String {
        self.detail.clone()
    }
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Run {
    reliability: f64,
    latency_ms: Vec<f64>,
    fraction: Vec<f64>,
    summary: String,
}

#[wasm_bindgen]
impl Run {
    pub fn reliability(&self) -> f64 {
        self.reliability
    }

    /// CDF abscissae, milliseconds.
    pub fn latency_ms(&self) -> Vec<f64> {
        self.latency_ms.clone()
    }

    /// Cumulative share of all frames at each latency.
    pub fn fraction(&self) -> Vec<f64> {
        self.fraction.clone()
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

fn geometry(rows: usize, cols: usize) -> Result<ArrayGeometry, String> {
    if rows > MAX_SIDE || cols > MAX_SIDE {
        return Err(format!("arrays are limited to {MAX_SIDE}×{MAX_SIDE}"));
    }
    let g = ArrayGeometry::new(rows, cols);
    g.validate().map_err(|e| e.to_string())?;
    Ok(g)
}

fn cut(a: &ArrayResponse, b: &ArrayResponse, points: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let points = points.max(2);
    let azimuth: Vec<f64> = (0..points)
        .map(|i| -90.0 + 180.0 * i as f64 / (points - 1) as f64)
        .collect();
    let gain = |r: &ArrayResponse| azimuth.iter().map(|&az| r.gain_db(Direction::new(az, 0.0))).collect();
    let (pa, pb) = (gain(a), gain(b));
    (azimuth, pa, pb)
}

/// CoVRage pattern for a head turning by `yaw_deg` while the AP starts at
/// boresight, against a single beam steered at the current AP direction.
pub fn covrage_cut_impl(rows: usize, cols: usize, yaw_deg: f64, k_max: usize, points: usize) -> Result<Cut, String> {
    let g = geometry(rows, cols)?;
    if !yaw_deg.is_finite() || yaw_deg.abs() > 170.0 {
        return Err("yaw must lie within ±170°".into());
    }
    let trajectory = Trajectory::new(Quaternion::IDENTITY, Quaternion::yaw(yaw_deg.to_radians()), [1.0, 0.0, 0.0])
        .map_err(|e| e.to_string())?;
    let params = CovrageParams {
        k_max: k_max.max(1),
        axis: AxisPolicy::Fixed(StripAxis::Columns),
    };
    let plan = plan_subarrays_with(&g, &trajectory, &params).map_err(|e| e.to_string())?;
    let awv = synthesize_awv(&g, &plan).map_err(|e| e.to_string())?;
    let steered = steering_phases(&g, Direction::new(0.0, 0.0));
    let covrage = ArrayResponse::new(&g, &awv).map_err(|e| e.to_string())?;
    let single = ArrayResponse::new(&g, &steered).map_err(|e| e.to_string())?;
    let (azimuth, primary, reference) = cut(&covrage, &single, points);
    let targets: Vec<String> = plan.targets.iter().map(|d| format!("{:.1}°", d.azimuth)).collect();
    Ok(Cut {
        azimuth,
        primary,
        reference,
        detail: format!("k = {} sub-arrays aimed at {}", plan.k, targets.join(", ")),
    })
}

/// Optimized quasi-omni pattern against the all-zero-phase pattern.
pub fn quasi_omni_cut_impl(rows: usize, cols: usize, samples: usize, seed: u64, points: usize) -> Result<Cut, String> {
    let g = geometry(rows, cols)?;
    if g.element_count() > MAX_QUASI_OMNI_ELEMENTS {
        return Err(format!("quasi-omni synthesis is limited to {MAX_QUASI_OMNI_ELEMENTS} elements here"));
    }
    let params = QuasiOmniParams {
        n_samples: samples.clamp(10, 5000),
        seed,
        ..QuasiOmniParams::default()
    };
    let report = synthesize_quasi_omni_report(&g, &params).map_err(|e| e.to_string())?;
    let qo = ArrayResponse::new(&g, &report.awv).map_err(|e| e.to_string())?;
    let zero = ArrayResponse::new(&g, &Awv::zeros(g.element_count())).map_err(|e| e.to_string())?;
    let (azimuth, primary, reference) = cut(&qo, &zero, points);
    Ok(Cut {
        azimuth,
        primary,
        reference,
        detail: format!("range over {} sample directions: {:.2} dB", params.n_samples, report.range_db),
    })
}

/// Runs a scenario given as `key = value` text.
pub fn simulate_impl(config_text: &str) -> Result<Run, String> {
    let config = parse_config(config_text).map_err(|e| e.to_string())?;
    let result = simulate(&config, &mut AssetCache::new()).map_err(|e| e.to_string())?;
    let s = &result.summary;
    Ok(Run {
        reliability: s.reliability,
        latency_ms: s.latency_cdf.iter().map(|p| p.0 * 1e3).collect(),
        fraction: s.latency_cdf.iter().map(|p| p.1).collect(),
        summary: format_summary(s, &config.echo()),
    })
}

#[wasm_bindgen]
pub fn covrage_cut(rows: usize, cols: usize, yaw_deg: f64, k_max: usize, points: usize) -> Result<Cut, JsError> {
    covrage_cut_impl(rows, cols, yaw_deg, k_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn quasi_omni_cut(rows: usize, cols: usize, samples: usize, seed: u64, points: usize) -> Result<Cut, JsError> {
    quasi_omni_cut_impl(rows, cols, samples, seed, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn run_scenario(config_text: &str) -> Result<Run, JsError> {
    simulate_impl(config_text).map_err(|e| JsError::new(&e))
}
