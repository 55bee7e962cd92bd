//! Sector codebooks, phase-only quasi-omni synthesis and the codebook file
//! format.
//!
//! File layout (plain text, line oriented, `#` starts a comment):
//!
//! ```text
//! rows cols spacing freq
//! SECTOR id aim_az aim_el
//! <rows*cols phases, whitespace separated, any number of lines>
//! ...
//! QUASIOMNI
//! <rows*cols phases>
//! ```

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::array::{sample_directions, steering_phases, ArrayGeometry, Awv};
use crate::error::{Error, Result};
use crate::geometry::Direction;

/// Sector aim angles (degrees) used on both axes by the default codebook.
pub const DEFAULT_SECTOR_ANGLES: [f64; 6] = [-50.0, -30.0, -10.0, 10.0, 30.0, 50.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub id: usize,
    pub aim: Direction,
    pub awv: Awv,
}

/// Ordered directional sectors plus one quasi-omni AWV.
///
/// The quasi-omni pattern is addressable as the candidate right after the
/// last directional sector (id `sectors.len()`).
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub geometry: ArrayGeometry,
    pub sectors: Vec<Sector>,
    pub quasi_omni: Awv,
}

impl Codebook {
    pub fn quasi_omni_id(&self) -> usize {
        self.sectors.len()
    }

    /// Directional sectors plus the quasi-omni slot.
    pub fn candidate_count(&self) -> usize {
        self.sectors.len() + 1
    }

    pub fn candidate(&self, id: usize) -> Option<&Awv> {
        if id == self.sectors.len() {
            Some(&self.quasi_omni)
        } else {
            self.sectors.get(id).map(|s| &s.awv)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.quasi_omni.check_geometry(&self.geometry)?;
        for (i, s) in self.sectors.iter().enumerate() {
            s.awv.check_geometry(&self.geometry)?;
            if self.sectors[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::Structure(format!("duplicate sector id {}", s.id)));
            }
        }
        Ok(())
    }
}

/// One steered sector per (azimuth, elevation) pair, elevation-outer order.
pub fn generate_sector_codebook(
    geometry: &ArrayGeometry,
    azimuths: &[f64],
    elevations: &[f64],
    quasi_omni: Awv,
) -> Result<Codebook> {
    geometry.validate()?;
    if azimuths.is_empty() || elevations.is_empty() {
        return Err(Error::InvalidInput("sector aim lists must be nonempty".into()));
    }
    quasi_omni.check_geometry(geometry)?;
    let sectors = elevations
        .iter()
        .flat_map(|&el| azimuths.iter().map(move |&az| Direction::new(az, el)))
        .enumerate()
        .map(|(id, aim)| Sector {
            id,
            aim,
            awv: steering_phases(geometry, aim),
        })
        .collect();
    Ok(Codebook {
        geometry: geometry.clone(),
        sectors,
        quasi_omni,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiOmniParams {
    pub n_samples: usize,
    pub seed: u64,
    /// Cap on full coordinate sweeps per start.
    pub max_iters: usize,
    /// A start stops early once its gain range is at or below this value (dB).
    pub tolerance_db: f64,
    pub sphere_uniform: bool,
    /// Sharpness (1/dB) of the soft max/min stages run before the exact
    /// range is descended. Empty descends the exact range only.
    pub smoothing: Vec<f64>,
}

impl Default for QuasiOmniParams {
    fn default() -> Self {
        QuasiOmniParams {
            n_samples: 1000,
            seed: 1,
            max_iters: 200,
            tolerance_db: 0.0,
            sphere_uniform: true,
            smoothing: vec![0.5, 1.0, 2.0, 4.0],
        }
    }
}

/// Outcome of a quasi-omni synthesis run.
#[derive(Debug, Clone)]
pub struct QuasiOmniReport {
    pub awv: Awv,
    /// Gain range (max - min, dB) of `awv` over the sample set.
    pub range_db: f64,
    /// Range of each start point before refinement, in start order.
    pub initial_ranges: Vec<f64>,
    /// Range of each start after refinement, in start order.
    pub refined_ranges: Vec<f64>,
    /// Index of the winning start.
    pub best_start: usize,
}

const MIN_STEP: f64 = 1e-3;
/// Smoothing stages only position the search; the exact stage polishes.
const SMOOTH_MIN_STEP: f64 = 0.1;
const POWER_FLOOR: f64 = 1e-30;
const RANDOM_STARTS: usize = 4;

/// Fixed sample set with the per-element propagation terms factored into
/// row and column tables.
struct RangeObjective {
    rows: usize,
    cols: usize,
    amplitude: f64,
    samples: usize,
    col_terms: Vec<Complex64>,
    row_terms: Vec<Complex64>,
    element_power: Vec<f64>,
}

impl RangeObjective {
    fn new(geometry: &ArrayGeometry, directions: &[Direction]) -> Self {
        let samples = directions.len();
        let units: Vec<_> = directions.iter().map(|d| d.to_unit_vector()).collect();
        let mut col_terms = Vec::with_capacity(geometry.cols * samples);
        for c in 0..geometry.cols {
            let off = geometry.col_offset(c);
            col_terms.extend(units.iter().map(|u| Complex64::cis(2.0 * PI * off * u[1])));
        }
        let mut row_terms = Vec::with_capacity(geometry.rows * samples);
        for r in 0..geometry.rows {
            let off = geometry.row_offset(r);
            row_terms.extend(units.iter().map(|u| Complex64::cis(2.0 * PI * off * u[2])));
        }
        let element_power = units
            .iter()
            .map(|u| match geometry.element_exponent {
                None => 1.0,
                Some(_) if u[0] <= 0.0 => 0.0,
                Some(q) => u[0].powf(2.0 * q),
            })
            .collect();
        RangeObjective {
            rows: geometry.rows,
            cols: geometry.cols,
            amplitude: 1.0 / ((geometry.rows * geometry.cols) as f64).sqrt(),
            samples,
            col_terms,
            row_terms,
            element_power,
        }
    }

    fn term(&self, n: usize, s: usize) -> Complex64 {
        let (r, c) = (n / self.cols, n % self.cols);
        self.col_terms[c * self.samples + s] * self.row_terms[r * self.samples + s]
    }

    fn fields(&self, phases: &[f64]) -> Vec<Complex64> {
        let mut fields = vec![Complex64::new(0.0, 0.0); self.samples];
        for r in 0..self.rows {
            let rt = &self.row_terms[r * self.samples..(r + 1) * self.samples];
            let mut row_sum = vec![Complex64::new(0.0, 0.0); self.samples];
            for c in 0..self.cols {
                let w = Complex64::from_polar(self.amplitude, phases[r * self.cols + c]);
                let ct = &self.col_terms[c * self.samples..(c + 1) * self.samples];
                for (acc, t) in row_sum.iter_mut().zip(ct) {
                    *acc += w * t;
                }
            }
            for ((f, acc), t) in fields.iter_mut().zip(&row_sum).zip(rt) {
                *f += acc * t;
            }
        }
        fields
    }

    fn range_db(&self, fields: &[Complex64]) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (f, ep) in fields.iter().zip(&self.element_power) {
            let p = (f.norm_sqr() * ep).max(POWER_FLOOR);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        10.0 * (hi / lo).log10()
    }

    /// Log-sum-exp estimate of the range; approaches `range_db` as `beta` grows.
    fn soft_range_db(&self, fields: &[Complex64], beta: f64) -> f64 {
        let levels: Vec<f64> = fields
            .iter()
            .zip(&self.element_power)
            .map(|(f, ep)| 10.0 * (f.norm_sqr() * ep).max(POWER_FLOOR).log10())
            .collect();
        let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
        let up: f64 = levels.iter().map(|l| (beta * (l - hi)).exp()).sum();
        let down: f64 = levels.iter().map(|l| (beta * (lo - l)).exp()).sum();
        (hi - lo) + (up.ln() + down.ln()) / beta
    }

    fn score(&self, fields: &[Complex64], stage: Stage) -> f64 {
        match stage {
            Stage::Smooth(beta) => self.soft_range_db(fields, beta),
            Stage::Exact => self.range_db(fields),
        }
    }

    /// Coordinate descent on one stage's objective with a shrinking phase
    /// step. `best` tracks the lowest exact range seen after any sweep.
    fn descend(&self, phases: &mut [f64], stage: Stage, max_iters: usize, tolerance_db: f64, best: &mut (f64, Vec<f64>)) {
        let n_elems = phases.len();
        let mut fields = self.fields(phases);
        let mut objective = self.score(&fields, stage);
        let mut trial = vec![Complex64::new(0.0, 0.0); self.samples];
        let mut step = FRAC_PI_4;
        let mut sweeps = 0;
        let min_step = match stage {
            Stage::Smooth(_) => SMOOTH_MIN_STEP,
            Stage::Exact => MIN_STEP,
        };
        while step >= min_step && sweeps < max_iters && best.0 > tolerance_db {
            let mut improved = false;
            #[allow(clippy::needless_range_loop)]
            for n in 0..n_elems {
                let current = Complex64::from_polar(self.amplitude, phases[n]);
                for delta in [step, -step] {
                    let change = Complex64::from_polar(self.amplitude, phases[n] + delta) - current;
                    for (s, (t, f)) in trial.iter_mut().zip(&fields).enumerate() {
                        *t = f + change * self.term(n, s);
                    }
                    let candidate = self.score(&trial, stage);
                    if candidate < objective - 1e-12 {
                        std::mem::swap(&mut fields, &mut trial);
                        phases[n] += delta;
                        objective = candidate;
                        improved = true;
                        break;
                    }
                }
            }
            sweeps += 1;
            if !improved {
                step *= 0.5;
            }
            // resynchronize to keep incremental updates from drifting
            fields = self.fields(phases);
            objective = self.score(&fields, stage);
            let exact = self.range_db(&fields);
            if exact < best.0 {
                *best = (exact, phases.to_vec());
            }
        }
    }

    /// Runs the smoothing stages then the exact stage; leaves the best
    /// iterate in `phases` and returns its range.
    fn refine(&self, phases: &mut [f64], params: &QuasiOmniParams) -> f64 {
        let mut best = (self.range_db(&self.fields(phases)), phases.to_vec());
        let stages = params.smoothing.iter().map(|&b| Stage::Smooth(b)).chain([Stage::Exact]);
        for stage in stages {
            self.descend(phases, stage, params.max_iters, params.tolerance_db, &mut best);
        }
        phases.copy_from_slice(&best.1);
        best.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Smooth(f64),
    Exact,
}

/// Odd-symmetric quadratic phase taper; the weights are conjugate-symmetric
/// about the array center, which spreads energy away from broadside.
fn conjugate_symmetric_start(geometry: &ArrayGeometry) -> Vec<f64> {
    let norm = |off: f64, count: usize| {
        let half = (count as f64 - 1.0) / 2.0 * geometry.spacing;
        if half > 0.0 {
            off / half
        } else {
            0.0
        }
    };
    let mut phases = Vec::with_capacity(geometry.element_count());
    for r in 0..geometry.rows {
        let v = norm(geometry.row_offset(r), geometry.rows);
        for c in 0..geometry.cols {
            let u = norm(geometry.col_offset(c), geometry.cols);
            phases.push(PI * (u * u.abs() + v * v.abs()));
        }
    }
    phases
}

/// Start points in tie-break order: zero phases, seeded random draws, then
/// the conjugate-symmetric taper.
fn start_points(geometry: &ArrayGeometry, seed: u64) -> Vec<Vec<f64>> {
    let n = geometry.element_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut starts = vec![vec![0.0; n]];
    for _ in 0..RANDOM_STARTS {
        starts.push((0..n).map(|_| rng.gen::<f64>() * 2.0 * PI - PI).collect());
    }
    starts.push(conjugate_symmetric_start(geometry));
    starts
}

/// Gain range (dB) of `awv` over the sample set implied by `params`.
pub fn quasi_omni_range(geometry: &ArrayGeometry, awv: &Awv, params: &QuasiOmniParams) -> Result<f64> {
    awv.check_geometry(geometry)?;
    let dirs = sample_directions(params.n_samples, params.seed, params.sphere_uniform);
    let objective = RangeObjective::new(geometry, &dirs);
    Ok(objective.range_db(&objective.fields(&awv.phases)))
}

/// Phase-only AWV minimizing the spread of gains over a fixed random sample
/// set of directions.
pub fn synthesize_quasi_omni(geometry: &ArrayGeometry, params: &QuasiOmniParams) -> Result<Awv> {
    Ok(synthesize_quasi_omni_report(geometry, params)?.awv)
}

pub fn synthesize_quasi_omni_report(
    geometry: &ArrayGeometry,
    params: &QuasiOmniParams,
) -> Result<QuasiOmniReport> {
    geometry.validate()?;
    if params.n_samples < 2 {
        return Err(Error::InvalidInput("quasi-omni synthesis needs at least 2 samples".into()));
    }
    let dirs = sample_directions(params.n_samples, params.seed, params.sphere_uniform);
    let objective = RangeObjective::new(geometry, &dirs);

    let mut initial_ranges = Vec::new();
    let mut refined_ranges = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    for (i, mut phases) in start_points(geometry, params.seed).into_iter().enumerate() {
        initial_ranges.push(objective.range_db(&objective.fields(&phases)));
        let range = objective.refine(&mut phases, params);
        refined_ranges.push(range);
        if best.as_ref().is_none_or(|(_, b, _)| range < *b) {
            best = Some((i, range, phases));
        }
    }
    let (best_start, range_db, phases) = best.expect("at least one start point");
    Ok(QuasiOmniReport {
        awv: Awv { phases },
        range_db,
        initial_ranges,
        refined_ranges,
        best_start,
    })
}

/// Renders a codebook in the text format.
pub fn format_codebook(codebook: &Codebook) -> String {
    let g = &codebook.geometry;
    let mut out = String::new();
    writeln!(out, "{} {} {:e} {:e}", g.rows, g.cols, g.spacing, g.carrier_frequency).unwrap();
    let write_phases = |out: &mut String, awv: &Awv| {
        for row in awv.phases.chunks(g.cols.max(1)) {
            let line: Vec<String> = row.iter().map(|p| format!("{p:.15e}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    };
    for s in &codebook.sectors {
        writeln!(out, "SECTOR {} {:e} {:e}", s.id, s.aim.azimuth, s.aim.elevation).unwrap();
        write_phases(&mut out, &s.awv);
    }
    writeln!(out, "QUASIOMNI").unwrap();
    write_phases(&mut out, &codebook.quasi_omni);
    out
}

fn parse_num<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} `{token}`"),
    })
}

enum Block {
    Sector(usize, Direction),
    QuasiOmni,
}

/// Parses the text format. Errors name the offending line.
pub fn parse_codebook(text: &str) -> Result<Codebook> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 {
        return Err(Error::Parse {
            line: hline,
            message: "header must be `rows cols spacing freq`".into(),
        });
    }
    let mut geometry = ArrayGeometry::new(
        parse_num(h[0], hline, "rows")?,
        parse_num(h[1], hline, "cols")?,
    );
    geometry.spacing = parse_num(h[2], hline, "spacing")?;
    geometry.carrier_frequency = parse_num(h[3], hline, "frequency")?;
    geometry.validate().map_err(|e| Error::Parse {
        line: hline,
        message: e.to_string(),
    })?;
    let expected = geometry.element_count();

    let mut blocks: Vec<(usize, Block, Vec<f64>)> = Vec::new();
    for (ln, line) in lines {
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap_or_default();
        match first {
            "SECTOR" => {
                let t: Vec<&str> = tokens.collect();
                if t.len() != 3 {
                    return Err(Error::Parse {
                        line: ln,
                        message: "expected `SECTOR id aim_az aim_el`".into(),
                    });
                }
                let id = parse_num(t[0], ln, "sector id")?;
                let aim = Direction::new(parse_num(t[1], ln, "azimuth")?, parse_num(t[2], ln, "elevation")?);
                blocks.push((ln, Block::Sector(id, aim), Vec::with_capacity(expected)));
            }
            "QUASIOMNI" => {
                if tokens.next().is_some() {
                    return Err(Error::Parse {
                        line: ln,
                        message: "QUASIOMNI takes no arguments".into(),
                    });
                }
                blocks.push((ln, Block::QuasiOmni, Vec::with_capacity(expected)));
            }
            _ => {
                let (_, _, phases) = blocks.last_mut().ok_or(Error::Parse {
                    line: ln,
                    message: "phase values before any SECTOR or QUASIOMNI block".into(),
                })?;
                for tok in line.split_whitespace() {
                    let p: f64 = parse_num(tok, ln, "phase")?;
                    if !p.is_finite() {
                        return Err(Error::Parse {
                            line: ln,
                            message: format!("non-finite phase `{tok}`"),
                        });
                    }
                    phases.push(p);
                }
            }
        }
    }

    let mut sectors = Vec::new();
    let mut quasi_omni = None;
    for (ln, block, phases) in blocks {
        if phases.len() != expected {
            return Err(Error::Structure(format!(
                "block starting at line {ln} has {} phases, expected {expected} for a {}x{} array",
                phases.len(),
                geometry.rows,
                geometry.cols
            )));
        }
        match block {
            Block::Sector(id, aim) => sectors.push(Sector {
                id,
                aim,
                awv: Awv { phases },
            }),
            Block::QuasiOmni => {
                if quasi_omni.replace(Awv { phases }).is_some() {
                    return Err(Error::Structure(format!("second QUASIOMNI block at line {ln}")));
                }
            }
        }
    }
    let quasi_omni =
        quasi_omni.ok_or_else(|| Error::Structure("codebook has no QUASIOMNI block".into()))?;
    let codebook = Codebook {
        geometry,
        sectors,
        quasi_omni,
    };
    codebook.validate()?;
    Ok(codebook)
}

pub fn write_codebook(codebook: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_codebook(codebook))?;
    Ok(())
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    parse_codebook(&std::fs::read_to_string(path)?)
}
