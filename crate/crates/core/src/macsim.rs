//! Discrete-event simulation of the beacon-interval MAC.
//!
//! Time is kept in integer nanoseconds. Events are processed in
//! `(time, insertion order)` order, so runs are exactly repeatable.
//!
//! The medium is in one of four states: idle, beacon header (BHI), sector
//! sweep (SLS) or data. Nothing preempts an MPDU that is already on the air:
//! a beacon or a sweep that falls due meanwhile starts when it finishes.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::array::{ArrayGeometry, ArrayResponse, Awv};
use crate::channel::{snr, Endpoint, LinkBudgetConfig, McsEntry};
use crate::codebook::Codebook;
use crate::covrage::{plan_subarrays_with, synthesize_awv, CovrageParams, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{local_unit_vector_to, predict_pose, Pose, PoseSource, Predictor, Quaternion, Vec3};
use crate::mobility::Motion;

pub type Nanos = i64;

pub fn to_ns(seconds: f64) -> Nanos {
    (seconds * 1e9).round() as Nanos
}

pub fn to_seconds(ns: Nanos) -> f64 {
    ns as f64 / 1e9
}

fn format_ns(ns: Nanos) -> String {
    format!("{}.{:09}", ns.div_euclid(1_000_000_000), ns.rem_euclid(1_000_000_000))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfLocation {
    /// Sweep inside every beacon header, during association beamforming training.
    Abft,
    /// Periodic sweep in the data interval.
    Dti,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiConfig {
    pub bi_duration: f64,
    pub bhi_duration: f64,
    pub sls_duration: f64,
    pub bf_location: BfLocation,
    pub dti_bf_interval: f64,
}

impl Default for BiConfig {
    fn default() -> Self {
        BiConfig {
            bi_duration: 102.4e-3,
            bhi_duration: 2.0e-3,
            sls_duration: 0.75e-3,
            bf_location: BfLocation::Dti,
            dti_bf_interval: 0.1,
        }
    }
}

impl BiConfig {
    /// Time between beamforming updates.
    pub fn bf_period(&self) -> f64 {
        match self.bf_location {
            BfLocation::Abft => self.bi_duration,
            BfLocation::Dti => self.dti_bf_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bi_duration > 0.0 && self.bhi_duration > 0.0 && self.sls_duration > 0.0) {
            return Err(Error::Config("beacon timing values must be positive".into()));
        }
        if self.bhi_duration >= self.bi_duration {
            return Err(Error::Config("beacon header must be shorter than the beacon interval".into()));
        }
        if !(self.dti_bf_interval > 0.0) {
            return Err(Error::Config("beamforming interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficConfig {
    pub burst_interval: f64,
    /// bits/s
    pub data_rate: f64,
    pub deadline: f64,
    /// Largest MPDU payload, bytes.
    pub mpdu_payload: u64,
    /// MAC and upper-layer header bytes added to every MPDU.
    pub header_bytes: u64,
    /// Fixed per-MPDU air overhead (preamble, interframe spacing), seconds.
    pub per_mpdu_overhead: f64,
    /// Age after which a queued frame is discarded; the deadline when unset.
    pub queue_drop: Option<f64>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            burst_interval: 0.01,
            data_rate: 5e9,
            deadline: 0.020,
            mpdu_payload: 65_536,
            header_bytes: 100,
            per_mpdu_overhead: 3e-6,
            queue_drop: None,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.burst_interval > 0.0 && self.data_rate > 0.0 && self.deadline > 0.0) {
            return Err(Error::Config("burst interval, data rate and deadline must be positive".into()));
        }
        let bits = self.data_rate * self.burst_interval;
        if (bits - bits.round()).abs() > 1e-6 * bits.max(1.0) {
            return Err(Error::Config(format!("burst of {bits} bits is not a whole number of bits")));
        }
        if self.mpdu_payload == 0 || self.per_mpdu_overhead < 0.0 {
            return Err(Error::Config("MPDU payload must be positive".into()));
        }
        if matches!(self.queue_drop, Some(d) if !(d > 0.0)) {
            return Err(Error::Config("queue drop age must be positive".into()));
        }
        Ok(())
    }

    pub fn burst_bits(&self) -> u64 {
        (self.data_rate * self.burst_interval).round() as u64
    }

    /// Payload bits of each MPDU of one burst; only the last may be short.
    pub fn mpdu_sizes(&self) -> Vec<u64> {
        let total = self.burst_bits();
        let full = self.mpdu_payload * 8;
        let mut sizes = vec![full; (total / full) as usize];
        if !total.is_multiple_of(full) {
            sizes.push(total % full);
        }
        sizes
    }

    pub fn airtime(&self, payload_bits: u64, phy_rate: f64) -> Nanos {
        to_ns((payload_bits + self.header_bytes * 8) as f64 / phy_rate + self.per_mpdu_overhead)
    }

    /// Air time of one whole burst on a clean link.
    pub fn burst_airtime(&self, phy_rate: f64) -> Nanos {
        self.mpdu_sizes().iter().map(|&b| self.airtime(b, phy_rate)).sum()
    }

    pub fn drop_age(&self) -> f64 {
        self.queue_drop.unwrap_or(self.deadline)
    }
}

/// The access point: a fixed array with a sector codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub position: Vec3,
    pub orientation: Quaternion,
    pub codebook: Codebook,
}

impl AccessPoint {
    /// Boresight (+x) pointing straight down.
    pub fn facing_down() -> Quaternion {
        Quaternion::from_axis_angle([0.0, 1.0, 0.0], std::f64::consts::FRAC_PI_2)
    }

    pub fn pose(&self, t: f64) -> Pose {
        Pose::new(t, self.position, self.orientation)
    }
}

/// How the headset forms its beam.
#[derive(Debug, Clone, PartialEq)]
pub enum HmdBeamforming {
    Covrage {
        geometry: ArrayGeometry,
        predictor: Predictor,
        params: CovrageParams,
    },
    /// Receive sector picked by sweeping a codebook.
    Sectors { codebook: Codebook },
    /// One fixed wide pattern.
    QuasiOmni { geometry: ArrayGeometry, awv: Awv },
}

impl HmdBeamforming {
    pub fn name(&self) -> &'static str {
        match self {
            HmdBeamforming::Covrage { .. } => "covrage",
            HmdBeamforming::Sectors { .. } => "sectors",
            HmdBeamforming::QuasiOmni { .. } => "quasi_omni",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub sim_time: f64,
    pub bi: BiConfig,
    pub traffic: TrafficConfig,
    pub link: LinkBudgetConfig,
    pub mcs: McsEntry,
    pub ap: AccessPoint,
    pub hmd: HmdBeamforming,
    pub motion: Motion,
    /// Spacing of the two pose samples fed to the velocity predictor.
    pub history_dt: f64,
    pub record_log: bool,
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        if !(self.sim_time > 0.0) || !self.sim_time.is_finite() {
            return Err(Error::Config("simulation time must be positive".into()));
        }
        if !(self.history_dt > 0.0) {
            return Err(Error::Config("pose history spacing must be positive".into()));
        }
        if !(self.mcs.phy_rate > 0.0) {
            return Err(Error::Config("PHY rate must be positive".into()));
        }
        self.bi.validate()?;
        self.traffic.validate()?;
        self.link.validate()?;
        self.ap.codebook.validate()?;
        match &self.hmd {
            HmdBeamforming::Covrage { geometry, predictor, params } => {
                geometry.validate()?;
                if params.k_max == 0 {
                    return Err(Error::Config("k_max must be at least 1".into()));
                }
                if matches!(predictor, Predictor::Device { .. }) && !self.motion.trace.has_device_prediction() {
                    return Err(Error::Config(
                        "device prediction needs a trace with device-prediction columns".into(),
                    ));
                }
            }
            HmdBeamforming::Sectors { codebook } => codebook.validate()?,
            HmdBeamforming::QuasiOmni { geometry, awv } => awv.check_geometry(geometry)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub created: f64,
    pub completed: Option<f64>,
    pub delivered: bool,
}

impl FrameRecord {
    /// Completion latency, rounded to the simulator's nanosecond clock.
    pub fn latency(&self) -> Option<f64> {
        self.completed.map(|c| ((c - self.created) * 1e9).round() / 1e9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    BeaconStart,
    BhiEnd,
    BurstArrival,
    MpduTxDone,
    BfTrigger,
    SlsDone,
    SimEnd,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::BeaconStart => "beacon_start",
            EventKind::BhiEnd => "bhi_end",
            EventKind::BurstArrival => "burst_arrival",
            EventKind::MpduTxDone => "mpdu_tx_done",
            EventKind::BfTrigger => "bf_trigger",
            EventKind::SlsDone => "sls_done",
            EventKind::SimEnd => "sim_end",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            EventKind::BeaconStart,
            EventKind::BhiEnd,
            EventKind::BurstArrival,
            EventKind::MpduTxDone,
            EventKind::BfTrigger,
            EventKind::SlsDone,
            EventKind::SimEnd,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// One processed event. `detail` is a `;`-separated list of `key=value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub t: Nanos,
    pub kind: EventKind,
    pub detail: String,
}

impl LogEntry {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub bhi_count: u64,
    pub sls_count: u64,
    pub bf_updates: u64,
    pub attempts: u64,
    pub failed_attempts: u64,
    pub dropped_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub frames: Vec<FrameRecord>,
    pub log: Vec<LogEntry>,
    /// Times at which the rotation trace looped.
    pub seams: Vec<f64>,
    pub stats: SimStats,
}

pub fn format_event_log(log: &[LogEntry]) -> String {
    let mut out = String::from("t,kind,detail\n");
    for e in log {
        let _ = writeln!(out, "{},{},{}", format_ns(e.t), e.kind.name(), e.detail);
    }
    out
}

pub fn write_event_log(log: &[LogEntry], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_event_log(log))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    BeaconStart,
    BhiEnd { start: Nanos },
    BurstArrival,
    MpduTxDone { start: Nanos, frame: u64, ok: bool },
    BfTrigger,
    SlsDone { start: Nanos },
    SimEnd,
}

#[derive(Debug, PartialEq, Eq)]
struct Scheduled {
    t: Nanos,
    seq: u64,
    event: Event,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; earliest (t, seq) must come out first
        (other.t, other.seq).cmp(&(self.t, self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Medium {
    Idle,
    Bhi,
    Sls,
    Data,
}

struct QueuedFrame {
    id: u64,
    created: Nanos,
    mpdus: VecDeque<u64>,
}

struct Sim<'a> {
    setup: &'a SimSetup,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    medium: Medium,
    pending_bhi: bool,
    pending_sls: bool,
    queue: VecDeque<QueuedFrame>,
    created: Vec<Nanos>,
    completed: Vec<Option<Nanos>>,
    next_frame: u64,
    ap_candidates: Vec<ArrayResponse>,
    hmd_candidates: Vec<ArrayResponse>,
    ap_beam: Option<usize>,
    hmd_beam: Option<ArrayResponse>,
    log: Vec<LogEntry>,
    stats: SimStats,
}

impl<'a> Sim<'a> {
    fn new(setup: &'a SimSetup) -> Result<Self> {
        let hmd_candidates = match &setup.hmd {
            HmdBeamforming::Sectors { codebook } => candidate_responses(codebook)?,
            _ => Vec::new(),
        };
        Ok(Sim {
            setup,
            heap: BinaryHeap::new(),
            seq: 0,
            medium: Medium::Idle,
            pending_bhi: false,
            pending_sls: false,
            queue: VecDeque::new(),
            created: Vec::new(),
            completed: Vec::new(),
            next_frame: 0,
            ap_candidates: candidate_responses(&setup.ap.codebook)?,
            hmd_candidates,
            ap_beam: None,
            hmd_beam: None,
            log: Vec::new(),
            stats: SimStats::default(),
        })
    }

    fn schedule(&mut self, t: Nanos, event: Event) {
        self.heap.push(Scheduled { t, seq: self.seq, event });
        self.seq += 1;
    }

    fn record(&mut self, t: Nanos, kind: EventKind, detail: impl FnOnce() -> String) {
        if self.setup.record_log {
            self.log.push(LogEntry { t, kind, detail: detail() });
        }
    }

    fn associated(&self) -> bool {
        self.ap_beam.is_some() && self.hmd_beam.is_some()
    }

    fn run(mut self) -> Result<SimOutput> {
        let s = self.setup;
        let end = to_ns(s.sim_time);
        self.schedule(end, Event::SimEnd);
        self.schedule(0, Event::BeaconStart);
        self.schedule(0, Event::BurstArrival);
        if s.bi.bf_location == BfLocation::Dti {
            self.schedule(to_ns(s.bi.dti_bf_interval), Event::BfTrigger);
        }
        while let Some(Scheduled { t, event, .. }) = self.heap.pop() {
            match event {
                Event::SimEnd => {
                    self.record(t, EventKind::SimEnd, String::new);
                    break;
                }
                Event::BeaconStart => self.on_beacon(t),
                Event::BhiEnd { start } => self.on_bhi_end(t, start)?,
                Event::BurstArrival => self.on_burst(t)?,
                Event::MpduTxDone { start, frame, ok } => self.on_tx_done(t, start, frame, ok)?,
                Event::BfTrigger => self.on_bf_trigger(t),
                Event::SlsDone { start } => self.on_sls_done(t, start)?,
            }
        }
        let deadline = to_ns(s.traffic.deadline);
        let frames = self
            .created
            .iter()
            .zip(&self.completed)
            .enumerate()
            .map(|(id, (&c, &done))| FrameRecord {
                frame_id: id as u64,
                created: to_seconds(c),
                completed: done.map(to_seconds),
                delivered: matches!(done, Some(d) if d - c <= deadline),
            })
            .collect();
        Ok(SimOutput {
            frames,
            log: self.log,
            seams: s.motion.trace.seam_times(s.sim_time),
            stats: self.stats,
        })
    }

    fn on_beacon(&mut self, t: Nanos) {
        let deferred = self.medium != Medium::Idle;
        self.record(t, EventKind::BeaconStart, || if deferred { "deferred=1".into() } else { String::new() });
        self.schedule(t + to_ns(self.setup.bi.bi_duration), Event::BeaconStart);
        if deferred {
            self.pending_bhi = true;
        } else {
            self.start_bhi(t);
        }
    }

    fn start_bhi(&mut self, t: Nanos) {
        self.pending_bhi = false;
        self.medium = Medium::Bhi;
        self.stats.bhi_count += 1;
        self.schedule(t + to_ns(self.setup.bi.bhi_duration), Event::BhiEnd { start: t });
    }

    fn on_bhi_end(&mut self, t: Nanos, start: Nanos) -> Result<()> {
        self.medium = Medium::Idle;
        let bf = if !self.associated() || self.setup.bi.bf_location == BfLocation::Abft {
            Some(self.beamform(t)?)
        } else {
            None
        };
        self.record(t, EventKind::BhiEnd, || match bf {
            Some(info) => format!("start={start};{info}"),
            None => format!("start={start}"),
        });
        self.next_activity(t)
    }

    fn on_bf_trigger(&mut self, t: Nanos) {
        let postponed = self.medium != Medium::Idle;
        self.record(t, EventKind::BfTrigger, || if postponed { "postponed=1".into() } else { String::new() });
        self.schedule(t + to_ns(self.setup.bi.dti_bf_interval), Event::BfTrigger);
        if postponed {
            self.pending_sls = true;
        } else {
            self.start_sls(t);
        }
    }

    fn start_sls(&mut self, t: Nanos) {
        self.pending_sls = false;
        self.medium = Medium::Sls;
        self.schedule(t + to_ns(self.setup.bi.sls_duration), Event::SlsDone { start: t });
    }

    fn on_sls_done(&mut self, t: Nanos, start: Nanos) -> Result<()> {
        self.medium = Medium::Idle;
        self.stats.sls_count += 1;
        let info = self.beamform(t)?;
        self.record(t, EventKind::SlsDone, || format!("start={start};{info}"));
        self.next_activity(t)
    }

    fn on_burst(&mut self, t: Nanos) -> Result<()> {
        let id = self.next_frame;
        self.next_frame += 1;
        let mpdus: VecDeque<u64> = self.setup.traffic.mpdu_sizes().into();
        let n = mpdus.len();
        self.record(t, EventKind::BurstArrival, || format!("frame={id};mpdus={n}"));
        self.created.push(t);
        self.completed.push(None);
        self.queue.push_back(QueuedFrame { id, created: t, mpdus });
        self.schedule(t + to_ns(self.setup.traffic.burst_interval), Event::BurstArrival);
        self.try_transmit(t)
    }

    fn on_tx_done(&mut self, t: Nanos, start: Nanos, frame: u64, ok: bool) -> Result<()> {
        self.medium = Medium::Idle;
        self.record(t, EventKind::MpduTxDone, || format!("start={start};frame={frame};ok={}", ok as u8));
        if ok {
            let head = self.queue.front_mut().expect("transmitting frame is queued");
            debug_assert_eq!(head.id, frame);
            head.mpdus.pop_front();
            if head.mpdus.is_empty() {
                self.completed[frame as usize] = Some(t);
                self.queue.pop_front();
            }
        }
        self.next_activity(t)
    }

    /// Medium just went idle: deferred beacon first, then a postponed sweep,
    /// then data.
    fn next_activity(&mut self, t: Nanos) -> Result<()> {
        if self.pending_bhi {
            self.start_bhi(t);
            Ok(())
        } else if self.pending_sls {
            self.start_sls(t);
            Ok(())
        } else {
            self.try_transmit(t)
        }
    }

    fn try_transmit(&mut self, t: Nanos) -> Result<()> {
        if self.medium != Medium::Idle || !self.associated() {
            return Ok(());
        }
        let drop_age = to_ns(self.setup.traffic.drop_age());
        while let Some(head) = self.queue.front() {
            if t - head.created > drop_age {
                self.stats.dropped_frames += 1;
                self.queue.pop_front();
            } else {
                break;
            }
        }
        let Some(head) = self.queue.front() else {
            return Ok(());
        };
        let (frame, bits) = (head.id, head.mpdus[0]);
        let ok = self.link_usable(t)?;
        self.stats.attempts += 1;
        if !ok {
            self.stats.failed_attempts += 1;
        }
        self.medium = Medium::Data;
        let airtime = self.setup.traffic.airtime(bits, self.setup.mcs.phy_rate);
        self.schedule(t + airtime, Event::MpduTxDone { start: t, frame, ok });
        Ok(())
    }

    fn link_usable(&self, t: Nanos) -> Result<bool> {
        let s = self.setup;
        let ts = to_seconds(t);
        let (ap_pose, hmd_pose) = (s.ap.pose(ts), s.motion.pose_at(ts));
        let ap_beam = &self.ap_candidates[self.ap_beam.expect("associated")];
        let hmd_beam = self.hmd_beam.as_ref().expect("associated");
        let value = snr(
            &s.link,
            Endpoint { pose: &ap_pose, beam: ap_beam },
            Endpoint { pose: &hmd_pose, beam: hmd_beam },
        )?;
        Ok(value >= s.mcs.snr_threshold)
    }

    /// Sector sweep outcome at `t`: best AP sector towards the headset and a
    /// fresh headset beam. Returns a log fragment.
    fn beamform(&mut self, t: Nanos) -> Result<String> {
        let s = self.setup;
        let ts = to_seconds(t);
        let (ap_pose, hmd_pose) = (s.ap.pose(ts), s.motion.pose_at(ts));
        let towards_hmd = local_unit_vector_to(&ap_pose, hmd_pose.position)?;
        let sector = select_sector(&self.ap_candidates, towards_hmd);
        self.ap_beam = Some(sector);
        self.stats.bf_updates += 1;

        let hmd_info = match &s.hmd {
            HmdBeamforming::Covrage { geometry, predictor, params } => {
                let horizon = s.bi.bf_period();
                let mut history = Vec::with_capacity(2);
                if ts >= s.history_dt {
                    history.push(s.motion.pose_at(ts - s.history_dt));
                }
                history.push(hmd_pose);
                let source: &dyn PoseSource = &s.motion;
                let predicted = predict_pose(&history, horizon, *predictor, Some(source))?;
                let trajectory = Trajectory::from_poses(&hmd_pose, &predicted, s.ap.position)?;
                let plan = plan_subarrays_with(geometry, &trajectory, params)?;
                let awv = synthesize_awv(geometry, &plan)?;
                self.hmd_beam = Some(ArrayResponse::new(geometry, &awv)?);
                format!("k={};span={:.3}", plan.k, trajectory.span_deg)
            }
            HmdBeamforming::Sectors { codebook } => {
                let towards_ap = local_unit_vector_to(&hmd_pose, s.ap.position)?;
                let id = select_sector(&self.hmd_candidates, towards_ap);
                self.hmd_beam = Some(ArrayResponse::new(
                    &codebook.geometry,
                    codebook.candidate(id).expect("id in range"),
                )?);
                format!("hmd_sector={id}")
            }
            HmdBeamforming::QuasiOmni { geometry, awv } => {
                if self.hmd_beam.is_none() {
                    self.hmd_beam = Some(ArrayResponse::new(geometry, awv)?);
                }
                "hmd=quasi_omni".to_string()
            }
        };
        Ok(format!("ap_sector={sector};{hmd_info}"))
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Responses of every codebook candidate, indexed by candidate id.
pub fn candidate_responses(codebook: &Codebook) -> Result<Vec<ArrayResponse>> {
    (0..codebook.candidate_count())
        .map(|id| ArrayResponse::new(&codebook.geometry, codebook.candidate(id).expect("id in range")))
        .collect()
}

/// Sweep outcome: the candidate with the most gain towards the local
/// direction `u`. The peer listens with a fixed pattern, so this is also the
/// candidate with the most received power.
pub fn select_sector(candidates: &[ArrayResponse], u: Vec3) -> usize {
    argmax(candidates.iter().map(|r| r.gain_db_unit(u)))
}

/// Runs one scenario to completion.
pub fn run(setup: &SimSetup) -> Result<SimOutput> {
    setup.validate()?;
    Sim::new(setup)?.run()
}

/// Transmission, beacon-header and sweep intervals recovered from an event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MediumIntervals {
    pub data: Vec<(Nanos, Nanos)>,
    pub bhi: Vec<(Nanos, Nanos)>,
    pub sls: Vec<(Nanos, Nanos)>,
}

pub fn medium_intervals(log: &[LogEntry]) -> MediumIntervals {
    let mut out = MediumIntervals::default();
    for e in log {
        let Some(start) = e.field("start").and_then(|v| v.parse::<Nanos>().ok()) else {
            continue;
        };
        match e.kind {
            EventKind::MpduTxDone => out.data.push((start, e.t)),
            EventKind::BhiEnd => out.bhi.push((start, e.t)),
            EventKind::SlsDone => out.sls.push((start, e.t)),
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{generate_sector_codebook, QuasiOmniParams, synthesize_quasi_omni, DEFAULT_SECTOR_ANGLES};
    use crate::mobility::{static_trace, Walk};

    fn ap_codebook() -> Codebook {
        let g = ArrayGeometry::new(8, 8);
        let qo = synthesize_quasi_omni(&g, &QuasiOmniParams { max_iters: 2, n_samples: 200, ..QuasiOmniParams::default() }).unwrap();
        generate_sector_codebook(&g, &DEFAULT_SECTOR_ANGLES, &DEFAULT_SECTOR_ANGLES, qo).unwrap()
    }

    fn static_setup(sim_time: f64, data_rate: f64) -> SimSetup {
        let trace = static_trace(Quaternion::from_yaw_pitch_roll(0.3, 0.5, 0.0), sim_time);
        let mut motion = Motion::new(trace, Some(Walk::stationary([3.0, 2.0])));
        motion.hmd_height = 1.7;
        SimSetup {
            sim_time,
            bi: BiConfig::default(),
            traffic: TrafficConfig { data_rate, ..TrafficConfig::default() },
            link: LinkBudgetConfig::default(),
            mcs: McsEntry::MCS21,
            ap: AccessPoint {
                position: [0.0, 0.0, 10.0],
                orientation: AccessPoint::facing_down(),
                codebook: ap_codebook(),
            },
            hmd: HmdBeamforming::Covrage {
                geometry: ArrayGeometry::new(16, 16),
                predictor: Predictor::ConstantVelocity,
                params: CovrageParams::default(),
            },
            motion,
            history_dt: 0.01,
            record_log: true,
        }
    }

    #[test]
    fn mpdu_split() {
        let t = TrafficConfig::default();
        let sizes = t.mpdu_sizes();
        assert_eq!(sizes.len(), 96);
        assert_eq!(sizes[..95].iter().copied().collect::<std::collections::BTreeSet<_>>().len(), 1);
        assert_eq!(sizes[0], 65_536 * 8);
        assert_eq!(sizes[95], 24_080 * 8);
        assert_eq!(sizes.iter().sum::<u64>(), 6_250_000 * 8);
        // 65 636 B at 8.085 Gb/s plus 3 us
        assert_eq!(t.airtime(sizes[0], 8.085e9), 67_946);
        let airtime = to_seconds(t.burst_airtime(8.085e9));
        assert!((airtime - 6.48e-3).abs() < 0.01e-3, "{airtime}");
    }

    #[test]
    fn event_queue_is_stable() {
        let mut heap = BinaryHeap::new();
        for (seq, t) in [5, 1, 5, 1, 3].into_iter().enumerate() {
            heap.push(Scheduled { t, seq: seq as u64, event: Event::SimEnd });
        }
        let order: Vec<(Nanos, u64)> = std::iter::from_fn(|| heap.pop().map(|s| (s.t, s.seq))).collect();
        assert_eq!(order, vec![(1, 1), (1, 3), (3, 4), (5, 0), (5, 2)]);
    }

    #[test]
    fn single_mpdu_frames_have_constant_latency() {
        // 40 Mb/s: 50 000 B per burst, one MPDU
        let setup = static_setup(1.0, 4e7);
        let out = run(&setup).unwrap();
        assert_eq!(out.frames.len(), 100);
        let expected = to_seconds(setup.traffic.airtime(400_000, 8.085e9));
        let mut clean = 0;
        for f in &out.frames {
            assert!(f.delivered);
            let l = f.latency().unwrap();
            assert!(l >= expected - 1e-12);
            if (l - expected).abs() < 1e-12 {
                clean += 1;
            }
        }
        // only frames caught by a beacon header or a sweep are later
        assert!(clean >= 80, "{clean}");
        assert_eq!(out.stats.failed_attempts, 0);
    }

    #[test]
    fn beacon_count_and_no_overlap() {
        let out = run(&static_setup(2.0, 5e9)).unwrap();
        assert_eq!(out.stats.bhi_count, (2.0f64 / 0.1024).ceil() as u64);
        assert_eq!(out.stats.sls_count, 19);
        let iv = medium_intervals(&out.log);
        let mut all: Vec<(Nanos, Nanos)> = iv.data.iter().chain(&iv.bhi).chain(&iv.sls).copied().collect();
        all.sort();
        for w in all.windows(2) {
            assert!(w[0].1 <= w[1].0, "{w:?}");
        }
        let ids: Vec<u64> = out.frames.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn no_data_before_association() {
        let out = run(&static_setup(0.05, 5e9)).unwrap();
        let iv = medium_intervals(&out.log);
        assert!(iv.data.iter().all(|&(s, _)| s >= to_ns(2e-3)));
        assert_eq!(iv.data[0].0, to_ns(2e-3));
    }

    #[test]
    fn tx_in_flight_defers_beacon() {
        // 102.4 ms falls inside the transmission of frame 10 (starts 100.75 ms)
        let out = run(&static_setup(0.2, 5e9)).unwrap();
        let beacon = out.log.iter().find(|e| e.kind == EventKind::BeaconStart && e.t == to_ns(0.1024)).unwrap();
        assert_eq!(beacon.field("deferred"), Some("1"));
        let iv = medium_intervals(&out.log);
        let bhi = iv.bhi[1];
        assert!(bhi.0 > to_ns(0.1024));
        assert!(iv.data.iter().any(|&(_, end)| end == bhi.0));
        assert_eq!(bhi.1 - bhi.0, to_ns(2e-3));
    }

    #[test]
    fn sweep_postponed_past_beacon_header() {
        // first trigger at 205.5 ms, inside the header that follows the 204.8 ms beacon
        let mut setup = static_setup(0.25, 5e9);
        setup.bi.dti_bf_interval = 0.2055;
        let out = run(&setup).unwrap();
        let iv = medium_intervals(&out.log);
        let bhi = *iv.bhi.iter().find(|b| b.0 <= to_ns(0.2055) && to_ns(0.2055) < b.1).expect("trigger inside a header");
        assert_eq!(iv.sls[0].0, bhi.1);
    }

    #[test]
    fn unusable_link_loses_every_frame() {
        let mut setup = static_setup(0.3, 5e9);
        setup.link.extra_loss_db = 200.0;
        let out = run(&setup).unwrap();
        assert!(out.frames.iter().all(|f| !f.delivered && f.completed.is_none()));
        assert!(out.stats.dropped_frames > 0);
        assert_eq!(out.stats.failed_attempts, out.stats.attempts);
    }

    #[test]
    fn overload_drops_nearly_everything() {
        let out = run(&static_setup(2.0, 8e9)).unwrap();
        let delivered = out.frames.iter().filter(|f| f.delivered).count();
        assert!(delivered <= 20, "{delivered}");
    }

    #[test]
    fn runs_are_repeatable() {
        let a = run(&static_setup(0.5, 5e9)).unwrap();
        let b = run(&static_setup(0.5, 5e9)).unwrap();
        assert_eq!(format_event_log(&a.log), format_event_log(&b.log));
        assert_eq!(a, b);
    }

    #[test]
    fn abft_updates_every_beacon() {
        let mut setup = static_setup(1.0, 2e9);
        setup.bi.bf_location = BfLocation::Abft;
        let out = run(&setup).unwrap();
        assert_eq!(out.stats.sls_count, 0);
        assert_eq!(out.stats.bf_updates, out.stats.bhi_count);
        assert!(out.log.iter().all(|e| e.kind != EventKind::BfTrigger));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax([f64::NEG_INFINITY]), 0);
    }

    #[test]
    fn log_format() {
        let log = vec![LogEntry { t: 1_500_000_123, kind: EventKind::MpduTxDone, detail: "start=7;frame=2;ok=1".into() }];
        assert_eq!(format_event_log(&log), "t,kind,detail\n1.500000123,mpdu_tx_done,start=7;frame=2;ok=1\n");
        assert_eq!(log[0].field("frame"), Some("2"));
        assert_eq!(EventKind::parse("sls_done"), Some(EventKind::SlsDone));
    }
}
