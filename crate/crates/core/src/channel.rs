//! Line-of-sight link budget and the fixed-MCS usability gate.

use std::f64::consts::PI;

use crate::array::{ArrayResponse, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::geometry::{local_unit_vector_to, norm3, sub3, Pose};

/// Thermal noise density at room temperature, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudgetConfig {
    /// dBm
    pub tx_power: f64,
    /// dB
    pub noise_figure: f64,
    /// Hz
    pub bandwidth: f64,
    /// Hz
    pub carrier: f64,
    /// dB
    pub implementation_loss: f64,
    /// Additional loss applied to every link, dB.
    pub extra_loss_db: f64,
}

impl Default for LinkBudgetConfig {
    fn default() -> Self {
        LinkBudgetConfig {
            tx_power: 10.0,
            noise_figure: 10.0,
            bandwidth: 1.76e9,
            carrier: 60e9,
            implementation_loss: 5.0,
            extra_loss_db: 0.0,
        }
    }
}

impl LinkBudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !(self.carrier > 0.0) {
            return Err(Error::Config("bandwidth and carrier must be positive".into()));
        }
        let all = [self.tx_power, self.noise_figure, self.implementation_loss, self.extra_loss_db];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("link budget values must be finite".into()));
        }
        Ok(())
    }

    /// Receiver noise floor, dBm.
    pub fn noise_floor(&self) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * self.bandwidth.log10() + self.noise_figure
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub index: u32,
    /// bits/s
    pub phy_rate: f64,
    /// dB
    pub snr_threshold: f64,
}

impl McsEntry {
    /// Highest DMG single-carrier rate.
    pub const MCS21: McsEntry = McsEntry {
        index: 21,
        phy_rate: 8.085e9,
        snr_threshold: 18.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub t: f64,
    pub snr: f64,
    pub usable: bool,
}

/// Free-space path loss in dB.
pub fn free_space_path_loss(distance: f64, carrier: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidInput(format!("distance must be positive, got {distance}")));
    }
    Ok(20.0 * (4.0 * PI * distance * carrier / SPEED_OF_LIGHT).log10())
}

/// One side of a link: where the array is and which beam it has loaded.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub pose: &'a Pose,
    pub beam: &'a ArrayResponse,
}

/// SNR in dB between two endpoints. Transmit power is taken at `tx`; the
/// result is the same with the roles swapped.
pub fn snr(config: &LinkBudgetConfig, tx: Endpoint<'_>, rx: Endpoint<'_>) -> Result<f64> {
    let distance = norm3(sub3(rx.pose.position, tx.pose.position));
    let fspl = free_space_path_loss(distance, config.carrier)?;
    let g_tx = tx.beam.gain_db_unit(local_unit_vector_to(tx.pose, rx.pose.position)?);
    let g_rx = rx.beam.gain_db_unit(local_unit_vector_to(rx.pose, tx.pose.position)?);
    Ok(config.tx_power + g_tx + g_rx - fspl - config.implementation_loss - config.extra_loss_db
        - config.noise_floor())
}

pub fn usable(snr: f64, mcs: &McsEntry) -> bool {
    snr >= mcs.snr_threshold
}

pub fn link_state(
    t: f64,
    config: &LinkBudgetConfig,
    mcs: &McsEntry,
    tx: Endpoint<'_>,
    rx: Endpoint<'_>,
) -> Result<LinkState> {
    let snr = snr(config, tx, rx)?;
    Ok(LinkState {
        t,
        snr,
        usable: usable(snr, mcs),
    })
}
