//! Deterministic twin of a single-cell SDR base station.
//!
//! All randomness flows from the seed given to [`Station::new`]: the UE
//! pathloss population is drawn once at creation and every tick draws churn
//! and attach attempts from the same generator.

mod diagnosis;
mod kpi;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{prb_for_bandwidth, validate_config_with, BandTable, CellConfig, ValidationReport};

pub use diagnosis::{classify_fault, PA_GAP_THRESHOLD_DB};
pub use kpi::{KpiRing, KpiSample, KpiSummary, KPI_RING_CAPACITY};

pub const UE_POPULATION: usize = 20;
pub const PATHLOSS_MIN_DB: f64 = 80.0;
pub const PATHLOSS_MAX_DB: f64 = 120.0;
pub const ATTACH_THRESHOLD_DBM: f64 = -110.0;
/// Reported as `avg_rsrp_dbm` when no UE is attached.
pub const NO_UE_RSRP_DBM: f64 = -140.0;
/// RSRP at which spectral efficiency reaches zero.
pub const EFFICIENCY_FLOOR_DBM: f64 = -120.0;
pub const EFFICIENCY_MAX_BPS_HZ: f64 = 5.0;
pub const PRB_BANDWIDTH_MHZ: f64 = 0.18;
pub const PA_OVERHEAT_PENALTY_DB: f64 = 20.0;
pub const SYNC_LOSS_DECAY_TICKS: u32 = 3;
/// Per-tick probability that an idle UE tries to attach.
pub const ATTACH_ATTEMPT_PROB: f64 = 0.5;
/// Per-tick probability that a connected UE detaches on its own.
pub const DETACH_PROB: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Lifecycle {
    Stopped,
    Configured,
    Running,
    Fault,
}

impl Lifecycle {
    /// Whether the cell is transmitting. A faulted cell stays on air in a
    /// degraded mode so that the fault leaves a KPI signature.
    pub fn on_air(self) -> bool {
        matches!(self, Lifecycle::Running | Lifecycle::Fault)
    }
}

impl fmt::Display for Lifecycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lifecycle::Stopped => "STOPPED",
            Lifecycle::Configured => "CONFIGURED",
            Lifecycle::Running => "RUNNING",
            Lifecycle::Fault => "FAULT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultKind {
    PaOverheat,
    SyncLoss,
    BackhaulDown,
}

impl FaultKind {
    pub const ALL: [FaultKind; 3] = [FaultKind::PaOverheat, FaultKind::SyncLoss, FaultKind::BackhaulDown];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::PaOverheat => "PA_OVERHEAT",
            FaultKind::SyncLoss => "SYNC_LOSS",
            FaultKind::BackhaulDown => "BACKHAUL_DOWN",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FaultKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fault kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationOp {
    ApplyConfig,
    Start,
    Stop,
    Reset,
    InjectFault,
}

impl fmt::Display for StationOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StationOp::ApplyConfig => "apply_config",
            StationOp::Start => "start",
            StationOp::Stop => "stop",
            StationOp::Reset => "reset",
            StationOp::InjectFault => "inject_fault",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StationError {
    #[error("invalid config: {} error(s)", .0.errors().count())]
    InvalidConfig(ValidationReport),
    #[error("cannot {op} while {lifecycle}")]
    WrongState { op: StationOp, lifecycle: Lifecycle },
    #[error("tick duration must be positive, got {0}")]
    NonPositiveDt(f64),
}

/// Public, read-only view of the station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSnapshot {
    pub lifecycle: Lifecycle,
    pub active_config: Option<CellConfig>,
    pub active_fault: Option<FaultKind>,
    pub sim_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct Station {
    lifecycle: Lifecycle,
    active_config: Option<CellConfig>,
    active_fault: Option<FaultKind>,
    sim_time_s: f64,
    seed: u64,
    rng: ChaCha8Rng,
    pathloss_db: [f64; UE_POPULATION],
    connected: [bool; UE_POPULATION],
    /// Connected count when SYNC_LOSS hit, and ticks elapsed since.
    sync_loss: Option<(u32, u32)>,
    history: KpiRing,
    bands: Arc<BandTable>,
}

impl Station {
    pub fn new(seed: u64) -> Self {
        Self::with_bands(seed, Arc::new(BandTable::shipped().clone()))
    }

    /// A station that validates configs against `bands` instead of the
    /// shipped table.
    pub fn with_bands(seed: u64, bands: Arc<BandTable>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pathloss_db = [0.0; UE_POPULATION];
        for pl in &mut pathloss_db {
            *pl = rng.random_range(PATHLOSS_MIN_DB..=PATHLOSS_MAX_DB);
        }
        Self {
            lifecycle: Lifecycle::Stopped,
            active_config: None,
            active_fault: None,
            sim_time_s: 0.0,
            seed,
            rng,
            pathloss_db,
            connected: [false; UE_POPULATION],
            sync_loss: None,
            history: KpiRing::default(),
            bands,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lifecycle(&self) -> Lifecycle {
        self.lifecycle
    }

    pub fn active_config(&self) -> Option<&CellConfig> {
        self.active_config.as_ref()
    }

    pub fn active_fault(&self) -> Option<FaultKind> {
        self.active_fault
    }

    pub fn sim_time_s(&self) -> f64 {
        self.sim_time_s
    }

    pub fn bands(&self) -> &Arc<BandTable> {
        &self.bands
    }

    pub fn history(&self) -> &KpiRing {
        &self.history
    }

    pub fn snapshot(&self) -> StationSnapshot {
        StationSnapshot {
            lifecycle: self.lifecycle,
            active_config: self.active_config.clone(),
            active_fault: self.active_fault,
            sim_time_s: self.sim_time_s,
        }
    }

    fn wrong_state(&self, op: StationOp) -> StationError {
        StationError::WrongState {
            op,
            lifecycle: self.lifecycle,
        }
    }

    pub fn apply_config(&mut self, config: CellConfig) -> Result<(), StationError> {
        if !matches!(self.lifecycle, Lifecycle::Stopped | Lifecycle::Configured) {
            return Err(self.wrong_state(StationOp::ApplyConfig));
        }
        let report = validate_config_with(&self.bands, &config);
        if !report.valid {
            return Err(StationError::InvalidConfig(report));
        }
        self.active_config = Some(config);
        self.lifecycle = Lifecycle::Configured;
        Ok(())
    }

    /// Legal from CONFIGURED, and from STOPPED when a stopped cell still
    /// holds its last applied config.
    pub fn start(&mut self) -> Result<(), StationError> {
        let ready = match self.lifecycle {
            Lifecycle::Configured => true,
            Lifecycle::Stopped => self.active_config.is_some(),
            _ => false,
        };
        if !ready {
            return Err(self.wrong_state(StationOp::Start));
        }
        self.lifecycle = Lifecycle::Running;
        self.connected = [false; UE_POPULATION];
        Ok(())
    }

    pub fn stop(&mut self) -> Result<(), StationError> {
        if !self.lifecycle.on_air() {
            return Err(self.wrong_state(StationOp::Stop));
        }
        self.lifecycle = Lifecycle::Stopped;
        self.clear_radio();
        Ok(())
    }

    pub fn reset(&mut self) {
        self.lifecycle = Lifecycle::Stopped;
        self.active_config = None;
        self.clear_radio();
    }

    pub fn inject_fault(&mut self, kind: FaultKind) -> Result<(), StationError> {
        if self.lifecycle != Lifecycle::Running {
            return Err(self.wrong_state(StationOp::InjectFault));
        }
        self.lifecycle = Lifecycle::Fault;
        self.active_fault = Some(kind);
        if kind == FaultKind::SyncLoss {
            self.sync_loss = Some((self.connected_count(), 0));
        }
        Ok(())
    }

    fn clear_radio(&mut self) {
        self.active_fault = None;
        self.sync_loss = None;
        self.connected = [false; UE_POPULATION];
    }

    fn connected_count(&self) -> u32 {
        self.connected.iter().filter(|&&c| c).count() as u32
    }

    /// Advances simulated time by `dt_s` and records one KPI sample.
    pub fn tick(&mut self, dt_s: f64) -> Result<KpiSample, StationError> {
        if !(dt_s > 0.0 && dt_s.is_finite()) {
            return Err(StationError::NonPositiveDt(dt_s));
        }
        self.sim_time_s += dt_s;
        let sample = match (self.lifecycle.on_air(), self.active_config.clone()) {
            (true, Some(config)) => self.tick_on_air(&config),
            _ => KpiSample {
                sim_time_s: self.sim_time_s,
                lifecycle: self.lifecycle,
                connected_ues: 0,
                attach_attempts: 0,
                attach_successes: 0,
                avg_rsrp_dbm: NO_UE_RSRP_DBM,
                dl_throughput_mbps: 0.0,
            },
        };
        self.history.push(sample.clone());
        Ok(sample)
    }

    fn tick_on_air(&mut self, config: &CellConfig) -> KpiSample {
        let fault = self.active_fault;
        let tx_power = match fault {
            Some(FaultKind::PaOverheat) => config.tx_power_dbm - PA_OVERHEAT_PENALTY_DB,
            _ => config.tx_power_dbm,
        };
        let rsrp: [f64; UE_POPULATION] = std::array::from_fn(|i| tx_power - self.pathloss_db[i]);
        let eligible = |i: usize| rsrp[i] >= ATTACH_THRESHOLD_DBM;

        for i in 0..UE_POPULATION {
            if self.connected[i] && !eligible(i) {
                self.connected[i] = false;
            }
        }

        let mut attempts = 0;
        let mut successes = 0;
        if let Some((at_fault, elapsed)) = self.sync_loss.as_mut() {
            *elapsed += 1;
            let remaining = SYNC_LOSS_DECAY_TICKS.saturating_sub(*elapsed);
            let allowed = (*at_fault * remaining / SYNC_LOSS_DECAY_TICKS) as usize;
            let mut kept = 0;
            for c in self.connected.iter_mut().filter(|c| **c) {
                if kept < allowed {
                    kept += 1;
                } else {
                    *c = false;
                }
            }
            for i in 0..UE_POPULATION {
                if !self.connected[i] && self.rng.random_bool(ATTACH_ATTEMPT_PROB) {
                    attempts += 1;
                }
            }
        } else {
            for c in self.connected.iter_mut().filter(|c| **c) {
                if self.rng.random_bool(DETACH_PROB) {
                    *c = false;
                }
            }
            for i in 0..UE_POPULATION {
                if !self.connected[i] && self.rng.random_bool(ATTACH_ATTEMPT_PROB) {
                    attempts += 1;
                    if eligible(i) {
                        successes += 1;
                        self.connected[i] = true;
                    }
                }
            }
        }

        let attached: Vec<usize> = (0..UE_POPULATION).filter(|&i| self.connected[i]).collect();
        let count = attached.len();
        let (avg_rsrp, throughput) = if count == 0 {
            (NO_UE_RSRP_DBM, 0.0)
        } else {
            let avg = attached.iter().map(|&i| rsrp[i]).sum::<f64>() / count as f64;
            let prb = prb_for_bandwidth(config.bandwidth_mhz).expect("active config is validated");
            let share = PRB_BANDWIDTH_MHZ * f64::from(prb) / count as f64;
            let tput = if fault == Some(FaultKind::BackhaulDown) {
                0.0
            } else {
                attached.iter().map(|&i| share * spectral_efficiency(rsrp[i])).sum()
            };
            (avg, tput)
        };

        KpiSample {
            sim_time_s: self.sim_time_s,
            lifecycle: self.lifecycle,
            connected_ues: count as u32,
            attach_attempts: attempts,
            attach_successes: successes,
            avg_rsrp_dbm: avg_rsrp,
            dl_throughput_mbps: throughput,
        }
    }
}

/// Linear ramp from 0 bit/s/Hz at -120 dBm to 5 bit/s/Hz at -70 dBm.
pub fn spectral_efficiency(rsrp_dbm: f64) -> f64 {
    ((rsrp_dbm - EFFICIENCY_FLOOR_DBM) / 10.0).clamp(0.0, EFFICIENCY_MAX_BPS_HZ)
}
