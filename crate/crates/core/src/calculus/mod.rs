//! Cellular configuration math: band table, EARFCN raster, PCI planning,
//! PRB counts and the validation gate every configuration passes before it
//! reaches the station.

mod band;
mod pci;
mod validate;

pub use band::{BandEntry, BandTable, BandTableError, FreqTenths, RASTER_TOLERANCE_MHZ};
pub use pci::{pci_conflicts, pci_decompose, smallest_free_pci, ConflictKind, PciConflict, PciParts, PCI_MAX};
pub use validate::{
    validate_config, validate_config_with, CellConfig, Issue, Severity, ValidationReport, HIGH_POWER_DBM,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalcError {
    #[error("unknown band {0}")]
    UnknownBand(i64),
    #[error("earfcn {earfcn} outside band {band}")]
    EarfcnOutOfRange { band: i64, earfcn: i64 },
    #[error("{freq_mhz} MHz is not on the 100 kHz raster of band {band}")]
    OffRaster { band: i64, freq_mhz: f64 },
    #[error("{freq_mhz} MHz is outside band {band}")]
    FreqOutOfRange { band: i64, freq_mhz: f64 },
    #[error("pci {0} outside 0..=503")]
    PciOutOfRange(i64),
    #[error("illegal bandwidth {0} MHz")]
    IllegalBandwidth(f64),
}

/// Legal channel bandwidths in MHz with their PRB counts.
pub const BANDWIDTHS: [(f64, u32); 6] = [(1.4, 6), (3.0, 15), (5.0, 25), (10.0, 50), (15.0, 75), (20.0, 100)];

pub fn prb_for_bandwidth(bandwidth_mhz: f64) -> Result<u32, CalcError> {
    BANDWIDTHS
        .iter()
        .find(|(bw, _)| *bw == bandwidth_mhz)
        .map(|&(_, prb)| prb)
        .ok_or(CalcError::IllegalBandwidth(bandwidth_mhz))
}
