//! Downlink band table and the EARFCN <-> carrier frequency mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CalcError;

const SHIPPED_BANDS: &str = include_str!("../../assets/bands.toml");

/// Raster tolerance when converting a frequency in MHz back onto the
/// 100 kHz grid.
pub const RASTER_TOLERANCE_MHZ: f64 = 1e-6;

/// A carrier frequency held in integer tenths of a MHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FreqTenths(pub i64);

impl FreqTenths {
    pub fn mhz(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl fmt::Display for FreqTenths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} MHz", self.0 / 10, (self.0 % 10).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandEntry {
    pub band: i64,
    pub f_dl_low_tenths_mhz: i64,
    pub n_offs_dl: i64,
    pub n_dl_min: i64,
    pub n_dl_max: i64,
}

impl BandEntry {
    pub fn f_dl_low(&self) -> FreqTenths {
        FreqTenths(self.f_dl_low_tenths_mhz)
    }

    pub fn contains(&self, earfcn: i64) -> bool {
        (self.n_dl_min..=self.n_dl_max).contains(&earfcn)
    }

    /// Nearest in-range EARFCN.
    pub fn clamp(&self, earfcn: i64) -> i64 {
        earfcn.clamp(self.n_dl_min, self.n_dl_max)
    }

    fn check(&self) -> Result<(), BandTableError> {
        let reason = if self.f_dl_low_tenths_mhz <= 0 {
            "f_dl_low must be positive"
        } else if self.n_dl_max <= self.n_dl_min {
            "n_dl_max must exceed n_dl_min"
        } else if self.n_dl_min != self.n_offs_dl {
            "n_dl_min must equal n_offs_dl"
        } else {
            return Ok(());
        };
        Err(BandTableError::InvalidEntry {
            band: self.band,
            reason,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BandTableError {
    #[error("failed to read band table {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed band table: {0}")]
    Parse(String),
    #[error("band {band}: {reason}")]
    InvalidEntry { band: i64, reason: &'static str },
    #[error("band {0} listed twice")]
    Duplicate(i64),
    #[error("band table is empty")]
    Empty,
}

#[derive(Deserialize)]
struct BandFile {
    #[serde(default)]
    band: Vec<BandEntry>,
}

/// The set of bands the calculus knows about, keyed by band number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandTable {
    entries: BTreeMap<i64, BandEntry>,
}

impl Default for BandTable {
    fn default() -> Self {
        Self::shipped().clone()
    }
}

impl BandTable {
    /// The table compiled into the crate from `assets/bands.toml`.
    pub fn shipped() -> &'static BandTable {
        static TABLE: std::sync::OnceLock<BandTable> = std::sync::OnceLock::new();
        TABLE.get_or_init(|| BandTable::from_toml(SHIPPED_BANDS).expect("shipped band table is valid"))
    }

    pub fn from_toml(text: &str) -> Result<Self, BandTableError> {
        let file: BandFile = toml::from_str(text).map_err(|e| BandTableError::Parse(e.to_string()))?;
        Self::from_entries(file.band)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BandTableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BandTableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_entries(entries: impl IntoIterator<Item = BandEntry>) -> Result<Self, BandTableError> {
        let mut map = BTreeMap::new();
        for entry in entries {
            entry.check()?;
            if map.insert(entry.band, entry).is_some() {
                return Err(BandTableError::Duplicate(entry.band));
            }
        }
        if map.is_empty() {
            return Err(BandTableError::Empty);
        }
        Ok(Self { entries: map })
    }

    pub fn get(&self, band: i64) -> Result<&BandEntry, CalcError> {
        self.entries.get(&band).ok_or(CalcError::UnknownBand(band))
    }

    pub fn entries(&self) -> impl Iterator<Item = &BandEntry> {
        self.entries.values()
    }

    /// Downlink carrier for `earfcn`: `f_dl_low + 0.1 * (earfcn - n_offs_dl)`.
    pub fn earfcn_to_freq(&self, band: i64, earfcn: i64) -> Result<FreqTenths, CalcError> {
        let entry = self.get(band)?;
        if !entry.contains(earfcn) {
            return Err(CalcError::EarfcnOutOfRange { band, earfcn });
        }
        Ok(FreqTenths(entry.f_dl_low_tenths_mhz + (earfcn - entry.n_offs_dl)))
    }

    pub fn freq_to_earfcn(&self, band: i64, freq_mhz: f64) -> Result<i64, CalcError> {
        let entry = self.get(band)?;
        if !freq_mhz.is_finite() {
            return Err(CalcError::OffRaster { band, freq_mhz });
        }
        let offset_tenths = freq_mhz * 10.0 - entry.f_dl_low_tenths_mhz as f64;
        let steps = offset_tenths.round();
        if (offset_tenths - steps).abs() > RASTER_TOLERANCE_MHZ * 10.0 {
            return Err(CalcError::OffRaster { band, freq_mhz });
        }
        let earfcn = entry.n_offs_dl + steps as i64;
        if !entry.contains(earfcn) {
            return Err(CalcError::FreqOutOfRange { band, freq_mhz });
        }
        Ok(earfcn)
    }
}
