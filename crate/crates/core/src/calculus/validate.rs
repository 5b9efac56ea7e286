use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{pci_conflicts, prb_for_bandwidth, smallest_free_pci, BandTable, ConflictKind, PCI_MAX};

pub const TX_POWER_MAX_DBM: f64 = 46.0;
pub const HIGH_POWER_DBM: f64 = 40.0;
pub const TAC_MAX: i64 = 65_535;
pub const CELL_IDENTITY_MAX: i64 = (1 << 28) - 1;

/// Declarative configuration of one cell.
///
/// Fields are deliberately loose (plain integers and reals) so that any
/// value can be represented and then judged by [`validate_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub band: i64,
    pub earfcn_dl: i64,
    pub bandwidth_mhz: f64,
    pub pci: i64,
    pub tx_power_dbm: f64,
    pub plmn: String,
    pub tac: i64,
    pub cell_identity: i64,
    #[serde(default)]
    pub neighbor_pcis: Vec<i64>,
}

impl CellConfig {
    /// Field names in canonical order.
    pub const FIELDS: [&'static str; 9] = [
        "band",
        "earfcn_dl",
        "bandwidth_mhz",
        "pci",
        "tx_power_dbm",
        "plmn",
        "tac",
        "cell_identity",
        "neighbor_pcis",
    ];

    /// `(name, value)` pairs in canonical order.
    pub fn field_values(&self) -> Vec<(&'static str, Value)> {
        let values = [
            Value::from(self.band),
            Value::from(self.earfcn_dl),
            Value::from(self.bandwidth_mhz),
            Value::from(self.pci),
            Value::from(self.tx_power_dbm),
            Value::from(self.plmn.clone()),
            Value::from(self.tac),
            Value::from(self.cell_identity),
            Value::from(self.neighbor_pcis.clone()),
        ];
        Self::FIELDS.into_iter().zip(values).collect()
    }

    /// Canonical JSON encoding; two configs are byte-identical iff their
    /// fingerprints are equal.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("cell config always serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub field: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_fix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<Issue>) -> Self {
        let valid = !issues.iter().any(|i| i.severity == Severity::Error);
        Self { valid, issues }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }
}

struct Collector(Vec<Issue>);

impl Collector {
    fn push(&mut self, severity: Severity, field: impl Into<String>, message: impl Into<String>, fix: Option<String>) {
        self.0.push(Issue {
            severity,
            field: field.into(),
            message: message.into(),
            suggested_fix: fix,
        });
    }

    fn error(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, field, message, None);
    }
}

/// Validates against the shipped band table.
pub fn validate_config(config: &CellConfig) -> ValidationReport {
    validate_config_with(BandTable::shipped(), config)
}

pub fn validate_config_with(bands: &BandTable, config: &CellConfig) -> ValidationReport {
    let mut out = Collector(Vec::new());

    match bands.get(config.band) {
        Err(_) => out.error("band", format!("unknown band {}", config.band)),
        Ok(entry) if !entry.contains(config.earfcn_dl) => out.push(
            Severity::Error,
            "earfcn_dl",
            format!(
                "earfcn {} outside band {} range {}..={}",
                config.earfcn_dl, entry.band, entry.n_dl_min, entry.n_dl_max
            ),
            Some(format!("earfcn_dl={}", entry.clamp(config.earfcn_dl))),
        ),
        Ok(_) => {}
    }

    if prb_for_bandwidth(config.bandwidth_mhz).is_err() {
        out.error(
            "bandwidth_mhz",
            format!("bandwidth {} MHz is not one of 1.4, 3, 5, 10, 15, 20", config.bandwidth_mhz),
        );
    }

    let pci_ok = (0..=PCI_MAX).contains(&config.pci);
    if !pci_ok {
        out.error("pci", format!("pci {} outside 0..=503", config.pci));
    }

    if !(0.0..=TX_POWER_MAX_DBM).contains(&config.tx_power_dbm) {
        out.error(
            "tx_power_dbm",
            format!("tx power {} dBm outside 0..=46", config.tx_power_dbm),
        );
    } else if config.tx_power_dbm > HIGH_POWER_DBM {
        out.push(
            Severity::Warning,
            "tx_power_dbm",
            format!("high power: {} dBm exceeds {} dBm", config.tx_power_dbm, HIGH_POWER_DBM),
            None,
        );
    }

    let plmn_ok = (5..=6).contains(&config.plmn.len()) && config.plmn.bytes().all(|b| b.is_ascii_digit());
    if !plmn_ok {
        out.error("plmn", format!("plmn {:?} must be 5 or 6 decimal digits", config.plmn));
    }

    if !(0..=TAC_MAX).contains(&config.tac) {
        out.error("tac", format!("tac {} outside 0..=65535", config.tac));
    }
    if !(0..=CELL_IDENTITY_MAX).contains(&config.cell_identity) {
        out.error(
            "cell_identity",
            format!("cell identity {} outside 0..=268435455", config.cell_identity),
        );
    }

    let mut neighbors = Vec::with_capacity(config.neighbor_pcis.len());
    for (i, &n) in config.neighbor_pcis.iter().enumerate() {
        if (0..=PCI_MAX).contains(&n) {
            neighbors.push(n);
        } else {
            out.error(format!("neighbor_pcis[{i}]"), format!("neighbor pci {n} outside 0..=503"));
        }
    }

    if pci_ok {
        let conflicts = pci_conflicts(config.pci, &neighbors).expect("inputs range-checked above");
        for c in conflicts {
            match c.kind {
                ConflictKind::Collision => out.push(
                    Severity::Error,
                    "pci",
                    format!("pci {} collides with neighbor {}", config.pci, c.neighbor),
                    smallest_free_pci(&neighbors).map(|p| format!("pci={p}")),
                ),
                ConflictKind::Mod3 => out.push(
                    Severity::Warning,
                    "pci",
                    format!("pci {} is mod-3 confusable with neighbor {}", config.pci, c.neighbor),
                    None,
                ),
            }
        }
    }

    ValidationReport::from_issues(out.0)
}
