use serde::{Deserialize, Serialize};

use super::CalcError;

pub const PCI_MAX: i64 = 503;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PciParts {
    pub group_id: i64,
    pub sector_id: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    Collision,
    Mod3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PciConflict {
    pub neighbor: i64,
    pub kind: ConflictKind,
}

fn check_pci(pci: i64) -> Result<i64, CalcError> {
    if (0..=PCI_MAX).contains(&pci) {
        Ok(pci)
    } else {
        Err(CalcError::PciOutOfRange(pci))
    }
}

/// Splits a PCI into its group (0..=167) and sector (0..=2).
pub fn pci_decompose(pci: i64) -> Result<PciParts, CalcError> {
    let pci = check_pci(pci)?;
    Ok(PciParts {
        group_id: pci / 3,
        sector_id: pci % 3,
    })
}

/// Neighbors that collide with or are mod-3 confusable with `pci`, in input order.
pub fn pci_conflicts(pci: i64, neighbors: &[i64]) -> Result<Vec<PciConflict>, CalcError> {
    let pci = check_pci(pci)?;
    let mut out = Vec::new();
    for &neighbor in neighbors {
        let neighbor = check_pci(neighbor)?;
        let kind = if neighbor == pci {
            ConflictKind::Collision
        } else if neighbor % 3 == pci % 3 {
            ConflictKind::Mod3
        } else {
            continue;
        };
        out.push(PciConflict { neighbor, kind });
    }
    Ok(out)
}

/// Smallest PCI that neither collides with nor is mod-3 confusable with any
/// neighbor. Falls back to the smallest non-colliding PCI when every mod-3
/// class is taken.
pub fn smallest_free_pci(neighbors: &[i64]) -> Option<i64> {
    let taken = |p: i64| neighbors.contains(&p);
    (0..=PCI_MAX)
        .find(|&p| !taken(p) && !neighbors.iter().any(|n| n % 3 == p % 3))
        .or_else(|| (0..=PCI_MAX).find(|&p| !taken(p)))
}
