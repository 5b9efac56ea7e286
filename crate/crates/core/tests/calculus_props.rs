mod common;

use cellx_core::calculus::{
    pci_conflicts, pci_decompose, prb_for_bandwidth, smallest_free_pci, validate_config, BandTable, CalcError,
    CellConfig, Severity, BANDWIDTHS, PCI_MAX,
};
use proptest::prelude::*;

#[test]
fn earfcn_round_trip_is_exhaustive_and_matches_fixture_arithmetic() {
    let table = BandTable::shipped();
    let rows = common::fixture_bands();
    assert_eq!(rows.len(), 4);
    let mut count = 0;
    for (band, f_low, n_offs, n_min, n_max) in rows {
        for earfcn in n_min..=n_max {
            let f = table.earfcn_to_freq(band, earfcn).unwrap();
            assert_eq!(f.0, f_low + (earfcn - n_offs));
            assert_eq!(table.freq_to_earfcn(band, f.mhz()).unwrap(), earfcn);
            count += 1;
        }
        assert!(table.earfcn_to_freq(band, n_min - 1).is_err());
        assert!(table.earfcn_to_freq(band, n_max + 1).is_err());
    }
    assert_eq!(count, 600 + 750 + 700 + 300);
}

#[test]
fn pci_recomposition_is_exhaustive() {
    for pci in 0..=PCI_MAX {
        let p = pci_decompose(pci).unwrap();
        assert!((0..=167).contains(&p.group_id) && (0..=2).contains(&p.sector_id));
        assert_eq!(3 * p.group_id + p.sector_id, pci);
    }
}

#[test]
fn prb_matches_fifth_of_bandwidth() {
    // floor(bw / 0.2) evaluated on tenths of MHz so 3.0 / 0.2 does not
    // land on 14.999...
    for (bw, prb) in BANDWIDTHS {
        let tenths = (bw * 10.0).round() as u32;
        if bw != 1.4 {
            assert_eq!(prb_for_bandwidth(bw).unwrap(), tenths / 2);
        }
        assert_eq!(prb_for_bandwidth(bw).unwrap(), prb);
    }
    assert_eq!(prb_for_bandwidth(1.4).unwrap(), 6);
}

fn arb_config() -> impl Strategy<Value = CellConfig> {
    (
        prop_oneof![Just(1i64), Just(3), Just(7), Just(20), -2i64..30],
        -10i64..7000,
        prop_oneof![Just(1.4f64), Just(3.0), Just(5.0), Just(10.0), Just(15.0), Just(20.0), -5.0f64..25.0],
        -5i64..520,
        -10.0f64..60.0,
        "[0-9a-z]{0,7}",
        -5i64..70000,
        -5i64..300_000_000,
        prop::collection::vec(-3i64..520, 0..6),
    )
        .prop_map(|(band, earfcn_dl, bandwidth_mhz, pci, tx_power_dbm, plmn, tac, cell_identity, neighbor_pcis)| {
            CellConfig {
                band,
                earfcn_dl,
                bandwidth_mhz,
                pci,
                tx_power_dbm,
                plmn,
                tac,
                cell_identity,
                neighbor_pcis,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pci_conflicts_match_oracle(pci in 0i64..=PCI_MAX, neighbors in prop::collection::vec(0i64..=PCI_MAX, 0..12)) {
        prop_assert_eq!(pci_conflicts(pci, &neighbors).unwrap(), common::pci_conflicts_oracle(pci, &neighbors));
    }

    #[test]
    fn pci_out_of_range_rejected(pci in prop_oneof![i64::MIN..0, (PCI_MAX + 1)..i64::MAX]) {
        prop_assert_eq!(pci_decompose(pci), Err(CalcError::PciOutOfRange(pci)));
    }

    #[test]
    fn smallest_free_pci_is_free_and_minimal(neighbors in prop::collection::vec(0i64..=PCI_MAX, 0..6)) {
        let p = smallest_free_pci(&neighbors).unwrap();
        prop_assert!(!neighbors.contains(&p));
        let clean = |q: i64| !neighbors.contains(&q) && neighbors.iter().all(|n| n % 3 != q % 3);
        if (0..=PCI_MAX).any(clean) {
            prop_assert!(clean(p));
            prop_assert!((0..p).all(|q| !clean(q)));
        }
    }

    #[test]
    fn validate_is_pure_and_valid_iff_no_errors(cfg in arb_config()) {
        let a = validate_config(&cfg);
        let b = validate_config(&cfg.clone());
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.valid, a.issues.iter().all(|i| i.severity != Severity::Error));
    }

    #[test]
    fn off_raster_frequencies_rejected(earfcn in 1200i64..1949, frac in 0.01f64..0.09) {
        let table = BandTable::shipped();
        let f = table.earfcn_to_freq(3, earfcn).unwrap().mhz() + frac;
        let is_off_raster = matches!(table.freq_to_earfcn(3, f), Err(CalcError::OffRaster { .. }));
        prop_assert!(is_off_raster);
    }
}
