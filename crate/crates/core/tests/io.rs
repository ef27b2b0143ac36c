use dslab::grid::{make_grid, sample_field, DomainMask, MaskKind};
use dslab::io::*;
use dslab::zero_mode::loss_yau_psi;

#[test]
fn round_trip_preserves_values_and_mask() {
    let g = make_grid(3.0, 12).unwrap();
    for kind in [MaskKind::UnitBall, MaskKind::ExteriorAnnulus { r_outer: 2.5 }, MaskKind::FullBox, MaskKind::PuncturedBall { eps_in: 0.2 }] {
        let mask = DomainMask::new(&g, kind);
        let f = sample_field(&g, &mask, loss_yau_psi).unwrap();
        let bytes = encode(&f);
        assert_eq!(bytes.len(), sidecar(&f).file_bytes);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.mask().kind(), kind);
        assert_eq!(back.mask().cells(), f.mask().cells());
        assert_eq!(back.values(), f.values());
    }
}

#[test]
fn custom_masks_survive_through_the_bitmap() {
    let g = make_grid(2.0, 10).unwrap();
    let mask = DomainMask::new(&g, MaskKind::FullBox).eroded(&g, 2);
    let f = sample_field(&g, &mask, loss_yau_psi).unwrap();
    let back = decode(&encode(&f)).unwrap();
    assert_eq!(back.mask().cells(), mask.cells());
}

#[test]
fn header_layout() {
    let g = make_grid(1.5, 8).unwrap();
    let f = sample_field(&g, &DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer: 1.4 }), loss_yau_psi).unwrap();
    let b = encode(&f);
    assert_eq!(&b[..4], b"DSLF");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
    assert_eq!(f64::from_le_bytes(b[8..16].try_into().unwrap()), 1.5);
    assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 8);
    assert_eq!(b[24], 1);
    assert_eq!(f64::from_le_bytes(b[32..40].try_into().unwrap()), 1.4);
    // first cell, component 0, real part
    let re = f64::from_le_bytes(b[40..48].try_into().unwrap());
    assert_eq!(re, f.value(0).0[0].re);
}

#[test]
fn corrupt_input_is_rejected() {
    let g = make_grid(1.0, 8).unwrap();
    let f = sample_field(&g, &DomainMask::new(&g, MaskKind::FullBox), loss_yau_psi).unwrap();
    let good = encode(&f);
    assert!(decode(&good[..good.len() - 1]).is_err());
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(decode(&bad).is_err());
    let mut bad = good.clone();
    bad[24] = 9;
    assert!(decode(&bad).is_err());
    let mut bad = good;
    let last = bad.len() - 1;
    bad[last] = 2;
    assert!(decode(&bad).is_err());
}

#[test]
fn files_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(2.0, 8).unwrap();
    let f = sample_field(&g, &DomainMask::new(&g, MaskKind::UnitBall), loss_yau_psi).unwrap();
    let (bin, side) = write_field(&dir.path().join("psi.dslf"), &f).unwrap();
    assert_eq!(side.extension().unwrap(), "json");
    let meta: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(&side).unwrap()).unwrap();
    assert_eq!(meta.n, 8);
    assert_eq!(meta.mask, MaskKind::UnitBall);
    let back = read_field(&bin).unwrap();
    assert_eq!(back.values(), f.values());
}
