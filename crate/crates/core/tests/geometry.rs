use std::f64::consts::PI;

use cyma_core::geometry::{
    build_metric, ddc, fd_ddc, integrate, HermitianField, MetricSpec, ScalarField, TorusGrid,
};
use cyma_core::io::{
    decode, encode, read_field, read_hermitian, read_scalar, write_field, Field, FormatError,
};
use cyma_core::ma::mass;
use cyma_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trig(grid: &TorusGrid, modes: &[(i64, i64, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|&(k, l, a, ph)| a * (2.0 * PI * (k as f64 * x[0] + l as f64 * x[1]) + ph).cos())
            .sum()
    })
    .unwrap()
}

#[test]
fn ddc_cos_matches_analytic_and_finite_differences() {
    let g = TorusGrid::new(1, 256).unwrap();
    let phi = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).cos()).unwrap();
    let spectral = ddc(&phi).unwrap().at(0).a11;
    let fd = fd_ddc(&phi).at(0).a11;
    assert!((spectral + 2.0 * PI * PI).abs() < 1e-10, "{spectral}");
    assert!((fd + 19.7392).abs() < 1e-3, "{fd}");
}

#[test]
fn spectral_ddc_converges_to_finite_differences() {
    let errs: Vec<f64> = [32, 64]
        .iter()
        .map(|&res| {
            let g = TorusGrid::new(1, res).unwrap();
            let phi = trig(&g, &[(1, 0, 0.3, 0.1), (0, 2, 0.1, 0.7), (1, 1, 0.05, 0.0)]);
            let a = ddc(&phi).unwrap();
            let b = fd_ddc(&phi);
            a.sup_distance(&b).unwrap()
        })
        .collect();
    let order = (errs[0] / errs[1]).log2();
    assert!((order - 2.0).abs() < 0.1, "order {order}, errors {errs:?}");
}

#[test]
fn flat_volume_and_nonkahler_positivity() {
    let g = TorusGrid::with_periods(2, 8, &[1.0, 2.0, 0.5, 1.0]).unwrap();
    let one = ScalarField::constant(&g, 1.0);
    let w = HermitianField::identity(&g);
    assert!((integrate(&one, &w).unwrap() - 1.0).abs() < 1e-14);
    let h = build_metric(
        &TorusGrid::new(2, 8).unwrap(),
        &MetricSpec::HermitianNonkahler { epsilon: 0.1 },
    )
    .unwrap();
    assert!((h.min_eig() - 0.9).abs() < 1e-12);
}

#[test]
fn cyf1_roundtrip_is_bit_exact() {
    let g = TorusGrid::new(1, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values = (0..g.len())
        .map(|_| f64::from_bits(rng.random::<u64>() >> 2) * rng.random_range(-1.0..1.0))
        .collect();
    let s = ScalarField::new(&g, values).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.cyf");
    write_field(&path, &Field::Scalar(s.clone()), None).unwrap();
    let back = read_scalar(&path).unwrap();
    assert!(s
        .values()
        .iter()
        .zip(back.values())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(std::fs::read(&path).unwrap(), encode(&Field::Scalar(back)));
}

#[test]
fn cyf1_errors_have_distinct_codes() {
    let g = TorusGrid::new(2, 8).unwrap();
    let h = build_metric(&g, &MetricSpec::HermitianNonkahler { epsilon: 0.3 }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.cyf");
    write_field(&path, &Field::Hermitian(h.clone()), None).unwrap();
    assert_eq!(
        read_hermitian(&path).unwrap().sup_distance(&h).unwrap(),
        0.0
    );
    match read_scalar(&path) {
        Err(Error::Format(e @ FormatError::KindMismatch { .. })) => assert_eq!(e.code(), 14),
        other => panic!("expected kind mismatch, got {other:?}"),
    }
    let mut bytes = encode(&Field::Hermitian(h));
    bytes[..4].copy_from_slice(b"CYF2");
    match decode(&bytes, None) {
        Err(Error::Format(e @ FormatError::BadMagic(_))) => assert_eq!(e.code(), 10),
        other => panic!("expected bad magic, got {other:?}"),
    }
    bytes[..4].copy_from_slice(b"CYF1");
    bytes.truncate(bytes.len() - 1);
    assert!(matches!(
        decode(&bytes, None),
        Err(Error::Format(FormatError::Truncated { .. }))
    ));
}

#[test]
fn sidecar_restores_periods() {
    let g = TorusGrid::with_periods(1, 16, &[2.0, 0.5]).unwrap();
    let s = ScalarField::from_fn(&g, |x| x[0] + x[1]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.cyf");
    write_field(&path, &Field::Scalar(s), None).unwrap();
    assert_eq!(read_field(&path).unwrap().grid().periods(), &[2.0, 0.5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ddc_is_linear(a in -1.0f64..1.0, b in -1.0f64..1.0, k in 0i64..4, l in 0i64..4, ph in 0.0f64..6.3) {
        let g = TorusGrid::new(1, 16).unwrap();
        let u = trig(&g, &[(k, l, 1.0, ph)]);
        let v = trig(&g, &[(l, k, 1.0, 0.0), (1, 1, 0.5, ph)]);
        let lhs = ddc(&(&(&u * a) + &(&v * b))).unwrap();
        let rhs = ddc(&u).unwrap().scale(a).add(&ddc(&v).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.sup_distance(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn flat_mass_is_invariant(a in -0.004f64..0.004, b in -0.004f64..0.004, ph in 0.0f64..6.3) {
        let g = TorusGrid::new(2, 8).unwrap();
        let w = HermitianField::identity(&g);
        let phi = ScalarField::from_fn(&g, |x| {
            a * (2.0 * PI * (x[0] + x[3]) + ph).cos() + b * (2.0 * PI * (x[1] - 2.0 * x[2])).sin()
        }).unwrap();
        prop_assert!((mass(&w, &phi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ddc_commutes_with_translation(shift in 0usize..16, k in 1i64..4) {
        let g = TorusGrid::new(1, 16).unwrap();
        let u = trig(&g, &[(k, 1, 0.7, 0.3), (2, 0, 0.2, 1.0)]);
        let shifted: Vec<f64> = (0..g.len()).map(|i| u.values()[(i + shift * 16) % g.len()]).collect();
        let us = ScalarField::new(&g, shifted).unwrap();
        let a = ddc(&us).unwrap();
        let b = ddc(&u).unwrap();
        for i in 0..g.len() {
            prop_assert!((a.at(i).a11 - b.at((i + shift * 16) % g.len()).a11).abs() < 1e-10);
        }
    }
}
