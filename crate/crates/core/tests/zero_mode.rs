use dslab::dirac::DerivativeMethod;
use dslab::grid::{make_grid, radial_profile, sample_field, DomainMask, MaskKind};
use dslab::inversion::PotentialSpec;
use dslab::clifford::{Matrix4, SpinorValue};
use dslab::zero_mode::*;
use num_complex::Complex64;

fn ly_annulus(l: f64, n: usize, r_outer: f64) -> dslab::grid::SpinorField {
    let g = make_grid(l, n).unwrap();
    let mask = DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer });
    sample_field(&g, &mask, loss_yau_psi).unwrap()
}

#[test]
fn loss_yau_oracle_accepts() {
    let mode = loss_yau_mode().unwrap();
    assert!(mode.oracle.magnitude_error <= 1e-12);
    assert!(mode.oracle.residuals[1].1 < mode.oracle.residuals[0].1);
    assert!((mode.oracle.q_times_r - 1.5).abs() < 0.02, "{}", mode.oracle.q_times_r);
}

#[test]
fn loss_yau_residual_converges() {
    let r64 = residual_norm(&ly_annulus(6.0, 64, 6.0), &PotentialSpec::LossYau, DerivativeMethod::CenteredFd4).unwrap();
    let r96 = residual_norm(&ly_annulus(6.0, 96, 6.0), &PotentialSpec::LossYau, DerivativeMethod::CenteredFd4).unwrap();
    assert!(r64 <= 1e-2, "{r64}");
    assert!(r96 < r64);
    let wrong = residual_norm(&ly_annulus(6.0, 64, 6.0), &PotentialSpec::LossYau.scaled(0.5), DerivativeMethod::CenteredFd4)
        .unwrap();
    assert!(wrong > 0.1, "{wrong}");
}

#[test]
fn potential_is_hermitian_with_exact_norm() {
    for x in [[0.3, -1.2, 2.0], [5.0, 0.0, 0.0], [-1.0, 7.0, 3.5]] {
        let q = loss_yau_potential(&x);
        let r2 = x.iter().map(|c| c * c).sum::<f64>();
        assert!((q - q.adjoint()).max_abs() < 1e-15);
        let norm = dslab::clifford::operator_norm(&q).unwrap();
        assert!((norm - 3.0 / (1.0 + r2)).abs() < 1e-12);
    }
}

#[test]
fn ray_slope_is_minus_two() {
    for dir in [[1.0, 0.0, 0.0], [0.3, -0.5, 0.8], [0.0, 0.0, -1.0]] {
        let s = potential_ray_slope(&PotentialSpec::LossYau, dir, 10.0, 100.0, 32).unwrap();
        assert!((s + 2.0).abs() <= 0.05, "{s}");
    }
    let c = PotentialSpec::CoulombLike { c: 1.5, m: Matrix4::identity() };
    let s = potential_ray_slope(&c, [1.0, 1.0, 0.0], 1.0, 50.0, 16).unwrap();
    assert!((s + 1.0).abs() < 1e-10);
}

#[test]
fn theorem_ranges_are_half_open() {
    assert!(validate_theorem3_k(1.0).is_ok());
    let e = validate_theorem3_k(10.0 / 3.0).unwrap_err().to_string();
    assert!(e.contains("k ∈ [1,10/3)"), "{e}");
    assert!(validate_theorem4(1.1, 1.2).unwrap_err().to_string().contains("0 < t < 11/10"));
    assert!(validate_theorem4(1.0, 4.0 / 3.0).unwrap_err().to_string().contains("s ∈ [1,4/3)"));
    assert!(validate_theorem4(1.0, 1.3).is_ok());
}

#[test]
fn tail_checks_on_loss_yau_mode() {
    let psi = ly_annulus(8.0, 64, 8.0);
    let t3 = theorem3_check(&psi, 3.0).unwrap();
    assert_eq!(t3.radii.len(), 6);
    assert!((t3.radii[1] - 2.0).abs() < 1e-15 && t3.radii[5] == 8.0);
    assert!(t3.increments_decreasing, "{:?}", t3.increments);
    assert!(t3.tail_fraction < 0.05, "{}", t3.tail_fraction);
    let t4 = theorem4_check(&psi, 1.0, 1.3).unwrap();
    assert!(t4.increments_decreasing, "{:?}", t4.increments);
    assert!(t4.tail_fraction < 0.05, "{}", t4.tail_fraction);
}

#[test]
fn tail_checks_need_an_annulus() {
    let g = make_grid(2.0, 16).unwrap();
    let f = sample_field(&g, &DomainMask::new(&g, MaskKind::FullBox), loss_yau_psi).unwrap();
    assert!(theorem3_check(&f, 2.0).is_err());
}

#[test]
fn exponent_condition_examples() {
    assert!(exponent_condition(1.0, 0.5, 4.0).unwrap().holds);
    assert!(!exponent_condition(2.0, 0.5, 2.0).unwrap().holds);
    assert!(exponent_condition(0.5, 0.5, 2.0).is_err());
}

proptest::proptest! {
    #[test]
    fn exponent_condition_is_monotone(p in 1.0f64..3.0, t in 0.01f64..1.0, k in 1.0f64..10.0, dp in 0.0f64..1.0, dt in 0.0f64..1.0, dk in 0.0f64..5.0) {
        let base = exponent_condition(p, t, k).unwrap().holds;
        for bigger in [exponent_condition(p + dp, t, k), exponent_condition(p, t + dt, k), exponent_condition(p, t, (k - dk).max(1.0))] {
            proptest::prop_assert!(!(bigger.unwrap().holds && !base));
        }
    }
}

#[test]
fn decay_fit_on_exact_power_law() {
    let g = make_grid(8.0, 64).unwrap();
    let mask = DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer: 8.0 });
    let f = sample_field(&g, &mask, |x: &[f64; 3]| {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        SpinorValue::new([Complex64::new(r.powi(-3), 0.0), Complex64::default(), Complex64::default(), Complex64::default()])
    })
    .unwrap();
    let prof = radial_profile(&f, 24).unwrap();
    let fit = decay_fit(&prof, (2.0, 8.0), ShellStatistic::Mean).unwrap();
    assert!((fit.slope + 3.0).abs() <= 0.02, "{}", fit.slope);
    let c = sample_field(&g, &mask, |_: &[f64; 3]| SpinorValue::new([Complex64::new(2.0, 0.0); 4])).unwrap();
    let fit = decay_fit(&radial_profile(&c, 24).unwrap(), (2.0, 8.0), ShellStatistic::Max).unwrap();
    assert!(fit.slope.abs() <= 0.01);
}

#[test]
fn decay_fit_rejects_thin_ranges_and_zeros() {
    let psi = ly_annulus(8.0, 32, 8.0);
    let prof = radial_profile(&psi, 24).unwrap();
    assert!(decay_fit(&prof, (2.0, 2.3), ShellStatistic::Mean).is_err());
    let zero = psi.scaled(Complex64::default());
    assert!(decay_fit(&radial_profile(&zero, 24).unwrap(), (2.0, 8.0), ShellStatistic::Mean).is_err());
}

#[test]
fn q_cubed_of_coulomb_shell() {
    let c = 0.7;
    let q = PotentialSpec::CoulombLike { c, m: Matrix4::identity() };
    let g = make_grid(4.0, 96).unwrap();
    let mask = DomainMask::new(&g, MaskKind::ExteriorAnnulus { r_outer: 4.0 });
    let v = q_cubed_integral(&q, &g, &mask).unwrap();
    let exact = 4.0 * std::f64::consts::PI * c.powi(3) * 4f64.ln();
    assert!((v / exact - 1.0).abs() < 0.02, "{v} vs {exact}");
    let v2 = q_cubed_integral(&q.scaled(2.0), &g, &mask).unwrap();
    assert!((v2 / v - 8.0).abs() < 1e-12);
    assert_eq!(q_cubed_integral(&PotentialSpec::zero(), &g, &mask).unwrap(), 0.0);
}

#[test]
fn free_scan_sits_on_the_lattice_floor() {
    let g = make_grid(4.0, 16).unwrap();
    let res = coupling_scan(&PotentialSpec::zero(), &[0.0, 0.5, 1.0], &g, &ScanOptions::default()).unwrap();
    let exact = std::f64::consts::PI / 8.0 * 3f64.sqrt();
    assert!((res.summary.floor_exact - exact).abs() < 1e-14);
    for r in &res.records {
        assert!(r.converged);
        assert!((r.sigma_min / exact - 1.0).abs() < 1e-4, "{}", r.sigma_min);
    }
    assert!(res.summary.dips.is_empty());
    assert!(res.to_csv().starts_with("t,sigma_min,iterations,converged\n"));
}

#[test]
fn free_nullity_is_zero() {
    let g = make_grid(4.0, 16).unwrap();
    let opts = ScanOptions::default();
    let floor = std::f64::consts::PI / 8.0 * 3f64.sqrt();
    let rep = nullity_estimate(&PotentialSpec::zero(), 1.0, &g, 0.9 * floor, &opts).unwrap();
    assert_eq!(rep.count, 0);
    assert!(rep.singular_values.iter().all(|s| (s / floor - 1.0).abs() < 1e-3), "{:?}", rep.singular_values);
    let rep = nullity_estimate(&PotentialSpec::LossYau, 1.0, &g, 0.0, &opts).unwrap();
    assert_eq!(rep.count, 0);
}

#[test]
fn scan_rejects_bad_input() {
    let g = make_grid(4.0, 16).unwrap();
    assert!(coupling_scan(&PotentialSpec::zero(), &[], &g, &ScanOptions::default()).is_err());
    assert!(coupling_scan(&PotentialSpec::zero(), &[f64::NAN], &g, &ScanOptions::default()).is_err());
    assert!(nullity_estimate(&PotentialSpec::zero(), 1.0, &g, -1.0, &ScanOptions::default()).is_err());
}
