//! Invariants checked over random inputs.

use fkfp::config::{RunConfig, SCHEMA};
use fkfp::dyadic::lp_chi;
use fkfp::envelope::{envelope_eval, envelope_sheared, EnvelopeParams};
use fkfp::evolve::{transport_shear, PhaseField};
use fkfp::grid::{multiplier, Coords, SpectralGrid};
use fkfp::inversion::scaling_prefactor;
use fkfp::symbol::{m_quadrature, m_value, FracParam, FreqPoint};
use proptest::prelude::*;

fn frac() -> impl Strategy<Value = f64> {
    0.05f64..=1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn symbol_is_symmetric_and_even(s in frac(), a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let m = m_value(a, b, s);
        prop_assert!((m - m_value(b, a, s)).abs() <= 1e-12 * m.max(1e-300));
        prop_assert!((m - m_value(-a, -b, s)).abs() <= 1e-12 * m.max(1e-300));
    }

    #[test]
    fn symbol_is_homogeneous(s in frac(), a in -20.0f64..20.0, b in -20.0f64..20.0, l in 0.01f64..100.0) {
        let m = m_value(a, b, s);
        let scaled = m_value(l * a, l * b, s);
        prop_assert!((scaled - l.powf(2.0 * s) * m).abs() <= 1e-10 * scaled.max(1e-300));
    }

    #[test]
    fn symbol_on_the_diagonal(s in frac(), a in -20.0f64..20.0) {
        prop_assert!((m_value(a, a, s) - a.abs().powf(2.0 * s)).abs() <= 1e-12 * a.abs().powf(2.0 * s).max(1e-300));
    }

    #[test]
    fn symbol_matches_quadrature(s in frac(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let fp = FracParam::new(s).unwrap();
        let p = FreqPoint::new(a, b);
        let q = m_quadrature(p, fp, 64).unwrap();
        let m = m_value(a, b, s);
        prop_assert!((q - m).abs() <= 1e-6 * m.max(1e-3), "{q} {m}");
    }

    #[test]
    fn multiplier_is_a_contraction(s in frac(), xi in -30.0f64..30.0, eta in -30.0f64..30.0, t in 0.1f64..4.0) {
        for coords in [Coords::Physical, Coords::Sheared] {
            let m = multiplier(xi, eta, s, t, coords);
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn scaling_prefactor_is_a_power(s in frac(), t1 in 0.1f64..5.0, t2 in 0.1f64..5.0, b1 in 0u32..3, b2 in 0u32..3) {
        let a = scaling_prefactor(t1 * t2, s, b1, b2);
        let b = scaling_prefactor(t1, s, b1, b2) * scaling_prefactor(t2, s, b1, b2);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn dyadic_bumps_partition_unity(r in 1e-3f64..1e3) {
        let total: f64 = (-20..=20).map(|m| lp_chi(r, m)).sum();
        prop_assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn envelope_is_positive_and_peaks_at_the_origin(
        s in 0.05f64..0.95, b1 in 0u32..2, b2 in 0u32..2, x in -1e3f64..1e3, v in -1e3f64..1e3
    ) {
        let ep = EnvelopeParams::with_default_eps(FracParam::new(s).unwrap(), b1, b2).unwrap();
        let e = envelope_eval(x, v, &ep);
        prop_assert!(e > 0.0 && e <= 1.0);
        prop_assert!((e - envelope_sheared(x, v - x, &ep)).abs() <= 1e-15);
        prop_assert!(envelope_eval(x, v, &ep.negative_control()) <= e);
    }

    #[test]
    fn unknown_config_keys_are_rejected(key in "[a-z_]{1,12}") {
        prop_assume!(SCHEMA.iter().all(|k| k.name != key));
        let err = RunConfig::resolve(None, &[(key, "1".into())], None).unwrap_err();
        prop_assert!(err.is_config());
    }

    #[test]
    fn config_values_round_trip(s in 0.01f64..=1.0, n in 0usize..5000) {
        let over = [("s".to_string(), format!("{s}")), ("n".to_string(), n.to_string())];
        let c = RunConfig::resolve(None, &over, None).unwrap();
        prop_assert_eq!(c.real("s"), s);
        prop_assert_eq!(c.count("n"), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shears_compose_and_invert(a in -0.2f64..0.2, b in -0.2f64..0.2) {
        let f = PhaseField::gaussian(SpectralGrid::new(64, 8.0).unwrap());
        let ab = transport_shear(&transport_shear(&f, a).unwrap(), b).unwrap();
        let direct = transport_shear(&f, a + b).unwrap();
        prop_assert!(ab.rel_l2(&direct).unwrap() < 1e-12);
        let back = transport_shear(&transport_shear(&f, a).unwrap(), -a).unwrap();
        prop_assert!(back.rel_l2(&f).unwrap() < 1e-12);
    }
}
