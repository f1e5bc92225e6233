//! Invariants over randomized inputs.

use casimir_core::cli::fmt_num;
use casimir_core::factorization::EtaEvaluator;
use casimir_core::model::{check_stability, Geometry, ModelConfig, RegulatorKind};
use casimir_core::modes::CouplingDensity;
use casimir_core::oracle::{operator_residual, bogoliubov_operator, QuadraticHamiltonian};
use casimir_core::resolvent::{ResolventEvaluator, Sheet};
use num_complex::Complex64;
use proptest::prelude::*;

fn orientation() -> impl Strategy<Value = [f64; 3]> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c + 1e-12;
        [a / s, b / s, 1.0 - a / s - b / s]
    })
}

fn regulator() -> impl Strategy<Value = RegulatorKind> {
    prop_oneof![
        Just(RegulatorKind::Exponential),
        Just(RegulatorKind::Gaussian),
        Just(RegulatorKind::Sharp)
    ]
}

fn cfg(u: f64, p: [f64; 3], d: Option<f64>, kind: RegulatorKind, kc: f64) -> ModelConfig {
    let geom = d.map_or(Geometry::FreeSpace, |d| Geometry::Wall { distance: d });
    ModelConfig::simple(u, p, geom, kind, kc).unwrap()
}

/// Points off the real axis in both half planes.
fn off_axis() -> impl Strategy<Value = Complex64> {
    (0.05f64..5.0, 0.1f64..3.0, any::<bool>(), any::<bool>()).prop_map(|(r, t, up, right)| {
        let z = Complex64::from_polar(r, t.min(3.04));
        let z = if up { z } else { z.conj() };
        if right { z } else { -z.conj() }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_is_linear_in_u_and_nonnegative(
        u in 1e-6f64..1e-3,
        p in orientation(),
        d in proptest::option::of(1e-3f64..50.0),
        kind in regulator(),
        kc in 1.0f64..20.0,
        k in 0.0f64..60.0,
    ) {
        let a = CouplingDensity::new(&cfg(u, p, d, kind, kc)).eval(k);
        let b = CouplingDensity::new(&cfg(2.0 * u, p, d, kind, kc)).eval(k);
        prop_assert!(a >= 0.0);
        prop_assert!((b - 2.0 * a).abs() <= 1e-14 * b.abs());
    }

    #[test]
    fn stability_margin_decreases_with_coupling_and_cutoff(
        u in 1e-6f64..1e-4,
        kc in 1.0f64..15.0,
        kind in regulator(),
    ) {
        let base = check_stability(&cfg(u, [1.0 / 3.0; 3], None, kind, kc)).unwrap().lhs;
        let more_u = check_stability(&cfg(1.5 * u, [1.0 / 3.0; 3], None, kind, kc)).unwrap().lhs;
        let more_kc = check_stability(&cfg(u, [1.0 / 3.0; 3], None, kind, 1.2 * kc)).unwrap().lhs;
        prop_assert!(more_u < base);
        prop_assert!(more_kc < base);
    }

    #[test]
    fn resolvent_schwarz_and_evenness(z in off_axis(), u in 1e-6f64..1e-3, d in proptest::option::of(0.1f64..5.0)) {
        let ev = ResolventEvaluator::new(&cfg(u, [1.0 / 3.0; 3], d, RegulatorKind::Exponential, 5.0));
        let g = ev.resolvent(z, Sheet::I).unwrap();
        let gc = ev.resolvent(z.conj(), Sheet::I).unwrap();
        let gm = ev.resolvent(-z, Sheet::I).unwrap();
        prop_assert!((g - gc.conj()).norm() <= 1e-10 * g.norm());
        prop_assert!((g - gm).norm() <= 1e-10 * g.norm());
    }

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_num(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn secular_energy_matches_dense_diagonalization(
        modes in proptest::collection::vec((0.2f64..4.0, -0.05f64..0.05), 1..12),
    ) {
        let (k, g): (Vec<f64>, Vec<f64>) = modes.into_iter().unzip();
        let h = QuadraticHamiltonian::new(k, g).unwrap();
        prop_assume!(h.stability_margin() > 0.05);
        let dense = h.ground_energy_arrowhead().unwrap();
        let secular = h.collapse().ground_energy().unwrap();
        let sympl = h.ground_energy_symplectic().unwrap();
        let spectrum = h.symplectic_spectrum().unwrap();
        prop_assert!(spectrum.pairing_error < 1e-10);
        prop_assert!((dense - secular).abs() <= 1e-12 + 1e-9 * dense.abs(), "{} {}", dense, secular);
        prop_assert!((sympl - secular).abs() <= 1e-11 + 1e-8 * dense.abs(), "{} {}", sympl, secular);
        prop_assert!(secular <= 1e-15);
    }

    #[test]
    fn bogoliubov_residual_is_scale_invariant(
        modes in proptest::collection::vec((0.2f64..4.0, -0.05f64..0.05), 2..10),
        s in (0.1f64..10.0, 0.0f64..6.3),
    ) {
        let (k, g): (Vec<f64>, Vec<f64>) = modes.into_iter().unzip();
        let h = QuadraticHamiltonian::new(k.clone(), g).unwrap();
        let b = bogoliubov_operator(&h, 0, Complex64::new(0.3, -0.2));
        let scale = Complex64::from_polar(s.0, s.1);
        let r1 = operator_residual(&h, &b, k[0]);
        let r2 = operator_residual(&h, &b.scaled(scale), k[0]);
        prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn factorization_holds_off_the_cuts(z in off_axis(), u in 1e-6f64..1e-4) {
        let ev = EtaEvaluator::new(&cfg(u, [1.0 / 3.0; 3], None, RegulatorKind::Exponential, 10.0)).unwrap();
        let g = ev.resolvent().resolvent(z, Sheet::I).unwrap();
        let prod = ev.eta(z).unwrap() * ev.eta(-z).unwrap();
        prop_assert!((prod - g).norm() < 1e-6 * g.norm());
    }
}
