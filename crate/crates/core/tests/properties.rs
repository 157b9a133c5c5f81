use nalgebra::DVector;
use proptest::prelude::*;

use frozen_planet::elliptic;
use frozen_planet::frozen::{self, FrozenFunctional};
use frozen_planet::helium::{bridge_check, BridgeConstants, HeliumFunctional, PairLoop};
use frozen_planet::io::{self, Cell};
use frozen_planet::levi_civita::{self, Parity};
use frozen_planet::loops::{Loop, SymmetryClass};
use frozen_planet::solve::objective::directional_check;

/// Odd-sine loops dominated by the first mode, so they vanish only at integers.
fn dominant_odd(max_modes: usize) -> impl Strategy<Value = Loop> {
    (0.6..1.4f64, prop::collection::vec(-0.05..0.05f64, 0..max_modes)).prop_map(|(a, tail)| {
        let mut c = vec![a];
        c.extend(tail.iter().enumerate().map(|(k, v)| v / (k + 1) as f64));
        Loop::new(SymmetryClass::OddSine, c).unwrap()
    })
}

fn pair(max_modes: usize) -> impl Strategy<Value = PairLoop> {
    (dominant_odd(max_modes), 2.2..3.0f64, prop::collection::vec(-0.01..0.01f64, 0..max_modes))
        .prop_map(|(z2, scale, tail)| {
            let mut c = vec![scale * z2.sup_norm()];
            c.extend(tail);
            let z1 = Loop::new(SymmetryClass::EvenCosine, c).unwrap();
            PairLoop::new(z1, z2).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn levi_civita_roundtrip(z in dominant_odd(5)) {
        let orbit = levi_civita::forward_with(&z, 4096).unwrap();
        let back = levi_civita::inverse(&orbit, Parity::Odd, z.coeffs().len()).unwrap();
        prop_assert_eq!(back.class(), SymmetryClass::OddSine);
        for (a, b) in back.coeffs().iter().zip(z.coeffs()) {
            prop_assert!((a - b).abs() < 1e-7, "{} vs {}", a, b);
        }
    }

    #[test]
    fn mean_value_identities(z in dominant_odd(6)) {
        let orbit = levi_civita::forward(&z).unwrap();
        let ids = levi_civita::mean_identities(&z, &orbit);
        prop_assert!(ids.max() < 1e-8, "{:?}", ids);
    }

    #[test]
    fn orbit_is_nonnegative_with_one_collision(z in dominant_odd(6)) {
        let orbit = levi_civita::forward_with(&z, 2048).unwrap();
        prop_assert!(orbit.samples().iter().all(|&q| q >= 0.0));
        prop_assert_eq!(orbit.zeros().len(), 1);
    }

    #[test]
    fn bridge_identity(z in dominant_odd(8)) {
        let v = frozen::value(&z, BridgeConstants::default().rho).unwrap();
        prop_assert!(bridge_check(&z).unwrap() < 1e-11 * v.abs().max(1.0));
    }

    #[test]
    fn frozen_gradient_matches_differences(
        z in dominant_odd(6),
        r in 0.0..5.0f64,
        dir in prop::collection::vec(-1.0..1.0f64, 7),
    ) {
        let f = FrozenFunctional::for_loop(&z, r);
        let x = DVector::from_column_slice(z.coeffs());
        let d = DVector::from_fn(x.len(), |k, _| dir[k]);
        prop_assert!(directional_check(&f, &x, &d, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn mean_interaction_gradient_matches_differences(
        p in pair(4),
        dir in prop::collection::vec(-1.0..1.0f64, 10),
    ) {
        let f = HeliumFunctional::for_pair(&p, 0.0);
        let x = p.coeffs();
        let d = DVector::from_fn(x.len(), |k, _| dir[k]);
        prop_assert!(directional_check(&f, &x, &d, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn elliptic_recursion(m in -10.0..0.9f64) {
        prop_assume!(m.abs() > 1e-6);
        let report = elliptic::identities_report(m).unwrap();
        prop_assert!(report.rec_res.unwrap() < 1e-9);
        prop_assert!(report.i2_res < 1e-9);
    }

    #[test]
    fn csv_floats_roundtrip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let mut buf = Vec::new();
        io::write_csv(&mut buf, &[], &["x"], values.iter().map(|&v| vec![Cell::Float(v)])).unwrap();
        let (_, rows) = io::read_csv(buf.as_slice()).unwrap();
        for (row, v) in rows.iter().zip(&values) {
            prop_assert_eq!(row[0].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn loop_json_roundtrip(z in dominant_odd(10)) {
        let text = serde_json::to_string(&z).unwrap();
        let back: Loop = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, z);
    }
}
