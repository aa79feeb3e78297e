use std::f64::consts::PI;

use proptest::prelude::*;
use schl::harness::*;
use schl::propagate::{hartree_evolve, HartreeOptions, Interaction, PotentialSpec};
use schl::{Grid, NormLedger};

fn fit(hbar: f64, constant: f64, sup: f64, x_sigma: f64) -> HbarRun {
    HbarRun {
        hbar,
        rank: 1,
        mass: 1.0,
        mass_drift: 0.0,
        fit: DecayFit { t_min: 5.0, t_max: 40.0, exponent: -1.0, constant, residual: 0.0, points: 8 },
        weighted_sup: sup,
        x_sigma,
        ledger: vec![(0.0, NormLedger::new())],
        closed_form_error: None,
        flags: Vec::new(),
    }
}

proptest! {
    #[test]
    fn power_laws_are_refit_exactly(alpha in -4.0f64..1.0, c in 1e-3f64..1e3, bracket_axis in any::<bool>()) {
        let axis = if bracket_axis { TimeAxis::Bracket } else { TimeAxis::Plain };
        let series: Vec<(f64, f64)> = (0..=70)
            .map(|k| {
                let t = 5.0 + 0.5 * k as f64;
                let tau = if bracket_axis { bracket(t) } else { t };
                (t, c * tau.powf(alpha))
            })
            .collect();
        let f = decay_fit(&series, (5.0, 40.0), axis).unwrap();
        prop_assert!((f.exponent - alpha).abs() < 1e-10, "{} vs {}", f.exponent, alpha);
        prop_assert!((f.constant - c).abs() < 1e-9 * c);
        prop_assert!(f.residual >= 0.0 && f.residual < 1e-10);
        prop_assert_eq!(f.points, 71);
    }

    #[test]
    fn uniformity_ratios_are_at_least_one(vals in prop::collection::vec((1e-3f64..1e3, 1e-3f64..1e3, 1e-3f64..1e3), 1..6)) {
        let runs = vals.iter().enumerate().map(|(i, v)| fit(1.0 / (i + 1) as f64, v.0, v.1, v.2)).collect();
        let r = sweep_report(runs, 2.0);
        for u in [r.uniformity_constant, r.uniformity_sup, r.uniformity_x_sigma] {
            prop_assert!(u >= 1.0);
        }
        prop_assert!(!r.tainted);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn probe_width_error_shrinks_with_the_probe(hbar in 0.5f64..1.0) {
        let grid = Grid::new(1, 1024, 200.0).unwrap();
        let times = [1.0, 2.0, 4.0, 8.0];
        let exact = (2.0 * PI).powf(-0.5);
        let err = |w: f64| {
            let r = dispersive_constant(&grid, &times, hbar, None, w).unwrap();
            (r.constant - exact).abs() / exact
        };
        let w = 4.0 * grid.dx();
        let (wide, narrow) = (err(w), err(0.5 * w));
        let bound = |w: f64| w.powi(4) / (4.0 * (8.0 * hbar).powi(2));
        prop_assert!(wide <= bound(w) * 1.01, "{} vs bound {}", wide, bound(w));
        prop_assert!(narrow <= bound(0.5 * w) * 1.01);
        prop_assert!(narrow <= 0.5 * wide, "{} then {}", wide, narrow);
    }

    #[test]
    fn unweighted_wave_operators_are_unitary(kappa in -0.1f64..0.1, gaussian in any::<bool>(), hbar in 0.5f64..1.0) {
        let grid = Grid::new(1, 256, 60.0).unwrap();
        let spec = if gaussian { PotentialSpec::gaussian(kappa, 1.0) } else { PotentialSpec::coulomb(kappa) };
        let inter = Interaction::new(spec, &grid).unwrap();
        let gamma = rank_one_seed(&grid, hbar, 1.0).unwrap();
        let opts = HartreeOptions { dt: 0.1, horizon: 4.0, stride: 20, ..Default::default() };
        let traj = hartree_evolve(&gamma, &inter, &opts).unwrap();
        let power = PowerOptions::default();
        for t in traj.times() {
            for corrected in [true, false] {
                let n = wave_operator_norm(&traj, t, 0.0, WeightKind::Position, corrected, &power).unwrap();
                prop_assert!((n - 1.0).abs() <= 1e-6, "t = {}: {}", t, n);
            }
        }
    }

    #[test]
    fn ledger_mass_matches_the_initial_trace(kappa in -0.1f64..0.1, hbar in 0.5f64..1.0, width in 0.7f64..1.5) {
        let grid = Grid::new(1, 256, 60.0).unwrap();
        let inter = Interaction::new(PotentialSpec::coulomb(kappa), &grid).unwrap();
        let gamma = rank_one_seed(&grid, hbar, width).unwrap();
        let mass = (gamma.trace() * gamma.phase_volume()).re;
        let opts = HartreeOptions { dt: 0.05, horizon: 3.0, stride: 10, ..Default::default() };
        let traj = hartree_evolve(&gamma, &inter, &opts).unwrap();
        let series = norm_ledger_series(&traj, LedgerParams::default()).unwrap();
        for (t, v) in component(&series, "rho_l1") {
            prop_assert!((v - mass).abs() <= 1e-8 * mass, "t = {}: {} vs {}", t, v, mass);
        }
    }
}
