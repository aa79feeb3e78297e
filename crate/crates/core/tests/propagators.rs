use std::f64::consts::PI;

use proptest::prelude::*;
use schl::grid::{Field, Grid, C64};
use schl::propagate::*;
use schl::LowRankOperator;

fn gaussian(grid: &Grid, s: f64, shift: f64) -> Field {
    Field::from_fn(grid, |x| C64::new((-(x[0] - shift).powi(2) / (2.0 * s)).exp(), 0.0))
}

fn rank_one(grid: &Grid, hbar: f64) -> LowRankOperator {
    let mut u = gaussian(grid, 1.0, 0.0);
    u.scale(C64::new(1.0 / u.l2_norm(), 0.0));
    LowRankOperator::from_orbitals(grid, hbar, vec![u], &[1.0 / (2.0 * PI * hbar)]).unwrap()
}

#[test]
fn hartree_conserves_mass_and_energy() {
    let g = Grid::new(1, 512, 80.0).unwrap();
    let gamma = rank_one(&g, 1.0);
    let inter = Interaction::new(PotentialSpec::gaussian(0.05, 1.0), &g).unwrap();
    let opts = HartreeOptions { dt: 1.0 / 64.0, horizon: 10.0, stride: 64, ..Default::default() };
    let traj = hartree_evolve(&gamma, &inter, &opts).unwrap();
    let m0 = traj.stamps[0].mass;
    let e0 = traj.stamps[0].energy;
    let mut md: f64 = 0.0;
    let mut ed: f64 = 0.0;
    for s in &traj.stamps {
        md = md.max((s.mass - m0).abs() / m0);
        ed = ed.max((s.energy - e0).abs() / e0.abs());
    }
    println!("mass drift {md:e} energy drift {ed:e}");
    assert!(md < 1e-9);
    assert!(ed < 1e-6);
    assert!(traj.contamination.is_none());
}

fn random_field(grid: &Grid, amps: &[(f64, f64)]) -> Field {
    let v = amps.iter().take(grid.points()).map(|(a, b)| C64::new(*a, *b)).collect();
    Field::from_values(grid, v, schl::Space::Position).unwrap()
}

fn wavepacket(grid: &Grid, shift: f64, kick: f64) -> Field {
    let mut u = Field::from_fn(grid, |x| C64::from_polar((-(x[0] - shift).powi(2) / 2.0).exp(), kick * x[0]));
    u.scale(C64::new(1.0 / u.l2_norm(), 0.0));
    u
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 128)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn free_flow_is_a_unitary_group(amps in amplitudes(), s in -3.0f64..3.0, t in -3.0f64..3.0, hbar in 0.05f64..1.0) {
        let g = Grid::new(1, 128, 30.0).unwrap();
        let u = random_field(&g, &amps);
        let us = free_propagate(&u, s, hbar).unwrap();
        prop_assert!((us.l2_norm() - u.l2_norm()).abs() <= 1e-12 * u.l2_norm());
        let both = free_propagate(&us, t, hbar).unwrap();
        let once = free_propagate(&u, s + t, hbar).unwrap();
        prop_assert!(both.l2_distance(&once) <= 1e-12 * u.l2_norm());
    }

    #[test]
    fn split_steps_preserve_the_norm(amps in amplitudes(), v in amplitudes(), dt in 0.001f64..0.5, hbar in 0.05f64..1.0) {
        let g = Grid::new(1, 128, 30.0).unwrap();
        let mut u = random_field(&g, &amps);
        let n0 = u.l2_norm();
        let pot: Vec<f64> = v.iter().map(|p| 3.0 * p.0).collect();
        let step = StrangStep::new(&g, hbar, dt);
        let kick = step.kick(&pot);
        for _ in 0..50 {
            let before = u.l2_norm();
            step.apply(&mut u, &kick);
            prop_assert!((u.l2_norm() - before).abs() <= 1e-10 * before);
        }
        prop_assert!((u.l2_norm() - n0).abs() <= 1e-8 * n0);
    }

    #[test]
    fn external_runs_are_unitary(shift in -2.0f64..2.0, kick in -1.0f64..1.0, strength in -2.0f64..2.0) {
        let g = Grid::new(1, 256, 60.0).unwrap();
        let u = wavepacket(&g, shift, kick);
        let pot = |t: f64| Field::from_fn(&g, |x| C64::new(strength * (-(x[0] * x[0]) / 4.0).exp() * t.cos(), 0.0));
        let out = evolve_external(&u, &pot, 0.0, 3.0, 0.01, 0.5).unwrap();
        prop_assert!((out.l2_norm() - 1.0).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn constant_shift_of_the_pair_potential_is_a_gauge(c in -2.0f64..2.0, kappa in -0.1f64..0.1, hbar in 0.25f64..1.0) {
        let g = Grid::new(1, 256, 40.0).unwrap();
        let gamma = LowRankOperator::from_orbitals(
            &g,
            hbar,
            vec![wavepacket(&g, -1.0, 0.3), wavepacket(&g, 1.0, -0.3)],
            &[0.4 / (2.0 * PI * hbar), 0.6 / (2.0 * PI * hbar)],
        )
        .unwrap();
        let opts = HartreeOptions { dt: 0.02, horizon: 1.0, stride: 10, ..Default::default() };
        let plain = Interaction::new(PotentialSpec::coulomb(kappa), &g).unwrap();
        let mut spec = PotentialSpec::coulomb(kappa);
        spec.shift = c;
        let shifted = Interaction::new(spec, &g).unwrap();
        let a = hartree_evolve(&gamma, &plain, &opts).unwrap();
        let b = hartree_evolve(&gamma, &shifted, &opts).unwrap();
        for (sa, sb) in a.stamps.iter().zip(&b.stamps) {
            let ra = sa.gamma.density();
            let rb = sb.gamma.density();
            prop_assert!(ra.l2_distance(&rb) <= 1e-10 * ra.l2_norm(), "t = {}", sa.t);
        }
    }

    #[test]
    fn trajectories_keep_their_mass_and_start_without_phase(kappa in -0.1f64..0.1, hbar in 0.25f64..1.0, width in 0.5f64..2.0) {
        let g = Grid::new(1, 256, 40.0).unwrap();
        let gamma = rank_one(&g, hbar);
        let inter = Interaction::new(PotentialSpec::gaussian(kappa, width), &g).unwrap();
        let opts = HartreeOptions { dt: 0.05, horizon: 2.0, stride: 5, ..Default::default() };
        let traj = hartree_evolve(&gamma, &inter, &opts).unwrap();
        prop_assert_eq!(traj.stamps[0].t, 0.0);
        prop_assert!(traj.stamps[0].psi.values().iter().all(|v| *v == C64::new(0.0, 0.0)));
        let m0 = traj.stamps[0].mass;
        for s in &traj.stamps {
            prop_assert!((s.mass - m0).abs() <= 1e-8 * m0, "t = {}", s.t);
            let tr = (s.gamma.trace() * s.gamma.phase_volume()).re;
            prop_assert!((tr - m0).abs() <= 1e-8 * m0);
        }
    }
}

#[test]
fn built_in_potentials_meet_the_decay_assumption() {
    let near = Grid::new(1, 512, 80.0).unwrap();
    let far = Grid::new(1, 1024, 160.0).unwrap();
    for spec in [PotentialSpec::coulomb(1.0), PotentialSpec::gaussian(1.0, 1.5)] {
        let a = Interaction::new(spec.clone(), &near).unwrap().decay_constants().unwrap();
        let b = Interaction::new(spec, &far).unwrap().decay_constants().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.is_finite() && (x - y).abs() <= 1e-2 * x, "{a:?} vs {b:?}");
        }
    }
    let custom = PotentialSpec::custom(Field::from_fn(&near, |x| C64::new(x[0].abs(), 0.0)), 1.0);
    assert!(Interaction::new(custom, &near).unwrap().decay_constants().is_none());
}
