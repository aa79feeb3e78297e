use proptest::prelude::*;
use schl::phase_space::*;
use schl::propagate::{Interaction, PotentialSpec};
use schl::{Grid, LowRankOperator, C64};

const HBAR: f64 = 0.5;

fn qgrid() -> Grid {
    Grid::new(1, 64, 16.0).unwrap()
}

fn packets() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, -1.5f64..1.5, 0.05f64..1.0), 1..4)
}

/// `Σ w |φ_{q,p}⟩⟨φ_{q,p}|`, nonnegative.
fn mixture(grid: &Grid, parts: &[(f64, f64, f64)]) -> LowRankOperator {
    let states = parts.iter().map(|(q, p, _)| coherent_state(grid, HBAR, &[*q], &[*p], CoherentConvention::Normalized)).collect();
    let w: Vec<f64> = parts.iter().map(|p| p.2).collect();
    LowRankOperator::from_orbitals(grid, HBAR, states, &w).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bumps(q: &Grid, p: &Grid, parts: &[(f64, f64, f64)]) -> ClassicalDistribution {
    ClassicalDistribution::from_fn(q, p, |x, v| {
        parts.iter().map(|(a, b, w)| w * (-((x[0] - a).powi(2) + (v[0] - b).powi(2))).exp()).sum()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn wigner_is_linear(a in packets(), b in packets(), s in -2.0f64..2.0) {
        let g = qgrid();
        let (ma, mb) = (mixture(&g, &a), mixture(&g, &b));
        let wa = wigner(&ma).unwrap();
        let wb = wigner(&mb).unwrap();
        let sum = wigner(&ma.add(&mb.scaled(C64::new(s, 0.0))).unwrap()).unwrap();
        let want: Vec<f64> = wa.values().iter().zip(wb.values()).map(|(x, y)| x + s * y).collect();
        let scale = wa.max().abs().max(wb.max().abs());
        prop_assert!(max_diff(sum.values(), &want) <= 1e-12 * scale * (1.0 + s.abs()));
    }

    #[test]
    fn wigner_of_hermitian_data_is_real(a in packets()) {
        let m = mixture(&qgrid(), &a);
        let w = wigner(&m).unwrap();
        let turned = wigner(&m.scaled(C64::new(0.0, 1.0))).unwrap();
        let imag = turned.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(imag <= 1e-10 * w.max());
    }

    #[test]
    fn wigner_trace_and_marginal(a in packets()) {
        let m = mixture(&qgrid(), &a);
        let w = wigner(&m).unwrap();
        let tr = m.trace().re;
        prop_assert!((w.mass() / m.phase_volume() - tr).abs() <= 1e-8 * tr);
        let marginal = classical_density(&w);
        let rho = m.density();
        let err = marginal.l2_distance(&rho) / rho.l2_norm();
        prop_assert!(err <= 1e-8, "{}", err);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn quantized_nonnegative_symbols_pair_nonnegatively(a in packets(), f in packets()) {
        let g = qgrid();
        let p = Grid::new(1, 32, 8.0).unwrap();
        let op = toeplitz_quantize(&bumps(&g, &p, &f), &g, HBAR, &ToeplitzOptions::default()).unwrap();
        let m = mixture(&g, &a);
        let pairing = m.compose(&op).unwrap().trace();
        let scale = m.schatten_norm(1.0).unwrap() * op.operator_norm();
        prop_assert!(pairing.re >= -1e-12 * scale, "{}", pairing);
        prop_assert!(pairing.im.abs() <= 1e-10 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn vlasov_keeps_mass_and_sign(parts in packets(), kappa in -0.2f64..0.2) {
        let q = Grid::new(1, 128, 40.0).unwrap();
        let p = Grid::new(1, 64, 12.8).unwrap();
        let f0 = bumps(&q, &p, &parts);
        let inter = Interaction::new(PotentialSpec::coulomb(kappa), &q).unwrap();
        let run = vlasov_evolve(&f0, &inter, 2.0, 0.05, 10).unwrap();
        prop_assert!(run.flags.is_empty(), "{:?}", run.flags);
        let m0 = f0.mass();
        for (t, f) in run.times.iter().zip(&run.states) {
            prop_assert!((f.mass() - m0).abs() <= 1e-8 * m0, "t = {}", t);
            prop_assert!(f.min() >= -1e-6 * f.max(), "t = {}: {}", t, f.min());
        }
    }

    #[test]
    fn free_transport_satisfies_the_continuity_relation(parts in packets(), t in 0.5f64..2.0) {
        let q = Grid::new(1, 256, 40.0).unwrap();
        let p = Grid::new(1, 64, 12.8).unwrap();
        let f0 = bumps(&q, &p, &parts);
        let phi = |x: f64| (-(x - 0.5).powi(2) / 8.0).exp();
        let dphi = |x: f64| -(x - 0.5) / 4.0 * phi(x);
        let moment = |s: f64| classical_density(&vlasov_free(&f0, s)).values().iter().enumerate()
            .map(|(i, r)| r.re * phi(q.coord(i))).sum::<f64>() * q.dx();
        let flux = vlasov_free(&f0, t).pair(|x, v| v[0] * dphi(x[0]));
        let residual = |h: f64| ((moment(t + h) - moment(t - h)) / (2.0 * h) - flux).abs();
        let (coarse, fine) = (residual(0.2), residual(0.1));
        prop_assert!(fine <= coarse / 3.0 || fine <= 1e-12 * flux.abs().max(1.0), "{} then {}", coarse, fine);
    }
}

#[test]
fn dense_node_lattices_quantize_to_positive_operators() {
    let g = Grid::new(1, 128, 16.0).unwrap();
    let p = Grid::new(1, 64, 8.0).unwrap();
    let hbar = 0.25;
    let f = ClassicalDistribution::from_fn(&g, &p, |x, v| (-(x[0] * x[0] + v[0] * v[0]) / 0.5).exp()).unwrap();
    let op = toeplitz_quantize(&f, &g, hbar, &ToeplitzOptions { tol: 0.0, ..Default::default() }).unwrap();
    let lam = relative_min_eigenvalue(&op);
    assert!(lam >= -1e-10, "{lam}");
    let mass = (op.trace() * op.phase_volume()).re;
    assert!((mass - f.mass()).abs() < 1e-6 * f.mass(), "{mass} vs {}", f.mass());
}
