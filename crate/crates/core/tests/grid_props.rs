use std::f64::consts::PI;

use proptest::prelude::*;
use schl::grid::{convolve, fourier_multiplier, fourier_transform, interpolate, Direction};
use schl::{Field, Grid, Space, C64};

fn grid() -> impl Strategy<Value = Grid> {
    (1usize..=2, 3u32..=6, 1.0f64..100.0).prop_map(|(d, k, len)| Grid::new(d, 1 << k, len).unwrap())
}

fn samples(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), n)
}

fn grid_and_field() -> impl Strategy<Value = (Grid, Field)> {
    grid().prop_flat_map(|g| {
        samples(g.points()).prop_map(move |v| (g.clone(), Field::from_values(&g, v, Space::Position).unwrap()))
    })
}

fn rel_l2(a: &Field, b: &Field) -> f64 {
    a.l2_distance(b) / b.l2_norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spacing_times_count_is_the_box(g in grid()) {
        prop_assert_eq!(g.dx() * g.n() as f64, g.len());
        prop_assert!((g.max_freq() - PI * g.n() as f64 / g.len()).abs() <= 1e-12 * g.max_freq());
    }

    #[test]
    fn frequency_lattice_is_symmetric_but_for_nyquist(g in grid()) {
        let n = g.n();
        let modes: Vec<i64> = (0..n).map(|i| g.mode(i)).collect();
        let nyquist = -(n as i64) / 2;
        for &m in &modes {
            if m != nyquist {
                prop_assert!(modes.contains(&-m));
            }
        }
        prop_assert_eq!(modes.iter().filter(|m| !modes.contains(&-**m)).count(), 1);
        let top = (0..n).map(|i| g.freq(i).abs()).fold(0.0, f64::max);
        prop_assert!((top - g.max_freq()).abs() <= 1e-12 * top);
    }

    #[test]
    fn transform_round_trips_and_preserves_norm((g, f) in grid_and_field()) {
        let fh = fourier_transform(&f, Direction::Forward).unwrap();
        prop_assert_eq!(fh.space(), Space::Frequency);
        let norm_hat = (fh.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.freq_volume()).sqrt();
        prop_assert!((norm_hat - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
        let back = fourier_transform(&fh, Direction::Inverse).unwrap();
        prop_assert!(rel_l2(&back, &f) <= 1e-12);
        prop_assert!(fourier_transform(&fh, Direction::Forward).is_err());
    }

    #[test]
    fn multipliers_compose((g, f) in grid_and_field(), a in 0.1f64..2.0, b in -3.0f64..3.0) {
        let m1 = g.symbol(|xi| C64::from_polar(1.0, -a * xi.iter().map(|v| v * v).sum::<f64>()));
        let m2 = g.symbol(|xi| C64::new(1.0 / (1.0 + xi[0] * xi[0]), b * xi[0]));
        let m12: Vec<C64> = m1.iter().zip(&m2).map(|(x, y)| x * y).collect();
        let two = fourier_multiplier(&fourier_multiplier(&f, &m2).unwrap(), &m1).unwrap();
        let one = fourier_multiplier(&f, &m12).unwrap();
        prop_assert!(rel_l2(&two, &one) <= 1e-12);
    }

    #[test]
    fn convolution_is_symmetric((g, w) in grid_and_field(), seed in samples(4096)) {
        let rho = Field::from_values(&g, seed[..g.points()].to_vec(), Space::Position).unwrap();
        let a = convolve(&w, &rho).unwrap();
        let b = convolve(&rho, &w).unwrap();
        prop_assert!(rel_l2(&a, &b) <= 1e-12);
    }

    #[test]
    fn interpolation_reproduces_band_limited_fields(
        g in grid(),
        coeffs in samples(6),
        modes in prop::collection::vec((-3i64..=3, -3i64..=3), 6),
        at in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 10),
    ) {
        let dxi = g.dxi();
        let d = g.dim();
        let exact = |x: &[f64]| -> C64 {
            coeffs
                .iter()
                .zip(&modes)
                .map(|(c, (k0, k1))| {
                    let mut phase = *k0 as f64 * dxi * x[0];
                    if d == 2 {
                        phase += *k1 as f64 * dxi * x[1];
                    }
                    c * C64::from_polar(1.0, phase)
                })
                .sum()
        };
        let f = Field::from_fn(&g, exact);
        let points: Vec<[f64; 3]> = at.iter().map(|(a, b)| [a * g.len(), b * g.len(), 0.0]).collect();
        let got = interpolate(&f, &points, &|_| C64::new(f64::NAN, 0.0)).unwrap();
        for (p, v) in points.iter().zip(&got) {
            prop_assert!((v - exact(&p[..d])).norm() < 1e-10, "{:?}: {} vs {}", p, v, exact(&p[..d]));
        }
    }
}

#[test]
fn unequal_grids_do_not_compose() {
    let a = Grid::new(1, 32, 10.0).unwrap();
    let b = Grid::new(1, 32, 10.5).unwrap();
    let fa = Field::from_fn(&a, |x| C64::new(x[0], 0.0));
    let fb = Field::from_fn(&b, |x| C64::new(x[0], 0.0));
    assert!(convolve(&fa, &fb).is_err());
    assert!(convolve(&fa, &fa).is_ok());
}
