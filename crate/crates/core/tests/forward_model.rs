use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wbipm_core::operator::{
    assemble_fmt_operator, simulate_measurements, DiffusionSystem, Field, OpticalCoefficients, SourceDetectorLayout,
};
use wbipm_core::{Grid3, LinearOperator};

fn desk() -> (Grid3, OpticalCoefficients, SourceDetectorLayout) {
    let g = Grid3::new(8, 8, 4, 1.0, 1.0, 1.0).unwrap();
    let layout = SourceDetectorLayout::regular(&g, (2, 2), (3, 3));
    (g, OpticalCoefficients::default(), layout)
}

fn dense_system(g: &Grid3, mu_a: f64, kappa: f64, zeta: f64) -> (DMatrix<f64>, Vec<f64>) {
    let n = g.len();
    let sys = DiffusionSystem::assemble(g, &vec![mu_a; n], &vec![kappa; n], zeta).unwrap();
    (sys.matrix().to_dense(), sys.cell_volume().to_vec())
}

/// Readings for fluorophore `x` without reciprocity: one dense excitation
/// solve per source, then one dense emission solve with the fluorescence
/// source, read off at each detector node.
fn direct_readings(g: &Grid3, c: &OpticalCoefficients, layout: &SourceDetectorLayout, x: &DVector<f64>) -> DVector<f64> {
    let scalar = |f: &Field| match f {
        Field::Constant(v) => *v,
        Field::PerVoxel(_) => unreachable!(),
    };
    let (ex, vol) = dense_system(g, scalar(&c.mu_a_ex), scalar(&c.kappa_ex), c.robin_ex);
    let (em, _) = dense_system(g, scalar(&c.mu_a_em), scalar(&c.kappa_em), c.robin_em);
    let (ex, em) = (ex.lu(), em.lu());
    let n = g.len();
    let mut b = Vec::new();
    for s in &layout.sources {
        let mut e = DVector::zeros(n);
        e[g.nearest_node(*s)] = 1.0;
        let phi = ex.solve(&e).unwrap();
        let src = DVector::from_fn(n, |j, _| c.eta * phi[j] * x[j] * vol[j]);
        let field = em.solve(&src).unwrap();
        b.extend(layout.detectors.iter().map(|d| field[g.nearest_node(*d)]));
    }
    DVector::from_vec(b)
}

#[test]
fn center_voxel_reading_matches_direct_emission_solve() {
    let (g, c, layout) = desk();
    let a = assemble_fmt_operator(&g, &c, &layout).unwrap();
    let j = g.index(4, 4, 2);
    let mut e = DVector::zeros(g.len());
    e[j] = 1.0;
    let b = a.apply(&e);
    let oracle = direct_readings(&g, &c, &layout, &e);
    assert!((&b - &oracle).norm() <= 1e-9 * oracle.norm(), "{}", (&b - &oracle).norm());
    assert!(b.iter().all(|&v| v > 0.0));

    // per source, the largest reading comes from the detector closest in (x, y)
    let p = g.position(j);
    let nd = layout.detectors.len();
    let d2 = |q: &[f64; 3]| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
    let nearest = (0..nd)
        .min_by(|&u, &v| d2(&layout.detectors[u]).partial_cmp(&d2(&layout.detectors[v])).unwrap())
        .unwrap();
    for s in 0..layout.sources.len() {
        let row = b.rows(s * nd, nd);
        assert_eq!(row.imax(), nearest, "source {s}");
    }
}

#[test]
fn reciprocity_agrees_with_forward_simulation_for_heterogeneous_media() {
    let g = Grid3::new(6, 5, 4, 1.5, 1.0, 2.0).unwrap();
    let n = g.len();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut field = |lo: f64, hi: f64| Field::PerVoxel((0..n).map(|_| rng.random_range(lo..hi)).collect());
    let c = OpticalCoefficients {
        mu_a_ex: field(0.005, 0.03),
        mu_a_em: field(0.005, 0.03),
        kappa_ex: field(0.2, 0.5),
        kappa_em: field(0.2, 0.5),
        eta: 0.7,
        robin_ex: 1.3,
        robin_em: 2.1,
    };
    let layout = SourceDetectorLayout::regular(&g, (2, 2), (2, 3));
    let a = assemble_fmt_operator(&g, &c, &layout).unwrap();
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let direct = simulate_measurements(&g, &c, &layout, &x).unwrap();
        let b = a.apply(&x);
        assert!((&b - &direct).norm() <= 1e-8 * direct.norm());
    }
}

#[test]
fn adjoint_consistency_on_random_pairs() {
    let (g, c, layout) = desk();
    let a = assemble_fmt_operator(&g, &c, &layout).unwrap();
    let fro = a.frobenius_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let v = DVector::from_fn(a.ncols(), |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(a.nrows(), |_, _| rng.random_range(-1.0..1.0));
        let gap = (a.apply(&v).dot(&u) - v.dot(&a.apply_adjoint(&u))).abs();
        assert!(gap <= 1e-12 * fro * u.norm() * v.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn nonnegative_sources_give_nonnegative_readings(
        x in proptest::collection::vec(0.0f64..10.0, 256),
        mask in proptest::collection::vec(any::<bool>(), 256),
    ) {
        let (g, c, layout) = desk();
        let a = assemble_fmt_operator(&g, &c, &layout).unwrap();
        let x = DVector::from_iterator(256, x.iter().zip(&mask).map(|(v, keep)| if *keep { *v } else { 0.0 }));
        let b = a.apply(&x);
        prop_assert!(b.iter().all(|&v| v >= 0.0));
    }
}
