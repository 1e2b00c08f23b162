use std::sync::Arc;

use nlde_graph::evolution::{linear_cn_step, nonlinear_phase_step};
use nlde_graph::operators::{assemble_big_laplacian, assemble_dirac, PhysParams};
use nlde_graph::resolvent::{lambda_of_k, star3_kernel, KernelVariant, ResolventQuery};
use nlde_graph::{Grid, MetricGraph, SpinorField, StarSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, cells: usize, h: f64) -> Arc<Grid> {
    let l = cells as f64 * h;
    Arc::new(Grid::uniform(MetricGraph::star(&StarSpec::new(n, l)).unwrap(), l, h).unwrap())
}

fn random_field(g: &Arc<Grid>, seed: u64) -> SpinorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..g.spinor_len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    SpinorField::from_vec(g.clone(), data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dirac_is_symmetric_in_the_weighted_product(
        n in 2usize..6, cells in 4usize..40, h in 0.02f64..0.3,
        m in 0.1f64..3.0, c in 0.2f64..8.0, seed in any::<u64>(),
    ) {
        let g = grid(n, cells, h);
        let d = assemble_dirac(&g, PhysParams::new(m, c).unwrap()).unwrap();
        let x = random_field(&g, seed);
        let y = random_field(&g, seed ^ 0x9e37);
        let dx = SpinorField::from_vec(g.clone(), d.apply(x.as_slice()).unwrap()).unwrap();
        let dy = SpinorField::from_vec(g.clone(), d.apply(y.as_slice()).unwrap()).unwrap();
        let lhs = dx.inner(&y).unwrap();
        let rhs = x.inner(&dy).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-11 * (1.0 + lhs.norm()) * c / h);
    }

    #[test]
    fn dirac_square_matches_big_laplacian(
        n in 2usize..5, cells in 4usize..30, h in 0.05f64..0.3,
        m in 0.1f64..2.0, c in 0.5f64..4.0, seed in any::<u64>(),
    ) {
        let g = grid(n, cells, h);
        let d = assemble_dirac(&g, PhysParams::new(m, c).unwrap()).unwrap();
        let big = assemble_big_laplacian(&g, m).unwrap();
        let x = random_field(&g, seed);
        let dd = d.apply(&d.apply(x.as_slice()).unwrap()).unwrap();
        let bx = big.apply(x.as_slice()).unwrap();
        let scale = (c / h).powi(2) + (m * c * c).powi(2);
        for ((a, b), xi) in dd.iter().zip(&bx).zip(x.as_slice()) {
            let expected = xi * (m * m * c.powi(4)) + b * (2.0 * m * c * c);
            prop_assert!((a - expected).norm() <= 1e-11 * scale);
        }
    }

    #[test]
    fn lambda_round_trips(kr in -3.0f64..3.0, ki in 0.01f64..3.0, m in 0.0f64..2.0, flip in any::<bool>()) {
        let k = Complex64::new(kr, if flip { -ki } else { ki });
        let l = lambda_of_k(k, m).unwrap();
        prop_assert!(l.im > 0.0);
        prop_assert!((l * l - (k * k - m * m)).norm() <= 1e-12 * (1.0 + k.norm_sqr()));
    }

    #[test]
    fn kernel_is_adjoint_symmetric(
        x in 0.0f64..4.0, y in 0.0f64..4.0, e in 0usize..3, f in 0usize..3,
        kr in -2.0f64..2.0, ki in 0.05f64..2.0, m in 0.2f64..2.0,
    ) {
        let k = Complex64::new(kr, ki);
        let q = ResolventQuery::new(k, m).unwrap();
        let qc = ResolventQuery::new(k.conj(), m).unwrap();
        let a = star3_kernel(x, e, y, f, &q, KernelVariant::Derived).unwrap();
        let b = star3_kernel(y, f, x, e, &qc, KernelVariant::Derived).unwrap().adjoint();
        prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn evolution_steps_preserve_mass(
        n in 2usize..5, cells in 4usize..40, dt in 1e-3f64..0.2,
        p in 2.5f64..7.0, seed in any::<u64>(), focusing in any::<bool>(),
    ) {
        let g = grid(n, cells, 0.1);
        let d = assemble_dirac(&g, PhysParams::new(1.0, 1.0).unwrap()).unwrap();
        let x = random_field(&g, seed);
        let sign = if focusing { 1.0 } else { -1.0 };
        let y = nonlinear_phase_step(&x, dt, p, sign).unwrap();
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-14);
        }
        let z = linear_cn_step(&y, dt, &d, 1e-13).unwrap();
        prop_assert!((z.mass() / x.mass() - 1.0).abs() <= 1e-11);
    }
}
