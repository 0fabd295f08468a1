use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sigpost::criteria::{m_criterion, m_criterion_quadrature, solve_etel_dual, EtelSettings};
use sigpost::estimator::{row_contexts, sandwich_covariance, z_estimate, RowContext};
use sigpost::model::{contaminate, generate_latent_curve, sample_rdpg, GroundTruth};
use sigpost::rng;
use sigpost::sampler::{metropolis, ChainConfig};
use sigpost::spectral::{align, spectral_embed, sse, Embedding};
use sigpost::weight::{builtin_weight, WeightKind};

fn rdpg(n: usize, seed: u64) -> sigpost::model::ObservedMatrix {
    let truth = generate_latent_curve(n).unwrap();
    sample_rdpg(&truth, &mut rng::stream(seed, 0)).unwrap()
}

fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    use rand::Rng;
    let mut r = rng::stream(seed, 9);
    let m = DMatrix::from_fn(d, d, |_, _| r.gen_range(-1.0..1.0));
    m.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contamination_keeps_symmetry(seed in 0u64..1000, v in 0.0f64..0.5) {
        let a = rdpg(30, seed);
        let c = contaminate(&a, v, &mut rng::stream(seed, 1)).unwrap();
        let m = c.matrix();
        prop_assert_eq!(m, &m.transpose());
        if v == 0.0 {
            prop_assert_eq!(m, a.matrix());
        }
    }

    #[test]
    fn rdpg_samples_are_binary_and_symmetric(seed in 0u64..1000) {
        let a = rdpg(25, seed);
        let m = a.matrix();
        prop_assert_eq!(m, &m.transpose());
        prop_assert!(m.iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn alignment_is_orthogonal_and_undoes_rotations(seed in 0u64..1000, d in 1usize..4) {
        use rand::Rng;
        let mut r = rng::stream(seed, 3);
        let x = DMatrix::from_fn(20, d, |_, _| r.gen_range(-1.0..1.0));
        let q = random_orthogonal(d, seed);
        let rotated = &x * &q;
        let w = align(&rotated, &x).unwrap();
        let wm = w.matrix();
        prop_assert!((wm.transpose() * wm - DMatrix::identity(d, d)).abs().max() < 1e-10);
        prop_assert!(sse(&w.apply(&rotated), &x).unwrap() < 1e-18);
        let other = DMatrix::from_fn(20, d, |_, _| r.gen_range(-1.0..1.0));
        let aligned = sse(&align(&other, &x).unwrap().apply(&other), &x).unwrap();
        prop_assert!(aligned <= sse(&other, &x).unwrap() + 1e-12);
    }

    #[test]
    fn constant_weight_reproduces_the_embedding(seed in 0u64..1000) {
        let a = rdpg(40, seed);
        let w = builtin_weight(WeightKind::Constant).unwrap();
        for ctx in row_contexts(&a, 1, &w, 10.0).unwrap() {
            let z = z_estimate(&ctx).unwrap();
            prop_assert!((z.xhat - ctx.embedding_row()).norm() < 1e-8);
        }
    }

    #[test]
    fn etel_probabilities_form_a_distribution(seed in 0u64..1000, d in 1usize..3) {
        use rand::Rng;
        let mut r = rng::stream(seed, 4);
        let g = DMatrix::from_fn(30, d, |_, _| r.gen_range(-1.0..1.0));
        let sol = solve_etel_dual(&g, &EtelSettings::default());
        let total: f64 = sol.probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(sol.probs.iter().all(|&p| p > 0.0));
        if sol.converged {
            let tilted = g.transpose() * DVector::from_column_slice(&sol.probs);
            prop_assert!(tilted.norm() <= 1e-8);
        }
    }

    #[test]
    fn metropolis_draws_stay_in_the_ball(seed in 0u64..1000, radius in 0.2f64..2.0) {
        let cfg = ChainConfig { burnin: 100, samples: 300, proposal_scale: 0.5, seed, chains: 1, adapt: true };
        let start = DVector::from_vec(vec![0.0, 0.0]);
        let (draws, trace, _, scale) = metropolis(
            &start,
            |x: &DVector<f64>| Some(-x.norm_squared()),
            radius,
            &cfg,
            &mut rng::stream(seed, 5),
        ).unwrap();
        prop_assert_eq!(draws.nrows(), 300);
        prop_assert_eq!(trace.len(), 300);
        prop_assert!(scale > 0.0);
        for row in draws.row_iter() {
            prop_assert!(row.norm() <= radius + 1e-12);
        }
    }

    #[test]
    fn closed_form_m_matches_quadrature(seed in 0u64..1000, frac in 0.2f64..0.95) {
        let a = rdpg(30, seed);
        let w = builtin_weight(WeightKind::Rdpg).unwrap();
        let ctxs = row_contexts(&a, 1, &w, 1.0).unwrap();
        let ctx = &ctxs[(seed % 30) as usize];
        let x = ctx.embedding_row() * frac;
        if let (Ok(c), Ok(q)) = (m_criterion(ctx, &x), m_criterion_quadrature(ctx, &x)) {
            prop_assert!((c - q).abs() <= 1e-9 * c.abs().max(1.0));
        }
    }

    #[test]
    fn sandwich_is_symmetric_positive_semidefinite(seed in 0u64..1000) {
        let truth = GroundTruth::new(
            DMatrix::from_fn(40, 2, |i, k| if k == 0 { 0.6 } else { 0.3 * ((i % 2) as f64 - 0.5) }),
            1.0,
        ).unwrap();
        let a = sample_rdpg(&truth, &mut rng::stream(seed, 6)).unwrap();
        let emb: Embedding = match spectral_embed(&a, 2) {
            Ok(e) => e,
            Err(_) => return Ok(()),
        };
        let ctx = RowContext::new(
            0,
            a.row(0),
            Arc::new(emb),
            builtin_weight(WeightKind::Constant).unwrap(),
            5.0,
        ).unwrap();
        let z = z_estimate(&ctx).unwrap();
        let s = sandwich_covariance(&ctx, &z.xhat).unwrap();
        let v = &s.cov;
        prop_assert!((v - v.transpose()).abs().max() < 1e-12);
        let eig = v.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
    }
}

#[test]
fn streams_are_reproducible() {
    let a1 = rdpg(50, 7);
    let a2 = rdpg(50, 7);
    assert_eq!(a1.matrix(), a2.matrix());
    let a3 = rdpg(50, 8);
    assert_ne!(a1.matrix(), a3.matrix());
}
