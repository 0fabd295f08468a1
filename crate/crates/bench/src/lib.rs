//! Fixtures shared by the benchmarks.

use nalgebra::DVector;
use sigpost::criteria::{Criterion, CriterionKind};
use sigpost::estimator::{row_contexts, RowContext};
use sigpost::model::{generate_latent_curve, sample_rdpg};
use sigpost::rng;
use sigpost::weight::{builtin_weight, WeightKind};

/// Row contexts for one latent-curve RDPG draw with the rdpg weight.
pub fn curve_contexts(n: usize, seed: u64) -> Vec<RowContext> {
    let truth = generate_latent_curve(n).expect("valid size");
    let a = sample_rdpg(&truth, &mut rng::stream(seed, 0)).expect("sampling succeeds");
    let weight = builtin_weight(WeightKind::Rdpg).expect("builtin weight");
    row_contexts(&a, 1, &weight, 1.0).expect("embedding succeeds")
}

/// A row, its prepared criterion, and a nearby point where it is defined.
pub fn evaluation_point(ctxs: &[RowContext], kind: CriterionKind) -> (&RowContext, Criterion, DVector<f64>) {
    for ctx in ctxs.iter().skip(ctxs.len() / 2) {
        let x = ctx.embedding_row() * 0.98;
        if let Ok(c) = Criterion::prepare(kind, ctx) {
            if c.eval(ctx, &x).is_some() {
                return (ctx, c, x);
            }
        }
    }
    panic!("no row has a defined {} criterion", kind.label());
}
