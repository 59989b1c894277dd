//! Synthetic data generators and the simple learners used to build candidate
//! scores for them.
//!
//! Class labels are 0-based internally; the averaged-case potentials `v_1..v_5`
//! are rows `0..4` of the coefficient matrix.

mod generators;
mod learners;

pub use generators::{
    avg_class_probabilities, default_avg_coefficients, default_ind_betas, default_ind_sigma, default_noise_cov,
    gen_avg_classification, gen_ind_classification, gen_regression_shift, ind_class_probabilities, regression_mean,
    sample_mvn, softmax_neg, GeneratorFamily, GeneratorSpec, SHIFT_CENTERS,
};
pub use learners::{
    fit_linear_mean, fit_multinomial_logit, lambda_grid, make_greedy_score_model, rank_penalty, train_box_model,
    train_ellipsoid_model, train_multinomial_logit, LogitConfig, SoftmaxLinear,
};

#[cfg(test)]
mod tests {
    use crate::score::greedy_scores;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn greedy_mass_is_monotone_in_rank(
            raw in prop::collection::vec(0.0f64..1.0, 2..7),
            lambda in 0.0f64..0.5,
        ) {
            let s: f64 = raw.iter().sum::<f64>() + 1e-9;
            let probs: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / raw.len() as f64) / s).collect();
            let k = probs.len();
            let penalty: Vec<f64> = (1..=k).map(|y| y as f64).collect();
            let rho = greedy_scores(&probs, 0.0, &penalty);
            let full = greedy_scores(&probs, lambda, &penalty);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            for w in order.windows(2) {
                prop_assert!(rho[w[1]] >= rho[w[0]]);
                prop_assert!(full[w[1]] >= full[w[0]]);
            }
        }
    }
}
