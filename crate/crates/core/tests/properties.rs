use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eplrank_core::predictive::{
    aggregate_mode, discrepancy_matrix, enumerate_predictive, marginal_rank_matrix, sigma_marginal_matrix,
};
use eplrank_core::sampler::PosteriorDraws;
use eplrank_core::{epl_log_prob, log_likelihood, modal_ordering, Dataset, LambdaVector, Permutation};

fn perm(k: usize) -> impl Strategy<Value = Permutation> {
    Just((1..=k).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| Permutation::new(v).unwrap())
}

fn lambda(k: usize) -> impl Strategy<Value = LambdaVector> {
    prop::collection::vec(0.01f64..20.0, k).prop_map(|v| LambdaVector::new(v).unwrap())
}

fn posterior(k: usize) -> impl Strategy<Value = PosteriorDraws> {
    prop::collection::vec((lambda(k), perm(k)), 1..12)
        .prop_map(move |pairs| PosteriorDraws::from_pairs(k, pairs).unwrap())
}

proptest! {
    #[test]
    fn probabilities_are_scale_free(l in lambda(6), s in perm(6), x in perm(6), c in 0.001f64..1000.0) {
        let a = epl_log_prob(&x, &l, &s).unwrap();
        let b = epl_log_prob(&x, &l.scaled(c).unwrap(), &s).unwrap();
        prop_assert!(a <= 0.0);
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn likelihood_adds_over_rankings(l in lambda(5), s in perm(5), xs in prop::collection::vec(perm(5), 1..20)) {
        let data = Dataset::new(5, xs.clone()).unwrap();
        let total: f64 = xs.iter().map(|x| epl_log_prob(x, &l, &s).unwrap()).sum();
        prop_assert!((log_likelihood(&data, &l, &s).unwrap() - total).abs() < 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn predictive_marginals_are_doubly_stochastic(draws in posterior(4)) {
        let m = marginal_rank_matrix(&enumerate_predictive(&draws, 8).unwrap());
        prop_assert!(m.is_doubly_stochastic(1e-8));
        let zero = discrepancy_matrix(&m, &m).unwrap();
        prop_assert!(zero.rows().flatten().all(|v| *v == 0.0));
        prop_assert!(sigma_marginal_matrix(&draws).unwrap().is_doubly_stochastic(1e-12));
    }

    #[test]
    fn aggregate_never_loses_to_draw_modes(draws in posterior(5), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agg = aggregate_mode(&draws, 3, &mut rng).unwrap();
        let dist = enumerate_predictive(&draws, 8).unwrap();
        let best = dist.probability(&agg.ranking);
        for d in draws.draws() {
            let m = modal_ordering(&d.lambda, &d.sigma).unwrap();
            prop_assert!(dist.probability(&m) <= best * (1.0 + 1e-12));
        }
    }
}
