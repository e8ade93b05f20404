use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridesplit_model::explain::{pdp, pdp_trees, sample_rows, shapley_exact, shapley_exact_generic, PdpGrid};
use ridesplit_model::gbm::train;
use ridesplit_model::ols::ols_fit;
use ridesplit_model::{BoostedModel, Dataset, Growth, Hyperparams};

/// Nonlinear target with an interaction, mixed continuous and discrete
/// features.
fn dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|j| if j % 3 == 2 { f64::from(rng.random_range(0..4)) } else { rng.random_range(-1.0..1.0) }).collect())
        .collect();
    let y = rows.iter().map(|x| x[0] * x[0] + x[0] * x[1] + 0.5 * x[p - 1] + rng.random_range(-0.1..0.1)).collect();
    Dataset::new((0..p).map(|j| format!("x{j}")).collect(), &rows, y).unwrap()
}

fn model(data: &Dataset, depth: usize, growth: Growth) -> BoostedModel {
    let hp =
        Hyperparams { iterations: 30, learning_rate: 0.2, depth, min_samples_leaf: 3, growth, max_leaves: 6, ..Hyperparams::default() };
    train(data, &hp).unwrap()
}

fn growth() -> impl Strategy<Value = Growth> {
    prop_oneof![Just(Growth::LevelWise), Just(Growth::LeafWise)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_shapley_matches_the_generic_route(seed in any::<u64>(), p in 2usize..7, depth in 1usize..5, g in growth()) {
        let data = dataset(120, p, seed);
        let m = model(&data, depth, g);
        let bg = sample_rows(&data, 12, seed ^ 1);
        for i in 0..5 {
            let x = data.row(i);
            let fast = shapley_exact(&m, x, &bg).unwrap();
            let slow = shapley_exact_generic(&m, x, &bg).unwrap();
            prop_assert!((fast.phi0 - slow.phi0).abs() < 1e-9);
            for (a, b) in fast.phi.iter().zip(&slow.phi) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn shapley_values_add_up(seed in any::<u64>(), p in 2usize..7) {
        let data = dataset(100, p, seed);
        let m = model(&data, 3, Growth::LevelWise);
        let bg = sample_rows(&data, 10, seed ^ 2);
        let mean_bg = m.predict(&bg).unwrap().iter().sum::<f64>() / bg.n_rows() as f64;
        for i in 0..5 {
            let e = shapley_exact(&m, data.row(i), &bg).unwrap();
            prop_assert!((e.phi0 - mean_bg).abs() < 1e-9);
            prop_assert!((e.phi0 + e.phi.iter().sum::<f64>() - m.predict_row(data.row(i)).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn tree_pdp_matches_the_generic_route(seed in any::<u64>(), points in 1usize..12, g in growth()) {
        let data = dataset(150, 4, seed);
        let m = model(&data, 3, g);
        let reference = sample_rows(&data, 40, seed ^ 3);
        for features in [vec![0], vec![2], vec![0, 1], vec![3, 2]] {
            let grids = vec![PdpGrid::Quantiles(points); features.len()];
            let fast = pdp_trees(&m, &reference, &features, &grids).unwrap();
            let slow = pdp(&m, &reference, &features, &grids).unwrap();
            prop_assert_eq!(&fast.grids, &slow.grids);
            prop_assert_eq!(&fast.counts, &slow.counts);
            prop_assert_eq!(fast.counts.iter().sum::<usize>(), reference.n_rows());
            for (a, b) in fast.values.iter().zip(&slow.values) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn saved_models_predict_identically(seed in any::<u64>(), g in growth()) {
        let data = dataset(80, 3, seed);
        let m = model(&data, 3, g);
        let back = BoostedModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(m.predict(&data).unwrap(), back.predict(&data).unwrap());
    }

    #[test]
    fn ols_recovers_noiseless_coefficients(seed in any::<u64>(), p in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta: Vec<f64> = (0..=p).map(|_| rng.random_range(-5.0..5.0)).collect();
        let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..p).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let y = rows.iter().map(|x| beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()).collect();
        let fit = ols_fit(&Dataset::new((0..p).map(|j| format!("x{j}")).collect(), &rows, y).unwrap()).unwrap();
        prop_assert!((fit.intercept - beta[0]).abs() < 1e-8);
        for (a, b) in fit.coefficients.iter().zip(&beta[1..]) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
