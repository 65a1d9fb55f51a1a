mod support;

use flowalert::bocpd::{BocpdConfig, RunLengthState};
use flowalert::calibrate::fit_isotonic;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{brute_force_pava, random_stream, ExactBocpd};

#[test]
fn truncated_matches_exact_recursion_when_nothing_is_truncated() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let len = rng.gen_range(1..=100);
        let dim = rng.gen_range(1..=5);
        let mut config = BocpdConfig::new(dim);
        config.max_run_length = len + rng.gen_range(0..20);
        config.hazard = [1e-3, 1e-2, 0.1][case % 3];
        let stream = random_stream(&mut rng, len, dim);

        let mut fast = RunLengthState::new(config.clone()).unwrap();
        let mut exact = ExactBocpd::new(config);
        for x in &stream {
            let s = fast.update(x).unwrap().score;
            let w = exact.update(x);
            assert!((s - w[0]).abs() < 1e-9, "case {case}: {s} vs {}", w[0]);
            for (a, b) in fast.weights().iter().zip(&w) {
                assert!((a - b).abs() < 1e-9, "case {case}");
            }
            assert!(fast.len() <= fast.config().max_run_length + 1);
        }
    }
}

#[test]
fn pava_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..500 {
        let n = rng.gen_range(2..=200);
        // Coarse grids in some cases to force tied scores.
        let grid = [0u32, 5, 20][case % 3];
        let mut pairs: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let s = if grid == 0 {
                    rng.gen::<f64>()
                } else {
                    rng.gen_range(0..=grid) as f64 / grid as f64
                };
                (s, rng.gen_bool(0.2 + 0.6 * s))
            })
            .collect();
        pairs[0].1 = true;
        pairs[1].1 = false;
        let map = fit_isotonic(&pairs).unwrap();
        let oracle = brute_force_pava(&pairs);
        for (i, &(s, _)) in pairs.iter().enumerate() {
            assert!((map.apply(s) - oracle[i]).abs() < 1e-12, "case {case}");
        }
        let mut sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|w| map.apply(w[0]) <= map.apply(w[1])));
    }
}
