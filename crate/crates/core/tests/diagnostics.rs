use cliffkit::diagnostics::{
    gaussian_kde, kde_overlap, pair_diagnostics, silverman_bandwidth, spearman, wasserstein1,
};
use cliffkit::fingerprint::Fingerprint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let sa: Vec<usize> = a.ones().collect();
    let sb: Vec<usize> = b.ones().collect();
    let inter = sa.iter().filter(|x| sb.contains(x)).count();
    let union = sa.len() + sb.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn pair_diagnostics_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = rng.gen_range(5..60);
        let fps: Vec<Fingerprint> = (0..n)
            .map(|_| Fingerprint::from_indices(32, (0..32).filter(|_| rng.gen_bool(0.3))).unwrap())
            .collect();
        let targets: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-3i32..3))).collect();
        let preds: Vec<f64> = targets.iter().map(|y| y + rng.gen_range(-1.0..1.0)).collect();
        let tau = 0.3;
        let got = pair_diagnostics(&fps, &preds, &targets, tau).unwrap();

        let (mut count, mut err, mut signed, mut agree) = (0, 0.0, 0, 0);
        for i in 0..n {
            for j in i + 1..n {
                if tanimoto(&fps[i], &fps[j]) < tau {
                    continue;
                }
                count += 1;
                let (dp, dt) = (preds[i] - preds[j], targets[i] - targets[j]);
                err += (dp - dt).abs();
                if dt != 0.0 {
                    signed += 1;
                    if dp * dt > 0.0 {
                        agree += 1;
                    }
                }
            }
        }
        assert_eq!(got.n_pairs, count);
        if count > 0 {
            assert!((got.pair_mae.unwrap() - err / count as f64).abs() < 1e-12);
        }
        if signed > 0 {
            let frac = got.pair_sign_agreement.unwrap();
            assert_eq!(frac, agree as f64 / signed as f64);
            assert!((0.0..=1.0).contains(&frac));
        }
    }
}

#[test]
fn kde_overlap_matches_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let a: Vec<f64> = (0..rng.gen_range(10..80)).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..rng.gen_range(10..80)).map(|_| rng.gen_range(-1.0..3.0)).collect();
        let (ha, hb) = (silverman_bandwidth(&a).unwrap(), silverman_bandwidth(&b).unwrap());
        // midpoint rule on a wide, fine grid
        let (lo, hi, steps) = (-15.0, 15.0, 200_000);
        let dx = (hi - lo) / steps as f64;
        let dense: f64 = (0..steps)
            .map(|k| {
                let x = lo + (k as f64 + 0.5) * dx;
                gaussian_kde(&a, ha, x).min(gaussian_kde(&b, hb, x))
            })
            .sum::<f64>()
            * dx;
        let got = kde_overlap(&a, &b).unwrap();
        assert!((got - dense).abs() < 1e-3, "{got} vs {dense}");
    }
}

#[test]
fn spearman_matches_rank_then_pearson() {
    let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0, 5.5, 3.5];
    let y = [2.0, 7.0, 1.0, 8.0, 2.5, 8.5, 1.8, 2.8, 4.0, 5.9];
    // ranks by hand
    let rx = [4.0, 1.0, 6.0, 2.0, 7.0, 10.0, 3.0, 9.0, 8.0, 5.0];
    let ry = [3.0, 8.0, 1.0, 9.0, 4.0, 10.0, 2.0, 5.0, 6.0, 7.0];
    let mean = 5.5;
    let num: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let den: f64 = rx.iter().map(|a| (a - mean) * (a - mean)).sum();
    let want = num / den;
    assert!((spearman(&x, &y).unwrap() - want).abs() < 1e-12);
}

proptest! {
    #[test]
    fn wasserstein_obeys_triangle_inequality(
        abc in (2usize..40).prop_flat_map(|n| (
            proptest::collection::vec(-10.0f64..10.0, n),
            proptest::collection::vec(-10.0f64..10.0, n),
            proptest::collection::vec(-10.0f64..10.0, n),
        ))
    ) {
        let (a, b, c) = abc;
        let ab = wasserstein1(&a, &b).unwrap();
        let bc = wasserstein1(&b, &c).unwrap();
        let ac = wasserstein1(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!((ab - wasserstein1(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn overlaps_are_fractions(
        a in proptest::collection::vec(-5.0f64..5.0, 3..50),
        b in proptest::collection::vec(-5.0f64..5.0, 3..50),
    ) {
        if let Some(o) = kde_overlap(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&o));
        }
    }
}
