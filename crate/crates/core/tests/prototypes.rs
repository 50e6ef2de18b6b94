use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfae::linalg::pairwise_dists;
use rfae::prototypes::{build_dissimilarity, kmedoids_classwise, pam, total_deviation};

fn exhaustive(d: &Array2<f64>, k: usize) -> f64 {
    fn rec(d: &Array2<f64>, k: usize, start: usize, cur: &mut Vec<usize>, best: &mut f64) {
        if cur.len() == k {
            *best = best.min(total_deviation(d.view(), cur));
            return;
        }
        for m in start..d.nrows() {
            cur.push(m);
            rec(d, k, m + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(d, k, 0, &mut Vec::new(), &mut best);
    best
}

fn swap_locally_optimal(d: &Array2<f64>, medoids: &[usize]) -> bool {
    let base = total_deviation(d.view(), medoids);
    for slot in 0..medoids.len() {
        for o in 0..d.nrows() {
            if medoids.contains(&o) {
                continue;
            }
            let mut m = medoids.to_vec();
            m[slot] = o;
            if total_deviation(d.view(), &m) < base - 1e-12 {
                return false;
            }
        }
    }
    true
}

/// Two tight clumps far apart, `n` points in total.
fn clumps(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut x = Array2::zeros((n, 2));
    for i in 0..n {
        let centre = if i % 2 == 0 { 0.0 } else { 50.0 };
        x[[i, 0]] = centre + rng.random_range(-1.0..1.0);
        x[[i, 1]] = centre + rng.random_range(-1.0..1.0);
    }
    pairwise_dists(x.view(), x.view())
}

#[test]
fn pam_finds_the_exhaustive_optimum_on_clumps() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..200 {
        let n = rng.random_range(4..=10);
        let d = clumps(n, &mut rng);
        for k in 1..=2 {
            let r = pam(d.view(), k, 1000).unwrap();
            let opt = exhaustive(&d, k);
            assert!((r.loss - opt).abs() <= 1e-9 * opt.max(1.0), "trial {trial} k {k}: {} vs {opt}", r.loss);
            assert!(swap_locally_optimal(&d, &r.medoids));
        }
    }
}

#[test]
fn class_wise_medoids_stay_inside_their_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 30;
    let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(0.0..1.0));
    let dist = pairwise_dists(x.view(), x.view());
    let sim = dist.mapv(|v: f64| (-v).exp());
    let d = build_dissimilarity(sim.view()).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let set = kmedoids_classwise(&d, &labels, 3, 7).unwrap();
    assert_eq!(set.indices.len(), 7);
    assert_eq!(set.per_class.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 2]);
    for (c, ms) in set.per_class.iter().enumerate() {
        assert!(ms.iter().all(|&m| labels[m] == c));
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let sub = d.values.select(ndarray::Axis(0), &members).select(ndarray::Axis(1), &members);
        let local: Vec<usize> = ms.iter().map(|m| members.iter().position(|x| x == m).unwrap()).collect();
        assert!(swap_locally_optimal(&sub, &local));
    }
    assert!(kmedoids_classwise(&d, &labels, 3, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pam_is_swap_locally_optimal(seed in any::<u64>(), n in 3usize..14, k in 1usize..5) {
        prop_assume!(k < n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..10.0));
        let d = pairwise_dists(x.view(), x.view());
        let r = pam(d.view(), k, 10_000).unwrap();
        prop_assert_eq!(r.medoids.len(), k);
        prop_assert!(swap_locally_optimal(&d, &r.medoids));
        prop_assert!((r.loss - total_deviation(d.view(), &r.medoids)).abs() < 1e-9);
        for w in r.loss_trace.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        prop_assert!(r.loss >= exhaustive(&d, k) - 1e-9);
    }
}
