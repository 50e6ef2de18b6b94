use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfae::evaluation::*;
use rfae::linalg::pairwise_dists;

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0..1.0))
}

/// Indices of the `k` smallest entries, ties by index, by full sort.
fn naive_neighbours(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// 1-based rank of column `j` in `row`.
fn naive_rank(row: &[f64], j: usize) -> usize {
    1 + (0..row.len()).filter(|&c| row[c] < row[j] || (row[c] == row[j] && c < j)).count()
}

fn naive_qnx(t: &Array2<f64>, e: &Array2<f64>, k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..t.nrows() {
        let nt = naive_neighbours(t.row(i).as_slice().unwrap(), k);
        let ne = naive_neighbours(e.row(i).as_slice().unwrap(), k);
        total += ne.iter().filter(|j| nt.contains(j)).count() as f64 / k as f64;
    }
    total / t.nrows() as f64
}

fn naive_trust(t: &Array2<f64>, e: &Array2<f64>, k: usize) -> f64 {
    let n_train = t.ncols() as f64;
    let mut sum = 0.0;
    for i in 0..t.nrows() {
        let tr = t.row(i).to_vec();
        let nt = naive_neighbours(&tr, k);
        for j in naive_neighbours(e.row(i).as_slice().unwrap(), k) {
            if !nt.contains(&j) {
                sum += naive_rank(&tr, j) as f64 - k as f64;
            }
        }
    }
    let kf = k as f64;
    1.0 - 2.0 / (t.nrows() as f64 * kf * (2.0 * n_train - 3.0 * kf - 1.0)) * sum
}

fn naive_avg_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let eq = v.iter().filter(|&&y| y == x).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn naive_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let n0 = (n * (n - 1) / 2) as f64;
    let tie_pairs = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let mut pairs = 0.0;
        let mut i = 0;
        while i < s.len() {
            let mut j = i;
            while j < s.len() && s[j] == s[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            pairs += t * (t - 1.0) / 2.0;
            i = j;
        }
        pairs
    };
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..i {
            s += ((a[i] - a[j]).signum() * (b[i] - b[j]).signum()) * if a[i] == a[j] || b[i] == b[j] { 0.0 } else { 1.0 };
        }
    }
    s / ((n0 - tie_pairs(a)) * (n0 - tie_pairs(b))).sqrt()
}

#[test]
fn local_scores_match_brute_force() {
    for seed in 0..10 {
        let t = random(20, 30, seed);
        let e = random(20, 30, seed + 1000);
        for k in [1, 3, 5, 10] {
            assert!((qnx(t.view(), e.view(), k).unwrap() - naive_qnx(&t, &e, k)).abs() < 1e-12);
            assert!((trustworthiness(t.view(), e.view(), k).unwrap() - naive_trust(&t, &e, k)).abs() < 1e-12);
        }
    }
}

#[test]
fn local_scores_with_ties_match_brute_force() {
    let t = random(20, 30, 7).mapv(|v| (v * 4.0).floor());
    let e = random(20, 30, 8).mapv(|v| (v * 4.0).floor());
    for k in [2, 5] {
        assert!((qnx(t.view(), e.view(), k).unwrap() - naive_qnx(&t, &e, k)).abs() < 1e-12);
        assert!((trustworthiness(t.view(), e.view(), k).unwrap() - naive_trust(&t, &e, k)).abs() < 1e-12);
    }
}

#[test]
fn identical_matrices_score_one() {
    for seed in 0..50 {
        let t = random(8, 20, seed);
        assert_eq!(qnx(t.view(), t.view(), 4).unwrap(), 1.0);
        assert_eq!(trustworthiness(t.view(), t.view(), 4).unwrap(), 1.0);
    }
}

#[test]
fn trust_and_qnx_stay_in_unit_interval() {
    for seed in 0..1000 {
        let t = random(20, 30, seed);
        let e = random(20, 30, seed + 5000);
        let tr = trustworthiness(t.view(), e.view(), 5).unwrap();
        let q = qnx(t.view(), e.view(), 5).unwrap();
        assert!((0.0..=1.0).contains(&tr), "trust {tr}");
        assert!((0.0..=1.0).contains(&q), "qnx {q}");
    }
}

#[test]
fn global_scores_match_rank_then_pearson() {
    let t = random(10, 10, 1).mapv(|v| (v * 20.0).round());
    let e = random(10, 10, 2);
    let ft: Vec<f64> = t.iter().copied().collect();
    let fe: Vec<f64> = e.iter().copied().collect();
    let want = naive_pearson(&naive_avg_ranks(&ft), &naive_avg_ranks(&fe));
    assert!((spearman_score(t.view(), e.view()).unwrap() - want).abs() < 1e-12);
    assert!((pearson_score(t.view(), e.view()).unwrap() - naive_pearson(&ft, &fe)).abs() < 1e-12);
}

#[test]
fn kendall_matches_pair_counting() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // coarse values force ties
        let a: Vec<f64> = (0..12).map(|_| rng.random_range(0..5) as f64).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.random_range(0..5) as f64).collect();
        assert!((kendall_tau(&a, &b).unwrap() - naive_tau_b(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn replacement_rate_follows_correlation() {
    let x = random(10, 3, 0);
    let mut c = Array2::eye(3);
    c[[0, 1]] = 0.3;
    c[[1, 0]] = 0.3;
    c[[0, 2]] = -0.8;
    c[[2, 0]] = -0.8;
    let mut counts = [0usize; 3];
    let seeds = 1000;
    for seed in 0..seeds {
        let m = Perturber::new(x.view(), c.view(), seed).unwrap().mask(0);
        for j in 0..3 {
            counts[j] += m.column(j).iter().filter(|&&v| v).count();
        }
    }
    let total = (seeds as usize * 10) as f64;
    assert_eq!(counts[0] as f64, total);
    assert!((counts[1] as f64 / total - 0.3).abs() < 0.05);
    assert!((counts[2] as f64 / total - 0.8).abs() < 0.05);
}

/// Labels from a threshold on feature 0; features 1..4 are independent noise.
fn threshold_task(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let x = random(n, 4, seed);
    let y = x.column(0).iter().map(|&v| usize::from(v > 0.5)).collect();
    (x, y)
}

struct Threshold;

impl Classifier for Threshold {
    fn predict(&self, x: ndarray::ArrayView2<f64>) -> rfae::Result<Vec<usize>> {
        Ok(x.column(0).iter().map(|&v| usize::from(v > 0.5)).collect())
    }
}

#[test]
fn informative_feature_dominates_classification_importance() {
    let (x, y) = threshold_task(400, 1);
    let p = Perturber::new(x.view(), Array2::eye(4).view(), 3).unwrap();
    let c = classification_importances(&Threshold, x.view(), &y, &p).unwrap();
    // perfect accuracy drops to chance level 1/2 when feature 0 is shuffled
    assert!((c[0] - 0.5).abs() < 0.1, "{c:?}");
    assert_eq!(&c[1..], &[0.0, 0.0, 0.0]);
}

#[test]
fn random_labels_have_no_importance_on_average() {
    let mut total = 0.0;
    for seed in 0..100 {
        let x = random(60, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        let y: Vec<usize> = (0..60).map(|_| rng.random_range(0..2)).collect();
        let (tr, te) = (0..40, 40..60);
        let xt = x.slice(ndarray::s![tr.clone(), ..]);
        let xs = x.slice(ndarray::s![te.clone(), ..]);
        let clf = KnnClassifier::fit(xt, &y[tr], 2, None).unwrap();
        let p = Perturber::new(xs, Array2::eye(3).view(), seed).unwrap();
        let c = classification_importances(&clf, xs, &y[te], &p).unwrap();
        total += c.iter().sum::<f64>() / 3.0;
    }
    assert!((total / 100.0).abs() < 0.02, "mean importance {}", total / 100.0);
}

#[test]
fn distance_defining_feature_dominates_structural_importance() {
    // feature 0 spans [0, 10]; features 1..3 are small noise
    let mut x = random(80, 4, 5);
    x.column_mut(0).mapv_inplace(|v| v * 10.0);
    x.slice_mut(ndarray::s![.., 1..]).mapv_inplace(|v| v * 0.01);
    let (xt, xs) = (x.slice(ndarray::s![..60, ..]), x.slice(ndarray::s![60.., ..]));
    // embedding = feature 0 alone
    let zt = xt.slice(ndarray::s![.., ..1]);
    let zs = xs.slice(ndarray::s![.., ..1]);
    let d_emb = pairwise_dists(zs, zt);
    let p = Perturber::new(xs, Array2::eye(4).view(), 2).unwrap();
    let s = structural_importances(&ScoreKind::ALL, xt, xs, d_emb.view(), &p).unwrap();
    for (k, imp) in s.iter().enumerate() {
        for j in 1..4 {
            assert!(imp[0] > imp[j], "score {k}: {imp:?}");
        }
    }
    // unchanged distances give zero importance
    let ctx = ScoreContext::new(d_emb.view());
    let d = pairwise_dists(xs, xt);
    let a = ctx.scores(d.view(), &ScoreKind::ALL).unwrap();
    let b = ctx.scores(d.view(), &ScoreKind::ALL).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sia_is_bounded_and_deterministic() {
    let (x, y) = threshold_task(150, 9);
    let (xt, xs) = (x.slice(ndarray::s![..110, ..]), x.slice(ndarray::s![110.., ..]));
    let input = EvaluationInput {
        x_train: xt,
        y_train: &y[..110],
        x_test: xs,
        y_test: &y[110..],
        n_classes: 2,
        z_train: xt,
        z_test: xs,
    };
    let a = evaluate_embedding(&input, 4).unwrap();
    let b = evaluate_embedding(&input, 4).unwrap();
    assert_eq!(a.sia, b.sia);
    for v in [a.sia.qnx, a.sia.trust, a.sia.spearman, a.sia.pearson] {
        assert!((-1.0..=1.0).contains(&v));
    }
    assert!(a.knn_accuracy > 0.8);
}

proptest! {
    #[test]
    fn kendall_is_symmetric_and_antisymmetric(v in proptest::collection::vec(-100.0f64..100.0, 2..20), w in proptest::collection::vec(-100.0f64..100.0, 20)) {
        let w = &w[..v.len()];
        prop_assume!(v.iter().any(|x| *x != v[0]) && w.iter().any(|x| *x != w[0]));
        let t1 = kendall_tau(&v, w).unwrap();
        let t2 = kendall_tau(w, &v).unwrap();
        prop_assert!((t1 - t2).abs() < 1e-12);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert!((kendall_tau(&v, &neg).unwrap() + kendall_tau(&v, &v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn global_scores_ignore_positive_affine_maps(seed in 0u64..500, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let t = random(6, 7, seed);
        let e = random(6, 7, seed + 1);
        let e2 = e.mapv(|v| a * v + b);
        prop_assert!((pearson_score(t.view(), e.view()).unwrap() - pearson_score(t.view(), e2.view()).unwrap()).abs() < 1e-12);
        prop_assert!((spearman_score(t.view(), e.view()).unwrap() - spearman_score(t.view(), e2.view()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn knn_with_all_points_predicts_majority(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<usize> = (0..9).map(|_| rng.random_range(0..3)).collect();
        let d = random(4, 9, seed);
        let pred = knn_predict(d.view(), &y, 3, 9).unwrap();
        let counts: Array1<usize> = (0..3).map(|c| y.iter().filter(|&&v| v == c).count()).collect();
        let max = *counts.iter().max().unwrap();
        for p in pred {
            prop_assert_eq!(counts[p], max);
        }
    }
}
