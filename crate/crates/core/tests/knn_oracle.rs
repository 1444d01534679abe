use halluscope::scorer::{build_safe_bank, fuse, knn_score, Monitor};
use halluscope::{DepthRatio, Fusion, Matrix, MonitorConfig, QualityTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight per-row loop: normalize, squared distance in channel order,
/// sort, take the k-th.
fn brute_force<T: halluscope::Scalar>(z: &[T], rows: &[Vec<T>], k: usize) -> T {
    fn unit<T: halluscope::Scalar>(v: &[T]) -> Vec<T> {
        let mut s = T::zero();
        for &x in v {
            s += x * x;
        }
        let n = s.sqrt();
        v.iter().map(|&x| x / n).collect()
    }
    let u = unit(z);
    let mut d: Vec<T> = rows
        .iter()
        .map(|r| {
            let b = unit(r);
            let mut s = T::zero();
            for c in 0..u.len() {
                let t = u[c] - b[c];
                s += t * t;
            }
            s.sqrt()
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    T::zero() - d[k - 1]
}

fn quality(n: usize, rng: &mut ChaCha8Rng) -> QualityTable {
    let mut q = QualityTable::new((0..n).map(|i| format!("s{i}")).collect()).unwrap();
    q.add_metric("ms_ssim", (0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
    q
}

fn random_rows<T: halluscope::Scalar>(m: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    (0..m)
        .map(|_| (0..c).map(|_| T::lit(rng.random::<f64>() * 2.0 - 1.0)).collect())
        .collect()
}

fn check_instances<T: halluscope::Scalar>(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ks = [1usize, 10, 25, 50, 100, 200];
    for _ in 0..100 {
        let m = rng.random_range(1..=200usize);
        let c = rng.random_range(1..=64usize);
        let rows = random_rows::<T>(m, c, &mut rng);
        let q = quality(m, &mut rng);
        let bank = build_safe_bank(DepthRatio::LAST, &Matrix::from_rows(&rows).unwrap(), &q, &["ms_ssim".into()], 0.0)
            .unwrap();
        let z = random_rows::<T>(1, c, &mut rng).remove(0);
        for &k in ks.iter().filter(|&&k| k <= m) {
            assert_eq!(knn_score(&z, &bank, k).unwrap(), brute_force(&z, &rows, k), "m={m} c={c} k={k}");
        }
    }
}

#[test]
fn knn_matches_brute_force_f32() {
    check_instances::<f32>(11);
}

#[test]
fn knn_matches_brute_force_f64() {
    check_instances::<f64>(12);
}

#[test]
fn batch_scoring_matches_per_feature_scoring() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, c) = (150, 24);
    let rows = random_rows::<f32>(m, c, &mut rng);
    let q = quality(m, &mut rng);
    let bank = build_safe_bank(DepthRatio::LAST, &Matrix::from_rows(&rows).unwrap(), &q, &["ms_ssim".into()], 0.25)
        .unwrap();
    let monitor = Monitor::from_bank(MonitorConfig::knn(DepthRatio::LAST, 0.25, 7, 1.5, vec!["ms_ssim".into()]), bank, 0)
        .unwrap();
    let queries = Matrix::from_rows(&random_rows::<f32>(37, c, &mut rng)).unwrap();
    let ids: Vec<String> = (0..37).map(|i| format!("q{i}")).collect();
    let batch = monitor.score_batch(&queries, &ids).unwrap();
    let mut scratch = Vec::new();
    for (i, row) in queries.iter_rows().enumerate() {
        assert_eq!(batch[i], monitor.score_feature(row, &mut scratch).unwrap());
        let fnorm = row.iter().map(|v| v * v).sum::<f32>().sqrt() as f64;
        let d = knn_score(row, &monitor.bank, 7).unwrap() as f64;
        assert_eq!(batch[i], fuse(d, fnorm, 1.5, Fusion::Product).unwrap());
    }
}

#[test]
fn zero_gamma_product_is_plain_knn() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows = random_rows::<f64>(60, 16, &mut rng);
    let q = quality(60, &mut rng);
    let bank = build_safe_bank(DepthRatio::LAST, &Matrix::from_rows(&rows).unwrap(), &q, &["ms_ssim".into()], 0.0)
        .unwrap();
    let monitor = Monitor::from_bank(MonitorConfig::knn(DepthRatio::LAST, 0.0, 5, 0.0, vec!["ms_ssim".into()]), bank, 0)
        .unwrap();
    let mut scratch = Vec::new();
    for z in random_rows::<f64>(20, 16, &mut rng) {
        assert_eq!(monitor.score_feature(&z, &mut scratch).unwrap(), knn_score(&z, &monitor.bank, 5).unwrap());
    }
}

#[test]
fn untruncated_bank_is_the_whole_calibration_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = random_rows::<f32>(90, 8, &mut rng);
    let q = quality(90, &mut rng);
    let bank = build_safe_bank(DepthRatio::LAST, &Matrix::from_rows(&rows).unwrap(), &q, &["ms_ssim".into()], 0.0)
        .unwrap();
    assert_eq!(bank.source_ids(), q.sample_ids());
    for (i, r) in rows.iter().enumerate() {
        let n = r.iter().map(|v| v * v).sum::<f32>().sqrt();
        let u: Vec<f32> = r.iter().map(|v| v / n).collect();
        assert_eq!(bank.unit_vectors().row(i), u.as_slice());
        assert_eq!(bank.norms()[i], n);
    }
}

#[test]
fn bank_members_score_zero_with_first_neighbour() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows = random_rows::<f64>(40, 12, &mut rng);
    let q = quality(40, &mut rng);
    let bank = build_safe_bank(DepthRatio::LAST, &Matrix::from_rows(&rows).unwrap(), &q, &["ms_ssim".into()], 0.5)
        .unwrap();
    for (i, id) in q.sample_ids().iter().enumerate() {
        let score = knn_score(&rows[i], &bank, 1).unwrap();
        if bank.source_ids().contains(id) {
            assert_eq!(score, 0.0);
        } else {
            assert!(score < 0.0);
        }
    }
}
