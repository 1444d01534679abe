use halluscope::scorer::variants::{GmmModel, OtbBox, ResidualModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn unit_rows(m: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let v: Vec<f64> = (0..dim)
                .map(|c| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    e * (1.0 + c as f64) + 2.0
                })
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

#[test]
fn single_component_mixture_is_the_gaussian_density() {
    let rows = unit_rows(300, 6, 1);
    let g = GmmModel::fit(&rows, 1, 0).unwrap();
    let m = rows.len() as f64;
    let dim = rows[0].len();
    let mean: Vec<f64> = (0..dim).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / m).collect();
    let var: Vec<f64> = (0..dim)
        .map(|c| (rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / m).max(1e-6))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let want: f64 = (0..dim)
            .map(|c| -0.5 * ((2.0 * std::f64::consts::PI).ln() + var[c].ln() + (x[c] - mean[c]).powi(2) / var[c]))
            .sum();
        let got = g.log_likelihood(&x);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

#[test]
fn residual_energy_splits_into_projection_and_residual() {
    let rows = unit_rows(200, 10, 3);
    for r in [0.8, 0.9, 0.95, 0.99] {
        let model = ResidualModel::fit(&rows, r).unwrap();
        for x in unit_rows(30, 10, 4) {
            let (proj, resid) = model.decompose(&x);
            let total: f64 = x.iter().zip(&model.mean).map(|(a, b)| (a - b).powi(2)).sum();
            let parts: f64 = proj.iter().map(|v| v * v).sum::<f64>() + resid.iter().map(|v| v * v).sum::<f64>();
            assert!(((parts - total) / total).abs() < 1e-5);
            let score = model.score(&x);
            assert_eq!(score, -resid.iter().map(|v| v.abs()).sum::<f64>());
        }
    }
}

#[test]
fn full_box_contains_every_bank_member() {
    let rows = unit_rows(120, 16, 5);
    let b = OtbBox::fit(&rows, 1.0).unwrap();
    assert!(rows.iter().all(|r| b.score(r) == 1.0));
    let narrow = OtbBox::fit(&rows, 0.5).unwrap();
    assert!(rows.iter().any(|r| narrow.score(r) < 1.0));
}
