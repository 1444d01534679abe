use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_TOLERANCE: f64 = 1e-6;
pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Mean training log-likelihood after each EM iteration.
    pub trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// k-means++ seeding: indices of the chosen centers.
fn kmeans_pp(rows: &[Vec<f64>], c: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = rows.len();
    let mut centers = vec![rng.random_range(0..m)];
    let mut best: Vec<f64> = rows.iter().map(|r| sq_dist(r, &rows[centers[0]])).collect();
    while centers.len() < c {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, d) in best.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All points coincide with a center; fall back to unused indices.
            (0..m).find(|i| !centers.contains(i)).unwrap_or(0)
        };
        centers.push(next);
        for (b, r) in best.iter_mut().zip(rows) {
            *b = b.min(sq_dist(r, &rows[next]));
        }
    }
    centers
}

impl GmmModel {
    /// Per-component log of weight times density.
    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ((v, mu), var) in x.iter().zip(&self.means[j]).zip(&self.variances[j]) {
                let d = v - mu;
                acc += var.ln() + d * d / var;
            }
            *o = self.weights[j].ln() - 0.5 * (x.len() as f64 * LN_2PI + acc);
        }
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.weights.len()];
        self.component_log_densities(x, &mut buf);
        log_sum_exp(&buf)
    }

    pub fn score(&self, unit: &[f64]) -> f64 {
        self.log_likelihood(unit)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn fit(rows: &[Vec<f64>], components: usize, seed: u64) -> Result<Self> {
        let m = rows.len();
        if components == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if m < components {
            return Err(Error::Infeasible(format!(
                "mixture with {components} components needs at least as many samples, bank has {m}"
            )));
        }
        let dim = rows[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = kmeans_pp(rows, components, &mut rng);

        // Hard assignment to the seeded centers initializes the parameters.
        let mut resp = vec![vec![0.0; components]; m];
        for (i, r) in rows.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, &c) in centers.iter().enumerate() {
                let d = sq_dist(r, &rows[c]);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            resp[i][best] = 1.0;
        }
        let mut model = GmmModel {
            weights: vec![1.0 / components as f64; components],
            means: centers.iter().map(|&c| rows[c].clone()).collect(),
            variances: vec![vec![1.0; dim]; components],
            trace: Vec::new(),
        };
        model.m_step(rows, &resp);

        let mut prev = model.e_step(rows, &mut resp);
        for _ in 0..MAX_ITERATIONS {
            model.m_step(rows, &resp);
            let ll = model.e_step(rows, &mut resp);
            model.trace.push(ll);
            let slack = 1e-9 * prev.abs().max(1.0);
            if ll < prev - slack {
                return Err(Error::Invariant(format!(
                    "mixture log-likelihood decreased from {prev} to {ll}"
                )));
            }
            let converged = (ll - prev).abs() <= RELATIVE_TOLERANCE * prev.abs().max(f64::MIN_POSITIVE);
            prev = ll;
            if converged {
                break;
            }
        }
        Ok(model)
    }

    /// Fills responsibilities and returns the mean log-likelihood.
    fn e_step(&self, rows: &[Vec<f64>], resp: &mut [Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (r, out) in rows.iter().zip(resp.iter_mut()) {
            self.component_log_densities(r, out);
            let lse = log_sum_exp(out);
            total += lse;
            out.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        total / rows.len() as f64
    }

    fn m_step(&mut self, rows: &[Vec<f64>], resp: &[Vec<f64>]) {
        let m = rows.len() as f64;
        for j in 0..self.weights.len() {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            self.weights[j] = nk / m;
            if nk <= 0.0 {
                continue;
            }
            let mean = &mut self.means[j];
            mean.iter_mut().for_each(|v| *v = 0.0);
            for (row, r) in rows.iter().zip(resp) {
                if r[j] != 0.0 {
                    for (a, x) in mean.iter_mut().zip(row) {
                        *a += r[j] * x;
                    }
                }
            }
            mean.iter_mut().for_each(|v| *v /= nk);
            let var = &mut self.variances[j];
            var.iter_mut().for_each(|v| *v = 0.0);
            for (row, r) in rows.iter().zip(resp) {
                if r[j] != 0.0 {
                    for ((a, x), mu) in var.iter_mut().zip(row).zip(mean.iter()) {
                        *a += r[j] * (x - mu) * (x - mu);
                    }
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / nk).max(VARIANCE_FLOOR));
        }
    }
}
