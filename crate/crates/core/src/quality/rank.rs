use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cmp_f, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau: f64,
    /// Two-sided p-value from the tie-adjusted normal approximation.
    pub p_value: f64,
    pub n: usize,
}

/// Sizes of runs of equal values in an already sorted slice.
fn tie_groups<T: Scalar>(sorted: &[T]) -> Vec<u64> {
    let mut groups = Vec::new();
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            if run > 1 {
                groups.push(run);
            }
            run = 1;
        }
    }
    if run > 1 {
        groups.push(run);
    }
    groups
}

fn pairs(t: u64) -> u64 {
    t * (t - 1) / 2
}

/// Merge sort on `v`, returning the number of inversions (strictly
/// decreasing pairs).
fn sort_counting_swaps<T: Scalar>(v: &mut [T], buf: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b with tie correction, O(n log n).
pub fn kendall_tau<T: Scalar>(x: &[T], y: &[T]) -> Result<TauResult> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Shape(format!("kendall_tau: {} vs {} values", n, y.len())));
    }
    if n < 2 {
        return Err(Error::UndefinedTau(format!("needs at least 2 observations, got {n}")));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::invalid("kendall_tau: NaN input"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_f(&x[a], &x[b]).then(cmp_f(&y[a], &y[b])));
    let xs: Vec<T> = order.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<T> = order.iter().map(|&i| y[i]).collect();

    let x_ties = tie_groups(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
            run += 1;
        } else {
            joint += pairs(run);
            run = 1;
        }
    }
    joint += pairs(run);

    let mut buf = ys.clone();
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let y_ties = tie_groups(&ys);

    let n0 = pairs(n as u64);
    let n1: u64 = x_ties.iter().map(|&t| pairs(t)).sum();
    let n2: u64 = y_ties.iter().map(|&t| pairs(t)).sum();
    if n1 == n0 || n2 == n0 {
        return Err(Error::UndefinedTau("one argument is constant".into()));
    }
    // concordant - discordant
    let s = n0 as i128 - n1 as i128 - n2 as i128 + joint as i128 - 2 * swaps as i128;
    let s = s as f64;
    let tau = s / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();

    let nf = n as f64;
    let v = |ties: &[u64], f: &dyn Fn(f64) -> f64| ties.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let vt = v(&x_ties, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = v(&y_ties, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = v(&x_ties, &|t| t * (t - 1.0)) * v(&y_ties, &|t| t * (t - 1.0)) / (2.0 * nf * (nf - 1.0));
    let v2 = if n > 2 {
        v(&x_ties, &|t| t * (t - 1.0) * (t - 2.0)) * v(&y_ties, &|t| t * (t - 1.0) * (t - 2.0))
            / (9.0 * nf * (nf - 1.0) * (nf - 2.0))
    } else {
        0.0
    };
    let var = (v0 - vt - vu) / 18.0 + v1 + v2;
    let p_value = if var > 0.0 {
        let z = s / var.sqrt();
        statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(TauResult {
        tau: tau.clamp(-1.0, 1.0),
        p_value,
        n,
    })
}

fn top_k_indices<T: Scalar>(scores: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| cmp_f(&scores[b], &scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Fraction of the `k` highest-scoring ids shared by both score vectors.
/// Ties are broken by ascending id (index).
pub fn top_k_overlap<T: Scalar>(scores_a: &[T], scores_b: &[T], k: usize) -> Result<f64> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::Shape(format!("{} vs {} scores", scores_a.len(), scores_b.len())));
    }
    if k == 0 {
        return Err(Error::invalid("top-k overlap needs k >= 1"));
    }
    if k > scores_a.len() {
        return Err(Error::invalid(format!("k = {k} exceeds {} ids", scores_a.len())));
    }
    if scores_a.iter().chain(scores_b).any(|v| v.is_nan()) {
        return Err(Error::invalid("top-k overlap: NaN score"));
    }
    let a = top_k_indices(scores_a, k);
    let mut b = top_k_indices(scores_b, k);
    b.sort_unstable();
    let shared = a.iter().filter(|i| b.binary_search(i).is_ok()).count();
    Ok(shared as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_concordance_and_discordance() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().tau, 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().tau, -1.0);
    }

    #[test]
    fn one_swap_in_four() {
        // 6 pairs, 5 concordant, 1 discordant
        let t = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t.tau - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(t.n, 4);
    }

    #[test]
    fn constant_argument_is_undefined() {
        assert!(matches!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedTau(_))));
        assert!(kendall_tau(&[1.0f64], &[1.0]).is_err());
    }

    #[test]
    fn p_value_matches_reference() {
        // scipy.stats.kendalltau([1..10], [2,1,4,3,6,5,8,7,10,9], method="asymptotic")
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 10.0, 9.0];
        let t = kendall_tau(&x, &y).unwrap();
        assert!((t.tau - 0.7777777777777778).abs() < 1e-12);
        assert!((t.p_value - 0.001745118699528905).abs() < 1e-9, "{}", t.p_value);
        // with ties on both sides
        let t = kendall_tau(&[1.0, 1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 5.0], &[3.0, 1.0, 2.0, 2.0, 5.0, 4.0, 4.0, 6.0]).unwrap();
        assert!((t.tau - 0.6275716324421889).abs() < 1e-12);
        assert!((t.p_value - 0.03976046290022913).abs() < 1e-9, "{}", t.p_value);
    }

    #[test]
    fn top_k_examples() {
        let a = [9.0, 8.0, 7.0, 1.0, 1.0];
        let b = [9.0, 1.0, 7.0, 8.0, 1.0];
        assert!((top_k_overlap(&a, &b, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let s: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(top_k_overlap(&s, &s, 5).unwrap(), 1.0);
        let r: Vec<f64> = s.iter().map(|v| -v).collect();
        assert_eq!(top_k_overlap(&s, &r, 5).unwrap(), 0.0);
        assert!(top_k_overlap(&s, &s, 0).is_err());
        assert!(top_k_overlap(&s, &s, 11).is_err());
    }
}
