use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorstore::Dataset;

/// Disjoint calibration / validation partition of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub fraction: f64,
    pub seed: u64,
    pub calib_ids: Vec<String>,
    pub val_ids: Vec<String>,
    /// Row indices into the source dataset, ascending.
    #[serde(skip)]
    pub calib_indices: Vec<usize>,
    #[serde(skip)]
    pub val_indices: Vec<usize>,
}

/// Seeded uniform split with `round(fraction * n)` validation samples. When
/// `strata` is given the validation quota is spread over strata by largest
/// remainder and drawn within each stratum.
pub fn split(ids: &[String], fraction: f64, seed: u64, strata: Option<&[String]>) -> Result<SplitAssignment> {
    let n = ids.len();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} samples")));
    }
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {n} samples leaves one side of the split empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_val = vec![false; n];
    match strata {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for &i in &order[..n_val] {
                is_val[i] = true;
            }
        }
        Some(keys) => {
            if keys.len() != n {
                return Err(Error::Alignment(format!("{} strata keys for {n} samples", keys.len())));
            }
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, k) in keys.iter().enumerate() {
                groups.entry(k.as_str()).or_default().push(i);
            }
            let exact: Vec<f64> = groups.values().map(|g| fraction * g.len() as f64).collect();
            let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
            let mut remaining = n_val - quota.iter().sum::<usize>();
            let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
            by_remainder.sort_by(|&a, &b| {
                let ra = exact[a] - exact[a].floor();
                let rb = exact[b] - exact[b].floor();
                rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            });
            for g in by_remainder.into_iter().cycle() {
                if remaining == 0 {
                    break;
                }
                let size = groups.values().nth(g).map_or(0, Vec::len);
                if quota[g] < size {
                    quota[g] += 1;
                    remaining -= 1;
                }
            }
            for (g, members) in groups.values().enumerate() {
                let mut members = members.clone();
                members.shuffle(&mut rng);
                for &i in &members[..quota[g]] {
                    is_val[i] = true;
                }
            }
        }
    }
    let (val_indices, calib_indices): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_val[i]);
    Ok(SplitAssignment {
        fraction,
        seed,
        calib_ids: calib_indices.iter().map(|&i| ids[i].clone()).collect(),
        val_ids: val_indices.iter().map(|&i| ids[i].clone()).collect(),
        calib_indices,
        val_indices,
    })
}

/// Splits a dataset, stratifying when the manifest carries strata.
pub fn split_dataset(dataset: &Dataset, fraction: f64, seed: u64) -> Result<SplitAssignment> {
    split(dataset.sample_ids(), fraction, seed, dataset.manifest.strata.as_deref())
}
