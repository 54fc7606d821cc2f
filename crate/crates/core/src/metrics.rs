//! Agreement statistics between predicted and observed fitness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(pred: &[f64], actual: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::Dimension {
            expected: pred.len(),
            got: actual.len(),
        });
    }
    if pred.len() < min_len {
        return Err(Error::Empty("paired samples"));
    }
    if pred.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::Config("metrics need finite values".into()));
    }
    Ok(())
}

pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual, 1)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Coefficient of determination of `pred` as a predictor of `actual`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual, 2)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("r squared of constant observations"));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Pairs sharing a value in each maximal run of equal elements.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total
}

/// Merge sort that returns the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
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

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall_tau(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual, 2)?;
    let n = pred.len() as u64;
    let mut pairs: Vec<(f64, f64)> = pred.iter().copied().zip(actual.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let tie_x = tied_pairs(&xs);
    let tie_xy = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let tie_y = tied_pairs(&ys);
    let total = n * (n - 1) / 2;
    if tie_x == total || tie_y == total {
        return Err(Error::Undefined("kendall tau with an all-tied ranking"));
    }
    // C − D = total − T_x − T_y + T_xy − 2·D
    let numerator = total as f64 - tie_x as f64 - tie_y as f64 + tie_xy as f64 - 2.0 * swaps as f64;
    let denominator = ((total - tie_x) as f64 * (total - tie_y) as f64).sqrt();
    Ok((numerator / denominator).clamp(-1.0, 1.0))
}

/// The three agreement statistics; each is `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurrogateQuality {
    pub pairs: usize,
    pub mse: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub r_squared: Option<f64>,
}

impl SurrogateQuality {
    pub fn from_pairs(pred: &[f64], actual: &[f64]) -> SurrogateQuality {
        SurrogateQuality {
            pairs: pred.len().min(actual.len()),
            mse: mse(pred, actual).ok(),
            kendall_tau: kendall_tau(pred, actual).ok(),
            r_squared: r_squared(pred, actual).ok(),
        }
    }
}
