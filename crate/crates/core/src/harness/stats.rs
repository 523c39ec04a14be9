//! Summary statistics and paired significance tests over per-seed results.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{AmiError, Result};

/// Mean, sample std and the half-width of the 95% t-interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
    /// Fewer than two samples: the interval is reported as zero width.
    pub degenerate: bool,
}

/// Two-sided 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            std: 0.0,
            ci95: 0.0,
            degenerate: true,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Summary {
            n,
            mean,
            std: 0.0,
            ci95: 0.0,
            degenerate: true,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    Summary {
        n,
        mean,
        std,
        ci95: t_quantile_975(n - 1) * std / (n as f64).sqrt(),
        degenerate: false,
    }
}

/// Paired t-test and Wilcoxon signed-rank test of `a` against `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    /// `None` when every difference is identical (zero variance).
    pub t: Option<f64>,
    pub df: usize,
    pub p_two_sided: f64,
    /// `P(T >= t)`: evidence that `a` exceeds `b`.
    pub p_greater: f64,
    pub wilcoxon_w: f64,
    pub wilcoxon_p: f64,
    /// Set when the differences have zero variance.
    pub flagged: bool,
}

pub fn paired_tests(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(AmiError::Pairing(format!(
            "paired tests need equal lengths >= 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let s = summarize(&d);
    let df = n - 1;
    let (t, p_two, p_greater, flagged) = if s.std == 0.0 {
        if s.mean == 0.0 {
            (None, 1.0, 1.0, true)
        } else {
            let greater = if s.mean > 0.0 { 0.0 } else { 1.0 };
            (None, 0.0, greater, true)
        }
    } else {
        let t = s.mean / (s.std / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
        let p_two = (2.0 * dist.cdf(-t.abs())).min(1.0);
        (Some(t), p_two, dist.sf(t), false)
    };
    let (w, wp) = wilcoxon_signed_rank(&d);
    Ok(PairedTest {
        n,
        mean_diff: s.mean,
        t,
        df,
        p_two_sided: p_two,
        p_greater,
        wilcoxon_w: w,
        wilcoxon_p: wp,
        flagged,
    })
}

/// Average ranks (1-based) of `|d|`, ties sharing their mean rank.
fn abs_ranks(d: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on differences. Zero differences are
/// dropped. Returns `(W, p)` with `W = min(W+, W-)`; the p-value is exact
/// for up to 25 non-zero differences and a normal approximation otherwise.
pub fn wilcoxon_signed_rank(d: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let ranks = abs_ranks(&nz);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);
    if n <= 25 {
        // exact null distribution of W+ over sign flips, on doubled ranks so
        // tied half-ranks stay integral
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let w2 = (2.0 * w).round() as usize;
        let tail: f64 = counts[..=w2].iter().sum::<f64>() / all;
        (w, (2.0 * tail).min(1.0))
    } else {
        let mut tie = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
            tie += (j * j * j - j) as f64;
            i += j;
        }
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
        let z = (w - mean) / var.sqrt();
        let normal = Normal::standard();
        (w, (2.0 * normal.cdf(-z.abs())).min(1.0))
    }
}
