//! One-way ANOVA and Bonferroni-corrected pairwise Welch t-tests.
//!
//! Tail probabilities go through the regularized incomplete beta function:
//! `P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)` and, for the two-sided t-test,
//! `P(|T| > t) = I_{v/(v + t^2)}(v/2, 1/2)`.

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator); zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Upper tail of the F distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_infinite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// Two-sided tail of Student's t distribution.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

pub fn one_way_anova(groups: &[&[f64]]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::Degenerate("ANOVA needs at least two groups".into()));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Degenerate("every ANOVA group needs at least two values".into()));
    }
    let total: usize = groups.iter().map(|g| g.len()).sum();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / total as f64;
    let all_equal = means.windows(2).all(|w| w[0] == w[1]);
    let ss_between = if all_equal {
        0.0
    } else {
        groups.iter().zip(&means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum()
    };
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    // equal means give F = 0, p = 1 even when every group is constant
    let f = if ss_between == 0.0 {
        0.0
    } else if ss_within == 0.0 {
        f64::INFINITY
    } else {
        (ss_between / df_between as f64) / (ss_within / df_within as f64)
    };
    Ok(Anova { f, p: f_sf(f, df_between as f64, df_within as f64), df_between, df_within })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate("t-test groups need at least two values".into()));
    }
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    if va == 0.0 && vb == 0.0 {
        if ma == mb {
            return Ok(WelchTest { t: 0.0, df: (a.len() + b.len() - 2) as f64, p: 1.0 });
        }
        return Err(Error::Degenerate("both groups have zero variance".into()));
    }
    let t = if ma == mb { 0.0 } else { (ma - mb) / (va + vb).sqrt() };
    let df = (va + vb).powi(2)
        / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    Ok(WelchTest { t, df, p: t_two_sided(t, df) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTest {
    pub t: f64,
    pub df: f64,
    pub raw_p: f64,
    pub corrected_p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseResult {
    pub first: usize,
    pub second: usize,
    /// `None` when both groups have zero variance.
    pub test: Option<PairTest>,
}

/// Welch test for every unordered pair, Bonferroni-corrected over
/// `k (k - 1) / 2` comparisons.
pub fn pairwise_ttests(groups: &[&[f64]], alpha: f64) -> Result<Vec<PairwiseResult>> {
    let k = groups.len();
    let m = (k * k.saturating_sub(1) / 2).max(1) as f64;
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let test = match welch_t_test(groups[i], groups[j]) {
                Ok(w) => {
                    let corrected_p = (w.p * m).min(1.0);
                    Some(PairTest { t: w.t, df: w.df, raw_p: w.p, corrected_p, significant: corrected_p < alpha })
                }
                Err(Error::Degenerate(_)) if groups[i].len() >= 2 && groups[j].len() >= 2 => None,
                Err(e) => return Err(e),
            };
            out.push(PairwiseResult { first: i, second: j, test });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceReport {
    pub names: Vec<String>,
    pub alpha: f64,
    pub comparisons: usize,
    pub anova: Option<Anova>,
    pub pairs: Vec<PairwiseResult>,
}

impl SignificanceReport {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairTest> {
        let ia = self.names.iter().position(|n| n == a)?;
        let ib = self.names.iter().position(|n| n == b)?;
        let (lo, hi) = (ia.min(ib), ia.max(ib));
        self.pairs
            .iter()
            .find(|p| p.first == lo && p.second == hi)
            .and_then(|p| p.test.as_ref())
    }
}

/// ANOVA over all groups followed by the corrected pairwise matrix. The ANOVA
/// is omitted when there are fewer than two groups or a group has fewer than
/// two values.
pub fn significance_report(named: &[(&str, &[f64])], alpha: f64) -> Result<SignificanceReport> {
    let groups: Vec<&[f64]> = named.iter().map(|(_, g)| *g).collect();
    let anova = match one_way_anova(&groups) {
        Ok(a) => Some(a),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let pairs = if groups.iter().all(|g| g.len() >= 2) {
        pairwise_ttests(&groups, alpha)?
    } else {
        Vec::new()
    };
    Ok(SignificanceReport {
        names: named.iter().map(|(n, _)| n.to_string()).collect(),
        alpha,
        comparisons: named.len() * named.len().saturating_sub(1) / 2,
        anova,
        pairs,
    })
}
