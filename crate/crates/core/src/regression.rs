//! Stepwise linear regression over corpus-shaped rating tables.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::t_two_sided;

/// Ratings with named numeric features, one row per rated presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTable {
    feature_names: Vec<String>,
    ratings: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl CorpusTable {
    pub fn new(feature_names: Vec<String>, ratings: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ratings.len() < 2 {
            return Err(Error::Corpus("a corpus needs at least two rows".into()));
        }
        if ratings.len() != rows.len() {
            return Err(Error::Corpus("ratings and feature rows differ in length".into()));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() || !seen.insert(name.as_str()) {
                return Err(Error::Corpus(format!("feature name `{name}` is empty or repeated")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::Corpus(format!("row {} has {} features, expected {}", i + 1, row.len(), feature_names.len())));
            }
        }
        if ratings.iter().chain(rows.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Corpus("all values must be finite".into()));
        }
        Ok(CorpusTable { feature_names, ratings, rows })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn ratings(&self) -> &[f64] {
        &self.ratings
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Corpus(format!("unknown feature `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Reads a CSV whose header is `rating` followed by feature names.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Corpus(format!("header: {e}")))?.clone();
        if header.get(0) != Some("rating") {
            return Err(Error::Corpus("first column of the header must be `rating`".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ratings = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Corpus(format!("row {line}: {e}")))?;
            if rec.len() != header.len() {
                return Err(Error::Corpus(format!("row {line}: expected {} columns, found {}", header.len(), rec.len())));
            }
            let mut values = Vec::with_capacity(rec.len());
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Corpus(format!("row {line}, column {} (`{}`): cannot parse `{field}`", j + 1, &header[j]))
                })?;
                values.push(v);
            }
            ratings.push(values[0]);
            rows.push(values[1..].to_vec());
        }
        CorpusTable::new(names, ratings, rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut header = vec!["rating".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).map_err(to_io)?;
        for (y, row) in self.ratings.iter().zip(&self.rows) {
            let mut rec = vec![y.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModel {
    pub coefficients: Vec<Coefficient>,
    pub intercept: f64,
    pub intercept_std_error: f64,
    pub r_squared: f64,
    pub n: usize,
    pub residual_df: usize,
}

impl FittedModel {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn selected(&self) -> Vec<&str> {
        self.coefficients.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.coefficients.is_empty() {
            out.push_str("selected features: none (intercept-only model)\n");
        } else {
            out.push_str(&format!("selected features: {}\n", self.selected().join(", ")));
        }
        out.push_str(&format!("{:<14} {:>10} {:>10} {:>9} {:>10}\n", "term", "estimate", "std.err", "t", "p"));
        out.push_str(&format!(
            "{:<14} {:>10.4} {:>10.4} {:>9} {:>10}\n",
            "(intercept)", self.intercept, self.intercept_std_error, "", ""
        ));
        for c in &self.coefficients {
            out.push_str(&format!(
                "{:<14} {:>10.4} {:>10.4} {:>9.3} {:>10.3e}\n",
                c.name, c.estimate, c.std_error, c.t, c.p
            ));
        }
        out.push_str(&format!("R^2 = {:.4}  (n = {})\n", self.r_squared, self.n));
        out
    }
}

fn coefficient_p(estimate: f64, se: f64, df: usize) -> (f64, f64) {
    if se > 0.0 {
        let t = estimate / se;
        (t, t_two_sided(t, df as f64))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        (estimate.signum() * f64::INFINITY, 0.0)
    }
}

/// Least squares with an intercept, solved through a QR decomposition of the
/// design matrix.
pub fn fit_ols(table: &CorpusTable, features: &[&str]) -> Result<FittedModel> {
    let n = table.len();
    let p = features.len() + 1;
    if n <= p {
        return Err(Error::Corpus(format!("{n} rows cannot support {} features plus an intercept", features.len())));
    }
    let columns = features.iter().map(|f| table.column(f)).collect::<Result<Vec<_>>>()?;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let y = DVector::from_column_slice(table.ratings());

    let qr = x.clone().qr();
    let r = qr.r();
    let collinear: Vec<String> = (0..p)
        .filter(|&j| r[(j, j)].abs() <= 1e-10 * x.column(j).norm().max(1.0))
        .map(|j| if j == 0 { "(intercept)".to_string() } else { features[j - 1].to_string() })
        .collect();
    if !collinear.is_empty() {
        return Err(Error::SingularDesign { columns: collinear });
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign { columns: features.iter().map(|f| f.to_string()).collect() })?;

    let residuals = &y - &x * &beta;
    let sse = residuals.norm_squared();
    let y_mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { (1.0 - sse / sst).clamp(0.0, 1.0) } else { 0.0 };

    let residual_df = n - p;
    let sigma2 = sse / residual_df as f64;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign { columns: features.iter().map(|f| f.to_string()).collect() })?;
    // (X'X)^-1 = R^-1 R^-T
    let cov_diag: Vec<f64> = (0..p).map(|j| r_inv.row(j).norm_squared() * sigma2).collect();

    let coefficients = features
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let estimate = beta[k + 1];
            let std_error = cov_diag[k + 1].sqrt();
            let (t, p) = coefficient_p(estimate, std_error, residual_df);
            Coefficient { name: name.to_string(), estimate, std_error, t, p }
        })
        .collect();
    Ok(FittedModel {
        coefficients,
        intercept: beta[0],
        intercept_std_error: cov_diag[0].sqrt(),
        r_squared,
        n,
        residual_df,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepwiseConfig {
    pub p_enter: f64,
    pub p_remove: f64,
    pub max_sweeps: usize,
}

impl Default for StepwiseConfig {
    fn default() -> Self {
        StepwiseConfig { p_enter: 0.01, p_remove: 0.05, max_sweeps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stepwise {
    pub model: FittedModel,
    pub trace: Vec<String>,
}

/// Forward selection with backward elimination. Each sweep adds the candidate
/// with the smallest p-value below `p_enter`, then drops the selected feature
/// with the largest p-value above `p_remove`; it stops when a sweep changes
/// nothing.
pub fn stepwise_select(table: &CorpusTable, cfg: &StepwiseConfig) -> Result<Stepwise> {
    if !(cfg.p_enter > 0.0 && cfg.p_enter <= cfg.p_remove && cfg.p_remove <= 1.0) {
        return Err(Error::InvalidConfig("stepwise thresholds need 0 < p_enter <= p_remove <= 1".into()));
    }
    let names: Vec<&str> = table.feature_names().iter().map(String::as_str).collect();
    let mut selected: Vec<&str> = Vec::new();
    let mut trace = Vec::new();

    for _ in 0..cfg.max_sweeps {
        let mut changed = false;

        let mut best: Option<(&str, f64)> = None;
        for &cand in names.iter().filter(|c| !selected.contains(c)) {
            let mut trial = selected.clone();
            trial.push(cand);
            let fit = match fit_ols(table, &trial) {
                Ok(f) => f,
                Err(Error::SingularDesign { .. }) | Err(Error::Corpus(_)) => continue,
                Err(e) => return Err(e),
            };
            let p = fit.coefficient(cand).map_or(1.0, |c| c.p);
            if best.is_none_or(|(_, bp)| p < bp) {
                best = Some((cand, p));
            }
        }
        if let Some((cand, p)) = best.filter(|&(_, p)| p < cfg.p_enter) {
            selected.push(cand);
            trace.push(format!("enter {cand} (p={p:.3e})"));
            changed = true;
        }

        if !selected.is_empty() {
            let fit = fit_ols(table, &selected)?;
            let worst = fit
                .coefficients
                .iter()
                .fold(None::<&Coefficient>, |w, c| match w {
                    Some(w) if w.p >= c.p => Some(w),
                    _ => Some(c),
                });
            if let Some(w) = worst.filter(|w| w.p > cfg.p_remove) {
                trace.push(format!("remove {} (p={:.3e})", w.name, w.p));
                let name = w.name.clone();
                selected.retain(|s| *s != name);
                changed = true;
            }
        }

        if !changed {
            // keep the table's column order in the final model
            let ordered: Vec<&str> = names.iter().copied().filter(|n| selected.contains(n)).collect();
            return Ok(Stepwise { model: fit_ols(table, &ordered)?, trace });
        }
    }
    Err(Error::NoConvergence { sweeps: cfg.max_sweeps, trace })
}

/// Ranges of the synthetic feature columns (inclusive integer bounds).
pub const SYNTHETIC_FEATURES: [(&str, u32, u32); 5] = [
    ("n_attr", 1, 6),
    ("n_sentence", 1, 10),
    ("n_words", 10, 120),
    ("n_items", 1, 8),
    ("n_clauses", 1, 12),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusWeights {
    pub n_attr: f64,
    pub n_sentence: f64,
}

impl Default for CorpusWeights {
    fn default() -> Self {
        CorpusWeights { n_attr: 0.775, n_sentence: -0.301 }
    }
}

fn uniform_int_variance(lo: u32, hi: u32) -> f64 {
    let k = f64::from(hi - lo + 1);
    (k * k - 1.0) / 12.0
}

/// Variance of the noiseless rating under the synthetic feature distribution.
pub fn synthetic_signal_variance(weights: &CorpusWeights) -> f64 {
    let (_, a_lo, a_hi) = SYNTHETIC_FEATURES[0];
    let (_, s_lo, s_hi) = SYNTHETIC_FEATURES[1];
    weights.n_attr.powi(2) * uniform_int_variance(a_lo, a_hi)
        + weights.n_sentence.powi(2) * uniform_int_variance(s_lo, s_hi)
}

/// Population R^2 of the true model at a given noise level.
pub fn expected_r_squared(weights: &CorpusWeights, noise_sd: f64) -> f64 {
    let s = synthetic_signal_variance(weights);
    s / (s + noise_sd * noise_sd)
}

/// Noise level whose population R^2 equals `target`, found by bisection.
pub fn noise_sd_for_r_squared(weights: &CorpusWeights, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidConfig("target R^2 must lie in (0, 1)".into()));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while expected_r_squared(weights, hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_r_squared(weights, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Corpus whose rating is `n_attr * w_attr + n_sentence * w_sentence` plus
/// Gaussian noise; the remaining columns are independent distractors.
pub fn generate_synthetic_corpus(weights: &CorpusWeights, noise_sd: f64, n: usize, seed: u64) -> Result<CorpusTable> {
    if n < 2 {
        return Err(Error::Corpus("a corpus needs at least two rows".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidConfig("noise_sd must be non-negative".into()));
    }
    let mut rng = rng::stream(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut ratings = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = SYNTHETIC_FEATURES
            .iter()
            .map(|&(_, lo, hi)| f64::from(rng.random_range(lo..=hi)))
            .collect();
        let eps = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        ratings.push(weights.n_attr * row[0] + weights.n_sentence * row[1] + eps);
        rows.push(row);
    }
    let names = SYNTHETIC_FEATURES.iter().map(|(n, _, _)| n.to_string()).collect();
    CorpusTable::new(names, ratings, rows)
}
