//! Binning, least-squares model fitting, cross-validation, bootstrap and
//! correlation.
//!
//! Fits take optional per-point weights. R², RSS, AIC and BIC are all computed
//! on the weighted residuals, with weights normalized to mean 1 so that RSS
//! keeps the scale of the unweighted case.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::seed::{derive_labeled, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular design matrix for {0}")]
    SingularDesign(ModelKind),
    #[error("{model} fit did not converge in {iterations} iterations")]
    ConvergenceFailure { model: ModelKind, iterations: usize, best: Vec<f64> },
    #[error("{dropped} of {total} bootstrap resamples failed")]
    TooManyFailures { dropped: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, StatsError>;

// --- descriptive statistics -----------------------------------------------

/// Linear-interpolation ("type 7") percentile, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn mean(v: &[f64]) -> f64 {
    if is_constant(v) {
        return v[0];
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn is_constant(v: &[f64]) -> bool {
    v.first().is_some_and(|&a| v.iter().all(|&b| b == a))
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 || is_constant(v) {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 0.75) - percentile_sorted(&v, 0.25)
}

/// Freedman-Diaconis width 2·IQR·n^(−1/3).
pub fn fd_bin_width(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return Err(StatsError::InvalidArgument(format!("need at least 4 values, got {}", values.len())));
    }
    let q = iqr(values);
    if !(q > 0.0) {
        return Err(StatsError::DegenerateData("interquartile range is zero".into()));
    }
    Ok(2.0 * q * (values.len() as f64).powf(-1.0 / 3.0))
}

/// Number of Freedman-Diaconis bins spanning the data range (at least 2).
pub fn fd_bin_count(values: &[f64]) -> Result<usize> {
    let w = fd_bin_width(values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((((hi - lo) / w).ceil() as usize).max(2))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(StatsError::InvalidArgument("pearson needs two equal-length series of length >= 2".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateData("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

// --- binning ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub x_center: f64,
    pub x_mean: f64,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub standard_error: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    pub edges: Vec<f64>,
    pub bins: Vec<Bin>,
}

impl BinnedSeries {
    /// Per-bin mean x, the abscissa used for fitting.
    pub fn x(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.x_mean).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean).collect()
    }

    /// 1/SE² when every bin has SE > 0, uniform otherwise.
    pub fn weights(&self) -> Vec<f64> {
        if self.bins.iter().all(|b| b.standard_error > 0.0) {
            self.bins.iter().map(|b| 1.0 / b.standard_error.powi(2)).collect()
        } else {
            vec![1.0; self.bins.len()]
        }
    }

    pub const CSV_HEADER: &'static str = "lo,hi,x_center,x_mean,count,mean,std,standard_error,median,ci_low,ci_high";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for b in &self.bins {
            let cols = [
                b.lo,
                b.hi,
                b.x_center,
                b.x_mean,
                b.count as f64,
                b.mean,
                b.std,
                b.standard_error,
                b.median,
                b.ci_low,
                b.ci_high,
            ];
            let row: Vec<String> = cols
                .iter()
                .enumerate()
                .map(|(i, v)| if i == 4 { b.count.to_string() } else { crate::states::fmt_f64(*v) })
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Equal-width bins over [min x, max x]. Bins holding fewer than
/// `min_occupancy` points are merged into the neighbour with the nearer
/// center, the left one on ties, until every bin is occupied enough.
pub fn bin_series(x: &[f64], y: &[f64], n_bins: usize, min_occupancy: usize) -> Result<BinnedSeries> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument("x and y differ in length".into()));
    }
    if n_bins < 2 {
        return Err(StatsError::InvalidArgument("n_bins must be at least 2".into()));
    }
    if x.is_empty() {
        return Err(StatsError::DegenerateData("no data".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(StatsError::DegenerateData("x has zero range".into()));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    edges[n_bins] = hi;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &xi) in x.iter().enumerate() {
        let k = (((xi - lo) / width) as usize).min(n_bins - 1);
        members[k].push(i);
    }

    // Merge under-occupied bins, leftmost first.
    loop {
        let Some(k) = members.iter().position(|m| m.len() < min_occupancy) else { break };
        if members.len() == 1 {
            break;
        }
        let center = |j: usize| 0.5 * (edges[j] + edges[j + 1]);
        let into_left = if k == 0 {
            false
        } else if k == members.len() - 1 {
            true
        } else {
            center(k) - center(k - 1) <= center(k + 1) - center(k)
        };
        let moved = std::mem::take(&mut members[k]);
        if into_left {
            members[k - 1].extend(moved);
            members.remove(k);
            edges.remove(k);
        } else {
            members[k + 1].extend(moved);
            members.remove(k);
            edges.remove(k + 1);
        }
    }

    let bins = summarize_bins(x, y, &edges, &members);
    Ok(BinnedSeries { edges, bins })
}

/// Bins (x, y) on fixed `edges`. Points outside the edge range fall into the
/// end bins; empty bins are skipped.
pub fn bin_with_edges(x: &[f64], y: &[f64], edges: &[f64]) -> Result<BinnedSeries> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument("x and y differ in length".into()));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(StatsError::InvalidArgument("edges must be increasing with at least two entries".into()));
    }
    let n_bins = edges.len() - 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &xi) in x.iter().enumerate() {
        let k = edges[1..n_bins].partition_point(|&e| e <= xi);
        members[k].push(i);
    }
    let bins = summarize_bins(x, y, edges, &members);
    Ok(BinnedSeries { edges: edges.to_vec(), bins })
}

fn summarize_bins(x: &[f64], y: &[f64], edges: &[f64], members: &[Vec<usize>]) -> Vec<Bin> {
    let mut bins = Vec::with_capacity(members.len());
    for (k, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let m = mean(&ys);
        let sd = std_dev(&ys);
        let se = sd / (ys.len() as f64).sqrt();
        bins.push(Bin {
            lo: edges[k],
            hi: edges[k + 1],
            x_center: 0.5 * (edges[k] + edges[k + 1]),
            x_mean: mean(&xs),
            count: ys.len(),
            mean: m,
            std: sd,
            standard_error: se,
            median: percentile(&ys, 0.5),
            ci_low: m - 1.96 * se,
            ci_high: m + 1.96 * se,
        });
    }
    bins
}

/// What to do with bins below the occupancy floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseBins {
    Merge,
    Drop,
}

/// Binning instructions for resampled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rebin {
    pub n_bins: usize,
    pub min_occupancy: usize,
    pub sparse: SparseBins,
}

impl Rebin {
    pub fn apply(&self, x: &[f64], y: &[f64]) -> Result<BinnedSeries> {
        match self.sparse {
            SparseBins::Merge => bin_series(x, y, self.n_bins, self.min_occupancy),
            SparseBins::Drop => {
                let mut s = bin_series(x, y, self.n_bins, 0)?;
                s.bins.retain(|b| b.count >= self.min_occupancy);
                Ok(s)
            }
        }
    }
}

/// Per-bin maximum and minimum y over equal-width bins, at bin centers.
/// Empty bins are skipped.
pub fn boundary_extract(x: &[f64], y: &[f64], n_bins: usize) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let series = bin_series(x, y, n_bins, 0)?;
    let lo = series.edges[0];
    let width = (series.edges[series.edges.len() - 1] - lo) / n_bins as f64;
    let mut upper = vec![f64::NEG_INFINITY; n_bins];
    let mut lower = vec![f64::INFINITY; n_bins];
    for (&xi, &yi) in x.iter().zip(y) {
        let k = (((xi - lo) / width) as usize).min(n_bins - 1);
        upper[k] = upper[k].max(yi);
        lower[k] = lower[k].min(yi);
    }
    let mut up = Vec::new();
    let mut down = Vec::new();
    for k in 0..n_bins {
        if upper[k].is_finite() {
            let c = lo + width * (k as f64 + 0.5);
            up.push((c, upper[k]));
            down.push((c, lower[k]));
        }
    }
    Ok((up, down))
}

// --- models -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Constant,
    Linear,
    Quadratic,
    Cubic,
    /// A(1 − e^(−αx)) + B
    ExponentialSaturation,
    /// L/(1 + e^(−k(x − x₀))) + c
    Logistic,
    /// V·x/(K + x) + c
    MichaelisMenten,
    /// a·e^(−b x)
    ExponentialDecay,
}

impl ModelKind {
    /// The six families of the model-comparison table.
    pub const COMPARISON: [ModelKind; 6] = [
        ModelKind::Linear,
        ModelKind::Quadratic,
        ModelKind::Cubic,
        ModelKind::ExponentialSaturation,
        ModelKind::Logistic,
        ModelKind::MichaelisMenten,
    ];

    pub fn arity(self) -> usize {
        match self {
            ModelKind::Constant => 1,
            ModelKind::Linear | ModelKind::ExponentialDecay => 2,
            ModelKind::Quadratic | ModelKind::ExponentialSaturation | ModelKind::MichaelisMenten => 3,
            ModelKind::Cubic | ModelKind::Logistic => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Constant => "constant",
            ModelKind::Linear => "linear",
            ModelKind::Quadratic => "quadratic",
            ModelKind::Cubic => "cubic",
            ModelKind::ExponentialSaturation => "exponential_saturation",
            ModelKind::Logistic => "logistic",
            ModelKind::MichaelisMenten => "michaelis_menten",
            ModelKind::ExponentialDecay => "exponential_decay",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Constant => &["a0"],
            ModelKind::Linear => &["a0", "a1"],
            ModelKind::Quadratic => &["a0", "a1", "a2"],
            ModelKind::Cubic => &["a0", "a1", "a2", "a3"],
            ModelKind::ExponentialSaturation => &["A", "alpha", "B"],
            ModelKind::Logistic => &["L", "k", "x0", "c"],
            ModelKind::MichaelisMenten => &["V", "K", "c"],
            ModelKind::ExponentialDecay => &["a", "b"],
        }
    }

    fn polynomial_degree(self) -> Option<usize> {
        match self {
            ModelKind::Constant => Some(0),
            ModelKind::Linear => Some(1),
            ModelKind::Quadratic => Some(2),
            ModelKind::Cubic => Some(3),
            _ => None,
        }
    }

    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        if self.polynomial_degree().is_some() {
            return p.iter().rev().fold(0.0, |acc, c| acc * x + c);
        }
        match self {
            ModelKind::ExponentialSaturation => p[0] * (1.0 - (-p[1] * x).exp()) + p[2],
            ModelKind::Logistic => p[0] / (1.0 + (-p[1] * (x - p[2])).exp()) + p[3],
            ModelKind::MichaelisMenten => p[0] * x / (p[1] + x) + p[2],
            ModelKind::ExponentialDecay => p[0] * (-p[1] * x).exp(),
            _ => unreachable!(),
        }
    }

    /// ∂f/∂p at x.
    pub fn gradient(self, p: &[f64], x: f64, out: &mut [f64]) {
        if self.polynomial_degree().is_some() {
            let mut xp = 1.0;
            for o in out.iter_mut() {
                *o = xp;
                xp *= x;
            }
            return;
        }
        match self {
            ModelKind::ExponentialSaturation => {
                let e = (-p[1] * x).exp();
                out[0] = 1.0 - e;
                out[1] = p[0] * x * e;
                out[2] = 1.0;
            }
            ModelKind::Logistic => {
                let e = (-p[1] * (x - p[2])).exp();
                let d = 1.0 + e;
                out[0] = 1.0 / d;
                out[1] = p[0] * (x - p[2]) * e / (d * d);
                out[2] = -p[0] * p[1] * e / (d * d);
                out[3] = 1.0;
            }
            ModelKind::MichaelisMenten => {
                let d = p[1] + x;
                out[0] = x / d;
                out[1] = -p[0] * x / (d * d);
                out[2] = 1.0;
            }
            ModelKind::ExponentialDecay => {
                let e = (-p[1] * x).exp();
                out[0] = e;
                out[1] = -p[0] * x * e;
            }
            _ => unreachable!(),
        }
    }

    /// Moment-based starting point for the nonlinear families.
    pub fn initial_guess(self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
        let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xmin = x.iter().copied().fold(f64::INFINITY, f64::min);
        let xmax = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let yr = ymax - ymin;
        let xr = (xmax - xmin).max(f64::MIN_POSITIVE);
        let xmed = percentile(x, 0.5);
        match self {
            ModelKind::ExponentialSaturation => vec![yr, 2.0, ymin],
            ModelKind::Logistic => vec![yr, 4.0 / xr, xmed, ymin],
            ModelKind::MichaelisMenten => vec![yr, xmed, ymin],
            ModelKind::ExponentialDecay => {
                let i = (0..x.len()).min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(0);
                vec![y.get(i).copied().unwrap_or(1.0), 1.0]
            }
            _ => vec![0.0; self.arity()],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub params: Vec<f64>,
    /// Bootstrap percentile intervals, when computed.
    pub param_cis: Option<Vec<(f64, f64)>>,
    pub r2: f64,
    pub r2_cv: Option<f64>,
    pub aic: f64,
    pub bic: f64,
    pub rss: f64,
    pub n: usize,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// False for a best-iterate result from [`fit_model_or_best`].
    pub converged: bool,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.model.eval(&self.params, x)
    }
}

const LM_MAX_ITER: usize = 500;
const LM_REL_TOL: f64 = 1e-10;

fn normalized_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(StatsError::InvalidArgument("weights differ in length from data".into()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(StatsError::InvalidArgument("weights must be positive and finite".into()));
            }
            let m = mean(w);
            Ok(w.iter().map(|v| v / m).collect())
        }
    }
}

/// Weighted R² of `params` on (x, y), TSS taken about `center` (the weighted
/// mean of y when `None`).
pub fn r_squared(model: ModelKind, params: &[f64], x: &[f64], y: &[f64], w: &[f64], center: Option<f64>) -> f64 {
    let (rss, tss) = rss_tss(model, params, x, y, w, center);
    r2_from(rss, tss)
}

fn rss_tss(model: ModelKind, params: &[f64], x: &[f64], y: &[f64], w: &[f64], center: Option<f64>) -> (f64, f64) {
    let wsum: f64 = w.iter().sum();
    let ybar = center.unwrap_or_else(|| w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / wsum);
    let mut rss = 0.0;
    let mut tss = 0.0;
    for i in 0..x.len() {
        rss += w[i] * (y[i] - model.eval(params, x[i])).powi(2);
        tss += w[i] * (y[i] - ybar).powi(2);
    }
    (rss, tss)
}

fn r2_from(rss: f64, tss: f64) -> f64 {
    if tss > 0.0 {
        1.0 - rss / tss
    } else if rss <= 1e-300 {
        1.0
    } else {
        0.0
    }
}

pub fn aic(rss: f64, n: usize, p: usize) -> f64 {
    let n = n as f64;
    n * (rss / n).ln() + 2.0 * p as f64
}

pub fn bic(rss: f64, n: usize, p: usize) -> f64 {
    let n = n as f64;
    n * (rss / n).ln() + p as f64 * n.ln()
}

/// Least-squares fit. Polynomials are solved by QR; the nonlinear families by
/// Levenberg-Marquardt from [`ModelKind::initial_guess`].
pub fn fit_model(model: ModelKind, x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    let p = model.arity();
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument("x and y differ in length".into()));
    }
    if x.len() < p + 1 {
        return Err(StatsError::InvalidArgument(format!("{model} needs at least {} points, got {}", p + 1, x.len())));
    }
    let w = normalized_weights(x.len(), weights)?;
    let (params, iterations) = match model.polynomial_degree() {
        Some(d) => (fit_polynomial(model, d, x, y, &w)?, 1),
        None => levenberg_marquardt(model, x, y, &w, model.initial_guess(x, y))?,
    };
    Ok(summarize(model, params, x, y, &w, iterations))
}

/// [`fit_model`], except that hitting the iteration cap with finite
/// parameters yields the best iterate with `converged = false`.
pub fn fit_model_or_best(model: ModelKind, x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    match fit_model(model, x, y, weights) {
        Err(StatsError::ConvergenceFailure { best, iterations, .. })
            if iterations > 0 && best.iter().all(|p| p.is_finite()) =>
        {
            let w = normalized_weights(x.len(), weights)?;
            let mut fit = summarize(model, best, x, y, &w, iterations);
            fit.converged = false;
            Ok(fit)
        }
        other => other,
    }
}

fn summarize(model: ModelKind, params: Vec<f64>, x: &[f64], y: &[f64], w: &[f64], iterations: usize) -> FitResult {
    let residuals: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| yi - model.eval(&params, xi)).collect();
    let (rss, tss) = rss_tss(model, &params, x, y, w, None);
    let n = x.len();
    let p = model.arity();
    FitResult {
        model,
        params,
        param_cis: None,
        r2: r2_from(rss, tss),
        r2_cv: None,
        aic: aic(rss, n, p),
        bic: bic(rss, n, p),
        rss,
        n,
        residuals,
        iterations,
        converged: true,
    }
}

fn fit_polynomial(model: ModelKind, degree: usize, x: &[f64], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let cols = degree + 1;
    let a = DMatrix::from_fn(n, cols, |i, j| w[i].sqrt() * x[i].powi(j as i32));
    let b = DVector::from_fn(n, |i, _| w[i].sqrt() * y[i]);
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..cols).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|j| !(r[(j, j)].abs() > 1e-12 * scale)) {
        return Err(StatsError::SingularDesign(model));
    }
    let qtb = qr.q().transpose() * b;
    let sol = r.solve_upper_triangular(&qtb).ok_or(StatsError::SingularDesign(model))?;
    Ok(sol.iter().copied().collect())
}

fn levenberg_marquardt(model: ModelKind, x: &[f64], y: &[f64], w: &[f64], p0: Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let np = p0.len();
    let rss_of = |p: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() {
            s += w[i] * (y[i] - model.eval(p, x[i])).powi(2);
        }
        s
    };
    let mut p = p0;
    let mut rss = rss_of(&p);
    if !rss.is_finite() {
        return Err(StatsError::ConvergenceFailure { model, iterations: 0, best: p });
    }
    let mut lambda = 1e-3;
    let mut g = vec![0.0; np];
    for iter in 0..LM_MAX_ITER {
        if rss == 0.0 {
            return Ok((p, iter));
        }
        let mut jtj = DMatrix::<f64>::zeros(np, np);
        let mut jtr = DVector::<f64>::zeros(np);
        for i in 0..x.len() {
            model.gradient(&p, x[i], &mut g);
            let r = y[i] - model.eval(&p, x[i]);
            for a in 0..np {
                jtr[a] += w[i] * g[a] * r;
                for b in 0..np {
                    jtj[(a, b)] += w[i] * g[a] * g[b];
                }
            }
        }
        loop {
            let mut m = jtj.clone();
            for a in 0..np {
                m[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
            }
            let step = m.lu().solve(&jtr);
            let trial: Option<Vec<f64>> = step.map(|s| p.iter().zip(s.iter()).map(|(a, b)| a + b).collect());
            let trial_rss = trial.as_ref().map(|t| rss_of(t)).unwrap_or(f64::INFINITY);
            if trial_rss.is_finite() && trial_rss < rss {
                let rel = (rss - trial_rss) / rss;
                p = trial.expect("finite trial has params");
                rss = trial_rss;
                lambda = (lambda / 10.0).max(1e-12);
                if rel < LM_REL_TOL {
                    return Ok((p, iter + 1));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // No step improves the residual: a stationary point.
                return Ok((p, iter + 1));
            }
        }
    }
    Err(StatsError::ConvergenceFailure { model, iterations: LM_MAX_ITER, best: p })
}

// --- validation -------------------------------------------------------------

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    idx
}

/// Pooled out-of-fold R²_CV = 1 − Σ RSS_k / Σ TSS_k, with TSS_k taken about
/// the training-fold (weighted) mean. Folds are fitted with
/// [`fit_model_or_best`].
pub fn kfold_cv(
    model: ModelKind,
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    k: usize,
    fold_seed: u64,
) -> Result<f64> {
    let n = x.len();
    if k < 2 || n < 2 * k {
        return Err(StatsError::InvalidArgument(format!("k-fold needs k >= 2 and n >= 2k (k={k}, n={n})")));
    }
    let w = normalized_weights(n, weights)?;
    let order = shuffled(n, fold_seed);
    let (mut rss, mut tss) = (0.0, 0.0);
    for fold in 0..k {
        let mut in_test = vec![false; n];
        let test: Vec<usize> = order.iter().copied().skip(fold).step_by(k).collect();
        for &i in &test {
            in_test[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        let pick = |v: &[f64], ids: &[usize]| ids.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let (xt, yt, wt) = (pick(x, &train), pick(y, &train), pick(&w, &train));
        let fit = fit_model_or_best(model, &xt, &yt, Some(&wt))?;
        let wsum: f64 = wt.iter().sum();
        let train_mean = wt.iter().zip(&yt).map(|(a, b)| a * b).sum::<f64>() / wsum;
        let (r, t) = rss_tss(model, &fit.params, &pick(x, &test), &pick(y, &test), &pick(&w, &test), Some(train_mean));
        rss += r;
        tss += t;
    }
    Ok(r2_from(rss, tss))
}

/// Deterministic disjoint (train, test) index sets, each sorted.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(StatsError::InvalidArgument(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    let order = shuffled(n, seed);
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub model: ModelKind,
    pub n_resamples: usize,
    pub n_failed: usize,
    pub params: Vec<ParamSummary>,
    /// Accepted resample estimates, one row per resample.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

impl BootstrapSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn cis(&self) -> Vec<(f64, f64)> {
        self.params.iter().map(|p| (p.ci_low, p.ci_high)).collect()
    }

    /// Two-sided p-value for "parameter = 0" from the normal approximation
    /// to the bootstrap distribution.
    pub fn zero_p_value(&self, name: &str) -> Option<f64> {
        let p = self.param(name)?;
        if p.std == 0.0 {
            return Some(if p.mean == 0.0 { 1.0 } else { 0.0 });
        }
        Some(erfc((p.mean / p.std).abs() / std::f64::consts::SQRT_2))
    }

    /// Fraction of resamples on the other side of zero from the mean, doubled.
    pub fn zero_empirical_p_value(&self, name: &str) -> Option<f64> {
        let i = self.params.iter().position(|p| p.name == name)?;
        let m = self.params[i].mean;
        let crossing = self.samples.iter().filter(|s| s[i] * m.signum() <= 0.0).count();
        Some((2.0 * crossing as f64 / self.samples.len() as f64).min(1.0))
    }
}

/// Case-resampling bootstrap. Each resample draws n rows with replacement
/// from a stream keyed by (seed, resample index), optionally re-bins with
/// 1/SE² weights, and refits. Failed resamples are dropped; more than 10%
/// failures is an error.
pub fn bootstrap_fit(
    model: ModelKind,
    x: &[f64],
    y: &[f64],
    n_resamples: usize,
    seed: u64,
    rebin: Option<Rebin>,
) -> Result<BootstrapSummary> {
    bootstrap_fit_many(&[model], x, y, n_resamples, seed, rebin)?.pop().expect("one model")
}

/// [`bootstrap_fit`] for several models sharing the same resamples (and
/// the same re-binning of each). Results match per-model calls exactly.
pub fn bootstrap_fit_many(
    models: &[ModelKind],
    x: &[f64],
    y: &[f64],
    n_resamples: usize,
    seed: u64,
    rebin: Option<Rebin>,
) -> Result<Vec<Result<BootstrapSummary>>> {
    if n_resamples == 0 {
        return Err(StatsError::InvalidArgument("n_resamples must be positive".into()));
    }
    if x.len() != y.len() || x.is_empty() {
        return Err(StatsError::InvalidArgument("bootstrap needs equal-length non-empty series".into()));
    }
    let n = x.len();
    let fits: Vec<Vec<Option<Vec<f64>>>> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_labeled(seed, "bootstrap", r as u64));
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                xs.push(x[i]);
                ys.push(y[i]);
            }
            let data = match rebin {
                Some(b) => b.apply(&xs, &ys).map(|s| (s.x(), s.y(), Some(s.weights()))),
                None => Ok((xs, ys, None)),
            };
            models
                .iter()
                .map(|&model| {
                    let (fx, fy, fw) = data.as_ref().ok()?;
                    let fit = fit_model(model, fx, fy, fw.as_deref()).ok()?;
                    fit.params.iter().all(|p| p.is_finite()).then_some(fit.params)
                })
                .collect()
        })
        .collect();
    Ok(models
        .iter()
        .enumerate()
        .map(|(m, &model)| {
            let samples: Vec<Vec<f64>> = fits.iter().filter_map(|f| f[m].clone()).collect();
            summarize_bootstrap(model, n_resamples, samples)
        })
        .collect())
}

fn summarize_bootstrap(model: ModelKind, n_resamples: usize, samples: Vec<Vec<f64>>) -> Result<BootstrapSummary> {
    let dropped = n_resamples - samples.len();
    if dropped * 10 > n_resamples {
        return Err(StatsError::TooManyFailures { dropped, total: n_resamples });
    }
    let params = model
        .param_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            col.sort_by(f64::total_cmp);
            ParamSummary {
                name: name.to_string(),
                mean: mean(&col),
                std: std_dev(&col),
                ci_low: percentile_sorted(&col, 0.025),
                ci_high: percentile_sorted(&col, 0.975),
            }
        })
        .collect();
    Ok(BootstrapSummary { model, n_resamples, n_failed: dropped, params, samples })
}

// --- model comparison -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub n_params: usize,
    pub r2_train: f64,
    pub r2_cv: f64,
    pub aic: f64,
    pub bic: f64,
    pub r2_test: f64,
}

pub const COMPARISON_HEADER: &str = "model,n_params,r2_train,r2_cv,aic,bic,r2_test";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    use crate::states::fmt_f64;
    let mut s = String::from(COMPARISON_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model,
            r.n_params,
            fmt_f64(r.r2_train),
            fmt_f64(r.r2_cv),
            fmt_f64(r.aic),
            fmt_f64(r.bic),
            fmt_f64(r.r2_test)
        ));
    }
    s
}
