//! ARMA/ARIMA fitting and forecasting on aggregate series.
//!
//! Models are fitted by two-stage Hannan-Rissanen least squares: a long
//! autoregression supplies residual proxies, then the target orders are fit
//! on lagged values and lagged residuals. The fit is deterministic and
//! needs no iterative optimizer.
//!
//! Series produced by sampling carry per-point estimation-noise variance.
//! The noise inflates the fitted innovation variance; the model keeps the
//! two apart (the reported innovation variance subtracts the noise share)
//! and forecast intervals add the noise variance back on top of the
//! psi-weight accumulation, so noisier aggregates yield wider intervals.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::kahan;
use crate::rng::standard_normal;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("series too short: length {len}, need at least {need}")]
    SeriesTooShort { len: usize, need: usize },
    #[error("series looks non-stationary (autoregressive root near the unit circle); difference it first")]
    NonStationary,
    #[error("fitted coefficients are explosive (AR root inside the unit circle)")]
    ExplosiveFit,
    #[error("fitted moving-average part is not invertible; innovations cannot be recovered")]
    NonInvertible,
    #[error("|alpha1| must be < 1 for the noisy-variance formula, got {0}")]
    NonStationaryAlpha(f64),
    #[error("forecast horizon must be >= 1")]
    InvalidHorizon,
    #[error("confidence level must be in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("anchors length {got} does not match differencing order {want}")]
    AnchorMismatch { got: usize, want: usize },
    #[error("least squares failed: {0}")]
    FitFailed(String),
}

/// An aggregate series in timestamp order with per-point estimation-noise
/// variance (zero for exact series).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub values: Vec<f64>,
    pub noise_var: Vec<f64>,
}

impl AggregateSeries {
    pub fn exact(values: Vec<f64>) -> Self {
        let noise_var = vec![0.0; values.len()];
        Self { values, noise_var }
    }

    pub fn with_noise(values: Vec<f64>, noise_var: Vec<f64>) -> Self {
        assert_eq!(values.len(), noise_var.len());
        Self { values, noise_var }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Homoscedastic noise variance: the mean across points.
    pub fn mean_noise_var(&self) -> f64 {
        if self.noise_var.is_empty() {
            0.0
        } else {
            kahan::sum(self.noise_var.iter().copied()) / self.noise_var.len() as f64
        }
    }
}

/// A fitted ARIMA(p, d, q) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Mean of the (differenced) series the model was fitted on.
    pub mean: f64,
    /// Innovation variance after removing the estimation-noise share.
    pub sigma_u2: f64,
    /// Estimation-noise variance of the undifferenced aggregate series.
    pub sigma_eps2: f64,
    /// Number of (differenced) training points.
    pub fitted_on: usize,
    /// n * ln(raw residual variance) + 2 (p + q + 1).
    pub aic: f64,
}

/// Point forecasts with a symmetric confidence interval per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub points: Vec<f64>,
    pub interval_lo: Vec<f64>,
    pub interval_hi: Vec<f64>,
    pub gamma: f64,
}

impl ForecastResult {
    /// CSV with columns `step,point,lo,hi`, steps starting at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,point,lo,hi\n");
        for (i, ((p, lo), hi)) in self
            .points
            .iter()
            .zip(&self.interval_lo)
            .zip(&self.interval_hi)
            .enumerate()
        {
            out.push_str(&format!("{},{p},{lo},{hi}\n", i + 1));
        }
        out
    }
}

/// d-th order forward differences.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    if series.len() <= d {
        return Err(ForecastError::SeriesTooShort {
            len: series.len(),
            need: d + 1,
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// First element of each differencing stage `0..d`; together with
/// `difference(series, d)` these reconstruct the series exactly.
pub fn anchors(series: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    if series.len() <= d {
        return Err(ForecastError::SeriesTooShort {
            len: series.len(),
            need: d + 1,
        });
    }
    let mut out = Vec::with_capacity(d);
    let mut stage = series.to_vec();
    for _ in 0..d {
        out.push(stage[0]);
        stage = stage.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Exact left inverse of [`difference`] given the retained anchors.
pub fn integrate(diffed: &[f64], d: usize, anchors: &[f64]) -> Result<Vec<f64>, ForecastError> {
    if anchors.len() != d {
        return Err(ForecastError::AnchorMismatch {
            got: anchors.len(),
            want: d,
        });
    }
    let mut out = diffed.to_vec();
    for k in (0..d).rev() {
        let mut rebuilt = Vec::with_capacity(out.len() + 1);
        rebuilt.push(anchors[k]);
        for (i, &v) in out.iter().enumerate() {
            rebuilt.push(rebuilt[i] + v);
        }
        out = rebuilt;
    }
    Ok(out)
}

fn lstsq(x: DMatrix<f64>, y: DVector<f64>) -> Result<DVector<f64>, ForecastError> {
    x.svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| ForecastError::FitFailed(e.to_string()))
}

/// Long-AR order for the residual proxy.
fn long_ar_order(n: usize) -> usize {
    (n / 10).min(20)
}

/// Fits a long autoregression and returns (coefficients, residuals).
/// Residuals before index `order` are zero (conditional fit).
fn long_ar_residuals(z: &[f64], order: usize) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    let n = z.len();
    let rows = n - order;
    let x = DMatrix::from_fn(rows, order, |r, c| z[order + r - 1 - c]);
    let y = DVector::from_fn(rows, |r, _| z[order + r]);
    let phi = lstsq(x, y)?;
    let mut resid = vec![0.0; n];
    for t in order..n {
        let mut pred = 0.0;
        for i in 0..order {
            pred += phi[i] * z[t - 1 - i];
        }
        resid[t] = z[t] - pred;
    }
    Ok((phi.iter().copied().collect(), resid))
}

/// Largest modulus among the inverse characteristic roots of a lag
/// polynomial `1 - c_1 B - ... - c_k B^k`, via companion-matrix
/// eigenvalues. Values above 1 mean a root inside the unit circle.
fn max_inverse_root(coef: &[f64]) -> f64 {
    let k = coef.len();
    if k == 0 {
        return 0.0;
    }
    if k == 1 {
        return coef[0].abs();
    }
    let companion = DMatrix::from_fn(k, k, |r, c| {
        if r == 0 {
            coef[c]
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    let eig: nalgebra::OVector<Complex<f64>, nalgebra::Dyn> = companion.complex_eigenvalues();
    eig.iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Whether an AR coefficient vector has a characteristic root within 0.01
/// of (or inside) the unit circle.
fn ar_near_unit_root(phi: &[f64]) -> bool {
    max_inverse_root(phi) > 0.99
}

/// Variance inflation factor of a noisy ARMA(1,1):
/// `(1 + 2 a b + b^2) / (1 - a^2)`.
fn arma11_factor(alpha1: f64, beta1: f64) -> f64 {
    (1.0 + 2.0 * alpha1 * beta1 + beta1 * beta1) / (1.0 - alpha1 * alpha1)
}

/// Stationary variance of a noisy ARMA(1,1) observation:
/// `a * sigma_u2 + sigma_eps2` with `a = (1 + 2 a1 b1 + b1^2)/(1 - a1^2)`.
pub fn noisy_variance_arma11(
    alpha1: f64,
    beta1: f64,
    sigma_u2: f64,
    sigma_eps2: f64,
) -> Result<f64, ForecastError> {
    if !(alpha1.abs() < 1.0) {
        return Err(ForecastError::NonStationaryAlpha(alpha1));
    }
    Ok(arma11_factor(alpha1, beta1) * sigma_u2 + sigma_eps2)
}

fn min_series_len(p: usize, q: usize) -> usize {
    // Degenerate normal equations appear well before 10 * max(p, q).
    (10 * p.max(q)).max(2)
}

/// Fits ARMA(p, q) by Hannan-Rissanen two-stage least squares. When the
/// series carries estimation noise, the reported innovation variance is the
/// raw residual variance minus the noise share.
pub fn fit_arma(series: &AggregateSeries, p: usize, q: usize) -> Result<ArmaModel, ForecastError> {
    fit_arma_diffed(series, p, 0, q, series.mean_noise_var())
}

/// Fits ARIMA(p, d, q): differences `d` times (scaling the per-point noise
/// variance accordingly), then fits ARMA(p, q) on the differenced series.
/// The model keeps the undifferenced noise variance for interval widths.
pub fn fit_arima(
    series: &AggregateSeries,
    p: usize,
    d: usize,
    q: usize,
) -> Result<ArmaModel, ForecastError> {
    let values = difference(&series.values, d)?;
    // Var of the d-th difference of independent noise is C(2d, d) times the
    // per-point variance.
    let scale = binomial(2 * d, d) as f64;
    let diffed = AggregateSeries {
        noise_var: series.noise_var[d..].iter().map(|v| v * scale).collect(),
        values,
    };
    fit_arma_diffed(&diffed, p, d, q, series.mean_noise_var())
}

fn binomial(n: usize, k: usize) -> u64 {
    let mut out = 1u64;
    for i in 0..k {
        out = out * (n - i) as u64 / (i + 1) as u64;
    }
    out
}

fn fit_arma_diffed(
    series: &AggregateSeries,
    p: usize,
    d: usize,
    q: usize,
    level_noise_var: f64,
) -> Result<ArmaModel, ForecastError> {
    let n = series.len();
    let need = min_series_len(p, q);
    if n < need {
        return Err(ForecastError::SeriesTooShort { len: n, need });
    }

    let mean = kahan::sum(series.values.iter().copied()) / n as f64;
    let z: Vec<f64> = series.values.iter().map(|v| v - mean).collect();
    let diffed_noise_var = series.mean_noise_var();

    let long = long_ar_order(n);
    let mut proxy_resid: Option<Vec<f64>> = None;
    if long >= 1 && n > 2 * long + 4 {
        let (phi, resid) = long_ar_residuals(&z, long)?;
        if ar_near_unit_root(&phi) {
            return Err(ForecastError::NonStationary);
        }
        proxy_resid = Some(resid);
    }

    let (alpha, beta, raw_sigma2) = if p == 0 && q == 0 {
        let s2 = kahan::sum(z.iter().map(|v| v * v)) / n as f64;
        (Vec::new(), Vec::new(), s2)
    } else {
        let resid = if q > 0 {
            proxy_resid.ok_or(ForecastError::SeriesTooShort {
                len: n,
                need: 2 * long_ar_order(n) + 5,
            })?
        } else {
            Vec::new()
        };
        let t0 = if q > 0 { p.max(long + q) } else { p };
        let rows = n - t0;
        if rows < p + q + 2 {
            return Err(ForecastError::SeriesTooShort {
                len: n,
                need: t0 + p + q + 2,
            });
        }
        let x = DMatrix::from_fn(rows, p + q, |r, c| {
            let t = t0 + r;
            if c < p {
                z[t - 1 - c]
            } else {
                resid[t - 1 - (c - p)]
            }
        });
        let y = DVector::from_fn(rows, |r, _| z[t0 + r]);
        let coef = lstsq(x.clone(), y.clone())?;
        let fitted = x * &coef;
        let mut sse = kahan::KahanSum::new();
        for r in 0..rows {
            let e = y[r] - fitted[r];
            sse.add(e * e);
        }
        let alpha: Vec<f64> = (0..p).map(|i| coef[i]).collect();
        let beta: Vec<f64> = (0..q).map(|j| coef[p + j]).collect();
        // Guard against pathological fits: an AR root inside the unit
        // circle makes iterated forecasts diverge, and a non-invertible MA
        // makes the innovation recursion blow up. Either invalidates the
        // candidate.
        if max_inverse_root(&alpha) > 1.0 {
            return Err(ForecastError::ExplosiveFit);
        }
        let neg_beta: Vec<f64> = beta.iter().map(|b| -b).collect();
        if max_inverse_root(&neg_beta) > 1.0 {
            return Err(ForecastError::NonInvertible);
        }
        (alpha, beta, sse.total() / rows as f64)
    };

    let raw_sigma2 = raw_sigma2.max(f64::MIN_POSITIVE);
    let aic = n as f64 * raw_sigma2.ln() + 2.0 * (p + q + 1) as f64;

    // Remove the estimation-noise share from the innovation variance. For
    // orders up to (1,1) the noisy-observation variance factor gives the
    // share; beyond that the plain additive plug-in is used.
    let sigma_u2 = if diffed_noise_var > 0.0 {
        let a = if p <= 1 && q <= 1 {
            let a1 = alpha.first().copied().unwrap_or(0.0);
            let b1 = beta.first().copied().unwrap_or(0.0);
            if a1.abs() < 0.999 {
                arma11_factor(a1, b1)
            } else {
                1.0
            }
        } else {
            1.0
        };
        (raw_sigma2 - diffed_noise_var / a.max(1.0)).max(0.0)
    } else {
        raw_sigma2
    };

    Ok(ArmaModel {
        p,
        d,
        q,
        alpha,
        beta,
        mean,
        sigma_u2,
        sigma_eps2: level_noise_var,
        fitted_on: n,
        aic,
    })
}

/// Grid-searches (p, d, q) by AIC after d-fold differencing; ties prefer
/// smaller p+q, then smaller d, then smaller p.
pub fn select_order(
    series: &AggregateSeries,
    p_max: usize,
    d_max: usize,
    q_max: usize,
) -> Result<(usize, usize, usize), ForecastError> {
    let largest_need = min_series_len(p_max, q_max) + d_max;
    if series.len() < largest_need {
        return Err(ForecastError::SeriesTooShort {
            len: series.len(),
            need: largest_need,
        });
    }
    let mut best: Option<((usize, usize, usize), f64)> = None;
    let mut last_err = None;
    for d in 0..=d_max {
        for p in 0..=p_max {
            for q in 0..=q_max {
                match fit_arima(series, p, d, q) {
                    Ok(model) => {
                        let better = match &best {
                            None => true,
                            Some((bk, baic)) => {
                                let cand = (model.aic, p + q, d, p);
                                let incumbent = (*baic, bk.0 + bk.2, bk.1, bk.0);
                                cand.partial_cmp(&incumbent) == Some(std::cmp::Ordering::Less)
                            }
                        };
                        if better {
                            best = Some(((p, d, q), model.aic));
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
        }
    }
    match best {
        Some((orders, _)) => Ok(orders),
        None => Err(last_err.unwrap_or(ForecastError::NonStationary)),
    }
}

/// psi weights of the fitted ARMA, integrated d times, truncated to `h`.
fn psi_weights(model: &ArmaModel, h: usize) -> Vec<f64> {
    let mut psi = vec![0.0; h];
    if h == 0 {
        return psi;
    }
    psi[0] = 1.0;
    for j in 1..h {
        let mut v = if j <= model.q { model.beta[j - 1] } else { 0.0 };
        for i in 1..=model.p.min(j) {
            v += model.alpha[i - 1] * psi[j - i];
        }
        psi[j] = v;
    }
    // Integration turns psi into its running sums, once per differencing
    // order.
    for _ in 0..model.d {
        for j in 1..h {
            psi[j] += psi[j - 1];
        }
    }
    psi
}

/// Standard normal quantile via the Abramowitz-Stegun 26.2.23 rational
/// approximation (|error| < 4.5e-4).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    let tail = p.min(1.0 - p);
    let t = (-2.0 * tail.ln()).sqrt();
    let num = 2.515517 + t * (0.802853 + t * 0.010328);
    let den = 1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308));
    let z = t - num / den;
    if p < 0.5 {
        -z
    } else {
        z
    }
}

/// In-sample innovation estimates for the centered series under the model.
fn innovations(model: &ArmaModel, z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut u = vec![0.0; n];
    for t in 0..n {
        let mut pred = 0.0;
        for i in 1..=model.p.min(t) {
            pred += model.alpha[i - 1] * z[t - i];
        }
        for j in 1..=model.q.min(t) {
            pred += model.beta[j - 1] * u[t - j];
        }
        u[t] = z[t] - pred;
    }
    u
}

/// Iterative h-step forecasts with confidence intervals at level `gamma`.
///
/// Step-h variance accumulates squared psi weights of the fitted model
/// scaled by the innovation variance, plus the estimation-noise variance;
/// the interval is `point +- z_gamma * std`.
pub fn forecast(
    model: &ArmaModel,
    history: &AggregateSeries,
    h: usize,
    gamma: f64,
) -> Result<ForecastResult, ForecastError> {
    if h < 1 {
        return Err(ForecastError::InvalidHorizon);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(ForecastError::InvalidConfidence(gamma));
    }
    let values = &history.values;
    let diffed = difference(values, model.d)?;
    let z: Vec<f64> = diffed.iter().map(|v| v - model.mean).collect();
    let u = innovations(model, &z);

    let n = z.len();
    let mut zext = z.clone();
    for s in 0..h {
        let t = n + s;
        let mut pred = 0.0;
        for i in 1..=model.p.min(t) {
            pred += model.alpha[i - 1] * zext[t - i];
        }
        for j in 1..=model.q.min(t) {
            // Future innovations are zero; past ones come from the
            // in-sample recursion.
            if t - j < n {
                pred += model.beta[j - 1] * u[t - j];
            }
        }
        zext.push(pred);
    }
    let diffed_forecasts: Vec<f64> = zext[n..].iter().map(|v| v + model.mean).collect();

    // Undo the differencing by cumulating from the observed tails.
    let mut fore = diffed_forecasts;
    for k in (0..model.d).rev() {
        let stage = difference(values, k)?;
        let last = *stage.last().unwrap();
        let mut level = Vec::with_capacity(fore.len());
        let mut prev = last;
        for f in &fore {
            prev += f;
            level.push(prev);
        }
        fore = level;
    }

    let psi = psi_weights(model, h);
    let z_gamma = normal_quantile(0.5 * (1.0 + gamma));
    let mut acc = 0.0;
    let mut lo = Vec::with_capacity(h);
    let mut hi = Vec::with_capacity(h);
    for s in 0..h {
        acc += psi[s] * psi[s];
        let var = model.sigma_u2 * acc + model.sigma_eps2;
        let half = z_gamma * var.max(0.0).sqrt();
        lo.push(fore[s] - half);
        hi.push(fore[s] + half);
    }

    Ok(ForecastResult {
        points: fore,
        interval_lo: lo,
        interval_hi: hi,
        gamma,
    })
}

/// Simulates `n` points of mean + ARMA(p, q) with standard-normal
/// innovations scaled by `sigma_u`, after a burn-in. Deterministic in
/// `seed`.
pub fn simulate_arma(
    alpha: &[f64],
    beta: &[f64],
    sigma_u: f64,
    mean: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let burn = 500;
    let total = n + burn;
    let p = alpha.len();
    let q = beta.len();
    let mut z: Vec<f64> = Vec::with_capacity(total);
    let mut u: Vec<f64> = Vec::with_capacity(total);
    for t in 0..total {
        let ut = sigma_u * standard_normal(seed, t as u64);
        let mut v = ut;
        for i in 1..=p.min(t) {
            v += alpha[i - 1] * z[t - i];
        }
        for j in 1..=q.min(t) {
            v += beta[j - 1] * u[t - j];
        }
        u.push(ut);
        z.push(v);
    }
    z[burn..].iter().map(|v| v + mean).collect()
}

#[cfg(test)]
mod tests;
