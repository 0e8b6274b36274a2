//! Monthly-panel calibration: AR(1) fits for mean-reverting factors, own-factor
//! OLS for asset drifts and a joint Cholesky for the diffusion.
//!
//! Factors follow their exact AR(1) discretization and log-prices the first-order
//! one, `ln S_{t+1}/S_t = (α − ½Σ^S_ii)Δt + β_ii X_{i,t} Δt + ε`. The joint
//! covariance is estimated from the one-step innovations of both regressions and
//! mapped back to instantaneous rates through the exact OU integrals:
//! `Cov(ε_X,i, ε_X,j) = Σ^X_ij (1 − e^{−(θ_i+θ_j)Δt})/(θ_i+θ_j)` and
//! `Cov(ε_X,i, ε_S,k) = Σ^{X,S}_ik (1 − e^{−θ_iΔt})/θ_i`.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{AssetDynamics, FactorDynamics, MarketModel};
use crate::numerics::{cholesky, Matrix, Vector};

/// Default observation spacing (monthly).
pub const MONTH: f64 = 1.0 / 12.0;

/// Fewest observations accepted by any regression.
pub const MIN_OBSERVATIONS: usize = 24;

/// Aligned monthly prices and factor levels, one asset per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyPanel {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    /// `prices[i][t]` for asset `i`.
    pub prices: Vec<Vec<f64>>,
    /// `yields[i][t]`, the factor paired with asset `i`.
    pub yields: Vec<Vec<f64>>,
    pub dt: f64,
    /// Rows discarded for missing or unparseable values.
    pub dropped_rows: usize,
}

impl MonthlyPanel {
    pub fn new(dates: Vec<String>, tickers: Vec<String>, prices: Vec<Vec<f64>>, yields: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let n = tickers.len();
        if n == 0 || prices.len() != n || yields.len() != n {
            return Err(Error::Calibration(format!("{} tickers, {} price series, {} yield series", n, prices.len(), yields.len())));
        }
        let len = dates.len();
        if prices.iter().chain(&yields).any(|s| s.len() != len) {
            return Err(Error::Calibration("series lengths differ from the date column".into()));
        }
        if len < MIN_OBSERVATIONS + 1 {
            return Err(Error::Calibration(format!("{len} observations, need at least {}", MIN_OBSERVATIONS + 1)));
        }
        if prices.iter().flatten().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Calibration("prices must be positive and finite".into()));
        }
        if yields.iter().flatten().any(|y| !y.is_finite()) {
            return Err(Error::Calibration("factor levels must be finite".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Calibration(format!("observation spacing must be positive, got {dt}")));
        }
        Ok(Self { dates, tickers, prices, yields, dt, dropped_rows: 0 })
    }

    /// Reads `date, price_<ticker>..., yield_<ticker>...`; every ticker needs both columns.
    pub fn from_reader<R: std::io::Read>(r: R, dt: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        let mut price_cols = Vec::new();
        let mut yield_cols = Vec::new();
        for (i, h) in header.iter().enumerate() {
            if let Some(t) = h.strip_prefix("price_") {
                price_cols.push((t.to_string(), i));
            } else if let Some(t) = h.strip_prefix("yield_") {
                yield_cols.push((t.to_string(), i));
            } else if i != 0 {
                return Err(Error::Config(format!("unexpected column '{h}'")));
            }
        }
        if header.get(0) != Some("date") {
            return Err(Error::Config("first column must be 'date'".into()));
        }
        let mut pairs = Vec::new();
        for (t, pi) in &price_cols {
            let yi = yield_cols
                .iter()
                .find(|(u, _)| u == t)
                .map(|(_, i)| *i)
                .ok_or_else(|| Error::Config(format!("no yield column for '{t}'")))?;
            pairs.push((t.clone(), *pi, yi));
        }
        if yield_cols.len() != price_cols.len() {
            return Err(Error::Config("every yield column needs a matching price column".into()));
        }
        let n = pairs.len();
        let mut dates = Vec::new();
        let mut prices = vec![Vec::new(); n];
        let mut yields = vec![Vec::new(); n];
        let mut dropped = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let parsed: Option<Vec<(f64, f64)>> = pairs
                .iter()
                .map(|(_, pi, yi)| {
                    let p = rec.get(*pi)?.parse::<f64>().ok()?;
                    let y = rec.get(*yi)?.parse::<f64>().ok()?;
                    (p.is_finite() && y.is_finite()).then_some((p, y))
                })
                .collect();
            match (rec.get(0), parsed) {
                (Some(d), Some(vals)) if !d.is_empty() => {
                    dates.push(d.to_string());
                    for (i, (p, y)) in vals.into_iter().enumerate() {
                        prices[i].push(p);
                        yields[i].push(y);
                    }
                }
                _ => dropped += 1,
            }
        }
        let mut panel = Self::new(dates, pairs.into_iter().map(|p| p.0).collect(), prices, yields, dt)?;
        panel.dropped_rows = dropped;
        Ok(panel)
    }

    pub fn from_path(path: &Path, dt: f64) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, dt)
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }

    /// `ln S_{t+1}/S_t` per asset.
    pub fn log_returns(&self) -> Vec<Vec<f64>> {
        self.prices.iter().map(|p| p.windows(2).map(|w| (w[1] / w[0]).ln()).collect()).collect()
    }
}

/// Intercept, slope and residuals of `y = a + b x + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ols {
    pub intercept: f64,
    pub slope: f64,
    pub residuals: Vec<f64>,
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<Ols> {
    if x.len() != y.len() {
        return Err(Error::Calibration(format!("regressor has {} points, response {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < MIN_OBSERVATIONS {
        return Err(Error::Calibration(format!("{n} observations, need at least {MIN_OBSERVATIONS}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 1e-14 * (nf * mx * mx).max(f64::MIN_POSITIVE)) {
        return Err(Error::Calibration("regressor has no variation beyond the intercept".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let s2 = residuals.iter().map(|e| e * e).sum::<f64>() / (nf - 2.0);
    Ok(Ols { intercept, slope, residuals, slope_se: (s2 / sxx).sqrt() })
}

/// Continuous-time OU parameters from an AR(1) fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuFit {
    pub theta: f64,
    pub mu: f64,
    /// AR(1) slope `b̂ = e^{−θΔt}`.
    pub b: f64,
    pub b_se: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

/// `θ̂ = −ln b̂/Δt`, `μ̂ = â/(1 − b̂)` from OLS of `X_{t+1}` on `X_t`.
pub fn fit_factor_ou(series: &[f64], dt: f64) -> Result<OuFit> {
    if series.len() < MIN_OBSERVATIONS + 1 {
        return Err(Error::Calibration(format!("{} observations, need at least {}", series.len(), MIN_OBSERVATIONS + 1)));
    }
    let fit = ols(&series[..series.len() - 1], &series[1..])?;
    let b = fit.slope;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Calibration(format!("AR(1) slope {b:.6} is outside (0, 1); the series is not mean-reverting")));
    }
    Ok(OuFit { theta: -b.ln() / dt, mu: fit.intercept / (1.0 - b), b, b_se: fit.slope_se, residuals: fit.residuals })
}

/// Asset drift parameters from the own-factor regression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssetFit {
    pub alpha: f64,
    pub beta: f64,
    pub beta_se: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

/// `β̂ = b̂/Δt`, `α̂ = ĉ/Δt + ½Σ̂^S_ii` from OLS of `ln S_{t+1}/S_t` on `X_t`.
pub fn fit_asset(log_returns: &[f64], factor: &[f64], dt: f64, sample_var_annualized: f64) -> Result<AssetFit> {
    let fit = ols(factor, log_returns)?;
    Ok(AssetFit {
        alpha: fit.intercept / dt + 0.5 * sample_var_annualized,
        beta: fit.slope / dt,
        beta_se: fit.slope_se / dt,
        residuals: fit.residuals,
    })
}

fn sample_cov(series: &[&[f64]]) -> Matrix {
    let k = series.len();
    let n = series[0].len();
    let means: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / n as f64).collect();
    Matrix::from_fn(k, k, |i, j| series[i].iter().zip(series[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum::<f64>() / (n as f64 - 1.0))
}

/// Instantaneous joint covariance `[Σ^X, Σ^{X,S}; Σ^{S,X}, Σ^S]` from one-step
/// innovations, with the OU integrals undone per factor.
pub fn joint_cov_from_innovations(factor_resid: &[&[f64]], asset_resid: &[&[f64]], thetas: &[f64], dt: f64) -> Result<Matrix> {
    let d = factor_resid.len();
    if thetas.len() != d {
        return Err(Error::Calibration(format!("{} mean-reversion rates for {d} factors", thetas.len())));
    }
    let all: Vec<&[f64]> = factor_resid.iter().chain(asset_resid).copied().collect();
    if all.iter().any(|s| s.len() != all[0].len()) {
        return Err(Error::Calibration("innovation series have different lengths".into()));
    }
    let raw = sample_cov(&all);
    let integral = |k: f64| if k * dt < 1e-12 { dt } else { -(-k * dt).exp_m1() / k };
    let k = all.len();
    Ok(Matrix::from_fn(k, k, |i, j| {
        let scale = match (i < d, j < d) {
            (true, true) => integral(thetas[i] + thetas[j]),
            (true, false) => integral(thetas[i]),
            (false, true) => integral(thetas[j]),
            (false, false) => dt,
        };
        raw[(i, j)] / scale
    }))
}

/// Cholesky `L̂L̂ᵀ = Σ̂` split into `(L^X, L^S)` (first `d` rows, last `N` rows).
pub fn split_cholesky(joint: &Matrix, d: usize) -> Result<(Matrix, Matrix)> {
    let l = cholesky(joint).map_err(|e| Error::Calibration(format!("joint covariance is not positive definite: {e}")))?;
    let k = joint.nrows();
    Ok((l.rows(0, d).into_owned(), l.rows(d, k - d).into_owned()))
}

/// Diffusion loadings `(L^X, L^S)` of the panel, driver dimension `d + N`.
pub fn joint_diffusion(panel: &MonthlyPanel) -> Result<(Matrix, Matrix)> {
    Ok(calibrate(panel)?.diffusion)
}

/// Everything estimated from one panel.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub model: MarketModel,
    pub factors: Vec<OuFit>,
    pub assets: Vec<AssetFit>,
    pub joint_cov: Matrix,
    pub diffusion: (Matrix, Matrix),
    pub report: CalibrationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub tickers: Vec<String>,
    pub observations: usize,
    pub dropped_rows: usize,
    pub dt: f64,
    pub factors: Vec<OuFit>,
    pub assets: Vec<AssetFit>,
    pub r_f: f64,
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "observations: {} (dropped rows: {}), dt = {:.6}", self.observations, self.dropped_rows, self.dt)?;
        writeln!(f, "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "ticker", "theta", "mu", "ar_slope", "slope_se", "alpha", "beta")?;
        for (i, t) in self.tickers.iter().enumerate() {
            let (x, a) = (&self.factors[i], &self.assets[i]);
            writeln!(f, "{:<10} {:>10.4} {:>10.4} {:>10.5} {:>10.5} {:>10.4} {:>10.4}", t, x.theta, x.mu, x.b, x.b_se, a.alpha, a.beta)?;
        }
        write!(f, "risk-free rate: {}", self.r_f)
    }
}

/// Full calibration with the default risk-free rate of the published model.
pub fn calibrate(panel: &MonthlyPanel) -> Result<Calibration> {
    calibrate_with(panel, MarketModel::published().assets().r_f())
}

pub fn calibrate_with(panel: &MonthlyPanel, r_f: f64) -> Result<Calibration> {
    let n = panel.n_assets();
    let dt = panel.dt;
    let returns = panel.log_returns();
    let factors = panel.yields.iter().map(|s| fit_factor_ou(s, dt)).collect::<Result<Vec<_>>>()?;
    // asset regressions first with a placeholder variance; α only needs the final Σ̂^S_ii
    let mut assets = (0..n).map(|i| fit_asset(&returns[i], &panel.yields[i][..panel.n_obs() - 1], dt, 0.0)).collect::<Result<Vec<_>>>()?;
    let fr: Vec<&[f64]> = factors.iter().map(|f| f.residuals.as_slice()).collect();
    let ar: Vec<&[f64]> = assets.iter().map(|a| a.residuals.as_slice()).collect();
    let thetas: Vec<f64> = factors.iter().map(|f| f.theta).collect();
    let joint = joint_cov_from_innovations(&fr, &ar, &thetas, dt)?;
    for (i, a) in assets.iter_mut().enumerate() {
        a.alpha += 0.5 * joint[(n + i, n + i)];
    }
    let (l_x, l_s) = split_cholesky(&joint, n)?;
    let fd = FactorDynamics::new(Matrix::from_diagonal(&Vector::from_iterator(n, thetas.iter().copied())), Vector::from_iterator(n, factors.iter().map(|f| f.mu)), l_x.clone())?;
    let ad = AssetDynamics::new(
        Vector::from_iterator(n, assets.iter().map(|a| a.alpha)),
        Matrix::from_diagonal(&Vector::from_iterator(n, assets.iter().map(|a| a.beta))),
        l_s.clone(),
        r_f,
    )?;
    let model = MarketModel::new(fd, ad, 1.0)?;
    let report = CalibrationReport {
        tickers: panel.tickers.clone(),
        observations: panel.n_obs(),
        dropped_rows: panel.dropped_rows,
        dt,
        factors: factors.clone(),
        assets: assets.clone(),
        r_f,
    };
    Ok(Calibration { model, factors, assets, joint_cov: joint, diffusion: (l_x, l_s), report })
}

/// Monthly panel simulated from `m` (prices from 1, factors from their long-run mean).
/// Log-prices follow the first-order discretization at spacing `dt`.
pub fn simulate_panel(m: &MarketModel, n_obs: usize, dt: f64, seed: u64) -> Result<MonthlyPanel> {
    use crate::market::{unconditional_kernels, PathEngine};
    use crate::numerics::TimeGrid;
    if m.d() != m.n_assets() {
        return Err(Error::Calibration("panel simulation pairs one factor with each asset".into()));
    }
    let grid = TimeGrid::new(0.0, dt * (n_obs - 1) as f64, n_obs - 1)?;
    let engine = PathEngine::new(m, unconditional_kernels(m.factors(), &grid), grid, m.factors().mu(), &Vector::from_element(m.n_assets(), 1.0))?;
    let path = engine.path(seed, 0);
    let n = m.n_assets();
    let prices = (0..n).map(|i| path.log_prices.iter().map(|l| l[i].exp()).collect()).collect();
    let yields = (0..n).map(|i| path.factors.iter().map(|x| x[i]).collect()).collect();
    let dates = (0..n_obs).map(|k| format!("m{k:05}")).collect();
    let tickers = (0..n).map(|i| format!("A{i}")).collect();
    MonthlyPanel::new(dates, tickers, prices, yields, dt)
}
