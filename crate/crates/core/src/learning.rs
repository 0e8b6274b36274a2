//! Learning an unknown drift intercept `α` by Kalman filtering, and portfolio
//! choice on the augmented state `m = (x, α̂)`.
//!
//! Block layout of every augmented quantity is `(x, α̂)`: indices `0..d` for the
//! factors, `d..d+N` for the drift estimate.

use std::io::Write;

use serde::Serialize;

use crate::control::{log_value_rate, solve_system, Drift, Hjb, Preferences, RiccatiPath};
use crate::error::{Error, Result};
use crate::market::{MarketModel, Path};
use crate::numerics::{cholesky, lu_solve, spd_inverse, spd_solve, symmetrize, Matrix, TimeGrid, Vector};
use crate::views::{CoeffTable, ConditionalCoeffs, ViewSpec};

/// Normal prior `α ~ N(α₀, Γ₀)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftPrior {
    pub alpha0: Vector,
    pub gamma0: Matrix,
}

impl DriftPrior {
    pub fn new(alpha0: Vector, gamma0: Matrix) -> Result<Self> {
        if gamma0.nrows() != alpha0.len() || !gamma0.is_square() {
            return Err(Error::Dimension(format!("prior mean has {} entries, covariance is {}×{}", alpha0.len(), gamma0.nrows(), gamma0.ncols())));
        }
        cholesky(&gamma0)?;
        Ok(Self { alpha0, gamma0: symmetrize(&gamma0) })
    }
}

/// Posterior mean and error covariance at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub alpha_hat: Vector,
    pub gamma: Matrix,
}

/// Joint loadings `G` of (asset, factor) shocks on the driving Brownian motions.
///
/// With partial correlation `ρ < 1` the asset block also loads on an independent
/// copy of the drivers, `[ρL^S, √(1−ρ²)L^S; L^X, 0]`.
pub fn joint_loadings(m: &MarketModel) -> Matrix {
    let (n, d, k) = (m.n_assets(), m.d(), m.n_drivers());
    let rho = m.rho();
    let l_s = m.assets().l_s();
    let l_x = m.factors().l_x();
    if rho == 1.0 {
        let mut g = Matrix::zeros(n + d, k);
        g.view_mut((0, 0), (n, k)).copy_from(l_s);
        g.view_mut((n, 0), (d, k)).copy_from(l_x);
        return g;
    }
    let mut g = Matrix::zeros(n + d, 2 * k);
    g.view_mut((0, 0), (n, k)).copy_from(&(l_s * rho));
    g.view_mut((0, k), (n, k)).copy_from(&(l_s * (1.0 - rho * rho).sqrt()));
    g.view_mut((n, 0), (d, k)).copy_from(l_x);
    g
}

/// `GGᵀ = [Σ^S, Σ^{S,X}; (Σ^{S,X})ᵀ, Σ^X]`.
pub fn joint_cov(m: &MarketModel) -> Matrix {
    let (n, d) = (m.n_assets(), m.d());
    let mut j = Matrix::zeros(n + d, n + d);
    j.view_mut((0, 0), (n, n)).copy_from(m.assets().sigma_s());
    j.view_mut((0, n), (n, d)).copy_from(m.sigma_sx());
    j.view_mut((n, 0), (d, n)).copy_from(&m.sigma_sx().transpose());
    j.view_mut((n, n), (d, d)).copy_from(m.factors().sigma_x());
    j
}

/// `Σ^S − Σ^{S,X}(Σ^X)^{−1}(Σ^{S,X})ᵀ`, rejected unless positive definite.
pub fn schur_complement(m: &MarketModel) -> Result<Matrix> {
    let c = m.sigma_sx();
    let s = m.assets().sigma_s() - c * spd_solve(m.factors().sigma_x(), &c.transpose())?;
    let s = symmetrize(&s);
    cholesky(&s).map_err(|e| Error::Domain(format!("asset variance net of factor shocks is not positive definite: {e}")))?;
    Ok(s)
}

/// `Γ(t) = (Γ₀^{−1} + t S^{−1})^{−1}` with `S` the Schur complement, evaluated as
/// `(I + tΓ₀S^{−1})^{−1}Γ₀` so that tiny priors stay well conditioned.
pub fn gamma_t(prior: &DriftPrior, m: &MarketModel, t: f64) -> Result<Matrix> {
    let s = schur_complement(m)?;
    gamma_from_schur(prior, &s, t)
}

fn gamma_from_schur(prior: &DriftPrior, schur: &Matrix, t: f64) -> Result<Matrix> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("filter time must be nonnegative, got {t}")));
    }
    let n = prior.gamma0.nrows();
    if schur.nrows() != n {
        return Err(Error::Dimension(format!("prior has {n} assets, model has {}", schur.nrows())));
    }
    let lhs = Matrix::identity(n, n) + spd_solve(schur, &prior.gamma0)?.transpose() * t;
    Ok(symmetrize(&lu_solve(&lhs, &prior.gamma0)?))
}

/// Rate of precision gain split into what asset returns teach, `(Σ^S)^{−1}`, and
/// what correlated factor moves add,
/// `(Σ^S)^{−1}Σ^{S,X}(Σ^X − (Σ^{S,X})ᵀ(Σ^S)^{−1}Σ^{S,X})^{−1}(Σ^{S,X})ᵀ(Σ^S)^{−1}`.
pub fn precision_split(m: &MarketModel) -> Result<(Matrix, Matrix)> {
    let si = m.assets().sigma_s_inv().clone();
    let c = m.sigma_sx();
    let inner = symmetrize(&(m.factors().sigma_x() - c.transpose() * &si * c));
    let load = &si * c;
    let factor = if c.amax() == 0.0 { Matrix::zeros(si.nrows(), si.ncols()) } else { symmetrize(&(&load * spd_solve(&inner, &load.transpose())?)) };
    Ok((si, factor))
}

/// Conditional drift pieces seen by the filter and the augmented investor.
struct Known {
    /// `λ̃ = α̃ − α`.
    lambda: Vector,
    beta: Matrix,
    theta: Matrix,
    theta_mu: Vector,
}

enum Law {
    Plain { theta_mu: Vector },
    Views { coeffs: ConditionalCoeffs, table: Option<CoeffTable> },
}

impl Law {
    fn new(m: &MarketModel, v: Option<&ViewSpec>, grid: Option<&TimeGrid>) -> Result<Self> {
        Ok(match v {
            None => Law::Plain { theta_mu: m.factors().theta() * m.factors().mu() },
            Some(v) => {
                let coeffs = ConditionalCoeffs::new(m, v)?;
                let table = match grid {
                    Some(g) => Some(coeffs.tabulate(g)?),
                    None => None,
                };
                Law::Views { coeffs, table }
            }
        })
    }

    fn known(&self, m: &MarketModel, t: f64) -> Result<Known> {
        Ok(match self {
            Law::Plain { theta_mu } => Known {
                lambda: Vector::zeros(m.n_assets()),
                beta: m.assets().beta().clone(),
                theta: m.factors().theta().clone(),
                theta_mu: theta_mu.clone(),
            },
            Law::Views { coeffs, table } => {
                let owned;
                let s = match table {
                    Some(tab) => tab.at(t),
                    None => {
                        owned = coeffs.at(t)?;
                        &owned
                    }
                };
                Known { lambda: &s.alpha - m.assets().alpha(), beta: s.beta.clone(), theta: s.theta.clone(), theta_mu: s.theta_mu.clone() }
            }
        })
    }
}

/// Filter output along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub states: Vec<FilterState>,
    /// Per-step innovations `ΔN − Hα̂ h`.
    pub innovations: Vec<Vector>,
}

/// Euler discretization of `dα̂ = K(t)(dN − Hα̂ dt)`, with `K(t) = Γ(t)Hᵀ(GGᵀ)^{−1}`
/// and `Γ(t)` from its closed form.
pub struct DriftFilter {
    model: MarketModel,
    prior: DriftPrior,
    grid: TimeGrid,
    law: Law,
    gammas: Vec<Matrix>,
    gains: Vec<Matrix>,
    half_var: Vector,
}

impl DriftFilter {
    pub fn new(prior: &DriftPrior, m: &MarketModel, v: Option<&ViewSpec>, grid: &TimeGrid) -> Result<Self> {
        if prior.alpha0.len() != m.n_assets() {
            return Err(Error::Dimension(format!("prior has {} assets, model has {}", prior.alpha0.len(), m.n_assets())));
        }
        let schur = schur_complement(m)?;
        let j_inv = spd_inverse(&joint_cov(m))?;
        let n = m.n_assets();
        let top = j_inv.rows(0, n).into_owned();
        let gammas = grid.nodes().map(|t| gamma_from_schur(prior, &schur, t)).collect::<Result<Vec<_>>>()?;
        let gains = gammas.iter().map(|g| g * &top).collect();
        Ok(Self {
            model: m.clone(),
            prior: prior.clone(),
            grid: *grid,
            law: Law::new(m, v, Some(grid))?,
            gammas,
            gains,
            half_var: m.assets().sigma_s().diagonal() * 0.5,
        })
    }

    /// `K(t_k)` (N×(N+d)).
    pub fn gain(&self, k: usize) -> &Matrix {
        &self.gains[k]
    }

    pub fn run(&self, path: &Path) -> Result<FilterTrace> {
        let n_nodes = self.grid.n_nodes();
        if path.factors.len() != n_nodes || path.log_prices.len() != n_nodes {
            return Err(Error::Dimension(format!("path has {} nodes, filter grid has {}", path.factors.len(), n_nodes)));
        }
        let (n, d) = (self.model.n_assets(), self.model.d());
        let h = self.grid.step();
        let mut alpha_hat = self.prior.alpha0.clone();
        let mut states = Vec::with_capacity(n_nodes);
        let mut innovations = Vec::with_capacity(n_nodes - 1);
        for k in 0..n_nodes {
            let t = self.grid.node(k);
            states.push(FilterState { t, alpha_hat: alpha_hat.clone(), gamma: self.gammas[k].clone() });
            if k + 1 == n_nodes {
                break;
            }
            let c = self.law.known(&self.model, t)?;
            let x = &path.factors[k];
            let mut dn = Vector::zeros(n + d);
            let dr = &path.log_prices[k + 1] - &path.log_prices[k];
            dn.rows_mut(0, n).copy_from(&(dr - (&c.lambda + &c.beta * x - &self.half_var) * h));
            dn.rows_mut(n, d).copy_from(&(&path.factors[k + 1] - x - (&c.theta_mu - &c.theta * x) * h));
            let mut innov = dn;
            let mut head = innov.rows_mut(0, n);
            head -= &alpha_hat * h;
            alpha_hat += &self.gains[k] * &innov;
            innovations.push(innov);
        }
        Ok(FilterTrace { states, innovations })
    }
}

/// Filter states along one observed path.
pub fn filter_path(prior: &DriftPrior, m: &MarketModel, v: Option<&ViewSpec>, path: &Path, grid: &TimeGrid) -> Result<Vec<FilterState>> {
    Ok(DriftFilter::new(prior, m, v, grid)?.run(path)?.states)
}

/// Writes `t, alpha_hat_i, gamma_ii` per node.
pub fn write_filter_csv<W: Write>(states: &[FilterState], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = states.first().map_or(0, |s| s.alpha_hat.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("alpha_hat_{i}")));
    header.extend((0..n).map(|i| format!("gamma_{i}{i}")));
    w.write_record(&header)?;
    for s in states {
        let mut row = vec![s.t.to_string()];
        row.extend(s.alpha_hat.iter().map(|v| v.to_string()));
        row.extend((0..n).map(|i| s.gamma[(i, i)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficients of the augmented state `M = (X, α̂)` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSnapshot {
    pub t: f64,
    /// `Θ̃^M = diag(Θ̃, 0)`.
    pub theta: Matrix,
    /// `Θ̃^M μ̃^M = (Θ̃μ̃, 0)`.
    pub theta_mu: Vector,
    /// `β̃^M = [β̃ | I_N]`.
    pub beta: Matrix,
    /// `λ̃ = α̃ − α`.
    pub lambda: Vector,
    /// `L^M = [L^X; K G]`.
    pub l_m: Matrix,
    /// `Σ^M = L^M (L^M)ᵀ`.
    pub sigma_m: Matrix,
    /// `Σ^{S,M} = [Σ^{S,X} | Γ]`.
    pub sigma_sm: Matrix,
    pub gamma: Matrix,
}

/// Market, views and drift prior assembled into the augmented linear-Gaussian model.
pub struct AugmentedModel {
    model: MarketModel,
    prior: DriftPrior,
    law: Law,
    horizon: Option<f64>,
    schur: Matrix,
    j_top: Matrix,
    g: Matrix,
}

impl AugmentedModel {
    pub fn new(prior: &DriftPrior, m: &MarketModel, v: Option<&ViewSpec>) -> Result<Self> {
        if prior.alpha0.len() != m.n_assets() {
            return Err(Error::Dimension(format!("prior has {} assets, model has {}", prior.alpha0.len(), m.n_assets())));
        }
        let schur = schur_complement(m)?;
        let j_inv = spd_inverse(&joint_cov(m))?;
        Ok(Self {
            model: m.clone(),
            prior: prior.clone(),
            law: Law::new(m, v, None)?,
            horizon: v.map(|v| v.horizon()),
            schur,
            j_top: j_inv.rows(0, m.n_assets()).into_owned(),
            g: joint_loadings(m),
        })
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn prior(&self) -> &DriftPrior {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.model.d() + self.model.n_assets()
    }

    pub fn gamma(&self, t: f64) -> Result<Matrix> {
        gamma_from_schur(&self.prior, &self.schur, t)
    }

    pub fn at(&self, t: f64) -> Result<AugmentedSnapshot> {
        let (n, d) = (self.model.n_assets(), self.model.d());
        let c = self.law.known(&self.model, t)?;
        let gamma = self.gamma(t)?;
        let gain = &gamma * &self.j_top;
        let mut theta = Matrix::zeros(d + n, d + n);
        theta.view_mut((0, 0), (d, d)).copy_from(&c.theta);
        let mut theta_mu = Vector::zeros(d + n);
        theta_mu.rows_mut(0, d).copy_from(&c.theta_mu);
        let mut beta = Matrix::zeros(n, d + n);
        beta.view_mut((0, 0), (n, d)).copy_from(&c.beta);
        beta.view_mut((0, d), (n, n)).fill_with_identity();
        let k = self.g.ncols();
        let mut l_m = Matrix::zeros(d + n, k);
        l_m.view_mut((0, 0), (d, k)).copy_from(&self.g.rows(n, d));
        l_m.view_mut((d, 0), (n, k)).copy_from(&(&gain * &self.g));
        let sigma_m = symmetrize(&(&l_m * l_m.transpose()));
        let mut sigma_sm = Matrix::zeros(n, d + n);
        sigma_sm.view_mut((0, 0), (n, d)).copy_from(self.model.sigma_sx());
        sigma_sm.view_mut((0, d), (n, n)).copy_from(&gamma);
        Ok(AugmentedSnapshot { t, theta, theta_mu, beta, lambda: c.lambda, l_m, sigma_m, sigma_sm, gamma })
    }

    fn hjb_at(&self, pref: &Preferences, s: &AugmentedSnapshot) -> Hjb {
        Hjb::from_parts(pref, self.model.assets().r_f(), s.sigma_m.clone(), self.model.assets().sigma_s_inv().clone(), s.sigma_sm.clone())
    }
}

/// Value-function coefficients on the `(d+N)`-dimensional augmented state.
pub fn solve_augmented(aug: &AugmentedModel, pref: &Preferences, grid: &TimeGrid) -> Result<RiccatiPath> {
    if let Some(h) = aug.horizon {
        if (grid.t1() - h).abs() > 1e-12 {
            return Err(Error::Domain(format!("control grid ends at {} but views refer to {h}", grid.t1())));
        }
    }
    let dim = aug.dim();
    let solved = solve_system(dim, grid, Matrix::zeros(dim, dim), Vector::zeros(dim), None, |t, state, n| match aug.at(t) {
        Ok(s) => {
            let drift = Drift { theta: &s.theta, theta_mu: &s.theta_mu, alpha: &s.lambda, beta: &s.beta };
            aug.hjb_at(pref, &s).rhs(&drift, state, n)
        }
        Err(_) => Vector::from_element(state.len(), f64::NAN),
    })?;
    Ok(solved.path)
}

/// Optimal weights under drift learning, split into their three demands.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPolicy {
    pub t: f64,
    pub weights: Vector,
    pub mean_variance: Vector,
    /// `H^x = (1/γ)Σ^{S,−1}Σ^{S,X}(A^x x + b^x + A^{x,α}α̂)`.
    pub factor_hedge: Vector,
    /// `H^α = (1/γ)Σ^{S,−1}Γ(t)(A^α α̂ + b^α + (A^{x,α})ᵀx)`.
    pub estimation_hedge: Vector,
}

pub fn augmented_policy(path: &RiccatiPath, aug: &AugmentedModel, pref: &Preferences, t: f64, x: &Vector, alpha_hat: &Vector) -> Result<AugmentedPolicy> {
    let m = aug.model();
    let (n, d) = (m.n_assets(), m.d());
    if x.len() != d || alpha_hat.len() != n {
        return Err(Error::Dimension(format!("state sizes {} and {}, expected {d} and {n}", x.len(), alpha_hat.len())));
    }
    let s = aug.at(t)?;
    let a = path.a_at(t);
    let b = path.b_at(t);
    let si = m.assets().sigma_s_inv();
    let g = pref.gamma();
    let r = Vector::from_element(n, m.assets().r_f());
    let a_x = a.view((0, 0), (d, d));
    let a_xa = a.view((0, d), (d, n));
    let a_a = a.view((d, d), (n, n));
    let mean_variance = si * (alpha_hat + &s.lambda + s.beta.columns(0, d) * x - r) / g;
    let factor_hedge = si * (m.sigma_sx() * (a_x * x + b.rows(0, d) + a_xa * alpha_hat)) / g;
    let estimation_hedge = si * (&s.gamma * (a_a * alpha_hat + b.rows(d, n) + a_xa.transpose() * x)) / g;
    let weights = &mean_variance + &factor_hedge + &estimation_hedge;
    Ok(AugmentedPolicy { t, weights, mean_variance, factor_hedge, estimation_hedge })
}

/// Relative residual `|𝓛V|/|V|` of the augmented HJB equation at node `k`.
pub fn augmented_hjb_residual(aug: &AugmentedModel, pref: &Preferences, path: &RiccatiPath, k: usize, z: f64, state: &Vector) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {z}")));
    }
    let g_t = log_value_rate(path, k, state)?;
    let s = aug.at(path.grid.node(k))?;
    let drift = Drift { theta: &s.theta, theta_mu: &s.theta_mu, alpha: &s.lambda, beta: &s.beta };
    Ok(aug.hjb_at(pref, &s).operator(&drift, aug.model().assets().sigma_s(), g_t, &path.a[k], &path.b[k], state).abs())
}
