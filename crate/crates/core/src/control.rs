//! CRRA portfolio choice under views: the backward Riccati system for the log
//! value function `g(t, x) = ½xᵀA x + xᵀb + c`, its view/no-view decomposition,
//! optimal weights and wealth simulation.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{unconditional_kernels, MarketModel, PathEngine};
use crate::numerics::{cholesky, integrate_backward_with, spd_solve, symmetrize, Matrix, TimeGrid, Vector};
use crate::views::{conditional_kernels, ConditionalCoeffs, ViewSpec};

/// Norm of `A` above which the backward solve is declared to have blown up.
pub const BLOW_UP_NORM: f64 = 1e12;

/// Relative risk aversion of a CRRA investor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preferences {
    gamma: f64,
}

impl Preferences {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("risk aversion must exceed 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `(1 − γ)/γ`.
    fn k(&self) -> f64 {
        (1.0 - self.gamma) / self.gamma
    }

    pub fn utility(&self, z: f64) -> f64 {
        z.powf(1.0 - self.gamma) / (1.0 - self.gamma)
    }
}

/// Drift coefficients entering the Riccati system at one time.
pub(crate) struct Drift<'a> {
    pub theta: &'a Matrix,
    pub theta_mu: &'a Vector,
    pub alpha: &'a Vector,
    pub beta: &'a Matrix,
}

/// Time-invariant pieces of the HJB system.
pub(crate) struct Hjb {
    d: usize,
    k: f64,
    gamma: f64,
    r_f: f64,
    sigma_x: Matrix,
    sigma_s_inv: Matrix,
    /// `Σ^{S,X}` (N×d).
    cross: Matrix,
    /// `(Σ^{S,X})ᵀ (Σ^S)^{−1}` (d×N).
    cross_si: Matrix,
    /// `Σ^X + k (Σ^{S,X})ᵀ(Σ^S)^{−1}Σ^{S,X}`.
    quad: Matrix,
}

impl Hjb {
    fn new(m: &MarketModel, pref: &Preferences) -> Self {
        let a = m.assets();
        Self::from_parts(pref, a.r_f(), m.factors().sigma_x().clone(), a.sigma_s_inv().clone(), m.sigma_sx().clone())
    }

    /// State covariance `sigma_x` and asset/state covariance `cross` (N×d).
    pub(crate) fn from_parts(pref: &Preferences, r_f: f64, sigma_x: Matrix, sigma_s_inv: Matrix, cross: Matrix) -> Self {
        let k = pref.k();
        let cross_si = cross.transpose() * &sigma_s_inv;
        let quad = &sigma_x + &cross_si * &cross * k;
        Self { d: sigma_x.nrows(), k, gamma: pref.gamma(), r_f, sigma_x, sigma_s_inv, cross, cross_si, quad }
    }

    /// Time derivative of the stacked state `(vec A, b, c, vec G)`; `G` carries
    /// the sensitivity of `b` to the view realization and has `n_sens` columns.
    pub(crate) fn rhs(&self, drift: &Drift, state: &Vector, n_sens: usize) -> Vector {
        let d = self.d;
        let k = self.k;
        let a_mat = Matrix::from_column_slice(d, d, state.rows(0, d * d).as_slice());
        let b = state.rows(d * d, d).into_owned();
        let excess = drift.alpha - Vector::from_element(drift.alpha.len(), self.r_f);
        let w = &self.cross_si * drift.beta * k - drift.theta;
        let si_b = &self.sigma_s_inv * drift.beta;
        let da = -(drift.beta.transpose() * &si_b * k + &a_mat * &self.quad * &a_mat + &a_mat * &w + w.transpose() * &a_mat);
        // (βᵀ + A Cᵀ) Σ^{S,−1}
        let load = (si_b.transpose() + &a_mat * &self.cross_si) * k;
        let lin = &load * &self.cross + &a_mat * &self.sigma_x - drift.theta.transpose();
        let price = &excess + &self.cross * &b;
        let db = -(&load * &excess + &lin * &b + &a_mat * drift.theta_mu);
        let dc = -((1.0 - self.gamma) * self.r_f
            + 0.5 * (&self.sigma_x * &a_mat).trace()
            + drift.theta_mu.dot(&b)
            + 0.5 * b.dot(&(&self.sigma_x * &b))
            + 0.5 * k * price.dot(&(&self.sigma_s_inv * &price)));
        let mut out = Vector::zeros(state.len());
        out.rows_mut(0, d * d).copy_from_slice(da.as_slice());
        out.rows_mut(d * d, d).copy_from(&db);
        out[d * d + d] = dc;
        if n_sens > 0 {
            let g = Matrix::from_column_slice(d, n_sens, state.rows(d * d + d + 1, d * n_sens).as_slice());
            let dg = -(&lin * g);
            out.rows_mut(d * d + d + 1, d * n_sens).copy_from_slice(dg.as_slice());
        }
        out
    }

    /// Gradient and Hessian of `c(t₀)` in the view realization, from `b = b_ref + G δy`.
    fn c_sensitivity(&self, drift: &Drift, path: &RiccatiPath, sens: &[Matrix]) -> (Vector, Matrix) {
        let excess = drift.alpha - Vector::from_element(drift.alpha.len(), self.r_f);
        let n = path.grid.n_steps();
        let weight = |j: usize| simpson_weight(j, n) * path.grid.step();
        let kk = sens[0].ncols();
        let mut grad = Vector::zeros(kk);
        let mut hess = Matrix::zeros(kk, kk);
        for (j, (b, g)) in path.b.iter().zip(sens).enumerate() {
            let slope = drift.theta_mu + &self.sigma_x * b + &self.cross_si * (&excess + &self.cross * b) * self.k;
            grad += g.transpose() * slope * weight(j);
            hess += g.transpose() * &self.quad * g * weight(j);
        }
        (grad, symmetrize(&hess))
    }

    /// Optimal weights `(1/γ)Σ^{S,−1}(α + βx − r_f 1) + (1/γ)Σ^{S,−1}Σ^{S,X}(Ax + b)`, split.
    pub(crate) fn weights(&self, alpha: &Vector, beta: &Matrix, a: &Matrix, b: &Vector, x: &Vector) -> (Vector, Vector) {
        let excess = alpha + beta * x - Vector::from_element(alpha.len(), self.r_f);
        let mv = &self.sigma_s_inv * excess / self.gamma;
        let hedge = &self.sigma_s_inv * (&self.cross * (a * x + b)) / self.gamma;
        (mv, hedge)
    }

    /// `𝓛V / V` for the feedback weights, given `∂ₜg` and the drift of the state.
    /// Uses `V_z z/V = 1−γ`, `V_zz z²/V = −γ(1−γ)`, `V_xz z/V = (1−γ)u`, `V_x/V = u`,
    /// `V_xx/V = A + uuᵀ` with `u = Ax + b`.
    pub(crate) fn operator(&self, drift: &Drift, sigma_s: &Matrix, g_t: f64, a: &Matrix, b: &Vector, x: &Vector) -> f64 {
        let gamma = self.gamma;
        let u = a * x + b;
        let lambda = drift.alpha + drift.beta * x - Vector::from_element(drift.alpha.len(), self.r_f);
        let pi = &self.sigma_s_inv * (&lambda + &self.cross * &u) / gamma;
        let drift_x = drift.theta_mu - drift.theta * x;
        g_t + (1.0 - gamma) * (self.r_f + pi.dot(&lambda)) - 0.5 * gamma * (1.0 - gamma) * pi.dot(&(sigma_s * &pi))
            + (1.0 - gamma) * pi.dot(&(&self.cross * &u))
            + drift_x.dot(&u)
            + 0.5 * (&self.sigma_x * (a + &u * u.transpose())).trace()
    }
}

/// Composite Simpson weight (in units of the step) of node `j` out of `n` steps;
/// trapezoid when `n` is odd.
fn simpson_weight(j: usize, n: usize) -> f64 {
    if n % 2 == 1 {
        return if j == 0 || j == n { 0.5 } else { 1.0 };
    }
    match j {
        0 => 1.0 / 3.0,
        _ if j == n => 1.0 / 3.0,
        _ if j % 2 == 1 => 4.0 / 3.0,
        _ => 2.0 / 3.0,
    }
}

fn log_det(s: &Matrix) -> Result<f64> {
    Ok(2.0 * cholesky(s)?.diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Five-point `∂ₜg` at node `k` from stored coefficients.
pub(crate) fn log_value_rate(path: &RiccatiPath, k: usize, x: &Vector) -> Result<f64> {
    let n = path.grid.n_steps();
    if k < 2 || k + 2 > n {
        return Err(Error::Domain(format!("node {k} too close to the grid ends for the time stencil")));
    }
    let g = |j: usize| 0.5 * x.dot(&(&path.a[j] * x)) + x.dot(&path.b[j]) + path.c[j];
    Ok((g(k - 2) - 8.0 * g(k - 1) + 8.0 * g(k + 1) - g(k + 2)) / (12.0 * path.grid.step()))
}

/// Solution of the backward Riccati system on a grid.
#[derive(Debug, Clone)]
pub struct RiccatiPath {
    pub grid: TimeGrid,
    pub a: Vec<Matrix>,
    pub b: Vec<Vector>,
    pub c: Vec<f64>,
}

impl RiccatiPath {
    /// `A = 0`, `b = 0`, `c = 0` on every node.
    pub fn zeros(d: usize, grid: TimeGrid) -> Self {
        let n = grid.n_nodes();
        Self { grid, a: vec![Matrix::zeros(d, d); n], b: vec![Vector::zeros(d); n], c: vec![0.0; n] }
    }

    fn interp_weights(&self, t: f64) -> (usize, f64) {
        self.grid.locate(t)
    }

    /// `A(t)`, linearly interpolated between nodes.
    pub fn a_at(&self, t: f64) -> Matrix {
        let (k, w) = self.interp_weights(t);
        &self.a[k] * (1.0 - w) + &self.a[k + 1] * w
    }

    pub fn b_at(&self, t: f64) -> Vector {
        let (k, w) = self.interp_weights(t);
        &self.b[k] * (1.0 - w) + &self.b[k + 1] * w
    }

    pub fn c_at(&self, t: f64) -> f64 {
        let (k, w) = self.interp_weights(t);
        self.c[k] * (1.0 - w) + self.c[k + 1] * w
    }

    /// `g(t, x) = ½xᵀA(t)x + xᵀb(t) + c(t)`.
    pub fn log_value(&self, t: f64, x: &Vector) -> f64 {
        0.5 * x.dot(&(self.a_at(t) * x)) + x.dot(&self.b_at(t)) + self.c_at(t)
    }

    /// Writes `t, a_ij (row-major), b_i, c` per node.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.a[0].nrows();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..d).flat_map(|i| (0..d).map(move |j| format!("a_{i}_{j}"))));
        header.extend((0..d).map(|i| format!("b_{i}")));
        header.push("c".into());
        w.write_record(&header)?;
        for (k, t) in self.grid.nodes().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend((0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.a[k][(i, j)].to_string()));
            row.extend(self.b[k].iter().map(|v| v.to_string()));
            row.push(self.c[k].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(v: Option<&ViewSpec>, grid: &TimeGrid) -> Result<()> {
    if grid.t0() < 0.0 {
        return Err(Error::Domain("control grid must start at or after 0".into()));
    }
    if let Some(v) = v {
        if (grid.t1() - v.horizon()).abs() > 1e-12 {
            return Err(Error::Domain(format!("control grid ends at {} but views refer to {}", grid.t1(), v.horizon())));
        }
    }
    Ok(())
}

pub(crate) struct Solved {
    pub path: RiccatiPath,
    pub sens: Vec<Matrix>,
}

pub(crate) fn solve_system<F>(d: usize, grid: &TimeGrid, terminal_a: Matrix, terminal_b: Vector, terminal_g: Option<Matrix>, rhs: F) -> Result<Solved>
where
    F: Fn(f64, &Vector, usize) -> Vector,
{

    let n_sens = terminal_g.as_ref().map_or(0, |g| g.ncols());
    let mut init = Vector::zeros(d * d + d + 1 + d * n_sens);
    init.rows_mut(0, d * d).copy_from_slice(terminal_a.as_slice());
    init.rows_mut(d * d, d).copy_from(&terminal_b);
    if let Some(g) = &terminal_g {
        init.rows_mut(d * d + d + 1, d * n_sens).copy_from_slice(g.as_slice());
    }
    let states = integrate_backward_with(
        |t, s| rhs(t, s, n_sens),
        &init,
        grid,
        |t, s| {
            let a = Matrix::from_column_slice(d, d, s.rows(0, d * d).as_slice());
            let a = symmetrize(&a);
            let norm = a.norm();
            if !(norm <= BLOW_UP_NORM) {
                return Err(Error::BlowUp { t, norm });
            }
            s.rows_mut(0, d * d).copy_from_slice(a.as_slice());
            Ok(())
        },
    )?;
    let mut a = Vec::with_capacity(states.len());
    let mut b = Vec::with_capacity(states.len());
    let mut c = Vec::with_capacity(states.len());
    let mut sens = Vec::new();
    for s in &states {
        a.push(Matrix::from_column_slice(d, d, s.rows(0, d * d).as_slice()));
        b.push(s.rows(d * d, d).into_owned());
        c.push(s[d * d + d]);
        if n_sens > 0 {
            sens.push(Matrix::from_column_slice(d, n_sens, s.rows(d * d + d + 1, d * n_sens).as_slice()));
        }
    }
    Ok(Solved { path: RiccatiPath { grid: *grid, a, b, c }, sens })
}

/// Value-function coefficients of the investor who conditions on the views.
pub fn solve_full(m: &MarketModel, v: &ViewSpec, pref: &Preferences, grid: &TimeGrid) -> Result<RiccatiPath> {
    check_grid(Some(v), grid)?;
    let coeffs = ConditionalCoeffs::new(m, v)?;
    let table = coeffs.tabulate(grid)?;
    let hjb = Hjb::new(m, pref);
    let d = m.d();
    let solved = solve_system(d, grid, Matrix::zeros(d, d), Vector::zeros(d), None, |t, s, n| {
        let c = table.at(t);
        hjb.rhs(&Drift { theta: &c.theta, theta_mu: &c.theta_mu, alpha: &c.alpha, beta: &c.beta }, s, n)
    })?;
    Ok(solved.path)
}

fn unconditional_drift(m: &MarketModel) -> (Vector, Matrix, Vector, Matrix) {
    let f = m.factors();
    (f.theta() * f.mu(), f.theta().clone(), m.assets().alpha().clone(), m.assets().beta().clone())
}

/// Value-function coefficients of the investor without views (zero terminal conditions).
pub fn solve_no_views(m: &MarketModel, pref: &Preferences, grid: &TimeGrid) -> Result<RiccatiPath> {
    check_grid(None, grid)?;
    let hjb = Hjb::new(m, pref);
    let d = m.d();
    let (theta_mu, theta, alpha, beta) = unconditional_drift(m);
    let drift = Drift { theta: &theta, theta_mu: &theta_mu, alpha: &alpha, beta: &beta };
    let solved = solve_system(d, grid, Matrix::zeros(d, d), Vector::zeros(d), None, |_, s, n| hjb.rhs(&drift, s, n))?;
    Ok(solved.path)
}

/// Views entering only through terminal conditions, next to the no-views system.
#[derive(Debug, Clone)]
pub struct DecomposedPath {
    /// Unconditional dynamics with `A₁(T) = −PᵀΩ^{−1}P`, `b₁(T) = PᵀΩ^{−1}y`.
    pub with_views: RiccatiPath,
    /// Unconditional dynamics with zero terminal conditions.
    pub without_views: RiccatiPath,
    /// `∂b₁/∂y` per node (d×K); `b₁` is affine in the view realization.
    pub b1_sensitivity: Vec<Matrix>,
    /// `∂c₁(t₀)/∂y` and `∂²c₁(t₀)/∂y²`; `c₁` is quadratic in the view realization.
    c1_gradient: Vector,
    c1_hessian: Matrix,
    model: MarketModel,
    view: ViewSpec,
}

impl DecomposedPath {
    pub fn view(&self) -> &ViewSpec {
        &self.view
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.with_views.grid
    }

    /// `b₁(t)` for another view realization `y`, without re-solving.
    pub fn b1_for(&self, t: f64, y: &Vector) -> Vector {
        let (k, w) = self.with_views.grid.locate(t);
        let g = &self.b1_sensitivity[k] * (1.0 - w) + &self.b1_sensitivity[k + 1] * w;
        self.with_views.b_at(t) + g * (y - self.view.y())
    }

    /// `b₁` on every node for the realization `y`.
    pub fn b1_nodes_for(&self, y: &Vector) -> Vec<Vector> {
        let dy = y - self.view.y();
        self.with_views.b.iter().zip(&self.b1_sensitivity).map(|(b, g)| b + g * &dy).collect()
    }

    fn innovation(&self, t: f64) -> Result<(Matrix, Matrix)> {
        let f = self.model.factors();
        let p = self.view.p();
        let tau = (self.view.horizon() - t).max(0.0);
        let fwd = p * f.decay(tau);
        let inner = p * f.transition_cov(tau) * p.transpose() + self.view.omega();
        let solved = spd_solve(&inner, &fwd)?;
        Ok((fwd, solved))
    }

    /// `Â(t) = (P e^{−Θτ})ᵀ (P V(τ) Pᵀ + Ω)^{−1} P e^{−Θτ}`.
    pub fn a_hat(&self, t: f64) -> Result<Matrix> {
        let (fwd, solved) = self.innovation(t)?;
        Ok(symmetrize(&(fwd.transpose() * solved)))
    }

    /// `b̂(t) = (P e^{−Θτ})ᵀ (P V(τ) Pᵀ + Ω)^{−1} (P(I − e^{−Θτ})μ − y)`.
    pub fn b_hat(&self, t: f64) -> Result<Vector> {
        let (_, solved) = self.innovation(t)?;
        let f = self.model.factors();
        let tau = (self.view.horizon() - t).max(0.0);
        let d = f.dim();
        let pred = self.view.p() * (Matrix::identity(d, d) - f.decay(tau)) * f.mu();
        Ok(solved.transpose() * (pred - self.view.y()))
    }

    /// Log value `g(t₀, x)` of the views investor for realization `y`.
    ///
    /// `V` is the no-views value with terminal view likelihood, divided by the
    /// predictive density of `y` given `X(t₀) = x`.
    pub fn initial_log_value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        let t0 = self.grid().t0();
        let p = &self.with_views;
        let dy = y - self.view.y();
        let b1 = &p.b[0] + &self.b1_sensitivity[0] * &dy;
        let c1 = p.c[0] + self.c1_gradient.dot(&dy) + 0.5 * dy.dot(&(&self.c1_hessian * &dy));
        let g1 = 0.5 * x.dot(&(&p.a[0] * x)) + x.dot(&b1) + c1;
        let f = self.model.factors();
        let tau = self.view.horizon() - t0;
        let pm = self.view.p() * f.transition_mean(tau, x);
        let predictive = self.view.p() * f.transition_cov(tau) * self.view.p().transpose() + self.view.omega();
        let resid = Matrix::from_column_slice(y.len(), 1, (y - pm).as_slice());
        let omega_y = spd_solve(self.view.omega(), &Matrix::from_column_slice(y.len(), 1, y.as_slice()))?;
        let pred_r = spd_solve(&predictive, &resid)?;
        Ok(g1 - 0.5 * y.dot(&omega_y.column(0)) - 0.5 * log_det(self.view.omega())?
            + 0.5 * log_det(&predictive)?
            + 0.5 * resid.column(0).dot(&pred_r.column(0)))
    }

    /// `Q(t) = A₁(t) − A₀(t)`.
    pub fn q_matrix(&self, t: f64) -> Matrix {
        self.with_views.a_at(t) - self.without_views.a_at(t)
    }
}

/// Solves the no-views system twice: with view terminal conditions and with zero ones.
pub fn solve_decomposed(m: &MarketModel, v: &ViewSpec, pref: &Preferences, grid: &TimeGrid) -> Result<DecomposedPath> {
    check_grid(Some(v), grid)?;
    if v.p().ncols() != m.d() {
        return Err(Error::Dimension(format!("view map has {} columns, model has {} factors", v.p().ncols(), m.d())));
    }
    let hjb = Hjb::new(m, pref);
    let d = m.d();
    let (theta_mu, theta, alpha, beta) = unconditional_drift(m);
    let drift = Drift { theta: &theta, theta_mu: &theta_mu, alpha: &alpha, beta: &beta };
    let precision = v.precision()?;
    let target = v.weighted_target()?;
    let sens_t = spd_solve(v.omega(), v.p())?.transpose();
    let with = solve_system(d, grid, -precision, target, Some(sens_t), |_, s, n| hjb.rhs(&drift, s, n))?;
    let without = solve_system(d, grid, Matrix::zeros(d, d), Vector::zeros(d), None, |_, s, n| hjb.rhs(&drift, s, n))?;
    let (c1_gradient, c1_hessian) = hjb.c_sensitivity(&drift, &with.path, &with.sens);
    Ok(DecomposedPath {
        with_views: with.path,
        without_views: without.path,
        b1_sensitivity: with.sens,
        c1_gradient,
        c1_hessian,
        model: m.clone(),
        view: v.clone(),
    })
}

/// Optimal weights at one state, with their decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub t: f64,
    pub x: Vector,
    pub weights: Vector,
    pub mean_variance: Vector,
    pub hedge: Vector,
    /// `H = π* − π₀`, when the no-views solution is available.
    pub adjustment: Option<Vector>,
}

/// Which Riccati solution drives [`policy`].
pub enum PolicySource<'a> {
    /// Conditional coefficients with the full path.
    Full { coeffs: &'a ConditionalCoeffs, path: &'a RiccatiPath, no_views: Option<&'a RiccatiPath> },
    /// Unconditional coefficients with `(A₁, b₁)`.
    Decomposed(&'a DecomposedPath),
    /// Unconditional coefficients with the no-views path.
    NoViews(&'a RiccatiPath),
}

/// Optimal weights for the given Riccati solution at `(t, x)`.
pub fn policy(m: &MarketModel, pref: &Preferences, source: &PolicySource, t: f64, x: &Vector) -> Result<PolicyEvaluation> {
    let hjb = Hjb::new(m, pref);
    let a = m.assets();
    let no_view_weights = |p: &RiccatiPath| {
        let (mv, h) = hjb.weights(a.alpha(), a.beta(), &p.a_at(t), &p.b_at(t), x);
        mv + h
    };
    let (mv, hedge, base) = match source {
        PolicySource::Full { coeffs, path, no_views } => {
            let s = coeffs.at(t)?;
            let (mv, h) = hjb.weights(&s.alpha, &s.beta, &path.a_at(t), &path.b_at(t), x);
            (mv, h, no_views.map(no_view_weights))
        }
        PolicySource::Decomposed(dp) => {
            let (mv, h) = hjb.weights(a.alpha(), a.beta(), &dp.with_views.a_at(t), &dp.with_views.b_at(t), x);
            (mv, h, Some(no_view_weights(&dp.without_views)))
        }
        PolicySource::NoViews(p) => {
            let (mv, h) = hjb.weights(a.alpha(), a.beta(), &p.a_at(t), &p.b_at(t), x);
            (mv, h, None)
        }
    };
    let weights = &mv + &hedge;
    let adjustment = base.map(|b| &weights - b);
    Ok(PolicyEvaluation { t, x: x.clone(), weights, mean_variance: mv, hedge, adjustment })
}

/// View adjustment `H(t, x) = (1/γ)Σ^{S,−1}Σ^{S,X}(Q(t)x + q(t))`.
pub fn view_adjustment(m: &MarketModel, pref: &Preferences, dp: &DecomposedPath, t: f64, x: &Vector) -> Vector {
    let q = dp.with_views.b_at(t) - dp.without_views.b_at(t);
    m.assets().sigma_s_inv() * (m.sigma_sx() * (dp.q_matrix(t) * x + q)) / pref.gamma()
}

/// Relative HJB residual `|𝓛V| / |V|` of the solved value function at node `k`,
/// wealth `z` and factors `x`, with the conditional drifts of `coeffs` and the
/// feedback weights plugged in.
///
/// `∂ₜg` comes from a five-point stencil over the stored nodes, so the check is
/// independent of the ODE right-hand side; `k` must be at least two nodes away
/// from either end of the grid.
pub fn hjb_residual(m: &MarketModel, coeffs: &ConditionalCoeffs, pref: &Preferences, path: &RiccatiPath, k: usize, z: f64, x: &Vector) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {z}")));
    }
    let g_t = log_value_rate(path, k, x)?;
    let s = coeffs.at(path.grid.node(k))?;
    let drift = Drift { theta: &s.theta, theta_mu: &s.theta_mu, alpha: &s.alpha, beta: &s.beta };
    Ok(Hjb::new(m, pref).operator(&drift, m.assets().sigma_s(), g_t, &path.a[k], &path.b[k], x).abs())
}

/// `V(t, z, x) = z^{1−γ}/(1−γ) · e^{g(t, x)}`.
pub fn value_function(path: &RiccatiPath, pref: &Preferences, t: f64, z: f64, x: &Vector) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {z}")));
    }
    Ok(pref.utility(z) * path.log_value(t, x).exp())
}

/// What a trading rule sees at a rebalance date.
pub struct MarketState<'a> {
    pub t: f64,
    pub x: &'a Vector,
    /// `ln S(t) − ln S(0)` per asset.
    pub log_return: &'a Vector,
}

/// A rule mapping the observed state to portfolio weights (fractions of wealth).
pub trait Strategy: Sync {
    fn weights(&self, state: &MarketState) -> Vector;
}

/// All wealth in the risk-free asset.
pub struct RiskFree {
    pub n_assets: usize,
}

impl Strategy for RiskFree {
    fn weights(&self, _: &MarketState) -> Vector {
        Vector::zeros(self.n_assets)
    }
}

/// Feedback rule `(1/γ)Σ^{S,−1}(α + βx − r_f 1) + (1/γ)Σ^{S,−1}Σ^{S,X}(A(t)x + b(t))`
/// with unconditional coefficients and node-wise `A, b`.
pub struct AffineFeedback<'a> {
    hjb: Hjb,
    alpha: Vector,
    beta: Matrix,
    grid: TimeGrid,
    a: &'a [Matrix],
    b: &'a [Vector],
    /// `b` moves by `G δy` when the view realization differs from the solved one.
    shift: Option<(&'a [Matrix], Vector)>,
}

impl<'a> AffineFeedback<'a> {
    /// The no-views investor.
    pub fn no_views(m: &MarketModel, pref: &Preferences, path: &'a RiccatiPath) -> Self {
        Self::build(m, pref, path.grid, &path.a, &path.b, None)
    }

    /// The views investor for realization `y`, via the decomposition.
    pub fn with_views(m: &MarketModel, pref: &Preferences, dp: &'a DecomposedPath, y: &Vector) -> Self {
        let p = &dp.with_views;
        Self::build(m, pref, p.grid, &p.a, &p.b, Some((&dp.b1_sensitivity, y - dp.view.y())))
    }

    /// A myopic investor: `zeros` is the zero path (`A = 0`, `b = 0`) on `grid`.
    pub fn myopic(m: &MarketModel, pref: &Preferences, zeros: &'a RiccatiPath) -> Self {
        Self::build(m, pref, zeros.grid, &zeros.a, &zeros.b, None)
    }

    fn build(m: &MarketModel, pref: &Preferences, grid: TimeGrid, a: &'a [Matrix], b: &'a [Vector], shift: Option<(&'a [Matrix], Vector)>) -> Self {
        Self { hjb: Hjb::new(m, pref), alpha: m.assets().alpha().clone(), beta: m.assets().beta().clone(), grid, a, b, shift }
    }
}

impl Strategy for AffineFeedback<'_> {
    fn weights(&self, s: &MarketState) -> Vector {
        let (k, w) = self.grid.locate(s.t);
        let a = &self.a[k] * (1.0 - w) + &self.a[k + 1] * w;
        let mut b = &self.b[k] * (1.0 - w) + &self.b[k + 1] * w;
        if let Some((g, dy)) = &self.shift {
            b += (&g[k] * (1.0 - w) + &g[k + 1] * w) * dy;
        }
        let (mv, h) = self.hjb.weights(&self.alpha, &self.beta, &a, &b, s.x);
        mv + h
    }
}

/// Wealth outcome of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    /// Terminal wealth; `None` when the path was excluded (non-positive or non-finite wealth).
    pub terminal: Option<f64>,
    /// Share holdings `πᵢZ/Sᵢ` at each rebalance date.
    pub holdings: Vec<Vector>,
    /// Wealth at each rebalance date.
    pub wealth: Vec<f64>,
}

/// Terminal wealth and holdings over all paths.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthSimulation {
    pub paths: Vec<WealthPath>,
    pub excluded: usize,
}

impl WealthSimulation {
    pub fn terminal_wealths(&self) -> Vec<f64> {
        self.paths.iter().filter_map(|p| p.terminal).collect()
    }
}

/// Runs `strategy` along one market path with weights reset every `rebalance_every` steps.
///
/// Between resets the weights are held fixed and log-wealth moves by
/// `r_f h + πᵀ(Δln S + ½diag(Σ^S)h − r_f h) − ½πᵀΣ^Sπ h`.
pub fn run_wealth_path(
    m: &MarketModel,
    strategy: &dyn Strategy,
    path: &crate::market::Path,
    grid: &TimeGrid,
    z0: f64,
    rebalance_every: usize,
) -> WealthPath {
    let a = m.assets();
    let r_f = a.r_f();
    let half_var = a.sigma_s().diagonal() * 0.5;
    let h = grid.step();
    let n = a.n_assets();
    let mut log_z = z0.ln();
    let mut pi = Vector::zeros(n);
    let mut drag = 0.0;
    let mut holdings = Vec::new();
    let mut wealth = Vec::new();
    let ls0 = &path.log_prices[0];
    for k in 0..grid.n_steps() {
        if k % rebalance_every == 0 {
            let lr = &path.log_prices[k] - ls0;
            pi = strategy.weights(&MarketState { t: grid.node(k), x: &path.factors[k], log_return: &lr });
            drag = 0.5 * pi.dot(&(a.sigma_s() * &pi));
            let z = log_z.exp();
            wealth.push(z);
            holdings.push(pi.component_mul(&path.log_prices[k].map(|l| (-l).exp())) * z);
        }
        let dlog = &path.log_prices[k + 1] - &path.log_prices[k];
        log_z += r_f * h + pi.dot(&(dlog + &half_var * h)) - pi.sum() * r_f * h - drag * h;
    }
    let z = log_z.exp();
    let terminal = if z.is_finite() && z > 0.0 { Some(z) } else { None };
    WealthPath { terminal, holdings, wealth }
}

/// Wealth simulation over paths drawn from `engine`.
pub fn simulate_wealth_on(
    engine: &PathEngine,
    m: &MarketModel,
    strategy: &dyn Strategy,
    z0: f64,
    n_paths: usize,
    rebalance_every: usize,
    seed: u64,
) -> Result<WealthSimulation> {
    if !(z0 > 0.0) {
        return Err(Error::Domain(format!("initial wealth must be positive, got {z0}")));
    }
    if rebalance_every == 0 {
        return Err(Error::Domain("rebalance interval must be at least one step".into()));
    }
    let grid = *engine.grid();
    let paths = engine.map(n_paths, seed, |_, p| run_wealth_path(m, strategy, p, &grid, z0, rebalance_every));
    let excluded = paths.iter().filter(|p| p.terminal.is_none()).count();
    Ok(WealthSimulation { paths, excluded })
}

/// Wealth simulation under the conditional law given `v` (or the unconditional law when `v` is `None`).
#[allow(clippy::too_many_arguments)]
pub fn simulate_wealth(
    m: &MarketModel,
    v: Option<&ViewSpec>,
    strategy: &dyn Strategy,
    x0: &Vector,
    s0: &Vector,
    z0: f64,
    grid: &TimeGrid,
    n_paths: usize,
    rebalance_every: usize,
    seed: u64,
) -> Result<WealthSimulation> {
    let kernels = match v {
        Some(v) => conditional_kernels(m, v, grid)?,
        None => unconditional_kernels(m.factors(), grid),
    };
    let engine = PathEngine::new(m, kernels, *grid, x0, s0)?;
    simulate_wealth_on(&engine, m, strategy, z0, n_paths, rebalance_every, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{AssetDynamics, FactorDynamics};
    use crate::numerics::{max_sym_eigenvalue, min_sym_eigenvalue};
    use approx::assert_abs_diff_eq;

    fn small_model(seed: u64) -> MarketModel {
        use rand::Rng;
        let mut rng = crate::market::path_rng(seed, 0);
        let mut u = |s: f64| rng.random_range(-s..s);
        let theta = Matrix::from_row_slice(2, 2, &[0.8 + u(0.2), u(0.1), u(0.1), 0.4 + u(0.1)]);
        let mu = Vector::from_vec(vec![0.02 + u(0.01), 0.03 + u(0.01)]);
        let l_x = Matrix::from_fn(2, 4, |i, j| if j <= i && j < 2 { 0.02 + u(0.01) } else { 0.0 });
        let alpha = Vector::from_vec(vec![0.01 + u(0.02), 0.02 + u(0.02)]);
        let beta = Matrix::from_row_slice(2, 2, &[2.0 + u(0.5), u(0.5), u(0.5), 1.5 + u(0.5)]);
        let l_s = Matrix::from_fn(2, 4, |i, j| if j == i + 2 { 0.15 } else { u(0.06) });
        let f = FactorDynamics::new(theta, mu, l_x).unwrap();
        let a = AssetDynamics::new(alpha, beta, l_s, 0.02).unwrap();
        MarketModel::new(f, a, 1.0).unwrap()
    }

    fn small_view(m: &MarketModel) -> ViewSpec {
        let p = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let omega = crate::views::omega_from_tau(m, &p, 0.1, 1.0).unwrap();
        ViewSpec::new(p, omega, Vector::from_element(1, 0.01), 1.0).unwrap()
    }

    #[test]
    fn no_premium_no_views_is_risk_free() {
        let f = FactorDynamics::new(Matrix::from_element(1, 1, 0.5), Vector::zeros(1), Matrix::from_row_slice(1, 2, &[0.1, 0.0])).unwrap();
        let a = AssetDynamics::new(Vector::from_element(1, 0.02), Matrix::zeros(1, 1), Matrix::from_row_slice(1, 2, &[0.05, 0.2]), 0.02).unwrap();
        let m = MarketModel::new(f, a, 1.0).unwrap();
        let v = ViewSpec::new(Matrix::identity(1, 1), Matrix::from_element(1, 1, 1e12), Vector::zeros(1), 1.0).unwrap();
        let pref = Preferences::new(3.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let p = solve_full(&m, &v, &pref, &grid).unwrap();
        for (k, t) in grid.nodes().enumerate() {
            assert!(p.a[k].amax() < 1e-10);
            assert!(p.b[k].amax() < 1e-10);
            assert_abs_diff_eq!(p.c[k], (1.0 - 3.0) * 0.02 * (1.0 - t), epsilon = 1e-10);
        }
    }

    #[test]
    fn decomposition_matches_full_solution() {
        let m = small_model(1);
        let v = small_view(&m);
        let pref = Preferences::new(4.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 2000).unwrap();
        let full = solve_full(&m, &v, &pref, &grid).unwrap();
        let dp = solve_decomposed(&m, &v, &pref, &grid).unwrap();
        for (k, t) in grid.nodes().enumerate().step_by(50) {
            let a = &dp.with_views.a[k] + dp.a_hat(t).unwrap();
            let b = &dp.with_views.b[k] + dp.b_hat(t).unwrap();
            assert!((a - &full.a[k]).amax() < 1e-8 * full.a[k].amax().max(1.0), "A at {t}");
            assert!((b - &full.b[k]).amax() < 1e-8 * full.b[k].amax().max(1.0), "b at {t}");
        }
        let coeffs = ConditionalCoeffs::new(&m, &v).unwrap();
        let no_views = solve_no_views(&m, &pref, &grid).unwrap();
        for t in [0.0, 0.33, 0.9] {
            let x = Vector::from_vec(vec![0.01, 0.05]);
            let pf = policy(&m, &pref, &PolicySource::Full { coeffs: &coeffs, path: &full, no_views: Some(&no_views) }, t, &x).unwrap();
            let pd = policy(&m, &pref, &PolicySource::Decomposed(&dp), t, &x).unwrap();
            assert!((&pf.weights - &pd.weights).amax() < 1e-7);
            assert!((pf.adjustment.unwrap() - view_adjustment(&m, &pref, &dp, t, &x)).amax() < 1e-7);
            assert_eq!(pf.weights, &pf.mean_variance + &pf.hedge);
        }
    }

    #[test]
    fn initial_log_value_matches_full_solution() {
        let m = small_model(3);
        let v = small_view(&m);
        let pref = Preferences::new(5.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4000).unwrap();
        let dp = solve_decomposed(&m, &v, &pref, &grid).unwrap();
        let x = Vector::from_vec(vec![0.02, -0.03]);
        for y in [v.y().clone(), Vector::from_element(1, -0.04), Vector::from_element(1, 0.11)] {
            let full = solve_full(&m, &v.with_y(y.clone()).unwrap(), &pref, &grid).unwrap();
            let g = dp.initial_log_value(&x, &y).unwrap();
            assert_abs_diff_eq!(g, full.log_value(0.0, &x), epsilon = 1e-8);
        }
    }

    #[test]
    fn affine_view_sensitivity_matches_resolve() {
        let m = small_model(2);
        let v = small_view(&m);
        let pref = Preferences::new(5.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 500).unwrap();
        let dp = solve_decomposed(&m, &v, &pref, &grid).unwrap();
        let y2 = Vector::from_element(1, -0.04);
        let dp2 = solve_decomposed(&m, &v.with_y(y2.clone()).unwrap(), &pref, &grid).unwrap();
        for t in [0.0, 0.5, 1.0] {
            assert!((dp.b1_for(t, &y2) - dp2.with_views.b_at(t)).amax() < 1e-12);
        }
    }

    #[test]
    fn riccati_nsd_and_step_convergence() {
        let m = MarketModel::published();
        let p = Matrix::from_row_slice(3, 5, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0]);
        let omega = crate::views::omega_from_tau(&m, &p, 0.05, 1.0).unwrap();
        let v = ViewSpec::new(p, omega, Vector::from_vec(vec![0.01, 0.03, -0.01]), 1.0).unwrap();
        let pref = Preferences::new(5.0).unwrap();
        let fine = solve_full(&m, &v, &pref, &TimeGrid::new(0.0, 1.0, 2000).unwrap()).unwrap();
        let coarse = solve_full(&m, &v, &pref, &TimeGrid::new(0.0, 1.0, 1000).unwrap()).unwrap();
        for a in &fine.a {
            assert!(max_sym_eigenvalue(a) <= 1e-10 * a.amax().max(1.0));
        }
        assert!((&fine.a[0] - &coarse.a[0]).amax() < 1e-8 * fine.a[0].amax());
    }

    #[test]
    fn views_precision_orders_a1() {
        let m = small_model(3);
        let pref = Preferences::new(5.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 400).unwrap();
        let p = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let precise = ViewSpec::new(p.clone(), crate::views::omega_from_tau(&m, &p, 0.05, 1.0).unwrap(), Vector::zeros(1), 1.0).unwrap();
        let vague = ViewSpec::new(p.clone(), crate::views::omega_from_tau(&m, &p, 1.0, 1.0).unwrap(), Vector::zeros(1), 1.0).unwrap();
        let a = solve_decomposed(&m, &precise, &pref, &grid).unwrap();
        let b = solve_decomposed(&m, &vague, &pref, &grid).unwrap();
        for k in 0..grid.n_nodes() {
            let diff = &a.with_views.a[k] - &b.with_views.a[k];
            assert!(max_sym_eigenvalue(&diff) <= 1e-10);
            assert!(max_sym_eigenvalue(&a.q_matrix(grid.node(k))) <= 1e-10);
        }
        // with Ω → ∞ the decomposition collapses
        let none = ViewSpec::new(p, Matrix::from_element(1, 1, 1e12), Vector::from_element(1, 0.1), 1.0).unwrap();
        let c = solve_decomposed(&m, &none, &pref, &grid).unwrap();
        assert!((&c.with_views.a[0] - &c.without_views.a[0]).amax() < 1e-10);
        assert!((&c.with_views.b[0] - &c.without_views.b[0]).amax() < 1e-10);
    }

    #[test]
    fn uncorrelated_shocks_make_views_irrelevant() {
        let base = small_model(4);
        let m = base.with_rho(0.0).unwrap();
        let v = small_view(&m);
        let pref = Preferences::new(3.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 300).unwrap();
        let dp = solve_decomposed(&m, &v, &pref, &grid).unwrap();
        let pe = policy(&m, &pref, &PolicySource::Decomposed(&dp), 0.4, &Vector::from_vec(vec![0.1, 0.0])).unwrap();
        assert_eq!(pe.adjustment.unwrap().amax(), 0.0);
        assert_eq!(pe.hedge.amax(), 0.0);
    }

    #[test]
    fn weights_scale_with_inverse_gamma() {
        let m = small_model(5);
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let x = Vector::from_vec(vec![0.02, 0.03]);
        let w = |g: f64| {
            let pref = Preferences::new(g).unwrap();
            let p = solve_no_views(&m, &pref, &grid).unwrap();
            policy(&m, &pref, &PolicySource::NoViews(&p), 0.0, &x).unwrap().weights
        };
        let (w1, w2) = (w(1e4), w(2e4));
        assert!((w1 * 1e4 - w2 * 2e4).amax() < 1e-3);
    }

    #[test]
    fn hjb_residual_small_and_c_form_resolved() {
        use rand::Rng;
        let m = small_model(11);
        let v = small_view(&m);
        let pref = Preferences::new(5.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4000).unwrap();
        let path = solve_full(&m, &v, &pref, &grid).unwrap();
        let coeffs = ConditionalCoeffs::new(&m, &v).unwrap();
        let mut rng = crate::market::path_rng(12, 0);
        let mut alt_gap: f64 = 0.0;
        for _ in 0..40 {
            let k = rng.random_range(2..grid.n_steps() - 1);
            let x = Vector::from_fn(2, |_, _| rng.random_range(-0.2..0.2));
            let z = rng.random_range(0.5..2.0);
            let r = hjb_residual(&m, &coeffs, &pref, &path, k, z, &x).unwrap();
            assert!(r < 1e-6, "residual {r} at node {k}");
            // writing μ̃ᵀb instead of (Θ̃μ̃)ᵀb in the c equation shifts ∂ₜg by this much
            let s = coeffs.at(grid.node(k)).unwrap();
            alt_gap = alt_gap.max((s.mu().unwrap() - &s.theta_mu).dot(&path.b[k]).abs());
        }
        assert!(alt_gap > 1e-4, "{alt_gap}");
    }

    #[test]
    fn value_function_basics() {
        let m = small_model(6);
        let pref = Preferences::new(2.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let p = solve_no_views(&m, &pref, &grid).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.2]);
        assert_eq!(value_function(&p, &pref, 1.0, 1.7, &x).unwrap(), pref.utility(1.7));
        let v1 = value_function(&p, &pref, 0.2, 1.0, &x).unwrap();
        let v2 = value_function(&p, &pref, 0.2, 2.0, &x).unwrap();
        assert_abs_diff_eq!(v2 / v1, 0.5, epsilon = 1e-14);
        assert!(value_function(&p, &pref, 0.2, 0.0, &x).is_err());
    }

    #[test]
    fn risk_free_wealth_is_deterministic() {
        let m = small_model(7);
        let grid = TimeGrid::new(0.0, 1.0, 24).unwrap();
        let x0 = m.factors().mu().clone();
        let s0 = Vector::from_element(2, 1.0);
        let sim = simulate_wealth(&m, None, &RiskFree { n_assets: 2 }, &x0, &s0, 1.0, &grid, 50, 2, 3).unwrap();
        for z in sim.terminal_wealths() {
            assert_abs_diff_eq!(z, 0.02f64.exp(), epsilon = 1e-14);
        }
        let again = simulate_wealth(&m, None, &RiskFree { n_assets: 2 }, &x0, &s0, 1.0, &grid, 50, 2, 3).unwrap();
        assert_eq!(sim, again);
        assert_eq!(sim.paths[0].holdings.len(), 12);
    }

    #[test]
    fn merton_log_wealth() {
        let (alpha, sigma, r_f, gamma) = (0.08, 0.2, 0.02, 3.0);
        let f = FactorDynamics::new(Matrix::from_element(1, 1, 0.5), Vector::zeros(1), Matrix::from_row_slice(1, 2, &[0.1, 0.0])).unwrap();
        let a = AssetDynamics::new(Vector::from_element(1, alpha), Matrix::zeros(1, 1), Matrix::from_row_slice(1, 2, &[0.0, sigma]), r_f).unwrap();
        let m = MarketModel::new(f, a, 1.0).unwrap();
        let pref = Preferences::new(gamma).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 52).unwrap();
        let zeros = RiccatiPath::zeros(1, grid);
        let strat = AffineFeedback::myopic(&m, &pref, &zeros);
        let n = 20_000;
        let sim = simulate_wealth(&m, None, &strat, &Vector::zeros(1), &Vector::from_element(1, 1.0), 1.0, &grid, n, 1, 8).unwrap();
        let pi = (alpha - r_f) / (gamma * sigma * sigma);
        let expect = r_f + pi * (alpha - r_f) - 0.5 * pi * pi * sigma * sigma;
        let logs: Vec<f64> = sim.terminal_wealths().iter().map(|z| z.ln()).collect();
        let mean = logs.iter().sum::<f64>() / n as f64;
        let se = pi * sigma / (n as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * se, "{mean} vs {expect}");
    }

    #[test]
    fn riccati_csv_export() {
        let m = small_model(8);
        let pref = Preferences::new(3.0).unwrap();
        let p = solve_no_views(&m, &pref, &TimeGrid::new(0.0, 1.0, 4).unwrap()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "t,a_0_0,a_0_1,a_1_0,a_1_1,b_0,b_1,c");
        assert!(lines[5].starts_with("1,0,0,0,0,0,0,0"));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Preferences::new(1.0).is_err());
        let m = small_model(9);
        let v = small_view(&m);
        let pref = Preferences::new(3.0).unwrap();
        assert!(solve_full(&m, &v, &pref, &TimeGrid::new(0.0, 0.5, 10).unwrap()).is_err());
        let _ = min_sym_eigenvalue(&Matrix::identity(1, 1));
    }
}
