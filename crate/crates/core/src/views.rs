//! Expert views `Y = P X(T) + ε` and the factor/price dynamics conditional on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketModel, PathEngine, PathSet, StepKernel};
use crate::numerics::{cholesky, from_rows, integrate_forward, lu_solve, psd_factor, spd_solve, symmetrize, Matrix, TimeGrid, Vector};

/// Steps per year used by [`conditional_moments`].
pub const MOMENT_STEPS_PER_YEAR: usize = 4000;

/// A set of `K` linear views on the horizon factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    p: Matrix,
    omega: Matrix,
    y: Vector,
    horizon: f64,
}

impl ViewSpec {
    /// Noisy views; `omega` must be symmetric positive definite.
    pub fn new(p: Matrix, omega: Matrix, y: Vector, horizon: f64) -> Result<Self> {
        let v = Self::unchecked(p, omega, y, horizon)?;
        cholesky(&v.omega).map_err(|e| Error::Domain(format!("view noise covariance must be positive definite ({e})")))?;
        Ok(v)
    }

    /// Noise-free views (`Ω = 0`). Only usable strictly before the horizon.
    pub fn exact(p: Matrix, y: Vector, horizon: f64) -> Result<Self> {
        let k = p.nrows();
        Self::unchecked(p, Matrix::zeros(k, k), y, horizon)
    }

    fn unchecked(p: Matrix, omega: Matrix, y: Vector, horizon: f64) -> Result<Self> {
        let k = p.nrows();
        if k == 0 {
            return Err(Error::Dimension("at least one view is required".into()));
        }
        if omega.shape() != (k, k) || y.len() != k {
            return Err(Error::Dimension(format!(
                "{k} views but omega is {:?} and y has {} entries",
                omega.shape(),
                y.len()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("view horizon must be positive, got {horizon}")));
        }
        Ok(Self { p, omega: symmetrize(&omega), y, horizon })
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn omega(&self) -> &Matrix {
        &self.omega
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_views(&self) -> usize {
        self.p.nrows()
    }

    /// Same views with a different realization.
    pub fn with_y(&self, y: Vector) -> Result<Self> {
        if y.len() != self.n_views() {
            return Err(Error::Dimension(format!("expected {} view values, got {}", self.n_views(), y.len())));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Same views with a different noise covariance.
    pub fn with_omega(&self, omega: Matrix) -> Result<Self> {
        Self::new(self.p.clone(), omega, self.y.clone(), self.horizon)
    }

    /// `Pᵀ Ω^{−1} P`.
    pub fn precision(&self) -> Result<Matrix> {
        Ok(self.p.transpose() * spd_solve(&self.omega, &self.p)?)
    }

    /// `Pᵀ Ω^{−1} y`.
    pub fn weighted_target(&self) -> Result<Vector> {
        let w = spd_solve(&self.omega, &Matrix::from_column_slice(self.n_views(), 1, self.y.as_slice()))?;
        Ok(self.p.transpose() * w.column(0))
    }

    fn check_dims(&self, m: &MarketModel) -> Result<()> {
        if self.p.ncols() != m.d() {
            return Err(Error::Dimension(format!("view map has {} columns, model has {} factors", self.p.ncols(), m.d())));
        }
        Ok(())
    }
}

/// JSON form of a view; give either `omega` or `tau`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ViewDoc {
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub y: Vec<f64>,
    pub horizon: f64,
}

impl ViewDoc {
    pub fn resolve(&self, m: &MarketModel) -> Result<ViewSpec> {
        let p = from_rows(&self.p)?;
        let omega = match (&self.omega, self.tau) {
            (Some(o), None) => from_rows(o)?,
            (None, Some(tau)) => omega_from_tau(m, &p, tau, self.horizon)?,
            _ => return Err(Error::Config("a view needs exactly one of `omega` and `tau`".into())),
        };
        let v = ViewSpec::new(p, omega, Vector::from_vec(self.y.clone()), self.horizon)?;
        v.check_dims(m)?;
        Ok(v)
    }

    pub fn from_spec(v: &ViewSpec) -> Self {
        Self {
            p: crate::numerics::to_rows(&v.p),
            omega: Some(crate::numerics::to_rows(&v.omega)),
            tau: None,
            y: v.y.iter().copied().collect(),
            horizon: v.horizon,
        }
    }
}

/// `Ω = τ · P · Cov[X(T) | X(0)] · Pᵀ`.
pub fn omega_from_tau(m: &MarketModel, p: &Matrix, tau: f64, horizon: f64) -> Result<Matrix> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    if p.ncols() != m.d() {
        return Err(Error::Dimension(format!("view map has {} columns, model has {} factors", p.ncols(), m.d())));
    }
    let v = m.factors().transition_cov(horizon);
    let omega = symmetrize(&(p * v * p.transpose() * tau));
    cholesky(&omega).map_err(|e| Error::Domain(format!("Ω from τ is not positive definite; are the view rows independent? ({e})")))?;
    Ok(omega)
}

/// Conditional coefficients frozen at one time.
#[derive(Debug, Clone)]
pub struct CoeffSnapshot {
    pub t: f64,
    /// Conditioning kernel `η(t)` (N′×K).
    pub eta: Matrix,
    /// `e^{−Θ(T−t)}`.
    pub decay: Matrix,
    /// `Θ̃(t)`.
    pub theta: Matrix,
    /// `Θ̃(t) μ̃(t, y)`.
    pub theta_mu: Vector,
    /// `α̃(t, y)`.
    pub alpha: Vector,
    /// `β̃(t)`.
    pub beta: Matrix,
    /// `η(t)(y − P(I − e^{−Θ(T−t)})μ)`: the x-independent part of the drift adjustment.
    pub adjustment: Vector,
}

impl CoeffSnapshot {
    /// `μ̃(t, y)`, via a linear solve against `Θ̃(t)`.
    pub fn mu(&self) -> Result<Vector> {
        let rhs = Matrix::from_column_slice(self.theta_mu.len(), 1, self.theta_mu.as_slice());
        lu_solve(&self.theta, &rhs)
            .map(|m| m.column(0).into_owned())
            .map_err(|_| Error::Singular(format!("conditional reversion matrix at t = {}", self.t)))
    }
}

/// Evaluator for the conditional coefficient set of a model under a view.
#[derive(Debug, Clone)]
pub struct ConditionalCoeffs {
    model: MarketModel,
    view: ViewSpec,
}

impl ConditionalCoeffs {
    pub fn new(m: &MarketModel, v: &ViewSpec) -> Result<Self> {
        v.check_dims(m)?;
        Ok(Self { model: m.clone(), view: v.clone() })
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn view(&self) -> &ViewSpec {
        &self.view
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let horizon = self.view.horizon;
        if !(t >= 0.0 && t <= horizon + 1e-12) {
            return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
        }
        Ok((horizon - t).max(0.0))
    }

    pub fn eta(&self, t: f64) -> Result<Matrix> {
        Ok(self.at(t)?.eta)
    }

    /// All coefficients at time `t`.
    pub fn at(&self, t: f64) -> Result<CoeffSnapshot> {
        let tau = self.check_time(t)?;
        let f = self.model.factors();
        let a = self.model.assets();
        let p = &self.view.p;
        let decay = f.decay(tau);
        let fwd = p * &decay;
        let inner = p * f.transition_cov(tau) * p.transpose() + &self.view.omega;
        let eta = spd_solve(&inner, &(&fwd * f.l_x()))
            .map_err(|e| Error::Singular(format!("view innovation covariance at t = {t} ({e})")))?
            .transpose();
        let l_eta = f.l_x() * &eta;
        let theta = f.theta() + &l_eta * &fwd;
        let mu = f.mu();
        let theta_mu = &theta * mu + &l_eta * (&self.view.y - p * mu);
        let d = f.dim();
        let adjustment = &eta * (&self.view.y - p * (Matrix::identity(d, d) - &decay) * mu);
        let ls_rho = a.l_s() * self.model.rho();
        let alpha = a.alpha() + &ls_rho * &adjustment;
        let beta = a.beta() - &ls_rho * &eta * &fwd;
        Ok(CoeffSnapshot { t, eta, decay, theta, theta_mu, alpha, beta, adjustment })
    }

    /// `k(t, x) = η(t)(y − P·E[X(T) | X(t) = x])`.
    pub fn drift_adjustment(&self, t: f64, x: &Vector) -> Result<Vector> {
        let s = self.at(t)?;
        Ok(&s.adjustment - &s.eta * (&self.view.p * &s.decay * x))
    }

    /// Coefficients on every node and midpoint of `grid`, for repeated lookups by ODE solvers.
    pub fn tabulate(&self, grid: &TimeGrid) -> Result<CoeffTable> {
        let n = 2 * grid.n_steps();
        let half = grid.step() / 2.0;
        let entries = (0..=n)
            .into_par_iter()
            .map(|i| {
                let t = if i == n { grid.t1() } else { grid.t0() + i as f64 * half };
                self.at(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoeffTable { t0: grid.t0(), half, entries })
    }
}

pub fn conditional_coeffs(m: &MarketModel, v: &ViewSpec) -> Result<ConditionalCoeffs> {
    ConditionalCoeffs::new(m, v)
}

pub fn eta(m: &MarketModel, v: &ViewSpec, t: f64) -> Result<Matrix> {
    ConditionalCoeffs::new(m, v)?.eta(t)
}

pub fn drift_adjustment(c: &ConditionalCoeffs, t: f64, x: &Vector) -> Result<Vector> {
    c.drift_adjustment(t, x)
}

/// Coefficient snapshots on a half-step lattice.
#[derive(Debug, Clone)]
pub struct CoeffTable {
    t0: f64,
    half: f64,
    entries: Vec<CoeffSnapshot>,
}

impl CoeffTable {
    /// Snapshot at the lattice point nearest to `t`.
    pub fn at(&self, t: f64) -> &CoeffSnapshot {
        let i = ((t - self.t0) / self.half).round().clamp(0.0, (self.entries.len() - 1) as f64) as usize;
        &self.entries[i]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Mean and covariance of `X^y(t)` given `X^y(0) = x0`, from the forward moment ODEs.
pub fn conditional_moments(m: &MarketModel, v: &ViewSpec, t: f64, x0: &Vector) -> Result<(Vector, Matrix)> {
    let n = ((t * MOMENT_STEPS_PER_YEAR as f64).ceil() as usize).max(1);
    conditional_moments_with(m, v, t, x0, n)
}

/// [`conditional_moments`] with an explicit RK4 step count.
pub fn conditional_moments_with(m: &MarketModel, v: &ViewSpec, t: f64, x0: &Vector, n_steps: usize) -> Result<(Vector, Matrix)> {
    let d = m.d();
    if x0.len() != d {
        return Err(Error::Dimension(format!("x0 has {} entries, model has {d} factors", x0.len())));
    }
    if t == 0.0 {
        return Ok((x0.clone(), Matrix::zeros(d, d)));
    }
    let coeffs = ConditionalCoeffs::new(m, v)?;
    coeffs.check_time(t)?;
    let grid = TimeGrid::new(0.0, t, n_steps)?;
    let table = coeffs.tabulate(&grid)?;
    let sigma_x = m.factors().sigma_x().clone();
    let mut init = Vector::zeros(d + d * d);
    init.rows_mut(0, d).copy_from(x0);
    let path = integrate_forward(
        |s, state| {
            let c = table.at(s);
            let mean = state.rows(0, d);
            let cov = Matrix::from_column_slice(d, d, state.rows(d, d * d).as_slice());
            let dmean = &c.theta_mu - &c.theta * mean;
            let dcov = &sigma_x - &c.theta * &cov - &cov * c.theta.transpose();
            let mut out = Vector::zeros(d + d * d);
            out.rows_mut(0, d).copy_from(&dmean);
            out.rows_mut(d, d * d).copy_from_slice(dcov.as_slice());
            out
        },
        &init,
        &grid,
    )?;
    let end = path.last().expect("non-empty path");
    let mean = end.rows(0, d).into_owned();
    let cov = symmetrize(&Matrix::from_column_slice(d, d, end.rows(d, d * d).as_slice()));
    Ok((mean, cov))
}

/// Per-step kernels for the exact transition of `(X, W)` conditional on the view.
///
/// Each step conditions the joint Gaussian law of the factor innovation and
/// the driver increment on `Y`, given the factor value at the start of the step.
pub fn conditional_kernels(m: &MarketModel, v: &ViewSpec, grid: &TimeGrid) -> Result<Vec<StepKernel>> {
    v.check_dims(m)?;
    if grid.t0() < 0.0 || grid.t1() > v.horizon + 1e-12 {
        return Err(Error::Domain(format!(
            "simulation grid [{}, {}] must lie within [0, {}]",
            grid.t0(),
            grid.t1(),
            v.horizon
        )));
    }
    let f = m.factors();
    let d = m.d();
    let h = grid.step();
    let base = StepKernel::unconditional(f, h);
    let prior = StepKernel::prior_cov(f, h);
    let p = v.p();
    let target = (0..grid.n_steps())
        .into_par_iter()
        .map(|k| {
            let tau = (v.horizon - grid.node(k)).max(h);
            let decay = f.decay(tau);
            let innov_cov = p * f.transition_cov(tau) * p.transpose() + v.omega();
            let cross = prior.columns(0, d) * (p * f.decay(tau - h)).transpose();
            let gain = spd_solve(&innov_cov, &cross.transpose())?.transpose();
            let cov = &prior - &gain * cross.transpose();
            let shift = &gain * (v.y() - p * (Matrix::identity(d, d) - &decay) * f.mu());
            let shift_map = -&gain * p * &decay;
            Ok(StepKernel { shift, shift_map, noise: psd_factor(&cov), ..base.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(target)
}

/// Simulation of factors and prices under the law conditional on `Y = y`.
pub fn simulate_conditional(
    m: &MarketModel,
    v: &ViewSpec,
    x0: &Vector,
    s0: &Vector,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    let engine = PathEngine::new(m, conditional_kernels(m, v, grid)?, *grid, x0, s0)?;
    Ok(engine.run(n_paths, seed))
}
