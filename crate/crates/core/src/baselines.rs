//! Static factor-view Black-Litterman baseline: conditional moments of the
//! remaining-horizon log-return and myopic mean-variance weights.
//!
//! Inner time integrals (transition `φ`, factor mean, covariance and the
//! covariance kernels against `J` and `M`) are carried by their linear ODEs on
//! the sub-grid; outer integrals use Simpson's rule on the same nodes.

use crate::control::{MarketState, Preferences, Strategy};
use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::numerics::{cholesky, integrate_forward, spd_solve, symmetrize, Matrix, TimeGrid, Vector};
use crate::views::{ConditionalCoeffs, ViewSpec};

/// Simpson panels over `[s, T]`.
pub const BL_PANELS: usize = 256;

/// Conditional law of `R(T) = ln S(T)/S(0)` given information at `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlMoments {
    pub s: f64,
    pub horizon: f64,
    /// `R(s)`, already realized.
    pub log_return: Vector,
    pub mu_bl: Vector,
    pub sigma_bl: Matrix,
}

/// State-independent part of the moments at one evaluation time:
/// `μ_BL = R(s) + offset + loading · X(s)`, `Σ_BL = sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlPlan {
    pub s: f64,
    pub horizon: f64,
    pub offset: Vector,
    pub loading: Matrix,
    pub sigma: Matrix,
    /// `∂offset/∂y` (N×K), when requested; the offset is affine in the view realization.
    pub offset_dy: Option<Matrix>,
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

impl BlPlan {
    pub fn new(m: &MarketModel, v: &ViewSpec, s: f64) -> Result<Self> {
        Self::with_panels(m, v, s, BL_PANELS)
    }

    pub fn with_panels(m: &MarketModel, v: &ViewSpec, s: f64, panels: usize) -> Result<Self> {
        let horizon = v.horizon();
        if !(s >= 0.0 && s < horizon) {
            return Err(Error::Domain(format!("evaluation time {s} outside [0, {horizon})")));
        }
        if panels == 0 || panels % 2 == 1 {
            return Err(Error::Domain(format!("Simpson needs an even panel count, got {panels}")));
        }
        let coeffs = ConditionalCoeffs::new(m, v)?;
        let grid = TimeGrid::new(s, horizon, panels)?;
        let table = coeffs.tabulate(&grid)?;
        let (d, n) = (m.d(), m.n_assets());
        let sigma_x = m.factors().sigma_x();
        let sigma_xs = m.sigma_sx().transpose();
        // state: Φ (d×d), mean from zero start (d), Var X (d×d), Cov(X, J) (d×N), Cov(X, M) (d×N)
        let sizes = [d * d, d, d * d, d * n, d * n];
        let offs: Vec<usize> = sizes.iter().scan(0, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        }).collect();
        let len: usize = sizes.iter().sum();
        let unpack = |st: &Vector, i: usize, r: usize, c: usize| Matrix::from_column_slice(r, c, st.rows(offs[i], sizes[i]).as_slice());
        let mut init = Vector::zeros(len);
        init.rows_mut(offs[0], d * d).copy_from_slice(Matrix::identity(d, d).as_slice());
        let states = integrate_forward(
            |t, st| {
                let c = table.at(t);
                let th = &c.theta;
                let phi = unpack(st, 0, d, d);
                let mean = unpack(st, 1, d, 1);
                let var = unpack(st, 2, d, d);
                let kj = unpack(st, 3, d, n);
                let km = unpack(st, 4, d, n);
                let parts = [
                    -(th * phi),
                    Matrix::from_column_slice(d, 1, c.theta_mu.as_slice()) - th * mean,
                    -(th * &var) - &var * th.transpose() + sigma_x,
                    -(th * kj) + &var * c.beta.transpose(),
                    -(th * km) + &sigma_xs,
                ];
                let mut out = Vector::zeros(len);
                for (i, p) in parts.iter().enumerate() {
                    out.rows_mut(offs[i], sizes[i]).copy_from_slice(p.as_slice());
                }
                out
            },
            &init,
            &grid,
        )?;
        let w = simpson_weights(panels, grid.step());
        let half_var = m.assets().sigma_s().diagonal() * 0.5;
        let mut offset = Vector::zeros(n);
        let mut loading = Matrix::zeros(n, d);
        let mut var_j = Matrix::zeros(n, n);
        let mut cross = Matrix::zeros(n, n);
        for (k, st) in states.iter().enumerate() {
            let c = table.at(grid.node(k));
            let mean = st.rows(offs[1], d);
            offset += (&c.alpha - &half_var + &c.beta * mean) * w[k];
            loading += &c.beta * unpack(st, 0, d, d) * w[k];
            let bk = &c.beta * unpack(st, 3, d, n);
            var_j += (&bk + bk.transpose()) * w[k];
            cross += &c.beta * unpack(st, 4, d, n) * w[k];
        }
        let sigma = symmetrize(&(m.assets().sigma_s() * (horizon - s) + var_j + &cross + cross.transpose()));
        Ok(Self { s, horizon, offset, loading, sigma, offset_dy: None })
    }

    /// Plan at `s` together with the offset sensitivity to `y`, from unit shifts of each view.
    pub fn with_view_sensitivity(m: &MarketModel, v: &ViewSpec, s: f64) -> Result<Self> {
        let mut plan = Self::new(m, v, s)?;
        let k = v.n_views();
        let mut dy = Matrix::zeros(m.n_assets(), k);
        for j in 0..k {
            let mut y = v.y().clone();
            y[j] += 1.0;
            let shifted = Self::new(m, &v.with_y(y)?, s)?;
            dy.set_column(j, &(shifted.offset - &plan.offset));
        }
        plan.offset_dy = Some(dy);
        Ok(plan)
    }

    pub fn moments(&self, log_return: &Vector, x: &Vector) -> BlMoments {
        BlMoments {
            s: self.s,
            horizon: self.horizon,
            log_return: log_return.clone(),
            mu_bl: log_return + &self.offset + &self.loading * x,
            sigma_bl: self.sigma.clone(),
        }
    }
}

/// Mean and covariance of `R(T)` given `R(s)`, `X(s)` and the views.
pub fn bl_moments(m: &MarketModel, v: &ViewSpec, s: f64, log_return: &Vector, x: &Vector) -> Result<BlMoments> {
    Ok(BlPlan::new(m, v, s)?.moments(log_return, x))
}

/// `(1/γ) Σ_BL^{−1}(μ_BL − R(s) − r_f(T − s)1)`: mean-variance weights on the
/// remaining-horizon excess log-return.
pub fn bl_policy(mom: &BlMoments, pref: &Preferences, r_f: f64) -> Result<Vector> {
    let n = mom.mu_bl.len();
    let excess = &mom.mu_bl - &mom.log_return - Vector::from_element(n, r_f * (mom.horizon - mom.s));
    cholesky(&mom.sigma_bl).map_err(|e| Error::Singular(format!("conditional return covariance: {e}")))?;
    let w = spd_solve(&mom.sigma_bl, &Matrix::from_column_slice(n, 1, excess.as_slice()))?;
    Ok(w.column(0) / pref.gamma())
}

/// Black-Litterman weights reset at fixed dates.
pub struct BlStrategy {
    plans: Vec<BlPlan>,
    pref: Preferences,
    r_f: f64,
    y: Vector,
}

impl BlStrategy {
    /// Plans for every rebalance date in `dates` (each strictly before the view horizon).
    pub fn new(m: &MarketModel, v: &ViewSpec, pref: &Preferences, dates: &[f64]) -> Result<Self> {
        Self::build(m, v, pref, dates, BlPlan::new)
    }

    /// Like [`BlStrategy::new`], but able to serve other view realizations through [`BlStrategy::for_view`].
    pub fn with_view_sensitivity(m: &MarketModel, v: &ViewSpec, pref: &Preferences, dates: &[f64]) -> Result<Self> {
        Self::build(m, v, pref, dates, BlPlan::with_view_sensitivity)
    }

    fn build<F>(m: &MarketModel, v: &ViewSpec, pref: &Preferences, dates: &[f64], plan: F) -> Result<Self>
    where
        F: Fn(&MarketModel, &ViewSpec, f64) -> Result<BlPlan> + Sync,
    {
        use rayon::prelude::*;
        if dates.is_empty() {
            return Err(Error::Domain("static strategy needs at least one rebalance date".into()));
        }
        let plans = dates.par_iter().map(|&s| plan(m, v, s)).collect::<Result<Vec<_>>>()?;
        Ok(Self { plans, pref: *pref, r_f: m.assets().r_f(), y: v.y().clone() })
    }

    /// The same plans for another risk aversion.
    pub fn with_preferences(&self, pref: &Preferences) -> Self {
        Self { plans: self.plans.clone(), pref: *pref, r_f: self.r_f, y: self.y.clone() }
    }

    pub fn plans(&self) -> &[BlPlan] {
        &self.plans
    }

    /// The same plans applied to view realization `y`.
    pub fn for_view(&self, y: &Vector) -> Result<BlForView<'_>> {
        if self.plans.iter().any(|p| p.offset_dy.is_none()) {
            return Err(Error::Config("plans were built without view sensitivity".into()));
        }
        if y.len() != self.y.len() {
            return Err(Error::Dimension(format!("{} view values for {} views", y.len(), self.y.len())));
        }
        Ok(BlForView { base: self, dy: y - &self.y })
    }

    fn nearest(&self, t: f64) -> &BlPlan {
        self.plans
            .iter()
            .min_by(|a, b| (a.s - t).abs().total_cmp(&(b.s - t).abs()))
            .expect("strategy built with at least one date")
    }

    fn weights_with(&self, st: &MarketState, dy: Option<&Vector>) -> Vector {
        let plan = self.nearest(st.t);
        let mut mom = plan.moments(st.log_return, st.x);
        if let (Some(dy), Some(g)) = (dy, &plan.offset_dy) {
            mom.mu_bl += g * dy;
        }
        bl_policy(&mom, &self.pref, self.r_f).unwrap_or_else(|_| Vector::zeros(st.log_return.len()))
    }
}

impl Strategy for BlStrategy {
    fn weights(&self, st: &MarketState) -> Vector {
        self.weights_with(st, None)
    }
}

/// [`BlStrategy`] re-targeted to another view realization.
pub struct BlForView<'a> {
    base: &'a BlStrategy,
    dy: Vector,
}

impl Strategy for BlForView<'_> {
    fn weights(&self, st: &MarketState) -> Vector {
        self.base.weights_with(st, Some(&self.dy))
    }
}
