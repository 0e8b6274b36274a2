//! Unconditional factor/asset model, its Gaussian moments and path simulation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    check_stable, cholesky, from_rows, lu_solve, mat_exp, psd_factor, solve_lyapunov, spd_inverse, symmetrize, to_rows,
    Matrix, TimeGrid, Vector,
};

/// Ornstein-Uhlenbeck factor dynamics `dX = Θ(μ − X)dt + L^X dW`.
#[derive(Debug, Clone)]
pub struct FactorDynamics {
    theta: Matrix,
    mu: Vector,
    l_x: Matrix,
    sigma_x: Matrix,
    long_run: Matrix,
}

impl FactorDynamics {
    pub fn new(theta: Matrix, mu: Vector, l_x: Matrix) -> Result<Self> {
        let d = mu.len();
        if theta.shape() != (d, d) {
            return Err(Error::Dimension(format!("theta is {:?}, expected {d}x{d}", theta.shape())));
        }
        if l_x.nrows() != d || l_x.ncols() < d {
            return Err(Error::Dimension(format!("l_x is {:?}, expected {d} rows and at least {d} columns", l_x.shape())));
        }
        check_stable(&theta)?;
        let sigma_x = symmetrize(&(&l_x * l_x.transpose()));
        cholesky(&sigma_x).map_err(|e| Error::Domain(format!("l_x is not of full row rank ({e})")))?;
        let long_run = solve_lyapunov(&theta, &sigma_x)?;
        Ok(Self { theta, mu, l_x, sigma_x, long_run })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn n_drivers(&self) -> usize {
        self.l_x.ncols()
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn l_x(&self) -> &Matrix {
        &self.l_x
    }

    /// Instantaneous covariance `L^X (L^X)ᵀ`.
    pub fn sigma_x(&self) -> &Matrix {
        &self.sigma_x
    }

    /// Stationary covariance, cached at construction.
    pub fn long_run_cov(&self) -> &Matrix {
        &self.long_run
    }

    /// `e^{−Θτ}`.
    pub fn decay(&self, tau: f64) -> Matrix {
        mat_exp(&self.theta, -tau).expect("theta is square")
    }

    /// Covariance of `X(t+τ)` given `X(t)`.
    pub fn transition_cov(&self, tau: f64) -> Matrix {
        if tau <= 0.0 {
            return Matrix::zeros(self.dim(), self.dim());
        }
        let e = self.decay(tau);
        symmetrize(&(&self.long_run - &e * &self.long_run * e.transpose()))
    }

    /// Mean of `X(t+τ)` given `X(t) = x`.
    pub fn transition_mean(&self, tau: f64, x: &Vector) -> Vector {
        let e = self.decay(tau);
        &self.mu + &e * (x - &self.mu)
    }

    /// `∫₀^τ e^{−Θs} ds = Θ^{−1}(I − e^{−Θτ})`.
    pub fn integrated_decay(&self, tau: f64) -> Matrix {
        let d = self.dim();
        let rhs = Matrix::identity(d, d) - self.decay(tau);
        lu_solve(&self.theta, &rhs).expect("stable theta is invertible")
    }
}

/// Asset dynamics `dS_i/S_i = (α_i + β_i·X)dt + L^S_i dW`.
#[derive(Debug, Clone)]
pub struct AssetDynamics {
    alpha: Vector,
    beta: Matrix,
    l_s: Matrix,
    r_f: f64,
    sigma_s: Matrix,
    sigma_s_inv: Matrix,
}

impl AssetDynamics {
    pub fn new(alpha: Vector, beta: Matrix, l_s: Matrix, r_f: f64) -> Result<Self> {
        let n = alpha.len();
        if beta.nrows() != n {
            return Err(Error::Dimension(format!("beta has {} rows, expected {n}", beta.nrows())));
        }
        if l_s.nrows() != n || l_s.ncols() < n {
            return Err(Error::Dimension(format!("l_s is {:?}, expected {n} rows and at least {n} columns", l_s.shape())));
        }
        if !(r_f > 0.0 && r_f.is_finite()) {
            return Err(Error::Domain(format!("risk-free rate must be positive, got {r_f}")));
        }
        let sigma_s = symmetrize(&(&l_s * l_s.transpose()));
        let sigma_s_inv = spd_inverse(&sigma_s).map_err(|e| Error::Domain(format!("l_s is not of full row rank ({e})")))?;
        Ok(Self { alpha, beta, l_s, r_f, sigma_s, sigma_s_inv })
    }

    pub fn n_assets(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    pub fn beta(&self) -> &Matrix {
        &self.beta
    }

    pub fn l_s(&self) -> &Matrix {
        &self.l_s
    }

    pub fn r_f(&self) -> f64 {
        self.r_f
    }

    pub fn sigma_s(&self) -> &Matrix {
        &self.sigma_s
    }

    pub fn sigma_s_inv(&self) -> &Matrix {
        &self.sigma_s_inv
    }
}

/// Joint model. `rho` scales the correlation between factor and asset shocks.
#[derive(Debug, Clone)]
pub struct MarketModel {
    factors: FactorDynamics,
    assets: AssetDynamics,
    rho: f64,
    sigma_sx: Matrix,
}

impl MarketModel {
    pub fn new(factors: FactorDynamics, assets: AssetDynamics, rho: f64) -> Result<Self> {
        if factors.n_drivers() != assets.l_s.ncols() {
            return Err(Error::Dimension(format!(
                "factor and asset loadings use {} and {} drivers",
                factors.n_drivers(),
                assets.l_s.ncols()
            )));
        }
        if assets.beta.ncols() != factors.dim() {
            return Err(Error::Dimension(format!("beta has {} columns, expected {}", assets.beta.ncols(), factors.dim())));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("rho must lie in [0, 1], got {rho}")));
        }
        let sigma_sx = &assets.l_s * factors.l_x.transpose() * rho;
        Ok(Self { factors, assets, rho, sigma_sx })
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.factors.clone(), self.assets.clone(), rho)
    }

    pub fn with_r_f(&self, r_f: f64) -> Result<Self> {
        let a = &self.assets;
        let assets = AssetDynamics::new(a.alpha.clone(), a.beta.clone(), a.l_s.clone(), r_f)?;
        Self::new(self.factors.clone(), assets, self.rho)
    }

    pub fn factors(&self) -> &FactorDynamics {
        &self.factors
    }

    pub fn assets(&self) -> &AssetDynamics {
        &self.assets
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn d(&self) -> usize {
        self.factors.dim()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.n_assets()
    }

    pub fn n_drivers(&self) -> usize {
        self.factors.n_drivers()
    }

    /// Instantaneous asset/factor covariance `ρ L^S (L^X)ᵀ` (N×d).
    pub fn sigma_sx(&self) -> &Matrix {
        &self.sigma_sx
    }

    /// Calibrated five-factor, five-asset dividend-yield model.
    ///
    /// The risk-free rate is not part of the calibration and is set to 2%.
    pub fn published() -> Self {
        let l_x = [
            [1.05e-2, 0.0, 0.0, 0.0, 0.0],
            [8.52e-3, 2.92e-2, 0.0, 0.0, 0.0],
            [1.07e-2, 1.73e-2, 2.39e-2, 0.0, 0.0],
            [4.08e-2, 1.29e-2, 4.94e-3, 2.64e-2, 0.0],
            [8.31e-4, 1.63e-2, 2.36e-2, 3.63e-3, 7.60e-3],
        ];
        let l_s = [
            [9.31e-3, -2.65e-2, -1.38e-2, 7.39e-3, -2.03e-3, 1.41e-1, 0.0, 0.0, 0.0, 0.0],
            [2.99e-3, 8.44e-3, -2.70e-3, 1.74e-2, -2.90e-2, 1.04e-1, 1.56e-1, 0.0, 0.0, 0.0],
            [4.22e-3, -9.62e-4, 3.47e-3, 1.47e-3, -4.55e-3, 2.13e-2, -5.13e-3, 6.80e-2, 0.0, 0.0],
            [3.30e-3, -4.49e-2, 1.12e-2, 2.55e-2, -6.98e-3, 1.65e-1, -1.32e-2, 4.91e-2, 1.51e-1, 0.0],
            [-2.07e-2, 4.26e-3, 1.49e-2, 4.06e-4, 4.21e-3, -3.69e-2, -2.62e-2, 8.03e-2, 1.84e-2, 8.83e-2],
        ];
        let lx = Matrix::from_fn(5, 10, |i, j| if j < 5 { l_x[i][j] } else { 0.0 });
        let ls = Matrix::from_fn(5, 10, |i, j| l_s[i][j]);
        let theta = Matrix::from_diagonal(&Vector::from_vec(vec![0.7412, 0.6080, 0.0677, 0.7872, 0.1751]));
        let mu = Vector::from_vec(vec![0.0200, 0.0068, 0.0265, 0.0429, 0.0235]);
        let alpha = Vector::from_vec(vec![-0.2044, -0.0320, -0.0589, -0.1824, -0.1501]);
        let beta = Matrix::from_diagonal(&Vector::from_vec(vec![14.1731, 3.9467, 1.7666, 5.2718, 5.6344]));
        let factors = FactorDynamics::new(theta, mu, lx).expect("published factor model is valid");
        let assets = AssetDynamics::new(alpha, beta, ls, 0.02).expect("published asset model is valid");
        Self::new(factors, assets, 1.0).expect("published model is valid")
    }

    pub fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            theta: to_rows(&self.factors.theta),
            mu: self.factors.mu.iter().copied().collect(),
            l_x: to_rows(&self.factors.l_x),
            alpha: self.assets.alpha.iter().copied().collect(),
            beta: to_rows(&self.assets.beta),
            l_s: to_rows(&self.assets.l_s),
            r_f: self.assets.r_f,
            rho: self.rho,
        }
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self> {
        let factors = FactorDynamics::new(from_rows(&doc.theta)?, DVector::from_vec(doc.mu.clone()), from_rows(&doc.l_x)?)?;
        let assets = AssetDynamics::new(
            DVector::from_vec(doc.alpha.clone()),
            from_rows(&doc.beta)?,
            from_rows(&doc.l_s)?,
            doc.r_f,
        )?;
        Self::new(factors, assets, doc.rho)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        Self::from_doc(&doc).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model document serializes")
    }
}

/// JSON form of [`MarketModel`]; matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelDoc {
    pub theta: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub l_x: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub l_s: Vec<Vec<f64>>,
    pub r_f: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_rho() -> f64 {
    1.0
}

pub fn long_run_cov(f: &FactorDynamics) -> Matrix {
    f.long_run_cov().clone()
}

fn check_times(t: f64, horizon: f64) -> Result<()> {
    if !(t <= horizon) {
        return Err(Error::Domain(format!("conditioning time {t} is after horizon {horizon}")));
    }
    Ok(())
}

/// `E[X(T) | X(t) = x] = (I − e^{−Θ(T−t)})μ + e^{−Θ(T−t)}x`.
pub fn cond_factor_mean(f: &FactorDynamics, t: f64, horizon: f64, x: &Vector) -> Result<Vector> {
    check_times(t, horizon)?;
    Ok(f.transition_mean(horizon - t, x))
}

/// `Cov[X(T) | X(t)] = Σ − e^{−Θ(T−t)} Σ e^{−Θᵀ(T−t)}`.
pub fn cond_factor_cov(f: &FactorDynamics, t: f64, horizon: f64) -> Result<Matrix> {
    check_times(t, horizon)?;
    Ok(f.transition_cov(horizon - t))
}

/// One step of the exact Gaussian transition used by the path simulator.
///
/// The joint innovation `z = (ε_X, ΔW)` of the factor noise and the driver
/// increment over the step has mean `shift + shift_map · x` and covariance
/// `noise · noiseᵀ`; the factor then moves to `decay · x + drift + ε_X`.
#[derive(Debug, Clone)]
pub struct StepKernel {
    pub h: f64,
    pub decay: Matrix,
    pub drift: Vector,
    pub shift: Vector,
    pub shift_map: Matrix,
    pub noise: Matrix,
}

impl StepKernel {
    /// Prior joint law of the factor innovation and driver increment.
    pub fn prior_cov(f: &FactorDynamics, h: f64) -> Matrix {
        let d = f.dim();
        let np = f.n_drivers();
        let cross = f.integrated_decay(h) * f.l_x();
        let mut cov = Matrix::zeros(d + np, d + np);
        cov.view_mut((0, 0), (d, d)).copy_from(&f.transition_cov(h));
        cov.view_mut((0, d), (d, np)).copy_from(&cross);
        cov.view_mut((d, 0), (np, d)).copy_from(&cross.transpose());
        cov.view_mut((d, d), (np, np)).fill_diagonal(h);
        cov
    }

    pub fn unconditional(f: &FactorDynamics, h: f64) -> Self {
        let d = f.dim();
        let decay = f.decay(h);
        let drift = (Matrix::identity(d, d) - &decay) * f.mu();
        let np = f.n_drivers();
        Self {
            h,
            decay,
            drift,
            shift: Vector::zeros(d + np),
            shift_map: Matrix::zeros(d + np, d),
            noise: psd_factor(&Self::prior_cov(f, h)),
        }
    }
}

/// Kernels for every step of `grid` under the unconditional law.
pub fn unconditional_kernels(f: &FactorDynamics, grid: &TimeGrid) -> Vec<StepKernel> {
    let k = StepKernel::unconditional(f, grid.step());
    vec![k; grid.n_steps()]
}

/// A single simulated trajectory, one entry per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub factors: Vec<Vector>,
    pub log_prices: Vec<Vector>,
}

impl Path {
    pub fn price(&self, k: usize) -> Vector {
        self.log_prices[k].map(f64::exp)
    }
}

/// Simulated trajectories on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub grid: TimeGrid,
    pub seed: u64,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn terminal_factors(&self) -> Vec<Vector> {
        self.paths.iter().map(|p| p.factors.last().expect("non-empty path").clone()).collect()
    }
}

/// Random stream for path `index`; independent of how many paths are drawn.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Driver of the path simulation: the model, the per-step kernels and the start point.
pub struct PathEngine<'a> {
    model: &'a MarketModel,
    kernels: Vec<StepKernel>,
    grid: TimeGrid,
    x0: Vector,
    log_s0: Vector,
    price_drift_const: Vector,
}

impl<'a> PathEngine<'a> {
    pub fn new(model: &'a MarketModel, kernels: Vec<StepKernel>, grid: TimeGrid, x0: &Vector, s0: &Vector) -> Result<Self> {
        if x0.len() != model.d() || s0.len() != model.n_assets() {
            return Err(Error::Dimension(format!(
                "start point has {} factors and {} prices, model needs {} and {}",
                x0.len(),
                s0.len(),
                model.d(),
                model.n_assets()
            )));
        }
        if s0.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Domain("initial prices must be positive".into()));
        }
        if kernels.len() != grid.n_steps() {
            return Err(Error::Dimension(format!("{} kernels for {} steps", kernels.len(), grid.n_steps())));
        }
        let a = model.assets();
        let price_drift_const = a.alpha() - a.sigma_s().diagonal() * 0.5;
        Ok(Self { model, kernels, grid, x0: x0.clone(), log_s0: s0.map(f64::ln), price_drift_const })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Simulates path `index` of the stream keyed by `seed`.
    pub fn path(&self, seed: u64, index: u64) -> Path {
        let m = self.model;
        let d = m.d();
        let np = m.n_drivers();
        let rho = m.rho();
        let mix = (1.0 - rho * rho).max(0.0).sqrt();
        let l_s = m.assets().l_s();
        let beta = m.assets().beta();
        let mut rng = path_rng(seed, index);
        let n = self.grid.n_steps();
        let mut factors = Vec::with_capacity(n + 1);
        let mut log_prices = Vec::with_capacity(n + 1);
        let mut x = self.x0.clone();
        let mut ls = self.log_s0.clone();
        factors.push(x.clone());
        log_prices.push(ls.clone());
        for k in &self.kernels {
            let xi = normals(&mut rng, d + np);
            let z = &k.shift + &k.shift_map * &x + &k.noise * xi;
            let dw = z.rows(d, np).into_owned();
            let shock = if rho < 1.0 {
                let dw_ind = normals(&mut rng, np) * k.h.sqrt();
                dw * rho + dw_ind * mix
            } else {
                dw
            };
            ls += (&self.price_drift_const + beta * &x) * k.h + l_s * shock;
            x = &k.decay * &x + &k.drift + z.rows(0, d);
            factors.push(x.clone());
            log_prices.push(ls.clone());
        }
        Path { factors, log_prices }
    }

    /// Applies `f` to each of `n_paths` paths in parallel, keeping results in path order.
    pub fn map<R, F>(&self, n_paths: usize, seed: u64, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize, &Path) -> R + Sync,
    {
        (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let p = self.path(seed, i as u64);
                f(i, &p)
            })
            .collect()
    }

    pub fn run(&self, n_paths: usize, seed: u64) -> PathSet {
        PathSet { grid: self.grid, seed, paths: self.map(n_paths, seed, |_, p| p.clone()) }
    }
}

/// Joint simulation of factors (exact transition) and prices (log-Euler with shared shocks).
pub fn simulate_joint(m: &MarketModel, x0: &Vector, s0: &Vector, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathSet> {
    let engine = PathEngine::new(m, unconditional_kernels(m.factors(), grid), *grid, x0, s0)?;
    Ok(engine.run(n_paths, seed))
}

/// Sample mean and covariance of a set of vectors.
pub fn sample_moments(xs: &[Vector]) -> (Vector, Matrix) {
    let n = xs.len() as f64;
    let dim = xs[0].len();
    let mean = xs.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n;
    let cov = xs.iter().fold(DMatrix::zeros(dim, dim), |acc, x| {
        let c = x - &mean;
        acc + &c * c.transpose()
    }) / (n - 1.0);
    (mean, cov)
}
