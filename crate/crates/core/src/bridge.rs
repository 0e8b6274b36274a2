//! Mean-reverting bridges: OU processes pinned at a future time, their noisy-view
//! extensions, and the multi-dimensional precision-gain / alignment machinery.
//!
//! The 1-D bridge is built on the standard process `dX = −θX dt + dW`; the
//! multi-dimensional routines use `dX = −ΘX dt + L dW` with `Σ = L Lᵀ`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{normals, path_rng, MarketModel};
use crate::numerics::{cholesky, lu_solve, mat_exp, quad_scalar, spd_solve, symmetrize, Matrix, TimeGrid, Vector};
use crate::views::ViewSpec;

/// Simpson panels used for the staggered covariance integrals.
pub const QUAD_PANELS: usize = 2048;

/// 1-D bridge from `a` to `y_target` with reversion `theta` and hitting time `t_hit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bridge1D {
    pub a: f64,
    pub y_target: f64,
    pub theta: f64,
    pub t_hit: f64,
}

impl Bridge1D {
    pub fn new(a: f64, y_target: f64, theta: f64, t_hit: f64) -> Result<Self> {
        if !(theta > 0.0) || !(t_hit > 0.0) {
            return Err(Error::Domain(format!("bridge needs theta > 0 and t_hit > 0, got {theta}, {t_hit}")));
        }
        Ok(Self { a, y_target, theta, t_hit })
    }

    /// Variance of the unpinned process at `t`: `(1 − e^{−2θt}) / 2θ`.
    fn ou_var(&self, t: f64) -> f64 {
        -(-2.0 * self.theta * t).exp_m1() / (2.0 * self.theta)
    }
}

/// `θ coth(θτ)` and `sech(θτ)` written with `expm1` so that small `θτ` stays accurate.
fn coth_sech(theta: f64, tau: f64) -> (f64, f64) {
    let x = theta * tau;
    let em = (-2.0 * x).exp_m1();
    let theta_t = if x < 1e-300 { 1.0 / tau } else { theta * (2.0 + em) / (-em) };
    let sech = 2.0 * (-x).exp() / (2.0 + em);
    (theta_t, sech)
}

/// Time-varying reversion `θ̃(t)` and mean `μ̃(t, y)` of the bridge SDE.
pub fn mrb_sde_coeffs(b: &Bridge1D, t: f64) -> Result<(f64, f64)> {
    if !(t < b.t_hit) {
        return Err(Error::Domain(format!("bridge coefficients are singular at t = {t} >= {}", b.t_hit)));
    }
    let (theta_t, sech) = coth_sech(b.theta, b.t_hit - t);
    Ok((theta_t, sech * b.y_target))
}

/// Mean of `B(t)` and `Cov(B(t), B(s))` for `s ≤ t`.
pub fn mrb_moments(b: &Bridge1D, s: f64, t: f64) -> Result<(f64, f64)> {
    if !(0.0 <= s && s <= t && t <= b.t_hit) {
        return Err(Error::Domain(format!("bridge moments need 0 <= s <= t <= {}, got s = {s}, t = {t}", b.t_hit)));
    }
    let th = b.theta;
    let big_t = b.t_hit;
    let denom = -(-2.0 * th * big_t).exp_m1();
    let weight = ((-th * (big_t - t)).exp() - (-th * (big_t + t)).exp()) / denom;
    let mean = (-th * t).exp() * b.a + weight * (b.y_target - (-th * big_t).exp() * b.a);
    let ou_cov = (-th * (t - s)).exp() * b.ou_var(s);
    let cov = -(-2.0 * th * (big_t - t)).exp_m1() / denom * ou_cov;
    Ok((mean, cov))
}

/// Euler paths of the bridge SDE on `grid` (which must end before `t_hit`).
pub fn simulate_bridge(b: &Bridge1D, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(grid.t1() < b.t_hit) {
        return Err(Error::Domain("bridge simulation grid must end before the hitting time".into()));
    }
    let h = grid.step();
    let coeffs: Vec<(f64, f64)> = (0..grid.n_steps()).map(|k| mrb_sde_coeffs(b, grid.node(k))).collect::<Result<_>>()?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let z = normals(&mut rng, grid.n_steps());
            let mut x = b.a;
            let mut out = Vec::with_capacity(grid.n_nodes());
            out.push(x);
            for (k, &(th, mu)) in coeffs.iter().enumerate() {
                x += th * (mu - x) * h + h.sqrt() * z[k];
                out.push(x);
            }
            out
        })
        .collect())
}

/// Bridge equivalent of a 1-D OU conditioned on a noisy terminal view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyBridge1D {
    /// Standardised bridge with extended hitting time `T + delta` and discounted target.
    pub bridge: Bridge1D,
    pub delta: f64,
    pub t_obs: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl NoisyBridge1D {
    /// Mean and variance of the conditioned factor `X^y(t) = (1 − e^{−θt})μ + σB(t)`.
    pub fn factor_moments(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.t_obs).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.t_obs)));
        }
        let (m, v) = mrb_moments(&self.bridge, t, t)?;
        let shift = -(-self.bridge.theta * t).exp_m1() * self.mu;
        Ok((shift + self.sigma * m, self.sigma * self.sigma * v))
    }
}

/// Maps the view `Y = X(T) + ε`, `Var ε = ω²/(2θ)`, on `dX = θ(μ − X)dt + σdW` with
/// `X(0) = a` to a standardised bridge with extended hitting time.
pub fn noisy_extension(theta: f64, omega2: f64, sigma2: f64, horizon: f64, y: f64, mu: f64, a: f64) -> Result<NoisyBridge1D> {
    if !(theta > 0.0 && sigma2 > 0.0 && omega2 >= 0.0) {
        return Err(Error::Domain(format!("need theta > 0, sigma2 > 0, omega2 >= 0; got {theta}, {sigma2}, {omega2}")));
    }
    let sigma = sigma2.sqrt();
    let delta = (omega2 / sigma2).ln_1p() / (2.0 * theta);
    let shifted = y + (-theta * horizon).exp_m1() * mu;
    let y_target = (-theta * delta).exp() * shifted / sigma;
    let bridge = Bridge1D::new(a / sigma, y_target, theta, horizon + delta)?;
    Ok(NoisyBridge1D { bridge, delta, t_obs: horizon, mu, sigma })
}

/// Covariance of `(X_i(tᵢ))ᵢ` for the zero-start process, entry `ij` equal to
/// `∫₀^{min(tᵢ,tⱼ)} eᵢᵀ e^{−Θ(tᵢ−u)} Σ e^{−Θᵀ(tⱼ−u)} eⱼ du`.
pub fn staggered_cov(times: &[f64], theta: &Matrix, sigma_x: &Matrix) -> Result<Matrix> {
    let d = times.len();
    if theta.shape() != (d, d) || sigma_x.shape() != (d, d) {
        return Err(Error::Dimension(format!("{d} times for {:?} reversion matrix", theta.shape())));
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let upper = times[i].min(times[j]);
            quad_scalar(
                |u| {
                    let ei = mat_exp(theta, -(times[i] - u)).expect("square");
                    let ej = mat_exp(theta, -(times[j] - u)).expect("square");
                    (ei.row(i) * sigma_x * ej.row(j).transpose())[(0, 0)]
                },
                0.0,
                upper,
                QUAD_PANELS,
            )
        })
        .collect();
    let mut c = Matrix::zeros(d, d);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        c[(i, j)] = v;
        c[(j, i)] = v;
    }
    Ok(c)
}

/// Matrix whose row `i` is `eᵢᵀ e^{−Θ tᵢ}`.
pub fn staggered_decay(times: &[f64], theta: &Matrix) -> Result<Matrix> {
    let d = times.len();
    let mut m = Matrix::zeros(d, d);
    for (i, &t) in times.iter().enumerate() {
        m.set_row(i, &mat_exp(theta, -t)?.row(i));
    }
    Ok(m)
}

fn check_delta(delta: &[f64]) -> Result<()> {
    if delta.is_empty() || delta.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("time extensions must be positive, got {delta:?}")));
    }
    Ok(())
}

/// Precision of `X(T)` gained by observing `(X_i(T + δᵢ))ᵢ`: `Mᵀ C(δ)^{−1} M`,
/// with `M` row `i` equal to `eᵢᵀ e^{−Θδᵢ}`.
pub fn precision_gain(delta: &[f64], theta: &Matrix, sigma_x: &Matrix) -> Result<Matrix> {
    check_delta(delta)?;
    let c = staggered_cov(delta, theta, sigma_x)?;
    let m = staggered_decay(delta, theta)?;
    let inner = spd_solve(&c, &m).map_err(|e| Error::Singular(format!("extension covariance C(δ) ({e})")))?;
    Ok(symmetrize(&(m.transpose() * inner)))
}

/// Outcome of the alignment search.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// Best time extension found.
    pub delta: Vec<f64>,
    /// `‖PᵀΩ^{−1}P − 𝒫(δ)‖_F / ‖PᵀΩ^{−1}P‖_F` at `delta`.
    pub residual: f64,
    pub aligned: bool,
    pub iterations: usize,
}

/// Relative residual below which views count as aligned with a time extension.
pub const ALIGNMENT_TOL: f64 = 1e-8;

/// Searches for `δ > 0` with `PᵀΩ^{−1}P = 𝒫(δ)`.
///
/// One factor: closed form. Several factors: damped Gauss-Newton on `ln δ`
/// from the decoupled per-factor guesses, halving the step until the residual drops.
pub fn check_alignment(m: &MarketModel, v: &ViewSpec) -> Result<AlignmentReport> {
    let f = m.factors();
    let g = v.precision()?;
    let theta = f.theta();
    let sigma = f.sigma_x();
    let d = m.d();
    let scale = g.norm().max(f64::MIN_POSITIVE);
    let residual_of = |delta: &[f64]| -> Result<Matrix> { Ok((&g - precision_gain(delta, theta, sigma)?) / scale) };
    let init: Vec<f64> = (0..d)
        .map(|i| {
            let th = theta[(i, i)];
            let gi = g[(i, i)].max(1e-300);
            (2.0 * th / (sigma[(i, i)] * gi)).ln_1p() / (2.0 * th)
        })
        .collect();
    if d == 1 {
        let r = residual_of(&init)?.norm();
        return Ok(AlignmentReport { delta: init, residual: r, aligned: r < ALIGNMENT_TOL, iterations: 0 });
    }
    let pack = |r: &Matrix| -> Vector {
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                out.push(if i == j { r[(i, j)] } else { r[(i, j)] * std::f64::consts::SQRT_2 });
            }
        }
        Vector::from_vec(out)
    };
    let mut log_delta: Vec<f64> = init.iter().map(|x| x.max(1e-12).ln()).collect();
    let eval = |ld: &[f64]| -> Result<Vector> { residual_of(&ld.iter().map(|x| x.exp()).collect::<Vec<_>>()).map(|r| pack(&r)) };
    let mut r = eval(&log_delta)?;
    let mut iterations = 0;
    for it in 0..100 {
        iterations = it + 1;
        if r.norm() < ALIGNMENT_TOL * 1e-2 {
            break;
        }
        let step = 1e-6;
        let mut jac = Matrix::zeros(r.len(), d);
        for k in 0..d {
            let mut up = log_delta.clone();
            let mut dn = log_delta.clone();
            up[k] += step;
            dn[k] -= step;
            jac.set_column(k, &((eval(&up)? - eval(&dn)?) / (2.0 * step)));
        }
        let normal = jac.transpose() * &jac + Matrix::identity(d, d) * 1e-14;
        let rhs = -(jac.transpose() * &r);
        let dir = match lu_solve(&normal, &Matrix::from_column_slice(d, 1, rhs.as_slice())) {
            Ok(s) => s.column(0).into_owned(),
            Err(_) => break,
        };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = log_delta.iter().zip(dir.iter()).map(|(x, s)| x + lambda * s.clamp(-5.0, 5.0)).collect();
            if let Ok(rt) = eval(&trial) {
                if rt.norm() < r.norm() {
                    log_delta = trial;
                    r = rt;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let delta: Vec<f64> = log_delta.iter().map(|x| x.exp()).collect();
    let residual = r.norm();
    Ok(AlignmentReport { delta, residual, aligned: residual < ALIGNMENT_TOL, iterations })
}

/// Target of the equivalent multi-dimensional bridge: `C(δ) M^{−ᵀ} PᵀΩ^{−1}y`.
pub fn mmrb_target(delta: &[f64], v: &ViewSpec, theta: &Matrix, sigma_x: &Matrix) -> Result<Vector> {
    check_delta(delta)?;
    let d = delta.len();
    if v.p().ncols() != d || v.p().rank(1e-12) < d {
        return Err(Error::Domain("bridge target needs a view map of full column rank".into()));
    }
    let c = staggered_cov(delta, theta, sigma_x)?;
    let m = staggered_decay(delta, theta)?;
    let w = v.weighted_target()?;
    let z = lu_solve(&m.transpose(), &Matrix::from_column_slice(d, 1, w.as_slice()))?;
    Ok(&c * z.column(0))
}

/// Mean of `B(t)` and `Cov(B(t), B(s))` for the process started at `a` and pinned
/// componentwise, `X_i(T̃_i) = y_i`.
pub fn mmrb_moments(a: &Vector, y: &Vector, t_hit: &[f64], theta: &Matrix, sigma_x: &Matrix, t: f64, s: f64) -> Result<(Vector, Matrix)> {
    let d = a.len();
    if y.len() != d || t_hit.len() != d {
        return Err(Error::Dimension("start, target and hitting times must share the factor dimension".into()));
    }
    let t_min = t_hit.iter().copied().fold(f64::INFINITY, f64::min);
    if !(0.0 <= s && s <= t && t <= t_min) {
        return Err(Error::Domain(format!("need 0 <= s <= t <= {t_min}, got s = {s}, t = {t}")));
    }
    let v_hit = staggered_cov(t_hit, theta, sigma_x)?;
    let l = cholesky(&v_hit).map_err(|e| Error::Singular(format!("hitting-time covariance ({e})")))?;
    let ou_var = |u: f64| -> Result<Matrix> { staggered_cov(&vec![u; d], theta, sigma_x) };
    // Cov(X(u), (X_i(T̃_i))ᵢ): column i is V(u) e^{−Θᵀ(T̃ᵢ − u)} eᵢ
    let gamma = |u: f64, vu: &Matrix| -> Result<Matrix> {
        let shifted: Vec<f64> = t_hit.iter().map(|th| th - u).collect();
        Ok(vu * staggered_decay(&shifted, theta)?.transpose())
    };
    let vt = if t > 0.0 { ou_var(t)? } else { Matrix::zeros(d, d) };
    let vs = if s == t { vt.clone() } else if s > 0.0 { ou_var(s)? } else { Matrix::zeros(d, d) };
    let g_t = gamma(t, &vt)?;
    let g_s = if s == t { g_t.clone() } else { gamma(s, &vs)? };
    let solve = |b: &Matrix| -> Result<Matrix> {
        let z = l.solve_lower_triangular(b).ok_or_else(|| Error::Singular("triangular solve".into()))?;
        l.transpose().solve_upper_triangular(&z).ok_or_else(|| Error::Singular("triangular solve".into()))
    };
    let m_hit = staggered_decay(t_hit, theta)?;
    let innov = y - &m_hit * a;
    let w = solve(&Matrix::from_column_slice(d, 1, innov.as_slice()))?;
    let mean = mat_exp(theta, -t)? * a + &g_t * w.column(0);
    let cov = mat_exp(theta, -(t - s))? * &vs - &g_t * solve(&g_s.transpose())?;
    Ok((mean, cov))
}
