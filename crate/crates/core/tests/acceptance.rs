//! Acceptance criteria 1–10, one PASS/FAIL line each. Exits non-zero if any fails.

use std::time::{Duration, Instant};

use factor_views::baselines::{bl_moments, BlPlan};
use factor_views::bridge::{check_alignment, mrb_moments, noisy_extension, precision_gain, Bridge1D};
use factor_views::calibrate::{calibrate, fit_factor_ou, simulate_panel, MONTH};
use factor_views::control::{hjb_residual, policy, solve_decomposed, solve_full, solve_no_views, PolicySource, Preferences};
use factor_views::harness::{frontier, matched_risk, run_experiment, view_value, ExperimentConfig, StrategyKind, Sweep, DEFAULT_RHO_SWEEP, DEFAULT_TAU_SWEEP};
use factor_views::learning::{augmented_hjb_residual, filter_path, gamma_t, precision_split, schur_complement, solve_augmented, AugmentedModel, DriftPrior};
use factor_views::market::{path_rng, sample_moments, unconditional_kernels, AssetDynamics, FactorDynamics, MarketModel, PathEngine};
use factor_views::numerics::{
    check_stable, cholesky, integrate_forward, mat_exp, max_sym_eigenvalue, solve_lyapunov, spd_inverse, symmetrize, Matrix, TimeGrid, Vector,
};
use factor_views::views::{conditional_kernels, conditional_moments, omega_from_tau, ConditionalCoeffs, ViewSpec};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Default)]
struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        let msg = msg.into();
        if ok {
            self.notes.push(msg);
        } else {
            self.failures.push(msg);
        }
    }

    fn within(&mut self, start: Instant, limit: Duration) {
        let e = start.elapsed();
        self.check(e < limit, format!("runtime {:.1}s (limit {}s)", e.as_secs_f64(), limit.as_secs()));
    }
}

fn default_views() -> Matrix {
    Matrix::from_row_slice(3, 5, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0])
}

/// Published model with the default views at `τ` and `y` one prior standard deviation above its mean.
fn published_view(m: &MarketModel, tau: f64) -> ViewSpec {
    let p = default_views();
    let f = m.factors();
    let pred = &p * f.transition_mean(1.0, f.mu());
    let sd = (&p * f.transition_cov(1.0) * p.transpose()).diagonal().map(f64::sqrt);
    ViewSpec::new(p.clone(), omega_from_tau(m, &p, tau, 1.0).unwrap(), pred + sd, 1.0).unwrap()
}

fn random_two_factor(seed: u64) -> MarketModel {
    let mut rng = path_rng(seed, 0);
    loop {
        let mut u = |a: f64, b: f64| rng.random_range(a..b);
        let theta = Matrix::from_row_slice(2, 2, &[u(0.4, 1.5), u(-0.3, 0.3), u(-0.3, 0.3), u(0.4, 1.5)]);
        if check_stable(&theta).is_err() {
            continue;
        }
        let mu = Vector::from_vec(vec![u(-0.05, 0.05), u(-0.05, 0.05)]);
        let l_x = Matrix::from_fn(2, 4, |i, j| if j == i { u(0.1, 0.3) } else { u(-0.05, 0.05) });
        let l_s = Matrix::from_fn(2, 4, |i, j| if j == i + 2 { u(0.1, 0.3) } else { u(-0.1, 0.1) });
        let f = FactorDynamics::new(theta, mu, l_x).unwrap();
        let a = AssetDynamics::new(Vector::from_vec(vec![u(0.0, 0.08), u(0.0, 0.08)]), Matrix::from_fn(2, 2, |_, _| u(-1.0, 1.0)), l_s, 0.02).unwrap();
        return MarketModel::new(f, a, 1.0).unwrap();
    }
}

/// Conditions the 200-step exact-transition chain `X₀, …, X₂₀₀` on `y = P X₂₀₀ + ε`.
fn chain_conditioning(m: &MarketModel, v: &ViewSpec, x0: &Vector, n: usize, k: usize) -> (Vector, Matrix) {
    let f = m.factors();
    let h = v.horizon() / n as f64;
    let (fm, q) = (f.decay(h), f.transition_cov(h));
    let drift = (Matrix::identity(2, 2) - &fm) * f.mu();
    let mut means = vec![x0.clone()];
    let mut covs = vec![Matrix::zeros(2, 2)];
    for j in 0..n {
        means.push(&fm * &means[j] + &drift);
        covs.push(&fm * &covs[j] * fm.transpose() + &q);
    }
    let mut prop = Matrix::identity(2, 2);
    for _ in k..n {
        prop = &fm * prop;
    }
    let cross = &covs[k] * prop.transpose() * v.p().transpose();
    let s = v.p() * &covs[n] * v.p().transpose() + v.omega();
    let s_inv = s.try_inverse().unwrap();
    let mean = &means[k] + &cross * &s_inv * (v.y() - v.p() * &means[n]);
    let cov = &covs[k] - &cross * &s_inv * cross.transpose();
    (mean, cov)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    let m = random_two_factor(101);
    let v = ViewSpec::new(Matrix::from_row_slice(1, 2, &[1.0, -0.7]), Matrix::from_element(1, 1, 0.004), Vector::from_element(1, 0.12), 1.0).unwrap();
    let x0 = Vector::from_vec(vec![0.03, -0.01]);
    let mut worst: f64 = 0.0;
    for (frac, k) in [(0.25, 50), (0.5, 100), (0.75, 150), (1.0, 200)] {
        let (mean, cov) = conditional_moments(&m, &v, frac, &x0).unwrap();
        let (om, oc) = chain_conditioning(&m, &v, &x0, 200, k);
        worst = worst.max((mean - om).amax()).max((cov - oc).amax());
    }
    o.check(worst < 1e-4, format!("max |conditional − chain oracle| = {worst:.2e} (tol 1e-4)"));
    o.within(start, Duration::from_secs(10));
    o
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    // unit-volatility OU from a, conditioned on X(T) = y
    let mut worst: f64 = 0.0;
    for (a, y, theta, big_t) in [(0.0, 1.0, 0.5, 1.0), (0.3, -0.4, 2.0, 1.5), (-0.2, 0.7, 0.05, 0.8)] {
        let b = Bridge1D::new(a, y, theta, big_t).unwrap();
        let var = |t: f64| -(-2.0 * theta * t).exp_m1() / (2.0 * theta);
        let mean = |t: f64| (-theta * t).exp() * a;
        for (s, t) in [(0.1, 0.1), (0.2, 0.5), (0.5, 0.7), (0.3, 0.79)] {
            let (bm, bc) = mrb_moments(&b, s, t).unwrap();
            let c_t = (-theta * (big_t - t)).exp() * var(t);
            let c_s = (-theta * (big_t - s)).exp() * var(s);
            let om = mean(t) + c_t / var(big_t) * (y - mean(big_t));
            let oc = (-theta * (t - s)).exp() * var(s) - c_s * c_t / var(big_t);
            worst = worst.max((bm - om).abs()).max((bc - oc).abs());
        }
    }
    o.check(worst < 1e-10, format!("bridge moments vs 2-D conditioning: {worst:.2e} (tol 1e-10)"));

    let mut worst: f64 = 0.0;
    for theta in [0.1, 0.5, 2.0] {
        for omega in [0.0, 0.3, 1.0] {
            let (sigma, mu, a, y, horizon) = (0.7, 0.2, 0.1, 0.5, 1.0);
            let f = FactorDynamics::new(Matrix::from_element(1, 1, theta), Vector::from_element(1, mu), Matrix::from_element(1, 1, sigma)).unwrap();
            let assets = AssetDynamics::new(Vector::zeros(1), Matrix::zeros(1, 1), Matrix::identity(1, 1), 0.02).unwrap();
            let m = MarketModel::new(f, assets, 1.0).unwrap();
            let omega2: f64 = omega * omega;
            let v = if omega == 0.0 {
                ViewSpec::exact(Matrix::identity(1, 1), Vector::from_element(1, y), horizon).unwrap()
            } else {
                ViewSpec::new(Matrix::identity(1, 1), Matrix::from_element(1, 1, omega2 / (2.0 * theta)), Vector::from_element(1, y), horizon).unwrap()
            };
            let nb = noisy_extension(theta, omega2, sigma * sigma, horizon, y, mu, a).unwrap();
            for t in [0.25, 0.5, 0.9] {
                let (cm, cv) = conditional_moments(&m, &v, t, &Vector::from_element(1, a)).unwrap();
                let (bm, bv) = nb.factor_moments(t).unwrap();
                worst = worst.max((cm[0] - bm).abs()).max((cv[(0, 0)] - bv).abs());
            }
        }
    }
    o.check(worst < 1e-8, format!("noisy view vs extended bridge over θ/ω sweep: {worst:.2e} (tol 1e-8)"));

    let mut rng = path_rng(202, 0);
    let mut worst: f64 = 0.0;
    let mut alt_disagree = 0;
    for _ in 0..20 {
        let theta = loop {
            let t = Matrix::from_row_slice(2, 2, &[rng.random_range(0.3..1.5), rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(0.3..1.5)]);
            if check_stable(&t).is_ok() {
                break t;
            }
        };
        let l = Matrix::from_row_slice(2, 2, &[rng.random_range(0.2..0.7), 0.0, rng.random_range(-0.3..0.3), rng.random_range(0.2..0.7)]);
        let sigma = &l * l.transpose();
        let delta = [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
        let gain = precision_gain(&delta, &theta, &sigma).unwrap();
        let (oracle, columns) = brute_precision_gain(&delta, 1.0, &theta, &sigma);
        worst = worst.max((&gain - &oracle).amax());
        if (columns - &oracle).amax() > 1e-6 {
            alt_disagree += 1;
        }
    }
    o.check(worst < 1e-6, format!("precision gain vs brute-force posterior precision on 20 instances: {worst:.2e} (tol 1e-6)"));
    o.check(alt_disagree > 0, format!("column-built F disagrees with the oracle on {alt_disagree}/20 instances"));

    let theta = Matrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.6]);
    let l_x = Matrix::from_row_slice(2, 2, &[0.2, 0.0, 0.05, 0.25]);
    let f = FactorDynamics::new(theta.clone(), Vector::zeros(2), l_x).unwrap();
    let a = AssetDynamics::new(Vector::zeros(2), Matrix::zeros(2, 2), Matrix::identity(2, 2) * 0.2, 0.02).unwrap();
    let m = MarketModel::new(f, a, 0.0).unwrap();
    let planted = [0.15, 0.4];
    let gain = precision_gain(&planted, &theta, m.factors().sigma_x()).unwrap();
    let v = ViewSpec::new(Matrix::identity(2, 2), symmetrize(&spd_inverse(&gain).unwrap()), Vector::from_vec(vec![0.1, -0.1]), 1.0).unwrap();
    let rep = check_alignment(&m, &v).unwrap();
    let err = (rep.delta[0] - planted[0]).abs().max((rep.delta[1] - planted[1]).abs());
    o.check(rep.aligned && err < 1e-8, format!("alignment round trip: δ error {err:.2e} (tol 1e-8)"));
    o.within(start, Duration::from_secs(30));
    o
}

/// Gain in the precision of `X(T)` from observing `Xᵢ(T + δᵢ)`, via the inverse joint covariance;
/// also the closed form with `F` built from the columns `e^{−Θδᵢ}eᵢ` instead of the rows.
fn brute_precision_gain(delta: &[f64], big_t: f64, theta: &Matrix, sigma: &Matrix) -> (Matrix, Matrix) {
    let lr = solve_lyapunov(theta, sigma).unwrap();
    let v = |u: f64| {
        let e = mat_exp(theta, -u).unwrap();
        &lr - &e * &lr * e.transpose()
    };
    let e = |u: f64| mat_exp(theta, -u).unwrap();
    let vt = v(big_t);
    let mut joint = Matrix::zeros(4, 4);
    joint.view_mut((0, 0), (2, 2)).copy_from(&vt);
    for j in 0..2 {
        let c = &vt * e(delta[j]).transpose();
        for i in 0..2 {
            joint[(i, 2 + j)] = c[(i, j)];
            joint[(2 + j, i)] = c[(i, j)];
        }
    }
    let mut fut = Matrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let (ti, tj) = (big_t + delta[i], big_t + delta[j]);
            fut[(i, j)] = if ti <= tj { (v(ti) * e(tj - ti).transpose())[(i, j)] } else { (e(ti - tj) * v(tj))[(i, j)] };
        }
    }
    joint.view_mut((2, 2), (2, 2)).copy_from(&symmetrize(&fut));
    let post_precision = spd_inverse(&symmetrize(&joint)).unwrap().view((0, 0), (2, 2)).into_owned();
    let oracle = post_precision - spd_inverse(&vt).unwrap();
    let c = fut - Matrix::from_fn(2, 2, |i, j| (e(delta[i]) * &vt * e(delta[j]).transpose())[(i, j)]);
    let mut fcols = Matrix::zeros(2, 2);
    for i in 0..2 {
        fcols.set_column(i, &e(delta[i]).column(i));
    }
    (oracle, fcols.transpose() * c.try_inverse().unwrap() * &fcols)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    let m = MarketModel::published();
    let v = published_view(&m, 0.05);
    let pref = Preferences::new(5.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
    let path = solve_full(&m, &v, &pref, &grid).unwrap();
    let coeffs = ConditionalCoeffs::new(&m, &v).unwrap();
    let sd = m.factors().long_run_cov().diagonal().map(f64::sqrt);
    let mut rng = path_rng(303, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..grid.n_steps() - 1);
        let z = rng.random_range(0.5..2.0);
        let x = m.factors().mu() + sd.map(|s| s * rng.random_range(-2.0..2.0));
        worst = worst.max(hjb_residual(&m, &coeffs, &pref, &path, k, z, &x).unwrap());
    }
    o.check(worst < 1e-6, format!("max |𝓛V|/|V| over 100 points = {worst:.2e} (tol 1e-6)"));
    o.within(start, Duration::from_secs(60));
    o
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    let m = MarketModel::published();
    let pref = Preferences::new(5.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
    let v = published_view(&m, 0.05);
    let full = solve_full(&m, &v, &pref, &grid).unwrap();
    let dp = solve_decomposed(&m, &v, &pref, &grid).unwrap();
    let coeffs = ConditionalCoeffs::new(&m, &v).unwrap();
    let sd = m.factors().long_run_cov().diagonal().map(f64::sqrt);
    let dir = Vector::from_vec(vec![1.0, -0.5, 0.8, 0.3, -1.0]);
    let mut worst_pi: f64 = 0.0;
    for i in 0..50 {
        let t = i as f64 / 50.0;
        for j in 0..50 {
            let s = -3.0 + 6.0 * j as f64 / 49.0;
            let x = m.factors().mu() + sd.component_mul(&dir) * s;
            let pf = policy(&m, &pref, &PolicySource::Full { coeffs: &coeffs, path: &full, no_views: None }, t, &x).unwrap();
            let pd = policy(&m, &pref, &PolicySource::Decomposed(&dp), t, &x).unwrap();
            worst_pi = worst_pi.max((pf.weights - pd.weights).amax());
        }
    }
    o.check(worst_pi < 1e-5, format!("‖π_full − π_decomposed‖∞ on 50×50 lattice = {worst_pi:.2e} (tol 1e-5)"));
    let mut worst_a: f64 = 0.0;
    for (k, t) in grid.nodes().enumerate() {
        worst_a = worst_a.max((&dp.with_views.a[k] + dp.a_hat(t).unwrap() - &full.a[k]).amax());
    }
    o.check(worst_a < 1e-6, format!("‖A₁ + Â − A_full‖∞ on the grid = {worst_a:.2e} (tol 1e-6)"));

    let taus = [0.01, 0.05, 0.2, 1.0];
    let paths: Vec<_> = taus.iter().map(|&tau| solve_decomposed(&m, &published_view(&m, tau), &pref, &grid).unwrap()).collect();
    let mut nsd: f64 = f64::NEG_INFINITY;
    let mut mono: f64 = f64::NEG_INFINITY;
    let mut adj = vec![0.0; taus.len()];
    let x = m.factors().mu() + sd.component_mul(&dir);
    for t in (0..=20).map(|i| i as f64 * 0.05) {
        let qs: Vec<Matrix> = paths.iter().map(|p| p.q_matrix(t)).collect();
        // eigenvalues relative to the matrix scale, as for A(t)
        for q in &qs {
            nsd = nsd.max(max_sym_eigenvalue(q) / q.amax().max(1.0));
        }
        for w in qs.windows(2) {
            mono = mono.max(max_sym_eigenvalue(&(&w[0] - &w[1])) / w[0].amax().max(1.0));
        }
    }
    for (i, p) in paths.iter().enumerate() {
        adj[i] = factor_views::control::view_adjustment(&m, &pref, p, 0.0, &x).norm();
    }
    o.check(nsd <= 1e-10, format!("max eigenvalue of Q(t) / ‖Q‖ = {nsd:.2e} (tol 1e-10)"));
    o.check(mono <= 1e-10, format!("max eigenvalue of (Q_τ − Q_τ') / ‖Q_τ‖ for τ < τ' = {mono:.2e} (tol 1e-10)"));
    o.notes.push(format!("‖H(0, x)‖ over τ {taus:?}: {}", adj.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(", ")));
    o.within(start, Duration::from_secs(60));
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::default();
    let m = MarketModel::published();
    let pref = Preferences::new(5.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 4000).unwrap();
    let p = default_views();
    let vague = ViewSpec::new(p.clone(), Matrix::identity(3, 3) * 1e12, Vector::from_vec(vec![0.3, -0.2, 0.1]), 1.0).unwrap();
    let full = solve_full(&m, &vague, &pref, &grid).unwrap();
    let nv = solve_no_views(&m, &pref, &grid).unwrap();
    let coeffs = ConditionalCoeffs::new(&m, &vague).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..grid.n_nodes() {
        worst = worst.max((&full.a[k] - &nv.a[k]).amax()).max((&full.b[k] - &nv.b[k]).amax()).max((full.c[k] - nv.c[k]).abs());
    }
    let x = m.factors().mu() * 1.5;
    for t in [0.0, 0.3, 0.7, 0.99] {
        let pf = policy(&m, &pref, &PolicySource::Full { coeffs: &coeffs, path: &full, no_views: None }, t, &x).unwrap();
        let p0 = policy(&m, &pref, &PolicySource::NoViews(&nv), t, &x).unwrap();
        worst = worst.max((pf.weights - p0.weights).amax());
    }
    o.check(worst < 1e-6, format!("Ω = 1e12·I vs no views (A, b, c, π): {worst:.2e} (tol 1e-6)"));

    let m0 = m.with_rho(0.0).unwrap();
    o.check(m0.sigma_sx().amax() == 0.0, "Σ^{S,X} = 0 at ρ = 0");
    let v = published_view(&m0, 0.05);
    let full = solve_full(&m0, &v, &pref, &grid).unwrap();
    let nv = solve_no_views(&m0, &pref, &grid).unwrap();
    let coeffs = ConditionalCoeffs::new(&m0, &v).unwrap();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for t in [0.0, 0.3, 0.7, 0.99] {
        let pf = policy(&m0, &pref, &PolicySource::Full { coeffs: &coeffs, path: &full, no_views: Some(&nv) }, t, &x).unwrap();
        scale = scale.max(pf.weights.amax());
        worst = worst.max(pf.adjustment.unwrap().amax());
    }
    o.check(worst <= 8.0 * f64::EPSILON * scale.max(1.0), format!("Σ^{{S,X}} = 0: ‖π* − π₀‖∞ = {worst:.2e} (machine precision)"));
    o
}

/// Two assets on one factor, three drivers.
fn two_asset(alpha: Vector, rho: f64) -> MarketModel {
    let f = FactorDynamics::new(Matrix::from_element(1, 1, 1.2), Vector::from_element(1, 0.03), Matrix::from_row_slice(1, 3, &[0.012, 0.0, 0.03])).unwrap();
    let l_s = Matrix::from_row_slice(2, 3, &[0.20, 0.0, 0.05, 0.17, 0.08, 0.04]);
    let a = AssetDynamics::new(alpha, Matrix::from_column_slice(2, 1, &[1.5, 0.8]), l_s, 0.02).unwrap();
    MarketModel::new(f, a, rho).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    let prior = DriftPrior::new(Vector::from_vec(vec![0.04, 0.05]), Matrix::from_row_slice(2, 2, &[0.010, 0.008, 0.008, 0.009])).unwrap();
    let m = two_asset(prior.alpha0.clone(), 1.0);

    let s_inv = spd_inverse(&schur_complement(&m).unwrap()).unwrap();
    let grid = TimeGrid::new(0.0, 5.0, 5000).unwrap();
    let sol = integrate_forward(
        |_, g| {
            let g = Matrix::from_column_slice(2, 2, g.as_slice());
            Vector::from_column_slice((-(&g * &s_inv * &g)).as_slice())
        },
        &Vector::from_column_slice(prior.gamma0.as_slice()),
        &grid,
    )
    .unwrap();
    let worst = (0..grid.n_nodes())
        .step_by(50)
        .map(|k| (gamma_t(&prior, &m, grid.node(k)).unwrap() - Matrix::from_column_slice(2, 2, sol[k].as_slice())).amax())
        .fold(0.0, f64::max);
    o.check(worst < 1e-8, format!("Γ(t) closed form vs Riccati: {worst:.2e} (tol 1e-8)"));

    let (asset, factor) = precision_split(&m).unwrap();
    let gap = (&asset + &factor - &s_inv).amax();
    o.check(gap < 1e-10, format!("precision split sum identity: {gap:.2e} (tol 1e-10)"));
    let (_, f0) = precision_split(&m.with_rho(0.0).unwrap()).unwrap();
    o.check(f0.amax() == 0.0, format!("factor precision term at Σ^{{S,X}} = 0: {:.1e}", f0.amax()));

    let horizon = 5.0;
    let fgrid = TimeGrid::new(0.0, horizon, 252 * 5).unwrap();
    let chol = cholesky(&prior.gamma0).unwrap();
    let n_rep = 200;
    let errors: Vec<Vector> = (0..n_rep)
        .map(|r| {
            let mut rng = path_rng(606, 1_000_000 + r as u64);
            let xi = Vector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            let alpha_true = &prior.alpha0 + &chol * xi;
            let mt = two_asset(alpha_true.clone(), 1.0);
            let engine = PathEngine::new(&mt, unconditional_kernels(mt.factors(), &fgrid), fgrid, mt.factors().mu(), &Vector::from_element(2, 1.0)).unwrap();
            let states = filter_path(&prior, &mt, None, &engine.path(606, r as u64), &fgrid).unwrap();
            &states.last().unwrap().alpha_hat - alpha_true
        })
        .collect();
    let emp = errors.iter().fold(Matrix::zeros(2, 2), |acc, e| acc + e * e.transpose()) / n_rep as f64;
    let g5 = gamma_t(&prior, &m, horizon).unwrap();
    let rel = Matrix::from_fn(2, 2, |i, j| (emp[(i, j)] - g5[(i, j)]).abs() / g5[(i, j)].abs()).amax();
    o.check(rel < 0.25, format!("filter error covariance vs Γ(5y), 200 reps: max relative gap {rel:.3} (tol 0.25)"));

    let p = Matrix::identity(1, 1);
    let v = ViewSpec::new(p.clone(), omega_from_tau(&m, &p, 0.05, 1.0).unwrap(), Vector::from_element(1, 0.05), 1.0).unwrap();
    let aug = AugmentedModel::new(&prior, &m, Some(&v)).unwrap();
    let pref = Preferences::new(4.0).unwrap();
    let agrid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
    let path = solve_augmented(&aug, &pref, &agrid).unwrap();
    let mut rng = path_rng(607, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(2..agrid.n_steps() - 1);
        let st = Vector::from_vec(vec![0.03 + rng.random_range(-0.05..0.05), 0.04 + rng.random_range(-0.1..0.1), 0.05 + rng.random_range(-0.1..0.1)]);
        worst = worst.max(augmented_hjb_residual(&aug, &pref, &path, k, rng.random_range(0.5..2.0), &st).unwrap());
    }
    o.check(worst < 1e-6, format!("augmented HJB residual: {worst:.2e} (tol 1e-6)"));

    let tight = DriftPrior::new(prior.alpha0.clone(), Matrix::identity(2, 2) * 1e-14).unwrap();
    let aug0 = AugmentedModel::new(&tight, &m, Some(&v)).unwrap();
    let g1000 = TimeGrid::new(0.0, 1.0, 1000).unwrap();
    let learned = solve_augmented(&aug0, &pref, &g1000).unwrap();
    let known = solve_full(&m, &v, &pref, &g1000).unwrap();
    let mut worst: f64 = 0.0;
    for k in (0..g1000.n_nodes()).step_by(50) {
        let t = g1000.node(k);
        let x = Vector::from_element(1, 0.02);
        let st = Vector::from_vec(vec![0.02, prior.alpha0[0], prior.alpha0[1]]);
        worst = worst.max((learned.log_value(t, &st) - known.log_value(t, &x)).abs());
        worst = worst.max((learned.a[k].view((0, 0), (1, 1)) - &known.a[k]).amax());
    }
    o.check(worst < 1e-6, format!("degenerate prior vs known-drift solution: {worst:.2e} (tol 1e-6)"));
    o.within(start, Duration::from_secs(300));
    o
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    let cfg = ExperimentConfig::default();
    let vv = view_value(&cfg, 5.0).unwrap();
    let (gain, se) = (vv.gain(), vv.with_views.se);
    o.check(gain >= -2.0 * se, format!("E_y[V] − V₀ = {gain:.4e} ≥ −2 SE (SE {se:.2e})"));
    o.check(gain > 0.0, format!("point estimate {gain:.4e} > 0 (E_y[V] = {:.6}, V₀ = {:.6})", vv.with_views.value, vv.without_views));
    o.within(start, Duration::from_secs(300));
    o
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    let views = StrategyKind::DynamicViews;

    let tau_cfg = ExperimentConfig { strategies: vec![views, StrategyKind::DynamicNoViews], sweep: Sweep::Tau(DEFAULT_TAU_SWEEP.to_vec()), ..Default::default() };
    let rep = run_experiment(&tau_cfg).unwrap();
    let d: Vec<_> = DEFAULT_TAU_SWEEP.iter().map(|&t| rep.delta(Some(t), 5.0, views).unwrap()).collect();
    let line = d.iter().map(|r| format!("τ={}: {:.5}±{:.5}", r.sweep_value.unwrap(), r.delta_cer, r.se)).collect::<Vec<_>>().join(", ");
    o.check(d.iter().all(|r| r.delta_cer > 0.0), format!("ΔCER(τ) > 0: {line}"));
    let ok = d.windows(2).all(|w| w[1].delta_cer <= w[0].delta_cer + 2.0 * w[0].se.hypot(w[1].se));
    o.check(ok, "ΔCER(τ) nonincreasing within 2 SE");

    let rho_cfg = ExperimentConfig { strategies: vec![views, StrategyKind::DynamicNoViews], sweep: Sweep::Rho(DEFAULT_RHO_SWEEP.to_vec()), ..Default::default() };
    let rep = run_experiment(&rho_cfg).unwrap();
    let d: Vec<_> = DEFAULT_RHO_SWEEP.iter().map(|&r| rep.delta(Some(r), 5.0, views).unwrap()).collect();
    let line = d.iter().map(|r| format!("ρ={}: {:.5}±{:.5}", r.sweep_value.unwrap(), r.delta_cer, r.se)).collect::<Vec<_>>().join(", ");
    let ok = d.windows(2).all(|w| w[1].delta_cer >= w[0].delta_cer - 2.0 * w[0].se.hypot(w[1].se));
    o.check(ok, format!("ΔCER(ρ) nondecreasing within 2 SE: {line}"));
    o.check(d[0].delta_cer.abs() <= 2.0 * d[0].se, format!("|ΔCER(ρ=0)| = {:.2e} ≤ 2 SE ({:.2e})", d[0].delta_cer.abs(), 2.0 * d[0].se));

    let fr_cfg = ExperimentConfig { strategies: vec![views, StrategyKind::StaticBl], gammas: vec![3.0, 5.0, 8.0, 12.0, 20.0], ..Default::default() };
    let rep = run_experiment(&fr_cfg).unwrap();
    let pts = frontier(&rep).unwrap();
    let (dynamic, fixed): (Vec<_>, Vec<_>) = pts.into_iter().partition(|p| p.strategy == views.name());
    let matched = matched_risk(&dynamic, &fixed);
    let worst = matched.iter().map(|m| m.mean_gap / m.mean_gap_se).fold(f64::INFINITY, f64::min);
    o.check(!matched.is_empty(), format!("{} of {} static points inside the dynamic std range", matched.len(), fixed.len()));
    o.check(
        matched.iter().all(|m| m.mean_gap >= -2.0 * m.mean_gap_se),
        format!("dynamic frontier weakly above static at matched std (min gap/SE {worst:.2})"),
    );
    o.within(start, Duration::from_secs(1200));
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::default();
    let m = MarketModel::published();
    let v = published_view(&m, 0.05);
    let n = 100_000;
    for s in [0.0, 0.5] {
        let x_s = m.factors().mu() + Vector::from_vec(vec![0.01, -0.005, 0.0, 0.004, 0.0]);
        let mom = bl_moments(&m, &v, s, &Vector::zeros(5), &x_s).unwrap();
        let grid = TimeGrid::new(s, 1.0, ((1.0 - s) * 2000.0) as usize).unwrap();
        let engine = PathEngine::new(&m, conditional_kernels(&m, &v, &grid).unwrap(), grid, &x_s, &Vector::from_element(5, 1.0)).unwrap();
        let r: Vec<Vector> = engine.map(n, 909, |_, p| p.log_prices.last().unwrap() - &p.log_prices[0]);
        let (mean, cov) = sample_moments(&r);
        let mut worst: f64 = 0.0;
        for i in 0..5 {
            worst = worst.max((mean[i] - mom.mu_bl[i]).abs() / (cov[(i, i)] / n as f64).sqrt());
            for j in 0..5 {
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n as f64).sqrt();
                worst = worst.max((cov[(i, j)] - mom.sigma_bl[(i, j)]).abs() / se);
            }
        }
        o.check(worst < 3.0, format!("s = {s}: max |MC − BL| / SE = {worst:.2} over means and covariances (tol 3)"));
    }
    let a = BlPlan::with_panels(&m, &v, 0.1, 256).unwrap();
    let b = BlPlan::with_panels(&m, &v, 0.1, 512).unwrap();
    let rel = ((&a.offset - &b.offset).amax() / a.offset.amax())
        .max((&a.loading - &b.loading).amax() / a.loading.amax())
        .max((&a.sigma - &b.sigma).amax() / a.sigma.amax());
    o.check(rel < 1e-6, format!("256 vs 512 panels: relative change {rel:.2e} (tol 1e-6)"));
    o
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::default();
    let m = MarketModel::published();
    let panel = simulate_panel(&m, 10_001, MONTH, 1010).unwrap();
    let cal = calibrate(&panel).unwrap();
    let f = m.factors();
    for i in 0..5 {
        let (t_true, t_hat) = (f.theta()[(i, i)], cal.factors[i].theta);
        let rel = (t_hat / t_true - 1.0).abs();
        o.check(rel < 0.10, format!("θ_{i}: {t_hat:.4} vs {t_true:.4} ({:.1}%, tol 10%)", 100.0 * rel));
    }
    for i in 0..5 {
        let (m_true, m_hat) = (f.mu()[i], cal.factors[i].mu);
        let rel = (m_hat / m_true - 1.0).abs();
        o.check(rel < 0.05, format!("μ_{i}: {m_hat:.5} vs {m_true:.5} ({:.1}%, tol 5%)", 100.0 * rel));
    }
    let mut l = Matrix::zeros(10, 10);
    l.rows_mut(0, 5).copy_from(f.l_x());
    l.rows_mut(5, 5).copy_from(m.assets().l_s());
    let truth = &l * l.transpose();
    let n_innov = (panel.n_obs() - 1) as f64;
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let se = ((truth[(i, i)] * truth[(j, j)] + truth[(i, j)].powi(2)) / n_innov).sqrt();
            worst = worst.max((cal.joint_cov[(i, j)] - truth[(i, j)]).abs() / se);
        }
    }
    o.check(worst < 4.0, format!("joint covariance: max |Σ̂ − Σ| / SE = {worst:.2} (band 4 SE)"));
    let mut rng = path_rng(1011, 0);
    let mut walk = vec![1.0f64];
    for _ in 0..600 {
        let e: f64 = StandardNormal.sample(&mut rng);
        let last = *walk.last().unwrap();
        walk.push(last * (0.01 + 0.04 * e).exp());
    }
    let rejected = fit_factor_ou(&walk, MONTH).map_or_else(|e| e.to_string(), |_| "accepted".into());
    o.check(rejected.contains("not mean-reverting"), format!("random-walk series: {rejected}"));
    o.within(start, Duration::from_secs(30));
    o
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 Gaussian-conditioning oracle", criterion_1),
        ("2 bridge suite", criterion_2),
        ("3 HJB residual", criterion_3),
        ("4 decomposition equivalence", criterion_4),
        ("5 limits", criterion_5),
        ("6 learning suite", criterion_6),
        ("7 value of sampled views", criterion_7),
        ("8 experiment shapes", criterion_8),
        ("9 static baseline", criterion_9),
        ("10 calibration round trip", criterion_10),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(&format!("{o} "))) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let status = if out.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {name}: {status} ({:.1}s)", start.elapsed().as_secs_f64());
        for n in &out.notes {
            println!("    ok   {n}");
        }
        for f in &out.failures {
            println!("    FAIL {f}");
        }
        failed += usize::from(!out.failures.is_empty());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
