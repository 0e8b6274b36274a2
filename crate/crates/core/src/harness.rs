//! Monte-Carlo experiments: views vs no-views vs static Black-Litterman over
//! sampled or fixed view realizations, with CER, frontier and turnover tables.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::BlStrategy;
use crate::bridge::{mrb_moments, simulate_bridge, Bridge1D};
use crate::calibrate::{calibrate, MonthlyPanel, MONTH};
use crate::control::{run_wealth_path, solve_decomposed, solve_no_views, AffineFeedback, DecomposedPath, Preferences, RiccatiPath, WealthPath};
use crate::error::{Error, Result};
use crate::learning::{DriftFilter, DriftPrior};
use crate::market::{normals, path_rng, unconditional_kernels, AssetDynamics, MarketModel, Path, PathEngine};
use crate::numerics::{cholesky, from_rows, spd_solve, Matrix, TimeGrid, Vector, DEFAULT_STEPS_PER_YEAR};
use crate::views::{conditional_kernels, omega_from_tau, ViewSpec};

/// Stream bit separating view-noise draws from path draws under the same seed.
const VIEW_STREAM: u64 = 1 << 63;

/// Default view map for five factors: `X₁ − X₂`, `X₃`, `X₂ − X₅`.
pub fn default_view_rows() -> Vec<Vec<f64>> {
    vec![vec![1.0, -1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, -1.0]]
}

pub const DEFAULT_TAU_SWEEP: [f64; 4] = [0.05, 0.2, 1.0, 5.0];
pub const DEFAULT_RHO_SWEEP: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSource {
    Published,
    /// Model JSON as written by `calibrate`.
    Json(PathBuf),
    /// Monthly price/yield CSV calibrated on load.
    Calibrate(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YSource {
    /// `y = P X(T) + ε` drawn with every path.
    Sampled,
    /// One realization; paths are drawn from the law conditioned on it.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    pub p: Option<Vec<Vec<f64>>>,
    pub tau: Option<f64>,
    pub omega: Option<Vec<Vec<f64>>>,
    pub y: YSource,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self { p: None, tau: Some(0.05), omega: None, y: YSource::Sampled }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    DynamicViews,
    DynamicNoViews,
    StaticBl,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DynamicViews => "dynamic-views",
            Self::DynamicNoViews => "dynamic-no-views",
            Self::StaticBl => "static-bl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    None,
    Tau(Vec<f64>),
    Rho(Vec<f64>),
}

impl Sweep {
    pub fn axis(&self) -> Option<&'static str> {
        match self {
            Self::None => None,
            Self::Tau(_) => Some("tau"),
            Self::Rho(_) => Some("rho"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// Overrides the model's asset/factor shock correlation.
    pub rho: Option<f64>,
    pub views: ViewConfig,
    pub gammas: Vec<f64>,
    pub horizon: f64,
    /// Simulation steps over the horizon.
    pub steps: usize,
    /// Rebalance dates over the horizon; must divide `steps`.
    pub rebalances: usize,
    pub riccati_steps_per_year: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub z0: f64,
    /// Initial factors; the long-run mean when absent.
    pub x0: Option<Vec<f64>>,
    pub strategies: Vec<StrategyKind>,
    pub sweep: Sweep,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Published,
            rho: None,
            views: ViewConfig::default(),
            gammas: vec![5.0],
            horizon: 1.0,
            steps: 252,
            rebalances: 12,
            riccati_steps_per_year: DEFAULT_STEPS_PER_YEAR,
            n_paths: 2000,
            seed: 2024,
            z0: 1.0,
            x0: None,
            strategies: vec![StrategyKind::DynamicViews, StrategyKind::DynamicNoViews, StrategyKind::StaticBl],
            sweep: Sweep::None,
        }
    }
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn from_path(path: &FsPath) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(field_err("n_paths", "must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(field_err("strategies", "must name at least one strategy"));
        }
        if self.gammas.is_empty() {
            return Err(field_err("gammas", "must list at least one risk aversion"));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 1.0 && g.is_finite())) {
            return Err(field_err("gammas", format!("risk aversion must exceed 1, got {g}")));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(field_err("horizon", "must be positive"));
        }
        if self.steps == 0 {
            return Err(field_err("steps", "must be at least 1"));
        }
        if self.rebalances == 0 || self.steps % self.rebalances != 0 {
            return Err(field_err("rebalances", format!("must be positive and divide steps ({})", self.steps)));
        }
        if self.riccati_steps_per_year == 0 {
            return Err(field_err("riccati_steps_per_year", "must be at least 1"));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(field_err("z0", "must be positive"));
        }
        if let Some(r) = self.rho {
            if !(-1.0..=1.0).contains(&r) {
                return Err(field_err("rho", "must lie in [-1, 1]"));
            }
        }
        match (&self.views.tau, &self.views.omega) {
            (Some(t), None) if !(*t > 0.0 && t.is_finite()) => return Err(field_err("views.tau", "must be positive")),
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(field_err("views", "give exactly one of `tau` and `omega`")),
        }
        match &self.sweep {
            Sweep::None => {}
            Sweep::Tau(v) => {
                if v.is_empty() || v.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return Err(field_err("sweep.tau", "needs positive values"));
                }
                if self.views.omega.is_some() {
                    return Err(field_err("sweep.tau", "cannot sweep tau with an explicit omega"));
                }
            }
            Sweep::Rho(v) => {
                if v.is_empty() || v.iter().any(|r| !(-1.0..=1.0).contains(r)) {
                    return Err(field_err("sweep.rho", "needs values in [-1, 1]"));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        if !self.strategies.iter().all(|s| seen.insert(*s)) {
            return Err(field_err("strategies", "lists a strategy twice"));
        }
        Ok(())
    }

    pub fn load_model(&self) -> Result<MarketModel> {
        let m = match &self.model {
            ModelSource::Published => MarketModel::published(),
            ModelSource::Json(p) => MarketModel::from_json(&fs::read_to_string(p).map_err(|e| field_err("model", format!("{}: {e}", p.display())))?)?,
            ModelSource::Calibrate(p) => calibrate(&MonthlyPanel::from_path(p, MONTH)?)?.model,
        };
        match self.rho {
            Some(r) => m.with_rho(r),
            None => Ok(m),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    fn x0(&self, m: &MarketModel) -> Result<Vector> {
        match &self.x0 {
            None => Ok(m.factors().mu().clone()),
            Some(v) if v.len() == m.d() => Ok(Vector::from_vec(v.clone())),
            Some(v) => Err(field_err("x0", format!("has {} entries, model has {} factors", v.len(), m.d()))),
        }
    }

    fn view_map(&self, m: &MarketModel) -> Result<Matrix> {
        let rows = match &self.views.p {
            Some(p) => p.clone(),
            None if m.d() == 5 => default_view_rows(),
            None => return Err(field_err("views.p", format!("must be given for a {}-factor model", m.d()))),
        };
        let p = from_rows(&rows).map_err(|e| field_err("views.p", e))?;
        if p.ncols() != m.d() {
            return Err(field_err("views.p", format!("has {} columns, model has {} factors", p.ncols(), m.d())));
        }
        Ok(p)
    }

    /// View at one sweep point; for sampled views `y` is the prior prediction `P E[X(T)]`.
    fn view(&self, m: &MarketModel, tau: Option<f64>, x0: &Vector) -> Result<ViewSpec> {
        let p = self.view_map(m)?;
        let omega = match (tau.or(self.views.tau), &self.views.omega) {
            (_, Some(o)) => from_rows(o).map_err(|e| field_err("views.omega", e))?,
            (Some(t), None) => omega_from_tau(m, &p, t, self.horizon)?,
            (None, None) => return Err(field_err("views", "give exactly one of `tau` and `omega`")),
        };
        let y = match &self.views.y {
            YSource::Sampled => &p * m.factors().transition_mean(self.horizon, x0),
            YSource::Fixed(y) if y.len() == p.nrows() => Vector::from_vec(y.clone()),
            YSource::Fixed(y) => return Err(field_err("views.y", format!("has {} values for {} views", y.len(), p.nrows()))),
        };
        ViewSpec::new(p, omega, y, self.horizon).map_err(|e| field_err("views", e))
    }

    fn sweep_points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Sweep::None => vec![None],
            Sweep::Tau(v) | Sweep::Rho(v) => v.iter().copied().map(Some).collect(),
        }
    }

    fn rebalance_every(&self) -> usize {
        self.steps / self.rebalances
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

fn mean_se(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Estimate { value: mean, se: (var / n).sqrt() }
}

fn check_cer_inputs(wealths: &[f64], z0: f64, gamma: f64, horizon: f64) -> Result<()> {
    if wealths.is_empty() {
        return Err(Error::Domain("no terminal wealths".into()));
    }
    if let Some(z) = wealths.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
        return Err(Error::Domain(format!("nonpositive terminal wealth {z}")));
    }
    if !(gamma > 1.0) || !(z0 > 0.0) || !(horizon > 0.0) {
        return Err(Error::Domain(format!("CER needs gamma > 1, z0 > 0, T > 0; got {gamma}, {z0}, {horizon}")));
    }
    Ok(())
}

fn marginal_utilities(wealths: &[f64], z0: f64, gamma: f64) -> Vec<f64> {
    wealths.iter().map(|z| (z / z0).powf(1.0 - gamma)).collect()
}

/// `r_c = ln E[(Z_T/z₀)^{1−γ}] / ((1−γ)T)`.
pub fn cer(wealths: &[f64], z0: f64, gamma: f64, horizon: f64) -> Result<f64> {
    Ok(cer_estimate(wealths, z0, gamma, horizon)?.value)
}

/// CER with its delta-method standard error.
pub fn cer_estimate(wealths: &[f64], z0: f64, gamma: f64, horizon: f64) -> Result<Estimate> {
    check_cer_inputs(wealths, z0, gamma, horizon)?;
    let u = mean_se(&marginal_utilities(wealths, z0, gamma));
    let scale = (1.0 - gamma) * horizon;
    Ok(Estimate { value: u.value.ln() / scale, se: u.se / (u.value * scale.abs()) })
}

/// `CER(a) − CER(b)` on paired samples, with the delta-method standard error
/// that accounts for the correlation induced by common paths.
pub fn paired_cer_difference(a: &[f64], b: &[f64], z0: f64, gamma: f64, horizon: f64) -> Result<Estimate> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("paired samples of lengths {} and {}", a.len(), b.len())));
    }
    check_cer_inputs(a, z0, gamma, horizon)?;
    check_cer_inputs(b, z0, gamma, horizon)?;
    let (ua, ub) = (marginal_utilities(a, z0, gamma), marginal_utilities(b, z0, gamma));
    let n = a.len() as f64;
    let (ma, mb) = (ua.iter().sum::<f64>() / n, ub.iter().sum::<f64>() / n);
    let scale = (1.0 - gamma) * horizon;
    // per-path influence of the difference of log-means
    let infl: Vec<f64> = ua.iter().zip(&ub).map(|(x, y)| x / ma - y / mb).collect();
    let se = mean_se(&infl).se / scale.abs();
    // `+ 0.0` turns an exact tie into +0
    Ok(Estimate { value: (ma.ln() - mb.ln()) / scale + 0.0, se })
}

/// Total absolute change in share holdings between consecutive rebalance dates.
pub fn path_turnover(holdings: &[Vector]) -> f64 {
    holdings.windows(2).map(|w| (&w[1] - &w[0]).abs().sum()).sum()
}

/// `Σᵢ E[Σ_t |nᵢ(t+Δt) − nᵢ(t)|]` over paths.
pub fn turnover(holdings: &[Vec<Vector>]) -> Estimate {
    if holdings.is_empty() {
        return Estimate { value: 0.0, se: 0.0 };
    }
    mean_se(&holdings.iter().map(|h| path_turnover(h)).collect::<Vec<_>>())
}

/// One (sweep point, γ, strategy) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub sweep_value: Option<f64>,
    pub gamma: f64,
    pub strategy: &'static str,
    pub n_paths: usize,
    pub excluded: usize,
    /// Mean of `ln(Z_T/z₀)`.
    pub mean_return: f64,
    pub mean_return_se: f64,
    pub std_return: f64,
    pub std_return_se: f64,
    pub cer: f64,
    pub cer_se: f64,
    pub turnover: f64,
    pub turnover_se: f64,
}

/// `CER(strategy) − CER(baseline)` on common paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub sweep_value: Option<f64>,
    pub gamma: f64,
    pub strategy: &'static str,
    pub baseline: &'static str,
    pub delta_cer: f64,
    pub se: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub sweep_axis: Option<&'static str>,
    pub rows: Vec<ReportRow>,
    pub deltas: Vec<DeltaRow>,
}

impl ExperimentReport {
    pub fn row(&self, sweep_value: Option<f64>, gamma: f64, strategy: StrategyKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.sweep_value == sweep_value && r.gamma == gamma && r.strategy == strategy.name())
    }

    pub fn delta(&self, sweep_value: Option<f64>, gamma: f64, strategy: StrategyKind) -> Option<&DeltaRow> {
        self.deltas.iter().find(|r| r.sweep_value == sweep_value && r.gamma == gamma && r.strategy == strategy.name())
    }
}

/// `y = P X(T) + chol(Ω) ε`, with `ε` from the view stream of path `index`.
///
/// The normals depend only on `(seed, index)`, so realizations under different
/// `Ω` share their noise.
pub fn draw_view(x_t: &Vector, p: &Matrix, chol_omega: &Matrix, seed: u64, index: u64) -> Vector {
    let mut rng = path_rng(seed, VIEW_STREAM | index);
    p * x_t + chol_omega * normals(&mut rng, p.nrows())
}

struct Outcome {
    terminal: Option<f64>,
    turnover: f64,
}

fn outcome(w: WealthPath) -> Outcome {
    Outcome { terminal: w.terminal, turnover: path_turnover(&w.holdings) }
}

struct GammaSolve {
    gamma: f64,
    pref: Preferences,
    views: Option<DecomposedPath>,
    no_views: Option<RiccatiPath>,
    static_bl: Option<BlStrategy>,
}

/// Everything needed to simulate one sweep point.
struct Setup<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a MarketModel,
    view: ViewSpec,
    grid: TimeGrid,
    x0: Vector,
    sampled: bool,
}

impl Setup<'_> {
    fn engine(&self) -> Result<PathEngine<'_>> {
        let kernels = if self.sampled {
            unconditional_kernels(self.model.factors(), &self.grid)
        } else {
            conditional_kernels(self.model, &self.view, &self.grid)?
        };
        PathEngine::new(self.model, kernels, self.grid, &self.x0, &Vector::from_element(self.model.n_assets(), 1.0))
    }

    fn view_for(&self, path: &Path, chol_omega: &Matrix, index: usize) -> Vector {
        if self.sampled {
            draw_view(path.factors.last().expect("non-empty path"), self.view.p(), chol_omega, self.cfg.seed, index as u64)
        } else {
            self.view.y().clone()
        }
    }
}

fn setup<'a>(cfg: &'a ExperimentConfig, model: &'a MarketModel, tau: Option<f64>) -> Result<Setup<'a>> {
    let x0 = cfg.x0(model)?;
    Ok(Setup {
        cfg,
        model,
        view: cfg.view(model, tau, &x0)?,
        grid: TimeGrid::new(0.0, cfg.horizon, cfg.steps)?,
        x0,
        sampled: cfg.views.y == YSource::Sampled,
    })
}

fn solve_gammas(s: &Setup) -> Result<Vec<GammaSolve>> {
    let cfg = s.cfg;
    let cgrid = TimeGrid::with_density(cfg.horizon, cfg.riccati_steps_per_year)?;
    let wants = |k: StrategyKind| cfg.strategies.contains(&k);
    let every = cfg.rebalance_every();
    let dates: Vec<f64> = (0..cfg.rebalances).map(|k| s.grid.node(k * every)).collect();
    let bl = if wants(StrategyKind::StaticBl) {
        Some(BlStrategy::with_view_sensitivity(s.model, &s.view, &Preferences::new(cfg.gammas[0])?, &dates)?)
    } else {
        None
    };
    cfg.gammas
        .par_iter()
        .map(|&gamma| {
            let pref = Preferences::new(gamma)?;
            Ok(GammaSolve {
                gamma,
                pref,
                views: if wants(StrategyKind::DynamicViews) { Some(solve_decomposed(s.model, &s.view, &pref, &cgrid)?) } else { None },
                no_views: if wants(StrategyKind::DynamicNoViews) { Some(solve_no_views(s.model, &pref, &cgrid)?) } else { None },
                static_bl: bl.as_ref().map(|b| b.with_preferences(&pref)),
            })
        })
        .collect()
}

fn summarize(cfg: &ExperimentConfig, point: Option<f64>, gamma: f64, kind: StrategyKind, cells: &[&Outcome]) -> Result<ReportRow> {
    let wealths: Vec<f64> = cells.iter().filter_map(|o| o.terminal).collect();
    let excluded = cells.len() - wealths.len();
    if wealths.is_empty() {
        return Err(Error::Domain(format!("every path of {} at gamma {gamma} was excluded", kind.name())));
    }
    let logs: Vec<f64> = wealths.iter().map(|z| (z / cfg.z0).ln()).collect();
    let mean = mean_se(&logs);
    let n = logs.len() as f64;
    let std = if logs.len() > 1 { (logs.iter().map(|l| (l - mean.value).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let c = cer_estimate(&wealths, cfg.z0, gamma, cfg.horizon)?;
    let t = mean_se(&cells.iter().filter(|o| o.terminal.is_some()).map(|o| o.turnover).collect::<Vec<_>>());
    Ok(ReportRow {
        sweep_value: point,
        gamma,
        strategy: kind.name(),
        n_paths: wealths.len(),
        excluded,
        mean_return: mean.value,
        mean_return_se: mean.se,
        std_return: std,
        std_return_se: std / (2.0 * (n - 1.0).max(1.0)).sqrt(),
        cer: c.value,
        cer_se: c.se,
        turnover: t.value,
        turnover_se: t.se,
    })
}

fn run_point(cfg: &ExperimentConfig, s: &Setup, point: Option<f64>) -> Result<(Vec<ReportRow>, Vec<DeltaRow>)> {
    let solves = solve_gammas(s)?;
    let engine = s.engine()?;
    let chol_omega = cholesky(s.view.omega())?;
    let every = cfg.rebalance_every();
    let m = s.model;
    let per_path: Vec<Result<Vec<Outcome>>> = engine.map(cfg.n_paths, cfg.seed, |i, path| {
        let y = s.view_for(path, &chol_omega, i);
        let mut out = Vec::with_capacity(solves.len() * cfg.strategies.len());
        for g in &solves {
            for kind in &cfg.strategies {
                let w = match kind {
                    StrategyKind::DynamicViews => {
                        let dp = g.views.as_ref().expect("solved when requested");
                        run_wealth_path(m, &AffineFeedback::with_views(m, &g.pref, dp, &y), path, &s.grid, cfg.z0, every)
                    }
                    StrategyKind::DynamicNoViews => {
                        let nv = g.no_views.as_ref().expect("solved when requested");
                        run_wealth_path(m, &AffineFeedback::no_views(m, &g.pref, nv), path, &s.grid, cfg.z0, every)
                    }
                    StrategyKind::StaticBl => {
                        let bl = g.static_bl.as_ref().expect("planned when requested");
                        run_wealth_path(m, &bl.for_view(&y)?, path, &s.grid, cfg.z0, every)
                    }
                };
                out.push(outcome(w));
            }
        }
        Ok(out)
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let n_strat = cfg.strategies.len();
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for (gi, g) in solves.iter().enumerate() {
        let column = |si: usize| per_path.iter().map(|p| &p[gi * n_strat + si]).collect::<Vec<_>>();
        for (si, kind) in cfg.strategies.iter().enumerate() {
            rows.push(summarize(cfg, point, g.gamma, *kind, &column(si))?);
        }
        let Some(base) = cfg.strategies.iter().position(|k| *k == StrategyKind::DynamicNoViews) else { continue };
        let base_col = column(base);
        for (si, kind) in cfg.strategies.iter().enumerate().filter(|(si, _)| *si != base) {
            let (a, b): (Vec<f64>, Vec<f64>) = column(si)
                .iter()
                .zip(&base_col)
                .filter_map(|(x, y)| Some((x.terminal?, y.terminal?)))
                .unzip();
            let d = paired_cer_difference(&a, &b, cfg.z0, g.gamma, cfg.horizon)?;
            deltas.push(DeltaRow {
                sweep_value: point,
                gamma: g.gamma,
                strategy: kind.name(),
                baseline: StrategyKind::DynamicNoViews.name(),
                delta_cer: d.value,
                se: d.se,
                n_paths: a.len(),
            });
        }
    }
    Ok((rows, deltas))
}

/// Runs every sweep point with common seeds: paths, and for sampled views the
/// view noise, are shared across strategies, risk aversions and sweep points.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let base = cfg.load_model()?;
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for point in cfg.sweep_points() {
        let (model, tau) = match (&cfg.sweep, point) {
            (Sweep::Rho(_), Some(r)) => (base.with_rho(r)?, None),
            (Sweep::Tau(_), Some(t)) => (base.clone(), Some(t)),
            _ => (base.clone(), None),
        };
        let s = setup(cfg, &model, tau)?;
        let (r, d) = run_point(cfg, &s, point)?;
        rows.extend(r);
        deltas.extend(d);
    }
    Ok(ExperimentReport { config_hash: cfg.hash(), seed: cfg.seed, sweep_axis: cfg.sweep.axis(), rows, deltas })
}

/// `E_y[V(0, z₀, x₀; y)]` over sampled views against the no-views value `V₀`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewValue {
    pub with_views: Estimate,
    pub without_views: f64,
    pub n_paths: usize,
}

impl ViewValue {
    pub fn gain(&self) -> f64 {
        self.with_views.value - self.without_views
    }
}

/// Expected value function of the views investor at `t = 0`, with `y` drawn
/// jointly with the simulated paths, against the investor without views.
pub fn view_value(cfg: &ExperimentConfig, gamma: f64) -> Result<ViewValue> {
    cfg.validate()?;
    if cfg.views.y != YSource::Sampled {
        return Err(field_err("views.y", "the value of views averages over sampled realizations"));
    }
    let model = cfg.load_model()?;
    let s = setup(cfg, &model, None)?;
    let pref = Preferences::new(gamma)?;
    let dp = solve_decomposed(&model, &s.view, &pref, &TimeGrid::with_density(cfg.horizon, cfg.riccati_steps_per_year)?)?;
    let engine = s.engine()?;
    let chol_omega = cholesky(s.view.omega())?;
    let values: Vec<Result<f64>> = engine.map(cfg.n_paths, cfg.seed, |i, path| {
        let y = s.view_for(path, &chol_omega, i);
        Ok(pref.utility(cfg.z0) * dp.initial_log_value(&s.x0, &y)?.exp())
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let nv = &dp.without_views;
    Ok(ViewValue {
        with_views: mean_se(&values),
        without_views: pref.utility(cfg.z0) * nv.log_value(0.0, &s.x0).exp(),
        n_paths: values.len(),
    })
}

/// Sampled views against the model's predictive law of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerCheck {
    /// `E[X(T) | X(0)]`.
    pub unconditional_mean: Vector,
    /// Average over sampled `y` of `E[X(T) | y]`.
    pub averaged_conditional_mean: Vector,
    /// Standard error of each entry of the average.
    pub se: Vector,
    pub y_mean: Vector,
    pub y_cov: Matrix,
    /// `P V(T) Pᵀ + Ω`.
    pub predictive_cov: Matrix,
}

/// Draws views exactly as [`run_experiment`] does and averages the Gaussian
/// posterior mean of `X(T)` over them.
pub fn tower_check(cfg: &ExperimentConfig) -> Result<TowerCheck> {
    cfg.validate()?;
    if cfg.views.y != YSource::Sampled {
        return Err(field_err("views.y", "the tower check needs sampled views"));
    }
    let model = cfg.load_model()?;
    let s = setup(cfg, &model, None)?;
    let f = model.factors();
    let (p, omega) = (s.view.p(), s.view.omega());
    let mean = f.transition_mean(cfg.horizon, &s.x0);
    let v = f.transition_cov(cfg.horizon);
    let predictive = p * &v * p.transpose() + omega;
    let gain = spd_solve(&predictive, &(p * &v))?.transpose();
    let engine = s.engine()?;
    let chol_omega = cholesky(omega)?;
    let ys: Vec<Vector> = engine.map(cfg.n_paths, cfg.seed, |i, path| s.view_for(path, &chol_omega, i));
    let post: Vec<Vector> = ys.iter().map(|y| &mean + &gain * (y - p * &mean)).collect();
    let (avg, cov) = crate::market::sample_moments(&post);
    let (y_mean, y_cov) = crate::market::sample_moments(&ys);
    let n = post.len() as f64;
    Ok(TowerCheck {
        unconditional_mean: mean,
        averaged_conditional_mean: avg,
        se: cov.diagonal().map(|v| (v / n).sqrt()),
        y_mean,
        y_cov,
        predictive_cov: predictive,
    })
}

/// Frontier point of one strategy at one risk aversion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub sweep_value: Option<f64>,
    pub strategy: &'static str,
    pub gamma: f64,
    pub std: f64,
    pub std_se: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub turnover: f64,
    pub turnover_se: f64,
}

/// `(std, mean)` of terminal log-return per strategy, ordered by risk.
pub fn frontier(report: &ExperimentReport) -> Result<Vec<FrontierPoint>> {
    let mut gammas: Vec<f64> = report.rows.iter().map(|r| r.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    if gammas.len() < 3 {
        return Err(field_err("gammas", "a frontier needs at least three risk aversions"));
    }
    let mut pts: Vec<FrontierPoint> = report
        .rows
        .iter()
        .map(|r| FrontierPoint {
            sweep_value: r.sweep_value,
            strategy: r.strategy,
            gamma: r.gamma,
            std: r.std_return,
            std_se: r.std_return_se,
            mean: r.mean_return,
            mean_se: r.mean_return_se,
            turnover: r.turnover,
            turnover_se: r.turnover_se,
        })
        .collect();
    pts.sort_by(|a, b| {
        a.sweep_value
            .unwrap_or(0.0)
            .total_cmp(&b.sweep_value.unwrap_or(0.0))
            .then(a.strategy.cmp(b.strategy))
            .then(a.std.total_cmp(&b.std))
    });
    Ok(pts)
}

/// Comparison of two frontiers at one point of the lower one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedRisk {
    pub std: f64,
    /// Upper curve's mean, interpolated at `std`, minus the lower point's mean.
    pub mean_gap: f64,
    pub mean_gap_se: f64,
    /// Upper curve's turnover, interpolated at `std`, minus the lower point's turnover.
    pub turnover_gap: f64,
    pub turnover_gap_se: f64,
}

/// Compares `upper` against every point of `lower` whose std falls inside the
/// std range of `upper`, by linear interpolation along `upper`.
pub fn matched_risk(upper: &[FrontierPoint], lower: &[FrontierPoint]) -> Vec<MatchedRisk> {
    let mut up: Vec<&FrontierPoint> = upper.iter().collect();
    up.sort_by(|a, b| a.std.total_cmp(&b.std));
    let mut out = Vec::new();
    for q in lower {
        let Some(j) = up.windows(2).position(|w| w[0].std <= q.std && q.std <= w[1].std) else { continue };
        let (a, b) = (up[j], up[j + 1]);
        let w = if b.std > a.std { (q.std - a.std) / (b.std - a.std) } else { 0.0 };
        let lerp = |x: f64, y: f64| x * (1.0 - w) + y * w;
        let lerp_se = |x: f64, y: f64| ((x * (1.0 - w)).powi(2) + (y * w).powi(2)).sqrt();
        out.push(MatchedRisk {
            std: q.std,
            mean_gap: lerp(a.mean, b.mean) - q.mean,
            mean_gap_se: lerp_se(a.mean_se, b.mean_se).hypot(q.mean_se),
            turnover_gap: lerp(a.turnover, b.turnover) - q.turnover,
            turnover_gap_se: lerp_se(a.turnover_se, b.turnover_se).hypot(q.turnover_se),
        });
    }
    out
}

/// Writes `rows` as CSV after a `# schema:` comment line naming the table and its columns.
pub fn write_table<T: Serialize>(path: &FsPath, table: &str, columns: &[&str], rows: &[T]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# schema: {table}; columns: {}", columns.join(","))?;
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(columns)?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "sweep_value",
    "gamma",
    "strategy",
    "n_paths",
    "excluded",
    "mean_return",
    "mean_return_se",
    "std_return",
    "std_return_se",
    "cer",
    "cer_se",
    "turnover",
    "turnover_se",
];

pub const DELTA_COLUMNS: [&str; 7] = ["sweep_value", "gamma", "strategy", "baseline", "delta_cer", "se", "n_paths"];
pub const FRONTIER_COLUMNS: [&str; 9] = ["sweep_value", "strategy", "gamma", "std", "std_se", "mean", "mean_se", "turnover", "turnover_se"];

#[derive(Serialize)]
struct CerRow<'a> {
    sweep_value: Option<f64>,
    gamma: f64,
    strategy: &'a str,
    cer: f64,
    cer_se: f64,
    n_paths: usize,
    excluded: usize,
}

#[derive(Serialize)]
struct TurnoverRow<'a> {
    sweep_value: Option<f64>,
    gamma: f64,
    strategy: &'a str,
    std_return: f64,
    turnover: f64,
    turnover_se: f64,
    n_paths: usize,
}

/// Tables an experiment can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Summary,
    Cer,
    Deltas,
    Turnover,
    Frontier,
}

impl Table {
    pub fn file_name(&self) -> &'static str {
        match self {
            Self::Summary => "summary.csv",
            Self::Cer => "cer.csv",
            Self::Deltas => "delta_cer.csv",
            Self::Turnover => "turnover.csv",
            Self::Frontier => "frontier.csv",
        }
    }
}

/// Written next to the tables: config, its hash, the seed and the table files.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub tables: Vec<String>,
}

/// Writes the requested tables and `manifest.json` into `dir`; returns the file names.
pub fn write_report(dir: &FsPath, cfg: &ExperimentConfig, report: &ExperimentReport, tables: &[Table]) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for t in tables {
        let path = dir.join(t.file_name());
        match t {
            Table::Summary => write_table(&path, "summary", &SUMMARY_COLUMNS, &report.rows)?,
            Table::Cer => {
                let rows: Vec<CerRow> = report
                    .rows
                    .iter()
                    .map(|r| CerRow { sweep_value: r.sweep_value, gamma: r.gamma, strategy: r.strategy, cer: r.cer, cer_se: r.cer_se, n_paths: r.n_paths, excluded: r.excluded })
                    .collect();
                write_table(&path, "cer", &["sweep_value", "gamma", "strategy", "cer", "cer_se", "n_paths", "excluded"], &rows)?
            }
            Table::Deltas => write_table(&path, "delta_cer", &DELTA_COLUMNS, &report.deltas)?,
            Table::Turnover => {
                let rows: Vec<TurnoverRow> = report
                    .rows
                    .iter()
                    .map(|r| TurnoverRow {
                        sweep_value: r.sweep_value,
                        gamma: r.gamma,
                        strategy: r.strategy,
                        std_return: r.std_return,
                        turnover: r.turnover,
                        turnover_se: r.turnover_se,
                        n_paths: r.n_paths,
                    })
                    .collect();
                write_table(&path, "turnover", &["sweep_value", "gamma", "strategy", "std_return", "turnover", "turnover_se", "n_paths"], &rows)?
            }
            Table::Frontier => write_table(&path, "frontier", &FRONTIER_COLUMNS, &frontier(report)?)?,
        }
        names.push(t.file_name().to_string());
    }
    let manifest = Manifest { config_hash: report.config_hash.clone(), seed: report.seed, version: env!("CARGO_PKG_VERSION"), config: cfg, tables: names.clone() };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(names)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeDemoRow {
    pub t: f64,
    pub mean_mc: f64,
    pub mean_exact: f64,
    pub var_mc: f64,
    pub var_exact: f64,
    /// The first few simulated paths at `t`.
    pub samples: Vec<f64>,
}

/// Sampled paths kept per row of the bridge demo.
pub const BRIDGE_DEMO_SAMPLES: usize = 5;

/// Euler paths of a unit-volatility bridge from 0 to 1 (`θ = 1`, hit at 1)
/// against its exact moments, every 0.02 up to 0.98.
pub fn bridge_demo(n_paths: usize, seed: u64) -> Result<Vec<BridgeDemoRow>> {
    let b = Bridge1D::new(0.0, 1.0, 1.0, 1.0)?;
    let grid = TimeGrid::new(0.0, 0.98, 980)?;
    let paths = simulate_bridge(&b, &grid, n_paths, seed)?;
    (0..grid.n_nodes())
        .step_by(20)
        .map(|k| {
            let t = grid.node(k);
            let xs: Vec<f64> = paths.iter().map(|p| p[k]).collect();
            let e = mean_se(&xs);
            let var = e.se.powi(2) * xs.len() as f64;
            let (mean_exact, var_exact) = mrb_moments(&b, t, t)?;
            let samples = xs.iter().take(BRIDGE_DEMO_SAMPLES).copied().collect();
            Ok(BridgeDemoRow { t, mean_mc: e.value, mean_exact, var_mc: var, var_exact, samples })
        })
        .collect()
}

/// CSV with the exact mean ± 2σ envelope, the Monte Carlo moments and the sampled paths.
pub fn write_bridge_demo<W: Write>(rows: &[BridgeDemoRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = rows.first().map_or(0, |r| r.samples.len());
    let mut header: Vec<String> = ["t", "mean_exact", "lower", "upper", "mean_mc", "var_exact", "var_mc"].map(String::from).to_vec();
    header.extend((0..n).map(|i| format!("path_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let sd = r.var_exact.sqrt();
        let mut rec = vec![r.t, r.mean_exact, r.mean_exact - 2.0 * sd, r.mean_exact + 2.0 * sd, r.mean_mc, r.var_exact, r.var_mc];
        rec.extend(&r.samples);
        w.write_record(rec.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// One filter trajectory: true drift, estimate and posterior variances per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDemo {
    pub alpha_true: Vector,
    pub t: Vec<f64>,
    pub alpha_hat: Vec<Vector>,
    pub gamma_diag: Vec<Vector>,
}

impl FilterDemo {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.alpha_true.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("alpha_true_{i}")));
        header.extend((0..n).map(|i| format!("alpha_hat_{i}")));
        header.extend((0..n).map(|i| format!("gamma_{i}{i}")));
        w.write_record(&header)?;
        for (k, t) in self.t.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.alpha_true.iter().map(|v| v.to_string()));
            row.extend(self.alpha_hat[k].iter().map(|v| v.to_string()));
            row.extend(self.gamma_diag[k].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws a true drift from the prior `N(α, (0.05)²I)` around the model's `α`,
/// simulates `years` of daily data under it and filters, reporting monthly.
pub fn filter_demo(m: &MarketModel, years: f64, seed: u64) -> Result<FilterDemo> {
    let n = m.n_assets();
    let gamma0 = Matrix::identity(n, n) * 0.0025;
    let prior = DriftPrior::new(m.assets().alpha().clone(), gamma0.clone())?;
    let mut rng = path_rng(seed, VIEW_STREAM);
    let alpha_true = m.assets().alpha() + cholesky(&gamma0)? * normals(&mut rng, n);
    let a = m.assets();
    let truth = MarketModel::new(m.factors().clone(), AssetDynamics::new(alpha_true.clone(), a.beta().clone(), a.l_s().clone(), a.r_f())?, m.rho())?;
    let grid = TimeGrid::with_density(years, 252)?;
    let engine = PathEngine::new(&truth, unconditional_kernels(truth.factors(), &grid), grid, m.factors().mu(), &Vector::from_element(n, 1.0))?;
    let path = engine.path(seed, 0);
    let trace = DriftFilter::new(&prior, m, None, &grid)?.run(&path)?;
    let picked: Vec<_> = trace.states.iter().step_by(21).collect();
    Ok(FilterDemo {
        alpha_true,
        t: picked.iter().map(|s| s.t).collect(),
        alpha_hat: picked.iter().map(|s| s.alpha_hat.clone()).collect(),
        gamma_diag: picked.iter().map(|s| s.gamma.diagonal()).collect(),
    })
}
