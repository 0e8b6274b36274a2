//! Dense-matrix kernels shared by the rest of the crate.
//!
//! Everything here operates on small (d <= ~10) dense matrices, so the
//! implementations favour directness over asymptotic efficiency.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default RK4 resolution, in steps per unit of time.
pub const DEFAULT_STEPS_PER_YEAR: usize = 10_000;

/// Uniform discretisation of `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t0 >= t1 {
            return Err(Error::Domain(format!("time grid needs t0 < t1, got [{t0}, {t1}]")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("time grid needs at least one step".into()));
        }
        Ok(Self { t0, t1, n_steps })
    }

    /// Grid on `[0, horizon]` with `steps_per_year` steps per unit time (at least one).
    pub fn with_density(horizon: f64, steps_per_year: usize) -> Result<Self> {
        let n = ((horizon * steps_per_year as f64).round() as usize).max(1);
        Self::new(0.0, horizon, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Left node index and linear weight of the right node for `t`, clamped to the grid.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.t0) / self.step()).clamp(0.0, self.n_steps as f64);
        let k = (s.floor() as usize).min(self.n_steps - 1);
        (k, s - k as f64)
    }

    /// Index of the node equal to `t` within rounding, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let s = (t - self.t0) / self.step();
        let k = s.round();
        if k >= 0.0 && k <= self.n_steps as f64 && (s - k).abs() < 1e-7 {
            Some(k as usize)
        } else {
            None
        }
    }
}

fn ensure_square(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(())
}

/// `e^{A t}` by scaling and squaring with a Padé approximant.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(a)?;
    if t == 0.0 {
        return Ok(Matrix::identity(a.nrows(), a.ncols()));
    }
    Ok((a * t).exp())
}

/// Largest absolute entry.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_vec(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub fn asymmetry(a: &Matrix) -> f64 {
    max_abs(&(a - a.transpose()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn min_sym_eigenvalue(a: &Matrix) -> f64 {
    sym_eigenvalues(a)[0]
}

pub fn max_sym_eigenvalue(a: &Matrix) -> f64 {
    *sym_eigenvalues(a).last().expect("non-empty matrix")
}

/// Checks that every eigenvalue of `theta` has strictly positive real part.
pub fn check_stable(theta: &Matrix) -> Result<()> {
    ensure_square(theta)?;
    let eig = theta.complex_eigenvalues();
    if let Some(bad) = eig.iter().find(|z| !(z.re > 0.0)) {
        return Err(Error::Spectrum(format!(
            "eigenvalue {:.6e}{:+.6e}i does not have positive real part",
            bad.re, bad.im
        )));
    }
    Ok(())
}

/// Solves `Θ Σ + Σ Θᵀ = Q` for symmetric `Σ` through the Kronecker-vectorised system.
pub fn solve_lyapunov(theta: &Matrix, q: &Matrix) -> Result<Matrix> {
    ensure_square(theta)?;
    ensure_square(q)?;
    let d = theta.nrows();
    if q.nrows() != d {
        return Err(Error::Dimension(format!("Lyapunov: Θ is {d}x{d} but Q is {}x{}", q.nrows(), q.ncols())));
    }
    let scale = max_abs(q).max(f64::MIN_POSITIVE);
    let asym = asymmetry(q);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    check_stable(theta)?;
    let id = Matrix::identity(d, d);
    let op = id.kronecker(theta) + theta.kronecker(&id);
    let rhs = Vector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
    Ok(symmetrize(&Matrix::from_column_slice(d, d, sol.as_slice())))
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// The input is symmetrised first. A pivot below `1e-12 · ‖S‖` is reported
/// as [`Error::NotPositiveDefinite`] with its index.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    ensure_square(s)?;
    let n = s.nrows();
    let a = symmetrize(s);
    let tol = 1e-12 * a.norm().max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > tol) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Solves `S X = B` for symmetric positive-definite `S`.
pub fn spd_solve(s: &Matrix, b: &Matrix) -> Result<Matrix> {
    let l = cholesky(s)?;
    let y = l
        .solve_lower_triangular(b)
        .ok_or_else(|| Error::Singular("triangular solve".into()))?;
    l.transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Singular("triangular solve".into()))
}

pub fn spd_inverse(s: &Matrix) -> Result<Matrix> {
    let n = s.nrows();
    spd_solve(s, &Matrix::identity(n, n)).map(|m| symmetrize(&m))
}

/// General square solve via LU.
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure_square(a)?;
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{}x{} LU solve", a.nrows(), a.ncols())))
}

/// Symmetric square-root factor `R` with `R Rᵀ = S` for a PSD `S`.
///
/// Tiny negative eigenvalues from rounding are clamped to zero, so this
/// also works for the nearly singular covariances of very short steps.
pub fn psd_factor(s: &Matrix) -> Matrix {
    let eig = symmetrize(s).symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&sqrt_vals)
}

/// Classical RK4 step from `t` with signed step `h`.
fn rk4_step<F>(rhs: &mut F, t: f64, x: &Vector, h: f64) -> Result<Vector>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    let check = |v: Vector, t: f64| -> Result<Vector> {
        match v.iter().position(|c| !c.is_finite()) {
            Some(component) => Err(Error::NonFinite { t, component }),
            None => Ok(v),
        }
    };
    let k1 = check(rhs(t, x), t)?;
    let k2 = check(rhs(t + 0.5 * h, &(x + &k1 * (0.5 * h))), t + 0.5 * h)?;
    let k3 = check(rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h))), t + 0.5 * h)?;
    let k4 = check(rhs(t + h, &(x + &k3 * h)), t + h)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Fixed-step RK4 from `grid.t1()` down to `grid.t0()`.
///
/// Returns the state at every node, indexed like the grid (entry 0 is `t0`).
pub fn integrate_backward<F>(rhs: F, terminal: &Vector, grid: &TimeGrid) -> Result<Vec<Vector>>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    integrate_backward_with(rhs, terminal, grid, |_, _| Ok(()))
}

/// [`integrate_backward`] with a hook applied to the state after every step
/// (used for symmetrisation and blow-up checks).
pub fn integrate_backward_with<F, P>(mut rhs: F, terminal: &Vector, grid: &TimeGrid, mut project: P) -> Result<Vec<Vector>>
where
    F: FnMut(f64, &Vector) -> Vector,
    P: FnMut(f64, &mut Vector) -> Result<()>,
{
    let n = grid.n_steps();
    let h = grid.step();
    let mut path = vec![Vector::zeros(0); n + 1];
    let mut x = terminal.clone();
    path[n] = x.clone();
    for k in (0..n).rev() {
        let t = grid.node(k + 1);
        x = rk4_step(&mut rhs, t, &x, -h)?;
        project(grid.node(k), &mut x)?;
        path[k] = x.clone();
    }
    Ok(path)
}

/// Fixed-step RK4 from `grid.t0()` up to `grid.t1()`.
pub fn integrate_forward<F>(mut rhs: F, initial: &Vector, grid: &TimeGrid) -> Result<Vec<Vector>>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    let n = grid.n_steps();
    let h = grid.step();
    let mut path = Vec::with_capacity(n + 1);
    let mut x = initial.clone();
    path.push(x.clone());
    for k in 0..n {
        x = rk4_step(&mut rhs, grid.node(k), &x, h)?;
        path.push(x.clone());
    }
    Ok(path)
}

/// Composite Simpson rule applied entrywise to a matrix-valued integrand.
///
/// An odd panel count is rounded up to the next even number.
pub fn quad_matrix<F>(f: F, a: f64, b: f64, n: usize) -> Result<Matrix>
where
    F: Fn(f64) -> Matrix,
{
    if !(a <= b) {
        return Err(Error::Domain(format!("quadrature needs a <= b, got [{a}, {b}]")));
    }
    if n == 0 {
        return Err(Error::Domain("quadrature needs at least one panel".into()));
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(a + i as f64 * h) * w;
    }
    let out = acc * (h / 3.0);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite integrand in quadrature".into()));
    }
    Ok(out)
}

/// Scalar Simpson rule on `n` (even-rounded) panels.
pub fn quad_scalar<F>(f: F, a: f64, b: f64, n: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let n = (n + n % 2).max(2);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
