//! Sinkhorn balancing, the tempered reduction, Bregman projections and exact dual solvers.

use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Axis, Error, Result};
use crate::measures::{from_density, CoSimplexVector, CouplingPlan, DensityVector};
use crate::objectives::{expected_cost, measured_cost, CostMatrix, Variant};
use crate::seeds::{seed, SeedMatrix};
use crate::tempered_math::{exp_t, log_t, ominus_t, otimes_t, Temperature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Stop once the L∞ change of `ξ` over one sweep drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            record_trace: false,
        }
    }
}

impl SolveConfig {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        let cfg = Self {
            tol,
            max_iter,
            record_trace: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "need tol > 0 and max_iter >= 1 (got {}, {})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub plan: CouplingPlan,
    pub iterations: usize,
    pub converged: bool,
    /// L∞ change of `ξ` over the last sweep.
    pub final_residual: f64,
    /// Largest density-space marginal violation of the returned plan.
    pub marginal_residual: f64,
    pub mu: Array1<f64>,
    pub xi: Array1<f64>,
    pub trace: Option<Vec<f64>>,
}

/// JSON summary of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub nnz: usize,
    pub cost_expected: f64,
    pub cost_measured: f64,
}

impl SolveReport {
    pub fn summary(&self, m: &CostMatrix) -> Result<SolveSummary> {
        Ok(SolveSummary {
            iterations: self.iterations,
            converged: self.converged,
            residual: self.final_residual,
            nnz: self.plan.nnz(),
            cost_expected: expected_cost(&self.plan, m)?,
            cost_measured: measured_cost(&self.plan, m)?,
        })
    }

    pub fn to_json(&self, m: &CostMatrix) -> Result<String> {
        Ok(serde_json::to_string(&self.summary(m)?)?)
    }

    /// Writes the per-sweep residuals as `iter,residual` CSV. No-op without a trace.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if let Some(trace) = &self.trace {
            writeln!(w, "iter,residual")?;
            for (k, r) in trace.iter().enumerate() {
                writeln!(w, "{},{:e}", k + 1, r)?;
            }
        }
        Ok(())
    }
}

fn check_kernel(k: &Array2<f64>, r: &DensityVector, c: &DensityVector) -> Result<()> {
    if k.dim() != (r.len(), c.len()) {
        return Err(Error::Shape {
            expected: format!("{}x{}", r.len(), c.len()),
            got: format!("{:?}", k.dim()),
        });
    }
    if k.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(domain("sinkhorn", "kernel entries must be finite and >= 0"));
    }
    Ok(())
}

/// One half-sweep each way: `μ = r / Kξ`, then the new `ξ = c / Kᵀμ`.
fn sweep(
    k: &Array2<f64>,
    r: &Array1<f64>,
    c: &Array1<f64>,
    mu: &mut Array1<f64>,
    xi: &Array1<f64>,
) -> Result<Array1<f64>> {
    let n = r.len();
    for i in 0..n {
        let s = k.row(i).dot(xi);
        if !(s > 0.0) {
            return Err(Error::InfeasibleSupport {
                axis: Axis::Row,
                index: i,
            });
        }
        mu[i] = r[i] / s;
    }
    let mut acc = Array1::<f64>::zeros(c.len());
    for i in 0..n {
        acc.scaled_add(mu[i], &k.row(i));
    }
    for (j, a) in acc.iter_mut().enumerate() {
        if !(*a > 0.0) {
            return Err(Error::InfeasibleSupport {
                axis: Axis::Column,
                index: j,
            });
        }
        *a = c[j] / *a;
    }
    Ok(acc)
}

fn scaled(k: &Array2<f64>, mu: &Array1<f64>, xi: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn(k.dim(), |(i, j)| mu[i] * k[[i, j]] * xi[j])
}

fn marginal_residual(p: &Array2<f64>, r: &Array1<f64>, c: &Array1<f64>) -> f64 {
    let rows = p.sum_axis(ndarray::Axis(1));
    let cols = p.sum_axis(ndarray::Axis(0));
    rows.iter()
        .zip(r)
        .chain(cols.iter().zip(c))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Sinkhorn balancing of a nonnegative kernel onto `U_n(r, c)`.
///
/// The returned plan is a `t = 1` coupling (density and tilde space coincide).
/// Running out of iterations is reported through `converged`, not as an error.
pub fn sinkhorn(
    k: &Array2<f64>,
    r: &DensityVector,
    c: &DensityVector,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    check_kernel(k, r, c)?;
    let (re, ce) = (r.entries(), c.entries());
    let mut mu = Array1::<f64>::zeros(re.len());
    let mut xi = Array1::<f64>::ones(ce.len());
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    while iterations < cfg.max_iter {
        let next = sweep(k, re, ce, &mut mu, &xi)?;
        delta = next
            .iter()
            .zip(&xi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        xi = next;
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            t.push(delta);
        }
        if delta < cfg.tol {
            break;
        }
    }
    let p = scaled(k, &mu, &xi);
    let one = Temperature::one();
    let plan = CouplingPlan::unvalidated(p, from_density(r, one), from_density(c, one))?;
    Ok(SolveReport {
        marginal_residual: marginal_residual(plan.entries(), re, ce),
        plan,
        iterations,
        converged: delta < cfg.tol,
        final_residual: delta,
        mu,
        xi,
        trace,
    })
}

/// The column scaling `ξ` after each of `sweeps` Sinkhorn sweeps, starting from `ξ = 1`.
pub fn sinkhorn_trajectory(
    k: &Array2<f64>,
    r: &DensityVector,
    c: &DensityVector,
    sweeps: usize,
) -> Result<Vec<Array1<f64>>> {
    check_kernel(k, r, c)?;
    let mut mu = Array1::<f64>::zeros(r.len());
    let mut xi = Array1::<f64>::ones(c.len());
    let mut out = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        xi = sweep(k, r.entries(), c.entries(), &mut mu, &xi)?;
        out.push(xi.clone());
    }
    Ok(out)
}

/// Balances a prepared seed: Sinkhorn on `K̃^{1/t*}`, mapped back with the power `t*`.
pub fn balance_seed(
    seed: &SeedMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    seed.check_feasible()?;
    if seed.temp() != r.temp() {
        return Err(Error::InvalidArgument(
            "seed and marginals carry different temperatures".into(),
        ));
    }
    let rep = sinkhorn(&seed.kernel(), &r.density(), &c.density(), cfg)?;
    let plan = CouplingPlan::from_density(rep.plan.entries(), r.clone(), c.clone())?;
    Ok(SolveReport { plan, ..rep })
}

/// Tempered OT by reduction to Sinkhorn balancing of the variant's seed.
pub fn tempered_ot(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    variant: Variant,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    let s = seed(variant, m, r, c, lambda)?;
    balance_seed(&s, r, c, cfg)
}

/// Bregman projection of `P̃∘` onto the plans whose density rows sum to `r`.
pub fn row_projection(p0: &Array2<f64>, r: &CoSimplexVector) -> Result<Array2<f64>> {
    project(p0, r, Axis::Row)
}

/// Bregman projection of `P̃∘` onto the plans whose density columns sum to `c`.
pub fn column_projection(p0: &Array2<f64>, c: &CoSimplexVector) -> Result<Array2<f64>> {
    project(p0, c, Axis::Column)
}

fn line_factors(p0: &Array2<f64>, target: &CoSimplexVector, axis: Axis) -> Result<Array1<f64>> {
    let temp = target.temp();
    let (q, ts) = (temp.density_power(), temp.t_star());
    let nd = match axis {
        Axis::Row => ndarray::Axis(0),
        Axis::Column => ndarray::Axis(1),
    };
    if p0.len_of(nd) != target.len() {
        return Err(Error::Shape {
            expected: format!("{} {axis}s", target.len()),
            got: format!("{:?}", p0.dim()),
        });
    }
    let mut out = Array1::zeros(target.len());
    for (index, line) in p0.axis_iter(nd).enumerate() {
        let s: f64 = line.iter().map(|&v| v.powf(q)).sum();
        if !(s > 0.0) {
            return Err(Error::InfeasibleSupport { axis, index });
        }
        out[index] = target.entries()[index] / s.powf(ts);
    }
    Ok(out)
}

fn project(p0: &Array2<f64>, target: &CoSimplexVector, axis: Axis) -> Result<Array2<f64>> {
    let f = line_factors(p0, target, axis)?;
    Ok(Array2::from_shape_fn(p0.dim(), |(i, j)| match axis {
        Axis::Row => f[i] * p0[[i, j]],
        Axis::Column => p0[[i, j]] * f[j],
    }))
}

/// Alternating row and column projections in tilde space, from `P̃∘ = seed`.
///
/// Stops when the column factor of a sweep is within `tol` of one in L∞; the
/// returned `mu`, `xi` are the accumulated tilde-space scalings.
pub fn alternating_projections(
    p0: &Array2<f64>,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let n = r.len();
    let mut p = p0.clone();
    let mut mu = Array1::<f64>::ones(n);
    let mut xi = Array1::<f64>::ones(c.len());
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    while iterations < cfg.max_iter {
        let a = line_factors(&p, r, Axis::Row)?;
        p = Array2::from_shape_fn(p.dim(), |(i, j)| a[i] * p[[i, j]]);
        let b = line_factors(&p, c, Axis::Column)?;
        p = Array2::from_shape_fn(p.dim(), |(i, j)| p[[i, j]] * b[j]);
        mu *= &a;
        xi *= &b;
        delta = b.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            t.push(delta);
        }
        if delta < cfg.tol {
            break;
        }
    }
    let plan = CouplingPlan::unvalidated(p, r.clone(), c.clone())?;
    let dens = plan.density();
    Ok(SolveReport {
        marginal_residual: marginal_residual(&dens, r.density().entries(), c.density().entries()),
        plan,
        iterations,
        converged: delta < cfg.tol,
        final_residual: delta,
        mu,
        xi,
        trace,
    })
}

/// How the exact dual solvers drive the marginal residuals to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMethod {
    /// Damped Newton steps on the marginal equations, Armijo backtracking on the squared residual.
    Newton,
    /// Gradient descent on the squared residual, Barzilai-Borwein trial step and Armijo halving.
    GradientDescent,
}

/// Settings for the exact dual solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    /// Target L∞ density-space marginal residual.
    pub tol: f64,
    pub max_iter: usize,
    pub method: DualMethod,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            method: DualMethod::Newton,
        }
    }
}

impl DualConfig {
    pub fn gradient_descent() -> Self {
        Self {
            method: DualMethod::GradientDescent,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub nu: Array1<f64>,
    pub gamma: Array1<f64>,
    pub plan: CouplingPlan,
    pub marginal_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Closed form of the regularized expected plan: `P̃_ij = r̃_i c̃_j / exp_t(ν_i + γ_j + λM_ij)`.
pub fn expected_closed_form(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    nu: &Array1<f64>,
    gamma: &Array1<f64>,
) -> Array2<f64> {
    let temp = r.temp();
    Array2::from_shape_fn(m.entries().dim(), |(i, j)| {
        let e = exp_t(nu[i] + gamma[j] + lambda * m.entries()[[i, j]], temp);
        r.entries()[i] * c.entries()[j] * e.recip()
    })
}

/// Closed form of the regularized measured plan:
/// `P̃_ij = exp_t((log_t(r̃_i c̃_j) - λM_ij) ⊖_t (ν_i + γ_j))`.
pub fn measured_closed_form(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    nu: &Array1<f64>,
    gamma: &Array1<f64>,
) -> Result<Array2<f64>> {
    let temp = r.temp();
    let n = m.n();
    let mut out = Array2::zeros((n, n));
    for ((i, j), v) in out.indexed_iter_mut() {
        let a = log_t(r.entries()[i] * c.entries()[j], temp)? - lambda * m.entries()[[i, j]];
        *v = exp_t(ominus_t(a, nu[i] + gamma[j], temp)?, temp).to_f64();
    }
    Ok(out)
}

/// Whether `exp_t(ν_i)` and `exp_t(γ_j)` are all positive, the region where
/// `exp_t(ν_i) ⊗_t exp_t(γ_j) = exp_t(ν_i + γ_j)`.
pub fn factored_form_valid(nu: &Array1<f64>, gamma: &Array1<f64>, temp: Temperature) -> bool {
    let e = 1.0 - temp.t();
    nu.iter().chain(gamma).all(|&x| 1.0 + e * x > 0.0)
}

/// Factored measured plan `K̃_m / (exp_t(ν_i) ⊗_t exp_t(γ_j))`, a diagnostic parameterization.
pub fn factored_measured_plan(
    seed: &SeedMatrix,
    nu: &Array1<f64>,
    gamma: &Array1<f64>,
) -> Result<Array2<f64>> {
    if seed.variant() != Variant::Measured {
        return Err(Error::InvalidArgument("factored form needs the measured seed".into()));
    }
    let temp = seed.temp();
    if !factored_form_valid(nu, gamma, temp) {
        return Err(domain(
            "factored_measured_plan",
            "exp_t(nu_i) or exp_t(gamma_j) vanishes; the factorization does not hold",
        ));
    }
    let k = seed.entries();
    let mut out = Array2::zeros(k.dim());
    for ((i, j), v) in out.indexed_iter_mut() {
        let a = exp_t(nu[i], temp).to_f64();
        let b = exp_t(gamma[j], temp).to_f64();
        *v = k[[i, j]] / otimes_t(a, b, temp)?;
    }
    Ok(out)
}

/// Density-space plan `P_ij = A_ij · exp_t(s_ij + L_ij)^{-(2-t)}` as a function of `s = ν_i + γ_j`.
///
/// Both closed forms fit this shape: expected with `A = (r̃c̃ᵀ)^{2-t}`, `L = λM`;
/// measured with `A = K̃_m^{2-t}`, `L = 0`.
struct DualModel {
    a: Array2<f64>,
    l: Array2<f64>,
    temp: Temperature,
    r: Array1<f64>,
    c: Array1<f64>,
}

struct DualState {
    x: Array1<f64>,
    dp: Array2<f64>,
    rows: Array1<f64>,
    cols: Array1<f64>,
    f: f64,
}

impl DualModel {
    fn n(&self) -> usize {
        self.r.len()
    }

    /// `None` when some `exp_t` argument crosses the pole (`t < 1`).
    fn eval(&self, x: Array1<f64>) -> Option<DualState> {
        let n = self.n();
        let t = self.temp.t();
        let q = self.temp.density_power();
        let mut p = Array2::zeros((n, n));
        let mut dp = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let z = x[i] + x[n + j] + self.l[[i, j]];
                let a = self.a[[i, j]];
                let (v, d) = if self.temp.is_one() {
                    let v = a * (-z).exp();
                    (v, -v)
                } else {
                    let b = 1.0 + (1.0 - t) * z;
                    if b <= 0.0 {
                        if t < 1.0 {
                            return None;
                        }
                        (0.0, 0.0)
                    } else {
                        let v = a * b.powf(-q / (1.0 - t));
                        (v, -q * v / b)
                    }
                };
                if !v.is_finite() || !d.is_finite() {
                    return None;
                }
                p[[i, j]] = v;
                dp[[i, j]] = d;
            }
        }
        let rows = p.sum_axis(ndarray::Axis(1)) - &self.r;
        let cols = p.sum_axis(ndarray::Axis(0)) - &self.c;
        let f = rows.dot(&rows) + cols.dot(&cols);
        Some(DualState {
            x,
            dp,
            rows,
            cols,
            f,
        })
    }

    fn gradient(&self, s: &DualState) -> Array1<f64> {
        let n = self.n();
        let mut g = Array1::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                let w = 2.0 * (s.rows[i] + s.cols[j]) * s.dp[[i, j]];
                g[i] += w;
                g[n + j] += w;
            }
        }
        g
    }
}

fn residual_inf(s: &DualState) -> f64 {
    s.rows.iter().chain(&s.cols).map(|x| x.abs()).fold(0.0, f64::max)
}

fn descend(model: &DualModel, cfg: &DualConfig) -> (DualState, usize, bool) {
    match cfg.method {
        DualMethod::Newton => newton(model, cfg),
        DualMethod::GradientDescent => gradient_descent(model, cfg),
    }
}

/// Damped Newton on `(row residual, column residual) = 0`.
///
/// The Jacobian is `-A` with `A` the signless Laplacian of the bipartite graph
/// weighted by `-∂P/∂s >= 0`; `A` is singular only along the gauge direction
/// `(1, -1)`, to which the residual is orthogonal, so `(A + εI)δ = e` is solved
/// by Cholesky. `δ` is a descent direction for the squared residual.
fn newton(model: &DualModel, cfg: &DualConfig) -> (DualState, usize, bool) {
    let n = model.n();
    let mut state = model
        .eval(Array1::zeros(2 * n))
        .expect("the origin is always admissible");
    let mut iterations = 0;
    // quadratic convergence makes long plateaus a sign the root is not attained
    let (mut best, mut since_best) = (f64::INFINITY, 0);
    while iterations < cfg.max_iter {
        let res = residual_inf(&state);
        if res <= cfg.tol {
            return (state, iterations, true);
        }
        if res < 0.5 * best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 500 {
                break;
            }
        }
        let Some(delta) = newton_direction(&state, n) else { break };
        let e2 = state.f;
        let mut step = 1.0;
        let next = loop {
            let x = &state.x + &(&delta * step);
            if let Some(s) = model.eval(x) {
                if s.f <= e2 * (1.0 - 1e-4 * step) {
                    break Some(s);
                }
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some(next) = next else { break };
        iterations += 1;
        state = next;
    }
    let converged = residual_inf(&state) <= cfg.tol;
    (state, iterations, converged)
}

fn newton_direction(state: &DualState, n: usize) -> Option<Array1<f64>> {
    let mut a = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let w = -state.dp[[i, j]];
            a[(i, i)] += w;
            a[(n + j, n + j)] += w;
            a[(i, n + j)] = w;
            a[(n + j, i)] = w;
        }
    }
    let scale = (0..2 * n).map(|k| a[(k, k)]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let e = nalgebra::DVector::from_iterator(2 * n, state.rows.iter().chain(&state.cols).copied());
    let mut eps = 1e-12 * scale;
    for _ in 0..12 {
        let mut reg = a.clone();
        for k in 0..2 * n {
            reg[(k, k)] += eps;
        }
        if let Some(ch) = reg.cholesky() {
            let d = ch.solve(&e);
            if d.iter().all(|x| x.is_finite()) {
                return Some(Array1::from_iter(d.iter().copied()));
            }
        }
        eps *= 100.0;
    }
    None
}

/// Gradient descent on `‖row residual‖² + ‖column residual‖²` with Armijo backtracking.
///
/// Each step first tries the Barzilai-Borwein length from the previous step, then halves.
fn gradient_descent(model: &DualModel, cfg: &DualConfig) -> (DualState, usize, bool) {
    let n = model.n();
    let mut state = model
        .eval(Array1::zeros(2 * n))
        .expect("the origin is always admissible");
    let mut grad = model.gradient(&state);
    let mut alpha = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        if residual_inf(&state) <= cfg.tol {
            return (state, iterations, true);
        }
        let gg = grad.dot(&grad);
        if gg == 0.0 {
            break;
        }
        let mut step = alpha;
        let next = loop {
            let x = &state.x - &(&grad * step);
            if let Some(s) = model.eval(x) {
                if s.f <= state.f - 1e-4 * step * gg {
                    break Some(s);
                }
            }
            step *= 0.5;
            if step < 1e-300 {
                break None;
            }
        };
        let Some(next) = next else { break };
        iterations += 1;
        let next_grad = model.gradient(&next);
        let sx = &next.x - &state.x;
        let sy = &next_grad - &grad;
        let curv = sx.dot(&sy);
        alpha = if curv > 0.0 { sx.dot(&sx) / curv } else { step * 2.0 };
        state = next;
        grad = next_grad;
    }
    let converged = residual_inf(&state) <= cfg.tol;
    (state, iterations, converged)
}

fn check_dual_inputs(m: &CostMatrix, r: &CoSimplexVector, c: &CoSimplexVector, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}; need lambda >= 0")));
    }
    let n = m.n();
    if r.len() != n || c.len() != n || r.temp() != c.temp() {
        return Err(Error::Shape {
            expected: format!("marginals of length {n} at one temperature"),
            got: format!("{} and {}", r.len(), c.len()),
        });
    }
    if r.entries().iter().chain(c.entries()).any(|&x| x <= 0.0) {
        return Err(Error::InvalidArgument("marginals must be strictly positive".into()));
    }
    Ok(())
}

fn split(x: &Array1<f64>, n: usize) -> (Array1<f64>, Array1<f64>) {
    (
        x.slice(ndarray::s![..n]).to_owned(),
        x.slice(ndarray::s![n..]).to_owned(),
    )
}

/// Multipliers `(ν, γ)` making the regularized expected closed form a coupling.
pub fn exact_dual_expected(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    cfg: &DualConfig,
) -> Result<DualSolution> {
    check_dual_inputs(m, r, c, lambda)?;
    let temp = r.temp();
    let n = m.n();
    let q = temp.density_power();
    let model = DualModel {
        a: Array2::from_shape_fn((n, n), |(i, j)| (r.entries()[i] * c.entries()[j]).powf(q)),
        l: m.entries() * lambda,
        temp,
        r: r.density().entries().clone(),
        c: c.density().entries().clone(),
    };
    let (state, iterations, converged) = descend(&model, cfg);
    let (nu, gamma) = split(&state.x, n);
    let plan = CouplingPlan::unvalidated(
        expected_closed_form(m, r, c, lambda, &nu, &gamma),
        r.clone(),
        c.clone(),
    )?;
    Ok(DualSolution {
        marginal_residual: residual_inf(&state),
        nu,
        gamma,
        plan,
        iterations,
        converged,
    })
}

/// Multipliers `(ν, γ)` making the regularized measured closed form a coupling (`t <= 1`).
pub fn exact_dual_measured(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    cfg: &DualConfig,
) -> Result<DualSolution> {
    check_dual_inputs(m, r, c, lambda)?;
    let temp = r.temp();
    if temp.t() > 1.0 {
        return Err(domain("exact_dual_measured", "defined for t <= 1"));
    }
    let n = m.n();
    let k = crate::seeds::measured_seed(m, r, c, lambda)?.kernel();
    let model = DualModel {
        a: k,
        l: Array2::zeros((n, n)),
        temp,
        r: r.density().entries().clone(),
        c: c.density().entries().clone(),
    };
    let (state, iterations, converged) = descend(&model, cfg);
    let (nu, gamma) = split(&state.x, n);
    let plan = CouplingPlan::unvalidated(
        measured_closed_form(m, r, c, lambda, &nu, &gamma)?,
        r.clone(),
        c.clone(),
    )?;
    Ok(DualSolution {
        marginal_residual: residual_inf(&state),
        nu,
        gamma,
        plan,
        iterations,
        converged,
    })
}

pub fn exact_dual(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    variant: Variant,
    cfg: &DualConfig,
) -> Result<DualSolution> {
    match variant {
        Variant::Expected => exact_dual_expected(m, r, c, lambda, cfg),
        Variant::Measured => exact_dual_measured(m, r, c, lambda, cfg),
    }
}

/// Sinkhorn-versus-exact comparison, kept even when a solver stops early.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `|E_sinkhorn - E_exact| / E_exact` on expected costs.
    pub gap: f64,
    pub sinkhorn_converged: bool,
    pub sinkhorn_iterations: usize,
    /// Final L∞ change of `ξ`.
    pub sinkhorn_residual: f64,
    pub exact_converged: bool,
    pub exact_iterations: usize,
    /// Final L∞ marginal residual of the exact solver.
    pub exact_residual: f64,
}

impl GapReport {
    pub fn converged(&self) -> bool {
        self.sinkhorn_converged && self.exact_converged
    }
}

pub fn approximation_gap_report(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    variant: Variant,
    cfg: &SolveConfig,
    dual_cfg: &DualConfig,
) -> Result<GapReport> {
    let approx = tempered_ot(m, r, c, lambda, variant, cfg)?;
    let exact = exact_dual(m, r, c, lambda, variant, dual_cfg)?;
    let base = expected_cost(&exact.plan, m)?;
    if !(base > 0.0) {
        return Err(Error::DegenerateBaseline(base));
    }
    Ok(GapReport {
        gap: (expected_cost(&approx.plan, m)? - base).abs() / base,
        sinkhorn_converged: approx.converged,
        sinkhorn_iterations: approx.iterations,
        sinkhorn_residual: approx.final_residual,
        exact_converged: exact.converged,
        exact_iterations: exact.iterations,
        exact_residual: exact.marginal_residual,
    })
}

/// Relative expected-cost error of the Sinkhorn reduction against the exact dual solution.
///
/// Fails with `NonConvergence` when either solver stops early.
pub fn approximation_gap(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
    variant: Variant,
    cfg: &SolveConfig,
    dual_cfg: &DualConfig,
) -> Result<f64> {
    let rep = approximation_gap_report(m, r, c, lambda, variant, cfg, dual_cfg)?;
    if !rep.sinkhorn_converged {
        return Err(Error::NonConvergence {
            op: "sinkhorn",
            iterations: rep.sinkhorn_iterations,
            residual: rep.sinkhorn_residual,
        });
    }
    if !rep.exact_converged {
        return Err(Error::NonConvergence {
            op: "exact dual",
            iterations: rep.exact_iterations,
            residual: rep.exact_residual,
        });
    }
    Ok(rep.gap)
}
