//! Cost functionals over coupling plans.
//!
//! The expected cost reads the plan through its co-density, `<P, M>`; the
//! measured cost reads the tilde-space plan directly, `<P̃, M>`. Both get a
//! regularized form with `D_t(P̃ ‖ r̃c̃ᵀ) / λ`. For `t < 1` the divergence to the
//! independence table is affine in `<P̃, M_t>`, `M_t = (r̃c̃ᵀ)^{1-t}`, which turns
//! the regularized measured cost into a plain measured cost over
//! `M' = λM - M_t / (1 - t)`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lp_oracle::{enumerate_vertices, solve_ot_exact, MAX_ENUMERATION_N};
use crate::measures::{CoSimplexVector, CouplingPlan, DensityVector};
use crate::tempered_math::{exp_t, tempered_divergence, Temperature};

/// Which cost the regularizer is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Expected,
    Measured,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Expected => "expected",
            Variant::Measured => "measured",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(Variant::Expected),
            "measured" => Ok(Variant::Measured),
            _ => Err(Error::InvalidArgument(format!("unknown variant {s:?}"))),
        }
    }
}

/// Square cost matrix. `metric` is a claim, checked on demand by [`CostMatrix::check_metric`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    metric: bool,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{:?}", entries.dim()),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(domain("CostMatrix", "entries must be finite"));
        }
        Ok(Self {
            entries,
            metric: false,
        })
    }

    pub fn metric(entries: Array2<f64>) -> Result<Self> {
        let mut m = Self::new(entries)?;
        if m.entries.iter().any(|&x| x < 0.0) {
            return Err(domain("CostMatrix", "metric costs must be >= 0"));
        }
        m.metric = true;
        Ok(m)
    }

    /// Pairwise Euclidean distances between `n` uniform points of the unit square.
    pub fn random_metric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let entries = Array2::from_shape_fn((n, n), |(i, j)| {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            (dx * dx + dy * dy).sqrt()
        });
        Self {
            entries,
            metric: true,
        }
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_metric_claimed(&self) -> bool {
        self.metric
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.entries.sum()
    }

    /// Verifies nonnegativity, zero diagonal, symmetry and the triangle inequality.
    pub fn check_metric(&self, tol: f64) -> bool {
        let m = &self.entries;
        let n = self.n();
        for i in 0..n {
            if m[[i, i]].abs() > tol {
                return false;
            }
            for j in 0..n {
                if m[[i, j]] < -tol || (m[[i, j]] - m[[j, i]]).abs() > tol {
                    return false;
                }
                for k in 0..n {
                    if m[[i, k]] > m[[i, j]] + m[[j, k]] + tol {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// `M' = λM - (r̃c̃ᵀ)^{1-t} / (1 - t)`; may carry negative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCostMatrix {
    entries: Array2<f64>,
    lambda: f64,
    temp: Temperature,
}

impl EffectiveCostMatrix {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn temp(&self) -> Temperature {
        self.temp
    }

    pub fn negative_count(&self) -> usize {
        self.entries.iter().filter(|&&x| x < 0.0).count()
    }
}

fn check_square(plan: &CouplingPlan, m: &CostMatrix) -> Result<()> {
    if plan.n() != m.n() {
        return Err(Error::Shape {
            expected: format!("{0}x{0}", plan.n()),
            got: format!("{0}x{0}", m.n()),
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}; need lambda > 0")));
    }
    Ok(())
}

/// `<P, M>` with `P = P̃^{1/t*}`.
pub fn expected_cost(plan: &CouplingPlan, m: &CostMatrix) -> Result<f64> {
    check_square(plan, m)?;
    Ok((&plan.density() * m.entries()).sum())
}

/// `<P̃, M>` in tilde space.
pub fn measured_cost(plan: &CouplingPlan, m: &CostMatrix) -> Result<f64> {
    check_square(plan, m)?;
    Ok((plan.entries() * m.entries()).sum())
}

/// `M_t = (r̃c̃ᵀ)^{1-t}`; undefined at `t = 1`, where the KL branch applies.
pub fn m_t_matrix(r: &CoSimplexVector, c: &CoSimplexVector) -> Result<Array2<f64>> {
    let temp = r.temp();
    if temp.is_one() {
        return Err(domain("m_t_matrix", "no interaction matrix at t = 1"));
    }
    let e = 1.0 - temp.t();
    let n = r.len();
    Ok(Array2::from_shape_fn((n, c.len()), |(i, j)| {
        (r.entries()[i] * c.entries()[j]).powf(e)
    }))
}

pub fn effective_cost(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
) -> Result<EffectiveCostMatrix> {
    let temp = r.temp();
    if temp.t() >= 1.0 {
        return Err(domain("effective_cost", "M' is defined for t < 1 only"));
    }
    check_lambda(lambda)?;
    if m.n() != r.len() {
        return Err(Error::Shape {
            expected: format!("{0}x{0}", r.len()),
            got: format!("{0}x{0}", m.n()),
        });
    }
    let mt = m_t_matrix(r, c)?;
    let inv = 1.0 / (1.0 - temp.t());
    let entries = Array2::from_shape_fn(mt.dim(), |ij| lambda * m.entries()[ij] - inv * mt[ij]);
    Ok(EffectiveCostMatrix {
        entries,
        lambda,
        temp,
    })
}

/// `D_t(P̃ ‖ r̃c̃ᵀ)` for the plan's own marginals.
pub fn divergence_to_independence(plan: &CouplingPlan) -> Result<f64> {
    let r = plan.row_marginal().entries();
    let c = plan.col_marginal().entries();
    let n = plan.n();
    let table = Array2::from_shape_fn((n, n), |(i, j)| r[i] * c[j]);
    tempered_divergence(plan.entries(), &table, plan.temp())
}

/// Outcome of an `ε`-ball test around the independence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallMembership {
    pub member: bool,
    pub divergence: f64,
    /// `ε - D_t(P̃ ‖ r̃c̃ᵀ)`.
    pub slack: f64,
    /// `<P̃, M_t>` (only for `t < 1`).
    pub inner_product: Option<f64>,
    /// Membership decided through `<P̃, M_t> >= 1 - (1-t)ε` (only for `t < 1`).
    pub inner_product_member: Option<bool>,
}

pub fn ball_membership(plan: &CouplingPlan, epsilon: f64) -> Result<BallMembership> {
    let temp = plan.temp();
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon}; need >= 0")));
    }
    if temp.t() < 1.0 && epsilon >= 1.0 / (1.0 - temp.t()) {
        return Err(domain(
            "ball_membership",
            format!(
                "epsilon = {epsilon} >= 1/(1-t) = {}; the ball is the whole co-polytope",
                1.0 / (1.0 - temp.t())
            ),
        ));
    }
    let divergence = divergence_to_independence(plan)?;
    let (inner_product, inner_product_member) = if temp.t() < 1.0 {
        let mt = m_t_matrix(plan.row_marginal(), plan.col_marginal())?;
        let ip = (plan.entries() * &mt).sum();
        // exp_t(-ε)^{1-t} = 1 - (1-t)ε, nonnegative under the radius bound above
        let threshold = exp_t(-epsilon, temp)
            .finite()
            .expect("finite for t < 1")
            .powf(1.0 - temp.t());
        (Some(ip), Some(ip >= threshold))
    } else {
        (None, None)
    };
    Ok(BallMembership {
        member: divergence <= epsilon,
        divergence,
        slack: epsilon - divergence,
        inner_product,
        inner_product_member,
    })
}

/// Cost of `variant` plus `D_t(P̃ ‖ r̃c̃ᵀ) / λ`.
pub fn regularized_objective(
    plan: &CouplingPlan,
    m: &CostMatrix,
    lambda: f64,
    variant: Variant,
) -> Result<f64> {
    check_lambda(lambda)?;
    let cost = match variant {
        Variant::Expected => expected_cost(plan, m)?,
        Variant::Measured => measured_cost(plan, m)?,
    };
    Ok(cost + divergence_to_independence(plan)? / lambda)
}

/// `(β P̃^{1/t*} + (1-β) Q̃^{1/t*})^{t*}`, the density-space mixture lifted back.
pub fn power_convex_mix(p: &CouplingPlan, q: &CouplingPlan, beta: f64) -> Result<CouplingPlan> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta = {beta} outside [0, 1]")));
    }
    if p.temp() != q.temp()
        || p.row_marginal() != q.row_marginal()
        || p.col_marginal() != q.col_marginal()
    {
        return Err(Error::InvalidArgument(
            "plans must share marginals and temperature".into(),
        ));
    }
    if beta == 1.0 {
        return Ok(p.clone());
    }
    if beta == 0.0 {
        return Ok(q.clone());
    }
    let mixed = p.density() * beta + q.density() * (1.0 - beta);
    CouplingPlan::from_density(&mixed, p.row_marginal().clone(), p.col_marginal().clone())
}

/// Value of the unregularized measured transport problem `min <P̃, M>`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredDistance {
    pub value: f64,
    /// Minimizing plan in density space.
    pub density_plan: Array2<f64>,
    /// True when the value is a certified global minimum.
    pub certified: bool,
}

/// Measured objective `Σ P_ij^{t*} M_ij` evaluated on a density plan.
fn measured_objective(density: &Array2<f64>, m: &Array2<f64>, t_star: f64) -> f64 {
    density
        .iter()
        .zip(m.iter())
        .map(|(&p, &c)| if p > 0.0 { p.powf(t_star) * c } else { 0.0 })
        .sum()
}

/// Exact measured distance for `t <= 1` by exhaustive vertex enumeration (`n <= 4`).
///
/// For `t <= 1` the objective is concave in the density plan, so the minimum sits on a vertex.
pub fn measured_distance_exact(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
) -> Result<MeasuredDistance> {
    let temp = r.temp();
    if temp.t() > 1.0 {
        return Err(domain(
            "measured_distance_exact",
            "objective is convex for t > 1; vertex enumeration does not apply",
        ));
    }
    if r.len() > MAX_ENUMERATION_N {
        return Err(Error::SizeGuard {
            op: "measured_distance_exact",
            limit: MAX_ENUMERATION_N,
            n: r.len(),
        });
    }
    let ts = temp.t_star();
    let mut best: Option<(f64, Array2<f64>)> = None;
    for v in enumerate_vertices(&r.density(), &c.density())? {
        let val = measured_objective(&v, m.entries(), ts);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, v));
        }
    }
    let (value, density_plan) = best.ok_or_else(|| domain("measured_distance_exact", "no vertex"))?;
    Ok(MeasuredDistance {
        value,
        density_plan,
        certified: true,
    })
}

/// Measured distance: exact where cheap, otherwise a heuristic upper bound.
///
/// * `t = 1`: the transport LP.
/// * `t < 1`, `n <= 4`: vertex enumeration.
/// * `t < 1`, larger `n`: successive linearization from the LP vertex (a local vertex minimum).
/// * `t > 1`: Frank-Wolfe on the convex objective, 100 steps.
pub fn measured_distance(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
) -> Result<MeasuredDistance> {
    let temp = r.temp();
    let (rd, cd) = (r.density(), c.density());
    if temp.is_one() {
        let sol = solve_ot_exact(m.entries(), &rd, &cd)?;
        return Ok(MeasuredDistance {
            value: sol.objective,
            density_plan: sol.plan,
            certified: true,
        });
    }
    if temp.t() < 1.0 {
        if r.len() <= MAX_ENUMERATION_N {
            return measured_distance_exact(m, r, c);
        }
        return successive_linearization(m.entries(), &rd, &cd, temp.t_star());
    }
    frank_wolfe(m.entries(), &rd, &cd, temp.t_star(), 100)
}

fn linearized_cost(density: &Array2<f64>, m: &Array2<f64>, t_star: f64) -> Array2<f64> {
    const FLOOR: f64 = 1e-12;
    Array2::from_shape_fn(m.dim(), |ij| t_star * density[ij].max(FLOOR).powf(t_star - 1.0) * m[ij])
}

fn successive_linearization(
    m: &Array2<f64>,
    r: &DensityVector,
    c: &DensityVector,
    t_star: f64,
) -> Result<MeasuredDistance> {
    let mut plan = solve_ot_exact(m, r, c)?.plan;
    let mut value = measured_objective(&plan, m, t_star);
    for _ in 0..50 {
        let next = solve_ot_exact(&linearized_cost(&plan, m, t_star), r, c)?.plan;
        let next_value = measured_objective(&next, m, t_star);
        if next_value >= value - 1e-15 * value.abs().max(1.0) {
            break;
        }
        plan = next;
        value = next_value;
    }
    Ok(MeasuredDistance {
        value,
        density_plan: plan,
        certified: false,
    })
}

fn frank_wolfe(
    m: &Array2<f64>,
    r: &DensityVector,
    c: &DensityVector,
    t_star: f64,
    steps: usize,
) -> Result<MeasuredDistance> {
    let n = r.len();
    let mut plan = Array2::from_shape_fn((n, n), |(i, j)| r.entries()[i] * c.entries()[j]);
    let mut value = measured_objective(&plan, m, t_star);
    for _ in 0..steps {
        let grad = linearized_cost(&plan, m, t_star);
        let target = solve_ot_exact(&grad, r, c)?.plan;
        let dir = &target - &plan;
        // golden-section search on the convex segment
        let f = |g: f64| measured_objective(&(&plan + &(&dir * g)), m, t_star);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if f(a) <= f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let step = 0.5 * (lo + hi);
        let candidate = &plan + &(&dir * step);
        let cand_value = measured_objective(&candidate, m, t_star);
        if cand_value >= value {
            break;
        }
        plan = candidate.mapv(|x| x.max(0.0));
        value = cand_value;
    }
    Ok(MeasuredDistance {
        value,
        density_plan: plan,
        certified: false,
    })
}

/// Exact expected distance `min <P, M>` over `U_n(r, c)`.
pub fn expected_distance(m: &CostMatrix, r: &CoSimplexVector, c: &CoSimplexVector) -> Result<f64> {
    Ok(solve_ot_exact(m.entries(), &r.density(), &c.density())?.objective)
}
