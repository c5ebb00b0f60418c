//! Co-simplex vectors, co-polytope coupling plans and the density-space view.
//!
//! A tilde-space vector `x̃` is normalized through its co-density `x = x̃^{2-t}`;
//! the map back is the power `t* = 1 / (2 - t)`.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lp_oracle::northwest_corner;
use crate::tempered_math::Temperature;

/// Tolerance used when validating constructed (not solved) inputs.
pub const INPUT_TOL: f64 = 1e-9;
/// Tolerance used when validating solver outputs.
pub const SOLVER_TOL: f64 = 1e-6;

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    entries: Array1<f64>,
}

impl DensityVector {
    pub fn new(entries: Array1<f64>) -> Result<Self> {
        Self::with_tol(entries, INPUT_TOL)
    }

    pub fn with_tol(entries: Array1<f64>, tol: f64) -> Result<Self> {
        check_nonneg(entries.iter(), "DensityVector")?;
        let s = entries.sum();
        if (s - 1.0).abs() > tol {
            return Err(domain("DensityVector", format!("entries sum to {s}, not 1")));
        }
        Ok(Self { entries })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            entries: Array1::from_elem(n, 1.0 / n as f64),
        }
    }

    pub fn entries(&self) -> &Array1<f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.entries.iter().all(|&x| x > 0.0)
    }
}

/// A point of the co-simplex: nonnegative, with `Σ x̃^{2-t} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoSimplexVector {
    entries: Array1<f64>,
    temp: Temperature,
}

impl CoSimplexVector {
    pub fn new(entries: Array1<f64>, temp: Temperature) -> Result<Self> {
        Self::with_tol(entries, temp, INPUT_TOL)
    }

    pub fn with_tol(entries: Array1<f64>, temp: Temperature, tol: f64) -> Result<Self> {
        check_nonneg(entries.iter(), "CoSimplexVector")?;
        let p = temp.density_power();
        let s: f64 = entries.iter().map(|x| x.powf(p)).sum();
        if (s - 1.0).abs() > tol {
            return Err(domain(
                "CoSimplexVector",
                format!("co-density sums to {s}, not 1"),
            ));
        }
        Ok(Self { entries, temp })
    }

    pub fn uniform(n: usize, temp: Temperature) -> Self {
        from_density(&DensityVector::uniform(n), temp)
    }

    pub fn entries(&self) -> &Array1<f64> {
        &self.entries
    }

    pub fn temp(&self) -> Temperature {
        self.temp
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn density(&self) -> DensityVector {
        to_density(self)
    }

    /// Total tilde-space mass `Σ x̃_i`; differs from 1 unless `t = 1`.
    pub fn total_mass(&self) -> f64 {
        self.entries.sum()
    }
}

pub fn to_density(x: &CoSimplexVector) -> DensityVector {
    let p = x.temp.density_power();
    DensityVector {
        entries: x.entries.mapv(|v| v.powf(p)),
    }
}

pub fn from_density(p: &DensityVector, temp: Temperature) -> CoSimplexVector {
    let ts = temp.t_star();
    CoSimplexVector {
        entries: p.entries.mapv(|v| if temp.is_one() { v } else { v.powf(ts) }),
        temp,
    }
}

/// An element of the co-polytope `Ũ_n(r̃, c̃)`, stored in tilde space.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPlan {
    entries: Array2<f64>,
    temp: Temperature,
    row_marginal: CoSimplexVector,
    col_marginal: CoSimplexVector,
}

impl CouplingPlan {
    /// Builds a plan and checks co-polytope membership at `tol`.
    pub fn new(
        entries: Array2<f64>,
        row_marginal: CoSimplexVector,
        col_marginal: CoSimplexVector,
        tol: f64,
    ) -> Result<Self> {
        let plan = Self::unvalidated(entries, row_marginal, col_marginal)?;
        let report = plan.membership(tol);
        if !report.accepted {
            return Err(domain(
                "CouplingPlan",
                format!(
                    "marginal residuals (row {:.3e}, column {:.3e}) exceed {tol:.1e}",
                    report.max_row_residual, report.max_col_residual
                ),
            ));
        }
        Ok(plan)
    }

    /// Builds a plan checking only shapes and signs; used for solver iterates
    /// that may not have converged.
    pub fn unvalidated(
        entries: Array2<f64>,
        row_marginal: CoSimplexVector,
        col_marginal: CoSimplexVector,
    ) -> Result<Self> {
        let n = row_marginal.len();
        if entries.dim() != (n, col_marginal.len()) || n != col_marginal.len() {
            return Err(Error::Shape {
                expected: format!("{n}x{n}"),
                got: format!("{:?}", entries.dim()),
            });
        }
        if row_marginal.temp() != col_marginal.temp() {
            return Err(Error::InvalidArgument(
                "row and column marginals carry different temperatures".into(),
            ));
        }
        check_nonneg(entries.iter(), "CouplingPlan")?;
        Ok(Self {
            temp: row_marginal.temp(),
            entries,
            row_marginal,
            col_marginal,
        })
    }

    /// Lifts a density-space plan `P` to tilde space, `P̃ = P^{t*}`.
    pub fn from_density(
        density: &Array2<f64>,
        row_marginal: CoSimplexVector,
        col_marginal: CoSimplexVector,
    ) -> Result<Self> {
        let temp = row_marginal.temp();
        let ts = temp.t_star();
        let entries = if temp.is_one() {
            density.clone()
        } else {
            density.mapv(|v| v.powf(ts))
        };
        Self::unvalidated(entries, row_marginal, col_marginal)
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn temp(&self) -> Temperature {
        self.temp
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn row_marginal(&self) -> &CoSimplexVector {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &CoSimplexVector {
        &self.col_marginal
    }

    /// Co-density `P = P̃^{2-t}`.
    pub fn density(&self) -> Array2<f64> {
        if self.temp.is_one() {
            return self.entries.clone();
        }
        let p = self.temp.density_power();
        self.entries.mapv(|v| v.powf(p))
    }

    pub fn membership(&self, tol: f64) -> MembershipReport {
        membership_of(&self.entries, &self.row_marginal, &self.col_marginal, tol)
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Outcome of a co-polytope membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub max_row_residual: f64,
    pub max_col_residual: f64,
    pub min_entry: f64,
    pub accepted: bool,
}

/// Checks `P̃^{1/t*} 1 = r̃^{1/t*}` and its column counterpart coordinatewise.
pub fn validate_coupling(
    plan: &Array2<f64>,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    tol: f64,
) -> Result<MembershipReport> {
    if plan.dim() != (r.len(), c.len()) {
        return Err(Error::Shape {
            expected: format!("{}x{}", r.len(), c.len()),
            got: format!("{:?}", plan.dim()),
        });
    }
    if r.temp() != c.temp() {
        return Err(Error::InvalidArgument(
            "marginals carry different temperatures".into(),
        ));
    }
    Ok(membership_of(plan, r, c, tol))
}

fn membership_of(
    plan: &Array2<f64>,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    tol: f64,
) -> MembershipReport {
    let temp = r.temp();
    let density = if temp.is_one() {
        plan.clone()
    } else {
        plan.mapv(|v| v.max(0.0).powf(temp.density_power()))
    };
    let rd = r.density();
    let cd = c.density();
    let max_row_residual = density
        .sum_axis(Axis(1))
        .iter()
        .zip(rd.entries())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let max_col_residual = density
        .sum_axis(Axis(0))
        .iter()
        .zip(cd.entries())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let min_entry = plan.iter().copied().fold(f64::INFINITY, f64::min);
    MembershipReport {
        max_row_residual,
        max_col_residual,
        min_entry,
        accepted: max_row_residual <= tol && max_col_residual <= tol && min_entry >= 0.0,
    }
}

/// The rank-one plan `r̃ c̃ᵀ`, center of the divergence ball.
pub fn independence_table(r: &CoSimplexVector, c: &CoSimplexVector) -> Result<CouplingPlan> {
    if r.len() != c.len() {
        return Err(Error::Shape {
            expected: format!("{} columns", r.len()),
            got: format!("{} columns", c.len()),
        });
    }
    let n = r.len();
    let entries = Array2::from_shape_fn((n, n), |(i, j)| r.entries()[i] * c.entries()[j]);
    CouplingPlan::unvalidated(entries, r.clone(), c.clone())
}

/// A random transport instance: uniform costs and strictly positive marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub n: usize,
    pub temp: Temperature,
    pub seed: u64,
    pub cost: Array2<f64>,
    pub r: CoSimplexVector,
    pub c: CoSimplexVector,
}

impl Problem {
    /// Same instance viewed at a different temperature (same density marginals).
    pub fn at_temperature(&self, temp: Temperature) -> Problem {
        Problem {
            temp,
            r: from_density(&self.r.density(), temp),
            c: from_density(&self.c.density(), temp),
            ..self.clone()
        }
    }

    pub fn to_fixture(&self) -> ProblemFixture {
        ProblemFixture {
            n: self.n,
            t: self.temp.t(),
            seed: self.seed,
            cost: self.cost.iter().copied().collect(),
            r: self.r.density().entries().to_vec(),
            c: self.c.density().entries().to_vec(),
            seeds: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_fixture())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ProblemFixture>(s)?.to_problem()
    }
}

/// JSON form of a [`Problem`]: `{n, t, seed, M (row-major), r, c}` with density marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFixture {
    pub n: usize,
    pub t: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub cost: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<SeedRecord>,
}

/// Seed matrices stored next to a fixture, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub lambda: f64,
    pub expected: Vec<f64>,
    pub measured: Vec<f64>,
}

impl ProblemFixture {
    pub fn to_problem(&self) -> Result<Problem> {
        let n = self.n;
        if self.cost.len() != n * n || self.r.len() != n || self.c.len() != n {
            return Err(Error::Shape {
                expected: format!("n = {n}"),
                got: format!(
                    "M: {}, r: {}, c: {}",
                    self.cost.len(),
                    self.r.len(),
                    self.c.len()
                ),
            });
        }
        let temp = Temperature::new(self.t)?;
        let cost = Array2::from_shape_vec((n, n), self.cost.clone())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let r = DensityVector::new(Array1::from(self.r.clone()))?;
        let c = DensityVector::new(Array1::from(self.c.clone()))?;
        Ok(Problem {
            n,
            temp,
            seed: self.seed,
            cost,
            r: from_density(&r, temp),
            c: from_density(&c, temp),
        })
    }
}

/// Independent RNG stream for trial `k` of a run seeded with `master`.
pub fn trial_rng(master: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(k);
    rng
}

pub fn sample_problem(n: usize, seed: u64, temp: Temperature) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_problem_with(&mut rng, n, seed, temp)
}

/// Samples `M` i.i.d. uniform on `[0, 1)` and marginals normalized in density space.
pub fn sample_problem_with<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    seed: u64,
    temp: Temperature,
) -> Result<Problem> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n = {n}; need n >= 2")));
    }
    let cost = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>());
    let r = sample_density(rng, n);
    let c = sample_density(rng, n);
    Ok(Problem {
        n,
        temp,
        seed,
        cost,
        r: from_density(&r, temp),
        c: from_density(&c, temp),
    })
}

/// Strictly positive density: i.i.d. uniform draws (zeros redrawn), normalized.
pub fn sample_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DensityVector {
    let raw = Array1::from_shape_simple_fn(n, || loop {
        let x = rng.random::<f64>();
        if x > 0.0 {
            break x;
        }
    });
    let s = raw.sum();
    DensityVector {
        entries: raw / s,
    }
}

/// Random point of the co-polytope.
///
/// Draws a density-space convex combination of the independence table and up to
/// three transport-polytope vertices (northwest-corner rule under random row and
/// column orders), then lifts it to tilde space. Marginals hold to rounding error.
pub fn sample_coupling<R: Rng + ?Sized>(
    rng: &mut R,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
) -> Result<CouplingPlan> {
    let n = r.len();
    let rd = r.density();
    let cd = c.density();
    let vertices = rng.random_range(1..=3);
    let mut weights: Vec<f64> = (0..=vertices)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    // sometimes drop the interior component to reach the boundary
    if rng.random_bool(0.25) {
        weights[0] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    let mut density = Array2::from_shape_fn((n, n), |(i, j)| {
        weights[0] / total * rd.entries()[i] * cd.entries()[j]
    });
    for &w in &weights[1..] {
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        shuffle(rng, &mut rows);
        shuffle(rng, &mut cols);
        for (i, j, f) in northwest_corner(rd.entries(), cd.entries(), &rows, &cols) {
            density[[i, j]] += w / total * f;
        }
    }
    CouplingPlan::from_density(&density, r.clone(), c.clone())
}

fn shuffle<R: Rng + ?Sized>(rng: &mut R, xs: &mut [usize]) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

fn check_nonneg<'a>(mut it: impl Iterator<Item = &'a f64>, op: &'static str) -> Result<()> {
    if it.any(|&x| x.is_nan() || x < 0.0) {
        return Err(domain(op, "entries must be finite and >= 0"));
    }
    Ok(())
}
