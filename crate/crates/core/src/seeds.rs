//! Seed matrices whose diagonal scalings approximate the regularized plans.
//!
//! Both seeds are computed from their pre-clamp base with an exact `<= 0` test,
//! so the zero pattern never depends on a float threshold.

use ndarray::{Array2, Axis as NdAxis};

use crate::error::{Axis, Error, Result};
use crate::measures::{CoSimplexVector, Problem, SeedRecord};
use crate::objectives::{CostMatrix, Variant};
use crate::tempered_math::Temperature;

#[derive(Debug, Clone, PartialEq)]
pub struct SeedMatrix {
    entries: Array2<f64>,
    variant: Variant,
    lambda: f64,
    temp: Temperature,
    zero_pattern: Array2<bool>,
    infeasible: Option<(Axis, usize)>,
}

impl SeedMatrix {
    fn build(entries: Array2<f64>, variant: Variant, lambda: f64, temp: Temperature) -> Self {
        let zero_pattern = entries.mapv(|v| v == 0.0);
        let infeasible = first_empty_line(&zero_pattern);
        Self {
            entries,
            variant,
            lambda,
            temp,
            zero_pattern,
            infeasible,
        }
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn temp(&self) -> Temperature {
        self.temp
    }

    pub fn zero_pattern(&self) -> &Array2<bool> {
        &self.zero_pattern
    }

    pub fn zero_count(&self) -> usize {
        self.zero_pattern.iter().filter(|&&z| z).count()
    }

    pub fn is_positive(&self) -> bool {
        self.zero_count() == 0
    }

    /// First all-zero row (or column), if any. Such a seed cannot be balanced.
    pub fn infeasibility(&self) -> Option<(Axis, usize)> {
        self.infeasible
    }

    pub fn check_feasible(&self) -> Result<()> {
        match self.infeasible {
            Some((axis, index)) => Err(Error::InfeasibleSupport { axis, index }),
            None => Ok(()),
        }
    }

    /// The Sinkhorn kernel `K̃^{1/t*} = K̃^{2-t}`.
    pub fn kernel(&self) -> Array2<f64> {
        if self.temp.is_one() {
            return self.entries.clone();
        }
        let p = self.temp.density_power();
        self.entries.mapv(|v| v.powf(p))
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }
}

fn first_empty_line(zeros: &Array2<bool>) -> Option<(Axis, usize)> {
    for (i, row) in zeros.axis_iter(NdAxis(0)).enumerate() {
        if row.iter().all(|&z| z) {
            return Some((Axis::Row, i));
        }
    }
    for (j, col) in zeros.axis_iter(NdAxis(1)).enumerate() {
        if col.iter().all(|&z| z) {
            return Some((Axis::Column, j));
        }
    }
    None
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}; need lambda >= 0")));
    }
    Ok(())
}

/// `K̃_e = 1 / exp_t((λ/t*) M)`; zeros where `t > 1` and `1 + (1-t)(λ/t*)M_ij <= 0`.
pub fn expected_seed(m: &CostMatrix, lambda: f64, temp: Temperature) -> Result<SeedMatrix> {
    check_lambda(lambda)?;
    let ts = temp.t_star();
    let entries = if temp.is_one() {
        m.entries().mapv(|x| (-(lambda * x)).exp())
    } else {
        let e = 1.0 - temp.t();
        m.entries().mapv(|x| {
            let base = 1.0 + e * (lambda * x / ts);
            if base <= 0.0 {
                0.0
            } else {
                base.powf(-1.0 / e)
            }
        })
    };
    Ok(SeedMatrix::build(entries, Variant::Expected, lambda, temp))
}

/// `K̃_m = exp_t(log_t(r̃c̃ᵀ) - λM)`; zeros where `t < 1` and `(r̃_i c̃_j)^{1-t} - (1-t)λM_ij <= 0`.
pub fn measured_seed(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
) -> Result<SeedMatrix> {
    check_lambda(lambda)?;
    let n = m.n();
    if r.len() != n || c.len() != n {
        return Err(Error::Shape {
            expected: format!("marginals of length {n}"),
            got: format!("{} and {}", r.len(), c.len()),
        });
    }
    if r.temp() != c.temp() {
        return Err(Error::InvalidArgument(
            "row and column marginals carry different temperatures".into(),
        ));
    }
    if r.entries().iter().chain(c.entries()).any(|&x| x <= 0.0) {
        return Err(Error::InvalidArgument(
            "measured seed needs strictly positive marginals".into(),
        ));
    }
    let temp = r.temp();
    let (re, ce) = (r.entries(), c.entries());
    let entries = if temp.is_one() {
        Array2::from_shape_fn((n, n), |(i, j)| re[i] * ce[j] * (-(lambda * m.entries()[[i, j]])).exp())
    } else {
        let e = 1.0 - temp.t();
        Array2::from_shape_fn((n, n), |(i, j)| {
            let base = (re[i] * ce[j]).powf(e) - e * (lambda * m.entries()[[i, j]]);
            if base <= 0.0 {
                0.0
            } else {
                base.powf(1.0 / e)
            }
        })
    };
    Ok(SeedMatrix::build(entries, Variant::Measured, lambda, temp))
}

pub fn seed(
    variant: Variant,
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambda: f64,
) -> Result<SeedMatrix> {
    match variant {
        Variant::Expected => expected_seed(m, lambda, r.temp()),
        Variant::Measured => measured_seed(m, r, c, lambda),
    }
}

fn nested(smaller: &Array2<bool>, larger: &Array2<bool>) -> bool {
    smaller.iter().zip(larger.iter()).all(|(&a, &b)| !a || b)
}

/// Whether zero sets grow along an ascending `λ` list, for both seed variants.
pub fn zero_nesting_check(
    m: &CostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    lambdas: &[f64],
) -> Result<bool> {
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("lambda list must be strictly ascending".into()));
    }
    for variant in [Variant::Expected, Variant::Measured] {
        let mut prev: Option<SeedMatrix> = None;
        for &lambda in lambdas {
            let s = seed(variant, m, r, c, lambda)?;
            if let Some(p) = &prev {
                if !nested(p.zero_pattern(), s.zero_pattern()) {
                    return Ok(false);
                }
            }
            prev = Some(s);
        }
    }
    Ok(true)
}

/// Both seeds of `problem` at `lambda`, in fixture form.
pub fn seed_record(problem: &Problem, lambda: f64) -> Result<SeedRecord> {
    let m = CostMatrix::new(problem.cost.clone())?;
    let e = expected_seed(&m, lambda, problem.temp)?;
    let s = measured_seed(&m, &problem.r, &problem.c, lambda)?;
    Ok(SeedRecord {
        lambda,
        expected: e.entries().iter().copied().collect(),
        measured: s.entries().iter().copied().collect(),
    })
}
