//! Sparsity, contraction and feasibility diagnostics.

use ndarray::Array2;
use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Axis, Error, Result};
use crate::measures::{CoSimplexVector, CouplingPlan, DensityVector};
use crate::objectives::EffectiveCostMatrix;

/// Default binarization threshold for dense plans.
pub const DEFAULT_THRESHOLD: f64 = 1e-25;
pub const MAX_SPARSITY_CHECK_N: usize = 64;
pub const MAX_DIAMETER_N: usize = 128;
pub const MAX_BRUALDI_N: usize = 14;

/// Binary support of a plan: `S_ij = value_ij > threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPattern {
    s: Array2<bool>,
    threshold: f64,
}

impl SupportPattern {
    pub fn from_bools(s: Array2<bool>) -> Self {
        Self { s, threshold: 0.0 }
    }

    pub fn pattern(&self) -> &Array2<bool> {
        &self.s
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn nnz(&self) -> usize {
        self.s.iter().filter(|&&b| b).count()
    }

    pub fn nrows(&self) -> usize {
        self.s.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.s.ncols()
    }

    /// One line per row, `#` for support and `.` elsewhere.
    pub fn to_grid(&self) -> String {
        let mut out = String::with_capacity(self.s.len() + self.s.nrows());
        for row in self.s.rows() {
            out.extend(row.iter().map(|&b| if b { '#' } else { '.' }));
            out.push('\n');
        }
        out
    }

    pub fn to_record(&self) -> SupportRecord {
        SupportRecord {
            n: self.s.nrows(),
            threshold: self.threshold,
            nnz: self.nnz(),
            rows: self
                .s
                .rows()
                .into_iter()
                .map(|row| row.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect(),
        }
    }

    fn first_empty_line(&self) -> Option<(Axis, usize)> {
        for (i, row) in self.s.rows().into_iter().enumerate() {
            if !row.iter().any(|&b| b) {
                return Some((Axis::Row, i));
            }
        }
        for (j, col) in self.s.columns().into_iter().enumerate() {
            if !col.iter().any(|&b| b) {
                return Some((Axis::Column, j));
            }
        }
        None
    }
}

/// JSON form of a [`SupportPattern`]: rows as `0`/`1` strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecord {
    pub n: usize,
    pub threshold: f64,
    pub nnz: usize,
    pub rows: Vec<String>,
}

pub fn support(p: &Array2<f64>, threshold: f64) -> Result<SupportPattern> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold = {threshold}; need >= 0")));
    }
    Ok(SupportPattern {
        s: p.mapv(|v| v > threshold),
        threshold,
    })
}

/// A violated clause of the measured-cost sparsity characterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum ClauseViolation {
    /// `M'_ij < 0` but `S_ij = 0`.
    NegativeCostUnused { i: usize, j: usize },
    /// Signs `(+, -, -, +)` at `(ij, il, kj, kl)` with both `S_ij` and `S_kl` set.
    BothPositiveUsed { i: usize, j: usize, k: usize, l: usize },
    /// Signs `(+, -, -, -)`, `S_ij = 1`, and `P̃_kl^{1-t}` above its bound.
    SmallTransportExceeded {
        i: usize,
        j: usize,
        k: usize,
        l: usize,
        value: f64,
        bound: f64,
    },
}

/// Scans a measured-cost plan for violations of the sparsity characterization.
///
/// Clause 1 over all cells; clause 2 over all `i != k`, `j != l` with
/// `M'_ij > 0`, `M'_il < 0`, `M'_kj < 0`. The bound of the second part is
/// checked with relative slack `rel_tol`.
pub fn check_sparsity_theorem(
    plan: &CouplingPlan,
    mp: &EffectiveCostMatrix,
    threshold: f64,
    rel_tol: f64,
) -> Result<Vec<ClauseViolation>> {
    let n = plan.n();
    if n > MAX_SPARSITY_CHECK_N {
        return Err(Error::SizeGuard {
            op: "check_sparsity_theorem",
            limit: MAX_SPARSITY_CHECK_N,
            n,
        });
    }
    if mp.entries().dim() != (n, n) {
        return Err(Error::Shape {
            expected: format!("{n}x{n}"),
            got: format!("{:?}", mp.entries().dim()),
        });
    }
    let temp = plan.temp();
    if temp.t() >= 1.0 {
        return Err(domain("check_sparsity_theorem", "stated for t < 1"));
    }
    let e = 1.0 - temp.t();
    let p = plan.entries();
    let m = mp.entries();
    let s = support(p, threshold)?;
    let s = s.pattern();
    let mut out = Vec::new();
    for ((i, j), &v) in m.indexed_iter() {
        if v < 0.0 && !s[[i, j]] {
            out.push(ClauseViolation::NegativeCostUnused { i, j });
        }
    }
    for i in 0..n {
        for j in 0..n {
            if !(m[[i, j]] > 0.0) {
                continue;
            }
            for l in (0..n).filter(|&l| l != j && m[[i, l]] < 0.0) {
                for k in (0..n).filter(|&k| k != i && m[[k, j]] < 0.0) {
                    let mkl = m[[k, l]];
                    if mkl > 0.0 {
                        if s[[i, j]] && s[[k, l]] {
                            out.push(ClauseViolation::BothPositiveUsed { i, j, k, l });
                        }
                    } else if mkl < 0.0 && s[[i, j]] {
                        let big = p[[i, j]].max(p[[i, l]]).max(p[[k, j]]);
                        let bound = mkl.abs() / (m[[i, j]].abs() + m[[i, l]].abs() + m[[k, j]].abs())
                            * big.powf(e);
                        let value = p[[k, l]].powf(e);
                        if value > bound * (1.0 + rel_tol) {
                            out.push(ClauseViolation::SmallTransportExceeded {
                                i,
                                j,
                                k,
                                l,
                                value,
                                bound,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn log_kernel(k: &Array2<f64>) -> Result<Array2<f64>> {
    let n = k.nrows().max(k.ncols());
    if n > MAX_DIAMETER_N {
        return Err(Error::SizeGuard {
            op: "projective_diameter",
            limit: MAX_DIAMETER_N,
            n,
        });
    }
    if k.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(domain("projective_diameter", "kernel must be strictly positive and finite"));
    }
    Ok(k.mapv(f64::ln))
}

/// `δ(K) = log max (K_il K_jk) / (K_jl K_ik)` over all index quadruples.
///
/// For fixed rows `i, j` the quadruple maximum splits into a max and a min over
/// columns of `log K_i· - log K_j·`, which makes the scan cubic.
pub fn projective_diameter(k: &Array2<f64>) -> Result<f64> {
    let a = log_kernel(k)?;
    let (rows, cols) = a.dim();
    let mut best = 0.0f64;
    for i in 0..rows {
        for j in 0..rows {
            if i == j {
                continue;
            }
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for l in 0..cols {
                let d = a[[i, l]] - a[[j, l]];
                hi = hi.max(d);
                lo = lo.min(d);
            }
            best = best.max(hi - lo);
        }
    }
    Ok(best)
}

/// `κ(K) = tanh(δ(K) / 4)`.
pub fn contraction_ratio(k: &Array2<f64>) -> Result<f64> {
    Ok((projective_diameter(k)? / 4.0).tanh())
}

/// Connected components of the bipartite support graph; rows are nodes `0..n`,
/// columns `n..n+m`. Each component is returned as (rows, columns), sorted.
fn components(s: &SupportPattern) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (n, m) = s.pattern().dim();
    let mut g = DiGraphMap::<usize, (), std::hash::RandomState>::with_capacity(n + m, 2 * s.nnz());
    for v in 0..n + m {
        g.add_node(v);
    }
    for ((i, j), &b) in s.pattern().indexed_iter() {
        if b {
            g.add_edge(i, n + j, ());
            g.add_edge(n + j, i, ());
        }
    }
    let mut out: Vec<(Vec<usize>, Vec<usize>)> = tarjan_scc(&g)
        .into_iter()
        .map(|comp| {
            let mut rows: Vec<usize> = comp.iter().copied().filter(|&v| v < n).collect();
            let mut cols: Vec<usize> = comp.iter().filter(|&&v| v >= n).map(|&v| v - n).collect();
            rows.sort_unstable();
            cols.sort_unstable();
            (rows, cols)
        })
        .collect();
    out.sort();
    out
}

fn require_no_empty_line(s: &SupportPattern) -> Result<()> {
    match s.first_empty_line() {
        Some((axis, index)) => Err(Error::InfeasibleSupport { axis, index }),
        None => Ok(()),
    }
}

/// Whether rows and columns of `S` cannot be permuted into a block-diagonal form.
///
/// Equivalent to the symmetric exchange digraph on rows and columns having a
/// single strongly connected component.
pub fn indecomposable(s: &SupportPattern) -> Result<bool> {
    require_no_empty_line(s)?;
    Ok(components(s).len() == 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub indecomposable: bool,
    pub brualdi_ok: Option<bool>,
    /// Row sets `I` with their column closures `J` that break the condition
    /// (at most [`FeasibilityVerdict::MAX_LISTED`] are listed).
    pub violating_subsets: Option<Vec<(Vec<usize>, Vec<usize>)>>,
}

impl FeasibilityVerdict {
    pub const MAX_LISTED: usize = 32;

    pub fn is_feasible(&self) -> Option<bool> {
        self.brualdi_ok
    }
}

/// Whether some plan of `U_n(r, c)` has support exactly `S`.
///
/// Within each connected block of `S` the block's row and column masses must
/// agree (to `1e-12`), and every nonempty row subset `I` whose column closure `J`
/// misses part of the block must satisfy `Σ_J c > Σ_I r + 1e-12`.
pub fn brualdi_feasible(
    s: &SupportPattern,
    r: &DensityVector,
    c: &DensityVector,
) -> Result<FeasibilityVerdict> {
    const MARGIN: f64 = 1e-12;
    let (n, m) = s.pattern().dim();
    if n > MAX_BRUALDI_N || m > MAX_BRUALDI_N {
        return Err(Error::SizeGuard {
            op: "brualdi_feasible",
            limit: MAX_BRUALDI_N,
            n: n.max(m),
        });
    }
    if r.len() != n || c.len() != m {
        return Err(Error::Shape {
            expected: format!("{n} row and {m} column weights"),
            got: format!("{} and {}", r.len(), c.len()),
        });
    }
    if !r.is_strictly_positive() || !c.is_strictly_positive() {
        return Err(domain("brualdi_feasible", "marginals must be strictly positive"));
    }
    require_no_empty_line(s)?;
    let comps = components(s);
    let (re, ce) = (r.entries(), c.entries());
    let row_masks: Vec<u32> = (0..n)
        .map(|i| {
            (0..m)
                .filter(|&j| s.pattern()[[i, j]])
                .fold(0u32, |acc, j| acc | (1 << j))
        })
        .collect();
    let mut violations = Vec::new();
    let mut total = 0usize;
    let mut record = |rows: Vec<usize>, cols: Vec<usize>, violations: &mut Vec<_>| {
        total += 1;
        if violations.len() < FeasibilityVerdict::MAX_LISTED {
            violations.push((rows, cols));
        }
    };
    for (rows, cols) in &comps {
        let rmass: f64 = rows.iter().map(|&i| re[i]).sum();
        let cmass: f64 = cols.iter().map(|&j| ce[j]).sum();
        if (rmass - cmass).abs() > MARGIN {
            record(rows.clone(), cols.clone(), &mut violations);
            continue;
        }
        let block_cols: u32 = cols.iter().fold(0, |acc, &j| acc | (1 << j));
        let k = rows.len();
        for mask in 1u32..(1u32 << k) - 1 {
            let mut closure = 0u32;
            let mut rsum = 0.0;
            for (b, &i) in rows.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    closure |= row_masks[i];
                    rsum += re[i];
                }
            }
            if closure == block_cols {
                continue;
            }
            let csum: f64 = (0..m).filter(|&j| closure & (1 << j) != 0).map(|j| ce[j]).sum();
            if !(csum > rsum + MARGIN) {
                let set: Vec<usize> = rows
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask & (1 << b) != 0)
                    .map(|(_, &i)| i)
                    .collect();
                let hit: Vec<usize> = (0..m).filter(|&j| closure & (1 << j) != 0).collect();
                record(set, hit, &mut violations);
            }
        }
    }
    Ok(FeasibilityVerdict {
        indecomposable: comps.len() == 1,
        brualdi_ok: Some(total == 0),
        violating_subsets: Some(violations),
    })
}

/// Verdict for any size: the subset enumeration only runs up to `n = 14`.
pub fn feasibility_verdict(
    s: &SupportPattern,
    r: &DensityVector,
    c: &DensityVector,
) -> Result<FeasibilityVerdict> {
    if s.nrows() <= MAX_BRUALDI_N && s.ncols() <= MAX_BRUALDI_N {
        return brualdi_feasible(s, r, c);
    }
    Ok(FeasibilityVerdict {
        indecomposable: indecomposable(s)?,
        brualdi_ok: None,
        violating_subsets: None,
    })
}

/// Global minimizer of `<P̃, M'>` over the `2x2` co-polytope by grid search.
///
/// The free coordinate is the density entry `P_11`; its feasible interval is
/// scanned with the given step (both endpoints included), then the best cell is
/// refined by golden-section search on its two neighbouring intervals.
pub fn measured_optimum_2x2(
    mp: &EffectiveCostMatrix,
    r: &CoSimplexVector,
    c: &CoSimplexVector,
    step: f64,
) -> Result<CouplingPlan> {
    if mp.entries().dim() != (2, 2) || r.len() != 2 || c.len() != 2 {
        return Err(Error::Shape {
            expected: "2x2".into(),
            got: format!("{:?}", mp.entries().dim()),
        });
    }
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidArgument(format!("grid step {step} outside (0, 1)")));
    }
    let ts = r.temp().t_star();
    let (rd, cd) = (r.density(), c.density());
    let (r1, c1) = (rd.entries()[0], cd.entries()[0]);
    let lo = (r1 + c1 - 1.0).max(0.0);
    let hi = r1.min(c1);
    let dens = |p: f64| {
        Array2::from_shape_vec(
            (2, 2),
            // cancellation at the interval ends leaves round-off, not mass
            vec![p, r1 - p, c1 - p, 1.0 - r1 - c1 + p]
                .into_iter()
                .map(|v| if v > 4.0 * f64::EPSILON { v } else { 0.0 })
                .collect(),
        )
        .expect("2x2")
    };
    let m = mp.entries();
    let f = |p: f64| {
        dens(p)
            .iter()
            .zip(m.iter())
            .map(|(&v, &w)| if v > 0.0 { v.powf(ts) * w } else { 0.0 })
            .sum::<f64>()
    };
    let steps = ((hi - lo) / step).ceil() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| (lo + k as f64 * step).min(hi)).collect();
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(k, &p)| (k, f(p)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let mut arg = grid[best];
    let mut val = f(arg);
    let left = grid[best.saturating_sub(1)];
    let right = grid[(best + 1).min(grid.len() - 1)];
    for (a, b) in [(left, arg), (arg, right)] {
        let (p, v) = golden_section(&f, a, b);
        if v < val {
            arg = p;
            val = v;
        }
    }
    CouplingPlan::from_density(&dens(arg), r.clone(), c.clone())
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    [(a, f(a)), (b, f(b)), (x1, f1), (x2, f2)]
        .into_iter()
        .fold((a, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn dv(x: Array1<f64>) -> DensityVector {
        DensityVector::new(x).unwrap()
    }

    #[test]
    fn support_examples() {
        let p = array![[0.0, 1e-26], [1e-24, 0.5]];
        let s = support(&p, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.to_grid(), "..\n##\n");
        assert_eq!(s.to_record().rows, vec!["00", "11"]);
        assert!(support(&p, -1.0).is_err());
    }

    #[test]
    fn diameter_examples() {
        let u = array![1.0, 2.0, 0.5];
        let v = array![3.0, 0.1, 1.0];
        let rank_one = Array2::from_shape_fn((3, 3), |(i, j)| u[i] * v[j]);
        assert!(projective_diameter(&rank_one).unwrap() < 1e-14);
        assert!(contraction_ratio(&rank_one).unwrap().abs() < 1e-14);
        let k = array![[1.0, 2.0], [2.0, 1.0]];
        assert!((projective_diameter(&k).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(projective_diameter(&array![[1.0, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let full = SupportPattern::from_bools(Array2::from_elem((3, 3), true));
        assert!(indecomposable(&full).unwrap());
        let blocks = SupportPattern::from_bools(array![
            [true, true, false],
            [true, true, false],
            [false, false, true]
        ]);
        assert!(!indecomposable(&blocks).unwrap());
        let empty_row = SupportPattern::from_bools(array![[true, true], [false, false]]);
        assert!(indecomposable(&empty_row).is_err());
    }

    #[test]
    fn brualdi_examples() {
        let full = SupportPattern::from_bools(Array2::from_elem((3, 3), true));
        let r = dv(array![0.2, 0.3, 0.5]);
        let c = dv(array![0.6, 0.1, 0.3]);
        assert_eq!(brualdi_feasible(&full, &r, &c).unwrap().brualdi_ok, Some(true));
        let eye = SupportPattern::from_bools(Array2::from_shape_fn((3, 3), |(i, j)| i == j));
        assert_eq!(brualdi_feasible(&eye, &r, &c).unwrap().brualdi_ok, Some(false));
        assert_eq!(brualdi_feasible(&eye, &r, &r).unwrap().brualdi_ok, Some(true));
        // rows 1 and 2 only reach columns 1 and 2, which carry less mass
        let upper = SupportPattern::from_bools(Array2::from_shape_fn((3, 3), |(i, j)| j >= i));
        let v = brualdi_feasible(&upper, &r, &c).unwrap();
        assert_eq!(v.brualdi_ok, Some(false));
        assert!(v.violating_subsets.unwrap().contains(&(vec![1, 2], vec![1, 2])));
        let big = SupportPattern::from_bools(Array2::from_elem((15, 15), true));
        let u = DensityVector::uniform(15);
        assert!(brualdi_feasible(&big, &u, &u).is_err());
        assert_eq!(feasibility_verdict(&big, &u, &u).unwrap().brualdi_ok, None);
    }
}
