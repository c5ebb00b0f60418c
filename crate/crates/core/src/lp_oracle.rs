//! Exact unregularized transport at desk scale.
//!
//! [`solve_ot_exact`] runs a transportation network simplex on the complete
//! bipartite graph: northwest-corner start, potentials read off the basis tree,
//! Dantzig entering rule with a lowest-index fallback (Bland) once degenerate
//! pivots pile up. [`enumerate_vertices`] lists every basic feasible solution by
//! brute force for tiny `n`; it shares no code path with the simplex.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};

use crate::error::{domain, Error, Result};
use crate::measures::DensityVector;

pub const MAX_N: usize = 256;
pub const MAX_ENUMERATION_N: usize = 4;

/// Optimal vertex of the transport polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub plan: Array2<f64>,
    pub objective: f64,
    /// Number of strictly positive entries of `plan`.
    pub basis_size: usize,
    /// Dual potentials: `u_i + v_j <= M_ij`, with equality on the basis.
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub basis: Vec<(usize, usize)>,
    pub pivots: usize,
}

/// Northwest-corner basic solution visiting rows and columns in the given orders.
///
/// Always returns exactly `2n - 1` cells (zero flows included), forming a spanning tree.
pub(crate) fn northwest_corner(
    r: &Array1<f64>,
    c: &Array1<f64>,
    row_order: &[usize],
    col_order: &[usize],
) -> Vec<(usize, usize, f64)> {
    let n = r.len();
    let mut supply: Vec<f64> = row_order.iter().map(|&i| r[i]).collect();
    let mut demand: Vec<f64> = col_order.iter().map(|&j| c[j]).collect();
    let (mut a, mut b) = (0, 0);
    let mut cells = Vec::with_capacity(2 * n - 1);
    while a < n && b < n {
        let row_exhausted = supply[a] <= demand[b];
        let x = if row_exhausted { supply[a] } else { demand[b] };
        cells.push((row_order[a], col_order[b], x));
        if row_exhausted {
            demand[b] = (demand[b] - x).max(0.0);
            supply[a] = 0.0;
        } else {
            supply[a] = (supply[a] - x).max(0.0);
            demand[b] = 0.0;
        }
        if a == n - 1 {
            b += 1;
        } else if b == n - 1 || row_exhausted {
            a += 1;
        } else {
            b += 1;
        }
    }
    cells
}

/// Flows on a spanning tree of `K_{n,n}` meeting the marginals, by leaf elimination.
///
/// Returns `None` when `cells` is not a spanning tree.
pub(crate) fn tree_flows(cells: &[(usize, usize)], r: &[f64], c: &[f64]) -> Option<Vec<f64>> {
    let n = r.len();
    if cells.len() != 2 * n - 1 {
        return None;
    }
    // nodes 0..n are rows, n..2n are columns
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
    for (k, &(i, j)) in cells.iter().enumerate() {
        incident[i].push(k);
        incident[n + j].push(k);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    if degree.contains(&0) {
        return None;
    }
    let mut residual: Vec<f64> = r.iter().chain(c.iter()).copied().collect();
    let mut done = vec![false; cells.len()];
    let mut flows = vec![0.0; cells.len()];
    let mut queue: VecDeque<usize> = (0..2 * n).filter(|&v| degree[v] == 1).collect();
    let mut assigned = 0;
    while let Some(node) = queue.pop_front() {
        if degree[node] != 1 {
            continue;
        }
        let Some(&k) = incident[node].iter().find(|&&k| !done[k]) else {
            continue;
        };
        let (i, j) = cells[k];
        let other = if node < n { n + j } else { i };
        let f = residual[node];
        flows[k] = f;
        done[k] = true;
        assigned += 1;
        residual[node] = 0.0;
        residual[other] -= f;
        degree[node] = 0;
        degree[other] -= 1;
        if degree[other] == 1 {
            queue.push_back(other);
        }
    }
    (assigned == cells.len()).then_some(flows)
}

fn check_marginals(r: &DensityVector, c: &DensityVector) -> Result<usize> {
    let n = r.len();
    if c.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} column weights"),
            got: format!("{}", c.len()),
        });
    }
    if !r.is_strictly_positive() || !c.is_strictly_positive() {
        return Err(domain("solve_ot_exact", "marginals must be strictly positive"));
    }
    Ok(n)
}

/// Minimizes `<P, M>` over the transport polytope `U_n(r, c)`.
pub fn solve_ot_exact(cost: &Array2<f64>, r: &DensityVector, c: &DensityVector) -> Result<LpSolution> {
    let n = check_marginals(r, c)?;
    if n > MAX_N {
        return Err(Error::SizeGuard {
            op: "solve_ot_exact",
            limit: MAX_N,
            n,
        });
    }
    if cost.dim() != (n, n) {
        return Err(Error::Shape {
            expected: format!("{n}x{n}"),
            got: format!("{:?}", cost.dim()),
        });
    }
    let order: Vec<usize> = (0..n).collect();
    let start = northwest_corner(r.entries(), c.entries(), &order, &order);
    let mut flow = Array2::<f64>::zeros((n, n));
    let mut basic = Array2::<bool>::from_elem((n, n), false);
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(2 * n - 1);
    for &(i, j, f) in &start {
        flow[[i, j]] = f;
        basic[[i, j]] = true;
        basis.push((i, j));
    }

    let scale = cost.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let eps = 1e-12 * (1.0 + scale);
    let max_pivots = 50 * n * n + 1000;
    let mut u = Array1::<f64>::zeros(n);
    let mut v = Array1::<f64>::zeros(n);
    let mut pivots = 0;
    let mut degenerate_run = 0;

    loop {
        potentials(cost, &basis, &mut u, &mut v);
        let bland = degenerate_run > 2 * n;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -eps;
        'scan: for i in 0..n {
            for j in 0..n {
                if basic[[i, j]] {
                    continue;
                }
                let d = cost[[i, j]] - u[i] - v[j];
                if d < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = d;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            break;
        };
        if pivots >= max_pivots {
            return Err(domain("solve_ot_exact", "pivot limit reached"));
        }
        pivots += 1;

        let path = tree_path(&basis, n, ei, ej);
        // path runs from row `ei` to column `ej`; its last cell takes -θ
        let m = path.len();
        let minus: Vec<(usize, usize)> = (0..m)
            .filter(|k| (m - 1 - k).is_multiple_of(2))
            .map(|k| path[k])
            .collect();
        let plus: Vec<(usize, usize)> = (0..m)
            .filter(|k| (m - 1 - k) % 2 == 1)
            .map(|k| path[k])
            .collect();
        let theta = minus
            .iter()
            .map(|&(i, j)| flow[[i, j]])
            .fold(f64::INFINITY, f64::min);
        let leaving = *minus
            .iter()
            .filter(|&&(i, j)| flow[[i, j]] == theta)
            .min()
            .expect("cycle has a minus cell");

        for &(i, j) in &plus {
            flow[[i, j]] += theta;
        }
        for &(i, j) in &minus {
            flow[[i, j]] = (flow[[i, j]] - theta).max(0.0);
        }
        flow[[ei, ej]] = theta;
        flow[leaving] = 0.0;
        basic[leaving] = false;
        basic[[ei, ej]] = true;
        let pos = basis.iter().position(|&b| b == leaving).unwrap();
        basis[pos] = (ei, ej);

        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
    }

    // recompute flows from the final tree to shed pivot drift
    let flows = tree_flows(&basis, r.entries().as_slice().unwrap(), c.entries().as_slice().unwrap())
        .ok_or_else(|| domain("solve_ot_exact", "basis lost its tree structure"))?;
    let mut plan = Array2::<f64>::zeros((n, n));
    for (&(i, j), &f) in basis.iter().zip(&flows) {
        plan[[i, j]] = f.max(0.0);
    }
    let objective = (&plan * cost).sum();
    let basis_size = plan.iter().filter(|&&x| x > 0.0).count();
    Ok(LpSolution {
        plan,
        objective,
        basis_size,
        u,
        v,
        basis,
        pivots,
    })
}

fn potentials(cost: &Array2<f64>, basis: &[(usize, usize)], u: &mut Array1<f64>, v: &mut Array1<f64>) {
    let n = u.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
    for &(i, j) in basis {
        adj[i].push(n + j);
        adj[n + j].push(i);
    }
    let mut seen = vec![false; 2 * n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    u[0] = 0.0;
    while let Some(a) = queue.pop_front() {
        for &b in &adj[a] {
            if seen[b] {
                continue;
            }
            seen[b] = true;
            if a < n {
                v[b - n] = cost[[a, b - n]] - u[a];
            } else {
                u[b] = cost[[b, a - n]] - v[a - n];
            }
            queue.push_back(b);
        }
    }
}

/// Cells of the tree path from row `i` to column `j`, in order.
fn tree_path(basis: &[(usize, usize)], n: usize, i: usize, j: usize) -> Vec<(usize, usize)> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
    for &(a, b) in basis {
        adj[a].push(n + b);
        adj[n + b].push(a);
    }
    let mut parent = vec![usize::MAX; 2 * n];
    parent[i] = i;
    let mut queue = VecDeque::from([i]);
    while let Some(a) = queue.pop_front() {
        if a == n + j {
            break;
        }
        for &b in &adj[a] {
            if parent[b] == usize::MAX {
                parent[b] = a;
                queue.push_back(b);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = n + j;
    while node != i {
        let p = parent[node];
        path.push(if p < n { (p, node - n) } else { (node, p - n) });
        node = p;
    }
    path.reverse();
    path
}

/// Every basic feasible solution of `U_n(r, c)`, enumerated over spanning trees.
///
/// Degenerate vertices may appear more than once.
pub fn enumerate_vertices(r: &DensityVector, c: &DensityVector) -> Result<Vec<Array2<f64>>> {
    let n = r.len();
    if c.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} column weights"),
            got: format!("{}", c.len()),
        });
    }
    if n > MAX_ENUMERATION_N {
        return Err(Error::SizeGuard {
            op: "enumerate_vertices",
            limit: MAX_ENUMERATION_N,
            n,
        });
    }
    let rs = r.entries().to_vec();
    let cs = c.entries().to_vec();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = 2 * n - 1;
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let chosen: Vec<(usize, usize)> = idx.iter().map(|&a| cells[a]).collect();
        if let Some(flows) = tree_flows(&chosen, &rs, &cs) {
            if flows.iter().all(|&f| f >= -1e-12) {
                let mut plan = Array2::zeros((n, n));
                for (&(i, j), &f) in chosen.iter().zip(&flows) {
                    plan[[i, j]] = f.max(0.0);
                }
                out.push(plan);
            }
        }
        // next combination
        let total = cells.len();
        let mut p = k;
        while p > 0 && idx[p - 1] == total - k + p - 1 {
            p -= 1;
        }
        if p == 0 {
            break;
        }
        idx[p - 1] += 1;
        for q in p..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
    Ok(out)
}

/// `(value - d_M) / d_M` against an exact baseline.
pub fn relative_cost(value: f64, baseline: &LpSolution) -> Result<f64> {
    if baseline.objective <= 0.0 {
        return Err(Error::DegenerateBaseline(baseline.objective));
    }
    Ok((value - baseline.objective) / baseline.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn density(x: Array1<f64>) -> DensityVector {
        DensityVector::new(x).unwrap()
    }

    #[test]
    fn northwest_corner_is_a_spanning_tree() {
        let r = array![0.2, 0.3, 0.5];
        let c = array![0.5, 0.25, 0.25];
        let cells = northwest_corner(&r, &c, &[0, 1, 2], &[0, 1, 2]);
        assert_eq!(cells.len(), 5);
        let coords: Vec<_> = cells.iter().map(|&(i, j, _)| (i, j)).collect();
        let flows = tree_flows(&coords, r.as_slice().unwrap(), c.as_slice().unwrap()).unwrap();
        for (a, &(_, _, f)) in flows.iter().zip(&cells) {
            assert!((a - f).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_cost_returns_northwest_corner() {
        let r = density(array![0.2, 0.3, 0.5]);
        let c = density(array![0.5, 0.25, 0.25]);
        let sol = solve_ot_exact(&Array2::zeros((3, 3)), &r, &c).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.pivots, 0);
        assert_eq!(sol.plan[[0, 0]], 0.2);
        assert_eq!(sol.plan[[2, 2]], 0.25);
    }

    #[test]
    fn zero_cost_matching() {
        let r = density(array![0.5, 0.5]);
        let m = array![[0.0, 1.0], [1.0, 0.0]];
        let sol = solve_ot_exact(&m, &r, &r).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.plan, array![[0.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn guards() {
        let r = density(array![1.0, 0.0]);
        let c = density(array![0.5, 0.5]);
        assert!(solve_ot_exact(&Array2::zeros((2, 2)), &r, &c).is_err());
        let u = DensityVector::uniform(5);
        assert!(matches!(
            enumerate_vertices(&u, &u),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn relative_cost_examples() {
        let r = density(array![0.5, 0.5]);
        let m = array![[1.0, 2.0], [2.0, 1.0]];
        let sol = solve_ot_exact(&m, &r, &r).unwrap();
        assert_eq!(relative_cost(sol.objective, &sol).unwrap(), 0.0);
        let zero = solve_ot_exact(&Array2::zeros((2, 2)), &r, &r).unwrap();
        assert!(matches!(
            relative_cost(1.0, &zero),
            Err(Error::DegenerateBaseline(_))
        ));
    }

    #[test]
    fn vertex_count_of_uniform_two_by_two() {
        let u = DensityVector::uniform(2);
        let vs = enumerate_vertices(&u, &u).unwrap();
        // the two permutation plans, each reachable from two degenerate bases
        assert!(vs.iter().any(|p| p == array![[0.5, 0.0], [0.0, 0.5]]));
        assert!(vs.iter().any(|p| p == array![[0.0, 0.5], [0.5, 0.0]]));
    }
}
