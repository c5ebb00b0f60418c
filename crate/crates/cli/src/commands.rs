//! The five experiment commands. Trials run in parallel; rows come out ordered
//! by (variant, t, λ, trial) regardless of scheduling.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tempered_ot::analysis::{contraction_ratio, support, SupportRecord, DEFAULT_THRESHOLD};
use tempered_ot::lp_oracle::{relative_cost, solve_ot_exact, LpSolution};
use tempered_ot::measures::{sample_problem_with, trial_rng, Problem};
use tempered_ot::objectives::{expected_cost, measured_cost, measured_distance, CostMatrix};
use tempered_ot::seeds::seed;
use tempered_ot::solvers::{approximation_gap_report, tempered_ot, DualConfig, SolveConfig, SolveReport};
use tempered_ot::{Error, Temperature, Variant};

use crate::config::{Command, ExperimentConfig};
use crate::output::{write_csv, write_json, write_text};
use crate::{CliError, RunStatus};

pub fn run(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    info!("{} n={} trials={} seed={}", cfg.command, cfg.n, cfg.trials, cfg.master_seed);
    match cfg.command {
        Command::DistanceSweep => distance_sweep(cfg),
        Command::ConvergenceSweep => convergence_sweep(cfg),
        Command::SparsityMap => sparsity_map(cfg),
        Command::ContractionSweep => contraction_sweep(cfg),
        Command::Quality => quality(cfg),
    }
}

/// Instance for trial `k`: its own RNG stream, drawn at `t = 1` (density marginals
/// do not depend on `t`).
pub fn trial_problem(cfg: &ExperimentConfig, k: usize) -> Result<Problem, CliError> {
    let mut rng = trial_rng(cfg.master_seed, k as u64);
    Ok(sample_problem_with(&mut rng, cfg.n, cfg.master_seed, Temperature::one())?)
}

fn temp(t: f64) -> Result<Temperature, CliError> {
    Temperature::new(t).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    variant: Variant,
    t: f64,
    lambda: f64,
}

fn grid(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>, CliError> {
    let mut out = Vec::new();
    for variant in cfg.variants() {
        for t in cfg.t_grid_for(variant) {
            for lambda in cfg.lambda_grid_for(variant, temp(t)?) {
                out.push(GridPoint { variant, t, lambda });
            }
        }
    }
    Ok(out)
}

enum Cell<T> {
    Done(T),
    Unconverged(T),
    Infeasible(T),
}

/// Runs `f` on every trial in parallel (each returns one cell per grid point) and
/// reorders the cells point-major, trial-minor.
fn sweep<T: Send>(
    cfg: &ExperimentConfig,
    points: &[GridPoint],
    f: impl Fn(usize, &Problem) -> Result<Vec<Cell<T>>, CliError> + Sync,
) -> Result<(Vec<T>, RunStatus), CliError> {
    let per_trial: Vec<Vec<Cell<T>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let p = trial_problem(cfg, k)?;
            let cells = f(k, &p)?;
            debug_assert_eq!(cells.len(), points.len());
            Ok(cells)
        })
        .collect::<Result<_, CliError>>()?;
    let mut status = RunStatus::default();
    let mut grid: Vec<Vec<Option<T>>> = (0..points.len()).map(|_| Vec::new()).collect();
    for (k, cells) in per_trial.into_iter().enumerate() {
        for (g, cell) in cells.into_iter().enumerate() {
            status.cells += 1;
            let pt = points[g];
            let row = match cell {
                Cell::Done(r) => r,
                Cell::Unconverged(r) => {
                    status.nonconverged += 1;
                    warn!(
                        "trial {k} (seed {}, stream {k}): {} t={} lambda={} did not converge",
                        cfg.master_seed, pt.variant, pt.t, pt.lambda
                    );
                    r
                }
                Cell::Infeasible(r) => {
                    status.infeasible += 1;
                    warn!(
                        "trial {k} (seed {}, stream {k}): {} t={} lambda={} has infeasible support",
                        cfg.master_seed, pt.variant, pt.t, pt.lambda
                    );
                    r
                }
            };
            grid[g].push(Some(row));
        }
    }
    let rows = grid.into_iter().flatten().flatten().collect();
    Ok((rows, status))
}

/// `Ok(None)` when the seed support admits no coupling.
fn solve(
    m: &CostMatrix,
    p: &Problem,
    pt: GridPoint,
    cfg: &ExperimentConfig,
) -> Result<Option<SolveReport>, CliError> {
    let q = p.at_temperature(temp(pt.t)?);
    let scfg = SolveConfig::new(cfg.tol, cfg.max_iter)?;
    match tempered_ot(m, &q.r, &q.c, pt.lambda, pt.variant, &scfg) {
        Ok(rep) => Ok(Some(rep)),
        Err(Error::InfeasibleSupport { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn lp_baseline(m: &CostMatrix, p: &Problem) -> Result<LpSolution, CliError> {
    Ok(solve_ot_exact(m.entries(), &p.r.density(), &p.c.density())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub t: f64,
    pub lambda: f64,
    pub trial: usize,
    pub relative_expected_cost: f64,
    pub relative_measured_cost: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummaryRow {
    pub t: f64,
    pub lambda: f64,
    pub trials: usize,
    pub converged_trials: usize,
    pub mean_relative_expected_cost: f64,
    pub mean_relative_measured_cost: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = xs.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Relative expected and measured costs of the regularized plan against the
/// unregularized optimum (LP for expected; exact or heuristic measured distance).
fn distance_sweep(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let points = grid(cfg)?;
    let (rows, status) = sweep(cfg, &points, |k, p| {
        let m = CostMatrix::new(p.cost.clone())?;
        let lp = lp_baseline(&m, p)?;
        let mut measured_base: Vec<(f64, f64)> = Vec::new();
        let mut cells = Vec::with_capacity(points.len());
        for &pt in &points {
            let base = match measured_base.iter().find(|(t, _)| *t == pt.t) {
                Some(&(_, v)) => v,
                None => {
                    let q = p.at_temperature(temp(pt.t)?);
                    let v = measured_distance(&m, &q.r, &q.c)?.value;
                    measured_base.push((pt.t, v));
                    v
                }
            };
            let row = |e: f64, ms: f64, converged| DistanceRow {
                t: pt.t,
                lambda: pt.lambda,
                trial: k,
                relative_expected_cost: e,
                relative_measured_cost: ms,
                converged,
            };
            cells.push(match solve(&m, p, pt, cfg)? {
                None => Cell::Infeasible(row(f64::NAN, f64::NAN, false)),
                Some(rep) => {
                    let e = relative_cost(expected_cost(&rep.plan, &m)?, &lp)?;
                    let ms = (measured_cost(&rep.plan, &m)? - base) / base;
                    if rep.converged {
                        Cell::Done(row(e, ms, true))
                    } else {
                        Cell::Unconverged(row(e, ms, false))
                    }
                }
            });
        }
        Ok(cells)
    })?;
    let summary: Vec<DistanceSummaryRow> = rows
        .chunks(cfg.trials)
        .map(|chunk| DistanceSummaryRow {
            t: chunk[0].t,
            lambda: chunk[0].lambda,
            trials: chunk.len(),
            converged_trials: chunk.iter().filter(|r| r.converged).count(),
            mean_relative_expected_cost: mean(chunk.iter().map(|r| r.relative_expected_cost)),
            mean_relative_measured_cost: mean(chunk.iter().map(|r| r.relative_measured_cost)),
        })
        .collect();
    write_csv(&cfg.output_path, &cfg.command.schema(), &rows)?;
    write_csv(
        &cfg.sibling_path(".summary.csv"),
        &format!("{}-summary/1", cfg.command),
        &summary,
    )?;
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub lambda: f64,
    pub trial: usize,
    /// Empty when the seed support is infeasible.
    pub iterations: Option<usize>,
    pub relative_expected_cost: f64,
}

fn convergence_sweep(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let points = grid(cfg)?;
    let (rows, status) = sweep(cfg, &points, |k, p| {
        let m = CostMatrix::new(p.cost.clone())?;
        let lp = lp_baseline(&m, p)?;
        points
            .iter()
            .map(|&pt| {
                let row = |iterations, e| ConvergenceRow {
                    t: pt.t,
                    lambda: pt.lambda,
                    trial: k,
                    iterations,
                    relative_expected_cost: e,
                };
                Ok(match solve(&m, p, pt, cfg)? {
                    None => Cell::Infeasible(row(None, f64::NAN)),
                    Some(rep) => {
                        let r = row(Some(rep.iterations), relative_cost(expected_cost(&rep.plan, &m)?, &lp)?);
                        if rep.converged {
                            Cell::Done(r)
                        } else {
                            Cell::Unconverged(r)
                        }
                    }
                })
            })
            .collect()
    })?;
    write_csv(&cfg.output_path, &cfg.command.schema(), &rows)?;
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub variant: Variant,
    pub t: f64,
    pub lambda: f64,
    pub trial: usize,
    pub kappa: f64,
}

/// `κ(K̃^{1/t*})` of each seed; a seed with zeros is a domain error.
fn contraction_sweep(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let points = grid(cfg)?;
    let (rows, status) = sweep(cfg, &points, |k, p| {
        let m = CostMatrix::new(p.cost.clone())?;
        points
            .iter()
            .map(|&pt| {
                let q = p.at_temperature(temp(pt.t)?);
                let s = seed(pt.variant, &m, &q.r, &q.c, pt.lambda)?;
                if !s.is_positive() {
                    return Err(CliError::Core(Error::Domain {
                        op: "contraction_sweep",
                        detail: format!("{} seed has zeros at t = {}, lambda = {}", pt.variant, pt.t, pt.lambda),
                    }));
                }
                Ok(Cell::Done(ContractionRow {
                    variant: pt.variant,
                    t: pt.t,
                    lambda: pt.lambda,
                    trial: k,
                    kappa: contraction_ratio(&s.kernel())?,
                }))
            })
            .collect()
    })?;
    write_csv(&cfg.output_path, &cfg.command.schema(), &rows)?;
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub variant: Variant,
    pub t: f64,
    pub lambda: f64,
    pub trial: usize,
    pub approximation_gap: f64,
    /// Both the Sinkhorn reduction and the exact dual solver converged.
    pub converged: bool,
}

fn quality(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let points = grid(cfg)?;
    let scfg = SolveConfig::new(cfg.tol, cfg.max_iter)?;
    let dcfg = DualConfig {
        max_iter: cfg.max_iter,
        ..DualConfig::default()
    };
    let (rows, status) = sweep(cfg, &points, |k, p| {
        let m = CostMatrix::new(p.cost.clone())?;
        points
            .iter()
            .map(|&pt| {
                let q = p.at_temperature(temp(pt.t)?);
                let row = |gap, converged| QualityRow {
                    variant: pt.variant,
                    t: pt.t,
                    lambda: pt.lambda,
                    trial: k,
                    approximation_gap: gap,
                    converged,
                };
                Ok(
                    match approximation_gap_report(&m, &q.r, &q.c, pt.lambda, pt.variant, &scfg, &dcfg) {
                        Ok(g) if g.converged() => Cell::Done(row(g.gap, true)),
                        Ok(g) => Cell::Unconverged(row(g.gap, false)),
                        Err(Error::InfeasibleSupport { .. }) => Cell::Infeasible(row(f64::NAN, false)),
                        Err(e) => return Err(e.into()),
                    },
                )
            })
            .collect()
    })?;
    write_csv(&cfg.output_path, &cfg.command.schema(), &rows)?;
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityEntry {
    pub variant: Variant,
    pub t: f64,
    pub lambda: f64,
    /// `ok`, `unconverged` or `infeasible`.
    pub status: String,
    /// Nonzeros of the seed, which bounds the plan support.
    pub seed_nnz: usize,
    /// Entries of the tilde plan above the threshold; absent when infeasible.
    pub nnz: Option<usize>,
    pub support: Option<SupportRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityTrial {
    pub trial: usize,
    pub lp_nnz: usize,
    pub lp_support: SupportRecord,
    pub maps: Vec<SparsityEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub schema: String,
    pub n: usize,
    pub master_seed: u64,
    pub threshold: f64,
    pub trials: Vec<SparsityTrial>,
}

impl SparsityReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("# schema: {}\n", self.schema);
        for tr in &self.trials {
            s += &format!("\ntrial {} lp nnz={}\n{}", tr.trial, tr.lp_nnz, grid_text(&tr.lp_support));
            for e in &tr.maps {
                s += &format!(
                    "\ntrial {} {} t={} lambda={} status={} nnz={}\n",
                    tr.trial,
                    e.variant,
                    e.t,
                    e.lambda,
                    e.status,
                    e.nnz.map_or_else(|| "-".to_owned(), |v| v.to_string())
                );
                if let Some(sup) = &e.support {
                    s += &grid_text(sup);
                }
            }
        }
        s
    }
}

fn grid_text(rec: &SupportRecord) -> String {
    rec.rows
        .iter()
        .map(|r| r.chars().map(|c| if c == '1' { '#' } else { '.' }).collect::<String>() + "\n")
        .collect()
}

fn sparsity_map(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let points = grid(cfg)?;
    let mut lp_records: Vec<Option<(usize, SupportRecord)>> = vec![None; cfg.trials];
    let (entries, status) = sweep(cfg, &points, |_, p| {
        let m = CostMatrix::new(p.cost.clone())?;
        points
            .iter()
            .map(|&pt| {
                let q = p.at_temperature(temp(pt.t)?);
                let seed_nnz = seed(pt.variant, &m, &q.r, &q.c, pt.lambda)?.zero_pattern().iter().filter(|z| !**z).count();
                let entry = |status: &str, sup: Option<SupportRecord>| SparsityEntry {
                    variant: pt.variant,
                    t: pt.t,
                    lambda: pt.lambda,
                    status: status.to_owned(),
                    seed_nnz,
                    nnz: sup.as_ref().map(|s| s.nnz),
                    support: sup,
                };
                Ok(match solve(&m, p, pt, cfg)? {
                    None => Cell::Infeasible(entry("infeasible", None)),
                    Some(rep) => {
                        let sup = support(rep.plan.entries(), DEFAULT_THRESHOLD)?.to_record();
                        if rep.converged {
                            Cell::Done(entry("ok", Some(sup)))
                        } else {
                            Cell::Unconverged(entry("unconverged", Some(sup)))
                        }
                    }
                })
            })
            .collect()
    })?;
    for (k, slot) in lp_records.iter_mut().enumerate() {
        let p = trial_problem(cfg, k)?;
        let lp = lp_baseline(&CostMatrix::new(p.cost.clone())?, &p)?;
        let sup = support(&lp.plan, DEFAULT_THRESHOLD)?;
        *slot = Some((sup.nnz(), sup.to_record()));
    }
    // entries are point-major; regroup by trial
    let mut trials: Vec<SparsityTrial> = lp_records
        .into_iter()
        .enumerate()
        .map(|(k, rec)| {
            let (lp_nnz, lp_support) = rec.expect("filled above");
            SparsityTrial {
                trial: k,
                lp_nnz,
                lp_support,
                maps: Vec::new(),
            }
        })
        .collect();
    for (idx, e) in entries.into_iter().enumerate() {
        trials[idx % cfg.trials].maps.push(e);
    }
    let report = SparsityReport {
        schema: cfg.command.schema(),
        n: cfg.n,
        master_seed: cfg.master_seed,
        threshold: DEFAULT_THRESHOLD,
        trials,
    };
    write_json(&cfg.output_path, &report)?;
    write_text(&cfg.sibling_path(".txt"), &report.to_text())?;
    Ok(status)
}
