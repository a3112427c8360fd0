//! Constrained maximization of `r2` over phase plans.
//!
//! `β1, β2` are not searched: at fixed `ρ` and `P_{X3 T}` the rates are
//! linear in `β`, so the largest admissible values follow in closed form from
//! the key budgets. What remains (phase weights, non-covert input laws,
//! mixing ratios, amplitudes) is searched by multi-start Nelder–Mead under an
//! exact penalty for the `r1` and `R3` constraints.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Dmc;
use crate::error::{Error, Result};
use crate::infotheory::LogUnit;
use crate::optim::{nelder_mead, Halton, NelderMeadOptions};
use crate::rng::{stream, Domain};

use super::plan::{PhasePlan, MAX_PHASES};
use super::rates::{PlanStats, RateModel, RateTuple};

const PENALTY: f64 = 1e3;
/// Constraints are targeted with this much headroom so that the returned
/// plan passes a strict feasibility check after re-evaluation.
const MARGIN: f64 = 1e-9;
const BETA_SHRINK: f64 = 1.0 - 1e-12;
/// A plan with more phases must beat the incumbent by this relative amount.
const PHASE_GAIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub r1_min: f64,
    #[serde(rename = "R3_min")]
    pub r3_min: f64,
    pub k1_max: f64,
    pub k2_max: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            r1_min: 0.0,
            r3_min: 0.0,
            k1_max: f64::INFINITY,
            k2_max: f64::INFINITY,
        }
    }
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r1_min", self.r1_min),
            ("R3_min", self.r3_min),
            ("k1_max", self.k1_max),
            ("k2_max", self.k2_max),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name}={v} must be non-negative")));
            }
        }
        if !self.r1_min.is_finite() || !self.r3_min.is_finite() {
            return Err(Error::InvalidArgument("lower bounds must be finite".into()));
        }
        Ok(())
    }

    /// Strict check of a computed rate tuple.
    pub fn admits(&self, r: &RateTuple) -> bool {
        r.r1 >= self.r1_min && r.r3 >= self.r3_min && r.k1 <= self.k1_max && r.k2 <= self.k2_max
    }
}

/// How the non-covert input law is chosen in every phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum X3Mode {
    Optimize,
    Fix(usize),
}

#[derive(Debug, Clone)]
pub struct OptBudget {
    /// Phases are searched for `τ = 1..=max_phases`.
    pub max_phases: usize,
    /// Low-discrepancy starts per `τ`.
    pub restarts: usize,
    /// Nelder–Mead evaluation cap per run, per search dimension.
    pub evals_per_dim: usize,
    /// Restarts of the simplex from each run's optimum.
    pub polish_rounds: usize,
    pub seed: u64,
    /// Plans evaluated and refined before the restarts.
    pub warm_starts: Vec<PhasePlan>,
}

impl Default for OptBudget {
    fn default() -> Self {
        Self {
            max_phases: MAX_PHASES,
            restarts: 64,
            evals_per_dim: 200,
            polish_rounds: 2,
            seed: 0,
            warm_starts: Vec::new(),
        }
    }
}

impl OptBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_phases == 0 || self.max_phases > MAX_PHASES {
            return Err(Error::InvalidArgument(format!(
                "max_phases={} outside 1..={MAX_PHASES}",
                self.max_phases
            )));
        }
        if self.restarts == 0 && self.warm_starts.is_empty() {
            return Err(Error::InvalidArgument("budget has no starting points".into()));
        }
        if self.evals_per_dim == 0 {
            return Err(Error::InvalidArgument("evals_per_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchBest {
    pub plan: PhasePlan,
    pub rates: RateTuple,
    /// Objective evaluations spent by the whole search.
    pub evals: u64,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("no feasible plan found (smallest constraint violation {violation:.3e})")]
    Infeasible { violation: f64 },
    #[error("evaluation budget exhausted before a feasible plan was found (violation {violation:.3e}, {evals} evaluations)")]
    BudgetExhausted { violation: f64, evals: u64 },
}

/// Parameter layout for `tau` phases. Per phase: weight logit, mixing angle,
/// amplitude root, then `|X3|` input logits unless the input is fixed.
#[derive(Debug, Clone, Copy)]
struct Layout {
    tau: usize,
    k: usize,
    fixed: Option<usize>,
}

impl Layout {
    fn block(&self) -> usize {
        3 + if self.fixed.is_some() { 0 } else { self.k }
    }

    fn dim(&self) -> usize {
        self.tau * self.block()
    }
}

#[derive(Debug, Clone)]
struct Decoded {
    p_t: Vec<f64>,
    p_x3: Vec<f64>,
    rho1: Vec<f64>,
    rho2: Vec<f64>,
    scratch: Vec<f64>,
}

impl Decoded {
    fn new(l: &Layout, y_size: usize) -> Self {
        Self {
            p_t: vec![0.0; l.tau],
            p_x3: vec![0.0; l.tau * l.k],
            rho1: vec![0.0; l.tau],
            rho2: vec![0.0; l.tau],
            scratch: vec![0.0; y_size],
        }
    }
}

fn softmax_into(logits: impl Iterator<Item = f64> + Clone, out: &mut [f64]) {
    let m = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(logits) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

fn decode(l: &Layout, x: &[f64], out: &mut Decoded) {
    let b = l.block();
    softmax_into((0..l.tau).map(|t| x[t * b]), &mut out.p_t);
    let mut mass = 0.0;
    for t in 0..l.tau {
        let blk = &x[t * b..(t + 1) * b];
        let lam = 0.5 * (1.0 + blk[1].sin());
        let a = blk[2] * blk[2];
        out.rho1[t] = a * lam;
        out.rho2[t] = a * (1.0 - lam);
        mass += out.p_t[t] * a;
        let px = &mut out.p_x3[t * l.k..(t + 1) * l.k];
        match l.fixed {
            Some(x3) => {
                px.iter_mut().for_each(|v| *v = 0.0);
                px[x3] = 1.0;
            }
            None => softmax_into(blk[3..].iter().copied(), px),
        }
    }
    if mass > 0.0 && mass.is_finite() {
        out.rho1.iter_mut().chain(out.rho2.iter_mut()).for_each(|r| *r /= mass);
    }
}

/// Inverse of [`decode`] up to the scale of `ρ`.
fn encode(l: &Layout, plan: &PhasePlan) -> Option<Vec<f64>> {
    if plan.tau != l.tau || plan.x3_size() != l.k {
        return None;
    }
    let b = l.block();
    let log = |p: f64| if p > 0.0 { p.ln().max(-30.0) } else { -30.0 };
    let mut x = vec![0.0; l.dim()];
    for t in 0..l.tau {
        let blk = &mut x[t * b..(t + 1) * b];
        blk[0] = log(plan.p_t[t]);
        let a = plan.rho1[t] + plan.rho2[t];
        let lam = if a > 0.0 { plan.rho1[t] / a } else { 0.5 };
        blk[1] = (2.0 * lam - 1.0).clamp(-1.0, 1.0).asin();
        blk[2] = a.sqrt();
        match l.fixed {
            Some(x3) => {
                if plan.p_x3_given_t[t][x3] != 1.0 {
                    return None;
                }
            }
            None => {
                for (v, &p) in blk[3..].iter_mut().zip(&plan.p_x3_given_t[t]) {
                    *v = log(p);
                }
            }
        }
    }
    Some(x)
}

fn start_from_unit(l: &Layout, u: &[f64]) -> Vec<f64> {
    let b = l.block();
    u.iter()
        .enumerate()
        .map(|(i, &v)| match i % b {
            0 => 6.0 * (v - 0.5),
            1 => std::f64::consts::PI * (v - 0.5),
            2 => 0.2 + 1.6 * v,
            _ => 6.0 * (v - 0.5),
        })
        .collect()
}

/// One new phase appended to a `τ-1` optimum, with small weight.
fn embed(prev: &Layout, x: &[f64]) -> Vec<f64> {
    let b = prev.block();
    let heaviest = (0..prev.tau)
        .max_by(|&i, &j| x[i * b].total_cmp(&x[j * b]).then(j.cmp(&i)))
        .unwrap_or(0);
    let mut y = x.to_vec();
    let mut extra = x[heaviest * b..(heaviest + 1) * b].to_vec();
    extra[0] -= 8.0;
    extra[1] = -extra[1];
    y.extend(extra);
    y
}

#[derive(Debug, Clone, Copy)]
struct Assessment {
    r2: f64,
    beta1: f64,
    beta2: f64,
    violation: f64,
}

fn largest_beta(k: f64, k_max: f64) -> f64 {
    if k > k_max {
        k_max / k * BETA_SHRINK
    } else {
        1.0
    }
}

fn assess(stats: &PlanStats, c: &Constraints, margin: f64) -> Assessment {
    let base = stats.rates(1.0, 1.0);
    let beta1 = largest_beta(base.k1, c.k1_max);
    let beta2 = largest_beta(base.k2, c.k2_max);
    let r1 = if beta1 == 0.0 { 0.0 } else { beta1 * base.r1 };
    let r2 = if beta2 == 0.0 { 0.0 } else { beta2 * base.r2 };
    let pad = |target: f64| if target > 0.0 { target + margin } else { target };
    let violation = (pad(c.r1_min) - r1).max(0.0) + (pad(c.r3_min) - base.r3).max(0.0);
    Assessment {
        r2,
        beta1,
        beta2,
        violation,
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    plan: PhasePlan,
    rates: RateTuple,
    flat: Vec<f64>,
}

fn flat_plan(p: &PhasePlan) -> Vec<f64> {
    let mut v = p.p_t.clone();
    v.extend(p.p_x3_given_t.iter().flatten());
    v.extend(&p.rho1);
    v.extend(&p.rho2);
    v.extend([p.beta1, p.beta2]);
    v
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// `Greater` if `a` is the better candidate.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.rates
        .r2
        .total_cmp(&b.rates.r2)
        .then_with(|| lex(&b.flat, &a.flat))
}

struct Run {
    x: Vec<f64>,
    evals: u64,
    converged: bool,
}

fn run_start(
    model: &RateModel,
    c: &Constraints,
    l: &Layout,
    x0: Vec<f64>,
    budget: &OptBudget,
) -> Run {
    let mut dec = Decoded::new(l, model.y_size());
    let mut objective = |x: &[f64]| {
        decode(l, x, &mut dec);
        let s = model.stats_raw(&dec.p_t, &dec.p_x3, &dec.rho1, &dec.rho2, &mut dec.scratch);
        let a = assess(&s, c, MARGIN);
        -a.r2 + PENALTY * a.violation
    };
    let max_evals = budget.evals_per_dim * l.dim().max(1);
    let mut opts = NelderMeadOptions {
        max_evals,
        ..Default::default()
    };
    let mut m = nelder_mead(&mut objective, &x0, &opts);
    let mut evals = m.evals as u64;
    let mut converged = m.converged;
    for round in 0..budget.polish_rounds {
        opts.step = 0.1 / (round as f64 + 1.0);
        let p = nelder_mead(&mut objective, &m.x, &opts);
        evals += p.evals as u64;
        converged = p.converged;
        let gain = m.value - p.value;
        if p.value <= m.value {
            m = p;
        }
        if !(gain > 1e-13) {
            break;
        }
    }
    Run {
        x: m.x,
        evals,
        converged,
    }
}

/// Turns a search point into a validated plan and re-evaluates it through
/// the public rate path. Returns the plan and its strict violation.
fn realize(model: &RateModel, c: &Constraints, l: &Layout, x: &[f64]) -> Option<(Candidate, f64)> {
    let mut dec = Decoded::new(l, model.y_size());
    decode(l, x, &mut dec);
    let s = model.stats_raw(&dec.p_t, &dec.p_x3, &dec.rho1, &dec.rho2, &mut dec.scratch);
    let a = assess(&s, c, 0.0);
    let plan = PhasePlan::new(
        dec.p_t.clone(),
        dec.p_x3.chunks(l.k).map(<[f64]>::to_vec).collect(),
        dec.rho1.clone(),
        dec.rho2.clone(),
        a.beta1,
        a.beta2,
    )
    .ok()?;
    let rates = model.rate_tuple(&plan).ok()?;
    let violation = if c.admits(&rates) {
        0.0
    } else {
        a.violation.max(f64::MIN_POSITIVE)
    };
    let flat = flat_plan(&plan);
    Some((Candidate { plan, rates, flat }, violation))
}

fn check_mode(model: &RateModel, mode: X3Mode) -> Result<()> {
    if let X3Mode::Fix(x3) = mode {
        if x3 >= model.x3_size() {
            return Err(Error::OutOfRange(format!("fixed x3={x3}")));
        }
    }
    Ok(())
}

/// Largest `r2` over plans meeting `constraints`, searching `τ = 1..` up to
/// the budget's phase limit.
pub fn max_r2(
    d: &Dmc,
    unit: LogUnit,
    constraints: &Constraints,
    mode: X3Mode,
    budget: &OptBudget,
) -> std::result::Result<SearchBest, SearchError> {
    let model = RateModel::new(d, unit);
    max_r2_with(&model, constraints, mode, budget)
}

pub fn max_r2_with(
    model: &RateModel,
    c: &Constraints,
    mode: X3Mode,
    budget: &OptBudget,
) -> std::result::Result<SearchBest, SearchError> {
    c.validate()?;
    budget.validate()?;
    check_mode(model, mode)?;
    for w in &budget.warm_starts {
        w.validate_for(model.x3_size())?;
    }
    let fixed = match mode {
        X3Mode::Optimize => None,
        X3Mode::Fix(x3) => Some(x3),
    };

    let mut best: Option<Candidate> = None;
    let mut least_violation = f64::INFINITY;
    let mut total_evals = 0u64;
    let mut all_converged = true;
    let mut prev: Option<(Layout, Vec<f64>)> = None;

    for tau in 1..=budget.max_phases {
        let l = Layout {
            tau,
            k: model.x3_size(),
            fixed,
        };
        let mut starts: Vec<Vec<f64>> = budget.warm_starts.iter().filter_map(|p| encode(&l, p)).collect();
        if let Some((pl, px)) = &prev {
            starts.push(embed(pl, px));
        }
        let mut rng = stream(budget.seed, Domain::Search, tau as u64);
        if l.dim() <= 64 {
            let mut h = Halton::new(l.dim(), &mut rng);
            starts.extend((0..budget.restarts).map(|_| start_from_unit(&l, &h.next_point())));
        } else {
            starts.extend((0..budget.restarts).map(|_| {
                let u: Vec<f64> = (0..l.dim()).map(|_| rng.gen()).collect();
                start_from_unit(&l, &u)
            }));
        }

        let runs: Vec<Run> = starts
            .into_par_iter()
            .map(|x0| run_start(model, c, &l, x0, budget))
            .collect();

        let mut tau_best: Option<(Candidate, Vec<f64>)> = None;
        for run in runs {
            total_evals += run.evals;
            all_converged &= run.converged;
            let Some((cand, violation)) = realize(model, c, &l, &run.x) else {
                continue;
            };
            if violation > 0.0 {
                least_violation = least_violation.min(violation);
                continue;
            }
            let better = match &tau_best {
                None => true,
                Some((b, _)) => rank(&cand, b) == Ordering::Greater,
            };
            if better {
                tau_best = Some((cand, run.x));
            }
        }
        if let Some((cand, x)) = tau_best {
            let adopt = match &best {
                None => true,
                Some(b) => cand.rates.r2 > b.rates.r2 + PHASE_GAIN * b.rates.r2.abs(),
            };
            if adopt {
                best = Some(cand);
            }
            prev = Some((l, x));
        }
    }

    match best {
        Some(cand) => Ok(SearchBest {
            plan: cand.plan,
            rates: cand.rates,
            evals: total_evals,
        }),
        None if !all_converged => Err(SearchError::BudgetExhausted {
            violation: least_violation,
            evals: total_evals,
        }),
        None => Err(SearchError::Infeasible {
            violation: least_violation,
        }),
    }
}

/// One boundary point of the `(r2, R3)` region.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub r3_target: f64,
    pub best: SearchBest,
}

#[derive(Debug)]
pub struct Trace {
    /// Non-dominated points sorted by achieved `R3`.
    pub points: Vec<TracePoint>,
    pub failures: Vec<(f64, SearchError)>,
}

fn weakly_dominates(a: &RateTuple, b: &RateTuple) -> bool {
    a.r2 >= b.r2 && a.r3 >= b.r3 && (a.r2 > b.r2 || a.r3 > b.r3)
}

/// Traces the `(r2, R3)` boundary at fixed `r1` and key budgets.
///
/// Targets are solved from the largest down, each warm-started with the
/// previous optimum, which keeps `r2` non-increasing in `R3`.
#[allow(clippy::too_many_arguments)]
pub fn trace_r2_r3(
    d: &Dmc,
    unit: LogUnit,
    r1_fixed: f64,
    k1_max: f64,
    k2_max: f64,
    grid: &[f64],
    max_r3: Option<f64>,
    budget: &OptBudget,
) -> Result<Trace> {
    let model = RateModel::new(d, unit);
    if let Some(g) = grid.iter().find(|g| !(**g >= 0.0) || max_r3.is_some_and(|m| **g > m + 1e-12)) {
        return Err(Error::InvalidArgument(format!("R3 target {g} outside [0, capacity]")));
    }
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));

    let mut solved: Vec<TracePoint> = Vec::new();
    let mut failures = Vec::new();
    let mut incumbent: Option<SearchBest> = None;
    for &target in &order {
        let c = Constraints {
            r1_min: r1_fixed,
            r3_min: target,
            k1_max,
            k2_max,
        };
        let mut b = budget.clone();
        if let Some(inc) = &incumbent {
            b.warm_starts.push(inc.plan.clone());
        }
        match max_r2_with(&model, &c, X3Mode::Optimize, &b) {
            Ok(mut found) => {
                if let Some(inc) = &incumbent {
                    if inc.rates.r2 > found.rates.r2 {
                        found = SearchBest {
                            evals: found.evals,
                            ..inc.clone()
                        };
                    }
                }
                incumbent = Some(found.clone());
                solved.push(TracePoint {
                    r3_target: target,
                    best: found,
                });
            }
            Err(SearchError::Invalid(e)) => return Err(e),
            Err(e) => failures.push((target, e)),
        }
    }

    let mut points: Vec<TracePoint> = solved
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            !solved
                .iter()
                .enumerate()
                .any(|(j, q)| j != *i && weakly_dominates(&q.best.rates, &p.best.rates))
        })
        .map(|(_, p)| p.clone())
        .collect();
    // identical rate pairs survive the filter; keep the first of each
    points.dedup_by(|a, b| a.best.rates.r2 == b.best.rates.r2 && a.best.rates.r3 == b.best.rates.r3);
    points.sort_by(|a, b| {
        a.best
            .rates
            .r3
            .total_cmp(&b.best.rates.r3)
            .then(a.r3_target.total_cmp(&b.r3_target))
    });
    Ok(Trace { points, failures })
}

/// `r2` as a function of the user-2 key budget.
#[derive(Debug)]
pub struct CurvePoint {
    pub k2: f64,
    pub result: std::result::Result<SearchBest, SearchError>,
}

/// Sweeps `k2_max` over `k2_grid` (solved in increasing order, each point
/// warm-started by the previous optimum). Output follows the grid order.
#[allow(clippy::too_many_arguments)]
pub fn curve_r2_vs_k2(
    d: &Dmc,
    unit: LogUnit,
    r1_fixed: f64,
    k1_max: f64,
    k2_grid: &[f64],
    mode: X3Mode,
    budget: &OptBudget,
) -> Result<Vec<CurvePoint>> {
    let model = RateModel::new(d, unit);
    if let Some(k) = k2_grid.iter().find(|k| !(**k >= 0.0)) {
        return Err(Error::InvalidArgument(format!("k2 grid value {k} must be non-negative")));
    }
    check_mode(&model, mode)?;
    let mut idx: Vec<usize> = (0..k2_grid.len()).collect();
    idx.sort_by(|&a, &b| k2_grid[a].total_cmp(&k2_grid[b]).then(a.cmp(&b)));

    let mut out: Vec<Option<CurvePoint>> = (0..k2_grid.len()).map(|_| None).collect();
    let mut incumbent: Option<PhasePlan> = None;
    for i in idx {
        let c = Constraints {
            r1_min: r1_fixed,
            r3_min: 0.0,
            k1_max,
            k2_max: k2_grid[i],
        };
        let mut b = budget.clone();
        if let Some(p) = &incumbent {
            b.warm_starts.push(p.clone());
        }
        let result = max_r2_with(&model, &c, mode, &b);
        match &result {
            Ok(found) => incumbent = Some(found.plan.clone()),
            Err(SearchError::Invalid(_)) => {
                return result.map(|_| Vec::new()).map_err(|e| match e {
                    SearchError::Invalid(e) => e,
                    _ => unreachable!(),
                })
            }
            Err(_) => {}
        }
        out[i] = Some(CurvePoint {
            k2: k2_grid[i],
            result,
        });
    }
    Ok(out.into_iter().map(|p| p.expect("every grid point solved")).collect())
}
