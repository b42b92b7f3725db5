//! Evolutionary search for linear-in-features models.
//!
//! The engine keeps a population of candidate feature expressions together
//! with their cached value columns over the training rows. The current best
//! model uses at most `n_f` of them (the *selection*), plus an intercept.
//!
//! Each generation:
//! 1. a parent is picked by size-3 tournament on the absolute correlation of
//!    its column with the residual it could explain,
//! 2. the parent is mutated,
//! 3. the mutant is tried in place of every selected feature (and appended
//!    when the selection is not full); each trial is a least-squares fit
//!    computed by orthogonal projection against cached bases,
//! 4. the best trial is adopted if it does not increase the training error
//!    (strictly lower error wins; equal-or-lower error with fewer nodes also
//!    wins),
//! 5. the mutant replaces a weak population member chosen by inverse
//!    tournament. Selected members are never replaced, so the best model
//!    is never lost.
//!
//! Periodically the selection is rebuilt from scratch by greedy forward
//! selection (repeatedly taking the member most correlated with the current
//! residual) and adopted under the same rule.

use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, FunctionSet};
use crate::model::{fit_least_squares, rmse, Dataset, FeatureModel};
use crate::seed::{self, Rng};

/// A column is treated as linearly dependent on the basis when its
/// orthogonal remainder is below this fraction of its norm.
const DEPENDENCE_TOL: f64 = 1e-9;
/// Relative resolution of residual sums of squares.
const SSE_FLOOR_REL: f64 = 1e-13;
const TOURNAMENT: usize = 3;
const INIT_DEPTH: usize = 4;
/// Probability that a mutant is replaced by one of its own proper subtrees.
const HOIST_PROB: f64 = 0.1;
/// Generations without improvement after which unselected members are
/// re-initialised.
const STALL_GENERATIONS: usize = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub population_size: usize,
    pub generations: usize,
    pub n_features: usize,
    pub max_depth: usize,
    pub function_set: FunctionSet,
    pub seed: u64,
    pub target_index: usize,
    /// Cap on the number of least-squares candidate fits.
    pub fitness_eval_budget: Option<u64>,
    /// Generations between full greedy re-selections.
    pub reselect_every: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            population_size: 500,
            generations: 30_000,
            n_features: 2,
            max_depth: 7,
            function_set: FunctionSet::arithmetic_trig(),
            seed: 0,
            target_index: 0,
            fitness_eval_budget: None,
            reselect_every: 250,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::Config("n_f must be at least 1".into()));
        }
        if self.population_size < self.n_features {
            return Err(Error::Config(format!(
                "population size {} is smaller than n_f = {}",
                self.population_size, self.n_features
            )));
        }
        if self.generations == 0 {
            return Err(Error::Config("generations must be at least 1".into()));
        }
        if self.reselect_every == 0 {
            return Err(Error::Config("reselect_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveResult {
    pub best_model: FeatureModel,
    pub best_training_rmse: f64,
    /// `(generation, best training RMSE so far)`, recorded at each improvement.
    pub fitness_trace: Vec<(usize, f64)>,
    pub evaluations: u64,
    pub generations_run: usize,
    /// Seconds.
    pub wall_time: f64,
    /// No population member ever evaluated finite on the training data; the
    /// model is intercept-only.
    pub all_features_nonfinite: bool,
}

struct Member {
    expr: Expr,
    column: Option<Vec<f64>>,
    nodes: usize,
    fitness: f64,
}

impl Member {
    fn new(expr: Expr, columns: &[Vec<f64>], n_rows: usize) -> Result<Self> {
        let values = expr.evaluate_columns(columns, n_rows)?;
        let column = values.iter().all(|v| v.is_finite()).then_some(values);
        Ok(Self {
            nodes: expr.size(),
            expr,
            column,
            fitness: -1.0,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis, always starting with the normalised constant column.
#[derive(Clone)]
struct Basis {
    q: Vec<Vec<f64>>,
}

impl Basis {
    fn intercept(n: usize) -> Self {
        Self {
            q: vec![vec![1.0 / (n as f64).sqrt(); n]],
        }
    }

    /// Component of `c` orthogonal to the basis (two Gram-Schmidt passes).
    fn remainder(&self, c: &[f64]) -> Vec<f64> {
        self.project_out(c, 2)
    }

    fn project_out(&self, c: &[f64], passes: usize) -> Vec<f64> {
        let mut r = c.to_vec();
        for _ in 0..passes {
            for q in &self.q {
                let a = dot(q, &r);
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= a * qi);
            }
        }
        r
    }

    /// Extend with `c`; returns false (and leaves the basis unchanged) when
    /// `c` is dependent on it.
    fn push(&mut self, c: &[f64]) -> bool {
        let r = self.remainder(c);
        let rn = dot(&r, &r).sqrt();
        let cn = dot(c, c).sqrt();
        if rn <= DEPENDENCE_TOL * cn || rn == 0.0 {
            return false;
        }
        self.q.push(r.into_iter().map(|v| v / rn).collect());
        true
    }

    fn residual(&self, y: &[f64]) -> Vec<f64> {
        self.remainder(y)
    }
}

/// SSE after adding `c` to a basis whose residual is `resid`. `None` when
/// `c` adds nothing. A single projection pass suffices here because the
/// adopted selection is always rebuilt with full re-orthogonalisation.
fn extend_fit(basis: &Basis, resid: &[f64], c: &[f64]) -> Option<f64> {
    let p = basis.project_out(c, 1);
    let pn2 = dot(&p, &p);
    if pn2 == 0.0 || pn2.sqrt() <= DEPENDENCE_TOL * dot(c, c).sqrt() {
        return None;
    }
    let a = dot(&p, resid) / pn2;
    Some(resid.iter().zip(&p).map(|(r, pi)| (r - a * pi).powi(2)).sum())
}

fn sse_of(resid: &[f64]) -> f64 {
    dot(resid, resid)
}

/// Current best feature subset with cached projections.
struct Selection {
    slots: Vec<usize>,
    resid: Vec<f64>,
    sse: f64,
    nodes: usize,
    full: Basis,
    /// Per slot: basis and residual of the selection without that slot.
    loo: Vec<(Basis, Vec<f64>)>,
}

impl Selection {
    fn build(slots: Vec<usize>, pop: &[Member], y: &[f64]) -> Self {
        let n = y.len();
        let basis_of = |skip: Option<usize>| {
            let mut b = Basis::intercept(n);
            for (i, &s) in slots.iter().enumerate() {
                if Some(i) != skip {
                    b.push(pop[s].column.as_ref().expect("selected members are finite"));
                }
            }
            b
        };
        let full = basis_of(None);
        let resid = full.residual(y);
        let loo = (0..slots.len())
            .map(|i| {
                let b = basis_of(Some(i));
                let r = b.residual(y);
                (b, r)
            })
            .collect();
        Self {
            nodes: slots.iter().map(|&s| pop[s].nodes).sum(),
            sse: sse_of(&resid),
            slots,
            resid,
            full,
            loo,
        }
    }

    /// Residual a member is judged against: for selected members, the
    /// residual of the model without them.
    fn reference_residual(&self, member: usize) -> &[f64] {
        match self.slots.iter().position(|&s| s == member) {
            Some(i) => &self.loo[i].1,
            None => &self.resid,
        }
    }
}

/// Absolute correlation between `c` and a zero-mean residual.
fn residual_correlation(c: &[f64], resid: &[f64]) -> f64 {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let (mut cr, mut cc) = (0.0, 0.0);
    for (ci, ri) in c.iter().zip(resid) {
        let d = ci - mean;
        cr += d * ri;
        cc += d * d;
    }
    let rr = dot(resid, resid);
    if cc <= 0.0 || rr <= 0.0 {
        0.0
    } else {
        (cr.abs() / (cc.sqrt() * rr.sqrt())).min(1.0)
    }
}

struct Engine<'a> {
    cfg: &'a EvolveConfig,
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    n_rows: usize,
    pop: Vec<Member>,
    sel: Selection,
    sse_floor: f64,
    evaluations: u64,
    rng: Rng,
}

impl<'a> Engine<'a> {
    /// `(sse, nodes)` strictly preferable to the current selection?
    fn improves(&self, sse: f64, nodes: usize) -> bool {
        let cur = self.sel.sse;
        let tol = SSE_FLOOR_REL * cur + self.sse_floor;
        sse < cur - tol || (sse <= cur + self.sse_floor && nodes < self.sel.nodes)
    }

    fn refresh_fitness(&mut self) {
        for i in 0..self.pop.len() {
            let f = match &self.pop[i].column {
                Some(c) => residual_correlation(c, self.sel.reference_residual(i)),
                None => -1.0,
            };
            self.pop[i].fitness = f;
        }
    }

    fn budget_left(&self) -> bool {
        self.cfg.fitness_eval_budget.is_none_or(|b| self.evaluations < b)
    }

    fn tournament(&mut self) -> usize {
        let n = self.pop.len();
        let mut best = self.rng.random_range(0..n);
        for _ in 1..TOURNAMENT {
            let c = self.rng.random_range(0..n);
            let (a, b) = (&self.pop[c], &self.pop[best]);
            if a.fitness > b.fitness || (a.fitness == b.fitness && a.nodes < b.nodes) {
                best = c;
            }
        }
        best
    }

    fn victim(&mut self) -> Option<usize> {
        let free: Vec<usize> = (0..self.pop.len()).filter(|i| !self.sel.slots.contains(i)).collect();
        if free.is_empty() {
            return None;
        }
        let mut worst = free[self.rng.random_range(0..free.len())];
        for _ in 1..TOURNAMENT {
            let c = free[self.rng.random_range(0..free.len())];
            let (a, b) = (&self.pop[c], &self.pop[worst]);
            if a.fitness < b.fitness || (a.fitness == b.fitness && a.nodes > b.nodes) {
                worst = c;
            }
        }
        Some(worst)
    }

    /// Greedy forward selection over the whole population.
    fn greedy_selection(&mut self) -> Vec<usize> {
        let n = self.n_rows;
        let mean = self.y.iter().sum::<f64>() / n as f64;
        let mut r: Vec<f64> = self.y.iter().map(|v| v - mean).collect();
        let mut remainders: Vec<Option<(Vec<f64>, f64)>> = self
            .pop
            .iter()
            .map(|m| {
                m.column.as_ref().map(|c| {
                    let cm = c.iter().sum::<f64>() / n as f64;
                    let norm = dot(c, c).sqrt();
                    (c.iter().map(|v| v - cm).collect(), norm)
                })
            })
            .collect();
        let mut chosen = Vec::new();
        while chosen.len() < self.cfg.n_features {
            let mut best: Option<(usize, f64)> = None;
            for (j, rem) in remainders.iter().enumerate() {
                let Some((p, norm)) = rem else { continue };
                let pn2 = dot(p, p);
                if pn2 == 0.0 || pn2.sqrt() <= DEPENDENCE_TOL * norm {
                    continue;
                }
                let pr = dot(p, &r);
                let gain = pr * pr / pn2;
                let better = match best {
                    None => true,
                    Some((b, g)) => gain > g || (gain == g && self.pop[j].nodes < self.pop[b].nodes),
                };
                if better {
                    best = Some((j, gain));
                }
            }
            let Some((j, gain)) = best else { break };
            if gain <= 0.0 {
                break;
            }
            self.evaluations += 1;
            let (p, _) = remainders[j].take().expect("candidate present");
            let pn = dot(&p, &p).sqrt();
            let q: Vec<f64> = p.iter().map(|v| v / pn).collect();
            let a = dot(&q, &r);
            r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= a * qi);
            for (p, _) in remainders.iter_mut().flatten() {
                let a = dot(&q, p);
                p.iter_mut().zip(&q).for_each(|(pi, qi)| *pi -= a * qi);
            }
            chosen.push(j);
        }
        chosen
    }

    fn try_reselect(&mut self) -> bool {
        let slots = self.greedy_selection();
        let cand = Selection::build(slots, &self.pop, self.y);
        if self.improves(cand.sse, cand.nodes) {
            self.sel = cand;
            self.refresh_fitness();
            true
        } else {
            false
        }
    }

    /// Replace every unselected member with a fresh random expression.
    fn restart(&mut self) -> Result<()> {
        let depth = self.cfg.max_depth.min(INIT_DEPTH);
        for i in 0..self.pop.len() {
            if self.sel.slots.contains(&i) {
                continue;
            }
            let e = Expr::random(&self.cfg.function_set, self.columns.len(), depth, &mut self.rng);
            self.pop[i] = Member::new(e, self.columns, self.n_rows)?;
        }
        self.refresh_fitness();
        Ok(())
    }

    /// One mutation step. Returns true when the selection changed.
    fn generation(&mut self) -> Result<bool> {
        let parent = self.tournament();
        let mut child_expr = self.pop[parent].expr.mutate(
            &self.cfg.function_set,
            self.columns.len(),
            self.cfg.max_depth,
            &mut self.rng,
        );
        if self.rng.random_bool(HOIST_PROB) {
            let subs = child_expr.op_subtrees();
            if subs.len() > 1 {
                let pick = subs[self.rng.random_range(1..subs.len())].clone();
                child_expr = pick;
            }
        }
        debug_assert!(child_expr.depth() <= self.cfg.max_depth);
        let mut child = Member::new(child_expr, self.columns, self.n_rows)?;
        let victim = self.victim();
        let Some(col) = child.column.as_deref() else {
            return Ok(false);
        };

        // (slot to replace or None for append, sse, nodes)
        let mut best: Option<(Option<usize>, f64, usize)> = None;
        let mut consider = |slot: Option<usize>, sse: f64, nodes: usize| {
            let take = match best {
                None => true,
                Some((_, s, n)) => sse < s || (sse == s && nodes < n),
            };
            if take {
                best = Some((slot, sse, nodes));
            }
        };
        if self.sel.slots.len() < self.cfg.n_features && victim.is_some() {
            self.evaluations += 1;
            if let Some(sse) = extend_fit(&self.sel.full, &self.sel.resid, col) {
                consider(None, sse, self.sel.nodes + child.nodes);
            }
        }
        for (i, (basis, resid)) in self.sel.loo.iter().enumerate() {
            self.evaluations += 1;
            let nodes = self.sel.nodes - self.pop[self.sel.slots[i]].nodes + child.nodes;
            match extend_fit(basis, resid, col) {
                Some(sse) => consider(Some(i), sse, nodes),
                None => consider(Some(i), sse_of(resid), nodes),
            }
        }

        if let Some((slot, sse, nodes)) = best {
            if self.improves(sse, nodes) {
                let mut slots = self.sel.slots.clone();
                let index = match slot {
                    Some(i) => victim.unwrap_or(slots[i]),
                    None => victim.expect("append requires a free member"),
                };
                match slot {
                    Some(i) => slots[i] = index,
                    None => slots.push(index),
                }
                self.pop[index] = child;
                self.sel = Selection::build(slots, &self.pop, self.y);
                self.refresh_fitness();
                return Ok(true);
            }
        }
        if let Some(v) = victim {
            child.fitness = residual_correlation(col, &self.sel.resid);
            self.pop[v] = child;
        }
        Ok(false)
    }
}

/// Evolve a feature model for `config.target_index` of `dataset`.
pub fn evolve(dataset: &Dataset, config: &EvolveConfig) -> Result<EvolveResult> {
    config.validate()?;
    if dataset.n_rows() == 0 {
        return Err(Error::InsufficientData("cannot evolve on an empty dataset".into()));
    }
    if config.target_index >= dataset.n_targets() {
        return Err(Error::InvalidArgument(format!(
            "target index {} out of range ({} targets)",
            config.target_index,
            dataset.n_targets()
        )));
    }
    let start = Instant::now();
    let columns = dataset.regressor_columns();
    let y = dataset.target_column(config.target_index);
    let n_rows = dataset.n_rows();
    let n_vars = columns.len();
    let mut rng = seed::rng(config.seed);

    let init_depth = config.max_depth.min(INIT_DEPTH);
    let pop = (0..config.population_size)
        .map(|_| {
            let e = Expr::random(&config.function_set, n_vars, init_depth, &mut rng);
            Member::new(e, columns, n_rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut any_finite = pop.iter().any(|m| m.column.is_some());

    let y_rms = (dot(y, y) / n_rows as f64).sqrt();
    let sse_floor = n_rows as f64 * (SSE_FLOOR_REL * y_rms).powi(2);
    let sel = Selection::build(Vec::new(), &pop, y);
    let mut engine = Engine {
        cfg: config,
        columns,
        y,
        n_rows,
        pop,
        sel,
        sse_floor,
        evaluations: 0,
        rng,
    };
    engine.refresh_fitness();
    engine.try_reselect();

    let rmse_now = |e: &Engine| (e.sel.sse / n_rows as f64).sqrt();
    let mut trace = vec![(0, rmse_now(&engine))];
    let mut generations_run = 0;
    let mut last_change = 0;
    for gen in 1..=config.generations {
        if engine.sel.sse <= engine.sse_floor || !engine.budget_left() {
            break;
        }
        generations_run = gen;
        let mut changed = engine.generation()?;
        if gen % config.reselect_every == 0 {
            changed |= engine.try_reselect();
        }
        if changed {
            last_change = gen;
        } else if gen - last_change >= STALL_GENERATIONS {
            engine.restart()?;
            last_change = gen;
        }
        any_finite |= engine.pop.iter().any(|m| m.column.is_some());
        debug_assert!(engine
            .sel
            .slots
            .iter()
            .all(|&s| engine.pop[s].expr.depth() <= config.max_depth));
        if changed {
            let last = trace.last().expect("non-empty").1;
            let now = rmse_now(&engine).min(last);
            if now < last {
                trace.push((gen, now));
            }
        }
    }

    let features: Vec<Expr> = engine.sel.slots.iter().map(|&s| engine.pop[s].expr.clone()).collect();
    let best_model = fit_least_squares(&features, dataset, config.target_index)?;
    let best_training_rmse = rmse(&best_model, dataset, config.target_index)?;
    if !any_finite {
        log::warn!("no finite feature found; returning intercept-only model");
    }
    Ok(EvolveResult {
        best_model,
        best_training_rmse,
        fitness_trace: trace,
        evaluations: engine.evaluations,
        generations_run,
        wall_time: start.elapsed().as_secs_f64(),
        all_features_nonfinite: !any_finite,
    })
}

/// One independent run per target column. Column `c` uses the seed derived
/// from `config.seed` and `c`.
pub fn evolve_all_outputs(dataset: &Dataset, config: &EvolveConfig) -> Result<Vec<EvolveResult>> {
    (0..dataset.n_targets())
        .into_par_iter()
        .map(|c| {
            let cfg = EvolveConfig {
                target_index: c,
                seed: seed::derive(config.seed, "target", c as u64),
                ..config.clone()
            };
            evolve(dataset, &cfg)
        })
        .collect()
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One cell of a median table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub target: String,
    pub n_f: usize,
    pub n_s: usize,
    pub median_rmse: f64,
    pub runs: usize,
    /// Per-run test RMSEs in run order.
    #[serde(skip)]
    pub run_rmses: Vec<f64>,
    /// The run with the lowest test RMSE (earliest on ties).
    #[serde(skip)]
    pub best_run: Option<EvolveResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MedianTable {
    pub rows: Vec<MedianRow>,
}

impl MedianTable {
    pub const HEADER: &'static str = "target,n_f,n_s,median_rmse,runs";

    pub fn get(&self, target: &str, n_f: usize, n_s: usize) -> Option<&MedianRow> {
        self.rows
            .iter()
            .find(|r| r.target == target && r.n_f == n_f && r.n_s == n_s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.target,
                r.n_f,
                r.n_s,
                crate::model::format_float(r.median_rmse),
                r.runs
            ));
        }
        out
    }

    /// Parse the CSV form. Per-run values are not stored in it.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == Self::HEADER => {}
            _ => return Err(Error::InvalidArgument("median table header missing".into())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let cells: Vec<&str> = line.split(',').collect();
            let perr = |column: usize, message: &str| Error::Parse {
                row: i + 1,
                column,
                message: message.to_string(),
            };
            if cells.len() != 5 {
                return Err(perr(cells.len(), "expected 5 cells"));
            }
            rows.push(MedianRow {
                target: cells[0].to_string(),
                n_f: cells[1].trim().parse().map_err(|_| perr(2, "bad n_f"))?,
                n_s: cells[2].trim().parse().map_err(|_| perr(3, "bad n_s"))?,
                median_rmse: cells[3].trim().parse().map_err(|_| perr(4, "bad median"))?,
                runs: cells[4].trim().parse().map_err(|_| perr(5, "bad run count"))?,
                run_rmses: Vec::new(),
                best_run: None,
            });
        }
        Ok(Self { rows })
    }
}

/// Grid of (target, n_f, n_s) cells evaluated by repeated seeded runs.
#[derive(Debug, Clone)]
pub struct MedianExperiment {
    /// `(target column, n_f values)`; different targets may use different n_f.
    pub targets: Vec<(usize, Vec<usize>)>,
    pub n_s_values: Vec<usize>,
    pub n_runs: usize,
    pub template: EvolveConfig,
    pub seed: u64,
}

/// Run every cell: one training set per `n_s` (from `make_training(n_s,
/// seed)`), `n_runs` seeded evolutions per cell, each best model scored on
/// `test`. Rows are ordered by target, then `n_f`, then `n_s`.
pub fn run_median_experiment<G>(exp: &MedianExperiment, make_training: G, test: &Dataset) -> Result<MedianTable>
where
    G: Fn(usize, u64) -> Result<Dataset> + Sync,
{
    if exp.n_runs == 0 || exp.n_runs.is_multiple_of(2) {
        return Err(Error::Config(format!("run count {} must be odd and positive", exp.n_runs)));
    }
    let mut n_s_values = exp.n_s_values.clone();
    n_s_values.sort_unstable();
    n_s_values.dedup();
    let training: Vec<(usize, Dataset)> = n_s_values
        .iter()
        .map(|&n_s| make_training(n_s, seed::derive(exp.seed, "training", n_s as u64)).map(|d| (n_s, d)))
        .collect::<Result<_>>()?;

    let mut targets = exp.targets.clone();
    targets.sort_by_key(|(t, _)| *t);
    let mut cells = Vec::new();
    for (t, nfs) in &targets {
        let mut nfs = nfs.clone();
        nfs.sort_unstable();
        nfs.dedup();
        for n_f in nfs {
            for (k, _) in training.iter().enumerate() {
                cells.push((*t, n_f, k));
            }
        }
    }
    let jobs: Vec<(usize, usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(t, n_f, k)| (0..exp.n_runs).map(move |run| (t, n_f, k, run)))
        .collect();
    let mut results: Vec<(f64, EvolveResult)> = jobs
        .par_iter()
        .map(|&(t, n_f, k, run)| {
            let (n_s, train) = &training[k];
            let tag = format!("run/{t}/{n_f}/{n_s}");
            let cfg = EvolveConfig {
                target_index: t,
                n_features: n_f,
                seed: seed::derive(exp.seed, &tag, run as u64),
                ..exp.template.clone()
            };
            let res = evolve(train, &cfg)?;
            Ok((rmse(&res.best_model, test, t)?, res))
        })
        .collect::<Result<_>>()?;

    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, &(t, n_f, k))| {
            let cell: Vec<(f64, EvolveResult)> = results.drain(..exp.n_runs).collect();
            let run_rmses: Vec<f64> = cell.iter().map(|(r, _)| *r).collect();
            let best_run = cell
                .into_iter()
                .reduce(|a, b| if b.0 < a.0 { b } else { a })
                .map(|(_, r)| r);
            debug_assert!(c < cells.len());
            MedianRow {
                target: test.target_names()[t].clone(),
                n_f,
                n_s: training[k].0,
                median_rmse: median(&run_rmses),
                runs: exp.n_runs,
                run_rmses,
                best_run,
            }
        })
        .collect();
    Ok(MedianTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Op;

    fn line_dataset() -> Dataset {
        let rows: Vec<_> = (0..100)
            .map(|i| {
                let x = -1.0 + 0.02 * i as f64;
                (vec![x], vec![x])
            })
            .collect();
        Dataset::from_rows(vec!["x".into()], vec!["x_next".into()], &rows).unwrap()
    }

    fn small_cfg() -> EvolveConfig {
        EvolveConfig {
            population_size: 50,
            generations: 300,
            n_features: 1,
            function_set: FunctionSet::new(vec![Op::Add, Op::Sub, Op::Mul]).unwrap(),
            seed: 1,
            ..EvolveConfig::default()
        }
    }

    #[test]
    fn identity_target_is_recovered() {
        let res = evolve(&line_dataset(), &small_cfg()).unwrap();
        assert!(res.best_training_rmse <= 1e-8, "{}", res.best_training_rmse);
    }

    #[test]
    fn constant_target_needs_no_search() {
        let rows: Vec<_> = (0..10).map(|i| (vec![i as f64], vec![3.25])).collect();
        let ds = Dataset::from_rows(vec!["x".into()], vec!["x_next".into()], &rows).unwrap();
        let res = evolve(&ds, &small_cfg()).unwrap();
        assert!(res.best_training_rmse < 1e-14);
        assert!(res.generations_run <= 1);
        assert_eq!(res.fitness_trace[0].0, 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_cfg();
        cfg.population_size = 0;
        assert!(evolve(&line_dataset(), &cfg).is_err());
        let mut cfg = small_cfg();
        cfg.target_index = 1;
        assert!(evolve(&line_dataset(), &cfg).is_err());
    }

    #[test]
    fn budget_caps_evaluations() {
        let mut cfg = small_cfg();
        cfg.fitness_eval_budget = Some(20);
        let rows: Vec<_> = (0..30).map(|i| (vec![i as f64 * 0.1], vec![(i as f64 * 0.1).sin()])).collect();
        let ds = Dataset::from_rows(vec!["x".into()], vec!["x_next".into()], &rows).unwrap();
        let res = evolve(&ds, &cfg).unwrap();
        assert!(res.evaluations <= 20 + cfg.n_features as u64 + 1);
    }

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn median_table_csv() {
        let t = MedianTable {
            rows: vec![MedianRow {
                target: "x_next".into(),
                n_f: 2,
                n_s: 20,
                median_rmse: 2.5e-9,
                runs: 11,
                run_rmses: vec![],
                best_run: None,
            }],
        };
        let csv = t.to_csv();
        assert!(csv.starts_with("target,n_f,n_s,median_rmse,runs\nx_next,2,20,"));
        assert_eq!(MedianTable::from_csv(&csv).unwrap(), t);
    }
}
