//! Grid-interpolated value iteration, greedy control and rollouts.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::format_float;
use crate::seed::Rng;

/// One grid dimension. Node coordinates must be strictly increasing. A
/// wrapped axis is periodic with period `last - first`, so its last node
/// coincides with its first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub nodes: Vec<f64>,
    pub wrap: bool,
}

impl Axis {
    pub fn new(name: impl Into<String>, nodes: Vec<f64>, wrap: bool) -> Result<Self> {
        let axis = Self {
            name: name.into(),
            nodes,
            wrap,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn uniform(name: impl Into<String>, lo: f64, hi: f64, points: usize, wrap: bool) -> Result<Self> {
        Self::new(name, crate::dynamics::linspace(lo, hi, points), wrap)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::Config(format!("axis {} needs at least 2 nodes", self.name)));
        }
        if self.nodes.iter().any(|v| !v.is_finite()) || self.nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("axis {} must be finite and strictly increasing", self.name)));
        }
        Ok(())
    }

    fn lo(&self) -> f64 {
        self.nodes[0]
    }

    fn hi(&self) -> f64 {
        *self.nodes.last().expect("validated")
    }

    /// Bracketing node index and weight of the upper node; `true` when the
    /// coordinate was clamped.
    fn locate(&self, x: f64) -> (usize, f64, bool) {
        let (lo, hi) = (self.lo(), self.hi());
        let (x, clamped) = if self.wrap {
            (lo + (x - lo).rem_euclid(hi - lo), false)
        } else if x < lo {
            (lo, true)
        } else if x > hi {
            (hi, true)
        } else {
            (x, false)
        };
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let t = ((x - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i])).clamp(0.0, 1.0);
        (i, t, clamped)
    }

    /// Signed distance `a - b` on this axis, wrapped into half a period.
    pub fn difference(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        if self.wrap {
            let p = self.hi() - self.lo();
            let m = d.rem_euclid(p);
            if m > p / 2.0 { m - p } else { m }
        } else {
            d
        }
    }
}

/// Wrapped angular distance in `[0, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let m = (a - b).abs().rem_euclid(2.0 * PI);
    m.min(2.0 * PI - m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub gamma: f64,
    pub actions: Vec<Vec<f64>>,
    pub axes: Vec<Axis>,
    /// Sup-norm change below which value iteration stops.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub reference: Vec<f64>,
    /// Half-widths of the success band around `reference`, per state
    /// dimension.
    pub success_band: Vec<f64>,
}

impl RlConfig {
    /// Pendulum swing-up: 41×41 grid, equidistant actions over `[-u_max, u_max]`.
    pub fn pendulum(u_max: f64, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::Config("action set must be non-empty".into()));
        }
        let actions = if n_actions == 1 {
            vec![vec![0.0]]
        } else {
            crate::dynamics::linspace(-u_max, u_max, n_actions)
                .into_iter()
                .map(|u| vec![u])
                .collect()
        };
        let cfg = Self {
            gamma: 0.98,
            actions,
            axes: vec![
                Axis::uniform("alpha", -PI, PI, 41, true)?,
                Axis::uniform("alpha_dot", -40.0, 40.0, 41, false)?,
            ],
            tolerance: 1e-6,
            max_sweeps: 5000,
            reference: vec![PI, 0.0],
            success_band: vec![0.2, 2.0],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The swing-up configuration: 15 actions over ±2.
    pub fn swing_up() -> Self {
        Self::pendulum(2.0, 15).expect("static configuration is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("discount {} outside (0, 1)", self.gamma)));
        }
        if self.actions.is_empty() {
            return Err(Error::Config("action set must be non-empty".into()));
        }
        let du = self.actions[0].len();
        if self.actions.iter().any(|u| u.len() != du || u.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("actions must be finite and of equal length".into()));
        }
        if self.axes.is_empty() {
            return Err(Error::Config("state grid needs at least one axis".into()));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if !(self.tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(Error::Config("tolerance and max sweeps must be positive".into()));
        }
        if self.reference.len() != self.axes.len() || self.success_band.len() != self.axes.len() {
            return Err(Error::Config("reference and success band must match the grid dimension".into()));
        }
        Ok(())
    }

    /// Per-dimension `(min, max)` of the action set.
    pub fn action_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.actions[0].len())
            .map(|d| {
                self.actions
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| (lo.min(u[d]), hi.max(u[d])))
            })
            .collect()
    }

    /// Whether `x` lies inside the success band.
    pub fn in_band(&self, x: &[f64]) -> bool {
        self.axes
            .iter()
            .zip(x)
            .zip(self.reference.iter().zip(&self.success_band))
            .all(|((axis, &xi), (&r, &w))| axis.difference(xi, r).abs() <= w)
    }
}

/// Pendulum reward: `-0.5·d(α_r, α) - 0.01·|α̇_r - α̇| - 0.05·|u|`, with `d`
/// the wrapped angular distance.
pub fn reward_pendulum(x: &[f64], u: &[f64], x_r: &[f64]) -> f64 {
    -0.5 * angle_distance(x_r[0], x[0]) - 0.01 * (x_r[1] - x[1]).abs() - 0.05 * u[0].abs()
}

/// Same reward with a plain absolute angle difference.
pub fn reward_pendulum_unwrapped(x: &[f64], u: &[f64], x_r: &[f64]) -> f64 {
    -0.5 * (x_r[0] - x[0]).abs() - 0.01 * (x_r[1] - x[1]).abs() - 0.05 * u[0].abs()
}

/// Value per grid node, nodes in lexicographic order (first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(axes: Vec<Axis>) -> Self {
        let n = axes.iter().map(|a| a.nodes.len()).product();
        Self {
            axes,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.nodes.len()).product();
        if values.len() != n {
            return Err(Error::Dimension(format!("{} values for a grid of {n} nodes", values.len())));
        }
        for a in &axes {
            a.validate()?;
        }
        Ok(Self { axes, values })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    /// Coordinates of node `index`.
    pub fn node(&self, mut index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.nodes.len();
            x[d] = axis.nodes[index % n];
            index /= n;
        }
        x
    }

    /// Node indices and weights of the multilinear interpolant at `x`, plus
    /// whether any coordinate was clamped.
    pub fn weights(&self, x: &[f64]) -> (Vec<(usize, f64)>, bool) {
        let mut out = vec![(0usize, 1.0f64)];
        let mut clamped = false;
        for (axis, &xi) in self.axes.iter().zip(x) {
            let (i, t, c) = axis.locate(xi);
            clamped |= c;
            let n = axis.nodes.len();
            let mut next = Vec::with_capacity(out.len() * 2);
            for &(idx, w) in &out {
                next.push((idx * n + i, w * (1.0 - t)));
                next.push((idx * n + i + 1, w * t));
            }
            out = next;
        }
        (out, clamped)
    }

    /// Interpolated value and the clamping flag.
    pub fn interpolate_flagged(&self, x: &[f64]) -> (f64, bool) {
        let (w, clamped) = self.weights(x);
        (w.iter().map(|&(i, w)| w * self.values[i]).sum(), clamped)
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.interpolate_flagged(x).0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# value function\n");
        let _ = writeln!(s, "axes,{}", self.axes.len());
        for a in &self.axes {
            let _ = write!(s, "axis,{},{}", a.name, if a.wrap { "wrap" } else { "clamp" });
            for v in &a.nodes {
                let _ = write!(s, ",{}", format_float(*v));
            }
            s.push('\n');
        }
        let _ = writeln!(s, "values,{}", self.values.len());
        for v in &self.values {
            s.push_str(&format_float(*v));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let perr = |row: usize, message: &str| Error::Parse {
            row: row + 1,
            column: 1,
            message: message.to_string(),
        };
        let num = |row: usize, s: &str| s.trim().parse::<f64>().map_err(|_| perr(row, "bad number"));
        let (row, head) = lines.next().ok_or_else(|| perr(0, "missing axes line"))?;
        let n_axes: usize = head
            .strip_prefix("axes,")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| perr(row, "expected `axes,<count>`"))?;
        let mut axes = Vec::with_capacity(n_axes);
        for _ in 0..n_axes {
            let (row, line) = lines.next().ok_or_else(|| perr(row, "missing axis line"))?;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 5 || cells[0] != "axis" {
                return Err(perr(row, "expected `axis,<name>,<wrap|clamp>,<nodes...>`"));
            }
            let wrap = match cells[2] {
                "wrap" => true,
                "clamp" => false,
                _ => return Err(perr(row, "axis mode must be wrap or clamp")),
            };
            let nodes = cells[3..].iter().map(|c| num(row, c)).collect::<Result<_>>()?;
            axes.push(Axis::new(cells[1], nodes, wrap)?);
        }
        let (row, head) = lines.next().ok_or_else(|| perr(row, "missing values line"))?;
        let n: usize = head
            .strip_prefix("values,")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| perr(row, "expected `values,<count>`"))?;
        let values = lines.map(|(row, l)| num(row, l)).collect::<Result<Vec<_>>>()?;
        if values.len() != n {
            return Err(Error::Dimension(format!("declared {n} values, found {}", values.len())));
        }
        Self::from_values(axes, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Reward and successor interpolation stencil of one (node, action) pair.
type Transition = (f64, Vec<(usize, f64)>);

#[derive(Debug, Clone, PartialEq)]
pub struct ViResult {
    pub value: ValueFunction,
    pub sweeps: usize,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

/// Jacobi value iteration on the grid of `cfg`.
///
/// Successor states and rewards of every (node, action) pair are computed
/// once; each sweep then only re-weights the previous values.
pub fn value_iteration<M, R>(model_step: M, reward: R, cfg: &RlConfig) -> Result<ViResult>
where
    M: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
    R: Fn(&[f64], &[f64], &[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let mut v = ValueFunction::zeros(cfg.axes.clone());
    let n = v.n_nodes();
    let n_u = cfg.actions.len();
    // per (node, action): reward and interpolation stencil
    let table: Vec<Vec<Transition>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = v.node(i);
            cfg.actions
                .iter()
                .map(|u| {
                    let next = model_step(&x, u);
                    if next.len() != x.len() || next.iter().any(|c| !c.is_finite()) {
                        return Err(Error::NonFiniteModel {
                            node: i,
                            state: x.clone(),
                            action: u.clone(),
                        });
                    }
                    let r = reward(&x, u, &next);
                    if !r.is_finite() {
                        return Err(Error::NonFiniteModel {
                            node: i,
                            state: x.clone(),
                            action: u.clone(),
                        });
                    }
                    Ok((r, v.weights(&next).0))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    debug_assert!(table.iter().all(|t| t.len() == n_u));

    let mut residuals = Vec::new();
    for sweep in 1..=cfg.max_sweeps {
        let prev = &v.values;
        let next: Vec<f64> = table
            .par_iter()
            .map(|row| {
                row.iter()
                    .map(|(r, w)| r + cfg.gamma * w.iter().map(|&(j, wj)| wj * prev[j]).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let change = next
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v.values = next;
        residuals.push(change);
        if change < cfg.tolerance {
            return Ok(ViResult {
                value: v,
                sweeps: sweep,
                residuals,
            });
        }
    }
    Err(Error::NotConverged {
        sweeps: cfg.max_sweeps,
        last_change: *residuals.last().expect("at least one sweep"),
    })
}

/// Index into `actions` maximising `ρ(x,u,x') + γ·V(x')`. Exact ties go to
/// the smaller-norm action, then to the earlier index.
pub fn greedy_action<M, R>(v: &ValueFunction, model_step: &M, reward: &R, x: &[f64], actions: &[Vec<f64>], gamma: f64) -> usize
where
    M: Fn(&[f64], &[f64]) -> Vec<f64>,
    R: Fn(&[f64], &[f64], &[f64]) -> f64,
{
    let norm = |u: &[f64]| u.iter().map(|c| c * c).sum::<f64>();
    let mut best = 0;
    let mut best_q = f64::NEG_INFINITY;
    for (k, u) in actions.iter().enumerate() {
        let next = model_step(x, u);
        let q = reward(x, u, &next) + gamma * v.interpolate(&next);
        let q = if q.is_nan() { f64::NEG_INFINITY } else { q };
        if q > best_q || (k > 0 && q == best_q && norm(u) < norm(&actions[best])) {
            best = k;
            best_q = q;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// `n + 1` states including the initial one.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// `rewards[k]` is earned on the transition from `states[k]`.
    pub rewards: Vec<f64>,
    pub discounted_return: f64,
    pub success: bool,
    /// First step from which every later state stays in the success band.
    pub steps_to_success: Option<usize>,
    /// The plant produced a non-finite state; the trajectory is partial.
    pub aborted: bool,
}

impl RolloutResult {
    pub fn recompute_return(&self, gamma: f64) -> f64 {
        discounted_sum(&self.rewards, gamma)
    }

    /// `time,<state names>,<input names>,reward` rows; the final state has
    /// no action and no reward.
    pub fn to_csv(&self, state_names: &[&str], input_names: &[&str], ts: f64) -> String {
        let mut s = format!("time,{},{},reward\n", state_names.join(","), input_names.join(","));
        for (k, x) in self.states.iter().enumerate() {
            let _ = write!(s, "{}", format_float(k as f64 * ts));
            for v in x {
                let _ = write!(s, ",{}", format_float(*v));
            }
            match (self.actions.get(k), self.rewards.get(k)) {
                (Some(u), Some(r)) => {
                    for v in u {
                        let _ = write!(s, ",{}", format_float(*v));
                    }
                    let _ = write!(s, ",{}", format_float(*r));
                }
                _ => s.push_str(&",".repeat(input_names.len() + 1)),
            }
            s.push('\n');
        }
        s
    }
}

pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Greedy policy of `v` under `model_step`, executed on `plant_step`.
/// Exploration noise of the given standard deviation is added to the
/// greedy action, and the result clipped to the action-set bounds.
#[allow(clippy::too_many_arguments)]
pub fn rollout<P, M, R>(
    plant_step: &P,
    v: &ValueFunction,
    model_step: &M,
    reward: &R,
    cfg: &RlConfig,
    x0: &[f64],
    n_steps: usize,
    exploration_std: f64,
    rng: &mut Rng,
) -> Result<RolloutResult>
where
    P: Fn(&[f64], &[f64]) -> Vec<f64>,
    M: Fn(&[f64], &[f64]) -> Vec<f64>,
    R: Fn(&[f64], &[f64], &[f64]) -> f64,
{
    if n_steps == 0 {
        return Err(Error::InvalidArgument("rollout needs at least one step".into()));
    }
    if !(exploration_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("exploration std {exploration_std} must be ≥ 0")));
    }
    let bounds = cfg.action_bounds();
    let noise = Normal::new(0.0, exploration_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut states = vec![x0.to_vec()];
    let mut actions = Vec::with_capacity(n_steps);
    let mut rewards = Vec::with_capacity(n_steps);
    let mut aborted = false;
    for _ in 0..n_steps {
        let x = states.last().expect("non-empty").clone();
        let k = greedy_action(v, model_step, reward, &x, &cfg.actions, cfg.gamma);
        let mut u = cfg.actions[k].clone();
        if exploration_std > 0.0 {
            for (ui, &(lo, hi)) in u.iter_mut().zip(&bounds) {
                *ui = (*ui + noise.sample(rng)).clamp(lo, hi);
            }
        }
        let next = plant_step(&x, &u);
        if next.iter().any(|c| !c.is_finite()) {
            aborted = true;
            break;
        }
        rewards.push(reward(&x, &u, &next));
        actions.push(u);
        states.push(next);
    }
    let steps_to_success = if aborted {
        None
    } else {
        let mut first = None;
        for (k, x) in states.iter().enumerate().rev() {
            if cfg.in_band(x) {
                first = Some(k);
            } else {
                break;
            }
        }
        first
    };
    Ok(RolloutResult {
        discounted_return: discounted_sum(&rewards, cfg.gamma),
        success: steps_to_success.is_some(),
        steps_to_success,
        aborted,
        states,
        actions,
        rewards,
    })
}

mod refine;
pub use refine::*;
