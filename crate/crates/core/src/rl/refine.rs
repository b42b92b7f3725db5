//! Model refinement: learn a model from random-input data, control with
//! it, add the resulting trajectories to the data and learn again.

use std::fmt::{self, Write as _};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{reward_pendulum, rollout, value_iteration, RlConfig, RolloutResult, ValueFunction};
use crate::dynamics::{random_trajectory, System};
use crate::error::{Error, Result};
use crate::evolve::{evolve, median, EvolveConfig};
use crate::expr::FunctionSet;
use crate::model::{build_state_space_dataset, format_float, rmse, Dataset, Episode, FeatureModel};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub evolve: EvolveConfig,
    pub rl: RlConfig,
    /// Evolutions per target and phase; the lowest test RMSE is kept.
    pub n_models: usize,
    pub eval_rollouts: usize,
    pub eval_steps: usize,
    /// Uniform half-widths of the initial-state perturbation of evaluation
    /// rollouts around rest.
    pub eval_jitter: Vec<f64>,
    pub initial_samples: usize,
    /// Range of the random input of the initial data set.
    pub input_range: (f64, f64),
    pub swing_up_steps: usize,
    /// One extra data-collection rollout per entry, with that exploration std.
    pub exploration_stds: Vec<f64>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            evolve: EvolveConfig {
                n_features: 10,
                function_set: FunctionSet::arithmetic_trig_sign(),
                ..EvolveConfig::default()
            },
            rl: RlConfig::swing_up(),
            n_models: 30,
            eval_rollouts: 50,
            eval_steps: 100,
            eval_jitter: vec![0.05, 0.5],
            initial_samples: 100,
            input_range: (-2.0, 2.0),
            swing_up_steps: 50,
            exploration_stds: vec![0.0, 0.0, 0.0, 0.0, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        self.evolve.validate()?;
        self.rl.validate()?;
        if self.n_models == 0 || self.eval_rollouts == 0 || self.eval_steps == 0 {
            return Err(Error::Config("model count, rollout count and rollout length must be positive".into()));
        }
        if self.initial_samples < 3 {
            return Err(Error::Config("at least 3 initial samples are needed for a train/test split".into()));
        }
        if self.eval_jitter.len() != self.rl.axes.len() || self.eval_jitter.iter().any(|j| !(*j >= 0.0)) {
            return Err(Error::Config("evaluation jitter must be non-negative, one per state".into()));
        }
        if !(self.input_range.0 < self.input_range.1) {
            return Err(Error::Config("input range must be non-degenerate".into()));
        }
        if self.exploration_stds.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("exploration stds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Last protocol stage that completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Started,
    InitialData,
    InitialModel,
    InitialPolicy,
    Exploration,
    RefinedModel,
    RefinedPolicy,
    Evaluation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Started => "started",
            Stage::InitialData => "initial_data",
            Stage::InitialModel => "initial_model",
            Stage::InitialPolicy => "initial_policy",
            Stage::Exploration => "exploration",
            Stage::RefinedModel => "refined_model",
            Stage::RefinedPolicy => "refined_policy",
            Stage::Evaluation => "evaluation",
        };
        f.write_str(s)
    }
}

/// Models, value-iteration sweeps and evaluation returns of one phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// One model per state component.
    pub models: Vec<FeatureModel>,
    /// Test RMSE on the phase's own split, per target.
    pub selection_rmse: Vec<f64>,
    /// Test RMSE on the final (merged) split, per target.
    pub comparison_rmse: Vec<f64>,
    pub training_rows: usize,
    pub vi_sweeps: usize,
    pub returns: Vec<f64>,
    pub successes: usize,
}

impl PhaseReport {
    pub fn median_return(&self) -> Option<f64> {
        (!self.returns.is_empty()).then(|| median(&self.returns))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub stage: Stage,
    pub failure: Option<String>,
    pub initial: PhaseReport,
    pub refined: PhaseReport,
    pub exploration_returns: Vec<f64>,
    pub target_names: Vec<String>,
}

impl RefinementReport {
    pub fn completed(&self) -> bool {
        self.stage == Stage::Evaluation && self.failure.is_none()
    }

    /// `record,key,initial,refined` rows.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<&f64>| v.map(|x| format_float(*x)).unwrap_or_default();
        let mut s = String::from("record,key,initial,refined\n");
        let _ = writeln!(s, "stage,{},,", self.stage);
        for (t, name) in self.target_names.iter().enumerate() {
            let _ = writeln!(
                s,
                "selection_rmse,{name},{},{}",
                f(self.initial.selection_rmse.get(t)),
                f(self.refined.selection_rmse.get(t))
            );
            let _ = writeln!(
                s,
                "test_rmse,{name},{},{}",
                f(self.initial.comparison_rmse.get(t)),
                f(self.refined.comparison_rmse.get(t))
            );
        }
        let _ = writeln!(s, "training_rows,,{},{}", self.initial.training_rows, self.refined.training_rows);
        let _ = writeln!(s, "vi_sweeps,,{},{}", self.initial.vi_sweeps, self.refined.vi_sweeps);
        let _ = writeln!(s, "successes,,{},{}", self.initial.successes, self.refined.successes);
        let _ = writeln!(
            s,
            "median_return,,{},{}",
            f(self.initial.median_return().as_ref()),
            f(self.refined.median_return().as_ref())
        );
        for (k, r) in self.exploration_returns.iter().enumerate() {
            let _ = writeln!(s, "exploration_return,{k},{},", format_float(*r));
        }
        let n = self.initial.returns.len().max(self.refined.returns.len());
        for k in 0..n {
            let _ = writeln!(
                s,
                "return,{k},{},{}",
                f(self.initial.returns.get(k)),
                f(self.refined.returns.get(k))
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "stage reached: {}", self.stage);
        if let Some(e) = &self.failure {
            let _ = writeln!(s, "failure: {e}");
        }
        for (label, p) in [("initial", &self.initial), ("refined", &self.refined)] {
            let _ = writeln!(s, "{label} model ({} training rows):", p.training_rows);
            for m in &p.models {
                let _ = writeln!(s, "  {} = {}", m.target_name, m.to_text());
            }
            for (name, r) in self.target_names.iter().zip(&p.comparison_rmse) {
                let _ = writeln!(s, "  test RMSE {name}: {}", format_float(*r));
            }
            if let Some(m) = p.median_return() {
                let _ = writeln!(
                    s,
                    "  median return {} over {} rollouts, {} successful",
                    format_float(m),
                    p.returns.len(),
                    p.successes
                );
            }
        }
        s
    }
}

type ModelStep = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync>;

/// Next-state function from one model per state component.
pub fn model_step_from(models: Vec<FeatureModel>) -> impl Fn(&[f64], &[f64]) -> Vec<f64> + Sync {
    move |x: &[f64], u: &[f64]| {
        let mut reg = x.to_vec();
        reg.extend_from_slice(u);
        models.iter().map(|m| m.predict(&reg).unwrap_or(f64::NAN)).collect()
    }
}

/// For each target, `n_models` seeded evolutions on the training part; the
/// one with the lowest test RMSE is kept.
fn select_models(data: &Dataset, cfg: &RefinementConfig, seed_value: u64) -> Result<(Vec<FeatureModel>, Vec<f64>)> {
    let (train, test) = data.split_every_third()?;
    let mut models = Vec::new();
    let mut scores = Vec::new();
    for t in 0..data.n_targets() {
        let runs: Vec<(FeatureModel, f64)> = (0..cfg.n_models)
            .into_par_iter()
            .map(|k| {
                let ecfg = EvolveConfig {
                    target_index: t,
                    seed: seed::derive(seed_value, &format!("model/{t}"), k as u64),
                    ..cfg.evolve.clone()
                };
                let res = evolve(&train, &ecfg)?;
                let score = rmse(&res.best_model, &test, t)?;
                Ok((res.best_model, score))
            })
            .collect::<Result<_>>()?;
        let (m, s) = runs
            .into_iter()
            .reduce(|a, b| if b.1 < a.1 { b } else { a })
            .expect("n_models ≥ 1");
        models.push(m);
        scores.push(s);
    }
    Ok((models, scores))
}

fn episode_of(r: &RolloutResult) -> Episode {
    Episode {
        states: r.states.clone(),
        inputs: r.actions.clone(),
    }
}

/// Run the refinement protocol against `plant_step`.
///
/// A failing stage ends the run; the returned report then holds everything
/// computed so far together with the stage marker and the error.
pub fn refinement_experiment<P>(plant_step: P, cfg: &RefinementConfig, master_seed: u64) -> Result<RefinementReport>
where
    P: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    let mut report = empty_report();
    if let Err(e) = run_refinement(&plant_step, cfg, master_seed, &mut report) {
        report.failure = Some(e.to_string());
    }
    Ok(report)
}

/// An empty report for the protocol, to be filled by [`run_refinement`].
pub fn empty_report() -> RefinementReport {
    RefinementReport {
        stage: Stage::Started,
        failure: None,
        initial: PhaseReport::default(),
        refined: PhaseReport::default(),
        exploration_returns: Vec::new(),
        target_names: System::pendulum().regressor_spec().target_names(),
    }
}

/// The protocol stages, recording progress in `report` and returning the
/// error of the first failing stage.
pub fn run_refinement<P>(plant: &P, cfg: &RefinementConfig, master_seed: u64, report: &mut RefinementReport) -> Result<()>
where
    P: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    let spec = System::pendulum().regressor_spec();
    let reward = |x: &[f64], u: &[f64], _: &[f64]| reward_pendulum(x, u, &cfg.rl.reference);
    let n_x = cfg.rl.axes.len();

    let mut rng = seed::rng_for(master_seed, "refine/data", 0);
    let ep = random_trajectory(plant, &vec![0.0; n_x], &[cfg.input_range], cfg.initial_samples, &mut rng)?;
    let (initial_data, _) = build_state_space_dataset(&[ep], &spec)?;
    report.stage = Stage::InitialData;

    let (models, scores) = select_models(&initial_data, cfg, seed::derive(master_seed, "refine/initial", 0))?;
    report.initial.models = models.clone();
    report.initial.selection_rmse = scores;
    report.initial.training_rows = initial_data.n_rows();
    let initial_step: ModelStep = Box::new(model_step_from(models));
    report.stage = Stage::InitialModel;

    let vi = value_iteration(&initial_step, reward, &cfg.rl)?;
    report.initial.vi_sweeps = vi.sweeps;
    let initial_v = vi.value;
    report.stage = Stage::InitialPolicy;

    let mut episodes = Vec::new();
    for (k, &std) in cfg.exploration_stds.iter().enumerate() {
        let mut rng = seed::rng_for(master_seed, "refine/explore", k as u64);
        let r = rollout(
            plant,
            &initial_v,
            &initial_step,
            &reward,
            &cfg.rl,
            &vec![0.0; n_x],
            cfg.swing_up_steps,
            std,
            &mut rng,
        )?;
        report.exploration_returns.push(r.discounted_return);
        if r.actions.is_empty() {
            continue;
        }
        episodes.push(episode_of(&r));
    }
    let merged = if episodes.is_empty() {
        initial_data.clone()
    } else {
        let (extra, _) = build_state_space_dataset(&episodes, &spec)?;
        initial_data.concat(&extra)?
    };
    report.stage = Stage::Exploration;

    let (models, scores) = select_models(&merged, cfg, seed::derive(master_seed, "refine/refined", 0))?;
    report.refined.models = models.clone();
    report.refined.selection_rmse = scores;
    report.refined.training_rows = merged.n_rows();
    let refined_step: ModelStep = Box::new(model_step_from(models));
    report.stage = Stage::RefinedModel;

    let (_, merged_test) = merged.split_every_third()?;
    for (phase, _) in [(&mut report.initial, 0), (&mut report.refined, 1)] {
        phase.comparison_rmse = phase
            .models
            .iter()
            .enumerate()
            .map(|(t, m)| rmse(m, &merged_test, t))
            .collect::<Result<_>>()?;
    }

    let vi = value_iteration(&refined_step, reward, &cfg.rl)?;
    report.refined.vi_sweeps = vi.sweeps;
    let refined_v = vi.value;
    report.stage = Stage::RefinedPolicy;

    // both policies start from the same perturbed initial states
    let starts: Vec<Vec<f64>> = (0..cfg.eval_rollouts)
        .map(|k| {
            let mut rng = seed::rng_for(master_seed, "refine/eval", k as u64);
            cfg.eval_jitter
                .iter()
                .map(|&j| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 })
                .collect()
        })
        .collect();
    let evaluate = |v: &ValueFunction, step: &ModelStep| -> Result<(Vec<f64>, usize)> {
        let runs: Vec<RolloutResult> = starts
            .par_iter()
            .map(|x0| {
                let mut rng = seed::rng(0);
                rollout(plant, v, step, &reward, &cfg.rl, x0, cfg.eval_steps, 0.0, &mut rng)
            })
            .collect::<Result<_>>()?;
        let successes = runs.iter().filter(|r| r.success).count();
        Ok((runs.iter().map(|r| r.discounted_return).collect(), successes))
    };
    let (returns, successes) = evaluate(&initial_v, &initial_step)?;
    report.initial.returns = returns;
    report.initial.successes = successes;
    let (returns, successes) = evaluate(&refined_v, &refined_step)?;
    report.refined.returns = returns;
    report.refined.successes = successes;
    report.stage = Stage::Evaluation;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Integrator;

    #[test]
    fn smoke_run_produces_well_formed_report() {
        let sys = System::pendulum();
        let mut rl = RlConfig::pendulum(2.0, 5).unwrap();
        rl.axes = vec![
            super::super::Axis::uniform("alpha", -std::f64::consts::PI, std::f64::consts::PI, 11, true).unwrap(),
            super::super::Axis::uniform("alpha_dot", -40.0, 40.0, 11, false).unwrap(),
        ];
        let cfg = RefinementConfig {
            evolve: EvolveConfig {
                population_size: 30,
                generations: 200,
                n_features: 3,
                function_set: FunctionSet::arithmetic_trig_sign(),
                ..EvolveConfig::default()
            },
            rl,
            n_models: 1,
            eval_rollouts: 1,
            eval_steps: 10,
            swing_up_steps: 10,
            exploration_stds: vec![0.0, 0.3],
            ..RefinementConfig::default()
        };
        let report = refinement_experiment(|x, u| sys.step(Integrator::Euler, x, u), &cfg, 5).unwrap();
        assert!(report.completed(), "{:?}", report.failure);
        assert_eq!(report.initial.returns.len(), 1);
        assert_eq!(report.refined.models.len(), 2);
        assert!(report.refined.training_rows > report.initial.training_rows);
        assert!(report.initial.comparison_rmse.iter().all(|r| r.is_finite()));
        let csv = report.to_csv();
        assert!(csv.starts_with("record,key,initial,refined\nstage,evaluation,,\n"));
        assert!(report.summary().contains("alpha_next = "));
    }

    #[test]
    fn failing_stage_is_reported() {
        let cfg = RefinementConfig {
            evolve: EvolveConfig {
                population_size: 10,
                generations: 10,
                ..RefinementConfig::default().evolve
            },
            n_models: 1,
            initial_samples: 5,
            ..RefinementConfig::default()
        };
        let report = refinement_experiment(|_: &[f64], _: &[f64]| vec![f64::NAN, 0.0], &cfg, 1).unwrap();
        assert!(report.failure.is_some());
        assert!(report.stage < Stage::Evaluation);
    }
}
