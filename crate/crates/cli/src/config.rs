//! Experiment configuration and its `key = value` file form.
//!
//! Lines are `key = value`; `#` starts a comment; keys are dotted
//! (`evolve.n_f = 2`). The `experiment` key selects the preset that supplies
//! every value not given in the file. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use srrl::dynamics::Integrator;
use srrl::expr::FunctionSet;
use srrl::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    RobotC,
    PendC1,
    PendC2,
    PendC3,
    Custom,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::RobotC,
        ExperimentId::PendC1,
        ExperimentId::PendC2,
        ExperimentId::PendC3,
        ExperimentId::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::RobotC => "robot_c",
            ExperimentId::PendC1 => "pend_c1",
            ExperimentId::PendC2 => "pend_c2",
            ExperimentId::PendC3 => "pend_c3",
            ExperimentId::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemId {
    Robot,
    Pendulum,
}

impl SystemId {
    fn name(self) -> &'static str {
        match self {
            SystemId::Robot => "robot",
            SystemId::Pendulum => "pendulum",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "robot" => Ok(SystemId::Robot),
            "pendulum" => Ok(SystemId::Pendulum),
            _ => Err(Error::Config(format!("unknown system `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub runs: usize,

    pub system: SystemId,
    pub integrator: Integrator,
    pub n_s: Vec<usize>,
    pub lambda: f64,

    pub population: usize,
    pub generations: usize,
    pub n_f: Vec<usize>,
    /// Per-target override of `n_f`, as `(target name, values)`.
    pub n_f_by_target: Vec<(String, Vec<usize>)>,
    pub max_depth: usize,
    pub functions: FunctionSet,
    pub reselect_every: usize,
    pub eval_budget: Option<u64>,

    pub gamma: f64,
    pub u_max: f64,
    pub n_actions: usize,
    pub grid_points: Vec<usize>,
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub reference: Vec<f64>,
    pub success_band: Vec<f64>,
    pub wrapped_reward: bool,
    pub plant: Integrator,
    pub rollout_steps: usize,
    pub exploration_std: f64,
    pub x0: Vec<f64>,

    pub n_models: usize,
    pub eval_rollouts: usize,
    pub eval_steps: usize,
    pub eval_jitter: Vec<f64>,
    pub initial_samples: usize,
    pub input_range: Vec<f64>,
    pub swing_up_steps: usize,
    pub exploration_stds: Vec<f64>,

    pub llr_k: usize,
    pub llr_memory: usize,
    pub llr_scaled: bool,
}

/// Generations per run in the desk-scale presets.
pub const DESK_GENERATIONS: usize = 10_000;
/// Runs per table cell in the desk-scale presets.
pub const DESK_RUNS: usize = 11;

impl ExperimentConfig {
    pub fn preset(id: ExperimentId) -> Self {
        let pendulum = Self {
            experiment: id,
            seed: 0,
            runs: DESK_RUNS,
            system: SystemId::Pendulum,
            integrator: Integrator::Euler,
            n_s: vec![20],
            lambda: 0.0,
            population: 500,
            generations: DESK_GENERATIONS,
            n_f: vec![2],
            n_f_by_target: vec![("alpha_next".into(), vec![2]), ("alpha_dot_next".into(), vec![4])],
            max_depth: 7,
            functions: FunctionSet::arithmetic_trig_sign(),
            reselect_every: 250,
            eval_budget: None,
            gamma: 0.98,
            u_max: 2.0,
            n_actions: 15,
            grid_points: vec![41, 41],
            tolerance: 1e-6,
            max_sweeps: 5000,
            reference: vec![std::f64::consts::PI, 0.0],
            success_band: vec![0.2, 2.0],
            wrapped_reward: true,
            plant: Integrator::Euler,
            rollout_steps: 100,
            exploration_std: 0.0,
            x0: vec![0.0, 0.0],
            n_models: 30,
            eval_rollouts: 50,
            eval_steps: 100,
            eval_jitter: vec![0.05, 0.5],
            initial_samples: 100,
            input_range: vec![-2.0, 2.0],
            swing_up_steps: 50,
            exploration_stds: vec![0.0, 0.0, 0.0, 0.0, 0.2, 0.3, 0.4, 0.5],
            llr_k: 10,
            llr_memory: 1000,
            llr_scaled: false,
        };
        match id {
            ExperimentId::PendC1 | ExperimentId::Custom => pendulum,
            ExperimentId::RobotC => Self {
                system: SystemId::Robot,
                n_s: vec![100],
                n_f_by_target: Vec::new(),
                functions: FunctionSet::arithmetic_trig(),
                ..pendulum
            },
            ExperimentId::PendC2 => Self {
                integrator: Integrator::Rk4,
                n_s: vec![1000],
                n_f: vec![10],
                n_f_by_target: Vec::new(),
                ..pendulum
            },
            ExperimentId::PendC3 => Self {
                integrator: Integrator::Rk4,
                plant: Integrator::Rk4,
                n_s: vec![100],
                n_f: vec![10],
                n_f_by_target: Vec::new(),
                ..pendulum
            },
        }
    }

    /// `n_f` values tested for a target.
    pub fn n_f_for(&self, target: &str) -> &[usize] {
        self.n_f_by_target
            .iter()
            .find(|(t, _)| t == target)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&self.n_f)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.runs == 0 || self.runs.is_multiple_of(2) {
            return bad("runs must be odd and positive");
        }
        if self.n_s.is_empty() || self.n_s.contains(&0) {
            return bad("data.n_s must list positive sizes");
        }
        if !(self.lambda >= 0.0) {
            return bad("data.lambda must be ≥ 0");
        }
        if self.n_f.is_empty() || self.n_f.contains(&0) || self.n_f_by_target.iter().any(|(_, v)| v.is_empty() || v.contains(&0)) {
            return bad("n_f values must be positive");
        }
        if self.grid_points.len() != 2 || self.grid_points.iter().any(|&p| p < 2) {
            return bad("rl.grid_points needs two values ≥ 2");
        }
        if self.reference.len() != 2 || self.success_band.len() != 2 || self.x0.len() != 2 || self.eval_jitter.len() != 2 {
            return bad("rl.reference, rl.success_band, rl.x0 and refine.eval_jitter need two values");
        }
        if self.input_range.len() != 2 || !(self.input_range[0] < self.input_range[1]) {
            return bad("refine.input_range needs `lo, hi` with lo < hi");
        }
        if !(self.u_max > 0.0) || self.n_actions == 0 {
            return bad("rl.u_max and rl.n_actions must be positive");
        }
        if self.llr_k == 0 || self.llr_memory == 0 {
            return bad("baseline.k and baseline.memory must be positive");
        }
        if self.rollout_steps == 0 || !(self.exploration_std >= 0.0) {
            return bad("rl.rollout_steps must be positive and rl.exploration_std ≥ 0");
        }
        self.evolve_template(0).validate()?;
        self.rl_config()?;
        self.refinement_config()?.validate()
    }

    pub fn evolve_template(&self, n_f: usize) -> srrl::evolve::EvolveConfig {
        srrl::evolve::EvolveConfig {
            population_size: self.population,
            generations: self.generations,
            n_features: n_f.max(1),
            max_depth: self.max_depth,
            function_set: self.functions.clone(),
            seed: self.seed,
            target_index: 0,
            fitness_eval_budget: self.eval_budget,
            reselect_every: self.reselect_every,
        }
    }

    pub fn rl_config(&self) -> Result<srrl::rl::RlConfig> {
        let mut cfg = srrl::rl::RlConfig::pendulum(self.u_max, self.n_actions)?;
        cfg.gamma = self.gamma;
        cfg.axes = vec![
            srrl::rl::Axis::uniform("alpha", -std::f64::consts::PI, std::f64::consts::PI, self.grid_points[0], true)?,
            srrl::rl::Axis::uniform("alpha_dot", -40.0, 40.0, self.grid_points[1], false)?,
        ];
        cfg.tolerance = self.tolerance;
        cfg.max_sweeps = self.max_sweeps;
        cfg.reference = self.reference.clone();
        cfg.success_band = self.success_band.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn refinement_config(&self) -> Result<srrl::rl::RefinementConfig> {
        Ok(srrl::rl::RefinementConfig {
            evolve: self.evolve_template(*self.n_f.first().unwrap_or(&1)),
            rl: self.rl_config()?,
            n_models: self.n_models,
            eval_rollouts: self.eval_rollouts,
            eval_steps: self.eval_steps,
            eval_jitter: self.eval_jitter.clone(),
            initial_samples: self.initial_samples,
            input_range: (self.input_range[0], self.input_range[1]),
            swing_up_steps: self.swing_up_steps,
            exploration_stds: self.exploration_stds.clone(),
        })
    }

    /// All keys with their values, in file order.
    fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| join(v.iter());
        let flist = |v: &[f64]| join(v.iter());
        vec![
            ("experiment", self.experiment.name().into()),
            ("seed", self.seed.to_string()),
            ("runs", self.runs.to_string()),
            ("data.system", self.system.name().into()),
            ("data.integrator", self.integrator.name().into()),
            ("data.n_s", list(&self.n_s)),
            ("data.lambda", self.lambda.to_string()),
            ("evolve.population", self.population.to_string()),
            ("evolve.generations", self.generations.to_string()),
            ("evolve.n_f", list(&self.n_f)),
            (
                "evolve.n_f_by_target",
                self.n_f_by_target
                    .iter()
                    .map(|(t, v)| format!("{t}:{}", list(v)))
                    .collect::<Vec<_>>()
                    .join("; "),
            ),
            ("evolve.max_depth", self.max_depth.to_string()),
            ("evolve.functions", self.functions.to_string()),
            ("evolve.reselect_every", self.reselect_every.to_string()),
            (
                "evolve.eval_budget",
                self.eval_budget.map(|b| b.to_string()).unwrap_or_else(|| "none".into()),
            ),
            ("rl.gamma", self.gamma.to_string()),
            ("rl.u_max", self.u_max.to_string()),
            ("rl.n_actions", self.n_actions.to_string()),
            ("rl.grid_points", list(&self.grid_points)),
            ("rl.tolerance", self.tolerance.to_string()),
            ("rl.max_sweeps", self.max_sweeps.to_string()),
            ("rl.reference", flist(&self.reference)),
            ("rl.success_band", flist(&self.success_band)),
            ("rl.wrapped_reward", self.wrapped_reward.to_string()),
            ("rl.plant", self.plant.name().into()),
            ("rl.rollout_steps", self.rollout_steps.to_string()),
            ("rl.exploration_std", self.exploration_std.to_string()),
            ("rl.x0", flist(&self.x0)),
            ("refine.n_models", self.n_models.to_string()),
            ("refine.eval_rollouts", self.eval_rollouts.to_string()),
            ("refine.eval_steps", self.eval_steps.to_string()),
            ("refine.eval_jitter", flist(&self.eval_jitter)),
            ("refine.initial_samples", self.initial_samples.to_string()),
            ("refine.input_range", flist(&self.input_range)),
            ("refine.swing_up_steps", self.swing_up_steps.to_string()),
            ("refine.exploration_stds", flist(&self.exploration_stds)),
            ("baseline.k", self.llr_k.to_string()),
            ("baseline.memory", self.llr_memory.to_string()),
            ("baseline.scaled", self.llr_scaled.to_string()),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = ExperimentId::parse(value)?,
            "seed" => self.seed = num(key, value)?,
            "runs" => self.runs = num(key, value)?,
            "data.system" => self.system = SystemId::parse(value)?,
            "data.integrator" => self.integrator = Integrator::parse(value).map_err(to_config)?,
            "data.n_s" => self.n_s = nums(key, value)?,
            "data.lambda" => self.lambda = num(key, value)?,
            "evolve.population" => self.population = num(key, value)?,
            "evolve.generations" => self.generations = num(key, value)?,
            "evolve.n_f" => self.n_f = nums(key, value)?,
            "evolve.n_f_by_target" => {
                self.n_f_by_target = value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|item| {
                        let (t, v) = item
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("{key}: expected `target:n_f,...`, got `{item}`")))?;
                        Ok((t.trim().to_string(), nums(key, v)?))
                    })
                    .collect::<Result<_>>()?
            }
            "evolve.max_depth" => self.max_depth = num(key, value)?,
            "evolve.functions" => self.functions = FunctionSet::parse(value).map_err(to_config)?,
            "evolve.reselect_every" => self.reselect_every = num(key, value)?,
            "evolve.eval_budget" => {
                self.eval_budget = match value {
                    "none" | "" => None,
                    v => Some(num(key, v)?),
                }
            }
            "rl.gamma" => self.gamma = num(key, value)?,
            "rl.u_max" => self.u_max = num(key, value)?,
            "rl.n_actions" => self.n_actions = num(key, value)?,
            "rl.grid_points" => self.grid_points = nums(key, value)?,
            "rl.tolerance" => self.tolerance = num(key, value)?,
            "rl.max_sweeps" => self.max_sweeps = num(key, value)?,
            "rl.reference" => self.reference = nums(key, value)?,
            "rl.success_band" => self.success_band = nums(key, value)?,
            "rl.wrapped_reward" => self.wrapped_reward = num(key, value)?,
            "rl.plant" => self.plant = Integrator::parse(value).map_err(to_config)?,
            "rl.rollout_steps" => self.rollout_steps = num(key, value)?,
            "rl.exploration_std" => self.exploration_std = num(key, value)?,
            "rl.x0" => self.x0 = nums(key, value)?,
            "refine.n_models" => self.n_models = num(key, value)?,
            "refine.eval_rollouts" => self.eval_rollouts = num(key, value)?,
            "refine.eval_steps" => self.eval_steps = num(key, value)?,
            "refine.eval_jitter" => self.eval_jitter = nums(key, value)?,
            "refine.initial_samples" => self.initial_samples = num(key, value)?,
            "refine.input_range" => self.input_range = nums(key, value)?,
            "refine.swing_up_steps" => self.swing_up_steps = num(key, value)?,
            "refine.exploration_stds" => self.exploration_stds = nums(key, value)?,
            "baseline.k" => self.llr_k = num(key, value)?,
            "baseline.memory" => self.llr_memory = num(key, value)?,
            "baseline.scaled" => self.llr_scaled = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if pairs.iter().any(|(p, _): &(&str, &str)| *p == k) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            pairs.push((k, v));
        }
        let id = match pairs.iter().find(|(k, _)| *k == "experiment") {
            Some((_, v)) => ExperimentId::parse(v)?,
            None => ExperimentId::Custom,
        };
        let mut cfg = Self::preset(id);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn to_config(e: Error) -> Error {
    Error::Config(e.to_string())
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn nums<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for id in ExperimentId::ALL {
            let cfg = ExperimentConfig::preset(id);
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg, "{}", id.name());
        }
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# c2 at two sizes\nexperiment = pend_c2\ndata.n_s = 500, 1000  # trailing\nevolve.n_f = 2\ndata.lambda = 0.05\n",
        )
        .unwrap();
        assert_eq!(cfg.integrator, Integrator::Rk4);
        assert_eq!(cfg.n_s, vec![500, 1000]);
        assert_eq!(cfg.n_f, vec![2]);
        assert_eq!(cfg.lambda, 0.05);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn per_target_n_f() {
        let cfg = ExperimentConfig::preset(ExperimentId::PendC1);
        assert_eq!(cfg.n_f_for("alpha_next"), &[2]);
        assert_eq!(cfg.n_f_for("alpha_dot_next"), &[4]);
        assert_eq!(cfg.n_f_for("other"), &[2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("evolve.nf = 2").is_err());
        assert!(ExperimentConfig::parse("seed = x").is_err());
        assert!(ExperimentConfig::parse("seed").is_err());
        assert!(ExperimentConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(ExperimentConfig::parse("experiment = pend_c9").is_err());
        assert!(ExperimentConfig::parse("runs = 4").unwrap().validate().is_err());
    }
}
