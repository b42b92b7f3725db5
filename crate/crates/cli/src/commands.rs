//! One function per CLI verb. Every command writes its artifacts under the
//! output directory and echoes a short summary on stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use srrl::baseline::{llr_rmse, LlrMemory};
use srrl::dynamics::{Integrator, System};
use srrl::evolve::{evolve, median, run_median_experiment, MedianExperiment, MedianTable};
use srrl::experiments::{pendulum_test, pendulum_training, robot_test, robot_training};
use srrl::model::{format_float, rmse, Dataset, FeatureModel};
use srrl::rl::{
    empty_report, model_step_from, reward_pendulum, reward_pendulum_unwrapped, rollout, run_refinement,
    value_iteration, ValueFunction,
};
use srrl::seed;
use srrl::{Error, Result};

use crate::config::{ExperimentConfig, SystemId};

pub const MEDIAN_TABLE_FILE: &str = "median_table.csv";

/// Exit status for an error: 2 configuration, 3 data, 4 non-convergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::NotConverged { .. } => 4,
        _ => 3,
    }
}

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn write(&self, rel: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&p, contents)?;
        Ok(p)
    }

    /// Record the resolved configuration of `verb` next to its outputs.
    fn write_config(&self, verb: &str) -> Result<()> {
        self.write(&config_file(verb), &self.config.to_text()).map(|_| ())
    }
}

pub fn config_file(verb: &str) -> String {
    format!("config_{verb}.txt")
}

fn train_file(n_s: usize) -> String {
    format!("data/train_ns{n_s}.csv")
}

const TEST_FILE: &str = "data/test_grid.csv";

fn load_dataset(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::InsufficientData(format!(
            "dataset {} does not exist (run `sim-gen` first or pass a path)",
            path.display()
        )));
    }
    Dataset::load(path)
}

fn generate_training(cfg: &ExperimentConfig, n_s: usize) -> Result<Dataset> {
    match cfg.system {
        SystemId::Robot => robot_training(n_s, cfg.seed),
        SystemId::Pendulum => pendulum_training(n_s, cfg.integrator, cfg.lambda, cfg.seed),
    }
}

fn generate_test(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.system {
        SystemId::Robot => robot_test(),
        SystemId::Pendulum => pendulum_test(cfg.integrator),
    }
}

pub fn sim_gen(ctx: &Context) -> Result<()> {
    ctx.write_config("sim-gen")?;
    let mut manifest = String::new();
    for &n_s in &ctx.config.n_s {
        let ds = generate_training(&ctx.config, n_s)?;
        let p = ctx.path(&train_file(n_s));
        fs::create_dir_all(p.parent().expect("has parent"))?;
        ds.save(&p)?;
        let _ = writeln!(manifest, "{} {} rows", p.display(), ds.n_rows());
    }
    let test = generate_test(&ctx.config)?;
    let p = ctx.path(TEST_FILE);
    test.save(&p)?;
    let _ = writeln!(manifest, "{} {} rows", p.display(), test.n_rows());
    print!("{manifest}");
    Ok(())
}

pub fn evolve_cmd(ctx: &Context, data: Option<&Path>, test: Option<&Path>) -> Result<()> {
    let cfg = &ctx.config;
    let test = load_dataset(&test.map(Path::to_path_buf).unwrap_or_else(|| ctx.path(TEST_FILE)))?;
    let mut training: BTreeMap<usize, Dataset> = BTreeMap::new();
    match data {
        Some(p) => {
            let ds = load_dataset(p)?;
            training.insert(ds.n_rows(), ds);
        }
        None => {
            for &n_s in &cfg.n_s {
                training.insert(n_s, load_dataset(&ctx.path(&train_file(n_s)))?);
            }
        }
    }
    let first = training.values().next().expect("at least one training set");
    if first.target_names() != test.target_names() || first.regressor_names() != test.regressor_names() {
        return Err(Error::Dimension("training and test columns differ".into()));
    }
    let targets = first
        .target_names()
        .iter()
        .enumerate()
        .map(|(t, name)| (t, cfg.n_f_for(name).to_vec()))
        .collect();
    let exp = MedianExperiment {
        targets,
        n_s_values: training.keys().copied().collect(),
        n_runs: cfg.runs,
        template: cfg.evolve_template(1),
        seed: seed::derive(cfg.seed, "evolve", 0),
    };
    let table = run_median_experiment(
        &exp,
        |n_s, _| Ok(training.get(&n_s).expect("requested size was loaded").clone()),
        &test,
    )?;
    ctx.write_config("evolve")?;
    for row in &table.rows {
        let stem = format!("{}_nf{}_ns{}", row.target, row.n_f, row.n_s);
        let best = row.best_run.as_ref().expect("fresh tables carry their best run");
        ctx.write(&format!("models/{stem}.txt"), &format!("{}\n", best.best_model.to_text()))?;
        best.best_model.save_json(ctx.path(&format!("models/{stem}.json")))?;
        let mut trace = String::from("generation,training_rmse\n");
        for (g, r) in &best.fitness_trace {
            let _ = writeln!(trace, "{g},{}", format_float(*r));
        }
        ctx.write(&format!("traces/{stem}.csv"), &trace)?;
    }
    let csv = table.to_csv();
    ctx.write(MEDIAN_TABLE_FILE, &csv)?;
    print!("{csv}");
    Ok(())
}

type Step = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync>;

fn plant_step(integrator: Integrator) -> Step {
    let sys = System::pendulum();
    Box::new(move |x: &[f64], u: &[f64]| sys.step(integrator, x, u))
}

/// Learned model from JSON files (one per state, in state order), or the
/// reference plant when none are given.
fn model_step(ctx: &Context, models: &[PathBuf]) -> Result<Step> {
    if models.is_empty() {
        return Ok(plant_step(ctx.config.plant));
    }
    let loaded = models
        .iter()
        .map(|p| {
            if !p.exists() {
                return Err(Error::InsufficientData(format!("model {} does not exist", p.display())));
            }
            FeatureModel::load_json(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_x = System::pendulum().state_names().len();
    if loaded.len() != n_x || loaded.iter().any(|m| m.regressor_dim() != n_x + 1) {
        return Err(Error::Dimension(format!(
            "expected {n_x} pendulum models over (alpha, alpha_dot, u)"
        )));
    }
    Ok(Box::new(model_step_from(loaded)))
}

fn reward_fn(cfg: &ExperimentConfig) -> impl Fn(&[f64], &[f64], &[f64]) -> f64 + Sync + '_ {
    move |x: &[f64], u: &[f64], _: &[f64]| {
        if cfg.wrapped_reward {
            reward_pendulum(x, u, &cfg.reference)
        } else {
            reward_pendulum_unwrapped(x, u, &cfg.reference)
        }
    }
}

pub fn vi(ctx: &Context, models: &[PathBuf]) -> Result<()> {
    let rl = ctx.config.rl_config()?;
    let step = model_step(ctx, models)?;
    ctx.write_config("vi")?;
    let res = value_iteration(&step, reward_fn(&ctx.config), &rl)?;
    let mut trace = String::from("sweep,sup_change\n");
    for (k, r) in res.residuals.iter().enumerate() {
        let _ = writeln!(trace, "{},{}", k + 1, format_float(*r));
    }
    ctx.write("vi_trace.csv", &trace)?;
    let p = ctx.write("value_function.csv", &res.value.to_csv())?;
    println!("converged after {} sweeps; value function written to {}", res.sweeps, p.display());
    Ok(())
}

pub fn rollout_cmd(ctx: &Context, models: &[PathBuf], value: Option<&Path>) -> Result<()> {
    let cfg = &ctx.config;
    let rl = cfg.rl_config()?;
    let vpath = value.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("value_function.csv"));
    if !vpath.exists() {
        return Err(Error::InsufficientData(format!(
            "value function {} does not exist (run `vi` first)",
            vpath.display()
        )));
    }
    let v = ValueFunction::load(&vpath)?;
    let step = model_step(ctx, models)?;
    let plant = plant_step(cfg.plant);
    let mut rng = seed::rng_for(cfg.seed, "rollout", 0);
    let reward = reward_fn(cfg);
    let r = rollout(&plant, &v, &step, &reward, &rl, &cfg.x0, cfg.rollout_steps, cfg.exploration_std, &mut rng)?;
    ctx.write_config("rollout")?;
    let sys = System::pendulum();
    ctx.write("rollout.csv", &r.to_csv(sys.state_names(), sys.input_names(), srrl::dynamics::TS))?;
    let mut summary = String::new();
    let _ = writeln!(summary, "steps = {}", r.actions.len());
    let _ = writeln!(summary, "return = {}", format_float(r.discounted_return));
    let _ = writeln!(summary, "success = {}", r.success);
    let _ = writeln!(
        summary,
        "steps_to_success = {}",
        r.steps_to_success.map(|s| s.to_string()).unwrap_or_else(|| "none".into())
    );
    let _ = writeln!(summary, "aborted = {}", r.aborted);
    ctx.write("rollout_summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn refine(ctx: &Context) -> Result<()> {
    let rcfg = ctx.config.refinement_config()?;
    rcfg.validate()?;
    ctx.write_config("refine")?;
    let plant = plant_step(ctx.config.plant);
    let mut report = empty_report();
    let outcome = run_refinement(&plant, &rcfg, seed::derive(ctx.config.seed, "refine", 0), &mut report);
    if let Err(e) = &outcome {
        report.failure = Some(e.to_string());
    }
    ctx.write("refine_report.csv", &report.to_csv())?;
    let summary = report.summary();
    ctx.write("refine_summary.txt", &summary)?;
    print!("{summary}");
    outcome
}

pub fn baseline(ctx: &Context, data: Option<&Path>, test: Option<&Path>, models: &[PathBuf]) -> Result<()> {
    let cfg = &ctx.config;
    let train_path = data
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.path(&train_file(cfg.n_s[0])));
    let train = load_dataset(&train_path)?;
    let test = load_dataset(&test.map(Path::to_path_buf).unwrap_or_else(|| ctx.path(TEST_FILE)))?;
    if train.target_names() != test.target_names() {
        return Err(Error::Dimension("training and test targets differ".into()));
    }
    let mut memory = LlrMemory::from_dataset(&train, cfg.llr_memory)?;
    if cfg.llr_scaled {
        memory.enable_range_scaling();
    }
    let llr = llr_rmse(&memory, &test, cfg.llr_k)?;

    let loaded: Vec<FeatureModel> = models.iter().map(FeatureModel::load_json).collect::<Result<_>>()?;
    if !loaded.is_empty() && loaded.len() != train.n_targets() {
        return Err(Error::Dimension(format!("{} models for {} targets", loaded.len(), train.n_targets())));
    }
    let mut csv = String::from("target,llr_rmse,sr_rmse,sr_runs\n");
    for (t, name) in train.target_names().iter().enumerate() {
        let (sr, runs) = if let Some(m) = loaded.get(t) {
            (rmse(m, &test, t)?, 1)
        } else {
            let n_f = cfg.n_f_for(name)[0];
            let scores = (0..cfg.runs)
                .map(|run| {
                    let ecfg = srrl::evolve::EvolveConfig {
                        target_index: t,
                        seed: seed::derive(cfg.seed, &format!("baseline/{t}"), run as u64),
                        ..cfg.evolve_template(n_f)
                    };
                    let res = evolve(&train, &ecfg)?;
                    rmse(&res.best_model, &test, t)
                })
                .collect::<Result<Vec<_>>>()?;
            (median(&scores), cfg.runs)
        };
        let _ = writeln!(csv, "{name},{},{},{runs}", format_float(llr[t]), format_float(sr));
    }
    ctx.write_config("baseline")?;
    ctx.write("baseline_table.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

/// Every file called `name` below `dir`, in sorted path order.
fn find_files(dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_files(&p, name, out)?;
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
    Ok(())
}

fn experiment_label(dir: &Path) -> String {
    ExperimentConfig::load(&dir.join(config_file("evolve")))
        .map(|c| c.experiment.name().to_string())
        .unwrap_or_else(|_| "unknown".into())
}

pub const REPORT_HEADER: &str = "experiment,source,target,n_f,n_s,median_rmse,runs";

/// Merge every median table below `dir` into `report.csv` and collect
/// baseline and refinement outputs into `report.txt`.
pub fn report(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::InsufficientData(format!("{} is not a directory", dir.display())));
    }
    let rel = |p: &Path| {
        let parent = p.parent().unwrap_or(dir);
        let r = parent.strip_prefix(dir).unwrap_or(parent).display().to_string();
        if r.is_empty() { ".".to_string() } else { r }
    };
    let mut tables = Vec::new();
    find_files(dir, MEDIAN_TABLE_FILE, &mut tables)?;
    let mut rows = Vec::new();
    for p in &tables {
        let table = MedianTable::from_csv(&fs::read_to_string(p)?).map_err(|e| Error::Malformed {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let exp = experiment_label(p.parent().unwrap_or(dir));
        let src = rel(p);
        for r in table.rows {
            rows.push((exp.clone(), r.target, r.n_f, r.n_s, src.clone(), r.median_rmse, r.runs));
        }
    }
    rows.sort_by(|a, b| (&a.0, &a.1, a.2, a.3, &a.4).cmp(&(&b.0, &b.1, b.2, b.3, &b.4)));
    let mut csv = format!("{REPORT_HEADER}\n");
    for (exp, target, n_f, n_s, src, m, runs) in &rows {
        let _ = writeln!(csv, "{exp},{src},{target},{n_f},{n_s},{},{runs}", format_float(*m));
    }

    let mut text = format!("median tables: {} rows from {} files\n", rows.len(), tables.len());
    text.push_str(&csv);
    for (file, title) in [("baseline_table.csv", "baseline comparison"), ("refine_summary.txt", "refinement")] {
        let mut found = Vec::new();
        find_files(dir, file, &mut found)?;
        for p in found {
            let _ = writeln!(text, "\n{title} ({}):", rel(&p));
            text.push_str(&fs::read_to_string(&p)?);
        }
    }
    fs::write(dir.join("report.csv"), &csv)?;
    fs::write(dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
