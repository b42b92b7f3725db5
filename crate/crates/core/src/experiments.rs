//! Data-set protocols of the robot and pendulum experiments.

use crate::dynamics::{grid_dataset, noisy_dataset, random_trajectory, uniform_in, Integrator, NoiseConfig, System};
use crate::error::{Error, Result};
use crate::model::{build_state_space_dataset, Dataset, Episode};
use crate::seed;

/// Grid points per dimension of the robot test set.
pub const ROBOT_GRID_POINTS: usize = 11;
/// Grid points per dimension of the pendulum test set.
pub const PENDULUM_GRID_POINTS: usize = 31;
/// Steps per robot training episode (input held constant within an episode).
pub const ROBOT_EPISODE_STEPS: usize = 5;

/// Robot training data: episodes from random initial states in the nominal
/// ranges, each with one random input held for the whole episode.
pub fn robot_training(n_s: usize, master_seed: u64) -> Result<Dataset> {
    if n_s == 0 {
        return Err(Error::InvalidArgument("n_s must be at least 1".into()));
    }
    let sys = System::MobileRobot;
    let mut rng = seed::rng_for(master_seed, "robot_training", n_s as u64);
    let mut episodes = Vec::new();
    let mut rows = 0;
    while rows < n_s {
        let len = ROBOT_EPISODE_STEPS.min(n_s - rows);
        let x0 = uniform_in(&sys.state_ranges(), &mut rng);
        let u = uniform_in(&sys.input_ranges(), &mut rng);
        let mut ep = Episode::new(x0);
        for _ in 0..len {
            let x = ep.states.last().expect("non-empty").clone();
            let next = sys.step(Integrator::Euler, &x, &u);
            ep.push(u.clone(), next);
        }
        rows += len;
        episodes.push(ep);
    }
    let (ds, _) = build_state_space_dataset(&episodes, &sys.regressor_spec())?;
    Ok(ds.with_provenance(format!(
        "generator=robot_training seed={master_seed} ts={} lambda=0",
        crate::dynamics::TS
    )))
}

/// Robot test grid (11 points per state and input dimension).
pub fn robot_test() -> Result<Dataset> {
    let sys = System::MobileRobot;
    let mut ranges = sys.state_ranges();
    ranges.extend(sys.input_ranges());
    let points = vec![ROBOT_GRID_POINTS; ranges.len()];
    let ds = grid_dataset(&sys.regressor_spec(), &ranges, &points, |x, u| sys.step(Integrator::Euler, x, u))?;
    Ok(ds.with_provenance(format!("generator=robot_grid ts={}", crate::dynamics::TS)))
}

/// Pendulum training data: one trajectory of `n_s` steps from rest at the
/// bottom, input drawn uniformly each step, then measurement noise.
pub fn pendulum_training(n_s: usize, integrator: Integrator, lambda: f64, master_seed: u64) -> Result<Dataset> {
    if n_s == 0 {
        return Err(Error::InvalidArgument("n_s must be at least 1".into()));
    }
    let sys = System::pendulum();
    let mut rng = seed::rng_for(master_seed, "pendulum_training", n_s as u64);
    let ep = random_trajectory(
        |x, u| sys.step(integrator, x, u),
        &[0.0, 0.0],
        &sys.input_ranges(),
        n_s,
        &mut rng,
    )?;
    let (clean, _) = build_state_space_dataset(&[ep], &sys.regressor_spec())?;
    let mut noise_rng = seed::rng_for(master_seed, "noise", n_s as u64);
    let ds = noisy_dataset(&clean, &NoiseConfig::pendulum(lambda), &mut noise_rng)?;
    Ok(ds.with_provenance(format!(
        "generator=pendulum_training integrator={} seed={master_seed} ts={} lambda={lambda}",
        integrator.name(),
        crate::dynamics::TS
    )))
}

/// Pendulum test grid (31 points over angle, velocity and input).
pub fn pendulum_test(integrator: Integrator) -> Result<Dataset> {
    let sys = System::pendulum();
    let mut ranges = sys.state_ranges();
    ranges.extend(sys.input_ranges());
    let points = vec![PENDULUM_GRID_POINTS; ranges.len()];
    let ds = grid_dataset(&sys.regressor_spec(), &ranges, &points, |x, u| sys.step(integrator, x, u))?;
    Ok(ds.with_provenance(format!(
        "generator=pendulum_grid integrator={} ts={}",
        integrator.name(),
        crate::dynamics::TS
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robot_sizes() {
        assert_eq!(robot_training(100, 3).unwrap().n_rows(), 100);
        assert_eq!(robot_training(7, 3).unwrap().n_rows(), 7);
        assert_eq!(robot_test().unwrap().n_rows(), 161_051);
    }

    #[test]
    fn pendulum_sizes() {
        let d = pendulum_training(20, Integrator::Euler, 0.0, 1).unwrap();
        assert_eq!(d.n_rows(), 20);
        assert_eq!(d.regressor_row(0), vec![0.0, 0.0, d.regressor_row(0)[2]]);
        assert_eq!(pendulum_test(Integrator::Rk4).unwrap().n_rows(), 29_791);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = pendulum_training(50, Integrator::Rk4, 0.05, 9).unwrap();
        let b = pendulum_training(50, Integrator::Rk4, 0.05, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, pendulum_training(50, Integrator::Rk4, 0.05, 10).unwrap());
    }
}
