//! Reference simulators, integrators, excitation signals and noise.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::sign;
use crate::model::{Dataset, Episode, RegressorSpec};
use crate::seed::Rng;

/// Sampling period used by both reference systems.
pub const TS: f64 = 0.05;

/// Physical parameters of the inverted pendulum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    /// inertia, kg·m²
    pub j: f64,
    /// mass, kg
    pub m: f64,
    /// gravity, m·s⁻²
    pub g: f64,
    /// length, m
    pub l: f64,
    /// viscous damping, N·m·s·rad⁻¹
    pub b: f64,
    /// motor constant, N·m·A⁻¹
    pub k: f64,
    /// rotor resistance, Ω
    pub r: f64,
    /// Coulomb friction, kg·m²·s⁻²
    pub c: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            j: 1.7937e-4,
            m: 0.055,
            g: 9.81,
            l: 0.042,
            b: 1.94e-5,
            k: 0.0536,
            r: 9.5,
            c: 8.5e-4,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.j, self.m, self.g, self.l, self.b, self.k, self.r, self.c];
        if all.iter().any(|v| !v.is_finite()) || self.j <= 0.0 || self.m <= 0.0 || self.r <= 0.0 {
            return Err(Error::InvalidArgument("pendulum J, m and R must be positive".into()));
        }
        if self.b < 0.0 || self.c < 0.0 {
            return Err(Error::InvalidArgument("pendulum b and c must be non-negative".into()));
        }
        Ok(())
    }
}

/// `(α̇, α̈)` for state `(α, α̇)` and motor voltage `u`.
pub fn pendulum_derivative(x: &[f64], u: &[f64], p: &PendulumParams) -> Vec<f64> {
    let (alpha, omega, volts) = (x[0], x[1], u[0]);
    let torque = p.k / p.r * volts
        - p.m * p.g * p.l * alpha.sin()
        - p.b * omega
        - p.k * p.k / p.r * omega
        - p.c * sign(omega);
    vec![omega, torque / p.j]
}

/// Unicycle kinematics: state `(x_pos, y_pos, φ)`, input `(v_f, v_a)`.
pub fn mobile_robot_derivative(x: &[f64], u: &[f64]) -> Vec<f64> {
    let (phi, vf, va) = (x[2], u[0], u[1]);
    vec![vf * phi.cos(), vf * phi.sin(), va]
}

/// `x + T_s·f(x, u)`.
pub fn euler_step(deriv: impl Fn(&[f64], &[f64]) -> Vec<f64>, x: &[f64], u: &[f64], ts: f64) -> Vec<f64> {
    let d = deriv(x, u);
    x.iter().zip(d).map(|(xi, di)| xi + ts * di).collect()
}

/// Classical fourth-order Runge–Kutta with `u` held over the step.
pub fn rk4_step(deriv: impl Fn(&[f64], &[f64]) -> Vec<f64>, x: &[f64], u: &[f64], ts: f64) -> Vec<f64> {
    let offset = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = deriv(x, u);
    let k2 = deriv(&offset(x, &k1, ts / 2.0), u);
    let k3 = deriv(&offset(x, &k2, ts / 2.0), u);
    let k4 = deriv(&offset(x, &k3, ts), u);
    (0..x.len())
        .map(|i| x[i] + ts / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

impl Integrator {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            _ => Err(Error::InvalidArgument(format!("unknown integrator `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

/// A simulated plant with its nominal state/input domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum System {
    MobileRobot,
    Pendulum(PendulumParams),
}

impl System {
    pub fn pendulum() -> Self {
        System::Pendulum(PendulumParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::MobileRobot => "mobile_robot",
            System::Pendulum(_) => "pendulum",
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            System::MobileRobot => &["x_pos", "y_pos", "phi"],
            System::Pendulum(_) => &["alpha", "alpha_dot"],
        }
    }

    pub fn input_names(&self) -> &'static [&'static str] {
        match self {
            System::MobileRobot => &["v_f", "v_a"],
            System::Pendulum(_) => &["u"],
        }
    }

    pub fn regressor_spec(&self) -> RegressorSpec {
        RegressorSpec::state_space(self.state_names(), self.input_names())
    }

    /// State ranges of the test grid.
    pub fn state_ranges(&self) -> Vec<(f64, f64)> {
        match self {
            System::MobileRobot => vec![(-1.0, 1.0), (-1.0, 1.0), (-PI, PI)],
            System::Pendulum(_) => vec![(-PI, PI), (-40.0, 40.0)],
        }
    }

    /// Input ranges used for excitation and the test grid.
    pub fn input_ranges(&self) -> Vec<(f64, f64)> {
        match self {
            System::MobileRobot => vec![(-1.0, 1.0), (-PI / 2.0, PI / 2.0)],
            System::Pendulum(_) => vec![(-5.0, 5.0)],
        }
    }

    pub fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            System::MobileRobot => mobile_robot_derivative(x, u),
            System::Pendulum(p) => pendulum_derivative(x, u, p),
        }
    }

    /// One sampling period with the given integrator.
    pub fn step(&self, integrator: Integrator, x: &[f64], u: &[f64]) -> Vec<f64> {
        let f = |x: &[f64], u: &[f64]| self.derivative(x, u);
        match integrator {
            Integrator::Euler => euler_step(f, x, u, TS),
            Integrator::Rk4 => rk4_step(f, x, u, TS),
        }
    }
}

/// Two-level excitation: starts at a random sign and flips with probability
/// `p` at each step.
pub fn gbn_signal(n_steps: usize, amplitude: f64, p: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("switching probability {p} outside [0, 1]")));
    }
    let mut level = if rng.random_bool(0.5) { amplitude } else { -amplitude };
    let mut out = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        if k > 0 && rng.random_bool(p) {
            level = -level;
        }
        out.push(level);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationKind {
    UniformRandom,
    Gbn,
}

/// Input excitation for data collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationConfig {
    pub kind: ExcitationKind,
    pub ranges: Vec<(f64, f64)>,
    pub switch_prob: f64,
}

impl ExcitationConfig {
    pub fn uniform(ranges: Vec<(f64, f64)>) -> Self {
        Self {
            kind: ExcitationKind::UniformRandom,
            ranges,
            switch_prob: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_ranges(&self.ranges)?;
        if !(0.0..=1.0).contains(&self.switch_prob) {
            return Err(Error::InvalidArgument("switching probability outside [0, 1]".into()));
        }
        Ok(())
    }

    /// `n_steps` input vectors. GBN switches between the ends of each range.
    pub fn generate(&self, n_steps: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        match self.kind {
            ExcitationKind::UniformRandom => Ok((0..n_steps).map(|_| uniform_in(&self.ranges, rng)).collect()),
            ExcitationKind::Gbn => {
                let per_dim: Vec<Vec<f64>> = self
                    .ranges
                    .iter()
                    .map(|&(lo, hi)| {
                        let mid = 0.5 * (lo + hi);
                        gbn_signal(n_steps, 0.5 * (hi - lo), self.switch_prob, rng)
                            .map(|s| s.into_iter().map(|v| mid + v).collect())
                    })
                    .collect::<Result<_>>()?;
                Ok((0..n_steps).map(|k| per_dim.iter().map(|d| d[k]).collect()).collect())
            }
        }
    }
}

fn check_ranges(ranges: &[(f64, f64)]) -> Result<()> {
    for &(lo, hi) in ranges {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidArgument(format!("degenerate range [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// A vector drawn uniformly from a box.
pub fn uniform_in(ranges: &[(f64, f64)], rng: &mut Rng) -> Vec<f64> {
    ranges.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
}

/// Simulate `step` from `x0` under a fresh uniform input at every step.
pub fn random_trajectory(
    step: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    x0: &[f64],
    input_ranges: &[(f64, f64)],
    n_steps: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    check_ranges(input_ranges)?;
    let inputs: Vec<Vec<f64>> = (0..n_steps).map(|_| uniform_in(input_ranges, rng)).collect();
    Ok(trajectory_from_inputs(step, x0, &inputs))
}

/// Simulate `step` from `x0` for a given input sequence.
pub fn trajectory_from_inputs(step: impl Fn(&[f64], &[f64]) -> Vec<f64>, x0: &[f64], inputs: &[Vec<f64>]) -> Episode {
    let mut ep = Episode::new(x0.to_vec());
    for u in inputs {
        let x = ep.states.last().expect("non-empty").clone();
        ep.push(u.clone(), step(&x, u));
    }
    ep
}

/// Regular grid over the state×input box; targets are `step(x, u)`.
///
/// Rows are ordered lexicographically with the first dimension varying
/// slowest.
pub fn grid_dataset(
    spec: &RegressorSpec,
    ranges: &[(f64, f64)],
    points_per_dim: &[usize],
    step: impl Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
) -> Result<Dataset> {
    check_ranges(ranges)?;
    let names = spec.regressor_names();
    let RegressorSpec::StateSpace { state_names, .. } = spec else {
        return Err(Error::InvalidArgument("grid datasets need a state-space spec".into()));
    };
    let n = state_names.len();
    if ranges.len() != names.len() || points_per_dim.len() != names.len() {
        return Err(Error::Dimension(format!(
            "{} ranges and {} point counts for {} regressor dimensions",
            ranges.len(),
            points_per_dim.len(),
            names.len()
        )));
    }
    if points_per_dim.iter().any(|&p| p < 2) {
        return Err(Error::InvalidArgument("grid needs at least 2 points per dimension".into()));
    }
    let axes: Vec<Vec<f64>> = ranges
        .iter()
        .zip(points_per_dim)
        .map(|(&(lo, hi), &p)| linspace(lo, hi, p))
        .collect();
    let total: usize = points_per_dim.iter().product();
    let dim = names.len();
    let mut regs = vec![Vec::with_capacity(total); dim];
    let mut tgts = vec![Vec::with_capacity(total); n];
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    for _ in 0..total {
        for d in 0..dim {
            point[d] = axes[d][idx[d]];
            regs[d].push(point[d]);
        }
        let next = step(&point[..n], &point[n..]);
        for (col, v) in tgts.iter_mut().zip(next) {
            col.push(v);
        }
        // odometer, last dimension fastest
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < points_per_dim[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Dataset::from_columns(names, spec.target_names(), regs, tgts)
}

/// `p` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, p: usize) -> Vec<f64> {
    match p {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..p)
            .map(|i| {
                if i == p - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (p - 1) as f64
                }
            })
            .collect(),
    }
}

/// Additive Gaussian measurement noise `x + λ·sᵢ·N(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub lambda: f64,
    /// Per-dimension scale `sᵢ`.
    pub scales: Vec<f64>,
}

impl NoiseConfig {
    /// Scales `π` for the angle and `40` for the angular velocity.
    pub fn pendulum(lambda: f64) -> Self {
        Self {
            lambda,
            scales: vec![PI, 40.0],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == 0.0
    }
}

pub fn add_noise(x: &[f64], cfg: &NoiseConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {} must be ≥ 0", cfg.lambda)));
    }
    if cfg.scales.len() != x.len() {
        return Err(Error::Dimension(format!(
            "{} noise scales for a state of dimension {}",
            cfg.scales.len(),
            x.len()
        )));
    }
    if cfg.is_zero() {
        return Ok(x.to_vec());
    }
    Ok(x.iter()
        .zip(&cfg.scales)
        .map(|(v, s)| {
            let r: f64 = StandardNormal.sample(rng);
            v + s * cfg.lambda * r
        })
        .collect())
}

/// Copy of a state-space dataset with independent noise on the state part of
/// each regressor row and on each target row. Inputs are left clean.
pub fn noisy_dataset(ds: &Dataset, cfg: &NoiseConfig, rng: &mut Rng) -> Result<Dataset> {
    let n = ds.n_targets();
    if cfg.scales.len() != n || ds.regressor_dim() < n {
        return Err(Error::Dimension("noise scales must match the state dimension".into()));
    }
    if cfg.is_zero() {
        return Ok(ds.clone());
    }
    let mut rows = Vec::with_capacity(ds.n_rows());
    for (mut reg, tgt) in ds.rows() {
        let noisy_x = add_noise(&reg[..n], cfg, rng)?;
        reg[..n].copy_from_slice(&noisy_x);
        let noisy_t = add_noise(&tgt, cfg, rng)?;
        rows.push((reg, noisy_t));
    }
    let out = Dataset::from_rows(ds.regressor_names().to_vec(), ds.target_names().to_vec(), &rows)?;
    Ok(match ds.provenance() {
        Some(p) => out.with_provenance(p),
        None => out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn pend(x: &[f64], u: &[f64]) -> Vec<f64> {
        pendulum_derivative(x, u, &PendulumParams::default())
    }

    #[test]
    fn pendulum_derivative_examples() {
        assert_eq!(pend(&[0.0, 0.0], &[0.0]), vec![0.0, 0.0]);
        let up = pend(&[PI, 0.0], &[0.0]);
        assert_eq!(up[0], 0.0);
        assert!(up[1].abs() < 1e-12);
        let d = pend(&[0.0, 0.0], &[1.0]);
        assert!((d[1] - 0.0536 / (9.5 * 1.7937e-4)).abs() < 1e-12);
        assert!((d[1] - 31.455122).abs() < 1e-5);
    }

    #[test]
    fn robot_derivative_examples() {
        assert_eq!(mobile_robot_derivative(&[0.0, 0.0, 0.0], &[1.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let d = mobile_robot_derivative(&[0.0, 0.0, PI / 2.0], &[1.0, 0.0]);
        assert!(d[0].abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15 && d[2] == 0.0);
        assert_eq!(mobile_robot_derivative(&[0.3, 0.2, 1.0], &[0.0, 0.5]), vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn euler_examples() {
        assert_eq!(euler_step(pend, &[0.4, -2.0], &[1.0], 0.0), vec![0.4, -2.0]);
        let x = euler_step(pend, &[0.0, 0.0], &[1.0], TS);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 1.5727561084).abs() < 5e-10);
        let r = euler_step(mobile_robot_derivative, &[0.0, 0.0, 0.0], &[1.0, 0.0], TS);
        assert_eq!(r, vec![0.05, 0.0, 0.0]);
    }

    #[test]
    fn rk4_fixed_point() {
        assert_eq!(rk4_step(pend, &[0.0, 0.0], &[0.0], TS), vec![0.0, 0.0]);
    }

    #[test]
    fn gbn_extremes() {
        let mut rng = seed::rng(3);
        let s = gbn_signal(50, 2.0, 0.0, &mut rng).unwrap();
        assert!(s.iter().all(|&v| v == s[0]) && s[0].abs() == 2.0);
        let s = gbn_signal(50, 2.0, 1.0, &mut rng).unwrap();
        assert!(s.windows(2).all(|w| w[0] == -w[1]));
        assert!(gbn_signal(5, 1.0, 1.5, &mut rng).is_err());
    }

    #[test]
    fn gbn_flip_rate() {
        let s = gbn_signal(100_000, 1.0, 0.1, &mut seed::rng(11)).unwrap();
        let flips = s.windows(2).filter(|w| w[0] != w[1]).count();
        let rate = flips as f64 / (s.len() - 1) as f64;
        assert!((rate - 0.1).abs() <= 0.01, "rate {rate}");
        assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn gbn_excitation_spans_range_ends() {
        let cfg = ExcitationConfig {
            kind: ExcitationKind::Gbn,
            ranges: vec![(-5.0, 3.0)],
            switch_prob: 0.3,
        };
        let u = cfg.generate(200, &mut seed::rng(1)).unwrap();
        assert!(u.iter().all(|v| v[0] == -5.0 || v[0] == 3.0));
    }

    #[test]
    fn trajectory_shapes() {
        let ep = random_trajectory(|x, _| x.to_vec(), &[1.0, 2.0], &[(-5.0, 5.0)], 0, &mut seed::rng(0)).unwrap();
        assert_eq!(ep.states, vec![vec![1.0, 2.0]]);
        let step = |x: &[f64], u: &[f64]| System::pendulum().step(Integrator::Euler, x, u);
        let ep = random_trajectory(step, &[0.0, 0.0], &[(-5.0, 5.0)], 100, &mut seed::rng(0)).unwrap();
        assert_eq!(ep.transitions(), 100);
        for k in 0..100 {
            assert_eq!(ep.states[k + 1], step(&ep.states[k], &ep.inputs[k]));
        }
    }

    #[test]
    fn inputs_stay_in_range() {
        let mut rng = seed::rng(8);
        let ranges = [(-5.0, 5.0), (-0.5, 0.25)];
        for _ in 0..100_000 {
            let u = uniform_in(&ranges, &mut rng);
            assert!((-5.0..=5.0).contains(&u[0]) && (-0.5..=0.25).contains(&u[1]));
        }
    }

    #[test]
    fn grid_counts_and_order() {
        let spec = RegressorSpec::state_space(&["x"], &["u"]);
        let ds = grid_dataset(&spec, &[(0.0, 1.0), (-1.0, 1.0)], &[2, 2], |x, u| vec![x[0] + u[0]]).unwrap();
        assert_eq!(ds.n_rows(), 4);
        assert_eq!(ds.regressor_columns()[0], vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(ds.regressor_columns()[1], vec![-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(ds.target_column(0), [-1.0, 1.0, 0.0, 2.0]);
        assert!(grid_dataset(&spec, &[(0.0, 1.0), (-1.0, 1.0)], &[1, 2], |x, _| x.to_vec()).is_err());
    }

    #[test]
    fn noise_statistics() {
        let cfg = NoiseConfig::pendulum(0.1);
        let mut rng = seed::rng(21);
        let n = 100_000;
        let d: Vec<f64> = (0..n).map(|_| add_noise(&[1.0, 0.0], &cfg, &mut rng).unwrap()[0] - 1.0).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((std - PI * 0.1).abs() <= 0.02 * PI * 0.1, "std {std}");
        assert_eq!(add_noise(&[1.0, 2.0], &NoiseConfig::pendulum(0.0), &mut rng).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn noise_is_applied_to_copies() {
        let sys = System::pendulum();
        let spec = sys.regressor_spec();
        let step = |x: &[f64], u: &[f64]| sys.step(Integrator::Rk4, x, u);
        let ep = random_trajectory(step, &[0.0, 0.0], &[(-5.0, 5.0)], 30, &mut seed::rng(4)).unwrap();
        let (clean, _) = crate::model::build_state_space_dataset(std::slice::from_ref(&ep), &spec).unwrap();
        let noisy = noisy_dataset(&clean, &NoiseConfig::pendulum(0.05), &mut seed::rng(5)).unwrap();
        let (again, _) = crate::model::build_state_space_dataset(&[ep], &spec).unwrap();
        assert_eq!(clean, again);
        assert_ne!(noisy, clean);
        // inputs untouched
        assert_eq!(noisy.regressor_columns()[2], clean.regressor_columns()[2]);
    }
}
