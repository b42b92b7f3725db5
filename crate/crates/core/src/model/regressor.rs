//! State-space and NARX regressor construction.

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, TARGET_SUFFIX};
use crate::error::{Error, Result};

/// How regressor vectors are assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RegressorSpec {
    /// `[x_k ‖ u_k]`, target `x_{k+1}`.
    StateSpace {
        state_names: Vec<String>,
        input_names: Vec<String>,
    },
    /// `[y_k … y_{k-n_y+1}, u_{k-1} … u_{k-n_u+1}, u_k]`, target `y_{k+1}`.
    Narx {
        output_dim: usize,
        input_dim: usize,
        n_y: usize,
        n_u: usize,
    },
}

impl RegressorSpec {
    pub fn state_space(states: &[&str], inputs: &[&str]) -> Self {
        RegressorSpec::StateSpace {
            state_names: states.iter().map(|s| s.to_string()).collect(),
            input_names: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn regressor_len(&self) -> usize {
        match self {
            RegressorSpec::StateSpace {
                state_names,
                input_names,
            } => state_names.len() + input_names.len(),
            RegressorSpec::Narx {
                output_dim,
                input_dim,
                n_y,
                n_u,
            } => n_y * output_dim + (n_u - 1) * input_dim + input_dim,
        }
    }

    pub fn regressor_names(&self) -> Vec<String> {
        match self {
            RegressorSpec::StateSpace {
                state_names,
                input_names,
            } => state_names.iter().chain(input_names).cloned().collect(),
            RegressorSpec::Narx {
                output_dim,
                input_dim,
                n_y,
                n_u,
            } => {
                let mut names = Vec::with_capacity(self.regressor_len());
                for lag in 0..*n_y {
                    for d in 0..*output_dim {
                        names.push(lagged("y", d, lag));
                    }
                }
                for lag in 1..*n_u {
                    for d in 0..*input_dim {
                        names.push(lagged("u", d, lag));
                    }
                }
                for d in 0..*input_dim {
                    names.push(lagged("u", d, 0));
                }
                names
            }
        }
    }

    pub fn target_names(&self) -> Vec<String> {
        match self {
            RegressorSpec::StateSpace { state_names, .. } => {
                state_names.iter().map(|s| format!("{s}{TARGET_SUFFIX}")).collect()
            }
            RegressorSpec::Narx { output_dim, .. } => {
                (0..*output_dim).map(|d| format!("y{d}{TARGET_SUFFIX}")).collect()
            }
        }
    }
}

fn lagged(prefix: &str, dim: usize, lag: usize) -> String {
    if lag == 0 {
        format!("{prefix}{dim}_k")
    } else {
        format!("{prefix}{dim}_k-{lag}")
    }
}

/// One recorded run: `states[k]` with input `inputs[k]` leads to `states[k+1]`.
///
/// `inputs` holds either one entry per transition or one per state (the
/// last input is then unused).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Episode {
    pub fn new(x0: Vec<f64>) -> Self {
        Self {
            states: vec![x0],
            inputs: Vec::new(),
        }
    }

    pub fn push(&mut self, u: Vec<f64>, x_next: Vec<f64>) {
        self.inputs.push(u);
        self.states.push(x_next);
    }

    pub fn transitions(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Rows `[x_k ‖ u_k] → x_{k+1}` from every within-episode consecutive pair.
///
/// Episodes with fewer than two states are skipped; the number skipped is
/// returned alongside the dataset.
pub fn build_state_space_dataset(episodes: &[Episode], spec: &RegressorSpec) -> Result<(Dataset, usize)> {
    let RegressorSpec::StateSpace {
        state_names,
        input_names,
    } = spec
    else {
        return Err(Error::InvalidArgument("state-space builder needs a state-space spec".into()));
    };
    let (n, m) = (state_names.len(), input_names.len());
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (e, ep) in episodes.iter().enumerate() {
        if ep.states.len() < 2 {
            skipped += 1;
            continue;
        }
        if ep.inputs.len() + 1 != ep.states.len() && ep.inputs.len() != ep.states.len() {
            return Err(Error::Dimension(format!(
                "episode {e}: {} states but {} inputs",
                ep.states.len(),
                ep.inputs.len()
            )));
        }
        for k in 0..ep.transitions() {
            let (x, u, x1) = (&ep.states[k], &ep.inputs[k], &ep.states[k + 1]);
            if x.len() != n || x1.len() != n || u.len() != m {
                return Err(Error::Dimension(format!(
                    "episode {e}, step {k}: expected state dim {n} and input dim {m}"
                )));
            }
            let mut reg = x.clone();
            reg.extend_from_slice(u);
            rows.push((reg, x1.clone()));
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} episode(s) shorter than two steps");
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("no transitions in the given episodes".into()));
    }
    let ds = Dataset::from_rows(spec.regressor_names(), spec.target_names(), &rows)?;
    Ok((ds, skipped))
}

/// NARX rows from one input/output record sampled on a common clock.
///
/// `outputs` may be one sample longer than `inputs` or of equal length. The
/// first row uses `k = max(n_y - 1, n_u - 1)`.
pub fn build_narx_dataset(outputs: &[Vec<f64>], inputs: &[Vec<f64>], n_y: usize, n_u: usize) -> Result<Dataset> {
    if n_y == 0 || n_u == 0 {
        return Err(Error::InvalidArgument("lag orders must be at least 1".into()));
    }
    if outputs.len() != inputs.len() && outputs.len() != inputs.len() + 1 {
        return Err(Error::Dimension(format!(
            "{} outputs vs {} inputs; expected equal or one extra output",
            outputs.len(),
            inputs.len()
        )));
    }
    let dy = outputs.first().map_or(0, Vec::len);
    let du = inputs.first().map_or(0, Vec::len);
    if outputs.iter().any(|y| y.len() != dy) || inputs.iter().any(|u| u.len() != du) || dy == 0 || du == 0 {
        return Err(Error::Dimension("inconsistent or empty sample vectors".into()));
    }
    let spec = RegressorSpec::Narx {
        output_dim: dy,
        input_dim: du,
        n_y,
        n_u,
    };
    let first = (n_y - 1).max(n_u - 1);
    let mut rows = Vec::new();
    let mut k = first;
    while k + 1 < outputs.len() && k < inputs.len() {
        let mut reg = Vec::with_capacity(spec.regressor_len());
        for lag in 0..n_y {
            reg.extend_from_slice(&outputs[k - lag]);
        }
        for lag in 1..n_u {
            reg.extend_from_slice(&inputs[k - lag]);
        }
        reg.extend_from_slice(&inputs[k]);
        rows.push((reg, outputs[k + 1].clone()));
        k += 1;
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} samples are too few for n_y={n_y}, n_u={n_u}",
            outputs.len()
        )));
    }
    Dataset::from_rows(spec.regressor_names(), spec.target_names(), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1() -> RegressorSpec {
        RegressorSpec::state_space(&["x"], &["u"])
    }

    #[test]
    fn single_pair_gives_one_row() {
        let ep = Episode {
            states: vec![vec![0.0], vec![5.0]],
            inputs: vec![vec![1.0], vec![2.0]],
        };
        let (ds, skipped) = build_state_space_dataset(&[ep], &spec1()).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(ds.n_rows(), 1);
        assert_eq!(ds.regressor_row(0), vec![0.0, 1.0]);
        assert_eq!(ds.target_row(0), vec![5.0]);
        assert_eq!(ds.target_names(), ["x_next"]);
    }

    #[test]
    fn rows_do_not_straddle_episodes() {
        let mk = |xs: &[f64]| Episode {
            states: xs.iter().map(|&x| vec![x]).collect(),
            inputs: xs.iter().map(|_| vec![0.0]).collect(),
        };
        let eps = [mk(&[1.0, 2.0, 3.0]), mk(&[10.0, 20.0]), mk(&[99.0])];
        let (ds, skipped) = build_state_space_dataset(&eps, &spec1()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(skipped, 1);
        assert_eq!(ds.regressor_columns()[0], vec![1.0, 2.0, 10.0]);
        assert_eq!(ds.target_column(0), [2.0, 3.0, 20.0]);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let ep = Episode {
            states: vec![vec![0.0, 1.0], vec![5.0, 1.0]],
            inputs: vec![vec![1.0]],
        };
        assert!(matches!(build_state_space_dataset(&[ep], &spec1()), Err(Error::Dimension(_))));
    }

    #[test]
    fn narx_example_rows() {
        let y: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
        let u: Vec<_> = [10.0, 20.0, 30.0].iter().map(|&v| vec![v]).collect();
        let ds = build_narx_dataset(&y, &u, 2, 1).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.regressor_row(0), vec![2.0, 1.0, 20.0]);
        assert_eq!(ds.target_row(0), vec![3.0]);
        assert_eq!(ds.regressor_row(1), vec![3.0, 2.0, 30.0]);
        assert_eq!(ds.target_row(1), vec![4.0]);
        assert_eq!(ds.regressor_names(), ["y0_k", "y0_k-1", "u0_k"]);
    }

    #[test]
    fn narx_with_input_lag() {
        // 5-step record: y0..y4, u0..u3; n_y=2, n_u=2 → k ∈ {1, 2, 3}
        let y: Vec<_> = (0..5).map(|v| vec![v as f64]).collect();
        let u: Vec<_> = (0..4).map(|v| vec![10.0 * v as f64]).collect();
        let ds = build_narx_dataset(&y, &u, 2, 2).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.regressor_row(0), vec![1.0, 0.0, 0.0, 10.0]);
        assert_eq!(ds.regressor_names(), ["y0_k", "y0_k-1", "u0_k-1", "u0_k"]);

        // equal-length record of 5 samples: k ∈ {1, 2, 3}, target needs k+1 < 5
        let u5: Vec<_> = (0..5).map(|v| vec![v as f64]).collect();
        let ds = build_narx_dataset(&y, &u5, 2, 2).unwrap();
        assert_eq!(ds.n_rows(), 3);
    }

    #[test]
    fn narx_too_short() {
        let y = vec![vec![1.0], vec![2.0]];
        let u = vec![vec![0.0]];
        assert!(matches!(build_narx_dataset(&y, &u, 3, 1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn narx_unit_lags_match_state_space() {
        let y: Vec<_> = (0..12).map(|v| vec![(v as f64).sin()]).collect();
        let u: Vec<_> = (0..11).map(|v| vec![(v as f64).cos()]).collect();
        let narx = build_narx_dataset(&y, &u, 1, 1).unwrap();
        let ep = Episode {
            states: y.clone(),
            inputs: u.clone(),
        };
        let (ss, _) = build_state_space_dataset(&[ep], &RegressorSpec::state_space(&["y0"], &["u0"])).unwrap();
        assert_eq!(narx.n_rows(), ss.n_rows());
        for i in 0..ss.n_rows() {
            assert_eq!(narx.regressor_row(i), ss.regressor_row(i));
            assert_eq!(narx.target_row(i), ss.target_row(i));
        }
    }
}
