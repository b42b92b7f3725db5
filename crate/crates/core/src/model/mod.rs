//! Linear-in-features analytic models.
//!
//! A [`FeatureModel`] predicts one target as `β₀ + Σ βᵢ·fᵢ(φ)` where each
//! feature `fᵢ` is an [`Expr`] over the regressor `φ`. Coefficients are
//! fitted by minimum-norm least squares.

mod dataset;
mod regressor;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use dataset::{format_float, Dataset, TARGET_SUFFIX};
pub use regressor::{build_narx_dataset, build_state_space_dataset, Episode, RegressorSpec};

use crate::error::{Error, Result};
use crate::expr::{format_const, Expr};

/// Relative singular-value cutoff for rank determination.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub regressor_names: Vec<String>,
    pub target_name: String,
    pub features: Vec<Expr>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Indices of features dropped from the fit because they evaluated
    /// non-finite on training data. Their coefficients are zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<usize>,
}

impl FeatureModel {
    /// Intercept-only model.
    pub fn constant(regressor_names: Vec<String>, target_name: String, value: f64) -> Self {
        Self {
            regressor_names,
            target_name,
            features: Vec::new(),
            intercept: value,
            coefficients: Vec::new(),
            excluded: Vec::new(),
        }
    }

    pub fn regressor_dim(&self) -> usize {
        self.regressor_names.len()
    }

    /// Total node count over all features.
    pub fn complexity(&self) -> usize {
        self.features.iter().map(Expr::size).sum()
    }

    pub fn predict(&self, regressor: &[f64]) -> Result<f64> {
        if regressor.len() != self.regressor_dim() {
            return Err(Error::Dimension(format!(
                "regressor has length {}, model expects {}",
                regressor.len(),
                self.regressor_dim()
            )));
        }
        let mut acc = self.intercept;
        for (i, (f, b)) in self.features.iter().zip(&self.coefficients).enumerate() {
            if self.excluded.contains(&i) {
                continue;
            }
            acc += b * f.evaluate(regressor)?;
        }
        Ok(acc)
    }

    /// Predictions for every row of a dataset.
    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        if dataset.regressor_dim() != self.regressor_dim() {
            return Err(Error::Dimension(format!(
                "dataset has {} regressors, model expects {}",
                dataset.regressor_dim(),
                self.regressor_dim()
            )));
        }
        let cols = dataset.regressor_columns();
        let mut out = vec![self.intercept; dataset.n_rows()];
        for (i, (f, b)) in self.features.iter().zip(&self.coefficients).enumerate() {
            if self.excluded.contains(&i) {
                continue;
            }
            let values = f.evaluate_columns(cols, dataset.n_rows())?;
            out.iter_mut().zip(values).for_each(|(o, v)| *o += b * v);
        }
        Ok(out)
    }

    /// `β₀ + β₁ * f₁ + …` with constants at 10 decimals.
    pub fn to_text(&self) -> String {
        self.to_text_with_precision(10)
    }

    pub fn to_text_with_precision(&self, precision: usize) -> String {
        let mut out = format_const(self.intercept, precision);
        for (i, (f, b)) in self.features.iter().zip(&self.coefficients).enumerate() {
            if self.excluded.contains(&i) {
                continue;
            }
            let sign = if *b < 0.0 { '-' } else { '+' };
            out.push_str(&format!(
                " {sign} {} * {}",
                format_const(b.abs(), precision),
                f.to_canonical_text(precision)
            ));
        }
        out
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Minimum-norm least-squares solution of `[1 | A]·[β₀; β] ≈ y`.
///
/// Returns `(β₀, β, rank)`. Singular values below `RANK_TOL · σ_max` are
/// treated as zero.
pub fn lstsq_with_intercept(columns: &[&[f64]], y: &[f64]) -> Result<(f64, Vec<f64>, usize)> {
    let n = y.len();
    if n == 0 {
        return Err(Error::InsufficientData("least squares on zero rows".into()));
    }
    let k = columns.len();
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let rhs = DVector::from_column_slice(y);
    let (solution, rank) = min_norm_solve(design, rhs)?;
    Ok((solution[0], solution.iter().skip(1).copied().collect(), rank))
}

/// Minimum-norm least squares through the SVD.
pub fn min_norm_solve(design: DMatrix<f64>, rhs: DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let svd = design.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let eps = RANK_TOL * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if smax == 0.0 {
        return Ok((DVector::zeros(svd.v_t.as_ref().map_or(0, |v| v.ncols())), 0));
    }
    let sol = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::InvalidArgument(format!("SVD solve failed: {e}")))?;
    Ok((sol, rank))
}

/// Fit `β₀ + Σ βᵢ·fᵢ` to one target column by least squares.
///
/// Features that evaluate non-finite on any row are excluded (coefficient
/// zero) and listed in [`FeatureModel::excluded`].
pub fn fit_least_squares(features: &[Expr], dataset: &Dataset, target_index: usize) -> Result<FeatureModel> {
    if target_index >= dataset.n_targets() {
        return Err(Error::InvalidArgument(format!(
            "target index {target_index} out of range ({} targets)",
            dataset.n_targets()
        )));
    }
    let cols = dataset.regressor_columns();
    let mut values = Vec::with_capacity(features.len());
    let mut excluded = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let v = f.evaluate_columns(cols, dataset.n_rows())?;
        if v.iter().all(|x| x.is_finite()) {
            values.push((i, v));
        } else {
            excluded.push(i);
        }
    }
    if !excluded.is_empty() {
        log::warn!("excluded {} non-finite feature(s) from the fit", excluded.len());
    }
    let refs: Vec<&[f64]> = values.iter().map(|(_, v)| v.as_slice()).collect();
    let (intercept, beta, _) = lstsq_with_intercept(&refs, dataset.target_column(target_index))?;
    let mut coefficients = vec![0.0; features.len()];
    for ((i, _), b) in values.iter().zip(beta) {
        coefficients[*i] = b;
    }
    Ok(FeatureModel {
        regressor_names: dataset.regressor_names().to_vec(),
        target_name: dataset.target_names()[target_index].clone(),
        features: features.to_vec(),
        intercept,
        coefficients,
        excluded,
    })
}

/// Root-mean-square prediction error on one target column.
///
/// Non-finite predictions yield a non-finite result.
pub fn rmse(model: &FeatureModel, dataset: &Dataset, target_index: usize) -> Result<f64> {
    if dataset.n_rows() == 0 {
        return Err(Error::InsufficientData("RMSE on an empty dataset".into()));
    }
    if target_index >= dataset.n_targets() {
        return Err(Error::InvalidArgument(format!("target index {target_index} out of range")));
    }
    let pred = model.predict_dataset(dataset)?;
    Ok(rmse_of(&pred, dataset.target_column(target_index)))
}

pub fn rmse_of(pred: &[f64], target: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / target.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Op;

    fn v(i: usize) -> Expr {
        Expr::var(i)
    }

    fn ds(rows: &[(Vec<f64>, f64)]) -> Dataset {
        let dim = rows[0].0.len();
        let names = (0..dim).map(|i| format!("x{i}")).collect();
        let rows: Vec<_> = rows.iter().map(|(x, y)| (x.clone(), vec![*y])).collect();
        Dataset::from_rows(names, vec!["y_next".into()], &rows).unwrap()
    }

    #[test]
    fn exactly_determined_fit() {
        let d = ds(&[(vec![1.0, 0.0], 2.0), (vec![0.0, 1.0], 3.0), (vec![1.0, 1.0], 5.0)]);
        let m = fit_least_squares(&[v(0), v(1)], &d, 0).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((m.coefficients[1] - 3.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
        assert!((m.predict(&[2.0, 1.0]).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_feature_with_constant_target() {
        let d = ds(&[(vec![1.0], 7.0), (vec![1.0], 7.0), (vec![1.0], 7.0)]);
        let m = fit_least_squares(&[v(0)], &d, 0).unwrap();
        // minimum norm splits the constant between intercept and the feature
        assert!((m.intercept - 3.5).abs() < 1e-12);
        assert!((m.coefficients[0] - 3.5).abs() < 1e-12);
        for p in m.predict_dataset(&d).unwrap() {
            assert!((p - 7.0).abs() < 1e-12);
        }
        assert!(rmse(&m, &d, 0).unwrap() < 1e-12);
    }

    #[test]
    fn non_finite_features_are_excluded() {
        let d = ds(&[(vec![1e120], 1.0), (vec![1.0], 2.0), (vec![2.0], 3.0)]);
        let blowup = Expr::unary(Op::Cube, Expr::unary(Op::Cube, v(0)));
        let m = fit_least_squares(&[blowup, v(0)], &d, 0).unwrap();
        assert_eq!(m.excluded, vec![0]);
        assert_eq!(m.coefficients[0], 0.0);
        assert!(m.predict(&[1e120]).unwrap().is_finite());
    }

    #[test]
    fn predict_and_text() {
        let m = FeatureModel::constant(vec!["a".into()], "a_next".into(), 0.5);
        assert_eq!(m.predict(&[123.0]).unwrap(), 0.5);
        assert_eq!(m.to_text(), "0.5000000000");
        assert!(m.predict(&[1.0, 2.0]).is_err());

        let m = FeatureModel {
            regressor_names: vec!["a".into(), "b".into()],
            target_name: "a_next".into(),
            features: vec![v(0), Expr::unary(Op::Sin, v(1))],
            intercept: 0.0,
            coefficients: vec![1.0, -0.25],
            excluded: vec![],
        };
        assert_eq!(m.to_text(), "0.0000000000 + 1.0000000000 * v0 - 0.2500000000 * sin(v1)");
    }

    #[test]
    fn rmse_examples() {
        let d = ds(&[(vec![0.0], 0.0), (vec![0.0], 2.0)]);
        let m = FeatureModel::constant(vec!["x0".into()], "y_next".into(), 1.0);
        assert!((rmse(&m, &d, 0).unwrap() - 1.0).abs() < 1e-15);
        let d1 = ds(&[(vec![0.0], -2.5)]);
        assert_eq!(rmse(&m, &d1, 0).unwrap(), 3.5);
    }

    #[test]
    fn json_round_trip() {
        let m = FeatureModel {
            regressor_names: vec!["a".into()],
            target_name: "a_next".into(),
            features: vec![Expr::binary(Op::Mul, Expr::constant(0.1 + 0.2), v(0))],
            intercept: -1.0 / 3.0,
            coefficients: vec![std::f64::consts::E],
            excluded: vec![],
        };
        let back: FeatureModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
