//! Neuronal strength (weighted degree) and its distribution.
//!
//! For a layer matrix `W` (`n_l x n_{l+1}`), the input-side strength of
//! neuron `i` is the row sum `sum_x W[i, x]` and the output-side strength of
//! neuron `x` is the column sum. Sums always run in ascending index order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initializers::{init, InitMethod, InitSpec};
use crate::matrix_io::WeightMatrix;
use crate::rewiring::{pa_rewire, PassMode};
use crate::rng::{RngStream, StreamPurpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Input,
    Output,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Input => "input",
            Side::Output => "output",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(Side::Input),
            "output" => Ok(Side::Output),
            _ => Err(Error::InvalidArgument(format!("unknown side {s:?}"))),
        }
    }
}

/// Population (1/n) moments of a strength vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrengthStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub fourth_central_moment: f64,
    pub max_abs: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn strengths(m: &WeightMatrix, side: Side) -> Vec<f64> {
    let (rows, cols) = m.shape();
    match side {
        Side::Input => (0..rows).map(|i| m.row(i).iter().sum()).collect(),
        Side::Output => {
            let mut s = vec![0.0; cols];
            for i in 0..rows {
                for (acc, w) in s.iter_mut().zip(m.row(i)) {
                    *acc += w;
                }
            }
            s
        }
    }
}

impl StrengthStats {
    /// Moments of an arbitrary nonempty sample.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty strength vector".into()));
        }
        let n = values.len();
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        let mut max_abs = 0.0f64;
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
            max_abs = max_abs.max(v.abs());
        }
        let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
        // A constant vector has no shape; report zeros rather than 0/0.
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            n,
            mean,
            variance: m2,
            fourth_central_moment: m4,
            max_abs,
            skewness,
            excess_kurtosis,
        })
    }
}

pub fn strength_stats(m: &WeightMatrix, side: Side) -> StrengthStats {
    StrengthStats::from_values(&strengths(m, side)).expect("matrices are nonempty")
}

/// Variance of a sum of `n_l` independent weights.
pub fn predicted_strength_variance(weight_variance: f64, n_l: usize) -> Result<f64> {
    if weight_variance.is_nan() || weight_variance < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "weight variance must be non-negative, got {weight_variance}"
        )));
    }
    Ok(weight_variance * n_l as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStrengthSummary {
    pub avg_variance: f64,
    pub avg_mu4: f64,
}

/// Mean over layers of the input-side variance and fourth central moment.
pub fn model_strength_summary(layers: &[WeightMatrix]) -> Result<ModelStrengthSummary> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("model has no layers".into()));
    }
    let (mut var, mut mu4) = (0.0, 0.0);
    for layer in layers {
        let s = strength_stats(layer, Side::Input);
        var += s.variance;
        mu4 += s.fourth_central_moment;
    }
    let n = layers.len() as f64;
    Ok(ModelStrengthSummary {
        avg_variance: var / n,
        avg_mu4: mu4 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxStrengthRow {
    pub size: usize,
    pub base_mean: f64,
    pub base_std: f64,
    pub rewired_mean: Option<f64>,
    pub rewired_std: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub method: InitMethod,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub global_seed: u64,
    /// Also measure each trial after bidirectional PA rewiring.
    pub rewire: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Max input-side |strength| over square `n x n` layers, per size.
///
/// Trial `k` of every size reads `derive_stream(seed, 0, k)` for its weights
/// and the matching rewire stream, so results do not depend on scheduling.
pub fn max_strength_scaling(cfg: &SweepConfig) -> Result<Vec<MaxStrengthRow>> {
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(Error::InvalidArgument(
            "sweep sizes must be positive".into(),
        ));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument(
            "sweep needs at least one trial".into(),
        ));
    }
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &size in &cfg.sizes {
        let spec = InitSpec::new(cfg.method, size, size);
        let per_trial: Vec<(f64, Option<f64>)> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| -> Result<(f64, Option<f64>)> {
                let trial = u32::try_from(k)
                    .map_err(|_| Error::InvalidArgument("too many trials".into()))?;
                let mut weights_rng =
                    RngStream::new(StreamPurpose::Weights, cfg.global_seed, 0, trial);
                let base = init(&spec, &mut weights_rng)?;
                let base_max = strength_stats(&base, Side::Input).max_abs;
                let rewired_max = if cfg.rewire {
                    let mut rewire_rng =
                        RngStream::new(StreamPurpose::Rewire, cfg.global_seed, 0, trial);
                    let r = pa_rewire(&base, PassMode::Bidirectional, &mut rewire_rng)?;
                    Some(strength_stats(&r, Side::Input).max_abs)
                } else {
                    None
                };
                Ok((base_max, rewired_max))
            })
            .collect::<Result<_>>()?;
        let base: Vec<f64> = per_trial.iter().map(|t| t.0).collect();
        let (base_mean, base_std) = mean_std(&base);
        let (rewired_mean, rewired_std) = if cfg.rewire {
            let r: Vec<f64> = per_trial.iter().filter_map(|t| t.1).collect();
            let (m, s) = mean_std(&r);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        rows.push(MaxStrengthRow {
            size,
            base_mean,
            base_std,
            rewired_mean,
            rewired_std,
        });
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[MaxStrengthRow]) -> String {
    let mut out = String::from(
        "size,base_mean_max_abs,base_std_max_abs,rewired_mean_max_abs,rewired_std_max_abs\n",
    );
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:?},{:?},{},{}\n",
            r.size,
            r.base_mean,
            r.base_std,
            opt(r.rewired_mean),
            opt(r.rewired_std)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn input_strengths_are_row_sums() {
        let m = WeightMatrix::from_rows(&[[1.0, -2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(strengths(&m, Side::Input), vec![-1.0, 7.0]);
        assert_eq!(strengths(&m, Side::Output), vec![4.0, 2.0]);
    }

    #[test]
    fn zero_matrix_has_zero_strength() {
        let m = WeightMatrix::zeros(3, 5).unwrap();
        assert!(strengths(&m, Side::Input).iter().all(|&s| s == 0.0));
        assert!(strengths(&m, Side::Output).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn two_point_moments() {
        let s = StrengthStats::from_values(&[-1.0, 7.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.variance, 16.0);
        assert_eq!(s.fourth_central_moment, 256.0);
        assert_eq!(s.max_abs, 7.0);
        assert_eq!(s.skewness, 0.0);
        assert_eq!(s.excess_kurtosis, -2.0);
    }

    #[test]
    fn constant_strengths() {
        let s = StrengthStats::from_values(&[2.5; 10]).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.fourth_central_moment, 0.0);
        assert_eq!(s.skewness, 0.0);
        assert_eq!(s.max_abs, 2.5);
    }

    #[test]
    fn predicted_variance() {
        assert_eq!(
            predicted_strength_variance(2.0 / 1024.0, 1024).unwrap(),
            2.0
        );
        assert_eq!(predicted_strength_variance(0.0, 77).unwrap(), 0.0);
        let b = (6.0f64 / 256.0).sqrt();
        let v = predicted_strength_variance(b * b / 3.0, 256).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert!(predicted_strength_variance(-1.0, 3).is_err());
        assert!(predicted_strength_variance(f64::NAN, 3).is_err());
    }

    #[test]
    fn model_summary_averages_layers() {
        assert!(model_strength_summary(&[]).is_err());
        let a = WeightMatrix::from_rows(&[[1.0], [-1.0]]).unwrap(); // var 1
        let b = WeightMatrix::from_rows(&[[3f64.sqrt()], [-(3f64.sqrt())]]).unwrap(); // var 3
        let one = model_strength_summary(std::slice::from_ref(&a)).unwrap();
        let sa = strength_stats(&a, Side::Input);
        assert_eq!(one.avg_variance, sa.variance);
        assert_eq!(one.avg_mu4, sa.fourth_central_moment);
        let two = model_strength_summary(&[a, b]).unwrap();
        assert!((two.avg_variance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sum_rule() {
        let m = init(
            &InitSpec::new(InitMethod::KaimingNormal, 37, 53),
            &mut derive_stream(9, 0, 0),
        )
        .unwrap();
        let total: f64 = m.data().iter().sum();
        let si: f64 = strengths(&m, Side::Input).iter().sum();
        let so: f64 = strengths(&m, Side::Output).iter().sum();
        assert!((si - total).abs() < 1e-12);
        assert!((so - total).abs() < 1e-12);
    }

    #[test]
    fn single_size_sweep() {
        let rows = max_strength_scaling(&SweepConfig {
            method: InitMethod::KaimingUniform,
            sizes: vec![16],
            trials: 3,
            global_seed: 1,
            rewire: true,
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].rewired_mean.is_some());
        let csv = sweep_to_csv(&rows);
        assert_eq!(csv.lines().count(), 2);
    }
}
