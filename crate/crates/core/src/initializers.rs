//! Literature weight initializers.
//!
//! Fan convention: `rows` is `n_l` (fan-in), `cols` is `n_{l+1}` (fan-out).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_io::WeightMatrix;
use crate::rng::RngStream;

/// Truncation point of the truncated normal, in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    GlorotUniform,
    GlorotNormal,
    KaimingUniform,
    KaimingNormal,
    TruncatedNormal,
    Orthogonal,
}

impl InitMethod {
    pub const ALL: [InitMethod; 6] = [
        InitMethod::GlorotUniform,
        InitMethod::GlorotNormal,
        InitMethod::KaimingUniform,
        InitMethod::KaimingNormal,
        InitMethod::TruncatedNormal,
        InitMethod::Orthogonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitMethod::GlorotUniform => "glorot-uniform",
            InitMethod::GlorotNormal => "glorot-normal",
            InitMethod::KaimingUniform => "kaiming-uniform",
            InitMethod::KaimingNormal => "kaiming-normal",
            InitMethod::TruncatedNormal => "truncated-normal",
            InitMethod::Orthogonal => "orthogonal",
        }
    }
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown init method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub method: InitMethod,
    pub rows: usize,
    pub cols: usize,
    /// Only read by the orthogonal method.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_gain() -> f64 {
    1.0
}

impl InitSpec {
    pub fn new(method: InitMethod, rows: usize, cols: usize) -> Self {
        Self {
            method,
            rows,
            cols,
            gain: 1.0,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidShape(format!(
                "init shape must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !self.gain.is_finite() {
            return Err(Error::InvalidArgument("gain must be finite".into()));
        }
        Ok(())
    }

    /// Half-width of the sampling interval for the uniform methods.
    pub fn uniform_bound(&self) -> Option<f64> {
        let (n_in, n_out) = (self.rows as f64, self.cols as f64);
        match self.method {
            InitMethod::KaimingUniform => Some((6.0 / n_in).sqrt()),
            InitMethod::GlorotUniform => Some((6.0 / (n_in + n_out)).sqrt()),
            _ => None,
        }
    }

    /// Standard deviation of the (untruncated) normal for the normal methods.
    pub fn normal_std(&self) -> Option<f64> {
        let (n_in, n_out) = (self.rows as f64, self.cols as f64);
        match self.method {
            InitMethod::KaimingNormal | InitMethod::TruncatedNormal => Some((2.0 / n_in).sqrt()),
            InitMethod::GlorotNormal => Some((2.0 / (n_in + n_out)).sqrt()),
            _ => None,
        }
    }

    /// Variance of a single weight under this spec; the truncated normal
    /// reports its untruncated parent and orthogonal its asymptotic value.
    pub fn nominal_variance(&self) -> f64 {
        if let Some(b) = self.uniform_bound() {
            return b * b / 3.0;
        }
        if let Some(s) = self.normal_std() {
            return s * s;
        }
        // Orthonormal columns of length n_l carry 1/n_l per entry, or
        // 1/n_{l+1} when the rows are the orthonormal side.
        self.gain * self.gain / self.rows.max(self.cols) as f64
    }
}

pub fn init(spec: &InitSpec, rng: &mut RngStream) -> Result<WeightMatrix> {
    spec.validate()?;
    let n = spec.rows * spec.cols;
    let data = match spec.method {
        InitMethod::KaimingUniform | InitMethod::GlorotUniform => {
            let b = spec.uniform_bound().expect("uniform method");
            let dist = Uniform::new_inclusive(-b, b);
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        InitMethod::KaimingNormal | InitMethod::GlorotNormal => {
            let sd = spec.normal_std().expect("normal method");
            let dist = Normal::new(0.0, sd).expect("finite std");
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        InitMethod::TruncatedNormal => {
            let sd = spec.normal_std().expect("normal method");
            (0..n).map(|_| truncated_normal(rng, sd)).collect()
        }
        InitMethod::Orthogonal => orthogonal(spec.rows, spec.cols, spec.gain, rng),
    };
    Ok(WeightMatrix::from_parts_unchecked(
        spec.rows, spec.cols, data,
    ))
}

/// `N(0, sd^2)` conditioned on `|x| <= 3 sd`, by rejection.
fn truncated_normal<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= TRUNCATION_SIGMAS {
            return z * sd;
        }
    }
}

/// QR of a standard-normal sample with `diag(R) > 0`, scaled by `gain`.
/// The longer side gets the orthonormal vectors.
fn orthogonal<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // Filled column by column: column j of the tall sample is contiguous.
    let mut sample = DMatrix::<f64>::zeros(tall, short);
    for j in 0..short {
        for i in 0..tall {
            sample[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let qr = sample.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q *= gain;

    let mut out = vec![0.0; rows * cols];
    if rows >= cols {
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] = q[(i, j)];
            }
        }
    } else {
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] = q[(j, i)];
            }
        }
    }
    out
}
