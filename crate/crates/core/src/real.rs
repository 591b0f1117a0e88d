//! Floating-point abstraction for the single- and double-precision solver paths.

use std::borrow::Cow;
use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Scalar type the iterative solvers can run in.
pub trait Real: Float + Default + Debug + Display + Sum + Send + Sync + 'static {
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Borrows double-precision data as-is, converting only when needed.
    fn view_matrix(m: &Matrix<f64>) -> Cow<'_, Matrix<Self>>;

    #[inline]
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn view_matrix(m: &Matrix<f64>) -> Cow<'_, Matrix<Self>> {
        Cow::Borrowed(m)
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn view_matrix(m: &Matrix<f64>) -> Cow<'_, Matrix<Self>> {
        Cow::Owned(m.cast())
    }
}

/// Runtime precision selector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "single" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

pub(crate) fn cast_vec<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64(x)).collect()
}

