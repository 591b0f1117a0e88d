//! Seeded synthetic instances: squared Euclidean costs between two clouds of
//! 2-D Gaussian samples, normalized to unit max-norm.
//!
//! Randomness comes from ChaCha20 (a counter-based generator with a fixed
//! specification), so a seed determines an instance independently of the
//! platform's default RNG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::OtError;
use crate::matrix::Matrix;
use crate::problem::TransportProblem;

/// How the marginals of a generated instance are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MarginalKind {
    /// `p = 1/m`, `q = 1/n`.
    #[default]
    Uniform,
    /// Both marginals drawn from a symmetric Dirichlet distribution.
    Dirichlet { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub m: usize,
    pub n: usize,
    /// Standard deviation of the target mean's entries around 5.
    #[serde(default = "default_sigma_t")]
    pub sigma_t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub marginals: MarginalKind,
    /// Redraw the samples instead of failing when the cost is identically zero.
    #[serde(default)]
    pub resample_degenerate: bool,
}

fn default_sigma_t() -> f64 {
    1.0
}

impl GaussianSpec {
    pub fn new(m: usize, n: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            sigma_t: default_sigma_t(),
            seed,
            marginals: MarginalKind::Uniform,
            resample_degenerate: false,
        }
    }
}

/// A 2-D Gaussian: samples are `mean + A z` with `z` standard normal, so the
/// covariance is `A A^T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub factor: [[f64; 2]; 2],
}

impl Gaussian2 {
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let a = self.factor;
        let mut s = [[0.0; 2]; 2];
        for (i, row) in s.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * a[j][0] + a[i][1] * a[j][1];
            }
        }
        s
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> [f64; 2] {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let a = self.factor;
        [
            self.mean[0] + a[0][0] * z0 + a[0][1] * z1,
            self.mean[1] + a[1][0] * z0 + a[1][1] * z1,
        ]
    }
}

fn random_factor(rng: &mut ChaCha20Rng) -> [[f64; 2]; 2] {
    [[rng.random(), rng.random()], [rng.random(), rng.random()]]
}

/// Draws a problem. Draw order: source mean, source factor, target mean,
/// target factor, source points, target points, then the marginals.
pub fn gen_gaussian_problem(spec: &GaussianSpec) -> Result<TransportProblem, OtError> {
    if spec.m == 0 || spec.n == 0 {
        return Err(OtError::EmptyDimension { rows: spec.m, cols: spec.n });
    }
    if !(spec.sigma_t > 0.0) {
        return Err(OtError::InvalidConfig(format!("sigma_t must be positive, got {}", spec.sigma_t)));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    loop {
        let (source, target) = sample_clouds(spec, &mut rng);
        let raw = squared_euclidean_cost(&source, &target)?;
        let cost = match normalize_cost(&raw) {
            Ok(c) => c,
            Err(OtError::DegenerateCost) if spec.resample_degenerate => continue,
            Err(e) => return Err(e),
        };
        let (p, q) = match spec.marginals {
            MarginalKind::Uniform => (vec![1.0 / spec.m as f64; spec.m], vec![1.0 / spec.n as f64; spec.n]),
            MarginalKind::Dirichlet { alpha } => {
                (dirichlet(spec.m, alpha, &mut rng)?, dirichlet(spec.n, alpha, &mut rng)?)
            }
        };
        return TransportProblem::new_renormalized(cost, p, q);
    }
}

/// The two Gaussians and point clouds behind a spec (for inspection and tests).
pub fn sample_clouds(spec: &GaussianSpec, rng: &mut ChaCha20Rng) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let src = Gaussian2 {
        mean: [rng.sample(StandardNormal), rng.sample(StandardNormal)],
        factor: random_factor(rng),
    };
    let target_mean = Normal::new(5.0, spec.sigma_t).expect("sigma_t validated");
    let tgt = Gaussian2 {
        mean: [target_mean.sample(rng), target_mean.sample(rng)],
        factor: random_factor(rng),
    };
    let source = (0..spec.m).map(|_| src.sample(rng)).collect();
    let target = (0..spec.n).map(|_| tgt.sample(rng)).collect();
    (source, target)
}

fn dirichlet(len: usize, alpha: f64, rng: &mut ChaCha20Rng) -> Result<Vec<f64>, OtError> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| OtError::InvalidConfig(format!("dirichlet alpha {alpha}: {e}")))?;
    let mut w: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(OtError::InvalidConfig("dirichlet draw has zero mass".into()));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// `C_ij = ||source_i - target_j||^2` for points of a common dimension.
pub fn squared_euclidean_cost<P: AsRef<[f64]>>(source: &[P], target: &[P]) -> Result<Matrix, OtError> {
    let dim = source.first().or(target.first()).map_or(0, |p| p.as_ref().len());
    for p in source.iter().chain(target) {
        if p.as_ref().len() != dim {
            return Err(OtError::DimensionMismatch(dim, p.as_ref().len()));
        }
    }
    Ok(Matrix::from_fn(source.len(), target.len(), |i, j| {
        source[i]
            .as_ref()
            .iter()
            .zip(target[j].as_ref())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }))
}

/// Divides by the largest absolute entry.
pub fn normalize_cost(cost: &Matrix) -> Result<Matrix, OtError> {
    let max = cost.max_abs();
    if !(max > 0.0) {
        return Err(OtError::DegenerateCost);
    }
    Ok(cost.map(|c| c / max))
}
