//! Palette quantization with k-means and color transfer through a
//! transport plan between the two palettes.

use std::collections::BTreeMap;
use std::path::Path;

use drot_core::probgen::{normalize_cost, squared_euclidean_cost};
use drot_core::{DrotConfig, Matrix, OtError, SolveResult, TransportProblem};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::CliError;

pub const DEFAULT_K: usize = 750;
const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("k = {k} exceeds the {distinct} distinct colors of the image")]
    KTooLarge { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("image error on {path}: {message}")]
    Image { path: String, message: String },
}

/// Output of [`kmeans_quantize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    /// Cluster centers in `[0, 1]^3`.
    pub centroids: Vec<[f64; 3]>,
    /// Cluster index of every input pixel.
    pub assignments: Vec<usize>,
    /// Fraction of pixels per cluster; sums to one.
    pub masses: Vec<f64>,
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum()
}

fn nearest(point: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn to_unit(px: [u8; 3]) -> [f64; 3] {
    px.map(|v| v as f64 / 255.0)
}

/// k-means on RGB pixels with k-means++ seeding from a ChaCha20 stream.
///
/// Runs on the distinct colors weighted by their pixel counts, which has the
/// same objective as clustering every pixel. An emptied cluster is reseeded
/// with the color farthest from its center.
pub fn kmeans_quantize(pixels: &[[u8; 3]], k: usize, seed: u64) -> Result<Quantized, ColorError> {
    if pixels.is_empty() {
        return Err(ColorError::EmptyImage);
    }
    if k == 0 {
        return Err(ColorError::ZeroK);
    }
    let mut counts: BTreeMap<[u8; 3], usize> = BTreeMap::new();
    for px in pixels {
        *counts.entry(*px).or_default() += 1;
    }
    let distinct = counts.len();
    if k > distinct {
        return Err(ColorError::KTooLarge { k, distinct });
    }
    let colors: Vec<[u8; 3]> = counts.keys().copied().collect();
    let points: Vec<[f64; 3]> = colors.iter().map(|&c| to_unit(c)).collect();
    let weights: Vec<f64> = counts.values().map(|&c| c as f64).collect();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[weighted_index(&weights, &mut rng)]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d2.iter().zip(&weights).map(|(d, w)| d * w).collect();
        let next = points[weighted_index(&scores, &mut rng)];
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min(sq_dist(p, &next));
        }
        centroids.push(next);
    }

    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (label, p) in labels.iter_mut().zip(&points) {
            let (c, _) = nearest(p, &centroids);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        let mut sums = vec![[0.0; 3]; k];
        let mut mass = vec![0.0; k];
        for ((&label, p), &w) in labels.iter().zip(&points).zip(&weights) {
            for c in 0..3 {
                sums[label][c] += w * p[c];
            }
            mass[label] += w;
        }
        for c in 0..k {
            if mass[c] > 0.0 {
                centroids[c] = sums[c].map(|s| s / mass[c]);
            }
        }
        if let Some(empty) = mass.iter().position(|&w| w == 0.0) {
            let (far, _) = points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, sq_dist(p, &centroids[labels[i]])))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            centroids[empty] = points[far];
            labels[far] = empty;
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let index: BTreeMap<[u8; 3], usize> = colors.iter().copied().zip(labels.iter().copied()).collect();
    let assignments: Vec<usize> = pixels.iter().map(|px| index[px]).collect();
    let mut masses = vec![0.0; k];
    for &a in &assignments {
        masses[a] += 1.0;
    }
    let total = pixels.len() as f64;
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(Quantized { centroids, assignments, masses })
}

fn weighted_index(weights: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if target < w {
                return i;
            }
            target -= w;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).expect("some positive weight")
}

/// Result of [`color_transfer`].
#[derive(Clone, Debug)]
pub struct TransferOutcome {
    pub image: RgbImage,
    pub source: Quantized,
    pub target: Quantized,
    /// Source palette after transfer, in `[0, 1]^3`.
    pub mapped: Vec<[f64; 3]>,
    pub solve: SolveResult,
    pub stats: TransferStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferStats {
    pub k_source: usize,
    pub k_target: usize,
    pub status: drot_core::SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    /// Entries above [`TransferStats::threshold`] over `m n`.
    pub nonzero_fraction: f64,
    pub threshold: f64,
    /// Largest `|X e - p|` entry.
    pub max_row_mass_error: f64,
}

/// Plan entries count as nonzero above `1e-8 / (m n)`.
pub fn nonzero_threshold(m: usize, n: usize) -> f64 {
    1e-8 / (m * n) as f64
}

fn pixels_of(img: &RgbImage) -> Vec<[u8; 3]> {
    img.pixels().map(|p| p.0).collect()
}

/// Recolors `source` with the palette of `target`.
///
/// Each source centroid moves to the plan-weighted mean of the target
/// centroids; every pixel takes the new color of its cluster.
pub fn color_transfer(
    source: &RgbImage,
    target: &RgbImage,
    k: usize,
    seed: u64,
    config: &DrotConfig,
) -> Result<TransferOutcome, CliError> {
    let sq = kmeans_quantize(&pixels_of(source), k, seed)?;
    let tq = kmeans_quantize(&pixels_of(target), k, seed)?;
    let raw = squared_euclidean_cost(&sq.centroids, &tq.centroids)?;
    let cost = match normalize_cost(&raw) {
        Ok(c) => c,
        Err(OtError::DegenerateCost) => raw,
        Err(e) => return Err(e.into()),
    };
    let problem = TransportProblem::new_renormalized(cost, sq.masses.clone(), tq.masses.clone())?;
    let solve = drot_core::solve(&problem, config, None)?;
    let x = &solve.plan.x;
    let (m, n) = x.shape();
    let mapped: Vec<[f64; 3]> = (0..m)
        .map(|i| {
            let row_mass: f64 = (0..n).map(|j| x.get(i, j)).sum();
            if !(row_mass > 0.0) {
                return sq.centroids[i];
            }
            let mut color = [0.0; 3];
            for j in 0..n {
                let w = x.get(i, j) / row_mass;
                for c in 0..3 {
                    color[c] += w * tq.centroids[j][c];
                }
            }
            color
        })
        .collect();
    let mut image = RgbImage::new(source.width(), source.height());
    for (px, &label) in image.pixels_mut().zip(&sq.assignments) {
        px.0 = to_u8(mapped[label]);
    }
    let threshold = nonzero_threshold(m, n);
    let stats = TransferStats {
        k_source: m,
        k_target: n,
        status: solve.status,
        iterations: solve.trace.iterations,
        objective: solve.report.objective,
        nonzero_fraction: solve.plan.count_above(threshold) as f64 / (m * n) as f64,
        threshold,
        max_row_mass_error: row_mass_error(x, problem.p()),
    };
    Ok(TransferOutcome { image, source: sq, target: tq, mapped, solve, stats })
}

fn row_mass_error(x: &Matrix, p: &[f64]) -> f64 {
    x.row_sums().iter().zip(p).map(|(r, p)| (r - p).abs()).fold(0.0, f64::max)
}

pub fn to_u8(color: [f64; 3]) -> [u8; 3] {
    color.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// The image with every pixel replaced by its centroid.
pub fn quantized_image(width: u32, height: u32, q: &Quantized) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    for (px, &label) in img.pixels_mut().zip(&q.assignments) {
        px.0 = to_u8(q.centroids[label]);
    }
    img
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, ColorError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| ColorError::Image { path: path.display().to_string(), message: e.to_string() })
}

pub fn save_png(path: &Path, img: &RgbImage) -> Result<(), ColorError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ColorError::Image { path: path.display().to_string(), message: e.to_string() })
}
