//! Homography estimation: normalized DLT inside RANSAC.
//!
//! Everything runs in `f64` regardless of the caller's scalar type.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{PcfError, Result};
use crate::flowfield::HomographyMap;
use crate::geometry::Point2;
use crate::scalar::Real;

const MIN_POINTS: usize = 4;

type P = [f64; 2];

fn to_f64<T: Real>(p: Point2<T>) -> P {
    [p.x.to_f64_lossy(), p.y.to_f64_lossy()]
}

/// Similarity moving the centroid to the origin with mean distance `√2`.
fn normalizer(pts: &[P]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean = pts
        .iter()
        .map(|p| (p[0] - cx).hypot(p[1] - cy))
        .sum::<f64>()
        / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn transform(t: &Matrix3<f64>, p: P) -> P {
    [t[(0, 0)] * p[0] + t[(0, 2)], t[(1, 1)] * p[1] + t[(1, 2)]]
}

/// Least-squares DLT over all pairs; `None` when the system is degenerate.
pub(crate) fn fit_dlt(src: &[P], dst: &[P]) -> Option<Matrix3<f64>> {
    if src.len() < MIN_POINTS || src.len() != dst.len() {
        return None;
    }
    let ts = normalizer(src)?;
    let td = normalizer(dst)?;
    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&s, &d)) in src.iter().zip(dst).enumerate() {
        let [x, y] = transform(&ts, s);
        let [u, v] = transform(&td, d);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = v_t.row(idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let m = td.try_inverse()? * hn * ts;
    let s = m[(2, 2)];
    if s.abs() < 1e-12 || !m.iter().all(|v| v.is_finite()) {
        return None;
    }
    let m = m / s;
    (m.determinant().abs() > 1e-12).then_some(m)
}

#[inline]
fn project(h: &Matrix3<f64>, p: P) -> Option<P> {
    let v = h * Vector3::new(p[0], p[1], 1.0);
    (v.z.abs() > 1e-12).then(|| [v.x / v.z, v.y / v.z])
}

#[inline]
fn sq_dist(a: P, b: P) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// `sqrt((‖x′ − Hx‖² + ‖x − H⁻¹x′‖²) / 2)`.
pub fn symmetric_transfer_error(h: &Matrix3<f64>, h_inv: &Matrix3<f64>, x: P, xp: P) -> f64 {
    match (project(h, x), project(h_inv, xp)) {
        (Some(fx), Some(bx)) => ((sq_dist(fx, xp) + sq_dist(bx, x)) / 2.0).sqrt(),
        _ => f64::INFINITY,
    }
}

fn inlier_mask(h: &Matrix3<f64>, src: &[P], dst: &[P], eps: f64) -> Option<Vec<bool>> {
    let h_inv = h.try_inverse()?;
    Some(
        src.iter()
            .zip(dst)
            .map(|(&x, &xp)| symmetric_transfer_error(h, &h_inv, x, xp) < eps)
            .collect(),
    )
}

fn collinear(a: P, b: P, c: P) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = sq_dist(a, b).max(sq_dist(a, c)).max(sq_dist(b, c));
    cross.abs() <= 1e-9 * scale.max(1e-300)
}

fn minimal_degenerate(p: &[P; 4]) -> bool {
    (0..4).any(|skip| {
        let t: Vec<P> = (0..4).filter(|&i| i != skip).map(|i| p[i]).collect();
        collinear(t[0], t[1], t[2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit<T> {
    pub homography: HomographyMap<T>,
    pub inliers: Vec<bool>,
}

impl<T> RansacFit<T> {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn to_map<T: Real>(m: &Matrix3<f64>) -> Result<HomographyMap<T>> {
    HomographyMap::new(std::array::from_fn(|r| {
        std::array::from_fn(|c| T::of(m[(r, c)]))
    }))
}

/// Best 4-point hypothesis by inlier count under symmetric transfer error
/// `< eps`, then refit on its inliers.
///
/// Hypotheses are drawn up front from a ChaCha stream seeded with
/// `rng_seed` and scored in parallel; ties go to the earliest hypothesis.
pub fn estimate_homography_ransac<T: Real>(
    corr: &[(Point2<T>, Point2<T>)],
    eps: f64,
    iters: usize,
    rng_seed: u64,
) -> Result<RansacFit<T>> {
    if corr.len() < MIN_POINTS {
        return Err(PcfError::TooFewPoints {
            needed: MIN_POINTS,
            got: corr.len(),
        });
    }
    if !(eps > 0.0) {
        return Err(PcfError::InvalidParameter(format!(
            "eps must be > 0, got {eps}"
        )));
    }
    let src: Vec<P> = corr.iter().map(|c| to_f64(c.0)).collect();
    let dst: Vec<P> = corr.iter().map(|c| to_f64(c.1)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let draws: Vec<[usize; 4]> = (0..iters.max(1))
        .map(|_| {
            let idx = sample(&mut rng, src.len(), MIN_POINTS);
            [idx.index(0), idx.index(1), idx.index(2), idx.index(3)]
        })
        .collect();

    let scored: Vec<Option<(usize, Matrix3<f64>)>> = draws
        .par_iter()
        .map(|ids| {
            let s = ids.map(|i| src[i]);
            let d = ids.map(|i| dst[i]);
            if minimal_degenerate(&s) || minimal_degenerate(&d) {
                return None;
            }
            let h = fit_dlt(&s, &d)?;
            let count = inlier_mask(&h, &src, &dst, eps)?
                .iter()
                .filter(|&&b| b)
                .count();
            Some((count, h))
        })
        .collect();
    let mut best: Option<(usize, Matrix3<f64>)> = None;
    for (count, h) in scored.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| count > *b) {
            best = Some((count, h));
        }
    }
    let (count, h) = best.ok_or(PcfError::Degenerate)?;
    let mask = inlier_mask(&h, &src, &dst, eps).ok_or(PcfError::Degenerate)?;

    let (s_in, d_in): (Vec<P>, Vec<P>) = mask
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| (src[i], dst[i]))
        .unzip();
    let refit = fit_dlt(&s_in, &d_in).and_then(|r| {
        let m = inlier_mask(&r, &src, &dst, eps)?;
        (m.iter().filter(|&&b| b).count() >= count).then_some((r, m))
    });
    let (h, mask) = refit.unwrap_or((h, mask));
    Ok(RansacFit {
        homography: to_map(&h)?,
        inliers: mask,
    })
}
