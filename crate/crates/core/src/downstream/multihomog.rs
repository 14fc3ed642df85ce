//! Sequential multi-homography labelling of correspondences.

use serde::{Deserialize, Serialize};

use crate::downstream::ransac::estimate_homography_ransac;
use crate::error::{PcfError, Result};
use crate::flowfield::HomographyMap;
use crate::geometry::Point2;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiHomogConfig {
    /// Inlier threshold of the first model, pixels.
    pub eps_global: f64,
    /// Inlier threshold of later models, pixels.
    pub eps_local: f64,
    /// A model with fewer inliers ends the search.
    pub min_inliers: usize,
    pub max_models: usize,
    pub ransac_iters: usize,
    pub rng_seed: u64,
}

impl Default for MultiHomogConfig {
    fn default() -> Self {
        Self {
            eps_global: 8.0,
            eps_local: 3.0,
            min_inliers: 30,
            max_models: 8,
            ransac_iters: 1000,
            rng_seed: 0,
        }
    }
}

impl MultiHomogConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_local > 0.0
            && self.eps_local < self.eps_global
            && self.min_inliers >= 4
            && self.max_models >= 1
            && self.ransac_iters >= 1;
        if ok {
            Ok(())
        } else {
            Err(PcfError::InvalidParameter(format!(
                "multi-homography config requires 0 < eps_local < eps_global, min_inliers >= 4, \
                 max_models >= 1, ransac_iters >= 1 (got {self:?})"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHomogResult<T> {
    /// `0` for unassigned, otherwise the 1-based model id.
    pub labels: Vec<usize>,
    pub models: Vec<HomographyMap<T>>,
}

/// Peels off one homography per round from the still-unassigned
/// correspondences until a round finds fewer than `min_inliers` inliers.
///
/// Round `t` uses `eps_global` for `t = 1` and `eps_local` afterwards, with
/// RANSAC seed `rng_seed + t`.
pub fn multi_homography_classify<T: Real>(
    corr: &[(Point2<T>, Point2<T>)],
    cfg: &MultiHomogConfig,
) -> Result<MultiHomogResult<T>> {
    cfg.validate()?;
    if corr.len() < cfg.min_inliers {
        return Err(PcfError::TooFewPoints {
            needed: cfg.min_inliers,
            got: corr.len(),
        });
    }
    let mut labels = vec![0usize; corr.len()];
    let mut models = Vec::new();
    for t in 1..=cfg.max_models {
        let free: Vec<usize> = (0..corr.len()).filter(|&i| labels[i] == 0).collect();
        if free.len() < cfg.min_inliers.max(4) {
            break;
        }
        let subset: Vec<_> = free.iter().map(|&i| corr[i]).collect();
        let eps = if t == 1 {
            cfg.eps_global
        } else {
            cfg.eps_local
        };
        let fit = match estimate_homography_ransac(
            &subset,
            eps,
            cfg.ransac_iters,
            cfg.rng_seed.wrapping_add(t as u64),
        ) {
            Ok(f) => f,
            Err(PcfError::Degenerate) => break,
            Err(e) => return Err(e),
        };
        if fit.inlier_count() < cfg.min_inliers {
            break;
        }
        for (&i, &inlier) in free.iter().zip(&fit.inliers) {
            if inlier {
                labels[i] = t;
            }
        }
        models.push(fit.homography);
    }
    Ok(MultiHomogResult { labels, models })
}
