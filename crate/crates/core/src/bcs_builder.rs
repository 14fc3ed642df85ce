//! Correspondence-specific coordinate systems built from a flow map.
//!
//! The flow is turned into a source histogram (how often each source pixel
//! is referenced), remapped to the target grid, box-pooled, and its peak
//! becomes the target origin. Two further target vertices are drawn in a
//! disk around the origin; the source vertices follow the flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PcfError, Result};
use crate::flowfield::FlowField;
use crate::geometry::{signed_area, Bcs, Point2, EPS_AREA};
use crate::grid::{ensure_dims, Grid, Mask};
use crate::scalar::Real;

/// Attempts allowed when drawing the two auxiliary vertices.
pub const MAX_VERTEX_ATTEMPTS: usize = 32;

/// Per-pixel reference counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityMap {
    counts: Grid<u32>,
}

impl DensityMap {
    pub fn new(counts: Grid<u32>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &Grid<u32> {
        &self.counts
    }

    pub fn dims(&self) -> (usize, usize) {
        self.counts.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        *self.counts.get(x, y)
    }

    pub fn total(&self) -> u64 {
        self.counts.as_slice().iter().map(|&c| c as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcsPair<T> {
    pub source: Bcs<T>,
    pub target: Bcs<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuilderConfig {
    /// Pooling kernel size; odd and at least 3. Vertex radius is `(k - 1) / 2`.
    pub k: usize,
    /// Origin re-selections allowed after the first build.
    pub max_reselect: usize,
    pub rng_seed: u64,
    /// Probe confidence below which an origin is rejected.
    pub probe_threshold: f64,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            k: 9,
            max_reselect: 5,
            rng_seed: 0,
            probe_threshold: 0.2,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 3 || self.k.is_multiple_of(2) {
            return Err(PcfError::InvalidParameter(format!(
                "kernel size k must be odd and >= 3, got {}",
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.probe_threshold) {
            return Err(PcfError::InvalidParameter(format!(
                "probe threshold must lie in [0, 1], got {}",
                self.probe_threshold
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        (self.k as f64 - 1.0) / 2.0
    }
}

#[inline]
fn rounded_source<T: Real>(flow: &FlowField<T>, x: usize, y: usize) -> Option<(usize, usize)> {
    let p = flow.source_point(x, y)?;
    let (sx, sy) = (p.x.round(), p.y.round());
    if sx < T::zero() || sy < T::zero() {
        return None;
    }
    let (sx, sy) = (sx.to_usize()?, sy.to_usize()?);
    (sx < flow.width() && sy < flow.height()).then_some((sx, sy))
}

/// Source histogram `gs` and its remap `gt` onto the target grid.
///
/// `gs(p)` counts valid target pixels whose rounded source point is `p`;
/// `gt(q) = gs(round(q + Y(q)))` for valid `q` and `0` elsewhere.
pub fn flow_density<T: Real>(flow: &FlowField<T>) -> Result<(DensityMap, DensityMap)> {
    if flow.valid().count() == 0 {
        return Err(PcfError::EmptyFlow);
    }
    let (w, h) = flow.dims();
    let mut gs = Grid::filled(w, h, 0u32);
    for y in 0..h {
        for x in 0..w {
            if let Some((sx, sy)) = rounded_source(flow, x, y) {
                *gs.get_mut(sx, sy) += 1;
            }
        }
    }
    let gt = Grid::from_fn(w, h, |x, y| {
        rounded_source(flow, x, y).map_or(0, |(sx, sy)| *gs.get(sx, sy))
    });
    Ok((DensityMap::new(gs), DensityMap::new(gt)))
}

/// `k × k` box sums with zero padding, same-size output.
fn box_sums(counts: &Grid<u32>, k: usize) -> Grid<u64> {
    let (w, h) = counts.dims();
    // summed-area table with a zero border row/column
    let mut sat = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += *counts.get(x, y) as u64;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let r = k / 2;
    Grid::from_fn(w, h, |x, y| {
        let x0 = x.saturating_sub(r);
        let y0 = y.saturating_sub(r);
        let x1 = (x + r + 1).min(w);
        let y1 = (y + r + 1).min(h);
        sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
            - sat[y0 * (w + 1) + x1]
            - sat[y1 * (w + 1) + x0]
    })
}

/// Peak of the `k × k` average-pooled density outside `exclusion`.
///
/// Pooled ties resolve to the higher raw density, then to the first pixel
/// in row-major order.
pub fn select_origin<T: Real>(gt: &DensityMap, k: usize, exclusion: &Mask) -> Result<Point2<T>> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(PcfError::InvalidParameter(format!(
            "kernel size must be odd, got {k}"
        )));
    }
    ensure_dims(gt.dims(), exclusion.dims())?;
    let pooled = box_sums(&gt.counts, k);
    let mut best: Option<((u64, u32), usize, usize)> = None;
    for (x, y, &s) in pooled.iter_xy() {
        if s == 0 || *exclusion.get(x, y) {
            continue;
        }
        let key = (s, gt.get(x, y));
        if best.is_none_or(|(b, _, _)| key > b) {
            best = Some((key, x, y));
        }
    }
    best.map(|(_, x, y)| Point2::pixel(x, y))
        .ok_or(PcfError::NoCandidate)
}

fn sample_in_disk(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    (r * theta.cos(), r * theta.sin())
}

/// Builds a pair around a fixed target origin.
pub fn build_pair_at<T: Real>(
    flow: &FlowField<T>,
    origin: Point2<T>,
    cfg: &BuilderConfig,
    rng_seed: u64,
) -> Result<BcsPair<T>> {
    cfg.validate()?;
    let origin_flow = flow.sample(origin).ok_or(PcfError::InvalidFlowAtVertex {
        x: origin.x.to_f64_lossy(),
        y: origin.y.to_f64_lossy(),
    })?;
    let src_origin = origin + origin_flow;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let radius = cfg.radius();
    let eps = T::of(EPS_AREA);
    let (ox, oy) = (origin.x.to_f64_lossy(), origin.y.to_f64_lossy());
    let (w, h) = (flow.width() as f64, flow.height() as f64);
    let in_bounds = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0;

    for _ in 0..MAX_VERTEX_ATTEMPTS {
        let (dx1, dy1) = sample_in_disk(&mut rng, radius);
        let (dx2, dy2) = sample_in_disk(&mut rng, radius);
        let (bx, by, cx, cy) = (ox + dx1, oy + dy1, ox + dx2, oy + dy2);
        if !in_bounds(bx, by) || !in_bounds(cx, cy) {
            continue;
        }
        let b = Point2::new(T::of(bx), T::of(by));
        let c = Point2::new(T::of(cx), T::of(cy));
        let one = T::one();
        if (b - origin).norm() < one || (c - origin).norm() < one || (c - b).norm() < one {
            continue;
        }
        if signed_area(origin, b, c).abs() <= eps {
            continue;
        }
        let (Some(fb), Some(fc)) = (flow.sample(b), flow.sample(c)) else {
            continue;
        };
        let (sb, sc) = (b + fb, c + fc);
        if signed_area(src_origin, sb, sc).abs() <= eps {
            continue;
        }
        return Ok(BcsPair {
            source: Bcs::new(src_origin, sb, sc)?,
            target: Bcs::new(origin, b, c)?,
        });
    }
    Err(PcfError::DegenerateAfterRetries {
        attempts: MAX_VERTEX_ATTEMPTS,
    })
}

/// Builds a pair at the pooled density peak outside `exclusion`.
pub fn build_bcs_pair<T: Real>(
    flow: &FlowField<T>,
    cfg: &BuilderConfig,
    exclusion: &Mask,
) -> Result<BcsPair<T>> {
    cfg.validate()?;
    let (_, gt) = flow_density(flow)?;
    let origin = select_origin(&gt, cfg.k, exclusion)?;
    build_pair_at(flow, origin, cfg, cfg.rng_seed)
}

/// Outcome of [`build_with_reselection`].
#[derive(Debug, Clone, PartialEq)]
pub enum Selection<T> {
    Built {
        pair: BcsPair<T>,
        /// Number of build attempts, including the successful one.
        builds: usize,
        /// Exclusion mask in effect when the pair was accepted.
        exclusion: Mask,
    },
    /// Every origin was rejected: callers fall back to an all-zero confidence
    /// map and Cartesian coordinates.
    Fallback { builds: usize },
}

impl<T> Selection<T> {
    pub fn builds(&self) -> usize {
        match self {
            Selection::Built { builds, .. } | Selection::Fallback { builds } => *builds,
        }
    }
}

/// Builds a pair, re-selecting the origin while `probe` reports a mean
/// confidence below `cfg.probe_threshold`.
///
/// Each rejected origin masks a disk of radius `(k - 1) / 2` around itself.
/// At most `cfg.max_reselect + 1` builds are attempted; a build that fails
/// outright counts as a rejected origin.
pub fn build_with_reselection<T: Real>(
    flow: &FlowField<T>,
    cfg: &BuilderConfig,
    initial_exclusion: &Mask,
    mut probe: impl FnMut(&BcsPair<T>) -> T,
) -> Result<Selection<T>> {
    cfg.validate()?;
    ensure_dims(flow.dims(), initial_exclusion.dims())?;
    let gt = match flow_density(flow) {
        Ok((_, gt)) => gt,
        Err(PcfError::EmptyFlow) => return Ok(Selection::Fallback { builds: 0 }),
        Err(e) => return Err(e),
    };
    let mut exclusion = initial_exclusion.clone();
    let threshold = T::of(cfg.probe_threshold);
    let mut builds = 0;
    for attempt in 0..=cfg.max_reselect {
        let origin: Point2<T> = match select_origin(&gt, cfg.k, &exclusion) {
            Ok(o) => o,
            Err(PcfError::NoCandidate) => break,
            Err(e) => return Err(e),
        };
        builds += 1;
        let seed = cfg.rng_seed.wrapping_add(attempt as u64);
        if let Ok(pair) = build_pair_at(flow, origin, cfg, seed) {
            let score = probe(&pair);
            if score >= threshold {
                return Ok(Selection::Built {
                    pair,
                    builds,
                    exclusion,
                });
            }
        }
        exclusion.paint_disk(
            origin.x.to_f64_lossy(),
            origin.y.to_f64_lossy(),
            cfg.radius(),
        );
    }
    Ok(Selection::Fallback { builds })
}
