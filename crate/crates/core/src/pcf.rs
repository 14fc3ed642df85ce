//! Probabilistic coordinate fields: a remapped coordinate field combined
//! with its confidence map, and multi-system coverage built on top of it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bcs_builder::{build_with_reselection, BcsPair, BuilderConfig, Selection};
use crate::error::{PcfError, Result};
use crate::flowfield::{warp_field, FlowField};
use crate::geometry::{encode_field, Bcs, CoordField, Point2};
use crate::grid::{ensure_dims, Grid, Mask};
use crate::io::{cfld, png, write_atomic};
use crate::probmodel::{
    confidence_field_from_flow_pair, ConfidenceField, GmmConstraints, GmmParamField,
    OptimizerConfig,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcfMode {
    /// Coordinates kept where confidence reaches the threshold, zero elsewhere.
    #[default]
    Hard,
    /// Coordinates scaled by confidence.
    Soft,
}

impl fmt::Display for PcfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PcfMode::Hard => "hard",
            PcfMode::Soft => "soft",
        })
    }
}

impl FromStr for PcfMode {
    type Err = PcfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" => Ok(PcfMode::Hard),
            "soft" => Ok(PcfMode::Soft),
            other => Err(PcfError::InvalidParameter(format!(
                "unknown PCF mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pcf<T> {
    coords: CoordField<T>,
    confidence: ConfidenceField<T>,
    mode: PcfMode,
    threshold: T,
}

impl<T: Real> Pcf<T> {
    pub fn coords(&self) -> &CoordField<T> {
        &self.coords
    }

    pub fn confidence(&self) -> &ConfidenceField<T> {
        &self.confidence
    }

    pub fn mode(&self) -> PcfMode {
        self.mode
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn dims(&self) -> (usize, usize) {
        self.coords.dims()
    }

    /// Pixels whose confidence reaches the threshold and whose coordinates are valid.
    pub fn reliable_mask(&self) -> Mask {
        reliable_mask(&self.coords, &self.confidence, self.threshold)
    }
}

fn reliable_mask<T: Real>(coords: &CoordField<T>, conf: &ConfidenceField<T>, threshold: T) -> Mask {
    let (w, h) = coords.dims();
    Grid::from_fn(w, h, |x, y| {
        coords.is_valid(x, y) && conf.get(x, y) >= threshold
    })
}

/// Combines coordinates and confidence.
///
/// Soft mode stores `m · C`. Hard mode keeps `C` where `m ≥ threshold`,
/// zeroes it elsewhere and binarizes the confidence. Validity flags are
/// carried over unchanged.
pub fn assemble_pcf<T: Real>(
    coords: CoordField<T>,
    conf: ConfidenceField<T>,
    mode: PcfMode,
    threshold: T,
) -> Result<Pcf<T>> {
    ensure_dims(coords.dims(), conf.dims())?;
    if !(threshold >= T::zero() && threshold <= T::one()) {
        return Err(PcfError::InvalidParameter(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    let (w, h) = coords.dims();
    let (l1, l2, valid) = coords.into_parts();
    let weight = match mode {
        PcfMode::Soft => conf.values().clone(),
        PcfMode::Hard => conf
            .values()
            .map(|&m| if m >= threshold { T::one() } else { T::zero() }),
    };
    let scale = |g: &Grid<T>| Grid::from_fn(w, h, |x, y| *g.get(x, y) * *weight.get(x, y));
    let coords = CoordField::from_parts(scale(&l1), scale(&l2), valid)?;
    let confidence = match mode {
        PcfMode::Soft => conf,
        PcfMode::Hard => ConfidenceField::new(weight)?,
    };
    Ok(Pcf {
        coords,
        confidence,
        mode,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcfEntry<T> {
    /// `None` for a fallback entry.
    pub pair: Option<BcsPair<T>>,
    pub pcf: Pcf<T>,
    /// Build attempts spent on this entry, including rejected origins.
    pub builds: usize,
}

impl<T: Real> PcfEntry<T> {
    pub fn is_fallback(&self) -> bool {
        self.pair.is_none()
    }

    pub fn reliable_mask(&self) -> Mask {
        self.pcf.reliable_mask()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcfSet<T> {
    pub entries: Vec<PcfEntry<T>>,
    pub union_reliable: Mask,
    /// Fitted mixture parameters shared by every entry.
    pub params: GmmParamField<T>,
}

impl<T: Real> PcfSet<T> {
    /// Union of the reliable masks of the first `n` entries.
    pub fn cumulative_union(&self, n: usize) -> Mask {
        let (w, h) = self.union_reliable.dims();
        let mut acc = Mask::filled(w, h, false);
        for e in self.entries.iter().take(n) {
            let r = e.reliable_mask();
            for (a, &b) in acc.as_mut_slice().iter_mut().zip(r.as_slice()) {
                *a |= b;
            }
        }
        acc
    }

    pub fn all_fallback(&self) -> bool {
        self.entries.iter().all(PcfEntry::is_fallback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcfConfig {
    pub builder: BuilderConfig,
    pub optimizer: OptimizerConfig,
    pub patch_size: usize,
    pub max_systems: usize,
    pub threshold: f64,
    /// Stop once an entry adds fewer reliable pixels than this fraction of the image.
    pub min_gain: f64,
}

impl Default for PcfConfig {
    fn default() -> Self {
        Self {
            builder: BuilderConfig::default(),
            optimizer: OptimizerConfig::default(),
            patch_size: 8,
            max_systems: 2,
            threshold: 0.5,
            min_gain: 0.01,
        }
    }
}

/// Mean of `conf` over the disk of `radius` around `center`, clipped to the image.
fn disk_mean<T: Real>(conf: &ConfidenceField<T>, center: Point2<T>, radius: f64) -> T {
    let (w, h) = conf.dims();
    let mut disk = Mask::filled(w, h, false);
    disk.paint_disk(center.x.to_f64_lossy(), center.y.to_f64_lossy(), radius);
    let (mut sum, mut n) = (T::zero(), 0usize);
    for (x, y, &inside) in disk.iter_xy() {
        if inside {
            sum = sum + conf.get(x, y);
            n += 1;
        }
    }
    if n == 0 {
        T::zero()
    } else {
        sum / T::of(n as f64)
    }
}

/// Builds up to `cfg.max_systems` hard PCF entries over one flow pair.
///
/// Confidence is fitted once. Each new system picks its origin outside the
/// union of earlier reliable regions and earlier origin disks, and its
/// confidence is zeroed inside that union so reliable masks stay disjoint.
/// Building stops early when an entry adds less than `cfg.min_gain` of the
/// pixels or when origin selection falls back. Only a fallback on the first
/// system produces an entry, the all-zero fallback entry.
pub fn build_pcf_set<T: Real>(
    fwd: &FlowField<T>,
    bwd: &FlowField<T>,
    c: &GmmConstraints<T>,
    cfg: &PcfConfig,
) -> Result<PcfSet<T>> {
    ensure_dims(fwd.dims(), bwd.dims())?;
    if cfg.max_systems == 0 {
        return Err(PcfError::InvalidParameter(
            "max_systems must be >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(PcfError::InvalidParameter(format!(
            "threshold must lie in [0, 1], got {}",
            cfg.threshold
        )));
    }
    cfg.builder.validate()?;
    let (w, h) = fwd.dims();
    let threshold = T::of(cfg.threshold);
    let (params, conf_full) =
        confidence_field_from_flow_pair(fwd, bwd, cfg.patch_size, c, &cfg.optimizer)?;
    let all_valid = Mask::filled(w, h, true);

    let mut union = Mask::filled(w, h, false);
    let mut origin_disks = Mask::filled(w, h, false);
    let mut entries = Vec::new();
    for n in 0..cfg.max_systems {
        let builder = BuilderConfig {
            rng_seed: cfg
                .builder
                .rng_seed
                .wrapping_add((n * (cfg.builder.max_reselect + 1)) as u64),
            ..cfg.builder
        };
        let exclusion = union.union(&origin_disks)?;
        let radius = builder.radius();
        let selection = build_with_reselection(fwd, &builder, &exclusion, |pair| {
            disk_mean(&conf_full, pair.target.origin(), radius)
        })?;
        match selection {
            Selection::Built {
                pair,
                builds,
                exclusion: rejected,
            } => {
                let source = encode_field(w, h, &pair.source, &all_valid)?;
                let remapped = warp_field(&source, fwd)?;
                let conf = ConfidenceField::new(Grid::from_fn(w, h, |x, y| {
                    if *union.get(x, y) {
                        T::zero()
                    } else {
                        conf_full.get(x, y)
                    }
                }))?;
                let pcf = assemble_pcf(remapped, conf, PcfMode::Hard, threshold)?;
                let reliable = pcf.reliable_mask();
                let before = union.count();
                union = union.union(&reliable)?;
                let gain = union.count() - before;
                origin_disks = origin_disks.union(&rejected)?;
                let o = pair.target.origin();
                origin_disks.paint_disk(o.x.to_f64_lossy(), o.y.to_f64_lossy(), radius);
                entries.push(PcfEntry {
                    pair: Some(pair),
                    pcf,
                    builds,
                });
                if (gain as f64) < cfg.min_gain * (w * h) as f64 {
                    break;
                }
            }
            Selection::Fallback { builds } => {
                if entries.is_empty() {
                    entries.push(fallback_entry(w, h, threshold, builds)?);
                }
                break;
            }
        }
    }
    Ok(PcfSet {
        entries,
        union_reliable: union,
        params,
    })
}

/// All-zero confidence over Cartesian coordinates, assembled in hard mode.
pub fn fallback_entry<T: Real>(
    width: usize,
    height: usize,
    threshold: T,
    builds: usize,
) -> Result<PcfEntry<T>> {
    let pcf = assemble_pcf(
        CoordField::cartesian(width, height),
        ConfidenceField::zeros(width, height),
        PcfMode::Hard,
        threshold,
    )?;
    Ok(PcfEntry {
        pair: None,
        pcf,
        builds,
    })
}

/// `|A ∩ B| / |A ∪ B|`, or `1` when both masks are empty.
pub fn coverage_iou(reliable: &Mask, gt_valid: &Mask) -> Result<f64> {
    ensure_dims(reliable.dims(), gt_valid.dims())?;
    let (mut inter, mut uni) = (0usize, 0usize);
    for (&a, &b) in reliable.as_slice().iter().zip(gt_valid.as_slice()) {
        inter += (a && b) as usize;
        uni += (a || b) as usize;
    }
    Ok(if uni == 0 {
        1.0
    } else {
        inter as f64 / uni as f64
    })
}

/// Vertex record stored as `entry_<n>/bcs.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcsRecord {
    pub fallback: bool,
    pub builds: usize,
    pub mode: PcfMode,
    pub threshold: f64,
    /// Source vertices `[[x, y]; 3]`, origin first.
    pub source: Option<[[f64; 2]; 3]>,
    pub target: Option<[[f64; 2]; 3]>,
}

fn vertices<T: Real>(bcs: &Bcs<T>) -> [[f64; 2]; 3] {
    bcs.vertices()
        .map(|v| [v.x.to_f64_lossy(), v.y.to_f64_lossy()])
}

impl BcsRecord {
    pub fn from_entry<T: Real>(entry: &PcfEntry<T>) -> Self {
        Self {
            fallback: entry.is_fallback(),
            builds: entry.builds,
            mode: entry.pcf.mode(),
            threshold: entry.pcf.threshold().to_f64_lossy(),
            source: entry.pair.as_ref().map(|p| vertices(&p.source)),
            target: entry.pair.as_ref().map(|p| vertices(&p.target)),
        }
    }

    pub fn pair<T: Real>(&self) -> Result<Option<BcsPair<T>>> {
        let bcs = |v: &[[f64; 2]; 3]| {
            let [a, b, c] = v.map(|[x, y]| Point2::new(T::of(x), T::of(y)));
            Bcs::new(a, b, c)
        };
        match (&self.source, &self.target) {
            (Some(s), Some(t)) => Ok(Some(BcsPair {
                source: bcs(s)?,
                target: bcs(t)?,
            })),
            _ => Ok(None),
        }
    }
}

pub fn entry_dir(root: &Path, n: usize) -> std::path::PathBuf {
    root.join(format!("entry_{n}"))
}

/// Writes `entry_<n>/{coords.cfld, conf.cfld, bcs.json}` and `union.png`.
pub fn save_pcf_set<T: Real>(root: impl AsRef<Path>, set: &PcfSet<T>) -> Result<()> {
    let root = root.as_ref();
    for (n, entry) in set.entries.iter().enumerate() {
        let dir = entry_dir(root, n);
        cfld::write_coord_field(dir.join("coords.cfld"), entry.pcf.coords())?;
        cfld::write_confidence(dir.join("conf.cfld"), entry.pcf.confidence())?;
        let json = serde_json::to_vec_pretty(&BcsRecord::from_entry(entry))?;
        write_atomic(&dir.join("bcs.json"), &json)?;
    }
    png::write_mask(root.join("union.png"), &set.union_reliable)
}

/// Entry as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredEntry<T> {
    pub record: BcsRecord,
    pub coords: CoordField<T>,
    pub confidence: ConfidenceField<T>,
}

impl<T: Real> StoredEntry<T> {
    pub fn reliable_mask(&self) -> Mask {
        reliable_mask(&self.coords, &self.confidence, T::of(self.record.threshold))
    }
}

/// Reads `entry_0`, `entry_1`, ... until the first missing directory.
pub fn load_entries<T: Real>(root: impl AsRef<Path>) -> Result<Vec<StoredEntry<T>>> {
    let root = root.as_ref();
    let mut out = Vec::new();
    for n in 0.. {
        let dir = entry_dir(root, n);
        if !dir.is_dir() {
            break;
        }
        let record: BcsRecord = serde_json::from_slice(&std::fs::read(dir.join("bcs.json"))?)?;
        let coords = cfld::read_coord_field(dir.join("coords.cfld"))?;
        let confidence = cfld::read_confidence(dir.join("conf.cfld"))?;
        ensure_dims(coords.dims(), confidence.dims())?;
        out.push(StoredEntry {
            record,
            coords,
            confidence,
        });
    }
    Ok(out)
}
