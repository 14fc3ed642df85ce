use std::path::PathBuf;

use clap::Args;
use pcf_core::io::{cfld, png};
use pcf_core::pcf::{build_pcf_set, entry_dir, save_pcf_set, PcfEntry};
use pcf_core::CoordField;
use serde::Serialize;

use crate::cmd::{read_flow, write_json};
use crate::config::{ConfigFile, ModelArgs, RunConfig};
use crate::error::{AtPath, CliError, CliResult};

#[derive(Debug, Args)]
pub struct PcfArgs {
    /// Forward flow (.flo) on the target grid.
    #[arg(long)]
    pub forward: PathBuf,
    /// Backward flow (.flo) on the source grid.
    #[arg(long)]
    pub backward: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Serialize)]
struct EntryReport {
    index: usize,
    fallback: bool,
    builds: usize,
    origin: Option<[f64; 2]>,
    mean_confidence: f64,
    reliable_pixels: usize,
    /// Observed `[min, max]` of λ1 and λ2 mapped to red and green.
    lambda1_range: [f64; 2],
    lambda2_range: [f64; 2],
}

#[derive(Serialize)]
struct Report {
    config: RunConfig,
    width: usize,
    height: usize,
    valid_pixels: usize,
    union_pixels: usize,
    /// Reliable union over pixels with a valid forward flow.
    coverage: f64,
    entries: Vec<EntryReport>,
}

fn observed_range(values: &[f64], valid: &[bool]) -> [f64; 2] {
    let mut it = values
        .iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v);
    match it.next() {
        None => [0.0, 0.0],
        Some(first) => it.fold([first, first], |[lo, hi], v| [lo.min(v), hi.max(v)]),
    }
}

fn stretch(v: f64, [lo, hi]: [f64; 2]) -> u8 {
    if hi > lo {
        png::unit_to_u8((v - lo) / (hi - lo))
    } else {
        0
    }
}

/// λ1 → red and λ2 → green over their observed range, confidence → blue.
fn color_image(coords: &CoordField<f64>, conf: &[f64], r1: [f64; 2], r2: [f64; 2]) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(conf.len() * 3);
    let (l1, l2, valid) = (
        coords.lambda1().as_slice(),
        coords.lambda2().as_slice(),
        coords.valid().as_slice(),
    );
    for i in 0..conf.len() {
        if valid[i] {
            rgb.extend_from_slice(&[
                stretch(l1[i], r1),
                stretch(l2[i], r2),
                png::unit_to_u8(conf[i]),
            ]);
        } else {
            rgb.extend_from_slice(&[0, 0, 0]);
        }
    }
    rgb
}

fn entry_report(index: usize, e: &PcfEntry<f64>) -> (EntryReport, Vec<u8>) {
    let coords = e.pcf.coords();
    let conf = e.pcf.confidence();
    let valid = coords.valid().as_slice();
    let r1 = observed_range(coords.lambda1().as_slice(), valid);
    let r2 = observed_range(coords.lambda2().as_slice(), valid);
    let rgb = color_image(coords, conf.values().as_slice(), r1, r2);
    (
        EntryReport {
            index,
            fallback: e.is_fallback(),
            builds: e.builds,
            origin: e.pair.map(|p| {
                let o = p.target.origin();
                [o.x, o.y]
            }),
            mean_confidence: conf.mean(),
            reliable_pixels: e.reliable_mask().count(),
            lambda1_range: r1,
            lambda2_range: r2,
        },
        rgb,
    )
}

pub fn run(a: &PcfArgs, file: &ConfigFile) -> CliResult<()> {
    let cfg = RunConfig::resolve(&a.model, file)?;
    let fwd = read_flow(&a.forward)?;
    let bwd = read_flow(&a.backward)?;
    let set = build_pcf_set(&fwd, &bwd, &cfg.constraints()?, &cfg.pcf())?;
    let (w, h) = fwd.dims();

    save_pcf_set(&a.out, &set).at(&a.out)?;
    let path = a.out.join("params.cfld");
    cfld::write_params(&path, &set.params).at(&path)?;

    let mut entries = Vec::new();
    for (n, e) in set.entries.iter().enumerate() {
        let (report, rgb) = entry_report(n, e);
        let path = entry_dir(&a.out, n).join("color.png");
        png::write_rgb(&path, w, h, &rgb).at(&path)?;
        entries.push(report);
    }
    let valid = fwd.valid().count();
    let covered = set.union_reliable.intersection(fwd.valid())?.count();
    write_json(
        &a.out.join("report.json"),
        &Report {
            config: cfg,
            width: w,
            height: h,
            valid_pixels: valid,
            union_pixels: set.union_reliable.count(),
            coverage: if valid == 0 {
                0.0
            } else {
                covered as f64 / valid as f64
            },
            entries,
        },
    )?;
    if set.all_fallback() {
        return Err(CliError::Fallback);
    }
    Ok(())
}
