use std::path::PathBuf;

use clap::Args;
use pcf_core::bcs_builder::{build_bcs_pair, flow_density};
use pcf_core::flowfield::{error_map, warp_field};
use pcf_core::geometry::encode_field;
use pcf_core::io::{cfld, png};
use pcf_core::pcf::BcsRecord;
use pcf_core::probmodel::distance_map;
use pcf_core::{Grid, Mask, PcfError};

use crate::cmd::{read_flow, write_json};
use crate::config::{ConfigFile, ModelArgs, RunConfig};
use crate::error::{AtPath, CliError, CliResult};

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Forward flow (.flo) on the target grid.
    #[arg(long)]
    pub forward: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn run(a: &EncodeArgs, file: &ConfigFile) -> CliResult<()> {
    let cfg = RunConfig::resolve(&a.model, file)?;
    let flow = read_flow(&a.forward)?;
    let (w, h) = flow.dims();
    let none = Mask::filled(w, h, false);
    let pair = match build_bcs_pair(&flow, &cfg.builder(), &none) {
        Ok(p) => p,
        Err(PcfError::NoCandidate | PcfError::EmptyFlow) => return Err(CliError::Fallback),
        Err(e) => return Err(e.into()),
    };
    let all = Mask::filled(w, h, true);
    let source = encode_field(w, h, &pair.source, &all)?;
    let target = encode_field(w, h, &pair.target, &all)?;
    let remapped = warp_field(&source, &flow)?;

    let write = |name: &str, field| -> CliResult<()> {
        let path = a.out.join(name);
        cfld::write_coord_field(&path, field).at(&path)
    };
    write("source.cfld", &source)?;
    write("target.cfld", &target)?;
    write("remapped.cfld", &remapped)?;
    write_json(
        &a.out.join("bcs.json"),
        &BcsRecord {
            fallback: false,
            builds: 1,
            mode: Default::default(),
            threshold: cfg.threshold,
            source: Some(pair.source.vertices().map(|v| [v.x, v.y])),
            target: Some(pair.target.vertices().map(|v| [v.x, v.y])),
        },
    )?;

    let (_, gt) = flow_density(&flow)?;
    let path = a.out.join("density.png");
    png::write_counts16(&path, gt.counts()).at(&path)?;

    let dist = distance_map(w, h, pair.target.origin(), cfg.gamma)?;
    let path = a.out.join("distance.png");
    png::write_unit_gray(&path, &dist).at(&path)?;

    // coordinate disagreement between target and remapped fields, scaled by its maximum
    let err = error_map(&target, &remapped)?;
    let max = err.as_slice().iter().copied().fold(0.0, f64::max);
    let scaled = Grid::from_fn(w, h, |x, y| {
        let e = *err.get(x, y);
        if e < 0.0 || max == 0.0 {
            0.0
        } else {
            e / max
        }
    });
    let path = a.out.join("error.png");
    png::write_unit_gray(&path, &scaled).at(&path)
}
