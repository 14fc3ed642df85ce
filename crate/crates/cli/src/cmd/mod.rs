pub mod encode;
pub mod eval;
pub mod flags;
pub mod multihomog;
pub mod pcf;
pub mod synth;

use std::path::Path;

use pcf_core::io::{flo, write_atomic};
use pcf_core::{FlowField, PcfError};
use serde::Serialize;

use crate::error::{AtPath, CliResult};

pub fn read_flow(path: &Path) -> CliResult<FlowField<f64>> {
    flo::read_flo(path).at(path)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(PcfError::from)
        .at(path)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).at(path)
}
