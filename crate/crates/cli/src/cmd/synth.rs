use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use pcf_core::flowfield::{synth_flow_homography, Rect};
use pcf_core::io::{flo, png};
use pcf_core::{HomographyMap, PcfError};
use serde::Serialize;

use crate::cmd::write_json;
use crate::error::{AtPath, CliError, CliResult};

/// `WxH` image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("size must be WxH, got `{s}`"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad size component `{v}`"))
        };
        let size = Size {
            width: parse(w)?,
            height: parse(h)?,
        };
        if size.width == 0 || size.height == 0 {
            return Err("size must be non-zero".into());
        }
        Ok(size)
    }
}

/// `identity` or nine row-major numbers separated by commas or spaces.
pub fn parse_homography(s: &str) -> Result<HomographyMap<f64>, String> {
    if s.trim().eq_ignore_ascii_case("identity") {
        return Ok(HomographyMap::identity());
    }
    let values = s
        .split([',', ' '])
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| format!("bad homography entry `{v}`"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    HomographyMap::from_row_major(&values).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "128x128")]
    pub size: Size,
    /// Source-to-target homography.
    #[arg(long, default_value = "identity", value_parser = parse_homography)]
    pub homography: HomographyMap<f64>,
    /// Occluded target rectangle `x,y,w,h`; repeatable. Applies to the forward flow.
    #[arg(long = "occluder", value_parser = |s: &str| s.parse::<Rect>().map_err(|e: PcfError| e.to_string()))]
    pub occluders: Vec<Rect>,
    /// Standard deviation of Gaussian noise added to the forward flow, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, env = "PCF_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Manifest {
    width: usize,
    height: usize,
    homography: [f64; 9],
    occluders: Vec<[usize; 4]>,
    noise_sigma: f64,
    seed: u64,
    valid_pixels: usize,
    forward: &'static str,
    backward: &'static str,
    gt_valid: &'static str,
}

pub fn run(a: &SynthArgs) -> CliResult<()> {
    if !(a.noise >= 0.0) {
        return Err(CliError::Usage("--noise must be >= 0".into()));
    }
    let (w, h) = (a.size.width, a.size.height);
    let fwd = synth_flow_homography(&a.homography, w, h, &a.occluders, a.noise, a.seed)?;
    let bwd = synth_flow_homography(&a.homography.inverse()?, w, h, &[], 0.0, a.seed)?;

    let path = a.out.join("forward.flo");
    flo::write_flo(&path, &fwd).at(&path)?;
    let path = a.out.join("backward.flo");
    flo::write_flo(&path, &bwd).at(&path)?;
    let path = a.out.join("gt_valid.png");
    png::write_mask(&path, fwd.valid()).at(&path)?;
    write_json(
        &a.out.join("manifest.json"),
        &Manifest {
            width: w,
            height: h,
            homography: a.homography.to_row_major(),
            occluders: a.occluders.iter().map(|r| [r.x, r.y, r.w, r.h]).collect(),
            noise_sigma: a.noise,
            seed: a.seed,
            valid_pixels: fwd.valid().count(),
            forward: "forward.flo",
            backward: "backward.flo",
            gt_valid: "gt_valid.png",
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_parsing() {
        assert_eq!(
            "64x32".parse::<Size>().unwrap(),
            Size {
                width: 64,
                height: 32
            }
        );
        assert!("64".parse::<Size>().is_err());
        assert!("0x4".parse::<Size>().is_err());
    }

    #[test]
    fn homography_parsing() {
        assert_eq!(
            parse_homography("identity").unwrap(),
            HomographyMap::identity()
        );
        let h = parse_homography("1,0,5, 0,1,-2, 0,0,1").unwrap();
        assert_eq!(h, HomographyMap::translation(5.0, -2.0));
        assert!(parse_homography("1,2,3").is_err());
        assert!(parse_homography("0,0,0,0,0,0,0,0,1").is_err());
    }
}
