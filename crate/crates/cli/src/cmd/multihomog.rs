use std::path::PathBuf;

use clap::Args;
use pcf_core::downstream::{multi_homography_classify, MultiHomogResult};
use pcf_core::io::{corr, png};
use pcf_core::{PcfError, Point2};
use serde::Serialize;

use crate::cmd::{read_flow, write_json};
use crate::config::{ConfigFile, HomogArgs};
use crate::error::{AtPath, CliResult};

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["corr", "flow"])))]
pub struct MultihomogArgs {
    /// Correspondences CSV `xs,ys,xt,yt[,ms,mt]`.
    #[arg(long)]
    pub corr: Option<PathBuf>,
    /// Dense forward flow (.flo); sampled every `--stride` pixels.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub homog: HomogArgs,
}

#[derive(Serialize)]
struct Models {
    /// Row-major, `h33 = 1`; model `i` carries label `i + 1`.
    models: Vec<[f64; 9]>,
    inliers: Vec<usize>,
}

struct Dense {
    width: usize,
    height: usize,
    /// Target pixel of every sampled correspondence.
    pixels: Vec<(usize, usize)>,
}

type Matches = Vec<(Point2<f64>, Point2<f64>)>;

fn sample_flow(path: &std::path::Path, stride: usize) -> CliResult<(Matches, Dense)> {
    let flow = read_flow(path)?;
    let (w, h) = flow.dims();
    let mut pairs = Vec::new();
    let mut pixels = Vec::new();
    for y in (0..h).step_by(stride) {
        for x in (0..w).step_by(stride) {
            if let Some(src) = flow.source_point(x, y) {
                pairs.push((src, Point2::pixel(x, y)));
                pixels.push((x, y));
            }
        }
    }
    Ok((
        pairs,
        Dense {
            width: w,
            height: h,
            pixels,
        },
    ))
}

fn label_image(d: &Dense, labels: &[usize], stride: usize) -> Vec<u8> {
    let mut rgb = vec![0u8; d.width * d.height * 3];
    for (&(x0, y0), &label) in d.pixels.iter().zip(labels) {
        let color = png::label_color(label);
        for y in y0..(y0 + stride).min(d.height) {
            for x in x0..(x0 + stride).min(d.width) {
                let i = (y * d.width + x) * 3;
                rgb[i..i + 3].copy_from_slice(&color);
            }
        }
    }
    rgb
}

pub fn run(a: &MultihomogArgs, file: &ConfigFile) -> CliResult<()> {
    if a.stride == 0 {
        return Err(crate::error::CliError::Usage(
            "--stride must be >= 1".into(),
        ));
    }
    let cfg = a.homog.resolve(file)?;
    let (pairs, dense) = match (&a.corr, &a.flow) {
        (Some(p), _) => {
            let rows = corr::read_correspondences(p).at(p)?;
            (
                rows.iter()
                    .map(|r| (r.source(), r.target()))
                    .collect::<Vec<_>>(),
                None,
            )
        }
        (None, Some(p)) => {
            let (pairs, d) = sample_flow(p, a.stride)?;
            (pairs, Some(d))
        }
        (None, None) => unreachable!("clap enforces one input"),
    };
    let result = match multi_homography_classify(&pairs, &cfg) {
        Ok(r) => r,
        // fewer correspondences than the inlier floor: nothing can be fitted
        Err(PcfError::TooFewPoints { .. }) => MultiHomogResult {
            labels: vec![0; pairs.len()],
            models: Vec::new(),
        },
        Err(e) => return Err(e.into()),
    };

    let path = a.out.join("labels.csv");
    corr::write_labels(&path, &result.labels).at(&path)?;
    let inliers = (1..=result.models.len())
        .map(|m| result.labels.iter().filter(|&&l| l == m).count())
        .collect();
    write_json(
        &a.out.join("homographies.json"),
        &Models {
            models: result.models.iter().map(|h| h.to_row_major()).collect(),
            inliers,
        },
    )?;
    if let Some(d) = dense {
        let path = a.out.join("labels.png");
        png::write_rgb(
            &path,
            d.width,
            d.height,
            &label_image(&d, &result.labels, a.stride),
        )
        .at(&path)?;
    }
    Ok(())
}
