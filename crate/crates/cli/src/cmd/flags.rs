use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use pcf_core::downstream::{assemble_filter_input, filter_flags, SparseCoords};
use pcf_core::geometry::{bary_coords, zero_score_normalize};
use pcf_core::io::corr::{self, Correspondence};
use pcf_core::io::{cfld, write_atomic};
use pcf_core::pcf::BcsRecord;
use pcf_core::probmodel::ConfidenceField;
use pcf_core::{BcsPair, PcfError, Point2};

use crate::error::{AtPath, CliError, CliResult};

#[derive(Debug, Args)]
pub struct FlagsArgs {
    /// `bcs.json` of a coordinate system; give once or twice.
    #[arg(long = "bcs", required = true, num_args = 1)]
    pub bcs: Vec<PathBuf>,
    /// Correspondences CSV `xs,ys,xt,yt[,ms,mt]`.
    #[arg(long)]
    pub corr: PathBuf,
    /// Source-grid confidence (CFLD) used when the CSV has no `ms` column.
    #[arg(long = "conf-source")]
    pub conf_source: Option<PathBuf>,
    /// Target-grid confidence (CFLD) used when the CSV has no `mt` column.
    #[arg(long = "conf-target")]
    pub conf_target: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn load_pair(path: &Path) -> CliResult<BcsPair<f64>> {
    let bytes = std::fs::read(path).map_err(PcfError::from).at(path)?;
    let record: BcsRecord = serde_json::from_slice(&bytes)
        .map_err(PcfError::from)
        .at(path)?;
    record.pair().at(path)?.ok_or_else(|| {
        CliError::Usage(format!(
            "{} describes a fallback entry without vertices",
            path.display()
        ))
    })
}

fn load_conf(path: Option<&PathBuf>) -> CliResult<Option<ConfidenceField<f64>>> {
    path.map(|p| cfld::read_confidence(p).at(p)).transpose()
}

/// Confidence at the nearest pixel; `0` outside the map, `1` without a map.
fn sample(conf: Option<&ConfidenceField<f64>>, p: Point2<f64>) -> f64 {
    let Some(c) = conf else { return 1.0 };
    let (x, y) = (p.x.round(), p.y.round());
    if x < 0.0 || y < 0.0 || x >= c.width() as f64 || y >= c.height() as f64 {
        return 0.0;
    }
    c.get(x as usize, y as usize)
}

type SidePair = (Vec<[f64; 2]>, Vec<[f64; 2]>);

/// Coordinates of both sides in one system, zero-score normalized over the
/// stacked source and target sets so both share a scale.
fn normalized_coords(pair: &BcsPair<f64>, rows: &[Correspondence]) -> CliResult<SidePair> {
    let mut stacked: Vec<[f64; 2]> = rows
        .iter()
        .map(|r| bary_coords(r.source(), &pair.source).pair())
        .collect();
    stacked.extend(
        rows.iter()
            .map(|r| bary_coords(r.target(), &pair.target).pair()),
    );
    let (norm, _) = zero_score_normalize(&stacked, &vec![true; stacked.len()])?;
    let xt = norm[rows.len()..].to_vec();
    let mut xs = norm;
    xs.truncate(rows.len());
    Ok((xs, xt))
}

pub fn run(a: &FlagsArgs) -> CliResult<()> {
    if a.bcs.len() > 2 {
        return Err(CliError::Usage("at most two --bcs systems".into()));
    }
    let rows = corr::read_correspondences(&a.corr).at(&a.corr)?;
    let conf_s = load_conf(a.conf_source.as_ref())?;
    let conf_t = load_conf(a.conf_target.as_ref())?;
    let ms: Vec<f64> = rows
        .iter()
        .map(|r| r.ms.unwrap_or_else(|| sample(conf_s.as_ref(), r.source())))
        .collect();
    let mt: Vec<f64> = rows
        .iter()
        .map(|r| r.mt.unwrap_or_else(|| sample(conf_t.as_ref(), r.target())))
        .collect();

    let mut first = None;
    let mut flags = Vec::new();
    for path in &a.bcs {
        let pair = load_pair(path)?;
        let (xs, xt) = normalized_coords(&pair, &rows)?;
        let xs = SparseCoords::new(xs, ms.clone())?;
        let xt = SparseCoords::new(xt, mt.clone())?;
        flags.push(filter_flags(&xs, &xt)?);
        first.get_or_insert((xs, xt));
    }
    let (xs, xt) = first.expect("at least one --bcs");
    let table = assemble_filter_input(&xs, &xt, &flags)?;

    let mut csv = String::from("index,xs_l1,xs_l2,xt_l1,xt_l2,tau1,tau2\n");
    for (i, row) in table.iter().enumerate() {
        let r = row.to_row();
        writeln!(
            csv,
            "{i},{},{},{},{},{},{}",
            r[0], r[1], r[2], r[3], r[4], r[5]
        )
        .expect("writing to a String");
    }
    write_atomic(&a.out, csv.as_bytes()).at(&a.out)
}
