use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use pcf_core::io::{png, write_atomic};
use pcf_core::pcf::{coverage_iou, load_entries};
use pcf_core::Mask;

use crate::error::{AtPath, CliResult};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `pcf pcf`.
    #[arg(long)]
    pub pcf: PathBuf,
    /// Ground-truth valid mask (PNG, non-zero = valid).
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write the CSV here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// `systems,iou` rows for the cumulative union of the first `n` entries.
pub fn iou_table(entries: &[Mask], gt: &Mask) -> pcf_core::Result<String> {
    let mut csv = String::from("systems,iou\n");
    let mut acc = Mask::filled(gt.width(), gt.height(), false);
    for (n, reliable) in entries.iter().enumerate() {
        acc = acc.union(reliable)?;
        writeln!(csv, "{},{:.6}", n + 1, coverage_iou(&acc, gt)?).expect("writing to a String");
    }
    Ok(csv)
}

pub fn run(a: &EvalArgs) -> CliResult<()> {
    let entries = load_entries::<f64>(&a.pcf).at(&a.pcf)?;
    let gt = png::read_mask(&a.gt).at(&a.gt)?;
    let masks: Vec<Mask> = entries.iter().map(|e| e.reliable_mask()).collect();
    let csv = iou_table(&masks, &gt)?;
    print!("{csv}");
    if let Some(path) = &a.out {
        write_atomic(path, csv.as_bytes()).at(path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcf_core::Grid;

    #[test]
    fn cumulative_rows() {
        let gt = Mask::filled(4, 2, true);
        let top = Grid::from_fn(4, 2, |_, y| y == 0);
        let bottom = Grid::from_fn(4, 2, |_, y| y == 1);
        assert_eq!(
            iou_table(&[top, bottom], &gt).unwrap(),
            "systems,iou\n1,0.500000\n2,1.000000\n"
        );
        let empty = Mask::filled(4, 2, false);
        assert_eq!(
            iou_table(&[empty], &gt).unwrap(),
            "systems,iou\n1,0.000000\n"
        );
    }
}
