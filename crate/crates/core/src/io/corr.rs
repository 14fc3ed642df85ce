//! Correspondence and label CSV files.
//!
//! Correspondences use the header `xs,ys,xt,yt[,ms,mt]` with decimal pixel
//! coordinates; labels use `index,label`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Point2;
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub xs: f64,
    pub ys: f64,
    pub xt: f64,
    pub yt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mt: Option<f64>,
}

impl Correspondence {
    pub fn new(src: Point2<f64>, dst: Point2<f64>) -> Self {
        Self {
            xs: src.x,
            ys: src.y,
            xt: dst.x,
            yt: dst.y,
            ms: None,
            mt: None,
        }
    }

    pub fn source(&self) -> Point2<f64> {
        Point2::new(self.xs, self.ys)
    }

    pub fn target(&self) -> Point2<f64> {
        Point2::new(self.xt, self.yt)
    }
}

pub fn parse_correspondences(text: &[u8]) -> Result<Vec<Correspondence>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text);
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn read_correspondences(path: impl AsRef<Path>) -> Result<Vec<Correspondence>> {
    parse_correspondences(&std::fs::read(path)?)
}

/// Writes the confidence columns only when every row carries both.
pub fn write_correspondences(path: impl AsRef<Path>, rows: &[Correspondence]) -> Result<()> {
    let with_conf = !rows.is_empty() && rows.iter().all(|r| r.ms.is_some() && r.mt.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    if with_conf {
        w.write_record(["xs", "ys", "xt", "yt", "ms", "mt"])?;
    } else {
        w.write_record(["xs", "ys", "xt", "yt"])?;
    }
    for r in rows {
        let mut rec = vec![
            r.xs.to_string(),
            r.ys.to_string(),
            r.xt.to_string(),
            r.yt.to_string(),
        ];
        if with_conf {
            rec.push(r.ms.unwrap_or(0.0).to_string());
            rec.push(r.mt.unwrap_or(0.0).to_string());
        }
        w.write_record(&rec)?;
    }
    write_atomic(path.as_ref(), &w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    write_atomic(path.as_ref(), &w.into_inner().map_err(|e| e.into_error())?)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.deserialize::<(usize, usize)>() {
        out.push(rec?.1);
    }
    Ok(out)
}
