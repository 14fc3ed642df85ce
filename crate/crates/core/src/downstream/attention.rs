//! Confidence-masked scaled dot-product attention.

use crate::error::{PcfError, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PcfError::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(PcfError::LengthMismatch {
                expected: cols,
                actual: r.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Columns `start..start + width`.
    pub fn columns(&self, start: usize, width: usize) -> Self {
        let data = (0..self.rows)
            .flat_map(|r| self.row(r)[start..start + width].iter().copied())
            .collect();
        Self {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    /// Side-by-side concatenation; every block must have the same row count.
    pub fn hconcat(blocks: &[Self]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if let Some(b) = blocks.iter().find(|b| b.rows != rows) {
            return Err(PcfError::DimMismatch {
                expected: (rows, 0),
                actual: (b.rows, b.cols),
            });
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for b in blocks {
                data.extend_from_slice(b.row(r));
            }
        }
        Ok(Self { rows, cols, data })
    }
}

/// `softmax((m_q m_kᵀ) ⊙ (q kᵀ) / √d) · v`.
///
/// With all-ones masks this is standard attention; a zero query mask gives
/// uniform weights, so that output row is the column mean of `v`.
pub fn masked_attention<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    m_q: &[T],
    m_k: &[T],
) -> Result<Matrix<T>> {
    let d = q.cols;
    if d == 0 {
        return Err(PcfError::InvalidParameter(
            "feature dimension must be >= 1".into(),
        ));
    }
    if k.cols != d {
        return Err(PcfError::DimMismatch {
            expected: (k.rows, d),
            actual: (k.rows, k.cols),
        });
    }
    if v.rows != k.rows {
        return Err(PcfError::DimMismatch {
            expected: (k.rows, v.cols),
            actual: (v.rows, v.cols),
        });
    }
    if m_q.len() != q.rows {
        return Err(PcfError::LengthMismatch {
            expected: q.rows,
            actual: m_q.len(),
        });
    }
    if m_k.len() != k.rows {
        return Err(PcfError::LengthMismatch {
            expected: k.rows,
            actual: m_k.len(),
        });
    }
    let scale = T::one() / T::of(d as f64).sqrt();
    let mut out = Matrix::zeros(q.rows, v.cols);
    let mut logits = vec![T::zero(); k.rows];
    for (i, &mq) in m_q.iter().enumerate() {
        let qi = q.row(i);
        for (j, l) in logits.iter_mut().enumerate() {
            let dot = qi
                .iter()
                .zip(k.row(j))
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            *l = mq * m_k[j] * dot * scale;
        }
        let peak = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        let row = &mut out.data[i * v.cols..(i + 1) * v.cols];
        for (j, &l) in logits.iter().enumerate() {
            let w = (l - peak).exp();
            total = total + w;
            for (o, &vj) in row.iter_mut().zip(v.row(j)) {
                *o = *o + w * vj;
            }
        }
        for o in row.iter_mut() {
            *o = *o / total;
        }
    }
    Ok(out)
}

/// Splits the feature columns into `heads` equal blocks, attends per block
/// and concatenates the outputs. No learned projections are applied.
pub fn multi_head_attention<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    m_q: &[T],
    m_k: &[T],
    heads: usize,
) -> Result<Matrix<T>> {
    if heads == 0 || !q.cols.is_multiple_of(heads) || !v.cols.is_multiple_of(heads) {
        return Err(PcfError::InvalidParameter(format!(
            "{heads} heads do not divide feature widths {} and {}",
            q.cols, v.cols
        )));
    }
    let (dq, dv) = (q.cols / heads, v.cols / heads);
    let outs = (0..heads)
        .map(|h| {
            masked_attention(
                &q.columns(h * dq, dq),
                &k.columns(h * dq, dq),
                &v.columns(h * dv, dv),
                m_q,
                m_k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::hconcat(&outs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_key_returns_value() {
        let out = masked_attention(
            &m(&[&[0.3, -2.0]]),
            &m(&[&[1.0, 4.0]]),
            &m(&[&[7.0, 8.0]]),
            &[1.0],
            &[1.0],
        )
        .unwrap();
        assert_eq!(out.row(0), &[7.0, 8.0]);
    }

    #[test]
    fn hand_softmax_example() {
        let out = masked_attention(
            &m(&[&[2.0]]),
            &m(&[&[1.0], &[-1.0]]),
            &m(&[&[10.0], &[20.0]]),
            &[1.0],
            &[1.0, 1.0],
        )
        .unwrap();
        let (a, b) = (2.0f64.exp(), (-2.0f64).exp());
        let expected = (10.0 * a + 20.0 * b) / (a + b);
        assert!((out.get(0, 0) - expected).abs() < 1e-12);
        assert!((out.get(0, 0) - 10.18).abs() < 1e-2);
    }

    #[test]
    fn zero_query_mask_gives_column_mean() {
        let v = m(&[&[1.0, 2.0], &[3.0, -5.0], &[0.1, 0.7]]);
        let q = m(&[&[3.0, 1.0], &[-2.0, 0.5]]);
        let k = m(&[&[1.0, 1.0], &[0.0, 2.0], &[5.0, -1.0]]);
        let out = masked_attention(&q, &k, &v, &[0.0, 1.0], &[1.0, 1.0, 1.0]).unwrap();
        for c in 0..2 {
            let mean = (v.get(0, c) + v.get(1, c) + v.get(2, c)) / 3.0;
            assert_eq!(out.get(0, c), mean);
        }
    }

    #[test]
    fn dims_checked() {
        let a = m(&[&[1.0, 2.0]]);
        let b = m(&[&[1.0]]);
        assert!(masked_attention(&a, &b, &b, &[1.0], &[1.0]).is_err());
        assert!(masked_attention(&a, &a, &a, &[1.0, 1.0], &[1.0]).is_err());
        assert!(masked_attention(&a, &a, &m(&[&[1.0], &[2.0]]), &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn multi_head_matches_per_block() {
        let q = m(&[&[1.0, 0.5, -1.0, 2.0], &[0.0, 1.0, 1.0, 0.0]]);
        let k = m(&[
            &[0.2, 0.1, 0.3, -0.4],
            &[1.0, -1.0, 0.5, 0.5],
            &[0.0, 0.0, 1.0, 1.0],
        ]);
        let v = m(&[
            &[1.0, 2.0, 3.0, 4.0],
            &[5.0, 6.0, 7.0, 8.0],
            &[9.0, 10.0, 11.0, 12.0],
        ]);
        let (mq, mk) = ([1.0, 0.5], [1.0, 0.3, 0.9]);
        let out = multi_head_attention(&q, &k, &v, &mq, &mk, 2).unwrap();
        let left = masked_attention(
            &q.columns(0, 2),
            &k.columns(0, 2),
            &v.columns(0, 2),
            &mq,
            &mk,
        )
        .unwrap();
        let right = masked_attention(
            &q.columns(2, 2),
            &k.columns(2, 2),
            &v.columns(2, 2),
            &mq,
            &mk,
        )
        .unwrap();
        assert_eq!(out, Matrix::hconcat(&[left, right]).unwrap());
        assert!(multi_head_attention(&q, &k, &v, &mq, &mk, 3).is_err());
    }
}
