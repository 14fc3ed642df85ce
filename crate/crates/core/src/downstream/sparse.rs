//! Sparse coordinate sets: confidence clipping and consistency flags.

use crate::error::{PcfError, Result};
use crate::scalar::Real;

/// Zero-score normalized `(λ1, λ2)` per keypoint with its confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoords<T> {
    points: Vec<[T; 2]>,
    conf: Vec<T>,
}

impl<T: Real> SparseCoords<T> {
    pub fn new(points: Vec<[T; 2]>, conf: Vec<T>) -> Result<Self> {
        if points.len() != conf.len() {
            return Err(PcfError::LengthMismatch {
                expected: points.len(),
                actual: conf.len(),
            });
        }
        if let Some(bad) = conf.iter().find(|&&m| !(m >= T::zero() && m <= T::one())) {
            return Err(PcfError::InvalidParameter(format!(
                "confidence {bad} outside [0, 1]"
            )));
        }
        Ok(Self { points, conf })
    }

    pub fn points(&self) -> &[[T; 2]] {
        &self.points
    }

    pub fn conf(&self) -> &[T] {
        &self.conf
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Replaces every row with `m < threshold` by the column-wise maximum of the
/// whole set, clipped rows included.
pub fn clip_sparse<T: Real>(x: &SparseCoords<T>, threshold: T) -> Result<SparseCoords<T>> {
    if x.is_empty() {
        return Err(PcfError::EmptySet);
    }
    let col_max = x.points.iter().fold([T::neg_infinity(); 2], |acc, p| {
        [acc[0].max(p[0]), acc[1].max(p[1])]
    });
    let points = x
        .points
        .iter()
        .zip(&x.conf)
        .map(|(p, &m)| if m >= threshold { *p } else { col_max })
        .collect();
    Ok(SparseCoords {
        points,
        conf: x.conf.clone(),
    })
}

/// `τ = mˢ·mᵗ·(3e^(−h) − 1)/(1 + e^(−h))` with `h = ‖xˢ − xᵗ‖`.
#[inline]
pub fn flag_value<T: Real>(xs: [T; 2], xt: [T; 2], ms: T, mt: T) -> T {
    let (dx, dy) = (xs[0] - xt[0], xs[1] - xt[1]);
    let e = (-(dx * dx + dy * dy).sqrt()).exp();
    ms * mt * (T::of(3.0) * e - T::one()) / (T::one() + e)
}

/// Per-correspondence consistency flags in `[−1, 1]`.
pub fn filter_flags<T: Real>(xs: &SparseCoords<T>, xt: &SparseCoords<T>) -> Result<Vec<T>> {
    if xs.len() != xt.len() {
        return Err(PcfError::LengthMismatch {
            expected: xs.len(),
            actual: xt.len(),
        });
    }
    Ok((0..xs.len())
        .map(|i| flag_value(xs.points[i], xt.points[i], xs.conf[i], xt.conf[i]))
        .collect())
}

/// Number of flag columns in a [`FilterInput`] row.
pub const FLAG_SYSTEMS: usize = 2;

/// One row `[xˢ, xᵗ, τ¹, τ²]` of the consistency-filter input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterInput<T> {
    pub xs: [T; 2],
    pub xt: [T; 2],
    pub tau: [T; FLAG_SYSTEMS],
}

impl<T: Real> FilterInput<T> {
    pub fn to_row(&self) -> [T; 6] {
        [
            self.xs[0],
            self.xs[1],
            self.xt[0],
            self.xt[1],
            self.tau[0],
            self.tau[1],
        ]
    }
}

/// Concatenates coordinates with up to two flag vectors; missing systems
/// contribute zero flags.
pub fn assemble_filter_input<T: Real>(
    xs: &SparseCoords<T>,
    xt: &SparseCoords<T>,
    flags_per_system: &[Vec<T>],
) -> Result<Vec<FilterInput<T>>> {
    let n = xs.len();
    if xt.len() != n {
        return Err(PcfError::LengthMismatch {
            expected: n,
            actual: xt.len(),
        });
    }
    if flags_per_system.len() > FLAG_SYSTEMS {
        return Err(PcfError::InvalidParameter(format!(
            "at most {FLAG_SYSTEMS} flag vectors, got {}",
            flags_per_system.len()
        )));
    }
    if let Some(f) = flags_per_system.iter().find(|f| f.len() != n) {
        return Err(PcfError::LengthMismatch {
            expected: n,
            actual: f.len(),
        });
    }
    Ok((0..n)
        .map(|i| {
            let mut tau = [T::zero(); FLAG_SYSTEMS];
            for (slot, f) in tau.iter_mut().zip(flags_per_system) {
                *slot = f[i];
            }
            FilterInput {
                xs: xs.points[i],
                xt: xt.points[i],
                tau,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[[f64; 2]], conf: &[f64]) -> SparseCoords<f64> {
        SparseCoords::new(points.to_vec(), conf.to_vec()).unwrap()
    }

    #[test]
    fn clip_examples() {
        let x = set(&[[0.0, 1.0], [2.0, -3.0]], &[1.0, 1.0]);
        assert_eq!(clip_sparse(&x, 0.5).unwrap(), x);

        let z = set(&[[0.0, 1.0], [2.0, -3.0], [-1.0, 0.5]], &[0.0, 0.0, 0.0]);
        let c = clip_sparse(&z, 0.5).unwrap();
        assert!(c.points().iter().all(|p| *p == [2.0, 1.0]));

        let lit = set(&[[0.0, 0.0], [2.0, 3.0], [9.0, 9.0]], &[1.0, 1.0, 0.0]);
        let c = clip_sparse(&lit, 0.5).unwrap();
        assert_eq!(c.points(), &[[0.0, 0.0], [2.0, 3.0], [9.0, 9.0]]);
        assert_eq!(c.conf(), lit.conf());

        assert!(matches!(
            clip_sparse(&set(&[], &[]), 0.5),
            Err(PcfError::EmptySet)
        ));
    }

    #[test]
    fn sparse_validation() {
        assert!(SparseCoords::new(vec![[0.0, 0.0]], vec![]).is_err());
        assert!(SparseCoords::new(vec![[0.0, 0.0]], vec![1.5]).is_err());
    }

    #[test]
    fn flag_examples() {
        assert_eq!(flag_value([0.3, 0.2], [0.3, 0.2], 1.0, 1.0), 1.0);
        let far: f64 = flag_value([0.0, 0.0], [500.0, 0.0], 1.0, 1.0);
        assert!((far + 1.0).abs() < 1e-12);
        let root: f64 = flag_value([0.0, 0.0], [3.0f64.ln(), 0.0], 1.0, 1.0);
        assert!(root.abs() < 1e-9);
        let below = flag_value([0.0, 0.0], [3.0f64.ln() - 1e-6, 0.0], 1.0, 1.0);
        let above = flag_value([0.0, 0.0], [3.0f64.ln() + 1e-6, 0.0], 1.0, 1.0);
        assert!(below > 0.0 && above < 0.0);
        // h is Euclidean: (0.6, 0.8) has length 1
        let h1: f64 = flag_value([0.0, 0.0], [0.6, 0.8], 0.5, 0.8);
        let e = (-1.0f64).exp();
        assert!((h1 - 0.4 * (3.0 * e - 1.0) / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn flags_check_lengths() {
        let a = set(&[[0.0, 0.0]], &[1.0]);
        let b = set(&[[0.0, 0.0], [1.0, 1.0]], &[1.0, 1.0]);
        assert!(matches!(
            filter_flags(&a, &b),
            Err(PcfError::LengthMismatch { .. })
        ));
        assert_eq!(filter_flags(&a, &a).unwrap(), vec![1.0]);
    }

    #[test]
    fn filter_input_examples() {
        let z = set(&[[0.0, 0.0]], &[1.0]);
        let rows = assemble_filter_input(&z, &z, &[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(rows[0].to_row(), [0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);

        let one = assemble_filter_input(&z, &z, &[vec![0.7]]).unwrap();
        assert_eq!(one[0].tau, [0.7, 0.0]);

        assert!(assemble_filter_input(&z, &z, &[vec![1.0], vec![1.0], vec![1.0]]).is_err());
        assert!(matches!(
            assemble_filter_input(&z, &z, &[vec![1.0, 2.0]]),
            Err(PcfError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn filter_input_permutes_with_rows() {
        let xs = set(&[[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]], &[1.0, 0.5, 0.2]);
        let xt = set(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], &[0.9, 0.8, 0.7]);
        let flags = filter_flags(&xs, &xt).unwrap();
        let rows = assemble_filter_input(&xs, &xt, std::slice::from_ref(&flags)).unwrap();
        let perm = [2, 0, 1];
        let pick =
            |s: &SparseCoords<f64>| set(&perm.map(|i| s.points()[i]), &perm.map(|i| s.conf()[i]));
        let permuted =
            assemble_filter_input(&pick(&xs), &pick(&xt), &[perm.map(|i| flags[i]).to_vec()])
                .unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(permuted[k], rows[i]);
        }
    }
}
