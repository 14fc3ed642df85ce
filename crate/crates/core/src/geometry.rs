//! Barycentric coordinate systems and per-pixel coordinate fields.
//!
//! Coordinates use signed areas so that they extend to the whole plane and
//! stay affine-covariant outside the reference triangle. The weight
//! convention is fixed: `l1` weights vertex `c`, `l2` weights `b` and `l3`
//! weights the origin `a`, i.e. `p = l1·c + l2·b + l3·a`.
//!
//! Pixel `(row i, column j)` maps to the continuous point `(x = j, y = i)`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{PcfError, Result};
use crate::grid::{ensure_dims, Grid, Mask};
use crate::scalar::Real;

/// Smallest |signed area| (pixels²) accepted for a coordinate system.
pub const EPS_AREA: f64 = 1e-8;

/// Standard deviations below this are treated as zero by [`zero_score_normalize`].
pub const ZERO_VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    /// Continuous position of the pixel in column `x`, row `y`.
    #[inline]
    pub fn pixel(x: usize, y: usize) -> Self {
        Self::new(T::of(x as f64), T::of(y as f64))
    }

    #[inline]
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Real>(self) -> Point2<U> {
        Point2::new(U::of(self.x.to_f64_lossy()), U::of(self.y.to_f64_lossy()))
    }
}

impl<T: Real> Add for Point2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Real> Sub for Point2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Real> Mul<T> for Point2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Real> Neg for Point2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Signed area of triangle `(a, b, c)`; positive for counter-clockwise order
/// in a y-up frame.
#[inline]
pub fn signed_area<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b - a).cross(c - a) / T::of(2.0)
}

/// Three ordered vertices defining a barycentric frame; `a` is the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bcs<T> {
    a: Point2<T>,
    b: Point2<T>,
    c: Point2<T>,
}

impl<T: Real> Bcs<T> {
    pub fn new(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> Result<Self> {
        let area = signed_area(a, b, c);
        if !(area.abs() > T::of(EPS_AREA)) || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(PcfError::DegenerateBcs {
                area: area.to_f64_lossy(),
            });
        }
        Ok(Self { a, b, c })
    }

    #[inline]
    pub fn origin(&self) -> Point2<T> {
        self.a
    }

    #[inline]
    pub fn vertices(&self) -> [Point2<T>; 3] {
        [self.a, self.b, self.c]
    }

    #[inline]
    pub fn area(&self) -> T {
        signed_area(self.a, self.b, self.c)
    }

    pub fn centroid(&self) -> Point2<T> {
        (self.a + self.b + self.c) * (T::one() / T::of(3.0))
    }

    /// Uniformly scales every vertex about the coordinate origin.
    pub fn scaled(&self, s: T) -> Result<Self> {
        Self::new(self.a * s, self.b * s, self.c * s)
    }
}

/// Barycentric weights of a point; `l1 + l2 + l3 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricCoord<T> {
    pub l1: T,
    pub l2: T,
    pub l3: T,
}

impl<T: Real> BarycentricCoord<T> {
    /// Point reconstructed from the weights: `l1·c + l2·b + l3·a`.
    pub fn reconstruct(&self, bcs: &Bcs<T>) -> Point2<T> {
        bcs.c * self.l1 + bcs.b * self.l2 + bcs.a * self.l3
    }

    #[inline]
    pub fn pair(&self) -> [T; 2] {
        [self.l1, self.l2]
    }
}

/// Signed-area barycentric coordinates of `p` in `bcs`.
///
/// `l3` is taken as `1 - l1 - l2`, the same relation the stored two-channel
/// fields rely on.
#[inline]
pub fn bary_coords<T: Real>(p: Point2<T>, bcs: &Bcs<T>) -> BarycentricCoord<T> {
    let total = bcs.area();
    let l1 = signed_area(bcs.a, bcs.b, p) / total;
    let l2 = signed_area(bcs.a, p, bcs.c) / total;
    BarycentricCoord {
        l1,
        l2,
        l3: T::one() - l1 - l2,
    }
}

/// `p ↦ linear · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap<T> {
    pub linear: [[T; 2]; 2],
    pub translation: Point2<T>,
}

impl<T: Real> AffineMap<T> {
    pub fn new(linear: [[T; 2]; 2], translation: Point2<T>) -> Self {
        Self {
            linear,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(
            [[T::one(), T::zero()], [T::zero(), T::one()]],
            Point2::new(T::zero(), T::zero()),
        )
    }

    pub fn translation(tx: T, ty: T) -> Self {
        Self {
            translation: Point2::new(tx, ty),
            ..Self::identity()
        }
    }

    pub fn determinant(&self) -> T {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    #[inline]
    pub fn apply(&self, p: Point2<T>) -> Point2<T> {
        let m = &self.linear;
        Point2::new(
            m[0][0] * p.x + m[0][1] * p.y + self.translation.x,
            m[1][0] * p.x + m[1][1] * p.y + self.translation.y,
        )
    }

    pub fn apply_bcs(&self, bcs: &Bcs<T>) -> Result<Bcs<T>> {
        Bcs::new(self.apply(bcs.a), self.apply(bcs.b), self.apply(bcs.c))
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return Err(PcfError::SingularAffine);
        }
        let m = &self.linear;
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let t = self.translation;
        let translation = Point2::new(
            -(inv[0][0] * t.x + inv[0][1] * t.y),
            -(inv[1][0] * t.x + inv[1][1] * t.y),
        );
        Ok(Self::new(inv, translation))
    }
}

pub fn apply_affine<T: Real>(m: &AffineMap<T>, p: Point2<T>) -> Point2<T> {
    m.apply(p)
}

/// Two-channel barycentric coordinate field with a validity mask.
///
/// `l3` is never stored. Invalid pixels hold zeros in both channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordField<T> {
    lambda1: Grid<T>,
    lambda2: Grid<T>,
    valid: Mask,
}

impl<T: Real> CoordField<T> {
    /// Builds a field, zeroing channel values on invalid pixels.
    pub fn from_parts(mut lambda1: Grid<T>, mut lambda2: Grid<T>, valid: Mask) -> Result<Self> {
        ensure_dims(valid.dims(), lambda1.dims())?;
        ensure_dims(valid.dims(), lambda2.dims())?;
        for (i, &ok) in valid.as_slice().iter().enumerate() {
            if !ok {
                lambda1.as_mut_slice()[i] = T::zero();
                lambda2.as_mut_slice()[i] = T::zero();
            }
        }
        Ok(Self {
            lambda1,
            lambda2,
            valid,
        })
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            lambda1: Grid::filled(width, height, T::zero()),
            lambda2: Grid::filled(width, height, T::zero()),
            valid: Mask::filled(width, height, false),
        }
    }

    /// Plain pixel coordinates `(x, y)` stored in the two channels.
    pub fn cartesian(width: usize, height: usize) -> Self {
        Self {
            lambda1: Grid::from_fn(width, height, |x, _| T::of(x as f64)),
            lambda2: Grid::from_fn(width, height, |_, y| T::of(y as f64)),
            valid: Mask::filled(width, height, true),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.valid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.valid.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.valid.dims()
    }

    pub fn lambda1(&self) -> &Grid<T> {
        &self.lambda1
    }

    pub fn lambda2(&self) -> &Grid<T> {
        &self.lambda2
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        *self.valid.get(x, y)
    }

    /// Stored `(l1, l2)` at a pixel, `None` where invalid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<[T; 2]> {
        if self.is_valid(x, y) {
            Some([*self.lambda1.get(x, y), *self.lambda2.get(x, y)])
        } else {
            None
        }
    }

    /// Raw stored values, zeros on invalid pixels.
    #[inline]
    pub fn raw(&self, x: usize, y: usize) -> [T; 2] {
        [*self.lambda1.get(x, y), *self.lambda2.get(x, y)]
    }

    pub fn into_parts(self) -> (Grid<T>, Grid<T>, Mask) {
        (self.lambda1, self.lambda2, self.valid)
    }
}

/// Encodes every valid pixel of a `width × height` grid in `bcs`.
pub fn encode_field<T: Real>(
    width: usize,
    height: usize,
    bcs: &Bcs<T>,
    valid: &Mask,
) -> Result<CoordField<T>> {
    ensure_dims((width, height), valid.dims())?;
    let mut l1 = Grid::filled(width, height, T::zero());
    let mut l2 = Grid::filled(width, height, T::zero());
    for y in 0..height {
        for x in 0..width {
            if *valid.get(x, y) {
                let c = bary_coords(Point2::pixel(x, y), bcs);
                l1.set(x, y, c.l1);
                l2.set(x, y, c.l2);
            }
        }
    }
    CoordField::from_parts(l1, l2, valid.clone())
}

/// Per-channel standardization recovered by [`zero_score_normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroScore<T> {
    pub mean: [T; 2],
    /// Population standard deviation; `0` marks a zero-variance channel that
    /// was only mean-centered.
    pub std: [T; 2],
}

impl<T: Real> ZeroScore<T> {
    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        let mut out = [T::zero(); 2];
        for ch in 0..2 {
            let centered = v[ch] - self.mean[ch];
            out[ch] = if self.std[ch] > T::zero() {
                centered / self.std[ch]
            } else {
                centered
            };
        }
        out
    }

    pub fn is_degenerate(&self) -> bool {
        self.std.iter().any(|&s| s == T::zero())
    }
}

/// Standardizes the valid entries of a two-channel set to zero mean and unit
/// population variance per channel. Invalid entries are returned untouched.
pub fn zero_score_normalize<T: Real>(
    values: &[[T; 2]],
    valid: &[bool],
) -> Result<(Vec<[T; 2]>, ZeroScore<T>)> {
    if values.len() != valid.len() {
        return Err(PcfError::LengthMismatch {
            expected: values.len(),
            actual: valid.len(),
        });
    }
    let n = valid.iter().filter(|&&v| v).count();
    if n < 2 {
        return Err(PcfError::InsufficientData { needed: 2, got: n });
    }
    let nf = T::of(n as f64);
    let mut mean = [T::zero(); 2];
    for (v, _) in values.iter().zip(valid).filter(|(_, &ok)| ok) {
        mean[0] = mean[0] + v[0];
        mean[1] = mean[1] + v[1];
    }
    mean = [mean[0] / nf, mean[1] / nf];
    let mut var = [T::zero(); 2];
    for (v, _) in values.iter().zip(valid).filter(|(_, &ok)| ok) {
        for ch in 0..2 {
            let d = v[ch] - mean[ch];
            var[ch] = var[ch] + d * d;
        }
    }
    let mut std = [(var[0] / nf).sqrt(), (var[1] / nf).sqrt()];
    for s in &mut std {
        if *s < T::of(ZERO_VARIANCE_EPS) {
            *s = T::zero();
        }
    }
    let z = ZeroScore { mean, std };
    let out = values
        .iter()
        .zip(valid)
        .map(|(&v, &ok)| if ok { z.apply(v) } else { v })
        .collect();
    Ok((out, z))
}

/// Dense variant of [`zero_score_normalize`] over a field's valid pixels.
pub fn zero_score_normalize_field<T: Real>(
    field: &CoordField<T>,
) -> Result<(CoordField<T>, ZeroScore<T>)> {
    let values: Vec<[T; 2]> = field
        .lambda1
        .as_slice()
        .iter()
        .zip(field.lambda2.as_slice())
        .map(|(&a, &b)| [a, b])
        .collect();
    let (norm, z) = zero_score_normalize(&values, field.valid.as_slice())?;
    let (w, h) = field.dims();
    let l1 = Grid::from_vec(w, h, norm.iter().map(|v| v[0]).collect())?;
    let l2 = Grid::from_vec(w, h, norm.iter().map(|v| v[1]).collect())?;
    Ok((CoordField::from_parts(l1, l2, field.valid.clone())?, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    /// Shoelace formula over the closed polygon, independent of `cross`.
    fn shoelace(pts: &[Point2<f64>]) -> f64 {
        let n = pts.len();
        (0..n)
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0
    }

    /// Solves p = l1·c + l2·b + l3·a with l1 + l2 + l3 = 1 by Cramer's rule.
    fn solve_weights(pt: Point2<f64>, a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> [f64; 3] {
        let m = [[c.x, b.x, a.x], [c.y, b.y, a.y], [1.0, 1.0, 1.0]];
        let rhs = [pt.x, pt.y, 1.0];
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det3(m);
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut mk = m;
            for r in 0..3 {
                mk[r][k] = rhs[r];
            }
            *o = det3(mk) / d;
        }
        out
    }

    #[test]
    fn signed_area_examples() {
        assert_eq!(signed_area(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)), 0.5);
        assert_eq!(signed_area(p(0.0, 0.0), p(0.0, 1.0), p(1.0, 0.0)), -0.5);
        let tri = [p(0.0, 0.0), p(2.0, 0.0), p(1.0, 3.0)];
        let oracle = shoelace(&tri);
        assert_eq!(oracle, 3.0);
        assert_eq!(signed_area(tri[0], tri[1], tri[2]), oracle);
    }

    #[test]
    fn degenerate_bcs_rejected() {
        let err = Bcs::new(p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)).unwrap_err();
        assert!(matches!(err, PcfError::DegenerateBcs { .. }));
        assert!(Bcs::new(p(0.0, 0.0), p(1e-5, 0.0), p(0.0, 1e-5)).is_err());
    }

    #[test]
    fn bary_examples() {
        let bcs = Bcs::new(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)).unwrap();
        let c = bary_coords(bcs.centroid(), &bcs);
        for v in [c.l1, c.l2, c.l3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let at_c = bary_coords(p(0.0, 1.0), &bcs);
        assert_eq!((at_c.l1, at_c.l2, at_c.l3), (1.0, 0.0, 0.0));

        let q = p(0.25, 0.25);
        let oracle = solve_weights(q, p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0));
        let got = bary_coords(q, &bcs);
        assert_eq!(oracle, [0.25, 0.25, 0.5]);
        assert!((got.l1 - oracle[0]).abs() < 1e-12);
        assert!((got.l2 - oracle[1]).abs() < 1e-12);
        assert!((got.l3 - oracle[2]).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_outside_triangle() {
        let bcs = Bcs::new(p(3.0, -1.0), p(7.5, 2.0), p(-2.0, 5.0)).unwrap();
        for q in [p(100.0, -40.0), p(-3.0, -3.0), p(0.0, 0.0)] {
            let w = bary_coords(q, &bcs);
            let r = w.reconstruct(&bcs);
            assert!((r.x - q.x).abs() < 1e-9 && (r.y - q.y).abs() < 1e-9);
            let o = solve_weights(q, bcs.a, bcs.b, bcs.c);
            assert!((w.l1 - o[0]).abs() < 1e-9 && (w.l2 - o[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn affine_examples() {
        let id = AffineMap::<f64>::identity();
        assert_eq!(apply_affine(&id, p(3.0, 4.0)), p(3.0, 4.0));
        assert_eq!(
            apply_affine(&AffineMap::translation(1.0, 2.0), p(0.0, 0.0)),
            p(1.0, 2.0)
        );
        let s = AffineMap::new([[2.0, 0.0], [0.0, 2.0]], p(0.0, 0.0));
        assert_eq!(apply_affine(&s, p(1.0, 1.0)), p(2.0, 2.0));
        let m = AffineMap::new([[1.5, 0.2], [-0.3, 0.9]], p(4.0, -2.0));
        let back = m.inverse().unwrap().apply(m.apply(p(-7.0, 11.0)));
        assert!((back.x + 7.0).abs() < 1e-12 && (back.y - 11.0).abs() < 1e-12);
        assert!(AffineMap::new([[1.0, 2.0], [2.0, 4.0]], p(0.0, 0.0))
            .inverse()
            .is_err());
    }

    #[test]
    fn encode_examples() {
        let bcs = Bcs::new(p(0.0, 0.0), p(3.0, 0.0), p(0.0, 3.0)).unwrap();
        let f = encode_field(4, 4, &bcs, &Mask::filled(4, 4, true)).unwrap();
        let oracle = solve_weights(p(3.0, 3.0), bcs.a, bcs.b, bcs.c);
        assert_eq!(oracle, [1.0, 1.0, -1.0]);
        let v = f.get(3, 3).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);

        // 1x1 field whose only pixel is the centroid
        let tri = Bcs::new(p(-1.0, -1.0), p(2.0, -1.0), p(-1.0, 2.0)).unwrap();
        let single = encode_field(1, 1, &tri, &Mask::filled(1, 1, true)).unwrap();
        let v = single.get(0, 0).unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-12 && (v[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn encode_zeroes_invalid_and_checks_dims() {
        let bcs = Bcs::new(p(0.0, 0.0), p(3.0, 0.0), p(0.0, 3.0)).unwrap();
        let mut valid = Mask::filled(4, 4, true);
        valid.set(3, 3, false);
        let f = encode_field(4, 4, &bcs, &valid).unwrap();
        assert_eq!(f.get(3, 3), None);
        assert_eq!(f.raw(3, 3), [0.0, 0.0]);
        assert!(matches!(
            encode_field(4, 3, &bcs, &valid),
            Err(PcfError::DimMismatch { .. })
        ));
    }

    #[test]
    fn zero_score_examples() {
        let (out, z) = zero_score_normalize(&[[-1.0, -1.0], [1.0, 1.0]], &[true, true]).unwrap();
        assert_eq!(out, vec![[-1.0, -1.0], [1.0, 1.0]]);
        assert_eq!(z.mean, [0.0, 0.0]);
        assert_eq!(z.std, [1.0, 1.0]);

        let (out, z) =
            zero_score_normalize(&[[5.0, 0.0], [5.0, 1.0], [5.0, 2.0]], &[true; 3]).unwrap();
        assert_eq!(z.std[0], 0.0);
        assert!(z.is_degenerate());
        assert_eq!(out.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![0.0; 3]);

        let (out, z) = zero_score_normalize(
            &[[0.0, 0.0], [2.0, 0.0], [4.0, 0.0], [99.0, 99.0]],
            &[true, true, true, false],
        )
        .unwrap();
        // population std of {0,2,4} is sqrt(8/3)
        assert!((z.std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let e = (1.5f64).sqrt();
        assert!(
            (out[0][0] + e).abs() < 1e-12
                && out[1][0].abs() < 1e-12
                && (out[2][0] - e).abs() < 1e-12
        );
        assert_eq!(out[3], [99.0, 99.0]);
    }

    #[test]
    fn zero_score_needs_two_entries() {
        assert!(matches!(
            zero_score_normalize(&[[1.0, 2.0], [3.0, 4.0]], &[true, false]),
            Err(PcfError::InsufficientData { needed: 2, got: 1 })
        ));
    }
}
