//! Dense flow maps, bilinear resampling and synthetic homography flows.
//!
//! A [`FlowField`] lives on the target grid: target pixel `q` corresponds to
//! the source point `q + Y(q)`.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PcfError, Result};
use crate::geometry::{AffineMap, CoordField, Point2};
use crate::grid::{ensure_dims, Grid, Mask};
use crate::scalar::Real;

/// Per-pixel scalar map (error maps, distance maps, confidence).
pub type ScalarField<T> = Grid<T>;

/// Per-pixel displacement with validity. Invalid pixels hold `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    u: Grid<T>,
    v: Grid<T>,
    valid: Mask,
}

impl<T: Real> FlowField<T> {
    pub fn from_parts(mut u: Grid<T>, mut v: Grid<T>, mut valid: Mask) -> Result<Self> {
        ensure_dims(valid.dims(), u.dims())?;
        ensure_dims(valid.dims(), v.dims())?;
        for i in 0..valid.len() {
            let ok =
                valid.as_slice()[i] && u.as_slice()[i].is_finite() && v.as_slice()[i].is_finite();
            valid.as_mut_slice()[i] = ok;
            if !ok {
                u.as_mut_slice()[i] = T::zero();
                v.as_mut_slice()[i] = T::zero();
            }
        }
        Ok(Self { u, v, valid })
    }

    /// Builds a flow from a per-pixel closure; `None` marks the pixel invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<Point2<T>>,
    ) -> Self {
        let mut u = Grid::filled(width, height, T::zero());
        let mut v = Grid::filled(width, height, T::zero());
        let mut valid = Mask::filled(width, height, false);
        for y in 0..height {
            for x in 0..width {
                if let Some(d) = f(x, y).filter(|d| d.is_finite()) {
                    u.set(x, y, d.x);
                    v.set(x, y, d.y);
                    valid.set(x, y, true);
                }
            }
        }
        Self { u, v, valid }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, Point2::new(T::zero(), T::zero()))
    }

    pub fn constant(width: usize, height: usize, d: Point2<T>) -> Self {
        Self {
            u: Grid::filled(width, height, d.x),
            v: Grid::filled(width, height, d.y),
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

    pub fn u(&self) -> &Grid<T> {
        &self.u
    }

    pub fn v(&self) -> &Grid<T> {
        &self.v
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        *self.valid.get(x, y)
    }

    #[inline]
    pub fn displacement(&self, x: usize, y: usize) -> Option<Point2<T>> {
        self.is_valid(x, y)
            .then(|| Point2::new(*self.u.get(x, y), *self.v.get(x, y)))
    }

    /// Source point `q + Y(q)` for a valid target pixel.
    #[inline]
    pub fn source_point(&self, x: usize, y: usize) -> Option<Point2<T>> {
        self.displacement(x, y).map(|d| Point2::pixel(x, y) + d)
    }

    /// Bilinearly interpolated displacement at a continuous position.
    pub fn sample(&self, p: Point2<T>) -> Option<Point2<T>> {
        let taps = bilinear_taps(&self.valid, p)?;
        let (mut du, mut dv) = (T::zero(), T::zero());
        for (i, w) in taps.iter() {
            du = du + self.u.as_slice()[i] * w;
            dv = dv + self.v.as_slice()[i] * w;
        }
        Some(Point2::new(du, dv))
    }

    /// Invalidates every pixel set in `mask`.
    pub fn invalidate(&mut self, mask: &Mask) -> Result<()> {
        ensure_dims(self.dims(), mask.dims())?;
        for (i, &m) in mask.as_slice().iter().enumerate() {
            if m {
                self.valid.as_mut_slice()[i] = false;
                self.u.as_mut_slice()[i] = T::zero();
                self.v.as_mut_slice()[i] = T::zero();
            }
        }
        Ok(())
    }

    pub fn into_parts(self) -> (Grid<T>, Grid<T>, Mask) {
        (self.u, self.v, self.valid)
    }
}

/// Up to four `(flat index, weight)` interpolation taps.
pub(crate) struct Taps<T> {
    taps: [(usize, T); 4],
    len: usize,
}

impl<T: Copy> Taps<T> {
    pub(crate) fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.taps[..self.len].iter().copied()
    }
}

/// Bilinear taps at `p`. Corners with exactly zero weight are skipped; the
/// sample is rejected when `p` is outside `[0, w-1] × [0, h-1]` or when any
/// contributing corner is invalid.
pub(crate) fn bilinear_taps<T: Real>(valid: &Mask, p: Point2<T>) -> Option<Taps<T>> {
    let (w, h) = valid.dims();
    if w == 0 || h == 0 || !p.is_finite() {
        return None;
    }
    let max_x = T::of((w - 1) as f64);
    let max_y = T::of((h - 1) as f64);
    if p.x < T::zero() || p.y < T::zero() || p.x > max_x || p.y > max_y {
        return None;
    }
    let x0 = p.x.floor();
    let y0 = p.y.floor();
    let fx = p.x - x0;
    let fy = p.y - y0;
    let xi = x0.to_usize()?.min(w - 1);
    let yi = y0.to_usize()?.min(h - 1);
    let one = T::one();
    let corners = [
        (xi, yi, (one - fx) * (one - fy)),
        (xi + 1, yi, fx * (one - fy)),
        (xi, yi + 1, (one - fx) * fy),
        (xi + 1, yi + 1, fx * fy),
    ];
    let mut taps = [(0usize, T::zero()); 4];
    let mut len = 0;
    for (cx, cy, wt) in corners {
        if wt == T::zero() {
            continue;
        }
        if cx >= w || cy >= h || !*valid.get(cx, cy) {
            return None;
        }
        taps[len] = (cy * w + cx, wt);
        len += 1;
    }
    Some(Taps { taps, len })
}

/// Remaps `src` into the flow's grid: `out(q) = src(q + Y(q))`.
pub fn warp_field<T: Real>(src: &CoordField<T>, flow: &FlowField<T>) -> Result<CoordField<T>> {
    ensure_dims(flow.dims(), src.dims())?;
    let (w, h) = flow.dims();
    let mut l1 = Grid::filled(w, h, T::zero());
    let mut l2 = Grid::filled(w, h, T::zero());
    let mut valid = Mask::filled(w, h, false);
    let s1 = src.lambda1().as_slice();
    let s2 = src.lambda2().as_slice();
    for y in 0..h {
        for x in 0..w {
            let Some(p) = flow.source_point(x, y) else {
                continue;
            };
            let Some(taps) = bilinear_taps(src.valid(), p) else {
                continue;
            };
            let (mut a, mut b) = (T::zero(), T::zero());
            for (i, wt) in taps.iter() {
                a = a + s1[i] * wt;
                b = b + s2[i] * wt;
            }
            l1.set(x, y, a);
            l2.set(x, y, b);
            valid.set(x, y, true);
        }
    }
    CoordField::from_parts(l1, l2, valid)
}

/// Sentinel written by [`error_map`] where either field is invalid.
pub const ERROR_SENTINEL: f64 = -1.0;

/// Per-pixel Euclidean distance between two coordinate fields.
pub fn error_map<T: Real>(ct: &CoordField<T>, cr: &CoordField<T>) -> Result<ScalarField<T>> {
    ensure_dims(ct.dims(), cr.dims())?;
    let (w, h) = ct.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        match (ct.get(x, y), cr.get(x, y)) {
            (Some(a), Some(b)) => (a[0] - b[0]).hypot(a[1] - b[1]),
            _ => T::of(ERROR_SENTINEL),
        }
    }))
}

/// Bilinear upsampling by an integer factor.
///
/// Output pixel `X` samples the input at `X / factor`. Positions past the last
/// input row or column are extrapolated linearly from the border cell, so
/// affine fields are reproduced exactly.
pub trait Upsample: Sized {
    fn upsample_bilinear(&self, factor: usize) -> Result<Self>;
}

fn upsample_axis<T: Real>(out: usize, n: usize, factor: usize) -> (usize, usize, T) {
    let pos = out as f64 / factor as f64;
    if n < 2 {
        return (0, 0, T::zero());
    }
    let i0 = (pos.floor() as usize).min(n - 2);
    (i0, i0 + 1, T::of(pos - i0 as f64))
}

fn upsample_channels<T: Real>(
    channels: [&Grid<T>; 2],
    valid: &Mask,
    factor: usize,
) -> Result<([Grid<T>; 2], Mask)> {
    if factor == 0 {
        return Err(PcfError::InvalidParameter(
            "upsampling factor must be >= 1".into(),
        ));
    }
    let (w, h) = valid.dims();
    let (ow, oh) = (w * factor, h * factor);
    let mut out = [
        Grid::filled(ow, oh, T::zero()),
        Grid::filled(ow, oh, T::zero()),
    ];
    let mut out_valid = Mask::filled(ow, oh, false);
    let one = T::one();
    for oy in 0..oh {
        let (y0, y1, ty) = upsample_axis::<T>(oy, h, factor);
        for ox in 0..ow {
            let (x0, x1, tx) = upsample_axis::<T>(ox, w, factor);
            let corners = [
                (x0, y0, (one - tx) * (one - ty)),
                (x1, y0, tx * (one - ty)),
                (x0, y1, (one - tx) * ty),
                (x1, y1, tx * ty),
            ];
            if corners
                .iter()
                .any(|&(cx, cy, wt)| wt != T::zero() && !*valid.get(cx, cy))
            {
                continue;
            }
            for (ch, grid) in channels.iter().enumerate() {
                let v = corners
                    .iter()
                    .filter(|c| c.2 != T::zero())
                    .fold(T::zero(), |acc, &(cx, cy, wt)| acc + *grid.get(cx, cy) * wt);
                out[ch].set(ox, oy, v);
            }
            out_valid.set(ox, oy, true);
        }
    }
    Ok((out, out_valid))
}

impl<T: Real> Upsample for CoordField<T> {
    fn upsample_bilinear(&self, factor: usize) -> Result<Self> {
        let ([l1, l2], valid) =
            upsample_channels([self.lambda1(), self.lambda2()], self.valid(), factor)?;
        CoordField::from_parts(l1, l2, valid)
    }
}

impl<T: Real> Upsample for FlowField<T> {
    /// Displacements are additionally scaled by `factor`.
    fn upsample_bilinear(&self, factor: usize) -> Result<Self> {
        let ([mut u, mut v], valid) = upsample_channels([&self.u, &self.v], &self.valid, factor)?;
        let s = T::of(factor as f64);
        u.as_mut_slice().iter_mut().for_each(|x| *x = *x * s);
        v.as_mut_slice().iter_mut().for_each(|x| *x = *x * s);
        FlowField::from_parts(u, v, valid)
    }
}

/// Planar projective map, normalized so that `h33 = 1` whenever `h33 != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomographyMap<T> {
    m: [[T; 3]; 3],
}

impl<T: Real> HomographyMap<T> {
    pub fn new(m: [[T; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PcfError::SingularHomography);
        }
        let det = det3(&m);
        if det == T::zero() || !det.is_finite() {
            return Err(PcfError::SingularHomography);
        }
        let mut m = m;
        let s = m[2][2];
        if s != T::zero() {
            for v in m.iter_mut().flatten() {
                *v = *v / s;
            }
        }
        Ok(Self { m })
    }

    pub fn from_row_major(v: &[T]) -> Result<Self> {
        if v.len() != 9 {
            return Err(PcfError::LengthMismatch {
                expected: 9,
                actual: v.len(),
            });
        }
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, tx], [z, o, ty], [z, z, o]],
        }
    }

    pub fn from_affine(a: &AffineMap<T>) -> Result<Self> {
        let (o, z) = (T::one(), T::zero());
        Self::new([
            [a.linear[0][0], a.linear[0][1], a.translation.x],
            [a.linear[1][0], a.linear[1][1], a.translation.y],
            [z, z, o],
        ])
    }

    pub fn matrix(&self) -> &[[T; 3]; 3] {
        &self.m
    }

    pub fn to_row_major(&self) -> [T; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// Maps `p` with perspective division; `None` when the point maps to infinity.
    #[inline]
    pub fn apply(&self, p: Point2<T>) -> Option<Point2<T>> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() <= T::epsilon() {
            return None;
        }
        let x = (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w;
        let y = (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w;
        let out = Point2::new(x, y);
        out.is_finite().then_some(out)
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = det3(m);
        if det == T::zero() || !det.is_finite() {
            return Err(PcfError::SingularHomography);
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let mut inv = adj;
        for v in inv.iter_mut().flatten() {
            *v = *v / det;
        }
        Self::new(inv)
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        let mut out = [[T::zero(); 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).fold(T::zero(), |acc, k| acc + self.m[r][k] * rhs.m[k][c]);
            }
        }
        Self::new(out)
    }
}

fn det3<T: Real>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Axis-aligned pixel rectangle, written `x,y,w,h` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }
}

impl FromStr for Rect {
    type Err = PcfError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |v: &str| {
            v.parse::<usize>().map_err(|_| {
                PcfError::InvalidParameter(format!("bad rectangle component '{v}' in '{s}'"))
            })
        };
        match parts.as_slice() {
            [x, y, w, h] => Ok(Rect {
                x: parse(x)?,
                y: parse(y)?,
                w: parse(w)?,
                h: parse(h)?,
            }),
            _ => Err(PcfError::InvalidParameter(format!(
                "rectangle must be 'x,y,w,h', got '{s}'"
            ))),
        }
    }
}

/// Ground-truth flow of a homography `h` mapping source to target.
///
/// `Y(q) = π(h⁻¹ q) − q`. Pixels whose source point falls outside the source
/// image or inside an occluder are invalid. When `noise_sigma > 0`, i.i.d.
/// Gaussian noise is added to both components of every valid pixel, drawn in
/// row-major order from a ChaCha8 stream seeded with `seed`.
pub fn synth_flow_homography<T: Real>(
    h: &HomographyMap<T>,
    width: usize,
    height: usize,
    occluders: &[Rect],
    noise_sigma: T,
    seed: u64,
) -> Result<FlowField<T>> {
    let inv = h.inverse()?;
    let max_x = T::of(width.saturating_sub(1) as f64);
    let max_y = T::of(height.saturating_sub(1) as f64);
    let mut flow = FlowField::from_fn(width, height, |x, y| {
        if occluders.iter().any(|r| r.contains(x, y)) {
            return None;
        }
        let q = Point2::pixel(x, y);
        let p = inv.apply(q)?;
        let inside = p.x >= T::zero() && p.y >= T::zero() && p.x <= max_x && p.y <= max_y;
        inside.then(|| p - q)
    });
    if noise_sigma > T::zero() {
        let normal = Normal::new(0.0, noise_sigma.to_f64_lossy())
            .map_err(|e| PcfError::InvalidParameter(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..flow.valid.len() {
            if flow.valid.as_slice()[i] {
                let du = T::of(normal.sample(&mut rng));
                let dv = T::of(normal.sample(&mut rng));
                flow.u.as_mut_slice()[i] = flow.u.as_slice()[i] + du;
                flow.v.as_mut_slice()[i] = flow.v.as_slice()[i] + dv;
            }
        }
    } else if noise_sigma < T::zero() {
        return Err(PcfError::InvalidParameter(
            "noise sigma must be >= 0".into(),
        ));
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{encode_field, Bcs};

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    fn plane_field(w: usize, h: usize) -> CoordField<f64> {
        let l1 = Grid::from_fn(w, h, |x, _| x as f64 / 10.0);
        let l2 = Grid::from_fn(w, h, |x, y| 0.3 * y as f64 - 0.05 * x as f64 + 1.0);
        CoordField::from_parts(l1, l2, Mask::filled(w, h, true)).unwrap()
    }

    #[test]
    fn zero_flow_warp_is_identity_even_with_holes() {
        let mut valid = Mask::filled(6, 5, true);
        valid.set(2, 2, false);
        let (l1, l2, _) = plane_field(6, 5).into_parts();
        let src = CoordField::from_parts(l1, l2, valid).unwrap();
        let out = warp_field(&src, &FlowField::zeros(6, 5)).unwrap();
        assert_eq!(out, src);
    }

    #[test]
    fn constant_flow_shifts_affine_plane() {
        let src = plane_field(8, 4);
        let out = warp_field(&src, &FlowField::constant(8, 4, p(1.0, 0.0))).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                match out.get(x, y) {
                    Some(v) => assert!((v[0] - (x as f64 + 1.0) / 10.0).abs() < 1e-12),
                    None => assert_eq!(x, 7, "only the last column leaves the source"),
                }
            }
        }
        assert_eq!(out.raw(7, 0), [0.0, 0.0]);
    }

    #[test]
    fn fractional_flow_interpolates_plane_exactly() {
        let src = plane_field(8, 8);
        let out = warp_field(&src, &FlowField::constant(8, 8, p(0.25, 0.6))).unwrap();
        let v = out.get(3, 2).unwrap();
        assert!((v[0] - 3.25 / 10.0).abs() < 1e-12);
        assert!((v[1] - (0.3 * 2.6 - 0.05 * 3.25 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn warp_rejects_mismatched_dims() {
        assert!(matches!(
            warp_field(&plane_field(4, 4), &FlowField::zeros(4, 5)),
            Err(PcfError::DimMismatch { .. })
        ));
    }

    #[test]
    fn error_map_examples() {
        let ct = plane_field(4, 3);
        let zero = error_map(&ct, &ct).unwrap();
        assert!(zero.as_slice().iter().all(|&e| e == 0.0));

        let (l1, l2, mut valid) = ct.clone().into_parts();
        let shifted1 = l1.map(|v| v + 0.3);
        let shifted2 = l2.map(|v| v + 0.4);
        valid.set(1, 1, false);
        let cr = CoordField::from_parts(shifted1, shifted2, valid).unwrap();
        let e = error_map(&ct, &cr).unwrap();
        for (x, y, &v) in e.iter_xy() {
            if (x, y) == (1, 1) {
                assert_eq!(v, -1.0);
            } else {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_examples() {
        let src = plane_field(5, 4);
        assert_eq!(src.upsample_bilinear(1).unwrap(), src);

        let bcs = Bcs::new(p(1.0, 0.5), p(4.0, 1.0), p(0.0, 3.0)).unwrap();
        let coarse = encode_field(5, 4, &bcs, &Mask::filled(5, 4, true)).unwrap();
        let fine = coarse.upsample_bilinear(4).unwrap();
        assert_eq!(fine.dims(), (20, 16));
        let direct = encode_field(
            20,
            16,
            &bcs.scaled(4.0).unwrap(),
            &Mask::filled(20, 16, true),
        )
        .unwrap();
        for y in 0..16 {
            for x in 0..20 {
                let (a, b) = (fine.get(x, y).unwrap(), direct.get(x, y).unwrap());
                assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
            }
        }

        let flow = FlowField::constant(3, 2, p(1.0, 2.0))
            .upsample_bilinear(4)
            .unwrap();
        assert_eq!(flow.dims(), (12, 8));
        for y in 0..8 {
            for x in 0..12 {
                assert_eq!(flow.displacement(x, y), Some(p(4.0, 8.0)));
            }
        }
    }

    #[test]
    fn upsample_propagates_invalid_corners() {
        let mut valid = Mask::filled(3, 3, true);
        valid.set(1, 1, false);
        let (l1, l2, _) = plane_field(3, 3).into_parts();
        let f = CoordField::from_parts(l1, l2, valid).unwrap();
        let up = f.upsample_bilinear(2).unwrap();
        assert!(up.is_valid(0, 0));
        assert!(!up.is_valid(1, 1));
        assert!(!up.is_valid(2, 2));
        assert!(up.upsample_bilinear(0).is_err());
    }

    #[test]
    fn synth_identity_and_translation() {
        let id =
            synth_flow_homography(&HomographyMap::<f64>::identity(), 16, 12, &[], 0.0, 1).unwrap();
        assert_eq!(id.valid().count(), 16 * 12);
        assert!(id
            .u()
            .as_slice()
            .iter()
            .chain(id.v().as_slice())
            .all(|&v| v == 0.0));

        let t = synth_flow_homography(&HomographyMap::translation(5.0, 0.0), 16, 12, &[], 0.0, 1)
            .unwrap();
        for y in 0..12 {
            for x in 0..16 {
                if x >= 5 {
                    assert_eq!(t.displacement(x, y), Some(p(-5.0, 0.0)));
                } else {
                    assert!(!t.is_valid(x, y));
                }
            }
        }
    }

    /// Sign fix: warping the source encoding by the synthetic flow of `m`
    /// reproduces the encoding in the mapped system `m(bcs)`.
    #[test]
    fn synthetic_flow_round_trip_convention() {
        let m = AffineMap::new([[1.05, 0.1], [-0.08, 0.97]], p(2.5, -1.5));
        let h = HomographyMap::from_affine(&m).unwrap();
        let (w, ht) = (24, 20);
        let flow = synth_flow_homography(&h, w, ht, &[], 0.0, 0).unwrap();
        let bcs = Bcs::new(p(6.0, 5.0), p(10.0, 6.0), p(7.0, 9.0)).unwrap();
        let cs = encode_field(w, ht, &bcs, &Mask::filled(w, ht, true)).unwrap();
        let cr = warp_field(&cs, &flow).unwrap();
        let ct = encode_field(
            w,
            ht,
            &m.apply_bcs(&bcs).unwrap(),
            &Mask::filled(w, ht, true),
        )
        .unwrap();
        let mut checked = 0;
        for y in 0..ht {
            for x in 0..w {
                if let Some(r) = cr.get(x, y) {
                    let t = ct.get(x, y).unwrap();
                    assert!((r[0] - t[0]).abs() < 1e-6 && (r[1] - t[1]).abs() < 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > w * ht / 2);
    }

    #[test]
    fn synth_occluder_and_noise() {
        // 40x10 image, occluder covers 40 pixels = 10%
        let occ = [Rect {
            x: 0,
            y: 0,
            w: 8,
            h: 5,
        }];
        let f =
            synth_flow_homography(&HomographyMap::<f64>::identity(), 40, 10, &occ, 0.0, 3).unwrap();
        assert_eq!(f.valid().count(), 360);
        let n1 =
            synth_flow_homography(&HomographyMap::<f64>::identity(), 40, 10, &occ, 0.5, 3).unwrap();
        let n2 =
            synth_flow_homography(&HomographyMap::<f64>::identity(), 40, 10, &occ, 0.5, 3).unwrap();
        assert_eq!(n1, n2);
        assert_ne!(n1, f);
        assert!(!n1.is_valid(0, 0));
    }

    #[test]
    fn singular_homography_rejected() {
        let h = HomographyMap::<f64>::new([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(h, Err(PcfError::SingularHomography)));
    }

    #[test]
    fn rect_parsing() {
        assert_eq!(
            "10,10,20,20".parse::<Rect>().unwrap(),
            Rect {
                x: 10,
                y: 10,
                w: 20,
                h: 20
            }
        );
        assert!("1,2,3".parse::<Rect>().is_err());
        assert!("a,2,3,4".parse::<Rect>().is_err());
    }

    #[test]
    fn homography_inverse_and_normalization() {
        let h =
            HomographyMap::new([[2.0, 0.1, 3.0], [0.0, 1.5, -2.0], [0.001, 0.002, 2.0]]).unwrap();
        assert_eq!(h.matrix()[2][2], 1.0);
        let q = h.apply(p(10.0, 20.0)).unwrap();
        let back = h.inverse().unwrap().apply(q).unwrap();
        assert!((back.x - 10.0).abs() < 1e-9 && (back.y - 20.0).abs() < 1e-9);
    }
}
