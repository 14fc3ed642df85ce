//! Constrained two-component Gaussian mixture over coordinate residuals.
//!
//! Both components share the mean `μ`. The tight component's variance lives
//! in `[0, δ₊]`, the wide one's in `[δ₊ + Δδ, δ₋)`, and only `α₊` is free
//! (`α₋ = 1 − α₊`). The confidence of a location is the mixture mass inside
//! the disk `‖x − μ‖ < R`, which has a closed form.
//!
//! Parameters are fitted per patch by maximum likelihood over raw
//! (unconstrained) values mapped through [`constrain`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PcfError, Result};
use crate::flowfield::{FlowField, ScalarField};
use crate::geometry::Point2;
use crate::grid::{ensure_dims, Grid};
use crate::scalar::{log_add_exp, logistic, Real};

/// Minimum residual count for a patch to be fitted.
pub const MIN_PATCH_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConstraints<T> {
    pub delta_plus: T,
    pub delta_minus: T,
    pub margin: T,
    pub radius_r: T,
}

impl<T: Real> Default for GmmConstraints<T> {
    fn default() -> Self {
        Self {
            delta_plus: T::one(),
            delta_minus: T::of(11.0),
            margin: T::of(2.0),
            radius_r: T::one(),
        }
    }
}

impl<T: Real> GmmConstraints<T> {
    pub fn new(delta_plus: T, delta_minus: T, margin: T, radius_r: T) -> Result<Self> {
        let c = Self {
            delta_plus,
            delta_minus,
            margin,
            radius_r,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.delta_plus > T::zero()
            && self.margin >= T::zero()
            && self.delta_plus + self.margin < self.delta_minus
            && self.radius_r > T::zero()
            && self.delta_minus.is_finite()
            && self.radius_r.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PcfError::InvalidParameter(format!(
                "GMM constraints require 0 < delta_plus, delta_plus + margin < delta_minus, radius > 0 \
                 (got delta_plus={}, delta_minus={}, margin={}, radius={})",
                self.delta_plus, self.delta_minus, self.margin, self.radius_r
            )))
        }
    }

    /// Lower bound of the wide component's variance, `δ₊ + Δδ`.
    #[inline]
    pub fn wide_floor(&self) -> T {
        self.delta_plus + self.margin
    }

    /// Largest representable wide variance strictly below `δ₋`.
    #[inline]
    fn wide_ceiling(&self) -> T {
        self.delta_minus * (T::one() - T::epsilon())
    }
}

/// `(α₊, σ₊², σ₋²)` of the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams<T> {
    alpha_plus: T,
    sigma_plus_sq: T,
    sigma_minus_sq: T,
}

impl<T: Real> GmmParams<T> {
    /// Checks `α₊ ∈ [0, 1]`, `σ₊² ≥ 0` and `σ₋² > 0`. The ordering relative
    /// to a [`GmmConstraints`] is checked by [`GmmParams::satisfies`].
    pub fn new(alpha_plus: T, sigma_plus_sq: T, sigma_minus_sq: T) -> Result<Self> {
        let ok = alpha_plus >= T::zero()
            && alpha_plus <= T::one()
            && sigma_plus_sq >= T::zero()
            && sigma_plus_sq.is_finite()
            && sigma_minus_sq > T::zero()
            && sigma_minus_sq.is_finite();
        if !ok {
            return Err(PcfError::InvalidParameter(format!(
                "invalid GMM parameters (alpha={alpha_plus}, sigma_plus_sq={sigma_plus_sq}, sigma_minus_sq={sigma_minus_sq})"
            )));
        }
        Ok(Self {
            alpha_plus,
            sigma_plus_sq,
            sigma_minus_sq,
        })
    }

    #[inline]
    pub fn alpha_plus(&self) -> T {
        self.alpha_plus
    }

    #[inline]
    pub fn sigma_plus_sq(&self) -> T {
        self.sigma_plus_sq
    }

    #[inline]
    pub fn sigma_minus_sq(&self) -> T {
        self.sigma_minus_sq
    }

    /// `0 ≤ σ₊² ≤ δ₊ < δ₊ + Δδ ≤ σ₋² < δ₋` and `0 ≤ α₊ ≤ 1`.
    pub fn satisfies(&self, c: &GmmConstraints<T>) -> bool {
        self.alpha_plus >= T::zero()
            && self.alpha_plus <= T::one()
            && self.sigma_plus_sq >= T::zero()
            && self.sigma_plus_sq <= c.delta_plus
            && c.delta_plus < c.wide_floor()
            && c.wide_floor() <= self.sigma_minus_sq
            && self.sigma_minus_sq < c.delta_minus
    }
}

/// Unconstrained parameters fed to [`constrain`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawParams<T> {
    pub alpha: T,
    pub sigma_plus: T,
    pub sigma_minus: T,
}

/// Maps raw values onto the constraint chain through logistic squashing.
pub fn constrain<T: Real>(raw: RawParams<T>, c: &GmmConstraints<T>) -> GmmParams<T> {
    let alpha_plus = logistic(raw.alpha);
    let sigma_plus_sq = (c.delta_plus * logistic(raw.sigma_plus)).min(c.delta_plus);
    let span = c.delta_minus - c.wide_floor();
    let sigma_minus_sq = (c.wide_floor() + span * logistic(raw.sigma_minus))
        .max(c.wide_floor())
        .min(c.wide_ceiling());
    GmmParams {
        alpha_plus,
        sigma_plus_sq,
        sigma_minus_sq,
    }
}

/// Isotropic 2D Gaussian density `exp(−‖x−μ‖²/2σ²) / (2πσ²)`.
pub fn gaussian2d<T: Real>(x: Point2<T>, mu: Point2<T>, sigma_sq: T) -> Result<T> {
    if !(sigma_sq > T::zero()) {
        return Err(PcfError::NonPositiveVariance(sigma_sq.to_f64_lossy()));
    }
    let d2 = (x - mu).norm_sq();
    Ok((-d2 / (T::of(2.0) * sigma_sq)).exp() / (T::TAU() * sigma_sq))
}

pub fn gmm_pdf<T: Real>(x: Point2<T>, mu: Point2<T>, params: &GmmParams<T>) -> Result<T> {
    let a = params.alpha_plus;
    let tight = if a > T::zero() {
        a * gaussian2d(x, mu, params.sigma_plus_sq)?
    } else {
        T::zero()
    };
    let wide = if a < T::one() {
        (T::one() - a) * gaussian2d(x, mu, params.sigma_minus_sq)?
    } else {
        T::zero()
    };
    Ok(tight + wide)
}

/// Mixture mass inside the disk of radius `radius_r` around the mean.
///
/// A zero tight variance is treated as the limit `exp(−R²/0⁺) = 0`.
pub fn confidence<T: Real>(params: &GmmParams<T>, radius_r: T) -> T {
    let r2 = radius_r * radius_r;
    let two = T::of(2.0);
    let e_minus = (-r2 / (two * params.sigma_minus_sq)).exp();
    let e_plus = if params.sigma_plus_sq > T::zero() {
        (-r2 / (two * params.sigma_plus_sq)).exp()
    } else {
        T::zero()
    };
    (T::one() - e_minus + params.alpha_plus * (e_minus - e_plus))
        .max(T::zero())
        .min(T::one())
}

/// Prior `D = exp(−γ / d)` where `d` is the pixel distance to `origin`;
/// `D = 0` at the origin itself.
pub fn distance_map<T: Real>(
    width: usize,
    height: usize,
    origin: Point2<T>,
    gamma: T,
) -> Result<ScalarField<T>> {
    if !(gamma > T::zero()) {
        return Err(PcfError::InvalidParameter(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    Ok(Grid::from_fn(width, height, |x, y| {
        let d = (Point2::pixel(x, y) - origin).norm();
        if d == T::zero() {
            T::zero()
        } else {
            (-gamma / d).exp()
        }
    }))
}

#[inline]
fn log_gauss<T: Real>(d2: T, s: T) -> T {
    if s > T::zero() {
        -T::TAU().ln() - s.ln() - d2 / (T::of(2.0) * s)
    } else {
        T::neg_infinity()
    }
}

/// Log-density of one squared residual and its component responsibilities.
#[inline]
fn log_density<T: Real>(d2: T, p: &GmmParams<T>) -> (T, T, T) {
    let lt = p.alpha_plus.ln() + log_gauss(d2, p.sigma_plus_sq);
    let lw = (T::one() - p.alpha_plus).ln() + log_gauss(d2, p.sigma_minus_sq);
    let lp = log_add_exp(lt, lw);
    ((lp), (lt - lp).exp(), (lw - lp).exp())
}

fn squared_residuals<T: Real>(samples: &[(Point2<T>, Point2<T>)]) -> Vec<T> {
    samples.iter().map(|(x, mu)| (*x - *mu).norm_sq()).collect()
}

fn mean_nll<T: Real>(d2: &[T], p: &GmmParams<T>) -> T {
    let n = T::of(d2.len() as f64);
    d2.iter().map(|&v| -log_density(v, p).0).sum::<T>() / n
}

/// Mean negative log-likelihood of `(x, μ)` pairs. Evaluated in log space,
/// so far outliers stay finite.
pub fn nll<T: Real>(samples: &[(Point2<T>, Point2<T>)], params: &GmmParams<T>) -> Result<T> {
    if samples.is_empty() {
        return Err(PcfError::EmptySamples);
    }
    Ok(mean_nll(&squared_residuals(samples), params))
}

/// Mean NLL at `raw` and its analytic gradient with respect to the raw values.
pub fn nll_raw_with_grad<T: Real>(
    samples: &[(Point2<T>, Point2<T>)],
    raw: RawParams<T>,
    c: &GmmConstraints<T>,
) -> Result<(T, RawParams<T>)> {
    if samples.is_empty() {
        return Err(PcfError::EmptySamples);
    }
    Ok(loss_and_grad(&squared_residuals(samples), raw, c))
}

fn loss_and_grad<T: Real>(d2: &[T], raw: RawParams<T>, c: &GmmConstraints<T>) -> (T, RawParams<T>) {
    let p = constrain(raw, c);
    let one = T::one();
    let two = T::of(2.0);
    let sig_p = logistic(raw.sigma_plus);
    let sig_m = logistic(raw.sigma_minus);
    let span = c.delta_minus - c.wide_floor();
    let dsm = span * sig_m * (one - sig_m);
    let (sp, sm) = (p.sigma_plus_sq, p.sigma_minus_sq);

    let mut loss = T::zero();
    let mut g = RawParams::<T>::default();
    for &v in d2 {
        let (lp, w_t, w_w) = log_density(v, &p);
        loss = loss - lp;
        g.alpha = g.alpha + (p.alpha_plus - w_t);
        if w_t > T::zero() {
            g.sigma_plus = g.sigma_plus + w_t * (one - v / (two * sp)) * (one - sig_p);
        }
        if w_w > T::zero() {
            g.sigma_minus = g.sigma_minus + w_w * (one / sm - v / (two * sm * sm)) * dsm;
        }
    }
    let n = T::of(d2.len() as f64);
    (
        loss / n,
        RawParams {
            alpha: g.alpha / n,
            sigma_plus: g.sigma_plus / n,
            sigma_minus: g.sigma_minus / n,
        },
    )
}

/// Adam settings for [`fit_params`]; raw values start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            iterations: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport<T> {
    pub params: GmmParams<T>,
    pub raw: RawParams<T>,
    pub initial_nll: T,
    pub final_nll: T,
}

/// Maximum-likelihood fit of the constrained mixture to `(x, μ)` pairs.
///
/// Returns the lowest-loss iterate, so the final NLL never exceeds the
/// initial one.
pub fn fit_params<T: Real>(
    samples: &[(Point2<T>, Point2<T>)],
    c: &GmmConstraints<T>,
    opt: &OptimizerConfig,
) -> Result<GmmParams<T>> {
    fit_params_report(samples, c, opt).map(|r| r.params)
}

pub fn fit_params_report<T: Real>(
    samples: &[(Point2<T>, Point2<T>)],
    c: &GmmConstraints<T>,
    opt: &OptimizerConfig,
) -> Result<FitReport<T>> {
    if samples.is_empty() {
        return Err(PcfError::EmptySamples);
    }
    if samples.len() < MIN_PATCH_SAMPLES {
        return Err(PcfError::InsufficientData {
            needed: MIN_PATCH_SAMPLES,
            got: samples.len(),
        });
    }
    c.validate()?;
    fit_squared(&squared_residuals(samples), c, opt)
}

fn fit_squared<T: Real>(
    d2: &[T],
    c: &GmmConstraints<T>,
    opt: &OptimizerConfig,
) -> Result<FitReport<T>> {
    let lr = T::of(opt.learning_rate);
    let (b1, b2, eps) = (T::of(opt.beta1), T::of(opt.beta2), T::of(opt.epsilon));
    let one = T::one();

    let mut raw = RawParams::default();
    let (initial, mut grad) = loss_and_grad(d2, raw, c);
    if !initial.is_finite() {
        return Err(PcfError::NonFinite { iteration: 0 });
    }
    let mut best = (initial, raw);
    let mut m = [T::zero(); 3];
    let mut v = [T::zero(); 3];
    let (mut b1t, mut b2t) = (one, one);
    for it in 1..=opt.iterations {
        let g = [grad.alpha, grad.sigma_plus, grad.sigma_minus];
        b1t = b1t * b1;
        b2t = b2t * b2;
        let mut step = [T::zero(); 3];
        for k in 0..3 {
            m[k] = b1 * m[k] + (one - b1) * g[k];
            v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
            let mh = m[k] / (one - b1t);
            let vh = v[k] / (one - b2t);
            step[k] = lr * mh / (vh.sqrt() + eps);
        }
        raw = RawParams {
            alpha: raw.alpha - step[0],
            sigma_plus: raw.sigma_plus - step[1],
            sigma_minus: raw.sigma_minus - step[2],
        };
        let (loss, g_new) = loss_and_grad(d2, raw, c);
        if !loss.is_finite()
            || !g_new.alpha.is_finite()
            || !g_new.sigma_plus.is_finite()
            || !g_new.sigma_minus.is_finite()
        {
            return Err(PcfError::NonFinite { iteration: it });
        }
        if loss < best.0 {
            best = (loss, raw);
        }
        grad = g_new;
    }
    Ok(FitReport {
        params: constrain(best.1, c),
        raw: best.1,
        initial_nll: initial,
        final_nll: best.0,
    })
}

/// Per-pixel confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceField<T> {
    values: Grid<T>,
}

impl<T: Real> ConfidenceField<T> {
    pub fn new(values: Grid<T>) -> Result<Self> {
        if let Some(bad) = values
            .as_slice()
            .iter()
            .find(|&&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(PcfError::InvalidParameter(format!(
                "confidence {bad} outside [0, 1]"
            )));
        }
        Ok(Self { values })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(Grid::filled(width, height, value))
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            values: Grid::filled(width, height, T::zero()),
        }
    }

    pub fn values(&self) -> &Grid<T> {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        *self.values.get(x, y)
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn mean(&self) -> T {
        if self.values.is_empty() {
            return T::zero();
        }
        self.values.as_slice().iter().copied().sum::<T>() / T::of(self.values.len() as f64)
    }

    pub fn into_grid(self) -> Grid<T> {
        self.values
    }
}

/// One fitted parameter triple per `patch_size × patch_size` tile; `None`
/// for tiles with fewer than [`MIN_PATCH_SAMPLES`] residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParamField<T> {
    patch_size: usize,
    width: usize,
    height: usize,
    cells: Grid<Option<GmmParams<T>>>,
}

impl<T: Real> GmmParamField<T> {
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Pixel dimensions of the field the patches tile.
    pub fn pixel_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cells(&self) -> &Grid<Option<GmmParams<T>>> {
        &self.cells
    }

    pub fn at_pixel(&self, x: usize, y: usize) -> Option<&GmmParams<T>> {
        self.cells
            .get(x / self.patch_size, y / self.patch_size)
            .as_ref()
    }
}

/// Forward-backward residuals on the target grid.
///
/// For a valid target pixel `q`, `p = q + Y_fwd(q)` and the residual is
/// `p + Y_bwd(p) − q` with `Y_bwd` sampled bilinearly on the source grid.
pub fn forward_backward_residuals<T: Real>(
    fwd: &FlowField<T>,
    bwd: &FlowField<T>,
) -> Result<Grid<Option<Point2<T>>>> {
    ensure_dims(fwd.dims(), bwd.dims())?;
    let (w, h) = fwd.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        let p = fwd.source_point(x, y)?;
        let back = bwd.sample(p)?;
        Some(p + back - Point2::pixel(x, y))
    }))
}

/// Fits one mixture per patch to forward-backward residuals and broadcasts
/// its confidence over the patch. Pixels without a forward correspondence
/// get confidence `0`, as do patches too sparse to fit.
pub fn confidence_field_from_flow_pair<T: Real>(
    fwd: &FlowField<T>,
    bwd: &FlowField<T>,
    patch_size: usize,
    c: &GmmConstraints<T>,
    opt: &OptimizerConfig,
) -> Result<(GmmParamField<T>, ConfidenceField<T>)> {
    if patch_size < 4 {
        return Err(PcfError::InvalidParameter(format!(
            "patch size must be >= 4, got {patch_size}"
        )));
    }
    c.validate()?;
    let residuals = forward_backward_residuals(fwd, bwd)?;
    let (w, h) = fwd.dims();
    let (pw, ph) = (w.div_ceil(patch_size), h.div_ceil(patch_size));

    let fitted: Vec<Result<Option<GmmParams<T>>>> = (0..pw * ph)
        .into_par_iter()
        .map(|cell| {
            let (cx, cy) = (cell % pw, cell / pw);
            let mut d2 = Vec::with_capacity(patch_size * patch_size);
            for y in cy * patch_size..((cy + 1) * patch_size).min(h) {
                for x in cx * patch_size..((cx + 1) * patch_size).min(w) {
                    if let Some(r) = residuals.get(x, y) {
                        d2.push(r.norm_sq());
                    }
                }
            }
            if d2.len() < MIN_PATCH_SAMPLES {
                return Ok(None);
            }
            fit_squared(&d2, c, opt).map(|r| Some(r.params))
        })
        .collect();
    let cells = Grid::from_vec(pw, ph, fitted.into_iter().collect::<Result<Vec<_>>>()?)?;

    let conf = Grid::from_fn(w, h, |x, y| {
        if !fwd.is_valid(x, y) {
            return T::zero();
        }
        cells
            .get(x / patch_size, y / patch_size)
            .as_ref()
            .map_or(T::zero(), |p| confidence(p, c.radius_r))
    });
    Ok((
        GmmParamField {
            patch_size,
            width: w,
            height: h,
            cells,
        },
        ConfidenceField::new(conf)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    fn params(a: f64, sp: f64, sm: f64) -> GmmParams<f64> {
        GmmParams::new(a, sp, sm).unwrap()
    }

    #[test]
    fn gaussian_examples() {
        let peak = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((gaussian2d(p(1.0, 2.0), p(1.0, 2.0), 1.0).unwrap() - peak).abs() < 1e-15);
        assert!((peak - 0.15915).abs() < 1e-5);
        // ‖x−μ‖² = 2σ² with σ² = 3
        let v = gaussian2d(p(6.0_f64.sqrt(), 0.0), p(0.0, 0.0), 3.0).unwrap();
        let peak3 = 1.0 / (2.0 * std::f64::consts::PI * 3.0);
        assert!((v - peak3 * (-1.0f64).exp()).abs() < 1e-15);
        let v = gaussian2d(p(3.0, 4.0), p(0.0, 0.0), 25.0).unwrap();
        let oracle = (-0.5f64).exp() / (50.0 * std::f64::consts::PI);
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.003861).abs() < 1e-6);
        assert!(matches!(
            gaussian2d(p(0.0, 0.0), p(0.0, 0.0), 0.0),
            Err(PcfError::NonPositiveVariance(_))
        ));
    }

    #[test]
    fn mixture_examples() {
        let x = p(0.3, -0.7);
        let mu = p(0.0, 0.1);
        assert_eq!(
            gmm_pdf(x, mu, &params(1.0, 0.8, 5.0)).unwrap(),
            gaussian2d(x, mu, 0.8).unwrap()
        );
        assert_eq!(
            gmm_pdf(x, mu, &params(0.0, 0.8, 5.0)).unwrap(),
            gaussian2d(x, mu, 5.0).unwrap()
        );
        let v = gmm_pdf(mu, mu, &params(0.5, 1.0, 4.0)).unwrap();
        assert!((v - 5.0 / (16.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!((v - 0.09947).abs() < 1e-5);
    }

    #[test]
    fn constrain_examples() {
        let c = GmmConstraints::<f64>::default();
        let g = constrain(RawParams::default(), &c);
        assert_eq!(
            (g.alpha_plus(), g.sigma_plus_sq(), g.sigma_minus_sq()),
            (0.5, 0.5, 7.0)
        );
        let hi = constrain(
            RawParams {
                alpha: 800.0,
                sigma_plus: 0.0,
                sigma_minus: 800.0,
            },
            &c,
        );
        assert_eq!(hi.alpha_plus(), 1.0);
        assert!(hi.sigma_minus_sq() < 11.0);
        assert!(hi.satisfies(&c));
        let lo = constrain(
            RawParams {
                alpha: 0.0,
                sigma_plus: -800.0,
                sigma_minus: -800.0,
            },
            &c,
        );
        assert_eq!(lo.sigma_minus_sq(), 3.0);
        assert_eq!(lo.sigma_plus_sq(), 0.0);
        assert!(lo.satisfies(&c));
    }

    #[test]
    fn constraints_validation() {
        assert!(GmmConstraints::new(1.0, 3.0, 2.0, 1.0).is_err());
        assert!(GmmConstraints::new(0.0, 11.0, 2.0, 1.0).is_err());
        assert!(GmmConstraints::new(1.0, 11.0, 2.0, 0.0).is_err());
        assert!(GmmConstraints::new(1.0, 11.0, 2.0, 1.0).is_ok());
    }

    #[test]
    fn confidence_examples() {
        let c1 = confidence(&params(1.0, 1.0, 5.0), 1.0);
        assert!((c1 - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!((c1 - 0.39347).abs() < 1e-5);
        let c0 = confidence(&params(0.0, 1.0, 11.0), 1.0);
        assert!((c0 - (1.0 - (-1.0f64 / 22.0).exp())).abs() < 1e-15);
        assert!((c0 - 0.044437).abs() < 1e-6);
        let half = confidence(&params(0.5, 1.0, 11.0), 1.0);
        assert!((half - 0.5 * (c1 + c0)).abs() < 1e-15);
        assert!((half - 0.21896).abs() < 1e-5);
        // zero tight variance: the tight component puts all its mass inside R
        assert_eq!(confidence(&params(1.0, 0.0, 5.0), 1.0), 1.0);
    }

    /// Polar quadrature of the mixture over the disk, independent of the closed form.
    fn disk_integral(prm: &GmmParams<f64>, r: f64) -> f64 {
        let n = 4000;
        let h = r / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let rho = (i as f64 + 0.5) * h;
            let x = p(rho, 0.0);
            acc += gmm_pdf(x, p(0.0, 0.0), prm).unwrap() * 2.0 * std::f64::consts::PI * rho * h;
        }
        acc
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for &(a, sp, sm, r) in &[
            (0.5, 1.0, 11.0, 1.0),
            (0.9, 0.1, 3.0, 1.0),
            (0.2, 0.7, 6.0, 2.5),
        ] {
            let prm = params(a, sp, sm);
            assert!((confidence(&prm, r) - disk_integral(&prm, r)).abs() < 1e-6);
        }
    }

    #[test]
    fn distance_map_examples() {
        let d = distance_map(5, 4, p(2.0, 1.0), 0.03).unwrap();
        assert_eq!(*d.get(2, 1), 0.0);
        assert!((*d.get(3, 1) - (-0.03f64).exp()).abs() < 1e-15);
        assert!((*d.get(3, 1) - 0.97045).abs() < 1e-5);
        let far: Vec<f64> = (1..200)
            .map(|k| *distance_map(k + 1, 1, p(0.0, 0.0), 0.03).unwrap().get(k, 0))
            .collect();
        assert!(far.windows(2).all(|w| w[1] > w[0]));
        assert!(1.0 - far.last().unwrap() < 2e-4);
        assert!(distance_map(2, 2, p(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn nll_examples() {
        let prm = params(1.0, 1.0, 5.0);
        let one = nll(&[(p(1.0, 1.0), p(1.0, 1.0))], &prm).unwrap();
        assert!((one - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        assert!((one - 1.83788).abs() < 1e-5);
        let two = nll(&[(p(1.0, 1.0), p(1.0, 1.0)); 2], &prm).unwrap();
        assert!((one - two).abs() < 1e-15);

        let s = vec![
            (p(0.1, 0.0), p(0.0, 0.0)),
            (p(2.0, 1.0), p(0.0, 0.0)),
            (p(-4.0, 3.0), p(0.5, 0.5)),
        ];
        let mut r = s.clone();
        r.reverse();
        let prm = params(0.6, 0.4, 8.0);
        assert!((nll(&s, &prm).unwrap() - nll(&r, &prm).unwrap()).abs() < 1e-12);
        assert!(matches!(nll(&[], &prm), Err(PcfError::EmptySamples)));
        // far outliers stay finite
        assert!(nll(&[(p(1e4, 0.0), p(0.0, 0.0))], &prm)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn log_space_nll_matches_direct_pdf() {
        let prm = params(0.3, 0.6, 9.0);
        let s = vec![(p(0.4, -0.2), p(0.0, 0.0)), (p(2.5, 1.0), p(0.0, 0.5))];
        let direct = -s
            .iter()
            .map(|(x, mu)| gmm_pdf(*x, *mu, &prm).unwrap().ln())
            .sum::<f64>()
            / 2.0;
        assert!((nll(&s, &prm).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn fit_tight_samples() {
        let c = GmmConstraints::default();
        let s = vec![(p(2.0, 3.0), p(2.0, 3.0)); 16];
        let r = fit_params_report(&s, &c, &OptimizerConfig::default()).unwrap();
        assert!(r.params.alpha_plus() >= 0.99);
        assert!(r.params.sigma_plus_sq() < 1e-3);
        assert!(r.final_nll <= r.initial_nll);
        assert!(r.params.satisfies(&c));
    }

    #[test]
    fn fit_far_outliers_goes_wide() {
        let c = GmmConstraints::default();
        let mut s = vec![(p(100.0, 0.0), p(0.0, 0.0)), (p(0.0, 100.0), p(0.0, 0.0))];
        // NLL at α = 0 vs α = 1 for d = 100: the wide component is astronomically better
        let wide = nll(&s, &params(0.0, 1.0, 10.0)).unwrap();
        let tight = nll(&s, &params(1.0, 1.0, 10.0)).unwrap();
        assert!(wide < tight);
        s = s.repeat(4);
        let got = fit_params(&s, &c, &OptimizerConfig::default()).unwrap();
        assert!(got.alpha_plus() <= 0.01, "alpha {}", got.alpha_plus());
    }

    #[test]
    fn fit_requires_samples() {
        let c = GmmConstraints::default();
        let opt = OptimizerConfig::default();
        assert!(matches!(
            fit_params::<f64>(&[], &c, &opt),
            Err(PcfError::EmptySamples)
        ));
        assert!(matches!(
            fit_params(&[(p(0.0, 0.0), p(0.0, 0.0)); 7], &c, &opt),
            Err(PcfError::InsufficientData { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn fit_on_f32() {
        let c = GmmConstraints::<f32>::default();
        let s: Vec<_> = (0..32)
            .map(|i| {
                (
                    Point2::new(0.01f32 * (i % 5) as f32, 0.0),
                    Point2::new(0.0f32, 0.0),
                )
            })
            .collect();
        let got = fit_params(&s, &c, &OptimizerConfig::default()).unwrap();
        assert!(got.satisfies(&c));
        assert!(confidence(&got, c.radius_r) > 0.9);
    }

    fn constant_flow(w: usize, h: usize, d: Point2<f64>) -> FlowField<f64> {
        FlowField::constant(w, h, d)
    }

    #[test]
    fn inverse_flow_pair_is_confident() {
        let fwd = constant_flow(32, 24, p(-3.0, 1.0));
        let bwd = constant_flow(32, 24, p(3.0, -1.0));
        let (prm, conf) = confidence_field_from_flow_pair(
            &fwd,
            &bwd,
            8,
            &GmmConstraints::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert_eq!(prm.cells().dims(), (4, 3));
        for y in 0..24 {
            for x in 0..32 {
                let src = fwd.source_point(x, y).unwrap();
                let inside = src.x >= 0.0 && src.y <= 23.0;
                if inside && prm.at_pixel(x, y).is_some() {
                    assert!(conf.get(x, y) >= 0.39, "({x},{y}) {}", conf.get(x, y));
                }
            }
        }
        // interior patches always have enough residuals
        assert!(conf.get(16, 8) > 0.99);
    }

    #[test]
    fn noisy_backward_flow_is_not_confident() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 20.0).unwrap();
        let fwd = FlowField::<f64>::zeros(32, 32);
        let bwd = FlowField::from_fn(32, 32, |_, _| {
            Some(p(normal.sample(&mut rng), normal.sample(&mut rng)))
        });
        let (_, conf) = confidence_field_from_flow_pair(
            &fwd,
            &bwd,
            8,
            &GmmConstraints::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        for &v in conf.values().as_slice() {
            assert!(v <= 0.05, "confidence {v}");
        }
    }

    #[test]
    fn occluded_patch_gets_zero() {
        let fwd = FlowField::from_fn(16, 16, |x, y| (x >= 8 || y >= 8).then(|| p(0.0, 0.0)));
        let bwd = FlowField::zeros(16, 16);
        let (prm, conf) = confidence_field_from_flow_pair(
            &fwd,
            &bwd,
            8,
            &GmmConstraints::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(prm.cells().get(0, 0).is_none());
        assert_eq!(conf.get(3, 3), 0.0);
        assert!(conf.get(12, 12) > 0.9);
        assert!(matches!(
            confidence_field_from_flow_pair(
                &fwd,
                &FlowField::zeros(16, 15),
                8,
                &GmmConstraints::default(),
                &OptimizerConfig::default()
            ),
            Err(PcfError::DimMismatch { .. })
        ));
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = GmmConstraints::default();
        let samples: Vec<_> = (0..40)
            .map(|_| {
                (
                    p(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                    p(0.0, 0.0),
                )
            })
            .collect();
        let raw = RawParams {
            alpha: 0.3,
            sigma_plus: -0.4,
            sigma_minus: 0.8,
        };
        let (_, g) = nll_raw_with_grad(&samples, raw, &c).unwrap();
        let h = 1e-5;
        let f = |r: RawParams<f64>| nll_raw_with_grad(&samples, r, &c).unwrap().0;
        let fd = [
            (f(RawParams {
                alpha: raw.alpha + h,
                ..raw
            }) - f(RawParams {
                alpha: raw.alpha - h,
                ..raw
            })) / (2.0 * h),
            (f(RawParams {
                sigma_plus: raw.sigma_plus + h,
                ..raw
            }) - f(RawParams {
                sigma_plus: raw.sigma_plus - h,
                ..raw
            })) / (2.0 * h),
            (f(RawParams {
                sigma_minus: raw.sigma_minus + h,
                ..raw
            }) - f(RawParams {
                sigma_minus: raw.sigma_minus - h,
                ..raw
            })) / (2.0 * h),
        ];
        for (a, b) in [g.alpha, g.sigma_plus, g.sigma_minus].iter().zip(fd) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }
}
