//! Order and type of the entire map `f(lambda) = e^{lambda a} e^{-lambda b}`.
//!
//! Two independent routes: the Taylor coefficients `a_n = c_n / n!` taken
//! from the commutator sequence, and direct sampling of `||f||` on circles.
//!
//! The coefficient order formula `limsup n ln n / ln(1/||a_n||)` converges
//! only like `1 + O(1/ln n)`, so the order is read off a least-squares fit of
//! `ln(1/||a_n||)` against `{n ln n, n, 1}` over the tail window, whose
//! leading coefficient is `1/order` for any entire function of finite order.
//! A `ln n` column would absorb the Stirling term but is close enough to
//! collinear with the others that bounded oscillation in `||a_n||` (two
//! eigenvalue differences of similar modulus) swings the order by 5-10%.
//! The raw tail-max of the formula is kept as a diagnostic. The type then
//! follows the coefficient formula with that order.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::commutator::commutator_sequence;
use crate::error::{Error, Result};
use crate::matrix::{mat_exp, operator_norm, ComplexMatrix, C64};

/// Minimum coefficient count for [`coefficient_lognorms`].
pub const MIN_COEFFICIENTS: usize = 32;

/// Largest `r (||a|| + ||b||)` on the default disk grid, which keeps every
/// sampled norm well inside double range.
pub const DISK_EXPONENT_CEILING: f64 = 256.0;

pub const DEFAULT_SAMPLES_PER_CIRCLE: usize = 64;

const NOISE_FACTOR: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthMethod {
    Coefficients,
    DiskSampling,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GrowthDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficient_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_max_modulus: Option<Vec<f64>>,
    /// Inclusive index range of coefficients or radii used by the fit.
    pub window: (usize, usize),
    /// Tail-max of `n ln n / ln(1/||a_n||)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_order: Option<f64>,
    /// `max_r (log M(r) - (||a|| + ||b||) r)`, non-positive when the
    /// exponential envelope holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_excess: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthEstimate {
    pub order: f64,
    /// `f64::INFINITY` marks infinite type.
    #[serde(rename = "type")]
    pub type_: f64,
    pub method: GrowthMethod,
    pub fit_residual: f64,
    pub diagnostics: GrowthDiagnostics,
}

impl GrowthEstimate {
    fn degenerate(method: GrowthMethod, flag: &str, diagnostics: GrowthDiagnostics) -> Self {
        let mut diagnostics = diagnostics;
        diagnostics.flags.push(flag.to_string());
        GrowthEstimate {
            order: 0.0,
            type_: 0.0,
            method,
            fit_residual: 0.0,
            diagnostics,
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.diagnostics.flags.iter().any(|f| f == flag)
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0)
}

/// `ln ||a_n||` for `n = 0..=len`, with `a_n = C^n_{a,b} 1 / n!`.
pub fn coefficient_lognorms(a: &ComplexMatrix, b: &ComplexMatrix, len: usize) -> Result<Vec<f64>> {
    if len < MIN_COEFFICIENTS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_COEFFICIENTS} coefficients, got {len}"
        )));
    }
    let seq = commutator_sequence(a, b, len)?;
    Ok(seq
        .terms
        .iter()
        .enumerate()
        .map(|(n, t)| t.log_norm - ln_factorial(n))
        .collect())
}

/// Least squares `y ~ X beta`, columns rescaled to unit max before solving.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let mut xs = x.clone();
    let mut scales = Vec::with_capacity(x.ncols());
    for mut col in xs.column_iter_mut() {
        let s = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let s = if s > 0.0 { s } else { 1.0 };
        col /= s;
        scales.push(s);
    }
    let svd = xs.clone().svd(true, true);
    let beta_scaled = svd
        .solve(y, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let resid = y - &xs * &beta_scaled;
    let rms = (resid.norm_squared() / y.len() as f64).sqrt();
    let beta = DVector::from_iterator(
        beta_scaled.len(),
        beta_scaled.iter().zip(&scales).map(|(b, s)| b / s),
    );
    Ok((beta, rms))
}

/// Order and type from `ln ||a_n||`, `n = 0, 1, ...`.
///
/// A zero tail (polynomial) or all-zero input returns order 0, type 0.
pub fn order_type_from_coefficients(lognorms: &[f64]) -> Result<GrowthEstimate> {
    let len = lognorms.len();
    let mut diag = GrowthDiagnostics {
        coefficient_count: Some(len),
        ..Default::default()
    };
    let last_finite = lognorms
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| v.is_finite())
        .map(|(n, _)| n)
        .next_back();
    let Some(last) = last_finite else {
        diag.window = (0, len.saturating_sub(1));
        return Ok(GrowthEstimate::degenerate(
            GrowthMethod::Coefficients,
            "constant",
            diag,
        ));
    };
    if last < len - 1 {
        diag.window = (0, last);
        return Ok(GrowthEstimate::degenerate(
            GrowthMethod::Coefficients,
            "polynomial",
            diag,
        ));
    }
    let finite = lognorms.iter().filter(|v| v.is_finite()).count();
    if finite < MIN_COEFFICIENTS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_COEFFICIENTS} finite coefficients, got {finite}"
        )));
    }

    let start = ((len - 1) / 2).max(2);
    let idx: Vec<usize> = (start..len).filter(|&n| lognorms[n].is_finite()).collect();
    diag.window = (start, len - 1);

    let x = DMatrix::from_fn(idx.len(), 3, |r, c| {
        let n = idx[r] as f64;
        match c {
            0 => n * n.ln(),
            1 => n,
            _ => 1.0,
        }
    });
    let y = DVector::from_iterator(idx.len(), idx.iter().map(|&n| -lognorms[n]));
    let (beta, rms) = least_squares(&x, &y)?;

    let raw = idx
        .iter()
        .filter(|&&n| -lognorms[n] > 0.0)
        .map(|&n| {
            let nf = n as f64;
            nf * nf.ln() / -lognorms[n]
        })
        .fold(f64::NEG_INFINITY, f64::max);
    diag.raw_order = raw.is_finite().then_some(raw);

    let alpha = beta[0];
    if !(alpha > 0.0) {
        diag.flags.push("infinite-order".into());
        return Ok(GrowthEstimate {
            order: f64::INFINITY,
            type_: f64::INFINITY,
            method: GrowthMethod::Coefficients,
            fit_residual: rms,
            diagnostics: diag,
        });
    }
    let order = 1.0 / alpha;
    let type_ = idx
        .iter()
        .map(|&n| {
            let nf = n as f64;
            nf * (order * lognorms[n] / nf).exp()
        })
        .fold(0.0_f64, f64::max)
        / (std::f64::consts::E * order);
    Ok(GrowthEstimate {
        order,
        type_,
        method: GrowthMethod::Coefficients,
        fit_residual: rms,
        diagnostics: diag,
    })
}

/// `{1, 2, ..., 2^7} * c` with `c` chosen so the largest radius times
/// `||a|| + ||b||` equals [`DISK_EXPONENT_CEILING`].
pub fn default_radii(a: &ComplexMatrix, b: &ComplexMatrix) -> Vec<f64> {
    let s = operator_norm(a) + operator_norm(b);
    let s = if s > 0.0 { s } else { 1.0 };
    let top = DISK_EXPONENT_CEILING / s;
    (0..8).map(|k| top * 2f64.powi(k - 7)).collect()
}

/// `L_a - R_b` acting on column-major `vec(x)`.
fn sylvester_operator(a: &ComplexMatrix, b: &ComplexMatrix) -> DMatrix<C64> {
    let n = a.dim();
    let id = DMatrix::<C64>::identity(n, n);
    id.kronecker(a.as_dmatrix()) - b.as_dmatrix().transpose().kronecker(&id)
}

/// One circle of samples: the largest `||f(lambda)||` and the largest
/// Frobenius norm of the propagator `e^{lambda (L_a - R_b)}`, which sets the
/// rounding floor.
#[derive(Clone, Copy, Debug)]
pub struct CircleSample {
    pub max_modulus: f64,
    pub propagator_norm: f64,
}

/// `max_k ||e^{lambda_k a} e^{-lambda_k b}||` over equiangular nodes on
/// `|lambda| = r`.
///
/// `f(lambda) = e^{lambda (L_a - R_b)} 1` is evaluated on the Kronecker form
/// rather than as a product of two exponentials: the product cancels down
/// from `e^{r(||a||+||b||)}` and keeps only absolute accuracy, whereas the
/// propagator grows like `f` itself for generic pairs.
pub fn sampled_max_modulus(a: &ComplexMatrix, b: &ComplexMatrix, r: f64, samples: usize) -> CircleSample {
    let n = a.dim();
    let t = ComplexMatrix::wrap(sylvester_operator(a, b));
    let vec_id: Vec<usize> = (0..n).map(|i| i * n + i).collect();
    let per_node: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
            let lambda = C64::from_polar(r, theta);
            let e = mat_exp(&t.scale(lambda));
            let e = e.as_dmatrix();
            // columns of vec(1) summed, reshaped column-major
            let f = DMatrix::from_fn(n, n, |i, j| {
                vec_id.iter().map(|&c| e[(j * n + i, c)]).sum::<C64>()
            });
            (operator_norm(&ComplexMatrix::wrap(f)), e.norm())
        })
        .collect();
    let fold = |sel: fn(&(f64, f64)) -> f64| {
        per_node.iter().map(sel).fold(0.0_f64, |m, v| if m.is_nan() || v.is_nan() { f64::NAN } else { m.max(v) })
    };
    CircleSample {
        max_modulus: fold(|p| p.0),
        propagator_norm: fold(|p| p.1),
    }
}

fn linear_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    (slope, (rss / n).sqrt())
}

/// Order and type from sampled maximum moduli.
///
/// With `L(r) = ln M(r)`, the increments `L(qr) - L(r)` of a function of
/// order `w` and type `t` behave like `t (q^w - 1) r^w`, so the order is the
/// slope of `ln(L(qr) - L(r))` against `ln r` and the additive constant in
/// `L` drops out. Increments below the rounding floor of the sampled product
/// count as no growth.
pub fn order_type_from_disk_sampling(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    radii: &[f64],
    samples_per_circle: usize,
) -> Result<GrowthEstimate> {
    a.check_same_dim(b)?;
    if radii.len() < 6 {
        return Err(Error::InvalidArgument("need at least 6 radii".into()));
    }
    if samples_per_circle < 32 {
        return Err(Error::InvalidArgument("need at least 32 samples per circle".into()));
    }
    if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument("radii must be positive and finite".into()));
    }
    let q = radii[1] / radii[0];
    if !(q > 1.0) || radii.windows(2).any(|w| ((w[1] / w[0]) - q).abs() > 1e-9 * q) {
        return Err(Error::InvalidArgument("radii must form an increasing geometric grid".into()));
    }

    let s = operator_norm(a) + operator_norm(b);
    let dim = a.dim() as f64;
    let mut diag = GrowthDiagnostics::default();
    let mut used_radii = Vec::new();
    let mut log_m = Vec::new();
    let mut log_prop = Vec::new();
    for &r in radii {
        let c = sampled_max_modulus(a, b, r, samples_per_circle);
        if !(c.max_modulus.is_finite() && c.propagator_norm.is_finite()) {
            diag.flags.push("truncated".into());
            break;
        }
        used_radii.push(r);
        log_m.push(c.max_modulus.ln());
        log_prop.push(c.propagator_norm.ln());
    }
    let excess = used_radii
        .iter()
        .zip(&log_m)
        .map(|(r, l)| l - s * r)
        .fold(f64::NEG_INFINITY, f64::max);
    diag.envelope_excess = Some(excess);
    diag.radii = Some(used_radii.clone());
    diag.log_max_modulus = Some(log_m.clone());

    let noise = |k: usize| -> f64 {
        NOISE_FACTOR * f64::EPSILON * dim * (log_prop[k] - log_m[k]).exp()
    };
    let increments: Vec<(usize, f64)> = (0..log_m.len().saturating_sub(1))
        .map(|k| (k, log_m[k + 1] - log_m[k]))
        .collect();
    let valid = |lo: usize| -> Vec<(usize, f64)> {
        increments
            .iter()
            .copied()
            .filter(|&(k, d)| k >= lo && d > noise(k) + noise(k + 1))
            .collect()
    };
    let mut picked = valid(increments.len() / 2);
    if picked.len() < 2 {
        picked = valid(0);
    }
    if picked.len() < 2 {
        diag.window = (0, used_radii.len().saturating_sub(1));
        return Ok(GrowthEstimate::degenerate(
            GrowthMethod::DiskSampling,
            "flat",
            diag,
        ));
    }
    diag.window = (picked[0].0, picked[picked.len() - 1].0 + 1);
    let xs: Vec<f64> = picked.iter().map(|&(k, _)| used_radii[k].ln()).collect();
    let ys: Vec<f64> = picked.iter().map(|&(_, d)| d.ln()).collect();
    let (order, rms) = linear_slope(&xs, &ys);
    let (k, d) = picked[picked.len() - 1];
    let type_ = d / (used_radii[k + 1].powf(order) - used_radii[k].powf(order));
    Ok(GrowthEstimate {
        order,
        type_,
        method: GrowthMethod::DiskSampling,
        fit_residual: rms,
        diagnostics: diag,
    })
}

/// `n (1/n!)^{1/n}`, which increases to `e`.
pub fn stirling_check(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let nf = n as f64;
    Ok(nf * (-ln_factorial(n) / nf).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_exp_lognorms(len: usize) -> Vec<f64> {
        // independent of ln_gamma: accumulate ln k
        let mut out = vec![0.0];
        let mut acc = 0.0;
        for k in 1..=len {
            acc += (k as f64).ln();
            out.push(-acc);
        }
        out
    }

    #[test]
    fn lognorms_of_equal_pair_are_zero() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[0.5, -1.0]]).unwrap();
        let l = coefficient_lognorms(&a, &a, 32).unwrap();
        assert_eq!(l[0], 0.0);
        assert!(l[1..].iter().all(|v| *v == f64::NEG_INFINITY));
    }

    #[test]
    fn lognorms_of_projection() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        let l = coefficient_lognorms(&a, &ComplexMatrix::zeros(2), 40).unwrap();
        let reference = scalar_exp_lognorms(40);
        for n in 0..=40 {
            assert!((l[n] - reference[n]).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn lognorms_of_nilpotent() {
        let n = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let l = coefficient_lognorms(&n, &ComplexMatrix::zeros(2), 32).unwrap();
        assert!(l[1].abs() < 1e-15);
        assert!(l[2..].iter().all(|v| *v == f64::NEG_INFINITY));
        let g = order_type_from_coefficients(&l).unwrap();
        assert_eq!(g.order, 0.0);
        assert!(g.has_flag("polynomial"));
    }

    #[test]
    fn scalar_exponential_order_and_type() {
        let g = order_type_from_coefficients(&scalar_exp_lognorms(200)).unwrap();
        assert!((g.order - 1.0).abs() < 1e-2, "{g:?}");
        assert!((g.type_ - 1.0).abs() < 0.1, "{g:?}");
        // the raw formula sits well above 1 at this length
        assert!(g.diagnostics.raw_order.unwrap() > 1.2);
    }

    #[test]
    fn order_two_series() {
        // e^{z^2}: a_{2k} = 1/k!, odd coefficients zero
        let len = 400;
        let mut l = vec![f64::NEG_INFINITY; len + 1];
        for k in 0..=len / 2 {
            l[2 * k] = -ln_factorial(k);
        }
        let g = order_type_from_coefficients(&l).unwrap();
        assert!((g.order - 2.0).abs() < 0.05, "{g:?}");
        assert!((g.type_ - 1.0).abs() < 0.1, "{g:?}");
    }

    #[test]
    fn all_zero_is_constant() {
        let mut l = vec![f64::NEG_INFINITY; 40];
        l[0] = 0.0;
        let g = order_type_from_coefficients(&l).unwrap();
        assert_eq!((g.order, g.type_), (0.0, 0.0));
        assert!(g.has_flag("constant"));
    }

    #[test]
    fn disk_sampling_scalar_exponential() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        let b = ComplexMatrix::zeros(2);
        let g = order_type_from_disk_sampling(&a, &b, &default_radii(&a, &b), 64).unwrap();
        assert!((g.order - 1.0).abs() < 1e-6, "{g:?}");
        assert!((g.type_ - 1.0).abs() < 1e-6, "{g:?}");
        assert!(g.diagnostics.envelope_excess.unwrap() <= 1e-9);
    }

    #[test]
    fn disk_sampling_equal_pair_is_flat() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[0.5, -1.0]]).unwrap();
        let g = order_type_from_disk_sampling(&a, &a, &default_radii(&a, &a), 64).unwrap();
        assert_eq!(g.order, 0.0, "{g:?}");
        assert!(g.has_flag("flat"));
    }

    #[test]
    fn disk_sampling_rejects_bad_grids() {
        let a = ComplexMatrix::identity(2);
        assert!(order_type_from_disk_sampling(&a, &a, &[1.0, 2.0, 4.0], 64).is_err());
        assert!(order_type_from_disk_sampling(&a, &a, &[1.0, 2.0, 4.0, 8.0, 16.0, 33.0], 64).is_err());
        assert!(order_type_from_disk_sampling(&a, &a, &default_radii(&a, &a), 16).is_err());
    }

    #[test]
    fn stirling_values() {
        // references from direct summation of ln k
        let direct = |n: usize| {
            let s: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
            n as f64 * (-s / n as f64).exp()
        };
        assert!((stirling_check(10).unwrap() - direct(10)).abs() < 1e-12);
        assert!((stirling_check(10).unwrap() - 2.208).abs() < 1e-3);
        assert!((stirling_check(100).unwrap() - 2.632).abs() < 1e-3);
        let mut prev = 0.0;
        for n in 10..=200 {
            let v = stirling_check(n).unwrap();
            assert!(v > prev && v < std::f64::consts::E);
            prev = v;
        }
        assert!(stirling_check(0).is_err());
    }
}
