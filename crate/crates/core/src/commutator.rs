//! Iterates of the generalized commutator `C_{a,b} x = a x - x b` applied to
//! the identity, and the spectral semidistance estimated from them.
//!
//! The recurrence `c_{n+1} = a c_n - c_n b` is advanced on a mantissa matrix
//! that is renormalized by powers of two after every step. Power-of-two
//! rescaling is exact, so pairs whose iterates vanish in exact arithmetic
//! (nilpotent differences built from dyadic entries) reach an exact floating
//! point zero instead of a rounding floor.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{self, operator_norm, ComplexMatrix, C64};

/// A step whose magnitude falls below this fraction of the magnitude of its
/// two products is declared an exact zero.
pub const EXACT_ZERO_RATIO: f64 = 1e-300;

/// Relative agreement between slope-fit and tail-max for `converged`.
pub const CONVERGENCE_RTOL: f64 = 0.05;

/// Minimum sequence length accepted by [`rho_sequence`].
pub const MIN_SEQUENCE_LEN: usize = 16;

/// Oracle coefficient threshold relative to the largest coefficient.
pub const ORACLE_COEFF_RTOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CommutatorTerm {
    /// `ln ||c_n||`, `-inf` for an exact zero.
    pub log_norm: f64,
    /// `c_n / ||c_n||`, the zero matrix for an exact zero.
    pub direction: ComplexMatrix,
    mantissa: ComplexMatrix,
    exponent: i32,
}

impl CommutatorTerm {
    /// `e^{log_norm} * direction`
    pub fn reconstruct(&self) -> ComplexMatrix {
        if self.log_norm == f64::NEG_INFINITY {
            return ComplexMatrix::zeros(self.direction.dim());
        }
        self.direction.scale_real(self.log_norm.exp())
    }

    /// `mantissa * 2^exponent`, exact whenever the value is representable.
    pub fn value(&self) -> ComplexMatrix {
        scale_pow2(&self.mantissa, self.exponent)
    }
}

#[derive(Clone, Debug)]
pub struct CommutatorSequence {
    pub terms: Vec<CommutatorTerm>,
    pub exact_zero_at: Option<usize>,
}

impl CommutatorSequence {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn log_norms(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.log_norm).collect()
    }
}

fn scale_pow2(m: &ComplexMatrix, exponent: i32) -> ComplexMatrix {
    if exponent == 0 {
        return m.clone();
    }
    // split so neither factor over/underflows on its own
    let half = exponent / 2;
    let s1 = 2f64.powi(half);
    let s2 = 2f64.powi(exponent - half);
    let inner = m.as_dmatrix().map(|z| (z * s1) * s2);
    ComplexMatrix::wrap(inner)
}

/// Binary exponent `k` with `x * 2^-k` in `[0.5, 1)`.
fn frexp_exponent(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut k = x.log2().floor() as i32 + 1;
    // correct for log2 rounding at exact powers of two
    while x * 2f64.powi(-k) >= 1.0 {
        k += 1;
    }
    while x * 2f64.powi(-k) < 0.5 {
        k -= 1;
    }
    k
}

fn make_term(mantissa: ComplexMatrix, exponent: i32) -> CommutatorTerm {
    let nrm = operator_norm(&mantissa);
    let direction = mantissa.scale_real(1.0 / nrm);
    CommutatorTerm {
        log_norm: exponent as f64 * std::f64::consts::LN_2 + nrm.ln(),
        direction,
        mantissa,
        exponent,
    }
}

fn zero_term(dim: usize) -> CommutatorTerm {
    CommutatorTerm {
        log_norm: f64::NEG_INFINITY,
        direction: ComplexMatrix::zeros(dim),
        mantissa: ComplexMatrix::zeros(dim),
        exponent: 0,
    }
}

/// Terms `c_0 = 1, c_1, ..., c_len` of `c_{n+1} = a c_n - c_n b`.
pub fn commutator_sequence(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    len: usize,
) -> Result<CommutatorSequence> {
    a.check_same_dim(b)?;
    if len == 0 {
        return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
    }
    let dim = a.dim();
    let mut terms = Vec::with_capacity(len + 1);
    terms.push(CommutatorTerm {
        log_norm: 0.0,
        direction: ComplexMatrix::identity(dim),
        mantissa: ComplexMatrix::identity(dim),
        exponent: 0,
    });
    let mut exact_zero_at = None;
    let mut w = ComplexMatrix::identity(dim);
    let mut exponent = 0_i32;
    for n in 1..=len {
        if exact_zero_at.is_some() {
            terms.push(zero_term(dim));
            continue;
        }
        let left = a * &w;
        let right = &w * b;
        let next = &left - &right;
        let m = next.max_abs();
        let running = left.max_abs() + right.max_abs();
        if m == 0.0 || m <= EXACT_ZERO_RATIO * running {
            exact_zero_at = Some(n);
            terms.push(zero_term(dim));
            continue;
        }
        let k = frexp_exponent(m);
        w = scale_pow2(&next, -k);
        exponent += k;
        terms.push(make_term(w.clone(), exponent));
    }
    Ok(CommutatorSequence {
        terms,
        exact_zero_at,
    })
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0_f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// `sum_k (-1)^k C(n,k) a^{n-k} x b^k`, evaluated literally.
pub fn binomial_commutator_power(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    x: &ComplexMatrix,
    n: u32,
) -> Result<ComplexMatrix> {
    a.check_same_dim(b)?;
    a.check_same_dim(x)?;
    let dim = a.dim();
    let mut apow = vec![ComplexMatrix::identity(dim)];
    let mut bpow = vec![ComplexMatrix::identity(dim)];
    for k in 1..=n as usize {
        apow.push(&apow[k - 1] * a);
        bpow.push(&bpow[k - 1] * b);
    }
    let mut sum = ComplexMatrix::zeros(dim);
    for k in 0..=n as usize {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let coeff = sign * binomial(n as u64, k as u64);
        let term = &(&apow[n as usize - k] * x) * &bpow[k];
        sum = &sum + &term.scale_real(coeff);
    }
    Ok(sum)
}

/// `C_{a,b}^n x` by direct recurrence, no rescaling.
pub fn commutator_power(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    x: &ComplexMatrix,
    n: u32,
) -> Result<ComplexMatrix> {
    a.check_same_dim(b)?;
    a.check_same_dim(x)?;
    let mut c = x.clone();
    for _ in 0..n {
        c = &(a * &c) - &(&c * b);
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoMethod {
    TailMax,
    SlopeFit,
    Oracle,
    ExactZero,
}

impl fmt::Display for RhoMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RhoMethod::TailMax => "tail-max",
            RhoMethod::SlopeFit => "slope-fit",
            RhoMethod::Oracle => "oracle",
            RhoMethod::ExactZero => "exact-zero",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub method: RhoMethod,
    /// Inclusive index range of the sequence used.
    pub window: (usize, usize),
    /// Fit residual (RMS, log units) or the oracle coefficient threshold.
    pub residual: f64,
    pub converged: bool,
    /// Tail-max value when the slope fit was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_max: Option<f64>,
}

impl RhoEstimate {
    pub fn is_exact_zero(&self) -> bool {
        self.method == RhoMethod::ExactZero
    }
}

/// Least-squares slope and RMS residual of `ys` against `xs`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Estimates `rho(a,b)` from a sequence already computed.
pub fn rho_from_sequence(seq: &CommutatorSequence) -> Result<RhoEstimate> {
    let len = seq.len() - 1;
    if let Some(m) = seq.exact_zero_at {
        return Ok(RhoEstimate {
            value: 0.0,
            method: RhoMethod::ExactZero,
            window: (0, m),
            residual: 0.0,
            converged: true,
            tail_max: None,
        });
    }
    if len < MIN_SEQUENCE_LEN {
        return Err(Error::InvalidArgument(format!(
            "rho estimation needs at least {MIN_SEQUENCE_LEN} terms, got {len}"
        )));
    }
    let start = len / 2;
    let xs: Vec<f64> = (start..=len).map(|n| n as f64).collect();
    let ys: Vec<f64> = (start..=len).map(|n| seq.terms[n].log_norm).collect();
    let (slope, _, rms) = linear_fit(&xs, &ys);
    let tail = (start.max(1)..=len)
        .map(|n| (seq.terms[n].log_norm / n as f64).exp())
        .fold(0.0_f64, f64::max);
    let fit = slope.exp();
    if !fit.is_finite() {
        return Ok(RhoEstimate {
            value: tail,
            method: RhoMethod::TailMax,
            window: (start, len),
            residual: f64::NAN,
            converged: false,
            tail_max: Some(tail),
        });
    }
    let scale = fit.max(tail);
    let converged = scale == 0.0 || (fit - tail).abs() <= CONVERGENCE_RTOL * scale;
    Ok(RhoEstimate {
        value: fit,
        method: RhoMethod::SlopeFit,
        window: (start, len),
        residual: rms,
        converged,
        tail_max: Some(tail),
    })
}

/// Finite-sequence estimate of `rho(a,b) = limsup ||C^n_{a,b} 1||^{1/n}`.
pub fn rho_sequence(a: &ComplexMatrix, b: &ComplexMatrix, len: usize) -> Result<RhoEstimate> {
    if len < MIN_SEQUENCE_LEN {
        return Err(Error::InvalidArgument(format!(
            "sequence length must be >= {MIN_SEQUENCE_LEN}, got {len}"
        )));
    }
    rho_from_sequence(&commutator_sequence(a, b, len)?)
}

/// Exact value for diagonalizable pairs.
///
/// With `a = P D_a P^{-1}` and `b = Q D_b Q^{-1}` the identity expands as
/// `sum_ij K_ij P e_i e_j^T Q^{-1}` with `K = P^{-1} Q`, and each rank-one
/// piece is an eigenvector of `C_{a,b}` with eigenvalue `lambda_i - mu_j`.
pub fn rho_oracle(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<RhoEstimate> {
    a.check_same_dim(b)?;
    let ea = matrix::eigendecompose(a)?;
    if !ea.is_diagonalizable() {
        return Err(Error::OracleUnavailable {
            which: "a",
            residual: ea.diag_residual,
        });
    }
    let eb = matrix::eigendecompose(b)?;
    if !eb.is_diagonalizable() {
        return Err(Error::OracleUnavailable {
            which: "b",
            residual: eb.diag_residual,
        });
    }
    Ok(oracle_from_decompositions(
        &ea.eigenvalues,
        &ea.basis_inverse,
        &eb.eigenvalues,
        &eb.basis,
    ))
}

fn oracle_from_decompositions(
    lambdas: &[C64],
    p_inv: &ComplexMatrix,
    mus: &[C64],
    q: &ComplexMatrix,
) -> RhoEstimate {
    let k = p_inv * q;
    let tau = ORACLE_COEFF_RTOL * k.max_abs();
    let n = lambdas.len();
    let mut value = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if k.get(i, j).norm() > tau {
                value = value.max((lambdas[i] - mus[j]).norm());
            }
        }
    }
    RhoEstimate {
        value,
        method: RhoMethod::Oracle,
        window: (0, 0),
        residual: tau,
        converged: true,
        tail_max: None,
    }
}

/// A directed estimate together with everything that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct RhoReport {
    pub estimate: RhoEstimate,
    pub sequence: RhoEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<RhoEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_error: Option<String>,
}

/// `rho(a,b)`: exact zero if the sequence vanishes, otherwise the oracle when
/// both matrices are diagonalizable, otherwise the sequence estimate.
pub fn rho(a: &ComplexMatrix, b: &ComplexMatrix, len: usize) -> Result<RhoReport> {
    let sequence = rho_sequence(a, b, len)?;
    if sequence.is_exact_zero() {
        return Ok(RhoReport {
            estimate: sequence.clone(),
            sequence,
            oracle: None,
            oracle_error: None,
        });
    }
    match rho_oracle(a, b) {
        Ok(o) => Ok(RhoReport {
            estimate: o.clone(),
            sequence,
            oracle: Some(o),
            oracle_error: None,
        }),
        Err(e @ Error::OracleUnavailable { .. }) => Ok(RhoReport {
            estimate: sequence.clone(),
            sequence,
            oracle: None,
            oracle_error: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub estimate: RhoEstimate,
    pub forward: RhoReport,
    pub backward: RhoReport,
}

/// `d_rho(a,b) = max(rho(a,b), rho(b,a))`.
pub fn d_rho(a: &ComplexMatrix, b: &ComplexMatrix, len: usize) -> Result<DistanceReport> {
    let forward = rho(a, b, len)?;
    let backward = rho(b, a, len)?;
    let (f, g) = (&forward.estimate, &backward.estimate);
    // on ties the non-exact direction wins, so exact-zero means both are
    let pick_g = g.value > f.value || (g.value == f.value && f.is_exact_zero());
    let mut estimate = if pick_g { g.clone() } else { f.clone() };
    estimate.converged = f.converged && g.converged;
    Ok(DistanceReport {
        estimate,
        forward,
        backward,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceVerdict {
    pub equivalent: bool,
    /// False when the estimate was below tolerance but did not converge.
    pub conclusive: bool,
    pub tolerance: f64,
    pub distance: DistanceReport,
}

pub fn is_quasinilpotent_equivalent(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    len: usize,
    tol: f64,
) -> Result<EquivalenceVerdict> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let distance = d_rho(a, b, len)?;
    let e = &distance.estimate;
    let below = e.value <= tol;
    let trusted = e.converged || e.is_exact_zero();
    Ok(EquivalenceVerdict {
        equivalent: below && trusted,
        conclusive: trusted || !below,
        tolerance: tol,
        distance,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityResidual {
    pub absolute: f64,
    pub scale: f64,
    pub relative: f64,
}

impl IdentityResidual {
    fn new(absolute: f64, scale: f64) -> Self {
        let scale = if scale > 0.0 { scale } else { 1.0 };
        IdentityResidual {
            absolute,
            scale,
            relative: absolute / scale,
        }
    }
}

/// Residual of `[C^n_{a,b} 1]* = (-1)^n C^n_{b*,a*} 1`, scaled by
/// `(||a|| + ||b||)^n`.
pub fn invol_identity_check(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    n: u32,
) -> Result<IdentityResidual> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let one = ComplexMatrix::identity(a.dim());
    let lhs = commutator_power(a, b, &one, n)?.adjoint();
    let mut rhs = commutator_power(&b.adjoint(), &a.adjoint(), &one, n)?;
    if n % 2 == 1 {
        rhs = -&rhs;
    }
    let scale = (operator_norm(a) + operator_norm(b)).powi(n as i32);
    Ok(IdentityResidual::new(operator_norm(&(&lhs - &rhs)), scale))
}

/// Largest `n` accepted by [`ind_identity_check`].
pub const IND_MAX_N: u32 = 12;

/// Residual of `(a^{-n})* a^{-n} = sum_j C(n,j) (C^j_{(a^{-1})*,a} 1) a^{-j}`,
/// scaled by the sum of the norms of the right-hand terms.
pub fn ind_identity_check(a: &ComplexMatrix, n: u32) -> Result<IdentityResidual> {
    if n > IND_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "n must be <= {IND_MAX_N}, got {n}"
        )));
    }
    let inv = matrix::mat_inverse(a)?;
    let u = inv.adjoint();
    let dim = a.dim();
    let inv_n = matrix::mat_pow(&inv, n as i64)?;
    let lhs = &inv_n.adjoint() * &inv_n;

    let mut c = ComplexMatrix::identity(dim);
    let mut inv_j = ComplexMatrix::identity(dim);
    let mut rhs = ComplexMatrix::zeros(dim);
    let mut scale = operator_norm(&lhs);
    let mut terms_scale = 0.0;
    for j in 0..=n {
        if j > 0 {
            c = &(&u * &c) - &(&c * a);
            inv_j = &inv_j * &inv;
        }
        let term = (&c * &inv_j).scale_real(binomial(n as u64, j as u64));
        terms_scale += operator_norm(&term);
        rhs = &rhs + &term;
    }
    scale = scale.max(terms_scale);
    Ok(IdentityResidual::new(operator_norm(&(&lhs - &rhs)), scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::mat_inverse;

    fn m(rows: &[&[f64]]) -> ComplexMatrix {
        ComplexMatrix::from_real_rows(rows).unwrap()
    }

    fn nil2() -> ComplexMatrix {
        m(&[&[0.0, 1.0], &[0.0, 0.0]])
    }

    #[test]
    fn nilpotent_sequence_truncates() {
        let s = commutator_sequence(&nil2(), &ComplexMatrix::zeros(2), 4).unwrap();
        assert_eq!(s.terms[0].log_norm, 0.0);
        assert!(s.terms[1].value().bit_eq(&nil2()));
        assert_eq!(s.exact_zero_at, Some(2));
        for t in &s.terms[2..] {
            assert_eq!(t.log_norm, f64::NEG_INFINITY);
            assert!(t.value().is_zero());
        }
    }

    #[test]
    fn idempotent_first_term() {
        let p = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let q = m(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let s = commutator_sequence(&p, &q, 1).unwrap();
        assert!(s.terms[1].value().bit_eq(&m(&[&[0.0, -1.0], &[0.0, 0.0]])));
        assert!(s.terms[1].log_norm.abs() < 1e-15);
    }

    #[test]
    fn jordan_against_identity_vanishes_at_two() {
        let j = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let s = commutator_sequence(&j, &ComplexMatrix::identity(2), 6).unwrap();
        assert!(s.terms[1].value().bit_eq(&nil2()));
        assert_eq!(s.exact_zero_at, Some(2));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let r = commutator_sequence(&nil2(), &ComplexMatrix::zeros(3), 4);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn reconstruction_matches_plain_recurrence() {
        let a = m(&[&[0.3, -1.2, 0.5], &[0.7, 0.1, -0.4], &[1.5, 0.2, -0.9]]);
        let b = m(&[&[-0.2, 0.4, 1.0], &[0.6, 1.3, 0.0], &[-1.1, 0.8, 0.25]]);
        let s = commutator_sequence(&a, &b, 20).unwrap();
        let one = ComplexMatrix::identity(3);
        for n in 1..=20u32 {
            let plain = commutator_power(&a, &b, &one, n).unwrap();
            let recon = s.terms[n as usize].reconstruct();
            let err = operator_norm(&(&plain - &recon)) / operator_norm(&plain);
            assert!(err < 1e-12, "n={n} err={err}");
        }
    }

    #[test]
    fn rho_sequence_examples() {
        let r = rho_sequence(&nil2(), &ComplexMatrix::zeros(2), 64).unwrap();
        assert_eq!(r.method, RhoMethod::ExactZero);
        assert_eq!(r.value, 0.0);

        let a = ComplexMatrix::from_real_diagonal(&[3.0, 1.0]);
        let b = ComplexMatrix::identity(2);
        let r = rho_sequence(&a, &b, 64).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10, "{r:?}");
        assert!(r.converged);

        let a = ComplexMatrix::from_real_diagonal(&[0.0, 2.0]);
        let b = m(&[&[1.0, 1.0], &[0.0, -1.0]]);
        let r = rho_sequence(&a, &b, 128).unwrap();
        assert!((r.value - 3.0).abs() < 0.05 * 3.0, "{r:?}");
    }

    #[test]
    fn rho_sequence_rejects_short() {
        assert!(rho_sequence(&nil2(), &nil2(), 8).is_err());
    }

    #[test]
    fn oracle_examples() {
        let a = ComplexMatrix::from_real_diagonal(&[0.0, 2.0]);
        let b = m(&[&[1.0, 1.0], &[0.0, -1.0]]);
        let r = rho_oracle(&a, &b).unwrap();
        assert!((r.value - 3.0).abs() < 1e-12);
        assert_eq!(r.method, RhoMethod::Oracle);

        let a = ComplexMatrix::from_real_diagonal(&[1.0, -1.0]);
        let b = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!((rho_oracle(&a, &b).unwrap().value - 2.0).abs() < 1e-12);

        let c = m(&[&[0.3, -1.2, 0.5], &[0.7, 0.1, -0.4], &[1.5, 0.2, -0.9]]);
        assert_eq!(rho_oracle(&c, &c).unwrap().value, 0.0);
    }

    #[test]
    fn oracle_refuses_defective() {
        let j = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let r = rho_oracle(&j, &ComplexMatrix::identity(2));
        assert!(matches!(r, Err(Error::OracleUnavailable { which: "a", .. })));
    }

    #[test]
    fn d_rho_examples() {
        let a = ComplexMatrix::from_real_diagonal(&[3.0, 1.0]);
        let b = ComplexMatrix::identity(2);
        assert!((d_rho(&a, &b, 64).unwrap().estimate.value - 2.0).abs() < 1e-12);

        let a = ComplexMatrix::from_real_diagonal(&[0.0, 2.0]);
        let b = m(&[&[1.0, 1.0], &[0.0, -1.0]]);
        let d = d_rho(&a, &b, 64).unwrap();
        assert!((d.forward.estimate.value - 3.0).abs() < 1e-12);
        assert!((d.backward.estimate.value - 3.0).abs() < 1e-12);

        let d = d_rho(&nil2(), &nil2().transpose(), 64).unwrap();
        assert!(d.estimate.is_exact_zero());
        assert_eq!(d.estimate.value, 0.0);
    }

    #[test]
    fn equivalence_examples() {
        let v = is_quasinilpotent_equivalent(&nil2(), &ComplexMatrix::zeros(2), 64, 1e-9).unwrap();
        assert!(v.equivalent);

        let p = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let q = m(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let v = is_quasinilpotent_equivalent(&p, &q, 64, 1e-9).unwrap();
        assert!(!v.equivalent);

        // blocks (1 I + N1) + (3 I) against (1 I) + (3 I + M2)
        let a = m(&[
            &[1.0, 1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 3.0, 0.0],
            &[0.0, 0.0, 0.0, 3.0],
        ]);
        let b = m(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 3.0, 2.0],
            &[0.0, 0.0, 0.0, 3.0],
        ]);
        let v = is_quasinilpotent_equivalent(&a, &b, 64, 1e-9).unwrap();
        assert!(v.equivalent, "{:?}", v.distance.estimate);
        assert!(v.distance.estimate.is_exact_zero());
    }

    #[test]
    fn invol_examples() {
        let a = m(&[&[0.3, -1.2], &[0.7, 0.1]]);
        let b = m(&[&[-0.2, 0.4], &[0.6, 1.3]]);
        assert_eq!(invol_identity_check(&a, &b, 1).unwrap().absolute, 0.0);
        assert!(invol_identity_check(&a, &b, 2).unwrap().relative < 1e-12);

        let h = m(&[&[2.0, 1.0], &[1.0, -1.0]]);
        let k = m(&[&[0.0, 3.0], &[3.0, 1.0]]);
        let one = ComplexMatrix::identity(2);
        let lhs = commutator_power(&h, &k, &one, 3).unwrap().adjoint();
        let rhs = -&commutator_power(&k, &h, &one, 3).unwrap();
        assert!(operator_norm(&(&lhs - &rhs)) < 1e-12);
    }

    #[test]
    fn ind_examples() {
        let a = ComplexMatrix::from_real_diagonal(&[2.0]);
        let r = ind_identity_check(&a, 3).unwrap();
        assert!(r.absolute <= 1e-15, "{r:?}");

        let r = ind_identity_check(&ComplexMatrix::identity(3), 5).unwrap();
        assert_eq!(r.absolute, 0.0);

        assert!(matches!(
            ind_identity_check(&nil2(), 2),
            Err(Error::Singular { .. })
        ));
        assert!(ind_identity_check(&ComplexMatrix::identity(2), 13).is_err());
    }

    #[test]
    fn idempotent_odd_terms_equal_difference_norm() {
        let s = m(&[&[1.0, 1.0, 0.0], &[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0]]);
        let t = m(&[&[2.0, 0.0, 1.0], &[1.0, 1.0, 0.0], &[0.0, 3.0, 1.0]]);
        let d = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0]);
        let p = &(&s * &d) * &mat_inverse(&s).unwrap();
        let q = &(&t * &d) * &mat_inverse(&t).unwrap();
        let diff = operator_norm(&(&p - &q));
        let seq = commutator_sequence(&p, &q, 15).unwrap();
        for n in (1..=15).step_by(2) {
            let rel = (seq.terms[n].log_norm.exp() - diff).abs() / diff;
            assert!(rel < 1e-12, "n={n} rel={rel}");
        }
    }
}
