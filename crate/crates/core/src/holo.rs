//! Holomorphic functional calculus by contour quadrature.
//!
//! `f(a) = (1/2 pi i) \oint f(z) (z - a)^{-1} dz` over disjoint circles, each
//! discretized by the trapezoidal rule. For an integrand analytic in an
//! annulus around the circle the rule converges geometrically, so the work
//! here is mostly in choosing circles that keep every eigenvalue and every
//! singularity of `f` well away from the nodes.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::commutator::{rho, RhoEstimate};
use crate::error::{Error, Result};
use crate::matrix::{eigenvalues, operator_norm, ComplexMatrix, C64, ZERO};

pub const DEFAULT_NODES: usize = 128;
pub const MIN_NODES: usize = 16;

/// Required gap between a circle and any eigenvalue or singularity, as a
/// fraction of the radius.
pub const CONTOUR_MARGIN: f64 = 0.1;

/// Eigenvalues closer than `DEFAULT_CLUSTER_RTOL * (1 + ||a||)` share a
/// circle. Large enough to absorb the `eps^{1/k}` splitting of small Jordan
/// blocks.
pub const DEFAULT_CLUSTER_RTOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: C64,
    pub radius: f64,
    pub nodes: usize,
}

impl Circle {
    pub fn new(center: C64, radius: f64) -> Self {
        Circle {
            center,
            radius,
            nodes: DEFAULT_NODES,
        }
    }

    pub fn with_nodes(self, nodes: usize) -> Self {
        Circle { nodes, ..self }
    }

    fn node(&self, k: usize) -> (C64, C64) {
        let w = C64::from_polar(1.0, TAU * k as f64 / self.nodes as f64);
        (self.center + w * self.radius, w * self.radius)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourSpec {
    pub circles: Vec<Circle>,
}

impl ContourSpec {
    pub fn with_nodes(&self, nodes: usize) -> Self {
        ContourSpec {
            circles: self.circles.iter().map(|c| c.with_nodes(nodes)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FunctionSpec {
    /// `sum_k c_k z^k`
    Polynomial(Vec<C64>),
    Exp,
    /// Cut along the negative real axis.
    PrincipalLog,
    /// Cut along the ray at angle `theta`, `arg z` in `(theta - 2 pi, theta]`.
    RotatedLog(f64),
    /// `z + c/z`, pole at 0.
    Rational(f64),
    /// `z^k`; negative `k` has a pole at 0.
    Power(i32),
}

fn fmt_c(z: C64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

/// `arg z` in `(cut - 2 pi, cut]`.
fn branch_arg(z: C64, cut: f64) -> f64 {
    let phi = z.arg();
    phi - TAU * ((phi - cut) / TAU).ceil()
}

/// `(e^d - 1)/d`
fn exprel(d: C64) -> C64 {
    if d.norm() < 0.1 {
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..20 {
            term = term * d / k as f64;
            sum += term;
        }
        sum
    } else {
        (d.exp() - 1.0) / d
    }
}

/// `ln(1 + u)/u` on the principal branch.
fn lnrel(u: C64) -> C64 {
    if u.norm() < 0.1 {
        let mut sum = ZERO;
        let mut p = C64::new(1.0, 0.0);
        for k in 0..30 {
            sum += p / (k + 1) as f64;
            p *= -u;
        }
        sum
    } else {
        (u + 1.0).ln() / u
    }
}

/// `sum_{j<m} x^j y^{m-1-j}`, the divided difference of `z^m`.
fn monomial_dd(x: C64, y: C64, m: u32) -> C64 {
    let mut sum = ZERO;
    let mut xp = C64::new(1.0, 0.0);
    for j in 0..m {
        sum += xp * y.powu(m - 1 - j);
        xp *= x;
    }
    sum
}

impl FunctionSpec {
    pub fn principal_log() -> Self {
        FunctionSpec::PrincipalLog
    }

    pub fn is_log(&self) -> bool {
        matches!(self, FunctionSpec::PrincipalLog | FunctionSpec::RotatedLog(_))
    }

    fn cut_angle(&self) -> Option<f64> {
        match self {
            FunctionSpec::PrincipalLog => Some(PI),
            FunctionSpec::RotatedLog(t) => Some(*t),
            _ => None,
        }
    }

    fn has_pole_at_zero(&self) -> bool {
        match self {
            FunctionSpec::Rational(c) => *c != 0.0,
            FunctionSpec::Power(k) => *k < 0,
            _ => false,
        }
    }

    /// Distance from `z` to the poles and cut of `f`; infinite for entire `f`.
    pub fn singular_distance(&self, z: C64) -> f64 {
        if let Some(theta) = self.cut_angle() {
            let w = z * C64::from_polar(1.0, -theta);
            return if w.re <= 0.0 { z.norm() } else { w.im.abs() };
        }
        if self.has_pole_at_zero() {
            return z.norm();
        }
        f64::INFINITY
    }

    /// Human-readable description of the singular set.
    pub fn singularity_label(&self) -> Option<String> {
        if let Some(theta) = self.cut_angle() {
            return Some(format!("branch cut at angle {theta}"));
        }
        self.has_pole_at_zero().then(|| "pole at 0".to_string())
    }

    fn check_point(&self, z: C64) -> Result<()> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::OutsideDomain {
                point: fmt_c(z),
                why: "not finite".into(),
            });
        }
        if self.singular_distance(z) <= 1e-14 * (1.0 + z.norm()) {
            return Err(Error::OutsideDomain {
                point: fmt_c(z),
                why: self.singularity_label().unwrap_or_default(),
            });
        }
        Ok(())
    }

    /// Evaluate without checking the domain; points on a cut take the value
    /// on the `arg = theta` side.
    fn value(&self, z: C64) -> C64 {
        match self {
            FunctionSpec::Polynomial(c) => c.iter().rev().fold(ZERO, |acc, &ck| acc * z + ck),
            FunctionSpec::Exp => z.exp(),
            FunctionSpec::PrincipalLog => z.ln(),
            FunctionSpec::RotatedLog(t) => C64::new(z.norm().ln(), branch_arg(z, *t)),
            FunctionSpec::Rational(c) => z + *c / z,
            FunctionSpec::Power(k) => z.powi(*k),
        }
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        self.check_point(z)?;
        Ok(self.value(z))
    }

    pub fn derivative(&self, z: C64) -> Result<C64> {
        self.check_point(z)?;
        Ok(match self {
            FunctionSpec::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(ZERO, |acc, (k, &ck)| acc * z + ck * k as f64),
            FunctionSpec::Exp => z.exp(),
            FunctionSpec::PrincipalLog | FunctionSpec::RotatedLog(_) => z.inv(),
            FunctionSpec::Rational(c) => C64::new(1.0, 0.0) - *c / (z * z),
            FunctionSpec::Power(k) => {
                if *k == 0 {
                    ZERO
                } else {
                    z.powi(k - 1) * *k as f64
                }
            }
        })
    }

    /// `(f(x) - f(y))/(x - y)`, or `f'(y)` when `x == y`, evaluated without
    /// cancellation for nearby points.
    pub fn divided_difference(&self, x: C64, y: C64) -> Result<C64> {
        self.check_point(x)?;
        self.check_point(y)?;
        if x == y {
            return self.derivative(y);
        }
        let d = x - y;
        Ok(match self {
            FunctionSpec::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &ck)| ck * monomial_dd(x, y, k as u32))
                .sum(),
            FunctionSpec::Exp => y.exp() * exprel(d),
            FunctionSpec::PrincipalLog | FunctionSpec::RotatedLog(_) => {
                if d.norm() < 0.1 * y.norm() {
                    lnrel(d / y) / y
                } else {
                    (self.value(x) - self.value(y)) / d
                }
            }
            FunctionSpec::Rational(c) => C64::new(1.0, 0.0) - *c / (x * y),
            FunctionSpec::Power(k) => {
                let m = k.unsigned_abs();
                let dd = monomial_dd(x, y, m);
                if *k >= 0 {
                    dd
                } else {
                    -dd / (x.powu(m) * y.powu(m))
                }
            }
        })
    }
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::Polynomial(c) => {
                let parts: Vec<String> = c
                    .iter()
                    .map(|z| if z.im == 0.0 { z.re.to_string() } else { fmt_c(*z) })
                    .collect();
                write!(f, "poly:{}", parts.join(","))
            }
            FunctionSpec::Exp => f.write_str("exp"),
            FunctionSpec::PrincipalLog => f.write_str("log"),
            FunctionSpec::RotatedLog(t) => write!(f, "log:{t}"),
            FunctionSpec::Rational(c) if *c == 1.0 => f.write_str("rational:plus"),
            FunctionSpec::Rational(c) if *c == -1.0 => f.write_str("rational:minus"),
            FunctionSpec::Rational(c) => write!(f, "rational:{c}"),
            FunctionSpec::Power(k) => write!(f, "pow:{k}"),
        }
    }
}

impl FromStr for FunctionSpec {
    type Err = Error;

    /// `exp | log[:angle] | poly:c0,c1,... | rational:plus | rational:minus | pow:k`
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidArgument(format!("function '{s}': {why}"));
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("exp", None) => Ok(FunctionSpec::Exp),
            ("log", None) => Ok(FunctionSpec::PrincipalLog),
            ("log", Some(a)) => {
                let t: f64 = a.trim().parse().map_err(|_| bad("angle is not a number"))?;
                if !t.is_finite() {
                    return Err(bad("angle must be finite"));
                }
                Ok(FunctionSpec::RotatedLog(t))
            }
            ("poly", Some(a)) => {
                let c = a
                    .split(',')
                    .map(|v| C64::from_str(v.trim()))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("coefficients must be real or complex numbers like 1-2i"))?;
                if c.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(bad("coefficients must be finite"));
                }
                Ok(FunctionSpec::Polynomial(c))
            }
            ("rational", Some("plus")) => Ok(FunctionSpec::Rational(1.0)),
            ("rational", Some("minus")) => Ok(FunctionSpec::Rational(-1.0)),
            ("pow", Some(a)) => a
                .trim()
                .parse()
                .map(FunctionSpec::Power)
                .map_err(|_| bad("exponent must be an integer")),
            _ => Err(bad("expected exp, log[:angle], poly:c0,c1,..., rational:plus|minus or pow:k")),
        }
    }
}

/// Single-linkage groups of eigenvalue indices, ordered by first member.
pub fn cluster_eigenvalues(eigs: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = eigs.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (eigs[i] - eigs[j]).norm() <= tol {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, g)) => g.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

fn cluster_mean(eigs: &[C64], members: &[usize]) -> C64 {
    members.iter().map(|&i| eigs[i]).sum::<C64>() / members.len() as f64
}

/// Smallest distance between eigenvalues of different clusters.
fn cluster_gap(eigs: &[C64], clusters: &[Vec<usize>]) -> f64 {
    let mut gap = f64::INFINITY;
    for (i, ci) in clusters.iter().enumerate() {
        for cj in &clusters[i + 1..] {
            for &p in ci {
                for &q in cj {
                    gap = gap.min((eigs[p] - eigs[q]).norm());
                }
            }
        }
    }
    gap
}

/// One circle per cluster: radius `gap/3` (or 1 for a single cluster),
/// shrunk to half the distance from the center to the singular set of `f`.
fn circles_for_clusters(
    eigs: &[C64],
    clusters: &[Vec<usize>],
    f: Option<&FunctionSpec>,
) -> ContourSpec {
    let base = if clusters.len() > 1 {
        cluster_gap(eigs, clusters) / 3.0
    } else {
        1.0
    };
    let circles = clusters
        .iter()
        .map(|members| {
            let center = cluster_mean(eigs, members);
            let mut radius = base;
            if let Some(f) = f {
                radius = radius.min(0.5 * f.singular_distance(center));
            }
            Circle::new(center, radius)
        })
        .collect();
    ContourSpec { circles }
}

fn cluster_tol_for(a: &ComplexMatrix) -> f64 {
    DEFAULT_CLUSTER_RTOL * (1.0 + operator_norm(a))
}

/// Default contour for `f(a)`.
pub fn auto_contour(f: &FunctionSpec, a: &ComplexMatrix) -> Result<ContourSpec> {
    let eigs = eigenvalues(a)?;
    for &z in &eigs {
        f.check_point(z)?;
    }
    let clusters = cluster_eigenvalues(&eigs, cluster_tol_for(a));
    let contour = circles_for_clusters(&eigs, &clusters, Some(f));
    validate_contour(&contour, &eigs, Some(f))?;
    Ok(contour)
}

/// Checks node counts, disjointness, enclosure and margins of every
/// eigenvalue, and that poles and cuts of `f` stay outside every circle by
/// the same margin.
pub fn validate_contour(contour: &ContourSpec, eigs: &[C64], f: Option<&FunctionSpec>) -> Result<()> {
    if contour.circles.is_empty() {
        return Err(Error::InvalidArgument("contour has no circles".into()));
    }
    for c in &contour.circles {
        if c.nodes < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "circle needs at least {MIN_NODES} nodes, got {}",
                c.nodes
            )));
        }
        if !(c.radius > 0.0 && c.radius.is_finite() && c.center.re.is_finite() && c.center.im.is_finite()) {
            return Err(Error::InvalidArgument("circle radius must be positive and finite".into()));
        }
    }
    for (i, ci) in contour.circles.iter().enumerate() {
        for (j, cj) in contour.circles.iter().enumerate().skip(i + 1) {
            if (ci.center - cj.center).norm() <= ci.radius + cj.radius {
                return Err(Error::OverlappingCircles { first: i, second: j });
            }
        }
    }
    if let Some(f) = f {
        for &z in eigs {
            f.check_point(z)?;
        }
    }
    for &z in eigs {
        let mut enclosed = false;
        for c in &contour.circles {
            let d = (z - c.center).norm();
            if (d - c.radius).abs() < CONTOUR_MARGIN * c.radius {
                return Err(Error::ContourMargin {
                    eigenvalue: fmt_c(z),
                    distance: (d - c.radius).abs(),
                    radius: c.radius,
                });
            }
            enclosed |= d < c.radius;
        }
        if !enclosed {
            return Err(Error::NotEnclosed { eigenvalue: fmt_c(z) });
        }
    }
    if let Some(f) = f {
        for (i, c) in contour.circles.iter().enumerate() {
            if f.singular_distance(c.center) < (1.0 + CONTOUR_MARGIN) * c.radius {
                return Err(Error::SingularityInContour {
                    what: f.singularity_label().unwrap_or_default(),
                    circle: i,
                });
            }
        }
    }
    Ok(())
}

/// Trapezoidal sum over the circles; per-node terms are computed in
/// parallel and added in node order.
fn contour_integral<G>(a: &ComplexMatrix, circles: &[Circle], g: G) -> Result<ComplexMatrix>
where
    G: Fn(C64) -> C64 + Sync,
{
    let n = a.dim();
    let mut total = nalgebra::DMatrix::<C64>::zeros(n, n);
    for c in circles {
        let terms: Vec<Option<nalgebra::DMatrix<C64>>> = (0..c.nodes)
            .into_par_iter()
            .map(|k| {
                let (z, dz) = c.node(k);
                let shifted = nalgebra::DMatrix::<C64>::identity(n, n) * z - a.as_dmatrix();
                shifted.lu().try_inverse().map(|r| r * (g(z) * dz))
            })
            .collect();
        let mut sum = nalgebra::DMatrix::<C64>::zeros(n, n);
        for t in terms {
            sum += t.ok_or(Error::Singular { ratio: 0.0 })?;
        }
        total += sum / C64::new(c.nodes as f64, 0.0);
    }
    ComplexMatrix::try_from_dmatrix(total)
}

/// `f(a)` by quadrature on `contour`.
pub fn holo_apply(f: &FunctionSpec, a: &ComplexMatrix, contour: &ContourSpec) -> Result<ComplexMatrix> {
    let eigs = eigenvalues(a)?;
    validate_contour(contour, &eigs, Some(f))?;
    contour_integral(a, &contour.circles, |z| f.value(z))
}

/// `f(a)` on the [`auto_contour`].
pub fn apply_function(f: &FunctionSpec, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let contour = auto_contour(f, a)?;
    holo_apply(f, a, &contour)
}

#[derive(Clone, Debug)]
pub struct SpectralCluster {
    /// Mean of the clustered eigenvalues.
    pub eigenvalue: C64,
    pub multiplicity: usize,
    pub idempotent: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub clusters: Vec<SpectralCluster>,
    /// `a - sum_j lambda_j p_j`
    pub remainder: ComplexMatrix,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdempotentResiduals {
    /// `max_j ||p_j^2 - p_j||`
    pub square: f64,
    /// `||sum_j p_j - 1||`
    pub sum: f64,
    /// `max_{i != j} ||p_i p_j||`
    pub cross: f64,
    /// `max_j ||a p_j - p_j a||`
    pub commute: f64,
}

impl SpectralDecomposition {
    pub fn residuals(&self, a: &ComplexMatrix) -> IdempotentResiduals {
        let n = a.dim();
        let mut r = IdempotentResiduals {
            square: 0.0,
            sum: 0.0,
            cross: 0.0,
            commute: 0.0,
        };
        let mut total = ComplexMatrix::zeros(n);
        for (i, ci) in self.clusters.iter().enumerate() {
            let p = &ci.idempotent;
            r.square = r.square.max(operator_norm(&(&(p * p) - p)));
            r.commute = r.commute.max(operator_norm(&(&(a * p) - &(p * a))));
            for (j, cj) in self.clusters.iter().enumerate() {
                if i != j {
                    r.cross = r.cross.max(operator_norm(&(p * &cj.idempotent)));
                }
            }
            total = &total + p;
        }
        r.sum = operator_norm(&(&total - &ComplexMatrix::identity(n)));
        r
    }
}

/// Riesz idempotents for eigenvalue clusters of `a` and the quasinilpotent
/// remainder.
pub fn riesz_idempotents(a: &ComplexMatrix, cluster_tol: f64) -> Result<SpectralDecomposition> {
    if !(cluster_tol > 0.0 && cluster_tol.is_finite()) {
        return Err(Error::InvalidArgument("cluster tolerance must be positive".into()));
    }
    let eigs = eigenvalues(a)?;
    let groups = cluster_eigenvalues(&eigs, cluster_tol);
    let gap = cluster_gap(&eigs, &groups);
    if gap <= 4.0 * cluster_tol {
        return Err(Error::ClusterSeparation { gap, tol: cluster_tol });
    }
    let contour = circles_for_clusters(&eigs, &groups, None);
    validate_contour(&contour, &eigs, None)?;

    let mut clusters = Vec::with_capacity(groups.len());
    let mut remainder = a.clone();
    for (members, circle) in groups.iter().zip(&contour.circles) {
        let p = contour_integral(a, std::slice::from_ref(circle), |_| C64::new(1.0, 0.0))?;
        let lambda = cluster_mean(&eigs, members);
        remainder = &remainder - &p.scale(lambda);
        clusters.push(SpectralCluster {
            eigenvalue: lambda,
            multiplicity: members.len(),
            idempotent: p,
        });
    }
    Ok(SpectralDecomposition { clusters, remainder })
}

/// [`riesz_idempotents`] with the default scale-relative cluster tolerance.
pub fn riesz_idempotents_default(a: &ComplexMatrix) -> Result<SpectralDecomposition> {
    riesz_idempotents(a, cluster_tol_for(a))
}

/// Logarithm of `a` on the given branch.
pub fn matrix_log(a: &ComplexMatrix, branch: &FunctionSpec) -> Result<ComplexMatrix> {
    if !branch.is_log() {
        return Err(Error::InvalidArgument(format!("{branch} is not a logarithm")));
    }
    let eigs = eigenvalues(a)?;
    let floor = 1e-8 * operator_norm(a);
    for &z in &eigs {
        if z.norm() <= floor {
            return Err(Error::OutsideDomain {
                point: fmt_c(z),
                why: "zero eigenvalue".into(),
            });
        }
    }
    apply_function(branch, a)
}

/// Cut angle whose ray stays farthest from all `points`.
pub fn choose_cut_angle(points: &[C64]) -> f64 {
    let dist = |theta: f64| {
        let f = FunctionSpec::RotatedLog(theta);
        points
            .iter()
            .map(|&z| f.singular_distance(z))
            .fold(f64::INFINITY, f64::min)
    };
    // gap bisectors are the natural candidates; a fine grid covers the rest
    let mut args: Vec<f64> = points.iter().filter(|z| z.norm() > 0.0).map(|z| z.arg()).collect();
    args.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = (0..args.len())
        .map(|i| {
            let next = if i + 1 < args.len() { args[i + 1] } else { args[0] + TAU };
            0.5 * (args[i] + next)
        })
        .collect();
    candidates.extend((0..1024).map(|k| -PI + TAU * k as f64 / 1024.0));
    candidates.push(PI);
    let mut best = (PI, f64::NEG_INFINITY);
    for t in candidates {
        let t = branch_arg(C64::from_polar(1.0, t), PI);
        let d = dist(t);
        if d > best.1 {
            best = (t, d);
        }
    }
    best.0
}

/// `sup_{w in sigma_b} max(|f'(w)|, sup_{l in sigma_a} |f[l, w]|)`.
pub fn fct_bound(f: &FunctionSpec, sigma_a: &[C64], sigma_b: &[C64]) -> Result<f64> {
    let mut bound = 0.0_f64;
    for &w in sigma_b {
        bound = bound.max(f.derivative(w)?.norm());
        for &l in sigma_a {
            bound = bound.max(f.divided_difference(l, w)?.norm());
        }
    }
    Ok(bound)
}

#[derive(Clone, Debug, Serialize)]
pub struct FctCheck {
    /// `rho(f(a), f(b))`
    pub lhs: f64,
    /// `fct_bound * rho(a, b)`
    pub rhs: f64,
    pub margin: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub holds: bool,
    /// Both estimates are oracle or exact-zero values, or converged.
    pub conclusive: bool,
    pub lhs_estimate: RhoEstimate,
    pub rho_estimate: RhoEstimate,
}

/// Compares `rho(f(a), f(b))` with the divided-difference bound times
/// `rho(a, b)`.
pub fn fct_inequality_check(
    f: &FunctionSpec,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    len: usize,
) -> Result<FctCheck> {
    a.check_same_dim(b)?;
    let fa = apply_function(f, a)?;
    let fb = apply_function(f, b)?;
    let bound = fct_bound(f, &eigenvalues(a)?, &eigenvalues(b)?)?;
    let lhs_estimate = rho(&fa, &fb, len)?.estimate;
    let rho_estimate = rho(a, b, len)?.estimate;
    let lhs = lhs_estimate.value;
    let rhs = bound * rho_estimate.value;
    let margin = rhs - lhs;
    let tolerance = 1e-8 * (1.0 + rhs);
    Ok(FctCheck {
        lhs,
        rhs,
        margin,
        bound,
        tolerance,
        holds: margin >= -tolerance,
        conclusive: lhs_estimate.converged && rho_estimate.converged,
        lhs_estimate,
        rho_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::mat_exp;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(x: &ComplexMatrix, y: &ComplexMatrix, tol: f64) -> bool {
        operator_norm(&(x - y)) <= tol * (1.0 + operator_norm(y))
    }

    fn nil() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap()
    }

    #[test]
    fn exp_of_nilpotent() {
        let contour = ContourSpec {
            circles: vec![Circle::new(ZERO, 1.0)],
        };
        let e = holo_apply(&FunctionSpec::Exp, &nil(), &contour).unwrap();
        let want = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert!(close(&e, &want, 1e-13), "{e:?}");
    }

    #[test]
    fn square_of_diagonal() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 2.0]);
        let contour = ContourSpec {
            circles: vec![Circle::new(c(1.0, 0.0), 0.3), Circle::new(c(2.0, 0.0), 0.3)],
        };
        let r = holo_apply(&FunctionSpec::Power(2), &a, &contour).unwrap();
        assert!(close(&r, &ComplexMatrix::from_real_diagonal(&[1.0, 4.0]), 1e-13));
    }

    #[test]
    fn rational_vanishes_at_plus_minus_i() {
        let a = ComplexMatrix::from_diagonal(&[c(0.0, 1.0), c(0.0, -1.0)]);
        let r = apply_function(&FunctionSpec::Rational(1.0), &a).unwrap();
        assert!(r.max_abs() < 1e-13, "{r:?}");
    }

    #[test]
    fn contour_errors() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 2.0]);
        let one = |cen: f64, r: f64| Circle::new(c(cen, 0.0), r);
        let f = FunctionSpec::Exp;
        let spec = |cs: Vec<Circle>| ContourSpec { circles: cs };
        assert!(matches!(
            holo_apply(&f, &a, &spec(vec![one(1.0, 0.3)])),
            Err(Error::NotEnclosed { .. })
        ));
        assert!(matches!(
            holo_apply(&f, &a, &spec(vec![one(1.0, 0.6), one(2.0, 0.6)])),
            Err(Error::OverlappingCircles { .. })
        ));
        assert!(matches!(
            holo_apply(&f, &a, &spec(vec![one(1.5, 0.52)])),
            Err(Error::ContourMargin { .. })
        ));
        let log = FunctionSpec::PrincipalLog;
        assert!(matches!(
            holo_apply(&log, &a, &spec(vec![one(1.5, 1.4)])),
            Err(Error::SingularityInContour { .. })
        ));
        assert!(holo_apply(&f, &a, &spec(vec![one(1.5, 1.0).with_nodes(8)])).is_err());
    }

    #[test]
    fn matches_eigendecomposition() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, -1.0]]).unwrap();
        let e = crate::matrix::eigendecompose(&a).unwrap();
        let h = apply_function(&FunctionSpec::Exp, &a).unwrap();
        assert!(close(&h, &e.apply(|z| z.exp()), 1e-12));
        assert!(close(&h, &mat_exp(&a), 1e-12));
    }

    #[test]
    fn node_doubling_is_stable() {
        let a = ComplexMatrix::from_real_rows(&[&[0.3, 1.0, 0.0], &[0.0, 2.0, 0.5], &[0.1, 0.0, -1.0]]).unwrap();
        let f = FunctionSpec::Polynomial(vec![c(1.0, 0.0), c(-2.0, 0.0), c(0.5, 1.0)]);
        let contour = auto_contour(&f, &a).unwrap();
        let x = holo_apply(&f, &a, &contour).unwrap();
        let y = holo_apply(&f, &a, &contour.with_nodes(256)).unwrap();
        assert!(operator_norm(&(&x - &y)) <= 1e-10 * operator_norm(&y));
        let direct = &(&ComplexMatrix::identity(3) - &a.scale_real(2.0)) + &(&a * &a).scale(c(0.5, 1.0));
        assert!(close(&x, &direct, 1e-10));
    }

    #[test]
    fn riesz_diagonal() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 5.0]);
        let d = riesz_idempotents(&a, 1e-6).unwrap();
        assert_eq!(d.clusters.len(), 2);
        assert!(close(&d.clusters[0].idempotent, &ComplexMatrix::from_real_diagonal(&[1.0, 1.0, 0.0]), 1e-12));
        assert!(close(&d.clusters[1].idempotent, &ComplexMatrix::from_real_diagonal(&[0.0, 0.0, 1.0]), 1e-12));
        assert!(d.remainder.max_abs() < 1e-12);
    }

    #[test]
    fn riesz_upper_triangular() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 5.0]]).unwrap();
        let d = riesz_idempotents(&a, 1e-6).unwrap();
        let p1 = ComplexMatrix::from_real_rows(&[&[1.0, -0.25], &[0.0, 0.0]]).unwrap();
        assert!(close(&d.clusters[0].idempotent, &p1, 1e-12));
        let r = d.residuals(&a);
        assert!(r.square < 1e-12 && r.sum < 1e-12 && r.cross < 1e-12 && r.commute < 1e-12);
    }

    #[test]
    fn riesz_jordan_block() {
        let j = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let d = riesz_idempotents_default(&j).unwrap();
        assert_eq!(d.clusters.len(), 1);
        assert!(close(&d.clusters[0].idempotent, &ComplexMatrix::identity(2), 1e-12));
        assert!(close(&d.remainder, &nil(), 1e-12));
    }

    #[test]
    fn riesz_rejects_close_clusters() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 1.0 + 3e-6]);
        assert!(matches!(riesz_idempotents(&a, 1e-6), Err(Error::ClusterSeparation { .. })));
    }

    #[test]
    fn logarithms() {
        let e = std::f64::consts::E;
        let l = matrix_log(&ComplexMatrix::from_real_diagonal(&[1.0, e]), &FunctionSpec::PrincipalLog).unwrap();
        assert!(close(&l, &ComplexMatrix::from_real_diagonal(&[0.0, 1.0]), 1e-12));
        let j = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let l = matrix_log(&j, &FunctionSpec::PrincipalLog).unwrap();
        assert!(close(&l, &nil(), 1e-12), "{l:?}");
        let on_cut = ComplexMatrix::from_real_diagonal(&[-1.0, 2.0]);
        assert!(matches!(
            matrix_log(&on_cut, &FunctionSpec::PrincipalLog),
            Err(Error::OutsideDomain { .. })
        ));
        // the same matrix is fine once the cut is rotated away
        let l = matrix_log(&on_cut, &FunctionSpec::RotatedLog(PI / 2.0)).unwrap();
        assert!(close(&mat_exp(&l), &on_cut, 1e-10));
        assert!(matrix_log(&ComplexMatrix::from_real_diagonal(&[0.0, 1.0]), &FunctionSpec::PrincipalLog).is_err());
        assert!(matrix_log(&j, &FunctionSpec::Exp).is_err());
    }

    #[test]
    fn rotated_branch_values() {
        let f = FunctionSpec::RotatedLog(PI / 2.0);
        // arg in (-3pi/2, pi/2]
        let v = f.eval(c(-1.0, 0.0)).unwrap();
        assert!((v.im + PI).abs() < 1e-15);
        assert!(f.eval(c(0.0, 2.0)).is_err());
        assert!(FunctionSpec::PrincipalLog.eval(c(-1.0, 0.0)).is_err());
        assert!((FunctionSpec::PrincipalLog.eval(c(-1.0, 1e-3)).unwrap().im - PI).abs() < 1e-2);
    }

    #[test]
    fn cut_angle_avoids_points() {
        let pts = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0)];
        let t = choose_cut_angle(&pts);
        assert!((t.abs() - PI).abs() < 1e-12, "{t}");
        let t = choose_cut_angle(&[c(-1.0, 0.1), c(-1.0, -0.1)]);
        assert!(t.abs() < 1e-2, "{t}");
    }

    #[test]
    fn bound_examples() {
        let s = [ZERO, c(1.0, 0.0)];
        assert_eq!(fct_bound(&FunctionSpec::Power(2), &s, &s).unwrap(), 2.0);
        let id = FunctionSpec::Polynomial(vec![ZERO, c(1.0, 0.0)]);
        assert_eq!(fct_bound(&id, &[c(3.0, 1.0), c(-2.0, 0.0)], &[c(0.5, 0.5)]).unwrap(), 1.0);
        assert_eq!(fct_bound(&FunctionSpec::Exp, &[ZERO], &[ZERO]).unwrap(), 1.0);
    }

    #[test]
    fn divided_differences_are_stable() {
        let x = c(0.7, 0.2);
        let y = x + c(1e-9, 0.0);
        for f in [
            FunctionSpec::Exp,
            FunctionSpec::PrincipalLog,
            FunctionSpec::Power(-3),
            FunctionSpec::Rational(-1.0),
            FunctionSpec::Polynomial(vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 3.0)]),
        ] {
            let dd = f.divided_difference(x, y).unwrap();
            let d = f.derivative(x).unwrap();
            assert!((dd - d).norm() < 1e-7 * (1.0 + d.norm()), "{f}");
        }
    }

    #[test]
    fn worked_inequality() {
        let a = ComplexMatrix::from_real_diagonal(&[0.0, 1.0]);
        let b = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        let r = fct_inequality_check(&FunctionSpec::Power(2), &a, &b, 64).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-10 && (r.rhs - 2.0).abs() < 1e-10, "{r:?}");
        assert!(r.holds && r.conclusive);
        let same = fct_inequality_check(&FunctionSpec::Exp, &a, &a, 64).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
    }

    #[test]
    fn parse_function_specs() {
        for s in ["exp", "log", "log:1.5", "poly:1,0,-2", "poly:0.5,1-2i,3+0.25i", "rational:plus", "rational:minus", "pow:3", "pow:-2"] {
            let f: FunctionSpec = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        for s in ["sin", "poly:", "pow:x", "log:abc", "rational:other"] {
            assert!(s.parse::<FunctionSpec>().is_err(), "{s}");
        }
    }
}
