//! Randomized and constructive verification suites.
//!
//! Every trial draws its inputs from a seed derived from the master seed, the
//! suite and the trial index, so a report list depends only on its
//! [`TrialConfig`]. Trials run in parallel and are collected in index order.
//!
//! "a = b iff rho = 0" style equivalences are checked in both directions by
//! construction: equal pairs must give an exact-zero estimate, constructed
//! unequal pairs a value clearly above zero.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::commutator::{
    commutator_sequence, d_rho, ind_identity_check, invol_identity_check, rho, rho_oracle,
    RhoEstimate,
};
use crate::error::{Error, Result};
use crate::generators::{self as gen, mix64, rng_from_seed, TrialRng};
use crate::holo::{
    choose_cut_angle, fct_inequality_check, matrix_log, riesz_idempotents_default,
    FunctionSpec, SpectralDecomposition,
};
use crate::matrix::{
    eigenvalues, is_normal, mat_exp, mat_inverse, mat_pow, operator_norm, singular_values,
    ComplexMatrix, C64, ONE, ZERO,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    Fct,
    Razpet,
    Gelfand,
    StarClasses,
    Spec,
    Identities,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Fct,
        Suite::Razpet,
        Suite::Gelfand,
        Suite::StarClasses,
        Suite::Spec,
        Suite::Identities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Fct => "fct",
            Suite::Razpet => "razpet",
            Suite::Gelfand => "gelfand",
            Suite::StarClasses => "star-classes",
            Suite::Spec => "spec",
            Suite::Identities => "identities",
        }
    }

    /// The statement a passing run supports.
    pub fn claim(self) -> &'static str {
        match self {
            Suite::Fct => "rho(f(a), f(b)) <= sup |divided difference of f| * rho(a, b) for f holomorphic near both spectra",
            Suite::Razpet => "distinct idempotents have rho > 0; finite-spectrum pairs with d_rho = 0 share Riesz idempotents and a - b = r_a - r_b",
            Suite::Gelfand => "sigma(a) = {1} with rho(a, 1) = 0 forces a = 1 only under two-sided power boundedness; a = b when rho = 0 and a^n b^-n stays bounded",
            Suite::StarClasses => "self-adjoint, unitary and normal pairs: rho(a, b) = 0 iff a = b",
            Suite::Spec => "rho(a*, a) = 0 gives a real spectrum; rho(a*, a^-1) = 0 gives a unimodular spectrum without making a unitary",
            Suite::Identities => "[C^n_{a,b} 1]* = (-1)^n C^n_{b*,a*} 1 and the binomial expansion of (a^-n)* a^-n",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Suite::Fct => 0x6663_7400,
            Suite::Razpet => 0x7261_7a70,
            Suite::Gelfand => 0x6765_6c66,
            Suite::StarClasses => 0x7374_6172,
            Suite::Spec => 0x7370_6563,
            Suite::Identities => 0x6964_656e,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Suite {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                Error::InvalidArgument(format!("unknown suite '{s}' (expected all, {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    /// Relative residual of exact identities.
    pub residual: f64,
    /// Inequality slack, relative to `1 + rhs`.
    pub margin: f64,
    /// Minimum value counted as strictly positive.
    pub positive: f64,
    /// Idempotent algebra and remainder differences.
    pub structure: f64,
    /// `|Im lambda|` allowed for a "real" spectrum.
    pub real_axis: f64,
    /// `||lambda| - 1|` allowed for a unimodular spectrum.
    pub unit_circle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-10,
            margin: 1e-8,
            positive: 1e-6,
            structure: 1e-8,
            real_axis: 1e-8,
            unit_circle: 1e-10,
        }
    }
}

pub const DEFAULT_SEQUENCE_LEN: usize = 128;

/// Suites fail outright when this share of trials is inconclusive.
pub const MAX_INCONCLUSIVE_RATE: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct TrialConfig {
    pub suite: Suite,
    pub dim: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Commutator sequence length `N`.
    pub len: usize,
    pub tolerances: Tolerances,
}

impl TrialConfig {
    pub fn new(suite: Suite, dim: usize, trials: usize, master_seed: u64) -> Self {
        TrialConfig {
            suite,
            dim,
            trials,
            master_seed,
            len: DEFAULT_SEQUENCE_LEN,
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=8).contains(&self.dim) {
            return Err(Error::InvalidArgument(format!("dim must be in [2, 8], got {}", self.dim)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be positive".into()));
        }
        if self.len < crate::commutator::MIN_SEQUENCE_LEN {
            return Err(Error::InvalidArgument(format!(
                "sequence length must be >= {}",
                crate::commutator::MIN_SEQUENCE_LEN
            )));
        }
        Ok(())
    }

    pub fn trial_seed(&self, index: usize) -> u64 {
        mix64(mix64(self.master_seed ^ self.suite.tag()).wrapping_add(index as u64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialReport {
    pub suite: Suite,
    pub trial: usize,
    pub seed: u64,
    /// Generator family or anchor name.
    pub case: String,
    /// SHA-256 over the bits of the generated inputs.
    pub digest: String,
    pub quantities: BTreeMap<String, f64>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

pub fn digest(inputs: &[&ComplexMatrix]) -> String {
    let mut h = Sha256::new();
    for m in inputs {
        h.update((m.dim() as u64).to_le_bytes());
        for z in m.row_major() {
            h.update(z.re.to_bits().to_le_bytes());
            h.update(z.im.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Accumulates the checks of one trial.
struct Trial {
    case: String,
    inputs: Vec<ComplexMatrix>,
    quantities: BTreeMap<String, f64>,
    failures: Vec<String>,
    unconverged: Vec<String>,
}

impl Trial {
    fn new(case: impl Into<String>) -> Self {
        Trial {
            case: case.into(),
            inputs: Vec::new(),
            quantities: BTreeMap::new(),
            failures: Vec::new(),
            unconverged: Vec::new(),
        }
    }

    fn input(&mut self, m: &ComplexMatrix) {
        self.inputs.push(m.clone());
    }

    fn record(&mut self, name: &str, v: f64) {
        self.quantities.insert(name.to_string(), v);
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    /// Records an estimate; returns whether it can be trusted.
    fn estimate(&mut self, name: &str, e: &RhoEstimate) -> bool {
        self.record(name, e.value);
        if !e.converged {
            self.unconverged.push(format!("{name} did not converge ({})", e.method));
        }
        e.converged
    }

    fn finish(self, suite: Suite, index: usize, seed: u64) -> TrialReport {
        let refs: Vec<&ComplexMatrix> = self.inputs.iter().collect();
        let (verdict, detail) = if !self.failures.is_empty() {
            (Verdict::Fail, Some(self.failures.join("; ")))
        } else if !self.unconverged.is_empty() {
            (Verdict::Inconclusive, Some(self.unconverged.join("; ")))
        } else {
            (Verdict::Pass, None)
        };
        TrialReport {
            suite,
            trial: index,
            seed,
            case: self.case,
            digest: digest(&refs),
            quantities: self.quantities,
            verdict,
            detail,
        }
    }
}

/// `m` in the top-left corner of a `dim x dim` zero matrix.
fn pad(m: &ComplexMatrix, dim: usize) -> ComplexMatrix {
    let k = m.dim();
    assert!(k <= dim);
    ComplexMatrix::wrap(DMatrix::from_fn(dim, dim, |i, j| {
        if i < k && j < k {
            m.get(i, j)
        } else {
            ZERO
        }
    }))
}

fn real(rows: &[&[f64]]) -> ComplexMatrix {
    ComplexMatrix::from_real_rows(rows).expect("literal matrix")
}

fn rel_diff(x: &ComplexMatrix, y: &ComplexMatrix) -> f64 {
    operator_norm(&(x - y)) / (1.0 + operator_norm(y))
}

fn random_function(rng: &mut TrialRng) -> FunctionSpec {
    if rng.random_bool(1.0 / 3.0) {
        FunctionSpec::Exp
    } else {
        let degree = rng.random_range(0..=4);
        FunctionSpec::Polynomial((0..=degree).map(|_| gen::complex_gaussian(rng)).collect())
    }
}

fn trial_fct(cfg: &TrialConfig, index: usize, rng: &mut TrialRng) -> Result<Trial> {
    let dim = cfg.dim;
    let tol = &cfg.tolerances;
    let (case, a, b, f) = if index == 0 {
        let a = pad(&ComplexMatrix::from_real_diagonal(&[0.0, 1.0]), dim);
        let b = pad(&ComplexMatrix::from_real_diagonal(&[1.0, 0.0]), dim);
        ("anchor-square", a, b, FunctionSpec::Power(2))
    } else {
        match index % 4 {
            1 => {
                let a = gen::generic(dim, rng);
                ("equal", a.clone(), a, random_function(rng))
            }
            2 => {
                let da: Vec<C64> = (0..dim).map(|_| gen::complex_gaussian(rng)).collect();
                let db: Vec<C64> = (0..dim).map(|_| gen::complex_gaussian(rng)).collect();
                let f = random_function(rng);
                let (a, b) = (ComplexMatrix::from_diagonal(&da), ComplexMatrix::from_diagonal(&db));
                ("commuting-diagonal", a, b, f)
            }
            _ => {
                let (a, b) = gen::diagonalizable_pair(dim, 1e3, rng)?;
                ("diagonalizable", a, b, random_function(rng))
            }
        }
    };
    let mut t = Trial::new(format!("{case} f={f}"));
    t.input(&a);
    t.input(&b);
    let r = fct_inequality_check(&f, &a, &b, cfg.len)?;
    t.estimate("lhs", &r.lhs_estimate);
    t.estimate("rho_ab", &r.rho_estimate);
    t.record("bound", r.bound);
    t.record("rhs", r.rhs);
    t.record("margin", r.margin);
    let slack = tol.margin * (1.0 + r.rhs);
    t.check(r.margin >= -slack, || {
        format!("inequality violated: lhs {:e} > rhs {:e}", r.lhs, r.rhs)
    });
    match case {
        "anchor-square" => {
            t.check((r.lhs - 1.0).abs() <= tol.residual && (r.rhs - 2.0).abs() <= tol.residual, || {
                format!("worked example gave lhs {}, rhs {} instead of 1, 2", r.lhs, r.rhs)
            });
        }
        "equal" => {
            t.check(r.lhs == 0.0 && r.rhs == 0.0, || {
                format!("equal pair gave lhs {:e}, rhs {:e}", r.lhs, r.rhs)
            });
        }
        "commuting-diagonal" => {
            // basis is the identity, so only matching diagonal positions pair up
            let mut lhs_cf = 0.0_f64;
            let mut rho_cf = 0.0_f64;
            for i in 0..dim {
                let (x, y) = (a.get(i, i), b.get(i, i));
                lhs_cf = lhs_cf.max((f.eval(x)? - f.eval(y)?).norm());
                rho_cf = rho_cf.max((x - y).norm());
            }
            t.record("lhs_closed_form", lhs_cf);
            t.check((r.lhs - lhs_cf).abs() <= tol.margin * (1.0 + lhs_cf), || {
                format!("lhs {} differs from closed form {}", r.lhs, lhs_cf)
            });
            t.check((r.rho_estimate.value - rho_cf).abs() <= tol.margin * (1.0 + rho_cf), || {
                format!("rho {} differs from closed form {}", r.rho_estimate.value, rho_cf)
            });
        }
        _ => {}
    }
    Ok(t)
}

/// Pairs each cluster of `x` with the nearest cluster of `y`.
fn idempotent_mismatch(x: &SpectralDecomposition, y: &SpectralDecomposition) -> f64 {
    if x.clusters.len() != y.clusters.len() {
        return f64::INFINITY;
    }
    x.clusters
        .iter()
        .map(|cx| {
            let cy = y
                .clusters
                .iter()
                .min_by(|p, q| {
                    (p.eigenvalue - cx.eigenvalue)
                        .norm()
                        .total_cmp(&(q.eigenvalue - cx.eigenvalue).norm())
                })
                .expect("non-empty");
            rel_diff(&cx.idempotent, &cy.idempotent)
        })
        .fold(0.0, f64::max)
}

fn trial_razpet(cfg: &TrialConfig, index: usize, rng: &mut TrialRng) -> Result<Trial> {
    let dim = cfg.dim;
    let tol = &cfg.tolerances;
    let family = if index == 0 { 0 } else { index % 3 };
    if family == 0 || family == 1 {
        let (case, p, q) = if index == 0 {
            let p = pad(&real(&[&[1.0, 0.0], &[0.0, 0.0]]), dim);
            let q = pad(&real(&[&[1.0, 1.0], &[0.0, 0.0]]), dim);
            ("anchor-idempotents", p, q)
        } else {
            let p = gen::integer_idempotent(dim, rng);
            let mut q = gen::integer_idempotent(dim, rng);
            while q.bit_eq(&p) {
                q = gen::integer_idempotent(dim, rng);
            }
            ("idempotents", p, q)
        };
        let mut t = Trial::new(case);
        t.input(&p);
        t.input(&q);
        let diff = operator_norm(&(&p - &q));
        let seq = commutator_sequence(&p, &q, 9)?;
        let mut worst = 0.0_f64;
        for n in (1..=9).step_by(2) {
            worst = worst.max((seq.terms[n].log_norm.exp() - diff).abs() / diff);
        }
        t.record("norm_p_minus_q", diff);
        t.record("odd_term_deviation", worst);
        t.check(worst <= tol.residual, || format!("odd terms deviate from ||p - q|| by {worst:e}"));
        let r = rho(&p, &q, cfg.len)?.estimate;
        if t.estimate("rho", &r) {
            t.check(r.value > tol.positive, || format!("rho(p, q) = {:e} for p != q", r.value));
        }
        if index == 0 {
            t.check((r.value - 1.0).abs() <= tol.residual, || format!("anchor rho {} != 1", r.value));
        }
        return Ok(t);
    }

    let equal = index % 6 == 5;
    let pair = gen::qe_block_pair(dim, rng);
    let (a, b) = if equal {
        (pair.a.clone(), pair.a.clone())
    } else {
        (pair.a, pair.b)
    };
    let mut t = Trial::new(if equal { "equal-block" } else { "qe-block-pair" });
    t.input(&a);
    t.input(&b);
    let d = d_rho(&a, &b, cfg.len)?;
    t.record("d_rho", d.estimate.value);
    t.check(d.estimate.is_exact_zero(), || {
        format!("d_rho = {:e} ({}) instead of exact zero", d.estimate.value, d.estimate.method)
    });
    let da = riesz_idempotents_default(&a)?;
    let db = riesz_idempotents_default(&b)?;
    let mismatch = idempotent_mismatch(&da, &db);
    t.record("idempotent_mismatch", mismatch);
    t.check(mismatch <= tol.structure, || format!("Riesz idempotents differ by {mismatch:e}"));
    let lhs = &a - &b;
    let rhs = &da.remainder - &db.remainder;
    let scale = 1.0 + operator_norm(&a) + operator_norm(&b);
    let rem = operator_norm(&(&lhs - &rhs)) / scale;
    t.record("remainder_identity", rem);
    t.check(rem <= tol.structure, || format!("a - b differs from r_a - r_b by {rem:e}"));
    Ok(t)
}

fn trial_gelfand(cfg: &TrialConfig, index: usize, rng: &mut TrialRng) -> Result<Trial> {
    let dim = cfg.dim;
    let tol = &cfg.tolerances;
    let one = ComplexMatrix::identity(dim);
    match index % 3 {
        0 => {
            let k = 2 + (index / 3) % (dim - 1);
            let mut j = DMatrix::<C64>::identity(dim, dim);
            for i in 0..k - 1 {
                j[(i, i + 1)] = ONE;
            }
            let j = ComplexMatrix::wrap(j);
            let (a, cond) = if index == 0 {
                (j, 1.0)
            } else {
                let (s, s_inv) = gen::unimodular(dim, rng);
                let sv = singular_values(&s);
                (&(&s * &j) * &s_inv, sv[0] / sv[dim - 1])
            };
            let mut t = Trial::new(if index == 0 { "anchor-jordan".to_string() } else { format!("jordan-{k}") });
            t.input(&a);
            let seq = commutator_sequence(&a, &one, cfg.len)?;
            let r = rho(&a, &one, cfg.len)?.estimate;
            t.record("rho", r.value);
            t.record("exact_zero_at", seq.exact_zero_at.map_or(f64::NAN, |m| m as f64));
            t.check(r.is_exact_zero(), || format!("rho(a, 1) = {:e} ({})", r.value, r.method));
            if index == 0 {
                t.check(seq.exact_zero_at == Some(2), || {
                    format!("anchor vanished at {:?} instead of 2", seq.exact_zero_at)
                });
            }
            t.check(!a.bit_eq(&one), || "a equals 1".into());
            let mut norms = BTreeMap::new();
            let mut sup = 0.0_f64;
            for n in -64..=64_i64 {
                let v = operator_norm(&mat_pow(&a, n)?);
                sup = sup.max(v);
                norms.insert(n, v);
                if index == 0 && n != 0 {
                    let n_abs = n.unsigned_abs() as f64;
                    t.check(v >= n_abs, || format!("||J^{n}|| = {v} < {n_abs}"));
                }
            }
            t.record("sup_power_norm", sup);
            t.record("similarity_condition", cond);
            let growth = norms[&64] / norms[&32];
            t.record("growth_64_over_32", growth);
            t.check(sup >= 64.0 / cond, || format!("sup ||a^n|| = {sup} below 64/cond"));
            t.check(growth >= 1.5, || format!("||a^64|| / ||a^32|| = {growth} is not growing"));
            Ok(t)
        }
        1 => {
            let mut t = Trial::new("identity");
            t.input(&one);
            let r = rho(&one, &one, cfg.len)?.estimate;
            t.record("rho", r.value);
            t.check(r.is_exact_zero(), || "rho(1, 1) not exact zero".into());
            let mut sup = 0.0_f64;
            for n in -64..=64_i64 {
                sup = sup.max(operator_norm(&mat_pow(&one, n)?));
            }
            t.record("sup_power_norm", sup);
            t.check((sup - 1.0).abs() <= tol.residual, || format!("sup ||1^n|| = {sup}"));
            Ok(t)
        }
        _ => {
            // a = b invertible and diagonal: a^n b^-n = 1 for every n
            let mut d = Vec::with_capacity(dim);
            while d.len() < dim {
                let z = C64::new(
                    rng.random_range(-4..=4) as f64,
                    rng.random_range(-4..=4) as f64,
                );
                if z.norm() >= 1.0 && !d.contains(&z) {
                    d.push(z);
                }
            }
            let a = ComplexMatrix::from_diagonal(&d);
            let b = a.clone();
            let mut t = Trial::new("bounded-ratio");
            t.input(&a);
            t.input(&b);
            let mut sup = 0.0_f64;
            for n in -64..=64_i64 {
                sup = sup.max(operator_norm(&(&mat_pow(&a, n)? * &mat_pow(&b, -n)?)));
            }
            t.record("sup_ratio_norm", sup);
            t.check((sup - 1.0).abs() <= 1e-8, || format!("sup ||a^n b^-n|| = {sup}"));
            let r = rho(&a, &b, cfg.len)?.estimate;
            t.record("rho", r.value);
            t.check(r.is_exact_zero(), || "rho(a, a) not exact zero".into());
            let mut pts = eigenvalues(&a)?;
            pts.extend(eigenvalues(&b)?);
            let min_mod = pts.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
            t.check(min_mod > 1e-8 * operator_norm(&a), || "0 in the spectrum".into());
            let cut = choose_cut_angle(&pts);
            t.record("cut_angle", cut);
            let branch = FunctionSpec::RotatedLog(cut);
            let la = matrix_log(&a, &branch)?;
            let lb = matrix_log(&b, &branch)?;
            let back = rel_diff(&mat_exp(&la), &a);
            t.record("exp_log_residual", back);
            t.check(back <= tol.structure, || format!("exp(log a) differs from a by {back:e}"));
            t.check(rel_diff(&la, &lb) <= tol.structure, || "log a != log b".into());
            Ok(t)
        }
    }
}

fn trial_star(cfg: &TrialConfig, index: usize, rng: &mut TrialRng) -> Result<Trial> {
    let dim = cfg.dim;
    let tol = &cfg.tolerances;
    if index == 0 {
        let a = pad(&ComplexMatrix::from_real_diagonal(&[1.0, -1.0]), dim);
        let b = pad(&real(&[&[0.0, 1.0], &[1.0, 0.0]]), dim);
        let mut t = Trial::new("anchor-normal");
        t.input(&a);
        t.input(&b);
        let r = rho_oracle(&a, &b)?;
        t.record("rho", r.value);
        t.check((r.value - 2.0).abs() <= tol.residual, || format!("anchor rho {} != 2", r.value));
        return Ok(t);
    }
    let class = ["hermitian", "unitary", "normal"][index % 3];
    let equal = (index / 3) % 2 == 1;
    let draw = |rng: &mut TrialRng| match class {
        "hermitian" => gen::hermitian(dim, rng),
        "unitary" => gen::unitary(dim, rng),
        _ => gen::normal(dim, rng),
    };
    let a = draw(rng);
    let b = if equal { a.clone() } else { draw(rng) };
    let mut t = Trial::new(format!("{class}-{}", if equal { "equal" } else { "unequal" }));
    t.input(&a);
    t.input(&b);
    for m in [&a, &b] {
        let scale = 1.0 + operator_norm(m);
        t.check(is_normal(m, tol.residual * scale * scale), || format!("{class} draw is not normal"));
        match class {
            "hermitian" => t.check((m - &m.adjoint()).is_zero(), || "draw is not self-adjoint".into()),
            "unitary" => {
                let dev = operator_norm(&(&(&m.adjoint() * m) - &ComplexMatrix::identity(dim)));
                t.check(dev <= 1e-12, || format!("||u*u - 1|| = {dev:e}"));
            }
            _ => {}
        }
    }
    if equal {
        let r = rho(&a, &b, cfg.len)?.estimate;
        t.record("rho", r.value);
        t.check(r.is_exact_zero(), || format!("equal pair gave {:e} ({})", r.value, r.method));
    } else {
        let r = match rho_oracle(&a, &b) {
            Ok(r) => r,
            Err(Error::OracleUnavailable { .. }) => rho(&a, &b, cfg.len)?.estimate,
            Err(e) => return Err(e),
        };
        if t.estimate("rho", &r) {
            t.check(r.value > tol.positive, || format!("unequal pair gave rho {:e}", r.value));
        }
    }
    Ok(t)
}

fn max_imag(eigs: &[C64]) -> f64 {
    eigs.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

fn trial_spec(cfg: &TrialConfig, index: usize, rng: &mut TrialRng) -> Result<Trial> {
    let dim = cfg.dim;
    let tol = &cfg.tolerances;
    match index % 5 {
        0..=2 => {
            let (case, a) = match index % 5 {
                0 => ("nilpotent", gen::nilpotent(dim, rng)),
                1 => ("hermitian", gen::hermitian(dim, rng)),
                _ if index == 2 => ("anchor-imaginary", pad(&ComplexMatrix::from_diagonal(&[C64::new(0.0, 1.0), C64::new(0.0, -1.0)]), dim)),
                _ => {
                    let mut a = gen::generic(dim, rng);
                    while max_imag(&eigenvalues(&a)?) < 0.1 {
                        a = gen::generic(dim, rng);
                    }
                    ("non-real-spectrum", a)
                }
            };
            let mut t = Trial::new(case);
            t.input(&a);
            let r = rho(&a.adjoint(), &a, cfg.len)?.estimate;
            let eigs = eigenvalues(&a)?;
            let im = max_imag(&eigs);
            t.record("max_imag", im);
            let trusted = t.estimate("rho", &r);
            if r.is_exact_zero() {
                t.check(im <= tol.real_axis, || format!("rho(a*, a) = 0 but |Im lambda| = {im:e}"));
            }
            match case {
                "nilpotent" | "hermitian" => {
                    t.check(r.is_exact_zero(), || format!("rho(a*, a) = {:e} ({})", r.value, r.method));
                }
                _ => {
                    if trusted {
                        t.check(r.value > tol.positive, || format!("non-real spectrum but rho(a*, a) = {:e}", r.value));
                    }
                    if index == 2 {
                        t.check((r.value - 2.0).abs() <= tol.residual, || format!("anchor rho {} != 2", r.value));
                    }
                }
            }
            Ok(t)
        }
        _ => {
            let anchor = index == 3;
            let tt = [0.5, 1.0, 2.0][(index / 5) % 3];
            let n = if anchor {
                pad(&real(&[&[0.0, 1.0], &[0.0, 0.0]]), dim)
            } else {
                gen::three_step_nilpotent(dim, rng)
            };
            let tt = if anchor { 1.0 } else { tt };
            let a = mat_exp(&n.scale_real(tt));
            let inv = mat_inverse(&a)?;
            let mut t = Trial::new(if anchor { "anchor-unipotent".to_string() } else { format!("exp-tN t={tt}") });
            t.input(&n);
            let seq = commutator_sequence(&a.adjoint(), &inv, cfg.len)?;
            if anchor {
                let want = [
                    &n.transpose() + &n,
                    pad(&ComplexMatrix::from_real_diagonal(&[0.0, 2.0]), dim),
                    ComplexMatrix::zeros(dim),
                ];
                let mut worst = 0.0_f64;
                for (k, w) in want.iter().enumerate() {
                    worst = worst.max(operator_norm(&(&seq.terms[k + 1].value() - w)));
                }
                t.record("anchor_term_residual", worst);
                t.check(worst <= 1e-12, || format!("terms 1..3 off by {worst:e}"));
            }
            let r = rho(&a.adjoint(), &inv, cfg.len)?.estimate;
            t.record("rho", r.value);
            t.check(r.is_exact_zero(), || format!("rho(a*, a^-1) = {:e} ({})", r.value, r.method));
            let dev = eigenvalues(&a)?
                .iter()
                .map(|z| (z.norm() - 1.0).abs())
                .fold(0.0, f64::max);
            t.record("unit_circle_deviation", dev);
            t.check(dev <= tol.unit_circle, || format!("|lambda| - 1 = {dev:e}"));
            let normal = is_normal(&a, 1e-8);
            t.record("is_normal", if normal { 1.0 } else { 0.0 });
            t.check(!normal, || "exp(tN) came out normal".into());
            Ok(t)
        }
    }
}

fn trial_identities(cfg: &TrialConfig, index: usize, rng: &mut TrialRng) -> Result<Trial> {
    let dim = cfg.dim;
    let tol = &cfg.tolerances;
    let n = 1 + ((index / 2) % 8) as u32;
    if index.is_multiple_of(2) {
        let (a, b) = (gen::generic(dim, rng), gen::generic(dim, rng));
        let n = if index == 0 { 1 } else { n };
        let mut t = Trial::new(format!("invol n={n}"));
        t.input(&a);
        t.input(&b);
        let r = invol_identity_check(&a, &b, n)?;
        t.record("relative_residual", r.relative);
        if n == 1 {
            t.check(r.absolute == 0.0, || format!("n = 1 residual {:e} is not exactly 0", r.absolute));
        }
        t.check(r.relative <= tol.residual, || format!("invol residual {:e}", r.relative));
        Ok(t)
    } else {
        let (case, a, n) = match index {
            1 => ("ind-scalar".to_string(), ComplexMatrix::identity(dim).scale_real(2.0), 3),
            3 => ("ind-unitary".to_string(), gen::unitary(dim, rng), 4),
            _ => {
                let mut a = gen::generic(dim, rng);
                loop {
                    let sv = singular_values(&a);
                    if sv[dim - 1] > 1e-2 * sv[0] {
                        break;
                    }
                    a = gen::generic(dim, rng);
                }
                (format!("ind n={n}"), a, n)
            }
        };
        let mut t = Trial::new(case);
        t.input(&a);
        let r = ind_identity_check(&a, n)?;
        t.record("relative_residual", r.relative);
        let limit = if index == 1 { 1e-15 } else { tol.residual };
        t.check(r.relative <= limit, || format!("ind residual {:e}", r.relative));
        Ok(t)
    }
}

/// Runs one trial; computational errors become failures.
pub fn run_trial(cfg: &TrialConfig, index: usize) -> TrialReport {
    let seed = cfg.trial_seed(index);
    let mut rng = rng_from_seed(seed);
    let outcome = match cfg.suite {
        Suite::Fct => trial_fct(cfg, index, &mut rng),
        Suite::Razpet => trial_razpet(cfg, index, &mut rng),
        Suite::Gelfand => trial_gelfand(cfg, index, &mut rng),
        Suite::StarClasses => trial_star(cfg, index, &mut rng),
        Suite::Spec => trial_spec(cfg, index, &mut rng),
        Suite::Identities => trial_identities(cfg, index, &mut rng),
    };
    match outcome {
        Ok(t) => t.finish(cfg.suite, index, seed),
        Err(e) => TrialReport {
            suite: cfg.suite,
            trial: index,
            seed,
            case: "error".into(),
            digest: digest(&[]),
            quantities: BTreeMap::new(),
            verdict: Verdict::Fail,
            detail: Some(e.to_string()),
        },
    }
}

/// All trials of one suite, in index order.
pub fn run_suite(cfg: &TrialConfig) -> Result<Vec<TrialReport>> {
    cfg.validate()?;
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, i))
        .collect())
}

pub fn suite_fct(cfg: &TrialConfig) -> Result<Vec<TrialReport>> {
    run_suite(&TrialConfig { suite: Suite::Fct, ..cfg.clone() })
}

pub fn suite_razpet_and_finite_spectrum(cfg: &TrialConfig) -> Result<Vec<TrialReport>> {
    run_suite(&TrialConfig { suite: Suite::Razpet, ..cfg.clone() })
}

pub fn suite_gelfand(cfg: &TrialConfig) -> Result<Vec<TrialReport>> {
    run_suite(&TrialConfig { suite: Suite::Gelfand, ..cfg.clone() })
}

pub fn suite_star_classes(cfg: &TrialConfig) -> Result<Vec<TrialReport>> {
    run_suite(&TrialConfig { suite: Suite::StarClasses, ..cfg.clone() })
}

pub fn suite_spec(cfg: &TrialConfig) -> Result<Vec<TrialReport>> {
    run_suite(&TrialConfig { suite: Suite::Spec, ..cfg.clone() })
}

pub fn suite_identities(cfg: &TrialConfig) -> Result<Vec<TrialReport>> {
    run_suite(&TrialConfig { suite: Suite::Identities, ..cfg.clone() })
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteSummary {
    pub suite: Suite,
    pub trials: usize,
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
    pub seconds: f64,
    pub claim: &'static str,
}

impl SuiteSummary {
    pub fn from_reports(suite: Suite, reports: &[TrialReport], seconds: f64) -> Self {
        let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
        SuiteSummary {
            suite,
            trials: reports.len(),
            pass: count(Verdict::Pass),
            fail: count(Verdict::Fail),
            inconclusive: count(Verdict::Inconclusive),
            seconds,
            claim: suite.claim(),
        }
    }

    pub fn inconclusive_rate(&self) -> f64 {
        self.inconclusive as f64 / self.trials.max(1) as f64
    }

    pub fn passed(&self) -> bool {
        self.fail == 0 && self.inconclusive_rate() < MAX_INCONCLUSIVE_RATE
    }
}

pub struct SuiteRun {
    pub summary: SuiteSummary,
    pub reports: Vec<TrialReport>,
}

/// Runs `suites` in order with the shared settings of `base`.
pub fn run_suites(base: &TrialConfig, suites: &[Suite]) -> Result<Vec<SuiteRun>> {
    base.validate()?;
    suites
        .iter()
        .map(|&suite| {
            let cfg = TrialConfig { suite, ..base.clone() };
            let start = Instant::now();
            let reports = run_suite(&cfg)?;
            let summary = SuiteSummary::from_reports(suite, &reports, start.elapsed().as_secs_f64());
            Ok(SuiteRun { summary, reports })
        })
        .collect()
}

pub fn run_all(base: &TrialConfig) -> Result<Vec<SuiteRun>> {
    run_suites(base, &Suite::ALL)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn failures(reports: &[TrialReport]) -> Vec<String> {
        reports
            .iter()
            .filter(|r| r.verdict != Verdict::Pass)
            .map(|r| format!("#{} {} {:?}: {:?}", r.trial, r.case, r.verdict, r.detail))
            .collect()
    }

    #[test]
    fn every_suite_passes_small_runs() {
        for suite in Suite::ALL {
            for dim in [2, 3, 5] {
                let cfg = TrialConfig::new(suite, dim, 24, 7);
                let reports = run_suite(&cfg).unwrap();
                let bad = failures(&reports);
                assert!(bad.is_empty(), "{suite} dim {dim}: {bad:#?}");
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = TrialConfig::new(Suite::Fct, 3, 12, 42);
        let x = serde_json::to_string(&run_suite(&cfg).unwrap()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let y = pool.install(|| serde_json::to_string(&run_suite(&cfg).unwrap()).unwrap());
        assert_eq!(x, y);
    }

    #[test]
    fn seeds_depend_on_suite_and_index() {
        let a = TrialConfig::new(Suite::Fct, 3, 1, 42);
        let b = TrialConfig::new(Suite::Spec, 3, 1, 42);
        assert_ne!(a.trial_seed(0), b.trial_seed(0));
        assert_ne!(a.trial_seed(0), a.trial_seed(1));
    }

    #[test]
    fn config_validation() {
        assert!(TrialConfig::new(Suite::Fct, 1, 10, 0).validate().is_err());
        assert!(TrialConfig::new(Suite::Fct, 9, 10, 0).validate().is_err());
        assert!(TrialConfig::new(Suite::Fct, 3, 0, 0).validate().is_err());
        assert_eq!("star-classes".parse::<Suite>().unwrap(), Suite::StarClasses);
        assert!("nope".parse::<Suite>().is_err());
    }
}
