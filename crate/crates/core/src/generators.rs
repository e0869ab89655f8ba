//! Seeded random matrix families.
//!
//! Continuous families (hermitian, unitary, normal, generic, commuting
//! pairs) draw complex Gaussian entries. Families whose defining property is
//! an exact algebraic cancellation (nilpotent, qe-block pairs, idempotents,
//! unimodular similarities) use small integers, so the commutator iterates
//! that vanish in exact arithmetic also vanish in floating point.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{self, ComplexMatrix, C64, ONE};

pub type TrialRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard complex Gaussian, `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Entries `CN(0, 1/dim)`; spectral radius concentrates near 1.
pub fn generic<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let s = 1.0 / (dim as f64).sqrt();
    let m = DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng) * s);
    ComplexMatrix::wrap(m)
}

pub fn hermitian<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = generic(dim, rng);
    let h = g.as_dmatrix();
    let m = DMatrix::from_fn(dim, dim, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    ComplexMatrix::wrap(m)
}

/// Orthonormalized complex Gaussian (QR with the phases of `R` removed).
pub fn unitary<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q;
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..dim {
            u[(i, j)] *= phase;
        }
    }
    ComplexMatrix::wrap(u)
}

/// `U diag(d) U*` with Gaussian `d`.
pub fn normal<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let u = unitary(dim, rng);
    let d: Vec<C64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
    normal_with(&u, &d)
}

pub fn normal_with(u: &ComplexMatrix, diag: &[C64]) -> ComplexMatrix {
    &(u * &ComplexMatrix::from_diagonal(diag)) * &u.adjoint()
}

fn small_int<R: Rng>(rng: &mut R, lo: i32, hi: i32) -> f64 {
    rng.random_range(lo..=hi) as f64
}

/// Strictly upper triangular with integer entries in `[-3, 3]`, never zero
/// on the first superdiagonal.
pub fn nilpotent<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut v = small_int(rng, -3, 3);
            if j == i + 1 && v == 0.0 {
                v = 1.0;
            }
            m[(i, j)] = C64::new(v, 0.0);
        }
    }
    ComplexMatrix::wrap(m)
}

/// Strictly block upper triangular over three diagonal blocks, so `N^3 = 0`.
/// Integer entries in `[-2, 2]`; `e^{tN}` is then exact for dyadic `t`.
pub fn three_step_nilpotent<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let block = |i: usize| (3 * i) / dim;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    loop {
        for i in 0..dim {
            for j in 0..dim {
                if block(j) > block(i) {
                    m[(i, j)] = C64::new(small_int(rng, -2, 2), 0.0);
                }
            }
        }
        if m.iter().any(|z| z.re != 0.0) {
            return ComplexMatrix::wrap(m);
        }
    }
}

/// A single Jordan block `lambda I + N`.
pub fn jordan(dim: usize, lambda: C64) -> ComplexMatrix {
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = lambda;
        if i + 1 < dim {
            m[(i, i + 1)] = ONE;
        }
    }
    ComplexMatrix::wrap(m)
}

/// Two normal matrices sharing one unitary diagonalizer.
pub fn commuting_pair<R: Rng>(dim: usize, rng: &mut R) -> (ComplexMatrix, ComplexMatrix) {
    let u = unitary(dim, rng);
    let da: Vec<C64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
    let db: Vec<C64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
    (normal_with(&u, &da), normal_with(&u, &db))
}

/// Integer unimodular matrix `L U` and its exact inverse.
pub fn unimodular<R: Rng>(dim: usize, rng: &mut R) -> (ComplexMatrix, ComplexMatrix) {
    let mut l = DMatrix::<f64>::identity(dim, dim);
    let mut u = DMatrix::<f64>::identity(dim, dim);
    for i in 0..dim {
        for j in 0..i {
            l[(i, j)] = small_int(rng, -1, 1);
            u[(j, i)] = small_int(rng, -1, 1);
        }
    }
    let l_inv = unit_lower_inverse(&l);
    let u_inv = unit_lower_inverse(&u.transpose()).transpose();
    let s = &l * &u;
    let s_inv = &u_inv * &l_inv;
    (to_complex(&s), to_complex(&s_inv))
}

fn unit_lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s;
        }
    }
    inv
}

fn to_complex(m: &DMatrix<f64>) -> ComplexMatrix {
    ComplexMatrix::wrap(m.map(|x| C64::new(x, 0.0)))
}

/// Block sizes summing to `dim`, each 1 or 2.
fn block_sizes<R: Rng>(dim: usize, rng: &mut R) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = dim;
    while left > 0 {
        let s = if left >= 2 && rng.random_bool(0.6) { 2 } else { 1 };
        sizes.push(s);
        left -= s;
    }
    sizes
}

/// Distinct integers in `[-range, range]`.
fn distinct_ints<R: Rng>(count: usize, range: i32, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(count);
    while out.len() < count {
        let v = small_int(rng, -range, range);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Block structure of a quasinilpotent-equivalent pair.
#[derive(Clone, Debug)]
pub struct BlockPair {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    /// Eigenvalue of each block.
    pub eigenvalues: Vec<f64>,
    /// Riesz idempotent of each block (shared by `a` and `b`).
    pub idempotents: Vec<ComplexMatrix>,
    /// `a - sum lambda_j p_j`
    pub remainder_a: ComplexMatrix,
    pub remainder_b: ComplexMatrix,
}

/// `a = S (+)_j (lambda_j I + N_j) S^{-1}`, `b = S (+)_j (lambda_j I + M_j) S^{-1}`
/// with distinct integer `lambda_j`, strictly upper integer `N_j`, `M_j`, and
/// an integer unimodular `S`.
pub fn qe_block_pair<R: Rng>(dim: usize, rng: &mut R) -> BlockPair {
    let sizes = block_sizes(dim, rng);
    let lambdas = distinct_ints(sizes.len(), 4, rng);
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DMatrix::<f64>::zeros(dim, dim);
    let mut projections = Vec::new();
    let mut offset = 0;
    for (&s, &lam) in sizes.iter().zip(&lambdas) {
        let mut p = DMatrix::<f64>::zeros(dim, dim);
        for i in offset..offset + s {
            a[(i, i)] = lam;
            b[(i, i)] = lam;
            p[(i, i)] = 1.0;
        }
        if s == 2 {
            a[(offset, offset + 1)] = small_int(rng, -2, 2);
            b[(offset, offset + 1)] = small_int(rng, -2, 2);
        }
        projections.push(p);
        offset += s;
    }
    let (s, s_inv) = unimodular(dim, rng);
    let conj = |m: &DMatrix<f64>| &(&s * &to_complex(m)) * &s_inv;
    let a = conj(&a);
    let b = conj(&b);
    let idempotents: Vec<ComplexMatrix> = projections.iter().map(conj).collect();
    let mut semisimple = ComplexMatrix::zeros(dim);
    for (p, &lam) in idempotents.iter().zip(&lambdas) {
        semisimple = &semisimple + &p.scale_real(lam);
    }
    BlockPair {
        remainder_a: &a - &semisimple,
        remainder_b: &b - &semisimple,
        a,
        b,
        eigenvalues: lambdas,
        idempotents,
    }
}

/// `S diag(1,..,1,0,..,0) S^{-1}` with integer unimodular `S` and rank in
/// `[1, dim-1]`.
pub fn integer_idempotent<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let rank = if dim > 1 { rng.random_range(1..dim) } else { 1 };
    let d: Vec<f64> = (0..dim).map(|i| if i < rank { 1.0 } else { 0.0 }).collect();
    let (s, s_inv) = unimodular(dim, rng);
    &(&s * &ComplexMatrix::from_real_diagonal(&d)) * &s_inv
}

/// Two generic matrices whose eigenvector bases both have condition
/// estimate below `max_condition`; redraws otherwise.
pub fn diagonalizable_pair<R: Rng>(
    dim: usize,
    max_condition: f64,
    rng: &mut R,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let draw = |rng: &mut R| -> Result<ComplexMatrix> {
        for _ in 0..1000 {
            let m = generic(dim, rng);
            let e = matrix::eigendecompose(&m)?;
            if e.is_diagonalizable() && e.condition_estimate < max_condition {
                return Ok(m);
            }
        }
        Err(Error::InvalidArgument(format!(
            "no draw with condition below {max_condition} in 1000 attempts"
        )))
    };
    let a = draw(rng)?;
    let b = draw(rng)?;
    Ok((a, b))
}

/// `S (+)_j (lambda_j I + N_j) S^{-1}` with blocks of size <= 2, eigenvalues
/// at least `1` apart, and a Gaussian similarity `S` of condition below 50.
pub fn clustered<R: Rng>(dim: usize, rng: &mut R) -> Result<ComplexMatrix> {
    let sizes = block_sizes(dim, rng);
    let mut lambdas: Vec<C64> = Vec::new();
    while lambdas.len() < sizes.len() {
        let z = complex_gaussian(rng) * 3.0;
        if lambdas.iter().all(|w| (z - w).norm() >= 1.0) {
            lambdas.push(z);
        }
    }
    let mut core = DMatrix::<C64>::zeros(dim, dim);
    let mut offset = 0;
    for (&s, &lam) in sizes.iter().zip(&lambdas) {
        for i in offset..offset + s {
            core[(i, i)] = lam;
        }
        if s == 2 {
            core[(offset, offset + 1)] = complex_gaussian(rng);
        }
        offset += s;
    }
    for _ in 0..1000 {
        let s = generic(dim, rng).shift(ONE);
        let sv = matrix::singular_values(&s);
        if sv[dim - 1] > 0.0 && sv[0] / sv[dim - 1] < 50.0 {
            let s_inv = matrix::mat_inverse(&s)?;
            return Ok(&(&s * &ComplexMatrix::wrap(core)) * &s_inv);
        }
    }
    Err(Error::InvalidArgument("no well-conditioned similarity found".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorKind {
    Hermitian,
    Unitary,
    Normal,
    Nilpotent,
    Jordan(C64),
    CommutingPair,
    QeBlockPair,
    Generic,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "hermitian" => GeneratorKind::Hermitian,
            "unitary" => GeneratorKind::Unitary,
            "normal" => GeneratorKind::Normal,
            "nilpotent" => GeneratorKind::Nilpotent,
            "commuting-pair" => GeneratorKind::CommutingPair,
            "qe-block-pair" => GeneratorKind::QeBlockPair,
            "generic" => GeneratorKind::Generic,
            "jordan" => GeneratorKind::Jordan(ONE),
            _ => {
                let Some(arg) = s.strip_prefix("jordan:") else {
                    return Err(Error::InvalidArgument(format!("unknown generator kind '{s}'")));
                };
                let parts: Vec<&str> = arg.split(',').collect();
                let parse = |t: &str| {
                    t.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidArgument(format!("bad jordan eigenvalue '{arg}'"))
                    })
                };
                match parts.as_slice() {
                    [re] => GeneratorKind::Jordan(C64::new(parse(re)?, 0.0)),
                    [re, im] => GeneratorKind::Jordan(C64::new(parse(re)?, parse(im)?)),
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "bad jordan eigenvalue '{arg}'"
                        )))
                    }
                }
            }
        };
        Ok(kind)
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::Hermitian => f.write_str("hermitian"),
            GeneratorKind::Unitary => f.write_str("unitary"),
            GeneratorKind::Normal => f.write_str("normal"),
            GeneratorKind::Nilpotent => f.write_str("nilpotent"),
            GeneratorKind::Jordan(z) => write!(f, "jordan:{},{}", z.re, z.im),
            GeneratorKind::CommutingPair => f.write_str("commuting-pair"),
            GeneratorKind::QeBlockPair => f.write_str("qe-block-pair"),
            GeneratorKind::Generic => f.write_str("generic"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Generated {
    Single(ComplexMatrix),
    Pair(ComplexMatrix, ComplexMatrix),
}

/// Draws one member of `kind` with a fresh generator seeded by `seed`.
pub fn generate(kind: &GeneratorKind, dim: usize, seed: u64) -> Result<Generated> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let out = match kind {
        GeneratorKind::Hermitian => Generated::Single(hermitian(dim, &mut rng)),
        GeneratorKind::Unitary => Generated::Single(unitary(dim, &mut rng)),
        GeneratorKind::Normal => Generated::Single(normal(dim, &mut rng)),
        GeneratorKind::Nilpotent => Generated::Single(nilpotent(dim, &mut rng)),
        GeneratorKind::Jordan(lam) => Generated::Single(jordan(dim, *lam)),
        GeneratorKind::Generic => Generated::Single(generic(dim, &mut rng)),
        GeneratorKind::CommutingPair => {
            let (a, b) = commuting_pair(dim, &mut rng);
            Generated::Pair(a, b)
        }
        GeneratorKind::QeBlockPair => {
            let p = qe_block_pair(dim, &mut rng);
            Generated::Pair(p.a, p.b)
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{commutator_norm, operator_norm, spectral_radius, ZERO};

    #[test]
    fn nilpotent_is_strictly_upper() {
        let Generated::Single(n) = generate(&GeneratorKind::Nilpotent, 3, 7).unwrap() else {
            panic!()
        };
        for i in 0..3 {
            for j in 0..=i {
                assert_eq!(n.get(i, j), ZERO);
            }
        }
        assert_eq!(spectral_radius(&n).unwrap(), 0.0);
    }

    #[test]
    fn commuting_pair_commutes() {
        let Generated::Pair(a, b) = generate(&GeneratorKind::CommutingPair, 3, 11).unwrap() else {
            panic!()
        };
        assert!(commutator_norm(&a, &b) <= 1e-12);
    }

    #[test]
    fn unitary_is_unitary() {
        let Generated::Single(u) = generate(&GeneratorKind::Unitary, 3, 5).unwrap() else {
            panic!()
        };
        let e = &(&u.adjoint() * &u) - &ComplexMatrix::identity(3);
        assert!(operator_norm(&e) <= 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = generate(&GeneratorKind::Normal, 4, 99).unwrap();
        let y = generate(&GeneratorKind::Normal, 4, 99).unwrap();
        match (x, y) {
            (Generated::Single(x), Generated::Single(y)) => assert!(x.bit_eq(&y)),
            _ => panic!(),
        }
    }

    #[test]
    fn unimodular_inverse_is_exact() {
        let mut rng = rng_from_seed(3);
        for dim in 2..=6 {
            let (s, s_inv) = unimodular(dim, &mut rng);
            assert!((&s * &s_inv).bit_eq(&ComplexMatrix::identity(dim)));
        }
    }

    #[test]
    fn block_pair_structure() {
        let mut rng = rng_from_seed(21);
        let p = qe_block_pair(5, &mut rng);
        let mut sum = ComplexMatrix::zeros(5);
        for q in &p.idempotents {
            assert!((&(q * q) - q).is_zero());
            sum = &sum + q;
        }
        assert!(sum.bit_eq(&ComplexMatrix::identity(5)));
        assert!((&(&p.a - &p.b) - &(&p.remainder_a - &p.remainder_b)).is_zero());
    }

    #[test]
    fn jordan_kind_parses() {
        assert_eq!(
            "jordan:2,-1".parse::<GeneratorKind>().unwrap(),
            GeneratorKind::Jordan(C64::new(2.0, -1.0))
        );
        assert!("banana".parse::<GeneratorKind>().is_err());
    }
}
