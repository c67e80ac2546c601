//! Exact arithmetic in F_p and F_q = F_{p^f}, base-p digit combinatorics,
//! and Lucas binomials.
//!
//! Elements of F_q are stored as a single integer code `sum c_i p^i` where
//! `(c_0, ..., c_{f-1})` are the coordinates with respect to the power basis
//! of the defining modulus. All arithmetic goes through a [`FieldContext`],
//! which precomputes full operation tables (the fields in scope are tiny).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// An element of F_q, encoded as `sum c_i p^i` with `0 <= c_i < p`.
///
/// The code is only meaningful relative to the [`FieldContext`] that produced
/// it; contexts validate codes on entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FqElem(pub u32);

impl FqElem {
    pub const ZERO: FqElem = FqElem(0);
    pub const ONE: FqElem = FqElem(1);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// Base-p digit expansion of a non-negative integer, least significant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitExpansion {
    pub digits: Vec<u32>,
    pub value: u64,
}

/// Largest field size for which operation tables are built. Larger fields are
/// outside the scope of this crate.
const MAX_Q: u64 = 1 << 12;

/// Arithmetic context for F_q = F_{p^f}.
///
/// Immutable after construction and safely shareable across threads; all
/// operations are pure table lookups.
pub struct FieldContext {
    p: u32,
    f: u32,
    q: u32,
    /// Monic modulus, coefficients low-to-high, length f+1.
    modulus: Vec<u32>,
    add_t: Vec<u32>,
    mul_t: Vec<u32>,
    neg_t: Vec<u32>,
    inv_t: Vec<u32>,
    frob_t: Vec<u32>,
}

impl std::fmt::Debug for FieldContext {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("FieldContext")
            .field("p", &self.p)
            .field("f", &self.f)
            .field("modulus", &self.modulus)
            .finish()
    }
}

/// Known default moduli (Conway polynomials), coefficients low-to-high.
const CONWAY: &[(u32, u32, &[u32])] = &[
    (3, 1, &[1, 1]),
    (3, 2, &[2, 2, 1]),
    (3, 3, &[1, 2, 0, 1]),
    (5, 1, &[3, 1]),
    (5, 2, &[2, 4, 1]),
    (7, 1, &[4, 1]),
    (7, 2, &[3, 6, 1]),
    (11, 1, &[9, 1]),
    (11, 2, &[2, 7, 1]),
    (13, 1, &[11, 1]),
];

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

// Polynomial helpers over Z/p, coefficients low-to-high, used only at
// construction time.
fn poly_trim(v: &mut Vec<u32>) {
    while v.last() == Some(&0) {
        v.pop();
    }
}

fn poly_mul_mod_p(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai as u64 * bj as u64;
        }
    }
    let mut out: Vec<u32> = out.iter().map(|&x| (x % p as u64) as u32).collect();
    poly_trim(&mut out);
    out
}

/// Remainder of `a` modulo the monic polynomial `m`, over Z/p.
fn poly_rem_mod_p(a: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let mut r: Vec<u32> = a.to_vec();
    poly_trim(&mut r);
    let dm = m.len() - 1;
    while r.len() > dm {
        let lead = *r.last().unwrap() as u64;
        let shift = r.len() - 1 - dm;
        for (k, &mk) in m.iter().enumerate() {
            let idx = k + shift;
            let sub = (lead * mk as u64) % p as u64;
            let cur = r[idx] as u64;
            r[idx] = ((cur + p as u64 - sub) % p as u64) as u32;
        }
        poly_trim(&mut r);
        if r.is_empty() {
            break;
        }
    }
    r
}

/// Brute-force irreducibility over Z/p by trial division against every monic
/// polynomial of degree up to deg/2. Adequate for the small f in scope.
fn poly_is_irreducible(m: &[u32], p: u32) -> bool {
    let deg = m.len() - 1;
    if deg == 0 {
        return false;
    }
    if deg == 1 {
        return true;
    }
    for d in 1..=deg / 2 {
        // Monic candidates of degree d, low coefficients enumerated base p.
        let count = (p as u64).pow(d as u32);
        for code in 0..count {
            let mut cand = Vec::with_capacity(d + 1);
            let mut c = code;
            for _ in 0..d {
                cand.push((c % p as u64) as u32);
                c /= p as u64;
            }
            cand.push(1);
            if poly_rem_mod_p(m, &cand, p).is_empty() {
                return false;
            }
        }
    }
    true
}

impl FieldContext {
    /// Build the context. `modulus` is monic with coefficients low-to-high;
    /// when omitted, the default modulus for `(p, f)` is used (the Conway
    /// polynomial where tabulated, otherwise the first monic polynomial in
    /// code order whose root generates the multiplicative group).
    pub fn new(p: u32, f: u32, modulus: Option<Vec<u32>>) -> Result<FieldContext> {
        if !is_prime(p) || p < 3 {
            return Err(Error::InvalidParameter(format!(
                "p must be an odd prime, got {p}"
            )));
        }
        if f == 0 {
            return Err(Error::InvalidParameter("f must be positive".into()));
        }
        let q = (p as u64).pow(f);
        if q > MAX_Q {
            return Err(Error::InvalidParameter(format!(
                "field size {q} exceeds supported maximum {MAX_Q}"
            )));
        }
        let q = q as u32;
        let modulus = match modulus {
            Some(m) => {
                if m.len() != f as usize + 1 || m.last() != Some(&1) {
                    return Err(Error::InvalidParameter(
                        "modulus must be monic of degree f".into(),
                    ));
                }
                if m.iter().any(|&c| c >= p) {
                    return Err(Error::InvalidParameter(
                        "modulus coefficients must be reduced mod p".into(),
                    ));
                }
                if !poly_is_irreducible(&m, p) {
                    return Err(Error::InvalidParameter(
                        "modulus is reducible over Z/p".into(),
                    ));
                }
                m
            }
            None => Self::default_modulus(p, f)?,
        };

        let mut ctx = FieldContext {
            p,
            f,
            q,
            modulus,
            add_t: vec![],
            mul_t: vec![],
            neg_t: vec![],
            inv_t: vec![],
            frob_t: vec![],
        };
        ctx.build_tables();
        Ok(ctx)
    }

    /// Default modulus for `(p, f)`.
    pub fn default_modulus(p: u32, f: u32) -> Result<Vec<u32>> {
        for &(cp, cf, m) in CONWAY {
            if cp == p && cf == f {
                return Ok(m.to_vec());
            }
        }
        // Deterministic fallback: the first (in base-p code order of the low
        // coefficients) monic irreducible whose root generates F_q^x. This
        // matches the Conway polynomial for f = 1 up to the choice of
        // primitive root; override the modulus in config when bit-for-bit
        // agreement with other tools matters.
        let q = (p as u64).pow(f);
        let count = (p as u64).pow(f);
        for code in 0..count {
            let mut m = Vec::with_capacity(f as usize + 1);
            let mut c = code;
            for _ in 0..f {
                m.push((c % p as u64) as u32);
                c /= p as u64;
            }
            m.push(1);
            if !poly_is_irreducible(&m, p) {
                continue;
            }
            // Order of x in (Z/p[y]/m)^x.
            let mut pow: Vec<u32> = vec![0, 1];
            let mut order = 1u64;
            loop {
                if pow == vec![1] {
                    break;
                }
                pow = poly_rem_mod_p(&poly_mul_mod_p(&pow, &[0, 1], p), &m, p);
                order += 1;
                if order > q {
                    break;
                }
            }
            if order == q - 1 {
                return Ok(m);
            }
        }
        Err(Error::InvalidParameter(format!(
            "no primitive monic polynomial found for (p, f) = ({p}, {f})"
        )))
    }

    fn code_to_coeffs(&self, code: u32) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.f as usize);
        let mut c = code;
        for _ in 0..self.f {
            v.push(c % self.p);
            c /= self.p;
        }
        v
    }

    fn coeffs_to_code(&self, coeffs: &[u32]) -> u32 {
        let mut code = 0u32;
        for &c in coeffs.iter().rev() {
            code = code * self.p + c % self.p;
        }
        code
    }

    fn build_tables(&mut self) {
        let q = self.q as usize;
        self.add_t = vec![0; q * q];
        self.mul_t = vec![0; q * q];
        self.neg_t = vec![0; q];
        self.inv_t = vec![0; q];
        for a in 0..q as u32 {
            let ca = self.code_to_coeffs(a);
            let mut neg = ca.clone();
            for c in &mut neg {
                *c = (self.p - *c) % self.p;
            }
            self.neg_t[a as usize] = self.coeffs_to_code(&neg);
            for b in 0..q as u32 {
                let cb = self.code_to_coeffs(b);
                let sum: Vec<u32> = ca.iter().zip(&cb).map(|(&x, &y)| (x + y) % self.p).collect();
                self.add_t[(a * self.q + b) as usize] = self.coeffs_to_code(&sum);
                let prod = poly_rem_mod_p(&poly_mul_mod_p(&ca, &cb, self.p), &self.modulus, self.p);
                let mut prod_coeffs = prod;
                prod_coeffs.resize(self.f as usize, 0);
                self.mul_t[(a * self.q + b) as usize] = self.coeffs_to_code(&prod_coeffs);
            }
        }
        // Inverses by exhaustive pairing.
        for a in 1..q as u32 {
            if self.inv_t[a as usize] != 0 {
                continue;
            }
            for b in 1..q as u32 {
                if self.mul_t[(a * self.q + b) as usize] == 1 {
                    self.inv_t[a as usize] = b;
                    self.inv_t[b as usize] = a;
                    break;
                }
            }
        }
        // Frobenius x -> x^p.
        self.frob_t = (0..q as u32)
            .map(|a| self.pow_unchecked(FqElem(a), self.p as u64).0)
            .collect();
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn f(&self) -> u32 {
        self.f
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    /// Validate an element code.
    pub fn elem(&self, code: u32) -> Result<FqElem> {
        if code < self.q {
            Ok(FqElem(code))
        } else {
            Err(Error::IndexOutOfRange(format!(
                "element code {code} >= q = {}",
                self.q
            )))
        }
    }

    /// Element from power-basis coordinates (values reduced mod p).
    pub fn from_coeffs(&self, coeffs: &[u32]) -> FqElem {
        let mut v: Vec<u32> = coeffs.iter().map(|&c| c % self.p).collect();
        v.resize(self.f as usize, 0);
        FqElem(self.coeffs_to_code(&v))
    }

    /// Power-basis coordinates of an element.
    pub fn coeffs(&self, x: FqElem) -> Vec<u32> {
        self.code_to_coeffs(x.0)
    }

    /// The prime subfield embedding Z/p -> F_q.
    pub fn embed_prime(&self, c: u64) -> FqElem {
        FqElem((c % self.p as u64) as u32)
    }

    pub fn add(&self, x: FqElem, y: FqElem) -> FqElem {
        FqElem(self.add_t[(x.0 * self.q + y.0) as usize])
    }

    pub fn sub(&self, x: FqElem, y: FqElem) -> FqElem {
        self.add(x, self.neg(y))
    }

    pub fn neg(&self, x: FqElem) -> FqElem {
        FqElem(self.neg_t[x.0 as usize])
    }

    pub fn mul(&self, x: FqElem, y: FqElem) -> FqElem {
        FqElem(self.mul_t[(x.0 * self.q + y.0) as usize])
    }

    pub fn inv(&self, x: FqElem) -> Result<FqElem> {
        if x.is_zero() {
            Err(Error::DivisionByZero)
        } else {
            Ok(FqElem(self.inv_t[x.0 as usize]))
        }
    }

    pub fn div(&self, x: FqElem, y: FqElem) -> Result<FqElem> {
        Ok(self.mul(x, self.inv(y)?))
    }

    fn pow_unchecked(&self, x: FqElem, mut e: u64) -> FqElem {
        let mut base = x;
        let mut acc = FqElem::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Integer power with the conventions used throughout the crate:
    /// exponents of nonzero elements are reduced mod q-1, and 0^0 = 1.
    /// Negative exponents of zero are a division by zero.
    pub fn pow(&self, x: FqElem, e: i64) -> Result<FqElem> {
        if x.is_zero() {
            return match e.cmp(&0) {
                std::cmp::Ordering::Less => Err(Error::DivisionByZero),
                std::cmp::Ordering::Equal => Ok(FqElem::ONE),
                std::cmp::Ordering::Greater => Ok(FqElem::ZERO),
            };
        }
        let m = self.q as i64 - 1;
        let r = e.rem_euclid(m) as u64;
        Ok(self.pow_unchecked(x, r))
    }

    /// x^{p^j}; `frobenius(x, f) = x`.
    pub fn frobenius(&self, x: FqElem, j: u32) -> FqElem {
        let mut y = x;
        for _ in 0..(j % self.f) {
            y = FqElem(self.frob_t[y.0 as usize]);
        }
        y
    }

    /// All elements in code order.
    pub fn elements(&self) -> impl Iterator<Item = FqElem> {
        (0..self.q).map(FqElem)
    }

    /// Nonzero elements in code order.
    pub fn units(&self) -> impl Iterator<Item = FqElem> {
        (1..self.q).map(FqElem)
    }

    /// A generator of F_q^x (smallest code that works).
    pub fn multiplicative_generator(&self) -> FqElem {
        'outer: for g in self.units() {
            let mut x = g;
            for _ in 1..self.q - 1 {
                if x == FqElem::ONE {
                    continue 'outer;
                }
                x = self.mul(x, g);
            }
            if x == FqElem::ONE {
                return g;
            }
        }
        unreachable!("multiplicative group of a finite field is cyclic")
    }

    /// An F_p-basis of F_q: the power basis 1, y, ..., y^{f-1}.
    pub fn prime_basis(&self) -> Vec<FqElem> {
        (0..self.f).map(|i| FqElem(self.p.pow(i))).collect()
    }
}

/// Canonical base-p digits of `k`, least significant first. `digits(0) = []`.
pub fn digits_base_p(k: u64, p: u32) -> DigitExpansion {
    let mut digits = Vec::new();
    let mut v = k;
    while v > 0 {
        digits.push((v % p as u64) as u32);
        v /= p as u64;
    }
    DigitExpansion { digits, value: k }
}

/// Binomial coefficient mod p via the digit product formula: the result is
/// zero exactly when some digit of `r` exceeds the matching digit of `n`.
pub fn lucas_binom(n: u64, r: u64, p: u32) -> u32 {
    let nd = digits_base_p(n, p).digits;
    let rd = digits_base_p(r, p).digits;
    let mut acc = 1u64;
    for i in 0..nd.len().max(rd.len()) {
        let ni = *nd.get(i).unwrap_or(&0);
        let ri = *rd.get(i).unwrap_or(&0);
        if ri > ni {
            return 0;
        }
        acc = acc * small_binom_mod_p(ni, ri, p) as u64 % p as u64;
    }
    acc as u32
}

/// Binomial for arguments below p, reduced mod p.
fn small_binom_mod_p(n: u32, r: u32, p: u32) -> u32 {
    if r > n {
        return 0;
    }
    let mut num = 1u64;
    let mut den = 1u64;
    for i in 0..r as u64 {
        num = num * (n as u64 - i) % p as u64;
        den = den * (i + 1) % p as u64;
    }
    // den is invertible mod p since all factors are < p.
    let mut inv = 1u64;
    let mut b = den;
    let mut e = p as u64 - 2;
    while e > 0 {
        if e & 1 == 1 {
            inv = inv * b % p as u64;
        }
        b = b * b % p as u64;
        e >>= 1;
    }
    (num * inv % p as u64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pascal-triangle oracle mod p, independent of the Lucas route.
    pub(crate) fn pascal_mod_p(rows: usize, p: u32) -> Vec<Vec<u32>> {
        let mut t: Vec<Vec<u32>> = Vec::with_capacity(rows);
        for n in 0..rows {
            let mut row = vec![0u32; n + 1];
            row[0] = 1;
            row[n] = 1;
            for r in 1..n {
                row[r] = (t[n - 1][r - 1] + t[n - 1][r]) % p;
            }
            t.push(row);
        }
        t
    }

    fn f9() -> FieldContext {
        FieldContext::new(3, 2, None).unwrap()
    }

    #[test]
    fn default_modulus_is_conway_for_3_2() {
        assert_eq!(f9().modulus(), &[2, 2, 1]);
    }

    #[test]
    fn field_axioms_spot_checks() {
        let k = f9();
        for x in k.elements() {
            assert_eq!(k.mul(x, FqElem::ONE), x);
            assert_eq!(k.add(x, FqElem::ZERO), x);
            assert_eq!(k.add(x, k.neg(x)), FqElem::ZERO);
            // x^q = x
            assert_eq!(k.pow_unchecked(x, k.q() as u64), x);
            if !x.is_zero() {
                assert_eq!(k.pow(x, k.q() as i64 - 1).unwrap(), FqElem::ONE);
                assert_eq!(k.mul(x, k.inv(x).unwrap()), FqElem::ONE);
            }
        }
        for x in k.elements() {
            for y in k.elements() {
                assert_eq!(k.add(x, y), k.add(y, x));
                assert_eq!(k.mul(x, y), k.mul(y, x));
            }
        }
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let k = f9();
        assert!(matches!(
            k.div(FqElem::ONE, FqElem::ZERO),
            Err(Error::DivisionByZero)
        ));
        assert!(matches!(k.pow(FqElem::ZERO, -1), Err(Error::DivisionByZero)));
    }

    #[test]
    fn pow_conventions() {
        let k = f9();
        assert_eq!(k.pow(FqElem::ZERO, 0).unwrap(), FqElem::ONE);
        assert_eq!(k.pow(FqElem::ZERO, 5).unwrap(), FqElem::ZERO);
        // additivity of exponents on units
        let g = k.multiplicative_generator();
        for a in 0..10i64 {
            for b in -5..5i64 {
                let lhs = k.pow(g, a + b).unwrap();
                let rhs = k.mul(k.pow(g, a).unwrap(), k.pow(g, b).unwrap());
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn generator_fourth_power_has_order_two() {
        // Enumerate the 8-element multiplicative group of F_9 to find the
        // unique element of order 2, then compare against pow(g, 4).
        let k = f9();
        let mut order_two = Vec::new();
        for x in k.units() {
            if x != FqElem::ONE && k.mul(x, x) == FqElem::ONE {
                order_two.push(x);
            }
        }
        assert_eq!(order_two.len(), 1);
        let g = k.multiplicative_generator();
        assert_eq!(k.pow(g, 4).unwrap(), order_two[0]);
        // -1 is that element
        assert_eq!(order_two[0], k.neg(FqElem::ONE));
    }

    #[test]
    fn frobenius_cubes_the_power_basis_generator() {
        let k = f9();
        let t = FqElem(3); // the power-basis generator y
        let t3 = k.mul(k.mul(t, t), t);
        assert_eq!(k.frobenius(t, 1), t3);
        for x in k.elements() {
            assert_eq!(k.frobenius(x, 0), x);
            assert_eq!(k.frobenius(x, k.f()), x);
            let mut y = x;
            for _ in 0..k.f() {
                y = k.frobenius(y, 1);
            }
            assert_eq!(y, x);
        }
    }

    #[test]
    fn digit_expansions() {
        assert_eq!(digits_base_p(0, 3).digits, Vec::<u32>::new());
        assert_eq!(digits_base_p(7, 3).digits, vec![1, 2]);
        // q-1-r with q=9, r=4
        assert_eq!(digits_base_p(4, 3).digits, vec![1, 1]);
        for k in 0..200u64 {
            let d = digits_base_p(k, 5);
            let back: u64 = d
                .digits
                .iter()
                .enumerate()
                .map(|(i, &c)| c as u64 * 5u64.pow(i as u32))
                .sum();
            assert_eq!(back, d.value);
            assert!(d.digits.iter().all(|&c| c < 5));
        }
    }

    #[test]
    fn lucas_examples() {
        assert_eq!(lucas_binom(5, 5, 3), 1);
        // Pascal: binom(5,2) = 10 = 1 mod 3
        assert_eq!(lucas_binom(5, 2, 3), 1);
        // 7 = 21_3, 5 = 12_3, digit 0 has 1 < 2
        assert_eq!(lucas_binom(7, 5, 3), 0);
    }

    #[test]
    fn lucas_matches_pascal_small() {
        for &p in &[3u32, 5, 7] {
            let rows = 120usize;
            let t = pascal_mod_p(rows, p);
            for n in 0..rows {
                for r in 0..=n {
                    assert_eq!(lucas_binom(n as u64, r as u64, p), t[n][r], "p={p} n={n} r={r}");
                }
            }
        }
    }

    #[test]
    fn fallback_modulus_is_primitive_and_irreducible() {
        // (3, 4) is not in the Conway table.
        let m = FieldContext::default_modulus(3, 4).unwrap();
        assert_eq!(m.len(), 5);
        assert!(poly_is_irreducible(&m, 3));
        let k = FieldContext::new(3, 4, Some(m)).unwrap();
        // x = code 3 generates the 80-element group
        let x = FqElem(3);
        let mut y = x;
        let mut order = 1;
        while y != FqElem::ONE {
            y = k.mul(y, x);
            order += 1;
        }
        assert_eq!(order, 80);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(FieldContext::new(4, 1, None).is_err());
        assert!(FieldContext::new(2, 1, None).is_err());
        // y^2 + 1 is reducible over F_3? y^2+1 at y=0,1,2: 1, 2, 2 -> irreducible.
        // Use y^2 + 2 = y^2 - 1 = (y-1)(y+1) which is reducible.
        assert!(FieldContext::new(3, 2, Some(vec![2, 0, 1])).is_err());
        assert!(FieldContext::new(3, 2, Some(vec![2, 2, 2])).is_err());
    }
}
