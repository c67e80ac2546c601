//! Exact arithmetic in the truncated ring O/pi^N of a ramified extension of
//! Q_p, in Teichmuller-digit coordinates.
//!
//! A [`LocalInt`] is the canonical digit vector (mu_0, ..., mu_{N-1}) of
//! `sum [mu_i] pi^i`; two values are equal exactly when their digit vectors
//! are. Arithmetic converts to an internal Galois-ring polynomial form,
//! operates there, and re-extracts digits.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gf::{FieldContext, FqElem};
use crate::wring::{OPoly, ORing};

/// Element of O/pi^N as canonical Teichmuller digits, length exactly N.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalInt {
    pub digits: Vec<FqElem>,
}

impl LocalInt {
    pub fn is_zero(&self) -> bool {
        self.digits.iter().all(|d| d.is_zero())
    }
}

/// Context for O/pi^N. Immutable and shareable across threads.
pub struct RingContext {
    field: Arc<FieldContext>,
    e: usize,
    n_digits: usize,
    /// Eisenstein polynomial as configured (integer coefficients, low-to-high,
    /// monic of degree e). Recorded for cache keys and reports.
    eisenstein: Vec<i64>,
    pub(crate) o: ORing,
}

impl std::fmt::Debug for RingContext {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("RingContext")
            .field("p", &self.field.p())
            .field("f", &self.field.f())
            .field("e", &self.e)
            .field("n_digits", &self.n_digits)
            .field("eisenstein", &self.eisenstein)
            .finish()
    }
}

impl RingContext {
    /// Build O/pi^N. When `eisenstein` is omitted, X^e - p is used.
    pub fn new(
        field: Arc<FieldContext>,
        e: u32,
        n_digits: usize,
        eisenstein: Option<Vec<i64>>,
    ) -> Result<RingContext> {
        if e == 0 {
            return Err(Error::InvalidParameter("e must be >= 1".into()));
        }
        if n_digits == 0 {
            return Err(Error::InvalidParameter("precision must be >= 1".into()));
        }
        let e = e as usize;
        let eis = eisenstein.unwrap_or_else(|| {
            let mut v = vec![0i64; e + 1];
            v[0] = -(field.p() as i64);
            v[e] = 1;
            v
        });
        let o = ORing::new(&field, e, n_digits, &eis)?;
        Ok(RingContext {
            field,
            e,
            n_digits,
            eisenstein: eis,
            o,
        })
    }

    pub fn field(&self) -> &Arc<FieldContext> {
        &self.field
    }

    pub fn e(&self) -> usize {
        self.e
    }

    /// Digit precision N.
    pub fn precision(&self) -> usize {
        self.n_digits
    }

    pub fn eisenstein(&self) -> &[i64] {
        &self.eisenstein
    }

    fn check(&self, x: &LocalInt) -> Result<()> {
        if x.digits.len() != self.n_digits {
            return Err(Error::ContextMismatch(format!(
                "LocalInt has {} digits, context expects {}",
                x.digits.len(),
                self.n_digits
            )));
        }
        Ok(())
    }

    pub fn zero(&self) -> LocalInt {
        LocalInt {
            digits: vec![FqElem::ZERO; self.n_digits],
        }
    }

    pub fn one(&self) -> LocalInt {
        self.teichmuller_lift(FqElem::ONE)
    }

    /// pi^k (zero when k >= N).
    pub fn pi_pow(&self, k: usize) -> LocalInt {
        let mut v = self.zero();
        if k < self.n_digits {
            v.digits[k] = FqElem::ONE;
        }
        v
    }

    /// Digits are padded with zeros up to N; it is an error to pass more than
    /// N digits.
    pub fn from_digit_slice(&self, digits: &[FqElem]) -> Result<LocalInt> {
        if digits.len() > self.n_digits {
            return Err(Error::IndexOutOfRange(format!(
                "{} digits exceed precision {}",
                digits.len(),
                self.n_digits
            )));
        }
        let mut v = digits.to_vec();
        v.resize(self.n_digits, FqElem::ZERO);
        Ok(LocalInt { digits: v })
    }

    /// Embed a rational integer.
    pub fn from_int(&self, c: i64) -> LocalInt {
        let w = self.o.w.from_i64(c);
        let poly: OPoly = {
            let mut v = self.o.zero();
            v[0] = w;
            v
        };
        self.extract(&poly)
    }

    /// The multiplicative representative of x: reduces to x mod pi and
    /// satisfies lift^q = lift at full precision.
    pub fn teichmuller_lift(&self, x: FqElem) -> LocalInt {
        let mut v = self.o.zero();
        v[0] = self.o.teich(x).clone();
        self.extract(&v)
    }

    pub(crate) fn to_poly(&self, x: &LocalInt) -> OPoly {
        self.o.from_digits(&x.digits)
    }

    pub(crate) fn extract(&self, v: &OPoly) -> LocalInt {
        let digits = self
            .o
            .to_digits(&self.field, v, self.n_digits)
            .expect("digit extraction of an exact ring element cannot fail");
        LocalInt { digits }
    }

    pub fn add(&self, x: &LocalInt, y: &LocalInt) -> Result<LocalInt> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.extract(&self.o.add(&self.to_poly(x), &self.to_poly(y))))
    }

    pub fn sub(&self, x: &LocalInt, y: &LocalInt) -> Result<LocalInt> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.extract(&self.o.sub(&self.to_poly(x), &self.to_poly(y))))
    }

    pub fn mul(&self, x: &LocalInt, y: &LocalInt) -> Result<LocalInt> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.extract(&self.o.mul(&self.to_poly(x), &self.to_poly(y))))
    }

    pub fn neg(&self, x: &LocalInt) -> Result<LocalInt> {
        self.sub(&self.zero(), x)
    }

    /// The carry digit of [x] + [y] at position e: the unique P0 with
    /// [x] + [y] = [x+y] + pi^e [P0(x, y)] mod pi^{e+1}.
    pub fn carry_p0(&self, x: FqElem, y: FqElem) -> Result<FqElem> {
        if self.n_digits < self.e + 1 {
            return Err(Error::PrecisionExhausted {
                op: "carry_p0",
                needed: self.e + 1,
                available: self.n_digits,
            });
        }
        let lx = self.teichmuller_lift(x);
        let ly = self.teichmuller_lift(y);
        let s = self.add(&lx, &ly)?;
        Ok(s.digits[self.e])
    }

    /// Zero all digits at positions >= m.
    pub fn truncate(&self, x: &LocalInt, m: usize) -> Result<LocalInt> {
        self.check(x)?;
        if m > self.n_digits {
            return Err(Error::IndexOutOfRange(format!(
                "truncation level {m} exceeds precision {}",
                self.n_digits
            )));
        }
        let mut v = x.clone();
        for d in v.digits.iter_mut().skip(m) {
            *d = FqElem::ZERO;
        }
        Ok(v)
    }

    /// Index of the first nonzero digit; `None` is +infinity (the zero value).
    pub fn valuation(&self, x: &LocalInt) -> Option<usize> {
        x.digits.iter().position(|d| !d.is_zero())
    }

    /// Residue mod pi.
    pub fn residue(&self, x: &LocalInt) -> FqElem {
        x.digits[0]
    }

    /// Multiply by pi^k (digits shift up; overflow past N truncates, which is
    /// exact in O/pi^N).
    pub fn shift_up(&self, x: &LocalInt, k: usize) -> LocalInt {
        let mut v = self.zero();
        for i in (k..self.n_digits).rev() {
            v.digits[i] = x.digits[i - k];
        }
        v
    }

    /// Divide by pi^k assuming valuation >= k. Digits shift down; the top k
    /// digits of the result are filled with zeros and are NOT trustworthy --
    /// callers that shift must shrink their trusted-digit window by k.
    pub fn shift_down(&self, x: &LocalInt, k: usize) -> LocalInt {
        debug_assert!(x.digits.iter().take(k).all(|d| d.is_zero()));
        let mut v = self.zero();
        for i in 0..self.n_digits.saturating_sub(k) {
            v.digits[i] = x.digits[i + k];
        }
        v
    }

    /// Inverse of a unit (valuation zero).
    pub fn inv_unit(&self, x: &LocalInt) -> Result<LocalInt> {
        self.check(x)?;
        if self.residue(x).is_zero() {
            return Err(Error::NotInvertible);
        }
        let inv = self.o.inv_unit(&self.field, &self.to_poly(x))?;
        Ok(self.extract(&inv))
    }

    /// 2x2 matrix product with one digit-conversion round trip per entry
    /// (the entry-wise route would convert three times as often).
    pub(crate) fn mat_mul_entries(
        &self,
        a: &[LocalInt; 4],
        b: &[LocalInt; 4],
    ) -> Result<[LocalInt; 4]> {
        for x in a.iter().chain(b.iter()) {
            self.check(x)?;
        }
        let pa: Vec<OPoly> = a.iter().map(|x| self.to_poly(x)).collect();
        let pb: Vec<OPoly> = b.iter().map(|x| self.to_poly(x)).collect();
        let entry = |i: usize, j: usize, k: usize, l: usize| {
            self.extract(&self.o.add(
                &self.o.mul(&pa[i], &pb[j]),
                &self.o.mul(&pa[k], &pb[l]),
            ))
        };
        Ok([
            entry(0, 0, 1, 2),
            entry(0, 1, 1, 3),
            entry(2, 0, 3, 2),
            entry(2, 1, 3, 3),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u32, f: u32, e: u32, n: usize) -> RingContext {
        let field = Arc::new(FieldContext::new(p, f, None).unwrap());
        RingContext::new(field, e, n, None).unwrap()
    }

    #[test]
    fn teichmuller_of_two_matches_brute_force_in_z27() {
        // p=3, f=1, e=1, N=3: the lift of 2 is the unique t in Z/27 with
        // t^3 = t and t = 2 mod 3, namely 26 = 2 + 2*3 + 2*9.
        let mut witness = None;
        for t in 0u64..27 {
            if t % 3 == 2 && t.pow(3) % 27 == t {
                assert!(witness.is_none());
                witness = Some(t);
            }
        }
        assert_eq!(witness, Some(26));
        // Integer represented by a Teichmuller digit vector, using the
        // brute-forced representatives {0 -> 0, 1 -> 1, 2 -> 26}.
        let int_rep = |d: u32| -> u64 {
            (0..27u64)
                .find(|&t| t % 3 == d as u64 && t.pow(3) % 27 == t)
                .unwrap()
        };
        let r = ctx(3, 1, 1, 3);
        let lift = r.teichmuller_lift(FqElem(2));
        let value: u64 = lift
            .digits
            .iter()
            .enumerate()
            .map(|(i, d)| int_rep(d.0) * 3u64.pow(i as u32))
            .sum::<u64>()
            % 27;
        assert_eq!(value, 26);
        // A multiplicative representative is a single Teichmuller digit.
        assert_eq!(
            lift.digits.iter().map(|d| d.0).collect::<Vec<_>>(),
            vec![2, 0, 0]
        );
    }

    #[test]
    fn lift_of_zero_one_minus_one() {
        let r = ctx(3, 2, 1, 4);
        assert!(r.teichmuller_lift(FqElem::ZERO).is_zero());
        let one = r.teichmuller_lift(FqElem::ONE);
        assert_eq!(one.digits[0], FqElem::ONE);
        assert!(one.digits[1..].iter().all(|d| d.is_zero()));
        // [-1] = -[1] for odd q
        let m1 = r.teichmuller_lift(r.field().neg(FqElem::ONE));
        assert_eq!(m1, r.neg(&one).unwrap());
    }

    #[test]
    fn one_plus_one_carries_in_z9() {
        // p=3, f=1, e=1, N=2: [1] + [1] = 2 in Z/9, and [2] = 8, so the digit
        // form of 2 is (2, 1).
        let r = ctx(3, 1, 1, 2);
        let one = r.one();
        let s = r.add(&one, &one).unwrap();
        assert_eq!(s.digits.iter().map(|d| d.0).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn carry_p0_examples() {
        let r = ctx(3, 1, 1, 3);
        // In Z/27: [1]+[1] = 2, [2] = 26, (2 - 26)/3 = -8 = 1 mod 3.
        assert_eq!(r.carry_p0(FqElem::ONE, FqElem::ONE).unwrap(), FqElem(1));
        for x in r.field().elements() {
            assert_eq!(r.carry_p0(x, FqElem::ZERO).unwrap(), FqElem::ZERO);
            let negx = r.field().neg(x);
            assert_eq!(r.carry_p0(x, negx).unwrap(), FqElem::ZERO);
        }
    }

    #[test]
    fn carry_identity_all_pairs() {
        // Digit shape of [x]+[y]: (x+y, 0, ..., 0, P0(x,y), ...) with the
        // carry at position e.
        for (p, f, e) in [(3u32, 1u32, 1u32), (3, 2, 1), (3, 2, 2), (5, 1, 2)] {
            let r = ctx(p, f, e, e as usize + 3);
            let k = r.field().clone();
            for x in k.elements() {
                for y in k.elements() {
                    let s = r
                        .add(&r.teichmuller_lift(x), &r.teichmuller_lift(y))
                        .unwrap();
                    assert_eq!(s.digits[0], k.add(x, y));
                    for i in 1..e as usize {
                        assert!(s.digits[i].is_zero(), "p={p} f={f} e={e}");
                    }
                    assert_eq!(s.digits[e as usize], r.carry_p0(x, y).unwrap());
                }
            }
        }
    }

    #[test]
    fn teichmuller_is_multiplicative() {
        let r = ctx(3, 2, 2, 6);
        let k = r.field().clone();
        for x in k.elements() {
            for y in k.elements() {
                let lhs = r.teichmuller_lift(k.mul(x, y));
                let rhs = r
                    .mul(&r.teichmuller_lift(x), &r.teichmuller_lift(y))
                    .unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn ring_axioms_random_triples() {
        let r = ctx(3, 2, 2, 6);
        let k = r.field();
        // Deterministic pseudo-random digit patterns.
        let elems: Vec<LocalInt> = (0..12u32)
            .map(|s| {
                let digits: Vec<FqElem> = (0..r.precision() as u32)
                    .map(|i| FqElem((s * 7 + i * 13 + (s * i) % 5) % k.q()))
                    .collect();
                LocalInt { digits }
            })
            .collect();
        for a in &elems {
            for b in &elems {
                assert_eq!(r.add(a, b).unwrap(), r.add(b, a).unwrap());
                assert_eq!(r.mul(a, b).unwrap(), r.mul(b, a).unwrap());
                for c in elems.iter().take(4) {
                    let ab_c = r.mul(&r.mul(a, b).unwrap(), c).unwrap();
                    let a_bc = r.mul(a, &r.mul(b, c).unwrap()).unwrap();
                    assert_eq!(ab_c, a_bc);
                    let dist1 = r.mul(a, &r.add(b, c).unwrap()).unwrap();
                    let dist2 = r
                        .add(&r.mul(a, b).unwrap(), &r.mul(a, c).unwrap())
                        .unwrap();
                    assert_eq!(dist1, dist2);
                }
            }
        }
    }

    #[test]
    fn pi_truncation_and_valuation() {
        let r = ctx(3, 2, 1, 5);
        let x = r.pi_pow(r.precision() - 1);
        let shifted = r.shift_up(&x, 1);
        assert!(shifted.is_zero()); // pi^{N-1} * pi = 0
        assert_eq!(r.valuation(&r.zero()), None);
        assert_eq!(r.valuation(&r.pi_pow(2)), Some(2));
        let mut y = r.zero();
        y.digits[0] = FqElem(2);
        y.digits[1] = FqElem(5);
        assert_eq!(r.valuation(&y), Some(0));
        assert_eq!(r.truncate(&y, 1).unwrap().digits[1], FqElem::ZERO);
        assert_eq!(r.truncate(&y, r.precision()).unwrap(), y);
        assert!(r.truncate(&y, 0).unwrap().is_zero());
        assert!(r.truncate(&y, r.precision() + 1).is_err());
    }

    #[test]
    fn digit_roundtrip_is_identity() {
        let r = ctx(5, 1, 2, 6);
        let k = r.field();
        for seed in 0..40u32 {
            let digits: Vec<FqElem> = (0..6u32)
                .map(|i| FqElem((seed * 11 + i * 3 + seed % (i + 2)) % k.q()))
                .collect();
            let x = LocalInt { digits };
            let poly = r.to_poly(&x);
            assert_eq!(r.extract(&poly), x);
        }
    }

    #[test]
    fn eisenstein_default_pi_e_equals_p() {
        let r = ctx(5, 1, 2, 6);
        let pi2 = r.mul(&r.pi_pow(1), &r.pi_pow(1)).unwrap();
        assert_eq!(pi2, r.from_int(5));
        assert_eq!(pi2, r.pi_pow(2));
    }

    #[test]
    fn nondefault_eisenstein_polynomial() {
        // X^2 + pX - p over Q_3: Eisenstein, pi^2 = p - p*pi.
        let field = Arc::new(FieldContext::new(3, 1, None).unwrap());
        let r = RingContext::new(field, 2, 6, Some(vec![-3, 3, 1])).unwrap();
        let pi = r.pi_pow(1);
        let pi2 = r.mul(&pi, &pi).unwrap();
        let expect = r
            .sub(&r.from_int(3), &r.mul(&r.from_int(3), &pi).unwrap())
            .unwrap();
        assert_eq!(pi2, expect);
        // shift_down inverts shift_up below the truncation boundary
        let x = r.from_int(7);
        let up = r.shift_up(&x, 2);
        let down = r.shift_down(&up, 2);
        let trunc = r.truncate(&x, r.precision() - 2).unwrap();
        assert_eq!(down, trunc);
        // unit inversion
        let u = r.add(&r.one(), &pi).unwrap();
        let uinv = r.inv_unit(&u).unwrap();
        assert_eq!(r.mul(&u, &uinv).unwrap(), r.one());
        assert!(r.inv_unit(&pi).is_err());
    }

    #[test]
    fn context_mismatch_detected() {
        let r5 = ctx(3, 1, 1, 5);
        let r4 = ctx(3, 1, 1, 4);
        let x = r4.one();
        assert!(matches!(r5.add(&x, &x), Err(Error::ContextMismatch(_))));
    }
}
