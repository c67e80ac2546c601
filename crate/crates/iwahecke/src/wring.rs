//! Internal exact arithmetic backing the truncated local ring.
//!
//! Two layers, neither exposed outside the crate:
//!
//! * `WRing`: the unramified part, a Galois ring Z_{p^m}[y]/(h(y)) with h a
//!   lift of the residue-field modulus. Elements are coefficient vectors of
//!   length f with entries mod p^m.
//! * `ORing`: the full quotient O/pi^N, realized as W[X]/(E(X), X^N) for a
//!   monic Eisenstein polynomial E of degree e. Elements are polynomials of
//!   degree < e over W; the X^N = 0 truncation is enforced by callers only
//!   reading N Teichmuller digits.
//!
//! Working mod p^m with m = ceil(N/e) makes every coefficient exact in
//! O/pi^{em}, which contains O/pi^N; a division by pi loses exactly one digit
//! of trust, which the digit-extraction loop accounts for.

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::gf::{FieldContext, FqElem};

/// Unramified-part element: f coefficients mod p^m, stack-allocated (the
/// field-size cap keeps f <= 7).
pub(crate) type WElem = ArrayVec<u64, 8>;

/// Galois ring Z_{p^m}[y]/(h(y)).
pub(crate) struct WRing {
    pub p: u64,
    pub pm: u64,
    pub m: u32,
    pub f: usize,
    /// Monic modulus, integer lifts, length f+1.
    modulus: Vec<u64>,
}

impl WRing {
    pub fn new(field: &FieldContext, m: u32) -> Result<WRing> {
        let p = field.p() as u64;
        let pm = p.checked_pow(m).ok_or_else(|| {
            Error::InvalidParameter(format!("p^m overflows: p={p}, m={m}"))
        })?;
        if pm >= 1 << 31 {
            return Err(Error::InvalidParameter(format!(
                "characteristic p^m = {pm} exceeds supported range"
            )));
        }
        if field.f() > 8 {
            return Err(Error::InvalidParameter(
                "residue degree above 8 is out of scope".into(),
            ));
        }
        Ok(WRing {
            p,
            pm,
            m,
            f: field.f() as usize,
            modulus: field.modulus().iter().map(|&c| c as u64).collect(),
        })
    }

    pub fn zero(&self) -> WElem {
        (0..self.f).map(|_| 0).collect()
    }

    pub fn one(&self) -> WElem {
        let mut v = self.zero();
        v[0] = 1 % self.pm;
        v
    }

    pub fn from_i64(&self, c: i64) -> WElem {
        let mut v = self.zero();
        v[0] = c.rem_euclid(self.pm as i64) as u64;
        v
    }

    /// Lift the power-basis coordinates of an F_q element to integer
    /// coefficients.
    pub fn embed_fq(&self, field: &FieldContext, x: FqElem) -> WElem {
        let mut v: WElem = field.coeffs(x).iter().map(|&c| c as u64).collect();
        while v.len() < self.f {
            v.push(0);
        }
        v
    }

    /// Reduce mod p back to the residue field.
    pub fn residue(&self, field: &FieldContext, x: &WElem) -> FqElem {
        let coeffs: Vec<u32> = x.iter().map(|&c| (c % self.p) as u32).collect();
        field.from_coeffs(&coeffs)
    }

    pub fn is_zero(&self, x: &WElem) -> bool {
        x.iter().all(|&c| c == 0)
    }

    pub fn add(&self, x: &WElem, y: &WElem) -> WElem {
        x.iter().zip(y).map(|(&a, &b)| (a + b) % self.pm).collect()
    }

    pub fn sub(&self, x: &WElem, y: &WElem) -> WElem {
        x.iter()
            .zip(y)
            .map(|(&a, &b)| (a + self.pm - b) % self.pm)
            .collect()
    }

    pub fn neg(&self, x: &WElem) -> WElem {
        x.iter().map(|&a| (self.pm - a) % self.pm).collect()
    }

    pub fn mul(&self, x: &WElem, y: &WElem) -> WElem {
        // Convolve, then fold y^f down with the monic modulus.
        let mut conv = [0u128; 15];
        let conv = &mut conv[..2 * self.f - 1];
        for (i, &a) in x.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in y.iter().enumerate() {
                conv[i + j] += a as u128 * b as u128;
            }
        }
        let pm = self.pm as u128;
        for k in (self.f..conv.len()).rev() {
            let lead = conv[k] % pm;
            conv[k] = 0;
            if lead == 0 {
                continue;
            }
            // y^k = y^{k-f} * (-(lower part of modulus))
            for (j, &mj) in self.modulus[..self.f].iter().enumerate() {
                let idx = k - self.f + j;
                conv[idx] += lead * ((self.pm - mj % self.pm) as u128 % pm);
                conv[idx] %= pm;
            }
        }
        (0..self.f).map(|i| (conv[i] % pm) as u64).collect()
    }

    pub fn pow(&self, x: &WElem, mut e: u64) -> WElem {
        let mut base = x.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Exact division by p; `None` when some coefficient is not divisible.
    /// The top Witt digit of the result is undetermined; callers track how
    /// many digits they still trust.
    pub fn div_p(&self, x: &WElem) -> Option<WElem> {
        let mut out = WElem::new();
        for &c in x {
            if c % self.p != 0 {
                return None;
            }
            out.push(c / self.p);
        }
        Some(out)
    }

    /// Newton inverse of a unit (residue nonzero).
    pub fn inv_unit(&self, field: &FieldContext, x: &WElem) -> Result<WElem> {
        let r = self.residue(field, x);
        let rinv = field.inv(r).map_err(|_| Error::NotInvertible)?;
        let mut t = self.embed_fq(field, rinv);
        // x*t = 1 mod p; double the precision each step.
        let steps = 64 - (self.m as u64).leading_zeros() as usize + 2;
        for _ in 0..steps {
            // t <- t(2 - x t)
            let xt = self.mul(x, &t);
            let two_minus = self.sub(&self.from_i64(2), &xt);
            t = self.mul(&t, &two_minus);
        }
        let check = self.mul(x, &t);
        if check != self.one() {
            return Err(Error::Internal("Newton inverse failed to converge".into()));
        }
        Ok(t)
    }

    /// Teichmuller representative of x: the fixed point of t -> t^q above x.
    pub fn teichmuller(&self, field: &FieldContext, x: FqElem) -> Result<WElem> {
        let q = field.q() as u64;
        let mut t = self.embed_fq(field, x);
        let max_iter = self.m as usize + 2;
        for _ in 0..max_iter {
            let next = self.pow(&t, q);
            if next == t {
                return Ok(t);
            }
            t = next;
        }
        Err(Error::TeichmullerNonConvergence(max_iter))
    }
}

/// Element of O/pi^N in polynomial form: coefficients over W, degree < e.
pub(crate) type OPoly = Vec<WElem>;

/// The truncated ring O/pi^N = W[X]/(E(X), X^N).
pub(crate) struct ORing {
    pub w: WRing,
    pub e: usize,
    /// Lower coefficients c_0..c_{e-1} of the monic Eisenstein E.
    eis_low: Vec<WElem>,
    /// -(c_0/p)^{-1}, used when dividing by pi.
    neg_gamma_inv: WElem,
    /// Teichmuller table indexed by F_q element code.
    teich: Vec<WElem>,
    /// X^i reduced, for i = 0..n_digits.
    xpow: Vec<OPoly>,
    /// X^{e+k} reduced, for k = 0..e-1, used to fold products.
    xred: Vec<OPoly>,
}

impl ORing {
    pub fn new(
        field: &FieldContext,
        e: usize,
        n_digits: usize,
        eisenstein: &[i64],
    ) -> Result<ORing> {
        if e == 0 || n_digits == 0 {
            return Err(Error::InvalidParameter(
                "ramification index and precision must be positive".into(),
            ));
        }
        let m = n_digits.div_ceil(e) as u32;
        let w = WRing::new(field, m)?;
        let p = w.p as i64;
        if eisenstein.len() != e + 1 || eisenstein[e] != 1 {
            return Err(Error::InvalidParameter(
                "Eisenstein polynomial must be monic of degree e".into(),
            ));
        }
        for (i, &c) in eisenstein.iter().enumerate().take(e) {
            if c.rem_euclid(p) != 0 {
                return Err(Error::InvalidParameter(format!(
                    "Eisenstein coefficient {i} must be divisible by p"
                )));
            }
        }
        if (eisenstein[0] / p).rem_euclid(p) == 0 {
            return Err(Error::InvalidParameter(
                "Eisenstein constant term must have valuation exactly 1".into(),
            ));
        }
        let eis_low: Vec<WElem> = eisenstein[..e].iter().map(|&c| w.from_i64(c)).collect();
        let gamma = w.from_i64(eisenstein[0] / p);
        let neg_gamma_inv = w.neg(&w.inv_unit(field, &gamma)?);

        let teich: Result<Vec<WElem>> = field
            .elements()
            .map(|x| w.teichmuller(field, x))
            .collect();
        let teich = teich?;

        let mut ring = ORing {
            w,
            e,
            eis_low,
            neg_gamma_inv,
            teich,
            xpow: vec![],
            xred: vec![],
        };

        // X^e = -(c_{e-1} X^{e-1} + ... + c_0); fold X^{e+k} iteratively.
        let mut xred: Vec<OPoly> = Vec::with_capacity(e);
        let xe: OPoly = (0..e).map(|i| ring.w.neg(&ring.eis_low[i])).collect();
        xred.push(xe.clone());
        for k in 1..e {
            let prev = xred[k - 1].clone();
            xred.push(ring.mul_by_x_reduced(&prev, &xe));
        }
        ring.xred = xred;

        let mut xpow = Vec::with_capacity(n_digits + 1);
        xpow.push(ring.one());
        for i in 1..=n_digits {
            let prev = xpow[i - 1].clone();
            xpow.push(ring.mul_by_x_reduced(&prev, &xe));
        }
        ring.xpow = xpow;
        Ok(ring)
    }

    fn mul_by_x_reduced(&self, v: &OPoly, xe: &OPoly) -> OPoly {
        // v * X with the top coefficient folded through X^e = xe.
        let mut out = vec![self.w.zero(); self.e];
        for i in 0..self.e - 1 {
            out[i + 1] = v[i].clone();
        }
        let top = &v[self.e - 1];
        if !self.w.is_zero(top) {
            for i in 0..self.e {
                let t = self.w.mul(top, &xe[i]);
                out[i] = self.w.add(&out[i], &t);
            }
        }
        out
    }

    pub fn zero(&self) -> OPoly {
        vec![self.w.zero(); self.e]
    }

    pub fn one(&self) -> OPoly {
        let mut v = self.zero();
        v[0] = self.w.one();
        v
    }

    pub fn teich(&self, x: FqElem) -> &WElem {
        &self.teich[x.0 as usize]
    }

    pub fn teich_poly(&self, x: FqElem) -> OPoly {
        let mut v = self.zero();
        v[0] = self.teich[x.0 as usize].clone();
        v
    }

    pub fn xpow(&self, i: usize) -> &OPoly {
        &self.xpow[i]
    }

    pub fn add(&self, x: &OPoly, y: &OPoly) -> OPoly {
        x.iter().zip(y).map(|(a, b)| self.w.add(a, b)).collect()
    }

    pub fn sub(&self, x: &OPoly, y: &OPoly) -> OPoly {
        x.iter().zip(y).map(|(a, b)| self.w.sub(a, b)).collect()
    }

    pub fn mul(&self, x: &OPoly, y: &OPoly) -> OPoly {
        let e = self.e;
        if e == 1 {
            return vec![self.w.mul(&x[0], &y[0])];
        }
        let mut conv: Vec<WElem> = vec![self.w.zero(); 2 * e - 1];
        for i in 0..e {
            if self.w.is_zero(&x[i]) {
                continue;
            }
            for j in 0..e {
                let t = self.w.mul(&x[i], &y[j]);
                conv[i + j] = self.w.add(&conv[i + j], &t);
            }
        }
        let mut out: OPoly = conv[..e].to_vec();
        for k in e..2 * e - 1 {
            if self.w.is_zero(&conv[k]) {
                continue;
            }
            let red = &self.xred[k - e];
            for i in 0..e {
                let t = self.w.mul(&conv[k], &red[i]);
                out[i] = self.w.add(&out[i], &t);
            }
        }
        out
    }

    pub fn is_zero(&self, x: &OPoly) -> bool {
        x.iter().all(|c| self.w.is_zero(c))
    }

    /// Residue mod pi.
    pub fn residue(&self, field: &FieldContext, x: &OPoly) -> FqElem {
        self.w.residue(field, &x[0])
    }

    /// Exact division by pi of an element with positive valuation.
    /// The result is trustworthy to one digit less than the input.
    pub fn div_pi(&self, x: &OPoly) -> Result<OPoly> {
        // x = pi*u. Writing x = sum w_i X^i: u_{e-1} = -(w_0/p) gamma^{-1},
        // u_{i-1} = w_i + u_{e-1} c_i.
        let w0_over_p = self.w.div_p(&x[0]).ok_or_else(|| {
            Error::Internal("division by pi of an element with nonzero residue".into())
        })?;
        let u_top = self.w.mul(&w0_over_p, &self.neg_gamma_inv);
        let mut out = vec![self.w.zero(); self.e];
        for i in 1..self.e {
            let corr = self.w.mul(&u_top, &self.eis_low[i]);
            out[i - 1] = self.w.add(&x[i], &corr);
        }
        out[self.e - 1] = u_top;
        Ok(out)
    }

    /// Canonical Teichmuller digits: peel the residue, subtract its lift,
    /// divide by pi, repeat. The lift only touches the constant coefficient,
    /// so the subtraction is done in place.
    pub fn to_digits(&self, field: &FieldContext, x: &OPoly, count: usize) -> Result<Vec<FqElem>> {
        let mut digits = Vec::with_capacity(count);
        let mut v = x.clone();
        for _ in 0..count {
            let d = self.residue(field, &v);
            digits.push(d);
            if !d.is_zero() {
                v[0] = self.w.sub(&v[0], self.teich(d));
            }
            v = self.div_pi(&v)?;
        }
        Ok(digits)
    }

    /// sum [digit_i] X^i, using that each term is a W-scalar multiple of a
    /// precomputed power of X.
    pub fn from_digits(&self, digits: &[FqElem]) -> OPoly {
        let mut acc = self.zero();
        for (i, &d) in digits.iter().enumerate() {
            if d.is_zero() {
                continue;
            }
            let t = self.teich(d);
            for (j, xc) in self.xpow(i).iter().enumerate() {
                if !self.w.is_zero(xc) {
                    acc[j] = self.w.add(&acc[j], &self.w.mul(t, xc));
                }
            }
        }
        acc
    }

    /// Newton inverse of a unit.
    pub fn inv_unit(&self, field: &FieldContext, x: &OPoly) -> Result<OPoly> {
        let r = self.residue(field, x);
        if r.is_zero() {
            return Err(Error::NotInvertible);
        }
        let rinv = field.inv(r)?;
        let mut t = self.teich_poly(rinv);
        let steps = {
            // Each step doubles pi-adic precision; start from 1 digit.
            let mut s = 0usize;
            let mut reach = 1usize;
            while reach < self.e * self.w.m as usize {
                reach *= 2;
                s += 1;
            }
            s + 1
        };
        let two = {
            let mut v = self.zero();
            v[0] = self.w.from_i64(2);
            v
        };
        for _ in 0..steps {
            let xt = self.mul(x, &t);
            let corr = self.sub(&two, &xt);
            t = self.mul(&t, &corr);
        }
        let check = self.mul(x, &t);
        if !self.is_zero(&self.sub(&check, &self.one())) {
            return Err(Error::Internal("ring inverse failed to converge".into()));
        }
        Ok(t)
    }
}
