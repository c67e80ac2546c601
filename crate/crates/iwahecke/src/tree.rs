//! Canonical cosets of G/IZ on the Bruhat-Tits tree, the left action on the
//! compactly induced character module, and the distinguished sphere sums.
//!
//! Coset representatives come in four families, parameterized by a depth m,
//! a truncated digit sum lambda in I_m, an optional extra digit ("tail"), and
//! a beta flag:
//!
//! * no tail, beta false: `g0(m, lambda) = [[pi^m, lambda], [0, 1]]`
//! * tail mu, beta false: `g0(m, lambda) * u([mu]) * w`
//! * beta true: the same two matrices premultiplied by beta = [[0,1],[pi,0]]
//!
//! The ball index of a representative is m (no tail) or m+1 (tail); the ball
//! of radius t is every representative of ball index <= t on both beta sides.
//!
//! `coset_reduce` maps an arbitrary invertible 2x2 matrix over O/pi^N to its
//! canonical representative together with the character value of the Iwahori
//! part, implementing the module rule [g k, 1] = chi_r(k) [g, 1].

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{FieldContext, FqElem};
use crate::localring::{LocalInt, RingContext};

/// Canonical representative of a coset in G/IZ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CosetRep {
    /// Premultiplied by beta (the "one side" of the tree).
    pub beta: bool,
    /// Depth of the digit prefix lambda.
    pub depth: u32,
    /// Digits of lambda in I_depth, lowest first; length == depth.
    pub lambda: Vec<FqElem>,
    /// Extra digit for the `g0 u([mu]) w` families.
    pub tail: Option<FqElem>,
}

impl CosetRep {
    pub fn identity() -> CosetRep {
        CosetRep {
            beta: false,
            depth: 0,
            lambda: vec![],
            tail: None,
        }
    }

    pub fn beta_rep() -> CosetRep {
        CosetRep {
            beta: true,
            depth: 0,
            lambda: vec![],
            tail: None,
        }
    }

    /// Radius of the smallest ball containing this representative.
    pub fn ball_index(&self) -> u32 {
        self.depth + self.tail.is_some() as u32
    }

    /// Flip the beta flag; exact because beta^2 is central.
    pub fn beta_flip(&self) -> CosetRep {
        let mut r = self.clone();
        r.beta = !r.beta;
        r
    }
}

impl Ord for CosetRep {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Lexicographic by (beta, ball index, tail presence, digit string).
        (
            self.beta,
            self.ball_index(),
            self.tail.is_some(),
            &self.lambda,
            self.tail,
        )
            .cmp(&(
                other.beta,
                other.ball_index(),
                other.tail.is_some(),
                &other.lambda,
                other.tail,
            ))
    }
}

impl PartialOrd for CosetRep {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for CosetRep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.beta {
            write!(f, "beta*")?;
        }
        let digits: Vec<String> = self.lambda.iter().map(|d| d.0.to_string()).collect();
        write!(f, "g0({},[{}])", self.depth, digits.join(","))?;
        if let Some(mu) = self.tail {
            write!(f, "*u({})*w", mu.0)?;
        }
        Ok(())
    }
}

/// 2x2 matrix over O/pi^N with a factored central pi-power and a trusted
/// digit window.
///
/// `precision` counts the low digits of each entry that are meaningful;
/// dividing the whole matrix by pi shrinks it by one. Central pi powers act
/// trivially on the module, so `scale` never influences reduction output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GMat2 {
    /// Row-major [a, b, c, d].
    pub entries: [LocalInt; 4],
    pub scale: i64,
    pub precision: usize,
}

impl GMat2 {
    pub fn from_entries(ring: &RingContext, entries: [LocalInt; 4]) -> GMat2 {
        GMat2 {
            entries,
            scale: 0,
            precision: ring.precision(),
        }
    }

    pub fn identity(ring: &RingContext) -> GMat2 {
        GMat2::from_entries(
            ring,
            [ring.one(), ring.zero(), ring.zero(), ring.one()],
        )
    }

    pub fn mul(&self, ring: &RingContext, other: &GMat2) -> Result<GMat2> {
        Ok(GMat2 {
            entries: ring.mat_mul_entries(&self.entries, &other.entries)?,
            scale: self.scale + other.scale,
            precision: self.precision.min(other.precision),
        })
    }
}

/// Finite F_q-linear combination of basis functions [g, 1], keyed by
/// canonical coset representative. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModuleVec {
    pub terms: BTreeMap<CosetRep, FqElem>,
}

impl ModuleVec {
    pub fn zero() -> ModuleVec {
        ModuleVec::default()
    }

    pub fn term(rep: CosetRep, coeff: FqElem) -> ModuleVec {
        let mut v = ModuleVec::zero();
        if !coeff.is_zero() {
            v.terms.insert(rep, coeff);
        }
        v
    }

    pub fn basis(rep: CosetRep) -> ModuleVec {
        ModuleVec::term(rep, FqElem::ONE)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, field: &FieldContext, rep: CosetRep, coeff: FqElem) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(rep) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = field.add(*e.get(), coeff);
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, field: &FieldContext, other: &ModuleVec) -> ModuleVec {
        let mut out = self.clone();
        for (rep, &c) in &other.terms {
            out.add_term(field, rep.clone(), c);
        }
        out
    }

    pub fn sub(&self, field: &FieldContext, other: &ModuleVec) -> ModuleVec {
        let mut out = self.clone();
        for (rep, &c) in &other.terms {
            out.add_term(field, rep.clone(), field.neg(c));
        }
        out
    }

    pub fn scale(&self, field: &FieldContext, c: FqElem) -> ModuleVec {
        let mut out = ModuleVec::zero();
        for (rep, &x) in &self.terms {
            out.add_term(field, rep.clone(), field.mul(x, c));
        }
        out
    }

    /// Largest ball index in the support; `None` for the zero vector.
    pub fn support_radius(&self) -> Option<u32> {
        self.terms.keys().map(|r| r.ball_index()).max()
    }

    /// Canonical JSON form: terms in ball order, field elements as integer
    /// codes (`sum c_i p^i` over the power basis).
    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|(rep, c)| {
                serde_json::json!({
                    "beta": rep.beta,
                    "m": rep.depth,
                    "lambda": rep.lambda.iter().map(|d| d.0).collect::<Vec<u32>>(),
                    "tail": rep.tail.map(|d| d.0),
                    "coeff": c.0,
                })
            })
            .collect();
        serde_json::json!({ "terms": terms })
    }

    pub fn from_json(field: &FieldContext, v: &serde_json::Value) -> Result<ModuleVec> {
        let terms = v
            .get("terms")
            .and_then(|t| t.as_array())
            .ok_or_else(|| Error::InvalidParameter("module vector JSON lacks terms".into()))?;
        let mut out = ModuleVec::zero();
        for t in terms {
            let beta = t["beta"].as_bool().unwrap_or(false);
            let depth = t["m"].as_u64().unwrap_or(0) as u32;
            let lambda: Vec<FqElem> = t["lambda"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .map(|x| field.elem(x.as_u64().unwrap_or(0) as u32))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?
                .unwrap_or_default();
            if lambda.len() != depth as usize {
                return Err(Error::InvalidParameter(
                    "lambda length disagrees with depth".into(),
                ));
            }
            let tail = match t.get("tail") {
                Some(serde_json::Value::Null) | None => None,
                Some(x) => Some(field.elem(x.as_u64().unwrap_or(0) as u32)?),
            };
            let coeff = field.elem(t["coeff"].as_u64().unwrap_or(0) as u32)?;
            out.add_term(
                field,
                CosetRep {
                    beta,
                    depth,
                    lambda,
                    tail,
                },
                coeff,
            );
        }
        Ok(out)
    }
}

/// Ordered basis of the ball of radius t (both beta sides), with an index.
#[derive(Debug)]
pub struct BallBasis {
    pub t: usize,
    pub reps: Vec<CosetRep>,
    index: HashMap<CosetRep, usize>,
}

impl BallBasis {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn position(&self, rep: &CosetRep) -> Option<usize> {
        self.index.get(rep).copied()
    }

    /// Sparse coordinates of a vector; errors if the support leaves the ball.
    pub fn coords(&self, v: &ModuleVec) -> Result<Vec<(u32, FqElem)>> {
        let mut out = Vec::with_capacity(v.terms.len());
        for (rep, &c) in &v.terms {
            let i = self.position(rep).ok_or_else(|| {
                Error::SupportExceedsBall(format!("{rep} outside ball of radius {}", self.t))
            })?;
            out.push((i as u32, c));
        }
        out.sort_unstable_by_key(|&(i, _)| i);
        Ok(out)
    }
}

/// All digit tuples of length n over F_q, ordered with digit 0 most
/// significant (lexicographic as strings).
pub fn digit_tuples(field: &FieldContext, n: usize) -> Vec<Vec<FqElem>> {
    let q = field.q() as usize;
    let total = q.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut digits = vec![FqElem::ZERO; n];
        let mut c = code;
        for j in (0..n).rev() {
            digits[j] = FqElem((c % q) as u32);
            c /= q;
        }
        out.push(digits);
    }
    out
}

/// A labeled pro-p Iwahori generator.
#[derive(Debug, Clone)]
pub struct IgenElement {
    pub label: String,
    pub mat: GMat2,
}

/// Context for the compactly induced module: the local ring plus the weight r
/// of the inducing character.
pub struct InducedModule {
    ring: Arc<RingContext>,
    r: u64,
}

impl InducedModule {
    pub fn new(ring: Arc<RingContext>, r: u64) -> Result<InducedModule> {
        let q = ring.field().q() as u64;
        if r == 0 || r >= q - 1 {
            return Err(Error::InvalidParameter(format!(
                "character weight must satisfy 0 < r < q-1, got r={r}, q={q}"
            )));
        }
        Ok(InducedModule { ring, r })
    }

    pub fn ring(&self) -> &Arc<RingContext> {
        &self.ring
    }

    pub fn field(&self) -> &Arc<FieldContext> {
        self.ring.field()
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    // ---- named matrices ----

    pub fn mat_w(&self) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(r, [r.zero(), r.one(), r.one(), r.zero()])
    }

    pub fn mat_alpha(&self) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(r, [r.one(), r.zero(), r.zero(), r.pi_pow(1)])
    }

    pub fn mat_beta(&self) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(r, [r.zero(), r.one(), r.pi_pow(1), r.zero()])
    }

    /// Upper unipotent [[1, x], [0, 1]].
    pub fn mat_upper(&self, x: &LocalInt) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(r, [r.one(), x.clone(), r.zero(), r.one()])
    }

    /// Lower unipotent [[1, 0], [x, 1]].
    pub fn mat_lower(&self, x: &LocalInt) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(r, [r.one(), r.zero(), x.clone(), r.one()])
    }

    pub fn mat_diag(&self, a: &LocalInt, d: &LocalInt) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(r, [a.clone(), r.zero(), r.zero(), d.clone()])
    }

    /// g0(n, lambda) = [[pi^n, lambda], [0, 1]].
    pub fn mat_g0(&self, n: usize, lambda: &LocalInt) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(r, [r.pi_pow(n), lambda.clone(), r.zero(), r.one()])
    }

    /// g1(n, lambda) = [[1, 0], [pi lambda, pi^{n+1}]].
    pub fn mat_g1(&self, n: usize, lambda: &LocalInt) -> GMat2 {
        let r = &*self.ring;
        GMat2::from_entries(
            r,
            [
                r.one(),
                r.zero(),
                r.shift_up(lambda, 1),
                r.pi_pow(n + 1),
            ],
        )
    }

    // ---- representative matrices and reduction ----

    /// The literal matrix of a canonical representative.
    pub fn rep_matrix(&self, rep: &CosetRep) -> Result<GMat2> {
        let ring = &*self.ring;
        let need = rep.ball_index() as usize + 1;
        if need > ring.precision() {
            return Err(Error::PrecisionExhausted {
                op: "rep_matrix",
                needed: need,
                available: ring.precision(),
            });
        }
        let lambda = ring.from_digit_slice(&rep.lambda)?;
        let m = rep.depth as usize;
        let side0 = match rep.tail {
            None => self.mat_g0(m, &lambda),
            Some(mu) => {
                // g0(m, lambda) u([mu]) w = [[T, pi^m], [1, 0]] with
                // T = lambda + pi^m [mu].
                let mut digits = rep.lambda.clone();
                digits.push(mu);
                let t = ring.from_digit_slice(&digits)?;
                GMat2::from_entries(ring, [t, ring.pi_pow(m), ring.one(), ring.zero()])
            }
        };
        if rep.beta {
            self.mat_beta().mul(ring, &side0)
        } else {
            Ok(side0)
        }
    }

    /// chi_r of an element of IZ: the r-th power of the residue of the lower
    /// right entry, after removing the central pi power.
    pub fn chi_r(&self, k: &GMat2) -> Result<FqElem> {
        let mut m = k.clone();
        self.normalize_scale(&mut m)?;
        let field = self.field();
        let da = digit_at(&m.entries[0], 0, m.precision, "chi_r")?;
        let dc = digit_at(&m.entries[2], 0, m.precision, "chi_r")?;
        let dd = digit_at(&m.entries[3], 0, m.precision, "chi_r")?;
        if !dc.is_zero() || da.is_zero() || dd.is_zero() {
            return Err(Error::NotInIwahori);
        }
        field.pow(dd, self.r as i64)
    }

    /// Divide out the largest central pi power within the trusted window.
    fn normalize_scale(&self, m: &mut GMat2) -> Result<()> {
        let ring = &*self.ring;
        for v in 0..m.precision {
            if m.entries.iter().any(|x| !x.digits[v].is_zero()) {
                if v > 0 {
                    for x in m.entries.iter_mut() {
                        *x = ring.shift_down(x, v);
                    }
                    m.scale += v as i64;
                    m.precision -= v;
                }
                return Ok(());
            }
        }
        if m.precision == ring.precision() {
            Err(Error::NotInvertible)
        } else {
            Err(Error::PrecisionExhausted {
                op: "normalize_scale",
                needed: m.precision,
                available: m.precision,
            })
        }
    }

    /// Canonical reduction: returns (rep, c) with g = rep_matrix(rep) * k,
    /// k in IZ, and c = chi_r(k), so [g, 1] = c [rep, 1].
    pub fn coset_reduce(&self, g: &GMat2) -> Result<(CosetRep, FqElem)> {
        let ring = &*self.ring;
        let field = self.field();
        let mut m = g.clone();
        self.normalize_scale(&mut m)?;

        // Side test: the two side-0 families have a bottom-row unit.
        let c0 = digit_at(&m.entries[2], 0, m.precision, "coset_reduce")?;
        let d0 = digit_at(&m.entries[3], 0, m.precision, "coset_reduce")?;
        let mut beta = false;
        if c0.is_zero() && d0.is_zero() {
            // beta side: replace m by (beta * m) / pi and flip.
            beta = true;
            let [a, b, c, d] = m.entries.clone();
            m.entries = [ring.shift_down(&c, 1), ring.shift_down(&d, 1), a, b];
            m.precision -= 1;
            m.scale += 1;
            if m.precision == 0 {
                return Err(Error::PrecisionExhausted {
                    op: "coset_reduce",
                    needed: 1,
                    available: 0,
                });
            }
        }

        let [a, b, c, d] = m.entries.clone();
        let prec = m.precision;
        let c0 = digit_at(&c, 0, prec, "coset_reduce")?;
        if c0.is_zero() {
            // g0 family: clear the lower left, then peel digits.
            let d_inv = ring.inv_unit(&d)?;
            let a1 = ring.sub(&a, &ring.mul(&b, &ring.mul(&c, &d_inv)?)?)?;
            let n = val_within(&a1, prec, "coset_reduce/g0")?;
            let bd = ring.mul(&b, &d_inv)?;
            let lambda = bd.digits[..n].to_vec();
            let scalar = field.pow(d.digits[0], self.r as i64)?;
            Ok((
                CosetRep {
                    beta,
                    depth: n as u32,
                    lambda,
                    tail: None,
                },
                scalar,
            ))
        } else {
            // g0 u w family: clear the lower right instead.
            let c_inv = ring.inv_unit(&c)?;
            let a1 = ring.mul(&a, &c_inv)?;
            let b1 = ring.sub(&b, &ring.mul(&a1, &d)?)?;
            let mdepth = val_within(&b1, prec, "coset_reduce/g0uw")?;
            let lambda = a1.digits[..mdepth].to_vec();
            let tail = a1.digits[mdepth];
            let scalar = field.pow(b1.digits[mdepth], self.r as i64)?;
            Ok((
                CosetRep {
                    beta,
                    depth: mdepth as u32,
                    lambda,
                    tail: Some(tail),
                },
                scalar,
            ))
        }
    }

    /// Left action of g on a single basis function.
    pub fn act_on_rep(&self, g: &GMat2, rep: &CosetRep) -> Result<(CosetRep, FqElem)> {
        let m = g.mul(&self.ring, &self.rep_matrix(rep)?)?;
        self.coset_reduce(&m)
    }

    /// Left action of g: linear extension of [h,1] -> [g h, 1].
    pub fn act(&self, g: &GMat2, v: &ModuleVec) -> Result<ModuleVec> {
        let field = self.field();
        let mut out = ModuleVec::zero();
        for (rep, &coeff) in &v.terms {
            let (rep2, s) = self.act_on_rep(g, rep)?;
            out.add_term(field, rep2, field.mul(coeff, s));
        }
        Ok(out)
    }

    /// Right translation inside the bracket: [h,1] -> [h x, 1], linearly.
    /// This commutes with the left action; the Hecke operators are sums of
    /// these.
    pub fn right_translate(&self, v: &ModuleVec, x: &GMat2) -> Result<ModuleVec> {
        let field = self.field();
        let mut out = ModuleVec::zero();
        for (rep, &coeff) in &v.terms {
            let m = self.rep_matrix(rep)?.mul(&self.ring, x)?;
            let (rep2, s) = self.coset_reduce(&m)?;
            out.add_term(field, rep2, field.mul(coeff, s));
        }
        Ok(out)
    }

    // ---- distinguished vectors ----

    /// s_n^k: the depth-n sphere on the g0 side weighted by the k-th power of
    /// the top digit. `make_s(0, 0) = [Id, 1]`.
    pub fn make_s(&self, n: usize, k: u64) -> Result<ModuleVec> {
        let field = self.field();
        if n == 0 {
            if k != 0 {
                return Err(Error::InvalidParameter(
                    "s_0^k is only defined for k = 0".into(),
                ));
            }
            return Ok(ModuleVec::basis(CosetRep::identity()));
        }
        let mut out = ModuleVec::zero();
        for digits in digit_tuples(field, n) {
            let coeff = field.pow(digits[n - 1], k as i64)?;
            out.add_term(
                field,
                CosetRep {
                    beta: false,
                    depth: n as u32,
                    lambda: digits,
                    tail: None,
                },
                coeff,
            );
        }
        Ok(out)
    }

    /// t_n^s: the depth-n sphere on the g0 u w side weighted by the s-th
    /// power of the top digit. `make_t(0, 0) = [beta, 1]`, the degenerate
    /// ball-index-zero member of the family (the unique choice annihilated
    /// together with s_1^{q-1-r} by the downward Hecke operator).
    pub fn make_t(&self, n: usize, s: u64) -> Result<ModuleVec> {
        let field = self.field();
        if n == 0 {
            if s != 0 {
                return Err(Error::InvalidParameter(
                    "t_0^s is only defined for s = 0".into(),
                ));
            }
            return Ok(ModuleVec::basis(CosetRep::beta_rep()));
        }
        let mut out = ModuleVec::zero();
        for digits in digit_tuples(field, n) {
            let coeff = field.pow(digits[n - 1], s as i64)?;
            let (lambda, tail) = (digits[..n - 1].to_vec(), digits[n - 1]);
            out.add_term(
                field,
                CosetRep {
                    beta: false,
                    depth: (n - 1) as u32,
                    lambda,
                    tail: Some(tail),
                },
                coeff,
            );
        }
        Ok(out)
    }

    /// Exact beta translate: beta [rep, 1] flips the beta flag (beta^2 is
    /// central and acts trivially).
    pub fn beta_translate(&self, v: &ModuleVec) -> ModuleVec {
        let mut out = ModuleVec::zero();
        for (rep, &c) in &v.terms {
            out.terms.insert(rep.beta_flip(), c);
        }
        out
    }

    // ---- bases and generator sets ----

    /// Every representative of ball index <= t, in the documented order.
    pub fn ball_basis(&self, t: usize) -> BallBasis {
        let field = self.field();
        let mut reps = Vec::new();
        for beta in [false, true] {
            for bi in 0..=t {
                for lambda in digit_tuples(field, bi) {
                    reps.push(CosetRep {
                        beta,
                        depth: bi as u32,
                        lambda,
                        tail: None,
                    });
                }
                if bi >= 1 {
                    for lambda in digit_tuples(field, bi - 1) {
                        for tail in field.elements() {
                            reps.push(CosetRep {
                                beta,
                                depth: (bi - 1) as u32,
                                lambda: lambda.clone(),
                                tail: Some(tail),
                            });
                        }
                    }
                }
            }
        }
        let index = reps
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        BallBasis { t, reps, index }
    }

    /// Size of the ball of radius t: 2 (1 + 2 sum_{n=1}^t q^n).
    pub fn ball_size(&self, t: usize) -> usize {
        let q = self.field().q() as usize;
        let mut s = 0usize;
        let mut qn = 1usize;
        for _ in 1..=t {
            qn *= q;
            s += qn;
        }
        2 * (1 + 2 * s)
    }

    /// Generators for the pro-p Iwahori action at depth t: digit unipotents
    /// and diagonals at each level j <= t, for an F_p-basis of F_q.
    pub fn igen_set(&self, t: usize) -> Vec<IgenElement> {
        let ring = &*self.ring;
        let mut out = Vec::new();
        for j in 0..=t {
            for b in self.field().prime_basis() {
                let lift = ring.teichmuller_lift(b);
                let upper = ring.shift_up(&lift, j);
                out.push(IgenElement {
                    label: format!("u([{}]*pi^{})", b.0, j),
                    mat: self.mat_upper(&upper),
                });
                let lower = ring.shift_up(&lift, j + 1);
                out.push(IgenElement {
                    label: format!("l([{}]*pi^{})", b.0, j + 1),
                    mat: self.mat_lower(&lower),
                });
                let diag = ring
                    .add(&ring.one(), &ring.shift_up(&lift, j + 1))
                    .expect("context-local addition");
                out.push(IgenElement {
                    label: format!("d(1+[{}]*pi^{})", b.0, j + 1),
                    mat: self.mat_diag(&diag, &ring.one()),
                });
            }
        }
        out
    }
}

fn digit_at(x: &LocalInt, i: usize, prec: usize, op: &'static str) -> Result<FqElem> {
    if i < prec {
        Ok(x.digits[i])
    } else {
        Err(Error::PrecisionExhausted {
            op,
            needed: i,
            available: prec,
        })
    }
}

fn val_within(x: &LocalInt, prec: usize, op: &'static str) -> Result<usize> {
    for (i, d) in x.digits.iter().take(prec).enumerate() {
        if !d.is_zero() {
            return Ok(i);
        }
    }
    Err(Error::PrecisionExhausted {
        op,
        needed: prec,
        available: prec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn module(p: u32, f: u32, e: u32, r: u64, depth: usize) -> InducedModule {
        let field = Arc::new(FieldContext::new(p, f, None).unwrap());
        let n = depth + 1 + e as usize + 2;
        let ring = Arc::new(RingContext::new(field, e, n, None).unwrap());
        InducedModule::new(ring, r).unwrap()
    }

    #[test]
    fn rep_matrix_examples() {
        let md = module(3, 2, 1, 4, 2);
        let ring = md.ring().clone();
        // Identity representative.
        let id = md.rep_matrix(&CosetRep::identity()).unwrap();
        assert_eq!(id, GMat2::identity(&ring));
        // Tail representative at depth 0: u([mu]) w = [[mu, 1], [1, 0]].
        let mu = FqElem(5);
        let rep = CosetRep {
            beta: false,
            depth: 0,
            lambda: vec![],
            tail: Some(mu),
        };
        let m = md.rep_matrix(&rep).unwrap();
        assert_eq!(m.entries[0], ring.teichmuller_lift(mu));
        assert_eq!(m.entries[1], ring.one());
        assert_eq!(m.entries[2], ring.one());
        assert!(m.entries[3].is_zero());
        // The beta variant equals beta * g0(n, lambda), i.e. g1(n, lambda) w.
        let lam = ring.from_digit_slice(&[FqElem(2)]).unwrap();
        let rep_b = CosetRep {
            beta: true,
            depth: 1,
            lambda: vec![FqElem(2)],
            tail: None,
        };
        let lhs = md.rep_matrix(&rep_b).unwrap();
        let rhs = md
            .mat_g1(1, &lam)
            .mul(&ring, &md.mat_w())
            .unwrap();
        assert_eq!(lhs.entries, rhs.entries);
    }

    #[test]
    fn chi_r_examples() {
        let md = module(3, 2, 1, 4, 2);
        let ring = md.ring().clone();
        let k = md.field().clone();
        assert_eq!(md.chi_r(&GMat2::identity(&ring)).unwrap(), FqElem::ONE);
        // chi_r(diag(a, d)) = d^r
        for a in k.units() {
            for d in k.units() {
                let m = md.mat_diag(&ring.teichmuller_lift(a), &ring.teichmuller_lift(d));
                assert_eq!(md.chi_r(&m).unwrap(), k.pow(d, 4).unwrap());
            }
        }
        // central pi acts trivially
        let pi_id = md.mat_diag(&ring.pi_pow(1), &ring.pi_pow(1));
        assert_eq!(md.chi_r(&pi_id).unwrap(), FqElem::ONE);
        // w is not in IZ
        assert!(md.chi_r(&md.mat_w()).is_err());
    }

    #[test]
    fn reduce_is_canonical_on_ball_reps() {
        let md = module(3, 2, 1, 4, 2);
        for rep in md.ball_basis(2).reps {
            let m = md.rep_matrix(&rep).unwrap();
            let (back, scalar) = md.coset_reduce(&m).unwrap();
            assert_eq!(back, rep, "rep {rep} not canonical");
            assert_eq!(scalar, FqElem::ONE);
        }
    }

    #[test]
    fn reduce_beta_squared_is_identity() {
        let md = module(7, 1, 1, 3, 2);
        let b = md.mat_beta();
        let bb = b.mul(md.ring(), &b).unwrap();
        let (rep, s) = md.coset_reduce(&bb).unwrap();
        assert_eq!(rep, CosetRep::identity());
        assert_eq!(s, FqElem::ONE);
    }

    #[test]
    fn cocycle_consistency_under_iwahori_right_multiplication() {
        let md = module(3, 2, 1, 4, 2);
        let ring = md.ring().clone();
        let k = md.field().clone();
        // A few Iwahori elements [[a, b], [pi c, d]].
        let mut iwahoris = Vec::new();
        for (ai, di, bi, ci) in [(1u32, 1u32, 0u32, 0u32), (2, 5, 3, 1), (7, 2, 8, 4), (4, 4, 1, 7)] {
            let a = ring.teichmuller_lift(FqElem(ai));
            let d = ring.teichmuller_lift(FqElem(di));
            let b = ring.teichmuller_lift(FqElem(bi % k.q()));
            let c = ring.shift_up(&ring.teichmuller_lift(FqElem(ci % k.q())), 1);
            iwahoris.push(GMat2::from_entries(
                &ring,
                [a, b, c, d],
            ));
        }
        for rep in md.ball_basis(1).reps {
            let m = md.rep_matrix(&rep).unwrap();
            for kk in &iwahoris {
                let chi = md.chi_r(kk).unwrap();
                let (rep2, s) = md.coset_reduce(&m.mul(&ring, kk).unwrap()).unwrap();
                assert_eq!(rep2, rep);
                assert_eq!(s, chi);
            }
        }
    }

    #[test]
    fn act_identity_and_beta_involution() {
        let md = module(3, 2, 1, 4, 2);
        let ring = md.ring().clone();
        let v = md.make_s(2, 5).unwrap();
        let id = GMat2::identity(&ring);
        assert_eq!(md.act(&id, &v).unwrap(), v);
        let b = md.mat_beta();
        let bv = md.act(&b, &v).unwrap();
        assert_eq!(bv, md.beta_translate(&v));
        let bbv = md.act(&b, &bv).unwrap();
        assert_eq!(bbv, v);
    }

    #[test]
    fn act_associativity_samples() {
        let md = module(3, 2, 1, 4, 2);
        let ring = md.ring().clone();
        let v = md.make_t(1, 2).unwrap();
        let g = md.mat_upper(&ring.teichmuller_lift(FqElem(4)));
        let h = md.mat_beta();
        let gh = g.mul(&ring, &h).unwrap();
        let lhs = md.act(&gh, &v).unwrap();
        let rhs = md.act(&g, &md.act(&h, &v).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn diagonal_eigencharacter_on_s_and_t() {
        // diag(a,d) s_n^k = d^r (d a^{-1})^k s_n^k and
        // diag(a,d) t_n^s = a^r (d a^{-1})^s t_n^s.
        let md = module(3, 2, 1, 4, 2);
        let ring = md.ring().clone();
        let k = md.field().clone();
        let cases: Vec<(usize, u64)> = vec![(1, 0), (1, 5), (2, 5), (2, 0), (2, 6)];
        for a in [FqElem(2), FqElem(3), FqElem(7)] {
            for d in [FqElem(1), FqElem(5), FqElem(8)] {
                let g = md.mat_diag(&ring.teichmuller_lift(a), &ring.teichmuller_lift(d));
                let da = k.div(d, a).unwrap();
                for &(n, kk) in &cases {
                    let s = md.make_s(n, kk).unwrap();
                    let got = md.act(&g, &s).unwrap();
                    let scal = k.mul(k.pow(d, 4).unwrap(), k.pow(da, kk as i64).unwrap());
                    assert_eq!(got, s.scale(&k, scal), "s_{n}^{kk} a={} d={}", a.0, d.0);
                    let t = md.make_t(n, kk).unwrap();
                    let got = md.act(&g, &t).unwrap();
                    let scal = k.mul(k.pow(a, 4).unwrap(), k.pow(da, kk as i64).unwrap());
                    assert_eq!(got, t.scale(&k, scal), "t_{n}^{kk} a={} d={}", a.0, d.0);
                }
            }
        }
    }

    #[test]
    fn sphere_vector_supports() {
        let md = module(3, 2, 1, 4, 2);
        // s_1^0 sums over all q first-sphere reps.
        assert_eq!(md.make_s(1, 0).unwrap().terms.len(), 9);
        assert_eq!(md.make_t(1, 0).unwrap().terms.len(), 9);
        // terms with vanishing top digit drop out for positive weight:
        // q(q-1) = 72 at q = 9.
        assert_eq!(md.make_s(2, 5).unwrap().terms.len(), 72);
        assert_eq!(md.make_s(0, 0).unwrap(), ModuleVec::basis(CosetRep::identity()));
        assert_eq!(md.make_t(0, 0).unwrap(), ModuleVec::basis(CosetRep::beta_rep()));
    }

    #[test]
    fn ball_sizes_and_order() {
        let md9 = module(3, 2, 1, 4, 3);
        assert_eq!(md9.ball_basis(0).len(), 2);
        assert_eq!(md9.ball_basis(2).len(), 362);
        assert_eq!(md9.ball_size(2), 362);
        let md7 = module(7, 1, 1, 3, 3);
        assert_eq!(md7.ball_basis(3).len(), 1598);
        assert_eq!(md7.ball_size(3), 1598);
        // The enumeration is strictly increasing in the representative order.
        let ball = md9.ball_basis(2);
        for w in ball.reps.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(ball.reps[0], CosetRep::identity());
        // First beta-side rep follows all beta-false reps.
        let half = ball.len() / 2;
        assert!(!ball.reps[half - 1].beta);
        assert!(ball.reps[half].beta);
    }

    #[test]
    fn igen_counts_and_unipotence() {
        let md = module(3, 2, 1, 4, 2);
        let gens = md.igen_set(2);
        // 2 basis elements x 3 families x 3 levels.
        assert_eq!(gens.len(), 18);
        let ring = md.ring().clone();
        for g in &gens {
            // congruent to the identity modulo the Iwahori filtration:
            // diagonal residues 1, upper entry integral, lower entry in pi O.
            let m = &g.mat;
            assert_eq!(m.entries[0].digits[0], FqElem::ONE, "{}", g.label);
            assert_eq!(m.entries[3].digits[0], FqElem::ONE, "{}", g.label);
            assert!(m.entries[2].digits[0].is_zero(), "{}", g.label);
            // beta normalizes: beta g beta reduces to the identity coset with
            // trivial character.
            let bgb = md
                .mat_beta()
                .mul(&ring, &m.mul(&ring, &md.mat_beta()).unwrap())
                .unwrap();
            let (rep, s) = md.coset_reduce(&bgb).unwrap();
            assert_eq!(rep, CosetRep::identity(), "{}", g.label);
            assert_eq!(s, FqElem::ONE);
        }
    }

    #[test]
    fn igen_preserves_ball_index() {
        let md = module(3, 2, 1, 4, 2);
        for g in md.igen_set(2) {
            for rep in md.ball_basis(2).reps {
                let (rep2, _) = md.act_on_rep(&g.mat, &rep).unwrap();
                assert_eq!(
                    rep2.ball_index(),
                    rep.ball_index(),
                    "{} moved {rep} to {rep2}",
                    g.label
                );
                assert_eq!(rep2.beta, rep.beta);
            }
        }
    }

    #[test]
    fn module_vec_json_roundtrip() {
        let md = module(3, 2, 1, 4, 2);
        let k = md.field().clone();
        let v = md
            .make_s(2, 5)
            .unwrap()
            .add(&k, &md.beta_translate(&md.make_t(1, 3).unwrap()));
        let json = v.to_json();
        let back = ModuleVec::from_json(&k, &json).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn precision_exhaustion_is_detected() {
        // A ball rep needing more digits than the context provides.
        let field = Arc::new(FieldContext::new(3, 1, None).unwrap());
        let ring = Arc::new(RingContext::new(field, 1, 3, None).unwrap());
        let md = InducedModule::new(ring.clone(), 1).unwrap();
        let deep = CosetRep {
            beta: false,
            depth: 3,
            lambda: vec![FqElem(1), FqElem(2), FqElem(1)],
            tail: None,
        };
        assert!(matches!(
            md.rep_matrix(&deep),
            Err(Error::PrecisionExhausted { .. })
        ));
        // Reducing the zero matrix is not possible.
        let z = GMat2::from_entries(&ring, [ring.zero(), ring.zero(), ring.zero(), ring.zero()]);
        assert!(md.coset_reduce(&z).is_err());
    }
}
