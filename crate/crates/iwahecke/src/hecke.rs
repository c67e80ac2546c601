//! The two Iwahori-Hecke operators, their finite-depth kernels, predicted
//! kernel generators, quotient normal forms, and bounded image search.
//!
//! Both operators are right-translation sums inside the bracket, so they
//! commute with the left action and raise ball index by at most one. A
//! vector supported in the ball of radius t therefore lies in the global
//! kernel exactly when its finitely supported image vanishes, which turns
//! the kernel computation into the nullspace of an exact matrix from ball-t
//! coordinates to ball-(t+1) coordinates.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exactla::{nullspace_sparse, solve_sparse, ElimOptions, SparseVec, SubspaceBasis};
use crate::gf::{digits_base_p, lucas_binom, FieldContext, FqElem};
use crate::localring::RingContext;
use crate::par;
use crate::tree::{
    digit_tuples, BallBasis, CosetRep, GMat2, IgenElement, InducedModule, ModuleVec,
};

/// The two generators of the Iwahori-Hecke endomorphism algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeckeOp {
    /// T_{-1,0}: right translation by the g0(1, lambda) family.
    Minus,
    /// T_{1,2}: right translation by the beta u([lambda]) w family.
    Plus,
}

impl HeckeOp {
    pub fn name(self) -> &'static str {
        match self {
            HeckeOp::Minus => "T_minus",
            HeckeOp::Plus => "T_plus",
        }
    }

    pub fn other(self) -> HeckeOp {
        match self {
            HeckeOp::Minus => HeckeOp::Plus,
            HeckeOp::Plus => HeckeOp::Minus,
        }
    }
}

/// Whether the configured weight satisfies the main theorem's hypotheses.
#[derive(Debug, Clone, Copy)]
pub struct HypothesisFlags {
    /// 0 < r_j < p-1 for every base-p digit of r.
    pub digit_range_ok: bool,
    /// When f = 1, additionally 2 < r < p-3.
    pub f1_range_ok: bool,
}

impl HypothesisFlags {
    pub fn in_hypotheses(&self) -> bool {
        self.digit_range_ok && self.f1_range_ok
    }

    pub fn describe(&self) -> Option<String> {
        if self.in_hypotheses() {
            return None;
        }
        let mut parts = Vec::new();
        if !self.digit_range_ok {
            parts.push("some digit r_j outside (0, p-1)");
        }
        if !self.f1_range_ok {
            parts.push("f = 1 but r outside (2, p-3)");
        }
        Some(parts.join("; "))
    }
}

/// Construction parameters for a [`HeckeContext`].
#[derive(Debug, Clone)]
pub struct ContextConfig {
    pub p: u32,
    pub f: u32,
    pub e: u32,
    pub r: u64,
    /// Deepest ball the context must support.
    pub max_depth: usize,
    pub modulus: Option<Vec<u32>>,
    pub eisenstein: Option<Vec<i64>>,
    pub options: ElimOptions,
    /// Directory for on-disk operator-matrix caching; `None` disables it.
    pub cache_dir: Option<PathBuf>,
}

impl ContextConfig {
    pub fn new(p: u32, f: u32, e: u32, r: u64, max_depth: usize) -> ContextConfig {
        ContextConfig {
            p,
            f,
            e,
            r,
            max_depth,
            modulus: None,
            eisenstein: None,
            options: ElimOptions::default(),
            cache_dir: None,
        }
    }
}

/// Exact matrix of a Hecke operator from ball-t to ball-(t+1) coordinates,
/// stored as sparse rows (one row per target representative).
#[derive(Debug)]
pub struct OperatorMatrix {
    pub t: usize,
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<SparseVec>,
}

/// The two kernels at a fixed depth, their sum, and their intersection.
#[derive(Debug)]
pub struct KernelPair {
    pub t: usize,
    pub ker_minus: Arc<SubspaceBasis>,
    pub ker_plus: Arc<SubspaceBasis>,
    pub ker_sum: SubspaceBasis,
    pub intersection: SubspaceBasis,
}

/// Finite-depth stand-in for the quotient by both kernels: ball-t coordinates
/// modulo the horizon kernel sum, expressed in the complement of the pivot
/// columns.
#[derive(Debug)]
pub struct QuotientSpace {
    pub t: usize,
    pub horizon: usize,
    pub ball: Arc<BallBasis>,
    /// Kernel sum intersected with the ball of radius t.
    pub ker_sum: SubspaceBasis,
    /// Non-pivot ball columns, in ball order: the canonical complement basis.
    pub complement: Vec<u32>,
    comp_index: HashMap<u32, usize>,
    field: Arc<FieldContext>,
}

impl QuotientSpace {
    pub fn dim(&self) -> usize {
        self.complement.len()
    }

    /// Image of an ambient sparse vector in complement coordinates.
    pub fn reduce_coords(&self, v: &SparseVec) -> SparseVec {
        let res = self.ker_sum.reduce(&self.field, v);
        res.iter()
            .map(|&(c, x)| (self.comp_index[&c] as u32, x))
            .collect()
    }

    /// Canonical coordinates of a module vector modulo the kernel sum.
    /// Zero exactly when the vector lies in the horizon kernel sum.
    pub fn reduce_vec(&self, v: &ModuleVec) -> Result<SparseVec> {
        let coords = self.ball.coords(v)?;
        Ok(self.reduce_coords(&coords))
    }
}

/// Shared computation context: module, operator translators, caches.
pub struct HeckeContext {
    module: Arc<InducedModule>,
    flags: HypothesisFlags,
    max_depth: usize,
    options: ElimOptions,
    cache_dir: Option<PathBuf>,
    translators_minus: Vec<GMat2>,
    translators_plus: Vec<GMat2>,
    balls: RwLock<HashMap<usize, Arc<BallBasis>>>,
    matrices: RwLock<HashMap<(HeckeOp, usize), Arc<OperatorMatrix>>>,
    kernels: RwLock<HashMap<(HeckeOp, usize), Arc<SubspaceBasis>>>,
}

impl HeckeContext {
    pub fn new(cfg: ContextConfig) -> Result<HeckeContext> {
        let field = Arc::new(FieldContext::new(cfg.p, cfg.f, cfg.modulus.clone())?);
        // Operator targets live one sphere deeper than max_depth; reduction
        // consumes up to e extra digits plus slack.
        let n_digits = cfg.max_depth + 1 + cfg.e as usize + 2;
        let ring = Arc::new(RingContext::new(
            field.clone(),
            cfg.e,
            n_digits,
            cfg.eisenstein.clone(),
        )?);
        let module = Arc::new(InducedModule::new(ring.clone(), cfg.r)?);

        let digits = digits_base_p(cfg.r, cfg.p).digits;
        let mut padded = digits.clone();
        padded.resize(cfg.f as usize, 0);
        let digit_range_ok = padded.iter().all(|&d| d > 0 && d < cfg.p - 1);
        let f1_range_ok = cfg.f != 1 || (cfg.r > 2 && cfg.r + 3 < cfg.p as u64);
        let flags = HypothesisFlags {
            digit_range_ok,
            f1_range_ok,
        };

        let mut translators_minus = Vec::new();
        let mut translators_plus = Vec::new();
        for lam in field.elements() {
            let lift = ring.teichmuller_lift(lam);
            translators_minus.push(module.mat_g0(1, &lift));
            let upper = module.mat_upper(&lift);
            let bu = module.mat_beta().mul(&ring, &upper)?;
            translators_plus.push(bu.mul(&ring, &module.mat_w())?);
        }

        Ok(HeckeContext {
            module,
            flags,
            max_depth: cfg.max_depth,
            options: cfg.options,
            cache_dir: cfg.cache_dir,
            translators_minus,
            translators_plus,
            balls: RwLock::new(HashMap::new()),
            matrices: RwLock::new(HashMap::new()),
            kernels: RwLock::new(HashMap::new()),
        })
    }

    pub fn module(&self) -> &Arc<InducedModule> {
        &self.module
    }

    pub fn field(&self) -> &Arc<FieldContext> {
        self.module.field()
    }

    pub fn ring(&self) -> &Arc<RingContext> {
        self.module.ring()
    }

    pub fn r(&self) -> u64 {
        self.module.r()
    }

    pub fn q(&self) -> u64 {
        self.field().q() as u64
    }

    pub fn flags(&self) -> HypothesisFlags {
        self.flags
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn options(&self) -> ElimOptions {
        self.options
    }

    /// Cached ball basis; depths up to max_depth + 1 are supported.
    pub fn ball(&self, t: usize) -> Result<Arc<BallBasis>> {
        if t > self.max_depth + 1 {
            return Err(Error::IndexOutOfRange(format!(
                "ball depth {t} exceeds context maximum {}",
                self.max_depth + 1
            )));
        }
        if let Some(b) = self.balls.read().unwrap().get(&t) {
            return Ok(b.clone());
        }
        let b = Arc::new(self.module.ball_basis(t));
        self.balls.write().unwrap().insert(t, b.clone());
        Ok(b)
    }

    fn translators(&self, op: HeckeOp) -> &[GMat2] {
        match op {
            HeckeOp::Minus => &self.translators_minus,
            HeckeOp::Plus => &self.translators_plus,
        }
    }

    /// Apply an operator to a vector, exactly.
    pub fn apply(&self, op: HeckeOp, v: &ModuleVec) -> Result<ModuleVec> {
        let field = self.field();
        let ring = self.ring();
        let mut out = ModuleVec::zero();
        for (rep, &coeff) in &v.terms {
            let m = self.module.rep_matrix(rep)?;
            for x in self.translators(op) {
                let (rep2, s) = self.module.coset_reduce(&m.mul(ring, x)?)?;
                out.add_term(field, rep2, field.mul(coeff, s));
            }
        }
        Ok(out)
    }

    /// Image of a single basis function.
    pub fn apply_rep(&self, op: HeckeOp, rep: &CosetRep) -> Result<ModuleVec> {
        self.apply(op, &ModuleVec::basis(rep.clone()))
    }

    /// Matrix of the operator from ball-t to ball-(t+1) coordinates. The
    /// build asserts support locality: every image must land inside the
    /// target ball, with no truncation.
    pub fn operator_matrix(&self, op: HeckeOp, t: usize) -> Result<Arc<OperatorMatrix>> {
        if let Some(m) = self.matrices.read().unwrap().get(&(op, t)) {
            return Ok(m.clone());
        }
        let source = self.ball(t)?;
        let target = self.ball(t + 1)?;
        let params = self.cache_params(op, t);
        if let Some(dir) = &self.cache_dir {
            if let Some(m) = load_matrix(dir, &params, t, target.len(), source.len()) {
                let m = Arc::new(m);
                self.matrices.write().unwrap().insert((op, t), m.clone());
                return Ok(m);
            }
        }
        let cols: Vec<Result<Vec<(u32, u32, FqElem)>>> =
            par::map_indexed(source.len(), self.options.parallel, |j| {
                let img = self.apply_rep(op, &source.reps[j])?;
                let mut entries = Vec::with_capacity(img.terms.len());
                for (rep, &c) in &img.terms {
                    let i = target.position(rep).ok_or_else(|| {
                        Error::Internal(format!(
                            "operator image escaped the target ball: {rep}"
                        ))
                    })?;
                    entries.push((i as u32, j as u32, c));
                }
                Ok(entries)
            });
        let mut rows: Vec<SparseVec> = vec![Vec::new(); target.len()];
        for col in cols {
            for (i, j, c) in col? {
                rows[i as usize].push((j, c));
            }
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|&(c, _)| c);
        }
        let m = Arc::new(OperatorMatrix {
            t,
            nrows: target.len(),
            ncols: source.len(),
            rows,
        });
        if let Some(dir) = &self.cache_dir {
            // Cache write failures are not fatal.
            let _ = save_matrix(dir, &params, &m);
        }
        self.matrices.write().unwrap().insert((op, t), m.clone());
        Ok(m)
    }

    fn cache_params(&self, op: HeckeOp, t: usize) -> String {
        let f = self.field();
        let ring = self.ring();
        format!(
            "v1;p={};f={};modulus={:?};e={};eisenstein={:?};r={};t={};op={}",
            f.p(),
            f.f(),
            f.modulus(),
            ring.e(),
            ring.eisenstein(),
            self.r(),
            t,
            op.name()
        )
    }

    /// Kernel of the operator restricted to the ball of radius t, i.e. the
    /// nullspace of the finite matrix (support locality makes this the whole
    /// kernel within the ball).
    pub fn kernel(&self, op: HeckeOp, t: usize) -> Result<Arc<SubspaceBasis>> {
        if let Some(k) = self.kernels.read().unwrap().get(&(op, t)) {
            return Ok(k.clone());
        }
        let m = self.operator_matrix(op, t)?;
        let field = self.field();
        let ns = nullspace_sparse(field, m.rows.clone(), m.ncols, self.options);
        let basis = Arc::new(SubspaceBasis::from_vectors(
            field,
            m.ncols,
            ns,
            self.options,
        ));
        self.kernels.write().unwrap().insert((op, t), basis.clone());
        Ok(basis)
    }

    /// Both kernels at depth t, their sum, and their intersection.
    pub fn kernel_pair(&self, t: usize) -> Result<KernelPair> {
        let km = self.kernel(HeckeOp::Minus, t)?;
        let kp = self.kernel(HeckeOp::Plus, t)?;
        let field = self.field();
        let ker_sum = km.sum(field, &kp, self.options)?;
        let intersection = km.intersect(field, &kp, self.options)?;
        Ok(KernelPair {
            t,
            ker_minus: km,
            ker_plus: kp,
            ker_sum,
            intersection,
        })
    }

    /// Exponent set for which the single-fan sphere sums lie in the kernel:
    /// low exponents up to the operator's threshold plus the binomial
    /// vanishing range (the "extra" exponents existing only for f > 1).
    pub fn kernel_exponents(&self, op: HeckeOp) -> Vec<u64> {
        let q = self.q();
        let r = self.r();
        (0..=q - 1)
            .filter(|&k| match op {
                HeckeOp::Plus => k + r <= q - 2 || self.is_type_c(op, k),
                HeckeOp::Minus => k < r || self.is_type_c(op, k),
            })
            .collect()
    }

    /// The exponents in the kernel for the binomial-vanishing reason only.
    pub fn type_c_exponents(&self, op: HeckeOp) -> Vec<u64> {
        (0..=self.q() - 1)
            .filter(|&k| self.is_type_c(op, k))
            .collect()
    }

    fn is_type_c(&self, op: HeckeOp, k: u64) -> bool {
        let q = self.q();
        let r = self.r();
        let p = self.field().p();
        match op {
            HeckeOp::Plus => k > q - 1 - r && lucas_binom(r, q - 1 - k, p) == 0,
            HeckeOp::Minus => k > r && lucas_binom(q - 1 - r, q - 1 - k, p) == 0,
        }
    }

    /// Single-fan weighted sphere sum at depth n over a fixed digit prefix:
    /// the building block of the kernel characterization. For the plus
    /// operator these live on the g0 side, for minus on the g0-u-w side.
    pub fn fan_vector(
        &self,
        op: HeckeOp,
        n: usize,
        prefix: &[FqElem],
        expo: u64,
    ) -> Result<ModuleVec> {
        if n == 0 || prefix.len() != n - 1 {
            return Err(Error::InvalidParameter(
                "fan vector needs a prefix of length n-1".into(),
            ));
        }
        let field = self.field();
        let mut out = ModuleVec::zero();
        for x in field.elements() {
            let coeff = field.pow(x, expo as i64)?;
            let rep = match op {
                HeckeOp::Plus => {
                    let mut lambda = prefix.to_vec();
                    lambda.push(x);
                    CosetRep {
                        beta: false,
                        depth: n as u32,
                        lambda,
                        tail: None,
                    }
                }
                HeckeOp::Minus => CosetRep {
                    beta: false,
                    depth: (n - 1) as u32,
                    lambda: prefix.to_vec(),
                    tail: Some(x),
                },
            };
            out.add_term(field, rep, coeff);
        }
        Ok(out)
    }

    /// The mixed depth-zero kernel generator: the unique combination of a
    /// ball-index-zero function with a first-sphere sum killed by the
    /// operator.
    pub fn mixed_generator(&self, op: HeckeOp) -> Result<ModuleVec> {
        let field = self.field();
        let q = self.q();
        let r = self.r();
        match op {
            // [beta,1] + s_1^{q-1-r}
            HeckeOp::Plus => Ok(self
                .module
                .make_t(0, 0)?
                .add(field, &self.module.make_s(1, q - 1 - r)?)),
            // (-1)^{q-1-r} [Id,1] + t_1^r
            HeckeOp::Minus => {
                let sign = field.pow(field.neg(FqElem::ONE), (q - 1 - r) as i64)?;
                Ok(self
                    .module
                    .make_s(0, 0)?
                    .scale(field, sign)
                    .add(field, &self.module.make_t(1, r)?))
            }
        }
    }

    /// Predicted spanning set for the kernel within the ball of radius t:
    /// all fans (both beta sides) at depths 1..t with kernel exponents, plus
    /// the ball translates of the mixed generator. Every returned vector is
    /// checked to be annihilated.
    pub fn predicted_kernel_vectors(&self, op: HeckeOp, t: usize) -> Result<Vec<ModuleVec>> {
        if t == 0 {
            return Err(Error::InvalidParameter("predictions need t >= 1".into()));
        }
        let field = self.field();
        let exps = self.kernel_exponents(op);
        let mut out = Vec::new();
        for n in 1..=t {
            for prefix in digit_tuples(field, n - 1) {
                for &e in &exps {
                    let v = self.fan_vector(op, n, &prefix, e)?;
                    out.push(self.module.beta_translate(&v));
                    out.push(v);
                }
            }
        }
        let gen = self.mixed_generator(op)?;
        for h in &self.ball(t - 1)?.reps {
            let hmat = self.module.rep_matrix(h)?;
            out.push(self.module.act(&hmat, &gen)?);
        }
        for v in &out {
            let img = self.apply(op, v)?;
            if !img.is_zero() {
                return Err(Error::Internal(format!(
                    "predicted kernel vector not annihilated by {}",
                    op.name()
                )));
            }
        }
        Ok(out)
    }

    /// Span of a family of module vectors inside the ball of radius t.
    pub fn span_in_ball(&self, t: usize, vecs: &[ModuleVec]) -> Result<SubspaceBasis> {
        let ball = self.ball(t)?;
        let field = self.field();
        let rows: Result<Vec<SparseVec>> = vecs.iter().map(|v| ball.coords(v)).collect();
        Ok(SubspaceBasis::from_vectors(
            field,
            ball.len(),
            rows?,
            self.options,
        ))
    }

    /// Quotient of ball-t coordinates by the horizon kernel sum
    /// K(horizon) = (Ker T_minus at horizon) + (Ker T_plus at horizon),
    /// intersected with the ball when the horizon is deeper.
    pub fn quotient(&self, t: usize, horizon: usize) -> Result<QuotientSpace> {
        if horizon < t {
            return Err(Error::InvalidParameter(
                "horizon must be at least the ball depth".into(),
            ));
        }
        let field = self.field().clone();
        let ball = self.ball(t)?;
        let pair = self.kernel_pair(horizon)?;
        let ker_sum = if horizon == t {
            pair.ker_sum
        } else {
            // Restrict to the coordinate subspace of the smaller ball. The
            // enumeration order of shared representatives agrees, so columns
            // can be re-mapped directly after intersecting.
            let big = self.ball(horizon)?;
            let keep: Vec<u32> = big
                .reps
                .iter()
                .enumerate()
                .filter(|(_, rep)| rep.ball_index() as usize <= t)
                .map(|(i, _)| i as u32)
                .collect();
            let coord_rows: Vec<SparseVec> =
                keep.iter().map(|&c| vec![(c, FqElem::ONE)]).collect();
            let coord = SubspaceBasis::from_vectors(&field, big.len(), coord_rows, self.options);
            let inter = pair.ker_sum.intersect(&field, &coord, self.options)?;
            let rows: Result<Vec<SparseVec>> = inter
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&(c, v)| {
                            let rep = &big.reps[c as usize];
                            ball.position(rep).map(|i| (i as u32, v)).ok_or_else(|| {
                                Error::Internal("restricted kernel row escaped ball".into())
                            })
                        })
                        .collect()
                })
                .collect();
            SubspaceBasis::from_vectors(&field, ball.len(), rows?, self.options)
        };
        let pivot_set: std::collections::HashSet<u32> = ker_sum.pivots.iter().copied().collect();
        let complement: Vec<u32> = (0..ball.len() as u32)
            .filter(|c| !pivot_set.contains(c))
            .collect();
        let comp_index = complement
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        Ok(QuotientSpace {
            t,
            horizon,
            ball,
            ker_sum,
            complement,
            comp_index,
            field,
        })
    }

    /// Search for a preimage of v under the operator among vectors supported
    /// in the ball of radius m. `None` is a horizon-bounded statement: v has
    /// no preimage there (not a claim about the full module).
    pub fn image_search(
        &self,
        op: HeckeOp,
        v: &ModuleVec,
        m: usize,
    ) -> Result<Option<ModuleVec>> {
        if v.is_zero() {
            return Ok(Some(ModuleVec::zero()));
        }
        let mat = self.operator_matrix(op, m)?;
        let target = self.ball(m + 1)?;
        let b = target.coords(v)?;
        let field = self.field();
        match solve_sparse(field, &mat.rows, mat.ncols, &b, self.options) {
            None => Ok(None),
            Some(x) => {
                let source = self.ball(m)?;
                let mut u = ModuleVec::zero();
                for &(c, val) in &x {
                    u.add_term(field, source.reps[c as usize].clone(), val);
                }
                let check = self.apply(op, &u)?;
                if &check != v {
                    return Err(Error::Internal("solver returned a non-preimage".into()));
                }
                Ok(Some(u))
            }
        }
    }

    /// The claimed invariant vectors with sphere index up to `max_n`
    /// (inclusive): the two ball-index-zero functions plus the weighted
    /// sphere sums at the distinguished exponents, with beta translates.
    pub fn claimed_invariants(&self, max_n: usize) -> Result<Vec<(String, ModuleVec)>> {
        let q = self.q();
        let r = self.r();
        let f = self.field().f();
        let p = self.field().p() as u64;
        let mut out = vec![
            ("[Id,1]".to_string(), self.module.make_s(0, 0)?),
            ("[beta,1]".to_string(), self.module.make_t(0, 0)?),
        ];
        for n in 2..=max_n {
            for l in 0..f {
                let pl = p.pow(l);
                let s = self.module.make_s(n, q - 1 - r + pl)?;
                out.push((format!("s_{n}^(q-1-r+p^{l})"), s.clone()));
                out.push((
                    format!("beta*s_{n}^(q-1-r+p^{l})"),
                    self.module.beta_translate(&s),
                ));
                let t = self.module.make_t(n, r + pl)?;
                out.push((format!("t_{n}^(r+p^{l})"), t.clone()));
                out.push((
                    format!("beta*t_{n}^(r+p^{l})"),
                    self.module.beta_translate(&t),
                ));
            }
        }
        Ok(out)
    }

    /// Fixed space of the generator action on a quotient, by iterated
    /// intersection of the fixed spaces of the individual generators. The
    /// result lives in complement coordinates.
    pub fn fixed_space(
        &self,
        quot: &QuotientSpace,
        gens: &[IgenElement],
    ) -> Result<SubspaceBasis> {
        let field = self.field();
        let dim = quot.dim();
        let mut basis: Vec<SparseVec> = (0..dim as u32).map(|i| vec![(i, FqElem::ONE)]).collect();
        for gen in gens {
            if basis.is_empty() {
                break;
            }
            // Image of each complement unit vector under the generator, in
            // complement coordinates.
            let imgs: Vec<Result<SparseVec>> =
                par::map_indexed(dim, self.options.parallel, |j| {
                    let rep = &quot.ball.reps[quot.complement[j] as usize];
                    let (rep2, s) = self.module.act_on_rep(&gen.mat, rep)?;
                    let col = quot.ball.position(&rep2).ok_or_else(|| {
                        Error::SupportExceedsBall(format!(
                            "{} moved {rep} outside the ball",
                            gen.label
                        ))
                    })?;
                    Ok(quot.reduce_coords(&vec![(col as u32, s)]))
                });
            let imgs: Result<Vec<SparseVec>> = imgs.into_iter().collect();
            let imgs = imgs?;
            // Delta of each current basis row: image minus itself.
            let deltas: Vec<SparseVec> = basis
                .iter()
                .map(|b| {
                    let mut img = combine(field, b, &imgs);
                    for &(c, v) in b {
                        add_entry(field, &mut img, c, field.neg(v));
                    }
                    img
                })
                .collect();
            // Combinations with vanishing delta: nullspace of the transpose
            // of the delta matrix.
            let mut t_rows: Vec<SparseVec> = vec![Vec::new(); dim];
            for (k, d) in deltas.iter().enumerate() {
                for &(col, v) in d {
                    t_rows[col as usize].push((k as u32, v));
                }
            }
            let ns = nullspace_sparse(field, t_rows, basis.len(), self.options);
            let combos: Vec<SparseVec> = ns
                .iter()
                .map(|x| {
                    let mut acc: SparseVec = Vec::new();
                    for &(k, c) in x {
                        for &(col, v) in &basis[k as usize] {
                            add_entry(field, &mut acc, col, field.mul(c, v));
                        }
                    }
                    acc
                })
                .collect();
            let reduced = SubspaceBasis::from_vectors(field, dim, combos, self.options);
            basis = reduced.rows;
        }
        Ok(SubspaceBasis::from_vectors(field, dim, basis, self.options))
    }

    /// Image in the quotient of the span of all representatives with ball
    /// index at most `radius`.
    pub fn ball_image_in_quotient(
        &self,
        quot: &QuotientSpace,
        radius: usize,
    ) -> Result<SubspaceBasis> {
        let field = self.field();
        let rows: Vec<SparseVec> = quot
            .ball
            .reps
            .iter()
            .enumerate()
            .filter(|(_, rep)| (rep.ball_index() as usize) <= radius)
            .map(|(i, _)| quot.reduce_coords(&vec![(i as u32, FqElem::ONE)]))
            .collect();
        Ok(SubspaceBasis::from_vectors(
            field,
            quot.dim(),
            rows,
            self.options,
        ))
    }
}

/// Linear combination sum_j b_j * imgs[j] as a sorted sparse vector.
fn combine(field: &FieldContext, b: &SparseVec, imgs: &[SparseVec]) -> SparseVec {
    let mut acc: SparseVec = Vec::new();
    for &(j, c) in b {
        for &(col, v) in &imgs[j as usize] {
            add_entry(field, &mut acc, col, field.mul(c, v));
        }
    }
    acc
}

fn add_entry(field: &FieldContext, v: &mut SparseVec, col: u32, val: FqElem) {
    if val.is_zero() {
        return;
    }
    match v.binary_search_by_key(&col, |&(c, _)| c) {
        Ok(i) => {
            let nv = field.add(v[i].1, val);
            if nv.is_zero() {
                v.remove(i);
            } else {
                v[i].1 = nv;
            }
        }
        Err(i) => v.insert(i, (col, val)),
    }
}

// ---- on-disk operator matrix cache ----

fn cache_file(dir: &std::path::Path, params: &str) -> PathBuf {
    let mut h = Sha256::new();
    h.update(params.as_bytes());
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("opmat-{hex}.json"))
}

fn save_matrix(dir: &std::path::Path, params: &str, m: &OperatorMatrix) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let entries: Vec<[u64; 3]> = m
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.iter()
                .map(move |&(c, v)| [i as u64, c as u64, v.0 as u64])
        })
        .collect();
    let doc = serde_json::json!({
        "schema": 1,
        "params": params,
        "t": m.t,
        "nrows": m.nrows,
        "ncols": m.ncols,
        "entries": entries,
    });
    let path = cache_file(dir, params);
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, serde_json::to_vec(&doc)?)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

fn load_matrix(
    dir: &std::path::Path,
    params: &str,
    t: usize,
    nrows: usize,
    ncols: usize,
) -> Option<OperatorMatrix> {
    let path = cache_file(dir, params);
    let bytes = std::fs::read(path).ok()?;
    let doc: serde_json::Value = serde_json::from_slice(&bytes).ok()?;
    if doc["schema"].as_u64() != Some(1) || doc["params"].as_str() != Some(params) {
        return None;
    }
    if doc["nrows"].as_u64() != Some(nrows as u64) || doc["ncols"].as_u64() != Some(ncols as u64) {
        return None;
    }
    let mut rows: Vec<SparseVec> = vec![Vec::new(); nrows];
    for e in doc["entries"].as_array()? {
        let i = e[0].as_u64()? as usize;
        let c = e[1].as_u64()? as u32;
        let v = FqElem(e[2].as_u64()? as u32);
        if i >= nrows || c as usize >= ncols {
            return None;
        }
        rows[i].push((c, v));
    }
    for r in &mut rows {
        r.sort_unstable_by_key(|&(c, _)| c);
    }
    Some(OperatorMatrix {
        t,
        nrows,
        ncols,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u32, f: u32, e: u32, r: u64, depth: usize) -> HeckeContext {
        HeckeContext::new(ContextConfig::new(p, f, e, r, depth)).unwrap()
    }

    #[test]
    fn t_minus_of_identity_is_first_sphere_sum() {
        let cx = ctx(3, 2, 1, 4, 2);
        let id = ModuleVec::basis(CosetRep::identity());
        let got = cx.apply(HeckeOp::Minus, &id).unwrap();
        assert_eq!(got, cx.module().make_s(1, 0).unwrap());
        assert!(cx
            .apply(HeckeOp::Minus, &ModuleVec::zero())
            .unwrap()
            .is_zero());
    }

    #[test]
    fn t_plus_of_identity_is_beta_translate_of_t_fan() {
        let cx = ctx(3, 2, 1, 4, 2);
        let id = ModuleVec::basis(CosetRep::identity());
        let got = cx.apply(HeckeOp::Plus, &id).unwrap();
        let expect = cx
            .module()
            .beta_translate(&cx.module().make_t(1, 0).unwrap());
        assert_eq!(got, expect);
    }

    #[test]
    fn low_exponent_spheres_are_killed() {
        for (p, f, e, r) in [(3u32, 2u32, 1u32, 4u64), (7, 1, 1, 3)] {
            let cx = ctx(p, f, e, r, 2);
            let q = cx.q();
            for s in 0..r {
                let t1s = cx.module().make_t(1, s).unwrap();
                assert!(
                    cx.apply(HeckeOp::Minus, &t1s).unwrap().is_zero(),
                    "T_minus(t_1^{s}) != 0 at ({p},{f},{e},{r})"
                );
            }
            for k in 0..=q - 2 - r {
                let s1k = cx.module().make_s(1, k).unwrap();
                assert!(
                    cx.apply(HeckeOp::Plus, &s1k).unwrap().is_zero(),
                    "T_plus(s_1^{k}) != 0 at ({p},{f},{e},{r})"
                );
            }
            // The threshold exponents are NOT killed.
            let s_thresh = cx.module().make_s(1, q - 1 - r).unwrap();
            assert!(!cx.apply(HeckeOp::Plus, &s_thresh).unwrap().is_zero());
            let t_thresh = cx.module().make_t(1, r).unwrap();
            assert!(!cx.apply(HeckeOp::Minus, &t_thresh).unwrap().is_zero());
        }
    }

    #[test]
    fn mixed_generators_are_killed() {
        for (p, f, e, r) in [(3u32, 2u32, 1u32, 4u64), (7, 1, 1, 3), (5, 1, 2, 3)] {
            let cx = ctx(p, f, e, r, 2);
            let vp = cx.mixed_generator(HeckeOp::Plus).unwrap();
            assert!(cx.apply(HeckeOp::Plus, &vp).unwrap().is_zero());
            let vm = cx.mixed_generator(HeckeOp::Minus).unwrap();
            assert!(cx.apply(HeckeOp::Minus, &vm).unwrap().is_zero());
        }
    }

    #[test]
    fn type_c_exponents_and_witnesses() {
        let cx = ctx(3, 2, 1, 4, 2);
        // binom(4, 2) = 6 = 0 mod 3 gives k = 6 on both sides at q = 9, r = 4.
        assert_eq!(cx.type_c_exponents(HeckeOp::Plus), vec![6]);
        assert_eq!(cx.type_c_exponents(HeckeOp::Minus), vec![6]);
        assert_eq!(cx.kernel_exponents(HeckeOp::Plus), vec![0, 1, 2, 3, 6]);
        assert_eq!(cx.kernel_exponents(HeckeOp::Minus), vec![0, 1, 2, 3, 6]);
        let s16 = cx.module().make_s(1, 6).unwrap();
        assert!(cx.apply(HeckeOp::Plus, &s16).unwrap().is_zero());
        let t16 = cx.module().make_t(1, 6).unwrap();
        assert!(cx.apply(HeckeOp::Minus, &t16).unwrap().is_zero());
        // f = 1: no type-c exponents.
        let cx7 = ctx(7, 1, 1, 3, 1);
        assert!(cx7.type_c_exponents(HeckeOp::Plus).is_empty());
        assert!(cx7.type_c_exponents(HeckeOp::Minus).is_empty());
    }

    #[test]
    fn hecke_relations_on_small_ball() {
        let cx = ctx(3, 2, 1, 4, 2);
        for rep in &cx.ball(1).unwrap().reps {
            let v = ModuleVec::basis(rep.clone());
            let pm = cx
                .apply(HeckeOp::Minus, &cx.apply(HeckeOp::Plus, &v).unwrap())
                .unwrap();
            assert!(pm.is_zero(), "T_minus T_plus [{rep}] != 0");
            let mp = cx
                .apply(HeckeOp::Plus, &cx.apply(HeckeOp::Minus, &v).unwrap())
                .unwrap();
            assert!(mp.is_zero(), "T_plus T_minus [{rep}] != 0");
        }
    }

    #[test]
    fn operators_commute_with_group_action() {
        let cx = ctx(3, 2, 1, 4, 2);
        let md = cx.module().clone();
        let v = md
            .make_s(1, 2)
            .unwrap()
            .add(cx.field(), &md.make_t(1, 1).unwrap());
        let mut gens: Vec<GMat2> = md.igen_set(1).into_iter().map(|g| g.mat).collect();
        gens.push(md.mat_beta());
        for g in &gens {
            for op in [HeckeOp::Minus, HeckeOp::Plus] {
                let lhs = cx.apply(op, &md.act(g, &v).unwrap()).unwrap();
                let rhs = md.act(g, &cx.apply(op, &v).unwrap()).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn operator_matrix_agrees_with_direct_application() {
        let cx = ctx(3, 2, 1, 4, 2);
        let m = cx.operator_matrix(HeckeOp::Plus, 1).unwrap();
        let src = cx.ball(1).unwrap();
        let tgt = cx.ball(2).unwrap();
        assert_eq!(m.ncols, src.len());
        assert_eq!(m.nrows, tgt.len());
        // column j of the matrix = coordinates of the image of rep j
        for (j, rep) in src.reps.iter().enumerate() {
            let img = cx.apply_rep(HeckeOp::Plus, rep).unwrap();
            let coords = tgt.coords(&img).unwrap();
            let mut from_matrix: SparseVec = Vec::new();
            for (i, row) in m.rows.iter().enumerate() {
                if let Ok(pos) = row.binary_search_by_key(&(j as u32), |&(c, _)| c) {
                    from_matrix.push((i as u32, row[pos].1));
                }
            }
            assert_eq!(coords, from_matrix);
        }
    }

    #[test]
    fn kernel_matches_prediction_at_depth_two() {
        // The heart of the kernel characterization at t = 2 for the
        // unramified quadratic case.
        let cx = ctx(3, 2, 1, 4, 2);
        for op in [HeckeOp::Minus, HeckeOp::Plus] {
            let computed = cx.kernel(op, 2).unwrap();
            let predicted = cx.predicted_kernel_vectors(op, 2).unwrap();
            let span = cx.span_in_ball(2, &predicted).unwrap();
            assert_eq!(span, *computed.as_ref(), "{} kernel mismatch", op.name());
        }
    }

    #[test]
    fn kernel_pair_intersection_trivial_and_id_outside() {
        let cx = ctx(3, 2, 1, 4, 2);
        let pair = cx.kernel_pair(2).unwrap();
        assert_eq!(pair.intersection.dim(), 0);
        assert_eq!(
            pair.ker_sum.dim(),
            pair.ker_minus.dim() + pair.ker_plus.dim()
        );
        let ball = cx.ball(2).unwrap();
        let id_coords = ball
            .coords(&ModuleVec::basis(CosetRep::identity()))
            .unwrap();
        assert!(!pair.ker_sum.member(cx.field(), &id_coords));
    }

    #[test]
    fn kernel_sum_is_stable_under_igen_action() {
        // Kernels are G-stable and the pro-p generators preserve the ball,
        // so the kernel sum at a fixed depth is carried into itself.
        let cx = ctx(3, 2, 1, 4, 2);
        let pair = cx.kernel_pair(2).unwrap();
        let ball = cx.ball(2).unwrap();
        let field = cx.field();
        let gens = cx.module().igen_set(2);
        for row in pair.ker_sum.rows.iter().step_by(7) {
            let mut v = ModuleVec::zero();
            for &(c, x) in row {
                v.add_term(field, ball.reps[c as usize].clone(), x);
            }
            for g in gens.iter().step_by(5) {
                let moved = cx.module().act(&g.mat, &v).unwrap();
                let coords = ball.coords(&moved).unwrap();
                assert!(
                    pair.ker_sum.member(field, &coords),
                    "kernel sum not stable under {}",
                    g.label
                );
            }
        }
    }

    #[test]
    fn quotient_reduction_and_membership() {
        let cx = ctx(7, 1, 1, 3, 2);
        let quot = cx.quotient(2, 2).unwrap();
        // [Id,1] is nonzero mod the kernel sum.
        let id = ModuleVec::basis(CosetRep::identity());
        assert!(!quot.reduce_vec(&id).unwrap().is_empty());
        // kernel vectors reduce to zero
        let v = cx.module().make_s(1, 0).unwrap();
        assert!(quot.reduce_vec(&v).unwrap().is_empty());
        let w = cx.mixed_generator(HeckeOp::Minus).unwrap();
        assert!(quot.reduce_vec(&w).unwrap().is_empty());
    }

    #[test]
    fn quotient_with_deeper_horizon_matches_same_depth_here() {
        // At these parameters K(3) meets V_2 in K(2), so the quotients agree.
        let cx = ctx(7, 1, 1, 3, 3);
        let q2 = cx.quotient(2, 2).unwrap();
        let q3 = cx.quotient(2, 3).unwrap();
        assert_eq!(q2.ker_sum, q3.ker_sum);
        assert_eq!(q2.complement, q3.complement);
    }

    #[test]
    fn image_search_examples() {
        let cx = ctx(3, 2, 1, 4, 2);
        // s_1^0 = T_minus([Id,1])
        let s10 = cx.module().make_s(1, 0).unwrap();
        let u = cx.image_search(HeckeOp::Minus, &s10, 0).unwrap().unwrap();
        assert_eq!(u, ModuleVec::basis(CosetRep::identity()));
        // zero has the zero preimage
        assert_eq!(
            cx.image_search(HeckeOp::Minus, &ModuleVec::zero(), 1)
                .unwrap()
                .unwrap(),
            ModuleVec::zero()
        );
        // the type-c witness s_1^6 has no preimage at small horizons
        let s16 = cx.module().make_s(1, 6).unwrap();
        for m in 0..=1usize {
            assert!(
                cx.image_search(HeckeOp::Plus, &s16, m).unwrap().is_none(),
                "unexpected preimage at horizon {m}"
            );
        }
    }

    #[test]
    fn fixed_space_of_quotient_at_qp_params() {
        // Totally ramified degree-1 case: the interior fixed space is
        // two-dimensional.
        let cx = ctx(7, 1, 1, 3, 2);
        let quot = cx.quotient(2, 2).unwrap();
        let gens = cx.module().igen_set(2);
        let fixed = cx.fixed_space(&quot, &gens).unwrap();
        let interior = cx.ball_image_in_quotient(&quot, 0).unwrap();
        let meet = fixed
            .intersect(cx.field(), &interior, cx.options())
            .unwrap();
        assert_eq!(meet.dim(), 2);
    }

    #[test]
    fn disk_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ContextConfig::new(3, 2, 1, 4, 1);
        cfg.cache_dir = Some(dir.path().to_path_buf());
        let cx = HeckeContext::new(cfg.clone()).unwrap();
        let m1 = cx.operator_matrix(HeckeOp::Plus, 1).unwrap();
        // Fresh context reads the cached matrix from disk.
        let cx2 = HeckeContext::new(cfg).unwrap();
        let m2 = cx2.operator_matrix(HeckeOp::Plus, 1).unwrap();
        assert_eq!(m1.rows, m2.rows);
        assert_eq!(
            std::fs::read_dir(dir.path()).unwrap().count(),
            1,
            "expected exactly one cache file"
        );
    }

    #[test]
    fn hypothesis_flags() {
        assert!(ctx(3, 2, 1, 4, 1).flags().in_hypotheses());
        assert!(ctx(7, 1, 1, 3, 1).flags().in_hypotheses());
        // p = 5, f = 1: the window 2 < r < 2 is empty.
        let c = ctx(5, 1, 2, 3, 1);
        assert!(c.flags().digit_range_ok);
        assert!(!c.flags().f1_range_ok);
        assert!(c.flags().describe().is_some());
        // r with a zero digit: r = 3 = 0 + 1*3 at p = 3.
        let c = ctx(3, 2, 1, 3, 1);
        assert!(!c.flags().digit_range_ok);
    }
}
