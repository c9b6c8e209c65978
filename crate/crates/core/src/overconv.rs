//! Overconvergent Bianchi modular symbols: the distribution coefficients
//! D^℘_{k,k}(O_p, L), the weight-k Σ₀ action on moment tables, the unique
//! overconvergent lift ψ_f of the classical eigensymbol φ_f, specialisation
//! back, and the spreading of ψ_f over the Bruhat–Tits tree into the system
//! of distributions μ_f{r − s} on P¹(F_℘).
//!
//! # Moment tables
//!
//! A distribution is stored by its moments m_{i,j} = μ(z^i z̄^j).  For split p
//! the second variable is polynomial: i < M, j ≤ k.  For inert p both
//! variables are locally analytic with total-degree truncation i + j < M.
//! The filtration gives moment (i,j) an absolute precision of M − i (split)
//! or M − (i + j) (inert); precision is additionally tracked through every
//! operation by the p-adic scalars themselves.
//!
//! # Conventions
//!
//! The left weight-k action on test functions is the one used for V_{k,k} in
//! [`crate::modsym`]: (γ·f)(z) = (a+cz)^k (ā+c̄z̄)^k /(det·det̄)^{k/2} ·
//! f((b+dz)/(a+cz), …), expanded as a truncated series; this needs
//! v_℘(c) > 0 and v_℘(a) = 0, the Σ₀ condition.  Distributions carry the
//! dual right action (μ|γ)(h) = μ(γ·h).  Under this action the *support* of
//! γ·h moves by the Möbius action of σγσ, σ = diag(1,−1) — the `sconj`
//! bookkeeping below.
//!
//! # Spreading over the tree
//!
//! Every oriented edge e corresponds to an open U(e) ⊂ P¹(F_℘): a ball
//! B(c, n) = c + π^n O_℘ (edge pointing away from the ∞ end) or the
//! complement of one.  Restrictions of μ_f{r−s} are returned in the chart of
//! the edge: the moment m_{i,j} is the integral of z^i z̄^j where z is the
//! O_℘-coordinate (z − c)/π^n of the ball (for a complement the coordinate is
//! the Möbius transport by the Atkin–Lehner element).  Odd edges are
//! Γ-translates of the reversed standard edge and reduce to ψ_f directly;
//! even edges cross parity once through the ℘-Atkin–Lehner element
//! W = (πu, −v; N, π) (uπ + vM = 1), which acts on μ_f with multiplier
//! a_p^{-1} — the gluing that uses ℘-newness.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::eigendata::EigenPacket;
use crate::errors::{Result, ShcError};
use crate::modsym::{ClassicalSymbol, Cusp, DivisorDelta0, ManinPresentation, Term};
use crate::numfield::{self, BaseField, Fe, Ideal, ResidueRing};
use crate::padic::{FieldRef, PadicElem, PadicJson, Raw};
use crate::tree::{Edge, GMat, LocalEmbed, Tree};

// ---------------------------------------------------------------------------
// Parameters and layout
// ---------------------------------------------------------------------------

/// Static data for one (F, N, ℘, k, M) configuration.
pub struct OCParams {
    pub base: BaseField,
    pub level: Ideal,
    pub prime: Ideal,
    pub k: usize,
    /// number of moments M (truncation order)
    pub mt: usize,
    pub fld: FieldRef,
    pub emb: LocalEmbed,
    pub split: bool,
}

impl OCParams {
    pub fn new(
        base: BaseField,
        level: Ideal,
        prime: Ideal,
        k: usize,
        mt: usize,
        fld: &FieldRef,
    ) -> Result<OCParams> {
        if !prime.divides(&base, &level) {
            return Err(ShcError::InvariantViolation(
                "℘ must divide the level for the ℘-new theory".into(),
            ));
        }
        let split = prime.norm < (fld.p as i128) * (fld.p as i128);
        if split && mt < k + 1 {
            return Err(ShcError::InvariantViolation("need M ≥ k+1 moments".into()));
        }
        if !split && mt < 2 * k + 1 {
            return Err(ShcError::InvariantViolation("need M > 2k moments (inert)".into()));
        }
        let emb = LocalEmbed::new(&base, fld, &prime.gen);
        Ok(OCParams { base, level, prime, k, mt, fld: fld.clone(), emb, split })
    }

    /// Linear index of moment (i, j), if stored.
    pub fn idx(&self, i: usize, j: usize) -> Option<usize> {
        if self.split {
            (i < self.mt && j <= self.k).then(|| i * (self.k + 1) + j)
        } else {
            (i + j < self.mt).then(|| {
                // row i starts after rows 0..i of lengths M, M-1, …
                let off: usize = (0..i).map(|r| self.mt - r).sum();
                off + j
            })
        }
    }

    pub fn dim(&self) -> usize {
        if self.split {
            self.mt * (self.k + 1)
        } else {
            self.mt * (self.mt + 1) / 2
        }
    }

    /// Enumerate stored (i, j) pairs in linear-index order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.dim());
        if self.split {
            for i in 0..self.mt {
                for j in 0..=self.k {
                    v.push((i, j));
                }
            }
        } else {
            for i in 0..self.mt {
                for j in 0..self.mt - i {
                    v.push((i, j));
                }
            }
        }
        v
    }

    /// Filtered absolute precision of moment (i, j).
    pub fn abs_prec(&self, i: usize, j: usize) -> i64 {
        if self.split {
            (self.mt - i) as i64
        } else {
            (self.mt - i - j) as i64
        }
    }
}

/// A finite-precision distribution in D^℘_{k,k}: the truncated moment table.
#[derive(Clone, Debug)]
pub struct MomentDistribution {
    pub m: Vec<Raw>,
}

impl MomentDistribution {
    pub fn zero(params: &OCParams) -> MomentDistribution {
        let mut m = vec![params.fld.zero(); params.dim()];
        for (t, (i, j)) in params.pairs().iter().enumerate() {
            m[t] = params.fld.cap_prec(&params.fld.zero(), params.abs_prec(*i, *j));
        }
        MomentDistribution { m }
    }

    pub fn moment(&self, params: &OCParams, i: usize, j: usize) -> Raw {
        self.m[params.idx(i, j).expect("moment stored")]
    }

    fn cap(&mut self, params: &OCParams) {
        for (t, (i, j)) in params.pairs().iter().enumerate() {
            self.m[t] = params.fld.cap_prec(&self.m[t], params.abs_prec(*i, *j));
        }
    }

    pub fn add_scaled(&mut self, fld: &FieldRef, o: &MomentDistribution, sgn: i64) {
        for (a, b) in self.m.iter_mut().zip(o.m.iter()) {
            *a = fld.add(a, &fld.mul_i64(b, sgn));
        }
    }

    pub fn eq_at_min(&self, fld: &FieldRef, o: &MomentDistribution) -> bool {
        self.m.iter().zip(o.m.iter()).all(|(a, b)| fld.eq_at_min(a, b))
    }
}

// ---------------------------------------------------------------------------
// The Σ₀ action
// ---------------------------------------------------------------------------

/// σγσ with σ = diag(1, −1): flips the signs of b and c.  Translates between
/// the Möbius motion of supports and the weight-action point map.
pub fn sconj(base: &BaseField, g: &GMat) -> GMat {
    GMat { m: [g.m[0], base.neg(&g.m[1]), base.neg(&g.m[2]), g.m[3]], t: g.t }
}

/// Truncated expansion of (b + d·z)^e; for e < 0 requires v(b) = 0.
fn lin_pow(fld: &FieldRef, b: &Raw, d: &Raw, e: i64, len: usize) -> Vec<Raw> {
    let mut out = vec![fld.zero(); len];
    if e >= 0 {
        // finite binomial
        let mut coef: i128 = 1;
        let mut bp = fld.pow_i64(b, e).unwrap_or_else(|_| fld.zero());
        // if b is not invertible walk powers directly
        if fld.is_zero(b) && e > 0 {
            // (d z)^e only
            if (e as usize) < len {
                out[e as usize] = fld.pow_i64(d, e).unwrap_or_else(|_| {
                    let mut r = fld.one();
                    for _ in 0..e {
                        r = fld.mul(&r, d);
                    }
                    r
                });
            }
            return out;
        }
        let binv = if e > 0 { fld.inv(b).ok() } else { None };
        match binv {
            Some(binv) => {
                let mut dp = fld.one();
                for t in 0..len.min(e as usize + 1) {
                    out[t] = fld.mul_i64(&fld.mul(&bp, &dp), coef as i64);
                    coef = coef * (e as i128 - t as i128) / (t as i128 + 1);
                    bp = fld.mul(&bp, &binv);
                    dp = fld.mul(&dp, d);
                }
            }
            None => {
                // b a non-unit: compute each term b^{e-t} d^t directly
                for t in 0..len.min(e as usize + 1) {
                    let mut term = fld.one();
                    for _ in 0..(e as usize - t) {
                        term = fld.mul(&term, b);
                    }
                    for _ in 0..t {
                        term = fld.mul(&term, d);
                    }
                    out[t] = fld.mul_i64(&term, binom_i128(e, t as i64) as i64);
                }
            }
        }
        return out;
    }
    // e < 0: b^e (1 + (d/b) z)^e with integer binomial coefficients
    let binv = fld.inv(b).expect("series base must be a unit");
    let q = fld.mul(d, &binv);
    let be = fld.pow_i64(&binv, -e).unwrap();
    let mut coef: i128 = 1;
    let mut qp = fld.one();
    for (t, o) in out.iter_mut().enumerate() {
        *o = fld.mul_i64(&fld.mul(&be, &qp), coef as i64);
        coef = coef * (e as i128 - t as i128) / (t as i128 + 1);
        qp = fld.mul(&qp, &q);
    }
    out
}

fn binom_i128(n: i64, r: i64) -> i128 {
    let mut c: i128 = 1;
    for t in 0..r {
        c = c * (n as i128 - t as i128) / (t as i128 + 1);
    }
    c
}

fn series_mul(fld: &FieldRef, x: &[Raw], y: &[Raw], len: usize) -> Vec<Raw> {
    let mut out = vec![fld.zero(); len];
    for (i, xi) in x.iter().enumerate() {
        if i >= len || fld.is_zero(xi) {
            continue;
        }
        for (j, yj) in y.iter().enumerate() {
            if i + j >= len {
                break;
            }
            out[i + j] = fld.add(&out[i + j], &fld.mul(xi, yj));
        }
    }
    out
}

/// Verify γ ∈ Σ₀ and return its π-normalised numerator matrix.  The weight
/// action is scale-invariant, so membership is projective: all common
/// π-powers are stripped, not only those recorded in the denominator field.
pub fn sigma0_check(params: &OCParams, g: &GMat) -> Result<GMat> {
    let mut n = g.normalized(&params.base, &params.prime.gen);
    if n.m.iter().all(|e| e.is_zero()) {
        return Err(ShcError::NotInSigma0);
    }
    loop {
        let mut divided = [numfield::ZERO; 4];
        let mut ok = true;
        for (i, e) in n.m.iter().enumerate() {
            match params.base.exact_div(e, &params.prime.gen) {
                Some(q) => divided[i] = q,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        n = GMat { m: divided, t: 0 };
    }
    let fld = &params.fld;
    let a = params.emb.fe(&n.m[0]);
    let c = params.emb.fe(&n.m[2]);
    let det = n.det_num(&params.base);
    if det.is_zero() {
        return Err(ShcError::NotInSigma0);
    }
    if fld.ord(&a) != Some(0) {
        return Err(ShcError::NotInSigma0);
    }
    if !fld.is_zero(&c) && fld.ord(&c) == Some(0) {
        return Err(ShcError::NotInSigma0);
    }
    Ok(n)
}

/// The dual weight-k action μ ↦ μ|γ on moment tables.
pub fn sigma0_act(
    params: &OCParams,
    g: &GMat,
    mu: &MomentDistribution,
) -> Result<MomentDistribution> {
    let n = sigma0_check(params, g)?;
    Ok(sigma0_act_unchecked(params, &n, mu))
}

fn sigma0_act_unchecked(
    params: &OCParams,
    n: &GMat,
    mu: &MomentDistribution,
) -> MomentDistribution {
    let fld = &params.fld;
    let base = &params.base;
    let k = params.k as i64;
    let mt = params.mt;
    let e1 = |x: &Fe| params.emb.fe(x);
    let e2 = |x: &Fe| params.emb.fe(&base.conj(x));
    let (a1, b1, c1, d1) = (e1(&n.m[0]), e1(&n.m[1]), e1(&n.m[2]), e1(&n.m[3]));
    let (a2, b2, c2, d2) = (e2(&n.m[0]), e2(&n.m[1]), e2(&n.m[2]), e2(&n.m[3]));
    let det = n.det_num(base);
    let detfac = if k == 0 {
        fld.one()
    } else {
        let d12 = fld.mul(&e1(&det), &e2(&det));
        fld.pow_i64(&fld.inv(&d12).expect("nonzero determinant"), k / 2).unwrap()
    };
    // variable-1 expansions: γ·z^i = (b1 + d1 z)^i (a1 + c1 z)^{k−i}
    let len1 = mt;
    let f1: Vec<Vec<Raw>> = (0..mt)
        .map(|i| {
            let p1 = lin_pow(fld, &b1, &d1, i as i64, len1);
            let p2 = lin_pow(fld, &a1, &c1, k - i as i64, len1);
            series_mul(fld, &p1, &p2, len1)
        })
        .collect();
    // variable-2 expansions
    let jmax = if params.split { params.k } else { mt - 1 };
    let len2 = if params.split { params.k + 1 } else { mt };
    let f2: Vec<Vec<Raw>> = (0..=jmax)
        .map(|j| {
            let p1 = lin_pow(fld, &b2, &d2, j as i64, len2);
            let p2 = lin_pow(fld, &a2, &c2, k - j as i64, len2);
            series_mul(fld, &p1, &p2, len2)
        })
        .collect();
    let mut out = MomentDistribution::zero(params);
    for (t, (i, j)) in params.pairs().iter().enumerate() {
        let mut acc = fld.zero();
        for (tp, (ip, jp)) in params.pairs().iter().enumerate() {
            let c1v = &f1[*i][*ip];
            if fld.is_zero(c1v) {
                continue;
            }
            let c2v = &f2[*j][*jp];
            if fld.is_zero(c2v) {
                continue;
            }
            acc = fld.add(&acc, &fld.mul(&fld.mul(c1v, c2v), &mu.m[tp]));
        }
        out.m[t] = fld.mul(&acc, &detfac);
    }
    out.cap(params);
    out
}

// ---------------------------------------------------------------------------
// Overconvergent symbols
// ---------------------------------------------------------------------------

/// An overconvergent modular symbol: per Manin class x the distribution
/// ψ{g_x·0 → g_x·∞} (no section twist, so that every matrix that ever acts
/// on a table lies in Σ₀).
pub struct OCSymbol {
    pub level_key: String,
    pub k: usize,
    pub mt: usize,
    pub dists: Vec<MomentDistribution>,
}

/// Evaluate ψ at a degree-zero divisor of cusps, as a moment table on O_p.
pub fn eval_divisor(
    pres: &ManinPresentation,
    params: &OCParams,
    psi: &OCSymbol,
    d: &DivisorDelta0,
) -> Result<MomentDistribution> {
    let fld = &params.fld;
    let base = &params.base;
    let inf = Cusp::infinity();
    let mut acc = MomentDistribution::zero(params);
    for (coef, c) in &d.terms {
        for (y, sgn, t) in pres.reduce_path(&inf, c) {
            // piece value = dist(y) | (g_y · adj(g_piece)), a Γ₀(N) element
            let act = pres.sections[y].mul(base, &t);
            let v = sigma0_act(params, &act, &psi.dists[y])?;
            acc.add_scaled(fld, &v, sgn * coef);
        }
    }
    acc.cap(params);
    Ok(acc)
}

/// Restriction of each distribution to its (k+1)² polynomial moments.
pub fn specialize(
    pres: &ManinPresentation,
    params: &OCParams,
    psi: &OCSymbol,
) -> ClassicalSymbol {
    let fld = &params.fld;
    let base = &params.base;
    let kk = params.k + 1;
    let values: Vec<Vec<Raw>> = psi
        .dists
        .iter()
        .enumerate()
        .map(|(x, dist)| {
            let mut poly = vec![fld.zero(); kk * kk];
            for i in 0..kk {
                for j in 0..kk {
                    poly[i * kk + j] = dist.moment(params, i, j);
                }
            }
            // back to the Manin-vector convention m(x) = ψ{g_x path}|g_x
            let a = pres.w.action_matrix(&pres.sections[x]);
            let _ = base;
            pres.w.dual_apply(&poly, &a)
        })
        .collect();
    ClassicalSymbol { k: params.k, level_key: pres.level.key(), values }
}

/// The U_℘ stencil: per class the list (y, sign, γ) with γ ∈ Σ₀, fixed
/// across iterations.
struct UpStencil {
    terms: Vec<Vec<(usize, i64, GMat)>>,
}

fn build_stencil(pres: &ManinPresentation, params: &OCParams) -> Result<UpStencil> {
    let base = &params.base;
    let rr = ResidueRing::new(base, &params.prime.gen);
    let cosets: Vec<GMat> = rr
        .elements()
        .iter()
        .map(|a| GMat::from_integral([numfield::ONE, *a, numfield::ZERO, params.prime.gen]))
        .collect();
    let terms = (0..pres.classes.len())
        .map(|x| {
            let gx = pres.sections[x];
            let mut row = Vec::new();
            for ga in &cosets {
                let gg = ga.mul(base, &gx);
                let c0 = Cusp::new(base, gg.m[1], gg.m[3]);
                let cinf = Cusp::new(base, gg.m[0], gg.m[2]);
                for (y, sgn, t) in pres.reduce_path(&c0, &cinf) {
                    let act = pres.sections[y].mul(base, &t).mul(base, ga);
                    sigma0_check(params, &act)?;
                    row.push((y, sgn, act));
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UpStencil { terms })
}

fn apply_up(
    params: &OCParams,
    stencil: &UpStencil,
    apinv: &Raw,
    dists: &[MomentDistribution],
) -> Vec<MomentDistribution> {
    let fld = &params.fld;
    stencil
        .terms
        .iter()
        .map(|row| {
            let mut acc = MomentDistribution::zero(params);
            for (y, sgn, act) in row {
                let n = act.normalized(&params.base, &params.prime.gen);
                let v = sigma0_act_unchecked(params, &n, &dists[*y]);
                acc.add_scaled(fld, &v, *sgn);
            }
            for m in acc.m.iter_mut() {
                *m = fld.mul(m, apinv);
            }
            acc.cap(params);
            acc
        })
        .collect()
}

/// The control theorem, constructively: the unique overconvergent lift of the
/// ℘-new eigensymbol, computed by iterating ψ ← a_p^{-1}·U_℘ψ from an
/// arbitrary moment-lift until the moment tables stabilise.
pub fn lift(
    pres: &ManinPresentation,
    params: &OCParams,
    phi: &ClassicalSymbol,
    packet: &EigenPacket,
) -> Result<OCSymbol> {
    let fld = &params.fld;
    let kk = params.k + 1;
    if packet.ap == 0 {
        return Err(ShcError::InvariantViolation("a_p = 0 is not ℘-new".into()));
    }
    let apinv = fld.inv(&fld.from_i128(packet.ap))?;
    // seed: polynomial moments from φ, higher moments zero
    let mut dists: Vec<MomentDistribution> = (0..pres.classes.len())
        .map(|x| {
            let a = pres.w.action_matrix(&pres.sections[x].adjugate(&params.base));
            let poly = pres.w.dual_apply(&phi.values[x], &a);
            let mut d = MomentDistribution::zero(params);
            for i in 0..kk {
                for j in 0..kk {
                    if let Some(t) = params.idx(i, j) {
                        d.m[t] = poly[i * kk + j];
                    }
                }
            }
            d.cap(params);
            d
        })
        .collect();
    let stencil = build_stencil(pres, params)?;
    let budget = params.mt + 8;
    let mut stable = false;
    for _ in 0..budget {
        let next = apply_up(params, &stencil, &apinv, &dists);
        let same = next.iter().zip(dists.iter()).all(|(a, b)| a.eq_at_min(fld, b));
        dists = next;
        if same {
            stable = true;
            break;
        }
    }
    if !stable {
        return Err(ShcError::NoConvergence(budget));
    }
    let psi = OCSymbol { level_key: pres.level.key(), k: params.k, mt: params.mt, dists };
    // postcondition: specialisation reproduces φ at the filtered precision
    let rho = specialize(pres, params, &psi);
    for (a, b) in rho.values.iter().flatten().zip(phi.values.iter().flatten()) {
        if !fld.eq_at_min(a, b) {
            return Err(ShcError::InvariantViolation(
                "specialisation of the lift disagrees with the classical symbol".into(),
            ));
        }
    }
    Ok(psi)
}

// ---------------------------------------------------------------------------
// Spreading over the tree
// ---------------------------------------------------------------------------

/// Which side of P¹(F_℘) an edge shadows.
#[derive(Clone, Debug)]
pub struct BallDesc {
    /// global centre c = c_num / π^{s}
    pub c_num: Fe,
    pub s: i64,
    /// ball level: U = B(c, n) or P¹ ∖ B(c, n)
    pub n: i64,
    pub complement: bool,
}

/// μ_f as a system of distributions on P¹(F_℘): a handle on ψ_f plus the
/// eigen-data used for the parity gluing, with a memo cache of restrictions.
pub struct SpreadSymbol<'a> {
    pub pres: &'a ManinPresentation,
    pub params: &'a OCParams,
    pub psi: &'a OCSymbol,
    pub ap: i128,
    pub omega: i64,
    /// ℘-Atkin–Lehner element (πu, −v; N, π) with uπ + vM = 1
    pub w: GMat,
    pub tree: Tree,
    memo: Mutex<HashMap<String, MomentDistribution>>,
}

impl<'a> SpreadSymbol<'a> {
    pub fn new(
        pres: &'a ManinPresentation,
        params: &'a OCParams,
        psi: &'a OCSymbol,
        packet: &EigenPacket,
    ) -> Result<SpreadSymbol<'a>> {
        let base = &params.base;
        let pi = params.prime.gen;
        // exact cofactor with N = π·m (no associate canonicalisation)
        let m_gen = base.exact_div(&params.level.gen, &pi).ok_or_else(|| {
            ShcError::InvariantViolation("level is not divisible by ℘".into())
        })?;
        let (g, u, v) = base.xgcd(&pi, &m_gen);
        let ginv = base
            .units()
            .into_iter()
            .find(|w| base.mul(&g, w).is_one())
            .ok_or_else(|| ShcError::PrimeDividesM(params.prime.key()))?;
        let u = base.mul(&u, &ginv);
        let v = base.mul(&v, &ginv);
        // W = (πu, −v; N, π), det = π(uπ + vM) = π
        let w = GMat::from_integral([
            base.mul(&pi, &u),
            base.neg(&v),
            params.level.gen,
            pi,
        ]);
        debug_assert_eq!(w.det_num(base), pi);
        let tree = Tree::new(&params.fld);
        Ok(SpreadSymbol {
            pres,
            params,
            psi,
            ap: packet.ap,
            omega: packet.omega as i64,
            w,
            tree,
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// The open set U(e) in centre/level form.
    pub fn ball_of_edge(&self, e: &Edge) -> Result<BallDesc> {
        let (v, complement) = if e.dst.n == e.src.n + 1 {
            (e.dst, false)
        } else if e.dst.n == e.src.n - 1 {
            (e.src, true)
        } else {
            return Err(ShcError::InvariantViolation("not an edge of the tree".into()));
        };
        let (c_num, s) = self.global_center(&self.tree.lift_u(&v), v.n)?;
        Ok(BallDesc { c_num, s, n: v.n, complement })
    }

    /// Lift a ℘-adic residue u (mod π^n) to a global c = c_num/π^s with
    /// ι(c) ≡ u (mod π^n), by greedy digit extraction in the global basis.
    fn global_center(&self, u: &Raw, n: i64) -> Result<(Fe, i64)> {
        let fld = &self.params.fld;
        let base = &self.params.base;
        let emb = &self.params.emb;
        if fld.is_zero(u) || fld.ord(u).map(|o| o >= n).unwrap_or(true) {
            return Ok((numfield::ZERO, 0));
        }
        let lo = fld.ord(u).unwrap();
        let s = (-lo).max(0).max(-n).max(0);
        // digit set: a + bω for 0 ≤ a, b < p
        let p = fld.p as i128;
        let pi_loc = emb.fe(&self.params.prime.gen);
        let pi_inv = fld.inv(&pi_loc)?;
        let mut cur = *u;
        let mut c = numfield::ZERO;
        // accumulate c_num directly: digit at π^j contributes digit·π^{j+s}
        let mut j = lo;
        // local running value scaled so the current digit is at level 0
        let mut scale = fld.pow_i64(&pi_inv, lo)?;
        while j < n {
            let level0 = fld.mul(&cur, &scale);
            if fld.is_zero(&level0) {
                break;
            }
            if fld.ord(&level0).map(|o| o > 0).unwrap_or(true) {
                // zero digit here
                scale = fld.mul(&scale, &pi_inv);
                j += 1;
                continue;
            }
            let mut found = None;
            'search: for a in 0..p {
                for b in 0..p {
                    let cand = Fe::new(a, b);
                    let diff = fld.sub(&level0, &emb.fe(&cand));
                    if fld.is_zero(&diff) || fld.ord(&diff).map(|o| o > 0).unwrap_or(true) {
                        found = Some(cand);
                        break 'search;
                    }
                }
            }
            let digit =
                found.ok_or_else(|| ShcError::InvariantViolation("digit lift failed".into()))?;
            // c_num += digit · π^{j+s}
            let mut term = digit;
            for _ in 0..(j + s) {
                term = base.mul(&term, &self.params.prime.gen);
            }
            c = base.add(&c, &term);
            cur = fld.sub(&cur, &fld.mul(&emb.fe(&digit), &fld.pow_i64(&pi_loc, j)?));
            scale = fld.mul(&scale, &pi_inv);
            j += 1;
        }
        Ok((c, s))
    }

    /// The matrix (π^n, c; 0, 1) as a GMat (π-denominators via the t field).
    fn gt_matrix(&self, b: &BallDesc) -> GMat {
        let base = &self.params.base;
        let pi = &self.params.prime.gen;
        let s = b.s.max(-b.n).max(0);
        let mut a = numfield::ONE;
        for _ in 0..(b.n + s) {
            a = base.mul(&a, pi);
        }
        let mut bb = b.c_num;
        for _ in 0..(s - b.s) {
            bb = base.mul(&bb, pi);
        }
        let mut d = numfield::ONE;
        for _ in 0..s {
            d = base.mul(&d, pi);
        }
        GMat { m: [a, bb, numfield::ZERO, d], t: s }
    }

    /// Divisor transform τ, parity-crossing count j ∈ {0, 1}, and the chart
    /// element ζ of the edge (e = ζ·ē* with chart map Möbius_ζ : O → U(e)).
    ///
    /// Uniformly: T(e, D) = a_p^{−j}·ψ{adj(σζσ)·D} with ζ = g_t for a ball
    /// (affine chart z ↦ π^n z + c) and ζ = g_t·W for a complement, and
    /// j = v_℘(det ζ) mod 2 the number of parity crossings.
    pub fn transport(&self, e: &Edge) -> Result<(GMat, u32, GMat)> {
        let base = &self.params.base;
        let b = self.ball_of_edge(e)?;
        let gt = self.gt_matrix(&b);
        let sg = sconj(base, &gt);
        let sw = sconj(base, &self.w);
        let (tau, j, chart) = if !b.complement {
            (sg.adjugate(base), (b.n.rem_euclid(2)) as u32, gt)
        } else {
            (
                sw.adjugate(base).mul(base, &sg.adjugate(base)),
                ((b.n + 1).rem_euclid(2)) as u32,
                gt.mul(base, &self.w),
            )
        };
        Ok((tau, j, chart))
    }

    fn edge_key(e: &Edge) -> String {
        let f = |v: &crate::tree::Vertex| format!("{}:{}:{:?}", v.n, v.u.expo, v.u.c);
        format!("{}|{}", f(&e.src), f(&e.dst))
    }

    /// Moment table of μ_f{r − s} restricted to U(e), in the chart of e.
    pub fn restrict_moments(&self, e: &Edge, r: &Cusp, s: &Cusp) -> Result<MomentDistribution> {
        let base = &self.params.base;
        let fld = &self.params.fld;
        let key = format!(
            "{}#{}/{}#{}/{}",
            Self::edge_key(e),
            numfield::fe_string(&r.n),
            numfield::fe_string(&r.d),
            numfield::fe_string(&s.n),
            numfield::fe_string(&s.d),
        );
        if let Some(hit) = self.memo.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let (tau, j, _chart) = self.transport(e)?;
        let d = DivisorDelta0::path(&r.apply(base, &tau), &s.apply(base, &tau));
        let mut tbl = eval_divisor(self.pres, self.params, self.psi, &d)?;
        if j == 1 {
            let apinv = fld.inv(&fld.from_i128(self.ap))?;
            for m in tbl.m.iter_mut() {
                *m = fld.mul(m, &apinv);
            }
            tbl.cap(self.params);
        }
        self.memo.lock().unwrap().insert(key, tbl.clone());
        Ok(tbl)
    }
}

// ---------------------------------------------------------------------------
// Cache (schema shc-oc/1)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct OcJson {
    schema: String,
    field_d: i64,
    level: String,
    prime: String,
    weight: usize,
    moments: usize,
    p: u64,
    f: usize,
    prec: i64,
    label: String,
    tables: Vec<Vec<PadicJson>>,
}

pub fn save_oc(
    path: &std::path::Path,
    params: &OCParams,
    psi: &OCSymbol,
    label: &str,
) -> Result<()> {
    let fld = &params.fld;
    let j = OcJson {
        schema: "shc-oc/1".into(),
        field_d: -(params.base.d as i64),
        level: params.level.key(),
        prime: params.prime.key(),
        weight: params.k,
        moments: params.mt,
        p: fld.p,
        f: fld.f,
        prec: fld.work_prec,
        label: label.into(),
        tables: psi
            .dists
            .iter()
            .map(|d| d.m.iter().map(|r| PadicElem::new(fld, *r).to_json()).collect())
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&j)?)?;
    Ok(())
}

pub fn load_oc(path: &std::path::Path, params: &OCParams) -> Result<OCSymbol> {
    let fld = &params.fld;
    let data = std::fs::read_to_string(path)?;
    let j: OcJson = serde_json::from_str(&data)
        .map_err(|e| ShcError::SchemaError(format!("shc-oc parse: {e}")))?;
    if j.schema != "shc-oc/1" {
        return Err(ShcError::SchemaError(format!("unsupported schema {}", j.schema)));
    }
    if j.field_d != -(params.base.d as i64)
        || j.level != params.level.key()
        || j.prime != params.prime.key()
        || j.weight != params.k
        || j.moments != params.mt
        || j.p != fld.p
        || j.f != fld.f
    {
        return Err(ShcError::MetadataMismatch("oc cache metadata".into()));
    }
    let dists: Vec<MomentDistribution> = j
        .tables
        .iter()
        .map(|v| {
            let m = v
                .iter()
                .map(|pj| PadicElem::from_json(fld, pj).map(|e| e.raw))
                .collect::<Result<Vec<Raw>>>()?;
            if m.len() != params.dim() {
                return Err(ShcError::SchemaError("moment table length mismatch".into()));
            }
            Ok(MomentDistribution { m })
        })
        .collect::<Result<_>>()?;
    Ok(OCSymbol { level_key: j.level, k: j.weight, mt: j.moments, dists })
}

// keep the Term alias referenced (it is the public face of reduce_path)
const _: fn() -> Option<Term> = || None;
