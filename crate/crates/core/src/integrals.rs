//! The double integrals Φ^{log,σ} and Φ^{ord}, homology classes in the image
//! of the connecting morphism δ, and the cohomological L-invariants.
//!
//! Points of H^ur_℘ = P¹(Q_p^ur) ∖ P¹(F_℘) are represented as elements of the
//! unramified quadratic extension of F_℘ (degree 2f over Q_p).  Both integrals
//! are computed against the spread system μ_f{r − s} of [`crate::overconv`]:
//!
//! * `ord`: a finite sum of moment pairings over the edges of the geodesic
//!   between the two vertex reductions — exact at moment precision, since
//!   only moments with i, j ≤ k enter;
//! * `log`: an adaptive covering of P¹(F_℘) by edge opens, refined until the
//!   local series for log((t−x)/(t−y)) converges with a uniform digit of
//!   margin.  In the chart z ↦ Möbius_ζ(z) of an edge the integrand factors
//!   as log((A₁z+B₁)/(A₂z+B₂)) because the chart denominators cancel in the
//!   cross-ratio, so convergence on O is exactly v(Aᵢ/Bᵢ) ≥ 1, which a
//!   refinement step always eventually achieves (x, y avoid P¹(F_℘), so the
//!   digit matching against any F_℘-centre stalls at finite depth).
//!
//! Pairing a polynomial P ∈ V_{k,k} against the moment table of an edge uses
//! the weight-k pullback (adj(σζσ))·P in the chart of the edge; this is the
//! unique convention making the value independent of the chart, because the
//! tables transform under chart changes by the same weight-k Σ₀-action.
//!
//! The branch of log_p has log_p(p) = 0 (the uniformizer of the unramified
//! working fields is p itself) and ord_℘ is normalized by ord_℘(p) = 1.
//!
//! The σ-twist log(·)^σ for inert ℘ acts on the value by the lift of
//! Frobenius; on chart series this turns z-powers into z̄-powers, so the
//! twisted integral pairs the same coefficients against the (0, j)-leg of the
//! moment tables — the two-variable layout of the inert coefficient modules
//! exists precisely for this.
//!
//! Summation orders are fixed (tree order along geodesics, depth-first in the
//! deterministic `edges_from` order for coverings), so results are
//! reproducible byte-for-byte.
//!
//! The aggregate character-sum assembly S_χ that Lemma 3.5 wraps around these
//! classes lives with the χ-twist machinery in [`crate::cycles`]; here the
//! nonvanishing input is replaced by search-and-certify over hyperbolic trial
//! classes.

use serde_json::json;

use crate::errors::{Result, ShcError};
use crate::modsym::{Cusp, DivisorDelta0, PolyVKK};
use crate::numfield::{self, Fe};
use crate::overconv::{sconj, SpreadSymbol};
use crate::padic::{Embedding, FieldRef, PadicElem, Raw, UnramifiedField};
use crate::tree::{Edge, GMat};

// ---------------------------------------------------------------------------
// Results and classes
// ---------------------------------------------------------------------------

/// Output of one double integral: the value, the absolute precision to which
/// it is certified, and route metadata for the evaluation.
#[derive(Clone, Debug)]
pub struct IntegralResult {
    pub value: PadicElem,
    pub certified_prec: i64,
    /// number of edge opens that contributed
    pub edges: usize,
    /// maximal covering/geodesic depth used
    pub depth: i64,
}

impl IntegralResult {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "value": self.value.to_json(),
            "certified_prec": self.certified_prec,
            "edges": self.edges,
            "depth": self.depth,
        })
    }
}

/// One summand of a class in Δ₀ ⊗ Div⁰(H^ur_℘) ⊗ V_{k,k}.
#[derive(Clone)]
pub struct CycleTriple {
    pub cusps: DivisorDelta0,
    /// signed points of H^ur_℘ (big-field elements); coefficients sum to 0
    pub points: Vec<(i64, Raw)>,
    pub poly: PolyVKK,
}

/// A formal element of Δ₀ ⊗ Div⁰(H^ur_℘) ⊗ V_{k,k}, optionally with a
/// witness that it lies in the image of the connecting morphism δ: a 1-cycle
/// (γ_i, d_i, P_i) with Σ (γ_i − 1)(d_i ⊗ P_i) = 0.
#[derive(Clone)]
pub struct CycleClass {
    pub triples: Vec<CycleTriple>,
    pub witness: Option<Vec<(GMat, DivisorDelta0, PolyVKK)>>,
}

/// The L-invariant search output of Cor. 3.6: one L^σ per embedding, their
/// sum L^BW, and the consistency certificate from a second independent class.
#[derive(Clone, Debug)]
pub struct LInvariantReport {
    pub per_sigma: Vec<PadicElem>,
    pub lbw: PadicElem,
    /// ord_℘-valuation of the chosen denominator Φ^ord(C)
    pub denominator_valuation: i64,
    /// relative digits to which the second class reproduced every L^σ
    pub certificate_digits: i64,
    /// required digits: ⌈(relative certified precision)/2⌉
    pub tolerance_digits: i64,
    pub trials: usize,
}

impl LInvariantReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "per_sigma": self.per_sigma.iter().map(|e| e.to_json()).collect::<Vec<_>>(),
            "lbw": self.lbw.to_json(),
            "denominator_valuation": self.denominator_valuation,
            "certificate_digits": self.certificate_digits,
            "tolerance_digits": self.tolerance_digits,
            "trials": self.trials,
        })
    }
}

// ---------------------------------------------------------------------------
// Evaluation context
// ---------------------------------------------------------------------------

/// Evaluation context: the spread system plus the quadratic unramified
/// extension hosting the points of H^ur_℘.
pub struct IntegralCtx<'a, 'b> {
    pub s: &'a SpreadSymbol<'b>,
    /// the unramified quadratic extension of F_℘ (degree 2f over Q_p)
    pub big: FieldRef,
    /// F_℘ ↪ big
    pub emb: Embedding,
    /// absolute-precision floor below which log integrals refuse to certify
    pub floor: i64,
    /// hard cap on covering depth (hit only on inconsistent inputs)
    pub max_depth: i64,
    /// force coverings at least this deep even where the series converges
    pub min_depth: i64,
}

impl<'a, 'b> IntegralCtx<'a, 'b> {
    pub fn new(s: &'a SpreadSymbol<'b>) -> IntegralCtx<'a, 'b> {
        let fld = &s.params.fld;
        let big = UnramifiedField::new(fld.p, 2 * fld.f, fld.work_prec);
        let emb = Embedding::new(fld, &big, 0);
        IntegralCtx { s, big, emb, floor: 1, max_depth: 48, min_depth: 1 }
    }

    fn fe_big(&self, x: &Fe) -> Raw {
        self.emb.apply(&self.s.params.emb.fe(x))
    }

    /// A point of H^ur_℘ depending on the seed: Teichmüller generator plus a
    /// rational shift (any residue outside the F_℘-subfield reduces to a
    /// vertex, never to the boundary).
    pub fn generic_point(&self, seed: i64) -> Raw {
        let g = self.big.gen_elem();
        let shift = self.big.from_i64(seed);
        let scaled = if seed % 3 == 1 {
            // occasionally mix a deeper digit for variety
            self.big.add(&g, &self.big.shift(&g, 1))
        } else {
            g
        };
        self.big.add(&scaled, &shift)
    }

    /// Γ-action on points of H^ur_℘ in the conventions of the spread system:
    /// Möbius by ι(σγσ) (test-function supports and tree vertices move by the
    /// σ-conjugate; cusp divisors move by plain γ).
    pub fn act_point(&self, g: &GMat, x: &Raw) -> Result<Raw> {
        let base = &self.s.params.base;
        let sg = sconj(base, g);
        let (a, b, c, d) = (
            self.fe_big(&sg.m[0]),
            self.fe_big(&sg.m[1]),
            self.fe_big(&sg.m[2]),
            self.fe_big(&sg.m[3]),
        );
        let big = &self.big;
        let num = big.add(&big.mul(&a, x), &b);
        let den = big.add(&big.mul(&c, x), &d);
        if big.is_zero(&den) {
            return Err(ShcError::InvariantViolation(
                "Möbius denominator vanished on an H^ur point".into(),
            ));
        }
        big.div(&num, &den)
    }

    /// Weight-k pullback pairing of P with the moment table of the edge:
    /// ∫_{U(e)} P(t) dμ{r−s}(t) = ⟨restrict_moments(e), (adj(σζσ))·P⟩.
    fn pair_edge_poly(&self, e: &Edge, r: &Cusp, s: &Cusp, p: &PolyVKK) -> Result<Raw> {
        let params = self.s.params;
        let fld = &params.fld;
        let base = &params.base;
        let tbl = self.s.restrict_moments(e, r, s)?;
        let (_tau, _j, chart) = self.s.transport(e)?;
        let ge = sconj(base, &chart).adjugate(base);
        let q = self.s.pres.w.act_poly(&ge, p);
        let k = params.k;
        let mut acc = fld.cap_prec(&fld.zero(), fld.work_prec);
        for a in 0..=k {
            for b in 0..=k {
                if params.idx(a, b).is_none() {
                    continue;
                }
                let term = fld.mul(&q.c[a * (k + 1) + b], &tbl.moment(params, a, b));
                acc = fld.add(&acc, &term);
            }
        }
        Ok(acc)
    }

    // -- ord ---------------------------------------------------------------

    /// Def. 3.5(ii): Σ over e on the geodesic red_℘(x) → red_℘(y) of
    /// ∫_{U(e)} P dμ{r−s}.  Exact at moment precision.
    pub fn ord_integral(
        &self,
        x: &Raw,
        y: &Raw,
        r: &Cusp,
        s: &Cusp,
        p: &PolyVKK,
    ) -> Result<IntegralResult> {
        let tree = &self.s.tree;
        let vx = tree.reduction_map(&self.emb, x)?;
        let vy = tree.reduction_map(&self.emb, y)?;
        let fld = &self.s.params.fld;
        let path = tree.geodesic(&vx, &vy);
        let mut acc = fld.cap_prec(&fld.zero(), fld.work_prec);
        let mut depth = 0i64;
        for e in &path {
            depth = depth.max(e.src.n.abs()).max(e.dst.n.abs());
            acc = fld.add(&acc, &self.pair_edge_poly(e, r, s, p)?);
        }
        let v = self.emb.apply(&acc);
        let cp = v.prec;
        Ok(IntegralResult {
            value: PadicElem::new(&self.big, v),
            certified_prec: cp,
            edges: path.len(),
            depth,
        })
    }

    // -- log ---------------------------------------------------------------

    /// Def. 3.5(i): ∫_{P¹(F_℘)} log_p((t−x)/(t−y))^σ P(t) dμ{r−s}(t), by the
    /// adaptive chart covering described in the module docs.  σ = 0 is the
    /// identity embedding; σ = 1 is Frobenius (inert ℘ only).
    pub fn log_integral(
        &self,
        sigma: usize,
        x: &Raw,
        y: &Raw,
        r: &Cusp,
        s: &Cusp,
        p: &PolyVKK,
    ) -> Result<IntegralResult> {
        let params = self.s.params;
        if sigma >= if params.split { 1 } else { 2 } {
            return Err(ShcError::InvariantViolation(
                "σ out of range for this completion".into(),
            ));
        }
        let tree = &self.s.tree;
        // validates that x, y are honest H^ur points (PointOnBoundary otherwise)
        tree.reduction_map(&self.emb, x)?;
        tree.reduction_map(&self.emb, y)?;
        let big = &self.big;
        let fld = &params.fld;
        let base = &params.base;
        let k = params.k;
        let kk = k + 1;
        let mt = params.mt;
        // max ord_p(m) for any series index m ≥ mt near the truncation point
        let mut plog = 0i64;
        let mut acc_p = 1usize;
        while acc_p <= mt {
            acc_p *= big.p as usize;
            plog += 1;
        }
        let mut work: Vec<(Edge, i64)> = tree
            .edges_from(&tree.base_vertex())
            .into_iter()
            .map(|e| (e, 1))
            .collect();
        let mut acc = big.cap_prec(&big.zero(), big.work_prec);
        let mut skip_floor = i64::MAX;
        let mut edges = 0usize;
        let mut maxdepth = 0i64;
        while let Some((e, depth)) = work.pop() {
            let (_t, _j, chart) = self.s.transport(&e)?;
            let (ca, cb, cc, cd) = (
                self.fe_big(&chart.m[0]),
                self.fe_big(&chart.m[1]),
                self.fe_big(&chart.m[2]),
                self.fe_big(&chart.m[3]),
            );
            // (t−x)/(t−y) ∘ chart = (A₁z+B₁)/(A₂z+B₂)
            let a1 = big.sub(&ca, &big.mul(x, &cc));
            let b1 = big.sub(&cb, &big.mul(x, &cd));
            let a2 = big.sub(&ca, &big.mul(y, &cc));
            let b2 = big.sub(&cb, &big.mul(y, &cd));
            let conv = |aa: &Raw, bb: &Raw| -> bool {
                if big.is_zero(aa) {
                    return true;
                }
                if big.is_zero(bb) {
                    return false;
                }
                big.ord(aa).unwrap() >= big.ord(bb).unwrap() + 1
            };
            if !(conv(&a1, &b1) && conv(&a2, &b2)) || depth < self.min_depth {
                if depth >= self.max_depth {
                    return Err(ShcError::PrecisionCollapse { got: 0, floor: self.floor });
                }
                for e2 in tree.edges_from(&e.dst) {
                    if e2.dst != e.src {
                        work.push((e2, depth + 1));
                    }
                }
                continue;
            }
            edges += 1;
            maxdepth = maxdepth.max(depth);
            let tbl = self.s.restrict_moments(&e, r, s)?;
            let ge = sconj(base, &chart).adjugate(base);
            let q = self.s.pres.w.act_poly(&ge, p);
            // log((A₁z+B₁)/(A₂z+B₂)) = log(B₁/B₂) + Σ_{m≥1} (−1)^{m+1}/m
            //                           ((A₁/B₁)^m − (A₂/B₂)^m) z^m
            let r1 = big.div(&a1, &b1)?;
            let r2 = big.div(&a2, &b2)?;
            let mut lc: Vec<Raw> = Vec::with_capacity(mt);
            lc.push(big.logp(&big.div(&b1, &b2)?)?);
            let mut p1 = big.one();
            let mut p2 = big.one();
            for m in 1..mt {
                p1 = big.mul(&p1, &r1);
                p2 = big.mul(&p2, &r2);
                let mut vm = 0i64;
                let mut mu = m as u64;
                while mu % big.p == 0 {
                    mu /= big.p;
                    vm += 1;
                }
                let minv = big.inv(&big.from_i64(mu as i64))?;
                let mut term = big.shift(&big.mul(&big.sub(&p1, &p2), &minv), -vm);
                if m % 2 == 0 {
                    term = big.neg(&term);
                }
                lc.push(term);
            }
            if sigma == 1 {
                for t in lc.iter_mut() {
                    *t = big.frobenius(t);
                }
            }
            // pair q_{ab}·ℓ_m with the (a+m, b) (σ = Id) or (a, b+m) (σ = Fr)
            // moments; out-of-table terms only lower the certified precision
            let mut qvmin = i64::MAX;
            for a in 0..kk {
                for b in 0..kk {
                    let qraw = q.c[a * kk + b];
                    if fld.is_zero(&qraw) {
                        continue;
                    }
                    let qb = self.emb.apply(&qraw);
                    qvmin = qvmin.min(big.ord(&qb).unwrap());
                    for (m, l) in lc.iter().enumerate() {
                        let (ii, jj) = if sigma == 0 { (a + m, b) } else { (a, b + m) };
                        match params.idx(ii, jj) {
                            Some(_) => {
                                let mom = self.emb.apply(&tbl.moment(params, ii, jj));
                                acc = big.add(&acc, &big.mul(&big.mul(&qb, l), &mom));
                            }
                            None => {
                                if let (Some(lv), Some(qv)) = (big.ord(l), big.ord(&qb)) {
                                    skip_floor = skip_floor.min(lv + qv);
                                }
                            }
                        }
                    }
                }
            }
            // series tail beyond the stored truncation: v(ℓ_m) ≥ m − ord_p(m)
            if qvmin < i64::MAX {
                skip_floor = skip_floor.min(mt as i64 - plog + qvmin);
            }
        }
        let certified = acc.prec.min(skip_floor);
        if certified < self.floor {
            return Err(ShcError::PrecisionCollapse { got: certified, floor: self.floor });
        }
        let v = big.cap_prec(&acc, certified);
        Ok(IntegralResult {
            value: PadicElem::new(&self.big, v),
            certified_prec: certified,
            edges,
            depth: maxdepth,
        })
    }

    /// Remark 3.6: the Galois-normed combination Σ_σ Φ^{log,σ} (a single term
    /// for split ℘).
    pub fn normed_log_integral(
        &self,
        x: &Raw,
        y: &Raw,
        r: &Cusp,
        s: &Cusp,
        p: &PolyVKK,
    ) -> Result<IntegralResult> {
        let nsigma = if self.s.params.split { 1 } else { 2 };
        let big = &self.big;
        let mut acc = big.cap_prec(&big.zero(), big.work_prec);
        let mut certified = i64::MAX;
        let mut edges = 0;
        let mut depth = 0;
        for sigma in 0..nsigma {
            let part = self.log_integral(sigma, x, y, r, s, p)?;
            acc = big.add(&acc, &part.value.raw);
            certified = certified.min(part.certified_prec);
            edges += part.edges;
            depth = depth.max(part.depth);
        }
        Ok(IntegralResult {
            value: PadicElem::new(&self.big, big.cap_prec(&acc, certified)),
            certified_prec: certified,
            edges,
            depth,
        })
    }

    // -- Γ-invariance ------------------------------------------------------

    /// §3.4: Φ^?(γr−γs, γx−γy, γ·P) = Φ^?(r−s, x−y, P) for both integrals,
    /// compared at the minimum of the certified precisions.
    pub fn gamma_invariance_check(
        &self,
        g: &GMat,
        x: &Raw,
        y: &Raw,
        r: &Cusp,
        s: &Cusp,
        p: &PolyVKK,
    ) -> Result<bool> {
        let base = &self.s.params.base;
        let r2 = r.apply(base, g);
        let s2 = s.apply(base, g);
        let x2 = self.act_point(g, x)?;
        let y2 = self.act_point(g, y)?;
        let p2 = self.s.pres.w.act_poly(g, p);
        let o1 = self.ord_integral(x, y, r, s, p)?;
        let o2 = self.ord_integral(&x2, &y2, &r2, &s2, &p2)?;
        if !o1.value.eq_at_min(&o2.value) {
            return Ok(false);
        }
        let l1 = self.normed_log_integral(x, y, r, s, p)?;
        let l2 = self.normed_log_integral(&x2, &y2, &r2, &s2, &p2)?;
        Ok(l1.value.eq_at_min(&l2.value))
    }

    // -- delta classes -----------------------------------------------------

    /// Eq. (3.7): the class d ⊗ (τ₀ − γτ₀) ⊗ P ∈ Im(δ) attached to a γ ∈ Γ
    /// fixing both the cusp divisor d and the polynomial P.
    pub fn delta_class(
        &self,
        g: &GMat,
        d: &DivisorDelta0,
        p: &PolyVKK,
        tau0: &Raw,
    ) -> Result<CycleClass> {
        let base = &self.s.params.base;
        let fld = &self.s.params.fld;
        if !divisor_eq(&d.apply(base, g), d) {
            return Err(ShcError::NotFixed("cusp divisor is not γ-fixed".into()));
        }
        let gp = self.s.pres.w.act_poly(g, p);
        for (a, b) in gp.c.iter().zip(p.c.iter()) {
            if !fld.eq_at_min(a, b) {
                return Err(ShcError::NotFixed("polynomial is not γ-fixed".into()));
            }
        }
        let gt = self.act_point(g, tau0)?;
        Ok(CycleClass {
            triples: vec![CycleTriple {
                cusps: d.clone(),
                points: vec![(1, *tau0), (-1, gt)],
                poly: p.clone(),
            }],
            witness: Some(vec![(*g, d.clone(), p.clone())]),
        })
    }

    /// Verify the boundary identity Σ (γ_i − 1)(d_i ⊗ P_i) = 0 of a witness
    /// (each item of the classes built here is termwise fixed).
    pub fn verify_witness(&self, c: &CycleClass) -> Result<()> {
        let base = &self.s.params.base;
        let fld = &self.s.params.fld;
        let w = c
            .witness
            .as_ref()
            .ok_or_else(|| ShcError::InvariantViolation("class carries no witness".into()))?;
        for (g, d, p) in w {
            if !divisor_eq(&d.apply(base, g), d) {
                return Err(ShcError::InvariantViolation(
                    "witness boundary identity fails on the divisor leg".into(),
                ));
            }
            let gp = self.s.pres.w.act_poly(g, p);
            for (a, b) in gp.c.iter().zip(p.c.iter()) {
                if !fld.eq_at_min(a, b) {
                    return Err(ShcError::InvariantViolation(
                        "witness boundary identity fails on the polynomial leg".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Bilinear extension of an integral to a class: cusp divisors and point
    /// divisors are decomposed into (positive, negative) pairs.
    fn class_eval<F>(&self, c: &CycleClass, f: F) -> Result<IntegralResult>
    where
        F: Fn(&Raw, &Raw, &Cusp, &Cusp, &PolyVKK) -> Result<IntegralResult>,
    {
        let big = &self.big;
        let mut acc = big.cap_prec(&big.zero(), big.work_prec);
        let mut certified = i64::MAX;
        let mut edges = 0;
        let mut depth = 0;
        for t in &c.triples {
            let cpairs = signed_pairs(&t.cusps.terms)?;
            let ppairs = signed_pairs(&t.points)?;
            for (r, s) in &cpairs {
                for (x, y) in &ppairs {
                    let part = f(x, y, r, s, &t.poly)?;
                    acc = big.add(&acc, &part.value.raw);
                    certified = certified.min(part.certified_prec);
                    edges += part.edges;
                    depth = depth.max(part.depth);
                }
            }
        }
        Ok(IntegralResult {
            value: PadicElem::new(&self.big, big.cap_prec(&acc, certified.min(big.work_prec))),
            certified_prec: certified.min(big.work_prec),
            edges,
            depth,
        })
    }

    pub fn class_ord(&self, c: &CycleClass) -> Result<IntegralResult> {
        self.class_eval(c, |x, y, r, s, p| self.ord_integral(x, y, r, s, p))
    }

    pub fn class_log(&self, sigma: usize, c: &CycleClass) -> Result<IntegralResult> {
        self.class_eval(c, |x, y, r, s, p| self.log_integral(sigma, x, y, r, s, p))
    }

    pub fn class_normed_log(&self, c: &CycleClass) -> Result<IntegralResult> {
        self.class_eval(c, |x, y, r, s, p| self.normed_log_integral(x, y, r, s, p))
    }

    // -- L-invariants ------------------------------------------------------

    /// A hyperbolic trial datum: γ = h·diag(π², 1)·h⁻¹ for h ∈ Γ₀(N), with
    /// fixed cusps h∞, h0 and the γ-fixed polynomial built from its
    /// fixed-point quadratic (1 for k = 0).
    pub fn trial_datum(&self, h: &GMat) -> (GMat, DivisorDelta0, PolyVKK) {
        let base = &self.s.params.base;
        let pi = self.s.params.prime.gen;
        let pi2 = base.mul(&pi, &pi);
        let dpi = GMat::from_integral([pi2, numfield::ZERO, numfield::ZERO, numfield::ONE]);
        let gamma = h.mul(base, &dpi).mul(base, &h.adjugate(base));
        let d = DivisorDelta0::path(
            &Cusp::infinity().apply(base, h),
            &Cusp::zero().apply(base, h),
        );
        let p = self.fixed_poly(&gamma);
        (gamma, d, p)
    }

    /// The γ-fixed element of V_{k,k}: q(X)^{k/2}·q̄(X̄)^{k/2} for the
    /// fixed-point quadratic q(X) = cX² + (a−d)X − b of the point action.
    fn fixed_poly(&self, g: &GMat) -> PolyVKK {
        let params = self.s.params;
        let fld = &params.fld;
        let k = params.k;
        if k == 0 {
            return PolyVKK::monomial(fld, 0, 0, 0);
        }
        let base = &params.base;
        // quadratic coefficients in O_F: [X⁰, X¹, X²] = [−b, a−d, c]
        let q = [
            base.neg(&g.m[1]),
            base.add(&g.m[0], &base.neg(&g.m[3])),
            g.m[2],
        ];
        let emb1: Vec<Raw> = q.iter().map(|e| params.emb.fe(e)).collect();
        let emb2: Vec<Raw> = q.iter().map(|e| params.emb.fe(&base.conj(e))).collect();
        let pow = |coef: &[Raw], e: usize| -> Vec<Raw> {
            let mut acc = vec![fld.one()];
            for _ in 0..e {
                let mut next = vec![fld.zero(); acc.len() + 2];
                for (i, a) in acc.iter().enumerate() {
                    for (j, b) in coef.iter().enumerate() {
                        next[i + j] = fld.add(&next[i + j], &fld.mul(a, b));
                    }
                }
                acc = next;
            }
            acc
        };
        let f1 = pow(&emb1, k / 2);
        let f2 = pow(&emb2, k / 2);
        let mut out = PolyVKK::zero(fld, k);
        for i in 0..=k {
            for j in 0..=k {
                out.c[i * (k + 1) + j] = fld.mul(&f1[i], &f2[j]);
            }
        }
        out
    }

    /// Cor. 3.6: search delta classes until Φ^ord is nonzero with minimal
    /// valuation, take L^σ = Φ^{log,σ}/Φ^ord, certify against a second
    /// independent class, and emit L^BW = Σ_σ L^σ.
    pub fn l_invariant(&self, seed: u64) -> Result<LInvariantReport> {
        use rand::SeedableRng;
        let params = self.s.params;
        let big = &self.big;
        let nsigma = if params.split { 1 } else { 2 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut trials: Vec<(CycleClass, IntegralResult)> = Vec::new();
        let mut tried: Vec<String> = Vec::new();
        for round in 0..2usize {
            let count = if round == 0 { 4 } else { 8 };
            for t in 0..count {
                let h = if round == 0 && t == 0 {
                    GMat::identity()
                } else {
                    self.s.pres.random_gamma0(&mut rng)
                };
                let (gamma, d, p) = self.trial_datum(&h);
                let tau = self.generic_point((round * 16 + t) as i64 + 1);
                let class = self.delta_class(&gamma, &d, &p, &tau)?;
                let o = self.class_ord(&class)?;
                tried.push(format!(
                    "h = {:?}, ord = {:?}",
                    h.m.iter().map(numfield::fe_string).collect::<Vec<_>>(),
                    o.value
                ));
                trials.push((class, o));
            }
            if trials.iter().filter(|(_, o)| !o.value.is_zero()).count() >= 2 {
                break;
            }
            if round == 1 {
                return Err(ShcError::AllDenominatorsVanish(tried.join("; ")));
            }
        }
        // order the nonzero denominators by valuation
        let mut order: Vec<usize> = (0..trials.len())
            .filter(|i| !trials[*i].1.value.is_zero())
            .collect();
        order.sort_by_key(|i| trials[*i].1.value.ordp().unwrap());
        let (c1, o1) = &trials[order[0]];
        let (c2, o2) = &trials[order[1]];
        let denom_val = o1.value.ordp()?;
        let mut per_sigma = Vec::new();
        let mut cert_digits = i64::MAX;
        let mut tol_digits = 0i64;
        for sigma in 0..nsigma {
            let l1 = self.class_log(sigma, c1)?;
            let l2 = self.class_log(sigma, c2)?;
            let v1 = big.div(&l1.value.raw, &o1.value.raw)?;
            let v2 = big.div(&l2.value.raw, &o2.value.raw)?;
            // relative certified precision of the ratio
            let rel = (v1.prec - big.ord(&v1).unwrap_or(v1.prec)).max(1);
            tol_digits = tol_digits.max((rel + 1) / 2);
            let diff = big.sub(&v1, &v2);
            let agree = match big.ord(&diff) {
                None => rel,
                Some(o) => (o - big.ord(&v1).unwrap_or(0)).min(rel),
            };
            cert_digits = cert_digits.min(agree);
            per_sigma.push(PadicElem::new(big, v1));
        }
        if cert_digits < tol_digits {
            return Err(ShcError::InvariantViolation(format!(
                "L-invariant consistency certificate failed: {cert_digits} < {tol_digits} digits"
            )));
        }
        let mut lbw = big.cap_prec(&big.zero(), big.work_prec);
        for l in &per_sigma {
            lbw = big.add(&lbw, &l.raw);
        }
        Ok(LInvariantReport {
            lbw: PadicElem::new(big, lbw),
            per_sigma,
            denominator_valuation: denom_val,
            certificate_digits: cert_digits,
            tolerance_digits: tol_digits,
            trials: trials.len(),
        })
    }
}

// ---------------------------------------------------------------------------
// Small formal-sum helpers
// ---------------------------------------------------------------------------

fn divisor_eq(a: &DivisorDelta0, b: &DivisorDelta0) -> bool {
    use std::collections::HashMap;
    let mut m: HashMap<Cusp, i64> = HashMap::new();
    for (c, cusp) in &a.terms {
        *m.entry(*cusp).or_insert(0) += c;
    }
    for (c, cusp) in &b.terms {
        *m.entry(*cusp).or_insert(0) -= c;
    }
    m.values().all(|v| *v == 0)
}

/// Expand a degree-zero signed list into (positive, negative) pairs.
fn signed_pairs<T: Copy>(terms: &[(i64, T)]) -> Result<Vec<(T, T)>> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (c, t) in terms {
        for _ in 0..c.abs() {
            if *c > 0 {
                pos.push(*t);
            } else {
                neg.push(*t);
            }
        }
    }
    if pos.len() != neg.len() {
        return Err(ShcError::InvariantViolation("divisor is not degree zero".into()));
    }
    Ok(pos.into_iter().zip(neg).collect())
}
