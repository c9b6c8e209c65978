//! Classical Bianchi modular symbols: the V_{k,k}-coefficient system, a
//! Manin-style finite presentation of Symb_{Γ₀(N)}(V_{k,k}^∨) over Euclidean
//! F, Hecke operators, and extraction of the eigensymbol φ_f.
//!
//! Conventions.  A symbol φ assigns to each pair of cusps {r → s} a value in
//! V_{k,k}^∨, additively in paths and Γ₀(N)-equivariantly.  For g ∈ SL₂(O_F)
//! the unimodular path value is stored through the Manin vector
//!
//! ```text
//!     φ{g·0 → g·∞} = m(class of g in Γ₀(N)\SL₂(O_F)) | g⁻¹,
//! ```
//!
//! where (v|h)(P) := v(h·P) is the right dual action.  General paths are
//! routed through ∞ by Euclidean continued fractions, which makes additivity
//! and antisymmetry identities hold by construction; the relation system
//! consists of the two-term (S), torsion (units), three-term (R) relations
//! and a completion by route-consistency rows tying the direct unimodular
//! lookup to its own continued-fraction decomposition (rank-checked, and
//! cross-validated downstream against point-counted Hecke eigenvalues).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigendata::EigenPacket;
use crate::errors::{Result, ShcError};
use crate::linalg::{self, Mat};
use crate::numfield::{self, BaseField, Fe, Ideal, ResidueRing};
use crate::padic::{FieldRef, PadicElem, PadicJson, Raw, MAX_F};
use crate::tree::{GMat, LocalEmbed};

// ---------------------------------------------------------------------------
// Cusps
// ---------------------------------------------------------------------------

/// A cusp (n : d) ∈ P¹(F), stored as a coprime pair with a canonical unit
/// scaling (so equality is plain field equality).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cusp {
    pub n: Fe,
    pub d: Fe,
}

impl Cusp {
    pub fn infinity() -> Cusp {
        Cusp { n: numfield::ONE, d: numfield::ZERO }
    }
    pub fn zero() -> Cusp {
        Cusp { n: numfield::ZERO, d: numfield::ONE }
    }

    pub fn new(fld: &BaseField, n: Fe, d: Fe) -> Cusp {
        assert!(!(n.is_zero() && d.is_zero()), "(0 : 0) is not a cusp");
        let g = fld.gcd(&n, &d);
        let mut n = fld.exact_div(&n, &g).unwrap();
        let mut d = fld.exact_div(&d, &g).unwrap();
        // canonical associate of the pair: scale by the unit canonicalising
        // the denominator (or the numerator for ∞)
        let (_, u) = if d.is_zero() { fld.canon_assoc(&n) } else { fld.canon_assoc(&d) };
        n = fld.mul(&n, &u);
        d = fld.mul(&d, &u);
        Cusp { n, d }
    }

    pub fn apply(&self, fld: &BaseField, g: &GMat) -> Cusp {
        // π-power denominators scale out of a projective pair
        let n = fld.add(&fld.mul(&g.m[0], &self.n), &fld.mul(&g.m[1], &self.d));
        let d = fld.add(&fld.mul(&g.m[2], &self.n), &fld.mul(&g.m[3], &self.d));
        Cusp::new(fld, n, d)
    }
}

// ---------------------------------------------------------------------------
// The coefficient system V_{k,k} and its dual action
// ---------------------------------------------------------------------------

/// A polynomial in V_{k,k}: coefficient (i, j) of X^i·X̄^j, row-major.
#[derive(Clone, Debug)]
pub struct PolyVKK {
    pub k: usize,
    pub c: Vec<Raw>,
}

impl PolyVKK {
    pub fn zero(fld: &FieldRef, k: usize) -> PolyVKK {
        PolyVKK { k, c: vec![fld.zero(); (k + 1) * (k + 1)] }
    }
    pub fn monomial(fld: &FieldRef, k: usize, i: usize, j: usize) -> PolyVKK {
        let mut p = PolyVKK::zero(fld, k);
        p.c[i * (k + 1) + j] = fld.one();
        p
    }
}

/// Weight data: k and the embedding pair ι, ι∘conj of O_F into the working
/// field.
pub struct WeightCtx {
    pub k: usize,
    pub emb: LocalEmbed,
}

fn binom(n: usize, r: usize) -> i64 {
    if r > n {
        return 0;
    }
    let mut v: i64 = 1;
    for t in 0..r {
        v = v * (n - t) as i64 / (t + 1) as i64;
    }
    v
}

impl WeightCtx {
    pub fn new(k: usize, emb: LocalEmbed) -> WeightCtx {
        assert!(k % 2 == 0, "parallel even weight");
        WeightCtx { k, emb }
    }

    pub fn dim(&self) -> usize {
        (self.k + 1) * (self.k + 1)
    }

    pub fn fld(&self) -> &FieldRef {
        &self.emb.fld
    }

    fn factor_matrix(&self, g: &GMat, second: bool) -> Vec<Raw> {
        // weight-k action on one V_k factor through one embedding:
        // X^i ↦ (b+dX)^i (a+cX)^{k−i} / det^{k/2}; the centre acting
        // trivially lets us use the integral numerator matrix throughout.
        let fld = self.fld();
        let base = &self.emb.base;
        let k = self.k;
        let emb = |x: &Fe| -> Raw {
            if second {
                self.emb.fe(&base.conj(x))
            } else {
                self.emb.fe(x)
            }
        };
        let (a, b, c, d) = (emb(&g.m[0]), emb(&g.m[1]), emb(&g.m[2]), emb(&g.m[3]));
        let det = fld.sub(&fld.mul(&a, &d), &fld.mul(&b, &c));
        let dinv_half = fld
            .pow_i64(&fld.inv(&det).expect("invertible group element"), (k / 2) as i64)
            .unwrap();
        // power tables
        let pows = |x: &Raw| -> Vec<Raw> {
            let mut v = vec![fld.one()];
            for t in 0..k {
                let last = v[t];
                v.push(fld.mul(&last, x));
            }
            v
        };
        let (pa, pb, pc, pd) = (pows(&a), pows(&b), pows(&c), pows(&d));
        let mut m = vec![fld.zero(); (k + 1) * (k + 1)];
        for i in 0..=k {
            for j in 0..=k {
                let mut acc = fld.zero();
                for s in 0..=i.min(j) {
                    let t = j - s;
                    if t > k - i {
                        continue;
                    }
                    let coef = binom(i, s) * binom(k - i, t);
                    let term = fld.mul(
                        &fld.mul(&pd[s], &pb[i - s]),
                        &fld.mul(&pc[t], &pa[k - i - t]),
                    );
                    acc = fld.add(&acc, &fld.mul_i64(&term, coef));
                }
                m[j * (k + 1) + i] = fld.mul(&acc, &dinv_half);
            }
        }
        m
    }

    /// Matrix A of P ↦ γ·P on the monomial basis: (γ·P)-coeffs = A·P-coeffs.
    pub fn action_matrix(&self, g: &GMat) -> Vec<Raw> {
        let fld = self.fld();
        let n = self.dim();
        if self.k == 0 {
            return vec![fld.one()];
        }
        let b1 = self.factor_matrix(g, false);
        let b2 = self.factor_matrix(g, true);
        let kk = self.k + 1;
        let mut a = vec![fld.zero(); n * n];
        for j1 in 0..kk {
            for j2 in 0..kk {
                for i1 in 0..kk {
                    for i2 in 0..kk {
                        a[(j1 * kk + j2) * n + (i1 * kk + i2)] =
                            fld.mul(&b1[j1 * kk + i1], &b2[j2 * kk + i2]);
                    }
                }
            }
        }
        a
    }

    pub fn act_poly(&self, g: &GMat, p: &PolyVKK) -> PolyVKK {
        let fld = self.fld();
        let n = self.dim();
        let a = self.action_matrix(g);
        let mut out = PolyVKK::zero(fld, self.k);
        for row in 0..n {
            let mut acc = fld.zero();
            for col in 0..n {
                acc = fld.add(&acc, &fld.mul(&a[row * n + col], &p.c[col]));
            }
            out.c[row] = acc;
        }
        out
    }

    /// Right dual action on value vectors: (v|γ)[j] = Σ_i v[i]·A(γ)[i][j].
    pub fn dual_apply(&self, v: &[Raw], a: &[Raw]) -> Vec<Raw> {
        let fld = self.fld();
        let n = self.dim();
        let mut out = vec![fld.zero(); n];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = fld.zero();
            for (i, vi) in v.iter().enumerate() {
                acc = fld.add(&acc, &fld.mul(vi, &a[i * n + j]));
            }
            *o = acc;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Degree-zero divisors
// ---------------------------------------------------------------------------

/// Finite formal sum of cusps with integer coefficients summing to 0.
#[derive(Clone, Debug)]
pub struct DivisorDelta0 {
    pub terms: Vec<(i64, Cusp)>,
}

impl DivisorDelta0 {
    pub fn new(terms: Vec<(i64, Cusp)>) -> DivisorDelta0 {
        assert_eq!(terms.iter().map(|(c, _)| c).sum::<i64>(), 0, "divisor must have degree 0");
        DivisorDelta0 { terms }
    }
    /// The path divisor (s) − (r).
    pub fn path(r: &Cusp, s: &Cusp) -> DivisorDelta0 {
        DivisorDelta0 { terms: vec![(-1, *r), (1, *s)] }
    }
    pub fn apply(&self, fld: &BaseField, g: &GMat) -> DivisorDelta0 {
        DivisorDelta0 { terms: self.terms.iter().map(|(c, x)| (*c, x.apply(fld, g))).collect() }
    }
}

// ---------------------------------------------------------------------------
// The Manin presentation
// ---------------------------------------------------------------------------

/// One summand `sign · m(class) | g` of a relation or path evaluation.
pub type Term = (usize, i64, GMat);

pub struct ManinPresentation {
    pub base: BaseField,
    pub level: Ideal,
    pub w: WeightCtx,
    /// canonical bottom-row representatives of P¹(O_F/N)
    pub classes: Vec<(Fe, Fe)>,
    index: HashMap<(i128, i128, i128, i128), usize>,
    rr: ResidueRing,
    pub sections: Vec<GMat>,
    // folding data: m(x) = fsign[x] · m(froot[x]) | fmat[x]
    froot: Vec<usize>,
    fsign: Vec<i64>,
    fmat: Vec<GMat>,
    /// the free (root) classes, and each root's block offset
    pub roots: Vec<usize>,
    root_pos: HashMap<usize, usize>,
    /// solution basis in root coordinates (length = #roots · dim)
    pub basis: Vec<Vec<Raw>>,
    /// retained sparse scalar relation rows (for verification / audits)
    rows: Vec<Vec<(usize, Raw)>>,
}

fn s_mat() -> GMat {
    GMat::from_integral([numfield::ZERO, Fe::new(-1, 0), numfield::ONE, numfield::ZERO])
}
fn r_mat() -> GMat {
    GMat::from_integral([numfield::ZERO, Fe::new(-1, 0), numfield::ONE, numfield::ONE])
}

impl ManinPresentation {
    pub fn fld(&self) -> &FieldRef {
        self.w.fld()
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn n_unknowns(&self) -> usize {
        self.roots.len() * self.dim()
    }

    pub fn class_of(&self, c: &Fe, d: &Fe) -> usize {
        let rc = self.rr.reduce(c);
        let rd = self.rr.reduce(d);
        self.index[&(rc.a, rc.b, rd.a, rd.b)]
    }

    /// Build the presentation and solve for the symbol space.
    pub fn build(
        base: BaseField,
        level: Ideal,
        k: usize,
        fld: &FieldRef,
        pi_gen: &Fe,
    ) -> Result<ManinPresentation> {
        let emb = LocalEmbed::new(&base, fld, pi_gen);
        let w = WeightCtx::new(k, emb);
        if !numfield::is_squarefree_ideal(&base, &level) {
            return Err(ShcError::LevelNotSquarefree(level.key()));
        }
        let rr = ResidueRing::new(&base, &level.gen);
        let primes: Vec<Ideal> =
            numfield::factor_ideal(&base, &level).into_iter().map(|(q, _)| q).collect();

        // ---- enumerate P¹(O_F/N) -----------------------------------------
        let elems = rr.elements();
        let runits: Vec<Fe> = elems.iter().filter(|e| rr.is_unit(e)).copied().collect();
        let mut classes: Vec<(Fe, Fe)> = Vec::new();
        let mut index = HashMap::new();
        for c in &elems {
            for d in &elems {
                let unimod = primes
                    .iter()
                    .all(|q| !(base.divides(&q.gen, c) && base.divides(&q.gen, d)));
                if !unimod {
                    continue;
                }
                let key = {
                    let rc = rr.reduce(c);
                    let rd = rr.reduce(d);
                    (rc.a, rc.b, rd.a, rd.b)
                };
                if index.contains_key(&key) {
                    continue;
                }
                let idx = classes.len();
                classes.push((*c, *d));
                for u in &runits {
                    let rc = rr.reduce(&base.mul(c, u));
                    let rd = rr.reduce(&base.mul(d, u));
                    index.insert((rc.a, rc.b, rd.a, rd.b), idx);
                }
            }
        }

        let sections: Vec<GMat> = classes
            .iter()
            .map(|(c, d)| {
                numfield::sl2_lift(&base, c, d, &level.gen).map(GMat::from_integral)
            })
            .collect::<Result<_>>()?;

        let mut pres = ManinPresentation {
            base,
            level,
            w,
            classes,
            index,
            rr,
            sections,
            froot: Vec::new(),
            fsign: Vec::new(),
            fmat: Vec::new(),
            roots: Vec::new(),
            root_pos: HashMap::new(),
            basis: Vec::new(),
            rows: Vec::new(),
        };
        pres.fold_and_solve()?;
        // cut spurious sampled-kernel directions: the symbol space must be
        // stable under the U_q at the bad primes (the operators most
        // sensitive to missing relations at higher weight)
        pres.hecke_saturate(&primes)?;
        Ok(pres)
    }

    /// Class and sign/twist reached from x by right multiplication:
    /// m(class(g_x·t)) = ε · m(x) | t for the folding edges.
    fn edge_targets(&self, x: usize) -> Vec<(usize, i64, GMat)> {
        let base = &self.base;
        let (c, d) = self.classes[x];
        let mut out = Vec::new();
        // S: m(cls(gS)) = −m(cls g)|S, bottom row of gS is (d, −c)
        out.push((self.class_of(&d, &base.neg(&c)), -1, s_mat()));
        // units: m(cls(g·diag(u, u⁻¹))) = m(cls g)|diag(u, u⁻¹)
        for u in base.units() {
            if u.is_one() || u == Fe::new(-1, 0) {
                continue;
            }
            let uinv = base
                .units()
                .into_iter()
                .find(|v| base.mul(&u, v).is_one())
                .expect("unit group is closed under inverses");
            let t = GMat::from_integral([u, numfield::ZERO, numfield::ZERO, uinv]);
            out.push((self.class_of(&base.mul(&c, &u), &base.mul(&d, &uinv)), 1, t));
        }
        out
    }

    fn fold_and_solve(&mut self) -> Result<()> {
        let nc = self.classes.len();
        let n = self.dim();
        self.froot = (0..nc).collect();
        self.fsign = vec![1; nc];
        self.fmat = vec![GMat::identity(); nc];

        // BFS folding over the two-term edges; cross edges become rows
        let mut assigned = vec![false; nc];
        let mut cross_rows: Vec<Vec<Term>> = Vec::new();
        for start in 0..nc {
            if assigned[start] {
                continue;
            }
            self.roots.push(start);
            assigned[start] = true;
            let mut queue = vec![start];
            while let Some(x) = queue.pop() {
                let (sx, hx) = (self.fsign[x], self.fmat[x]);
                for (y, eps, t) in self.edge_targets(x) {
                    // m(y) = eps · m(x) | t = eps·sx · m(root) | (hx·t)
                    let sy = eps * sx;
                    let hy = hx.mul(&self.base, &t);
                    if !assigned[y] {
                        assigned[y] = true;
                        self.froot[y] = start;
                        self.fsign[y] = sy;
                        self.fmat[y] = hy;
                        queue.push(y);
                    } else {
                        // consistency: existing (fsign[y], fmat[y]) vs (sy, hy)
                        cross_rows.push(vec![
                            (y, 1, GMat::identity()),
                            (x, -eps, t),
                        ]);
                    }
                }
            }
        }
        for (pos, r) in self.roots.iter().enumerate() {
            self.root_pos.insert(*r, pos);
        }

        // ---- relation rows -----------------------------------------------
        let mut rel_rows: Vec<Vec<Term>> = cross_rows;
        // three-term relation: Σ_j m(cls(g R^j)) | R^{−j} = 0
        let r = r_mat();
        let r2 = r.mul(&self.base, &r);
        for x in 0..nc {
            let g = self.sections[x];
            let x1 = self.class_from_matrix(&g.mul(&self.base, &r));
            let x2 = self.class_from_matrix(&g.mul(&self.base, &r2));
            rel_rows.push(vec![
                (x, 1, GMat::identity()),
                (x1, 1, r2), // R^{−1} = R² up to the (trivial) centre
                (x2, 1, r),  // R^{−2} = R up to the centre
            ]);
        }
        // route-consistency rows: direct lookup of {g0 → g∞} minus its
        // continued-fraction decomposition.  The full family over all
        // g ∈ SL₂(O_F) cuts out exactly the symbol space, so we sample
        // adaptively — sections first, then random SL₂(O_F) words — until
        // the kernel dimension stabilises over two consecutive batches.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5c1e);
        let mut sparse: Vec<Vec<(usize, Raw)>> =
            rel_rows.iter().flat_map(|r| self.scalarize(r)).collect();
        for g in &self.sections.clone() {
            let rows = self.scalarize(&self.consistency_row(g));
            sparse.extend(rows);
        }
        let nunk = self.roots.len() * n;
        let mut basis = self.kernel_of_rows(&sparse, nunk)?;
        let mut stable = 0;
        // higher weights need markedly more sampling before the kernel
        // dimension plateaus at the true symbol space
        let need_stable = if self.w.k == 0 { 2 } else { 4 };
        for _batch in 0..48 {
            if basis.is_empty() || stable >= need_stable {
                break;
            }
            let before = basis.len();
            for _ in 0..60 {
                let g = self.random_sl2(&mut rng);
                let rows = self.scalarize(&self.consistency_row(&g));
                sparse.extend(rows);
            }
            basis = self.kernel_of_rows(&sparse, nunk)?;
            stable = if basis.len() == before { stable + 1 } else { 0 };
        }
        if stable < need_stable && !basis.is_empty() {
            return Err(ShcError::InvariantViolation(
                "consistency relations did not saturate".into(),
            ));
        }
        self.basis = basis;
        self.rows = sparse;
        Ok(())
    }

    /// `lookup(g) − chain(∞ → g∞) + chain(∞ → g0) = 0` for g ∈ SL₂(O_F).
    fn consistency_row(&self, g: &GMat) -> Vec<Term> {
        let mut row: Vec<Term> = vec![(self.class_from_matrix(g), 1, g.adjugate(&self.base))];
        let c0 = Cusp::new(&self.base, g.m[1], g.m[3]);
        let cinf = Cusp::new(&self.base, g.m[0], g.m[2]);
        for (cls, sgn, h) in self.reduce_path(&c0, &cinf) {
            row.push((cls, -sgn, h));
        }
        row
    }

    /// A random word in elementary matrices — a generic element of SL₂(O_F).
    fn random_sl2(&self, rng: &mut ChaCha8Rng) -> GMat {
        let base = &self.base;
        let s = s_mat();
        let mut g = GMat::identity();
        for _ in 0..6 {
            let b = Fe::new(rng.gen_range(-4..5), rng.gen_range(-4..5));
            let up = GMat::from_integral([numfield::ONE, b, numfield::ZERO, numfield::ONE]);
            g = g.mul(base, &up);
            if rng.gen_bool(0.7) {
                g = g.mul(base, &s);
            }
        }
        g
    }

    fn class_from_matrix(&self, g: &GMat) -> usize {
        self.class_of(&g.m[2], &g.m[3])
    }

    pub fn random_gamma0(&self, rng: &mut ChaCha8Rng) -> GMat {
        let base = &self.base;
        let mut g = GMat::identity();
        for _ in 0..3 {
            let b = Fe::new(rng.gen_range(-2..3), rng.gen_range(-2..3));
            let a = Fe::new(rng.gen_range(-1..2), rng.gen_range(-1..2));
            let up = GMat::from_integral([numfield::ONE, b, numfield::ZERO, numfield::ONE]);
            let lo = GMat::from_integral([
                numfield::ONE,
                numfield::ZERO,
                base.mul(&self.level.gen, &a),
                numfield::ONE,
            ]);
            g = g.mul(base, &up).mul(base, &lo);
        }
        g
    }

    /// Expand a class-level relation Σ sign·m(class)|g = 0 into sparse
    /// scalar rows on the root unknowns.
    fn scalarize(&self, row: &[Term]) -> Vec<Vec<(usize, Raw)>> {
        let fld = self.fld();
        let n = self.dim();
        let mut dense: Vec<Vec<Raw>> = vec![Vec::new(); n];
        let mut touched: Vec<HashMap<usize, Raw>> = vec![HashMap::new(); n];
        let _ = &mut dense;
        for (x, s, g) in row {
            let root = self.froot[*x];
            let pos = self.root_pos[&root];
            let total = self.fmat[*x].mul(&self.base, g);
            let a = self.w.action_matrix(&total);
            let sgn = s * self.fsign[*x];
            for j in 0..n {
                for i in 0..n {
                    let coef = fld.mul_i64(&a[i * n + j], sgn);
                    if fld.is_zero(&coef) {
                        continue;
                    }
                    let unk = pos * n + i;
                    let e = touched[j].entry(unk).or_insert_with(|| fld.zero());
                    *e = fld.add(e, &coef);
                }
            }
        }
        touched
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, Raw)> =
                    m.into_iter().filter(|(_, r)| !fld.is_zero(r)).collect();
                v.sort_by_key(|(u, _)| *u);
                v
            })
            .filter(|v| !v.is_empty())
            .collect()
    }

    /// Kernel of a sparse scalar row system, via random sketching with exact
    /// post-verification (violated rows are fed back until stable).
    fn kernel_of_rows(
        &self,
        rows: &[Vec<(usize, Raw)>],
        nunk: usize,
    ) -> Result<Vec<Vec<Raw>>> {
        let fld = self.fld();
        let mut forced: Vec<usize> = Vec::new(); // row indices always included
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e1b);
        for _round in 0..6 {
            let basis = self.sketch_kernel(rows, &forced, nunk, &mut rng);
            // exact verification of every original row against the basis
            let mut violated = Vec::new();
            'rows: for (ri, row) in rows.iter().enumerate() {
                for b in &basis {
                    let mut acc = fld.zero();
                    for (u, c) in row {
                        acc = fld.add(&acc, &fld.mul(c, &b[*u]));
                    }
                    if !fld.is_zero(&acc) {
                        violated.push(ri);
                        continue 'rows;
                    }
                }
            }
            if violated.is_empty() {
                return Ok(basis);
            }
            forced.extend(violated);
            forced.sort_unstable();
            forced.dedup();
        }
        Err(ShcError::InvariantViolation(
            "relation system did not stabilise under sketched solving".into(),
        ))
    }

    fn sketch_kernel(
        &self,
        rows: &[Vec<(usize, Raw)>],
        forced: &[usize],
        nunk: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Vec<Raw>> {
        let fld = self.fld();
        let margin = 160;
        if rows.len() <= nunk + margin {
            // small system: use all rows directly
            let mat = Mat::from_fn(fld, rows.len(), nunk, |i, j| {
                rows[i]
                    .iter()
                    .find(|(u, _)| *u == j)
                    .map(|(_, c)| c.to_exact(fld))
                    .unwrap_or([0; MAX_F])
            });
            return self.kernel_to_raw(&linalg::kernel(&mat));
        }
        let nsk = nunk + margin;
        let mut dense: Vec<Vec<[u64; MAX_F]>> = Vec::new();
        let zero_row = || vec![[0u64; MAX_F]; nunk];
        let mut sk: Vec<Vec<[u64; MAX_F]>> = (0..nsk).map(|_| zero_row()).collect();
        for (ri, row) in rows.iter().enumerate() {
            if forced.contains(&ri) {
                let mut r = zero_row();
                for (u, c) in row {
                    r[*u] = c.to_exact(fld);
                }
                dense.push(r);
                continue;
            }
            // scatter into 24 random sketch rows with random unit weights
            for _ in 0..24 {
                let t = rng.gen_range(0..nsk);
                let wgt = rng.gen_range(1..fld.p);
                for (u, c) in row {
                    let scaled = fld.scal_vec(wgt, &c.to_exact(fld));
                    sk[t][*u] = fld.add_vec(&sk[t][*u], &scaled);
                }
            }
        }
        sk.extend(dense);
        let mat = Mat::from_fn(fld, sk.len(), nunk, |i, j| sk[i][j]);
        self.kernel_to_raw(&linalg::kernel(&mat))
    }

    fn kernel_to_raw(&self, ker: &[Vec<[u64; MAX_F]>]) -> Vec<Vec<Raw>> {
        let fld = self.fld();
        ker.iter().map(|v| v.iter().map(|c| fld.from_exact(*c)).collect()).collect()
    }

    /// Kernel dimension re-derived with a permuted unknown ordering.
    pub fn rank_crosscheck(&self) -> bool {
        let fld = self.fld();
        let nunk = self.n_unknowns();
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..nunk).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for i in (1..nunk).rev() {
                p.swap(i, rng.gen_range(0..=i));
            }
            p
        };
        let mat = Mat::from_fn(fld, self.rows.len(), nunk, |i, j| {
            self.rows[i]
                .iter()
                .find(|(u, _)| *u == perm[j])
                .map(|(_, c)| c.to_exact(fld))
                .unwrap_or([0; MAX_F])
        });
        linalg::kernel(&mat).len() == self.basis.len()
    }

    // ---- path machinery ---------------------------------------------------

    /// Unimodular pair value: φ{r→s} = m(class)|g⁻¹; returns the term.
    fn lookup_unimodular(&self, r: &Cusp, s: &Cusp) -> Term {
        let base = &self.base;
        let w = base.sub(&base.mul(&s.n, &r.d), &base.mul(&r.n, &s.d));
        assert!(base.is_unit(&w), "pair is not unimodular");
        let winv = base
            .units()
            .into_iter()
            .find(|v| base.mul(&w, v).is_one())
            .unwrap();
        // g(0) = r, g(∞) = s, det 1
        let g = GMat::from_integral([
            base.mul(&s.n, &winv),
            r.n,
            base.mul(&s.d, &winv),
            r.d,
        ]);
        (self.class_from_matrix(&g), 1, g.adjugate(base))
    }

    /// Continued-fraction chain for {∞ → c}: a list of unimodular-path terms.
    fn chain_to(&self, c: &Cusp) -> Vec<Term> {
        let base = &self.base;
        if c.d.is_zero() {
            return Vec::new();
        }
        // Euclid quotients of n/d
        let (mut r0, mut r1) = (c.n, c.d);
        let mut qs = Vec::new();
        while !r1.is_zero() {
            let (q, rem) = base.euclid_divide(&r0, &r1).unwrap();
            qs.push(q);
            r0 = r1;
            r1 = rem;
        }
        // convergents from p_{-1}/q_{-1} = 1/0, p_{-2}/q_{-2} = 0/1
        let (mut pm2, mut qm2) = (numfield::ZERO, numfield::ONE);
        let (mut pm1, mut qm1) = (numfield::ONE, numfield::ZERO);
        let mut out = Vec::new();
        for q in &qs {
            let p = base.add(&base.mul(q, &pm1), &pm2);
            let qq = base.add(&base.mul(q, &qm1), &qm2);
            let prev = Cusp::new(base, pm1, qm1);
            let next = Cusp::new(base, p, qq);
            if prev != next {
                out.push(self.lookup_unimodular(&prev, &next));
            }
            pm2 = pm1;
            qm2 = qm1;
            pm1 = p;
            qm1 = qq;
        }
        debug_assert_eq!(Cusp::new(base, pm1, qm1), *c, "convergents terminate at the cusp");
        out
    }

    /// φ{r→s} as a signed combination of unimodular lookups (routed through
    /// ∞, so additivity and antisymmetry hold identically).
    pub fn reduce_path(&self, r: &Cusp, s: &Cusp) -> Vec<Term> {
        let mut out = self.chain_to(s);
        for (x, sg, g) in self.chain_to(r) {
            out.push((x, -sg, g));
        }
        out
    }

    // ---- symbols ----------------------------------------------------------

    /// Expand root coordinates to the full Manin vector (per-class values).
    pub fn expand(&self, coords: &[Raw]) -> Vec<Vec<Raw>> {
        let n = self.dim();
        (0..self.classes.len())
            .map(|x| {
                let pos = self.root_pos[&self.froot[x]];
                let vroot = &coords[pos * n..(pos + 1) * n];
                let a = self.w.action_matrix(&self.fmat[x]);
                let mut v = self.w.dual_apply(vroot, &a);
                if self.fsign[x] < 0 {
                    for e in v.iter_mut() {
                        *e = self.fld().neg(e);
                    }
                }
                v
            })
            .collect()
    }

    /// Value vector of φ on the path {r → s}.
    pub fn eval_path(&self, values: &[Vec<Raw>], r: &Cusp, s: &Cusp) -> Vec<Raw> {
        let fld = self.fld();
        let n = self.dim();
        let mut acc = vec![fld.zero(); n];
        for (x, sgn, g) in self.reduce_path(r, s) {
            let a = self.w.action_matrix(&g);
            let v = self.w.dual_apply(&values[x], &a);
            for i in 0..n {
                let t = fld.mul_i64(&v[i], sgn);
                acc[i] = fld.add(&acc[i], &t);
            }
        }
        acc
    }

    /// Value vector of φ on a degree-zero divisor.
    pub fn eval_divisor(&self, values: &[Vec<Raw>], d: &DivisorDelta0) -> Vec<Raw> {
        let fld = self.fld();
        let n = self.dim();
        let inf = Cusp::infinity();
        let mut acc = vec![fld.zero(); n];
        for (coef, c) in &d.terms {
            let v = self.eval_path(values, &inf, c);
            for i in 0..n {
                acc[i] = fld.add(&acc[i], &fld.mul_i64(&v[i], *coef));
            }
        }
        acc
    }

    // ---- Hecke ------------------------------------------------------------

    /// Coset representatives for T_q (resp. U_q when q | N).
    pub fn hecke_cosets(&self, q: &Ideal) -> Vec<GMat> {
        let base = &self.base;
        let rq = ResidueRing::new(base, &q.gen);
        let mut out: Vec<GMat> = rq
            .elements()
            .iter()
            .map(|b| GMat::from_integral([numfield::ONE, *b, numfield::ZERO, q.gen]))
            .collect();
        if !q.divides(base, &self.level) {
            out.push(GMat::from_integral([q.gen, numfield::ZERO, numfield::ZERO, numfield::ONE]));
        }
        out
    }

    /// m-vector of T_q φ at the given classes.
    fn hecke_at(&self, q: &Ideal, values: &[Vec<Raw>], targets: &[usize]) -> Vec<Vec<Raw>> {
        let fld = self.fld();
        let base = &self.base;
        let n = self.dim();
        let cosets = self.hecke_cosets(q);
        targets
            .iter()
            .map(|&x| {
                let gx = self.sections[x];
                let mut acc = vec![fld.zero(); n];
                for ga in &cosets {
                    let gg = ga.mul(base, &gx);
                    let c0 = Cusp::new(base, gg.m[1], gg.m[3]);
                    let cinf = Cusp::new(base, gg.m[0], gg.m[2]);
                    for (y, sgn, h) in self.reduce_path(&c0, &cinf) {
                        // sign · m(y) | (h · γ_a · g_x)
                        let total = h.mul(base, &gg);
                        let a = self.w.action_matrix(&total);
                        let v = self.w.dual_apply(&values[y], &a);
                        for i in 0..n {
                            acc[i] = fld.add(&acc[i], &fld.mul_i64(&v[i], sgn));
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Full Hecke image of a symbol given by per-class values.
    pub fn hecke_operator(&self, q: &Ideal, values: &[Vec<Raw>]) -> Vec<Vec<Raw>> {
        let all: Vec<usize> = (0..self.classes.len()).collect();
        self.hecke_at(q, values, &all)
    }

    /// Root coordinates of the Hecke image (enough for the eigen solve).
    pub fn hecke_roots(&self, q: &Ideal, values: &[Vec<Raw>]) -> Vec<Raw> {
        self.hecke_at(q, values, &self.roots).into_iter().flatten().collect()
    }

    /// Matrix of T_q on the solution basis.  Errors if the image leaves the
    /// span (a completeness alarm for the relation system).
    pub fn hecke_matrix(&self, q: &Ideal) -> Result<Vec<Raw>> {
        let fld = self.fld();
        let s = self.basis.len();
        let nunk = self.n_unknowns();
        let bmat = Mat::from_fn(fld, nunk, s, |i, j| self.basis[j][i].to_exact(fld));
        let ech = linalg::echelonize(&bmat);
        let mut out = vec![fld.zero(); s * s];
        for (j, b) in self.basis.iter().enumerate() {
            let img = self.hecke_roots(q, &self.expand(b));
            // clear denominators before the exact solve
            let emin = img
                .iter()
                .filter(|r| !fld.is_zero(r))
                .map(|r| r.expo)
                .min()
                .unwrap_or(0)
                .min(0);
            let scaled: Vec<[u64; MAX_F]> =
                img.iter().map(|r| fld.shift(r, -emin).to_exact(fld)).collect();
            let sol = ech.solve(&scaled).ok_or_else(|| {
                ShcError::InvariantViolation(format!(
                    "T_{} image leaves the symbol space (incomplete relations?)",
                    q.key()
                ))
            })?;
            for (i, c) in sol.iter().enumerate() {
                out[i * s + j] = fld.shift(&fld.from_exact(*c), emin);
            }
        }
        Ok(out)
    }

    /// Refine the solution basis to the largest subspace stable under the
    /// given Hecke operators: V ← V ∩ T_q⁻¹(V) iterated to a fixed point.
    /// The true symbol space is T_q-stable and survives every step; spurious
    /// kernel directions left by finite relation sampling (which appear at
    /// higher weight) are cut away.
    pub fn hecke_saturate(&mut self, qs: &[Ideal]) -> Result<()> {
        let fld = self.fld().clone();
        let nunk = self.n_unknowns();
        loop {
            let mut shrunk = false;
            for q in qs {
                let s = self.basis.len();
                if s == 0 {
                    return Ok(());
                }
                let imgs: Vec<Vec<Raw>> = self
                    .basis
                    .iter()
                    .map(|b| self.hecke_roots(q, &self.expand(b)))
                    .collect();
                let emin = imgs
                    .iter()
                    .flatten()
                    .chain(self.basis.iter().flatten())
                    .filter(|r| !fld.is_zero(r))
                    .map(|r| r.expo)
                    .min()
                    .unwrap_or(0)
                    .min(0);
                // kernel of [Img | −B]: x-parts parametrise T_q⁻¹(V)
                let mat = Mat::from_fn(&fld, nunk, 2 * s, |i, j| {
                    let r = if j < s {
                        imgs[j][i]
                    } else {
                        fld.neg(&self.basis[j - s][i])
                    };
                    fld.shift(&r, -emin).to_exact(&fld)
                });
                let ker = linalg::kernel(&mat);
                if ker.len() == s {
                    continue; // already stable under T_q
                }
                let mut next: Vec<Vec<Raw>> = Vec::with_capacity(ker.len());
                for v in &ker {
                    let mut nb = vec![fld.zero(); nunk];
                    for (j, c) in v.iter().take(s).enumerate() {
                        let cr = fld.from_exact(*c);
                        for i in 0..nunk {
                            nb[i] = fld.add(&nb[i], &fld.mul(&cr, &self.basis[j][i]));
                        }
                    }
                    if nb.iter().any(|e| !fld.is_zero(e)) {
                        next.push(nb);
                    }
                }
                self.basis = next;
                shrunk = true;
            }
            if !shrunk {
                return Ok(());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Classical symbols and the eigensymbol
// ---------------------------------------------------------------------------

/// A modular symbol: per-class value vectors against the monomial basis.
#[derive(Clone)]
pub struct ClassicalSymbol {
    pub k: usize,
    pub level_key: String,
    pub values: Vec<Vec<Raw>>,
}

impl ClassicalSymbol {
    pub fn evaluate(&self, pres: &ManinPresentation, d: &DivisorDelta0, p: &PolyVKK) -> Raw {
        let fld = pres.fld();
        let v = pres.eval_divisor(&self.values, d);
        let mut acc = fld.zero();
        for (vi, pi) in v.iter().zip(p.c.iter()) {
            acc = fld.add(&acc, &fld.mul(vi, pi));
        }
        acc
    }
}

/// Extract φ_f: cut the solution space by (T_q − a_q) over `cut_primes`,
/// check the eigenspace is one-dimensional, verify U_p returns a_p from the
/// packet, and normalise to unit content.
pub fn eigensymbol(
    pres: &ManinPresentation,
    packet: &EigenPacket,
    cut_primes: &[Ideal],
) -> Result<ClassicalSymbol> {
    let fld = pres.fld();
    let s = pres.basis.len();
    if s == 0 {
        return Err(ShcError::EigenspaceEmpty);
    }
    // stack (T_q − a_q·I) over the cut primes
    let mut blocks: Vec<Vec<Raw>> = Vec::new();
    for q in cut_primes {
        let aq = packet
            .a_q(q)
            .ok_or_else(|| ShcError::SchemaError(format!("packet lacks a_{}", q.key())))?;
        let mut m = pres.hecke_matrix(q)?;
        let aqr = fld.from_i128(aq);
        for i in 0..s {
            m[i * s + i] = fld.sub(&m[i * s + i], &aqr);
        }
        blocks.push(m);
    }
    let nrows = s * blocks.len();
    let mut flat: Vec<Raw> = Vec::with_capacity(nrows * s);
    for b in &blocks {
        flat.extend_from_slice(b);
    }
    // clear denominators row-block-wise
    let emin = flat.iter().filter(|r| !fld.is_zero(r)).map(|r| r.expo).min().unwrap_or(0).min(0);
    let mat = Mat::from_fn(fld, nrows, s, |i, j| {
        fld.shift(&flat[i * s + j], -emin).to_exact(fld)
    });
    let ker = linalg::kernel(&mat);
    match ker.len() {
        0 => return Err(ShcError::EigenspaceEmpty),
        1 => {}
        d => return Err(ShcError::EigenspaceNotOneDimensional(d)),
    }
    let coef: Vec<Raw> = ker[0].iter().map(|c| fld.from_exact(*c)).collect();
    // assemble in root coordinates, then expand and normalise
    let nunk = pres.n_unknowns();
    let mut coords = vec![fld.zero(); nunk];
    for (j, c) in coef.iter().enumerate() {
        for i in 0..nunk {
            coords[i] = fld.add(&coords[i], &fld.mul(c, &pres.basis[j][i]));
        }
    }
    let mut values = pres.expand(&coords);
    let vmin = values
        .iter()
        .flatten()
        .filter_map(|r| fld.ord(r))
        .min()
        .ok_or(ShcError::EigenspaceEmpty)?;
    for v in values.iter_mut() {
        for e in v.iter_mut() {
            *e = fld.shift(e, -vmin);
        }
    }
    let phi = ClassicalSymbol { k: pres.w.k, level_key: pres.level.key(), values };
    // the defining p-new check: U_p φ = a_p φ
    let up = pres.hecke_operator(&packet.prime, &phi.values);
    let ap = fld.from_i128(packet.ap);
    for (x, v) in up.iter().enumerate() {
        for (i, e) in v.iter().enumerate() {
            let want = fld.mul(&ap, &phi.values[x][i]);
            if !fld.eq_at_min(e, &want) {
                return Err(ShcError::InvariantViolation(format!(
                    "U_p eigenvalue mismatch at class {x} component {i}"
                )));
            }
        }
    }
    Ok(phi)
}

// ---------------------------------------------------------------------------
// Cache (schema shc-symb/1)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SymbJson {
    schema: String,
    field_d: i64,
    level: String,
    weight: usize,
    p: u64,
    f: usize,
    prec: i64,
    label: String,
    values: Vec<Vec<PadicJson>>,
}

pub fn save_symbol(
    path: &std::path::Path,
    pres: &ManinPresentation,
    sym: &ClassicalSymbol,
    label: &str,
) -> Result<()> {
    let fld = pres.fld();
    let j = SymbJson {
        schema: "shc-symb/1".into(),
        field_d: -(pres.base.d as i64),
        level: pres.level.key(),
        weight: sym.k,
        p: fld.p,
        f: fld.f,
        prec: fld.work_prec,
        label: label.into(),
        values: sym
            .values
            .iter()
            .map(|v| v.iter().map(|r| PadicElem::new(fld, *r).to_json()).collect())
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&j)?)?;
    Ok(())
}

pub fn load_symbol(path: &std::path::Path, pres: &ManinPresentation) -> Result<ClassicalSymbol> {
    let fld = pres.fld();
    let data = std::fs::read_to_string(path)?;
    let j: SymbJson = serde_json::from_str(&data)
        .map_err(|e| ShcError::SchemaError(format!("shc-symb parse: {e}")))?;
    if j.schema != "shc-symb/1" {
        return Err(ShcError::SchemaError(format!("unsupported schema {}", j.schema)));
    }
    if j.field_d != -(pres.base.d as i64)
        || j.level != pres.level.key()
        || j.weight != pres.w.k
        || j.p != fld.p
        || j.f != fld.f
    {
        return Err(ShcError::MetadataMismatch("symbol cache metadata".into()));
    }
    let values: Vec<Vec<Raw>> = j
        .values
        .iter()
        .map(|v| {
            v.iter()
                .map(|pj| PadicElem::from_json(fld, pj).map(|e| e.raw))
                .collect::<Result<Vec<Raw>>>()
        })
        .collect::<Result<_>>()?;
    if values.len() != pres.classes.len() {
        return Err(ShcError::SchemaError("value table length mismatch".into()));
    }
    Ok(ClassicalSymbol { k: j.weight, level_key: j.level, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigendata::{curve_15a1, EigenPacket};
    use crate::padic::UnramifiedField;

    fn qi() -> BaseField {
        BaseField::new(1).unwrap()
    }

    fn pres_15_split(k: usize) -> ManinPresentation {
        let base = qi();
        let level = Ideal::new(&base, Fe::from_int(15));
        let fld = UnramifiedField::new(5, 1, 20);
        ManinPresentation::build(base, level, k, &fld, &Fe::new(2, 1)).unwrap()
    }

    fn packet_15a1(prime: Fe) -> EigenPacket {
        let base = qi();
        let p = Ideal::new(&base, prime);
        let m = Ideal::new(&base, Fe::from_int(15)).quotient(&base, &p).unwrap();
        // 15a1 is split multiplicative at (2+i): a_p = +1, Atkin–Lehner ω = −1
        EigenPacket::from_curve(base, &curve_15a1(), p, m, -1, 120, true, "15a1/Qi").unwrap()
    }

    #[test]
    fn generator_counts() {
        let base = qi();
        let fld = UnramifiedField::new(5, 1, 12);
        // #P¹(O/N) = N(N)·Π(1 + 1/N(q))
        for (gen, expect) in [(Fe::new(1, 1), 3usize), (Fe::from_int(3), 10), (Fe::from_int(15), 360)]
        {
            let level = Ideal::new(&base, gen);
            let pres =
                ManinPresentation::build(base, level, 0, &fld, &Fe::new(2, 1)).unwrap();
            assert_eq!(pres.classes.len(), expect, "level {}", level.key());
        }
        // trivial level: a single generator
        let pres = ManinPresentation::build(
            base,
            Ideal::new(&base, numfield::ONE),
            0,
            &fld,
            &Fe::new(2, 1),
        )
        .unwrap();
        assert_eq!(pres.classes.len(), 1);
    }

    #[test]
    fn weight_action_axioms() {
        let base = qi();
        let fld = UnramifiedField::new(5, 1, 14);
        let emb = LocalEmbed::new(&base, &fld, &Fe::new(2, 1));
        let w = WeightCtx::new(2, emb);
        let g1 = GMat::from_integral([Fe::new(1, 1), Fe::new(0, 1), Fe::from_int(2), Fe::new(1, -1)]);
        let g2 = GMat::from_integral([Fe::from_int(1), Fe::from_int(3), Fe::new(0, 1), Fe::new(2, 1)]);
        let p = PolyVKK::monomial(&fld, 2, 1, 2);
        // associativity: (g1 g2)·P = g1·(g2·P)
        let lhs = w.act_poly(&g1.mul(&base, &g2), &p);
        let rhs = w.act_poly(&g1, &w.act_poly(&g2, &p));
        for (a, b) in lhs.c.iter().zip(rhs.c.iter()) {
            assert!(fld.eq_at_min(a, b));
        }
        // centre acts trivially: scale g1 by 3
        let g1s = GMat::from_integral([
            base.mul_int(&g1.m[0], 3),
            base.mul_int(&g1.m[1], 3),
            base.mul_int(&g1.m[2], 3),
            base.mul_int(&g1.m[3], 3),
        ]);
        let l2 = w.act_poly(&g1s, &p);
        let r2 = w.act_poly(&g1, &p);
        for (a, b) in l2.c.iter().zip(r2.c.iter()) {
            assert!(fld.eq_at_min(a, b));
        }
        // identity acts as identity
        let id = w.act_poly(&GMat::identity(), &p);
        for (a, b) in id.c.iter().zip(p.c.iter()) {
            assert!(fld.eq_at_min(a, b));
        }
    }

    #[test]
    fn presentation_solves_and_crosschecks() {
        let pres = pres_15_split(0);
        assert!(!pres.basis.is_empty(), "level (15) carries modular symbols");
        assert!(pres.rank_crosscheck(), "kernel dimension stable under permuted ordering");
    }

    #[test]
    fn reduce_path_properties() {
        let base = qi();
        let pres = pres_15_split(0);
        let fld = pres.fld();
        // a random solution symbol
        let values = pres.expand(&pres.basis[0]);
        // reduce_path(0, ∞): single unimodular piece
        assert_eq!(pres.reduce_path(&Cusp::zero(), &Cusp::infinity()).len(), 1);
        // antisymmetry and additivity on random cusps
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rand_cusp = |rng: &mut ChaCha8Rng| -> Cusp {
            loop {
                let n = Fe::new(rng.gen_range(-9..10), rng.gen_range(-9..10));
                let d = Fe::new(rng.gen_range(-9..10), rng.gen_range(-9..10));
                if !(n.is_zero() && d.is_zero()) {
                    return Cusp::new(&base, n, d);
                }
            }
        };
        for _ in 0..30 {
            let r = rand_cusp(&mut rng);
            let s = rand_cusp(&mut rng);
            let t = rand_cusp(&mut rng);
            let vrs = pres.eval_path(&values, &r, &s);
            let vsr = pres.eval_path(&values, &s, &r);
            let vst = pres.eval_path(&values, &s, &t);
            let vrt = pres.eval_path(&values, &r, &t);
            for i in 0..pres.dim() {
                assert!(fld.eq_at_min(&vrs[i], &fld.neg(&vsr[i])), "antisymmetry");
                assert!(
                    fld.eq_at_min(&fld.add(&vrs[i], &vst[i]), &vrt[i]),
                    "additivity"
                );
            }
            // γ-invariance of evaluation (k = 0: plain equality)
            let gamma = {
                let mut rng2 = ChaCha8Rng::seed_from_u64(rng.gen());
                pres.random_gamma0(&mut rng2)
            };
            let gr = r.apply(&base, &gamma);
            let gs = s.apply(&base, &gamma);
            let vg = pres.eval_path(&values, &gr, &gs);
            for i in 0..pres.dim() {
                assert!(fld.eq_at_min(&vg[i], &vrs[i]), "Γ₀(N)-invariance");
            }
        }
    }

    #[test]
    fn hecke_operators_commute_and_preserve_space() {
        let base = qi();
        let pres = pres_15_split(0);
        let fld = pres.fld();
        let values = pres.expand(&pres.basis[pres.basis.len() - 1]);
        let q1 = Ideal::new(&base, Fe::new(1, 1)); // norm 2
        let q2 = Ideal::new(&base, Fe::from_int(7)); // inert, norm 49
        let a = pres.hecke_operator(&q2, &pres.hecke_operator(&q1, &values));
        let b = pres.hecke_operator(&q1, &pres.hecke_operator(&q2, &values));
        for (x, y) in a.iter().zip(b.iter()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert!(fld.eq_at_min(u, v), "T_q T_q' = T_q' T_q");
            }
        }
        // the image satisfies all retained relations (space preserved)
        let img_roots = pres.hecke_roots(&q1, &values);
        let s = pres.basis.len();
        let nunk = pres.n_unknowns();
        let bmat = Mat::from_fn(fld, nunk, s, |i, j| pres.basis[j][i].to_exact(fld));
        let ech = linalg::echelonize(&bmat);
        let scaled: Vec<[u64; MAX_F]> = img_roots.iter().map(|r| r.to_exact(fld)).collect();
        assert!(ech.solve(&scaled).is_some(), "Hecke image stays in the solution space");
    }

    #[test]
    fn eigensymbol_matches_point_counting() {
        let base = qi();
        let pres = pres_15_split(0);
        let fld = pres.fld();
        let packet = packet_15a1(Fe::new(2, 1));
        // cut with small primes, hold out an independent prime as the oracle
        let cuts = vec![
            Ideal::new(&base, Fe::new(1, 1)),
            Ideal::new(&base, Fe::from_int(7)),
            Ideal::new(&base, Fe::new(3, 2)),
        ];
        let phi = eigensymbol(&pres, &packet, &cuts).unwrap();
        // held-out oracle: T_(2+3i) φ = a_(2+3i) φ with a from point counting
        let held = Ideal::new(&base, Fe::new(2, 3));
        let a_held = packet.a_q(&held).unwrap();
        let img = pres.hecke_operator(&held, &phi.values);
        let ar = fld.from_i128(a_held);
        for (x, v) in img.iter().enumerate() {
            for (i, e) in v.iter().enumerate() {
                assert!(
                    fld.eq_at_min(e, &fld.mul(&ar, &phi.values[x][i])),
                    "held-out Hecke eigenvalue at class {x}"
                );
            }
        }
        // normalisation: p-integral with a unit entry
        let vmin = phi.values.iter().flatten().filter_map(|r| fld.ord(r)).min().unwrap();
        assert_eq!(vmin, 0);
        // level matrix check on the packet eigenvalue
        assert!(packet.level_matrix_check());
    }

    #[test]
    fn eigensymbol_error_paths() {
        let base = qi();
        let pres = pres_15_split(0);
        let packet = packet_15a1(Fe::new(2, 1));
        // conflicting constraints: corrupt one eigenvalue → empty eigenspace
        let mut bad = packet.clone();
        bad.eigenvalues.insert(Ideal::new(&base, Fe::from_int(7)).key(), 5);
        let cuts = vec![Ideal::new(&base, Fe::new(1, 1)), Ideal::new(&base, Fe::from_int(7))];
        assert!(matches!(eigensymbol(&pres, &bad, &cuts), Err(ShcError::EigenspaceEmpty)));
        // too few constraints → eigenspace too large
        let weak: Vec<Ideal> = vec![];
        let r = eigensymbol(&pres, &packet, &weak);
        assert!(matches!(
            r,
            Err(ShcError::EigenspaceNotOneDimensional(_)) | Err(ShcError::EigenspaceEmpty)
        ));
    }

    #[test]
    fn symbol_cache_roundtrip() {
        let base = qi();
        let pres = pres_15_split(0);
        let packet = packet_15a1(Fe::new(2, 1));
        let cuts = vec![
            Ideal::new(&base, Fe::new(1, 1)),
            Ideal::new(&base, Fe::from_int(7)),
            Ideal::new(&base, Fe::new(3, 2)),
        ];
        let phi = eigensymbol(&pres, &packet, &cuts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.json");
        save_symbol(&path, &pres, &phi, "15a1/Qi").unwrap();
        let re = load_symbol(&path, &pres).unwrap();
        let fld = pres.fld();
        for (a, b) in phi.values.iter().zip(re.values.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(fld.eq_at_min(x, y));
            }
        }
        // metadata mismatch: different level presentation
        let other = ManinPresentation::build(
            base,
            Ideal::new(&base, Fe::from_int(3)),
            0,
            &UnramifiedField::new(5, 1, 20),
            &Fe::new(2, 1),
        )
        .unwrap();
        assert!(matches!(load_symbol(&path, &other), Err(ShcError::MetadataMismatch(_))));
    }

    #[test]
    fn evaluate_divisor_api() {
        let base = qi();
        let pres = pres_15_split(0);
        let fld = pres.fld();
        let values = pres.expand(&pres.basis[0]);
        let sym = ClassicalSymbol { k: 0, level_key: pres.level.key(), values };
        // D = 0 → 0
        let zero_d = DivisorDelta0::new(vec![]);
        let p = PolyVKK::monomial(&fld, 0, 0, 0);
        assert!(fld.is_zero(&sym.evaluate(&pres, &zero_d, &p)));
        // linearity in D
        let c1 = Cusp::new(&base, Fe::from_int(1), Fe::from_int(2));
        let c2 = Cusp::new(&base, Fe::new(0, 1), Fe::from_int(3));
        let d1 = DivisorDelta0::path(&Cusp::infinity(), &c1);
        let d2 = DivisorDelta0::path(&c1, &c2);
        let d12 = DivisorDelta0::path(&Cusp::infinity(), &c2);
        let v = fld.add(&sym.evaluate(&pres, &d1, &p), &sym.evaluate(&pres, &d2, &p));
        assert!(fld.eq_at_min(&v, &sym.evaluate(&pres, &d12, &p)));
    }
}
