//! The Bruhat–Tits tree T_p for PGL₂(F_℘), F_℘ the completion of F at the
//! working prime: vertex/edge normal forms, distance, geodesics, the edge ↔
//! open-ball dictionary on P¹(F_℘), the reduction map from the unramified
//! half-space, and the action of matrices over O_F[1/p].
//!
//! Vertices are homothety classes of rank-2 lattices.  Since F_℘ is
//! unramified, p itself is a uniformiser.  Every vertex has a unique
//! Busemann-style normal form relative to the end ∞,
//!
//! ```text
//!     v = class of the lattice spanned by (p^n, 0) and (u, 1),   u mod p^n,
//! ```
//!
//! with n ∈ Z and u ∈ F_℘ defined modulo p^n (u need not be integral when
//! n < 0).  The base vertex v* is (0, 0); its neighbour [O ⊕ pO] is (−1, 0).
//!
//! The base edge e* runs v* → (−1, 0); its shadow U(e*) is the complement of
//! O_℘ in P¹(F_℘), and the stored membership matrix γ_{e*} = (0, 1; p, 0)
//! makes "t ∈ U(e) ⟺ γ_e·t ∈ O_℘" literally true.  For a general oriented
//! edge e = g·e* the membership matrix is γ_{e*}·g⁻¹, while g itself is the
//! transport matrix used by the spreading layer.

use crate::errors::{Result, ShcError};
use crate::numfield::{self, BaseField, Fe, Ideal, ResidueRing};
use crate::padic::{Embedding, FieldRef, Raw, MAX_F};

// ---------------------------------------------------------------------------
// Local 2×2 matrix helpers
// ---------------------------------------------------------------------------

pub type Mat2 = [Raw; 4]; // row-major [a, b, c, d]

pub fn mat2_mul(fld: &FieldRef, x: &Mat2, y: &Mat2) -> Mat2 {
    [
        fld.add(&fld.mul(&x[0], &y[0]), &fld.mul(&x[1], &y[2])),
        fld.add(&fld.mul(&x[0], &y[1]), &fld.mul(&x[1], &y[3])),
        fld.add(&fld.mul(&x[2], &y[0]), &fld.mul(&x[3], &y[2])),
        fld.add(&fld.mul(&x[2], &y[1]), &fld.mul(&x[3], &y[3])),
    ]
}

pub fn mat2_det(fld: &FieldRef, x: &Mat2) -> Raw {
    fld.sub(&fld.mul(&x[0], &x[3]), &fld.mul(&x[1], &x[2]))
}

/// Adjugate: x·adj(x) = det(x)·I.
pub fn mat2_adj(fld: &FieldRef, x: &Mat2) -> Mat2 {
    [x[3], fld.neg(&x[1]), fld.neg(&x[2]), x[0]]
}

pub fn mat2_id(fld: &FieldRef) -> Mat2 {
    [fld.one(), fld.zero(), fld.zero(), fld.one()]
}

pub fn mat2_inv(fld: &FieldRef, x: &Mat2) -> Result<Mat2> {
    let det = mat2_det(fld, x);
    let di = fld.inv(&det).map_err(|_| ShcError::SingularMatrix)?;
    let adj = mat2_adj(fld, x);
    Ok([
        fld.mul(&adj[0], &di),
        fld.mul(&adj[1], &di),
        fld.mul(&adj[2], &di),
        fld.mul(&adj[3], &di),
    ])
}

// ---------------------------------------------------------------------------
// Boundary points P¹(F_℘)
// ---------------------------------------------------------------------------

/// A point (a : b) of P¹(F_℘), kept in the normal form (t : 1) for integral
/// t = a/b and (1 : s) with v(s) > 0 otherwise (the first convention is
/// preferred when both apply, i.e. for units).
#[derive(Clone, Copy, Debug)]
pub struct Pt {
    pub a: Raw,
    pub b: Raw,
}

impl Pt {
    pub fn infinity(fld: &FieldRef) -> Pt {
        Pt { a: fld.one(), b: fld.zero() }
    }
    pub fn from_t(fld: &FieldRef, t: &Raw) -> Pt {
        normalize_pt(fld, &Pt { a: *t, b: fld.one() })
    }
}

pub fn normalize_pt(fld: &FieldRef, p: &Pt) -> Pt {
    let va = fld.ord(&p.a).unwrap_or(i64::MAX);
    let vb = fld.ord(&p.b).unwrap_or(i64::MAX);
    assert!(va != i64::MAX || vb != i64::MAX, "point (0 : 0) is not projective");
    if va >= vb {
        // integral t = a/b → (t : 1)
        let t = fld.div(&p.a, &p.b).unwrap();
        Pt { a: t, b: fld.one() }
    } else {
        let s = fld.div(&p.b, &p.a).unwrap();
        Pt { a: fld.one(), b: s }
    }
}

pub fn mobius(fld: &FieldRef, m: &Mat2, p: &Pt) -> Pt {
    normalize_pt(
        fld,
        &Pt {
            a: fld.add(&fld.mul(&m[0], &p.a), &fld.mul(&m[1], &p.b)),
            b: fld.add(&fld.mul(&m[2], &p.a), &fld.mul(&m[3], &p.b)),
        },
    )
}

pub fn pt_eq(fld: &FieldRef, x: &Pt, y: &Pt) -> bool {
    // cross-ratio-free equality: a1 b2 = a2 b1 at precision
    fld.eq_at_min(&fld.mul(&x.a, &y.b), &fld.mul(&y.a, &x.b))
}

/// Is t in O_℘ (i.e. t ≠ ∞ and integral)?
pub fn pt_is_integral(fld: &FieldRef, p: &Pt) -> bool {
    let va = fld.ord(&p.a).unwrap_or(i64::MAX);
    let vb = fld.ord(&p.b).unwrap_or(i64::MAX);
    vb <= va
}

// ---------------------------------------------------------------------------
// Vertices
// ---------------------------------------------------------------------------

/// Tree vertex in the (n, u)-normal form described in the module docs.
#[derive(Clone, Copy, Debug)]
pub struct Vertex {
    pub n: i64,
    /// canonical representative of u mod p^n (normalised Raw, prec = n)
    pub u: Raw,
}

impl PartialEq for Vertex {
    fn eq(&self, other: &Self) -> bool {
        if self.n != other.n {
            return false;
        }
        let (a, b) = (&self.u, &other.u);
        let za = a.c.iter().all(|&x| x == 0);
        let zb = b.c.iter().all(|&x| x == 0);
        if za || zb {
            return za == zb;
        }
        a.expo == b.expo && a.c == b.c
    }
}
impl Eq for Vertex {}
impl std::hash::Hash for Vertex {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.n.hash(state);
        let z = self.u.c.iter().all(|&x| x == 0);
        z.hash(state);
        if !z {
            self.u.expo.hash(state);
            self.u.c.hash(state);
        }
    }
}

/// An oriented edge (adjacent vertices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: Vertex,
    pub dst: Vertex,
}

impl Edge {
    pub fn reverse(&self) -> Edge {
        Edge { src: self.dst, dst: self.src }
    }
}

/// The tree for PGL₂ over the given unramified local field model.
pub struct Tree {
    pub fld: FieldRef,
}

impl Tree {
    pub fn new(fld: &FieldRef) -> Tree {
        Tree { fld: fld.clone() }
    }

    /// Residue field size N(℘) = p^f.
    pub fn q(&self) -> u64 {
        self.fld.p.pow(self.fld.f as u32)
    }

    /// Exact residue representatives of k_℘ (digit vectors below p).
    pub fn residue_reps(&self) -> Vec<Raw> {
        let fld = &self.fld;
        let q = self.q();
        let mut out = Vec::with_capacity(q as usize);
        for m in 0..q {
            let mut c = [0u64; MAX_F];
            let mut t = m;
            for i in 0..fld.f {
                c[i] = t % fld.p;
                t /= fld.p;
            }
            out.push(fld.normalize(Raw { c, expo: 0, prec: fld.work_prec }));
        }
        out
    }

    pub fn base_vertex(&self) -> Vertex {
        self.make_vertex(0, &self.fld.zero())
    }

    /// The neighbour [O ⊕ pO] of v*, target of the base edge e*.
    pub fn base_neighbour(&self) -> Vertex {
        self.make_vertex(-1, &self.fld.zero())
    }

    pub fn base_edge(&self) -> Edge {
        Edge { src: self.base_vertex(), dst: self.base_neighbour() }
    }

    pub fn make_vertex(&self, n: i64, u: &Raw) -> Vertex {
        let u = self.fld.cap_prec(u, n);
        Vertex { n, u }
    }

    /// Full-precision lift of v's u-coordinate: the stored digits are exact
    /// and any lift of u mod p^n represents the same lattice class.
    pub fn lift_u(&self, v: &Vertex) -> Raw {
        let fld = &self.fld;
        if fld.is_zero(&v.u) {
            return fld.zero();
        }
        fld.normalize(Raw { c: v.u.c, expo: v.u.expo, prec: v.u.expo + fld.work_prec })
    }

    /// Matrix with columns spanning the normal-form lattice of v.
    pub fn vertex_matrix(&self, v: &Vertex) -> Mat2 {
        let fld = &self.fld;
        [fld.p_power(v.n), self.lift_u(v), fld.zero(), fld.one()]
    }

    /// Canonical vertex of the lattice spanned by the columns of m.
    pub fn reduce_to_vertex(&self, m: &Mat2) -> Result<Vertex> {
        let fld = &self.fld;
        let det = mat2_det(fld, m);
        if fld.is_zero(&det) {
            return Err(ShcError::SingularMatrix);
        }
        let (mut c1, mut c2) = ([m[0], m[2]], [m[1], m[3]]);
        let v1 = fld.ord(&c1[1]).unwrap_or(i64::MAX);
        let v2 = fld.ord(&c2[1]).unwrap_or(i64::MAX);
        if v1 < v2 {
            std::mem::swap(&mut c1, &mut c2);
        }
        if fld.is_zero(&c2[1]) {
            return Err(ShcError::SingularMatrix);
        }
        // clear the bottom entry of column 1 (unimodular: ratio is integral)
        let ratio = fld.div(&c1[1], &c2[1]).unwrap();
        c1[0] = fld.sub(&c1[0], &fld.mul(&ratio, &c2[0]));
        // homothety by 1/c2[1]: bottom-right becomes 1
        let x = fld.div(&c1[0], &c2[1]).map_err(|_| ShcError::SingularMatrix)?;
        let u = fld.div(&c2[0], &c2[1]).unwrap();
        let n = fld.ord(&x).ok_or(ShcError::SingularMatrix)?;
        Ok(self.make_vertex(n, &u))
    }

    pub fn parity(&self, v: &Vertex) -> i64 {
        v.n.rem_euclid(2)
    }

    pub fn distance(&self, v: &Vertex, w: &Vertex) -> i64 {
        let fld = &self.fld;
        let mv = self.vertex_matrix(v);
        let mw = self.vertex_matrix(w);
        let rel = mat2_mul(fld, &mat2_adj(fld, &mv), &mw);
        let d = fld.ord(&mat2_det(fld, &rel)).expect("vertex matrices are invertible");
        let v0 = rel
            .iter()
            .filter_map(|e| fld.ord(e))
            .min()
            .expect("nonzero matrix");
        d - 2 * v0
    }

    /// The N(℘)+1 neighbours of v, as edges from v: one towards ∞ (n − 1)
    /// and one per residue digit (n + 1).
    pub fn edges_from(&self, v: &Vertex) -> Vec<Edge> {
        let fld = &self.fld;
        let mut out = Vec::with_capacity(self.q() as usize + 1);
        let u = self.lift_u(v);
        out.push(Edge { src: *v, dst: self.make_vertex(v.n - 1, &u) });
        for c in self.residue_reps() {
            let shift = fld.mul(&c, &fld.p_power(v.n));
            let u2 = fld.add(&u, &shift);
            out.push(Edge { src: *v, dst: self.make_vertex(v.n + 1, &u2) });
        }
        out
    }

    /// First vertex after v on the ray from v towards the boundary point t.
    pub fn first_step(&self, v: &Vertex, t: &Pt) -> Vertex {
        let fld = &self.fld;
        // pull t back to the chart at v*: s = M_v⁻¹ · t (adjugate is enough)
        let mv = self.vertex_matrix(v);
        let s = mobius(fld, &mat2_adj(fld, &mv), t);
        if pt_is_integral(fld, &s) {
            let tval = fld.div(&s.a, &s.b).unwrap();
            // first digit of t determines the child
            let digit = self.residue_of(&tval);
            let shift = fld.mul(&digit, &fld.p_power(v.n));
            self.make_vertex(v.n + 1, &fld.add(&self.lift_u(v), &shift))
        } else {
            self.make_vertex(v.n - 1, &self.lift_u(v))
        }
    }

    /// The canonical residue representative of an integral element.
    fn residue_of(&self, x: &Raw) -> Raw {
        let fld = &self.fld;
        if fld.is_zero(x) || x.expo > 0 {
            return fld.zero();
        }
        let mut c = [0u64; MAX_F];
        for i in 0..fld.f {
            c[i] = x.c[i] % fld.p;
        }
        fld.normalize(Raw { c, expo: 0, prec: fld.work_prec })
    }

    /// The unique non-backtracking path from v to w (empty when v = w).
    pub fn geodesic(&self, v: &Vertex, w: &Vertex) -> Vec<Edge> {
        let mut path = Vec::new();
        let mut cur = *v;
        let mut dist = self.distance(&cur, w);
        while dist > 0 {
            let next = self
                .edges_from(&cur)
                .into_iter()
                .find(|e| self.distance(&e.dst, w) == dist - 1)
                .expect("some neighbour is closer in a tree");
            path.push(next);
            cur = next.dst;
            dist -= 1;
        }
        path
    }

    // ---- edge ↔ ball dictionary ------------------------------------------

    /// Shadow membership: t ∈ U(e) iff the ray from source(e) towards t
    /// crosses e forward.
    pub fn in_shadow(&self, e: &Edge, t: &Pt) -> bool {
        self.first_step(&e.src, t) == e.dst
    }

    /// Transport matrix g with e = g·e* (as oriented edges).
    pub fn transport_to(&self, e: &Edge) -> Mat2 {
        let fld = &self.fld;
        let mv = self.vertex_matrix(&e.src);
        // the target pulled to the chart at v* must be a neighbour of v*
        let rel_n = e.dst.n - e.src.n;
        if rel_n == -1 {
            // e is M_src · e*
            mv
        } else {
            debug_assert_eq!(rel_n, 1);
            // child with digit c: e = M_src · h · e*, h = [[c, 1], [1, 0]]
            let diff = fld.sub(&self.lift_u(&e.dst), &self.lift_u(&e.src));
            let c = self.residue_of(&fld.shift(&diff, -e.src.n));
            let h: Mat2 = [c, fld.one(), fld.one(), fld.zero()];
            mat2_mul(fld, &mv, &h)
        }
    }

    /// The membership matrix γ_e: t ∈ U(e) ⟺ γ_e·t ∈ O_℘.
    pub fn gamma_e(&self, e: &Edge) -> Mat2 {
        let fld = &self.fld;
        let g = self.transport_to(e);
        // γ_{e*} = (0, 1; p, 0); γ_e = γ_{e*}·g⁻¹ up to scale: use adjugate
        let base: Mat2 = [fld.zero(), fld.one(), fld.p_power(1), fld.zero()];
        mat2_mul(fld, &base, &mat2_adj(fld, &g))
    }

    /// Membership via the stored matrix (the spec's literal test).
    pub fn in_ball_via_gamma(&self, e: &Edge, t: &Pt) -> bool {
        let g = self.gamma_e(e);
        let img = mobius(&self.fld, &g, t);
        pt_is_integral(&self.fld, &img)
    }

    // ---- group action -----------------------------------------------------

    pub fn act_vertex(&self, g: &Mat2, v: &Vertex) -> Result<Vertex> {
        let m = mat2_mul(&self.fld, g, &self.vertex_matrix(v));
        self.reduce_to_vertex(&m)
    }

    pub fn act_edge(&self, g: &Mat2, e: &Edge) -> Result<Edge> {
        let s = self.act_vertex(g, &e.src)?;
        let d = self.act_vertex(g, &e.dst)?;
        debug_assert_eq!(self.distance(&s, &d), 1);
        Ok(Edge { src: s, dst: d })
    }

    // ---- reduction map ----------------------------------------------------

    /// red_℘(τ) for τ in an unramified extension E ⊇ F_℘ but not in F_℘:
    /// match digits of τ against k_℘ until the first digit outside it;
    /// the matched prefix is the u-coordinate and the depth the n-coordinate.
    ///
    /// `emb` embeds the tree's field model into τ's field model.
    pub fn reduction_map(&self, emb: &Embedding, tau: &Raw) -> Result<Vertex> {
        let big = &emb.dst;
        assert!(std::sync::Arc::ptr_eq(&emb.src, &self.fld), "embedding source must be the tree field");
        if big.is_zero(tau) {
            return Err(ShcError::PointOnBoundary);
        }
        if tau.expo < 0 {
            // non-integral: reduce 1/τ and push through the inversion
            let inv = big.inv(tau).unwrap();
            let v = self.reduction_map(emb, &inv)?;
            let fld = &self.fld;
            let w: Mat2 = [fld.zero(), fld.one(), fld.one(), fld.zero()];
            return self.act_vertex(&w, &v);
        }
        let fld = &self.fld;
        let mut cur = *tau;
        let mut u = fld.zero();
        let mut h: i64 = 0;
        loop {
            if big.is_zero(&cur) || cur.expo > 0 {
                // digit 0 ∈ k_℘: continue matching
                if h >= cur.prec {
                    return Err(ShcError::PointOnBoundary);
                }
                cur = big.shift(&cur, -1);
                h += 1;
                if h > big.work_prec {
                    return Err(ShcError::PointOnBoundary);
                }
                continue;
            }
            // residue digit of cur in k_E; in k_℘ iff fixed by x ↦ x^{p^f_℘}
            let digit = self.sub_residue_digit(emb, &cur);
            match digit {
                Some(d) => {
                    // matched: u += ι(d)·p^h, cur ← (cur − emb(d))/p
                    let de = emb.apply(&d);
                    cur = big.shift(&big.sub(&cur, &de), -1);
                    u = fld.add(&u, &fld.mul(&d, &fld.p_power(h)));
                    h += 1;
                    if h > big.work_prec || h >= tau.prec {
                        return Err(ShcError::PointOnBoundary);
                    }
                }
                None => {
                    // digit outside k_℘: the vertex is (h, u)
                    return Ok(self.make_vertex(h, &u));
                }
            }
        }
    }

    /// If the residue of x (a unit of E) lies in k_℘, return its canonical
    /// representative in the tree field; None otherwise.
    fn sub_residue_digit(&self, emb: &Embedding, x: &Raw) -> Option<Raw> {
        let big = &emb.dst;
        debug_assert_eq!(x.expo, 0);
        // residue of x in k_E
        let mut r = [0u64; MAX_F];
        for i in 0..big.f {
            r[i] = x.c[i] % big.p;
        }
        let rraw = big.normalize(Raw { c: r, expo: 0, prec: 1 });
        // fixed by Frobenius^{f_℘} ⟺ in k_℘
        let mut fr = rraw;
        for _ in 0..self.fld.f {
            fr = big.frobenius(&fr);
        }
        if !big.eq_at_min(&big.cap_prec(&fr, 1), &big.cap_prec(&rraw, 1)) {
            return None;
        }
        // pull back: find the k_℘ representative mapping onto this residue
        for cand in self.residue_reps() {
            let img = emb.apply(&cand);
            if big.eq_at_min(&big.cap_prec(&img, 1), &big.cap_prec(&rraw, 1)) {
                return Some(cand);
            }
        }
        unreachable!("Frobenius-fixed residue must come from k_℘");
    }
}

// ---------------------------------------------------------------------------
// Exact matrices over O_F[1/p] and the Γ̃ / Γ membership predicates
// ---------------------------------------------------------------------------

/// A matrix p_℘^{−t}·(m) with m over O_F; the group elements of Γ̃ and Γ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GMat {
    pub m: [Fe; 4],
    pub t: i64,
}

impl GMat {
    pub fn from_integral(m: [Fe; 4]) -> GMat {
        GMat { m, t: 0 }
    }

    pub fn identity() -> GMat {
        GMat { m: [numfield::ONE, numfield::ZERO, numfield::ZERO, numfield::ONE], t: 0 }
    }

    pub fn mul(&self, fld: &BaseField, o: &GMat) -> GMat {
        let a = &self.m;
        let b = &o.m;
        GMat {
            m: [
                fld.add(&fld.mul(&a[0], &b[0]), &fld.mul(&a[1], &b[2])),
                fld.add(&fld.mul(&a[0], &b[1]), &fld.mul(&a[1], &b[3])),
                fld.add(&fld.mul(&a[2], &b[0]), &fld.mul(&a[3], &b[2])),
                fld.add(&fld.mul(&a[2], &b[1]), &fld.mul(&a[3], &b[3])),
            ],
            t: self.t + o.t,
        }
    }

    /// Inverse for determinant-one elements (the adjugate).
    pub fn adjugate(&self, fld: &BaseField) -> GMat {
        GMat {
            m: [self.m[3], fld.neg(&self.m[1]), fld.neg(&self.m[2]), self.m[0]],
            t: self.t,
        }
    }

    pub fn det_num(&self, fld: &BaseField) -> Fe {
        fld.sub(&fld.mul(&self.m[0], &self.m[3]), &fld.mul(&self.m[1], &self.m[2]))
    }

    /// Strip common π-powers from the numerator (normalise the denominator).
    pub fn normalized(&self, fld: &BaseField, pi: &Fe) -> GMat {
        let mut g = *self;
        'outer: while g.t > 0 {
            let mut divided = [numfield::ZERO; 4];
            for (i, e) in g.m.iter().enumerate() {
                match fld.exact_div(e, pi) {
                    Some(q) => divided[i] = q,
                    None => break 'outer,
                }
            }
            g = GMat { m: divided, t: g.t - 1 };
        }
        g
    }
}

/// The ambient groups at level data (℘, M): Γ̃ = matrices over O_F[1/p] with
/// c ≡ 0 mod M and determinant a unit times a power of π_℘; Γ additionally
/// has even π_℘-valuation of the determinant.
pub struct GroupCtx {
    pub fld: BaseField,
    pub pi: Ideal,
    pub m_ideal: Ideal,
}

impl GroupCtx {
    /// π-valuation and the cofactor unit test for the determinant; None when
    /// the determinant is not unit·π^j.
    pub fn det_class(&self, g: &GMat) -> Option<i64> {
        let fld = &self.fld;
        let mut d = g.det_num(fld);
        if d.is_zero() {
            return None;
        }
        let mut j: i64 = 0;
        while let Some(q) = fld.exact_div(&d, &self.pi.gen) {
            d = q;
            j += 1;
        }
        if fld.is_unit(&d) {
            Some(j - 2 * g.t)
        } else {
            None
        }
    }

    pub fn in_gamma_tilde(&self, g: &GMat) -> bool {
        if self.det_class(g).is_none() {
            return false;
        }
        // c ≡ 0 mod M (π is invertible mod M, so the numerator test suffices)
        let rr = ResidueRing::new(&self.fld, &self.m_ideal.gen);
        rr.eq(&g.m[2], &numfield::ZERO)
    }

    pub fn in_gamma(&self, g: &GMat) -> bool {
        match self.det_class(g) {
            Some(j) if j.rem_euclid(2) == 0 => {
                let rr = ResidueRing::new(&self.fld, &self.m_ideal.gen);
                rr.eq(&g.m[2], &numfield::ZERO)
            }
            _ => false,
        }
    }
}

/// The embedding data O_F → F_℘: the image of ω, chosen so that the working
/// prime generator has positive valuation (the ℘-adapted root).
pub struct LocalEmbed {
    pub base: BaseField,
    pub fld: FieldRef,
    pub omega: Raw,
    pub pi_img: Raw,
}

impl LocalEmbed {
    /// Select the root of ω's minimal polynomial making ι(π_gen) a
    /// non-unit (for split ℘ exactly one root qualifies; for inert ℘ the
    /// generator is p itself and the first root is taken).
    pub fn new(base: &BaseField, fld: &FieldRef, pi_gen: &Fe) -> LocalEmbed {
        let roots = numfield::omega_images(base, fld);
        assert!(!roots.is_empty(), "ω has no image in the chosen local field model");
        let mut chosen = None;
        for r in &roots {
            let img = apply_root(fld, r, pi_gen);
            if fld.ord(&img).map_or(true, |v| v >= 1) {
                chosen = Some(*r);
                break;
            }
        }
        let omega = chosen.unwrap_or(roots[0]);
        let pi_img = apply_root(fld, &omega, pi_gen);
        assert!(
            fld.ord(&pi_img).map_or(true, |v| v >= 1),
            "no ℘-adapted root: the model does not match the prime"
        );
        LocalEmbed { base: *base, fld: fld.clone(), omega, pi_img }
    }

    pub fn fe(&self, e: &Fe) -> Raw {
        apply_root(&self.fld, &self.omega, e)
    }

    /// Local image of a GMat (divides by ι(π)^t).
    pub fn gmat(&self, g: &GMat) -> Mat2 {
        let fld = &self.fld;
        let mut out = [self.fe(&g.m[0]), self.fe(&g.m[1]), self.fe(&g.m[2]), self.fe(&g.m[3])];
        if g.t != 0 {
            let pi_inv = fld.inv(&self.pi_img).unwrap();
            let scale = fld.pow_i64(&pi_inv, g.t).unwrap();
            for e in out.iter_mut() {
                *e = fld.mul(e, &scale);
            }
        }
        out
    }
}

fn apply_root(fld: &FieldRef, omega: &Raw, e: &Fe) -> Raw {
    let a = fld.from_i128(e.a);
    let b = fld.from_i128(e.b);
    fld.add(&a, &fld.mul(&b, omega))
}
