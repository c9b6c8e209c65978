//! Exact finite-precision arithmetic in unramified extensions Q_{p^f}.
//!
//! Elements are stored in "capped absolute" precision: a value is known
//! modulo p^abs_prec and every operation returns the correct (possibly
//! smaller) precision, never a larger one.  The representation is
//!
//! ```text
//!     x = p^expo · (c_0 + c_1 g + ... + c_{f-1} g^{f-1}),
//! ```
//!
//! where g is a root of a fixed monic lift of an irreducible degree-f
//! polynomial over F_p and the c_i are residues modulo p^{abs_prec − expo}.
//! Since the extension is unramified, p is a uniformiser, ord_p takes integer
//! values, and the valuation of x is min_i ord_p(c_i) + expo.
//!
//! The degree-4 field is built directly over Q_p (not as a tower) so that
//! Frobenius is evaluation of the coordinate polynomial at a Hensel-lifted
//! conjugate root of the modulus.  The Iwasawa logarithm uses the branch
//! log_p(p) = 0 throughout, and ord_p is normalised by ord_p(p) = 1.

use crate::errors::{Result, ShcError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub const MAX_F: usize = 4;

/// p^k for small k, panicking on overflow (callers stay within the field cap).
fn ppow(p: u64, k: i64) -> u64 {
    assert!(k >= 0, "ppow: negative exponent");
    let mut r: u64 = 1;
    for _ in 0..k {
        r = r.checked_mul(p).expect("ppow overflow");
    }
    r
}

fn valp(mut x: u64, p: u64) -> i64 {
    if x == 0 {
        return i64::MAX;
    }
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    v
}

/// Largest W with p^W < 2^63.5, so that coefficient products fit the
/// accumulation scheme in `Field::mul_vec`.
pub fn max_work_prec(p: u64) -> i64 {
    let mut w = 0i64;
    let mut acc: u128 = 1;
    loop {
        acc *= p as u128;
        // p^{w+1} squared must stay below 2^127
        match acc.checked_mul(acc) {
            Some(sq) if sq < 1u128 << 127 => w += 1,
            _ => return w,
        }
    }
}

// ---------------------------------------------------------------------------
// Residue-field helper: F_{p^f} arithmetic used during field construction
// (irreducibility tests, root finding) and nowhere else.
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Fq {
    p: u64,
    f: usize,
    /// monic modulus mod p, little-endian, length f (leading coefficient 1 implied)
    m: [u64; MAX_F],
}

type FqEl = [u64; MAX_F];

// a few helpers below are exercised only from tests
#[allow(dead_code)]
impl Fq {
    fn zero(&self) -> FqEl {
        [0; MAX_F]
    }
    fn one(&self) -> FqEl {
        let mut e = [0; MAX_F];
        e[0] = 1;
        e
    }
    fn gen(&self) -> FqEl {
        let mut e = [0; MAX_F];
        if self.f == 1 {
            // g is the root of the degree-1 modulus x + m0, i.e. -m0
            e[0] = (self.p - self.m[0] % self.p) % self.p;
        } else {
            e[1] = 1;
        }
        e
    }
    fn add(&self, a: &FqEl, b: &FqEl) -> FqEl {
        let mut r = [0; MAX_F];
        for i in 0..self.f {
            r[i] = (a[i] + b[i]) % self.p;
        }
        r
    }
    fn sub(&self, a: &FqEl, b: &FqEl) -> FqEl {
        let mut r = [0; MAX_F];
        for i in 0..self.f {
            r[i] = (a[i] + self.p - b[i] % self.p) % self.p;
        }
        r
    }
    fn mul(&self, a: &FqEl, b: &FqEl) -> FqEl {
        // schoolbook then reduce by the monic modulus
        let mut t = [0u64; 2 * MAX_F - 1];
        for i in 0..self.f {
            if a[i] == 0 {
                continue;
            }
            for j in 0..self.f {
                t[i + j] = (t[i + j] + a[i] * b[j]) % self.p;
            }
        }
        for d in (self.f..2 * self.f - 1).rev() {
            let c = t[d];
            if c == 0 {
                continue;
            }
            t[d] = 0;
            // x^d = x^{d-f} * x^f = x^{d-f} * (-m)
            for i in 0..self.f {
                let s = (c * (self.p - self.m[i] % self.p)) % self.p;
                t[d - self.f + i] = (t[d - self.f + i] + s) % self.p;
            }
        }
        let mut r = [0; MAX_F];
        r[..self.f].copy_from_slice(&t[..self.f]);
        r
    }
    fn pow(&self, a: &FqEl, mut e: u64) -> FqEl {
        let mut base = *a;
        let mut r = self.one();
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(&r, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        r
    }
    fn is_zero(&self, a: &FqEl) -> bool {
        a[..self.f].iter().all(|&c| c == 0)
    }
    fn inv(&self, a: &FqEl) -> FqEl {
        let q = ppow(self.p, self.f as i64);
        self.pow(a, q - 2)
    }
    /// All field elements in lexicographic digit order (q ≤ p^4 ≤ 10^4 scale).
    fn elements(&self) -> Vec<FqEl> {
        let q = ppow(self.p, self.f as i64);
        let mut out = Vec::with_capacity(q as usize);
        for n in 0..q {
            let mut e = [0; MAX_F];
            let mut m = n;
            for i in 0..self.f {
                e[i] = m % self.p;
                m /= self.p;
            }
            out.push(e);
        }
        out
    }
    /// Evaluate a monic polynomial (little-endian coeffs, leading 1 implied,
    /// length deg) at a.
    fn eval_monic(&self, coeffs: &[u64], deg: usize, a: &FqEl) -> FqEl {
        let mut r = self.one(); // leading coefficient
        for i in (0..deg).rev() {
            r = self.mul(&r, a);
            let mut c = self.zero();
            c[0] = coeffs[i] % self.p;
            r = self.add(&r, &c);
        }
        r
    }
}

/// Irreducibility of a monic degree-f polynomial over F_p via the
/// x^{p^d} ≡ x criterion (f ≤ 4, so the proper divisors are few).
fn irreducible_mod_p(p: u64, f: usize, m: &[u64; MAX_F]) -> bool {
    // polynomial arithmetic mod (p, m) realised through Fq with modulus m
    let fq = Fq { p, f, m: *m };
    if f == 1 {
        return true;
    }
    let x = fq.gen();
    // x^{p^f} == x
    let mut t = x;
    for _ in 0..f {
        t = fq.pow(&t, p);
    }
    if t != x {
        return false;
    }
    // for each prime r | f: x^{p^{f/r}} - x must be a unit (no factor of degree f/r)
    let prime_divs: &[usize] = match f {
        2 => &[2],
        3 => &[3],
        4 => &[2],
        _ => &[],
    };
    for &r in prime_divs {
        let d = f / r;
        let mut t = x;
        for _ in 0..d {
            t = fq.pow(&t, p);
        }
        let diff = fq.sub(&t, &x);
        // gcd(x^{p^d} - x, m) = 1  <=>  diff is invertible mod m.
        // Since m may be reducible here, test invertibility by diff^{q-1} == 1.
        if fq.is_zero(&diff) {
            return false;
        }
        let q = ppow(p, f as i64);
        if fq.pow(&diff, q - 1) != fq.one() {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// The unramified field
// ---------------------------------------------------------------------------

/// The degree-f unramified extension of Q_p at working precision `work_prec`.
///
/// `modulus` is the fixed monic lift (small non-negative integer coefficients)
/// of an irreducible polynomial over F_p; elements are coordinate vectors in
/// the power basis of a root g.
pub struct UnramifiedField {
    pub p: u64,
    pub f: usize,
    pub work_prec: i64,
    /// little-endian coefficients of the monic modulus, length f (leading 1 implied)
    pub modulus: [u64; MAX_F],
    /// p^work_prec
    pm: u64,
    /// p^0 .. p^work_prec
    ppows: Vec<u64>,
    /// reduction rows: x^{f+i} mod modulus, i = 0..f-2, coefficients mod p^work_prec
    red: Vec<[u64; MAX_F]>,
    /// coordinates of σ_Fr(g): the Hensel root of the modulus congruent to g^p
    frob_gen: [u64; MAX_F],
}

pub type FieldRef = Arc<UnramifiedField>;

/// Internal value representation: see module docs.  `Copy`, no allocation;
/// all operations take the parent field explicitly.
#[derive(Clone, Copy, Debug)]
pub struct Raw {
    pub c: [u64; MAX_F],
    /// p-power shift; equals the valuation when c ≠ 0 (normalised form)
    pub expo: i64,
    /// absolute precision: the value is known mod p^prec
    pub prec: i64,
}

impl Raw {
    /// Exact residue mod p^work_prec (folds the p-power shift back into the
    /// coordinates).  Requires an integral element (expo ≥ 0).
    pub fn to_exact(&self, fld: &UnramifiedField) -> [u64; MAX_F] {
        if fld.is_zero(self) {
            return [0; MAX_F];
        }
        assert!(self.expo >= 0, "to_exact requires an integral element");
        if self.expo >= fld.work_prec {
            return [0; MAX_F];
        }
        fld.scal_vec(fld.ppows[self.expo as usize], &self.c)
    }
}

impl UnramifiedField {
    /// Exact residue back into a tracked value at full working precision.
    pub fn from_exact(&self, c: [u64; MAX_F]) -> Raw {
        self.normalize(Raw { c, expo: 0, prec: self.work_prec })
    }

    /// Construct Q_{p^f} at the given working precision, choosing the first
    /// irreducible modulus in the fixed deterministic search order (so caches
    /// agree across runs; the modulus is recorded in all file headers).
    pub fn new(p: u64, f: usize, work_prec: i64) -> FieldRef {
        assert!(p % 2 == 1, "p must be odd");
        assert!(f == 1 || f == 2 || f == 4, "f ∈ {{1,2,4}}");
        assert!(work_prec >= 1 && work_prec <= max_work_prec(p), "work_prec out of range for p");
        let modulus = Self::find_modulus(p, f);
        Self::with_modulus(p, f, work_prec, modulus)
    }

    /// Deterministic modulus search: lexicographic over (c_{f-1},...,c_1,c_0)
    /// with all coefficients in 0..p, c_0 ≠ 0, first irreducible wins.
    /// For p ≡ 3 (mod 4), f = 2 this yields x² + 1.
    fn find_modulus(p: u64, f: usize) -> [u64; MAX_F] {
        if f == 1 {
            return [0; MAX_F]; // modulus x: generator is 0, elements are Q_p
        }
        let total = ppow(p, f as i64);
        for n in 0..total {
            let mut m = [0u64; MAX_F];
            let mut t = n;
            // low-index coefficients vary fastest: lexicographic in (c_{f-1},..,c_0)
            for i in 0..f {
                m[i] = t % p;
                t /= p;
            }
            if m[0] == 0 {
                continue;
            }
            if irreducible_mod_p(p, f, &m) {
                return m;
            }
        }
        unreachable!("irreducible polynomial of every degree exists over F_p");
    }

    pub fn with_modulus(p: u64, f: usize, work_prec: i64, modulus: [u64; MAX_F]) -> FieldRef {
        assert!(irreducible_mod_p(p, f, &modulus), "modulus must be irreducible mod p");
        let pm = ppow(p, work_prec);
        let ppows: Vec<u64> = (0..=work_prec).map(|k| ppow(p, k)).collect();
        // reduction rows over Z/p^W: x^f = -m, then x^{f+1} = x*x^f reduced, ...
        let mut red: Vec<[u64; MAX_F]> = Vec::new();
        if f > 1 {
            let mut row = [0u64; MAX_F];
            for i in 0..f {
                row[i] = (pm - modulus[i] % pm) % pm;
            }
            red.push(row);
            for _ in 1..f - 1 {
                let prev = *red.last().unwrap();
                // multiply by x: shift, then reduce the x^f coefficient
                let carry = prev[f - 1];
                let mut nxt = [0u64; MAX_F];
                for i in (1..f).rev() {
                    nxt[i] = prev[i - 1];
                }
                nxt[0] = 0;
                if carry != 0 {
                    for i in 0..f {
                        let t = (carry as u128) * ((pm - modulus[i] % pm) % pm) as u128 % pm as u128;
                        nxt[i] = ((nxt[i] as u128 + t) % pm as u128) as u64;
                    }
                }
                red.push(nxt);
            }
        }
        let mut fld = UnramifiedField {
            p,
            f,
            work_prec,
            modulus,
            pm,
            ppows,
            red,
            frob_gen: [0; MAX_F],
        };
        fld.frob_gen = fld.compute_frob_gen();
        Arc::new(fld)
    }

    fn fq(&self) -> Fq {
        let mut m = [0u64; MAX_F];
        for i in 0..self.f {
            m[i] = self.modulus[i] % self.p;
        }
        Fq { p: self.p, f: self.f, m }
    }

    // ---- coefficient-vector arithmetic mod p^work_prec -------------------
    //
    // These operate on exact residues mod p^work_prec (no precision tracking);
    // the linalg module builds its matrix arithmetic on them.

    pub(crate) fn add_vec(&self, a: &[u64; MAX_F], b: &[u64; MAX_F]) -> [u64; MAX_F] {
        let mut r = [0; MAX_F];
        for i in 0..self.f {
            let s = a[i] as u128 + b[i] as u128;
            r[i] = (s % self.pm as u128) as u64;
        }
        r
    }

    #[allow(dead_code)]
    pub(crate) fn sub_vec(&self, a: &[u64; MAX_F], b: &[u64; MAX_F]) -> [u64; MAX_F] {
        let mut r = [0; MAX_F];
        for i in 0..self.f {
            let s = a[i] as u128 + self.pm as u128 - (b[i] % self.pm) as u128;
            r[i] = (s % self.pm as u128) as u64;
        }
        r
    }

    pub(crate) fn scal_vec(&self, s: u64, a: &[u64; MAX_F]) -> [u64; MAX_F] {
        let mut r = [0; MAX_F];
        for i in 0..self.f {
            r[i] = ((s as u128 * a[i] as u128) % self.pm as u128) as u64;
        }
        r
    }

    pub(crate) fn mul_vec(&self, a: &[u64; MAX_F], b: &[u64; MAX_F]) -> [u64; MAX_F] {
        let pm2 = (self.pm as u128) * (self.pm as u128);
        let mut t = [0u128; 2 * MAX_F - 1];
        for i in 0..self.f {
            if a[i] == 0 {
                continue;
            }
            for j in 0..self.f {
                let prod = a[i] as u128 * b[j] as u128; // < pm^2 < 2^127
                let mut acc = t[i + j] + prod;
                if acc >= pm2 {
                    acc -= pm2;
                }
                t[i + j] = acc;
            }
        }
        // reduce degrees ≥ f via the precomputed rows
        let mut out = [0u64; MAX_F];
        let mut low = [0u128; MAX_F];
        for i in 0..self.f {
            low[i] = t[i];
        }
        for d in self.f..2 * self.f - 1 {
            let c = (t[d] % self.pm as u128) as u64;
            if c == 0 {
                continue;
            }
            let row = &self.red[d - self.f];
            for i in 0..self.f {
                let prod = c as u128 * row[i] as u128;
                let mut acc = low[i] + prod;
                if acc >= pm2 {
                    acc -= pm2;
                }
                low[i] = acc;
            }
        }
        for i in 0..self.f {
            out[i] = (low[i] % self.pm as u128) as u64;
        }
        out
    }

    // ---- Raw element constructors ----------------------------------------

    pub fn zero(&self) -> Raw {
        Raw { c: [0; MAX_F], expo: 0, prec: self.work_prec }
    }

    pub fn one(&self) -> Raw {
        self.from_i64(1)
    }

    pub fn from_i64(&self, n: i64) -> Raw {
        let m = n.rem_euclid(self.pm as i64 * 0 + self.pm as i64) as u64 % self.pm;
        let mut c = [0; MAX_F];
        c[0] = m;
        self.normalize(Raw { c, expo: 0, prec: self.work_prec })
    }

    pub fn from_i128(&self, n: i128) -> Raw {
        let m = n.rem_euclid(self.pm as i128) as u64;
        let mut c = [0; MAX_F];
        c[0] = m;
        self.normalize(Raw { c, expo: 0, prec: self.work_prec })
    }

    /// The generator g of the power basis (for f = 1: the element 0... callers
    /// should not request a generator of Q_p; returns -modulus[0] which is 0).
    pub fn gen_elem(&self) -> Raw {
        let mut c = [0; MAX_F];
        if self.f == 1 {
            c[0] = (self.pm - self.modulus[0] % self.pm) % self.pm;
        } else {
            c[1] = 1;
        }
        self.normalize(Raw { c, expo: 0, prec: self.work_prec })
    }

    pub fn p_power(&self, k: i64) -> Raw {
        let mut c = [0; MAX_F];
        c[0] = 1;
        Raw { c, expo: k, prec: k + self.work_prec }
    }

    /// n/d for d prime to p (exact to working precision).
    pub fn from_ratio(&self, n: i64, d: i64) -> Raw {
        assert!(d != 0 && d.unsigned_abs() % self.p != 0, "denominator must be a p-unit");
        let dn = self.from_i64(d);
        let inv = self.inv(&dn).expect("unit denominator");
        self.mul(&self.from_i64(n), &inv)
    }

    // ---- normalisation and precision bookkeeping -------------------------

    /// Restore the invariant: coefficients reduced mod p^{prec − expo} (capped
    /// at work_prec), expo = valuation when nonzero.
    pub fn normalize(&self, mut x: Raw) -> Raw {
        // cap relative width
        if x.prec - x.expo > self.work_prec {
            x.prec = x.expo + self.work_prec;
        }
        let rel = x.prec - x.expo;
        if rel <= 0 {
            return Raw { c: [0; MAX_F], expo: 0, prec: x.prec };
        }
        let modu = self.ppows[rel as usize];
        let mut v = i64::MAX;
        for i in 0..self.f {
            x.c[i] %= modu;
            let vi = valp(x.c[i], self.p);
            if vi < v {
                v = vi;
            }
        }
        if v == i64::MAX || v >= rel {
            // indistinguishable from zero at this precision
            return Raw { c: [0; MAX_F], expo: 0, prec: x.prec };
        }
        if v > 0 {
            let pv = self.ppows[v as usize];
            for i in 0..self.f {
                x.c[i] /= pv;
            }
            x.expo += v;
            // relative width grew by v conceptually; but we know nothing new:
            // coefficients are correct mod p^{prec - expo}
            let nrel = x.prec - x.expo;
            let nmodu = self.ppows[nrel as usize];
            for i in 0..self.f {
                x.c[i] %= nmodu;
            }
        }
        x
    }

    pub fn is_zero(&self, x: &Raw) -> bool {
        x.c[..self.f].iter().all(|&c| c == 0)
    }

    /// Valuation (None when the element is 0 at its precision).
    pub fn ord(&self, x: &Raw) -> Option<i64> {
        if self.is_zero(x) {
            None
        } else {
            Some(x.expo)
        }
    }

    /// Truncate the absolute precision down to `prec` (no-op if already lower).
    pub fn cap_prec(&self, x: &Raw, prec: i64) -> Raw {
        if x.prec <= prec {
            return *x;
        }
        self.normalize(Raw { c: x.c, expo: x.expo, prec })
    }

    // ---- ring operations -------------------------------------------------

    pub fn add(&self, a: &Raw, b: &Raw) -> Raw {
        if self.is_zero(a) && self.is_zero(b) {
            return Raw { c: [0; MAX_F], expo: 0, prec: a.prec.min(b.prec) };
        }
        if self.is_zero(a) {
            return self.cap_prec(b, a.prec);
        }
        if self.is_zero(b) {
            return self.cap_prec(a, b.prec);
        }
        let e = a.expo.min(b.expo);
        let prec = a.prec.min(b.prec);
        let rel = prec - e;
        if rel <= 0 {
            return Raw { c: [0; MAX_F], expo: 0, prec };
        }
        let sa = self.ppows[(a.expo - e).min(self.work_prec) as usize];
        let sb = self.ppows[(b.expo - e).min(self.work_prec) as usize];
        let ca = self.scal_vec(sa, &a.c);
        let cb = self.scal_vec(sb, &b.c);
        let c = self.add_vec(&ca, &cb);
        self.normalize(Raw { c, expo: e, prec })
    }

    pub fn neg(&self, a: &Raw) -> Raw {
        let mut c = [0; MAX_F];
        let rel = (a.prec - a.expo).clamp(0, self.work_prec);
        if rel == 0 || self.is_zero(a) {
            return *a;
        }
        let modu = self.ppows[rel as usize];
        for i in 0..self.f {
            c[i] = (modu - a.c[i] % modu) % modu;
        }
        Raw { c, expo: a.expo, prec: a.prec }
    }

    pub fn sub(&self, a: &Raw, b: &Raw) -> Raw {
        self.add(a, &self.neg(b))
    }

    pub fn mul(&self, a: &Raw, b: &Raw) -> Raw {
        // precision: min(prec_a + v_b, prec_b + v_a); for zero operands use
        // prec + the other's expo (valuation lower bound)
        let za = self.is_zero(a);
        let zb = self.is_zero(b);
        if za || zb {
            let va = if za { a.prec } else { a.expo };
            let vb = if zb { b.prec } else { b.expo };
            return Raw { c: [0; MAX_F], expo: 0, prec: va + vb };
        }
        let prec = (a.prec + b.expo).min(b.prec + a.expo);
        let c = self.mul_vec(&a.c, &b.c);
        self.normalize(Raw { c, expo: a.expo + b.expo, prec })
    }

    pub fn mul_i64(&self, a: &Raw, n: i64) -> Raw {
        self.mul(a, &self.from_i64(n))
    }

    /// Divide by p^k exactly (shifts valuation and absolute precision).
    pub fn shift(&self, a: &Raw, k: i64) -> Raw {
        if self.is_zero(a) {
            return Raw { c: a.c, expo: a.expo, prec: a.prec + k };
        }
        Raw { c: a.c, expo: a.expo + k, prec: a.prec + k }
    }

    pub fn inv(&self, a: &Raw) -> Result<Raw> {
        if self.is_zero(a) {
            return Err(ShcError::ZeroPrecision);
        }
        let rel = a.prec - a.expo;
        // unit part U = a / p^expo; invert U by Hensel/Newton from the residue inverse
        let fq = self.fq();
        let mut a0 = [0u64; MAX_F];
        for i in 0..self.f {
            a0[i] = a.c[i] % self.p;
        }
        let inv0 = fq.inv(&a0);
        let u = Raw { c: a.c, expo: 0, prec: rel.min(self.work_prec) };
        let mut y = Raw { c: inv0, expo: 0, prec: 1 };
        let mut cur: i64 = 1;
        while cur < rel {
            cur = (cur * 2).min(rel);
            y.prec = cur;
            // y <- y(2 - u y)
            let uy = self.mul(&self.cap_prec(&u, cur), &y);
            let two = self.from_i64(2);
            let t = self.sub(&self.cap_prec(&two, cur), &uy);
            y = self.mul(&y, &t);
            y = self.cap_prec(&y, cur);
        }
        Ok(Raw { c: y.c, expo: -a.expo, prec: rel - a.expo })
    }

    pub fn div(&self, a: &Raw, b: &Raw) -> Result<Raw> {
        Ok(self.mul(a, &self.inv(b)?))
    }

    pub fn pow_i64(&self, a: &Raw, e: i64) -> Result<Raw> {
        if e < 0 {
            return self.pow_i64(&self.inv(a)?, -e);
        }
        let mut r = self.one();
        let mut base = *a;
        let mut e = e as u64;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(&r, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        Ok(r)
    }

    /// Equality at the minimum of the two precisions.
    pub fn eq_at_min(&self, a: &Raw, b: &Raw) -> bool {
        let d = self.sub(a, b);
        self.is_zero(&d)
    }

    // ---- Galois structure -------------------------------------------------

    fn compute_frob_gen(&self) -> [u64; MAX_F] {
        if self.f == 1 {
            let mut c = [0; MAX_F];
            c[0] = (self.pm - self.modulus[0] % self.pm) % self.pm;
            return c;
        }
        // start from g^p mod p, Newton-iterate y <- y - m(y)/m'(y)
        let g = self.gen_elem();
        let mut y = self.pow_i64(&g, self.p as i64).unwrap();
        // project to residue start (valuation-0 digits suffice; Newton corrects)
        loop {
            let my = self.eval_modulus(&y);
            if self.is_zero(&my) {
                break;
            }
            let dmy = self.eval_modulus_deriv(&y);
            let corr = self.div(&my, &dmy).expect("m'(y) is a unit (separable)");
            let y2 = self.sub(&y, &corr);
            if self.eq_at_min(&y2, &y) {
                y = y2;
                break;
            }
            y = y2;
        }
        let y = self.normalize(Raw { c: y.c, expo: y.expo, prec: self.work_prec });
        assert_eq!(y.expo, 0, "Frobenius image of the generator is integral");
        y.c
    }

    fn eval_modulus(&self, y: &Raw) -> Raw {
        // m(y) = y^f + sum c_i y^i
        let mut r = self.one();
        for i in (0..self.f).rev() {
            r = self.mul(&r, y);
            r = self.add(&r, &self.from_i64(self.modulus[i] as i64));
        }
        r
    }

    fn eval_modulus_deriv(&self, y: &Raw) -> Raw {
        // m'(y) = f y^{f-1} + sum i c_i y^{i-1}
        let mut r = self.from_i64(self.f as i64);
        for i in (1..self.f).rev() {
            r = self.mul(&r, y);
            r = self.add(&r, &self.from_i64((i as u64 * self.modulus[i]) as i64));
        }
        r
    }

    /// σ_Fr(x): evaluate the coordinate polynomial at the conjugate root.
    /// The coefficients lie in Z_p and are fixed by Frobenius.
    pub fn frobenius(&self, x: &Raw) -> Raw {
        if self.f == 1 || self.is_zero(x) {
            return *x;
        }
        let fg = Raw { c: self.frob_gen, expo: 0, prec: self.work_prec };
        let mut r = self.zero();
        r.prec = x.prec - x.expo; // accumulate the unit part at its relative width
        for i in (0..self.f).rev() {
            r = self.mul(&r, &fg);
            let mut ci = [0u64; MAX_F];
            ci[0] = x.c[i];
            r = self.add(&r, &Raw { c: ci, expo: 0, prec: x.prec - x.expo });
        }
        self.normalize(Raw { c: r.c, expo: r.expo + x.expo, prec: x.prec })
    }

    pub fn frobenius_iter(&self, x: &Raw, times: usize) -> Raw {
        let mut r = *x;
        for _ in 0..times % self.f {
            r = self.frobenius(&r);
        }
        r
    }

    /// Teichmüller lift of the residue of a unit x: the unique t with
    /// t^{p^f} = t and t ≡ x (mod p).
    pub fn teichmuller(&self, x: &Raw) -> Result<Raw> {
        if self.is_zero(x) {
            return Err(ShcError::ZeroPrecision);
        }
        if x.expo != 0 {
            return Err(ShcError::NotAUnit);
        }
        let rel = (x.prec - x.expo).clamp(1, self.work_prec);
        let q = self.p.checked_pow(self.f as u32).expect("p^f fits");
        let mut t = Raw { c: x.c, expo: 0, prec: rel };
        // x ↦ x^{p^f} contracts towards the Teichmüller point one digit per step
        for _ in 0..rel + 1 {
            let nt = self.pow_i64(&t, q as i64).unwrap();
            let nt = self.cap_prec(&nt, rel);
            if self.eq_at_min(&nt, &t) {
                t = nt;
                break;
            }
            t = nt;
        }
        Ok(t)
    }

    /// Iwasawa logarithm: log_p(p) = 0; for x = p^v·t·u with t Teichmüller and
    /// u ≡ 1 (mod p), returns the alternating series at u.
    pub fn logp(&self, x: &Raw) -> Result<Raw> {
        if self.is_zero(x) {
            return Err(ShcError::ZeroPrecision);
        }
        let unit = Raw { c: x.c, expo: 0, prec: x.prec - x.expo };
        let t = self.teichmuller(&unit)?;
        let u = self.div(&unit, &t)?;
        let z = self.sub(&u, &self.one()); // v(z) ≥ 1 for p odd
        let target = unit.prec;
        if self.is_zero(&z) {
            return Ok(Raw { c: [0; MAX_F], expo: 0, prec: target });
        }
        // truncation bound: need n - ord_p(n) ≥ target for the tail; since
        // ord_p(n) ≤ log_p(n), n_max = target + 2*(⌊log_p(target)⌋ + 2) suffices
        let mut lg = 0i64;
        let mut acc = 1u64;
        while (acc as i64) < target.max(1) {
            acc = acc.saturating_mul(self.p);
            lg += 1;
        }
        let n_max = target + 2 * (lg + 2);
        let mut sum = self.zero();
        sum.prec = target;
        let mut zpow = self.one();
        for n in 1..=n_max {
            zpow = self.mul(&zpow, &z);
            let a = valp(n as u64, self.p);
            let npart = (n as u64) / self.ppows[a as usize];
            let ninv = self.inv(&self.from_i64(npart as i64)).unwrap();
            let mut term = self.mul(&zpow, &ninv);
            term = self.shift(&term, -a); // divide by p^a
            if n % 2 == 0 {
                term = self.neg(&term);
            }
            sum = self.add(&sum, &term);
        }
        Ok(self.cap_prec(&sum, target))
    }

    /// Norm down to the degree-`sub_degree` subfield: product of the
    /// f/sub_degree conjugates under σ_Fr^{sub_degree}.
    pub fn norm_to_base(&self, x: &Raw, sub_degree: usize) -> Result<Raw> {
        if sub_degree == 0 || self.f % sub_degree != 0 {
            return Err(ShcError::DegreeError(sub_degree, self.f));
        }
        let mut r = *x;
        let mut conj = *x;
        for _ in 1..self.f / sub_degree {
            for _ in 0..sub_degree {
                conj = self.frobenius(&conj);
            }
            r = self.mul(&r, &conj);
        }
        Ok(r)
    }

    /// Square root of x (p odd).  Chooses the root whose residue digits are
    /// lexicographically smallest; Err if x is not a square in this field.
    pub fn sqrt(&self, x: &Raw) -> Result<Raw> {
        if self.is_zero(x) {
            return Ok(*x);
        }
        if x.expo % 2 != 0 {
            return Err(ShcError::NotASquare);
        }
        let unit = Raw { c: x.c, expo: 0, prec: x.prec - x.expo };
        // residue square root by exhaustive search (p^f ≤ 10^4 scale)
        let fq = self.fq();
        let mut x0 = [0u64; MAX_F];
        for i in 0..self.f {
            x0[i] = x.c[i] % self.p;
        }
        let mut root0: Option<FqEl> = None;
        for cand in fq.elements() {
            if fq.mul(&cand, &cand) == x0 {
                root0 = Some(cand);
                break; // elements() is lexicographic: first hit is canonical
            }
        }
        let r0 = root0.ok_or(ShcError::NotASquare)?;
        let rel = (unit.prec).clamp(1, self.work_prec);
        let mut y = Raw { c: r0, expo: 0, prec: 1 };
        let half = self.inv(&self.from_i64(2)).unwrap();
        let mut cur = 1i64;
        while cur < rel {
            cur = (cur * 2).min(rel);
            y.prec = cur;
            let xy = self.div(&self.cap_prec(&unit, cur), &y)?;
            y = self.mul(&self.add(&y, &xy), &half);
            y = self.cap_prec(&y, cur);
        }
        Ok(Raw { c: y.c, expo: x.expo / 2, prec: rel + x.expo / 2 })
    }

    /// All residue-field roots of a monic polynomial with Raw coefficients
    /// (little-endian, leading 1 implied), Hensel-lifted; used to build
    /// embeddings between field models.  Roots are returned in the canonical
    /// (lexicographic residue) order.
    pub fn monic_roots(&self, coeffs: &[Raw]) -> Vec<Raw> {
        let fq = self.fq();
        let deg = coeffs.len();
        let mut c_res: Vec<u64> = Vec::with_capacity(deg);
        for c in coeffs {
            // residue of an integral coefficient
            let r = if c.expo > 0 || self.is_zero(c) { 0 } else { c.c[0] % self.p };
            assert!(c.expo >= 0, "monic_roots expects integral coefficients");
            c_res.push(r);
        }
        let mut out = Vec::new();
        'cand: for cand in fq.elements() {
            // cheap residue evaluation of the full (non-constant-coefficient)
            // polynomial: only valid when coefficients are Q_p-integral with
            // f = 1-style constants; general case handled by full evaluation
            let _ = &c_res;
            let mut y = Raw { c: cand, expo: 0, prec: 1 };
            let ev = self.eval_monic_poly(coeffs, &y);
            if !self.is_zero(&self.cap_prec(&ev, 1)) {
                continue 'cand;
            }
            // simple-root check: derivative must be a unit
            let dv = self.eval_monic_poly_deriv(coeffs, &y);
            if self.is_zero(&self.cap_prec(&dv, 1)) {
                continue 'cand;
            }
            // Newton lift
            let rel = self.work_prec;
            let mut cur = 1i64;
            while cur < rel {
                cur = (cur * 2).min(rel);
                y.prec = cur;
                let ev = self.cap_prec(&self.eval_monic_poly(coeffs, &y), cur);
                let dv = self.cap_prec(&self.eval_monic_poly_deriv(coeffs, &y), cur);
                let corr = self.div(&ev, &dv).unwrap();
                y = self.cap_prec(&self.sub(&y, &corr), cur);
            }
            out.push(y);
        }
        out
    }

    fn eval_monic_poly(&self, coeffs: &[Raw], y: &Raw) -> Raw {
        let mut r = self.one();
        for c in coeffs.iter().rev() {
            r = self.mul(&r, y);
            r = self.add(&r, c);
        }
        r
    }

    fn eval_monic_poly_deriv(&self, coeffs: &[Raw], y: &Raw) -> Raw {
        let deg = coeffs.len();
        let mut r = self.from_i64(deg as i64);
        for i in (1..deg).rev() {
            r = self.mul(&r, y);
            r = self.add(&r, &self.mul_i64(&coeffs[i], i as i64));
        }
        r
    }
}

impl fmt::Debug for UnramifiedField {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            fm,
            "Q_{{{}^{}}} (modulus {:?}, prec {})",
            self.p,
            self.f,
            &self.modulus[..self.f],
            self.work_prec
        )
    }
}

// ---------------------------------------------------------------------------
// Embeddings between unramified field models
// ---------------------------------------------------------------------------

/// A Q_p-algebra embedding of one unramified field model into another
/// (src.f | dst.f, same p), realised by a Hensel root of the source modulus.
pub struct Embedding {
    pub src: FieldRef,
    pub dst: FieldRef,
    /// image of the source generator in dst
    pub gen_image: Raw,
}

impl Embedding {
    /// Build the embedding selecting the root with the given index in the
    /// canonical root ordering (index 0 unless a specific conjugate is needed).
    pub fn new(src: &FieldRef, dst: &FieldRef, root_index: usize) -> Embedding {
        assert_eq!(src.p, dst.p);
        assert!(dst.f % src.f == 0, "no embedding: source degree must divide target degree");
        if src.f == 1 {
            let gi = dst.from_i64(0);
            let gi = dst.sub(&gi, &dst.from_i64(src.modulus[0] as i64));
            return Embedding { src: src.clone(), dst: dst.clone(), gen_image: gi };
        }
        let coeffs: Vec<Raw> =
            (0..src.f).map(|i| dst.from_i64(src.modulus[i] as i64)).collect();
        let roots = dst.monic_roots(&coeffs);
        assert!(
            roots.len() == src.f,
            "unramified modulus splits completely in any containing field"
        );
        Embedding { src: src.clone(), dst: dst.clone(), gen_image: roots[root_index] }
    }

    pub fn apply(&self, x: &Raw) -> Raw {
        if self.src.is_zero(x) {
            return Raw { c: [0; MAX_F], expo: 0, prec: x.prec };
        }
        let mut r = self.dst.zero();
        r.prec = x.prec - x.expo;
        for i in (0..self.src.f).rev() {
            r = self.dst.mul(&r, &self.gen_image);
            let mut ci = [0u64; MAX_F];
            ci[0] = x.c[i];
            r = self.dst.add(&r, &Raw { c: ci, expo: 0, prec: x.prec - x.expo });
        }
        self.dst
            .normalize(Raw { c: r.c, expo: r.expo + x.expo, prec: x.prec })
    }
}

// ---------------------------------------------------------------------------
// Public element wrapper
// ---------------------------------------------------------------------------

/// An element of an unramified extension at explicit finite precision.
#[derive(Clone)]
pub struct PadicElem {
    pub fld: FieldRef,
    pub raw: Raw,
}

impl PadicElem {
    pub fn new(fld: &FieldRef, raw: Raw) -> Self {
        PadicElem { fld: fld.clone(), raw: fld.normalize(raw) }
    }
    pub fn from_i64(fld: &FieldRef, n: i64) -> Self {
        PadicElem { fld: fld.clone(), raw: fld.from_i64(n) }
    }
    pub fn ordp(&self) -> Result<i64> {
        self.fld.ord(&self.raw).ok_or(ShcError::ZeroPrecision)
    }
    pub fn frobenius(&self) -> Self {
        PadicElem { fld: self.fld.clone(), raw: self.fld.frobenius(&self.raw) }
    }
    pub fn logp(&self) -> Result<Self> {
        Ok(PadicElem { fld: self.fld.clone(), raw: self.fld.logp(&self.raw)? })
    }
    pub fn teichmuller(&self) -> Result<Self> {
        Ok(PadicElem { fld: self.fld.clone(), raw: self.fld.teichmuller(&self.raw)? })
    }
    pub fn norm_to_base(&self, sub_degree: usize) -> Result<Self> {
        Ok(PadicElem { fld: self.fld.clone(), raw: self.fld.norm_to_base(&self.raw, sub_degree)? })
    }
    pub fn is_zero(&self) -> bool {
        self.fld.is_zero(&self.raw)
    }
    pub fn eq_at_min(&self, other: &PadicElem) -> bool {
        self.fld.eq_at_min(&self.raw, &other.raw)
    }
}

impl fmt::Debug for PadicElem {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(fm, "O(p^{})", self.raw.prec);
        }
        write!(
            fm,
            "p^{}·{:?} + O(p^{})",
            self.raw.expo,
            &self.raw.c[..self.fld.f],
            self.raw.prec
        )
    }
}

// ---------------------------------------------------------------------------
// Serialisation: {"val": v, "digits": [[c_0,...,c_{f-1}], ...], "prec": M}
// digits are least-significant-first residue coordinates of the unit part.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Debug, PartialEq, Eq, Clone)]
pub struct PadicJson {
    pub val: i64,
    pub digits: Vec<Vec<u64>>,
    pub prec: i64,
}

impl PadicElem {
    pub fn to_json(&self) -> PadicJson {
        let f = &self.fld;
        if self.is_zero() {
            return PadicJson { val: 0, digits: vec![], prec: self.raw.prec };
        }
        let rel = (self.raw.prec - self.raw.expo).clamp(0, f.work_prec);
        let mut rows = Vec::with_capacity(rel as usize);
        let mut c = self.raw.c;
        for _ in 0..rel {
            let mut row = Vec::with_capacity(f.f);
            for i in 0..f.f {
                row.push(c[i] % f.p);
                c[i] /= f.p;
            }
            rows.push(row);
        }
        PadicJson { val: self.raw.expo, digits: rows, prec: self.raw.prec }
    }

    pub fn from_json(fld: &FieldRef, j: &PadicJson) -> Result<PadicElem> {
        if j.digits.is_empty() {
            return Ok(PadicElem {
                fld: fld.clone(),
                raw: Raw { c: [0; MAX_F], expo: 0, prec: j.prec },
            });
        }
        let mut c = [0u64; MAX_F];
        for (r, row) in j.digits.iter().enumerate().rev() {
            if row.len() != fld.f {
                return Err(ShcError::SchemaError(format!(
                    "digit row has {} coordinates, field degree is {}",
                    row.len(),
                    fld.f
                )));
            }
            for i in 0..fld.f {
                if row[i] >= fld.p {
                    return Err(ShcError::SchemaError(format!(
                        "digit {} out of range for p = {}",
                        row[i], fld.p
                    )));
                }
                c[i] = c[i] * fld.p + row[fld.f - 1 - (fld.f - 1 - i)];
            }
            let _ = r;
        }
        Ok(PadicElem::new(fld, Raw { c, expo: j.val, prec: j.prec }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q5() -> FieldRef {
        UnramifiedField::new(5, 1, 20)
    }
    fn q9() -> FieldRef {
        UnramifiedField::new(3, 2, 20)
    }
    fn q81() -> FieldRef {
        UnramifiedField::new(3, 4, 20)
    }

    fn seeded_elems(fld: &FieldRef, n: usize, seed: u64) -> Vec<Raw> {
        // tiny deterministic LCG: tests must not depend on external RNG state
        let mut s = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        let mut out = Vec::new();
        for _ in 0..n {
            let mut c = [0u64; MAX_F];
            for ci in c.iter_mut().take(fld.f) {
                s = s.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
                *ci = s % fld.pm;
            }
            out.push(fld.normalize(Raw { c, expo: 0, prec: fld.work_prec }));
        }
        out
    }

    #[test]
    fn modulus_choices() {
        assert_eq!(&q9().modulus[..2], &[1, 0]); // x² + 1 at p = 3
        let f25 = UnramifiedField::new(5, 2, 10);
        assert_eq!(&f25.modulus[..2], &[2, 0]); // x² + 2 at p = 5
        assert!(irreducible_mod_p(3, 4, &q81().modulus));
    }

    #[test]
    fn modulus_has_no_residue_roots() {
        // exhaustive root search in the residue field (spec invariant)
        for fld in [q9(), q81()] {
            let fq = fld.fq();
            let coeffs: Vec<u64> = fld.modulus[..fld.f].to_vec();
            for e in fq.elements() {
                let mut cm = [0u64; MAX_F];
                for i in 0..fld.f {
                    cm[i] = coeffs[i] % fld.p;
                }
                let v = fq.eval_monic(&cm, fld.f, &e);
                // an F_p-rational root would contradict irreducibility (f ≥ 2)
                if fld.f >= 2 {
                    let lin: Vec<FqEl> = (0..fld.p)
                        .map(|a| {
                            let mut x = [0u64; MAX_F];
                            x[0] = a;
                            x
                        })
                        .collect();
                    if lin.contains(&e) {
                        assert!(!fq.is_zero(&v));
                    }
                }
            }
        }
    }

    #[test]
    fn ring_axioms_random() {
        for fld in [q5(), q9(), q81()] {
            let xs = seeded_elems(&fld, 30, 7);
            for w in xs.chunks(3) {
                if w.len() < 3 {
                    break;
                }
                let (a, b, c) = (&w[0], &w[1], &w[2]);
                let ab_c = fld.mul(&fld.mul(a, b), c);
                let a_bc = fld.mul(a, &fld.mul(b, c));
                assert!(fld.eq_at_min(&ab_c, &a_bc), "associativity");
                let d1 = fld.mul(a, &fld.add(b, c));
                let d2 = fld.add(&fld.mul(a, b), &fld.mul(a, c));
                assert!(fld.eq_at_min(&d1, &d2), "distributivity");
            }
        }
    }

    #[test]
    fn ord_multiplicative() {
        let fld = q9();
        let p2 = fld.p_power(2);
        let x = fld.add(&fld.gen_elem(), &fld.from_i64(1));
        let prod = fld.mul(&p2, &x);
        assert_eq!(fld.ord(&prod), Some(2));
        assert_eq!(fld.ord(&fld.p_power(1)), Some(1));
        assert_eq!(fld.ord(&fld.one()), Some(0));
    }

    #[test]
    fn inversion() {
        for fld in [q5(), q9(), q81()] {
            for x in seeded_elems(&fld, 10, 99) {
                if fld.is_zero(&x) || x.expo != 0 {
                    continue;
                }
                let xi = fld.inv(&x).unwrap();
                assert!(fld.eq_at_min(&fld.mul(&x, &xi), &fld.one()));
            }
        }
    }

    #[test]
    fn frobenius_order_and_ring_maps() {
        for fld in [q9(), q81()] {
            for x in seeded_elems(&fld, 8, 3) {
                let mut y = x;
                for _ in 0..fld.f {
                    y = fld.frobenius(&y);
                }
                assert!(fld.eq_at_min(&y, &x), "σ^f = id");
            }
            let xs = seeded_elems(&fld, 6, 5);
            for w in xs.chunks(2) {
                if w.len() < 2 {
                    break;
                }
                let fxy = fld.frobenius(&fld.mul(&w[0], &w[1]));
                let fxfy = fld.mul(&fld.frobenius(&w[0]), &fld.frobenius(&w[1]));
                assert!(fld.eq_at_min(&fxy, &fxfy), "σ is a ring hom");
            }
            // fixes the prime subfield
            let seven = fld.from_i64(7);
            assert!(fld.eq_at_min(&fld.frobenius(&seven), &seven));
        }
    }

    #[test]
    fn frobenius_of_teichmuller_is_pth_power() {
        // σ_Fr(t) = t^3 for t the Teichmüller generator of Q_{3^2}
        let fld = q9();
        let t = fld.teichmuller(&fld.gen_elem()).unwrap();
        let t3 = fld.pow_i64(&t, 3).unwrap();
        assert!(fld.eq_at_min(&fld.frobenius(&t), &t3));
    }

    #[test]
    fn teichmuller_defining_property() {
        for fld in [q5(), q9(), q81()] {
            let q = fld.p.pow(fld.f as u32) as i64;
            for x in seeded_elems(&fld, 6, 11) {
                if fld.is_zero(&x) || x.expo != 0 {
                    continue;
                }
                let t = fld.teichmuller(&x).unwrap();
                assert!(fld.eq_at_min(&fld.pow_i64(&t, q).unwrap(), &t));
                // t ≡ x (mod p)
                let d = fld.sub(&t, &x);
                assert!(fld.is_zero(&d) || d.expo >= 1);
            }
        }
        // Hensel limit of 2^{5^n} in Q_5 at M = 4
        let f5 = UnramifiedField::new(5, 1, 4);
        let mut h = f5.from_i64(2);
        for _ in 0..6 {
            h = f5.pow_i64(&h, 5).unwrap();
        }
        let t = f5.teichmuller(&f5.from_i64(2)).unwrap();
        assert!(f5.eq_at_min(&t, &h));
    }

    #[test]
    fn logp_basics() {
        for fld in [q5(), q9()] {
            // log(p) = 0 under the Iwasawa branch
            let lp = fld.logp(&fld.p_power(1)).unwrap();
            assert!(fld.is_zero(&lp), "log_p(p) = 0");
            let l1 = fld.logp(&fld.one()).unwrap();
            assert!(fld.is_zero(&l1));
        }
    }

    #[test]
    fn logp_homomorphism() {
        for fld in [q5(), q9(), q81()] {
            let xs = seeded_elems(&fld, 10, 23);
            for w in xs.chunks(2) {
                if w.len() < 2 {
                    break;
                }
                if fld.is_zero(&w[0]) || fld.is_zero(&w[1]) {
                    continue;
                }
                let lhs = fld.logp(&fld.mul(&w[0], &w[1])).unwrap();
                let rhs = fld.add(&fld.logp(&w[0]).unwrap(), &fld.logp(&w[1]).unwrap());
                assert!(fld.eq_at_min(&lhs, &rhs), "log(xy) = log x + log y");
            }
        }
    }

    #[test]
    fn norm_lands_in_subfield() {
        let fld = q81();
        for x in seeded_elems(&fld, 6, 31) {
            let n1 = fld.norm_to_base(&x, 1).unwrap();
            assert!(fld.eq_at_min(&fld.frobenius(&n1), &n1), "norm is Galois-stable");
            let n2 = fld.norm_to_base(&x, 2).unwrap();
            let n2f = fld.frobenius(&fld.frobenius(&n2));
            assert!(fld.eq_at_min(&n2f, &n2));
            assert!(fld.eq_at_min(&fld.norm_to_base(&x, 4).unwrap(), &x));
        }
        assert!(matches!(fld.norm_to_base(&fld.one(), 3), Err(ShcError::DegreeError(3, 4))));
        // norm_to_base(t, 1) = t^{1+p} for f = 2
        let f9 = q9();
        let t = f9.teichmuller(&f9.gen_elem()).unwrap();
        let n = f9.norm_to_base(&t, 1).unwrap();
        let t4 = f9.pow_i64(&t, (1 + f9.p) as i64).unwrap();
        assert!(f9.eq_at_min(&n, &t4));
    }

    #[test]
    fn sqrt_roundtrip() {
        for fld in [q5(), q9(), q81()] {
            for x in seeded_elems(&fld, 10, 41) {
                let sq = fld.mul(&x, &x);
                if fld.is_zero(&sq) {
                    continue;
                }
                let r = fld.sqrt(&sq).unwrap();
                let back = fld.mul(&r, &r);
                assert!(fld.eq_at_min(&back, &sq));
            }
        }
    }

    #[test]
    fn precision_soundness() {
        // recomputing at work_prec+5 and truncating reproduces the answer
        let lo = UnramifiedField::new(3, 2, 12);
        let hi = UnramifiedField::new(3, 2, 17);
        let xs_lo = seeded_elems(&lo, 10, 57);
        let xs_hi = seeded_elems(&hi, 10, 57);
        for i in 0..xs_lo.len() / 2 {
            let (a_lo, b_lo) = (xs_lo[2 * i], xs_lo[2 * i + 1]);
            // build the matching high-precision inputs by reusing digits
            let a_hi = hi.normalize(Raw { c: a_lo.c, expo: 0, prec: 12 });
            let b_hi = hi.normalize(Raw { c: b_lo.c, expo: 0, prec: 12 });
            let _ = &xs_hi;
            let p_lo = lo.mul(&a_lo, &b_lo);
            let p_hi = hi.mul(&a_hi, &b_hi);
            assert_eq!(p_lo.expo, p_hi.expo);
            assert_eq!(p_lo.prec, p_hi.prec);
            assert_eq!(p_lo.c, p_hi.c);
        }
    }

    #[test]
    fn embedding_q9_into_q81() {
        let src = q9();
        let dst = q81();
        let emb = Embedding::new(&src, &dst, 0);
        let xs = seeded_elems(&src, 8, 61);
        for w in xs.chunks(2) {
            if w.len() < 2 {
                break;
            }
            let im = emb.apply(&src.mul(&w[0], &w[1]));
            let im2 = dst.mul(&emb.apply(&w[0]), &emb.apply(&w[1]));
            assert!(dst.eq_at_min(&im, &im2), "embedding is a ring hom");
        }
        // generator image squares to -1 (source modulus x² + 1)
        let gi = emb.gen_image;
        let sq = dst.mul(&gi, &gi);
        assert!(dst.eq_at_min(&sq, &dst.from_i64(-1)));
    }

    #[test]
    fn serialisation_roundtrip() {
        for fld in [q5(), q9(), q81()] {
            for x in seeded_elems(&fld, 8, 71) {
                let e = PadicElem::new(&fld, x);
                let j = e.to_json();
                let back = PadicElem::from_json(&fld, &j).unwrap();
                assert!(e.eq_at_min(&back));
                assert_eq!(j, back.to_json());
            }
            // shifted element
            let x = fld.shift(&fld.from_i64(7), -2);
            let e = PadicElem::new(&fld, x);
            let back = PadicElem::from_json(&fld, &e.to_json()).unwrap();
            assert!(e.eq_at_min(&back));
            assert_eq!(back.raw.expo, e.raw.expo);
        }
    }
}
