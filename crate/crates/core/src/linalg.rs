//! Exact linear algebra over R = (Z/p^W)[g]/(m), the working-precision
//! coefficient ring of an unramified field model.
//!
//! R is a finite chain-ring extension: every element is p^a · unit (or zero),
//! so Gaussian elimination works with min-valuation pivoting and exact
//! division by p-powers.  Kernels are computed through a Howell-style column
//! echelon: alongside ordinary column elimination, every pivot column with
//! p-power p^a (a > 0) respawns as its multiple p^{W−a}·column, which is what
//! captures kernel vectors invisible over a field (e.g. ker(p : Z/p² → Z/p²)).
//!
//! Entries are exact residues `[u64; MAX_F]` — no precision tracking; callers
//! convert to tracked [`Raw`](crate::padic::Raw) values at the boundary.

use crate::padic::{FieldRef, Raw, MAX_F};

pub type Coef = [u64; MAX_F];

/// Dense matrix over R with row-major storage.
#[derive(Clone)]
pub struct Mat {
    pub fld: FieldRef,
    pub nrows: usize,
    pub ncols: usize,
    pub a: Vec<Coef>,
}

/// p-adic valuation of an exact residue, capped at W (zero ⇒ W).
pub fn coef_val(fld: &FieldRef, c: &Coef) -> i64 {
    let mut v = fld.work_prec;
    for i in 0..fld.f {
        if c[i] != 0 {
            let mut x = c[i];
            let mut vi = 0;
            while x % fld.p == 0 {
                x /= fld.p;
                vi += 1;
            }
            if vi < v {
                v = vi;
            }
        }
    }
    v
}

pub fn coef_is_zero(fld: &FieldRef, c: &Coef) -> bool {
    c[..fld.f].iter().all(|&x| x == 0)
}

pub fn coef_from_i64(fld: &FieldRef, n: i64) -> Coef {
    fld.from_i64(n).to_exact(fld)
}

/// Exact division by p^a (each coordinate must be divisible); the result is a
/// representative, well defined mod p^{W−a}, which suffices for elimination.
pub fn coef_div_p(fld: &FieldRef, c: &Coef, a: i64) -> Coef {
    let mut r = [0u64; MAX_F];
    let pa = fld.p.pow(a as u32);
    for i in 0..fld.f {
        debug_assert!(c[i] % pa == 0, "coef_div_p: entry not divisible by p^{a}");
        r[i] = c[i] / pa;
    }
    r
}

/// Inverse of a unit residue (valuation 0).
pub fn coef_inv_unit(fld: &FieldRef, c: &Coef) -> Coef {
    let raw = Raw { c: *c, expo: 0, prec: fld.work_prec };
    let inv = fld.inv(&raw).expect("unit residue");
    debug_assert_eq!(inv.expo, 0);
    inv.to_exact(fld)
}

impl Mat {
    pub fn zeros(fld: &FieldRef, nrows: usize, ncols: usize) -> Mat {
        Mat { fld: fld.clone(), nrows, ncols, a: vec![[0; MAX_F]; nrows * ncols] }
    }

    pub fn identity(fld: &FieldRef, n: usize) -> Mat {
        let mut m = Mat::zeros(fld, n, n);
        for i in 0..n {
            m[(i, i)][0] = 1;
        }
        m
    }

    pub fn from_fn(fld: &FieldRef, nrows: usize, ncols: usize, f: impl Fn(usize, usize) -> Coef) -> Mat {
        let mut m = Mat::zeros(fld, nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.ncols, other.nrows);
        let fld = &self.fld;
        let mut out = Mat::zeros(fld, self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let aik = self[(i, k)];
                if coef_is_zero(fld, &aik) {
                    continue;
                }
                for j in 0..other.ncols {
                    let prod = fld.mul_vec(&aik, &other[(k, j)]);
                    out[(i, j)] = fld.add_vec(&out[(i, j)], &prod);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Coef]) -> Vec<Coef> {
        assert_eq!(self.ncols, v.len());
        let fld = &self.fld;
        let mut out = vec![[0u64; MAX_F]; self.nrows];
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let aik = self[(i, k)];
                if coef_is_zero(fld, &aik) {
                    continue;
                }
                let prod = fld.mul_vec(&aik, &v[k]);
                out[i] = fld.add_vec(&out[i], &prod);
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let fld = &self.fld;
        let mut out = Mat::zeros(fld, self.nrows, self.ncols);
        for i in 0..self.a.len() {
            out.a[i] = fld.sub_vec(&self.a[i], &other.a[i]);
        }
        out
    }

    pub fn scal(&self, c: &Coef) -> Mat {
        let fld = &self.fld;
        let mut out = Mat::zeros(fld, self.nrows, self.ncols);
        for i in 0..self.a.len() {
            out.a[i] = fld.mul_vec(&self.a[i], c);
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = Coef;
    fn index(&self, (i, j): (usize, usize)) -> &Coef {
        &self.a[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Coef {
        &mut self.a[i * self.ncols + j]
    }
}

/// Column-echelon data for A: columns of the original matrix combined by
/// invertible operations (plus Howell respawns), with the combination
/// recorded, so that both kernels and linear solves read off directly.
pub struct Echelon {
    /// echelon columns: each is (top: Vec<Coef> len nrows, bot: Vec<Coef> len ncols)
    /// where top = A · bot
    cols: Vec<(Vec<Coef>, Vec<Coef>)>,
    /// (row, index into cols, pivot exponent a): pivot entry is exactly p^a
    pivots: Vec<(usize, usize, i64)>,
    fld: FieldRef,
    nrows: usize,
    ncols: usize,
}

/// Howell-style column echelon of A over R.
pub fn echelonize(mat: &Mat) -> Echelon {
    let fld = mat.fld.clone();
    let w = fld.work_prec;
    let (m, n) = (mat.nrows, mat.ncols);
    // column j of the working stack: top = A e_j, bottom = e_j
    let mut cols: Vec<(Vec<Coef>, Vec<Coef>)> = (0..n)
        .map(|j| {
            let top: Vec<Coef> = (0..m).map(|i| mat[(i, j)]).collect();
            let mut bot = vec![[0u64; MAX_F]; n];
            bot[j][0] = 1;
            (top, bot)
        })
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut pivots: Vec<(usize, usize, i64)> = Vec::new();
    for r in 0..m {
        // pick the active column with minimal valuation at row r
        let mut best: Option<(i64, usize)> = None;
        for (pos, &ci) in active.iter().enumerate() {
            let v = coef_val(&fld, &cols[ci].0[r]);
            if v < w && best.map_or(true, |(bv, _)| v < bv) {
                best = Some((v, pos));
            }
        }
        let Some((a, pos)) = best else { continue };
        let ci = active.swap_remove(pos);
        // scale the pivot column so the pivot entry is exactly p^a
        let unit = coef_div_p(&fld, &cols[ci].0[r], a);
        let uinv = coef_inv_unit(&fld, &unit);
        scale_col(&fld, &mut cols[ci], &uinv);
        // eliminate row r from all remaining active columns
        for &cj in &active {
            let e = cols[cj].0[r];
            if coef_is_zero(&fld, &e) {
                continue;
            }
            let q = coef_div_p(&fld, &e, a); // val(e) ≥ a by pivot minimality
            let (pivot_col, target) = index_two(&mut cols, ci, cj);
            axpy_col(&fld, target, &q, pivot_col);
        }
        // Howell respawn: p^{W−a}·(pivot column) has zero top down to row r
        if a > 0 {
            let mut spawn = cols[ci].clone();
            let mut sc = [0u64; MAX_F];
            sc[0] = fld.p.pow((w - a) as u32);
            scale_col(&fld, &mut spawn, &sc);
            // rows ≤ r are annihilated exactly (p^{W-a}·p^a = p^W ≡ 0)
            if !spawn.0.iter().all(|c| coef_is_zero(&fld, c))
                || !spawn.1.iter().all(|c| coef_is_zero(&fld, c))
            {
                cols.push(spawn);
                active.push(cols.len() - 1);
            }
        }
        pivots.push((r, ci, a));
    }
    // remaining active columns have zero top part: keep everything
    Echelon { cols, pivots, fld, nrows: m, ncols: n }
}

fn scale_col(fld: &FieldRef, col: &mut (Vec<Coef>, Vec<Coef>), s: &Coef) {
    for c in col.0.iter_mut().chain(col.1.iter_mut()) {
        *c = fld.mul_vec(c, s);
    }
}

/// target -= q · pivot, on both top and bottom parts.
fn axpy_col(fld: &FieldRef, target: &mut (Vec<Coef>, Vec<Coef>), q: &Coef, pivot: &(Vec<Coef>, Vec<Coef>)) {
    for (t, p) in target.0.iter_mut().zip(pivot.0.iter()) {
        *t = fld.sub_vec(t, &fld.mul_vec(q, p));
    }
    for (t, p) in target.1.iter_mut().zip(pivot.1.iter()) {
        *t = fld.sub_vec(t, &fld.mul_vec(q, p));
    }
}

fn index_two<T>(v: &mut [T], i: usize, j: usize) -> (&T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (a, b) = v.split_at_mut(j);
        (&a[i], &mut b[0])
    } else {
        let (a, b) = v.split_at_mut(i);
        (&b[0], &mut a[j])
    }
}

impl Echelon {
    /// Number of unit pivots (the rank of the reduction mod p).
    pub fn unit_rank(&self) -> usize {
        self.pivots.iter().filter(|&&(_, _, a)| a == 0).count()
    }

    pub fn pivot_exponents(&self) -> Vec<i64> {
        self.pivots.iter().map(|&(_, _, a)| a).collect()
    }

    /// Generators of {x : A x = 0} over R: bottom parts of all columns whose
    /// top part vanished (never-pivot columns and exhausted Howell respawns).
    pub fn kernel(&self) -> Vec<Vec<Coef>> {
        let pivot_set: Vec<usize> = self.pivots.iter().map(|&(_, ci, _)| ci).collect();
        let mut out = Vec::new();
        for (ci, col) in self.cols.iter().enumerate() {
            if pivot_set.contains(&ci) {
                continue;
            }
            if col.0.iter().all(|c| coef_is_zero(&self.fld, c))
                && !col.1.iter().all(|c| coef_is_zero(&self.fld, c))
            {
                out.push(col.1.clone());
            }
        }
        out
    }

    /// A particular solution of A x = b, or None when none exists over R.
    pub fn solve(&self, b: &[Coef]) -> Option<Vec<Coef>> {
        assert_eq!(b.len(), self.nrows);
        let fld = &self.fld;
        let mut residual = b.to_vec();
        let mut x = vec![[0u64; MAX_F]; self.ncols];
        for &(r, ci, a) in &self.pivots {
            let e = residual[r];
            if coef_is_zero(fld, &e) {
                continue;
            }
            if coef_val(fld, &e) < a {
                return None;
            }
            let q = coef_div_p(fld, &e, a);
            let col = &self.cols[ci];
            for i in 0..self.nrows {
                residual[i] = fld.sub_vec(&residual[i], &fld.mul_vec(&q, &col.0[i]));
            }
            for j in 0..self.ncols {
                x[j] = fld.add_vec(&x[j], &fld.mul_vec(&q, &col.1[j]));
            }
        }
        if residual.iter().all(|c| coef_is_zero(fld, c)) {
            Some(x)
        } else {
            None
        }
    }
}

/// Kernel with a built-in verification pass (A·x = 0 for every generator).
pub fn kernel(mat: &Mat) -> Vec<Vec<Coef>> {
    let ech = echelonize(mat);
    let ker = ech.kernel();
    for v in &ker {
        let img = mat.apply(v);
        assert!(
            img.iter().all(|c| coef_is_zero(&mat.fld, c)),
            "kernel verification failed"
        );
    }
    ker
}

/// Reduce a list of vectors to a minimal generating set (columns of the Howell
/// echelon of the matrix whose columns are the vectors), and scale each
/// generator so its minimum valuation is 0 when possible.
pub fn saturate_generators(fld: &FieldRef, vecs: &[Vec<Coef>]) -> Vec<Vec<Coef>> {
    if vecs.is_empty() {
        return Vec::new();
    }
    let n = vecs[0].len();
    let m = Mat::from_fn(fld, n, vecs.len(), |i, j| vecs[j][i]);
    let ech = echelonize(&m);
    let mut out = Vec::new();
    for &(_, ci, _) in &ech.pivots {
        let mut v: Vec<Coef> = ech.cols[ci].0.clone();
        // normalise: divide by the gcd p-power
        let minv = v.iter().map(|c| coef_val(fld, c)).min().unwrap_or(0);
        if minv > 0 && minv < fld.work_prec {
            for c in v.iter_mut() {
                *c = coef_div_p(fld, c, minv);
            }
        }
        if !v.iter().all(|c| coef_is_zero(fld, c)) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::UnramifiedField;

    fn q3(w: i64) -> FieldRef {
        UnramifiedField::new(3, 1, w)
    }

    fn c(fld: &FieldRef, n: i64) -> Coef {
        coef_from_i64(fld, n)
    }

    #[test]
    fn kernel_of_p_scalar() {
        // ker(p : Z/p³ → Z/p³) = p²·Z/p³ — only visible through Howell respawns
        let fld = q3(3);
        let m = Mat::from_fn(&fld, 1, 1, |_, _| c(&fld, 3));
        let ker = kernel(&m);
        assert_eq!(ker.len(), 1);
        assert_eq!(coef_val(&fld, &ker[0][0]), 2);
    }

    #[test]
    fn kernel_mixed_rank() {
        // A = [[1, 3], [0, 9]] over Z/3^4: Ax=0 ⇒ x2·9 ≡ 0 ⇒ x2 ∈ 9·Z, x1 = -3x2
        let fld = q3(4);
        let m = Mat::from_fn(&fld, 2, 2, |i, j| match (i, j) {
            (0, 0) => c(&fld, 1),
            (0, 1) => c(&fld, 3),
            (1, 1) => c(&fld, 9),
            _ => c(&fld, 0),
        });
        let ker = kernel(&m);
        assert!(!ker.is_empty());
        // the minimal valuation solution must have val(x2) = 2
        let best = ker.iter().map(|v| coef_val(&fld, &v[1])).min().unwrap();
        assert_eq!(best, 2);
    }

    #[test]
    fn solve_basic() {
        let fld = q3(6);
        // invertible 2x2
        let m = Mat::from_fn(&fld, 2, 2, |i, j| match (i, j) {
            (0, 0) => c(&fld, 2),
            (0, 1) => c(&fld, 1),
            (1, 0) => c(&fld, 1),
            (1, 1) => c(&fld, 1),
        _ => unreachable!(),
        });
        let b = vec![c(&fld, 5), c(&fld, 4)];
        let ech = echelonize(&m);
        let x = ech.solve(&b).unwrap();
        let back = m.apply(&x);
        assert_eq!(back[0], b[0]);
        assert_eq!(back[1], b[1]);
        // x = (1, 3)
        assert_eq!(x[0], c(&fld, 1));
        assert_eq!(x[1], c(&fld, 3));
    }

    #[test]
    fn solve_requires_divisibility() {
        let fld = q3(4);
        let m = Mat::from_fn(&fld, 1, 1, |_, _| c(&fld, 3));
        let ech = echelonize(&m);
        assert!(ech.solve(&[c(&fld, 1)]).is_none(), "3x = 1 unsolvable in Z/81");
        let x = ech.solve(&[c(&fld, 6)]).unwrap();
        assert_eq!(fld.mul_vec(&x[0], &c(&fld, 3)), c(&fld, 6));
    }

    #[test]
    fn kernel_random_consistency() {
        // random 4x6 matrices over Z/3^5: every kernel generator annihilates,
        // and the kernel of an invertible matrix is trivial
        let fld = q3(5);
        let mut seed = 12345u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as i64 % 243
        };
        for _ in 0..10 {
            let entries: Vec<i64> = (0..24).map(|_| next()).collect();
            let m = Mat::from_fn(&fld, 4, 6, |i, j| c(&fld, entries[i * 6 + j]));
            let _ = kernel(&m); // panics internally on verification failure
        }
        let id = Mat::identity(&fld, 5);
        assert!(kernel(&id).is_empty());
    }

    #[test]
    fn kernel_in_extension_field() {
        // over R = (Z/3^4)[i]: column relation col2 = (1+i)·col1
        let fld = UnramifiedField::new(3, 2, 4);
        let one_plus_i = {
            let g = fld.gen_elem();
            fld.add(&g, &fld.from_i64(1)).to_exact(&fld)
        };
        let a11 = c(&fld, 2);
        let a21 = {
            let g = fld.gen_elem();
            fld.mul_i64(&g, 5).to_exact(&fld)
        };
        let m = Mat::from_fn(&fld, 2, 2, |i, j| {
            let base = if i == 0 { a11 } else { a21 };
            if j == 0 {
                base
            } else {
                fld.mul_vec(&base, &one_plus_i)
            }
        });
        let ker = kernel(&m);
        assert!(!ker.is_empty());
        let unit_gen = ker.iter().find(|v| coef_val(&fld, &v[1]) == 0);
        assert!(unit_gen.is_some(), "kernel contains (−(1+i), 1)·unit");
    }
}
