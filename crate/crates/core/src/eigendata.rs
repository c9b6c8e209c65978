//! Hecke eigen-data for a p-new Bianchi eigenform: validated packets,
//! acquisition from files, and computation from an elliptic curve over F by
//! point counting over residue fields.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::errors::{Result, ShcError};
use crate::numfield::{self, fe_parse, fe_string, BaseField, Fe, Ideal, ResidueRing};

/// Weierstrass data [a1, a2, a3, a4, a6] over O_F.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Curve {
    pub a1: Fe,
    pub a2: Fe,
    pub a3: Fe,
    pub a4: Fe,
    pub a6: Fe,
}

impl Curve {
    pub fn new(a: [i128; 5]) -> Curve {
        Curve {
            a1: Fe::from_int(a[0]),
            a2: Fe::from_int(a[1]),
            a3: Fe::from_int(a[2]),
            a4: Fe::from_int(a[3]),
            a6: Fe::from_int(a[4]),
        }
    }

    /// The standard discriminant Δ.
    pub fn discriminant(&self, fld: &BaseField) -> Fe {
        let m = |x: &Fe, y: &Fe| fld.mul(x, y);
        let ai = |x: &Fe, n: i128| fld.mul_int(x, n);
        let b2 = fld.add(&m(&self.a1, &self.a1), &ai(&self.a2, 4));
        let b4 = fld.add(&ai(&self.a4, 2), &m(&self.a1, &self.a3));
        let b6 = fld.add(&m(&self.a3, &self.a3), &ai(&self.a6, 4));
        let b8 = {
            let t1 = m(&m(&self.a1, &self.a1), &self.a6);
            let t2 = ai(&m(&self.a2, &self.a6), 4);
            let t3 = m(&m(&self.a1, &self.a3), &self.a4);
            let t4 = m(&self.a2, &m(&self.a3, &self.a3));
            let t5 = m(&self.a4, &self.a4);
            fld.sub(&fld.add(&fld.add(&t1, &t2), &t4), &fld.add(&t3, &t5))
        };
        let d1 = m(&m(&b2, &b2), &b8);
        let d2 = ai(&m(&b4, &m(&b4, &b4)), 8);
        let d3 = ai(&m(&b6, &b6), 27);
        let d4 = ai(&m(&b2, &m(&b4, &b6)), 9);
        fld.sub(&d4, &fld.add(&fld.add(&d1, &d2), &d3))
    }
}

/// a_q = N(q) + 1 − #E(O_F/q) by exhaustive enumeration of the residue
/// field (weight k = 0 only; N(q) ≤ 10⁴).
pub fn count_points(fld: &BaseField, e: &Curve, q: &Ideal, k: i64) -> Result<i128> {
    assert_eq!(k, 0, "point counting covers weight 0 only");
    assert!(q.norm <= 10_000, "residue field too large for enumeration");
    if !numfield::is_prime_ideal(fld, q) {
        return Err(ShcError::NotPrime(q.key()));
    }
    let rr = ResidueRing::new(fld, &q.gen);
    let disc = e.discriminant(fld);
    if !rr.is_unit(&disc) {
        return Err(ShcError::BadReduction(q.key()));
    }
    let elems = rr.elements();
    let n = elems.len() as i128;
    let char2 = n % 2 == 0;
    // squares table for the quadratic-solution count (odd characteristic)
    let mut squares = std::collections::HashSet::new();
    if !char2 {
        for z in &elems {
            let s = rr.mul(z, z);
            squares.insert((s.a, s.b));
        }
    }
    let mut affine: i128 = 0;
    for x in &elems {
        let x2 = rr.mul(x, x);
        let x3 = rr.mul(&x2, x);
        // f(x) = x³ + a2x² + a4x + a6 and the linear y-coefficient a1x + a3
        let fx = rr.reduce(&fld.add(
            &fld.add(&x3, &fld.mul(&e.a2, &x2)),
            &fld.add(&fld.mul(&e.a4, x), &e.a6),
        ));
        let lin = rr.reduce(&fld.add(&fld.mul(&e.a1, x), &e.a3));
        if char2 {
            for y in &elems {
                let lhs = rr.reduce(&fld.add(&fld.mul(y, y), &fld.mul(&lin, y)));
                if rr.eq(&lhs, &fx) {
                    affine += 1;
                }
            }
        } else {
            // y² + lin·y − fx = 0 has 1 + χ(lin² + 4·fx) solutions
            let dy = rr.reduce(&fld.add(&fld.mul(&lin, &lin), &fld.mul_int(&fx, 4)));
            if rr.eq(&dy, &numfield::ZERO) {
                affine += 1;
            } else if squares.contains(&(dy.a, dy.b)) {
                affine += 2;
            }
        }
    }
    Ok(n + 1 - (affine + 1))
}

/// Validated Hecke eigen-data for a p-new eigenform of level N = p·M.
#[derive(Clone, Debug)]
pub struct EigenPacket {
    pub field: BaseField,
    pub level: Ideal,
    pub prime: Ideal,
    pub m_ideal: Ideal,
    pub weight: i64,
    pub ap: i128,
    pub omega: i32,
    pub is_base_change: bool,
    pub label: String,
    /// eigenvalues keyed by canonical ideal generator strings
    pub eigenvalues: BTreeMap<String, i128>,
}

/// On-disk form (schema shc-eigen/1).
#[derive(Serialize, Deserialize)]
struct PacketJson {
    schema: String,
    field_d: i64,
    level: String,
    prime: String,
    weight: i64,
    ap: i128,
    omega: i32,
    base_change: bool,
    label: String,
    eigenvalues: BTreeMap<String, i128>,
}

impl EigenPacket {
    /// Assemble and validate a packet from its raw constituents.
    pub fn assemble(
        field: BaseField,
        level: Ideal,
        prime: Ideal,
        weight: i64,
        ap: i128,
        omega: i32,
        is_base_change: bool,
        label: &str,
        eigenvalues: BTreeMap<String, i128>,
    ) -> Result<EigenPacket> {
        let m_ideal = level
            .quotient(&field, &prime)
            .ok_or_else(|| ShcError::InvariantViolation("p divides the level".into()))?;
        let pk = EigenPacket {
            field,
            level,
            prime,
            m_ideal,
            weight,
            ap,
            omega,
            is_base_change,
            label: label.to_string(),
            eigenvalues,
        };
        pk.validate()?;
        Ok(pk)
    }

    pub fn validate(&self) -> Result<()> {
        let fld = &self.field;
        if self.weight < 0 || self.weight % 2 != 0 {
            return Err(ShcError::InvariantViolation("weight must be even and ≥ 0".into()));
        }
        if !numfield::is_squarefree_ideal(fld, &self.level) {
            return Err(ShcError::LevelNotSquarefree(self.level.key()));
        }
        if !numfield::is_prime_ideal(fld, &self.prime) {
            return Err(ShcError::NotPrime(self.prime.key()));
        }
        if self.prime.divides(fld, &self.m_ideal) {
            return Err(ShcError::PrimeDividesM(self.prime.key()));
        }
        if self.omega != 1 && self.omega != -1 {
            return Err(ShcError::InvariantViolation("ω must be ±1".into()));
        }
        // p-newness: ap = −ω·N(p)^{k/2}
        let half = (self.weight / 2) as u32;
        let expect = -(self.omega as i128) * self.prime.norm.pow(half);
        if self.ap != expect {
            return Err(ShcError::InvariantViolation("p-new".into()));
        }
        // normalisation: the unit ideal, when stored, carries 1
        if let Some(&a1) = self.eigenvalues.get(&fe_string(&numfield::ONE)) {
            if a1 != 1 {
                return Err(ShcError::InvariantViolation("a_(1) = 1".into()));
            }
        }
        // Ramanujan sanity filter at stored primes: a_q² ≤ 4·N(q)^{k+1}
        for (key, &aq) in &self.eigenvalues {
            let g = fe_parse(key).map_err(|_| ShcError::SchemaError(format!("bad ideal key {key}")))?;
            let ideal = Ideal::new(fld, g);
            if ideal.is_one() {
                continue;
            }
            if numfield::is_prime_ideal(fld, &ideal) {
                let bound = 4 * ideal.norm.pow(self.weight as u32 + 1);
                if aq * aq > bound {
                    return Err(ShcError::InvariantViolation(format!(
                        "Ramanujan bound violated at {key}"
                    )));
                }
            }
        }
        // multiplicativity at coprime composites, when both factors are stored
        for (key, &aqq) in &self.eigenvalues {
            let g = fe_parse(key).unwrap();
            let ideal = Ideal::new(fld, g);
            if ideal.is_one() || numfield::is_prime_ideal(fld, &ideal) {
                continue;
            }
            let factors = numfield::factor_ideal(fld, &ideal);
            if factors.iter().any(|(_, e)| *e > 1) {
                continue;
            }
            let mut prod: i128 = 1;
            let mut complete = true;
            for (q, _) in &factors {
                match self.eigenvalues.get(&q.key()) {
                    Some(&a) => prod *= a,
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete && prod != aqq {
                return Err(ShcError::InvariantViolation(format!(
                    "multiplicativity fails at {key}"
                )));
            }
        }
        // base change: invariance under ideal conjugation
        if self.is_base_change {
            for (key, &aq) in &self.eigenvalues {
                let g = fe_parse(key).unwrap();
                let conj = Ideal::new(fld, fld.conj(&g));
                if let Some(&ac) = self.eigenvalues.get(&conj.key()) {
                    if ac != aq {
                        return Err(ShcError::InvariantViolation(format!(
                            "base-change conjugation fails at {key}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Eigenvalue at a prime ideal, if stored (the prime p uses `ap`).
    pub fn a_q(&self, q: &Ideal) -> Option<i128> {
        if *q == self.prime {
            return Some(self.ap);
        }
        self.eigenvalues.get(&q.key()).copied()
    }

    /// Eq. (A.5): the level-raising matrix determinant bound,
    /// (N(p)+1)² − N(p)^{−k}·ap² ≥ 2·N(p)+1 (cleared of denominators).
    pub fn level_matrix_check(&self) -> bool {
        let np = self.prime.norm;
        let nk = np.pow(self.weight as u32);
        (np + 1) * (np + 1) * nk - self.ap * self.ap >= (2 * np + 1) * nk
    }

    /// Build a weight-0 packet by point counting on a curve of conductor
    /// level = p·M: eigenvalues at all good primes q ∤ N with N(q) ≤ bound.
    pub fn from_curve(
        field: BaseField,
        e: &Curve,
        prime: Ideal,
        m_ideal: Ideal,
        omega: i32,
        bound: i128,
        is_base_change: bool,
        label: &str,
    ) -> Result<EigenPacket> {
        let level = prime.mul(&field, &m_ideal);
        let mut eigenvalues = BTreeMap::new();
        eigenvalues.insert(fe_string(&numfield::ONE), 1);
        for q in small_primes(&field, bound) {
            if q.divides(&field, &level) {
                continue;
            }
            let aq = count_points(&field, e, &q, 0)?;
            eigenvalues.insert(q.key(), aq);
        }
        EigenPacket::assemble(
            field,
            level,
            prime,
            0,
            -(omega as i128),
            omega,
            is_base_change,
            label,
            eigenvalues,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let j = PacketJson {
            schema: "shc-eigen/1".into(),
            field_d: -(self.field.d as i64),
            level: self.level.key(),
            prime: self.prime.key(),
            weight: self.weight,
            ap: self.ap,
            omega: self.omega,
            base_change: self.is_base_change,
            label: self.label.clone(),
            eigenvalues: self.eigenvalues.clone(),
        };
        let data = serde_json::to_string_pretty(&j)?;
        std::fs::write(path, data)?;
        Ok(())
    }
}

/// All prime ideals of norm ≤ bound (canonical generators, conjugates listed
/// separately), sorted by norm then key.
pub fn small_primes(fld: &BaseField, bound: i128) -> Vec<Ideal> {
    let mut out = Vec::new();
    let mut ell: i128 = 2;
    while ell * ell <= bound || ell <= bound {
        if is_rational_prime_i128(ell) {
            for q in fld.primes_above(ell as u64).unwrap_or_default() {
                if q.norm <= bound {
                    out.push(q);
                }
            }
        }
        ell += 1;
    }
    out.sort_by(|a, b| (a.norm, a.key()).cmp(&(b.norm, b.key())));
    out.dedup();
    out
}

fn is_rational_prime_i128(n: i128) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Load and validate a packet, checking it against expected metadata.
pub fn load_packet(
    path: &Path,
    expected_field: &BaseField,
    expected_level: &Ideal,
    expected_weight: i64,
) -> Result<EigenPacket> {
    let data = std::fs::read_to_string(path)?;
    let j: PacketJson = serde_json::from_str(&data)
        .map_err(|e| ShcError::SchemaError(format!("shc-eigen parse: {e}")))?;
    if j.schema != "shc-eigen/1" {
        return Err(ShcError::SchemaError(format!("unsupported schema {}", j.schema)));
    }
    if j.field_d != -(expected_field.d as i64) {
        return Err(ShcError::MetadataMismatch(format!(
            "field_d {} ≠ expected {}",
            j.field_d,
            -(expected_field.d as i64)
        )));
    }
    let level_gen = fe_parse(&j.level).map_err(|_| ShcError::SchemaError("bad level key".into()))?;
    let level = Ideal::new(expected_field, level_gen);
    if level != *expected_level {
        return Err(ShcError::MetadataMismatch(format!(
            "level {} ≠ expected {}",
            level.key(),
            expected_level.key()
        )));
    }
    if j.weight != expected_weight {
        return Err(ShcError::MetadataMismatch(format!(
            "weight {} ≠ expected {}",
            j.weight, expected_weight
        )));
    }
    let prime_gen = fe_parse(&j.prime).map_err(|_| ShcError::SchemaError("bad prime key".into()))?;
    let prime = Ideal::new(expected_field, prime_gen);
    EigenPacket::assemble(
        *expected_field,
        level,
        prime,
        j.weight,
        j.ap,
        j.omega,
        j.base_change,
        &j.label,
        j.eigenvalues,
    )
}

/// Report the prime-ideal keys below `bound` (excluding divisors of the
/// level) missing from the packet — used for the gap diagnostics of
/// load-time schema checks.
pub fn missing_primes(pk: &EigenPacket, bound: i128) -> Vec<String> {
    small_primes(&pk.field, bound)
        .into_iter()
        .filter(|q| !q.divides(&pk.field, &pk.level))
        .map(|q| q.key())
        .filter(|k| !pk.eigenvalues.contains_key(k))
        .collect()
}

/// Require completeness of the eigenvalue table up to `bound`.
pub fn require_primes(pk: &EigenPacket, bound: i128) -> Result<()> {
    let gaps = missing_primes(pk, bound);
    if gaps.is_empty() {
        Ok(())
    } else {
        Err(ShcError::SchemaError(format!("missing eigenvalues at {}", gaps.join(", "))))
    }
}

/// The base-change test curve: 15a1, y² + xy + y = x³ + x² − 10x − 10,
/// conductor (15) over any F where 15 remains squarefree.
pub fn curve_15a1() -> Curve {
    Curve::new([1, 1, 1, -10, -10])
}
