use shc::linalg::{self, Mat};
use shc::modsym::ManinPresentation;
use shc::numfield::{fe_string, BaseField, Fe, Ideal};
use shc::padic::UnramifiedField;

fn main() {
    let base = BaseField::new(1).unwrap();
    let level = Ideal::new(&base, Fe::from_int(15));
    for (name, prime, fld) in [
        ("split", Fe::new(2, 1), UnramifiedField::new(5, 1, 18)),
        ("inert", Fe::from_int(3), UnramifiedField::new(3, 2, 14)),
    ] {
        println!("== {name} p = {}", fe_string(&prime));
        let pres = ManinPresentation::build(base, level, 2, &fld, &prime).unwrap();
        let s = pres.basis.len();
        println!("  saturated k=2 dim = {s}");
        if s == 0 {
            continue;
        }
        let fldr = pres.fld().clone();
        for qg in [
            Fe::new(1, 1),
            Fe::new(3, 2),
            Fe::new(2, 1),
            Fe::new(2, -1),
            Fe::from_int(3),
            Fe::from_int(7),
        ] {
            let q = Ideal::new(&base, qg);
            let m = match pres.hecke_matrix(&q) {
                Ok(m) => m,
                Err(e) => {
                    println!("  T_{} failed: {e:?}", fe_string(&qg));
                    continue;
                }
            };
            // integer eigenvalue scan: dim ker(T - a) for small integers a
            let bound = 4 * (q.norm as i64) * (q.norm as f64).sqrt() as i64 + 40;
            let mut found = Vec::new();
            for a in -bound..=bound {
                let ar = fldr.from_i64(a);
                let emin = m.iter().filter(|r| !fldr.is_zero(r)).map(|r| r.expo).min().unwrap_or(0).min(0);
                let mm = Mat::from_fn(&fldr, s, s, |i, j| {
                    let mut v = m[i * s + j];
                    if i == j {
                        v = fldr.sub(&v, &ar);
                    }
                    fldr.shift(&v, -emin).to_exact(&fldr)
                });
                let k = linalg::kernel(&mm).len();
                if k > 0 {
                    found.push((a, k));
                }
            }
            println!("  T_{} integer eigenvalues (a, dim): {:?}", fe_string(&qg), found);
        }
    }
}
