//! Reference computations used by the integration tests. Each one takes a route
//! that shares no code with the library path it checks.
#![allow(dead_code)]

use std::f64::consts::PI;

use edgecalc::deformation::Embedding;
use edgecalc::grid::{make_model_grid, ModelGrid, ScalarField};
use num_complex::Complex64;

pub fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn grid(t_half: f64, n_t: usize, n_sigma: usize, n_u: usize) -> ModelGrid {
    make_model_grid(1, 1, t_half, n_t, n_sigma, n_u, 0.5, 0.1, 0.3).unwrap()
}

// ---------------------------------------------------------------------------
// double-double arithmetic

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi));
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cdd {
    pub re: Dd,
    pub im: Dd,
}

impl Cdd {
    pub const ZERO: Cdd = Cdd {
        re: Dd::ZERO,
        im: Dd::ZERO,
    };

    pub fn from(z: Complex64) -> Self {
        Cdd {
            re: Dd::from(z.re),
            im: Dd::from(z.im),
        }
    }

    pub fn add(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.add(o.re),
            im: self.im.add(o.im),
        }
    }

    pub fn sub(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.sub(o.re),
            im: self.im.sub(o.im),
        }
    }

    pub fn mul(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.mul(o.re).sub(self.im.mul(o.im)),
            im: self.re.mul(o.im).add(self.im.mul(o.re)),
        }
    }

    pub fn div(self, o: Cdd) -> Cdd {
        let den = o.re.mul(o.re).add(o.im.mul(o.im));
        let num = self.mul(Cdd {
            re: o.re,
            im: o.im.neg(),
        });
        Cdd {
            re: num.re.div(den),
            im: num.im.div(den),
        }
    }

    pub fn norm(self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

fn poly_mul(a: &[Cdd], b: &[Cdd]) -> Vec<Cdd> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![Cdd::ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(x.mul(*y));
        }
    }
    out
}

fn poly_add(a: &[Cdd], b: &[Cdd], negate: bool) -> Vec<Cdd> {
    let mut out = vec![Cdd::ZERO; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] = *x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] = if negate {
            out[i].sub(*y)
        } else {
            out[i].add(*y)
        };
    }
    out
}

/// Determinant of a square matrix of polynomials (ascending coefficients) by Laplace
/// expansion along rows, memoized on the set of used columns.
pub fn laplace_det(entries: &[Vec<Vec<Complex64>>]) -> Vec<Cdd> {
    let n = entries.len();
    let mut memo: Vec<Option<Vec<Cdd>>> = vec![None; 1 << n];
    fn rec(
        row: usize,
        mask: usize,
        e: &[Vec<Vec<Complex64>>],
        memo: &mut Vec<Option<Vec<Cdd>>>,
    ) -> Vec<Cdd> {
        let n = e.len();
        if row == n {
            return vec![Cdd::from(Complex64::new(1.0, 0.0))];
        }
        if let Some(v) = &memo[mask] {
            return v.clone();
        }
        let mut acc: Vec<Cdd> = vec![];
        for j in 0..n {
            if mask & (1 << j) != 0 || e[row][j].iter().all(|x| *x == Complex64::new(0.0, 0.0)) {
                continue;
            }
            // sign: position of j among the columns still free
            let before = (0..j).filter(|&k| mask & (1 << k) == 0).count();
            let entry: Vec<Cdd> = e[row][j].iter().map(|x| Cdd::from(*x)).collect();
            let term = poly_mul(&entry, &rec(row + 1, mask | (1 << j), e, memo));
            acc = poly_add(&acc, &term, before % 2 == 1);
        }
        memo[mask] = Some(acc.clone());
        acc
    }
    let mut p = rec(0, 0, entries, &mut memo);
    while p.last().map(|x| x.norm() == 0.0).unwrap_or(false) {
        p.pop();
    }
    p
}

fn horner_dd(p: &[Cdd], z: Cdd) -> Cdd {
    p.iter().rev().fold(Cdd::ZERO, |acc, a| acc.mul(z).add(*a))
}

/// All roots of a polynomial by Durand-Kerner iteration in double-double arithmetic.
pub fn durand_kerner(p: &[Cdd]) -> Vec<Complex64> {
    let deg = p.len() - 1;
    if deg == 0 {
        return vec![];
    }
    let lead = p[deg];
    let monic: Vec<Cdd> = p.iter().map(|a| a.div(lead)).collect();
    let bound = 1.0 + monic[..deg].iter().map(|a| a.norm()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Cdd> = (0..deg)
        .map(|k| Cdd::from(seed.powu(k as u32) * (bound / 2.0).max(0.5)))
        .collect();
    for _ in 0..20_000 {
        let mut worst: f64 = 0.0;
        for i in 0..deg {
            let mut den = Cdd::from(Complex64::new(1.0, 0.0));
            for j in 0..deg {
                if i != j {
                    den = den.mul(z[i].sub(z[j]));
                }
            }
            let step = horner_dd(&monic, z[i]).div(den);
            z[i] = z[i].sub(step);
            worst = worst.max(step.norm() / z[i].norm().max(1.0));
        }
        if worst < 1e-30 {
            break;
        }
    }
    z.into_iter().map(|x| x.to_c64()).collect()
}

/// Roots clustered within `radius`, as `(centre, count)`.
pub fn cluster(mut roots: Vec<Complex64>, radius: f64) -> Vec<(Complex64, usize)> {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut out: Vec<(Vec<Complex64>, usize)> = Vec::new();
    for z in roots {
        match out.iter_mut().find(|(m, _)| (m[0] - z).norm() < radius) {
            Some(e) => {
                e.0.push(z);
                e.1 += 1;
            }
            None => out.push((vec![z], 1)),
        }
    }
    out.into_iter()
        .map(|(m, n)| (m.iter().sum::<Complex64>() / m.len() as f64, n))
        .collect()
}

/// Newton on the `(mult - 1)`-th derivative, where a root of multiplicity `mult` is simple.
pub fn polish_multiple(p: &[Cdd], z: Complex64, mult: usize) -> Complex64 {
    let deriv = |q: &[Cdd]| -> Vec<Cdd> {
        q.iter()
            .enumerate()
            .skip(1)
            .map(|(i, a)| a.mul(Cdd::from(Complex64::new(i as f64, 0.0))))
            .collect()
    };
    let mut q = p.to_vec();
    for _ in 1..mult {
        q = deriv(&q);
    }
    let dq = deriv(&q);
    let mut x = Cdd::from(z);
    for _ in 0..60 {
        let step = horner_dd(&q, x).div(horner_dd(&dq, x));
        x = x.sub(step);
        if step.norm() < 1e-30 {
            break;
        }
    }
    x.to_c64()
}

/// Clustered roots of `p`, each refined at its multiplicity.
pub fn oracle_roots(p: &[Cdd], radius: f64) -> Vec<(Complex64, usize)> {
    cluster(durand_kerner(p), radius)
        .into_iter()
        .map(|(z, m)| (polish_multiple(p, z, m), m))
        .collect()
}

// ---------------------------------------------------------------------------
// brute-force Sobolev quadrature

/// `sum (1 + shift + rho^2 + k^2)^s |F g|^2 / (2T (2 pi)^m)` with every Fourier
/// coefficient formed as an explicit sum over nodes (no FFT), on a `q = 0` grid.
pub fn brute_hs_sq(g: &ScalarField, s: f64, shift: f64) -> f64 {
    let gr = &g.grid;
    assert_eq!(gr.q, 0);
    let (nt, ns) = (gr.n_t, gr.n_sigma);
    let dt = 2.0 * gr.t_half / nt as f64;
    let ds = 2.0 * PI / ns as f64;
    let modes = |n: usize| -> Vec<i64> {
        (0..n as i64)
            .map(|k| {
                if k < n as i64 / 2 {
                    k
                } else if k == n as i64 / 2 {
                    k
                } else {
                    k - n as i64
                }
            })
            .collect()
    };
    // sigma pass
    let ks = modes(ns);
    let mut half = vec![Complex64::new(0.0, 0.0); nt * ns];
    for j in 0..nt {
        for (b, &k) in ks.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..ns {
                let sig = a as f64 * ds;
                acc += g.values[j * ns + a] * Complex64::from_polar(ds, -(k as f64) * sig);
            }
            half[j * ns + b] = acc;
        }
    }
    let ls = modes(nt);
    let mut total = 0.0;
    for &l in &ls {
        let rho = PI * l as f64 / gr.t_half;
        for (b, &k) in ks.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..nt {
                let t = -gr.t_half + j as f64 * dt;
                acc += half[j * ns + b] * Complex64::from_polar(dt, -rho * t);
            }
            let kk = if 2 * k.unsigned_abs() as usize == ns {
                k as f64
            } else {
                k as f64
            };
            total += (1.0 + shift + rho * rho + kk * kk).powf(s) * acc.norm_sqr();
        }
    }
    total / (2.0 * gr.t_half * 2.0 * PI)
}

// ---------------------------------------------------------------------------
// adaptive quadrature for the Mellin transform

fn simpson<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `\int_a^b f(r) dr` by adaptive Simpson with Richardson correction.
pub fn adaptive<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `\int_0^\infty r^{z-1} f(r) dr` directly in r, split on a geometric partition.
pub fn mellin_direct<F: Fn(f64) -> Complex64>(
    f: F,
    z: Complex64,
    r_min: f64,
    r_max: f64,
) -> Complex64 {
    let g = |r: f64| {
        if r <= 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            ((z - 1.0) * r.ln()).exp() * f(r)
        }
    };
    let mut out = Complex64::new(0.0, 0.0);
    let mut a = r_min;
    while a < r_max {
        let b = (a * 2.0).min(r_max);
        out += adaptive(g, a, b, 1e-15 * (b - a).max(1e-300));
        a = b;
    }
    out
}

// ---------------------------------------------------------------------------
// exterior algebra by an explicit index table

/// `(slot sequence) -> (sorted slots, sign)` for the basis `dr, r dsigma, du`, listed
/// once per admissible ordered pair and triple.
pub fn wedge_table(a: &[usize], b: &[usize]) -> Option<(Vec<usize>, f64)> {
    let seq: Vec<usize> = a.iter().chain(b).copied().collect();
    let table: &[(&[usize], &[usize], f64)] = &[
        (&[0], &[0], 1.0),
        (&[1], &[1], 1.0),
        (&[2], &[2], 1.0),
        (&[0, 1], &[0, 1], 1.0),
        (&[1, 0], &[0, 1], -1.0),
        (&[0, 2], &[0, 2], 1.0),
        (&[2, 0], &[0, 2], -1.0),
        (&[1, 2], &[1, 2], 1.0),
        (&[2, 1], &[1, 2], -1.0),
        (&[0, 1, 2], &[0, 1, 2], 1.0),
        (&[0, 2, 1], &[0, 1, 2], -1.0),
        (&[1, 0, 2], &[0, 1, 2], -1.0),
        (&[1, 2, 0], &[0, 1, 2], 1.0),
        (&[2, 0, 1], &[0, 1, 2], 1.0),
        (&[2, 1, 0], &[0, 1, 2], -1.0),
    ];
    if seq.is_empty() {
        return Some((vec![], 1.0));
    }
    table
        .iter()
        .find(|(s, _, _)| *s == seq.as_slice())
        .map(|(_, t, sg)| (t.to_vec(), *sg))
}

// ---------------------------------------------------------------------------
// deformed tangent frames

pub fn det3_cofactor(m: [[Complex64; 3]; 3]) -> Complex64 {
    // expansion along the first row
    let minor = |i: usize, j: usize| {
        let rows: Vec<usize> = (0..3).filter(|&k| k != i).collect();
        let cols: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]]
    };
    m[0][0] * minor(0, 0) - m[0][1] * minor(0, 1) + m[0][2] * minor(0, 2)
}

/// `Phi_* X` at `(r, sigma, u)` by a central difference of `Phi` along the curve
/// `h -> (r + h X^r, sigma + h X^sigma, u + h X^u)`, exact for this embedding up to O(h^2).
pub fn pushforward(emb: &Embedding, p: [f64; 3], x: [f64; 3], h: f64) -> ([f64; 3], [f64; 3]) {
    let at = |s: f64| emb.point(p[0] + s * x[0], p[1] + s * x[1], p[2] + s * x[2]);
    let (a, b) = (at(h), at(-h));
    (
        std::array::from_fn(|i| (a.0[i] - b.0[i]) / (2.0 * h)),
        std::array::from_fn(|i| (a.1[i] - b.1[i]) / (2.0 * h)),
    )
}
