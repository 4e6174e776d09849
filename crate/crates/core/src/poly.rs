//! Best and nearly best local polynomial approximation `E_k(f;Q)_q`,
//! `q ∈ {1,2}`, `0 <= k <= 3` (polynomials of degree `<= k-1`; `k = 0`
//! is approximation by zero, i.e. `E_0(f;Q)_q = ‖f‖_{L^q(Q)}`).
//!
//! Polynomials are kept in the local coordinates `t ∈ [-1,1]^n` of the cube
//! they were fitted on. Residual norms `‖f - m‖_{L^q(Q)}` are computed cell
//! by cell: `f` is constant on a cell while `m` is not, so each cell
//! contributes a closed-form polynomial integral (`q = 2`), or the integral
//! of `|v - m|` split at the roots of `v - m` (`q = 1`).

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{multi_indices, unit_moment, CubeId, GridFunction, MomentTable};
use crate::scalar::Scalar;

/// Monomials of total degree <= 2, the storage order of [`LocalPoly`].
pub(crate) const MONO: [[u32; 2]; 6] = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];

fn mono_pos(a: [u32; 2]) -> usize {
    MONO.iter().position(|m| *m == a).expect("degree <= 2")
}

/// Legendre polynomials `P_0, P_1, P_2` in the monomial basis.
const LEGENDRE: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.5, 0.0, 1.5]];

/// Weight floor for the reweighting step of IRLS.
pub const IRLS_WEIGHT_FLOOR: f64 = 1e-12;
/// Relative decrease of the L1 objective below which IRLS stops.
pub const IRLS_REL_TOL: f64 = 1e-10;
pub const IRLS_MAX_ITER: usize = 200;

/// Which printed exponent scales `E_k(f;Q)_q`: `|Q|^{λ/n - 1/q}` (Brudnyi `V`)
/// or `|Q|^{λ/(nq) - 1/q}` (sparse `SV`). They agree when `q = 1` or `λ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    V,
    #[default]
    SV,
}

pub fn scale_exponent<T: Scalar>(dim: usize, q: u32, lambda: T, convention: Convention) -> T {
    let n = T::count(dim);
    let q = T::count(q as usize);
    match convention {
        Convention::V => lambda / n - q.recip(),
        Convention::SV => lambda / (n * q) - q.recip(),
    }
}

pub(crate) fn check_kq(k: u32, q: u32) -> Result<()> {
    if k > 3 {
        return Err(Error::DegreeBound(k));
    }
    if q != 1 && q != 2 {
        return Err(Error::ErrorExponent(q));
    }
    Ok(())
}

/// A polynomial of total degree <= 2 in the local coordinates of some cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPoly<T> {
    dim: usize,
    c: [T; 6],
}

impl<T: Scalar> LocalPoly<T> {
    pub fn zero(dim: usize) -> Self {
        LocalPoly { dim, c: [T::zero(); 6] }
    }

    pub fn constant(dim: usize, v: T) -> Self {
        let mut p = Self::zero(dim);
        p.c[0] = v;
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coefficient of `t^α`.
    pub fn coeff(&self, alpha: [u32; 2]) -> T {
        self.c[mono_pos(alpha)]
    }

    pub fn degree(&self) -> u32 {
        MONO.iter()
            .zip(&self.c)
            .filter(|(_, v)| **v != T::zero())
            .map(|(a, _)| a[0] + a[1])
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, t: [T; 2]) -> T {
        let c = &self.c;
        c[0] + c[1] * t[0] + c[2] * t[1] + c[3] * t[0] * t[0] + c[4] * t[0] * t[1] + c[5] * t[1] * t[1]
    }

    /// Re-expresses `m` in the variable `u` where `t = center + r u`.
    pub fn affine(&self, center: [T; 2], r: T) -> Self {
        let mut out = [T::zero(); 6];
        let binom = |n: u32, k: u32| T::count(if k == 0 || k == n { 1 } else { n as usize });
        for (pos, a) in MONO.iter().enumerate() {
            let coef = self.c[pos];
            if coef == T::zero() {
                continue;
            }
            for p in 0..=a[0] {
                for q in 0..=a[1] {
                    let w = binom(a[0], p)
                        * binom(a[1], q)
                        * center[0].powi((a[0] - p) as i32)
                        * center[1].powi((a[1] - q) as i32)
                        * r.powi((p + q) as i32);
                    let i = mono_pos([p, q]);
                    out[i] = out[i] + coef * w;
                }
            }
        }
        LocalPoly { dim: self.dim, c: out }
    }

    /// `v - self`.
    pub(crate) fn residual(&self, v: T) -> Self {
        let mut out = LocalPoly {
            dim: self.dim,
            c: self.c.map(|x| -x),
        };
        out.c[0] = out.c[0] + v;
        out
    }

    fn add_scaled(&mut self, other: &Self, s: T) {
        for i in 0..6 {
            self.c[i] = self.c[i] + other.c[i] * s;
        }
    }

    /// Tensor Legendre polynomial `P_a(t_1) P_b(t_2)`.
    pub(crate) fn legendre(dim: usize, ab: [u32; 2]) -> Self {
        let mut p = Self::zero(dim);
        for i in 0..=ab[0] {
            for j in 0..=ab[1] {
                let w = LEGENDRE[ab[0] as usize][i as usize] * LEGENDRE[ab[1] as usize][j as usize];
                if w != 0.0 {
                    p.c[mono_pos([i, j])] = T::lit(w);
                }
            }
        }
        p
    }
}

/// Mean of `g h` over `[-1,1]^n`.
pub(crate) fn mean_product<T: Scalar>(g: &LocalPoly<T>, h: &LocalPoly<T>) -> T {
    let mut acc = T::zero();
    for (i, a) in MONO.iter().enumerate() {
        if g.c[i] == T::zero() {
            continue;
        }
        for (j, b) in MONO.iter().enumerate() {
            if h.c[j] == T::zero() {
                continue;
            }
            acc = acc + g.c[i] * h.c[j] * unit_moment::<T>(a[0] + b[0]) * unit_moment::<T>(a[1] + b[1]);
        }
    }
    acc
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn gl(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static GL4: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static GL8: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static GL16: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        4 => GL4.get_or_init(|| gauss_legendre(4)),
        8 => GL8.get_or_init(|| gauss_legendre(8)),
        16 => GL16.get_or_init(|| gauss_legendre(16)),
        _ => unreachable!("unsupported rule"),
    }
}

/// Real roots of `a0 + a1 u + a2 u^2` strictly inside `(lo, hi)`, ascending.
fn quadratic_roots_in<T: Scalar>(a0: T, a1: T, a2: T, lo: T, hi: T, out: &mut Vec<T>) {
    let mut push = |r: T| {
        if r > lo && r < hi && r.is_finite() {
            out.push(r);
        }
    };
    if a2 == T::zero() {
        if a1 != T::zero() {
            push(-a0 / a1);
        }
        return;
    }
    let disc = a1 * a1 - T::lit(4.0) * a2 * a0;
    if disc <= T::zero() {
        return;
    }
    let sq = disc.sqrt();
    let q = if a1 >= T::zero() { -(a1 + sq) } else { -(a1 - sq) } * T::lit(0.5);
    push(q / a2);
    if q != T::zero() {
        push(a0 / q);
    }
}

/// `∫_{-1}^{1} |g|` and `∫_{-1}^{1} sign(g) u^i du` (i = 0,1,2) for `g = a0 + a1 u + a2 u^2`.
fn line_integrals<T: Scalar>(a0: T, a1: T, a2: T) -> (T, [T; 3]) {
    let mut br = Vec::with_capacity(4);
    br.push(-T::one());
    quadratic_roots_in(a0, a1, a2, -T::one(), T::one(), &mut br);
    br.push(T::one());
    br[1..].sort_by(|x, y| x.partial_cmp(y).unwrap());
    let anti = |x: T| a0 * x + a1 * x * x * T::lit(0.5) + a2 * x * x * x / T::lit(3.0);
    let mut abs = T::zero();
    let mut sign = [T::zero(); 3];
    for w in br.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let mid = (x0 + x1) * T::lit(0.5);
        let gm = a0 + a1 * mid + a2 * mid * mid;
        let s = if gm > T::zero() {
            T::one()
        } else if gm < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        abs = abs + s * (anti(x1) - anti(x0));
        for (i, si) in sign.iter_mut().enumerate() {
            let e = i as i32 + 1;
            *si = *si + s * (x1.powi(e) - x0.powi(e)) / T::count(i + 1);
        }
    }
    (abs, sign)
}

/// Mean of `|g|` and of `sign(g) u^α` (α over [`MONO`]) on `[-1,1]^n`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CellStats<T> {
    pub abs_mean: T,
    pub sign_mean: [T; 6],
}

pub(crate) fn cell_stats<T: Scalar>(g: &LocalPoly<T>) -> CellStats<T> {
    let c = &g.c;
    let half = T::lit(0.5);
    if g.dim == 1 {
        let (abs, s) = line_integrals(c[0], c[1], c[3]);
        let mut sign_mean = [T::zero(); 6];
        sign_mean[0] = s[0] * half;
        sign_mean[1] = s[1] * half;
        sign_mean[3] = s[2] * half;
        return CellStats {
            abs_mean: abs * half,
            sign_mean,
        };
    }
    // Constant in u and w: nothing to integrate numerically.
    if c[1..].iter().all(|v| *v == T::zero()) {
        let s = c[0].signum() * if c[0] == T::zero() { T::zero() } else { T::one() };
        let mut sign_mean = [T::zero(); 6];
        for (pos, a) in MONO.iter().enumerate() {
            sign_mean[pos] = s * unit_moment::<T>(a[0]) * unit_moment::<T>(a[1]);
        }
        return CellStats {
            abs_mean: c[0].abs(),
            sign_mean,
        };
    }
    // g = a0(w) + a1(w) u + a2 u^2; the inner integral in u is exact and
    // smooth in w between the breakpoints collected here.
    let (c00, c10, c01, c20, c11, c02) = (c[0], c[1], c[2], c[3], c[4], c[5]);
    let four = T::lit(4.0);
    let lo = -T::one();
    let hi = T::one();
    let mut br = vec![lo];
    quadratic_roots_in(c00 + c10 + c20, c01 + c11, c02, lo, hi, &mut br);
    quadratic_roots_in(c00 - c10 + c20, c01 - c11, c02, lo, hi, &mut br);
    quadratic_roots_in(
        c10 * c10 - four * c20 * c00,
        T::lit(2.0) * c10 * c11 - four * c20 * c01,
        c11 * c11 - four * c20 * c02,
        lo,
        hi,
        &mut br,
    );
    quadratic_roots_in(c10, c11, T::zero(), lo, hi, &mut br);
    quadratic_roots_in(c00, c01, c02, lo, hi, &mut br);
    br.push(hi);
    br.sort_by(|x, y| x.partial_cmp(y).unwrap());
    br.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * T::lit(8.0));

    let (nodes, weights) = gl(16);
    let mut abs = T::zero();
    let mut sign = [T::zero(); 6];
    for win in br.windows(2) {
        let (w0, w1) = (win[0], win[1]);
        let hw = (w1 - w0) * half;
        let mw = (w1 + w0) * half;
        for (x, wt) in nodes.iter().zip(weights.iter()) {
            let w = mw + hw * T::lit(*x);
            let wt = hw * T::lit(*wt);
            let (ia, is) = line_integrals(c00 + c01 * w + c02 * w * w, c10 + c11 * w, c20);
            abs = abs + wt * ia;
            for (pos, a) in MONO.iter().enumerate() {
                sign[pos] = sign[pos] + wt * is[a[0] as usize] * w.powi(a[1] as i32);
            }
        }
    }
    let quarter = T::lit(0.25);
    CellStats {
        abs_mean: abs * quarter,
        sign_mean: sign.map(|s| s * quarter),
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_dense<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= T::min_positive_value() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let s: T = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Result of a local polynomial fit on one cube.
#[derive(Clone, Debug)]
pub struct PolyFit<T> {
    pub cube: CubeId,
    /// Degree bound: the polynomial has degree `<= k - 1` (zero for `k = 0`).
    pub k: u32,
    pub q: u32,
    /// `‖f - m‖_{L^q(cube)}`.
    pub error: T,
    /// Certified upper bound on `error / E_k(f;cube)_q`.
    pub near_best_factor: T,
    /// Set when IRLS hit its iteration cap.
    pub approximate: bool,
    local: LocalPoly<T>,
}

impl<T: Scalar> PolyFit<T> {
    /// The fitted polynomial in the cube's local coordinates.
    pub fn local(&self) -> &LocalPoly<T> {
        &self.local
    }

    /// Evaluates the fitted polynomial at an absolute point `x`.
    pub fn eval(&self, x: [T; 2]) -> T {
        let side: T = self.cube.side();
        let h = side * T::lit(0.5);
        let o = self.cube.origin::<T>();
        self.local.eval([(x[0] - o[0] - h) / h, (x[1] - o[1] - h) / h])
    }

    /// Coefficients in the absolute monomial basis `x^α`, `|α| <= k - 1`.
    pub fn coeffs(&self) -> Vec<([u32; 2], T)> {
        let dim = self.cube.dim();
        let side: T = self.cube.side();
        let h = side * T::lit(0.5);
        let o = self.cube.origin::<T>();
        let ctr = [o[0] + h, o[1] + h];
        let basis = multi_indices(dim, self.k.saturating_sub(1));
        let mut out: Vec<([u32; 2], T)> = basis.iter().map(|a| (*a, T::zero())).collect();
        if self.k == 0 {
            return Vec::new();
        }
        let binom = |n: u32, k: u32| T::count(if k == 0 || k == n { 1 } else { n as usize });
        for (pos, a) in MONO.iter().enumerate() {
            let c = self.local.c[pos];
            if c == T::zero() {
                continue;
            }
            // ((x - ctr)/h)^a = h^{-a} Σ_p C(a,p) x^p (-ctr)^{a-p}
            for p0 in 0..=a[0] {
                for p1 in 0..=a[1] {
                    let w = binom(a[0], p0)
                        * binom(a[1], p1)
                        * (-ctr[0]).powi((a[0] - p0) as i32)
                        * (-ctr[1]).powi((a[1] - p1) as i32)
                        / h.powi((a[0] + a[1]) as i32);
                    if let Some(slot) = out.iter_mut().find(|(m, _)| *m == [p0, p1]) {
                        slot.1 = slot.1 + c * w;
                    }
                }
            }
        }
        out
    }
}

/// Local approximation engine bound to one grid function.
pub struct LocalApproximation<'a, T: Scalar> {
    f: &'a GridFunction<T>,
    moments: MomentTable<T>,
}

impl<'a, T: Scalar> LocalApproximation<'a, T> {
    pub fn new(f: &'a GridFunction<T>) -> Self {
        LocalApproximation {
            f,
            moments: MomentTable::with_order(f, 2),
        }
    }

    pub fn grid(&self) -> &GridFunction<T> {
        self.f
    }

    /// Finest cells of `c` with their centers and half-width in `c`'s local coordinates.
    fn frames<'s>(&'s self, c: &CubeId) -> impl Iterator<Item = (usize, [T; 2], T)> + 's {
        let tree = self.f.tree();
        let shift = tree.depth() - c.level();
        let r = T::lit(0.5).powi(shift as i32);
        let o = [c.coords()[0] << shift, c.coords().get(1).copied().unwrap_or(0) << shift];
        let dim = tree.dim();
        tree.cells_in(c).map(move |cell| {
            let cc = tree.cell_coords(cell);
            let ctr = |k: usize| -T::one() + T::count(2 * (cc[k] - o[k]) as usize + 1) * r;
            let center = if dim == 1 {
                [ctr(0), T::zero()]
            } else {
                [ctr(0), ctr(1)]
            };
            (cell, center, r)
        })
    }

    fn check_cube(&self, c: &CubeId) -> Result<()> {
        let tree = self.f.tree();
        if tree.is_valid(c) {
            Ok(())
        } else {
            Err(Error::InvalidCube {
                level: c.level(),
                coords: c.coords().to_vec(),
                depth: tree.depth(),
            })
        }
    }

    /// `∫_c |f - m|^q` for a polynomial `m` given in `c`'s local coordinates.
    pub fn residual_power(&self, c: &CubeId, m: &LocalPoly<T>, q: u32) -> T {
        self.cell_residual_powers(c, m, q).map(|(_, v)| v).sum()
    }

    /// Per finest cell of `c`: `∫_cell |f - m|^q`.
    pub fn cell_residual_powers<'s>(
        &'s self,
        c: &CubeId,
        m: &LocalPoly<T>,
        q: u32,
    ) -> impl Iterator<Item = (usize, T)> + 's {
        let h = self.f.cell_measure();
        let values = self.f.values();
        let constant = m.degree() == 0;
        let m = *m;
        self.frames(c).map(move |(cell, center, r)| {
            let v = values[cell];
            let val = if constant {
                let d = (v - m.c[0]).abs();
                if q == 1 {
                    d
                } else {
                    d * d
                }
            } else {
                let g = m.affine(center, r).residual(v);
                if q == 1 {
                    cell_stats(&g).abs_mean
                } else {
                    mean_product(&g, &g).max(T::zero())
                }
            };
            (cell, val * h)
        })
    }

    /// Lower and upper medians of the cell values in `c`.
    pub fn median_interval(&self, c: &CubeId) -> (T, T) {
        let mut vals: Vec<T> = self.f.tree().cells_in(c).map(|i| self.f.values()[i]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        (vals[(n - 1) / 2], vals[n / 2])
    }

    /// Orthogonal projection onto degree `<= k-1` polynomials in `L^2(c)`,
    /// with its tensor-Legendre coefficients.
    pub fn l2_projection(&self, c: &CubeId, k: u32) -> (LocalPoly<T>, Vec<T>) {
        let dim = self.f.dim();
        let mut m = LocalPoly::zero(dim);
        if k == 0 {
            return (m, Vec::new());
        }
        let meas: T = c.measure();
        let mut coefs = Vec::new();
        for ab in multi_indices(dim, k - 1) {
            let mut inner = T::zero();
            for i in 0..=ab[0] {
                for j in 0..=ab[1] {
                    let w = LEGENDRE[ab[0] as usize][i as usize] * LEGENDRE[ab[1] as usize][j as usize];
                    if w != 0.0 {
                        inner = inner + T::lit(w) * self.moments.local_moment(c, &[i, j]).expect("order 2");
                    }
                }
            }
            let norm = T::count(((2 * ab[0] + 1) * (2 * ab[1] + 1)) as usize);
            let coef = inner * norm / meas;
            coefs.push(coef);
            m.add_scaled(&LocalPoly::legendre(dim, ab), coef);
        }
        (m, coefs)
    }

    /// Best (or certified nearly best) approximation of `f` on `c` by
    /// polynomials of degree `<= k-1` in `L^q(c)`.
    pub fn best_fit(&self, c: &CubeId, k: u32, q: u32) -> Result<PolyFit<T>> {
        check_kq(k, q)?;
        self.check_cube(c)?;
        let dim = self.f.dim();
        let fit = |local: LocalPoly<T>, error: T| PolyFit {
            cube: *c,
            k,
            q,
            error,
            near_best_factor: T::one(),
            approximate: false,
            local,
        };
        let root = |v: T| if q == 1 { v } else { v.sqrt() };
        match (k, q) {
            (0, _) => {
                let m = LocalPoly::zero(dim);
                Ok(fit(m, root(self.residual_power(c, &m, q))))
            }
            (1, 1) => {
                let (lo, _) = self.median_interval(c);
                let m = LocalPoly::constant(dim, lo);
                Ok(fit(m, self.residual_power(c, &m, 1)))
            }
            (_, 2) => {
                let (m, _) = self.l2_projection(c, k);
                Ok(fit(m, self.residual_power(c, &m, 2).sqrt()))
            }
            _ => self.l1_fit(c, k),
        }
    }

    /// `|c|^e E_k(f;c)_q` with `e` from [`scale_exponent`].
    pub fn scaled_error(&self, c: &CubeId, k: u32, q: u32, lambda: T, convention: Convention) -> Result<T> {
        let e = scale_exponent(self.f.dim(), q, lambda, convention);
        let fit = self.best_fit(c, k, q)?;
        Ok(c.measure::<T>().powf(e) * fit.error)
    }

    fn l1_fit(&self, c: &CubeId, k: u32) -> Result<PolyFit<T>> {
        let dim = self.f.dim();
        let basis: Vec<LocalPoly<T>> = multi_indices(dim, k - 1)
            .into_iter()
            .map(|ab| LocalPoly::legendre(dim, ab))
            .collect();
        let nb = basis.len();
        let compose = |theta: &[T]| {
            let mut m = LocalPoly::zero(dim);
            for (b, t) in basis.iter().zip(theta) {
                m.add_scaled(b, *t);
            }
            m
        };
        let objective = |theta: &[T]| self.residual_power(c, &compose(theta), 1);

        // Quadrature nodes for the reweighted least-squares subproblems.
        let g = if dim == 1 { 8 } else { 4 };
        let (gx, gw) = gl(g);
        let mut rows: Vec<(Vec<T>, T, T)> = Vec::new();
        for (cell, center, r) in self.frames(c) {
            let v = self.f.values()[cell];
            for a in 0..g {
                for b in 0..(if dim == 1 { 1 } else { g }) {
                    let t = [
                        center[0] + r * T::lit(gx[a]),
                        if dim == 1 {
                            T::zero()
                        } else {
                            center[1] + r * T::lit(gx[b])
                        },
                    ];
                    let w = T::lit(gw[a] * if dim == 1 { 1.0 } else { gw[b] });
                    rows.push((basis.iter().map(|p| p.eval(t)).collect(), v, w));
                }
            }
        }

        let (_, l2) = self.l2_projection(c, k);
        let mut theta = l2.clone();
        let mut best = (objective(&theta), theta.clone());
        let mut prev = best.0;
        let mut converged = false;
        let floor = T::lit(IRLS_WEIGHT_FLOOR);
        for _ in 0..IRLS_MAX_ITER {
            let mut a = vec![vec![T::zero(); nb]; nb];
            let mut rhs = vec![T::zero(); nb];
            for (phi, v, w) in &rows {
                let fit: T = phi.iter().zip(&theta).map(|(p, t)| *p * *t).sum();
                let wt = *w / (*v - fit).abs().max(floor);
                for i in 0..nb {
                    rhs[i] = rhs[i] + wt * *v * phi[i];
                    for j in 0..nb {
                        a[i][j] = a[i][j] + wt * phi[i] * phi[j];
                    }
                }
            }
            let Some(next) = solve_dense(a, rhs) else { break };
            theta = next;
            let val = objective(&theta);
            if val < best.0 {
                best = (val, theta.clone());
            }
            let rel = if prev > T::zero() {
                (prev - val) / prev
            } else {
                T::zero()
            };
            prev = val;
            if rel < T::lit(IRLS_REL_TOL) {
                converged = true;
                break;
            }
        }
        let (mut val, mut theta) = best;
        polish(&objective, &mut theta, &mut val);

        // Candidates that keep E_k monotone in k.
        let lower = self.best_fit(c, k - 1, 1)?;
        if lower.error < val {
            val = lower.error;
            theta = basis_coords(&basis, lower.local());
        }
        let m = compose(&theta);
        let factor = self.l1_certificate(c, &m, val, &basis);
        Ok(PolyFit {
            cube: *c,
            k,
            q: 1,
            error: val,
            near_best_factor: factor,
            approximate: !converged,
            local: m,
        })
    }

    /// Certified ratio `‖f - m‖_1 / E_k(f)_1` from the dual bound
    /// `E_k(f)_1 >= ∫ (f - m) h / ‖h‖_∞` with `h = s - Π s`, `s = sign(f - m)`,
    /// `Π` the `L^2` projection onto the approximating polynomials.
    fn l1_certificate(&self, c: &CubeId, m: &LocalPoly<T>, err: T, basis: &[LocalPoly<T>]) -> T {
        if err <= T::zero() {
            return T::one();
        }
        let h = self.f.cell_measure();
        let nb = basis.len();
        let mut sign_phi = vec![T::zero(); nb];
        let mut res_phi = vec![T::zero(); nb];
        for (cell, center, r) in self.frames(c) {
            let g = m.affine(center, r).residual(self.f.values()[cell]);
            let st = cell_stats(&g);
            for (j, phi) in basis.iter().enumerate() {
                let pu = phi.affine(center, r);
                let s: T = pu.c.iter().zip(&st.sign_mean).map(|(a, b)| *a * *b).sum();
                sign_phi[j] = sign_phi[j] + s * h;
                res_phi[j] = res_phi[j] + mean_product(&g, &pu) * h;
            }
        }
        let meas: T = c.measure();
        let dim = self.f.dim();
        let idx = multi_indices(dim, 2);
        let mut correction = T::zero();
        let mut sup = T::one();
        for j in 0..nb {
            let ab = idx[j];
            let norm2 = meas / T::count(((2 * ab[0] + 1) * (2 * ab[1] + 1)) as usize);
            let pi = sign_phi[j] / norm2;
            correction = correction + pi * res_phi[j];
            sup = sup + pi.abs();
        }
        let lower = (err - correction) / sup;
        if lower > T::zero() {
            (err / lower).max(T::one())
        } else {
            T::infinity()
        }
    }
}

fn basis_coords<T: Scalar>(basis: &[LocalPoly<T>], m: &LocalPoly<T>) -> Vec<T> {
    // Legendre coordinates of a polynomial of degree <= 1 (the k-1 fit for k <= 3 may have degree <= 1).
    let mut theta = vec![T::zero(); basis.len()];
    let mut rem = *m;
    for (j, b) in basis.iter().enumerate().rev() {
        let lead = MONO
            .iter()
            .enumerate()
            .rev()
            .find(|(i, _)| b.c[*i] != T::zero())
            .map(|(i, _)| i)
            .unwrap();
        let t = rem.c[lead] / b.c[lead];
        theta[j] = t;
        rem.add_scaled(b, -t);
    }
    theta
}

/// Exact line searches along coordinate and pairwise-diagonal directions
/// until the convex objective stops improving.
fn polish<T: Scalar>(objective: &impl Fn(&[T]) -> T, theta: &mut Vec<T>, val: &mut T) {
    let nb = theta.len();
    let mut dirs: Vec<Vec<T>> = (0..nb)
        .map(|i| (0..nb).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    for i in 0..nb {
        for j in i + 1..nb {
            for s in [T::one(), -T::one()] {
                dirs.push(
                    (0..nb)
                        .map(|l| {
                            if l == i {
                                T::one()
                            } else if l == j {
                                s
                            } else {
                                T::zero()
                            }
                        })
                        .collect(),
                );
            }
        }
    }
    let scale = theta
        .iter()
        .fold(T::zero(), |a, t| a.max(t.abs()))
        .max(val.abs())
        .max(T::lit(1e-300));
    for _ in 0..60 {
        let start = *val;
        for d in &dirs {
            line_search(objective, theta, val, d, scale);
        }
        if start - *val <= T::lit(1e-14) * start.abs() {
            break;
        }
    }
}

fn line_search<T: Scalar>(objective: &impl Fn(&[T]) -> T, theta: &mut Vec<T>, val: &mut T, d: &[T], scale: T) {
    let at = |s: T| -> Vec<T> { theta.iter().zip(d).map(|(t, di)| *t + s * *di).collect() };
    let f = |s: T| objective(&at(s));
    // Bracket a minimizer of the convex function s -> F(θ + s d).
    let mut step = scale * T::lit(1e-3);
    let f0 = *val;
    let (mut lo, mut hi);
    let fp = f(step);
    if fp < f0 {
        lo = T::zero();
        let mut cur = step;
        let mut fc = fp;
        loop {
            let nxt = cur * T::lit(2.0);
            let fnx = f(nxt);
            if fnx >= fc || nxt > scale * T::lit(1e6) {
                hi = nxt;
                break;
            }
            lo = cur;
            cur = nxt;
            fc = fnx;
        }
    } else {
        let fm = f(-step);
        if fm < f0 {
            hi = T::zero();
            let mut cur = -step;
            let mut fc = fm;
            loop {
                let nxt = cur * T::lit(2.0);
                let fnx = f(nxt);
                if fnx >= fc || -nxt > scale * T::lit(1e6) {
                    lo = nxt;
                    break;
                }
                hi = cur;
                cur = nxt;
                fc = fnx;
            }
        } else {
            lo = -step;
            hi = step;
            step = step * T::lit(0.5);
            let _ = step;
        }
    }
    let gr = T::lit(0.618_033_988_749_894_9);
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if (b - a).abs() <= T::epsilon() * scale {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        }
    }
    let (s, fs) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if fs < *val {
        *theta = at(s);
        *val = fs;
    }
}

/// Convenience wrapper: [`LocalApproximation::best_fit`] on a fresh engine.
pub fn best_fit<T: Scalar>(f: &GridFunction<T>, c: &CubeId, k: u32, q: u32) -> Result<PolyFit<T>> {
    LocalApproximation::new(f).best_fit(c, k, q)
}

/// Convenience wrapper: [`LocalApproximation::scaled_error`] on a fresh engine.
pub fn scaled_error<T: Scalar>(
    f: &GridFunction<T>,
    c: &CubeId,
    k: u32,
    q: u32,
    lambda: T,
    convention: Convention,
) -> Result<T> {
    LocalApproximation::new(f).scaled_error(c, k, q, lambda, convention)
}
