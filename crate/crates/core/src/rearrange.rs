//! Decreasing rearrangement and rearrangement-invariant functionals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::scalar::{exponent_serde, Scalar};

/// `f*` as a decreasing step function on `[0,1)` with blocks of equal
/// measure, and `f**(t) = (1/t)∫_0^t f*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rearrangement<T> {
    blocks: Vec<T>,
    h: T,
    /// `prefix[j] = h Σ_{i<j} blocks[i]`.
    prefix: Vec<T>,
}

pub fn rearrangement<T: Scalar>(f: &GridFunction<T>) -> Rearrangement<T> {
    let mut blocks: Vec<T> = f.values().iter().map(|v| v.abs()).collect();
    blocks.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let h = f.cell_measure();
    let mut prefix = Vec::with_capacity(blocks.len() + 1);
    let mut acc = T::zero();
    prefix.push(acc);
    for b in &blocks {
        acc = acc + *b * h;
        prefix.push(acc);
    }
    Rearrangement { blocks, h, prefix }
}

impl<T: Scalar> Rearrangement<T> {
    /// Block values, decreasing.
    pub fn blocks(&self) -> &[T] {
        &self.blocks
    }

    pub fn block_measure(&self) -> T {
        self.h
    }

    fn block_of(&self, t: T) -> usize {
        (t / self.h).floor().to_usize().unwrap_or(usize::MAX)
    }

    /// `f*(t)`, right-continuous; zero for `t >= 1`.
    pub fn star(&self, t: T) -> T {
        self.blocks.get(self.block_of(t)).copied().unwrap_or(T::zero())
    }

    /// `f*(t^-)`.
    pub fn star_left(&self, t: T) -> T {
        if t <= T::zero() {
            return self.blocks.first().copied().unwrap_or(T::zero());
        }
        let j = (t / self.h).ceil().to_usize().unwrap_or(usize::MAX);
        self.blocks.get(j.saturating_sub(1)).copied().unwrap_or(T::zero())
    }

    /// `f**(t)` for `t > 0`.
    pub fn double_star(&self, t: T) -> T {
        let n = self.blocks.len();
        let j = self.block_of(t).min(n);
        let integral = if j >= n {
            self.prefix[n]
        } else {
            self.prefix[j] + self.blocks[j] * (t - T::count(j) * self.h)
        };
        integral / t
    }
}

/// Weak-`L^p` quasinorm `sup_t t^{1/p} f*(t)`, approached at block right
/// endpoints. `p = ∞` gives the sup norm.
pub fn weak_lp<T: Scalar>(f: &GridFunction<T>, p: T) -> Result<T> {
    if !(p > T::one()) {
        return Err(Error::Exponent(format!("weak L^p needs p > 1, got {p}")));
    }
    let r = rearrangement(f);
    if p.is_infinite() {
        return Ok(r.blocks.first().copied().unwrap_or(T::zero()));
    }
    let ip = p.recip();
    Ok(r.blocks
        .iter()
        .enumerate()
        .map(|(j, a)| (T::count(j + 1) * r.h).powf(ip) * *a)
        .fold(T::zero(), T::max))
}

/// Young function `Φ(t) = t log(e + t)`.
pub fn young_llogl<T: Scalar>(t: T) -> T {
    t * (T::lit(std::f64::consts::E) + t).ln()
}

pub const LLOGL_REL_TOL: f64 = 1e-10;

/// Luxemburg norm `inf{μ > 0 : ∫ Φ(|f|/μ) <= 1}` with `Φ(t) = t log(e + t)`,
/// by bisection.
pub fn llogl<T: Scalar>(f: &GridFunction<T>) -> T {
    let h = f.cell_measure();
    let modular = |mu: T| -> T { f.values().iter().map(|v| young_llogl(v.abs() / mu)).sum::<T>() * h };
    let l1: T = f.values().iter().map(|v| v.abs()).sum::<T>() * h;
    if l1 == T::zero() {
        return T::zero();
    }
    // Φ(t) >= t gives μ >= ‖f‖_1; grow until feasible.
    let mut lo = l1;
    let mut hi = l1 * T::lit(2.0);
    while modular(hi) > T::one() {
        lo = hi;
        hi = hi * T::lit(2.0);
    }
    for _ in 0..200 {
        if hi - lo <= T::lit(LLOGL_REL_TOL) * hi {
            break;
        }
        let mid = (lo + hi) * T::lit(0.5);
        if modular(mid) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `sup_{0<t<1} (f**(t) - f*(t))`. For a step function the supremum is the
/// right limit at a block boundary `t = jh`, where it equals the mean of the
/// first `j` blocks minus block `j`.
pub fn bds<T: Scalar>(f: &GridFunction<T>) -> T {
    let r = rearrangement(f);
    (1..r.blocks.len())
        .map(|j| r.prefix[j] / (T::count(j) * r.h) - r.blocks[j])
        .fold(T::zero(), T::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct RiFunctionals<T: Scalar> {
    #[serde(with = "exponent_serde")]
    pub p: T,
    pub weak_lp: T,
    pub llogl: T,
    pub bds: T,
}

pub fn ri_functionals<T: Scalar>(f: &GridFunction<T>, p: T) -> Result<RiFunctionals<T>> {
    Ok(RiFunctionals {
        p,
        weak_lp: weak_lp(f, p)?,
        llogl: llogl(f),
        bds: bds(f),
    })
}
