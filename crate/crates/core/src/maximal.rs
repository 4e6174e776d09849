//! Dyadic local fractional maximal operator
//! `M_{q,λ}g(x) = sup_{Q ∋ x} (|Q|^{λ/n - 1} ∫_Q |g|^q)^{1/q}` and `L^p` norms.
//!
//! Dyadic cubes containing a point form its ancestor chain, so the sup is a
//! running maximum pushed from the root down to the finest cells.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DyadicTree, GridFunction};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Serialize)]
pub struct MaximalResult<T: Scalar> {
    pub values: GridFunction<T>,
    pub q: T,
    pub lambda: T,
}

fn check_order<T: Scalar>(dim: usize, q: T, lambda: T) -> Result<()> {
    if !(lambda >= T::zero() && lambda < T::count(dim)) {
        return Err(Error::FractionalOrder {
            lambda: lambda.as_f64(),
            dim,
        });
    }
    if !(q >= T::one()) || !q.is_finite() {
        return Err(Error::Exponent(format!(
            "maximal exponent q must be a finite real >= 1, got {q}"
        )));
    }
    Ok(())
}

/// `M_{q,λ} f` on every finest cell.
pub fn fractional_maximal<T: Scalar>(f: &GridFunction<T>, q: T, lambda: T) -> Result<MaximalResult<T>> {
    let h = f.cell_measure();
    let cells: Vec<T> = f.values().iter().map(|v| v.abs().powf(q) * h).collect();
    fractional_maximal_from_cell_integrals(f.tree(), &cells, q, lambda)
}

/// Same as [`fractional_maximal`] with `∫_cell |g|^q` supplied per finest cell.
///
/// Lets callers pass exact cell integrals of non-constant integrands such as
/// `|f - m|^q` for a polynomial `m`.
pub fn fractional_maximal_from_cell_integrals<T: Scalar>(
    tree: DyadicTree,
    cell_integrals: &[T],
    q: T,
    lambda: T,
) -> Result<MaximalResult<T>> {
    let dim = tree.dim();
    check_order(dim, q, lambda)?;
    if cell_integrals.len() != tree.cell_count() {
        return Err(Error::InvalidGrid(format!(
            "expected {} cell integrals, got {}",
            tree.cell_count(),
            cell_integrals.len()
        )));
    }
    let depth = tree.depth();
    let e = lambda / T::count(dim) - T::one();
    let qi = q.recip();

    // Integrals per level, finest first; each level is row-major.
    let mut levels: Vec<Vec<T>> = vec![cell_integrals.to_vec()];
    for l in (0..depth).rev() {
        let fine = levels.last().unwrap();
        let side = 1usize << l;
        let coarse = if dim == 1 {
            (0..side).map(|i| fine[2 * i] + fine[2 * i + 1]).collect()
        } else {
            let fs = 2 * side;
            let mut out = vec![T::zero(); side * side];
            for i in 0..side {
                for j in 0..side {
                    out[i * side + j] = fine[2 * i * fs + 2 * j]
                        + fine[2 * i * fs + 2 * j + 1]
                        + fine[(2 * i + 1) * fs + 2 * j]
                        + fine[(2 * i + 1) * fs + 2 * j + 1];
                }
            }
            out
        };
        levels.push(coarse);
    }
    levels.reverse();

    let mut running = vec![T::neg_infinity()];
    for (l, ints) in levels.iter().enumerate() {
        let meas = T::lit(0.5).powi((dim * l) as i32);
        let scale = meas.powf(e);
        let side = 1usize << l;
        let cur: Vec<T> = ints
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let parent = if l == 0 {
                    T::neg_infinity()
                } else if dim == 1 {
                    running[idx / 2]
                } else {
                    let (i, j) = (idx / side, idx % side);
                    running[(i / 2) * (side / 2) + j / 2]
                };
                parent.max((scale * *v).max(T::zero()).powf(qi))
            })
            .collect();
        running = cur;
    }
    Ok(MaximalResult {
        values: GridFunction::new(dim, depth, running)?,
        q,
        lambda,
    })
}

/// `‖g‖_{L^p([0,1)^n)}` for `p ∈ [1, ∞]`.
pub fn lp_norm<T: Scalar>(g: &GridFunction<T>, p: T) -> Result<T> {
    lp_norm_values(g.values(), g.cell_measure(), p)
}

pub(crate) fn lp_norm_values<T: Scalar>(values: &[T], cell_measure: T, p: T) -> Result<T> {
    if !(p >= T::one()) {
        return Err(Error::Exponent(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(T::zero(), |m, v| m.max(v.abs())));
    }
    let s: T = values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((s * cell_measure).powf(p.recip()))
}

/// The dyadic maximal operator's norm bound `p/(p-1)` on `L^p`, `1 < p < ∞`.
pub fn maximal_opnorm_bound<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::one()) || p.is_infinite() {
        return Err(Error::Exponent(format!(
            "maximal operator bound needs 1 < p < inf, got {p}"
        )));
    }
    Ok(p / (p - T::one()))
}
