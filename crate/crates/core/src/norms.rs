//! Oscillation functionals over dyadic families.
//!
//! Every functional here is a supremum over a class of dyadic families of
//! `‖Σ_i s(Q_i) 1_{E_{Q_i}}‖_{L^p}`, where `s(Q)` is a scaled local error and
//! `E_Q` the core set of `Q` in the family. For packings the core sets are
//! the cubes themselves, and the supremum is found exactly by a tree DP.
//! Sparse classes are searched exhaustively on small trees and bracketed by
//! certified bounds otherwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{cz_family, validate, CompactFamily, CubeFamily, FamilyCatalog, FamilyClass};
use crate::grid::{CubeId, GridFunction};
use crate::maximal::{fractional_maximal_from_cell_integrals, lp_norm, MaximalResult};
use crate::poly::{check_kq, scale_exponent, Convention, LocalApproximation, LocalPoly};
use crate::scalar::{exponent_serde, Scalar};

/// Largest grid (in finest cells) on which [`garo_norm`] is exact.
pub const GARO_EXACT_CELLS: usize = 4096;
/// Relative tolerance used when comparing the two forms of a sparse functional.
pub const FORM_TOL: f64 = 1e-12;

/// How the local error on a cube is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Oscillation {
    /// `‖f - f_Q‖_{L^q(Q)}`: the mean oscillation used by BMO, JN_p, SJN_p and GaRo.
    Mean,
    /// `E_k(f;Q)_q`: best approximation by polynomials of degree `<= k-1`.
    #[default]
    BestApprox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NormParams<T: Scalar> {
    pub k: u32,
    pub q: u32,
    pub lambda: T,
    #[serde(with = "exponent_serde")]
    pub p: T,
    pub convention: Convention,
    pub family: FamilyClass,
    pub oscillation: Oscillation,
}

impl<T: Scalar> NormParams<T> {
    fn mean(p: T, family: FamilyClass) -> Self {
        NormParams {
            k: 1,
            q: 1,
            lambda: T::zero(),
            p,
            convention: Convention::SV,
            family,
            oscillation: Oscillation::Mean,
        }
    }

    /// John–Nirenberg `JN_p`: packings, mean oscillation.
    pub fn jn(p: T) -> Self {
        Self::mean(p, FamilyClass::Packing)
    }

    /// `BMO`, the `p = ∞` case of `JN_p`.
    pub fn bmo() -> Self {
        Self::jn(T::infinity())
    }

    /// Sparse John–Nirenberg `SJN_p`.
    pub fn sjn(p: T) -> Self {
        Self::mean(p, FamilyClass::sparse())
    }

    /// Brudnyi `V^{k,λ}_{p,q}` over packings.
    pub fn v(k: u32, q: u32, lambda: T, p: T) -> Self {
        NormParams {
            k,
            q,
            lambda,
            p,
            convention: Convention::V,
            family: FamilyClass::Packing,
            oscillation: Oscillation::BestApprox,
        }
    }

    /// Sparse Brudnyi `SV^{k,λ}_{p,q}`.
    pub fn sv(k: u32, q: u32, lambda: T, p: T) -> Self {
        NormParams {
            convention: Convention::SV,
            family: FamilyClass::sparse(),
            ..Self::v(k, q, lambda, p)
        }
    }

    /// Fractional sparse `S̃V^{k,λ}_{p,q}`: families sparse of order `1 - λ/n`.
    pub fn svt(dim: usize, k: u32, q: u32, lambda: T, p: T) -> Self {
        NormParams {
            family: FamilyClass::Sparse {
                order: 1.0 - lambda.as_f64() / dim as f64,
            },
            ..Self::sv(k, q, lambda, p)
        }
    }

    /// Approximation by zero over packings; equals `‖f‖_p` for step functions.
    pub fn riesz(p: T) -> Self {
        Self::v(0, 1, T::zero(), p)
    }

    pub fn with_family(mut self, family: FamilyClass) -> Self {
        self.family = family;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_kq(self.k, self.q)?;
        if !(self.p >= T::one()) {
            return Err(Error::Exponent(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.lambda >= T::zero() && self.lambda < T::count(dim)) {
            return Err(Error::FractionalOrder {
                lambda: self.lambda.as_f64(),
                dim,
            });
        }
        if self.oscillation == Oscillation::Mean && self.k != 1 {
            return Err(Error::Params(format!(
                "mean oscillation needs k = 1, got k = {}",
                self.k
            )));
        }
        if let FamilyClass::Sparse { order } = self.family {
            if !(order > 0.0 && order <= 1.0) {
                return Err(Error::Params(format!("sparse order {order} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Value of a functional, exact or as a certified interval, with the family
/// achieving the lower value.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "")]
pub struct NormReport<T: Scalar> {
    pub value_lower: T,
    #[serde(with = "exponent_serde")]
    pub value_upper: T,
    pub exact: bool,
    pub params: NormParams<T>,
    pub witness: CubeFamily,
    /// All suprema run over dyadic families only.
    pub dyadic: bool,
    /// Supremum of the `|Q|`-weighted form, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_weighted: Option<T>,
    /// Families breaking `E-form <= Q-form <= 2^{1/p} E-form`, when checked.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub form_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub families_checked: Option<usize>,
}

impl<T: Scalar> NormReport<T> {
    fn exact(value: T, params: &NormParams<T>, witness: CubeFamily) -> Self {
        NormReport {
            value_lower: value,
            value_upper: value,
            exact: true,
            params: params.clone(),
            witness,
            dyadic: true,
            q_weighted: None,
            form_violations: None,
            families_checked: None,
        }
    }

    /// The exact value, or the lower end of the interval.
    pub fn value(&self) -> T {
        self.value_lower
    }
}

/// `(∫_c |f - f_c|^q)^{1/q}`.
pub fn mean_oscillation<T: Scalar>(f: &GridFunction<T>, c: &CubeId, q: u32) -> T {
    let avg = f.average(c);
    let h = f.cell_measure();
    let vals = f.values();
    let s: T = f
        .tree()
        .cells_in(c)
        .map(|i| {
            let d = (vals[i] - avg).abs();
            if q == 1 {
                d
            } else {
                d.powi(q as i32)
            }
        })
        .sum();
    let s = s * h;
    if q == 1 {
        s
    } else {
        s.powf(T::count(q as usize).recip())
    }
}

/// Scaled local error `s(Q)` for every node, in breadth-first order.
pub fn local_weights<T: Scalar>(f: &GridFunction<T>, params: &NormParams<T>) -> Result<Vec<T>> {
    params.validate(f.dim())?;
    let tree = f.tree();
    let eng = LocalApproximation::new(f);
    let e = scale_exponent(f.dim(), params.q, params.lambda, params.convention);
    (0..tree.node_count())
        .into_par_iter()
        .map(|idx| {
            let c = tree.cube(idx);
            let err = match params.oscillation {
                Oscillation::Mean => mean_oscillation(f, &c, params.q),
                Oscillation::BestApprox => eng.best_fit(&c, params.k, params.q)?.error,
            };
            Ok(c.measure::<T>().powf(e) * err)
        })
        .collect()
}

/// `‖Σ s(Q) 1_{E_Q}‖_p` for a given family.
pub fn evaluate_family<T: Scalar>(weights: &[T], family: &CubeFamily, p: T) -> T {
    let tree = family.tree();
    let h = T::lit(0.5).powi((tree.dim() as u32 * tree.depth()) as i32);
    let parts = family
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &n)| (weights[n], family.core_cells(i).len()));
    combine(parts, h, p)
}

/// `(Σ s(Q)^p |Q|)^{1/p}` for a given family.
pub fn evaluate_family_q_form<T: Scalar>(weights: &[T], family: &CubeFamily, p: T) -> T {
    let tree = family.tree();
    let h = T::lit(0.5).powi((tree.dim() as u32 * tree.depth()) as i32);
    let parts = family
        .nodes()
        .iter()
        .map(|&n| (weights[n], tree.cells_per_cube(tree.level_of(n))));
    combine(parts, h, p)
}

fn combine<T: Scalar>(parts: impl Iterator<Item = (T, usize)>, h: T, p: T) -> T {
    if p.is_infinite() {
        return parts.filter(|(_, c)| *c > 0).fold(T::zero(), |m, (s, _)| m.max(s));
    }
    let sum: T = parts.map(|(s, c)| s.powf(p) * T::count(c)).sum();
    (sum * h).powf(p.recip())
}

fn ties(a: f64, b: f64) -> bool {
    a >= b - 4.0 * f64::EPSILON * a.abs().max(b.abs())
}

/// Exact supremum over dyadic packings by tree dynamic programming; ties go
/// to the shallowest packing. `p = ∞` gives the largest single `s(Q)`.
pub fn packing_sup_norm<T: Scalar>(f: &GridFunction<T>, params: &NormParams<T>) -> Result<NormReport<T>> {
    if params.family != FamilyClass::Packing {
        return Err(Error::Params(format!(
            "packing_sup_norm needs the packing class, got {}",
            params.family
        )));
    }
    let w = local_weights(f, params)?;
    let (value, witness) = packing_dp(f, &w, params.p);
    Ok(NormReport::exact(value, params, witness))
}

/// DP on given weights; returns the witness value and the witness.
fn packing_dp<T: Scalar>(f: &GridFunction<T>, w: &[T], p: T) -> (T, CubeFamily) {
    let tree = f.tree();
    let n = tree.node_count();
    let chosen: Vec<usize> = if p.is_infinite() {
        let mut best = 0;
        for i in 1..n {
            if w[i] > w[best] {
                best = i;
            }
        }
        vec![best]
    } else {
        let h = f.cell_measure();
        let a: Vec<T> = (0..n)
            .map(|i| w[i].powf(p) * T::count(tree.cells_per_cube(tree.level_of(i))) * h)
            .collect();
        let mut best = a.clone();
        let mut take_self = vec![true; n];
        let finest = tree.level_offset(tree.depth());
        for i in (0..finest).rev() {
            let s: T = tree.child_indices(i).iter().map(|c| best[*c]).sum();
            if !ties(a[i].as_f64(), s.as_f64()) {
                best[i] = s;
                take_self[i] = false;
            }
        }
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if take_self[i] {
                out.push(i);
            } else {
                stack.extend(tree.child_indices(i));
            }
        }
        out
    };
    let cubes: Vec<CubeId> = chosen.iter().map(|&i| tree.cube(i)).collect();
    let fam = validate(tree, &cubes, FamilyClass::Packing).expect("DP selects an antichain");
    (evaluate_family(w, &fam, p), fam)
}

/// Exact supremum over every family of the parameter class by exhaustive
/// enumeration (small trees only). Also reports the `|Q|`-weighted form and
/// checks `E-form <= Q-form <= 2^{1/p} E-form` on each family.
pub fn sparse_sup_exhaustive<T: Scalar>(f: &GridFunction<T>, params: &NormParams<T>) -> Result<NormReport<T>> {
    params.validate(f.dim())?;
    let catalog = FamilyCatalog::get(f.dim(), f.depth(), params.family).map_err(|e| match e {
        Error::OracleScale(m) => Error::OracleScale(format!("{m}; use sparse_norm_bounds at this size")),
        other => other,
    })?;
    let w = local_weights(f, params)?;
    let tree = f.tree();
    let h = f.cell_measure();
    let p = params.p;
    let cells: Vec<usize> = (0..tree.node_count())
        .map(|i| tree.cells_per_cube(tree.level_of(i)))
        .collect();
    let wp: Vec<T> = if p.is_infinite() {
        w.clone()
    } else {
        w.iter().map(|s| s.powf(p)).collect()
    };
    let two_p = if p.is_infinite() {
        T::one()
    } else {
        T::lit(2.0).powf(p.recip())
    };
    let tol = T::lit(FORM_TOL);

    let eval = |fam: &CompactFamily| -> (T, T) {
        if p.is_infinite() {
            let e = fam
                .members
                .iter()
                .filter(|m| m.1 > 0)
                .fold(T::zero(), |acc, m| acc.max(w[m.0 as usize]));
            let q = fam.members.iter().fold(T::zero(), |acc, m| acc.max(w[m.0 as usize]));
            (e, q)
        } else {
            let (mut se, mut sq) = (T::zero(), T::zero());
            for &(node, core) in &fam.members {
                se = se + wp[node as usize] * T::count(core as usize);
                sq = sq + wp[node as usize] * T::count(cells[node as usize]);
            }
            ((se * h).powf(p.recip()), (sq * h).powf(p.recip()))
        }
    };

    #[derive(Clone, Copy)]
    struct Acc<T> {
        best: T,
        idx: usize,
        qmax: T,
        violations: usize,
    }
    let fold = |acc: Acc<T>, (i, fam): (usize, &CompactFamily)| {
        let (e, q) = eval(fam);
        let slack = T::one() + tol;
        let mut acc = acc;
        if !(e <= q * slack && q <= two_p * e * slack) {
            acc.violations += 1;
        }
        if e > acc.best || (e == acc.best && i < acc.idx) {
            acc.best = e;
            acc.idx = i;
        }
        acc.qmax = acc.qmax.max(q);
        acc
    };
    let init = Acc {
        best: T::neg_infinity(),
        idx: usize::MAX,
        qmax: T::zero(),
        violations: 0,
    };
    let fams = catalog.families();
    let acc = if fams.len() > 4096 {
        fams.par_iter().enumerate().fold(|| init, fold).reduce(
            || init,
            |a, b| {
                let (best, idx) = if b.best > a.best || (b.best == a.best && b.idx < a.idx) {
                    (b.best, b.idx)
                } else {
                    (a.best, a.idx)
                };
                Acc {
                    best,
                    idx,
                    qmax: a.qmax.max(b.qmax),
                    violations: a.violations + b.violations,
                }
            },
        )
    } else {
        fams.iter().enumerate().fold(init, fold)
    };
    let witness = catalog.family(acc.idx);
    let mut report = NormReport::exact(acc.best, params, witness);
    report.q_weighted = Some(acc.qmax);
    report.form_violations = Some(acc.violations);
    report.families_checked = Some(fams.len());
    Ok(report)
}

/// The polynomial `P` in the maximal bound `2‖M_{q,λ}(f - P)‖_p`, in the
/// local coordinates of `Q0`: zero for `k = 0`, the midpoint of the median
/// interval for `q = 1` constants, the mean for `q = 2` constants, and the
/// best fit otherwise.
pub fn reference_polynomial<T: Scalar>(
    eng: &LocalApproximation<'_, T>,
    params: &NormParams<T>,
) -> Result<LocalPoly<T>> {
    let f = eng.grid();
    let root = CubeId::root(f.dim());
    Ok(match (params.k, params.q) {
        (0, _) => LocalPoly::zero(f.dim()),
        (1, 1) => {
            let (lo, hi) = eng.median_interval(&root);
            LocalPoly::constant(f.dim(), (lo + hi) * T::lit(0.5))
        }
        (1, _) if params.oscillation == Oscillation::Mean => LocalPoly::constant(f.dim(), f.average(&root)),
        (k, q) => *eng.best_fit(&root, k, q)?.local(),
    })
}

/// `M_{q,λ}(f - P)` with `P` from [`reference_polynomial`]; cell integrals of
/// `|f - P|^q` are exact.
pub fn residual_maximal<T: Scalar>(f: &GridFunction<T>, params: &NormParams<T>) -> Result<MaximalResult<T>> {
    params.validate(f.dim())?;
    let eng = LocalApproximation::new(f);
    let poly = reference_polynomial(&eng, params)?;
    let root = CubeId::root(f.dim());
    let mut ints = vec![T::zero(); f.cell_count()];
    for (cell, v) in eng.cell_residual_powers(&root, &poly, params.q) {
        ints[cell] = v;
    }
    fractional_maximal_from_cell_integrals(f.tree(), &ints, T::count(params.q as usize), params.lambda)
}

/// Certified interval for a sparse functional at any size: the lower end is
/// the best of `{Q0}`, the packing DP witness and the stopping-time family
/// of `|f - P|`; the upper end is `2‖M_{q,λ}(f - P)‖_p`.
pub fn sparse_norm_bounds<T: Scalar>(f: &GridFunction<T>, params: &NormParams<T>) -> Result<NormReport<T>> {
    params.validate(f.dim())?;
    let w = local_weights(f, params)?;
    let tree = f.tree();
    let p = params.p;

    let mut candidates: Vec<CubeFamily> = Vec::new();
    candidates.push(validate(tree, &[CubeId::root(f.dim())], params.family).expect("singleton is admissible"));
    let (_, packing) = packing_dp(f, &w, p);
    if let Ok(fam) = packing.revalidate(params.family) {
        candidates.push(fam);
    }
    let eng = LocalApproximation::new(f);
    let poly = reference_polynomial(&eng, params)?;
    let root = CubeId::root(f.dim());
    let mut density = vec![T::zero(); f.cell_count()];
    let h = f.cell_measure();
    for (cell, v) in eng.cell_residual_powers(&root, &poly, 1) {
        density[cell] = v / h;
    }
    let g = GridFunction::new(f.dim(), f.depth(), density)?;
    if let Ok(cz) = cz_family(&g, T::lit(2.0)) {
        if let Ok(fam) = cz.revalidate(params.family) {
            candidates.push(fam);
        }
    }
    let (mut best, mut witness) = (T::neg_infinity(), None);
    for fam in candidates {
        let v = evaluate_family(&w, &fam, p);
        if v > best {
            best = v;
            witness = Some(fam);
        }
    }

    let m = residual_maximal(f, params)?;
    let upper = T::lit(2.0) * lp_norm(&m.values, p)?;
    Ok(NormReport {
        value_lower: best,
        value_upper: upper,
        exact: false,
        params: params.clone(),
        witness: witness.expect("at least one candidate"),
        dyadic: true,
        q_weighted: None,
        form_violations: None,
        families_checked: None,
    })
}

/// Garsia–Rodemich functional
/// `sup_π Σ_{Q∈π} ∫_Q |f - f_Q| / (Σ_{Q∈π} |Q|)^{1/p'}` over dyadic packings.
///
/// Exact up to [`GARO_EXACT_CELLS`] finest cells, by a knapsack DP over the
/// total measure of the packing. Beyond that the value is bracketed between
/// the best of single cubes, full levels and the `JN_p` witness, and `JN_p`.
pub fn garo_norm<T: Scalar>(f: &GridFunction<T>, p: T) -> Result<NormReport<T>> {
    if !(p > T::one()) {
        return Err(Error::Exponent(format!("GaRo needs p > 1, got {p}")));
    }
    let params = NormParams::jn(p);
    let w = local_weights(f, &params)?;
    let tree = f.tree();
    let h = f.cell_measure();
    let inv_pp = if p.is_infinite() {
        T::one()
    } else {
        T::one() - p.recip()
    };
    let n = tree.node_count();
    // Oscillation mass ∫_Q |f - f_Q| and size in cells per node.
    let cells: Vec<usize> = (0..n).map(|i| tree.cells_per_cube(tree.level_of(i))).collect();
    let mass: Vec<T> = (0..n).map(|i| w[i] * T::count(cells[i]) * h).collect();
    let ratio = |m: T, c: usize| {
        if c == 0 {
            T::zero()
        } else {
            m / (T::count(c) * h).powf(inv_pp)
        }
    };

    if f.cell_count() <= GARO_EXACT_CELLS {
        let (value, nodes) = garo_knapsack(f, &mass, &cells, &ratio);
        let cubes: Vec<CubeId> = nodes.iter().map(|&i| tree.cube(i)).collect();
        let witness = validate(tree, &cubes, FamilyClass::Packing).expect("knapsack selects an antichain");
        return Ok(NormReport::exact(value, &NormParams { p, ..params }, witness));
    }

    let mut best = (T::neg_infinity(), vec![0usize]);
    let mut consider = |nodes: Vec<usize>| {
        let m: T = nodes.iter().map(|&i| mass[i]).sum();
        let c: usize = nodes.iter().map(|&i| cells[i]).sum();
        let r = ratio(m, c);
        if r > best.0 {
            best = (r, nodes);
        }
    };
    for i in 0..n {
        consider(vec![i]);
    }
    for l in 0..=tree.depth() {
        consider((tree.level_offset(l)..tree.level_offset(l + 1)).collect());
    }
    let (jn, jn_witness) = packing_dp(f, &w, p);
    consider(jn_witness.nodes().to_vec());
    let cubes: Vec<CubeId> = best.1.iter().map(|&i| tree.cube(i)).collect();
    let witness = validate(tree, &cubes, FamilyClass::Packing).expect("antichain");
    Ok(NormReport {
        value_lower: best.0,
        value_upper: jn.max(best.0),
        exact: false,
        params: NormParams { p, ..params },
        witness,
        dyadic: true,
        q_weighted: None,
        form_violations: None,
        families_checked: None,
    })
}

/// Max-plus knapsack: `B_Q[m]` is the largest oscillation mass of a packing
/// inside `Q` covering exactly `m` finest cells.
fn garo_knapsack<T: Scalar>(
    f: &GridFunction<T>,
    mass: &[T],
    cells: &[usize],
    ratio: &impl Fn(T, usize) -> T,
) -> (T, Vec<usize>) {
    let tree = f.tree();
    let n = tree.node_count();
    let ninf = T::neg_infinity();
    // partial[i][j]: profile of the first j+1 children of node i combined.
    let mut profile: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut partial: Vec<Vec<Vec<T>>> = vec![Vec::new(); n];
    for i in (0..n).rev() {
        let kids = tree.child_indices(i);
        let mut prof = if kids.is_empty() {
            vec![T::zero(), ninf]
        } else {
            let mut acc = vec![T::zero()];
            let mut parts = Vec::new();
            for c in &kids {
                let b = &profile[*c];
                let mut out = vec![ninf; acc.len() + b.len() - 1];
                for (x, ax) in acc.iter().enumerate() {
                    if *ax == ninf {
                        continue;
                    }
                    for (y, by) in b.iter().enumerate() {
                        if *by == ninf {
                            continue;
                        }
                        let v = *ax + *by;
                        if v > out[x + y] {
                            out[x + y] = v;
                        }
                    }
                }
                acc = out;
                parts.push(acc.clone());
            }
            partial[i] = parts;
            acc
        };
        let full = cells[i];
        if mass[i] >= prof[full] {
            prof[full] = mass[i];
        }
        profile[i] = prof;
    }
    let root = &profile[0];
    let mut best = (T::zero(), 0usize);
    for (m, v) in root.iter().enumerate().skip(1) {
        if *v == ninf {
            continue;
        }
        let r = ratio(*v, m);
        if r > best.0 {
            best = (r, m);
        }
    }
    if best.1 == 0 {
        // Zero oscillation everywhere: report {Q0}.
        return (T::zero(), vec![0]);
    }
    let mut out = Vec::new();
    let mut stack = vec![(0usize, best.1)];
    while let Some((i, m)) = stack.pop() {
        if m == 0 {
            continue;
        }
        if m == cells[i] && profile[i][m] == mass[i] {
            out.push(i);
            continue;
        }
        let kids = tree.child_indices(i);
        let mut target = m;
        for j in (0..kids.len()).rev() {
            let c = kids[j];
            let b = &profile[c];
            if j == 0 {
                stack.push((c, target));
                break;
            }
            let prev = &partial[i][j - 1];
            let want = partial[i][j][target];
            let y = (0..b.len())
                .find(|&y| {
                    y <= target
                        && target - y < prev.len()
                        && b[y] != ninf
                        && prev[target - y] != ninf
                        && prev[target - y] + b[y] == want
                })
                .expect("knapsack split exists");
            stack.push((c, y));
            target -= y;
        }
    }
    out.sort_unstable();
    (best.0, out)
}
