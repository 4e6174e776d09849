//! Brute-force reference computations shared by the integration tests.
//! Nothing here calls into the library's norm or family code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A dyadic cube as the list of finest cells it covers.
#[derive(Clone, Debug)]
pub struct Cube {
    pub level: u32,
    pub cells: Vec<usize>,
    pub parent: Option<usize>,
}

/// All dyadic cubes of `[0,1)^n` down to `depth`, coarsest level first and
/// row-major within a level. Finest cell `(a, b)` has index `a·2^L + b`.
pub fn cubes(dim: usize, depth: u32) -> Vec<Cube> {
    let mut out = Vec::new();
    let mut start_prev = 0;
    for level in 0..=depth {
        let side = 1usize << level;
        let span = 1usize << (depth - level);
        let start = out.len();
        let count = if dim == 1 { side } else { side * side };
        for j in 0..count {
            let (a, b) = if dim == 1 { (j, 0) } else { (j / side, j % side) };
            let mut cells = Vec::new();
            if dim == 1 {
                cells.extend(a * span..(a + 1) * span);
            } else {
                for x in a * span..(a + 1) * span {
                    for y in b * span..(b + 1) * span {
                        cells.push(x * (1 << depth) + y);
                    }
                }
            }
            let parent = (level > 0).then(|| {
                let ps = side / 2;
                start_prev + if dim == 1 { a / 2 } else { (a / 2) * ps + b / 2 }
            });
            out.push(Cube { level, cells, parent });
        }
        start_prev = start;
    }
    out
}

pub fn uniform(dim: usize, depth: u32, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1usize << (dim as u32 * depth))
        .map(|_| rng.gen_range(lo..hi))
        .collect()
}

pub fn mean(vals: &[f64], cells: &[usize]) -> f64 {
    cells.iter().map(|&c| vals[c]).sum::<f64>() / cells.len() as f64
}

/// `(avg_Q |f - f_Q|^q)^{1/q}`.
pub fn mean_osc(vals: &[f64], cells: &[usize], q: f64) -> f64 {
    let m = mean(vals, cells);
    (cells.iter().map(|&c| (vals[c] - m).abs().powf(q)).sum::<f64>() / cells.len() as f64).powf(1.0 / q)
}

pub fn members(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

pub fn lp(vals: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return vals.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    (vals.iter().map(|v| v.abs().powf(p)).sum::<f64>() / vals.len() as f64).powf(1.0 / p)
}

pub fn central_median(vals: &[f64]) -> f64 {
    let mut s = vals.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    0.5 * (s[(n - 1) / 2] + s[n / 2])
}

/// `sup_{Q ∋ x} (|Q|^{λ/n - 1} ∫_Q |g|^q)^{1/q}` per finest cell, by
/// scanning every cube.
pub fn maximal(vals: &[f64], dim: usize, depth: u32, q: f64, lambda: f64) -> Vec<f64> {
    let h = 1.0 / vals.len() as f64;
    let mut out = vec![0.0f64; vals.len()];
    for c in cubes(dim, depth) {
        let meas = c.cells.len() as f64 * h;
        let int: f64 = c.cells.iter().map(|&i| vals[i].abs().powf(q)).sum::<f64>() * h;
        let v = (meas.powf(lambda / dim as f64 - 1.0) * int).powf(1.0 / q);
        for &i in &c.cells {
            out[i] = out[i].max(v);
        }
    }
    out
}

/// Nearest member ancestor of each member of `mask`.
fn member_parents(cubes: &[Cube], member: &[bool]) -> Vec<Option<usize>> {
    (0..cubes.len())
        .map(|i| {
            if !member[i] {
                return None;
            }
            let mut a = cubes[i].parent;
            while let Some(j) = a {
                if member[j] {
                    return Some(j);
                }
                a = cubes[j].parent;
            }
            None
        })
        .collect()
}

/// `Σ_{Q' ∈ Ch(Q)} |Q'|^order <= ½|Q|^order` for every member, with the
/// children sums in cell counts.
pub fn is_sparse(cubes: &[Cube], member: &[bool], order: f64) -> bool {
    let par = member_parents(cubes, member);
    let mut sums = vec![0.0f64; cubes.len()];
    for (i, p) in par.iter().enumerate() {
        if let Some(p) = p {
            sums[*p] += (cubes[i].cells.len() as f64).powf(order);
        }
    }
    (0..cubes.len())
        .filter(|&i| member[i])
        .all(|i| sums[i] <= 0.5 * (cubes[i].cells.len() as f64).powf(order) * (1.0 + 1e-12))
}

/// `|E_Q|` in cells for each member.
pub fn core_cells(cubes: &[Cube], member: &[bool]) -> Vec<usize> {
    let par = member_parents(cubes, member);
    let mut core: Vec<usize> = cubes.iter().map(|c| c.cells.len()).collect();
    for (i, p) in par.iter().enumerate() {
        if let Some(p) = p {
            core[*p] -= cubes[i].cells.len();
        }
    }
    core
}

/// `(Σ s_Q^p m_Q h)^{1/p}` over members, `m_Q` in cells.
pub fn form(weights: &[f64], member: &[bool], cells: &[usize], h: f64, p: f64) -> f64 {
    let terms = (0..weights.len()).filter(|&i| member[i]);
    if p.is_infinite() {
        return terms.filter(|&i| cells[i] > 0).fold(0.0, |m, i| m.max(weights[i]));
    }
    (terms.map(|i| weights[i].powf(p) * cells[i] as f64).sum::<f64>() * h).powf(1.0 / p)
}

/// Every value `Σ_{Q∈A} w_Q` over antichains `A` of the subtree at `root`
/// (the empty antichain included).
pub fn antichain_sums(cubes: &[Cube], w: &[f64], root: usize) -> Vec<f64> {
    let children: Vec<usize> = (0..cubes.len()).filter(|&j| cubes[j].parent == Some(root)).collect();
    let mut acc = vec![0.0];
    for c in children {
        let sub = antichain_sums(cubes, w, c);
        let mut next = Vec::with_capacity(acc.len() * sub.len());
        for a in &acc {
            for b in &sub {
                next.push(a + b);
            }
        }
        acc = next;
    }
    acc.push(w[root]);
    acc
}

/// Largest antichain sum. When the full enumeration would be too large the
/// root is split off: an antichain is either `{root}` or a union of
/// antichains of the children's subtrees, each enumerated in full.
pub fn max_antichain_sum(cubes: &[Cube], w: &[f64]) -> f64 {
    let max = |v: Vec<f64>| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
    if cubes.len() <= 31 {
        return max(antichain_sums(cubes, w, 0));
    }
    let children = (0..cubes.len()).filter(|&j| cubes[j].parent == Some(0));
    w[0].max(children.map(|c| max(antichain_sums(cubes, w, c))).sum())
}
