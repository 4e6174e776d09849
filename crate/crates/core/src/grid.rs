//! Piecewise-constant functions on the finest cells of a dyadic partition of
//! the unit cube `[0,1)^n`, dyadic cube addressing, and exact moments.
//!
//! Cubes are numbered breadth first: level by level, and row-major by
//! coordinates within a level. The finest level of a depth-`L` tree is the
//! cell grid itself, so cell `i` of a [`GridFunction`] is tree node
//! `DyadicTree::level_offset(L) + i`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest supported grid depth.
pub const MAX_DEPTH: u32 = 24;

/// A dyadic cube: `level` and integer coordinates in `[0, 2^level)^n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeId {
    level: u32,
    coords: [u32; 2],
    dim: u8,
}

#[derive(Serialize, Deserialize)]
struct CubeRecord {
    level: u32,
    coords: Vec<u32>,
}

impl CubeId {
    /// The unit cube `Q0` in dimension `dim`.
    pub fn root(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
        CubeId {
            level: 0,
            coords: [0, 0],
            dim: dim as u8,
        }
    }

    pub fn new(level: u32, coords: &[u32]) -> Result<Self> {
        let invalid = || Error::InvalidCube {
            level,
            coords: coords.to_vec(),
            depth: MAX_DEPTH,
        };
        if coords.is_empty() || coords.len() > 2 || level > MAX_DEPTH {
            return Err(invalid());
        }
        let side = 1u32 << level;
        if coords.iter().any(|&c| c >= side) {
            return Err(invalid());
        }
        let mut c = [0u32; 2];
        c[..coords.len()].copy_from_slice(coords);
        Ok(CubeId {
            level,
            coords: c,
            dim: coords.len() as u8,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords[..self.dim as usize]
    }

    /// Lebesgue measure `2^{-n·level}`.
    pub fn measure<T: Scalar>(&self) -> T {
        T::lit(0.5).powi((self.dim as u32 * self.level) as i32)
    }

    /// Side length `2^{-level}`.
    pub fn side<T: Scalar>(&self) -> T {
        T::lit(0.5).powi(self.level as i32)
    }

    /// Lower corner of the cube.
    pub fn origin<T: Scalar>(&self) -> [T; 2] {
        let s: T = self.side();
        [
            T::count(self.coords[0] as usize) * s,
            T::count(self.coords[1] as usize) * s,
        ]
    }

    /// Non-strict inclusion `other ⊆ self`.
    pub fn contains(&self, other: &CubeId) -> bool {
        if other.dim != self.dim || other.level < self.level {
            return false;
        }
        let shift = other.level - self.level;
        (0..self.dim()).all(|i| other.coords[i] >> shift == self.coords[i])
    }

    pub fn strictly_contains(&self, other: &CubeId) -> bool {
        other.level > self.level && self.contains(other)
    }

    /// The `2^n` dyadic children in row-major order. No depth check.
    pub fn children(&self) -> Vec<CubeId> {
        let level = self.level + 1;
        let [a, b] = self.coords;
        match self.dim {
            1 => vec![
                CubeId {
                    level,
                    coords: [2 * a, 0],
                    dim: 1,
                },
                CubeId {
                    level,
                    coords: [2 * a + 1, 0],
                    dim: 1,
                },
            ],
            _ => {
                let mut out = Vec::with_capacity(4);
                for da in 0..2 {
                    for db in 0..2 {
                        out.push(CubeId {
                            level,
                            coords: [2 * a + da, 2 * b + db],
                            dim: 2,
                        });
                    }
                }
                out
            }
        }
    }

    pub fn parent(&self) -> Option<CubeId> {
        (self.level > 0).then(|| CubeId {
            level: self.level - 1,
            coords: [self.coords[0] >> 1, self.coords[1] >> 1],
            dim: self.dim,
        })
    }

    /// The ancestor (or self) at `level`, which must not exceed `self.level()`.
    pub fn ancestor_at(&self, level: u32) -> CubeId {
        debug_assert!(level <= self.level);
        let shift = self.level - level;
        CubeId {
            level,
            coords: [self.coords[0] >> shift, self.coords[1] >> shift],
            dim: self.dim,
        }
    }
}

impl fmt::Debug for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = 1u64 << self.level;
        let axis = |c: u32| format!("[{}/{side},{}/{side})", c, c + 1);
        match self.dim {
            1 => write!(f, "{}", axis(self.coords[0])),
            _ => write!(f, "{}x{}", axis(self.coords[0]), axis(self.coords[1])),
        }
    }
}

impl Serialize for CubeId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CubeRecord {
            level: self.level,
            coords: self.coords().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CubeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = CubeRecord::deserialize(d)?;
        CubeId::new(r.level, &r.coords).map_err(serde::de::Error::custom)
    }
}

/// The dyadic tree `D(Q0)` truncated at `depth`, with breadth-first node numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicTree {
    dim: usize,
    depth: u32,
}

impl DyadicTree {
    pub fn new(dim: usize, depth: u32) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension: expected 1 or 2, found {dim}")));
        }
        if depth > MAX_DEPTH || dim as u32 * depth > MAX_DEPTH {
            return Err(Error::InvalidGrid(format!(
                "depth: {depth} too large for dimension {dim}"
            )));
        }
        Ok(DyadicTree { dim, depth })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of cubes at `level`.
    pub fn level_len(&self, level: u32) -> usize {
        1usize << (self.dim as u32 * level)
    }

    /// BFS index of the first cube at `level`.
    pub fn level_offset(&self, level: u32) -> usize {
        let b = 1usize << self.dim;
        ((1usize << (self.dim as u32 * level)) - 1) / (b - 1)
    }

    pub fn node_count(&self) -> usize {
        self.level_offset(self.depth + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.level_len(self.depth)
    }

    pub fn cells_per_side(&self) -> usize {
        1usize << self.depth
    }

    pub fn is_valid(&self, c: &CubeId) -> bool {
        c.dim() == self.dim && c.level <= self.depth
    }

    fn check(&self, c: &CubeId) -> Result<()> {
        if self.is_valid(c) {
            Ok(())
        } else {
            Err(Error::InvalidCube {
                level: c.level,
                coords: c.coords().to_vec(),
                depth: self.depth,
            })
        }
    }

    pub fn index(&self, c: &CubeId) -> usize {
        debug_assert!(self.is_valid(c));
        let within = match self.dim {
            1 => c.coords[0] as usize,
            _ => ((c.coords[0] as usize) << c.level) | c.coords[1] as usize,
        };
        self.level_offset(c.level) + within
    }

    pub fn level_of(&self, idx: usize) -> u32 {
        let mut level = 0;
        while self.level_offset(level + 1) <= idx {
            level += 1;
        }
        level
    }

    pub fn cube(&self, idx: usize) -> CubeId {
        let level = self.level_of(idx);
        let within = (idx - self.level_offset(level)) as u32;
        match self.dim {
            1 => CubeId {
                level,
                coords: [within, 0],
                dim: 1,
            },
            _ => {
                let mask = (1u32 << level) - 1;
                CubeId {
                    level,
                    coords: [within >> level, within & mask],
                    dim: 2,
                }
            }
        }
    }

    /// Children of `c`; fails at the finest level.
    pub fn children(&self, c: &CubeId) -> Result<Vec<CubeId>> {
        self.check(c)?;
        if c.level >= self.depth {
            return Err(Error::FinestLevel);
        }
        Ok(c.children())
    }

    /// BFS indices of the children of node `idx` (empty at the finest level).
    pub fn child_indices(&self, idx: usize) -> Vec<usize> {
        let c = self.cube(idx);
        if c.level >= self.depth {
            return Vec::new();
        }
        c.children().iter().map(|ch| self.index(ch)).collect()
    }

    pub fn parent_index(&self, idx: usize) -> Option<usize> {
        self.cube(idx).parent().map(|p| self.index(&p))
    }

    /// Row-major index of a finest cell from its coordinates.
    pub fn cell_index(&self, coords: [u32; 2]) -> usize {
        match self.dim {
            1 => coords[0] as usize,
            _ => ((coords[0] as usize) << self.depth) | coords[1] as usize,
        }
    }

    pub fn cell_coords(&self, cell: usize) -> [u32; 2] {
        match self.dim {
            1 => [cell as u32, 0],
            _ => [(cell >> self.depth) as u32, (cell & ((1 << self.depth) - 1)) as u32],
        }
    }

    /// The finest cell as a cube.
    pub fn cell_cube(&self, cell: usize) -> CubeId {
        CubeId {
            level: self.depth,
            coords: self.cell_coords(cell),
            dim: self.dim as u8,
        }
    }

    /// Finest cells inside `c`, in row-major order.
    pub fn cells_in(&self, c: &CubeId) -> impl Iterator<Item = usize> {
        let tree = *self;
        let shift = self.depth - c.level;
        let m = 1u32 << shift;
        let (r0, r1) = (c.coords[0] << shift, c.coords[1] << shift);
        let rows = m;
        let cols = if self.dim == 1 { 1 } else { m };
        (0..rows).flat_map(move |i| {
            (0..cols).map(move |j| {
                if tree.dim == 1 {
                    (r0 + i) as usize
                } else {
                    tree.cell_index([r0 + i, r1 + j])
                }
            })
        })
    }

    /// Number of finest cells inside a cube at `level`.
    pub fn cells_per_cube(&self, level: u32) -> usize {
        1usize << (self.dim as u32 * (self.depth - level))
    }
}

/// Cell-average values of `f` on the finest dyadic cells of `[0,1)^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    tree: DyadicTree,
    values: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct GridFile<T> {
    dimension: usize,
    depth: u32,
    values: Vec<T>,
}

#[derive(Serialize)]
struct GridFileRef<'a, T> {
    dimension: usize,
    depth: u32,
    values: &'a [T],
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(dim: usize, depth: u32, values: Vec<T>) -> Result<Self> {
        let tree = DyadicTree::new(dim, depth)?;
        let expected = tree.cell_count();
        if values.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "values: expected {expected} entries (2^(dimension*depth)) for dimension {dim}, depth {depth}, found {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("values[{i}] is not finite")));
        }
        Ok(GridFunction { tree, values })
    }

    pub fn constant(dim: usize, depth: u32, c: T) -> Result<Self> {
        let tree = DyadicTree::new(dim, depth)?;
        Self::new(dim, depth, vec![c; tree.cell_count()])
    }

    /// Builds a grid from a function of the finest cell cube.
    pub fn from_cells(dim: usize, depth: u32, mut f: impl FnMut(CubeId) -> T) -> Result<Self> {
        let tree = DyadicTree::new(dim, depth)?;
        let values = (0..tree.cell_count()).map(|i| f(tree.cell_cube(i))).collect();
        Self::new(dim, depth, values)
    }

    pub fn tree(&self) -> DyadicTree {
        self.tree
    }

    pub fn dim(&self) -> usize {
        self.tree.dim
    }

    pub fn depth(&self) -> u32 {
        self.tree.depth
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    /// Measure of one finest cell, `2^{-nL}`.
    pub fn cell_measure(&self) -> T {
        T::lit(0.5).powi((self.tree.dim as u32 * self.tree.depth) as i32)
    }

    /// `∫_c f`, exact for piecewise-constant data.
    pub fn integral(&self, c: &CubeId) -> T {
        let s: T = self.tree.cells_in(c).map(|i| self.values[i]).sum();
        s * self.cell_measure()
    }

    /// Integral average `f_c`: the arithmetic mean of the cell values inside `c`.
    pub fn average(&self, c: &CubeId) -> T {
        let n = self.tree.cells_per_cube(c.level);
        let s: T = self.tree.cells_in(c).map(|i| self.values[i]).sum();
        s / T::count(n)
    }

    /// Applies `g` cellwise.
    pub fn map(&self, g: impl Fn(T) -> T) -> Self {
        GridFunction {
            tree: self.tree,
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(|v| v.abs())
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn shifted(&self, c: T) -> Self {
        self.map(|v| v + c)
    }

    /// Cellwise sum; both grids must share dimension and depth.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.tree != other.tree {
            return Err(Error::InvalidGrid("grids differ in dimension or depth".into()));
        }
        Ok(GridFunction {
            tree: self.tree,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
        })
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> GridFunction<U> {
        GridFunction {
            tree: self.tree,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T: Scalar> Serialize for GridFunction<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridFileRef {
            dimension: self.tree.dim,
            depth: self.tree.depth,
            values: &self.values,
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for GridFunction<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = GridFile::<T>::deserialize(d)?;
        GridFunction::new(file.dimension, file.depth, file.values).map_err(serde::de::Error::custom)
    }
}

/// Highest monomial order kept by [`MomentTable::new`]: `2(k_max - 1)` with `k_max = 3`.
pub const MAX_MOMENT_ORDER: u32 = 4;

/// Multi-indices `α` with `|α| <= order`, graded, then by decreasing first component.
/// In dimension 1 the second component is always zero.
pub fn multi_indices(dim: usize, order: u32) -> Vec<[u32; 2]> {
    let mut out = Vec::new();
    for deg in 0..=order {
        for a in (0..=deg).rev() {
            let b = deg - a;
            if dim == 1 && b > 0 {
                continue;
            }
            out.push([a, b]);
        }
    }
    out
}

/// Mean of `t^a` over `[-1, 1]`.
#[inline]
pub(crate) fn unit_moment<T: Scalar>(a: u32) -> T {
    if a % 2 == 1 {
        T::zero()
    } else {
        T::one() / T::count(a as usize + 1)
    }
}

fn binomial(n: u32, k: u32) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Per-cube moments `∫_Q f(x) t^α dx` in the cube's local coordinates
/// `t = (x - center) / (side/2) ∈ [-1,1]^n`, for every cube of the tree.
///
/// Built bottom-up: a parent's local moments are an exact binomial
/// re-expansion of its children's, so no monomial is ever evaluated far
/// from its own cube.
#[derive(Clone, Debug)]
pub struct MomentTable<T> {
    tree: DyadicTree,
    order: u32,
    alphas: Vec<[u32; 2]>,
    data: Vec<T>,
}

impl<T: Scalar> MomentTable<T> {
    pub fn new(f: &GridFunction<T>) -> Self {
        Self::with_order(f, MAX_MOMENT_ORDER)
    }

    pub fn with_order(f: &GridFunction<T>, order: u32) -> Self {
        let tree = f.tree();
        let alphas = multi_indices(tree.dim, order);
        let nm = alphas.len();
        let mut data = vec![T::zero(); tree.node_count() * nm];
        let h = f.cell_measure();

        let leaf0 = tree.level_offset(tree.depth);
        for (i, &v) in f.values().iter().enumerate() {
            let base = (leaf0 + i) * nm;
            for (pos, a) in alphas.iter().enumerate() {
                data[base + pos] = v * h * unit_moment::<T>(a[0]) * unit_moment::<T>(a[1]);
            }
        }

        // shift[s][a][j]: coefficient of t_child^j in t_parent^a, child half s (0 lower, 1 upper)
        let d = order as usize;
        let mut shift = vec![vec![vec![T::zero(); d + 1]; d + 1]; 2];
        for (s, sign) in [(0usize, -1.0f64), (1, 1.0)] {
            for a in 0..=d {
                for j in 0..=a {
                    let c = binomial(a as u32, j as u32) as f64 * sign.powi((a - j) as i32) * 0.5f64.powi(a as i32);
                    shift[s][a][j] = T::lit(c);
                }
            }
        }
        let pos_of = |a: [u32; 2]| alphas.iter().position(|x| *x == a).unwrap();

        for level in (0..tree.depth).rev() {
            for idx in tree.level_offset(level)..tree.level_offset(level + 1) {
                for ch in tree.child_indices(idx) {
                    let cc = tree.cube(ch);
                    let s0 = (cc.coords[0] & 1) as usize;
                    let s1 = (cc.coords[1] & 1) as usize;
                    for (pos, a) in alphas.iter().enumerate() {
                        let mut acc = T::zero();
                        for j0 in 0..=a[0] {
                            let c0 = shift[s0][a[0] as usize][j0 as usize];
                            for j1 in 0..=a[1] {
                                let c1 = if tree.dim == 1 {
                                    T::one()
                                } else {
                                    shift[s1][a[1] as usize][j1 as usize]
                                };
                                acc = acc + c0 * c1 * data[ch * nm + pos_of([j0, j1])];
                            }
                        }
                        data[idx * nm + pos] = data[idx * nm + pos] + acc;
                    }
                }
            }
        }
        MomentTable {
            tree,
            order,
            alphas,
            data,
        }
    }

    pub fn tree(&self) -> DyadicTree {
        self.tree
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    fn position(&self, alpha: &[u32]) -> Result<usize> {
        let a = [alpha.first().copied().unwrap_or(0), alpha.get(1).copied().unwrap_or(0)];
        if a[0] + a[1] > self.order || (self.tree.dim == 1 && a[1] > 0) {
            return Err(Error::MomentOrder);
        }
        Ok(self.alphas.iter().position(|x| *x == a).expect("multi-index present"))
    }

    fn check(&self, c: &CubeId) -> Result<usize> {
        if !self.tree.is_valid(c) {
            return Err(Error::InvalidCube {
                level: c.level,
                coords: c.coords().to_vec(),
                depth: self.tree.depth,
            });
        }
        Ok(self.tree.index(c))
    }

    /// `∫_c f(x) t^α dx` with `t` the local coordinates of `c`.
    pub fn local_moment(&self, c: &CubeId, alpha: &[u32]) -> Result<T> {
        let idx = self.check(c)?;
        let pos = self.position(alpha)?;
        Ok(self.data[idx * self.alphas.len() + pos])
    }

    /// `∫_c f(x) x^α dx` in absolute coordinates.
    pub fn moment(&self, c: &CubeId, alpha: &[u32]) -> Result<T> {
        let idx = self.check(c)?;
        self.position(alpha)?;
        let a = [alpha.first().copied().unwrap_or(0), alpha.get(1).copied().unwrap_or(0)];
        let side: T = c.side();
        let h = side * T::lit(0.5);
        let origin = c.origin::<T>();
        let center = [origin[0] + h, origin[1] + h];
        let nm = self.alphas.len();
        let mut acc = T::zero();
        for j0 in 0..=a[0] {
            let w0 = T::count(binomial(a[0], j0) as usize) * center[0].powi((a[0] - j0) as i32) * h.powi(j0 as i32);
            for j1 in 0..=a[1] {
                let w1 = T::count(binomial(a[1], j1) as usize) * center[1].powi((a[1] - j1) as i32) * h.powi(j1 as i32);
                let pos = self.alphas.iter().position(|x| *x == [j0, j1]).unwrap();
                acc = acc + w0 * w1 * self.data[idx * nm + pos];
            }
        }
        Ok(acc)
    }

    /// Integral average over `c`.
    pub fn average(&self, c: &CubeId) -> Result<T> {
        let idx = self.check(c)?;
        Ok(self.data[idx * self.alphas.len()] / c.measure())
    }
}
