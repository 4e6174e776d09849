//! Families of dyadic cubes: packings (antichains), sparse families of
//! order `λ' ∈ (0,1]`, weakly sparse families, exhaustive enumeration at
//! small depth, and the Calderón–Zygmund stopping-time construction.
//!
//! Within a family, `Ch(Q)` is the set of maximal members strictly inside
//! `Q`, and the core set `E_Q = Q \ ∪Ch(Q)` is kept as a list of finest
//! cells. Core sets of distinct members are always disjoint.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeId, DyadicTree, GridFunction};
use crate::scalar::Scalar;

/// Tolerance on fractional-order comparisons `Σ|Q'|^λ' <= ½|Q|^λ'`.
pub const ORDER_TOL: f64 = 1e-12;
/// Largest tree for which arbitrary subsets are enumerated.
pub const MAX_SUBSET_NODES: usize = 15;
/// Largest tree for which antichains are enumerated.
pub const MAX_ANTICHAIN_NODES: usize = 63;
/// Largest tree for which a packing catalog is materialized.
pub const MAX_PACKING_CATALOG_NODES: usize = 31;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilyClass {
    Packing,
    Sparse { order: f64 },
    WeaklySparse,
}

impl FamilyClass {
    pub fn sparse() -> Self {
        FamilyClass::Sparse { order: 1.0 }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match self {
            FamilyClass::Sparse { order } if !(*order > 0.0 && *order <= 1.0) => {
                Err(format!("sparse order {order} outside (0, 1]"))
            }
            _ => Ok(()),
        }
    }

    fn key(&self) -> (u8, u64) {
        match self {
            FamilyClass::Packing => (0, 0),
            FamilyClass::Sparse { order } => (1, order.to_bits()),
            FamilyClass::WeaklySparse => (2, 0),
        }
    }
}

impl fmt::Display for FamilyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyClass::Packing => write!(f, "packing"),
            FamilyClass::Sparse { order } => write!(f, "sparse(order {order})"),
            FamilyClass::WeaklySparse => write!(f, "weakly sparse"),
        }
    }
}

/// Why a set of cubes failed to validate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    /// First offending cube in breadth-first order, if the failure is local.
    pub cube: Option<CubeId>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cube {
            Some(c) => write!(f, "at {c}: {}", self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

/// A validated family with its children map and core sets.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeFamily {
    tree: DyadicTree,
    kind: FamilyClass,
    cubes: Vec<CubeId>,
    nodes: Vec<usize>,
    children: Vec<Vec<usize>>,
    core_cells: Vec<Vec<usize>>,
}

impl CubeFamily {
    pub fn tree(&self) -> DyadicTree {
        self.tree
    }

    pub fn kind(&self) -> FamilyClass {
        self.kind
    }

    /// Members in breadth-first order.
    pub fn cubes(&self) -> &[CubeId] {
        &self.cubes
    }

    /// Breadth-first node indices of the members.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Positions (into [`cubes`](Self::cubes)) of `Ch(Q)` for the `i`-th member.
    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Finest cells of the core set `E_Q` of the `i`-th member.
    pub fn core_cells(&self, i: usize) -> &[usize] {
        &self.core_cells[i]
    }

    pub fn core_measure<T: Scalar>(&self, i: usize) -> T {
        T::count(self.core_cells[i].len()) * T::lit(0.5).powi((self.tree.dim() as u32 * self.tree.depth()) as i32)
    }

    /// Bit mask over breadth-first node indices (trees with at most 64 nodes).
    pub fn mask(&self) -> Option<u64> {
        (self.tree.node_count() <= 64).then(|| self.nodes.iter().fold(0u64, |m, i| m | 1 << i))
    }

    /// Re-checks the members against another class.
    pub fn revalidate(&self, class: FamilyClass) -> std::result::Result<CubeFamily, Violation> {
        validate(self.tree, &self.cubes, class)
    }

    pub fn to_record(&self) -> FamilyRecord {
        FamilyRecord {
            dimension: self.tree.dim(),
            depth: self.tree.depth(),
            kind: self.kind,
            cubes: self.cubes.clone(),
        }
    }
}

/// Serialized form of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub dimension: usize,
    pub depth: u32,
    pub kind: FamilyClass,
    pub cubes: Vec<CubeId>,
}

impl FamilyRecord {
    /// Rebuilds and re-validates the family.
    pub fn into_family(self) -> Result<CubeFamily> {
        let tree = DyadicTree::new(self.dimension, self.depth)?;
        validate(tree, &self.cubes, self.kind).map_err(|v| Error::Schema(format!("family record: {v}")))
    }
}

impl Serialize for CubeFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CubeFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        FamilyRecord::deserialize(d)?
            .into_family()
            .map_err(serde::de::Error::custom)
    }
}

/// Precomputed parent and level per node, shared by the mask-level routines.
struct TreeTables {
    tree: DyadicTree,
    parent: Vec<usize>,
    level: Vec<u32>,
}

impl TreeTables {
    fn new(tree: DyadicTree) -> Self {
        let n = tree.node_count();
        let mut parent = vec![usize::MAX; n];
        let mut level = vec![0; n];
        for l in 0..=tree.depth() {
            for i in tree.level_offset(l)..tree.level_offset(l + 1) {
                level[i] = l;
                if l > 0 {
                    parent[i] = tree.parent_index(i).expect("non-root");
                }
            }
        }
        TreeTables { tree, parent, level }
    }

    /// Nearest member ancestor of `node` strictly above it.
    fn family_parent(&self, node: usize, member: &impl Fn(usize) -> bool) -> Option<usize> {
        let mut cur = node;
        while self.parent[cur] != usize::MAX {
            cur = self.parent[cur];
            if member(cur) {
                return Some(cur);
            }
        }
        None
    }

    fn cells(&self, node: usize) -> u64 {
        self.tree.cells_per_cube(self.level[node]) as u64
    }
}

/// Checks the class condition given members (sorted BFS) and their family
/// parents. Returns the core cell count per member or the first violation.
fn check_condition(
    tables: &TreeTables,
    members: &[usize],
    fparent: &[Option<usize>],
    class: FamilyClass,
) -> std::result::Result<Vec<u64>, (usize, String)> {
    let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut child_cells = vec![0u64; members.len()];
    let mut child_pow = vec![0f64; members.len()];
    let mut has_child = vec![false; members.len()];
    let order = match class {
        FamilyClass::Sparse { order } => order,
        _ => 1.0,
    };
    let meas = |node: usize| 0.5f64.powi((tables.tree.dim() as u32 * tables.level[node]) as i32);
    for (i, p) in fparent.iter().enumerate() {
        if let Some(p) = p {
            let j = pos[p];
            child_cells[j] += tables.cells(members[i]);
            child_pow[j] += meas(members[i]).powf(order);
            has_child[j] = true;
        }
    }
    let mut core = Vec::with_capacity(members.len());
    for (j, &node) in members.iter().enumerate() {
        let total = tables.cells(node);
        match class {
            FamilyClass::Packing if has_child[j] => {
                return Err((node, "member contains another member".into()));
            }
            FamilyClass::Sparse { order: 1.0 } => {
                if 2 * child_cells[j] > total {
                    return Err((
                        node,
                        format!("children cover {} of {} cells, more than half", child_cells[j], total),
                    ));
                }
            }
            FamilyClass::Sparse { order } => {
                let rhs = 0.5 * meas(node).powf(order);
                if child_pow[j] > rhs + ORDER_TOL {
                    return Err((node, format!("sum of |Q'|^{order} = {} exceeds {}", child_pow[j], rhs)));
                }
            }
            FamilyClass::WeaklySparse if 2 * (total - child_cells[j]) < total => {
                return Err((
                    node,
                    format!(
                        "core set has {} of {} cells, less than half",
                        total - child_cells[j],
                        total
                    ),
                ));
            }
            _ => {}
        }
        core.push(total - child_cells[j]);
    }
    Ok(core)
}

/// Builds the children map and core sets of `cubes` and checks `class`.
pub fn validate(tree: DyadicTree, cubes: &[CubeId], class: FamilyClass) -> std::result::Result<CubeFamily, Violation> {
    class.check().map_err(|reason| Violation { cube: None, reason })?;
    for c in cubes {
        if !tree.is_valid(c) {
            return Err(Violation {
                cube: Some(*c),
                reason: format!("cube not valid for dimension {} depth {}", tree.dim(), tree.depth()),
            });
        }
    }
    let mut nodes: Vec<usize> = cubes.iter().map(|c| tree.index(c)).collect();
    nodes.sort_unstable();
    if let Some(w) = nodes.windows(2).find(|w| w[0] == w[1]) {
        return Err(Violation {
            cube: Some(tree.cube(w[0])),
            reason: "duplicate member".into(),
        });
    }
    let tables = TreeTables::new(tree);
    build(&tables, nodes, class).map_err(|(node, reason)| Violation {
        cube: Some(tree.cube(node)),
        reason,
    })
}

fn build(
    tables: &TreeTables,
    nodes: Vec<usize>,
    class: FamilyClass,
) -> std::result::Result<CubeFamily, (usize, String)> {
    let tree = tables.tree;
    let set: std::collections::HashSet<usize> = nodes.iter().copied().collect();
    let member = |i: usize| set.contains(&i);
    let fparent: Vec<Option<usize>> = nodes.iter().map(|&n| tables.family_parent(n, &member)).collect();
    check_condition(tables, &nodes, &fparent, class)?;

    let pos: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut children = vec![Vec::new(); nodes.len()];
    for (i, p) in fparent.iter().enumerate() {
        if let Some(p) = p {
            children[pos[p]].push(i);
        }
    }
    // Core sets: each finest cell belongs to its smallest member ancestor.
    let mut core_cells = vec![Vec::new(); nodes.len()];
    let finest = tree.level_offset(tree.depth());
    for cell in 0..tree.cell_count() {
        let node = finest + cell;
        let owner = if member(node) {
            Some(node)
        } else {
            tables.family_parent(node, &member)
        };
        if let Some(o) = owner {
            core_cells[pos[&o]].push(cell);
        }
    }
    Ok(CubeFamily {
        tree,
        kind: class,
        cubes: nodes.iter().map(|&n| tree.cube(n)).collect(),
        nodes,
        children,
        core_cells,
    })
}

/// Enumerates every nonempty family of `class` on the tree of the given
/// dimension and depth, in increasing order of member bit masks.
pub fn enumerate_families(dim: usize, depth: u32, class: FamilyClass) -> Result<FamilyIter> {
    let tree = DyadicTree::new(dim, depth)?;
    class.check().map_err(Error::Params)?;
    let n = tree.node_count();
    let tables = TreeTables::new(tree);
    let inner = match class {
        FamilyClass::Packing if n <= MAX_ANTICHAIN_NODES => Inner::Antichains(AntichainMasks::new(&tables)),
        _ if n <= MAX_SUBSET_NODES => Inner::Subsets {
            next: 1,
            end: 1u64 << n,
        },
        _ => return Err(Error::OracleScale(format!(
            "{n} dyadic nodes; enumeration allows {MAX_SUBSET_NODES} (all classes) or {MAX_ANTICHAIN_NODES} (packings)"
        ))),
    };
    Ok(FamilyIter { tables, class, inner })
}

/// Lazy stream of families produced by [`enumerate_families`].
pub struct FamilyIter {
    tables: TreeTables,
    class: FamilyClass,
    inner: Inner,
}

enum Inner {
    Subsets { next: u64, end: u64 },
    Antichains(AntichainMasks),
}

impl FamilyIter {
    /// Next admissible mask with its members and core cell counts, without
    /// materializing core cell lists.
    fn next_compact(&mut self) -> Option<CompactFamily> {
        loop {
            let mask = match &mut self.inner {
                Inner::Subsets { next, end } => {
                    if *next >= *end {
                        return None;
                    }
                    *next += 1;
                    *next - 1
                }
                Inner::Antichains(a) => a.next()?,
            };
            if let Some(c) = compact(&self.tables, mask, self.class) {
                return Some(c);
            }
        }
    }
}

impl Iterator for FamilyIter {
    type Item = CubeFamily;

    fn next(&mut self) -> Option<CubeFamily> {
        let c = self.next_compact()?;
        let nodes = c.members.iter().map(|m| m.0 as usize).collect();
        Some(build(&self.tables, nodes, self.class).expect("admissible mask"))
    }
}

fn mask_members(mask: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    let mut m = mask;
    while m != 0 {
        out.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    out
}

fn compact(tables: &TreeTables, mask: u64, class: FamilyClass) -> Option<CompactFamily> {
    let members = mask_members(mask);
    let member = |i: usize| i < 64 && mask >> i & 1 == 1;
    let fparent: Vec<Option<usize>> = members.iter().map(|&n| tables.family_parent(n, &member)).collect();
    let core = check_condition(tables, &members, &fparent, class).ok()?;
    Some(CompactFamily {
        mask,
        members: members.iter().zip(core).map(|(n, c)| (*n as u32, c as u32)).collect(),
    })
}

/// Antichains of the tree as bit masks in increasing numeric order: nodes
/// are decided from the highest index down, "excluded" before "included".
struct AntichainMasks {
    parent: Vec<usize>,
    n: usize,
    choice: Vec<bool>,
    blocked: Vec<u32>,
    /// Number of undecided nodes (nodes `0..pending` are undecided).
    pending: usize,
    mask: u64,
    done: bool,
}

impl AntichainMasks {
    fn new(tables: &TreeTables) -> Self {
        let n = tables.parent.len();
        AntichainMasks {
            parent: tables.parent.clone(),
            n,
            choice: vec![false; n],
            blocked: vec![0; n],
            pending: n,
            mask: 0,
            done: false,
        }
    }

    fn mark(&mut self, node: usize, delta: i32) {
        let mut cur = node;
        while self.parent[cur] != usize::MAX {
            cur = self.parent[cur];
            self.blocked[cur] = (self.blocked[cur] as i32 + delta) as u32;
        }
    }

    /// Moves to the next leaf of the decision tree; false when exhausted.
    fn backtrack(&mut self) -> bool {
        let mut i = self.pending;
        while i < self.n {
            if self.choice[i] {
                self.choice[i] = false;
                self.mask &= !(1u64 << i);
                self.mark(i, -1);
            } else if self.blocked[i] == 0 {
                self.choice[i] = true;
                self.mask |= 1u64 << i;
                self.mark(i, 1);
                self.pending = i;
                return true;
            }
            i += 1;
        }
        false
    }
}

impl Iterator for AntichainMasks {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        loop {
            if self.done {
                return None;
            }
            // Descend with every remaining node excluded.
            self.pending = 0;
            let mask = self.mask;
            if !self.backtrack() {
                self.done = true;
            }
            if mask != 0 {
                return Some(mask);
            }
        }
    }
}

/// A family stored as `(node, core cell count)` pairs, for hot loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactFamily {
    pub mask: u64,
    pub members: Vec<(u32, u32)>,
}

/// Every family of one class on one tree, materialized and shared.
#[derive(Debug)]
pub struct FamilyCatalog {
    tree: DyadicTree,
    class: FamilyClass,
    families: Vec<CompactFamily>,
}

type CatalogKey = (usize, u32, (u8, u64));

impl FamilyCatalog {
    /// The catalog for `(dim, depth, class)`, built once per process.
    pub fn get(dim: usize, depth: u32, class: FamilyClass) -> Result<Arc<FamilyCatalog>> {
        static CACHE: OnceLock<Mutex<HashMap<CatalogKey, Arc<FamilyCatalog>>>> = OnceLock::new();
        let key = (dim, depth, class.key());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(c) = cache.lock().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let tree = DyadicTree::new(dim, depth)?;
        if class == FamilyClass::Packing && tree.node_count() > MAX_PACKING_CATALOG_NODES {
            return Err(Error::OracleScale(format!(
                "{} dyadic nodes; packing catalogs allow {MAX_PACKING_CATALOG_NODES}",
                tree.node_count()
            )));
        }
        let mut it = enumerate_families(dim, depth, class)?;
        let mut families = Vec::new();
        while let Some(c) = it.next_compact() {
            families.push(c);
        }
        let cat = Arc::new(FamilyCatalog { tree, class, families });
        cache.lock().unwrap().insert(key, cat.clone());
        Ok(cat)
    }

    pub fn tree(&self) -> DyadicTree {
        self.tree
    }

    pub fn class(&self) -> FamilyClass {
        self.class
    }

    pub fn families(&self) -> &[CompactFamily] {
        &self.families
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    /// Expands the `i`-th family.
    pub fn family(&self, i: usize) -> CubeFamily {
        let nodes: Vec<CubeId> = self.families[i]
            .members
            .iter()
            .map(|m| self.tree.cube(m.0 as usize))
            .collect();
        validate(self.tree, &nodes, self.class).expect("catalog families are admissible")
    }
}

/// Calderón–Zygmund stopping time for a density `g >= 0`: from `Q0`, each
/// selected `Q` selects the maximal `Q' ⊊ Q` with `⟨g⟩_{Q'} > factor·⟨g⟩_Q`.
///
/// The result is checked to be sparse (order 1); `factor >= 2` guarantees it.
pub fn cz_family<T: Scalar>(g: &GridFunction<T>, factor: T) -> Result<CubeFamily> {
    if let Some((cell, v)) = g.values().iter().enumerate().find(|(_, v)| **v < T::zero()) {
        return Err(Error::NegativeDensity {
            cell,
            value: v.as_f64(),
        });
    }
    if !(factor > T::one()) {
        return Err(Error::Params(format!("stopping factor must exceed 1, got {factor}")));
    }
    let tree = g.tree();
    let n = tree.node_count();
    let finest = tree.level_offset(tree.depth());
    // Sums per node, bottom-up; averages are sum / cell count.
    let mut sum = vec![T::zero(); n];
    for (i, v) in g.values().iter().enumerate() {
        sum[finest + i] = *v;
    }
    for idx in (0..finest).rev() {
        sum[idx] = tree.child_indices(idx).iter().map(|c| sum[*c]).sum();
    }
    let avg = |idx: usize| sum[idx] / T::count(tree.cells_per_cube(tree.level_of(idx)));

    let mut selected = vec![0usize];
    let mut queue = vec![0usize];
    while let Some(q) = queue.pop() {
        let threshold = factor * avg(q);
        let mut stack = tree.child_indices(q);
        while let Some(c) = stack.pop() {
            if avg(c) > threshold {
                selected.push(c);
                queue.push(c);
            } else {
                stack.extend(tree.child_indices(c));
            }
        }
    }
    let cubes: Vec<CubeId> = selected.iter().map(|&i| tree.cube(i)).collect();
    validate(tree, &cubes, FamilyClass::sparse()).map_err(|v| Error::NotSparse(v.to_string()))
}
