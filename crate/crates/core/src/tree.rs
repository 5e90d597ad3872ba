//! Depth-first walks over preimage trees with table-driven potentials.
//!
//! Fix a base point q in face c. The depth-m nodes of its preimage tree are
//! the points branch_X(q) for the m-tiles X of colour c; a child is obtained
//! from its parent by one inverse branch of a selected 1-tile. A node is
//! stored as integers: its x coordinate is (A + t)/sᵐ with t ∈ {q_x, 1 − q_x}
//! and likewise for y. Potential factors are read from per-depth tables, so
//! a node costs a handful of lookups instead of trigonometric calls.

use crate::combinatorics::Subsystem;
use crate::error::{Error, Result};
use crate::geometry::Colour;
use crate::potential::{Factor, Potential};

/// One inverse branch: the selected tile `id`, stored with its cell data.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Step {
    pub id: usize,
    pub face: u8,
    /// Position of the tile among the selected tiles of its colour.
    pub rank: usize,
    i: u64,
    j: u64,
    odd_i: bool,
    odd_j: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Node {
    pub face: u8,
    pub a: u64,
    pub b: u64,
    pub fa: bool,
    pub fb: bool,
}

impl Node {
    pub fn root(face: Colour) -> Self {
        Node { face: face.index() as u8, a: 0, b: 0, fa: false, fb: false }
    }
}

pub(crate) struct Tree {
    pub s: u64,
    /// children[c] lists the branches applicable at a point of face c, that
    /// is the selected tiles of colour c, in canonical order.
    pub children: [Vec<Step>; 2],
    /// The step of every selected tile, by tile id.
    pub by_id: Vec<Step>,
}

impl Tree {
    pub fn new(sub: &Subsystem) -> Self {
        let mut children = [Vec::new(), Vec::new()];
        for c in Colour::ALL {
            for (rank, &id) in sub.with_colour(c).iter().enumerate() {
                let t = sub.tiles()[id];
                children[c.index()].push(Step {
                    id,
                    face: t.face.index() as u8,
                    rank,
                    i: u64::from(t.i),
                    j: u64::from(t.j),
                    odd_i: t.i % 2 == 1,
                    odd_j: t.j % 2 == 1,
                });
            }
        }
        let mut by_id: Vec<Step> = children.iter().flatten().copied().collect();
        by_id.sort_by_key(|st| st.id);
        Tree { s: u64::from(sub.map().s()), children, by_id }
    }

    /// Child of `node` (at a depth with scale sᵐ) through `step`.
    #[inline(always)]
    pub fn child(&self, node: &Node, step: &Step, scale: u64) -> Node {
        let a = if step.odd_i { step.i * scale + scale - 1 - node.a } else { step.i * scale + node.a };
        let b = if step.odd_j { step.j * scale + scale - 1 - node.b } else { step.j * scale + node.b };
        Node { face: step.face, a, b, fa: node.fa ^ step.odd_i, fb: node.fb ^ step.odd_j }
    }
}

/// Node of a word T₁…Tₘ in the preimage tree of its colour: the point
/// branch_{T₁…Tₘ}(q). Letters are applied from the last one outwards.
pub(crate) fn node_of_word(tree: &Tree, word: &[usize], root: Colour) -> Node {
    let mut node = Node::root(root);
    let mut scale = 1u64;
    for &id in word.iter().rev() {
        node = tree.child(&node, &tree.by_id[id], scale);
        scale *= tree.s;
    }
    node
}

/// Number of nodes at depths 1..=n of the preimage trees rooted in the given
/// faces.
pub(crate) fn node_count(sub: &Subsystem, roots: &[Colour], n: usize) -> f64 {
    let a = sub.tile_matrix();
    let mut total = 0.0;
    let mut p = a.clone();
    for _ in 1..=n {
        for &c in roots {
            total += num_traits::ToPrimitive::to_f64(&p.colour_sum(c)).unwrap_or(f64::INFINITY);
        }
        p = p.mul(&a);
    }
    total
}

pub(crate) fn check_budget(needed: f64, limit: f64) -> Result<()> {
    if needed > limit {
        Err(Error::BudgetExceeded { needed, limit })
    } else {
        Ok(())
    }
}

/// Per-depth value tables for a list of factors along one coordinate.
struct AxisBank {
    factors: Vec<Factor>,
    // tables[f][m][2·A + flip]
    tables: Vec<Vec<Vec<f64>>>,
}

impl AxisBank {
    fn new() -> Self {
        AxisBank { factors: Vec::new(), tables: Vec::new() }
    }

    fn intern(&mut self, f: Factor, s: u64, t: f64, depth: usize) -> usize {
        if let Some(k) = self.factors.iter().position(|g| *g == f) {
            return k;
        }
        let mut per_depth = Vec::with_capacity(depth + 1);
        let mut scale = 1u64;
        for _ in 0..=depth {
            let inv = 1.0 / scale as f64;
            let mut tab = Vec::with_capacity(2 * scale as usize);
            for a in 0..scale {
                tab.push(f.eval((a as f64 + t) * inv));
                tab.push(f.eval((a as f64 + 1.0 - t) * inv));
            }
            per_depth.push(tab);
            scale *= s;
        }
        self.factors.push(f);
        self.tables.push(per_depth);
        self.factors.len() - 1
    }
}

#[derive(Clone, Copy, Debug)]
struct CompiledTerm {
    coeff: f64,
    x: usize,
    y: usize,
    face: Option<u8>,
}

/// Compiled form of one potential: evaluates it at tree nodes by table
/// lookups. The constant part is kept separately so callers can factor it.
#[derive(Clone, Debug)]
pub(crate) struct Compiled {
    pub constant: f64,
    terms: Vec<CompiledTerm>,
}

/// Tables for every potential evaluated on one preimage tree.
pub(crate) struct Evaluator {
    s: u64,
    depth: usize,
    tx: f64,
    ty: f64,
    xb: AxisBank,
    yb: AxisBank,
}

/// Largest table size accepted per factor and depth.
const TABLE_LIMIT: u64 = 1 << 26;

impl Evaluator {
    /// Tables for base coordinates (qx, qy) up to the given depth.
    pub fn new(s: u64, qx: f64, qy: f64, depth: usize) -> Result<Self> {
        let top = (s as f64).powi(depth as i32);
        if top > TABLE_LIMIT as f64 {
            return Err(Error::BudgetExceeded { needed: top, limit: TABLE_LIMIT as f64 });
        }
        Ok(Evaluator {
            s,
            depth,
            tx: qx,
            ty: qy,
            xb: AxisBank::new(),
            yb: AxisBank::new(),
        })
    }

    pub fn compile(&mut self, phi: &Potential) -> Compiled {
        let mut terms = Vec::with_capacity(phi.terms.len());
        for t in &phi.terms {
            let x = self.xb.intern(t.x, self.s, self.tx, self.depth);
            let y = self.yb.intern(t.y, self.s, self.ty, self.depth);
            terms.push(CompiledTerm { coeff: t.coeff, x, y, face: t.face.map(|f| f.index() as u8) });
        }
        Compiled { constant: phi.constant, terms }
    }

    /// Non-constant part of the potential at a node of depth m ≥ 1.
    #[inline(always)]
    pub fn variable(&self, c: &Compiled, m: usize, node: &Node) -> f64 {
        let ia = 2 * node.a as usize + node.fa as usize;
        let ib = 2 * node.b as usize + node.fb as usize;
        let mut v = 0.0;
        for t in &c.terms {
            if let Some(f) = t.face {
                if f != node.face {
                    continue;
                }
            }
            v += t.coeff * self.xb.tables[t.x][m][ia] * self.yb.tables[t.y][m][ib];
        }
        v
    }

    /// Full value including the constant.
    #[inline(always)]
    pub fn value(&self, c: &Compiled, m: usize, node: &Node) -> f64 {
        c.constant + self.variable(c, m, node)
    }

    /// Local coordinates of a node of depth m.
    #[inline]
    pub fn coords(&self, m: usize, node: &Node) -> (f64, f64) {
        let inv = (self.s as f64).powi(-(m as i32));
        let tx = if node.fa { 1.0 - self.tx } else { self.tx };
        let ty = if node.fb { 1.0 - self.ty } else { self.ty };
        ((node.a as f64 + tx) * inv, (node.b as f64 + ty) * inv)
    }
}

/// Deterministic depth-first walk over the preimage trees of several roots.
///
/// `child` maps a parent state to the state of one child (or prunes it by
/// returning `None`) and `visit` accumulates every node of depth ≥ 1. The
/// work is split into subtrees at a depth fixed by the tree shape alone;
/// subtree accumulators are merged in canonical order, so the result does
/// not depend on the number of threads.
pub(crate) fn walk<S, A, FC, FV, FZ, FM>(
    tree: &Tree,
    roots: &[(Node, S)],
    depth: usize,
    child: FC,
    visit: FV,
    zero: FZ,
    merge: FM,
) -> A
where
    S: Copy + Send + Sync,
    A: Send,
    FC: Fn(&S, usize, &Step, &Node) -> Option<S> + Sync,
    FV: Fn(&mut A, usize, &S, &Node) + Sync,
    FZ: Fn() -> A + Sync,
    FM: Fn(&mut A, A),
{
    walk_with_hint(tree, roots, depth, child, visit, |_: &S| {}, zero, merge)
}

/// [`walk`] with a hook that sees every child state of an inner node before
/// any of them is descended into. Walks whose states index large tables use
/// it to prefetch, so the misses of siblings overlap.
#[allow(clippy::too_many_arguments)]
pub(crate) fn walk_with_hint<S, A, FC, FV, FH, FZ, FM>(
    tree: &Tree,
    roots: &[(Node, S)],
    depth: usize,
    child: FC,
    visit: FV,
    hint: FH,
    zero: FZ,
    merge: FM,
) -> A
where
    S: Copy + Send + Sync,
    A: Send,
    FC: Fn(&S, usize, &Step, &Node) -> Option<S> + Sync,
    FV: Fn(&mut A, usize, &S, &Node) + Sync,
    FH: Fn(&S) + Sync,
    FZ: Fn() -> A + Sync,
    FM: Fn(&mut A, A),
{
    use rayon::prelude::*;
    let mut head = zero();
    if depth == 0 {
        return head;
    }
    let split = if depth >= 4 { 2 } else { 1 };
    // Nodes above the split depth are visited here; the frontier becomes
    // the list of parallel tasks.
    let mut frontier: Vec<(Node, S)> = roots.to_vec();
    let mut scale = 1u64;
    for m in 1..=split {
        let mut next = Vec::new();
        for (node, st) in &frontier {
            for step in &tree.children[node.face as usize] {
                let c = tree.child(node, step, scale);
                if let Some(cs) = child(st, m, step, &c) {
                    visit(&mut head, m, &cs, &c);
                    next.push((c, cs));
                }
            }
        }
        frontier = next;
        scale *= tree.s;
    }
    if split == depth {
        return head;
    }
    let parts: Vec<A> = frontier
        .par_iter()
        .map(|(node, st)| {
            let mut acc = zero();
            descend(tree, node, st, split, scale, depth, &child, &visit, &hint, &mut acc);
            acc
        })
        .collect();
    for p in parts {
        merge(&mut head, p);
    }
    head
}

#[allow(clippy::too_many_arguments)]
fn descend<S, A, FC, FV, FH>(
    tree: &Tree,
    node: &Node,
    st: &S,
    m: usize,
    scale: u64,
    depth: usize,
    child: &FC,
    visit: &FV,
    hint: &FH,
    acc: &mut A,
) where
    S: Copy,
    FC: Fn(&S, usize, &Step, &Node) -> Option<S>,
    FV: Fn(&mut A, usize, &S, &Node),
    FH: Fn(&S),
{
    let next_scale = scale * tree.s;
    if m + 1 < depth {
        for step in &tree.children[node.face as usize] {
            if let Some(cs) = child(st, m + 1, step, &tree.child(node, step, scale)) {
                hint(&cs);
            }
        }
    }
    for step in &tree.children[node.face as usize] {
        let c = tree.child(node, step, scale);
        if let Some(cs) = child(st, m + 1, step, &c) {
            visit(acc, m + 1, &cs, &c);
            if m + 1 < depth {
                descend(tree, &c, &cs, m + 1, next_scale, depth, child, visit, hint, acc);
            }
        }
    }
}
