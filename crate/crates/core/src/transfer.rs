//! Split Ruelle operators.
//!
//! Two backends evaluate the operator. The exact one sums over every inverse
//! branch of an n-tile with the true potential at the branch point. The
//! discrete one is the depth-k transfer matrix: a function constant on
//! depth-k tiles is pushed through one step with the potential sampled at
//! the center of the (k+1)-tile U·T. Both feed the pressure estimators and
//! cross-check each other.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{check_structure, Subsystem};
use crate::error::{Error, Result};
use crate::geometry::{Colour, Rational, SplitPoint, PILLOW_DIAMETER};
use crate::index::TileIndex;
use crate::potential::{distortion_constants, DistortionConstants, Potential};
use crate::tree::{check_budget, node_count, node_of_word, walk, Evaluator, Node, Tree};

/// Default cap on the number of tree nodes a single walk may visit.
pub const NODE_BUDGET: f64 = 4.0e9;

/// A function constant on each depth-k tile, indexed in lexicographic order.
#[derive(Clone, Debug, Serialize)]
pub struct SplitFunction {
    pub depth: usize,
    pub values: Vec<f64>,
    #[serde(skip)]
    index: Arc<TileIndex>,
}

impl SplitFunction {
    pub fn new(index: Arc<TileIndex>, values: Vec<f64>) -> Result<Self> {
        let depth = index.depth();
        if values.len() != index.len(depth) {
            return Err(Error::InvalidInput(format!(
                "expected {} values at depth {depth}, got {}",
                index.len(depth),
                values.len()
            )));
        }
        Ok(SplitFunction { depth, values, index })
    }

    pub fn index(&self) -> &Arc<TileIndex> {
        &self.index
    }

    /// Values on the tiles of one face.
    pub fn face(&self, face: Colour) -> &[f64] {
        let n_white = self.index.count(self.depth, Colour::White) as usize;
        match face {
            Colour::White => &self.values[..n_white],
            Colour::Black => &self.values[n_white..],
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Nonnegative weights on the depth-k tiles.
#[derive(Clone, Debug, Serialize)]
pub struct TileMeasure {
    pub depth: usize,
    pub weights: Vec<f64>,
    #[serde(skip)]
    index: Arc<TileIndex>,
}

impl TileMeasure {
    pub fn new(index: Arc<TileIndex>, weights: Vec<f64>) -> Result<Self> {
        let depth = index.depth();
        if weights.len() != index.len(depth) {
            return Err(Error::InvalidInput(format!(
                "expected {} weights at depth {depth}, got {}",
                index.len(depth),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("tile weights must be finite and nonnegative".into()));
        }
        Ok(TileMeasure { depth, weights, index })
    }

    pub fn index(&self) -> &Arc<TileIndex> {
        &self.index
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn face_mass(&self, face: Colour) -> f64 {
        let n_white = self.index.count(self.depth, Colour::White) as usize;
        match face {
            Colour::White => self.weights[..n_white].iter().sum(),
            Colour::Black => self.weights[n_white..].iter().sum(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.total();
        if !(t > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(TileMeasure { depth: self.depth, weights: self.weights.iter().map(|w| w / t).collect(), index: self.index.clone() })
    }

    /// Weights of the tiles at every level 0..=depth, coarsest first.
    pub fn levels(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.weights.clone()];
        for m in (0..self.depth).rev() {
            let fine = out.last().expect("nonempty");
            out.push(self.index.coarse_grain(m, fine));
        }
        out.reverse();
        out
    }

    /// The measure on the coarser level `m` obtained by summing children.
    pub fn coarse_grain(&self, m: usize) -> Vec<f64> {
        assert!(m <= self.depth);
        let mut w = self.weights.clone();
        for l in (m..self.depth).rev() {
            w = self.index.coarse_grain(l, &w);
        }
        w
    }

    /// ∫v dμ for a function given on the same tiles.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// The depth-k transfer matrix in compressed row form.
///
/// Row T lists one entry per selected tile U of colour position(T), in
/// canonical order; the entry sits in column trunc_k(U·T) with value
/// exp(φ(center of U·T) − c), where c = `log_scale` is the constant part of
/// φ factored out of every entry.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub depth: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
    pub log_scale: f64,
    index: Arc<TileIndex>,
    sub: Subsystem,
}

impl TransferMatrix {
    pub fn index(&self) -> &Arc<TileIndex> {
        &self.index
    }

    /// The subsystem the matrix was built for.
    pub fn subsystem(&self) -> &Subsystem {
        &self.sub
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Row entries as (column, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.cols[lo..hi].iter().zip(&self.vals[lo..hi]).map(|(&c, &v)| (c as usize, v))
    }

    /// Mv for the unscaled matrix.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(v, &mut y);
        y
    }

    fn apply_into(&self, v: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(4096).enumerate().for_each(|(chunk, out)| {
            let base = chunk * 4096;
            for (k, slot) in out.iter_mut().enumerate() {
                let r = base + k;
                let mut acc = 0.0;
                for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[p] * v[self.cols[p] as usize];
                }
                *slot = acc;
            }
        });
    }

    /// Mᵀw for the unscaled matrix.
    pub fn apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        self.apply_transpose_into(w, &mut z);
        z
    }

    fn apply_transpose_into(&self, w: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..self.dim() {
            let wr = w[r];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                z[self.cols[p] as usize] += self.vals[p] * wr;
            }
        }
    }
}

/// Assembles the depth-k transfer matrix of φ.
pub fn transfer_matrix(sub: &Subsystem, phi: &Potential, k: usize) -> Result<TransferMatrix> {
    if k == 0 {
        return Err(Error::InvalidInput("transfer matrix depth must be at least 1".into()));
    }
    sub.require_surjective()?;
    phi.validate()?;
    phi.require_continuous("the transfer matrix")?;
    let index = Arc::new(TileIndex::new(sub, k)?);
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, 0.5, 0.5, k + 1)?;
    let compiled = ev.compile(phi);
    let dim = index.len(k);
    let width = |face: Colour| sub.with_colour(face).len();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    row_ptr.push(0usize);
    for r in 0..dim {
        let last = *row_ptr.last().expect("nonempty");
        row_ptr.push(last + width(index.position(k, r)));
    }
    let nnz = *row_ptr.last().expect("nonempty");
    if nnz as u64 > u64::from(u32::MAX) {
        return Err(Error::BudgetExceeded { needed: nnz as f64, limit: f64::from(u32::MAX) });
    }
    let mut cols = vec![0u32; nnz];
    let mut vals = vec![0.0f64; nnz];
    let scale_k = tree.s.pow(k as u32);
    // Rows are independent; each chunk decodes its words and evaluates the
    // centers of the (k+1)-tiles U·T.
    const CHUNK: usize = 1024;
    let row_chunks: Vec<(usize, usize)> = (0..dim).step_by(CHUNK).map(|lo| (lo, (lo + CHUNK).min(dim))).collect();
    let pieces: Vec<(Vec<u32>, Vec<f64>)> = row_chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut c_out = Vec::with_capacity(row_ptr[hi] - row_ptr[lo]);
            let mut v_out = Vec::with_capacity(row_ptr[hi] - row_ptr[lo]);
            for r in lo..hi {
                let word = index.word(k, r as u64);
                let colour = index.colour(k, r);
                let node = node_of_word(&tree, &word, colour);
                // Index of trunc_{k−1}(T), the first k−1 letters of T.
                let tr = index.index_of(&word[..k - 1]);
                let tr = if k == 1 { TileIndex::index0(sub.position_of(word[0])) } else { tr };
                for step in &tree.children[node.face as usize] {
                    let child = tree.child(&node, step, scale_k);
                    c_out.push(index.prepend(k, step.id, tr) as u32);
                    v_out.push(ev.variable(&compiled, k + 1, &child).exp());
                }
            }
            (c_out, v_out)
        })
        .collect();
    let mut p = 0;
    for (c, v) in pieces {
        cols[p..p + c.len()].copy_from_slice(&c);
        vals[p..p + v.len()].copy_from_slice(&v);
        p += c.len();
    }
    debug_assert_eq!(p, nnz);
    Ok(TransferMatrix { depth: k, row_ptr, cols, vals, log_scale: compiled.constant, index, sub: sub.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 100_000 }
    }
}

/// Leading eigendata of a transfer matrix.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// e^P.
    pub lambda: f64,
    /// Leading eigenvalue of the unscaled matrix.
    pub lambda_raw: f64,
    pub log_scale: f64,
    pub pressure: f64,
    /// Right eigenvector, scaled so that ⟨m, u⟩ = 1.
    pub u: SplitFunction,
    /// Left eigenvector as a probability measure.
    pub m: TileMeasure,
    pub iterations: usize,
    pub right_residual: f64,
    pub left_residual: f64,
    pub eigenvalue_gap: f64,
    pub matrix: Arc<TransferMatrix>,
}

impl SpectralData {
    pub fn depth(&self) -> usize {
        self.matrix.depth
    }

    pub fn index(&self) -> &Arc<TileIndex> {
        &self.matrix.index
    }
}

/// Right and left power iteration from the all-ones and uniform vectors.
pub fn solve_spectral(matrix: TransferMatrix, opts: SolverOptions) -> Result<SpectralData> {
    let matrix = Arc::new(matrix);
    let n = matrix.dim();
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidInput("solver needs tol > 0 and max_iter ≥ 1".into()));
    }
    let mut v = vec![1.0; n];
    let mut w = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut lambda_r = 0.0;
    let mut res_r = f64::INFINITY;
    let mut res_l = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut right_done = false;
    let mut left_done = false;
    while iterations < opts.max_iter {
        iterations += 1;
        if !right_done {
            matrix.apply_into(&v, &mut y);
            lambda_r = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if !(lambda_r > 0.0) {
                return Err(Error::NonPositiveEigenvector { min: 0.0 });
            }
            res_r = y.iter().zip(&v).map(|(a, b)| (a - lambda_r * b).abs()).fold(0.0, f64::max) / lambda_r;
            for (vi, yi) in v.iter_mut().zip(&y) {
                *vi = yi / lambda_r;
            }
        }
        let lambda_l;
        if !left_done {
            matrix.apply_transpose_into(&w, &mut z);
            lambda_l = z.iter().sum::<f64>();
            res_l = z.iter().zip(&w).map(|(a, b)| (a - lambda_l * b).abs()).sum::<f64>() / lambda_l;
            for (wi, zi) in w.iter_mut().zip(&z) {
                *wi = zi / lambda_l;
            }
        } else {
            matrix.apply_transpose_into(&w, &mut z);
            lambda_l = z.iter().sum::<f64>();
        }
        gap = (lambda_r - lambda_l).abs() / lambda_r;
        // Each side freezes once it meets the tolerance so the reported
        // residual belongs to the returned vector.
        right_done = res_r <= opts.tol;
        left_done = res_l <= opts.tol;
        if right_done && left_done && gap <= opts.tol {
            break;
        }
    }
    if !(res_r <= opts.tol && res_l <= opts.tol && gap <= opts.tol) {
        return Err(Error::NonConvergence { iterations, residual: res_r.max(res_l).max(gap) });
    }
    let total: f64 = w.iter().sum();
    let m: Vec<f64> = w.iter().map(|x| x / total).collect();
    let pairing: f64 = m.iter().zip(&v).map(|(a, b)| a * b).sum();
    let u: Vec<f64> = v.iter().map(|x| x / pairing).collect();
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_u > 0.0) {
        return Err(Error::NonPositiveEigenvector { min: min_u });
    }
    let index = matrix.index.clone();
    Ok(SpectralData {
        lambda: (matrix.log_scale + lambda_r.ln()).exp(),
        lambda_raw: lambda_r,
        log_scale: matrix.log_scale,
        pressure: matrix.log_scale + lambda_r.ln(),
        u: SplitFunction::new(index.clone(), u)?,
        m: TileMeasure::new(index, m)?,
        iterations,
        right_residual: res_r,
        left_residual: res_l,
        eigenvalue_gap: gap,
        matrix,
    })
}

/// Residuals ‖Mu − λu‖∞/λ and ‖mᵀM − λmᵀ‖₁/λ of solved eigendata.
pub fn eigen_residuals(sp: &SpectralData) -> (f64, f64) {
    let mu = sp.matrix.apply(&sp.u.values);
    let umax = sp.u.max();
    let r = mu
        .iter()
        .zip(&sp.u.values)
        .map(|(a, b)| (a - sp.lambda_raw * b).abs())
        .fold(0.0, f64::max)
        / (sp.lambda_raw * umax);
    let mt = sp.matrix.apply_transpose(&sp.m.weights);
    let l = mt.iter().zip(&sp.m.weights).map(|(a, b)| (a - sp.lambda_raw * b).abs()).sum::<f64>() / sp.lambda_raw;
    (r, l)
}

/// A point reached by an inverse branch, in floating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchPoint {
    pub face: Colour,
    pub x: f64,
    pub y: f64,
}

/// Whether q lies on a grid line of level n inside its face.
pub fn on_skeleton(sub: &Subsystem, q: &SplitPoint, n: usize) -> bool {
    let scale = Rational::from_integer(i128::from(sub.map().s()).pow(n as u32));
    (q.x * scale).is_integer() || (q.y * scale).is_integer()
}

fn check_point(sub: &Subsystem, q: &SplitPoint, n: usize, strict: bool) -> Result<()> {
    if strict && on_skeleton(sub, q, n.max(1)) {
        Err(Error::BoundaryPoint)
    } else {
        Ok(())
    }
}

/// Lⁿv(q) by exact branch enumeration.
///
/// With `strict` set, points on the level-n skeleton are rejected; otherwise
/// every n-tile contributes its own branch, which counts a boundary
/// preimage once per tile containing it.
pub fn apply_split_operator<V>(sub: &Subsystem, phi: &Potential, v: V, q: &SplitPoint, n: usize, strict: bool) -> Result<f64>
where
    V: Fn(BranchPoint) -> f64 + Sync,
{
    check_point(sub, q, n, strict)?;
    let (x, y) = q.to_f64();
    apply_split_operator_at(sub, phi, v, q.face, x, y, n)
}

/// Floating-point base point variant of [`apply_split_operator`].
pub fn apply_split_operator_at<V>(sub: &Subsystem, phi: &Potential, v: V, face: Colour, x: f64, y: f64, n: usize) -> Result<f64>
where
    V: Fn(BranchPoint) -> f64 + Sync,
{
    sub.require_surjective()?;
    phi.validate()?;
    if n == 0 {
        return Ok(v(BranchPoint { face, x, y }));
    }
    check_budget(node_count(sub, &[face], n), NODE_BUDGET)?;
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, x, y, n)?;
    let c = ev.compile(phi);
    let sum = walk(
        &tree,
        &[(Node::root(face), 0.0f64)],
        n,
        |s, m, _, node| Some(s + ev.variable(&c, m, node)),
        |acc: &mut f64, m, s, node| {
            if m == n {
                let (bx, by) = ev.coords(m, node);
                *acc += v(BranchPoint { face: Colour::from_index(node.face as usize), x: bx, y: by }) * s.exp();
            }
        },
        || 0.0,
        |a, b| *a += b,
    );
    Ok(sum * (n as f64 * c.constant).exp())
}

/// Per-level sums Σ exp(S_m φ_var) over the preimage tree of one base point,
/// for m = 1..=n. The constant part of φ is left out.
fn level_sums(tree: &Tree, ev: &Evaluator, c: &crate::tree::Compiled, roots: &[Colour], n: usize) -> Vec<f64> {
    let roots: Vec<(Node, f64)> = roots.iter().map(|&f| (Node::root(f), 0.0)).collect();
    walk(
        tree,
        &roots,
        n,
        |s, m, _, node| Some(s + ev.variable(c, m, node)),
        |acc: &mut Vec<f64>, m, s, _| acc[m] += s.exp(),
        || vec![0.0; n + 1],
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )
}

/// ln of a big integer, exact to double precision.
pub(crate) fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        x.to_f64().map_or(f64::INFINITY, f64::ln)
    } else {
        let shift = bits - 64;
        (x >> shift).to_f64().expect("64-bit value").ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PressureRow {
    pub n: usize,
    pub value: f64,
    pub error_bar: f64,
}

/// Distortion constants with n_F taken from the strong primitivity witness
/// (or the plain one when the strong witness is unknown).
pub fn model_constants(sub: &Subsystem, phi: &Potential) -> Result<Option<DistortionConstants>> {
    let rep = check_structure(sub, 8)?;
    let nf = rep.strong_primitive_witness.or(rep.primitive_witness);
    Ok(nf.map(|nf| distortion_constants(sub.map(), phi, nf)))
}

/// (1/n)·log(Z_n/Z_0) with Z_n = Σ_{X ∈ Dⁿ} exp(S_nφ(center X)).
///
/// Z_0 counts the two 0-tiles. The error bar is the distortion slack
/// C₁·diam^α/n between the center and any other point of each tile.
pub fn pressure_via_tiles(sub: &Subsystem, phi: &Potential, n_max: usize) -> Result<Vec<PressureRow>> {
    sub.require_surjective()?;
    phi.validate()?;
    phi.require_continuous("pressure")?;
    let h = phi.holder_data();
    let c1 = h.seminorm / (1.0 - sub.map().expansion().powf(-h.alpha));
    let slack = c1 * PILLOW_DIAMETER.powf(h.alpha);
    let z0 = 2f64.ln();
    let a = sub.tile_matrix();
    if phi.is_constant() {
        let mut p = a.clone();
        let mut rows = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let nf = n as f64;
            rows.push(PressureRow { n, value: phi.constant + (big_ln(&p.total()) - z0) / nf, error_bar: 0.0 });
            p = p.mul(&a);
        }
        return Ok(rows);
    }
    check_budget(node_count(sub, &Colour::ALL, n_max), NODE_BUDGET)?;
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, 0.5, 0.5, n_max)?;
    let c = ev.compile(phi);
    let sums = level_sums(&tree, &ev, &c, &Colour::ALL, n_max);
    Ok((1..=n_max)
        .map(|n| {
            let nf = n as f64;
            PressureRow { n, value: phi.constant + (sums[n].ln() - z0) / nf, error_bar: slack / nf }
        })
        .collect())
}

/// (1/n)·log Lⁿ1(q). The error bar ln C̄ / n comes from the uniform bound on
/// e^{−nP}Lⁿ1.
pub fn pressure_via_operator(sub: &Subsystem, phi: &Potential, q: &SplitPoint, n_max: usize) -> Result<Vec<PressureRow>> {
    sub.require_surjective()?;
    phi.validate()?;
    phi.require_continuous("pressure")?;
    check_point(sub, q, n_max, true)?;
    let log_cbar = model_constants(sub, phi)?.map_or(f64::INFINITY, |d| d.c_bar.ln());
    let a = sub.tile_matrix();
    if phi.is_constant() {
        let mut p = a.clone();
        let mut rows = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let nf = n as f64;
            rows.push(PressureRow { n, value: phi.constant + big_ln(&p.colour_sum(q.face)) / nf, error_bar: log_cbar / nf });
            p = p.mul(&a);
        }
        return Ok(rows);
    }
    check_budget(node_count(sub, &[q.face], n_max), NODE_BUDGET)?;
    let tree = Tree::new(sub);
    let (x, y) = q.to_f64();
    let mut ev = Evaluator::new(tree.s, x, y, n_max)?;
    let c = ev.compile(phi);
    let sums = level_sums(&tree, &ev, &c, &[q.face], n_max);
    Ok((1..=n_max)
        .map(|n| {
            let nf = n as f64;
            PressureRow { n, value: phi.constant + sums[n].ln() / nf, error_bar: log_cbar / nf }
        })
        .collect())
}

/// Letters of the tiles containing q at levels 1..=k, as long as they are
/// selected and admissible. Grid lines go to the upper cell.
pub(crate) fn address_of(sub: &Subsystem, q: &SplitPoint, k: usize) -> Vec<usize> {
    let s = i128::from(sub.map().s());
    let sr = Rational::from_integer(s);
    let one = Rational::from_integer(1);
    let (mut face, mut x, mut y) = (q.face, q.x, q.y);
    let mut word = Vec::with_capacity(k);
    for _ in 0..k {
        let i = (x * sr).floor().to_integer().min(s - 1);
        let j = (y * sr).floor().to_integer().min(s - 1);
        let Some(id) = sub.id_of(&crate::combinatorics::SubTile::new(face, i as u32, j as u32)) else {
            break;
        };
        let w = x * sr - Rational::from_integer(i);
        let v = y * sr - Rational::from_integer(j);
        x = if i % 2 == 1 { one - w } else { w };
        y = if j % 2 == 1 { one - v } else { v };
        face = sub.colour_of(id);
        word.push(id);
    }
    word
}

/// Prefix indices p_j (index of the first j letters) for j = 0..=k.
#[derive(Clone, Copy)]
struct Prefix {
    p: [u32; 32],
    valid: u8,
}

const MAX_PREFIX_DEPTH: usize = 31;

impl Prefix {
    fn of_word(index: &TileIndex, sub: &Subsystem, face: Colour, word: &[usize]) -> Self {
        let mut p = [0u32; 32];
        p[0] = TileIndex::index0(face) as u32;
        for j in 1..=word.len() {
            p[j] = index.index_of(&word[..j]) as u32;
        }
        let _ = sub;
        Prefix { p, valid: word.len() as u8 }
    }

    #[inline]
    fn prepend(&self, index: &TileIndex, k: usize, tile: usize, position: Colour) -> Self {
        let valid = (self.valid as usize + 1).min(k);
        let mut p = [0u32; 32];
        p[0] = TileIndex::index0(position) as u32;
        for j in 1..=valid {
            p[j] = index.prepend(j, tile, u64::from(self.p[j - 1])) as u32;
        }
        Prefix { p, valid: valid as u8 }
    }
}

/// Shared state for evaluating u at branch points.
struct UField<'a> {
    sub: &'a Subsystem,
    tree: Tree,
    ev: Evaluator,
    c: crate::tree::Compiled,
    sp: &'a SpectralData,
}

impl UField<'_> {
    /// u at a node whose prefix is valid to depth `valid`; missing levels are
    /// filled in with the eigen relation u = λ⁻¹Lu.
    fn value(&self, node: &Node, m: usize, pre: &Prefix) -> f64 {
        let k = self.sp.depth();
        if pre.valid as usize >= k {
            return self.sp.u.values[pre.p[k] as usize];
        }
        let scale = self.tree.s.pow(m as u32);
        let mut acc = 0.0;
        for step in &self.tree.children[node.face as usize] {
            let child = self.tree.child(node, step, scale);
            let cp = pre.prepend(self.sp.index(), k, step.id, self.sub.position_of(step.id));
            let w = self.ev.variable(&self.c, m + 1, &child).exp();
            acc += w * self.value(&child, m + 1, &cp);
        }
        acc / self.sp.lambda_raw
    }
}

/// L̃ⁿv(q) = λ⁻ⁿ·Lⁿ(u·v)(q)/u(q) with u constant on depth-k tiles.
pub fn normalized_apply<V>(sub: &Subsystem, phi: &Potential, sp: &SpectralData, v: V, q: &SplitPoint, n: usize) -> Result<f64>
where
    V: Fn(BranchPoint) -> f64 + Sync,
{
    sub.require_surjective()?;
    let k = sp.depth();
    if k > MAX_PREFIX_DEPTH {
        return Err(Error::InvalidInput(format!("eigenfunction depth {k} exceeds {MAX_PREFIX_DEPTH}")));
    }
    check_point(sub, q, n, true)?;
    check_budget(node_count(sub, &[q.face], n + k), NODE_BUDGET)?;
    let word = address_of(sub, q, k);
    let index = sp.index().clone();
    let root_pre = Prefix::of_word(&index, sub, q.face, &word);
    let tree = Tree::new(sub);
    let (x, y) = q.to_f64();
    let mut ev = Evaluator::new(tree.s, x, y, n + k)?;
    let c = ev.compile(phi);
    let field = UField { sub, tree, ev, c, sp };
    let u_q = field.value(&Node::root(q.face), 0, &root_pre);
    if !(u_q > 0.0) {
        return Err(Error::NonPositiveEigenvector { min: u_q });
    }
    if n == 0 {
        return Ok(v(BranchPoint { face: q.face, x, y }));
    }
    let total = walk(
        &field.tree,
        &[(Node::root(q.face), (0.0f64, root_pre))],
        n,
        |(s, pre), m, step, node| {
            Some((s + field.ev.variable(&field.c, m, node), pre.prepend(&index, k, step.id, sub.position_of(step.id))))
        },
        |acc: &mut f64, m, (s, pre), node| {
            if m == n {
                let (bx, by) = field.ev.coords(m, node);
                let vv = v(BranchPoint { face: Colour::from_index(node.face as usize), x: bx, y: by });
                if vv != 0.0 {
                    *acc += vv * field.value(node, m, pre) * s.exp();
                }
            }
        },
        || 0.0,
        |a, b| *a += b,
    );
    Ok(total / (sp.lambda_raw.powi(n as i32) * u_q))
}

/// Values of φ at the centers of the depth-k tiles, in lexicographic order.
pub fn tile_center_values(sub: &Subsystem, phi: &Potential, index: &TileIndex) -> Result<Vec<f64>> {
    let k = index.depth();
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, 0.5, 0.5, k)?;
    let c = ev.compile(phi);
    Ok((0..index.len(k))
        .into_par_iter()
        .with_min_len(1024)
        .map(|r| {
            if k == 0 {
                return c.constant + ev.variable(&c, 0, &Node::root(Colour::from_index(r)));
            }
            let word = index.word(k, r as u64);
            let node = node_of_word(&tree, &word, index.colour(k, r));
            ev.value(&c, k, &node)
        })
        .collect())
}

/// Cesàro averages (1/n)·Σ_{j<n} e^{−jP}Lʲ1 on the depth-k tiles, with the
/// operator replaced by the transfer matrix and P by an estimate.
pub fn cesaro_eigenfunction(sp: &SpectralData, p_est: f64, n: usize) -> Result<SplitFunction> {
    if n == 0 {
        return Err(Error::InvalidInput("Cesàro average needs n ≥ 1".into()));
    }
    let dim = sp.matrix.dim();
    let lam = (p_est - sp.log_scale).exp();
    let mut w = vec![1.0; dim];
    let mut acc = vec![0.0; dim];
    for j in 0..n {
        acc.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
        if j + 1 < n {
            w = sp.matrix.apply(&w);
            w.iter_mut().for_each(|x| *x /= lam);
        }
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    SplitFunction::new(sp.index().clone(), acc)
}

/// One sampled pair in a distortion report.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairRecord {
    pub face: Colour,
    pub distance: f64,
    /// |log Lⁿ1(x) − log Lⁿ1(y)|.
    pub log_ratio: f64,
    /// C₁·d(x, y)^α.
    pub log_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionReport {
    pub n: usize,
    pub constants: DistortionConstants,
    pub pressure: f64,
    pub pairs_checked: usize,
    pub ratio_violations: usize,
    /// Largest log_ratio / log_bound over pairs with a positive bound.
    pub worst_ratio_fraction: f64,
    pub termwise_pairs: usize,
    pub termwise_violations: usize,
    pub worst_termwise_fraction: f64,
    pub uniform_points: usize,
    pub uniform_min: f64,
    pub uniform_max: f64,
    pub uniform_violations: usize,
    /// Pair records sorted by distance.
    pub pairs: Vec<PairRecord>,
}

impl DistortionReport {
    pub fn violations(&self) -> usize {
        self.ratio_violations + self.termwise_violations + self.uniform_violations
    }
}

fn random_generic(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // Irrational-looking offsets keep samples off every grid line.
    (rng.gen_range(0.001..0.999), rng.gen_range(0.001..0.999))
}

/// Checks the same-face branch-sum ratio bound, a termwise version of it on a
/// subsample, and the uniform bound on e^{−nP}Lⁿ1. Violations are counted,
/// not raised.
pub fn verify_distortion(sub: &Subsystem, phi: &Potential, pressure: f64, n: usize, sample_pairs: usize, seed: u64) -> Result<DistortionReport> {
    sub.require_surjective()?;
    phi.validate()?;
    phi.require_continuous("distortion verification")?;
    let consts = model_constants(sub, phi)?.ok_or_else(|| {
        Error::InvalidInput("distortion bounds need a primitive subsystem; no witness found up to level 8".into())
    })?;
    let alpha = phi.alpha;
    let per_face = sample_pairs.div_ceil(2);
    let mut pool = 2usize;
    while pool * (pool - 1) / 2 < per_face {
        pool += 1;
    }
    check_budget(2.0 * pool as f64 * node_count(sub, &[Colour::White, Colour::Black], n) / 2.0, NODE_BUDGET)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = Tree::new(sub);
    let mut points: Vec<(Colour, f64, f64)> = Vec::new();
    for face in Colour::ALL {
        for _ in 0..pool {
            let (x, y) = random_generic(&mut rng);
            points.push((face, x, y));
        }
    }
    // log Lⁿ1 without the constant part, which cancels in every ratio.
    let logs: Vec<f64> = points
        .iter()
        .map(|&(face, x, y)| -> Result<f64> {
            let mut ev = Evaluator::new(tree.s, x, y, n)?;
            let c = ev.compile(phi);
            Ok(level_sums(&tree, &ev, &c, &[face], n)[n].ln())
        })
        .collect::<Result<_>>()?;
    let c_n = n as f64 * phi.constant - n as f64 * pressure;
    let uniform: Vec<f64> = logs.iter().map(|l| (l + c_n).exp()).collect();
    let uniform_min = uniform.iter().copied().fold(f64::INFINITY, f64::min);
    let uniform_max = uniform.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let uniform_violations = uniform.iter().filter(|&&v| v < 1.0 / consts.c_bar || v > consts.c_bar).count();

    let mut pairs = Vec::new();
    let mut ratio_violations = 0;
    let mut worst = 0.0f64;
    for f in 0..2 {
        let base = f * pool;
        let mut taken = 0;
        'outer: for a in 0..pool {
            for b in a + 1..pool {
                if taken == per_face {
                    break 'outer;
                }
                taken += 1;
                let (face, xa, ya) = points[base + a];
                let (_, xb, yb) = points[base + b];
                let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
                let log_ratio = (logs[base + a] - logs[base + b]).abs();
                let log_bound = consts.c1 * d.powf(alpha);
                if log_ratio > log_bound * (1.0 + 1e-12) + 1e-13 {
                    ratio_violations += 1;
                }
                if log_bound > 0.0 {
                    worst = worst.max(log_ratio / log_bound);
                }
                pairs.push(PairRecord { face, distance: d, log_ratio, log_bound });
            }
        }
    }
    pairs.sort_by(|a, b| a.distance.total_cmp(&b.distance));

    // Termwise: every branch separately, on a subsample of pairs.
    let termwise_pairs = pairs.len().min(64);
    let mut termwise_violations = 0;
    let mut worst_term = 0.0f64;
    let mut rng_t = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..termwise_pairs {
        let face = if rng_t.gen_bool(0.5) { Colour::White } else { Colour::Black };
        let (xa, ya) = random_generic(&mut rng_t);
        let (xb, yb) = random_generic(&mut rng_t);
        let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
        let bound = consts.c1 * d.powf(alpha);
        let mut ea = Evaluator::new(tree.s, xa, ya, n)?;
        let ca = ea.compile(phi);
        let mut eb = Evaluator::new(tree.s, xb, yb, n)?;
        let cb = eb.compile(phi);
        let worst_diff = walk(
            &tree,
            &[(Node::root(face), (0.0f64, 0.0f64))],
            n,
            |(sa, sb), m, _, node| Some((sa + ea.variable(&ca, m, node), sb + eb.variable(&cb, m, node))),
            |acc: &mut f64, m, (sa, sb), _| {
                if m == n {
                    *acc = acc.max((sa - sb).abs());
                }
            },
            || 0.0,
            |a, b| *a = a.max(b),
        );
        if worst_diff > bound * (1.0 + 1e-12) + 1e-13 {
            termwise_violations += 1;
        }
        if bound > 0.0 {
            worst_term = worst_term.max(worst_diff / bound);
        }
    }

    Ok(DistortionReport {
        n,
        constants: consts,
        pressure,
        pairs_checked: pairs.len(),
        ratio_violations,
        worst_ratio_fraction: worst,
        termwise_pairs,
        termwise_violations,
        worst_termwise_fraction: worst_term,
        uniform_points: points.len(),
        uniform_min,
        uniform_max,
        uniform_violations,
        pairs,
    })
}

/// Picks a depth-k tile for a point, or `None` when its address leaves the
/// subsystem before depth k.
pub fn locate(sub: &Subsystem, index: &TileIndex, q: &SplitPoint) -> Option<usize> {
    let k = index.depth();
    let word = address_of(sub, q, k);
    if word.len() < k {
        return None;
    }
    Some(index.index_of(&word) as usize)
}
