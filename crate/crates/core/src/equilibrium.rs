//! Equilibrium states μ = u·m and the checks built on them.
//!
//! Deeper tiles get their mass from the eigenmeasure relation: the mass of
//! U·X is λ⁻¹·exp(φ at the center of the (k+1)-tile U·pre_k(X))·m(X). This
//! is the k-step Markov extension of m, so summing the children of any tile
//! recovers its mass exactly and μ(U·X) summed over U reproduces μ(X).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::combinatorics::Subsystem;
use crate::error::{Error, Result};
use crate::geometry::{tile_diameter, Colour};
use crate::index::TileIndex;
use crate::potential::Potential;
use crate::transfer::{model_constants, solve_spectral, tile_center_values, transfer_matrix, SolverOptions, SpectralData, TileMeasure};
use crate::tree::{check_budget, node_count, walk_with_hint, Evaluator, Node, Step, Tree};

/// A value with its error bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error_bar: f64,
}

#[derive(Clone, Debug)]
pub struct EquilibriumState {
    pub depth: usize,
    pub measure: TileMeasure,
    /// Σ u·m before the final normalization.
    pub pre_normalization_mass: f64,
    /// SHA-256 of the spectral data the state was built from.
    pub provenance: String,
    pub spectral: Arc<SpectralData>,
}

fn hash_spectral(sp: &SpectralData) -> String {
    let mut h = Sha256::new();
    h.update((sp.depth() as u64).to_le_bytes());
    h.update(sp.pressure.to_le_bytes());
    h.update(sp.lambda_raw.to_le_bytes());
    for x in sp.u.values.iter().chain(&sp.m.weights) {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// μ(T) = u(T)·m(T)/Σ at the spectral depth, then coarse-grained or refined
/// to depth k.
pub fn equilibrium_state(sp: &SpectralData, k: usize) -> Result<EquilibriumState> {
    let raw: Vec<f64> = sp.u.values.iter().zip(&sp.m.weights).map(|(u, m)| u * m).collect();
    let mass: f64 = raw.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let spectral = Arc::new(sp.clone());
    let provenance = hash_spectral(sp);
    let d = sp.depth();
    let measure = if k == d {
        TileMeasure::new(sp.index().clone(), raw.iter().map(|x| x / mass).collect())?
    } else if k < d {
        let idx = Arc::new(TileIndex::new(&sub_of(sp)?, k)?);
        let coarse = TileMeasure::new(sp.index().clone(), raw.iter().map(|x| x / mass).collect())?.coarse_grain(k);
        TileMeasure::new(idx, coarse)?
    } else {
        let levels = refine_levels(sp, k)?;
        let (m_k, pre_k, idx) = levels;
        let w: Vec<f64> = m_k.iter().zip(&pre_k).map(|(m, &p)| m * sp.u.values[p as usize]).collect();
        let t: f64 = w.iter().sum();
        TileMeasure::new(idx, w.iter().map(|x| x / t).collect())?
    };
    Ok(EquilibriumState { depth: k, measure, pre_normalization_mass: mass, provenance, spectral })
}

fn sub_of(sp: &SpectralData) -> Result<Subsystem> {
    Ok(sp.matrix.subsystem().clone())
}

/// Eigenmeasure and k-prefix arrays at `to_depth`, with the index used.
fn refine_levels(sp: &SpectralData, to_depth: usize) -> Result<(Vec<f64>, Vec<u32>, Arc<TileIndex>)> {
    let sub = sub_of(sp)?;
    let k = sp.depth();
    let idx = Arc::new(TileIndex::new(&sub, to_depth)?);
    let mut m = sp.m.weights.clone();
    let mut pre: Vec<u32> = (0..m.len() as u32).collect();
    for l in k..to_depth {
        let (nm, np) = refine_step(sp, &sub, &idx, l, Some(&m), &pre);
        m = nm;
        pre = np;
    }
    Ok((m, pre, idx))
}

/// One prepending step from level l to level l + 1.
fn refine_step(sp: &SpectralData, sub: &Subsystem, idx: &TileIndex, l: usize, m: Option<&[f64]>, pre: &[u32]) -> (Vec<f64>, Vec<u32>) {
    let mat = &sp.matrix;
    let total = idx.len(l + 1);
    let mut nm = vec![0.0; total];
    let mut np = vec![0u32; total];
    for u in 0..sub.len() {
        let c = sub.colour_of(u);
        let (start, len) = idx.first_letter_block(l + 1, u);
        let off = idx.face_offset(l, c);
        let rank = sub.colour_rank(u);
        for x in 0..len {
            let p = pre[off + x] as usize;
            let slot = mat.row_ptr[p] + rank;
            if let Some(m) = m {
                nm[start + x] = mat.vals[slot] * m[off + x] / sp.lambda_raw;
            }
            np[start + x] = mat.cols[slot];
        }
    }
    (nm, np)
}

/// Extends the eigenmeasure m (given at the spectral depth or deeper) to
/// `to_depth` and renormalizes.
pub fn refine_measure(sp: &SpectralData, m: &TileMeasure, to_depth: usize) -> Result<TileMeasure> {
    let k = sp.depth();
    if m.depth < k || to_depth < m.depth {
        return Err(Error::InvalidInput(format!(
            "refinement needs spectral depth {k} ≤ measure depth {} ≤ target {to_depth}",
            m.depth
        )));
    }
    let sub = sub_of(sp)?;
    let idx = Arc::new(TileIndex::new(&sub, to_depth)?);
    let mut pre: Vec<u32> = (0..sp.m.weights.len() as u32).collect();
    for l in k..m.depth {
        pre = refine_step(sp, &sub, &idx, l, None, &pre).1;
    }
    let mut w = m.weights.clone();
    for l in m.depth..to_depth {
        (w, pre) = refine_step(sp, &sub, &idx, l, Some(&w), &pre);
    }
    let t: f64 = w.iter().sum();
    if !(t > 0.0) {
        return Err(Error::ZeroMass);
    }
    TileMeasure::new(idx, w.iter().map(|x| x / t).collect())
}

/// μ along the prepend tree without materializing deep levels.
///
/// Up to the spectral depth the key of a node is the lex index of its tile
/// and masses come from coarse-grained arrays. Deeper down the key is the
/// index of the k-prefix and masses follow the Markov extension. Each
/// matrix slot is packed with everything a child needs, so the children of
/// one node read a single contiguous run of memory.
pub(crate) struct MeasureWalker<'a> {
    sp: &'a SpectralData,
    k: usize,
    m_levels: Vec<Vec<f64>>,
    mu_levels: Vec<Vec<f64>>,
    slots: Vec<Slot>,
    /// Rows of white-face tiles come first; every row of a face has the
    /// same length, so row starts are arithmetic.
    white_rows: u64,
    row_len: [u64; 2],
}

fn sub_len(sp: &SpectralData, c: Colour) -> u64 {
    sp.matrix.subsystem().with_colour(c).len() as u64
}

#[derive(Clone, Copy)]
struct Slot {
    col: u32,
    /// Matrix value divided by λ_raw.
    factor: f64,
    /// u at the column divided by the pre-normalization mass.
    u: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct WalkMass {
    pub depth: usize,
    pub key: u64,
    pub m: f64,
    pub mu: f64,
}

impl<'a> MeasureWalker<'a> {
    pub fn new(state: &'a EquilibriumState) -> Self {
        let sp = &*state.spectral;
        let mass = state.pre_normalization_mass;
        let mat = &sp.matrix;
        let slots = mat
            .cols
            .iter()
            .zip(&mat.vals)
            .map(|(&col, &v)| Slot { col, factor: v / sp.lambda_raw, u: sp.u.values[col as usize] / mass })
            .collect();
        let raw: Vec<f64> = sp.u.values.iter().zip(&sp.m.weights).map(|(u, m)| u * m / mass).collect();
        let w = MeasureWalker {
            sp,
            k: sp.depth(),
            m_levels: sp.m.levels(),
            mu_levels: TileMeasure::new(sp.index().clone(), raw).expect("positive eigen data").levels(),
            slots,
            white_rows: sp.index().count(sp.depth(), Colour::White),
            row_len: [sub_len(sp, Colour::White), sub_len(sp, Colour::Black)],
        };
        debug_assert!((0..mat.dim() as u64).all(|r| w.row_start(r) == mat.row_ptr[r as usize]));
        w
    }

    /// Touches the matrix row a deep child will read.
    #[inline(always)]
    pub fn prefetch(&self, st: &WalkMass) {
        if st.depth >= self.k {
            let i = self.row_start(st.key);
            #[cfg(target_arch = "x86_64")]
            // SAFETY: prefetching is a hint and never faults; the index is
            // a valid row start.
            unsafe {
                use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
                _mm_prefetch::<_MM_HINT_T0>(self.slots.as_ptr().add(i) as *const i8);
            }
            #[cfg(not(target_arch = "x86_64"))]
            let _ = i;
        }
    }

    #[inline(always)]
    fn row_start(&self, row: u64) -> usize {
        if row < self.white_rows {
            (row * self.row_len[0]) as usize
        } else {
            (self.white_rows * self.row_len[0] + (row - self.white_rows) * self.row_len[1]) as usize
        }
    }

    pub fn root(&self, face: Colour) -> WalkMass {
        let i = TileIndex::index0(face) as usize;
        WalkMass { depth: 0, key: i as u64, m: self.m_levels[0][i], mu: self.mu_levels[0][i] }
    }

    #[inline(always)]
    pub fn child(&self, st: &WalkMass, d: usize, step: &Step) -> WalkMass {
        if d <= self.k {
            let i = self.sp.index().prepend(d, step.id, st.key) as usize;
            WalkMass { depth: d, key: i as u64, m: self.m_levels[d][i], mu: self.mu_levels[d][i] }
        } else {
            let sl = self.slots[self.row_start(st.key) + step.rank];
            let m = sl.factor * st.m;
            WalkMass { depth: d, key: u64::from(sl.col), m, mu: sl.u * m }
        }
    }
}

impl EquilibriumState {
    /// ∫g dμ by tile-center quadrature, with error bar |g|_α·(diam/2)^α.
    pub fn integrate(&self, sub: &Subsystem, g: &Potential) -> Result<Estimate> {
        let vals = tile_center_values(sub, g, self.measure.index())?;
        let h = g.holder_data();
        let err = h.seminorm * (tile_diameter(sub.map(), self.depth) / 2.0).powf(h.alpha);
        Ok(Estimate { value: self.measure.integrate(&vals), error_bar: err })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GibbsLevel {
    pub n: usize,
    pub tiles: u64,
    pub min_log_ratio: f64,
    pub max_log_ratio: f64,
    /// μ-weighted mean of the log ratio.
    pub mean_log_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GibbsReport {
    pub pressure: f64,
    pub levels: Vec<GibbsLevel>,
    /// Two-sided constant: every ratio should lie in [1/C_μ, C_μ].
    pub c_mu: f64,
    pub c_bar: f64,
    pub within_bounds: bool,
    /// max/min over all levels.
    pub spread: f64,
    pub spread_within_c_mu_squared: bool,
    pub spread_within_c_bar_squared: bool,
    /// Least-squares slopes of the per-level statistics against n.
    pub slope_min: f64,
    pub slope_max: f64,
    pub slope_mean: f64,
}

fn n_tiles_at(sub: &Subsystem, n: usize) -> f64 {
    node_count(sub, &Colour::ALL, n) - node_count(sub, &Colour::ALL, n.saturating_sub(1))
}

pub(crate) fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Ratios μ(Xⁿ)/exp(S_nφ(center Xⁿ) − nP) for every n-tile, n = 1..=n_levels.
/// μ comes from refinement of the eigen data, never from the Gibbs formula.
pub fn gibbs_check(sub: &Subsystem, phi: &Potential, state: &EquilibriumState, pressure: f64, n_levels: usize) -> Result<GibbsReport> {
    if n_levels == 0 {
        return Err(Error::InvalidInput("gibbs check needs at least one level".into()));
    }
    check_budget(node_count(sub, &Colour::ALL, n_levels), crate::transfer::NODE_BUDGET)?;
    let mw = MeasureWalker::new(state);
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, 0.5, 0.5, n_levels)?;
    let c = ev.compile(phi);
    let roots: Vec<(Node, (WalkMass, f64))> = Colour::ALL.iter().map(|&f| (Node::root(f), (mw.root(f), 0.0))).collect();
    // per level: min, max, Σμ·r
    let acc = walk_with_hint(
        &tree,
        &roots,
        n_levels,
        |(w, s), m, step, node| Some((mw.child(w, m, step), s + ev.variable(&c, m, node))),
        |acc: &mut Vec<[f64; 3]>, m, (w, s), _| {
            let mu = w.mu;
            let mf = m as f64;
            let r = mu.ln() - (s + mf * c.constant) + mf * pressure;
            let a = &mut acc[m];
            a[0] = a[0].min(r);
            a[1] = a[1].max(r);
            a[2] += mu * r;
        },
        |(w, _)| mw.prefetch(w),
        || vec![[f64::INFINITY, f64::NEG_INFINITY, 0.0]; n_levels + 1],
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x[0] = x[0].min(y[0]);
                x[1] = x[1].max(y[1]);
                x[2] += y[2];
            }
        },
    );
    let lv: Vec<GibbsLevel> = (1..=n_levels)
        .map(|n| GibbsLevel {
            n,
            tiles: n_tiles_at(sub, n) as u64,
            min_log_ratio: acc[n][0],
            max_log_ratio: acc[n][1],
            mean_log_ratio: acc[n][2],
        })
        .collect();
    let consts = model_constants(sub, phi)?;
    let h = phi.holder_data();
    let c1 = h.seminorm / (1.0 - sub.map().expansion().powf(-h.alpha));
    let m_min = Colour::ALL.iter().map(|&f| state.spectral.m.face_mass(f)).fold(f64::INFINITY, f64::min);
    let c_bar = consts.map_or(f64::INFINITY, |d| d.c_bar);
    let c_mu = c_bar * (c1 * crate::geometry::PILLOW_DIAMETER.powf(h.alpha)).exp() / m_min;
    let lo = lv.iter().map(|l| l.min_log_ratio).fold(f64::INFINITY, f64::min);
    let hi = lv.iter().map(|l| l.max_log_ratio).fold(f64::NEG_INFINITY, f64::max);
    let log_c_mu = c_mu.ln();
    let xs: Vec<f64> = lv.iter().map(|l| l.n as f64).collect();
    let slope = |f: fn(&GibbsLevel) -> f64| fit_slope(&xs, &lv.iter().map(f).collect::<Vec<_>>());
    Ok(GibbsReport {
        pressure,
        c_mu,
        c_bar,
        within_bounds: lo >= -log_c_mu && hi <= log_c_mu,
        spread: (hi - lo).exp(),
        spread_within_c_mu_squared: hi - lo <= 2.0 * log_c_mu,
        spread_within_c_bar_squared: hi - lo <= 2.0 * c_bar.ln(),
        slope_min: slope(|l| l.min_log_ratio),
        slope_max: slope(|l| l.max_log_ratio),
        slope_mean: slope(|l| l.mean_log_ratio),
        levels: lv,
    })
}

/// max over (n−1)-tiles T of |Σ_U μ(U·T) − μ(T)|, with both sides obtained
/// by coarse-graining the measure.
pub fn invariance_check(measure: &TileMeasure, n: usize) -> Result<f64> {
    if n == 0 || n > measure.depth {
        return Err(Error::InvalidInput(format!("invariance level must lie in 1..={}", measure.depth)));
    }
    let idx = measure.index();
    let fine = measure.coarse_grain(n);
    let coarse = measure.coarse_grain(n - 1);
    let mut pulled = vec![0.0; coarse.len()];
    for u in 0..idx.tiles() {
        let (start, len) = idx.first_letter_block(n, u);
        let off = idx.face_offset(n - 1, idx.tile_colour(u));
        for x in 0..len {
            pulled[off + x] += fine[start + x];
        }
    }
    Ok(pulled.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// A deliberately lumpy random probability on the tiles of an index, used
/// as a negative control for the invariance check.
pub fn random_tile_measure(index: Arc<TileIndex>, seed: u64) -> Result<TileMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = index.depth();
    let w: Vec<f64> = (0..index.len(d)).map(|_| rng.gen::<f64>().powi(8)).collect();
    TileMeasure::new(index, w)?.normalized()
}

/// The spectral pressure of a depth-k solve. Every weight of the matrix reads
/// φ within half a tile diagonal of the point it stands for, so Lⁿ sums move
/// by at most a factor exp(n·H·(diam_k/2)^α) and so does e^{nP}. The solver
/// residual is added on top.
pub fn pressure_estimate(sp: &SpectralData, phi: &Potential) -> Estimate {
    let h = phi.holder_data();
    let sub = sp.matrix.subsystem();
    let disc = h.seminorm * (tile_diameter(sub.map(), sp.depth()) / 2.0).powf(h.alpha);
    Estimate { value: sp.pressure, error_bar: disc + sp.right_residual }
}

/// h = P − ∫φ dμ, with the quadrature error of the integral.
pub fn entropy_estimate(sub: &Subsystem, state: &EquilibriumState, phi: &Potential, pressure: f64) -> Result<Estimate> {
    let i = state.integrate(sub, phi)?;
    Ok(Estimate { value: pressure - i.value, error_bar: i.error_bar })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivativeReport {
    pub epsilon: f64,
    pub depth: usize,
    pub finite_diff: f64,
    /// (4·D(ε/2) − D(ε))/3 when requested.
    pub richardson: Option<f64>,
    pub integral: Estimate,
    pub gap: f64,
}

/// Central difference of P along γ against ∫γ dμ_φ, all at one depth.
pub fn pressure_derivative_check(
    sub: &Subsystem,
    phi: &Potential,
    gamma: &Potential,
    eps: f64,
    depth: usize,
    opts: SolverOptions,
    richardson: bool,
) -> Result<DerivativeReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("ε must be positive".into()));
    }
    let p_at = |t: f64| -> Result<f64> {
        let psi = phi.plus(&gamma.scaled(t));
        Ok(solve_spectral(transfer_matrix(sub, &psi, depth)?, opts)?.pressure)
    };
    let diff = |e: f64| -> Result<f64> { Ok((p_at(e)? - p_at(-e)?) / (2.0 * e)) };
    let d1 = diff(eps)?;
    let rich = if richardson { Some((4.0 * diff(eps / 2.0)? - d1) / 3.0) } else { None };
    let sp = solve_spectral(transfer_matrix(sub, phi, depth)?, opts)?;
    let state = equilibrium_state(&sp, depth)?;
    let integral = state.integrate(sub, gamma)?;
    Ok(DerivativeReport { epsilon: eps, depth, finite_diff: d1, richardson: rich, integral, gap: (d1 - integral.value).abs() })
}
