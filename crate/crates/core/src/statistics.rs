//! Weighted preimages, the moment generating identity and the level-2 rate
//! function over Markov measures on the tile shift.
//!
//! Preimage measures put weight exp(S_nφ(y)) on each branch preimage y of a
//! basepoint. Their integrals are streamed over the preimage tree, so n = 10
//! on the carpet (about 10⁹ preimages) never materializes a point list.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::combinatorics::{check_structure, Subsystem};
use crate::equilibrium::{equilibrium_state, fit_slope, Estimate, MeasureWalker, WalkMass};
use crate::error::{Error, Result};
use crate::geometry::{tile_diameter, Colour, SplitPoint, PILLOW_DIAMETER};
use crate::potential::Potential;
use crate::transfer::{on_skeleton, solve_spectral, tile_center_values, transfer_matrix, BranchPoint, SolverOptions, SpectralData, NODE_BUDGET};
use crate::tree::{check_budget, node_count, walk, walk_with_hint, Evaluator, Node, Tree};

/// Largest point list `preimage_measure` will materialize.
pub const POINT_LIMIT: f64 = 2e7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreimageMode {
    /// δ at each preimage y.
    Point,
    /// The orbit average (1/n)Σ δ at Fⁱy, i = 0..n−1.
    Birkhoff,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteMeasure {
    pub points: Vec<BranchPoint>,
    pub weights: Vec<f64>,
    pub normalized: bool,
}

impl DiscreteMeasure {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, g: impl Fn(&BranchPoint) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * g(p)).sum()
    }
}

fn check_basepoint(sub: &Subsystem, x: &SplitPoint, n: usize) -> Result<()> {
    sub.require_surjective()?;
    if on_skeleton(sub, x, n.max(1)) {
        return Err(Error::BoundaryPoint);
    }
    Ok(())
}

fn warn_unless_strongly_primitive(sub: &Subsystem) {
    match check_structure(sub, 8) {
        Ok(r) if r.strongly_primitive => {}
        _ => log::warn!("subsystem is not known to be strongly primitive; preimages need not equidistribute"),
    }
}

/// ν_n (point mode) or ν̂_n (Birkhoff mode) for the basepoint x.
pub fn preimage_measure(sub: &Subsystem, phi: &Potential, x: &SplitPoint, n: usize, mode: PreimageMode) -> Result<DiscreteMeasure> {
    phi.validate()?;
    phi.require_continuous("preimage weights")?;
    check_basepoint(sub, x, n)?;
    warn_unless_strongly_primitive(sub);
    let leaves = node_count(sub, &[x.face], n) - node_count(sub, &[x.face], n.saturating_sub(1));
    let points = if mode == PreimageMode::Birkhoff { leaves * n as f64 } else { leaves };
    check_budget(points, POINT_LIMIT)?;
    let (qx, qy) = x.to_f64();
    if n == 0 {
        return Ok(DiscreteMeasure { points: vec![BranchPoint { face: x.face, x: qx, y: qy }], weights: vec![1.0], normalized: true });
    }
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, qx, qy, n)?;
    let c = ev.compile(&phi.variable_part());
    let shift = phi.holder_data().sup_variable;
    let mut out = DiscreteMeasure { points: Vec::new(), weights: Vec::new(), normalized: true };
    let mut path = Vec::with_capacity(n);
    collect(&tree, &ev, &c, &Node::root(x.face), 0, 1, n, 0.0, shift, mode, &mut path, &mut out);
    let t = out.total();
    for w in &mut out.weights {
        *w /= t;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn collect(
    tree: &Tree,
    ev: &Evaluator,
    c: &crate::tree::Compiled,
    node: &Node,
    m: usize,
    scale: u64,
    n: usize,
    s: f64,
    shift: f64,
    mode: PreimageMode,
    path: &mut Vec<BranchPoint>,
    out: &mut DiscreteMeasure,
) {
    for step in &tree.children[node.face as usize] {
        let ch = tree.child(node, step, scale);
        let d = m + 1;
        let sd = s + ev.variable(c, d, &ch);
        let (x, y) = ev.coords(d, &ch);
        path.push(BranchPoint { face: Colour::from_index(ch.face as usize), x, y });
        if d == n {
            // Weights are scaled by exp(−n·sup|φ − c|) so they never overflow.
            let w = (sd - n as f64 * shift).exp();
            match mode {
                PreimageMode::Point => {
                    out.points.push(path[n - 1]);
                    out.weights.push(w);
                }
                PreimageMode::Birkhoff => {
                    out.points.extend_from_slice(path);
                    out.weights.extend(std::iter::repeat(w / n as f64).take(n));
                }
            }
        } else {
            collect(tree, ev, c, &ch, d, scale * tree.s, n, sd, shift, mode, path, out);
        }
        path.pop();
    }
}

/// ∫g dν_n (or dν̂_n) for n = 1..=n_max from one walk of the preimage tree.
pub fn preimage_integrals(sub: &Subsystem, phi: &Potential, g: &Potential, x: &SplitPoint, n_max: usize, mode: PreimageMode) -> Result<Vec<f64>> {
    phi.validate()?;
    g.validate()?;
    phi.require_continuous("preimage weights")?;
    g.require_continuous("equidistribution test functions")?;
    check_basepoint(sub, x, n_max)?;
    warn_unless_strongly_primitive(sub);
    check_budget(node_count(sub, &[x.face], n_max), NODE_BUDGET)?;
    let (qx, qy) = x.to_f64();
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, qx, qy, n_max)?;
    let cp = ev.compile(&phi.variable_part());
    let cg = ev.compile(g);
    let shift = phi.holder_data().sup_variable;
    let acc = walk(
        &tree,
        &[(Node::root(x.face), (0.0f64, 0.0f64))],
        n_max,
        |&(s, gs), m, _, node| Some((s + ev.variable(&cp, m, node), gs + ev.value(&cg, m, node))),
        |acc: &mut Vec<[f64; 2]>, m, &(s, gs), node| {
            let w = (s - m as f64 * shift).exp();
            let v = match mode {
                PreimageMode::Point => ev.value(&cg, m, node),
                PreimageMode::Birkhoff => gs / m as f64,
            };
            acc[m][0] += w;
            acc[m][1] += w * v;
        },
        || vec![[0.0; 2]; n_max + 1],
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x[0] += y[0];
                x[1] += y[1];
            }
        },
    );
    Ok(acc[1..].iter().map(|a| a[1] / a[0]).collect())
}

/// The limit predicted for the preimage integrals: ∫g dm_φ for point mode and
/// ∫g dμ_φ for Birkhoff mode, by tile-center quadrature at the spectral depth.
pub fn equidistribution_reference(sub: &Subsystem, g: &Potential, sp: &SpectralData, mode: PreimageMode) -> Result<Estimate> {
    g.require_continuous("equidistribution test functions")?;
    match mode {
        PreimageMode::Point => {
            let vals = tile_center_values(sub, g, sp.index())?;
            let h = g.holder_data();
            Ok(Estimate {
                value: sp.m.integrate(&vals),
                error_bar: h.seminorm * (tile_diameter(sub.map(), sp.depth()) / 2.0).powf(h.alpha),
            })
        }
        PreimageMode::Birkhoff => equilibrium_state(sp, sp.depth())?.integrate(sub, g),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeakStarRow {
    pub n: usize,
    pub value: f64,
    pub reference: f64,
    pub gap: f64,
    /// Quadrature error of the reference.
    pub error_bar: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakStarTable {
    pub mode: PreimageMode,
    pub rows: Vec<WeakStarRow>,
    /// Least-squares slope of the gap against n.
    pub slope: f64,
    pub non_increasing: bool,
}

/// Gaps between preimage integrals and a reference, for the listed n.
pub fn weak_star_table(
    sub: &Subsystem,
    phi: &Potential,
    g: &Potential,
    x: &SplitPoint,
    n_list: &[usize],
    mode: PreimageMode,
    reference: Estimate,
) -> Result<WeakStarTable> {
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    if n_list.contains(&0) || n_max == 0 {
        return Err(Error::InvalidInput("levels must be positive".into()));
    }
    let vals = preimage_integrals(sub, phi, g, x, n_max, mode)?;
    let rows: Vec<WeakStarRow> = n_list
        .iter()
        .map(|&n| WeakStarRow {
            n,
            value: vals[n - 1],
            reference: reference.value,
            gap: (vals[n - 1] - reference.value).abs(),
            error_bar: reference.error_bar,
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let slope = fit_slope(&xs, &ys);
    Ok(WeakStarTable { mode, rows, slope, non_increasing: slope <= 0.0 })
}

/// Largest accepted deviation from πQ = π.
pub const STATIONARY_TOL: f64 = 1e-12;

/// A stationary Markov measure on the one-sided tile shift: the states are
/// the selected 1-tiles and T may be followed by T′ when position(T′) =
/// colour(T).
#[derive(Clone, Debug, Serialize)]
pub struct MarkovMeasure {
    q: Vec<Vec<f64>>,
    pi: Vec<f64>,
    /// max |(πQ)_j − π_j|.
    pub stationarity_defect: f64,
}

fn admissible(sub: &Subsystem, from: usize, to: usize) -> bool {
    sub.position_of(to) == sub.colour_of(from)
}

impl MarkovMeasure {
    /// Checks Q and finds its stationary distribution from the uniform start
    /// by lazy power iteration.
    pub fn new(sub: &Subsystem, q: Vec<Vec<f64>>) -> Result<Self> {
        validate_chain(sub, &q)?;
        let n = q.len();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..1_000_000 {
            let next = step(&q, &pi);
            let lazy: Vec<f64> = pi.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
            let diff: f64 = lazy.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = lazy;
            if diff <= 1e-16 {
                break;
            }
        }
        // Transient states keep a residue that halves each step; it is
        // rounding noise, not mass.
        let top = pi.iter().copied().fold(0.0, f64::max);
        pi.iter_mut().filter(|p| **p < 1e-13 * top).for_each(|p| *p = 0.0);
        let t: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= t);
        Self::with_distribution(sub, q, pi)
    }

    /// Uses the given π, rejecting it unless it is stationary.
    pub fn with_distribution(sub: &Subsystem, q: Vec<Vec<f64>>, pi: Vec<f64>) -> Result<Self> {
        validate_chain(sub, &q)?;
        if pi.len() != q.len() || pi.iter().any(|p| !(*p >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("π must be a probability vector over the states".into()));
        }
        let defect = step(&q, &pi).iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if defect > STATIONARY_TOL {
            return Err(Error::InvalidInput(format!("π is not stationary (defect {defect:.3e}); the rate function is +∞ there")));
        }
        Ok(MarkovMeasure { q, pi, stationarity_defect: defect })
    }

    /// Every admissible successor equally likely.
    pub fn uniform(sub: &Subsystem) -> Result<Self> {
        Self::from_weights(sub, |_, _| 1.0)
    }

    /// Each tile moves to its first admissible successor.
    pub fn deterministic(sub: &Subsystem) -> Result<Self> {
        let n = sub.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in q.iter_mut().enumerate() {
            if let Some(j) = (0..n).find(|&j| admissible(sub, i, j)) {
                row[j] = 1.0;
            }
        }
        Self::new(sub, q)
    }

    /// Independent uniform weights on the admissible edges, normalized per row.
    pub fn random(sub: &Subsystem, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = sub.len();
        let w: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.01..1.0)).collect()).collect();
        Self::from_weights(sub, |i, j| w[i][j])
    }

    fn from_weights(sub: &Subsystem, w: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let n = sub.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in q.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                if admissible(sub, i, j) {
                    *x = w(i, j);
                }
            }
            let t: f64 = row.iter().sum();
            if t > 0.0 {
                row.iter_mut().for_each(|x| *x /= t);
            }
        }
        Self::new(sub, q)
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn stationary(&self) -> &[f64] {
        &self.pi
    }

    pub fn states(&self) -> usize {
        self.pi.len()
    }
}

fn step(q: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (pi, row) in p.iter().zip(q) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += pi * x;
        }
    }
    out
}

fn validate_chain(sub: &Subsystem, q: &[Vec<f64>]) -> Result<()> {
    let n = sub.len();
    if q.len() != n || q.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput(format!("transition matrix must be {n}×{n}")));
    }
    for (i, row) in q.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::InvalidInput(format!("Q[{i}][{j}] must be finite and nonnegative")));
            }
            if x > 0.0 && !admissible(sub, i, j) {
                return Err(Error::InvalidInput(format!("edge {i} → {j} is not admissible")));
            }
        }
        let t: f64 = row.iter().sum();
        if (t - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("row {i} of Q sums to {t}")));
        }
    }
    Ok(())
}

/// h = −Σ_i π_i Σ_j Q_ij log Q_ij.
pub fn markov_entropy(mm: &MarkovMeasure) -> f64 {
    let mut h = 0.0;
    for (p, row) in mm.pi.iter().zip(&mm.q) {
        for &x in row {
            if x > 0.0 {
                h -= p * x * x.ln();
            }
        }
    }
    h
}

/// ∫φ dμ over the depth-d cylinders of the chain, with φ read at tile
/// centers. P(U·X) = P(X)·π(U)Q(U, X₁)/π(X₁).
pub fn markov_integral(sub: &Subsystem, mm: &MarkovMeasure, phi: &Potential, depth: usize) -> Result<Estimate> {
    phi.validate()?;
    if mm.states() != sub.len() {
        return Err(Error::InvalidInput("chain does not belong to this subsystem".into()));
    }
    if depth == 0 {
        return Err(Error::InvalidInput("cylinder depth must be positive".into()));
    }
    check_budget(node_count(sub, &Colour::ALL, depth), NODE_BUDGET)?;
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, 0.5, 0.5, depth)?;
    let c = ev.compile(&phi.variable_part());
    let roots: Vec<(Node, (usize, f64))> = Colour::ALL.iter().map(|&f| (Node::root(f), (usize::MAX, 1.0))).collect();
    let var = walk(
        &tree,
        &roots,
        depth,
        |&(first, p), m, step, _| {
            let u = step.id;
            let pu = if m == 1 {
                mm.pi[u]
            } else if mm.pi[first] > 0.0 {
                p * mm.pi[u] * mm.q[u][first] / mm.pi[first]
            } else {
                0.0
            };
            (pu > 0.0).then_some((u, pu))
        },
        |acc: &mut f64, m, &(_, p), node| {
            if m == depth {
                *acc += p * ev.variable(&c, m, node);
            }
        },
        || 0.0,
        |a, b| *a += b,
    );
    let h = phi.holder_data();
    Ok(Estimate {
        value: phi.constant + var,
        error_bar: h.seminorm * (tile_diameter(sub.map(), depth) / 2.0).powf(h.alpha),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RateReport {
    /// I clipped below at −quadrature_error.
    pub value: f64,
    /// P − h − ∫φ dμ before clipping.
    pub raw: f64,
    pub pressure: f64,
    pub entropy: f64,
    pub integral: Estimate,
    /// Combined error of the pressure and of the integral.
    pub quadrature_error: f64,
}

/// I(μ) = P − h_μ − ∫φ dμ for a stationary Markov measure μ.
pub fn rate_function(sub: &Subsystem, phi: &Potential, pressure: Estimate, mm: &MarkovMeasure, depth: usize) -> Result<RateReport> {
    let h = markov_entropy(mm);
    let integral = markov_integral(sub, mm, phi, depth)?;
    let raw = pressure.value - h - integral.value;
    let err = pressure.error_bar + integral.error_bar;
    Ok(RateReport { value: raw.max(-err), raw, pressure: pressure.value, entropy: h, integral, quadrature_error: err })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MgfRow {
    pub n: usize,
    /// (1/n)·log ∫exp(S_nψ) dμ_φ.
    pub value: f64,
    /// P(φ + ψ) − P(φ).
    pub target: f64,
    pub gap: f64,
    /// Bound on the effect of reading S_nψ at tile centers.
    pub error_bar: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MgfReport {
    pub depth: usize,
    pub pressure_phi: f64,
    pub pressure_sum: f64,
    pub rows: Vec<MgfRow>,
}

/// Compares (1/n)·log ∫exp(S_nψ) dμ_φ with P(φ + ψ) − P(φ) for n = 1..=n_max.
/// μ_φ on n-tiles deeper than the spectral depth comes from the Markov
/// extension of the eigen data.
pub fn mgf_pressure_check(sub: &Subsystem, phi: &Potential, psi: &Potential, n_max: usize, depth: usize, opts: SolverOptions) -> Result<MgfReport> {
    psi.validate()?;
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be positive".into()));
    }
    check_budget(node_count(sub, &Colour::ALL, n_max), NODE_BUDGET)?;
    let sp = solve_spectral(transfer_matrix(sub, phi, depth)?, opts)?;
    let sp_sum = solve_spectral(transfer_matrix(sub, &phi.plus(psi), depth)?, opts)?;
    let state = equilibrium_state(&sp, depth)?;
    let mw = MeasureWalker::new(&state);
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, 0.5, 0.5, n_max)?;
    let c = ev.compile(&psi.variable_part());
    let roots: Vec<(Node, (WalkMass, f64))> = Colour::ALL.iter().map(|&f| (Node::root(f), (mw.root(f), 0.0))).collect();
    let sums = walk_with_hint(
        &tree,
        &roots,
        n_max,
        |(w, s), m, step, node| Some((mw.child(w, m, step), s + ev.variable(&c, m, node))),
        |acc: &mut Vec<[f64; 2]>, m, (w, s), _| {
            acc[m][0] += w.mu * s.exp();
            acc[m][1] += w.mu;
        },
        |(w, _)| mw.prefetch(w),
        || vec![[0.0; 2]; n_max + 1],
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x[0] += y[0];
                x[1] += y[1];
            }
        },
    );
    let target = sp_sum.pressure - sp.pressure;
    let h = psi.holder_data();
    let c1 = h.seminorm / (1.0 - sub.map().expansion().powf(-h.alpha));
    let rows = (1..=n_max)
        .map(|n| {
            // Each level's mass is one up to the solver tolerance; dividing
            // by it keeps constant ψ exact.
            let value = (sums[n][0] / sums[n][1]).ln() / n as f64 + psi.constant;
            MgfRow { n, value, target, gap: (value - target).abs(), error_bar: c1 * PILLOW_DIAMETER.powf(h.alpha) / n as f64 }
        })
        .collect();
    Ok(MgfReport { depth, pressure_phi: sp.pressure, pressure_sum: sp_sum.pressure, rows })
}

fn ser_log_rate<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if *v == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LdpRow {
    pub n: usize,
    /// Ω_n of the event |∫g dV_n − a| < r.
    pub mass: f64,
    /// (1/n)·log mass, −∞ when the event is empty.
    #[serde(serialize_with = "ser_log_rate")]
    pub log_rate: f64,
}

/// (1/n)·log Ω_n({|(1/n)S_n g − a| < r}) by exact branch enumeration. The
/// basepoint of level n is `basepoints[n − 1]`, or the only entry when a
/// single point is given.
pub fn ldp_empirical(
    sub: &Subsystem,
    phi: &Potential,
    g: &Potential,
    center: f64,
    radius: f64,
    n_list: &[usize],
    basepoints: &[SplitPoint],
) -> Result<Vec<LdpRow>> {
    phi.validate()?;
    phi.require_continuous("large deviations")?;
    g.validate()?;
    if !(radius > 0.0) || n_list.contains(&0) || basepoints.is_empty() {
        return Err(Error::InvalidInput("need r > 0, positive levels and at least one basepoint".into()));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    if basepoints.len() > 1 && basepoints.len() < n_max {
        return Err(Error::InvalidInput(format!("need a basepoint for every level up to {n_max}")));
    }
    let point_of = |n: usize| if basepoints.len() == 1 { &basepoints[0] } else { &basepoints[n - 1] };
    let mut rows = Vec::with_capacity(n_list.len());
    // One walk per distinct basepoint, to the deepest level it serves.
    let mut cache: Vec<(SplitPoint, Vec<[f64; 2]>)> = Vec::new();
    for &n in n_list {
        let x = point_of(n);
        let idx = match cache.iter().position(|(p, _)| p == x) {
            Some(i) => i,
            None => {
                let deepest = n_list.iter().copied().filter(|&m| point_of(m) == x).max().unwrap_or(n);
                let masses = event_masses(sub, phi, g, center, radius, x, deepest)?;
                cache.push((x.clone(), masses));
                cache.len() - 1
            }
        };
        let [hit, total] = cache[idx].1[n];
        let mass = hit / total;
        rows.push(LdpRow { n, mass, log_rate: if mass > 0.0 { mass.ln() / n as f64 } else { f64::NEG_INFINITY } });
    }
    Ok(rows)
}

fn event_masses(sub: &Subsystem, phi: &Potential, g: &Potential, a: f64, r: f64, x: &SplitPoint, n_max: usize) -> Result<Vec<[f64; 2]>> {
    check_basepoint(sub, x, n_max)?;
    check_budget(node_count(sub, &[x.face], n_max), NODE_BUDGET)?;
    let (qx, qy) = x.to_f64();
    let tree = Tree::new(sub);
    let mut ev = Evaluator::new(tree.s, qx, qy, n_max)?;
    let cp = ev.compile(&phi.variable_part());
    let cg = ev.compile(g);
    let shift = phi.holder_data().sup_variable;
    Ok(walk(
        &tree,
        &[(Node::root(x.face), (0.0f64, 0.0f64))],
        n_max,
        |&(s, gs), m, _, node| Some((s + ev.variable(&cp, m, node), gs + ev.value(&cg, m, node))),
        |acc: &mut Vec<[f64; 2]>, m, &(s, gs), _| {
            let w = (s - m as f64 * shift).exp();
            if (gs / m as f64 - a).abs() < r {
                acc[m][0] += w;
            }
            acc[m][1] += w;
        },
        || vec![[0.0; 2]; n_max + 1],
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x[0] += y[0];
                x[1] += y[1];
            }
        },
    ))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampledRate {
    /// Smallest I over the sampled chains whose ∫g lies in the event.
    pub min_rate: Option<f64>,
    pub chains_in_event: usize,
    pub chains_sampled: usize,
}

/// The rate-function side of the LDP comparison: −min I over a sampled
/// Markov family restricted to the event should not exceed the empirical
/// log-rates by more than the sampling gap.
pub fn sampled_rate_minimum(
    sub: &Subsystem,
    phi: &Potential,
    g: &Potential,
    center: f64,
    radius: f64,
    pressure: Estimate,
    chains: &[MarkovMeasure],
    depth: usize,
) -> Result<SampledRate> {
    let mut best: Option<f64> = None;
    let mut inside = 0;
    for mm in chains {
        let gi = markov_integral(sub, mm, g, depth)?;
        if (gi.value - center).abs() < radius {
            inside += 1;
            let i = rate_function(sub, phi, pressure, mm, depth)?.value;
            best = Some(best.map_or(i, |b: f64| b.min(i)));
        }
    }
    Ok(SampledRate { min_rate: best, chains_in_event: inside, chains_sampled: chains.len() })
}
