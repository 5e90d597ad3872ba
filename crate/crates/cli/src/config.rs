//! Experiment configuration: the JSON schema documented in docs/config.md.

use serde::Deserialize;
use subthurston::combinatorics::{SubTile, Subsystem, TileMatrix};
use subthurston::geometry::{Colour, PillowMap, SplitPoint};
use subthurston::potential::{Potential, Term};
use subthurston::statistics::{MarkovMeasure, PreimageMode};
use subthurston::transfer::SolverOptions;

use crate::Failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Subdivision factor of the grid map. Defaults to 3.
    #[serde(default)]
    pub s: Option<u32>,
    pub subsystem: SubsystemSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase", deny_unknown_fields)]
pub enum SubsystemSpec {
    Full,
    Carpet,
    Custom { tiles: Vec<SubTile> },
    /// Abstract tile data only; there is no geometric backend for it.
    Gasket {
        #[serde(default)]
        convention: GasketConvention,
    },
}

/// Which reading of the gasket picture to use. Each face keeps its three
/// corner triangles; the conventions differ in the colour of those corners.
#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GasketConvention {
    /// Corner triangles have the colour of the face they sit in.
    #[default]
    CornersKeepFace,
    /// Corner triangles have the opposite colour.
    CornersSwapFace,
}

/// φ = constant + Σ trig + Σ poly + Σ terms.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub constant: f64,
    /// (k, l, coeff) for coeff·cos(πkX)·cos(πlY).
    #[serde(default)]
    pub trig: Vec<(u32, u32, f64)>,
    /// (a, b, coeff) for coeff·x^a·y^b in local face coordinates.
    #[serde(default)]
    pub poly: Vec<(u32, u32, f64)>,
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub face: Colour,
    pub x: (i128, i128),
    pub y: (i128, i128),
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChainSpec {
    #[default]
    Uniform,
    Deterministic,
    Random,
    Explicit { q: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub level: usize,
    pub max_level: usize,
    pub depth: usize,
    pub n_max: usize,
    pub n_list: Option<Vec<usize>>,
    pub levels: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub basepoint: Option<PointSpec>,
    pub basepoints: Option<Vec<PointSpec>>,
    pub seed: Option<u64>,
    pub mode: PreimageMode,
    pub g: Option<PotentialSpec>,
    pub gamma: Option<PotentialSpec>,
    pub psi: Option<PotentialSpec>,
    pub epsilon: f64,
    pub richardson: bool,
    pub chain: ChainSpec,
    pub random_chains: usize,
    pub center: Option<f64>,
    pub radius: Option<f64>,
    pub sampled_chains: usize,
    pub distortion_pairs: usize,
    pub distortion_level: usize,
    pub negative_control: bool,
    pub dump_vectors: bool,
}

impl Default for Params {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Params {
            level: 1,
            max_level: 8,
            depth: 4,
            n_max: 10,
            n_list: None,
            levels: None,
            tol: solver.tol,
            max_iter: solver.max_iter,
            basepoint: None,
            basepoints: None,
            seed: None,
            mode: PreimageMode::Birkhoff,
            g: None,
            gamma: None,
            psi: None,
            epsilon: 1e-3,
            richardson: false,
            chain: ChainSpec::Uniform,
            random_chains: 0,
            center: None,
            radius: None,
            sampled_chains: 0,
            distortion_pairs: 0,
            distortion_level: 6,
            negative_control: false,
            dump_vectors: false,
        }
    }
}

fn invalid(reason: impl Into<String>) -> Failure {
    Failure::config(reason)
}

fn in_range<T: PartialOrd + std::fmt::Display + Copy>(name: &str, v: T, lo: T, hi: T) -> Result<T, Failure> {
    if v < lo || v > hi {
        return Err(invalid(format!("{name} = {v} is outside [{lo}, {hi}]")));
    }
    Ok(v)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        let p = &self.params;
        in_range("params.level", p.level, 1, 4096)?;
        in_range("params.max_level", p.max_level, 1, 16)?;
        in_range("params.depth", p.depth, 1, 10)?;
        in_range("params.n_max", p.n_max, 1, 30)?;
        if let Some(l) = p.levels {
            in_range("params.levels", l, 1, 30)?;
        }
        if let Some(ns) = &p.n_list {
            if ns.is_empty() {
                return Err(invalid("params.n_list must not be empty"));
            }
            for &n in ns {
                in_range("params.n_list entry", n, 1, 30)?;
            }
        }
        if !(p.tol > 0.0 && p.tol <= 1e-2) {
            return Err(invalid(format!("params.tol = {} is outside (0, 1e-2]", p.tol)));
        }
        in_range("params.max_iter", p.max_iter, 1, 10_000_000)?;
        if !(p.epsilon > 0.0 && p.epsilon <= 1.0) {
            return Err(invalid(format!("params.epsilon = {} is outside (0, 1]", p.epsilon)));
        }
        if let Some(r) = p.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("params.radius must be positive"));
            }
        }
        in_range("params.random_chains", p.random_chains, 0, 10_000)?;
        in_range("params.sampled_chains", p.sampled_chains, 0, 10_000)?;
        in_range("params.distortion_pairs", p.distortion_pairs, 0, 1_000_000)?;
        in_range("params.distortion_level", p.distortion_level, 1, 12)?;
        let sampled = matches!(p.chain, ChainSpec::Random)
            || p.random_chains > 0
            || p.sampled_chains > 0
            || p.distortion_pairs > 0
            || p.negative_control;
        if sampled && p.seed.is_none() {
            return Err(invalid("params.seed is required for sampled operations"));
        }
        Ok(())
    }

    pub fn s(&self) -> u32 {
        self.s.unwrap_or(3)
    }

    pub fn is_abstract(&self) -> bool {
        matches!(self.subsystem, SubsystemSpec::Gasket { .. })
    }

    /// The geometric subsystem. The gasket preset has none.
    pub fn subsystem(&self) -> Result<Subsystem, Failure> {
        let s = self.s();
        match &self.subsystem {
            SubsystemSpec::Full => Ok(Subsystem::full(s)?),
            SubsystemSpec::Carpet => {
                if s != 3 {
                    return Err(invalid("the carpet preset needs s = 3"));
                }
                Ok(Subsystem::carpet())
            }
            SubsystemSpec::Custom { tiles } => {
                if tiles.is_empty() {
                    return Err(invalid("a custom subsystem needs at least one tile"));
                }
                Ok(Subsystem::new(PillowMap::new(s)?, tiles.iter().copied())?)
            }
            SubsystemSpec::Gasket { .. } => Err(invalid(
                "the gasket preset carries tile data only; use describe or tile-matrix",
            )),
        }
    }

    pub fn tile_matrix(&self) -> Result<TileMatrix, Failure> {
        match &self.subsystem {
            SubsystemSpec::Gasket { convention } => Ok(gasket_matrix(*convention)),
            _ => Ok(self.subsystem()?.tile_matrix()),
        }
    }

    pub fn potential(&self) -> Result<Potential, Failure> {
        self.potential.build("potential")
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.params.tol, max_iter: self.params.max_iter }
    }

    pub fn basepoint(&self) -> Result<SplitPoint, Failure> {
        match &self.params.basepoint {
            Some(p) => p.build(),
            // 7 and 11 are coprime to every subdivision factor used in
            // practice, so this point avoids all grid lines.
            None => Ok(SplitPoint::from_fractions(Colour::White, (3, 7), (5, 11))?),
        }
    }

    pub fn basepoints(&self) -> Result<Vec<SplitPoint>, Failure> {
        match &self.params.basepoints {
            Some(ps) if !ps.is_empty() => ps.iter().map(PointSpec::build).collect(),
            Some(_) => Err(invalid("params.basepoints must not be empty")),
            None => Ok(vec![self.basepoint()?]),
        }
    }

    pub fn n_list(&self) -> Vec<usize> {
        self.params.n_list.clone().unwrap_or_else(|| (1..=self.params.n_max).collect())
    }

    pub fn required(&self, name: &str, spec: &Option<PotentialSpec>) -> Result<Potential, Failure> {
        match spec {
            Some(s) => s.build(&format!("params.{name}")),
            None => Err(invalid(format!("params.{name} is required for this command"))),
        }
    }

    pub fn seed(&self) -> u64 {
        // validate() guarantees a seed wherever one is consumed.
        self.params.seed.unwrap_or(0)
    }

    pub fn chain(&self, sub: &Subsystem) -> Result<MarkovMeasure, Failure> {
        Ok(match &self.params.chain {
            ChainSpec::Uniform => MarkovMeasure::uniform(sub)?,
            ChainSpec::Deterministic => MarkovMeasure::deterministic(sub)?,
            ChainSpec::Random => MarkovMeasure::random(sub, self.seed())?,
            ChainSpec::Explicit { q } => MarkovMeasure::new(sub, q.clone())?,
        })
    }
}

impl PotentialSpec {
    fn build(&self, name: &str) -> Result<Potential, Failure> {
        let mut phi = Potential::torus_trig(&self.trig)
            .plus(&Potential::coordinate_poly(&self.poly))
            .shifted(self.constant);
        for t in &self.terms {
            phi.push(*t);
        }
        if let Some(a) = self.alpha {
            phi.alpha = a;
        }
        phi.validate().map_err(|e| invalid(format!("{name}: {e}")))?;
        Ok(phi)
    }
}

impl PointSpec {
    fn build(&self) -> Result<SplitPoint, Failure> {
        Ok(SplitPoint::from_fractions(self.face, self.x, self.y)?)
    }
}

fn gasket_matrix(c: GasketConvention) -> TileMatrix {
    match c {
        GasketConvention::CornersKeepFace => TileMatrix::from_u64([[3, 0], [0, 3]]),
        GasketConvention::CornersSwapFace => TileMatrix::from_u64([[0, 3], [3, 0]]),
    }
}
