//! Closed-form Hölder potentials on the pillow with analytic constants.
//!
//! A potential is a constant plus a sum of separable terms
//! `coeff · X(x) · Y(y)`, optionally restricted to one face. Factors are
//! `1`, `cos(πk·t)` and `tᵃ`. The cosine is even with period 2, so a trig
//! term written in local face coordinates is a genuine function on the torus
//! quotient and is continuous across the glued curve.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_map, Colour, PillowMap, SplitPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "lowercase")]
pub enum Factor {
    One,
    /// cos(π·k·t)
    Cos(u32),
    /// tᵃ
    Pow(u32),
}

impl Factor {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Factor::One => 1.0,
            Factor::Cos(k) => (PI * f64::from(k) * t).cos(),
            Factor::Pow(a) => t.powi(a as i32),
        }
    }

    /// Lipschitz constant on [0, 1].
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Factor::One => 0.0,
            Factor::Cos(k) => PI * f64::from(k),
            Factor::Pow(a) => f64::from(a),
        }
    }

    fn is_one(&self) -> bool {
        matches!(self, Factor::One | Factor::Cos(0) | Factor::Pow(0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub x: Factor,
    pub y: Factor,
    /// When set, the term only acts on this face.
    #[serde(default)]
    pub face: Option<Colour>,
}

impl Term {
    #[inline]
    pub fn eval(&self, face: Colour, x: f64, y: f64) -> f64 {
        match self.face {
            Some(f) if f != face => 0.0,
            _ => self.coeff * self.x.eval(x) * self.y.eval(y),
        }
    }
}

/// φ = constant + Σ terms, with declared Hölder exponent α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub constant: f64,
    pub terms: Vec<Term>,
    pub alpha: f64,
}

/// Hölder exponent, seminorm bound, sup bound and global continuity flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderData {
    pub alpha: f64,
    pub seminorm: f64,
    pub sup: f64,
    /// Sup bound of the non-constant part only.
    pub sup_variable: f64,
    /// False when a face-indicator term makes the potential jump across the
    /// glued curve; the seminorm then holds on each face separately.
    pub globally_continuous: bool,
}

impl Potential {
    pub fn constant(c: f64) -> Self {
        Potential { constant: c, terms: Vec::new(), alpha: 1.0 }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Σ coeff·cos(πkX)·cos(πlY) over (k, l, coeff). A (0, 0) entry is folded
    /// into the constant.
    pub fn torus_trig(terms: &[(u32, u32, f64)]) -> Self {
        let mut p = Potential::zero();
        for &(k, l, c) in terms {
            p.push(Term { coeff: c, x: Factor::Cos(k), y: Factor::Cos(l), face: None });
        }
        p
    }

    /// Σ coeff·x^a·y^b over (a, b, coeff) in local face coordinates.
    pub fn coordinate_poly(monomials: &[(u32, u32, f64)]) -> Self {
        let mut p = Potential::zero();
        for &(a, b, c) in monomials {
            p.push(Term { coeff: c, x: Factor::Pow(a), y: Factor::Pow(b), face: None });
        }
        p
    }

    /// Adds a term, folding factor-free terms into the constant.
    pub fn push(&mut self, t: Term) {
        if t.x.is_one() && t.y.is_one() && t.face.is_none() {
            self.constant += t.coeff;
        } else if t.coeff != 0.0 {
            self.terms.push(t);
        }
    }

    pub fn with_term(mut self, t: Term) -> Self {
        self.push(t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("Hölder exponent must lie in (0, 1], got {}", self.alpha)));
        }
        if !self.constant.is_finite() || self.terms.iter().any(|t| !t.coeff.is_finite()) {
            return Err(Error::InvalidInput("potential coefficients must be finite".into()));
        }
        Ok(())
    }

    /// φ + c.
    pub fn shifted(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.constant += c;
        p
    }

    /// t·φ.
    pub fn scaled(&self, t: f64) -> Self {
        Potential {
            constant: self.constant * t,
            terms: self
                .terms
                .iter()
                .filter(|_| t != 0.0)
                .map(|term| Term { coeff: term.coeff * t, ..*term })
                .collect(),
            alpha: self.alpha,
        }
    }

    /// φ + ψ. The exponent is the smaller of the two.
    pub fn plus(&self, other: &Potential) -> Self {
        let mut p = self.clone();
        p.constant += other.constant;
        for t in &other.terms {
            p.push(*t);
        }
        p.alpha = self.alpha.min(other.alpha);
        p
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }

    /// Potential without its constant part.
    pub fn variable_part(&self) -> Self {
        Potential { constant: 0.0, terms: self.terms.clone(), alpha: self.alpha }
    }

    #[inline]
    pub fn eval_local(&self, face: Colour, x: f64, y: f64) -> f64 {
        self.constant + self.terms.iter().map(|t| t.eval(face, x, y)).sum::<f64>()
    }

    pub fn eval(&self, p: &SplitPoint) -> f64 {
        let (x, y) = p.to_f64();
        self.eval_local(p.face, x, y)
    }

    pub fn holder_data(&self) -> HolderData {
        let seminorm = self
            .terms
            .iter()
            .map(|t| t.coeff.abs() * (t.x.lipschitz() + t.y.lipschitz()))
            .sum();
        let sup_variable: f64 = self.terms.iter().map(|t| t.coeff.abs()).sum();
        HolderData {
            alpha: self.alpha,
            seminorm,
            sup: sup_variable + self.constant.abs(),
            sup_variable,
            globally_continuous: self.terms.iter().all(|t| t.face.is_none()),
        }
    }

    pub fn require_continuous(&self, what: &str) -> Result<()> {
        if self.holder_data().globally_continuous {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} needs a potential that is continuous across the glued curve; face-indicator terms are not allowed"
            )))
        }
    }
}

pub fn eval(phi: &Potential, p: &SplitPoint) -> f64 {
    phi.eval(p)
}

/// S_nφ(p) = Σ_{j<n} φ(Fʲp) along the exact rational orbit.
pub fn birkhoff_sum(map: &PillowMap, phi: &Potential, p: &SplitPoint, n: usize) -> f64 {
    let mut q = p.clone();
    let mut sum = 0.0;
    for _ in 0..n {
        sum += phi.eval(&q);
        q = apply_map(map, &q);
    }
    sum
}

pub fn holder_data(phi: &Potential) -> HolderData {
    phi.holder_data()
}

/// Distortion constants derived from the Hölder data of a potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionConstants {
    /// C₁ = C₀·H/(1 − s^{−α}) with the model constant C₀ = 1.
    pub c1: f64,
    /// C̄ = (s²)^{n_F}·exp(C₁·diam^α + 2·n_F·M).
    pub c_bar: f64,
    pub n_f: usize,
}

pub fn distortion_constants(map: &PillowMap, phi: &Potential, n_f: usize) -> DistortionConstants {
    let h = phi.holder_data();
    let c1 = h.seminorm / (1.0 - map.expansion().powf(-h.alpha));
    let diam = crate::geometry::PILLOW_DIAMETER.powf(h.alpha);
    let log_c_bar = n_f as f64 * (map.degree() as f64).ln() + c1 * diam + 2.0 * n_f as f64 * h.sup_variable;
    DistortionConstants { c1, c_bar: log_c_bar.exp(), n_f }
}
