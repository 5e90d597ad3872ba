//! Exact model of the pillow sphere and the s×s grid map.
//!
//! The pillow is the quotient of the torus ℝ²/(2ℤ)² by z ↦ −z, with
//! fundamental domain [0,2]×[0,1]. The white face is [0,1]² with local
//! coordinates (x, y) and the black face is the lift (2 − x, y). The grid map
//! lifts to z ↦ s·z, so forward and inverse dynamics are exact on rationals.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational coordinate.
pub type Rational = Ratio<i128>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colour {
    White,
    Black,
}

impl Colour {
    pub const ALL: [Colour; 2] = [Colour::White, Colour::Black];

    pub fn complement(self) -> Colour {
        match self {
            Colour::White => Colour::Black,
            Colour::Black => Colour::White,
        }
    }

    /// White is 0 and black is 1; every 2-vector in the crate uses this order.
    pub fn index(self) -> usize {
        match self {
            Colour::White => 0,
            Colour::Black => 1,
        }
    }

    pub fn from_index(i: usize) -> Colour {
        if i == 0 {
            Colour::White
        } else {
            Colour::Black
        }
    }

    pub fn flip_if(self, odd: bool) -> Colour {
        if odd {
            self.complement()
        } else {
            self
        }
    }
}

impl fmt::Display for Colour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Colour::White => write!(f, "white"),
            Colour::Black => write!(f, "black"),
        }
    }
}

/// The grid map of subdivision factor `s` on the pillow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PillowMap {
    s: u32,
}

impl PillowMap {
    /// Largest supported subdivision factor. Larger grids overflow the
    /// integer node coordinates used by the branch enumerators long before
    /// they become interesting.
    pub const MAX_S: u32 = 64;

    pub fn new(s: u32) -> Result<Self> {
        if !(2..=Self::MAX_S).contains(&s) {
            return Err(Error::InvalidInput(format!(
                "subdivision factor must lie in 2..={}, got {s}",
                Self::MAX_S
            )));
        }
        Ok(PillowMap { s })
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    /// Topological degree s².
    pub fn degree(&self) -> u64 {
        u64::from(self.s) * u64::from(self.s)
    }

    /// Expansion factor of the Euclidean proxy metric.
    pub fn expansion(&self) -> f64 {
        f64::from(self.s)
    }

    /// Colour of the cell (i, j) inside `face`: the face flipped by the parity
    /// of i + j.
    pub fn cell_colour(&self, face: Colour, i: u32, j: u32) -> Colour {
        face.flip_if((i + j) % 2 == 1)
    }

    fn check_digit(&self, i: u32, j: u32) -> Result<()> {
        if i >= self.s || j >= self.s {
            return Err(Error::MalformedDigit { i, j, s: self.s });
        }
        Ok(())
    }
}

/// A point of the split sphere: a face tag and exact local coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SplitPoint {
    pub face: Colour,
    pub x: Rational,
    pub y: Rational,
}

fn unit_interval(v: &Rational) -> bool {
    !v.is_negative() && *v <= Rational::one()
}

impl SplitPoint {
    pub fn new(face: Colour, x: Rational, y: Rational) -> Result<Self> {
        if !unit_interval(&x) || !unit_interval(&y) {
            return Err(Error::InvalidInput(format!(
                "split point coordinates must lie in [0,1], got ({x}, {y})"
            )));
        }
        Ok(SplitPoint { face, x, y })
    }

    /// Convenience constructor from numerator/denominator pairs.
    pub fn from_fractions(face: Colour, x: (i128, i128), y: (i128, i128)) -> Result<Self> {
        if x.1 == 0 || y.1 == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        Self::new(face, Rational::new(x.0, x.1), Rational::new(y.0, y.1))
    }

    pub fn center(face: Colour) -> Self {
        let h = Rational::new(1, 2);
        SplitPoint { face, x: h, y: h }
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (to_f64(&self.x), to_f64(&self.y))
    }

    /// True when the point lies on the glued boundary curve.
    pub fn on_curve(&self) -> bool {
        let zero = Rational::zero();
        let one = Rational::one();
        self.x == zero || self.x == one || self.y == zero || self.y == one
    }

    /// Coordinates of the canonical lift to the torus fundamental domain.
    pub fn lift(&self) -> (Rational, Rational) {
        match self.face {
            Colour::White => (self.x, self.y),
            Colour::Black => (Rational::from_integer(2) - self.x, self.y),
        }
    }

    /// Projects a torus point back to the pillow. Points on the curve are
    /// tagged white when the fold leaves a choice.
    pub fn from_torus(x: Rational, y: Rational) -> SplitPoint {
        let two = Rational::from_integer(2);
        let one = Rational::one();
        let mut x = mod2(x);
        let mut y = mod2(y);
        if y > one {
            x = mod2(-x);
            y = two - y;
        }
        if x <= one {
            SplitPoint { face: Colour::White, x, y }
        } else {
            SplitPoint { face: Colour::Black, x: two - x, y }
        }
    }
}

impl fmt::Display for SplitPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.face, self.x, self.y)
    }
}

fn mod2(v: Rational) -> Rational {
    let two = Rational::from_integer(2);
    let q = (v / two).floor();
    v - q * two
}

pub(crate) fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Symbolic address of an n-tile: the face holding the tile and the n cell
/// digits read from the outermost subdivision inwards.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileAddress {
    pub face: Colour,
    pub digits: Vec<(u32, u32)>,
}

impl TileAddress {
    pub fn zero(face: Colour) -> Self {
        TileAddress { face, digits: Vec::new() }
    }

    pub fn new(face: Colour, digits: Vec<(u32, u32)>) -> Self {
        TileAddress { face, digits }
    }

    pub fn level(&self) -> usize {
        self.digits.len()
    }
}

/// Closed subsquare occupied by a tile, in the local coordinates of its face.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedTile {
    pub face: Colour,
    pub corner: (Rational, Rational),
    pub side: Rational,
    pub colour: Colour,
}

impl ResolvedTile {
    pub fn center(&self) -> SplitPoint {
        let h = self.side / Rational::from_integer(2);
        SplitPoint { face: self.face, x: self.corner.0 + h, y: self.corner.1 + h }
    }

    pub fn contains(&self, p: &SplitPoint) -> bool {
        p.face == self.face
            && p.x >= self.corner.0
            && p.x <= self.corner.0 + self.side
            && p.y >= self.corner.1
            && p.y <= self.corner.1 + self.side
    }
}

/// Inverse branch (Fⁿ restricted to a tile)⁻¹, stored as an affine map from
/// the 0-tile of the tile's colour onto the tile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineBranch {
    pub address: TileAddress,
    face: Colour,
    colour: Colour,
    origin: (Rational, Rational),
    scale: (Rational, Rational),
}

impl AffineBranch {
    pub fn new(map: &PillowMap, address: &TileAddress) -> Result<Self> {
        let s = Rational::from_integer(i128::from(map.s()));
        let mut origin = (Rational::zero(), Rational::zero());
        let mut scale = (Rational::one(), Rational::one());
        let mut colour = address.face;
        for &(i, j) in &address.digits {
            map.check_digit(i, j)?;
            let (oi, si) = compose_digit(origin.0, scale.0, i, s);
            let (oj, sj) = compose_digit(origin.1, scale.1, j, s);
            origin = (oi, oj);
            scale = (si, sj);
            colour = colour.flip_if((i + j) % 2 == 1);
        }
        Ok(AffineBranch { address: address.clone(), face: address.face, colour, origin, scale })
    }

    /// Face of the 0-tile onto which Fⁿ maps the tile.
    pub fn colour(&self) -> Colour {
        self.colour
    }

    pub fn evaluate(&self, q: &SplitPoint) -> Result<SplitPoint> {
        if q.face != self.colour {
            return Err(Error::FaceMismatch { expected: self.colour, found: q.face });
        }
        Ok(SplitPoint {
            face: self.face,
            x: self.origin.0 + self.scale.0 * q.x,
            y: self.origin.1 + self.scale.1 * q.y,
        })
    }

    pub fn tile(&self) -> ResolvedTile {
        let x0 = self.origin.0.min(self.origin.0 + self.scale.0);
        let y0 = self.origin.1.min(self.origin.1 + self.scale.1);
        ResolvedTile {
            face: self.face,
            corner: (x0, y0),
            side: self.scale.0.abs(),
            colour: self.colour,
        }
    }
}

// The branch of cell index `i` sends t to (i + t)/s for even i and to
// (i + 1 − t)/s for odd i; composing it after x = o + c·t gives a new affine map.
fn compose_digit(o: Rational, c: Rational, i: u32, s: Rational) -> (Rational, Rational) {
    let i = Rational::from_integer(i128::from(i));
    if (i.to_integer() % 2) == 0 {
        (o + c * i / s, c / s)
    } else {
        (o + c * (i + Rational::one()) / s, -c / s)
    }
}

/// F(p), computed on the torus lift: multiply by s, reduce mod 2, fold.
pub fn apply_map(map: &PillowMap, p: &SplitPoint) -> SplitPoint {
    let s = Rational::from_integer(i128::from(map.s()));
    let (x, y) = p.lift();
    SplitPoint::from_torus(x * s, y * s)
}

/// Fⁿ(p).
pub fn apply_map_iter(map: &PillowMap, p: &SplitPoint, n: usize) -> SplitPoint {
    let mut q = p.clone();
    for _ in 0..n {
        q = apply_map(map, &q);
    }
    q
}

pub fn resolve_address(map: &PillowMap, a: &TileAddress) -> Result<ResolvedTile> {
    Ok(AffineBranch::new(map, a)?.tile())
}

pub fn branch_evaluate(map: &PillowMap, a: &TileAddress, q: &SplitPoint) -> Result<SplitPoint> {
    AffineBranch::new(map, a)?.evaluate(q)
}

pub fn touches_curve(map: &PillowMap, a: &TileAddress) -> Result<bool> {
    let t = resolve_address(map, a)?;
    let zero = Rational::zero();
    let one = Rational::one();
    Ok(t.corner.0 == zero
        || t.corner.1 == zero
        || t.corner.0 + t.side == one
        || t.corner.1 + t.side == one)
}

pub fn tile_diameter(map: &PillowMap, n: usize) -> f64 {
    std::f64::consts::SQRT_2 * map.expansion().powi(-(n as i32))
}

/// Diameter of the whole pillow in the proxy metric.
pub const PILLOW_DIAMETER: f64 = std::f64::consts::SQRT_2;

/// Euclidean path distance on the pillow between two points given in local
/// face coordinates. Within one face this is the straight segment; across
/// faces the shortest path crosses one glued edge.
pub fn pillow_distance(p: (Colour, f64, f64), q: (Colour, f64, f64)) -> f64 {
    let (pf, px, py) = p;
    let (qf, qx, qy) = q;
    if pf == qf {
        return (px - qx).hypot(py - qy);
    }
    // For each edge, reflect q across the edge line and clamp the crossing
    // point to the edge; the path length is convex along the edge.
    let mut best = f64::INFINITY;
    for edge in 0..4 {
        let b = match edge {
            0 => (0.0, crossing(px, py, -qx, qy, 0.0)),
            1 => (1.0, crossing(px, py, 2.0 - qx, qy, 1.0)),
            2 => (crossing(py, px, -qy, qx, 0.0), 0.0),
            _ => (crossing(py, px, 2.0 - qy, qx, 1.0), 1.0),
        };
        let d = (px - b.0).hypot(py - b.1) + (qx - b.0).hypot(qy - b.1);
        best = best.min(d);
    }
    best
}

// Coordinate along the edge where the segment from (a, u) to the reflected
// point (a_ref, u_ref) meets the edge line a = `line`, clamped to [0, 1].
fn crossing(a: f64, u: f64, a_ref: f64, u_ref: f64, line: f64) -> f64 {
    let denom = a_ref - a;
    let t = if denom.abs() < f64::EPSILON { 0.0 } else { (line - a) / denom };
    (u + t * (u_ref - u)).clamp(0.0, 1.0)
}
