//! Subsystems, n-tiles and the 2×2 tile-matrix theory.
//!
//! An n-tile of a subsystem is an admissible word T₁…Tₙ of selected 1-tiles,
//! where admissible means the position of T_{k+1} equals the colour of T_k.
//! Tile matrices use the layout `[[N_ww, N_bw], [N_wb, N_bb]]`: the row is
//! the position (the 0-tile containing the tile) and the column is the
//! colour. With this layout A(Dⁿ⁺¹) = A(Dⁿ)·A(D¹).

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    AffineBranch, Colour, PillowMap, Rational, ResolvedTile, SplitPoint, TileAddress,
};

/// A selected 1-tile: the cell (i, j) of a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubTile {
    pub face: Colour,
    pub i: u32,
    pub j: u32,
}

impl SubTile {
    pub fn new(face: Colour, i: u32, j: u32) -> Self {
        SubTile { face, i, j }
    }

    pub fn address(&self) -> TileAddress {
        TileAddress::new(self.face, vec![(self.i, self.j)])
    }
}

/// A subsystem F of the grid map: the map restricted to a union of 1-tiles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subsystem {
    map: PillowMap,
    tiles: Vec<SubTile>,
    colours: Vec<Colour>,
    by_colour: [Vec<usize>; 2],
    by_position: [Vec<usize>; 2],
}

impl Subsystem {
    /// Builds a subsystem from a set of 1-tiles. Duplicates are merged and the
    /// tiles are stored in the canonical order (face with white first, i, j).
    pub fn new(map: PillowMap, tiles: impl IntoIterator<Item = SubTile>) -> Result<Self> {
        let mut tiles: Vec<SubTile> = tiles.into_iter().collect();
        for t in &tiles {
            if t.i >= map.s() || t.j >= map.s() {
                return Err(Error::MalformedDigit { i: t.i, j: t.j, s: map.s() });
            }
        }
        tiles.sort();
        tiles.dedup();
        if tiles.is_empty() {
            return Err(Error::InvalidInput("a subsystem needs at least one 1-tile".into()));
        }
        let colours: Vec<Colour> = tiles.iter().map(|t| map.cell_colour(t.face, t.i, t.j)).collect();
        let mut by_colour = [Vec::new(), Vec::new()];
        let mut by_position = [Vec::new(), Vec::new()];
        for (id, t) in tiles.iter().enumerate() {
            by_colour[colours[id].index()].push(id);
            by_position[t.face.index()].push(id);
        }
        Ok(Subsystem { map, tiles, colours, by_colour, by_position })
    }

    /// Every 1-tile of the map: the map itself.
    pub fn full(s: u32) -> Result<Self> {
        let map = PillowMap::new(s)?;
        Self::new(map, all_cells(s).into_iter())
    }

    /// The carpet: s = 3 with the middle cell of each face removed.
    pub fn carpet() -> Self {
        let tiles = all_cells(3).into_iter().filter(|t| !(t.i == 1 && t.j == 1));
        Self::new(PillowMap::new(3).expect("s = 3 is valid"), tiles).expect("carpet is valid")
    }

    /// Each face keeps only the cells coloured like the face itself.
    pub fn same_colour_only(s: u32) -> Result<Self> {
        let map = PillowMap::new(s)?;
        let tiles = all_cells(s)
            .into_iter()
            .filter(|t| map.cell_colour(t.face, t.i, t.j) == t.face);
        Self::new(map, tiles)
    }

    /// Two interior cells of opposite colour, one per face, on the s = 4 grid.
    /// Each maps onto the other face, so the maximal invariant set is a single
    /// 2-cycle.
    pub fn two_point() -> Self {
        let map = PillowMap::new(4).expect("s = 4 is valid");
        let tiles = [SubTile::new(Colour::White, 1, 2), SubTile::new(Colour::Black, 1, 2)];
        Self::new(map, tiles).expect("two-point subsystem is valid")
    }

    pub fn map(&self) -> &PillowMap {
        &self.map
    }

    pub fn tiles(&self) -> &[SubTile] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn colour_of(&self, id: usize) -> Colour {
        self.colours[id]
    }

    pub fn position_of(&self, id: usize) -> Colour {
        self.tiles[id].face
    }

    /// Ids of selected tiles with the given colour, in canonical order.
    pub fn with_colour(&self, c: Colour) -> &[usize] {
        &self.by_colour[c.index()]
    }

    /// Ids of selected tiles lying in the given face, in canonical order.
    pub fn in_face(&self, f: Colour) -> &[usize] {
        &self.by_position[f.index()]
    }

    /// Rank of a tile inside its colour class.
    pub fn colour_rank(&self, id: usize) -> usize {
        let c = self.colours[id];
        self.by_colour[c.index()].iter().position(|&t| t == id).expect("id is in its class")
    }

    pub fn id_of(&self, t: &SubTile) -> Option<usize> {
        self.tiles.binary_search(t).ok()
    }

    /// Number of selected tiles per face, white first.
    pub fn per_face_counts(&self) -> [usize; 2] {
        [self.by_position[0].len(), self.by_position[1].len()]
    }

    /// Colours that occur among the selected tiles.
    pub fn colour_set(&self) -> Vec<Colour> {
        Colour::ALL.into_iter().filter(|c| !self.by_colour[c.index()].is_empty()).collect()
    }

    /// F(dom F) = S² exactly when both colours occur.
    pub fn is_surjective(&self) -> bool {
        self.colour_set().len() == 2
    }

    pub fn require_surjective(&self) -> Result<()> {
        if self.is_surjective() {
            Ok(())
        } else {
            Err(Error::NotSurjective(format!(
                "only the colours {:?} occur among the selected tiles",
                self.colour_set()
            )))
        }
    }

    pub fn tile_matrix(&self) -> TileMatrix {
        let mut a = [[0u64; 2]; 2];
        for (id, t) in self.tiles.iter().enumerate() {
            a[t.face.index()][self.colours[id].index()] += 1;
        }
        TileMatrix::from_u64(a)
    }
}

fn all_cells(s: u32) -> Vec<SubTile> {
    let mut v = Vec::with_capacity(2 * (s * s) as usize);
    for face in Colour::ALL {
        for i in 0..s {
            for j in 0..s {
                v.push(SubTile::new(face, i, j));
            }
        }
    }
    v
}

/// Exact 2×2 tile matrix, stored as `entries[position][colour]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TileMatrix {
    entries: [[BigUint; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixClass {
    Degenerate,
    Isolated,
    Regular,
}

impl TileMatrix {
    pub fn from_u64(a: [[u64; 2]; 2]) -> Self {
        TileMatrix {
            entries: [
                [BigUint::from(a[0][0]), BigUint::from(a[0][1])],
                [BigUint::from(a[1][0]), BigUint::from(a[1][1])],
            ],
        }
    }

    pub fn identity() -> Self {
        Self::from_u64([[1, 0], [0, 1]])
    }

    /// N_{colour, position}.
    pub fn get(&self, colour: Colour, position: Colour) -> &BigUint {
        &self.entries[position.index()][colour.index()]
    }

    /// Entry by layout coordinates.
    pub fn entry(&self, row: usize, col: usize) -> &BigUint {
        &self.entries[row][col]
    }

    pub fn to_u64(&self) -> Option<[[u64; 2]; 2]> {
        Some([
            [self.entries[0][0].to_u64()?, self.entries[0][1].to_u64()?],
            [self.entries[1][0].to_u64()?, self.entries[1][1].to_u64()?],
        ])
    }

    pub fn to_strings(&self) -> [[String; 2]; 2] {
        [
            [self.entries[0][0].to_string(), self.entries[0][1].to_string()],
            [self.entries[1][0].to_string(), self.entries[1][1].to_string()],
        ]
    }

    pub fn mul(&self, other: &TileMatrix) -> TileMatrix {
        let e = |r: usize, c: usize| {
            &self.entries[r][0] * &other.entries[0][c] + &self.entries[r][1] * &other.entries[1][c]
        };
        TileMatrix { entries: [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]] }
    }

    pub fn pow(&self, n: u32) -> TileMatrix {
        let mut result = TileMatrix::identity();
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        result
    }

    /// Number of tiles lying in the given face.
    pub fn position_sum(&self, position: Colour) -> BigUint {
        let r = position.index();
        &self.entries[r][0] + &self.entries[r][1]
    }

    /// Number of tiles of the given colour.
    pub fn colour_sum(&self, colour: Colour) -> BigUint {
        let c = colour.index();
        &self.entries[0][c] + &self.entries[1][c]
    }

    pub fn total(&self) -> BigUint {
        self.position_sum(Colour::White) + self.position_sum(Colour::Black)
    }

    pub fn positive_pattern(&self) -> BoolMatrix {
        let z = |r: usize, c: usize| !self.entries[r][c].is_zero();
        BoolMatrix([[z(0, 0), z(0, 1)], [z(1, 0), z(1, 1)]])
    }

    /// Degenerate (a zero row), isolated (one of the unit forms) or regular.
    pub fn classify(&self) -> MatrixClass {
        let e = &self.entries;
        let zero = |v: &BigUint| v.is_zero();
        let one = |v: &BigUint| v.is_one();
        if (zero(&e[0][0]) && zero(&e[0][1])) || (zero(&e[1][0]) && zero(&e[1][1])) {
            return MatrixClass::Degenerate;
        }
        let top = one(&e[0][0]) && zero(&e[0][1]) && !(zero(&e[1][0]) && zero(&e[1][1]));
        let bottom = zero(&e[1][0]) && one(&e[1][1]) && !(zero(&e[0][0]) && zero(&e[0][1]));
        let swap = zero(&e[0][0]) && one(&e[0][1]) && one(&e[1][0]) && zero(&e[1][1]);
        if top || bottom || swap {
            MatrixClass::Isolated
        } else {
            MatrixClass::Regular
        }
    }
}

impl fmt::Display for TileMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.entries;
        write!(f, "[[{}, {}], [{}, {}]]", e[0][0], e[0][1], e[1][0], e[1][1])
    }
}

pub fn tile_matrix(sub: &Subsystem) -> TileMatrix {
    sub.tile_matrix()
}

/// A(Dⁿ) as the n-th power of A(D¹).
pub fn tile_matrix_level(sub: &Subsystem, n: u32) -> Result<TileMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("tile_matrix_level needs n >= 1".into()));
    }
    Ok(sub.tile_matrix().pow(n))
}

pub fn classify_matrix(a: &TileMatrix) -> MatrixClass {
    a.classify()
}

/// 2×2 boolean matrix in the tile-matrix layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolMatrix(pub [[bool; 2]; 2]);

impl BoolMatrix {
    pub fn all(&self) -> bool {
        self.0.iter().flatten().all(|&b| b)
    }

    pub fn product(&self, other: &BoolMatrix) -> BoolMatrix {
        let e = |r: usize, c: usize| {
            (self.0[r][0] && other.0[0][c]) || (self.0[r][1] && other.0[1][c])
        };
        BoolMatrix([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }

    /// Entrywise `self >= other`.
    pub fn dominates(&self, other: &BoolMatrix) -> bool {
        (0..2).all(|r| (0..2).all(|c| self.0[r][c] || !other.0[r][c]))
    }

    pub fn or(&self, other: &BoolMatrix) -> BoolMatrix {
        let e = |r: usize, c: usize| self.0[r][c] || other.0[r][c];
        BoolMatrix([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }
}

/// Result of a tile enumeration. An empty list for n ≥ 1 on a subsystem that
/// is not surjective carries a warning instead of failing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enumeration {
    pub tiles: Vec<TileAddress>,
    pub warning: Option<String>,
}

/// Hard cap on the number of tiles `enumerate_tiles` will materialize.
pub const ENUMERATION_LIMIT: u64 = 20_000_000;

/// Lists Dⁿ in canonical lexicographic order. For n = 0 the two 0-tiles.
pub fn enumerate_tiles(sub: &Subsystem, n: usize) -> Result<Enumeration> {
    if n == 0 {
        let tiles = Colour::ALL.iter().map(|&c| TileAddress::zero(c)).collect();
        return Ok(Enumeration { tiles, warning: None });
    }
    let expected = sub.tile_matrix().pow(n as u32).total();
    let expected_f = expected.to_f64().unwrap_or(f64::INFINITY);
    if expected_f > ENUMERATION_LIMIT as f64 {
        return Err(Error::BudgetExceeded { needed: expected_f, limit: ENUMERATION_LIMIT as f64 });
    }
    let mut tiles = Vec::with_capacity(expected_f as usize);
    let mut word = Vec::with_capacity(n);
    for id in 0..sub.len() {
        word.push(id);
        extend_words(sub, n, &mut word, &mut tiles);
        word.pop();
    }
    let warning = if tiles.is_empty() || !sub.is_surjective() {
        Some(format!(
            "subsystem is not surjective; colours present: {:?}; {} tiles at level {n}",
            sub.colour_set(),
            tiles.len()
        ))
    } else {
        None
    };
    Ok(Enumeration { tiles, warning })
}

fn extend_words(sub: &Subsystem, n: usize, word: &mut Vec<usize>, out: &mut Vec<TileAddress>) {
    if word.len() == n {
        let first = sub.tiles()[word[0]];
        let digits = word.iter().map(|&id| (sub.tiles()[id].i, sub.tiles()[id].j)).collect();
        out.push(TileAddress::new(first.face, digits));
        return;
    }
    let last = *word.last().expect("word is nonempty");
    for &next in sub.in_face(sub.colour_of(last)) {
        word.push(next);
        extend_words(sub, n, word, out);
        word.pop();
    }
}

/// Tile counts by (position, colour) for every level 1..=n_max, obtained by
/// walking every admissible word once. This is the enumeration side of the
/// check A(Dⁿ) = A(D¹)ⁿ and never uses matrix products.
pub fn count_tiles_by_enumeration(sub: &Subsystem, n_max: usize) -> Vec<[[u64; 2]; 2]> {
    let mut counts = vec![[[0u64; 2]; 2]; n_max + 1];
    counts[0] = [[1, 0], [0, 1]];
    if n_max == 0 {
        return counts;
    }
    // Children of a word depend only on the colour of its last letter.
    let next: [Vec<u8>; 2] = [
        sub.in_face(Colour::White).iter().map(|&id| sub.colour_of(id).index() as u8).collect(),
        sub.in_face(Colour::Black).iter().map(|&id| sub.colour_of(id).index() as u8).collect(),
    ];
    for root in Colour::ALL {
        let mut level = vec![[0u64; 2]; n_max + 1];
        for &c in &next[root.index()] {
            walk_count(&next, c, 1, n_max, &mut level);
        }
        for (n, l) in level.iter().enumerate().skip(1) {
            counts[n][root.index()][0] += l[0];
            counts[n][root.index()][1] += l[1];
        }
    }
    counts
}

fn walk_count(next: &[Vec<u8>; 2], colour: u8, depth: usize, n_max: usize, level: &mut [[u64; 2]]) {
    level[depth][colour as usize] += 1;
    if depth == n_max {
        return;
    }
    for &c in &next[colour as usize] {
        walk_count(next, c, depth + 1, n_max, level);
    }
}

/// Counts of n-tiles containing a point, stored as `entries[position][colour]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeMatrix {
    pub entries: [[u64; 2]; 2],
}

impl DegreeMatrix {
    pub fn get(&self, colour: Colour, position: Colour) -> u64 {
        self.entries[position.index()][colour.index()]
    }

    /// Number of colour-c tiles containing the point (the colour degree).
    pub fn colour_degree(&self, colour: Colour) -> u64 {
        self.entries[0][colour.index()] + self.entries[1][colour.index()]
    }

    /// Number of tiles inside the given face that contain the point.
    pub fn position_count(&self, position: Colour) -> u64 {
        self.entries[position.index()][0] + self.entries[position.index()][1]
    }

    /// Local degree: the larger colour degree.
    pub fn local_degree(&self) -> u64 {
        self.colour_degree(Colour::White).max(self.colour_degree(Colour::Black))
    }
}

/// Counts the n-tiles of the subsystem whose closed square contains `p`.
/// A point on the glued curve belongs to both faces and is counted in each.
pub fn local_degree_matrix(sub: &Subsystem, p: &SplitPoint, n: usize) -> DegreeMatrix {
    let mut entries = [[0u64; 2]; 2];
    let mut faces = vec![p.face];
    if p.on_curve() {
        faces.push(p.face.complement());
    }
    for face in faces {
        let q = SplitPoint { face, x: p.x, y: p.y };
        let mut by_colour = [0u64; 2];
        count_containing(sub, &q, n, &mut by_colour);
        entries[face.index()][0] += by_colour[0];
        entries[face.index()][1] += by_colour[1];
    }
    DegreeMatrix { entries }
}

fn count_containing(sub: &Subsystem, q: &SplitPoint, n: usize, out: &mut [u64; 2]) {
    let s = sub.map().s();
    let sr = Rational::from_integer(i128::from(s));
    for &id in sub.in_face(q.face) {
        let t = sub.tiles()[id];
        let lo_x = Rational::new(i128::from(t.i), i128::from(s));
        let lo_y = Rational::new(i128::from(t.j), i128::from(s));
        let hi_x = lo_x + Rational::new(1, i128::from(s));
        let hi_y = lo_y + Rational::new(1, i128::from(s));
        if q.x < lo_x || q.x > hi_x || q.y < lo_y || q.y > hi_y {
            continue;
        }
        let colour = sub.colour_of(id);
        if n == 1 {
            out[colour.index()] += 1;
            continue;
        }
        // Local forward map of the cell: the inverse of its affine branch.
        let w = q.x * sr - Rational::from_integer(i128::from(t.i));
        let v = q.y * sr - Rational::from_integer(i128::from(t.j));
        let x = if t.i % 2 == 1 { Rational::from_integer(1) - w } else { w };
        let y = if t.j % 2 == 1 { Rational::from_integer(1) - v } else { v };
        count_containing(sub, &SplitPoint { face: colour, x, y }, n - 1, out);
    }
}

/// Geometric tile of an address, checked for admissibility in the subsystem.
pub fn resolve_in(sub: &Subsystem, a: &TileAddress) -> Result<Option<ResolvedTile>> {
    let branch = AffineBranch::new(sub.map(), a)?;
    let mut face = a.face;
    for &(i, j) in &a.digits {
        match sub.id_of(&SubTile::new(face, i, j)) {
            Some(id) => face = sub.colour_of(id),
            None => return Ok(None),
        }
    }
    Ok(Some(branch.tile()))
}

const LEFT: u8 = 1;
const RIGHT: u8 = 2;
const BOTTOM: u8 = 4;
const TOP: u8 = 8;

/// Boolean level matrices: `plain[n]` marks positive entries of Aⁿ and
/// `interior[n]` marks colour/position pairs realized by an n-tile inside the
/// interior of its face.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelPatterns {
    pub plain: Vec<BoolMatrix>,
    pub interior: Vec<BoolMatrix>,
}

/// Runs the side-tracking automaton up to `max_level`. A state is the root
/// face, the colour of the current word and the set of sides of the root face
/// the tile still touches, expressed in the coordinates of the current
/// 0-tile. Index 0 of each vector is the 0-tile level.
pub fn level_patterns(sub: &Subsystem, max_level: usize) -> LevelPatterns {
    let s = sub.map().s();
    // reach[root][face][sides]
    let mut reach = [[[false; 16]; 2]; 2];
    for root in 0..2 {
        reach[root][root][15] = true;
    }
    let mut plain = Vec::with_capacity(max_level + 1);
    let mut interior = Vec::with_capacity(max_level + 1);
    let summarize = |reach: &[[[bool; 16]; 2]; 2]| {
        let mut p = [[false; 2]; 2];
        let mut b = [[false; 2]; 2];
        for root in 0..2 {
            for face in 0..2 {
                p[root][face] = reach[root][face].iter().any(|&x| x);
                b[root][face] = reach[root][face][0];
            }
        }
        (BoolMatrix(p), BoolMatrix(b))
    };
    let (p0, b0) = summarize(&reach);
    plain.push(p0);
    interior.push(b0);
    for _ in 0..max_level {
        let mut next = [[[false; 16]; 2]; 2];
        for root in 0..2 {
            for face in 0..2 {
                for sides in 0..16u8 {
                    if !reach[root][face][sides as usize] {
                        continue;
                    }
                    for &id in sub.in_face(Colour::from_index(face)) {
                        let t = sub.tiles()[id];
                        let new_sides = carry_sides(sides, t.i, t.j, s);
                        next[root][sub.colour_of(id).index()][new_sides as usize] = true;
                    }
                }
            }
        }
        reach = next;
        let (p, b) = summarize(&reach);
        plain.push(p);
        interior.push(b);
    }
    LevelPatterns { plain, interior }
}

fn carry_sides(sides: u8, i: u32, j: u32, s: u32) -> u8 {
    let mut out = 0u8;
    let flip_x = i % 2 == 1;
    let flip_y = j % 2 == 1;
    if sides & LEFT != 0 && i == 0 {
        out |= if flip_x { RIGHT } else { LEFT };
    }
    if sides & RIGHT != 0 && i == s - 1 {
        out |= if flip_x { LEFT } else { RIGHT };
    }
    if sides & BOTTOM != 0 && j == 0 {
        out |= if flip_y { TOP } else { BOTTOM };
    }
    if sides & TOP != 0 && j == s - 1 {
        out |= if flip_y { BOTTOM } else { TOP };
    }
    out
}

/// Irreducibility and primitivity diagnostics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureReport {
    pub max_level: usize,
    pub irreducible: bool,
    pub strongly_irreducible: bool,
    pub primitive: bool,
    pub strongly_primitive: bool,
    /// Smallest n_F such that Aⁿ > 0 entrywise for all n ≥ n_F, when certified.
    pub primitive_witness: Option<usize>,
    /// Same for the interior patterns.
    pub strong_primitive_witness: Option<usize>,
    /// Highest level the automaton was run to (certification may need more
    /// than `max_level`).
    pub levels_examined: usize,
}

pub fn check_structure(sub: &Subsystem, max_level: usize) -> Result<StructureReport> {
    if max_level == 0 {
        return Err(Error::InvalidInput("check_structure needs max_level >= 1".into()));
    }
    let first = level_patterns(sub, max_level + 1);
    let irreducible = (0..2).all(|r| {
        (0..2).all(|c| (1..=max_level).any(|n| first.plain[n].0[r][c]))
    });
    let strongly_irreducible = (0..2).all(|r| {
        (0..2).all(|c| (1..=max_level).any(|n| first.interior[n].0[r][c]))
    });
    let (primitive_witness, l1) = certify(sub, &first, max_level, |p| &p.plain);
    let (strong_primitive_witness, l2) = certify(sub, &first, max_level, |p| &p.interior);
    Ok(StructureReport {
        max_level,
        irreducible,
        strongly_irreducible,
        primitive: primitive_witness.is_some(),
        strongly_primitive: strong_primitive_witness.is_some(),
        primitive_witness,
        strong_primitive_witness,
        levels_examined: l1.max(l2).max(max_level + 1),
    })
}

// All-true patterns at two consecutive levels n*, n*+1 ≤ max_level give
// all-true patterns at every level a·n* + b·(n*+1), which covers every
// n ≥ n*(n*−1). The levels below that bound are checked directly.
fn certify(
    sub: &Subsystem,
    first: &LevelPatterns,
    max_level: usize,
    pick: impl Fn(&LevelPatterns) -> &Vec<BoolMatrix>,
) -> (Option<usize>, usize) {
    let pats = pick(first);
    let star = (1..max_level).find(|&n| pats[n].all() && pats[n + 1].all());
    let Some(star) = star else {
        return (None, max_level + 1);
    };
    let bound = (star * star.saturating_sub(1)).max(star + 1);
    let owned;
    let pats = if bound < pats.len() {
        pats
    } else {
        owned = level_patterns(sub, bound);
        pick(&owned)
    };
    let mut witness = bound;
    while witness > 1 && pats[witness - 1].all() {
        witness -= 1;
    }
    (Some(witness), bound)
}

/// Non-degeneracy and isolated-point diagnostics for the maximal invariant set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitSetReport {
    pub level: usize,
    pub matrix_class: MatrixClass,
    pub degenerate: bool,
    pub every_tile_meets_limitset: bool,
    /// Number of level-n tiles inside each face (row sums of Aⁿ), white first.
    pub per_face_path_count: [String; 2],
    pub isolated_point_risk: bool,
    /// When every tile has exactly one continuation from some level on, the
    /// maximal invariant set has at most this many points.
    pub limit_set_points_at_most: Option<String>,
}

pub fn limit_set_diagnostics(sub: &Subsystem, n: usize) -> Result<LimitSetReport> {
    if n == 0 {
        return Err(Error::InvalidInput("limit_set_diagnostics needs n >= 1".into()));
    }
    let a = sub.tile_matrix();
    let class = a.classify();
    let degenerate = class == MatrixClass::Degenerate;
    // Every word extends forever iff every colour that occurs has a selected
    // tile in the face of that colour.
    let reachable = sub
        .colour_set()
        .iter()
        .all(|&c| !sub.in_face(c).is_empty());
    let every_tile_meets_limitset = !degenerate || reachable;
    let an = a.pow(n as u32);
    let rows = [an.position_sum(Colour::White), an.position_sum(Colour::Black)];
    let two = BigUint::from(2u32);
    let isolated_point_risk = !(every_tile_meets_limitset && rows.iter().all(|r| *r >= two));
    let next = an.mul(&a);
    let limit_set_points_at_most = if every_tile_meets_limitset && next.total() == an.total() {
        Some(an.total().to_string())
    } else {
        None
    };
    Ok(LimitSetReport {
        level: n,
        matrix_class: class,
        degenerate,
        every_tile_meets_limitset,
        per_face_path_count: [rows[0].to_string(), rows[1].to_string()],
        isolated_point_risk,
        limit_set_points_at_most,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitivityReport {
    pub transitive: bool,
    pub mixing: bool,
}

/// Transitivity is irreducibility and mixing is primitivity of the tile data.
pub fn transitivity_report(sub: &Subsystem, max_level: usize) -> Result<TransitivityReport> {
    let r = check_structure(sub, max_level)?;
    Ok(TransitivityReport { transitive: r.irreducible, mixing: r.primitive })
}
