//! Lexicographic indexing of Dᵐ.
//!
//! Words T₁…Tₘ are ordered lexicographically with the canonical order on
//! selected tiles. Words with a common first letter are contiguous, and so
//! are words with a common prefix, which gives two recursions used across
//! the crate:
//!
//! * prepending: `index_m(U·X) = start_m(U) + index_{m−1}(X) − offset_{m−1}(colour U)`
//! * appending: the children X·V of X form one block, in the order of X.

use crate::combinatorics::Subsystem;
use crate::error::{Error, Result};
use crate::geometry::Colour;

/// Largest number of tiles any single level may hold when materialized.
pub const MATERIALIZE_LIMIT: u64 = 50_000_000;

#[derive(Clone, Debug)]
pub struct TileIndex {
    depth: usize,
    count: Vec<[u64; 2]>,
    offset: Vec<[u64; 2]>,
    start: Vec<Vec<u64>>,
    colours: Vec<Vec<u8>>,
    tile_colour: Vec<u8>,
    in_face: [usize; 2],
}

impl TileIndex {
    /// Builds the index for levels 0..=depth and materializes the colour of
    /// every tile of those levels.
    pub fn new(sub: &Subsystem, depth: usize) -> Result<Self> {
        let n_tiles = sub.len();
        let tile_colour: Vec<u8> = (0..n_tiles).map(|id| sub.colour_of(id).index() as u8).collect();
        let mut count = vec![[1u64, 1u64]];
        let mut offset = vec![[0u64, 1u64]];
        let mut start = vec![Vec::new()];
        for m in 1..=depth {
            let prev = count[m - 1];
            let mut c = [0u64; 2];
            let mut st = Vec::with_capacity(n_tiles);
            let mut acc = 0u64;
            for id in 0..n_tiles {
                st.push(acc);
                let add = prev[tile_colour[id] as usize];
                acc = acc.checked_add(add).ok_or_else(overflow)?;
                c[sub.position_of(id).index()] += add;
            }
            if acc > MATERIALIZE_LIMIT {
                return Err(Error::BudgetExceeded { needed: acc as f64, limit: MATERIALIZE_LIMIT as f64 });
            }
            count.push(c);
            offset.push([0, c[0]]);
            start.push(st);
        }
        let mut colours: Vec<Vec<u8>> = vec![vec![0, 1]];
        for m in 1..=depth {
            let prev = &colours[m - 1];
            let total = (count[m][0] + count[m][1]) as usize;
            let mut cur = Vec::with_capacity(total);
            for &c in &tile_colour {
                let lo = offset[m - 1][c as usize] as usize;
                let hi = lo + count[m - 1][c as usize] as usize;
                cur.extend_from_slice(&prev[lo..hi]);
            }
            colours.push(cur);
        }
        let in_face = [sub.in_face(Colour::White).len(), sub.in_face(Colour::Black).len()];
        Ok(TileIndex { depth, count, offset, start, colours, tile_colour, in_face })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of m-tiles.
    pub fn len(&self, m: usize) -> usize {
        (self.count[m][0] + self.count[m][1]) as usize
    }

    /// Number of m-tiles inside the given face.
    pub fn count(&self, m: usize, face: Colour) -> u64 {
        self.count[m][face.index()]
    }

    /// Face holding the m-tile with the given index.
    pub fn position(&self, m: usize, idx: usize) -> Colour {
        if (idx as u64) < self.count[m][0] {
            Colour::White
        } else {
            Colour::Black
        }
    }

    pub fn colour(&self, m: usize, idx: usize) -> Colour {
        Colour::from_index(self.colours[m][idx] as usize)
    }

    pub fn colours(&self, m: usize) -> &[u8] {
        &self.colours[m]
    }

    /// Number of selected tiles (letters).
    pub fn tiles(&self) -> usize {
        self.tile_colour.len()
    }

    pub fn tile_colour(&self, tile: usize) -> Colour {
        Colour::from_index(self.tile_colour[tile] as usize)
    }

    pub fn index0(face: Colour) -> u64 {
        face.index() as u64
    }

    /// index_m(U·X) from index_{m−1}(X).
    #[inline]
    pub fn prepend(&self, m: usize, tile: usize, prev: u64) -> u64 {
        self.start[m][tile] + prev - self.offset[m - 1][self.tile_colour[tile] as usize]
    }

    /// First index and length of the block of m-tiles starting with `tile`.
    pub fn first_letter_block(&self, m: usize, tile: usize) -> (usize, usize) {
        let c = self.tile_colour[tile] as usize;
        (self.start[m][tile] as usize, self.count[m - 1][c] as usize)
    }

    /// First index of the (m−1)-tiles lying in the given face.
    pub fn face_offset(&self, m: usize, face: Colour) -> usize {
        self.offset[m][face.index()] as usize
    }

    /// Number of children X·V of an m-tile X of the given colour.
    pub fn children_of_colour(&self, c: Colour) -> usize {
        self.in_face[c.index()]
    }

    /// Letters (selected tile ids) of the m-tile with the given index.
    pub fn word(&self, m: usize, idx: u64) -> Vec<usize> {
        let mut out = Vec::with_capacity(m);
        let mut idx = idx;
        for l in (1..=m).rev() {
            let st = &self.start[l];
            let tile = st.partition_point(|&s| s <= idx) - 1;
            let c = self.tile_colour[tile] as usize;
            idx = idx - st[tile] + self.offset[l - 1][c];
            out.push(tile);
        }
        out
    }

    /// Index of an admissible word of length at most the index depth.
    pub fn index_of(&self, word: &[usize]) -> u64 {
        let m = word.len();
        if m == 0 {
            return 0;
        }
        let mut idx = u64::from(self.tile_colour[word[m - 1]]);
        for (l, &tile) in word.iter().rev().enumerate() {
            idx = self.prepend(l + 1, tile, idx);
        }
        idx
    }

    /// Sums a level-(m+1) vector over the children of each m-tile.
    pub fn coarse_grain(&self, m: usize, fine: &[f64]) -> Vec<f64> {
        let cols = &self.colours[m];
        let mut out = Vec::with_capacity(cols.len());
        let mut pos = 0usize;
        for &c in cols {
            let k = self.in_face[c as usize];
            out.push(fine[pos..pos + k].iter().sum());
            pos += k;
        }
        debug_assert_eq!(pos, fine.len());
        out
    }
}

fn overflow() -> Error {
    Error::BudgetExceeded { needed: f64::INFINITY, limit: MATERIALIZE_LIMIT as f64 }
}
