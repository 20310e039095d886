use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tile address in the raw pyramid. Level 0 is the coarsest level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileAddress {
    pub level: u32,
    pub col: u32,
    pub row: u32,
}

impl TileAddress {
    pub fn new(level: u32, col: u32, row: u32) -> Self {
        Self { level, col, row }
    }
}

impl fmt::Display for TileAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(level={}, col={}, row={})", self.level, self.col, self.row)
    }
}

/// Geometry of a square-tiled pyramid with a fixed ×2 scale between levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidGeometry {
    pub base_width: u32,
    pub base_height: u32,
    pub tile_size: u32,
    pub level_count: u32,
}

impl PyramidGeometry {
    /// Geometry following the DeepZoom convention `floor(log2(max(W, H))) + 1` levels.
    pub fn new(base_width: u32, base_height: u32, tile_size: u32) -> Result<Self> {
        if base_width == 0 || base_height == 0 {
            return Err(Error::config("slide dimensions must be positive"));
        }
        if tile_size == 0 {
            return Err(Error::config("tile size must be positive"));
        }
        let max_dim = base_width.max(base_height);
        let level_count = u32::BITS - max_dim.leading_zeros();
        Ok(Self {
            base_width,
            base_height,
            tile_size,
            level_count,
        })
    }

    pub fn finest_level(&self) -> u32 {
        self.level_count - 1
    }

    /// Downsample factor from base pixels to pixels of `level`.
    pub fn scale(&self, level: u32) -> u64 {
        1u64 << (self.finest_level() - level)
    }

    pub fn level_dimensions(&self, level: u32) -> (u32, u32) {
        let shift = self.finest_level() - level;
        (
            ceil_shift(self.base_width, shift),
            ceil_shift(self.base_height, shift),
        )
    }

    /// `(tiles across, tiles down)` at a level.
    pub fn level_tiles(&self, level: u32) -> (u32, u32) {
        let (w, h) = self.level_dimensions(level);
        (w.div_ceil(self.tile_size), h.div_ceil(self.tile_size))
    }

    pub fn contains(&self, addr: TileAddress) -> bool {
        if addr.level >= self.level_count {
            return false;
        }
        let (cols, rows) = self.level_tiles(addr.level);
        addr.col < cols && addr.row < rows
    }

    pub fn check(&self, addr: TileAddress) -> Result<()> {
        if self.contains(addr) {
            Ok(())
        } else {
            Err(Error::AddressOutOfBounds(format!(
                "tile {addr} outside pyramid of {} levels",
                self.level_count
            )))
        }
    }

    /// Pixel extent `(width, height)` of the image content of a tile; edge tiles are narrower.
    pub fn tile_extent(&self, addr: TileAddress) -> (u32, u32) {
        let (w, h) = self.level_dimensions(addr.level);
        let t = self.tile_size;
        (
            (w - addr.col * t).min(t),
            (h - addr.row * t).min(t),
        )
    }

    /// The finest level whose whole image fits inside one tile.
    pub fn coarsest_usable_level(&self) -> u32 {
        (0..self.level_count)
            .rev()
            .find(|&l| {
                let (w, h) = self.level_dimensions(l);
                w.max(h) <= self.tile_size
            })
            .unwrap_or(0)
    }

    pub fn usable_level_count(&self) -> u32 {
        self.level_count - self.coarsest_usable_level()
    }
}

fn ceil_shift(v: u32, shift: u32) -> u32 {
    let v = v as u64;
    (v.div_ceil(1u64 << shift)) as u32
}
