//! Procedural slide: hash-based value noise for tissue texture plus axis-aligned
//! elliptical lesions. Pixel generation uses integer arithmetic only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PyramidGeometry, RgbTile, TileAddress, WHITE};
use crate::annotations::{AnnotationSet, Polygon};
use crate::error::{Error, Result};

/// Vertex count of the polygon approximating each lesion outline.
pub const LESION_VERTICES: usize = 64;

/// Axis-aligned ellipse in base pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lesion {
    pub cx: u32,
    pub cy: u32,
    pub rx: u32,
    pub ry: u32,
}

impl Lesion {
    /// Inside test at the center of base pixel `(x, y)`, on doubled coordinates.
    fn contains_pixel(&self, x: u32, y: u32) -> bool {
        let dx = 2 * x as i64 + 1 - 2 * self.cx as i64;
        let dy = 2 * y as i64 + 1 - 2 * self.cy as i64;
        let (a2, b2) = ((self.rx as i128).pow(2), (self.ry as i128).pow(2));
        (dx as i128).pow(2) * b2 + (dy as i128).pow(2) * a2 <= 4 * a2 * b2
    }

    pub fn outline(&self) -> Vec<(f64, f64)> {
        (0..LESION_VERTICES)
            .map(|k| {
                let theta = std::f64::consts::TAU * k as f64 / LESION_VERTICES as f64;
                (
                    self.cx as f64 + self.rx as f64 * theta.cos(),
                    self.cy as f64 + self.ry as f64 * theta.sin(),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextureParams {
    pub glass: [u8; 3],
    pub stroma: [u8; 3],
    pub lesion: [u8; 3],
    pub nucleus: [u8; 3],
    /// Coarse-noise value (0..=255) below which a pixel shows empty glass.
    pub tissue_cutoff: u32,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            glass: [244, 242, 245],
            stroma: [232, 170, 204],
            lesion: [156, 86, 168],
            nucleus: [72, 34, 118],
            tissue_cutoff: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub seed: u64,
    pub base_dim: u32,
    pub tile_size: u32,
    pub lesions: Vec<Lesion>,
    pub texture: TextureParams,
}

impl SyntheticSource {
    pub fn generate(seed: u64, base_dim: u32, tile_size: u32, lesion_count: usize) -> Result<Self> {
        if tile_size == 0 || base_dim < tile_size {
            return Err(Error::config(format!(
                "base_dim {base_dim} must be at least tile_size {tile_size}"
            )));
        }
        if lesion_count == 0 {
            return Err(Error::config("lesion_count must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hi = (4 * tile_size).min(base_dim / 6).max(1);
        let lo = (3 * tile_size / 2).min(hi);
        let margin = tile_size / 2;
        let lesions = (0..lesion_count)
            .map(|_| {
                let rx = rng.random_range(lo..=hi);
                let ry = rng.random_range(lo..=hi);
                let mut center = |r: u32| {
                    let (a, b) = (r + margin, base_dim.saturating_sub(r + margin));
                    if a < b {
                        rng.random_range(a..=b)
                    } else {
                        base_dim / 2
                    }
                };
                let cx = center(rx);
                let cy = center(ry);
                Lesion { cx, cy, rx, ry }
            })
            .collect();
        Ok(Self {
            seed,
            base_dim,
            tile_size,
            lesions,
            texture: TextureParams::default(),
        })
    }

    pub fn geometry(&self) -> PyramidGeometry {
        PyramidGeometry::new(self.base_dim, self.base_dim, self.tile_size)
            .expect("validated at generation")
    }

    pub fn annotations(&self) -> AnnotationSet {
        let polygons = self
            .lesions
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Polygon::new(l.outline(), format!("lesion_{i}"), Some("tumor".to_string()))
                    .expect("ellipse outline is a valid polygon")
            })
            .collect();
        AnnotationSet::new(polygons, "synthetic")
    }

    pub(crate) fn render_base_tile(&self, g: &PyramidGeometry, addr: TileAddress) -> RgbTile {
        let t = g.tile_size;
        let (ew, eh) = g.tile_extent(addr);
        let mut data = vec![WHITE; (t * t * 3) as usize];
        if ew == 0 || eh == 0 {
            return RgbTile::from_bytes(t, data);
        }
        let (x0, y0) = (addr.col * t, addr.row * t);
        let noise = TileNoise::new(self.seed, x0, y0, ew, eh);
        for py in 0..eh {
            let y = y0 + py;
            for px in 0..ew {
                let x = x0 + px;
                let i = ((py * t + px) * 3) as usize;
                data[i..i + 3].copy_from_slice(&self.base_pixel(&noise, x, y));
            }
        }
        RgbTile::from_bytes(t, data)
    }

    fn base_pixel(&self, noise: &TileNoise, x: u32, y: u32) -> [u8; 3] {
        let tex = &self.texture;
        let in_lesion = self.lesions.iter().any(|l| l.contains_pixel(x, y));
        let fine = noise.fine.sample(x, y);
        if in_lesion {
            if fine > 150 {
                return tex.nucleus;
            }
            return shade(tex.lesion, noise.grain.sample(x, y) / 3);
        }
        let coarse = (3 * noise.blob.sample(x, y) + noise.patch.sample(x, y)) / 4;
        if coarse < tex.tissue_cutoff {
            return shade(tex.glass, fine / 32);
        }
        if fine > 224 {
            return tex.nucleus;
        }
        let grain = (noise.grain.sample(x, y) + 2 * noise.fiber.sample(x, y)) / 3;
        shade(tex.stroma, grain / 4)
    }
}

/// The noise fields sampled by `base_pixel`, precomputed over one tile.
struct TileNoise {
    fine: NoiseGrid,
    grain: NoiseGrid,
    fiber: NoiseGrid,
    patch: NoiseGrid,
    blob: NoiseGrid,
}

impl TileNoise {
    fn new(seed: u64, x0: u32, y0: u32, w: u32, h: u32) -> Self {
        let grid = |salt, k| NoiseGrid::new(seed, salt, k, x0, y0, w, h);
        Self {
            fine: grid(2, 2),
            grain: grid(3, 3),
            fiber: grid(4, 4),
            patch: grid(5, 5),
            blob: grid(9, 9),
        }
    }
}

/// Lattice values of one noise field over a pixel window; `sample` equals `value_noise`.
struct NoiseGrid {
    k: u32,
    ix0: u32,
    iy0: u32,
    cols: usize,
    values: Vec<u32>,
}

impl NoiseGrid {
    fn new(seed: u64, salt: u64, k: u32, x0: u32, y0: u32, w: u32, h: u32) -> Self {
        let (ix0, iy0) = (x0 >> k, y0 >> k);
        let cols = (((x0 + w - 1) >> k) - ix0 + 2) as usize;
        let rows = (((y0 + h - 1) >> k) - iy0 + 2) as usize;
        let values = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (c, r)))
            .map(|(c, r)| lattice(seed, salt, ix0 + c as u32, iy0 + r as u32))
            .collect();
        Self {
            k,
            ix0,
            iy0,
            cols,
            values,
        }
    }

    fn sample(&self, x: u32, y: u32) -> u32 {
        let k = self.k;
        let span = 1u32 << k;
        let c = ((x >> k) - self.ix0) as usize;
        let r = ((y >> k) - self.iy0) as usize;
        let (fx, fy) = (x & (span - 1), y & (span - 1));
        let at = r * self.cols + c;
        let (v00, v10) = (self.values[at], self.values[at + 1]);
        let (v01, v11) = (self.values[at + self.cols], self.values[at + self.cols + 1]);
        bilinear([v00, v10, v01, v11], fx, fy, k)
    }
}

fn shade(color: [u8; 3], amount: u32) -> [u8; 3] {
    color.map(|c| (c as u32).saturating_sub(amount) as u8)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, salt: u64, ix: u32, iy: u32) -> u32 {
    let key = seed ^ salt.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ ((ix as u64) << 32 | iy as u64);
    (mix(mix(key) ^ salt) & 0xFF) as u32
}

#[cfg(test)]
/// Bilinear value noise on a lattice of spacing `2^log2_spacing`, in 0..=255.
fn value_noise(seed: u64, salt: u64, x: u32, y: u32, log2_spacing: u32) -> u32 {
    let k = log2_spacing;
    let span = 1u32 << k;
    let (ix, iy) = (x >> k, y >> k);
    let corners = [
        lattice(seed, salt, ix, iy),
        lattice(seed, salt, ix + 1, iy),
        lattice(seed, salt, ix, iy + 1),
        lattice(seed, salt, ix + 1, iy + 1),
    ];
    bilinear(corners, x & (span - 1), y & (span - 1), k)
}

fn bilinear([v00, v10, v01, v11]: [u32; 4], fx: u32, fy: u32, k: u32) -> u32 {
    let span = 1u32 << k;
    let top = v00 * (span - fx) + v10 * fx;
    let bottom = v01 * (span - fx) + v11 * fx;
    (top * (span - fy) + bottom * fy) >> (2 * k)
}
