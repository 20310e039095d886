//! Virtual slides: a uniform ×2 tile pyramid read through one of two backends.
//!
//! Level indices grow with magnification: level 0 is the coarsest level and
//! `level_count - 1` holds base (full-resolution) pixels. Every tile handed
//! out is `tile_size × tile_size` RGB; edge tiles are padded with white.

mod dzi;
mod geometry;
mod synthetic;

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use image::RgbImage;
use lru::LruCache;
use sha2::{Digest, Sha256};

pub use dzi::{write_dzi, DziDescriptor, DziSource, TileFormat};
pub use geometry::{PyramidGeometry, TileAddress};
pub use synthetic::{Lesion, SyntheticSource, TextureParams};

use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::geometry::BaseRect;

pub const WHITE: u8 = 255;

/// Default number of tiles held by a slide's cache.
pub const DEFAULT_CACHE_TILES: usize = 1024;

/// A square RGB tile, row-major, 3 bytes per pixel. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbTile {
    size: u32,
    data: Arc<[u8]>,
}

impl RgbTile {
    pub fn from_bytes(size: u32, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), (size * size * 3) as usize);
        Self {
            size,
            data: data.into(),
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.size + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Where the pixels of a slide come from.
#[derive(Debug)]
pub enum SlideSource {
    Dzi(DziSource),
    Synthetic(SyntheticSource),
}

#[derive(Debug)]
pub struct VirtualSlide {
    geometry: PyramidGeometry,
    source: SlideSource,
    cache: Option<Mutex<LruCache<TileAddress, RgbTile>>>,
    /// Synthetic tiles two or more levels above the base, kept for the slide's lifetime.
    /// They cost 4^k base renders each and total about 1/12 of the base image.
    pooled: Mutex<HashMap<TileAddress, RgbTile>>,
    identity: OnceLock<String>,
}

impl VirtualSlide {
    pub fn new(geometry: PyramidGeometry, source: SlideSource) -> Self {
        Self {
            geometry,
            source,
            cache: None,
            pooled: Mutex::new(HashMap::new()),
            identity: OnceLock::new(),
        }
        .with_cache_capacity(DEFAULT_CACHE_TILES)
    }

    /// Replace the LRU tile cache; a capacity of zero disables it.
    pub fn with_cache_capacity(mut self, tiles: usize) -> Self {
        self.cache = NonZeroUsize::new(tiles).map(|n| Mutex::new(LruCache::new(n)));
        self
    }

    /// Open a DeepZoom descriptor (`<name>.dzi`) with its `<name>_files/` directory.
    pub fn open_dzi(descriptor_path: impl AsRef<Path>) -> Result<Self> {
        let source = DziSource::open(descriptor_path.as_ref())?;
        let geometry = source.geometry();
        Ok(Self::new(geometry, SlideSource::Dzi(source)))
    }

    /// Procedural slide with planted elliptical lesions; returns the lesion outlines as ground truth.
    pub fn generate_synthetic(
        seed: u64,
        base_dim: u32,
        tile_size: u32,
        lesion_count: usize,
    ) -> Result<(Self, AnnotationSet)> {
        let source = SyntheticSource::generate(seed, base_dim, tile_size, lesion_count)?;
        let annotations = source.annotations();
        let geometry = source.geometry();
        Ok((
            Self::new(geometry, SlideSource::Synthetic(source)),
            annotations,
        ))
    }

    pub fn geometry(&self) -> &PyramidGeometry {
        &self.geometry
    }

    pub fn source(&self) -> &SlideSource {
        &self.source
    }

    pub fn tile_size(&self) -> u32 {
        self.geometry.tile_size
    }

    pub fn read_tile(&self, addr: TileAddress) -> Result<RgbTile> {
        self.geometry.check(addr)?;
        if let Some(cache) = &self.cache {
            if let Some(tile) = cache.lock().unwrap().get(&addr) {
                return Ok(tile.clone());
            }
        }
        let retained = matches!(self.source, SlideSource::Synthetic(_))
            && addr.level + 2 <= self.geometry.finest_level();
        if retained {
            if let Some(tile) = self.pooled.lock().unwrap().get(&addr) {
                return Ok(tile.clone());
            }
        }
        let tile = match &self.source {
            SlideSource::Dzi(dzi) => dzi.load_tile(&self.geometry, addr)?,
            SlideSource::Synthetic(syn) => {
                if addr.level == self.geometry.finest_level() {
                    syn.render_base_tile(&self.geometry, addr)
                } else {
                    let children = child_addresses(&self.geometry, addr)
                        .map(|c| c.map(|c| self.read_tile(c)).transpose());
                    let [a, b, c, d] = children;
                    pool_children(&self.geometry, addr, [a?, b?, c?, d?])
                }
            }
        };
        if retained {
            self.pooled.lock().unwrap().insert(addr, tile.clone());
            return Ok(tile);
        }
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().put(addr, tile.clone());
        }
        Ok(tile)
    }

    /// Copy a `width × height` window of level pixels starting at `(x0, y0)`.
    /// Pixels outside the level image are white.
    pub fn read_window(
        &self,
        level: u32,
        x0: i64,
        y0: i64,
        width: u32,
        height: u32,
    ) -> Result<Vec<u8>> {
        if level >= self.geometry.level_count {
            return Err(Error::AddressOutOfBounds(format!("level {level}")));
        }
        let mut out = vec![WHITE; (width as usize) * (height as usize) * 3];
        let (lw, lh) = self.geometry.level_dimensions(level);
        let t = self.geometry.tile_size as i64;
        let cx0 = x0.max(0);
        let cy0 = y0.max(0);
        let cx1 = (x0 + width as i64).min(lw as i64);
        let cy1 = (y0 + height as i64).min(lh as i64);
        if cx0 >= cx1 || cy0 >= cy1 {
            return Ok(out);
        }
        for row in (cy0 / t)..=((cy1 - 1) / t) {
            for col in (cx0 / t)..=((cx1 - 1) / t) {
                let tile = self.read_tile(TileAddress::new(level, col as u32, row as u32))?;
                let tx0 = (col * t).max(cx0);
                let tx1 = ((col + 1) * t).min(cx1);
                let span = ((tx1 - tx0) * 3) as usize;
                for y in (row * t).max(cy0)..((row + 1) * t).min(cy1) {
                    let src = (((y - row * t) * t + (tx0 - col * t)) * 3) as usize;
                    let dst = (((y - y0) * width as i64 + (tx0 - x0)) * 3) as usize;
                    out[dst..dst + span].copy_from_slice(&tile.bytes()[src..src + span]);
                }
            }
        }
        Ok(out)
    }

    /// Downsampled view of a base-coordinate rectangle whose longer side is `out_dim` pixels.
    ///
    /// Reads the coarsest level that still resolves the rectangle with at
    /// least `out_dim` pixels, then box-filters down to the output size.
    pub fn read_region(&self, rect: &BaseRect, out_dim: u32) -> Result<RgbImage> {
        if out_dim == 0 {
            return Err(Error::config("out_dim must be at least 1"));
        }
        let bounds = BaseRect::full(&self.geometry);
        let rect = rect
            .intersect(&bounds)
            .ok_or_else(|| Error::config(format!("degenerate region {rect:?}")))?;
        let g = &self.geometry;
        let mut chosen = None;
        for level in 0..g.level_count {
            let window = level_window(g, level, &rect);
            let (_, _, w, h) = window;
            if w.max(h) >= out_dim || level == g.finest_level() {
                chosen = Some((level, window));
                break;
            }
        }
        let (level, (px0, py0, w, h)) = chosen.expect("pyramid has at least one level");
        let src = self.read_window(level, px0, py0, w, h)?;
        let (ow, oh) = if w >= h {
            (out_dim, ((out_dim as u64 * h as u64 + w as u64 / 2) / w as u64).max(1) as u32)
        } else {
            (((out_dim as u64 * w as u64 + h as u64 / 2) / h as u64).max(1) as u32, out_dim)
        };
        let data = box_filter(&src, w, h, ow, oh);
        Ok(RgbImage::from_raw(ow, oh, data).expect("buffer sized for image"))
    }

    /// Content hash identifying the slide: geometry plus every tile of the coarsest usable level.
    pub fn identity_hash(&self) -> Result<String> {
        if let Some(h) = self.identity.get() {
            return Ok(h.clone());
        }
        let g = &self.geometry;
        let mut hasher = Sha256::new();
        hasher.update(b"histogym-slide-v1");
        for v in [g.base_width, g.base_height, g.tile_size, g.level_count] {
            hasher.update(v.to_le_bytes());
        }
        let level = g.coarsest_usable_level();
        let (cols, rows) = g.level_tiles(level);
        for row in 0..rows {
            for col in 0..cols {
                hasher.update(self.read_tile(TileAddress::new(level, col, row))?.bytes());
            }
        }
        let hex = hex_digest(hasher.finalize().as_slice());
        Ok(self.identity.get_or_init(|| hex).clone())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Level pixel window `(x0, y0, w, h)` covering a base rectangle, clipped to the level image.
fn level_window(g: &PyramidGeometry, level: u32, rect: &BaseRect) -> (i64, i64, u32, u32) {
    let s = g.scale(level) as f64;
    let (lw, lh) = g.level_dimensions(level);
    let x0 = (rect.x0 / s).floor().max(0.0) as i64;
    let y0 = (rect.y0 / s).floor().max(0.0) as i64;
    let x1 = ((rect.x1 / s).ceil() as i64).min(lw as i64).max(x0 + 1);
    let y1 = ((rect.y1 / s).ceil() as i64).min(lh as i64).max(y0 + 1);
    (x0, y0, (x1 - x0) as u32, (y1 - y0) as u32)
}

/// Area-average resample; each output pixel averages an integer box of source pixels.
pub(crate) fn box_filter(src: &[u8], sw: u32, sh: u32, ow: u32, oh: u32) -> Vec<u8> {
    if sw == ow && sh == oh {
        return src.to_vec();
    }
    let span = |i: u32, s: u32, o: u32| {
        let a = (i as u64 * s as u64 / o as u64) as u32;
        let b = (((i + 1) as u64 * s as u64 / o as u64) as u32).max(a + 1).min(s);
        (a.min(s - 1), b)
    };
    let mut out = Vec::with_capacity((ow * oh * 3) as usize);
    for oy in 0..oh {
        let (y0, y1) = span(oy, sh, oh);
        for ox in 0..ow {
            let (x0, x1) = span(ox, sw, ow);
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = ((y * sw + x) * 3) as usize;
                    for c in 0..3 {
                        sum[c] += src[i + c] as u64;
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as u64;
            for s in sum {
                out.push(((s + n / 2) / n) as u8);
            }
        }
    }
    out
}

/// The up-to-four tiles one level finer that cover `addr`, in (top-left, top-right, bottom-left, bottom-right) order.
fn child_addresses(g: &PyramidGeometry, addr: TileAddress) -> [Option<TileAddress>; 4] {
    let level = addr.level + 1;
    let mut out = [None; 4];
    for (i, (dc, dr)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        let child = TileAddress::new(level, addr.col * 2 + dc, addr.row * 2 + dr);
        if g.contains(child) {
            out[i] = Some(child);
        }
    }
    out
}

/// Build a tile by 2×2 mean pooling of its children, counting only pixels inside the finer level image.
fn pool_children(
    g: &PyramidGeometry,
    addr: TileAddress,
    children: [Option<RgbTile>; 4],
) -> RgbTile {
    let t = g.tile_size;
    let (fine_w, fine_h) = g.level_dimensions(addr.level + 1);
    let (ew, eh) = g.tile_extent(addr);
    let mut data = vec![WHITE; (t * t * 3) as usize];
    for py in 0..eh {
        for px in 0..ew {
            let mut sum = [0u32; 3];
            let mut n = 0u32;
            for dy in 0..2 {
                for dx in 0..2 {
                    // fine pixel in absolute level coordinates
                    let fx = (addr.col * t + px) * 2 + dx;
                    let fy = (addr.row * t + py) * 2 + dy;
                    if fx >= fine_w || fy >= fine_h {
                        continue;
                    }
                    let quadrant = (((fy / t) % 2) * 2 + (fx / t) % 2) as usize;
                    let child = children[quadrant]
                        .as_ref()
                        .expect("child tile exists for in-bounds pixel");
                    let p = child.pixel(fx % t, fy % t);
                    for c in 0..3 {
                        sum[c] += p[c] as u32;
                    }
                    n += 1;
                }
            }
            let i = ((py * t + px) * 3) as usize;
            for c in 0..3 {
                data[i + c] = ((sum[c] + n / 2) / n) as u8;
            }
        }
    }
    RgbTile::from_bytes(t, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slide() -> VirtualSlide {
        VirtualSlide::generate_synthetic(42, 1024, 128, 1).unwrap().0
    }

    #[test]
    fn out_of_bounds_tile() {
        let s = slide();
        let err = s.read_tile(TileAddress::new(10, 8, 0)).unwrap_err();
        assert!(matches!(err, Error::AddressOutOfBounds(_)));
        assert!(s.read_tile(TileAddress::new(10, 7, 7)).is_ok());
    }

    #[test]
    fn window_matches_tile() {
        let s = slide();
        let addr = TileAddress::new(10, 3, 2);
        let tile = s.read_tile(addr).unwrap();
        let win = s.read_window(10, 3 * 128, 2 * 128, 128, 128).unwrap();
        assert_eq!(win, tile.bytes());
    }

    #[test]
    fn window_straddling_tiles_and_outside() {
        let s = slide();
        let win = s.read_window(10, 1000, -10, 40, 20).unwrap();
        // columns 1024.. are outside the image
        let px = |x: usize, y: usize| &win[(y * 40 + x) * 3..(y * 40 + x) * 3 + 3];
        assert_eq!(px(30, 15), &[255, 255, 255]);
        assert_eq!(px(5, 5), &[255, 255, 255]);
        let t = s.read_tile(TileAddress::new(10, 7, 0)).unwrap();
        assert_eq!(px(5, 15), &t.pixel(1000 - 896 + 5, 5));
    }

    #[test]
    fn degenerate_region_rejected() {
        let s = slide();
        let r = BaseRect::new(10.0, 10.0, 10.0, 20.0);
        assert!(matches!(s.read_region(&r, 16), Err(Error::Config(_))));
        assert!(matches!(
            s.read_region(&BaseRect::new(0.0, 0.0, 64.0, 64.0), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn box_filter_identity_and_mean() {
        let src: Vec<u8> = (0..4 * 4 * 3).map(|i| i as u8).collect();
        assert_eq!(box_filter(&src, 4, 4, 4, 4), src);
        let out = box_filter(&src, 4, 4, 1, 1);
        let mean = |c: usize| {
            let s: u32 = (0..16).map(|p| src[p * 3 + c] as u32).sum();
            ((s + 8) / 16) as u8
        };
        assert_eq!(out, vec![mean(0), mean(1), mean(2)]);
    }

    #[test]
    fn uncached_reads_are_identical() {
        let (s, _) = VirtualSlide::generate_synthetic(3, 512, 64, 1).unwrap();
        let s = s.with_cache_capacity(0);
        let addr = TileAddress::new(8, 1, 1);
        assert_eq!(s.read_tile(addr).unwrap(), s.read_tile(addr).unwrap());
    }
}
