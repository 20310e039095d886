//! Viewport transforms and exact viewport/polygon overlap.
//!
//! All overlap arithmetic happens in `f64` base-level pixels.

use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationSet, Polygon};
use crate::error::{Error, Result};
use crate::pyramid::PyramidGeometry;

/// Axis-aligned rectangle in base pixels, half-open in spirit: `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BaseRect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(g: &PyramidGeometry) -> Self {
        Self::new(0.0, 0.0, g.base_width as f64, g.base_height as f64)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Overlapping part, or `None` if it has no area.
    pub fn intersect(&self, other: &BaseRect) -> Option<BaseRect> {
        let r = BaseRect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        );
        (r.x0 < r.x1 && r.y0 < r.y1).then_some(r)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

/// Agent position `[z, x, y]`: index into the selected levels, tile column, tile row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct AgentPos {
    pub z: u32,
    pub x: u32,
    pub y: u32,
}

impl AgentPos {
    pub const fn new(z: u32, x: u32, y: u32) -> Self {
        Self { z, x, y }
    }
}

impl From<[u32; 3]> for AgentPos {
    fn from([z, x, y]: [u32; 3]) -> Self {
        Self { z, x, y }
    }
}

impl From<AgentPos> for [u32; 3] {
    fn from(p: AgentPos) -> Self {
        [p.z, p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoomDirection {
    In,
    Out,
}

/// Which area the intersection is divided by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    #[default]
    Viewport,
    Polygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub if_overlap: bool,
    pub overlap_seg_index: Option<usize>,
    pub overlap_ratio: f64,
}

impl OverlapReport {
    pub const NONE: OverlapReport = OverlapReport {
        if_overlap: false,
        overlap_seg_index: None,
        overlap_ratio: 0.0,
    };
}

fn level_at(selected_levels: &[u32], z: u32) -> Result<u32> {
    selected_levels
        .get(z as usize)
        .copied()
        .ok_or_else(|| Error::AddressOutOfBounds(format!("z={z} beyond {} selected levels", selected_levels.len())))
}

/// Base-pixel rectangle of the tile at `pos`, clipped to the slide.
pub fn viewport_to_base(
    geom: &PyramidGeometry,
    selected_levels: &[u32],
    pos: AgentPos,
) -> Result<BaseRect> {
    let level = level_at(selected_levels, pos.z)?;
    let (cols, rows) = geom.level_tiles(level);
    if pos.x >= cols || pos.y >= rows {
        return Err(Error::AddressOutOfBounds(format!(
            "tile ({}, {}) outside {cols}x{rows} tiles at level {level}",
            pos.x, pos.y
        )));
    }
    let span = (geom.tile_size as u64 * geom.scale(level)) as f64;
    let rect = BaseRect::new(
        pos.x as f64 * span,
        pos.y as f64 * span,
        (pos.x + 1) as f64 * span,
        (pos.y + 1) as f64 * span,
    );
    Ok(rect
        .intersect(&BaseRect::full(geom))
        .expect("in-bounds tile overlaps the slide"))
}

/// Tile `(col, row)` at `level` containing a base-pixel point, clamped to the level's tile grid.
pub fn tile_containing(geom: &PyramidGeometry, level: u32, (x, y): (f64, f64)) -> (u32, u32) {
    let span = (geom.tile_size as u64 * geom.scale(level)) as f64;
    let (cols, rows) = geom.level_tiles(level);
    let pick = |v: f64, n: u32| ((v / span).floor().max(0.0) as u32).min(n - 1);
    (pick(x, cols), pick(y, rows))
}

/// Move one selected level in or out, landing on the tile that contains the current viewport's center.
pub fn reparent(
    geom: &PyramidGeometry,
    selected_levels: &[u32],
    pos: AgentPos,
    direction: ZoomDirection,
) -> Result<AgentPos> {
    let rect = viewport_to_base(geom, selected_levels, pos)?;
    let z = match direction {
        ZoomDirection::In if (pos.z as usize) + 1 < selected_levels.len() => pos.z + 1,
        ZoomDirection::Out if pos.z > 0 => pos.z - 1,
        _ => {
            return Err(Error::IllegalAction(format!(
                "cannot zoom {direction:?} from z={}",
                pos.z
            )))
        }
    };
    let (x, y) = tile_containing(geom, selected_levels[z as usize], rect.center());
    Ok(AgentPos { z, x, y })
}

/// Clip a polygon to a rectangle (four half-planes).
pub fn clip_to_rect(rect: &BaseRect, vertices: &[(f64, f64)]) -> Vec<(f64, f64)> {
    #[derive(Clone, Copy)]
    enum Side {
        Left(f64),
        Right(f64),
        Bottom(f64),
        Top(f64),
    }
    fn inside(side: Side, (x, y): (f64, f64)) -> bool {
        match side {
            Side::Left(v) => x >= v,
            Side::Right(v) => x <= v,
            Side::Bottom(v) => y >= v,
            Side::Top(v) => y <= v,
        }
    }
    fn cross(side: Side, (ax, ay): (f64, f64), (bx, by): (f64, f64)) -> (f64, f64) {
        match side {
            Side::Left(v) | Side::Right(v) => (v, ay + (by - ay) * (v - ax) / (bx - ax)),
            Side::Bottom(v) | Side::Top(v) => (ax + (bx - ax) * (v - ay) / (by - ay), v),
        }
    }
    let mut poly = vertices.to_vec();
    for side in [
        Side::Left(rect.x0),
        Side::Right(rect.x1),
        Side::Bottom(rect.y0),
        Side::Top(rect.y1),
    ] {
        if poly.is_empty() {
            break;
        }
        let input = std::mem::take(&mut poly);
        let mut prev = *input.last().unwrap();
        for &cur in &input {
            match (inside(side, prev), inside(side, cur)) {
                (true, true) => poly.push(cur),
                (true, false) => poly.push(cross(side, prev, cur)),
                (false, true) => {
                    poly.push(cross(side, prev, cur));
                    poly.push(cur);
                }
                (false, false) => {}
            }
            prev = cur;
        }
    }
    poly
}

fn shoelace(v: &[(f64, f64)]) -> f64 {
    crate::annotations::signed_area(v)
}

/// Area of `rect ∩ polygon` under the even-odd fill rule, by horizontal
/// slab decomposition. Handles self-intersecting outlines.
pub fn even_odd_area_in_rect(rect: &BaseRect, vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    let edges: Vec<((f64, f64), (f64, f64))> = (0..n)
        .map(|i| (vertices[i], vertices[(i + 1) % n]))
        .filter(|(a, b)| a.1 != b.1)
        .collect();
    let mut ys: Vec<f64> = vertices.iter().map(|v| v.1).collect();
    ys.push(rect.y0);
    ys.push(rect.y1);
    for i in 0..edges.len() {
        for j in (i + 1)..edges.len() {
            if let Some(y) = crossing_y(edges[i], edges[j]) {
                ys.push(y);
            }
        }
    }
    ys.retain(|&y| y >= rect.y0 && y <= rect.y1);
    ys.sort_by(f64::total_cmp);
    ys.dedup();

    let x_at = |((ax, ay), (bx, by)): ((f64, f64), (f64, f64)), y: f64| ax + (bx - ax) * (y - ay) / (by - ay);
    let mut total = 0.0;
    let mut spans: Vec<(f64, f64, f64)> = Vec::new();
    for w in ys.windows(2) {
        let (ya, yb) = (w[0], w[1]);
        if yb <= ya {
            continue;
        }
        let ym = 0.5 * (ya + yb);
        spans.clear();
        for &e in &edges {
            let (lo, hi) = (e.0 .1.min(e.1 .1), e.0 .1.max(e.1 .1));
            if lo < ym && ym < hi {
                spans.push((x_at(e, ym), x_at(e, ya), x_at(e, yb)));
            }
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in spans.chunks_exact(2) {
            let (l, r) = (pair[0], pair[1]);
            let h = yb - ya;
            total += clamped_linear_integral(r.1, r.2, h, rect.x0, rect.x1)
                - clamped_linear_integral(l.1, l.2, h, rect.x0, rect.x1);
        }
    }
    total.max(0.0)
}

/// y of the proper crossing of two segments, if any.
fn crossing_y(
    (a, b): ((f64, f64), (f64, f64)),
    (c, d): ((f64, f64), (f64, f64)),
) -> Option<f64> {
    let r = (b.0 - a.0, b.1 - a.1);
    let s = (d.0 - c.0, d.1 - c.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let t = ((c.0 - a.0) * s.1 - (c.1 - a.1) * s.0) / denom;
    let u = ((c.0 - a.0) * r.1 - (c.1 - a.1) * r.0) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(a.1 + t * r.1)
}

/// `∫ clamp(f(y), lo, hi) dy` over a slab of height `h`, where `f` is linear from `fa` to `fb`.
fn clamped_linear_integral(fa: f64, fb: f64, h: f64, lo: f64, hi: f64) -> f64 {
    let mut ts = [0.0, 1.0, f64::NAN, f64::NAN];
    if fa != fb {
        for (k, bound) in [lo, hi].into_iter().enumerate() {
            let t = (bound - fa) / (fb - fa);
            if t > 0.0 && t < 1.0 {
                ts[2 + k] = t;
            }
        }
    }
    let mut ts: Vec<f64> = ts.into_iter().filter(|t| !t.is_nan()).collect();
    ts.sort_by(f64::total_cmp);
    let g = |t: f64| (fa + (fb - fa) * t).clamp(lo, hi);
    ts.windows(2)
        .map(|w| (w[1] - w[0]) * h * 0.5 * (g(w[0]) + g(w[1])))
        .sum()
}

/// Exact area of `rect ∩ polygon`.
pub fn rect_polygon_intersection_area(rect: &BaseRect, polygon: &Polygon) -> f64 {
    if rect.intersect(&polygon.bbox()).is_none() {
        return 0.0;
    }
    if polygon.is_self_intersecting() {
        even_odd_area_in_rect(rect, polygon.vertices())
    } else {
        shoelace(&clip_to_rect(rect, polygon.vertices())).abs()
    }
}

/// Filled area of a polygon; even-odd for self-intersecting outlines.
pub fn polygon_fill_area(polygon: &Polygon) -> f64 {
    if polygon.is_self_intersecting() {
        even_odd_area_in_rect(&polygon.bbox(), polygon.vertices())
    } else {
        polygon.area()
    }
}

/// Per-polygon overlap ratio; reports the best polygon, lowest index on ties.
pub fn check_overlap(rect: &BaseRect, annotations: &AnnotationSet, normalize: Normalize) -> OverlapReport {
    let mut best = OverlapReport::NONE;
    for (i, polygon) in annotations.polygons.iter().enumerate() {
        let inter = rect_polygon_intersection_area(rect, polygon);
        if inter <= 0.0 {
            continue;
        }
        let denom = match normalize {
            Normalize::Viewport => rect.area(),
            Normalize::Polygon => polygon_fill_area(polygon),
        };
        let ratio = (inter / denom).clamp(0.0, 1.0);
        if ratio > best.overlap_ratio {
            best = OverlapReport {
                if_overlap: true,
                overlap_seg_index: Some(i),
                overlap_ratio: ratio,
            };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)], "sq", None).unwrap()
    }

    fn geom() -> PyramidGeometry {
        PyramidGeometry::new(4096, 4096, 128).unwrap()
    }

    #[test]
    fn viewport_examples() {
        let g = geom();
        let levels: Vec<u32> = (7..=12).collect();
        assert_eq!(
            viewport_to_base(&g, &levels, AgentPos::new(5, 0, 0)).unwrap(),
            BaseRect::new(0.0, 0.0, 128.0, 128.0)
        );
        assert_eq!(
            viewport_to_base(&g, &levels, AgentPos::new(4, 1, 1)).unwrap(),
            BaseRect::new(256.0, 256.0, 512.0, 512.0)
        );
        assert_eq!(
            viewport_to_base(&g, &levels, AgentPos::new(0, 0, 0)).unwrap(),
            BaseRect::new(0.0, 0.0, 4096.0, 4096.0)
        );
        assert!(matches!(
            viewport_to_base(&g, &levels, AgentPos::new(0, 1, 0)),
            Err(Error::AddressOutOfBounds(_))
        ));
        assert!(viewport_to_base(&g, &levels, AgentPos::new(6, 0, 0)).is_err());
    }

    #[test]
    fn viewport_clipped_at_edge() {
        let g = PyramidGeometry::new(1000, 700, 128).unwrap();
        let levels = [g.finest_level() - 1, g.finest_level()];
        let r = viewport_to_base(&g, &levels, AgentPos::new(0, 3, 2)).unwrap();
        assert_eq!(r, BaseRect::new(768.0, 512.0, 1000.0, 700.0));
    }

    #[test]
    fn zoom_from_coarsest_targets_center() {
        let g = geom();
        let levels = [7, 10, 12];
        let p = reparent(&g, &levels, AgentPos::new(0, 0, 0), ZoomDirection::In).unwrap();
        assert_eq!(p, AgentPos::new(1, 4, 4));
        let r = viewport_to_base(&g, &levels, p).unwrap();
        assert!(r.contains((2048.0, 2048.0)));
        assert!(matches!(
            reparent(&g, &levels, AgentPos::new(0, 0, 0), ZoomDirection::Out),
            Err(Error::IllegalAction(_))
        ));
        assert!(reparent(&g, &levels, AgentPos::new(2, 0, 0), ZoomDirection::In).is_err());
    }

    #[test]
    fn zoom_out_two_raw_levels() {
        let g = geom();
        let levels = [8, 10, 12];
        let p = reparent(&g, &levels, AgentPos::new(1, 3, 5), ZoomDirection::Out).unwrap();
        // center of tile (3,5) at level 10 is ((3.5)*512, (5.5)*512) base; level 8 tiles span 2048
        let center = viewport_to_base(&g, &levels, AgentPos::new(1, 3, 5)).unwrap().center();
        assert_eq!(center, (1792.0, 2816.0));
        assert_eq!(p, AgentPos::new(0, 0, 1));
    }

    #[test]
    fn intersection_examples() {
        let sq = square(0.0, 0.0, 128.0, 128.0);
        let r = BaseRect::new(0.0, 0.0, 128.0, 128.0);
        assert_eq!(rect_polygon_intersection_area(&r, &sq), 16384.0);
        let r = BaseRect::new(64.0, 0.0, 192.0, 128.0);
        assert_eq!(rect_polygon_intersection_area(&r, &sq), 8192.0);
        let r = BaseRect::new(500.0, 500.0, 600.0, 600.0);
        assert_eq!(rect_polygon_intersection_area(&r, &sq), 0.0);
    }

    #[test]
    fn clipping_concave_polygon() {
        // U shape: 30x30 square with a 10x20 notch cut from the top middle
        let u = Polygon::new(
            vec![
                (0.0, 0.0),
                (30.0, 0.0),
                (30.0, 30.0),
                (20.0, 30.0),
                (20.0, 10.0),
                (10.0, 10.0),
                (10.0, 30.0),
                (0.0, 30.0),
            ],
            "u",
            None,
        )
        .unwrap();
        let r = BaseRect::new(5.0, 5.0, 25.0, 40.0);
        // columns 5..10 and 20..25 span 5..30 (25 tall), middle 10..20 spans 5..10
        let expected = 2.0 * 5.0 * 25.0 + 10.0 * 5.0;
        assert!((rect_polygon_intersection_area(&r, &u) - expected).abs() < 1e-9);
        assert!((even_odd_area_in_rect(&r, u.vertices()) - expected).abs() < 1e-9);
    }

    #[test]
    fn bowtie_even_odd() {
        // two triangles meeting at (5,5): areas 25 each
        let bow = Polygon::new(
            vec![(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)],
            "b",
            None,
        );
        assert!(bow.is_err(), "signed area cancels");
        let v = [(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)];
        let whole = BaseRect::new(-1.0, -1.0, 11.0, 11.0);
        assert!((even_odd_area_in_rect(&whole, &v) - 50.0).abs() < 1e-9);
        let left = BaseRect::new(-1.0, -1.0, 5.0, 11.0);
        assert!((even_odd_area_in_rect(&left, &v) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn overlap_report_rules() {
        let big = square(-1000.0, -1000.0, 5000.0, 5000.0);
        let ann = AnnotationSet::new(vec![big], "t");
        let r = BaseRect::new(0.0, 0.0, 128.0, 128.0);
        let rep = check_overlap(&r, &ann, Normalize::Viewport);
        assert_eq!(rep.overlap_ratio, 1.0);
        assert_eq!(rep.overlap_seg_index, Some(0));

        let far = BaseRect::new(9000.0, 9000.0, 9100.0, 9100.0);
        assert_eq!(check_overlap(&far, &ann, Normalize::Viewport), OverlapReport::NONE);

        // each covers 30% of the viewport
        let a = square(0.0, 0.0, 30.0, 100.0);
        let b = square(70.0, 0.0, 100.0, 100.0);
        let ann = AnnotationSet::new(vec![a, b], "tie");
        let r = BaseRect::new(0.0, 0.0, 100.0, 100.0);
        let rep = check_overlap(&r, &ann, Normalize::Viewport);
        assert_eq!(rep.overlap_ratio, 0.3);
        assert_eq!(rep.overlap_seg_index, Some(0));

        let rep = check_overlap(&BaseRect::new(0.0, 0.0, 15.0, 100.0), &ann, Normalize::Polygon);
        assert_eq!(rep.overlap_ratio, 0.5);
    }
}
