//! ASAP / CAMELYON style annotation XML.
//!
//! Coordinates are base-level (finest) slide pixels. Only `Polygon` and
//! `Spline` annotations are ingested; a spline's control points are taken
//! as polygon vertices.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BaseRect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
    pub label: String,
    pub group: Option<String>,
    self_intersecting: bool,
}

impl Polygon {
    /// Fails on fewer than three vertices or zero signed area.
    pub fn new(
        vertices: Vec<(f64, f64)>,
        label: impl Into<String>,
        group: Option<String>,
    ) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::format(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::format("polygon vertex is not finite"));
        }
        if signed_area(&vertices) == 0.0 {
            return Err(Error::format("polygon has zero area"));
        }
        let self_intersecting = has_self_intersection(&vertices);
        Ok(Self {
            vertices,
            label: label.into(),
            group,
            self_intersecting,
        })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn is_self_intersecting(&self) -> bool {
        self.self_intersecting
    }

    pub fn bbox(&self) -> BaseRect {
        let mut r = BaseRect {
            x0: f64::INFINITY,
            y0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for &(x, y) in &self.vertices {
            r.x0 = r.x0.min(x);
            r.y0 = r.y0.min(y);
            r.x1 = r.x1.max(x);
            r.y1 = r.y1.max(y);
        }
        r
    }

    /// `|shoelace| / 2`.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> (f64, f64) {
        let (x0, y0) = self.vertices[0];
        let mut a2 = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        for (i, &(xa, ya)) in self.vertices.iter().enumerate() {
            let (xb, yb) = self.vertices[(i + 1) % self.vertices.len()];
            let (xa, ya, xb, yb) = (xa - x0, ya - y0, xb - x0, yb - y0);
            let cross = xa * yb - xb * ya;
            a2 += cross;
            cx += (xa + xb) * cross;
            cy += (ya + yb) * cross;
        }
        (x0 + cx / (3.0 * a2), y0 + cy / (3.0 * a2))
    }
}

pub fn signed_area(vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (xa, ya) = vertices[i];
        let (xb, yb) = vertices[(i + 1) % n];
        acc += xa * yb - xb * ya;
    }
    acc / 2.0
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

pub(crate) fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn has_self_intersection(v: &[(f64, f64)]) -> bool {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue; // adjacent through the closing edge
            }
            if segments_intersect(a, b, v[j], v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarningKind {
    TooFewVertices(usize),
    ZeroArea,
    UnsupportedType(String),
    SelfIntersecting,
}

/// A non-fatal problem noticed while parsing one `<Annotation>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// Position of the annotation among all `<Annotation>` elements in the document.
    pub annotation: usize,
    pub name: String,
    pub line: u32,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub polygons: Vec<Polygon>,
    pub source: String,
    #[serde(default)]
    pub warnings: Vec<ParseWarning>,
}

impl AnnotationSet {
    pub fn new(polygons: Vec<Polygon>, source: impl Into<String>) -> Self {
        Self {
            polygons,
            source: source.into(),
            warnings: Vec::new(),
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), "empty")
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let mut set = Self::parse_str(&text)?;
        set.source = path.display().to_string();
        Ok(set)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let doc = roxmltree::Document::parse(text).map_err(|e| Error::Format {
            message: format!("annotation XML: {e}"),
            line: Some(e.pos().row),
        })?;
        let line_of = |node: roxmltree::Node| doc.text_pos_at(node.range().start).row;
        let mut polygons = Vec::new();
        let mut warnings = Vec::new();
        let annotations = doc
            .descendants()
            .filter(|n| n.is_element() && n.tag_name().name() == "Annotation");
        for (index, ann) in annotations.enumerate() {
            let name = ann.attribute("Name").unwrap_or_default().to_string();
            let line = line_of(ann);
            let mut warn = |kind| {
                log::warn!("annotation {index} ('{name}', line {line}): {kind:?}");
                warnings.push(ParseWarning {
                    annotation: index,
                    name: name.clone(),
                    line,
                    kind,
                });
            };
            let kind = ann.attribute("Type").unwrap_or("Polygon");
            if !matches!(kind, "Polygon" | "Spline") {
                warn(WarningKind::UnsupportedType(kind.to_string()));
                continue;
            }
            let mut coords = Vec::new();
            let coordinate_nodes = ann
                .children()
                .filter(|n| n.is_element() && n.tag_name().name() == "Coordinates")
                .flat_map(|c| c.children())
                .filter(|n| n.is_element() && n.tag_name().name() == "Coordinate");
            for (doc_index, c) in coordinate_nodes.enumerate() {
                let num = |attr: &str| -> Result<f64> {
                    let raw = c.attribute(attr).ok_or_else(|| Error::Format {
                        message: format!("Coordinate lacks attribute {attr}"),
                        line: Some(line_of(c)),
                    })?;
                    parse_decimal(raw).ok_or_else(|| Error::Format {
                        message: format!("Coordinate {attr}='{raw}' is not a number"),
                        line: Some(line_of(c)),
                    })
                };
                let order = match c.attribute("Order") {
                    Some(_) => num("Order")?,
                    None => doc_index as f64,
                };
                coords.push((order, num("X")?, num("Y")?));
            }
            coords.sort_by(|a, b| a.0.total_cmp(&b.0));
            let vertices: Vec<(f64, f64)> = coords.into_iter().map(|(_, x, y)| (x, y)).collect();
            if vertices.len() < 3 {
                warn(WarningKind::TooFewVertices(vertices.len()));
                continue;
            }
            if signed_area(&vertices) == 0.0 {
                warn(WarningKind::ZeroArea);
                continue;
            }
            let group = ann
                .attribute("PartOfGroup")
                .filter(|g| !g.is_empty() && *g != "None")
                .map(str::to_string);
            let polygon = Polygon::new(vertices, name.clone(), group)?;
            if polygon.is_self_intersecting() {
                warn(WarningKind::SelfIntersecting);
            }
            polygons.push(polygon);
        }
        Ok(Self {
            polygons,
            source: "inline".into(),
            warnings,
        })
    }

    /// Serialize as ASAP XML. Coordinates use shortest round-trip decimal form.
    pub fn to_asap_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\"?>\n<ASAP_Annotations>\n  <Annotations>\n");
        for p in &self.polygons {
            let _ = writeln!(
                out,
                "    <Annotation Name=\"{}\" Type=\"Polygon\" PartOfGroup=\"{}\" Color=\"#F4FA58\">",
                escape(&p.label),
                escape(p.group.as_deref().unwrap_or("None"))
            );
            out.push_str("      <Coordinates>\n");
            for (i, (x, y)) in p.vertices.iter().enumerate() {
                let _ = writeln!(out, "        <Coordinate Order=\"{i}\" X=\"{x}\" Y=\"{y}\" />");
            }
            out.push_str("      </Coordinates>\n    </Annotation>\n");
        }
        out.push_str("  </Annotations>\n  <AnnotationGroups>\n");
        let mut groups: Vec<&str> = self.polygons.iter().filter_map(|p| p.group.as_deref()).collect();
        groups.sort_unstable();
        groups.dedup();
        for g in groups {
            let _ = writeln!(
                out,
                "    <Group Name=\"{}\" PartOfGroup=\"None\" Color=\"#64FE2E\">\n      <Attributes />\n    </Group>",
                escape(g)
            );
        }
        out.push_str("  </AnnotationGroups>\n</ASAP_Annotations>\n");
        out
    }
}

/// Accepts `.` or a lone `,` as the decimal separator, and exponents.
fn parse_decimal(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    let v = match raw.parse::<f64>() {
        Ok(v) => v,
        Err(_) if raw.matches(',').count() == 1 && !raw.contains('.') => {
            raw.replace(',', ".").parse().ok()?
        }
        Err(_) => return None,
    };
    v.is_finite().then_some(v)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Parse an annotation file.
pub fn parse_annotation_xml(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    AnnotationSet::from_path(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq() -> Polygon {
        Polygon::new(
            vec![(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)],
            "sq",
            None,
        )
        .unwrap()
    }

    #[test]
    fn bbox_and_area() {
        let s = sq();
        assert_eq!(s.bbox(), BaseRect::new(0.0, 0.0, 100.0, 100.0));
        assert_eq!(s.area(), 10000.0);
        let tri = Polygon::new(vec![(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], "t", None).unwrap();
        assert_eq!(tri.bbox(), BaseRect::new(0.0, 0.0, 10.0, 10.0));
        let unit = Polygon::new(vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], "u", None).unwrap();
        assert_eq!(unit.area(), 0.5);
        assert_eq!(s.centroid(), (50.0, 50.0));
    }

    #[test]
    fn invalid_polygons() {
        assert!(Polygon::new(vec![(0.0, 0.0), (1.0, 1.0)], "", None).is_err());
        assert!(Polygon::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], "", None).is_err());
    }

    #[test]
    fn bowtie_flagged() {
        let bow = Polygon::new(
            vec![(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)],
            "bow",
            None,
        );
        // symmetric bowtie has zero signed area
        assert!(bow.is_err());
        let bow = Polygon::new(
            vec![(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 20.0)],
            "bow",
            None,
        )
        .unwrap();
        assert!(bow.is_self_intersecting());
        assert!(!sq().is_self_intersecting());
    }

    #[test]
    fn malformed_xml_has_line() {
        let err = AnnotationSet::parse_str("<ASAP_Annotations>\n<Annotations>\n<Annotation").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(_), .. }), "{err}");
    }

    #[test]
    fn bad_number_is_error() {
        let xml = r#"<ASAP_Annotations><Annotations><Annotation Name="a" Type="Polygon">
            <Coordinates><Coordinate Order="0" X="abc" Y="1"/></Coordinates>
            </Annotation></Annotations></ASAP_Annotations>"#;
        assert!(matches!(
            AnnotationSet::parse_str(xml),
            Err(Error::Format { line: Some(2), .. })
        ));
    }

    #[test]
    fn unsupported_type_skipped() {
        let xml = r#"<ASAP_Annotations><Annotations>
            <Annotation Name="d" Type="Dot"><Coordinates><Coordinate Order="0" X="1" Y="1"/></Coordinates></Annotation>
            </Annotations></ASAP_Annotations>"#;
        let set = AnnotationSet::parse_str(xml).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.warnings[0].kind, WarningKind::UnsupportedType("Dot".into()));
    }

    #[test]
    fn decimal_forms() {
        assert_eq!(parse_decimal("12.5"), Some(12.5));
        assert_eq!(parse_decimal(" 12,5 "), Some(12.5));
        assert_eq!(parse_decimal("5.7142e+04"), Some(57142.0));
        assert_eq!(parse_decimal("1,000.5"), None);
        assert_eq!(parse_decimal("inf"), None);
    }
}
