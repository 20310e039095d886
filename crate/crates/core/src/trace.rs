//! Per-step JSON-lines trajectory logs and PNG overviews of an episode.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::env::{Action, StepResult};
use crate::error::{Error, Result};
use crate::geometry::{AgentPos, BaseRect};
use crate::pyramid::VirtualSlide;

pub const TRACE_SCHEMA: u32 = 1;
pub const DEFAULT_RENDER_DIM: u32 = 1024;

pub const OUTLINE_COLOR: Rgb<u8> = Rgb([0, 190, 60]);
pub const FINAL_COLOR: Rgb<u8> = Rgb([255, 230, 0]);
const FIRST_COLOR: [f64; 3] = [40.0, 80.0, 255.0];
const LAST_COLOR: [f64; 3] = [230.0, 30.0, 30.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema: u32,
    pub step: u32,
    pub action: Action,
    pub agent_pos: AgentPos,
    pub base_rect: [f64; 4],
    pub reward: f64,
    pub overlap_ratio: f64,
    pub done: bool,
    pub truncated: bool,
    pub wall_time_ms: f64,
}

impl TraceRecord {
    pub fn from_step(action: Action, result: &StepResult, wall_time_ms: f64) -> Self {
        Self {
            schema: TRACE_SCHEMA,
            step: result.info.count,
            action,
            agent_pos: result.info.agent_pos,
            base_rect: result.info.base_rect,
            reward: result.reward,
            overlap_ratio: result.info.overlap_ratio,
            done: result.done,
            truncated: result.truncated,
            wall_time_ms,
        }
    }

    pub fn rect(&self) -> BaseRect {
        let [x0, y0, x1, y1] = self.base_rect;
        BaseRect::new(x0, y0, x1, y1)
    }
}

/// Appends one JSON object per line.
pub struct TraceSink<W: Write> {
    out: W,
    last_step: u32,
    terminal_seen: bool,
}

impl TraceSink<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io_at(path, e))?;
        Ok(Self::new(BufWriter::new(f)))
    }
}

impl<W: Write> TraceSink<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            last_step: 0,
            terminal_seen: false,
        }
    }

    pub fn log_step(&mut self, record: &TraceRecord) -> Result<()> {
        if record.step <= self.last_step {
            return Err(Error::format(format!(
                "trace step {} does not follow step {}",
                record.step, self.last_step
            )));
        }
        if self.terminal_seen {
            return Err(Error::format("trace already holds a terminal record"));
        }
        serde_json::to_writer(&mut self.out, record).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.last_step = record.step;
        self.terminal_seen = record.done || record.truncated;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io_at(path, e))?;
    parse_trace(BufReader::new(f))
}

pub fn parse_trace(reader: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            message: format!("trace record: {e}"),
            line: Some(i as u32 + 1),
        })?;
        if rec.schema != TRACE_SCHEMA {
            return Err(Error::format(format!("unsupported trace schema {}", rec.schema)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Color of the `i`-th of `n` non-final viewport rectangles.
pub fn step_color(i: usize, n: usize) -> Rgb<u8> {
    let t = if n <= 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
    Rgb(std::array::from_fn(|c| {
        (FIRST_COLOR[c] + (LAST_COLOR[c] - FIRST_COLOR[c]) * t).round() as u8
    }))
}

/// Thumbnail with annotation outlines, every visited viewport and the final viewport highlighted.
pub fn render_overview(
    slide: &VirtualSlide,
    annotations: &AnnotationSet,
    trace: &[TraceRecord],
    out_dim: u32,
) -> Result<RgbImage> {
    if trace.is_empty() {
        return Err(Error::config("cannot render an empty trace"));
    }
    let full = BaseRect::full(slide.geometry());
    let mut img = slide.read_region(&full, out_dim)?;
    let sx = img.width() as f64 / full.width();
    let sy = img.height() as f64 / full.height();
    let to_px = |(x, y): (f64, f64)| ((x * sx).floor() as i64, (y * sy).floor() as i64);

    for p in &annotations.polygons {
        let v = p.vertices();
        for i in 0..v.len() {
            let a = to_px(v[i]);
            let b = to_px(v[(i + 1) % v.len()]);
            draw_line(&mut img, a, b, OUTLINE_COLOR);
        }
    }
    let (last, earlier) = trace.split_last().expect("non-empty");
    for (i, rec) in earlier.iter().enumerate() {
        draw_rect(&mut img, &rec.rect(), sx, sy, 0, step_color(i, earlier.len()));
    }
    draw_rect(&mut img, &last.rect(), sx, sy, 1, FINAL_COLOR);
    Ok(img)
}

pub fn render_episode(
    slide: &VirtualSlide,
    annotations: &AnnotationSet,
    trace: &[TraceRecord],
    out_path: impl AsRef<Path>,
    out_dim: u32,
) -> Result<RgbImage> {
    let img = render_overview(slide, annotations, trace, out_dim)?;
    img.save_with_format(out_path.as_ref(), image::ImageFormat::Png)?;
    Ok(img)
}

/// Pixel bounds `(x0, y0, x1, y1)` (inclusive) of a base rectangle in an image scaled by `(sx, sy)`.
pub fn rect_pixels(rect: &BaseRect, sx: f64, sy: f64) -> (i64, i64, i64, i64) {
    let x0 = (rect.x0 * sx).floor() as i64;
    let y0 = (rect.y0 * sy).floor() as i64;
    let x1 = ((rect.x1 * sx).ceil() as i64 - 1).max(x0);
    let y1 = ((rect.y1 * sy).ceil() as i64 - 1).max(y0);
    (x0, y0, x1, y1)
}

fn draw_rect(img: &mut RgbImage, rect: &BaseRect, sx: f64, sy: f64, grow: i64, color: Rgb<u8>) {
    let (x0, y0, x1, y1) = rect_pixels(rect, sx, sy);
    for g in 0..=grow {
        let (ax, ay, bx, by) = (x0 + g, y0 + g, x1 - g, y1 - g);
        if ax > bx || ay > by {
            break;
        }
        draw_line(img, (ax, ay), (bx, ay), color);
        draw_line(img, (bx, ay), (bx, by), color);
        draw_line(img, (bx, by), (ax, by), color);
        draw_line(img, (ax, by), (ax, ay), color);
    }
}

fn draw_line(img: &mut RgbImage, (mut x, mut y): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && x < w && y < h {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DiscreteAction;

    fn record(step: u32, done: bool) -> TraceRecord {
        TraceRecord {
            schema: TRACE_SCHEMA,
            step,
            action: Action::Discrete(DiscreteAction::Stay),
            agent_pos: AgentPos::new(0, 0, 0),
            base_rect: [0.0, 0.0, 128.0, 128.0],
            reward: -0.01,
            overlap_ratio: 0.0,
            done,
            truncated: false,
            wall_time_ms: 0.25,
        }
    }

    #[test]
    fn lines_and_ordering() {
        let mut sink = TraceSink::new(Vec::new());
        sink.log_step(&record(1, false)).unwrap();
        assert!(sink.log_step(&record(1, false)).is_err());
        sink.log_step(&record(2, true)).unwrap();
        assert!(sink.log_step(&record(3, false)).is_err());
        let bytes = sink.into_inner();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("\"step\":1"));
        assert!(lines[1].contains("\"done\":true"));
        let back = parse_trace(text.as_bytes()).unwrap();
        assert_eq!(back, vec![record(1, false), record(2, true)]);
    }

    #[test]
    fn bad_line_reports_position() {
        let text = format!("{}\nnot json\n", serde_json::to_string(&record(1, false)).unwrap());
        assert!(matches!(parse_trace(text.as_bytes()), Err(Error::Format { line: Some(2), .. })));
    }

    #[test]
    fn grading_endpoints() {
        assert_eq!(step_color(0, 5), Rgb([40, 80, 255]));
        assert_eq!(step_color(4, 5), Rgb([230, 30, 30]));
        assert_eq!(step_color(0, 1), Rgb([40, 80, 255]));
    }

    #[test]
    fn empty_trace_rejected() {
        let (slide, ann) = VirtualSlide::generate_synthetic(1, 256, 128, 1).unwrap();
        assert!(matches!(render_overview(&slide, &ann, &[], 64), Err(Error::Config(_))));
    }
}
