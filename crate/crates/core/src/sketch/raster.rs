use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::image::{disc_pixels, Image, Rgb};
use crate::error::{Error, Result};
use crate::scalar::round_half_away;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SketchStyle {
    pub start_color: Rgb,
    pub end_color: Rgb,
    pub line_width: u32,
    pub start_marker_radius: u32,
    pub end_marker_radius: u32,
    /// (start, end) marker fill.
    pub marker_colors: (Rgb, Rgb),
}

impl Default for SketchStyle {
    fn default() -> Self {
        Self {
            start_color: Rgb(255, 255, 0),
            end_color: Rgb(64, 32, 0),
            line_width: 2,
            start_marker_radius: 3,
            end_marker_radius: 3,
            marker_colors: (Rgb(0, 220, 255), Rgb(255, 0, 200)),
        }
    }
}

impl SketchStyle {
    pub fn validate(&self) -> Result<()> {
        if self.line_width < 1 || self.start_marker_radius < 1 || self.end_marker_radius < 1 {
            return Err(Error::Config("sketch widths and radii must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ramp color at normalized time `t`.
pub fn color_at(style: &SketchStyle, t: f64) -> Result<Rgb> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("normalized time {t} outside [0, 1]")));
    }
    let lerp = |a: u8, b: u8| {
        let v = a as f64 + (b as f64 - a as f64) * t;
        round_half_away(v).clamp(0.0, 255.0) as u8
    };
    let (s, e) = (style.start_color, style.end_color);
    Ok(Rgb(lerp(s.0, e.0), lerp(s.1, e.1), lerp(s.2, e.2)))
}

/// Pixel sink shared by real images and pixel-set oracles.
pub trait Canvas {
    fn size(&self) -> (u32, u32);
    fn plot(&mut self, x: i64, y: i64, c: Rgb);
}

impl Canvas for Image {
    fn size(&self) -> (u32, u32) {
        Image::size(self)
    }

    fn plot(&mut self, x: i64, y: i64, c: Rgb) {
        self.put(x, y, c);
    }
}

/// Records which in-bounds pixels were written.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PixelSet {
    pub width: u32,
    pub height: u32,
    pub pixels: BTreeSet<(u32, u32)>,
}

impl PixelSet {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: BTreeSet::new(),
        }
    }
}

impl Canvas for PixelSet {
    fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn plot(&mut self, x: i64, y: i64, _c: Rgb) {
        if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
            self.pixels.insert((x as u32, y as u32));
        }
    }
}

/// Liang-Barsky clip of a segment to an axis-aligned box.
fn clip_segment(p0: [f64; 2], p1: [f64; 2], lo: f64, hi_x: f64, hi_y: f64) -> Option<([f64; 2], [f64; 2])> {
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let checks = [
        (-d[0], p0[0] - lo),
        (d[0], hi_x - p0[0]),
        (-d[1], p0[1] - lo),
        (d[1], hi_y - p0[1]),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| {
        (
            [p0[0] + t0 * d[0], p0[1] + t0 * d[1]],
            [p0[0] + t1 * d[0], p0[1] + t1 * d[1]],
        )
    })
}

fn stamp(canvas: &mut impl Canvas, x: i64, y: i64, width: u32, c: Rgb) {
    let lo = -((width as i64 - 1) / 2);
    let hi = width as i64 / 2;
    for dy in lo..=hi {
        for dx in lo..=hi {
            canvas.plot(x + dx, y + dy, c);
        }
    }
}

/// Bresenham line between rounded endpoints with a square brush.
pub fn draw_line(canvas: &mut impl Canvas, p0: [f64; 2], p1: [f64; 2], width: u32, c: Rgb) {
    if !(p0.iter().chain(&p1).all(|v| v.is_finite())) {
        return;
    }
    let (w, h) = canvas.size();
    let margin = width as f64 + 2.0;
    let (hi_x, hi_y) = (w as f64 + margin, h as f64 + margin);
    let inside = |p: [f64; 2]| p[0] >= -margin && p[0] <= hi_x && p[1] >= -margin && p[1] <= hi_y;
    let (a, b) = if inside(p0) && inside(p1) {
        (p0, p1)
    } else {
        match clip_segment(p0, p1, -margin, hi_x, hi_y) {
            Some(s) => s,
            None => return,
        }
    };
    let (mut x0, mut y0) = (round_half_away(a[0]) as i64, round_half_away(a[1]) as i64);
    let (x1, y1) = (round_half_away(b[0]) as i64, round_half_away(b[1]) as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        stamp(canvas, x0, y0, width, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Draws the color-graded connecting lines only. Segment `k` of `n` uses the
/// ramp at `k / (n - 1)`; segments touching a culled point are skipped.
pub fn rasterize_lines(canvas: &mut impl Canvas, points: &[Option<[f64; 2]>], style: &SketchStyle) -> Result<()> {
    let n_seg = points.len().saturating_sub(1);
    for k in 0..n_seg {
        if let (Some(a), Some(b)) = (points[k], points[k + 1]) {
            let t = if n_seg <= 1 { 0.0 } else { k as f64 / (n_seg - 1) as f64 };
            draw_line(canvas, a, b, style.line_width, color_at(style, t)?);
        }
    }
    Ok(())
}

/// Lines plus start/end circle markers on the first and last visible points.
pub fn rasterize_polyline(canvas: &mut impl Canvas, points: &[Option<[f64; 2]>], style: &SketchStyle) -> Result<()> {
    rasterize_lines(canvas, points, style)?;
    let first = points.iter().flatten().next();
    let last = points.iter().flatten().last();
    let (w, h) = canvas.size();
    if let Some(p) = first {
        let c = style.marker_colors.0;
        disc_pixels(w, h, round_half_away(p[0]), round_half_away(p[1]), style.start_marker_radius as f64, |x, y| {
            canvas.plot(x, y, c)
        });
    }
    if let Some(p) = last {
        let c = style.marker_colors.1;
        disc_pixels(w, h, round_half_away(p[0]), round_half_away(p[1]), style.end_marker_radius as f64, |x, y| {
            canvas.plot(x, y, c)
        });
    }
    Ok(())
}
