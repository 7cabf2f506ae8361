//! Grayscale prediction strips written as binary PGM (P5).
//!
//! Layout: the top row holds the input frames followed by the true future
//! frames, the bottom row leaves the input columns empty and holds the
//! predicted frames. Frames are separated by 1-pixel lines of value
//! [`SEPARATOR`]. Values in `[0, 1]` map to `round(v * 255)`.

use std::io::Write;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::grid::GridSequence;

pub const SEPARATOR: u8 = 64;
pub const CONTOUR: u8 = 255;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("pgm", m.to_string());
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
        }
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected an 8-bit P5 image"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
        let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
        if pixels.len() != width * height {
            return Err(bad("pixel count does not match header"));
        }
        Ok(Image {
            width,
            height,
            pixels: pixels.to_vec(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm())?;
        Ok(())
    }

    /// Copies a `h×w` block with its top-left corner at `(x0, y0)`.
    fn blit(&mut self, x0: usize, y0: usize, w: usize, block: &[u8]) {
        for (r, row) in block.chunks_exact(w).enumerate() {
            let start = (y0 + r) * self.width + x0;
            self.pixels[start..start + w].copy_from_slice(row);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    /// Channel whose values are drawn.
    pub channel: usize,
    /// Channel whose iso-contour is overlaid, if any.
    pub contour_channel: Option<usize>,
    pub contour_level: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            channel: 0,
            contour_channel: None,
            contour_level: 0.5,
        }
    }
}

pub fn gray(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn frame_values(seq: &GridSequence, t: usize, channel: usize) -> Vec<f32> {
    let c = seq.dims().c;
    seq.frame(t).iter().skip(channel).step_by(c).copied().collect()
}

/// Pixels of the `level` iso-line of a `h×w` field: for every 2×2 cell whose
/// corners straddle the level, the interpolated edge crossings and the
/// midpoint of each crossing pair.
pub fn contour_pixels(values: &[f32], h: usize, w: usize, level: f64) -> Vec<(usize, usize)> {
    let at = |y: usize, x: usize| values[y * w + x] as f64;
    let mut out = Vec::new();
    let mut mark = |y: f64, x: f64| {
        let (py, px) = (y.round() as usize, x.round() as usize);
        if py < h && px < w && !out.contains(&(py, px)) {
            out.push((py, px));
        }
    };
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            // corners clockwise from top-left
            let corners = [(y, x), (y, x + 1), (y + 1, x + 1), (y + 1, x)];
            let vals = corners.map(|(cy, cx)| at(cy, cx));
            let above = vals.map(|v| v >= level);
            if above.iter().all(|&a| a) || above.iter().all(|&a| !a) {
                continue;
            }
            let mut crossings = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if above[a] != above[b] {
                    let f = (level - vals[a]) / (vals[b] - vals[a]);
                    let (ya, xa) = (corners[a].0 as f64, corners[a].1 as f64);
                    let (yb, xb) = (corners[b].0 as f64, corners[b].1 as f64);
                    crossings.push((ya + f * (yb - ya), xa + f * (xb - xa)));
                }
            }
            for &(cy, cx) in &crossings {
                mark(cy, cx);
            }
            for pair in crossings.chunks_exact(2) {
                mark(0.5 * (pair[0].0 + pair[1].0), 0.5 * (pair[0].1 + pair[1].1));
            }
        }
    }
    out
}

fn draw_frame(img: &mut Image, x0: usize, y0: usize, seq: &GridSequence, t: usize, opts: &RenderOptions) {
    let d = seq.dims();
    let block: Vec<u8> = frame_values(seq, t, opts.channel).into_iter().map(gray).collect();
    img.blit(x0, y0, d.w, &block);
    if let Some(cc) = opts.contour_channel {
        for (y, x) in contour_pixels(&frame_values(seq, t, cc), d.h, d.w, opts.contour_level) {
            img.set(x0 + x, y0 + y, CONTOUR);
        }
    }
}

/// Strip of `input` + `truth` over `pred`; width `(T_in + T_out)·W + T_in + T_out − 1`,
/// height `2·H + 1`.
pub fn render_strip(
    input: &GridSequence,
    truth: &GridSequence,
    pred: &GridSequence,
    opts: &RenderOptions,
) -> Result<Image> {
    let (di, dt) = (input.dims(), truth.dims());
    truth.check_same_shape(pred)?;
    if !di.same_grid(&dt) || di.c != dt.c {
        return Err(shape_err!("input {di} and truth {dt} differ in grid or channels"));
    }
    for ch in std::iter::once(opts.channel).chain(opts.contour_channel) {
        if ch >= di.c {
            return Err(shape_err!("channel {ch} out of range for {} channels", di.c));
        }
    }
    let cols = di.t + dt.t;
    let (h, w) = (di.h, di.w);
    let mut img = Image::filled(cols * w + cols - 1, 2 * h + 1, SEPARATOR);
    // empty input slots of the prediction row
    for t in 0..di.t {
        img.blit(t * (w + 1), h + 1, w, &vec![0; h * w]);
        draw_frame(&mut img, t * (w + 1), 0, input, t, opts);
    }
    for t in 0..dt.t {
        let x0 = (di.t + t) * (w + 1);
        draw_frame(&mut img, x0, 0, truth, t, opts);
        draw_frame(&mut img, x0, h + 1, pred, t, opts);
    }
    Ok(img)
}

/// Single-row strip of all frames of one sequence.
pub fn render_sequence(seq: &GridSequence, opts: &RenderOptions) -> Result<Image> {
    let d = seq.dims();
    for ch in std::iter::once(opts.channel).chain(opts.contour_channel) {
        if ch >= d.c {
            return Err(shape_err!("channel {ch} out of range for {} channels", d.c));
        }
    }
    let mut img = Image::filled(d.t * d.w + d.t - 1, d.h, SEPARATOR);
    for t in 0..d.t {
        draw_frame(&mut img, t * (d.w + 1), 0, seq, t, opts);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;

    fn uniform(t: usize, v: f32) -> GridSequence {
        GridSequence::from_data(Dims::new(t, 4, 5, 1), vec![v; t * 20]).unwrap()
    }

    #[test]
    fn uniform_half_is_mid_gray() {
        let opts = RenderOptions::default();
        let img = render_strip(&uniform(2, 0.5), &uniform(3, 0.5), &uniform(3, 0.5), &opts).unwrap();
        assert_eq!(img.width, 5 * 5 + 4);
        assert_eq!(img.height, 9);
        assert_eq!(img.get(0, 0), 128);
        assert_eq!(img.get(28, 8), 128);
        assert_eq!(img.get(5, 0), SEPARATOR);
        assert_eq!(img.get(0, 4), SEPARATOR);
        assert_eq!(img.get(0, 5), 0);
        assert_eq!(Image::from_pgm(&img.to_pgm()).unwrap(), img);
    }

    #[test]
    fn contour_only_where_field_crosses() {
        let opts = RenderOptions {
            contour_channel: Some(0),
            ..RenderOptions::default()
        };
        let z = uniform(1, 0.0);
        let img = render_sequence(&z, &opts).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0));

        // left half 0, right half 1: contour in the column band x = 2..3
        let mut v = vec![0.0; 20];
        for y in 0..4 {
            for x in 3..5 {
                v[y * 5 + x] = 1.0;
            }
        }
        let step = GridSequence::from_data(Dims::new(1, 4, 5, 1), v).unwrap();
        let px = contour_pixels(step.data(), 4, 5, 0.5);
        assert!(!px.is_empty());
        assert!(px.iter().all(|&(_, x)| x == 2 || x == 3), "{px:?}");
        assert_eq!(px.iter().map(|p| p.0).collect::<std::collections::BTreeSet<_>>().len(), 4);
    }

    #[test]
    fn strip_rejects_bad_channel() {
        let opts = RenderOptions {
            channel: 1,
            ..RenderOptions::default()
        };
        assert!(render_strip(&uniform(1, 0.1), &uniform(1, 0.1), &uniform(1, 0.1), &opts).is_err());
        assert!(Image::from_pgm(b"P6\n1 1\n255\n\0").is_err());
    }
}
