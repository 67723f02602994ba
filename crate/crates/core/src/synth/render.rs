//! Rasterization of car rears and plates.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::font::{ink, GLYPH_HEIGHT, GLYPH_WIDTH};

/// Native plate texture size; characters are drawn at twice the font size.
pub const PLATE_TEX_W: usize = 92;
pub const PLATE_TEX_H: usize = 28;
const GLYPH_SCALE: usize = 2;
const CHAR_PITCH: usize = 12;
const CHAR_LEFT: usize = 5;
const CHAR_TOP: usize = 7;

/// Native-texture box `(x, y, w, h)` of character slot `i`.
pub fn char_box(i: usize) -> (f64, f64, f64, f64) {
    (
        (CHAR_LEFT + CHAR_PITCH * i) as f64,
        CHAR_TOP as f64,
        (GLYPH_WIDTH * GLYPH_SCALE) as f64,
        (GLYPH_HEIGHT * GLYPH_SCALE) as f64,
    )
}

/// Floating-point RGB canvas, values on the 0..255 scale.
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    data: Vec<[f32; 3]>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, fill: [f32; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f32; 3]) {
        self.data[y * self.width + x] = c;
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    fn rows(&self, y0: f64, y1: f64) -> std::ops::Range<usize> {
        let lo = (y0 - 0.5).ceil().max(0.0) as usize;
        let hi = ((y1 - 0.5).ceil().max(0.0) as usize).min(self.height);
        lo..hi.max(lo)
    }

    fn cols(&self, x0: f64, x1: f64) -> std::ops::Range<usize> {
        let lo = (x0 - 0.5).ceil().max(0.0) as usize;
        let hi = ((x1 - 0.5).ceil().max(0.0) as usize).min(self.width);
        lo..hi.max(lo)
    }

    /// Fills pixels whose centers lie in `[x0, x1) x [y0, y1)`.
    pub fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: [f32; 3]) {
        for y in self.rows(y0, y1) {
            for x in self.cols(x0, x1) {
                self.set(x, y, c);
            }
        }
    }

    /// Horizontal trapezoid centered at `cx`: width `w_top` at `y0`,
    /// `w_bottom` at `y1`.
    pub fn trapezoid(&mut self, cx: f64, y0: f64, y1: f64, w_top: f64, w_bottom: f64, c: [f32; 3]) {
        for y in self.rows(y0, y1) {
            let t = ((y as f64 + 0.5) - y0) / (y1 - y0);
            let half = (w_top + (w_bottom - w_top) * t) / 2.0;
            for x in self.cols(cx - half, cx + half) {
                self.set(x, y, c);
            }
        }
    }

    pub fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, c: [f32; 3]) {
        for y in self.rows(cy - ry, cy + ry) {
            for x in self.cols(cx - rx, cx + rx) {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.set(x, y, c);
                }
            }
        }
    }

    /// Bilinear sample at continuous position `(x, y)` in pixel units.
    pub fn sample(&self, x: f64, y: f64) -> [f32; 3] {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (ax, ay) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
        let mut out = [0f32; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let top = self.get(x0, y0)[k] * (1.0 - ax) + self.get(x1, y0)[k] * ax;
            let bot = self.get(x0, y1)[k] * (1.0 - ax) + self.get(x1, y1)[k] * ax;
            *o = top * (1.0 - ay) + bot * ay;
        }
        out
    }

    /// Draws `src` resized into the integer box at `(x, y)` of size `w x h`.
    pub fn paste_resized(&mut self, src: &Canvas, x: i64, y: i64, w: usize, h: usize) {
        for j in 0..h {
            let ty = y + j as i64;
            if ty < 0 || ty >= self.height as i64 {
                continue;
            }
            for i in 0..w {
                let tx = x + i as i64;
                if tx < 0 || tx >= self.width as i64 {
                    continue;
                }
                let sx = (i as f64 + 0.5) * src.width as f64 / w as f64;
                let sy = (j as f64 + 0.5) * src.height as f64 / h as f64;
                self.set(tx as usize, ty as usize, src.sample(sx, sy));
            }
        }
    }

    /// Applies a brightness gain and uniform noise of amplitude `noise`,
    /// then quantizes.
    pub fn finish<R: Rng>(&self, gain: f32, noise: f32, rng: &mut R) -> RgbImage {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in self.data.iter().enumerate() {
            let mut out = [0u8; 3];
            for k in 0..3 {
                let n = if noise > 0.0 {
                    rng.gen_range(-noise..=noise)
                } else {
                    0.0
                };
                out[k] = (px[k] * gain + n).round().clamp(0.0, 255.0) as u8;
            }
            img.put_pixel((i % self.width) as u32, (i / self.width) as u32, Rgb(out));
        }
        img
    }
}

/// Parameters of a rendered car rear, in pixels at unit scale, relative to
/// the plate center (y grows downward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub body_color: [u8; 3],
    pub body_width: f64,
    /// Distance from plate center up to the trunk line.
    pub trunk_height: f64,
    /// Distance from plate center down to the bottom of the bumper.
    pub bumper_drop: f64,
    pub window_height: f64,
    pub window_top_ratio: f64,
    pub window_bottom_ratio: f64,
    pub roof_height: f64,
    pub light_width: f64,
    pub light_height: f64,
    /// 0: rectangles, 1: ellipses, 2: full-width bar.
    pub light_style: u8,
    pub light_color: [u8; 3],
    /// Horizontal offset of the body center from the plate center.
    pub body_offset: f64,
    pub wheel_width: f64,
}

const PALETTE: [[u8; 3]; 12] = [
    [232, 232, 230],
    [186, 188, 192],
    [40, 40, 44],
    [168, 32, 30],
    [38, 68, 150],
    [24, 36, 80],
    [40, 112, 62],
    [218, 186, 42],
    [118, 118, 124],
    [108, 70, 40],
    [206, 190, 160],
    [222, 110, 32],
];

impl ShapeParams {
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let base = PALETTE[rng.gen_range(0..PALETTE.len())];
        let jitter = |v: u8, rng: &mut R| (v as i32 + rng.gen_range(-18..=18)).clamp(0, 255) as u8;
        let body_color = [
            jitter(base[0], rng),
            jitter(base[1], rng),
            jitter(base[2], rng),
        ];
        let lights = [[200u8, 24, 24], [230, 90, 20], [160, 20, 60]];
        Self {
            body_color,
            body_width: rng.gen_range(230.0..330.0),
            trunk_height: rng.gen_range(45.0..80.0),
            bumper_drop: rng.gen_range(24.0..44.0),
            window_height: rng.gen_range(34.0..62.0),
            window_top_ratio: rng.gen_range(0.45..0.7),
            window_bottom_ratio: rng.gen_range(0.7..0.9),
            roof_height: rng.gen_range(6.0..20.0),
            light_width: rng.gen_range(24.0..56.0),
            light_height: rng.gen_range(12.0..30.0),
            light_style: rng.gen_range(0..3),
            light_color: lights[rng.gen_range(0..lights.len())],
            body_offset: rng.gen_range(-14.0..14.0),
            wheel_width: rng.gen_range(26.0..40.0),
        }
    }

    pub fn color_name(&self) -> &'static str {
        let [r, g, b] = self.body_color.map(|v| v as i32);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        if max - min < 30 {
            return if max > 200 {
                "white"
            } else if max > 150 {
                "silver"
            } else if max > 80 {
                "gray"
            } else {
                "black"
            };
        }
        if r >= g && r >= b {
            if g > 150 {
                "yellow"
            } else if g > 90 {
                "orange"
            } else if g > 60 {
                "brown"
            } else {
                "red"
            }
        } else if g >= b {
            "green"
        } else {
            "blue"
        }
    }
}

fn shade(c: [u8; 3], f: f32) -> [f32; 3] {
    c.map(|v| (v as f32 * f).min(255.0))
}

/// Draws the car with its plate centered at `(px, py)` at scale `s`.
pub fn draw_car(canvas: &mut Canvas, p: &ShapeParams, px: f64, py: f64, s: f64) {
    let cx = px + p.body_offset * s;
    let half = p.body_width * s / 2.0;
    let top = py - p.trunk_height * s;
    let bottom = py + p.bumper_drop * s;
    let dark = [22.0, 22.0, 24.0];

    // wheels
    let ww = p.wheel_width * s;
    canvas.rect(
        cx - half + 6.0 * s,
        bottom - 4.0 * s,
        cx - half + 6.0 * s + ww,
        bottom + 14.0 * s,
        dark,
    );
    canvas.rect(
        cx + half - 6.0 * s - ww,
        bottom - 4.0 * s,
        cx + half - 6.0 * s,
        bottom + 14.0 * s,
        dark,
    );

    // cabin: roof band then rear window
    let wtop = top - p.window_height * s;
    let roof_top = wtop - p.roof_height * s;
    let w_top = p.body_width * p.window_top_ratio * s;
    let w_bottom = p.body_width * p.window_bottom_ratio * s;
    canvas.trapezoid(
        cx,
        roof_top,
        top,
        w_top + 8.0 * s,
        w_bottom + 12.0 * s,
        shade(p.body_color, 0.92),
    );
    canvas.trapezoid(cx, wtop, top, w_top, w_bottom, [48.0, 58.0, 70.0]);

    // body
    canvas.rect(cx - half, top, cx + half, bottom, shade(p.body_color, 1.0));
    canvas.rect(
        cx - half,
        top,
        cx + half,
        top + 3.0 * s,
        shade(p.body_color, 1.12),
    );

    // tail lights
    let light = shade(p.light_color, 1.0);
    let ly = top + 8.0 * s;
    let (lw, lh) = (p.light_width * s, p.light_height * s);
    match p.light_style {
        0 => {
            canvas.rect(
                cx - half + 4.0 * s,
                ly,
                cx - half + 4.0 * s + lw,
                ly + lh,
                light,
            );
            canvas.rect(
                cx + half - 4.0 * s - lw,
                ly,
                cx + half - 4.0 * s,
                ly + lh,
                light,
            );
        }
        1 => {
            canvas.ellipse(
                cx - half + 4.0 * s + lw / 2.0,
                ly + lh / 2.0,
                lw / 2.0,
                lh / 2.0,
                light,
            );
            canvas.ellipse(
                cx + half - 4.0 * s - lw / 2.0,
                ly + lh / 2.0,
                lw / 2.0,
                lh / 2.0,
                light,
            );
        }
        _ => {
            canvas.rect(
                cx - half + 4.0 * s,
                ly,
                cx + half - 4.0 * s,
                ly + lh * 0.6,
                light,
            );
        }
    }

    // bumper
    canvas.rect(
        cx - half - 2.0 * s,
        py + 18.0 * s,
        cx + half + 2.0 * s,
        bottom,
        shade(p.body_color, 0.55),
    );
}

/// Native-resolution plate texture. `text` is drawn left to right from
/// slot 0; an illegible plate passes an empty string.
pub fn plate_texture<R: Rng>(text: &str, rng: &mut R) -> Canvas {
    let bg = rng.gen_range(195.0..235.0f32);
    let tint = rng.gen_range(-8.0..8.0f32);
    let mut c = Canvas::new(PLATE_TEX_W, PLATE_TEX_H, [bg, bg, bg + tint]);
    for y in 0..PLATE_TEX_H {
        for x in 0..PLATE_TEX_W {
            let v = bg + rng.gen_range(-6.0..6.0f32);
            c.set(x, y, [v, v, v + tint]);
        }
    }
    let border = [60.0, 60.0, 64.0];
    c.rect(0.0, 0.0, PLATE_TEX_W as f64, 1.0, border);
    c.rect(
        0.0,
        (PLATE_TEX_H - 1) as f64,
        PLATE_TEX_W as f64,
        PLATE_TEX_H as f64,
        border,
    );
    c.rect(0.0, 0.0, 1.0, PLATE_TEX_H as f64, border);
    c.rect(
        (PLATE_TEX_W - 1) as f64,
        0.0,
        PLATE_TEX_W as f64,
        PLATE_TEX_H as f64,
        border,
    );
    let ink_level = rng.gen_range(15.0..45.0f32);
    for (i, ch) in text.chars().enumerate() {
        let (x0, y0, _, _) = char_box(i);
        for gy in 0..GLYPH_HEIGHT {
            for gx in 0..GLYPH_WIDTH {
                if ink(ch, gx, gy) {
                    let x = x0 + (gx * GLYPH_SCALE) as f64;
                    let y = y0 + (gy * GLYPH_SCALE) as f64;
                    c.rect(
                        x,
                        y,
                        x + GLYPH_SCALE as f64,
                        y + GLYPH_SCALE as f64,
                        [ink_level; 3],
                    );
                }
            }
        }
    }
    c
}
