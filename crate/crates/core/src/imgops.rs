//! Pixel-level operations on `[3, H, W]` float images: cropping with
//! bilinear resampling, affine warps and conversion to and from 8-bit RGB.

use image::RgbImage;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn area(&self) -> f64 {
        self.width.max(0.0) * self.height.max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width > 0.0 && self.height > 0.0)
    }

    pub fn inside(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height
    }

    /// Intersection with `[0, width] x [0, height]`.
    pub fn clip(&self, width: f64, height: f64) -> Rect {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = self.right().clamp(0.0, width);
        let y1 = self.bottom().clamp(0.0, height);
        Rect::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let ix = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let iy = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// 2-D affine map `(x, y) -> (a x + b y + c, d x + e y + f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub m: [f64; 6],
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    pub fn translate(tx: f64, ty: f64) -> Self {
        Affine {
            m: [1.0, 0.0, tx, 0.0, 1.0, ty],
        }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Affine {
            m: [sx, 0.0, 0.0, 0.0, sy, 0.0],
        }
    }

    pub fn rotate_degrees(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Affine {
            m: [c, -s, 0.0, s, c, 0.0],
        }
    }

    /// Horizontal shear: `x' = x + tan(angle) * y`.
    pub fn shear_degrees(deg: f64) -> Self {
        Affine {
            m: [1.0, deg.to_radians().tan(), 0.0, 0.0, 1.0, 0.0],
        }
    }

    /// `self` applied after `first`.
    pub fn then(&self, first: &Affine) -> Affine {
        let [a, b, c, d, e, f] = self.m;
        let [a2, b2, c2, d2, e2, f2] = first.m;
        Affine {
            m: [
                a * a2 + b * d2,
                a * b2 + b * e2,
                a * c2 + b * f2 + c,
                d * a2 + e * d2,
                d * b2 + e * e2,
                d * c2 + e * f2 + f,
            ],
        }
    }

    /// Same map expressed about the point `(cx, cy)`.
    pub fn about(&self, cx: f64, cy: f64) -> Affine {
        Affine::translate(cx, cy).then(&self.then(&Affine::translate(-cx, -cy)))
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.m;
        (a * x + b * y + c, d * x + e * y + f)
    }

    pub fn inverse(&self) -> Option<Affine> {
        let [a, b, c, d, e, f] = self.m;
        let det = a * e - b * d;
        if det.abs() < 1e-12 {
            return None;
        }
        let ia = e / det;
        let ib = -b / det;
        let id = -d / det;
        let ie = a / det;
        Some(Affine {
            m: [ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)],
        })
    }

    pub fn is_identity(&self) -> bool {
        *self == Affine::IDENTITY
    }
}

/// Samples a `[C, H, W]` plane at fractional coordinates, replicating the border.
#[inline]
fn bilinear<T: Scalar>(plane: &[T], w: usize, h: usize, x: f64, y: f64) -> T {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx: usize, yy: usize| plane[yy * w + xx].as_f64();
    if fx == 0.0 && fy == 0.0 {
        return plane[y0 * w + x0];
    }
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    T::lit(top * (1.0 - fy) + bottom * fy)
}

pub fn image_dims<T: Scalar>(img: &Tensor<T>) -> Result<(usize, usize)> {
    match img.shape() {
        [3, h, w] if *h > 0 && *w > 0 => Ok((*w, *h)),
        other => Err(Error::shape("[3, H, W]", format!("{other:?}"))),
    }
}

/// Crops `rect` from an 8-bit frame and resamples it to `out_w x out_h`
/// with bilinear interpolation, scaling values to `[0, 1]`.
pub fn crop_resize<T: Scalar>(
    frame: &RgbImage,
    rect: Rect,
    out_w: usize,
    out_h: usize,
) -> Result<Tensor<T>> {
    if rect.is_degenerate() {
        return Err(Error::Region(format!("zero-area rectangle {rect:?}")));
    }
    let (fw, fh) = (frame.width() as usize, frame.height() as usize);
    let mut planes = vec![vec![0f64; fw * fh]; 3];
    for (x, y, px) in frame.enumerate_pixels() {
        for c in 0..3 {
            planes[c][y as usize * fw + x as usize] = px[c] as f64 / 255.0;
        }
    }
    let mut out = Vec::with_capacity(3 * out_w * out_h);
    let sx = rect.width / out_w as f64;
    let sy = rect.height / out_h as f64;
    for plane in &planes {
        for oy in 0..out_h {
            let y = rect.y + (oy as f64 + 0.5) * sy - 0.5;
            for ox in 0..out_w {
                let x = rect.x + (ox as f64 + 0.5) * sx - 0.5;
                out.push(T::lit(bilinear(plane, fw, fh, x, y)));
            }
        }
    }
    Tensor::from_vec(&[3, out_h, out_w], out)
}

/// Resamples a float image to a new size (pixel-center aligned bilinear).
pub fn resize<T: Scalar>(img: &Tensor<T>, out_w: usize, out_h: usize) -> Result<Tensor<T>> {
    let (w, h) = image_dims(img)?;
    if (w, h) == (out_w, out_h) {
        return Ok(img.clone());
    }
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = Vec::with_capacity(3 * out_w * out_h);
    for plane in img.data().chunks(w * h) {
        for oy in 0..out_h {
            let y = (oy as f64 + 0.5) * sy - 0.5;
            for ox in 0..out_w {
                let x = (ox as f64 + 0.5) * sx - 0.5;
                out.push(bilinear(plane, w, h, x, y));
            }
        }
    }
    Tensor::from_vec(&[3, out_h, out_w], out)
}

/// Warps `img` by `forward` (source -> destination), keeping the size.
/// Destination pixels are pulled through the inverse map with bilinear
/// sampling and border replication.
pub fn warp_affine<T: Scalar>(img: &Tensor<T>, forward: &Affine) -> Result<Tensor<T>> {
    let (w, h) = image_dims(img)?;
    if forward.is_identity() {
        return Ok(img.clone());
    }
    let inv = forward
        .inverse()
        .ok_or_else(|| Error::InvalidArgument("singular affine transform".into()))?;
    let mut out = Vec::with_capacity(img.len());
    for plane in img.data().chunks(w * h) {
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                out.push(bilinear(plane, w, h, sx, sy));
            }
        }
    }
    Tensor::from_vec(&[3, h, w], out)
}

pub fn to_rgb8<T: Scalar>(img: &Tensor<T>) -> Result<RgbImage> {
    let (w, h) = image_dims(img)?;
    let d = img.data();
    let hw = w * h;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let q = |v: T| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([q(d[i]), q(d[hw + i]), q(d[2 * hw + i])])
    }))
}

pub fn from_rgb8<T: Scalar>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![T::zero(); 3 * w * h];
    for (x, y, px) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * w * h + i] = T::lit(px[c] as f64 / 255.0);
        }
    }
    Tensor::from_vec(&[3, h, w], data).unwrap()
}

pub fn load_rgb8(path: &std::path::Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}
