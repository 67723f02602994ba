//! Training-time geometric augmentation of shape and plate patches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imgops::{image_dims, warp_affine, Affine, Rect};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::patch::{PlatePatch, ShapePatch, SHAPE_SIZE};

pub const SHAPE_MAX_CROP: u32 = 8;
pub const SHAPE_SCALE: (f64, f64) = (0.8, 1.2);
pub const SHAPE_SHEAR_DEG: f64 = 8.0;

pub const PLATE_SCALE: (f64, f64) = (0.8, 1.2);
pub const PLATE_TRANSLATE_FRAC: f64 = 0.1;
pub const PLATE_ROTATION_DEG: f64 = 5.0;
pub const PLATE_SHEAR_DEG: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeAugParams {
    /// Pixels removed from the crop window before resizing back.
    pub crop: u32,
    /// Window offset, each component in `0..=crop`.
    pub offset: (u32, u32),
    pub scale: f64,
    pub shear_deg: f64,
}

impl ShapeAugParams {
    pub const IDENTITY: ShapeAugParams = ShapeAugParams {
        crop: 0,
        offset: (0, 0),
        scale: 1.0,
        shear_deg: 0.0,
    };

    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let crop = rng.gen_range(0..=SHAPE_MAX_CROP);
        Self {
            crop,
            offset: (rng.gen_range(0..=crop), rng.gen_range(0..=crop)),
            scale: rng.gen_range(SHAPE_SCALE.0..=SHAPE_SCALE.1),
            shear_deg: rng.gen_range(-SHAPE_SHEAR_DEG..=SHAPE_SHEAR_DEG),
        }
    }

    /// Source-to-destination map on a `size x size` patch.
    pub fn affine(&self, size: usize) -> Affine {
        let n = size as f64;
        let zoom = n / (n - self.crop as f64);
        let crop = Affine::scale(zoom, zoom).then(&Affine::translate(
            -(self.offset.0 as f64),
            -(self.offset.1 as f64),
        ));
        let c = (n - 1.0) / 2.0;
        let geo = Affine::shear_degrees(self.shear_deg)
            .then(&Affine::scale(self.scale, self.scale))
            .about(c, c);
        geo.then(&crop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateAugParams {
    pub scale: f64,
    /// Fractions of width and height.
    pub translate: (f64, f64),
    pub rotation_deg: f64,
    pub shear_deg: f64,
}

impl PlateAugParams {
    pub const IDENTITY: PlateAugParams = PlateAugParams {
        scale: 1.0,
        translate: (0.0, 0.0),
        rotation_deg: 0.0,
        shear_deg: 0.0,
    };

    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        Self {
            scale: rng.gen_range(PLATE_SCALE.0..=PLATE_SCALE.1),
            translate: (
                rng.gen_range(-PLATE_TRANSLATE_FRAC..=PLATE_TRANSLATE_FRAC),
                rng.gen_range(-PLATE_TRANSLATE_FRAC..=PLATE_TRANSLATE_FRAC),
            ),
            rotation_deg: rng.gen_range(-PLATE_ROTATION_DEG..=PLATE_ROTATION_DEG),
            shear_deg: rng.gen_range(-PLATE_SHEAR_DEG..=PLATE_SHEAR_DEG),
        }
    }

    pub fn affine(&self, width: usize, height: usize) -> Affine {
        let (w, h) = (width as f64, height as f64);
        let geo = Affine::rotate_degrees(self.rotation_deg)
            .then(&Affine::shear_degrees(self.shear_deg))
            .then(&Affine::scale(self.scale, self.scale))
            .about((w - 1.0) / 2.0, (h - 1.0) / 2.0);
        Affine::translate(self.translate.0 * w, self.translate.1 * h).then(&geo)
    }
}

pub fn apply_shape_params<T: Scalar>(
    patch: &ShapePatch<T>,
    params: &ShapeAugParams,
) -> Result<ShapePatch<T>> {
    let pixels = warp_affine(&patch.pixels, &params.affine(SHAPE_SIZE))?;
    ShapePatch::new(pixels, patch.source.clone())
}

pub fn augment_shape<T: Scalar, R: Rng>(
    patch: &ShapePatch<T>,
    rng: &mut R,
) -> Result<ShapePatch<T>> {
    apply_shape_params(patch, &ShapeAugParams::sample(rng))
}

pub fn apply_plate_params<T: Scalar>(
    pixels: &Tensor<T>,
    params: &PlateAugParams,
) -> Result<Tensor<T>> {
    let (w, h) = image_dims(pixels)?;
    warp_affine(pixels, &params.affine(w, h))
}

pub fn augment_plate<T: Scalar, R: Rng>(
    patch: &PlatePatch<T>,
    rng: &mut R,
) -> Result<PlatePatch<T>> {
    let pixels = apply_plate_params(&patch.pixels, &PlateAugParams::sample(rng))?;
    PlatePatch::new(pixels, patch.source.clone(), patch.legible)
}

/// Maps a box through `a` and returns the bounding box of its corners.
pub fn transform_box(a: &Affine, r: &Rect) -> Rect {
    let corners = [
        a.apply(r.x, r.y),
        a.apply(r.right(), r.y),
        a.apply(r.x, r.bottom()),
        a.apply(r.right(), r.bottom()),
    ];
    let x0 = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let x1 = corners
        .iter()
        .map(|c| c.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let y0 = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let y1 = corners
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}
