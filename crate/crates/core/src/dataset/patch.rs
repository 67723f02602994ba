//! Shape and plate patches cut from frames.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::{crop_resize, image_dims, Rect};
use crate::ocr::net::{PLATE_HEIGHT, PLATE_WIDTH};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::annotation::VehicleAnnotation;

pub const SHAPE_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchSource {
    pub vehicle_id: String,
    pub camera_id: u8,
    pub frame_index: u32,
}

/// `64 x 64` RGB vehicle-rear crop, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapePatch<T> {
    pub pixels: Tensor<T>,
    pub source: PatchSource,
}

/// `352 x 128` RGB plate crop, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatePatch<T> {
    pub pixels: Tensor<T>,
    pub source: PatchSource,
    pub legible: bool,
}

fn check_dims<T: Scalar>(pixels: &Tensor<T>, w: usize, h: usize) -> Result<()> {
    let dims = image_dims(pixels)?;
    if dims != (w, h) {
        return Err(Error::shape(
            format!("{w}x{h}"),
            format!("{}x{}", dims.0, dims.1),
        ));
    }
    Ok(())
}

impl<T: Scalar> ShapePatch<T> {
    pub fn new(pixels: Tensor<T>, source: PatchSource) -> Result<Self> {
        check_dims(&pixels, SHAPE_SIZE, SHAPE_SIZE)?;
        Ok(Self { pixels, source })
    }
}

impl<T: Scalar> PlatePatch<T> {
    pub fn new(pixels: Tensor<T>, source: PatchSource, legible: bool) -> Result<Self> {
        check_dims(&pixels, PLATE_WIDTH, PLATE_HEIGHT)?;
        Ok(Self {
            pixels,
            source,
            legible,
        })
    }

    /// All-zero patch standing in for an unreadable plate.
    pub fn blank(source: PatchSource) -> Self {
        Self {
            pixels: Tensor::zeros(&[3, PLATE_HEIGHT, PLATE_WIDTH]),
            source,
            legible: false,
        }
    }
}

/// Crops the plate box and resizes it to `352 x 128`.
pub fn extract_plate_patch<T: Scalar>(
    frame: &RgbImage,
    plate_box: Rect,
    source: PatchSource,
) -> Result<PlatePatch<T>> {
    if plate_box.is_degenerate() {
        return Err(Error::Region(format!(
            "plate box {plate_box:?} has zero area"
        )));
    }
    if !plate_box.inside(frame.width() as f64, frame.height() as f64) {
        return Err(Error::Region(format!(
            "plate box {plate_box:?} exceeds {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    let pixels = crop_resize(frame, plate_box, PLATE_WIDTH, PLATE_HEIGHT)?;
    PlatePatch::new(pixels, source, true)
}

/// Rule deriving a vehicle-rear region from the plate box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeExpansion {
    /// Region width in plate widths.
    pub wfactor: f64,
    /// Region height in plate heights.
    pub hfactor: f64,
    /// Upward shift of the region center, in plate heights.
    pub vshift: f64,
}

impl Default for ShapeExpansion {
    fn default() -> Self {
        Self {
            wfactor: 4.0,
            hfactor: 8.0,
            vshift: 2.0,
        }
    }
}

impl ShapeExpansion {
    pub fn validate(&self) -> Result<()> {
        if !(self.wfactor > 0.0 && self.hfactor > 0.0) || !self.vshift.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid shape expansion {self:?}"
            )));
        }
        Ok(())
    }

    /// Expanded region before clipping.
    pub fn region(&self, plate_box: Rect) -> Rect {
        let (cx, cy) = plate_box.center();
        let w = plate_box.width * self.wfactor;
        let h = plate_box.height * self.hfactor;
        let cy = cy - self.vshift * plate_box.height;
        Rect::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }
}

/// Shape crop region for `plate_box`, clipped to the frame.
pub fn shape_region(
    plate_box: Rect,
    expand: &ShapeExpansion,
    frame_w: f64,
    frame_h: f64,
) -> Result<Rect> {
    expand.validate()?;
    let r = expand.region(plate_box).clip(frame_w, frame_h);
    if r.is_degenerate() {
        return Err(Error::Region(format!(
            "shape region for {plate_box:?} lies outside the frame"
        )));
    }
    Ok(r)
}

pub fn extract_shape_patch<T: Scalar>(
    frame: &RgbImage,
    annotation: &VehicleAnnotation,
    frame_index: u32,
    expand: &ShapeExpansion,
) -> Result<ShapePatch<T>> {
    let region = shape_region(
        annotation.box_at(frame_index),
        expand,
        frame.width() as f64,
        frame.height() as f64,
    )?;
    let pixels = crop_resize(frame, region, SHAPE_SIZE, SHAPE_SIZE)?;
    ShapePatch::new(
        pixels,
        PatchSource {
            vehicle_id: annotation.vehicle_id.clone(),
            camera_id: annotation.camera_id,
            frame_index,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> PatchSource {
        PatchSource {
            vehicle_id: "v".into(),
            camera_id: 1,
            frame_index: 0,
        }
    }

    #[test]
    fn default_region_by_hand() {
        // center (140, 215) moved up 2 * 30 to (140, 155); size 320 x 240
        let r = ShapeExpansion::default().region(Rect::new(100.0, 200.0, 80.0, 30.0));
        assert_eq!(r, Rect::new(-20.0, 35.0, 320.0, 240.0));
        let clipped = shape_region(
            Rect::new(100.0, 200.0, 80.0, 30.0),
            &ShapeExpansion::default(),
            640.0,
            480.0,
        )
        .unwrap();
        assert_eq!(clipped, Rect::new(0.0, 35.0, 300.0, 240.0));
    }

    #[test]
    fn unit_expansion_is_the_plate_box() {
        let e = ShapeExpansion {
            wfactor: 1.0,
            hfactor: 1.0,
            vshift: 0.0,
        };
        let b = Rect::new(10.0, 20.0, 30.0, 12.0);
        assert_eq!(e.region(b), b);
    }

    #[test]
    fn plate_patch_dimensions_and_range() {
        let frame = RgbImage::from_fn(200, 100, |x, y| {
            image::Rgb([(x % 256) as u8, (y * 2) as u8, 7])
        });
        let p: PlatePatch<f32> =
            extract_plate_patch(&frame, Rect::new(60.0, 40.0, 80.0, 30.0), src()).unwrap();
        assert_eq!(p.pixels.shape(), &[3, 128, 352]);
        assert!(p.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn plate_box_outside_frame_is_rejected() {
        let frame = RgbImage::new(100, 100);
        assert!(
            extract_plate_patch::<f32>(&frame, Rect::new(50.0, 50.0, 80.0, 30.0), src()).is_err()
        );
        assert!(extract_plate_patch::<f32>(&frame, Rect::new(5.0, 5.0, 0.0, 30.0), src()).is_err());
    }

    #[test]
    fn region_above_frame_is_rejected() {
        let e = ShapeExpansion {
            wfactor: 1.0,
            hfactor: 1.0,
            vshift: 50.0,
        };
        assert!(shape_region(Rect::new(10.0, 10.0, 10.0, 10.0), &e, 100.0, 100.0).is_err());
    }
}
