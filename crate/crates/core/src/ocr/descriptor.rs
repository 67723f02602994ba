//! The 35-value OCR descriptor fusing two plate readings.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::alphabet::{char_distance, map_char};
use super::reading::{PlateReading, PLATE_SLOTS};

pub const OCR_DESCRIPTOR_LEN: usize = 4 * PLATE_SLOTS + PLATE_SLOTS;

/// `[f(c), conf] x 7` for camera 1, seven step distances, `[f(c), conf] x 7`
/// for camera 2.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrDescriptor<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> OcrDescriptor<T> {
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        if values.len() != OCR_DESCRIPTOR_LEN {
            return Err(Error::shape(OCR_DESCRIPTOR_LEN, values.len()));
        }
        Ok(Self { values })
    }

    pub fn camera1_block(&self) -> &[T] {
        &self.values[..2 * PLATE_SLOTS]
    }

    pub fn similarity_block(&self) -> &[T] {
        &self.values[2 * PLATE_SLOTS..3 * PLATE_SLOTS]
    }

    pub fn camera2_block(&self) -> &[T] {
        &self.values[3 * PLATE_SLOTS..]
    }
}

fn interleave<T: Scalar>(r: &PlateReading, out: &mut Vec<T>) -> Result<()> {
    for &(c, conf) in &r.slots {
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::InvalidArgument(format!(
                "confidence {conf} outside [0, 1]"
            )));
        }
        out.push(map_char(c)?);
        out.push(T::lit(conf));
    }
    Ok(())
}

pub fn build_ocr_descriptor<T: Scalar>(
    camera1: &PlateReading,
    camera2: &PlateReading,
) -> Result<OcrDescriptor<T>> {
    let mut values = Vec::with_capacity(OCR_DESCRIPTOR_LEN);
    interleave(camera1, &mut values)?;
    for (a, b) in camera1.slots.iter().zip(&camera2.slots) {
        values.push(T::lit(char_distance(a.0, b.0)? as f64));
    }
    interleave(camera2, &mut values)?;
    OcrDescriptor::from_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_readings_have_zero_similarity_block() {
        let r = PlateReading::from_text("ABC1234", &[0.5; 7]).unwrap();
        let d: OcrDescriptor<f64> = build_ocr_descriptor(&r, &r).unwrap();
        assert!(d.similarity_block().iter().all(|v| *v == 0.0));
        assert_eq!(d.values.len(), 35);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(OcrDescriptor::<f32>::from_values(vec![0.0; 34]).is_err());
    }

    proptest! {
        #[test]
        fn similarity_zero_iff_symbols_equal(a in "[A-Z]{3}[0-9]{4}", b in "[A-Z]{3}[0-9]{4}") {
            let ra = PlateReading::from_text(&a, &[0.7; 7]).unwrap();
            let rb = PlateReading::from_text(&b, &[0.3; 7]).unwrap();
            let d: OcrDescriptor<f64> = build_ocr_descriptor(&ra, &rb).unwrap();
            for k in 0..7 {
                let equal = ra.slots[k].0 == rb.slots[k].0;
                prop_assert_eq!(d.similarity_block()[k] == 0.0, equal);
            }
            for v in d.camera1_block().iter().chain(d.camera2_block()) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
