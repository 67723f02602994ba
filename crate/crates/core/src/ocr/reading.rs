//! Plate readings: detector output normalized to the `LLLDDDD` layout.

use serde::{Deserialize, Serialize};

use crate::imgops::Rect;

use super::alphabet::{is_digit, is_letter};

pub const PLATE_SLOTS: usize = 7;
pub const LETTER_SLOTS: usize = 3;
pub const PAD_SYMBOL: char = 'A';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharDetection {
    pub symbol: char,
    pub confidence: f64,
    /// Box in plate-patch pixel coordinates.
    pub bbox: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotStatus {
    /// Detected symbol already fits the slot class.
    Read,
    /// Layout swap applied; holds the detected symbol.
    Swapped(char),
    /// Wrong class for the slot and no swap exists; symbol kept.
    Unmapped,
    /// No detection for this slot.
    Padded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateReading {
    pub slots: [(char, f64); PLATE_SLOTS],
    pub status: [SlotStatus; PLATE_SLOTS],
}

impl PlateReading {
    /// Reading of an unreadable plate: every slot padded with zero confidence.
    pub fn blank() -> Self {
        Self {
            slots: [(PAD_SYMBOL, 0.0); PLATE_SLOTS],
            status: [SlotStatus::Padded; PLATE_SLOTS],
        }
    }

    /// Reading built from a known string and per-character confidences,
    /// bypassing the detector. Short strings are padded.
    pub fn from_text(text: &str, confidences: &[f64]) -> crate::Result<Self> {
        let dets: Vec<CharDetection> = text
            .chars()
            .enumerate()
            .map(|(i, c)| CharDetection {
                symbol: c.to_ascii_uppercase(),
                confidence: confidences.get(i).copied().unwrap_or(1.0),
                bbox: Rect::new(i as f64, 0.0, 1.0, 1.0),
            })
            .collect();
        for d in &dets {
            super::alphabet::index_of(d.symbol)?;
        }
        Ok(apply_swaps(&dets))
    }

    /// The slot symbols as a string, padding included.
    pub fn text(&self) -> String {
        self.slots.iter().map(|(c, _)| *c).collect()
    }

    /// The symbols actually read, i.e. without trailing padding.
    pub fn read_text(&self) -> String {
        self.slots
            .iter()
            .zip(&self.status)
            .filter(|(_, s)| **s != SlotStatus::Padded)
            .map(|((c, _), _)| *c)
            .collect()
    }

    pub fn is_flagged(&self, slot: usize) -> bool {
        matches!(self.status[slot], SlotStatus::Unmapped | SlotStatus::Padded)
    }
}

/// Digit read in a letter slot.
pub fn digit_to_letter(c: char) -> Option<char> {
    Some(match c {
        '1' => 'I',
        '2' => 'Z',
        '4' => 'A',
        '5' => 'S',
        '6' => 'G',
        '7' => 'Z',
        '8' => 'B',
        _ => return None,
    })
}

/// Letter read in a digit slot.
pub fn letter_to_digit(c: char) -> Option<char> {
    Some(match c {
        'A' => '4',
        'B' => '8',
        'D' => '0',
        'G' => '6',
        'I' => '1',
        'J' => '1',
        'Q' => '0',
        'S' => '5',
        'Z' => '7',
        _ => return None,
    })
}

/// Keeps the seven most confident detections in left-to-right order and
/// enforces three letters followed by four digits.
pub fn apply_swaps(detections: &[CharDetection]) -> PlateReading {
    let mut keep: Vec<usize> = (0..detections.len()).collect();
    if keep.len() > PLATE_SLOTS {
        keep.sort_by(|&a, &b| {
            detections[b]
                .confidence
                .total_cmp(&detections[a].confidence)
                .then(a.cmp(&b))
        });
        keep.truncate(PLATE_SLOTS);
        keep.sort_unstable();
    }
    let mut reading = PlateReading::blank();
    for (slot, &i) in keep.iter().enumerate() {
        let d = &detections[i];
        let letter_slot = slot < LETTER_SLOTS;
        let (symbol, status) = if letter_slot && is_digit(d.symbol) {
            match digit_to_letter(d.symbol) {
                Some(s) => (s, SlotStatus::Swapped(d.symbol)),
                None => (d.symbol, SlotStatus::Unmapped),
            }
        } else if !letter_slot && is_letter(d.symbol) {
            match letter_to_digit(d.symbol) {
                Some(s) => (s, SlotStatus::Swapped(d.symbol)),
                None => (d.symbol, SlotStatus::Unmapped),
            }
        } else {
            (d.symbol, SlotStatus::Read)
        };
        reading.slots[slot] = (symbol, d.confidence);
        reading.status[slot] = status;
    }
    reading
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dets(text: &str) -> Vec<CharDetection> {
        text.chars()
            .enumerate()
            .map(|(i, c)| CharDetection {
                symbol: c,
                confidence: 0.9,
                bbox: Rect::new(10.0 * i as f64, 0.0, 8.0, 20.0),
            })
            .collect()
    }

    #[test]
    fn conforming_plate_is_unchanged() {
        let r = apply_swaps(&dets("ATC1189"));
        assert_eq!(r.text(), "ATC1189");
        assert!(r.status.iter().all(|s| *s == SlotStatus::Read));
    }

    #[test]
    fn digit_in_letter_slot_is_swapped() {
        let r = apply_swaps(&dets("A1C1189"));
        assert_eq!(r.text(), "AIC1189");
        assert_eq!(r.status[1], SlotStatus::Swapped('1'));
    }

    #[test]
    fn letter_in_digit_slot_is_swapped() {
        let r = apply_swaps(&dets("ATC1Q89"));
        assert_eq!(r.text(), "ATC1089");
        assert_eq!(r.status[4], SlotStatus::Swapped('Q'));
    }

    #[test]
    fn unmapped_violation_is_kept_and_flagged() {
        let r = apply_swaps(&dets("A3C11X9"));
        assert_eq!(r.text(), "A3C11X9");
        assert!(r.is_flagged(1) && r.is_flagged(5));
    }

    #[test]
    fn short_reading_is_padded() {
        let r = apply_swaps(&dets("ADS026"));
        assert_eq!(r.text(), "ADS026A");
        assert_eq!(r.slots[6], ('A', 0.0));
        assert_eq!(r.status[6], SlotStatus::Padded);
        assert_eq!(r.read_text(), "ADS026");
    }

    #[test]
    fn keeps_seven_most_confident_in_spatial_order() {
        let mut d = dets("AXTC1189");
        d[1].confidence = 0.1;
        let r = apply_swaps(&d);
        assert_eq!(r.text(), "ATC1189");
    }

    proptest! {
        #[test]
        fn swapped_slots_satisfy_layout(text in "[A-Z0-9]{0,10}") {
            let r = apply_swaps(&dets(&text));
            prop_assert_eq!(r.slots.len(), PLATE_SLOTS);
            for k in 0..PLATE_SLOTS {
                if let SlotStatus::Swapped(_) = r.status[k] {
                    let c = r.slots[k].0;
                    let ok = if k < LETTER_SLOTS { is_letter(c) } else { is_digit(c) };
                    prop_assert!(ok);
                }
                prop_assert!((0.0..=1.0).contains(&r.slots[k].1));
            }
        }
    }
}
