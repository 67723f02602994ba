//! The 36-symbol plate alphabet and its order-preserving map onto `[0, 1]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `A..Z` followed by `0..9`.
pub const SYMBOLS: [char; 36] = [
    'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', 'P', 'Q', 'R', 'S',
    'T', 'U', 'V', 'W', 'X', 'Y', 'Z', '0', '1', '2', '3', '4', '5', '6', '7', '8', '9',
];

pub const ALPHABET_SIZE: usize = SYMBOLS.len();

/// Detector classes: the alphabet without `O`, which is read as `0`.
pub const NUM_CLASSES: usize = 35;

pub fn is_symbol(c: char) -> bool {
    c.is_ascii_uppercase() || c.is_ascii_digit()
}

pub fn is_letter(c: char) -> bool {
    c.is_ascii_uppercase()
}

pub fn is_digit(c: char) -> bool {
    c.is_ascii_digit()
}

/// Position of `c` in [`SYMBOLS`].
pub fn index_of(c: char) -> Result<usize> {
    match c {
        'A'..='Z' => Ok(c as usize - 'A' as usize),
        '0'..='9' => Ok(26 + c as usize - '0' as usize),
        _ => Err(Error::InvalidSymbol(c)),
    }
}

/// `f(c_i) = i / (n - 1)`.
pub fn map_char<T: Scalar>(c: char) -> Result<T> {
    let i = index_of(c)?;
    Ok(T::lit(i as f64) / T::lit((ALPHABET_SIZE - 1) as f64))
}

/// Step distance: 0 when both symbols map to the same value, 1 otherwise.
pub fn char_distance(a: char, b: char) -> Result<u8> {
    let fa: f64 = map_char(a)?;
    let fb: f64 = map_char(b)?;
    Ok(if fa - fb == 0.0 { 0 } else { 1 })
}

/// Detector class index for a symbol (`O` shares the class of `0`).
pub fn class_of(c: char) -> Result<usize> {
    let c = if c == 'O' { '0' } else { c };
    let i = index_of(c)?;
    Ok(if i > 14 { i - 1 } else { i })
}

/// Symbol emitted for a detector class.
pub fn symbol_of_class(class: usize) -> Option<char> {
    match class {
        0..=13 => Some(SYMBOLS[class]),
        14..=34 => Some(SYMBOLS[class + 1]),
        _ => None,
    }
}
