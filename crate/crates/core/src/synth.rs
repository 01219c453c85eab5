//! Synthetic fixed-field tables: every filled cell is a fixed prefix, a
//! fixed number of random digits and a fixed suffix; empty cells are a fixed
//! marker. Cells are written row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::Sequence;

pub const CELL_PREFIX: &[u8] = b"\x03\x02\x0e\x00";
pub const CELL_SUFFIX: &[u8] = b"\x00\x00";
pub const EMPTY_CELL: &[u8] = b"\x01\x02\x06\x00";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub rows: usize,
    pub cols: usize,
    pub field_width: usize,
    /// Fraction of non-empty cells, in `[0, 1]`.
    pub fill_ratio: f64,
    pub seed: u64,
}

impl TableSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.rows == 0 || self.cols == 0 || self.field_width == 0 {
            return Err("rows, cols and field width must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.fill_ratio) {
            return Err(format!("fill ratio {} is outside [0, 1]", self.fill_ratio));
        }
        Ok(())
    }
}

pub fn generate_bytes(spec: &TableSpec) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cell = CELL_PREFIX.len() + spec.field_width + CELL_SUFFIX.len();
    let mut out = Vec::with_capacity(spec.rows * spec.cols * cell);
    for _ in 0..spec.rows * spec.cols {
        if rng.random_bool(spec.fill_ratio) {
            out.extend_from_slice(CELL_PREFIX);
            out.extend((0..spec.field_width).map(|_| b'0' + rng.random_range(0..10u8)));
            out.extend_from_slice(CELL_SUFFIX);
        } else {
            out.extend_from_slice(EMPTY_CELL);
        }
    }
    out
}

/// # Panics
/// If `spec` is invalid.
pub fn generate(spec: &TableSpec) -> Sequence {
    if let Err(e) = spec.validate() {
        panic!("invalid table spec: {e}");
    }
    Sequence::from_bytes(&generate_bytes(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(fill: f64, seed: u64) -> TableSpec {
        TableSpec {
            rows: 2,
            cols: 2,
            field_width: 3,
            fill_ratio: fill,
            seed,
        }
    }

    #[test]
    fn two_by_two_is_reproducible() {
        let a = generate_bytes(&spec(1.0, 7));
        assert_eq!(a, generate_bytes(&spec(1.0, 7)));
        assert_eq!(a.len(), 4 * (CELL_PREFIX.len() + 3 + CELL_SUFFIX.len()));
        for c in a.chunks(9) {
            assert_eq!(&c[..4], CELL_PREFIX);
            assert!(c[4..7].iter().all(u8::is_ascii_digit));
            assert_eq!(&c[7..], CELL_SUFFIX);
        }
        assert_ne!(a, generate_bytes(&spec(1.0, 8)));
    }

    #[test]
    fn empty_table() {
        let a = generate_bytes(&spec(0.0, 1));
        assert_eq!(a, EMPTY_CELL.repeat(4));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(spec(1.5, 0).validate().is_err());
        assert!(TableSpec { rows: 0, ..spec(0.5, 0) }.validate().is_err());
    }
}
