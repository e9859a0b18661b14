//! Frame-level token posterior matrices and the PGM1 container format.
//!
//! PGM1 layout: bytes 0–3 ASCII `PGM1`, bytes 4–7 u32 LE frame count T,
//! bytes 8–11 u32 LE width K = |V'|, then T·K f32 LE linear probabilities,
//! frame-major. Blank occupies column 0.
//!
//! Stored values are kept exactly as read (f32 to f64 is lossless), which
//! makes load→save→load byte-identical. Row normalization — rows must sum
//! to 1 within 1e-5 — is applied on access: [`Posteriorgram::prob`] divides
//! by the cached row sum, so every computation sees exact distributions.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::vocab::TokenId;

const MAGIC: &[u8; 4] = b"PGM1";

/// Row-sum tolerance. Float32 storage cannot guarantee anything stricter.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// A T×K matrix of per-frame probability distributions over tokens plus
/// blank, optionally tagged with the encoder layer that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Posteriorgram {
    frames: usize,
    width: usize,
    values: Vec<f64>,
    row_sums: Vec<f64>,
    layer: Option<usize>,
}

impl Posteriorgram {
    /// Validate and build from dense rows of linear probabilities.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Invalid("empty posteriorgram".into()));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::Invalid("posteriorgram has zero width".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * width);
        let mut row_sums = Vec::with_capacity(rows.len());
        for (t, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Shape(format!(
                    "row {t} has width {}, expected {width}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Invalid(format!(
                        "non-finite probability at frame {t}, token {k}"
                    )));
                }
                if !(0.0..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::Invalid(format!(
                        "probability {v} out of [0, 1] at frame {t}, token {k}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "row {t} not normalized: sums to {sum}"
                )));
            }
            values.extend_from_slice(row);
            row_sums.push(sum);
        }
        Ok(Posteriorgram {
            frames: rows.len(),
            width,
            values,
            row_sums,
            layer: None,
        })
    }

    pub fn with_layer(mut self, layer: usize) -> Self {
        self.layer = Some(layer);
        self
    }

    /// Frame count T.
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Distribution width K = |V'|.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Encoder layer tag, when this came out of a layer stack.
    pub fn layer(&self) -> Option<usize> {
        self.layer
    }

    /// Normalized probability of token `k` at frame `t`.
    #[inline]
    pub fn prob(&self, t: usize, k: TokenId) -> f64 {
        self.values[t * self.width + k] / self.row_sums[t]
    }

    /// Natural log of [`Posteriorgram::prob`]; `-inf` for zero entries.
    #[inline]
    pub fn log_prob(&self, t: usize, k: TokenId) -> f64 {
        self.prob(t, k).ln()
    }

    /// The normalized row at frame `t`.
    pub fn row(&self, t: usize) -> Vec<f64> {
        (0..self.width).map(|k| self.prob(t, k)).collect()
    }

    /// Dense normalized matrix view for linear-algebra consumers.
    pub fn prob_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.frames, self.width), |(t, k)| self.prob(t, k))
    }

    /// Read and validate a PGM1 file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Posteriorgram::from_bytes(&bytes).map_err(|e| match e {
            Error::Invalid(reason) => Error::format(path, reason),
            other => other,
        })
    }

    /// Decode PGM1 bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Invalid("truncated header".into()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Invalid("bad magic, expected PGM1".into()));
        }
        let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if frames == 0 {
            return Err(Error::Invalid("empty posteriorgram".into()));
        }
        if width == 0 {
            return Err(Error::Invalid("posteriorgram has zero width".into()));
        }
        let expected = 12 + frames * width * 4;
        if bytes.len() < expected {
            return Err(Error::Invalid(format!(
                "truncated payload: expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(Error::Invalid(format!(
                "trailing data: expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut rows = Vec::with_capacity(frames);
        for t in 0..frames {
            let mut row = Vec::with_capacity(width);
            for k in 0..width {
                let off = 12 + (t * width + k) * 4;
                let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                row.push(v as f64);
            }
            rows.push(row);
        }
        Posteriorgram::from_rows(rows)
    }

    /// Encode as PGM1 bytes. Values written are exactly the stored ones.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(width: usize, k: usize) -> Vec<f64> {
        let mut row = vec![0.0; width];
        row[k] = 1.0;
        row
    }

    #[test]
    fn loads_identity_rows() {
        let z = Posteriorgram::from_rows(vec![one_hot(3, 0), one_hot(3, 1)]).unwrap();
        let bytes = z.to_bytes();
        let back = Posteriorgram::from_bytes(&bytes).unwrap();
        assert_eq!(back.frames(), 2);
        assert_eq!(back.width(), 3);
        assert_eq!(back.prob(1, 1), 1.0);
    }

    #[test]
    fn rejects_unnormalized_row() {
        let err = Posteriorgram::from_rows(vec![vec![0.25, 0.25]]).unwrap_err();
        assert!(err.to_string().contains("not normalized"));
    }

    #[test]
    fn rejects_empty() {
        assert!(Posteriorgram::from_rows(vec![]).is_err());
        // T=0 header
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PGM1");
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        let err = Posteriorgram::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("empty posteriorgram"));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let z = Posteriorgram::from_rows(vec![one_hot(2, 0)]).unwrap();
        let mut bytes = z.to_bytes();
        bytes[0] = b'X';
        assert!(Posteriorgram::from_bytes(&bytes).is_err());

        let bytes = z.to_bytes();
        assert!(Posteriorgram::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut bytes = Posteriorgram::from_rows(vec![one_hot(2, 0)]).unwrap().to_bytes();
        bytes[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(Posteriorgram::from_bytes(&bytes).is_err());
    }

    #[test]
    fn access_is_normalized() {
        // A row that sums to 1 + 4e-6 passes the tolerance and normalizes on access.
        let z = Posteriorgram::from_rows(vec![vec![0.500002, 0.500002]]).unwrap();
        assert!((z.prob(0, 0) - 0.5).abs() < 1e-12);
        let total: f64 = z.row(0).iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    proptest! {
        // Byte round-trip: save(load(x)) == x for any bytes produced by save.
        #[test]
        fn pgm1_round_trip(rows in proptest::collection::vec(
            proptest::collection::vec(0.01f64..1.0, 3), 1..5)) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            }).collect();
            let z = Posteriorgram::from_rows(rows).unwrap();
            let first = z.to_bytes();
            let second = Posteriorgram::from_bytes(&first).unwrap().to_bytes();
            prop_assert_eq!(first, second);
        }
    }
}
