//! Versioned binary container for trained models.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! ```text
//! offset 0   magic           4 bytes  "BBLM"
//! offset 4   version         u32      currently 1
//! offset 8   kind            u8       0 = linear, 1 = mlp
//! then       dimensions
//!              linear:       u32 n_features
//!              mlp:          u32 n_in, u32 n_hidden, u32 n_out
//! then       parameters      f64 array in the flat layout of
//!                            [`Model::params`] (weights before biases,
//!                            matrices row-major)
//! ```
//!
//! Decoding validates the header, the dimensions (inputs must match the
//! 2000-pixel raster, outputs must be 2, hidden width capped at 65536),
//! the exact byte length, and that every parameter is finite.

use std::path::Path;

use crate::{Error, Result, PIXELS};

use super::{LinearTwoLogit, Mlp, Model};

const MAGIC: [u8; 4] = *b"BBLM";
const VERSION: u32 = 1;
const KIND_LINEAR: u8 = 0;
const KIND_MLP: u8 = 1;
const MAX_HIDDEN: u32 = 65_536;

/// Serialize a model to the container format.
pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    match model {
        Model::Linear(_) => {
            out.push(KIND_LINEAR);
            out.extend_from_slice(&(PIXELS as u32).to_le_bytes());
        }
        Model::Mlp(m) => {
            out.push(KIND_MLP);
            out.extend_from_slice(&(PIXELS as u32).to_le_bytes());
            out.extend_from_slice(&(m.hidden as u32).to_le_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
        }
    }
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::malformed(
                "model container",
                format!("truncated at byte {} (needed {n} more)", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Parse a model from container bytes.
pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::malformed("model container", "bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::malformed(
            "model container",
            format!("unsupported version {version}"),
        ));
    }
    let kind = c.u8()?;
    let (mut model, n_params) = match kind {
        KIND_LINEAR => {
            let n_features = c.u32()?;
            if n_features as usize != PIXELS {
                return Err(Error::malformed(
                    "model container",
                    format!("linear model with {n_features} features, expected {PIXELS}"),
                ));
            }
            (Model::Linear(LinearTwoLogit::zeros()), PIXELS + 1)
        }
        KIND_MLP => {
            let n_in = c.u32()?;
            let n_hidden = c.u32()?;
            let n_out = c.u32()?;
            if n_in as usize != PIXELS || n_out != 2 {
                return Err(Error::malformed(
                    "model container",
                    format!("mlp dims {n_in}x{n_hidden}x{n_out}, expected {PIXELS}xHx2"),
                ));
            }
            if n_hidden == 0 || n_hidden > MAX_HIDDEN {
                return Err(Error::malformed(
                    "model container",
                    format!("hidden width {n_hidden} outside 1..={MAX_HIDDEN}"),
                ));
            }
            let h = n_hidden as usize;
            (Model::Mlp(Mlp::zeros(h)?), h * PIXELS + h + 2 * h + 2)
        }
        other => {
            return Err(Error::malformed(
                "model container",
                format!("unknown model kind {other}"),
            ));
        }
    };

    let expected = c.pos + 8 * n_params;
    if bytes.len() != expected {
        return Err(Error::malformed(
            "model container",
            format!("expected {expected} bytes total, got {}", bytes.len()),
        ));
    }
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let v = f64::from_le_bytes(c.take(8)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::malformed(
                "model container",
                "non-finite parameter",
            ));
        }
        params.push(v);
    }
    model.set_params(&params)?;
    Ok(model)
}

/// Write a model container to disk.
pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, encode_model(model))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a model container from disk.
pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn sample_models() -> Vec<Model> {
        let mut rng = Stream::new(1, 0);
        let mut linear = Model::Linear(LinearTwoLogit::zeros());
        let p: Vec<f64> = (0..linear.param_len()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        linear.set_params(&p).unwrap();
        let mut mlp = Model::Mlp(Mlp::zeros(5).unwrap());
        let p: Vec<f64> = (0..mlp.param_len()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        mlp.set_params(&p).unwrap();
        vec![linear, mlp]
    }

    #[test]
    fn encode_decode_round_trip_is_bit_exact() {
        for model in sample_models() {
            let bytes = encode_model(&model);
            let back = decode_model(&bytes).unwrap();
            assert_eq!(back.params(), model.params());
            // Re-encoding is byte-identical.
            assert_eq!(encode_model(&back), bytes);
        }
    }

    #[test]
    fn header_fields_are_as_documented() {
        let bytes = encode_model(&Model::Linear(LinearTwoLogit::zeros()));
        assert_eq!(&bytes[0..4], b"BBLM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 0);
        assert_eq!(
            u32::from_le_bytes(bytes[9..13].try_into().unwrap()),
            PIXELS as u32
        );
        assert_eq!(bytes.len(), 13 + 8 * (PIXELS + 1));
    }

    #[test]
    fn rejects_malformed_containers() {
        let good = encode_model(&sample_models()[1]);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_model(&bad_magic).is_err());

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(decode_model(&bad_version).is_err());

        let mut bad_kind = good.clone();
        bad_kind[8] = 7;
        assert!(decode_model(&bad_kind).is_err());

        assert!(decode_model(&good[..good.len() - 1]).is_err()); // truncated
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(decode_model(&trailing).is_err()); // trailing garbage
        assert!(decode_model(&[]).is_err());

        let mut nan = good.clone();
        let tail = nan.len() - 8;
        nan[tail..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_model(&nan).is_err());
    }

    #[test]
    fn rejects_wrong_dimensions() {
        let good = encode_model(&sample_models()[1]);
        let mut wrong_in = good.clone();
        wrong_in[9..13].copy_from_slice(&1999u32.to_le_bytes());
        assert!(decode_model(&wrong_in).is_err());
        let mut huge_hidden = good;
        huge_hidden[13..17].copy_from_slice(&10_000_000u32.to_le_bytes());
        assert!(decode_model(&huge_hidden).is_err());
    }

    #[test]
    fn file_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = &sample_models()[0];
        save_model(&path, model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.params(), model.params());

        let missing = dir.path().join("nope.bin");
        let err = load_model(&missing).unwrap_err();
        assert!(err.is_not_found());
        assert!(err.to_string().contains("nope.bin"));
    }
}
