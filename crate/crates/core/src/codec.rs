//! Binary parameter blobs and small serde helpers shared by the checkpoint format.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PMLP";
const BLOB_VERSION: u32 = 1;

/// Header + flat little-endian `f64` parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlob {
    pub layer_sizes: Vec<usize>,
    pub log_std_len: usize,
    pub params: Vec<f64>,
}

impl ParamBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * self.layer_sizes.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.log_std_len as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Corrupt("bad parameter blob magic".into()));
        }
        let version = cur.u32()?;
        if version != BLOB_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: BLOB_VERSION,
            });
        }
        let n_layers = cur.u32()? as usize;
        let layer_sizes = (0..n_layers)
            .map(|_| cur.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let log_std_len = cur.u32()? as usize;
        let n = cur.u64()? as usize;
        if cur.remaining() != n * 8 {
            return Err(Error::Corrupt(format!(
                "parameter blob declares {n} values but carries {} bytes",
                cur.remaining()
            )));
        }
        let params = (0..n)
            .map(|_| cur.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layer_sizes,
            log_std_len,
            params,
        })
    }

    pub fn to_base64(&self) -> String {
        STANDARD.encode(self.to_bytes())
    }

    pub fn from_base64(s: &str) -> Result<Self> {
        let bytes = STANDARD
            .decode(s)
            .map_err(|e| Error::Corrupt(format!("parameter blob is not base64: {e}")))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Corrupt("truncated parameter blob".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// `f64` that may be infinite or NaN; JSON has no literal for those, so they
/// travel as the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

/// `Vec<f64>` stored as base64 of its little-endian bytes (bit-exact, compact).
pub mod f64_blob {
    use super::STANDARD;
    use base64::Engine;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut bytes = Vec::with_capacity(v.len() * 8);
        for x in v {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(de::Error::custom("f64 blob length is not a multiple of 8"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn blob_round_trip(
            sizes in prop::collection::vec(1usize..100, 2..5),
            log_std_len in 0usize..4,
            params in prop::collection::vec(any::<f64>(), 0..64),
        ) {
            let blob = ParamBlob { layer_sizes: sizes, log_std_len, params };
            let back = ParamBlob::from_base64(&blob.to_base64()).unwrap();
            prop_assert_eq!(back.layer_sizes, blob.layer_sizes);
            prop_assert_eq!(back.log_std_len, blob.log_std_len);
            let a: Vec<u64> = back.params.iter().map(|p| p.to_bits()).collect();
            let b: Vec<u64> = blob.params.iter().map(|p| p.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let blob = ParamBlob {
            layer_sizes: vec![3, 4, 2],
            log_std_len: 2,
            params: vec![1.0; 10],
        };
        let bytes = blob.to_bytes();
        for cut in [3, 10, bytes.len() - 1] {
            assert!(matches!(
                ParamBlob::from_bytes(&bytes[..cut]),
                Err(Error::Corrupt(_))
            ));
        }
    }

    #[test]
    fn header_layout() {
        let blob = ParamBlob {
            layer_sizes: vec![2, 1],
            log_std_len: 0,
            params: vec![0.5],
        };
        let bytes = blob.to_bytes();
        assert_eq!(&bytes[..4], b"PMLP");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 8..], &0.5f64.to_le_bytes());
    }
}
