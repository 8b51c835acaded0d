use serde::{Deserialize, Serialize};

use super::{RuntimeError, Scalar};
use crate::model::PrimKind;

/// Encoding used by a [`PackBuffer`].
///
/// `Native` is a canonical fixed layout: little-endian, widths from
/// [`PrimKind::native_width`], no padding. `Xdr` follows RFC 4506:
/// big-endian, every item a multiple of four bytes, IEEE 754 floats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Native,
    Xdr,
}

impl Mode {
    pub fn width(self, kind: PrimKind) -> usize {
        match self {
            Mode::Native => kind.native_width(),
            Mode::Xdr => kind.xdr_width(),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" => Ok(Mode::Native),
            "xdr" => Ok(Mode::Xdr),
            _ => Err(format!("unknown mode `{s}` (expected native or xdr)")),
        }
    }
}

/// Append-only byte repository with a read cursor.
#[derive(Debug, Clone, PartialEq)]
pub struct PackBuffer {
    mode: Mode,
    bytes: Vec<u8>,
    cursor: usize,
    warnings: Vec<String>,
    trace: Option<Vec<String>>,
}

impl PackBuffer {
    pub fn new(mode: Mode) -> Self {
        PackBuffer { mode, bytes: Vec::new(), cursor: 0, warnings: Vec::new(), trace: None }
    }

    pub fn from_bytes(mode: Mode, bytes: Vec<u8>) -> Self {
        PackBuffer { mode, bytes, cursor: 0, warnings: Vec::new(), trace: None }
    }

    /// Records the path of every visited leaf and pointer while packing or
    /// unpacking.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.cursor
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn trace(&self) -> Option<&[String]> {
        self.trace.as_deref()
    }

    pub fn append(&mut self, chunk: &[u8]) {
        self.bytes.extend_from_slice(chunk);
    }

    pub(crate) fn warn(&mut self, msg: String) {
        self.warnings.push(msg);
    }

    pub(crate) fn visit(&mut self, path: &str) {
        if let Some(t) = &mut self.trace {
            t.push(path.to_string());
        }
    }

    /// Consumes `n` bytes, or reports an underrun at `path`.
    pub(crate) fn take(&mut self, n: usize, path: &str) -> Result<&[u8], RuntimeError> {
        if self.remaining() < n {
            return Err(RuntimeError::Underrun { path: path.to_string(), needed: n, available: self.remaining() });
        }
        let start = self.cursor;
        self.cursor += n;
        Ok(&self.bytes[start..self.cursor])
    }
}

fn range_error(kind: PrimKind, payload: &Scalar) -> RuntimeError {
    RuntimeError::Range { kind, value: format!("{payload:?}") }
}

/// Encodes one primitive. The output depends only on the arguments.
pub fn encode_primitive(kind: PrimKind, payload: &Scalar, mode: Mode) -> Result<Vec<u8>, RuntimeError> {
    match (kind, payload) {
        (PrimKind::Bool, Scalar::Bool(b)) => Ok(match mode {
            Mode::Native => vec![*b as u8],
            Mode::Xdr => (*b as u32).to_be_bytes().to_vec(),
        }),
        (PrimKind::Float32, Scalar::Float(x)) => {
            let narrow = *x as f32;
            if !x.is_nan() && narrow as f64 != *x {
                return Err(range_error(kind, payload));
            }
            Ok(match mode {
                Mode::Native => narrow.to_le_bytes().to_vec(),
                Mode::Xdr => narrow.to_be_bytes().to_vec(),
            })
        }
        (PrimKind::Float64, Scalar::Float(x)) => Ok(match mode {
            Mode::Native => x.to_le_bytes().to_vec(),
            Mode::Xdr => x.to_be_bytes().to_vec(),
        }),
        (k, Scalar::Int(v)) if !k.is_float() && k != PrimKind::Bool => {
            let (lo, hi) = k.int_range().expect("integer kind");
            if *v < lo || *v > hi {
                return Err(range_error(kind, payload));
            }
            let v = *v;
            Ok(match mode {
                Mode::Native => match k {
                    PrimKind::Char | PrimKind::Int8 => (v as i8).to_le_bytes().to_vec(),
                    PrimKind::Uint8 => (v as u8).to_le_bytes().to_vec(),
                    PrimKind::Int16 => (v as i16).to_le_bytes().to_vec(),
                    PrimKind::Uint16 => (v as u16).to_le_bytes().to_vec(),
                    PrimKind::Int32 => (v as i32).to_le_bytes().to_vec(),
                    PrimKind::Uint32 => (v as u32).to_le_bytes().to_vec(),
                    PrimKind::Int64 => (v as i64).to_le_bytes().to_vec(),
                    _ => (v as u64).to_le_bytes().to_vec(),
                },
                // Sub-word integers widen to a 4-byte int or unsigned int.
                Mode::Xdr => match k {
                    PrimKind::Char | PrimKind::Int8 | PrimKind::Int16 | PrimKind::Int32 => {
                        (v as i32).to_be_bytes().to_vec()
                    }
                    PrimKind::Uint8 | PrimKind::Uint16 | PrimKind::Uint32 => (v as u32).to_be_bytes().to_vec(),
                    PrimKind::Int64 => (v as i64).to_be_bytes().to_vec(),
                    _ => (v as u64).to_be_bytes().to_vec(),
                },
            })
        }
        _ => Err(range_error(kind, payload)),
    }
}

/// Inverse of [`encode_primitive`]. `bytes` must be exactly the mode's
/// width for `kind`; the error text describes the corruption.
pub fn decode_primitive(kind: PrimKind, bytes: &[u8], mode: Mode) -> Result<Scalar, String> {
    let width = mode.width(kind);
    if bytes.len() != width {
        return Err(format!("expected {width} bytes, got {}", bytes.len()));
    }
    let arr = |n: usize| -> [u8; 8] {
        let mut a = [0u8; 8];
        a[..n].copy_from_slice(&bytes[..n]);
        a
    };
    let int: i128 = match (mode, width) {
        (Mode::Native, 1) => {
            if kind.is_signed() {
                bytes[0] as i8 as i128
            } else {
                bytes[0] as i128
            }
        }
        (Mode::Native, 2) => {
            let a = [bytes[0], bytes[1]];
            if kind.is_signed() { i16::from_le_bytes(a) as i128 } else { u16::from_le_bytes(a) as i128 }
        }
        (Mode::Native, 4) => {
            let a = [bytes[0], bytes[1], bytes[2], bytes[3]];
            if kind == PrimKind::Float32 {
                return Ok(Scalar::Float(f32::from_le_bytes(a) as f64));
            }
            if kind.is_signed() { i32::from_le_bytes(a) as i128 } else { u32::from_le_bytes(a) as i128 }
        }
        (Mode::Native, _) => {
            let a = arr(8);
            if kind == PrimKind::Float64 {
                return Ok(Scalar::Float(f64::from_le_bytes(a)));
            }
            if kind.is_signed() { i64::from_le_bytes(a) as i128 } else { u64::from_le_bytes(a) as i128 }
        }
        (Mode::Xdr, 4) => {
            let a = [bytes[0], bytes[1], bytes[2], bytes[3]];
            if kind == PrimKind::Float32 {
                return Ok(Scalar::Float(f32::from_be_bytes(a) as f64));
            }
            if kind.is_signed() { i32::from_be_bytes(a) as i128 } else { u32::from_be_bytes(a) as i128 }
        }
        (Mode::Xdr, _) => {
            let a = arr(8);
            if kind == PrimKind::Float64 {
                return Ok(Scalar::Float(f64::from_be_bytes(a)));
            }
            if kind.is_signed() { i64::from_be_bytes(a) as i128 } else { u64::from_be_bytes(a) as i128 }
        }
    };
    if kind == PrimKind::Bool {
        return match int {
            0 => Ok(Scalar::Bool(false)),
            1 => Ok(Scalar::Bool(true)),
            other => Err(format!("invalid bool {other}")),
        };
    }
    let (lo, hi) = kind.int_range().expect("integer kind");
    if int < lo || int > hi {
        return Err(format!("{int} out of range for {}", kind.c_name()));
    }
    Ok(Scalar::Int(int))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    // Vectors produced independently with Python's `struct.pack` using the
    // big-endian formats RFC 4506 prescribes (`>i`, `>I`, `>q`, `>d`, ...).
    #[test]
    fn xdr_vectors() {
        let cases: &[(PrimKind, Scalar, &str)] = &[
            (PrimKind::Int32, Scalar::Int(0), "00000000"),
            (PrimKind::Int32, Scalar::Int(1), "00000001"),
            (PrimKind::Int32, Scalar::Int(-1), "ffffffff"),
            (PrimKind::Int32, Scalar::Int(i32::MIN as i128), "80000000"),
            (PrimKind::Int32, Scalar::Int(i32::MAX as i128), "7fffffff"),
            (PrimKind::Uint32, Scalar::Int(u32::MAX as i128), "ffffffff"),
            (PrimKind::Float64, Scalar::Float(0.0), "0000000000000000"),
            (PrimKind::Float64, Scalar::Float(1.0), "3ff0000000000000"),
            (PrimKind::Float64, Scalar::Float(-2.5), "c004000000000000"),
            (PrimKind::Bool, Scalar::Bool(true), "00000001"),
            (PrimKind::Bool, Scalar::Bool(false), "00000000"),
            (PrimKind::Float32, Scalar::Float(1.5), "3fc00000"),
            (PrimKind::Int64, Scalar::Int(-2), "fffffffffffffffe"),
            (PrimKind::Uint64, Scalar::Int(u64::MAX as i128), "ffffffffffffffff"),
            (PrimKind::Int8, Scalar::Int(-5), "fffffffb"),
            (PrimKind::Int16, Scalar::Int(-5), "fffffffb"),
            (PrimKind::Uint8, Scalar::Int(255), "000000ff"),
        ];
        for (kind, payload, expected) in cases {
            let got = encode_primitive(*kind, payload, Mode::Xdr).unwrap();
            assert_eq!(hex(&got), *expected, "{kind:?} {payload:?}");
        }
    }

    #[test]
    fn native_vectors() {
        assert_eq!(hex(&encode_primitive(PrimKind::Int32, &Scalar::Int(0), Mode::Native).unwrap()), "00000000");
        assert_eq!(hex(&encode_primitive(PrimKind::Float64, &Scalar::Float(1.0), Mode::Native).unwrap()), "000000000000f03f");
        assert_eq!(hex(&encode_primitive(PrimKind::Int16, &Scalar::Int(-2), Mode::Native).unwrap()), "feff");
        assert_eq!(hex(&encode_primitive(PrimKind::Bool, &Scalar::Bool(true), Mode::Native).unwrap()), "01");
    }

    #[test]
    fn range_errors() {
        assert!(encode_primitive(PrimKind::Uint8, &Scalar::Int(256), Mode::Native).is_err());
        assert!(encode_primitive(PrimKind::Int32, &Scalar::Int(1 << 31), Mode::Xdr).is_err());
        assert!(encode_primitive(PrimKind::Float32, &Scalar::Float(0.1), Mode::Xdr).is_err());
        assert!(encode_primitive(PrimKind::Int32, &Scalar::Float(1.0), Mode::Xdr).is_err());
        assert!(encode_primitive(PrimKind::Bool, &Scalar::Int(1), Mode::Xdr).is_err());
    }

    #[test]
    fn decode_rejects_corruption() {
        assert!(decode_primitive(PrimKind::Bool, &[0, 0, 0, 2], Mode::Xdr).is_err());
        assert!(decode_primitive(PrimKind::Bool, &[7], Mode::Native).is_err());
        // A widened int8 carrying a value outside -128..=127.
        assert!(decode_primitive(PrimKind::Int8, &[0, 0, 1, 0], Mode::Xdr).is_err());
        assert!(decode_primitive(PrimKind::Int32, &[0, 0], Mode::Xdr).is_err());
    }

    #[test]
    fn append_and_cursor() {
        let mut b = PackBuffer::new(Mode::Native);
        b.append(&[0x01]);
        assert_eq!(b.len(), 1);
        b.append(&[]);
        assert_eq!(b.len(), 1);
        let mut b = PackBuffer::new(Mode::Native);
        b.append(&[0xAA]);
        b.append(&[0xBB]);
        assert_eq!(b.bytes(), &[0xAA, 0xBB]);
        assert_eq!(b.cursor(), 0);
        assert_eq!(b.take(1, "a").unwrap(), &[0xAA]);
        b.append(&[0xCC]);
        assert_eq!(b.cursor(), 1);
        assert!(matches!(b.take(5, ".z"), Err(RuntimeError::Underrun { needed: 5, available: 2, .. })));
    }

    fn scalar_for(kind: PrimKind) -> BoxedStrategy<Scalar> {
        match kind {
            PrimKind::Bool => any::<bool>().prop_map(Scalar::Bool).boxed(),
            PrimKind::Float32 => any::<f32>().prop_map(|x| Scalar::Float(x as f64)).boxed(),
            PrimKind::Float64 => any::<f64>().prop_map(Scalar::Float).boxed(),
            k => {
                let (lo, hi) = k.int_range().unwrap();
                (lo..=hi).prop_map(Scalar::Int).boxed()
            }
        }
    }

    proptest! {
        #[test]
        fn primitive_round_trip(
            (kind, payload) in proptest::sample::select(PrimKind::ALL.to_vec()).prop_flat_map(|k| (Just(k), scalar_for(k))),
            xdr in any::<bool>(),
        ) {
            let mode = if xdr { Mode::Xdr } else { Mode::Native };
            let bytes = encode_primitive(kind, &payload, mode).unwrap();
            prop_assert_eq!(bytes.len(), mode.width(kind));
            if mode == Mode::Xdr {
                prop_assert_eq!(bytes.len() % 4, 0);
            }
            prop_assert_eq!(decode_primitive(kind, &bytes, mode).unwrap(), payload);
        }
    }
}
