//! Weight export for the glove firmware.
//!
//! Binary `.glvw` layout, all little-endian:
//!
//! ```text
//! "GLVW" | version u16 | n_in u16 | n_hidden u16 | n_out u16
//! W1 (row-major) | b1 | W2 (row-major) | b2      -- f32 each
//! CRC-32 (IEEE) of every preceding byte           -- u32
//! ```
//!
//! The firmware text form is a C++ header with four constant arrays.

use std::fmt::Write as _;

use thiserror::Error;

use crate::neural::{MlpParameters, NeuralError};

pub const MAGIC: &[u8; 4] = b"GLVW";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("bad magic, not a weights file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated: need {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{extra} unexpected trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("dimension too large for the format: {0}")]
    DimensionTooLarge(usize),
    #[error("invalid parameters: {0}")]
    Invalid(#[from] NeuralError),
    #[error("firmware text: {0}")]
    Text(String),
}

/// Total file size for the given dimensions.
pub fn binary_len(n_in: usize, n_hidden: usize, n_out: usize) -> usize {
    HEADER_LEN + 4 * (n_hidden * n_in + n_hidden + n_out * n_hidden + n_out) + CRC_LEN
}

pub fn export_binary(p: &MlpParameters) -> Result<Vec<u8>, WeightsError> {
    p.validate()?;
    let mut out = Vec::with_capacity(binary_len(p.n_in, p.n_hidden, p.n_out));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [p.n_in, p.n_hidden, p.n_out] {
        let d = u16::try_from(dim).map_err(|_| WeightsError::DimensionTooLarge(dim))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for tensor in p.tensors() {
        for v in tensor {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

pub fn import_binary(bytes: &[u8]) -> Result<MlpParameters, WeightsError> {
    if bytes.len() < HEADER_LEN {
        return Err(WeightsError::Truncated {
            expected: HEADER_LEN + CRC_LEN,
            got: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u16_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let n_in = usize::from(u16_at(bytes, 6));
    let n_hidden = usize::from(u16_at(bytes, 8));
    let n_out = usize::from(u16_at(bytes, 10));
    let expected = binary_len(n_in, n_hidden, n_out);
    if bytes.len() < expected {
        return Err(WeightsError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(WeightsError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let body = &bytes[..expected - CRC_LEN];
    let stored = u32::from_le_bytes(bytes[expected - CRC_LEN..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WeightsError::CrcMismatch { stored, computed });
    }
    let mut values = body[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
    let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
    let w1 = take(n_hidden * n_in);
    let b1 = take(n_hidden);
    let w2 = take(n_out * n_hidden);
    let b2 = take(n_out);
    Ok(MlpParameters::from_parts(n_in, n_hidden, n_out, w1, b1, w2, b2)?)
}

fn fmt_f32(v: f64) -> String {
    format!("{:.8e}f", v as f32)
}

fn push_matrix(out: &mut String, name: &str, rows_const: &str, cols_const: &str, data: &[f64], cols: usize) {
    let _ = writeln!(out, "const float {name}[{rows_const}][{cols_const}] = {{");
    for row in data.chunks(cols) {
        let items: Vec<String> = row.iter().map(|v| fmt_f32(*v)).collect();
        let _ = writeln!(out, "    {{{}}},", items.join(", "));
    }
    out.push_str("};\n\n");
}

fn push_vector(out: &mut String, name: &str, len_const: &str, data: &[f64]) {
    let _ = writeln!(out, "const float {name}[{len_const}] = {{");
    let items: Vec<String> = data.iter().map(|v| fmt_f32(*v)).collect();
    let _ = writeln!(out, "    {}", items.join(", "));
    out.push_str("};\n\n");
}

/// C++ header with the network dimensions and the four weight arrays.
/// Values are f32 printed with 9 significant digits.
pub fn export_firmware_arrays(p: &MlpParameters) -> Result<String, WeightsError> {
    p.validate()?;
    let mut out = String::new();
    out.push_str("// Gesture classifier weights. Generated file, do not edit.\n");
    out.push_str("#pragma once\n\n");
    let _ = writeln!(out, "const int N_INPUT = {};", p.n_in);
    let _ = writeln!(out, "const int N_HIDDEN = {};", p.n_hidden);
    let _ = writeln!(out, "const int N_OUTPUT = {};\n", p.n_out);
    push_matrix(&mut out, "W1", "N_HIDDEN", "N_INPUT", &p.w1, p.n_in);
    push_vector(&mut out, "B1", "N_HIDDEN", &p.b1);
    push_matrix(&mut out, "W2", "N_OUTPUT", "N_HIDDEN", &p.w2, p.n_hidden);
    push_vector(&mut out, "B2", "N_OUTPUT", &p.b2);
    Ok(out)
}

fn text_err(msg: impl Into<String>) -> WeightsError {
    WeightsError::Text(msg.into())
}

fn parse_const(text: &str, name: &str) -> Result<usize, WeightsError> {
    let key = format!("const int {name} = ");
    let start = text
        .find(&key)
        .ok_or_else(|| text_err(format!("missing {name}")))?
        + key.len();
    let end = text[start..]
        .find(';')
        .ok_or_else(|| text_err(format!("unterminated {name}")))?;
    text[start..start + end]
        .trim()
        .parse()
        .map_err(|_| text_err(format!("bad value for {name}")))
}

fn parse_array(text: &str, name: &str, expected: usize) -> Result<Vec<f64>, WeightsError> {
    let key = format!("const float {name}[");
    let start = text
        .find(&key)
        .ok_or_else(|| text_err(format!("missing array {name}")))?;
    let open = text[start..]
        .find("= {")
        .ok_or_else(|| text_err(format!("array {name} has no initializer")))?
        + start
        + 3;
    let close = text[open..]
        .find("};")
        .ok_or_else(|| text_err(format!("array {name} is not closed")))?
        + open;
    let values = text[open..close]
        .split(|c: char| c == ',' || c == '{' || c == '}' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('f')
                .parse::<f32>()
                .map(f64::from)
                .map_err(|_| text_err(format!("array {name}: bad value {s:?}")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if values.len() != expected {
        return Err(text_err(format!(
            "array {name}: expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Reads back text produced by [`export_firmware_arrays`].
pub fn parse_firmware_arrays(text: &str) -> Result<MlpParameters, WeightsError> {
    let n_in = parse_const(text, "N_INPUT")?;
    let n_hidden = parse_const(text, "N_HIDDEN")?;
    let n_out = parse_const(text, "N_OUTPUT")?;
    let w1 = parse_array(text, "W1", n_hidden * n_in)?;
    let b1 = parse_array(text, "B1", n_hidden)?;
    let w2 = parse_array(text, "W2", n_out * n_hidden)?;
    let b2 = parse_array(text, "B2", n_out)?;
    Ok(MlpParameters::from_parts(n_in, n_hidden, n_out, w1, b1, w2, b2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> MlpParameters {
        MlpParameters::glorot(20, 24, 11, &mut ChaCha8Rng::seed_from_u64(11))
    }

    #[test]
    fn binary_length_for_default_shape() {
        // 12 + 4 * (480 + 24 + 264 + 11) + 4
        assert_eq!(binary_len(20, 24, 11), 3132);
        assert_eq!(export_binary(&params()).unwrap().len(), 3132);
    }

    #[test]
    fn binary_header_layout() {
        let bytes = export_binary(&params()).unwrap();
        assert_eq!(&bytes[..4], b"GLVW");
        assert_eq!(&bytes[4..12], &[1, 0, 20, 0, 24, 0, 11, 0]);
    }

    #[test]
    fn binary_round_trip_is_quantization() {
        let p = params();
        let back = import_binary(&export_binary(&p).unwrap()).unwrap();
        assert_eq!(back, p.quantized());
    }

    #[test]
    fn binary_error_cases() {
        let bytes = export_binary(&params()).unwrap();
        let mut flipped = bytes.clone();
        flipped[100] ^= 0x40;
        assert!(matches!(import_binary(&flipped), Err(WeightsError::CrcMismatch { .. })));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert_eq!(import_binary(&magic), Err(WeightsError::BadMagic));
        assert!(matches!(
            import_binary(&bytes[..bytes.len() - 1]),
            Err(WeightsError::Truncated { .. })
        ));
        assert!(matches!(import_binary(&bytes[..5]), Err(WeightsError::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(import_binary(&long), Err(WeightsError::TrailingBytes { extra: 1 })));
        let mut version = bytes;
        version[4] = 2;
        assert_eq!(import_binary(&version), Err(WeightsError::UnsupportedVersion(2)));
    }

    #[test]
    fn firmware_text_structure_and_round_trip() {
        let p = params();
        let text = export_firmware_arrays(&p).unwrap();
        assert_eq!(text, export_firmware_arrays(&p).unwrap());
        assert!(text.contains("const int N_INPUT = 20;"));
        assert!(text.contains("const float W1[N_HIDDEN][N_INPUT] = {"));
        assert_eq!(text.matches("    {").count(), 24 + 11);
        let back = parse_firmware_arrays(&text).unwrap();
        for (a, b) in back.tensors().iter().zip(p.tensors()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() <= 1e-6);
            }
        }
        assert_eq!(back, p.quantized());
    }

    #[test]
    fn firmware_text_rejects_count_mismatch() {
        let text = export_firmware_arrays(&params()).unwrap();
        let broken = text.replace("const int N_OUTPUT = 11;", "const int N_OUTPUT = 12;");
        assert!(matches!(parse_firmware_arrays(&broken), Err(WeightsError::Text(_))));
    }
}
