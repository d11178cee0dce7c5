//! Binary PPM (P6) codec. PPM keeps the corpus free of image-codec
//! dependencies while still exercising a real decode step per sample.

use alloc::vec::Vec;

use crate::error::CoreError;
use crate::tensor::{Dtype, ImageTensor};

fn is_ppm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n')
}

/// Skip whitespace and `#`-to-end-of-line comments. Returns how many bytes
/// were consumed.
fn skip_separators(bytes: &[u8], pos: &mut usize) -> usize {
    let start = *pos;
    while *pos < bytes.len() {
        match bytes[*pos] {
            b if is_ppm_space(b) => *pos += 1,
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
    *pos - start
}

fn read_decimal(bytes: &[u8], pos: &mut usize) -> Result<u32, CoreError> {
    if *pos >= bytes.len() {
        return Err(CoreError::Truncated);
    }
    if !bytes[*pos].is_ascii_digit() {
        return Err(CoreError::Format("expected decimal header field"));
    }
    let mut value: u64 = 0;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        value = value * 10 + (bytes[*pos] - b'0') as u64;
        if value > u32::MAX as u64 {
            return Err(CoreError::Format("header field out of range"));
        }
        *pos += 1;
    }
    Ok(value as u32)
}

/// Decode a binary PPM ("P6") into a u8 RGB tensor.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImageTensor, CoreError> {
    if bytes.len() < 2 {
        return Err(CoreError::Truncated);
    }
    if &bytes[..2] != b"P6" {
        return Err(CoreError::Format("not a binary PPM (P6) header"));
    }
    let mut pos = 2;
    if skip_separators(bytes, &mut pos) == 0 {
        return Err(CoreError::Format("expected separator after magic"));
    }
    let width = read_decimal(bytes, &mut pos)?;
    if skip_separators(bytes, &mut pos) == 0 {
        return Err(CoreError::Format("expected separator after width"));
    }
    let height = read_decimal(bytes, &mut pos)?;
    if skip_separators(bytes, &mut pos) == 0 {
        return Err(CoreError::Format("expected separator after height"));
    }
    let maxval = read_decimal(bytes, &mut pos)?;
    // Exactly one whitespace byte separates the header from pixel data.
    // Checked before the maxval value so that a header cut off mid-number
    // ("…\n25") reads as truncation, not as an unsupported depth.
    if pos >= bytes.len() {
        return Err(CoreError::Truncated);
    }
    if maxval != 255 {
        return Err(CoreError::Unsupported("only maxval 255 is supported"));
    }
    if !is_ppm_space(bytes[pos]) {
        return Err(CoreError::Format("expected single whitespace before pixels"));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(CoreError::Format("image dimensions must be positive"));
    }
    let need = height as usize * width as usize * 3;
    if bytes.len() - pos < need {
        return Err(CoreError::Truncated);
    }
    ImageTensor::from_u8(height, width, 3, bytes[pos..pos + need].to_vec())
}

/// Encode a u8 RGB tensor as binary PPM.
pub fn encode_ppm(img: &ImageTensor) -> Result<Vec<u8>, CoreError> {
    if img.dtype() != Dtype::U8 || img.channels() != 3 {
        return Err(CoreError::InvalidArgument("PPM encoding needs a u8 RGB image"));
    }
    let mut out = Vec::with_capacity(img.value_count() + 32);
    out.extend_from_slice(b"P6\n");
    push_decimal(&mut out, img.width());
    out.push(b' ');
    push_decimal(&mut out, img.height());
    out.extend_from_slice(b"\n255\n");
    out.extend_from_slice(img.as_u8().expect("checked u8 above"));
    Ok(out)
}

fn push_decimal(out: &mut Vec<u8>, mut v: u32) {
    let mut digits = [0u8; 10];
    let mut n = 0;
    loop {
        digits[n] = b'0' + (v % 10) as u8;
        v /= 10;
        n += 1;
        if v == 0 {
            break;
        }
    }
    while n > 0 {
        n -= 1;
        out.push(digits[n]);
    }
}
