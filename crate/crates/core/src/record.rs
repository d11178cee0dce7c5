//! The container wire format: CRC-protected record frames, the sample
//! payload encoding, header/footer/index codecs, and chunk planning.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! [header 32B] [frame]* [index] [footer 32B]
//! frame  = payload_len u64 | len_crc u32 | payload | payload_crc u32
//! index  = (offset u64, frame_len u64)  × record_count
//!       ++ (first_record u64, record_count u64) × chunk_count
//! footer = index_offset u64 | record_count u64 | chunk_count u64
//!        | index_crc u32 | "BRCE"
//! ```
//!
//! This module owns every byte of that layout; the `loadforge` crate adds
//! the file IO around it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::tensor::{Dtype, ImageTensor, PixelBuf};

pub const HEADER_MAGIC: &[u8; 4] = b"BRC1";
pub const FOOTER_MAGIC: &[u8; 4] = b"BRCE";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 32;
pub const FOOTER_LEN: u64 = 32;
/// Bytes a frame adds around its payload: len u64 + len_crc u32 + payload_crc u32.
pub const FRAME_OVERHEAD: u64 = 16;
pub const MIN_CHUNK_TARGET: u64 = 4096;
pub const DEFAULT_CHUNK_TARGET: u64 = 8 * 1024 * 1024;

// CRC-32/ISO-HDLC: reflected polynomial 0xEDB88320, init 0xFFFFFFFF,
// final XOR 0xFFFFFFFF (the zlib/PNG CRC). Slice-by-16: table[t][n] is the
// CRC of byte n followed by t zero bytes, letting the hot loop fold
// sixteen input bytes per iteration with four independent lookup chains.
// Every read re-checksums its payload, so this sits on the fetch path and
// its throughput shows up directly in epoch times.
const SLICES: usize = 16;

const fn build_crc_tables() -> [[u32; 256]; SLICES] {
    let mut tables = [[0u32; 256]; SLICES];
    let mut n = 0;
    while n < 256 {
        let mut c = n as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 == 1 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        tables[0][n] = c;
        n += 1;
    }
    let mut t = 1;
    while t < SLICES {
        let mut n = 0;
        while n < 256 {
            let prev = tables[t - 1][n];
            tables[t][n] = tables[0][(prev & 0xFF) as usize] ^ (prev >> 8);
            n += 1;
        }
        t += 1;
    }
    tables
}

static CRC_TABLES: [[u32; 256]; SLICES] = build_crc_tables();

#[inline]
fn fold_word(word: u32, base: usize) -> u32 {
    CRC_TABLES[base + 3][(word & 0xFF) as usize]
        ^ CRC_TABLES[base + 2][((word >> 8) & 0xFF) as usize]
        ^ CRC_TABLES[base + 1][((word >> 16) & 0xFF) as usize]
        ^ CRC_TABLES[base][(word >> 24) as usize]
}

pub fn crc32(data: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    let mut chunks = data.chunks_exact(SLICES);
    for chunk in &mut chunks {
        let w0 = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) ^ c;
        let w1 = u32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]);
        let w2 = u32::from_le_bytes([chunk[8], chunk[9], chunk[10], chunk[11]]);
        let w3 = u32::from_le_bytes([chunk[12], chunk[13], chunk[14], chunk[15]]);
        c = fold_word(w0, 12) ^ fold_word(w1, 8) ^ fold_word(w2, 4) ^ fold_word(w3, 0);
    }
    for &b in chunks.remainder() {
        c = CRC_TABLES[0][((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub chunk_target_bytes: u64,
}

impl ContainerHeader {
    pub fn encode(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[0..4].copy_from_slice(HEADER_MAGIC);
        out[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        out[8..16].copy_from_slice(&self.chunk_target_bytes.to_le_bytes());
        // bytes 16..32 reserved, zero
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CoreError> {
        if bytes.len() < HEADER_LEN as usize {
            return Err(CoreError::Truncated);
        }
        if &bytes[0..4] != HEADER_MAGIC {
            return Err(CoreError::Format("bad container magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CoreError::Format("unsupported container version"));
        }
        let chunk_target_bytes = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        if chunk_target_bytes < MIN_CHUNK_TARGET {
            return Err(CoreError::Format("chunk target below minimum"));
        }
        if bytes[16..32].iter().any(|&b| b != 0) {
            return Err(CoreError::Format("reserved header bytes not zero"));
        }
        Ok(ContainerHeader { chunk_target_bytes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerFooter {
    pub index_offset: u64,
    pub record_count: u64,
    pub chunk_count: u64,
    pub index_crc: u32,
}

impl ContainerFooter {
    pub fn encode(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[0..8].copy_from_slice(&self.index_offset.to_le_bytes());
        out[8..16].copy_from_slice(&self.record_count.to_le_bytes());
        out[16..24].copy_from_slice(&self.chunk_count.to_le_bytes());
        out[24..28].copy_from_slice(&self.index_crc.to_le_bytes());
        out[28..32].copy_from_slice(FOOTER_MAGIC);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CoreError> {
        if bytes.len() < FOOTER_LEN as usize {
            return Err(CoreError::Truncated);
        }
        if &bytes[28..32] != FOOTER_MAGIC {
            return Err(CoreError::Format("bad footer magic"));
        }
        Ok(ContainerFooter {
            index_offset: u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")),
            record_count: u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")),
            chunk_count: u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")),
            index_crc: u32::from_le_bytes(bytes[24..28].try_into().expect("4 bytes")),
        })
    }
}

/// Total frame length for a payload of `payload_len` bytes.
pub fn frame_len(payload_len: u64) -> u64 {
    FRAME_OVERHEAD + payload_len
}

pub fn encode_frame(payload: &[u8]) -> Vec<u8> {
    let len = payload.len() as u64;
    let mut out = Vec::with_capacity(payload.len() + FRAME_OVERHEAD as usize);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&crc32(&len.to_le_bytes()).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32(payload).to_le_bytes());
    out
}

/// Verify and split one frame starting at `bytes[0]`. Returns the payload
/// slice. The length CRC is checked before the length is trusted, so a
/// corrupted length field cannot cause a bogus read.
pub fn decode_frame(bytes: &[u8]) -> Result<&[u8], CoreError> {
    if bytes.len() < FRAME_OVERHEAD as usize {
        return Err(CoreError::Truncated);
    }
    let len_bytes = &bytes[0..8];
    let stored_len_crc = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if crc32(len_bytes) != stored_len_crc {
        return Err(CoreError::CorruptFrame);
    }
    let payload_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
    let total = FRAME_OVERHEAD as usize + payload_len;
    if bytes.len() < total {
        return Err(CoreError::Truncated);
    }
    let payload = &bytes[12..12 + payload_len];
    let stored_payload_crc =
        u32::from_le_bytes(bytes[12 + payload_len..total].try_into().expect("4 bytes"));
    if crc32(payload) != stored_payload_crc {
        return Err(CoreError::CorruptFrame);
    }
    Ok(payload)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordEntry {
    pub offset: u64,
    pub frame_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkEntry {
    pub first_record: u64,
    pub record_count: u64,
}

pub fn encode_index(records: &[RecordEntry], chunks: &[ChunkEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * (records.len() + chunks.len()));
    for r in records {
        out.extend_from_slice(&r.offset.to_le_bytes());
        out.extend_from_slice(&r.frame_len.to_le_bytes());
    }
    for c in chunks {
        out.extend_from_slice(&c.first_record.to_le_bytes());
        out.extend_from_slice(&c.record_count.to_le_bytes());
    }
    out
}

pub fn decode_index(
    bytes: &[u8],
    record_count: u64,
    chunk_count: u64,
) -> Result<(Vec<RecordEntry>, Vec<ChunkEntry>), CoreError> {
    let expected = 16usize
        .checked_mul((record_count + chunk_count) as usize)
        .ok_or(CoreError::Format("index size overflows"))?;
    if bytes.len() != expected {
        return Err(CoreError::Format("index size disagrees with footer counts"));
    }
    let mut records = Vec::with_capacity(record_count as usize);
    let mut pos = 0;
    for _ in 0..record_count {
        records.push(RecordEntry {
            offset: u64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes")),
            frame_len: u64::from_le_bytes(bytes[pos + 8..pos + 16].try_into().expect("8 bytes")),
        });
        pos += 16;
    }
    let mut chunks = Vec::with_capacity(chunk_count as usize);
    for _ in 0..chunk_count {
        chunks.push(ChunkEntry {
            first_record: u64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes")),
            record_count: u64::from_le_bytes(bytes[pos + 8..pos + 16].try_into().expect("8 bytes")),
        });
        pos += 16;
    }
    Ok((records, chunks))
}

/// Assign consecutive frames to chunks: append to the current chunk until
/// adding the next frame would push it past `target` bytes and the chunk is
/// non-empty. An oversized frame therefore gets a chunk of its own.
pub fn plan_chunks<I: IntoIterator<Item = u64>>(frame_lens: I, target: u64) -> Vec<ChunkEntry> {
    let mut chunks = Vec::new();
    let mut first = 0u64;
    let mut count = 0u64;
    let mut bytes = 0u64;
    let mut next_index = 0u64;
    for len in frame_lens {
        if count > 0 && bytes + len > target {
            chunks.push(ChunkEntry { first_record: first, record_count: count });
            first = next_index;
            count = 0;
            bytes = 0;
        }
        count += 1;
        bytes += len;
        next_index += 1;
    }
    if count > 0 {
        chunks.push(ChunkEntry { first_record: first, record_count: count });
    }
    chunks
}

pub const KIND_TENSOR: u8 = 0;
pub const KIND_ENCODED: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum PayloadBody {
    /// kind 0: a decoded tensor stored raw.
    Tensor(ImageTensor),
    /// kind 1: opaque encoded bytes (PPM in this corpus).
    Encoded(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePayload {
    pub key: String,
    pub label: i64,
    pub body: PayloadBody,
}

impl SamplePayload {
    pub fn encode(&self) -> Result<Vec<u8>, CoreError> {
        if self.key.len() > u32::MAX as usize {
            return Err(CoreError::InvalidArgument("sample key too long"));
        }
        let mut out = Vec::with_capacity(self.key.len() + 32);
        out.extend_from_slice(&(self.key.len() as u32).to_le_bytes());
        out.extend_from_slice(self.key.as_bytes());
        out.extend_from_slice(&self.label.to_le_bytes());
        match &self.body {
            PayloadBody::Tensor(img) => {
                out.push(KIND_TENSOR);
                encode_tensor_body(img, &mut out);
            }
            PayloadBody::Encoded(bytes) => {
                out.push(KIND_ENCODED);
                out.extend_from_slice(bytes);
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CoreError> {
        if bytes.len() < 4 {
            return Err(CoreError::Truncated);
        }
        let key_len = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let mut pos = 4;
        if bytes.len() - pos < key_len {
            return Err(CoreError::Truncated);
        }
        let key = core::str::from_utf8(&bytes[pos..pos + key_len])
            .map_err(|_| CoreError::Payload("key is not valid UTF-8"))?
            .into();
        pos += key_len;
        if bytes.len() - pos < 9 {
            return Err(CoreError::Truncated);
        }
        let label = i64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes"));
        pos += 8;
        let kind = bytes[pos];
        pos += 1;
        let body = match kind {
            KIND_TENSOR => PayloadBody::Tensor(decode_tensor_body(&bytes[pos..])?),
            KIND_ENCODED => PayloadBody::Encoded(bytes[pos..].to_vec()),
            _ => return Err(CoreError::Payload("unknown payload kind")),
        };
        Ok(SamplePayload { key, label, body })
    }
}

/// Raw-tensor body encoding (shared verbatim with the ".brt" file format):
/// height u32 | width u32 | channels u32 | dtype u8 | pixel bytes.
pub fn encode_tensor_body(img: &ImageTensor, out: &mut Vec<u8>) {
    out.extend_from_slice(&img.height().to_le_bytes());
    out.extend_from_slice(&img.width().to_le_bytes());
    out.extend_from_slice(&img.channels().to_le_bytes());
    out.push(img.dtype().code());
    match img.data() {
        PixelBuf::U8(v) => out.extend_from_slice(v),
        PixelBuf::F32(v) => {
            out.reserve(v.len() * 4);
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
}

pub fn decode_tensor_body(bytes: &[u8]) -> Result<ImageTensor, CoreError> {
    if bytes.len() < 13 {
        return Err(CoreError::Truncated);
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let width = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let channels = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let dtype = Dtype::from_code(bytes[12])?;
    let values = height as usize * width as usize * channels as usize;
    let body = &bytes[13..];
    let need = values * dtype.size();
    if body.len() < need {
        return Err(CoreError::Truncated);
    }
    if body.len() > need {
        return Err(CoreError::Payload("trailing bytes after pixel data"));
    }
    match dtype {
        Dtype::U8 => ImageTensor::from_u8(height, width, channels, body.to_vec()),
        Dtype::F32 => {
            let mut data = Vec::with_capacity(values);
            for chunk in body.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
            }
            ImageTensor::from_f32(height, width, channels, data)
        }
    }
}
