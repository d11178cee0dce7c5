//! File IO for the record container: single-pass writing, index-backed
//! random access, chunk iteration, and full verification.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use loadforge_core::record::{
    crc32, decode_frame, decode_index, encode_frame, encode_index, plan_chunks, ChunkEntry,
    ContainerFooter, ContainerHeader, RecordEntry, SamplePayload, FOOTER_LEN, HEADER_LEN,
    MIN_CHUNK_TARGET,
};
use loadforge_core::CoreError;

use crate::error::{Error, Result};

/// Byte-range reads over some storage. The container reader is written
/// against this so tests can count and bound the ranges an operation
/// touches; `File` is the real implementation (pread, no shared cursor,
/// safe for concurrent readers).
pub trait RangeReader: Send + Sync {
    fn len(&self) -> io::Result<u64>;
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()>;
}

impl RangeReader for File {
    fn len(&self) -> io::Result<u64> {
        Ok(self.metadata()?.len())
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        use std::os::unix::fs::FileExt;
        self.read_exact_at(buf, offset)
    }
}

impl RangeReader for Vec<u8> {
    fn len(&self) -> io::Result<u64> {
        Ok(Vec::len(self) as u64)
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        let start = offset as usize;
        let end = start.checked_add(buf.len()).filter(|&e| e <= Vec::len(self)).ok_or_else(
            || io::Error::new(io::ErrorKind::UnexpectedEof, "read past end of buffer"),
        )?;
        buf.copy_from_slice(&self[start..end]);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerSummary {
    pub record_count: u64,
    pub chunk_count: u64,
    pub total_bytes: u64,
}

/// Write samples into a fresh container file:
/// header | frames | index | footer, assigning chunks greedily by byte size.
pub fn write_container<I>(samples: I, chunk_target_bytes: u64, destination: &Path) -> Result<ContainerSummary>
where
    I: IntoIterator<Item = SamplePayload>,
{
    if chunk_target_bytes < MIN_CHUNK_TARGET {
        return Err(Error::InvalidArgument(format!(
            "chunk target must be at least {MIN_CHUNK_TARGET} bytes"
        )));
    }
    let file = File::create(destination)?;
    let mut out = BufWriter::new(file);
    let header = ContainerHeader { chunk_target_bytes };
    out.write_all(&header.encode())?;

    let mut seen_keys: HashSet<String> = HashSet::new();
    let mut records: Vec<RecordEntry> = Vec::new();
    let mut offset = HEADER_LEN;
    for sample in samples {
        if !seen_keys.insert(sample.key.clone()) {
            return Err(Error::DuplicateKey(sample.key));
        }
        let payload = sample.encode()?;
        let frame = encode_frame(&payload);
        out.write_all(&frame)?;
        records.push(RecordEntry { offset, frame_len: frame.len() as u64 });
        offset += frame.len() as u64;
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }

    let chunks = plan_chunks(records.iter().map(|r| r.frame_len), chunk_target_bytes);
    let index = encode_index(&records, &chunks);
    out.write_all(&index)?;
    let footer = ContainerFooter {
        index_offset: offset,
        record_count: records.len() as u64,
        chunk_count: chunks.len() as u64,
        index_crc: crc32(&index),
    };
    out.write_all(&footer.encode())?;
    out.flush()?;

    Ok(ContainerSummary {
        record_count: records.len() as u64,
        chunk_count: chunks.len() as u64,
        total_bytes: offset + index.len() as u64 + FOOTER_LEN,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub ok: bool,
    pub corrupt_records: Vec<u64>,
}

/// An open container: header, footer, and index resident in memory; record
/// payloads read (and CRC-checked) on demand. File-backed handles map the
/// file read-only so a fetch costs no syscall and no scratch buffer — just
/// the CRC pass and the payload copy; other sources go through `read_at`
/// (pread for `File`), so one handle serves any number of concurrent
/// readers either way.
pub struct ContainerHandle {
    reader: Arc<dyn RangeReader>,
    map: Option<memmap2::Mmap>,
    header: ContainerHeader,
    records: Vec<RecordEntry>,
    chunks: Vec<ChunkEntry>,
}

impl ContainerHandle {
    /// Mutating a container while a handle is open is outside the format's
    /// contract — rewrites must reopen. (That is also what makes the
    /// read-only map sound; if mapping fails, reads fall back to `pread`.)
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let map = unsafe { memmap2::Mmap::map(&file) }.ok();
        let mut handle = Self::from_reader(Arc::new(file))?;
        // Attach the map only if every validated record range fits it, so
        // slicing below can never go out of bounds.
        handle.map = map.filter(|m| {
            handle.records.last().is_none_or(|r| r.offset + r.frame_len <= m.len() as u64)
        });
        Ok(handle)
    }

    /// Open from any byte-range source. Reads exactly three ranges: header,
    /// footer, index — never the payload region.
    pub fn from_reader(reader: Arc<dyn RangeReader>) -> Result<Self> {
        let len = reader.len()?;
        if len < HEADER_LEN + FOOTER_LEN {
            return Err(Error::TruncatedFile);
        }
        let mut header_bytes = [0u8; HEADER_LEN as usize];
        reader.read_at(0, &mut header_bytes)?;
        let header = ContainerHeader::decode(&header_bytes).map_err(map_meta_error)?;

        let mut footer_bytes = [0u8; FOOTER_LEN as usize];
        reader.read_at(len - FOOTER_LEN, &mut footer_bytes)?;
        // The header already proved this is one of our containers, so a tail
        // that no longer decodes as a footer means bytes were lost.
        let footer = ContainerFooter::decode(&footer_bytes).map_err(|_| Error::TruncatedFile)?;

        let index_end = len - FOOTER_LEN;
        let expected_index =
            16u64.checked_mul(footer.record_count + footer.chunk_count).ok_or(Error::CorruptIndex)?;
        if footer.index_offset < HEADER_LEN
            || footer.index_offset > index_end
            || index_end - footer.index_offset != expected_index
        {
            // The footer decoded but its geometry does not fit the file:
            // bytes are missing (or the offsets lie, indistinguishable here).
            return Err(Error::TruncatedFile);
        }
        let mut index = vec![0u8; expected_index as usize];
        reader.read_at(footer.index_offset, &mut index)?;
        if crc32(&index) != footer.index_crc {
            return Err(Error::CorruptIndex);
        }
        let (records, chunks) = decode_index(&index, footer.record_count, footer.chunk_count)
            .map_err(map_meta_error)?;

        // Structural sanity on the decoded index.
        let mut prev_end = HEADER_LEN;
        for (i, r) in records.iter().enumerate() {
            if i == 0 && r.offset != HEADER_LEN {
                return Err(Error::Format("first record must follow the header".into()));
            }
            if r.offset < prev_end || r.offset + r.frame_len > footer.index_offset {
                return Err(Error::Format("record offsets out of order or out of bounds".into()));
            }
            prev_end = r.offset + r.frame_len;
        }
        let mut next_first = 0u64;
        for c in &chunks {
            if c.first_record != next_first || c.record_count == 0 {
                return Err(Error::Format("chunk entries do not partition the records".into()));
            }
            next_first += c.record_count;
        }
        if next_first != footer.record_count {
            return Err(Error::Format("chunk entries do not cover all records".into()));
        }

        Ok(ContainerHandle { reader, map: None, header, records, chunks })
    }

    pub fn record_count(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn chunk_count(&self) -> u64 {
        self.chunks.len() as u64
    }

    pub fn chunk_target_bytes(&self) -> u64 {
        self.header.chunk_target_bytes
    }

    pub fn record_entries(&self) -> &[RecordEntry] {
        &self.records
    }

    pub fn chunk_entries(&self) -> &[ChunkEntry] {
        &self.chunks
    }

    /// Run `f` over one contiguous byte range, borrowing from the map when
    /// present and reading through the `RangeReader` otherwise. Mapped
    /// ranges were bounds-checked at open.
    fn with_range<T>(&self, offset: u64, len: u64, f: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
        if let Some(map) = &self.map {
            let lo = offset as usize;
            f(&map[lo..lo + len as usize])
        } else {
            let mut buf = vec![0u8; len as usize];
            self.reader.read_at(offset, &mut buf)?;
            f(&buf)
        }
    }

    fn check_record_index(&self, index: u64) -> Result<()> {
        if index >= self.record_count() {
            return Err(Error::IndexOutOfRange { index, len: self.record_count() });
        }
        Ok(())
    }

    /// Random access to one record; both frame CRCs verified per call.
    pub fn read_record(&self, index: u64) -> Result<SamplePayload> {
        self.check_record_index(index)?;
        let entry = self.records[index as usize];
        self.with_range(entry.offset, entry.frame_len, |frame| {
            let payload = decode_frame(frame).map_err(|e| match e {
                CoreError::CorruptFrame | CoreError::Truncated => Error::CorruptRecord { index },
                other => Error::Core(other),
            })?;
            SamplePayload::decode(payload).map_err(Error::Core)
        })
    }

    /// All records of one chunk, via a single contiguous read of the
    /// chunk's byte range.
    pub fn iterate_chunk(&self, chunk_id: u64) -> Result<Vec<SamplePayload>> {
        if chunk_id >= self.chunk_count() {
            return Err(Error::IndexOutOfRange { index: chunk_id, len: self.chunk_count() });
        }
        let chunk = self.chunks[chunk_id as usize];
        let first = self.records[chunk.first_record as usize];
        let last = self.records[(chunk.first_record + chunk.record_count - 1) as usize];
        let start = first.offset;
        let total = last.offset + last.frame_len - start;
        self.with_range(start, total, |buf| {
            let mut out = Vec::with_capacity(chunk.record_count as usize);
            for i in chunk.first_record..chunk.first_record + chunk.record_count {
                let entry = self.records[i as usize];
                let lo = (entry.offset - start) as usize;
                let hi = lo + entry.frame_len as usize;
                let payload = decode_frame(&buf[lo..hi]).map_err(|e| match e {
                    CoreError::CorruptFrame | CoreError::Truncated => {
                        Error::CorruptRecord { index: i }
                    }
                    other => Error::Core(other),
                })?;
                out.push(SamplePayload::decode(payload).map_err(Error::Core)?);
            }
            Ok(out)
        })
    }

    /// Check every frame's CRCs. Indices come out ascending because records
    /// are scanned in index order.
    pub fn verify(&self) -> Result<VerificationReport> {
        let mut corrupt = Vec::new();
        for index in 0..self.record_count() {
            let entry = self.records[index as usize];
            let bad = self
                .with_range(entry.offset, entry.frame_len, |frame| Ok(decode_frame(frame).is_err()))?;
            if bad {
                corrupt.push(index);
            }
        }
        Ok(VerificationReport { ok: corrupt.is_empty(), corrupt_records: corrupt })
    }
}

impl std::fmt::Debug for ContainerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContainerHandle")
            .field("records", &self.records.len())
            .field("chunks", &self.chunks.len())
            .field("chunk_target_bytes", &self.header.chunk_target_bytes)
            .finish()
    }
}

/// Metadata decode failures surface as container-level errors, keeping the
/// truncation/format distinction.
fn map_meta_error(e: CoreError) -> Error {
    match e {
        CoreError::Truncated => Error::TruncatedFile,
        CoreError::Format(what) => Error::Format(what.to_string()),
        other => Error::Core(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use loadforge_core::record::PayloadBody;
    use loadforge_core::rng::SampleRng;
    use loadforge_core::tensor::ImageTensor;
    use std::fs;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Mutex;

    fn sample(key: &str, label: i64, body: Vec<u8>) -> SamplePayload {
        SamplePayload { key: key.to_string(), label, body: PayloadBody::Encoded(body) }
    }

    fn random_samples(n: usize, max_len: u64, seed: u64) -> Vec<SamplePayload> {
        let mut rng = SampleRng::new(seed);
        (0..n)
            .map(|i| {
                let len = rng.next_below(max_len + 1) as usize;
                let body: Vec<u8> = (0..len).map(|_| rng.next_u64() as u8).collect();
                sample(&format!("class/{i:05}"), (i % 7) as i64, body)
            })
            .collect()
    }

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn roundtrip_in_index_order() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let samples = random_samples(20, 500, 1);
        let summary = write_container(samples.clone(), MIN_CHUNK_TARGET, &path).unwrap();
        assert_eq!(summary.record_count, 20);
        assert_eq!(summary.total_bytes, fs::metadata(&path).unwrap().len());

        let handle = ContainerHandle::open(&path).unwrap();
        assert_eq!(handle.record_count(), 20);
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(&handle.read_record(i as u64).unwrap(), s);
        }
        // Repeated reads are side-effect-free.
        assert_eq!(&handle.read_record(3).unwrap(), &samples[3]);
        assert_eq!(&handle.read_record(3).unwrap(), &samples[3]);
    }

    #[test]
    fn roundtrip_tensor_payloads() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let img = ImageTensor::from_u8(2, 3, 3, (0..18).collect()).unwrap();
        let fimg = ImageTensor::from_f32(1, 2, 3, vec![0.5, -1.0, 255.0, 0.0, -0.0, 1e-20]).unwrap();
        let samples = vec![
            SamplePayload { key: "a".into(), label: 0, body: PayloadBody::Tensor(img) },
            SamplePayload { key: "b".into(), label: 1, body: PayloadBody::Tensor(fimg) },
        ];
        write_container(samples.clone(), MIN_CHUNK_TARGET, &path).unwrap();
        let handle = ContainerHandle::open(&path).unwrap();
        assert_eq!(handle.read_record(0).unwrap(), samples[0]);
        assert_eq!(handle.read_record(1).unwrap(), samples[1]);
    }

    #[test]
    fn write_rejects_duplicates_and_empty() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let dup = vec![sample("k", 0, vec![1]), sample("k", 1, vec![2])];
        assert!(matches!(
            write_container(dup, MIN_CHUNK_TARGET, &path),
            Err(Error::DuplicateKey(k)) if k == "k"
        ));
        assert!(matches!(
            write_container(Vec::new(), MIN_CHUNK_TARGET, &path),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            write_container(vec![sample("k", 0, vec![1])], 100, &path),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn chunking_matches_the_spec_examples() {
        let dir = tmp();
        let path = dir.path().join("t.brc");

        // One 10-byte payload → frame 26 bytes → one chunk.
        let summary =
            write_container(vec![sample("a", 0, vec![0; 10])], MIN_CHUNK_TARGET, &path).unwrap();
        assert_eq!((summary.record_count, summary.chunk_count), (1, 1));

        // Three 3000-byte frames, target 4096 → three chunks. Frame length
        // is payload + 16, so use 2984-byte payloads.
        let samples: Vec<_> = (0..3).map(|i| sample(&format!("s{i}"), 0, vec![7; 2984])).collect();
        let summary = write_container(samples, 4096, &path).unwrap();
        assert_eq!((summary.record_count, summary.chunk_count), (3, 3));

        // One oversized frame → its own (single) chunk.
        let summary =
            write_container(vec![sample("big", 0, vec![1; 9984])], 4096, &path).unwrap();
        assert_eq!((summary.record_count, summary.chunk_count), (1, 1));

        let handle = ContainerHandle::open(&path).unwrap();
        assert_eq!(handle.chunk_count(), 1);
        assert_eq!(handle.read_record(0).unwrap().key, "big");
    }

    #[test]
    fn open_rejects_truncation_and_bad_magic() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        write_container(random_samples(5, 100, 2), MIN_CHUNK_TARGET, &path).unwrap();

        let whole = fs::read(&path).unwrap();

        // Last byte removed → footer unreadable as written.
        let clipped = path.with_extension("clipped");
        fs::write(&clipped, &whole[..whole.len() - 1]).unwrap();
        assert!(matches!(ContainerHandle::open(&clipped), Err(Error::TruncatedFile)));

        // Tiny file.
        fs::write(&clipped, b"BRC1").unwrap();
        assert!(matches!(ContainerHandle::open(&clipped), Err(Error::TruncatedFile)));

        // Broken header magic.
        let mut bad = whole.clone();
        bad[0] = b'Z';
        fs::write(&clipped, &bad).unwrap();
        assert!(matches!(ContainerHandle::open(&clipped), Err(Error::Format(_))));

        // Unsupported version.
        let mut bad = whole.clone();
        bad[4] = 9;
        fs::write(&clipped, &bad).unwrap();
        assert!(matches!(ContainerHandle::open(&clipped), Err(Error::Format(_))));

        // Flipped index byte → CRC mismatch on open.
        let handle = ContainerHandle::open(&path).unwrap();
        drop(handle);
        let footer = ContainerFooter::decode(&whole[whole.len() - 32..]).unwrap();
        let mut bad = whole.clone();
        bad[footer.index_offset as usize] ^= 0x01;
        fs::write(&clipped, &bad).unwrap();
        assert!(matches!(ContainerHandle::open(&clipped), Err(Error::CorruptIndex)));

        // Flipped stored index_crc itself.
        let mut bad = whole.clone();
        let crc_pos = whole.len() - 32 + 24;
        bad[crc_pos] ^= 0xFF;
        fs::write(&clipped, &bad).unwrap();
        assert!(matches!(ContainerHandle::open(&clipped), Err(Error::CorruptIndex)));
    }

    #[test]
    fn read_record_bounds_and_corruption() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let samples = random_samples(6, 64, 3);
        write_container(samples.clone(), MIN_CHUNK_TARGET, &path).unwrap();
        let handle = ContainerHandle::open(&path).unwrap();

        assert!(matches!(
            handle.read_record(6),
            Err(Error::IndexOutOfRange { index: 6, len: 6 })
        ));

        // Corrupt one payload byte of record 4 on disk; only it fails.
        let entry = handle.record_entries()[4];
        let mut bytes = fs::read(&path).unwrap();
        bytes[(entry.offset + 12) as usize] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        let handle = ContainerHandle::open(&path).unwrap();
        assert!(matches!(handle.read_record(4), Err(Error::CorruptRecord { index: 4 })));
        assert_eq!(handle.read_record(3).unwrap(), samples[3]);
    }

    #[test]
    fn iterate_chunk_concatenation_equals_per_record_reads() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let samples = random_samples(40, 700, 4);
        write_container(samples.clone(), MIN_CHUNK_TARGET, &path).unwrap();
        let handle = ContainerHandle::open(&path).unwrap();
        assert!(handle.chunk_count() > 1, "want a multi-chunk container for this test");

        let mut concat = Vec::new();
        for c in 0..handle.chunk_count() {
            concat.extend(handle.iterate_chunk(c).unwrap());
        }
        let direct: Vec<_> =
            (0..handle.record_count()).map(|i| handle.read_record(i).unwrap()).collect();
        assert_eq!(concat, direct);
        assert_eq!(concat, samples);

        assert!(matches!(
            handle.iterate_chunk(handle.chunk_count()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn single_chunk_iteration_is_write_order() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let samples = random_samples(8, 32, 5);
        write_container(samples.clone(), 1 << 20, &path).unwrap();
        let handle = ContainerHandle::open(&path).unwrap();
        assert_eq!(handle.chunk_count(), 1);
        assert_eq!(handle.iterate_chunk(0).unwrap(), samples);
    }

    #[test]
    fn verify_reports_corruption_in_ascending_order() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        write_container(random_samples(10, 128, 6), MIN_CHUNK_TARGET, &path).unwrap();

        let handle = ContainerHandle::open(&path).unwrap();
        let report = handle.verify().unwrap();
        assert!(report.ok);
        assert!(report.corrupt_records.is_empty());

        // Corrupt records 7 then 2 (patched out of order on purpose).
        let entries: Vec<_> = handle.record_entries().to_vec();
        let mut bytes = fs::read(&path).unwrap();
        for i in [7usize, 2] {
            bytes[(entries[i].offset + 12) as usize] ^= 0x10;
        }
        fs::write(&path, &bytes).unwrap();
        let handle = ContainerHandle::open(&path).unwrap();
        let report = handle.verify().unwrap();
        assert!(!report.ok);
        assert_eq!(report.corrupt_records, vec![2, 7]);
    }

    #[test]
    fn random_bit_flips_in_frames_are_always_detected() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let samples = random_samples(30, 256, 7);
        write_container(samples, MIN_CHUNK_TARGET, &path).unwrap();
        let pristine = fs::read(&path).unwrap();
        let handle = ContainerHandle::open(&path).unwrap();
        let entries: Vec<_> = handle.record_entries().to_vec();
        drop(handle);

        let mut rng = SampleRng::new(0xBAD_B17);
        for _ in 0..200 {
            let rec = rng.next_below(entries.len() as u64);
            let entry = entries[rec as usize];
            // Restrict flips to the length field and payload, the spec'd
            // protected ranges (the CRC fields themselves also detect, but
            // the property is about these bytes).
            let payload_len = entry.frame_len - 16;
            let rel = if payload_len == 0 || rng.next_below(2) == 0 {
                rng.next_below(8) // length field
            } else {
                12 + rng.next_below(payload_len) // payload
            };
            let bit = rng.next_below(8) as u8;

            let mut bytes = pristine.clone();
            bytes[(entry.offset + rel) as usize] ^= 1 << bit;
            fs::write(&path, &bytes).unwrap();
            let handle = ContainerHandle::open(&path).unwrap();
            let report = handle.verify().unwrap();
            assert_eq!(report.corrupt_records, vec![rec], "flip at record {rec} byte {rel} bit {bit}");
            assert!(matches!(
                handle.read_record(rec),
                Err(Error::CorruptRecord { .. })
            ));
        }
    }

    /// Wraps a reader, recording every (offset, len) range touched.
    struct Instrumented {
        inner: Vec<u8>,
        reads: Mutex<Vec<(u64, u64)>>,
        bytes_read: AtomicU64,
    }

    impl RangeReader for Instrumented {
        fn len(&self) -> io::Result<u64> {
            RangeReader::len(&self.inner)
        }

        fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
            self.reads.lock().unwrap().push((offset, buf.len() as u64));
            self.bytes_read.fetch_add(buf.len() as u64, Ordering::Relaxed);
            self.inner.read_at(offset, buf)
        }
    }

    #[test]
    fn open_touches_only_header_footer_index() {
        let dir = tmp();
        // Two containers with identical record and chunk counts but a 2000×
        // payload-size gap: open must read the same byte ranges (metadata
        // only), i.e. cost is O(index), not O(payload).
        let mut open_cost = Vec::new();
        for (tag, payload) in [("small", 10u64), ("large", 20_000)] {
            let path = dir.path().join(format!("{tag}.brc"));
            let samples: Vec<_> = (0..50)
                .map(|i| sample(&format!("s{i}"), 0, vec![i as u8; payload as usize]))
                .collect();
            write_container(samples, 1 << 20, &path).unwrap();
            let reader = Arc::new(Instrumented {
                inner: fs::read(&path).unwrap(),
                reads: Mutex::new(Vec::new()),
                bytes_read: AtomicU64::new(0),
            });
            let file_len = RangeReader::len(&*reader).unwrap();
            let handle = ContainerHandle::from_reader(reader.clone()).unwrap();
            assert_eq!(handle.record_count(), 50);

            let reads = reader.reads.lock().unwrap().clone();
            // Exactly three reads: header, footer, index.
            assert_eq!(reads.len(), 3);
            assert_eq!(reads[0], (0, HEADER_LEN));
            assert_eq!(reads[1], (file_len - FOOTER_LEN, FOOTER_LEN));
            assert_eq!(handle.chunk_count(), 1);
            let index_len = 16 * (50 + handle.chunk_count());
            assert_eq!(reads[2], (file_len - FOOTER_LEN - index_len, index_len));
            let cost = reader.bytes_read.load(Ordering::Relaxed);
            assert_eq!(cost, HEADER_LEN + FOOTER_LEN + index_len);
            open_cost.push(cost);
        }
        // Same metadata footprint regardless of payload bytes.
        assert_eq!(open_cost[0], open_cost[1]);
    }

    #[test]
    fn concurrent_readers_share_a_handle() {
        let dir = tmp();
        let path = dir.path().join("t.brc");
        let samples = random_samples(64, 300, 8);
        write_container(samples.clone(), MIN_CHUNK_TARGET, &path).unwrap();
        let handle = Arc::new(ContainerHandle::open(&path).unwrap());

        let mut joins = Vec::new();
        for t in 0..4u64 {
            let h = Arc::clone(&handle);
            let expect = samples.clone();
            joins.push(std::thread::spawn(move || {
                let mut rng = SampleRng::new(t);
                for _ in 0..200 {
                    let i = rng.next_below(64);
                    assert_eq!(h.read_record(i).unwrap(), expect[i as usize]);
                }
            }));
        }
        for j in joins {
            j.join().unwrap();
        }
    }
}
