//! Dataset backends: class-per-folder file trees and packed containers,
//! behind one `fetch(index)` interface so the pipeline never cares which
//! one it is reading.

use std::fs;
use std::path::{Path, PathBuf};

use loadforge_core::ppm::decode_ppm;
use loadforge_core::record::{decode_tensor_body, PayloadBody, SamplePayload};
use loadforge_core::tensor::ImageTensor;

use crate::container::{write_container, ContainerHandle, ContainerSummary};
use crate::error::{Error, Result};

/// One labelled image, fully decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub key: String,
    pub label: i64,
    pub image: ImageTensor,
}

/// One row of a file-per-sample manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub key: String,
    pub rel_path: PathBuf,
    pub label: i64,
}

/// Where samples come from. Read-only once built; `fetch` is safe to call
/// from any number of worker threads concurrently.
#[derive(Debug)]
pub enum DatasetSource {
    FilePerSample { root: PathBuf, manifest: Vec<ManifestEntry> },
    Container(ContainerHandle),
}

/// Build a file-per-sample source from a class-per-subdirectory tree:
/// `root/<class>/<file>.{ppm,brt}`. Labels are the rank of the class
/// directory name in sorted order; keys are `<class>/<file_stem>`; the
/// manifest is sorted lexicographically by key.
pub fn scan_directory(root: &Path) -> Result<DatasetSource> {
    let mut class_dirs: Vec<String> = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            if let Some(name) = entry.file_name().to_str() {
                class_dirs.push(name.to_string());
            }
        }
    }
    class_dirs.sort();

    let mut manifest: Vec<ManifestEntry> = Vec::new();
    for (label, class) in class_dirs.iter().enumerate() {
        for entry in fs::read_dir(root.join(class))? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let path = PathBuf::from(entry.file_name());
            let recognized = matches!(
                path.extension().and_then(|e| e.to_str()),
                Some("ppm") | Some("brt")
            );
            if !recognized {
                continue;
            }
            let stem = match path.file_stem().and_then(|s| s.to_str()) {
                Some(s) => s.to_string(),
                None => continue,
            };
            manifest.push(ManifestEntry {
                key: format!("{class}/{stem}"),
                rel_path: Path::new(class).join(&path),
                label: label as i64,
            });
        }
    }
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // Key ties (same stem, different extension) still sort deterministically.
    manifest.sort_by(|a, b| a.key.cmp(&b.key).then_with(|| a.rel_path.cmp(&b.rel_path)));
    Ok(DatasetSource::FilePerSample { root: root.to_path_buf(), manifest })
}

/// Decode one image file's bytes by its extension.
fn decode_file(rel_path: &Path, bytes: &[u8]) -> Result<ImageTensor> {
    match rel_path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => Ok(decode_ppm(bytes)?),
        Some("brt") => Ok(decode_tensor_body(bytes)?),
        _ => Err(Error::Format(format!("unrecognized sample file: {}", rel_path.display()))),
    }
}

impl DatasetSource {
    pub fn open_container(path: &Path) -> Result<Self> {
        Ok(DatasetSource::Container(ContainerHandle::open(path)?))
    }

    pub fn len(&self) -> u64 {
        match self {
            DatasetSource::FilePerSample { manifest, .. } => manifest.len() as u64,
            DatasetSource::Container(handle) => handle.record_count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Read and decode one sample. File variant: open/read/decode/close one
    /// file. Container variant: one CRC-checked record read.
    pub fn fetch(&self, index: u64) -> Result<Sample> {
        match self {
            DatasetSource::FilePerSample { root, manifest } => {
                let entry = manifest
                    .get(index as usize)
                    .ok_or(Error::IndexOutOfRange { index, len: manifest.len() as u64 })?;
                let attach = |e: Error| e.for_sample(&entry.key);
                let bytes = fs::read(root.join(&entry.rel_path)).map_err(|e| attach(e.into()))?;
                let image = decode_file(&entry.rel_path, &bytes).map_err(attach)?;
                Ok(Sample { key: entry.key.clone(), label: entry.label, image })
            }
            DatasetSource::Container(handle) => {
                // A corrupt record has no recoverable key; that error keeps
                // its record index instead.
                let payload = handle.read_record(index)?;
                let SamplePayload { key, label, body } = payload;
                let image = match body {
                    PayloadBody::Tensor(img) => img,
                    PayloadBody::Encoded(bytes) => {
                        decode_ppm(&bytes).map_err(|e| Error::from(e).for_sample(&key))?
                    }
                };
                Ok(Sample { key, label, image })
            }
        }
    }
}

/// Scan a directory and pack it into a container at `destination`, in
/// manifest (key) order so indices line up across backends. With
/// `store_encoded`, PPM files keep their encoded bytes (kind 1); raw
/// tensors, and everything when `store_encoded` is off, are stored decoded
/// (kind 0).
pub fn pack_directory(
    root: &Path,
    destination: &Path,
    chunk_target_bytes: u64,
    store_encoded: bool,
) -> Result<ContainerSummary> {
    let source = scan_directory(root)?;
    let DatasetSource::FilePerSample { root, manifest } = &source else {
        unreachable!("scan_directory builds the file variant");
    };
    let mut payloads = Vec::with_capacity(manifest.len());
    for entry in manifest {
        let attach = |e: Error| e.for_sample(&entry.key);
        let bytes = fs::read(root.join(&entry.rel_path)).map_err(|e| attach(e.into()))?;
        let is_ppm = entry.rel_path.extension().and_then(|e| e.to_str()) == Some("ppm");
        let body = if store_encoded && is_ppm {
            // Validate even when passing bytes through unchanged: a pack
            // should never launder an undecodable file into a container.
            decode_ppm(&bytes).map_err(|e| attach(e.into()))?;
            PayloadBody::Encoded(bytes)
        } else {
            PayloadBody::Tensor(decode_file(&entry.rel_path, &bytes).map_err(attach)?)
        };
        payloads.push(SamplePayload { key: entry.key.clone(), label: entry.label, body });
    }
    write_container(payloads, chunk_target_bytes, destination)
}

#[cfg(test)]
mod tests {
    use super::*;
    use loadforge_core::ppm::encode_ppm;
    use loadforge_core::record::encode_tensor_body;
    use loadforge_core::record::MIN_CHUNK_TARGET;
    use loadforge_core::rng::SampleRng;

    fn write_ppm(path: &Path, h: u32, w: u32, seed: u64) {
        let mut rng = SampleRng::new(seed);
        let data: Vec<u8> = (0..(h * w * 3) as usize).map(|_| rng.next_u64() as u8).collect();
        let img = ImageTensor::from_u8(h, w, 3, data).unwrap();
        fs::write(path, encode_ppm(&img).unwrap()).unwrap();
    }

    fn write_brt(path: &Path, h: u32, w: u32, seed: u64) {
        let mut rng = SampleRng::new(seed);
        let data: Vec<f32> =
            (0..(h * w * 3) as usize).map(|_| rng.next_unit_f64() as f32).collect();
        let img = ImageTensor::from_f32(h, w, 3, data).unwrap();
        let mut bytes = Vec::new();
        encode_tensor_body(&img, &mut bytes);
        fs::write(path, bytes).unwrap();
    }

    fn two_class_tree() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("dog")).unwrap();
        fs::create_dir(dir.path().join("cat")).unwrap();
        write_ppm(&dir.path().join("cat/a.ppm"), 4, 5, 11);
        write_ppm(&dir.path().join("dog/b.ppm"), 3, 3, 12);
        write_brt(&dir.path().join("dog/c.brt"), 2, 2, 13);
        fs::write(dir.path().join("dog/notes.txt"), b"ignored").unwrap();
        dir
    }

    #[test]
    fn scan_assigns_sorted_rank_labels_and_key_order() {
        let dir = two_class_tree();
        let source = scan_directory(dir.path()).unwrap();
        let DatasetSource::FilePerSample { manifest, .. } = &source else { unreachable!() };
        let rows: Vec<(&str, i64)> =
            manifest.iter().map(|m| (m.key.as_str(), m.label)).collect();
        assert_eq!(rows, vec![("cat/a", 0), ("dog/b", 1), ("dog/c", 1)]);
    }

    #[test]
    fn scan_single_class_is_all_zero_labels() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("only")).unwrap();
        for i in 0..3 {
            write_ppm(&dir.path().join(format!("only/f{i}.ppm")), 2, 2, i);
        }
        let source = scan_directory(dir.path()).unwrap();
        let DatasetSource::FilePerSample { manifest, .. } = &source else { unreachable!() };
        assert_eq!(manifest.len(), 3);
        assert!(manifest.iter().all(|m| m.label == 0));
    }

    #[test]
    fn scan_errors() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("cls")).unwrap();
        fs::write(dir.path().join("cls/readme.txt"), b"x").unwrap();
        assert!(matches!(scan_directory(dir.path()), Err(Error::EmptyDataset)));
        assert!(matches!(
            scan_directory(&dir.path().join("does-not-exist")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn fetch_decodes_both_file_kinds() {
        let dir = two_class_tree();
        let source = scan_directory(dir.path()).unwrap();
        assert_eq!(source.len(), 3);
        let a = source.fetch(0).unwrap();
        assert_eq!((a.key.as_str(), a.label), ("cat/a", 0));
        assert_eq!(a.image.dims(), (4, 5, 3));
        let c = source.fetch(2).unwrap();
        assert_eq!((c.key.as_str(), c.label), ("dog/c", 1));
        assert_eq!(c.image.dims(), (2, 2, 3));
        assert!(matches!(
            source.fetch(3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn fetch_attaches_the_sample_key_to_decode_failures() {
        let dir = two_class_tree();
        fs::write(dir.path().join("cat/a.ppm"), b"P6\n2 2\n255\nxy").unwrap();
        let source = scan_directory(dir.path()).unwrap();
        match source.fetch(0) {
            Err(Error::Sample { key, source }) => {
                assert_eq!(key, "cat/a");
                assert_eq!(source.exit_code(), 2);
            }
            other => panic!("expected Sample error, got {other:?}"),
        }
    }

    #[test]
    fn backends_agree_sample_for_sample() {
        let dir = two_class_tree();
        let packed = dir.path().join("packed.brc");
        for store_encoded in [false, true] {
            pack_directory(dir.path(), &packed, MIN_CHUNK_TARGET, store_encoded).unwrap();
            let files = scan_directory(dir.path()).unwrap();
            let container = DatasetSource::open_container(&packed).unwrap();
            assert_eq!(files.len(), container.len());
            for i in 0..files.len() {
                let a = files.fetch(i).unwrap();
                let b = container.fetch(i).unwrap();
                assert_eq!(a.key, b.key);
                assert_eq!(a.label, b.label);
                assert!(a.image.bitwise_eq(&b.image), "index {i} differs");
            }
        }
    }

    #[test]
    fn store_encoded_keeps_ppm_bytes_verbatim() {
        let dir = two_class_tree();
        let packed = dir.path().join("packed.brc");
        pack_directory(dir.path(), &packed, MIN_CHUNK_TARGET, true).unwrap();
        let handle = ContainerHandle::open(&packed).unwrap();
        let on_disk = fs::read(dir.path().join("cat/a.ppm")).unwrap();
        match handle.read_record(0).unwrap().body {
            PayloadBody::Encoded(bytes) => assert_eq!(bytes, on_disk),
            PayloadBody::Tensor(_) => panic!("expected kind-1 payload"),
        }
        // The .brt file stays a tensor payload even under store_encoded.
        match handle.read_record(2).unwrap().body {
            PayloadBody::Tensor(img) => assert_eq!(img.dims(), (2, 2, 3)),
            PayloadBody::Encoded(_) => panic!("expected kind-0 payload"),
        }
    }

    #[test]
    fn pack_refuses_undecodable_ppm_even_when_encoded() {
        let dir = two_class_tree();
        fs::write(dir.path().join("cat/a.ppm"), b"P6\n1 1\n9\nabc").unwrap();
        let packed = dir.path().join("packed.brc");
        let err = pack_directory(dir.path(), &packed, MIN_CHUNK_TARGET, true).unwrap_err();
        assert!(matches!(err, Error::Sample { .. }));
    }

    #[test]
    fn concurrent_fetch_is_safe_on_both_backends() {
        let dir = two_class_tree();
        let packed = dir.path().join("packed.brc");
        pack_directory(dir.path(), &packed, MIN_CHUNK_TARGET, false).unwrap();
        for source in [
            std::sync::Arc::new(scan_directory(dir.path()).unwrap()),
            std::sync::Arc::new(DatasetSource::open_container(&packed).unwrap()),
        ] {
            let baseline: Vec<Sample> =
                (0..source.len()).map(|i| source.fetch(i).unwrap()).collect();
            let mut joins = Vec::new();
            for t in 0..4u64 {
                let src = std::sync::Arc::clone(&source);
                let expect = baseline.clone();
                joins.push(std::thread::spawn(move || {
                    let mut rng = SampleRng::new(t);
                    for _ in 0..100 {
                        let i = rng.next_below(src.len());
                        let got = src.fetch(i).unwrap();
                        assert_eq!(got.key, expect[i as usize].key);
                        assert!(got.image.bitwise_eq(&expect[i as usize].image));
                    }
                }));
            }
            for j in joins {
                j.join().unwrap();
            }
        }
    }
}
