//! Deterministic synthetic datasets: seeded pseudo-random PPM files in the
//! class-per-folder layout. These stand in for full-scale image sets in
//! benchmarks and tests.

use std::fs;
use std::path::Path;

use loadforge_core::ppm::encode_ppm;
use loadforge_core::rng::{sample_seed, SampleRng};
use loadforge_core::tensor::ImageTensor;

use crate::error::{Error, Result};

/// Fill `n` bytes from the generator, consuming one u64 per 8 bytes
/// (little-endian), so pixel content is a pure function of the seed.
fn random_bytes(rng: &mut SampleRng, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let word = rng.next_u64().to_le_bytes();
        let take = (n - out.len()).min(8);
        out.extend_from_slice(&word[..take]);
    }
    out
}

/// Write `classes × per_class` random RGB images of size `h × w` under
/// `out_dir/class_XXXX/img_XXXXX.ppm`. Byte-identical trees for equal
/// arguments; every image is seeded independently via `sample_seed`, so
/// content does not depend on generation order.
pub fn synth_dataset(
    out_dir: &Path,
    classes: u32,
    per_class: u32,
    h: u32,
    w: u32,
    seed: u64,
) -> Result<()> {
    if classes == 0 || per_class == 0 {
        return Err(Error::InvalidArgument("class and per-class counts must be at least 1".into()));
    }
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("image dimensions must be at least 1".into()));
    }
    let pixel_bytes = (h as usize) * (w as usize) * 3;
    for c in 0..classes {
        let class_dir = out_dir.join(format!("class_{c:04}"));
        fs::create_dir_all(&class_dir)?;
        for i in 0..per_class {
            let mut rng = SampleRng::new(sample_seed(seed, c as u64, i as u64));
            let data = random_bytes(&mut rng, pixel_bytes);
            let img = ImageTensor::from_u8(h, w, 3, data).expect("dims are validated above");
            let ppm = encode_ppm(&img).expect("u8 RGB tensors always encode");
            fs::write(class_dir.join(format!("img_{i:05}.ppm")), ppm)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{scan_directory, DatasetSource};
    use std::collections::BTreeMap;

    fn tree_snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        for class in fs::read_dir(root).unwrap() {
            let class = class.unwrap();
            for file in fs::read_dir(class.path()).unwrap() {
                let file = file.unwrap();
                let key = format!(
                    "{}/{}",
                    class.file_name().to_string_lossy(),
                    file.file_name().to_string_lossy()
                );
                out.insert(key, fs::read(file.path()).unwrap());
            }
        }
        out
    }

    #[test]
    fn layout_counts_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(dir.path(), 2, 3, 4, 4, 9).unwrap();
        let snapshot = tree_snapshot(dir.path());
        assert_eq!(snapshot.len(), 6);
        assert!(snapshot.keys().all(|k| k.starts_with("class_000")));

        let source = scan_directory(dir.path()).unwrap();
        let DatasetSource::FilePerSample { manifest, .. } = &source else { unreachable!() };
        assert_eq!(manifest.len(), 6);
        let labels: Vec<i64> = manifest.iter().map(|m| m.label).collect();
        assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn same_seed_gives_byte_identical_trees() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_dataset(a.path(), 2, 2, 3, 5, 77).unwrap();
        synth_dataset(b.path(), 2, 2, 3, 5, 77).unwrap();
        assert_eq!(tree_snapshot(a.path()), tree_snapshot(b.path()));

        let c = tempfile::tempdir().unwrap();
        synth_dataset(c.path(), 2, 2, 3, 5, 78).unwrap();
        assert_ne!(tree_snapshot(a.path()), tree_snapshot(c.path()));
    }

    #[test]
    fn zero_counts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            synth_dataset(dir.path(), 0, 3, 4, 4, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            synth_dataset(dir.path(), 1, 0, 4, 4, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            synth_dataset(dir.path(), 1, 1, 0, 4, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn images_decode_to_requested_dims() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(dir.path(), 1, 2, 7, 5, 3).unwrap();
        let source = scan_directory(dir.path()).unwrap();
        for i in 0..source.len() {
            let sample = source.fetch(i).unwrap();
            assert_eq!(sample.image.dims(), (7, 5, 3));
        }
    }
}
