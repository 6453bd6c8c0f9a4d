//! The `.sedvol` container: a JSON header plus raw little-endian slice data.
//!
//! Layout:
//!
//! ```text
//! magic  "SEDVOL\0"              7 bytes
//! version                         1 byte (currently 1)
//! header length                   u32 little-endian
//! header                          JSON (id, dims, dtypes, label mapping)
//! payload, slice-major:           per slice, H*W f32 LE image values
//!                                 followed by H*W u8 mask codes
//! ```
//!
//! Writes are atomic (temp file + rename). Loads never panic on malformed
//! input; every failure names what was expected and where.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sednet_core::preprocess::{Grid, LabelMap, Volume};

use crate::error::{IoError, Result};

const MAGIC: &[u8; 7] = b"SEDVOL\0";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VolumeHeader {
    id: String,
    slices: usize,
    height: usize,
    width: usize,
    image_dtype: String,
    mask_dtype: String,
    labels: LabelMap,
}

/// Bytes per slice: 4 per image value plus 1 per mask code.
fn slice_bytes(h: usize, w: usize) -> usize {
    h * w * 5
}

pub fn save_volume(path: &Path, volume: &Volume, labels: &LabelMap) -> Result<()> {
    volume.validate()?;
    if volume.slice_count() == 0 {
        return Err(IoError::Format(format!(
            "volume {} has no slices to save",
            volume.id
        )));
    }
    let h = volume.images[0].height;
    let w = volume.images[0].width;
    for (i, img) in volume.images.iter().enumerate() {
        if (img.height, img.width) != (h, w) {
            return Err(IoError::Format(format!(
                "volume {} slice {i} is {}x{}, expected uniform {h}x{w}",
                volume.id, img.height, img.width
            )));
        }
    }

    let header = VolumeHeader {
        id: volume.id.clone(),
        slices: volume.slice_count(),
        height: h,
        width: w,
        image_dtype: "f32le".into(),
        mask_dtype: "u8".into(),
        labels: *labels,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut bytes =
        Vec::with_capacity(12 + header_json.len() + volume.slice_count() * slice_bytes(h, w));
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for (image, mask) in volume.images.iter().zip(&volume.masks) {
        for &v in &image.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&mask.data);
    }

    write_atomic(path, &bytes)
}

pub fn load_volume(path: &Path) -> Result<(Volume, LabelMap)> {
    let bytes = fs::read(path)?;
    parse_volume(&bytes).map_err(|e| match e {
        IoError::Format(msg) => IoError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_volume(bytes: &[u8]) -> Result<(Volume, LabelMap)> {
    if bytes.len() < 12 {
        return Err(IoError::Format(format!(
            "file too short for magic and header length: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..7] != MAGIC {
        return Err(IoError::Format(
            "bad magic at offset 0, not a volume file".into(),
        ));
    }
    if bytes[7] != VERSION {
        return Err(IoError::Version {
            expected: VERSION,
            found: bytes[7],
        });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = 12 + header_len;
    if bytes.len() < payload_start {
        return Err(IoError::Format(format!(
            "header claims {header_len} bytes at offset 12 but file ends at {}",
            bytes.len()
        )));
    }
    let header: VolumeHeader = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| IoError::Format(format!("header json at offset 12: {e}")))?;

    if header.height == 0 || header.width == 0 || header.slices == 0 {
        return Err(IoError::Format(format!(
            "non-positive dimensions in header: {} slices of {}x{}",
            header.slices, header.height, header.width
        )));
    }
    if header.image_dtype != "f32le" {
        return Err(IoError::Format(format!(
            "unknown image dtype {:?}",
            header.image_dtype
        )));
    }
    if header.mask_dtype != "u8" {
        return Err(IoError::Format(format!(
            "unknown mask dtype {:?}",
            header.mask_dtype
        )));
    }

    let per_slice = slice_bytes(header.height, header.width);
    let expected = header
        .slices
        .checked_mul(per_slice)
        .ok_or_else(|| IoError::Format("slice count overflows payload size".into()))?;
    let actual = bytes.len() - payload_start;
    if actual != expected {
        return Err(IoError::Format(format!(
            "payload truncated or oversized: expected {expected} bytes after offset \
             {payload_start}, found {actual}"
        )));
    }

    let plane = header.height * header.width;
    let mut images = Vec::with_capacity(header.slices);
    let mut masks = Vec::with_capacity(header.slices);
    let mut cursor = payload_start;
    for _ in 0..header.slices {
        let mut image = Vec::with_capacity(plane);
        for i in 0..plane {
            let at = cursor + i * 4;
            image.push(f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()));
        }
        cursor += plane * 4;
        let mask = bytes[cursor..cursor + plane].to_vec();
        cursor += plane;
        images.push(Grid::from_vec(header.height, header.width, image)?);
        masks.push(Grid::from_vec(header.height, header.width, mask)?);
    }

    Ok((
        Volume {
            id: header.id,
            images,
            masks,
        },
        header.labels,
    ))
}

/// Write a whole dataset as one `.sedvol` per volume.
pub fn save_dataset(dir: &Path, volumes: &[Volume], labels: &LabelMap) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(volumes.len());
    for v in volumes {
        let path = dir.join(format!("{}.sedvol", v.id));
        save_volume(&path, v, labels)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Load every `.sedvol` under `dir`, sorted by file name. All volumes must
/// share one label mapping.
pub fn load_dataset(dir: &Path) -> Result<(Vec<Volume>, LabelMap)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "sedvol"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(IoError::Format(format!(
            "no .sedvol files under {}",
            dir.display()
        )));
    }
    let mut volumes = Vec::with_capacity(files.len());
    let mut labels: Option<LabelMap> = None;
    for file in &files {
        let (volume, map) = load_volume(file)?;
        match labels {
            None => labels = Some(map),
            Some(existing) if existing != map => {
                return Err(IoError::Format(format!(
                    "label mapping mismatch in {}: {:?} vs {:?}",
                    file.display(),
                    map,
                    existing
                )));
            }
            _ => {}
        }
        volumes.push(volume);
    }
    Ok((volumes, labels.unwrap()))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sednet_core::rng::Rng;

    fn random_volume(id: &str, slices: usize, size: usize, seed: u64) -> Volume {
        let mut rng = Rng::seed_from_u64(seed);
        let codes = [0u8, 1, 2, 4];
        let images = (0..slices)
            .map(|_| {
                Grid::from_vec(
                    size,
                    size,
                    (0..size * size)
                        .map(|_| rng.uniform(-100.0, 900.0) as f32)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let masks = (0..slices)
            .map(|_| {
                Grid::from_vec(
                    size,
                    size,
                    (0..size * size).map(|_| codes[rng.below(4)]).collect(),
                )
                .unwrap()
            })
            .collect();
        Volume {
            id: id.into(),
            images,
            masks,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.sedvol");
        let volume = random_volume("v", 3, 16, 7);
        save_volume(&path, &volume, &LabelMap::default()).unwrap();
        let (loaded, labels) = load_volume(&path).unwrap();
        assert_eq!(loaded, volume);
        assert_eq!(labels, LabelMap::default());
    }

    #[test]
    fn inflated_slice_count_is_a_truncation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.sedvol");
        let volume = random_volume("v", 2, 8, 1);
        save_volume(&path, &volume, &LabelMap::default()).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        // Bump "slices": 2 -> 3 in the JSON header.
        let json_start = 12;
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header =
            String::from_utf8(bytes[json_start..json_start + header_len].to_vec()).unwrap();
        let tampered = header.replace("\"slices\":2", "\"slices\":3");
        assert_ne!(header, tampered);
        bytes.splice(json_start..json_start + header_len, tampered.into_bytes());
        fs::write(&path, &bytes).unwrap();

        let err = load_volume(&path).unwrap_err();
        let msg = format!("{err}");
        assert!(
            msg.contains("expected 960") && msg.contains("found 640"),
            "{msg}"
        );
    }

    #[test]
    fn wrong_version_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.sedvol");
        save_volume(&path, &random_volume("v", 1, 4, 2), &LabelMap::default()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[7] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_volume(&path).unwrap_err(),
            IoError::Version {
                expected: 1,
                found: 9
            }
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.sedvol");
        fs::write(&path, b"NOTAVOLUMEFILE------------------").unwrap();
        let msg = format!("{}", load_volume(&path).unwrap_err());
        assert!(msg.contains("magic"), "{msg}");
    }

    #[test]
    fn dataset_round_trip_sorted_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let volumes = vec![
            random_volume("b-sample", 2, 8, 3),
            random_volume("a-sample", 2, 8, 4),
        ];
        save_dataset(dir.path(), &volumes, &LabelMap::default()).unwrap();
        let (loaded, _) = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].id, "a-sample");
        assert_eq!(loaded[1].id, "b-sample");
    }
}
