//! Feature-file and manifest I/O.
//!
//! Feature file: magic "SVAEFEAT", version u32, frame count u32, feature dim
//! u32, then frames*dim IEEE-754 32-bit little-endian values row-major.
//! Manifest: UTF-8 lines, tab-separated path/speaker/language.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, Language, ManifestRecord};

pub const FEATURE_MAGIC: &[u8; 8] = b"SVAEFEAT";
pub const FEATURE_VERSION: u32 = 1;

/// Write a finite [frames, dim] matrix. Empty matrices are rejected.
pub fn write_feature_file(
    path: &Path,
    features: &[f32],
    frames: usize,
    dim: usize,
) -> Result<(), DataError> {
    if frames == 0 || dim == 0 {
        return Err(DataError::Config(format!(
            "feature matrix must be non-empty, got [{frames}, {dim}]"
        )));
    }
    if features.len() != frames * dim {
        return Err(DataError::Config(format!(
            "feature buffer length {} does not match [{frames}, {dim}]",
            features.len()
        )));
    }
    if !features.iter().all(|v| v.is_finite()) {
        return Err(DataError::Config(
            "feature matrix contains non-finite values".into(),
        ));
    }
    let mut buf = Vec::with_capacity(20 + features.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(frames as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in features {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Read a feature file; bit-exact inverse of [`write_feature_file`].
pub fn read_feature_file(path: &Path) -> Result<(Vec<f32>, usize, usize), DataError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_feature_bytes(&bytes)
}

pub fn parse_feature_bytes(bytes: &[u8]) -> Result<(Vec<f32>, usize, usize), DataError> {
    let need = |offset: usize, n: usize| -> Result<(), DataError> {
        if bytes.len() < offset + n {
            Err(DataError::Format {
                offset: bytes.len() as u64,
                msg: format!("truncated: need {} bytes from offset {offset}", n),
            })
        } else {
            Ok(())
        }
    };
    need(0, 8)?;
    if &bytes[0..8] != FEATURE_MAGIC {
        return Err(DataError::Format {
            offset: 0,
            msg: format!(
                "bad magic {:?}, expected {:?}",
                &bytes[0..8.min(bytes.len())],
                FEATURE_MAGIC
            ),
        });
    }
    need(8, 4)?;
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(DataError::Format {
            offset: 8,
            msg: format!("unsupported version {version}, expected {FEATURE_VERSION}"),
        });
    }
    need(12, 8)?;
    let frames = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if frames == 0 || dim == 0 {
        return Err(DataError::Format {
            offset: 12,
            msg: format!("empty matrix [{frames}, {dim}]"),
        });
    }
    let n = frames * dim;
    need(20, n * 4)?;
    if bytes.len() != 20 + n * 4 {
        return Err(DataError::Format {
            offset: (20 + n * 4) as u64,
            msg: format!("{} trailing bytes", bytes.len() - 20 - n * 4),
        });
    }
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let off = 20 + i * 4;
        values.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
    }
    Ok((values, frames, dim))
}

/// One manifest line: `path<TAB>speaker<TAB>language`.
pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), DataError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            r.path,
            r.speaker_id,
            r.language.tag()
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(DataError::Config(format!(
                "{}:{}: expected 3 tab-separated fields, got {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let language = Language::parse(fields[2]).ok_or_else(|| {
            DataError::Config(format!(
                "{}:{}: unknown language tag {:?}",
                path.display(),
                i + 1,
                fields[2]
            ))
        })?;
        records.push(ManifestRecord {
            path: fields[0].to_string(),
            speaker_id: fields[1].to_string(),
            language,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        let mut rng = derive_rng(3, &[0x51]);
        let (t, d) = (37, 80);
        let values: Vec<f32> = (0..t * d).map(|_| rng.random::<f32>() - 0.5).collect();
        write_feature_file(&path, &values, t, d).unwrap();
        let (back, bt, bd) = read_feature_file(&path).unwrap();
        assert_eq!((bt, bd), (t, d));
        assert_eq!(values.len(), back.len());
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_rejected_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        write_feature_file(&path, &[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let err = parse_feature_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            DataError::Format { offset, .. } => assert!(offset > 0),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn bad_magic_rejected_at_offset_zero() {
        let err = parse_feature_bytes(b"NOTMAGIC\x01\x00\x00\x00").unwrap_err();
        match err {
            DataError::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn empty_matrix_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        assert!(matches!(
            write_feature_file(&path, &[], 0, 80),
            Err(DataError::Config(_))
        ));
    }

    #[test]
    fn non_finite_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        assert!(write_feature_file(&path, &[1.0, f32::NAN], 1, 2).is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let records = vec![
            ManifestRecord {
                path: "features/A00_u00.feat".into(),
                speaker_id: "A00".into(),
                language: Language::A,
            },
            ManifestRecord {
                path: "features/B01_u03.feat".into(),
                speaker_id: "B01".into(),
                language: Language::B,
            },
        ];
        write_manifest(&path, &records).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].speaker_id, "A00");
        assert_eq!(back[1].language, Language::B);
    }
}
