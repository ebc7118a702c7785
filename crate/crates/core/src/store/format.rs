//! Binary store container.
//!
//! ```text
//! magic      4 bytes  "EMB1"
//! version    u32
//! n          u64      rows
//! d          u32      32-bit words per row
//! role       u8       0 image, 1 text, 2 neighbors
//! label_w    u8       bytes per class id in the label block, 0 = no labels
//! data       n*d*4    row-major little-endian 32-bit words
//! labels     n x (u16 count, count ids of label_w bytes)    if label_w > 0
//! ids        n x (u32 byte length, UTF-8 sample id)
//! crc32      u32      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! All integers are little-endian. The manifest sidecar carries the SHA-256
//! of the data section, which the loader checks.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};
use crate::store::{
    manifest_path, validate_store, DatasetManifest, EmbeddingStore, LabelSet, Role,
};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: u64 = 22;
const CRC_LEN: u64 = 4;

pub(crate) enum Words<'a> {
    F32(&'a [f32]),
    U32(&'a [u32]),
}

impl Words<'_> {
    fn len(&self) -> usize {
        match self {
            Words::F32(v) => v.len(),
            Words::U32(v) => v.len(),
        }
    }
}

/// Decoded container contents before they are interpreted by role.
pub(crate) struct Container {
    pub role: Role,
    pub d: usize,
    pub words: Vec<u32>,
    /// Label sets with class count 0; callers attach the real count.
    pub labels: Option<LabelSet>,
    pub ids: Vec<String>,
    pub data_sha256: String,
}

fn label_width(class_count: u32) -> u8 {
    match class_count {
        0..=0x100 => 1,
        0x101..=0x1_0000 => 2,
        _ => 4,
    }
}

struct CrcWriter<W> {
    inner: W,
    crc: crc32fast::Hasher,
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.crc.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub(crate) fn write_container(
    path: &Path,
    role: Role,
    d: usize,
    words: Words<'_>,
    labels: Option<&LabelSet>,
    ids: &[String],
) -> Result<String> {
    let n = ids.len();
    assert_eq!(words.len(), n * d, "container data does not match n x d");
    let tmp = {
        let mut name = path.as_os_str().to_owned();
        name.push(".tmp");
        PathBuf::from(name)
    };
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = CrcWriter {
        inner: BufWriter::with_capacity(1 << 20, file),
        crc: crc32fast::Hasher::new(),
    };
    let io = |e| Error::io(path, e);
    let width = labels.map(|l| label_width(l.class_count())).unwrap_or(0);

    w.write_all(&MAGIC).map_err(io)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&[role.tag(), width]).map_err(io)?;

    let mut sha = Sha256::new();
    let mut buf = Vec::with_capacity(1 << 16);
    let mut emit = |chunk: &mut dyn Iterator<Item = u32>, w: &mut CrcWriter<_>| -> Result<()> {
        buf.clear();
        for word in chunk {
            buf.extend_from_slice(&word.to_le_bytes());
        }
        sha.update(&buf);
        w.write_all(&buf).map_err(io)
    };
    match words {
        Words::F32(v) => {
            for chunk in v.chunks(1 << 14) {
                emit(&mut chunk.iter().map(|x| x.to_bits()), &mut w)?;
            }
        }
        Words::U32(v) => {
            for chunk in v.chunks(1 << 14) {
                emit(&mut chunk.iter().copied(), &mut w)?;
            }
        }
    }

    if let Some(labels) = labels {
        for set in labels.iter() {
            let count = u16::try_from(set.len())
                .map_err(|_| Error::arg("more than 65535 labels on one sample"))?;
            w.write_all(&count.to_le_bytes()).map_err(io)?;
            for &id in set {
                let bytes = id.to_le_bytes();
                w.write_all(&bytes[..width as usize]).map_err(io)?;
            }
        }
    }
    for id in ids {
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(id.as_bytes()).map_err(io)?;
    }
    let crc = w.crc.clone().finalize();
    w.inner.write_all(&crc.to_le_bytes()).map_err(io)?;
    let mut inner = w.inner;
    inner.flush().map_err(io)?;
    drop(inner);
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(hex::encode(sha.finalize()))
}

struct Section<R> {
    inner: R,
    crc: crc32fast::Hasher,
    remaining: u64,
}

impl<R: Read> Section<R> {
    /// Reads exactly `len` payload bytes, failing with a truncation error
    /// when fewer remain before the trailing checksum.
    fn take(&mut self, section: &'static str, buf: &mut [u8]) -> Result<()> {
        let needed = buf.len() as u64;
        if needed > self.remaining {
            return Err(FormatError::Truncated {
                section,
                needed,
                available: self.remaining,
            }
            .into());
        }
        self.inner
            .read_exact(buf)
            .map_err(|e| Error::io(section, e))?;
        self.crc.update(buf);
        self.remaining -= needed;
        Ok(())
    }

    fn need(&self, section: &'static str, needed: u64) -> Result<()> {
        if needed > self.remaining {
            Err(FormatError::Truncated {
                section,
                needed,
                available: self.remaining,
            }
            .into())
        } else {
            Ok(())
        }
    }

    fn u16(&mut self, section: &'static str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.take(section, &mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(section, &mut b)?;
        Ok(u32::from_le_bytes(b))
    }
}

pub(crate) fn read_container(path: &Path) -> Result<Container> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len < HEADER_LEN + CRC_LEN {
        return Err(FormatError::Truncated {
            section: "header",
            needed: HEADER_LEN + CRC_LEN,
            available: len,
        }
        .into());
    }
    let mut r = Section {
        inner: BufReader::with_capacity(1 << 20, file),
        crc: crc32fast::Hasher::new(),
        remaining: len - CRC_LEN,
    };

    let mut header = [0u8; HEADER_LEN as usize];
    r.take("header", &mut header)?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic }.into());
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(FormatError::VersionMismatch {
            found: version,
            supported: CONTAINER_VERSION,
        }
        .into());
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let d = u32::from_le_bytes(header[16..20].try_into().unwrap()) as u64;
    let role = Role::from_tag(header[20]).ok_or(FormatError::UnknownRole(header[20]))?;
    let width = header[21];
    if !matches!(width, 0 | 1 | 2 | 4) {
        return Err(FormatError::LabelWidth(width).into());
    }

    // every row costs at least its data words plus a 4-byte id length
    let per_row = d
        .checked_mul(4)
        .and_then(|b| b.checked_add(4 + if width > 0 { 2 } else { 0 }))
        .unwrap_or(u64::MAX);
    r.need("rows", n.saturating_mul(per_row))?;
    let data_bytes = n * d * 4;

    let mut sha = Sha256::new();
    let mut words = Vec::with_capacity((n * d) as usize);
    let mut buf = vec![0u8; 1 << 16];
    let mut left = data_bytes;
    while left > 0 {
        let take = left.min(buf.len() as u64) as usize;
        r.take("data", &mut buf[..take])?;
        sha.update(&buf[..take]);
        words.extend(
            buf[..take]
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap())),
        );
        left -= take as u64;
    }

    let labels = if width > 0 {
        let mut sets: Vec<Vec<u32>> = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let count = r.u16("labels")? as usize;
            r.need("labels", (count * width as usize) as u64)?;
            let mut set = Vec::with_capacity(count);
            for _ in 0..count {
                let mut id_buf = [0u8; 4];
                r.take("labels", &mut id_buf[..width as usize])?;
                set.push(u32::from_le_bytes(id_buf));
            }
            sets.push(set);
        }
        Some(LabelSet::from_sets(sets, 0))
    } else {
        None
    };

    let mut ids = Vec::with_capacity(n as usize);
    for row in 0..n as usize {
        let l = r.u32("sample ids")? as usize;
        r.need("sample ids", l as u64)?;
        let mut b = vec![0u8; l];
        r.take("sample ids", &mut b)?;
        ids.push(String::from_utf8(b).map_err(|_| FormatError::SampleId(row))?);
    }

    if r.remaining > 0 {
        return Err(FormatError::TrailingBytes(r.remaining).into());
    }
    let computed = r.crc.clone().finalize();
    let mut stored = [0u8; 4];
    r.inner
        .read_exact(&mut stored)
        .map_err(|e| Error::io(path, e))?;
    let stored = u32::from_le_bytes(stored);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed }.into());
    }

    Ok(Container {
        role,
        d: d as usize,
        words,
        labels,
        ids,
        data_sha256: hex::encode(sha.finalize()),
    })
}

/// Persist a store, its labels and manifest. Refuses to write anything when
/// validation reports a diagnostic. The manifest is written with the content
/// hash of the data section filled in.
pub fn save_store(
    store: &EmbeddingStore,
    labels: &LabelSet,
    manifest: &DatasetManifest,
    path: &Path,
) -> Result<()> {
    let diags = validate_store(store, Some(labels), Some(manifest));
    if !diags.is_empty() {
        return Err(Error::Invalid(diags));
    }
    if store.role() == Role::Neighbors {
        return Err(FormatError::WrongRole {
            expected: "image or text",
            found: store.role().as_str(),
        }
        .into());
    }
    let sha = write_container(
        path,
        store.role(),
        store.d(),
        Words::F32(store.data()),
        Some(labels),
        store.sample_ids(),
    )?;
    let mut manifest = manifest.clone();
    manifest.data_sha256 = sha;
    manifest.write(&manifest_path(path))
}

/// Load a store written by [`save_store`] together with its sidecar.
pub fn load_store(path: &Path) -> Result<(EmbeddingStore, LabelSet, DatasetManifest)> {
    let c = read_container(path)?;
    if c.role == Role::Neighbors {
        return Err(FormatError::WrongRole {
            expected: "image or text",
            found: c.role.as_str(),
        }
        .into());
    }
    let manifest = DatasetManifest::read(&manifest_path(path))?;
    if manifest.data_sha256 != c.data_sha256 {
        return Err(FormatError::HashMismatch {
            manifest: manifest.data_sha256,
            data: c.data_sha256,
        }
        .into());
    }
    let labels = c
        .labels
        .ok_or(FormatError::LabelWidth(0))?
        .with_class_count(manifest.class_count);
    let data: Vec<f32> = c.words.into_iter().map(f32::from_bits).collect();
    let store = EmbeddingStore::new(c.d, data, c.ids, c.role)?;
    let diags = validate_store(&store, Some(&labels), Some(&manifest));
    if !diags.is_empty() {
        return Err(Error::Invalid(diags));
    }
    Ok((store, labels, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (EmbeddingStore, LabelSet, DatasetManifest) {
        let s = 0.5f32;
        let data = vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, s, s, s, s];
        let store = EmbeddingStore::with_numbered_ids(4, data, "img", Role::Image).unwrap();
        let labels = LabelSet::from_single(vec![0, 1, 2], 3);
        (store, labels, DatasetManifest::new(3))
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let (store, labels, manifest) = fixture();
        save_store(&store, &labels, &manifest, &path).unwrap();
        let (s2, l2, m2) = load_store(&path).unwrap();
        assert_eq!(s2, store);
        assert_eq!(l2, labels);
        assert_eq!(m2.data_sha256, store.data_sha256());
        assert_eq!(
            DatasetManifest {
                data_sha256: String::new(),
                ..m2
            },
            manifest
        );
    }

    #[test]
    fn refuses_unnormalized_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let store =
            EmbeddingStore::with_numbered_ids(2, vec![0.9, 0.0], "x", Role::Image).unwrap();
        let labels = LabelSet::from_single(vec![0], 1);
        let err = save_store(&store, &labels, &DatasetManifest::new(1), &path).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
        assert!(!path.exists());
    }

    #[test]
    fn corrupted_length_is_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let (store, labels, manifest) = fixture();
        save_store(&store, &labels, &manifest, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..16].copy_from_slice(&1000u64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_store(&path),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }

    #[test]
    fn distinct_header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let (store, labels, manifest) = fixture();
        save_store(&store, &labels, &manifest, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_store(&path),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));

        let mut bad = good.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_store(&path),
            Err(Error::Format(FormatError::VersionMismatch { found: 9, .. }))
        ));

        let mut bad = good.clone();
        bad[HEADER_LEN as usize + 5] ^= 0x10;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_store(&path),
            Err(Error::Format(FormatError::Checksum { .. }))
        ));

        std::fs::write(&path, &good[..good.len() - 7]).unwrap();
        assert!(matches!(load_store(&path), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_hash_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let (store, labels, manifest) = fixture();
        save_store(&store, &labels, &manifest, &path).unwrap();
        let mp = manifest_path(&path);
        let mut m = DatasetManifest::read(&mp).unwrap();
        m.data_sha256 = "00".repeat(32);
        m.write(&mp).unwrap();
        assert!(matches!(
            load_store(&path),
            Err(Error::Format(FormatError::HashMismatch { .. }))
        ));
    }

    #[test]
    fn wide_label_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let store = EmbeddingStore::with_numbered_ids(1, vec![1.0; 2], "x", Role::Image).unwrap();
        let labels = LabelSet::from_sets([vec![999], vec![3, 70_000]], 100_000);
        save_store(&store, &labels, &DatasetManifest::new(100_000), &path).unwrap();
        let (_, l, _) = load_store(&path).unwrap();
        assert_eq!(l, labels);
    }
}
