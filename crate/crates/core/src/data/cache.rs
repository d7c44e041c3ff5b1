//! Single-file dataset cache.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4  | tag `NESD` |
//! | 4     | version (1) |
//! | 5     | flags, bit 0 set when a noisy label track follows |
//! | 6..10 | n, `u32` |
//! | 10..14| d, `u32` |
//! | 14..16| c, `u16` |
//!
//! followed by `n·d` `f64` features in row-major order, `n` clean labels as `u16`, and when
//! flagged `n` noisy labels as `u16`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: [u8; 4] = *b"NESD";
pub const CACHE_VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

pub fn write_cache(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    let n = u32::try_from(dataset.len())
        .map_err(|_| Error::Domain("too many rows for the cache format".into()))?;
    let d = u32::try_from(dataset.dim())
        .map_err(|_| Error::Domain("too many columns for the cache format".into()))?;
    let c = u16::try_from(dataset.classes())
        .map_err(|_| Error::Domain("too many classes for the cache format".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + dataset.len() * (dataset.dim() * 8 + 4));
    buf.extend_from_slice(&CACHE_MAGIC);
    buf.push(CACHE_VERSION);
    buf.push(u8::from(dataset.noisy_labels().is_some()));
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    buf.extend_from_slice(&c.to_le_bytes());
    for v in dataset.features().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tracks = std::iter::once(dataset.clean_labels()).chain(dataset.noisy_labels());
    for track in tracks {
        for &y in track {
            buf.extend_from_slice(&(y as u16).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_cache(mut input: impl Read) -> Result<Dataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(
            bytes.len() as u64,
            "file shorter than the 16-byte header",
        ));
    }
    if bytes[0..4] != CACHE_MAGIC {
        return Err(Error::parse(0, "not a dataset cache file"));
    }
    if bytes[4] != CACHE_VERSION {
        return Err(Error::parse(
            4,
            format!("unsupported cache version {}", bytes[4]),
        ));
    }
    let has_noisy = match bytes[5] {
        0 => false,
        1 => true,
        f => return Err(Error::parse(5, format!("unknown flags {f:#x}"))),
    };
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let c = u16::from_le_bytes(bytes[14..16].try_into().unwrap()) as usize;
    let tracks = 1 + usize::from(has_noisy);
    let expected = HEADER_LEN + n * d * 8 + tracks * n * 2;
    if bytes.len() != expected {
        return Err(Error::parse(
            bytes.len().min(expected) as u64,
            format!("expected {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let feat = &bytes[HEADER_LEN..HEADER_LEN + n * d * 8];
    let values: Vec<f64> = feat
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let features = Array2::from_shape_vec((n, d), values).expect("length checked above");
    let label_bytes = &bytes[HEADER_LEN + n * d * 8..];
    let mut labels = label_bytes
        .chunks_exact(2)
        .map(|b| usize::from(u16::from_le_bytes([b[0], b[1]])));
    let clean: Vec<usize> = labels.by_ref().take(n).collect();
    let noisy: Vec<usize> = labels.collect();
    let ds = Dataset::new(features, clean, c, Provenance::default())?;
    if has_noisy {
        ds.with_noisy_labels(noisy, "cached")
    } else {
        Ok(ds)
    }
}

pub fn save_cache(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_cache(dataset, std::io::BufWriter::new(file))
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut ds = read_cache(std::fs::File::open(path)?)?;
    ds.provenance.source = path.display().to_string();
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_with_and_without_noise() {
        let x = array![[0.1, -2.5], [1e-300, f64::MAX], [3.0, 4.0]];
        let ds = Dataset::new(x, vec![0, 2, 1], 3, Provenance::default()).unwrap();
        let mut buf = Vec::new();
        write_cache(&ds, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8 + 3 * 2);
        let back = read_cache(buf.as_slice()).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.clean_labels(), ds.clean_labels());
        assert!(back.noisy_labels().is_none());

        let noisy = ds.with_noisy_labels(vec![1, 1, 0], "x").unwrap();
        let mut buf = Vec::new();
        write_cache(&noisy, &mut buf).unwrap();
        let back = read_cache(buf.as_slice()).unwrap();
        assert_eq!(back.noisy_labels(), Some(&[1, 1, 0][..]));
    }

    #[test]
    fn rejects_corruption() {
        let ds = Dataset::new(array![[1.0]], vec![1], 2, Provenance::default()).unwrap();
        let mut buf = Vec::new();
        write_cache(&ds, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_cache(bad.as_slice()),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(read_cache(&buf[..buf.len() - 1]).is_err());
        assert!(read_cache(&buf[..10]).is_err());
    }
}
