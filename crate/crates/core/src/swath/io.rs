//! SWT1 swath container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SWT1"            4 bytes
//! n_scan            u32
//! n_pix             u32
//! n_chan            u32
//! kind              u8   (0 = TB, 1 = rain, 2 = quantile / derived planes)
//! planes            n_chan * n_scan * n_pix f32, plane-major, scan-major
//! lat               n_scan * n_pix f32
//! lon               n_scan * n_pix f32
//! scan_time         n_scan f64 (seconds since epoch)
//! ```
//!
//! Kind 2 carries 99 quantile planes for a [`QuantileField`]; confidence
//! bands (2 planes: lower, upper) and per-bin densities (one plane per bin)
//! reuse kind 2 through [`write_planes`].

use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{
    Geolocation, Provenance, QuantileField, RainField, SwathData, TbScene, N_QUANTILES,
    N_TB_CHANNELS,
};
use crate::error::{Error, Result};

pub const SWATH_MAGIC: &[u8; 4] = b"SWT1";

const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwathKind {
    Tb = 0,
    Rain = 1,
    Quantile = 2,
}

impl SwathKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(SwathKind::Tb),
            1 => Some(SwathKind::Rain),
            2 => Some(SwathKind::Quantile),
            _ => None,
        }
    }
}

/// Raw contents of an SWT1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct SwathFile {
    pub kind: SwathKind,
    pub n_chan: usize,
    pub planes: Vec<f32>,
    pub geo: Arc<Geolocation>,
}

impl SwathFile {
    fn expect_kind(&self, path: &Path, kind: SwathKind, n_chan: usize) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(
                "swath kind",
                format!("{}: expected {kind:?}, found {:?}", path.display(), self.kind),
            ));
        }
        if self.n_chan != n_chan {
            return Err(Error::DimensionMismatch(format!(
                "{}: {kind:?} file needs {n_chan} planes, found {}",
                path.display(),
                self.n_chan
            )));
        }
        Ok(())
    }
}

/// Write any swath container to `path`.
pub fn write_swath<S: SwathData>(path: impl AsRef<Path>, swath: &S) -> Result<()> {
    write_planes(path, S::KIND, swath.geo(), swath.n_planes(), swath.data())
}

/// Write `n_chan` planes over `geo` under an explicit kind.
pub fn write_planes(
    path: impl AsRef<Path>,
    kind: SwathKind,
    geo: &Geolocation,
    n_chan: usize,
    planes: &[f32],
) -> Result<()> {
    let path = path.as_ref();
    let n = geo.len();
    if planes.len() != n_chan * n {
        return Err(Error::DimensionMismatch(format!(
            "{} planes of {n} pixels need {} values, got {}",
            n_chan,
            n_chan * n,
            planes.len()
        )));
    }
    let mut buf =
        Vec::with_capacity(HEADER_LEN + 4 * (n_chan * n + 2 * n) + 8 * geo.n_scan());
    buf.extend_from_slice(SWATH_MAGIC);
    buf.extend_from_slice(&(geo.n_scan() as u32).to_le_bytes());
    buf.extend_from_slice(&(geo.n_pix() as u32).to_le_bytes());
    buf.extend_from_slice(&(n_chan as u32).to_le_bytes());
    buf.push(kind as u8);
    for v in planes.iter().chain(geo.lat()).chain(geo.lon()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for t in geo.scan_time() {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f32_plane(b: &[u8], at: usize, n: usize) -> Vec<f32> {
    b[at..at + 4 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Read an SWT1 file of any kind.
pub fn read_swath(path: impl AsRef<Path>) -> Result<SwathFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != SWATH_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "SWT1",
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let n_scan = read_u32(&bytes, 4) as usize;
    let n_pix = read_u32(&bytes, 8) as usize;
    let n_chan = read_u32(&bytes, 12) as usize;
    let kind = SwathKind::from_u8(bytes[16])
        .ok_or_else(|| Error::invalid("swath kind", format!("unknown kind byte {}", bytes[16])))?;
    let n = n_scan * n_pix;
    let expected = HEADER_LEN + 4 * (n_chan * n + 2 * n) + 8 * n_scan;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::DimensionMismatch(format!(
            "{}: header describes {expected} bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut at = HEADER_LEN;
    let planes = f32_plane(&bytes, at, n_chan * n);
    at += 4 * n_chan * n;
    let lat = f32_plane(&bytes, at, n);
    at += 4 * n;
    let lon = f32_plane(&bytes, at, n);
    at += 4 * n;
    let scan_time = bytes[at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let geo = Geolocation::new(n_scan, n_pix, lat, lon, scan_time)?;
    Ok(SwathFile {
        kind,
        n_chan,
        planes,
        geo: Arc::new(geo),
    })
}

/// Granule id from a file name: everything before the first '.'.
fn granule_id(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.split('.').next().unwrap_or(n).to_string())
        .unwrap_or_default()
}

pub fn read_tb(path: impl AsRef<Path>) -> Result<TbScene> {
    let path = path.as_ref();
    let f = read_swath(path)?;
    f.expect_kind(path, SwathKind::Tb, N_TB_CHANNELS)?;
    TbScene::new(granule_id(path), f.geo, f.planes)
}

/// Provenance is not stored in the container; the caller supplies it.
pub fn read_rain(path: impl AsRef<Path>, provenance: Provenance) -> Result<RainField> {
    let path = path.as_ref();
    let f = read_swath(path)?;
    f.expect_kind(path, SwathKind::Rain, 1)?;
    RainField::new(f.geo, f.planes, provenance)
}

pub fn read_quantiles(path: impl AsRef<Path>) -> Result<QuantileField> {
    let path = path.as_ref();
    let f = read_swath(path)?;
    f.expect_kind(path, SwathKind::Quantile, N_QUANTILES)?;
    QuantileField::new(f.geo, f.planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swath::test_support::grid_geo;
    use proptest::prelude::*;

    fn bits(v: &[f32]) -> Vec<u32> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn nan_survives_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let geo = grid_geo(2, 2, 10.0, 10.0, 0.1);
        let mut tb = vec![250.0f32; 16];
        tb[5] = f32::NAN;
        let scene = TbScene::new("g1", geo, tb.clone()).unwrap();
        let p = dir.path().join("g1.tb.swt");
        write_swath(&p, &scene).unwrap();
        let back = read_tb(&p).unwrap();
        assert_eq!(back.granule_id, "g1");
        assert_eq!(bits(back.data()), bits(&tb));
        assert_eq!(back.geo(), scene.geo());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.swt");
        fs::write(&p, b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_swath(&p), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let geo = grid_geo(2, 3, 0.0, 0.0, 0.1);
        let rain = RainField::new(geo, vec![1.0; 6], Provenance::Reference).unwrap();
        let p = dir.path().join("r.swt");
        write_swath(&p, &rain).unwrap();
        let full = fs::read(&p).unwrap();

        fs::write(&p, &full[..full.len() - 3]).unwrap();
        assert!(matches!(read_swath(&p), Err(Error::Truncated { .. })));

        let mut longer = full.clone();
        longer.push(0);
        fs::write(&p, &longer).unwrap();
        assert!(matches!(read_swath(&p), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn kind_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let geo = grid_geo(2, 3, 0.0, 0.0, 0.1);
        let rain = RainField::new(geo, vec![1.0; 6], Provenance::Reference).unwrap();
        let p = dir.path().join("r.swt");
        write_swath(&p, &rain).unwrap();
        assert!(read_tb(&p).is_err());
        assert!(read_rain(&p, Provenance::Retrieval).is_ok());
    }

    #[test]
    fn header_layout_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let geo = grid_geo(2, 3, 0.0, 0.0, 0.1);
        let rain = RainField::new(geo, vec![0.5; 6], Provenance::Reference).unwrap();
        let p = dir.path().join("r.swt");
        write_swath(&p, &rain).unwrap();
        let b = fs::read(&p).unwrap();
        assert_eq!(&b[..4], b"SWT1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &3u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(b[16], 1);
        assert_eq!(&b[17..21], &0.5f32.to_le_bytes());
        assert_eq!(b.len(), 17 + 4 * 6 * 3 + 8 * 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn quantile_round_trip(n_scan in 1usize..6, n_pix in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let geo = grid_geo(n_scan, n_pix, -30.0, 100.0, 0.07);
            let values: Vec<f32> = (0..N_QUANTILES * n_scan * n_pix)
                .map(|_| if rng.random_bool(0.05) { f32::NAN } else { rng.random_range(-1.0..50.0) })
                .collect();
            let qf = QuantileField::new(geo, values.clone()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("q.swt");
            write_swath(&p, &qf).unwrap();
            let back = read_quantiles(&p).unwrap();
            prop_assert_eq!(bits(back.values()), bits(&values));
            prop_assert_eq!(back.geo(), qf.geo());
        }
    }
}
