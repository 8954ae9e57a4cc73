//! Binary cloud format.
//!
//! ```text
//! "SHPC1"
//! u64 point count, u16 class count
//! per class: u16 byte length, UTF-8 name
//! per point: 3 x f64 position, C x f32 probs, C x f32 uncerts, u32 count
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{FusionMode, SemanticPointCloud};
use crate::error::{Error, Result};

pub const CLOUD_MAGIC: &[u8; 5] = b"SHPC1";

pub fn write_cloud<W: Write>(w: &mut W, cloud: &SemanticPointCloud, names: &[String]) -> Result<()> {
    let c = cloud.num_classes();
    if names.len() != c {
        return Err(Error::InvalidInput(format!(
            "{} class names for a {c}-class cloud",
            names.len()
        )));
    }
    w.write_all(CLOUD_MAGIC)?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    w.write_all(&(c as u16).to_le_bytes())?;
    for name in names {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| Error::InvalidInput(format!("class name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
    }
    for i in 0..cloud.len() {
        let p = cloud.position(i);
        for v in [p.x, p.y, p.z] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in cloud.probs(i) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for &v in cloud.uncert(i) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.write_all(&cloud.measurement_count(i).to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated cloud file".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

/// Reads a cloud. Stored values become the fused state as they are, so a
/// read followed by a write reproduces the input bytes.
pub fn read_cloud<R: Read>(r: &mut R, mode: FusionMode) -> Result<(Vec<String>, SemanticPointCloud)> {
    if &read_array::<5, _>(r)? != CLOUD_MAGIC {
        return Err(Error::Format("not an SHPC1 cloud file".into()));
    }
    let n = u64::from_le_bytes(read_array(r)?) as usize;
    let c = u16::from_le_bytes(read_array(r)?) as usize;
    let mut names = Vec::with_capacity(c);
    for _ in 0..c {
        let len = u16::from_le_bytes(read_array(r)?) as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated class name".into()))?;
        names.push(String::from_utf8(buf).map_err(|_| Error::Format("class name is not UTF-8".into()))?);
    }
    let mut positions = Vec::with_capacity(n.min(1 << 24));
    let mut probs = Vec::new();
    let mut uncert = Vec::new();
    let mut counts = Vec::new();
    for _ in 0..n {
        let x = f64::from_le_bytes(read_array(r)?);
        let y = f64::from_le_bytes(read_array(r)?);
        let z = f64::from_le_bytes(read_array(r)?);
        positions.push(Vector3::new(x, y, z));
        for _ in 0..c {
            probs.push(f32::from_le_bytes(read_array(r)?) as f64);
        }
        for _ in 0..c {
            uncert.push(f32::from_le_bytes(read_array(r)?) as f64);
        }
        counts.push(u32::from_le_bytes(read_array(r)?));
    }
    let cloud = SemanticPointCloud::from_parts(positions, c, mode, probs, uncert, counts)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((names, cloud))
}

pub fn save_cloud(path: &Path, cloud: &SemanticPointCloud, names: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cloud(&mut w, cloud, names)?;
    w.flush()?;
    Ok(())
}

pub fn load_cloud(path: &Path, mode: FusionMode) -> Result<(Vec<String>, SemanticPointCloud)> {
    read_cloud(&mut BufReader::new(File::open(path)?), mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let mut cloud = SemanticPointCloud::new(
            (0..20)
                .map(|i| Vector3::new(i as f64 * 0.1, (i % 3) as f64 * 0.37, 1e-3 * i as f64))
                .collect(),
            3,
            FusionMode::MeasurementNormalized,
        )
        .unwrap();
        cloud.add_measurement(4, &[0.2, 0.3, 0.5], &[0.11, 0.07, 0.3]);
        cloud.add_measurement(4, &[0.1, 0.1, 0.8], &[0.01, 0.02, 0.03]);
        cloud.add_measurement(9, &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]);
        let names: Vec<String> = vec!["a".into(), "bé".into(), "c".into()];
        let mut bytes = Vec::new();
        write_cloud(&mut bytes, &cloud, &names).unwrap();
        let (n2, back) = read_cloud(&mut bytes.as_slice(), FusionMode::MeasurementNormalized).unwrap();
        assert_eq!(n2, names);
        assert_eq!(back.measurement_count(4), 2);
        let mut again = Vec::new();
        write_cloud(&mut again, &back, &n2).unwrap();
        assert_eq!(bytes, again);
        assert_eq!(&bytes[..5], b"SHPC1");
    }

    #[test]
    fn truncated_input_is_a_format_error() {
        let cloud =
            SemanticPointCloud::new(vec![Vector3::zeros()], 2, FusionMode::MeasurementNormalized)
                .unwrap();
        let mut bytes = Vec::new();
        write_cloud(&mut bytes, &cloud, &["a".into(), "b".into()]).unwrap();
        bytes.pop();
        assert!(matches!(
            read_cloud(&mut bytes.as_slice(), FusionMode::MeasurementNormalized),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_cloud(&mut &b"XXXXX"[..], FusionMode::MeasurementNormalized),
            Err(Error::Format(_))
        ));
    }
}
