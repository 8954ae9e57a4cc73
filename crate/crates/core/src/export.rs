//! ASCII PLY export of a labelled cloud.
//!
//! Class mode colours each point by its most likely class with
//! [`CLASS_PALETTE`] (cycled for more classes). Safety mode paints safe
//! points white, unsafe points black and every unclear region with a colour
//! hashed from its id.

use std::io::Write;
use std::str::FromStr;

use crate::cloud::{SafetyLabel, SafetyPartition, SemanticPointCloud};
use crate::error::{Error, Result};
use crate::regions::RegionSet;

/// Colours of classes 0, 1, 2, ...
pub const CLASS_PALETTE: [[u8; 3]; 8] = [
    [60, 160, 60],
    [150, 150, 150],
    [120, 80, 40],
    [40, 90, 200],
    [220, 200, 60],
    [200, 60, 60],
    [160, 60, 200],
    [60, 200, 200],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMode {
    Class,
    Safety,
}

impl FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(ColorMode::Class),
            "safety" => Ok(ColorMode::Safety),
            _ => Err(Error::InvalidParameter(format!(
                "unknown colour mode '{s}' (class|safety)"
            ))),
        }
    }
}

/// Mid-range colour of a region id, never white or black.
pub fn region_color(id: usize) -> [u8; 3] {
    let mut z = (id as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let c = |shift: u32| 40 + ((z >> shift) & 0xff) as u8 % 176;
    [c(0), c(8), c(16)]
}

pub fn point_color(
    i: usize,
    cloud: &SemanticPointCloud,
    partition: &SafetyPartition,
    regions: &RegionSet,
    mode: ColorMode,
) -> [u8; 3] {
    match mode {
        ColorMode::Class => CLASS_PALETTE[cloud.argmax_class(i) % CLASS_PALETTE.len()],
        ColorMode::Safety => match partition.label(i) {
            SafetyLabel::Safe => [255, 255, 255],
            SafetyLabel::Unsafe => [0, 0, 0],
            SafetyLabel::Unclear => regions.point_to_region[i].map_or([128, 128, 128], region_color),
        },
    }
}

pub fn write_ply<W: Write>(
    w: &mut W,
    cloud: &SemanticPointCloud,
    partition: &SafetyPartition,
    regions: &RegionSet,
    mode: ColorMode,
) -> Result<()> {
    if partition.len() != cloud.len() || regions.point_to_region.len() != cloud.len() {
        return Err(Error::InvalidInput("partition and regions must match the cloud".into()));
    }
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.position(i);
        let [r, g, b] = point_color(i, cloud, partition, regions, mode);
        writeln!(w, "{} {} {} {r} {g} {b}", p.x, p.y, p.z)?;
    }
    Ok(())
}
