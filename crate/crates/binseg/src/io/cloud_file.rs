//! Versioned binary cloud container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    8 bytes  "BSEGCLD\0"
//! version  u32      currently 1
//! flags    u32      bit 0 offsets, bit 1 gt_instance, bit 2 gt_semantic,
//!                   bit 3 semantic_scores
//! n_points u64
//! n_class  u16
//! per class: name_len u16, name utf-8, background u8,
//!            has_mean u8, mean_size f64
//! provenance: gen_len u16, generator utf-8, seed u64
//! columns: xyz (n*3 f64), semantic (n u32), then per flag:
//!          offsets (n*3 f64), gt_instance (n u32), gt_semantic (n u32),
//!          semantic_scores (n*n_class f32)
//! ```
//!
//! `read` never trusts declared counts for allocation; vectors grow only as
//! data actually arrives, so truncated or hostile headers fail cleanly.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::cloud::{ClassCatalog, ClassInfo, LabeledCloud, Point3, ScoreMatrix};
use crate::io::Provenance;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"BSEGCLD\0";
const VERSION: u32 = 1;

const FLAG_OFFSETS: u32 = 1;
const FLAG_GT_INSTANCE: u32 = 2;
const FLAG_GT_SEMANTIC: u32 = 4;
const FLAG_SCORES: u32 = 8;

/// A cloud with the catalog and provenance it travels with.
#[derive(Debug, Clone)]
pub struct CloudFile {
    pub cloud: LabeledCloud,
    pub catalog: ClassCatalog,
    pub provenance: Provenance,
}

pub fn write_cloud<W: Write>(w: &mut W, file: &CloudFile) -> Result<()> {
    let cloud = &file.cloud;
    let n = cloud.len() as u64;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let mut flags = 0u32;
    if cloud.offsets.is_some() {
        flags |= FLAG_OFFSETS;
    }
    if cloud.gt_instance.is_some() {
        flags |= FLAG_GT_INSTANCE;
    }
    if cloud.gt_semantic.is_some() {
        flags |= FLAG_GT_SEMANTIC;
    }
    if cloud.semantic_scores.is_some() {
        flags |= FLAG_SCORES;
    }
    w.write_u32::<LittleEndian>(flags)?;
    w.write_u64::<LittleEndian>(n)?;

    w.write_u16::<LittleEndian>(file.catalog.classes.len() as u16)?;
    for class in &file.catalog.classes {
        write_str(w, &class.name)?;
        w.write_u8(class.background as u8)?;
        w.write_u8(class.mean_size.is_some() as u8)?;
        w.write_f64::<LittleEndian>(class.mean_size.unwrap_or(0.0))?;
    }
    write_str(w, &file.provenance.generator)?;
    w.write_u64::<LittleEndian>(file.provenance.seed)?;

    for p in &cloud.points {
        write_point(w, p)?;
    }
    for &s in &cloud.semantic {
        w.write_u32::<LittleEndian>(s)?;
    }
    if let Some(offsets) = &cloud.offsets {
        for p in offsets {
            write_point(w, p)?;
        }
    }
    if let Some(gt) = &cloud.gt_instance {
        for &g in gt {
            w.write_u32::<LittleEndian>(g)?;
        }
    }
    if let Some(gt) = &cloud.gt_semantic {
        for &g in gt {
            w.write_u32::<LittleEndian>(g)?;
        }
    }
    if let Some(scores) = &cloud.semantic_scores {
        for &v in &scores.values {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_cloud<R: Read>(r: &mut R) -> Result<CloudFile> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a cloud file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported cloud file version {version}")));
    }
    let flags = r.read_u32::<LittleEndian>()?;
    if flags & !(FLAG_OFFSETS | FLAG_GT_INSTANCE | FLAG_GT_SEMANTIC | FLAG_SCORES) != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#x}")));
    }
    let n = usize::try_from(r.read_u64::<LittleEndian>()?)
        .map_err(|_| Error::Format("point count does not fit this platform".into()))?;

    let n_classes = r.read_u16::<LittleEndian>()? as usize;
    let mut classes = Vec::with_capacity(n_classes.min(256));
    for _ in 0..n_classes {
        let name = read_str(r)?;
        let background = r.read_u8()? != 0;
        let has_mean = r.read_u8()? != 0;
        let mean = r.read_f64::<LittleEndian>()?;
        let mean_size = if has_mean {
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(Error::Format(format!("class '{name}' has invalid mean size {mean}")));
            }
            Some(mean)
        } else {
            None
        };
        classes.push(ClassInfo { name, background, mean_size });
    }
    let catalog = ClassCatalog { classes };
    catalog.validate().map_err(|e| Error::Format(format!("catalog: {e}")))?;

    let generator = read_str(r)?;
    let seed = r.read_u64::<LittleEndian>()?;

    let points = read_points(r, n)?;
    let semantic = read_u32s(r, n)?;
    let offsets = if flags & FLAG_OFFSETS != 0 {
        Some(read_points(r, n)?)
    } else {
        None
    };
    let gt_instance = if flags & FLAG_GT_INSTANCE != 0 {
        Some(read_u32s(r, n)?)
    } else {
        None
    };
    let gt_semantic = if flags & FLAG_GT_SEMANTIC != 0 {
        Some(read_u32s(r, n)?)
    } else {
        None
    };
    let semantic_scores = if flags & FLAG_SCORES != 0 {
        let n_values = n
            .checked_mul(catalog.len())
            .ok_or_else(|| Error::Format("score matrix size overflows".into()))?;
        let mut values = Vec::with_capacity(n_values.min(1 << 20));
        for _ in 0..n_values {
            values.push(r.read_f32::<LittleEndian>()?);
        }
        Some(ScoreMatrix { n_classes: catalog.len(), values })
    } else {
        None
    };

    let cloud = LabeledCloud { points, semantic, semantic_scores, offsets, gt_instance, gt_semantic };
    cloud
        .validate(catalog.len())
        .map_err(|e| Error::Format(format!("cloud: {e}")))?;
    Ok(CloudFile { cloud, catalog, provenance: Provenance { generator, seed } })
}

pub fn save_cloud(path: &Path, file: &CloudFile) -> Result<()> {
    let mut bytes = Vec::new();
    write_cloud(&mut bytes, file)?;
    crate::io::atomic_write(path, &bytes)
}

pub fn load_cloud(path: &Path) -> Result<CloudFile> {
    let bytes = std::fs::read(path)?;
    read_cloud(&mut bytes.as_slice())
}

fn write_point<W: Write>(w: &mut W, p: &Point3) -> Result<()> {
    w.write_f64::<LittleEndian>(p.x)?;
    w.write_f64::<LittleEndian>(p.y)?;
    w.write_f64::<LittleEndian>(p.z)?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::Format("string too long for cloud file".into()));
    }
    w.write_u16::<LittleEndian>(bytes.len() as u16)?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("string is not utf-8".into()))
}

fn read_points<R: Read>(r: &mut R, n: usize) -> Result<Vec<Point3>> {
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        out.push(Point3::new(
            r.read_f64::<LittleEndian>()?,
            r.read_f64::<LittleEndian>()?,
            r.read_f64::<LittleEndian>()?,
        ));
    }
    Ok(out)
}

fn read_u32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        out.push(r.read_u32::<LittleEndian>()?);
    }
    Ok(out)
}
