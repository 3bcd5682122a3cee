//! ASCII PLY interchange with extended per-vertex properties.
//!
//! The writer emits `x y z` plus `semantic`, optional `offset_x/y/z`,
//! `gt_instance` and `gt_semantic` properties, and records the catalog and
//! provenance as comment lines. The reader accepts any ASCII PLY whose
//! first element is `vertex` with at least `x y z`; unknown properties are
//! parsed and ignored. The binary cloud container remains the
//! authoritative format; PLY exists for external viewers.

use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::{ClassCatalog, ClassInfo, LabeledCloud, Point3, BACKGROUND_INSTANCE};
use crate::io::Provenance;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PlyFile {
    pub cloud: LabeledCloud,
    /// Present when the file carries catalog comments.
    pub catalog: Option<ClassCatalog>,
    pub provenance: Option<Provenance>,
}

pub fn write_ply(file: &PlyFile) -> Result<String> {
    let cloud = &file.cloud;
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    if let Some(p) = &file.provenance {
        let _ = writeln!(out, "comment generator {} seed {}", p.generator, p.seed);
    }
    if let Some(catalog) = &file.catalog {
        for (id, c) in catalog.classes.iter().enumerate() {
            let _ = writeln!(
                out,
                "comment class {id} {} {} {}",
                c.name,
                u8::from(c.background),
                c.mean_size.map_or("-".to_string(), |m| format!("{m}")),
            );
        }
    }
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    out.push_str("property uint semantic\n");
    if cloud.offsets.is_some() {
        out.push_str("property double offset_x\nproperty double offset_y\nproperty double offset_z\n");
    }
    if cloud.gt_instance.is_some() {
        out.push_str("property uint gt_instance\n");
    }
    if cloud.gt_semantic.is_some() {
        out.push_str("property uint gt_semantic\n");
    }
    out.push_str("end_header\n");
    for i in 0..cloud.len() {
        let p = &cloud.points[i];
        let _ = write!(out, "{} {} {} {}", p.x, p.y, p.z, cloud.semantic[i]);
        if let Some(offsets) = &cloud.offsets {
            let o = &offsets[i];
            let _ = write!(out, " {} {} {}", o.x, o.y, o.z);
        }
        if let Some(gt) = &cloud.gt_instance {
            let _ = write!(out, " {}", gt[i]);
        }
        if let Some(gt) = &cloud.gt_semantic {
            let _ = write!(out, " {}", gt[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_ply(path: &Path, file: &PlyFile) -> Result<()> {
    crate::io::atomic_write(path, write_ply(file)?.as_bytes())
}

const SCALAR_TYPES: [&str; 10] =
    ["char", "uchar", "short", "ushort", "int", "uint", "float", "double", "int8", "uint8"];

pub fn read_ply(text: &str) -> Result<PlyFile> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Format("missing 'ply' header line".into()));
    }

    let mut n_vertices: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut past_vertex_element = false;
    let mut catalog_classes: Vec<(usize, ClassInfo)> = Vec::new();
    let mut provenance = None;
    let mut saw_format = false;
    let mut header_done = false;

    for line in lines.by_ref() {
        let line = line.trim();
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("format") => {
                if fields.get(1) != Some(&"ascii") {
                    return Err(Error::Format("only ascii PLY is supported".into()));
                }
                saw_format = true;
            }
            Some("comment") => {
                match fields.get(1).copied() {
                    Some("generator") if fields.len() >= 5 && fields[3] == "seed" => {
                        if let Ok(seed) = fields[4].parse() {
                            provenance =
                                Some(Provenance { generator: fields[2].to_string(), seed });
                        }
                    }
                    Some("class") if fields.len() >= 6 => {
                        if let Ok(id) = fields[2].parse::<usize>() {
                            let mean_size = fields[5].parse::<f64>().ok().filter(|m| *m > 0.0);
                            catalog_classes.push((
                                id,
                                ClassInfo {
                                    name: fields[3].to_string(),
                                    background: fields[4] == "1",
                                    mean_size,
                                },
                            ));
                        }
                    }
                    _ => {}
                }
            }
            Some("element") => {
                if fields.len() < 3 {
                    return Err(Error::Format("malformed element line".into()));
                }
                if fields[1] == "vertex" && n_vertices.is_none() {
                    n_vertices = Some(
                        fields[2]
                            .parse()
                            .map_err(|_| Error::Format("bad vertex count".into()))?,
                    );
                    in_vertex_element = true;
                } else {
                    if in_vertex_element {
                        past_vertex_element = true;
                    }
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue; // other elements' properties are skipped
                }
                if fields.get(1) == Some(&"list") {
                    return Err(Error::Format("list properties are not supported on vertices".into()));
                }
                if fields.len() != 3 || !SCALAR_TYPES.contains(&fields[1]) {
                    return Err(Error::Format(format!("unsupported property line '{line}'")));
                }
                properties.push(fields[2].to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some("obj_info") | None => {}
            Some(other) => {
                return Err(Error::Format(format!("unexpected header keyword '{other}'")));
            }
        }
    }
    if !header_done || !saw_format {
        return Err(Error::Format("truncated PLY header".into()));
    }
    let n = n_vertices.ok_or_else(|| Error::Format("no vertex element".into()))?;
    if past_vertex_element {
        // Vertices must come first so their rows lead the data section.
        return Err(Error::Format("vertex element must be the first element".into()));
    }

    let col = |name: &str| properties.iter().position(|p| p == name);
    let (cx, cy, cz) = match (col("x"), col("y"), col("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Format("vertex element lacks x/y/z".into())),
    };
    let c_sem = col("semantic").or_else(|| col("class"));
    let c_off = match (col("offset_x"), col("offset_y"), col("offset_z")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        (None, None, None) => None,
        _ => return Err(Error::Format("partial offset properties".into())),
    };
    let c_gti = col("gt_instance");
    let c_gts = col("gt_semantic");

    let mut points = Vec::with_capacity(n.min(1 << 20));
    let mut semantic = Vec::with_capacity(n.min(1 << 20));
    let mut offsets = c_off.map(|_| Vec::with_capacity(n.min(1 << 20)));
    let mut gt_instance = c_gti.map(|_| Vec::with_capacity(n.min(1 << 20)));
    let mut gt_semantic = c_gts.map(|_| Vec::with_capacity(n.min(1 << 20)));

    for _ in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format("fewer vertex rows than declared".into()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < properties.len() {
            return Err(Error::Format("vertex row has too few columns".into()));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number '{}'", fields[i])))
        };
        let uint = |i: usize| -> Result<u32> {
            let v = num(i)?;
            if !(0.0..=u32::MAX as f64).contains(&v) || v.fract() != 0.0 {
                return Err(Error::Format(format!("bad integer '{}'", fields[i])));
            }
            Ok(v as u32)
        };
        let p = Point3::new(num(cx)?, num(cy)?, num(cz)?);
        if !p.is_finite() {
            return Err(Error::Format("non-finite vertex coordinate".into()));
        }
        points.push(p);
        semantic.push(match c_sem {
            Some(c) => uint(c)?,
            None => 0,
        });
        if let (Some((a, b, c)), Some(out)) = (c_off, offsets.as_mut()) {
            let o = Point3::new(num(a)?, num(b)?, num(c)?);
            if !o.is_finite() {
                return Err(Error::Format("non-finite offset".into()));
            }
            out.push(o);
        }
        if let (Some(c), Some(out)) = (c_gti, gt_instance.as_mut()) {
            out.push(uint(c)?);
        }
        if let (Some(c), Some(out)) = (c_gts, gt_semantic.as_mut()) {
            out.push(uint(c)?);
        }
    }

    let catalog = if catalog_classes.is_empty() {
        None
    } else {
        catalog_classes.sort_by_key(|(id, _)| *id);
        if catalog_classes
            .iter()
            .enumerate()
            .any(|(want, (id, _))| want != *id)
        {
            return Err(Error::Format("class comments have gaps".into()));
        }
        let catalog =
            ClassCatalog { classes: catalog_classes.into_iter().map(|(_, c)| c).collect() };
        catalog
            .validate()
            .map_err(|e| Error::Format(format!("catalog comments: {e}")))?;
        Some(catalog)
    };
    if let Some(catalog) = &catalog {
        if let Some(bad) = semantic.iter().position(|&s| s as usize >= catalog.len()) {
            return Err(Error::Format(format!(
                "semantic id {} at row {bad} outside the catalog",
                semantic[bad]
            )));
        }
    }

    Ok(PlyFile {
        cloud: LabeledCloud { points, semantic, semantic_scores: None, offsets, gt_instance, gt_semantic },
        catalog,
        provenance,
    })
}

pub fn load_ply(path: &Path) -> Result<PlyFile> {
    read_ply(&std::fs::read_to_string(path)?)
}

/// Background gt ids survive the round trip as the reserved sentinel.
pub fn is_background_id(id: u32) -> bool {
    id == BACKGROUND_INSTANCE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneConfig};

    #[test]
    fn round_trip_preserves_structure() {
        let scene = generate_scene(&SceneConfig {
            n_objects: 2,
            points_per_sqm: 150.0,
            floor_points_per_sqm: 15.0,
            seed: 4,
            ..SceneConfig::default()
        })
        .unwrap();
        let file = PlyFile {
            cloud: scene.cloud.clone(),
            catalog: Some(scene.catalog.clone()),
            provenance: Some(Provenance { generator: "chacha8".into(), seed: 4 }),
        };
        let text = write_ply(&file).unwrap();
        let back = read_ply(&text).unwrap();
        assert_eq!(back.cloud.len(), scene.cloud.len());
        assert_eq!(back.cloud.semantic, scene.cloud.semantic);
        assert_eq!(back.cloud.gt_instance, scene.cloud.gt_instance);
        assert_eq!(back.provenance, file.provenance);
        let catalog = back.catalog.unwrap();
        assert_eq!(catalog.len(), scene.catalog.len());
        for (a, b) in catalog.classes.iter().zip(scene.catalog.classes.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.background, b.background);
        }
        for (a, b) in back.cloud.points.iter().zip(scene.cloud.points.iter()) {
            assert!(a.dist(b) < 1e-12);
        }
    }

    #[test]
    fn reads_minimal_foreign_ply() {
        let text = "ply\nformat ascii 1.0\ncomment made elsewhere\n\
                    element vertex 2\n\
                    property float x\nproperty float y\nproperty float z\n\
                    property uchar red\n\
                    end_header\n\
                    0.5 1.5 2.5 255\n\
                    1 2 3 0\n";
        let file = read_ply(text).unwrap();
        assert_eq!(file.cloud.len(), 2);
        assert_eq!(file.cloud.semantic, vec![0, 0]);
        assert!(file.catalog.is_none());
        assert_eq!(file.cloud.points[1], Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(read_ply("").is_err());
        assert!(read_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        assert!(read_ply("ply\nformat ascii 1.0\nelement vertex 1\nend_header\n").is_err());
        // too few rows
        assert!(read_ply(
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n"
        )
        .is_err());
        // NaN coordinate
        assert!(read_ply(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\nnan 0 0\n"
        )
        .is_err());
        // list property on vertices
        assert!(read_ply(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty list uchar int vertex_indices\nend_header\n0\n"
        )
        .is_err());
    }
}
