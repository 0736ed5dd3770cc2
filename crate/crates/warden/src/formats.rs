//! Label maps as binary PGM plus a JSON sidecar, volume manifests,
//! corpus directories and JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anatomy_warden_core::{Phase, SegMap};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metadata stored next to each PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spacing_mm: (f64, f64),
    pub slice_index: u32,
    pub num_slices: u32,
    pub phase: Phase,
}

impl Sidecar {
    pub fn of(map: &SegMap) -> Self {
        Self {
            spacing_mm: map.spacing_mm,
            slice_index: map.slice_index,
            num_slices: map.num_slices,
            phase: map.phase,
        }
    }
}

/// `<name>.json` next to `<name>.pgm`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn check_path(path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::EmptyPath);
    }
    Ok(())
}

/// Splits a P5 header into its four fields and the offset of the raster.
fn parse_pgm_header(bytes: &[u8]) -> std::result::Result<([usize; 3], usize), String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and comments before each number.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("expected a decimal number".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("number out of range")?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    Ok((fields, pos + 1))
}

pub fn load_segmap(path: &Path) -> Result<SegMap> {
    check_path(path)?;
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let ([width, height, maxval], offset) = parse_pgm_header(&bytes).map_err(malformed)?;
    if width == 0 || width != height {
        return Err(malformed(format!("{width}x{height} is not a square grid")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(malformed(format!("maxval {maxval} needs one byte per pixel")));
    }
    let raster = &bytes[offset..];
    if raster.len() != width * height {
        return Err(malformed(format!(
            "{} raster bytes for a {width}x{height} grid",
            raster.len()
        )));
    }
    let map = SegMap::from_labels(width, raster.to_vec()).map_err(|source| Error::Map {
        path: path.to_path_buf(),
        source,
    })?;

    let side = sidecar_path(path);
    if !side.exists() {
        return Err(Error::MissingSidecar(side));
    }
    let meta: Sidecar = read_json(&side)?;
    let map = map
        .with_slice(meta.slice_index, meta.num_slices)
        .map_err(|source| Error::Map {
            path: side.clone(),
            source,
        })?
        .with_spacing(meta.spacing_mm)
        .with_phase(meta.phase);
    Ok(map)
}

/// Writes `path` (PGM, maxval 3) and its sidecar.
pub fn save_segmap(map: &SegMap, path: &Path) -> Result<()> {
    check_path(path)?;
    let n = map.size();
    let mut bytes = format!("P5\n{n} {n}\n3\n").into_bytes();
    bytes.extend_from_slice(map.labels());
    fs::write(path, bytes).map_err(Error::io(path))?;
    write_json(&sidecar_path(path), &Sidecar::of(map))
}

/// One subject/phase stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeManifest {
    /// Slice files, relative to the manifest's directory unless absolute.
    pub slices: Vec<PathBuf>,
    pub slice_thickness_mm: f64,
    pub spacing_mm: (f64, f64),
}

pub fn load_volume(manifest_path: &Path) -> Result<(Vec<SegMap>, VolumeManifest)> {
    let manifest: VolumeManifest = read_json(manifest_path)?;
    if manifest.slices.is_empty() {
        return Err(Error::corrupt(manifest_path, "manifest lists no slices"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let maps = manifest
        .slices
        .iter()
        .map(|p| load_segmap(&base.join(p)))
        .collect::<Result<Vec<_>>>()?;
    if maps.iter().any(|m| m.size() != maps[0].size()) {
        return Err(Error::corrupt(manifest_path, "slices differ in grid size"));
    }
    Ok((maps, manifest))
}

/// Writes `<stem>_sNN.pgm` slices and `<stem>.volume.json` into `dir`.
pub fn save_volume(
    maps: &[SegMap],
    dir: &Path,
    stem: &str,
    slice_thickness_mm: f64,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut slices = Vec::with_capacity(maps.len());
    for (i, m) in maps.iter().enumerate() {
        let name = PathBuf::from(format!("{stem}_s{i:02}.pgm"));
        save_segmap(m, &dir.join(&name))?;
        slices.push(name);
    }
    let manifest = VolumeManifest {
        slices,
        slice_thickness_mm,
        spacing_mm: maps.first().map_or((1.0, 1.0), |m| m.spacing_mm),
    };
    let path = dir.join(format!("{stem}.volume.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

/// `.pgm` files of a directory in name order, or the file itself.
pub fn list_maps(path: &Path) -> Result<Vec<PathBuf>> {
    check_path(path)?;
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map_err(Error::io(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    out.sort();
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<(PathBuf, SegMap)>> {
    list_maps(path)?
        .into_iter()
        .map(|p| load_segmap(&p).map(|m| (p, m)))
        .collect()
}

/// Writes `<prefix>_NNNNN.pgm` files; returns their paths.
pub fn save_corpus(maps: &[SegMap], dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    maps.iter()
        .enumerate()
        .map(|(i, m)| {
            let p = dir.join(format!("{prefix}_{i:05}.pgm"));
            save_segmap(m, &p).map(|_| p)
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    check_path(path)?;
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    check_path(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(Error::io(path))
}
