//! File formats: `.rff` RF frames, binary PGM images, dataset manifests.
//!
//! An `.rff` file is a single-line JSON header terminated by `\n`, followed
//! immediately by `n_lines * n_samples` little-endian 32-bit floats in
//! line-major order. All writers go through a temp-file-plus-rename so
//! partially written outputs are never observed.

use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recon::{BModeImage, ConvexGeometry, RfFrame};

/// Largest accepted `.rff` header line, bytes.
const MAX_HEADER_LEN: usize = 4096;

#[derive(Debug, Serialize, Deserialize)]
struct RffHeader {
    n_lines: usize,
    n_samples: usize,
    fs_hz: f64,
    f0_mhz: f64,
    c_mps: f64,
    radius_m: f64,
    angular_span_rad: f64,
    depth_offset_m: f64,
    label: Option<u8>,
}

/// Write `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serialize a frame to `.rff` bytes.
pub fn rff_bytes(frame: &RfFrame) -> Vec<u8> {
    let header = RffHeader {
        n_lines: frame.n_lines,
        n_samples: frame.n_samples,
        fs_hz: frame.fs_hz,
        f0_mhz: frame.f0_mhz,
        c_mps: frame.c_mps,
        radius_m: frame.geometry.radius_m,
        angular_span_rad: frame.geometry.angular_span_rad,
        depth_offset_m: frame.geometry.depth_offset_m,
        label: frame.label,
    };
    let mut out = serde_json::to_string(&header)
        .expect("header serialization cannot fail")
        .into_bytes();
    out.push(b'\n');
    out.reserve(frame.samples().len() * 4);
    for &v in frame.samples() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn write_rff(path: &Path, frame: &RfFrame) -> Result<()> {
    atomic_write(path, &rff_bytes(frame))
}

pub fn read_rff(path: &Path) -> Result<RfFrame> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            return Err(Error::Format(format!(
                "{}: header line never terminated",
                path.display()
            )));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > MAX_HEADER_LEN {
            return Err(Error::Format(format!(
                "{}: header longer than {MAX_HEADER_LEN} bytes",
                path.display()
            )));
        }
    }
    let header: RffHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;

    let count = header
        .n_lines
        .checked_mul(header.n_samples)
        .ok_or_else(|| Error::Format(format!("{}: header dimensions overflow", path.display())))?;
    let mut raw = vec![0u8; count * 4];
    reader.read_exact(&mut raw).map_err(|e| {
        Error::Format(format!("{}: truncated sample payload: {e}", path.display()))
    })?;
    let samples: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();

    RfFrame::new(
        samples,
        header.n_lines,
        header.n_samples,
        header.fs_hz,
        header.f0_mhz,
        header.c_mps,
        ConvexGeometry {
            radius_m: header.radius_m,
            angular_span_rad: header.angular_span_rad,
            depth_offset_m: header.depth_offset_m,
        },
        header.label,
    )
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

/// Encode pixels as binary PGM (P5, maxval 255).
pub fn pgm_bytes(pixels: &[u8], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_pgm(path: &Path, image: &BModeImage) -> Result<()> {
    atomic_write(path, &pgm_bytes(image.pixels(), image.width, image.height))
}

/// Read a binary PGM (P5, maxval 255). Returns (pixels, width, height).
pub fn read_pgm(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes).map_err(|msg| Error::Format(format!("{}: {msg}", path.display())))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<(Vec<u8>, usize, usize), String> {
    if !bytes.starts_with(b"P5") {
        return Err("not a binary PGM (missing P5 magic)".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and '#' comment lines between tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err("expected integer in header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("bad header integer: {e}"))?;
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("missing raster separator".into());
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .ok_or_else(|| "dimensions overflow".to_string())?;
    let raster = bytes.get(pos..pos + need).ok_or("truncated raster")?;
    Ok((raster.to_vec(), width, height))
}

/// Export as 8-bit grayscale PNG.
pub fn write_png(path: &Path, image: &BModeImage) -> Result<()> {
    let buf =
        image::GrayImage::from_raw(image.width as u32, image.height as u32, image.pixels().to_vec())
            .expect("pixel buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("{}: png encode failed: {e}", path.display())))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

/// Write a `path,label` manifest. Paths are stored relative to the
/// manifest's own directory.
pub fn write_manifest(path: &Path, entries: &[(String, u8)]) -> Result<()> {
    let mut out = String::from("path,label\n");
    for (p, label) in entries {
        out.push_str(&format!("{p},{label}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Read a manifest, resolving frame paths against the manifest directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, u8)>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut lines = text.lines();
    match lines.next() {
        Some("path,label") => {}
        other => {
            return Err(Error::Format(format!(
                "{}: expected 'path,label' header, got {other:?}",
                path.display()
            )))
        }
    }
    let mut entries = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (p, l) = line.rsplit_once(',').ok_or_else(|| {
            Error::Format(format!("{}: line {}: missing comma", path.display(), idx + 2))
        })?;
        let label: u8 = l.trim().parse().map_err(|e| {
            Error::Format(format!("{}: line {}: bad label: {e}", path.display(), idx + 2))
        })?;
        if label > 1 {
            return Err(Error::Format(format!(
                "{}: line {}: label must be 0 or 1",
                path.display(),
                idx + 2
            )));
        }
        entries.push((base.join(p), label));
    }
    Ok(entries)
}
