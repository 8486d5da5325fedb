//! File output helpers and the PFM disparity format.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lightfield::DisparityMap;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Encodes a disparity map as a single-channel little-endian PFM.
///
/// Header is `Pf\n<w> <h>\n-1\n`; rows are stored bottom-to-top. Invalid
/// pixels are written as `+inf`, which is how the HCI toolkit marks them.
pub fn encode_pfm(map: &DisparityMap) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let header = format!("Pf\n{w} {h}\n-1\n");
    let mut out = Vec::with_capacity(header.len() + 4 * w * h);
    out.extend_from_slice(header.as_bytes());
    for y in (0..h).rev() {
        for x in 0..w {
            let v = if map.is_valid(x, y) {
                map.get(x, y) as f32
            } else {
                f32::INFINITY
            };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, map: &DisparityMap) -> Result<()> {
    write_atomic(path, &encode_pfm(map))
}

/// Decodes a PFM. Accepts `Pf` (grayscale) and `PF` (color, first channel kept),
/// either byte order. Non-finite values become invalid pixels.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DisparityMap> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("magic is neither Pf nor PF")),
    };
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let need = w * h * channels * 4;
    if bytes.len() < pos + need {
        return Err(bad("raster shorter than header promises"));
    }
    let mut map = DisparityMap::new(w, h);
    let raster = &bytes[pos..pos + need];
    for (i, chunk) in raster.chunks_exact(4 * channels).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        } as f64;
        let x = i % w;
        let y = h - 1 - i / w;
        if v.is_finite() {
            map.set(x, y, v);
        }
    }
    Ok(map)
}

pub fn read_pfm(path: &Path) -> Result<DisparityMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

/// 8-bit preview stretching the valid range of `map` to `[0, 255]`.
pub fn disparity_preview(map: &DisparityMap) -> crate::image::Image {
    let (lo, hi) = map.valid_range().unwrap_or((0.0, 1.0));
    let span = if hi > lo { hi - lo } else { 1.0 };
    crate::image::Image::from_fn(map.width(), map.height(), 1, |x, y, px| {
        px[0] = if map.is_valid(x, y) {
            (map.get(x, y) - lo) / span
        } else {
            0.0
        };
    })
}
