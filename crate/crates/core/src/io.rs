//! Readers and writers for the on-disk formats.
//!
//! * PGM/PPM (binary `P5`/`P6`) via the `image` crate; 16-bit PGM samples
//!   are big-endian as the format requires.
//! * PFM greyscale (`Pf`), scale `-1.0`, little-endian, rows bottom-to-top.
//! * Raw f32 rasters: 16-byte header `"RGTD"`, width, height, reserved
//!   (all u32 little-endian) followed by row-major little-endian f32.
//! * Embedding sets: header `"RGTE"`, version u32, count u32, dim u32,
//!   modality u8, has_pos u8 (0 none, 1 xyz, 2 frame index); then
//!   `count * dim` f32 rows, then the optional f32 locations, then one
//!   UTF-8 id per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};
use ndarray::Array2;

use crate::crossmodal::{EmbeddingSet, Locations, Modality};
use crate::error::{Error, Result};
use crate::raster::{DepthMap, Gray16, Gray8, Raster, Rgb8};

pub const RGTD_MAGIC: &[u8; 4] = b"RGTD";
pub const RGTE_MAGIC: &[u8; 4] = b"RGTE";
pub const RGTE_VERSION: u32 = 1;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_pnm(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn encode_pnm(path: &Path, bytes: &[u8], w: usize, h: usize, subtype: PnmSubtype, color: ExtendedColorType) -> Result<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(subtype)
        .write_image(bytes, w as u32, h as u32, color)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    write_bytes(path, &buf)
}

pub fn read_pgm8(path: impl AsRef<Path>) -> Result<Gray8> {
    let path = path.as_ref();
    match decode_pnm(path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Raster::new(w as usize, h as usize, img.into_raw())
        }
        other => Err(Error::format("PGM", path, format!("expected 8-bit greyscale, got {:?}", other.color()))),
    }
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<Gray16> {
    let path = path.as_ref();
    match decode_pnm(path)? {
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            Raster::new(w as usize, h as usize, img.into_raw())
        }
        other => Err(Error::format("PGM", path, format!("expected 16-bit greyscale, got {:?}", other.color()))),
    }
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Rgb8> {
    let path = path.as_ref();
    match decode_pnm(path)? {
        DynamicImage::ImageRgb8(img) => {
            let (w, h) = img.dimensions();
            let data = img.into_raw().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            Raster::new(w as usize, h as usize, data)
        }
        other => Err(Error::format("PPM", path, format!("expected 8-bit RGB, got {:?}", other.color()))),
    }
}

pub fn write_pgm8(path: impl AsRef<Path>, img: &Gray8) -> Result<()> {
    encode_pnm(
        path.as_ref(),
        img.data(),
        img.width(),
        img.height(),
        PnmSubtype::Graymap(SampleEncoding::Binary),
        ExtendedColorType::L8,
    )
}

pub fn write_pgm16(path: impl AsRef<Path>, img: &Gray16) -> Result<()> {
    // the image crate's PNM encoder has no 16-bit path
    let mut buf = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    buf.extend(img.data().iter().flat_map(|v| v.to_be_bytes()));
    write_bytes(path.as_ref(), &buf)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Rgb8) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().flatten().copied().collect();
    encode_pnm(
        path.as_ref(),
        &bytes,
        img.width(),
        img.height(),
        PnmSubtype::Pixmap(SampleEncoding::Binary),
        ExtendedColorType::Rgb8,
    )
}

/// Splits a PFM/PNM-style text header into `count` whitespace-separated
/// tokens and returns them with the offset of the binary payload.
fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the samples
    (i < bytes.len()).then_some((tokens, i + 1))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let bad = |r: &str| Error::format("PFM", path, r.to_string());
    let (tokens, offset) = header_tokens(&bytes, 4).ok_or_else(|| bad("truncated header"))?;
    if tokens[0] != "Pf" {
        return Err(bad("only greyscale 'Pf' files are supported"));
    }
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero"));
    }
    let little = scale < 0.0;
    let payload = &bytes[offset..];
    if payload.len() != w * h * 4 {
        return Err(bad("payload size does not match dimensions"));
    }
    let mut data = vec![0f32; w * h];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, x) = (k / w, k % w);
        data[(h - 1 - file_row) * w + x] = v;
    }
    Raster::new(w, h, data)
}

pub fn write_pfm(path: impl AsRef<Path>, img: &DepthMap) -> Result<()> {
    let (w, h) = img.dims();
    let mut bytes = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for v in img.row(y) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path.as_ref(), &bytes)
}

pub fn read_rgtd(path: impl AsRef<Path>) -> Result<Raster<f32>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let bad = |r: &str| Error::format("RGTD", path, r.to_string());
    if bytes.len() < 16 || &bytes[..4] != RGTD_MAGIC {
        return Err(bad("missing RGTD header"));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let (w, h) = (word(4), word(8));
    let payload = &bytes[16..];
    if payload.len() != w * h * 4 {
        return Err(bad("payload size does not match dimensions"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Raster::new(w, h, data)
}

pub fn write_rgtd(path: impl AsRef<Path>, img: &Raster<f32>) -> Result<()> {
    let (w, h) = img.dims();
    let mut bytes = Vec::with_capacity(16 + w * h * 4);
    bytes.extend_from_slice(RGTD_MAGIC);
    bytes.extend_from_slice(&(w as u32).to_le_bytes());
    bytes.extend_from_slice(&(h as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    for v in img.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path.as_ref(), &bytes)
}

/// Reads a depth map in either PFM or RGTD format, chosen by content.
pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    {
        use std::io::Read;
        let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
        if n < 2 {
            return Err(Error::format("depth", path, "file too short"));
        }
    }
    if &head == RGTD_MAGIC {
        read_rgtd(path)
    } else if &head[..2] == b"Pf" {
        read_pfm(path)
    } else {
        Err(Error::format("depth", path, "neither PFM nor RGTD"))
    }
}

pub fn write_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<()> {
    let path = path.as_ref();
    let has_pos: u8 = match set.locations() {
        Locations::None => 0,
        Locations::Geographic(_) => 1,
        Locations::Frame(_) => 2,
    };
    let mut out = BufWriter::new(Vec::new());
    let mut put = |b: &[u8]| out.write_all(b).expect("writing to memory");
    put(RGTE_MAGIC);
    put(&RGTE_VERSION.to_le_bytes());
    put(&(set.len() as u32).to_le_bytes());
    put(&(set.dim() as u32).to_le_bytes());
    put(&[set.modality().code(), has_pos]);
    for v in set.vectors().iter() {
        put(&(*v as f32).to_le_bytes());
    }
    match set.locations() {
        Locations::None => {}
        Locations::Geographic(p) => {
            for v in p.iter().flatten() {
                put(&(*v as f32).to_le_bytes());
            }
        }
        Locations::Frame(f) => {
            for v in f {
                put(&(*v as f32).to_le_bytes());
            }
        }
    }
    for id in set.ids() {
        put(id.as_bytes());
        put(b"\n");
    }
    let bytes = out.into_inner().expect("in-memory writer");
    write_bytes(path, &bytes)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let bad = |r: String| Error::format("RGTE", path, r);
    if bytes.len() < 18 || &bytes[..4] != RGTE_MAGIC {
        return Err(bad("missing RGTE header".into()));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let version = word(4) as u32;
    if version != RGTE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (count, dim) = (word(8), word(12));
    let modality = Modality::from_code(bytes[16]).ok_or_else(|| bad(format!("unknown modality {}", bytes[16])))?;
    let loc_width = match bytes[17] {
        0 => 0,
        1 => 3,
        2 => 1,
        other => return Err(bad(format!("unknown has_pos {other}"))),
    };
    let mut off = 18;
    let floats = |off: &mut usize, n: usize| -> Result<Vec<f64>> {
        let end = *off + n * 4;
        if end > bytes.len() {
            return Err(bad("truncated payload".into()));
        }
        let v = bytes[*off..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        *off = end;
        Ok(v)
    };
    let vectors = floats(&mut off, count * dim)?;
    let locs = floats(&mut off, count * loc_width)?;
    let text = std::str::from_utf8(&bytes[off..]).map_err(|_| bad("ids are not UTF-8".into()))?;
    let ids: Vec<String> = text.lines().map(str::to_string).collect();
    if ids.len() != count {
        return Err(bad(format!("expected {count} ids, found {}", ids.len())));
    }
    let locations = match loc_width {
        0 => Locations::None,
        3 => Locations::Geographic(locs.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()),
        _ => Locations::Frame(locs.iter().map(|&v| v.round() as i64).collect()),
    };
    let vectors = Array2::from_shape_vec((count, dim), vectors).map_err(|e| bad(e.to_string()))?;
    EmbeddingSet::new(vectors, ids, locations, modality)
}

/// Serialises `value` as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.as_ref().to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path.as_ref(), text.as_bytes())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_bytes(path.as_ref(), text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}
