//! PNG and binary PNM (P5/P6) reading and writing, resizing, and dataset
//! directory loading.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::Sample;
use crate::error::{Error, LoadError, Result};
use crate::tensor::Tensor;

/// 8-bit interleaved pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    LoadError::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
    .into()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut f = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Load(LoadError::Missing(path.to_path_buf())),
        _ => Error::io(path, e),
    })?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

/// Parse a binary PGM (`P5`) or PPM (`P6`) image.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<RawImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some([b'P', _]) => return Err(LoadError::Unsupported(path.to_path_buf()).into()),
        _ => return Err(malformed(path, "missing P5/P6 magic")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(path, "expected a decimal header field"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed(path, "header not terminated by whitespace"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(LoadError::ZeroSize(path.to_path_buf()).into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(path, format!("maxval {maxval} out of range")));
    }
    let n = width * height * channels;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    let body = bytes.get(pos..pos + need).ok_or_else(|| LoadError::Truncated(path.to_path_buf()))?;
    let data = if wide {
        body.chunks_exact(2)
            .map(|c| ((u16::from_be_bytes([c[0], c[1]]) as u32 * 255 + maxval as u32 / 2) / maxval as u32) as u8)
            .collect()
    } else if maxval == 255 {
        body.to_vec()
    } else {
        body.iter().map(|&v| ((v as u32 * 255 + maxval as u32 / 2) / maxval as u32) as u8).collect()
    };
    Ok(RawImage {
        width,
        height,
        channels,
        data,
    })
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<RawImage> {
    let decode_err = |e: png::DecodingError| -> Error {
        match e {
            png::DecodingError::IoError(ref io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                LoadError::Truncated(path.to_path_buf()).into()
            }
            _ => LoadError::Decode {
                path: path.to_path_buf(),
                reason: e.to_string(),
            }
            .into(),
        }
    };
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| LoadError::ZeroSize(path.to_path_buf()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(LoadError::ZeroSize(path.to_path_buf()).into());
    }
    let src = info.color_type.samples();
    buf.truncate(info.line_size * height);
    let mut data = Vec::with_capacity(width * height * src.min(3));
    // drop alpha; keep gray as one channel
    let keep = if src >= 3 { 3 } else { 1 };
    for row in buf.chunks_exact(info.line_size) {
        for px in row[..width * src].chunks_exact(src) {
            data.extend_from_slice(&px[..keep]);
        }
    }
    Ok(RawImage {
        width,
        height,
        channels: keep,
        data,
    })
}

/// Read a PNG, PGM or PPM file by content signature.
pub fn read_image(path: &Path) -> Result<RawImage> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes, path)
    } else if bytes.first() == Some(&b'P') {
        decode_pnm(&bytes, path)
    } else {
        Err(LoadError::Unsupported(path.to_path_buf()).into())
    }
}

/// Write 1- or 3-channel pixels; the format follows the extension
/// (`.png`, `.pgm`, `.ppm`).
pub fn write_image(path: &Path, img: &RawImage) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    match (ext.as_deref(), img.channels) {
        (Some("png"), c @ (1 | 3)) => {
            let mut enc = png::Encoder::new(&mut w, img.width as u32, img.height as u32);
            enc.set_color(if c == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
            enc.set_depth(png::BitDepth::Eight);
            let enc_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
            let mut writer = enc.write_header().map_err(enc_err)?;
            writer.write_image_data(&img.data).map_err(enc_err)?;
            writer.finish().map_err(enc_err)?;
        }
        (Some("pgm"), 1) | (Some("ppm"), 3) => {
            let magic = if img.channels == 1 { "P5" } else { "P6" };
            write!(w, "{magic}\n{} {}\n255\n", img.width, img.height).map_err(|e| Error::io(path, e))?;
            w.write_all(&img.data).map_err(|e| Error::io(path, e))?;
        }
        _ => {
            return Err(Error::Config(format!(
                "cannot write {}-channel image to {}",
                img.channels,
                path.display()
            )))
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Planar `[c, h, w]` floats in `[0, 1]` from interleaved bytes.
pub fn to_planar(img: &RawImage) -> Tensor<f32> {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut out = vec![0f32; c * h * w];
    for (i, px) in img.data.chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            out[ch * h * w + i] = v as f32 / 255.0;
        }
    }
    Tensor::from_parts(vec![c, h, w], out)
}

/// Interleaved bytes from planar `[c, h, w]` floats in `[0, 1]`.
pub fn from_planar(t: &Tensor<f32>) -> RawImage {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut data = vec![0u8; c * h * w];
    for ch in 0..c {
        for i in 0..h * w {
            data[i * c + ch] = (t.data()[ch * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    RawImage {
        width: w,
        height: h,
        channels: c,
        data,
    }
}

/// Bilinear resize of planar data, sampling at pixel centres.
pub fn resize_bilinear(t: &Tensor<f32>, oh: usize, ow: usize) -> Tensor<f32> {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    if (h, w) == (oh, ow) {
        return t.clone();
    }
    let mut out = vec![0f32; c * oh * ow];
    let src = |len: usize, olen: usize, i: usize| {
        let f = ((i as f32 + 0.5) * len as f32 / olen as f32 - 0.5).clamp(0.0, (len - 1) as f32);
        let i0 = f.floor() as usize;
        (i0, (i0 + 1).min(len - 1), f - i0 as f32)
    };
    for y in 0..oh {
        let (y0, y1, fy) = src(h, oh, y);
        for x in 0..ow {
            let (x0, x1, fx) = src(w, ow, x);
            for ch in 0..c {
                let p = |yy: usize, xx: usize| t.data()[(ch * h + yy) * w + xx];
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out[(ch * oh + y) * ow + x] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::from_parts(vec![c, oh, ow], out)
}

/// Nearest-neighbour resize of planar data.
pub fn resize_nearest(t: &Tensor<f32>, oh: usize, ow: usize) -> Tensor<f32> {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            let sy = (y * h) / oh;
            for x in 0..ow {
                out.push(t.data()[(ch * h + sy) * w + (x * w) / ow]);
            }
        }
    }
    Tensor::from_parts(vec![c, oh, ow], out)
}

/// Read an image as planar RGB `[3, H, W]` in `[0, 1]` at its native size.
pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let img = read_image(path)?;
    let planar = to_planar(&img);
    Ok(match img.channels {
        1 => Tensor::from_parts(vec![3, img.height, img.width], planar.data().repeat(3)),
        _ => planar,
    })
}

/// Load an image/mask pair, resized to `size x size`. Gray images are
/// replicated to three channels; the mask is binarized at 127/255.
pub fn load_sample(image_path: &Path, mask_path: &Path, size: usize) -> Result<Sample> {
    let planar = load_image(image_path)?;
    let m = read_image(mask_path)?;
    let first: Vec<u8> = m.data.iter().step_by(m.channels).copied().collect();
    let mask = Tensor::from_parts(
        vec![1, m.height, m.width],
        first.iter().map(|&v| if v > 127 { 1.0 } else { 0.0 }).collect(),
    );
    let id = image_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    Sample::new(id, resize_bilinear(&planar, size, size), resize_nearest(&mask, size, size))
}

/// Write `<dir>/images/<id>.<ext>` and `<dir>/masks/<id>.<ext>` where the
/// image uses `png` or `ppm` and the mask `png` or `pgm`.
pub fn save_sample(dir: &Path, sample: &Sample, png: bool) -> Result<(PathBuf, PathBuf)> {
    let (ie, me) = if png { ("png", "png") } else { ("ppm", "pgm") };
    let idir = dir.join("images");
    let mdir = dir.join("masks");
    for d in [&idir, &mdir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let ip = idir.join(format!("{}.{ie}", sample.id));
    let mp = mdir.join(format!("{}.{me}", sample.id));
    write_image(&ip, &from_planar(&sample.image))?;
    write_image(&mp, &from_planar(&sample.mask))?;
    Ok((ip, mp))
}

const IMAGE_EXT: [&str; 2] = ["png", "ppm"];
const MASK_EXT: [&str; 2] = ["png", "pgm"];

/// Load every pair under `<root>/images` and `<root>/masks`, sorted by stem.
pub fn load_dataset(root: &Path, size: usize) -> Result<Vec<Sample>> {
    let idir = root.join("images");
    let entries = fs::read_dir(&idir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Load(LoadError::Missing(idir.clone())),
        _ => Error::io(&idir, e),
    })?;
    let mut images: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXT.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    images.sort();
    let mut out = Vec::with_capacity(images.len());
    for ip in images {
        let stem = ip.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mp = MASK_EXT
            .iter()
            .map(|e| root.join("masks").join(format!("{stem}.{e}")))
            .find(|p| p.exists())
            .ok_or_else(|| LoadError::Missing(root.join("masks").join(&stem)))?;
        out.push(load_sample(&ip, &mp, size)?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no images found under {}", idir.display())));
    }
    Ok(out)
}

/// Either a single dataset (`<root>/images` exists) named after the
/// directory, or one dataset per subdirectory that has an `images` folder.
pub fn load_datasets(root: &Path, size: usize) -> Result<Vec<(String, Vec<Sample>)>> {
    let name = |p: &Path| p.file_name().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    if root.join("images").is_dir() {
        return Ok(vec![(name(root), load_dataset(root, size)?)]);
    }
    let entries = fs::read_dir(root).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Load(LoadError::Missing(root.to_path_buf())),
        _ => Error::io(root, e),
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("images").is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("no datasets found under {}", root.display())));
    }
    dirs.iter().map(|d| Ok((name(d), load_dataset(d, size)?))).collect()
}
