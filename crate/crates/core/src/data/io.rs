//! Lossless on-disk codecs: 8-bit RGB PNG for images, palette PNG holding
//! one label index per pixel for parsing and garment segmentation maps,
//! and JSON for everything else.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::raster::ImageRgb;
use crate::data::schema::{Resolution, PALETTE};
use crate::error::{Error, Result};

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn encode_png(
    path: &Path,
    res: Resolution,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    bytes: &[u8],
) -> Result<()> {
    let buf = encode_png_bytes(res, color, palette, bytes);
    let mut f = create(path)?;
    std::io::Write::write_all(&mut f, &buf).map_err(|e| Error::io(path, e))
}

fn encode_png_bytes(
    res: Resolution,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    bytes: &[u8],
) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), res.width as u32, res.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(bytes).expect("in-memory PNG body");
    }
    out
}

/// Encode an image as an in-memory PNG.
pub fn png_bytes(img: &ImageRgb) -> Vec<u8> {
    encode_png_bytes(img.resolution(), png::ColorType::Rgb, None, &img.to_rgb8())
}

/// Encode a label map as an in-memory palette PNG.
pub fn label_png_bytes(res: Resolution, labels: &[u8]) -> Vec<u8> {
    encode_png_bytes(res, png::ColorType::Indexed, Some(palette_bytes()), labels)
}

fn palette_bytes() -> Vec<u8> {
    PALETTE.iter().flatten().copied().collect()
}

pub fn write_rgb_png(path: &Path, img: &ImageRgb) -> Result<()> {
    encode_png(path, img.resolution(), png::ColorType::Rgb, None, &img.to_rgb8())
}

pub fn write_label_png(path: &Path, res: Resolution, labels: &[u8]) -> Result<()> {
    if labels.len() != res.pixels() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a {res} map",
            labels.len()
        )));
    }
    encode_png(
        path,
        res,
        png::ColorType::Indexed,
        Some(palette_bytes()),
        labels,
    )
}

struct Decoded {
    res: Resolution,
    color: png::ColorType,
    bytes: Vec<u8>,
}

fn decode_png_bytes(data: &[u8], path: &Path) -> Result<Decoded> {
    let corrupt = |e: png::DecodingError| Error::corrupt(path, e.to_string());
    let mut dec = png::Decoder::new(std::io::Cursor::new(data));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(corrupt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::corrupt(path, "image too large"))?;
    let mut bytes = vec![0; size];
    let info = reader.next_frame(&mut bytes).map_err(corrupt)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::corrupt(path, format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    bytes.truncate(info.buffer_size());
    Ok(Decoded {
        res: Resolution {
            height: info.height as usize,
            width: info.width as usize,
        },
        color: info.color_type,
        bytes,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_rgb_png(path: &Path) -> Result<ImageRgb> {
    decode_rgb(&read_file(path)?, path)
}

/// Decode an in-memory RGB PNG.
pub fn decode_rgb(data: &[u8], path: &Path) -> Result<ImageRgb> {
    let d = decode_png_bytes(data, path)?;
    if d.color != png::ColorType::Rgb {
        return Err(Error::corrupt(path, format!("expected RGB, found {:?}", d.color)));
    }
    ImageRgb::from_rgb8(d.res, &d.bytes)
}

/// Label indices of a palette or grayscale PNG.
pub fn read_label_png(path: &Path) -> Result<(Resolution, Vec<u8>)> {
    let d = decode_png_bytes(&read_file(path)?, path)?;
    match d.color {
        png::ColorType::Indexed | png::ColorType::Grayscale => Ok((d.res, d.bytes)),
        other => Err(Error::corrupt(
            path,
            format!("expected a single-channel label map, found {other:?}"),
        )),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    text.push('\n');
    create(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trips_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let res = Resolution::new(8, 6).unwrap();
        let bytes: Vec<u8> = (0..3 * res.pixels()).map(|i| (i * 7 % 256) as u8).collect();
        let img = ImageRgb::from_rgb8(res, &bytes).unwrap();
        let p = dir.path().join("a/img.png");
        write_rgb_png(&p, &img).unwrap();
        assert_eq!(read_rgb_png(&p).unwrap(), img);

        let labels: Vec<u8> = (0..res.pixels()).map(|i| (i % 17) as u8).collect();
        let q = dir.path().join("labels.png");
        write_label_png(&q, res, &labels).unwrap();
        assert_eq!(read_label_png(&q).unwrap(), (res, labels));
    }

    #[test]
    fn garbage_is_reported_as_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        fs::write(&p, b"not a png").unwrap();
        assert!(matches!(read_rgb_png(&p), Err(Error::CorruptFile { .. })));
        assert!(matches!(
            read_rgb_png(&dir.path().join("missing.png")),
            Err(Error::Io { .. })
        ));
    }
}
