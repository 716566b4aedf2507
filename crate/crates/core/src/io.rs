//! File formats: 8-bit RGB PNG rasters and `x,y[,score]` center CSVs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::colorspace::RgbImage;
use crate::error::{Error, Result};

/// Reads an 8-bit PNG. Gray and alpha variants are expanded / dropped to RGB.
pub fn read_png(path: &Path, microns_per_pixel: f64) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, format!("expected 8-bit PNG, got {:?}", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let pixels: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        other => return Err(Error::format(path, format!("unsupported color type {other:?}"))),
    };
    RgbImage::new(w, h, pixels, microns_per_pixel).map_err(|e| Error::format(path, e))
}

/// Encodes an image as 8-bit RGB PNG bytes.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer.write_image_data(img.as_bytes()).expect("buffer size matches image dimensions");
    }
    out
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    std::fs::write(path, encode_png(img)).map_err(|e| Error::io(path, e))
}

/// A center with an optional detection score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterRecord {
    pub x: f64,
    pub y: f64,
    pub score: Option<f64>,
}

/// Reads `x,y` or `x,y,score` rows. The header line is required.
pub fn read_centers_csv(path: &Path) -> Result<Vec<CenterRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_centers_csv(BufReader::new(file)).map_err(|m| Error::format(path, m))
}

pub fn parse_centers_csv(reader: impl BufRead) -> Result<Vec<CenterRecord>, String> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| e.to_string())?,
        None => return Err("empty file, expected header `x,y`".into()),
    };
    let columns: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let with_score = match columns.as_slice() {
        ["x", "y"] => false,
        ["x", "y", "score"] => true,
        _ => return Err(format!("unexpected header '{}'", header.trim())),
    };
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(format!("line {}: expected {} fields", n + 2, columns.len()));
        }
        let num = |s: &str| -> Result<f64, String> {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("line {}: bad number '{s}'", n + 2))
        };
        out.push(CenterRecord {
            x: num(fields[0])?,
            y: num(fields[1])?,
            score: if with_score { Some(num(fields[2])?) } else { None },
        });
    }
    Ok(out)
}

/// Formats centers with 3 decimals. Scores are written when every record has one.
pub fn format_centers_csv(records: &[CenterRecord], with_score: bool) -> String {
    let mut out = String::from(if with_score { "x,y,score\n" } else { "x,y\n" });
    for r in records {
        if with_score {
            out.push_str(&format!("{:.3},{:.3},{:.6}\n", r.x, r.y, r.score.unwrap_or(0.0)));
        } else {
            out.push_str(&format!("{:.3},{:.3}\n", r.x, r.y));
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
