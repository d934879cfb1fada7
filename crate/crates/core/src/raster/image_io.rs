//! 16-bit depth and 8-bit mask PNGs.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{DepthMap, Mask, RasterError};

/// Millimetres per stored depth unit.
pub const DEPTH_SCALE_MM: f64 = 0.1;

pub(crate) fn depth_to_units(d: f64) -> u16 {
    if !(d > 0.0) {
        return 0;
    }
    (d / DEPTH_SCALE_MM).round().clamp(0.0, u16::MAX as f64) as u16
}

fn png_err(e: impl std::fmt::Display) -> RasterError {
    RasterError::Png(e.to_string())
}

fn write_gray(path: &Path, width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Result<(), RasterError> {
    let f = File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(f), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(data).map_err(png_err)?;
    w.finish().map_err(png_err)?;
    Ok(())
}

fn read_gray(path: &Path, want: png::BitDepth) -> Result<(usize, usize, Vec<u8>), RasterError> {
    let f = File::open(path)?;
    let mut reader = png::Decoder::new(BufReader::new(f)).read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| png_err("image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != want {
        return Err(png_err(format!("expected grayscale {want:?}, got {:?} {:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

/// Writes depth as 16-bit grayscale in units of 0.1 mm (0 = no surface).
pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<(), RasterError> {
    let bytes: Vec<u8> = depth.values.iter().flat_map(|&d| depth_to_units(d).to_be_bytes()).collect();
    write_gray(path, depth.width, depth.height, png::BitDepth::Sixteen, &bytes)
}

pub fn read_depth_png(path: &Path) -> Result<DepthMap, RasterError> {
    let (width, height, buf) = read_gray(path, png::BitDepth::Sixteen)?;
    let values = buf
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * DEPTH_SCALE_MM)
        .collect();
    Ok(DepthMap { width, height, values })
}

/// Writes a mask as 8-bit grayscale (255 = set).
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<(), RasterError> {
    let bytes: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_gray(path, mask.width, mask.height, png::BitDepth::Eight, &bytes)
}

pub fn read_mask_png(path: &Path) -> Result<Mask, RasterError> {
    let (width, height, buf) = read_gray(path, png::BitDepth::Eight)?;
    Ok(Mask { width, height, data: buf.iter().map(|&b| b > 127).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let mut d = DepthMap::new(5, 3);
        d.values[0] = 612.34;
        d.values[7] = 1.0;
        d.values[14] = 6553.5;
        write_depth_png(&p, &d).unwrap();
        let back = read_depth_png(&p).unwrap();
        assert_eq!((back.width, back.height), (5, 3));
        assert_eq!(back, d.quantized());
        assert!((back.values[0] - 612.3).abs() < 1e-9);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let mut m = Mask::new(4, 4);
        m.data[5] = true;
        m.data[15] = true;
        write_mask_png(&p, &m).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), m);
        assert!(read_depth_png(&p).is_err());
    }
}
