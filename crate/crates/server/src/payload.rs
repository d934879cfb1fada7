//! Frame payload decoding: base64 PNG into estimator input.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use png::{BitDepth, ColorType, Transformations};

use flatpose_core::estimator::{EstimatorInput, ImagePayload};
use flatpose_core::raster::CameraIntrinsics;
use flatpose_core::Pose;

use crate::protocol::{ErrorCode, FrameMessage, ImageKind, ENCODING_PNG_BASE64};

#[derive(Debug, Clone, PartialEq)]
pub struct PayloadError {
    pub code: ErrorCode,
    pub message: String,
}

fn fail(code: ErrorCode, message: impl Into<String>) -> PayloadError {
    PayloadError { code, message: message.into() }
}

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    bytes: Vec<u8>,
}

fn decode_png(bytes: &[u8]) -> Result<Decoded, PayloadError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    // Expand palettes and sub-byte depths; keep 16-bit samples.
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| fail(ErrorCode::InvalidFrame, format!("PNG header: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| fail(ErrorCode::InvalidFrame, "PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| fail(ErrorCode::InvalidFrame, format!("PNG data: {e}")))?;
    buf.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes: buf,
    })
}

fn samples(d: &Decoded) -> Vec<u32> {
    match d.depth {
        BitDepth::Sixteen => d.bytes.chunks_exact(2).map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))).collect(),
        _ => d.bytes.iter().map(|&b| u32::from(b)).collect(),
    }
}

fn to_gray(d: &Decoded) -> Vec<u8> {
    let s = samples(d);
    let scale = if d.depth == BitDepth::Sixteen { 257 } else { 1 };
    let ch = d.color.samples();
    s.chunks_exact(ch)
        .map(|px| {
            let v = match d.color {
                ColorType::Rgb | ColorType::Rgba => (299 * px[0] + 587 * px[1] + 114 * px[2]) / 1000,
                _ => px[0],
            };
            (v / scale) as u8
        })
        .collect()
}

/// Decodes a frame into estimator input; `default_plane` is used when the
/// frame carries none.
pub fn decode_frame(frame: &FrameMessage, default_plane: Option<Pose>) -> Result<EstimatorInput, PayloadError> {
    if frame.encoding != ENCODING_PNG_BASE64 {
        return Err(fail(
            ErrorCode::UnsupportedEncoding,
            format!("encoding `{}` is not supported (expected `{ENCODING_PNG_BASE64}`)", frame.encoding),
        ));
    }
    if frame.width == 0 || frame.height == 0 {
        return Err(fail(ErrorCode::InvalidFrame, "width and height must be positive"));
    }
    let i = frame.intrinsics;
    let cam = CameraIntrinsics::new(i.fx, i.fy, i.cx, i.cy, frame.width, frame.height)
        .map_err(|e| fail(ErrorCode::InvalidFrame, e.to_string()))?;
    let bytes = STANDARD.decode(frame.data.as_bytes()).map_err(|e| fail(ErrorCode::InvalidFrame, format!("base64: {e}")))?;
    let d = decode_png(&bytes)?;
    if (d.width, d.height) != (frame.width, frame.height) {
        return Err(fail(
            ErrorCode::InvalidFrame,
            format!("image is {}x{}, frame declares {}x{}", d.width, d.height, frame.width, frame.height),
        ));
    }
    let image = match frame.image_kind {
        ImageKind::Mask => {
            if !matches!(d.color, ColorType::Grayscale) {
                return Err(fail(ErrorCode::UnsupportedEncoding, "label masks must be single-channel grayscale PNG"));
            }
            ImagePayload::Synthetic { labels: samples(&d), depth: None }
        }
        ImageKind::Intensity => ImagePayload::Intensity(to_gray(&d)),
    };
    Ok(EstimatorInput { image, cam, frame_id: frame.frame_id, plane: frame.plane.map(|p| p.pose()).or(default_plane) })
}

/// Encodes an 8-bit label image as base64 PNG, as clients send it.
pub fn encode_mask_png_base64(width: usize, height: usize, labels: &[u8]) -> String {
    STANDARD.encode(encode_png(width, height, ColorType::Grayscale, BitDepth::Eight, labels))
}

pub(crate) fn encode_png(width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(data).expect("in-memory PNG data");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Intrinsics, PlaneMessage};

    fn frame(data: String, w: usize, h: usize) -> FrameMessage {
        FrameMessage {
            frame_id: 5,
            timestamp_ms: 0.0,
            width: w,
            height: h,
            intrinsics: Intrinsics { fx: 10.0, fy: 10.0, cx: w as f64 / 2.0, cy: h as f64 / 2.0 },
            encoding: ENCODING_PNG_BASE64.into(),
            data,
            plane: None,
            image_kind: ImageKind::Mask,
        }
    }

    #[test]
    fn mask_labels_survive_encoding() {
        let labels: Vec<u8> = vec![0, 1, 1, 0, 2, 2, 0, 0, 3, 0, 0, 0];
        let f = frame(encode_mask_png_base64(4, 3, &labels), 4, 3);
        let input = decode_frame(&f, None).unwrap();
        assert_eq!(input.frame_id, 5);
        assert_eq!(input.cam.width, 4);
        assert_eq!(input.labels(), labels.iter().map(|&l| u32::from(l)).collect::<Vec<_>>());
        assert!(input.plane.is_none());
    }

    #[test]
    fn sixteen_bit_masks_keep_large_labels() {
        let labels: [u16; 2] = [0, 700];
        let data: Vec<u8> = labels.iter().flat_map(|v| v.to_be_bytes()).collect();
        let png = encode_png(2, 1, ColorType::Grayscale, BitDepth::Sixteen, &data);
        let f = frame(STANDARD.encode(png), 2, 1);
        assert_eq!(decode_frame(&f, None).unwrap().labels(), vec![0, 700]);
    }

    #[test]
    fn intensity_frames_are_binarized() {
        let rgb: Vec<u8> = [[10u8, 10, 10], [250, 250, 250], [12, 12, 12], [240, 240, 240]].concat();
        let png = encode_png(4, 1, ColorType::Rgb, BitDepth::Eight, &rgb);
        let mut f = frame(STANDARD.encode(png), 4, 1);
        f.image_kind = ImageKind::Intensity;
        assert_eq!(decode_frame(&f, None).unwrap().labels(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn plane_comes_from_frame_before_default() {
        let mut f = frame(encode_mask_png_base64(1, 1, &[0]), 1, 1);
        let d = Pose::from_row_major(&Pose::identity().rotation_row_major(), &[0.0, 0.0, 5.0]);
        assert_eq!(decode_frame(&f, Some(d)).unwrap().plane, Some(d));
        let p = Pose::from_row_major(&Pose::identity().rotation_row_major(), &[0.0, 0.0, 9.0]);
        f.plane = Some(PlaneMessage::from_pose(&p));
        assert_eq!(decode_frame(&f, Some(d)).unwrap().plane, Some(p));
    }

    #[test]
    fn bad_payloads_map_to_codes() {
        let good = encode_mask_png_base64(2, 2, &[0; 4]);
        let mut f = frame(good.clone(), 2, 2);
        f.encoding = "jpeg".into();
        assert_eq!(decode_frame(&f, None).unwrap_err().code, ErrorCode::UnsupportedEncoding);
        let f = frame("%%%".into(), 2, 2);
        assert_eq!(decode_frame(&f, None).unwrap_err().code, ErrorCode::InvalidFrame);
        let f = frame(STANDARD.encode(b"not a png"), 2, 2);
        assert_eq!(decode_frame(&f, None).unwrap_err().code, ErrorCode::InvalidFrame);
        let f = frame(good.clone(), 3, 2);
        assert_eq!(decode_frame(&f, None).unwrap_err().code, ErrorCode::InvalidFrame);
        let f = frame(good, 0, 2);
        assert_eq!(decode_frame(&f, None).unwrap_err().code, ErrorCode::InvalidFrame);
        let rgb = encode_png(1, 1, ColorType::Rgb, BitDepth::Eight, &[1, 2, 3]);
        let f = frame(STANDARD.encode(rgb), 1, 1);
        assert_eq!(decode_frame(&f, None).unwrap_err().code, ErrorCode::UnsupportedEncoding);
    }
}
