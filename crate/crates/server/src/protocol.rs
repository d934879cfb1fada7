//! JSON wire messages. Every message is an object tagged by `type`.

use serde::{Deserialize, Serialize};

use flatpose_core::metrics::Detection;
use flatpose_core::Pose;

pub const PROTOCOL_VERSION: u32 = 1;

/// The only accepted `encoding` value.
pub const ENCODING_PNG_BASE64: &str = "png-base64";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Ground-plane frame in camera coordinates (the plane is its z = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneMessage {
    pub rotation: [f64; 9],
    pub translation_mm: [f64; 3],
}

impl PlaneMessage {
    pub fn from_pose(p: &Pose) -> Self {
        Self { rotation: p.rotation_row_major(), translation_mm: p.translation_array() }
    }

    pub fn pose(&self) -> Pose {
        Pose::from_row_major(&self.rotation, &self.translation_mm)
    }
}

/// How the decoded PNG samples are read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    /// Sample value = instance label, 0 = background.
    #[default]
    Mask,
    /// Gray or color image, binarized before segmentation.
    Intensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub frame_id: u64,
    pub timestamp_ms: f64,
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub encoding: String,
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane: Option<PlaneMessage>,
    #[serde(default, skip_serializing_if = "is_default_kind")]
    pub image_kind: ImageKind,
}

fn is_default_kind(k: &ImageKind) -> bool {
    *k == ImageKind::Mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMessage {
    pub category_id: u32,
    pub score: f64,
    pub bbox: [f64; 4],
    pub rotation: [f64; 9],
    pub translation_mm: [f64; 3],
}

impl DetectionMessage {
    /// `None` for detections without a pose.
    pub fn from_detection(d: &Detection) -> Option<Self> {
        let p = d.pose?;
        Some(Self {
            category_id: d.category_id,
            score: d.score,
            bbox: d.bbox,
            rotation: p.rotation_row_major(),
            translation_mm: p.translation_array(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMessage {
    pub frame_id: u64,
    pub server_latency_ms: f64,
    pub detections: Vec<DetectionMessage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedMessage,
    HandshakeRequired,
    UnsupportedVersion,
    UnsupportedEncoding,
    InvalidFrame,
    FrameIdNotIncreasing,
    EstimatorFailure,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MalformedMessage => "malformed_message",
            Self::HandshakeRequired => "handshake_required",
            Self::UnsupportedVersion => "unsupported_version",
            Self::UnsupportedEncoding => "unsupported_encoding",
            Self::InvalidFrame => "invalid_frame",
            Self::FrameIdNotIncreasing => "frame_id_not_increasing",
            Self::EstimatorFailure => "estimator_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    /// Serialized as `null` when the error is not tied to a frame.
    pub frame_id: Option<u64>,
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Hello { version: u32 },
    Frame(FrameMessage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello { version: u32 },
    Result(ResultMessage),
    Error(ErrorMessage),
}

impl ServerMessage {
    pub fn error(frame_id: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self::Error(ErrorMessage { frame_id, code, message: message.into() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    #[test]
    fn hello_and_frame_parse_from_wire_text() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"hello","version":1}"#).unwrap();
        assert_eq!(m, ClientMessage::Hello { version: 1 });
        let text = r#"{"type":"frame","frame_id":7,"timestamp_ms":12.5,"width":4,"height":2,
            "intrinsics":{"fx":1.0,"fy":1.0,"cx":2.0,"cy":1.0},"encoding":"png-base64","data":"AAAA"}"#;
        let ClientMessage::Frame(f) = serde_json::from_str(text).unwrap() else { panic!() };
        assert_eq!((f.frame_id, f.width, f.height), (7, 4, 2));
        assert_eq!(f.plane, None);
        assert_eq!(f.image_kind, ImageKind::Mask);
    }

    #[test]
    fn frame_serializes_without_optional_fields() {
        let f = FrameMessage {
            frame_id: 1,
            timestamp_ms: 0.0,
            width: 1,
            height: 1,
            intrinsics: Intrinsics { fx: 1.0, fy: 1.0, cx: 0.5, cy: 0.5 },
            encoding: ENCODING_PNG_BASE64.into(),
            data: String::new(),
            plane: None,
            image_kind: ImageKind::Mask,
        };
        let v: Value = serde_json::to_value(ClientMessage::Frame(f)).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["data", "encoding", "frame_id", "height", "intrinsics", "timestamp_ms", "type", "width"]
        );
    }

    #[test]
    fn result_and_error_match_wire_schema() {
        let r = ServerMessage::Result(ResultMessage {
            frame_id: 3,
            server_latency_ms: 1.5,
            detections: vec![DetectionMessage {
                category_id: 2,
                score: 0.5,
                bbox: [1.0, 2.0, 3.0, 4.0],
                rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                translation_mm: [0.0, 0.0, 900.0],
            }],
        });
        assert_eq!(
            serde_json::to_value(&r).unwrap(),
            json!({"type":"result","frame_id":3,"server_latency_ms":1.5,"detections":[{
                "category_id":2,"score":0.5,"bbox":[1.0,2.0,3.0,4.0],
                "rotation":[1.0,0.0,0.0,0.0,1.0,0.0,0.0,0.0,1.0],"translation_mm":[0.0,0.0,900.0]}]})
        );
        let e = ServerMessage::error(None, ErrorCode::MalformedMessage, "bad");
        assert_eq!(
            serde_json::to_value(&e).unwrap(),
            json!({"type":"error","frame_id":null,"code":"malformed_message","message":"bad"})
        );
        let back: ServerMessage = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn error_code_strings_match_serde() {
        for c in [
            ErrorCode::MalformedMessage,
            ErrorCode::HandshakeRequired,
            ErrorCode::UnsupportedVersion,
            ErrorCode::UnsupportedEncoding,
            ErrorCode::InvalidFrame,
            ErrorCode::FrameIdNotIncreasing,
            ErrorCode::EstimatorFailure,
        ] {
            assert_eq!(serde_json::to_value(c).unwrap(), json!(c.as_str()));
        }
    }

    #[test]
    fn plane_message_round_trips_pose() {
        let p = Pose::from_row_major(&Pose::rot_z(0.3).rotation_row_major(), &[1.0, 2.0, 3.0]);
        assert_eq!(PlaneMessage::from_pose(&p).pose(), p);
    }
}
