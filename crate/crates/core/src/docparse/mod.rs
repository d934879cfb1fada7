//! Manufacturing-document ingestion.
//!
//! A document is a small XML container: a root element with repeated
//! `<part category="N">` children, each holding an inline SVG fragment with
//! one or more `<path d="...">` outlines. Path units are millimeters.

mod profile;
pub mod svg;

use std::collections::HashSet;

use quick_xml::events::Event;
use thiserror::Error;

pub use profile::{
    parse_svg_path, perimeter, point_in_polygon, profile_bbox, segments_intersect, signed_area,
    Polygon, Profile2D, ProfileJson,
};

/// Default curve flattening tolerance, mm.
pub const DEFAULT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("schema error in {element} at byte {offset}: {message}")]
    Schema { element: String, offset: u64, message: String },
    #[error("bad path data at offset {offset}: {message}")]
    Path { offset: usize, message: String },
    #[error("unsupported path command '{0}'")]
    UnsupportedCommand(char),
    #[error("open subpath: starts at {start:?}, ends at {end:?}")]
    OpenSubpath { start: [f64; 2], end: [f64; 2] },
    #[error("loop nesting deeper than outer/hole")]
    NestingTooDeep,
    #[error("no closed subpath found")]
    NoClosedSubpath,
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

impl ParseError {
    /// Byte position in the document, when the error has one.
    pub fn byte_offset(&self) -> Option<u64> {
        match self {
            Self::Xml { offset, .. } | Self::Schema { offset, .. } => Some(*offset),
            _ => None,
        }
    }

    fn shifted(self, by: u64) -> Self {
        match self {
            Self::Xml { offset, message } => Self::Xml { offset: offset + by, message },
            Self::Schema { element, offset, message } => Self::Schema { element, offset: offset + by, message },
            e => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    pub category_id: u32,
    /// Optional human-readable label from the `name` attribute.
    pub name: Option<String>,
    /// Inner markup of the `<part>` element, byte-for-byte.
    pub svg_source: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManufacturingDoc {
    pub parts: Vec<Part>,
}

impl ManufacturingDoc {
    /// Parses every part outline with the given flattening tolerance,
    /// attaching each part's category.
    pub fn profiles(&self, tolerance: f64) -> Result<Vec<Profile2D>, (u32, ParseError)> {
        self.parts
            .iter()
            .map(|part| {
                parse_svg_path(&part.svg_source, tolerance)
                    .map(|mut p| {
                        p.category_id = part.category_id;
                        p
                    })
                    .map_err(|e| (part.category_id, e))
            })
            .collect()
    }
}

fn xml_err(offset: u64, message: impl ToString) -> ParseError {
    ParseError::Xml { offset, message: message.to_string() }
}

/// Parses a manufacturing document. Parts are returned in document order
/// with their SVG payload preserved verbatim.
pub fn parse_document(xml_bytes: &[u8]) -> Result<ManufacturingDoc, ParseError> {
    let mut reader = quick_xml::Reader::from_reader(xml_bytes);
    reader.config_mut().trim_text(false);

    let mut parts = Vec::new();
    let mut seen = HashSet::new();
    let mut depth = 0usize;
    let mut saw_root = false;
    // (category, name, byte offset where the inner content starts, depth)
    let mut open_part: Option<(u32, Option<String>, usize, usize)> = None;
    let mut part_index = 0usize;

    loop {
        let before = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| xml_err(reader.error_position(), e))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                if depth == 0 {
                    if saw_root {
                        return Err(xml_err(before, "multiple root elements"));
                    }
                    saw_root = true;
                } else if depth == 1 && open_part.is_none() && e.local_name().as_ref() == b"part" {
                    part_index += 1;
                    let element = format!("part #{part_index}");
                    let mut category = None;
                    let mut name = None;
                    for attr in e.attributes() {
                        let attr = attr.map_err(|err| xml_err(before, err))?;
                        let value = std::str::from_utf8(&attr.value)
                            .map_err(|err| xml_err(before, err))?
                            .to_string();
                        match attr.key.as_ref() {
                            b"category" => category = Some(value),
                            b"name" => name = Some(value),
                            _ => {}
                        }
                    }
                    let category = category.ok_or_else(|| ParseError::Schema {
                        element: element.clone(),
                        offset: before,
                        message: "missing `category` attribute".into(),
                    })?;
                    let id: u32 = category.trim().parse().ok().filter(|&v| v >= 1).ok_or_else(
                        || ParseError::Schema {
                            element: element.clone(),
                            offset: before,
                            message: format!("category {category:?} is not an integer >= 1"),
                        },
                    )?;
                    if !seen.insert(id) {
                        return Err(ParseError::Schema {
                            element,
                            offset: before,
                            message: format!("duplicate category {id}"),
                        });
                    }
                    if is_empty {
                        return Err(ParseError::Schema {
                            element,
                            offset: before,
                            message: "part has no SVG content".into(),
                        });
                    }
                    let start = reader.buffer_position() as usize;
                    open_part = Some((id, name, start, depth + 1));
                }
                if !is_empty {
                    depth += 1;
                }
            }
            Event::End(_) => {
                if let Some((id, _, start, part_depth)) = &open_part {
                    if *part_depth == depth {
                        let end = before as usize;
                        let svg_source = std::str::from_utf8(&xml_bytes[*start..end])
                            .map_err(|err| xml_err(*start as u64, err))?
                            .to_string();
                        let paths = svg::extract_path_data(&svg_source).map_err(|e| e.shifted(*start as u64))?;
                        if paths.iter().all(|d| d.trim().is_empty()) {
                            return Err(ParseError::Schema {
                                element: format!("part with category {id}"),
                                offset: *start as u64,
                                message: "no path data".into(),
                            });
                        }
                        let (category_id, name, _, _) = open_part.take().expect("open part");
                        parts.push(Part { category_id, name, svg_source });
                    }
                }
                depth = depth.saturating_sub(1);
            }
            Event::Eof => {
                if depth != 0 {
                    return Err(xml_err(before, "unexpected end of document"));
                }
                if !saw_root {
                    return Err(xml_err(0, "no root element"));
                }
                break;
            }
            _ => {}
        }
    }
    Ok(ManufacturingDoc { parts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(parts: &[(u32, &str)]) -> String {
        let mut s = String::from("<document>");
        for (c, d) in parts {
            s.push_str(&format!("<part category=\"{c}\"><svg><path d=\"{d}\"/></svg></part>"));
        }
        s.push_str("</document>");
        s
    }

    #[test]
    fn fifteen_parts() {
        let parts: Vec<(u32, &str)> = (1..=15).map(|i| (i, "M 0 0 L 1 0 L 1 1 Z")).collect();
        let d = parse_document(doc(&parts).as_bytes()).unwrap();
        assert_eq!(d.parts.len(), 15);
        assert_eq!(d.parts[14].category_id, 15);
    }

    #[test]
    fn empty_document() {
        let d = parse_document(b"<document></document>").unwrap();
        assert!(d.parts.is_empty());
        let d = parse_document(b"<document/>").unwrap();
        assert!(d.parts.is_empty());
    }

    #[test]
    fn payload_is_verbatim() {
        let inner = "\n  <svg  viewBox=\"0 0 1 1\"><path d=\"M 0 0 L 1 0 L 1 1 Z\" /></svg>\n";
        let xml = format!("<document><part category=\"3\">{inner}</part></document>");
        let d = parse_document(xml.as_bytes()).unwrap();
        assert_eq!(d.parts[0].svg_source, inner);
    }

    #[test]
    fn duplicate_category_is_schema_error() {
        let xml = doc(&[(1, "M 0 0 L 1 0 L 1 1 Z"), (1, "M 0 0 L 1 0 L 1 1 Z")]);
        assert!(matches!(parse_document(xml.as_bytes()), Err(ParseError::Schema { .. })));
    }

    #[test]
    fn missing_category_names_element() {
        let xml = "<document><part><svg><path d=\"M 0 0 L 1 0 L 1 1 Z\"/></svg></part></document>";
        match parse_document(xml.as_bytes()) {
            Err(ParseError::Schema { element, offset, .. }) => {
                assert!(element.contains("part #1"));
                assert_eq!(offset, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let xml = b"<document><part category=\"1\"><svg></part></document>";
        match parse_document(xml) {
            Err(ParseError::Xml { offset, .. }) => assert!(offset > 0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_document(b"<document><part"), Err(ParseError::Xml { .. })));
        assert!(matches!(parse_document(b""), Err(ParseError::Xml { .. })));
    }

    #[test]
    fn profiles_carry_categories() {
        let xml = doc(&[(7, "M 0 0 L 10 0 L 10 10 L 0 10 Z")]);
        let d = parse_document(xml.as_bytes()).unwrap();
        let p = d.profiles(DEFAULT_TOLERANCE).unwrap();
        assert_eq!(p[0].category_id, 7);
        assert_eq!(p[0].area(), 100.0);
    }
}
