//! Reference document with fifteen sheet-metal parts of known outline
//! dimensions, used by tests, examples and the acceptance suite.

use crate::docparse::{self, Profile2D};

pub const PARTS_XML: &str = include_str!("../fixtures/parts15.xml");

/// Expected (width, height) per category id, mm.
pub const PART_DIMENSIONS: [(u32, f64, f64); 15] = [
    (1, 260.0, 35.0),
    (2, 191.0, 57.0),
    (3, 794.0, 81.0),
    (4, 92.0, 53.0),
    (5, 120.0, 60.0),
    (6, 150.0, 118.0),
    (7, 156.0, 117.0),
    (8, 364.0, 116.0),
    (9, 159.0, 99.0),
    (10, 60.0, 38.0),
    (11, 394.0, 220.0),
    (12, 89.0, 20.0),
    (13, 125.0, 55.0),
    (14, 46.0, 49.0),
    (15, 609.0, 117.0),
];

/// Parses the bundled document at the default tolerance.
pub fn profiles() -> Vec<Profile2D> {
    docparse::parse_document(PARTS_XML.as_bytes())
        .expect("bundled document parses")
        .profiles(docparse::DEFAULT_TOLERANCE)
        .expect("bundled profiles are valid")
}
