//! SVG path data tokenizing and flattening into closed polylines.
//!
//! Curves are subdivided until the chord deviation is bounded by the
//! requested tolerance. Cubic and quadratic segments use recursive
//! bisection with the control-polygon distance as the bound; elliptical
//! arcs are converted to center form and split into equal parametric
//! steps whose sagitta (scaled by the larger radius) stays below tolerance.

use std::f64::consts::PI;

use nalgebra::{Point2, Vector2};

use super::ParseError;

const MAX_BEZIER_DEPTH: u32 = 24;

/// Flattened subpath. `closed` is true when the subpath ended with `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subpath {
    pub points: Vec<Point2<f64>>,
    pub closed: bool,
}

/// Collects the `d` attributes of all `<path>` elements in an SVG fragment.
/// Text without markup is treated as raw path data.
pub fn extract_path_data(svg_source: &str) -> Result<Vec<String>, ParseError> {
    if !svg_source.contains('<') {
        let trimmed = svg_source.trim();
        return Ok(if trimmed.is_empty() { vec![] } else { vec![trimmed.to_string()] });
    }
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(svg_source);
    let mut out = Vec::new();
    loop {
        let pos = reader.buffer_position();
        match reader.read_event() {
            Ok(Event::Start(e)) | Ok(Event::Empty(e)) => {
                if e.local_name().as_ref() == b"path" {
                    for attr in e.attributes() {
                        let attr = attr.map_err(|err| ParseError::Xml {
                            offset: pos,
                            message: err.to_string(),
                        })?;
                        if attr.key.as_ref() == b"d" {
                            let value = std::str::from_utf8(&attr.value).map_err(|err| {
                                ParseError::Xml { offset: pos, message: err.to_string() }
                            })?;
                            out.push(value.to_string());
                        }
                    }
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(err) => {
                return Err(ParseError::Xml {
                    offset: reader.error_position(),
                    message: err.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Command(char),
    Number(f64),
}

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(s: &'a str) -> Self {
        Self { bytes: s.as_bytes(), pos: 0 }
    }

    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c.is_ascii_whitespace() || c == b',' {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<Token> {
        let save = self.pos;
        let t = self.next_token().ok().flatten();
        self.pos = save;
        t
    }

    /// Arc flags may be written without separators ("a5 5 0 1010 10").
    fn next_flag(&mut self) -> Result<bool, ParseError> {
        self.skip_separators();
        match self.bytes.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(false)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(true)
            }
            _ => Err(ParseError::Path { offset: self.pos, message: "expected arc flag".into() }),
        }
    }

    fn next_token(&mut self) -> Result<Option<Token>, ParseError> {
        self.skip_separators();
        let Some(&c) = self.bytes.get(self.pos) else {
            return Ok(None);
        };
        if c.is_ascii_alphabetic() && c != b'e' && c != b'E' {
            self.pos += 1;
            return Ok(Some(Token::Command(c as char)));
        }
        let start = self.pos;
        let mut i = self.pos;
        if matches!(self.bytes.get(i), Some(b'+') | Some(b'-')) {
            i += 1;
        }
        let mut seen_digit = false;
        let mut seen_dot = false;
        while let Some(&d) = self.bytes.get(i) {
            if d.is_ascii_digit() {
                seen_digit = true;
                i += 1;
            } else if d == b'.' && !seen_dot {
                seen_dot = true;
                i += 1;
            } else {
                break;
            }
        }
        if seen_digit && matches!(self.bytes.get(i), Some(b'e') | Some(b'E')) {
            let mut j = i + 1;
            if matches!(self.bytes.get(j), Some(b'+') | Some(b'-')) {
                j += 1;
            }
            if self.bytes.get(j).is_some_and(|d| d.is_ascii_digit()) {
                while self.bytes.get(j).is_some_and(|d| d.is_ascii_digit()) {
                    j += 1;
                }
                i = j;
            }
        }
        if !seen_digit {
            return Err(ParseError::Path {
                offset: start,
                message: format!("unexpected character {:?}", c as char),
            });
        }
        let text = std::str::from_utf8(&self.bytes[start..i]).expect("ascii slice");
        let value = text.parse::<f64>().map_err(|e| ParseError::Path {
            offset: start,
            message: format!("bad number {text:?}: {e}"),
        })?;
        self.pos = i;
        Ok(Some(Token::Number(value)))
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.next_token()? {
            Some(Token::Number(v)) => Ok(v),
            _ => Err(ParseError::Path { offset: self.pos, message: "expected number".into() }),
        }
    }

    fn has_number(&mut self) -> bool {
        matches!(self.peek(), Some(Token::Number(_)))
    }
}

struct Flattener {
    tolerance: f64,
    subpaths: Vec<Subpath>,
    current: Vec<Point2<f64>>,
    pen: Point2<f64>,
    start: Point2<f64>,
    last_cubic_ctrl: Option<Point2<f64>>,
    last_quad_ctrl: Option<Point2<f64>>,
}

impl Flattener {
    fn finish_subpath(&mut self, closed: bool) {
        if self.current.len() > 1 || closed {
            let points = std::mem::take(&mut self.current);
            self.subpaths.push(Subpath { points, closed });
        } else {
            self.current.clear();
        }
    }

    fn move_to(&mut self, p: Point2<f64>) {
        self.finish_subpath(false);
        self.current.push(p);
        self.pen = p;
        self.start = p;
    }

    fn ensure_started(&mut self) {
        if self.current.is_empty() {
            self.current.push(self.pen);
            self.start = self.pen;
        }
    }

    fn line_to(&mut self, p: Point2<f64>) {
        self.ensure_started();
        self.current.push(p);
        self.pen = p;
    }

    fn cubic_to(&mut self, c1: Point2<f64>, c2: Point2<f64>, p: Point2<f64>) {
        self.ensure_started();
        let p0 = self.pen;
        flatten_cubic(p0, c1, c2, p, self.tolerance, 0, &mut self.current);
        self.pen = p;
    }

    fn quad_to(&mut self, c: Point2<f64>, p: Point2<f64>) {
        let p0 = self.pen;
        let c1 = p0 + (c - p0) * (2.0 / 3.0);
        let c2 = p + (c - p) * (2.0 / 3.0);
        self.cubic_to(c1, c2, p);
    }

    #[allow(clippy::too_many_arguments)]
    fn arc_to(&mut self, rx: f64, ry: f64, phi_deg: f64, large: bool, sweep: bool, p: Point2<f64>) {
        self.ensure_started();
        let p0 = self.pen;
        flatten_arc(p0, rx, ry, phi_deg, large, sweep, p, self.tolerance, &mut self.current);
        self.pen = p;
    }

    fn close(&mut self) {
        self.ensure_started();
        self.pen = self.start;
        self.finish_subpath(true);
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub(crate) fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn flatten_cubic(
    p0: Point2<f64>,
    c1: Point2<f64>,
    c2: Point2<f64>,
    p3: Point2<f64>,
    tolerance: f64,
    depth: u32,
    out: &mut Vec<Point2<f64>>,
) {
    // The curve lies in the convex hull of its control points, so the
    // control-point distance to the chord bounds the chord deviation.
    let flat = point_segment_distance(c1, p0, p3).max(point_segment_distance(c2, p0, p3));
    if flat <= tolerance || depth >= MAX_BEZIER_DEPTH {
        out.push(p3);
        return;
    }
    let mid = |a: Point2<f64>, b: Point2<f64>| Point2::from((a.coords + b.coords) * 0.5);
    let p01 = mid(p0, c1);
    let p12 = mid(c1, c2);
    let p23 = mid(c2, p3);
    let p012 = mid(p01, p12);
    let p123 = mid(p12, p23);
    let m = mid(p012, p123);
    flatten_cubic(p0, p01, p012, m, tolerance, depth + 1, out);
    flatten_cubic(m, p123, p23, p3, tolerance, depth + 1, out);
}

/// Endpoint-to-center arc conversion followed by uniform parametric
/// subdivision.
#[allow(clippy::too_many_arguments)]
fn flatten_arc(
    p0: Point2<f64>,
    rx: f64,
    ry: f64,
    phi_deg: f64,
    large: bool,
    sweep: bool,
    p1: Point2<f64>,
    tolerance: f64,
    out: &mut Vec<Point2<f64>>,
) {
    let mut rx = rx.abs();
    let mut ry = ry.abs();
    if (p1 - p0).norm() == 0.0 {
        return;
    }
    if rx == 0.0 || ry == 0.0 {
        out.push(p1);
        return;
    }
    let phi = phi_deg.to_radians();
    let (sin_phi, cos_phi) = phi.sin_cos();
    let dx = (p0.x - p1.x) / 2.0;
    let dy = (p0.y - p1.y) / 2.0;
    let x1p = cos_phi * dx + sin_phi * dy;
    let y1p = -sin_phi * dx + cos_phi * dy;

    let lambda = (x1p * x1p) / (rx * rx) + (y1p * y1p) / (ry * ry);
    if lambda > 1.0 {
        let s = lambda.sqrt();
        rx *= s;
        ry *= s;
    }
    let num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p;
    let den = rx * rx * y1p * y1p + ry * ry * x1p * x1p;
    let mut coef = (num / den).max(0.0).sqrt();
    if large == sweep {
        coef = -coef;
    }
    let cxp = coef * rx * y1p / ry;
    let cyp = -coef * ry * x1p / rx;
    let cx = cos_phi * cxp - sin_phi * cyp + (p0.x + p1.x) / 2.0;
    let cy = sin_phi * cxp + cos_phi * cyp + (p0.y + p1.y) / 2.0;

    let angle = |ux: f64, uy: f64, vx: f64, vy: f64| {
        let a = (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
        a
    };
    let ux = (x1p - cxp) / rx;
    let uy = (y1p - cyp) / ry;
    let vx = (-x1p - cxp) / rx;
    let vy = (-y1p - cyp) / ry;
    let theta1 = angle(1.0, 0.0, ux, uy);
    let mut dtheta = angle(ux, uy, vx, vy);
    if !sweep && dtheta > 0.0 {
        dtheta -= 2.0 * PI;
    } else if sweep && dtheta < 0.0 {
        dtheta += 2.0 * PI;
    }

    // Chord sagitta of a parametric step δ is at most r_max (1 − cos(δ/2)).
    let r_max = rx.max(ry);
    let ratio = (1.0 - tolerance / r_max).clamp(-1.0, 1.0);
    let max_step = 2.0 * ratio.acos();
    let n = if max_step > 0.0 {
        ((dtheta.abs() / max_step).ceil() as usize).max(1)
    } else {
        1
    };
    for i in 1..=n {
        if i == n {
            out.push(p1);
            break;
        }
        let t = theta1 + dtheta * (i as f64) / (n as f64);
        let (st, ct) = t.sin_cos();
        let x = cos_phi * rx * ct - sin_phi * ry * st + cx;
        let y = sin_phi * rx * ct + cos_phi * ry * st + cy;
        out.push(Point2::new(x, y));
    }
}

/// Parses SVG path data and flattens every subpath into a polyline whose
/// maximum chord deviation from the true curve is at most `tolerance`.
pub fn flatten_path(data: &str, tolerance: f64) -> Result<Vec<Subpath>, ParseError> {
    let mut lexer = Lexer::new(data);
    let mut fl = Flattener {
        tolerance,
        subpaths: Vec::new(),
        current: Vec::new(),
        pen: Point2::origin(),
        start: Point2::origin(),
        last_cubic_ctrl: None,
        last_quad_ctrl: None,
    };
    let mut command: Option<char> = None;
    loop {
        let cmd = match lexer.peek() {
            None => break,
            Some(Token::Command(c)) => {
                lexer.next_token()?;
                c
            }
            Some(Token::Number(_)) => match command {
                // Implicit repetition; a repeated moveto becomes lineto.
                Some('M') => 'L',
                Some('m') => 'l',
                Some(c) if !matches!(c, 'Z' | 'z') => c,
                _ => {
                    return Err(ParseError::Path {
                        offset: lexer.pos,
                        message: "number without a command".into(),
                    })
                }
            },
        };
        let rel = cmd.is_ascii_lowercase();
        let base = if rel { fl.pen.coords } else { Vector2::zeros() };
        let pt = |x: f64, y: f64| Point2::new(x + base.x, y + base.y);
        let mut cubic_ctrl = None;
        let mut quad_ctrl = None;
        match cmd {
            'M' | 'm' => {
                let p = pt(lexer.number()?, lexer.number()?);
                fl.move_to(p);
            }
            'L' | 'l' => {
                let p = pt(lexer.number()?, lexer.number()?);
                fl.line_to(p);
            }
            'H' | 'h' => {
                let x = lexer.number()? + base.x;
                fl.line_to(Point2::new(x, fl.pen.y));
            }
            'V' | 'v' => {
                let y = lexer.number()? + base.y;
                fl.line_to(Point2::new(fl.pen.x, y));
            }
            'C' | 'c' => {
                let c1 = pt(lexer.number()?, lexer.number()?);
                let c2 = pt(lexer.number()?, lexer.number()?);
                let p = pt(lexer.number()?, lexer.number()?);
                fl.cubic_to(c1, c2, p);
                cubic_ctrl = Some(c2);
            }
            'S' | 's' => {
                let c1 = match fl.last_cubic_ctrl {
                    Some(prev) => fl.pen + (fl.pen - prev),
                    None => fl.pen,
                };
                let c2 = pt(lexer.number()?, lexer.number()?);
                let p = pt(lexer.number()?, lexer.number()?);
                fl.cubic_to(c1, c2, p);
                cubic_ctrl = Some(c2);
            }
            'Q' | 'q' => {
                let c = pt(lexer.number()?, lexer.number()?);
                let p = pt(lexer.number()?, lexer.number()?);
                fl.quad_to(c, p);
                quad_ctrl = Some(c);
            }
            'T' | 't' => {
                let c = match fl.last_quad_ctrl {
                    Some(prev) => fl.pen + (fl.pen - prev),
                    None => fl.pen,
                };
                let p = pt(lexer.number()?, lexer.number()?);
                fl.quad_to(c, p);
                quad_ctrl = Some(c);
            }
            'A' | 'a' => {
                let rx = lexer.number()?;
                let ry = lexer.number()?;
                let phi = lexer.number()?;
                let large = lexer.next_flag()?;
                let sweep = lexer.next_flag()?;
                let p = pt(lexer.number()?, lexer.number()?);
                fl.arc_to(rx, ry, phi, large, sweep, p);
            }
            'Z' | 'z' => fl.close(),
            other => return Err(ParseError::UnsupportedCommand(other)),
        }
        fl.last_cubic_ctrl = cubic_ctrl;
        fl.last_quad_ctrl = quad_ctrl;
        command = Some(cmd);
        if matches!(cmd, 'Z' | 'z') && lexer.has_number() {
            return Err(ParseError::Path {
                offset: lexer.pos,
                message: "number after closepath".into(),
            });
        }
    }
    fl.finish_subpath(false);
    Ok(fl.subpaths)
}
