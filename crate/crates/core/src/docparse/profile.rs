use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::svg::{extract_path_data, flatten_path};
use super::ParseError;

/// Ordered vertex loop in millimeters, implicitly closed.
pub type Polygon = Vec<Point2<f64>>;

/// Planar outline of a flat part: one counter-clockwise outer loop and any
/// number of clockwise holes strictly inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile2D {
    pub outer: Polygon,
    pub holes: Vec<Polygon>,
    pub category_id: u32,
}

/// Signed shoelace area; positive for counter-clockwise loops.
pub fn signed_area(poly: &[Point2<f64>]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc * 0.5
}

pub fn perimeter(poly: &[Point2<f64>]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum()
}

/// Even-odd crossing test. Points on the boundary may go either way.
pub fn point_in_polygon(p: Point2<f64>, poly: &[Point2<f64>]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2<f64>, b: Point2<f64>, p: Point2<f64>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(
    a: Point2<f64>,
    b: Point2<f64>,
    c: Point2<f64>,
    d: Point2<f64>,
) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn bbox(poly: &[Point2<f64>]) -> (Point2<f64>, Point2<f64>) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in poly {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// True when the loop has no self-intersections other than shared
/// endpoints of adjacent edges.
pub fn is_simple(poly: &[Point2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if adjacent {
                // Adjacent edges may only share their common vertex; a fold
                // back along the previous edge is a degeneracy.
                let shared = if j == i + 1 { b } else { a };
                let other_1 = if j == i + 1 { a } else { b };
                let other_2 = if j == i + 1 { d } else { c };
                if orient(other_1, shared, other_2) == 0.0
                    && (other_1 - shared).dot(&(other_2 - shared)) > 0.0
                {
                    return false;
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn loops_intersect(p: &[Point2<f64>], q: &[Point2<f64>]) -> bool {
    let (plo, phi) = bbox(p);
    let (qlo, qhi) = bbox(q);
    if plo.x > qhi.x || qlo.x > phi.x || plo.y > qhi.y || qlo.y > phi.y {
        return false;
    }
    let n = p.len();
    let m = q.len();
    for i in 0..n {
        for j in 0..m {
            if segments_intersect(p[i], p[(i + 1) % n], q[j], q[(j + 1) % m]) {
                return true;
            }
        }
    }
    false
}

/// `inner` lies strictly inside `outer`: no boundary contact and a vertex
/// of `inner` inside `outer`.
fn strictly_inside(inner: &[Point2<f64>], outer: &[Point2<f64>]) -> bool {
    !loops_intersect(inner, outer) && point_in_polygon(inner[0], outer)
}

impl Profile2D {
    /// Region area (outer minus holes), mm².
    pub fn area(&self) -> f64 {
        signed_area(&self.outer) + self.holes.iter().map(|h| signed_area(h)).sum::<f64>()
    }

    /// Total boundary length over all loops.
    pub fn perimeter(&self) -> f64 {
        perimeter(&self.outer) + self.holes.iter().map(|h| perimeter(h)).sum::<f64>()
    }

    pub fn loops(&self) -> impl Iterator<Item = &Polygon> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Axis-aligned bounds of the outer loop as (min, max).
    pub fn bounds(&self) -> (Point2<f64>, Point2<f64>) {
        bbox(&self.outer)
    }

    /// Area centroid of the region.
    pub fn centroid(&self) -> Point2<f64> {
        let mut a = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for poly in self.loops() {
            let n = poly.len();
            for i in 0..n {
                let (p, q) = (poly[i], poly[(i + 1) % n]);
                let cross = p.x * q.y - q.x * p.y;
                a += cross;
                cx += (p.x + q.x) * cross;
                cy += (p.y + q.y) * cross;
            }
        }
        Point2::new(cx / (3.0 * a), cy / (3.0 * a))
    }

    /// Copy translated so that the bounding-box center is at the origin;
    /// this is the model frame used by extrusion.
    pub fn centered(&self) -> Profile2D {
        let (lo, hi) = self.bounds();
        let c = (lo.coords + hi.coords) * 0.5;
        let shift = |poly: &Polygon| poly.iter().map(|p| p - c).collect::<Polygon>();
        Profile2D {
            outer: shift(&self.outer),
            holes: self.holes.iter().map(shift).collect(),
            category_id: self.category_id,
        }
    }

    /// Checks every type invariant and reports the first violation.
    pub fn validate(&self) -> Result<(), ParseError> {
        let bad = |msg: String| Err(ParseError::InvalidProfile(msg));
        if !is_simple(&self.outer) {
            return bad("outer loop is not simple".into());
        }
        let outer_area = signed_area(&self.outer);
        if outer_area <= 0.0 {
            return bad("outer loop is not counter-clockwise".into());
        }
        for (i, h) in self.holes.iter().enumerate() {
            if !is_simple(h) {
                return bad(format!("hole {i} is not simple"));
            }
            if signed_area(h) >= 0.0 {
                return bad(format!("hole {i} is not clockwise"));
            }
            if !strictly_inside(h, &self.outer) {
                return bad(format!("hole {i} is not strictly inside the outer loop"));
            }
            for (j, g) in self.holes.iter().enumerate().skip(i + 1) {
                if loops_intersect(h, g) || point_in_polygon(h[0], g) || point_in_polygon(g[0], h)
                {
                    return bad(format!("holes {i} and {j} overlap"));
                }
            }
        }
        if self.area().abs() < 1.0 {
            return bad(format!("region area {} mm² is below 1 mm²", self.area()));
        }
        Ok(())
    }

    /// Serializes every loop as absolute path data with six decimals.
    pub fn to_svg_path(&self) -> String {
        let mut out = String::new();
        for poly in self.loops() {
            for (i, p) in poly.iter().enumerate() {
                let cmd = if i == 0 { "M" } else { "L" };
                out.push_str(&format!("{cmd} {:.6} {:.6} ", p.x, p.y));
            }
            out.push_str("Z ");
        }
        out.trim_end().to_string()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ProfileJson::from(self)).expect("profile serializes")
    }

    pub fn from_json(s: &str) -> Result<Profile2D, serde_json::Error> {
        let j: ProfileJson = serde_json::from_str(s)?;
        Ok(j.into())
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// On-disk form: loops as arrays of `[x, y]` rounded to 6 decimals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileJson {
    pub category_id: u32,
    pub outer: Vec<[f64; 2]>,
    pub holes: Vec<Vec<[f64; 2]>>,
}

impl From<&Profile2D> for ProfileJson {
    fn from(p: &Profile2D) -> Self {
        let conv = |poly: &Polygon| poly.iter().map(|q| [round6(q.x), round6(q.y)]).collect();
        Self {
            category_id: p.category_id,
            outer: conv(&p.outer),
            holes: p.holes.iter().map(conv).collect(),
        }
    }
}

impl From<ProfileJson> for Profile2D {
    fn from(j: ProfileJson) -> Self {
        let conv = |poly: &Vec<[f64; 2]>| poly.iter().map(|q| Point2::new(q[0], q[1])).collect();
        Profile2D {
            outer: conv(&j.outer),
            holes: j.holes.iter().map(conv).collect(),
            category_id: j.category_id,
        }
    }
}

/// Parses an SVG fragment (or bare path data) into a validated profile.
///
/// The loop with the largest absolute area becomes the outer boundary and
/// every other loop must sit inside it as a hole. Orientation is normalized
/// by reversing loops when needed; the first vertex is kept.
pub fn parse_svg_path(svg_source: &str, tolerance: f64) -> Result<Profile2D, ParseError> {
    if !(tolerance > 0.0) {
        return Err(ParseError::InvalidTolerance(tolerance));
    }
    let mut loops: Vec<Polygon> = Vec::new();
    for data in extract_path_data(svg_source)? {
        for sub in flatten_path(&data, tolerance)? {
            let mut pts = sub.points;
            let Some(&first) = pts.first() else { continue };
            let last = *pts.last().expect("non-empty");
            if !sub.closed && (last - first).norm() > tolerance {
                return Err(ParseError::OpenSubpath { start: [first.x, first.y], end: [last.x, last.y] });
            }
            pts.dedup_by(|b, a| (*b - *a).norm() <= 1e-9);
            let closing_gap = if sub.closed { 1e-9 } else { tolerance };
            if pts.len() > 1 && (pts[pts.len() - 1] - pts[0]).norm() <= closing_gap {
                pts.pop();
            }
            if pts.len() < 3 {
                if pts.len() <= 1 {
                    continue;
                }
                return Err(ParseError::InvalidProfile("loop with fewer than 3 vertices".into()));
            }
            loops.push(pts);
        }
    }
    if loops.is_empty() {
        return Err(ParseError::NoClosedSubpath);
    }
    let outer_idx = loops
        .iter()
        .enumerate()
        .max_by(|a, b| signed_area(a.1).abs().total_cmp(&signed_area(b.1).abs()))
        .map(|(i, _)| i)
        .expect("non-empty");
    let mut outer = loops.remove(outer_idx);
    if signed_area(&outer) < 0.0 {
        outer.reverse();
        outer.rotate_right(1);
    }
    for (i, h) in loops.iter().enumerate() {
        if !strictly_inside(h, &outer) {
            return Err(ParseError::InvalidProfile(format!(
                "loop {} is not contained in the outer loop",
                i + 1
            )));
        }
        for (j, g) in loops.iter().enumerate() {
            if i != j && strictly_inside(h, g) {
                return Err(ParseError::NestingTooDeep);
            }
        }
    }
    let holes = loops
        .into_iter()
        .map(|mut h| {
            if signed_area(&h) > 0.0 {
                h.reverse();
                h.rotate_right(1);
            }
            h
        })
        .collect();
    let profile = Profile2D { outer, holes, category_id: 0 };
    profile.validate()?;
    Ok(profile)
}

/// Axis-aligned (width, height) of the outer loop in mm.
pub fn profile_bbox(profile: &Profile2D) -> (f64, f64) {
    let (lo, hi) = profile.bounds();
    (hi.x - lo.x, hi.y - lo.y)
}
