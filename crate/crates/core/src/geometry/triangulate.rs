//! Ear-clipping triangulation of polygons with holes.
//!
//! Holes are merged into the outer loop through bridge edges (rightmost
//! hole vertex first), producing one weakly-simple polygon that is then
//! clipped ear by ear.

use nalgebra::Point2;

use super::GeometryError;
use crate::docparse::Profile2D;

fn orient(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn in_triangle(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, p: Point2<f64>) -> bool {
    orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
}

/// Triangulation result. `vertices` lists the outer loop followed by each
/// hole in order; `triangles` index into it with counter-clockwise winding.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub vertices: Vec<Point2<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| 0.5 * orient(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]))
            .sum()
    }

    pub fn triangle_points(&self) -> Vec<[Point2<f64>; 3]> {
        self.triangles
            .iter()
            .map(|t| [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]])
            .collect()
    }
}

/// Is the direction from `seq[pos]` towards `target` inside the polygon's
/// interior wedge at that vertex?
fn locally_inside(pts: &[Point2<f64>], seq: &[usize], pos: usize, target: Point2<f64>) -> bool {
    let n = seq.len();
    let prev = pts[seq[(pos + n - 1) % n]];
    let cur = pts[seq[pos]];
    let next = pts[seq[(pos + 1) % n]];
    if orient(prev, cur, next) >= 0.0 {
        orient(prev, cur, target) >= 0.0 && orient(cur, next, target) >= 0.0
    } else {
        orient(prev, cur, target) >= 0.0 || orient(cur, next, target) >= 0.0
    }
}

/// Finds the position in `seq` that the hole vertex `h` can be bridged to.
fn find_bridge(pts: &[Point2<f64>], seq: &[usize], h: Point2<f64>) -> Option<usize> {
    let n = seq.len();
    let mut best_x = f64::INFINITY;
    let mut candidate = None;
    for i in 0..n {
        let a = pts[seq[i]];
        let b = pts[seq[(i + 1) % n]];
        if a.y == b.y {
            continue;
        }
        if (a.y <= h.y && h.y <= b.y) || (b.y <= h.y && h.y <= a.y) {
            let x = a.x + (h.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x >= h.x && x < best_x {
                best_x = x;
                candidate = Some(if a.x > b.x { i } else { (i + 1) % n });
            }
        }
    }
    let mut m = candidate?;
    let mp = pts[seq[m]];
    if best_x == h.x {
        return Some(m);
    }
    // Any vertex inside the triangle (h, hit, m) would block the bridge; the
    // one with the smallest angle to the ray is visible from h.
    let hit = Point2::new(best_x, h.y);
    let (t0, t1, t2) = if h.y < mp.y { (h, hit, mp) } else { (h, mp, hit) };
    let mut tan_min = f64::INFINITY;
    for i in 0..n {
        let p = pts[seq[i]];
        if p.x >= h.x && p.x <= mp.x && p.x != h.x && in_triangle(t0, t1, t2, p) {
            let tan = (h.y - p.y).abs() / (p.x - h.x);
            if locally_inside(pts, seq, i, h)
                && (tan < tan_min || (tan == tan_min && p.x < pts[seq[m]].x))
            {
                m = i;
                tan_min = tan;
            }
        }
    }
    // Among duplicated bridge vertices pick an occurrence whose wedge
    // actually faces the hole.
    let target = seq[m];
    if !locally_inside(pts, seq, m, h) {
        if let Some(alt) = (0..n).find(|&i| seq[i] == target && locally_inside(pts, seq, i, h)) {
            m = alt;
        }
    }
    Some(m)
}

fn ear_clip(pts: &[Point2<f64>], seq: Vec<usize>) -> Vec<[usize; 3]> {
    let n = seq.len();
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut alive = vec![true; n];
    let mut remaining = n;
    let mut tris = Vec::with_capacity(n.saturating_sub(2));
    let mut cur = 0usize;
    let mut stall = 0usize;
    // 0 = strict ears, 1 = allow collinear clips, 2 = any convex-or-flat vertex
    let mut relax = 0u8;

    let is_ear = |cur: usize, prev: &[usize], next: &[usize], alive: &[bool], relax: u8| {
        let (ia, ib, ic) = (prev[cur], cur, next[cur]);
        let (a, b, c) = (pts[seq[ia]], pts[seq[ib]], pts[seq[ic]]);
        let o = orient(a, b, c);
        if relax == 2 {
            return o >= 0.0;
        }
        if o < 0.0 || (o == 0.0 && relax == 0) {
            return false;
        }
        if o == 0.0 {
            // Flat vertex: only clip when b lies between a and c.
            return (a - b).dot(&(c - b)) <= 0.0;
        }
        let mut p = next[ic];
        while p != ia {
            if alive[p] {
                let q = pts[seq[p]];
                if q != a && q != b && q != c && in_triangle(a, b, c, q) {
                    return false;
                }
            }
            p = next[p];
        }
        true
    };

    while remaining > 3 {
        if is_ear(cur, &prev, &next, &alive, relax) {
            let (ia, ic) = (prev[cur], next[cur]);
            tris.push([seq[ia], seq[cur], seq[ic]]);
            alive[cur] = false;
            next[ia] = ic;
            prev[ic] = ia;
            remaining -= 1;
            cur = ic;
            stall = 0;
            relax = 0;
        } else {
            cur = next[cur];
            stall += 1;
            if stall > remaining {
                stall = 0;
                if relax == 2 {
                    // Nothing clip-able; emit the current vertex anyway.
                    let (ia, ic) = (prev[cur], next[cur]);
                    tris.push([seq[ia], seq[cur], seq[ic]]);
                    alive[cur] = false;
                    next[ia] = ic;
                    prev[ic] = ia;
                    remaining -= 1;
                    cur = ic;
                    relax = 0;
                } else {
                    relax += 1;
                }
            }
        }
    }
    if remaining == 3 {
        tris.push([seq[prev[cur]], seq[cur], seq[next[cur]]]);
    }
    tris
}

/// Triangulates the region bounded by the outer loop minus its holes.
pub fn triangulate(profile: &Profile2D) -> Result<Triangulation, GeometryError> {
    let area = profile.area();
    if !(area.abs() > 0.0) || profile.outer.len() < 3 {
        return Err(GeometryError::Degenerate(format!("profile area {area}")));
    }
    let mut vertices: Vec<Point2<f64>> = profile.outer.clone();
    let mut seq: Vec<usize> = (0..profile.outer.len()).collect();

    let mut holes: Vec<(usize, usize)> = Vec::new(); // (start, len)
    for h in &profile.holes {
        holes.push((vertices.len(), h.len()));
        vertices.extend_from_slice(h);
    }
    // Process holes right to left so later bridges never cross earlier ones.
    let rightmost = |(start, len): (usize, usize)| {
        (start..start + len)
            .max_by(|&a, &b| {
                vertices[a].x.total_cmp(&vertices[b].x).then(vertices[b].y.total_cmp(&vertices[a].y))
            })
            .expect("non-empty hole")
    };
    let mut order: Vec<(usize, usize, usize)> =
        holes.iter().map(|&h| (h.0, h.1, rightmost(h))).collect();
    order.sort_by(|a, b| vertices[b.2].x.total_cmp(&vertices[a.2].x));

    for (start, len, hi) in order {
        let h = vertices[hi];
        let pos = find_bridge(&vertices, &seq, h).ok_or_else(|| {
            GeometryError::Degenerate("no bridge from hole to outer loop".into())
        })?;
        let bridge_vertex = seq[pos];
        let mut insert = Vec::with_capacity(len + 2);
        for k in 0..len {
            insert.push(start + (hi - start + k) % len);
        }
        insert.push(hi);
        insert.push(bridge_vertex);
        seq.splice(pos + 1..pos + 1, insert);
    }

    let triangles = ear_clip(&vertices, seq);
    Ok(Triangulation { vertices, triangles })
}
