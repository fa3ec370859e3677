//! Convex polygon machinery: polar sort, monotone-chain hull, triangle-fan
//! area, edge intersection, insider tests and generalized IoU.
//!
//! Tolerances are absolute and sized for coordinates of order one
//! (normalized image units).

use std::cmp::Ordering;

use crate::{Error, Point, Result};

/// Points closer than this are considered the same vertex.
pub const DEDUP_TOL: f64 = 1e-9;
/// Side tests whose cross product is at most this in magnitude report "on the line".
pub const SIDE_TOL: f64 = 1e-12;
/// Smallest accepted determinant for normalized line intersection.
pub const PARALLEL_TOL: f64 = 1e-12;
/// Slack allowed when checking that an intersection lies on both segments.
pub const SEGMENT_SLACK: f64 = 1e-9;
/// Enclosing hulls with area at or below this make GIoU undefined.
pub const MIN_HULL_AREA: f64 = 1e-12;

/// Vertices in counter-clockwise polar order about their centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    /// Polar-sorts `points` and checks convexity.
    pub fn new(points: &[Point]) -> Result<Self> {
        let poly = polar_sort(points)?;
        if !poly.is_convex() {
            return Err(Error::DegeneratePolygon(
                "vertices are not in convex position".into(),
            ));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Edges as `(start, end)` pairs, closing back to the first vertex.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }

    fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            (b - a).cross(c - b) >= -SIDE_TOL
        })
    }

    /// True when `p` lies inside or on the boundary.
    pub fn contains(&self, p: Point) -> bool {
        let mut seen_pos = false;
        let mut seen_neg = false;
        for (a, b) in self.edges() {
            match side_of(p, a, b) {
                1 => seen_pos = true,
                -1 => seen_neg = true,
                _ => {}
            }
            if seen_pos && seen_neg {
                return false;
            }
        }
        true
    }
}

fn all_collinear(points: &[Point]) -> bool {
    let Some(&origin) = points.first() else {
        return true;
    };
    let Some(&far) = points
        .iter()
        .max_by(|a, b| a.distance(origin).total_cmp(&b.distance(origin)))
    else {
        return true;
    };
    let dir = far - origin;
    let len = dir.norm();
    if len <= DEDUP_TOL {
        return true;
    }
    points
        .iter()
        .all(|&p| (dir.cross(p - origin) / len).abs() <= DEDUP_TOL)
}

/// Orders points counter-clockwise by `atan2` angle about their centroid.
///
/// The first vertex is the one with the smallest angle, so ordering starts on
/// the `-π` side; equal angles are ordered by distance from the centroid.
pub fn polar_sort(points: &[Point]) -> Result<ConvexPolygon> {
    if points.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "a polygon needs at least 3 vertices, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::argument("non-finite polygon vertex"));
    }
    if all_collinear(points) {
        return Err(Error::DegeneratePolygon(
            "all vertices are collinear".into(),
        ));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Point::default(), |acc, &p| acc + p) * (1.0 / n);
    let mut keyed: Vec<(f64, f64, Point)> = points
        .iter()
        .map(|&p| {
            let d = p - centroid;
            (d.y.atan2(d.x), d.norm(), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(ConvexPolygon {
        vertices: keyed.into_iter().map(|(_, _, p)| p).collect(),
    })
}

/// Convex hull by Andrew's monotone chain, returned in polar order.
/// Collinear boundary points are dropped.
pub fn convex_hull(points: &[Point]) -> Result<ConvexPolygon> {
    if points.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "a hull needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| match a.x.total_cmp(&b.x) {
        Ordering::Equal => a.y.total_cmp(&b.y),
        o => o,
    });
    pts.dedup_by(|a, b| a.distance(*b) <= DEDUP_TOL);

    let turn = |o: Point, a: Point, b: Point| (a - o).cross(b - o);
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= SIDE_TOL {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= SIDE_TOL
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(Error::DegeneratePolygon("points are collinear".into()));
    }
    polar_sort(&hull)
}

/// Sum of the fan triangles from vertex 0, each taken in absolute value.
pub fn polygon_area(poly: &ConvexPolygon) -> f64 {
    let v = &poly.vertices;
    let p0 = v[0];
    v.windows(2)
        .skip(1)
        .map(|w| {
            let (p1, p2) = (w[0], w[1]);
            0.5 * (p0.x * (p1.y - p2.y) + p1.x * (p2.y - p0.y) + p2.x * (p0.y - p1.y)).abs()
        })
        .sum()
}

/// The line `a·x + b·y = c` through a segment, with `(a, b)` of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub start: Point,
    pub end: Point,
}

impl GeneralLine {
    pub fn through(start: Point, end: Point) -> Result<Self> {
        let a = end.y - start.y;
        let b = start.x - end.x;
        let len = a.hypot(b);
        if len <= DEDUP_TOL {
            return Err(Error::argument("line through coincident points"));
        }
        let (a, b) = (a / len, b / len);
        Ok(Self {
            a,
            b,
            c: a * start.x + b * start.y,
            start,
            end,
        })
    }

    /// Whether `p` lies within the segment's bounding range (with slack).
    /// Only meaningful for points already on the line.
    pub fn spans(&self, p: Point) -> bool {
        let lo = Point::new(self.start.x.min(self.end.x), self.start.y.min(self.end.y));
        let hi = Point::new(self.start.x.max(self.end.x), self.start.y.max(self.end.y));
        p.x >= lo.x - SEGMENT_SLACK
            && p.x <= hi.x + SEGMENT_SLACK
            && p.y >= lo.y - SEGMENT_SLACK
            && p.y <= hi.y + SEGMENT_SLACK
    }
}

/// Intersection of two infinite lines; `None` when (near) parallel.
pub fn line_intersection(e1: &GeneralLine, e2: &GeneralLine) -> Option<Point> {
    let det = e1.a * e2.b - e2.a * e1.b;
    if det.abs() <= PARALLEL_TOL {
        return None;
    }
    Some(Point::new(
        (e2.b * e1.c - e1.b * e2.c) / det,
        (e1.a * e2.c - e2.a * e1.c) / det,
    ))
}

/// Intersection of two segments, if it lies on both.
pub fn segment_intersection(e1: &GeneralLine, e2: &GeneralLine) -> Option<Point> {
    line_intersection(e1, e2).filter(|&p| e1.spans(p) && e2.spans(p))
}

fn side_of(p: Point, p0: Point, p1: Point) -> i8 {
    let v = (p.y - p0.y) * (p1.x - p0.x) - (p.x - p0.x) * (p1.y - p0.y);
    if v.abs() <= SIDE_TOL {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Sign of `(y − y0)(x1 − x0) − (x − x0)(y1 − y0)`: which side of the
/// directed segment `p0 → p1` the point `p` falls on, 0 when on the line.
pub fn point_side(p: Point, p0: Point, p1: Point) -> Result<i8> {
    if p0.distance(p1) <= DEDUP_TOL {
        return Err(Error::argument("degenerate segment"));
    }
    Ok(side_of(p, p0, p1))
}

fn push_unique(points: &mut Vec<Point>, p: Point) {
    if points.iter().all(|q| q.distance(p) > DEDUP_TOL) {
        points.push(p);
    }
}

/// Intersection of two convex polygons.
///
/// Vertices are the edge–edge crossings plus each polygon's vertices that lie
/// inside or on the other. Returns `None` when fewer than three distinct
/// points remain or they are collinear (zero-area contact).
pub fn convex_intersection(a: &ConvexPolygon, b: &ConvexPolygon) -> Option<ConvexPolygon> {
    let mut pts = Vec::new();
    let lines = |poly: &ConvexPolygon| -> Vec<GeneralLine> {
        poly.edges()
            .filter_map(|(s, e)| GeneralLine::through(s, e).ok())
            .collect()
    };
    let (la, lb) = (lines(a), lines(b));
    for ea in &la {
        for eb in &lb {
            if let Some(p) = segment_intersection(ea, eb) {
                push_unique(&mut pts, p);
            }
        }
    }
    for &v in a.vertices() {
        if b.contains(v) {
            push_unique(&mut pts, v);
        }
    }
    for &v in b.vertices() {
        if a.contains(v) {
            push_unique(&mut pts, v);
        }
    }
    if pts.len() < 3 {
        return None;
    }
    polar_sort(&pts).ok()
}

/// Area terms of a GIoU evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GiouParts {
    pub intersection: f64,
    pub union: f64,
    pub enclosing: f64,
    pub iou: f64,
    pub giou: f64,
}

/// Generalized IoU with the convex hull of both vertex sets as the enclosing shape.
pub fn giou_parts(a: &ConvexPolygon, b: &ConvexPolygon) -> Result<GiouParts> {
    let intersection = convex_intersection(a, b).map_or(0.0, |p| p.area());
    let union = a.area() + b.area() - intersection;
    let all: Vec<Point> = a.vertices().iter().chain(b.vertices()).copied().collect();
    let hull = convex_hull(&all)
        .map_err(|e| Error::NumericalDegeneracy(format!("enclosing hull: {e}")))?;
    let enclosing = hull.area();
    if enclosing <= MIN_HULL_AREA || union <= MIN_HULL_AREA {
        return Err(Error::NumericalDegeneracy(format!(
            "enclosing hull area {enclosing:e} is too small"
        )));
    }
    let iou = intersection / union;
    let giou = iou - (enclosing - union).max(0.0) / enclosing;
    Ok(GiouParts {
        intersection,
        union,
        enclosing,
        iou,
        giou,
    })
}

pub fn giou(a: &ConvexPolygon, b: &ConvexPolygon) -> Result<f64> {
    giou_parts(a, b).map(|p| p.giou)
}
