//! Stroked-polyline rasterization into per-row spans.
//!
//! A pixel `(col, row)` is covered when its center, taken at the integer
//! coordinates `(col, row)`, lies within `width / 2` of the polyline. Each
//! segment with its round caps is a capsule, whose intersection with a pixel
//! row is a single x-interval; the row's spans are the merged intervals.
//! This is exact set arithmetic, with no anti-aliasing.

use crate::{ImageSize, Point};

/// Binary lane mask stored as sorted, disjoint `[start, end)` column spans per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneMask {
    size: ImageSize,
    rows: Vec<Vec<(u32, u32)>>,
}

impl LaneMask {
    pub fn empty(size: ImageSize) -> Self {
        Self {
            size,
            rows: vec![Vec::new(); size.height as usize],
        }
    }

    pub fn size(&self) -> ImageSize {
        self.size
    }

    pub fn row_spans(&self, row: usize) -> &[(u32, u32)] {
        &self.rows[row]
    }

    pub fn area(&self) -> u64 {
        self.rows
            .iter()
            .flatten()
            .map(|&(s, e)| u64::from(e - s))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        self.rows
            .get(row as usize)
            .is_some_and(|spans| spans.iter().any(|&(s, e)| s <= col && col < e))
    }

    /// Row-major boolean image.
    pub fn to_bitmap(&self) -> Vec<bool> {
        let w = self.size.width as usize;
        let mut out = vec![false; w * self.size.height as usize];
        for (r, spans) in self.rows.iter().enumerate() {
            for &(s, e) in spans {
                out[r * w + s as usize..r * w + e as usize].fill(true);
            }
        }
        out
    }

    /// Number of pixels set in both masks.
    pub fn intersection_area(&self, other: &LaneMask) -> u64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let (mut i, mut j, mut acc) = (0, 0, 0u64);
                while i < a.len() && j < b.len() {
                    let lo = a[i].0.max(b[j].0);
                    let hi = a[i].1.min(b[j].1);
                    if hi > lo {
                        acc += u64::from(hi - lo);
                    }
                    if a[i].1 < b[j].1 {
                        i += 1;
                    } else {
                        j += 1;
                    }
                }
                acc
            })
            .sum()
    }

    /// `|A ∩ B| / |A ∪ B|`, 0 when both masks are empty.
    pub fn iou(&self, other: &LaneMask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Solves `lo <= slope * x + offset <= hi` for x.
fn linear_band(slope: f64, offset: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if slope == 0.0 {
        return (lo <= offset && offset <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let a = (lo - offset) / slope;
    let b = (hi - offset) / slope;
    Some((a.min(b), a.max(b)))
}

fn disc_interval(center: Point, radius: f64, y: f64) -> Option<(f64, f64)> {
    let dy = y - center.y;
    let h2 = radius * radius - dy * dy;
    (h2 >= 0.0).then(|| {
        let h = h2.sqrt();
        (center.x - h, center.x + h)
    })
}

/// x-range of the capsule around segment `a-b` on the horizontal line `y`.
fn capsule_interval(a: Point, b: Point, radius: f64, y: f64) -> Option<(f64, f64)> {
    let mut acc: Option<(f64, f64)> = None;
    let mut add = |iv: Option<(f64, f64)>| {
        if let Some((l, r)) = iv {
            if l <= r {
                acc = Some(acc.map_or((l, r), |(al, ar)| (al.min(l), ar.max(r))));
            }
        }
    };
    add(disc_interval(a, radius, y));
    add(disc_interval(b, radius, y));

    let d = b - a;
    let len2 = d.dot(d);
    if len2 > 0.0 {
        let len = len2.sqrt();
        // projection parameter s(x) and signed offset u(x), both linear in x
        let s = linear_band(
            d.x / len2,
            (y - a.y) * d.y / len2 - a.x * d.x / len2,
            0.0,
            1.0,
        );
        let u = linear_band(
            d.y / len,
            -(y - a.y) * d.x / len - a.x * d.y / len,
            -radius,
            radius,
        );
        if let (Some((s0, s1)), Some((u0, u1))) = (s, u) {
            add(Some((s0.max(u0), s1.min(u1))));
        }
    }
    acc
}

/// Rasterizes the polyline through `points` as a stroke of `width` pixels
/// with round caps and joins.
pub fn rasterize_lane(points: &[Point], width: f64, size: ImageSize) -> LaneMask {
    let mut mask = LaneMask::empty(size);
    if points.len() < 2 {
        if !points.is_empty() {
            log::warn!(
                "lane with {} point skipped during rasterization",
                points.len()
            );
        }
        return mask;
    }
    let radius = 0.5 * width;
    let max_col = size.width as f64 - 1.0;
    let max_row = size.height as i64 - 1;
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let top = ((a.y.min(b.y) - radius).ceil() as i64).max(0);
        let bottom = ((a.y.max(b.y) + radius).floor() as i64).min(max_row);
        for row in top..=bottom {
            let Some((l, r)) = capsule_interval(a, b, radius, row as f64) else {
                continue;
            };
            let start = l.ceil().max(0.0);
            let end = r.floor().min(max_col);
            if start <= end {
                mask.rows[row as usize].push((start as u32, end as u32 + 1));
            }
        }
    }
    for spans in &mut mask.rows {
        merge_spans(spans);
    }
    mask
}

fn merge_spans(spans: &mut Vec<(u32, u32)>) {
    if spans.len() < 2 {
        return;
    }
    spans.sort_unstable();
    let mut merged: Vec<(u32, u32)> = Vec::with_capacity(spans.len());
    for &(s, e) in spans.iter() {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    *spans = merged;
}

/// Rasterizes every lane into one mask.
pub fn rasterize_lanes(lanes: &[Vec<Point>], width: f64, size: ImageSize) -> LaneMask {
    let mut mask = LaneMask::empty(size);
    for lane in lanes {
        let m = rasterize_lane(lane, width, size);
        for (dst, src) in mask.rows.iter_mut().zip(m.rows) {
            dst.extend(src);
            merge_spans(dst);
        }
    }
    mask
}

/// Pixel IoU between two stroked lanes.
pub fn lane_iou(a: &[Point], b: &[Point], width: f64, size: ImageSize) -> f64 {
    rasterize_lane(a, width, size).iou(&rasterize_lane(b, width, size))
}
