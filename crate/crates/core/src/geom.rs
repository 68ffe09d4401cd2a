//! Planar polygon primitives over (lon, lat) degrees.

use serde::{Deserialize, Serialize};

/// A position as `[lon, lat]`, GeoJSON order.
pub type Position = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    /// Closed ring, first position repeated last.
    pub exterior: Vec<Position>,
    pub holes: Vec<Vec<Position>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPolygon(pub Vec<Polygon>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Boundary,
    Outside,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Position,
    pub max: Position,
}

impl BBox {
    pub fn of_ring(ring: &[Position]) -> BBox {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in ring {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        BBox { min, max }
    }

    pub fn union(self, other: BBox) -> BBox {
        BBox {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    pub fn intersection(self, other: BBox) -> Option<BBox> {
        let b = BBox {
            min: [self.min[0].max(other.min[0]), self.min[1].max(other.min[1])],
            max: [self.max[0].min(other.max[0]), self.max[1].min(other.max[1])],
        };
        (b.min[0] <= b.max[0] && b.min[1] <= b.max[1]).then_some(b)
    }

    pub fn contains(&self, p: Position) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

fn cross(o: Position, a: Position, b: Position) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: Position, a: Position, b: Position) -> bool {
    cross(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Crossing-number test with exact boundary detection.
pub fn ring_containment(ring: &[Position], p: Position) -> Containment {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if on_segment(p, a, b) {
            return Containment::Boundary;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    if inside {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

impl Polygon {
    pub fn bbox(&self) -> BBox {
        BBox::of_ring(&self.exterior)
    }

    pub fn containment(&self, p: Position) -> Containment {
        match ring_containment(&self.exterior, p) {
            Containment::Inside => {}
            other => return other,
        }
        for hole in &self.holes {
            match ring_containment(hole, p) {
                Containment::Inside => return Containment::Outside,
                Containment::Boundary => return Containment::Boundary,
                Containment::Outside => {}
            }
        }
        Containment::Inside
    }

    fn rings(&self) -> impl Iterator<Item = &Vec<Position>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }
}

impl MultiPolygon {
    pub fn bbox(&self) -> BBox {
        self.0.iter().map(Polygon::bbox).reduce(BBox::union).unwrap_or(BBox {
            min: [0.0; 2],
            max: [0.0; 2],
        })
    }

    pub fn containment(&self, p: Position) -> Containment {
        let mut best = Containment::Outside;
        for poly in &self.0 {
            match poly.containment(p) {
                Containment::Inside => return Containment::Inside,
                Containment::Boundary => best = Containment::Boundary,
                Containment::Outside => {}
            }
        }
        best
    }

    pub fn contains_closed(&self, p: Position) -> bool {
        self.containment(p) != Containment::Outside
    }

    fn segments_within(&self, window: BBox) -> Vec<(Position, Position)> {
        let mut out = Vec::new();
        for poly in &self.0 {
            for ring in poly.rings() {
                for w in ring.windows(2) {
                    let seg = BBox::of_ring(w);
                    if seg.intersection(window).is_some() {
                        out.push((w[0], w[1]));
                    }
                }
            }
        }
        out
    }
}

/// Points just inside `g` next to its vertices that fall in `window`, at
/// most `limit` of them spread evenly over the candidates.
fn nudged_vertices(g: &MultiPolygon, window: BBox, limit: usize) -> Vec<Position> {
    let mut verts = Vec::new();
    for poly in &g.0 {
        for ring in poly.rings() {
            let m = ring.len().saturating_sub(1);
            for k in 0..m {
                let v = ring[k];
                if window.contains(v) {
                    verts.push((ring[(k + m - 1) % m], v, ring[(k + 1) % m]));
                }
            }
        }
    }
    let step = verts.len().div_ceil(limit.max(1)).max(1);
    let unit = |d: [f64; 2]| {
        let n = d[0].hypot(d[1]);
        if n > 0.0 {
            [d[0] / n, d[1] / n]
        } else {
            [0.0, 0.0]
        }
    };
    let mut out = Vec::new();
    for &(prev, v, next) in verts.iter().step_by(step) {
        let a = [prev[0] - v[0], prev[1] - v[1]];
        let b = [next[0] - v[0], next[1] - v[1]];
        let eps = 1e-6 * a[0].hypot(a[1]).min(b[0].hypot(b[1]));
        let (ua, ub) = (unit(a), unit(b));
        let mut d = unit([ua[0] + ub[0], ua[1] + ub[1]]);
        if d == [0.0, 0.0] {
            d = [-ua[1], ua[0]];
        }
        for sign in [1.0, -1.0] {
            let p = [v[0] + sign * eps * d[0], v[1] + sign * eps * d[1]];
            if g.containment(p) == Containment::Inside {
                out.push(p);
                break;
            }
        }
    }
    out
}

fn proper_crossing(a: (Position, Position), b: (Position, Position)) -> bool {
    let d1 = cross(b.0, b.1, a.0);
    let d2 = cross(b.0, b.1, a.1);
    let d3 = cross(a.0, a.1, b.0);
    let d4 = cross(a.0, a.1, b.1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Detects interior overlap between two multipolygons: a proper crossing of
/// boundary segments, or a representative interior point of one strictly
/// inside the other, or a point just inside a vertex of one lying inside
/// the other (this catches overlaps bounded by collinear edges). Shared
/// edges and touching vertices are not overlaps. Vertex probing is capped
/// per polygon, so very detailed collinear overlaps can slip through.
pub fn interiors_overlap(a: &MultiPolygon, rep_a: Position, b: &MultiPolygon, rep_b: Position) -> bool {
    let Some(window) = a.bbox().intersection(b.bbox()) else {
        return false;
    };
    if a.containment(rep_a) == Containment::Inside && b.containment(rep_a) == Containment::Inside {
        return true;
    }
    if b.containment(rep_b) == Containment::Inside && a.containment(rep_b) == Containment::Inside {
        return true;
    }
    let mut segs: Vec<(bool, (Position, Position))> = a
        .segments_within(window)
        .into_iter()
        .map(|s| (true, s))
        .chain(b.segments_within(window).into_iter().map(|s| (false, s)))
        .collect();
    let min_x = |s: &(Position, Position)| s.0[0].min(s.1[0]);
    let max_x = |s: &(Position, Position)| s.0[0].max(s.1[0]);
    segs.sort_by(|x, y| min_x(&x.1).total_cmp(&min_x(&y.1)));
    // Sweep over x; each segment is tested against the other polygon's
    // segments whose x-extent is still open.
    let mut active_a: Vec<(Position, Position)> = Vec::new();
    let mut active_b: Vec<(Position, Position)> = Vec::new();
    for (from_a, s) in segs {
        let lo = min_x(&s);
        let (mine, theirs) = if from_a {
            (&mut active_a, &mut active_b)
        } else {
            (&mut active_b, &mut active_a)
        };
        theirs.retain(|t| max_x(t) >= lo);
        if theirs.iter().any(|t| proper_crossing(s, *t)) {
            return true;
        }
        mine.push(s);
    }
    const PROBES: usize = 256;
    nudged_vertices(a, window, PROBES)
        .into_iter()
        .any(|p| b.containment(p) == Containment::Inside)
        || nudged_vertices(b, window, PROBES)
            .into_iter()
            .any(|p| a.containment(p) == Containment::Inside)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn square(x0: f64, y0: f64, side: f64) -> MultiPolygon {
        MultiPolygon(vec![Polygon {
            exterior: vec![
                [x0, y0],
                [x0 + side, y0],
                [x0 + side, y0 + side],
                [x0, y0 + side],
                [x0, y0],
            ],
            holes: vec![],
        }])
    }

    #[test]
    fn square_containment() {
        let sq = square(0.0, 0.0, 1.0);
        assert_eq!(sq.containment([0.5, 0.5]), Containment::Inside);
        assert_eq!(sq.containment([1.0, 0.5]), Containment::Boundary);
        assert_eq!(sq.containment([0.0, 0.0]), Containment::Boundary);
        assert_eq!(sq.containment([1.5, 0.5]), Containment::Outside);
        assert_eq!(sq.containment([0.5, -1e-9]), Containment::Outside);
    }

    #[test]
    fn holes_exclude() {
        let mut sq = square(0.0, 0.0, 4.0);
        sq.0[0]
            .holes
            .push(vec![[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0], [1.0, 1.0]]);
        assert_eq!(sq.containment([2.0, 2.0]), Containment::Outside);
        assert_eq!(sq.containment([1.0, 2.0]), Containment::Boundary);
        assert_eq!(sq.containment([0.5, 2.0]), Containment::Inside);
    }

    #[test]
    fn overlap_detection() {
        let a = square(0.0, 0.0, 1.0);
        let adjacent = square(1.0, 0.0, 1.0);
        let shifted = square(0.5, 0.5, 1.0);
        let inner = square(0.25, 0.25, 0.5);
        assert!(!interiors_overlap(&a, [0.5, 0.5], &adjacent, [1.5, 0.5]));
        assert!(interiors_overlap(&a, [0.5, 0.5], &shifted, [1.0, 1.0]));
        assert!(interiors_overlap(&a, [0.5, 0.5], &inner, [0.5, 0.5]));
        assert!(interiors_overlap(&a, [0.5, 0.5], &a.clone(), [0.5, 0.5]));
        assert!(!interiors_overlap(&a, [0.5, 0.5], &square(5.0, 5.0, 1.0), [5.5, 5.5]));
        let half = square(0.5, 0.0, 1.0);
        assert!(interiors_overlap(&a, [0.5, 0.5], &half, [1.0, 0.5]));
    }
}
