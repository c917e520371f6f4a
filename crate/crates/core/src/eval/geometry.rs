//! Point-set similarity in degree space: Hausdorff distance and the Jaccard
//! index of convex hulls.

use super::EvalError;

pub type Point = (f64, f64);

fn dist2(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    dx * dx + dy * dy
}

/// `sup_a inf_b |a - b|`, squared. The inner loop stops as soon as a point
/// of `b` is closer than the running maximum, since `a` cannot raise it.
fn directed2(a: &[Point], b: &[Point]) -> f64 {
    let mut cmax = 0.0f64;
    for &p in a {
        let mut cmin = f64::INFINITY;
        for &q in b {
            let d = dist2(p, q);
            if d < cmax {
                cmin = d;
                break;
            }
            cmin = cmin.min(d);
        }
        if cmin > cmax {
            cmax = cmin;
        }
    }
    cmax
}

/// Symmetric Hausdorff distance with Euclidean ground distance.
pub fn hausdorff(a: &[Point], b: &[Point]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Empty("Hausdorff distance of an empty point set".into()));
    }
    Ok(directed2(a, b).max(directed2(b, a)).sqrt())
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull vertices without collinear points, starting at the
/// lexicographically smallest point (monotone chain).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower = half_hull(pts.iter());
    let mut upper = half_hull(pts.iter().rev());
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn half_hull<'a>(points: impl Iterator<Item = &'a Point>) -> Vec<Point> {
    let mut h: Vec<Point> = Vec::new();
    for &p in points {
        while h.len() >= 2 && cross(h[h.len() - 2], h[h.len() - 1], p) <= 0.0 {
            h.pop();
        }
        h.push(p);
    }
    h
}

/// Shoelace area of a simple polygon (positive for counter-clockwise).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice / 2.0
}

/// Clips convex `subject` by convex counter-clockwise `clip`
/// (Sutherland-Hodgman).
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (e0, e1) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        let inside = |p: Point| cross(e0, e1, p) >= 0.0;
        let intersect = |p: Point, q: Point| {
            let (cp, cq) = (cross(e0, e1, p), cross(e0, e1, q));
            let t = cp / (cp - cq);
            (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
        };
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(intersect(prev, cur)),
                (false, true) => {
                    out.push(intersect(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

/// Intersection over union of the convex hulls of `a` and `b`.
///
/// Hulls with zero area (one point or collinear points) give 0, except that
/// two identical degenerate hulls give 1.
pub fn hull_jaccard(a: &[Point], b: &[Point]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Empty("Jaccard index of an empty point set".into()));
    }
    let (ha, hb) = (convex_hull(a), convex_hull(b));
    let (area_a, area_b) = (polygon_area(&ha), polygon_area(&hb));
    if area_a <= 0.0 || area_b <= 0.0 {
        let identical = area_a <= 0.0 && area_b <= 0.0 && ha == hb;
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    if ha == hb {
        return Ok(1.0);
    }
    let inter = polygon_area(&clip_convex(&ha, &hb)).max(0.0);
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}
