use super::{reflection_point, SlamState};
use crate::geometry::{Point, Segment};

/// Reflector estimates from trusted virtual anchors: the perpendicular
/// bisector of BS and anchor, clipped to the span of the reflection points
/// seen from the stops where the anchor was observed.
pub fn recover_surfaces(state: &SlamState) -> Vec<Segment> {
    let mut out = Vec::new();
    for i in 0..state.n_virtual() {
        if state.virtual_cov(i).trace() > state.cfg.anchor_trust_trace {
            continue;
        }
        let v = state.virtual_anchor(i);
        if let Some(seg) = bisector_segment(&state.bs, &v, &state.tracks[i].observed_from) {
            out.push(seg);
        }
    }
    out
}

pub(crate) fn bisector_segment(bs: &Point, va: &Point, observers: &[Point]) -> Option<Segment> {
    let n = va - bs;
    if n.norm() < 1e-9 {
        return None;
    }
    let m = (bs + va) * 0.5;
    let dir = Point::new(-n.y, n.x) / n.norm();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in observers {
        if let Some(r) = reflection_point(bs, va, p) {
            let s = (r - m).dot(&dir);
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    if !lo.is_finite() {
        return None;
    }
    Some(Segment::new(m + dir * lo, m + dir * hi))
}

/// Mean distance from points sampled every `step` metres along the recovered
/// segments to the nearest true segment. Infinite if nothing was recovered.
pub fn mapping_error(recovered: &[Segment], truth: &[Segment], step: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for seg in recovered {
        for p in seg.sample(step) {
            let d = truth.iter().map(|t| t.distance_to(&p)).fold(f64::INFINITY, f64::min);
            sum += d;
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bisector_of_bs_and_anchor() {
        let seg = bisector_segment(&Point::new(0.0, 0.0), &Point::new(10.0, 0.0), &[Point::new(2.0, 3.0), Point::new(1.0, -4.0)]).unwrap();
        assert_abs_diff_eq!(seg.a.x, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(seg.b.x, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_anchor_passes_through_true_reflection_points() {
        let wall = Segment::from_coords(-5.0, 3.0, 30.0, 3.0);
        let bs = Point::new(0.0, 0.0);
        let va = wall.mirror(&bs);
        let ues = [Point::new(6.0, -1.0), Point::new(12.0, 1.0), Point::new(20.0, -1.0)];
        let seg = bisector_segment(&bs, &va, &ues).unwrap();
        for ue in &ues {
            // true specular point on the wall
            let (t, _) = wall.intersect_params(ue, &va).unwrap();
            let r = ue + (va - ue) * t;
            assert!(seg.distance_to(&r) < 1e-6);
        }
        assert!(mapping_error(&[seg], &[wall], 0.1) < 1e-9);
    }

    #[test]
    fn mapping_error_of_offset_line() {
        let truth = [Segment::from_coords(0.0, 0.0, 10.0, 0.0)];
        let est = [Segment::from_coords(2.0, 0.5, 8.0, 0.5)];
        assert_abs_diff_eq!(mapping_error(&est, &truth, 0.1), 0.5, epsilon = 1e-12);
        assert!(mapping_error(&[], &truth, 0.1).is_infinite());
    }
}
