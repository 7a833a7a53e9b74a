use num_complex::Complex64;

use super::{ChannelModel, ChannelRealization, PathComponent, PathKind};
use crate::error::{Error, Result};
use crate::geometry::{bearing, Point, SPEED_OF_LIGHT};

impl ChannelModel {
    /// LOS plus specular reflections up to `max_order` bounces, found by the
    /// image-source construction and validated against blockage at time `t`.
    pub fn trace_paths(&self, tx: &Point, rx: &Point, t: f64) -> Result<ChannelRealization> {
        if (tx - rx).norm() < 1e-9 {
            return Err(Error::Geometry("transmitter and receiver coincide".into()));
        }
        for (name, p) in [("tx", tx), ("rx", rx)] {
            if !self.env.contains(p) {
                return Err(Error::Geometry(format!("{name} ({}, {}) outside map bounds", p.x, p.y)));
            }
        }
        let mut chan = ChannelRealization {
            paths: Vec::new(),
            timestamp: t,
        };
        if !self.env.is_blocked(tx, rx, t, &[]) {
            let d = (rx - tx).norm();
            chan.paths.push(PathComponent {
                kind: PathKind::Los,
                delay: d / SPEED_OF_LIGHT,
                aod: bearing(tx, rx),
                aoa: bearing(rx, tx),
                gain: Complex64::from_polar(self.free_space(d), self.carrier_phase(d)),
                bounces: vec![],
                bounce_points: vec![],
            });
        }
        let mut order = Vec::new();
        self.reflect_recursive(tx, rx, t, &mut order, &mut vec![*tx], &mut chan.paths);
        chan.sort();
        Ok(chan)
    }

    fn carrier_phase(&self, d: f64) -> f64 {
        -2.0 * std::f64::consts::PI * (d / self.wavelength).fract()
    }

    fn reflect_recursive(
        &self,
        tx: &Point,
        rx: &Point,
        t: f64,
        order: &mut Vec<usize>,
        images: &mut Vec<Point>,
        out: &mut Vec<PathComponent>,
    ) {
        if order.len() == self.max_order {
            return;
        }
        for (i, surface) in self.env.surfaces.iter().enumerate() {
            if order.last() == Some(&i) {
                continue;
            }
            let image = surface.segment.mirror(images.last().unwrap());
            order.push(i);
            images.push(image);
            if let Some(path) = self.backtrack(tx, rx, t, order, images) {
                out.push(path);
            }
            self.reflect_recursive(tx, rx, t, order, images, out);
            order.pop();
            images.pop();
        }
    }

    /// Walk from the receiver back through the image chain, collecting
    /// reflection points; `None` if any bounce misses its segment or a leg is blocked.
    fn backtrack(&self, tx: &Point, rx: &Point, t: f64, order: &[usize], images: &[Point]) -> Option<PathComponent> {
        let n = order.len();
        let mut points = vec![Point::zeros(); n];
        let mut from = *rx;
        for k in (0..n).rev() {
            let seg = &self.env.surfaces[order[k]].segment;
            let target = images[k + 1];
            let (tp, s) = seg.intersect_params(&from, &target)?;
            if !(1e-9..1.0 - 1e-9).contains(&tp) || !(0.0..=1.0).contains(&s) {
                return None;
            }
            points[k] = from + (target - from) * tp;
            from = points[k];
        }
        // legs: tx -> p0 -> ... -> p_{n-1} -> rx
        let mut legs = Vec::with_capacity(n + 1);
        legs.push((*tx, points[0]));
        for k in 1..n {
            legs.push((points[k - 1], points[k]));
        }
        legs.push((points[n - 1], *rx));
        for (a, b) in &legs {
            if (b - a).norm() < 1e-9 || self.env.is_blocked(a, b, t, order) {
                return None;
            }
        }
        // interior bounces must not pass through other bounce surfaces either
        for (a, b) in &legs {
            for &s in order {
                if self.env.surfaces[s].segment.blocks(a, b, 1e-6) {
                    return None;
                }
            }
        }
        let d = (images[n] - rx).norm();
        let mut amp = self.free_space(d);
        let mut phase = self.carrier_phase(d);
        for (k, &s) in order.iter().enumerate() {
            let surf = &self.env.surfaces[s];
            amp *= surf.amplitude() * self.roughness_gain(s, &points[k]);
            phase += self.scatter_phase(&[1, s as u64]);
        }
        Some(PathComponent {
            kind: PathKind::SpecularNlos,
            delay: d / SPEED_OF_LIGHT,
            aod: bearing(tx, &points[0]),
            aoa: bearing(rx, &points[n - 1]),
            gain: Complex64::from_polar(amp, phase),
            bounces: order.to_vec(),
            bounce_points: points,
        })
    }

    /// Position-dependent amplitude factor standing in for diffuse scattering
    /// off rough surfaces: piecewise constant over 0.5 m cells.
    pub(crate) fn roughness_gain(&self, surface: usize, p: &Point) -> f64 {
        let surf = &self.env.surfaces[surface];
        let spread = surf.kind.roughness_db();
        if spread == 0.0 {
            return 1.0;
        }
        let along = (p - surf.segment.a).dot(&surf.segment.direction());
        let cell = (along / 0.5).floor() as i64 as u64;
        let xi = self.unit_hash(&[2, surface as u64, cell]) - 0.5;
        10f64.powf(spread * xi / 20.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::geometry::{Segment, SPEED_OF_LIGHT};
    use approx::assert_abs_diff_eq;

    fn model(env: EnvironmentMap) -> ChannelModel {
        ChannelModel::new(env, 28e9, 1)
    }

    fn wall_x5() -> EnvironmentMap {
        let mut env = EnvironmentMap::empty([-20.0, -20.0, 20.0, 20.0]);
        env.surfaces.push(Surface::new(Segment::from_coords(5.0, -10.0, 5.0, 10.0), SurfaceKind::Metal));
        env
    }

    #[test]
    fn free_space_los() {
        let m = model(EnvironmentMap::empty([-20.0, -20.0, 20.0, 20.0]));
        let c = m.trace_paths(&Point::new(0.0, 0.0), &Point::new(10.0, 0.0), 0.0).unwrap();
        assert_eq!(c.paths.len(), 1);
        let p = &c.paths[0];
        assert_eq!(p.kind, PathKind::Los);
        assert_abs_diff_eq!(p.delay, 33.356_409_5e-9, epsilon = 1e-15);
        assert_abs_diff_eq!(p.aod, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.aoa.abs(), std::f64::consts::PI, epsilon = 1e-12);
        assert_abs_diff_eq!(p.gain.norm(), m.wavelength / (4.0 * std::f64::consts::PI * 10.0), epsilon = 1e-15);
    }

    #[test]
    fn mirror_path_length() {
        let m = model(wall_x5());
        let c = m.trace_paths(&Point::new(0.0, -2.0), &Point::new(0.0, 2.0), 0.0).unwrap();
        assert_eq!(c.paths.len(), 2);
        let nlos = c.paths.iter().find(|p| p.kind == PathKind::SpecularNlos).unwrap();
        assert_abs_diff_eq!(nlos.length(), 116f64.sqrt(), epsilon = 1e-9);
        assert_eq!(nlos.bounce_surface(), Some(0));
        // reflection point lies on the wall
        let r = nlos.bounce_points[0];
        assert!(m.env.surfaces[0].segment.distance_to(&r) < 1e-9);
        assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-9);
        let expect_loss = 10f64.powf(-1.0 / 20.0) * m.free_space(116f64.sqrt());
        assert_abs_diff_eq!(nlos.gain.norm(), expect_loss, epsilon = 1e-15);
        assert!(c.paths.windows(2).all(|w| w[0].delay <= w[1].delay));
    }

    #[test]
    fn pedestrian_blocks_los_only() {
        let mut env = wall_x5();
        env.interferers.push(Interferer {
            radius: 0.3,
            waypoints: vec![[0.0, 0.0, 0.0]],
            repeat: false,
        });
        let m = model(env);
        let c = m.trace_paths(&Point::new(0.0, -2.0), &Point::new(0.0, 2.0), 0.0).unwrap();
        assert!(c.los().is_none());
        assert_eq!(c.paths.len(), 1);
        assert_eq!(c.paths[0].kind, PathKind::SpecularNlos);
    }

    #[test]
    fn degenerate_and_out_of_bounds() {
        let m = model(wall_x5());
        let p = Point::new(1.0, 1.0);
        assert!(matches!(m.trace_paths(&p, &p, 0.0), Err(Error::Geometry(_))));
        assert!(m.trace_paths(&p, &Point::new(100.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn wall_between_blocks_and_has_no_reflection() {
        let m = model(wall_x5());
        let c = m.trace_paths(&Point::new(0.0, 0.0), &Point::new(10.0, 0.0), 0.0).unwrap();
        assert!(c.paths.is_empty());
    }

    #[test]
    fn second_order_corridor_bounce() {
        let mut env = EnvironmentMap::empty([-50.0, -50.0, 50.0, 50.0]);
        env.surfaces.push(Surface::new(Segment::from_coords(-40.0, 2.0, 40.0, 2.0), SurfaceKind::Metal));
        env.surfaces.push(Surface::new(Segment::from_coords(-40.0, -2.0, 40.0, -2.0), SurfaceKind::Metal));
        let mut m = model(env);
        m.max_order = 2;
        let tx = Point::new(0.0, 0.0);
        let rx = Point::new(10.0, 0.5);
        let c = m.trace_paths(&tx, &rx, 0.0).unwrap();
        // LOS, two single bounces, two double bounces
        assert_eq!(c.paths.len(), 5);
        for p in c.paths.iter().filter(|p| p.bounces.len() == 2) {
            let pts = &p.bounce_points;
            let len = (pts[0] - tx).norm() + (pts[1] - pts[0]).norm() + (rx - pts[1]).norm();
            assert_abs_diff_eq!(len, p.length(), epsilon = 1e-9);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let m = model(builtin_map("imaging").unwrap());
        let a = m.trace_paths(&Point::new(1.0, 0.5), &Point::new(6.0, -1.0), 0.3).unwrap();
        let b = m.trace_paths(&Point::new(1.0, 0.5), &Point::new(6.0, -1.0), 0.3).unwrap();
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn corridor() -> ChannelModel {
            let mut env = EnvironmentMap::empty([-30.0, -30.0, 30.0, 30.0]);
            env.surfaces.push(Surface::new(Segment::from_coords(-20.0, 3.0, 20.0, 3.0), SurfaceKind::Glass));
            env.surfaces.push(Surface::new(Segment::from_coords(-20.0, -3.0, 20.0, -3.0), SurfaceKind::Rough));
            env.surfaces.push(Surface::new(Segment::from_coords(15.0, -3.0, 15.0, 3.0), SurfaceKind::Metal));
            model(env)
        }

        proptest! {
            #[test]
            fn reciprocity_and_validity(x1 in -10.0..14.0f64, y1 in -2.8..2.8f64,
                                        x2 in -10.0..14.0f64, y2 in -2.8..2.8f64) {
                let m = corridor();
                let a = Point::new(x1, y1);
                let b = Point::new(x2, y2);
                prop_assume!((a - b).norm() > 0.1);
                let fwd = m.trace_paths(&a, &b, 0.0).unwrap();
                let rev = m.trace_paths(&b, &a, 0.0).unwrap();
                prop_assert_eq!(fwd.paths.len(), rev.paths.len());
                for (f, r) in fwd.paths.iter().zip(&rev.paths) {
                    prop_assert!((f.delay - r.delay).abs() < 1e-15);
                    prop_assert!(crate::geometry::wrap_angle(f.aod - r.aoa).abs() < 1e-9);
                    prop_assert!(crate::geometry::wrap_angle(f.aoa - r.aod).abs() < 1e-9);
                }
                prop_assert!(fwd.paths.iter().filter(|p| p.kind == PathKind::Los).count() <= 1);
                for p in &fwd.paths {
                    // delay * c equals the geometric path length
                    let mut len = 0.0;
                    let mut prev = a;
                    for q in &p.bounce_points {
                        len += (q - prev).norm();
                        prev = *q;
                    }
                    len += (b - prev).norm();
                    prop_assert!((p.delay * SPEED_OF_LIGHT - len).abs() <= 1e-9 * len);
                    for (s, q) in p.bounces.iter().zip(&p.bounce_points) {
                        prop_assert!(m.env.surfaces[*s].segment.distance_to(q) < 1e-9);
                    }
                }
            }
        }
    }
}
