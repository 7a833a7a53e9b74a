use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ArrayPose, ChannelModel, ChannelRealization, PathComponent, PathKind};
use crate::geometry::{bearing, Point, SPEED_OF_LIGHT};

pub const SELF_INTERFERENCE_DELAY_S: f64 = 5e-9;

/// Sine-space half-width of the sector a beam is considered to illuminate.
const ILLUMINATION_HALF_WIDTH: f64 = 0.25;

/// TX-to-RX leakage of a monostatic node, seen as one strong path at a fixed
/// local direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfInterference {
    pub delay_s: f64,
    /// Power relative to a lossless broadside echo at `reference_range_m`.
    pub level_db: f64,
    pub reference_range_m: f64,
    /// Local azimuth (rad) of the leakage in beam space.
    pub local_az: f64,
}

impl Default for SelfInterference {
    fn default() -> Self {
        Self {
            delay_s: SELF_INTERFERENCE_DELAY_S,
            level_db: 40.0,
            reference_range_m: 4.0,
            local_az: (-40f64).to_radians(),
        }
    }
}

impl ChannelModel {
    /// Two-way amplitude of an echo from range `d` with unit reflectivity.
    pub fn echo_amplitude(&self, d: f64) -> f64 {
        self.free_space(2.0 * d)
    }

    fn self_interference_path(&self, node: &ArrayPose) -> PathComponent {
        let si = &self.self_interference;
        let amp = self.echo_amplitude(si.reference_range_m) * 10f64.powf(si.level_db / 20.0);
        let dir = node.to_global(si.local_az);
        PathComponent {
            kind: PathKind::SelfInterference,
            delay: si.delay_s,
            aod: dir,
            aoa: dir,
            gain: Complex64::from_polar(amp, self.scatter_phase(&[4])),
            bounces: vec![],
            bounce_points: vec![],
        }
    }

    /// Echo channel for a node whose co-located TX and RX arrays both point at
    /// global azimuth `beam_az`. Surfaces are discretised into patches; only
    /// patches inside the illuminated sector, in front of the array and with a
    /// clear line of sight contribute.
    pub fn monostatic_channel(&self, node: &ArrayPose, beam_az: f64, t: f64) -> ChannelRealization {
        let origin = node.position;
        let u_beam = node.to_local(beam_az).sin();
        let mut paths = vec![self.self_interference_path(node)];
        for (si, surf) in self.env.surfaces.iter().enumerate() {
            let seg = &surf.segment;
            let dir = seg.direction();
            let len = seg.length();
            // patch grid anchored at the foot of the perpendicular from the node
            let foot = (origin - seg.a).dot(&dir);
            let k_lo = ((0.0 - foot) / self.patch_step).ceil() as i64;
            let k_hi = ((len - foot) / self.patch_step).floor() as i64;
            for k in k_lo..=k_hi {
                let along = foot + k as f64 * self.patch_step;
                let p: Point = seg.a + dir * along;
                let d = (p - origin).norm();
                if d < 1e-6 {
                    continue;
                }
                let az = bearing(&origin, &p);
                let local = node.to_local(az);
                if local.abs() >= std::f64::consts::FRAC_PI_2 || (local.sin() - u_beam).abs() > ILLUMINATION_HALF_WIDTH {
                    continue;
                }
                if self.env.is_blocked(&origin, &p, t, &[si]) {
                    continue;
                }
                let cos_inc = ((origin - p) / d).dot(&seg.normal()).abs().min(1.0);
                let theta = cos_inc.acos();
                let lobe = (-(theta / surf.kind.backscatter_lobe()).powi(2)).exp();
                let amp = self.echo_amplitude(d) * surf.amplitude() * lobe * self.roughness_gain(si, &p);
                if amp < 1e-15 {
                    continue;
                }
                let carrier = -2.0 * std::f64::consts::PI * (2.0 * d / self.wavelength).fract();
                let phase = carrier + self.scatter_phase(&[3, si as u64, k as u64]);
                paths.push(PathComponent {
                    kind: PathKind::Echo,
                    delay: 2.0 * d / SPEED_OF_LIGHT,
                    aod: az,
                    aoa: az,
                    gain: Complex64::from_polar(amp, phase),
                    bounces: vec![si],
                    bounce_points: vec![p],
                });
            }
        }
        let mut chan = ChannelRealization { paths, timestamp: t };
        chan.sort();
        chan
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::geometry::{Segment, SPEED_OF_LIGHT};
    use approx::assert_abs_diff_eq;

    fn node() -> ArrayPose {
        ArrayPose::new(0.0, 0.0, 0.0)
    }

    fn wall(x: f64, kind: SurfaceKind) -> Surface {
        Surface::new(Segment::from_coords(x, -1.0, x, 1.0), kind)
    }

    #[test]
    fn empty_map_has_only_self_interference() {
        let m = ChannelModel::new(EnvironmentMap::empty([-10.0, -10.0, 10.0, 10.0]), 28e9, 3);
        let c = m.monostatic_channel(&node(), 0.0, 0.0);
        assert_eq!(c.paths.len(), 1);
        assert_eq!(c.paths[0].kind, PathKind::SelfInterference);
        assert_abs_diff_eq!(c.paths[0].delay, 5e-9);
        assert_abs_diff_eq!(c.paths[0].aod, (-40f64).to_radians(), epsilon = 1e-12);
        let ref_amp = m.echo_amplitude(4.0);
        assert_abs_diff_eq!(20.0 * (c.paths[0].gain.norm() / ref_amp).log10(), 40.0, epsilon = 1e-9);
    }

    #[test]
    fn broadside_wall_echo_delay() {
        let mut env = EnvironmentMap::empty([-10.0, -10.0, 10.0, 10.0]);
        env.surfaces.push(wall(4.0, SurfaceKind::Metal));
        let m = ChannelModel::new(env, 28e9, 3);
        let c = m.monostatic_channel(&node(), 0.0, 0.0);
        let strongest = c
            .paths
            .iter()
            .filter(|p| p.kind == PathKind::Echo)
            .max_by(|a, b| a.gain.norm().total_cmp(&b.gain.norm()))
            .unwrap();
        assert_abs_diff_eq!(strongest.delay, 8.0 / SPEED_OF_LIGHT, epsilon = 1e-15);
        assert_abs_diff_eq!(strongest.delay, 26.685e-9, epsilon = 1e-12);
    }

    #[test]
    fn two_walls_delay_ratio() {
        let mut env = EnvironmentMap::empty([-10.0, -10.0, 10.0, 10.0]);
        env.surfaces.push(Surface::new(Segment::from_coords(3.0, 0.1, 3.0, 1.5), SurfaceKind::Metal));
        env.surfaces.push(Surface::new(Segment::from_coords(6.0, -1.5, 6.0, -0.1), SurfaceKind::Metal));
        let n = ArrayPose::new(0.0, 0.0, 0.0);
        let m = ChannelModel::new(env, 28e9, 3);
        let c = m.monostatic_channel(&n, 0.0, 0.0);
        let best = |s: usize| {
            c.paths
                .iter()
                .filter(|p| p.bounce_surface() == Some(s))
                .min_by(|a, b| a.delay.total_cmp(&b.delay))
                .unwrap()
                .delay
        };
        let (d3, d6) = (best(0), best(1));
        // nearest patches are at (3, 0.2) and (6, -0.2) on the 0.2 m grid anchored at y = 0
        let oracle3 = 2.0 * (9.0f64 + 0.04).sqrt() / SPEED_OF_LIGHT;
        let oracle6 = 2.0 * (36.0f64 + 0.04).sqrt() / SPEED_OF_LIGHT;
        assert_abs_diff_eq!(d3, oracle3, epsilon = 1e-15);
        assert_abs_diff_eq!(d6, oracle6, epsilon = 1e-15);
        assert!((d6 / d3 - 2.0).abs() < 0.01);
    }

    #[test]
    fn wall_behind_node_and_outside_sector_is_silent() {
        let mut env = EnvironmentMap::empty([-10.0, -10.0, 10.0, 10.0]);
        env.surfaces.push(wall(-4.0, SurfaceKind::Metal));
        let m = ChannelModel::new(env, 28e9, 3);
        assert_eq!(m.monostatic_channel(&node(), 0.0, 0.0).paths.len(), 1);
        let mut env = EnvironmentMap::empty([-10.0, -10.0, 10.0, 10.0]);
        env.surfaces.push(wall(4.0, SurfaceKind::Metal));
        let m = ChannelModel::new(env, 28e9, 3);
        assert_eq!(m.monostatic_channel(&node(), 0.9, 0.0).paths.len(), 1);
    }

    #[test]
    fn metal_returns_more_than_rough() {
        let run = |kind| {
            let mut env = EnvironmentMap::empty([-10.0, -10.0, 10.0, 10.0]);
            env.surfaces.push(wall(5.0, kind));
            let m = ChannelModel::new(env, 28e9, 3);
            m.monostatic_channel(&node(), 0.0, 0.0)
                .paths
                .iter()
                .filter(|p| p.kind == PathKind::Echo)
                .map(|p| p.gain.norm())
                .fold(0.0, f64::max)
        };
        assert!(run(SurfaceKind::Metal) > run(SurfaceKind::Rough));
    }
}
