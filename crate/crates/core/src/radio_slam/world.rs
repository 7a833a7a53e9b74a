use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BearingMeasurement, ImuSample, VisionDetection, VisionTarget};
use crate::error::Result;
use crate::geo_channel::{builtin_map, ArrayPose, ChannelModel, EnvironmentMap, Interferer};
use crate::geometry::{bearing, point_segment_distance, wrap_angle, Point, Segment};
use crate::nr_frame::Numerology;
use crate::phased_array::BeamCodebook;
use crate::sensing::{assemble_panorama, estimate_angles, BistaticScanner, LinkBudget, PeakConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuModel {
    pub sigma_speed: f64,
    pub sigma_yaw_rate: f64,
    pub speed_scale_sigma: f64,
    /// Random-walk intensity of the speed bias, m/s per sqrt(s).
    pub speed_bias_walk: f64,
    pub gyro_bias_sigma: f64,
    /// Random-walk intensity of the gyro bias, rad/s per sqrt(s).
    pub gyro_bias_walk: f64,
}

impl Default for ImuModel {
    fn default() -> Self {
        Self {
            sigma_speed: 0.05,
            sigma_yaw_rate: 0.01,
            speed_scale_sigma: 0.02,
            speed_bias_walk: 1e-3,
            gyro_bias_sigma: 1e-3,
            gyro_bias_walk: 2e-5,
        }
    }
}

/// Camera co-located with the BS reporting target positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisionModel {
    pub rate_hz: f64,
    pub loss_prob: f64,
    pub half_fov: f64,
    pub max_range: f64,
    pub sigma0: f64,
    pub sigma_per_m: f64,
    /// Relative noise growth at the FOV edge.
    pub edge_gain: f64,
}

impl Default for VisionModel {
    fn default() -> Self {
        Self {
            rate_hz: 30.0,
            loss_prob: 0.05,
            half_fov: 60f64.to_radians(),
            max_range: 40.0,
            sigma0: 0.05,
            sigma_per_m: 0.01,
            edge_gain: 2.0,
        }
    }
}

impl VisionModel {
    pub fn sigma_at(&self, range: f64, local_az: f64) -> f64 {
        (self.sigma0 + self.sigma_per_m * range) * (1.0 + self.edge_gain * (local_az / self.half_fov).powi(2))
    }
}

/// Stop-and-scan walk through a two-wall corridor with a fixed BS, a camera
/// beside it and pedestrians crossing the field of view.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorScenario {
    pub map: EnvironmentMap,
    pub bs: ArrayPose,
    pub stops: Vec<Point>,
    pub start_heading: f64,
    pub drive_speed: f64,
    pub turn_rate: f64,
    /// Seconds spent at each stop (scanning plus idle).
    pub dwell_s: u32,
    pub orientations_deg: Vec<f64>,
    pub k_paths: usize,
    pub link: LinkBudget,
    pub imu: ImuModel,
    pub vision: VisionModel,
    /// Standard deviations of the initial pose prior (m, m, rad).
    pub initial_sigma: [f64; 3],
}

impl CorridorScenario {
    /// Two walls, 20 stops 2 m apart (out along y = -1, back along y = +1),
    /// two pedestrians, 60 s per stop (about 20 minutes in total).
    pub fn nominal() -> Self {
        let mut map = builtin_map("corridor").expect("built-in map");
        map.interferers = vec![
            Interferer {
                radius: 0.3,
                waypoints: vec![[0.0, 2.0, 0.4], [20.0, 26.0, 0.4], [40.0, 2.0, 0.4]],
                repeat: true,
            },
            Interferer {
                radius: 0.3,
                waypoints: vec![[0.0, 26.0, -1.9], [25.0, 4.0, -1.9], [50.0, 26.0, -1.9]],
                repeat: true,
            },
        ];
        let mut stops: Vec<Point> = (0..10).map(|i| Point::new(6.0 + 2.0 * i as f64, -1.0)).collect();
        stops.extend((0..10).map(|i| Point::new(24.0 - 2.0 * i as f64, 1.0)));
        Self {
            map,
            bs: ArrayPose::new(0.0, 0.0, 0.0),
            stops,
            start_heading: 0.0,
            drive_speed: 0.5,
            turn_rate: std::f64::consts::FRAC_PI_4,
            dwell_s: 56,
            orientations_deg: vec![0.0, 90.0, 180.0, 270.0],
            k_paths: 4,
            link: LinkBudget::default(),
            imu: ImuModel::default(),
            vision: VisionModel::default(),
            initial_sigma: [1.0, 1.0, 5f64.to_radians()],
        }
    }

    pub fn true_surfaces(&self) -> Vec<Segment> {
        self.map.surfaces.iter().map(|s| s.segment).collect()
    }
}

/// Ground truth generated from piecewise-constant controls: each second the
/// UE either turns in place, drives straight, or stands still.
#[derive(Debug, Clone)]
pub struct Truth {
    /// `(v, w)` applied over `[k, k + 1)`.
    pub controls: Vec<(f64, f64)>,
    /// Pose at each integer second, `controls.len() + 1` entries.
    pub poses: Vec<[f64; 3]>,
    /// `(stop index, arrival time)`.
    pub arrivals: Vec<(usize, u32)>,
}

impl Truth {
    pub fn generate(scn: &CorridorScenario) -> Self {
        let mut controls = Vec::new();
        let mut arrivals = Vec::new();
        let mut pose = [scn.stops[0].x, scn.stops[0].y, scn.start_heading];
        for (i, stop) in scn.stops.iter().enumerate() {
            if i > 0 {
                let here = Point::new(pose[0], pose[1]);
                let dist = (stop - here).norm();
                let dh = wrap_angle(bearing(&here, stop) - pose[2]);
                let n_turn = (dh.abs() / scn.turn_rate - 1e-9).ceil() as u32;
                for _ in 0..n_turn {
                    controls.push((0.0, dh / f64::from(n_turn)));
                }
                let n_drive = (dist / scn.drive_speed - 1e-9).ceil().max(1.0) as u32;
                for _ in 0..n_drive {
                    controls.push((dist / f64::from(n_drive), 0.0));
                }
                pose = [stop.x, stop.y, wrap_angle(pose[2] + dh)];
            }
            arrivals.push((i, controls.len() as u32));
            controls.extend(std::iter::repeat_n((0.0, 0.0), scn.dwell_s as usize));
        }
        let mut poses = vec![[scn.stops[0].x, scn.stops[0].y, scn.start_heading]];
        for &(v, w) in &controls {
            let p = *poses.last().unwrap();
            poses.push(step(p, v, w, 1.0));
        }
        Self {
            controls,
            poses,
            arrivals,
        }
    }

    pub fn duration(&self) -> u32 {
        self.controls.len() as u32
    }

    pub fn pose_at(&self, t: f64) -> [f64; 3] {
        let k = (t.floor().max(0.0) as usize).min(self.controls.len());
        if k == self.controls.len() {
            return self.poses[k];
        }
        let (v, w) = self.controls[k];
        step(self.poses[k], v, w, t - k as f64)
    }
}

/// Euler step of the unicycle; exact here because turning and driving never overlap.
pub(crate) fn step(p: [f64; 3], v: f64, w: f64, dt: f64) -> [f64; 3] {
    [p[0] + v * dt * p[2].cos(), p[1] + v * dt * p[2].sin(), wrap_angle(p[2] + w * dt)]
}

/// Noisy IMU readout with slowly drifting biases.
pub struct ImuSim {
    model: ImuModel,
    scale: f64,
    speed_bias: f64,
    gyro_bias: f64,
    heading: f64,
}

impl ImuSim {
    pub fn new<R: Rng + ?Sized>(model: ImuModel, heading0: f64, rng: &mut R) -> Self {
        Self {
            model,
            scale: gauss(rng, model.speed_scale_sigma),
            speed_bias: 0.0,
            gyro_bias: gauss(rng, model.gyro_bias_sigma),
            heading: heading0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, t: f64, v: f64, w: f64, rng: &mut R) -> ImuSample {
        let m = &self.model;
        let moving = v != 0.0;
        let speed = if moving {
            v * (1.0 + self.scale) + self.speed_bias + gauss(rng, m.sigma_speed)
        } else {
            gauss(rng, m.sigma_speed)
        };
        let yaw_rate = w + self.gyro_bias + gauss(rng, m.sigma_yaw_rate);
        self.heading = wrap_angle(self.heading + yaw_rate);
        self.speed_bias += gauss(rng, m.speed_bias_walk);
        self.gyro_bias += gauss(rng, m.gyro_bias_walk);
        ImuSample {
            t,
            speed,
            yaw_rate,
            heading: self.heading,
        }
    }
}

pub(crate) fn gauss<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

impl VisionModel {
    /// One camera frame at time `t`: the UE plus every pedestrian in view.
    pub fn observe<R: Rng + ?Sized>(&self, cam: &ArrayPose, ue: &Point, map: &EnvironmentMap, t: f64, rng: &mut R) -> VisionDetection {
        if rng.random::<f64>() < self.loss_prob {
            return VisionDetection {
                t,
                targets: vec![],
                lost: true,
            };
        }
        let peds: Vec<Point> = map.interferers.iter().map(|i| i.position_at(t)).collect();
        let radii: Vec<f64> = map.interferers.iter().map(|i| i.radius).collect();
        let mut objects: Vec<(Point, Option<usize>)> = vec![(*ue, None)];
        objects.extend(peds.iter().enumerate().map(|(i, p)| (*p, Some(i))));
        let mut targets = Vec::new();
        for (pos, who) in objects {
            let d = (pos - cam.position).norm();
            let local = cam.to_local(bearing(&cam.position, &pos));
            if d > self.max_range || local.abs() > self.half_fov {
                continue;
            }
            let occluded = peds
                .iter()
                .zip(&radii)
                .enumerate()
                .any(|(j, (c, r))| Some(j) != who && (c - pos).norm() > *r && point_segment_distance(&cam.position, &pos, c) < *r);
            if occluded {
                continue;
            }
            let sigma = self.sigma_at(d, local);
            targets.push(VisionTarget {
                position: pos + Point::new(gauss(rng, sigma), gauss(rng, sigma)),
                sigma,
            });
        }
        VisionDetection {
            t,
            targets,
            lost: false,
        }
    }
}

/// Four-orientation bistatic sweep at a stop, reduced to bearing measurements.
pub(crate) struct RadioSensor<'a> {
    pub scanner: BistaticScanner<'a>,
    pub ue_codebook: &'a BeamCodebook,
    pub bs_codebook: &'a BeamCodebook,
    pub peaks: PeakConfig,
}

impl<'a> RadioSensor<'a> {
    pub fn new(
        model: &'a ChannelModel,
        bs_cb: &'a BeamCodebook,
        ue_cb: &'a BeamCodebook,
        num: &'a Numerology,
        link: LinkBudget,
    ) -> Result<Self> {
        Ok(Self {
            scanner: BistaticScanner::new(model, bs_cb, ue_cb, num, link)?,
            ue_codebook: ue_cb,
            bs_codebook: bs_cb,
            peaks: PeakConfig::default(),
        })
    }

    /// Returns the measurements and the time at which the sweep completes.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        scn: &CorridorScenario,
        pose: [f64; 3],
        t0: f64,
        rng: &mut R,
    ) -> Result<(Vec<BearingMeasurement>, f64)> {
        let all: Vec<usize> = (0..self.ue_codebook.len()).collect();
        let mut images = Vec::new();
        let mut t = t0;
        for o in &scn.orientations_deg {
            let o = o.to_radians();
            let ue = ArrayPose::new(pose[0], pose[1], pose[2] + o);
            let img = self.scanner.scan(&scn.bs, &|_| ue, &all, t, o, rng)?;
            t += img.elapsed_ms as f64 * 1e-3;
            images.push(img);
        }
        let pano = assemble_panorama(&images)?;
        let est = estimate_angles(&pano, scn.k_paths, self.ue_codebook, self.bs_codebook, &self.peaks)?;
        let meas = est
            .iter()
            .map(|e| BearingMeasurement {
                t,
                bearing: e.aoa,
                aod: Some(scn.bs.to_global(e.aod)),
                range: None,
                anchor_hint: None,
                rsrp: e.rsrp_dbm,
            })
            .collect();
        Ok((meas, t))
    }
}
