use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::world::{gauss, step, ImuSim, RadioSensor, Truth};
use super::{mapping_error, recover_surfaces, BearingMeasurement, CorridorScenario, ImuSample, Modalities, SlamConfig, SlamState};
use crate::error::{Error, Result};
use crate::geo_channel::ChannelModel;
use crate::geometry::{bearing, wrap_angle, Point, Segment};
use crate::nr_frame::Numerology;
use crate::phased_array::{build_codebook, UpaGeometry};
use crate::rng::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x_true: f64,
    pub y_true: f64,
    pub x_est: f64,
    pub y_est: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamMetrics {
    pub mean_localization_error: f64,
    pub final_localization_error: f64,
    pub mapping_error: f64,
    /// Mapping error after each stop's radio update (infinite until a surface exists).
    pub mapping_error_per_stop: Vec<f64>,
    /// Wall-clock seconds per filter iteration (0 where no clock is available).
    pub mean_iteration_s: f64,
}

impl SlamMetrics {
    /// First stop (1-based) from which the mapping error stays at or below
    /// `threshold`; `None` if it never settles.
    pub fn convergence_stop(&self, threshold: f64) -> Option<usize> {
        let v = &self.mapping_error_per_stop;
        let last_bad = v.iter().rposition(|e| !(*e <= threshold));
        match last_bad {
            None if !v.is_empty() => Some(1),
            None => None,
            Some(i) if i + 1 < v.len() => Some(i + 2),
            Some(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlamRun {
    pub modalities: Modalities,
    pub trajectory: Vec<TrajectoryRow>,
    pub surfaces: Vec<Segment>,
    pub metrics: SlamMetrics,
    pub final_state: SlamState,
}

impl SlamRun {
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("t,x_true,y_true,x_est,y_est,err\n");
        for r in &self.trajectory {
            s.push_str(&format!("{:.3},{:.6},{:.6},{:.6},{:.6},{:.6}\n", r.t, r.x_true, r.y_true, r.x_est, r.y_est, r.err));
        }
        s
    }

    pub fn surfaces_csv(&self) -> String {
        let mut s = String::from("x1,y1,x2,y2\n");
        for g in &self.surfaces {
            s.push_str(&format!("{:.6},{:.6},{:.6},{:.6}\n", g.a.x, g.a.y, g.b.x, g.b.y));
        }
        s
    }
}

struct Stopwatch {
    total: f64,
    count: usize,
}

impl Stopwatch {
    fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        #[cfg(not(target_arch = "wasm32"))]
        {
            let start = std::time::Instant::now();
            let out = f();
            self.total += start.elapsed().as_secs_f64();
            self.count += 1;
            out
        }
        #[cfg(target_arch = "wasm32")]
        {
            self.count += 1;
            f()
        }
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total / self.count as f64
        }
    }
}

/// Stop-and-scan SLAM over the scenario with the chosen sensors.
pub fn run_slam(scn: &CorridorScenario, modalities: Modalities, cfg: &SlamConfig, seed: u64) -> Result<SlamRun> {
    if modalities.is_empty() {
        return Err(Error::Empty("modality set"));
    }
    let tree = SeedTree::new(seed);
    let truth = Truth::generate(scn);
    let num = Numerology::default();
    let geom = UpaGeometry::default();
    let cb = build_codebook(&geom);
    let model = ChannelModel::new(scn.map.clone(), num.carrier_hz, tree.child("channel").root());
    let radio = RadioSensor::new(&model, &cb, &cb, &num, scn.link)?;
    let mut prior_rng = tree.stream("prior");
    let mut imu_rng = tree.stream("imu");
    let mut vision_rng = tree.stream("vision");
    let mut radio_rng = tree.stream("radio");

    let p0 = truth.poses[0];
    let s = scn.initial_sigma;
    let start = [
        p0[0] + gauss(&mut prior_rng, s[0]),
        p0[1] + gauss(&mut prior_rng, s[1]),
        wrap_angle(p0[2] + gauss(&mut prior_rng, s[2])),
    ];
    let mut state = SlamState::new(start, [s[0] * s[0], s[1] * s[1], s[2] * s[2]], scn.bs.position, *cfg);
    let mut imu = ImuSim::new(scn.imu, start[2], &mut imu_rng);

    let dwell_scan_end: Vec<Option<f64>> = {
        let mut v = vec![None; truth.duration() as usize + 1];
        for &(_, t) in &truth.arrivals {
            v[t as usize] = Some(f64::from(t));
        }
        v
    };
    let frames_per_s = if modalities.vision { scn.vision.rate_hz.round() as usize } else { 0 };
    let mut trajectory = Vec::with_capacity(truth.duration() as usize + 1);
    let mut per_stop = Vec::new();
    let mut watch = Stopwatch { total: 0.0, count: 0 };
    let truths = scn.true_surfaces();

    let record = |state: &SlamState, t: f64, out: &mut Vec<TrajectoryRow>| {
        let p = truth.pose_at(t);
        let e = state.position();
        out.push(TrajectoryRow {
            t,
            x_true: p[0],
            y_true: p[1],
            x_est: e.x,
            y_est: e.y,
            err: ((p[0] - e.x).powi(2) + (p[1] - e.y).powi(2)).sqrt(),
        });
    };

    for k in 0..truth.duration() {
        let t = f64::from(k);
        record(&state, t, &mut trajectory);
        let (v, w) = truth.controls[k as usize];
        let sample = imu.sample(t, v, w, &mut imu_rng);
        // events inside [k, k+1): radio sweep completion, camera frames
        let mut events: Vec<(f64, u8)> = (0..frames_per_s).map(|j| (t + j as f64 / frames_per_s as f64, 1u8)).collect();
        let mut pending_radio = None;
        if modalities.radio {
            if let Some(t_arrive) = dwell_scan_end[k as usize] {
                let (meas, t_done) = radio.measure(scn, truth.pose_at(t_arrive), t_arrive, &mut radio_rng)?;
                events.push((t_done, 0));
                pending_radio = Some((meas, t_done));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut now = t;
        let advance = |state: &mut SlamState, to: f64, now: &mut f64| -> Result<()> {
            if to > *now {
                predict(state, modalities, &sample, to - *now)?;
                *now = to;
            }
            Ok(())
        };
        for (te, kind) in events {
            if kind == 0 {
                // the sweep lasts 5.12 s; the UE is parked, so apply it at its end
                let (meas, t_done) = pending_radio.take().expect("radio event");
                let t_apply = t_done.min(t + 1.0 - 1e-9).max(now);
                advance(&mut state, t_apply, &mut now)?;
                let meas: Vec<BearingMeasurement> = meas;
                watch.time(|| state.update_radio(&meas))?;
                per_stop.push(mapping_error(&recover_surfaces(&state), &truths, 0.1));
                continue;
            }
            advance(&mut state, te, &mut now)?;
            let p = truth.pose_at(te);
            let det = scn.vision.observe(&scn.bs, &Point::new(p[0], p[1]), &scn.map, te, &mut vision_rng);
            watch.time(|| state.update_vision(&det))?;
        }
        advance(&mut state, t + 1.0, &mut now)?;
    }
    record(&state, f64::from(truth.duration()), &mut trajectory);
    let surfaces = recover_surfaces(&state);
    let mean_err = trajectory.iter().map(|r| r.err).sum::<f64>() / trajectory.len() as f64;
    let metrics = SlamMetrics {
        mean_localization_error: mean_err,
        final_localization_error: trajectory.last().map_or(0.0, |r| r.err),
        mapping_error: mapping_error(&surfaces, &truths, 0.1),
        mapping_error_per_stop: per_stop,
        mean_iteration_s: watch.mean(),
    };
    Ok(SlamRun {
        modalities,
        trajectory,
        surfaces,
        metrics,
        final_state: state,
    })
}

fn predict(state: &mut SlamState, m: Modalities, imu: &ImuSample, dt: f64) -> Result<()> {
    if m.imu {
        state.predict(imu, dt)
    } else {
        state.predict_static(dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeesSummary {
    pub runs: usize,
    pub dof: usize,
    pub mean_nees: f64,
    pub lower: f64,
    pub upper: f64,
}

impl NeesSummary {
    pub fn consistent(&self) -> bool {
        self.mean_nees >= self.lower && self.mean_nees <= self.upper
    }
}

/// Monte-Carlo filter consistency on a scene whose noise matches the filter's
/// model exactly: white IMU noise, Gaussian priors, AOA/AOD to the BS and one
/// virtual anchor. Returns the average final-state NEES with the two-sided
/// 95% chi-square band.
pub fn nees_experiment(runs: usize, steps: usize, seed: u64) -> Result<NeesSummary> {
    if runs == 0 {
        return Err(Error::Empty("Monte-Carlo runs"));
    }
    let cfg = SlamConfig {
        q_pos: 0.0,
        q_heading: 0.0,
        ..SlamConfig::default()
    };
    let tree = SeedTree::new(seed);
    let bs = Point::new(0.0, 0.0);
    let wall = Segment::from_coords(-50.0, 4.0, 50.0, 4.0);
    let va_true = wall.mirror(&bs);
    let p0 = [6.0, -1.0, 0.1];
    let pose_sigma = [0.3, 0.3, 3f64.to_radians()];
    let va_sigma = 0.5;
    let dim = 5;
    let mut total = 0.0;
    for run in 0..runs {
        let mut rng = tree.indexed("nees", run as u64);
        let start = [
            p0[0] + gauss(&mut rng, pose_sigma[0]),
            p0[1] + gauss(&mut rng, pose_sigma[1]),
            p0[2] + gauss(&mut rng, pose_sigma[2]),
        ];
        let mut st = SlamState::new(start, pose_sigma.map(|s| s * s), bs, cfg);
        let va0 = va_true + Point::new(gauss(&mut rng, va_sigma), gauss(&mut rng, va_sigma));
        st.add_anchor(va0, va_sigma * va_sigma);
        let mut truth = p0;
        for k in 0..steps {
            let (v, w) = (0.5, 0.03);
            truth = step(truth, v, w, 1.0);
            if truth[1] > wall.a.y - 0.5 {
                return Err(Error::Geometry(format!("{steps} steps carry the UE past the reflecting wall")));
            }
            let imu = ImuSample {
                t: k as f64,
                speed: v + gauss(&mut rng, cfg.sigma_speed),
                yaw_rate: w + gauss(&mut rng, cfg.sigma_yaw_rate),
                heading: 0.0,
            };
            st.predict(&imu, 1.0)?;
            let p = Point::new(truth[0], truth[1]);
            let r = super::reflection_point(&bs, &va_true, &p).expect("reflection exists");
            let meas = [
                BearingMeasurement {
                    t: k as f64,
                    bearing: wrap_angle(bearing(&p, &bs) - truth[2] + gauss(&mut rng, cfg.sigma_aoa)),
                    aod: Some(wrap_angle(bearing(&bs, &p) + gauss(&mut rng, cfg.sigma_aod))),
                    range: None,
                    anchor_hint: Some(0),
                    rsrp: 0.0,
                },
                BearingMeasurement {
                    t: k as f64,
                    bearing: wrap_angle(bearing(&p, &va_true) - truth[2] + gauss(&mut rng, cfg.sigma_aoa)),
                    aod: Some(wrap_angle(bearing(&bs, &r) + gauss(&mut rng, cfg.sigma_aod))),
                    range: None,
                    anchor_hint: Some(1),
                    rsrp: -10.0,
                },
            ];
            st.update_radio_with_gate(&meas, f64::INFINITY)?;
        }
        let err = DVector::from_row_slice(&[
            truth[0] - st.mean[0],
            truth[1] - st.mean[1],
            wrap_angle(truth[2] - st.mean[2]),
            va_true.x - st.mean[3],
            va_true.y - st.mean[4],
        ]);
        let inv = st.cov.clone().cholesky().ok_or_else(|| Error::Geometry("covariance lost definiteness".into()))?.inverse();
        total += (err.transpose() * inv * &err)[(0, 0)];
    }
    let n = runs as f64;
    let chi = ChiSquared::new((dim * runs) as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok(NeesSummary {
        runs,
        dof: dim,
        mean_nees: total / n,
        lower: chi.inverse_cdf(0.025) / n,
        upper: chi.inverse_cdf(0.975) / n,
    })
}

/// Drift of IMU-only dead reckoning: mean position error over a window
/// ending at each of `checkpoints` (seconds), averaged over `runs`.
pub fn imu_drift_profile(scn: &CorridorScenario, checkpoints: &[f64], runs: usize, seed: u64) -> Result<Vec<f64>> {
    let cfg = SlamConfig::default();
    let mut acc = vec![0.0; checkpoints.len()];
    for r in 0..runs {
        let run = run_slam(scn, Modalities { imu: true, ..Default::default() }, &cfg, seed.wrapping_add(r as u64))?;
        for (a, c) in acc.iter_mut().zip(checkpoints) {
            let e = run.trajectory.iter().filter(|row| row.t <= *c && row.t > c - 100.0).map(|row| row.err);
            let (s, n) = e.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            *a += if n > 0 { s / n as f64 } else { 0.0 };
        }
    }
    Ok(acc.into_iter().map(|a| a / runs as f64).collect())
}

