//! Beam management for a moving UE: periodic exhaustive sweeps of all 64 UE
//! beams against sweeps restricted to `M` beams around the directions
//! predicted from the UE pose and the surface map.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_channel::{builtin_map, ArrayPose, ChannelModel, EnvironmentMap, Interferer};
use crate::geometry::{bearing, Point, Segment};
use crate::nr_frame::{overhead_reduction, tracking_duration_ms, Numerology, N_BEAMS};
use crate::phased_array::{build_codebook, BeamCodebook, UpaGeometry};
use crate::rng::SeedTree;
use crate::sensing::{BistaticScanner, LinkBudget, RsrpImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMode {
    Exhaustive,
    SensingAided,
}

impl TrackingMode {
    pub fn label(self) -> &'static str {
        match self {
            TrackingMode::Exhaustive => "exhaustive",
            TrackingMode::SensingAided => "sensing_aided",
        }
    }
}

impl fmt::Display for TrackingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TrackingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(TrackingMode::Exhaustive),
            "sensing_aided" | "sensing-aided" | "aided" => Ok(TrackingMode::SensingAided),
            other => Err(Error::Config(format!("unknown tracking mode \"{other}\" (exhaustive | sensing_aided)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    /// UE beams searched per sweep in sensing-aided mode.
    pub m_beams: usize,
    pub ue_speed: f64,
    pub sim_duration_s: f64,
    pub step_ms: u32,
    /// Fixed outage threshold; `None` derives it from the run's best-pair RSRP.
    pub outage_threshold_dbm: Option<f64>,
    /// Derived threshold sits this far below the median best-pair RSRP.
    pub outage_margin_db: f64,
    /// Shortest outage run counted as an interruption.
    pub min_interruption_ms: u32,
    /// Serving pair counts as aligned within this many dB of the best pair.
    pub alignment_db: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            m_beams: 16,
            ue_speed: 4.0,
            sim_duration_s: 200.0,
            step_ms: 20,
            outage_threshold_dbm: None,
            outage_margin_db: 15.0,
            min_interruption_ms: 500,
            alignment_db: 3.0,
        }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        tracking_duration_ms(self.m_beams)?;
        if !(self.ue_speed >= 0.0 && self.ue_speed.is_finite()) {
            return Err(Error::OutOfRange(format!("UE speed {} m/s", self.ue_speed)));
        }
        if !(self.sim_duration_s > 0.0 && self.sim_duration_s.is_finite()) {
            return Err(Error::OutOfRange(format!("duration {} s", self.sim_duration_s)));
        }
        if self.step_ms == 0 {
            return Err(Error::OutOfRange("step must be at least 1 ms".into()));
        }
        Ok(())
    }

    /// UE beams swept per scan in `mode`.
    pub fn beams_for(&self, mode: TrackingMode) -> usize {
        match mode {
            TrackingMode::Exhaustive => N_BEAMS,
            TrackingMode::SensingAided => self.m_beams,
        }
    }

    pub fn scan_period_ms(&self, mode: TrackingMode) -> Result<u32> {
        tracking_duration_ms(self.beams_for(mode))
    }
}

/// Corridor with a BS at one end and a UE shuttling along a lane, its array
/// facing back toward the BS. Pedestrians walk between the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingScenario {
    pub map: EnvironmentMap,
    pub bs: ArrayPose,
    pub lane_y: f64,
    /// The UE runs back and forth between these x coordinates.
    pub lane_x: [f64; 2],
    pub ue_boresight: f64,
    pub n_pedestrians: usize,
    pub pedestrian_y: [f64; 2],
    pub pedestrian_x: [f64; 2],
    pub pedestrian_speed: [f64; 2],
    /// Position noise of each SLAM fix (per axis).
    pub pose_sigma: f64,
    pub speed_sigma: f64,
    pub boresight_sigma: f64,
    pub fix_period_s: f64,
    /// Beyond this predicted position std the candidate set falls back to all beams.
    pub trust_sigma: f64,
    pub link: LinkBudget,
}

impl TrackingScenario {
    pub fn nominal() -> Self {
        Self {
            map: builtin_map("tracking").expect("built-in map"),
            bs: ArrayPose::new(0.0, 0.0, 0.0),
            lane_y: 2.0,
            lane_x: [4.0, 50.0],
            ue_boresight: std::f64::consts::PI,
            n_pedestrians: 4,
            pedestrian_y: [0.3, 1.6],
            pedestrian_x: [3.0, 45.0],
            pedestrian_speed: [0.8, 1.5],
            pose_sigma: 0.25,
            speed_sigma: 0.05,
            boresight_sigma: 1f64.to_radians(),
            fix_period_s: 1.0,
            trust_sigma: 2.0,
            link: LinkBudget::default(),
        }
    }

    /// Same scene with the UE parked at `x` and nobody walking.
    pub fn static_los(x: f64) -> Self {
        let mut s = Self::nominal();
        s.map = EnvironmentMap::empty(s.map.bounds);
        s.lane_x = [x, x];
        s.n_pedestrians = 0;
        s
    }

    /// UE position at `t` for a ping-pong run at `speed`.
    pub fn ue_position(&self, speed: f64, t: f64) -> Point {
        let [a, b] = self.lane_x;
        let len = (b - a).abs();
        if len == 0.0 || speed == 0.0 {
            return Point::new(a, self.lane_y);
        }
        let s = (speed * t).rem_euclid(2.0 * len);
        let d = if s <= len { s } else { 2.0 * len - s };
        Point::new(a + d * (b - a).signum(), self.lane_y)
    }

    pub fn ue_velocity(&self, speed: f64, t: f64) -> Point {
        let [a, b] = self.lane_x;
        let len = (b - a).abs();
        if len == 0.0 || speed == 0.0 {
            return Point::new(0.0, 0.0);
        }
        let s = (speed * t).rem_euclid(2.0 * len);
        let dir = if s < len { 1.0 } else { -1.0 } * (b - a).signum();
        Point::new(speed * dir, 0.0)
    }

    pub fn ue_pose(&self, speed: f64, t: f64) -> ArrayPose {
        let p = self.ue_position(speed, t);
        ArrayPose::new(p.x, p.y, self.ue_boresight)
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        for x in self.lane_x {
            let p = Point::new(x, self.lane_y);
            if !self.map.contains(&p) {
                return Err(Error::Geometry(format!("UE lane point ({x}, {}) is outside the map", self.lane_y)));
            }
        }
        if !self.map.contains(&self.bs.position) {
            return Err(Error::Geometry("BS is outside the map".into()));
        }
        Ok(())
    }

    /// Seeded pedestrians pacing along the corridor between BS and lane.
    pub fn pedestrians(&self, tree: &SeedTree) -> Vec<Interferer> {
        let mut rng = tree.stream("pedestrians");
        let [xa, xb] = self.pedestrian_x;
        (0..self.n_pedestrians)
            .map(|_| {
                let y = rng.random_range(self.pedestrian_y[0]..=self.pedestrian_y[1]);
                let v = rng.random_range(self.pedestrian_speed[0]..=self.pedestrian_speed[1]);
                let leg = (xb - xa).abs() / v;
                let phase = rng.random_range(0.0..2.0 * leg);
                Interferer {
                    radius: 0.3,
                    waypoints: vec![[-phase, xa, y], [leg - phase, xb, y], [2.0 * leg - phase, xa, y]],
                    repeat: true,
                }
            })
            .collect()
    }

    pub fn surfaces(&self) -> Vec<Segment> {
        self.map.surfaces.iter().map(|s| s.segment).collect()
    }
}

/// Dead-reckoned UE pose handed to the beam predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub position: Point,
    pub boresight: f64,
    /// Position standard deviation (per axis).
    pub sigma: f64,
}

/// Directions (array-local) toward the BS and its mirror images that a UE at
/// `pose` would see, LOS first.
pub fn predicted_directions(pose: &PoseEstimate, bs: &Point, surfaces: &[Segment]) -> Vec<f64> {
    let arr = ArrayPose {
        position: pose.position,
        boresight: pose.boresight,
    };
    let mut out = vec![arr.to_local(bearing(&pose.position, bs))];
    for s in surfaces {
        let image = s.mirror(bs);
        if let Some((t, u)) = s.intersect_params(&pose.position, &image) {
            if (0.0..=1.0).contains(&u) && t > 0.0 && t < 1.0 {
                out.push(arr.to_local(bearing(&pose.position, &image)));
            }
        }
    }
    out
}

/// `m` UE beams nearest (in codebook order) to the beams pointing along the
/// predicted LOS and reflection directions, returned in ascending order. An
/// untrusted pose yields the full codebook.
pub fn predict_candidates(pose: &PoseEstimate, bs: &Point, surfaces: &[Segment], codebook: &BeamCodebook, m: usize, trust_sigma: f64) -> Result<Vec<usize>> {
    let n = codebook.len();
    if m == 0 || m > n {
        return Err(Error::OutOfRange(format!("M = {m} outside [1, {n}]")));
    }
    if !(pose.sigma <= trust_sigma) || m == n {
        return Ok((0..n).collect());
    }
    let mut seeds: Vec<usize> = Vec::new();
    for d in predicted_directions(pose, bs, surfaces) {
        let b = codebook.nearest_beam(d);
        if !seeds.contains(&b) {
            seeds.push(b);
        }
    }
    let mut ranked: Vec<(usize, usize, usize)> = (0..n)
        .map(|i| {
            let (rank, dist) = seeds
                .iter()
                .enumerate()
                .map(|(r, &s)| (r, i.abs_diff(s)))
                .min_by_key(|&(r, d)| (d, r))
                .expect("at least the LOS direction");
            (dist, rank, i)
        })
        .collect();
    ranked.sort_unstable();
    let mut out: Vec<usize> = ranked.into_iter().take(m).map(|(_, _, i)| i).collect();
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub t_ms: u64,
    /// `(UE beam, BS beam)`.
    pub serving: (usize, usize),
    pub serving_rsrp_dbm: f64,
    pub best: (usize, usize),
    pub best_rsrp_dbm: f64,
    pub aligned: bool,
    pub outage: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interruption {
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTimeline {
    pub mode: TrackingMode,
    pub m_beams: usize,
    pub scan_period_ms: u32,
    pub overhead_reduction: f64,
    pub threshold_dbm: f64,
    pub scans: usize,
    /// Rows and columns of every RSRP image measured in the run.
    pub scan_shape: (usize, usize),
    pub records: Vec<LinkRecord>,
    pub interruptions: Vec<Interruption>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: TrackingMode,
    pub m_beams: usize,
    pub interruptions: usize,
    pub interrupted_s: f64,
    pub mean_serving_rsrp_dbm: f64,
    pub alignment_fraction: f64,
}

impl LinkTimeline {
    pub fn total_interrupted_s(&self) -> f64 {
        self.interruptions.iter().map(|i| i.duration_s).sum()
    }

    pub fn alignment_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.aligned).count() as f64 / self.records.len() as f64
    }

    pub fn mean_serving_rsrp_dbm(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NEG_INFINITY;
        }
        self.records.iter().map(|r| r.serving_rsrp_dbm).sum::<f64>() / self.records.len() as f64
    }

    pub fn summary(&self) -> ModeSummary {
        ModeSummary {
            mode: self.mode,
            m_beams: self.m_beams,
            interruptions: self.interruptions.len(),
            interrupted_s: self.total_interrupted_s(),
            mean_serving_rsrp_dbm: self.mean_serving_rsrp_dbm(),
            alignment_fraction: self.alignment_fraction(),
        }
    }

    /// `t_ms,serving_ue_beam,serving_bs_beam,rsrp_dbm,outage`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_ms,serving_ue_beam,serving_bs_beam,rsrp_dbm,outage\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{:.6},{}\n",
                r.t_ms,
                r.serving.0,
                r.serving.1,
                r.serving_rsrp_dbm,
                u8::from(r.outage)
            ));
        }
        s
    }
}

fn argmax_pair(img: &RsrpImage) -> (usize, usize) {
    let (r, c) = img.argmax();
    (img.ue_beam_ids[r], img.bs_beam_ids[c])
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Maximal outage runs lasting at least `min_ms`.
fn interruptions(records: &[LinkRecord], step_ms: u32, min_ms: u32) -> Vec<Interruption> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let close = |s: usize, e: usize, out: &mut Vec<Interruption>| {
        let dur = (e - s) as u64 * u64::from(step_ms);
        if dur >= u64::from(min_ms) {
            out.push(Interruption {
                start_s: records[s].t_ms as f64 * 1e-3,
                duration_s: dur as f64 * 1e-3,
            });
        }
    };
    for (i, r) in records.iter().enumerate() {
        match (r.outage, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                close(s, i, &mut out);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        close(s, records.len(), &mut out);
    }
    out
}

/// Pose the predictor sees at `t`: the latest noisy SLAM fix, advanced with
/// the noisy IMU velocity.
fn estimate_pose(scn: &TrackingScenario, cfg: &TrackingConfig, tree: &SeedTree, t: f64) -> PoseEstimate {
    let period = scn.fix_period_s;
    let k = (t / period).floor().max(0.0);
    let t_fix = k * period;
    let mut rng = tree.indexed("fix", k as u64);
    let g = |rng: &mut crate::rng::SimRng, s: f64| s * rng.sample::<f64, _>(rand_distr::StandardNormal);
    let p = scn.ue_position(cfg.ue_speed, t_fix);
    let v = scn.ue_velocity(cfg.ue_speed, t_fix);
    let fix = Point::new(p.x + g(&mut rng, scn.pose_sigma), p.y + g(&mut rng, scn.pose_sigma));
    let speed = v.norm();
    let dir = if speed > 0.0 { v / speed } else { Point::new(0.0, 0.0) };
    let v_est = dir * (speed + g(&mut rng, scn.speed_sigma));
    let dt = t - t_fix;
    PoseEstimate {
        position: fix + v_est * dt,
        boresight: scn.ue_boresight + g(&mut rng, scn.boresight_sigma),
        sigma: (scn.pose_sigma.powi(2) + (scn.speed_sigma * dt).powi(2)).sqrt(),
    }
}

/// Step the UE along its lane, sweeping back to back and switching to each
/// sweep's strongest pair when it completes. The link keeps the previous
/// pair while a sweep is in progress.
pub fn run_tracking(cfg: &TrackingConfig, scn: &TrackingScenario, mode: TrackingMode, seed: u64) -> Result<LinkTimeline> {
    cfg.validate()?;
    scn.validate()?;
    let tree = SeedTree::new(seed);
    let mut map = scn.map.clone();
    map.interferers.extend(scn.pedestrians(&tree));
    let num = Numerology::default();
    let model = ChannelModel::new(map, num.carrier_hz, tree.child("channel").root());
    let cb = build_codebook(&UpaGeometry::default());
    let scanner = BistaticScanner::new(&model, &cb, &cb, &num, scn.link)?;
    let surfaces = scn.surfaces();
    let pose_at = |t: f64| scn.ue_pose(cfg.ue_speed, t);
    let all: Vec<usize> = (0..cb.len()).collect();
    let m = cfg.beams_for(mode);
    let period_ms = cfg.scan_period_ms(mode)?;

    let mut meas_rng = tree.stream("rsrp");
    let acquisition = scanner.scan(&scn.bs, &pose_at, &all, -(f64::from(tracking_duration_ms(N_BEAMS)?) * 1e-3), 0.0, &mut tree.stream("acquire"))?;
    let mut serving = argmax_pair(&acquisition);

    let steps = (cfg.sim_duration_s * 1000.0 / f64::from(cfg.step_ms)).round() as u64;
    let mut pending: Option<(u64, RsrpImage)> = None;
    let mut next_scan_ms = 0u64;
    let mut scans = 0;
    let mut scan_shape = (0, 0);
    let mut records = Vec::with_capacity(steps as usize);
    for k in 0..steps {
        let t_ms = k * u64::from(cfg.step_ms);
        let t = t_ms as f64 * 1e-3;
        if pending.as_ref().is_some_and(|(done, _)| *done <= t_ms) {
            let (_, img) = pending.take().expect("pending scan");
            serving = argmax_pair(&img);
        }
        if pending.is_none() && t_ms >= next_scan_ms {
            let candidates = match mode {
                TrackingMode::Exhaustive => all.clone(),
                TrackingMode::SensingAided => {
                    let mid = t + f64::from(period_ms) * 0.5e-3;
                    let est = estimate_pose(scn, cfg, &tree, mid);
                    predict_candidates(&est, &scn.bs.position, &surfaces, &cb, m, scn.trust_sigma)?
                }
            };
            let img = scanner.scan(&scn.bs, &pose_at, &candidates, t, 0.0, &mut meas_rng)?;
            scan_shape = (img.n_rows(), img.n_cols());
            scans += 1;
            let done = t_ms + img.elapsed_ms;
            next_scan_ms = done;
            pending = Some((done, img));
        }
        let ue = pose_at(t);
        let chan = model.trace_paths(&scn.bs.position, &ue.position, t)?;
        let e = scanner.pair_energies(&chan, &scn.bs, &ue, &all);
        let mut best = (0, 0);
        for (i, row) in e.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v > e[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        let serving_rsrp = scanner.rsrp_dbm(e[serving.0][serving.1]);
        let best_rsrp = scanner.rsrp_dbm(e[best.0][best.1]);
        records.push(LinkRecord {
            t_ms,
            serving,
            serving_rsrp_dbm: serving_rsrp,
            best,
            best_rsrp_dbm: best_rsrp,
            aligned: serving_rsrp >= best_rsrp - cfg.alignment_db,
            outage: false,
        });
    }
    let threshold = match cfg.outage_threshold_dbm {
        Some(t) => t,
        None => {
            let mut b: Vec<f64> = records.iter().map(|r| r.best_rsrp_dbm).collect();
            if b.is_empty() {
                f64::NEG_INFINITY
            } else {
                median(&mut b) - cfg.outage_margin_db
            }
        }
    };
    for r in &mut records {
        r.outage = r.serving_rsrp_dbm < threshold;
    }
    let interruptions = interruptions(&records, cfg.step_ms, cfg.min_interruption_ms);
    Ok(LinkTimeline {
        mode,
        m_beams: m,
        scan_period_ms: period_ms,
        overhead_reduction: overhead_reduction(m)?,
        threshold_dbm: threshold,
        scans,
        scan_shape,
        records,
        interruptions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub exhaustive: ModeSummary,
    pub aided: ModeSummary,
}

impl SeedComparison {
    /// Sensing-aided tracking had strictly fewer interruptions and strictly
    /// less interrupted time.
    pub fn aided_wins(&self) -> bool {
        self.aided.interruptions < self.exhaustive.interruptions && self.aided.interrupted_s < self.exhaustive.interrupted_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub rows: Vec<SeedComparison>,
}

impl ModeComparison {
    pub fn wins(&self) -> usize {
        self.rows.iter().filter(|r| r.aided_wins()).count()
    }

    /// Seeds where the aided mode was aligned more often.
    pub fn alignment_wins(&self) -> usize {
        self.rows.iter().filter(|r| r.aided.alignment_fraction > r.exhaustive.alignment_fraction).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,mode,m_beams,interruptions,interrupted_s,mean_rsrp_dbm,alignment\n");
        for r in &self.rows {
            for m in [&r.exhaustive, &r.aided] {
                s.push_str(&format!(
                    "{},{},{},{},{:.3},{:.6},{:.6}\n",
                    r.seed, m.mode, m.m_beams, m.interruptions, m.interrupted_s, m.mean_serving_rsrp_dbm, m.alignment_fraction
                ));
            }
        }
        s
    }
}

/// Run both modes on every seed.
pub fn compare_modes(cfg: &TrackingConfig, scn: &TrackingScenario, seeds: &[u64]) -> Result<ModeComparison> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let rows = seeds
        .iter()
        .map(|&seed| {
            Ok(SeedComparison {
                seed,
                exhaustive: run_tracking(cfg, scn, TrackingMode::Exhaustive, seed)?.summary(),
                aided: run_tracking(cfg, scn, TrackingMode::SensingAided, seed)?.summary(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeComparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nr_frame::Numerology;
    use crate::sensing::LinkBudget;

    fn codebook() -> BeamCodebook {
        build_codebook(&UpaGeometry::default())
    }

    /// Best UE beam by brute force over the noiseless pair energies.
    fn brute_force_best(scn: &TrackingScenario, ue: ArrayPose) -> usize {
        let cb = codebook();
        let num = Numerology::default();
        let model = ChannelModel::new(scn.map.clone(), num.carrier_hz, 0);
        let scanner = BistaticScanner::new(&model, &cb, &cb, &num, LinkBudget::default()).unwrap();
        let chan = model.trace_paths(&scn.bs.position, &ue.position, 0.0).unwrap();
        let all: Vec<usize> = (0..64).collect();
        let e = scanner.pair_energies(&chan, &scn.bs, &ue, &all);
        let mut best = (0, 0, f64::MIN);
        for (i, row) in e.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v > best.2 {
                    best = (i, j, *v);
                }
            }
        }
        best.0
    }

    #[test]
    fn exact_pose_single_beam_is_the_best_beam() {
        let cb = codebook();
        for (x, y) in [(6.0, 2.0), (12.0, -1.5), (25.0, 3.0), (9.0, 0.0)] {
            let mut scn = TrackingScenario::static_los(x);
            scn.lane_y = y;
            let ue = scn.ue_pose(0.0, 0.0);
            let est = PoseEstimate { position: ue.position, boresight: ue.boresight, sigma: 0.0 };
            let c = predict_candidates(&est, &scn.bs.position, &[], &cb, 1, 2.0).unwrap();
            assert_eq!(c, vec![brute_force_best(&scn, ue)], "UE at ({x}, {y})");
        }
    }

    #[test]
    fn candidate_set_has_m_distinct_beams() {
        let cb = codebook();
        let scn = TrackingScenario::nominal();
        let est = PoseEstimate { position: Point::new(10.0, 2.0), boresight: scn.ue_boresight, sigma: 0.25 };
        for m in [1, 4, 16, 33, 64] {
            let c = predict_candidates(&est, &scn.bs.position, &scn.surfaces(), &cb, m, 2.0).unwrap();
            assert_eq!(c.len(), m);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(predict_candidates(&est, &scn.bs.position, &[], &cb, 0, 2.0).is_err());
        assert!(predict_candidates(&est, &scn.bs.position, &[], &cb, 65, 2.0).is_err());
    }

    #[test]
    fn untrusted_pose_falls_back_to_full_sweep() {
        let cb = codebook();
        let est = PoseEstimate { position: Point::new(10.0, 2.0), boresight: std::f64::consts::PI, sigma: 5.0 };
        let c = predict_candidates(&est, &Point::new(0.0, 0.0), &[], &cb, 8, 2.0).unwrap();
        assert_eq!(c, (0..64).collect::<Vec<_>>());
    }

    /// 0.3 m of pose error at 10 m is at most 0.03 in sine space, a little
    /// over one beam step (0.0275); with rounding on both sides the true beam
    /// is within two indexes of the predicted one.
    #[test]
    fn small_pose_error_keeps_best_beam_in_set() {
        let cb = codebook();
        let step = cb.sine_step();
        assert!(0.03 / step + 1.0 < 2.5);
        for deg in [-40.0f64, -20.0, -5.0, 0.0, 10.0, 30.0] {
            let dir = std::f64::consts::PI + deg.to_radians();
            let bs = Point::new(0.0, 0.0);
            let ue = bs - crate::geometry::unit(dir) * 10.0;
            let mut scn = TrackingScenario::static_los(ue.x);
            scn.map = EnvironmentMap::empty([-20.0, -20.0, 20.0, 20.0]);
            scn.lane_y = ue.y;
            let truth = brute_force_best(&scn, scn.ue_pose(0.0, 0.0));
            for k in 0..8 {
                let off = crate::geometry::unit(k as f64 * std::f64::consts::FRAC_PI_4) * 0.3;
                let est = PoseEstimate { position: ue + off, boresight: scn.ue_boresight, sigma: 0.3 };
                for m in 4..=8 {
                    let c = predict_candidates(&est, &bs, &[], &cb, m, 2.0).unwrap();
                    assert!(c.contains(&truth), "{deg} deg, offset {k}, M={m}: {truth} not in {c:?}");
                }
            }
        }
    }

    #[test]
    fn reflections_add_predicted_directions() {
        let scn = TrackingScenario::nominal();
        let est = PoseEstimate { position: Point::new(10.0, 2.0), boresight: scn.ue_boresight, sigma: 0.0 };
        let d = predicted_directions(&est, &scn.bs.position, &scn.surfaces());
        assert_eq!(d.len(), 3);
        // mirror of the BS in the y = 4 wall is (0, 8)
        let expect = est.position;
        let a = ArrayPose { position: expect, boresight: est.boresight }.to_local(bearing(&expect, &Point::new(0.0, 8.0)));
        assert!((d[1] - a).abs() < 1e-12);
    }

    #[test]
    fn ping_pong_lane() {
        let scn = TrackingScenario::nominal();
        assert_eq!(scn.ue_position(4.0, 0.0), Point::new(4.0, 2.0));
        assert!((scn.ue_position(4.0, 11.5).x - 50.0).abs() < 1e-9);
        assert!((scn.ue_position(4.0, 12.5).x - 46.0).abs() < 1e-9);
        assert!(scn.ue_velocity(4.0, 12.5).x < 0.0);
        assert!((scn.ue_position(4.0, 23.0).x - 4.0).abs() < 1e-9);
    }

    #[test]
    fn lane_outside_map_is_rejected() {
        let mut scn = TrackingScenario::nominal();
        scn.lane_x = [4.0, 80.0];
        let cfg = TrackingConfig { sim_duration_s: 1.0, ..TrackingConfig::default() };
        assert!(run_tracking(&cfg, &scn, TrackingMode::Exhaustive, 0).is_err());
    }

    #[test]
    fn interruptions_are_maximal_runs() {
        let rec = |t_ms, outage| LinkRecord {
            t_ms,
            serving: (0, 0),
            serving_rsrp_dbm: 0.0,
            best: (0, 0),
            best_rsrp_dbm: 0.0,
            aligned: true,
            outage,
        };
        let pattern = [0, 1, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1, 1];
        let r: Vec<LinkRecord> = pattern.iter().enumerate().map(|(i, &o)| rec(i as u64 * 100, o == 1)).collect();
        let got = interruptions(&r, 100, 300);
        assert_eq!(got.len(), 2);
        assert!((got[0].start_s - 0.1).abs() < 1e-12 && (got[0].duration_s - 0.3).abs() < 1e-12);
        assert!((got[1].start_s - 0.8).abs() < 1e-12 && (got[1].duration_s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("exhaustive".parse::<TrackingMode>().unwrap(), TrackingMode::Exhaustive);
        assert_eq!("sensing-aided".parse::<TrackingMode>().unwrap(), TrackingMode::SensingAided);
        assert!("lucky".parse::<TrackingMode>().is_err());
    }
}
