//! Cooperative sensing: UEs image their surroundings, send local-frame
//! reports to the BS, and the BS fuses them into one map.

use std::sync::mpsc::{channel, Receiver, Sender};

use nalgebra::{Matrix2, Matrix3, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_channel::{builtin_map, ArrayPose, ChannelModel, EnvironmentMap};
use crate::geometry::{wrap_angle, Point, Segment};
use crate::nr_frame::{CapacityLimits, Numerology};
use crate::phased_array::{build_codebook, UpaGeometry};
use crate::rng::SeedTree;
use crate::sensing::{filter_self_interference, MonostaticConfig, MonostaticScanner};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.heading.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn apply(&self, p: &Point) -> Point {
        self.rotation() * p + Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportPoint {
    pub position: Point,
    pub covariance: Matrix2<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSurface {
    pub segment: Segment,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingReport {
    pub ue_id: u32,
    pub frame: Frame,
    pub pose: Option<Pose2>,
    pub pose_cov: Matrix3<f64>,
    pub points: Vec<ReportPoint>,
    pub surfaces: Vec<ReportSurface>,
}

impl SensingReport {
    pub fn validate(&self) -> Result<()> {
        let sym = (self.pose_cov - self.pose_cov.transpose()).abs().max();
        let eig = self.pose_cov.symmetric_eigenvalues();
        if sym > 1e-9 || eig.iter().any(|&e| e < -1e-12) {
            return Err(Error::Wire(format!("UE {}: pose covariance is not PSD", self.ue_id)));
        }
        Ok(())
    }
}

/// Map a local-frame report into the global frame through its pose. Point
/// covariances pick up the pose uncertainty through the transform Jacobian.
pub fn transform_report(r: &SensingReport) -> Result<SensingReport> {
    if r.frame == Frame::Global {
        return Ok(r.clone());
    }
    let pose = r.pose.ok_or_else(|| Error::Config(format!("UE {} reported no pose", r.ue_id)))?;
    r.validate()?;
    let rot = pose.rotation();
    let (s, c) = pose.heading.sin_cos();
    let points = r
        .points
        .iter()
        .map(|p| {
            let l = p.position;
            let mut j = nalgebra::Matrix2x3::zeros();
            j[(0, 0)] = 1.0;
            j[(1, 1)] = 1.0;
            j[(0, 2)] = -s * l.x - c * l.y;
            j[(1, 2)] = c * l.x - s * l.y;
            ReportPoint {
                position: pose.apply(&l),
                covariance: rot * p.covariance * rot.transpose() + j * r.pose_cov * j.transpose(),
                confidence: p.confidence,
            }
        })
        .collect();
    let surfaces = r
        .surfaces
        .iter()
        .map(|s| ReportSurface {
            segment: Segment::new(pose.apply(&s.segment.a), pose.apply(&s.segment.b)),
            confidence: s.confidence,
        })
        .collect();
    Ok(SensingReport {
        ue_id: r.ue_id,
        frame: Frame::Global,
        pose: Some(pose),
        pose_cov: r.pose_cov,
        points,
        surfaces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub gate_m: f64,
    /// Segments closer than this in direction may merge.
    pub merge_angle_rad: f64,
    pub limits: CapacityLimits,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            gate_m: 0.5,
            merge_angle_rad: 10f64.to_radians(),
            limits: CapacityLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPoint {
    pub position: Point,
    pub weight: f64,
    /// `(ue_id, index into that report's points)`.
    pub sources: Vec<(u32, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSegment {
    pub segment: Segment,
    pub weight: f64,
    pub sources: Vec<(u32, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedMap {
    pub points: Vec<FusedPoint>,
    pub segments: Vec<FusedSegment>,
}

impl FusedMap {
    fn distance(&self, p: &Point) -> f64 {
        let dp = self.points.iter().map(|q| (q.position - p).norm());
        let ds = self.segments.iter().map(|s| s.segment.distance_to(p));
        dp.chain(ds).fold(f64::INFINITY, f64::min)
    }

    /// Fraction of points sampled every `step` along the true surfaces that
    /// lie within `tol` of a fused point or segment.
    pub fn coverage(&self, truth: &[Segment], step: f64, tol: f64) -> f64 {
        let samples: Vec<Point> = truth.iter().flat_map(|s| s.sample(step)).collect();
        if samples.is_empty() {
            return 0.0;
        }
        samples.iter().filter(|p| self.distance(p) <= tol).count() as f64 / samples.len() as f64
    }

    pub fn points_csv(&self) -> String {
        let mut s = String::from("x,y,weight,n_sources\n");
        for p in &self.points {
            s.push_str(&format!("{:.6},{:.6},{:.6},{}\n", p.position.x, p.position.y, p.weight, p.sources.len()));
        }
        s
    }

    pub fn segments_csv(&self) -> String {
        let mut s = String::from("x1,y1,x2,y2,weight\n");
        for g in &self.segments {
            let (a, b) = (g.segment.a, g.segment.b);
            s.push_str(&format!("{:.6},{:.6},{:.6},{:.6},{:.6}\n", a.x, a.y, b.x, b.y, g.weight));
        }
        s
    }
}

/// Two segments lie on nearly the same line and overlap (or nearly touch).
fn mergeable(a: &Segment, b: &Segment, gate: f64, max_angle: f64) -> bool {
    let (da, db) = (a.direction(), b.direction());
    let cos = da.dot(&db).abs().min(1.0);
    if cos.acos() > max_angle {
        return false;
    }
    let line_dist = |s: &Segment, p: &Point| crate::geometry::cross(&s.direction(), &(p - s.a)).abs();
    if [b.a, b.b].iter().any(|p| line_dist(a, p) > gate) || [a.a, a.b].iter().any(|p| line_dist(b, p) > gate) {
        return false;
    }
    let (s0, s1) = {
        let t = |p: &Point| da.dot(&(p - a.a));
        let (x, y) = (t(&b.a), t(&b.b));
        (x.min(y), x.max(y))
    };
    s0 <= a.length() + gate && s1 >= -gate
}

fn merge_pair(a: &FusedSegment, b: &FusedSegment) -> FusedSegment {
    let w = a.weight + b.weight;
    let da = a.segment.direction();
    let mut db = b.segment.direction();
    if da.dot(&db) < 0.0 {
        db = -db;
    }
    let dir = (da * a.weight + db * b.weight).normalize();
    let mid = (a.segment.midpoint() * a.weight + b.segment.midpoint() * b.weight) / w;
    let ts = [a.segment.a, a.segment.b, b.segment.a, b.segment.b].map(|p| dir.dot(&(p - mid)));
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sources = a.sources.clone();
    sources.extend(&b.sources);
    FusedSegment {
        segment: Segment::new(mid + dir * lo, mid + dir * hi),
        weight: w,
        sources,
    }
}

/// Fuse reports at the BS: gated confidence-weighted point averaging and
/// merging of overlapping collinear segments. Reports are processed in
/// `ue_id` order, so the result does not depend on arrival order.
pub fn fuse(reports: &[SensingReport], cfg: &FusionConfig) -> Result<FusedMap> {
    if reports.is_empty() {
        return Err(Error::Empty("sensing reports"));
    }
    cfg.limits.check_uplink(reports.len())?;
    let mut global = reports.iter().map(transform_report).collect::<Result<Vec<_>>>()?;
    global.sort_by_key(|r| r.ue_id);
    if let Some(w) = global.windows(2).find(|w| w[0].ue_id == w[1].ue_id) {
        return Err(Error::Wire(format!("duplicate report from UE {}", w[0].ue_id)));
    }

    let mut points: Vec<FusedPoint> = Vec::new();
    for r in &global {
        for (i, p) in r.points.iter().enumerate() {
            let w = p.confidence.max(0.0);
            let near = points
                .iter()
                .enumerate()
                .map(|(k, f)| (k, (f.position - p.position).norm()))
                .filter(|(_, d)| *d <= cfg.gate_m)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match near {
                Some((k, _)) if points[k].weight + w > 0.0 => {
                    let f = &mut points[k];
                    let total = f.weight + w;
                    f.position = (f.position * f.weight + p.position * w) / total;
                    f.weight = total;
                    f.sources.push((r.ue_id, i));
                }
                _ => points.push(FusedPoint {
                    position: p.position,
                    weight: w,
                    sources: vec![(r.ue_id, i)],
                }),
            }
        }
    }

    let mut segments: Vec<FusedSegment> = global
        .iter()
        .flat_map(|r| {
            r.surfaces.iter().enumerate().map(|(i, s)| FusedSegment {
                segment: s.segment,
                weight: s.confidence.max(1e-12),
                sources: vec![(r.ue_id, i)],
            })
        })
        .collect();
    'outer: loop {
        for i in 0..segments.len() {
            for j in i + 1..segments.len() {
                if mergeable(&segments[i].segment, &segments[j].segment, cfg.gate_m, cfg.merge_angle_rad) {
                    let b = segments.remove(j);
                    segments[i] = merge_pair(&segments[i], &b);
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(FusedMap { points, segments })
}

/// Split points into chains whose neighbours are within `gap`, then fit a
/// segment to every chain of at least `min_points` that is straight enough.
pub fn fit_segments(points: &[Point], gap: f64, min_points: usize, max_rms: f64) -> Vec<(Segment, Vec<usize>)> {
    let n = points.len();
    let mut label = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut stack = vec![s];
        let mut members = Vec::new();
        label[s] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if label[j] == usize::MAX && (points[i] - points[j]).norm() <= gap {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let mut out = Vec::new();
    for c in clusters {
        if c.len() < min_points {
            continue;
        }
        let k = c.len() as f64;
        let mean = c.iter().fold(Point::new(0.0, 0.0), |acc, &i| acc + points[i]) / k;
        let mut cov = Matrix2::zeros();
        for &i in &c {
            let d = points[i] - mean;
            cov += d * d.transpose();
        }
        cov /= k;
        let eig = cov.symmetric_eigen();
        let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        if eig.eigenvalues[minor].max(0.0).sqrt() > max_rms {
            continue;
        }
        let dir: Point = eig.eigenvectors.column(major).into_owned();
        let ts: Vec<f64> = c.iter().map(|&i| dir.dot(&(points[i] - mean))).collect();
        let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push((Segment::new(mean + dir * lo, mean + dir * hi), c));
    }
    out
}

/// `u32` little-endian byte length, then the report as JSON.
pub fn encode_report(r: &SensingReport) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(r)?;
    let len = u32::try_from(body.len()).map_err(|_| Error::Wire("report larger than 4 GiB".into()))?;
    let mut out = len.to_le_bytes().to_vec();
    out.extend(body);
    Ok(out)
}

/// Decode a concatenation of length-prefixed records.
pub fn decode_reports(mut bytes: &[u8]) -> Result<Vec<SensingReport>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(Error::Wire(format!("{} trailing bytes, expected a 4-byte length", bytes.len())));
        }
        let len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        let rest = &bytes[4..];
        if rest.len() < len {
            return Err(Error::Wire(format!("record claims {len} bytes, {} remain", rest.len())));
        }
        out.push(serde_json::from_slice(&rest[..len])?);
        bytes = &rest[len..];
    }
    Ok(out)
}

/// In-process uplink: any number of senders, one collector at the BS.
pub struct ReportBus {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

#[derive(Clone)]
pub struct ReportSender {
    tx: Sender<Vec<u8>>,
}

impl ReportSender {
    pub fn send(&self, r: &SensingReport) -> Result<()> {
        let frame = encode_report(r)?;
        self.tx.send(frame).map_err(|_| Error::Wire("collector hung up".into()))
    }
}

impl Default for ReportBus {
    fn default() -> Self {
        let (tx, rx) = channel();
        Self { tx, rx }
    }
}

impl ReportBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sender(&self) -> ReportSender {
        ReportSender { tx: self.tx.clone() }
    }

    /// Snapshot of everything received so far, as one byte stream.
    pub fn drain_bytes(&self) -> Vec<u8> {
        self.rx.try_iter().flatten().collect()
    }

    /// Snapshot of everything received so far, ordered by `ue_id`.
    pub fn drain(&self) -> Result<Vec<SensingReport>> {
        let mut v = decode_reports(&self.drain_bytes())?;
        v.sort_by_key(|r| r.ue_id);
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UePlacement {
    pub id: u32,
    pub pose: ArrayPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetsenseScenario {
    pub map: EnvironmentMap,
    pub ues: Vec<UePlacement>,
    /// SLAM pose error per axis, metres.
    pub pose_sigma: f64,
    pub heading_sigma: f64,
    pub monostatic: MonostaticConfig,
    pub fusion: FusionConfig,
    /// Range error assumed per point, metres.
    pub range_sigma: f64,
    /// Points weaker than this fraction of the report's strongest echo are
    /// not reported.
    pub min_confidence: f64,
    pub coverage_tol: f64,
}

impl NetsenseScenario {
    /// Two UEs back to back, each facing one of two parallel walls.
    pub fn nominal() -> Self {
        Self {
            map: builtin_map("netsense").expect("built-in map"),
            ues: vec![
                UePlacement { id: 1, pose: ArrayPose::new(3.0, 0.5, 0.0) },
                UePlacement { id: 2, pose: ArrayPose::new(-3.0, -0.5, std::f64::consts::PI) },
            ],
            pose_sigma: 0.1,
            heading_sigma: 1f64.to_radians(),
            monostatic: MonostaticConfig::default(),
            fusion: FusionConfig::default(),
            range_sigma: 0.15,
            min_confidence: 1e-7,
            coverage_tol: 0.5,
        }
    }

    pub fn truth(&self) -> Vec<Segment> {
        self.map.surfaces.iter().map(|s| s.segment).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetsenseRun {
    pub reports: Vec<SensingReport>,
    /// Coverage of each report alone, in report order.
    pub individual_coverage: Vec<f64>,
    pub fused: FusedMap,
    pub fused_coverage: f64,
}

/// One UE's monostatic sweep turned into a local-frame report.
pub fn sense_report<R: Rng + ?Sized>(scn: &NetsenseScenario, scanner: &MonostaticScanner, ue: &UePlacement, t: f64, rng: &mut R) -> Result<SensingReport> {
    let img = scanner.scan(&ue.pose, t, rng);
    let cal = scanner.calibration(&ue.pose);
    let img = filter_self_interference(&img, &cal, scn.monostatic.min_range_m)?;
    let cloud = img.point_cloud(scn.monostatic.peak_threshold_db);
    let peak = cloud.iter().map(|c| c.power_db).fold(f64::NEG_INFINITY, f64::max);
    let beam_sigma = scanner.codebook.sine_step();
    let points: Vec<ReportPoint> = cloud
        .iter()
        .map(|c| {
            let local = wrap_angle(c.az - ue.pose.boresight);
            let dir = crate::geometry::unit(local);
            let normal = Point::new(-dir.y, dir.x);
            let cross_var = (c.range * beam_sigma).powi(2);
            let cov = dir * dir.transpose() * scn.range_sigma.powi(2) + normal * normal.transpose() * cross_var;
            ReportPoint {
                position: dir * c.range,
                covariance: cov,
                confidence: 10f64.powf((c.power_db - peak) / 10.0),
            }
        })
        .filter(|p| p.confidence >= scn.min_confidence)
        .collect();
    let locs: Vec<Point> = points.iter().map(|p| p.position).collect();
    let surfaces = fit_segments(&locs, 1.0, 4, 0.2)
        .into_iter()
        .map(|(segment, members)| ReportSurface {
            segment,
            confidence: members.iter().map(|&i| points[i].confidence).sum(),
        })
        .collect();
    let g = |rng: &mut R, s: f64| s * rng.sample::<f64, _>(rand_distr::StandardNormal);
    let pose = Pose2::new(
        ue.pose.position.x + g(rng, scn.pose_sigma),
        ue.pose.position.y + g(rng, scn.pose_sigma),
        ue.pose.boresight + g(rng, scn.heading_sigma),
    );
    let pose_cov = Matrix3::from_diagonal(&nalgebra::Vector3::new(scn.pose_sigma.powi(2), scn.pose_sigma.powi(2), scn.heading_sigma.powi(2)));
    Ok(SensingReport {
        ue_id: ue.id,
        frame: Frame::Local,
        pose: Some(pose),
        pose_cov,
        points,
        surfaces,
    })
}

/// Every UE senses, reports over the bus, and the BS fuses the snapshot.
pub fn run_netsense(scn: &NetsenseScenario, seed: u64) -> Result<NetsenseRun> {
    scn.fusion.limits.check_uplink(scn.ues.len())?;
    let tree = SeedTree::new(seed);
    let num = Numerology::default();
    let cb = build_codebook(&UpaGeometry::default());
    let model = ChannelModel::new(scn.map.clone(), num.carrier_hz, tree.child("channel").root());
    let scanner = MonostaticScanner::new(&model, &cb, &num, scn.monostatic);
    let bus = ReportBus::new();
    for ue in &scn.ues {
        let mut rng = tree.indexed("ue", u64::from(ue.id));
        let r = sense_report(scn, &scanner, ue, 0.0, &mut rng)?;
        bus.sender().send(&r)?;
    }
    let reports = bus.drain()?;
    let truth = scn.truth();
    let step = 0.1;
    let individual_coverage = reports
        .iter()
        .map(|r| Ok(fuse(std::slice::from_ref(r), &scn.fusion)?.coverage(&truth, step, scn.coverage_tol)))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse(&reports, &scn.fusion)?;
    let fused_coverage = fused.coverage(&truth, step, scn.coverage_tol);
    Ok(NetsenseRun {
        reports,
        individual_coverage,
        fused,
        fused_coverage,
    })
}
