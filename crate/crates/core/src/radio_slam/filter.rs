use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{AnchorKind, BearingMeasurement, ImuSample, SlamConfig, VisionDetection};
use crate::error::{Error, Result};
use crate::geometry::{bearing, wrap_angle, Point};

const POSE: usize = 3;

/// Bookkeeping for a virtual anchor beyond its state entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorTrack {
    /// Estimated UE positions at the stops where this anchor was observed.
    pub observed_from: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub position: Point,
    pub covariance: Matrix2<f64>,
    pub kind: AnchorKind,
}

/// Unconfirmed virtual anchor seen at a single stop.
#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    position: Point,
    stop: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RadioUpdateReport {
    pub associated: usize,
    pub spawned: usize,
}

/// EKF-SLAM state: `[x, y, heading, v1x, v1y, ...]`. The BS anchor is known
/// and not part of the state.
#[derive(Debug, Clone)]
pub struct SlamState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub bs: Point,
    pub tracks: Vec<AnchorTrack>,
    pub time: f64,
    pub cfg: SlamConfig,
    last_imu_t: Option<f64>,
    candidates: Vec<Candidate>,
    stops: usize,
    vision_lost: bool,
}

impl SlamState {
    pub fn new(pose: [f64; 3], pose_cov: [f64; 3], bs: Point, cfg: SlamConfig) -> Self {
        Self {
            mean: DVector::from_row_slice(&pose),
            cov: DMatrix::from_diagonal(&DVector::from_row_slice(&pose_cov)),
            bs,
            tracks: Vec::new(),
            time: 0.0,
            cfg,
            last_imu_t: None,
            candidates: Vec::new(),
            stops: 0,
            vision_lost: false,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.mean[0], self.mean[1])
    }

    pub fn heading(&self) -> f64 {
        self.mean[2]
    }

    pub fn pose_cov(&self) -> DMatrix<f64> {
        self.cov.view((0, 0), (POSE, POSE)).into_owned()
    }

    pub fn n_virtual(&self) -> usize {
        (self.mean.len() - POSE) / 2
    }

    pub fn virtual_anchor(&self, i: usize) -> Point {
        Point::new(self.mean[POSE + 2 * i], self.mean[POSE + 2 * i + 1])
    }

    pub fn virtual_cov(&self, i: usize) -> Matrix2<f64> {
        let k = POSE + 2 * i;
        Matrix2::new(self.cov[(k, k)], self.cov[(k, k + 1)], self.cov[(k + 1, k)], self.cov[(k + 1, k + 1)])
    }

    /// BS first (zero covariance), then the virtual anchors.
    pub fn anchors(&self) -> Vec<Anchor> {
        let mut out = vec![Anchor {
            position: self.bs,
            covariance: Matrix2::zeros(),
            kind: AnchorKind::Bs,
        }];
        out.extend((0..self.n_virtual()).map(|i| Anchor {
            position: self.virtual_anchor(i),
            covariance: self.virtual_cov(i),
            kind: AnchorKind::Virtual,
        }));
        out
    }

    /// Add a virtual anchor with an isotropic prior independent of the pose.
    pub fn add_anchor(&mut self, position: Point, variance: f64) {
        let n = self.mean.len();
        let mut mean = DVector::zeros(n + 2);
        mean.rows_mut(0, n).copy_from(&self.mean);
        mean[n] = position.x;
        mean[n + 1] = position.y;
        let mut cov = DMatrix::zeros(n + 2, n + 2);
        cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        cov[(n, n)] = variance;
        cov[(n + 1, n + 1)] = variance;
        self.mean = mean;
        self.cov = cov;
        self.tracks.push(AnchorTrack { observed_from: vec![] });
    }

    /// Dead-reckon over `dt` seconds with the IMU's speed and yaw rate.
    pub fn predict(&mut self, imu: &ImuSample, dt: f64) -> Result<()> {
        if let Some(prev) = self.last_imu_t {
            if imu.t < prev {
                return Err(Error::NonMonotonic { prev, next: imu.t });
            }
        }
        self.last_imu_t = Some(imu.t);
        self.propagate(imu.speed, imu.yaw_rate, dt, false)
    }

    /// Prediction with no odometry: the pose is a random walk.
    pub fn predict_static(&mut self, dt: f64) -> Result<()> {
        self.propagate(0.0, 0.0, dt, true)
    }

    fn propagate(&mut self, v: f64, w: f64, dt: f64, blind: bool) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::OutOfRange(format!("prediction step dt = {dt} must be > 0")));
        }
        let h = self.mean[2];
        let (s, c) = h.sin_cos();
        self.mean[0] += v * dt * c;
        self.mean[1] += v * dt * s;
        self.mean[2] = wrap_angle(h + w * dt);
        let n = self.mean.len();
        let mut f = DMatrix::<f64>::identity(POSE, POSE);
        f[(0, 2)] = -v * dt * s;
        f[(1, 2)] = v * dt * c;
        let cfg = &self.cfg;
        let (sv, sw, qp, qh) = if blind {
            (0.0, 0.0, cfg.blind_q_pos, cfg.blind_q_heading)
        } else {
            (cfg.sigma_speed, cfg.sigma_yaw_rate, cfg.q_pos, cfg.q_heading)
        };
        let g = DMatrix::from_row_slice(3, 2, &[dt * c, 0.0, dt * s, 0.0, 0.0, dt]);
        let m = DMatrix::from_diagonal(&DVector::from_row_slice(&[sv * sv, sw * sw]));
        let mut q = &g * m * g.transpose();
        q[(0, 0)] += qp * dt;
        q[(1, 1)] += qp * dt;
        q[(2, 2)] += qh * dt;
        let ppp = self.cov.view((0, 0), (POSE, POSE)).into_owned();
        let new_pp = &f * ppp * f.transpose() + q;
        self.cov.view_mut((0, 0), (POSE, POSE)).copy_from(&new_pp);
        if n > POSE {
            let ppa = self.cov.view((0, POSE), (POSE, n - POSE)).into_owned();
            let new_pa = &f * ppa;
            self.cov.view_mut((0, POSE), (POSE, n - POSE)).copy_from(&new_pa);
            self.cov.view_mut((POSE, 0), (n - POSE, POSE)).copy_from(&new_pa.transpose());
        }
        self.time += dt;
        self.symmetrize();
        Ok(())
    }

    fn symmetrize(&mut self) {
        let t = self.cov.transpose();
        self.cov = (&self.cov + t) * 0.5;
    }

    /// Scale the position rows and columns so the position block grows by `factor`.
    pub fn inflate_position(&mut self, factor: f64) {
        let s = factor.sqrt();
        for i in 0..2 {
            for j in 0..self.cov.ncols() {
                self.cov[(i, j)] *= s;
            }
            for j in 0..self.cov.nrows() {
                self.cov[(j, i)] *= s;
            }
        }
    }

    /// Standard EKF correction with Joseph-form covariance. Entries of the
    /// innovation flagged in `angular` are wrapped to (-pi, pi].
    fn correct(&mut self, innov: DVector<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
        let s = h * &self.cov * h.transpose() + r;
        let s_inv = s
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Geometry("innovation covariance not positive definite".into()))?
            .inverse();
        let k = &self.cov * h.transpose() * s_inv;
        self.mean += &k * innov;
        self.mean[2] = wrap_angle(self.mean[2]);
        let n = self.mean.len();
        let i_kh = DMatrix::<f64>::identity(n, n) - &k * h;
        self.cov = &i_kh * &self.cov * i_kh.transpose() + &k * r * k.transpose();
        self.symmetrize();
        Ok(())
    }

    fn mahalanobis(&self, innov: &DVector<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
        let s = h * &self.cov * h.transpose() + r;
        match s.cholesky() {
            Some(ch) => (innov.transpose() * ch.inverse() * innov)[(0, 0)],
            None => f64::INFINITY,
        }
    }

    /// Predicted (AOA in the UE frame, global AOD) toward anchor `a`
    /// (`None` = BS) for a state vector `x`.
    fn predict_angles(&self, x: &DVector<f64>, a: Option<usize>) -> Vector2<f64> {
        let p = Point::new(x[0], x[1]);
        let h = x[2];
        match a {
            None => Vector2::new(wrap_angle(bearing(&p, &self.bs) - h), bearing(&self.bs, &p)),
            Some(i) => {
                let v = Point::new(x[POSE + 2 * i], x[POSE + 2 * i + 1]);
                let r = reflection_point(&self.bs, &v, &p).unwrap_or((self.bs + v) * 0.5);
                Vector2::new(wrap_angle(bearing(&p, &v) - h), bearing(&self.bs, &r))
            }
        }
    }

    /// Numerical Jacobian of `predict_angles` with respect to the full state.
    fn angle_jacobian(&self, a: Option<usize>) -> DMatrix<f64> {
        let n = self.mean.len();
        let mut jac = DMatrix::zeros(2, n);
        let mut cols = vec![0, 1, 2];
        if let Some(i) = a {
            cols.extend([POSE + 2 * i, POSE + 2 * i + 1]);
        }
        let eps = 1e-6;
        for c in cols {
            let mut xp = self.mean.clone();
            let mut xm = self.mean.clone();
            xp[c] += eps;
            xm[c] -= eps;
            let d = self.predict_angles(&xp, a) - self.predict_angles(&xm, a);
            jac[(0, c)] = wrap_angle(d[0]) / (2.0 * eps);
            jac[(1, c)] = wrap_angle(d[1]) / (2.0 * eps);
        }
        jac
    }

    fn bearing_noise(&self, m: &BearingMeasurement) -> DMatrix<f64> {
        let sa = self.cfg.sigma_aoa;
        let sd = if m.aod.is_some() { self.cfg.sigma_aod } else { 1.0 };
        DMatrix::from_diagonal(&DVector::from_row_slice(&[sa * sa, sd * sd]))
    }

    /// Innovation, Jacobian and noise for measurement `m` against anchor `a`,
    /// dropping the AOD row when the measurement has none.
    fn bearing_model(&self, m: &BearingMeasurement, a: Option<usize>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let pred = self.predict_angles(&self.mean, a);
        let jac = self.angle_jacobian(a);
        let r = self.bearing_noise(m);
        match m.aod {
            Some(aod) => (
                DVector::from_row_slice(&[wrap_angle(m.bearing - pred[0]), wrap_angle(aod - pred[1])]),
                jac,
                r,
            ),
            None => (
                DVector::from_row_slice(&[wrap_angle(m.bearing - pred[0])]),
                jac.rows(0, 1).into_owned(),
                r.view((0, 0), (1, 1)).into_owned(),
            ),
        }
    }

    /// Associate each bearing to the BS or a virtual anchor by gated nearest
    /// neighbour, update sequentially, and spawn anchors from bearings that
    /// stay unexplained over consecutive stops.
    pub fn update_radio(&mut self, meas: &[BearingMeasurement]) -> Result<RadioUpdateReport> {
        self.update_radio_with_gate(meas, self.cfg.gate)
    }

    /// `update_radio` with an explicit association gate.
    pub fn update_radio_with_gate(&mut self, meas: &[BearingMeasurement], gate: f64) -> Result<RadioUpdateReport> {
        let mut report = RadioUpdateReport::default();
        if meas.is_empty() {
            return Ok(report);
        }
        self.stops += 1;
        let stop = self.stops;
        let mut order: Vec<usize> = (0..meas.len()).collect();
        order.sort_by(|&a, &b| meas[b].rsrp.total_cmp(&meas[a].rsrp));
        let mut used: Vec<Option<usize>> = Vec::new();
        let mut unexplained = Vec::new();
        for &mi in &order {
            let m = &meas[mi];
            let mut best: Option<(Option<usize>, f64)> = None;
            let targets: Vec<Option<usize>> = match m.anchor_hint {
                Some(0) => vec![None],
                Some(h) => vec![Some(h - 1)],
                None => std::iter::once(None).chain((0..self.n_virtual()).map(Some)).collect(),
            };
            for a in targets {
                if used.contains(&a) || a.is_some_and(|i| i >= self.n_virtual()) {
                    continue;
                }
                let (innov, h, r) = self.bearing_model(m, a);
                let d2 = self.mahalanobis(&innov, &h, &r);
                if d2 < gate && best.is_none_or(|(_, b)| d2 < b) {
                    best = Some((a, d2));
                }
            }
            match best {
                Some((a, _)) => {
                    let (innov, h, r) = self.bearing_model(m, a);
                    self.correct(innov, &h, &r)?;
                    used.push(a);
                    if let Some(i) = a {
                        let p = self.position();
                        self.tracks[i].observed_from.push(p);
                    }
                    report.associated += 1;
                }
                None => unexplained.push(mi),
            }
        }
        let strongest = meas.iter().map(|m| m.rsrp).fold(f64::NEG_INFINITY, f64::max);
        let mut fresh = Vec::new();
        for mi in unexplained {
            let m = &meas[mi];
            if m.rsrp < strongest - self.cfg.spawn_margin_db {
                continue;
            }
            let init = Initializer::for_measurement(m, &self.cfg);
            let x0 = init.params(self.mean[0], self.mean[1], self.mean[2], m);
            let Some(v) = init.apply(&x0, &self.bs) else { continue };
            let near = |c: &Candidate| c.stop + 1 == stop && (c.position - v).norm() < self.cfg.spawn_consistency_m;
            if let Some(ci) = self.candidates.iter().position(near) {
                self.candidates.remove(ci);
                self.augment(&init, x0)?;
                report.spawned += 1;
            } else {
                fresh.push(Candidate { position: v, stop });
            }
        }
        self.candidates.retain(|c| c.stop == stop);
        self.candidates.extend(fresh);
        Ok(report)
    }

    /// Append a virtual anchor `v = g(pose, z)` with the linearised
    /// initialiser covariance and its cross-covariance to the existing state.
    fn augment(&mut self, init: &Initializer, x0: [f64; 5]) -> Result<()> {
        let degenerate = || Error::Geometry("anchor initialisation is degenerate".into());
        let v = init.apply(&x0, &self.bs).ok_or_else(degenerate)?;
        let eps = 1e-6;
        let mut jac = DMatrix::<f64>::zeros(2, 5);
        for c in 0..5 {
            let mut xp = x0;
            let mut xm = x0;
            xp[c] += eps;
            xm[c] -= eps;
            let (Some(a), Some(b)) = (init.apply(&xp, &self.bs), init.apply(&xm, &self.bs)) else {
                return Err(degenerate());
            };
            jac[(0, c)] = (a.x - b.x) / (2.0 * eps);
            jac[(1, c)] = (a.y - b.y) / (2.0 * eps);
        }
        let gx = jac.columns(0, POSE).into_owned();
        let gz = jac.columns(POSE, 2).into_owned();
        let n = self.mean.len();
        let r = init.noise();
        let p_xx = self.cov.view((0, 0), (POSE, n)).into_owned();
        let p_vx = &gx * p_xx;
        let ppp = self.cov.view((0, 0), (POSE, POSE)).into_owned();
        let p_vv = &gx * ppp * gx.transpose() + &gz * r * gz.transpose();
        let mut cov = DMatrix::zeros(n + 2, n + 2);
        cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        cov.view_mut((n, 0), (2, n)).copy_from(&p_vx);
        cov.view_mut((0, n), (n, 2)).copy_from(&p_vx.transpose());
        cov.view_mut((n, n), (2, 2)).copy_from(&p_vv);
        let mut mean = DVector::zeros(n + 2);
        mean.rows_mut(0, n).copy_from(&self.mean);
        mean[n] = v.x;
        mean[n + 1] = v.y;
        self.mean = mean;
        self.cov = cov;
        self.symmetrize();
        self.tracks.push(AnchorTrack {
            observed_from: vec![self.position()],
        });
        Ok(())
    }

    /// Fuse the detection nearest (in Mahalanobis distance) to the predicted
    /// position. The first lost frame since the last fused target inflates the
    /// position covariance instead. Returns whether a target was fused.
    pub fn update_vision(&mut self, det: &VisionDetection) -> Result<bool> {
        if det.lost {
            if !self.vision_lost {
                self.inflate_position(self.cfg.vision_loss_inflation);
            }
            self.vision_lost = true;
            return Ok(false);
        }
        let n = self.mean.len();
        let mut h = DMatrix::zeros(2, n);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in det.targets.iter().enumerate() {
            let innov = DVector::from_row_slice(&[t.position.x - self.mean[0], t.position.y - self.mean[1]]);
            let r = DMatrix::identity(2, 2) * (t.sigma * t.sigma);
            let d2 = self.mahalanobis(&innov, &h, &r);
            if d2 < self.cfg.vision_gate && best.is_none_or(|(_, b)| d2 < b) {
                best = Some((i, d2));
            }
        }
        let Some((i, _)) = best else { return Ok(false) };
        let t = &det.targets[i];
        let innov = DVector::from_row_slice(&[t.position.x - self.mean[0], t.position.y - self.mean[1]]);
        let r = DMatrix::identity(2, 2) * (t.sigma * t.sigma);
        self.correct(innov, &h, &r)?;
        self.vision_lost = false;
        Ok(true)
    }

    /// True if the covariance is symmetric and admits a Cholesky factorisation.
    pub fn covariance_is_valid(&self) -> bool {
        let asym = (&self.cov - self.cov.transpose()).abs().max();
        asym < 1e-9 * self.cov.abs().max().max(1.0) && self.cov.clone().cholesky().is_some()
    }
}

/// How a new virtual anchor is placed from one measurement. Parameters are
/// `[x, y, heading, aoa, second]` where `second` is the AOD or a range.
#[derive(Debug, Clone, Copy)]
enum Initializer {
    Triangulate { sigma_aoa: f64, sigma_aod: f64 },
    AlongRay { sigma_aoa: f64, range: f64, sigma_range: f64 },
}

impl Initializer {
    fn for_measurement(m: &BearingMeasurement, cfg: &SlamConfig) -> Self {
        match (m.aod, m.range) {
            (Some(_), _) => Initializer::Triangulate {
                sigma_aoa: cfg.sigma_aoa,
                sigma_aod: cfg.sigma_aod,
            },
            (None, Some(r)) => Initializer::AlongRay {
                sigma_aoa: cfg.sigma_aoa,
                range: r,
                sigma_range: cfg.sigma_range,
            },
            (None, None) => Initializer::AlongRay {
                sigma_aoa: cfg.sigma_aoa,
                range: cfg.default_range,
                sigma_range: cfg.default_range / 2.0,
            },
        }
    }

    fn params(&self, x: f64, y: f64, h: f64, m: &BearingMeasurement) -> [f64; 5] {
        let second = match self {
            Initializer::Triangulate { .. } => m.aod.unwrap_or(0.0),
            Initializer::AlongRay { range, .. } => *range,
        };
        [x, y, h, m.bearing, second]
    }

    fn apply(&self, p: &[f64; 5], bs: &Point) -> Option<Point> {
        let ue = Point::new(p[0], p[1]);
        match self {
            Initializer::Triangulate { .. } => triangulate(&ue, p[2], p[3], bs, p[4]),
            Initializer::AlongRay { .. } => Some(ue + crate::geometry::unit(p[2] + p[3]) * p[4]),
        }
    }

    fn noise(&self) -> DMatrix<f64> {
        let (a, b) = match self {
            Initializer::Triangulate { sigma_aoa, sigma_aod } => (*sigma_aoa, *sigma_aod),
            Initializer::AlongRay { sigma_aoa, sigma_range, .. } => (*sigma_aoa, *sigma_range),
        };
        DMatrix::from_diagonal(&DVector::from_row_slice(&[a * a, b * b]))
    }
}

/// Where the path from `ue` to virtual anchor `va` crosses the reflector
/// (the perpendicular bisector of `bs`-`va`).
pub fn reflection_point(bs: &Point, va: &Point, ue: &Point) -> Option<Point> {
    let n = va - bs;
    let m = (bs + va) * 0.5;
    let d = va - ue;
    let den = d.dot(&n);
    if den.abs() < 1e-12 {
        return None;
    }
    let t = (m - ue).dot(&n) / den;
    Some(ue + d * t)
}

/// Virtual anchor from the UE pose, the AOA (UE frame) and the global AOD:
/// intersect the two rays at the reflection point, then extend the UE ray by
/// the BS-to-reflection distance.
pub fn triangulate(ue: &Point, heading: f64, aoa: f64, bs: &Point, aod: f64) -> Option<Point> {
    let du = crate::geometry::unit(heading + aoa);
    let db = crate::geometry::unit(aod);
    let den = crate::geometry::cross(&du, &db);
    if den.abs() < 1e-6 {
        return None;
    }
    let w = bs - ue;
    let s = crate::geometry::cross(&w, &db) / den;
    let t = crate::geometry::cross(&w, &du) / den;
    if s <= 0.0 || t <= 0.0 {
        return None;
    }
    let r = ue + du * s;
    Some(ue + du * (s + (r - bs).norm()))
}
