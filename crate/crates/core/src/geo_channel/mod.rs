//! Planar geometric channel: line-of-sight, image-source specular reflections,
//! blockage by walls and pedestrians, and monostatic echoes.

mod maps;
mod monostatic;
mod response;
mod trace;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Segment};

pub use maps::{builtin_map, BUILTIN_MAPS};
pub use monostatic::{SelfInterference, SELF_INTERFERENCE_DELAY_S};
pub use response::{freq_response, BeamRef};
pub(crate) use response::accumulate_path;

pub const MAP_FORMAT: &str = "isac-map";
pub const MAP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Metal,
    Glass,
    Rough,
}

impl SurfaceKind {
    pub fn default_loss_db(self) -> f64 {
        match self {
            SurfaceKind::Metal => 1.0,
            SurfaceKind::Glass => 6.0,
            SurfaceKind::Rough => 10.0,
        }
    }

    /// Width (rad) of the backscatter lobe around normal incidence.
    pub fn backscatter_lobe(self) -> f64 {
        match self {
            SurfaceKind::Metal => 4f64.to_radians(),
            SurfaceKind::Glass => 6f64.to_radians(),
            SurfaceKind::Rough => 30f64.to_radians(),
        }
    }

    /// Peak-to-peak spread (dB) of the position-dependent reflection gain.
    pub fn roughness_db(self) -> f64 {
        match self {
            SurfaceKind::Rough => 6.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub segment: Segment,
    pub loss_db: f64,
    pub kind: SurfaceKind,
}

impl Surface {
    pub fn new(segment: Segment, kind: SurfaceKind) -> Self {
        Self {
            segment,
            loss_db: kind.default_loss_db(),
            kind,
        }
    }

    pub fn with_loss(mut self, loss_db: f64) -> Self {
        self.loss_db = loss_db;
        self
    }

    pub fn amplitude(&self) -> f64 {
        10f64.powf(-self.loss_db / 20.0)
    }
}

/// Moving disk following a piecewise-linear trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interferer {
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// `(t, x, y)` knots with strictly increasing `t`.
    pub waypoints: Vec<[f64; 3]>,
    /// Loop the trajectory with period equal to the last knot time.
    #[serde(default)]
    pub repeat: bool,
}

fn default_radius() -> f64 {
    0.3
}

impl Interferer {
    pub fn position_at(&self, t: f64) -> Point {
        let w = &self.waypoints;
        if w.len() == 1 {
            return Point::new(w[0][1], w[0][2]);
        }
        let (t0, t1) = (w[0][0], w[w.len() - 1][0]);
        let mut t = t;
        if self.repeat && t1 > t0 {
            t = t0 + (t - t0).rem_euclid(t1 - t0);
        }
        let t = t.clamp(t0, t1);
        let i = w.partition_point(|k| k[0] <= t).clamp(1, w.len() - 1);
        let (a, b) = (&w[i - 1], &w[i]);
        let f = if b[0] > a[0] { (t - a[0]) / (b[0] - a[0]) } else { 0.0 };
        Point::new(a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2]))
    }

    pub fn blocks(&self, p: &Point, q: &Point, t: f64) -> bool {
        crate::geometry::point_segment_distance(p, q, &self.position_at(t)) < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvironmentMap {
    pub name: String,
    /// `[xmin, ymin, xmax, ymax]`.
    pub bounds: [f64; 4],
    pub surfaces: Vec<Surface>,
    /// Blocking, non-reflecting segments.
    pub obstacles: Vec<Segment>,
    pub interferers: Vec<Interferer>,
}

impl EnvironmentMap {
    pub fn empty(bounds: [f64; 4]) -> Self {
        Self {
            name: "empty".into(),
            bounds,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.surfaces.iter().enumerate() {
            if s.segment.length() <= 0.0 {
                return Err(Error::Config(format!("surfaces[{i}] has zero length")));
            }
            if s.loss_db < 0.0 {
                return Err(Error::Config(format!("surfaces[{i}].loss_db must be >= 0")));
            }
        }
        for (i, s) in self.obstacles.iter().enumerate() {
            if s.length() <= 0.0 {
                return Err(Error::Config(format!("obstacles[{i}] has zero length")));
            }
        }
        for (i, it) in self.interferers.iter().enumerate() {
            if it.waypoints.is_empty() || it.radius <= 0.0 {
                return Err(Error::Config(format!("interferers[{i}] needs waypoints and radius > 0")));
            }
            if it.waypoints.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::Config(format!("interferers[{i}] knot times must increase")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        let [x0, y0, x1, y1] = self.bounds;
        p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1
    }

    /// True if the segment `p -> q` is blocked at time `t`. Surfaces listed in
    /// `skip` (e.g. the bounce surface) are ignored.
    pub fn is_blocked(&self, p: &Point, q: &Point, t: f64, skip: &[usize]) -> bool {
        const EPS: f64 = 1e-9;
        self.surfaces
            .iter()
            .enumerate()
            .any(|(i, s)| !skip.contains(&i) && s.segment.blocks(p, q, EPS))
            || self.obstacles.iter().any(|s| s.blocks(p, q, EPS))
            || self.interferers.iter().any(|it| it.blocks(p, q, t))
    }

    pub fn to_json(&self) -> String {
        let file = MapFile::from(self);
        serde_json::to_string_pretty(&file).expect("map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: MapFile = serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigField {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if file.format != MAP_FORMAT {
            return Err(Error::ConfigField {
                path: "format".into(),
                message: format!("expected \"{MAP_FORMAT}\", got \"{}\"", file.format),
            });
        }
        if file.version != MAP_VERSION {
            return Err(Error::ConfigField {
                path: "version".into(),
                message: format!("unsupported map version {}", file.version),
            });
        }
        let map = EnvironmentMap {
            name: file.name,
            bounds: file.bounds,
            surfaces: file
                .surfaces
                .into_iter()
                .map(|s| Surface {
                    segment: Segment::from_coords(s.x1, s.y1, s.x2, s.y2),
                    loss_db: s.loss_db.unwrap_or(s.kind.default_loss_db()),
                    kind: s.kind,
                })
                .collect(),
            obstacles: file
                .obstacles
                .into_iter()
                .map(|s| Segment::from_coords(s.x1, s.y1, s.x2, s.y2))
                .collect(),
            interferers: file.interferers,
        };
        map.validate()?;
        Ok(map)
    }
}

/// On-disk map schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    format: String,
    version: u32,
    #[serde(default)]
    name: String,
    bounds: [f64; 4],
    #[serde(default)]
    surfaces: Vec<SurfaceRecord>,
    #[serde(default)]
    obstacles: Vec<ObstacleRecord>,
    #[serde(default)]
    interferers: Vec<Interferer>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceRecord {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss_db: Option<f64>,
    kind: SurfaceKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleRecord {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl From<&EnvironmentMap> for MapFile {
    fn from(m: &EnvironmentMap) -> Self {
        MapFile {
            format: MAP_FORMAT.into(),
            version: MAP_VERSION,
            name: m.name.clone(),
            bounds: m.bounds,
            surfaces: m
                .surfaces
                .iter()
                .map(|s| SurfaceRecord {
                    x1: s.segment.a.x,
                    y1: s.segment.a.y,
                    x2: s.segment.b.x,
                    y2: s.segment.b.y,
                    loss_db: Some(s.loss_db),
                    kind: s.kind,
                })
                .collect(),
            obstacles: m
                .obstacles
                .iter()
                .map(|s| ObstacleRecord {
                    x1: s.a.x,
                    y1: s.a.y,
                    x2: s.b.x,
                    y2: s.b.y,
                })
                .collect(),
            interferers: m.interferers.clone(),
        }
    }
}

/// Position and boresight heading (global frame, rad) of an antenna array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayPose {
    pub position: Point,
    pub boresight: f64,
}

impl ArrayPose {
    pub fn new(x: f64, y: f64, boresight: f64) -> Self {
        Self {
            position: Point::new(x, y),
            boresight,
        }
    }

    /// Global azimuth to array-local azimuth.
    pub fn to_local(&self, az: f64) -> f64 {
        crate::geometry::wrap_angle(az - self.boresight)
    }

    pub fn to_global(&self, local_az: f64) -> f64 {
        crate::geometry::wrap_angle(local_az + self.boresight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Los,
    SpecularNlos,
    Echo,
    SelfInterference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub kind: PathKind,
    pub delay: f64,
    /// Global azimuth of departure at the transmitter.
    pub aod: f64,
    /// Global azimuth (from the receiver) the path arrives from.
    pub aoa: f64,
    pub gain: Complex64,
    /// Surfaces hit, in propagation order.
    pub bounces: Vec<usize>,
    /// Reflection points, in propagation order.
    pub bounce_points: Vec<Point>,
}

impl PathComponent {
    pub fn bounce_surface(&self) -> Option<usize> {
        self.bounces.first().copied()
    }

    pub fn length(&self) -> f64 {
        self.delay * crate::geometry::SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub paths: Vec<PathComponent>,
    pub timestamp: f64,
}

impl ChannelRealization {
    pub fn los(&self) -> Option<&PathComponent> {
        self.paths.iter().find(|p| p.kind == PathKind::Los)
    }

    fn sort(&mut self) {
        self.paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    }
}

/// Propagation model over a fixed map.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub env: EnvironmentMap,
    pub wavelength: f64,
    /// Highest reflection order traced (1 = single bounce).
    pub max_order: usize,
    /// Seeds the per-path scattering phases.
    pub seed: u64,
    /// Length of the surface patches used for echoes, metres.
    pub patch_step: f64,
    pub self_interference: SelfInterference,
}

impl ChannelModel {
    pub fn new(env: EnvironmentMap, carrier_hz: f64, seed: u64) -> Self {
        Self {
            env,
            wavelength: crate::geometry::SPEED_OF_LIGHT / carrier_hz,
            max_order: 1,
            seed,
            patch_step: 0.2,
            self_interference: SelfInterference::default(),
        }
    }

    /// Free-space amplitude `lambda / (4 pi d)`.
    pub fn free_space(&self, d: f64) -> f64 {
        self.wavelength / (4.0 * std::f64::consts::PI * d)
    }

    pub(crate) fn scatter_phase(&self, key: &[u64]) -> f64 {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        for k in key {
            bytes.extend_from_slice(&k.to_le_bytes());
        }
        let h = crate::rng::fnv1a64(&bytes);
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 * std::f64::consts::PI
    }

    pub(crate) fn unit_hash(&self, key: &[u64]) -> f64 {
        self.scatter_phase(key) / (2.0 * std::f64::consts::PI)
    }
}
