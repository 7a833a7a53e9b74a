use super::{EnvironmentMap, Surface, SurfaceKind};
use crate::error::{Error, Result};
use crate::geometry::Segment;

pub const BUILTIN_MAPS: &[&str] = &["empty", "imaging", "corridor", "tracking", "netsense"];

/// Maps shipped with the simulator; scenario files may reference them by name.
pub fn builtin_map(name: &str) -> Result<EnvironmentMap> {
    let s = |x1, y1, x2, y2, kind| Surface::new(Segment::from_coords(x1, y1, x2, y2), kind);
    let map = match name {
        "empty" => EnvironmentMap::empty([-50.0, -50.0, 50.0, 50.0]),
        // Monostatic node at the origin facing +x.
        "imaging" => EnvironmentMap {
            name: name.into(),
            bounds: [-2.0, -8.0, 14.0, 8.0],
            surfaces: vec![
                s(4.0, -0.5, 4.0, 0.5, SurfaceKind::Metal),
                s(1.0, 5.0, 12.0, 5.0, SurfaceKind::Glass),
                s(1.0, -5.0, 12.0, -5.0, SurfaceKind::Glass),
                s(7.0, 2.2, 7.0, 3.8, SurfaceKind::Glass),
                s(9.0, -4.0, 9.0, -1.0, SurfaceKind::Rough),
            ],
            ..Default::default()
        },
        "corridor" => EnvironmentMap {
            name: name.into(),
            bounds: [-6.0, -6.0, 46.0, 6.0],
            surfaces: vec![
                s(-4.0, 3.0, 44.0, 3.0, SurfaceKind::Metal),
                s(-4.0, -3.0, 44.0, -3.0, SurfaceKind::Glass),
            ],
            ..Default::default()
        },
        "tracking" => EnvironmentMap {
            name: name.into(),
            bounds: [-10.0, -6.0, 60.0, 6.0],
            surfaces: vec![
                s(-8.0, 4.0, 58.0, 4.0, SurfaceKind::Metal),
                s(-8.0, -4.0, 58.0, -4.0, SurfaceKind::Glass),
            ],
            ..Default::default()
        },
        "netsense" => EnvironmentMap {
            name: name.into(),
            bounds: [-12.0, -12.0, 12.0, 12.0],
            surfaces: vec![
                s(8.0, -3.0, 8.0, 3.0, SurfaceKind::Metal),
                s(-8.0, -3.0, -8.0, 3.0, SurfaceKind::Metal),
            ],
            ..Default::default()
        },
        other => {
            return Err(Error::Config(format!(
                "unknown map \"{other}\" (built-in maps: {})",
                BUILTIN_MAPS.join(", ")
            )))
        }
    };
    map.validate()?;
    Ok(map)
}
