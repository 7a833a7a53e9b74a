//! Browser bindings: beam patterns, monostatic imaging and a short beam
//! tracking run. Every export returns JSON text.

use isac_core::beam_tracking::{run_tracking, TrackingConfig, TrackingMode, TrackingScenario};
use isac_core::geo_channel::{builtin_map, ArrayPose, ChannelModel};
use isac_core::nr_frame::Numerology;
use isac_core::phased_array::{build_codebook, UpaGeometry};
use isac_core::rng::SeedTree;
use isac_core::sensing::{filter_self_interference, MonostaticConfig, MonostaticScanner};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Gain in dBi of one codebook beam over azimuth -90..90 degrees, 0.5 degree steps.
#[wasm_bindgen]
pub fn beam_pattern(beam: usize) -> Result<String, JsValue> {
    let cb = build_codebook(&UpaGeometry::default());
    let b = cb.beams.get(beam).ok_or_else(|| err(format!("beam {beam} not in 0..{}", cb.len())))?;
    let az: Vec<f64> = (0..=360).map(|k| -90.0 + 0.5 * f64::from(k)).collect();
    let gain: Vec<f64> = az
        .iter()
        .map(|a| {
            let g = cb.directional_gains(a.to_radians())[beam].norm_sqr();
            10.0 * g.max(1e-12).log10()
        })
        .collect();
    Ok(json!({ "beam": beam, "pointing_deg": b.az.to_degrees(), "az_deg": az, "gain_db": gain }).to_string())
}

/// Filtered angle-range image (dB) and point cloud for a node in a built-in map.
#[wasm_bindgen]
pub fn monostatic_image(map: &str, x: f64, y: f64, boresight_deg: f64, max_range_m: f64, seed: u64) -> Result<String, JsValue> {
    let env = builtin_map(map).map_err(err)?;
    let node = ArrayPose::new(x, y, boresight_deg.to_radians());
    if !env.contains(&node.position) {
        return Err(err("node is outside the map"));
    }
    let num = Numerology::default();
    let cb = build_codebook(&UpaGeometry::default());
    let tree = SeedTree::new(seed);
    let model = ChannelModel::new(env.clone(), num.carrier_hz, tree.child("channel").root());
    let cfg = MonostaticConfig::default();
    let sc = MonostaticScanner::new(&model, &cb, &num, cfg);
    let img = sc.scan(&node, 0.0, &mut tree.stream("monostatic"));
    let img = filter_self_interference(&img, &sc.calibration(&node), cfg.min_range_m).map_err(err)?;
    let bins = ((max_range_m / img.range_per_bin()).ceil() as usize).clamp(1, img.n_bins());
    let db: Vec<Vec<f64>> = img
        .power()
        .iter()
        .map(|row| row[..bins].iter().map(|p| (10.0 * p.max(1e-30).log10() * 100.0).round() / 100.0).collect())
        .collect();
    let cloud: Vec<_> = img
        .point_cloud(cfg.peak_threshold_db)
        .iter()
        .map(|p| json!({ "x": x + p.range * p.az.cos(), "y": y + p.range * p.az.sin(), "power_db": p.power_db }))
        .collect();
    let walls: Vec<_> = env.surfaces.iter().map(|s| [s.segment.a.x, s.segment.a.y, s.segment.b.x, s.segment.b.y]).collect();
    Ok(json!({
        "beam_az_deg": img.beam_az.iter().map(|a| a.to_degrees()).collect::<Vec<_>>(),
        "range_per_bin": img.range_per_bin(),
        "db": db,
        "cloud": cloud,
        "walls": walls,
        "bounds": env.bounds,
    })
    .to_string())
}

/// Exhaustive and sensing-aided tracking on the nominal lane.
#[wasm_bindgen]
pub fn tracking(m_beams: usize, speed: f64, duration_s: f64, seed: u64) -> Result<String, JsValue> {
    let cfg = TrackingConfig {
        m_beams,
        ue_speed: speed,
        sim_duration_s: duration_s,
        ..TrackingConfig::default()
    };
    cfg.validate().map_err(err)?;
    let scn = TrackingScenario::nominal();
    let mut out = serde_json::Map::new();
    for mode in [TrackingMode::Exhaustive, TrackingMode::SensingAided] {
        let tl = run_tracking(&cfg, &scn, mode, seed).map_err(err)?;
        let s = tl.summary();
        out.insert(
            mode.label().to_string(),
            json!({
                "scan_period_ms": tl.scan_period_ms,
                "interruptions": s.interruptions,
                "interrupted_s": s.interrupted_s,
                "alignment": s.alignment_fraction,
                "threshold_dbm": tl.threshold_dbm,
                "t_s": tl.records.iter().map(|r| r.t_ms as f64 / 1000.0).collect::<Vec<_>>(),
                "rsrp_dbm": tl.records.iter().map(|r| (r.serving_rsrp_dbm * 10.0).round() / 10.0).collect::<Vec<_>>(),
                "best_dbm": tl.records.iter().map(|r| (r.best_rsrp_dbm * 10.0).round() / 10.0).collect::<Vec<_>>(),
            }),
        );
    }
    Ok(serde_json::Value::Object(out).to_string())
}
