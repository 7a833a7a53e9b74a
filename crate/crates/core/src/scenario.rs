//! Scenario files, experiment runners and artifact writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beam_tracking::{compare_modes, run_tracking, TrackingConfig, TrackingMode, TrackingScenario};
use crate::error::{Error, Result};
use crate::geo_channel::{builtin_map, ArrayPose, ChannelModel, EnvironmentMap, BUILTIN_MAPS};
use crate::net_sensing::{encode_report, run_netsense, NetsenseScenario};
use crate::nr_frame::{CapacityLimits, Numerology};
use crate::phased_array::{build_codebook, UpaGeometry};
use crate::radio_slam::{run_slam, CorridorScenario, Modalities, SlamConfig};
use crate::rng::SeedTree;
use crate::sensing::{
    cloud_to_csv, estimate_angles, filter_self_interference, image_to_pgm, matrix_to_csv, BistaticScanner, LinkBudget,
    MonostaticConfig, MonostaticScanner, PeakConfig,
};
use crate::waveform::{build_rach_signal, gen_zc, pss_sequence, sss_sequence, OfdmModem, PreambleBank, ResourceGrid, SsbBlock, ZC_LEN};

pub const SCENARIO_VERSION: u32 = 1;

/// A built-in map name, a path to a map file, or an inline map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapRef {
    Name(String),
    Inline(EnvironmentMap),
}

impl MapRef {
    pub fn resolve(&self, base: &Path) -> Result<EnvironmentMap> {
        match self {
            MapRef::Inline(m) => {
                m.validate()?;
                Ok(m.clone())
            }
            MapRef::Name(n) if BUILTIN_MAPS.contains(&n.as_str()) => builtin_map(n),
            MapRef::Name(n) => {
                let path = base.join(n);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("map \"{}\": {e}", path.display())))?;
                EnvironmentMap::from_json(&text)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingScenario {
    pub map: MapRef,
    /// Monostatic node.
    pub node: ArrayPose,
    pub bs: ArrayPose,
    /// Bistatic receiver.
    pub ue: ArrayPose,
    pub monostatic: MonostaticConfig,
    pub link: LinkBudget,
    pub k_paths: usize,
    pub dynamic_range_db: f64,
}

impl ImagingScenario {
    pub fn nominal(map: &str) -> Self {
        Self {
            map: MapRef::Name(map.into()),
            node: ArrayPose::new(0.0, 0.0, 0.0),
            bs: ArrayPose::new(0.0, 0.0, 0.0),
            ue: ArrayPose::new(10.0, 2.0, std::f64::consts::PI),
            monostatic: MonostaticConfig::default(),
            link: LinkBudget::default(),
            k_paths: 3,
            dynamic_range_db: 40.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlamExperiment {
    /// Comma-separated subset of `radio,imu,vision`.
    pub modalities: String,
    #[serde(default)]
    pub scenario: Option<CorridorScenario>,
    #[serde(default)]
    pub filter: SlamConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamtrackExperiment {
    /// Run one mode; both are compared when absent.
    #[serde(default)]
    pub mode: Option<TrackingMode>,
    #[serde(default)]
    pub config: TrackingConfig,
    #[serde(default)]
    pub scenario: Option<TrackingScenario>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetsenseExperiment {
    #[serde(default)]
    pub scenario: Option<NetsenseScenario>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Imaging(ImagingScenario),
    Slam(SlamExperiment),
    Beamtrack(BeamtrackExperiment),
    Netsense(NetsenseExperiment),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Imaging(_) => "imaging",
            Experiment::Slam(_) => "slam",
            Experiment::Beamtrack(_) => "beamtrack",
            Experiment::Netsense(_) => "netsense",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub numerology: Option<Numerology>,
    pub experiment: Experiment,
    /// Directory that relative map paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn field_err(path: &str, message: impl Into<String>) -> Error {
    Error::ConfigField {
        path: path.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn new(experiment: Experiment, seeds: Vec<u64>) -> Self {
        Self {
            version: SCENARIO_VERSION,
            seeds,
            numerology: None,
            experiment,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut scn: Scenario = serde_path_to_error::deserialize(de).map_err(|e| field_err(&e.path().to_string(), e.inner().to_string()))?;
        scn.base_dir = base_dir.to_path_buf();
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn numerology(&self) -> Numerology {
        self.numerology.clone().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(field_err("version", format!("unsupported version {}, expected {SCENARIO_VERSION}", self.version)));
        }
        if self.seeds.is_empty() {
            return Err(field_err("seeds", "seed list is empty"));
        }
        if let Some(n) = &self.numerology {
            n.validate().map_err(|e| field_err("numerology", e.to_string()))?;
            if !matches!(self.experiment, Experiment::Imaging(_)) && *n != Numerology::default() {
                return Err(field_err("numerology", "a custom numerology applies to imaging only"));
            }
        }
        match &self.experiment {
            Experiment::Imaging(s) => {
                let map = s.map.resolve(&self.base_dir).map_err(|e| field_err("experiment.imaging.map", e.to_string()))?;
                for (name, p) in [("node", s.node), ("bs", s.bs), ("ue", s.ue)] {
                    if !map.contains(&p.position) {
                        return Err(field_err(&format!("experiment.imaging.{name}"), "outside the map bounds"));
                    }
                }
                if s.k_paths == 0 {
                    return Err(field_err("experiment.imaging.k_paths", "must be at least 1"));
                }
                if !(s.dynamic_range_db > 0.0) {
                    return Err(field_err("experiment.imaging.dynamic_range_db", "must be positive"));
                }
            }
            Experiment::Slam(s) => {
                Modalities::parse(&s.modalities).map_err(|e| field_err("experiment.slam.modalities", e.to_string()))?;
                if let Some(c) = &s.scenario {
                    c.map.validate().map_err(|e| field_err("experiment.slam.scenario.map", e.to_string()))?;
                    if c.stops.is_empty() {
                        return Err(field_err("experiment.slam.scenario.stops", "no stops"));
                    }
                }
            }
            Experiment::Beamtrack(s) => {
                s.config.validate().map_err(|e| field_err("experiment.beamtrack.config", e.to_string()))?;
                if let Some(t) = &s.scenario {
                    t.validate().map_err(|e| field_err("experiment.beamtrack.scenario", e.to_string()))?;
                }
            }
            Experiment::Netsense(s) => {
                if let Some(n) = &s.scenario {
                    n.map.validate().map_err(|e| field_err("experiment.netsense.scenario.map", e.to_string()))?;
                    n.fusion.limits.check_uplink(n.ues.len())?;
                }
            }
        }
        Ok(())
    }
}

/// Everything one run produced. Artifacts are keyed by file name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub artifacts: BTreeMap<String, Vec<u8>>,
    /// `(metric, value)` lines for the summary file.
    pub summary: Vec<(String, String)>,
    /// In-run assertions; the CLI exits non-zero if any fails.
    pub checks: Vec<(String, bool)>,
}

impl RunReport {
    fn add(&mut self, name: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.artifacts.insert(name.into(), body.into());
    }

    fn metric(&mut self, name: impl Into<String>, value: impl ToString) {
        self.summary.push((name.into(), value.to_string()));
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (k, ok) in &self.checks {
            let _ = writeln!(s, "check {k} = {}", if *ok { "pass" } else { "fail" });
        }
        s
    }

    /// Write every artifact plus `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.artifacts {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join("summary.txt"), self.summary_text())?;
        Ok(())
    }
}

/// Interleaved I/Q as little-endian `f64` pairs.
pub fn iq_to_le_bytes(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 16);
    for s in samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn iq_from_le_bytes(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Wire(format!("{} bytes is not a whole number of I/Q pairs", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
            Complex64::new(f(&c[..8]), f(&c[8..]))
        })
        .collect())
}

fn complex_csv(v: &[Complex64]) -> String {
    let mut s = String::from("n,re,im\n");
    for (i, x) in v.iter().enumerate() {
        let _ = writeln!(s, "{i},{:.17e},{:.17e}", x.re, x.im);
    }
    s
}

pub fn run(scn: &Scenario) -> Result<RunReport> {
    scn.validate()?;
    match &scn.experiment {
        Experiment::Imaging(s) => run_imaging(scn, s),
        Experiment::Slam(s) => run_slam_experiment(scn, s),
        Experiment::Beamtrack(s) => run_beamtrack(scn, s),
        Experiment::Netsense(s) => run_netsense_experiment(scn, s),
    }
}

fn suffix(scn: &Scenario, seed: u64) -> String {
    if scn.seeds.len() == 1 {
        String::new()
    } else {
        format!("_seed{seed}")
    }
}

fn run_imaging(scn: &Scenario, s: &ImagingScenario) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let map = s.map.resolve(&scn.base_dir)?;
    let num = scn.numerology();
    let cb = build_codebook(&UpaGeometry::default());
    for &seed in &scn.seeds {
        let sfx = suffix(scn, seed);
        let tree = SeedTree::new(seed);
        let model = ChannelModel::new(map.clone(), num.carrier_hz, tree.child("channel").root());

        let mono = MonostaticScanner::new(&model, &cb, &num, s.monostatic);
        let img = mono.scan(&s.node, 0.0, &mut tree.stream("monostatic"));
        let img = filter_self_interference(&img, &mono.calibration(&s.node), s.monostatic.min_range_m)?;
        let db: Vec<Vec<f64>> = img.power().iter().map(|r| r.iter().map(|p| 10.0 * p.max(1e-300).log10()).collect()).collect();
        let cloud = img.point_cloud(s.monostatic.peak_threshold_db);
        rep.add(format!("angle_range{sfx}.pgm"), image_to_pgm(&db, s.dynamic_range_db));
        rep.add(format!("angle_range{sfx}.csv"), matrix_to_csv(&db));
        rep.add(format!("point_cloud{sfx}.csv"), cloud_to_csv(&cloud));
        rep.metric(format!("seed {seed} point_cloud_size"), cloud.len());
        rep.metric(format!("seed {seed} range_per_bin_m"), format!("{:.5}", img.range_per_bin()));
        rep.check(format!("seed {seed} point cloud non-empty"), !cloud.is_empty());

        let bi = BistaticScanner::new(&model, &cb, &cb, &num, s.link)?;
        let all: Vec<usize> = (0..cb.len()).collect();
        let ue = s.ue;
        let rsrp = bi.scan(&s.bs, &|_| ue, &all, 0.0, 0.0, &mut tree.stream("bistatic"))?;
        rep.add(format!("rsrp{sfx}.pgm"), image_to_pgm(&rsrp.values, s.dynamic_range_db));
        rep.add(format!("rsrp{sfx}.csv"), matrix_to_csv(&rsrp.values));
        let est = estimate_angles(&rsrp, s.k_paths, &cb, &cb, &PeakConfig::default())?;
        let mut csv = String::from("aoa_deg,aod_deg,rsrp_dbm\n");
        for e in &est {
            let _ = writeln!(csv, "{:.4},{:.4},{:.3}", e.aoa.to_degrees(), e.aod.to_degrees(), e.rsrp_dbm);
        }
        rep.add(format!("angles{sfx}.csv"), csv);
        rep.metric(format!("seed {seed} peak_rsrp_dbm"), format!("{:.3}", rsrp.max_dbm()));
        rep.check(format!("seed {seed} angle estimates found"), !est.is_empty());
    }
    Ok(rep)
}

fn run_slam_experiment(scn: &Scenario, s: &SlamExperiment) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let modalities = Modalities::parse(&s.modalities)?;
    let corridor = s.scenario.clone().unwrap_or_else(CorridorScenario::nominal);
    let mut csv = String::from("seed,modalities,mean_loc_err,final_loc_err,mapping_err,convergence_stop\n");
    let (mut loc, mut map) = (0.0, 0.0);
    for &seed in &scn.seeds {
        let run = run_slam(&corridor, modalities, &s.filter, seed)?;
        let sfx = suffix(scn, seed);
        let m = &run.metrics;
        rep.add(format!("trajectory{sfx}.csv"), run.trajectory_csv());
        rep.add(format!("surfaces{sfx}.csv"), run.surfaces_csv());
        let stop = m.convergence_stop(crate::experiments::MAPPING_THRESHOLD_M);
        let _ = writeln!(
            csv,
            "{seed},{},{:.6},{:.6},{:.6},{}",
            modalities.label(),
            m.mean_localization_error,
            m.final_localization_error,
            m.mapping_error,
            stop.map_or(String::new(), |s| s.to_string())
        );
        loc += m.mean_localization_error;
        map += m.mapping_error;
        rep.check(format!("seed {seed} filter covariance valid"), run.final_state.covariance_is_valid());
    }
    let n = scn.seeds.len() as f64;
    rep.add("slam_summary.csv", csv);
    rep.metric("modalities", modalities.label());
    rep.metric("mean_localization_error_m", format!("{:.4}", loc / n));
    rep.metric("mapping_error_m", if modalities.radio { format!("{:.4}", map / n) } else { "n/a".into() });
    Ok(rep)
}

fn run_beamtrack(scn: &Scenario, s: &BeamtrackExperiment) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let track = s.scenario.clone().unwrap_or_else(TrackingScenario::nominal);
    match s.mode {
        Some(mode) => {
            let mut csv = String::from("seed,mode,m_beams,interruptions,interrupted_s,mean_rsrp_dbm,alignment\n");
            for &seed in &scn.seeds {
                let tl = run_tracking(&s.config, &track, mode, seed)?;
                let sum = tl.summary();
                rep.add(format!("timeline_{}{}.csv", mode.label(), suffix(scn, seed)), tl.to_csv());
                let _ = writeln!(
                    csv,
                    "{seed},{},{},{},{:.3},{:.3},{:.4}",
                    mode.label(),
                    sum.m_beams,
                    sum.interruptions,
                    sum.interrupted_s,
                    sum.mean_serving_rsrp_dbm,
                    sum.alignment_fraction
                );
                rep.metric(format!("seed {seed} interruptions"), sum.interruptions);
                rep.metric(format!("seed {seed} interrupted_s"), format!("{:.3}", sum.interrupted_s));
                rep.metric(format!("seed {seed} scan_period_ms"), tl.scan_period_ms);
                rep.metric(format!("seed {seed} overhead_reduction"), tl.overhead_reduction);
            }
            rep.add("tracking_summary.csv", csv);
        }
        None => {
            let cmp = compare_modes(&s.config, &track, &scn.seeds)?;
            rep.add("tracking_comparison.csv", cmp.to_csv());
            rep.metric("aided_wins", format!("{}/{}", cmp.wins(), cmp.rows.len()));
            for r in &cmp.rows {
                rep.metric(
                    format!("seed {} interruptions exhaustive/aided", r.seed),
                    format!("{}/{}", r.exhaustive.interruptions, r.aided.interruptions),
                );
                rep.metric(
                    format!("seed {} interrupted_s exhaustive/aided", r.seed),
                    format!("{:.3}/{:.3}", r.exhaustive.interrupted_s, r.aided.interrupted_s),
                );
            }
        }
    }
    Ok(rep)
}

fn run_netsense_experiment(scn: &Scenario, s: &NetsenseExperiment) -> Result<RunReport> {
    let mut rep = RunReport::default();
    let ns = s.scenario.clone().unwrap_or_else(NetsenseScenario::nominal);
    for &seed in &scn.seeds {
        let run = run_netsense(&ns, seed)?;
        let sfx = suffix(scn, seed);
        let mut wire = Vec::new();
        for r in &run.reports {
            wire.extend(encode_report(r)?);
        }
        rep.add(format!("reports{sfx}.bin"), wire);
        rep.add(format!("fused_points{sfx}.csv"), run.fused.points_csv());
        rep.add(format!("fused_segments{sfx}.csv"), run.fused.segments_csv());
        let mut csv = String::from("source,coverage\n");
        for (r, c) in run.reports.iter().zip(&run.individual_coverage) {
            let _ = writeln!(csv, "ue{},{c:.6}", r.ue_id);
        }
        let _ = writeln!(csv, "fused,{:.6}", run.fused_coverage);
        rep.add(format!("coverage{sfx}.csv"), csv);
        rep.metric(format!("seed {seed} fused_coverage"), format!("{:.4}", run.fused_coverage));
        rep.check(
            format!("seed {seed} fused coverage covers every UE"),
            run.individual_coverage.iter().all(|c| run.fused_coverage >= *c),
        );
    }
    Ok(rep)
}

/// Reference vectors for external cross-checks.
pub fn dump_vectors(num: &Numerology) -> Result<RunReport> {
    num.validate()?;
    let mut rep = RunReport::default();
    let zc = gen_zc(1, ZC_LEN)?;
    rep.add("zc_root1.csv", complex_csv(&zc));
    let bank = PreambleBank::new(1)?;
    for idx in [0usize, 1, 63] {
        rep.add(format!("rach_preamble{idx}.iq"), iq_to_le_bytes(&build_rach_signal(&bank.preambles[idx])));
    }
    let pss = pss_sequence();
    let sss = sss_sequence(0);
    let mut s = String::from("n,pss,sss\n");
    for (i, (p, q)) in pss.iter().zip(&sss).enumerate() {
        let _ = writeln!(s, "{i},{p},{q}");
    }
    rep.add("pss_sss_cell0.csv", s);
    let modem = OfdmModem::new(num)?;
    let mut grid = ResourceGrid::slot_group(num);
    let start = grid.centered_ssb_start();
    grid.place_ssb(&SsbBlock::new(0, 0), 0, start)?;
    let block = modem.modulate(&grid)?;
    rep.add("ssb_slot_group.iq", iq_to_le_bytes(&block.time_samples));
    rep.add("codebook.csv", build_codebook(&UpaGeometry::default()).to_csv());
    rep.add("numerology.json", serde_json::to_string_pretty(num)?);
    rep.add("capacity.json", serde_json::to_string_pretty(&CapacityLimits::default())?);
    rep.metric("ofdm_samples", block.time_samples.len());
    rep.metric("rach_samples", build_rach_signal(&bank.preambles[0]).len());
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn netsense_json(extra: &str) -> String {
        format!(r#"{{"version": 1, "seeds": [1], "experiment": {{"netsense": {{{extra}}}}}}}"#)
    }

    #[test]
    fn minimal_files_parse() {
        let s = Scenario::parse(&netsense_json(""), Path::new(".")).unwrap();
        assert_eq!(s.experiment.kind(), "netsense");
        let slam = r#"{"version": 1, "seeds": [3, 4], "experiment": {"slam": {"modalities": "radio,imu"}}}"#;
        assert_eq!(Scenario::parse(slam, Path::new(".")).unwrap().seeds, vec![3, 4]);
    }

    #[test]
    fn unknown_fields_name_their_path() {
        let bad = r#"{"version": 1, "seeds": [1], "experiment": {"beamtrack": {"config": {"m_beams": 16, "ue_sped": 4}}}}"#;
        let err = Scenario::parse(bad, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("experiment.beamtrack.config.ue_sped"), "{err}");
        let top = r#"{"version": 1, "seeds": [1], "sedes": [], "experiment": {"netsense": {}}}"#;
        assert!(Scenario::parse(top, Path::new(".")).unwrap_err().to_string().contains("sedes"));
    }

    #[test]
    fn version_and_seeds_are_checked() {
        let v2 = r#"{"version": 2, "seeds": [1], "experiment": {"netsense": {}}}"#;
        assert!(matches!(Scenario::parse(v2, Path::new(".")), Err(Error::ConfigField { path, .. }) if path == "version"));
        let none = r#"{"version": 1, "seeds": [], "experiment": {"netsense": {}}}"#;
        assert!(matches!(Scenario::parse(none, Path::new(".")), Err(Error::ConfigField { path, .. }) if path == "seeds"));
        let missing = r#"{"seeds": [1], "experiment": {"netsense": {}}}"#;
        assert!(Scenario::parse(missing, Path::new(".")).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let m = r#"{"version": 1, "seeds": [1], "experiment": {"slam": {"modalities": "sonar"}}}"#;
        assert!(Scenario::parse(m, Path::new(".")).unwrap_err().to_string().contains("modalities"));
        let map = r#"{"version": 1, "seeds": [1], "experiment": {"imaging": {"map": "nowhere.json",
            "node": {"position": [0, 0], "boresight": 0}, "bs": {"position": [0, 0], "boresight": 0},
            "ue": {"position": [1, 0], "boresight": 3}, "monostatic": {"tx_power_dbm_per_re": -6, "noise_dbm_per_re": -116,
            "min_range_m": 1, "peak_threshold_db": 10, "hann": false}, "link": {"tx_power_dbm_per_re": -6, "noise_dbm_per_re": -116},
            "k_paths": 2, "dynamic_range_db": 40}}}"#;
        assert!(Scenario::parse(map, Path::new(".")).unwrap_err().to_string().contains("experiment.imaging.map"));
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = Scenario::new(Experiment::Imaging(ImagingScenario::nominal("imaging")), vec![5]);
        let back = Scenario::parse(&s.to_json(), Path::new(".")).unwrap();
        assert_eq!(back.to_json(), s.to_json());
    }

    #[test]
    fn iq_round_trip() {
        let v = vec![Complex64::new(1.5, -2.0), Complex64::new(f64::MIN_POSITIVE, 3e300)];
        let b = iq_to_le_bytes(&v);
        assert_eq!(b.len(), 32);
        assert_eq!(&b[..8], &1.5f64.to_le_bytes());
        assert_eq!(iq_from_le_bytes(&b).unwrap(), v);
        assert!(iq_from_le_bytes(&b[..31]).is_err());
    }

    #[test]
    fn imaging_run_is_deterministic() {
        let s = Scenario::new(Experiment::Imaging(ImagingScenario::nominal("imaging")), vec![9]);
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert!(a.passed());
        assert_eq!(a, b);
        assert!(a.artifacts["angle_range.pgm"].starts_with(b"P5\n"));
        assert!(a.artifacts.contains_key("point_cloud.csv"));
    }

    #[test]
    fn dump_vectors_lengths() {
        let r = dump_vectors(&Numerology::default()).unwrap();
        assert_eq!(r.artifacts["rach_preamble0.iq"].len(), 2192 * 16);
        let symbols = ResourceGrid::slot_group(&Numerology::default()).n_symbols;
        assert_eq!(r.artifacts["ssb_slot_group.iq"].len(), symbols * 1096 * 16);
    }

    #[test]
    fn custom_numerology_only_for_imaging() {
        let mut s = Scenario::new(Experiment::Netsense(NetsenseExperiment { scenario: None }), vec![1]);
        s.numerology = Some(Numerology::default().with_effective_subcarriers(396).unwrap());
        assert!(s.validate().is_err());
    }
}
