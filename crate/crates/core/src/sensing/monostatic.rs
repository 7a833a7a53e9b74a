use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geo_channel::{freq_response, ArrayPose, BeamRef, ChannelModel, EnvironmentMap};
use crate::geometry::SPEED_OF_LIGHT;
use crate::nr_frame::Numerology;
use crate::phased_array::BeamCodebook;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonostaticConfig {
    pub tx_power_dbm_per_re: f64,
    pub noise_dbm_per_re: f64,
    /// Echoes closer than this are gated out by self-interference filtering.
    pub min_range_m: f64,
    /// Point-cloud threshold above the median PDP power.
    pub peak_threshold_db: f64,
    /// Apply a Hann taper across the band before the inverse transform.
    pub hann: bool,
}

impl Default for MonostaticConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm_per_re: -6.0,
            noise_dbm_per_re: -116.2,
            min_range_m: 1.0,
            peak_threshold_db: 10.0,
            hann: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub beam_index: usize,
    pub power: Vec<f64>,
    pub bin_spacing: f64,
}

impl PowerDelayProfile {
    /// Two-way range per delay bin.
    pub fn range_per_bin(&self) -> f64 {
        SPEED_OF_LIGHT * self.bin_spacing / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub beam: usize,
    /// Global azimuth (rad).
    pub az: f64,
    pub range: f64,
    pub power_db: f64,
}

/// Per-beam channel impulse responses and their power, beams in codebook order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRangeImage {
    /// Global azimuth of each beam.
    pub beam_az: Vec<f64>,
    pub cir: Vec<Vec<Complex64>>,
    pub bin_spacing: f64,
    /// Set once the calibration profile has been subtracted.
    pub calibrated: bool,
}

impl AngleRangeImage {
    pub fn n_beams(&self) -> usize {
        self.cir.len()
    }

    pub fn n_bins(&self) -> usize {
        self.cir.first().map_or(0, Vec::len)
    }

    pub fn range_per_bin(&self) -> f64 {
        SPEED_OF_LIGHT * self.bin_spacing / 2.0
    }

    pub fn power(&self) -> Vec<Vec<f64>> {
        self.cir.iter().map(|c| c.iter().map(|x| x.norm_sqr()).collect()).collect()
    }

    pub fn pdp(&self, beam: usize) -> PowerDelayProfile {
        PowerDelayProfile {
            beam_index: beam,
            power: self.cir[beam].iter().map(|x| x.norm_sqr()).collect(),
            bin_spacing: self.bin_spacing,
        }
    }

    /// One entry per beam whose PDP peak exceeds the median by `threshold_db`.
    pub fn point_cloud(&self, threshold_db: f64) -> Vec<CloudPoint> {
        let mut out = Vec::new();
        for b in 0..self.n_beams() {
            let pdp = self.pdp(b);
            let floor = median(&pdp.power) * 10f64.powf(threshold_db / 10.0);
            let (k, peak) = argmax(&pdp.power);
            if peak <= 0.0 || peak <= floor {
                continue;
            }
            if let Some(range) = estimate_range(&pdp, floor) {
                out.push(CloudPoint {
                    beam: b,
                    az: self.beam_az[b],
                    range,
                    power_db: 10.0 * pdp.power[k].log10(),
                });
            }
        }
        out
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

/// Range of the strongest PDP bin, refined by a 3-point parabola on power.
/// `None` if no bin exceeds `threshold`.
pub fn estimate_range(pdp: &PowerDelayProfile, threshold: f64) -> Option<f64> {
    let (k, peak) = argmax(&pdp.power);
    if !(peak > threshold) {
        return None;
    }
    let n = pdp.power.len();
    let off = if k > 0 && k + 1 < n {
        super::parabolic_offset(pdp.power[k - 1], peak, pdp.power[k + 1])
    } else {
        0.0
    };
    Some((k as f64 + off) * pdp.range_per_bin())
}

/// -3 dB width of the mainlobe around the PDP maximum, in seconds, with linear
/// interpolation between bins.
pub fn mainlobe_width(pdp: &PowerDelayProfile) -> f64 {
    let (k, peak) = argmax(&pdp.power);
    let half = peak / 2.0;
    let p = &pdp.power;
    let n = p.len();
    let at = |i: isize| p[i.rem_euclid(n as isize) as usize];
    let edge = |dir: isize| {
        let mut i = k as isize;
        while at(i + dir) > half && (i - k as isize).unsigned_abs() < n / 2 {
            i += dir;
        }
        let (a, b) = (at(i), at(i + dir));
        (i - k as isize) as f64 + dir as f64 * (a - half) / (a - b)
    };
    (edge(1) - edge(-1)) * pdp.bin_spacing
}

/// Turns per-subcarrier responses into impulse responses on a (possibly
/// oversampled) delay grid.
pub struct CirTransform {
    num: Numerology,
    oversample: usize,
    ifft: Arc<dyn Fft<f64>>,
    taper: Vec<f64>,
}

impl CirTransform {
    pub fn new(num: &Numerology, oversample: usize, hann: bool) -> Self {
        let n = num.fft_size * oversample.max(1);
        let k = num.n_effective_sc;
        let taper = (0..k)
            .map(|i| {
                if hann {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / k as f64).cos()
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            num: num.clone(),
            oversample: oversample.max(1),
            ifft: FftPlanner::new().plan_fft_inverse(n),
            taper,
        }
    }

    pub fn bin_spacing(&self) -> f64 {
        1.0 / (self.num.sample_rate_hz * self.oversample as f64)
    }

    /// `cir[n] = (1/K) sum_k w_k H_k exp(j 2 pi f_k n dt)`; a single path on a
    /// bin centre appears with its full complex gain.
    pub fn apply(&self, h: &[Complex64]) -> Vec<Complex64> {
        let n = self.num.fft_size * self.oversample;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, v) in h.iter().enumerate() {
            let bin = self.num.subcarrier_offset(i).rem_euclid(n as i64) as usize;
            buf[bin] = v * self.taper[i];
        }
        self.ifft.process(&mut buf);
        let norm: f64 = self.taper.iter().sum();
        for x in &mut buf {
            *x /= norm;
        }
        buf
    }
}

/// Sweeps the monostatic codebook: TX and RX use the same beam each dwell.
pub struct MonostaticScanner<'a> {
    pub model: &'a ChannelModel,
    pub codebook: &'a BeamCodebook,
    pub num: &'a Numerology,
    pub cfg: MonostaticConfig,
    transform: CirTransform,
}

impl<'a> MonostaticScanner<'a> {
    pub fn new(model: &'a ChannelModel, codebook: &'a BeamCodebook, num: &'a Numerology, cfg: MonostaticConfig) -> Self {
        Self {
            model,
            codebook,
            num,
            cfg,
            transform: CirTransform::new(num, 1, cfg.hann),
        }
    }

    /// Noiseless beamformed frequency response of beam `b`.
    pub fn beam_response(&self, node: &ArrayPose, b: usize, t: f64) -> Vec<Complex64> {
        let beam = &self.codebook.beams[b];
        let chan = self.model.monostatic_channel(node, node.to_global(beam.az), t);
        let r = BeamRef {
            weights: &beam.weights,
            geometry: &self.codebook.geometry,
            boresight: node.boresight,
        };
        let amp = 10f64.powf(self.cfg.tx_power_dbm_per_re / 20.0);
        freq_response(&chan, &r, &r, self.num).into_iter().map(|x| x * amp).collect()
    }

    /// One sweep over all beams at time `t`.
    pub fn scan<R: Rng + ?Sized>(&self, node: &ArrayPose, t: f64, rng: &mut R) -> AngleRangeImage {
        let s = (10f64.powf(self.cfg.noise_dbm_per_re / 10.0) / 2.0).sqrt();
        let cir = (0..self.codebook.len())
            .map(|b| {
                let mut h = self.beam_response(node, b, t);
                if s > 0.0 {
                    for x in &mut h {
                        *x += Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s);
                    }
                }
                self.transform.apply(&h)
            })
            .collect();
        AngleRangeImage {
            beam_az: self.codebook.beams.iter().map(|b| node.to_global(b.az)).collect(),
            cir,
            bin_spacing: self.transform.bin_spacing(),
            calibrated: false,
        }
    }

    /// Noiseless sweep of the node alone (empty map): the static leakage profile.
    pub fn calibration(&self, node: &ArrayPose) -> AngleRangeImage {
        let empty = ChannelModel {
            env: EnvironmentMap::empty(self.model.env.bounds),
            ..self.model.clone()
        };
        let scanner = MonostaticScanner::new(&empty, self.codebook, self.num, MonostaticConfig {
            noise_dbm_per_re: f64::NEG_INFINITY,
            ..self.cfg
        });
        scanner.scan(node, 0.0, &mut crate::rng::SeedTree::new(0).stream("calibration"))
    }
}

/// Subtract the calibration profile (once) and zero every bin closer than `min_range`.
pub fn filter_self_interference(img: &AngleRangeImage, calibration: &AngleRangeImage, min_range: f64) -> Result<AngleRangeImage> {
    if min_range < 0.0 || !min_range.is_finite() {
        return Err(crate::Error::OutOfRange(format!("min_range {min_range} must be >= 0")));
    }
    if calibration.n_beams() != img.n_beams() || calibration.n_bins() != img.n_bins() {
        return Err(crate::Error::OutOfRange("calibration shape differs from image".into()));
    }
    let mut out = img.clone();
    if !out.calibrated {
        for (c, k) in out.cir.iter_mut().zip(&calibration.cir) {
            for (x, y) in c.iter_mut().zip(k) {
                *x -= y;
            }
        }
        out.calibrated = true;
    }
    let gate = (min_range / out.range_per_bin()).ceil() as usize;
    for c in &mut out.cir {
        for x in c.iter_mut().take(gate) {
            *x = Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}
