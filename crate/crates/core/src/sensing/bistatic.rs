use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_channel::{ArrayPose, ChannelModel, ChannelRealization};
use crate::nr_frame::{CapacityLimits, Numerology, BEAM_DWELL_MS, N_BEAMS, SSB_SUBCARRIERS};
use crate::phased_array::BeamCodebook;
use crate::waveform::{estimate_rsrp, sample_rsrp, SsbBlock};

/// Transmit power and receiver noise, both per resource element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudget {
    pub tx_power_dbm_per_re: f64,
    pub noise_dbm_per_re: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        // 23 dBm over 792 subcarriers; thermal noise in 120 kHz with 7 dB NF
        Self {
            tx_power_dbm_per_re: -6.0,
            noise_dbm_per_re: -116.2,
        }
    }
}

impl LinkBudget {
    pub fn tx_power_mw(&self) -> f64 {
        10f64.powf(self.tx_power_dbm_per_re / 10.0)
    }

    pub fn noise_mw(&self) -> f64 {
        10f64.powf(self.noise_dbm_per_re / 10.0)
    }
}

/// How each RSRP cell is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RsrpMethod {
    /// Draw from the exact distribution of the pilot-averaged estimate.
    #[default]
    Statistical,
    /// Build every SSB resource element, add noise and run the estimator.
    ResourceElements,
}

/// RSRP matrix: rows are UE beams, columns BS beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrpImage {
    /// `values[row][col]`, dBm.
    pub values: Vec<Vec<f64>>,
    pub ue_beam_ids: Vec<usize>,
    pub bs_beam_ids: Vec<usize>,
    /// UE array rotation of each row relative to the UE body frame (rad).
    pub row_orientation: Vec<f64>,
    /// Nominal orientation of a single-sector image.
    pub orientation: f64,
    pub elapsed_ms: u64,
}

impl RsrpImage {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.bs_beam_ids.len()
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut v = f64::NEG_INFINITY;
        for (i, row) in self.values.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if *x > v {
                    v = *x;
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn max_dbm(&self) -> f64 {
        let (i, j) = self.argmax();
        self.values[i][j]
    }
}

/// Everything needed to sweep SSB beams from a BS to a UE.
pub struct BistaticScanner<'a> {
    pub model: &'a ChannelModel,
    pub bs_codebook: &'a BeamCodebook,
    pub ue_codebook: &'a BeamCodebook,
    pub num: &'a Numerology,
    pub link: LinkBudget,
    pub method: RsrpMethod,
    pub cell_id: u32,
    freqs: Vec<f64>,
    /// Number of RSRP resource elements on each SSB subcarrier.
    re_per_sc: Vec<f64>,
    n_re: usize,
}

/// One UE's share of a multi-UE sweep.
pub struct UeScanRequest<'a> {
    pub pose_at: &'a dyn Fn(f64) -> ArrayPose,
    pub candidates: &'a [usize],
    pub orientation: f64,
}

impl<'a> BistaticScanner<'a> {
    pub fn new(
        model: &'a ChannelModel,
        bs_codebook: &'a BeamCodebook,
        ue_codebook: &'a BeamCodebook,
        num: &'a Numerology,
        link: LinkBudget,
    ) -> Result<Self> {
        if num.n_effective_sc < SSB_SUBCARRIERS {
            return Err(Error::Config("band narrower than one SSB".into()));
        }
        let first = (num.n_effective_sc - SSB_SUBCARRIERS) / 2;
        let all = num.subcarrier_freqs();
        let freqs = all[first..first + SSB_SUBCARRIERS].to_vec();
        let mut re_per_sc = vec![0.0; SSB_SUBCARRIERS];
        let subs = SsbBlock::rsrp_subcarriers();
        for k in &subs {
            re_per_sc[*k] += 1.0;
        }
        Ok(Self {
            model,
            bs_codebook,
            ue_codebook,
            num,
            link,
            method: RsrpMethod::Statistical,
            cell_id: 0,
            freqs,
            re_per_sc,
            n_re: subs.len(),
        })
    }

    /// Noiseless pilot energy `sum_re |H|^2` for every (UE beam, BS beam) pair
    /// in `ue_beams`, as a row-major `ue_beams.len() x 64` matrix.
    pub fn pair_energies(&self, chan: &ChannelRealization, bs: &ArrayPose, ue: &ArrayPose, ue_beams: &[usize]) -> Vec<Vec<f64>> {
        let n_bs = self.bs_codebook.len();
        let paths = &chan.paths;
        if paths.is_empty() {
            return vec![vec![0.0; n_bs]; ue_beams.len()];
        }
        let r = self.delay_gram(chan);
        let tx: Vec<Vec<Complex64>> = paths.iter().map(|p| self.bs_codebook.directional_gains(bs.to_local(p.aod))).collect();
        let rx: Vec<Vec<Complex64>> = paths.iter().map(|p| self.ue_codebook.directional_gains(ue.to_local(p.aoa))).collect();
        let np = paths.len();
        let mut c = vec![Complex64::new(0.0, 0.0); np];
        ue_beams
            .iter()
            .map(|&i| {
                (0..n_bs)
                    .map(|j| {
                        for p in 0..np {
                            c[p] = paths[p].gain * tx[p][j] * rx[p][i];
                        }
                        quad_form(&r, &c)
                    })
                    .collect()
            })
            .collect()
    }

    /// Noiseless RSRP in dBm for a pilot energy from `pair_energies`.
    pub fn rsrp_dbm(&self, energy: f64) -> f64 {
        10.0 * (self.link.tx_power_mw() * energy / self.n_re as f64).max(1e-30).log10()
    }

    /// `R[p][q] = sum_k m_k exp(-j 2 pi f_k (tau_p - tau_q))`.
    fn delay_gram(&self, chan: &ChannelRealization) -> Vec<Vec<Complex64>> {
        let np = chan.paths.len();
        let mut r = vec![vec![Complex64::new(0.0, 0.0); np]; np];
        for p in 0..np {
            for q in p..np {
                let dt = chan.paths[p].delay - chan.paths[q].delay;
                let v: Complex64 = self
                    .freqs
                    .iter()
                    .zip(&self.re_per_sc)
                    .filter(|(_, m)| **m > 0.0)
                    .map(|(f, m)| Complex64::from_polar(*m, -2.0 * std::f64::consts::PI * f * dt))
                    .sum();
                r[p][q] = v;
                r[q][p] = v.conj();
            }
        }
        r
    }

    fn measure<R: Rng + ?Sized>(&self, energy: f64, h_at: impl Fn(usize) -> Complex64, bs_beam: usize, rng: &mut R) -> f64 {
        let p = self.link.tx_power_mw();
        let n0 = self.link.noise_mw();
        match self.method {
            RsrpMethod::Statistical => sample_rsrp(p * energy, n0, self.n_re, rng),
            RsrpMethod::ResourceElements => {
                let ssb = SsbBlock::new(self.cell_id, bs_beam);
                let mask = SsbBlock::rsrp_mask();
                let tx = ssb.resource_elements();
                let s = (n0 / 2.0).sqrt();
                let amp = p.sqrt();
                let mut rx = Vec::with_capacity(self.n_re);
                let mut pilots = Vec::with_capacity(self.n_re);
                for (idx, (x, m)) in tx.iter().zip(&mask).enumerate() {
                    if !m {
                        continue;
                    }
                    let k = idx % SSB_SUBCARRIERS;
                    let noise = Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s);
                    rx.push(h_at(k) * x * amp + noise);
                    pilots.push(*x);
                }
                estimate_rsrp(&rx, &pilots).map(|r| r.linear).unwrap_or(0.0)
            }
        }
    }

    /// Sweep `candidates` UE beams against all 64 BS beams. Row `i` is
    /// measured at `t0 + 20 ms * i` with the UE at `pose_at(t)`.
    pub fn scan<R: Rng + ?Sized>(
        &self,
        bs: &ArrayPose,
        pose_at: &dyn Fn(f64) -> ArrayPose,
        candidates: &[usize],
        t0: f64,
        orientation: f64,
        rng: &mut R,
    ) -> Result<RsrpImage> {
        if candidates.is_empty() {
            return Err(Error::Empty("candidate UE beams"));
        }
        if candidates.len() > N_BEAMS {
            return Err(Error::Capacity {
                count: candidates.len(),
                limit: N_BEAMS,
            });
        }
        if let Some(&bad) = candidates.iter().find(|&&b| b >= self.ue_codebook.len()) {
            return Err(Error::OutOfRange(format!("UE beam {bad} not in codebook")));
        }
        let dwell = f64::from(BEAM_DWELL_MS) * 1e-3;
        let mut values = Vec::with_capacity(candidates.len());
        for (row, &ub) in candidates.iter().enumerate() {
            let t = t0 + dwell * row as f64;
            let ue = pose_at(t);
            let chan = self.model.trace_paths(&bs.position, &ue.position, t)?;
            let energies = self.pair_energies(&chan, bs, &ue, &[ub]).remove(0);
            let mut out = Vec::with_capacity(energies.len());
            for (j, e) in energies.into_iter().enumerate() {
                let lin = if self.method == RsrpMethod::ResourceElements {
                    let h = self.ssb_response(&chan, bs, &ue, j, ub);
                    self.measure(e, |k| h[k], j, rng)
                } else {
                    self.measure(e, |_| Complex64::new(0.0, 0.0), j, rng)
                };
                out.push(10.0 * lin.max(1e-30).log10());
            }
            values.push(out);
        }
        Ok(RsrpImage {
            values,
            ue_beam_ids: candidates.to_vec(),
            bs_beam_ids: (0..self.bs_codebook.len()).collect(),
            row_orientation: vec![orientation; candidates.len()],
            orientation,
            elapsed_ms: u64::from(BEAM_DWELL_MS) * candidates.len() as u64,
        })
    }

    /// Sweep several UEs sharing the downlink; each request gets its own image.
    pub fn scan_multi<R: Rng + ?Sized>(
        &self,
        bs: &ArrayPose,
        ues: &[UeScanRequest],
        limits: &CapacityLimits,
        t0: f64,
        rng: &mut R,
    ) -> Result<Vec<RsrpImage>> {
        limits.check_downlink(ues.len())?;
        ues.iter()
            .map(|u| self.scan(bs, u.pose_at, u.candidates, t0, u.orientation, rng))
            .collect()
    }

    /// Beamformed response on the 240 SSB subcarriers.
    fn ssb_response(&self, chan: &ChannelRealization, bs: &ArrayPose, ue: &ArrayPose, bs_beam: usize, ue_beam: usize) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0.0, 0.0); SSB_SUBCARRIERS];
        for p in &chan.paths {
            let g = p.gain
                * self.bs_codebook.directional_gains(bs.to_local(p.aod))[bs_beam]
                * self.ue_codebook.directional_gains(ue.to_local(p.aoa))[ue_beam];
            crate::geo_channel::accumulate_path(&mut h, &self.freqs, g, p.delay);
        }
        h
    }
}

fn quad_form(r: &[Vec<Complex64>], c: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for p in 0..c.len() {
        acc += r[p][p].re * c[p].norm_sqr();
        for q in p + 1..c.len() {
            acc += 2.0 * (c[p] * c[q].conj() * r[p][q]).re;
        }
    }
    acc.max(0.0)
}
