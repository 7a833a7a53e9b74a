use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZC_LEN: usize = 139;
pub const N_PREAMBLES: usize = 64;
/// Cyclic-shift step between consecutive preambles, in sequence samples.
pub const SHIFT_SPACING: usize = ZC_LEN / N_PREAMBLES;
pub const RACH_IFFT_SIZE: usize = 2048;
pub const RACH_CP_LEN: usize = 144;
pub const RACH_SIGNAL_LEN: usize = RACH_IFFT_SIZE + RACH_CP_LEN;
/// Detection threshold relative to the per-sample noise floor.
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 12.0;

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zadoff-Chu sequence `x[n] = exp(-j pi u n (n + 1) / N)` for odd `N`.
pub fn gen_zc(root: u32, len: usize) -> Result<Vec<Complex64>> {
    let n_len = len as u32;
    if root == 0 || root >= n_len || gcd(root, n_len) != 1 {
        return Err(Error::ZcRoot { root, len: n_len });
    }
    let u = u64::from(root);
    let n_len64 = len as u64;
    Ok((0..len as u64)
        .map(|n| {
            // reduce u n (n + 1) modulo 2N before scaling to keep the phase exact
            let k = (u * ((n * (n + 1)) % (2 * n_len64))) % (2 * n_len64);
            Complex64::from_polar(1.0, -std::f64::consts::PI * k as f64 / len as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZcPreamble {
    pub root: u32,
    /// Preamble index 0..63; the sequence is cyclically shifted by `index * SHIFT_SPACING`.
    pub index: usize,
    pub sequence: Vec<Complex64>,
}

impl ZcPreamble {
    pub fn new(root: u32, index: usize) -> Result<Self> {
        if index >= N_PREAMBLES {
            return Err(Error::OutOfRange(format!("preamble index {index}")));
        }
        let base = gen_zc(root, ZC_LEN)?;
        Ok(Self::from_base(root, index, &base))
    }

    fn from_base(root: u32, index: usize, base: &[Complex64]) -> Self {
        let shift = index * SHIFT_SPACING;
        let sequence = (0..ZC_LEN).map(|n| base[(n + shift) % ZC_LEN]).collect();
        Self {
            root,
            index,
            sequence,
        }
    }

    pub fn cyclic_shift(&self) -> usize {
        self.index * SHIFT_SPACING
    }

    pub fn time_signal(&self) -> Vec<Complex64> {
        build_rach_signal(self)
    }
}

/// Signed baseband offset of spectrum entry `m` in the 2048-point grid.
fn rach_bin(m: usize) -> usize {
    let k = m as i64 - (ZC_LEN / 2) as i64;
    k.rem_euclid(RACH_IFFT_SIZE as i64) as usize
}

fn unitary_dft(x: &[Complex64], fft: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    fft.process(&mut buf);
    let s = 1.0 / (x.len() as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

/// DFT the sequence, zero-pad into a 2048-point inverse transform and prepend
/// a 144-sample cyclic prefix. The body has unit mean power.
pub fn build_rach_signal(pre: &ZcPreamble) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let dft = planner.plan_fft_forward(ZC_LEN);
    let ifft = planner.plan_fft_inverse(RACH_IFFT_SIZE);
    let spectrum = unitary_dft(&pre.sequence, &dft);
    let mut body = vec![Complex64::new(0.0, 0.0); RACH_IFFT_SIZE];
    for (m, v) in spectrum.iter().enumerate() {
        body[rach_bin(m)] = *v;
    }
    ifft.process(&mut body);
    let s = 1.0 / (ZC_LEN as f64).sqrt();
    body.iter_mut().for_each(|v| *v *= s);
    let mut out = Vec::with_capacity(RACH_SIGNAL_LEN);
    out.extend_from_slice(&body[RACH_IFFT_SIZE - RACH_CP_LEN..]);
    out.extend_from_slice(&body);
    out
}

#[derive(Debug, Clone)]
pub struct PreambleBank {
    pub root: u32,
    pub preambles: Vec<ZcPreamble>,
}

impl PreambleBank {
    pub fn new(root: u32) -> Result<Self> {
        let base = gen_zc(root, ZC_LEN)?;
        let preambles = (0..N_PREAMBLES)
            .map(|i| ZcPreamble::from_base(root, i, &base))
            .collect();
        Ok(Self { root, preambles })
    }

    pub fn base(&self) -> &[Complex64] {
        &self.preambles[0].sequence
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub preamble_index: usize,
    /// Correlation lag inside the preamble's shift window, in sequence samples.
    pub timing_offset: usize,
    /// Peak |correlation|^2 / N, in units of per-sample noise power.
    pub peak_metric: f64,
}

/// Frequency-domain PRACH receiver. Owns its FFT plans and work buffers.
pub struct PreambleDetector {
    base: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    idft: Arc<dyn Fft<f64>>,
    work: Vec<Complex64>,
    pub threshold: f64,
}

impl PreambleDetector {
    pub fn new(bank: &PreambleBank) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            base: bank.base().to_vec(),
            fft: planner.plan_fft_forward(RACH_IFFT_SIZE),
            idft: planner.plan_fft_inverse(ZC_LEN),
            work: vec![Complex64::new(0.0, 0.0); RACH_IFFT_SIZE],
            threshold: DEFAULT_DETECTION_THRESHOLD,
        }
    }

    /// Correlation magnitude profile `|r[l]|^2 / N` over all 139 lags.
    pub fn correlation_profile(&mut self, rx: &[Complex64]) -> Result<Vec<f64>> {
        if rx.len() < RACH_SIGNAL_LEN {
            return Err(Error::OutOfRange(format!(
                "rx has {} samples, need {RACH_SIGNAL_LEN}",
                rx.len()
            )));
        }
        self.work
            .copy_from_slice(&rx[RACH_CP_LEN..RACH_CP_LEN + RACH_IFFT_SIZE]);
        self.fft.process(&mut self.work);
        let s = 1.0 / (RACH_IFFT_SIZE as f64).sqrt();
        let mut zc: Vec<Complex64> = (0..ZC_LEN).map(|m| self.work[rach_bin(m)] * s).collect();
        self.idft.process(&mut zc);
        let s = 1.0 / (ZC_LEN as f64).sqrt();
        zc.iter_mut().for_each(|v| *v *= s);
        Ok((0..ZC_LEN)
            .map(|lag| {
                let r: Complex64 = zc
                    .iter()
                    .enumerate()
                    .map(|(n, y)| y * self.base[(n + lag) % ZC_LEN].conj())
                    .sum();
                r.norm_sqr() / ZC_LEN as f64
            })
            .collect())
    }

    /// Best preamble over the bank, or `None` if no window beats
    /// `threshold * noise_floor`.
    pub fn detect(&mut self, rx: &[Complex64], noise_floor: f64) -> Result<Option<Detection>> {
        let profile = self.correlation_profile(rx)?;
        let mut best: Option<Detection> = None;
        for index in 0..N_PREAMBLES {
            let shift = index * SHIFT_SPACING;
            for delay in 0..SHIFT_SPACING {
                let lag = (shift + ZC_LEN - delay) % ZC_LEN;
                let metric = profile[lag];
                if best.is_none_or(|b| metric > b.peak_metric) {
                    best = Some(Detection {
                        preamble_index: index,
                        timing_offset: delay,
                        peak_metric: metric,
                    });
                }
            }
        }
        Ok(best.filter(|b| b.peak_metric > self.threshold * noise_floor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Brute-force circular correlation, independent of the FFT path.
    fn circ_corr(a: &[Complex64], b: &[Complex64], lag: usize) -> Complex64 {
        let n = a.len();
        (0..n).map(|i| a[i] * b[(i + lag) % n].conj()).sum()
    }

    #[test]
    fn zc_first_sample_and_modulus() {
        let x = gen_zc(1, ZC_LEN).unwrap();
        assert!((x[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for root in [1, 25, 34, 138] {
            for v in gen_zc(root, ZC_LEN).unwrap() {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zc_ideal_autocorrelation() {
        let x = gen_zc(1, ZC_LEN).unwrap();
        assert!(circ_corr(&x, &x, 7).norm() < 1e-9 * ZC_LEN as f64);
        for lag in 1..ZC_LEN {
            assert!(circ_corr(&x, &x, lag).norm() < 1e-9 * ZC_LEN as f64, "lag {lag}");
        }
    }

    #[test]
    fn zc_rejects_bad_roots() {
        assert!(gen_zc(0, ZC_LEN).is_err());
        assert!(gen_zc(139, ZC_LEN).is_err());
        assert!(gen_zc(3, 9).is_err());
        assert!(gen_zc(2, 9).is_ok());
    }

    #[test]
    fn bank_shifts_are_orthogonal() {
        let bank = PreambleBank::new(1).unwrap();
        let peak = circ_corr(&bank.preambles[0].sequence, &bank.preambles[0].sequence, 0).norm();
        for i in 0..N_PREAMBLES {
            for j in (i + 1)..N_PREAMBLES {
                let c = circ_corr(&bank.preambles[i].sequence, &bank.preambles[j].sequence, 0);
                assert!(c.norm() <= 1e-9 * peak);
            }
        }
    }

    #[test]
    fn rach_signal_length() {
        let pre = ZcPreamble::new(1, 5).unwrap();
        let s = build_rach_signal(&pre);
        assert_eq!(s.len(), 2192);
        assert!(s.len() < 3 * (1024 + 72));
        // cyclic prefix copies the tail of the body
        for i in 0..RACH_CP_LEN {
            assert!((s[i] - s[RACH_IFFT_SIZE + i]).norm() < 1e-12);
        }
        let p: f64 = s[RACH_CP_LEN..].iter().map(|v| v.norm_sqr()).sum::<f64>() / 2048.0;
        assert!((p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shifted_preamble_correlation_peak_tracks_shift() {
        let bank = PreambleBank::new(1).unwrap();
        let s0 = build_rach_signal(&bank.preambles[0]);
        let body0 = &s0[RACH_CP_LEN..];
        for k in [1usize, 3, 10] {
            let sk = build_rach_signal(&bank.preambles[k]);
            let bodyk = &sk[RACH_CP_LEN..];
            let (best, _) = (0..RACH_IFFT_SIZE)
                .map(|lag| (lag, circ_corr(bodyk, body0, lag).norm()))
                .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            // shift of k*2 sequence samples = k*2*2048/139 output samples
            let expected = k as f64 * SHIFT_SPACING as f64 * RACH_IFFT_SIZE as f64 / ZC_LEN as f64;
            let diff = (best as f64 - expected).abs();
            assert!(diff <= 1.0, "k={k}: peak at {best}, expected {expected}");
        }
    }

    #[test]
    fn clean_detection() {
        let bank = PreambleBank::new(1).unwrap();
        let mut det = PreambleDetector::new(&bank);
        let rx = build_rach_signal(&bank.preambles[13]);
        let d = det.detect(&rx, 1.0).unwrap().unwrap();
        assert_eq!(d.preamble_index, 13);
        assert_eq!(d.timing_offset, 0);
        assert!((d.peak_metric - 2048.0).abs() < 1e-6);
    }

    #[test]
    fn detection_ignores_global_phase() {
        let bank = PreambleBank::new(1).unwrap();
        let mut det = PreambleDetector::new(&bank);
        let rot = Complex64::from_polar(1.0, 2.1);
        let rx: Vec<_> = build_rach_signal(&bank.preambles[40])
            .into_iter()
            .map(|v| v * rot)
            .collect();
        assert_eq!(det.detect(&rx, 1.0).unwrap().unwrap().preamble_index, 40);
    }

    #[test]
    fn zero_input_is_not_detected() {
        let bank = PreambleBank::new(1).unwrap();
        let mut det = PreambleDetector::new(&bank);
        let rx = vec![Complex64::new(0.0, 0.0); RACH_SIGNAL_LEN];
        assert!(det.detect(&rx, 0.0).unwrap().is_none());
        assert!(det.detect(&rx[..100], 1.0).is_err());
    }

    #[test]
    fn noisy_detection_smoke() {
        let bank = PreambleBank::new(1).unwrap();
        let mut det = PreambleDetector::new(&bank);
        let mut rng = SeedTree::new(3).stream("rach");
        let tx = build_rach_signal(&bank.preambles[7]);
        let mut hits = 0;
        for _ in 0..50 {
            let rx: Vec<Complex64> = tx
                .iter()
                .map(|s| {
                    let n = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                    s + n * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect();
            if det.detect(&rx, 1.0).unwrap().map(|d| d.preamble_index) == Some(7) {
                hits += 1;
            }
        }
        assert_eq!(hits, 50);
    }
}
