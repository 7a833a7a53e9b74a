use num_complex::Complex64;

use super::ChannelRealization;
use crate::nr_frame::Numerology;
use crate::phased_array::{beam_gain, element_pattern, UpaGeometry};

/// A beam weight vector on an array with a given global boresight.
#[derive(Debug, Clone, Copy)]
pub struct BeamRef<'a> {
    pub weights: &'a [Complex64],
    pub geometry: &'a UpaGeometry,
    pub boresight: f64,
}

impl BeamRef<'_> {
    /// Directional gain toward global azimuth `az`.
    pub fn gain(&self, az: f64) -> Complex64 {
        let local = crate::geometry::wrap_angle(az - self.boresight);
        beam_gain(self.weights, self.geometry, local, 0.0) * element_pattern(local)
    }
}

/// Beamformed channel on every effective subcarrier:
/// `H[k] = sum_p g_p T(aod_p) R(aoa_p) exp(-j 2 pi f_k tau_p)`.
pub fn freq_response(chan: &ChannelRealization, tx: &BeamRef, rx: &BeamRef, num: &Numerology) -> Vec<Complex64> {
    let freqs = num.subcarrier_freqs();
    let mut h = vec![Complex64::new(0.0, 0.0); freqs.len()];
    for p in &chan.paths {
        let g = p.gain * tx.gain(p.aod) * rx.gain(p.aoa);
        if g == Complex64::new(0.0, 0.0) {
            continue;
        }
        accumulate_path(&mut h, &freqs, g, p.delay);
    }
    h
}

/// Add `g exp(-j 2 pi f_k tau)` to every bin, using a phasor recurrence over
/// the uniform frequency grid.
pub(crate) fn accumulate_path(h: &mut [Complex64], freqs: &[f64], g: Complex64, tau: f64) {
    if freqs.is_empty() {
        return;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let step = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    let rot = Complex64::from_polar(1.0, -two_pi * step * tau);
    let mut ph = Complex64::from_polar(1.0, -two_pi * freqs[0] * tau);
    for (k, hk) in h.iter_mut().enumerate() {
        if k % 64 == 0 {
            // re-anchor to bound rounding drift
            ph = Complex64::from_polar(1.0, -two_pi * freqs[k] * tau);
        }
        *hk += g * ph;
        ph *= rot;
    }
}
