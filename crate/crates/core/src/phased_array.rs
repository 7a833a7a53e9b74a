//! Uniform planar array response and the 64-beam sweep codebook.
//!
//! Angles are in radians in the array's local frame: azimuth is measured from
//! boresight in the horizontal plane, elevation from the horizontal plane.
//! Element `(p, q)` sits in row `p` (vertical) and column `q` (horizontal) and
//! is stored at index `p * n_cols + q`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nr_frame::N_BEAMS;

/// Maximum scan angle of the codebook.
pub const MAX_SCAN_RAD: f64 = PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpaGeometry {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub carrier_hz: f64,
}

impl Default for UpaGeometry {
    fn default() -> Self {
        Self {
            n_rows: 8,
            n_cols: 8,
            element_spacing: 0.5,
            carrier_hz: 28e9,
        }
    }
}

impl UpaGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 || self.element_spacing <= 0.0 {
            return Err(Error::Config(format!("invalid array geometry {self:?}")));
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Sine-space offset between a beam and its first null.
    pub fn null_offset_sine(&self) -> f64 {
        1.0 / (self.n_cols as f64 * self.element_spacing)
    }
}

/// `a[p, q] = exp(j 2 pi d (p sin(el) + q cos(el) sin(az)))`.
pub fn steering_vector(geom: &UpaGeometry, az: f64, el: f64) -> Vec<Complex64> {
    let k = 2.0 * PI * geom.element_spacing;
    let v = el.sin();
    let u = el.cos() * az.sin();
    let mut out = Vec::with_capacity(geom.n_elements());
    for p in 0..geom.n_rows {
        for q in 0..geom.n_cols {
            out.push(Complex64::from_polar(1.0, k * (p as f64 * v + q as f64 * u)));
        }
    }
    out
}

/// Array factor `w^H a(az, el)`; conjugate-linear in the weights.
pub fn beam_gain(weights: &[Complex64], geom: &UpaGeometry, az: f64, el: f64) -> Complex64 {
    weights
        .iter()
        .zip(steering_vector(geom, az, el))
        .map(|(w, a)| w.conj() * a)
        .sum()
}

/// Element amplitude pattern: flat to +-60 degrees, cosine roll-off to zero at
/// +-90 degrees, nothing behind the panel.
pub fn element_pattern(az: f64) -> f64 {
    let a = az.abs();
    if a <= MAX_SCAN_RAD {
        1.0
    } else if a < FRAC_PI_2 {
        ((a - MAX_SCAN_RAD) * 3.0).cos()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beam {
    pub index: usize,
    pub az: f64,
    pub el: f64,
    /// Sine-space pointing coordinate `cos(el) sin(az)`.
    pub u: f64,
    pub weights: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamCodebook {
    pub geometry: UpaGeometry,
    pub beams: Vec<Beam>,
}

/// 64 horizontal beams on a uniform sine-space grid spanning sin(+-60 deg),
/// ordered by increasing azimuth. Weights are the unit-norm steering vector of
/// each pointing direction.
pub fn build_codebook(geom: &UpaGeometry) -> BeamCodebook {
    let u_max = MAX_SCAN_RAD.sin();
    let step = 2.0 * u_max / (N_BEAMS - 1) as f64;
    let norm = (geom.n_elements() as f64).sqrt();
    let beams = (0..N_BEAMS)
        .map(|index| {
            let u = (-u_max + step * index as f64).clamp(-u_max, u_max);
            let az = u.asin();
            let weights = steering_vector(geom, az, 0.0)
                .into_iter()
                .map(|a| a / norm)
                .collect();
            Beam {
                index,
                az,
                el: 0.0,
                u,
                weights,
            }
        })
        .collect();
    BeamCodebook {
        geometry: *geom,
        beams,
    }
}

impl BeamCodebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn sine_step(&self) -> f64 {
        self.beams[1].u - self.beams[0].u
    }

    /// Array factors of every beam toward a horizontal direction, via the
    /// closed-form geometric series (equal to `beam_gain` at `el = 0`).
    pub fn gains_at(&self, az: f64) -> Vec<Complex64> {
        let g = &self.geometry;
        let u = az.sin();
        let row_gain = g.n_rows as f64 / (g.n_elements() as f64).sqrt();
        let n = g.n_cols as f64;
        self.beams
            .iter()
            .map(|b| {
                let phi = 2.0 * PI * g.element_spacing * (u - b.u);
                let z = Complex64::from_polar(1.0, phi);
                let denom = Complex64::new(1.0, 0.0) - z;
                let sum = if denom.norm() < 1e-12 {
                    Complex64::new(n, 0.0)
                } else {
                    (Complex64::new(1.0, 0.0) - z.powf(n)) / denom
                };
                sum * row_gain
            })
            .collect()
    }

    /// Array factor times element pattern for every beam.
    pub fn directional_gains(&self, az: f64) -> Vec<Complex64> {
        let e = element_pattern(az);
        self.gains_at(az).into_iter().map(|g| g * e).collect()
    }

    /// Index of the beam whose pointing is closest in sine space.
    pub fn nearest_beam(&self, az: f64) -> usize {
        let u = az.sin();
        let step = self.sine_step();
        let i = ((u - self.beams[0].u) / step).round();
        i.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    /// Half-power width of beam `index` in sine space, found numerically.
    pub fn half_power_width_sine(&self, index: usize) -> f64 {
        let b = &self.beams[index];
        let peak = beam_gain(&b.weights, &self.geometry, b.az, 0.0).norm_sqr();
        let edge = |dir: f64| {
            let (mut lo, mut hi) = (0.0, self.geometry.null_offset_sine());
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let u = (b.u + dir * mid).clamp(-1.0, 1.0);
                let p = beam_gain(&b.weights, &self.geometry, u.asin(), 0.0).norm_sqr();
                if p > 0.5 * peak {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        edge(1.0) + edge(-1.0)
    }

    /// Half-power width of beam `index` in azimuth radians.
    pub fn half_power_width_rad(&self, index: usize) -> f64 {
        let b = &self.beams[index];
        let hw = 0.5 * self.half_power_width_sine(index);
        (b.u + hw).clamp(-1.0, 1.0).asin() - (b.u - hw).clamp(-1.0, 1.0).asin()
    }

    /// `index,az_deg,el_deg,w0_re,w0_im,...` with one row per beam.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,az_deg,el_deg");
        for i in 0..self.geometry.n_elements() {
            let _ = write!(s, ",w{i}_re,w{i}_im");
        }
        s.push('\n');
        for b in &self.beams {
            let _ = write!(s, "{},{:.6},{:.6}", b.index, b.az.to_degrees(), b.el.to_degrees());
            for w in &b.weights {
                let _ = write!(s, ",{:.12e},{:.12e}", w.re, w.im);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cb() -> BeamCodebook {
        build_codebook(&UpaGeometry::default())
    }

    #[test]
    fn boresight_steering_is_all_ones() {
        for a in steering_vector(&UpaGeometry::default(), 0.0, 0.0) {
            assert_abs_diff_eq!(a.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn column_phase_increment_at_30_degrees() {
        let a = steering_vector(&UpaGeometry::default(), 30f64.to_radians(), 0.0);
        let step = (a[1] * a[0].conj()).arg();
        assert_abs_diff_eq!(step, PI / 2.0, epsilon = 1e-12);
        assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn azimuth_mirror_is_conjugate() {
        let g = UpaGeometry::default();
        let el = 0.2;
        let pos = steering_vector(&g, 0.4, el);
        let neg = steering_vector(&g, -0.4, el);
        // split off the elevation factor of each element
        for p in 0..g.n_rows {
            for q in 0..g.n_cols {
                let i = p * g.n_cols + q;
                let elev = Complex64::from_polar(1.0, PI * p as f64 * el.sin());
                let az_pos = pos[i] / elev;
                let az_neg = neg[i] / elev;
                assert!((az_neg - az_pos.conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn codebook_shape() {
        let cb = cb();
        assert_eq!(cb.len(), 64);
        for (i, b) in cb.beams.iter().enumerate() {
            assert_eq!(b.index, i);
            assert!(b.az.abs() <= MAX_SCAN_RAD + 1e-12);
            assert!(b.el.abs() <= MAX_SCAN_RAD);
            let n: f64 = b.weights.iter().map(|w| w.norm_sqr()).sum();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        }
        assert!(cb.beams.windows(2).all(|w| w[1].az > w[0].az));
        assert_abs_diff_eq!(cb.beams[0].az, -MAX_SCAN_RAD, epsilon = 1e-12);
        assert_abs_diff_eq!(cb.beams[63].az, MAX_SCAN_RAD, epsilon = 1e-12);
    }

    #[test]
    fn each_beam_wins_its_own_direction() {
        let cb = cb();
        for b in &cb.beams {
            let best = cb
                .beams
                .iter()
                .map(|o| beam_gain(&o.weights, &cb.geometry, b.az, 0.0).norm_sqr())
                .enumerate()
                .fold((0, 0.0), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
            assert_eq!(best.0, b.index);
            assert_abs_diff_eq!(best.1, 64.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn dft_neighbour_is_a_null() {
        let cb = cb();
        let off = cb.geometry.null_offset_sine();
        for b in &cb.beams {
            for u in [b.u + off, b.u - off] {
                if u.abs() <= 1.0 {
                    let g = beam_gain(&b.weights, &cb.geometry, u.asin(), 0.0);
                    assert!(g.norm() < 1e-9, "beam {} at u={u}: {}", b.index, g.norm());
                }
            }
        }
    }

    #[test]
    fn gain_is_conjugate_linear() {
        let g = UpaGeometry::default();
        let cb = cb();
        let c = Complex64::new(0.3, -1.2);
        let w1 = &cb.beams[5].weights;
        let w2 = &cb.beams[40].weights;
        let combo: Vec<_> = w1.iter().zip(w2).map(|(a, b)| a * c + b).collect();
        let lhs = beam_gain(&combo, &g, 0.3, 0.1);
        let rhs = c.conj() * beam_gain(w1, &g, 0.3, 0.1) + beam_gain(w2, &g, 0.3, 0.1);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn closed_form_matches_inner_product() {
        let cb = cb();
        for az_deg in [-75.0f64, -59.0, -12.3, 0.0, 0.7, 33.0, 60.0] {
            let az = az_deg.to_radians();
            let fast = cb.gains_at(az);
            for (b, f) in cb.beams.iter().zip(&fast) {
                let slow = beam_gain(&b.weights, &cb.geometry, az, 0.0);
                assert!((slow - f).norm() < 1e-9, "az {az_deg} beam {}", b.index);
            }
        }
    }

    #[test]
    fn beamwidths() {
        let cb = cb();
        let g = cb.geometry;
        // null-to-null width is 2 / (N d) in sine space
        assert_abs_diff_eq!(2.0 * g.null_offset_sine(), 0.5, epsilon = 1e-12);
        let hpbw_ref = 0.886 * g.null_offset_sine();
        for i in [0, 20, 31, 32, 63] {
            let w = cb.half_power_width_sine(i);
            if cb.beams[i].u.abs() + w < 1.0 {
                assert!((w - hpbw_ref).abs() <= 0.2 * hpbw_ref, "beam {i}: {w}");
            }
        }
        let centre = cb.half_power_width_rad(32);
        let edge = cb.half_power_width_rad(62);
        assert!(centre < edge, "{centre} vs {edge}");
    }

    #[test]
    fn element_pattern_rolls_off() {
        assert_eq!(element_pattern(0.0), 1.0);
        assert_eq!(element_pattern(MAX_SCAN_RAD), 1.0);
        assert!(element_pattern(75f64.to_radians()) < 1.0);
        assert!(element_pattern(89.9f64.to_radians()) < 0.01);
        assert_eq!(element_pattern(2.0), 0.0);
    }

    #[test]
    fn nearest_beam_round_trips() {
        let cb = cb();
        for b in &cb.beams {
            assert_eq!(cb.nearest_beam(b.az), b.index);
        }
        assert_eq!(cb.nearest_beam(-1.5), 0);
        assert_eq!(cb.nearest_beam(1.5), 63);
    }

    #[test]
    fn csv_has_one_row_per_beam() {
        let csv = cb().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 65);
        assert_eq!(lines[0].split(',').count(), 3 + 128);
        assert!(lines[1].starts_with("0,-60.000000,0.000000,"));
    }
}
