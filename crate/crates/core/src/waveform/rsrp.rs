use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rsrp {
    /// Mean received pilot power, mW.
    pub linear: f64,
    pub dbm: f64,
}

impl Rsrp {
    pub fn from_linear(linear: f64) -> Self {
        Self {
            linear,
            dbm: 10.0 * linear.log10(),
        }
    }
}

/// Mean of `|rx|^2 / |tx|^2` over the pilot REs (`tx != 0`).
pub fn estimate_rsrp(rx: &[Complex64], tx_pilots: &[Complex64]) -> Result<Rsrp> {
    if rx.len() != tx_pilots.len() {
        return Err(Error::OutOfRange(format!(
            "rx has {} REs but pilots have {}",
            rx.len(),
            tx_pilots.len()
        )));
    }
    let (sum, n) = rx
        .iter()
        .zip(tx_pilots)
        .filter(|(_, t)| t.norm_sqr() > 0.0)
        .fold((0.0, 0usize), |(s, n), (r, t)| (s + (r * t.conj() / t.norm_sqr()).norm_sqr(), n + 1));
    if n == 0 {
        return Err(Error::Empty("pilot set"));
    }
    Ok(Rsrp::from_linear(sum / n as f64))
}

/// Draw the RSRP estimate over `n_re` unit-modulus pilots whose noiseless
/// received powers sum to `signal_energy`, with complex AWGN of variance
/// `noise_var` per RE.
///
/// Exact in distribution: rotating the noise onto the signal direction gives
/// `n_re * RSRP = (sqrt(E) + A)^2 + Q` with `A ~ N(0, s2/2)` and
/// `Q ~ Gamma((2 n_re - 1) / 2, s2)` independent.
pub fn sample_rsrp<R: Rng + ?Sized>(signal_energy: f64, noise_var: f64, n_re: usize, rng: &mut R) -> f64 {
    let k = n_re as f64;
    if noise_var <= 0.0 {
        return signal_energy / k;
    }
    let a = Normal::new(0.0, (noise_var / 2.0).sqrt()).unwrap().sample(rng);
    let q = Gamma::new((2.0 * k - 1.0) / 2.0, noise_var).unwrap().sample(rng);
    ((signal_energy.sqrt() + a).powi(2) + q) / k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use crate::waveform::SsbBlock;
    use rand_distr::StandardNormal;

    fn cn<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
        let s = (var / 2.0).sqrt();
        Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
    }

    fn pilots() -> Vec<Complex64> {
        let ssb = SsbBlock::new(0, 0);
        ssb.resource_elements()
            .into_iter()
            .zip(SsbBlock::rsrp_mask())
            .map(|(v, m)| if m { v } else { Complex64::new(0.0, 0.0) })
            .collect()
    }

    #[test]
    fn flat_gain() {
        let tx = pilots();
        let rx: Vec<_> = tx.iter().map(|v| v * 0.5).collect();
        let r = estimate_rsrp(&rx, &tx).unwrap();
        assert!((r.linear - 0.25).abs() < 1e-12);
        let zero = vec![Complex64::new(0.0, 0.0); tx.len()];
        assert_eq!(estimate_rsrp(&zero, &tx).unwrap().linear, 0.0);
    }

    #[test]
    fn empty_pilots_error() {
        let z = vec![Complex64::new(0.0, 0.0); 4];
        assert!(matches!(estimate_rsrp(&z, &z), Err(Error::Empty(_))));
    }

    #[test]
    fn scale_equivariance() {
        let tx = pilots();
        let mut rng = SeedTree::new(4).stream("n");
        let rx: Vec<_> = tx.iter().map(|v| v * 0.3 + cn(&mut rng, 0.01)).collect();
        let c = Complex64::new(1.5, -2.0);
        let rx2: Vec<_> = rx.iter().map(|v| v * c).collect();
        let a = estimate_rsrp(&rx, &tx).unwrap().linear;
        let b = estimate_rsrp(&rx2, &tx).unwrap().linear;
        assert!((b - a * c.norm_sqr()).abs() < 1e-12 * b);
    }

    #[test]
    fn noisy_mean_converges() {
        let mut rng = SeedTree::new(5).stream("n");
        let n = 200_000;
        let g = Complex64::new(0.6, 0.8) * 0.7;
        let sigma2 = 0.2;
        let tx: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, i as f64)).collect();
        let rx: Vec<Complex64> = tx.iter().map(|t| g * t + cn(&mut rng, sigma2)).collect();
        let r = estimate_rsrp(&rx, &tx).unwrap().linear;
        let expect = g.norm_sqr() + sigma2;
        assert!((r - expect).abs() < 0.01 * expect, "{r} vs {expect}");
    }

    #[test]
    fn sampler_matches_resource_element_estimator() {
        // Same first two moments as the RE-level estimate of a frequency-selective channel.
        let n_re = 64;
        let sigma2 = 0.5;
        let h: Vec<Complex64> = (0..n_re).map(|k| Complex64::from_polar(1.0 + 0.3 * (k as f64 * 0.2).sin(), 0.1 * k as f64)).collect();
        let energy: f64 = h.iter().map(|v| v.norm_sqr()).sum();
        let tx: Vec<Complex64> = (0..n_re).map(|k| Complex64::from_polar(1.0, 0.7 * k as f64)).collect();
        let trials = 20_000;
        let mut rng = SeedTree::new(6).stream("a");
        let re: Vec<f64> = (0..trials)
            .map(|_| {
                let rx: Vec<_> = h.iter().zip(&tx).map(|(h, t)| h * t + cn(&mut rng, sigma2)).collect();
                estimate_rsrp(&rx, &tx).unwrap().linear
            })
            .collect();
        let mut rng = SeedTree::new(6).stream("b");
        let fast: Vec<f64> = (0..trials).map(|_| sample_rsrp(energy, sigma2, n_re, &mut rng)).collect();
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
            (m, var)
        };
        let (m1, v1) = stats(&re);
        let (m2, v2) = stats(&fast);
        let m_exact = energy / n_re as f64 + sigma2;
        let v_exact = (2.0 * sigma2 * energy + n_re as f64 * sigma2 * sigma2) / (n_re as f64).powi(2);
        assert!((m1 - m_exact).abs() < 0.01 * m_exact);
        assert!((m2 - m_exact).abs() < 0.01 * m_exact);
        assert!((v1 - v_exact).abs() < 0.05 * v_exact, "{v1} {v_exact}");
        assert!((v2 - v_exact).abs() < 0.05 * v_exact, "{v2} {v_exact}");
    }
}
