use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::ResourceGrid;
use crate::error::{Error, Result};
use crate::nr_frame::Numerology;

/// Full-band frequency grid plus the CP-prefixed time samples it produced.
#[derive(Debug, Clone)]
pub struct OfdmSymbolBlock {
    /// `n_symbols * fft_size`, natural FFT bin order; guard bins are zero.
    pub freq_grid: Vec<Complex64>,
    pub time_samples: Vec<Complex64>,
    pub cp_len: usize,
}

/// OFDM modulator/demodulator. Time samples are `ifft(X) / N`, so time-domain
/// energy is `1/N` of the frequency-domain energy.
pub struct OfdmModem {
    num: Numerology,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl OfdmModem {
    pub fn new(num: &Numerology) -> Result<Self> {
        num.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            num: num.clone(),
            fft: planner.plan_fft_forward(num.fft_size),
            ifft: planner.plan_fft_inverse(num.fft_size),
        })
    }

    pub fn numerology(&self) -> &Numerology {
        &self.num
    }

    pub fn modulate(&self, grid: &ResourceGrid) -> Result<OfdmSymbolBlock> {
        let n = self.num.fft_size;
        let cp = self.num.cp_len;
        if grid.n_subcarriers != self.num.n_effective_sc {
            return Err(Error::OutOfRange(format!(
                "grid has {} subcarriers, numerology expects {}",
                grid.n_subcarriers, self.num.n_effective_sc
            )));
        }
        let mut freq_grid = vec![Complex64::new(0.0, 0.0); grid.n_symbols * n];
        let mut time_samples = Vec::with_capacity(grid.n_symbols * (n + cp));
        let scale = 1.0 / n as f64;
        for l in 0..grid.n_symbols {
            let bins = &mut freq_grid[l * n..(l + 1) * n];
            for (i, v) in grid.symbol(l).iter().enumerate() {
                bins[self.num.fft_bin(i)] = *v;
            }
            let mut buf = bins.to_vec();
            self.ifft.process(&mut buf);
            buf.iter_mut().for_each(|v| *v *= scale);
            time_samples.extend_from_slice(&buf[n - cp..]);
            time_samples.extend_from_slice(&buf);
        }
        Ok(OfdmSymbolBlock {
            freq_grid,
            time_samples,
            cp_len: cp,
        })
    }

    pub fn demodulate(&self, samples: &[Complex64]) -> Result<ResourceGrid> {
        let n = self.num.fft_size;
        let sym_len = self.num.samples_per_symbol();
        if samples.len() % sym_len != 0 {
            return Err(Error::SampleCount {
                len: samples.len(),
                symbol_len: sym_len,
            });
        }
        let n_symbols = samples.len() / sym_len;
        let mut grid = ResourceGrid::zeros(n_symbols, self.num.n_effective_sc);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for l in 0..n_symbols {
            let start = l * sym_len + self.num.cp_len;
            buf.copy_from_slice(&samples[start..start + n]);
            self.fft.process(&mut buf);
            for (i, v) in grid.symbol_mut(l).iter_mut().enumerate() {
                *v = buf[self.num.fft_bin(i)];
            }
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use rand::Rng;

    fn qam64(rng: &mut impl Rng) -> Complex64 {
        let lv = |r: &mut dyn rand::RngCore| f64::from(2 * (r.next_u32() % 8) as i32 - 7);
        Complex64::new(lv(rng), lv(rng)) / 42f64.sqrt()
    }

    #[test]
    fn round_trip_is_exact() {
        let num = Numerology::default();
        let modem = OfdmModem::new(&num).unwrap();
        let mut rng = SeedTree::new(1).stream("qam");
        let mut grid = ResourceGrid::slot_group(&num);
        grid.data.iter_mut().for_each(|v| *v = qam64(&mut rng));
        let block = modem.modulate(&grid).unwrap();
        assert_eq!(block.time_samples.len(), 28 * 1096);
        let back = modem.demodulate(&block.time_samples).unwrap();
        let err = grid
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn guard_bins_are_zero() {
        let num = Numerology::default();
        let modem = OfdmModem::new(&num).unwrap();
        let mut grid = ResourceGrid::zeros(1, num.n_effective_sc);
        grid.data.iter_mut().for_each(|v| *v = Complex64::new(1.0, -1.0));
        let block = modem.modulate(&grid).unwrap();
        let g = num.guard_per_side();
        let half = num.n_effective_sc / 2;
        for bin in half..half + 2 * g {
            assert_eq!(block.freq_grid[bin], Complex64::new(0.0, 0.0), "bin {bin}");
        }
        let occupied = block.freq_grid.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(occupied, num.n_effective_sc);
    }

    #[test]
    fn single_tone_is_complex_exponential() {
        let num = Numerology::default();
        let modem = OfdmModem::new(&num).unwrap();
        let i = 500;
        let k = num.subcarrier_offset(i) as f64;
        let mut grid = ResourceGrid::zeros(1, num.n_effective_sc);
        grid.set(0, i, Complex64::new(1.0, 0.0));
        let block = modem.modulate(&grid).unwrap();
        let n = num.fft_size as f64;
        for (t, v) in block.time_samples[num.cp_len..].iter().enumerate() {
            // frequency k * scs sampled at fs: phase 2 pi k t / N
            let expect = Complex64::from_polar(1.0 / n, 2.0 * std::f64::consts::PI * k * t as f64 / n);
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval() {
        let num = Numerology::default();
        let modem = OfdmModem::new(&num).unwrap();
        let mut rng = SeedTree::new(2).stream("qam");
        let mut grid = ResourceGrid::zeros(3, num.n_effective_sc);
        grid.data.iter_mut().for_each(|v| *v = qam64(&mut rng));
        let block = modem.modulate(&grid).unwrap();
        let sym_len = num.samples_per_symbol();
        let t_energy: f64 = (0..3)
            .flat_map(|l| block.time_samples[l * sym_len + num.cp_len..(l + 1) * sym_len].iter())
            .map(|v| v.norm_sqr())
            .sum();
        let f_energy: f64 = grid.data.iter().map(|v| v.norm_sqr()).sum();
        let rel = (t_energy - f_energy / num.fft_size as f64).abs() / t_energy;
        assert!(rel < 1e-9, "{rel}");
    }

    #[test]
    fn demodulate_rejects_partial_symbols() {
        let modem = OfdmModem::new(&Numerology::default()).unwrap();
        let s = vec![Complex64::new(0.0, 0.0); 1095];
        assert!(matches!(modem.demodulate(&s), Err(Error::SampleCount { .. })));
    }
}
