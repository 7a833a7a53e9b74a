use num_complex::Complex64;

use super::ssb::SsbBlock;
use crate::error::{Error, Result};
use crate::nr_frame::{Numerology, SSB_SUBCARRIERS, SSB_SYMBOLS};

/// Symbols x effective subcarriers, stored symbol-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub n_symbols: usize,
    pub n_subcarriers: usize,
    pub data: Vec<Complex64>,
}

impl ResourceGrid {
    pub fn zeros(n_symbols: usize, n_subcarriers: usize) -> Self {
        Self {
            n_symbols,
            n_subcarriers,
            data: vec![Complex64::new(0.0, 0.0); n_symbols * n_subcarriers],
        }
    }

    /// Two adjacent slots (28 symbols) across all effective subcarriers.
    pub fn slot_group(num: &Numerology) -> Self {
        Self::zeros(28, num.n_effective_sc)
    }

    pub fn get(&self, symbol: usize, sc: usize) -> Complex64 {
        self.data[symbol * self.n_subcarriers + sc]
    }

    pub fn set(&mut self, symbol: usize, sc: usize, v: Complex64) {
        self.data[symbol * self.n_subcarriers + sc] = v;
    }

    pub fn symbol(&self, symbol: usize) -> &[Complex64] {
        &self.data[symbol * self.n_subcarriers..(symbol + 1) * self.n_subcarriers]
    }

    pub fn symbol_mut(&mut self, symbol: usize) -> &mut [Complex64] {
        &mut self.data[symbol * self.n_subcarriers..(symbol + 1) * self.n_subcarriers]
    }

    /// First subcarrier of an SSB centred in the band.
    pub fn centered_ssb_start(&self) -> usize {
        (self.n_subcarriers - SSB_SUBCARRIERS) / 2
    }

    pub fn place_ssb(&mut self, ssb: &SsbBlock, start_symbol: usize, first_sc: usize) -> Result<()> {
        if start_symbol + SSB_SYMBOLS > self.n_symbols || first_sc + SSB_SUBCARRIERS > self.n_subcarriers {
            return Err(Error::OutOfRange(format!(
                "SSB at symbol {start_symbol}, subcarrier {first_sc} does not fit the grid"
            )));
        }
        for l in 0..SSB_SYMBOLS {
            for k in 0..SSB_SUBCARRIERS {
                self.set(start_symbol + l, first_sc + k, ssb.re(l, k));
            }
        }
        Ok(())
    }

    /// Resource elements of the SSB region, symbol-major.
    pub fn extract_ssb(&self, start_symbol: usize, first_sc: usize) -> Vec<Complex64> {
        (0..SSB_SYMBOLS)
            .flat_map(|l| (0..SSB_SUBCARRIERS).map(move |k| (l, k)))
            .map(|(l, k)| self.get(start_symbol + l, first_sc + k))
            .collect()
    }
}
