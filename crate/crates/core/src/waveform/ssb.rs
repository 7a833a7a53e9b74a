use num_complex::Complex64;
use rand::Rng;

use crate::nr_frame::{SSB_SUBCARRIERS, SSB_SYMBOLS};
use crate::rng::SeedTree;

pub const PSS_LEN: usize = 127;
/// First subcarrier of PSS/SSS within the 240-subcarrier block.
const SYNC_START: usize = 56;
/// PBCH occupies these edge bands in the SSS symbol.
const PBCH_EDGE: usize = 48;

fn m_sequence(taps: &[usize], init: [u8; 7]) -> [u8; PSS_LEN] {
    let mut x = [0u8; PSS_LEN];
    x[..7].copy_from_slice(&init);
    for i in 0..PSS_LEN - 7 {
        x[i + 7] = taps.iter().map(|t| x[i + t]).sum::<u8>() % 2;
    }
    x
}

/// BPSK m-sequence, `x(i+7) = x(i+4) + x(i) mod 2`.
pub fn pss_sequence() -> Vec<f64> {
    let x = m_sequence(&[4, 0], [0, 1, 1, 0, 1, 1, 1]);
    x.iter().map(|b| 1.0 - 2.0 * f64::from(*b)).collect()
}

/// Second m-sequence, `x(i+7) = x(i+1) + x(i) mod 2`, cyclically shifted by the cell id.
pub fn sss_sequence(cell_id: u32) -> Vec<f64> {
    let x = m_sequence(&[1, 0], [1, 0, 0, 0, 0, 0, 0]);
    let shift = cell_id as usize % PSS_LEN;
    (0..PSS_LEN)
        .map(|n| 1.0 - 2.0 * f64::from(x[(n + shift) % PSS_LEN]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReKind {
    Empty,
    Pss,
    Sss,
    Pbch,
}

fn re_kind(symbol: usize, sc: usize) -> ReKind {
    let sync = (SYNC_START..SYNC_START + PSS_LEN).contains(&sc);
    match symbol {
        0 if sync => ReKind::Pss,
        0 => ReKind::Empty,
        2 if sync => ReKind::Sss,
        2 if sc < PBCH_EDGE || sc >= SSB_SUBCARRIERS - PBCH_EDGE => ReKind::Pbch,
        2 => ReKind::Empty,
        _ => ReKind::Pbch,
    }
}

/// One synchronization signal block, 4 symbols x 240 subcarriers.
#[derive(Debug, Clone)]
pub struct SsbBlock {
    pub cell_id: u32,
    pub beam_index: usize,
    pub pss: Vec<f64>,
    pub sss: Vec<f64>,
    /// Known QPSK fill standing in for the broadcast payload, in RE order.
    pub pbch: Vec<Complex64>,
}

impl SsbBlock {
    pub fn new(cell_id: u32, beam_index: usize) -> Self {
        let n_pbch = (0..SSB_SYMBOLS)
            .flat_map(|l| (0..SSB_SUBCARRIERS).map(move |k| re_kind(l, k)))
            .filter(|k| *k == ReKind::Pbch)
            .count();
        let mut rng = SeedTree::new(u64::from(cell_id)).indexed("pbch", beam_index as u64);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let pbch = (0..n_pbch)
            .map(|_| {
                let b: u8 = rng.random_range(0..4);
                let re = if b & 1 == 0 { h } else { -h };
                let im = if b & 2 == 0 { h } else { -h };
                Complex64::new(re, im)
            })
            .collect();
        Self {
            cell_id,
            beam_index,
            pss: pss_sequence(),
            sss: sss_sequence(cell_id),
            pbch,
        }
    }

    /// Resource element at (symbol, subcarrier) within the block.
    pub fn re(&self, symbol: usize, sc: usize) -> Complex64 {
        match re_kind(symbol, sc) {
            ReKind::Empty => Complex64::new(0.0, 0.0),
            ReKind::Pss => Complex64::new(self.pss[sc - SYNC_START], 0.0),
            ReKind::Sss => Complex64::new(self.sss[sc - SYNC_START], 0.0),
            ReKind::Pbch => {
                // PBCH index = count of PBCH REs before this one, symbol-major
                let before: usize = (0..symbol)
                    .map(|l| (0..SSB_SUBCARRIERS).filter(|k| re_kind(l, *k) == ReKind::Pbch).count())
                    .sum::<usize>()
                    + (0..sc).filter(|k| re_kind(symbol, *k) == ReKind::Pbch).count();
                self.pbch[before]
            }
        }
    }

    /// All 960 REs, symbol-major.
    pub fn resource_elements(&self) -> Vec<Complex64> {
        (0..SSB_SYMBOLS)
            .flat_map(|l| (0..SSB_SUBCARRIERS).map(move |k| (l, k)))
            .map(|(l, k)| self.re(l, k))
            .collect()
    }

    /// Mask (symbol-major) of the REs used for RSRP: PBCH and SSS.
    pub fn rsrp_mask() -> Vec<bool> {
        (0..SSB_SYMBOLS)
            .flat_map(|l| (0..SSB_SUBCARRIERS).map(move |k| re_kind(l, k)))
            .map(|k| matches!(k, ReKind::Pbch | ReKind::Sss))
            .collect()
    }

    /// Subcarrier index (0..240) of each RSRP resource element.
    pub fn rsrp_subcarriers() -> Vec<usize> {
        Self::rsrp_mask()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| i % SSB_SUBCARRIERS)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences_are_bpsk_and_balanced() {
        let p = pss_sequence();
        assert_eq!(p.len(), 127);
        assert!(p.iter().all(|v| v.abs() == 1.0));
        // an m-sequence of period 127 has 64 ones and 63 zeros
        assert_eq!(p.iter().filter(|v| **v < 0.0).count(), 64);
        let s0 = sss_sequence(0);
        let s5 = sss_sequence(5);
        assert_ne!(s0, s5);
        assert_eq!(s0[5], s5[0]);
    }

    #[test]
    fn layout_occupies_block() {
        let ssb = SsbBlock::new(1, 3);
        let res = ssb.resource_elements();
        assert_eq!(res.len(), 4 * 240);
        // PSS symbol only carries the central 127 subcarriers
        assert_eq!(res[..240].iter().filter(|v| v.norm() > 0.0).count(), 127);
        assert_eq!(res[56].re, ssb.pss[0]);
        let mask = SsbBlock::rsrp_mask();
        assert_eq!(mask.iter().filter(|m| **m).count(), 240 + 48 + 127 + 48 + 240);
        assert!(res.iter().zip(&mask).all(|(v, m)| !m || (v.norm() - 1.0).abs() < 1e-12));
    }
}
