//! Frame numerology, SSB/RACH placement and protocol timing arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pilot and control overhead that brings the 64-QAM peak rate down to the
/// prototype's 508 Mbps downlink figure.
pub const DEFAULT_OVERHEAD_FRACTION: f64 = 0.10915;

/// Number of beams in the operational codebook (and SSBs per burst).
pub const N_BEAMS: usize = 64;

/// Time one UE beam occupies in a beam sweep: one full radio frame.
pub const BEAM_DWELL_MS: u32 = 20;

/// SSB extent in resource elements.
pub const SSB_SYMBOLS: usize = 4;
pub const SSB_SUBCARRIERS: usize = 240;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerology {
    pub carrier_hz: f64,
    pub scs_hz: f64,
    pub n_effective_sc: usize,
    pub sample_rate_hz: f64,
    pub fft_size: usize,
    pub cp_len: usize,
}

impl Default for Numerology {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            scs_hz: 120e3,
            n_effective_sc: 792,
            sample_rate_hz: 122.88e6,
            fft_size: 1024,
            cp_len: 72,
        }
    }
}

impl Numerology {
    pub fn validate(&self) -> Result<()> {
        if !(self.scs_hz > 0.0 && self.sample_rate_hz > 0.0 && self.carrier_hz > 0.0) {
            return Err(Error::Config("frequencies must be positive".into()));
        }
        let ratio = self.sample_rate_hz / self.scs_hz;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() as usize != self.fft_size {
            return Err(Error::Config(format!(
                "fft_size {} must equal sample_rate_hz / scs_hz = {ratio}",
                self.fft_size
            )));
        }
        if self.n_effective_sc == 0 || self.n_effective_sc > self.fft_size {
            return Err(Error::Config(format!(
                "n_effective_sc {} must be in 1..={}",
                self.n_effective_sc, self.fft_size
            )));
        }
        if (self.fft_size - self.n_effective_sc) % 2 != 0 {
            return Err(Error::Config(
                "guard band must split evenly between the two band edges".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let num: Numerology =
            serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigField {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        num.validate()?;
        Ok(num)
    }

    pub fn effective_bandwidth_hz(&self) -> f64 {
        self.n_effective_sc as f64 * self.scs_hz
    }

    pub fn guard_per_side(&self) -> usize {
        (self.fft_size - self.n_effective_sc) / 2
    }

    /// Useful symbol duration (no cyclic prefix).
    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.scs_hz
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.fft_size + self.cp_len
    }

    pub fn wavelength_m(&self) -> f64 {
        crate::geometry::SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Signed subcarrier offset of effective subcarrier `i` (0-based, lowest first).
    pub fn subcarrier_offset(&self, i: usize) -> i64 {
        i as i64 - (self.n_effective_sc / 2) as i64
    }

    /// FFT bin that carries effective subcarrier `i`.
    pub fn fft_bin(&self, i: usize) -> usize {
        self.subcarrier_offset(i).rem_euclid(self.fft_size as i64) as usize
    }

    /// Baseband frequency offsets of all effective subcarriers.
    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        (0..self.n_effective_sc)
            .map(|i| self.subcarrier_offset(i) as f64 * self.scs_hz)
            .collect()
    }

    /// Copy with the occupied band narrowed to `n_effective_sc` subcarriers.
    pub fn with_effective_subcarriers(&self, n_effective_sc: usize) -> Result<Self> {
        let num = Self {
            n_effective_sc,
            ..self.clone()
        };
        num.validate()?;
        Ok(num)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsbAllocation {
    pub beam_index: usize,
    pub slot: usize,
    pub start_symbol: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RachOccasion {
    pub slot: usize,
    pub start_symbol: usize,
    pub n_symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSchedule {
    pub frame_ms: u32,
    pub n_subframes: usize,
    pub slots_per_subframe: usize,
    pub symbols_per_slot: usize,
    pub ssb_burst: Vec<SsbAllocation>,
    pub rach_occasions: Vec<RachOccasion>,
}

impl FrameSchedule {
    pub fn n_slots(&self) -> usize {
        self.n_subframes * self.slots_per_subframe
    }

    pub fn n_symbols(&self) -> usize {
        self.n_slots() * self.symbols_per_slot
    }

    pub fn slot_duration_ms(&self) -> f64 {
        self.frame_ms as f64 / self.n_slots() as f64
    }

    /// Absolute symbol index of an allocation within the frame.
    pub fn symbol_index(&self, slot: usize, symbol: usize) -> usize {
        slot * self.symbols_per_slot + symbol
    }

    pub fn ssb_burst_end_ms(&self) -> f64 {
        self.ssb_burst
            .iter()
            .map(|s| (s.slot + 1) as f64 * self.slot_duration_ms())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityLimits {
    pub max_ul_ues: usize,
    pub max_dl_ues: usize,
}

impl Default for CapacityLimits {
    fn default() -> Self {
        Self {
            max_ul_ues: 16,
            max_dl_ues: 10,
        }
    }
}

impl CapacityLimits {
    pub fn check_uplink(&self, n: usize) -> Result<()> {
        if n > self.max_ul_ues {
            return Err(Error::Capacity {
                count: n,
                limit: self.max_ul_ues,
            });
        }
        Ok(())
    }

    pub fn check_downlink(&self, n: usize) -> Result<()> {
        if n > self.max_dl_ues {
            return Err(Error::Capacity {
                count: n,
                limit: self.max_dl_ues,
            });
        }
        Ok(())
    }
}

/// Lay out one 20 ms frame: two SSBs per slot (symbols 4-7 and 8-11) over the
/// first 32 slots, and two 3-symbol RACH occasions in every slot of the last
/// subframe.
pub fn build_schedule(num: &Numerology) -> Result<FrameSchedule> {
    num.validate()?;
    let frame_ms = 20;
    let n_subframes = 20;
    let slots_per_subframe = 8;
    let symbols_per_slot = 14;

    let ssb_burst = (0..N_BEAMS)
        .map(|beam_index| SsbAllocation {
            beam_index,
            slot: beam_index / 2,
            start_symbol: 4 + SSB_SYMBOLS * (beam_index % 2),
        })
        .collect();

    let last_subframe = n_subframes - 1;
    let rach_occasions = (0..slots_per_subframe)
        .flat_map(|s| {
            let slot = last_subframe * slots_per_subframe + s;
            [0, 7].map(|start_symbol| RachOccasion {
                slot,
                start_symbol,
                n_symbols: 3,
            })
        })
        .collect();

    Ok(FrameSchedule {
        frame_ms,
        n_subframes,
        slots_per_subframe,
        symbols_per_slot,
        ssb_burst,
        rach_occasions,
    })
}

pub fn max_throughput(num: &Numerology, bits_per_symbol: u32, overhead_fraction: f64) -> Result<f64> {
    if !matches!(bits_per_symbol, 2 | 4 | 6) {
        return Err(Error::Modulation {
            bits: bits_per_symbol,
        });
    }
    if !(0.0..1.0).contains(&overhead_fraction) {
        return Err(Error::OutOfRange(format!(
            "overhead fraction {overhead_fraction} not in [0, 1)"
        )));
    }
    Ok(num.effective_bandwidth_hz() * f64::from(bits_per_symbol) * (1.0 - overhead_fraction))
}

fn check_m(m_beams: usize) -> Result<()> {
    if !(1..=N_BEAMS).contains(&m_beams) {
        return Err(Error::OutOfRange(format!(
            "beam count {m_beams} not in 1..={N_BEAMS}"
        )));
    }
    Ok(())
}

/// Time to sweep `m_beams` UE beams, one per frame, in milliseconds.
pub fn tracking_duration_ms(m_beams: usize) -> Result<u32> {
    check_m(m_beams)?;
    Ok(BEAM_DWELL_MS * m_beams as u32)
}

/// Fraction of the exhaustive sweep saved by searching only `m_beams` UE beams.
pub fn overhead_reduction(m_beams: usize) -> Result<f64> {
    check_m(m_beams)?;
    Ok((N_BEAMS - m_beams) as f64 / N_BEAMS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table_numerology_is_consistent() {
        let num = Numerology::default();
        num.validate().unwrap();
        assert_eq!(num.fft_size, 1024);
        assert_abs_diff_eq!(num.effective_bandwidth_hz(), 95.04e6, epsilon = 1e-3);
        assert_eq!(num.guard_per_side(), 116);
        assert_abs_diff_eq!(num.symbol_duration_s(), 8.333_333e-6, epsilon = 1e-11);
    }

    #[test]
    fn rejects_non_integral_fft() {
        let num = Numerology {
            sample_rate_hz: 100e6,
            ..Numerology::default()
        };
        assert!(matches!(build_schedule(&num), Err(Error::Config(_))));
    }

    #[test]
    fn schedule_counts() {
        let s = build_schedule(&Numerology::default()).unwrap();
        assert_eq!(s.n_slots(), 160);
        assert_eq!(s.n_symbols(), 2240);
        assert_eq!(2 * s.symbols_per_slot, 28);
        assert_eq!(s.ssb_burst.len(), 64);
        assert!(s.ssb_burst.iter().all(|b| b.slot < 32));
        assert!(s.ssb_burst_end_ms() <= 4.0);
        let span: usize = s.ssb_burst.len() * SSB_SYMBOLS;
        assert_eq!(span, 256);
        assert!(span <= 32 * s.symbols_per_slot);
    }

    #[test]
    fn ssb_allocations_do_not_overlap() {
        let s = build_schedule(&Numerology::default()).unwrap();
        let mut used = std::collections::HashSet::new();
        for b in &s.ssb_burst {
            for k in 0..SSB_SYMBOLS {
                assert!(b.start_symbol + k < s.symbols_per_slot);
                assert!(used.insert(s.symbol_index(b.slot, b.start_symbol + k)));
            }
        }
    }

    #[test]
    fn rach_outside_ssb_region() {
        let s = build_schedule(&Numerology::default()).unwrap();
        assert!(!s.rach_occasions.is_empty());
        for r in &s.rach_occasions {
            assert!(r.slot >= 32 && r.slot < s.n_slots());
            assert!(r.n_symbols <= 3);
            assert!(r.start_symbol + r.n_symbols <= s.symbols_per_slot);
        }
    }

    #[test]
    fn schedule_is_deterministic() {
        let a = build_schedule(&Numerology::default()).unwrap();
        let b = build_schedule(&Numerology::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn throughput_values() {
        let num = Numerology::default();
        assert_abs_diff_eq!(max_throughput(&num, 6, 0.0).unwrap(), 570.24e6, epsilon = 1.0);
        let r = max_throughput(&num, 6, DEFAULT_OVERHEAD_FRACTION).unwrap();
        assert!((r - 508e6).abs() <= 0.5e6, "{r}");
        assert!(matches!(max_throughput(&num, 0, 0.0), Err(Error::Modulation { .. })));
        assert!(max_throughput(&num, 6, 1.0).is_err());
    }

    #[test]
    fn tracking_protocol_numbers() {
        assert_eq!(tracking_duration_ms(64).unwrap(), 1280);
        assert_eq!(tracking_duration_ms(16).unwrap(), 320);
        assert_eq!(overhead_reduction(16).unwrap(), 0.75);
        assert_eq!(overhead_reduction(64).unwrap(), 0.0);
        assert!(tracking_duration_ms(0).is_err());
        assert!(tracking_duration_ms(65).is_err());
    }

    #[test]
    fn overhead_reduction_strictly_decreasing() {
        for m in 1..N_BEAMS {
            assert!(overhead_reduction(m).unwrap() > overhead_reduction(m + 1).unwrap());
            let d = tracking_duration_ms(m + 1).unwrap() - tracking_duration_ms(m).unwrap();
            assert_eq!(d, BEAM_DWELL_MS);
        }
    }

    #[test]
    fn numerology_json_reports_field_path() {
        let err = Numerology::from_json(r#"{"carrier_hz": 28e9, "scs_hz": "x"}"#).unwrap_err();
        match err {
            Error::ConfigField { path, .. } => assert_eq!(path, "scs_hz"),
            other => panic!("{other:?}"),
        }
        let text = serde_json::to_string(&Numerology::default()).unwrap();
        assert_eq!(Numerology::from_json(&text).unwrap(), Numerology::default());
        assert!(Numerology::from_json(&text.replace("}", ",\"extra\":1}")).is_err());
    }
}
