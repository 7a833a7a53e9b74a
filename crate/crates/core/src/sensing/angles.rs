use serde::{Deserialize, Serialize};

use super::RsrpImage;
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::phased_array::BeamCodebook;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    /// Arrival azimuth in the UE body frame (rad).
    pub aoa: f64,
    /// Departure azimuth in the BS array frame (rad).
    pub aod: f64,
    pub rsrp_dbm: f64,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakConfig {
    /// Peaks sharing a row or column with a stronger peak and weaker than it
    /// by more than this are treated as sidelobes.
    pub sidelobe_margin_db: f64,
    /// Peaks closer than this (rad, in both angles) to a stronger one are duplicates.
    pub merge_radius: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            sidelobe_margin_db: 10.0,
            merge_radius: 8f64.to_radians(),
        }
    }
}

/// Concatenate single-sector images captured at distinct UE orientations.
pub fn assemble_panorama(images: &[RsrpImage]) -> Result<RsrpImage> {
    let first = images.first().ok_or(Error::Empty("panorama images"))?;
    for (i, a) in images.iter().enumerate() {
        if a.bs_beam_ids != first.bs_beam_ids {
            return Err(Error::Config("panorama images must share BS beams".into()));
        }
        for b in &images[..i] {
            if wrap_angle(a.orientation - b.orientation).abs() < 1e-9 {
                return Err(Error::Config(format!(
                    "duplicate orientation {:.1} deg",
                    a.orientation.to_degrees()
                )));
            }
        }
    }
    let mut out = RsrpImage {
        values: Vec::new(),
        ue_beam_ids: Vec::new(),
        bs_beam_ids: first.bs_beam_ids.clone(),
        row_orientation: Vec::new(),
        orientation: first.orientation,
        elapsed_ms: 0,
    };
    for img in images {
        out.values.extend(img.values.iter().cloned());
        out.ue_beam_ids.extend(&img.ue_beam_ids);
        out.row_orientation.extend(&img.row_orientation);
        out.elapsed_ms += img.elapsed_ms;
    }
    Ok(out)
}

/// Offset of a parabola's vertex through `(-1, a), (0, b), (1, c)`, clamped to
/// half a grid step.
pub fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den >= 0.0 || !den.is_finite() {
        return 0.0;
    }
    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}

fn is_local_max(img: &RsrpImage, i: usize, j: usize) -> bool {
    let v = img.values[i][j];
    let rows = img.n_rows() as isize;
    let cols = img.n_cols() as isize;
    for di in -1isize..=1 {
        for dj in -1isize..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if ni < 0 || nj < 0 || ni >= rows || nj >= cols || !rows_adjacent(img, i, ni as usize) {
                continue;
            }
            let w = img.values[ni as usize][nj as usize];
            // ties go to the earlier cell in raster order
            let earlier = (ni, nj) < (i as isize, j as isize);
            if w > v || (w == v && earlier) {
                return false;
            }
        }
    }
    true
}

/// Two rows are neighbours in beam space if they come from the same sector
/// and adjacent UE beams.
fn rows_adjacent(img: &RsrpImage, a: usize, b: usize) -> bool {
    a == b
        || (img.row_orientation[a] == img.row_orientation[b]
            && img.ue_beam_ids[a].abs_diff(img.ue_beam_ids[b]) == 1)
}

fn neighbour_row(img: &RsrpImage, i: usize, beam: usize) -> Option<usize> {
    [i.wrapping_sub(1), i + 1]
        .into_iter()
        .filter(|&r| r < img.n_rows())
        .find(|&r| img.ue_beam_ids[r] == beam && img.row_orientation[r] == img.row_orientation[i])
}

/// Up to `k_paths` (AOA, AOD) pairs from the strongest local maxima of an RSRP
/// image, refined by quadratic interpolation of dB values in sine space.
pub fn estimate_angles(
    img: &RsrpImage,
    k_paths: usize,
    ue_codebook: &BeamCodebook,
    bs_codebook: &BeamCodebook,
    cfg: &PeakConfig,
) -> Result<Vec<AngleEstimate>> {
    if k_paths == 0 {
        return Err(Error::OutOfRange("k_paths must be >= 1".into()));
    }
    let mut peaks: Vec<(usize, usize)> = Vec::new();
    for i in 0..img.n_rows() {
        for j in 0..img.n_cols() {
            if img.values[i][j].is_finite() && is_local_max(img, i, j) {
                peaks.push((i, j));
            }
        }
    }
    peaks.sort_by(|a, b| img.values[b.0][b.1].total_cmp(&img.values[a.0][a.1]).then(a.cmp(b)));
    let mut out: Vec<AngleEstimate> = Vec::new();
    for (i, j) in peaks {
        if out.len() == k_paths {
            break;
        }
        let v = img.values[i][j];
        let sidelobe = out.iter().any(|p| {
            let same_line = (p.row == i || rows_adjacent(img, p.row, i)) || p.col.abs_diff(j) <= 1;
            same_line && p.rsrp_dbm - v > cfg.sidelobe_margin_db
        });
        if sidelobe {
            continue;
        }
        let est = refine(img, i, j, ue_codebook, bs_codebook);
        let duplicate = out.iter().any(|p| {
            wrap_angle(p.aoa - est.aoa).abs() < cfg.merge_radius && wrap_angle(p.aod - est.aod).abs() < cfg.merge_radius
        });
        if !duplicate {
            out.push(est);
        }
    }
    Ok(out)
}

fn refine(img: &RsrpImage, i: usize, j: usize, ue_cb: &BeamCodebook, bs_cb: &BeamCodebook) -> AngleEstimate {
    let v = img.values[i][j];
    let bs_id = img.bs_beam_ids[j];
    let col_off = if j > 0 && j + 1 < img.n_cols() {
        parabolic_offset(img.values[i][j - 1], v, img.values[i][j + 1])
    } else {
        0.0
    };
    let u_bs = bs_cb.beams[bs_id].u + col_off * bs_cb.sine_step();
    let ue_id = img.ue_beam_ids[i];
    let row_off = match (
        ue_id.checked_sub(1).and_then(|b| neighbour_row(img, i, b)),
        neighbour_row(img, i, ue_id + 1),
    ) {
        (Some(a), Some(c)) => parabolic_offset(img.values[a][j], v, img.values[c][j]),
        _ => 0.0,
    };
    let u_ue = ue_cb.beams[ue_id].u + row_off * ue_cb.sine_step();
    AngleEstimate {
        aoa: wrap_angle(img.row_orientation[i] + u_ue.clamp(-1.0, 1.0).asin()),
        aod: u_bs.clamp(-1.0, 1.0).asin(),
        rsrp_dbm: v,
        row: i,
        col: j,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phased_array::{build_codebook, UpaGeometry};
    use approx::assert_abs_diff_eq;

    fn image_from(f: impl Fn(f64, f64) -> f64, cb: &BeamCodebook, orientation: f64) -> RsrpImage {
        let values = cb
            .beams
            .iter()
            .map(|ue| cb.beams.iter().map(|bs| f(ue.u, bs.u)).collect())
            .collect();
        RsrpImage {
            values,
            ue_beam_ids: (0..64).collect(),
            bs_beam_ids: (0..64).collect(),
            row_orientation: vec![orientation; 64],
            orientation,
            elapsed_ms: 1280,
        }
    }

    #[test]
    fn parabola_vertex() {
        assert_eq!(parabolic_offset(1.0, 2.0, 1.0), 0.0);
        // y = -(x - 0.3)^2
        let y = |x: f64| -(x - 0.3) * (x - 0.3);
        assert_abs_diff_eq!(parabolic_offset(y(-1.0), y(0.0), y(1.0)), 0.3, epsilon = 1e-12);
        assert_eq!(parabolic_offset(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn on_grid_peak_is_exact() {
        let cb = build_codebook(&UpaGeometry::default());
        let (ue_u, bs_u) = (cb.beams[20].u, cb.beams[45].u);
        let img = image_from(|a, b| -100.0 * ((a - ue_u).powi(2) + (b - bs_u).powi(2)), &cb, 0.0);
        let est = estimate_angles(&img, 1, &cb, &cb, &PeakConfig::default()).unwrap();
        assert_eq!(est.len(), 1);
        assert_abs_diff_eq!(est[0].aoa, cb.beams[20].az, epsilon = 1e-12);
        assert_abs_diff_eq!(est[0].aod, cb.beams[45].az, epsilon = 1e-12);
    }

    #[test]
    fn two_separated_peaks_in_rsrp_order() {
        let cb = build_codebook(&UpaGeometry::default());
        let p1 = (0.1, -0.3);
        let p2 = (-0.5, 0.4);
        let img = image_from(
            |a, b| {
                let l1 = -40.0 - 300.0 * ((a - p1.0).powi(2) + (b - p1.1).powi(2));
                let l2 = -46.0 - 300.0 * ((a - p2.0).powi(2) + (b - p2.1).powi(2));
                l1.max(l2)
            },
            &cb,
            0.0,
        );
        let est = estimate_angles(&img, 2, &cb, &cb, &PeakConfig::default()).unwrap();
        assert_eq!(est.len(), 2);
        assert!(est[0].rsrp_dbm > est[1].rsrp_dbm);
        assert!((est[0].aoa.sin() - p1.0).abs() < 1e-3 && (est[0].aod.sin() - p1.1).abs() < 1e-3);
        assert!((est[1].aoa.sin() - p2.0).abs() < 1e-3 && (est[1].aod.sin() - p2.1).abs() < 1e-3);
    }

    #[test]
    fn fewer_maxima_than_requested() {
        let cb = build_codebook(&UpaGeometry::default());
        let img = image_from(|a, b| -(a * a + b * b), &cb, 0.0);
        assert_eq!(estimate_angles(&img, 5, &cb, &cb, &PeakConfig::default()).unwrap().len(), 1);
        assert!(estimate_angles(&img, 0, &cb, &cb, &PeakConfig::default()).is_err());
    }

    #[test]
    fn panorama_concatenates_and_rejects_duplicates() {
        let cb = build_codebook(&UpaGeometry::default());
        let imgs: Vec<RsrpImage> = (0..4)
            .map(|k| image_from(|_, _| -90.0, &cb, k as f64 * std::f64::consts::FRAC_PI_2))
            .collect();
        let pano = assemble_panorama(&imgs).unwrap();
        assert_eq!((pano.n_rows(), pano.n_cols()), (256, 64));
        assert_eq!(pano.elapsed_ms, 4 * 1280);
        assert!(assemble_panorama(&[]).is_err());
        assert!(assemble_panorama(&[imgs[0].clone(), imgs[0].clone()]).is_err());
    }

    #[test]
    fn panorama_peak_carries_orientation() {
        let cb = build_codebook(&UpaGeometry::default());
        let target = (0.2f64, 0.1f64);
        let imgs: Vec<RsrpImage> = (0..4)
            .map(|k| {
                let o = k as f64 * std::f64::consts::FRAC_PI_2;
                image_from(
                    |a, b| if k == 2 { -40.0 - 300.0 * ((a - target.0).powi(2) + (b - target.1).powi(2)) } else { -90.0 - a },
                    &cb,
                    o,
                )
            })
            .collect();
        let pano = assemble_panorama(&imgs).unwrap();
        let est = estimate_angles(&pano, 1, &cb, &cb, &PeakConfig::default()).unwrap();
        assert_abs_diff_eq!(
            wrap_angle(est[0].aoa - std::f64::consts::PI - target.0.asin()),
            0.0,
            epsilon = 1e-3
        );
    }
}
