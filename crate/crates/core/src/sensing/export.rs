use std::fmt::Write as _;

use super::CloudPoint;

/// Comma-separated rows with fixed precision, so equal inputs give equal bytes.
pub fn matrix_to_csv(values: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in values {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:.6}");
        }
        s.push('\n');
    }
    s
}

pub fn cloud_to_csv(points: &[CloudPoint]) -> String {
    let mut s = String::from("az_deg,range_m,power_db\n");
    for p in points {
        let _ = writeln!(s, "{:.4},{:.4},{:.3}", p.az.to_degrees(), p.range, p.power_db);
    }
    s
}

/// Binary PGM (P5). Values are dB; the top `dynamic_range_db` below the
/// maximum map linearly onto 0..=255.
pub fn image_to_pgm(values_db: &[Vec<f64>], dynamic_range_db: f64) -> Vec<u8> {
    let h = values_db.len();
    let w = values_db.first().map_or(0, Vec::len);
    let max = values_db
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in values_db {
        for v in row {
            let level = if v.is_finite() && max.is_finite() {
                (255.0 * (1.0 - (max - v) / dynamic_range_db)).clamp(0.0, 255.0).round() as u8
            } else {
                0
            };
            out.push(level);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_scaling() {
        let img = vec![vec![0.0, -20.0], vec![-40.0, f64::NEG_INFINITY]];
        let pgm = image_to_pgm(&img, 40.0);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[255, 128, 0, 0]);
    }

    #[test]
    fn csv_is_stable() {
        let m = vec![vec![1.0, 2.5], vec![-3.0, 0.0]];
        assert_eq!(matrix_to_csv(&m), "1.000000,2.500000\n-3.000000,0.000000\n");
        let c = cloud_to_csv(&[CloudPoint { beam: 0, az: 0.0, range: 4.0, power_db: -80.0 }]);
        assert_eq!(c, "az_deg,range_m,power_db\n0.0000,4.0000,-80.000\n");
    }
}
