//! Per-pair metric reports and their serialized forms.
//!
//! Infinite PSNR (identical pixels) is a legitimate value, not an error; it
//! crosses serialization boundaries as the string "inf" because JSON has no
//! infinity literal.

use crate::{psnr, ssim, MetricsError};
use noise_lab::DefectiveMask;
use raw_core::RawImage;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    #[serde(with = "db_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
    #[serde(with = "db_or_inf")]
    pub psnr_masked: f64,
    pub ssim_masked: f64,
    /// Photosites in the comparison domain.
    pub pixel_count: usize,
    /// Photosites removed by the defective mask.
    pub masked_count: usize,
}

/// Runs all four metrics for one (denoised, reference) pair under a mask.
pub fn evaluate_pair(
    denoised: &RawImage,
    reference: &RawImage,
    mask: &DefectiveMask,
) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        psnr: psnr(denoised, reference, None)?,
        ssim: ssim(denoised, reference, None)?,
        psnr_masked: psnr(denoised, reference, Some(mask))?,
        ssim_masked: ssim(denoised, reference, Some(mask))?,
        pixel_count: denoised.width() * denoised.height(),
        masked_count: mask.popcount(),
    })
}

/// Writes the summary table: one row per image, four decimal places,
/// infinities as "inf".
pub fn write_csv_summary<W: Write>(
    rows: &[(String, MetricReport)],
    out: W,
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image_id", "psnr", "ssim", "psnr_masked", "ssim_masked"])?;
    let cell = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.4}") };
    for (id, r) in rows {
        w.write_record([
            id.clone(),
            cell(r.psnr),
            cell(r.ssim),
            cell(r.psnr_masked),
            cell(r.ssim_masked),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Serde adapter: finite values stay numbers, +/-infinity becomes "inf".
mod db_or_inf {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct DbVisitor;
        impl Visitor<'_> for DbVisitor {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    other => Err(E::custom(format!("unexpected psnr string {other:?}"))),
                }
            }
        }
        d.deserialize_any(DbVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(psnr: f64) -> MetricReport {
        MetricReport {
            psnr,
            ssim: 0.9871,
            psnr_masked: f64::INFINITY,
            ssim_masked: 1.0,
            pixel_count: 4096,
            masked_count: 3,
        }
    }

    #[test]
    fn infinity_round_trips_through_json_as_inf() {
        let json = serde_json::to_string(&report(f64::INFINITY)).unwrap();
        assert!(json.contains("\"psnr\":\"inf\""));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report(f64::INFINITY));
    }

    #[test]
    fn finite_values_stay_numeric_in_json() {
        let json = serde_json::to_string(&report(38.25)).unwrap();
        assert!(json.contains("\"psnr\":38.25"));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.psnr, 38.25);
    }

    #[test]
    fn csv_summary_matches_the_expected_layout() {
        let rows = vec![
            ("img_000".to_string(), report(41.1234567)),
            ("img_001".to_string(), report(f64::INFINITY)),
        ];
        let mut buf = Vec::new();
        write_csv_summary(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expect = "image_id,psnr,ssim,psnr_masked,ssim_masked\n\
                      img_000,41.1235,0.9871,inf,1.0000\n\
                      img_001,inf,0.9871,inf,1.0000\n";
        assert_eq!(text, expect);
    }
}
