//! Per-image metric rows and their mean, as CSV and JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "id,fm,pfm,psnr,drd,lev";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fm: f64,
    #[serde(rename = "pfm")]
    pub p_fm: f64,
    /// `f64::INFINITY` for a perfect prediction; written as `"inf"`.
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr: f64,
    pub drd: f64,
    pub lev: Option<f64>,
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Psnr {
        Num(f64),
        Text(String),
    }
    match Psnr::deserialize(d)? {
        Psnr::Num(v) => Ok(v),
        Psnr::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Psnr::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value {t}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: MetricReport,
    pub images: usize,
    /// Rows whose infinite PSNR was left out of the PSNR mean.
    pub psnr_infinite: usize,
}

/// Field-wise arithmetic mean. Infinite PSNR entries are excluded from the PSNR
/// mean (which is itself infinite only if every entry is); `lev` averages the
/// rows that carry it.
pub fn aggregate(reports: &[MetricReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty report list"));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let finite: Vec<f64> = reports.iter().map(|r| r.psnr).filter(|p| p.is_finite()).collect();
    let psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let levs: Vec<f64> = reports.iter().filter_map(|r| r.lev).collect();
    let lev = (!levs.is_empty()).then(|| levs.iter().sum::<f64>() / levs.len() as f64);
    Ok(Aggregate {
        mean: MetricReport {
            fm: mean(|r| r.fm),
            p_fm: mean(|r| r.p_fm),
            psnr,
            drd: mean(|r| r.drd),
            lev,
        },
        images: reports.len(),
        psnr_infinite: reports.len() - finite.len(),
    })
}

fn csv_line(out: &mut String, id: &str, r: &MetricReport) {
    let psnr = if r.psnr.is_infinite() { "inf".to_string() } else { r.psnr.to_string() };
    let lev = r.lev.map(|v| v.to_string()).unwrap_or_default();
    let _ = writeln!(out, "{id},{},{},{psnr},{},{lev}", r.fm, r.p_fm, r.drd);
}

impl Aggregate {
    /// One row per image followed by a `mean` row.
    pub fn to_csv(&self, rows: &[ReportRow]) -> String {
        let mut out = String::new();
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for row in rows {
            csv_line(&mut out, &row.id, &row.report);
        }
        csv_line(&mut out, "mean", &self.mean);
        out
    }

    pub fn to_json(&self, rows: &[ReportRow]) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            images: &'a [ReportRow],
            summary: &'a Aggregate,
        }
        Ok(serde_json::to_string_pretty(&Doc { images: rows, summary: self })?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(fm: f64, psnr: f64) -> MetricReport {
        MetricReport { fm, p_fm: fm, psnr, drd: 1.0, lev: None }
    }

    #[test]
    fn aggregate_rules() {
        let single = aggregate(&[report(90.0, 15.0)]).unwrap();
        assert_eq!(single.mean, report(90.0, 15.0));
        let two = aggregate(&[report(90.0, 10.0), report(100.0, f64::INFINITY)]).unwrap();
        assert_eq!(two.mean.fm, 95.0);
        assert_eq!(two.mean.psnr, 10.0);
        assert_eq!(two.psnr_infinite, 1);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_and_json_layout() {
        let rows = vec![
            ReportRow { id: "a".into(), report: report(100.0, f64::INFINITY) },
            ReportRow { id: "b".into(), report: MetricReport { lev: Some(50.0), ..report(80.0, 12.5) } },
        ];
        let agg = aggregate(&rows.iter().map(|r| r.report.clone()).collect::<Vec<_>>()).unwrap();
        let csv = agg.to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "a,100,100,inf,1,");
        assert_eq!(lines[3], "mean,90,90,12.5,1,50");
        assert_eq!(lines.len(), 4);

        let json = agg.to_json(&rows).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["images"][0]["psnr"], "inf");
        assert_eq!(v["images"][1]["pfm"], 80.0);
        let back: ReportRow = serde_json::from_value(v["images"][0].clone()).unwrap();
        assert_eq!(back, rows[0]);
    }
}
