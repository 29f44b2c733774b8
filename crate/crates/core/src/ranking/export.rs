use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::RankResult;
use crate::dataset::{SiteRecord, SiteType};
use crate::error::Result;

/// Per-site passthrough columns for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeta {
    pub site_type: SiteType,
    pub state_fips: u32,
    pub county_fips: u32,
    pub longitude: f64,
    pub latitude: f64,
}

impl From<&SiteRecord> for SiteMeta {
    fn from(r: &SiteRecord) -> Self {
        SiteMeta {
            site_type: r.site_type,
            state_fips: r.state_fips,
            county_fips: r.county_fips,
            longitude: r.longitude,
            latitude: r.latitude,
        }
    }
}

/// One line of `scores.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub rank: usize,
    pub site_id: String,
    pub site_type: Option<SiteType>,
    pub state_fips: Option<u32>,
    pub county_fips: Option<u32>,
    pub longitude: Option<f64>,
    pub latitude: Option<f64>,
    pub sr: Option<f64>,
    pub metric: f64,
    pub representative: Option<String>,
}

/// Scores sorted by metric, best first. Sites without metadata get empty
/// passthrough columns.
pub fn write_scores_csv<W: Write>(
    result: &RankResult,
    meta: &HashMap<String, SiteMeta>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (pos, idx) in result.ranking().into_iter().enumerate() {
        let site = &result.sites[idx];
        let info = meta.get(&site.site_id);
        w.serialize(ScoreRow {
            rank: pos + 1,
            site_id: site.site_id.clone(),
            site_type: info.map(|m| m.site_type),
            state_fips: info.map(|m| m.state_fips),
            county_fips: info.map(|m| m.county_fips),
            longitude: info.map(|m| m.longitude),
            latitude: info.map(|m| m.latitude),
            sr: Some(site.sr),
            metric: site.metric,
            representative: Some(site.representative.clone()),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<ScoreRow>, _>>()?;
    Ok(rows)
}

impl RankResult {
    /// `site_id, site_type, sr, metric, sc_<objective>...` in site order.
    pub fn write_csv<W: Write>(&self, meta: &HashMap<String, SiteMeta>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "site_id".to_string(),
            "site_type".to_string(),
            "sr".to_string(),
            "metric".to_string(),
        ];
        header.extend(self.objective_names.iter().map(|n| format!("sc_{n}")));
        w.write_record(&header)?;
        for site in &self.sites {
            let mut row = vec![
                site.site_id.clone(),
                meta.get(&site.site_id)
                    .map(|m| m.site_type.to_string())
                    .unwrap_or_default(),
                site.sr.to_string(),
                site.metric.to_string(),
            ];
            row.extend(site.sc.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format `s, site_id, nr` rows for the given kept-site indices.
    pub fn write_nr_series<W: Write>(&self, kept: &[usize], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "site_id", "nr"])?;
        for (s_idx, row) in self.nr_by_length.iter().enumerate() {
            for &i in kept {
                w.write_record([
                    (s_idx + 1).to_string(),
                    self.kept_ids[i].clone(),
                    row[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_variance<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "variance"])?;
        for (s_idx, v) in self.variance_by_length.iter().enumerate() {
            w.write_record([(s_idx + 1).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
