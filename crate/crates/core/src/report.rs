//! Plain-text listings for reports.

use std::fmt::Write as _;

use crate::ranking::ScoreRow;

/// The `count` best rows by metric. Ties keep their input order.
pub fn top_rows(rows: &[ScoreRow], count: usize) -> Vec<ScoreRow> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| b.metric.total_cmp(&a.metric));
    sorted.truncate(count);
    for (pos, row) in sorted.iter_mut().enumerate() {
        row.rank = pos + 1;
    }
    sorted
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref()
        .map(ToString::to_string)
        .unwrap_or_else(|| "-".into())
}

fn coord(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

/// Fixed-width ranking table: site, type, state/county FIPS, coordinates and
/// metric to four decimals.
pub fn format_top(rows: &[ScoreRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<14} {:<10} {:>5} {:>6} {:>9} {:>8} {:>8}",
        "rank", "site_id", "type", "state", "county", "longitude", "latitude", "metric"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:>4}  {:<14} {:<10} {:>5} {:>6} {:>9} {:>8} {:>8.4}",
            row.rank,
            row.site_id,
            opt(&row.site_type),
            opt(&row.state_fips),
            opt(&row.county_fips),
            coord(row.longitude),
            coord(row.latitude),
            row.metric
        );
    }
    out
}
