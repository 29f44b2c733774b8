//! Site records, objective configuration, coordinate deduplication and
//! min-max scaling into the analysis matrix.
//!
//! Everything downstream of [`orient_and_scale`] works under a single
//! convention: every column of a [`ScaledMatrix`] lies in `[0, 1]` and larger
//! is better.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Fixed (non-objective) CSV columns, in canonical output order.
pub const FIXED_COLUMNS: [&str; 6] = [
    "registry_id",
    "site_type",
    "longitude",
    "latitude",
    "county_fips",
    "state_fips",
];

/// Contiguous-US bounding box as (min_lon, max_lon, min_lat, max_lat).
pub const CONTIGUOUS_US_BOUNDS: (f64, f64, f64, f64) = (-125.0, -66.0, 24.0, 50.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteType {
    Coal,
    Brownfield,
}

impl FromStr for SiteType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coal" | "cpp" => Ok(SiteType::Coal),
            "brownfield" | "bf" => Ok(SiteType::Brownfield),
            other => Err(format!("unknown site type `{other}`")),
        }
    }
}

impl fmt::Display for SiteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteType::Coal => f.write_str("coal"),
            SiteType::Brownfield => f.write_str("brownfield"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Socioeconomic,
    Safety,
    Proximity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub name: String,
    pub direction: Direction,
    pub kind: ObjectiveKind,
    pub category: Category,
    /// Value depends only on the state (used by the lookup-table predictor).
    #[serde(default)]
    pub state_level: bool,
}

/// Ordered list of objectives. Column `j` of every matrix refers to
/// `objectives[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    #[serde(rename = "objective")]
    pub objectives: Vec<Objective>,
}

impl ObjectiveSpec {
    pub fn new(objectives: Vec<Objective>) -> Result<Self> {
        let spec = ObjectiveSpec { objectives };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() {
            return Err(Error::InvalidSpec("no objectives".into()));
        }
        let mut seen = HashSet::new();
        for o in &self.objectives {
            if o.name.trim().is_empty() {
                return Err(Error::InvalidSpec("empty objective name".into()));
            }
            if FIXED_COLUMNS.contains(&o.name.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "objective name `{}` collides with a fixed column",
                    o.name
                )));
            }
            if !seen.insert(o.name.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate objective name `{}`",
                    o.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.objectives.iter().map(|o| o.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.objectives.iter().position(|o| o.name == name)
    }

    pub fn columns_of_kind(&self, kind: ObjectiveKind) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.objectives[j].kind == kind)
            .collect()
    }

    pub fn state_level_columns(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.objectives[j].state_level)
            .collect()
    }

    /// Load from a `.json` or `.toml` file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ObjectiveSpec = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 22-objective siting configuration. Directions are a default, not
    /// a fact about the data: counts of restrictions, hazards and protected
    /// lands, the vulnerability index, labor rate and the substation and
    /// transportation distances are minimized; everything else is maximized.
    pub fn default_siting() -> Self {
        use Category::*;
        use Direction::*;
        use ObjectiveKind::*;
        let rows: [(&str, Direction, ObjectiveKind, Category, bool); 22] = [
            (
                "nuclear_restrictions",
                Minimize,
                Continuous,
                Socioeconomic,
                true,
            ),
            (
                "electricity_price",
                Maximize,
                Continuous,
                Socioeconomic,
                true,
            ),
            (
                "electricity_imports",
                Maximize,
                Continuous,
                Socioeconomic,
                true,
            ),
            (
                "nuclear_inclusive_policy",
                Maximize,
                Binary,
                Socioeconomic,
                true,
            ),
            (
                "population_sentiment",
                Maximize,
                Continuous,
                Socioeconomic,
                false,
            ),
            (
                "traditional_regulation",
                Maximize,
                Binary,
                Socioeconomic,
                true,
            ),
            ("labor_rate", Minimize, Continuous, Socioeconomic, true),
            (
                "social_vulnerability",
                Minimize,
                Continuous,
                Socioeconomic,
                false,
            ),
            ("protected_lands", Minimize, Continuous, Safety, false),
            ("hazardous_facilities", Minimize, Continuous, Safety, false),
            ("no_fault_line", Maximize, Binary, Safety, false),
            ("no_landslide", Maximize, Binary, Safety, false),
            (
                "low_peak_ground_acceleration",
                Maximize,
                Binary,
                Safety,
                false,
            ),
            ("no_flood_100yr", Maximize, Binary, Safety, false),
            ("no_wetland", Maximize, Binary, Safety, false),
            ("low_slope", Maximize, Binary, Safety, false),
            (
                "population_center_distance",
                Maximize,
                Continuous,
                Proximity,
                false,
            ),
            (
                "retiring_facility_distance",
                Maximize,
                Continuous,
                Proximity,
                false,
            ),
            ("nuclear_rd_centers", Maximize, Continuous, Proximity, false),
            (
                "substation_distance",
                Minimize,
                Continuous,
                Proximity,
                false,
            ),
            (
                "transportation_distance",
                Minimize,
                Continuous,
                Proximity,
                false,
            ),
            ("streamflow", Maximize, Continuous, Proximity, false),
        ];
        ObjectiveSpec {
            objectives: rows
                .into_iter()
                .map(|(name, direction, kind, category, state_level)| Objective {
                    name: name.to_string(),
                    direction,
                    kind,
                    category,
                    state_level,
                })
                .collect(),
        }
    }

    /// All-maximize continuous spec with generated names `obj_1..obj_m`.
    pub fn anonymous(m: usize) -> Self {
        ObjectiveSpec {
            objectives: (1..=m)
                .map(|j| Objective {
                    name: format!("obj_{j}"),
                    direction: Direction::Maximize,
                    kind: ObjectiveKind::Continuous,
                    category: Category::Socioeconomic,
                    state_level: false,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub registry_id: String,
    pub site_type: SiteType,
    pub longitude: f64,
    pub latitude: f64,
    pub county_fips: u32,
    pub state_fips: u32,
    pub raw_objectives: Vec<f64>,
}

impl SiteRecord {
    /// Predictor inputs `[lon, lat, county_fips, state_fips]`.
    pub fn inputs(&self) -> [f64; 4] {
        [
            self.longitude,
            self.latitude,
            self.county_fips as f64,
            self.state_fips as f64,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteTable {
    pub records: Vec<SiteRecord>,
}

impl SiteTable {
    pub fn new(records: Vec<SiteRecord>) -> Self {
        SiteTable { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SiteRecord> {
        self.records.iter().find(|r| r.registry_id == id)
    }

    /// Write back out in the same CSV layout [`parse_sites`] reads.
    pub fn write_csv<W: std::io::Write>(&self, spec: &ObjectiveSpec, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
        header.extend(spec.names());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.registry_id.clone(),
                r.site_type.to_string(),
                r.longitude.to_string(),
                r.latitude.to_string(),
                r.county_fips.to_string(),
                r.state_fips.to_string(),
            ];
            row.extend(r.raw_objectives.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Reject coordinates outside [`CONTIGUOUS_US_BOUNDS`].
    pub validate_bounds: bool,
}

pub fn parse_sites<R: Read>(input: R, spec: &ObjectiveSpec) -> Result<SiteTable> {
    parse_sites_with(input, spec, ParseOptions::default())
}

pub fn parse_sites_with<R: Read>(
    input: R,
    spec: &ObjectiveSpec,
    options: ParseOptions,
) -> Result<SiteTable> {
    spec.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();

    let mut fixed_pos = [usize::MAX; FIXED_COLUMNS.len()];
    let mut objective_pos = vec![usize::MAX; spec.len()];
    for (pos, name) in header.iter().enumerate() {
        if let Some(f) = FIXED_COLUMNS.iter().position(|c| *c == name) {
            fixed_pos[f] = pos;
        } else if let Some(j) = spec.index_of(name) {
            objective_pos[j] = pos;
        } else {
            return Err(Error::UnknownColumn(name.to_string()));
        }
    }
    for (f, &pos) in fixed_pos.iter().enumerate() {
        if pos == usize::MAX {
            return Err(Error::MissingColumn(FIXED_COLUMNS[f].to_string()));
        }
    }
    for (j, &pos) in objective_pos.iter().enumerate() {
        if pos == usize::MAX {
            return Err(Error::MissingColumn(spec.objectives[j].name.clone()));
        }
    }

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let field = |pos: usize, column: &str| -> Result<&str> {
            row.get(pos).ok_or_else(|| Error::MalformedRow {
                row: row_no,
                column: column.to_string(),
                message: "missing field".into(),
            })
        };
        fn number<T: FromStr>(text: &str, row: usize, column: &str) -> Result<T> {
            text.parse().map_err(|_| Error::MalformedRow {
                row,
                column: column.to_string(),
                message: format!("cannot parse `{text}` as a number"),
            })
        }

        let registry_id = field(fixed_pos[0], "registry_id")?.to_string();
        if registry_id.is_empty() {
            return Err(Error::MalformedRow {
                row: row_no,
                column: "registry_id".into(),
                message: "empty registry id".into(),
            });
        }
        let site_type = field(fixed_pos[1], "site_type")?
            .parse()
            .map_err(|message| Error::MalformedRow {
                row: row_no,
                column: "site_type".into(),
                message,
            })?;
        let longitude: f64 = number(field(fixed_pos[2], "longitude")?, row_no, "longitude")?;
        let latitude: f64 = number(field(fixed_pos[3], "latitude")?, row_no, "latitude")?;
        let county_fips = number(field(fixed_pos[4], "county_fips")?, row_no, "county_fips")?;
        let state_fips = number(field(fixed_pos[5], "state_fips")?, row_no, "state_fips")?;

        let coord_ok = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        let (lon_lo, lon_hi, lat_lo, lat_hi) = if options.validate_bounds {
            CONTIGUOUS_US_BOUNDS
        } else {
            (-180.0, 180.0, -90.0, 90.0)
        };
        if !coord_ok(longitude, lon_lo, lon_hi) {
            return Err(Error::MalformedRow {
                row: row_no,
                column: "longitude".into(),
                message: format!("{longitude} outside [{lon_lo}, {lon_hi}]"),
            });
        }
        if !coord_ok(latitude, lat_lo, lat_hi) {
            return Err(Error::MalformedRow {
                row: row_no,
                column: "latitude".into(),
                message: format!("{latitude} outside [{lat_lo}, {lat_hi}]"),
            });
        }

        let mut raw_objectives = Vec::with_capacity(spec.len());
        for (j, &pos) in objective_pos.iter().enumerate() {
            let name = &spec.objectives[j].name;
            raw_objectives.push(number(field(pos, name)?, row_no, name)?);
        }

        if !ids.insert(registry_id.clone()) {
            return Err(Error::DuplicateSite(registry_id));
        }
        records.push(SiteRecord {
            registry_id,
            site_type,
            longitude,
            latitude,
            county_fips,
            state_fips,
            raw_objectives,
        });
    }
    if records.is_empty() {
        return Err(Error::NoSites);
    }
    log::info!("parsed {} sites", records.len());
    Ok(SiteTable { records })
}

/// Kept site id -> ids of the removed sites that shared its truncated
/// coordinate key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasMap {
    pub aliases: BTreeMap<String, Vec<String>>,
}

impl AliasMap {
    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }

    pub fn removed_count(&self) -> usize {
        self.aliases.values().map(Vec::len).sum()
    }

    pub fn removed_of(&self, kept: &str) -> &[String] {
        self.aliases.get(kept).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Removed id -> kept representative.
    pub fn representatives(&self) -> HashMap<&str, &str> {
        self.aliases
            .iter()
            .flat_map(|(k, rs)| rs.iter().map(move |r| (r.as_str(), k.as_str())))
            .collect()
    }
}

/// Integer grid cell of `value` at `precision`, truncating toward zero.
///
/// Quotients within a few ulps of an integer snap to it so that decimal
/// inputs such as `40.52` (stored as `40.51999…`) land in the cell their
/// written form suggests. Parsing and the division each round once, so the
/// error of an exact decimal is far below the 8 ulp allowance.
pub fn truncation_key(value: f64, precision: f64) -> i64 {
    let q = value / precision;
    let r = q.round();
    if (q - r).abs() <= 8.0 * f64::EPSILON * r.abs().max(1.0) {
        r as i64
    } else {
        q.trunc() as i64
    }
}

pub fn truncate_coordinate(value: f64, precision: f64) -> f64 {
    truncation_key(value, precision) as f64 * precision
}

/// Collapse sites whose truncated (longitude, latitude) keys collide onto the
/// first occurrence.
pub fn truncate_dedup(table: &SiteTable, precision: f64) -> Result<(SiteTable, AliasMap)> {
    if !(precision > 0.0 && precision.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "precision must be positive, got {precision}"
        )));
    }
    let mut first_at: HashMap<(i64, i64), usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut aliases = AliasMap::default();
    for rec in &table.records {
        let key = (
            truncation_key(rec.longitude, precision),
            truncation_key(rec.latitude, precision),
        );
        match first_at.get(&key) {
            Some(&idx) => {
                let kept_id: &SiteRecord = &kept[idx];
                aliases
                    .aliases
                    .entry(kept_id.registry_id.clone())
                    .or_default()
                    .push(rec.registry_id.clone());
            }
            None => {
                first_at.insert(key, kept.len());
                kept.push(rec.clone());
            }
        }
    }
    if !aliases.is_empty() {
        log::info!(
            "dedup at {precision} degrees removed {} of {} sites",
            aliases.removed_count(),
            table.len()
        );
    }
    Ok((SiteTable { records: kept }, aliases))
}

/// The n x m analysis matrix: oriented so larger is better, min-max scaled
/// to `[0, 1]` column by column. Row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMatrix {
    values: Vec<f64>,
    n: usize,
    m: usize,
    site_ids: Vec<String>,
    spec: ObjectiveSpec,
    /// Columns that were constant before scaling (mapped to 0.5).
    #[serde(default)]
    pub constant_columns: Vec<usize>,
}

impl ScaledMatrix {
    /// Build directly from already-scaled row-major values.
    pub fn from_rows(site_ids: Vec<String>, spec: ObjectiveSpec, values: Vec<f64>) -> Result<Self> {
        let n = site_ids.len();
        let m = spec.len();
        if n == 0 {
            return Err(Error::NoSites);
        }
        spec.validate()?;
        if values.len() != n * m {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for {n} x {m}, got {}",
                n * m,
                values.len()
            )));
        }
        for (idx, v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidArgument(format!(
                    "value {v} at row {}, column {} outside [0, 1]",
                    idx / m,
                    idx % m
                )));
            }
        }
        // canonicalize -0.0
        let values = values.into_iter().map(|v| v + 0.0).collect();
        Ok(ScaledMatrix {
            values,
            n,
            m,
            site_ids,
            spec,
            constant_columns: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn site_ids(&self) -> &[String] {
        &self.site_ids
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    /// SHA-256 over shape, site ids and the exact bit patterns of the values.
    /// `site_id` followed by one column per objective.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["site_id".to_string()];
        header.extend(self.spec.names().map(String::from));
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut row = vec![self.site_ids[i].clone()];
            row.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"scaled-matrix/1");
        h.update((self.n as u64).to_le_bytes());
        h.update((self.m as u64).to_le_bytes());
        for id in &self.site_ids {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
        }
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn fingerprint_hex(&self) -> String {
        hex_string(&self.fingerprint())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Orient every objective to "larger is better" and min-max scale each
/// column to `[0, 1]`. Constant columns become 0.5 and are reported in
/// [`ScaledMatrix::constant_columns`].
pub fn orient_and_scale(table: &SiteTable, spec: &ObjectiveSpec) -> Result<ScaledMatrix> {
    spec.validate()?;
    let n = table.len();
    let m = spec.len();
    if n == 0 {
        return Err(Error::NoSites);
    }
    for rec in &table.records {
        if rec.raw_objectives.len() != m {
            return Err(Error::InvalidArgument(format!(
                "site `{}` has {} objectives, spec has {m}",
                rec.registry_id,
                rec.raw_objectives.len()
            )));
        }
        for (j, v) in rec.raw_objectives.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    site: rec.registry_id.clone(),
                    objective: spec.objectives[j].name.clone(),
                });
            }
        }
    }

    let mut values = vec![0.0; n * m];
    let mut constant_columns = Vec::new();
    for (j, obj) in spec.objectives.iter().enumerate() {
        let sign = match obj.direction {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        };
        let column: Vec<f64> = table
            .records
            .iter()
            .map(|r| sign * r.raw_objectives[j])
            .collect();
        let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range > 0.0 && range.is_finite() {
            for (i, v) in column.iter().enumerate() {
                values[i * m + j] = ((v - lo) / range).clamp(0.0, 1.0) + 0.0;
            }
        } else {
            log::warn!("objective `{}` is constant; scaled to 0.5", obj.name);
            constant_columns.push(j);
            for i in 0..n {
                values[i * m + j] = 0.5;
            }
        }
    }

    Ok(ScaledMatrix {
        values,
        n,
        m,
        site_ids: table
            .records
            .iter()
            .map(|r| r.registry_id.clone())
            .collect(),
        spec: spec.clone(),
        constant_columns,
    })
}

/// Everything the ranking and training stages need from an ingest run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedDataset {
    pub spec: ObjectiveSpec,
    pub precision: f64,
    /// Deduplicated sites, aligned with the rows of `scaled`.
    pub kept: SiteTable,
    /// Sites removed by deduplication, in input order.
    pub removed: SiteTable,
    pub aliases: AliasMap,
    pub scaled: ScaledMatrix,
}

impl IngestedDataset {
    pub fn build(table: &SiteTable, spec: &ObjectiveSpec, precision: f64) -> Result<Self> {
        let (kept, aliases) = truncate_dedup(table, precision)?;
        let kept_ids: HashSet<&str> = kept
            .records
            .iter()
            .map(|r| r.registry_id.as_str())
            .collect();
        let removed = SiteTable::new(
            table
                .records
                .iter()
                .filter(|r| !kept_ids.contains(r.registry_id.as_str()))
                .cloned()
                .collect(),
        );
        let scaled = orient_and_scale(&kept, spec)?;
        Ok(IngestedDataset {
            spec: spec.clone(),
            precision,
            kept,
            removed,
            aliases,
            scaled,
        })
    }

    /// Every original record, kept ones first.
    pub fn all_records(&self) -> impl Iterator<Item = &SiteRecord> {
        self.kept.records.iter().chain(self.removed.records.iter())
    }
}
