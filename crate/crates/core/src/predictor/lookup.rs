//! State-keyed lookup plus inverse-distance interpolation of site-level
//! objectives.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_columns, EvalMetrics};
use crate::dataset::{ObjectiveKind, ObjectiveSpec, SiteRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Euclidean distance in degrees of (lon, lat).
    #[default]
    Degrees,
    /// Great-circle distance in kilometres.
    Haversine,
}

impl DistanceMetric {
    pub fn distance(self, a: (f64, f64), b: (f64, f64)) -> f64 {
        match self {
            DistanceMetric::Degrees => ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt(),
            DistanceMetric::Haversine => {
                const R: f64 = 6371.0088;
                let (lat1, lat2) = (a.1.to_radians(), b.1.to_radians());
                let dlat = lat2 - lat1;
                let dlon = (b.0 - a.0).to_radians();
                let h = (dlat / 2.0).sin().powi(2)
                    + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
                2.0 * R * h.sqrt().min(1.0).asin()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookupConfig {
    pub k: usize,
    pub metric: DistanceMetric,
}

impl Default for LookupConfig {
    fn default() -> Self {
        LookupConfig {
            k: 3,
            metric: DistanceMetric::Degrees,
        }
    }
}

fn coord_key(lon: f64, lat: f64) -> (u64, u64) {
    // +0.0 folds -0.0 onto 0.0
    ((lon + 0.0).to_bits(), (lat + 0.0).to_bits())
}

/// Uniform grid over the stored points for k-nearest queries in degrees.
#[derive(Debug, Clone, Default)]
struct GridIndex {
    origin: (f64, f64),
    cell: f64,
    cols: i64,
    rows: i64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl GridIndex {
    fn build(points: &[(f64, f64)]) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let n = points.len() as f64;
        // about two points per cell, and never many more cells than points
        let cell = (2.0 * (x1 - x0) * (y1 - y0) / n)
            .sqrt()
            .max((x1 - x0).max(y1 - y0) / (2.0 * n))
            .max(1e-9);
        let cols = ((x1 - x0) / cell).floor() as i64 + 1;
        let rows = ((y1 - y0) / cell).floor() as i64 + 1;
        let mut grid = GridIndex {
            origin: (x0, y0),
            cell,
            cols,
            rows,
            cells: HashMap::new(),
        };
        for (i, &p) in points.iter().enumerate() {
            let c = grid.cell_of(p);
            grid.cells.entry(c).or_default().push(i as u32);
        }
        grid
    }

    fn cell_of(&self, p: (f64, f64)) -> (i64, i64) {
        (
            ((p.0 - self.origin.0) / self.cell).floor() as i64,
            ((p.1 - self.origin.1) / self.cell).floor() as i64,
        )
    }

    fn nearest(&self, points: &[(f64, f64)], q: (f64, f64), k: usize) -> Vec<(f64, u32)> {
        let (cx, cy) = self.cell_of(q);
        let reach = [cx, self.cols - 1 - cx, cy, self.rows - 1 - cy]
            .iter()
            .map(|d| d.abs())
            .max()
            .unwrap_or(0);
        if reach > self.cols.max(self.rows) + 2 {
            // far outside the indexed area
            return nearest_brute(points, q, k, DistanceMetric::Degrees);
        }
        let mut best: Vec<(f64, u32)> = Vec::new();
        let visit = |ix: i64, iy: i64, best: &mut Vec<(f64, u32)>| {
            if let Some(ids) = self.cells.get(&(ix, iy)) {
                for &i in ids {
                    let d = DistanceMetric::Degrees.distance(q, points[i as usize]);
                    best.push((d, i));
                }
            }
        };
        for r in 0..=reach {
            if r == 0 {
                visit(cx, cy, &mut best);
            } else {
                for dx in -r..=r {
                    visit(cx + dx, cy - r, &mut best);
                    visit(cx + dx, cy + r, &mut best);
                }
                for dy in (-r + 1)..r {
                    visit(cx - r, cy + dy, &mut best);
                    visit(cx + r, cy + dy, &mut best);
                }
            }
            if best.len() >= k {
                best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                best.truncate(k);
                // anything in ring r+1 is at least r cells away
                if best[k - 1].0 <= r as f64 * self.cell {
                    return best;
                }
            }
        }
        best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        best.truncate(k);
        best
    }
}

/// Brute-force k nearest, ties broken by index.
pub fn nearest_brute(
    points: &[(f64, f64)],
    q: (f64, f64),
    k: usize,
    metric: DistanceMetric,
) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (metric.distance(q, p), i as u32))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LookupTable {
    pub objective_names: Vec<String>,
    pub state_columns: Vec<usize>,
    pub site_columns: Vec<usize>,
    pub binary_columns: Vec<usize>,
    /// state_fips -> values of `state_columns`, in that order.
    pub state_rows: BTreeMap<u32, Vec<f64>>,
    pub points: Vec<(f64, f64)>,
    /// Full objective rows aligned with `points`.
    pub rows: Vec<Vec<f64>>,
    pub config: LookupConfig,
    #[serde(skip)]
    exact: HashMap<(u64, u64), usize>,
    #[serde(skip)]
    grid: GridIndex,
}

impl LookupTable {
    fn rebuild_index(&mut self) {
        self.exact = self
            .points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (coord_key(x, y), i))
            .collect();
        self.grid = GridIndex::build(&self.points);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn m(&self) -> usize {
        self.objective_names.len()
    }

    /// The k nearest stored sites to `(lon, lat)` as `(distance, index)`.
    pub fn neighbors(&self, lon: f64, lat: f64) -> Vec<(f64, u32)> {
        let k = self.config.k.max(1).min(self.points.len());
        match self.config.metric {
            DistanceMetric::Degrees => self.grid.nearest(&self.points, (lon, lat), k),
            metric => nearest_brute(&self.points, (lon, lat), k, metric),
        }
    }

    /// Objectives for `x = [lon, lat, county_fips, state_fips]`, in raw
    /// units and objective order.
    pub fn predict(&self, x: &[f64; 4]) -> Result<Vec<f64>> {
        let [lon, lat, _, state] = *x;
        if let Some(&i) = self.exact.get(&coord_key(lon, lat)) {
            return Ok(self.rows[i].clone());
        }
        let state = state as u32;
        let state_row = self
            .state_rows
            .get(&state)
            .ok_or(Error::UnknownState(state))?;
        let mut out = vec![0.0; self.m()];
        for (&j, &v) in self.state_columns.iter().zip(state_row) {
            out[j] = v;
        }
        if !self.site_columns.is_empty() {
            let nb = self.neighbors(lon, lat);
            let weights: Vec<f64> = nb.iter().map(|&(d, _)| 1.0 / d).collect();
            let total: f64 = weights.iter().sum();
            for &j in &self.site_columns {
                let v: f64 = nb
                    .iter()
                    .zip(&weights)
                    .map(|(&(_, i), w)| w * self.rows[i as usize][j])
                    .sum::<f64>()
                    / total;
                out[j] = v;
            }
            for &j in &self.binary_columns {
                if self.site_columns.contains(&j) {
                    out[j] = if out[j] >= 0.5 { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut lut: LookupTable = serde_json::from_str(s)?;
        if lut.points.len() != lut.rows.len() || lut.points.is_empty() {
            return Err(Error::ModelFormat(
                "lookup table rows do not match points".into(),
            ));
        }
        lut.rebuild_index();
        Ok(lut)
    }
}

pub fn predict_objectives(lut: &LookupTable, x: &[f64; 4]) -> Result<Vec<f64>> {
    lut.predict(x)
}

pub fn build_lookup(records: &[SiteRecord], spec: &ObjectiveSpec) -> Result<LookupTable> {
    build_lookup_with(records, spec, LookupConfig::default())
}

pub fn build_lookup_with(
    records: &[SiteRecord],
    spec: &ObjectiveSpec,
    config: LookupConfig,
) -> Result<LookupTable> {
    if records.is_empty() {
        return Err(Error::NoSites);
    }
    if config.k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let m = spec.len();
    let state_columns = spec.state_level_columns();
    let site_columns: Vec<usize> = (0..m).filter(|j| !state_columns.contains(j)).collect();
    let binary_columns = spec.columns_of_kind(ObjectiveKind::Binary);

    let mut state_rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut exact: HashMap<(u64, u64), usize> = HashMap::new();
    let mut points = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for r in records {
        if r.raw_objectives.len() != m {
            return Err(Error::InvalidArgument(format!(
                "site {} has {} objectives, expected {m}",
                r.registry_id,
                r.raw_objectives.len()
            )));
        }
        state_rows
            .entry(r.state_fips)
            .or_insert_with(|| state_columns.iter().map(|&j| r.raw_objectives[j]).collect());
        let key = coord_key(r.longitude, r.latitude);
        if let Some(&i) = exact.get(&key) {
            if rows[i] != r.raw_objectives {
                return Err(Error::ConflictingDuplicate {
                    lon: r.longitude,
                    lat: r.latitude,
                });
            }
            continue;
        }
        exact.insert(key, points.len());
        points.push((r.longitude, r.latitude));
        rows.push(r.raw_objectives.clone());
    }

    let mut lut = LookupTable {
        objective_names: spec.names().map(String::from).collect(),
        state_columns,
        site_columns,
        binary_columns,
        state_rows,
        points,
        rows,
        config,
        exact: HashMap::new(),
        grid: GridIndex::default(),
    };
    lut.rebuild_index();
    Ok(lut)
}

/// Metrics of each fold plus their mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<EvalMetrics>,
    pub mean: EvalMetrics,
}

/// Repeated random hold-out: each fold removes `fraction` of the sites
/// (at least two), rebuilds the table from the rest and scores the
/// held-out predictions in raw units. Only sites whose state keeps another
/// site are eligible for holding out, so every query has a state row.
pub fn cross_validate(
    records: &[SiteRecord],
    spec: &ObjectiveSpec,
    config: LookupConfig,
    folds: usize,
    fraction: f64,
    seed: u64,
) -> Result<CrossValidation> {
    if folds == 0 || !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(
            "need at least one fold and a fraction in (0, 1)".into(),
        ));
    }
    let mut per_state: HashMap<u32, usize> = HashMap::new();
    for r in records {
        *per_state.entry(r.state_fips).or_default() += 1;
    }
    let eligible: Vec<usize> = (0..records.len())
        .filter(|&i| per_state[&records[i].state_fips] > 1)
        .collect();
    let take = ((records.len() as f64 * fraction).round() as usize).max(2);
    if eligible.len() < take || records.len() <= take {
        return Err(Error::InvalidArgument(format!(
            "{} eligible sites cannot supply hold-out folds of {take}",
            eligible.len()
        )));
    }

    let m = spec.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(folds);
    for _ in 0..folds {
        let mut pool = eligible.clone();
        pool.shuffle(&mut rng);
        // drop picks that would strip a state of its last remaining site
        let mut left = per_state.clone();
        let mut held = Vec::with_capacity(take);
        for i in pool {
            let c = left.get_mut(&records[i].state_fips).expect("state counted");
            if *c > 1 {
                *c -= 1;
                held.push(i);
                if held.len() == take {
                    break;
                }
            }
        }
        held.sort_unstable();
        let train: Vec<SiteRecord> = records
            .iter()
            .enumerate()
            .filter(|(i, _)| held.binary_search(i).is_err())
            .map(|(_, r)| r.clone())
            .collect();
        let lut = build_lookup_with(&train, spec, config)?;
        let mut truth = Vec::with_capacity(held.len() * m);
        let mut pred = Vec::with_capacity(held.len() * m);
        for &i in &held {
            let r = &records[i];
            truth.extend_from_slice(&r.raw_objectives);
            pred.extend(lut.predict(&r.inputs())?);
        }
        results.push(evaluate_columns(&truth, &pred, m)?);
    }
    let mean = EvalMetrics::mean(&results).expect("at least one fold");
    Ok(CrossValidation {
        folds: results,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Category, Direction, Objective, SiteType};

    fn spec() -> ObjectiveSpec {
        let obj = |name: &str, kind, state_level| Objective {
            name: name.into(),
            direction: Direction::Maximize,
            kind,
            category: Category::Proximity,
            state_level,
        };
        ObjectiveSpec::new(vec![
            obj("price", ObjectiveKind::Continuous, true),
            obj("slope", ObjectiveKind::Binary, false),
            obj("distance", ObjectiveKind::Continuous, false),
        ])
        .unwrap()
    }

    fn site(id: &str, lon: f64, lat: f64, state: u32, v: [f64; 3]) -> SiteRecord {
        SiteRecord {
            registry_id: id.into(),
            site_type: SiteType::Brownfield,
            longitude: lon,
            latitude: lat,
            county_fips: state * 1000 + 1,
            state_fips: state,
            raw_objectives: v.to_vec(),
        }
    }

    fn table() -> Vec<SiteRecord> {
        vec![
            site("a", -80.0, 40.0, 1, [5.0, 1.0, 10.0]),
            site("b", -82.0, 40.0, 1, [5.0, 0.0, 20.0]),
            site("c", -81.0, 42.0, 1, [5.0, 1.0, 40.0]),
            site("d", -100.0, 35.0, 2, [9.0, 0.0, 70.0]),
        ]
    }

    #[test]
    fn exact_match_returns_row() {
        let lut = build_lookup(&table(), &spec()).unwrap();
        for r in table() {
            assert_eq!(lut.predict(&r.inputs()).unwrap(), r.raw_objectives);
        }
    }

    #[test]
    fn state_columns_come_from_state_row() {
        let lut = build_lookup(&table(), &spec()).unwrap();
        // far from the only state-2 site, next to state-1 sites
        let p = lut.predict(&[-81.0, 40.5, 2001.0, 2.0]).unwrap();
        assert_eq!(p[0], 9.0);
    }

    #[test]
    fn equidistant_pair_averages() {
        let recs = vec![
            site("a", 0.0, 0.0, 1, [1.0, 0.0, 10.0]),
            site("b", 2.0, 0.0, 1, [1.0, 0.0, 30.0]),
        ];
        let lut = build_lookup(&recs, &spec()).unwrap();
        let p = lut.predict(&[1.0, 0.0, 1001.0, 1.0]).unwrap();
        assert_eq!(p[2], 20.0);
    }

    #[test]
    fn binary_columns_are_rounded() {
        let lut = build_lookup(&table(), &spec()).unwrap();
        let p = lut.predict(&[-80.9, 40.6, 1001.0, 1.0]).unwrap();
        assert!(p[1] == 0.0 || p[1] == 1.0);
    }

    #[test]
    fn unknown_state_errors() {
        let lut = build_lookup(&table(), &spec()).unwrap();
        assert!(matches!(
            lut.predict(&[-81.0, 41.0, 7001.0, 7.0]),
            Err(Error::UnknownState(7))
        ));
    }

    #[test]
    fn conflicting_duplicates_error() {
        let mut recs = table();
        recs.push(site("a2", -80.0, 40.0, 1, [5.0, 1.0, 11.0]));
        assert!(matches!(
            build_lookup(&recs, &spec()),
            Err(Error::ConflictingDuplicate { .. })
        ));
        // identical duplicates are tolerated
        let mut recs = table();
        recs.push(site("a2", -80.0, 40.0, 1, [5.0, 1.0, 10.0]));
        assert_eq!(build_lookup(&recs, &spec()).unwrap().len(), 4);
    }

    #[test]
    fn json_round_trip_rebuilds_index() {
        let lut = build_lookup(&table(), &spec()).unwrap();
        let back = LookupTable::from_json(&lut.to_json().unwrap()).unwrap();
        let q = [-81.3, 40.7, 1001.0, 1.0];
        assert_eq!(lut.predict(&q).unwrap(), back.predict(&q).unwrap());
        assert_eq!(
            back.predict(&table()[2].inputs()).unwrap(),
            table()[2].raw_objectives
        );
    }

    #[test]
    fn haversine_scale() {
        // one degree of latitude is about 111 km
        let d = DistanceMetric::Haversine.distance((0.0, 0.0), (0.0, 1.0));
        assert!((d - 111.2).abs() < 0.2, "{d}");
    }
}
