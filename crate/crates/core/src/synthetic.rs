//! Seeded synthetic site tables for tests, benchmarks and demos.
//!
//! Sites are scattered over the contiguous-US box and grouped into states
//! on a coarse grid. State-level objectives are constant within a state;
//! continuous site-level objectives vary smoothly with location plus noise;
//! binary objectives are thresholded smooth fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use crate::dataset::{
    ObjectiveKind, ObjectiveSpec, ScaledMatrix, SiteRecord, SiteTable, SiteType,
    CONTIGUOUS_US_BOUNDS,
};

const STATE_COLS: usize = 6;
const STATE_ROWS: usize = 4;

fn state_of(lon: f64, lat: f64) -> (u32, usize) {
    let (lon_lo, lon_hi, lat_lo, lat_hi) = CONTIGUOUS_US_BOUNDS;
    let cx = (((lon - lon_lo) / (lon_hi - lon_lo)) * STATE_COLS as f64) as usize;
    let cy = (((lat - lat_lo) / (lat_hi - lat_lo)) * STATE_ROWS as f64) as usize;
    let cell = cy.min(STATE_ROWS - 1) * STATE_COLS + cx.min(STATE_COLS - 1);
    (cell as u32 + 1, cell)
}

/// `n` sites with values for every objective in `spec`.
pub fn site_table(n: usize, spec: &ObjectiveSpec, seed: u64) -> SiteTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spec.len();
    let cells = STATE_COLS * STATE_ROWS;
    let state_values: Vec<Vec<f64>> = (0..cells)
        .map(|_| (0..m).map(|_| rng.gen::<f64>()).collect())
        .collect();
    // per-objective smooth field: a*sin(f1*lon + p1) + b*cos(f2*lat + p2)
    let fields: Vec<[f64; 6]> = (0..m)
        .map(|_| {
            [
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.0..TAU),
            ]
        })
        .collect();

    let (lon_lo, lon_hi, lat_lo, lat_hi) = CONTIGUOUS_US_BOUNDS;
    let records = (0..n)
        .map(|i| {
            let lon = rng.gen_range(lon_lo + 0.5..lon_hi - 0.5);
            let lat = rng.gen_range(lat_lo + 0.5..lat_hi - 0.5);
            let (state, cell) = state_of(lon, lat);
            let county = state * 1000 + ((lon.abs() * 3.0) as u32 % 50) * 2 + 1;
            let raw_objectives = spec
                .objectives
                .iter()
                .enumerate()
                .map(|(j, obj)| {
                    let [a, f1, p1, b, f2, p2] = fields[j];
                    let smooth =
                        0.5 + 0.25 * (a * (f1 * lon + p1).sin() + b * (f2 * lat + p2).cos()) / 1.5;
                    match (obj.state_level, obj.kind) {
                        (true, ObjectiveKind::Binary) => (state_values[cell][j] > 0.5) as u8 as f64,
                        (true, ObjectiveKind::Continuous) => {
                            (100.0 * state_values[cell][j]).round() / 10.0
                        }
                        (false, ObjectiveKind::Binary) => {
                            (smooth + 0.1 * rng.gen::<f64>() > 0.55) as u8 as f64
                        }
                        (false, ObjectiveKind::Continuous) => {
                            10.0 * (smooth + 0.05 * rng.gen::<f64>())
                        }
                    }
                })
                .collect();
            SiteRecord {
                registry_id: format!("S{i:05}"),
                site_type: if i % 10 == 0 {
                    SiteType::Coal
                } else {
                    SiteType::Brownfield
                },
                longitude: lon,
                latitude: lat,
                county_fips: county,
                state_fips: state,
                raw_objectives,
            }
        })
        .collect();
    SiteTable::new(records)
}

/// Random scaled matrix with the first `binary_columns` columns in {0, 1}
/// and the rest uniform on [0, 1].
pub fn random_matrix(n: usize, m: usize, binary_columns: usize, seed: u64) -> ScaledMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ObjectiveSpec::anonymous(m);
    for obj in spec.objectives.iter_mut().take(binary_columns) {
        obj.kind = ObjectiveKind::Binary;
    }
    let values = (0..n * m)
        .map(|idx| {
            if idx % m < binary_columns {
                rng.gen_bool(0.5) as u8 as f64
            } else {
                rng.gen::<f64>()
            }
        })
        .collect();
    ScaledMatrix::from_rows((0..n).map(|i| format!("r{i}")).collect(), spec, values)
        .expect("values in range")
}

/// Random matrix whose continuous values are drawn from a small grid of
/// levels, so ties are frequent.
pub fn coarse_matrix(
    n: usize,
    m: usize,
    binary_columns: usize,
    levels: u32,
    seed: u64,
) -> ScaledMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ObjectiveSpec::anonymous(m);
    for obj in spec.objectives.iter_mut().take(binary_columns) {
        obj.kind = ObjectiveKind::Binary;
    }
    let levels = levels.max(2);
    let values = (0..n * m)
        .map(|idx| {
            if idx % m < binary_columns {
                rng.gen_bool(0.5) as u8 as f64
            } else {
                rng.gen_range(0..levels) as f64 / (levels - 1) as f64
            }
        })
        .collect();
    ScaledMatrix::from_rows((0..n).map(|i| format!("r{i}")).collect(), spec, values)
        .expect("values in range")
}
