//! Fixtures shared by the benchmarks.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use yieldcast::{Matrix, WeatherDaily, ZoneId};

/// `n × d` uniform features with a nonlinear target in the first two columns.
pub fn regression_data(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..10.0)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|r| (r[0] - 5.0).powi(2) + 2.0 * r[1 % d] + rng.random_range(-1.0..1.0))
        .collect();
    (Matrix::from_rows(&rows), y)
}

/// `n_days` consecutive days of plausible winter weather.
pub fn weather_days(n_days: i64, seed: u64) -> Vec<WeatherDaily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2017, 10, 1).unwrap();
    (0..n_days)
        .map(|i| {
            let t_min = rng.random_range(-10.0..15.0);
            WeatherDaily {
                zone_id: ZoneId::new("Z0001"),
                date: start + Duration::days(i),
                t_min,
                t_max: t_min + rng.random_range(0.0..12.0),
                precip: rng.random_range(0.0..10.0),
                solar: rng.random_range(0.0..25.0),
                humidity: rng.random_range(40.0..100.0),
            }
        })
        .collect()
}
