//! Synthetic hidden-location regression benchmark.
//!
//! Rentals are scattered uniformly in a disk around a city center. Each row
//! holds `[1, east, north, distance, extra...]` and the price is linear in it
//! plus Gaussian noise. Training rows only reveal the grid square containing
//! the location; the distance to the center stays observed. Test rows are
//! complete, so every method is scored on the same data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{RermError, Result};
use crate::loss::LossSpec;
use crate::par::{map_range, Exec};
use crate::rerm::{solve_with, RermProblem};
use crate::set::{Primitive, SetExpr};
use crate::solver::SolverSettings;

/// Columns of the two hidden coordinates.
const COORDS: std::ops::Range<usize> = 1..3;
const DISTANCE: usize = 3;
const DEFAULT_COEFFICIENTS: [f64; 6] = [150.0, 10.0, -6.0, -15.0, 20.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// OLS without the coordinate columns.
    Drop,
    /// OLS with each location replaced by its square center.
    CenterImpute,
    /// Robust least squares over the square.
    RobustSquare,
    /// Robust least squares over the square intersected with the disk of
    /// known radius around the center.
    RobustSquareDisk,
    /// OLS on the complete training data.
    FullOls,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Drop,
        Method::CenterImpute,
        Method::RobustSquare,
        Method::RobustSquareDisk,
        Method::FullOls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Drop => "drop",
            Method::CenterImpute => "center_impute",
            Method::RobustSquare => "robust_square",
            Method::RobustSquareDisk => "robust_square_disk",
            Method::FullOls => "full_ols",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Feature count including the intercept column; at least 4.
    pub d: usize,
    pub square_side: f64,
    pub city_radius: f64,
    pub noise_std: f64,
    /// Price model, one entry per feature. Defaults are extended with 10.
    pub coefficients: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub eps: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_train: 300,
            n_test: 150,
            d: 6,
            square_side: 1.0,
            city_radius: 7.0,
            noise_std: 60.0,
            coefficients: None,
            seeds: (0..10).collect(),
            methods: Method::ALL.to_vec(),
            eps: 1e-8,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RermError::InvalidSet(m));
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be at least 1".into());
        }
        if self.d < 4 {
            return bad(format!("d = {} leaves no room for intercept, coordinates and distance", self.d));
        }
        if !(self.square_side > 0.0 && self.square_side.is_finite()) {
            return bad(format!("square_side {} must be positive", self.square_side));
        }
        if !(self.city_radius > 0.0 && self.city_radius.is_finite()) {
            return bad(format!("city_radius {} must be positive", self.city_radius));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std {} must be non-negative", self.noise_std));
        }
        if let Some(c) = &self.coefficients {
            if c.len() != self.d {
                return Err(RermError::dim("coefficients", self.d, c.len()));
            }
        }
        if self.seeds.is_empty() || self.methods.is_empty() {
            return bad("seeds and methods must be non-empty".into());
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.coefficients
            .clone()
            .unwrap_or_else(|| (0..self.d).map(|j| DEFAULT_COEFFICIENTS.get(j).copied().unwrap_or(10.0)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub test_mse: f64,
    /// `test_mse` minus the full-data OLS test MSE for the same seed.
    pub excess: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub runs: usize,
    pub mean_mse: f64,
    pub mean_excess: f64,
    pub stderr_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub methods: BTreeMap<String, MethodSummary>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by method, then seed.
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

/// One seed's training and test data.
#[derive(Clone, Debug, PartialEq)]
pub struct Replica {
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
    /// Center of the square containing each training location.
    pub square_centers: Vec<[f64; 2]>,
    pub x_test: Vec<Vec<f64>>,
    pub y_test: Vec<f64>,
}

pub fn generate(config: &ExperimentConfig, seed: u64) -> Replica {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef = config.coefficients();
    let mut sample = |m: usize| {
        let mut x = Vec::with_capacity(m);
        let mut y = Vec::with_capacity(m);
        for _ in 0..m {
            let r = config.city_radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            let (east, north) = (r * phi.cos(), r * phi.sin());
            let mut row = vec![1.0, east, north, east.hypot(north)];
            row.extend((4..config.d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let noise: f64 = rng.sample(StandardNormal);
            y.push(dot(&row, &coef) + config.noise_std * noise);
            x.push(row);
        }
        (x, y)
    };
    let (x_train, y_train) = sample(config.n_train);
    let (x_test, y_test) = sample(config.n_test);
    let side = config.square_side;
    let square_centers = x_train
        .iter()
        .map(|r| [((r[1] / side).floor() + 0.5) * side, ((r[2] / side).floor() + 0.5) * side])
        .collect();
    Replica {
        x_train,
        y_train,
        square_centers,
        x_test,
        y_test,
    }
}

/// Least-squares fit through an SVD.
pub fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let d = x.first().map_or(0, Vec::len);
    let a = DMatrix::from_fn(x.len(), d, |i, j| x[i][j]);
    let b = DVector::from_column_slice(y);
    let theta = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| RermError::Solver {
            status: crate::program::SolveStatus::NumericalError,
            message: e.to_string(),
        })?;
    Ok(theta.iter().copied().collect())
}

impl Replica {
    fn centered_rows(&self) -> Vec<Vec<f64>> {
        self.x_train
            .iter()
            .zip(&self.square_centers)
            .map(|(r, c)| {
                let mut r = r.clone();
                r[COORDS].copy_from_slice(c);
                r
            })
            .collect()
    }

    /// The square set of training row `i`, optionally cut by the disk of
    /// radius equal to the observed distance.
    pub fn uncertainty_set(&self, i: usize, side: f64, with_disk: bool) -> SetExpr {
        let row = &self.x_train[i];
        let d = row.len();
        let c = self.square_centers[i];
        let observed: Vec<usize> = (0..d).filter(|j| !COORDS.contains(j)).collect();
        let values = observed.iter().map(|&j| row[j]).collect();
        let mut lower = vec![f64::NEG_INFINITY; d];
        let mut upper = vec![f64::INFINITY; d];
        for (k, j) in COORDS.enumerate() {
            lower[j] = c[k] - 0.5 * side;
            upper[j] = c[k] + 0.5 * side;
        }
        let set = SetExpr::whole(d)
            .with(Primitive::fix(observed, values))
            .with(Primitive::Box { lower, upper });
        if with_disk {
            set.with(Primitive::ball_on(crate::set::Norm::L2, COORDS, vec![0.0, 0.0], row[DISTANCE]))
        } else {
            set
        }
    }

    /// The squared loss is homogeneous, so targets are fitted in units of
    /// their root mean square and the coefficients scaled back.
    fn robust_fit(&self, side: f64, with_disk: bool, settings: &SolverSettings) -> Result<Vec<f64>> {
        let sets = (0..self.x_train.len()).map(|i| self.uncertainty_set(i, side, with_disk)).collect();
        let d = self.x_train[0].len();
        let unit = (self.y_train.iter().map(|v| v * v).sum::<f64>() / self.y_train.len() as f64)
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let p = RermProblem::new(
            self.centered_rows(),
            self.y_train.iter().map(|v| v / unit).collect(),
            sets,
            LossSpec::Pnorm { p: 2 },
            SetExpr::whole(d),
        )?;
        Ok(solve_with(&p, settings, Exec::Sequential)?.theta.iter().map(|t| t * unit).collect())
    }

    /// Fit `method` and return its coefficients over all `d` columns (zeros
    /// on dropped columns).
    pub fn fit(&self, method: Method, side: f64, settings: &SolverSettings) -> Result<Vec<f64>> {
        match method {
            Method::FullOls => least_squares(&self.x_train, &self.y_train),
            Method::CenterImpute => least_squares(&self.centered_rows(), &self.y_train),
            Method::Drop => {
                let keep: Vec<usize> = (0..self.x_train[0].len()).filter(|j| !COORDS.contains(j)).collect();
                let rows: Vec<Vec<f64>> = self.x_train.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
                let t = least_squares(&rows, &self.y_train)?;
                let mut theta = vec![0.0; self.x_train[0].len()];
                for (k, &j) in keep.iter().enumerate() {
                    theta[j] = t[k];
                }
                Ok(theta)
            }
            Method::RobustSquare => self.robust_fit(side, false, settings),
            Method::RobustSquareDisk => self.robust_fit(side, true, settings),
        }
    }

    pub fn test_mse(&self, theta: &[f64]) -> f64 {
        let sse: f64 = self.x_test.iter().zip(&self.y_test).map(|(r, y)| (dot(r, theta) - y).powi(2)).sum();
        sse / self.y_test.len() as f64
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let data = generate(config, seed);
    let settings = SolverSettings {
        eps_abs: config.eps,
        eps_rel: config.eps,
        ..SolverSettings::default()
    };
    let baseline = data.test_mse(&data.fit(Method::FullOls, config.square_side, &settings)?);
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|m| {
            let start = Instant::now();
            let theta = data
                .fit(m, config.square_side, &settings)
                .map_err(|e| RermError::InvalidSet(format!("seed {seed}, method {}: {e}", m.name())))?;
            let test_mse = data.test_mse(&theta);
            Ok(ResultRow {
                method: m,
                seed,
                test_mse,
                excess: test_mse - baseline,
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, Exec::default())
}

/// Seeds run concurrently under `exec`; a failing seed is reported in the
/// summary and contributes no rows.
pub fn run_experiment_with(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    config.validate()?;
    let per_seed = map_range(exec, config.seeds.len(), |k| run_seed(config, config.seeds[k]));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in per_seed.into_iter().enumerate() {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => failures.push(SeedFailure {
                seed: config.seeds[k],
                error: e.to_string(),
            }),
        }
    }
    rows.sort_by_key(|r| (r.method, r.seed));
    let summary = Summary {
        config: config.clone(),
        methods: summarize(&rows),
        failures,
    };
    Ok(ExperimentOutput { rows, summary })
}

pub fn summarize(rows: &[ResultRow]) -> BTreeMap<String, MethodSummary> {
    let mut groups: BTreeMap<Method, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.method).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(m, rs)| {
            let n = rs.len() as f64;
            let mean_mse = rs.iter().map(|r| r.test_mse).sum::<f64>() / n;
            let mean_excess = rs.iter().map(|r| r.excess).sum::<f64>() / n;
            let var = if rs.len() > 1 {
                rs.iter().map(|r| (r.excess - mean_excess).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let s = MethodSummary {
                runs: rs.len(),
                mean_mse,
                mean_excess,
                stderr_excess: (var / n).sqrt(),
            };
            (m.name().to_string(), s)
        })
        .collect()
}

impl ExperimentOutput {
    /// `method,seed,test_mse,excess`, without timings so reruns compare equal.
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("method,seed,test_mse,excess\n");
        for r in &self.rows {
            writeln!(s, "{},{},{:?},{:?}", r.method.name(), r.seed, r.test_mse, r.excess).unwrap();
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("method,seed,wall_time_s\n");
        for r in &self.rows {
            writeln!(s, "{},{},{:?}", r.method.name(), r.seed, r.wall_time_s).unwrap();
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    /// Write `rows.csv`, `summary.json` and `timings.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.rows_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        std::fs::write(dir.join("timings.csv"), self.timings_csv())?;
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_train: 40,
            n_test: 30,
            seeds: vec![3, 1],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn generated_data_is_consistent() {
        let c = small();
        let r = generate(&c, 5);
        assert_eq!(r.x_train.len(), 40);
        assert_eq!(r.x_test[0].len(), 6);
        for (row, sq) in r.x_train.iter().zip(&r.square_centers) {
            assert!(row[3] <= c.city_radius && (row[1].hypot(row[2]) - row[3]).abs() < 1e-12);
            assert!((row[1] - sq[0]).abs() <= 0.5 && (row[2] - sq[1]).abs() <= 0.5);
        }
        assert_eq!(generate(&c, 5), r);
        assert_ne!(generate(&c, 6).y_train, r.y_train);
    }

    #[test]
    fn sets_contain_the_true_row() {
        let r = generate(&small(), 2);
        for i in 0..r.x_train.len() {
            for disk in [false, true] {
                assert!(r.uncertainty_set(i, 1.0, disk).contains(&r.x_train[i], 1e-12));
            }
        }
    }

    #[test]
    fn least_squares_recovers_exact_fit() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, (i * i) as f64 * 0.1]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 - r[1] + 3.0 * r[2]).collect();
        let t = least_squares(&x, &y).unwrap();
        for (a, b) in t.iter().zip([2.0, -1.0, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn full_ols_only_has_zero_excess() {
        let c = ExperimentConfig {
            methods: vec![Method::FullOls],
            ..small()
        };
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.excess == 0.0));
        assert_eq!(out.rows[0].seed, 1);
    }

    #[test]
    fn vanishing_squares_match_full_ols() {
        let c = ExperimentConfig {
            square_side: 1e-6,
            methods: vec![Method::RobustSquare, Method::FullOls],
            seeds: vec![7],
            ..small()
        };
        let out = run_experiment(&c).unwrap();
        assert!(out.summary.failures.is_empty(), "{:?}", out.summary.failures);
        let mse = |m: Method| out.rows.iter().find(|r| r.method == m).unwrap().test_mse;
        let (a, b) = (mse(Method::RobustSquare), mse(Method::FullOls));
        assert!((a - b).abs() <= 1e-3 * b, "{a} vs {b}");
    }

    #[test]
    fn summary_matches_rows_and_outputs_are_stable() {
        let c = ExperimentConfig {
            methods: vec![Method::Drop, Method::CenterImpute, Method::FullOls],
            seeds: vec![0, 1, 2],
            ..small()
        };
        let a = run_experiment_with(&c, Exec::Parallel).unwrap();
        let b = run_experiment_with(&c, Exec::Sequential).unwrap();
        assert_eq!(a.rows_csv(), b.rows_csv());
        assert_eq!(a.summary_json(), b.summary_json());
        for (name, s) in &a.summary.methods {
            let rows: Vec<&ResultRow> = a.rows.iter().filter(|r| r.method.name() == name).collect();
            let mean = rows.iter().map(|r| r.excess).sum::<f64>() / rows.len() as f64;
            assert!((mean - s.mean_excess).abs() <= 1e-12 * (1.0 + mean.abs()));
        }
        let parsed: Summary = serde_json::from_str(&a.summary_json()).unwrap();
        assert_eq!(parsed, a.summary);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig { d: 3, ..small() }.validate().is_err());
        assert!(ExperimentConfig { square_side: 0.0, ..small() }.validate().is_err());
        assert!(ExperimentConfig { n_test: 0, ..small() }.validate().is_err());
        assert!(ExperimentConfig {
            coefficients: Some(vec![1.0]),
            ..small()
        }
        .validate()
        .is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"seeds":[4],"methods":["drop","robust_square_disk"]}"#).unwrap();
        assert_eq!(c.n_train, 300);
        assert_eq!(c.methods, vec![Method::Drop, Method::RobustSquareDisk]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"seedz":[4]}"#).is_err());
        assert_eq!(ExperimentConfig { d: 8, ..small() }.coefficients()[7], 10.0);
    }
}
