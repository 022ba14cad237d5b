//! Benchmark plans: generated instances crossed with solver combinations,
//! written out as one CSV row per run.

use std::io;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accelerators::AcceleratorKind;
use crate::generators::{generate, GeneratorSpec};
use crate::operators::OperatorKind;
use crate::solver::{algorithm_name, run, SolverConfig, DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS};

/// Environment variable capping the number of concurrent bench workers.
pub const THREADS_ENV: &str = "MDP_ACCEL_THREADS";

pub const CSV_HEADER: [&str; 12] = [
    "family",
    "states",
    "density_or_bandwidth",
    "discount",
    "operator",
    "accelerator",
    "algorithm",
    "seed",
    "iterations",
    "wall_ms",
    "fallbacks",
    "status",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCell {
    pub generator: GeneratorSpec,
    pub operator: OperatorKind,
    #[serde(default)]
    pub accelerator: AcceleratorKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub membership_checks: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn default_repetitions() -> usize {
    3
}

impl BenchCell {
    pub fn new(generator: GeneratorSpec, operator: OperatorKind, accelerator: AcceleratorKind) -> Self {
        Self {
            generator,
            operator,
            accelerator,
            epsilon: DEFAULT_EPSILON,
            beta: 0.0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            membership_checks: false,
        }
    }

    pub fn config(&self) -> SolverConfig {
        SolverConfig::new(self.operator, self.accelerator)
            .epsilon(self.epsilon)
            .beta(self.beta)
            .max_iterations(self.max_iterations)
            .membership_checks(self.membership_checks)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlan {
    #[serde(default)]
    pub cells: Vec<BenchCell>,
    /// Runs per cell; the median wall time is reported.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            cells: Vec::new(),
            repetitions: default_repetitions(),
            output: None,
        }
    }
}

const DISCOUNTS: [f64; 3] = [0.9, 0.98, 0.995];

impl BenchPlan {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Uniform family, densities 100% down to 20%, every discounted
    /// combination at each of the three discounts.
    pub fn uniform_grid(states: usize, seed: u64) -> Self {
        let specs = (2..=10)
            .rev()
            .flat_map(|d| {
                DISCOUNTS
                    .iter()
                    .map(move |&l| GeneratorSpec::uniform(states, d as f64 / 10.0, l, seed))
            })
            .collect();
        Self::grid(specs)
    }

    /// Band family with bandwidths from 90% down to 10% of the state count.
    pub fn band_grid(states: usize, seed: u64) -> Self {
        let specs = (1..=9)
            .rev()
            .flat_map(|d| {
                let bw = (states * d / 10).min(states.saturating_sub(1));
                DISCOUNTS
                    .iter()
                    .map(move |&l| GeneratorSpec::band(states, bw, l, seed))
            })
            .collect();
        Self::grid(specs)
    }

    fn grid(specs: Vec<GeneratorSpec>) -> Self {
        let mut cells = Vec::new();
        for spec in specs {
            for op in OperatorKind::DISCOUNTED {
                for accel in AcceleratorKind::ALL {
                    cells.push(BenchCell::new(spec.clone(), op, accel));
                }
            }
        }
        Self {
            cells,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub family: String,
    pub states: usize,
    pub density_or_bandwidth: f64,
    pub discount: f64,
    pub operator: OperatorKind,
    pub accelerator: AcceleratorKind,
    pub algorithm: String,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub wall_ms: Option<f64>,
    pub fallbacks: Option<usize>,
    /// `converged`, `max_iterations`, or `error: ...`.
    pub status: String,
}

impl BenchRow {
    fn blank(cell: &BenchCell) -> Self {
        Self {
            family: cell.generator.family.as_str().to_string(),
            states: cell.generator.num_states,
            density_or_bandwidth: cell.generator.density_or_bandwidth(),
            discount: cell.generator.discount,
            operator: cell.operator,
            accelerator: cell.accelerator,
            algorithm: algorithm_name(cell.operator, cell.accelerator),
            seed: cell.generator.seed,
            iterations: None,
            wall_ms: None,
            fallbacks: None,
            status: String::new(),
        }
    }

    fn record(&self) -> [String; 12] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        [
            self.family.clone(),
            self.states.to_string(),
            self.density_or_bandwidth.to_string(),
            self.discount.to_string(),
            self.operator.as_str().to_string(),
            self.accelerator.as_str().to_string(),
            self.algorithm.clone(),
            self.seed.to_string(),
            opt(self.iterations.map(|x| x.to_string())),
            opt(self.wall_ms.map(|x| format!("{x:.3}"))),
            opt(self.fallbacks.map(|x| x.to_string())),
            self.status.clone(),
        ]
    }
}

pub fn write_csv<W: io::Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Worker budget: `MDP_ACCEL_THREADS` if set to a positive integer, else
/// the available parallelism.
pub fn worker_budget() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn run_cell(model: &crate::model::MdpModel, cell: &BenchCell, repetitions: usize) -> BenchRow {
    let mut row = BenchRow::blank(cell);
    let cfg = cell.config();
    let mut walls = Vec::with_capacity(repetitions);
    for _ in 0..repetitions.max(1) {
        match run(model, &cfg) {
            Ok(rep) => {
                walls.push(rep.wall_ms());
                row.iterations = Some(rep.iterations);
                row.fallbacks = Some(rep.fallback_count);
                row.status = if rep.converged { "converged" } else { "max_iterations" }.into();
            }
            Err(e) => {
                row.status = format!("error: {e}");
                return row;
            }
        }
    }
    row.wall_ms = Some(median(walls));
    row
}

/// Run every cell. Consecutive cells sharing a generator spec share one
/// generated model. Rows come back in plan order; failures are recorded in
/// the row status.
pub fn run_plan(plan: &BenchPlan) -> Vec<BenchRow> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_budget())
        .build()
        .expect("thread pool");
    let mut rows = Vec::with_capacity(plan.cells.len());
    let mut start = 0;
    while start < plan.cells.len() {
        let spec = &plan.cells[start].generator;
        let end = plan.cells[start..]
            .iter()
            .position(|c| &c.generator != spec)
            .map_or(plan.cells.len(), |k| start + k);
        let group = &plan.cells[start..end];
        match generate(spec) {
            Ok(model) => pool.install(|| {
                let out: Vec<BenchRow> = group
                    .par_iter()
                    .map(|cell| run_cell(&model, cell, plan.repetitions))
                    .collect();
                rows.extend(out);
            }),
            Err(e) => rows.extend(group.iter().map(|cell| BenchRow {
                status: format!("error: {e}"),
                ..BenchRow::blank(cell)
            })),
        }
        start = end;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan_writes_header_only() {
        let rows = run_plan(&BenchPlan::default());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn presets_cover_the_grid() {
        let t1 = BenchPlan::uniform_grid(500, 1);
        assert_eq!(t1.cells.len(), 9 * 3 * 12);
        assert_eq!(t1.cells[0].generator.density, Some(1.0));
        let t2 = BenchPlan::band_grid(500, 1);
        assert_eq!(t2.cells[0].generator.bandwidth, Some(450));
        assert_eq!(t2.cells.last().unwrap().generator.bandwidth, Some(50));
    }

    #[test]
    fn failures_are_rows() {
        let plan = BenchPlan {
            cells: vec![
                BenchCell::new(GeneratorSpec::uniform(10, 0.01, 0.9, 1), OperatorKind::Standard, AcceleratorKind::None),
                BenchCell::new(GeneratorSpec::uniform(10, 0.5, 0.9, 1), OperatorKind::Standard, AcceleratorKind::Projective),
            ],
            repetitions: 1,
            output: None,
        };
        let rows = run_plan(&plan);
        assert!(rows[0].status.starts_with("error"));
        assert_eq!(rows[1].status, "converged");
        assert_eq!(rows[1].algorithm, "PAVI");
    }

    #[test]
    fn plan_json() {
        let plan = BenchPlan::from_json(
            r#"{"cells":[{"generator":{"family":"band","num_states":20,"bandwidth":4,"discount":0.9},
                "operator":"gs","accelerator":"linear"}],"repetitions":1}"#,
        )
        .unwrap();
        assert_eq!(plan.cells[0].operator, OperatorKind::GaussSeidel);
        assert_eq!(plan.cells[0].accelerator, AcceleratorKind::LinearExtension);
        assert_eq!(run_plan(&plan)[0].algorithm, "LAGS");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
