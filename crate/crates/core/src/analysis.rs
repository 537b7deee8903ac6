//! Sweep harness and post-processing: position-density maps over the central
//! plaquette, exit-time maps, and winding/orbit diagnostics.
//!
//! Sweep cells are pure functions of the config, so results are independent
//! of worker count and execution order; per-cell failures are tagged and
//! excluded rather than aborting a sweep.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::config::SimulationConfig;
use crate::dynamics::{run_trajectory, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Real};

/// 2D bin counts of sampled impurity positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistogram<T: Real> {
    pub nx: usize,
    pub ny: usize,
    /// Row-major counts, x fastest.
    pub counts: Vec<u64>,
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
    /// Samples that fell inside the window; equals the sum of counts.
    pub in_window: u64,
    /// All samples offered to the histogram.
    pub total_samples: u64,
}

impl<T: Real> DensityHistogram<T> {
    pub fn new(nx: usize, ny: usize, x_min: T, x_max: T, y_min: T, y_max: T) -> Self {
        Self {
            nx,
            ny,
            counts: vec![0; nx * ny],
            x_min,
            x_max,
            y_min,
            y_max,
            in_window: 0,
            total_samples: 0,
        }
    }

    pub fn add(&mut self, p: &Vector2<T>) {
        self.total_samples += 1;
        if p.x < self.x_min || p.x >= self.x_max || p.y < self.y_min || p.y >= self.y_max {
            return;
        }
        let fx = to_f64((p.x - self.x_min) / (self.x_max - self.x_min)) * self.nx as f64;
        let fy = to_f64((p.y - self.y_min) / (self.y_max - self.y_min)) * self.ny as f64;
        let ix = (fx as usize).min(self.nx - 1);
        let iy = (fy as usize).min(self.ny - 1);
        self.counts[iy * self.nx + ix] += 1;
        self.in_window += 1;
    }

    pub fn count_sum(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Outcome bookkeeping for one sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepSummary {
    pub cells: usize,
    pub failed: usize,
    /// (cell index, error tag) for every excluded cell.
    pub failures: Vec<(usize, String)>,
}

impl SweepSummary {
    pub fn success_fraction(&self) -> f64 {
        if self.cells == 0 {
            return 1.0;
        }
        (self.cells - self.failed) as f64 / self.cells as f64
    }
}

/// Runs a closure over cells in an optionally sized local thread pool,
/// preserving cell order in the output.
fn run_cells<T, F>(jobs: usize, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let body = || (0..count).into_par_iter().map(|i| f(i)).collect();
    if jobs == 0 {
        body()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool construction");
        pool.install(body)
    }
}

/// Initial positions of an n×n sweep grid covering the central plaquette.
///
/// The window spans `lo·a` to `hi·a` from the plaquette's lower-left lattice
/// atom along both axes, so the default (0.1, 0.9) keeps every start strictly
/// inside the plaquette.
pub fn sweep_grid_positions<T: Real>(
    config: &SimulationConfig<T>,
    nx: usize,
    ny: usize,
    window_frac: (T, T),
) -> Vec<Vector3<T>> {
    let center = config.lattice.central_plaquette_center();
    let a = config.lattice.spacing;
    let half = config.lattice.plaquette_half_width();
    let corner = Vector2::new(center.x - half, center.y - half);
    let (lo, hi) = window_frac;
    let span = hi - lo;
    let step = |k: usize, n: usize| -> T {
        if n == 1 {
            lo + span / (T::one() + T::one())
        } else {
            lo + span * real::<T>(k as f64) / real::<T>((n - 1) as f64)
        }
    };
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            out.push(Vector3::new(
                corner.x + a * step(ix, nx),
                corner.y + a * step(iy, ny),
                T::zero(),
            ));
        }
    }
    out
}

/// Density sweep: one zero-momentum trajectory per grid cell, with all
/// sampled positions accumulated into a histogram over the lattice plus a
/// one-spacing margin.
pub fn position_density_sweep<T: Real>(
    config: &SimulationConfig<T>,
    grid: (usize, usize),
    window_frac: (T, T),
    bins: usize,
    jobs: usize,
) -> Result<(DensityHistogram<T>, SweepSummary)> {
    config.validate()?;
    let starts = sweep_grid_positions(config, grid.0, grid.1, window_frac);
    let outcomes = run_cells(jobs, starts.len(), |idx| {
        let mut cell_config = config.clone();
        cell_config.initial_position = starts[idx];
        cell_config.initial_momentum = Vector3::zeros();
        run_trajectory(&cell_config).map(|record| {
            let failed = record.termination.is_error();
            (record.positions, failed, format!("{:?}", record.termination))
        })
    });

    let margin = config.lattice.spacing;
    let extent = config.lattice.circumradius() + margin;
    let mut histogram =
        DensityHistogram::new(bins, bins, -extent, extent, -extent, extent);
    let mut summary = SweepSummary {
        cells: starts.len(),
        ..Default::default()
    };
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((positions, failed, tag)) => {
                if failed {
                    summary.failed += 1;
                    summary.failures.push((idx, tag));
                    continue;
                }
                for p in &positions {
                    histogram.add(p);
                }
            }
            Err(e) => {
                summary.failed += 1;
                summary.failures.push((idx, e.to_string()));
            }
        }
    }
    Ok((histogram, summary))
}

/// How a cell's exit time was determined.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitTag {
    /// Steepest population drop, confirmed by a geometric exit.
    Population,
    /// No geometric exit before t_final; the cell carries t_final.
    NoExit,
    /// Trajectory failed; the cell is excluded from statistics.
    Failed,
}

/// Grid of exit times over initial positions in the central plaquette.
#[derive(Debug, Clone)]
pub struct ExitTimeMap<T: Real> {
    pub n: usize,
    /// Initial positions, row-major with x fastest.
    pub starts: Vec<Vector2<T>>,
    pub exit_time: Vec<T>,
    pub tag: Vec<ExitTag>,
    pub t_final: T,
}

impl<T: Real> ExitTimeMap<T> {
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }
}

/// Exit-time detection output: the population criterion with its degeneracy
/// flag, plus the geometric first-exit cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitDetection<T: Real> {
    /// Sample time of the most negative smoothed population slope.
    pub population_time: T,
    /// Steepest drop sits on the first sample (monotone-decay edge case).
    pub degenerate: bool,
    /// First sample outside the central plaquette, if any.
    pub geometric_time: Option<T>,
}

/// Locates the exit via the steepest smoothed drop of the impurity
/// population, and independently via the first sample outside the plaquette
/// (Chebyshev distance from `center` exceeding `half_width`).
pub fn detect_exit_time<T: Real>(
    record: &TrajectoryRecord<T>,
    smoothing_samples: usize,
    center: &Vector2<T>,
    half_width: T,
) -> Result<ExitDetection<T>> {
    let n = record.len();
    if n < 3 {
        return Err(Error::TooFewSamples { got: n, need: 3 });
    }
    // Largest odd window that fits the record, so slopes are only taken
    // where the full centered average exists.
    let mut window = smoothing_samples.min(n - 2);
    if window % 2 == 0 {
        window = window.saturating_sub(1).max(1);
    }
    let half = window / 2;
    let lo = half;
    let hi = n - 1 - half;
    let smoothed: Vec<T> = (lo..=hi)
        .map(|k| {
            let mut acc = T::zero();
            for j in (k - half)..=(k + half) {
                acc += record.impurity_population[j];
            }
            acc / real::<T>(window as f64)
        })
        .collect();
    let m = smoothed.len();
    let slope = |v: usize| -> T {
        if v == 0 {
            smoothed[1] - smoothed[0]
        } else if v == m - 1 {
            smoothed[m - 1] - smoothed[m - 2]
        } else {
            (smoothed[v + 1] - smoothed[v - 1]) / (T::one() + T::one())
        }
    };
    let mut min_v = 0;
    let mut min_slope = slope(0);
    for v in 1..m {
        let s = slope(v);
        if s < min_slope {
            min_slope = s;
            min_v = v;
        }
    }
    let min_idx = lo + min_v;
    let geometric_time = record.positions.iter().enumerate().find_map(|(k, p)| {
        let dx = (p.x - center.x).abs();
        let dy = (p.y - center.y).abs();
        if dx > half_width || dy > half_width {
            Some(record.times[k])
        } else {
            None
        }
    });
    // Steepest observable drop on the left smoothing boundary: the decay is
    // steepest from the very start (monotone-decay edge case). Report the
    // record's start time and tag it.
    let degenerate = min_v == 0;
    Ok(ExitDetection {
        population_time: if degenerate {
            record.times[0]
        } else {
            record.times[min_idx]
        },
        degenerate,
        geometric_time,
    })
}

/// Exit-time sweep over an n×n grid of stationary initial positions.
///
/// Cells whose trajectories never leave the plaquette carry `t_final` with a
/// `no-exit` tag; detected exits carry the population-criterion time.
pub fn exit_time_map<T: Real>(
    config: &SimulationConfig<T>,
    grid_n: usize,
    t_final: T,
    window_frac: (T, T),
    jobs: usize,
) -> Result<(ExitTimeMap<T>, SweepSummary)> {
    config.validate()?;
    let mut sweep_config = config.clone();
    sweep_config.t_final = t_final;
    let starts = sweep_grid_positions(&sweep_config, grid_n, grid_n, window_frac);
    let center3 = sweep_config.lattice.central_plaquette_center();
    let center = Vector2::new(center3.x, center3.y);
    let half_width = sweep_config.lattice.plaquette_half_width();
    let smoothing = sweep_config.exit_smoothing_samples;

    let outcomes = run_cells(jobs, starts.len(), |idx| -> Result<(T, ExitTag)> {
        let mut cell_config = sweep_config.clone();
        cell_config.initial_position = starts[idx];
        cell_config.initial_momentum = Vector3::zeros();
        let record = run_trajectory(&cell_config)?;
        if record.termination.is_error() {
            return Ok((t_final, ExitTag::Failed));
        }
        let detection = detect_exit_time(&record, smoothing, &center, half_width)?;
        match detection.geometric_time {
            Some(_) => Ok((detection.population_time, ExitTag::Population)),
            None => Ok((t_final, ExitTag::NoExit)),
        }
    });

    let mut map = ExitTimeMap {
        n: grid_n,
        starts: starts
            .iter()
            .map(|p| Vector2::new(p.x, p.y))
            .collect(),
        exit_time: Vec::with_capacity(starts.len()),
        tag: Vec::with_capacity(starts.len()),
        t_final,
    };
    let mut summary = SweepSummary {
        cells: starts.len(),
        ..Default::default()
    };
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((time, tag)) => {
                if tag == ExitTag::Failed {
                    summary.failed += 1;
                    summary.failures.push((idx, "trajectory failed".into()));
                }
                map.exit_time.push(time);
                map.tag.push(tag);
            }
            Err(e) => {
                summary.failed += 1;
                summary.failures.push((idx, e.to_string()));
                map.exit_time.push(t_final);
                map.tag.push(ExitTag::Failed);
            }
        }
    }
    Ok((map, summary))
}

/// Accumulated winding angle and the samples skipped for sitting on the
/// center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingResult<T: Real> {
    /// Signed accumulated angle, radians.
    pub angle: T,
    pub skipped: usize,
}

/// Accumulated signed angle of `r(t) - center` over the record.
pub fn winding_angle<T: Real>(
    record: &TrajectoryRecord<T>,
    center: &Vector2<T>,
) -> Result<WindingResult<T>> {
    if record.len() < 2 {
        return Err(Error::TooFewSamples {
            got: record.len(),
            need: 2,
        });
    }
    let eps = real::<T>(1e-14);
    let mut angle = T::zero();
    let mut skipped = 0usize;
    let mut prev: Option<Vector2<T>> = None;
    for p in &record.positions {
        let d = Vector2::new(p.x - center.x, p.y - center.y);
        if d.norm() < eps {
            skipped += 1;
            continue;
        }
        if let Some(q) = prev {
            let cross = q.x * d.y - q.y * d.x;
            let dot = q.x * d.x + q.y * d.y;
            angle += cross.atan2(dot);
        }
        prev = Some(d);
    }
    Ok(WindingResult { angle, skipped })
}

/// Mean orbit radius for each completed revolution (2π of accumulated
/// winding) about `center`.
pub fn revolution_radii<T: Real>(
    record: &TrajectoryRecord<T>,
    center: &Vector2<T>,
) -> Vec<T> {
    let two_pi = T::two_pi();
    let eps = real::<T>(1e-14);
    let mut radii = Vec::new();
    let mut acc_angle = T::zero();
    let mut sum_r = T::zero();
    let mut count = 0usize;
    let mut prev: Option<Vector2<T>> = None;
    for p in &record.positions {
        let d = Vector2::new(p.x - center.x, p.y - center.y);
        let r = d.norm();
        if r < eps {
            continue;
        }
        if let Some(q) = prev {
            let cross = q.x * d.y - q.y * d.x;
            let dot = q.x * d.x + q.y * d.y;
            acc_angle += cross.atan2(dot);
        }
        sum_r += r;
        count += 1;
        prev = Some(d);
        if acc_angle.abs() >= two_pi {
            radii.push(sum_r / real::<T>(count as f64));
            acc_angle = T::zero();
            sum_r = T::zero();
            count = 0;
        }
    }
    radii
}
