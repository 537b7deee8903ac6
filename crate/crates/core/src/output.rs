//! File serialization: trajectory, field-map and sweep CSVs plus their JSON
//! envelopes.
//!
//! Floats are written with Rust's shortest round-trip formatting, so outputs
//! are byte-identical whenever the computed values are identical, regardless
//! of sweep parallelism.

use std::io::Write;
use std::path::Path;

use crate::analysis::{DensityHistogram, ExitTag, ExitTimeMap, SweepSummary};
use crate::dynamics::TrajectoryRecord;
use crate::elimination::FieldMap;
use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

pub const SCHEMA_VERSION: u32 = 1;

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|source| Error::Output {
        path: path.display().to_string(),
        source,
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Output {
        path: path.display().to_string(),
        source,
    }
}

/// One row per sample: `t, rx, ry, px, py, pop_impurity, norm2,
/// pop_atom_1..N [, lat_x_i, lat_y_i ...]`.
pub fn write_trajectory_csv<T: Real>(path: &Path, record: &TrajectoryRecord<T>) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    let n_atoms = record
        .lattice_populations
        .first()
        .map_or(0, |row| row.len());
    let mut header = String::from("t,rx,ry,px,py,pop_impurity,norm2");
    for i in 1..=n_atoms {
        header.push_str(&format!(",pop_atom_{i}"));
    }
    if record.lattice_positions.is_some() {
        for i in 1..=n_atoms {
            header.push_str(&format!(",lat_x_{i},lat_y_{i}"));
        }
    }
    writeln!(w, "{header}").map_err(&err)?;
    for k in 0..record.len() {
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            to_f64(record.times[k]),
            to_f64(record.positions[k].x),
            to_f64(record.positions[k].y),
            to_f64(record.momenta[k].x),
            to_f64(record.momenta[k].y),
            to_f64(record.impurity_population[k]),
            to_f64(record.norm_sqr[k]),
        );
        for p in &record.lattice_populations[k] {
            row.push_str(&format!(",{}", to_f64(*p)));
        }
        if let Some(lat) = &record.lattice_positions {
            for pos in &lat[k] {
                row.push_str(&format!(",{},{}", to_f64(pos.x), to_f64(pos.y)));
            }
        }
        writeln!(w, "{row}").map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// JSON envelope carrying the config echo and the termination record.
pub fn trajectory_envelope<T: Real>(
    record: &TrajectoryRecord<T>,
    config_echo: serde_json::Value,
) -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config": config_echo,
        "termination": record.termination,
        "samples": record.len(),
        "sample_dt_gamma0": to_f64(record.sample_dt),
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Output {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    writeln!(w).map_err(&err)?;
    w.flush().map_err(&err)
}

/// Field-map rows: `x, y, re_s, im_s, fx, fy, mask`.
pub fn write_fieldmap_csv<T: Real>(path: &Path, map: &FieldMap<T>) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "x,y,re_s,im_s,fx,fy,mask").map_err(&err)?;
    for (iy, &y) in map.ys.iter().enumerate() {
        for (ix, &x) in map.xs.iter().enumerate() {
            let k = map.index(ix, iy);
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                to_f64(x),
                to_f64(y),
                to_f64(map.self_energy[k].re),
                to_f64(map.self_energy[k].im),
                to_f64(map.force[k].x),
                to_f64(map.force[k].y),
                u8::from(map.mask[k]),
            )
            .map_err(&err)?;
        }
    }
    w.flush().map_err(&err)
}

pub fn fieldmap_envelope<T: Real>(
    map: &FieldMap<T>,
    config_echo: serde_json::Value,
) -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config": config_echo,
        "resolution": [map.xs.len(), map.ys.len()],
        "window": {
            "x": [to_f64(map.xs[0]), to_f64(*map.xs.last().unwrap())],
            "y": [to_f64(map.ys[0]), to_f64(*map.ys.last().unwrap())],
        },
        "omega_gamma0": to_f64(map.omega),
        "mask_radius_lambda0": to_f64(map.mask_radius),
        "condition_estimate": map.condition_estimate,
    })
}

/// Exit-time rows: `ix, iy, x0, y0, exit_time, tag`.
pub fn write_exit_map_csv<T: Real>(path: &Path, map: &ExitTimeMap<T>) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "ix,iy,x0,y0,exit_time,tag").map_err(&err)?;
    for iy in 0..map.n {
        for ix in 0..map.n {
            let k = map.index(ix, iy);
            let tag = match map.tag[k] {
                ExitTag::Population => "population",
                ExitTag::NoExit => "no-exit",
                ExitTag::Failed => "failed",
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                ix,
                iy,
                to_f64(map.starts[k].x),
                to_f64(map.starts[k].y),
                to_f64(map.exit_time[k]),
                tag,
            )
            .map_err(&err)?;
        }
    }
    w.flush().map_err(&err)
}

/// Density rows: `ix, iy, count`.
pub fn write_density_csv<T: Real>(path: &Path, histogram: &DensityHistogram<T>) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "ix,iy,count").map_err(&err)?;
    for iy in 0..histogram.ny {
        for ix in 0..histogram.nx {
            writeln!(w, "{},{},{}", ix, iy, histogram.counts[iy * histogram.nx + ix])
                .map_err(&err)?;
        }
    }
    w.flush().map_err(&err)
}

pub fn sweep_envelope(
    mode: &str,
    config_echo: serde_json::Value,
    config_hash: &str,
    summary: &SweepSummary,
    grid: serde_json::Value,
    extra: serde_json::Value,
) -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "config": config_echo,
        "config_sha256": config_hash,
        "grid": grid,
        "cells": summary.cells,
        "cells_failed": summary.failed,
        "failures": summary.failures.iter().map(|(idx, tag)| {
            serde_json::json!({"cell": idx, "error": tag})
        }).collect::<Vec<_>>(),
        "extra": extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::exit_time_map;
    use crate::config::{config_hash, parse_config, serialize_config, SimulationConfig};
    use crate::dynamics::run_trajectory;
    use crate::elimination::{effective_force_field, FieldWindow};
    use nalgebra::Vector2;

    fn quick_config() -> SimulationConfig<f64> {
        parse_config(
            r#"{"t_final_gamma0": 0.05, "dt_gamma0": 5e-4, "sample_interval": 10}"#,
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn trajectory_csv_has_one_row_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let config = quick_config();
        let record = run_trajectory(&config).unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &record).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), record.len() + 1);
        assert!(lines[0].starts_with("t,rx,ry,px,py,pop_impurity,norm2,pop_atom_1"));
        assert_eq!(lines[0].split(',').count(), 7 + 16);
    }

    #[test]
    fn mobile_trajectory_csv_appends_lattice_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config();
        config.mobile_lattice = true;
        let record = run_trajectory(&config).unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &record).unwrap();
        let header = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(header.split(',').count(), 7 + 16 + 32);
        assert!(header.ends_with("lat_x_16,lat_y_16"));
    }

    #[test]
    fn envelopes_carry_schema_version_and_termination() {
        let config = quick_config();
        let record = run_trajectory(&config).unwrap();
        let echo: serde_json::Value =
            serde_json::from_str(&serialize_config(&config)).unwrap();
        let envelope = trajectory_envelope(&record, echo);
        assert_eq!(envelope["schema_version"], 1);
        assert_eq!(envelope["termination"]["reason"], "completed");
        assert_eq!(envelope["config"]["lattice_nx"], 4);
    }

    #[test]
    fn fieldmap_csv_round_trips_grid_size() {
        let dir = tempfile::tempdir().unwrap();
        let config = quick_config();
        let p = config.impurity_params.clone();
        let map = effective_force_field(
            FieldWindow {
                min: Vector2::new(-0.2, -0.2),
                max: Vector2::new(0.2, 0.2),
            },
            (5, 4),
            config.lattice.rest_positions(),
            &p,
            &config.lattice_params,
            0.0,
            std::f64::consts::TAU,
        )
        .unwrap();
        let path = dir.path().join("fieldmap.csv");
        write_fieldmap_csv(&path, &map).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 4);
    }

    #[test]
    fn exit_map_csv_tags_every_cell() {
        let dir = tempfile::tempdir().unwrap();
        let config = quick_config();
        let (map, summary) = exit_time_map(&config, 3, 0.05, (0.1, 0.9), 2).unwrap();
        let path = dir.path().join("exit_times.csv");
        write_exit_map_csv(&path, &map).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 10);
        for line in text.lines().skip(1) {
            let tag = line.rsplit(',').next().unwrap();
            assert!(["population", "no-exit", "failed"].contains(&tag));
        }
        let envelope = sweep_envelope(
            "exit-times",
            serde_json::json!({}),
            &config_hash(&config),
            &summary,
            serde_json::json!({"n": 3}),
            serde_json::json!({}),
        );
        assert_eq!(envelope["cells"], 9);
    }
}
