//! Diagnostics CSV, VTK snapshots and study reports.
//!
//! The diagnostics CSV has a fixed column order and prints floats with 17
//! significant digits, so re-reading a file reproduces the values bit for
//! bit. `grad_theta_l2` carries the squared dual-grid norm (the quantity
//! bounded by the a priori estimates); `wall_ms` is wall-clock timing and is
//! the one column that varies between otherwise identical runs.
//!
//! Snapshots are legacy ASCII VTK `STRUCTURED_POINTS` datasets with cell data
//! (density, temperature, pressure scalars and the velocity vector, zero
//! padded to three components in 2D).

use crate::diagnostics::DiagnosticsRecord;
use crate::stepper::State;
use crate::verify::{StudyMode, StudyResult};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

/// Fixed CSV schema.
pub const DIAGNOSTICS_COLUMNS: [&str; 28] = [
    "step",
    "time",
    "mass",
    "kinetic_energy",
    "internal_energy",
    "total_energy",
    "total_entropy",
    "energy_residual",
    "T_hdiff",
    "T_dtdiss",
    "T_upwdiss",
    "Bh",
    "D1_int",
    "D2_int",
    "D3_l1",
    "entropy_residual",
    "kappa_production",
    "viscous_production",
    "min_rho",
    "max_rho",
    "min_theta",
    "max_theta",
    "max_speed",
    "jump_u_heps",
    "upw_diss_rho",
    "grad_theta_l2",
    "picard_iters",
    "wall_ms",
];

fn record_floats(r: &DiagnosticsRecord) -> [f64; 25] {
    [
        r.time,
        r.mass,
        r.kinetic_energy,
        r.internal_energy,
        r.total_energy,
        r.total_entropy,
        r.energy_residual,
        r.t_hdiff,
        r.t_dtdiss,
        r.t_upwdiss,
        r.bh,
        r.d1_int,
        r.d2_int,
        r.d3_l1,
        r.entropy_residual,
        r.kappa_production,
        r.viscous_production,
        r.monitors.min_rho,
        r.monitors.max_rho,
        r.monitors.min_theta,
        r.monitors.max_theta,
        r.monitors.max_speed,
        r.monitors.jump_u_sq_heps,
        r.monitors.upw_diss_rho,
        r.monitors.grad_theta_l2_sq,
    ]
}

/// Write the diagnostics series as CSV.
pub fn write_diagnostics<W: Write>(mut w: W, records: &[DiagnosticsRecord]) -> io::Result<()> {
    writeln!(w, "{}", DIAGNOSTICS_COLUMNS.join(","))?;
    for r in records {
        let mut line = String::new();
        write!(line, "{}", r.step).unwrap();
        for v in record_floats(r) {
            // 17 significant digits: enough for exact f64 round trips.
            write!(line, ",{v:.16e}").unwrap();
        }
        write!(line, ",{}", r.picard_iters).unwrap();
        write!(line, ",{:.16e}", r.wall_ms).unwrap();
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_diagnostics_file(
    path: impl AsRef<Path>,
    records: &[DiagnosticsRecord],
) -> io::Result<()> {
    write_diagnostics(std::fs::File::create(path)?, records)
}

/// Parse a diagnostics CSV written by [`write_diagnostics`]. Columns not in
/// the schema (internal counters) come back as zero.
pub fn read_diagnostics(text: &str) -> Result<Vec<DiagnosticsRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty diagnostics file")?;
    if header != DIAGNOSTICS_COLUMNS.join(",") {
        return Err(format!("unexpected header: {header}"));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != DIAGNOSTICS_COLUMNS.len() {
            return Err(format!(
                "row {}: expected {} fields, got {}",
                idx + 2,
                DIAGNOSTICS_COLUMNS.len(),
                fields.len()
            ));
        }
        let f = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("row {}: field {}: {e}", idx + 2, DIAGNOSTICS_COLUMNS[i]))
        };
        let mut r = DiagnosticsRecord {
            step: fields[0]
                .parse::<usize>()
                .map_err(|e| format!("row {}: step: {e}", idx + 2))?,
            time: f(1)?,
            mass: f(2)?,
            kinetic_energy: f(3)?,
            internal_energy: f(4)?,
            total_energy: f(5)?,
            total_entropy: f(6)?,
            energy_residual: f(7)?,
            t_hdiff: f(8)?,
            t_dtdiss: f(9)?,
            t_upwdiss: f(10)?,
            bh: f(11)?,
            d1_int: f(12)?,
            d2_int: f(13)?,
            d3_l1: f(14)?,
            entropy_residual: f(15)?,
            kappa_production: f(16)?,
            viscous_production: f(17)?,
            picard_iters: fields[26]
                .parse::<usize>()
                .map_err(|e| format!("row {}: picard_iters: {e}", idx + 2))?,
            wall_ms: f(27)?,
            ..DiagnosticsRecord::default()
        };
        r.monitors.min_rho = f(18)?;
        r.monitors.max_rho = f(19)?;
        r.monitors.min_theta = f(20)?;
        r.monitors.max_theta = f(21)?;
        r.monitors.max_speed = f(22)?;
        r.monitors.jump_u_sq_heps = f(23)?;
        r.monitors.upw_diss_rho = f(24)?;
        r.monitors.grad_theta_l2_sq = f(25)?;
        records.push(r);
    }
    Ok(records)
}

/// Write a legacy ASCII VTK structured-points snapshot with cell data.
pub fn write_snapshot<W: Write>(mut w: W, state: &State) -> io::Result<()> {
    let mesh = state.mesh();
    let dim = mesh.dim();
    let n = mesh.cells_per_dim();
    let h = mesh.h();
    let cells = mesh.cell_count();

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(
        w,
        "nsfv snapshot step {} time {:.9e}",
        state.step_index, state.time
    )?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    if dim == 2 {
        writeln!(w, "DIMENSIONS {} {} 1", n + 1, n + 1)?;
    } else {
        writeln!(w, "DIMENSIONS {} {} {}", n + 1, n + 1, n + 1)?;
    }
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {h:.16e} {h:.16e} {h:.16e}")?;
    writeln!(w, "CELL_DATA {cells}")?;

    for (name, values) in [("rho", &state.rho), ("theta", &state.theta)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for c in 0..cells {
            writeln!(w, "{:.16e}", values.get(c))?;
        }
    }
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in 0..cells {
        writeln!(w, "{:.16e}", state.rho.get(c) * state.theta.get(c))?;
    }
    writeln!(w, "VECTORS velocity double")?;
    for c in 0..cells {
        let ux = state.u.component(0).get(c);
        let uy = state.u.component(1).get(c);
        let uz = if dim == 3 {
            state.u.component(2).get(c)
        } else {
            0.0
        };
        writeln!(w, "{ux:.16e} {uy:.16e} {uz:.16e}")?;
    }
    Ok(())
}

pub fn write_snapshot_file(path: impl AsRef<Path>, state: &State) -> io::Result<()> {
    write_snapshot(std::fs::File::create(path)?, state)
}

/// Plain-text table of a convergence study.
pub fn format_study(study: &StudyResult) -> String {
    let mut out = String::new();
    let mode = match study.mode {
        StudyMode::Cauchy => "cauchy (next finer grid)".to_string(),
        StudyMode::Mms => "manufactured solution".to_string(),
        StudyMode::Reference { n_ref } => format!("reference run (n = {n_ref})"),
    };
    writeln!(out, "convergence study vs {mode}").unwrap();
    writeln!(
        out,
        "{:>5} {:>10} {:>13} {:>13} {:>13} {:>9} {:>9} {:>9}",
        "n", "h", "L2(rho)", "L2(u)", "L2(theta)", "ord_rho", "ord_u", "ord_th"
    )
    .unwrap();
    for row in &study.rows {
        let ord = |o: Option<f64>| match o {
            Some(v) => format!("{v:9.3}"),
            None => format!("{:>9}", "-"),
        };
        writeln!(
            out,
            "{:>5} {:>10.4e} {:>13.6e} {:>13.6e} {:>13.6e} {} {} {}",
            row.n,
            row.h,
            row.l2[0],
            row.l2[1],
            row.l2[2],
            ord(row.order[0]),
            ord(row.order[1]),
            ord(row.order[2]),
        )
        .unwrap();
    }
    out
}

/// CSV companion of [`format_study`].
pub fn write_study_csv<W: Write>(mut w: W, study: &StudyResult) -> io::Result<()> {
    writeln!(
        w,
        "n,h,error_rho,error_u,error_theta,order_rho,order_u,order_theta"
    )?;
    for row in &study.rows {
        let ord = |o: Option<f64>| match o {
            Some(v) => format!("{v:.16e}"),
            None => "nan".to_string(),
        };
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
            row.n,
            row.h,
            row.l2[0],
            row.l2[1],
            row.l2[2],
            ord(row.order[0]),
            ord(row.order[1]),
            ord(row.order[2]),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::{InitKind, RunConfig, Stepper};

    fn tiny_run() -> Vec<DiagnosticsRecord> {
        let config = RunConfig {
            n: 4,
            t_end: 2.0 * 0.1 / 4.0,
            ..RunConfig::default()
        };
        crate::stepper::run(&config).unwrap().records
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let records = tiny_run();
        let mut buf = Vec::new();
        write_diagnostics(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), records.len() + 1);
        let back = read_diagnostics(&text).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.mass.to_bits(), b.mass.to_bits());
            assert_eq!(a.total_energy.to_bits(), b.total_energy.to_bits());
            assert_eq!(a.entropy_residual.to_bits(), b.entropy_residual.to_bits());
            assert_eq!(
                a.monitors.grad_theta_l2_sq.to_bits(),
                b.monitors.grad_theta_l2_sq.to_bits()
            );
            assert_eq!(a.wall_ms.to_bits(), b.wall_ms.to_bits());
        }
    }

    #[test]
    fn constant_run_columns_are_constant() {
        let config = RunConfig {
            n: 4,
            t_end: 3.0 * 0.1 / 4.0,
            init: InitKind::Constant {
                rho: 1.0,
                velocity: [0.0; 3],
                theta: 1.0,
            },
            ..RunConfig::default()
        };
        let records = crate::stepper::run(&config).unwrap().records;
        for r in &records {
            assert_eq!(r.mass, records[0].mass);
            assert_eq!(r.total_energy, records[0].total_energy);
        }
    }

    type ParsedVtk = (usize, [usize; 3], Vec<(String, Vec<f64>)>);

    /// Minimal strict reader for the legacy ASCII structured-points format:
    /// validates the section grammar and returns the cell arrays. Stands in
    /// for an external VTK reader, which is not available in this build
    /// environment; the files also open in ParaView.
    fn parse_legacy_vtk(text: &str) -> Result<ParsedVtk, String> {
        let mut lines = text.lines();
        let mut expect = |what: &str| -> Result<String, String> {
            let line = lines.next().ok_or_else(|| format!("missing {what}"))?;
            Ok(line.to_string())
        };
        let magic = expect("header")?;
        if !magic.starts_with("# vtk DataFile Version") {
            return Err(format!("bad magic: {magic}"));
        }
        let _title = expect("title")?;
        if expect("format")? != "ASCII" {
            return Err("expected ASCII".into());
        }
        if expect("dataset")? != "DATASET STRUCTURED_POINTS" {
            return Err("expected STRUCTURED_POINTS".into());
        }
        let dims_line = expect("DIMENSIONS")?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("DIMENSIONS ")
            .ok_or("missing DIMENSIONS")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| format!("dims: {e}")))
            .collect::<Result<_, _>>()?;
        if dims.len() != 3 {
            return Err("DIMENSIONS needs 3 entries".into());
        }
        if !expect("ORIGIN")?.starts_with("ORIGIN ") {
            return Err("missing ORIGIN".into());
        }
        if !expect("SPACING")?.starts_with("SPACING ") {
            return Err("missing SPACING".into());
        }
        let cell_line = expect("CELL_DATA")?;
        let cells: usize = cell_line
            .strip_prefix("CELL_DATA ")
            .ok_or("missing CELL_DATA")?
            .parse()
            .map_err(|e| format!("cell count: {e}"))?;
        let expected = dims
            .iter()
            .map(|&d| d.saturating_sub(1).max(1))
            .product::<usize>();
        if cells != expected {
            return Err(format!("CELL_DATA {cells} != prod(dims-1) {expected}"));
        }
        let mut arrays = Vec::new();
        let rest: Vec<&str> = lines.collect();
        let mut i = 0;
        while i < rest.len() {
            let header = rest[i];
            i += 1;
            if header.trim().is_empty() {
                continue;
            }
            if let Some(spec) = header.strip_prefix("SCALARS ") {
                let mut parts = spec.split_whitespace();
                let name = parts.next().ok_or("SCALARS name")?.to_string();
                if parts.next() != Some("double") {
                    return Err("expected double scalars".into());
                }
                if rest.get(i) != Some(&"LOOKUP_TABLE default") {
                    return Err("missing LOOKUP_TABLE".into());
                }
                i += 1;
                let mut values = Vec::with_capacity(cells);
                for _ in 0..cells {
                    values.push(
                        rest.get(i)
                            .ok_or("truncated scalars")?
                            .trim()
                            .parse::<f64>()
                            .map_err(|e| format!("scalar value: {e}"))?,
                    );
                    i += 1;
                }
                arrays.push((name, values));
            } else if let Some(spec) = header.strip_prefix("VECTORS ") {
                let name = spec
                    .split_whitespace()
                    .next()
                    .ok_or("VECTORS name")?
                    .to_string();
                let mut values = Vec::with_capacity(3 * cells);
                for _ in 0..cells {
                    let comps: Vec<f64> = rest
                        .get(i)
                        .ok_or("truncated vectors")?
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|e| format!("vector value: {e}")))
                        .collect::<Result<_, _>>()?;
                    if comps.len() != 3 {
                        return Err("vectors need 3 components".into());
                    }
                    values.extend(comps);
                    i += 1;
                }
                arrays.push((name, values));
            } else {
                return Err(format!("unexpected section: {header}"));
            }
        }
        Ok((cells, [dims[0], dims[1], dims[2]], arrays))
    }

    #[test]
    fn snapshot_loads_with_a_strict_legacy_reader() {
        for (dim, n) in [(2usize, 4usize), (3, 2)] {
            let config = RunConfig {
                dim,
                n,
                ..RunConfig::default()
            };
            let stepper = Stepper::new(&config).unwrap();
            let state = stepper.init_from_kind(InitKind::Smooth).unwrap();
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &state).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let (cells, dims, arrays) = parse_legacy_vtk(&text).expect("snapshot must parse");
            assert_eq!(cells, state.mesh().cell_count());
            assert_eq!(dims[0], n + 1);
            assert_eq!(dims[2], if dim == 2 { 1 } else { n + 1 });
            let names: Vec<&str> = arrays.iter().map(|(n, _)| n.as_str()).collect();
            assert_eq!(names, ["rho", "theta", "pressure", "velocity"]);
            // Values round-trip exactly at 17 significant digits.
            for c in 0..cells {
                assert_eq!(arrays[0].1[c].to_bits(), state.rho.get(c).to_bits());
            }
            assert_eq!(arrays[3].1.len(), 3 * cells);
        }
    }

    #[test]
    fn snapshot_has_structured_points_layout() {
        let config = RunConfig {
            n: 2,
            ..RunConfig::default()
        };
        let stepper = Stepper::new(&config).unwrap();
        let state = stepper
            .init_from_kind(InitKind::Constant {
                rho: 1.25,
                velocity: [0.5, -0.25, 0.0],
                theta: 0.75,
            })
            .unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &state).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DATASET STRUCTURED_POINTS"));
        assert!(text.contains("DIMENSIONS 3 3 1"));
        assert!(text.contains("CELL_DATA 4"));
        assert!(text.contains("SCALARS rho double 1"));
        assert!(text.contains("SCALARS pressure double 1"));
        assert!(text.contains("VECTORS velocity double"));
        // 4 cells per scalar section.
        let rho_lines = text
            .lines()
            .skip_while(|l| !l.starts_with("SCALARS rho"))
            .skip(2)
            .take(4)
            .collect::<Vec<_>>();
        assert_eq!(rho_lines.len(), 4);
        for l in rho_lines {
            assert_eq!(l.parse::<f64>().unwrap(), 1.25);
        }
        // Pressure is rho * theta.
        let p_line = text
            .lines()
            .skip_while(|l| !l.starts_with("SCALARS pressure"))
            .nth(2)
            .unwrap();
        assert!((p_line.parse::<f64>().unwrap() - 1.25 * 0.75).abs() < 1e-15);
        // 2D velocity carries a zero z component.
        let v_line = text
            .lines()
            .skip_while(|l| !l.starts_with("VECTORS"))
            .nth(1)
            .unwrap();
        let comps: Vec<f64> = v_line
            .split_whitespace()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(comps.len(), 3);
        assert_eq!(comps[2], 0.0);
    }
}
