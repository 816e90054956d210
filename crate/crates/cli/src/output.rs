use std::io::Write;
use std::path::Path;

use nls_core::{GroundState, RadialField, SweepDiagnostics};
use serde::Serialize;

use crate::{CliError, CliResult};

/// All floating-point output carries 17 significant digits so reruns can be
/// compared byte for byte.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// File-name fragment for an epsilon value ("0.05" -> "0p05").
pub fn eps_tag(eps: f64) -> String {
    format!("{eps}").replace('.', "p").replace('-', "m")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("write {}: {e}", path.display())))?;
    Ok(())
}

fn open(path: &Path) -> CliResult<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path)
        .map_err(|e| CliError::io(format!("create {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(f))
}

pub fn write_profile_csv(path: &Path, field: &RadialField) -> CliResult<()> {
    let mut w = open(path)?;
    writeln!(w, "r,u")?;
    for (&r, &u) in field.grid.nodes.iter().zip(&field.values) {
        writeln!(w, "{},{}", fmt17(r), fmt17(u))?;
    }
    Ok(())
}

pub fn read_profile_csv(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let bad = || CliError::config(format!("{}: malformed line {}", path.display(), k + 1));
        let r: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let u: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        rows.push((r, u));
    }
    Ok(rows)
}

pub fn write_groundstate_csv(path: &Path, gs: &GroundState) -> CliResult<()> {
    let mut w = open(path)?;
    writeln!(w, "r,w,dw")?;
    for i in 0..gs.radii.len() {
        writeln!(
            w,
            "{},{},{}",
            fmt17(gs.radii[i]),
            fmt17(gs.values[i]),
            fmt17(gs.derivs[i])
        )?;
    }
    Ok(())
}

pub fn write_barrier_csv(path: &Path, grid_nodes: &[f64], log_values: &[f64]) -> CliResult<()> {
    let mut w = open(path)?;
    writeln!(w, "r,log_w")?;
    for (&r, &lw) in grid_nodes.iter().zip(log_values) {
        writeln!(w, "{},{}", fmt17(r), fmt17(lw))?;
    }
    Ok(())
}

pub fn write_sweep_csv(path: &Path, diag: &SweepDiagnostics) -> CliResult<()> {
    let mut w = open(path)?;
    writeln!(
        w,
        "eps,x_eps,a_at_x_eps,j_over_eps_n,norm_over_eps_n2,u_max,solves_original,\
         threshold_margin,outside_sup_5,outside_sup_10,outside_sup_20"
    )?;
    for row in &diag.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt17(row.eps),
            fmt17(row.x_eps),
            fmt17(row.a_at_x_eps),
            fmt17(row.j_over_eps_n),
            fmt17(row.norm_over_eps_n2),
            fmt17(row.u_max),
            row.solves_original,
            fmt17(row.threshold_margin),
            fmt17(row.outside_sup[0]),
            fmt17(row.outside_sup[1]),
            fmt17(row.outside_sup[2])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips_exactly() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 1e-300, -4.337e2] {
            let back: f64 = fmt17(x).parse().unwrap();
            assert_eq!(back, x);
        }
    }

    #[test]
    fn eps_tags_are_path_safe() {
        assert_eq!(eps_tag(0.05), "0p05");
        assert_eq!(eps_tag(1e-3), "0p001");
    }

    #[test]
    fn profile_csv_round_trips() {
        let grid = nls_core::build_grid(1.0, 64, 10.0).unwrap();
        let field = RadialField::from_fn(grid, |r| (-r).exp());
        let dir = std::env::temp_dir().join("nls_cli_profile_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("profile.csv");
        write_profile_csv(&path, &field).unwrap();
        let rows = read_profile_csv(&path).unwrap();
        assert_eq!(rows.len(), field.values.len());
        for (i, (r, u)) in rows.iter().enumerate() {
            assert_eq!(*r, field.grid.nodes[i]);
            assert_eq!(*u, field.values[i]);
        }
    }
}
