use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nls_cli::config::RunConfig;
use nls_cli::output::{
    eps_tag, fmt17, read_profile_csv, write_barrier_csv, write_groundstate_csv, write_json,
    write_profile_csv, write_sweep_csv,
};
use nls_cli::pipeline::{self, Prepared, SweepSummary};
use nls_cli::{CliError, CliResult, ExitKind};
use nls_core::{admissible_p_range, compute_ground_state, mp_exponent, RadialField};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "nls", version, about = "Radial solver and verification suite for semiclassical nonlinear Schrödinger equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the limit-problem ground state and write its profile
    GroundState {
        #[arg(long = "N")]
        n: u32,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve the penalized problem for one epsilon and verify it
    Solve {
        config: PathBuf,
        /// epsilon to solve at (default: first entry of the sweep list)
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run the full epsilon sweep with concentration diagnostics
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-run the verification checks on stored solution profiles
    Verify { config: PathBuf },
    /// Aggregate stored reports into a one-screen summary
    Report { dir: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::GroundState { n, p, out } => cmd_ground_state(n, p, &out),
        Cmd::Solve { config, eps } => cmd_solve(&config, eps),
        Cmd::Sweep { config, jobs } => cmd_sweep(&config, jobs),
        Cmd::Verify { config } => cmd_verify(&config),
        Cmd::Report { dir } => cmd_report(&dir),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.kind.code());
    }
}

#[derive(Serialize)]
struct GroundStateSummary {
    n_dim: u32,
    p: f64,
    w0: f64,
    sobolev: f64,
    r_mp: f64,
    energy: f64,
    tail_c: f64,
}

fn check_p(n: u32, p: f64) -> CliResult<()> {
    let crit = if n >= 3 { (n as f64 + 2.0) / (n as f64 - 2.0) } else { f64::INFINITY };
    if p > 1.0 && p < crit {
        return Ok(());
    }
    let range = match admissible_p_range(n) {
        Ok((lo, hi)) => format!("({lo}, {hi})"),
        Err(_) => "(1, inf)".to_string(),
    };
    Err(CliError::config(format!("p = {p} outside the admissible range {range} for N = {n}")))
}

fn cmd_ground_state(n: u32, p: f64, out: &Path) -> CliResult<()> {
    check_p(n, p)?;
    let gs = compute_ground_state(n, p)?;
    std::fs::create_dir_all(out)?;
    let stem = format!("groundstate_N{n}_p{}", eps_tag(p));
    write_groundstate_csv(&out.join(format!("{stem}.csv")), &gs)?;
    let summary = GroundStateSummary {
        n_dim: n,
        p,
        w0: gs.w0,
        sobolev: gs.sobolev,
        r_mp: mp_exponent(p),
        energy: gs.energy,
        tail_c: gs.tail_c,
    };
    write_json(&out.join(format!("{stem}.json")), &summary)?;
    println!("w0 = {}", fmt17(gs.w0));
    println!("S = {}", fmt17(gs.sobolev));
    println!("r_mp = {}", fmt17(mp_exponent(p)));
    println!("energy = {}", fmt17(gs.energy));
    println!("tail_c = {}", fmt17(gs.tail_c));
    Ok(())
}

fn write_eps_outputs(
    prep: &Prepared,
    rep: &nls_core::SolveReport,
    row: &pipeline::EpsReport,
    barrier: &Option<nls_core::BarrierFamily>,
) -> CliResult<()> {
    let dir = &prep.config.output.directory;
    std::fs::create_dir_all(dir)?;
    let tag = eps_tag(row.eps);
    write_profile_csv(&dir.join(format!("profile_eps{tag}.csv")), &rep.solution)?;
    if let Some(bar) = barrier {
        write_barrier_csv(&dir.join(format!("barrier_eps{tag}.csv")), &bar.grid.nodes, &bar.log_values)?;
    }
    write_json(&dir.join(format!("report_eps{tag}.json")), row)?;
    write_json(&dir.join(format!("verification_eps{tag}.json")), &row.verification)?;
    Ok(())
}

fn cmd_solve(config_path: &Path, eps: Option<f64>) -> CliResult<()> {
    let config = RunConfig::load(config_path)?;
    let eps = eps
        .or_else(|| config.epsilons().first().copied())
        .ok_or_else(|| CliError::config("no epsilon given and the sweep list is empty"))?;
    let prep = pipeline::prepare(config)?;
    let (rep, row, barrier) = pipeline::run_eps(&prep, eps)?;
    write_eps_outputs(&prep, &rep, &row, &barrier)?;
    println!(
        "eps = {} J = {} u_max = {} residual = {} verification = {}",
        fmt17(eps),
        fmt17(row.j_value),
        fmt17(row.u_max),
        fmt17(row.residual_max),
        if row.verification.passed { "pass" } else { "FAIL" }
    );
    if row.verification.passed {
        Ok(())
    } else {
        Err(CliError {
            kind: ExitKind::VerificationFailed,
            message: format!("verification failed at eps = {eps} (reports written)"),
        })
    }
}

fn cmd_sweep(config_path: &Path, jobs: usize) -> CliResult<()> {
    let config = RunConfig::load(config_path)?;
    let prep = pipeline::prepare(config)?;
    let outcome = pipeline::run_sweep(&prep, jobs)?;
    let dir = prep.config.output.directory.clone();
    std::fs::create_dir_all(&dir)?;
    for i in 0..outcome.rows.len() {
        write_eps_outputs(&prep, &outcome.solves[i], &outcome.rows[i], &outcome.barriers[i])?;
    }
    write_sweep_csv(&dir.join("sweep.csv"), &outcome.diagnostics)?;
    let all_passed = outcome.criteria.iter().all(|c| c.passed);
    let summary = SweepSummary {
        diagnostics: &outcome.diagnostics,
        rows: &outcome.rows,
        eps0: outcome.eps0,
        criteria: &outcome.criteria,
        all_passed,
    };
    write_json(&dir.join("sweep.json"), &summary)?;
    let mut text = String::new();
    for c in &outcome.criteria {
        let line = format!(
            "{}: {} — {}\n",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        );
        print!("{line}");
        text.push_str(&line);
    }
    std::fs::write(dir.join("summary.txt"), text)?;
    if all_passed {
        Ok(())
    } else {
        Err(CliError {
            kind: ExitKind::VerificationFailed,
            message: "one or more sweep criteria failed (reports written)".into(),
        })
    }
}

fn cmd_verify(config_path: &Path) -> CliResult<()> {
    let config = RunConfig::load(config_path)?;
    let prep = pipeline::prepare(config)?;
    let mut all = true;
    let mut found = 0usize;
    for eps in prep.config.epsilons() {
        let path = prep
            .config
            .output
            .directory
            .join(format!("profile_eps{}.csv", eps_tag(eps)));
        if !path.exists() {
            continue;
        }
        found += 1;
        let rows = read_profile_csv(&path)?;
        if rows.len() != prep.grid.len() {
            return Err(CliError::config(format!(
                "{}: {} rows but the config grid has {} nodes",
                path.display(),
                rows.len(),
                prep.grid.len()
            )));
        }
        let values: Vec<f64> = rows.iter().map(|&(_, u)| u).collect();
        let field = RadialField::new(prep.grid.clone(), values)?;
        // reconstruct the solve-level facts from the stored profile
        let geom_residual = nls_core::residual(&field, &prep.config.problem, &prep.params, eps)?;
        let residual_max = geom_residual.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let rep = nls_core::SolveReport {
            x_eps: field.argmax_radius(),
            u_max: field.max_value(),
            j_value: nls_core::functional_j(&field, &prep.config.problem, &prep.params, eps)?,
            norm_eps_value: nls_core::norm_eps(&field, prep.config.problem.n_dim, eps, &prep.config.problem.v),
            solution: field,
            eps,
            newton_iters: 0,
            residual_max,
            residual_history: vec![],
            max_in_lambda: true,
        };
        let (verification, _) = pipeline::verify_solution(&prep, &rep)?;
        println!(
            "eps = {}: verification = {}",
            fmt17(eps),
            if verification.passed { "pass" } else { "FAIL" }
        );
        all &= verification.passed;
    }
    if found == 0 {
        return Err(CliError::io("no stored profiles found for the configured sweep"));
    }
    if all {
        Ok(())
    } else {
        Err(CliError {
            kind: ExitKind::VerificationFailed,
            message: "stored-profile verification failed".into(),
        })
    }
}

fn cmd_report(dir: &Path) -> CliResult<()> {
    let sweep_path = dir.join("sweep.json");
    if sweep_path.exists() {
        let text = std::fs::read_to_string(&sweep_path)?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", sweep_path.display())))?;
        println!("sweep summary ({}):", sweep_path.display());
        if let Some(rows) = v["rows"].as_array() {
            println!("  eps          J/eps^N        u_max      x_eps    passed");
            for r in rows {
                println!(
                    "  {:<12} {:<14.6e} {:<10.4} {:<8.4} {}",
                    r["eps"],
                    r["j_over_eps_n"].as_f64().unwrap_or(f64::NAN),
                    r["u_max"].as_f64().unwrap_or(f64::NAN),
                    r["x_eps"].as_f64().unwrap_or(f64::NAN),
                    r["verification"]["passed"]
                );
            }
        }
        if let Some(cs) = v["criteria"].as_array() {
            for c in cs {
                println!(
                    "  {}: {}",
                    c["name"].as_str().unwrap_or("?"),
                    if c["passed"].as_bool().unwrap_or(false) { "PASS" } else { "FAIL" }
                );
            }
        }
        println!("  all_passed: {}", v["all_passed"]);
        return Ok(());
    }
    // fall back to individual per-eps reports
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|s| s.to_str())
                .map(|s| s.starts_with("report_eps") && s.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    if entries.is_empty() {
        return Err(CliError::io(format!("no reports found in {}", dir.display())));
    }
    entries.sort();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        println!(
            "eps = {}: J = {} u_max = {} verification = {}",
            v["eps"],
            v["j_value"],
            v["u_max"],
            v["verification"]["passed"]
        );
    }
    Ok(())
}
