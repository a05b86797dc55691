use std::io::Write;

use anyhow::anyhow;
use serde::Serialize;
use vri::descriptors::{compute_field_with, FieldMeta, LdField};
use vri::experiments::{
    branching_outcomes, estimate_critical_c, fit_scaling_laws, read_sweep_csv, sweep_with_fields, BranchingResult,
    FitResult, LawReport, Quantity, SweepTable,
};
use vri::manifolds::{extract_manifolds, identify_lobes, write_curves_csv, write_lobes_csv, LobePair, ManifoldSet};
use vri::potential::{find_critical_points, CriticalKind, CriticalPointSet, SystemParams, DEFAULT_SEEDS, NEWTON_TOL};
use vri::ExperimentError;

use crate::config::{Command, Effective};
use crate::output::{self, create, write_json};
use crate::plot::{self, Series, GREEN_, RED_};
use crate::CliError;

pub fn run(eff: &Effective) -> Result<(), CliError> {
    match eff.command {
        Command::CriticalPoints => critical_points(eff),
        Command::LdField => ld_field(eff),
        Command::Branching => branching(eff),
        Command::Sweep => sweep(eff),
        Command::Fit => fit(eff),
    }
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CriticalReport {
    c: f64,
    #[serde(flatten)]
    set: CriticalPointSet,
}

fn critical_points(eff: &Effective) -> Result<(), CliError> {
    output::prepare(eff)?;
    let mut reports = Vec::new();
    for &c in &eff.c_values {
        let set = find_critical_points(&eff.params.with_c(c), &DEFAULT_SEEDS, NEWTON_TOL)?;
        reports.push(CriticalReport { c, set });
    }

    let mut w = create(&eff.out.join("critical_points.csv"))?;
    writeln!(w, "c,kind,x,y,energy,stability,eigenvalue_1,eigenvalue_2")?;
    for r in &reports {
        for kind in CriticalKind::ALL {
            if let Some(p) = r.set.get(kind) {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.c,
                    serde_name(&p.kind),
                    p.position.0,
                    p.position.1,
                    p.energy,
                    serde_name(&p.stability),
                    p.eigenvalues.0,
                    p.eigenvalues.1
                )?;
            }
        }
    }
    w.flush()?;
    write_json(&eff.out.join("critical_points.json"), &reports)?;

    if eff.json {
        println!("{}", to_json(&reports)?);
    } else {
        for r in &reports {
            println!("c = {}", r.c);
            println!("  {:<24} {:>10} {:>10} {:>10}  stability", "point", "x", "y", "energy");
            for kind in CriticalKind::ALL {
                if let Some(p) = r.set.get(kind) {
                    println!(
                        "  {:<24} {:>10.4} {:>10.4} {:>10.4}  {}",
                        kind.label(),
                        p.position.0,
                        p.position.1,
                        p.energy,
                        p.stability.label()
                    );
                }
            }
            for warning in &r.set.warnings {
                println!("  warning: {warning}");
            }
        }
    }

    let bad: Vec<String> = reports
        .iter()
        .filter(|r| !r.set.failures.is_empty() || CriticalKind::ALL.iter().any(|k| r.set.get(*k).is_none()))
        .map(|r| r.c.to_string())
        .collect();
    if !bad.is_empty() {
        return Err(CliError::Numerical(anyhow!(
            "critical points not fully resolved for c = {}",
            bad.join(", ")
        )));
    }
    Ok(())
}

fn serde_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Validation(e.into()))
}

// ---------------------------------------------------------------------------

fn expected_meta(eff: &Effective, params: &SystemParams) -> FieldMeta {
    FieldMeta {
        section: eff.section,
        params: *params,
        tau: eff.ld.tau,
        p_exponent: eff.ld.p_exponent,
        step: eff.ld.integrator.step,
        escape_radius: eff.ld.integrator.escape_radius,
    }
}

/// Loads a matching field from the cache directory, or computes it (and
/// stores it there when a cache is configured).
fn field_for(eff: &Effective, params: &SystemParams) -> Result<LdField, ExperimentError> {
    let cached = eff
        .field_cache
        .as_ref()
        .map(|dir| dir.join(format!("ld_{}.bin", output::c_tag(params.c))));
    if let Some(path) = &cached {
        if path.exists() {
            if let Ok(f) = LdField::load_binary(path) {
                if f.meta == expected_meta(eff, params) {
                    return Ok(f);
                }
            }
        }
    }
    let field = compute_field_with(&eff.section, params, &eff.ld)?;
    if let Some(path) = &cached {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        field.save_binary(path)?;
    }
    Ok(field)
}

#[derive(Serialize)]
struct LobeSummary {
    c: f64,
    area_top: f64,
    area_bottom: f64,
    top_present: bool,
    bottom_present: bool,
    intersection_count: usize,
    stable_curves: usize,
    unstable_curves: usize,
    stable_threshold: f64,
    unstable_threshold: f64,
    ridge_quantile: f64,
    diagnostics: Vec<String>,
}

fn summarize(c: f64, eff: &Effective, set: &ManifoldSet, lobes: Option<&LobePair>, err: Option<String>) -> LobeSummary {
    let mut diagnostics = set.diagnostics.clone();
    if let Some(l) = lobes {
        diagnostics.extend(l.diagnostics.iter().cloned());
        for lobe in [&l.top, &l.bottom] {
            if let Some(d) = &lobe.diagnostic {
                diagnostics.push(format!("{}: {d}", lobe.label.as_str()));
            }
        }
    }
    diagnostics.extend(err);
    diagnostics.dedup();
    LobeSummary {
        c,
        area_top: lobes.map_or(0.0, |l| l.top.area),
        area_bottom: lobes.map_or(0.0, |l| l.bottom.area),
        top_present: lobes.is_some_and(|l| l.top.present),
        bottom_present: lobes.is_some_and(|l| l.bottom.present),
        intersection_count: lobes.map_or(0, |l| l.intersection_count),
        stable_curves: set.stable.len(),
        unstable_curves: set.unstable.len(),
        stable_threshold: set.stable_threshold,
        unstable_threshold: set.unstable_threshold,
        ridge_quantile: eff.ridge_quantile,
        diagnostics,
    }
}

fn ld_field(eff: &Effective) -> Result<(), CliError> {
    output::prepare(eff)?;
    let mut summaries = Vec::new();
    for &c in &eff.c_values {
        let params = eff.params.with_c(c);
        let field = field_for(eff, &params)?;
        field.save_binary(&output::path(eff, "ld", c, "bin"))?;
        let mut w = create(&output::path(eff, "ld", c, "csv"))?;
        field.write_csv(&mut w)?;
        w.flush()?;

        let set = extract_manifolds(&field, eff.ridge_quantile)?;
        let curves: Vec<_> = set.all().cloned().collect();
        let mut w = create(&output::path(eff, "manifolds", c, "csv"))?;
        write_curves_csv(&curves, &mut w)?;
        w.flush()?;

        let (lobes, err) = match identify_lobes(&set.stable, &set.unstable, &field) {
            Ok(l) => (Some(l), None),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(l) = &lobes {
            let mut w = create(&output::path(eff, "lobes", c, "csv"))?;
            write_lobes_csv(l, &mut w)?;
            w.flush()?;
        }
        let summary = summarize(c, eff, &set, lobes.as_ref(), err);
        write_json(&output::path(eff, "lobes", c, "json"), &summary)?;
        plot::field_png(&output::path(eff, "ld", c, "png"), &field, Some(&set)).map_err(CliError::Validation)?;
        if !eff.json {
            println!(
                "c = {c}: lobe areas top {:.4}, bottom {:.4} ({} stable, {} unstable curves)",
                summary.area_top, summary.area_bottom, summary.stable_curves, summary.unstable_curves
            );
        }
        summaries.push(summary);
    }
    let mut w = create(&eff.out.join("lobe_areas.csv"))?;
    writeln!(w, "c,area_top,area_bottom,intersections")?;
    for s in &summaries {
        writeln!(w, "{},{},{},{}", s.c, s.area_top, s.area_bottom, s.intersection_count)?;
    }
    w.flush()?;
    if eff.json {
        println!("{}", to_json(&summaries)?);
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn branching(eff: &Effective) -> Result<(), CliError> {
    output::prepare(eff)?;
    let mut results = Vec::new();
    for &c in &eff.c_values {
        let params = eff.params.with_c(c);
        let (interval, outcomes, violations) = branching_outcomes(&params, &eff.branching)?;
        let mut w = create(&output::path(eff, "outcomes", c, "csv"))?;
        writeln!(w, "index,y0,outcome,termination,time")?;
        for (i, o) in outcomes.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{}",
                o.y0,
                serde_name(&o.outcome),
                serde_name(&o.termination),
                o.time
            )?;
        }
        w.flush()?;
        let r = BranchingResult::from_outcomes(c, interval, &outcomes, violations);
        if !eff.json {
            println!(
                "c = {c}: top {} bottom {} unresolved {} -> ratio top {:.4}, bottom {:.4}",
                r.n_top, r.n_bottom, r.n_unresolved, r.ratio_top, r.ratio_bottom
            );
        }
        results.push(r);
    }
    write_branching_csv(eff, &results)?;

    let critical = if eff.critical_c {
        let mut cs = eff.c_values.clone();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        let est = estimate_critical_c(&eff.params, &cs, &eff.branching, 0.005)?;
        write_json(&eff.out.join("critical_c.json"), &est)?;
        if !eff.json {
            println!(
                "critical c ~ {:.4} (bracket {:.4}..{:.4})",
                est.estimate, est.bracket.0, est.bracket.1
            );
        }
        Some(est)
    } else {
        None
    };

    if results.len() > 1 {
        let table = SweepTable {
            quantities: vec![Quantity::RatioTop, Quantity::RatioBottom],
            rows: results
                .iter()
                .map(|r| vri::experiments::SweepRow {
                    c: r.c,
                    values: [
                        (Quantity::RatioTop, Some(r.ratio_top)),
                        (Quantity::RatioBottom, Some(r.ratio_bottom)),
                    ]
                    .into_iter()
                    .collect(),
                })
                .collect(),
            failures: Vec::new(),
            lobe_diagnostics: Vec::new(),
        };
        figures(eff, &table, &fit_scaling_laws(&table))?;
    }

    if eff.json {
        #[derive(Serialize)]
        struct Out<'a> {
            runs: &'a [BranchingResult],
            critical_c: Option<&'a vri::experiments::CriticalC>,
        }
        println!(
            "{}",
            to_json(&Out {
                runs: &results,
                critical_c: critical.as_ref()
            })?
        );
    }
    Ok(())
}

fn write_branching_csv(eff: &Effective, results: &[BranchingResult]) -> Result<(), CliError> {
    let mut w = create(&eff.out.join("branching.csv"))?;
    writeln!(w, "c,n_total,n_top,n_bottom,n_unresolved,ratio_top,ratio_bottom")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.c, r.n_total, r.n_top, r.n_bottom, r.n_unresolved, r.ratio_top, r.ratio_bottom
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------

fn sweep(eff: &Effective) -> Result<(), CliError> {
    output::prepare(eff)?;
    let cfg = vri::experiments::SweepConfig {
        quantities: eff.quantities.clone(),
        branching: eff.branching,
        section: eff.section,
        ld: eff.ld,
        ridge_quantile: eff.ridge_quantile,
        flatness_top: eff.flatness_top,
        flatness_bottom: eff.flatness_bottom,
    };
    let table = sweep_with_fields(&eff.params, &eff.c_values, &cfg, |p| field_for(eff, p))?;
    let mut w = create(&eff.out.join("sweep.csv"))?;
    table.write_csv(&mut w)?;
    w.flush()?;

    #[derive(Serialize)]
    struct Diagnostics<'a> {
        failures: &'a [vri::experiments::CellFailure],
        lobe_diagnostics: &'a [(f64, Vec<String>)],
    }
    write_json(
        &eff.out.join("sweep_diagnostics.json"),
        &Diagnostics {
            failures: &table.failures,
            lobe_diagnostics: &table.lobe_diagnostics,
        },
    )?;
    for f in &table.failures {
        eprintln!("warning: c = {}: {} failed: {}", f.c, f.quantity, f.message);
    }

    let reports = if table.rows.len() >= 2 {
        let r = fit_scaling_laws(&table);
        write_json(&eff.out.join("fit_report.json"), &r)?;
        figures(eff, &table, &r)?;
        r
    } else {
        Vec::new()
    };
    if eff.json {
        #[derive(Serialize)]
        struct Out<'a> {
            table: &'a SweepTable,
            fits: &'a [LawReport],
        }
        println!(
            "{}",
            to_json(&Out {
                table: &table,
                fits: &reports
            })?
        );
    } else {
        print_table(&table);
        print_fits(&reports);
    }
    Ok(())
}

fn fit(eff: &Effective) -> Result<(), CliError> {
    let input = eff.input.as_ref().expect("resolved config requires an input");
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Validation(anyhow!("reading {}: {e}", input.display())))?;
    let table = read_sweep_csv(&text)?;
    if table.rows.len() < 2 {
        return Err(CliError::Validation(anyhow!(
            "a fit needs a sweep with at least 2 values of c, got {}",
            table.rows.len()
        )));
    }
    output::prepare(eff)?;
    let reports = fit_scaling_laws(&table);
    write_json(&eff.out.join("fit_report.json"), &reports)?;
    figures(eff, &table, &reports)?;
    if eff.json {
        println!("{}", to_json(&reports)?);
    } else {
        print_fits(&reports);
    }
    if reports.iter().all(|r| r.fit.is_none()) {
        let why: Vec<String> = reports.iter().filter_map(|r| r.diagnostic.clone()).collect();
        return Err(CliError::Numerical(anyhow!(
            "no law could be fitted: {}",
            why.join("; ")
        )));
    }
    Ok(())
}

fn print_table(table: &SweepTable) {
    let names: Vec<String> = table.quantities.iter().map(|q| format!("{:>16}", q.name())).collect();
    println!("{:>8}{}", "c", names.join(""));
    for row in &table.rows {
        let cells: Vec<String> = table
            .quantities
            .iter()
            .map(|q| match row.values.get(q).copied().flatten() {
                Some(v) => format!("{v:>16.6}"),
                None => format!("{:>16}", "-"),
            })
            .collect();
        println!("{:>8.4}{}", row.c, cells.join(""));
    }
}

fn print_fits(reports: &[LawReport]) {
    for r in reports {
        match &r.fit {
            Some(f) => {
                let coef: Vec<String> = f.coefficients.iter().map(|c| format!("{c:.5}")).collect();
                print!(
                    "{} ({}): [{}] rms {:.2e}",
                    r.quantity,
                    f.model,
                    coef.join(", "),
                    f.residual_rms
                );
                if let Some(reference) = &r.reference {
                    let refs: Vec<String> = reference
                        .symbols
                        .iter()
                        .zip(&reference.coefficients)
                        .map(|(s, c)| format!("{s}={c}"))
                        .collect();
                    print!("  reference {}", refs.join(", "));
                }
                println!();
            }
            None => println!("{}: {}", r.quantity, r.diagnostic.as_deref().unwrap_or("no fit")),
        }
    }
}

fn fit_curve(f: &FitResult) -> Vec<(f64, f64)> {
    let (lo, hi) = f.domain;
    (0..=100)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / 100.0;
            (x, f.eval(x))
        })
        .collect()
}

/// Charts of every quantity pair present in the table.
fn figures(eff: &Effective, table: &SweepTable, reports: &[LawReport]) -> Result<(), CliError> {
    let col = |q: Quantity| table.column(q).filter(|v| !v.is_empty());
    let fit_of = |q: Quantity| reports.iter().find(|r| r.quantity == q).and_then(|r| r.fit.as_ref());
    let diff = |a: &[(f64, f64)], b: &[(f64, f64)]| -> Vec<(f64, f64)> {
        a.iter()
            .filter_map(|&(c, va)| b.iter().find(|(cb, _)| *cb == c).map(|&(_, vb)| (c, va - vb)))
            .collect()
    };
    let chart = |name: &str, title: &str, y: &str, series: Vec<Series>| -> Result<(), CliError> {
        if series.is_empty() {
            return Ok(());
        }
        plot::line_chart(&eff.out.join(name), title, "c", y, &series).map_err(CliError::Validation)
    };
    let pair = |top: Quantity, bottom: Quantity, top_name: &str, bottom_name: &str, fits: &[Quantity]| -> Vec<Series> {
        let mut s = Vec::new();
        if let Some(v) = col(bottom) {
            s.push(Series::data(bottom_name, v, GREEN_));
        }
        if let Some(v) = col(top) {
            s.push(Series::data(top_name, v, RED_));
        }
        for &q in fits {
            if let Some(f) = fit_of(q) {
                s.push(Series::fit(&format!("{} fit", q.name()), fit_curve(f)));
            }
        }
        s
    };

    chart(
        "depth.svg",
        "Well depth",
        "depth",
        pair(
            Quantity::DepthTop,
            Quantity::DepthBottom,
            "top well",
            "bottom well",
            &[Quantity::DepthBottom],
        ),
    )?;
    if let (Some(b), Some(t)) = (col(Quantity::DepthBottom), col(Quantity::DepthTop)) {
        chart(
            "depth_difference.svg",
            "Depth difference",
            "bottom - top",
            vec![Series::data("bottom - top", diff(&b, &t), plot::GREEN_)],
        )?;
    }
    chart(
        "flatness.svg",
        "Flatness",
        "mean |grad V|",
        pair(
            Quantity::FlatnessBottom,
            Quantity::FlatnessTop,
            "y in [-1.5, 0]",
            "y in [0, 1.5]",
            &[Quantity::FlatnessTop, Quantity::FlatnessBottom],
        ),
    )?;
    chart(
        "branching_ratio.svg",
        "Branching ratio",
        "fraction of trajectories",
        pair(
            Quantity::RatioTop,
            Quantity::RatioBottom,
            "top well",
            "bottom well",
            &[Quantity::RatioBottom],
        ),
    )?;
    chart(
        "lobe_areas.svg",
        "Lobe areas",
        "area",
        pair(
            Quantity::LobeAreaTop,
            Quantity::LobeAreaBottom,
            "top lobe",
            "bottom lobe",
            &[Quantity::LobeAreaBottom],
        ),
    )?;
    if let (Some(b), Some(t)) = (col(Quantity::LobeAreaBottom), col(Quantity::LobeAreaTop)) {
        chart(
            "lobe_area_difference.svg",
            "Lobe area difference",
            "bottom - top",
            vec![Series::data("bottom - top", diff(&b, &t), plot::GREEN_)],
        )?;
    }
    Ok(())
}
