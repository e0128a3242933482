use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use picard_nls::channel::channel_norm;
use picard_nls::experiments::{
    gaussian_datum, run_convergence_eps, run_convergence_tau, write_field, write_spectra_csv, ConvergenceRecord,
};
use picard_nls::nts::{cross_validate, NtsVariant};
use picard_nls::oracles::{gaussian_oracle, GaussianOracleConfig, OracleCase};
use picard_nls::params::IntegratorParams;
use picard_nls::spectral::Grid;
use picard_nls::trees::{check_weight_identity, grow_trees, initial_full, shapes};
use picard_nls::turbulence::turbulence_run;
use serde::Serialize;

use crate::config::{load, Check, EpsFile, TauFile, TurbulenceFile};
use crate::{Case, CliError, Common, Scale, Variant};

#[derive(Serialize)]
struct Meta<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    cutoff: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    results: BTreeMap<String, String>,
    config: &'a C,
}

fn sidecar(csv: &Path) -> PathBuf {
    let mut name = csv.file_stem().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    csv.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?))
}

fn write_outputs<C: Serialize>(
    csv: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    meta: &Meta<'_, C>,
) -> Result<(), CliError> {
    let mut w = create(csv)?;
    body(&mut w)?;
    w.flush()?;
    let text = toml::to_string(meta).map_err(|e| CliError::Run(e.to_string()))?;
    std::fs::write(sidecar(csv), text)?;
    println!("wrote {} and {}", csv.display(), sidecar(csv).display());
    Ok(())
}

fn output_path(common: &Common, default: &str) -> PathBuf {
    common.output.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn apply_checks(rec: &ConvergenceRecord, checks: &[Check], results: &mut BTreeMap<String, String>) -> Vec<String> {
    let mut failed = Vec::new();
    for (i, c) in checks.iter().enumerate() {
        let (line, ok) = c.evaluate(rec);
        println!("{line}");
        results.insert(format!("check_{i}"), line.clone());
        if !ok {
            failed.push(line);
        }
    }
    failed
}

fn finish(failed: Vec<String>, assert: bool) -> Result<(), CliError> {
    if assert && !failed.is_empty() {
        return Err(CliError::Assert(failed.join("; ")));
    }
    Ok(())
}

fn print_record(rec: &ConvergenceRecord) {
    println!("{:>12} {}", "abscissa", rec.channels.iter().map(|c| format!("{c:>12}")).collect::<String>());
    for p in &rec.points {
        println!("{:>12.4e} {}", p.abscissa, p.errors.iter().map(|e| format!("{e:>12.4e}")).collect::<String>());
    }
}

pub fn convergence_tau(
    case: Case,
    taus: Option<Vec<f64>>,
    channels: Option<Vec<String>>,
    modes: Option<usize>,
    final_time: Option<f64>,
    common: &Common,
) -> Result<(), CliError> {
    let mut file: TauFile = load(common.config.as_deref(), &format!("convergence_tau_{}", case.name()))?;
    if let Some(t) = taus {
        file.scheme.tau = t[0];
        file.sweep.taus = t;
    }
    if let Some(c) = channels {
        file.sweep.channels = c;
    }
    if let Some(k) = modes {
        file.scheme.modes = k;
    }
    if let Some(t) = final_time {
        file.scheme.final_time = t;
    }
    let oracle = file.sweep.oracle(file.scheme.final_time);
    let rec = run_convergence_tau(&file.scheme, &file.sweep.taus, &oracle, &file.sweep.channels()?)?;
    print_record(&rec);
    let mut results = BTreeMap::new();
    let failed = apply_checks(&rec, &file.checks, &mut results);
    let meta = Meta {
        command: "convergence-tau",
        version: env!("CARGO_PKG_VERSION"),
        cutoff: format!("{:?}", file.scheme.cutoff),
        seed: file.scheme.seed,
        results,
        config: &file,
    };
    let csv = output_path(common, &format!("convergence-tau-{}.csv", case.name()));
    write_outputs(&csv, |w| Ok(rec.write_csv(w)?), &meta)?;
    finish(failed, common.assert)
}

pub fn convergence_eps(
    case: Case,
    epsilons: Option<Vec<f64>>,
    tau: Option<f64>,
    reference_tau: Option<f64>,
    modes: Option<usize>,
    final_time: Option<f64>,
    common: &Common,
) -> Result<(), CliError> {
    let mut file: EpsFile = load(common.config.as_deref(), &format!("convergence_eps_{}", case.name()))?;
    if let Some(e) = epsilons {
        file.sweep.epsilons = e;
    }
    if let Some(t) = tau {
        file.scheme.tau = t;
    }
    if let Some(t) = reference_tau {
        file.sweep.reference_tau = t;
    }
    if let Some(k) = modes {
        file.scheme.modes = k;
    }
    if let Some(t) = final_time {
        file.scheme.final_time = t;
    }
    let rec = run_convergence_eps(&file.scheme, &file.sweep.epsilons, file.sweep.reference_tau)?;
    print_record(&rec);
    let mut results = BTreeMap::new();
    let failed = apply_checks(&rec, &file.checks, &mut results);
    let meta = Meta {
        command: "convergence-eps",
        version: env!("CARGO_PKG_VERSION"),
        cutoff: format!("{:?}", file.scheme.cutoff),
        seed: file.scheme.seed,
        results,
        config: &file,
    };
    let csv = output_path(common, &format!("convergence-eps-{}.csv", case.name()));
    write_outputs(&csv, |w| Ok(rec.write_csv(w)?), &meta)?;
    finish(failed, common.assert)
}

pub fn turbulence(
    preset: Scale,
    seed: Option<u64>,
    modes: Option<usize>,
    final_time: Option<f64>,
    record_every: Option<usize>,
    memory_limit_mb: Option<u64>,
    common: &Common,
) -> Result<(), CliError> {
    let name = match preset {
        Scale::Desk => "turbulence_desk",
        Scale::Full => "turbulence_full",
    };
    let mut file: TurbulenceFile = load(common.config.as_deref(), name)?;
    if let Some(s) = seed {
        file.run.spec.seed = s;
    }
    if let Some(k) = modes {
        file.run.modes = k;
    }
    if let Some(t) = final_time {
        file.run.final_time = t;
    }
    if let Some(r) = record_every {
        file.run.record_every = r;
    }
    if let Some(m) = memory_limit_mb {
        file.run.memory_limit_mb = m;
    }
    println!("estimated footprint: {} MiB", file.run.memory_estimate_mb());
    let out = turbulence_run(&file.run)?;
    let mut results = BTreeMap::new();
    let mut failed = Vec::new();
    for (t, r) in &out.diagnostics {
        println!("t = {t:>8.3}  first-order ratio {r:.4e}");
    }
    results.insert("max_diagnostic".into(), format!("{:.16e}", out.max_diagnostic));
    if let Some(max) = file.checks.max_diagnostic {
        let ok = out.max_diagnostic <= max;
        let line = format!("first-order diagnostic {:.4e} <= {max:e} {}", out.max_diagnostic, verdict(ok));
        println!("{line}");
        if !ok {
            failed.push(line);
        }
    }
    let (lo, hi) = file.run.fit_window;
    match out.fit {
        Some(fit) => {
            results.insert("exponent".into(), format!("{:.16e}", fit.slope));
            let ok = file.checks.min_exponent.map_or(true, |m| fit.slope >= m)
                && file.checks.max_exponent.map_or(true, |m| fit.slope <= m);
            let line = format!("exponent {:.4} over shells [{lo}, {hi}] ({} points) {}", fit.slope, fit.points, verdict(ok));
            println!("{line}");
            if !ok {
                failed.push(line);
            }
        }
        None => {
            let line = format!("exponent undefined over shells [{lo}, {hi}]");
            println!("{line}");
            if file.checks.min_exponent.is_some() || file.checks.max_exponent.is_some() {
                failed.push(line);
            }
        }
    }
    let meta = Meta {
        command: "turbulence",
        version: env!("CARGO_PKG_VERSION"),
        cutoff: format!("{:?}", file.run.cutoff),
        seed: Some(file.run.spec.seed),
        results,
        config: &file,
    };
    let csv = output_path(common, &format!("turbulence-{}.csv", file.run.spec.seed));
    write_outputs(&csv, |w| Ok(write_spectra_csv(&out.spectra, w)?), &meta)?;
    finish(failed, common.assert)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn validate_trees(p: usize, n_max: usize, beta_max: usize) -> Result<(), CliError> {
    if n_max == 0 {
        return Err(CliError::Config("n-max must be at least 1".into()));
    }
    println!("p = {p}");
    for n in 1..=n_max {
        let trees = grow_trees(n, p)?;
        println!("T_{n}: {} trees", trees.len());
        for (t, c) in &trees {
            println!("  {c:>6}  {t}");
        }
    }
    for n in 1..=n_max {
        let counts = (0..=beta_max)
            .map(|b| shapes(n, p, b).map(|s| s.len().to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        println!("S_{n}^beta, beta = 0..={beta_max}: {}", counts.join(" "));
    }
    println!("weights: n beta trees max|alpha|");
    for n in 1..=n_max {
        let mut set = initial_full(n, p, 1)?;
        for beta in 0..=beta_max {
            if beta > 0 {
                set = set.derive()?;
            }
            let top = set.iter().map(|(t, _)| t.total_weight()).max().unwrap_or(0);
            println!("  {n} {beta} {} {top}", set.len());
        }
    }
    let check = check_weight_identity(p, n_max, beta_max)?;
    for (n, beta, t) in &check.violations {
        println!("  violation n={n} beta={beta}: {t}");
    }
    println!("weight identity ({} trees): {}", check.checked, verdict(check.violations.is_empty()));
    if check.violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assert("weight identity violated".into()))
    }
}

pub fn cross_validate_nts(
    tau: f64,
    steps: usize,
    modes: usize,
    scale: f64,
    variant: Variant,
    tolerance: f64,
    common: &Common,
) -> Result<(), CliError> {
    let grid = Grid::new(2, scale, modes)?;
    let phi = gaussian_datum(&grid);
    let variant = match variant {
        Variant::Corrected => NtsVariant::Corrected,
        Variant::AsPrinted => NtsVariant::AsPrinted,
    };
    let rels = cross_validate(IntegratorParams::new(3, 4, tau), variant, &phi, steps)?;
    let worst = rels.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    for (ch, r) in &rels {
        println!("{ch:>8}  {r:.3e}");
    }
    let ok = worst <= tolerance;
    let line = format!("max relative difference {worst:.3e} <= {tolerance:e} {}", verdict(ok));
    println!("{line}");
    #[derive(Serialize)]
    struct Params {
        tau: f64,
        steps: usize,
        modes: usize,
        scale: f64,
        variant: String,
        tolerance: f64,
    }
    let params = Params { tau, steps, modes, scale, variant: format!("{variant:?}"), tolerance };
    let mut results = BTreeMap::new();
    results.insert("max_relative_difference".into(), format!("{worst:.16e}"));
    let meta = Meta {
        command: "cross-validate-nts",
        version: env!("CARGO_PKG_VERSION"),
        cutoff: "SharpIndicator".into(),
        seed: None,
        results,
        config: &params,
    };
    let csv = output_path(common, "cross-validate-nts.csv");
    write_outputs(
        &csv,
        |w| {
            writeln!(w, "channel,relative_difference")?;
            for (ch, r) in &rels {
                writeln!(w, "{ch},{r:.16e}")?;
            }
            Ok(())
        },
        &meta,
    )?;
    finish(if ok { vec![] } else { vec![line] }, common.assert)
}

pub fn oracle_dump(
    case: Case,
    final_time: f64,
    modes: Option<usize>,
    scale: Option<f64>,
    tau0: Option<f64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let (oc, d, a, k) = match case {
        Case::Quintic1d => (OracleCase::Quintic1D, 1, 0.05, 512),
        Case::Cubic2d => (OracleCase::Cubic2D, 2, 1.0 / 6.0, 128),
    };
    let grid = Grid::new(d, scale.unwrap_or(a), modes.unwrap_or(k))?;
    let mut cfg = GaussianOracleConfig::new(oc, final_time);
    if let Some(t) = tau0 {
        cfg.tau0 = t;
    }
    let fields = gaussian_oracle(&cfg, &grid)?;
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for (ch, comps) in &fields.entries {
        for (i, f) in comps.iter().enumerate() {
            let name = if comps.len() > 1 { format!("{}_{ch}_{i}.fld", case.name()) } else { format!("{}_{ch}.fld", case.name()) };
            let mut w = create(&out_dir.join(&name))?;
            write_field(f, &mut w)?;
            w.flush()?;
            rows.push((ch.to_string(), i, name));
        }
        println!("{ch:>10}  norm {:.6e}", channel_norm(comps));
    }
    #[derive(Serialize)]
    struct Params {
        oracle: GaussianOracleConfig,
        dim: usize,
        scale: f64,
        modes: usize,
    }
    let params = Params { oracle: cfg, dim: d, scale: grid.scale(), modes: grid.modes() };
    let meta = Meta {
        command: "oracle-dump",
        version: env!("CARGO_PKG_VERSION"),
        cutoff: "none".into(),
        seed: None,
        results: BTreeMap::new(),
        config: &params,
    };
    write_outputs(
        &out_dir.join(format!("oracle-{}.csv", case.name())),
        |w| {
            writeln!(w, "channel,component,file")?;
            for (ch, i, name) in &rows {
                writeln!(w, "{ch},{i},{name}")?;
            }
            Ok(())
        },
        &meta,
    )
}
