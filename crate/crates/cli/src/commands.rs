use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use glassbox::attribution::{attribute as attribute_one, load_map, save_map, MethodSpec, Target};
use glassbox::datagen::{export_dataset, generate, import_dataset, LabSample};
use glassbox::netforge::{build_net as forge, count_boundary, verify_net, Environment, WeightBundle};
use glassbox::suite::{
    evaluate as score_maps, fingerprint_of, lookup, EvalReport, MapTable, MethodEntry, MetricKind, ResolvedMethod,
    RunConfig,
};
use glassbox::NetGraph;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::Fingerprint;
use crate::{plot, CliError, ConfigArgs};

type Res = Result<(), CliError>;

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.config.display())))?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", args.config.display())))?;
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(c) = args.count {
        cfg.dataset.count = c;
    }
    if let Some(s) = args.seed {
        cfg.dataset.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Res {
    let mut text = serde_json::to_string_pretty(v).expect("serializable");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn env_name(env: &Environment) -> &'static str {
    match env {
        Environment::SingleColor(_) => "single-color",
        Environment::MultiColor(_) => "multi-color",
    }
}

fn check_taps(net: &NetGraph, methods: &[ResolvedMethod]) -> Res {
    for m in methods {
        if let MethodSpec::GradCam { tap: Some(t) } = &m.spec {
            net.tap(t).map_err(|e| CliError::usage(format!("method `{}`: {e}", m.label)))?;
        }
    }
    Ok(())
}

fn load_net(dir: &Path, env: &Environment) -> Result<(Fingerprint, NetGraph), CliError> {
    let fp = Fingerprint::expect(dir, "network", env)?;
    let net = WeightBundle::load(dir)?.to_net()?;
    Ok((fp, net))
}

fn load_data(dir: &Path, env: &Environment) -> Result<(Fingerprint, Vec<LabSample>), CliError> {
    let fp = Fingerprint::expect(dir, "dataset", env)?;
    let (manifest, samples) = import_dataset(dir)?;
    if &manifest.environment != env {
        return Err(CliError::usage(format!(
            "{}: dataset manifest describes a different environment",
            dir.display()
        )));
    }
    Ok((fp, samples))
}

pub fn gen_data(args: &ConfigArgs, out: &Path) -> Res {
    let cfg = load_config(args)?;
    let env = &cfg.environment;
    let samples = generate(env, cfg.dataset.count, cfg.dataset.seed)?;
    export_dataset(&samples, env, cfg.dataset.seed, out)?;
    Fingerprint::dataset(env, cfg.dataset.count, cfg.dataset.seed).save(out)?;
    let mut labels = BTreeMap::<usize, usize>::new();
    for s in &samples {
        *labels.entry(s.label).or_default() += 1;
    }
    let spread: Vec<String> = labels.iter().map(|(l, n)| format!("{l}:{n}")).collect();
    println!(
        "wrote {} {} samples ({}x{}, seed {}) to {}; labels {}",
        samples.len(),
        env_name(env),
        env.height(),
        env.width(),
        cfg.dataset.seed,
        out.display(),
        spread.join(" ")
    );
    Ok(())
}

pub fn build_net(args: &ConfigArgs, out: &Path, verify_samples: usize) -> Res {
    let cfg = load_config(args)?;
    let env = &cfg.environment;
    let net = forge(env)?;
    check_taps(&net, &cfg.resolved_methods()?)?;
    let bundle = WeightBundle::from_net(&net, serde_json::to_value(env).expect("serializable"));
    bundle.save(out)?;
    Fingerprint::network(env).save(out)?;
    println!(
        "{} network: {} layers ({} weighted), {} parameters",
        env_name(env),
        net.len(),
        net.weighted_layer_count(),
        net.parameter_count()
    );
    let report = verify_net(&net, env, verify_samples, cfg.dataset.seed)?;
    write_json(&out.join("verification.json"), &report)?;
    if !report.passed() {
        for f in &report.failures {
            eprintln!("  {f}");
        }
        return Err(CliError::runtime(format!("verification failed with {} problems", report.failures.len())));
    }
    match (env, report.exhaustive_range) {
        (Environment::SingleColor(c), Some([lo, hi])) => {
            println!("verified: modulo {} exact on [{lo},{hi}]", c.modulus)
        }
        _ => println!(
            "verified: labels match the counting oracle on {}/{} samples, logits exact",
            (report.oracle_agreement * report.samples as f64).round(),
            report.samples
        ),
    }
    log::info!(
        "count boundary at layer {}, {} single-pixel flips checked",
        count_boundary(&net).unwrap_or(0),
        report.flips_checked
    );
    Ok(())
}

/// Methods named on the command line, or the config's list.
fn select_methods(cfg: &RunConfig, names: &[String]) -> Result<Vec<ResolvedMethod>, CliError> {
    if names.is_empty() {
        return Ok(cfg.resolved_methods()?);
    }
    let configured = cfg.resolved_methods()?;
    let mut picked = cfg.clone();
    picked.methods = names
        .iter()
        .map(|n| match configured.iter().find(|m| &m.label == n) {
            Some(m) => MethodEntry::Spec { label: m.label.clone(), spec: m.spec.clone() },
            None => MethodEntry::Name(n.clone()),
        })
        .collect();
    picked.validate()?;
    Ok(picked.resolved_methods()?)
}

#[derive(Serialize)]
struct CellFailure {
    method: String,
    sample: usize,
    error: String,
}

enum Cell {
    Computed,
    Reused,
    Failed(CellFailure),
}

pub fn attribute(args: &ConfigArgs, net_dir: &Path, data_dir: &Path, out: &Path, names: &[String]) -> Res {
    let cfg = load_config(args)?;
    let env = &cfg.environment;
    let methods = select_methods(&cfg, names)?;
    let (net_fp, net) = load_net(net_dir, env)?;
    check_taps(&net, &methods)?;
    let (data_fp, samples) = load_data(data_dir, env)?;

    let mut fp = Fingerprint::new("maps", env, String::new());
    fp.inputs.insert("network".into(), net_fp.artifact.clone());
    fp.inputs.insert("dataset".into(), data_fp.artifact.clone());
    let reuse = match Fingerprint::load(out) {
        Ok(old) if old.kind == "maps" && old.inputs == fp.inputs && old.environment == fp.environment => {
            fp.methods = old.methods;
            true
        }
        _ => false,
    };

    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..samples.len()).map(move |s| (m, s)))
        .collect();
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let step = (total / 10).max(1);
    log::info!("attributing {} methods x {} samples", methods.len(), samples.len());
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(mi, si)| {
            let m = &methods[mi];
            let s = &samples[si];
            let dir = out.join(&m.label);
            let stem = format!("{si:04}");
            let target = m.spec.effective_target(Target::for_sample(s, &net));
            let cached = reuse
                && matches!(load_map(&dir, &stem), Ok((_, side))
                    if side.fingerprint == m.spec.fingerprint() && side.target == target && side.sample == si);
            let cell = if cached {
                Cell::Reused
            } else {
                match attribute_cell(&net, s, m, target, si, &dir, &stem) {
                    Ok(()) => Cell::Computed,
                    Err(error) => Cell::Failed(CellFailure { method: m.label.clone(), sample: si, error }),
                }
            };
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n % step == 0 || n == total {
                log::info!("{n}/{total} cells");
            }
            cell
        })
        .collect();

    for m in &methods {
        fp.methods.insert(m.label.clone(), m.spec.fingerprint());
    }
    fp.artifact = fingerprint_of(&(&fp.inputs, &fp.methods));
    fp.save(out)?;

    let (mut computed, mut reused) = (0, 0);
    let mut failures = Vec::new();
    for c in cells {
        match c {
            Cell::Computed => computed += 1,
            Cell::Reused => reused += 1,
            Cell::Failed(f) => failures.push(f),
        }
    }
    let failures_path = out.join("failures.json");
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path)?;
        }
    } else {
        for f in &failures {
            log::warn!("{} sample {}: {}", f.method, f.sample, f.error);
        }
        write_json(&failures_path, &failures)?;
    }
    println!(
        "{total} cells: {computed} computed, {reused} reused, {} failed; maps in {}",
        failures.len(),
        out.display()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "{} cells failed; see {}",
            failures.len(),
            failures_path.display()
        )))
    }
}

fn attribute_cell(
    net: &NetGraph,
    sample: &LabSample,
    m: &ResolvedMethod,
    target: Target,
    index: usize,
    dir: &Path,
    stem: &str,
) -> Result<(), String> {
    let map = attribute_one(net, sample, &m.spec, target).map_err(|e| e.to_string())?;
    save_map(&map, index, dir, stem).map_err(|e| e.to_string())
}

fn read_maps(dir: &Path, fp: &Fingerprint, methods: &[ResolvedMethod], samples: usize) -> MapTable {
    let mut table = MapTable::new();
    for m in methods {
        if !fp.methods.contains_key(&m.label) {
            continue;
        }
        for si in 0..samples {
            let stem = format!("{si:04}");
            let cell = match load_map(&dir.join(&m.label), &stem) {
                Ok((map, side)) if side.fingerprint == m.spec.fingerprint() && side.sample == si => Ok(map),
                Ok(_) => Err(format!("stale map {}/{stem} does not match the method settings", m.label)),
                Err(e) => Err(e.to_string()),
            };
            table.insert((m.label.clone(), si), cell);
        }
    }
    table
}

pub fn evaluate(args: &ConfigArgs, net_dir: &Path, data_dir: &Path, maps_dir: &Path, out: &Path) -> Res {
    let cfg = load_config(args)?;
    let env = &cfg.environment;
    let methods = cfg.resolved_methods()?;
    let (net_fp, net) = load_net(net_dir, env)?;
    let (data_fp, samples) = load_data(data_dir, env)?;
    let maps_fp = Fingerprint::expect(maps_dir, "maps", env)?;
    for (kind, want) in [("network", &net_fp.artifact), ("dataset", &data_fp.artifact)] {
        match maps_fp.inputs.get(kind) {
            Some(have) if have == want => {}
            have => {
                return Err(CliError::usage(format!(
                    "fingerprint mismatch: maps in {} were computed from {kind} {}, not {want}",
                    maps_dir.display(),
                    have.map_or("<none>", String::as_str)
                )))
            }
        }
    }
    for m in &methods {
        if let Some(have) = maps_fp.methods.get(&m.label) {
            if have != &m.spec.fingerprint() {
                return Err(CliError::usage(format!(
                    "fingerprint mismatch: maps for `{}` were computed with different settings ({have} vs {})",
                    m.label,
                    m.spec.fingerprint()
                )));
            }
        }
    }
    if samples.len() != cfg.dataset.count {
        log::warn!("config asks for {} samples, dataset holds {}", cfg.dataset.count, samples.len());
    }

    let maps = read_maps(maps_dir, &maps_fp, &methods, samples.len());
    let absent: Vec<&str> = methods
        .iter()
        .filter(|m| !maps_fp.methods.contains_key(&m.label))
        .map(|m| m.label.as_str())
        .collect();
    if !absent.is_empty() {
        log::warn!("no maps for {}; their cells are skipped", absent.join(", "));
    }
    log::info!("scoring {} methods on {} samples", methods.len(), samples.len());
    let report = score_maps(&net, &samples, &methods, &cfg, |label, i| lookup(&maps, label, i))?;

    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), &report)?;
    render(&report, out)?;
    let mut fp = Fingerprint::new("evaluation", env, report.config_fingerprint.clone());
    fp.inputs.insert("network".into(), net_fp.artifact);
    fp.inputs.insert("dataset".into(), data_fp.artifact);
    fp.inputs.insert("maps".into(), maps_fp.artifact);
    fp.methods = methods.iter().map(|m| (m.label.clone(), m.spec.fingerprint())).collect();
    fp.save(out)?;
    print!("{}", summary(&report));
    println!("report written to {}", out.display());
    Ok(())
}

pub fn report(path: &Path, out: &Path) -> Res {
    let raw = fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let report: EvalReport =
        serde_json::from_slice(&raw).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    fs::create_dir_all(out)?;
    render(&report, out)?;
    print!("{}", summary(&report));
    Ok(())
}

/// Writes the CSV tables and SVG plots for a report.
fn render(report: &EvalReport, out: &Path) -> Res {
    fs::write(out.join("report.csv"), report.to_csv())?;
    let curve_dir = out.join("curves");
    fs::create_dir_all(&curve_dir)?;
    for m in &report.methods {
        for c in &m.curves {
            let mut csv = String::from("x,y\n");
            for (x, y) in c.mean_curve.x.iter().zip(&c.mean_curve.y) {
                let _ = writeln!(csv, "{x},{y}");
            }
            fs::write(curve_dir.join(format!("{}_{}.csv", m.label, c.metric.name())), csv)?;
        }
    }
    let variants: Vec<_> = report.methods.first().map(|m| m.scores.iter().map(|s| s.variant).collect()).unwrap_or_default();
    for v in variants {
        let groups: Vec<(String, Vec<f64>)> = report
            .methods
            .iter()
            .filter_map(|m| m.variant(v).map(|s| (m.label.clone(), s.per_sample.iter().map(|t| t.f1).collect())))
            .collect();
        let title = format!("F1 per sample vs {} ground truth", v.name());
        fs::write(out.join(format!("scores_{}.svg", v.name())), plot::violin(&title, "F1", &groups))?;
    }
    for &metric in report.metrics.iter().filter(|m| m.is_curve()) {
        let series: Vec<(String, &_)> = report
            .methods
            .iter()
            .filter_map(|m| m.curve(metric).map(|c| (m.label.clone(), &c.mean_curve)))
            .collect();
        let (x, y) = match metric {
            MetricKind::SensitivityN => ("n (pixels removed)", "correlation"),
            MetricKind::Deletion => ("fraction removed", "score"),
            _ => ("fraction inserted", "score"),
        };
        let svg = plot::curves(&format!("Mean {} curve", metric.name()), x, y, &series);
        fs::write(out.join(format!("curves_{}.svg", metric.name())), svg)?;
    }
    if let Some(t) = &report.rank_table {
        fs::write(out.join("rank_table.svg"), plot::rank_table(t))?;
    }
    Ok(())
}

fn summary(report: &EvalReport) -> String {
    let curves: Vec<MetricKind> = report.metrics.iter().copied().filter(|m| m.is_curve()).collect();
    let variant = report
        .rank_table
        .as_ref()
        .map(|t| t.variant)
        .or_else(|| report.methods.first().and_then(|m| m.scores.first()).map(|s| s.variant));
    let mut s = String::new();
    let _ = write!(s, "{:<24}", "method");
    if let Some(v) = variant {
        let _ = write!(s, " {:>7} {:>7} {:>7}  {:<5}", "P", "R", "F1", "γ");
        let _ = write!(s, " ({})", v.name());
    }
    for c in &curves {
        let _ = write!(s, " {:>14}", c.name());
    }
    s.push('\n');
    for m in &report.methods {
        let _ = write!(s, "{:<24}", m.label);
        if let Some(sc) = variant.and_then(|v| m.variant(v)) {
            let verdict = if sc.incapable {
                "n/a"
            } else if sc.verdict.pass {
                "pass"
            } else {
                "fail"
            };
            let _ = write!(s, " {:>7.3} {:>7.3} {:>7.3}  {verdict:<5}", sc.precision, sc.recall, sc.f1);
        }
        for c in &curves {
            match m.curve(*c) {
                Some(cv) => {
                    let _ = write!(s, " {:>14.4}", cv.mean_auc);
                }
                None => {
                    let _ = write!(s, " {:>14}", "-");
                }
            }
        }
        s.push('\n');
    }
    if let Some(t) = &report.rank_table {
        let rho: Vec<String> = t.spearman.iter().map(|(k, v)| format!("{k} {v:.3}")).collect();
        let _ = writeln!(s, "spearman vs gt-f1 ranking: {}", rho.join(", "));
    }
    if !report.skipped.is_empty() {
        let _ = writeln!(s, "{} skipped cells (see report.json)", report.skipped.len());
    }
    s
}
