use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use kcprobe::experiment::{
    best_layer, emit_curves, evaluate_probes, read_curves, run_probe_sweep, run_shape_analysis, MetricCurve,
    ShapeConfig, SliceFailure, SweepConfig,
};
use kcprobe::metrics::MetricKind;
use kcprobe::probe::{ProbeWeights, StepSize, TrainConfig};
use kcprobe::report;
use kcprobe::store::{AnswerGroup, Dump, EvidenceGroup};

use crate::{DetectArgs, EvalArgs, ReportArgs, SkewArgs, TrainArgs};

pub enum Failure {
    /// Bad flag values that clap cannot catch on its own.
    Usage(String),
    /// Unreadable or invalid inputs, failed writes.
    Data(String),
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Data(format!("{context}: {e}"))
}

fn load_dump(path: &Path) -> Result<Dump, Failure> {
    Dump::load(path).map_err(data(path.display()))
}

fn write_curves(curves: &[MetricCurve], path: &Path) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(data(path.display()))?;
    let mut w = BufWriter::new(file);
    emit_curves(curves, &mut w).map_err(data(path.display()))?;
    w.flush().map_err(data(path.display()))
}

fn report_failures(failures: &[SliceFailure]) {
    for f in failures {
        match f.seed {
            Some(seed) => eprintln!("absent: layer {} {} seed {seed}: {}", f.layer, f.kind, f.reason),
            None => eprintln!("absent: layer {} {}: {}", f.layer, f.kind, f.reason),
        }
    }
}

fn report_best(curves: &[MetricCurve]) {
    for c in curves {
        let group = c.group.map(|g| format!(" [{g}]")).unwrap_or_default();
        match best_layer(c) {
            Ok((layer, kind)) => {
                let mean = c.mean_at(layer, kind).expect("best point is present");
                eprintln!("best {}{group}: layer {layer} ({kind}) mean {mean:.4}", c.metric);
            }
            Err(e) => eprintln!("best {}{group}: {e}", c.metric),
        }
    }
}

pub fn validate(path: &Path) -> Result<(), Failure> {
    let dump = load_dump(path)?;
    let h = &dump.header;
    let count = |e: EvidenceGroup, a: Option<AnswerGroup>| {
        dump.records
            .iter()
            .filter(|r| r.evidence_group == e && a.is_none_or(|a| r.answer_group == a))
            .count()
    };
    let kinds: Vec<&str> = h.kinds.iter().map(|k| k.name()).collect();
    println!("records: {}", dump.records.len());
    println!("model: {}", h.model_name);
    println!("dataset: {}", h.dataset_name);
    println!("prompt_template_id: {}", h.prompt_template_id);
    println!("created_utc: {}", h.created_utc);
    println!("num_layers: {}", h.num_layers);
    println!("hidden_dim: {}", h.hidden_dim);
    println!("kinds: {}", kinds.join(","));
    println!("with_e_M: {}", count(EvidenceGroup::WithEM, None));
    println!(
        "with_e_C: {} (matched_a_C {}, matched_a_M {}, unmatched {})",
        count(EvidenceGroup::WithEC, None),
        count(EvidenceGroup::WithEC, Some(AnswerGroup::MatchedAC)),
        count(EvidenceGroup::WithEC, Some(AnswerGroup::MatchedAM)),
        count(EvidenceGroup::WithEC, Some(AnswerGroup::Unmatched)),
    );
    Ok(())
}

fn probe_file_name(p: &ProbeWeights) -> String {
    format!(
        "probe_{}_L{:03}_{}_s{:02}.json",
        p.meta.task.short_name(),
        p.meta.layer,
        p.meta.kind,
        p.meta.seed
    )
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    if a.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let config = SweepConfig {
        task: a.task,
        layers: a.layers,
        kinds: a.kinds,
        seeds: (0..a.seeds).collect(),
        train_fraction: a.train_fraction,
        probe: TrainConfig {
            lambda: a.lambda,
            max_iterations: a.max_iterations,
            tolerance: a.tolerance,
            step_size: StepSize::Backtracking,
            seed: 0,
            standardize: a.standardize,
        },
        threshold: a.threshold,
        jobs: a.jobs,
    };
    let dump = load_dump(&a.dump)?;
    let out = run_probe_sweep(&dump, &config).map_err(|e| match e {
        kcprobe::experiment::ExperimentError::InvalidConfig(m) => Failure::Usage(m),
        other => Failure::Data(other.to_string()),
    })?;

    fs::create_dir_all(&a.out).map_err(data(a.out.display()))?;
    for p in &out.probes {
        let path = a.out.join(probe_file_name(p));
        p.save(&path).map_err(data(path.display()))?;
    }
    write_curves(&out.curves, &a.out.join("curves.csv"))?;
    report_failures(&out.failures);
    report_best(&out.curves);
    eprintln!(
        "wrote {} probes and curves.csv to {}",
        out.probes.len(),
        a.out.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let mut paths: Vec<_> = fs::read_dir(&a.probes)
        .map_err(data(a.probes.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Data(format!("{}: no probe files", a.probes.display())));
    }
    let probes = paths
        .iter()
        .map(|p| ProbeWeights::load(p).map_err(data(p.display())))
        .collect::<Result<Vec<_>, _>>()?;
    let dump = load_dump(&a.dump)?;
    let out = evaluate_probes(&dump, &probes, a.train_fraction, a.threshold, a.jobs).map_err(data("eval"))?;
    write_curves(&out.curves, &a.out)?;
    report_failures(&out.failures);
    report_best(&out.curves);
    Ok(())
}

pub fn skew(a: SkewArgs) -> Result<(), Failure> {
    let metrics = a
        .metrics
        .iter()
        .map(|m| {
            MetricKind::parse(m)
                .filter(|k| k.is_shape())
                .ok_or_else(|| Failure::Usage(format!("unknown shape metric {m:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dump = load_dump(&a.dump)?;
    let config = ShapeConfig {
        metrics,
        grouping: a.grouping,
        layers: a.layers,
        kinds: a.kinds,
        jobs: a.jobs,
    };
    let curves = run_shape_analysis(&dump, &config).map_err(data("skew"))?;
    write_curves(&curves, &a.out)
}

pub fn detect(a: DetectArgs) -> Result<(), Failure> {
    let bundle = kcprobe::load_bundle(
        &a.conflict_probe,
        a.selection_probe.as_deref(),
        a.layer,
        a.kind,
        a.threshold,
    )
    .map_err(|e| Failure::Data(e.to_string()))?;
    let stdout = io::stdout().lock();
    let n = match &a.input {
        Some(path) => {
            let file = fs::File::open(path).map_err(data(path.display()))?;
            bundle.detect_stream(file, stdout)
        }
        None => bundle.detect_stream(io::stdin().lock(), stdout),
    }
    .map_err(data("detect"))?;
    eprintln!("scored {n} vectors");
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<(), Failure> {
    let file = fs::File::open(&a.input).map_err(data(a.input.display()))?;
    let curves = read_curves(file).map_err(data(a.input.display()))?;
    fs::create_dir_all(&a.out).map_err(data(a.out.display()))?;
    let mut stdout = io::stdout().lock();
    let _ = writeln!(stdout, "curve,best_layer,kind,mean,file");
    for c in &curves {
        let name = format!("{}.svg", report::file_stem(c));
        let path = a.out.join(&name);
        fs::write(&path, report::render_svg(c)).map_err(data(path.display()))?;
        let best = best_layer(c)
            .ok()
            .map(|(l, k)| (l, k, c.mean_at(l, k).expect("present")));
        let _ = match best {
            Some((l, k, m)) => writeln!(stdout, "{},{l},{k},{m},{name}", report::file_stem(c)),
            None => writeln!(stdout, "{},,,,{name}", report::file_stem(c)),
        };
    }
    Ok(())
}
