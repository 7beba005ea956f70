use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use osmosis::validation::{
    bench_grid, benchmark_pair, order_study, random_field, write_bench_csv, BenchMethod,
    BenchOptions, BenchReference, StudyOptions, StudyScheme,
};
use osmosis::{
    evolve, load_mask, remove_shadow, DriftField, Error, GridShape, Image, Scheme, SchemeConfig,
    DEFAULT_EXPM_CAP,
};

use crate::args::{BenchArgs, OrderStudyArgs, ReferenceArg, SchemeArgs, ShadowArgs, SolveArgs};
use crate::manifest::{manifest_path, sibling, Run, RunManifest};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Runtime(_) => ExitCode::from(1),
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::ForwardEulerBound { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidOffset(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn absolute(p: &Path) -> Outcome<PathBuf> {
    std::path::absolute(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

/// Fill in defaults and make paths absolute so the manifest is
/// self-contained.
pub fn resolve(run: Run) -> Outcome<Run> {
    Ok(match run {
        Run::Solve(mut a) => {
            a.input = absolute(&a.input)?;
            a.reference = Some(absolute(a.reference.as_deref().unwrap_or(&a.input))?);
            a.out = absolute(&a.out)?;
            Run::Solve(a)
        }
        Run::Shadow(mut a) => {
            a.input = absolute(&a.input)?;
            a.mask = absolute(&a.mask)?;
            a.out = absolute(&a.out)?;
            Run::Shadow(a)
        }
        Run::OrderStudy(mut a) => {
            a.out_csv = a.out_csv.as_deref().map(absolute).transpose()?;
            a.plot_data = a.plot_data.as_deref().map(absolute).transpose()?;
            Run::OrderStudy(a)
        }
        Run::Bench(mut a) => {
            if a.methods.is_empty() {
                a.methods = BenchMethod::standard_set()
                    .iter()
                    .map(method_label)
                    .collect();
            }
            a.input = a.input.as_deref().map(absolute).transpose()?;
            a.out_csv = a.out_csv.as_deref().map(absolute).transpose()?;
            Run::Bench(a)
        }
    })
}

pub fn execute(manifest: &RunManifest) -> Outcome {
    match &manifest.run {
        Run::Solve(a) => solve(a)?,
        Run::OrderStudy(a) => study(a)?,
        Run::Bench(a) => bench(a)?,
        Run::Shadow(a) => shadow(a)?,
    }
    for out in outputs(&manifest.run) {
        manifest
            .write(&manifest_path(&out))
            .map_err(Failure::Runtime)?;
    }
    Ok(())
}

fn outputs(run: &Run) -> Vec<PathBuf> {
    match run {
        Run::Solve(a) => vec![a.out.clone()],
        Run::Shadow(a) => vec![a.out.clone()],
        Run::OrderStudy(a) => a.out_csv.iter().chain(&a.plot_data).cloned().collect(),
        Run::Bench(a) => a.out_csv.iter().cloned().collect(),
    }
}

fn method_label(m: &BenchMethod) -> String {
    match m.theta() {
        Some(t) => format!("{}:{t}", m.name()),
        None => m.name().to_string(),
    }
}

fn scheme_config(s: &SchemeArgs) -> SchemeConfig {
    SchemeConfig::new(s.scheme.into(), s.tau, s.t_final).with_theta(s.theta)
}

fn load_positive(path: &Path, eps: f64) -> Outcome<Image> {
    let img = Image::load(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(img.ensure_positive(eps)?)
}

fn save(img: &Image, path: &Path) -> Outcome {
    img.without_offset().save(path)?;
    Ok(())
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn solve(a: &SolveArgs) -> Outcome {
    let cfg = scheme_config(&a.scheme).with_diagnostics(a.diagnostics);
    cfg.validate()?;
    let f = load_positive(&a.input, a.scheme.eps)?;
    let reference = a.reference.as_deref().unwrap_or(&a.input);
    let v = if reference == a.input {
        f.clone()
    } else {
        load_positive(reference, a.scheme.eps)?
    };
    if v.shape() != f.shape() {
        return Err(Failure::Usage(format!(
            "reference is {}, input is {}",
            v.shape(),
            f.shape()
        )));
    }
    if v.num_channels() != 1 && v.num_channels() != f.num_channels() {
        return Err(Failure::Usage(format!(
            "reference has {} channels, input has {}",
            v.num_channels(),
            f.num_channels()
        )));
    }
    let drifts = v
        .channels()
        .map(|c| DriftField::canonical(v.shape(), c, a.scheme.h))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evolve(&f, &drifts, &cfg)?;
    save(&report.output, &a.out)?;

    if a.diagnostics {
        let path = sibling(&a.out, "diagnostics.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["channel", "step", "mean", "min"])
            .map_err(runtime)?;
        for (c, ch) in report.channels.iter().enumerate() {
            for r in &ch.history {
                w.write_record([
                    c.to_string(),
                    r.step.to_string(),
                    format!("{:e}", r.mean),
                    format!("{:e}", r.min),
                ])
                .map_err(runtime)?;
            }
        }
        w.flush().map_err(runtime)?;
    }

    println!(
        "{}: {} steps, factor {:.3} s, steps {:.3} s",
        cfg.scheme,
        report.steps,
        report.factor_time.as_secs_f64(),
        report.step_time.as_secs_f64()
    );
    for (c, ch) in report.channels.iter().enumerate() {
        println!(
            "channel {c}: mean {:.12} -> {:.12} (drift {:.2e}), min {:.3e}",
            ch.initial_mean, ch.final_mean, ch.max_mean_drift, ch.min_value
        );
    }
    Ok(())
}

fn parse_study_scheme(s: &str) -> Outcome<StudyScheme> {
    let (name, theta) = match s.split_once(':') {
        Some((n, t)) => (
            n,
            t.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad θ in {s:?}")))?,
        ),
        None => (s, 0.5),
    };
    let scheme: Scheme = name.trim().parse()?;
    Ok(StudyScheme::new(scheme, theta))
}

fn synthetic_pair(shape: GridShape, seed: Option<u64>) -> (Vec<f64>, Vec<f64>) {
    match seed {
        Some(seed) => (vec![0.5; shape.len()], random_field(shape, seed, 0.2, 0.8)),
        None => benchmark_pair(shape),
    }
}

fn check_taus(taus: &[f64]) -> Outcome {
    if taus.is_empty() || taus.iter().any(|&t| !t.is_finite() || t <= 0.0) {
        return Err(Failure::Usage(format!(
            "step sizes must be positive, got {taus:?}"
        )));
    }
    Ok(())
}

fn study(a: &OrderStudyArgs) -> Outcome {
    check_taus(&a.taus)?;
    let schemes = a
        .schemes
        .iter()
        .map(|s| parse_study_scheme(s))
        .collect::<Outcome<Vec<_>>>()?;
    let shape = GridShape::from(a.grid);
    let (f, v) = synthetic_pair(shape, a.seed);
    let options = StudyOptions {
        h: a.h,
        ..StudyOptions::default()
    };
    let result = order_study(shape, &f, &v, &a.taus, a.t_final, &schemes, options)?;

    match &a.out_csv {
        Some(path) => {
            let mut w = create(path)?;
            result.write_csv(&mut w)?;
            w.flush().map_err(runtime)?;
            for s in &result.slopes {
                match s.slope {
                    Some(p) => println!("{}: slope {p:.3}", s.scheme.label()),
                    None => println!("{}: slope absent", s.scheme.label()),
                }
            }
        }
        None => result.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &a.plot_data {
        let mut w = create(path)?;
        result.write_plot_data(&mut w)?;
        w.flush().map_err(runtime)?;
    }
    for r in &result.rows {
        if let Err(e) = &r.rrmse {
            log::warn!("{} at τ = {}: {e}", r.scheme.label(), r.tau);
        }
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Outcome {
    check_taus(&a.taus)?;
    let methods = a
        .methods
        .iter()
        .map(|m| m.trim().parse::<BenchMethod>())
        .collect::<Result<Vec<_>, _>>()?;
    let (shape, f, v) = match &a.input {
        Some(path) => {
            let img = load_positive(path, a.eps)?;
            if img.num_channels() > 1 {
                log::warn!("benchmarking the first of {} channels", img.num_channels());
            }
            let v = img.channel(0)?.to_vec();
            (img.shape(), vec![0.5; v.len()], v)
        }
        None => {
            let shape = GridShape::from(a.grid);
            let (f, v) = benchmark_pair(shape);
            (shape, f, v)
        }
    };
    let reference = match a.reference {
        ReferenceArg::Auto if shape.len() <= DEFAULT_EXPM_CAP => BenchReference::DenseExpm {
            cap: DEFAULT_EXPM_CAP,
        },
        ReferenceArg::Auto | ReferenceArg::Steady => BenchReference::SteadyState,
        ReferenceArg::Expm => BenchReference::DenseExpm {
            cap: DEFAULT_EXPM_CAP,
        },
        ReferenceArg::None => BenchReference::None,
    };
    let options = BenchOptions {
        h: a.h,
        repeat: a.repeat as usize,
        reference,
        parallel: a.parallel,
    };
    let rows = bench_grid(shape, &f, &v, &a.taus, a.t_final, &methods, &options)?;
    match &a.out_csv {
        Some(path) => {
            let mut w = create(path)?;
            write_bench_csv(&rows, &mut w)?;
            w.flush().map_err(runtime)?;
        }
        None => write_bench_csv(&rows, io::stdout().lock())?,
    }
    for r in rows.iter().filter(|r| !r.succeeded()) {
        log::warn!(
            "{} at τ = {} failed: {}",
            method_label(&r.method),
            r.tau,
            r.error.as_deref().unwrap_or_default()
        );
    }
    if rows.iter().any(|r| r.succeeded()) {
        Ok(())
    } else {
        Err(Failure::Runtime("every benchmark cell failed".into()))
    }
}

fn shadow(a: &ShadowArgs) -> Outcome {
    let cfg = scheme_config(&a.scheme);
    cfg.validate()?;
    let f = load_positive(&a.input, a.scheme.eps)?;
    let mask = load_mask(&a.mask, a.dilate, f.shape()).map_err(|e| match e {
        Error::DimensionMismatch(_) => Failure::from(e),
        e => runtime(format!("{}: {e}", a.mask.display())),
    })?;
    let result = remove_shadow(&f, &mask, &cfg, a.scheme.h)?;
    save(&result.image, &a.out)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "scheme {} tau {} T {} theta {}",
        cfg.scheme, cfg.tau, cfg.t_final, cfg.theta
    );
    let _ = writeln!(text, "steps {}", result.report.steps);
    let _ = writeln!(text, "offset {:e}", f.offset());
    let _ = writeln!(text, "marked_pixels {}", mask.marked_count());
    let _ = writeln!(text, "masked_edges {}", result.masked_edges);
    for (c, ch) in result.report.channels.iter().enumerate() {
        let _ = writeln!(
            text,
            "channel {c} mean_in {:.15e} mean_out {:.15e} rel_drift {:.3e} min {:.6e}",
            ch.initial_mean,
            ch.final_mean,
            ((ch.final_mean - ch.initial_mean) / ch.initial_mean).abs(),
            ch.min_value
        );
    }
    let _ = writeln!(
        text,
        "factor_s {:.6} step_s {:.6}",
        result.report.factor_time.as_secs_f64(),
        result.report.step_time.as_secs_f64()
    );
    let path = sibling(&a.out, "txt");
    fs::write(&path, &text)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    print!("{text}");
    Ok(())
}
