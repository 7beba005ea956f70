mod common;

use common::*;

use osmosis::validation::{
    bench_grid, benchmark_pair, order_study, write_bench_csv, BenchMethod, BenchOptions,
    BenchReference, StudyOptions, StudyScheme, BENCH_COLUMNS,
};
use osmosis::{evolve_channel, rrmse, FullSolver, GridShape, Image, Scheme};

fn final_states(
    shape: GridShape,
    methods: &[BenchMethod],
    krylov: Option<FullSolver>,
) -> Vec<(String, Image)> {
    let (f, v) = benchmark_pair(shape);
    let op = canonical_op(shape, &v);
    methods
        .iter()
        .map(|m| {
            let mut cfg = m.config(0.1, 5000.0);
            if let (Some(s), BenchMethod::KrylovFull { .. }) = (krylov, m) {
                cfg = cfg.with_solver(s);
            }
            let u = evolve_channel(&f, &op, &cfg, 0).unwrap().state;
            (format!("{m:?}"), Image::gray(shape, u).unwrap())
        })
        .collect()
}

fn worst_pair(states: &[(String, Image)]) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (na, a) in states {
        for (nb, b) in states {
            let e = rrmse(a, b).unwrap();
            if e > worst.0 {
                worst = (e, format!("{na} vs {nb}"));
            }
        }
    }
    worst
}

#[test]
fn direct_and_split_methods_agree_at_small_tau() {
    let methods: Vec<_> = BenchMethod::standard_set()
        .into_iter()
        .filter(|m| !matches!(m, BenchMethod::KrylovFull { .. }))
        .collect();
    let (e, pair) = worst_pair(&final_states(GridShape::new(16, 20), &methods, None));
    assert!(e < 1e-4, "{pair}: {e:e}");
}

// With tol 1e-7 relative to the right-hand side and a warm start, BiCGStab
// stops iterating once the state is close to steady, so it lags the others.
#[test]
fn krylov_baseline_agrees_once_tolerance_is_tightened() {
    let shape = GridShape::new(16, 20);
    let methods = BenchMethod::standard_set();
    let (loose, _) = worst_pair(&final_states(shape, &methods, None));
    assert!(loose < 1e-3, "{loose:e}");
    let tight = FullSolver::Krylov {
        tol: 1e-12,
        maxiter: 300_000,
    };
    let (e, pair) = worst_pair(&final_states(shape, &methods, Some(tight)));
    assert!(e < 1e-4, "{pair}: {e:e}");
}

#[test]
fn order_study_is_deterministic_and_shaped_like_the_table() {
    let shape = GridShape::new(8, 10);
    let (f, v) = benchmark_pair(shape);
    let schemes = [
        StudyScheme::new(Scheme::PeacemanRachford, 0.5),
        StudyScheme::new(Scheme::Douglas, 1.0),
    ];
    let run = || {
        order_study(
            shape,
            &f,
            &v,
            &[0.1, 1.0, 10.0],
            10.0,
            &schemes,
            StudyOptions::default(),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    let errs = |r: &osmosis::validation::OrderStudyResult| {
        r.rows
            .iter()
            .map(|x| x.rrmse.clone().unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(errs(&a), errs(&b));
    let mut buf = Vec::new();
    a.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scheme,theta,tau,steps,rrmse,wall_s");
    assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 1 + 6);
    assert_eq!(
        lines.iter().filter(|l| l.starts_with("# slope,")).count(),
        2
    );
}

#[test]
fn first_order_errors_grow_tenfold_per_decade() {
    let shape = GridShape::new(8, 10);
    let (f, v) = benchmark_pair(shape);
    let res = order_study(
        shape,
        &f,
        &v,
        &[0.005, 0.05, 0.5],
        10.0,
        &[StudyScheme::new(Scheme::Douglas, 1.0)],
        StudyOptions::default(),
    )
    .unwrap();
    let e: Vec<f64> = res.rows.iter().map(|r| r.rrmse.clone().unwrap()).collect();
    for w in e.windows(2) {
        let ratio = w[1] / w[0];
        assert!((7.0..13.0).contains(&ratio), "ratio {ratio} in {e:?}");
    }
}

#[test]
fn bench_grid_serial_and_parallel_agree() {
    let shape = GridShape::new(10, 9);
    let (f, v) = benchmark_pair(shape);
    let methods = BenchMethod::standard_set();
    let mut opts = BenchOptions {
        reference: BenchReference::DenseExpm { cap: 4096 },
        ..BenchOptions::default()
    };
    let serial = bench_grid(shape, &f, &v, &[0.1, 1.0], 4.0, &methods, &opts).unwrap();
    opts.parallel = true;
    let parallel = bench_grid(shape, &f, &v, &[0.1, 1.0], 4.0, &methods, &opts).unwrap();
    assert_eq!(serial.len(), 14);
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(a.method, b.method);
        assert_eq!(a.rrmse, b.rrmse);
        assert!(a.succeeded());
    }
    let mut buf = Vec::new();
    write_bench_csv(&serial, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        BENCH_COLUMNS
    );
    assert_eq!(rdr.records().count(), 14);
}

#[test]
fn steady_state_reference_in_bench() {
    let shape = GridShape::new(12, 10);
    let (f, v) = benchmark_pair(shape);
    let opts = BenchOptions {
        reference: BenchReference::SteadyState,
        ..BenchOptions::default()
    };
    let rows = bench_grid(
        shape,
        &f,
        &v,
        &[10.0],
        5000.0,
        &[
            BenchMethod::DouglasAdi { theta: 0.5 },
            BenchMethod::PeacemanRachfordAdi,
        ],
        &opts,
    )
    .unwrap();
    for r in rows {
        assert!(r.rrmse.unwrap() < 1e-3);
    }
}
