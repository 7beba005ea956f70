mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use osmosis::stepper::{forward_euler_bound, make_stepper, peaceman_rachford_bound};
use osmosis::validation::{fit_loglog_slope, gaussian_bump};
use osmosis::{
    dense_expm_apply, evolve, evolve_channel, Douglas, DriftField, Error, ForwardEuler, FullSolver,
    FullTheta, GridShape, Image, PeacemanRachford, Scheme, SchemeConfig, SplitOperator, Stepper,
};

fn step_once(stepper: &mut dyn Stepper, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    stepper.step(u, &mut out).unwrap();
    out
}

fn inv_times(m: DMatrix<f64>, x: DVector<f64>) -> DVector<f64> {
    m.lu().solve(&x).unwrap()
}

struct Dense {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    id: DMatrix<f64>,
}

impl Dense {
    fn new(op: &SplitOperator) -> Self {
        let n = op.len();
        Self {
            a1: op.a1.to_dense(),
            a2: op.a2.to_dense(),
            id: DMatrix::identity(n, n),
        }
    }

    fn pr(&self, tau: f64, u: &[f64]) -> DVector<f64> {
        let h = tau / 2.0;
        let z1 = (&self.id + &self.a1 * h) * DVector::from_column_slice(u);
        let y1 = inv_times(&self.id - &self.a2 * h, z1);
        let z2 = (&self.id + &self.a2 * h) * y1;
        inv_times(&self.id - &self.a1 * h, z2)
    }

    fn douglas(&self, tau: f64, theta: f64, u: &[f64]) -> DVector<f64> {
        let u = DVector::from_column_slice(u);
        let c = theta * tau;
        let y0 = &u + (&self.a1 + &self.a2) * &u * tau;
        let y1 = inv_times(&self.id - &self.a1 * c, y0 - &self.a1 * &u * c);
        inv_times(&self.id - &self.a2 * c, y1 - &self.a2 * &u * c)
    }

    fn theta_full(&self, tau: f64, theta: f64, u: &[f64]) -> DVector<f64> {
        let a = &self.a1 + &self.a2;
        let rhs = (&self.id + &a * ((1.0 - theta) * tau)) * DVector::from_column_slice(u);
        inv_times(&self.id - a * (theta * tau), rhs)
    }
}

fn fixture(seed: u64) -> (GridShape, SplitOperator, Vec<f64>) {
    let shape = GridShape::new(5 + seed as usize % 3, 4 + seed as usize % 2);
    let op = canonical_op(shape, &positive(shape, seed));
    (shape, op, positive(shape, seed + 1000))
}

#[test]
fn steppers_match_dense_compositions() {
    for seed in 0..6 {
        let (_, op, u) = fixture(seed);
        let d = Dense::new(&op);
        for tau in [0.3, 4.0, 100.0] {
            let got = step_once(&mut PeacemanRachford::new(&op, tau).unwrap(), &u);
            assert!(
                max_abs_diff(&got, d.pr(tau, &u).as_slice()) < 1e-12,
                "pr τ={tau}"
            );
            for theta in [0.0, 0.5, 1.0] {
                if theta == 0.0 && tau > 0.3 {
                    continue;
                }
                let got = step_once(&mut Douglas::new(&op, tau, theta).unwrap(), &u);
                assert!(max_abs_diff(&got, d.douglas(tau, theta, &u).as_slice()) < 1e-12);
                for solver in [
                    FullSolver::BandedLu,
                    FullSolver::Krylov {
                        tol: 1e-13,
                        maxiter: 100_000,
                    },
                ] {
                    let got = step_once(&mut FullTheta::new(&op, tau, theta, solver).unwrap(), &u);
                    assert!(
                        max_abs_diff(&got, d.theta_full(tau, theta, &u).as_slice()) < 1e-9,
                        "θ-full τ={tau} θ={theta} {solver:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn reference_is_a_fixed_point_of_every_step() {
    let shape = GridShape::new(9, 7);
    let v = positive(shape, 3);
    let op = canonical_op(shape, &v);
    let fe_tau = 0.9 * forward_euler_bound(&op);
    let mut steppers: Vec<Box<dyn Stepper>> = vec![
        Box::new(ForwardEuler::new(&op, fe_tau).unwrap()),
        Box::new(PeacemanRachford::new(&op, 10.0).unwrap()),
        Box::new(Douglas::new(&op, 10.0, 0.5).unwrap()),
        Box::new(Douglas::new(&op, 10.0, 1.0).unwrap()),
    ];
    for s in steppers.iter_mut() {
        let out = step_once(s.as_mut(), &v);
        assert!(max_abs_diff(&out, &v) <= 1e-11 * max_abs(&v));
    }
}

#[test]
fn one_step_run_equals_single_step() {
    let (_, op, u) = fixture(2);
    for scheme in [
        Scheme::PeacemanRachford,
        Scheme::Douglas,
        Scheme::BackwardEuler,
    ] {
        let cfg = SchemeConfig::new(scheme, 2.0, 2.0).with_solver(FullSolver::BandedLu);
        let rep = evolve_channel(&u, &op, &cfg, 0).unwrap();
        assert_eq!(rep.steps, 1);
        let mut s = make_stepper(&op, &cfg).unwrap();
        assert_eq!(rep.state, step_once(s.as_mut(), &u));
    }
}

#[test]
fn constant_image_without_drift_stays_constant() {
    let shape = GridShape::new(6, 4);
    let op = SplitOperator::assemble(&DriftField::zeros(shape, 1.0).unwrap());
    let f = vec![0.37; shape.len()];
    for scheme in [
        Scheme::PeacemanRachford,
        Scheme::Douglas,
        Scheme::BackwardEuler,
    ] {
        let rep = evolve_channel(&f, &op, &SchemeConfig::new(scheme, 5.0, 50.0), 0).unwrap();
        assert!(max_abs_diff(&rep.state, &f) < 1e-15);
    }
}

#[test]
fn backward_euler_error_halves_with_tau() {
    let shape = GridShape::new(4, 4);
    let v = positive(shape, 9);
    let f = positive(shape, 10);
    let op = canonical_op(shape, &v);
    let t = 1.0;
    let exact = dense_expm_apply(&op.to_dense(), &f, t, 16).unwrap();
    let err = |tau: f64| {
        let cfg =
            SchemeConfig::new(Scheme::BackwardEuler, tau, t).with_solver(FullSolver::BandedLu);
        let u = evolve_channel(&f, &op, &cfg, 0).unwrap().state;
        max_abs_diff(&u, &exact)
    };
    let ratio = err(0.1) / err(0.05);
    assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn douglas_local_error_orders() {
    // With h = 2 the spectrum of A shrinks fourfold and τ|λ| ≤ 0.4, which
    // puts every τ in the asymptotic range.
    let shape = GridShape::new(4, 4);
    let v = gaussian_bump(shape);
    let op = SplitOperator::assemble(&DriftField::canonical(shape, &v, 2.0).unwrap());
    let f = vec![0.5; shape.len()];
    let a = op.to_dense();
    for (theta, expected) in [(0.5, 3.0), (1.0, 2.0)] {
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&tau| {
                let exact = dense_expm_apply(&a, &f, tau, 16).unwrap();
                let got = step_once(&mut Douglas::new(&op, tau, theta).unwrap(), &f);
                (tau, max_abs_diff(&got, &exact))
            })
            .collect();
        let slope = fit_loglog_slope(&pts, 0.0).unwrap();
        assert!((slope - expected).abs() < 0.25, "θ={theta}: slope {slope}");
    }
}

#[test]
fn douglas_negativity_is_reported_not_fatal() {
    let shape = GridShape::new(8, 8);
    let op = canonical_op(shape, &positive(shape, 5));
    let mut f = vec![0.0; shape.len()];
    f[shape.index(3, 3)] = 1.0;
    let cfg = SchemeConfig::new(Scheme::Douglas, 100.0, 1000.0).with_diagnostics(true);
    let rep = evolve_channel(&f, &op, &cfg, 0).unwrap();
    assert_eq!(rep.history.len(), 10);
    assert_eq!(rep.first_negative_step.is_some(), rep.min_value < 0.0);
}

#[test]
fn blow_up_is_caught_with_step_index() {
    let (_, op, u) = fixture(1);
    let cfg = SchemeConfig::new(Scheme::Douglas, 100.0, 100_000.0).with_theta(0.0);
    match evolve_channel(&u, &op, &cfg, 2) {
        Err(Error::NonFinite { channel: 2, step }) => assert!(step > 1),
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn color_channels_evolve_independently() {
    let shape = GridShape::new(7, 5);
    let chans: Vec<Vec<f64>> = (0..3).map(|c| positive(shape, 40 + c)).collect();
    let img = Image::new(shape, chans.clone()).unwrap();
    let drifts: Vec<DriftField> = chans
        .iter()
        .map(|c| DriftField::canonical(shape, &positive(shape, c.len() as u64 + 7), 1.0).unwrap())
        .collect();
    let cfg = SchemeConfig::new(Scheme::PeacemanRachford, 1.0, 5.0);
    let rep = evolve(&img, &drifts, &cfg).unwrap();
    for c in 0..3 {
        let op = SplitOperator::assemble(&drifts[c]);
        let single = evolve_channel(&chans[c], &op, &cfg, c).unwrap();
        assert_eq!(rep.output.channel(c).unwrap(), single.state.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_scheme_conserves_the_mean(
        seed in any::<u64>(),
        tau in prop::sample::select(vec![0.1, 1.0, 10.0, 100.0]),
        scheme_idx in 0usize..5,
    ) {
        let shape = GridShape::new(3 + (seed % 6) as usize, 2 + (seed % 5) as usize);
        let op = canonical_op(shape, &positive(shape, seed));
        let f = positive(shape, seed.wrapping_add(1));
        let cfg = match scheme_idx {
            0 => SchemeConfig::new(Scheme::PeacemanRachford, tau, 20.0 * tau),
            1 => SchemeConfig::new(Scheme::Douglas, tau, 20.0 * tau).with_theta(0.5),
            2 => SchemeConfig::new(Scheme::Douglas, tau, 20.0 * tau).with_theta(1.0),
            3 => SchemeConfig::new(Scheme::BackwardEuler, tau, 20.0 * tau).with_solver(FullSolver::BandedLu),
            _ => {
                let t = 0.9 * forward_euler_bound(&op);
                SchemeConfig::new(Scheme::ForwardEuler, t, 20.0 * t)
            }
        };
        let rep = evolve_channel(&f, &op, &cfg.clone().with_diagnostics(true), 0).unwrap();
        // At τ = 100 each stage rounds terms of size τ·|Au|, and Douglas at
        // θ = 1/2 keeps |Au| large by not damping stiff modes, so the floor
        // there is O(steps·eps·τ·max|a_ii|) rather than a fixed 1e-12.
        let tol = if cfg.tau <= 10.0 {
            1e-12
        } else {
            let steps = cfg.steps() as f64;
            (4.0 * steps * f64::EPSILON * cfg.tau * op.max_abs_diag()).max(1e-12)
        };
        prop_assert!(rep.max_mean_drift <= tol, "{}: {:e} > {:e}", cfg.scheme, rep.max_mean_drift, tol);
    }

    #[test]
    fn pr_and_fe_keep_non_negative_inputs_non_negative(seed in any::<u64>(), frac in 0.01f64..0.999) {
        let shape = GridShape::new(2 + (seed % 9) as usize, 2 + (seed % 7) as usize);
        let op = canonical_op(shape, &positive(shape, seed));
        let f: Vec<f64> = positive(shape, seed ^ 0xabc).iter().map(|&x| if x < 0.4 { 0.0 } else { x }).collect();
        for (scheme, bound) in [
            (Scheme::PeacemanRachford, peaceman_rachford_bound(&op)),
            (Scheme::ForwardEuler, forward_euler_bound(&op)),
        ] {
            let tau = frac * bound;
            let rep = evolve_channel(&f, &op, &SchemeConfig::new(scheme, tau, 10.0 * tau), 0).unwrap();
            prop_assert!(rep.first_negative_step.is_none(), "{scheme}: min {:e}", rep.min_value);
        }
    }
}
