//! End-to-end runs of the deformation engines on the benchmark geometries.

use num_complex::Complex64;

use minlab_core::convex::ConvexBody;
use minlab_core::deform::{
    completeness_step, diameter_boost, joint_step, properness_step, BoostConfig, BoundaryTarget,
    CompletenessConfig, JointConfig, PropernessConfig,
};
use minlab_core::domain::{make_multicycle, multicycle_less, Cycle};
use minlab_core::quad::QuadOpts;
use minlab_core::weierstrass::seeds;
use minlab_core::HoloMap;
use minlab_core::weierstrass::{Frame, WeierstrassData};

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn unit_disk() -> minlab_core::domain::MultiCycle {
    make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.0)]).unwrap()
}

#[test]
fn completeness_flat_disk_benchmark() {
    let w = seeds::flat_disk();
    let j = unit_disk();
    let (r, s, eps) = (0.1, 0.2, 0.01);
    let cfg = CompletenessConfig::default();
    let targets = vec![BoundaryTarget::from_immersion(&w, &j, 0, 256, 0.3, cfg.quad).unwrap()];
    let (jn, wn, cert) = completeness_step(&w, &j, &targets, r, s, eps, &cfg).unwrap();
    println!("{}", serde_json::to_string_pretty(&cert.to_json()).unwrap());
    assert!(cert.all_pass(), "certificate failed");
    // measured distance above s, boundary deviation below sqrt(4 s^2 + r^2) + eps
    let dist = cert.find("L3.c_intrinsic_distance").unwrap();
    assert!(dist.measured > s);
    let dev = cert.find("L3.d_boundary_deviation").unwrap();
    assert!(dev.measured < (4.0 * s * s + r * r).sqrt() + eps);
    // nesting holds
    let jeps = minlab_core::domain::parallel_multicycle(&j, eps, 1).unwrap();
    assert!(multicycle_less(&jeps, &jn) && multicycle_less(&jn, &j));
    // output data remains conformal
    let samples: Vec<Complex64> = (1..400)
        .map(|k| {
            let t = k as f64 / 400.0;
            Complex64::from_polar(0.95 * t.sqrt(), 2.399963 * k as f64)
        })
        .collect();
    assert!(wn.conformality_residual(&samples) < 1e-12);
}

#[test]
fn completeness_degenerate_s_zero() {
    let w = seeds::flat_disk();
    let j = unit_disk();
    let cfg = CompletenessConfig::default();
    let targets = vec![BoundaryTarget::from_immersion(&w, &j, 0, 128, 0.3, cfg.quad).unwrap()];
    let (jn, _, cert) = completeness_step(&w, &j, &targets, 0.1, 0.0, 0.01, &cfg).unwrap();
    assert!(cert.all_pass());
    assert_eq!(jn.cycle_count(), 1);
}

#[test]
fn completeness_rejects_bad_r() {
    // a deviating target curve: beta from a rotated immersion, r too small
    let w = seeds::flat_disk();
    let j = unit_disk();
    let cfg = CompletenessConfig::default();
    // target built from a vertically shifted immersion: deviation ~ 0.5
    let shifted = WeierstrassData::from_g_eta(
        HoloMap::zero(),
        HoloMap::constant(c64(4.0, 0.0)), // doubles the scale
        Frame::identity(),
        c64(0.0, 0.0),
    );
    let targets =
        vec![BoundaryTarget::from_immersion(&shifted, &j, 0, 128, 0.3, cfg.quad).unwrap()];
    let err = completeness_step(&w, &j, &targets, 0.05, 0.2, 0.01, &cfg);
    assert!(matches!(
        err,
        Err(minlab_core::error::DeformError::HypothesisViolated(_))
    ));
}

#[test]
fn boost_schedule_solver() {
    // c0 solved so the radius recursion stays below mu/2; harmonic rho sums
    let (c0, rlim) = minlab_core::deform::solve_radius_schedule(0.1, 10_000);
    assert!(c0 > 0.0);
    assert!(rlim < 0.05, "limit {rlim}");
}

#[test]
fn boost_flat_disk_small_target() {
    let w = seeds::flat_disk();
    let j = unit_disk();
    let mut cfg = BoostConfig::default();
    cfg.max_rounds = 3;
    cfg.distance_cap = 0.05;
    let out = diameter_boost(&w, &j, 10.0, 0.2, &cfg).unwrap();
    println!(
        "{}",
        serde_json::to_string_pretty(&out.cert.to_json()).unwrap()
    );
    assert!(!out.rounds.is_empty());
    // deviation bounded by mu
    let dev = out.cert.find("L4.c_deviation").unwrap();
    assert!(dev.pass, "deviation {} >= mu", dev.measured);
    // nesting
    assert!(out.cert.find("L4.a_nesting").unwrap().pass);
    // strictly increasing cumulative distance
    let mut acc = 0.0;
    for r in &out.rounds {
        assert!(r.measured_distance > 0.0);
        acc += r.measured_distance;
    }
    assert!(acc >= 0.05 * 0.999);
}

#[test]
fn properness_ball_pair_benchmark() {
    // flat disk of radius 1.5; collar between |z| = 1.1 and 1.5 maps to the
    // shell between B(0,1) and B(0,1.6)
    let w = seeds::flat_disk();
    let j0 = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.5)]).unwrap();
    let jp = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.1)]).unwrap();
    let e = ConvexBody::ball([0.0; 3], 1.0);
    let ep = ConvexBody::ball([0.0; 3], 1.6);
    let (b1, b2) = (0.1, 0.1);
    let cfg = PropernessConfig::default();
    let (jn, wn, cert) = properness_step(&w, &j0, &jp, &e, &ep, b1, b2, &cfg).unwrap();
    println!("{}", serde_json::to_string_pretty(&cert.to_json()).unwrap());
    assert!(cert.all_pass(), "certificate failed");
    assert!(multicycle_less(&jp, &jn) && multicycle_less(&jn, &j0));
    let samples: Vec<Complex64> = (1..300)
        .map(|k| {
            let t = k as f64 / 300.0;
            Complex64::from_polar(1.05 * t.sqrt(), 2.399963 * k as f64)
        })
        .filter(|z| jn.contains(*z))
        .collect();
    assert!(wn.conformality_residual(&samples) < 1e-12);
}

#[test]
fn properness_rejects_hypothesis_violation() {
    // collar image touching E: shrink the picture so the collar sits inside
    let w = seeds::flat_disk();
    let j0 = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 0.9)]).unwrap();
    let jp = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 0.5)]).unwrap();
    let e = ConvexBody::ball([0.0; 3], 1.0);
    let ep = ConvexBody::ball([0.0; 3], 1.6);
    let err = properness_step(&w, &j0, &jp, &e, &ep, 0.1, 0.1, &PropernessConfig::default());
    assert!(matches!(
        err,
        Err(minlab_core::error::DeformError::HypothesisViolated(_))
    ));
}

#[test]
fn joint_ball_pair() {
    let w = seeds::flat_disk();
    let j = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.0)]).unwrap();
    let e = ConvexBody::ball([0.0; 3], 1.0);
    let ep = ConvexBody::ball([0.0; 3], 1.5);
    let (a, eps, b) = (0.1, 0.2, 0.05);
    let mut cfg = JointConfig::default();
    cfg.boost.max_rounds = 3;
    cfg.boost.distance_cap = 0.05;
    let (jn, _wn, cert) = joint_step(&w, &j, &e, &ep, a, eps, b, &cfg).unwrap();
    println!("{}", serde_json::to_string_pretty(&cert.to_json()).unwrap());
    assert!(cert.all_pass(), "joint certificate failed");
    let jeps = minlab_core::domain::parallel_multicycle(&j, eps, 1).unwrap();
    assert!(multicycle_less(&jeps, &jn) && multicycle_less(&jn, &j));
}

#[test]
fn joint_rejects_shifted_body() {
    let w = seeds::flat_disk();
    let j = unit_disk();
    let e = ConvexBody::ball([3.0, 0.0, 0.0], 1.0); // 0 not in E
    let ep = ConvexBody::ball([3.0, 0.0, 0.0], 1.5);
    let err = joint_step(&w, &j, &e, &ep, 0.1, 0.2, 0.05, &JointConfig::default());
    assert!(matches!(
        err,
        Err(minlab_core::error::DeformError::HypothesisViolated(_))
    ));
}
