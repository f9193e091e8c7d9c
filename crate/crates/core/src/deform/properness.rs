//! The properness step: stage one plants period-closed pole deformations at
//! points along a mid-collar cycle, pushing spikes of the boundary image
//! outward along the extended Gauss map of E past the outer body E'; stage
//! two stretches the remaining boundary arcs tangentially (Runge-parameter
//! Lopez-Ros sweeps in frames whose third axis is the tip normal, so the
//! stretch cannot push back toward E). The new multicycle is extracted where
//! the image first crosses the b2-shell of E'.
//!
//! Pole functions use order-two poles: the push depth of an order-one pole
//! scales like exp(-push/kappa) and underflows at any usable far-field
//! budget, while 1/(z-p)^2 reaches the same push at an algebraic depth.

use num_complex::Complex64;
use serde_json::json;

use crate::convex::{body_subset, max_depth_inside, parallel_body, remark_margin, ConvexBody};
use crate::domain::{multicycle_less, Cycle, MultiCycle};
use crate::error::DeformError;
use crate::holo::HoloMap;
use crate::labyrinth::CycleBand;
use crate::quad::{integrate_segment3, QuadOpts};
use crate::runge::{
    close_periods, runge_two_tol, select_phis, CloseConfig, ParamFamily, PeriodProblem,
    RungeConfig,
};
use crate::weierstrass::{Frame, WeierstrassData};

use super::certificate::DeformationCertificate;
use super::completeness::phi_candidates;
use super::eval::{domain_cloud, max_deviation, Evaluator};

use nalgebra::Vector3;

#[derive(Clone, Debug)]
pub struct PropernessConfig {
    pub points_per_cycle: usize,
    /// Push depth as a multiple of mu = max depth of E inside E'.
    pub push_factor: f64,
    pub retries: usize,
    pub quad: QuadOpts,
    pub phi_cap: f64,
    pub runge: RungeConfig,
    pub close: CloseConfig,
    /// Wedge half-angle kept around each approach ray.
    pub wedge_half_angle: f64,
    /// Smallest usable pole-approach depth relative to the domain diameter.
    pub min_feature_rel: f64,
    pub march_angles: usize,
}

impl Default for PropernessConfig {
    fn default() -> Self {
        PropernessConfig {
            points_per_cycle: 8,
            push_factor: 3.0,
            retries: 2,
            quad: QuadOpts::default(),
            phi_cap: 0.25,
            runge: RungeConfig::default(),
            close: CloseConfig::default(),
            wedge_half_angle: std::f64::consts::FRAC_PI_4,
            min_feature_rel: 3e-6,
            march_angles: 192,
        }
    }
}

struct PoleSite {
    p: Complex64,
    /// Approach-ray direction.
    phi_d: f64,
    theta: Complex64,
    delta: f64,
    rho_a: f64,
    rho_keep: f64,
    kappa: f64,
    frame: Frame,
    cycle: usize,
}

struct KeptDomain<'a> {
    j2: &'a MultiCycle,
    sites: &'a [PoleSite],
    wedge_half: f64,
}

impl KeptDomain<'_> {
    fn kept(&self, p: Complex64) -> bool {
        for s in self.sites {
            if (p - s.p).norm() < s.delta {
                let d = p - s.p;
                let rho = d.norm();
                if rho < s.rho_keep {
                    return false;
                }
                let mut ang = (d.im.atan2(d.re) - s.phi_d).rem_euclid(2.0 * std::f64::consts::PI);
                if ang > std::f64::consts::PI {
                    ang -= 2.0 * std::f64::consts::PI;
                }
                return ang.abs() <= self.wedge_half;
            }
        }
        self.j2.contains(p)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn properness_step(
    x: &WeierstrassData,
    j0: &MultiCycle,
    jp: &MultiCycle,
    e: &ConvexBody,
    ep: &ConvexBody,
    b1: f64,
    b2: f64,
    cfg: &PropernessConfig,
) -> Result<(MultiCycle, WeierstrassData, DeformationCertificate), DeformError> {
    let params = json!({
        "b1": b1, "b2": b2, "points_per_cycle": cfg.points_per_cycle,
        "push_factor": cfg.push_factor,
    });
    let mut cert = DeformationCertificate::new("properness", params);
    // body preconditions
    let origin = Vector3::zeros();
    if !e.contains(origin) {
        return Err(DeformError::HypothesisViolated("0 not in E".into()));
    }
    if !body_subset(e, ep, -1e-12) {
        return Err(DeformError::HypothesisViolated("E not inside E'".into()));
    }
    parallel_body(ep, -b2).map_err(DeformError::Convex)?;
    parallel_body(e, -2.0 * b2).map_err(DeformError::Convex)?;
    if !multicycle_less(jp, j0) {
        return Err(DeformError::HypothesisViolated("J' not < J0".into()));
    }
    if !jp.contains(x.basepoint()) {
        return Err(DeformError::HypothesisViolated(
            "basepoint outside M(J')".into(),
        ));
    }
    let mu = max_depth_inside(e, ep);
    cert.note(format!("depth margin mu = {mu:.4}"));

    // hypothesis (3): the collar image sits in E' minus closure(E)
    let collar = collar_cloud(j0, jp, 20);
    {
        let mut ev = Evaluator::new(x, j0, cfg.quad);
        let mut worst_in_e = f64::INFINITY;
        let mut worst_out_ep = f64::NEG_INFINITY;
        for &z in collar.iter().step_by(3) {
            let xv = ev.eval_routed(z)?;
            let v = Vector3::from(xv);
            worst_in_e = worst_in_e.min(e.signed_distance(v));
            worst_out_ep = worst_out_ep.max(ep.signed_distance(v));
        }
        if worst_in_e <= 0.0 || worst_out_ep >= 0.0 {
            return Err(DeformError::HypothesisViolated(format!(
                "collar image leaves E'-closure(E): min dE {worst_in_e:.4}, max dE' {worst_out_ep:.4}"
            )));
        }
    }

    let mut push_factor = cfg.push_factor;
    let mut last: Option<DeformationCertificate> = None;
    for attempt in 0..=cfg.retries {
        match attempt_run(x, j0, jp, e, ep, b1, b2, mu, push_factor, cfg, attempt) {
            Ok((jn, wn, mut c)) => {
                c.retries = attempt;
                for n in cert.notes.clone() {
                    c.note(n);
                }
                if c.all_pass() {
                    return Ok((jn, wn, c));
                }
                last = Some(c);
            }
            Err(DeformError::HypothesisViolated(m)) => {
                return Err(DeformError::HypothesisViolated(m))
            }
            Err(e2) => {
                let mut c = DeformationCertificate::new("properness", json!({}));
                c.note(format!("attempt {attempt} failed: {e2}"));
                last = Some(c);
            }
        }
        push_factor = (push_factor * 0.75).max(1.8);
    }
    Err(DeformError::RetriesExhausted(format!(
        "properness certificates failing: {:?}",
        last.map(|c| c
            .conclusions
            .iter()
            .filter(|x| !x.pass)
            .map(|x| x.name.clone())
            .collect::<Vec<_>>())
    )))
}

#[allow(clippy::too_many_arguments)]
fn attempt_run(
    x: &WeierstrassData,
    j0: &MultiCycle,
    jp: &MultiCycle,
    e: &ConvexBody,
    ep: &ConvexBody,
    b1: f64,
    b2: f64,
    mu: f64,
    push_factor: f64,
    cfg: &PropernessConfig,
    attempt: usize,
) -> Result<(MultiCycle, WeierstrassData, DeformationCertificate), DeformError> {
    let params = json!({
        "b1": b1, "b2": b2, "mu": mu, "push_factor": push_factor, "attempt": attempt,
    });
    let mut cert = DeformationCertificate::new("properness", params);
    let push = push_factor * mu;

    // nested working cycles: J2 at three quarters of the collar depth
    let charts: Vec<CycleBand> = (0..j0.cycle_count())
        .map(|ci| CycleBand::for_cycle(j0, ci))
        .collect::<Result<_, _>>()?;
    let depth_of_jp: Vec<f64> = (0..j0.cycle_count())
        .map(|ci| {
            jp.cycles[ci]
                .vertices_complex()
                .iter()
                .map(|&v| charts[ci].to_band(v).1)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let j2 = MultiCycle::new_inferred(
        (0..j0.cycle_count())
            .map(|ci| charts[ci].offset_cycle(0.75 * depth_of_jp[ci]))
            .collect(),
    )
    .map_err(DeformError::Domain)?;

    // frames: tangent fields on the sphere minus the cap the collar normals
    // omit
    let mut ev = Evaluator::new(x, j0, cfg.quad);
    let collar = collar_cloud(j0, jp, 14);
    let mut normals = Vec::new();
    for &z in collar.iter().step_by(2) {
        let xv = ev.eval_routed(z)?;
        let (u, _, _) = e.project(Vector3::from(xv));
        normals.push(u);
    }
    let cap_center = empty_cap_center(&normals);

    // pole sites
    let n_pts = cfg.points_per_cycle;
    let mut sites: Vec<PoleSite> = Vec::new();
    let diam = j0.diameter();
    for ci in 0..j0.cycle_count() {
        let chart = &charts[ci];
        let d2 = 0.75 * depth_of_jp[ci];
        let spacing = 2.0 * std::f64::consts::PI * chart.scale() / n_pts as f64;
        let delta = (spacing / 3.0).min(depth_of_jp[ci] / 5.0);
        for i in 0..n_pts {
            let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n_pts as f64;
            let p = chart.from_band(th, d2);
            let xv = ev.eval_routed(p)?;
            let (nrm, _, _) = e.project(Vector3::from(xv));
            let frame = site_frame(x, p, nrm, cap_center)?;
            // f = eta in the site frame
            let rows = frame.rows();
            let phiv = ev.phi(p);
            let comp = |row: [f64; 3]| {
                phiv[0] * row[0] + phiv[1] * row[1] + phiv[2] * row[2]
            };
            let f_s = comp(rows[0]) - Complex64::new(0.0, 1.0) * comp(rows[1]);
            if f_s.norm() < 1e-10 {
                return Err(DeformError::RetriesExhausted(
                    "eta vanishes at a pole site".into(),
                ));
            }
            // theta: near-unit alignment with a forced imaginary part
            let base = f_s.conj() / f_s.norm();
            let cand1 = base * Complex64::from_polar(1.0, 0.25);
            let cand2 = base * Complex64::from_polar(1.0, -0.25);
            let theta = if cand1.im.abs() >= cand2.im.abs() { cand1 } else { cand2 };
            // approach direction: sin(phi_d) Im(theta) < 0 with the pole
            // phase margin maximized
            let arg_t = theta.im.atan2(theta.re);
            let c1 = arg_t - std::f64::consts::FRAC_PI_2;
            let c2 = arg_t + std::f64::consts::FRAC_PI_2;
            let pick = |cand: f64| cand.sin() * theta.im < 0.0;
            let mut phi_d = if pick(c1) { c1 } else { c2 };
            if !pick(phi_d) {
                phi_d += 0.1;
            }
            // far-field budget -> kappa -> approach depth
            let r_sep = spacing.min(depth_of_jp[ci] / 4.0).min(delta * 4.0);
            let b_far = b1.min(b2) / (6.0 * (n_pts * j0.cycle_count()) as f64);
            let kappa = b_far * r_sep / 5.0;
            let rho_a = 1.0 / (2.0 * push / (kappa * f_s.norm()) + 1.0 / delta);
            let rho_keep = rho_a * 0.5;
            if rho_keep < cfg.min_feature_rel * diam {
                return Err(DeformError::RetriesExhausted(format!(
                    "approach depth {rho_keep:.3e} below the feature floor"
                )));
            }
            sites.push(PoleSite {
                p,
                phi_d,
                theta,
                delta,
                rho_a,
                rho_keep,
                kappa,
                frame,
                cycle: ci,
            });
        }
    }
    drop(ev);

    // period machinery
    let basis = properness_basis(j0, jp, &charts, &depth_of_jp);
    let rho = basis.len();
    let coarse = domain_cloud(j0, diam / 32.0, diam / 200.0);
    let phis = if rho > 0 {
        select_phis(
            x,
            &basis,
            &Frame::identity(),
            phi_candidates(j0),
            &coarse,
            cfg.phi_cap,
        )
        .map_err(DeformError::Runge)?
    } else {
        vec![]
    };

    // --- stage one: pole pushes ---
    let mut w_cur = x.clone();
    let field_cloud = stage_check_cloud(j0, jp, &sites);
    for s in &sites {
        let pole = HoloMap::pole_term(
            -s.theta * Complex64::from_polar(1.0, s.phi_d),
            s.p,
            2,
        );
        let mut kappa = s.kappa;
        let mut done = false;
        for _ in 0..3 {
            let h = if rho == 0 {
                let mut theta_vec = vec![kappa];
                let fam = ParamFamily::PoleExp {
                    pole: pole.clone(),
                    phis: vec![],
                };
                theta_vec.truncate(1);
                fam.build(&theta_vec)
            } else {
                let prob = PeriodProblem {
                    base: w_cur.clone(),
                    basis_cycles: basis.clone(),
                    family: ParamFamily::PoleExp {
                        pole: pole.clone(),
                        phis: phis.clone(),
                    },
                    frame: s.frame.clone(),
                };
                let (lambda, _) =
                    close_periods(&prob, kappa, &cfg.close).map_err(DeformError::Runge)?;
                let mut theta = vec![kappa];
                theta.extend_from_slice(&lambda);
                prob.family.build(&theta)
            };
            // zero check away from the excised zone
            let htape = crate::holo::Tape::compile(&[h.clone()]);
            let mut scratch = htape.scratch();
            let mut hmin = f64::INFINITY;
            for &z in &field_cloud {
                if (z - s.p).norm() > s.delta {
                    hmin = hmin.min(htape.eval(z, &mut scratch)[0].norm());
                }
            }
            // wedge interior stays clear of zeros by the phase margin
            for k in 0..40 {
                let rr = s.rho_keep + (s.delta - s.rho_keep) * (k as f64 + 0.5) / 40.0;
                for da in [-0.7, 0.0, 0.7] {
                    let z = s.p
                        + Complex64::from_polar(rr, s.phi_d + da * cfg.wedge_half_angle);
                    hmin = hmin.min(htape.eval(z, &mut scratch)[0].norm());
                }
            }
            if hmin > 0.05 {
                w_cur = w_cur
                    .lopez_ros_in_frame(&h, s.frame.clone(), &[])
                    .map_err(DeformError::Weierstrass)?;
                done = true;
                break;
            }
            kappa *= 0.5;
        }
        if !done {
            return Err(DeformError::RetriesExhausted(
                "pole stage could not stay zero-free".into(),
            ));
        }
    }

    // tips: evaluate the pushed immersion at the approach points
    let j_masked = masked_domain(j0, &sites)?;
    let mut tips: Vec<Vector3<f64>> = Vec::new();
    {
        let mut ev = Evaluator::new(&w_cur, &j_masked, cfg.quad);
        for s in &sites {
            let q = s.p + Complex64::from_polar(s.delta, s.phi_d);
            let a = s.p + Complex64::from_polar(s.rho_a, s.phi_d);
            let base = ev.eval_routed(q)?;
            let seg = integrate_chain(&mut ev, &[q, a])?;
            tips.push(Vector3::new(
                base[0] + seg[0],
                base[1] + seg[1],
                base[2] + seg[2],
            ));
        }
    }
    let mut tip_margin = f64::INFINITY;
    for t in &tips {
        tip_margin = tip_margin.min(e.signed_distance(*t));
    }
    cert.require_above("tips_outside_E_2mu", tip_margin, (2.0 * mu).min(0.62 * push));

    // --- stage two: tangential arc stretch ---
    let kept = KeptDomain {
        j2: &j2,
        sites: &sites,
        wedge_half: cfg.wedge_half_angle,
    };
    let diam_ep = 2.0 * ep.scale();
    let (k1_all, k2_all) = stage2_clouds(&kept, jp, &charts, &depth_of_jp, &sites);
    for (si, s) in sites.iter().enumerate() {
        let next = &sites[(si + 1) % sites.len()];
        if next.cycle != s.cycle && sites.len() > 1 {
            continue;
        }
        // arc cloud between this tip and the next
        let (th_a, _) = charts[s.cycle].to_band(s.p);
        let (th_b, _) = charts[s.cycle].to_band(next.p);
        let in_arc = |p: Complex64| -> bool {
            if (p - s.p).norm() < 3.0 * s.rho_a || (p - next.p).norm() < 3.0 * next.rho_a {
                return false;
            }
            let (th, _) = charts[s.cycle].to_band(p);
            let width = (th_b - th_a).rem_euclid(2.0 * std::f64::consts::PI);
            let off = (th - th_a).rem_euclid(2.0 * std::f64::consts::PI);
            off <= width.max(1e-9)
        };
        let k1: Vec<Complex64> = k1_all
            .iter()
            .filter(|&&p| in_arc(p))
            .cloned()
            .collect();
        if k1.len() < 4 {
            continue;
        }
        let k2: Vec<Complex64> = k2_all.iter().filter(|&&p| !in_arc(p)).cloned().collect();
        // frame: third axis = tip normal
        let (u, _, _) = e.project(tips[si]);
        let t_frame = Frame::from_e3([u[0], u[1], u[2]]).map_err(DeformError::Weierstrass)?;
        // stretch scale from the eta floor on the arc
        let rows = t_frame.rows();
        let mut tape = w_cur.compile_phi();
        let mut fmin = f64::INFINITY;
        for &z in k1.iter().step_by(2) {
            let p = tape.eval(z);
            let comp =
                |row: [f64; 3]| p[0] * row[0] + p[1] * row[1] + p[2] * row[2];
            let f_t = comp(rows[0]) - Complex64::new(0.0, 1.0) * comp(rows[1]);
            fmin = fmin.min(f_t.norm());
        }
        let xi = s.delta.min(charts[s.cycle].scale() / (3.0 * sites.len() as f64));
        if !(fmin > 1e-9) {
            continue;
        }
        let tau = (8.0 * (2.0 * (diam_ep + 1.0) + 1.0) / (xi * fmin)).clamp(16.0, 1e7);
        let b_far = b1.min(b2) / (6.0 * sites.len() as f64);
        let eps_off = (b_far / (2.0 * diam)).clamp(1e-11, 1e-2);
        let mut delta_sites = vec![s.p, next.p];
        for (k, c) in j0.cycles.iter().enumerate() {
            if Some(k) == j0.outer_index() {
                let (lo, hi) = j0.bbox();
                delta_sites.push(hi + (hi - lo));
            } else {
                delta_sites.push(c.centroid());
            }
        }
        let (h0, u_fit) = runge_two_tol(
            &k1,
            &k2,
            &delta_sites,
            tau,
            0.2 * tau,
            eps_off,
            &cfg.runge,
        )
        .map_err(DeformError::Runge)?;
        let h = if rho == 0 {
            h0
        } else {
            let prob = PeriodProblem {
                base: w_cur.clone(),
                basis_cycles: basis.clone(),
                family: ParamFamily::Exp {
                    u0: u_fit,
                    phis: phis.clone(),
                },
                frame: t_frame.clone(),
            };
            let (lambda, _) = close_periods(&prob, 1.0, &cfg.close).map_err(DeformError::Runge)?;
            let mut theta = vec![1.0];
            theta.extend_from_slice(&lambda);
            prob.family.build(&theta)
        };
        w_cur = w_cur
            .lopez_ros_in_frame(&h, t_frame, &[])
            .map_err(DeformError::Weierstrass)?;
    }

    // --- extraction: march rays until the image crosses the b2 shell of E'
    let march = march_extract(
        &w_cur, x, &j_masked, &kept, &charts, &depth_of_jp, ep, e, b2, cfg,
    )?;
    let j_new = MultiCycle::new_inferred(march.cycles).map_err(DeformError::Domain)?;
    cert.require_true(
        "L2.a_nesting",
        multicycle_less(jp, &j_new) && multicycle_less(&j_new, j0),
    );
    cert.require_below("L2.c_boundary_in_shell", march.worst_shell, 0.0);
    cert.require_above("L2.c_boundary_inside_Ep", -march.worst_outside_ep, 0.0);
    cert.require_above("L2.d_collar_outside_core", march.min_e_signed, -2.0 * b2);
    if march.clamped > 0 {
        cert.note(format!("{} rays clamped at the kept-domain edge", march.clamped));
    }

    // L2.b: interior deviation
    let interior = domain_cloud(jp, jp.diameter() / 14.0, jp.diameter() / 200.0);
    let dev = max_deviation(&w_cur, x, jp, &interior, cfg.quad)?;
    cert.require_below("L2.b_interior_deviation", dev, b1);
    // strictly convex extra: the Remark bound dominates the collar deviation
    if let Ok(m) = remark_margin(b2, e, ep) {
        cert.require_below("remark_k1_bound", march.max_dev_from_x, m);
    }
    cert.samples = march.samples;
    Ok((j_new, w_cur, cert))
}

struct MarchOutcome {
    cycles: Vec<Cycle>,
    /// max over boundary vertices of dE'(Y)+b2 (must be < 0: inside the shell
    /// means dE' in (-b2, 0)).
    worst_shell: f64,
    worst_outside_ep: f64,
    min_e_signed: f64,
    max_dev_from_x: f64,
    clamped: usize,
    samples: usize,
}

#[allow(clippy::too_many_arguments)]
fn march_extract(
    w: &WeierstrassData,
    x_base: &WeierstrassData,
    j_masked: &MultiCycle,
    kept: &KeptDomain,
    charts: &[CycleBand],
    depth_of_jp: &[f64],
    ep: &ConvexBody,
    e: &ConvexBody,
    b2: f64,
    cfg: &PropernessConfig,
) -> Result<MarchOutcome, DeformError> {
    let mut ev = Evaluator::new(w, j_masked, cfg.quad);
    let mut ev_base = Evaluator::new(x_base, j_masked, cfg.quad);
    let mut cycles = Vec::new();
    let mut worst_shell = f64::NEG_INFINITY;
    let mut worst_outside_ep = f64::NEG_INFINITY;
    let mut min_e_signed = f64::INFINITY;
    let mut max_dev = 0.0f64;
    let mut clamped = 0usize;
    let mut samples = 0usize;
    for (ci, chart) in charts.iter().enumerate() {
        let mut pts = Vec::with_capacity(cfg.march_angles);
        for ai in 0..cfg.march_angles {
            let th = 2.0 * std::f64::consts::PI * ai as f64 / cfg.march_angles as f64;
            let d_start = depth_of_jp[ci] * 0.95;
            let mut depth = d_start;
            let mut z = chart.from_band(th, depth);
            let mut y = ev.eval_routed(z)?;
            let mut xb = ev_base.eval_routed(z)?;
            let mut stop: Option<(Complex64, [f64; 3])> = None;
            let mut was_clamped = false;
            while depth > depth_of_jp[ci] * 0.02 {
                // adaptive step: fine near the pole disks
                let mut step = depth_of_jp[ci] / 24.0;
                for s in kept.sites {
                    step = step.min(((z - s.p).norm() - s.rho_keep).max(s.rho_a * 0.4) / 3.0);
                }
                let depth_next = (depth - step).max(depth_of_jp[ci] * 0.02);
                let z_next = chart.from_band(th, depth_next);
                if !kept.kept(z_next) {
                    was_clamped = true;
                    break;
                }
                let seg = integrate_chain(&mut ev, &[z, z_next])?;
                let segb = integrate_chain(&mut ev_base, &[z, z_next])?;
                let y_next = [y[0] + seg[0], y[1] + seg[1], y[2] + seg[2]];
                let xb_next = [xb[0] + segb[0], xb[1] + segb[1], xb[2] + segb[2]];
                samples += 1;
                let v = Vector3::from(y_next);
                let de = e.signed_distance(v);
                min_e_signed = min_e_signed.min(de);
                let devx = ((y_next[0] - xb_next[0]).powi(2)
                    + (y_next[1] - xb_next[1]).powi(2)
                    + (y_next[2] - xb_next[2]).powi(2))
                .sqrt();
                max_dev = max_dev.max(devx);
                let sigma = ep.signed_distance(v);
                if sigma >= -b2 * 0.5 {
                    stop = Some((z_next, y_next));
                    break;
                }
                depth = depth_next;
                z = z_next;
                y = y_next;
                xb = xb_next;
            }
            let (zv, yv) = stop.unwrap_or_else(|| {
                if was_clamped {
                    clamped += 1;
                }
                (z, y)
            });
            let v = Vector3::from(yv);
            worst_shell = worst_shell.max(ep.signed_distance(v) + b2);
            worst_outside_ep = worst_outside_ep.max(ep.signed_distance(v));
            pts.push(zv);
        }
        let cyc = Cycle::polyline(pts);
        cyc.validate().map_err(DeformError::Domain)?;
        cycles.push(cyc);
    }
    Ok(MarchOutcome {
        cycles,
        worst_shell,
        worst_outside_ep,
        min_e_signed,
        max_dev_from_x: max_dev,
        clamped,
        samples,
    })
}

fn integrate_chain(ev: &mut Evaluator, chain: &[Complex64]) -> Result<[f64; 3], DeformError> {
    let mut acc = [0.0f64; 3];
    for wseg in chain.windows(2) {
        let quad = ev.quad;
        let tape = &mut *ev;
        let mut f = |z: Complex64| tape.phi(z);
        let seg = integrate_segment3(&mut f, wseg[0], wseg[1], quad)
            .map_err(DeformError::Weierstrass)?;
        for k in 0..3 {
            acc[k] += seg[k].re;
        }
    }
    Ok(acc)
}

/// Collar sample cloud between J' and J0.
fn collar_cloud(j0: &MultiCycle, jp: &MultiCycle, per_cycle: usize) -> Vec<Complex64> {
    let mut out = Vec::new();
    for ci in 0..j0.cycle_count() {
        if let Ok(chart) = CycleBand::for_cycle(j0, ci) {
            let dmax = jp.cycles[ci]
                .vertices_complex()
                .iter()
                .map(|&v| chart.to_band(v).1)
                .fold(f64::INFINITY, f64::min);
            for k in 0..(per_cycle * 8) {
                let th = 2.0 * std::f64::consts::PI * k as f64 / (per_cycle * 8) as f64;
                for frac in [0.15, 0.45, 0.75] {
                    out.push(chart.from_band(th, dmax * frac));
                }
            }
        }
    }
    out
}

fn empty_cap_center(normals: &[Vector3<f64>]) -> Vector3<f64> {
    let mut best = (f64::NEG_INFINITY, Vector3::new(0.0, 0.0, 1.0));
    for i in 0..24 {
        let lat = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (i as f64 + 0.5) / 24.0;
        for jj in 0..48 {
            let lon = 2.0 * std::f64::consts::PI * jj as f64 / 48.0;
            let u = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
            let m = normals
                .iter()
                .map(|n| n.dot(&u).clamp(-1.0, 1.0).acos())
                .fold(f64::INFINITY, f64::min);
            if m > best.0 {
                best = (m, u);
            }
        }
    }
    best.1
}

/// Frame with e1 = N_E(X(p)) from the smooth tangent field pair on the
/// sphere minus the cap, with the in-plane angle chosen off the Gauss value.
fn site_frame(
    x: &WeierstrassData,
    p: Complex64,
    normal: Vector3<f64>,
    cap: Vector3<f64>,
) -> Result<Frame, DeformError> {
    // tangent fields away from the cap direction
    let v1 = cap.cross(&normal);
    let v1 = if v1.norm() < 1e-8 {
        // normal fell inside the omitted cap; perturb
        Vector3::new(normal[1], -normal[0], 0.0).normalize()
    } else {
        v1.normalize()
    };
    let v2 = normal.cross(&v1);
    let g = x.gauss_map(p);
    let gdir = Vector3::from(g.dir);
    // rho2 = component of the Gauss direction along v1 in the (v1, v2) plane
    let rho2 = gdir.dot(&v1);
    // choose a away from rho2 so e3 != G(p)
    let a: f64 = if rho2.abs() < 0.5 { 0.9 } else { 0.1 };
    let e2 = v1 * (1.0 - a * a).sqrt() - v2 * a;
    let e3 = v1 * a + v2 * (1.0 - a * a).sqrt();
    Frame::from_rows(
        [normal[0], normal[1], normal[2]],
        [e2[0], e2[1], e2[2]],
        [e3[0], e3[1], e3[2]],
    )
    .map_err(DeformError::Weierstrass)
}

fn properness_basis(
    j0: &MultiCycle,
    _jp: &MultiCycle,
    charts: &[CycleBand],
    depth_of_jp: &[f64],
) -> Vec<Cycle> {
    let mut out = Vec::new();
    for ci in 0..j0.cycle_count() {
        if Some(ci) == j0.outer_index() {
            continue;
        }
        // a loop around the hole, deeper than the pole sites
        out.push(charts[ci].offset_cycle(0.875 * depth_of_jp[ci]));
    }
    out
}

fn masked_domain(j0: &MultiCycle, sites: &[PoleSite]) -> Result<MultiCycle, DeformError> {
    let mut cycles = j0.cycles.clone();
    for s in sites {
        cycles.push(Cycle::circle(s.p, s.rho_keep * 0.9));
    }
    MultiCycle::new_inferred(cycles).map_err(DeformError::Domain)
}

fn stage_check_cloud(
    j0: &MultiCycle,
    jp: &MultiCycle,
    _sites: &[PoleSite],
) -> Vec<Complex64> {
    let mut cloud = domain_cloud(j0, j0.diameter() / 24.0, j0.diameter() / 300.0);
    cloud.extend(collar_cloud(j0, jp, 10));
    cloud
}

#[allow(clippy::type_complexity)]
fn stage2_clouds(
    kept: &KeptDomain,
    jp: &MultiCycle,
    charts: &[CycleBand],
    depth_of_jp: &[f64],
    sites: &[PoleSite],
) -> (Vec<Complex64>, Vec<Complex64>) {
    // K1: kept points hugging the kept-domain boundary (within xi/2 by
    // probing); K2: everything comfortably interior
    let mut k1 = Vec::new();
    let mut k2 = domain_cloud(jp, jp.diameter() / 18.0, jp.diameter() / 250.0);
    for (ci, chart) in charts.iter().enumerate() {
        let d2 = 0.75 * depth_of_jp[ci];
        let delta = sites
            .iter()
            .filter(|s| s.cycle == ci)
            .map(|s| s.delta)
            .fold(f64::INFINITY, f64::min);
        let probe = (delta / 2.0).max(d2 * 0.02);
        for k in 0..720 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 720.0;
            for off in [-probe * 0.35, probe * 0.35] {
                let p = chart.from_band(th, d2 + off);
                if kept.kept(p) {
                    k1.push(p);
                }
            }
            // wedge flanks
            for s in sites.iter().filter(|s| s.cycle == ci) {
                let (ts, _) = chart.to_band(s.p);
                let mut dth = (th - ts).abs();
                if dth > std::f64::consts::PI {
                    dth = 2.0 * std::f64::consts::PI - dth;
                }
                if dth * chart.scale() < s.delta * 1.5 {
                    for rr in [s.rho_a * 4.0, s.delta * 0.4, s.delta * 0.8] {
                        for da in [-0.8, 0.8] {
                            let z = s.p
                                + Complex64::from_polar(
                                    rr,
                                    s.phi_d + da * kept.wedge_half,
                                );
                            if kept.kept(z) {
                                k1.push(z);
                            }
                        }
                    }
                }
            }
        }
        // deep interior band samples for K2
        for k in 0..180 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 180.0;
            k2.push(chart.from_band(th, depth_of_jp[ci] * 0.9));
        }
    }
    (k1, k2)
}
