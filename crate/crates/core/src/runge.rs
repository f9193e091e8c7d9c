//! Runge-type zero-free parameter functions and period closure.
//!
//! `runge_function` builds H = exp(u) with u a rational function whose poles
//! sit in a prescribed site list, least-squares fitted so H is close to t on
//! one compact and close to 1 on another; zero-freeness is structural.
//!
//! `PeriodProblem` carries a parameter family Theta -> h^Theta with
//! h^0 = 1; `close_periods` continues the implicit branch Lambda(lambda0)
//! keeping the real periods of the first two Weierstrass components at zero,
//! with a finite-difference Jacobian and Newton correction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::domain::Cycle;
use crate::error::RungeError;
use crate::holo::{HoloMap, Tape};
use crate::weierstrass::{Frame, WeierstrassData};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Compact sample sets, pole sites, and accuracy targets for a Runge fit.
#[derive(Clone, Debug)]
pub struct RungeRequest {
    /// Samples of the compact where H ~ t.
    pub k1: Vec<Complex64>,
    /// Samples of the compact where H ~ 1.
    pub k2: Vec<Complex64>,
    /// One pole site per connected complement component of K1 u K2.
    pub delta: Vec<Complex64>,
    pub t: f64,
    /// Accuracy: |H - t| < 1/m on K1, |H - 1| < 1/m on K2.
    pub m: f64,
}

#[derive(Clone, Debug)]
pub struct RungeConfig {
    /// Cap on the total number of partial-fraction basis terms.
    pub degree_cap: usize,
    /// Fit margin relative to 1/m on the request's own samples.
    pub margin: f64,
}

impl Default for RungeConfig {
    fn default() -> Self {
        RungeConfig {
            degree_cap: 200,
            margin: 0.7,
        }
    }
}

impl RungeRequest {
    fn validate(&self) -> Result<(), RungeError> {
        if self.k1.is_empty() || self.k2.is_empty() {
            return Err(RungeError::BadSampleSets);
        }
        let min_gap = self
            .k1
            .iter()
            .flat_map(|a| self.k2.iter().map(move |b| (a - b).norm()))
            .fold(f64::INFINITY, f64::min);
        if !(min_gap > 0.0) {
            return Err(RungeError::BadSampleSets);
        }
        for d in &self.delta {
            for p in self.k1.iter().chain(self.k2.iter()) {
                if (p - d).norm() < 1e-12 {
                    return Err(RungeError::BadSampleSets);
                }
            }
        }
        Ok(())
    }
}

/// A zero-free H = exp(u) with |H - t| < 1/m on K1 and |H - 1| < 1/m on K2.
pub fn runge_function(req: &RungeRequest, cfg: &RungeConfig) -> Result<HoloMap, RungeError> {
    req.validate()?;
    assert!(req.t > 0.0, "runge target t must be positive");
    if (req.t - 1.0).abs() * req.m < 1.0 {
        // u = 0 already meets both bounds
        return Ok(HoloMap::one());
    }
    if req.delta.is_empty() {
        return Err(RungeError::EmptyPoleSet);
    }
    let logt = req.t.ln();
    // fit tolerance for u: |e^u - c| ~ c |u - log c|
    let tol_u = cfg.margin / (req.m * req.t.max(1.0));

    let mut per_site = 4usize;
    loop {
        let basis = build_basis(&req.delta, per_site);
        if basis.len() > cfg.degree_cap {
            return Err(RungeError::ApproximationFailed(cfg.degree_cap));
        }
        let u = fit_log_target(req, logt, &basis)?;
        // verify on the request samples
        let tape = Tape::compile(&[u.clone()]);
        let mut scratch = tape.scratch();
        let mut ok = true;
        for &z in &req.k1 {
            let h = tape.eval(z, &mut scratch)[0].exp();
            if (h - Complex64::new(req.t, 0.0)).norm() >= cfg.margin / req.m {
                ok = false;
                break;
            }
        }
        if ok {
            for &z in &req.k2 {
                let h = tape.eval(z, &mut scratch)[0].exp();
                if (h - Complex64::new(1.0, 0.0)).norm() >= cfg.margin / req.m {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(HoloMap::exp(&u));
        }
        if tol_u < 0.0 {
            unreachable!();
        }
        per_site = per_site + (per_site / 2).max(2);
    }
}

/// Two-tolerance variant used by the deformation sweeps: H = exp(u) with
/// |H - t| < tol1 on K1 and |H - 1| < tol2 on K2 (weighted least squares).
/// Returns (H, u).
pub fn runge_two_tol(
    k1: &[Complex64],
    k2: &[Complex64],
    delta: &[Complex64],
    t: f64,
    tol1: f64,
    tol2: f64,
    cfg: &RungeConfig,
) -> Result<(HoloMap, HoloMap), RungeError> {
    assert!(t > 0.0 && tol1 > 0.0 && tol2 > 0.0);
    if k1.is_empty() || k2.is_empty() {
        return Err(RungeError::BadSampleSets);
    }
    if delta.is_empty() {
        return Err(RungeError::EmptyPoleSet);
    }
    let logt = t.ln();
    let mut per_site = 4usize;
    loop {
        let basis = build_basis(delta, per_site);
        if basis.len() > cfg.degree_cap {
            return Err(RungeError::ApproximationFailed(cfg.degree_cap));
        }
        // weight samples by the inverse of their u-tolerance
        let w1 = t.max(1.0) / tol1;
        let w2 = 1.0 / tol2;
        let samples: Vec<(Complex64, Complex64, f64)> = k1
            .iter()
            .map(|&z| (z, Complex64::new(logt, 0.0), w1))
            .chain(k2.iter().map(|&z| (z, Complex64::new(0.0, 0.0), w2)))
            .collect();
        let u = fit_weighted(&samples, &basis)?;
        let tape = Tape::compile(&[u.clone()]);
        let mut scratch = tape.scratch();
        let ok1 = k1.iter().all(|&z| {
            (tape.eval(z, &mut scratch)[0].exp() - Complex64::new(t, 0.0)).norm() < tol1
        });
        let ok2 = ok1
            && k2.iter().all(|&z| {
                (tape.eval(z, &mut scratch)[0].exp() - Complex64::new(1.0, 0.0)).norm() < tol2
            });
        if ok2 {
            return Ok((HoloMap::exp(&u), u));
        }
        per_site = per_site + (per_site / 2).max(2);
    }
}

/// One tolerance group of a multi-target fit: sample points, the common
/// target value for u = log H there, and the absolute tolerance on u.
pub struct FitGroup {
    pub points: Vec<Complex64>,
    pub target: f64,
    pub tol: f64,
}

/// Weighted least-squares fit of u = sum c_j b_j over an explicit basis with
/// per-group tolerances, solved through column-scaled complex normal
/// equations with a small ridge. Returns None when some group misses its
/// tolerance.
pub fn fit_groups(groups: &[FitGroup], basis: &[HoloMap]) -> Option<HoloMap> {
    let m = basis.len();
    if m == 0 {
        return None;
    }
    let tape = Tape::compile(basis);
    let mut scratch = tape.scratch();
    let mut rows: Vec<(Vec<Complex64>, f64, f64)> = Vec::new();
    for g in groups {
        for &z in &g.points {
            rows.push((tape.eval(z, &mut scratch), g.target, 1.0 / g.tol));
        }
    }
    let n = rows.len();
    if n < m {
        return None;
    }
    let scales: Vec<f64> = (0..m)
        .map(|j| {
            rows.iter()
                .map(|(v, _, _)| v[j].norm())
                .fold(0.0, f64::max)
                .max(1e-300)
        })
        .collect();
    // weighted complex least squares; QR keeps the conditioning of A itself,
    // which the comb-shaped targets push to ~1e8
    let mut a = DMatrix::<Complex64>::zeros(n, m);
    let mut b = DVector::<Complex64>::zeros(n);
    for (i, (vals, target, w)) in rows.iter().enumerate() {
        for j in 0..m {
            a[(i, j)] = vals[j] / scales[j] * *w;
        }
        b[i] = Complex64::new(target * w, 0.0);
    }
    let qr = a.qr();
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let c = r.solve_upper_triangular(&b.rows(0, m).into_owned())?;
    let mut terms = Vec::with_capacity(m);
    for j in 0..m {
        let coeff = c[j] / scales[j];
        if coeff.norm() > 0.0 && coeff.is_finite() {
            terms.push(basis[j].scale(coeff));
        }
    }
    let u = if terms.is_empty() {
        HoloMap::zero()
    } else {
        HoloMap::sum(terms)
    };
    // verification per group
    let utape = Tape::compile(&[u.clone()]);
    let mut us = utape.scratch();
    let trace = std::env::var("MINLAB_TRACE").is_ok();
    let mut ok = true;
    for (gi, g) in groups.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for &z in &g.points {
            let v = utape.eval(z, &mut us)[0];
            worst = worst.max((v - Complex64::new(g.target, 0.0)).norm());
        }
        if worst > g.tol {
            ok = false;
            if trace {
                eprintln!(
                    "    fit group {gi}: worst {worst:.3e} > tol {:.3e} (target {:.2}, {} pts, {} basis)",
                    g.tol, g.target, g.points.len(), m
                );
            } else {
                return None;
            }
        }
    }
    if ok { Some(u) } else { None }
}

fn fit_weighted(
    samples: &[(Complex64, Complex64, f64)],
    basis: &[HoloMap],
) -> Result<HoloMap, RungeError> {
    let n = samples.len();
    let m = basis.len();
    let tape = Tape::compile(basis);
    let mut scratch = tape.scratch();
    let mut cols: Vec<Vec<Complex64>> = vec![Vec::with_capacity(n); m];
    for &(z, _, _) in samples {
        let vals = tape.eval(z, &mut scratch);
        for (j, v) in vals.into_iter().enumerate() {
            cols[j].push(v);
        }
    }
    let scales: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300))
        .collect();
    let mut a = DMatrix::zeros(2 * n, 2 * m);
    let mut b = DVector::zeros(2 * n);
    for (i, &(_, target, wt)) in samples.iter().enumerate() {
        b[2 * i] = wt * target.re;
        b[2 * i + 1] = wt * target.im;
        for j in 0..m {
            let v = cols[j][i] / scales[j] * wt;
            a[(2 * i, 2 * j)] = v.re;
            a[(2 * i, 2 * j + 1)] = -v.im;
            a[(2 * i + 1, 2 * j)] = v.im;
            a[(2 * i + 1, 2 * j + 1)] = v.re;
        }
    }
    let svd = a.svd(true, true);
    let c = svd
        .solve(&b, 1e-12)
        .map_err(|_| RungeError::ApproximationFailed(m))?;
    let mut terms = Vec::with_capacity(m);
    for j in 0..m {
        let coeff = Complex64::new(c[2 * j], c[2 * j + 1]) / scales[j];
        if coeff.norm() > 0.0 {
            terms.push(basis[j].scale(coeff));
        }
    }
    if terms.is_empty() {
        return Ok(HoloMap::zero());
    }
    Ok(HoloMap::sum(terms))
}

fn build_basis(delta: &[Complex64], per_site: usize) -> Vec<HoloMap> {
    let mut basis = Vec::new();
    for &d in delta {
        for k in 1..=per_site {
            basis.push(HoloMap::pole_term(Complex64::new(1.0, 0.0), d, k as u32));
        }
    }
    basis
}

/// Least-squares fit of u = sum c_j b_j to (logt on K1, 0 on K2) with
/// complex coefficients, column-scaled for conditioning.
fn fit_log_target(
    req: &RungeRequest,
    logt: f64,
    basis: &[HoloMap],
) -> Result<HoloMap, RungeError> {
    let samples: Vec<(Complex64, Complex64)> = req
        .k1
        .iter()
        .map(|&z| (z, Complex64::new(logt, 0.0)))
        .chain(req.k2.iter().map(|&z| (z, Complex64::new(0.0, 0.0))))
        .collect();
    let n = samples.len();
    let m = basis.len();
    let tape = Tape::compile(basis);
    let mut scratch = tape.scratch();
    let mut cols: Vec<Vec<Complex64>> = vec![Vec::with_capacity(n); m];
    for &(z, _) in &samples {
        let vals = tape.eval(z, &mut scratch);
        for (j, v) in vals.into_iter().enumerate() {
            cols[j].push(v);
        }
    }
    let scales: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300))
        .collect();
    // real stacked system: rows 2n, unknowns 2m (re/im of each coefficient)
    let mut a = DMatrix::zeros(2 * n, 2 * m);
    let mut b = DVector::zeros(2 * n);
    for (i, &(_, target)) in samples.iter().enumerate() {
        b[2 * i] = target.re;
        b[2 * i + 1] = target.im;
        for j in 0..m {
            let v = cols[j][i] / scales[j];
            // (cr + i ci)(vr + i vi) = (cr vr - ci vi) + i (cr vi + ci vr)
            a[(2 * i, 2 * j)] = v.re;
            a[(2 * i, 2 * j + 1)] = -v.im;
            a[(2 * i + 1, 2 * j)] = v.im;
            a[(2 * i + 1, 2 * j + 1)] = v.re;
        }
    }
    let svd = a.svd(true, true);
    let c = svd
        .solve(&b, 1e-12)
        .map_err(|_| RungeError::ApproximationFailed(m))?;
    let mut terms = Vec::with_capacity(m);
    for j in 0..m {
        let coeff = Complex64::new(c[2 * j], c[2 * j + 1]) / scales[j];
        if coeff.norm() > 0.0 {
            terms.push(basis[j].scale(coeff));
        }
    }
    if terms.is_empty() {
        return Ok(HoloMap::zero());
    }
    Ok(HoloMap::sum(terms))
}

/// Parameter families Theta -> h^Theta with h^(0,...,0) = 1.
#[derive(Clone, Debug)]
pub enum ParamFamily {
    /// h = exp(lambda0 u0 + sum_j lambda_j phi_j); structurally zero-free.
    Exp { u0: HoloMap, phis: Vec<HoloMap> },
    /// h = lambda0 pole + exp(sum_j lambda_j phi_j); zero-freeness is
    /// certified by sampling away from the pole site.
    PoleExp { pole: HoloMap, phis: Vec<HoloMap> },
}

impl ParamFamily {
    pub fn phis(&self) -> &[HoloMap] {
        match self {
            ParamFamily::Exp { phis, .. } | ParamFamily::PoleExp { phis, .. } => phis,
        }
    }

    pub fn build(&self, theta: &[f64]) -> HoloMap {
        match self {
            ParamFamily::Exp { u0, phis } => {
                let mut terms = vec![u0.scale(Complex64::new(theta[0], 0.0))];
                for (j, p) in phis.iter().enumerate() {
                    terms.push(p.scale(Complex64::new(theta[j + 1], 0.0)));
                }
                HoloMap::exp(&HoloMap::sum(terms))
            }
            ParamFamily::PoleExp { pole, phis } => {
                let mut terms = Vec::with_capacity(phis.len());
                for (j, p) in phis.iter().enumerate() {
                    terms.push(p.scale(Complex64::new(theta[j + 1], 0.0)));
                }
                let e = if terms.is_empty() {
                    HoloMap::one()
                } else {
                    HoloMap::exp(&HoloMap::sum(terms))
                };
                HoloMap::sum(vec![pole.scale(Complex64::new(theta[0], 0.0)), e])
            }
        }
    }
}

/// A period-closure problem: base data, homology basis cycles, and the
/// Lopez-Ros parameter family applied in `frame`.
pub struct PeriodProblem {
    pub base: WeierstrassData,
    pub basis_cycles: Vec<Cycle>,
    pub family: ParamFamily,
    pub frame: Frame,
}

/// Precomputed quadrature tables: the Theta-dependence of the periods is a
/// pointwise function of tabulated base values, so Jacobians and Newton
/// sweeps cost no expression-tape walks.
pub struct PeriodTable {
    /// Per cycle: (weight*dz, eta(z), -(g^2 eta)(z), u0/pole value, phi_j values).
    cycles: Vec<Vec<QuadPoint>>,
    pole_family: bool,
    nphi: usize,
}

struct QuadPoint {
    wdz: Complex64,
    eta: Complex64,
    g2eta_neg: Complex64,
    drive: Complex64,
    phis: Vec<Complex64>,
}

const GL15_X: [f64; 15] = [
    -0.9879925180204854,
    -0.9372733924007059,
    -0.8482065834104272,
    -0.7244177313601700,
    -0.5709721726085388,
    -0.3941513470775634,
    -0.2011940939974345,
    0.0,
    0.2011940939974345,
    0.3941513470775634,
    0.5709721726085388,
    0.7244177313601700,
    0.8482065834104272,
    0.9372733924007059,
    0.9879925180204854,
];
const GL15_W: [f64; 15] = [
    0.0307532419961173,
    0.0703660474881081,
    0.1071592204671719,
    0.1395706779261543,
    0.1662692058169939,
    0.1861610000155622,
    0.1984314853271116,
    0.2025782419255613,
    0.1984314853271116,
    0.1861610000155622,
    0.1662692058169939,
    0.1395706779261543,
    0.1071592204671719,
    0.0703660474881081,
    0.0307532419961173,
];

impl PeriodProblem {
    pub fn rho(&self) -> usize {
        self.basis_cycles.len()
    }

    pub fn compile(&self) -> PeriodTable {
        let phi_s = self.base.phi_in_frame(&self.frame);
        let eta = HoloMap::sum(vec![phi_s[0].clone(), phi_s[1].scale(-I)]);
        let g2eta_neg = HoloMap::sum(vec![phi_s[0].clone(), phi_s[1].scale(I)]);
        let (drive, phis, pole_family) = match &self.family {
            ParamFamily::Exp { u0, phis } => (u0.clone(), phis.clone(), false),
            ParamFamily::PoleExp { pole, phis } => (pole.clone(), phis.clone(), true),
        };
        let mut maps = vec![eta, g2eta_neg, drive];
        maps.extend(phis.iter().cloned());
        let tape = Tape::compile(&maps);
        let mut scratch = tape.scratch();
        let mut cycles = Vec::with_capacity(self.basis_cycles.len());
        for cyc in &self.basis_cycles {
            let mut pts = Vec::new();
            let mut push = |z: Complex64, wdz: Complex64| {
                let vals = tape.eval(z, &mut scratch);
                pts.push(QuadPoint {
                    wdz,
                    eta: vals[0],
                    g2eta_neg: vals[1],
                    drive: vals[2],
                    phis: vals[3..].to_vec(),
                });
            };
            match &cyc.kind {
                crate::domain::CycleKind::Circle { c, r } => {
                    let center = Complex64::new(c[0], c[1]);
                    let arcs = 48;
                    for a in 0..arcs {
                        let t0 = 2.0 * std::f64::consts::PI * a as f64 / arcs as f64;
                        let t1 = 2.0 * std::f64::consts::PI * (a + 1) as f64 / arcs as f64;
                        let (mid, half) = ((t0 + t1) / 2.0, (t1 - t0) / 2.0);
                        for k in 0..15 {
                            let th = mid + half * GL15_X[k];
                            let w = Complex64::from_polar(*r, th);
                            push(center + w, I * w * (GL15_W[k] * half));
                        }
                    }
                }
                crate::domain::CycleKind::Polyline { vertices } => {
                    let n = vertices.len();
                    for i in 0..n {
                        let a = Complex64::new(vertices[i][0], vertices[i][1]);
                        let b =
                            Complex64::new(vertices[(i + 1) % n][0], vertices[(i + 1) % n][1]);
                        let (mid, half) = ((a + b) * 0.5, (b - a) * 0.5);
                        for k in 0..15 {
                            push(mid + half * GL15_X[k], half * GL15_W[k]);
                        }
                    }
                }
            }
            cycles.push(pts);
        }
        PeriodTable {
            cycles,
            pole_family,
            nphi: self.family.phis().len(),
        }
    }
}

impl PeriodTable {
    pub fn theta_len(&self) -> usize {
        self.nphi + 1
    }

    /// The period map P(Theta): real parts of the first-two-component
    /// periods over each basis cycle.
    pub fn period_map(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.theta_len());
        let rho = self.cycles.len();
        let mut out = vec![0.0; 2 * rho];
        for (ci, pts) in self.cycles.iter().enumerate() {
            let mut p1 = Complex64::new(0.0, 0.0);
            let mut p2 = Complex64::new(0.0, 0.0);
            for pt in pts {
                let mut expo = Complex64::new(0.0, 0.0);
                for (j, ph) in pt.phis.iter().enumerate() {
                    expo += ph * theta[j + 1];
                }
                let h = if self.pole_family {
                    pt.drive * theta[0] + expo.exp()
                } else {
                    (pt.drive * theta[0] + expo).exp()
                };
                // LR on the triple: Phi1 = (h eta + g2eta_neg / h)/2,
                //                   Phi2 = i (h eta - g2eta_neg / h)/2
                let he = h * pt.eta;
                let ge = pt.g2eta_neg / h;
                let f1 = (he + ge) * 0.5;
                let f2 = (he - ge) * 0.5 * I;
                p1 += f1 * pt.wdz;
                p2 += f2 * pt.wdz;
            }
            out[ci] = p1.re;
            out[rho + ci] = p2.re;
        }
        out
    }

    pub fn jacobian(&self, theta: &[f64], fd_step: f64) -> DMatrix<f64> {
        let rho2 = 2 * self.cycles.len();
        let n = self.nphi;
        let mut j = DMatrix::zeros(rho2, n);
        for col in 0..n {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            let h = fd_step * (1.0 + theta[col + 1].abs());
            tp[col + 1] += h;
            tm[col + 1] -= h;
            let pp = self.period_map(&tp);
            let pm = self.period_map(&tm);
            for r in 0..rho2 {
                j[(r, col)] = (pp[r] - pm[r]) / (2.0 * h);
            }
        }
        j
    }
}

#[derive(Clone, Debug)]
pub struct TraceRow {
    pub lambda0: f64,
    pub p_norm: f64,
    pub newton_iters: usize,
    pub jacobian_cond: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ContinuationTrace {
    pub rows: Vec<TraceRow>,
}

impl ContinuationTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda0,p_norm,newton_iters,jacobian_cond\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6e},{},{:.6e}\n",
                r.lambda0, r.p_norm, r.newton_iters, r.jacobian_cond
            ));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct CloseConfig {
    pub tol: f64,
    pub fd_step: f64,
    pub max_newton: usize,
    pub cond_cap: f64,
    pub min_step: f64,
}

impl Default for CloseConfig {
    fn default() -> Self {
        CloseConfig {
            tol: 1e-8,
            fd_step: 1e-6,
            max_newton: 12,
            cond_cap: 1e8,
            min_step: 1e-10,
        }
    }
}

/// Continue the period-closing branch Lambda(lambda0) from 0 to the target.
/// Returns Lambda with ||P(target, Lambda)|| < tol and the trace.
pub fn close_periods(
    prob: &PeriodProblem,
    lambda0_target: f64,
    cfg: &CloseConfig,
) -> Result<(Vec<f64>, ContinuationTrace), RungeError> {
    let mut trace = ContinuationTrace::default();
    let rho = prob.rho();
    if rho == 0 {
        return Ok((vec![], trace));
    }
    let table = prob.compile();
    let n = table.theta_len() - 1;
    if n < 2 * rho {
        return Err(RungeError::SingularJacobian(f64::INFINITY));
    }
    let mut theta = vec![0.0; table.theta_len()];
    // base point sanity: P(0) = 0 within quadrature tolerance
    let p0 = table.period_map(&theta);
    let p0n = norm(&p0);
    // condition of the Jacobian at the origin
    let j0 = table.jacobian(&theta, cfg.fd_step);
    let cond0 = cond(&j0);
    if !cond0.is_finite() || cond0 > cfg.cond_cap {
        return Err(RungeError::SingularJacobian(cond0));
    }
    trace.rows.push(TraceRow {
        lambda0: 0.0,
        p_norm: p0n,
        newton_iters: 0,
        jacobian_cond: cond0,
    });
    if lambda0_target == 0.0 {
        return Ok((vec![0.0; n], trace));
    }
    let mut step = lambda0_target / 8.0;
    let mut l0 = 0.0;
    while (l0 - lambda0_target).abs() > 0.0 {
        let next = if (lambda0_target - l0).abs() <= step.abs() {
            lambda0_target
        } else {
            l0 + step
        };
        let mut cand = theta.clone();
        cand[0] = next;
        let mut ok = false;
        let mut iters = 0;
        let mut condj = cond0;
        for it in 0..cfg.max_newton {
            iters = it + 1;
            let p = table.period_map(&cand);
            if norm(&p) < cfg.tol {
                ok = true;
                break;
            }
            let j = table.jacobian(&cand, cfg.fd_step);
            condj = cond(&j);
            if !condj.is_finite() || condj > cfg.cond_cap {
                break;
            }
            let svd = j.svd(true, true);
            let dp = DVector::from_vec(p);
            match svd.solve(&dp, 1e-13) {
                Ok(delta) => {
                    for k in 0..n {
                        cand[k + 1] -= delta[k];
                    }
                }
                Err(_) => break,
            }
        }
        if ok {
            theta = cand;
            l0 = next;
            trace.rows.push(TraceRow {
                lambda0: l0,
                p_norm: norm(&table.period_map(&theta)),
                newton_iters: iters,
                jacobian_cond: condj,
            });
        } else {
            step *= 0.5;
            if step.abs() < cfg.min_step * lambda0_target.abs().max(1.0) {
                return Err(RungeError::NoConvergence(l0));
            }
        }
    }
    Ok((theta[1..].to_vec(), trace))
}

/// Greedy selection of 2 rho parameter directions with numerically
/// independent period-derivative columns, from a candidate pool. Candidates
/// are pre-normalized so their sup over the supplied samples is `phi_cap`.
pub fn select_phis(
    base: &WeierstrassData,
    cycles: &[Cycle],
    frame: &Frame,
    candidates: Vec<HoloMap>,
    norm_samples: &[Complex64],
    phi_cap: f64,
) -> Result<Vec<HoloMap>, RungeError> {
    let rho = cycles.len();
    let want = 2 * rho;
    if want == 0 {
        return Ok(vec![]);
    }
    // normalize candidates on the samples
    let mut pool = Vec::new();
    for c in candidates {
        let tape = Tape::compile(&[c.clone()]);
        let mut scratch = tape.scratch();
        let mx = norm_samples
            .iter()
            .map(|&z| tape.eval(z, &mut scratch)[0].norm())
            .fold(0.0, f64::max);
        if mx.is_finite() && mx > 0.0 {
            pool.push(c.scale(Complex64::new(phi_cap / mx, 0.0)));
        }
    }
    if pool.len() < want {
        return Err(RungeError::SingularJacobian(f64::INFINITY));
    }
    // derivative column of each candidate at Theta = 0
    let prob = PeriodProblem {
        base: base.clone(),
        basis_cycles: cycles.to_vec(),
        family: ParamFamily::Exp {
            u0: HoloMap::zero(),
            phis: pool.clone(),
        },
        frame: frame.clone(),
    };
    let table = prob.compile();
    let theta0 = vec![0.0; table.theta_len()];
    let jac = table.jacobian(&theta0, 1e-6);
    // greedy column pivoting: pick columns that keep the smallest singular
    // value of the growing block as large as possible
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < want {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..pool.len() {
            if chosen.contains(&c) {
                continue;
            }
            let mut cols = chosen.clone();
            cols.push(c);
            let sub = jac.select_columns(cols.iter());
            let sv = sub.svd(false, false).singular_values;
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(_, b)| smin > b) {
                best = Some((c, smin));
            }
        }
        match best {
            Some((c, s)) if s > 1e-12 => chosen.push(c),
            _ => return Err(RungeError::SingularJacobian(f64::INFINITY)),
        }
    }
    Ok(chosen.into_iter().map(|c| pool[c].clone()).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let mx = sv.iter().cloned().fold(0.0, f64::max);
    let mn = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if mn <= 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weierstrass::seeds;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn disk_cloud(center: Complex64, r: f64, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                center + Complex64::from_polar(r * t.sqrt(), 2.399963229728653 * k as f64)
            })
            .collect()
    }

    #[test]
    fn trivial_target_returns_one() {
        let req = RungeRequest {
            k1: disk_cloud(c64(-2.0, 0.0), 0.5, 40),
            k2: disk_cloud(c64(2.0, 0.0), 0.5, 40),
            delta: vec![c64(0.0, 0.0)],
            t: 1.0,
            m: 100.0,
        };
        let h = runge_function(&req, &RungeConfig::default()).unwrap();
        assert!((h.eval(c64(-2.0, 0.0)) - c64(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn empty_pole_set_fails() {
        let req = RungeRequest {
            k1: disk_cloud(c64(-2.0, 0.0), 0.5, 40),
            k2: disk_cloud(c64(2.0, 0.0), 0.5, 40),
            delta: vec![],
            t: std::f64::consts::E,
            m: 100.0,
        };
        assert!(matches!(
            runge_function(&req, &RungeConfig::default()),
            Err(RungeError::EmptyPoleSet)
        ));
    }

    #[test]
    fn two_disk_configuration_meets_bounds_on_denser_grid() {
        let req = RungeRequest {
            k1: disk_cloud(c64(-2.0, 0.0), 0.5, 160),
            k2: disk_cloud(c64(2.0, 0.0), 0.5, 160),
            delta: vec![c64(0.0, 0.0)],
            t: std::f64::consts::E,
            m: 100.0,
        };
        let h = runge_function(&req, &RungeConfig::default()).unwrap();
        assert!(h.is_zero_free());
        let tape = Tape::compile(&[h]);
        let mut scratch = tape.scratch();
        // 4x denser verification grid
        let mut worst1: f64 = 0.0;
        for z in disk_cloud(c64(-2.0, 0.0), 0.5, 640) {
            worst1 = worst1.max((tape.eval(z, &mut scratch)[0] - c64(std::f64::consts::E, 0.0)).norm());
        }
        let mut worst2: f64 = 0.0;
        for z in disk_cloud(c64(2.0, 0.0), 0.5, 640) {
            worst2 = worst2.max((tape.eval(z, &mut scratch)[0] - c64(1.0, 0.0)).norm());
        }
        assert!(worst1 < 0.01, "max |H - e| on K1 = {worst1}");
        assert!(worst2 < 0.01, "max |H - 1| on K2 = {worst2}");
    }

    #[test]
    fn accuracy_monotone_in_m() {
        let mk = |m: f64| RungeRequest {
            k1: disk_cloud(c64(-2.0, 0.0), 0.5, 120),
            k2: disk_cloud(c64(2.0, 0.0), 0.5, 120),
            delta: vec![c64(0.0, 0.0)],
            t: 3.0,
            m,
        };
        let check = |h: &HoloMap, req: &RungeRequest| -> f64 {
            let tape = Tape::compile(&[h.clone()]);
            let mut scratch = tape.scratch();
            let mut worst: f64 = 0.0;
            for &z in &req.k1 {
                worst = worst.max((tape.eval(z, &mut scratch)[0] - c64(3.0, 0.0)).norm());
            }
            for &z in &req.k2 {
                worst = worst.max((tape.eval(z, &mut scratch)[0] - c64(1.0, 0.0)).norm());
            }
            worst
        };
        let r10 = mk(10.0);
        let r100 = mk(100.0);
        let h10 = runge_function(&r10, &RungeConfig::default()).unwrap();
        let h100 = runge_function(&r100, &RungeConfig::default()).unwrap();
        assert!(check(&h100, &r100) <= check(&h10, &r10) + 1e-12);
    }

    fn annulus_problem() -> PeriodProblem {
        // catenoid base on the annulus 0.5 < |z| < 1.1, one generator
        let base = seeds::catenoid();
        let cyc = Cycle::circle(c64(0.0, 0.0), 0.75);
        let phis = vec![HoloMap::z(), HoloMap::z().scale(I)];
        PeriodProblem {
            base,
            basis_cycles: vec![cyc],
            family: ParamFamily::Exp {
                u0: HoloMap::zero(),
                phis,
            },
            frame: Frame::identity(),
        }
    }

    #[test]
    fn period_map_vanishes_at_origin() {
        let prob = annulus_problem();
        let table = prob.compile();
        let p = table.period_map(&[0.0, 0.0, 0.0]);
        assert!(norm(&p) < 1e-10, "P(0) = {p:?}");
    }

    #[test]
    fn simply_connected_domain_has_empty_period_vector() {
        let prob = PeriodProblem {
            base: seeds::enneper(),
            basis_cycles: vec![],
            family: ParamFamily::Exp {
                u0: HoloMap::zero(),
                phis: vec![],
            },
            frame: Frame::identity(),
        };
        let (lambda, _) = close_periods(&prob, 0.7, &CloseConfig::default()).unwrap();
        assert!(lambda.is_empty());
    }

    #[test]
    fn fd_jacobian_consistent_with_quadrature_oracle() {
        // central difference of the tabulated period map against a direct
        // quadrature evaluation of the perturbed data
        let prob = annulus_problem();
        let table = prob.compile();
        let theta = [0.0, 0.1, 0.0];
        let jac = table.jacobian(&theta, 1e-6);
        // oracle column 0 via WeierstrassData periods at +-h
        let h = 1e-5;
        let eval = |l1: f64| -> Vec<f64> {
            let hmap = ParamFamily::Exp {
                u0: HoloMap::zero(),
                phis: vec![HoloMap::z(), HoloMap::z().scale(I)],
            }
            .build(&[0.0, l1, 0.0]);
            let w = prob.base.lopez_ros(&hmap, &[]).unwrap();
            let p = w
                .periods(&[Cycle::circle(c64(0.0, 0.0), 0.75)], crate::quad::QuadOpts::default())
                .unwrap();
            vec![p[0][0].re, p[0][1].re]
        };
        let pp = eval(0.1 + h);
        let pm = eval(0.1 - h);
        for r in 0..2 {
            let oracle = (pp[r] - pm[r]) / (2.0 * h);
            assert!(
                (jac[(r, 0)] - oracle).abs() < 1e-6 * (1.0 + oracle.abs()),
                "jac {} vs oracle {oracle}",
                jac[(r, 0)]
            );
        }
    }

    #[test]
    fn close_periods_on_pole_family() {
        // annulus with one generator; pole site inside the collar at 0.9
        let base = seeds::catenoid();
        let p = c64(0.9, 0.0);
        let theta_unit = c64(0.6, 0.8);
        let pole = HoloMap::pole_term(theta_unit, p, 1);
        let phis = vec![HoloMap::z(), HoloMap::z().scale(I)];
        let prob = PeriodProblem {
            base,
            basis_cycles: vec![Cycle::circle(c64(0.0, 0.0), 0.6)],
            family: ParamFamily::PoleExp { pole, phis },
            frame: Frame::identity(),
        };
        let (lambda, trace) = close_periods(&prob, 0.05, &CloseConfig::default()).unwrap();
        let table = prob.compile();
        let mut theta = vec![0.05];
        theta.extend_from_slice(&lambda);
        let residual = norm(&table.period_map(&theta));
        assert!(residual < 1e-8, "residual {residual}");
        assert!(trace.rows.len() >= 2);
        // local uniqueness: perturbing Lambda raises the residual
        let mut worst = f64::INFINITY;
        for k in 0..lambda.len() {
            let mut t2 = theta.clone();
            t2[k + 1] += 1e-3;
            worst = worst.min(norm(&table.period_map(&t2)));
        }
        assert!(worst > 1e-5, "perturbed residual {worst}");
        // trace serializes
        let csv = trace.to_csv();
        assert!(csv.starts_with("lambda0,"));
    }

    #[test]
    fn lambda0_zero_is_base_point() {
        let prob = annulus_problem();
        let (lambda, _) = close_periods(&prob, 0.0, &CloseConfig::default()).unwrap();
        assert!(norm(&lambda) < 1e-14);
    }

    #[test]
    fn phi_selection_finds_independent_columns() {
        let base = seeds::catenoid();
        let cycles = vec![Cycle::circle(c64(0.0, 0.0), 0.75)];
        let samples = disk_cloud(c64(0.75, 0.0), 0.3, 50);
        let candidates = vec![
            HoloMap::z(),
            HoloMap::z().scale(I),
            HoloMap::poly(vec![c64(0.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]),
            HoloMap::poly(vec![c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 1.0)]),
        ];
        let phis = select_phis(
            &base,
            &cycles,
            &Frame::identity(),
            candidates,
            &samples,
            1.0,
        )
        .unwrap();
        assert_eq!(phis.len(), 2);
    }
}
