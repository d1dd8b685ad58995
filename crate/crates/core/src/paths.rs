//! Minimum-action paths and quasi-potential bounds.
//!
//! Actions use the geometric form `Ŝ = 2∫(|φ'||f| - φ'·f) dα` and drop the
//! noise prefactor, so a gradient system `f = -∇U` has quasi-potential
//! `4 (U(x) - U(a))`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::DecompositionResult;
use crate::poly::{CompiledField, PolyError, Polynomial, VectorField};
use crate::report::format_g;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("a path needs at least two states")]
    TooShort,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("times do not match states ({times} times for {states} states)")]
    TimesMismatch { times: usize, states: usize },
    #[error("Newton iteration diverged at {last:?} with |f| = {residual:e}")]
    Diverged { last: Vec<f64>, residual: f64 },
    #[error("singular Jacobian at {at:?}")]
    SingularJacobian { at: Vec<f64> },
    #[error(
        "reverse flow did not reach the fixed point within t = {t_max} \
         (distance {distance:e} at {last:?}); the endpoint may lie outside its basin"
    )]
    NotConverged { t_max: f64, distance: f64, last: Vec<f64> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("csv output: {0}")]
    Io(#[from] std::io::Error),
}

/// A discretized trajectory from `states[0]` to the last state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    states: Vec<Vec<f64>>,
    times: Option<Vec<f64>>,
}

impl Path {
    /// Repeated consecutive states are merged. A path whose states all
    /// coincide is kept as two copies of that state.
    pub fn new(states: Vec<Vec<f64>>, times: Option<Vec<f64>>) -> Result<Self, PathError> {
        if states.len() < 2 {
            return Err(PathError::TooShort);
        }
        let n = states[0].len();
        if let Some(bad) = states.iter().find(|s| s.len() != n) {
            return Err(PathError::DimensionMismatch { expected: n, found: bad.len() });
        }
        if let Some(t) = &times {
            if t.len() != states.len() {
                return Err(PathError::TimesMismatch { times: t.len(), states: states.len() });
            }
        }
        let mut keep = vec![true; states.len()];
        for i in 1..states.len() {
            keep[i] = states[i] != states[i - 1];
        }
        if keep.iter().filter(|&&k| k).count() < 2 {
            let last = states.len() - 1;
            return Ok(Self {
                times: times.map(|t| vec![t[0], t[last]]),
                states: vec![states[0].clone(), states[last].clone()],
            });
        }
        fn pick<T>(v: Vec<T>, keep: &[bool]) -> Vec<T> {
            v.into_iter().zip(keep).filter(|(_, &k)| k).map(|(s, _)| s).collect()
        }
        Ok(Self { states: pick(states, &keep), times: times.map(|t| pick(t, &keep)) })
    }

    /// The degenerate path sitting at `x`.
    pub fn stationary(x: &[f64]) -> Self {
        Self { states: vec![x.to_vec(), x.to_vec()], times: None }
    }

    pub fn straight(from: &[f64], to: &[f64], points: usize) -> Result<Self, PathError> {
        if from.len() != to.len() {
            return Err(PathError::DimensionMismatch { expected: from.len(), found: to.len() });
        }
        let m = points.max(2);
        let states = (0..m)
            .map(|k| {
                let s = k as f64 / (m - 1) as f64;
                from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect()
            })
            .collect();
        Self::new(states, None)
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn end(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn arc_length(&self) -> f64 {
        cumulative_length(&self.states).last().copied().unwrap_or(0.0)
    }

    /// `points` states equally spaced in arc length along the polyline.
    /// Times are dropped.
    pub fn resample(&self, points: usize) -> Path {
        let states = resample_states(&self.states, points.max(2));
        Path::new(states, None).unwrap_or_else(|_| Path::stationary(self.start()))
    }

    /// CSV with header `t,x1,...,xn` (time column only when times are known).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), PathError> {
        let n = self.dim();
        let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        if self.times.is_some() {
            header.insert(0, "t".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for (k, s) in self.states.iter().enumerate() {
            let mut row: Vec<String> = s.iter().map(|&v| format_g(v)).collect();
            if let Some(t) = &self.times {
                row.insert(0, format_g(t[k]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn cumulative_length(states: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(states.len());
    let mut total = 0.0;
    acc.push(0.0);
    for w in states.windows(2) {
        total += distance(&w[0], &w[1]);
        acc.push(total);
    }
    acc
}

fn resample_states(states: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let s = cumulative_length(states);
    let total = *s.last().unwrap();
    if total == 0.0 {
        return vec![states[0].clone(); m];
    }
    let mut out = Vec::with_capacity(m);
    let mut j = 0;
    for k in 0..m {
        if k == m - 1 {
            out.push(states.last().unwrap().clone());
            break;
        }
        let target = total * k as f64 / (m - 1) as f64;
        while j + 2 < s.len() && s[j + 1] < target {
            j += 1;
        }
        let seg = s[j + 1] - s[j];
        let w = if seg > 0.0 { ((target - s[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        out.push(states[j].iter().zip(&states[j + 1]).map(|(a, b)| a + w * (b - a)).collect());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    Stable,
    Saddle,
    Unstable,
    /// Some Jacobian eigenvalue has zero real part.
    NonHyperbolic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub x: Vec<f64>,
    pub kind: FixedPointKind,
    /// `|f(x)|`.
    pub residual: f64,
}

const NEWTON_STEPS: usize = 50;
const NEWTON_TOL: f64 = 1e-12;
const FIXED_POINT_TOL: f64 = 1e-9;

/// Newton's method from `guess`, then classification by the Jacobian spectrum.
pub fn refine_fixed_point(f: &VectorField, guess: &[f64]) -> Result<FixedPoint, PathError> {
    let n = f.nvars();
    if guess.len() != n {
        return Err(PathError::DimensionMismatch { expected: n, found: guess.len() });
    }
    let cf = f.compile();
    let mut x = guess.to_vec();
    let mut val = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    for _ in 0..NEWTON_STEPS {
        cf.eval_with_jacobian(&x, &mut val, &mut jac);
        let r = norm(&val);
        if !r.is_finite() {
            break;
        }
        if r < NEWTON_TOL {
            break;
        }
        let j = DMatrix::from_row_slice(n, n, &jac);
        let step = j
            .lu()
            .solve(&DVector::from_column_slice(&val))
            .ok_or_else(|| PathError::SingularJacobian { at: x.clone() })?;
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi -= si;
        }
    }
    cf.eval_with_jacobian(&x, &mut val, &mut jac);
    let residual = norm(&val);
    if !(residual < FIXED_POINT_TOL) || x.iter().any(|v| !v.is_finite()) {
        return Err(PathError::Diverged { last: x, residual });
    }
    let kind = classify(&DMatrix::from_row_slice(n, n, &jac));
    Ok(FixedPoint { x, kind, residual })
}

fn classify(jac: &DMatrix<f64>) -> FixedPointKind {
    let eig = jac.complex_eigenvalues();
    let scale = jac.norm().max(1.0);
    let tol = 1e-10 * scale;
    if eig.iter().any(|l| l.re.abs() <= tol) {
        FixedPointKind::NonHyperbolic
    } else if eig.iter().all(|l| l.re < 0.0) {
        FixedPointKind::Stable
    } else if eig.iter().all(|l| l.re > 0.0) {
        FixedPointKind::Unstable
    } else {
        FixedPointKind::Saddle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub step: f64,
    /// Arrival radius around `x_o`.
    pub radius: f64,
    pub t_max: f64,
    /// The flow also counts as arrived when it comes to rest (speed below
    /// `rest_speed`) within this distance of `x_o`. A numerically solved `U`
    /// has `∇U(x_o)` small but nonzero, which shifts the rest point of the
    /// reverse flow slightly away from `x_o`.
    pub capture_radius: f64,
    pub rest_speed: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { step: 1e-3, radius: 1e-3, t_max: 1e3, capture_radius: 1e-2, rest_speed: 1e-10 }
    }
}

fn rk4_step(g: &CompiledField, x: &[f64], h: f64, out: &mut [f64]) {
    let n = x.len();
    let k1 = g.evaluate(x);
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
    let k2 = g.evaluate(&tmp);
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
    let k3 = g.evaluate(&tmp);
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
    let k4 = g.evaluate(&tmp);
    for i in 0..n {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `ẋ = -(∇U + f_U)` from `x_e` into `x_o` and returns the
/// time-reversed trajectory, which follows `ẋ = ∇U + f_U` from `x_o` to `x_e`.
pub fn predict_map(
    u: &Polynomial,
    f_u: &VectorField,
    x_o: &FixedPoint,
    x_e: &[f64],
    cfg: &PredictConfig,
) -> Result<Path, PathError> {
    let n = u.nvars();
    for len in [f_u.nvars(), x_o.x.len(), x_e.len()] {
        if len != n {
            return Err(PathError::DimensionMismatch { expected: n, found: len });
        }
    }
    if !(cfg.step > 0.0 && cfg.radius > 0.0 && cfg.t_max > 0.0) {
        return Err(PathError::InvalidConfig("step, radius and t_max must be positive".into()));
    }
    let g = u.gradient().try_add(f_u)?.scale(-1.0).compile();
    let mut states = vec![x_e.to_vec()];
    let mut times = vec![0.0];
    let mut x = x_e.to_vec();
    let mut next = vec![0.0; n];
    let mut t = 0.0;
    loop {
        let d = distance(&x, &x_o.x);
        if d < cfg.radius {
            *states.last_mut().unwrap() = x_o.x.clone();
            if states.len() == 1 {
                states.push(x_o.x.clone());
                times.push(t);
            }
            break;
        }
        if t > cfg.t_max || !d.is_finite() {
            return Err(PathError::NotConverged { t_max: cfg.t_max, distance: d, last: x });
        }
        rk4_step(&g, &x, cfg.step, &mut next);
        let speed = distance(&x, &next) / cfg.step;
        std::mem::swap(&mut x, &mut next);
        t += cfg.step;
        states.push(x.clone());
        times.push(t);
        if speed < cfg.rest_speed && distance(&x, &x_o.x) < cfg.capture_radius {
            log::debug!("reverse flow at rest {:e} from the fixed point", distance(&x, &x_o.x));
            t += cfg.step;
            states.push(x_o.x.clone());
            times.push(t);
            break;
        }
    }
    states.reverse();
    let total = t;
    let times: Vec<f64> = times.iter().rev().map(|s| total - s).collect();
    Path::new(states, Some(times))
}

/// Segment contribution `2(|d||F| - d·F)` and, when `grads` is given, its
/// derivatives accumulated into the two endpoint gradients.
fn segment(
    cf: &CompiledField,
    a: &[f64],
    b: &[f64],
    buf: &mut SegmentBuffers,
    grads: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let n = a.len();
    for i in 0..n {
        buf.d[i] = b[i] - a[i];
        buf.mid[i] = 0.5 * (a[i] + b[i]);
    }
    let Some((ga, gb)) = grads else {
        cf.eval_into(&buf.mid, &mut buf.f);
        let dn = norm(&buf.d);
        let fnorm = norm(&buf.f);
        let dot: f64 = buf.d.iter().zip(&buf.f).map(|(x, y)| x * y).sum();
        return 2.0 * (dn * fnorm - dot);
    };
    cf.eval_with_jacobian(&buf.mid, &mut buf.f, &mut buf.jac);
    let dn = norm(&buf.d);
    let fnorm = norm(&buf.f);
    let dot: f64 = buf.d.iter().zip(&buf.f).map(|(x, y)| x * y).sum();
    let ratio_d = if dn > 0.0 { fnorm / dn } else { 0.0 };
    let ratio_f = if fnorm > 0.0 { dn / fnorm } else { 0.0 };
    for j in 0..n {
        // ∂/∂d_j and ∂/∂mid_j
        let dd = 2.0 * (ratio_d * buf.d[j] - buf.f[j]);
        let mut dm = 0.0;
        for i in 0..n {
            let jij = buf.jac[i * n + j];
            dm += jij * (ratio_f * buf.f[i] - buf.d[i]);
        }
        dm *= 2.0;
        ga[j] += -dd + 0.5 * dm;
        gb[j] += dd + 0.5 * dm;
    }
    2.0 * (dn * fnorm - dot)
}

struct SegmentBuffers {
    d: Vec<f64>,
    mid: Vec<f64>,
    f: Vec<f64>,
    jac: Vec<f64>,
}

impl SegmentBuffers {
    fn new(n: usize) -> Self {
        Self { d: vec![0.0; n], mid: vec![0.0; n], f: vec![0.0; n], jac: vec![0.0; n * n] }
    }
}

fn action_of_states(cf: &CompiledField, states: &[Vec<f64>]) -> f64 {
    let mut buf = SegmentBuffers::new(cf.nvars());
    states.windows(2).map(|w| segment(cf, &w[0], &w[1], &mut buf, None)).sum()
}

/// Geometric action with midpoint quadrature on every segment.
pub fn geometric_action(f: &VectorField, path: &Path) -> Result<f64, PathError> {
    if path.dim() != f.nvars() {
        return Err(PathError::DimensionMismatch { expected: f.nvars(), found: path.dim() });
    }
    Ok(action_of_states(&f.compile(), path.states()))
}

/// Action of the polyline `x_o, interior..., x_e` and its gradient with
/// respect to the flattened interior states.
fn action_and_gradient(
    cf: &CompiledField,
    x_o: &[f64],
    interior: &[f64],
    x_e: &[f64],
    grad: &mut [f64],
) -> f64 {
    let n = x_o.len();
    let m = interior.len() / n;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut buf = SegmentBuffers::new(n);
    let mut scratch_a = vec![0.0; n];
    let mut scratch_b = vec![0.0; n];
    let mut total = 0.0;
    for k in 0..=m {
        let a = if k == 0 { x_o } else { &interior[(k - 1) * n..k * n] };
        let b = if k == m { x_e } else { &interior[k * n..(k + 1) * n] };
        scratch_a.iter_mut().for_each(|v| *v = 0.0);
        scratch_b.iter_mut().for_each(|v| *v = 0.0);
        total += segment(cf, a, b, &mut buf, Some((&mut scratch_a, &mut scratch_b)));
        if k > 0 {
            for j in 0..n {
                grad[(k - 1) * n + j] += scratch_a[j];
            }
        }
        if k < m {
            for j in 0..n {
                grad[k * n + j] += scratch_b[j];
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeConfig {
    /// Number of interior states `N`.
    pub interior_points: usize,
    pub max_iterations: usize,
    /// Stop once the largest gradient entry falls below this.
    pub gradient_tolerance: f64,
    /// Arc-length re-distribution period, in iterations.
    pub redistribute_every: usize,
    /// Stop when the action of consecutive re-distributed paths differs by
    /// less than this fraction.
    pub relative_decrease: f64,
    /// Number of correction pairs kept by the quasi-Newton direction.
    pub memory: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            interior_points: 100,
            max_iterations: 3000,
            gradient_tolerance: 1e-9,
            redistribute_every: 50,
            relative_decrease: 1e-9,
            memory: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionMinimum {
    pub path: Path,
    pub action: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iterate and each re-distribution.
    pub history: Vec<f64>,
    /// Indices into `history` of the re-distributed paths. The objective
    /// never increases between consecutive entries of one period.
    pub redistributions: Vec<usize>,
}

impl ActionMinimum {
    /// `history` split at the re-distributions.
    pub fn periods(&self) -> Vec<&[f64]> {
        let mut cuts = vec![0];
        cuts.extend(self.redistributions.iter().copied());
        cuts.push(self.history.len());
        cuts.dedup();
        cuts.windows(2).map(|w| &self.history[w[0]..w[1]]).collect()
    }
}

fn lbfgs_direction(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q: Vec<f64> = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alpha[i] = rho * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..k {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        let beta = rho * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes the geometric action over the interior states of a polyline
/// from `x_o` to `x_e`, starting from `init` (or the straight segment).
pub fn minimize_action(
    f: &VectorField,
    x_o: &[f64],
    x_e: &[f64],
    init: Option<&Path>,
    cfg: &MinimizeConfig,
) -> Result<ActionMinimum, PathError> {
    let n = f.nvars();
    for len in [x_o.len(), x_e.len()] {
        if len != n {
            return Err(PathError::DimensionMismatch { expected: n, found: len });
        }
    }
    if cfg.interior_points < 8 {
        return Err(PathError::InvalidConfig("at least 8 interior points are required".into()));
    }
    if x_o == x_e {
        return Ok(ActionMinimum {
            path: Path::stationary(x_o),
            action: 0.0,
            iterations: 0,
            converged: true,
            history: vec![0.0],
            redistributions: Vec::new(),
        });
    }
    let m = cfg.interior_points;
    let start = match init {
        Some(p) if p.dim() == n => {
            let mut s = p.states().to_vec();
            s[0] = x_o.to_vec();
            *s.last_mut().unwrap() = x_e.to_vec();
            resample_states(&s, m + 2)
        }
        Some(p) => return Err(PathError::DimensionMismatch { expected: n, found: p.dim() }),
        None => Path::straight(x_o, x_e, m + 2)?.states().to_vec(),
    };
    let cf = f.compile();
    let mut x: Vec<f64> = start[1..=m].iter().flatten().copied().collect();
    let mut g = vec![0.0; x.len()];
    let mut fx = action_and_gradient(&cf, x_o, &x, x_e, &mut g);
    let mut history = vec![fx];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut trial = vec![0.0; x.len()];
    let mut g_trial = vec![0.0; x.len()];
    let mut converged = false;
    let mut iterations = 0;
    let mut stalled = 0;
    let mut period_start: Option<f64> = None;
    let mut redistributions = Vec::new();
    let gmax = |g: &[f64]| g.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    while iterations < cfg.max_iterations {
        if gmax(&g) < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = lbfgs_direction(&g, &s_hist, &y_hist);
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..x.len() {
                trial[i] = x[i] + t * dir[i];
            }
            let ft = action_and_gradient(&cf, x_o, &trial, x_e, &mut g_trial);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some(ft);
                break;
            }
            t *= 0.5;
        }
        let Some(ft) = accepted else {
            if s_hist.is_empty() {
                // no descent along the gradient: stationary to working precision
                converged = true;
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-14 {
            if s_hist.len() == cfg.memory.max(1) {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        let improvement = fx - ft;
        fx = ft;
        history.push(fx);
        stalled = if improvement <= 1e-15 * fx.abs().max(1.0) { stalled + 1 } else { 0 };
        if stalled >= 20 {
            converged = true;
            break;
        }

        if cfg.redistribute_every > 0 && iterations % cfg.redistribute_every == 0 {
            // unconditional: unevenly spaced nodes let the midpoint rule
            // undercut the continuous action along long segments
            let mut states = Vec::with_capacity(m + 2);
            states.push(x_o.to_vec());
            states.extend(x.chunks(n).map(|c| c.to_vec()));
            states.push(x_e.to_vec());
            let even = resample_states(&states, m + 2);
            x = even[1..=m].iter().flatten().copied().collect();
            fx = action_and_gradient(&cf, x_o, &x, x_e, &mut g);
            redistributions.push(history.len());
            history.push(fx);
            s_hist.clear();
            y_hist.clear();
            stalled = 0;
            if let Some(prev) = period_start {
                if (prev - fx).abs() <= cfg.relative_decrease * fx.abs().max(1e-12) {
                    converged = true;
                    break;
                }
            }
            period_start = Some(fx);
        }
    }
    if !converged {
        log::warn!(
            "action minimizer stopped after {iterations} iterations with gradient {:e}",
            gmax(&g)
        );
    }
    let mut states = Vec::with_capacity(m + 2);
    states.push(x_o.to_vec());
    states.extend(x.chunks(n).map(|c| c.to_vec()));
    states.push(x_e.to_vec());
    Ok(ActionMinimum { path: Path::new(states, None)?, action: fx, iterations, converged, history, redistributions })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub predict: PredictConfig,
    pub minimize: MinimizeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub x_o: Vec<f64>,
    pub x_e: Vec<f64>,
    /// `4 (U(x_e) - U(x_o))`.
    pub lower: f64,
    /// Action along the predicted path.
    pub predicted_upper: f64,
    /// Minimized action.
    pub oracle: f64,
}

impl BoundReport {
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        self.lower <= self.oracle + tol && self.oracle <= self.predicted_upper + tol
    }
}

/// Paths and actions behind a [`BoundReport`].
#[derive(Debug, Clone)]
pub struct BoundPaths {
    pub report: BoundReport,
    pub predicted: Path,
    pub oracle: Path,
}

pub fn quasi_potential_bounds(
    decomp: &DecompositionResult,
    x_o: &FixedPoint,
    x_e: &[f64],
    cfg: &BoundsConfig,
) -> Result<BoundPaths, PathError> {
    potential_bounds(&decomp.field, &decomp.u, x_o, x_e, cfg)
}

/// Bounds for an arbitrary potential `u`, with `f_U = f + ∇U`.
pub fn potential_bounds(
    f: &VectorField,
    u: &Polynomial,
    x_o: &FixedPoint,
    x_e: &[f64],
    cfg: &BoundsConfig,
) -> Result<BoundPaths, PathError> {
    let f_u = f.try_add(&u.gradient())?;
    let lower = 4.0 * (u.evaluate(x_e)? - u.evaluate(&x_o.x)?);
    let predicted = predict_map(u, &f_u, x_o, x_e, &cfg.predict)?;
    let predicted_upper = geometric_action(f, &predicted)?;
    let min = minimize_action(f, &x_o.x, x_e, Some(&predicted), &cfg.minimize)?;
    Ok(BoundPaths {
        report: BoundReport {
            x_o: x_o.x.clone(),
            x_e: x_e.to_vec(),
            lower,
            predicted_upper,
            oracle: min.action,
        },
        predicted,
        oracle: min.path,
    })
}

/// First of `candidates` reached by the forward flow `ẋ = f` from `x`.
pub fn basin_of<'a>(
    f: &VectorField,
    x: &[f64],
    candidates: &'a [FixedPoint],
    cfg: &PredictConfig,
) -> Option<&'a FixedPoint> {
    let cf = f.compile();
    let mut x = x.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut t = 0.0;
    while t <= cfg.t_max {
        if let Some(fp) = candidates.iter().find(|c| distance(&c.x, &x) < cfg.radius) {
            return Some(fp);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        rk4_step(&cf, &x, cfg.step, &mut next);
        std::mem::swap(&mut x, &mut next);
        t += cfg.step;
    }
    None
}

/// Largest pointwise distance between two paths after re-sampling both to
/// `points` states equally spaced in arc length.
pub fn aligned_distance(a: &Path, b: &Path, points: usize) -> f64 {
    let ra = resample_states(a.states(), points.max(2));
    let rb = resample_states(b.states(), points.max(2));
    ra.iter().zip(&rb).map(|(p, q)| distance(p, q)).fold(0.0, f64::max)
}
