//! Adaptive consensus-optimization control laws.
//!
//! Single integrators (`ẋ_i = u_i`) use
//! `u_i = Σ_{j∈N_i} q_ij (x_j - x_i)/‖x_j - x_i‖ - ∇f_i(x_i)`.
//! Double integrators (`ẋ_i = v_i`, `v̇_i = u_i`) use the same coupling on
//! `v̄_i = x_i + (2/p) v_i`, plus damping `-p v_i`, with the gradient taken at `v̄_i`.
//! In both, `q̇_ij = sgn(‖x_j - x_i‖)` on active edges and `q_ij(0) = 0`.
//!
//! The unit vector `d/‖d‖` is discontinuous at `d = 0`. [`norm_dir`] replaces
//! it by the continuous ramp `d / max(‖d‖, eps_norm)`, a selection of the
//! Filippov set-valued map that is odd in `d`, so the pairwise interaction
//! stays exactly dissipative.

use serde::{Deserialize, Serialize};

use crate::graph::Topology;
use crate::objective::TeamObjective;
use crate::points::{dist, Points};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    Double,
}

/// Which pairwise distance drives gain growth in double-integrator mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainArgument {
    /// `‖x_j - x_i‖`, the position difference.
    #[default]
    Position,
    /// `‖v̄_j - v̄_i‖`, the same argument as the interaction term.
    Vbar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub mode: Mode,
    /// Damping gain (double mode only).
    pub p: f64,
    /// Radius below which [`norm_dir`] is linear.
    pub eps_norm: f64,
    /// Pair distances at or below this count as agreement; gains stop growing.
    pub eps_sign: f64,
    pub gain_argument: GainArgument,
}

pub const DEFAULT_EPS_NORM: f64 = 1e-3;

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            mode: Mode::Single,
            p: 1.0,
            eps_norm: DEFAULT_EPS_NORM,
            eps_sign: 0.5 * DEFAULT_EPS_NORM,
            gain_argument: GainArgument::Position,
        }
    }
}

impl ProtocolParams {
    pub fn single() -> Self {
        Self::default()
    }

    pub fn double(p: f64) -> Self {
        ProtocolParams { mode: Mode::Double, p, ..Self::default() }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.p > 0.0) || !self.p.is_finite() {
            out.push(format!("damping p must be positive, got {}", self.p));
        }
        if !(self.eps_norm > 0.0) || !self.eps_norm.is_finite() {
            out.push(format!("eps_norm must be positive, got {}", self.eps_norm));
        }
        if !(self.eps_sign > 0.0) || self.eps_sign > self.eps_norm {
            out.push(format!("eps_sign must satisfy 0 < eps_sign <= eps_norm, got {}", self.eps_sign));
        }
        out
    }
}

/// Symmetric nonnegative gain matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn zeros(n: usize) -> Self {
        GainMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets `q_ij = q_ji = value`.
    pub fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        assert_ne!(i, j, "gain diagonal is fixed at zero");
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Entries `q_ij` for `i < j`, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn from_upper_triangle(n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Domain(format!("{} gains do not fill the upper triangle of {n} agents", upper.len())));
        }
        let mut q = GainMatrix::zeros(n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                q.set_pair(i, j, *it.next().unwrap());
            }
        }
        Ok(q)
    }

    /// Symmetric, zero diagonal, nonnegative.
    pub fn is_well_formed(&self) -> bool {
        (0..self.n).all(|i| {
            self.get(i, i) == 0.0 && (0..self.n).all(|j| self.get(i, j) >= 0.0 && self.get(i, j) == self.get(j, i))
        })
    }

    /// Entrywise `self >= earlier`.
    pub fn dominates(&self, earlier: &GainMatrix) -> bool {
        self.n == earlier.n && self.data.iter().zip(&earlier.data).all(|(a, b)| a >= b)
    }
}

/// Positions, optional velocities and adaptive gains of the whole team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolState {
    pub x: Points,
    /// Present only in double-integrator mode.
    pub v: Option<Points>,
    pub q: GainMatrix,
}

impl ProtocolState {
    /// Zero gains, and zero velocities when `mode` is double.
    pub fn at_rest(x: Points, mode: Mode) -> Self {
        let n = x.len();
        let v = (mode == Mode::Double).then(|| Points::zeros(n, x.dim()));
        ProtocolState { x, v, q: GainMatrix::zeros(n) }
    }

    pub fn agent_count(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// The coordinates the interaction term acts on: `x` in single mode, `v̄` in double.
    pub fn coupled(&self, params: &ProtocolParams) -> Points {
        match (&self.v, params.mode) {
            (Some(v), Mode::Double) => vbar_points(&self.x, v, params.p),
            _ => self.x.clone(),
        }
    }
}

/// `d / ‖d‖` outside the `eps_norm` ball and `d / eps_norm` inside it.
pub fn norm_dir(d: &[f64], eps_norm: f64) -> Vec<f64> {
    let den = ramp_denominator(crate::points::norm(d), eps_norm);
    d.iter().map(|v| v / den).collect()
}

/// `max(‖d‖, eps_norm)`.
#[inline]
pub(crate) fn ramp_denominator(d_norm: f64, eps_norm: f64) -> f64 {
    d_norm.max(eps_norm)
}

/// `Σ_{j∈N_i} q_ij · norm_dir(y_j - y_i)` accumulated into `out`.
pub(crate) fn add_interaction(i: usize, y: &Points, q: &GainMatrix, g: &Topology, eps_norm: f64, out: &mut [f64]) {
    let yi = y.row(i);
    for (j, _) in g.neighbors(i) {
        let yj = y.row(j);
        let w = q.get(i, j) / ramp_denominator(dist(yj, yi), eps_norm);
        for ((o, a), b) in out.iter_mut().zip(yj).zip(yi) {
            *o += w * (a - b);
        }
    }
}

/// `Σ_{j∈N_i} q_ij · norm_dir(y_j - y_i)` for agent `i`.
pub fn interaction_term(i: usize, y: &Points, q: &GainMatrix, g: &Topology, eps_norm: f64) -> Vec<f64> {
    let mut out = vec![0.0; y.dim()];
    add_interaction(i, y, q, g, eps_norm, &mut out);
    out
}

fn check_shapes(i: usize, s: &ProtocolState, g: &Topology, team: &TeamObjective) -> Result<()> {
    let n = s.agent_count();
    if i >= n {
        return Err(Error::Domain(format!("agent {i} out of range for {n} agents")));
    }
    if g.agent_count() != n || team.len() != n || s.q.len() != n {
        return Err(Error::Domain(format!(
            "state has {n} agents, topology {}, objectives {}, gains {}",
            g.agent_count(),
            team.len(),
            s.q.len()
        )));
    }
    if team.dimension() != s.dim() {
        return Err(Error::Domain(format!("state dimension {} but objective dimension {}", s.dim(), team.dimension())));
    }
    Ok(())
}

/// Single-integrator control `u_i`.
pub fn control_single(
    i: usize,
    s: &ProtocolState,
    g: &Topology,
    team: &TeamObjective,
    params: &ProtocolParams,
) -> Result<Vec<f64>> {
    check_shapes(i, s, g, team)?;
    let mut u = vec![0.0; s.dim()];
    add_interaction(i, &s.x, &s.q, g, params.eps_norm, &mut u);
    let mut grad = vec![0.0; s.dim()];
    team.member(i).add_grad(s.x.row(i), &mut grad);
    u.iter_mut().zip(grad).for_each(|(a, b)| *a -= b);
    Ok(u)
}

/// Double-integrator control `u_i`. Computes `v̄` for the whole team; use
/// [`control_double_with_vbar`] inside loops.
pub fn control_double(
    i: usize,
    s: &ProtocolState,
    g: &Topology,
    team: &TeamObjective,
    params: &ProtocolParams,
) -> Result<Vec<f64>> {
    check_shapes(i, s, g, team)?;
    let v = velocities(s)?;
    let vbar = vbar_points(&s.x, v, params.p);
    control_double_with_vbar(i, s, &vbar, g, team, params)
}

pub fn control_double_with_vbar(
    i: usize,
    s: &ProtocolState,
    vbar: &Points,
    g: &Topology,
    team: &TeamObjective,
    params: &ProtocolParams,
) -> Result<Vec<f64>> {
    check_shapes(i, s, g, team)?;
    let v = velocities(s)?;
    let mut u: Vec<f64> = v.row(i).iter().map(|vk| -params.p * vk).collect();
    add_interaction(i, vbar, &s.q, g, params.eps_norm, &mut u);
    let mut grad = vec![0.0; s.dim()];
    team.member(i).add_grad(vbar.row(i), &mut grad);
    u.iter_mut().zip(grad).for_each(|(a, b)| *a -= b);
    Ok(u)
}

/// Dispatches on `params.mode`.
pub fn control(
    i: usize,
    s: &ProtocolState,
    g: &Topology,
    team: &TeamObjective,
    params: &ProtocolParams,
) -> Result<Vec<f64>> {
    match params.mode {
        Mode::Single => control_single(i, s, g, team, params),
        Mode::Double => control_double(i, s, g, team, params),
    }
}

fn velocities(s: &ProtocolState) -> Result<&Points> {
    s.v.as_ref().ok_or_else(|| Error::Domain("double-integrator control needs velocities".into()))
}

/// Rate of `q_ij`: 1 if `(i, j)` is an edge and the pair is more than
/// `eps_sign` apart, else 0.
pub fn gain_rate(i: usize, j: usize, s: &ProtocolState, g: &Topology, params: &ProtocolParams) -> f64 {
    if i == j || !g.has_edge(i, j) {
        return 0.0;
    }
    let d = match (params.gain_argument, &s.v, params.mode) {
        (GainArgument::Vbar, Some(v), Mode::Double) => {
            let a = transform_vbar(s.x.row(i), v.row(i), params.p);
            let b = transform_vbar(s.x.row(j), v.row(j), params.p);
            dist(&a, &b)
        }
        _ => dist(s.x.row(i), s.x.row(j)),
    };
    if d > params.eps_sign {
        1.0
    } else {
        0.0
    }
}

/// One forward-Euler step of the gain dynamics, applied per unordered pair.
pub fn step_gains(s: &ProtocolState, g: &Topology, dt: f64, params: &ProtocolParams) -> GainMatrix {
    let mut q = s.q.clone();
    for (i, j, _) in g.edges() {
        let rate = gain_rate(i, j, s, g, params);
        if rate != 0.0 {
            q.set_pair(i, j, s.q.get(i, j) + dt * rate);
        }
    }
    q
}

/// `v̄ = x + (2/p) v`.
pub fn transform_vbar(x: &[f64], v: &[f64], p: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(a, b)| a + 2.0 / p * b).collect()
}

/// Inverse of [`transform_vbar`]: `v = (p/2)(v̄ - x)`.
pub fn velocity_from_vbar(x: &[f64], vbar: &[f64], p: f64) -> Vec<f64> {
    x.iter().zip(vbar).map(|(a, b)| 0.5 * p * (b - a)).collect()
}

pub fn vbar_points(x: &Points, v: &Points, p: f64) -> Points {
    let flat = x.as_flat().iter().zip(v.as_flat()).map(|(a, b)| a + 2.0 / p * b).collect();
    Points::from_flat(x.len(), x.dim(), flat).expect("x and v share a shape")
}

/// Right-hand side of the closed loop written in `(x, v̄)` coordinates:
/// `ẋ_i = (p/2)(v̄_i - x_i)`,
/// `v̄̇_i = -(p/2)(v̄_i - x_i) + (2/p)[Σ_j q_ij norm_dir(v̄_j - v̄_i) - ∇f_i(v̄_i)]`.
pub fn transformed_rates(
    x: &Points,
    vbar: &Points,
    q: &GainMatrix,
    g: &Topology,
    team: &TeamObjective,
    params: &ProtocolParams,
) -> (Points, Points) {
    let (n, m) = (x.len(), x.dim());
    let half_p = 0.5 * params.p;
    let mut xdot = Points::zeros(n, m);
    let mut vbar_dot = Points::zeros(n, m);
    for i in 0..n {
        let mut drive = vec![0.0; m];
        add_interaction(i, vbar, q, g, params.eps_norm, &mut drive);
        let mut grad = vec![0.0; m];
        team.member(i).add_grad(vbar.row(i), &mut grad);
        let (xi, bi) = (x.row(i), vbar.row(i));
        for k in 0..m {
            let gap = bi[k] - xi[k];
            xdot.row_mut(i)[k] = half_p * gap;
            vbar_dot.row_mut(i)[k] = -half_p * gap + 2.0 / params.p * (drive[k] - grad[k]);
        }
    }
    (xdot, vbar_dot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ObjectiveSpec, Term};

    fn flat_team(n: usize) -> TeamObjective {
        // zero gradient everywhere is not representable; use a negligible quadratic far away
        let f = ObjectiveSpec::new(2, vec![Term::new(1e-300, 0, 0.0, 2), Term::new(1e-300, 1, 0.0, 2)]).unwrap();
        TeamObjective::new(vec![f; n]).unwrap()
    }

    fn quad_team(n: usize) -> TeamObjective {
        let f1 = TeamObjective::reference_instance().member(0).clone();
        TeamObjective::new(vec![f1; n]).unwrap()
    }

    fn pts(rows: &[[f64; 2]]) -> Points {
        Points::from_rows(rows).unwrap()
    }

    #[test]
    fn norm_dir_examples() {
        assert_eq!(norm_dir(&[3.0, 4.0], 1e-6), vec![0.6, 0.8]);
        assert_eq!(norm_dir(&[0.0, 0.0], 1e-6), vec![0.0, 0.0]);
        assert_eq!(norm_dir(&[0.0, 0.0], 3.0), vec![0.0, 0.0]);
        let r = norm_dir(&[1e-7, 0.0], 1e-6);
        assert!((r[0] - 0.1).abs() < 1e-15 && r[1] == 0.0);
    }

    #[test]
    fn single_control_examples() {
        let g = Topology::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let params = ProtocolParams::single();
        let s = ProtocolState::at_rest(pts(&[[0.0, 0.0], [0.0, 0.0]]), Mode::Single);
        assert_eq!(control_single(0, &s, &g, &quad_team(2), &params).unwrap(), vec![0.0, 0.0]);

        let mut s = ProtocolState::at_rest(pts(&[[0.0, 0.0], [1.0, 0.0]]), Mode::Single);
        s.q.set_pair(0, 1, 2.0);
        assert_eq!(control_single(0, &s, &g, &quad_team(2), &params).unwrap(), vec![2.0, 0.0]);

        let f2 = TeamObjective::new(vec![TeamObjective::reference_instance().member(1).clone()]).unwrap();
        let lone = ProtocolState::at_rest(pts(&[[0.0, 0.0]]), Mode::Single);
        let u = control_single(0, &lone, &Topology::empty(1), &f2, &params).unwrap();
        assert_eq!(u, vec![-2.0, 0.0]);
        assert!(control_single(1, &lone, &Topology::empty(1), &f2, &params).is_err());
    }

    #[test]
    fn double_control_examples() {
        let params = ProtocolParams::double(2.0);
        let team = quad_team(1);
        let mut s = ProtocolState::at_rest(pts(&[[0.0, 0.0]]), Mode::Double);
        s.v = Some(pts(&[[1.0, 0.0]]));
        assert_eq!(control_double(0, &s, &Topology::empty(1), &team, &params).unwrap(), vec![-3.0, 0.0]);

        let g = Topology::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let mut s = ProtocolState::at_rest(pts(&[[0.0, 0.0], [0.0, 0.0]]), Mode::Double);
        s.v = Some(pts(&[[1.0, 0.0], [0.0, 0.0]]));
        s.q.set_pair(0, 1, 1.0);
        let u = control_double(0, &s, &g, &flat_team(2), &params).unwrap();
        assert!((u[0] + 3.0).abs() < 1e-12 && u[1].abs() < 1e-12, "{u:?}");

        let rest = ProtocolState::at_rest(pts(&[[0.0, 0.0]]), Mode::Single);
        assert!(control_double(0, &rest, &Topology::empty(1), &team, &params).is_err());
    }

    #[test]
    fn equilibrium_at_team_minimizer() {
        // every member minimized at the same point
        let team = quad_team(3);
        let g = Topology::ring(3);
        let x = pts(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let mut single = ProtocolState::at_rest(x.clone(), Mode::Single);
        single.q.set_pair(0, 1, 4.0);
        let mut double = ProtocolState::at_rest(x, Mode::Double);
        double.q.set_pair(1, 2, 4.0);
        for i in 0..3 {
            assert_eq!(control_single(i, &single, &g, &team, &ProtocolParams::single()).unwrap(), vec![0.0, 0.0]);
            assert_eq!(control_double(i, &double, &g, &team, &ProtocolParams::double(1.0)).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn gain_rate_examples() {
        let params = ProtocolParams { eps_sign: 1e-6, ..ProtocolParams::single() };
        let g = Topology::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        let s = ProtocolState::at_rest(pts(&[[0.0, 0.0], [0.5, 0.0], [0.0, 0.0]]), Mode::Single);
        assert_eq!(gain_rate(0, 1, &s, &g, &params), 1.0);
        assert_eq!(gain_rate(0, 2, &s, &g, &params), 0.0);
        let same = ProtocolState::at_rest(pts(&[[0.3, 0.1], [0.3, 0.1], [0.0, 0.0]]), Mode::Single);
        assert_eq!(gain_rate(0, 1, &same, &g, &params), 0.0);
    }

    #[test]
    fn double_mode_gain_uses_positions_by_default() {
        let g = Topology::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let mut s = ProtocolState::at_rest(pts(&[[0.0, 0.0], [0.0, 0.0]]), Mode::Double);
        s.v = Some(pts(&[[1.0, 0.0], [0.0, 0.0]]));
        let pos = ProtocolParams::double(1.0);
        assert_eq!(gain_rate(0, 1, &s, &g, &pos), 0.0);
        let vbar = ProtocolParams { gain_argument: GainArgument::Vbar, ..pos };
        assert_eq!(gain_rate(0, 1, &s, &g, &vbar), 1.0);
    }

    #[test]
    fn step_gains_examples() {
        let full = Topology::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let params = ProtocolParams::single();
        let s = ProtocolState::at_rest(pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), Mode::Single);
        let q = step_gains(&s, &full, 0.01, &params);
        assert_eq!(q.upper_triangle(), vec![0.01; 3]);
        assert!(q.is_well_formed() && q.dominates(&s.q));

        let mut c = ProtocolState::at_rest(pts(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]), Mode::Single);
        c.q.set_pair(0, 2, 3.0);
        assert_eq!(step_gains(&c, &full, 0.01, &params), c.q);
    }

    #[test]
    fn vbar_examples() {
        assert_eq!(transform_vbar(&[1.0, 0.0], &[1.0, 0.0], 2.0), vec![2.0, 0.0]);
        assert_eq!(transform_vbar(&[1.5, -2.0], &[0.0, 0.0], 3.0), vec![1.5, -2.0]);
        assert_eq!(transform_vbar(&[0.0, 0.0], &[1.0, 2.0], 4.0), vec![0.5, 1.0]);
        assert_eq!(velocity_from_vbar(&[0.0, 0.0], &[0.5, 1.0], 4.0), vec![1.0, 2.0]);
    }

    #[test]
    fn gain_matrix_upper_triangle_round_trip() {
        let mut q = GainMatrix::zeros(4);
        q.set_pair(0, 3, 1.5);
        q.set_pair(2, 1, 0.25);
        let back = GainMatrix::from_upper_triangle(4, &q.upper_triangle()).unwrap();
        assert_eq!(back, q);
        assert!(GainMatrix::from_upper_triangle(4, &[1.0]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::default().problems().is_empty());
        assert_eq!(ProtocolParams { p: 0.0, ..Default::default() }.problems().len(), 1);
        assert_eq!(ProtocolParams { eps_sign: 2e-3, ..Default::default() }.problems().len(), 1);
        assert_eq!(ProtocolParams { eps_norm: -1.0, eps_sign: 1e-6, ..Default::default() }.problems().len(), 2);
    }
}
