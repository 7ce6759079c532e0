//! Convex local objectives built from shifted even powers, and the team
//! problem `minimize Σ f_i(x_i) subject to x_i = x_j`.

use serde::{Deserialize, Serialize};

use crate::points::norm;
use crate::{Error, Result};

/// One term `coefficient · (x[coordinate] + shift)^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: f64,
    pub coordinate: usize,
    pub shift: f64,
    pub power: u32,
}

impl Term {
    pub fn new(coefficient: f64, coordinate: usize, shift: f64, power: u32) -> Self {
        Term { coefficient, coordinate, shift, power }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.coefficient * (x[self.coordinate] + self.shift).powi(self.power as i32)
    }

    fn slope(&self, x: &[f64]) -> f64 {
        self.coefficient * self.power as f64 * (x[self.coordinate] + self.shift).powi(self.power as i32 - 1)
    }

    fn curvature(&self, x: &[f64]) -> f64 {
        let p = self.power as f64;
        self.coefficient * p * (p - 1.0) * (x[self.coordinate] + self.shift).powi(self.power as i32 - 2)
    }
}

/// Sum of [`Term`]s on `R^m`. Every power is even and at least 2 and every
/// coefficient positive, so the function is convex with a continuous gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    dimension: usize,
    terms: Vec<Term>,
}

impl ObjectiveSpec {
    pub fn new(dimension: usize, terms: Vec<Term>) -> Result<Self> {
        for (k, t) in terms.iter().enumerate() {
            if t.power < 2 || t.power % 2 != 0 {
                return Err(Error::Construction(format!("term {k}: power {} is not an even integer >= 2", t.power)));
            }
            if !(t.coefficient > 0.0) || !t.coefficient.is_finite() {
                return Err(Error::Construction(format!("term {k}: coefficient {} is not positive", t.coefficient)));
            }
            if t.coordinate >= dimension {
                return Err(Error::Construction(format!(
                    "term {k}: coordinate {} out of range for dimension {dimension}",
                    t.coordinate
                )));
            }
            if !t.shift.is_finite() {
                return Err(Error::Construction(format!("term {k}: shift is not finite")));
            }
        }
        Ok(ObjectiveSpec { dimension, terms })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Domain(format!(
                "point has dimension {}, objective expects {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.terms.iter().map(|t| t.value(x)).sum())
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dimension];
        self.add_grad(x, &mut g);
        Ok(g)
    }

    /// `out += ∇f(x)`; `x` must already have the right dimension.
    pub(crate) fn add_grad(&self, x: &[f64], out: &mut [f64]) {
        for t in &self.terms {
            out[t.coordinate] += t.slope(x);
        }
    }

    /// Diagonal of the Hessian (terms are separable, so it is the whole Hessian).
    pub fn hessian_diag(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut h = vec![0.0; self.dimension];
        for t in &self.terms {
            h[t.coordinate] += t.curvature(x);
        }
        Ok(h)
    }

    /// Axis-aligned box containing `{s : ∇f(s) = 0}`. Along a coordinate the
    /// partial derivative is increasing and changes sign between the
    /// smallest and largest `-shift`, so the box is `[min -shift, max -shift]`.
    pub fn local_minimizer_set_bound(&self) -> Result<BoundingBox> {
        let mut lower = vec![f64::INFINITY; self.dimension];
        let mut upper = vec![f64::NEG_INFINITY; self.dimension];
        for t in &self.terms {
            lower[t.coordinate] = lower[t.coordinate].min(-t.shift);
            upper[t.coordinate] = upper[t.coordinate].max(-t.shift);
        }
        if let Some(k) = lower.iter().position(|v| v.is_infinite()) {
            return Err(Error::Assumption(format!("coordinate {k} has no term, so the minimizer set is unbounded")));
        }
        Ok(BoundingBox { lower, upper })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn grad_fd(f: &ObjectiveSpec, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    f.check_dim(x)?;
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f.eval(&probe)?;
        probe[k] = x[k] - h;
        let down = f.eval(&probe)?;
        probe[k] = x[k];
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// The team objective `Σ_i f_i` of a fixed set of members sharing a dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamObjective {
    members: Vec<ObjectiveSpec>,
}

/// Armijo sufficient-decrease constant for the minimizer line search.
const ARMIJO: f64 = 1e-4;
const NEWTON_MAX_ITERS: usize = 100;

impl TeamObjective {
    pub fn new(members: Vec<ObjectiveSpec>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Construction("team objective needs at least one member".into()));
        };
        let m = first.dimension();
        if let Some(i) = members.iter().position(|f| f.dimension() != m) {
            return Err(Error::Construction(format!(
                "member {i} has dimension {}, member 0 has {m}",
                members[i].dimension()
            )));
        }
        Ok(TeamObjective { members })
    }

    /// The eight planar objectives of the reference experiment: agents 1-4
    /// are ½-quadratics and agents 5-8 are ¼-quartics, shifted by 0 or 2 in
    /// each coordinate. Their team minimizer is `(-1, -1)`.
    pub fn reference_instance() -> Self {
        let shifts = [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)];
        let members = [(0.5, 2), (0.25, 4)]
            .iter()
            .flat_map(|&(c, p)| {
                shifts.iter().map(move |&(a, b)| {
                    ObjectiveSpec::new(2, vec![Term::new(c, 0, a, p), Term::new(c, 1, b, p)]).unwrap()
                })
            })
            .collect();
        TeamObjective { members }
    }

    pub fn members(&self) -> &[ObjectiveSpec] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.members[0].dimension()
    }

    pub fn member(&self, i: usize) -> &ObjectiveSpec {
        &self.members[i]
    }

    pub fn team_eval(&self, s: &[f64]) -> Result<f64> {
        self.members.iter().map(|f| f.eval(s)).sum()
    }

    pub fn team_grad(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.members[0].check_dim(s)?;
        let mut g = vec![0.0; s.len()];
        for f in &self.members {
            f.add_grad(s, &mut g);
        }
        Ok(g)
    }

    fn team_hessian_diag(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut h = vec![0.0; s.len()];
        for f in &self.members {
            for (a, b) in h.iter_mut().zip(f.hessian_diag(s)?) {
                *a += b;
            }
        }
        Ok(h)
    }

    /// Checks that every member's minimizer set is bounded.
    pub fn check_bounded_minimizers(&self) -> Result<Vec<BoundingBox>> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, f)| f.local_minimizer_set_bound().map_err(|e| Error::Assumption(format!("member {i}: {e}"))))
            .collect()
    }

    /// Point with `‖Σ ∇f_i‖ <= tol`, by damped Newton with backtracking from
    /// the average of the members' minimizer-box centres.
    pub fn minimizer_team(&self, tol: f64) -> Result<Vec<f64>> {
        let boxes = self.check_bounded_minimizers()?;
        let m = self.dimension();
        let mut x = vec![0.0; m];
        for b in &boxes {
            for (xk, c) in x.iter_mut().zip(b.center()) {
                *xk += c / boxes.len() as f64;
            }
        }

        let mut g = self.team_grad(&x)?;
        for _ in 0..NEWTON_MAX_ITERS {
            let g_norm = norm(&g);
            if g_norm <= tol {
                return Ok(x);
            }
            let h = self.team_hessian_diag(&x)?;
            let dir: Vec<f64> = g.iter().zip(&h).map(|(gk, hk)| if *hk > 0.0 { -gk / hk } else { -gk }).collect();
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let fx = self.team_eval(&x)?;

            let mut step = 1.0;
            let (next, next_g) = loop {
                let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                let fc = self.team_eval(&cand)?;
                if fc <= fx + ARMIJO * step * slope {
                    let gc = self.team_grad(&cand)?;
                    break (cand, gc);
                }
                // Close to the optimum the decrease drowns in rounding; fall
                // back to accepting any step that shrinks the gradient.
                let gc = self.team_grad(&cand)?;
                if fc - fx <= 8.0 * f64::EPSILON * fx.abs().max(1.0) && norm(&gc) < g_norm {
                    break (cand, gc);
                }
                step *= 0.5;
                if step < 1e-16 {
                    return Err(Error::NonConvergence { iterate: x, grad_norm: g_norm });
                }
            };
            x = next;
            g = next_g;
        }
        let grad_norm = norm(&g);
        if grad_norm <= tol {
            return Ok(x);
        }
        Err(Error::NonConvergence { iterate: x, grad_norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn f(i: usize) -> ObjectiveSpec {
        TeamObjective::reference_instance().member(i - 1).clone()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(f(1).eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(f(2).eval(&[-1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(f(5).eval(&[-1.0, -1.0]).unwrap(), 0.5);
        assert!(matches!(f(1).eval(&[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn grad_examples() {
        assert_eq!(f(2).grad(&[0.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(f(1).grad(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(f(6).grad(&[-1.0, -1.0]).unwrap(), vec![1.0, -1.0]);
        assert!(f(1).grad(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn finite_difference_examples() {
        let g = grad_fd(&f(2), &[0.0, 0.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && g[1].abs() < 1e-6);
        for h in [1e-1, 1e-3, 0.37] {
            assert_eq!(grad_fd(&f(1), &[0.0, 0.0], h).unwrap(), vec![0.0, 0.0]);
        }
        let g = grad_fd(&f(5), &[1.0, 1.0], 1e-4).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-6 && (g[1] - 1.0).abs() < 1e-6);
        assert!(grad_fd(&f(1), &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn team_examples() {
        let t = TeamObjective::reference_instance();
        assert_eq!(t.team_grad(&[-1.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        assert_abs_diff_eq!(t.team_eval(&[-1.0, -1.0]).unwrap(), 6.0, epsilon = 1e-12);
        let single = TeamObjective::new(vec![f(1)]).unwrap();
        assert_eq!(single.team_eval(&[3.0, 4.0]).unwrap(), 12.5);
        assert!(t.team_eval(&[0.0]).is_err());
    }

    #[test]
    fn minimizer_examples() {
        let s = TeamObjective::reference_instance().minimizer_team(1e-8).unwrap();
        assert_abs_diff_eq!(s[0], -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s[1], -1.0, epsilon = 1e-6);

        let s = TeamObjective::new(vec![f(1)]).unwrap().minimizer_team(1e-8).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);

        let s = TeamObjective::new(vec![f(1), f(2)]).unwrap().minimizer_team(1e-10).unwrap();
        assert_abs_diff_eq!(s[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn minimizer_symmetric_quartics() {
        let a = ObjectiveSpec::new(1, vec![Term::new(1.0, 0, 0.0, 4)]).unwrap();
        let b = ObjectiveSpec::new(1, vec![Term::new(1.0, 0, -3.0, 4)]).unwrap();
        let s = TeamObjective::new(vec![a, b]).unwrap().minimizer_team(1e-10).unwrap();
        assert_abs_diff_eq!(s[0], 1.5, epsilon = 1e-4);
    }

    #[test]
    fn minimizer_set_bounds() {
        let b = f(4).local_minimizer_set_bound().unwrap();
        assert_eq!(b.lower, vec![-2.0, -2.0]);
        assert!(b.is_point());
        assert_eq!(f(1).local_minimizer_set_bound().unwrap().lower, vec![0.0, 0.0]);

        let flat = ObjectiveSpec::new(2, vec![Term::new(1.0, 0, 0.0, 2)]).unwrap();
        assert!(matches!(flat.local_minimizer_set_bound(), Err(Error::Assumption(_))));
        let team = TeamObjective::new(vec![flat]).unwrap();
        assert!(matches!(team.minimizer_team(1e-8), Err(Error::Assumption(_))));

        let two = ObjectiveSpec::new(1, vec![Term::new(1.0, 0, 1.0, 2), Term::new(1.0, 0, -3.0, 4)]).unwrap();
        let b = two.local_minimizer_set_bound().unwrap();
        assert_eq!((b.lower[0], b.upper[0]), (-1.0, 3.0));
    }

    #[test]
    fn construction_rejects_bad_terms() {
        assert!(ObjectiveSpec::new(2, vec![Term::new(1.0, 0, 0.0, 3)]).is_err());
        assert!(ObjectiveSpec::new(2, vec![Term::new(1.0, 0, 0.0, 0)]).is_err());
        assert!(ObjectiveSpec::new(2, vec![Term::new(-1.0, 0, 0.0, 2)]).is_err());
        assert!(ObjectiveSpec::new(2, vec![Term::new(1.0, 2, 0.0, 2)]).is_err());
        assert!(TeamObjective::new(vec![]).is_err());
        let a = ObjectiveSpec::new(1, vec![Term::new(1.0, 0, 0.0, 2)]).unwrap();
        assert!(TeamObjective::new(vec![a, f(1)]).is_err());
    }
}
