//! Tabular discounted MDPs, Bellman flow constraints and value iteration.
//!
//! Tables are indexed `[s, a]` (and `[s, a, s']` for the transition kernel).

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Array3, Axis};

use crate::conjugate::solve_simplex_conjugate;
use crate::error::{Error, Result};
use crate::scheme::RegScheme;

const KERNEL_TOL: f64 = 1e-10;
const DISTRIBUTION_TOL: f64 = 1e-8;

/// A finite discounted MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    transition: Array3<f64>,
    reward: Array2<f64>,
    nu0: Array1<f64>,
    gamma: f64,
}

impl TabularMdp {
    /// `transition[[s, a, s']] = P(s' | s, a)`, `reward[[s, a]] = r(s, a)`.
    pub fn new(transition: Array3<f64>, reward: Array2<f64>, nu0: Array1<f64>, gamma: f64) -> Result<Self> {
        let (n_states, n_actions, n_next) = transition.dim();
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidInput("MDP needs at least one state and one action".into()));
        }
        if n_next != n_states {
            return Err(Error::Shape(format!(
                "transition has {n_next} successor states for {n_states} states"
            )));
        }
        if reward.dim() != (n_states, n_actions) {
            return Err(Error::Shape(format!(
                "reward has shape {:?}, expected ({n_states}, {n_actions})",
                reward.dim()
            )));
        }
        if nu0.len() != n_states {
            return Err(Error::Shape(format!("nu0 has {} entries for {n_states} states", nu0.len())));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if transition.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput("transition probabilities must be finite and >= 0".into()));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let total: f64 = transition.slice(ndarray::s![s, a, ..]).sum();
                if (total - 1.0).abs() > KERNEL_TOL {
                    return Err(Error::InvalidInput(format!(
                        "P(. | s={s}, a={a}) sums to {total}, expected 1"
                    )));
                }
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("rewards must be finite".into()));
        }
        if nu0.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (nu0.sum() - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::InvalidInput("nu0 must be a probability vector".into()));
        }
        Ok(Self {
            transition,
            reward,
            nu0,
            gamma,
        })
    }

    /// One-state MDP whose single state loops onto itself; `q` is the reward.
    pub fn single_step(q: &[f64], gamma: f64) -> Result<Self> {
        let n = q.len();
        let transition = Array3::from_elem((1, n, 1), 1.0);
        let reward = Array2::from_shape_vec((1, n), q.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(transition, reward, Array1::from_elem(1, 1.0), gamma)
    }

    pub fn n_states(&self) -> usize {
        self.reward.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.reward.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn reward(&self) -> &Array2<f64> {
        &self.reward
    }

    pub fn nu0(&self) -> &Array1<f64> {
        &self.nu0
    }

    /// Same dynamics with a different reward table.
    pub fn with_reward(&self, reward: Array2<f64>) -> Result<Self> {
        Self::new(self.transition.clone(), reward, self.nu0.clone(), self.gamma)
    }

    /// `E_{s' | s, a}[v(s')]` as an `[s, a]` table.
    pub fn expected_next(&self, v: &[f64]) -> Result<Array2<f64>> {
        if v.len() != self.n_states() {
            return Err(Error::Shape(format!("value has {} entries for {} states", v.len(), self.n_states())));
        }
        let v = ndarray::ArrayView1::from(v);
        let mut out = Array2::zeros((self.n_states(), self.n_actions()));
        for ((s, a), e) in out.indexed_iter_mut() {
            *e = self.transition.slice(ndarray::s![s, a, ..]).dot(&v);
        }
        Ok(out)
    }

    /// `r(s, a) + γ E[v(s')]` for the given reward table.
    pub fn backup(&self, reward: &Array2<f64>, v: &[f64]) -> Result<Array2<f64>> {
        if reward.dim() != self.reward.dim() {
            return Err(Error::Shape("reward table shape does not match the MDP".into()));
        }
        Ok(reward + &(self.expected_next(v)? * self.gamma))
    }

    /// `r(s, a) + γ E[v(s')]` with the MDP's own reward.
    pub fn q_values(&self, v: &[f64]) -> Result<Array2<f64>> {
        self.backup(&self.reward, v)
    }
}

fn check_table(t: &Array2<f64>, mdp: &TabularMdp, what: &str) -> Result<()> {
    if t.dim() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::Shape(format!(
            "{what} has shape {:?}, MDP has ({}, {})",
            t.dim(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// Largest Bellman flow violation
/// `max_s |Σ_a μ(s,a) - (1-γ) ν0(s) - γ Σ_{s',a'} P(s | s',a') μ(s',a')|`.
pub fn validate_flow(mu: &Array2<f64>, mdp: &TabularMdp) -> Result<f64> {
    check_table(mu, mdp, "occupancy")?;
    let n = mdp.n_states();
    let mut inflow = Array1::<f64>::zeros(n);
    for ((sp, ap), &m) in mu.indexed_iter() {
        if m != 0.0 {
            inflow.scaled_add(m, &mdp.transition.slice(ndarray::s![sp, ap, ..]));
        }
    }
    let marginal = mu.sum_axis(Axis(1));
    let mut worst: f64 = 0.0;
    for s in 0..n {
        let r = marginal[s] - (1.0 - mdp.gamma) * mdp.nu0[s] - mdp.gamma * inflow[s];
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Occupancy `μ(s, a) = d(s) π(a|s)` of a stationary policy, where
/// `d = (1-γ) (I - γ P_π^T)^{-1} ν0` is obtained by a dense LU solve.
pub fn occupancy_of_policy(pi: &Array2<f64>, mdp: &TabularMdp) -> Result<Array2<f64>> {
    check_table(pi, mdp, "policy")?;
    for (s, row) in pi.outer_iter().enumerate() {
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (row.sum() - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::InvalidInput(format!("policy row {s} is not a distribution")));
        }
    }
    let n = mdp.n_states();
    let gamma = mdp.gamma;
    // A[s, s'] = δ(s, s') - γ P_π(s | s')
    let mut a = DMatrix::<f64>::identity(n, n);
    for sp in 0..n {
        for ap in 0..mdp.n_actions() {
            let w = pi[[sp, ap]];
            if w == 0.0 {
                continue;
            }
            for s in 0..n {
                a[(s, sp)] -= gamma * w * mdp.transition[[sp, ap, s]];
            }
        }
    }
    let b = DVector::from_iterator(n, mdp.nu0.iter().map(|p| (1.0 - gamma) * p));
    let d = a.lu().solve(&b).ok_or(Error::Singular)?;
    let mut mu = pi.clone();
    for (s, mut row) in mu.outer_iter_mut().enumerate() {
        row *= d[s];
    }
    Ok(mu)
}

/// Output of [`regularized_value_iteration`].
#[derive(Debug, Clone)]
pub struct SoftSolution {
    /// Soft values `V(s)`.
    pub v: Vec<f64>,
    /// `Q(s, a) = r + γ E[V]` for the values that produced `pi`.
    pub q: Array2<f64>,
    /// Regularized greedy policy.
    pub pi: Array2<f64>,
    /// Nonnegativity multipliers of the last backup.
    pub lambdas: Array2<f64>,
    /// Normalizers `ψ_Q(s)` of the last backup.
    pub psi: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm change of each sweep.
    pub deltas: Vec<f64>,
}

/// Values, policy, multipliers and normalizers from one sweep.
type Sweep = (Vec<f64>, Array2<f64>, Array2<f64>, Vec<f64>);

/// One regularized Bellman optimality sweep over all states.
fn soft_backup(q: &Array2<f64>, scheme: &RegScheme) -> Result<Sweep> {
    let (n, m) = q.dim();
    let mut v = vec![0.0; n];
    let mut pi = Array2::zeros((n, m));
    let mut lambdas = Array2::zeros((n, m));
    let mut psi = vec![0.0; n];
    for s in 0..n {
        let row: Vec<f64> = q.row(s).to_vec();
        let sol = solve_simplex_conjugate(&row, &scheme.at(s))?;
        v[s] = sol.value;
        psi[s] = sol.normalizer;
        for a in 0..m {
            pi[[s, a]] = sol.optimizer[a];
            lambdas[[s, a]] = sol.lambdas[a];
        }
    }
    Ok((v, pi, lambdas, psi))
}

/// Iterates `V(s) <- max_π <π, r + γ E[V]> - (1/β) D_α[π0 : π]` from `V = 0`
/// until the sup-norm change is at most `tol`.
///
/// The returned policy, multipliers and normalizers come from the final
/// sweep, i.e. they are greedy with respect to the second-to-last iterate.
pub fn regularized_value_iteration(
    mdp: &TabularMdp,
    scheme: &RegScheme,
    tol: f64,
    max_iters: usize,
) -> Result<SoftSolution> {
    scheme.require_policy("regularized value iteration")?;
    scheme.check_shape((mdp.n_states(), mdp.n_actions()))?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    let mut v = vec![0.0; mdp.n_states()];
    let mut deltas = Vec::new();
    for it in 1..=max_iters {
        let q = mdp.q_values(&v)?;
        let (next, pi, lambdas, psi) = soft_backup(&q, scheme)?;
        let delta = sup_diff(&next, &v);
        deltas.push(delta);
        v = next;
        if delta <= tol {
            return Ok(SoftSolution {
                v,
                q,
                pi,
                lambdas,
                psi,
                iterations: it,
                deltas,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual: deltas.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct HardSolution {
    pub v: Vec<f64>,
    pub q: Array2<f64>,
    /// Deterministic greedy policy (ties to the lowest action index).
    pub pi: Array2<f64>,
    pub iterations: usize,
}

/// Unregularized value iteration `V(s) <- max_a r + γ E[V]`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<HardSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    let mut v = vec![0.0; mdp.n_states()];
    let mut last = f64::INFINITY;
    for it in 1..=max_iters {
        let q = mdp.q_values(&v)?;
        let next: Vec<f64> = q
            .outer_iter()
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        last = sup_diff(&next, &v);
        v = next;
        if last <= tol {
            let pi = greedy_policy(&q);
            return Ok(HardSolution {
                v,
                q,
                pi,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual: last,
    })
}

/// One-hot argmax policy of a Q table, ties to the lowest index.
pub fn greedy_policy(q: &Array2<f64>) -> Array2<f64> {
    let mut pi = Array2::zeros(q.dim());
    for (s, row) in q.outer_iter().enumerate() {
        let mut best = 0;
        for (a, x) in row.iter().enumerate() {
            if *x > row[best] {
                best = a;
            }
        }
        pi[[s, best]] = 1.0;
    }
    pi
}

/// Expected discounted return `V^π` of a policy under the unregularized reward.
pub fn policy_value(pi: &Array2<f64>, mdp: &TabularMdp) -> Result<Vec<f64>> {
    check_table(pi, mdp, "policy")?;
    let n = mdp.n_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        for act in 0..mdp.n_actions() {
            let w = pi[[s, act]];
            b[s] += w * mdp.reward[[s, act]];
            for sp in 0..n {
                a[(s, sp)] -= mdp.gamma * w * mdp.transition[[s, act, sp]];
            }
        }
    }
    let v = a.lu().solve(&b).ok_or(Error::Singular)?;
    Ok(v.iter().copied().collect())
}

fn sup_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
