//! Exact tabular machinery on small enumerable instances: value iteration
//! for ground-truth optimal values, the one-sample Q-learning update, and
//! exact policy evaluation.
//!
//! Values follow the normalized Bellman form `Q = (1-gamma)*u + gamma*E[V']`,
//! so every value lives on the same scale as the immediate utility.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TabularError {
    #[error("kernel row for state {state}, action {action} sums to {sum}, not 1")]
    NonStochastic { state: usize, action: usize, sum: f64 },
    #[error("state {0} has no feasible action")]
    DeadState(usize),
    #[error("value iteration did not reach tolerance {tol} in {sweeps} sweeps")]
    NoConvergence { tol: f64, sweeps: usize },
}

/// A finite MDP with per-state feasible action subsets. Infeasible
/// state-action pairs simply have an empty kernel row.
#[derive(Debug, Clone)]
pub struct MicroMdp {
    num_states: usize,
    num_actions: usize,
    /// `kernel[s * num_actions + a]` lists `(next_state, probability)`.
    kernel: Vec<Vec<(u32, f64)>>,
    /// Immediate utility of each state-action pair.
    utility: Vec<f64>,
    pub gamma: f64,
}

impl MicroMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        kernel: Vec<Vec<(u32, f64)>>,
        utility: Vec<f64>,
        gamma: f64,
    ) -> Result<Self, TabularError> {
        assert_eq!(kernel.len(), num_states * num_actions);
        assert_eq!(utility.len(), num_states * num_actions);
        assert!((0.0..1.0).contains(&gamma));
        let mdp = MicroMdp { num_states, num_actions, kernel, utility, gamma };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<(), TabularError> {
        for s in 0..self.num_states {
            let mut any = false;
            for a in 0..self.num_actions {
                let row = &self.kernel[s * self.num_actions + a];
                if row.is_empty() {
                    continue;
                }
                any = true;
                let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(TabularError::NonStochastic { state: s, action: a, sum });
                }
            }
            if !any {
                return Err(TabularError::DeadState(s));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn is_feasible(&self, s: usize, a: usize) -> bool {
        !self.kernel[s * self.num_actions + a].is_empty()
    }

    pub fn feasible_of(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_actions).filter(move |&a| self.is_feasible(s, a))
    }

    pub fn transitions(&self, s: usize, a: usize) -> &[(u32, f64)] {
        &self.kernel[s * self.num_actions + a]
    }

    pub fn utility_of(&self, s: usize, a: usize) -> f64 {
        self.utility[s * self.num_actions + a]
    }
}

/// Action-value table over an enumerated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub values: Vec<f64>,
    num_actions: usize,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable { values: vec![0.0; num_states * num_actions], num_actions }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    /// Highest value over the feasible actions of `s`.
    pub fn max_feasible(&self, m: &MicroMdp, s: usize) -> f64 {
        m.feasible_of(s)
            .map(|a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Feasible action with the highest value; ties break to the lowest
    /// index.
    pub fn greedy_action(&self, m: &MicroMdp, s: usize) -> usize {
        let mut best = usize::MAX;
        let mut best_v = f64::NEG_INFINITY;
        for a in m.feasible_of(s) {
            let v = self.get(s, a);
            if v > best_v {
                best_v = v;
                best = a;
            }
        }
        best
    }

    /// Sup-norm distance over feasible pairs.
    pub fn sup_distance(&self, other: &QTable, m: &MicroMdp) -> f64 {
        let mut d = 0.0f64;
        for s in 0..m.num_states() {
            for a in m.feasible_of(s) {
                d = d.max((self.get(s, a) - other.get(s, a)).abs());
            }
        }
        d
    }
}

/// Result of exact value iteration.
#[derive(Debug, Clone)]
pub struct ViSolution {
    pub q: QTable,
    pub v: Vec<f64>,
    pub sweeps: usize,
    pub final_delta: f64,
}

/// Iterates the Bellman optimality operator
/// `Q <- (1-gamma)*u + gamma * sum_p P * max_a' Q'` until the sup-norm
/// change drops below `tol`. Each sweep must contract by at least `gamma`.
pub fn value_iteration(m: &MicroMdp, tol: f64, max_sweeps: usize) -> Result<ViSolution, TabularError> {
    assert!(tol > 0.0);
    let (ns, na) = (m.num_states(), m.num_actions());
    let mut q = QTable::zeros(ns, na);
    let mut v = vec![0.0f64; ns];
    let mut prev_delta = f64::INFINITY;
    for sweep in 0..max_sweeps {
        let mut delta = 0.0f64;
        let mut next_q = q.clone();
        for s in 0..ns {
            for a in m.feasible_of(s) {
                let mut exp_next = 0.0;
                for &(sp, p) in m.transitions(s, a) {
                    exp_next += p * v[sp as usize];
                }
                let new = (1.0 - m.gamma) * m.utility_of(s, a) + m.gamma * exp_next;
                delta = delta.max((new - q.get(s, a)).abs());
                next_q.set(s, a, new);
            }
        }
        q = next_q;
        for s in 0..ns {
            v[s] = q.max_feasible(m, s);
        }
        // Contraction of the Bellman operator, allowing float slack.
        debug_assert!(
            prev_delta.is_infinite() || delta <= m.gamma * prev_delta + 1e-12,
            "sweep {sweep}: delta {delta} vs gamma * {prev_delta}"
        );
        prev_delta = delta;
        if delta < tol {
            return Ok(ViSolution { q, v, sweeps: sweep + 1, final_delta: delta });
        }
    }
    Err(TabularError::NoConvergence { tol, sweeps: max_sweeps })
}

/// One observed transition for the Q-learning rule.
#[derive(Debug, Clone, Copy)]
pub struct TabTransition {
    pub state: usize,
    pub action: usize,
    pub utility: f64,
    pub next_state: usize,
}

/// The one-sample update
/// `Q(s,a) <- (1-alpha)*Q(s,a) + alpha*((1-gamma)*u + gamma*max_a' Q(s',a'))`.
/// All other entries are untouched.
pub fn q_learning_update(q: &mut QTable, m: &MicroMdp, t: TabTransition, alpha: f64, gamma: f64) {
    debug_assert!((0.0..1.0).contains(&alpha) || alpha == 1.0);
    let target = (1.0 - gamma) * t.utility + gamma * q.max_feasible(m, t.next_state);
    let old = q.get(t.state, t.action);
    q.set(t.state, t.action, (1.0 - alpha) * old + alpha * target);
}

/// Exact evaluation of a deterministic policy: solves
/// `V = (1-gamma)*u_pi + gamma*P_pi*V` iteratively to `tol`.
pub fn evaluate_policy(m: &MicroMdp, policy: &[usize], tol: f64) -> Vec<f64> {
    assert_eq!(policy.len(), m.num_states());
    for (s, &a) in policy.iter().enumerate() {
        assert!(m.is_feasible(s, a), "policy picks infeasible action {a} in state {s}");
    }
    let ns = m.num_states();
    let mut v = vec![0.0f64; ns];
    loop {
        let mut delta = 0.0f64;
        let mut next = vec![0.0f64; ns];
        for s in 0..ns {
            let a = policy[s];
            let mut exp_next = 0.0;
            for &(sp, p) in m.transitions(s, a) {
                exp_next += p * v[sp as usize];
            }
            next[s] = (1.0 - m.gamma) * m.utility_of(s, a) + m.gamma * exp_next;
            delta = delta.max((next[s] - v[s]).abs());
        }
        v = next;
        if delta < tol {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Three-state chain: action 0 stays (low utility), action 1 advances
    /// (higher utility further along); state 2 loops back to 0 with
    /// probability 0.3.
    fn chain(gamma: f64) -> MicroMdp {
        let kernel = vec![
            vec![(0, 1.0)],             // s0, stay
            vec![(1, 1.0)],             // s0, advance
            vec![(1, 1.0)],             // s1, stay
            vec![(2, 1.0)],             // s1, advance
            vec![(2, 1.0)],             // s2, stay
            vec![(0, 0.3), (2, 0.7)],   // s2, advance
        ];
        let utility = vec![0.1, 0.2, 0.4, 0.5, 1.0, 0.9];
        MicroMdp::new(3, 2, kernel, utility, gamma).unwrap()
    }

    #[test]
    fn myopic_limit_returns_utilities_in_one_sweep() {
        let m = chain(0.0);
        let sol = value_iteration(&m, 1e-12, 10).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert!((sol.q.get(s, a) - m.utility_of(s, a)).abs() < 1e-12);
            }
        }
        assert!(sol.sweeps <= 2);
    }

    #[test]
    fn single_state_single_action_value_equals_utility() {
        // The (1-gamma) normalization makes the geometric series sum to u.
        let m = MicroMdp::new(1, 1, vec![vec![(0, 1.0)]], vec![2.5], 0.9).unwrap();
        let sol = value_iteration(&m, 1e-12, 10_000).unwrap();
        assert!((sol.v[0] - 2.5).abs() < 1e-10);
    }

    /// Independent oracle: enumerate every deterministic policy and evaluate
    /// each one by solving its linear system with dense Gaussian
    /// elimination.
    fn brute_force_optimal(m: &MicroMdp) -> Vec<f64> {
        let ns = m.num_states();
        let feasible: Vec<Vec<usize>> = (0..ns).map(|s| m.feasible_of(s).collect()).collect();
        let mut policy = vec![0usize; ns];
        let mut best = vec![f64::NEG_INFINITY; ns];
        enumerate(m, &feasible, &mut policy, 0, &mut best);
        best
    }

    fn enumerate(m: &MicroMdp, feasible: &[Vec<usize>], policy: &mut [usize], s: usize, best: &mut [f64]) {
        if s == policy.len() {
            let v = solve_linear(m, policy);
            for i in 0..v.len() {
                if v[i] > best[i] {
                    best[i] = v[i];
                }
            }
            return;
        }
        for &a in &feasible[s] {
            policy[s] = a;
            enumerate(m, feasible, policy, s + 1, best);
        }
    }

    /// Solves (I - gamma*P_pi) V = (1-gamma) u_pi directly.
    fn solve_linear(m: &MicroMdp, policy: &[usize]) -> Vec<f64> {
        let n = m.num_states();
        let mut a = vec![vec![0.0f64; n + 1]; n];
        for s in 0..n {
            a[s][s] = 1.0;
            for &(sp, p) in m.transitions(s, policy[s]) {
                a[s][sp as usize] -= m.gamma * p;
            }
            a[s][n] = (1.0 - m.gamma) * m.utility_of(s, policy[s]);
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, pivot);
            let div = a[col][col];
            for j in col..=n {
                a[col][j] /= div;
            }
            for row in 0..n {
                if row != col && a[row][col] != 0.0 {
                    let f = a[row][col];
                    for j in col..=n {
                        a[row][j] -= f * a[col][j];
                    }
                }
            }
        }
        (0..n).map(|s| a[s][n]).collect()
    }

    #[test]
    fn chain_values_match_brute_force_policy_enumeration() {
        let m = chain(0.9);
        let sol = value_iteration(&m, 1e-12, 100_000).unwrap();
        let oracle = brute_force_optimal(&m);
        for s in 0..3 {
            assert!(
                (sol.v[s] - oracle[s]).abs() < 1e-9,
                "state {s}: vi {} vs brute force {}",
                sol.v[s],
                oracle[s]
            );
        }
    }

    #[test]
    fn fixed_point_residual_is_small_everywhere() {
        let m = chain(0.9);
        let sol = value_iteration(&m, 1e-13, 100_000).unwrap();
        for s in 0..3 {
            for a in m.feasible_of(s) {
                let mut exp_next = 0.0;
                for &(sp, p) in m.transitions(s, a) {
                    exp_next += p * sol.v[sp as usize];
                }
                let rhs = (1.0 - m.gamma) * m.utility_of(s, a) + m.gamma * exp_next;
                assert!((sol.q.get(s, a) - rhs).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn q_update_alpha_zero_is_identity() {
        let m = chain(0.9);
        let mut q = QTable::zeros(3, 2);
        q.set(1, 1, 0.7);
        let before = q.clone();
        q_learning_update(
            &mut q,
            &m,
            TabTransition { state: 1, action: 1, utility: 0.5, next_state: 2 },
            0.0,
            0.9,
        );
        assert_eq!(q, before);
    }

    #[test]
    fn q_update_full_overwrite_myopic() {
        let m = chain(0.9);
        let mut q = QTable::zeros(3, 2);
        q_learning_update(
            &mut q,
            &m,
            TabTransition { state: 0, action: 1, utility: 0.2, next_state: 1 },
            1.0,
            0.0,
        );
        assert!((q.get(0, 1) - 0.2).abs() < 1e-15);
        // Everything else untouched.
        assert_eq!(q.get(0, 0), 0.0);
        assert_eq!(q.get(1, 1), 0.0);
    }

    #[test]
    fn q_learning_converges_to_value_iteration_on_the_chain() {
        // Visit-count learning rates shrink as 1/n, so the contraction to
        // the fixed point goes as n^(gamma-1); a moderate discount keeps the
        // run short. Short episodes with uniformly random starting pairs
        // keep every pair visited at a healthy rate.
        let m = chain(0.5);
        let sol = value_iteration(&m, 1e-12, 100_000).unwrap();
        let mut q = QTable::zeros(3, 2);
        let mut visits = vec![0u32; 6];
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let mut s = 0usize;
        for step in 0..2_000_000u64 {
            let a = if step % 20 == 0 {
                // Exploring start: new episode from a random pair.
                s = rng.gen_range(0..3);
                let feas: Vec<usize> = m.feasible_of(s).collect();
                feas[rng.gen_range(0..feas.len())]
            } else if rng.gen::<f64>() < 0.1 {
                let feas: Vec<usize> = m.feasible_of(s).collect();
                feas[rng.gen_range(0..feas.len())]
            } else {
                q.greedy_action(&m, s)
            };
            // Sample the kernel.
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            let mut next = s;
            for &(sp, p) in m.transitions(s, a) {
                acc += p;
                if r < acc {
                    next = sp as usize;
                    break;
                }
            }
            visits[s * 2 + a] += 1;
            let alpha = 1.0 / visits[s * 2 + a] as f64;
            q_learning_update(
                &mut q,
                &m,
                TabTransition { state: s, action: a, utility: m.utility_of(s, a), next_state: next },
                alpha,
                m.gamma,
            );
            s = next;
        }
        assert!(
            q.sup_distance(&sol.q, &m) < 1e-2,
            "sup distance {}",
            q.sup_distance(&sol.q, &m)
        );
    }

    #[test]
    fn evaluate_optimal_policy_recovers_optimal_values() {
        let m = chain(0.9);
        let sol = value_iteration(&m, 1e-13, 100_000).unwrap();
        let policy: Vec<usize> = (0..3).map(|s| sol.q.greedy_action(&m, s)).collect();
        let v = evaluate_policy(&m, &policy, 1e-13);
        for s in 0..3 {
            assert!((v[s] - sol.v[s]).abs() < 1e-10);
        }
    }

    #[test]
    fn evaluate_policy_myopic_limit() {
        let m = chain(0.0);
        let policy = vec![1usize, 0, 1];
        let v = evaluate_policy(&m, &policy, 1e-13);
        for s in 0..3 {
            assert!((v[s] - m.utility_of(s, policy[s])).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_policy_matches_monte_carlo_rollout() {
        let m = chain(0.9);
        let policy = vec![0usize, 1, 1];
        let exact = evaluate_policy(&m, &policy, 1e-13);
        // Monte-Carlo oracle: truncated discounted returns from state 0.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let episodes = 4000;
        let horizon = 300; // gamma^300 is ~1e-14
        let mut returns = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let mut s = 0usize;
            let mut g = 0.0;
            let mut w = 1.0 - m.gamma;
            for _ in 0..horizon {
                let a = policy[s];
                g += w * m.utility_of(s, a);
                w *= m.gamma;
                let r: f64 = rng.gen();
                let mut acc = 0.0;
                for &(sp, p) in m.transitions(s, a) {
                    acc += p;
                    if r < acc {
                        s = sp as usize;
                        break;
                    }
                }
            }
            returns.push(g);
        }
        let mean: f64 = returns.iter().sum::<f64>() / episodes as f64;
        let var: f64 =
            returns.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (episodes - 1) as f64;
        let se = (var / episodes as f64).sqrt();
        assert!(
            (mean - exact[0]).abs() < 3.0 * se.max(1e-6),
            "mc {mean} vs exact {} (se {se})",
            exact[0]
        );
    }

    #[test]
    fn bad_kernel_is_rejected() {
        let err = MicroMdp::new(1, 1, vec![vec![(0, 0.5)]], vec![1.0], 0.9).unwrap_err();
        assert!(matches!(err, TabularError::NonStochastic { .. }));
    }

    #[test]
    fn q_values_stay_within_utility_bounds() {
        // With utilities in (0, u_max], normalized values stay in (0, u_max].
        let m = chain(0.95);
        let sol = value_iteration(&m, 1e-12, 100_000).unwrap();
        for s in 0..3 {
            for a in m.feasible_of(s) {
                let q = sol.q.get(s, a);
                assert!(q > 0.0 && q <= 1.0 + 1e-12);
            }
        }
    }
}
