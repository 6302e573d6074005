//! Brute-force and dynamic-programming references.
//!
//! Everything here evaluates the spec fields directly; nothing is shared with
//! the network builders. Costs are energies to minimize: maximization
//! families report the negated objective, and constraint-only families cost 0
//! on every feasible point.

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::problems::*;

/// Outcome of evaluating one assignment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub feasible: bool,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// Minimum cost over feasible points; `None` when nothing is feasible.
    pub best_cost: Option<f64>,
    /// Every feasible point attaining `best_cost`, in lexicographic order.
    pub argmin: Vec<Vec<usize>>,
    pub feasible_count: u128,
    pub evaluations: u128,
}

impl OracleResult {
    pub fn is_feasible(&self) -> bool {
        self.best_cost.is_some()
    }
}

fn infeasible() -> Evaluation {
    Evaluation {
        feasible: false,
        cost: f64::INFINITY,
    }
}

fn ok(cost: f64) -> Evaluation {
    Evaluation {
        feasible: true,
        cost,
    }
}

fn check(feasible: bool, cost: f64) -> Evaluation {
    if feasible {
        ok(cost)
    } else {
        infeasible()
    }
}

fn quadratic(q: &[Vec<f64>], x: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..q.len() {
        for j in 0..=i {
            total += q[i][j] * (x[i] * x[j]) as f64;
        }
    }
    total
}

fn higher(terms: &[HigherTerm], dims: &[usize], x: &[usize]) -> f64 {
    let mut total = 0.0;
    for t in terms {
        if let Some(c) = t.coef {
            total += c * t.vars.iter().map(|&v| x[v] as f64).product::<f64>();
        } else if let Some(table) = &t.table {
            let mut flat = 0;
            for &v in &t.vars {
                flat = flat * dims[v] + x[v];
            }
            total += table[flat];
        }
    }
    total
}

fn rows_hold(a: &[Vec<i64>], b: &[i64], x: &[usize], exact: bool) -> bool {
    a.iter().zip(b).all(|(row, &bi)| {
        let lhs: i64 = row.iter().zip(x).map(|(&aij, &xj)| aij * xj as i64).sum();
        if exact {
            lhs == bi
        } else {
            lhs <= bi
        }
    })
}

fn bits_value(bits: &[usize]) -> u64 {
    bits.iter().enumerate().map(|(k, &b)| (b as u64) << k).sum()
}

/// Whether some walk of `steps` positions from `source` to `sink` has total
/// cost exactly `target`.
fn path_with_cost(s: &ShortestPath, target: f64) -> bool {
    fn walk(s: &ShortestPath, t: usize, at: usize, acc: f64, target: f64) -> bool {
        if t + 1 == s.steps {
            return at == s.sink && acc == target;
        }
        if acc > target {
            return false;
        }
        (0..s.vertices).any(|next| match s.edge_cost(t, at, next) {
            Some(c) => walk(s, t + 1, next, acc + c, target),
            None => false,
        })
    }
    walk(s, 0, s.source, 0.0, target)
}

/// Evaluates constraints and cost of one assignment.
pub fn verify(spec: &ProblemSpec, x: &[usize]) -> Result<Evaluation> {
    let dims = spec.variable_dims();
    if x.len() != dims.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            got: x.len(),
        });
    }
    for (k, (&v, &d)) in x.iter().zip(&dims).enumerate() {
        if v >= d {
            return Err(Error::IndexOutOfBounds {
                index: vec![k, v],
                dims: dims.clone(),
            });
        }
    }
    Ok(match spec {
        ProblemSpec::Qubo(s) => ok(quadratic(&s.q, x)),
        ProblemSpec::Qudo(s) => ok(quadratic(&s.q, x)),
        ProblemSpec::Tqudo(s) => ok(s.terms.iter().map(|t| t.table[x[t.i]][x[t.j]]).sum()),
        ProblemSpec::Hobo(s) => ok(higher(&s.terms, &s.dims, x)),
        ProblemSpec::SumFunction(s) => {
            let z: i64 = s
                .weights
                .iter()
                .zip(x)
                .map(|(w, &v)| match w {
                    Profile::Linear(a) => a * v as i64,
                    Profile::Table(t) => t[v],
                })
                .sum();
            match s.f.eval(z) {
                Some(c) => ok(c),
                None => infeasible(),
            }
        }
        ProblemSpec::Nested(s) => {
            let mut q = s.first[x[0]];
            let mut valid = true;
            for (k, table) in s.tables.iter().enumerate() {
                let idx = q - s.q_offset;
                match usize::try_from(idx)
                    .ok()
                    .and_then(|i| table[x[k + 1]].get(i))
                {
                    Some(&v) => q = v,
                    None => {
                        valid = false;
                        break;
                    }
                }
            }
            check(valid, q as f64)
        }
        ProblemSpec::AdditionInv(s) => {
            let a: Vec<usize> = x.iter().step_by(2).copied().collect();
            let b: Vec<usize> = x.iter().skip(1).step_by(2).copied().collect();
            check(bits_value(&a) + bits_value(&b) == s.c, 0.0)
        }
        ProblemSpec::MultiplicationInv(s) => {
            let a = bits_value(&x[..s.bits_a]);
            let b = bits_value(&x[s.bits_a..]);
            check(a * b == s.c, 0.0)
        }
        ProblemSpec::LinearSystem(s) => check(rows_hold(&s.a, &s.b, x, true), 0.0),
        ProblemSpec::SingleOne(_) => check(x.iter().filter(|&&v| v == 1).count() == 1, 0.0),
        ProblemSpec::Partition(s) => {
            let (mut left, mut right) = (0i64, 0i64);
            for (&v, &a) in x.iter().zip(&s.s) {
                if v == 0 {
                    left += a;
                } else {
                    right += a;
                }
            }
            check(left == right, 0.0)
        }
        ProblemSpec::Coloring(s) => {
            let proper = s.edges.iter().all(|&[u, v]| x[u] != x[v]);
            let mut cost = 0.0;
            for (v, &c) in x.iter().enumerate() {
                if s.minimize_colors {
                    cost += c as f64;
                }
                if let Some(q) = &s.vertex_costs {
                    cost += q[v][c];
                }
            }
            check(proper, cost)
        }
        ProblemSpec::ShortestPathCost(s) => {
            let c = x[0] as f64;
            check(path_with_cost(s, c), c)
        }
        ProblemSpec::ShortestPathRoute(s) => {
            let mut cost = 0.0;
            let mut valid = x[0] == s.source && x[s.steps - 1] == s.sink;
            for t in 0..s.steps - 1 {
                match s.edge_cost(t, x[t], x[t + 1]) {
                    Some(c) => cost += c,
                    None => valid = false,
                }
            }
            check(valid, cost)
        }
        ProblemSpec::Tsp(s) => {
            let v = s.costs.len();
            let mut tour: Vec<usize> = x.to_vec();
            tour.push(v - 1);
            let mut seen = vec![false; v];
            let mut valid = true;
            for &c in &tour {
                if seen[c] {
                    valid = false;
                }
                seen[c] = true;
            }
            let mut cost = 0.0;
            for k in 0..v {
                let (from, to) = (tour[k], tour[(k + 1) % v]);
                match s.costs[from][to] {
                    Some(c) if from != to => cost += c,
                    _ => valid = false,
                }
            }
            check(valid, cost)
        }
        ProblemSpec::Knapsack(s) => {
            let mut w = 0i64;
            let mut value = 0.0;
            for (i, &n) in x.iter().enumerate() {
                w += match &s.weights[i] {
                    Profile::Linear(a) => a * n as i64,
                    Profile::Table(t) => t[n],
                };
                value += match &s.values[i] {
                    Profile::Linear(a) => a * n as f64,
                    Profile::Table(t) => t[n],
                };
            }
            check(s.admits(w), -value)
        }
        ProblemSpec::Ilp(s) => {
            let value: f64 = s.c.iter().zip(x).map(|(c, &v)| c * v as f64).sum();
            check(rows_hold(&s.a, &s.b, x, false), -value)
        }
        ProblemSpec::Iqp(s) => {
            let cost =
                quadratic(&s.q, x) + s.c.iter().zip(x).map(|(c, &v)| c * v as f64).sum::<f64>();
            check(rows_hold(&s.a, &s.b, x, false), cost)
        }
        ProblemSpec::Ipp(s) => check(
            rows_hold(&s.a, &s.b, x, false),
            higher(&s.terms, &s.dims, x),
        ),
        ProblemSpec::Mis(g) => {
            let independent = g.edges.iter().all(|&[u, v]| !(x[u] == 1 && x[v] == 1));
            check(independent, -(x.iter().sum::<usize>() as f64))
        }
        ProblemSpec::VertexCover(g) => {
            let covers = g.edges.iter().all(|&[u, v]| x[u] == 1 || x[v] == 1);
            check(covers, x.iter().sum::<usize>() as f64)
        }
        ProblemSpec::DominatingSet(s) => {
            let mut dominated: Vec<bool> = x.iter().map(|&v| v == 1).collect();
            for &[u, v] in &s.edges {
                if x[u] == 1 {
                    dominated[v] = true;
                }
                if x[v] == 1 {
                    dominated[u] = true;
                }
            }
            let cost = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v as f64 * s.costs.as_ref().map_or(1.0, |c| c[i]))
                .sum();
            check(dominated.iter().all(|&d| d), cost)
        }
        ProblemSpec::Assignment(s) => {
            let mut used = vec![false; s.tasks() + 1];
            let mut valid = true;
            let mut cost = 0.0;
            for (i, &task) in x.iter().enumerate() {
                cost += s.costs[i][task];
                if task != 0 {
                    if used[task] {
                        valid = false;
                    }
                    used[task] = true;
                    cost -= s.lambda();
                }
            }
            check(valid, cost)
        }
    })
}

const ENUMERATION_CHUNK: usize = 4096;

fn decode(mut flat: u128, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = (flat % d as u128) as usize;
        flat /= d as u128;
    }
}

/// Exhaustive evaluation of every combination, refusing when the state
/// space exceeds `limit`.
pub fn enumerate(spec: &ProblemSpec, limit: u128) -> Result<OracleResult> {
    enumerate_with(spec, limit, Exec::default())
}

pub fn enumerate_with(spec: &ProblemSpec, limit: u128, exec: Exec) -> Result<OracleResult> {
    let states = spec.state_count();
    if states > limit {
        return Err(Error::BudgetExceeded {
            states,
            budget: limit,
        });
    }
    let dims = spec.variable_dims();
    let n = states as usize;
    // Per chunk: (best cost, argmin within chunk, feasible count).
    let parts = par::map_range(n, ENUMERATION_CHUNK, exec, |range| {
        let mut x = vec![0usize; dims.len()];
        let mut best: Option<f64> = None;
        let mut arg: Vec<Vec<usize>> = Vec::new();
        let mut count = 0u128;
        for flat in range {
            decode(flat as u128, &dims, &mut x);
            let e = verify(spec, &x).expect("enumerated assignments are in range");
            if !e.feasible {
                continue;
            }
            count += 1;
            match best {
                Some(b) if e.cost > b => {}
                Some(b) if e.cost == b => arg.push(x.clone()),
                _ => {
                    best = Some(e.cost);
                    arg = vec![x.clone()];
                }
            }
        }
        vec![(best, arg, count)]
    });
    let mut result = OracleResult {
        best_cost: None,
        argmin: Vec::new(),
        feasible_count: 0,
        evaluations: states,
    };
    for (best, arg, count) in parts {
        result.feasible_count += count;
        let Some(b) = best else { continue };
        match result.best_cost {
            Some(cur) if b > cur => {}
            Some(cur) if b == cur => result.argmin.extend(arg),
            _ => {
                result.best_cost = Some(b);
                result.argmin = arg;
            }
        }
    }
    Ok(result)
}

/// Bounded knapsack by dynamic programming over the exact total weight.
/// Returns the best cost (negated value) and one optimal selection.
pub fn knapsack_dp(spec: &ProblemSpec) -> Result<OracleResult> {
    let ProblemSpec::Knapsack(s) = spec else {
        return Err(Error::spec("family", "knapsack_dp needs a knapsack spec"));
    };
    let caps = s.item_caps();
    let items = caps.len();
    let tables: Vec<(Vec<i64>, Vec<f64>)> = (0..items)
        .map(|i| {
            let w = match &s.weights[i] {
                Profile::Linear(a) => (0..=caps[i] as i64).map(|n| a * n).collect(),
                Profile::Table(t) => t.clone(),
            };
            let v = match &s.values[i] {
                Profile::Linear(a) => (0..=caps[i]).map(|n| a * n as f64).collect(),
                Profile::Table(t) => t.clone(),
            };
            (w, v)
        })
        .collect();
    let total_max: i64 = tables.iter().map(|(w, _)| *w.iter().max().unwrap()).sum();
    let width = total_max as usize + 1;
    // best[i][w]: max value using items 0..i with total weight exactly w.
    let mut best = vec![vec![None::<f64>; width]; items + 1];
    let mut choice = vec![vec![0usize; width]; items + 1];
    best[0][0] = Some(0.0);
    let mut evaluations = 0u128;
    for i in 0..items {
        let (w, v) = &tables[i];
        for total in 0..width {
            let Some(base) = best[i][total] else { continue };
            for n in 0..=caps[i] {
                evaluations += 1;
                let t = total + w[n] as usize;
                let cand = base + v[n];
                if best[i + 1][t].map_or(true, |cur| cand > cur) {
                    best[i + 1][t] = Some(cand);
                    choice[i + 1][t] = n;
                }
            }
        }
    }
    let mut winner: Option<(f64, usize)> = None;
    for total in 0..width {
        if let Some(v) = best[items][total] {
            if s.admits(total as i64) && winner.map_or(true, |(b, _)| v > b) {
                winner = Some((v, total));
            }
        }
    }
    let Some((value, mut total)) = winner else {
        return Ok(OracleResult {
            best_cost: None,
            argmin: Vec::new(),
            feasible_count: 0,
            evaluations,
        });
    };
    let mut x = vec![0usize; items];
    for i in (0..items).rev() {
        let n = choice[i + 1][total];
        x[i] = n;
        total -= tables[i].0[n] as usize;
    }
    Ok(OracleResult {
        best_cost: Some(-value),
        argmin: vec![x],
        feasible_count: 0,
        evaluations,
    })
}
