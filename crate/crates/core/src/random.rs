//! Seeded random instances for every family, sized by a state budget.
//!
//! Costs are small integers so that exhaustive references can compare
//! costs exactly.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::problems::*;

/// Generator keys. The three knapsack variants have separate keys.
pub const FAMILIES: &[&str] = &[
    "qubo",
    "qudo",
    "tqudo",
    "hobo",
    "sum_function",
    "nested",
    "addition_inv",
    "multiplication_inv",
    "linear_system",
    "single_one",
    "partition",
    "coloring",
    "shortest_path_cost",
    "shortest_path_route",
    "tsp",
    "knapsack",
    "knapsack_nonlinear",
    "knapsack_polynomial",
    "ilp",
    "iqp",
    "ipp",
    "mis",
    "vertex_cover",
    "dominating_set",
    "assignment",
];

/// A random normalized instance of `family` with at most `max_states`
/// combinations (and at least 4).
pub fn instance<R: Rng>(family: &str, rng: &mut R, max_states: u128) -> Result<ProblemSpec> {
    let budget = max_states.max(4);
    // Rejection keeps the generators simple; sizes are drawn so that most
    // draws fit.
    for _ in 0..1000 {
        let spec = draw(family, rng, budget)?.normalize()?;
        if spec.state_count() <= budget {
            return Ok(spec);
        }
    }
    Err(Error::Config(format!(
        "no `{family}` instance fits {budget} states"
    )))
}

fn ints<R: Rng>(rng: &mut R, n: usize, lo: i64, hi: i64) -> Vec<i64> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

fn reals<R: Rng>(rng: &mut R, n: usize, lo: i64, hi: i64) -> Vec<f64> {
    ints(rng, n, lo, hi).into_iter().map(|v| v as f64).collect()
}

/// Largest `n` with `base^n <= budget`, at most `cap`.
fn max_len(base: usize, budget: u128, cap: usize) -> usize {
    let mut n = 0;
    let mut states = 1u128;
    while n < cap && states * base as u128 <= budget {
        states *= base as u128;
        n += 1;
    }
    n
}

fn size<R: Rng>(rng: &mut R, lo: usize, base: usize, budget: u128, cap: usize) -> usize {
    let hi = max_len(base, budget, cap).max(lo);
    rng.gen_range(lo..=hi)
}

fn lower_triangle<R: Rng>(rng: &mut R, n: usize, lo: i64, hi: i64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j <= i {
                        rng.gen_range(lo..=hi) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<[usize; 2]> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push([i, j]);
            }
        }
    }
    edges
}

fn dims<R: Rng>(rng: &mut R, n: usize, lo: usize, hi: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

fn higher_terms<R: Rng>(rng: &mut R, dims: &[usize]) -> Vec<HigherTerm> {
    let n = dims.len();
    let vars: Vec<usize> = (0..n).collect();
    let mut terms = Vec::new();
    for _ in 0..rng.gen_range(n..=2 * n) {
        let order = rng.gen_range(1..=3.min(n));
        let mut chosen: Vec<usize> = vars.choose_multiple(rng, order).copied().collect();
        chosen.shuffle(rng);
        terms.push(HigherTerm {
            vars: chosen,
            coef: Some(rng.gen_range(-5..=5) as f64),
            table: None,
        });
    }
    if n >= 2 && rng.gen_bool(0.5) {
        let pair: Vec<usize> = vars.choose_multiple(rng, 2).copied().collect();
        let len = dims[pair[0]] * dims[pair[1]];
        terms.push(HigherTerm {
            vars: pair,
            coef: None,
            table: Some(reals(rng, len, -4, 4)),
        });
    }
    terms
}

/// Nonnegative constraint rows with right-hand sides inside the reachable
/// range, so that both tight and loose rows occur.
fn rows<R: Rng>(rng: &mut R, dims: &[usize]) -> (Vec<Vec<i64>>, Vec<i64>) {
    let m = rng.gen_range(1..=2);
    let a: Vec<Vec<i64>> = (0..m).map(|_| ints(rng, dims.len(), 0, 3)).collect();
    let b = a
        .iter()
        .map(|row| {
            let top: i64 = row
                .iter()
                .zip(dims)
                .map(|(&c, &d)| c * (d as i64 - 1))
                .sum();
            rng.gen_range(0..=top)
        })
        .collect();
    (a, b)
}

fn shortest_path<R: Rng>(rng: &mut R, budget: u128) -> ShortestPath {
    let vertices = rng.gen_range(2..=4);
    let steps = size(rng, 2, vertices, budget, 5);
    let costs = (0..vertices)
        .map(|i| {
            (0..vertices)
                .map(|j| {
                    if i == j {
                        Some(0.0)
                    } else {
                        rng.gen_bool(0.7).then(|| rng.gen_range(1..=5) as f64)
                    }
                })
                .collect()
        })
        .collect();
    ShortestPath {
        vertices,
        costs: StepCosts::Static(costs),
        source: rng.gen_range(0..vertices),
        sink: rng.gen_range(0..vertices),
        steps,
    }
}

fn draw<R: Rng>(family: &str, rng: &mut R, budget: u128) -> Result<ProblemSpec> {
    Ok(match family {
        "qubo" => {
            let n = size(rng, 2, 2, budget, 12);
            ProblemSpec::Qubo(Qubo {
                q: lower_triangle(rng, n, -5, 5),
            })
        }
        "qudo" => {
            let n = size(rng, 2, 3, budget, 6);
            ProblemSpec::Qudo(Qudo {
                q: lower_triangle(rng, n, -4, 4),
                dims: dims(rng, n, 2, 4),
            })
        }
        "tqudo" => {
            let n = size(rng, 2, 3, budget, 6);
            let dims = dims(rng, n, 2, 4);
            let mut terms = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if terms.is_empty() && i + 2 == n || rng.gen_bool(0.5) {
                        let table = (0..dims[i]).map(|_| reals(rng, dims[j], -5, 5)).collect();
                        terms.push(PairTerm { i, j, table });
                    }
                }
            }
            ProblemSpec::Tqudo(Tqudo { dims, terms })
        }
        "hobo" => {
            let n = size(rng, 3, 2, budget, 10);
            let dims = vec![2; n];
            let terms = higher_terms(rng, &dims);
            ProblemSpec::Hobo(Hobo { dims, terms })
        }
        "sum_function" => {
            let n = size(rng, 2, 3, budget, 6);
            let dims = dims(rng, n, 2, 3);
            let weights: Vec<Profile<i64>> = dims
                .iter()
                .map(|&d| {
                    if rng.gen_bool(0.5) {
                        Profile::Linear(rng.gen_range(-3..=3))
                    } else {
                        Profile::Table(ints(rng, d, -3, 3))
                    }
                })
                .collect();
            let (mut lo, mut hi) = (0i64, 0i64);
            for (w, &d) in weights.iter().zip(&dims) {
                let t = w.table(d);
                lo += t.iter().min().unwrap();
                hi += t.iter().max().unwrap();
            }
            let target = rng.gen_range(lo..=hi);
            let values = (lo..=hi)
                .map(|z| ((z - target).pow(2) + rng.gen_range(-2..=2)) as f64)
                .collect();
            ProblemSpec::SumFunction(SumFunction {
                dims,
                weights,
                f: IntFunction { offset: lo, values },
            })
        }
        "nested" => {
            let n = size(rng, 2, 3, budget, 5);
            let range = 5;
            let d = dims(rng, n, 2, 3);
            ProblemSpec::Nested(Nested {
                first: ints(rng, d[0], 0, range),
                q_offset: 0,
                tables: d[1..]
                    .iter()
                    .map(|&dk| {
                        (0..dk)
                            .map(|_| ints(rng, range as usize + 1, 0, range))
                            .collect()
                    })
                    .collect(),
            })
        }
        "addition_inv" => {
            let bits = size(rng, 1, 4, budget, 4);
            ProblemSpec::AdditionInv(AdditionInv {
                c: rng.gen_range(0..(1u64 << (bits + 1))),
                bits,
            })
        }
        "multiplication_inv" => {
            let bits_a = rng.gen_range(1..=3);
            let bits_b = rng.gen_range(1..=3);
            let a = rng.gen_range(0..1u64 << bits_a);
            let b = rng.gen_range(0..1u64 << bits_b);
            ProblemSpec::MultiplicationInv(MultiplicationInv {
                c: a * b,
                bits_a,
                bits_b,
            })
        }
        "linear_system" => {
            let n = size(rng, 1, 4, budget, 3);
            let m = rng.gen_range(1..=3);
            let dims = dims(rng, n, 2, 5);
            let a: Vec<Vec<i64>> = (0..m).map(|_| ints(rng, n, 0, 3)).collect();
            let x: Vec<i64> = dims.iter().map(|&d| rng.gen_range(0..d as i64)).collect();
            let b = a
                .iter()
                .map(|row| row.iter().zip(&x).map(|(c, v)| c * v).sum())
                .collect();
            ProblemSpec::LinearSystem(LinearSystem { a, b, dims })
        }
        "single_one" => ProblemSpec::SingleOne(SingleOne {
            n: size(rng, 1, 2, budget, 8),
        }),
        "partition" => {
            let n = size(rng, 2, 2, budget, 10);
            ProblemSpec::Partition(Partition {
                s: ints(rng, n, 1, 9),
            })
        }
        "coloring" => {
            let k = rng.gen_range(2..=3);
            let n = size(rng, 3, k, budget, 6);
            let vertex_costs = rng
                .gen_bool(0.3)
                .then(|| (0..n).map(|_| reals(rng, k, 0, 4)).collect());
            ProblemSpec::Coloring(Coloring {
                vertices: n,
                edges: graph(rng, n, 0.4),
                k,
                vertex_costs,
                minimize_colors: rng.gen_bool(0.3),
            })
        }
        "shortest_path_cost" => ProblemSpec::ShortestPathCost(shortest_path(rng, budget)),
        "shortest_path_route" => ProblemSpec::ShortestPathRoute(shortest_path(rng, budget)),
        "tsp" => {
            let v = (3..=6)
                .filter(|&v: &usize| ((v - 1) as u128).pow(v as u32 - 1) <= budget)
                .max()
                .unwrap_or(3);
            let v = rng.gen_range(3..=v);
            tsp(rng, v)
        }
        "knapsack" => {
            let n = size(rng, 2, 2, budget, 10);
            let weights = ints(rng, n, 1, 8);
            let total: i64 = weights.iter().sum();
            ProblemSpec::Knapsack(Knapsack {
                weights: weights.into_iter().map(Profile::Linear).collect(),
                values: reals(rng, n, 1, 9)
                    .into_iter()
                    .map(Profile::Linear)
                    .collect(),
                caps: None,
                capacity: rng.gen_range(0..=total),
                variant: KnapsackVariant::Linear,
            })
        }
        "knapsack_nonlinear" => {
            let n = size(rng, 1, 3, budget, 5);
            let caps: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
            let mut total = 0;
            let weights = caps
                .iter()
                .map(|&c| {
                    let mut w = vec![0i64];
                    for _ in 0..c {
                        w.push(w.last().unwrap() + rng.gen_range(1..=4));
                    }
                    total += w[c];
                    Profile::Table(w)
                })
                .collect();
            let values = caps
                .iter()
                .map(|&c| {
                    let mut v = vec![0.0];
                    v.extend(reals(rng, c, 0, 9));
                    Profile::Table(v)
                })
                .collect();
            ProblemSpec::Knapsack(Knapsack {
                weights,
                values,
                caps: Some(caps),
                capacity: rng.gen_range(0..=total),
                variant: KnapsackVariant::Nonlinear,
            })
        }
        "knapsack_polynomial" => {
            let n = size(rng, 1, 3, budget, 6);
            let caps: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=2)).collect();
            let weights = ints(rng, n, 1, 4);
            let total: i64 = weights.iter().zip(&caps).map(|(w, &c)| w * c as i64).sum();
            // Either a growing cost W + W^2, or one that dips in the middle.
            let coefficients = if rng.gen_bool(0.5) {
                vec![0, 1, 1]
            } else {
                vec![2 * total, -2 * total, 1]
            };
            let top = coefficients[0] + coefficients[1] * total + coefficients[2] * total * total;
            ProblemSpec::Knapsack(Knapsack {
                weights: weights.into_iter().map(Profile::Linear).collect(),
                values: reals(rng, n, 1, 9)
                    .into_iter()
                    .map(Profile::Linear)
                    .collect(),
                caps: Some(caps),
                capacity: rng.gen_range(0..=top.max(0)),
                variant: KnapsackVariant::Polynomial { coefficients },
            })
        }
        "ilp" => {
            let n = size(rng, 2, 3, budget, 5);
            let dims = dims(rng, n, 2, 4);
            let (a, b) = rows(rng, &dims);
            ProblemSpec::Ilp(Ilp {
                c: reals(rng, n, -3, 5),
                a,
                b,
                dims,
            })
        }
        "iqp" => {
            let n = size(rng, 2, 3, budget, 5);
            let dims = dims(rng, n, 2, 4);
            let (a, b) = rows(rng, &dims);
            ProblemSpec::Iqp(Iqp {
                q: lower_triangle(rng, n, -3, 3),
                c: reals(rng, n, -5, 5),
                a,
                b,
                dims,
            })
        }
        "ipp" => {
            let n = size(rng, 2, 3, budget, 5);
            let dims = dims(rng, n, 2, 3);
            let (a, b) = rows(rng, &dims);
            ProblemSpec::Ipp(Ipp {
                terms: higher_terms(rng, &dims),
                a,
                b,
                dims,
            })
        }
        "mis" | "vertex_cover" => {
            let n = size(rng, 3, 2, budget, 12);
            let g = Graph {
                vertices: n,
                edges: graph(rng, n, 0.35),
            };
            if family == "mis" {
                ProblemSpec::Mis(g)
            } else {
                ProblemSpec::VertexCover(g)
            }
        }
        "dominating_set" => {
            let n = size(rng, 3, 2, budget, 12);
            ProblemSpec::DominatingSet(DominatingSet {
                vertices: n,
                edges: graph(rng, n, 0.35),
                costs: rng.gen_bool(0.5).then(|| reals(rng, n, 1, 5)),
            })
        }
        "assignment" => {
            let tasks = rng.gen_range(1..=3);
            let agents = size(rng, 1, tasks + 1, budget, 5);
            let costs = (0..agents)
                .map(|_| {
                    let mut row = vec![0.0];
                    row.extend(reals(rng, tasks, 0, 9));
                    row
                })
                .collect();
            ProblemSpec::Assignment(Assignment {
                costs,
                lambda: None,
            })
        }
        other => return Err(Error::spec("family", format!("no generator for `{other}`"))),
    })
}

/// Random symmetric instance with integer distances in `1..=20`.
pub fn tsp<R: Rng>(rng: &mut R, cities: usize) -> ProblemSpec {
    let mut costs = vec![vec![None; cities]; cities];
    for i in 0..cities {
        for j in i + 1..cities {
            let c = rng.gen_range(1..=20) as f64;
            costs[i][j] = Some(c);
            costs[j][i] = Some(c);
        }
    }
    ProblemSpec::Tsp(Tsp { costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_family_generates_within_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for family in FAMILIES {
            for budget in [16u128, 1 << 10, 1 << 14] {
                for _ in 0..20 {
                    let s = instance(family, &mut rng, budget).unwrap();
                    assert!(s.state_count() <= budget, "{family}");
                }
            }
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = instance("qubo", &mut ChaCha8Rng::seed_from_u64(1), 1 << 10).unwrap();
        let b = instance("qubo", &mut ChaCha8Rng::seed_from_u64(1), 1 << 10).unwrap();
        assert_eq!(a, b);
    }
}
