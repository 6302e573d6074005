//! One network builder per problem family.

use std::collections::BTreeMap;

use smallvec::{smallvec, SmallVec};

use super::circuit::{
    layer_entries, layer_extent, Buses, Circuit, End, Port, SideEntries, SignalChain, Tap, Train,
    Wire,
};
use super::spec::*;
use crate::error::{Error, Result};
use crate::network::{TensorNetwork, Variable, VariableLayout};
use crate::tensor::{self, MultiIndex, SparseTensor};

/// How the solver reads a variable's amplitude vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    /// Largest modulus wins, lowest index on ties.
    Argmax,
    /// Lowest index with a nonzero amplitude wins; used when the vector is a
    /// histogram over cost values.
    LowestNonzero,
}

#[derive(Clone, Debug)]
pub struct Built {
    pub network: TensorNetwork,
    pub layout: VariableLayout,
    pub readout: Readout,
}

/// Inputs beyond the spec that a builder may use.
#[derive(Clone, Copy, Debug)]
pub struct BuildContext<'a> {
    pub tau: f64,
    /// Values already determined, by variable position.
    pub fixed: &'a [Option<usize>],
    /// Maximum number of filter layers per iteration, for builders that
    /// support the elimination mode.
    pub layer_limit: Option<usize>,
    /// Position of the variable being determined.
    pub step: usize,
}

impl BuildContext<'static> {
    pub fn with_tau(tau: f64) -> Self {
        BuildContext {
            tau,
            fixed: &[],
            layer_limit: None,
            step: 0,
        }
    }
}

fn layout_of(spec: &ProblemSpec) -> Result<VariableLayout> {
    VariableLayout::new(
        spec.variable_labels()
            .into_iter()
            .zip(spec.variable_dims())
            .map(|(label, dim)| Variable { label, dim })
            .collect(),
    )
}

/// Builds the network of any family.
pub fn build(spec: &ProblemSpec, ctx: &BuildContext) -> Result<Built> {
    if !(ctx.tau.is_finite() && ctx.tau >= 0.0) {
        return Err(Error::Config(format!(
            "tau must be finite and nonnegative, got {}",
            ctx.tau
        )));
    }
    let layout = layout_of(spec)?;
    let mut circ = Circuit::new(ctx.tau);
    let mut readout = Readout::Argmax;
    let dims = layout.dims();
    let labels: Vec<String> = spec.variable_labels();
    match spec {
        ProblemSpec::Qubo(_)
        | ProblemSpec::Qudo(_)
        | ProblemSpec::Tqudo(_)
        | ProblemSpec::Hobo(_) => {
            let terms = objective_terms(spec, &dims);
            let mut trains = trains_for(&labels, &dims);
            add_terms(&mut circ, &mut trains, &terms);
            emit_all(&mut circ, trains)?;
        }
        ProblemSpec::Iqp(_)
        | ProblemSpec::Ipp(_)
        | ProblemSpec::Ilp(_)
        | ProblemSpec::LinearSystem(_) => {
            let terms = objective_terms(spec, &dims);
            let mut trains = trains_for(&labels, &dims);
            add_terms(&mut circ, &mut trains, &terms);
            let (a, b, exact) = match spec {
                ProblemSpec::Iqp(s) => (&s.a, &s.b, false),
                ProblemSpec::Ipp(s) => (&s.a, &s.b, false),
                ProblemSpec::Ilp(s) => (&s.a, &s.b, false),
                ProblemSpec::LinearSystem(s) => (&s.a, &s.b, true),
                _ => unreachable!(),
            };
            add_rows(&mut circ, &mut trains, &dims, a, b, exact)?;
            emit_all(&mut circ, trains)?;
        }
        ProblemSpec::SumFunction(s) => {
            let tables: Vec<Vec<i64>> = s
                .weights
                .iter()
                .zip(&dims)
                .map(|(w, &d)| w.table(d))
                .collect();
            let step = |k: usize, x: usize, acc: i64| Some((acc + tables[k][x], 0.0));
            let accept = |z: i64| s.f.eval(z);
            chain(&labels, &dims, &step, &accept).emit(&mut circ)?;
        }
        ProblemSpec::Nested(s) => {
            let step = |k: usize, x: usize, q: i64| s.step(k, x, q).map(|v| (v, 0.0));
            let accept = |q: i64| Some(q as f64);
            chain(&labels, &dims, &step, &accept).emit(&mut circ)?;
        }
        ProblemSpec::Partition(s) => {
            let step = |k: usize, x: usize, acc: i64| {
                Some((if x == 0 { acc + s.s[k] } else { acc - s.s[k] }, 0.0))
            };
            let accept = |z: i64| (z == 0).then_some(0.0);
            chain(&labels, &dims, &step, &accept).emit(&mut circ)?;
        }
        ProblemSpec::SingleOne(_) => {
            let step = |_k: usize, x: usize, ones: i64| {
                let next = ones + x as i64;
                (next <= 1).then_some((next, 0.0))
            };
            let accept = |ones: i64| (ones == 1).then_some(0.0);
            chain(&labels, &dims, &step, &accept).emit(&mut circ)?;
        }
        ProblemSpec::Knapsack(s) => {
            let weights: Vec<Vec<i64>> = (0..dims.len()).map(|i| s.weight_table(i)).collect();
            let values: Vec<Vec<f64>> = (0..dims.len()).map(|i| s.value_table(i)).collect();
            let prune = s.monotone();
            let step = |k: usize, x: usize, w: i64| {
                let next = w + weights[k][x];
                if prune && !s.admits(next) {
                    return None;
                }
                Some((next, -values[k][x]))
            };
            let accept = |w: i64| s.admits(w).then_some(0.0);
            chain(&labels, &dims, &step, &accept).emit(&mut circ)?;
        }
        ProblemSpec::AdditionInv(s) => build_addition(&mut circ, s)?,
        ProblemSpec::MultiplicationInv(s) => build_multiplication(&mut circ, s)?,
        ProblemSpec::Coloring(s) => {
            let mut trains = trains_for(&labels, &dims);
            for v in 0..s.vertices {
                for c in 0..s.k {
                    let mut cost = 0.0;
                    if s.minimize_colors {
                        cost += c as f64;
                    }
                    if let Some(q) = &s.vertex_costs {
                        cost += q[v][c];
                    }
                    trains[v].add_cost(c, cost);
                }
            }
            let k = s.k;
            add_edge_filters(&mut circ, &mut trains, &s.edges, move |i, j| i != j, k);
            emit_all(&mut circ, trains)?;
        }
        ProblemSpec::Mis(g) => {
            let mut trains = trains_for(&labels, &dims);
            for t in trains.iter_mut() {
                t.add_cost(1, -1.0);
            }
            add_edge_filters(
                &mut circ,
                &mut trains,
                &g.edges,
                |i, j| !(i == 1 && j == 1),
                2,
            );
            emit_all(&mut circ, trains)?;
        }
        ProblemSpec::VertexCover(g) => {
            let mut trains = trains_for(&labels, &dims);
            for t in trains.iter_mut() {
                t.add_cost(1, 1.0);
            }
            add_edge_filters(&mut circ, &mut trains, &g.edges, |i, j| i + j >= 1, 2);
            emit_all(&mut circ, trains)?;
        }
        ProblemSpec::DominatingSet(s) => build_dominating_set(&mut circ, s, &labels)?,
        ProblemSpec::Assignment(s) => {
            let mut trains = trains_for(&labels, &dims);
            let lambda = s.lambda();
            for (i, t) in trains.iter_mut().enumerate() {
                for x in 0..=s.tasks() {
                    let bonus = if x == 0 { 0.0 } else { lambda };
                    t.add_cost(x, s.costs[i][x] - bonus);
                }
            }
            for task in 1..=s.tasks() {
                add_layer(&mut circ, &mut trains, task, 1, false, (1, task));
            }
            emit_all(&mut circ, trains)?;
        }
        ProblemSpec::ShortestPathRoute(s) => {
            let mut trains = trains_for(&labels, &dims);
            for v in 0..s.vertices {
                if v != s.source {
                    trains[0].forbid(v);
                }
                if v != s.sink {
                    trains[s.steps - 1].forbid(v);
                }
            }
            add_transitions(&mut circ, &mut trains, s.vertices, |t, j, i| {
                s.edge_cost(t, j, i)
            });
            emit_all(&mut circ, trains)?;
        }
        ProblemSpec::ShortestPathCost(s) => {
            build_path_histogram(&mut circ, s)?;
            readout = Readout::LowestNonzero;
        }
        ProblemSpec::Tsp(s) => build_tsp(&mut circ, s, &labels, ctx)?,
    }
    let network = circ.finish(&layout)?;
    Ok(Built {
        network,
        layout,
        readout,
    })
}

fn chain<'a>(
    labels: &[String],
    dims: &[usize],
    step: &'a dyn Fn(usize, usize, i64) -> Option<(i64, f64)>,
    accept: &'a dyn Fn(i64) -> Option<f64>,
) -> SignalChain<'a> {
    SignalChain {
        labels: labels.to_vec(),
        dims: dims.to_vec(),
        step,
        accept,
    }
}

fn trains_for<'a>(labels: &[String], dims: &[usize]) -> Vec<Train<'a>> {
    labels
        .iter()
        .zip(dims)
        .map(|(l, &d)| Train::new(l.clone(), d))
        .collect()
}

fn emit_all(circ: &mut Circuit, trains: Vec<Train>) -> Result<()> {
    for t in trains {
        t.emit(circ)?;
    }
    Ok(())
}

/// A cost table over distinct, ascending variables; row-major with the
/// first variable slowest.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CostTerm {
    pub vars: Vec<usize>,
    pub table: Vec<f64>,
}

#[derive(Default)]
struct TermSet {
    terms: BTreeMap<Vec<usize>, Vec<f64>>,
}

impl TermSet {
    /// Adds `value(listed values)` for a term over `listed` variables, which
    /// may repeat.
    fn add(&mut self, dims: &[usize], listed: &[usize], value: impl Fn(&[usize]) -> f64) {
        let mut vars = listed.to_vec();
        vars.sort_unstable();
        vars.dedup();
        let sub: Vec<usize> = vars.iter().map(|&v| dims[v]).collect();
        let volume: usize = sub.iter().product();
        let table = self
            .terms
            .entry(vars.clone())
            .or_insert_with(|| vec![0.0; volume]);
        let mut vals = vec![0usize; vars.len()];
        let mut listed_vals = vec![0usize; listed.len()];
        for (flat, slot) in table.iter_mut().enumerate() {
            let mut rest = flat;
            for (k, &d) in sub.iter().enumerate().rev() {
                vals[k] = rest % d;
                rest /= d;
            }
            for (p, v) in listed.iter().enumerate() {
                listed_vals[p] = vals[vars.binary_search(v).unwrap()];
            }
            *slot += value(&listed_vals);
        }
    }

    fn into_terms(self) -> Vec<CostTerm> {
        self.terms
            .into_iter()
            .filter(|(_, t)| t.iter().any(|&v| v != 0.0))
            .map(|(vars, table)| CostTerm { vars, table })
            .collect()
    }
}

fn add_quadratic(set: &mut TermSet, dims: &[usize], q: &[Vec<f64>]) {
    for (i, row) in q.iter().enumerate() {
        for (j, &v) in row.iter().enumerate().take(i + 1) {
            if v != 0.0 {
                set.add(dims, &[i, j], |x| v * (x[0] * x[1]) as f64);
            }
        }
    }
}

fn add_higher(set: &mut TermSet, dims: &[usize], terms: &[HigherTerm]) {
    for t in terms {
        match (&t.coef, &t.table) {
            (Some(c), _) => {
                if *c != 0.0 {
                    set.add(dims, &t.vars, |x| {
                        c * x.iter().map(|&v| v as f64).product::<f64>()
                    })
                }
            }
            (_, Some(table)) => {
                let sub: Vec<usize> = t.vars.iter().map(|&v| dims[v]).collect();
                set.add(dims, &t.vars, |x| {
                    table[x.iter().zip(&sub).fold(0, |acc, (&v, &d)| acc * d + v)]
                })
            }
            _ => {}
        }
    }
}

/// The objective of a family as cost terms (single-variable terms included).
pub(crate) fn objective_terms(spec: &ProblemSpec, dims: &[usize]) -> Vec<CostTerm> {
    let mut set = TermSet::default();
    match spec {
        ProblemSpec::Qubo(s) => add_quadratic(&mut set, dims, &s.q),
        ProblemSpec::Qudo(s) => add_quadratic(&mut set, dims, &s.q),
        ProblemSpec::Tqudo(s) => {
            for t in &s.terms {
                set.add(dims, &[t.i, t.j], |x| t.table[x[0]][x[1]]);
            }
        }
        ProblemSpec::Hobo(s) => add_higher(&mut set, dims, &s.terms),
        ProblemSpec::Iqp(s) => {
            add_quadratic(&mut set, dims, &s.q);
            for (j, &c) in s.c.iter().enumerate() {
                if c != 0.0 {
                    set.add(dims, &[j], |x| c * x[0] as f64);
                }
            }
        }
        ProblemSpec::Ipp(s) => add_higher(&mut set, dims, &s.terms),
        ProblemSpec::Ilp(s) => {
            for (j, &c) in s.c.iter().enumerate() {
                if c != 0.0 {
                    set.add(dims, &[j], |x| -c * x[0] as f64);
                }
            }
        }
        _ => {}
    }
    set.into_terms()
}

/// Wires each multi-variable term as an evaluation node in the train of its
/// highest variable, reading the other variables from their buses.
fn add_terms<'a>(circ: &mut Circuit, trains: &mut [Train<'a>], terms: &[CostTerm]) {
    let mut order: Vec<usize> = (0..terms.len()).collect();
    order.sort_by_key(|&t| (terms[t].vars.last().copied(), terms[t].vars.clone()));
    let mut consumers = vec![0; trains.len()];
    for term in terms {
        for &v in &term.vars[..term.vars.len() - 1] {
            consumers[v] += 1;
        }
    }
    let mut buses = Buses::new(consumers, (usize::MAX, 0));
    for t in order {
        let term = &terms[t];
        let m = term.vars.len();
        if m == 1 {
            let v = term.vars[0];
            for (x, &c) in term.table.iter().enumerate() {
                trains[v].add_cost(x, c);
            }
            continue;
        }
        let head = term.vars[m - 1];
        let others = &term.vars[..m - 1];
        let ports: Vec<Port> = others
            .iter()
            .map(|&v| buses.port(circ, trains, v))
            .collect();
        let sub: Vec<usize> = others.iter().map(|&v| trains[v].dim).collect();
        let head_dim = trains[head].dim;
        let table = term.table.clone();
        let combos: usize = sub.iter().product();
        trains[head].taps.push(Tap {
            key: (others[m - 2], t),
            sides: ports.iter().flat_map(Port::wires).collect(),
            entries: Box::new(move |i| {
                let mut out = Vec::with_capacity(combos);
                let mut vals = vec![0; sub.len()];
                for flat in 0..combos {
                    let mut rest = flat;
                    for (k, &d) in sub.iter().enumerate().rev() {
                        vals[k] = rest % d;
                        rest /= d;
                    }
                    let mut idx: MultiIndex = SmallVec::new();
                    for (port, &v) in ports.iter().zip(&vals) {
                        port.push_value(&mut idx, v);
                    }
                    out.push((idx, table[flat * head_dim + i]));
                }
                out
            }),
        });
    }
}

/// Row constraints `sum_j a[i][j] x_j (= or <=) b[i]`: each row is a signal
/// running through a product tap in every train it touches, pruned at
/// `b[i]` and closed by a projection (equality) or step (inequality) vector.
fn add_rows(
    circ: &mut Circuit,
    trains: &mut [Train],
    dims: &[usize],
    a: &[Vec<i64>],
    b: &[i64],
    exact: bool,
) -> Result<()> {
    const ROW_KEY: usize = usize::MAX / 2;
    for (r, row) in a.iter().enumerate() {
        let bound = b[r] as usize;
        let cols: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0).collect();
        if cols.is_empty() {
            if exact && bound != 0 {
                circ.place(&[], SparseTensor::zeros(&[])?)?;
            }
            continue;
        }
        let mut prefix = 0usize;
        let mut prev: Option<(Wire, usize)> = None;
        for &j in &cols {
            let coef = row[j] as usize;
            prefix = prefix.saturating_add(coef.saturating_mul(dims[j] - 1));
            let ext = prefix.min(bound) + 1;
            let out = circ.wire(ext);
            let in_ext = prev.map_or(1, |(_, e)| e);
            let mut sides = Vec::new();
            if let Some((w, _)) = prev {
                sides.push(w);
            }
            sides.push(out);
            let has_in = prev.is_some();
            trains[j].taps.push(Tap {
                key: (ROW_KEY + r, 0),
                sides,
                entries: Box::new(move |k| {
                    let mut entries: SideEntries = Vec::new();
                    for l in 0..in_ext {
                        let mu = l + coef * k;
                        if mu <= bound {
                            let idx: MultiIndex = if has_in {
                                smallvec![l, mu]
                            } else {
                                smallvec![mu]
                            };
                            entries.push((idx, 0.0));
                        }
                    }
                    entries
                }),
            });
            prev = Some((out, ext));
        }
        let (w, ext) = prev.unwrap();
        let boundary = if exact {
            if bound < ext {
                tensor::make_projection(ext, bound as i64)?
            } else {
                SparseTensor::zeros(&[ext])?
            }
        } else {
            tensor::make_step(ext, bound as i64)?
        };
        circ.place(&[End::Wire(w)], boundary)?;
    }
    Ok(())
}

/// A pairwise filter on every edge `(u, v)` with `u < v`: the train of `v`
/// reads `x_u` from its bus and keeps only combinations with
/// `admit(x_u, x_v)`.
fn add_edge_filters<'a, F>(
    circ: &mut Circuit,
    trains: &mut [Train<'a>],
    edges: &[[usize; 2]],
    admit: F,
    dim: usize,
) where
    F: Fn(usize, usize) -> bool + Copy + 'a,
{
    let mut pairs: Vec<(usize, usize)> = edges.iter().map(|&[a, b]| (a.max(b), a.min(b))).collect();
    pairs.sort_unstable();
    let mut consumers = vec![0; trains.len()];
    for &(_, u) in &pairs {
        consumers[u] += 1;
    }
    let mut buses = Buses::new(consumers, (usize::MAX, 0));
    for (v, u) in pairs {
        let port = buses.port(circ, trains, u);
        trains[v].taps.push(Tap {
            key: (u, 1),
            sides: port.wires().collect(),
            entries: Box::new(move |j| {
                (0..dim)
                    .filter(|&i| admit(i, j))
                    .map(|i| {
                        let mut idx: MultiIndex = SmallVec::new();
                        port.push_value(&mut idx, i);
                        (idx, 0.0)
                    })
                    .collect()
            }),
        });
    }
}

/// Counting (`exact = false`, at most `cap`) or repetition (`exact`,
/// exactly `cap`) layer for `value` across all trains.
fn add_layer(
    circ: &mut Circuit,
    trains: &mut [Train],
    value: usize,
    cap: usize,
    exact: bool,
    key: (usize, usize),
) {
    let n = trains.len();
    let wires: Vec<Wire> = (0..n.saturating_sub(1))
        .map(|p| circ.wire(layer_extent(p, cap)))
        .collect();
    for (p, train) in trains.iter_mut().enumerate() {
        let mut sides = Vec::new();
        if p > 0 {
            sides.push(wires[p - 1]);
        }
        if p + 1 < n {
            sides.push(wires[p]);
        }
        train.taps.push(Tap {
            key,
            sides,
            entries: Box::new(layer_entries(p, n, value, cap, exact)),
        });
    }
}

/// Time-ordered trains `x_0 .. x_{n-1}` where consecutive variables are
/// linked by a transition cost `cost(t, x_t, x_{t+1})` (`None` forbids).
fn add_transitions<'a, F>(circ: &mut Circuit, trains: &mut [Train<'a>], dim: usize, cost: F)
where
    F: Fn(usize, usize, usize) -> Option<f64> + Clone + 'a,
{
    let n = trains.len();
    for t in 0..n.saturating_sub(1) {
        let w = circ.wire(dim);
        trains[t].taps.push(Tap::emit((0, 1), w));
        let cost = cost.clone();
        trains[t + 1].taps.push(Tap {
            key: (0, 0),
            sides: vec![w],
            entries: Box::new(move |i| {
                (0..dim)
                    .filter_map(|j| cost(t, j, i).map(|c| (smallvec![j], c)))
                    .collect()
            }),
        });
    }
}

fn bit(c: u64, k: usize) -> usize {
    ((c >> k) & 1) as usize
}

/// Ripple-carry adder over interleaved input bits, every output bit
/// projected onto the target.
fn build_addition(circ: &mut Circuit, s: &AdditionInv) -> Result<()> {
    let n = s.bits;
    let mut carry: Option<Wire> = None;
    for k in 0..n {
        let sum = circ.wire(2);
        let cout = circ.wire(2);
        let mut ends = vec![End::Open(format!("a{k}"), 2), End::Open(format!("b{k}"), 2)];
        if let Some(c) = carry {
            ends.push(End::Wire(c));
        }
        ends.push(End::Wire(sum));
        ends.push(End::Wire(cout));
        let mut entries = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..if carry.is_some() { 2 } else { 1 } {
                    let t = x + y + z;
                    let mut idx: MultiIndex = smallvec![x, y];
                    if carry.is_some() {
                        idx.push(z);
                    }
                    idx.push(t & 1);
                    idx.push(t >> 1);
                    entries.push((idx, 0.0));
                }
            }
        }
        circ.costed(&ends, entries)?;
        circ.place(
            &[End::Wire(sum)],
            tensor::make_projection(2, bit(s.c, k) as i64)?,
        )?;
        carry = Some(cout);
    }
    circ.place(
        &[End::Wire(carry.expect("at least one bit"))],
        tensor::make_projection(2, bit(s.c, n) as i64)?,
    )?;
    Ok(())
}

/// Shift-and-add multiplier: cell `(n, m)` adds `a_n b_m` into accumulator
/// bit `n + m` with a carry running along the row. Accumulator bits are
/// projected onto the target once final.
fn build_multiplication(circ: &mut Circuit, s: &MultiplicationInv) -> Result<()> {
    let (na, nb) = (s.bits_a, s.bits_b);
    let width = na + nb;
    let mut acc: Vec<Option<Wire>> = vec![None; width];
    // Vertical b wires coming into row n, horizontal a wire along the row.
    let mut b_down: Vec<Option<Wire>> = vec![None; nb];
    for n in 0..na {
        let mut a_right: Option<Wire> = None;
        let mut carry: Option<Wire> = None;
        for m in 0..nb {
            let mut ends = Vec::new();
            ends.push(match b_down[m] {
                Some(w) => End::Wire(w),
                None => End::Open(format!("b{m}"), 2),
            });
            ends.push(match a_right {
                Some(w) => End::Wire(w),
                None => End::Open(format!("a{n}"), 2),
            });
            let r_in = acc[n + m].take();
            if let Some(w) = r_in {
                ends.push(End::Wire(w));
            }
            if let Some(w) = carry {
                ends.push(End::Wire(w));
            }
            let b_out = (n + 1 < na).then(|| circ.wire(2));
            let a_out = (m + 1 < nb).then(|| circ.wire(2));
            let r_out = circ.wire(2);
            let k_out = circ.wire(2);
            for w in [b_out, a_out].into_iter().flatten() {
                ends.push(End::Wire(w));
            }
            ends.push(End::Wire(r_out));
            ends.push(End::Wire(k_out));
            let mut entries = Vec::new();
            for bv in 0..2 {
                for av in 0..2 {
                    for r in 0..if r_in.is_some() { 2 } else { 1 } {
                        for k in 0..if carry.is_some() { 2 } else { 1 } {
                            let t = r + (av & bv) + k;
                            let mut idx: MultiIndex = smallvec![bv, av];
                            if r_in.is_some() {
                                idx.push(r);
                            }
                            if carry.is_some() {
                                idx.push(k);
                            }
                            if b_out.is_some() {
                                idx.push(bv);
                            }
                            if a_out.is_some() {
                                idx.push(av);
                            }
                            idx.push(t & 1);
                            idx.push(t >> 1);
                            entries.push((idx, 0.0));
                        }
                    }
                }
            }
            circ.costed(&ends, entries)?;
            b_down[m] = b_out;
            a_right = a_out;
            acc[n + m] = Some(r_out);
            if m + 1 < nb {
                carry = Some(k_out);
            } else {
                acc[n + nb] = Some(k_out);
            }
        }
    }
    for (p, w) in acc.into_iter().enumerate() {
        let w = w.expect("every product bit is written");
        circ.place(
            &[End::Wire(w)],
            tensor::make_projection(2, bit(s.c, p) as i64)?,
        )?;
    }
    Ok(())
}

fn build_dominating_set(circ: &mut Circuit, s: &DominatingSet, labels: &[String]) -> Result<()> {
    let v = s.vertices;
    // members[w]: the closed neighbourhood of w, ascending.
    let mut members: Vec<Vec<usize>> = (0..v).map(|w| vec![w]).collect();
    for &[a, b] in &s.edges {
        members[a].push(b);
        members[b].push(a);
    }
    let mut trains = trains_for(labels, &vec![2; v]);
    for (u, train) in trains.iter_mut().enumerate() {
        train.add_cost(1, s.costs.as_ref().map_or(1.0, |c| c[u]));
    }
    // The flag "w is dominated" starts at 0 and is OR-ed with each member's
    // value as it passes through the members' trains; it must end at 1.
    for (w, m) in members.iter_mut().enumerate() {
        m.sort_unstable();
        m.dedup();
        let len = m.len();
        if len == 1 {
            trains[w].forbid(0);
            continue;
        }
        let flags: Vec<Wire> = (0..len - 1).map(|_| circ.wire(2)).collect();
        for (p, &u) in m.iter().enumerate() {
            let first = p == 0;
            let last = p + 1 == len;
            let mut sides = Vec::new();
            if !first {
                sides.push(flags[p - 1]);
            }
            if !last {
                sides.push(flags[p]);
            }
            trains[u].taps.push(Tap {
                key: (1, w),
                sides,
                entries: Box::new(move |i| {
                    let mut out = Vec::new();
                    for acc in 0..if first { 1 } else { 2 } {
                        let next = acc | i;
                        if last && next != 1 {
                            continue;
                        }
                        let mut idx: MultiIndex = SmallVec::new();
                        if !first {
                            idx.push(acc);
                        }
                        if !last {
                            idx.push(next);
                        }
                        out.push((idx, 0.0));
                    }
                    out
                }),
            });
        }
    }
    emit_all(circ, trains)
}

/// Cost-histogram network: position `t` passes (vertex, accumulated cost) to
/// position `t + 1`; the endpoints are fixed inside the network and the only
/// open leg is the total cost.
fn build_path_histogram(circ: &mut Circuit, s: &ShortestPath) -> Result<()> {
    let v = s.vertices;
    let total = s.max_total_cost() + 1;
    if s.steps == 1 {
        let entries = if s.source == s.sink {
            vec![(smallvec![0], 0.0)]
        } else {
            Vec::new()
        };
        circ.costed(&[End::Open("cost".into(), total)], entries)?;
        return Ok(());
    }
    // Cost extent after `t` transitions.
    let mut ext = vec![1usize];
    for t in 0..s.steps - 1 {
        let mut best = 0usize;
        for i in 0..v {
            for j in 0..v {
                if let Some(c) = s.edge_cost(t, i, j) {
                    best = best.max(c as usize);
                }
            }
        }
        ext.push(ext[t] + best);
    }
    let mut vw = circ.wire(v);
    let mut cw = circ.wire(1);
    circ.costed(
        &[End::Wire(vw), End::Wire(cw)],
        vec![(smallvec![s.source, 0], 0.0)],
    )?;
    for t in 1..s.steps {
        let last = t + 1 == s.steps;
        let mut ends = vec![End::Wire(vw), End::Wire(cw)];
        let (nvw, ncw) = if last {
            ends.push(End::Open("cost".into(), total));
            (None, None)
        } else {
            let a = circ.wire(v);
            let b = circ.wire(ext[t]);
            ends.push(End::Wire(a));
            ends.push(End::Wire(b));
            (Some(a), Some(b))
        };
        let mut entries = Vec::new();
        for j in 0..v {
            for i in 0..v {
                if last && i != s.sink {
                    continue;
                }
                let Some(c) = s.edge_cost(t - 1, j, i) else {
                    continue;
                };
                for k in 0..ext[t - 1] {
                    let idx: MultiIndex = if last {
                        smallvec![j, k, k + c as usize]
                    } else {
                        smallvec![j, k, i, k + c as usize]
                    };
                    entries.push((idx, 0.0));
                }
            }
        }
        circ.costed(&ends, entries)?;
        if let (Some(a), Some(b)) = (nvw, ncw) {
            vw = a;
            cw = b;
        }
    }
    Ok(())
}

/// Tour through cities `0..V-1` ending at the fixed city `V-1`; variable
/// `x_t` is the city visited at position `t`. Consecutive positions are
/// linked by edge costs and the permutation is enforced by one exact
/// single-repetition layer per city `0..V-3` (the last free city is then
/// implied). With a layer limit, cities already placed are excluded from the
/// free variables and only `L` layers (rotating with the step) are kept.
fn build_tsp(circ: &mut Circuit, s: &Tsp, labels: &[String], ctx: &BuildContext) -> Result<()> {
    let v = s.costs.len();
    let n = v - 1;
    let home = v - 1;
    let dims = vec![n; n];
    let mut trains = trains_for(labels, &dims);
    for i in 0..n {
        match s.costs[home][i] {
            Some(c) => trains[0].add_cost(i, c),
            None => trains[0].forbid(i),
        }
        match s.costs[i][home] {
            Some(c) => trains[n - 1].add_cost(i, c),
            None => trains[n - 1].forbid(i),
        }
    }
    let costs = s.costs.clone();
    add_transitions(circ, &mut trains, n, move |_, j, i| {
        if i == j {
            None
        } else {
            costs[j][i]
        }
    });

    let mut layers: Vec<usize> = (0..v.saturating_sub(2)).collect();
    if let Some(limit) = ctx.layer_limit {
        let visited: Vec<usize> = ctx.fixed.iter().flatten().copied().collect();
        for (p, train) in trains.iter_mut().enumerate() {
            if ctx.fixed.get(p).copied().flatten().is_none() {
                for &c in &visited {
                    train.forbid(c);
                }
            }
        }
        layers.retain(|c| !visited.contains(c));
        if !layers.is_empty() {
            let shift = ctx.step % layers.len();
            layers.rotate_left(shift);
        }
        layers.truncate(limit);
    }
    for city in layers {
        add_layer(circ, &mut trains, city, 1, true, (1, city));
    }
    emit_all(circ, trains)
}

fn layer_tensors(
    dims: &[usize],
    value: usize,
    cap: usize,
    exact: bool,
) -> Result<Vec<SparseTensor>> {
    let n = dims.len();
    if n == 0 {
        return Err(Error::InvalidDimension(
            "a layer needs at least one variable".into(),
        ));
    }
    let d = dims[0];
    if dims.iter().any(|&x| x != d) {
        return Err(Error::InvalidDimension(format!(
            "layer dims must be uniform, got {dims:?}"
        )));
    }
    if value >= d {
        return Err(Error::InvalidProjection {
            value: value as i64,
            dim: d,
        });
    }
    (0..n)
        .map(|p| {
            let mut shape = vec![d, d];
            if p > 0 {
                shape.push(layer_extent(p - 1, cap));
            }
            if p + 1 < n {
                shape.push(layer_extent(p, cap));
            }
            let gen = layer_entries(p, n, value, cap, exact);
            let entries = (0..d).flat_map(|i| {
                gen(i).into_iter().map(move |(sides, _)| {
                    let mut idx: MultiIndex = smallvec![i, i];
                    idx.extend_from_slice(&sides);
                    (idx, 1.0)
                })
            });
            SparseTensor::from_real_entries(&shape, entries.collect::<Vec<_>>())
        })
        .collect()
}

/// Filter chain admitting at most `cap` occurrences of `value`. Tensor `p`
/// has legs `(var_in, var_out, count_in, count_out)`, without `count_in` on
/// the first tensor and without `count_out` on the last.
pub fn build_counting_layer(dims: &[usize], value: usize, cap: usize) -> Result<Vec<SparseTensor>> {
    layer_tensors(dims, value, cap, false)
}

/// Like [`build_counting_layer`] but admitting exactly `count` occurrences.
pub fn build_repetition_layer(
    dims: &[usize],
    value: usize,
    count: usize,
) -> Result<Vec<SparseTensor>> {
    layer_tensors(dims, value, count, true)
}
