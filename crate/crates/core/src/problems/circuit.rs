//! Assembly helpers shared by the builders.
//!
//! A [`Circuit`] hands out wires and pairs their two endpoints as nodes are
//! placed. Costs are attached to entries as plain numbers; the circuit turns
//! them into `exp(-tau (c - c_min))` and moves `-tau c_min` into the network's
//! log prefactor, so every node keeps a maximum entry of 1 without changing
//! the contracted value.
//!
//! Variables are realized as trains: node 0 carries the variable leg and each
//! node passes the value on to the next, with extra side legs ("taps") that
//! emit the value to other trains or receive signals from them.

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::network::{NodeId, Slot, TensorNetwork, VariableLayout};
use crate::tensor::{Amplitude, MultiIndex, SparseTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Wire(usize);

#[derive(Clone, Debug)]
pub(crate) enum End {
    Wire(Wire),
    Open(String, usize),
}

struct WireState {
    dim: usize,
    first: Option<Slot>,
    closed: bool,
}

pub(crate) struct Circuit {
    tau: f64,
    net: TensorNetwork,
    wires: Vec<WireState>,
}

impl Circuit {
    pub fn new(tau: f64) -> Self {
        Circuit {
            tau,
            net: TensorNetwork::new(),
            wires: Vec::new(),
        }
    }

    pub fn wire(&mut self, dim: usize) -> Wire {
        self.wires.push(WireState {
            dim: dim.max(1),
            first: None,
            closed: false,
        });
        Wire(self.wires.len() - 1)
    }

    fn dims_of(&self, ends: &[End]) -> Vec<usize> {
        ends.iter()
            .map(|e| match e {
                End::Wire(w) => self.wires[w.0].dim,
                End::Open(_, d) => *d,
            })
            .collect()
    }

    /// Places a fixed tensor; its legs follow `ends`.
    pub fn place(&mut self, ends: &[End], tensor: SparseTensor) -> Result<NodeId> {
        let dims = self.dims_of(ends);
        if tensor.dims() != dims.as_slice() {
            return Err(Error::Shape(format!(
                "tensor dims {:?} do not match its wiring {dims:?}",
                tensor.dims()
            )));
        }
        let id = self.net.add_node(tensor);
        for (leg, end) in ends.iter().enumerate() {
            let slot = Slot::new(id, leg);
            match end {
                End::Open(label, _) => self.net.expose(label.clone(), slot)?,
                End::Wire(w) => {
                    let state = &mut self.wires[w.0];
                    if state.closed {
                        return Err(Error::InvalidNetwork(format!(
                            "wire {} used three times",
                            w.0
                        )));
                    }
                    match state.first.take() {
                        None => state.first = Some(slot),
                        Some(other) => {
                            state.closed = true;
                            self.net.connect(other, slot)?;
                        }
                    }
                }
            }
        }
        Ok(id)
    }

    /// Places a node whose entries carry costs rather than amplitudes.
    pub fn costed(&mut self, ends: &[End], entries: Vec<(MultiIndex, f64)>) -> Result<NodeId> {
        let dims = self.dims_of(ends);
        let min = entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let tensor = if entries.is_empty() {
            SparseTensor::zeros(&dims)?
        } else {
            let tau = self.tau;
            self.net.add_log_prefactor(-tau * min);
            SparseTensor::from_entries(
                &dims,
                entries
                    .into_iter()
                    .map(|(k, c)| (k, Amplitude::new((-tau * (c - min)).exp(), 0.0))),
            )?
        };
        self.place(ends, tensor)
    }

    /// Checks that every wire was used twice and orders the open legs like
    /// `layout`.
    pub fn finish(mut self, layout: &VariableLayout) -> Result<TensorNetwork> {
        for (k, w) in self.wires.iter().enumerate() {
            if !w.closed {
                return Err(Error::InvalidNetwork(format!("wire {k} has a loose end")));
            }
        }
        let order: Vec<String> = layout.variables().iter().map(|v| v.label.clone()).collect();
        self.net.order_open_legs(&order)?;
        layout.check(&self.net)?;
        Ok(self.net)
    }
}

pub(crate) type SideEntries = Vec<(MultiIndex, f64)>;

/// One node of a variable train besides the pass-through legs.
pub(crate) struct Tap<'a> {
    pub key: (usize, usize),
    pub sides: Vec<Wire>,
    /// Side-leg values and cost admitted when the variable has value `i`.
    pub entries: Box<dyn Fn(usize) -> SideEntries + 'a>,
}

impl<'a> Tap<'a> {
    /// Sends the variable value down `wire`.
    pub fn emit(key: (usize, usize), wire: Wire) -> Self {
        Tap {
            key,
            sides: vec![wire],
            entries: Box::new(|i| vec![(smallvec::smallvec![i], 0.0)]),
        }
    }
}

/// Value broadcast: each variable's value leaves its train once and passes
/// through its consumers in the order they ask for it, so at most one wire
/// per variable crosses any cut between trains.
pub(crate) struct Buses {
    left: Vec<usize>,
    next: Vec<Option<Wire>>,
    emit_key: (usize, usize),
}

/// A consumer's view of a bus: the incoming wire, plus an outgoing one when
/// later consumers follow.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Port {
    pub input: Wire,
    pub output: Option<Wire>,
}

impl Port {
    pub fn wires(&self) -> impl Iterator<Item = Wire> {
        std::iter::once(self.input).chain(self.output)
    }

    /// Side indices for a consumer reading `value`.
    pub fn push_value(&self, idx: &mut MultiIndex, value: usize) {
        idx.push(value);
        if self.output.is_some() {
            idx.push(value);
        }
    }
}

impl Buses {
    /// `consumers[v]` is the number of times `port(v)` will be called.
    pub fn new(consumers: Vec<usize>, emit_key: (usize, usize)) -> Self {
        let n = consumers.len();
        Buses {
            left: consumers,
            next: vec![None; n],
            emit_key,
        }
    }

    pub fn port(&mut self, circ: &mut Circuit, trains: &mut [Train], v: usize) -> Port {
        assert!(
            self.left[v] > 0,
            "more consumers of variable {v} than declared"
        );
        let input = match self.next[v].take() {
            Some(w) => w,
            None => {
                let w = circ.wire(trains[v].dim);
                trains[v].taps.push(Tap::emit(self.emit_key, w));
                w
            }
        };
        self.left[v] -= 1;
        let output = (self.left[v] > 0).then(|| circ.wire(trains[v].dim));
        self.next[v] = output;
        Port { input, output }
    }
}

pub(crate) struct Train<'a> {
    pub label: String,
    pub dim: usize,
    /// Cost of each value; `None` forbids the value.
    pub local: Vec<Option<f64>>,
    pub taps: Vec<Tap<'a>>,
}

impl<'a> Train<'a> {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Train {
            label: label.into(),
            dim,
            local: vec![Some(0.0); dim],
            taps: Vec::new(),
        }
    }

    pub fn add_cost(&mut self, value: usize, cost: f64) {
        if let Some(c) = &mut self.local[value] {
            *c += cost;
        }
    }

    pub fn forbid(&mut self, value: usize) {
        self.local[value] = None;
    }

    /// Places the train: node `k` has legs `(in, sides..., out)`, where `in`
    /// is the variable leg for the first node and the last node has no `out`.
    pub fn emit(mut self, circ: &mut Circuit) -> Result<()> {
        self.taps.sort_by_key(|t| t.key);
        let d = self.dim;
        if self.taps.is_empty() {
            let entries = (0..d)
                .filter_map(|i| self.local[i].map(|c| (smallvec::smallvec![i], c)))
                .collect();
            circ.costed(&[End::Open(self.label.clone(), d)], entries)?;
            return Ok(());
        }
        let last = self.taps.len() - 1;
        let mut incoming = End::Open(self.label.clone(), d);
        for (k, tap) in self.taps.iter().enumerate() {
            let mut ends = vec![incoming.clone()];
            ends.extend(tap.sides.iter().map(|&w| End::Wire(w)));
            let out = (k < last).then(|| circ.wire(d));
            if let Some(w) = out {
                ends.push(End::Wire(w));
            }
            let mut entries = Vec::new();
            for i in 0..d {
                let base = if k == 0 {
                    match self.local[i] {
                        Some(c) => c,
                        None => continue,
                    }
                } else {
                    0.0
                };
                for (sides, c) in (tap.entries)(i) {
                    let mut idx: MultiIndex = SmallVec::with_capacity(sides.len() + 2);
                    idx.push(i);
                    idx.extend_from_slice(&sides);
                    if out.is_some() {
                        idx.push(i);
                    }
                    entries.push((idx, base + c));
                }
            }
            circ.costed(&ends, entries)?;
            if let Some(w) = out {
                incoming = End::Wire(w);
            }
        }
        Ok(())
    }
}

/// Per-position side entries of an occurrence-counting layer over `n`
/// variables: the count of `value` travels along the layer and may not
/// exceed `cap`; with `exact` it must end at exactly `cap`.
///
/// Position `p` has side legs `(count_in, count_out)`, without `count_in`
/// at the first position and without `count_out` at the last.
pub(crate) fn layer_entries(
    p: usize,
    n: usize,
    value: usize,
    cap: usize,
    exact: bool,
) -> impl Fn(usize) -> SideEntries {
    let in_ext = if p == 0 { 1 } else { cap.min(p) + 1 };
    let last = p + 1 == n;
    move |i| {
        let mut out = Vec::new();
        for c in 0..in_ext {
            let next = c + usize::from(i == value);
            if next > cap || (last && exact && next != cap) {
                continue;
            }
            let mut sides: MultiIndex = SmallVec::new();
            if p > 0 {
                sides.push(c);
            }
            if !last {
                sides.push(next);
            }
            out.push((sides, 0.0));
        }
        out
    }
}

/// Extent of the count wire leaving position `p`.
pub(crate) fn layer_extent(p: usize, cap: usize) -> usize {
    cap.min(p + 1) + 1
}

/// A chain of nodes, one per variable, carrying an integer signal that each
/// variable updates. The signal starts at 0; `step(k, x, s)` returns the new
/// signal and a cost (or `None` to forbid), and `accept(s)` gives the cost
/// of a final signal (or `None` to reject it). Signal extents are tightened
/// to the values that are both reachable and able to reach acceptance.
pub(crate) struct SignalChain<'a> {
    pub labels: Vec<String>,
    pub dims: Vec<usize>,
    pub step: &'a dyn Fn(usize, usize, i64) -> Option<(i64, f64)>,
    pub accept: &'a dyn Fn(i64) -> Option<f64>,
}

impl SignalChain<'_> {
    pub fn emit(&self, circ: &mut Circuit) -> Result<()> {
        use std::collections::BTreeSet;
        let n = self.dims.len();
        let mut reach: Vec<BTreeSet<i64>> = Vec::with_capacity(n);
        let mut prev: BTreeSet<i64> = [0].into();
        for k in 0..n {
            let mut next = BTreeSet::new();
            for &s in &prev {
                for x in 0..self.dims[k] {
                    if let Some((t, _)) = (self.step)(k, x, s) {
                        next.insert(t);
                    }
                }
            }
            reach.push(next.clone());
            prev = next;
        }
        // Keep only signals that can still end in an accepted state.
        let mut alive: Vec<Vec<i64>> = vec![Vec::new(); n];
        alive[n - 1] = reach[n - 1]
            .iter()
            .copied()
            .filter(|&s| (self.accept)(s).is_some())
            .collect();
        for k in (0..n - 1).rev() {
            let later: BTreeSet<i64> = alive[k + 1].iter().copied().collect();
            alive[k] = reach[k]
                .iter()
                .copied()
                .filter(|&s| {
                    (0..self.dims[k + 1]).any(
                        |x| matches!((self.step)(k + 1, x, s), Some((t, _)) if later.contains(&t)),
                    )
                })
                .collect();
        }
        let wires: Vec<Wire> = (0..n.saturating_sub(1))
            .map(|k| circ.wire(alive[k].len()))
            .collect();
        for k in 0..n {
            let inputs: Vec<i64> = if k == 0 {
                vec![0]
            } else {
                alive[k - 1].clone()
            };
            let mut ends = vec![End::Open(self.labels[k].clone(), self.dims[k])];
            if k > 0 {
                ends.push(End::Wire(wires[k - 1]));
            }
            if k + 1 < n {
                ends.push(End::Wire(wires[k]));
            }
            let mut entries = Vec::new();
            for (j, &s) in inputs.iter().enumerate() {
                for x in 0..self.dims[k] {
                    let Some((t, c)) = (self.step)(k, x, s) else {
                        continue;
                    };
                    let mut idx: MultiIndex = smallvec::smallvec![x];
                    if k > 0 {
                        idx.push(j);
                    }
                    if k + 1 < n {
                        match alive[k].binary_search(&t) {
                            Ok(pos) => idx.push(pos),
                            Err(_) => continue,
                        }
                        entries.push((idx, c));
                    } else if let Some(f) = (self.accept)(t) {
                        entries.push((idx, c + f));
                    }
                }
            }
            circ.costed(&ends, entries)?;
        }
        Ok(())
    }
}
