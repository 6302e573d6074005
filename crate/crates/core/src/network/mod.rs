//! Tensor networks: nodes wired through bonds between leg slots, with the
//! remaining slots exposed as labelled open legs.
//!
//! Contraction runs pairwise merges from a [`ContractionPlan`], renormalizing
//! after each merge and accumulating the natural log of the removed scale.
//! The network itself may carry a log prefactor (builders factor the largest
//! weight out of each exponential tensor), which is folded into the reported
//! log scale.

mod plan;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::tensor::{self, Amplitude, SparseTensor};

pub use plan::{best_plan, plan_contraction, sweep_plan, ContractionPlan, PlanStep};

pub type NodeId = usize;

/// A leg of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub node: NodeId,
    pub leg: usize,
}

impl Slot {
    pub fn new(node: NodeId, leg: usize) -> Self {
        Slot { node, leg }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TensorNetwork {
    nodes: BTreeMap<NodeId, SparseTensor>,
    bonds: Vec<(Slot, Slot)>,
    open: Vec<(String, Slot)>,
    next_id: NodeId,
    log_prefactor: f64,
}

impl TensorNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, tensor: SparseTensor) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(id, tensor);
        id
    }

    fn extent(&self, slot: Slot) -> Result<usize> {
        let t = self
            .nodes
            .get(&slot.node)
            .ok_or_else(|| Error::InvalidNetwork(format!("no node {}", slot.node)))?;
        t.dims().get(slot.leg).copied().ok_or_else(|| {
            Error::InvalidNetwork(format!(
                "node {} has no leg {} (rank {})",
                slot.node,
                slot.leg,
                t.rank()
            ))
        })
    }

    fn slot_in_use(&self, slot: Slot) -> bool {
        self.bonds.iter().any(|&(a, b)| a == slot || b == slot)
            || self.open.iter().any(|(_, s)| *s == slot)
    }

    /// Bonds two slots of distinct nodes with equal extents.
    pub fn connect(&mut self, a: Slot, b: Slot) -> Result<()> {
        let (ea, eb) = (self.extent(a)?, self.extent(b)?);
        if a.node == b.node {
            return Err(Error::InvalidNetwork(format!(
                "self-bond on node {}",
                a.node
            )));
        }
        if ea != eb {
            return Err(Error::Shape(format!(
                "bond {}.{} (extent {ea}) to {}.{} (extent {eb})",
                a.node, a.leg, b.node, b.leg
            )));
        }
        for s in [a, b] {
            if self.slot_in_use(s) {
                return Err(Error::InvalidNetwork(format!(
                    "slot {}.{} already wired",
                    s.node, s.leg
                )));
            }
        }
        self.bonds.push((a, b));
        Ok(())
    }

    /// Declares `slot` as an open leg named `label`.
    pub fn expose(&mut self, label: impl Into<String>, slot: Slot) -> Result<()> {
        let label = label.into();
        self.extent(slot)?;
        if self.open.iter().any(|(l, _)| *l == label) {
            return Err(Error::InvalidNetwork(format!(
                "duplicate open leg `{label}`"
            )));
        }
        if self.slot_in_use(slot) {
            return Err(Error::InvalidNetwork(format!(
                "slot {}.{} already wired",
                slot.node, slot.leg
            )));
        }
        self.open.push((label, slot));
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Option<&SparseTensor> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &SparseTensor)> + '_ {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn bonds(&self) -> &[(Slot, Slot)] {
        &self.bonds
    }

    pub fn open_legs(&self) -> &[(String, Slot)] {
        &self.open
    }

    pub fn open_leg(&self, label: &str) -> Option<Slot> {
        self.open.iter().find(|(l, _)| l == label).map(|(_, s)| *s)
    }

    pub fn open_extent(&self, label: &str) -> Option<usize> {
        self.open_leg(label).and_then(|s| self.extent(s).ok())
    }

    /// Reorders the open legs to follow `labels`, which must name each open
    /// leg exactly once.
    pub fn order_open_legs(&mut self, labels: &[String]) -> Result<()> {
        if labels.len() != self.open.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} labels for {} open legs",
                labels.len(),
                self.open.len()
            )));
        }
        let mut reordered = Vec::with_capacity(labels.len());
        for label in labels {
            let slot = self
                .open_leg(label)
                .ok_or_else(|| Error::UnknownLeg(label.clone()))?;
            reordered.push((label.clone(), slot));
        }
        self.open = reordered;
        Ok(())
    }

    /// Natural log of the scalar factor multiplying the whole network.
    pub fn log_prefactor(&self) -> f64 {
        self.log_prefactor
    }

    pub fn add_log_prefactor(&mut self, log: f64) {
        self.log_prefactor += log;
    }

    /// Multiplies one node by a scalar.
    pub fn scale_node(&mut self, id: NodeId, factor: Amplitude) -> Result<()> {
        let t = self
            .nodes
            .get_mut(&id)
            .ok_or_else(|| Error::InvalidNetwork(format!("no node {id}")))?;
        *t = t.scale(factor);
        Ok(())
    }

    /// Checks that every slot is wired exactly once and bonds match extents.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<Slot, &'static str> = HashMap::new();
        for &(a, b) in &self.bonds {
            if a.node == b.node {
                return Err(Error::InvalidNetwork(format!(
                    "self-bond on node {}",
                    a.node
                )));
            }
            if self.extent(a)? != self.extent(b)? {
                return Err(Error::Shape(format!(
                    "bond {}.{} to {}.{} joins unequal extents",
                    a.node, a.leg, b.node, b.leg
                )));
            }
            for s in [a, b] {
                if seen.insert(s, "bond").is_some() {
                    return Err(Error::InvalidNetwork(format!(
                        "slot {}.{} wired twice",
                        s.node, s.leg
                    )));
                }
            }
        }
        for (label, s) in &self.open {
            self.extent(*s)?;
            if seen.insert(*s, "open").is_some() {
                return Err(Error::InvalidNetwork(format!(
                    "open leg `{label}` reuses slot {}.{}",
                    s.node, s.leg
                )));
            }
        }
        for (&id, t) in &self.nodes {
            for leg in 0..t.rank() {
                if !seen.contains_key(&Slot::new(id, leg)) {
                    return Err(Error::InvalidNetwork(format!(
                        "slot {id}.{leg} is dangling"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Closes the open leg `label` with a one-leg `vector`.
    pub fn attach_boundary(mut self, label: &str, vector: SparseTensor) -> Result<Self> {
        let pos = self
            .open
            .iter()
            .position(|(l, _)| l == label)
            .ok_or_else(|| Error::UnknownLeg(label.to_string()))?;
        if vector.rank() != 1 {
            return Err(Error::Shape(format!(
                "boundary for `{label}` must have one leg, got {}",
                vector.rank()
            )));
        }
        let slot = self.open[pos].1;
        let extent = self.extent(slot)?;
        if vector.dims()[0] != extent {
            return Err(Error::Shape(format!(
                "boundary for `{label}` has extent {} but the leg has {extent}",
                vector.dims()[0]
            )));
        }
        self.open.remove(pos);
        let id = self.add_node(vector);
        self.bonds.push((slot, Slot::new(id, 0)));
        Ok(self)
    }

    /// Text description: one `node`, `bond` or `open` line per item.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, t) in &self.nodes {
            let dims: Vec<String> = t.dims().iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "node {id} dims={}", dims.join(","));
        }
        for (a, b) in &self.bonds {
            let _ = writeln!(out, "bond {}.{} {}.{}", a.node, a.leg, b.node, b.leg);
        }
        for (label, s) in &self.open {
            let _ = writeln!(out, "open {label} {}.{}", s.node, s.leg);
        }
        out
    }

    /// Contracts with [`best_plan`].
    pub fn contract(&self) -> Result<Contracted> {
        let plan = best_plan(self)?;
        contract(self, &plan)
    }
}

/// Result of a full contraction: the true tensor is `tensor * exp(log_scale)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Contracted {
    pub tensor: SparseTensor,
    pub log_scale: f64,
}

impl Contracted {
    /// Entries with the log scale folded back in. Overflows for huge scales.
    pub fn rescaled(&self) -> SparseTensor {
        if self.log_scale == f64::NEG_INFINITY {
            return self.tensor.scale(Amplitude::new(0.0, 0.0));
        }
        self.tensor.scale(Amplitude::new(self.log_scale.exp(), 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.tensor.is_zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum LegTag {
    Bond(usize),
    Open(usize),
}

/// Per-node leg tags: which bond or open leg each slot belongs to.
pub(crate) fn leg_tags(net: &TensorNetwork) -> BTreeMap<NodeId, Vec<LegTag>> {
    let mut tags: BTreeMap<NodeId, Vec<LegTag>> = net
        .nodes
        .iter()
        .map(|(&id, t)| (id, vec![LegTag::Open(usize::MAX); t.rank()]))
        .collect();
    for (b, (x, y)) in net.bonds.iter().enumerate() {
        tags.get_mut(&x.node).unwrap()[x.leg] = LegTag::Bond(b);
        tags.get_mut(&y.node).unwrap()[y.leg] = LegTag::Bond(b);
    }
    for (k, (_, s)) in net.open.iter().enumerate() {
        tags.get_mut(&s.node).unwrap()[s.leg] = LegTag::Open(k);
    }
    tags
}

struct Live {
    tensor: SparseTensor,
    tags: Vec<LegTag>,
}

fn merge(a: Live, b: Live, exec: Exec) -> Result<Live> {
    let mut legs_a = Vec::new();
    let mut legs_b = Vec::new();
    for (i, tag) in a.tags.iter().enumerate() {
        if let LegTag::Bond(_) = tag {
            if let Some(j) = b.tags.iter().position(|t| t == tag) {
                legs_a.push(i);
                legs_b.push(j);
            }
        }
    }
    let tensor = tensor::contract_pair_with(&a.tensor, &legs_a, &b.tensor, &legs_b, exec)?;
    let tags = a
        .tags
        .iter()
        .enumerate()
        .filter(|(i, _)| !legs_a.contains(i))
        .map(|(_, t)| *t)
        .chain(
            b.tags
                .iter()
                .enumerate()
                .filter(|(j, _)| !legs_b.contains(j))
                .map(|(_, t)| *t),
        )
        .collect();
    Ok(Live { tensor, tags })
}

fn zero_result(net: &TensorNetwork) -> Result<Contracted> {
    let dims: Vec<usize> = net
        .open
        .iter()
        .map(|(_, s)| net.extent(*s))
        .collect::<Result<_>>()?;
    let tensor = if dims.is_empty() {
        SparseTensor::scalar(Amplitude::new(0.0, 0.0))
    } else {
        SparseTensor::zeros(&dims)?
    };
    Ok(Contracted {
        tensor,
        log_scale: f64::NEG_INFINITY,
    })
}

/// Executes `plan` on `net`. The result's legs follow the open-leg
/// declaration order. An all-zero network yields an empty tensor with
/// `log_scale = -inf`.
pub fn contract(net: &TensorNetwork, plan: &ContractionPlan) -> Result<Contracted> {
    contract_with(net, plan, Exec::default())
}

pub fn contract_with(
    net: &TensorNetwork,
    plan: &ContractionPlan,
    exec: Exec,
) -> Result<Contracted> {
    net.validate()?;
    let mut live: BTreeMap<NodeId, Live> = leg_tags(net)
        .into_iter()
        .map(|(id, tags)| {
            (
                id,
                Live {
                    tensor: net.nodes[&id].clone(),
                    tags,
                },
            )
        })
        .collect();
    let mut log_scale = net.log_prefactor;

    for &(a, b) in plan.steps() {
        if a == b {
            return Err(Error::InvalidPlan(format!(
                "step merges node {a} with itself"
            )));
        }
        let (Some(la), Some(lb)) = (live.remove(&a), live.remove(&b)) else {
            return Err(Error::InvalidPlan(format!(
                "step ({a}, {b}) references a node that no longer exists"
            )));
        };
        let (first, second) = if a < b { (la, lb) } else { (lb, la) };
        let mut merged = merge(first, second, exec)?;
        match merged.tensor.normalize_max() {
            Ok((t, log)) => {
                merged.tensor = t;
                log_scale += log;
            }
            Err(Error::DegenerateTensor) => return zero_result(net),
            Err(e) => return Err(e),
        }
        live.insert(a.min(b), merged);
    }

    // Whatever remains: disconnected components, or nodes the plan skipped.
    let mut rest = live.into_values();
    let mut acc = match rest.next() {
        Some(first) => first,
        None => Live {
            tensor: SparseTensor::scalar(Amplitude::new(1.0, 0.0)),
            tags: Vec::new(),
        },
    };
    for next in rest {
        acc = merge(acc, next, exec)?;
        match acc.tensor.normalize_max() {
            Ok((t, log)) => {
                acc.tensor = t;
                log_scale += log;
            }
            Err(Error::DegenerateTensor) => return zero_result(net),
            Err(e) => return Err(e),
        }
    }
    if acc.tensor.is_zero() {
        return zero_result(net);
    }
    if acc.tags.iter().any(|t| matches!(t, LegTag::Bond(_))) {
        return Err(Error::InvalidPlan("bond left uncontracted".into()));
    }
    let mut order: Vec<(usize, usize)> = acc
        .tags
        .iter()
        .enumerate()
        .map(|(pos, t)| match t {
            LegTag::Open(k) => (*k, pos),
            LegTag::Bond(_) => unreachable!(),
        })
        .collect();
    order.sort_unstable();
    let perm: Vec<usize> = order.into_iter().map(|(_, pos)| pos).collect();
    let tensor = acc.tensor.permute(&perm)?;
    Ok(Contracted { tensor, log_scale })
}

/// A problem variable and its number of values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub label: String,
    pub dim: usize,
}

/// Ordered problem variables, each bound to the open leg of the same label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VariableLayout {
    variables: Vec<Variable>,
}

impl VariableLayout {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        for (i, v) in variables.iter().enumerate() {
            if v.dim == 0 {
                return Err(Error::InvalidDimension(format!(
                    "variable `{}` has dim 0",
                    v.label
                )));
            }
            if variables[..i].iter().any(|w| w.label == v.label) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate variable `{}`",
                    v.label
                )));
            }
        }
        Ok(VariableLayout { variables })
    }

    /// Variables `prefix0, prefix1, ...` with the given dimensions.
    pub fn indexed(prefix: &str, dims: &[usize]) -> Result<Self> {
        Self::new(
            dims.iter()
                .enumerate()
                .map(|(i, &dim)| Variable {
                    label: format!("{prefix}{i}"),
                    dim,
                })
                .collect(),
        )
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.dim).collect()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.label == label)
    }

    pub fn label(&self, k: usize) -> &str {
        &self.variables[k].label
    }

    /// Every variable is an open leg of matching extent and every open leg
    /// is a variable.
    pub fn check(&self, net: &TensorNetwork) -> Result<()> {
        for v in &self.variables {
            match net.open_extent(&v.label) {
                None => return Err(Error::UnknownLeg(v.label.clone())),
                Some(e) if e != v.dim => {
                    return Err(Error::Shape(format!(
                        "variable `{}` has dim {} but its leg has extent {e}",
                        v.label, v.dim
                    )))
                }
                _ => {}
            }
        }
        for (label, _) in net.open_legs() {
            if self.position(label).is_none() {
                return Err(Error::InvalidNetwork(format!(
                    "open leg `{label}` is not a variable"
                )));
            }
        }
        Ok(())
    }
}

/// Boundary vectors placed on free (non-target, non-fixed) variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TraceMode {
    #[default]
    Plus,
    /// Unit-modulus phase vectors, so that suboptimal amplitudes interfere.
    Phase,
}

/// Amplitude vector of one variable, `amplitudes * exp(log_scale)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfTrace {
    pub amplitudes: Vec<Amplitude>,
    pub log_scale: f64,
}

/// Closes fixed variables with projection vectors and every other
/// non-target variable with plus (or phase) vectors, then contracts, leaving
/// the target's amplitude vector.
pub fn half_partial_trace(
    net: TensorNetwork,
    layout: &VariableLayout,
    target: &str,
    fixed: &BTreeMap<String, usize>,
    mode: TraceMode,
) -> Result<HalfTrace> {
    layout.check(&net)?;
    let target_var = layout
        .position(target)
        .ok_or_else(|| Error::UnknownLeg(target.to_string()))?;
    if fixed.contains_key(target) {
        return Err(Error::InvalidNetwork(format!(
            "target `{target}` is also fixed"
        )));
    }
    for label in fixed.keys() {
        if layout.position(label).is_none() {
            return Err(Error::UnknownLeg(label.clone()));
        }
    }
    let mut net = net;
    for (k, var) in layout.variables().iter().enumerate() {
        if k == target_var {
            continue;
        }
        let vector = match fixed.get(&var.label) {
            Some(&value) => tensor::make_projection(var.dim, value as i64)?,
            None => match mode {
                TraceMode::Plus => tensor::make_plus(var.dim)?,
                TraceMode::Phase => tensor::make_phase(var.dim)?,
            },
        };
        net = net.attach_boundary(&var.label, vector)?;
    }
    let out = net.contract()?;
    if out.is_zero() {
        return Err(Error::InfeasibleSignal(target.to_string()));
    }
    Ok(HalfTrace {
        amplitudes: out.tensor.to_vector().expect("one open leg remains"),
        log_scale: out.log_scale,
    })
}
