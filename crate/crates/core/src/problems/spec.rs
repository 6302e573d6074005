//! Problem instances as plain data.
//!
//! Every family is a variant of [`ProblemSpec`]; the serde representation is a
//! JSON object with a `family` tag. [`ProblemSpec::normalize`] validates the
//! instance and brings it into canonical form (for example folding the upper
//! triangle of a quadratic matrix into the lower one), so
//! `normalize(parse(emit(spec))) == spec` for any normalized spec.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a family asks for a preimage, any feasible point, or an optimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Inversion,
    Csp,
    Optimization,
}

/// A scalar applied linearly to the variable value, or an explicit table
/// indexed by the value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile<T> {
    Linear(T),
    Table(Vec<T>),
}

/// `f(z) = values[z - offset]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntFunction {
    pub offset: i64,
    pub values: Vec<f64>,
}

impl IntFunction {
    pub fn eval(&self, z: i64) -> Option<f64> {
        let k = z.checked_sub(self.offset)?;
        usize::try_from(k)
            .ok()
            .and_then(|k| self.values.get(k).copied())
    }
}

/// Cost table over a pair of variables, `table[x_i][x_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub table: Vec<Vec<f64>>,
}

/// Higher-order term: either `coef * prod(x_v)` over `vars` (repeats
/// allowed) or a row-major table over distinct `vars`, first variable
/// slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HigherTerm {
    pub vars: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

/// Edge costs of a shortest-path instance: one matrix for every step, or one
/// per step. `null` marks a missing edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepCosts {
    Static(Vec<Vec<Option<f64>>>),
    PerStep(Vec<Vec<Vec<Option<f64>>>>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnapsackVariant {
    #[default]
    Linear,
    Nonlinear,
    /// Total weight `W` must satisfy `sum_k coefficients[k] * W^k <= capacity`.
    Polynomial {
        coefficients: Vec<i64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Qubo {
    pub q: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Qudo {
    pub q: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tqudo {
    pub dims: Vec<usize>,
    pub terms: Vec<PairTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hobo {
    pub dims: Vec<usize>,
    pub terms: Vec<HigherTerm>,
}

/// Minimize `f(sum_i g_i(x_i))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumFunction {
    pub dims: Vec<usize>,
    pub weights: Vec<Profile<i64>>,
    pub f: IntFunction,
}

/// `Q_0 = first[x_0]`, `Q_k = tables[k-1][x_k][Q_{k-1} - q_offset]`;
/// minimize the final `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nested {
    pub first: Vec<i64>,
    pub q_offset: i64,
    pub tables: Vec<Vec<Vec<i64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditionInv {
    pub c: u64,
    pub bits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplicationInv {
    pub c: u64,
    pub bits_a: usize,
    pub bits_b: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSystem {
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleOne {
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub s: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coloring {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex_costs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub minimize_colors: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortestPath {
    pub vertices: usize,
    pub costs: StepCosts,
    pub source: usize,
    pub sink: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tsp {
    pub costs: Vec<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knapsack {
    pub weights: Vec<Profile<i64>>,
    pub values: Vec<Profile<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caps: Option<Vec<usize>>,
    pub capacity: i64,
    #[serde(default)]
    pub variant: KnapsackVariant,
}

/// Maximize `c . x` subject to `A x <= b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ilp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub dims: Vec<usize>,
}

/// Minimize `sum_{j<=i} Q_ij x_i x_j + c . x` subject to `A x <= b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Iqp {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub dims: Vec<usize>,
}

/// Minimize a higher-order polynomial subject to `A x <= b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ipp {
    pub terms: Vec<HigherTerm>,
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Graph {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominatingSet {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

/// Agent `i` does task `x_i` (0 = idle) at cost `costs[i][x_i]`; every real
/// task is done at most once and the number of tasks done is maximized
/// first, via a bonus `lambda` per busy agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub costs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// When `family` is the first key the rest of the object goes straight to
/// the family's struct, so format errors keep their position in the source.
/// Otherwise the object is buffered first and positions are lost.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemSpec {
    Qubo(Qubo),
    Qudo(Qudo),
    Tqudo(Tqudo),
    Hobo(Hobo),
    SumFunction(SumFunction),
    Nested(Nested),
    AdditionInv(AdditionInv),
    MultiplicationInv(MultiplicationInv),
    LinearSystem(LinearSystem),
    SingleOne(SingleOne),
    Partition(Partition),
    Coloring(Coloring),
    ShortestPathCost(ShortestPath),
    ShortestPathRoute(ShortestPath),
    Tsp(Tsp),
    Knapsack(Knapsack),
    Ilp(Ilp),
    Iqp(Iqp),
    Ipp(Ipp),
    Mis(Graph),
    VertexCover(Graph),
    DominatingSet(DominatingSet),
    Assignment(Assignment),
}

macro_rules! spec_families {
    ($($name:literal => $variant:ident($ty:ty),)*) => {
        const FAMILY_NAMES: &[&str] = &[$($name),*];

        fn deserialize_family<'de, A>(family: &str, rest: A) -> std::result::Result<ProblemSpec, A::Error>
        where
            A: serde::de::MapAccess<'de>,
        {
            let de = serde::de::value::MapAccessDeserializer::new(rest);
            match family {
                $($name => <$ty>::deserialize(de).map(ProblemSpec::$variant),)*
                other => Err(serde::de::Error::unknown_variant(other, FAMILY_NAMES)),
            }
        }
    };
}

spec_families! {
    "qubo" => Qubo(Qubo),
    "qudo" => Qudo(Qudo),
    "tqudo" => Tqudo(Tqudo),
    "hobo" => Hobo(Hobo),
    "sum_function" => SumFunction(SumFunction),
    "nested" => Nested(Nested),
    "addition_inv" => AdditionInv(AdditionInv),
    "multiplication_inv" => MultiplicationInv(MultiplicationInv),
    "linear_system" => LinearSystem(LinearSystem),
    "single_one" => SingleOne(SingleOne),
    "partition" => Partition(Partition),
    "coloring" => Coloring(Coloring),
    "shortest_path_cost" => ShortestPathCost(ShortestPath),
    "shortest_path_route" => ShortestPathRoute(ShortestPath),
    "tsp" => Tsp(Tsp),
    "knapsack" => Knapsack(Knapsack),
    "ilp" => Ilp(Ilp),
    "iqp" => Iqp(Iqp),
    "ipp" => Ipp(Ipp),
    "mis" => Mis(Graph),
    "vertex_cover" => VertexCover(Graph),
    "dominating_set" => DominatingSet(DominatingSet),
    "assignment" => Assignment(Assignment),
}

impl<'de> Deserialize<'de> for ProblemSpec {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        struct SpecVisitor;

        impl<'de> serde::de::Visitor<'de> for SpecVisitor {
            type Value = ProblemSpec;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an object with a `family` key")
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<ProblemSpec, A::Error> {
                let mut buffered = Vec::new();
                loop {
                    match map.next_key::<String>()? {
                        Some(key) if key == "family" => {
                            let family: String = map.next_value()?;
                            if buffered.is_empty() {
                                return deserialize_family(&family, map);
                            }
                            while let Some(entry) =
                                map.next_entry::<String, serde_value::Value>()?
                            {
                                buffered.push(entry);
                            }
                            let rest = buffered.into_iter().map(|(k, v)| {
                                (k, serde_value::ValueDeserializer::<A::Error>::new(v))
                            });
                            return deserialize_family(
                                &family,
                                serde::de::value::MapDeserializer::new(rest),
                            );
                        }
                        Some(key) => {
                            let value: serde_value::Value = map.next_value()?;
                            buffered.push((key, value));
                        }
                        None => return Err(serde::de::Error::missing_field("family")),
                    }
                }
            }
        }

        deserializer.deserialize_map(SpecVisitor)
    }
}

fn fail<T>(field: impl Into<String>, reason: impl Into<String>) -> Result<T> {
    Err(Error::spec(field, reason))
}

fn check_dims(field: &str, dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return fail(field, "at least one variable is required");
    }
    for (i, &d) in dims.iter().enumerate() {
        if d == 0 {
            return fail(format!("{field}[{i}]"), "dimension must be positive");
        }
    }
    Ok(())
}

fn check_finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        fail(field, "must be finite")
    }
}

fn check_square(field: &str, q: &[Vec<f64>], n: usize) -> Result<()> {
    if q.len() != n {
        return fail(field, format!("expected {n} rows, got {}", q.len()));
    }
    for (i, row) in q.iter().enumerate() {
        if row.len() != n {
            return fail(
                format!("{field}[{i}]"),
                format!("expected {n} columns, got {}", row.len()),
            );
        }
        for (j, &v) in row.iter().enumerate() {
            check_finite(&format!("{field}[{i}][{j}]"), v)?;
        }
    }
    Ok(())
}

/// Folds `q[i][j]` with `j > i` into `q[j][i]`, so only `j <= i` is used.
fn fold_lower(q: &mut [Vec<f64>]) {
    let n = q.len();
    for i in 0..n {
        for j in i + 1..n {
            let v = q[i][j];
            if v != 0.0 {
                q[j][i] += v;
                q[i][j] = 0.0;
            }
        }
    }
}

fn check_graph(vertices: usize, edges: &[[usize; 2]]) -> Result<()> {
    if vertices == 0 {
        return fail("vertices", "graph needs at least one vertex");
    }
    let mut seen = std::collections::BTreeSet::new();
    for (e, &[u, v]) in edges.iter().enumerate() {
        if u >= vertices || v >= vertices {
            return fail(
                format!("edges[{e}]"),
                format!("vertex out of range 0..{vertices}"),
            );
        }
        if u == v {
            return fail(format!("edges[{e}]"), "self-loops are not allowed");
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return fail(format!("edges[{e}]"), "duplicate edge");
        }
    }
    Ok(())
}

fn check_constraints(a: &[Vec<i64>], b: &[i64], n: usize) -> Result<()> {
    if a.len() != b.len() {
        return fail(
            "b",
            format!(
                "expected {} entries (one per row of a), got {}",
                a.len(),
                b.len()
            ),
        );
    }
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return fail(
                format!("a[{i}]"),
                format!("expected {n} columns, got {}", row.len()),
            );
        }
        for (j, &v) in row.iter().enumerate() {
            if v < 0 {
                return fail(format!("a[{i}][{j}]"), "must be a nonnegative integer");
            }
        }
    }
    for (i, &v) in b.iter().enumerate() {
        if v < 0 {
            return fail(format!("b[{i}]"), "must be a nonnegative integer");
        }
    }
    Ok(())
}

fn check_terms(field: &str, dims: &[usize], terms: &[HigherTerm]) -> Result<()> {
    for (t, term) in terms.iter().enumerate() {
        let f = format!("{field}[{t}]");
        if term.vars.is_empty() {
            return fail(format!("{f}.vars"), "a term needs at least one variable");
        }
        for &v in &term.vars {
            if v >= dims.len() {
                return fail(format!("{f}.vars"), format!("variable {v} out of range"));
            }
        }
        match (&term.coef, &term.table) {
            (Some(c), None) => check_finite(&format!("{f}.coef"), *c)?,
            (None, Some(table)) => {
                let mut sorted = term.vars.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != term.vars.len() {
                    return fail(format!("{f}.vars"), "a table term cannot repeat a variable");
                }
                let volume: usize = term.vars.iter().map(|&v| dims[v]).product();
                if table.len() != volume {
                    return fail(
                        format!("{f}.table"),
                        format!("expected {volume} values, got {}", table.len()),
                    );
                }
                for (k, &v) in table.iter().enumerate() {
                    check_finite(&format!("{f}.table[{k}]"), v)?;
                }
            }
            _ => return fail(&f, "exactly one of `coef` and `table` is required"),
        }
    }
    Ok(())
}

impl Profile<i64> {
    /// Table over `0..dim` (linear profiles scale the value).
    pub fn table(&self, dim: usize) -> Vec<i64> {
        match self {
            Profile::Linear(a) => (0..dim as i64).map(|x| a * x).collect(),
            Profile::Table(t) => t.clone(),
        }
    }
}

impl Profile<f64> {
    pub fn table(&self, dim: usize) -> Vec<f64> {
        match self {
            Profile::Linear(a) => (0..dim).map(|x| a * x as f64).collect(),
            Profile::Table(t) => t.clone(),
        }
    }
}

impl<T> Profile<T> {
    fn table_len(&self) -> Option<usize> {
        match self {
            Profile::Linear(_) => None,
            Profile::Table(t) => Some(t.len()),
        }
    }
}

impl StepCosts {
    /// Cost of moving `from -> to` between positions `t` and `t + 1`.
    /// Staying put always costs 0.
    pub fn edge(&self, t: usize, from: usize, to: usize) -> Option<f64> {
        if from == to {
            return Some(0.0);
        }
        match self {
            StepCosts::Static(m) => m[from][to],
            StepCosts::PerStep(ms) => ms[t][from][to],
        }
    }
}

impl ShortestPath {
    fn validate(&self) -> Result<()> {
        let v = self.vertices;
        if v == 0 {
            return fail("vertices", "must be positive");
        }
        if self.steps == 0 {
            return fail("steps", "must be positive");
        }
        if self.source >= v {
            return fail("source", format!("vertex out of range 0..{v}"));
        }
        if self.sink >= v {
            return fail("sink", format!("vertex out of range 0..{v}"));
        }
        let check_matrix = |field: String, m: &Vec<Vec<Option<f64>>>| -> Result<()> {
            if m.len() != v {
                return fail(field, format!("expected {v} rows, got {}", m.len()));
            }
            for (i, row) in m.iter().enumerate() {
                if row.len() != v {
                    return fail(format!("{field}[{i}]"), format!("expected {v} columns"));
                }
                for (j, e) in row.iter().enumerate() {
                    if let Some(c) = e {
                        check_finite(&format!("{field}[{i}][{j}]"), *c)?;
                        if i == j && *c != 0.0 {
                            return fail(
                                format!("{field}[{i}][{j}]"),
                                "staying at a vertex is free; the diagonal must be 0 or null",
                            );
                        }
                    }
                }
            }
            Ok(())
        };
        match &self.costs {
            StepCosts::Static(m) => check_matrix("costs".into(), m)?,
            StepCosts::PerStep(ms) => {
                if ms.len() + 1 < self.steps {
                    return fail(
                        "costs",
                        format!("{} step matrices for {} steps", ms.len(), self.steps),
                    );
                }
                for (t, m) in ms.iter().enumerate() {
                    check_matrix(format!("costs[{t}]"), m)?;
                }
            }
        }
        Ok(())
    }

    fn require_integer_costs(&self) -> Result<()> {
        for t in 0..self.steps.saturating_sub(1) {
            for i in 0..self.vertices {
                for j in 0..self.vertices {
                    if let Some(c) = self.edge_cost(t, i, j) {
                        if c < 0.0 || c.fract() != 0.0 {
                            return fail(
                                "costs",
                                "the cost histogram needs nonnegative integer edge costs",
                            );
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn edge_cost(&self, t: usize, from: usize, to: usize) -> Option<f64> {
        self.costs.edge(t, from, to)
    }

    /// Largest total cost a path of `steps` positions can accumulate; the
    /// histogram leg has this many plus one entries.
    pub fn max_total_cost(&self) -> usize {
        (0..self.steps.saturating_sub(1))
            .map(|t| {
                let mut best = 0.0f64;
                for i in 0..self.vertices {
                    for j in 0..self.vertices {
                        if let Some(c) = self.edge_cost(t, i, j) {
                            best = best.max(c);
                        }
                    }
                }
                best as usize
            })
            .sum()
    }
}

impl Knapsack {
    /// Number of copies allowed for each item.
    pub fn item_caps(&self) -> Vec<usize> {
        (0..self.weights.len())
            .map(|i| {
                if let Some(n) = self.weights[i].table_len().or(self.values[i].table_len()) {
                    return n - 1;
                }
                self.caps.as_ref().map_or(1, |c| c[i])
            })
            .collect()
    }

    pub fn weight_table(&self, i: usize) -> Vec<i64> {
        self.weights[i].table(self.item_caps()[i] + 1)
    }

    pub fn value_table(&self, i: usize) -> Vec<f64> {
        self.values[i].table(self.item_caps()[i] + 1)
    }

    /// Whether a total weight `w` satisfies the capacity constraint.
    pub fn admits(&self, w: i64) -> bool {
        match &self.variant {
            KnapsackVariant::Polynomial { coefficients } => {
                let w = w as i128;
                let mut total: i128 = 0;
                let mut power: i128 = 1;
                for &a in coefficients {
                    total = total.saturating_add((a as i128).saturating_mul(power));
                    power = power.saturating_mul(w);
                }
                total <= self.capacity as i128
            }
            _ => w <= self.capacity,
        }
    }

    /// True when exceeding the capacity at a partial sum can never be undone
    /// by adding more (nonnegative) weight.
    pub fn monotone(&self) -> bool {
        match &self.variant {
            KnapsackVariant::Polynomial { coefficients } => {
                coefficients[1..].iter().all(|&a| a >= 0)
            }
            _ => true,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 {
            return fail("weights", "at least one item is required");
        }
        if self.values.len() != n {
            return fail(
                "values",
                format!("expected {n} entries, got {}", self.values.len()),
            );
        }
        if self.capacity < 0 {
            return fail("capacity", "must be a nonnegative integer");
        }
        if let Some(caps) = &self.caps {
            if caps.len() != n {
                return fail("caps", format!("expected {n} entries, got {}", caps.len()));
            }
        }
        for i in 0..n {
            let (wl, vl) = (self.weights[i].table_len(), self.values[i].table_len());
            if let (Some(a), Some(b)) = (wl, vl) {
                if a != b {
                    return fail(
                        format!("values[{i}]"),
                        "weight and value tables differ in length",
                    );
                }
            }
            if let Some(len) = wl.or(vl) {
                if len == 0 {
                    return fail(format!("weights[{i}]"), "tables need at least one entry");
                }
                if let Some(c) = self.caps.as_ref().map(|c| c[i]) {
                    if c + 1 != len {
                        return fail(
                            format!("caps[{i}]"),
                            format!("table implies a cap of {}", len - 1),
                        );
                    }
                }
            }
            if self.variant == KnapsackVariant::Linear && (wl.is_some() || vl.is_some()) {
                return fail(
                    format!("weights[{i}]"),
                    "the linear variant takes scalar weights and values",
                );
            }
        }
        for i in 0..n {
            for (x, &w) in self.weight_table(i).iter().enumerate() {
                if w < 0 {
                    let field = match self.weights[i] {
                        Profile::Linear(_) => format!("weights[{i}]"),
                        Profile::Table(_) => format!("weights[{i}][{x}]"),
                    };
                    return fail(field, "weights must be nonnegative integers");
                }
            }
            for (x, &v) in self.value_table(i).iter().enumerate() {
                check_finite(&format!("values[{i}][{x}]"), v)?;
            }
        }
        if let KnapsackVariant::Polynomial { coefficients } = &self.variant {
            if coefficients.is_empty() {
                return fail(
                    "variant.polynomial.coefficients",
                    "at least one coefficient is required",
                );
            }
        }
        Ok(())
    }
}

impl Assignment {
    pub fn agents(&self) -> usize {
        self.costs.len()
    }

    /// Real tasks are `1..=tasks()`.
    pub fn tasks(&self) -> usize {
        self.costs.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    /// Bonus per busy agent. The default exceeds the spread of any
    /// assignment's total cost, so task count always dominates.
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| {
            1.0 + self
                .costs
                .iter()
                .map(|row| {
                    let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                    hi - lo
                })
                .sum::<f64>()
        })
    }
}

impl Nested {
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.first.len())
            .chain(self.tables.iter().map(|t| t.len()))
            .collect()
    }

    /// `f_k(x, q)`; `None` when the table does not cover `q`.
    pub fn step(&self, k: usize, x: usize, q: i64) -> Option<i64> {
        if k == 0 {
            return self.first.get(x).copied();
        }
        let row = self.tables.get(k - 1)?.get(x)?;
        let idx = usize::try_from(q.checked_sub(self.q_offset)?).ok()?;
        row.get(idx).copied()
    }
}

impl ProblemSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ProblemSpec::Qubo(_) => "qubo",
            ProblemSpec::Qudo(_) => "qudo",
            ProblemSpec::Tqudo(_) => "tqudo",
            ProblemSpec::Hobo(_) => "hobo",
            ProblemSpec::SumFunction(_) => "sum_function",
            ProblemSpec::Nested(_) => "nested",
            ProblemSpec::AdditionInv(_) => "addition_inv",
            ProblemSpec::MultiplicationInv(_) => "multiplication_inv",
            ProblemSpec::LinearSystem(_) => "linear_system",
            ProblemSpec::SingleOne(_) => "single_one",
            ProblemSpec::Partition(_) => "partition",
            ProblemSpec::Coloring(_) => "coloring",
            ProblemSpec::ShortestPathCost(_) => "shortest_path_cost",
            ProblemSpec::ShortestPathRoute(_) => "shortest_path_route",
            ProblemSpec::Tsp(_) => "tsp",
            ProblemSpec::Knapsack(_) => "knapsack",
            ProblemSpec::Ilp(_) => "ilp",
            ProblemSpec::Iqp(_) => "iqp",
            ProblemSpec::Ipp(_) => "ipp",
            ProblemSpec::Mis(_) => "mis",
            ProblemSpec::VertexCover(_) => "vertex_cover",
            ProblemSpec::DominatingSet(_) => "dominating_set",
            ProblemSpec::Assignment(_) => "assignment",
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemSpec::AdditionInv(_)
            | ProblemSpec::MultiplicationInv(_)
            | ProblemSpec::LinearSystem(_) => ProblemKind::Inversion,
            ProblemSpec::SingleOne(_) | ProblemSpec::Partition(_) => ProblemKind::Csp,
            ProblemSpec::Coloring(c) if c.vertex_costs.is_none() && !c.minimize_colors => {
                ProblemKind::Csp
            }
            _ => ProblemKind::Optimization,
        }
    }

    /// Whether the network weights depend on the imaginary-time constant.
    pub fn uses_tau(&self) -> bool {
        self.kind() == ProblemKind::Optimization
            && !matches!(self, ProblemSpec::ShortestPathCost(_))
    }

    /// Variable dimensions in solving order.
    pub fn variable_dims(&self) -> Vec<usize> {
        match self {
            ProblemSpec::Qubo(s) => vec![2; s.q.len()],
            ProblemSpec::Qudo(s) => s.dims.clone(),
            ProblemSpec::Tqudo(s) => s.dims.clone(),
            ProblemSpec::Hobo(s) => s.dims.clone(),
            ProblemSpec::SumFunction(s) => s.dims.clone(),
            ProblemSpec::Nested(s) => s.dims(),
            ProblemSpec::AdditionInv(s) => vec![2; 2 * s.bits],
            ProblemSpec::MultiplicationInv(s) => vec![2; s.bits_a + s.bits_b],
            ProblemSpec::LinearSystem(s) => s.dims.clone(),
            ProblemSpec::SingleOne(s) => vec![2; s.n],
            ProblemSpec::Partition(s) => vec![2; s.s.len()],
            ProblemSpec::Coloring(s) => vec![s.k; s.vertices],
            ProblemSpec::ShortestPathCost(s) => vec![s.max_total_cost() + 1],
            ProblemSpec::ShortestPathRoute(s) => vec![s.vertices; s.steps],
            ProblemSpec::Tsp(s) => vec![s.costs.len() - 1; s.costs.len() - 1],
            ProblemSpec::Knapsack(s) => s.item_caps().iter().map(|c| c + 1).collect(),
            ProblemSpec::Ilp(s) => s.dims.clone(),
            ProblemSpec::Iqp(s) => s.dims.clone(),
            ProblemSpec::Ipp(s) => s.dims.clone(),
            ProblemSpec::Mis(g) | ProblemSpec::VertexCover(g) => vec![2; g.vertices],
            ProblemSpec::DominatingSet(s) => vec![2; s.vertices],
            ProblemSpec::Assignment(s) => vec![s.tasks() + 1; s.agents()],
        }
    }

    /// Labels of the variable legs, aligned with [`ProblemSpec::variable_dims`].
    pub fn variable_labels(&self) -> Vec<String> {
        match self {
            ProblemSpec::AdditionInv(s) => (0..s.bits)
                .flat_map(|k| [format!("a{k}"), format!("b{k}")])
                .collect(),
            ProblemSpec::MultiplicationInv(s) => (0..s.bits_a)
                .map(|k| format!("a{k}"))
                .chain((0..s.bits_b).map(|k| format!("b{k}")))
                .collect(),
            ProblemSpec::ShortestPathCost(_) => vec!["cost".to_string()],
            _ => (0..self.variable_dims().len())
                .map(|k| format!("x{k}"))
                .collect(),
        }
    }

    /// Size of the full combination space, saturating.
    pub fn state_count(&self) -> u128 {
        self.variable_dims()
            .iter()
            .fold(1u128, |acc, &d| acc.saturating_mul(d as u128))
    }

    /// Validates the instance and brings it into canonical form.
    pub fn normalize(mut self) -> Result<Self> {
        match &mut self {
            ProblemSpec::Qubo(s) => {
                let n = s.q.len();
                if n == 0 {
                    return fail("q", "at least one variable is required");
                }
                check_square("q", &s.q, n)?;
                fold_lower(&mut s.q);
            }
            ProblemSpec::Qudo(s) => {
                check_dims("dims", &s.dims)?;
                check_square("q", &s.q, s.dims.len())?;
                fold_lower(&mut s.q);
            }
            ProblemSpec::Tqudo(s) => {
                check_dims("dims", &s.dims)?;
                for (t, term) in s.terms.iter().enumerate() {
                    let f = format!("terms[{t}]");
                    let n = s.dims.len();
                    if term.i >= n || term.j >= n {
                        return fail(f, "variable out of range");
                    }
                    let (di, dj) = (s.dims[term.i], s.dims[term.j]);
                    if term.table.len() != di {
                        return fail(format!("{f}.table"), format!("expected {di} rows"));
                    }
                    for (r, row) in term.table.iter().enumerate() {
                        if row.len() != dj {
                            return fail(
                                format!("{f}.table[{r}]"),
                                format!("expected {dj} columns"),
                            );
                        }
                        for (c, &v) in row.iter().enumerate() {
                            check_finite(&format!("{f}.table[{r}][{c}]"), v)?;
                        }
                        if term.i == term.j
                            && row.iter().enumerate().any(|(c, &v)| c != r && v != 0.0)
                        {
                            return fail(
                                format!("{f}.table"),
                                "a self-term may only use its diagonal",
                            );
                        }
                    }
                }
            }
            ProblemSpec::Hobo(s) => {
                check_dims("dims", &s.dims)?;
                check_terms("terms", &s.dims, &s.terms)?;
            }
            ProblemSpec::SumFunction(s) => {
                check_dims("dims", &s.dims)?;
                if s.weights.len() != s.dims.len() {
                    return fail("weights", format!("expected {} entries", s.dims.len()));
                }
                let (mut lo, mut hi) = (0i64, 0i64);
                for (i, w) in s.weights.iter().enumerate() {
                    if let Some(len) = w.table_len() {
                        if len != s.dims[i] {
                            return fail(
                                format!("weights[{i}]"),
                                format!("expected {} values", s.dims[i]),
                            );
                        }
                    }
                    let t = w.table(s.dims[i]);
                    lo += t.iter().min().unwrap();
                    hi += t.iter().max().unwrap();
                }
                for (k, &v) in s.f.values.iter().enumerate() {
                    check_finite(&format!("f.values[{k}]"), v)?;
                }
                for z in [lo, hi] {
                    if s.f.eval(z).is_none() {
                        return fail("f", format!("table must cover every sum in [{lo}, {hi}]"));
                    }
                }
            }
            ProblemSpec::Nested(s) => {
                if s.first.is_empty() {
                    return fail("first", "the first variable needs at least one value");
                }
                let dims = s.dims();
                check_dims("tables", &dims)?;
                let mut reach: std::collections::BTreeSet<i64> = s.first.iter().copied().collect();
                for k in 1..dims.len() {
                    let mut next = std::collections::BTreeSet::new();
                    for &q in &reach {
                        for x in 0..dims[k] {
                            match s.step(k, x, q) {
                                Some(v) => {
                                    next.insert(v);
                                }
                                None => {
                                    return fail(
                                        format!("tables[{}][{x}]", k - 1),
                                        format!("does not cover reachable value {q}"),
                                    )
                                }
                            }
                        }
                    }
                    reach = next;
                }
            }
            ProblemSpec::AdditionInv(s) => {
                if s.bits == 0 || s.bits > 32 {
                    return fail("bits", "must be between 1 and 32");
                }
                if s.c >> (s.bits + 1) != 0 {
                    return fail("c", format!("does not fit in {} bits", s.bits + 1));
                }
            }
            ProblemSpec::MultiplicationInv(s) => {
                if s.bits_a == 0 || s.bits_b == 0 || s.bits_a + s.bits_b > 32 {
                    return fail(
                        "bits_a",
                        "widths must be positive with a total of at most 32",
                    );
                }
                if s.c >> (s.bits_a + s.bits_b) != 0 {
                    return fail("c", format!("does not fit in {} bits", s.bits_a + s.bits_b));
                }
            }
            ProblemSpec::LinearSystem(s) => {
                check_dims("dims", &s.dims)?;
                check_constraints(&s.a, &s.b, s.dims.len())?;
            }
            ProblemSpec::SingleOne(s) => {
                if s.n == 0 {
                    return fail("n", "must be positive");
                }
            }
            ProblemSpec::Partition(s) => {
                if s.s.is_empty() {
                    return fail("s", "at least one number is required");
                }
                for (i, &v) in s.s.iter().enumerate() {
                    if v <= 0 {
                        return fail(format!("s[{i}]"), "must be a positive integer");
                    }
                }
            }
            ProblemSpec::Coloring(s) => {
                check_graph(s.vertices, &s.edges)?;
                if s.k == 0 {
                    return fail("k", "must be positive");
                }
                if let Some(q) = &s.vertex_costs {
                    if q.len() != s.vertices {
                        return fail("vertex_costs", format!("expected {} rows", s.vertices));
                    }
                    for (v, row) in q.iter().enumerate() {
                        if row.len() != s.k {
                            return fail(
                                format!("vertex_costs[{v}]"),
                                format!("expected {} columns", s.k),
                            );
                        }
                        for (c, &x) in row.iter().enumerate() {
                            check_finite(&format!("vertex_costs[{v}][{c}]"), x)?;
                        }
                    }
                }
            }
            ProblemSpec::ShortestPathCost(s) => {
                s.validate()?;
                s.require_integer_costs()?;
            }
            ProblemSpec::ShortestPathRoute(s) => s.validate()?,
            ProblemSpec::Tsp(s) => {
                let v = s.costs.len();
                if v < 3 {
                    return fail("costs", "a tour needs at least 3 cities");
                }
                for (i, row) in s.costs.iter_mut().enumerate() {
                    if row.len() != v {
                        return fail(format!("costs[{i}]"), format!("expected {v} columns"));
                    }
                    row[i] = None;
                    for (j, e) in row.iter().enumerate() {
                        if let Some(c) = e {
                            check_finite(&format!("costs[{i}][{j}]"), *c)?;
                        }
                    }
                }
            }
            ProblemSpec::Knapsack(s) => s.validate()?,
            ProblemSpec::Ilp(s) => {
                check_dims("dims", &s.dims)?;
                if s.c.len() != s.dims.len() {
                    return fail("c", format!("expected {} entries", s.dims.len()));
                }
                for (i, &v) in s.c.iter().enumerate() {
                    check_finite(&format!("c[{i}]"), v)?;
                }
                check_constraints(&s.a, &s.b, s.dims.len())?;
            }
            ProblemSpec::Iqp(s) => {
                check_dims("dims", &s.dims)?;
                let n = s.dims.len();
                check_square("q", &s.q, n)?;
                fold_lower(&mut s.q);
                if s.c.len() != n {
                    return fail("c", format!("expected {n} entries"));
                }
                for (i, &v) in s.c.iter().enumerate() {
                    check_finite(&format!("c[{i}]"), v)?;
                }
                check_constraints(&s.a, &s.b, n)?;
            }
            ProblemSpec::Ipp(s) => {
                check_dims("dims", &s.dims)?;
                check_terms("terms", &s.dims, &s.terms)?;
                check_constraints(&s.a, &s.b, s.dims.len())?;
            }
            ProblemSpec::Mis(g) | ProblemSpec::VertexCover(g) => check_graph(g.vertices, &g.edges)?,
            ProblemSpec::DominatingSet(s) => {
                check_graph(s.vertices, &s.edges)?;
                if let Some(c) = &s.costs {
                    if c.len() != s.vertices {
                        return fail("costs", format!("expected {} entries", s.vertices));
                    }
                    for (i, &v) in c.iter().enumerate() {
                        check_finite(&format!("costs[{i}]"), v)?;
                    }
                }
            }
            ProblemSpec::Assignment(s) => {
                if s.costs.is_empty() {
                    return fail("costs", "at least one agent is required");
                }
                let width = s.costs[0].len();
                if width < 2 {
                    return fail("costs[0]", "needs the idle column and at least one task");
                }
                for (i, row) in s.costs.iter().enumerate() {
                    if row.len() != width {
                        return fail(format!("costs[{i}]"), format!("expected {width} columns"));
                    }
                    for (j, &v) in row.iter().enumerate() {
                        check_finite(&format!("costs[{i}][{j}]"), v)?;
                    }
                    if row[0] != 0.0 {
                        return fail(format!("costs[{i}][0]"), "being idle must cost 0");
                    }
                }
                if let Some(l) = s.lambda {
                    check_finite("lambda", l)?;
                    if l <= 0.0 {
                        return fail("lambda", "must be positive");
                    }
                }
            }
        }
        Ok(self)
    }

    /// Largest magnitude of a single cost contribution; the default
    /// imaginary-time constant is its reciprocal.
    pub fn cost_scale(&self) -> f64 {
        let max_abs = |it: &mut dyn Iterator<Item = f64>| it.map(f64::abs).fold(0.0, f64::max);
        let dims = self.variable_dims();
        let quad = |q: &[Vec<f64>], dims: &[usize]| {
            let mut m = 0.0f64;
            for (i, row) in q.iter().enumerate() {
                for (j, &v) in row.iter().enumerate().take(i + 1) {
                    m = m.max((v * ((dims[i] - 1) * (dims[j] - 1)) as f64).abs());
                }
            }
            m
        };
        let hobo = |terms: &[HigherTerm], dims: &[usize]| {
            let mut m = 0.0f64;
            for t in terms {
                let v = match (&t.coef, &t.table) {
                    (Some(c), _) => {
                        c.abs()
                            * t.vars
                                .iter()
                                .map(|&v| (dims[v] - 1) as f64)
                                .product::<f64>()
                    }
                    (_, Some(tab)) => max_abs(&mut tab.iter().copied()),
                    _ => 0.0,
                };
                m = m.max(v);
            }
            m
        };
        let scale = match self {
            ProblemSpec::Qubo(s) => quad(&s.q, &dims),
            ProblemSpec::Qudo(s) => quad(&s.q, &dims),
            ProblemSpec::Tqudo(s) => max_abs(
                &mut s
                    .terms
                    .iter()
                    .flat_map(|t| t.table.iter().flatten().copied()),
            ),
            ProblemSpec::Hobo(s) => hobo(&s.terms, &s.dims),
            ProblemSpec::SumFunction(s) => max_abs(&mut s.f.values.iter().copied()),
            ProblemSpec::Nested(s) => max_abs(
                &mut s
                    .first
                    .iter()
                    .chain(s.tables.iter().flatten().flatten())
                    .map(|&v| v as f64),
            ),
            ProblemSpec::Coloring(s) => {
                let m = if s.minimize_colors {
                    (s.k - 1) as f64
                } else {
                    0.0
                };
                let q = s
                    .vertex_costs
                    .as_ref()
                    .map_or(0.0, |q| max_abs(&mut q.iter().flatten().copied()));
                m.max(q)
            }
            ProblemSpec::ShortestPathCost(_) => 1.0,
            ProblemSpec::ShortestPathRoute(s) => {
                let mut m = 0.0f64;
                for t in 0..s.steps.saturating_sub(1) {
                    for i in 0..s.vertices {
                        for j in 0..s.vertices {
                            if let Some(c) = s.edge_cost(t, i, j) {
                                m = m.max(c.abs());
                            }
                        }
                    }
                }
                m
            }
            ProblemSpec::Tsp(s) => max_abs(&mut s.costs.iter().flatten().flatten().copied()),
            ProblemSpec::Knapsack(s) => {
                max_abs(&mut (0..s.weights.len()).flat_map(|i| s.value_table(i)))
            }
            ProblemSpec::Ilp(s) => {
                max_abs(&mut s.c.iter().zip(&s.dims).map(|(c, &d)| c * (d - 1) as f64))
            }
            ProblemSpec::Iqp(s) => quad(&s.q, &s.dims).max(max_abs(
                &mut s.c.iter().zip(&s.dims).map(|(c, &d)| c * (d - 1) as f64),
            )),
            ProblemSpec::Ipp(s) => hobo(&s.terms, &s.dims),
            ProblemSpec::Mis(_) | ProblemSpec::VertexCover(_) => 1.0,
            ProblemSpec::DominatingSet(s) => s
                .costs
                .as_ref()
                .map_or(1.0, |c| max_abs(&mut c.iter().copied())),
            ProblemSpec::Assignment(s) => max_abs(&mut s.costs.iter().flatten().copied()),
            _ => 1.0,
        };
        if scale > 0.0 && scale.is_finite() {
            scale
        } else {
            1.0
        }
    }

    /// Smallest possible nonzero difference between two costs: 1 when every
    /// coefficient entering the cost is an integer, `None` when unknown.
    pub fn cost_granularity(&self) -> Option<f64> {
        let mut coefs: Vec<f64> = Vec::new();
        let hobo = |terms: &[HigherTerm], out: &mut Vec<f64>| {
            for t in terms {
                out.extend(t.coef);
                out.extend(t.table.iter().flatten().copied());
            }
        };
        match self {
            ProblemSpec::Qubo(s) => coefs.extend(s.q.iter().flatten()),
            ProblemSpec::Qudo(s) => coefs.extend(s.q.iter().flatten()),
            ProblemSpec::Tqudo(s) => {
                coefs.extend(s.terms.iter().flat_map(|t| t.table.iter().flatten()))
            }
            ProblemSpec::Hobo(s) => hobo(&s.terms, &mut coefs),
            ProblemSpec::SumFunction(s) => coefs.extend(&s.f.values),
            ProblemSpec::Nested(_) | ProblemSpec::Mis(_) | ProblemSpec::VertexCover(_) => {}
            ProblemSpec::Coloring(s) => coefs.extend(s.vertex_costs.iter().flatten().flatten()),
            ProblemSpec::ShortestPathRoute(s) => {
                for t in 0..s.steps.saturating_sub(1) {
                    for i in 0..s.vertices {
                        coefs.extend((0..s.vertices).filter_map(|j| s.edge_cost(t, i, j)));
                    }
                }
            }
            ProblemSpec::Tsp(s) => coefs.extend(s.costs.iter().flatten().flatten()),
            ProblemSpec::Knapsack(s) => {
                coefs.extend((0..s.weights.len()).flat_map(|i| s.value_table(i)))
            }
            ProblemSpec::Ilp(s) => coefs.extend(&s.c),
            ProblemSpec::Iqp(s) => coefs.extend(s.q.iter().flatten().chain(&s.c)),
            ProblemSpec::Ipp(s) => hobo(&s.terms, &mut coefs),
            ProblemSpec::DominatingSet(s) => coefs.extend(s.costs.iter().flatten()),
            ProblemSpec::Assignment(s) => {
                coefs.extend(s.costs.iter().flatten());
                coefs.push(s.lambda());
            }
            _ => return None,
        }
        coefs.iter().all(|c| c.fract() == 0.0).then_some(1.0)
    }

    /// `1 / cost_scale()`.
    pub fn default_tau(&self) -> f64 {
        1.0 / self.cost_scale()
    }
}
