//! Variable-by-variable extraction of a solution.
//!
//! Step `k` closes the already-determined variables with projection vectors,
//! every later variable with plus (or phase) vectors, and reads variable
//! `k`'s amplitude vector. Projecting the earlier choices keeps degenerate
//! solutions from mixing.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{half_partial_trace, TraceMode};
use crate::oracle;
use crate::problems::{build, BuildContext, Built, ProblemKind, ProblemSpec, Readout};
use crate::tensor::{self, Amplitude};

/// Amplitudes within this relative distance of the maximum count as tied.
const TIE_WINDOW: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Escalation {
    pub enabled: bool,
    pub growth: f64,
    pub max_rounds: usize,
}

impl Default for Escalation {
    fn default() -> Self {
        Escalation {
            enabled: true,
            growth: 2.0,
            max_rounds: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Imaginary-time constant; `None` uses the spec's default.
    pub tau: Option<f64>,
    /// Phase vectors instead of plus vectors on the traced variables.
    pub humbucker: bool,
    /// Amplitudes below `tolerance * max` are treated as zero.
    pub tolerance: f64,
    pub escalation: Escalation,
    /// At most this many filter layers per iteration (elimination mode).
    pub layer_limit: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: None,
            humbucker: false,
            tolerance: 1e-9,
            escalation: Escalation::default(),
            layer_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("tau must be positive, got {t}")));
            }
        }
        if !(self.escalation.growth.is_finite() && self.escalation.growth > 1.0) {
            return Err(Error::Config(format!(
                "growth factor must exceed 1, got {}",
                self.escalation.growth
            )));
        }
        if !(0.0..1.0).contains(&self.tolerance) {
            return Err(Error::Config(format!(
                "tolerance must be in [0, 1), got {}",
                self.tolerance
            )));
        }
        if self.layer_limit == Some(0) {
            return Err(Error::Config("layer limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// One value per variable when feasible; the determined prefix otherwise.
    pub assignment: Vec<usize>,
    pub feasible: bool,
    /// Per step: `1 - runner_up / winner` of the amplitude moduli.
    pub margins: Vec<f64>,
    /// Natural log of the winning amplitude at the last step.
    pub log_amplitude: f64,
    pub tau_used: f64,
    /// Cost of the assignment as evaluated by the oracle.
    pub cost: Option<f64>,
    /// True when two consecutive imaginary-time constants agreed, or when
    /// the family does not depend on the constant at all.
    pub converged: bool,
    /// Number of complete solves performed.
    pub rounds: usize,
    /// Number of paths per total cost, for the cost-histogram family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<f64>>,
    /// Wall-clock seconds per step of the final solve.
    pub step_seconds: Vec<f64>,
}

/// Outcome of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub value: usize,
    pub margin: f64,
    pub log_amplitude: f64,
    /// Log of the largest amplitude any single state can have: the network
    /// prefactor plus each node's largest log modulus.
    pub log_ceiling: f64,
}

/// Chooses a value from an amplitude vector. Returns `None` when every
/// entry is below `tolerance` relative to the largest.
pub fn pick(amplitudes: &[Amplitude], tolerance: f64, readout: Readout) -> Option<(usize, f64)> {
    let mods: Vec<f64> = amplitudes.iter().map(|a| a.norm()).collect();
    let max = mods.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let winner = match readout {
        Readout::Argmax => mods.iter().position(|&m| m >= max * (1.0 - TIE_WINDOW))?,
        Readout::LowestNonzero => mods.iter().position(|&m| m > tolerance * max)?,
    };
    let runner = mods
        .iter()
        .enumerate()
        .filter(|&(i, &m)| i != winner && m > tolerance * max)
        .map(|(_, &m)| m)
        .fold(0.0, f64::max);
    let margin = match readout {
        Readout::Argmax => (mods[winner] - runner) / max,
        Readout::LowestNonzero => 1.0,
    };
    Some((winner, margin))
}

fn trace_mode(spec: &ProblemSpec, config: &SolverConfig) -> TraceMode {
    if config.humbucker && spec.uses_tau() {
        TraceMode::Phase
    } else {
        TraceMode::Plus
    }
}

fn fixed_map(built: &Built, fixed: &[Option<usize>]) -> BTreeMap<String, usize> {
    fixed
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (built.layout.label(k).to_string(), v)))
        .collect()
}

/// Determines variable `k` given the values in `fixed` (by position).
/// `Ok(None)` means no feasible completion survives.
pub fn determine_variable<B>(
    builder: &B,
    spec: &ProblemSpec,
    k: usize,
    fixed: &[Option<usize>],
    config: &SolverConfig,
    tau: f64,
) -> Result<Option<Decision>>
where
    B: Fn(&BuildContext) -> Result<Built>,
{
    let ctx = BuildContext {
        tau,
        fixed,
        layer_limit: config.layer_limit,
        step: k,
    };
    let built = builder(&ctx)?;
    let map = fixed_map(&built, fixed);
    let label = built.layout.label(k).to_string();
    let readout = built.readout;
    let log_ceiling = built.network.log_prefactor()
        + built
            .network
            .nodes()
            .map(|(_, t)| t.max_modulus().ln())
            .sum::<f64>();
    let trace = match half_partial_trace(
        built.network,
        &built.layout,
        &label,
        &map,
        trace_mode(spec, config),
    ) {
        Ok(t) => t,
        Err(Error::InfeasibleSignal(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(
        pick(&trace.amplitudes, config.tolerance, readout).map(|(value, margin)| Decision {
            value,
            margin,
            log_amplitude: trace.amplitudes[value].norm().ln() + trace.log_scale,
            log_ceiling,
        }),
    )
}

/// Binary cross-check: contracts variable `k` against the minus vector
/// `(-1, 1)` and returns `H(omega)` with `H(0) = 0`, where `omega` counts as
/// zero below `tolerance` relative to the plus-vector contraction.
pub fn minus_vector_decision(
    spec: &ProblemSpec,
    k: usize,
    fixed: &[Option<usize>],
    tau: f64,
    tolerance: f64,
) -> Result<Option<usize>> {
    let ctx = BuildContext {
        tau,
        fixed,
        layer_limit: None,
        step: k,
    };
    let built = build(spec, &ctx)?;
    if built.layout.variables()[k].dim != 2 {
        return Err(Error::InvalidDimension(format!(
            "the minus vector needs a binary variable, `{}` has {} values",
            built.layout.label(k),
            built.layout.variables()[k].dim
        )));
    }
    let map = fixed_map(&built, fixed);
    let scalar = |vector: tensor::SparseTensor| -> Result<(f64, f64)> {
        let mut net = built.network.clone();
        for (p, var) in built.layout.variables().iter().enumerate() {
            let v = if p == k {
                vector.clone()
            } else if let Some(&x) = map.get(&var.label) {
                tensor::make_projection(var.dim, x as i64)?
            } else {
                tensor::make_plus(var.dim)?
            };
            net = net.attach_boundary(&var.label, v)?;
        }
        let out = net.contract()?;
        Ok((
            out.tensor.scalar_value().unwrap_or_default().re,
            out.log_scale,
        ))
    };
    let (plus, plus_log) = scalar(tensor::make_plus(2)?)?;
    if plus == 0.0 {
        return Ok(None);
    }
    let (omega, omega_log) = scalar(tensor::make_minus())?;
    let relative = omega * (omega_log - plus_log).exp() / plus;
    Ok(Some(usize::from(relative > tolerance)))
}

/// One extraction at fixed `tau`. Also returns the headroom of the result:
/// how far (in log units) its amplitude sits below the ceiling, which equals
/// `tau` times its cost above the network's cost floor.
fn solve_once<B>(
    builder: &B,
    spec: &ProblemSpec,
    config: &SolverConfig,
    tau: f64,
    prefix: &[usize],
) -> Result<(Solution, Option<f64>)>
where
    B: Fn(&BuildContext) -> Result<Built>,
{
    let n = spec.variable_dims().len();
    let mut fixed: Vec<Option<usize>> = vec![None; n];
    for (k, &v) in prefix.iter().enumerate() {
        fixed[k] = Some(v);
    }
    let mut margins = Vec::with_capacity(n);
    let mut step_seconds = Vec::with_capacity(n);
    let mut log_amplitude = f64::NEG_INFINITY;
    let mut histogram = None;
    let mut feasible = true;
    let mut headroom = None;
    for k in prefix.len()..n {
        let start = Instant::now();
        let decision = determine_variable(builder, spec, k, &fixed, config, tau)?;
        step_seconds.push(start.elapsed().as_secs_f64());
        let Some(d) = decision else {
            feasible = false;
            break;
        };
        if k == 0 && matches!(spec, ProblemSpec::ShortestPathCost(_)) {
            histogram = Some(path_histogram(builder, spec, tau)?);
        }
        fixed[k] = Some(d.value);
        margins.push(d.margin);
        log_amplitude = d.log_amplitude;
        headroom = Some(d.log_ceiling - d.log_amplitude);
    }
    let assignment: Vec<usize> = fixed.iter().map_while(|v| *v).collect();
    let mut cost = None;
    if feasible {
        let eval = oracle::verify(spec, &assignment)?;
        if eval.feasible {
            cost = Some(eval.cost);
        } else if spec.kind() != ProblemKind::Optimization || config.layer_limit.is_none() {
            return Err(Error::VerificationFailed {
                family: spec.family().to_string(),
                assignment,
            });
        } else {
            feasible = false;
        }
    }
    let solution = Solution {
        assignment,
        feasible,
        margins,
        log_amplitude,
        tau_used: tau,
        cost,
        converged: !spec.uses_tau(),
        rounds: 1,
        histogram,
        step_seconds,
    };
    Ok((solution, headroom.filter(|_| feasible)))
}

/// Path counts per total cost, rescaled to true magnitudes.
fn path_histogram<B>(builder: &B, spec: &ProblemSpec, tau: f64) -> Result<Vec<f64>>
where
    B: Fn(&BuildContext) -> Result<Built>,
{
    let built = builder(&BuildContext::with_tau(tau))?;
    let out = built.network.contract()?;
    if out.is_zero() {
        return Ok(vec![0.0; spec.variable_dims()[0]]);
    }
    let scale = out.log_scale.exp();
    Ok(out
        .tensor
        .to_vector()
        .expect("one open leg")
        .iter()
        .map(|a| (a.re * scale).round())
        .collect())
}

/// Amplitudes more than this many log units below an intermediate's largest
/// entry may flush to zero. Every node entry is at most its node's maximum,
/// so an intermediate holds at most `state_count` times the ceiling, while a
/// state of cost `C` contributes `exp(-tau (C - C_floor))` of it. Keeping
/// `tau (C - C_floor) + ln(state_count)` below this bound for the best cost
/// found so far keeps every state at least as good representable.
const SAFE_EXPONENT: f64 = 700.0;

/// Smallest `tau` at which greedy extraction provably finds an optimum.
///
/// If step `k` picks the branch with the largest amplitude `A_w`, then
/// `N_w exp(-tau C_w) >= A_w >= exp(-tau C*)`, so the branch's best cost is
/// within `ln(N_w) / tau` of the optimum. Once that is below the cost
/// granularity, the branch holds an optimum.
fn certified_tau(spec: &ProblemSpec) -> Option<f64> {
    let delta = spec.cost_granularity()?;
    Some((2.0 * spec.state_count() as f64).ln() / delta)
}

fn agree(a: &Solution, b: &Solution) -> bool {
    a.feasible == b.feasible && a.cost == b.cost
}

/// Solves `spec`, escalating the imaginary-time constant for optimization
/// families until two consecutive runs reach the same cost.
pub fn solve(spec: &ProblemSpec, config: &SolverConfig) -> Result<Solution> {
    solve_with(spec, config, &[], |ctx| build(spec, ctx))
}

/// Like [`solve`], with the first `prefix.len()` variables fixed.
pub fn solve_with_prefix(
    spec: &ProblemSpec,
    config: &SolverConfig,
    prefix: &[usize],
) -> Result<Solution> {
    solve_with(spec, config, prefix, |ctx| build(spec, ctx))
}

/// Like [`solve_with_prefix`] with a custom network builder, for instance
/// one that rescales nodes.
pub fn solve_with<B>(
    spec: &ProblemSpec,
    config: &SolverConfig,
    prefix: &[usize],
    builder: B,
) -> Result<Solution>
where
    B: Fn(&BuildContext) -> Result<Built>,
{
    config.validate()?;
    let dims = spec.variable_dims();
    if prefix.len() > dims.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            got: prefix.len(),
        });
    }
    for (k, (&v, &d)) in prefix.iter().zip(&dims).enumerate() {
        if v >= d {
            return Err(Error::IndexOutOfBounds {
                index: vec![k, v],
                dims: dims.clone(),
            });
        }
    }
    let escalate = spec.uses_tau() && config.escalation.enabled;
    let growth = config.escalation.growth;
    let floor = if escalate { certified_tau(spec) } else { None };
    let log_states = (spec.state_count() as f64).ln();
    let mut tau = config.tau.unwrap_or_else(|| spec.default_tau());
    let (mut prev, mut headroom) = solve_once(&builder, spec, config, tau, prefix)?;
    if !escalate {
        return Ok(prev);
    }
    let mut rounds = 1;
    let mut converged = false;
    for _ in 0..config.escalation.max_rounds {
        let limit = match headroom {
            Some(h) if h > 0.0 => tau * (SAFE_EXPONENT - log_states) / h,
            _ => f64::INFINITY,
        };
        let mut next = tau * growth;
        if let Some(f) = floor {
            next = next.max(f.min(limit));
        }
        if next > limit {
            break;
        }
        let (cur, cur_headroom) = match solve_once(&builder, spec, config, next, prefix) {
            Ok(s) => s,
            Err(Error::NonFinite(_)) => break,
            Err(e) => return Err(e),
        };
        rounds += 1;
        // Feasibility does not depend on tau; losing it means underflow.
        if prev.feasible && !cur.feasible {
            break;
        }
        let done = agree(&prev, &cur) && floor.map_or(true, |f| next >= f);
        tau = next;
        prev = cur;
        headroom = cur_headroom;
        if done {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        converged,
        rounds,
        ..prev
    })
}

/// Number of feasible assignments of a constraint-only family.
pub fn count_solutions(spec: &ProblemSpec) -> Result<u128> {
    if spec.kind() == ProblemKind::Optimization {
        return Err(Error::UnsupportedCount(spec.family().to_string()));
    }
    let built = build(spec, &BuildContext::with_tau(1.0))?;
    let mut net = built.network;
    for var in built.layout.variables() {
        net = net.attach_boundary(&var.label, tensor::make_plus(var.dim)?)?;
    }
    let out = net.contract()?;
    if out.is_zero() {
        return Ok(0);
    }
    let v = out.tensor.scalar_value().unwrap_or_default() * out.log_scale.exp();
    let rounded = v.re.round();
    if (v.re - rounded).abs() >= 1e-6 || v.im.abs() >= 1e-6 || rounded < 0.0 {
        return Err(Error::NonIntegerCount(v.re));
    }
    Ok(rounded as u128)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Qubo;

    fn amps(v: &[f64]) -> Vec<Amplitude> {
        v.iter().map(|&x| Amplitude::new(x, 0.0)).collect()
    }

    fn qubo(q: Vec<Vec<f64>>) -> ProblemSpec {
        ProblemSpec::Qubo(Qubo { q }).normalize().unwrap()
    }

    #[test]
    fn pick_argmax_and_ties() {
        let e = (-1.0f64).exp();
        let (v, m) = pick(&amps(&[1.0, e]), 1e-9, Readout::Argmax).unwrap();
        assert_eq!(v, 0);
        assert!((m - (1.0 - e)).abs() < 1e-15);
        assert_eq!(
            pick(&amps(&[0.5, 0.5]), 1e-9, Readout::Argmax),
            Some((0, 0.0))
        );
        assert_eq!(pick(&amps(&[0.0, 0.0]), 1e-9, Readout::Argmax), None);
        assert_eq!(
            pick(&amps(&[0.0, 3.0, 1.0]), 1e-9, Readout::LowestNonzero),
            Some((1, 1.0))
        );
        // Entries below the tolerance do not count.
        assert_eq!(
            pick(&amps(&[1e-12, 1.0]), 1e-9, Readout::LowestNonzero),
            Some((1, 1.0))
        );
        assert_eq!(
            pick(&amps(&[1e-12, 1.0]), 1e-9, Readout::Argmax),
            Some((1, 1.0))
        );
    }

    #[test]
    fn minus_vector_agrees_with_argmax() {
        // Costs (0, 1): vector (1, e^-1), omega < 0.
        let s = qubo(vec![vec![1.0]]);
        assert_eq!(
            minus_vector_decision(&s, 0, &[None], 1.0, 1e-9).unwrap(),
            Some(0)
        );
        let s = qubo(vec![vec![-1.0]]);
        assert_eq!(
            minus_vector_decision(&s, 0, &[None], 1.0, 1e-9).unwrap(),
            Some(1)
        );
        // A tie gives omega = 0 and H(0) = 0.
        let s = qubo(vec![vec![0.0]]);
        assert_eq!(
            minus_vector_decision(&s, 0, &[None], 1.0, 1e-9).unwrap(),
            Some(0)
        );

        let s = qubo(vec![vec![-3.0, 0.0], vec![3.0, -1.0]]);
        let sol = solve(&s, &SolverConfig::default()).unwrap();
        let tau = sol.tau_used;
        let mut fixed = vec![None; 2];
        for k in 0..2 {
            let v = minus_vector_decision(&s, k, &fixed, tau, 1e-9)
                .unwrap()
                .unwrap();
            assert_eq!(v, sol.assignment[k]);
            fixed[k] = Some(v);
        }
    }

    #[test]
    fn determine_variable_reads_the_vector() {
        let s = qubo(vec![vec![1.0]]);
        let config = SolverConfig::default();
        let d = determine_variable(
            &|ctx: &BuildContext| build(&s, ctx),
            &s,
            0,
            &[None],
            &config,
            1.0,
        )
        .unwrap()
        .unwrap();
        assert_eq!(d.value, 0);
        assert!((d.margin - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!(d.log_amplitude.abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig {
                tau: Some(0.0),
                ..Default::default()
            },
            SolverConfig {
                tau: Some(f64::NAN),
                ..Default::default()
            },
            SolverConfig {
                tolerance: 1.0,
                ..Default::default()
            },
            SolverConfig {
                layer_limit: Some(0),
                ..Default::default()
            },
            SolverConfig {
                escalation: Escalation {
                    growth: 1.0,
                    ..Default::default()
                },
                ..Default::default()
            },
        ];
        let s = qubo(vec![vec![1.0]]);
        for c in bad {
            assert!(matches!(solve(&s, &c), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn escalation_reports_rounds() {
        let s = qubo(vec![vec![-3.0, 0.0], vec![3.0, -1.0]]);
        let sol = solve(&s, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.rounds >= 2);
        assert_eq!(sol.assignment, vec![1, 0]);
        let once = solve(
            &s,
            &SolverConfig {
                escalation: Escalation {
                    enabled: false,
                    ..Default::default()
                },
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(once.rounds, 1);
        assert!(!once.converged);
        assert_eq!(once.tau_used, s.default_tau());
    }

    #[test]
    fn prefix_is_respected() {
        let s = qubo(vec![vec![-3.0, 0.0], vec![3.0, -1.0]]);
        let sol = solve_with_prefix(&s, &SolverConfig::default(), &[0]).unwrap();
        assert_eq!(sol.assignment, vec![0, 1]);
        assert_eq!(sol.cost, Some(-1.0));
        assert!(solve_with_prefix(&s, &SolverConfig::default(), &[2]).is_err());
        assert!(solve_with_prefix(&s, &SolverConfig::default(), &[0, 0, 0]).is_err());
    }

    #[test]
    fn rescaled_nodes_leave_decisions_alone() {
        let s = qubo(vec![
            vec![-3.0, 0.0, 0.0],
            vec![3.0, -1.0, 0.0],
            vec![-2.0, 1.0, 2.0],
        ]);
        let config = SolverConfig::default();
        let plain = solve(&s, &config).unwrap();
        let scaled = solve_with(&s, &config, &[], |ctx| {
            let mut b = build(&s, ctx)?;
            let first = b.network.nodes().next().map(|(id, _)| id).unwrap();
            b.network.scale_node(first, Amplitude::new(1e30, 0.0))?;
            Ok(b)
        })
        .unwrap();
        assert_eq!(plain.assignment, scaled.assignment);
        assert_eq!(plain.margins.len(), scaled.margins.len());
        for (a, b) in plain.margins.iter().zip(&scaled.margins) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn counting_rejects_optimization() {
        let s = qubo(vec![vec![1.0]]);
        assert!(matches!(
            count_solutions(&s),
            Err(Error::UnsupportedCount(_))
        ));
    }
}
