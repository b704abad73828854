//! Task plans and the decomposition auditor.
//!
//! A decomposed computation is a DAG of local tasks and SMPC sub-tasks.
//! The auditor enforces the decomposition rules: every sub-task combiner is
//! commutative/associative, the final output comes from the last SMPC
//! sub-task, and the number of revealed (reversible) sub-task outputs `k`
//! stays at or below `n*(m-1) - 1`, so the `n*(m-1)` unknowns any single
//! party faces remain underdetermined. Irreversibly transformed outputs do
//! not count as equations, and sub-tasks may declare extra unknowns (hidden
//! weights such as per-party row counts) that only ever raise the unknown
//! count in the ledger, never the bound.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{solve_linear, Matrix};

/// Supported combining operators (commutative and associative).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Add,
    Mul,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanNode {
    /// Computation a party runs on its own data, no communication.
    Local { party: usize, description: String },
    /// A jointly computed sub-task.
    Smpc {
        label: String,
        combiner: Combiner,
        output_shape: (usize, usize),
        #[serde(default)]
        reveals_output: bool,
        #[serde(default)]
        irreversible: bool,
        /// Additional hidden unknowns folded into this sub-task.
        #[serde(default)]
        extra_unknowns: u64,
        /// Set when the output alone lets a party solve for another party's
        /// raw inputs (forbidden by rule 3).
        #[serde(default)]
        solvable: bool,
        /// Linear coefficients of the revealed equation over all m*n
        /// parameters (row-major by party); used by the recovery red-team.
        #[serde(default)]
        equation: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskPlan {
    pub nodes: Vec<PlanNode>,
    /// Data dependencies as (from, to) node indices.
    pub edges: Vec<(usize, usize)>,
    /// Index of the sub-task that produces the final output.
    pub final_node: usize,
    /// Number of times the combiner is applied across parties, when known;
    /// bounds the sub-task count (rule 2).
    #[serde(default)]
    pub combiner_uses: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MalformedPlan {
    EmptyPlan,
    EdgeOutOfRange,
    Cycle,
    FinalNotSmpc,
    FinalNotRevealed,
}

impl fmt::Display for MalformedPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MalformedPlan::EmptyPlan => write!(f, "plan has no nodes"),
            MalformedPlan::EdgeOutOfRange => write!(f, "edge references missing node"),
            MalformedPlan::Cycle => write!(f, "plan graph has a cycle"),
            MalformedPlan::FinalNotSmpc => write!(f, "final node is not an SMPC sub-task"),
            MalformedPlan::FinalNotRevealed => write!(f, "final sub-task does not reveal"),
        }
    }
}

/// One revealed equation in the audit ledger.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquationEntry {
    pub label: String,
    pub unknowns: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub parties: usize,
    pub params_per_party: u64,
    /// Revealed-equation count.
    pub k: u64,
    /// `n * (m - 1) - 1`.
    pub bound: u64,
    pub verdict: bool,
    pub ledger: Vec<EquationEntry>,
    /// Human-readable reasons when the verdict is fail.
    pub failures: Vec<String>,
}

impl TaskPlan {
    fn validate(&self) -> Result<(), MalformedPlan> {
        if self.nodes.is_empty() {
            return Err(MalformedPlan::EmptyPlan);
        }
        if self.final_node >= self.nodes.len() {
            return Err(MalformedPlan::EdgeOutOfRange);
        }
        for &(a, b) in &self.edges {
            if a >= self.nodes.len() || b >= self.nodes.len() {
                return Err(MalformedPlan::EdgeOutOfRange);
            }
        }
        // Kahn's algorithm for cycle detection.
        let n = self.nodes.len();
        let mut indeg = alloc::vec![0usize; n];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &(a, b) in &self.edges {
                if a == v {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        queue.push(b);
                    }
                }
            }
        }
        if seen != n {
            return Err(MalformedPlan::Cycle);
        }
        match &self.nodes[self.final_node] {
            PlanNode::Smpc { reveals_output, .. } => {
                if !reveals_output {
                    return Err(MalformedPlan::FinalNotRevealed);
                }
            }
            PlanNode::Local { .. } => return Err(MalformedPlan::FinalNotSmpc),
        }
        Ok(())
    }

    fn revealed_equations(&self) -> impl Iterator<Item = (&String, u64, bool, Option<&Vec<f64>>)> {
        self.nodes.iter().filter_map(|node| match node {
            PlanNode::Smpc {
                label,
                reveals_output: true,
                irreversible: false,
                extra_unknowns,
                solvable,
                equation,
                ..
            } => Some((label, *extra_unknowns, *solvable, equation.as_ref())),
            _ => None,
        })
    }

    pub fn smpc_count(&self) -> u64 {
        self.nodes
            .iter()
            .filter(|n| matches!(n, PlanNode::Smpc { .. }))
            .count() as u64
    }
}

/// Number of revealed, reversible sub-task outputs: the equations a
/// semi-honest party collects.
pub fn count_equations(plan: &TaskPlan) -> Result<u64, MalformedPlan> {
    plan.validate()?;
    Ok(plan.revealed_equations().count() as u64)
}

/// Audits a plan for `m` parties with `n` parameters per party.
pub fn audit(plan: &TaskPlan, m: usize, n: u64) -> Result<AuditReport, MalformedPlan> {
    assert!(m >= 2, "audit requires at least two parties");
    assert!(n >= 1, "audit requires at least one parameter per party");
    plan.validate()?;
    let k = plan.revealed_equations().count() as u64;
    let bound = n * (m as u64 - 1) - 1;
    let base_unknowns = n * (m as u64 - 1);
    let mut failures = Vec::new();
    if k > bound {
        failures.push(alloc::format!(
            "reveals {k} equations, bound is {bound}"
        ));
    }
    let mut ledger = Vec::new();
    for (label, extra, solvable, _) in plan.revealed_equations() {
        ledger.push(EquationEntry {
            label: label.clone(),
            unknowns: base_unknowns + extra,
        });
        if solvable {
            failures.push(alloc::format!(
                "sub-task '{label}' output is solvable for raw inputs"
            ));
        }
    }
    if let Some(uses) = plan.combiner_uses {
        if plan.smpc_count() > uses {
            failures.push(alloc::format!(
                "{} sub-tasks exceed the {} combiner applications",
                plan.smpc_count(),
                uses
            ));
        }
    }
    Ok(AuditReport {
        parties: m,
        params_per_party: n,
        k,
        bound,
        verdict: failures.is_empty(),
        ledger,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecoveryError {
    Malformed(MalformedPlan),
    /// Fewer independent equations than unknowns: recovery must fail.
    Underdetermined,
    /// Equations in the plan lack linear coefficients.
    NoEquations,
}

impl fmt::Display for RecoveryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecoveryError::Malformed(e) => write!(f, "malformed plan: {e}"),
            RecoveryError::Underdetermined => write!(f, "system is underdetermined"),
            RecoveryError::NoEquations => write!(f, "plan carries no linear equations"),
        }
    }
}

/// Red-team check that the equation bound is tight: from `observer`'s view,
/// solve the revealed linear equations for the other parties' parameters.
///
/// `secrets` is the m x n matrix of toy inputs used to evaluate each
/// equation's right-hand side. Succeeds exactly when the revealed system
/// determines the `n*(m-1)` foreign unknowns.
pub fn demonstrate_recovery(
    plan: &TaskPlan,
    secrets: &Matrix,
    observer: usize,
) -> Result<Vec<f64>, RecoveryError> {
    plan.validate().map_err(RecoveryError::Malformed)?;
    let m = secrets.rows;
    let n = secrets.cols;
    assert!(observer < m);
    let total = m * n;
    let unknowns = (m - 1) * n;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (_, _, _, eq) in plan.revealed_equations() {
        let coeffs = match eq {
            Some(c) if c.len() == total => c,
            Some(_) => return Err(RecoveryError::NoEquations),
            None => continue,
        };
        // Full right-hand side from the toy secrets, then move the
        // observer's own (known) terms across.
        let mut b: f64 = coeffs
            .iter()
            .zip(&secrets.data)
            .map(|(c, s)| c * s)
            .sum();
        let mut row = Vec::with_capacity(unknowns);
        for party in 0..m {
            for j in 0..n {
                let c = coeffs[party * n + j];
                if party == observer {
                    b -= c * secrets.get(party, j);
                } else {
                    row.push(c);
                }
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    if rows.is_empty() {
        return Err(RecoveryError::NoEquations);
    }
    if rows.len() < unknowns {
        return Err(RecoveryError::Underdetermined);
    }
    let mut a = Matrix::zeros(rows.len(), unknowns);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            a.set(i, j, v);
        }
    }
    solve_linear(&a, &rhs).ok_or(RecoveryError::Underdetermined)
}

fn smpc(label: &str, shape: (usize, usize), reveals: bool, irreversible: bool, extra: u64) -> PlanNode {
    PlanNode::Smpc {
        label: String::from(label),
        combiner: Combiner::Add,
        output_shape: shape,
        reveals_output: reveals,
        irreversible,
        extra_unknowns: extra,
        solvable: false,
        equation: None,
    }
}

fn local(party: usize, description: &str) -> PlanNode {
    PlanNode::Local { party, description: String::from(description) }
}

/// The shipped decomposed-PCA plan: two revealed sub-tasks (k = 2).
pub fn pca_plan(m: usize, d: usize) -> TaskPlan {
    let mut nodes = Vec::new();
    for p in 0..m {
        nodes.push(local(p, "chunked column sums and row count"));
    }
    nodes.push(smpc("total_avg", (1, d), true, false, m as u64));
    let avg_idx = nodes.len() - 1;
    for p in 0..m {
        nodes.push(local(p, "chunked centered gram"));
    }
    nodes.push(smpc("eigen", (d + 1, d), true, false, m as u64));
    let final_node = nodes.len() - 1;
    let mut edges = Vec::new();
    for p in 0..m {
        edges.push((p, avg_idx));
        edges.push((avg_idx, avg_idx + 1 + p));
        edges.push((avg_idx + 1 + p, final_node));
    }
    TaskPlan { nodes, edges, final_node, combiner_uses: Some(2) }
}

/// The shipped decomposed-SVD plan: the one revealed output is irreversible
/// because the left singular matrix is withheld (k = 0).
pub fn svd_plan(m: usize, d: usize) -> TaskPlan {
    let mut nodes = Vec::new();
    for p in 0..m {
        nodes.push(local(p, "chunked gram accumulation"));
    }
    nodes.push(smpc("svd_model", (d + 1, d), true, true, 0));
    let final_node = nodes.len() - 1;
    let edges = (0..m).map(|p| (p, final_node)).collect();
    TaskPlan { nodes, edges, final_node, combiner_uses: Some(1) }
}

/// The shipped decomposed-FA plan: the mean reveal counts, the model reveal
/// is irreversible after covariance-to-correlation conversion (k = 1).
pub fn fa_plan(m: usize, d: usize) -> TaskPlan {
    let mut nodes = Vec::new();
    for p in 0..m {
        nodes.push(local(p, "chunked column sums and row count"));
    }
    nodes.push(smpc("total_avg", (1, d), true, false, m as u64));
    let avg_idx = nodes.len() - 1;
    for p in 0..m {
        nodes.push(local(p, "chunked centered gram"));
    }
    nodes.push(smpc("fa_model", (d + 1, d), true, true, m as u64));
    let final_node = nodes.len() - 1;
    let mut edges = Vec::new();
    for p in 0..m {
        edges.push((p, avg_idx));
        edges.push((avg_idx, avg_idx + 1 + p));
        edges.push((avg_idx + 1 + p, final_node));
    }
    TaskPlan { nodes, edges, final_node, combiner_uses: Some(2) }
}
