//! Subset-cost gauges built from weighted group counts, their polar via a
//! smoothed simplex LP with integral rounding, and a totally-corrective
//! conditional gradient solver.

mod cur;
mod polar;
mod solver;

pub use cur::{solve_cur, CurIndex, CurLoss, CurResult};
pub use polar::{
    gauge_q1, group_polar_smoothed, lifted_polar_bruteforce, polar_atom, polar_bruteforce, recover_integral_support, smoothed_h_value_grad,
    BruteForcePolar, Recovery, SmoothedPolar, SmoothedSolution, SubsetOracle, SupportAtom, WarmPolar, SMOOTHED_DEFAULT_EPS,
};
pub use solver::{solve_structured_gcg, totally_corrective, AtomicModel, StructuredOptions, StructuredOracle, StructuredOutput};

use std::path::Path;

use thiserror::Error;

/// Largest variable count the subset enumerations accept.
pub const ENUMERATION_GUARD: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructError {
    #[error("variable {0} belongs to no group")]
    Uncovered(usize),
    #[error("group {group} has cost {cost}; costs must be finite and positive")]
    InvalidCost { group: usize, cost: f64 },
    #[error("group {group} references variable {index} outside 0..{n}")]
    IndexOutOfRange { group: usize, index: usize, n: usize },
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("q = {0} is outside [1, 64]")]
    InvalidQ(f64),
    #[error("{n} variables is too many for subset enumeration (limit {guard})")]
    DimensionTooLarge { n: usize, guard: usize },
    #[error("rounding fell short and {0} variables is too many for the exact fallback")]
    RequiresExactFallback(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read group file: {0}")]
    Io(String),
}

/// Exponent `q ≥ 1` of the atom normalization `‖w‖_p·J(C)^{1/q} = 1`, `1/p + 1/q = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QExponent(f64);

impl QExponent {
    pub const ONE: Self = Self(1.0);
    pub const TWO: Self = Self(2.0);

    pub fn new(q: f64) -> Result<Self, StructError> {
        if (1.0..=64.0).contains(&q) {
            Ok(Self(q))
        } else {
            Err(StructError::InvalidQ(q))
        }
    }

    pub fn q(self) -> f64 {
        self.0
    }

    /// `|g|^q`
    pub fn lift(self, g: f64) -> f64 {
        if self.0 == 1.0 {
            g.abs()
        } else {
            g.abs().powf(self.0)
        }
    }

    /// `x^{1/q}`
    pub fn root(self, x: f64) -> f64 {
        if self.0 == 1.0 {
            x
        } else {
            x.max(0.0).powf(1.0 / self.0)
        }
    }
}

/// Overlapping groups with positive costs; `J(A) = Σ_G c_G·[A ∩ G ≠ ∅]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructure {
    n: usize,
    groups: Vec<Vec<usize>>,
    costs: Vec<f64>,
    membership: Vec<Vec<usize>>,
    r: usize,
}

impl GroupStructure {
    pub fn new(n: usize, groups: Vec<Vec<usize>>, costs: Vec<f64>) -> Result<Self, StructError> {
        assert_eq!(groups.len(), costs.len(), "one cost per group");
        let mut membership = vec![Vec::new(); n];
        for (g, (members, &cost)) in groups.iter().zip(&costs).enumerate() {
            if !(cost > 0.0 && cost.is_finite()) {
                return Err(StructError::InvalidCost { group: g, cost });
            }
            if members.is_empty() {
                return Err(StructError::EmptyGroup(g));
            }
            for &i in members {
                if i >= n {
                    return Err(StructError::IndexOutOfRange { group: g, index: i, n });
                }
                if membership[i].last() != Some(&g) {
                    membership[i].push(g);
                }
            }
        }
        if let Some(i) = membership.iter().position(Vec::is_empty) {
            return Err(StructError::Uncovered(i));
        }
        let groups = groups
            .into_iter()
            .map(|mut m| {
                m.sort_unstable();
                m.dedup();
                m
            })
            .collect();
        let r = membership.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { n, groups, costs, membership, r })
    }

    /// One unit-cost group per variable.
    pub fn singletons(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| vec![i]).collect(), vec![1.0; n]).expect("singletons are valid")
    }

    /// Rows and columns of a `rows × cols` matrix stored row-major, unit costs.
    /// Groups `0..rows` are the rows, then the columns.
    pub fn rows_and_columns(rows: usize, cols: usize) -> Self {
        let mut groups: Vec<Vec<usize>> = (0..rows).map(|i| (0..cols).map(|j| i * cols + j).collect()).collect();
        groups.extend((0..cols).map(|j| (0..rows).map(|i| i * cols + j).collect()));
        let k = groups.len();
        Self::new(rows * cols, groups, vec![1.0; k]).expect("row and column groups cover every entry")
    }

    /// Parses one group per line as `cost: i1 i2 ...` with 1-based indices.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(n: usize, text: &str) -> Result<Self, StructError> {
        let mut groups = Vec::new();
        let mut costs = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| StructError::Parse { line: k + 1, message };
            let (cost, rest) = line.split_once(':').ok_or_else(|| err("expected `cost: i1 i2 ...`".into()))?;
            let cost: f64 = cost.trim().parse().map_err(|_| err(format!("bad cost `{}`", cost.trim())))?;
            if !(cost > 0.0 && cost.is_finite()) {
                return Err(err(format!("cost must be positive, got {cost}")));
            }
            let mut members = Vec::new();
            for tok in rest.split_whitespace() {
                let idx: usize = tok.parse().map_err(|_| err(format!("bad index `{tok}`")))?;
                if idx == 0 || idx > n {
                    return Err(err(format!("index {idx} outside 1..={n}")));
                }
                members.push(idx - 1);
            }
            if members.is_empty() {
                return Err(err("group has no members".into()));
            }
            groups.push(members);
            costs.push(cost);
        }
        Self::new(n, groups, costs)
    }

    pub fn load(n: usize, path: &Path) -> Result<Self, StructError> {
        let text = std::fs::read_to_string(path).map_err(|e| StructError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(n, &text)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn membership(&self, i: usize) -> &[usize] {
        &self.membership[i]
    }

    /// Largest number of groups containing one variable.
    pub fn r(&self) -> usize {
        self.r
    }

    /// `J(A)` for an index set.
    pub fn subset_cost(&self, set: &[usize]) -> f64 {
        let mut hit = vec![false; self.groups.len()];
        for &i in set {
            for &g in &self.membership[i] {
                hit[g] = true;
            }
        }
        hit.iter().zip(&self.costs).filter(|(h, _)| **h).map(|(_, c)| c).sum()
    }

    /// Bit mask of each group, for `n ≤ 64`.
    pub(crate) fn group_masks(&self) -> Vec<u64> {
        assert!(self.n <= 64);
        self.groups.iter().map(|m| m.iter().fold(0u64, |acc, &i| acc | (1 << i))).collect()
    }
}

/// `J(A)`; see [`GroupStructure::subset_cost`].
pub fn subset_cost(set: &[usize], gs: &GroupStructure) -> f64 {
    gs.subset_cost(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> GroupStructure {
        GroupStructure::new(3, vec![vec![0, 1], vec![1, 2]], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn subset_costs_on_a_chain() {
        let gs = chain();
        assert_eq!(subset_cost(&[], &gs), 0.0);
        assert_eq!(subset_cost(&[1], &gs), 2.0);
        assert_eq!(subset_cost(&[0], &gs), 1.0);
        assert_eq!(gs.r(), 2);
    }

    #[test]
    fn uncovered_variable_is_rejected() {
        let err = GroupStructure::new(3, vec![vec![0, 1]], vec![1.0]).unwrap_err();
        assert_eq!(err, StructError::Uncovered(2));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let gs = GroupStructure::parse(3, "# chain\n1: 1 2\n\n2.5: 2 3\n").unwrap();
        assert_eq!(gs.groups(), &[vec![0, 1], vec![1, 2]]);
        assert_eq!(gs.costs(), &[1.0, 2.5]);
        let err = GroupStructure::parse(3, "1: 1 2\n1 2 3\n").unwrap_err();
        assert_eq!(err, StructError::Parse { line: 2, message: "expected `cost: i1 i2 ...`".into() });
        let err = GroupStructure::parse(3, "1: 1 4\n").unwrap_err();
        assert!(matches!(err, StructError::Parse { line: 1, .. }));
    }

    #[test]
    fn rows_and_columns_have_two_memberships() {
        let gs = GroupStructure::rows_and_columns(2, 3);
        assert_eq!(gs.group_count(), 5);
        assert_eq!(gs.r(), 2);
        assert_eq!(gs.membership(4), &[1, 3]);
    }

    #[test]
    fn q_guard() {
        assert!(QExponent::new(0.5).is_err());
        assert!(QExponent::new(65.0).is_err());
        assert_eq!(QExponent::TWO.lift(-3.0), 9.0);
        assert_eq!(QExponent::TWO.root(9.0), 3.0);
    }
}
