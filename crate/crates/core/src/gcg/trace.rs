/// One row of a solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub time_s: f64,
    pub objective: f64,
    pub rho: f64,
    pub eta: f64,
    pub theta: f64,
    pub atoms: usize,
    /// `Some(f64::INFINITY)` when the gap is infinite, `None` when not computed.
    pub gap: Option<f64>,
    pub test_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    records: Vec<IterRecord>,
}

impl SolverTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; iteration indices must strictly increase.
    pub fn push(&mut self, record: IterRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.iter > last.iter, "trace iterations must increase");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[IterRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub(crate) fn last_mut(&mut self) -> Option<&mut IterRecord> {
        self.records.last_mut()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
