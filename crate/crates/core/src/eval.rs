//! R-precision and the continual-learning metric suite.
//!
//! The performance matrix holds P[t][i][dataset] for model session t
//! evaluated on the session-i test set; cells with i > t are undefined and
//! never zero-filled. Summary metrics follow the forgetting convention in
//! which backward transfer measures peak-minus-final performance, so lower
//! is better and 0 means nothing was ever lost.

use crate::corpus::{DatasetId, Docid, QueryExample, TaskId};
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// r/R: the fraction of the R golden documents present in the top-R ranks.
pub fn r_precision(provenance: &BTreeSet<Docid>, ranked: &[Docid]) -> f64 {
    let r_total = provenance.len();
    if r_total == 0 {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(r_total)
        .filter(|d| provenance.contains(*d))
        .count();
    hits as f64 / r_total as f64
}

/// Mean R-precision of `rank_fn` over a test set; `None` when the set is
/// empty. Queries evaluate in parallel; the mean is reduced in input order.
pub fn matrix_entry<F>(examples: &[QueryExample], rank_fn: F) -> Result<Option<f64>>
where
    F: Fn(&QueryExample) -> Result<Vec<Docid>> + Sync,
{
    if examples.is_empty() {
        return Ok(None);
    }
    let scores: Vec<Result<f64>> = examples
        .par_iter()
        .map(|ex| Ok(r_precision(&ex.provenance, &rank_fn(ex)?)))
        .collect();
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(Some(total / examples.len() as f64))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceMatrix {
    entries: BTreeMap<(usize, usize, DatasetId), f64>,
}

impl PerformanceMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: usize, i: usize, dataset: DatasetId, value: f64) -> Result<()> {
        if i > t {
            return Err(Error::Validation(format!(
                "cell ({t}, {i}) is undefined: test session after model session"
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Validation(format!(
                "performance {value} outside [0, 1]"
            )));
        }
        self.entries.insert((t, i, dataset), value);
        Ok(())
    }

    pub fn get(&self, t: usize, i: usize, dataset: DatasetId) -> Option<f64> {
        self.entries.get(&(t, i, dataset)).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest model-session index present.
    pub fn t_max(&self) -> usize {
        self.entries.keys().map(|&(t, _, _)| t).max().unwrap_or(0)
    }

    pub fn datasets_at(&self, t: usize, i: usize) -> BTreeSet<DatasetId> {
        self.entries
            .iter()
            .filter(|((et, ei, _), _)| *et == t && *ei == i)
            .map(|((_, _, d), _)| *d)
            .collect()
    }

    /// Dataset-averaged P[t][i]. Errors when the cell has no entries.
    pub fn averaged(&self, t: usize, i: usize) -> Result<f64> {
        let values: Vec<f64> = self
            .entries
            .iter()
            .filter(|((et, ei, _), _)| *et == t && *ei == i)
            .map(|(_, &v)| v)
            .collect();
        if values.is_empty() {
            return Err(Error::Validation(format!(
                "matrix has no entries for (t={t}, i={i})"
            )));
        }
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, DatasetId, f64)> + '_ {
        self.entries.iter().map(|(&(t, i, d), &v)| (t, i, d, v))
    }

    /// CSV with columns (t, i, dataset, value); absent cells omitted.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv(&self) -> String {
        let mut body = String::from("t,i,dataset,value\n");
        for ((t, i, d), v) in &self.entries {
            body.push_str(&format!("{t},{i},{d},{v}\n"));
        }
        body
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&body, path)
    }

    fn from_csv(body: &str, path: &Path) -> Result<Self> {
        let mut out = PerformanceMatrix::new();
        for (lineno, line) in body.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let parse = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: msg,
            };
            if parts.len() != 4 {
                return Err(parse(format!("expected 4 columns, got {}", parts.len())));
            }
            let t: usize = parts[0].parse().map_err(|e| parse(format!("t: {e}")))?;
            let i: usize = parts[1].parse().map_err(|e| parse(format!("i: {e}")))?;
            let dataset = DatasetId::ALL
                .into_iter()
                .find(|d| d.name() == parts[2])
                .ok_or_else(|| parse(format!("unknown dataset {:?}", parts[2])))?;
            let v: f64 = parts[3].parse().map_err(|e| parse(format!("value: {e}")))?;
            out.insert(t, i, dataset, v)?;
        }
        Ok(out)
    }

    /// Verify the triangular completeness summary metrics need: every cell
    /// (t, i <= t) populated, with a consistent dataset set per column.
    fn check_complete(&self) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::Validation("performance matrix is empty".into()));
        }
        let t_max = self.t_max();
        let mut missing = Vec::new();
        for i in 0..=t_max {
            let reference = self.datasets_at(i, i);
            if reference.is_empty() {
                missing.push(format!("({i}, {i})"));
                continue;
            }
            for t in i..=t_max {
                let ds = self.datasets_at(t, i);
                if ds.is_empty() {
                    missing.push(format!("({t}, {i})"));
                } else if ds != reference {
                    return Err(Error::Validation(format!(
                        "dataset sets differ within column {i}: {:?} at t={i} vs {:?} at t={t}",
                        reference, ds
                    )));
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "matrix incomplete; missing cells: {}",
                missing.join(", ")
            )));
        }
        Ok(t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VpScope {
    Dataset(DatasetId),
    Task(TaskId),
    All,
}

/// Vertical performance of session t: the diagonal entry P[t][t] at dataset,
/// task (mean over its datasets), or all-datasets scope.
pub fn vp(matrix: &PerformanceMatrix, t: usize, scope: VpScope) -> Result<f64> {
    let present = matrix.datasets_at(t, t);
    if present.is_empty() {
        return Err(Error::Validation(format!("no diagonal entries at t={t}")));
    }
    let wanted: Vec<DatasetId> = match scope {
        VpScope::Dataset(d) => vec![d],
        VpScope::Task(task) => present.iter().copied().filter(|d| d.task() == task).collect(),
        VpScope::All => present.iter().copied().collect(),
    };
    if wanted.is_empty() {
        return Err(Error::Validation(format!(
            "no datasets for scope {scope:?} at t={t}"
        )));
    }
    let mut values = Vec::with_capacity(wanted.len());
    let mut missing = Vec::new();
    for d in wanted {
        match matrix.get(t, t, d) {
            Some(v) => values.push(v),
            None => missing.push(d.name()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "missing diagonal entries at t={t}: {}",
            missing.join(", ")
        )));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryMetrics {
    /// Mean final-session performance over all test sessions.
    pub ap: f64,
    /// Mean over old sessions of (peak earlier performance - final
    /// performance); a forgetting measure, lower is better.
    pub bwt: f64,
    /// Mean diagonal performance over incremental sessions.
    pub fwt: f64,
}

/// AP, BWT and FWT over a complete matrix (dataset-averaged cells).
pub fn summary_metrics(matrix: &PerformanceMatrix) -> Result<SummaryMetrics> {
    let t_max = matrix.check_complete()?;
    if t_max < 1 {
        return Err(Error::Validation(
            "summary metrics need at least one incremental session".into(),
        ));
    }
    let p = |t: usize, i: usize| matrix.averaged(t, i);

    let mut ap = 0.0;
    for i in 0..=t_max {
        ap += p(t_max, i)?;
    }
    ap /= (t_max + 1) as f64;

    let mut bwt = 0.0;
    for i in 0..t_max {
        // Max over defined earlier sessions t in {i, .., T-1}.
        let mut peak_drop = f64::NEG_INFINITY;
        let final_p = p(t_max, i)?;
        for t in i..t_max {
            peak_drop = peak_drop.max(p(t, i)? - final_p);
        }
        bwt += peak_drop;
    }
    bwt /= t_max as f64;

    let mut fwt = 0.0;
    for t in 1..=t_max {
        fwt += p(t, t)?;
    }
    fwt /= t_max as f64;

    Ok(SummaryMetrics { ap, bwt, fwt })
}

/// Plain-text summary: per-session vertical performance plus the three
/// across-session metrics. BWT is reported as forgetting (lower is better).
pub fn render_report(matrix: &PerformanceMatrix, summary: &SummaryMetrics) -> String {
    let t_max = matrix.t_max();
    let mut out = String::new();
    out.push_str("session  VP\n");
    for t in 0..=t_max {
        match vp(matrix, t, VpScope::All) {
            Ok(v) => out.push_str(&format!("{t:<7}  {:.4}\n", v)),
            Err(_) => out.push_str(&format!("{t:<7}  -\n")),
        }
    }
    out.push_str(&format!("\nAP   {:.4}  (higher is better)\n", summary.ap));
    out.push_str(&format!(
        "BWT  {:.4}  (forgetting; lower is better, 0 = none)\n",
        summary.bwt
    ));
    out.push_str(&format!("FWT  {:.4}  (higher is better)\n", summary.fwt));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(t: &str) -> Docid {
        Docid::new(t).unwrap()
    }

    #[test]
    fn r_precision_counts_hits_in_top_r() {
        let provenance: BTreeSet<Docid> = [d("a"), d("b")].into();
        // Only a is inside the top-2 window.
        assert_eq!(r_precision(&provenance, &[d("a"), d("c"), d("b")]), 0.5);
        // Exact set in any order is 1.0.
        assert_eq!(r_precision(&provenance, &[d("b"), d("a")]), 1.0);
        // Empty ranking scores zero.
        assert_eq!(r_precision(&provenance, &[]), 0.0);
    }

    #[test]
    fn matrix_entry_means_over_queries() {
        let make = |id: &str, prov: &str| QueryExample {
            query_id: id.into(),
            dataset: DatasetId::Fev,
            task: TaskId::FactChecking,
            query_text: "q".into(),
            provenance: [d(prov)].into(),
        };
        let examples = vec![make("1", "x"), make("2", "y")];
        // First query retrieved perfectly, second not at all.
        let entry = matrix_entry(&examples, |ex| {
            Ok(if ex.query_id == "1" { vec![d("x")] } else { vec![d("z")] })
        })
        .unwrap();
        assert_eq!(entry, Some(0.5));
        // Perfect retrieval.
        let entry = matrix_entry(&examples, |ex| {
            Ok(vec![ex.provenance.iter().next().unwrap().clone()])
        })
        .unwrap();
        assert_eq!(entry, Some(1.0));
        // Empty set is absent, not zero.
        assert_eq!(matrix_entry(&[], |_| Ok(vec![])).unwrap(), None);
    }

    #[test]
    fn matrix_rejects_undefined_and_out_of_range_cells() {
        let mut m = PerformanceMatrix::new();
        assert!(m.insert(0, 1, DatasetId::Fev, 0.5).is_err());
        assert!(m.insert(1, 0, DatasetId::Fev, 1.5).is_err());
        m.insert(1, 0, DatasetId::Fev, 0.5).unwrap();
        assert_eq!(m.get(1, 0, DatasetId::Fev), Some(0.5));
    }

    fn hand_matrix() -> PerformanceMatrix {
        // Single-dataset matrix with rows t, cols i:
        // [[0.6], [0.5, 0.4], [0.3, 0.2, 0.35]].
        let mut m = PerformanceMatrix::new();
        let ds = DatasetId::Fev;
        m.insert(0, 0, ds, 0.6).unwrap();
        m.insert(1, 0, ds, 0.5).unwrap();
        m.insert(1, 1, ds, 0.4).unwrap();
        m.insert(2, 0, ds, 0.3).unwrap();
        m.insert(2, 1, ds, 0.2).unwrap();
        m.insert(2, 2, ds, 0.35).unwrap();
        m
    }

    #[test]
    fn hand_matrix_summary_values() {
        let s = summary_metrics(&hand_matrix()).unwrap();
        assert!((s.ap - (0.3 + 0.2 + 0.35) / 3.0).abs() < 1e-12);
        assert!((s.bwt - 0.25).abs() < 1e-12);
        assert!((s.fwt - 0.375).abs() < 1e-12);
    }

    #[test]
    fn constant_matrix_has_zero_bwt() {
        let mut m = PerformanceMatrix::new();
        for t in 0..=3 {
            for i in 0..=t {
                m.insert(t, i, DatasetId::Nq, 0.7).unwrap();
            }
        }
        let s = summary_metrics(&m).unwrap();
        assert!((s.ap - 0.7).abs() < 1e-12);
        assert!(s.bwt.abs() < 1e-12);
        assert!((s.fwt - 0.7).abs() < 1e-12);
    }

    #[test]
    fn vp_scopes_agree_on_single_dataset_and_average_within_task() {
        let m = hand_matrix();
        let a = vp(&m, 2, VpScope::Dataset(DatasetId::Fev)).unwrap();
        let b = vp(&m, 2, VpScope::Task(TaskId::FactChecking)).unwrap();
        let c = vp(&m, 2, VpScope::All).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert!((a - 0.35).abs() < 1e-12);

        let mut m = PerformanceMatrix::new();
        m.insert(0, 0, DatasetId::Ay2, 0.4).unwrap();
        m.insert(0, 0, DatasetId::WnWi, 0.6).unwrap();
        let task_vp = vp(&m, 0, VpScope::Task(TaskId::EntityLinking)).unwrap();
        assert!((task_vp - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eleven_dataset_matrix_matches_direct_average() {
        let mut m = PerformanceMatrix::new();
        let mut expect = 0.0;
        for (k, ds) in DatasetId::ALL.into_iter().enumerate() {
            let v = (k as f64 + 1.0) / 20.0;
            expect += v;
            m.insert(0, 0, ds, v).unwrap();
        }
        expect /= 11.0;
        assert!((vp(&m, 0, VpScope::All).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn incomplete_matrix_errors_and_lists_missing_cells() {
        let mut m = PerformanceMatrix::new();
        m.insert(0, 0, DatasetId::Fev, 0.5).unwrap();
        m.insert(1, 1, DatasetId::Fev, 0.5).unwrap();
        // (1, 0) missing.
        let err = summary_metrics(&m).unwrap_err().to_string();
        assert!(err.contains("(1, 0)"), "{err}");
    }

    #[test]
    fn duplicating_values_across_datasets_preserves_averages() {
        let mut a = hand_matrix();
        let s1 = summary_metrics(&a).unwrap();
        for (t, i, _, v) in hand_matrix().iter().collect::<Vec<_>>() {
            a.insert(t, i, DatasetId::Wow, v).unwrap();
        }
        let s2 = summary_metrics(&a).unwrap();
        assert!((s1.ap - s2.ap).abs() < 1e-12);
        assert!((s1.bwt - s2.bwt).abs() < 1e-12);
        assert!((s1.fwt - s2.fwt).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let m = hand_matrix();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matrix.csv");
        m.save_csv(&path).unwrap();
        let loaded = PerformanceMatrix::load_csv(&path).unwrap();
        assert_eq!(m, loaded);
    }

    #[test]
    fn report_mentions_all_sessions_and_metrics() {
        let m = hand_matrix();
        let s = summary_metrics(&m).unwrap();
        let report = render_report(&m, &s);
        for needle in ["session", "AP", "BWT", "FWT", "0.3500"] {
            assert!(report.contains(needle), "missing {needle} in:\n{report}");
        }
    }
}
