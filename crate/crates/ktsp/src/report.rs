//! Run reports: one record per solve, serializable as JSON or CSV.
//!
//! JSON is the machine-readable format and is deliberately free of
//! wall-clock fields unless timing is requested, so two runs with the
//! same seed produce byte-identical output. CSV is a flat single-line
//! summary for spreadsheets; it always has every column, empty when a
//! value is absent.

use crate::geometry::RawInstance;
use crate::solve::{Mode, Solution};
use serde::{Deserialize, Serialize};

/// One solved instance, flattened for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    /// Caller-chosen label (file name, generator tag, ...).
    pub instance: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    /// `"randomized"` or `"derandomized"`.
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Tour cost recomputed over raw coordinates.
    pub cost: f64,
    /// Visiting order by input index.
    pub order: Vec<usize>,
    /// Exact optimum, when a reference was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_cost: Option<f64>,
    /// `cost / oracle_cost`, when a reference was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// Budget-ladder index of the winning DP entry.
    pub chosen_slot: usize,
    /// Quadtree shift of the winning run.
    pub chosen_shift: Vec<i64>,
    /// Point count of the winning subinstance.
    pub sub_size: usize,
    /// Cap-relaxation rounds needed before success.
    pub bumps: u32,
    /// Exported DP states summed over the successful round.
    pub dp_states: u64,
    /// Largest working table over all cells of the successful round.
    pub peak_states: usize,
    /// Wall-clock milliseconds; omitted unless timing was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl RunReport {
    /// Assemble a report from a solved instance. `oracle_cost` and
    /// `wall_ms` are optional extras; the ratio is derived (a zero-cost
    /// optimum with a zero-cost tour counts as ratio 1).
    pub fn new(
        instance: impl Into<String>,
        raw: &RawInstance,
        epsilon: f64,
        mode: Mode,
        sol: &Solution,
        oracle_cost: Option<f64>,
        wall_ms: Option<u64>,
    ) -> Self {
        let ratio = oracle_cost.map(|oc| {
            if oc > 1e-12 {
                sol.tour.cost / oc
            } else if sol.tour.cost <= 1e-9 {
                1.0
            } else {
                f64::INFINITY
            }
        });
        let seed = match mode {
            Mode::Randomized { seed } => Some(seed),
            Mode::Derandomized => None,
        };
        RunReport {
            instance: instance.into(),
            n: raw.points.len(),
            d: raw.d,
            k: raw.k,
            epsilon,
            mode: mode.name().to_string(),
            seed,
            cost: sol.tour.cost,
            order: sol.tour.order.clone(),
            oracle_cost,
            ratio,
            chosen_slot: sol.chosen_slot,
            chosen_shift: sol.chosen_shift.clone(),
            sub_size: sol.sub_size,
            bumps: sol.bumps,
            dp_states: sol.dp_states,
            peak_states: sol.peak_states,
            wall_ms,
        }
    }

    /// Pretty JSON, trailing newline included.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Column names for [`RunReport::to_csv_row`], comma separated.
    pub fn csv_header() -> &'static str {
        "instance,n,d,k,epsilon,mode,seed,cost,oracle_cost,ratio,chosen_slot,sub_size,bumps,dp_states,peak_states,wall_ms"
    }

    /// One CSV line matching [`RunReport::csv_header`]; absent optionals
    /// serialize as empty fields. The variable-length tour order is JSON
    /// only.
    pub fn to_csv_row(&self) -> String {
        let opt_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.n,
            self.d,
            self.k,
            self.epsilon,
            self.mode,
            opt_u(self.seed),
            self.cost,
            opt_f(self.oracle_cost),
            opt_f(self.ratio),
            self.chosen_slot,
            self.sub_size,
            self.bumps,
            self.dp_states,
            self.peak_states,
            opt_u(self.wall_ms),
        )
    }
}
