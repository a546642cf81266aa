use serde::{Deserialize, Serialize};

/// Per-stage token and latency accounting for one session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    /// One row per stage tag, in order of first use.
    pub rows: Vec<LedgerRow>,
    pub totals: LedgerTotals,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub stage: String,
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_time_ms: u64,
}

impl LedgerTotals {
    pub fn tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl TokenLedger {
    pub fn record(&mut self, stage: &str, input_tokens: u64, output_tokens: u64, wall_time_ms: u64) {
        let row = match self.rows.iter_mut().position(|r| r.stage == stage) {
            Some(i) => &mut self.rows[i],
            None => {
                self.rows.push(LedgerRow {
                    stage: stage.to_string(),
                    calls: 0,
                    input_tokens: 0,
                    output_tokens: 0,
                    wall_time_ms: 0,
                });
                self.rows.last_mut().unwrap()
            }
        };
        row.calls += 1;
        row.input_tokens += input_tokens;
        row.output_tokens += output_tokens;
        row.wall_time_ms += wall_time_ms;

        self.totals.calls += 1;
        self.totals.input_tokens += input_tokens;
        self.totals.output_tokens += output_tokens;
        self.totals.wall_time_ms += wall_time_ms;
    }

    pub fn row(&self, stage: &str) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.stage == stage)
    }

    /// Column sums recomputed from the rows.
    pub fn column_sums(&self) -> LedgerTotals {
        self.rows.iter().fold(LedgerTotals::default(), |mut acc, r| {
            acc.calls += r.calls;
            acc.input_tokens += r.input_tokens;
            acc.output_tokens += r.output_tokens;
            acc.wall_time_ms += r.wall_time_ms;
            acc
        })
    }

    pub fn is_consistent(&self) -> bool {
        self.column_sums() == self.totals
    }
}
