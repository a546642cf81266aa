use periop_core::session::Phase;

use crate::common::{engine, ensure, golden, run_fixture, to_json, SESSIONS};
use crate::Outcome;

pub fn run() -> Outcome {
    let mut calls = 0;
    for (i, (patient, _, name)) in SESSIONS.iter().enumerate() {
        let first = run_fixture(&engine(), i, &[]);
        let second = run_fixture(&engine(), i, &[]);
        ensure(first.phase == Phase::Finalized, || format!("{patient}: ended in {}", first.phase))?;

        let output = to_json(&first.output);
        let trace = to_json(&first.trace);
        let ledger = to_json(&first.ledger);
        ensure(output == to_json(&second.output), || format!("{patient}: final output differs between runs"))?;
        ensure(trace == to_json(&second.trace), || format!("{patient}: search trace differs between runs"))?;
        ensure(ledger == to_json(&second.ledger), || format!("{patient}: token ledger differs between runs"))?;
        ensure(to_json(&first) == to_json(&second), || format!("{patient}: session document differs between runs"))?;

        golden(&format!("{name}.output.json"), &output)?;
        golden(&format!("{name}.trace.json"), &trace)?;
        golden(&format!("{name}.ledger.json"), &ledger)?;
        golden(&format!("{name}.session.json"), &to_json(&first))?;

        let ledger = &first.ledger;
        let (mut c, mut inp, mut out) = (0, 0, 0);
        for row in &ledger.rows {
            c += row.calls;
            inp += row.input_tokens;
            out += row.output_tokens;
        }
        ensure(
            ledger.is_consistent()
                && c == ledger.totals.calls
                && inp == ledger.totals.input_tokens
                && out == ledger.totals.output_tokens,
            || format!("{patient}: ledger totals {:?} do not equal the row sums", ledger.totals),
        )?;
        ensure(ledger.totals.calls > 0, || format!("{patient}: no model calls recorded"))?;
        calls += ledger.totals.calls;
    }
    Ok(format!(
        "3 sessions byte-identical across fresh engines and equal to golden files; ledger totals = row sums ({calls} calls)"
    ))
}
