//! Fixed scripted episodes recorded step by step, used to check that other
//! front ends drive the environment identically.

use std::io::Write;
use std::path::Path;

use super::CtrEnv;
use crate::error::{Error, Result};
use crate::jointspace::ActionVector;

/// Deterministic normalized action sequence of length `n`.
pub fn scripted_actions(n: usize) -> Vec<[f64; ActionVector::DIM]> {
    (0..n)
        .map(|k| [0, 1, 2, 3, 4, 5].map(|j| (0.3 * k as f64 + 1.1 * j as f64).sin()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// The environment was reset before this step's observation.
    pub reset: bool,
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Resets, then applies `actions` in order, resetting after every terminal
/// step. Row 0 holds the initial observation with zero reward.
pub fn record_trace(env: &mut CtrEnv, seed: u64, actions: &[[f64; ActionVector::DIM]]) -> Result<Vec<TraceRow>> {
    env.seed(seed);
    let mut rows = vec![TraceRow {
        step: 0,
        reset: true,
        observation: env.reset()?.to_vec(),
        reward: 0.0,
        terminal: false,
    }];
    let mut reset_next = false;
    for (k, a) in actions.iter().enumerate() {
        if reset_next {
            env.reset()?;
        }
        let r = env.step_normalized(a)?;
        rows.push(TraceRow {
            step: k + 1,
            reset: reset_next,
            observation: r.state.to_vec(),
            reward: r.reward,
            terminal: r.terminal,
        });
        reset_next = r.terminal;
    }
    Ok(rows)
}

/// Values are written with full round-trip precision.
pub fn write_trace<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let dim = rows.first().map_or(0, |r| r.observation.len());
    let mut header: Vec<String> = ["step", "reset", "reward", "terminal"].map(String::from).to_vec();
    header.extend((0..dim).map(|i| format!("obs{i}")));
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            r.reset.to_string(),
            r.reward.to_string(),
            r.terminal.to_string(),
        ];
        rec.extend(r.observation.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<trace csv>", e))?;
    Ok(())
}

pub fn save_trace(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(rows, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;

    #[test]
    fn trace_is_reproducible() {
        let actions = scripted_actions(50);
        let mut a = CtrEnv::new(EnvConfig::single(3)).unwrap();
        let mut b = CtrEnv::new(EnvConfig::single(3)).unwrap();
        let ta = record_trace(&mut a, 9, &actions).unwrap();
        let tb = record_trace(&mut b, 9, &actions).unwrap();
        assert_eq!(ta.len(), 51);
        assert_eq!(ta, tb);
        assert!(ta.iter().all(|r| r.observation.len() == 13));
    }

    #[test]
    fn csv_values_round_trip() {
        let mut env = CtrEnv::new(EnvConfig::single(0)).unwrap();
        let rows = record_trace(&mut env, 1, &scripted_actions(5)).unwrap();
        let mut buf = Vec::new();
        write_trace(&rows, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        for (rec, row) in rdr.records().zip(&rows) {
            let rec = rec.unwrap();
            for (i, v) in row.observation.iter().enumerate() {
                assert_eq!(rec[4 + i].parse::<f64>().unwrap(), *v);
            }
        }
    }

    #[test]
    fn scripted_actions_are_in_range() {
        assert!(scripted_actions(100).iter().flatten().all(|v| v.abs() <= 1.0));
    }
}
