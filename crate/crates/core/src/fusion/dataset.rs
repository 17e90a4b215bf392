use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::frame::{StabilityLabel, TelemetryFrame};
use crate::env::{EnvConfig, Scenario, VoltVarEnv, EPISODE_HOURS};
use crate::error::{Error, Result};
use crate::grid::{ControlAction, PowerNetwork};

/// Frames from holding the current settings through whole days: the first
/// half under normal operation (stable), the rest under `attack` (unstable).
pub fn generate_dataset(
    net: &PowerNetwork,
    attack: Scenario,
    frames: usize,
    seed: u64,
    cfg: &EnvConfig,
) -> Result<Vec<TelemetryFrame>> {
    if attack == Scenario::Normal {
        return Err(Error::InvalidArgument("dataset needs an attack scenario".into()));
    }
    let quiet = frames / 2;
    let mut out = Vec::with_capacity(frames);
    for (scenario, count, label) in
        [(Scenario::Normal, quiet, StabilityLabel::Stable), (attack, frames - quiet, StabilityLabel::Unstable)]
    {
        let mut env = VoltVarEnv::new(net.clone(), scenario, cfg.clone())?;
        let hold = ControlAction::new(Vec::new());
        let mut episode = 0u64;
        while out.iter().filter(|f: &&TelemetryFrame| f.label == Some(label)).count() < count {
            env.reset_state(seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(episode))?;
            for _ in 0..EPISODE_HOURS {
                env.step_action(&hold)?;
                let mut f = env.telemetry();
                f.label = Some(label);
                f.t += episode as f64 * EPISODE_HOURS as f64 * 3600.0;
                out.push(f);
                if out.iter().filter(|f| f.label == Some(label)).count() == count {
                    break;
                }
            }
            episode += 1;
        }
    }
    Ok(out)
}

/// N×D feature matrix, optionally without the RTT column.
pub fn feature_matrix(frames: &[TelemetryFrame], with_rtt: bool) -> Result<DMatrix<f64>> {
    let first = frames.first().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let d = first.feature_count() - usize::from(!with_rtt);
    let mut rows = Vec::with_capacity(frames.len() * d);
    for (i, f) in frames.iter().enumerate() {
        f.validate()?;
        let row = if with_rtt { f.features() } else { f.physical_features() };
        if row.len() != d {
            return Err(Error::Dimension(format!("frame {i} has {} features, expected {d}", row.len())));
        }
        rows.extend(row);
    }
    Ok(DMatrix::from_row_slice(frames.len(), d, &rows))
}

pub fn write_dataset_csv<W: Write>(w: W, frames: &[TelemetryFrame]) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let mut wr = csv::Writer::from_writer(w);
    let mut header = TelemetryFrame::header(first.vm.len(), first.branch_current.len());
    header.extend(["label", "t", "scenario"].map(String::from));
    wr.write_record(&header).map_err(csv_err)?;
    for f in frames {
        let mut rec: Vec<String> = f.features().iter().map(|v| v.to_string()).collect();
        rec.push(f.label.map_or("", |l| l.as_str()).to_string());
        rec.push(f.t.to_string());
        rec.push(f.scenario.clone());
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(r: R) -> Result<Vec<TelemetryFrame>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    let buses = header.iter().filter(|h| h.starts_with("vm_")).count();
    let branches = header.iter().filter(|h| h.starts_with("i_")).count();
    let mut expected = TelemetryFrame::header(buses, branches);
    expected.extend(["label", "t", "scenario"].map(String::from));
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::InvalidArgument(format!(
            "dataset header does not match the {buses}-bus, {branches}-branch layout"
        )));
    }
    let nf = 2 * buses + branches + 1;
    let mut frames = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("row {}: column `{}` is not a number", line + 1, &header[k]))
            })
        };
        let vals: Vec<f64> = (0..nf).map(num).collect::<Result<_>>()?;
        let label = match rec[nf].trim() {
            "" => None,
            s => Some(s.parse()?),
        };
        frames.push(TelemetryFrame {
            vm: vals[..buses].to_vec(),
            va: vals[buses..2 * buses].to_vec(),
            branch_current: vals[2 * buses..nf - 1].to_vec(),
            rtt_ms: vals[nf - 1],
            label,
            t: num(nf + 1)?,
            scenario: rec[nf + 2].to_string(),
        });
    }
    Ok(frames)
}

pub fn write_embedding_csv<W: Write>(
    w: W,
    points: &[[f64; 2]],
    labels: &[StabilityLabel],
    frames: &[TelemetryFrame],
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "y", "label", "scenario"]).map_err(csv_err)?;
    for ((p, l), f) in points.iter().zip(labels).zip(frames) {
        wr.write_record([p[0].to_string(), p[1].to_string(), l.as_str().to_string(), f.scenario.clone()])
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}
