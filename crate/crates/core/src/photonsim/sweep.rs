use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{simulate, Passband, SimOutput, SimRun};
use crate::error::{Error, Result};

const DEFAULT_FILTER_BANDWIDTH_NM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ExcessBias,
    GateDelayOffset,
    GateWidth,
    FilterCenter,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::ExcessBias => "excess_bias",
            SweepAxis::GateDelayOffset => "gate_delay_offset",
            SweepAxis::GateWidth => "gate_width",
            SweepAxis::FilterCenter => "filter_center",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "excess_bias" => Ok(SweepAxis::ExcessBias),
            "gate_delay_offset" | "gate_delay" => Ok(SweepAxis::GateDelayOffset),
            "gate_width" => Ok(SweepAxis::GateWidth),
            "filter_center" => Ok(SweepAxis::FilterCenter),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// Returns a copy of `run` with one axis moved to `value`.
pub fn apply_axis_value(run: &SimRun, axis: SweepAxis, value: f64) -> SimRun {
    let mut r = run.clone();
    match axis {
        SweepAxis::ExcessBias => r.config.dut.excess_bias_v = value,
        SweepAxis::GateDelayOffset => r.config.dut.gate_delay_offset_ns = value,
        SweepAxis::GateWidth => r.config.dut.gate_width_ns = value,
        SweepAxis::FilterCenter => {
            let bw = run.filter.map_or(DEFAULT_FILTER_BANDWIDTH_NM, |f| f.bandwidth_nm);
            r.filter = Some(Passband::new(value, bw));
        }
    }
    r
}

/// One independent run per value; the i-th run uses seed `base.seed + i`.
pub fn simulate_sweep(base: &SimRun, axis: SweepAxis, values: &[f64]) -> Result<Vec<SimOutput>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut run = apply_axis_value(base, axis, v);
            run.seed = base.seed.wrapping_add(i as u64);
            simulate(&run)
        })
        .collect()
}
