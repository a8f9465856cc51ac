use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use backflash_core::photonsim::SweepAxis;
use backflash_core::tracelab::{CiMethod, DEFAULT_BIN_WIDTH_PS};

#[derive(Debug, Parser)]
#[command(name = "backflash", version, about = "Simulate and analyse SPAD backflash leakage")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo acquisition and write a binary tag file.
    Simulate(SimulateArgs),
    /// Fold a tag file into a correlation histogram CSV.
    Histogram(HistogramArgs),
    /// Estimate leakage from a gated and a gates-off reference tag file.
    Analyze(AnalyzeArgs),
    /// Simulate and analyse one acquisition pair per value of a bench parameter.
    Sweep(SweepArgs),
    /// Backflash counts behind a tunable filter stepped across the spectrum.
    Spectrum(SpectrumArgs),
    /// Residual leakage of a report under a countermeasure.
    Guard(GuardArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Dut1,
    Dut2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CiArg {
    Normal,
    Garwood,
}

impl From<CiArg> for CiMethod {
    fn from(c: CiArg) -> Self {
        match c {
            CiArg::Normal => CiMethod::Normal,
            CiArg::Garwood => CiMethod::Garwood,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("bench").required(true).args(["config", "preset"])))]
pub struct BenchArgs {
    /// Bench configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in bench configuration.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH_PS)]
    pub bin_width_ps: u64,
    /// Delay assigned to the first histogram bin.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub origin_ps: i64,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("length").required(true).args(["pulses", "duration_s"])))]
pub struct SimulateArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Acquisition time; converted to pulses with the laser repetition rate.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference acquisition: bias applied, no gate signal.
    #[arg(long)]
    pub gates_off: bool,
    /// Tunable filter in front of the OTDR detector.
    #[arg(long)]
    pub filter_center_nm: Option<f64>,
    #[arg(long, default_value_t = 10.0, requires = "filter_center_nm")]
    pub filter_bandwidth_nm: f64,
    /// Also write the source of every OTDR record.
    #[arg(long)]
    pub debug: bool,
    /// Provenance sidecar path; defaults to the tag file path plus `.provenance.csv`.
    #[arg(long, requires = "debug")]
    pub provenance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    #[arg(long)]
    pub tags: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long, value_enum, default_value_t = CiArg::Normal)]
    pub ci: CiArg,
    /// Remove expected in-gate dark clicks from the DUT count.
    #[arg(long)]
    pub subtract_dut_dark: bool,
    /// Minimum prominence of reflection peaks, in counts.
    #[arg(long)]
    pub peak_min_prominence: Option<f64>,
    /// Padding on both sides of the detected backflash region.
    #[arg(long)]
    pub region_margin_ps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    #[arg(long)]
    pub gated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Integrate a fixed region instead of detecting one.
    #[arg(long, requires = "region_end_ps")]
    pub region_start_ps: Option<f64>,
    #[arg(long, requires = "region_start_ps")]
    pub region_end_ps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// excess_bias, gate_delay_offset, gate_width or filter_center.
    #[arg(long, value_parser = SweepAxis::from_str)]
    pub axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub values: Vec<f64>,
    /// Pulses per acquisition; the reference run uses the same number.
    #[arg(long)]
    pub pulses: u64,
    /// Seed of the first point; point i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Passband width used when sweeping filter_center.
    #[arg(long, default_value_t = 10.0)]
    pub filter_bandwidth_nm: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("grid").required(true).args(["centers_nm", "from_nm"])))]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Explicit filter centres.
    #[arg(long, value_delimiter = ',')]
    pub centers_nm: Vec<f64>,
    /// First centre of an evenly spaced grid.
    #[arg(long, requires_all = ["to_nm", "step_nm"])]
    pub from_nm: Option<f64>,
    #[arg(long, requires = "from_nm")]
    pub to_nm: Option<f64>,
    #[arg(long, requires = "from_nm")]
    pub step_nm: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub bandwidth_nm: f64,
    #[arg(long)]
    pub pulses: u64,
    /// Seed of the first centre; centre i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
pub struct GuardArgs {
    /// Report written by `analyze`.
    #[arg(long)]
    pub report: PathBuf,
    /// Countermeasure JSON.
    #[arg(long)]
    pub countermeasure: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn values_split_on_commas() {
        let cli = Cli::try_parse_from([
            "backflash",
            "sweep",
            "--preset",
            "dut1",
            "--axis",
            "excess_bias",
            "--values",
            "3,4.5,7",
            "--pulses",
            "10",
            "--out",
            "x.csv",
        ])
        .unwrap();
        let Command::Sweep(a) = cli.command else { panic!() };
        assert_eq!(a.values, vec![3.0, 4.5, 7.0]);
        assert_eq!(a.axis, SweepAxis::ExcessBias);
    }

    #[test]
    fn bench_source_is_required() {
        assert!(Cli::try_parse_from(["backflash", "simulate", "--out", "t", "--pulses", "1"]).is_err());
        assert!(Cli::try_parse_from(["backflash", "simulate", "--preset", "dut1", "--out", "t"]).is_err());
    }
}
