use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};

use wavefield_core::connection::TensorKind;
use wavefield_core::diagnostics::TestFunction;

use crate::report::Format;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "wavefield",
    version,
    about = "Daubechies wavelet lattice field theory toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Append a run manifest (one JSON line) to this file.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Coefficient cache directory (default: $WAVEFIELD_CACHE, then the
    /// platform cache directory).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Daubechies filter coefficients h and g.
    Filters(FiltersArgs),
    /// Scaling function (or derivative) samples on a dyadic grid.
    Scalfun(ScalfunArgs),
    /// Multilevel periodic wavelet transform of a vector.
    Dwt(DwtArgs),
    /// Connection coefficient tables.
    Coeffs(CoeffsArgs),
    /// Lowest eigenvalues of the truncated lattice Hamiltonian.
    Hamiltonian(HamiltonianArgs),
    /// Wegner flow of a symmetric matrix.
    Flow(FlowArgs),
    /// Resolution-kernel diagnostics as (k, value) rows.
    Diagnose(DiagnoseArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Filters(_) => "filters",
            Command::Scalfun(_) => "scalfun",
            Command::Dwt(_) => "dwt",
            Command::Coeffs(_) => "coeffs",
            Command::Hamiltonian(_) => "hamiltonian",
            Command::Flow(_) => "flow",
            Command::Diagnose(_) => "diagnose",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FiltersArgs {
    #[arg(long)]
    pub order: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ScalfunArgs {
    #[arg(long)]
    pub order: usize,
    #[arg(long)]
    pub level: u32,
    /// Sample s' instead of s.
    #[arg(long)]
    pub derivative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Forward,
    Inverse,
}

#[derive(Debug, Args, Serialize)]
pub struct DwtArgs {
    #[arg(long)]
    pub order: usize,
    #[arg(long)]
    pub levels: usize,
    /// One value per line; for the inverse, a pyramid as written by the
    /// forward direction (level headers optional).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    /// Scale of the signal.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub scale: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    D,
    Gamma3,
    Gamma4,
}

impl KindArg {
    pub fn kind(self) -> TensorKind {
        match self {
            KindArg::D => TensorKind::Derivative,
            KindArg::Gamma3 => TensorKind::Gamma(3),
            KindArg::Gamma4 => TensorKind::Gamma(4),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CoeffsArgs {
    #[arg(long)]
    pub order: usize,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub scale: i32,
    /// Compare every entry with quadrature on this grid level.
    #[arg(long, value_name = "LEVEL")]
    pub verify_oracle: Option<u32>,
}

#[derive(Debug, Args, Serialize)]
pub struct HamiltonianArgs {
    #[arg(long)]
    pub order: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub scale: i32,
    #[arg(long)]
    pub modes: usize,
    #[arg(long)]
    pub nmax: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub mass2: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: f64,
    /// Vacuum frequency (default: sqrt(mass2)).
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub eigs: usize,
    /// Write the matrix in coordinate format.
    #[arg(long, value_name = "PATH")]
    pub dump_matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 0x5EED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorArg {
    Diag,
    Block,
}

#[derive(Debug, Args, Serialize)]
pub struct FlowArgs {
    /// Symmetric matrix in coordinate format.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub generator: GeneratorArg,
    /// Size of the leading block for `--generator block`.
    #[arg(long)]
    pub partition: Option<usize>,
    #[arg(long)]
    pub lambda_end: f64,
    /// Trajectory CSV: lambda, offdiag_frobenius, max_eigen_drift.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
    /// Write the flowed matrix in coordinate format.
    #[arg(long, value_name = "PATH")]
    pub final_matrix: Option<PathBuf>,
    /// Local error tolerance per step, relative to |H|_F.
    #[arg(long, default_value_t = 1e-14)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeArg {
    Partition,
    Projection,
    Commutator,
}

/// A test function as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    pub text: String,
    pub function: TestFunction,
}

impl Serialize for FunctionSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

pub fn parse_function(text: &str) -> Result<FunctionSpec, String> {
    let function = match text.split_once(':') {
        Some(("poly", d)) => TestFunction::Poly(d.parse().map_err(|e| format!("degree: {e}"))?),
        Some(("gauss", rest)) => {
            let (c, w) = rest.split_once(',').ok_or("expected gauss:center,width")?;
            let center: f64 = c.parse().map_err(|e| format!("center: {e}"))?;
            let width: f64 = w.parse().map_err(|e| format!("width: {e}"))?;
            if width.is_nan() || width <= 0.0 {
                return Err("width must be positive".into());
            }
            TestFunction::Gauss { center, width }
        }
        None if text == "wavelet" => TestFunction::Wavelet,
        _ => return Err("expected poly:d, gauss:c,w or wavelet".into()),
    };
    Ok(FunctionSpec {
        text: text.to_string(),
        function,
    })
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub order: usize,
    /// Finest scale; rows are emitted for k = 0..=scale.
    #[arg(long)]
    pub scale: u32,
    #[arg(long, value_enum)]
    pub probe: ProbeArg,
    /// Default: a gaussian of width 4 at the window centre.
    #[arg(long, value_parser = parse_function)]
    pub function: Option<FunctionSpec>,
    /// Window length in scale-0 units.
    #[arg(long, default_value_t = 96)]
    pub window: u32,
    /// Grid refinement j - k.
    #[arg(long, default_value_t = 10)]
    pub refine: u32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_specs() {
        assert_eq!(
            parse_function("poly:2").unwrap().function,
            TestFunction::Poly(2)
        );
        assert_eq!(
            parse_function("gauss:48,4").unwrap().function,
            TestFunction::Gauss {
                center: 48.0,
                width: 4.0
            }
        );
        assert_eq!(
            parse_function("wavelet").unwrap().function,
            TestFunction::Wavelet
        );
        for bad in ["poly", "gauss:1", "gauss:1,0", "sine:3", "poly:x"] {
            assert!(parse_function(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn command_line_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
