use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use wavefield_core::connection::{
    cache_file_name, cached_tensor, measured_derivative_exponent, CoeffTensor, QuadratureOracle,
    TensorKind,
};
use wavefield_core::diagnostics::{
    commutator_residual, kernel_projection_error, partition_check, KernelProbe, TestFunction,
};
use wavefield_core::filters::{make_filters, FilterPair};
use wavefield_core::flow::{srg_flow, FlowState, Generator, StepControl, TrajectoryPoint};
use wavefield_core::fock::{build_phi4_hamiltonian, FockBasis, LatticeConfig, ModelParams};
use wavefield_core::lanczos::{lanczos_lowest, LanczosOptions};
use wavefield_core::scaling::{derivative_samples, scaling_samples};
use wavefield_core::sparse::{read_coo, write_coo, CsrMatrix};
use wavefield_core::transform::{forward, inverse, unflatten, CoeffVector, Pyramid};
use wavefield_core::{Error, Result};

use crate::args::*;
use crate::manifest::Files;
use crate::report::{float, Report, Table, Val};

pub struct Context {
    pub cache_dir: PathBuf,
    pub files: Files,
}

impl Context {
    fn tensor(&mut self, fp: &FilterPair, kind: TensorKind, scale: i32) -> Result<CoeffTensor> {
        let t = cached_tensor(&self.cache_dir, fp, kind, scale)?;
        self.files.inputs.push(
            self.cache_dir
                .join(cache_file_name(kind, fp.order(), scale)),
        );
        Ok(t)
    }

    fn read(&mut self, path: &Path) -> Result<String> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.files.inputs.push(path.to_path_buf());
        Ok(text)
    }

    fn write(&mut self, path: &Path, text: &str) -> Result<()> {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        self.files.outputs.push(path.to_path_buf());
        Ok(())
    }
}

pub fn dispatch(cmd: &Command, ctx: &mut Context) -> Result<Report> {
    match cmd {
        Command::Filters(a) => filters(a),
        Command::Scalfun(a) => scalfun(a),
        Command::Dwt(a) => dwt(a, ctx),
        Command::Coeffs(a) => coeffs(a, ctx),
        Command::Hamiltonian(a) => hamiltonian(a, ctx),
        Command::Flow(a) => flow(a, ctx),
        Command::Diagnose(a) => diagnose(a),
    }
}

fn filters(a: &FiltersArgs) -> Result<Report> {
    let fp = make_filters(a.order)?;
    let mut r = Report::default();
    r.meta("order", a.order);
    let mut t = Table::new("filters", &["n", "h", "g"]);
    for (n, (&h, &g)) in fp.h().iter().zip(fp.g()).enumerate() {
        t.push(vec![n.into(), h.into(), g.into()]);
    }
    r.tables.push(t);
    Ok(r)
}

fn scalfun(a: &ScalfunArgs) -> Result<Report> {
    let fp = make_filters(a.order)?;
    let samples = if a.derivative {
        derivative_samples(&fp, a.level)?
    } else {
        scaling_samples(&fp, a.level)?
    };
    let mut r = Report::default();
    r.meta("order", a.order);
    r.meta("level", a.level as usize);
    r.meta("derivative", a.derivative);
    let mut t = Table::new("samples", &["x", "value"]);
    for (x, v) in samples.points() {
        t.push(vec![x.into(), v.into()]);
    }
    r.tables.push(t);
    Ok(r)
}

/// Sections of a pyramid file: `(header, values)`. `# coarse ...` and
/// `# detail ...` lines open a new section, other `#` lines are comments;
/// values before any header form an unnamed section.
fn parse_sections(text: &str) -> Result<Vec<(Option<String>, Vec<f64>)>> {
    let mut out: Vec<(Option<String>, Vec<f64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let h = h.trim();
            if matches!(h.split_whitespace().next(), Some("coarse" | "detail")) {
                out.push((Some(h.to_string()), Vec::new()));
            }
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}: {line:?}", lineno + 1)))?;
        match out.last_mut() {
            Some(s) => s.1.push(v),
            None => out.push((None, vec![v])),
        }
    }
    Ok(out)
}

fn header_scale(header: &str) -> Option<i32> {
    header
        .split_whitespace()
        .find_map(|w| w.strip_prefix("scale=")?.parse().ok())
}

fn read_pyramid(text: &str, levels: usize, scale: i32) -> Result<Pyramid> {
    let sections = parse_sections(text)?;
    if sections.iter().all(|s| s.0.is_none()) {
        let flat: Vec<f64> = sections.into_iter().flat_map(|s| s.1).collect();
        return unflatten(&flat, levels, scale);
    }
    let (first, rest) = sections
        .split_first()
        .ok_or_else(|| Error::Parse("empty pyramid".into()))?;
    let is = |s: &(Option<String>, Vec<f64>), word: &str| {
        s.0.as_deref()
            .is_some_and(|h| h.split_whitespace().next() == Some(word))
    };
    if !is(first, "coarse") || !rest.iter().all(|s| is(s, "detail")) {
        return Err(Error::Parse(
            "pyramid sections must be one '# coarse' followed by '# detail' bands".into(),
        ));
    }
    if rest.len() != levels {
        return Err(Error::Shape(format!(
            "file holds {} detail bands but --levels is {levels}",
            rest.len()
        )));
    }
    let signal_scale = rest
        .first()
        .and_then(|s| header_scale(s.0.as_deref().unwrap_or("")))
        .map_or(scale, |s| s + 1);
    Ok(Pyramid {
        scale: signal_scale,
        coarse: first.1.clone(),
        details: rest.iter().map(|s| s.1.clone()).collect(),
    })
}

fn column(name: &str, label: String, values: &[f64]) -> Table {
    let mut t = Table::new(name, &["value"]);
    t.label = label;
    t.header_row = false;
    for &v in values {
        t.push(vec![v.into()]);
    }
    t
}

fn dwt(a: &DwtArgs, ctx: &mut Context) -> Result<Report> {
    let fp = make_filters(a.order)?;
    let text = ctx.read(&a.input)?;
    let mut r = Report::default();
    r.meta("order", a.order);
    r.meta("levels", a.levels);
    match a.direction {
        DirectionArg::Forward => {
            let values: Vec<f64> = parse_sections(&text)?
                .into_iter()
                .flat_map(|s| s.1)
                .collect();
            let p = forward(&CoeffVector::new(a.scale, values)?, &fp, a.levels)?;
            r.meta("direction", "forward");
            let coarse_scale = a.scale - a.levels as i32;
            r.tables.push(column(
                "coarse",
                format!("coarse scale={coarse_scale}"),
                &p.coarse,
            ));
            for (i, d) in p.details.iter().enumerate() {
                let s = a.scale - 1 - i as i32;
                r.tables.push(column(
                    &format!("detail_{s}"),
                    format!("detail scale={s}"),
                    d,
                ));
            }
        }
        DirectionArg::Inverse => {
            let p = read_pyramid(&text, a.levels, a.scale)?;
            let v = inverse(&p, &fp)?;
            r.meta("direction", "inverse");
            r.tables.push(column(
                "signal",
                format!("signal scale={}", p.scale),
                v.entries(),
            ));
        }
    }
    Ok(r)
}

fn coeffs(a: &CoeffsArgs, ctx: &mut Context) -> Result<Report> {
    let fp = make_filters(a.order)?;
    let kind = a.kind.kind();
    let t = ctx.tensor(&fp, kind, a.scale)?;
    let mut r = Report::default();
    r.meta("kind", kind.name());
    r.meta("order", a.order);
    r.meta("scale", a.scale);
    r.meta("support_radius", t.support_radius());
    if let Some(level) = a.verify_oracle {
        let oracle = QuadratureOracle::new(&fp, level, kind == TensorKind::Derivative)?;
        r.meta("oracle_level", level as usize);
        r.meta("oracle_max_deviation", oracle.max_deviation(&t)?);
        if kind == TensorKind::Derivative {
            r.meta(
                "derivative_scale_exponent",
                measured_derivative_exponent(&fp, level)?,
            );
        }
    }
    let points = kind.points() - 1;
    let mut columns: Vec<String> = (1..=points).map(|i| format!("n{i}")).collect();
    columns.push("value".into());
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new("entries", &cols);
    for (off, &v) in t.entries() {
        let mut row: Vec<Val> = off.iter().map(|&o| Val::from(o)).collect();
        row.push(v.into());
        table.push(row);
    }
    r.tables.push(table);
    Ok(r)
}

fn hamiltonian(a: &HamiltonianArgs, ctx: &mut Context) -> Result<Report> {
    let fp = make_filters(a.order)?;
    let cfg = LatticeConfig {
        order: a.order,
        scale: a.scale,
        modes: a.modes,
    };
    let p = ModelParams::new(a.mass2, a.lambda, a.gamma)?;
    let d = ctx.tensor(&fp, TensorKind::Derivative, a.scale)?;
    let g4 = ctx.tensor(&fp, TensorKind::Gamma(4), a.scale)?;
    let basis = FockBasis::new(a.modes, a.nmax)?;
    let h = build_phi4_hamiltonian(&cfg, &p, &d, &g4, &basis)?;
    if let Some(path) = &a.dump_matrix {
        write_coo(&h.matrix, path)?;
        ctx.files.outputs.push(path.clone());
    }
    let opts = LanczosOptions {
        seed: a.seed,
        ..LanczosOptions::default()
    };
    let pairs = lanczos_lowest(&h.matrix, a.eigs, &opts)?;
    let mut r = Report::default();
    r.meta("dim", basis.dim());
    r.meta("nnz", h.matrix.nnz());
    r.meta("gamma", p.gamma);
    let mut t = Table::new("eigenvalues", &["index", "eigenvalue", "residual"]);
    for (i, e) in pairs.iter().enumerate() {
        t.push(vec![i.into(), e.value.into(), e.residual.into()]);
    }
    r.tables.push(t);
    Ok(r)
}

fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut s = String::from("lambda,offdiag_frobenius,max_eigen_drift\n");
    for p in points {
        writeln!(
            s,
            "{},{},{}",
            float(p.lambda),
            float(p.offdiag_frobenius),
            float(p.max_eigen_drift)
        )
        .unwrap();
    }
    s
}

fn flow(a: &FlowArgs, ctx: &mut Context) -> Result<Report> {
    let m: CsrMatrix = read_coo(&a.input)?;
    ctx.files.inputs.push(a.input.clone());
    let generator = match (a.generator, a.partition) {
        (GeneratorArg::Diag, _) => Generator::WegnerDiagonal,
        (GeneratorArg::Block, Some(partition)) => Generator::WegnerBlock { partition },
        (GeneratorArg::Block, None) => {
            return Err(Error::InvalidParameter(
                "--generator block needs --partition".into(),
            ))
        }
    };
    let state = FlowState::new(m.to_dense(), generator)?;
    let control = StepControl {
        tol: a.tol,
        ..StepControl::default()
    };
    let out = match srg_flow(&state, a.lambda_end, &control) {
        Ok(out) => out,
        Err(Error::Stiffness { lambda, trajectory }) => {
            if let Some(path) = &a.log {
                ctx.write(path, &trajectory_csv(&trajectory))?;
            }
            return Err(Error::Stiffness { lambda, trajectory });
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = &a.log {
        ctx.write(path, &trajectory_csv(&out.trajectory))?;
    }
    if let Some(path) = &a.final_matrix {
        write_coo(&CsrMatrix::from_dense(&out.state.h), path)?;
        ctx.files.outputs.push(path.clone());
    }
    let last = out.trajectory.last().copied();
    let mut r = Report::default();
    r.meta("lambda", out.state.lambda);
    r.meta("steps", out.trajectory.len().saturating_sub(1));
    r.meta("offdiag_frobenius", generator.off_norm(&out.state.h));
    r.meta("max_eigen_drift", last.map_or(0.0, |p| p.max_eigen_drift));
    r.meta("sign_flipped", out.sign_flipped);
    let mut t = Table::new("diagonal", &["index", "value"]);
    for i in 0..out.state.h.nrows() {
        t.push(vec![i.into(), out.state.h[(i, i)].into()]);
    }
    r.tables.push(t);
    Ok(r)
}

fn diagnose(a: &DiagnoseArgs) -> Result<Report> {
    let fp = make_filters(a.order)?;
    let f = a.function.as_ref().map_or(
        TestFunction::Gauss {
            center: a.window as f64 / 2.0,
            width: 4.0,
        },
        |s| s.function,
    );
    let mut r = Report::default();
    r.meta("order", a.order);
    r.meta(
        "probe",
        match a.probe {
            ProbeArg::Partition => "partition",
            ProbeArg::Projection => "projection",
            ProbeArg::Commutator => "commutator",
        },
    );
    if a.probe != ProbeArg::Partition {
        r.meta(
            "function",
            a.function.as_ref().map_or("default", |s| s.text.as_str()),
        );
    }
    r.meta("window", a.window as usize);
    r.meta("refine", a.refine as usize);
    let mut t = Table::new("diagnostic", &["k", "value"]);
    for k in 0..=a.scale {
        let probe = KernelProbe::new(&fp, k as i32, k + a.refine, a.window)?;
        let v = match a.probe {
            ProbeArg::Partition => partition_check(&probe),
            ProbeArg::Projection => kernel_projection_error(&probe, &f)?,
            ProbeArg::Commutator => commutator_residual(&probe, &f, &f)?,
        };
        t.push(vec![(k as usize).into(), v.into()]);
    }
    r.tables.push(t);
    Ok(r)
}
