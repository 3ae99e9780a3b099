//! Command-line front end for the bulk-surface benchmark suite.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, ValueEnum};
use serde::Deserialize;

use bulksurf::forms::{CouplingKind, TimeRule};
use bulksurf::harness::{
    compute_errors, convergence_rows, example_config, run_simulation, write_error_table,
    ExampleId, LevelSetSource, Reference, RotatingDropExact, SimulationConfig,
};
use bulksurf::mesh::{BackgroundMesh, DiagonalRule, Rect};
use bulksurf::{Error, Result};

#[derive(Parser)]
#[command(
    name = "bulksurf",
    about = "Space-time cut finite element solver for coupled bulk-surface surfactant transport"
)]
enum Cli {
    /// Run one benchmark simulation and write its diagnostic series.
    Run(RunArgs),
    /// Run a mesh-refinement study and emit the convergence table.
    Converge(ConvergeArgs),
    /// Dump the background mesh as a plain-text vertex/triangle list.
    DumpMesh(DumpMeshArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum QuadratureArg {
    Trapezoid,
    Simpson,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CouplingArg {
    Langmuir,
    Henry,
    Frumkin,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SwitchArg {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LevelSetArg {
    Advected,
    Analytic,
}

/// Options shared by `run` and the per-level runs of `converge`. Every flag
/// can also come from a JSON config file; explicit flags win.
#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommonArgs {
    /// Benchmark number (1-4).
    #[arg(long)]
    example: Option<u32>,
    /// Cells along x.
    #[arg(long)]
    nx: Option<usize>,
    /// Cells along y.
    #[arg(long)]
    ny: Option<usize>,
    /// Time step ratio C in k = C h.
    #[arg(long = "k-ratio")]
    #[serde(rename = "k_ratio", default)]
    k_ratio: Option<f64>,
    /// Final time.
    #[arg(long = "t-end")]
    #[serde(rename = "t_end", default)]
    t_end: Option<f64>,
    /// Time quadrature rule.
    #[arg(long = "time-quadrature", value_enum)]
    #[serde(rename = "time_quadrature", default)]
    time_quadrature: Option<QuadratureArg>,
    /// Coupling model variant (keeps the example's rate constants).
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    /// Frumkin exponent used when --coupling frumkin is selected.
    #[arg(long = "frumkin-a")]
    #[serde(rename = "frumkin_a", default)]
    frumkin_a: Option<f64>,
    /// Enforce the total surfactant mass with a Lagrange multiplier.
    #[arg(long = "conserve-mass", value_enum)]
    #[serde(rename = "conserve_mass", default)]
    conserve_mass: Option<SwitchArg>,
    /// Interface geometry source.
    #[arg(long, value_enum)]
    levelset: Option<LevelSetArg>,
    /// Bulk ghost-penalty constant.
    #[arg(long = "tau-b")]
    #[serde(rename = "tau_b", default)]
    tau_b: Option<f64>,
    /// Surface ghost-penalty constant.
    #[arg(long = "tau-s")]
    #[serde(rename = "tau_s", default)]
    tau_s: Option<f64>,
    /// Output directory for CSV series and the slab log.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write interface_XXXX.csv frames.
    #[arg(long = "export-interface", default_value_t = false)]
    #[serde(rename = "export_interface", default)]
    export_interface: bool,
    /// Write fields_XXXX.csv frames.
    #[arg(long = "export-fields", default_value_t = false)]
    #[serde(rename = "export_fields", default)]
    export_fields: bool,
    /// Write levelset_XXXX.csv frames.
    #[arg(long = "export-levelset", default_value_t = false)]
    #[serde(rename = "export_levelset", default)]
    export_levelset: bool,
    /// Write matrix_XXXX.txt coordinate dumps of the slab Jacobians.
    #[arg(long = "export-matrix", default_value_t = false)]
    #[serde(rename = "export_matrix", default)]
    export_matrix: bool,
    /// Keep every n-th frame (0 disables frame output).
    #[arg(long = "frame-stride")]
    #[serde(rename = "frame_stride", default)]
    frame_stride: Option<usize>,
    /// Estimate the condition number of every slab system.
    #[arg(long = "estimate-condition", default_value_t = false)]
    #[serde(rename = "estimate_condition", default)]
    estimate_condition: bool,
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of refinement levels (each halves h).
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Coarsest-level cell count along x (defaults to the example's nx
    /// divided by 2^(levels-1), at least 5).
    #[arg(long = "base-nx")]
    base_nx: Option<usize>,
    /// Evaluation time of the error norms.
    #[arg(long = "t-eval", default_value_t = 0.5)]
    t_eval: f64,
}

#[derive(Args, Debug)]
struct DumpMeshArgs {
    #[arg(long, default_value_t = 10)]
    nx: usize,
    #[arg(long, default_value_t = 10)]
    ny: usize,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, default_value_t = 0.0)]
    y0: f64,
    #[arg(long, default_value_t = 1.0)]
    y1: f64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn merge_file(&mut self) -> Result<()> {
        let Some(path) = &self.config else {
            return Ok(());
        };
        let text = fs::read_to_string(path)?;
        let file: CommonArgs = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
        self.example = self.example.or(file.example);
        self.nx = self.nx.or(file.nx);
        self.ny = self.ny.or(file.ny);
        self.k_ratio = self.k_ratio.or(file.k_ratio);
        self.t_end = self.t_end.or(file.t_end);
        self.time_quadrature = self.time_quadrature.or(file.time_quadrature);
        self.coupling = self.coupling.or(file.coupling);
        self.frumkin_a = self.frumkin_a.or(file.frumkin_a);
        self.conserve_mass = self.conserve_mass.or(file.conserve_mass);
        self.levelset = self.levelset.or(file.levelset);
        self.tau_b = self.tau_b.or(file.tau_b);
        self.tau_s = self.tau_s.or(file.tau_s);
        self.out = self.out.take().or(file.out);
        self.export_interface |= file.export_interface;
        self.export_fields |= file.export_fields;
        self.export_levelset |= file.export_levelset;
        self.export_matrix |= file.export_matrix;
        self.frame_stride = self.frame_stride.or(file.frame_stride);
        self.estimate_condition |= file.estimate_condition;
        Ok(())
    }

    fn build_config(&self) -> Result<SimulationConfig> {
        let example = ExampleId::from_number(self.example.unwrap_or(1))
            .ok_or_else(|| Error::Config("example must be 1, 2, 3 or 4".into()))?;
        let mut cfg = example_config(example);
        if let Some(nx) = self.nx {
            cfg.nx = nx;
            cfg.ny = self.ny.unwrap_or(nx);
        } else if let Some(ny) = self.ny {
            cfg.ny = ny;
        }
        if let Some(r) = self.k_ratio {
            cfg.step_ratio = r;
        }
        if let Some(t) = self.t_end {
            cfg.t_end = t;
        }
        if let Some(q) = self.time_quadrature {
            cfg.rule = match q {
                QuadratureArg::Trapezoid => TimeRule::Trapezoid,
                QuadratureArg::Simpson => TimeRule::Simpson,
            };
        }
        if let Some(c) = self.coupling {
            let model = &mut cfg.coefficients.coupling;
            match c {
                CouplingArg::Langmuir => model.kind = CouplingKind::Langmuir,
                CouplingArg::Henry => {
                    model.kind = CouplingKind::Henry;
                    model.bilinear_rate = 0.0;
                }
                CouplingArg::Frumkin => {
                    model.kind = CouplingKind::Frumkin;
                    model.exponent = self.frumkin_a.unwrap_or(1.0);
                }
            }
        }
        if let Some(s) = self.conserve_mass {
            cfg.conserve_mass = matches!(s, SwitchArg::On);
        }
        if let Some(l) = self.levelset {
            cfg.levelset_source = match l {
                LevelSetArg::Advected => LevelSetSource::Advected,
                LevelSetArg::Analytic => LevelSetSource::Analytic,
            };
        }
        if let Some(t) = self.tau_b {
            cfg.tau_bulk = t;
        }
        if let Some(t) = self.tau_s {
            cfg.tau_surf = t;
        }
        cfg.estimate_condition |= self.estimate_condition;
        cfg.output.dir = self.out.clone();
        cfg.output.export_interface = self.export_interface;
        cfg.output.export_fields = self.export_fields;
        cfg.output.export_levelset = self.export_levelset;
        cfg.output.export_matrix = self.export_matrix;
        cfg.output.frame_stride = self.frame_stride.unwrap_or(0);
        Ok(cfg)
    }
}

fn cmd_run(mut args: RunArgs) -> Result<()> {
    args.common.merge_file()?;
    let cfg = args.common.build_config()?;
    let run = run_simulation(&cfg)?;
    let worst_mass = run.mass_series.iter().map(|(_, e)| e.abs()).fold(0.0f64, f64::max);
    let final_area = run.area_series.last().map_or(0.0, |(_, a)| *a);
    println!("h = {:.6}, k = {:.6}, slabs = {}", run.h, run.k, run.n_slabs);
    println!("max |relative mass error| = {worst_mass:.3e}");
    println!("relative area change at t_end = {final_area:.3e}");
    let kappa = run.condition_series.iter().map(|(_, k)| *k).fold(
        None,
        |acc: Option<(f64, f64)>, k| Some(acc.map_or((k, k), |(lo, hi)| (lo.min(k), hi.max(k)))),
    );
    if let Some((min, max)) = kappa {
        println!("condition estimate range = [{min:.3e}, {max:.3e}]");
    }
    let iters: usize = run.slab_records.iter().map(|r| r.newton_iterations).sum();
    println!(
        "Newton iterations: total {iters}, max per slab {}",
        run.slab_records.iter().map(|r| r.newton_iterations).max().unwrap_or(0)
    );
    Ok(())
}

fn cmd_converge(mut args: ConvergeArgs) -> Result<()> {
    args.common.merge_file()?;
    let template = args.common.build_config()?;
    let example = ExampleId::from_number(args.common.example.unwrap_or(1))
        .ok_or_else(|| Error::Config("example must be 1, 2, 3 or 4".into()))?;
    if args.levels < 2 {
        return Err(Error::Config("need at least two levels".into()));
    }
    let base_nx = args.base_nx.unwrap_or_else(|| (template.nx >> (args.levels - 1)).max(5));
    let aspect = template.ny as f64 / template.nx as f64;

    let mut snaps = Vec::new();
    let mut meta = Vec::new();
    for level in 0..args.levels {
        let mut cfg = template.clone();
        cfg.nx = base_nx << level;
        cfg.ny = ((cfg.nx as f64 * aspect).round() as usize).max(1);
        cfg.t_end = args.t_eval;
        cfg.eval_times = vec![args.t_eval];
        cfg.output.dir = None;
        let run = run_simulation(&cfg)?;
        eprintln!("level {level}: nx = {}, h = {:.5}, k = {:.5}", cfg.nx, run.h, run.k);
        meta.push((run.h, run.k));
        snaps.push(
            run.snapshots
                .into_iter()
                .next()
                .ok_or_else(|| Error::Config("no snapshot at the evaluation time".into()))?,
        );
    }

    let mut levels = Vec::new();
    if example == ExampleId::RotatingDrop {
        for (snap, &(h, k)) in snaps.iter().zip(&meta) {
            let norms = compute_errors(
                snap,
                &Reference::Exact {
                    bulk: &RotatingDropExact::bulk,
                    surface: &RotatingDropExact::surface,
                },
            )?;
            levels.push((h, k, norms));
        }
    } else {
        for pair in snaps.windows(2) {
            let fine = &pair[1];
            let norms = compute_errors(fine, &Reference::Coarser(&pair[0]))?;
            levels.push((fine.h, fine.k, norms));
        }
    }
    let rows = convergence_rows(&levels);

    let mut stdout = std::io::stdout().lock();
    write_error_table(&mut stdout, &rows)?;
    if let Some(dir) = &args.common.out {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("errors.csv"))?;
        write_error_table(&mut f, &rows)?;
    }
    Ok(())
}

fn cmd_dump_mesh(args: DumpMeshArgs) -> Result<()> {
    let mesh = BackgroundMesh::uniform(
        Rect::new(args.x0, args.x1, args.y0, args.y1),
        args.nx,
        args.ny,
        DiagonalRule::Uniform,
    )?;
    match &args.out {
        Some(path) => {
            let mut f = fs::File::create(path)?;
            mesh.dump(&mut f)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            mesh.dump(&mut out)?;
        }
    }
    Ok(())
}

fn main() {
    let result = match Cli::parse() {
        Cli::Run(args) => cmd_run(args),
        Cli::Converge(args) => cmd_converge(args),
        Cli::DumpMesh(args) => cmd_dump_mesh(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
