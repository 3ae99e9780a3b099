//! End-to-end benchmark driver: configuration, the slab-marching loop,
//! diagnostics (mass, area, conditioning), error norms and CSV output.

use std::path::PathBuf;
use std::sync::Arc;

use crate::cutgeom::{build_slab_sets, CutGeometry};
use crate::error::{Error, Result};
use crate::forms::{
    mass_of_trace, ProblemCoefficients, SlabAssembler, SourceTerms, Stabilization, TimeQuadrature,
    TimeRule,
};
use crate::levelset::{AnalyticInterface, LevelSetAdvector, LevelSetField, VelocityField};
use crate::mesh::{BackgroundMesh, DiagonalRule, Rect};
use crate::slabspace::{SlabSpace, TraceField};
use crate::solver::{newton_solve, NewtonConfig};
use crate::vec2::Vec2;

mod errors;
mod examples;
mod output;
mod rotating_drop_sources;

pub use errors::{compute_errors, convergence_rows, ErrorNorms, ErrorRow, Reference};
pub use examples::{example_config, ExampleId, RotatingDropExact};
pub use output::write_error_table;

/// Where the per-slab interface geometry comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelSetSource {
    /// Transport the nodal level set with the stabilized scheme.
    Advected,
    /// Rebuild the field from the closed-form interface motion.
    Analytic,
}

/// How the prescribed end-of-slab mass is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassPolicy {
    /// Conserve the mass of the discrete initial data.
    InitialDiscrete,
    /// Prescribe the exact (time-dependent) mass of a manufactured solution.
    PrescribedExact,
}

/// Scalar initial-data field.
pub type InitialField = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

/// Prescribed total mass evaluated on an endpoint geometry.
pub type MassFunctional = Arc<dyn Fn(&CutGeometry) -> f64 + Send + Sync>;

/// Initial interface circle plus its closed-form motion when available.
#[derive(Clone)]
pub struct InterfaceSpec {
    pub center: Vec2,
    pub radius: f64,
    pub motion: Option<Arc<AnalyticInterface>>,
}

/// File output switches. Everything is off unless a directory is set.
#[derive(Clone, Debug, Default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub export_interface: bool,
    pub export_fields: bool,
    pub export_levelset: bool,
    pub export_matrix: bool,
    /// Write every n-th frame (0 disables frames).
    pub frame_stride: usize,
}

/// Full description of one simulation run.
#[derive(Clone)]
pub struct SimulationConfig {
    pub example: Option<ExampleId>,
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub diagonal: DiagonalRule,
    /// k = step_ratio · h.
    pub step_ratio: f64,
    pub t_end: f64,
    pub rule: TimeRule,
    pub coefficients: ProblemCoefficients,
    pub conserve_mass: bool,
    pub mass_policy: MassPolicy,
    pub levelset_source: LevelSetSource,
    pub tau_bulk: f64,
    pub tau_surf: f64,
    pub velocity: VelocityField,
    pub initial_bulk: InitialField,
    pub initial_surface: InitialField,
    pub interface: InterfaceSpec,
    pub sources: Option<Arc<dyn SourceTerms>>,
    /// Exact mass functional for `MassPolicy::PrescribedExact`, evaluated on
    /// the endpoint geometry.
    pub exact_mass: Option<MassFunctional>,
    pub newton: NewtonConfig,
    /// Slab endpoints at which solution snapshots are recorded.
    pub eval_times: Vec<f64>,
    pub estimate_condition: bool,
    pub output: OutputConfig,
}

impl SimulationConfig {
    pub fn mesh_size(&self) -> f64 {
        (self.domain.width() / self.nx as f64).max(self.domain.height() / self.ny as f64)
    }

    pub fn time_step(&self) -> f64 {
        self.step_ratio * self.mesh_size()
    }

    fn validate(&self) -> Result<()> {
        if self.t_end <= 0.0 || self.step_ratio <= 0.0 {
            return Err(Error::Config("t_end and the step ratio must be positive".into()));
        }
        if self.tau_bulk < 0.0 || self.tau_surf < 0.0 {
            return Err(Error::Config("stabilization constants must be nonnegative".into()));
        }
        if self.mass_policy == MassPolicy::PrescribedExact && self.exact_mass.is_none() {
            return Err(Error::Config("prescribed-mass policy needs an exact mass functional".into()));
        }
        if self.levelset_source == LevelSetSource::Analytic && self.interface.motion.is_none() {
            return Err(Error::Config(
                "analytic level set requested but the interface motion has no closed form".into(),
            ));
        }
        Ok(())
    }
}

/// Solution trace of one slab endpoint, for error evaluation.
#[derive(Clone)]
pub struct SolutionSnapshot {
    pub time: f64,
    pub h: f64,
    pub k: f64,
    pub mesh: Arc<BackgroundMesh>,
    pub fine_mesh: Arc<BackgroundMesh>,
    pub trace: TraceField,
    pub levelset: LevelSetField,
}

/// Per-slab solver record for the JSONL log and assertions.
#[derive(Clone, Debug)]
pub struct SlabRecord {
    pub slab: usize,
    pub t_end: f64,
    pub newton_iterations: usize,
    pub update_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub linear_residuals: Vec<f64>,
    pub condition: Option<f64>,
    pub grad_norm_range: Option<(f64, f64)>,
    pub interface_moved_fast: bool,
}

/// Everything a finished run exposes.
pub struct RunResult {
    pub h: f64,
    pub k: f64,
    pub n_slabs: usize,
    pub snapshots: Vec<SolutionSnapshot>,
    /// (t, (mass − target)/target) at slab endpoints, including t = 0.
    pub mass_series: Vec<(f64, f64)>,
    /// (t, (area − area₀)/area₀) of the region enclosed by the interface.
    pub area_series: Vec<(f64, f64)>,
    pub condition_series: Vec<(f64, f64)>,
    pub slab_records: Vec<SlabRecord>,
}

/// Marches the coupled solver over all slabs of one configuration.
pub fn run_simulation(config: &SimulationConfig) -> Result<RunResult> {
    config.validate()?;
    let mesh = Arc::new(BackgroundMesh::uniform(
        config.domain,
        config.nx,
        config.ny,
        config.diagonal,
    )?);
    let fine = Arc::new(mesh.refine_uniform()?);
    let h = config.mesh_size();
    let k = config.time_step();
    let n_slabs_f = config.t_end / k;
    let n_slabs = n_slabs_f.round() as usize;
    if n_slabs == 0 || (n_slabs_f - n_slabs as f64).abs() > 1e-9 * n_slabs_f.max(1.0) {
        return Err(Error::Config(format!(
            "t_end = {} is not an integer number of steps k = {k}",
            config.t_end
        )));
    }
    for &te in &config.eval_times {
        let ratio = te / k;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || te <= 0.0 || te > config.t_end
        {
            return Err(Error::Config(format!(
                "evaluation time {te} does not land on a slab endpoint"
            )));
        }
    }

    let motion = config.interface.motion.clone();
    let mut field0 = match config.levelset_source {
        LevelSetSource::Analytic => {
            motion.as_ref().expect("validated").field(&fine, 0.0)?
        }
        LevelSetSource::Advected => LevelSetField::circle(
            fine.clone(),
            config.interface.center,
            config.interface.radius,
            0.0,
        )?,
    };
    // quadrature layout in time: Simpson needs the midpoint geometry, so the
    // level set advances with half steps
    let halves = match config.rule {
        TimeRule::Trapezoid => 1,
        TimeRule::Simpson => 2,
    };
    let mut advector = LevelSetAdvector::new(fine.clone(), config.velocity.clone());

    let geom0 = Arc::new(CutGeometry::build(&field0, &mesh)?);
    let mut trace = TraceField::from_initial(
        &mesh,
        geom0.clone(),
        |p| (config.initial_bulk)(p),
        |p| (config.initial_surface)(p),
        config.coefficients.include_bulk,
    );

    let initial_mass = mass_of_trace(&trace, &mesh, config.coefficients.surf_mass_weight);
    let mass_reference = |geom_end: &CutGeometry| -> f64 {
        match config.mass_policy {
            MassPolicy::InitialDiscrete => initial_mass,
            MassPolicy::PrescribedExact => {
                (config.exact_mass.as_ref().expect("validated"))(geom_end)
            }
        }
    };
    let area0 = geom0.enclosed_area()?;

    let mut out = output::OutputWriter::open(&config.output)?;
    if config.output.frame_stride > 0 {
        out.write_frame(0, &mesh, &trace, &field0, &config.output)?;
    }

    let reference0 = mass_reference(&geom0);
    let mut result = RunResult {
        h,
        k,
        n_slabs,
        snapshots: Vec::new(),
        mass_series: vec![(0.0, (initial_mass - reference0) / reference0.abs().max(1e-300))],
        area_series: vec![(0.0, 0.0)],
        condition_series: Vec::new(),
        slab_records: Vec::new(),
    };

    let mut geom_start = geom0;
    let mut warned_fast_interface = false;
    for slab in 1..=n_slabs {
        let t0 = (slab - 1) as f64 * k;
        let t1 = slab as f64 * k;
        let interval = (t0, t1);
        let quad = crate::forms::time_quadrature(config.rule, interval);

        // level-set states and geometries at the quadrature times
        let mut fields: Vec<LevelSetField> = vec![field0.clone()];
        match config.levelset_source {
            LevelSetSource::Advected => {
                let sub = k / halves as f64;
                let mut cur = field0.clone();
                for _ in 0..halves {
                    cur = advector.step(&cur, sub)?;
                    fields.push(cur.clone());
                }
            }
            LevelSetSource::Analytic => {
                let m = motion.as_ref().expect("validated");
                for &tq in quad.times.iter().skip(1) {
                    fields.push(m.field(&fine, tq)?);
                }
            }
        }
        // trapezoid uses only the endpoint states even though the advected
        // field stepped through the same instants
        let field_at = |tq: f64| -> &LevelSetField {
            fields
                .iter()
                .find(|f| (f.time - tq).abs() <= 1e-9 * k)
                .expect("level-set state at quadrature time")
        };
        let mut geoms: Vec<Arc<CutGeometry>> = vec![geom_start.clone()];
        for &tq in quad.times.iter().skip(1) {
            geoms.push(Arc::new(CutGeometry::build(field_at(tq), &mesh)?));
        }

        let moved_fast = interface_speed_exceeds_cell(&geoms[0], &config.velocity, t0, &quad, &fine);
        if moved_fast && !warned_fast_interface {
            warned_fast_interface = true;
            eprintln!(
                "warning: interface displacement per quadrature interval exceeds a refined \
                 cell at slab {slab}; slab active sets may undercover the swept region"
            );
        }

        let geom_refs: Vec<&CutGeometry> = geoms.iter().map(|g| g.as_ref()).collect();
        let sets = build_slab_sets(&geom_refs, &mesh).map_err(|e| Error::at_slab(slab, e))?;
        let space = SlabSpace::build(
            &sets,
            &mesh,
            interval,
            config.coefficients.include_bulk,
            config.conserve_mass,
        )?;

        let target = config.conserve_mass.then(|| mass_reference(geoms.last().unwrap()));
        let assembler = SlabAssembler::new(
            &mesh,
            &space,
            &sets,
            &geoms,
            config.rule,
            &config.velocity,
            &config.coefficients,
            &trace,
            config.sources.as_deref(),
            Stabilization { tau_bulk: config.tau_bulk, tau_surf: config.tau_surf, h },
            target,
        )?;

        let outcome = newton_solve(
            |u| assembler.residual(u),
            |u| assembler.jacobian(u),
            assembler.initial_guess(),
            &config.newton,
        )
        .map_err(|e| Error::at_slab(slab, e))?;

        let condition = if config.estimate_condition {
            outcome.factorization.as_ref().map(|lu| lu.condition_estimate())
        } else {
            None
        };
        if let Some(kappa) = condition {
            result.condition_series.push((t1, kappa));
        }

        let mass = assembler.mass_at_end(&outcome.state);
        let end_geom = geoms.last().unwrap().clone();
        trace = TraceField::from_slab(&space, &outcome.state, end_geom.clone());

        let reference = mass_reference(&end_geom);
        result
            .mass_series
            .push((t1, (mass - reference) / reference.abs().max(1e-300)));
        let area = end_geom.enclosed_area()?;
        result.area_series.push((t1, (area - area0) / area0));

        let end_field = field_at(t1).clone();
        let record = SlabRecord {
            slab,
            t_end: t1,
            newton_iterations: outcome.iterations,
            update_norms: outcome.update_norms.clone(),
            residual_norms: outcome.residual_norms.clone(),
            linear_residuals: outcome.linear_residuals.clone(),
            condition,
            grad_norm_range: if config.levelset_source == LevelSetSource::Advected {
                end_field.gradient_norm_range_on_cut()
            } else {
                None
            },
            interface_moved_fast: moved_fast,
        };
        out.write_slab_record(&record)?;
        if config.output.export_matrix {
            if let Some(lu) = outcome.factorization.as_ref() {
                out.write_matrix(slab, lu)?;
            }
        }
        if config.output.frame_stride > 0 && slab % config.output.frame_stride == 0 {
            out.write_frame(slab, &mesh, &trace, &end_field, &config.output)?;
        }
        result.slab_records.push(record);

        if config
            .eval_times
            .iter()
            .any(|&te| (te - t1).abs() <= 1e-9 * te.max(k))
        {
            result.snapshots.push(SolutionSnapshot {
                time: t1,
                h,
                k,
                mesh: mesh.clone(),
                fine_mesh: fine.clone(),
                trace: trace.clone(),
                levelset: end_field.clone(),
            });
        }

        field0 = end_field;
        geom_start = end_geom;
    }

    out.write_mass_series(&result.mass_series)?;
    out.write_area_series(&result.area_series)?;
    out.write_condition_series(&result.condition_series)?;
    Ok(result)
}

fn interface_speed_exceeds_cell(
    geom: &CutGeometry,
    velocity: &VelocityField,
    t: f64,
    quad: &TimeQuadrature,
    fine: &BackgroundMesh,
) -> bool {
    let gap = quad
        .times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    let mut speed = 0.0f64;
    for seg in geom.segments.iter().step_by(7) {
        let mid = (seg.a + seg.b) * 0.5;
        speed = speed.max(velocity.at(t, mid).norm());
    }
    speed * gap > fine.h * 1.5
}
