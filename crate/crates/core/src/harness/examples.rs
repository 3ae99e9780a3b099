//! Benchmark problem definitions.
//!
//! Four problems exercise the solver end to end: a rotating drop with a
//! manufactured exact solution, an insoluble surfactant sheared through a
//! long channel, a soluble surfactant in the same kind of shear flow
//! (non-dimensional form), and a vortex-stretched drop used for the
//! conditioning study.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::cutgeom::CutGeometry;
use crate::forms::{mass_functional, CouplingModel, ProblemCoefficients, SourceTerms, TimeRule};
use crate::levelset::{AnalyticInterface, VelocityField};
use crate::mesh::Rect;
use crate::vec2::Vec2;

use super::rotating_drop_sources;
use super::{InterfaceSpec, LevelSetSource, MassPolicy, OutputConfig, SimulationConfig};

/// The four built-in benchmark problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleId {
    /// Rigidly rotating drop with a manufactured exact solution (Langmuir
    /// coupling, dimensional form).
    RotatingDrop,
    /// Insoluble surfactant on a drop sheared through a channel.
    InsolubleShear,
    /// Soluble surfactant in a linear shear flow, non-dimensional form.
    SolubleShear,
    /// Drop stretched by a vortex, non-dimensional form; conditioning study.
    Vortex,
}

impl ExampleId {
    pub fn from_number(n: u32) -> Option<ExampleId> {
        match n {
            1 => Some(ExampleId::RotatingDrop),
            2 => Some(ExampleId::InsolubleShear),
            3 => Some(ExampleId::SolubleShear),
            4 => Some(ExampleId::Vortex),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            ExampleId::RotatingDrop => 1,
            ExampleId::InsolubleShear => 2,
            ExampleId::SolubleShear => 3,
            ExampleId::Vortex => 4,
        }
    }
}

/// Exact solution of the rotating-drop benchmark, with the source terms the
/// discrete equations need and the time-dependent total mass.
pub struct RotatingDropExact;

impl RotatingDropExact {
    pub const RADIUS: f64 = 0.17;

    pub fn center(t: f64) -> Vec2 {
        Vec2::new(0.5 + 0.28 * (PI * t).sin(), 0.5 - 0.28 * (PI * t).cos())
    }

    pub fn bulk(t: f64, p: Vec2) -> f64 {
        0.5 + 0.4 * (PI * p.x).cos() * (PI * p.y).cos() * (2.0 * PI * t).cos()
    }

    pub fn surface(t: f64, p: Vec2) -> f64 {
        let d = p - Self::center(t);
        let dist = d.norm();
        let (n1, n2) = (d.x / dist, d.y / dist);
        let c2t = (2.0 * PI * t).cos();
        let ub = Self::bulk(t, p);
        let grad_part = (PI / 250.0)
            * c2t
            * ((PI * p.x).sin() * (PI * p.y).cos() * n1 + (PI * p.x).cos() * (PI * p.y).sin() * n2);
        (ub + grad_part) / (1.5 + 0.4 * (PI * p.x).cos() * (PI * p.y).cos() * c2t)
    }

    /// Exact total mass ∫ u_B + ∫ u_S evaluated by quadrature on the
    /// discrete geometry at its own time.
    pub fn mass_on(geom: &CutGeometry) -> f64 {
        let t = geom.time;
        mass_functional(geom, |p| Self::bulk(t, p), |p| Self::surface(t, p), 1.0)
    }

    pub fn velocity() -> VelocityField {
        VelocityField::new(
            |_, p| Vec2::new(PI * (0.5 - p.y), PI * (p.x - 0.5)),
            |_, _| [[0.0, -PI], [PI, 0.0]],
            true,
        )
    }

    pub fn motion() -> AnalyticInterface {
        AnalyticInterface::MovingCircle { radius: Self::RADIUS, center: Box::new(Self::center) }
    }
}

impl SourceTerms for RotatingDropExact {
    fn bulk(&self, t: f64, p: Vec2) -> f64 {
        rotating_drop_sources::bulk_source(t, p.x, p.y)
    }

    fn surface(&self, t: f64, p: Vec2) -> f64 {
        let d = p - Self::center(t);
        rotating_drop_sources::surface_source(t, d.y.atan2(d.x))
    }
}

fn rotating_drop_config() -> SimulationConfig {
    SimulationConfig {
        example: Some(ExampleId::RotatingDrop),
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        nx: 40,
        ny: 40,
        diagonal: Default::default(),
        step_ratio: 0.5,
        t_end: 2.0,
        rule: TimeRule::Simpson,
        coefficients: ProblemCoefficients::dimensional(
            CouplingModel::langmuir_rates(1.0, 1.0, 1.0),
            0.01,
            1.0,
        )
        .expect("valid coupling"),
        conserve_mass: true,
        mass_policy: MassPolicy::PrescribedExact,
        levelset_source: LevelSetSource::Advected,
        tau_bulk: 1e-2,
        tau_surf: 1e-2,
        velocity: RotatingDropExact::velocity(),
        initial_bulk: Arc::new(|p| RotatingDropExact::bulk(0.0, p)),
        initial_surface: Arc::new(|p| RotatingDropExact::surface(0.0, p)),
        interface: InterfaceSpec {
            center: Vec2::new(0.5, 0.22),
            radius: RotatingDropExact::RADIUS,
            motion: Some(Arc::new(RotatingDropExact::motion())),
        },
        sources: Some(Arc::new(RotatingDropExact)),
        exact_mass: Some(Arc::new(RotatingDropExact::mass_on)),
        newton: Default::default(),
        eval_times: Vec::new(),
        estimate_condition: false,
        output: OutputConfig::default(),
    }
}

fn insoluble_shear_config() -> SimulationConfig {
    let speed = |y: f64| (y + 2.0) * (y + 2.0) / 3.0;
    SimulationConfig {
        example: Some(ExampleId::InsolubleShear),
        domain: Rect::new(-2.0, 6.4, -2.0, 2.0),
        nx: 147,
        ny: 70,
        diagonal: Default::default(),
        step_ratio: 1.0 / 8.0,
        t_end: 2.0,
        rule: TimeRule::Simpson,
        coefficients: ProblemCoefficients::insoluble(1.0),
        conserve_mass: true,
        mass_policy: MassPolicy::InitialDiscrete,
        levelset_source: LevelSetSource::Advected,
        tau_bulk: 1e-2,
        tau_surf: 1e-2,
        velocity: VelocityField::new(
            move |_, p| Vec2::new(speed(p.y), 0.0),
            |_, p| [[0.0, 2.0 * (p.y + 2.0) / 3.0], [0.0, 0.0]],
            true,
        ),
        initial_bulk: Arc::new(|_| 0.0),
        initial_surface: Arc::new(|p| p.y + 2.0),
        interface: InterfaceSpec {
            center: Vec2::ZERO,
            radius: 1.0,
            motion: Some(Arc::new(AnalyticInterface::ShearedCircle {
                center0: Vec2::ZERO,
                radius: 1.0,
                speed: Box::new(speed),
                speed_dy: Box::new(|y| 2.0 * (y + 2.0) / 3.0),
                speed_dyy: Box::new(|_| 2.0 / 3.0),
                slope_bound: 2.0,
            })),
        },
        sources: None,
        exact_mass: None,
        newton: Default::default(),
        eval_times: Vec::new(),
        estimate_condition: false,
        output: OutputConfig::default(),
    }
}

fn soluble_shear_config() -> SimulationConfig {
    SimulationConfig {
        example: Some(ExampleId::SolubleShear),
        domain: Rect::new(-1.0, 1.0, 0.0, 2.0),
        nx: 50,
        ny: 50,
        diagonal: Default::default(),
        step_ratio: 0.625,
        t_end: 0.5,
        rule: TimeRule::Simpson,
        coefficients: ProblemCoefficients::nondimensional(1.0, 10.0, 0.2, 1.0, 1.0)
            .expect("valid groups"),
        conserve_mass: true,
        mass_policy: MassPolicy::InitialDiscrete,
        levelset_source: LevelSetSource::Advected,
        tau_bulk: 1e-2,
        tau_surf: 1e-2,
        velocity: VelocityField::new(
            |_, p| Vec2::new(p.y - 1.0, 0.0),
            |_, _| [[0.0, 1.0], [0.0, 0.0]],
            true,
        ),
        initial_bulk: Arc::new(|_| 2.0 / 3.0),
        initial_surface: Arc::new(|_| 0.4),
        interface: InterfaceSpec {
            center: Vec2::new(0.0, 1.0),
            radius: 0.5,
            motion: Some(Arc::new(AnalyticInterface::ShearedCircle {
                center0: Vec2::new(0.0, 1.0),
                radius: 0.5,
                speed: Box::new(|y| y - 1.0),
                speed_dy: Box::new(|_| 1.0),
                speed_dyy: Box::new(|_| 0.0),
                slope_bound: 1.0,
            })),
        },
        sources: None,
        exact_mass: None,
        newton: Default::default(),
        eval_times: Vec::new(),
        estimate_condition: false,
        output: OutputConfig::default(),
    }
}

fn vortex_config() -> SimulationConfig {
    let r0 = 0.3;
    let center = Vec2::new(0.1, 0.0);
    SimulationConfig {
        example: Some(ExampleId::Vortex),
        domain: Rect::new(-1.0, 1.0, -1.0, 1.0),
        nx: 64,
        ny: 64,
        diagonal: Default::default(),
        step_ratio: 1.0 / 8.0,
        t_end: 2.0,
        rule: TimeRule::Simpson,
        coefficients: ProblemCoefficients::nondimensional(100.0, 100.0, 1.0, 1.0, 1.0)
            .expect("valid groups"),
        conserve_mass: true,
        mass_policy: MassPolicy::InitialDiscrete,
        levelset_source: LevelSetSource::Advected,
        tau_bulk: 1e-2,
        tau_surf: 1e-2,
        velocity: VelocityField::new(
            |_, p| {
                Vec2::new(
                    -0.5 * (1.0 + (PI * p.x).cos()) * (PI * p.y).sin(),
                    0.5 * (1.0 + (PI * p.y).cos()) * (PI * p.x).sin(),
                )
            },
            |_, p| {
                [
                    [
                        0.5 * PI * (PI * p.x).sin() * (PI * p.y).sin(),
                        -0.5 * PI * (1.0 + (PI * p.x).cos()) * (PI * p.y).cos(),
                    ],
                    [
                        0.5 * PI * (1.0 + (PI * p.y).cos()) * (PI * p.x).cos(),
                        -0.5 * PI * (PI * p.y).sin() * (PI * p.x).sin(),
                    ],
                ]
            },
            true,
        ),
        initial_bulk: Arc::new(move |p| {
            let r = (p - center).norm();
            let profile = 0.5 * (1.0 - p.x * p.x) * (1.0 - p.x * p.x);
            if r > 1.5 * r0 {
                profile
            } else if r >= r0 {
                let w = 0.5 * (1.0 - ((r - r0) * PI / (0.5 * r0)).cos());
                profile * w
            } else {
                0.0
            }
        }),
        initial_surface: Arc::new(|_| 0.0),
        interface: InterfaceSpec { center, radius: r0, motion: None },
        sources: None,
        exact_mass: None,
        newton: Default::default(),
        eval_times: Vec::new(),
        estimate_condition: true,
        output: OutputConfig::default(),
    }
}

/// Baseline configuration of one benchmark, ready for field overrides.
pub fn example_config(id: ExampleId) -> SimulationConfig {
    match id {
        ExampleId::RotatingDrop => rotating_drop_config(),
        ExampleId::InsolubleShear => insoluble_shear_config(),
        ExampleId::SolubleShear => soluble_shear_config(),
        ExampleId::Vortex => vortex_config(),
    }
}
