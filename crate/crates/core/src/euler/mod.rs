//! Rough 2D Euler equations in vorticity form on the torus,
//! `∂_t w + u·∇w = σ_j·∇w Ż^j`, `u = K * w`, solved by transporting
//! vorticity along the Lagrangian flow, plus a viscous pseudo-spectral
//! reference solver and weak-formulation diagnostics.

mod io;
mod pairing;
mod remainder;
mod viscous;

use std::cell::RefCell;

use crate::driver::{DriverPair, Sign};
use crate::error::{Error, Result};
use crate::flow::{solve_nonlocal_observed, LagrangianSetup, ParticleFlow};
use crate::torus::{biot_savart, VelocityGrid, VorticityGrid};

pub use io::{
    read_particles_binary, read_particles_csv, write_particles_binary, write_particles_csv,
    SnapshotHeader,
};
pub use pairing::{NodePairing, PairingSeries, TestFamily};
pub use remainder::{
    negative_norm_distance, solution_variation_diagnostic, weak_remainder, RemainderOptions,
    Representation, SolutionVariation, WeakRemainder,
};
pub use viscous::{solve_viscous_reference, ViscousSetup, ViscousTrajectory};

use pairing::PairingRecorder;

/// Snapshot of a rough Euler run.
#[derive(Debug, Clone)]
pub struct EulerState {
    pub time: f64,
    pub particles: ParticleFlow,
    /// Deposited vorticity.
    pub vorticity: VorticityGrid,
}

impl EulerState {
    /// Biot–Savart velocity of the mean-free part of the deposited vorticity.
    pub fn velocity(&self) -> Result<VelocityGrid> {
        biot_savart(&self.vorticity.mean_free())
    }
}

/// Conservation checks collected during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDiagnostics {
    /// `max_t |mean(w_t) - mean(w_0)|` of the deposited fields.
    pub mean_drift: f64,
    /// `max_t max_p |w_p|` over `max_p |w_p|` at `t = 0`; one by construction.
    pub particle_sup_ratio: f64,
    /// `max_t ‖w_t‖_∞` of the deposited fields over `max_p |w_p|`.
    pub grid_sup_ratio: f64,
}

/// Lagrangian discretization plus the optional weak-form test family.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerSetup {
    pub lagrangian: LagrangianSetup,
    pub family: Option<TestFamily>,
}

impl EulerSetup {
    pub fn new(lagrangian: LagrangianSetup) -> Self {
        Self {
            lagrangian,
            family: None,
        }
    }

    /// Records pairings with `family` at every driver node.
    pub fn with_family(mut self, family: TestFamily) -> Self {
        self.family = Some(family);
        self
    }
}

#[derive(Debug, Clone)]
pub struct EulerTrajectory {
    pub states: Vec<EulerState>,
    pub driver: DriverPair,
    pub setup: EulerSetup,
    pub pairings: Option<PairingSeries>,
    pub diagnostics: EulerDiagnostics,
}

impl EulerTrajectory {
    pub fn last(&self) -> &EulerState {
        self.states
            .last()
            .expect("trajectory has the initial state")
    }

    pub fn initial(&self) -> &EulerState {
        &self.states[0]
    }

    /// Largest carried weight, `‖w_0‖_∞` on particles.
    pub fn particle_sup(&self) -> f64 {
        self.initial()
            .particles
            .weights()
            .iter()
            .fold(0.0, |m, w| m.max(w.abs()))
    }
}

/// Lattice particles carrying `w0`, then [`solve_rough_euler_particles`].
pub fn solve_rough_euler(
    w0: &VorticityGrid,
    driver: &DriverPair,
    setup: &EulerSetup,
) -> Result<EulerTrajectory> {
    let particles = ParticleFlow::lattice_from_grid(setup.lagrangian.particles_per_side, w0)?;
    solve_rough_euler_particles(&particles, driver, setup)
}

/// Transports the particle weights along the self-consistent flow
/// `dφ = u(φ) dt - σ_j(φ) dZ^j`; the vorticity is `w_t = (φ_t)_# w_0`.
pub fn solve_rough_euler_particles(
    initial: &ParticleFlow,
    driver: &DriverPair,
    setup: &EulerSetup,
) -> Result<EulerTrajectory> {
    if driver.sign() != Sign::Minus {
        return Err(Error::SignConvention(
            "vorticity is advected by the flow with the minus sign in front of the noise".into(),
        ));
    }
    let recorder = setup.family.as_ref().map(|f| {
        RefCell::new(PairingRecorder::new(
            f.clone(),
            driver.sigma().to_vec(),
            initial.weights().to_vec(),
            setup.lagrangian.refine,
        ))
    });
    let run = solve_nonlocal_observed(initial, driver, &setup.lagrangian, |k, t, pos, vel| {
        if let Some(r) = &recorder {
            r.borrow_mut().observe(k, t, pos, vel);
        }
        Ok(())
    })?;
    let pairings = recorder.map(|r| r.into_inner().finish());
    let sup0 = initial.weights().iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let mut mean_drift = 0.0f64;
    let mut grid_sup = 0.0f64;
    let mut states = Vec::with_capacity(run.vorticity.len());
    for ((t, particles), w) in run
        .flow
        .times
        .iter()
        .zip(run.flow.snapshots)
        .zip(run.vorticity)
    {
        mean_drift = mean_drift.max((w.mean() - run.mean).abs());
        grid_sup = grid_sup.max(w.sup_norm());
        states.push(EulerState {
            time: *t,
            particles,
            vorticity: w,
        });
    }
    let particle_sup = states
        .iter()
        .flat_map(|s| s.particles.weights())
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let ratio = |v: f64| if sup0 > 0.0 { v / sup0 } else { 1.0 };
    Ok(EulerTrajectory {
        states,
        driver: driver.clone(),
        setup: setup.clone(),
        pairings,
        diagnostics: EulerDiagnostics {
            mean_drift,
            particle_sup_ratio: ratio(particle_sup),
            grid_sup_ratio: ratio(grid_sup),
        },
    })
}
