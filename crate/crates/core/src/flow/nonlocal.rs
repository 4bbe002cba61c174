use std::cell::{Cell, RefCell};

use crate::driver::DriverPair;
use crate::error::{Error, Result};
use crate::torus::{
    biot_savart_with, check_resolution, deposit, interpolate, Fft2, Interpolation, VorticityGrid,
};

use super::{run_steps, Direction, FlowTrajectory, ParticleFlow, StepGuard, DEFAULT_SNAPSHOTS};

/// Discretization of the self-consistent flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianSetup {
    /// Eulerian grid for deposition and Biot–Savart.
    pub resolution: usize,
    /// Particles per side of the initial lattice.
    pub particles_per_side: usize,
    /// Solver steps per rough-path step.
    pub refine: usize,
    pub guard: StepGuard,
    pub snapshots: usize,
}

impl LagrangianSetup {
    pub fn new(resolution: usize, particles_per_side: usize) -> Self {
        Self {
            resolution,
            particles_per_side,
            refine: 1,
            guard: StepGuard::default(),
            snapshots: DEFAULT_SNAPSHOTS,
        }
    }

    pub fn with_refine(mut self, refine: usize) -> Self {
        self.refine = refine;
        self
    }

    pub fn with_snapshots(mut self, snapshots: usize) -> Self {
        self.snapshots = snapshots.max(1);
        self
    }

    pub fn with_guard(mut self, guard: StepGuard) -> Self {
        self.guard = guard;
        self
    }
}

/// Particle snapshots with the deposited vorticity at the same times.
#[derive(Debug, Clone)]
pub struct NonlocalTrajectory {
    pub flow: FlowTrajectory,
    pub vorticity: Vec<VorticityGrid>,
    /// Mean of the deposited vorticity; only the mean-free part drives the flow.
    pub mean: f64,
}

/// Lattice particles carrying `w0`, then [`solve_nonlocal_particles`].
pub fn solve_nonlocal_flow(
    w0: &VorticityGrid,
    driver: &DriverPair,
    setup: &LagrangianSetup,
) -> Result<NonlocalTrajectory> {
    let particles = ParticleFlow::lattice_from_grid(setup.particles_per_side, w0)?;
    solve_nonlocal_particles(&particles, driver, setup)
}

/// Solves `φ` with drift `K * w_t` where `w_t` is the deposition of the
/// particle weights at their current positions.
pub fn solve_nonlocal_particles(
    initial: &ParticleFlow,
    driver: &DriverPair,
    setup: &LagrangianSetup,
) -> Result<NonlocalTrajectory> {
    solve_nonlocal_observed(initial, driver, setup, |_, _, _, _| Ok(()))
}

/// [`solve_nonlocal_particles`] with `observer(k, t, positions, velocities)`
/// called at every node of the step grid, velocities being the drift seen
/// by the particles.
pub fn solve_nonlocal_observed(
    initial: &ParticleFlow,
    driver: &DriverPair,
    setup: &LagrangianSetup,
    observer: impl FnMut(usize, f64, &[[f64; 2]], &[[f64; 2]]) -> Result<()>,
) -> Result<NonlocalTrajectory> {
    let n = setup.resolution;
    check_resolution(n)?;
    if initial.len() < n * n {
        return Err(Error::Undersampled {
            particles: initial.len(),
            resolution: n,
        });
    }
    let path = driver.rough_path().refine(setup.refine)?;
    let end = path.num_steps();
    let fft = Fft2::new(n);
    let weights = initial.weights().to_vec();
    let velocity = |pos: &[[f64; 2]]| -> Result<Vec<[f64; 2]>> {
        let w = deposit(pos, &weights, n)?;
        let u = biot_savart_with(&w.mean_free(), &fft)?;
        let a = interpolate(n, &u.u1, pos, Interpolation::Cubic)?;
        let b = interpolate(n, &u.u2, pos, Interpolation::Cubic)?;
        Ok(a.into_iter().zip(b).map(|(x, y)| [x, y]).collect())
    };
    let observer = RefCell::new(observer);
    let mean = Cell::new(0.0);
    let mut vorticity = Vec::new();
    let times = path.times().to_vec();
    let flow = run_steps(
        driver,
        &path,
        initial,
        Direction::Forward,
        setup.guard,
        setup.snapshots,
        end,
        |k, pos| {
            let u = velocity(pos)?;
            (observer.borrow_mut())(k, times[k], pos, &u)?;
            Ok(u)
        },
        |k, pos| {
            let w = deposit(pos, &weights, n)?;
            if k == 0 {
                mean.set(w.mean());
            }
            if k == end {
                (observer.borrow_mut())(k, times[k], pos, &velocity(pos)?)?;
            }
            vorticity.push(w);
            Ok(())
        },
    )?;
    Ok(NonlocalTrajectory {
        flow,
        vorticity,
        mean: mean.get(),
    })
}
