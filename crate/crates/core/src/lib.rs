//! Dissipative discrete truncated Wigner approximation (DDTWA) for open
//! spin-1/2 ensembles, optionally coupled to a lossy cavity mode.
//!
//! Each trajectory evolves one classical vector per spin under mean-field
//! precession plus Ito noise that mimics dephasing, decay and cavity loss.
//! Averages over trajectories approximate symmetrically ordered quantum
//! expectation values. A dense Lindblad integrator in [`oracle`] provides
//! exact references for small systems.
//!
//! The engine is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases below fix the common choice.
//!
//! ```
//! use ddtwa::{Direction, Model, NoiseChannel, ProductStateSpec, Simulation, TimeGrid, TrajectorySpec};
//!
//! let model = Model::new(1).unwrap();
//! let sim = Simulation::new(
//!     model,
//!     vec![NoiseChannel::DecayStandard { gamma: 1.0 }],
//!     ProductStateSpec::uniform(Direction::UP, 1),
//!     TimeGrid::new(1.0, 0.01, 10).unwrap(),
//! )
//! .unwrap();
//! let series = sim.run_ensemble(&TrajectorySpec::new(100, 7)).unwrap();
//! assert_eq!(series.times.len(), 11);
//! ```

pub mod error;
pub mod integrator;
pub mod models;
pub mod noise;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod series;
pub mod spin;

pub use error::{Error, Result};
pub use integrator::{default_dt, mean_field_reference, DriftScheme, FailurePolicy, Simulation, TimeGrid, TrajectorySpec};
pub use models::{
    build_power_law_couplings, CavityCoupling, CouplingMatrix, DisorderSpec, LatticeSpec, LocalFields, ModelSpec,
    ModelSummary,
};
pub use noise::NoiseChannel;
pub use observables::{photon_statistics, squeezing_parameter, MomentSet, ObservableRequest};
pub use scalar::Real;
pub use series::{Column, ObservableSeries, RunMetadata, WindowStat};
pub use spin::{Axis, BlochVector, Direction, ProductStateSpec, SpinEnsembleState};

pub type Bloch = BlochVector<f64>;
pub type Bloch32 = BlochVector<f32>;
pub type Ensemble = SpinEnsembleState<f64>;
pub type Model = ModelSpec<f64>;
pub type Model32 = ModelSpec<f32>;
pub type Couplings = CouplingMatrix<f64>;
pub type Fields = LocalFields<f64>;
pub type Cavity = CavityCoupling<f64>;
