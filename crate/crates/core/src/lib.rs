//! Stochastic flows on the unit torus: seeded Brownian realizations,
//! Stratonovich transport of points, tangent frames, and material curves,
//! hyperbolic stopping times, curve partitions, random cut-off Cantor
//! measures, and the statistics (Lyapunov exponents, CLT clouds, escape
//! fractions, dimension estimates) built on top of them.

pub mod rng;
pub mod harmonic;
pub mod flow_model;
pub mod noise;
pub mod sde;
pub mod stats;
pub mod model_example;
pub mod curve;
pub mod hyptime;
pub mod cantor;
pub mod ld;
pub mod manifest;
