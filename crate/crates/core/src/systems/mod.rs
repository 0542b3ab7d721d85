//! Ground-truth data: ODE and PDE generators, torus embeddings and trajectory slicing.

mod dataset;
mod ks;
mod ode;
mod prep;
mod torus;

pub use dataset::{TrajectoryDataset, DATASET_MAGIC, DATASET_VERSION};
pub use ks::{gen_ks, sine_profile, KsParams, KsSolver};
pub use ode::{
    first_return, gen_lorenz63, gen_rigid_body, integrate, integrate_with, rigid_body_path,
    rk4_step, sphere_grid, sphere_random, Lorenz63Params, RigidBodyParams,
};
pub use prep::{sample_subsets, segment, Subset};
pub use torus::{
    embed_trajectory, sphere_angles, sphere_to_torus, sphere_to_torus_full, torus_embed,
};
