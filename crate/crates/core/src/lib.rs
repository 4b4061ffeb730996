pub mod cli;
pub mod error;
pub mod gnn;
pub mod io;
pub mod model;
pub mod multiview_geom;
pub mod radar_dsp;
pub mod scene_sim;
pub mod tensor;
pub mod training_eval;

pub use error::{Error, Result};
