pub mod exec;
pub mod gpt_mnist;
pub mod grid;
pub mod growth;
pub mod io;
pub mod metrics;
pub mod pattern;
pub mod presets;
