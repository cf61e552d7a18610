pub mod error;
pub mod grid;
pub mod oracle;
pub mod pipeline;
pub mod rawio;
pub mod scene;
pub mod spectral;
pub mod transport;
pub mod visibility;
