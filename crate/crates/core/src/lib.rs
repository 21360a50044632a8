pub mod camera;
pub mod codec;
pub mod gbuffer;
pub mod harness;
pub mod metrics;
pub mod predictor;
pub mod scene;
pub mod shading;
pub mod transport;
pub mod visibility;
