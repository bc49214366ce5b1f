pub mod spectrum;
pub mod train;
pub mod uv;
