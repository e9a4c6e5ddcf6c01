pub mod codec;
pub mod eval;
pub mod field;
pub mod mesh;
pub mod model_file;
pub mod train;
pub mod tree;
