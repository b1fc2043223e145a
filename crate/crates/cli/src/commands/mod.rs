pub mod analyze;
pub mod gen_data;
pub mod sweep;
pub mod train;
