pub mod ais;
pub mod cf;
pub mod classify;
pub mod gen_data;
pub mod train;
pub mod valleys;
