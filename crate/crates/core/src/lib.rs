pub mod archive;
pub mod data;
pub mod encoding;
pub mod eval;
pub mod geomask;
pub mod neural;
pub mod planted;
pub mod trajgan;
