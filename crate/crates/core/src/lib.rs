pub mod cone;
pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod oracle;
pub mod par;
pub mod problem_file;
pub mod program;
pub mod rerm;
pub mod set;
pub mod solver;
pub mod sparse;
pub mod support;
