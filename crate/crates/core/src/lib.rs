pub mod algebra;
pub mod error;
pub mod hubbard;
pub mod io;
pub mod metrics;
pub mod objectives;
pub mod operator;
pub mod oracle;
pub mod solver;
pub mod su2;
