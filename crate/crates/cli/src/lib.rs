//! Command-line front end for the nadmm solver library: problem ingestion,
//! solve/analyze/validate commands, trace CSV and JSON report export.

pub mod commands;
pub mod io;
