//! Data ingestion, synthetic problems, the optimum oracle, rate fits, races
//! and the self-check suite.

pub mod libsvm;
pub mod oracle;
pub mod race;
pub mod rate;
pub mod synthetic;
pub mod verify;

pub use libsvm::{load_libsvm, read_libsvm, write_libsvm, write_libsvm_to, LabelKind};
pub use oracle::{compute_optimum, compute_optimum_with, OptimumCertificate, OracleMethod};
pub use race::{race, RaceEntry, RaceReport, SummaryRow, TraceRow};
pub use rate::{fit_rate, FitWindow, RateReport};
pub use synthetic::{engineered_problem, engineered_spec, gen_synthetic, Planted, SyntheticSpec};
pub use verify::{run_suite, VerifyOptions, VerifyReport};
