//! Retrieval evaluation: protocol construction, verification and open-set
//! identification metrics, old/new cross-testing, the compatibility
//! criterion, and the triplet constraint audit.

mod audit;
mod metrics;
mod protocol;
mod report;
mod run;

pub use audit::{audit_constraints, ConstraintRates};
pub use metrics::{make_template, permutation_chance, similarity, tar_at_far, tpir_at_fpir};
pub use protocol::{build_eval_protocol, EvalProtocol, GalleryEntry, QueryEntry, VerificationPair};
pub use report::{render_report_csv, render_report_md, write_report_files, LabeledReport};
pub use run::{compatibility_holds, run_eval, EvalReport, MetricPoint, SideReport};
