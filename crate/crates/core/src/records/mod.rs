//! Record projectors in small closed models: exact correlation of records
//! with measured histories, and the fact that one record family cannot track
//! two history assignments with different probabilities.

mod build;
mod model;
mod verify;

pub use build::{build_agreement_model, build_bessw_analog, build_copy_model, trivial_records, MAX_MODEL_DIM};
pub use model::{family_defect, unitarity_defect, CMatrix, CVector, FiniteModel, RecordFamily, MODEL_TOL};
pub use verify::{
    bohm_branches, chain_branches, exclusivity_check, verify_record_correlation, CorrelationReport, ExclusivityReport,
    Formulation, PROBABILITY_GAP_TOL,
};
