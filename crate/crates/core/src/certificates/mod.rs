//! Local dissipativity, global coupling and stability LMIs, and the
//! centralized gain problem built from them.

mod builders;
mod central;
mod supply;

pub use builders::{
    add_constraints, lmi_global_continuous, lmi_global_discrete, lmi_local_continuous, lmi_local_discrete,
    lmi_stability, storage_positivity, Constraint,
};
pub use central::{
    assemble_centralized, audit_certificate, CentralizedProblem, CentralizedResult, CertOptions, CertificateSet,
    Residual, SubsystemCertificate,
};
pub(crate) use central::{add_bounds, global_supplies};
pub use supply::{
    GainObjective, GainTarget, StorageCertificate, StorageExprs, StorageForm, StorageVars, SupplyKind, SupplyRate,
    SupplyVar,
};
