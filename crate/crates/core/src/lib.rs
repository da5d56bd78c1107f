//! Batch-folded anonymous admission: committed relaxed R1CS over a lattice
//! commitment, multi-key encrypted folding, batch settlement, and ring-signature
//! provisioning against a simulated chain.

pub mod algebra;
pub mod commit;
pub mod encoding;
pub mod ledger;
pub mod mkhe;
pub mod mlsags;
pub mod nifs;
pub mod pbs;
pub mod pipeline;
pub mod relation;
pub mod scenario;
pub mod store;
