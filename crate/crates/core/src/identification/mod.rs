//! Bootstrap tests and the search for exogeneity classes.

pub mod bootstrap;
pub mod hypothesis;
pub mod pipeline;

pub use bootstrap::{bootstrap_replicate, BootstrapConfig, BootstrapScheme, DecisionRule, Design, ReplicateSet};
pub use hypothesis::{
    test_class_separation, test_endogeneity, test_instantaneous, Conclusion, Decision, EdgeStatistics, TestResult,
};
pub use pipeline::{discover_classes, eliminate_endogenous, identify, refine_endogeneity_substructure, Identification};
