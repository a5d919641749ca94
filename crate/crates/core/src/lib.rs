//! Interpretable rule-set classifiers learned on a Boolean lattice.
//!
//! Records are discretized and encoded as bit vectors; a greedy learner
//! finds minimal lattice points that cover positive records without covering
//! negative ones, an ensemble repeats this on random feature subsets, and a
//! weighted set cover picks the final rules.
//!
//! ```
//! use rulelattice::config::RunConfig;
//! use rulelattice::data::{binarize_labels, read_csv};
//! use rulelattice::pipeline::train;
//!
//! let cfg = RunConfig::from_toml(r#"
//! [data]
//! label_column = "Label"
//! target_class = "1"
//! features = [
//!     { name = "CPU", kind = "continuous" },
//!     { name = "MEM", kind = "continuous" },
//! ]
//! [discretization]
//! cuts = { CPU = [81, 95], MEM = [85] }
//! [ensemble]
//! n_estimators = 1
//! n_features = 2
//! [selection]
//! alpha = 1.0
//! "#).unwrap();
//!
//! let csv = "CPU,MEM,Label\n95,10,1\n80,10,0\n81,85,1\n10,85,0\n10,10,0\n82,10,0\n85,10,0\n81,10,0\n";
//! let ds = read_csv(csv.as_bytes(), &cfg.data.schema).unwrap();
//! let labels = binarize_labels(&ds);
//! let out = train(&ds, &labels, &cfg).unwrap();
//! assert_eq!(out.model.render(), "\
//! IF CPU ∈ [95, max)
//! OR CPU ∈ [81, max) and MEM ∈ [85, max)
//! THEN Label = 1
//! ELSE Label = 0
//! ");
//! ```

pub mod binarize;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod eval;
pub mod lattice;
pub mod model;
pub mod pipeline;
pub mod selection;
pub mod synthesis;

pub use binarize::{BinarizedDataset, Discretization};
pub use config::RunConfig;
pub use data::{RawDataset, Schema};
pub use lattice::BitVector;
pub use model::RuleSet;
pub use pipeline::{train, TrainOutput};

// The guide's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/binarization.md")]
    mod binarization {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
