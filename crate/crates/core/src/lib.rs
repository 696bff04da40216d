//! Automated annotation of text corpora with continuous labels.
//!
//! The crate drives a generative model through four annotation protocols
//! (rating scales, rating-scale tuples, paired comparisons and best-worst
//! scaling) and turns the answers into per-text scores:
//!
//! 1. [`design`] builds the units of annotation (singles, 4-tuples, pairs),
//! 2. [`prompting`] renders one prompt per unit,
//! 3. [`backends`] obtains answers (HTTP chat endpoint, simulator or replay)
//!    and retries until [`parsing`] accepts one,
//! 4. [`scoring`] aggregates judgments, [`evaluation`] measures their quality,
//! 5. [`pipeline`] wires everything into resumable runs.
//!
//! ```
//! use bestworst::corpus::{Corpus, Split, TextInstance};
//! use bestworst::design::{design_bws_tuples, TupleDesignConfig};
//!
//! let instances = (0..20)
//!     .map(|i| TextInstance {
//!         id: format!("t{i}"),
//!         text: format!("tweet {i}"),
//!         dimension: "joy".into(),
//!         gold_score: None,
//!     })
//!     .collect();
//! let corpus = Corpus::new("joy", Split::Train, instances).unwrap();
//! let design = design_bws_tuples(&corpus, &TupleDesignConfig::bws(2.0, 7)).unwrap();
//! assert_eq!(design.len(), 40);
//! assert!(design.design_stats.appearance_spread() <= 1);
//! ```

pub mod backends;
pub mod corpus;
pub mod design;
pub mod evaluation;
pub mod parsing;
pub mod pipeline;
pub mod prompting;
pub mod scoring;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/prompting.md")]
    mod prompting {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
