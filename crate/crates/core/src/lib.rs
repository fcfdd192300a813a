//! Visual relationship scoring.
//!
//! Given detections with pooled features, the crate scores
//! `⟨subject, predicate, object⟩` triplets and `⟨object, is, attribute⟩`
//! pairs, ranks them per image and evaluates them with challenge metrics.
//!
//! The predicate score comes from a late-fusion network: frozen log
//! frequencies `log p(P | S, O)` are added to trainable logits from a
//! spatial branch over a 22-dimensional box encoding, a visual branch over
//! the concatenated subject, union and object features, and two solo heads.
//! Attributes come from a separate single-branch network.
//!
//! | module | contents |
//! |---|---|
//! | [`geom`] | boxes, IoU, union |
//! | [`spatial`] | box deltas and the 22-dim pair encoding |
//! | [`freq`] | frequency table and the semantic prior |
//! | [`nn`] | dense layers, softmax, backpropagation |
//! | [`fusion`] | relationship model and pair sampling |
//! | [`attribute`] | attribute model |
//! | [`train`] | momentum SGD shared by both models |
//! | [`ranker`] | triplet scores and top-k ranking |
//! | [`eval`] | R@K, mAP and the weighted score |
//! | [`io`] | dataset files |
//! | [`synth`] | a seeded synthetic world |
//! | [`checkpoint`] | binary model files |
//! | [`pipeline`] | the CLI stages in memory |
//! | [`cli`] | the `vrd` command |
//!
//! ```
//! use vrd::freq::FreqTable;
//! use vrd::pipeline;
//! use vrd::synth::{standard_vocab, synth_world};
//!
//! let train = synth_world(1, 50, 4, &standard_vocab()).unwrap();
//! let freq: FreqTable = pipeline::build_freq(&train, 1.0).unwrap();
//! let person = train.vocab.objects.lookup("person").unwrap();
//! let guitar = train.vocab.objects.lookup("guitar").unwrap();
//! let p = freq.probs(person, guitar);
//! assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
//! ```

pub mod attribute;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod freq;
pub mod fusion;
pub mod geom;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod ranker;
pub mod spatial;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
