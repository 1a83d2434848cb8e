//! Word-image classification laboratory.
//!
//! Three classifiers over "books" (independent labeled word-image corpora):
//!
//! * a bag-of-visual-words feature built on a Kohonen self-organizing map
//!   codebook, classified by nearest class mean ([`bovw`], [`centroid`]);
//! * a small convolutional network trained end to end with a sigmoid
//!   output layer and binary cross-entropy ([`nn`]);
//! * nearest class mean over externally computed ("tapped") feature
//!   vectors ([`centroid`]).
//!
//! [`dataset`] implements the per-book split and eligibility protocol,
//! [`augment`] the elastic morphing, [`synth`] a generator of synthetic
//! books and [`harness`] the batch runner that produces per-book result
//! CSVs, summaries and histograms.

pub mod augment;
pub mod bovw;
pub mod centroid;
pub mod dataset;
pub mod harness;
pub mod imaging;
mod linalg;
pub mod nn;
pub mod seed;
pub mod synth;

pub use imaging::GrayImage;
