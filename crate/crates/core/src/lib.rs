//! Deceptive opinion spam classification toolkit.
//!
//! Preprocessing, count and TF-IDF features, naive Bayes and SGD-trained
//! linear models, and a small neural engine (CNN, LSTM, BiLSTM, a recurrent
//! CNN hybrid and attention-based BiLSTM) with hand-written backpropagation.

pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod features;
pub mod linear;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod reproduce;
pub mod textprep;

pub use error::{Error, Result};
