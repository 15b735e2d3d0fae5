pub mod align;
pub mod motif;
pub mod partition;
pub mod pipeline;
pub mod seqio;
pub mod toolio;
