pub mod bench;
pub mod corpus;
pub mod evaluate;
pub mod select;
pub mod synth;
