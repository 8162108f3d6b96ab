pub mod augment;
pub mod cli;
pub mod entities;
pub mod evalkit;
pub mod kg;
pub mod path;
pub mod pathlm;
pub mod pipeline;
pub mod sampler;
pub mod scorer;
pub mod seed;
pub mod tcmetric;
pub mod text;
