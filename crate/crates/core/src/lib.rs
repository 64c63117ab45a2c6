pub mod case;
pub mod partition;
pub mod conic;
pub mod model;
pub mod relax;
pub mod bundle;
pub mod run;
