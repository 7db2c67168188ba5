pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod spaces;
pub mod sparse;
pub mod assembly;
pub mod manufactured;
pub mod optimality;
pub mod estimator;
pub mod afem;
pub mod io;
