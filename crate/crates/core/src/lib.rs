pub mod smiles;
pub mod rings;
pub mod hiergraph;
pub mod tensor;
pub mod model;
pub mod train;
