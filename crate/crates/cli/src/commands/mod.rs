//! One module per subcommand.

pub mod detect;
pub mod eval;
pub mod gen_data;
pub mod gradcheck;
pub mod plot;
pub mod train;
