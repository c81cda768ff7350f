//! Energy, Weinstein functional, sharp constants, Pohozaev residuals and
//! profile diagnostics.

mod diagnostics;
mod energy;
mod identities;

pub use diagnostics::*;
pub use energy::*;
pub use identities::*;
