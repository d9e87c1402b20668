pub mod audit;
pub mod crypto;
pub mod metrics;
pub mod monitor;
pub mod routing;
pub mod sim;

/// The guide's chapters, compiled so their examples stay correct.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/pseudonyms.md")]
    pub struct Pseudonyms;
    #[doc = include_str!("../../../book/src/monitor.md")]
    pub struct Monitor;
    #[doc = include_str!("../../../book/src/audit.md")]
    pub struct Audit;
    #[doc = include_str!("../../../book/src/routing.md")]
    pub struct Routing;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
