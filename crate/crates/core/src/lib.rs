//! Laboratory for three-slot-finality ebb-and-flow consensus protocols.

pub mod chain;
pub mod ffg;
pub mod messages;
pub mod forkchoice;
pub mod slashing;
pub mod adversary;
pub mod simnet;
pub mod validator;
pub mod properties;
pub mod oracle;
pub mod cli;
