//! Command-line front end for `lvmrs`: score-file ingestion, certificate
//! records and the `certify`, `bounds`, `curve` and `sample` commands.

pub mod app;
pub mod error;
pub mod inputs;
pub mod record;
pub mod scorefile;

pub use error::{CliError, CliResult};
pub use record::CertificateRecord;
