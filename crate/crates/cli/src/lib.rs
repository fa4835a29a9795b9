//! Library side of the `vdc` command line tool: the blocking HTTP client
//! used both by the binary and by integration tests.

pub mod client;
