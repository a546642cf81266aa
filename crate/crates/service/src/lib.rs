//! HTTP API and text rendering for the `periop` command.

pub mod api;
pub mod render;

use periop_core::Error;

/// Process exit code for an error: 2 for validation problems, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Format { .. }
        | Error::InvalidArgument(_)
        | Error::UnknownPatient(_)
        | Error::UnknownSession(_)
        | Error::InvalidFeedback(_)
        | Error::InvalidTarget(_) => 2,
        _ => 3,
    }
}
