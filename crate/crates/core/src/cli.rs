//! placeholder

/// placeholder entry point
pub fn run() -> i32 {
    0
}
