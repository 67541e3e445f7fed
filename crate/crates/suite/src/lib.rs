//! Holds the `acceptance` test target, which runs after every other test
//! binary in the workspace. Run it with `cargo test -p mno-suite`.
