//! Every chapter of the guide in `book/src` is included here as module
//! documentation so that `cargo test` runs its code samples.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(reservoir, "reservoir.md");
chapter!(stratified, "stratified.md");
chapter!(estimators, "estimators.md");
chapter!(windows, "windows.md");
chapter!(distributed, "distributed.md");
chapter!(baselines, "baselines.md");
chapter!(workloads, "workloads.md");
chapter!(cli, "cli.md");
chapter!(formats, "formats.md");
