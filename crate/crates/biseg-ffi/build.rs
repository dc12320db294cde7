fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR set");
    let header = std::path::Path::new(&crate_dir).join("include").join("biseg.h");
    std::fs::create_dir_all(header.parent().expect("include dir")).expect("create include dir");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        // keep builds working from a clean checkout even if header
        // generation hiccups; the committed header stays in place
        Err(err) => println!("cargo:warning=cbindgen failed: {err}"),
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
