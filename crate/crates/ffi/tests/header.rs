//! Compiles a small C program against the generated header.

use std::path::PathBuf;
use std::process::Command;

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/betlab.h");
    assert!(header.is_file(), "build script did not write {}", header.display());
    let src = tempfile_path("betlab_header_check.c");
    std::fs::write(
        &src,
        "#include \"betlab.h\"\n\
         int main(void) {\n\
           BetlabMarginConstants m;\n\
           BetlabMdp *mdp = NULL;\n\
           if (betlab_margin_constants(0.25, &m) != BETLAB_STATUS_OK) return 1;\n\
           if (betlab_mdp_random(3, 2, 1, &mdp) != BETLAB_STATUS_OK) return 1;\n\
           betlab_mdp_free(mdp);\n\
           return betlab_last_error() == NULL ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: no C compiler ({cc}): {e}");
            return;
        }
    };
    assert!(status.success());
}

fn tempfile_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("{}-{name}", std::process::id()))
}
