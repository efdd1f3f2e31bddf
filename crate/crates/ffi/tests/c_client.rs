use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "vggft.h"

int main(void) {
    VggftModel *m = NULL;
    if (vggft_model_new(VGGFT_ARCH_VGG19, VGGFT_TASK_BINARY, true, 7, &m) != VGGFT_STATUS_OK) return 1;
    size_t shape[3], k;
    vggft_model_shape(m, shape, &k);
    static float input[3 * 64 * 64];
    for (size_t i = 0; i < sizeof input / sizeof *input; i++) input[i] = (float)(i % 13) / 13.0f;
    float probs[2];
    if (vggft_model_predict(m, input, 3 * 64 * 64, 1, probs, 2) != VGGFT_STATUS_OK) return 2;
    if (vggft_model_predict(m, input, 5, 1, probs, 2) != VGGFT_STATUS_DIMENSION) return 3;
    if (strstr(vggft_last_error(), "expected") == NULL) return 4;
    vggft_model_free(m);
    unsigned truth[] = {0, 1, 1}, pred[] = {0, 1, 0};
    VggftMetrics r;
    if (vggft_metrics(truth, pred, 3, 2, &r) != VGGFT_STATUS_OK) return 5;
    int in_range = probs[0] > 0.0f && probs[0] < 1.0f && probs[1] > 0.0f && probs[1] < 1.0f;
    printf("%zu %zu %zu %zu %d %.4f\n", shape[0], shape[1], shape[2], k, in_range, r.accuracy);
    return 0;
}
"#;

#[test]
fn c_program_links_against_static_library() {
    let exe = std::env::current_exe().unwrap();
    // cargo leaves the current staticlib beside the test binary in deps/
    let lib = exe.parent().unwrap().join("libvggft_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("client");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let build = match Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
    {
        Ok(o) => o,
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            return;
        }
    };
    assert!(
        build.status.success(),
        "{}",
        String::from_utf8_lossy(&build.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout), "3 64 64 2 1 0.6667\n");
}
