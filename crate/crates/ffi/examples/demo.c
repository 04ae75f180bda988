/* Samples a Cancer network posterior through the C API.
 *
 *   cargo build --release -p sapt-ffi
 *   cc crates/ffi/examples/demo.c -Icrates/ffi/include -Ltarget/release -lsapt -o demo
 *   LD_LIBRARY_PATH=target/release ./demo
 */
#include <stdio.h>
#include <stdlib.h>

#include "sapt.h"

static int fail(const char *what) {
    size_t n = sapt_last_error_length();
    char *msg = malloc(n);
    sapt_last_error_message(msg, n);
    fprintf(stderr, "%s: %s\n", what, msg);
    free(msg);
    return 1;
}

int main(void) {
    SaptConfig *cfg = sapt_config_new();
    sapt_config_set_size(cfg, 4, 8000);
    sapt_config_set_proposal(cfg, SAPT_PROPOSAL_RANDOM_WALK, 0.1, 0.5, 0.5);
    sapt_config_set_surrogate_prob(cfg, 0.5);
    sapt_config_set_seed(cfg, 1, false);

    SaptData *data = NULL;
    if (sapt_data_load("cancer", NULL, 0.6, 1, &data) != SAPT_STATUS_OK) return fail("load");

    SaptRun *run = NULL;
    if (sapt_run(cfg, data, 0, 25.0, &run) != SAPT_STATUS_OK) return fail("run");

    SaptCounts counts;
    SaptAccuracy acc;
    sapt_run_counts(run, &counts);
    sapt_run_accuracy(run, data, 10, &acc);
    printf("sapt %s: %zu samples of %zu parameters\n", sapt_version(), sapt_run_sample_count(run), sapt_run_dim(run));
    printf("true evals %llu, surrogate evals %llu, %.2fs\n",
           (unsigned long long)counts.true_evals, (unsigned long long)counts.surrogate_evals, counts.elapsed_seconds);
    printf("test accuracy [%.2f, %.2f, %.2f]\n", acc.test_mean, acc.test_std, acc.test_best);

    sapt_run_free(run);
    sapt_data_free(data);
    sapt_config_free(cfg);
    return 0;
}
