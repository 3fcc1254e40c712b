#include <stdio.h>
#include <string.h>

#include "opspam.h"

static int fail(const char *what) {
    const char *err = opspam_last_error();
    fprintf(stderr, "%s: %s\n", what, err ? err : "(no message)");
    return 1;
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke MODEL\n");
        return 2;
    }
    OpspamModel *model = NULL;
    if (opspam_model_load(argv[1], &model) != OPSPAM_STATUS_OK) return fail("load");

    char kind[32];
    size_t needed = 0;
    if (opspam_model_type(model, kind, sizeof kind, &needed) != OPSPAM_STATUS_OK) return fail("type");

    int32_t label = -1;
    double score = 0.0;
    const char *review = "amazing luxury experience, my husband and I definitely recommend it";
    if (opspam_model_predict(model, review, &label, &score) != OPSPAM_STATUS_OK) return fail("predict");
    printf("%s %d %.6f\n", kind, label, score);
    opspam_model_free(model);

    char stem[16];
    if (opspam_stem("relational", stem, sizeof stem, NULL) != OPSPAM_STATUS_OK) return fail("stem");
    printf("%s\n", stem);

    uint8_t y[4] = {0, 0, 1, 1};
    double s[4] = {0.1, 0.4, 0.35, 0.8};
    double auc = 0.0;
    if (opspam_roc_auc(y, s, 4, &auc) != OPSPAM_STATUS_OK) return fail("auc");
    printf("%.4f\n", auc);

    if (opspam_model_load("/no/such/model.json", &model) != OPSPAM_STATUS_IO) return 3;
    if (model != NULL || opspam_last_error() == NULL) return 4;
    printf("%s\n", opspam_version());
    return 0;
}
