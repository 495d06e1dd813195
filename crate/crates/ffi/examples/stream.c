/* Streams a cell CSV from stdin through a checkpoint and prints estimates. */
#include <stdio.h>
#include "rulkit.h"

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s MODEL.rkcp < cell.csv\n", argv[0]);
        return 2;
    }
    RulkitModel *model = NULL;
    if (rulkit_model_load(argv[1], &model) != RULKIT_STATUS_OK) {
        fprintf(stderr, "load failed: %s\n", rulkit_last_error());
        return 1;
    }
    RulkitPredictor *pred = NULL;
    rulkit_predictor_new(model, &pred);

    double t, v, i, temp;
    RulkitEstimate est;
    char line[256];
    if (!fgets(line, sizeof line, stdin)) /* header */
        return 1;
    while (fgets(line, sizeof line, stdin)) {
        if (sscanf(line, "%lf,%lf,%lf,%lf", &t, &v, &i, &temp) != 4) continue;
        if (rulkit_predictor_push(pred, t, v, i, temp, NULL) != RULKIT_STATUS_OK) {
            fprintf(stderr, "%s\n", rulkit_last_error());
            break;
        }
        while (rulkit_predictor_pop(pred, &est) == RULKIT_STATUS_OK)
            printf("%g,%g\n", est.timestamp_s, est.remaining_ah);
    }
    rulkit_predictor_finish(pred, NULL);
    while (rulkit_predictor_pop(pred, &est) == RULKIT_STATUS_OK)
        printf("%g,%g\n", est.timestamp_s, est.remaining_ah);

    rulkit_predictor_free(pred);
    rulkit_model_free(model);
    return 0;
}
