#include <stdio.h>
#include "sarvel.h"

int main(void) {
    double rx = 0.0, ry = 0.0;
    if (sarvel_resolution_bounds(1.5e9, 50e6, 0.7853981633974483, &rx, &ry) != SARVEL_STATUS_OK) {
        fprintf(stderr, "bounds failed: %s\n", sarvel_last_error_message());
        return 1;
    }
    printf("rho_x=%f rho_y=%f\n", rx, ry);

    SarvelConfig *cfg = NULL;
    if (sarvel_config_from_preset("desk-small", &cfg) != SARVEL_STATUS_OK) {
        fprintf(stderr, "preset failed: %s\n", sarvel_last_error_message());
        return 1;
    }
    sarvel_config_set_seed(cfg, 7);
    SarvelRunResult *result = NULL;
    SarvelStatus st = sarvel_run(cfg, "/tmp/sarvel_c_demo", &result);
    if (st != SARVEL_STATUS_OK && st != SARVEL_STATUS_SOLVER_NON_CONVERGENCE) {
        fprintf(stderr, "run failed: %s\n", sarvel_last_error_message());
        sarvel_config_free(cfg);
        return 1;
    }
    double e_ocd = 0.0, e_mf = 0.0;
    sarvel_result_pixel_error(result, "ocd", &e_ocd);
    sarvel_result_pixel_error(result, "mf", &e_mf);
    printf("pixel_error ocd=%f mf=%f\n", e_ocd, e_mf);
    sarvel_run_result_free(result);
    sarvel_config_free(cfg);
    return 0;
}
