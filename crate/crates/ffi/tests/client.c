#include <stdio.h>
#include <stdlib.h>
#include "qrelax.h"

#define CHECK(call)                                                   \
    do {                                                              \
        QrStatus s_ = (call);                                         \
        if (s_ != QR_STATUS_OK) {                                     \
            char msg[256];                                            \
            qr_last_error_message(msg, sizeof msg);                   \
            fprintf(stderr, "%s failed (%d): %s\n", #call, s_, msg);  \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    double p;
    CHECK(qr_transition_probability(1, 2, 2.5, &p));
    printf("pi_12 = %.6f\n", p);

    if (qr_transition_probability(1, 2, 0.5, &p) != QR_STATUS_DOMAIN) return 2;

    QrModel *model = NULL;
    CHECK(qr_model_new(2.5, 16, &model));
    size_t len = 0;
    CHECK(qr_model_energies(model, NULL, 0, &len));
    double *e = malloc(len * sizeof *e);
    CHECK(qr_model_energies(model, e, len, &len));

    QrTrajectory *traj = NULL;
    CHECK(qr_trajectory_simulate(model, 1, 1.0, 5.0, 200, 7, 0, 0, &traj));
    size_t n = qr_trajectory_len(traj);
    double *h = malloc(n * sizeof *h);
    CHECK(qr_trajectory_series(traj, QR_SERIES_ENERGY, h, n, &len));
    size_t j = qr_trajectory_outcome(traj);
    printf("outcome %zu, H(end) = %.6f, E_j = %.6f\n", j, h[n - 1], e[j - 1]);
    if (j < 1 || j > 16) return 3;

    double tau;
    CHECK(qr_tau_r(2.5, 1.0, 1, 10.0, 0.95, &tau));
    printf("tau_R(1) = %.4f, version %s\n", tau, qr_version());

    free(h);
    free(e);
    qr_trajectory_free(traj);
    qr_model_free(model);
    return 0;
}
