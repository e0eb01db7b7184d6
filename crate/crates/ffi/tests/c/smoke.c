#include <stdio.h>
#include <string.h>
#include "clic.h"

int main(void) {
    unsigned char px[16 * 16];
    for (int i = 0; i < 256; i++) px[i] = (unsigned char)i;
    ClicImage *img = NULL;
    if (clic_image_new(16, 16, 1, px, &img) != CLIC_STATUS_OK) return 10;
    double ge = -1.0;
    if (clic_metric(img, CLIC_METRIC_GLOBAL_ENTROPY, &ge) != CLIC_STATUS_OK || ge != 1.0) return 11;
    if (clic_metric(NULL, CLIC_METRIC_GLOBAL_ENTROPY, &ge) != CLIC_STATUS_NULL_POINTER) return 12;
    char msg[64];
    size_t n = clic_last_error(msg, sizeof msg);
    if (n == 0 || strstr(msg, "null") == NULL) return 13;
    double x[4] = {1, 2, 3, 4}, y[4] = {1, 3, 2, 4}, p, s;
    if (clic_correlation(x, y, 4, &p, &s) != CLIC_STATUS_OK || p < 0.79 || p > 0.81) return 14;
    clic_image_free(img);
    printf("ok %s\n", clic_version());
    return 0;
}
