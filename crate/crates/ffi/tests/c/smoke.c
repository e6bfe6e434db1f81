#include <math.h>
#include <stdio.h>
#include "subspace_sketch.h"

#define CHECK(call)                                                            \
  do {                                                                         \
    SsStatus s_ = (call);                                                      \
    if (s_ != SS_STATUS_OK) {                                                  \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, ss_last_error_message()); \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(void) {
  const double cosines[2] = {0.8, 0.3};
  SsSubspace *x1 = NULL, *x2 = NULL, *y1 = NULL, *y2 = NULL;
  SsSketchOperator *op = NULL;
  double c[2], aff, dist, est;

  CHECK(ss_subspace_pair_with_angles(100, cosines, 2, 3, 11, &x1, &x2));
  CHECK(ss_principal_angles(x1, x2, c, 2, &aff, &dist));
  if (fabs(c[0] - 0.8) > 1e-10 || fabs(c[1] - 0.3) > 1e-10 || fabs(aff - 0.73) > 1e-10) {
    fprintf(stderr, "unexpected geometry %g %g %g\n", c[0], c[1], aff);
    return 1;
  }
  CHECK(ss_sketch_operator_new(40, 100, 5, &op));
  CHECK(ss_sketch_apply(op, x1, &y1));
  CHECK(ss_sketch_apply(op, x2, &y2));
  CHECK(ss_principal_angles(y1, y2, NULL, 0, &aff, NULL));
  CHECK(ss_projected_affinity_estimate(0.73, 2, 3, 40, &est));
  if (ss_subspace_dim(y1) != 2 || ss_subspace_ambient(y1) != 40) return 1;
  if (ss_principal_angles(x1, y1, NULL, 0, &aff, NULL) != SS_STATUS_DIMENSION_MISMATCH) return 1;
  if (ss_last_error_message() == NULL) return 1;
  printf("ok %s aff_y=%.6f est=%.6f\n", ss_version(), aff, est);

  ss_subspace_free(x1);
  ss_subspace_free(x2);
  ss_subspace_free(y1);
  ss_subspace_free(y2);
  ss_sketch_operator_free(op);
  return 0;
}
