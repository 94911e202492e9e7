#include <math.h>
#include <stdio.h>
#include <string.h>

#include "hiercubes.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__, __LINE__, #cond); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  HcModel *model = NULL;
  CHECK(hc_model_constant(1, 2, 1.0, &model) == HC_STATUS_OK);

  HcLogReal xi;
  CHECK(hc_partition_function(model, "0:(0)", 2, &xi) == HC_STATUS_OK);
  CHECK(xi.kind == HC_LOG_KIND_FINITE);
  CHECK(fabs(exp(xi.ln) - 26.0) < 1e-12);

  double p = 0.0;
  CHECK(hc_exact_marginal(model, "-2:(0)", "0:(0)", 2, &p) == HC_STATUS_OK);
  CHECK(fabs(p - 5.0 / 13.0) < 1e-12);

  double cov = 0.0;
  CHECK(hc_pair_covariance(model, "-2:(0)", "-2:(3)", "0:(0)", 2, &cov) == HC_STATUS_OK);
  CHECK(fabs(cov - 1.0 / 169.0) < 1e-12);

  CHECK(hc_partition_function(model, "not a block", 2, &xi) == HC_STATUS_INVALID_ARGUMENT);
  char *msg = hc_last_error_message();
  CHECK(msg != NULL && strstr(msg, "block notation") != NULL);
  hc_string_free(msg);

  HcSampler *sampler = NULL;
  CHECK(hc_sampler_new(model, "0:(0)", 2, HC_SAMPLER_KIND_TOP_DOWN, 0.0, &sampler) == HC_STATUS_OK);
  char *json = NULL;
  CHECK(hc_sampler_sample_json(sampler, 7, 0, &json) == HC_STATUS_OK);
  CHECK(strstr(json, "\"window\":\"0:(0)\"") != NULL);
  hc_string_free(json);
  hc_sampler_free(sampler);

  hc_model_free(model);
  printf("ok %s\n", hc_version());
  return 0;
}
