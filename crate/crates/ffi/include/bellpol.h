#ifndef BELLPOL_H
#define BELLPOL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call.
typedef enum BellpolStatus {
  BELLPOL_STATUS_OK = 0,
  BELLPOL_STATUS_NULL_POINTER = 1,
  BELLPOL_STATUS_INVALID_ARGUMENT = 2,
  BELLPOL_STATUS_UNSUPPORTED_ORDER = 3,
  BELLPOL_STATUS_TRUNCATION = 4,
  BELLPOL_STATUS_UNDEFINED_DP = 5,
  BELLPOL_STATUS_INSUFFICIENT_PULSES = 6,
  BELLPOL_STATUS_UNIDENTIFIABLE = 7,
  BELLPOL_STATUS_IO = 8,
  BELLPOL_STATUS_PARSE = 9,
  BELLPOL_STATUS_PANIC = 10,
} BellpolStatus;

// State selector accepted by [`bellpol_model_new`] and [`bellpol_closed_form_p2`].
enum BellpolBellState
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  BELLPOL_BELL_STATE_PSI_PLUS = 0,
  BELLPOL_BELL_STATE_PSI_MINUS = 1,
  BELLPOL_BELL_STATE_PHI_PLUS = 2,
  BELLPOL_BELL_STATE_PHI_MINUS = 3,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum BellpolBellState BellpolBellState;
#else
typedef uint32_t BellpolBellState;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque moment model of one lossy Bell state.
typedef struct BellpolModel BellpolModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a model of `state` at mean photon number `nbar` per mode with
// `modes` independent quadruples, detection efficiency `eta`, and moments up
// to order `k_max`.
//
// # Safety
// `out` must be a valid pointer; the handle it receives must be released
// with [`bellpol_model_free`].
enum BellpolStatus bellpol_model_new(uint32_t state,
                                     double nbar,
                                     double eta,
                                     uint32_t modes,
                                     uint32_t k_max,
                                     struct BellpolModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`bellpol_model_new`] and not be used afterwards.
void bellpol_model_free(struct BellpolModel *model);

// Noise-reduction factor at the waveplate angles (degrees).
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum BellpolStatus bellpol_model_nrf(const struct BellpolModel *model,
                                     double chi_h_deg,
                                     double chi_q_deg,
                                     double *out);

// Central moment of order `k` of the Stokes observable selected by the
// waveplate angles (degrees).
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum BellpolStatus bellpol_model_central_moment(const struct BellpolModel *model,
                                                double chi_h_deg,
                                                double chi_q_deg,
                                                uint32_t k,
                                                double *out);

// Mean total intensity `⟨S0⟩`.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum BellpolStatus bellpol_model_mean_s0(const struct BellpolModel *model, double *out);

// Row-major 3×3 covariance of `(S1, S2, S3)`.
//
// # Safety
// `model` must be a live handle and `out` must point to 9 doubles.
enum BellpolStatus bellpol_model_stokes_covariance(const struct BellpolModel *model, double *out);

// Degree of polarization of order `order`. Orders above 2 are searched on
// the waveplate grid with the given steps (degrees) and refined.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum BellpolStatus bellpol_model_dp(const struct BellpolModel *model,
                                    uint32_t order,
                                    double step_h_deg,
                                    double step_q_deg,
                                    double *out);

// Closed-form `P2` of the model's state, efficiency and photon number.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum BellpolStatus bellpol_model_closed_form_p2(const struct BellpolModel *model, double *out);

// Closed-form `P2` without building a model.
//
// # Safety
// `out` must be a valid pointer.
enum BellpolStatus bellpol_closed_form_p2(uint32_t state, double eta, double nbar, double *out);

// Even-order degree predicted from `P2` for Gaussian statistics.
//
// # Safety
// `out` must be a valid pointer.
enum BellpolStatus bellpol_gaussian_limit_dp(double p2, uint32_t order, double *out);

// Unit Stokes vector measured at the waveplate angles (degrees).
//
// # Safety
// `out` must point to 3 doubles.
enum BellpolStatus bellpol_direction_from_waveplates(double chi_h_deg,
                                                     double chi_q_deg,
                                                     double *out);

// Highest moment order a model can be built with.
uint32_t bellpol_max_order(void);

// Library version as a static NUL-terminated string.
const char *bellpol_version(void);

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call on the same thread.
const char *bellpol_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BELLPOL_H */
