#ifndef LOGFACTOR_H
#define LOGFACTOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_POINTER = 1,
  LF_STATUS_INVALID_ARGUMENT = 2,
  LF_STATUS_NOT_CONVERGED = 3,
  LF_STATUS_PROTOCOL_FAILURE = 4,
  LF_STATUS_TRUNCATION = 5,
  /**
   * Trial division left nothing to drive; the result holds no factors.
   */
  LF_STATUS_NOTHING_TO_DO = 6,
  LF_STATUS_INTERNAL = 7,
  LF_STATUS_PANIC = 8,
} LfStatus;

/**
 * Opaque potential and single-particle basis.
 */
typedef struct LfSystem LfSystem;

typedef struct LfFactorResult {
  /**
   * Larger factor, or 0 when none was found.
   */
  uint64_t p;
  uint64_t q;
  /**
   * The number actually driven after trial division.
   */
  uint64_t n;
  uint32_t attempts;
  double omega;
  double t_window;
} LfFactorResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *lf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lf_version(void);

/**
 * `ln(k/L + 1)`.
 *
 * # Safety
 * `out` must be valid for writing one `double`.
 */
enum LfStatus lf_level_1d(uint32_t k, uint32_t l, double *out);

/**
 * `ln(j/K + 1)`.
 *
 * # Safety
 * `out` must be valid for writing one `double`.
 */
enum LfStatus lf_level_3d(uint32_t j, uint32_t k, double *out);

/**
 * `ln(1 + 1/N)`, the detuning floor of the protocol.
 *
 * # Safety
 * `out` must be valid for writing one `double`.
 */
enum LfStatus lf_resonance_margin(uint64_t n, double *out);

/**
 * `min((gamma T)^2, (1/gamma)^2)`.
 *
 * # Safety
 * `out` must be valid for writing one `double`.
 */
enum LfStatus lf_max_semiprime(double gamma, double t_dec, double *out);

/**
 * Builds the potential for `l` fitted to `m_fit` levels and its s-wave basis.
 * On success `*out` owns a handle to release with [`lf_system_free`].
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum LfStatus lf_system_build(uint32_t l, size_t m_fit, struct LfSystem **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `system` must be null or a handle from [`lf_system_build`] not yet freed.
 */
void lf_system_free(struct LfSystem *system);

/**
 * Number of s-states held by the system.
 *
 * # Safety
 * `system` must be a live handle; `out` valid for one `size_t`.
 */
enum LfStatus lf_system_s_count(const struct LfSystem *system, size_t *out);

/**
 * Energy of s-state `j`.
 *
 * # Safety
 * `system` must be a live handle; `out` valid for one `double`.
 */
enum LfStatus lf_system_s_energy(const struct LfSystem *system, size_t j, double *out);

/**
 * Contact matrix element between the ground pair and the s-pair `(k1, k2)`.
 *
 * # Safety
 * `system` must be a live handle; `out` valid for one `double`.
 */
enum LfStatus lf_system_w_ground_to(const struct LfSystem *system,
                                    size_t k1,
                                    size_t k2,
                                    double *out);

/**
 * Runs the protocol on `n` in the rotating-wave model.
 *
 * # Safety
 * `system` must be a live handle; `out` valid for one `LfFactorResult`.
 */
enum LfStatus lf_factor(const struct LfSystem *system,
                        uint64_t n,
                        uint64_t seed,
                        struct LfFactorResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOGFACTOR_H */
