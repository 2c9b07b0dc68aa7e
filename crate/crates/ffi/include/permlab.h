#ifndef PERMLAB_H
#define PERMLAB_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the numeric values follow the CLI exit codes where they overlap.
 */
typedef enum PermlabStatus {
  PERMLAB_STATUS_OK = 0,
  PERMLAB_STATUS_NULL_POINTER = 1,
  PERMLAB_STATUS_INVALID_INPUT = 2,
  PERMLAB_STATUS_NUMERICAL = 3,
  PERMLAB_STATUS_COST_GUARD = 4,
  PERMLAB_STATUS_BUFFER_TOO_SMALL = 5,
  PERMLAB_STATUS_PANIC = 6,
} PermlabStatus;

/**
 * Opaque kernel handle.
 */
typedef struct PermlabKernel PermlabKernel;

typedef struct PermlabKernelReport {
  size_t n;
  bool has_pd_sym_part;
  bool is_m_matrix;
  bool is_inverse_m_matrix;
  /**
   * NaN when the symmetric part is not positive definite.
   */
  double gamma;
  double spectral_radius;
  double min_sym_eigenvalue;
} PermlabKernelReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *permlab_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t permlab_last_error(char *buf, size_t len);

/**
 * Creates a kernel from `n * n` row-major entries.
 *
 * # Safety
 * `rows` must point to `n * n` doubles and `out` to a writable handle slot.
 */
enum PermlabStatus permlab_kernel_new(const double *rows, size_t n, struct PermlabKernel **out);

/**
 * Releases a handle from [`permlab_kernel_new`]. Null is ignored.
 *
 * # Safety
 * `k` must be null or a live handle, not used afterwards.
 */
void permlab_kernel_free(struct PermlabKernel *k);

/**
 * Dimension of the kernel, 0 for a null handle.
 *
 * # Safety
 * `k` must be null or a live handle.
 */
size_t permlab_kernel_dim(const struct PermlabKernel *k);

/**
 * # Safety
 * `k` must be a live handle and `out` writable.
 */
enum PermlabStatus permlab_classify(const struct PermlabKernel *k,
                                    double tol,
                                    struct PermlabKernelReport *out);

/**
 * Density at `l` (length n) by torus quadrature with `grid_k` points per
 * angle on the reduced grid. `residue` may be null.
 *
 * # Safety
 * `k` must be a live handle, `l` must hold n doubles, `value` writable.
 */
enum PermlabStatus permlab_density(const struct PermlabKernel *k,
                                   const double *l,
                                   size_t grid_k,
                                   double *value,
                                   double *residue);

/**
 * det(I + ΛG)^{−alpha} for λ of length n.
 *
 * # Safety
 * `k` must be a live handle, `lambda` must hold n doubles, `out` writable.
 */
enum PermlabStatus permlab_laplace_transform(const struct PermlabKernel *k,
                                             const double *lambda,
                                             double alpha,
                                             double *out);

/**
 * Writes `count` exact samples row-major into `buf`, which must hold
 * `count * n` doubles. Output depends only on the kernel, `count` and `seed`.
 *
 * # Safety
 * `k` must be a live handle and `buf` must point to `buf_len` writable doubles.
 */
enum PermlabStatus permlab_sample(const struct PermlabKernel *k,
                                  size_t count,
                                  uint64_t seed,
                                  double *buf,
                                  size_t buf_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERMLAB_H */
