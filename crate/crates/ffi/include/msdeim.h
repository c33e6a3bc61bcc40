#ifndef MSDEIM_H
#define MSDEIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsdStatus {
  MSD_STATUS_OK = 0,
  MSD_STATUS_NULL_POINTER = 1,
  MSD_STATUS_INVALID_ARGUMENT = 2,
  MSD_STATUS_CONFIG = 3,
  MSD_STATUS_NUMERICAL = 4,
  MSD_STATUS_IO = 5,
  MSD_STATUS_PANIC = 6,
} MsdStatus;

/**
 * An interpolation model (basis and points).
 */
typedef struct MsdDeim MsdDeim;

/**
 * The in-memory result of a complete experiment.
 */
typedef struct MsdRun MsdRun;

/**
 * A multiscale space together with its mesh.
 */
typedef struct MsdSpace MsdSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *msd_last_error(void);

/**
 * Library version as a static string.
 */
const char *msd_version(void);

/**
 * Builds the multiscale space on an `nx × ny` fine grid with `ncx × ncy`
 * coarse blocks. `kappa` holds one value per fine cell, x fastest.
 */
enum MsdStatus msd_space_build(size_t nx,
                               size_t ny,
                               size_t ncx,
                               size_t ncy,
                               const double *kappa,
                               size_t kappa_len,
                               size_t eigen_count,
                               size_t layers,
                               struct MsdSpace **out);

/**
 * Fine node count and coarse dimension.
 */
enum MsdStatus msd_space_dims(const struct MsdSpace *space, size_t *nodes, size_t *coarse_dim);

/**
 * Copies the basis matrix `R` (nodes × coarse_dim, column-major).
 */
enum MsdStatus msd_space_basis(const struct MsdSpace *space, double *out, size_t len);

/**
 * Nodal field `R c` for coarse coefficients `c`.
 */
enum MsdStatus msd_space_prolong(const struct MsdSpace *space,
                                 const double *coeffs,
                                 size_t coeffs_len,
                                 double *out,
                                 size_t out_len);

void msd_space_free(struct MsdSpace *space);

/**
 * Greedy interpolation model for an `n × m` column-major basis.
 */
enum MsdStatus msd_deim_new(const double *basis, size_t n, size_t m, struct MsdDeim **out);

/**
 * Writes the `m` interpolation indices.
 */
enum MsdStatus msd_deim_points(const struct MsdDeim *model, size_t *out, size_t len);

/**
 * `U (PᵀU)⁻¹ Pᵀ f` for a full vector `f` of length `n`.
 */
enum MsdStatus msd_deim_approximate(const struct MsdDeim *model,
                                    const double *f,
                                    size_t n,
                                    double *out);

/**
 * Online update from `cols` full evaluations (`n × cols`, column-major).
 * `accepted` receives 0 when the update was rejected and the returned
 * model equals the input.
 */
enum MsdStatus msd_deim_online_update(const struct MsdDeim *model,
                                      const double *f,
                                      size_t n,
                                      size_t cols,
                                      int32_t *accepted,
                                      struct MsdDeim **out);

void msd_deim_free(struct MsdDeim *model);

/**
 * Parses a TOML experiment description and runs it to completion.
 */
enum MsdStatus msd_run_from_toml(const char *config, struct MsdRun **out);

/**
 * Writes the result files into `dir`.
 */
enum MsdStatus msd_run_write(const struct MsdRun *run, const char *dir);

/**
 * Mean relative L2 error of `mode` at time level `step`.
 */
enum MsdStatus msd_run_mean_error(const struct MsdRun *run,
                                  const char *mode,
                                  size_t step,
                                  double *out);

void msd_run_free(struct MsdRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSDEIM_H */
