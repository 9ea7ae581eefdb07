#ifndef NEOINR_H
#define NEOINR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call. Codes 2–4 match the CLI exit codes.
typedef enum NeoinrStatus {
  NEOINR_STATUS_OK = 0,
  NEOINR_STATUS_NULL_POINTER = 1,
  NEOINR_STATUS_CONFIG = 2,
  NEOINR_STATUS_DATA = 3,
  NEOINR_STATUS_NUMERIC = 4,
  NEOINR_STATUS_INVALID_ARGUMENT = 5,
  NEOINR_STATUS_PANIC = 6,
} NeoinrStatus;

// A trained network with its latent table, if the checkpoint had one.
typedef struct NeoinrModel NeoinrModel;

// An image or volume with spacing.
typedef struct NeoinrVolume NeoinrVolume;

// Latent-inversion settings. `pixel_fraction <= 0` means every voxel.
typedef struct NeoinrInversionParams {
  uint64_t steps;
  double lr;
  double pixel_fraction;
  double fg_bg_ratio;
  size_t micro_batch_size;
  uint64_t seed;
} NeoinrInversionParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *neoinr_version(void);

// Copy the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `cap > 0`). Returns the full length
// including the terminator.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t neoinr_last_error(char *buf, size_t cap);

// Defaults matching the desk-scale evaluation.
struct NeoinrInversionParams neoinr_inversion_params_default(void);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum NeoinrStatus neoinr_model_load(const char *path, struct NeoinrModel **out);

// # Safety
// `model` must be null or a handle from [`neoinr_model_load`] not yet freed.
void neoinr_model_free(struct NeoinrModel *model);

// Latent dimension λ, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t neoinr_model_latent_dim(const struct NeoinrModel *model);

// Spatial dimensionality (2 or 3), or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t neoinr_model_spatial_dims(const struct NeoinrModel *model);

// Trainable network parameters, latents excluded.
//
// # Safety
// `model` must be null or a live handle.
size_t neoinr_model_param_count(const struct NeoinrModel *model);

// Number of latent-table entries (0 when the checkpoint has none).
//
// # Safety
// `model` must be null or a live handle.
size_t neoinr_model_latent_count(const struct NeoinrModel *model);

// Mean of the latent-table entries into `out[0..len]`, `len` = λ.
//
// # Safety
// `model` must be a live handle; `out` must hold `len` floats.
enum NeoinrStatus neoinr_model_average_latent(const struct NeoinrModel *model,
                                              float *out,
                                              size_t len);

// Evaluate the network at `n_points` coordinates (row-major, `d` values
// each, in [-1, 1]) at age `pma_weeks`. Writes `n_points` values.
//
// # Safety
// `coords` holds `n_points * d` floats, `latent` holds `latent_len`
// floats, `out` holds `n_points` floats.
enum NeoinrStatus neoinr_model_forward(const struct NeoinrModel *model,
                                       const float *coords,
                                       size_t n_points,
                                       double pma_weeks,
                                       const float *latent,
                                       size_t latent_len,
                                       float *out);

// Build a volume from `ndim` sizes, `ndim` spacings (cm) and
// `prod(shape)` intensities in row-major order.
//
// # Safety
// Pointers must reference arrays of the stated lengths; `out` writable.
enum NeoinrStatus neoinr_volume_new(const size_t *shape,
                                    const float *spacing,
                                    size_t ndim,
                                    const float *data,
                                    struct NeoinrVolume **out);

// Read a `.ndv` volume.
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum NeoinrStatus neoinr_volume_load(const char *path, struct NeoinrVolume **out);

// Write a `.ndv` volume.
//
// # Safety
// `volume` must be a live handle; `path` NUL-terminated.
enum NeoinrStatus neoinr_volume_save(const struct NeoinrVolume *volume, const char *path);

// # Safety
// `volume` must be null or a live handle.
void neoinr_volume_free(struct NeoinrVolume *volume);

// Number of voxels, or 0 for a null handle.
//
// # Safety
// `volume` must be null or a live handle.
size_t neoinr_volume_len(const struct NeoinrVolume *volume);

// Number of axes, or 0 for a null handle.
//
// # Safety
// `volume` must be null or a live handle.
size_t neoinr_volume_ndim(const struct NeoinrVolume *volume);

// Copy the axis sizes into `out[0..cap]`.
//
// # Safety
// `volume` must be a live handle; `out` must hold `cap` values.
enum NeoinrStatus neoinr_volume_shape(const struct NeoinrVolume *volume, size_t *out, size_t cap);

// Copy the intensities into `out[0..len]`; `len` must equal the voxel count.
//
// # Safety
// `volume` must be a live handle; `out` must hold `len` floats.
enum NeoinrStatus neoinr_volume_data(const struct NeoinrVolume *volume, float *out, size_t len);

// Invert `input` at `t1_weeks` with frozen weights, then render the found
// latent at `t1_weeks` (reconstruction) and `t2_weeks` (prediction).
// `params` may be null for the defaults.
//
// # Safety
// Handles must be live; `params` null or valid; outputs writable.
enum NeoinrStatus neoinr_predict(const struct NeoinrModel *model,
                                 const struct NeoinrVolume *input,
                                 double t1_weeks,
                                 double t2_weeks,
                                 const struct NeoinrInversionParams *params,
                                 struct NeoinrVolume **out_reconstruction,
                                 struct NeoinrVolume **out_prediction);

// Peak signal-to-noise ratio (dB, peak 1) between two volumes of equal shape.
//
// # Safety
// Handles must be live; `out` writable.
enum NeoinrStatus neoinr_psnr(const struct NeoinrVolume *a,
                              const struct NeoinrVolume *b,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEOINR_H */
