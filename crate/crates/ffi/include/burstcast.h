#ifndef BURSTCAST_H
#define BURSTCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum BcStatus {
  BC_STATUS_OK = 0,
  BC_STATUS_NULL_POINTER = 1,
  BC_STATUS_INVALID_ARGUMENT = 2,
  BC_STATUS_NUMERICAL = 3,
  BC_STATUS_OUT_OF_RANGE = 4,
  BC_STATUS_PANIC = 5,
} BcStatus;

typedef struct BcBursts BcBursts;

typedef struct BcForecast BcForecast;

/**
 * Weekly count series.
 */
typedef struct BcSeries BcSeries;

typedef struct BcSummary {
  size_t n_weeks;
  uint64_t total_events;
  size_t zero_weeks;
  double mean;
  double variance;
  /**
   * NaN when the mean is zero.
   */
  double dispersion_index;
} BcSummary;

typedef struct BcBssmConfig {
  size_t chains;
  size_t iterations;
  size_t warmup;
  uint64_t seed;
  double credible_level;
} BcBssmConfig;

/**
 * One forecast week. Undefined values are NaN and `defined` is false.
 */
typedef struct BcForecastRow {
  size_t week;
  uint64_t actual;
  bool defined;
  double point;
  double median;
  double lower;
  double upper;
} BcForecastRow;

typedef struct BcAccuracy {
  double mae;
  double mse;
  double rmse;
  double mape_accuracy;
  double smape_accuracy;
  size_t n_weeks;
  size_t n_scored;
  size_t n_excluded_zero_actual;
} BcAccuracy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The string
 * is owned by the library and valid until the next failing call here.
 */
const char *bc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bc_version(void);

/**
 * Copy `n` counts into a new series handle.
 *
 * # Safety
 * `counts` must point to `n` readable values (may be NULL when `n` is 0)
 * and `out` must be writable.
 */
enum BcStatus bc_series_new(const uint64_t *counts, size_t n, struct BcSeries **out);

/**
 * # Safety
 * `series` must be NULL or a handle from [`bc_series_new`] not yet freed.
 */
void bc_series_free(struct BcSeries *series);

/**
 * # Safety
 * `series` must be a live handle and `out` writable.
 */
enum BcStatus bc_series_summarize(const struct BcSeries *series, struct BcSummary *out);

/**
 * Kleinberg burst levels with rate ratio `s` and transition cost `gamma`.
 *
 * # Safety
 * `series` must be a live handle and `out` writable.
 */
enum BcStatus bc_annotate_bursts(const struct BcSeries *series,
                                 double s,
                                 double gamma,
                                 struct BcBursts **out);

/**
 * Number of annotated weeks; 0 for NULL.
 *
 * # Safety
 * `bursts` must be NULL or a live handle.
 */
size_t bc_bursts_len(const struct BcBursts *bursts);

/**
 * Copy the per-week levels (1 = no burst) into `levels`, which holds `cap`
 * entries and must hold at least [`bc_bursts_len`].
 *
 * # Safety
 * `bursts` must be a live handle and `levels` must point to `cap` writable values.
 */
enum BcStatus bc_bursts_levels(const struct BcBursts *bursts, uint32_t *levels, size_t cap);

/**
 * # Safety
 * `bursts` must be NULL or a live handle.
 */
void bc_bursts_free(struct BcBursts *bursts);

/**
 * Default sampler settings.
 *
 * # Safety
 * `out` must be writable.
 */
enum BcStatus bc_bssm_config_default(struct BcBssmConfig *out);

/**
 * Fit the negative-binomial state space model and produce one-week-ahead
 * forecasts for every week. `config` may be NULL for the defaults.
 *
 * # Safety
 * `series` must be a live handle, `config` NULL or readable, `out` writable.
 */
enum BcStatus bc_bssm_forecast(const struct BcSeries *series,
                               const struct BcBssmConfig *config,
                               struct BcForecast **out);

/**
 * Number of forecast weeks; 0 for NULL.
 *
 * # Safety
 * `forecast` must be NULL or a live handle.
 */
size_t bc_forecast_len(const struct BcForecast *forecast);

/**
 * Row `index` (0-based; week `index + 1`).
 *
 * # Safety
 * `forecast` must be a live handle and `out` writable.
 */
enum BcStatus bc_forecast_row(const struct BcForecast *forecast,
                              size_t index,
                              struct BcForecastRow *out);

/**
 * # Safety
 * `forecast` must be NULL or a live handle.
 */
void bc_forecast_free(struct BcForecast *forecast);

/**
 * Accuracy of `predicted` against `actual` over `n` weeks. NaN predictions
 * mark undefined weeks and are skipped; weeks with zero actual are left
 * out of MAPE and SMAPE.
 *
 * # Safety
 * `actual` and `predicted` must each point to `n` readable values and `out`
 * must be writable.
 */
enum BcStatus bc_accuracy(const uint64_t *actual,
                          const double *predicted,
                          size_t n,
                          struct BcAccuracy *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BURSTCAST_H */
