#ifndef RYDENSE_H
#define RYDENSE_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from the rydense-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum RydStatus {
  // Success; output parameters hold valid results.
  RYD_STATUS_OK = 0,
  // A required pointer argument was `NULL`.
  RYD_STATUS_NULL_ARGUMENT = 1,
  // An input lies outside the physical or mathematical domain.
  RYD_STATUS_DOMAIN = 2,
  // A numerical procedure failed to reach its target.
  RYD_STATUS_NUMERICAL = 3,
  // Invalid configuration values.
  RYD_STATUS_CONFIG = 4,
  // Malformed dataset contents.
  RYD_STATUS_DATASET = 5,
  // An I/O failure.
  RYD_STATUS_IO = 6,
  // An internal panic was caught at the boundary.
  RYD_STATUS_INTERNAL = 7,
} RydStatus;

// Opaque set of avoided-crossing channels.
typedef struct RydChannelSet RydChannelSet;

// Opaque detector conversion between signal and density.
typedef struct RydConversion RydConversion;

// Opaque onset-radius scaling law for a field ramp.
typedef struct RydSweep RydSweep;

// Conversion-fit result. For a linear fit `g1` and `g1_sigma` are zero.
typedef struct RydConversionFit {
  double g0_cm3_per_vs;
  double g1_cm3_per_vs2;
  double g0_sigma;
  double g1_sigma;
  double rss;
  double reduced_chi_square;
  size_t n_points;
  size_t iterations;
  bool converged;
} RydConversionFit;

// Gain-noise fit result.
typedef struct RydNoiseFit {
  // Fitted α in (nV·s)^(-1/2) and its 1-sigma uncertainty.
  double alpha_per_sqrt_nvs;
  double alpha_sigma;
  // Fitted β_eff in (nV·s)^(-1) and its 1-sigma uncertainty.
  double beta_eff_per_nvs;
  double beta_sigma;
  // Upper bound on the shot-to-shot relative volume fluctuation.
  double max_volume_fluctuation;
  size_t n_bins_used;
  size_t n_bins_dropped;
  size_t iterations;
  bool converged;
} RydNoiseFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread, or `NULL` if
// none has occurred. Valid until the next failing call on this thread.
const char *ryd_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ryd_version(void);

// Static name of a status code, e.g. `"domain"`.
const char *ryd_status_name(enum RydStatus status);

// Creates the default nine-channel sublevel set (flat `Σ f⁶ = 2/3`).
struct RydChannelSet *ryd_channel_set_new_sublevels(void);

// Creates a set holding only the polar channel (anisotropic).
struct RydChannelSet *ryd_channel_set_new_polar(void);

// Releases a channel set. `NULL` is ignored.
void ryd_channel_set_free(struct RydChannelSet *set);

// `Σ f⁶(θ)` of the set at quantisation angle `theta_rad`.
enum RydStatus ryd_channel_set_sum_f6(const struct RydChannelSet *set,
                                      double theta_rad,
                                      double *out);

// Creates a sweep scaling with onset radius `r0_ref_um` (µm) at reference
// ramp speed `f_prime_ref` (V/cm/µs). Writes the handle to `out`.
enum RydStatus ryd_sweep_new(double r0_ref_um, double f_prime_ref, struct RydSweep **out);

// Creates the default sweep scaling (polar effective radius 13.5 µm at
// 1 V/cm/µs).
struct RydSweep *ryd_sweep_new_default(void);

// Releases a sweep scaling. `NULL` is ignored.
void ryd_sweep_free(struct RydSweep *sweep);

// Onset radius in µm at ramp speed `f_prime` (V/cm/µs).
enum RydStatus ryd_sweep_r0_um(const struct RydSweep *sweep, double f_prime, double *out);

// Aggregate pair-transition probability at separation `r_um` and angle
// `theta_rad` for a sweep at `f_prime`.
enum RydStatus ryd_transition_probability(const struct RydSweep *sweep,
                                          double f_prime,
                                          double r_um,
                                          double theta_rad,
                                          const struct RydChannelSet *set,
                                          double *out);

// Expected per-atom transition fraction at gas density `eta_cm3` (cm⁻³).
enum RydStatus ryd_expected_transition(const struct RydSweep *sweep,
                                       double f_prime,
                                       double eta_cm3,
                                       const struct RydChannelSet *set,
                                       double *out);

// Expected number of transferred pairs in a cloud of `volume_cm3`.
enum RydStatus ryd_np_count(const struct RydSweep *sweep,
                            double f_prime,
                            double eta_cm3,
                            double volume_cm3,
                            const struct RydChannelSet *set,
                            double *out);

// Nearest-neighbour survival kernel `K(w) = ∫₀^∞ exp(-t - w t⁻²) dt`.
enum RydStatus ryd_k_integral(double w, double *out);

// Meijer-G value `G^{3,0}_{0,3}(z | -; 0, 1/2, 1) = √π · K(4z)`.
enum RydStatus ryd_meijer_g_3003(double z, double *out);

// Creates a linear conversion `η = g0 · S`. Writes the handle to `out`.
enum RydStatus ryd_conversion_new_linear(double g0_cm3_per_vs, struct RydConversion **out);

// Creates a quadratic conversion `η = g0 · S + g1 · S²`. Writes the handle
// to `out`.
enum RydStatus ryd_conversion_new_quadratic(double g0_cm3_per_vs,
                                            double g1_cm3_per_vs2,
                                            struct RydConversion **out);

// Releases a conversion. `NULL` is ignored.
void ryd_conversion_free(struct RydConversion *conversion);

// Density in cm⁻³ for a total signal in nV·s.
enum RydStatus ryd_conversion_density(const struct RydConversion *conversion,
                                      double signal_nvs,
                                      double *out);

// Signal in nV·s that a density in cm⁻³ produces (inverse conversion).
enum RydStatus ryd_conversion_signal(const struct RydConversion *conversion,
                                     double eta_cm3,
                                     double *out);

// Predicted transferred-state signal (nV·s) for a measured total signal.
enum RydStatus ryd_predict_np_signal(const struct RydConversion *conversion,
                                     double s_total_nvs,
                                     const struct RydSweep *sweep,
                                     double f_prime,
                                     const struct RydChannelSet *set,
                                     double *out);

// Signal-to-noise ratio `g/δg = αS/√(β_eff S² + S)` of a gated signal in
// nV·s under the Polya gain-noise model.
enum RydStatus ryd_polya_snr(double alpha_per_sqrt_nvs,
                             double beta_eff_per_nvs,
                             double s_nvs,
                             double *out);

// Relative signal variance `(β_eff + 1/S)/α²` at a signal in nV·s.
enum RydStatus ryd_polya_relative_variance(double alpha_per_sqrt_nvs,
                                           double beta_eff_per_nvs,
                                           double s_nvs,
                                           double *out);

// Upper bound `√β_eff / α` on the shot-to-shot relative volume
// fluctuation compatible with the noise figures.
enum RydStatus ryd_polya_max_volume_fluctuation(double alpha_per_sqrt_nvs,
                                                double beta_eff_per_nvs,
                                                double *out);

// Fits a conversion model to parallel arrays of per-shot total and
// transferred signals (nV·s) and ramp speeds (V/cm/µs).
//
// `quadratic` selects the model shape; `init_g0` seeds the minimiser
// (pass a rough order-of-magnitude value, e.g. `1e15`).
enum RydStatus ryd_fit_conversion(const double *s_total_nvs,
                                  const double *s_np_nvs,
                                  const double *f_prime,
                                  size_t n_points,
                                  bool quadratic,
                                  double init_g0,
                                  const struct RydSweep *sweep,
                                  const struct RydChannelSet *set,
                                  struct RydConversionFit *out);

// Fits the Polya gain-noise parameters from parallel per-shot arrays of
// ramp speeds (V/cm/µs) and the two gated signals (nV·s), given the
// detector gain in cm⁻³/(V·s).
//
// `bins_per_ramp == 0` selects the default binning.
enum RydStatus ryd_fit_noise(const double *f_prime,
                             const double *s_np_nvs,
                             const double *s_r_nvs,
                             size_t n_shots,
                             double gain_cm3_per_vs,
                             size_t bins_per_ramp,
                             const struct RydSweep *sweep,
                             const struct RydChannelSet *set,
                             struct RydNoiseFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RYDENSE_H */
