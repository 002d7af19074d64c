#ifndef BETLAB_H
#define BETLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum BetlabStatus {
  BETLAB_STATUS_OK = 0,
  BETLAB_STATUS_NULL_POINTER = 1,
  BETLAB_STATUS_DOMAIN = 2,
  BETLAB_STATUS_UNSATISFIABLE = 3,
  BETLAB_STATUS_NOT_STOCHASTIC = 4,
  BETLAB_STATUS_SHAPE = 5,
  BETLAB_STATUS_PRECONDITION = 6,
  BETLAB_STATUS_ZERO_PROBABILITY = 7,
  BETLAB_STATUS_CAP_EXCEEDED = 8,
  BETLAB_STATUS_SINGULAR = 9,
  BETLAB_STATUS_OTHER = 10,
  BETLAB_STATUS_PANIC = 11,
} BetlabStatus;

/**
 * Opaque finite MDP.
 */
typedef struct BetlabMdp BetlabMdp;

/**
 * Opaque finite POMDP.
 */
typedef struct BetlabPomdp BetlabPomdp;

typedef struct BetlabMarginConstants {
  double gamma;
  double c_gamma;
  /**
   * Meaningless when `t_infinite` is set.
   */
  double t_gamma;
  bool t_infinite;
} BetlabMarginConstants;

typedef struct BetlabBetOutcome {
  double value_pi;
  double value_star;
  double regret;
  double wrong_mass;
  double margin;
} BetlabBetOutcome;

/**
 * Summary of one bound check.
 */
typedef struct BetlabReport {
  double lhs;
  double rhs;
  double slack;
  double delta_bar;
  bool satisfied;
  bool vacuous;
  /**
   * Number of failed assumptions.
   */
  size_t n_flags;
} BetlabReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *betlab_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into the library on the same thread.
 */
const char *betlab_last_error(void);

/**
 * `c(γ)` and `t_γ` for γ in (0, 1/2].
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_margin_constants(double gamma, struct BetlabMarginConstants *out);

/**
 * Value and regret of choosing branch L with probability `q`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_bet_regret(double u_l, double u_r, double q, struct BetlabBetOutcome *out);

/**
 * `Pr(Binomial(n, p) ≤ k)`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_binom_cdf(uint64_t n, double p, uint64_t k, double *out);

/**
 * Smallest `m` with `Pr(Binomial(n, p) ≤ m) ≥ 1/2`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_binom_median(uint64_t n, double p, uint64_t *out);

/**
 * Builds an MDP from a row-major `[s][a][s']` kernel and an initial
 * distribution. Rows must be stochastic.
 *
 * # Safety
 * `kernel` and `initial` must point to `kernel_len` and `initial_len`
 * readable doubles; `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_mdp_new(size_t n_states,
                                 size_t n_actions,
                                 const double *kernel,
                                 size_t kernel_len,
                                 const double *initial,
                                 size_t initial_len,
                                 struct BetlabMdp **out);

/**
 * Random MDP with Dirichlet(1) rows, seeded.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_mdp_random(size_t n_states,
                                    size_t n_actions,
                                    uint64_t seed,
                                    struct BetlabMdp **out);

/**
 * Number of states, or 0 for a null handle.
 *
 * # Safety
 * `mdp` must be null or a live handle.
 */
size_t betlab_mdp_n_states(const struct BetlabMdp *mdp);

/**
 * Number of actions, or 0 for a null handle.
 *
 * # Safety
 * `mdp` must be null or a live handle.
 */
size_t betlab_mdp_n_actions(const struct BetlabMdp *mdp);

/**
 * `P[s][a][s_next]`.
 *
 * # Safety
 * `mdp` must be null or a live handle; `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_mdp_prob(const struct BetlabMdp *mdp,
                                  size_t s,
                                  size_t a,
                                  size_t s_next,
                                  double *out);

/**
 * Releases an MDP handle; null is ignored.
 *
 * # Safety
 * `mdp` must be null or a handle not yet freed.
 */
void betlab_mdp_free(struct BetlabMdp *mdp);

/**
 * Transition-error bound check for the optimal bettor with branch noise
 * `epsilon`, `n` attempts per goal and margin threshold `gamma`.
 *
 * # Safety
 * `mdp` must be null or a live handle; `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_verify_thm1(const struct BetlabMdp *mdp,
                                     double epsilon,
                                     uint64_t n,
                                     double gamma,
                                     struct BetlabReport *out);

/**
 * Builds a POMDP from row-major `[x][a][x']` transitions, `[x][o]`
 * observations and an initial distribution. Rows must be stochastic.
 *
 * # Safety
 * Each table pointer must be readable for its length; `out` must be null or
 * valid for writes.
 */
enum BetlabStatus betlab_pomdp_new(size_t n_latent,
                                   size_t n_actions,
                                   size_t n_obs,
                                   const double *transition,
                                   size_t transition_len,
                                   const double *observation,
                                   size_t observation_len,
                                   const double *initial,
                                   size_t initial_len,
                                   struct BetlabPomdp **out);

/**
 * The cue/alias environment whose cue predicts the hidden bit with
 * probability `bias`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BetlabStatus betlab_pomdp_cue_alias(double bias, struct BetlabPomdp **out);

/**
 * Releases a POMDP handle; null is ignored.
 *
 * # Safety
 * `pomdp` must be null or a handle not yet freed.
 */
void betlab_pomdp_free(struct BetlabPomdp *pomdp);

/**
 * Exact probability that a test succeeds after a history.
 *
 * The history has `n_history_obs` observations and one fewer actions. The
 * test runs `depth` actions; its event is `n_events` observation sequences
 * of length `depth`, concatenated in `events`.
 *
 * # Safety
 * Every array must be readable for the length implied above; `out` must be
 * null or valid for writes.
 */
enum BetlabStatus betlab_test_probability(const struct BetlabPomdp *pomdp,
                                          const size_t *history_obs,
                                          size_t n_history_obs,
                                          const size_t *history_actions,
                                          const size_t *test_actions,
                                          size_t depth,
                                          const size_t *events,
                                          size_t n_events,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BETLAB_H */
