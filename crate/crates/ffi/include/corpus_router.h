#ifndef CORPUS_ROUTER_H
#define CORPUS_ROUTER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Pathway universe used when parsing labels.
typedef enum CrScheme {
  CR_SCHEME_DEFAULT7 = 0,
  CR_SCHEME_EXTENDED = 1,
} CrScheme;

// Result code of every fallible call.
typedef enum CrStatus {
  CR_STATUS_OK = 0,
  CR_STATUS_NULL_POINTER = 1,
  CR_STATUS_INVALID_ARGUMENT = 2,
  CR_STATUS_IO = 3,
  CR_STATUS_FORMAT = 4,
  CR_STATUS_DIMENSION_MISMATCH = 5,
  CR_STATUS_UNKNOWN_LABEL = 6,
  CR_STATUS_BUFFER_TOO_SMALL = 7,
  CR_STATUS_PANIC = 8,
} CrStatus;

// A loaded corpus.
typedef struct CrCorpus CrCorpus;

// Ranked results of one search.
typedef struct CrResults CrResults;

// A loaded trained router.
typedef struct CrRouter CrRouter;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into this library on the same thread.
const char *cr_last_error(void);

// Number of pathways in `scheme`, `none` included. Bit `i` of a pathway
// mask refers to the `i`-th pathway in canonical order.
size_t cr_scheme_size(enum CrScheme scheme);

// Writes the hashed embedding of `text` into `out[0..dim]`.
//
// # Safety
// `text` must be a NUL-terminated string and `out` must hold `dim` doubles.
enum CrStatus cr_hash_embed(const char *text, size_t dim, uint64_t seed, double *out);

// Parses a `+`-joined label into a pathway bit mask.
//
// # Safety
// `label` must be a NUL-terminated string and `out_mask` a valid pointer.
enum CrStatus cr_pathway_parse(const char *label, enum CrScheme scheme, uint32_t *out_mask);

// Loads a corpus from its manifest file.
//
// # Safety
// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
enum CrStatus cr_corpus_load(const char *manifest_path, struct CrCorpus **out);

// # Safety
// `corpus` must come from [`cr_corpus_load`] or be null.
void cr_corpus_free(struct CrCorpus *corpus);

// Item count, or 0 for a null handle.
//
// # Safety
// `corpus` must be a live handle or null.
size_t cr_corpus_len(const struct CrCorpus *corpus);

// Vector dimension, or 0 for a null handle.
//
// # Safety
// `corpus` must be a live handle or null.
size_t cr_corpus_dim(const struct CrCorpus *corpus);

// Exact top-`k` search with a query of `dim` floats.
//
// # Safety
// `corpus` must be live, `query` must hold `dim` floats and `out` must be valid.
enum CrStatus cr_corpus_search(const struct CrCorpus *corpus,
                               const float *query,
                               size_t dim,
                               size_t k,
                               struct CrResults **out);

// # Safety
// `results` must be a live handle or null.
size_t cr_results_len(const struct CrResults *results);

// Id of the entry at `rank` (0-based), or null when out of range. Owned by
// the results handle.
//
// # Safety
// `results` must be a live handle or null.
const char *cr_results_id(const struct CrResults *results, size_t rank);

// Score of the entry at `rank`, or NaN when out of range.
//
// # Safety
// `results` must be a live handle or null.
double cr_results_score(const struct CrResults *results, size_t rank);

// # Safety
// `results` must come from [`cr_corpus_search`] or be null.
void cr_results_free(struct CrResults *results);

// Loads a trained router model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum CrStatus cr_router_load(const char *path, struct CrRouter **out);

// Overrides the decision threshold of a loaded router.
//
// # Safety
// `router` must be a live handle.
enum CrStatus cr_router_set_threshold(struct CrRouter *router, double threshold);

// Routes `query`. Writes the selected pathways as a bit mask over the
// router's scheme. When `scores` is not null it receives one probability
// per pathway of the scheme (`scores_len` must be at least
// [`cr_scheme_size`]); pathways without a score get NaN.
//
// # Safety
// `router` must be live, `query` NUL-terminated, `out_mask` valid, and
// `scores` either null or valid for `scores_len` doubles.
enum CrStatus cr_router_route(const struct CrRouter *router,
                              const char *query,
                              uint32_t *out_mask,
                              double *scores,
                              size_t scores_len);

// # Safety
// `router` must come from [`cr_router_load`] or be null.
void cr_router_free(struct CrRouter *router);

// Smallest margin at which the unified-retrieval bound drops to `r`.
//
// # Safety
// `out` must be a valid pointer.
enum CrStatus cr_alpha_threshold(uint64_t s, uint64_t r_size, double r, double sigma, double *out);

// Upper bound on the probability that unified retrieval ranks an item from
// the distractor corpus first.
//
// # Safety
// `out` must be a valid pointer.
enum CrStatus cr_chernoff_bound(double alpha,
                                double sigma,
                                uint64_t s,
                                uint64_t r_size,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORPUS_ROUTER_H */
