#ifndef CAUSAL_DIALOG_H
#define CAUSAL_DIALOG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CdStatus {
  CD_STATUS_OK = 0,
  CD_STATUS_NULL_POINTER = 1,
  CD_STATUS_INVALID_UTF8 = 2,
  CD_STATUS_SCHEMA = 3,
  CD_STATUS_IO = 4,
  CD_STATUS_MISSING_CHECKPOINT = 5,
  CD_STATUS_INVALID_ARGUMENT = 6,
  CD_STATUS_INTERNAL = 7,
} CdStatus;

/**
 * A trained CI or dependence classifier.
 */
typedef struct CdClassifier CdClassifier;

/**
 * A loaded corpus with its annotated pairs.
 */
typedef struct CdCorpus CdCorpus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into this library on the same thread.
 */
const char *cd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cd_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void cd_string_free(char *s);

/**
 * Loads a corpus JSONL file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CdStatus cd_corpus_load(const char *path, struct CdCorpus **out);

/**
 * Parses corpus JSONL from memory.
 *
 * # Safety
 * `jsonl` must be a NUL-terminated string; `out` must be writable.
 */
enum CdStatus cd_corpus_parse(const char *jsonl, struct CdCorpus **out);

/**
 * Samples a synthetic corpus with gold annotations from the default world of
 * `world_seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CdStatus cd_corpus_synthesize(size_t n_dialogues,
                                   uint64_t seed,
                                   uint64_t world_seed,
                                   struct CdCorpus **out);

/**
 * # Safety
 * `corpus` must come from this library and not have been freed. Null is ignored.
 */
void cd_corpus_free(struct CdCorpus *corpus);

/**
 * # Safety
 * `corpus` must be a valid handle; `out` must be writable.
 */
enum CdStatus cd_corpus_counts(const struct CdCorpus *corpus, size_t *n_dialogues, size_t *n_pairs);

/**
 * Corpus statistics as a JSON object.
 *
 * # Safety
 * `corpus` must be a valid handle; `out_json` must be writable.
 */
enum CdStatus cd_corpus_stats_json(const struct CdCorpus *corpus, char **out_json);

/**
 * Loads a classifier checkpoint directory with an embedded encoder.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum CdStatus cd_classifier_load(const char *dir, struct CdClassifier **out);

/**
 * # Safety
 * `clf` must come from this library and not have been freed. Null is ignored.
 */
void cd_classifier_free(struct CdClassifier *clf);

/**
 * Probability that `response` depends on `u_j` given `u_prev`.
 *
 * # Safety
 * Strings must be NUL-terminated; `clf` a valid handle; `out` writable.
 */
enum CdStatus cd_classifier_score(const struct CdClassifier *clf,
                                  const char *u_j,
                                  const char *u_prev,
                                  const char *response,
                                  double *out);

/**
 * Cause predictions for every annotated pair of `corpus`, as JSONL
 * (`{"dialogue_id","t","causes","p_star"}` per line).
 *
 * # Safety
 * Handles must be valid; `out_jsonl` writable.
 */
enum CdStatus cd_identify_jsonl(const struct CdClassifier *clf,
                                const struct CdCorpus *corpus,
                                double threshold,
                                char **out_jsonl);

/**
 * Mean of BLEU-1..4 of whitespace-tokenized `hypothesis` against one reference.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` writable.
 */
enum CdStatus cd_average_bleu(const char *hypothesis, const char *reference, double *out);

/**
 * Cohen's kappa of two binary label arrays of length `n` (non-zero = true).
 *
 * # Safety
 * `a` and `b` must point to `n` readable bytes; `out` writable.
 */
enum CdStatus cd_cohen_kappa(const uint8_t *a, const uint8_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSAL_DIALOG_H */
