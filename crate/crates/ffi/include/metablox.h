#ifndef METABLOX_H
#define METABLOX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MbxStatus {
  MBX_STATUS_OK = 0,
  MBX_STATUS_NULL_POINTER = 1,
  MBX_STATUS_INVALID_UTF8 = 2,
  MBX_STATUS_PARSE = 3,
  MBX_STATUS_INVALID_INPUT = 4,
  MBX_STATUS_CONFIG = 5,
  MBX_STATUS_IO = 6,
  MBX_STATUS_INTERNAL = 7,
} MbxStatus;

typedef enum MbxVariant {
  MBX_VARIANT_NDC = 0,
  MBX_VARIANT_DC = 1,
  MBX_VARIANT_PP_UNIFORM = 2,
  MBX_VARIANT_PP_NON_UNIFORM = 3,
} MbxVariant;

typedef struct MbxGraph MbxGraph;

typedef struct MbxPartition MbxPartition;

/**
 * Search settings for [`mbx_infer`] and [`mbx_metablox_json`].
 */
typedef struct MbxSearch {
  uint64_t seed;
  size_t sweeps;
  size_t restarts;
} MbxSearch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library defaults (1000 sweeps, 5 restarts, seed 0).
 */
struct MbxSearch mbx_search_default(void);

/**
 * Message of the last failed call on this thread ("" after a success).
 * The pointer stays valid until the next library call on this thread.
 */
const char *mbx_last_error(void);

/**
 * Parses a whitespace-separated edge list. With `strict`, self-loops and
 * parallel edges are errors; otherwise they are dropped.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` a writable pointer.
 */
enum MbxStatus mbx_graph_from_edge_list(const char *text, bool strict, struct MbxGraph **out);

/**
 * Builds a graph on nodes `0..num_nodes` from `num_edges` pairs
 * `(src[i], dst[i])`. Self-loops and repeated pairs are errors.
 *
 * # Safety
 * `src` and `dst` must hold `num_edges` elements; `out` must be writable.
 */
enum MbxStatus mbx_graph_from_edges(size_t num_nodes,
                                    const uint32_t *src,
                                    const uint32_t *dst,
                                    size_t num_edges,
                                    struct MbxGraph **out);

/**
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t mbx_graph_num_nodes(const struct MbxGraph *g);

/**
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t mbx_graph_num_edges(const struct MbxGraph *g);

/**
 * # Safety
 * `g` must be null or a handle not freed before.
 */
void mbx_graph_free(struct MbxGraph *g);

/**
 * Partition from arbitrary integer labels; labels are renumbered to
 * `0..B` in order of first appearance.
 *
 * # Safety
 * `labels` must hold `len` elements; `out` must be writable.
 */
enum MbxStatus mbx_partition_new(const uint32_t *labels, size_t len, struct MbxPartition **out);

/**
 * # Safety
 * `p` must be null or a live partition handle.
 */
size_t mbx_partition_len(const struct MbxPartition *p);

/**
 * # Safety
 * `p` must be null or a live partition handle.
 */
size_t mbx_partition_num_blocks(const struct MbxPartition *p);

/**
 * Copies the labels into `buf`, which must hold `mbx_partition_len(p)`
 * elements.
 *
 * # Safety
 * `buf` must be writable for `len` elements.
 */
enum MbxStatus mbx_partition_labels(const struct MbxPartition *p, uint32_t *buf, size_t len);

/**
 * # Safety
 * `p` must be null or a handle not freed before.
 */
void mbx_partition_free(struct MbxPartition *p);

/**
 * Description length (nats) of `g` under `p`.
 *
 * # Safety
 * Handles must be live; `out_total` must be writable.
 */
enum MbxStatus mbx_dl(const struct MbxGraph *g,
                      const struct MbxPartition *p,
                      enum MbxVariant variant,
                      double *out_total);

/**
 * Minimum-description-length partition search.
 *
 * # Safety
 * `g` must be live; the out pointers must be writable.
 */
enum MbxStatus mbx_infer(const struct MbxGraph *g,
                         enum MbxVariant variant,
                         struct MbxSearch search,
                         struct MbxPartition **out_partition,
                         double *out_sigma);

/**
 * Full relevance report of metadata `d` as a JSON string, to be released
 * with [`mbx_string_free`].
 *
 * # Safety
 * Handles must be live; `variants` must hold `num_variants` elements;
 * `out_json` must be writable.
 */
enum MbxStatus mbx_metablox_json(const struct MbxGraph *g,
                                 const struct MbxPartition *d,
                                 const enum MbxVariant *variants,
                                 size_t num_variants,
                                 size_t n_permutations,
                                 double alpha,
                                 struct MbxSearch search,
                                 char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not freed before.
 */
void mbx_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METABLOX_H */
