#ifndef TOPOMAP_H
#define TOPOMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum TopoStatus {
  TOPO_STATUS_OK = 0,
  TOPO_STATUS_NULL_POINTER = 1,
  TOPO_STATUS_INVALID_ARGUMENT = 2,
  TOPO_STATUS_IO = 3,
  TOPO_STATUS_PARSE = 4,
  TOPO_STATUS_EMPTY_REFERENCE = 5,
  TOPO_STATUS_PANIC = 6,
} TopoStatus;

// Incremental engine handle.
typedef struct TopoEngine TopoEngine;

// Topology graph handle.
typedef struct TopoGraph TopoGraph;

// Occupancy grid handle.
typedef struct TopoGrid TopoGrid;

// Pipeline and engine parameters; start from [`topo_params_default`].
typedef struct TopoParams {
  double sigma;
  double laplacian_scale;
  double binarize_threshold;
  uint64_t distmap_every;
  uint64_t skeleton_every;
  uint64_t graph_every;
  int32_t protected_layer_width;
  int32_t connect_radius;
  // Meters per pixel for projecting scans.
  double resolution;
  double origin_x;
  double origin_y;
} TopoParams;

// Inclusive pixel rectangle.
typedef struct TopoRegion {
  int32_t x0;
  int32_t y0;
  int32_t x1;
  int32_t y1;
} TopoRegion;

// Vertex error summary. Undefined averages are NaN.
typedef struct TopoVertexError {
  double avg_dist;
  double pct_within_1;
  size_t outliers;
  size_t total;
} TopoVertexError;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *topo_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void topo_string_free(char *s);

// Default parameters.
struct TopoParams topo_params_default(void);

// Loads a grayscale PGM or PNG map (with optional `.meta` sidecar).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum TopoStatus topo_grid_load(const char *path,
                               uint8_t occupied_below,
                               uint8_t free_above,
                               struct TopoGrid **out);

// Builds a grid from `width * height` row-major cells: 0 free,
// 1 occupied, 2 unknown.
//
// # Safety
// `cells` must point to `width * height` bytes; `out` must be writable.
enum TopoStatus topo_grid_from_cells(size_t width,
                                     size_t height,
                                     const uint8_t *cells,
                                     double resolution,
                                     double origin_x,
                                     double origin_y,
                                     struct TopoGrid **out);

// Writes the grid size.
//
// # Safety
// `grid` must be a live handle; outputs must be writable.
enum TopoStatus topo_grid_size(const struct TopoGrid *grid, size_t *width, size_t *height);

// # Safety
// `grid` must be null or a handle not yet freed.
void topo_grid_free(struct TopoGrid *grid);

// Batch pipeline: distance map, skeleton, graph. `params` may be null for
// defaults.
//
// # Safety
// `grid` must be a live handle; `params` null or valid; `out` writable.
enum TopoStatus topo_build_graph(const struct TopoGrid *grid,
                                 const struct TopoParams *params,
                                 struct TopoGraph **out);

// Vertex count; 0 for null.
//
// # Safety
// `graph` must be null or a live handle.
size_t topo_graph_vertex_count(const struct TopoGraph *graph);

// Edge count; 0 for null.
//
// # Safety
// `graph` must be null or a live handle.
size_t topo_graph_edge_count(const struct TopoGraph *graph);

// Serializes the graph to JSON. Free the result with [`topo_string_free`].
//
// # Safety
// `graph` must be a live handle; `out` writable.
enum TopoStatus topo_graph_to_json(const struct TopoGraph *graph, char **out);

// Parses a graph from JSON.
//
// # Safety
// `json` must be NUL-terminated; `out` writable.
enum TopoStatus topo_graph_from_json(const char *json, struct TopoGraph **out);

// # Safety
// `graph` must be null or a handle not yet freed.
void topo_graph_free(struct TopoGraph *graph);

// Nearest-vertex error of `candidate` against `reference`, optionally
// restricted to `region` (null for all vertices).
//
// # Safety
// Graph handles must be live; `region` null or valid; `out` writable.
enum TopoStatus topo_vertex_error(const struct TopoGraph *candidate,
                                  const struct TopoGraph *reference,
                                  double outlier_threshold,
                                  const struct TopoRegion *region,
                                  struct TopoVertexError *out);

// New incremental engine. `params` may be null for defaults.
//
// # Safety
// `params` null or valid; `out` writable.
enum TopoStatus topo_engine_new(const struct TopoParams *params, struct TopoEngine **out);

// Ingests one scan. `ranges` holds `count` beams; values above
// `range_max` (or infinite) mean no return. Frame ids must increase.
//
// # Safety
// `engine` must be a live handle; `ranges` must point to `count` doubles.
enum TopoStatus topo_engine_ingest(struct TopoEngine *engine,
                                   uint64_t frame_id,
                                   double x,
                                   double y,
                                   double theta,
                                   double angle_min,
                                   double angle_increment,
                                   double range_max,
                                   const double *ranges,
                                   size_t count);

// Ingests one line of the text frame-log format.
//
// # Safety
// `engine` must be a live handle; `line` NUL-terminated.
enum TopoStatus topo_engine_ingest_line(struct TopoEngine *engine, const char *line);

// Runs every loop once so nothing stays pending.
//
// # Safety
// `engine` must be a live handle.
enum TopoStatus topo_engine_flush(struct TopoEngine *engine);

// Frames ingested so far; 0 for null.
//
// # Safety
// `engine` must be null or a live handle.
uint64_t topo_engine_frame_count(const struct TopoEngine *engine);

// Copies the engine's current graph (canonical ids) into a new handle.
//
// # Safety
// `engine` must be a live handle; `out` writable.
enum TopoStatus topo_engine_graph(const struct TopoEngine *engine, struct TopoGraph **out);

// # Safety
// `engine` must be null or a handle not yet freed.
void topo_engine_free(struct TopoEngine *engine);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOMAP_H */
