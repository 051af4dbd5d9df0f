#ifndef ZOOMOUT_H
#define ZOOMOUT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum ZoStatus {
  ZO_STATUS_OK = 0,
  ZO_STATUS_INVALID_ARGUMENT = 1,
  ZO_STATUS_NULL_POINTER = 2,
  ZO_STATUS_IO = 3,
  ZO_STATUS_PARSE = 4,
  ZO_STATUS_DIMENSION = 5,
  // Eigensolver failure or a degenerate operator.
  ZO_STATUS_NUMERICAL = 6,
  // A Rust panic was caught at the boundary.
  ZO_STATUS_PANIC = 7,
} ZoStatus;

// Laplacian eigenbasis handle.
typedef struct ZoBasis ZoBasis;

// Functional map handle.
typedef struct ZoFunctionalMap ZoFunctionalMap;

// Triangle mesh handle.
typedef struct ZoMesh ZoMesh;

// Vertex-to-vertex map handle.
typedef struct ZoPointMap ZoPointMap;

// Refinement parameters; start from `zo_refine_config_default()`.
typedef struct ZoRefineConfig {
  size_t k0_m;
  size_t k0_n;
  size_t kmax_m;
  size_t kmax_n;
  size_t step;
  // Source samples for accelerated refinement; 0 uses every vertex.
  size_t sample_count;
  bool sample_target;
  bool rectangular;
  size_t rank_estimate_k;
  bool approximate_nn;
  uint64_t seed;
} ZoRefineConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *zo_version(void);

// Message of the most recent failure on this thread, or an empty string.
// Valid until the next failing call on the same thread.
const char *zo_last_error(void);

// Loads an OFF or OBJ mesh.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ZoStatus zo_mesh_load(const char *path, struct ZoMesh **out);

// Builds a mesh from `3 n_vertices` coordinates and `3 n_triangles` vertex
// indices.
//
// # Safety
// The arrays must hold the stated number of values and `out` must be valid.
enum ZoStatus zo_mesh_from_arrays(const double *vertices,
                                  size_t n_vertices,
                                  const uint32_t *triangles,
                                  size_t n_triangles,
                                  struct ZoMesh **out);

// Number of vertices, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t zo_mesh_vertex_count(const struct ZoMesh *mesh);

// # Safety
// `mesh` must be null or a handle not freed before.
void zo_mesh_free(struct ZoMesh *mesh);

// First `k` Laplace-Beltrami eigenpairs of `mesh`.
//
// # Safety
// `mesh` must be a live handle and `out` a valid pointer.
enum ZoStatus zo_basis_compute(const struct ZoMesh *mesh, size_t k, struct ZoBasis **out);

// Number of eigenpairs, or 0 for a null handle.
//
// # Safety
// `basis` must be null or a live handle.
size_t zo_basis_size(const struct ZoBasis *basis);

// Copies the eigenvalues into `out`, which must hold exactly
// `zo_basis_size(basis)` values.
//
// # Safety
// `basis` must be a live handle and `out` must hold `len` doubles.
enum ZoStatus zo_basis_eigenvalues(const struct ZoBasis *basis, double *out, size_t len);

// # Safety
// `basis` must be null or a handle not freed before.
void zo_basis_free(struct ZoBasis *basis);

// Functional map from a `rows × cols` row-major array.
//
// # Safety
// `data` must hold `rows * cols` doubles and `out` must be valid.
enum ZoStatus zo_fmap_from_data(const double *data,
                                size_t rows,
                                size_t cols,
                                struct ZoFunctionalMap **out);

// `k_m × k_n` functional map induced by a pointwise map from M to N.
//
// # Safety
// All handles must be live and `out` must be valid.
enum ZoStatus zo_fmap_from_pointmap(const struct ZoPointMap *map,
                                    const struct ZoBasis *basis_m,
                                    const struct ZoBasis *basis_n,
                                    size_t k_m,
                                    size_t k_n,
                                    struct ZoFunctionalMap **out);

// Writes the matrix size.
//
// # Safety
// `fmap` must be a live handle; `rows` and `cols` must be valid.
enum ZoStatus zo_fmap_shape(const struct ZoFunctionalMap *fmap, size_t *rows, size_t *cols);

// Copies the matrix in row-major order into `out` (exactly `rows * cols`
// values).
//
// # Safety
// `fmap` must be a live handle and `out` must hold `len` doubles.
enum ZoStatus zo_fmap_data(const struct ZoFunctionalMap *fmap, double *out, size_t len);

// Orthogonality energy summed over the principal blocks of size 1 to `k`.
//
// # Safety
// `fmap` must be a live handle and `out` valid.
enum ZoStatus zo_fmap_energy(const struct ZoFunctionalMap *fmap, size_t k, double *out);

// # Safety
// `fmap` must be null or a handle not freed before.
void zo_fmap_free(struct ZoFunctionalMap *fmap);

// Pointwise map with `len` targets, each below `n_target`.
//
// # Safety
// `targets` must hold `len` values and `out` must be valid.
enum ZoStatus zo_pointmap_from_data(const uint32_t *targets,
                                    size_t len,
                                    size_t n_target,
                                    struct ZoPointMap **out);

// Pointwise map recovered from a functional map by nearest neighbours in the
// spectral embedding.
//
// # Safety
// All handles must be live and `out` must be valid.
enum ZoStatus zo_pointmap_from_fmap(const struct ZoFunctionalMap *fmap,
                                    const struct ZoBasis *basis_m,
                                    const struct ZoBasis *basis_n,
                                    bool approximate_nn,
                                    struct ZoPointMap **out);

// Number of source vertices, or 0 for a null handle.
//
// # Safety
// `map` must be null or a live handle.
size_t zo_pointmap_len(const struct ZoPointMap *map);

// Copies the targets into `out` (exactly `zo_pointmap_len(map)` values).
//
// # Safety
// `map` must be a live handle and `out` must hold `len` values.
enum ZoStatus zo_pointmap_data(const struct ZoPointMap *map, uint32_t *out, size_t len);

// # Safety
// `map` must be null or a handle not freed before.
void zo_pointmap_free(struct ZoPointMap *map);

// Square refinement from 20 to 120 in steps of 1 on all vertices.
struct ZoRefineConfig zo_refine_config_default(void);

// Refines `init` by iterative spectral upsampling. Either output may be null
// when not wanted.
//
// # Safety
// Handles and `config` must be live; non-null outputs must be valid.
enum ZoStatus zo_zoomout(const struct ZoFunctionalMap *init,
                         const struct ZoMesh *mesh_m,
                         const struct ZoBasis *basis_m,
                         const struct ZoMesh *mesh_n,
                         const struct ZoBasis *basis_n,
                         const struct ZoRefineConfig *config,
                         struct ZoFunctionalMap **out_fmap,
                         struct ZoPointMap **out_map);

// Fixed-size ICP refinement of a square map. Either output may be null.
//
// # Safety
// Handles must be live; non-null outputs must be valid.
enum ZoStatus zo_icp(const struct ZoFunctionalMap *init,
                     const struct ZoBasis *basis_m,
                     const struct ZoBasis *basis_n,
                     size_t iterations,
                     bool approximate_nn,
                     struct ZoFunctionalMap **out_fmap,
                     struct ZoPointMap **out_map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZOOMOUT_H */
