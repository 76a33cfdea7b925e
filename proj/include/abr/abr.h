/* C interface to the artifact-based rendering library.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every call returns an abr_status; on failure abr_last_error() holds a
 * message for the calling thread. Strings and buffers returned through out
 * parameters are owned by the caller and released with abr_string_free or
 * abr_buffer_free. JSON documents use the same schemas as the HTTP service.
 */
#ifndef ABR_ABR_H
#define ABR_ABR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ABR_API __declspec(dllexport)
#else
#define ABR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum abr_status {
  ABR_OK = 0,
  ABR_INVALID_ARGUMENT = 1,
  ABR_NOT_FOUND = 2,
  ABR_PARSE = 3,
  ABR_VALIDATION = 4,
  ABR_INTEGRITY = 5,
  ABR_IO = 6,
  ABR_INTERNAL = 7
} abr_status;

typedef struct abr_image_t* abr_image;
typedef struct abr_colormap_t* abr_colormap;
typedef struct abr_mesh_t* abr_mesh;
typedef struct abr_scene_t* abr_scene;
typedef struct abr_render_t* abr_render;
typedef struct abr_library_t* abr_library;
typedef struct abr_server_t* abr_server;

typedef struct abr_buffer {
  uint8_t* data;
  size_t size;
} abr_buffer;

ABR_API const char* abr_version(void);
/* Message of the last failed call on this thread; "" after a success. */
ABR_API const char* abr_last_error(void);
/* "ok", "invalid_argument", "not_found", ... */
ABR_API const char* abr_status_name(int status);
ABR_API void abr_string_free(char* s);
ABR_API void abr_buffer_free(abr_buffer* buf);

/* Images: 8-bit, 1/3/4 interleaved channels, rows top to bottom. */
ABR_API int abr_image_load(const char* path, abr_image* out);
ABR_API int abr_image_decode(const uint8_t* bytes, size_t size, abr_image* out);
ABR_API int abr_image_create(int width, int height, int channels, const uint8_t* pixels, abr_image* out);
ABR_API int abr_image_save_png(abr_image img, const char* path);
ABR_API int abr_image_encode_png(abr_image img, abr_buffer* out);
ABR_API int abr_image_info(abr_image img, int* width, int* height, int* channels);
/* Borrowed pointer, valid until the image is freed. */
ABR_API const uint8_t* abr_image_data(abr_image img);
ABR_API void abr_image_free(abr_image img);

/* Color */
typedef struct abr_lab {
  double L, a, b;
} abr_lab;

typedef struct abr_swatch {
  abr_lab lab;
  uint8_t rgb[3];
  uint64_t population;
  int source_x, source_y; /* -1 when unknown */
} abr_swatch;

/* count <= 0 selects the default of 6. `swatches` holds *n entries on input
   and receives the number written. */
ABR_API int abr_palette(abr_image img, int count, abr_swatch* swatches, int* n);
ABR_API void abr_srgb_to_lab(const uint8_t rgb[3], abr_lab* out);
ABR_API void abr_lab_to_srgb(abr_lab lab, uint8_t rgb[3]);

ABR_API int abr_colormap_create(const char* name, const double* positions, const abr_lab* colors, size_t n,
                                int normalize, abr_colormap* out);
ABR_API int abr_colormap_load(const char* path, abr_colormap* out);
ABR_API int abr_colormap_parse(const char* xml, abr_colormap* out);
ABR_API int abr_colormap_sample(abr_colormap map, double t, abr_lab* out);
ABR_API int abr_colormap_export_xml(abr_colormap map, char** xml);
/* 1024 x 32 RGB strip. */
ABR_API int abr_colormap_strip(abr_colormap map, abr_image* out);
ABR_API void abr_colormap_free(abr_colormap map);

/* Textures */
ABR_API int abr_normal_map(abr_image img, double strength, abr_image* out);
ABR_API int abr_crop(abr_image img, int x, int y, int width, int height, abr_image* out);
ABR_API int abr_tile(abr_image img, int nx, int ny, abr_image* out);

/* Line texture synthesis */
typedef struct abr_synth_params {
  double jump_probability;
  double min_quality; /* INFINITY allows every jump */
  int min_jump_size;
  int output_height;
  uint64_t seed;
} abr_synth_params;

ABR_API void abr_synth_params_default(abr_synth_params* out);
/* loop_start may be NULL. */
ABR_API int abr_synthesize(abr_image src, const abr_synth_params* params, abr_image* out, int* loop_start);

/* Meshes */
ABR_API int abr_mesh_load_obj(const char* path, abr_mesh* out);
ABR_API int abr_mesh_parse_obj(const char* text, abr_mesh* out);
ABR_API int abr_mesh_save_obj(abr_mesh mesh, const char* path);
ABR_API int abr_mesh_to_obj(abr_mesh mesh, char** text);
/* Any out pointer may be NULL; bounds are min xyz then max xyz. */
ABR_API int abr_mesh_info(abr_mesh mesh, size_t* vertices, size_t* triangles, double bounds[6]);
/* quat_wxyz may be NULL. */
ABR_API int abr_mesh_orient(abr_mesh mesh, const double forward[3], const double up[3], abr_mesh* out,
                            double quat_wxyz[4]);
ABR_API int abr_mesh_decimate(abr_mesh mesh, int target_vertices, abr_mesh* out, int* target_reached);
/* Bakes `original` onto `lod`. A LOD without UVs is unwrapped first; the
   unwrapped mesh is returned through lod_out when it is not NULL. */
ABR_API int abr_mesh_bake(abr_mesh original, abr_mesh lod, int resolution, abr_image* normal_map, abr_mesh* lod_out);
/* Builds and saves a glyph asset (manifest plus OBJ/PNG files). summary_json
   may be NULL. */
ABR_API int abr_mesh_build_lod(abr_mesh mesh, const int* targets, size_t n_targets, int resolution, const char* name,
                               const char* manifest_path, char** summary_json);
ABR_API void abr_mesh_free(abr_mesh mesh);

/* Sampling: request and response as for POST /sample; relative data paths
   resolve against the working directory. */
ABR_API int abr_sample_json(const char* request_json, char** response_json);
/* Writes .csv or the binary cache (any other extension) from the request. */
ABR_API int abr_sample_to_file(const char* request_json, const char* path, size_t* count);

/* Scenes. library_root may be NULL. */
ABR_API int abr_scene_load(const char* path, const char* library_root, abr_scene* out);
ABR_API int abr_scene_parse(const char* json, const char* base_dir, const char* library_root, abr_scene* out);
/* Diagnostics as a JSON array; returns ABR_OK even when it is non-empty. */
ABR_API int abr_scene_validate(abr_scene scene, char** diagnostics_json);
ABR_API int abr_scene_serialize(abr_scene scene, char** json);
ABR_API void abr_scene_free(abr_scene scene);

typedef struct abr_render_options {
  int threads; /* 0: hardware concurrency */
  int has_seed;
  uint64_t seed;
  int width; /* 0 keeps the camera's size */
  int height;
} abr_render_options;

/* camera_json may be NULL (scene camera); options may be NULL. Fails with
   ABR_VALIDATION and the diagnostics in abr_last_error() for invalid scenes. */
ABR_API int abr_render_scene(abr_scene scene, const char* camera_json, const abr_render_options* options,
                             abr_render* out);
/* Borrowed RGBA image, valid until the render is freed. */
ABR_API abr_image abr_render_color(abr_render r);
ABR_API int abr_render_save_depth(abr_render r, const char* path);
/* counts holds *n entries on input and receives the layer count. */
ABR_API int abr_render_layer_pixels(abr_render r, size_t* counts, size_t* n);
/* Borrowed width*height layer ids (0 background, k + 1 for layer k). */
ABR_API const uint16_t* abr_render_ids(abr_render r);
ABR_API void abr_render_free(abr_render r);

/* Asset library */
ABR_API int abr_library_open(const char* root, abr_library* out);
ABR_API int abr_library_register(abr_library lib, const char* path, const char* kind, const char* metadata_json,
                                 char** record_json);
ABR_API int abr_library_query(abr_library lib, const char* query_json, char** records_json);
ABR_API int abr_library_rebuild(abr_library lib);
ABR_API void abr_library_free(abr_library lib);

/* HTTP service. port 0 picks a free port; library_root and base_dir may be
   NULL (ABR_LIBRARY_ROOT and the working directory). */
ABR_API int abr_server_start(const char* host, int port, const char* library_root, const char* base_dir, abr_server* out);
ABR_API int abr_server_port(abr_server server);
/* Stops the server and releases the handle. */
ABR_API void abr_server_stop(abr_server server);
/* Blocks serving requests until the process ends. */
ABR_API int abr_server_run(const char* host, int port, const char* library_root, const char* base_dir);

#ifdef __cplusplus
}
#endif

#endif
