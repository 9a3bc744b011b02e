/* C interface to the steer driving pipeline. All functions return a
 * steer_status; on failure steer_last_error() describes the problem for
 * the calling thread. Strings returned through char** are owned by the
 * caller and released with steer_string_free. */
#ifndef STEER_STEER_H
#define STEER_STEER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define STEER_API __attribute__((visibility("default")))
#else
#define STEER_API
#endif

typedef enum steer_status {
  STEER_OK = 0,
  STEER_E_INVALID_ARGUMENT = 1,
  STEER_E_SHAPE_MISMATCH = 2,
  STEER_E_IO = 3,
  STEER_E_MISSING_INPUT = 4,
  STEER_E_UNTRAINABLE = 5,
  STEER_E_DIVERGENCE = 6,
  STEER_E_CONFLICT = 7,
  STEER_E_NOT_FOUND = 8,
  STEER_E_BAD_STATE = 9,
  STEER_E_INTERNAL = 100
} steer_status;

STEER_API const char* steer_version(void);
STEER_API const char* steer_status_name(steer_status s);
/* Message of the last failed call on this thread ("" if none). */
STEER_API const char* steer_last_error(void);
STEER_API void steer_string_free(char* s);

/* ---- pipeline ----------------------------------------------------------- */

typedef struct steer_pipeline steer_pipeline;

/* config_path may be NULL for built-in defaults. overrides_json, if not
 * NULL, is a JSON array of "key.path=value" strings applied in order. */
STEER_API steer_status steer_pipeline_open(const char* config_path, const char* overrides_json,
                                           steer_pipeline** out);
STEER_API void steer_pipeline_close(steer_pipeline* p);
/* Effective configuration and its hash as a JSON object. */
STEER_API steer_status steer_pipeline_config(const steer_pipeline* p, char** out_json);

typedef void (*steer_progress_fn)(void* user, const char* json_line);
STEER_API steer_status steer_pipeline_set_progress(steer_pipeline* p, steer_progress_fn fn, void* user);

/* Runs one stage: "demo-record", "label-record", "train-policy",
 * "train-reward", "train-safety", "rl-train", "evaluate" or "report".
 * args_json holds stage arguments (may be NULL); the result manifest is
 * returned in out_json when it is not NULL. */
STEER_API steer_status steer_pipeline_run(steer_pipeline* p, const char* stage, const char* args_json,
                                          char** out_json);

/* ---- session service ---------------------------------------------------- */

typedef struct steer_server steer_server;

/* options_json: {"host", "port", "export_dir", "handle_signals",
 * "train": {rl-train args}}. "train" needs a pipeline and streams the run
 * to spectate sessions. */
STEER_API steer_status steer_server_start(steer_pipeline* p, const char* options_json, steer_server** out);
STEER_API uint16_t steer_server_port(const steer_server* s);
/* Blocks until the server stops (signal or steer_server_stop). */
STEER_API steer_status steer_server_wait(steer_server* s);
STEER_API void steer_server_stop(steer_server* s);
STEER_API void steer_server_destroy(steer_server* s);

/* ---- simulator ---------------------------------------------------------- */

typedef struct steer_world steer_world;

typedef struct steer_car_state {
  double s, d, psi, speed;
  int lane; /* 1-based, 0 when off the road */
  int on_road;
  int aligned;
} steer_car_state;

typedef struct steer_step_events {
  int off_road_entry;
  int on_road_entry;
  int restart_stuck;
  int restart_wrong_direction;
} steer_step_events;

enum { STEER_ACTION_NONE = 0, STEER_ACTION_LEFT = 1, STEER_ACTION_RIGHT = 2 };

/* track: bundled name or path to a track file. */
STEER_API steer_status steer_world_create(const char* track, steer_world** out);
STEER_API void steer_world_destroy(steer_world* w);
STEER_API steer_status steer_world_step(steer_world* w, int action, steer_step_events* events);
STEER_API steer_status steer_world_state(const steer_world* w, steer_car_state* out);
/* Row-major interleaved RGB, 3 * height * width bytes. */
STEER_API steer_status steer_world_render(const steer_world* w, size_t height, size_t width, uint8_t* rgb,
                                          size_t len);

/* ---- networks ----------------------------------------------------------- */

typedef struct steer_net steer_net;

STEER_API steer_status steer_net_load(const char* path, steer_net** out);
STEER_API void steer_net_destroy(steer_net* n);
STEER_API steer_status steer_net_input_shape(const steer_net* n, size_t* channels, size_t* height, size_t* width);
STEER_API size_t steer_net_output_size(const steer_net* n);
/* obs: u8 planar observation (channels * height * width). */
STEER_API steer_status steer_net_forward(steer_net* n, const uint8_t* obs, size_t len, float* out, size_t out_len);

#ifdef __cplusplus
}
#endif

#endif
