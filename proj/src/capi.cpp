#include "polarbev.h"

#include <cstdlib>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pbev/errors.hpp"
#include "pbev/harness.hpp"

struct pbev_rig {
  std::vector<pbev::CameraModel> cameras;
};

struct pbev_scene {
  pbev::SyntheticScene scene;
};

struct pbev_map {
  pbev::FeatureMap map;
};

struct pbev_result {
  pbev::PipelineResult result;
  pbev_map bev;
  pbev_map heatmap;
};

namespace {

thread_local std::string t_error;

int fail(int code, const char* what) {
  t_error = what;
  return code;
}

template <typename Fn>
int guard(Fn&& fn) {
  try {
    fn();
    t_error.clear();
    return PBEV_OK;
  } catch (const pbev::ConfigError& e) {
    t_error = e.what();
    return PBEV_ERR_CONFIG;
  } catch (const pbev::DomainError& e) {
    t_error = e.what();
    return PBEV_ERR_DOMAIN;
  } catch (const std::exception& e) {
    t_error = e.what();
    return PBEV_ERR_INTERNAL;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

pbev::PolarGridSpec to_polar(const pbev_polar_spec& s) {
  return {s.n_theta, s.n_r, s.r_min, s.r_max};
}

pbev::CartGridSpec to_cart(const pbev_cart_spec& s) {
  return {s.n_x, s.n_y, s.x_min, s.x_max, s.y_min, s.y_max};
}

pbev::BoxCart to_box_cart(const pbev_box_cart& b) {
  return {b.x, b.y, b.z, b.w, b.l, b.h, b.yaw, b.vx, b.vy, b.class_id};
}

pbev_box_cart from_box_cart(const pbev::BoxCart& b) {
  return {b.x, b.y, b.z, b.w, b.l, b.h, b.yaw, b.vx, b.vy, b.class_id};
}

pbev::BoxPolar to_box_polar(const pbev_box_polar& b) {
  return {b.theta, b.r, b.z, b.w, b.l, b.h, b.yaw, b.v_theta, b.v_r, b.class_id};
}

pbev_box_polar from_box_polar(const pbev::BoxPolar& b) {
  return {b.theta, b.r, b.z, b.w, b.l, b.h, b.yaw, b.v_theta, b.v_r, b.class_id};
}

void fill_bands(const pbev::DensityProfile& profile, pbev_density_band* out) {
  for (std::size_t i = 0; i < profile.size(); ++i)
    out[i] = {profile[i].d_lo, profile[i].d_hi, profile[i].cells, profile[i].clipped_area,
              profile[i].density};
}

}  // namespace

extern "C" {

const char* pbev_version(void) { return "0.1.0"; }

const char* pbev_last_error(void) { return t_error.c_str(); }

void pbev_string_free(char* s) { std::free(s); }

int pbev_default_polar_spec(pbev_polar_spec* out) {
  if (out == nullptr) return fail(PBEV_ERR_INVALID, "null output pointer");
  const pbev::PolarGridSpec spec;
  *out = {spec.n_theta, spec.n_r, spec.r_min, spec.r_max};
  return PBEV_OK;
}

int pbev_default_cart_spec(pbev_cart_spec* out) {
  if (out == nullptr) return fail(PBEV_ERR_INVALID, "null output pointer");
  const pbev::CartGridSpec spec;
  *out = {spec.n_x, spec.n_y, spec.x_min, spec.x_max, spec.y_min, spec.y_max};
  return PBEV_OK;
}

int pbev_encode_polar(const pbev_box_cart* in, pbev_box_polar* out) {
  if (in == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null box pointer");
  return guard([&] { *out = from_box_polar(pbev::encode_polar(to_box_cart(*in))); });
}

int pbev_decode_polar(const pbev_box_polar* in, pbev_box_cart* out) {
  if (in == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null box pointer");
  return guard([&] { *out = from_box_cart(pbev::decode_polar(to_box_polar(*in))); });
}

int pbev_azimuth_rotate_cart(const pbev_box_cart* in, double delta, pbev_box_cart* out) {
  if (in == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null box pointer");
  return guard([&] { *out = from_box_cart(pbev::azimuth_rotate_cart(to_box_cart(*in), delta)); });
}

int pbev_rig_default(pbev_rig** out) {
  if (out == nullptr) return fail(PBEV_ERR_INVALID, "null output pointer");
  return guard([&] { *out = new pbev_rig{pbev::default_rig()}; });
}

int pbev_rig_from_json(const char* json_text, pbev_rig** out) {
  if (json_text == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] { *out = new pbev_rig{pbev::rig_from_json(json_text)}; });
}

int pbev_rig_to_json(const pbev_rig* rig, char** json_out) {
  if (rig == nullptr || json_out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] { *json_out = copy_string(pbev::rig_to_json(rig->cameras)); });
}

int pbev_rig_camera_count(const pbev_rig* rig) {
  return rig == nullptr ? -1 : static_cast<int>(rig->cameras.size());
}

int pbev_rig_revolve(const pbev_rig* rig, int32_t k_slots, pbev_rig** out) {
  if (rig == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] { *out = new pbev_rig{pbev::revolve_rig(rig->cameras, k_slots)}; });
}

void pbev_rig_free(pbev_rig* rig) { delete rig; }

int pbev_scene_default(uint64_t seed, int32_t n_objects, pbev_scene** out) {
  if (out == nullptr) return fail(PBEV_ERR_INVALID, "null output pointer");
  return guard([&] { *out = new pbev_scene{pbev::default_scene(seed, n_objects)}; });
}

int pbev_scene_from_json(const char* json_text, pbev_scene** out) {
  if (json_text == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] { *out = new pbev_scene{pbev::scene_from_json(json_text)}; });
}

int pbev_scene_to_json(const pbev_scene* scene, char** json_out) {
  if (scene == nullptr || json_out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] { *json_out = copy_string(pbev::scene_to_json(scene->scene)); });
}

int pbev_scene_set_seed(pbev_scene* scene, uint64_t seed) {
  if (scene == nullptr) return fail(PBEV_ERR_INVALID, "null scene");
  scene->scene.seed = seed;
  return PBEV_OK;
}

void pbev_scene_free(pbev_scene* scene) { delete scene; }

int pbev_grid_density_polar(const pbev_polar_spec* spec, const double* edges, int32_t n_edges,
                            pbev_density_band* bands_out) {
  if (spec == nullptr || edges == nullptr || bands_out == nullptr || n_edges < 2)
    return fail(PBEV_ERR_INVALID, "null argument or fewer than two edges");
  return guard([&] {
    fill_bands(pbev::grid_density(to_polar(*spec), std::span<const double>(edges, n_edges)), bands_out);
  });
}

int pbev_grid_density_cart(const pbev_cart_spec* spec, const double* edges, int32_t n_edges,
                           pbev_density_band* bands_out) {
  if (spec == nullptr || edges == nullptr || bands_out == nullptr || n_edges < 2)
    return fail(PBEV_ERR_INVALID, "null argument or fewer than two edges");
  return guard([&] {
    fill_bands(pbev::grid_density(to_cart(*spec), std::span<const double>(edges, n_edges)), bands_out);
  });
}

int pbev_pipeline_run(const pbev_scene* scene, const pbev_polar_spec* spec,
                      const pbev_pipeline_options* options, pbev_result** out) {
  if (scene == nullptr || spec == nullptr || out == nullptr)
    return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] {
    pbev::PipelineOptions opt;
    if (options != nullptr) {
      opt.frames = options->frames;
      opt.threads = options->threads;
      if (options->fusion == PBEV_FUSION_IDENTITY)
        opt.fusion = pbev::FusionMode::kIdentity;
      else if (options->fusion == PBEV_FUSION_AVERAGE)
        opt.fusion = pbev::FusionMode::kAverage;
      else
        throw pbev::ConfigError("unknown fusion mode");
      if (options->history_capacity < 1) throw pbev::ConfigError("history capacity must be positive");
      opt.history_capacity = static_cast<std::size_t>(options->history_capacity);
      opt.oor_policy = options->clamp_out_of_range != 0 ? pbev::OutOfRangePolicy::kClamp
                                                        : pbev::OutOfRangePolicy::kZero;
      opt.use_sae = options->use_sae != 0;
      opt.sae_logit = options->sae_logit;
      if (options->index_cache_path != nullptr) opt.index_cache_path = options->index_cache_path;
    }
    auto* r = new pbev_result;
    try {
      r->result = pbev::run_pipeline(scene->scene, to_polar(*spec), opt);
    } catch (...) {
      delete r;
      throw;
    }
    r->bev.map = std::move(r->result.bev);
    r->heatmap.map = std::move(r->result.heatmap.data);
    *out = r;
  });
}

int pbev_result_bev(const pbev_result* result, const pbev_map** out) {
  if (result == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  *out = &result->bev;
  return PBEV_OK;
}

int pbev_result_heatmap(const pbev_result* result, const pbev_map** out) {
  if (result == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  *out = &result->heatmap;
  return PBEV_OK;
}

int pbev_result_targets_jsonl(const pbev_result* result, char** jsonl_out) {
  if (result == nullptr || jsonl_out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] {
    std::vector<pbev::TaggedBox> tagged;
    tagged.reserve(result->result.targets.size());
    for (const pbev::BoxPolar& b : result->result.targets) tagged.emplace_back(b);
    *jsonl_out = copy_string(pbev::boxes_to_jsonl(tagged));
  });
}

int pbev_result_frame_count(const pbev_result* result) {
  return result == nullptr ? -1 : static_cast<int>(result->result.frames.size());
}

int pbev_result_frame_stats(const pbev_result* result, int32_t frame, pbev_frame_stats* out) {
  if (result == nullptr || out == nullptr) return fail(PBEV_ERR_INVALID, "null argument");
  if (frame < 0 || frame >= static_cast<int32_t>(result->result.frames.size()))
    return fail(PBEV_ERR_INVALID, "frame index out of range");
  const pbev::FrameStats& s = result->result.frames[static_cast<std::size_t>(frame)];
  *out = {s.frame, s.assigned_nodes, s.dropped_nodes, s.raw_mass, s.fused_mass};
  return PBEV_OK;
}

int pbev_result_unencodable(const pbev_result* result) {
  return result == nullptr ? -1 : result->result.unencodable_boxes;
}

void pbev_result_free(pbev_result* result) { delete result; }

int pbev_map_shape(const pbev_map* map, int32_t* channels, int32_t* rows, int32_t* cols) {
  if (map == nullptr || channels == nullptr || rows == nullptr || cols == nullptr)
    return fail(PBEV_ERR_INVALID, "null argument");
  *channels = map->map.channels();
  *rows = map->map.rows();
  *cols = map->map.cols();
  return PBEV_OK;
}

const double* pbev_map_data(const pbev_map* map) {
  return map == nullptr ? nullptr : map->map.values().data();
}

int pbev_equivariance_report(const pbev_scene* scene, const pbev_polar_spec* polar,
                             const pbev_cart_spec* cart, double delta, int32_t threads,
                             pbev_equivariance_row* out) {
  if (scene == nullptr || polar == nullptr || cart == nullptr || out == nullptr)
    return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] {
    const pbev::EquivarianceRow row =
        pbev::equivariance_report(scene->scene, to_polar(*polar), to_cart(*cart), delta, threads);
    *out = {row.delta,      row.k_bins,         row.on_lattice ? 1 : 0, row.degenerate ? 1 : 0,
            row.polar_residual, row.cart_residual};
  });
}

int pbev_revolve_report(const pbev_scene* scene, const pbev_polar_spec* polar,
                        const pbev_cart_spec* cart, int32_t k_slots, int32_t threads,
                        pbev_revolve_row* out) {
  if (scene == nullptr || polar == nullptr || cart == nullptr || out == nullptr)
    return fail(PBEV_ERR_INVALID, "null argument");
  return guard([&] {
    const pbev::RevolveRow row =
        pbev::revolve_report(scene->scene, to_polar(*polar), to_cart(*cart), k_slots, threads);
    *out = {row.k_slots,        row.n_view,         row.angle, row.on_lattice ? 1 : 0,
            row.polar_shift_bins, row.polar_residual, row.cart_residual};
  });
}

}  // extern "C"
