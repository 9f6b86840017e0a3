#include <set>

#include "carpet/pipeline.hpp"

namespace carpet {

using nlohmann::json;

std::string_view to_string(SecondMethod m) {
  switch (m) {
    case SecondMethod::StyleSwap: return "StyleSwap";
    case SecondMethod::Gatys: return "Gatys";
    case SecondMethod::ClipStyler: return "ClipStyler";
  }
  return "?";
}

std::string_view to_string(ColoringMethod m) {
  switch (m) {
    case ColoringMethod::ClipStyler: return "ClipStyler";
    case ColoringMethod::Cams: return "Cams";
    case ColoringMethod::Gatys: return "Gatys";
  }
  return "?";
}

namespace {

std::string join_fields(const std::vector<FieldError>& fields) {
  std::string s = "invalid config";
  for (const auto& f : fields) s += "; " + f.field + ": " + f.message;
  return s;
}

std::optional<SecondMethod> parse_second(const std::string& s) {
  if (s == "StyleSwap" || s == "Swap-Swap") return SecondMethod::StyleSwap;
  if (s == "Gatys" || s == "Swap-Gatys") return SecondMethod::Gatys;
  if (s == "ClipStyler" || s == "Swap-Clip") return SecondMethod::ClipStyler;
  return std::nullopt;
}

std::optional<ColoringMethod> parse_coloring(const std::string& s) {
  if (s == "ClipStyler") return ColoringMethod::ClipStyler;
  if (s == "Cams") return ColoringMethod::Cams;
  if (s == "Gatys") return ColoringMethod::Gatys;
  return std::nullopt;
}

/// Reads typed members of one JSON object, recording problems instead of
/// throwing so that every bad field is reported at once.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<FieldError>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {}

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void fail(const std::string& key, const std::string& message) const { errors_.push_back({field(key), message}); }

  bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

  const json& at(const std::string& key) const { return obj_.at(key); }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, _] : obj_.items()) {
      if (!known.count(k)) fail(k, "unknown field");
    }
  }

  void get(const std::string& key, int& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer()) return fail(key, "must be an integer");
    const auto x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) return fail(key, "out of range");
    out = static_cast<int>(x);
  }

  void get(const std::string& key, double& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number()) return fail(key, "must be a number");
    out = v.get<double>();
  }

  void get(const std::string& key, std::uint64_t& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      return fail(key, "must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void get(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_string()) return fail(key, "must be a string");
    out = v.get<std::string>();
  }

  void get(const std::string& key, std::vector<std::string>& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) return fail(key, "must be an array of layer names");
    std::vector<std::string> layers;
    for (const auto& e : v) {
      if (!e.is_string()) return fail(key, "must be an array of layer names");
      layers.push_back(e.get<std::string>());
    }
    out = std::move(layers);
  }

  std::vector<FieldError>& errors() const { return errors_; }

  std::optional<Reader> object(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    if (!obj_.at(key).is_object()) {
      fail(key, "must be an object");
      return std::nullopt;
    }
    return Reader(obj_.at(key), field(key), errors_);
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<FieldError>& errors_;
};

void read_source(const Reader& r, const std::string& key, StyleSource& out) {
  if (!r.has(key)) return r.fail(key, "is required");
  const auto& v = r.at(key);
  if (v.is_string()) {
    out = StyleSource::image(v.get<std::string>());
    return;
  }
  if (!v.is_object()) return r.fail(key, "must be an asset reference or an object with \"asset\" or \"text\"");
  const Reader inner(v, r.field(key), r.errors());
  inner.allow({"asset", "text", "contentText"});
  if (inner.has("asset") == inner.has("text")) return r.fail(key, "needs exactly one of \"asset\" or \"text\"");
  if (inner.has("asset")) {
    std::string ref;
    inner.get("asset", ref);
    out = StyleSource::image(ref);
    if (inner.has("contentText")) inner.fail("contentText", "only applies to text prompts");
    return;
  }
  StyleText text;
  inner.get("text", text.style);
  inner.get("contentText", text.content);
  out = StyleSource{{}, text};
}

void read_swap(const Reader& r, SwapConfig& c) {
  r.allow({"patchSize", "stride", "layer"});
  r.get("patchSize", c.patch_size);
  r.get("stride", c.stride);
  r.get("layer", c.layer);
}

void read_gatys(const Reader& r, GatysConfig& c) {
  r.allow({"iterations", "styleWeight", "stepSize", "contentLayers", "styleLayers"});
  r.get("iterations", c.iterations);
  r.get("styleWeight", c.style_weight);
  r.get("stepSize", c.step_size);
  r.get("contentLayers", c.content_layers);
  r.get("styleLayers", c.style_layers);
}

void read_cams(const Reader& r, CamsConfig& c) {
  r.allow({"paletteSize", "iterations", "styleWeight", "stepSize", "maskSigma", "mergeThreshold", "refreshEvery",
           "contentLayers", "styleLayers"});
  r.get("paletteSize", c.palette_size);
  r.get("iterations", c.iterations);
  r.get("styleWeight", c.style_weight);
  r.get("stepSize", c.step_size);
  r.get("maskSigma", c.mask_sigma);
  r.get("mergeThreshold", c.merge_threshold);
  r.get("refreshEvery", c.refresh_every);
  r.get("contentLayers", c.content_layers);
  r.get("styleLayers", c.style_layers);
}

void read_clip(const Reader& r, ClipStylerConfig& c) {
  r.allow({"iterations", "cropCount", "cropSize", "threshold", "thresholdFactor", "warpMagnitude",
           "directionalWeight", "patchWeight", "contentWeight", "contentLayers", "stepSize"});
  r.get("iterations", c.iterations);
  r.get("cropCount", c.crop_count);
  r.get("cropSize", c.crop_size);
  if (r.has("threshold") && !r.at("threshold").is_null()) {
    double t = 0;
    r.get("threshold", t);
    c.threshold = t;
  }
  r.get("thresholdFactor", c.threshold_factor);
  r.get("warpMagnitude", c.warp_magnitude);
  r.get("directionalWeight", c.directional_weight);
  r.get("patchWeight", c.patch_weight);
  r.get("contentWeight", c.content_weight);
  r.get("contentLayers", c.content_layers);
  r.get("stepSize", c.step_size);
}

json layers_json(const std::vector<std::string>& layers) { return json(layers); }

json source_json(const StyleSource& s) {
  if (!s.is_text()) return json{{"asset", s.asset}};
  return json{{"text", s.text->style}, {"contentText", s.text->content}};
}

void check_layers(std::vector<FieldError>& errors, const std::string& field, const std::vector<std::string>& layers) {
  for (const auto& l : layers) {
    if (!Encoder<float>::is_tap(l)) errors.push_back({field, "unknown layer " + l});
  }
}

void check_prompt(std::vector<FieldError>& errors, const std::string& field, const std::string& prompt) {
  try {
    validate_prompt(prompt);
  } catch (const Error& e) {
    errors.push_back({field, e.code() == ErrorCode::EmptyText ? "prompt is empty"
                                                              : "prompt exceeds " + std::to_string(kMaxTextTokens) + " tokens"});
  }
}

void check_source(std::vector<FieldError>& errors, const std::string& field, const StyleSource& s, bool want_text,
                  std::string_view method_field, std::string_view method) {
  if (want_text && !s.is_text()) {
    errors.push_back({field, "must be a text prompt when " + std::string(method_field) + " is " + std::string(method)});
  } else if (!want_text && s.is_text()) {
    errors.push_back({field, "must be an image asset when " + std::string(method_field) + " is " + std::string(method)});
  } else if (s.is_text()) {
    check_prompt(errors, field + ".text", s.text->style);
    check_prompt(errors, field + ".contentText", s.text->content);
  } else if (s.asset.empty()) {
    errors.push_back({field, "is required"});
  }
}

}  // namespace

std::vector<std::string> PipelineConfig::asset_refs() const {
  std::vector<std::string> refs = {content, style1};
  if (!style2.is_text()) refs.push_back(style2.asset);
  if (!color_source.is_text()) refs.push_back(color_source.asset);
  return refs;
}

ValidationError::ValidationError(std::vector<FieldError> fields)
    : Error(ErrorCode::InvalidConfig, join_fields(fields)), fields_(std::move(fields)) {}

StageFailure::StageFailure(std::string stage, ErrorCode cause, const std::string& message)
    : Error(ErrorCode::StageFailure, stage + ": " + message), stage_(std::move(stage)), cause_(cause) {}

std::vector<FieldError> validate_pipeline_config(const PipelineConfig& cfg) {
  std::vector<FieldError> e;
  if (cfg.content.empty()) e.push_back({"content", "is required"});
  if (cfg.style1.empty()) e.push_back({"style1", "is required"});
  check_source(e, "style2", cfg.style2, cfg.second_method == SecondMethod::ClipStyler, "secondMethod",
               to_string(cfg.second_method));
  check_source(e, "colorSource", cfg.color_source, cfg.coloring_method == ColoringMethod::ClipStyler,
               "coloringMethod", to_string(cfg.coloring_method));

  const auto& sw = cfg.swap;
  if (sw.patch_size < 1) e.push_back({"styleSwap.patchSize", "must be >= 1"});
  if (sw.stride < 1) e.push_back({"styleSwap.stride", "must be >= 1"});
  if (sw.stride > sw.patch_size) e.push_back({"styleSwap.stride", "must not exceed styleSwap.patchSize"});
  if (!Encoder<float>::is_tap(sw.layer)) e.push_back({"styleSwap.layer", "unknown layer " + sw.layer});

  const auto& g = cfg.gatys;
  if (g.iterations < 0) e.push_back({"gatys.iterations", "must be >= 0"});
  if (!(g.style_weight >= 0)) e.push_back({"gatys.styleWeight", "must be >= 0"});
  if (!(g.step_size > 0)) e.push_back({"gatys.stepSize", "must be > 0"});
  check_layers(e, "gatys.contentLayers", g.content_layers);
  check_layers(e, "gatys.styleLayers", g.style_layers);
  if (g.content_layers.empty() && g.style_layers.empty()) e.push_back({"gatys.styleLayers", "needs at least one layer"});

  const auto& c = cfg.cams;
  if (c.palette_size < 1 || c.palette_size > kMaxPaletteSize) {
    e.push_back({"cams.paletteSize", "must be in [1, " + std::to_string(kMaxPaletteSize) + "]"});
  }
  if (c.iterations < 0) e.push_back({"cams.iterations", "must be >= 0"});
  if (!(c.style_weight >= 0)) e.push_back({"cams.styleWeight", "must be >= 0"});
  if (!(c.step_size > 0)) e.push_back({"cams.stepSize", "must be > 0"});
  if (!(c.mask_sigma > 0)) e.push_back({"cams.maskSigma", "must be > 0"});
  if (!(c.merge_threshold >= 0)) e.push_back({"cams.mergeThreshold", "must be >= 0"});
  if (c.refresh_every < 1) e.push_back({"cams.refreshEvery", "must be >= 1"});
  check_layers(e, "cams.contentLayers", c.content_layers);
  check_layers(e, "cams.styleLayers", c.style_layers);

  const auto& k = cfg.clip;
  if (k.iterations < 0) e.push_back({"clipStyler.iterations", "must be >= 0"});
  if (k.crop_count < 1) e.push_back({"clipStyler.cropCount", "must be >= 1"});
  if (k.crop_size < 0) e.push_back({"clipStyler.cropSize", "must be >= 0"});
  if (!(k.threshold_factor >= 0)) e.push_back({"clipStyler.thresholdFactor", "must be >= 0"});
  if (k.threshold && !std::isfinite(*k.threshold)) e.push_back({"clipStyler.threshold", "must be finite"});
  if (!(k.warp_magnitude >= 0 && k.warp_magnitude < 1)) e.push_back({"clipStyler.warpMagnitude", "must be in [0, 1)"});
  if (!(k.directional_weight >= 0)) e.push_back({"clipStyler.directionalWeight", "must be >= 0"});
  if (!(k.patch_weight >= 0)) e.push_back({"clipStyler.patchWeight", "must be >= 0"});
  if (!(k.content_weight >= 0)) e.push_back({"clipStyler.contentWeight", "must be >= 0"});
  if (!(k.step_size > 0)) e.push_back({"clipStyler.stepSize", "must be > 0"});
  check_layers(e, "clipStyler.contentLayers", k.content_layers);

  if (cfg.resolution) {
    const auto [h, w] = *cfg.resolution;
    if (h < kMinStageSide || w < kMinStageSide) {
      e.push_back({"resolution", "sides must be >= " + std::to_string(kMinStageSide)});
    } else if (h > 4096 || w > 4096) {
      e.push_back({"resolution", "sides must be <= 4096"});
    } else if (k.crop_size > std::min(h, w)) {
      e.push_back({"clipStyler.cropSize", "exceeds the working resolution"});
    }
  }
  if (cfg.preview_every < 0) e.push_back({"previewEvery", "must be >= 0"});
  return e;
}

PipelineConfig parse_pipeline_config(const json& doc) {
  std::vector<FieldError> errors;
  PipelineConfig cfg;
  if (!doc.is_object()) throw ValidationError(std::vector<FieldError>{{"", "config must be a JSON object"}});
  const Reader r(doc, "", errors);
  r.allow({"content", "style1", "style2", "colorSource", "secondMethod", "coloringMethod", "styleSwap", "gatys",
           "cams", "clipStyler", "resolution", "seed", "previewEvery"});
  if (!r.has("content")) r.fail("content", "is required");
  if (!r.has("style1")) r.fail("style1", "is required");
  r.get("content", cfg.content);
  r.get("style1", cfg.style1);

  std::string method;
  if (r.has("secondMethod")) {
    r.get("secondMethod", method);
    if (const auto m = parse_second(method)) {
      cfg.second_method = *m;
    } else if (!method.empty()) {
      r.fail("secondMethod", "must be one of StyleSwap, Gatys, ClipStyler (or Swap-Swap, Swap-Gatys, Swap-Clip)");
    }
  }
  method.clear();
  if (r.has("coloringMethod")) {
    r.get("coloringMethod", method);
    if (const auto m = parse_coloring(method)) {
      cfg.coloring_method = *m;
    } else if (!method.empty()) {
      r.fail("coloringMethod", "must be one of ClipStyler, Cams, Gatys");
    }
  }
  const std::size_t before_sources = errors.size();
  read_source(r, "style2", cfg.style2);
  read_source(r, "colorSource", cfg.color_source);
  const bool sources_ok = errors.size() == before_sources;

  if (auto o = r.object("styleSwap")) read_swap(*o, cfg.swap);
  if (auto o = r.object("gatys")) read_gatys(*o, cfg.gatys);
  if (auto o = r.object("cams")) read_cams(*o, cfg.cams);
  if (auto o = r.object("clipStyler")) read_clip(*o, cfg.clip);

  if (r.has("resolution")) {
    const auto& v = r.at("resolution");
    if (v.is_number_integer()) {
      const int side = v.get<int>();
      cfg.resolution = std::make_pair(side, side);
    } else if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
      cfg.resolution = std::make_pair(v[0].get<int>(), v[1].get<int>());
    } else {
      r.fail("resolution", "must be an integer or [height, width]");
    }
  }
  r.get("seed", cfg.seed);
  r.get("previewEvery", cfg.preview_every);

  for (auto& f : validate_pipeline_config(cfg)) {
    const bool source_field = f.field.rfind("style2", 0) == 0 || f.field.rfind("colorSource", 0) == 0;
    if (source_field && !sources_ok) continue;  // already reported while reading
    const bool dup = std::any_of(errors.begin(), errors.end(), [&](const FieldError& x) { return x.field == f.field; });
    if (!dup) errors.push_back(std::move(f));
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return cfg;
}

json to_json(const PipelineConfig& cfg) {
  json clip = {{"iterations", cfg.clip.iterations},
               {"cropCount", cfg.clip.crop_count},
               {"cropSize", cfg.clip.crop_size},
               {"threshold", cfg.clip.threshold ? json(*cfg.clip.threshold) : json(nullptr)},
               {"thresholdFactor", cfg.clip.threshold_factor},
               {"warpMagnitude", cfg.clip.warp_magnitude},
               {"directionalWeight", cfg.clip.directional_weight},
               {"patchWeight", cfg.clip.patch_weight},
               {"contentWeight", cfg.clip.content_weight},
               {"contentLayers", layers_json(cfg.clip.content_layers)},
               {"stepSize", cfg.clip.step_size}};
  json doc = {
      {"content", cfg.content},
      {"style1", cfg.style1},
      {"style2", source_json(cfg.style2)},
      {"colorSource", source_json(cfg.color_source)},
      {"secondMethod", to_string(cfg.second_method)},
      {"coloringMethod", to_string(cfg.coloring_method)},
      {"styleSwap", {{"patchSize", cfg.swap.patch_size}, {"stride", cfg.swap.stride}, {"layer", cfg.swap.layer}}},
      {"gatys",
       {{"iterations", cfg.gatys.iterations},
        {"styleWeight", cfg.gatys.style_weight},
        {"stepSize", cfg.gatys.step_size},
        {"contentLayers", layers_json(cfg.gatys.content_layers)},
        {"styleLayers", layers_json(cfg.gatys.style_layers)}}},
      {"cams",
       {{"paletteSize", cfg.cams.palette_size},
        {"iterations", cfg.cams.iterations},
        {"styleWeight", cfg.cams.style_weight},
        {"stepSize", cfg.cams.step_size},
        {"maskSigma", cfg.cams.mask_sigma},
        {"mergeThreshold", cfg.cams.merge_threshold},
        {"refreshEvery", cfg.cams.refresh_every},
        {"contentLayers", layers_json(cfg.cams.content_layers)},
        {"styleLayers", layers_json(cfg.cams.style_layers)}}},
      {"clipStyler", clip},
      {"seed", cfg.seed},
      {"previewEvery", cfg.preview_every},
  };
  if (cfg.resolution) doc["resolution"] = {cfg.resolution->first, cfg.resolution->second};
  return doc;
}

json pipeline_defaults() {
  json doc = to_json(PipelineConfig{});
  doc.erase("content");
  doc.erase("style1");
  doc.erase("style2");
  doc.erase("colorSource");
  return doc;
}

}  // namespace carpet
